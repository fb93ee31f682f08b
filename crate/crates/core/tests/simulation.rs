use udn_core::analytic::{cp_miso_exact, NetworkConfig};
use udn_core::montecarlo::{estimate_cp, estimate_st, FadingSpec, SimSpec};
use udn_core::PathlossModel;

fn cfg(lambda: f64, n: u32) -> NetworkConfig {
    NetworkConfig::new(lambda, 2.0, 0.2, 10.0, n, 0.0).unwrap()
}

#[test]
fn beamforming_matches_exact_coverage() {
    let m = PathlossModel::single_slope(4.0).unwrap();
    let c = cfg(1e-4, 16);
    let est = estimate_cp(&m, &c, &FadingSpec::beamforming(), &SimSpec::new(40_000, 2).unwrap()).unwrap();
    let exact = cp_miso_exact(&m, &c).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.ci_halfwidth, "{est:?} vs {exact}");
}

#[test]
fn rice_coverage_decays_exponentially_at_high_density() {
    let m = PathlossModel::dual_slope(2.5, 4.0, 10.0).unwrap();
    let fading = FadingSpec::rice(1.0, 12).unwrap();
    let sim = SimSpec::new(20_000, 4).unwrap();
    let pts: Vec<(f64, f64)> = [2e-3, 4e-3, 6e-3, 8e-3]
        .iter()
        .map(|l| {
            let e = estimate_cp(&m, &cfg(*l, 1), &fading, &sim).unwrap();
            (*l, e.mean.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(slope < 0.0, "{pts:?}");
}

#[test]
fn throughput_vanishes_at_low_density() {
    let m = PathlossModel::single_slope(4.0).unwrap();
    let p = estimate_st(&m, &cfg(1e-9, 1), &FadingSpec::rayleigh(), &SimSpec::new(200, 0).unwrap()).unwrap();
    assert!(p.st < 1e-9);
}
