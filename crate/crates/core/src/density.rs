//! Feasibility of a coverage requirement and the critical BS density.
//!
//! The critical density `lambda_dagger` maximizes spatial throughput. With a
//! requirement `CP >= eps` the admissible densities form an interval
//! `(0, lambda_eps]` because CP falls with density, so the constrained
//! optimum is `min(lambda_eps, lambda_dagger)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::analytic::{cp_miso_approx, cp_miso_exact, st_from_cp, NetworkConfig};
use crate::error::{Error, Result};
use crate::pathloss::PathlossModel;
use crate::specfun::delta;

/// Which side of the constrained problem is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    UnconstrainedPeak,
    CpBoundary,
}

impl Binding {
    pub fn as_str(&self) -> &'static str {
        match self {
            Binding::UnconstrainedPeak => "unconstrained_peak",
            Binding::CpBoundary => "cp_boundary",
        }
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Binding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained_peak" => Ok(Binding::UnconstrainedPeak),
            "cp_boundary" => Ok(Binding::CpBoundary),
            other => Err(Error::domain(format!("unknown binding '{other}'"))),
        }
    }
}

/// Densities in BS per m^2. All three optional fields are `None` exactly
/// when `feasible` is false.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalDensityResult {
    pub lambda_unconstrained: Option<f64>,
    pub lambda_constrained: Option<f64>,
    pub feasible: bool,
    pub binding: Option<Binding>,
}

impl CriticalDensityResult {
    pub fn infeasible() -> Self {
        Self {
            lambda_unconstrained: None,
            lambda_constrained: None,
            feasible: false,
            binding: None,
        }
    }

    /// `lambda_dagger / lambda_star`.
    pub fn fold(&self) -> Option<f64> {
        Some(self.lambda_unconstrained? / self.lambda_constrained?)
    }
}

/// Whether `CP >= eps` is attainable at some density under the exponential
/// approximation: `delta(tau / N_a, alpha_{N-1}) < 1/eps - 1`.
pub fn feasibility(model: &PathlossModel, cfg: &NetworkConfig) -> Result<bool> {
    cfg.validate()?;
    let eps = cfg.cp_requirement;
    if eps == 0.0 {
        return Ok(true);
    }
    let d = delta(cfg.tau_dagger(), model.outer_exponent())?;
    Ok(d < 1.0 / eps - 1.0)
}

// CP(lambda) = exp(-pi lambda c) / (1 + d) with lambda_dagger = 1 / (pi c).
fn closed_form_result(lambda_dagger: f64, d: f64, eps: f64) -> CriticalDensityResult {
    if eps == 0.0 {
        return CriticalDensityResult {
            lambda_unconstrained: Some(lambda_dagger),
            lambda_constrained: Some(lambda_dagger),
            feasible: true,
            binding: Some(Binding::UnconstrainedPeak),
        };
    }
    let lambda_eps = lambda_dagger * (1.0 / (eps * (1.0 + d))).ln();
    let (lambda_star, binding) = if lambda_eps < lambda_dagger {
        (lambda_eps, Binding::CpBoundary)
    } else {
        (lambda_dagger, Binding::UnconstrainedPeak)
    };
    CriticalDensityResult {
        lambda_unconstrained: Some(lambda_dagger),
        lambda_constrained: Some(lambda_star),
        feasible: true,
        binding: Some(binding),
    }
}

/// Closed-form critical density for single-slope pathloss `x^(-alpha0)`:
/// `lambda_dagger = 1 / (pi delta(tau/N_a, alpha0) dh^2)`.
pub fn critical_density_sspm(alpha0: f64, cfg: &NetworkConfig) -> Result<CriticalDensityResult> {
    let model = PathlossModel::single_slope(alpha0)?;
    cfg.validate()?;
    if !(cfg.delta_h > 0.0) {
        return Err(Error::domain(
            "single-slope critical density diverges without an antenna-height difference",
        ));
    }
    if !feasibility(&model, cfg)? {
        return Ok(CriticalDensityResult::infeasible());
    }
    let d = delta(cfg.tau_dagger(), alpha0)?;
    let lambda_dagger = 1.0 / (PI * d * cfg.delta_h * cfg.delta_h);
    Ok(closed_form_result(lambda_dagger, d, cfg.cp_requirement))
}

/// Closed-form critical density for dual-slope pathloss, from the far-user
/// lower bound: `lambda_dagger = 1 / (pi [r1^2 (1 + delta) + dh^2 delta])`
/// with `delta = delta(tau/N_a, alpha1)`.
pub fn critical_density_dspm(
    alpha0: f64,
    alpha1: f64,
    r1: f64,
    cfg: &NetworkConfig,
) -> Result<CriticalDensityResult> {
    let model = PathlossModel::dual_slope(alpha0, alpha1, r1)?;
    cfg.validate()?;
    if !feasibility(&model, cfg)? {
        return Ok(CriticalDensityResult::infeasible());
    }
    let d = delta(cfg.tau_dagger(), alpha1)?;
    let dh2 = cfg.delta_h * cfg.delta_h;
    let lambda_dagger = 1.0 / (PI * (r1 * r1 * (1.0 + d) + dh2 * d));
    Ok(closed_form_result(lambda_dagger, d, cfg.cp_requirement))
}

const GRID_POINTS: usize = 41;
const GRID_DECADES: f64 = 6.0;
const MAX_GRID_SHIFTS: usize = 4;
/// Golden-section stopping width, relative.
pub const PEAK_REL_TOL: f64 = 5e-3;
const BOUNDARY_REL_TOL: f64 = 1e-6;
const BRACKET_DECADES: i32 = 30;
// Relative slack when judging a grid profile unimodal.
const SHAPE_SLACK: f64 = 1e-9;

fn coverage(model: &PathlossModel, cfg: &NetworkConfig, lambda: f64, use_exact: bool) -> Result<f64> {
    let c = cfg.with_lambda(lambda);
    if use_exact {
        cp_miso_exact(model, &c)
    } else {
        cp_miso_approx(model, &c)
    }
}

fn throughput(model: &PathlossModel, cfg: &NetworkConfig, lambda: f64, use_exact: bool) -> Result<f64> {
    Ok(st_from_cp(lambda, coverage(model, cfg, lambda, use_exact)?, cfg.tau))
}

fn log_grid(center: f64, decades: f64, points: usize) -> Vec<f64> {
    let lo = center.log10() - 0.5 * decades;
    (0..points)
        .map(|i| 10f64.powf(lo + decades * i as f64 / (points - 1) as f64))
        .collect()
}

/// Throughput on each grid density, evaluated in parallel and returned in grid order.
pub fn throughput_profile(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    grid: &[f64],
    use_exact: bool,
) -> Result<Vec<f64>> {
    grid.par_iter()
        .map(|l| throughput(model, cfg, *l, use_exact))
        .collect()
}

/// Check that `values` rises to its maximum and then falls, up to a relative
/// slack; returns the index of the maximum.
pub fn check_unimodal(grid: &[f64], values: &[f64]) -> Result<usize> {
    let (peak, top) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let slack = SHAPE_SLACK * top.abs();
    let rising = values[..=peak].windows(2).all(|w| w[1] >= w[0] - slack);
    let falling = values[peak..].windows(2).all(|w| w[1] <= w[0] + slack);
    if rising && falling {
        return Ok(peak);
    }
    let listing: Vec<String> = grid
        .iter()
        .zip(values)
        .map(|(l, v)| format!("{l:.4e}:{v:.6e}"))
        .collect();
    Err(Error::Shape(listing.join(", ")))
}

// Rough peak location from the far-user bound, which is exact for a single
// slope; falls back to the height scale when the bound has no finite peak.
fn search_center(model: &PathlossModel, cfg: &NetworkConfig) -> Result<f64> {
    let d = delta(cfg.tau_dagger(), model.outer_exponent())?;
    let r = model.outer_breakpoint();
    let dh2 = cfg.delta_h * cfg.delta_h;
    let denom = PI * (r * r * (1.0 + d) + dh2 * d);
    if denom > 0.0 && denom.is_finite() {
        Ok(1.0 / denom)
    } else {
        Ok(1.0 / (PI * dh2))
    }
}

/// Density maximizing throughput, and the throughput there.
pub fn throughput_peak(model: &PathlossModel, cfg: &NetworkConfig, use_exact: bool) -> Result<(f64, f64)> {
    cfg.validate()?;
    if model.slopes() == 1 && cfg.delta_h == 0.0 {
        return Err(Error::domain(
            "throughput grows without bound under single-slope pathloss with no height difference",
        ));
    }
    let mut center = search_center(model, cfg)?;
    let mut shifts = 0;
    let (grid, values, peak) = loop {
        let grid = log_grid(center, GRID_DECADES, GRID_POINTS);
        let values = throughput_profile(model, cfg, &grid, use_exact)?;
        let peak = check_unimodal(&grid, &values)?;
        if peak > 0 && peak < GRID_POINTS - 1 {
            break (grid, values, peak);
        }
        if shifts == MAX_GRID_SHIFTS {
            return Err(Error::Shape(format!(
                "no interior throughput maximum within {} decades of {:.4e}",
                GRID_DECADES * (MAX_GRID_SHIFTS + 1) as f64,
                search_center(model, cfg)?
            )));
        }
        // Slide the window half its width toward the edge holding the maximum.
        let step = 10f64.powf(0.5 * GRID_DECADES);
        center = if peak == 0 { center / step } else { center * step };
        shifts += 1;
    };

    let (mut a, mut b) = (grid[peak - 1].ln(), grid[peak + 1].ln());
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |x: f64| throughput(model, cfg, x.exp(), use_exact);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > PEAK_REL_TOL.ln_1p() {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let best = 0.5 * (a + b);
    let st = f(best)?;
    Ok((best.exp(), st.max(values[peak])))
}

/// Critical density by direct search on the analytic throughput curve,
/// using the exact beamforming CP or its exponential approximation.
pub fn critical_density_numeric(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    use_exact: bool,
) -> Result<CriticalDensityResult> {
    cfg.validate()?;
    let eps = cfg.cp_requirement;
    if eps > 0.0 && !feasibility(model, cfg)? {
        return Ok(CriticalDensityResult::infeasible());
    }
    let (lambda_dagger, _) = throughput_peak(model, cfg, use_exact)?;
    let unconstrained = CriticalDensityResult {
        lambda_unconstrained: Some(lambda_dagger),
        lambda_constrained: Some(lambda_dagger),
        feasible: true,
        binding: Some(Binding::UnconstrainedPeak),
    };
    if eps == 0.0 || coverage(model, cfg, lambda_dagger, use_exact)? >= eps {
        return Ok(unconstrained);
    }

    // CP(hi) < eps; walk down by decades until CP(lo) >= eps.
    let hi0 = lambda_dagger;
    let mut lo = hi0;
    let mut found = false;
    for _ in 0..BRACKET_DECADES {
        lo /= 10.0;
        if coverage(model, cfg, lo, use_exact)? >= eps {
            found = true;
            break;
        }
    }
    if !found {
        return Ok(CriticalDensityResult::infeasible());
    }
    let mut hi = (lo * 10.0).min(hi0);
    while hi / lo - 1.0 > BOUNDARY_REL_TOL {
        let mid = (lo * hi).sqrt();
        if coverage(model, cfg, mid, use_exact)? >= eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalDensityResult {
        lambda_unconstrained: Some(lambda_dagger),
        lambda_constrained: Some(lo),
        feasible: true,
        binding: Some(Binding::CpBoundary),
    })
}
