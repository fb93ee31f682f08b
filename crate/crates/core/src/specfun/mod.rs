//! Special functions behind the coverage closed forms.
//!
//! Both hypergeometric shorthands have the parameter pattern
//! `2F1(1, b; b + 1; -x)`, which equals `b * int_0^1 t^(b-1) / (1 + x t) dt`.
//! After `t = u^(1/b)` this becomes `int_0^1 du / (1 + x u^(1/b))`, a bounded
//! integrand on the unit interval for every `x >= 0` and `b > 0`.

mod quadrature;

pub use quadrature::{integrate, integrate_with_breaks, Quadrature, QuadratureSpec};

use crate::error::{Error, Result};

// Tight enough that omega1(x, 4) * sqrt(x) tracks arctan(sqrt(x)) to 1e-10
// absolute up to x = 1e6.
const HYPER_SPEC: QuadratureSpec = QuadratureSpec {
    rel_tol: 1e-13,
    abs_tol: 0.0,
    max_subdivisions: 2000,
};

/// `2F1(1, b; b + 1; -x)` for `b > 0`, `x >= 0`.
fn hyper_unit_shift(x: f64, b: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(1.0);
    }
    let p = 1.0 / b;
    // The integrand drops from 1 to 1/2 at u = x^(-b); seed a break there.
    let knee = x.powf(-b);
    let breaks = [knee, 0.1 * knee, 10.0 * knee];
    integrate_with_breaks(
        |u: f64| 1.0 / (1.0 + x * u.powf(p)),
        0.0,
        1.0,
        &breaks,
        &HYPER_SPEC,
    )
    .map(|q| q.value)
    .map_err(|e| e.within(format!("2F1(1,{b};{};-{x})", b + 1.0)))
}

fn check_arg(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 || x.is_infinite() {
        return Err(Error::domain(format!(
            "hypergeometric argument must be finite and nonnegative, got {x}"
        )));
    }
    Ok(())
}

/// `omega1(x, y) = 2F1(1, 1 - 2/y; 2 - 2/y; -x)`, defined for `y > 2`.
pub fn omega1(x: f64, y: f64) -> Result<f64> {
    check_arg(x)?;
    if !(y > 2.0) || !y.is_finite() {
        return Err(Error::domain(format!("omega1 requires y > 2, got {y}")));
    }
    hyper_unit_shift(x, 1.0 - 2.0 / y)
}

/// `omega2(x, y) = 2F1(1, 2/y; 1 + 2/y; -x)`, defined for `y > 0`.
pub fn omega2(x: f64, y: f64) -> Result<f64> {
    check_arg(x)?;
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::domain(format!("omega2 requires y > 0, got {y}")));
    }
    hyper_unit_shift(x, 2.0 / y)
}

/// `delta(x, y) = 2 x omega1(x, y) / (y - 2)`.
///
/// Times `d^2 / 2` this is the mean-field interference integral
/// `int_d^inf r (1 - 1 / (1 + x (d/r)^y)) dr` of a single power-law segment.
pub fn delta(x: f64, y: f64) -> Result<f64> {
    let w = omega1(x, y)?;
    Ok(2.0 * x * w / (y - 2.0))
}

/// Regularized upper incomplete gamma `Gamma(n, z) / Gamma(n)` for integer `n`,
/// i.e. `exp(-z) * sum_{k<n} z^k / k!`.
pub fn chi_square_tail_ratio(n: u32, z: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("chi_square_tail_ratio requires n >= 1"));
    }
    if z.is_nan() || z < 0.0 {
        return Err(Error::domain(format!(
            "chi_square_tail_ratio requires z >= 0, got {z}"
        )));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if z.is_infinite() {
        return Ok(0.0);
    }
    if z < 500.0 {
        let mut term = (-z).exp();
        let mut sum = term;
        for k in 1..n {
            term *= z / k as f64;
            sum += term;
        }
        return Ok(sum.min(1.0));
    }
    // exp(-z) underflows here; accumulate in log space.
    let ln_z = z.ln();
    let mut log_term = -z;
    let mut sum = log_term.exp();
    for k in 1..n {
        log_term += ln_z - (k as f64).ln();
        sum += log_term.exp();
    }
    Ok(sum.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arctan_oracle(x: f64) -> f64 {
        x.sqrt().atan() / x.sqrt()
    }

    #[test]
    fn omega1_at_zero_is_one() {
        assert_eq!(omega1(0.0, 4.0).unwrap(), 1.0);
        assert_eq!(omega2(0.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn omega_values_from_arctan_identity() {
        let quarter_pi = std::f64::consts::FRAC_PI_4;
        assert!((omega1(1.0, 4.0).unwrap() - quarter_pi).abs() < 1e-12);
        assert!((omega1(10.0, 4.0).unwrap() - arctan_oracle(10.0)).abs() < 1e-12);
        assert!((omega1(10.0, 4.0).unwrap() - 0.39990).abs() < 5e-5);
        assert!((omega2(1.0, 4.0).unwrap() - quarter_pi).abs() < 1e-12);
        assert!((omega2(5.0, 4.0).unwrap() - arctan_oracle(5.0)).abs() < 1e-12);
        assert!((omega2(5.0, 4.0).unwrap() - 0.51441).abs() < 5e-5);
    }

    #[test]
    fn omega2_at_y_two_is_log_ratio() {
        // 2F1(1,1;2;-x) = ln(1+x)/x
        let x = 3.7;
        assert!((omega2(x, 2.0).unwrap() - (1.0 + x).ln() / x).abs() < 1e-12);
    }

    #[test]
    fn delta_values() {
        assert_eq!(delta(0.0, 4.0).unwrap(), 0.0);
        let s10 = 10f64.sqrt();
        assert!((delta(10.0, 4.0).unwrap() - s10 * s10.atan()).abs() < 1e-11);
        assert!((delta(10.0, 4.0).unwrap() - 3.9990).abs() < 5e-4);
        let oracle = 0.0625 * 0.25f64.atan() / 0.25;
        assert!((delta(0.0625, 4.0).unwrap() - oracle).abs() < 1e-13);
        assert!((delta(0.0625, 4.0).unwrap() - 0.061245).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(omega1(1.0, 2.0), Err(Error::Domain(_))));
        assert!(matches!(omega1(1.0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(omega1(-1.0, 4.0), Err(Error::Domain(_))));
        assert!(matches!(omega2(-0.5, 4.0), Err(Error::Domain(_))));
        assert!(matches!(omega2(0.5, 0.0), Err(Error::Domain(_))));
        assert!(delta(1.0, 2.0).is_err());
        assert!(chi_square_tail_ratio(0, 1.0).is_err());
        assert!(chi_square_tail_ratio(2, -1.0).is_err());
    }

    #[test]
    fn chi_square_tail_values() {
        for z in [0.0, 0.3, 1.0, 7.5, 40.0] {
            assert!((chi_square_tail_ratio(1, z).unwrap() - (-z as f64).exp()).abs() < 1e-15);
        }
        assert!((chi_square_tail_ratio(2, 1.0).unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-15);
        assert_eq!(chi_square_tail_ratio(16, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn chi_square_tail_large_argument_is_continuous() {
        let below = chi_square_tail_ratio(600, 499.999_999).unwrap();
        let above = chi_square_tail_ratio(600, 500.0).unwrap();
        assert!((below - above).abs() < 1e-6);
        assert!(above > 0.0 && above < 1.0);
    }

    #[test]
    fn omega1_times_sqrt_matches_arctan_on_log_grid() {
        for i in 0..=48 {
            let x = 10f64.powf(-6.0 + 12.0 * i as f64 / 48.0);
            let lhs = omega1(x, 4.0).unwrap() * x.sqrt();
            assert!((lhs - x.sqrt().atan()).abs() < 1e-10, "x={x}: {lhs}");
        }
    }

    #[test]
    fn omega1_decreasing_on_log_grid() {
        for y in [2.5, 3.0, 4.0, 6.0] {
            let mut prev = omega1(0.0, y).unwrap();
            for i in 0..40 {
                let x = 10f64.powf(-4.0 + 10.0 * i as f64 / 39.0);
                let w = omega1(x, y).unwrap();
                assert!(w < prev, "y={y} x={x}");
                assert!(w > 0.0 && w <= 1.0);
                prev = w;
            }
        }
    }

    proptest! {
        #[test]
        fn omega1_and_omega2_coincide_at_y_four(x in 0.0f64..1e4) {
            let a = omega1(x, 4.0).unwrap();
            let b = omega2(x, 4.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }

        #[test]
        fn delta_increasing(x in 1e-6f64..1e3, y in 2.1f64..8.0, bump in 1e-3f64..1.0) {
            let lo = delta(x, y).unwrap();
            let hi = delta(x * (1.0 + bump), y).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn chi_square_tail_bounds(n in 1u32..40, z in 0.0f64..80.0) {
            let v = chi_square_tail_ratio(n, z).unwrap();
            prop_assert!(v <= 1.0);
            prop_assert!(v >= (-z).exp() * (1.0 - 1e-12));
            let next = chi_square_tail_ratio(n + 1, z).unwrap();
            prop_assert!(next >= v);
        }
    }
}
