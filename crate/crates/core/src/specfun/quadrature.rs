//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Finite intervals are bisected directly. An interval with an infinite upper
//! limit is first mapped onto `[0, 1)` with `x = a + u / (1 - u)` and the
//! transformed integrand is handled like any other finite one. The Kronrod
//! nodes are all interior, so the mapped endpoint `u = 1` is never evaluated.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        let spec = Self {
            rel_tol,
            abs_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::domain(format!(
                "rel_tol must be positive, got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::domain(format!(
                "abs_tol must be nonnegative, got {}",
                self.abs_tol
            )));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::domain("max_subdivisions must be at least 1"));
        }
        Ok(())
    }
}

/// Value and error estimate of a converged integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let fc = f(center);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * resk;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }

    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut error = ((resk - resg) * half).abs();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Segment {
        lo,
        hi,
        value,
        error,
    }
}

/// Adaptive integration over `[lo, hi]` (finite) starting from the given
/// interior break points.
fn adapt<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    let mut edges = Vec::with_capacity(breaks.len() + 2);
    edges.push(lo);
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|b| b.is_finite() && *b > lo && *b < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(hi);

    let mut heap = BinaryHeap::with_capacity(spec.max_subdivisions.max(edges.len()) + 1);
    for w in edges.windows(2) {
        heap.push(kronrod15(&mut f, w[0], w[1]));
    }

    loop {
        let (value, error) = heap
            .iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !value.is_finite() {
            return Err(Error::Accuracy {
                context: "non-finite integrand".into(),
                estimate: value,
                error_bound: f64::INFINITY,
            });
        }
        let target = spec.abs_tol.max(spec.rel_tol * value.abs());
        if error <= target {
            return Ok(Quadrature {
                value,
                error,
                subdivisions: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.lo + worst.hi);
        let exhausted = heap.len() + 2 > spec.max_subdivisions;
        let unsplittable = !(mid > worst.lo && mid < worst.hi);
        if exhausted || unsplittable {
            // Roundoff floor: every remaining error term is at the resolution
            // limit of the rule, so further bisection cannot help.
            if unsplittable && error <= 1e3 * f64::EPSILON * value.abs().max(spec.abs_tol) {
                return Ok(Quadrature {
                    value,
                    error,
                    subdivisions: heap.len() + 1,
                });
            }
            return Err(Error::Accuracy {
                context: "subdivision budget exhausted".into(),
                estimate: value,
                error_bound: error,
            });
        }
        heap.push(kronrod15(&mut f, worst.lo, mid));
        heap.push(kronrod15(&mut f, mid, worst.hi));
    }
}

/// Integrate `f` over `[a, b]`; `b` may be `f64::INFINITY`.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    integrate_with_breaks(f, a, b, &[], spec).map(|q| q.value)
}

/// As [`integrate`], seeding the subdivision with known kinks or peaks of `f`.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    spec.validate()?;
    if a.is_nan() || b.is_nan() || a == f64::INFINITY || a == f64::NEG_INFINITY {
        return Err(Error::domain(format!(
            "integration limits must satisfy -inf < a, got [{a}, {b}]"
        )));
    }
    if b == a {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    if b < a {
        return Err(Error::domain(format!(
            "integration limits out of order: [{a}, {b}]"
        )));
    }
    if b.is_finite() {
        return adapt(f, a, b, breaks, spec);
    }

    let mapped: Vec<f64> = breaks
        .iter()
        .filter(|x| x.is_finite() && **x > a)
        .map(|x| {
            let t = x - a;
            t / (1.0 + t)
        })
        .collect();
    adapt(
        |u: f64| {
            let w = 1.0 - u;
            let fx = f(a + u / w);
            if fx == 0.0 {
                0.0
            } else {
                fx / (w * w)
            }
        },
        0.0,
        1.0,
        &mapped,
        spec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_on_unit_interval() {
        let v = integrate(|t| t, 0.0, 1.0, &QuadratureSpec::default()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn exponential_tail() {
        let v = integrate(|t| (-t).exp(), 0.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contact_distance_density_normalizes() {
        let pi = std::f64::consts::PI;
        let v = integrate(
            |x| 2.0 * pi * x * (-pi * x * x).exp(),
            0.0,
            f64::INFINITY,
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn algebraic_tail_with_shifted_origin() {
        // integral of x^-3 over [2, inf) = 1/8
        let v = integrate(|x| x.powi(-3), 2.0, f64::INFINITY, &QuadratureSpec::default()).unwrap();
        assert!((v - 0.125).abs() < 1e-12);
    }

    #[test]
    fn kink_is_resolved_with_break() {
        let spec = QuadratureSpec::new(1e-12, 0.0, 200).unwrap();
        let q = integrate_with_breaks(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], &spec).unwrap();
        let exact = 0.5 * 0.09 + 0.5 * 0.49;
        assert!((q.value - exact).abs() < 1e-14);
    }

    #[test]
    fn exhausted_budget_reports_estimate() {
        let spec = QuadratureSpec::new(1e-15, 0.0, 1).unwrap();
        let err = integrate(|x: f64| x.sqrt().sin() / x.sqrt(), 1e-12, 100.0, &spec).unwrap_err();
        match err {
            Error::Accuracy {
                estimate,
                error_bound,
                ..
            } => {
                assert!(estimate.is_finite());
                assert!(error_bound > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(QuadratureSpec::new(0.0, 0.0, 10).is_err());
        assert!(QuadratureSpec::new(1e-6, -1.0, 10).is_err());
        assert!(QuadratureSpec::new(1e-6, 0.0, 0).is_err());
    }

    #[test]
    fn reversed_limits_rejected() {
        assert!(integrate(|x| x, 1.0, 0.0, &QuadratureSpec::default()).is_err());
    }
}
