//! Coverage probability (CP) and spatial throughput (ST) in closed and
//! semi-closed form.
//!
//! All expressions condition on the 2-D contact distance `r0` of the serving
//! base station (density `2 pi lambda r exp(-pi lambda r^2)`) and evaluate the
//! pathloss at the 3-D link distance `d = sqrt(r^2 + dh^2)`. Breakpoints of the
//! pathloss model therefore apply to the 3-D distance, which is also what the
//! Monte Carlo simulator does.
//!
//! The contact expectation is taken over `v = pi lambda r0^2 ~ Exp(1)`, which
//! makes the outer quadrature independent of the density scale. It is split
//! where `d0` crosses a breakpoint and truncated at `v = ln 1e12`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pathloss::PathlossModel;
use crate::specfun::{delta, integrate, integrate_with_breaks, omega1, omega2, QuadratureSpec};

/// Network parameters in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Base-station density, per m^2.
    pub lambda: f64,
    /// Antenna-height difference between base stations and users, meters.
    pub delta_h: f64,
    /// Transmit power, watts. Cancels in every SIR expression.
    pub power: f64,
    /// Linear SIR decoding threshold.
    pub tau: f64,
    pub n_antennas: u32,
    /// Required coverage probability; 0 means unconstrained.
    pub cp_requirement: f64,
}

impl NetworkConfig {
    pub fn new(
        lambda: f64,
        delta_h: f64,
        power: f64,
        tau: f64,
        n_antennas: u32,
        cp_requirement: f64,
    ) -> Result<Self> {
        let cfg = Self {
            lambda,
            delta_h,
            power,
            tau,
            n_antennas,
            cp_requirement,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::domain(format!(
                "BS density must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.delta_h >= 0.0) || !self.delta_h.is_finite() {
            return Err(Error::domain(format!(
                "antenna-height difference must be nonnegative, got {}",
                self.delta_h
            )));
        }
        if !(self.power > 0.0) || !self.power.is_finite() {
            return Err(Error::domain(format!(
                "transmit power must be positive, got {}",
                self.power
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::domain(format!(
                "SIR threshold must be positive, got {}",
                self.tau
            )));
        }
        if self.n_antennas == 0 {
            return Err(Error::domain("antenna count must be at least 1"));
        }
        if !(self.cp_requirement >= 0.0 && self.cp_requirement < 1.0) {
            return Err(Error::domain(format!(
                "CP requirement must lie in [0, 1), got {}",
                self.cp_requirement
            )));
        }
        Ok(())
    }

    /// Effective threshold `tau / N_a` of the exponential approximation.
    pub fn tau_dagger(&self) -> f64 {
        self.tau / self.n_antennas as f64
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_delta_h(mut self, delta_h: f64) -> Self {
        self.delta_h = delta_h;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_antennas(mut self, n_antennas: u32) -> Self {
        self.n_antennas = n_antennas;
        self
    }

    pub fn with_cp_requirement(mut self, eps: f64) -> Self {
        self.cp_requirement = eps;
        self
    }
}

/// Which expression produced a [`CpStPoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    SisoExact,
    MisoExact,
    MisoApprox,
    SisoLowerBound,
    SisoUpperBound,
    MonteCarlo,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SisoExact,
        Method::MisoExact,
        Method::MisoApprox,
        Method::SisoLowerBound,
        Method::SisoUpperBound,
        Method::MonteCarlo,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SisoExact => "siso_exact",
            Method::MisoExact => "miso_exact",
            Method::MisoApprox => "miso_approx",
            Method::SisoLowerBound => "siso_lower_bound",
            Method::SisoUpperBound => "siso_upper_bound",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown method '{s}'")))
    }
}

/// One (density, CP, ST) sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpStPoint {
    pub lambda: f64,
    pub cp: f64,
    pub st: f64,
    pub method: Method,
}

impl CpStPoint {
    pub fn new(lambda: f64, cp: f64, tau: f64, method: Method) -> Self {
        Self {
            lambda,
            cp,
            st: st_from_cp(lambda, cp, tau),
            method,
        }
    }
}

/// `ST = lambda * CP * log2(1 + tau)`, bits/(s Hz m^2) for lambda in m^-2.
pub fn st_from_cp(lambda: f64, cp: f64, tau: f64) -> f64 {
    lambda * cp * (1.0 + tau).log2()
}

// -ln(1e-12): the contact CDF reaches 1 - 1e-12 here.
const CONTACT_TAIL: f64 = 27.631_021_115_928_547;

const OUTER_SPEC: QuadratureSpec = QuadratureSpec {
    rel_tol: 1e-10,
    abs_tol: 0.0,
    max_subdivisions: 2000,
};

const INNER_SPEC: QuadratureSpec = QuadratureSpec {
    rel_tol: 1e-11,
    abs_tol: 0.0,
    max_subdivisions: 2000,
};

const PROBABILITY_SLACK: f64 = 1e-9;

fn checked_probability(p: f64, what: &str) -> Result<f64> {
    if !p.is_finite() || p < -PROBABILITY_SLACK || p > 1.0 + PROBABILITY_SLACK {
        return Err(Error::NumericalInstability(format!(
            "{what} evaluated to {p}, outside [0, 1]"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `E[h(d0)]` over the PPP contact distance.
fn contact_expectation<F>(
    model: &PathlossModel,
    lambda: f64,
    delta_h: f64,
    mut conditional: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let dh2 = delta_h * delta_h;
    let breaks: Vec<f64> = model
        .breakpoints()
        .iter()
        .filter(|r| **r > delta_h)
        .map(|r| PI * lambda * (r * r - dh2))
        .filter(|v| *v < CONTACT_TAIL)
        .collect();
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let q = integrate_with_breaks(
        |v: f64| {
            if failure.borrow().is_some() {
                return 0.0;
            }
            let d0 = (v / (PI * lambda) + dh2).sqrt();
            match conditional(d0) {
                Ok(c) => (-v).exp() * c,
                Err(e) => {
                    *failure.borrow_mut() = Some(e);
                    0.0
                }
            }
        },
        0.0,
        CONTACT_TAIL,
        &breaks,
        &OUTER_SPEC,
    )
    .map_err(|e| e.within("contact-distance expectation"))?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(q.value)
}

/// `int_{d0}^inf x (1 - 1/(1 + tau l(x)/l(d0))) dx`, assembled segment by
/// segment from `omega2` terms (finite segments) and a `delta` term for the
/// unbounded outer segment.
fn interference_integral(model: &PathlossModel, d0: f64, tau: f64) -> Result<f64> {
    let first = model.segment(d0);
    let log_ld0 = model.log_amplitude(first) - model.exponent(first) * d0.ln();
    let mut total = 0.0;
    for i in first..model.slopes() {
        let alpha = model.exponent(i);
        let lo = if i == first { d0 } else { model.segment_start(i) };
        let hi = model.segment_end(i);
        // u(x) = c x^(-alpha) on this segment
        let log_c = tau.ln() + model.log_amplitude(i) - log_ld0;
        // lo^alpha / c, exact 1/tau at the serving distance
        let arg_lo = if i == first {
            1.0 / tau
        } else {
            (alpha * lo.ln() - log_c).exp()
        };
        let term = if hi.is_infinite() {
            0.5 * lo * lo * delta(1.0 / arg_lo, alpha)?
        } else if alpha == 0.0 {
            let c = log_c.exp();
            0.5 * (hi * hi - lo * lo) * c / (1.0 + c)
        } else {
            let arg_hi = (alpha * hi.ln() - log_c).exp();
            0.5 * (hi * hi * omega2(arg_hi, alpha)? - lo * lo * omega2(arg_lo, alpha)?)
        };
        total += term;
    }
    Ok(total)
}

fn cp_siso_threshold(model: &PathlossModel, lambda: f64, delta_h: f64, tau: f64) -> Result<f64> {
    if model.slopes() == 1 {
        let d = delta(tau, model.exponent(0))?;
        let cp = (-PI * lambda * d * delta_h * delta_h).exp() / (1.0 + d);
        return checked_probability(cp, "single-slope SISO CP");
    }
    let cp = contact_expectation(model, lambda, delta_h, |d0| {
        let j = interference_integral(model, d0, tau)?;
        Ok((-2.0 * PI * lambda * j).exp())
    })?;
    checked_probability(cp, "SISO CP")
}

/// Single-antenna CP under Rayleigh fading.
pub fn cp_siso(model: &PathlossModel, cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    cp_siso_threshold(model, cfg.lambda, cfg.delta_h, cfg.tau)
}

/// Exponential-gain approximation of the beamforming CP: the SISO expression
/// evaluated at `tau / N_a`.
pub fn cp_miso_approx(model: &PathlossModel, cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    cp_siso_threshold(model, cfg.lambda, cfg.delta_h, cfg.tau_dagger())
}

/// Normalized Laplace coefficients of the interference given the serving
/// distance `d0`, with per-interferer load `u(x) = scale * l(x)`:
///
/// * `b_0 = 2 pi lambda int_{d0}^inf x u / (1 + u) dx`
/// * `b_n = 2 pi lambda int_{d0}^inf x u^n / (1 + u)^(n+1) dx` for `n >= 1`
///
/// With `scale = 2 s P` these are `b_0 = -eta(s)` and
/// `b_n = (-s)^n eta^(n)(s) / n!` where `L(s) = exp(eta(s))`.
fn laplace_coefficients(
    model: &PathlossModel,
    lambda: f64,
    d0: f64,
    scale: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    let first = model.segment(d0);
    let log_scale = scale.ln();
    let mut out = Vec::with_capacity(k_max + 1);
    for order in 0..=k_max {
        let mut total = 0.0;
        for i in first..model.slopes() {
            let alpha = model.exponent(i);
            let log_k = model.log_amplitude(i) + log_scale;
            let lo = if i == first { d0 } else { model.segment_start(i) };
            let hi = model.segment_end(i);
            // x = lo * y keeps the integrand on a unit length scale
            let integrand = |y: f64| {
                let x = lo * y;
                let u = (log_k - alpha * x.ln()).exp();
                let w = 1.0 / (1.0 + u);
                let body = if order == 0 {
                    u * w
                } else {
                    (u * w).powi(order as i32) * w
                };
                x * body * lo
            };
            let upper = if hi.is_infinite() { f64::INFINITY } else { hi / lo };
            let part = integrate(integrand, 1.0, upper, &INNER_SPEC)
                .map_err(|e| e.within(format!("Laplace derivative of order {order}")))?;
            total += part;
        }
        out.push(2.0 * PI * lambda * total);
    }
    Ok(out)
}

/// `eta(s)` and its first `k_max` derivatives, where
/// `L(s) = exp(eta(s)) = exp(-2 pi lambda int_{d0}^inf x (1 - 1/(1 + 2 s P l(x))) dx)`
/// is the Laplace transform of the interference seen at serving distance `d0`.
///
/// `eta^(n)(s) = -2 pi lambda (-1)^(n+1) n! int x (2 P l)^n / (1 + 2 s P l)^(n+1) dx`.
/// Beamforming CP uses `k_max = N_a - 1`.
pub fn eta_derivatives(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    d0: f64,
    s: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(d0 > 0.0) || d0 < cfg.delta_h || !d0.is_finite() {
        return Err(Error::domain(format!(
            "serving distance must be positive and at least delta_h = {}, got {d0}",
            cfg.delta_h
        )));
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!("Laplace variable must be positive, got {s}")));
    }
    let b = laplace_coefficients(model, cfg.lambda, d0, 2.0 * s * cfg.power, k_max)?;
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(-b[0]);
    let mut factorial = 1.0;
    for (n, bn) in b.iter().enumerate().skip(1) {
        factorial *= n as f64;
        out.push(factorial * bn / (-s).powi(n as i32));
    }
    Ok(out)
}

/// Running sums `sum_{k<=K} (-s)^k / k! L^(k)(s)` for `K = 0..N_a-1` at the
/// serving distance `d0`, with `s = tau / (2 P l(d0))`.
///
/// The derivatives of `L = exp(eta)` follow
/// `L^(k) = sum_{j<k} C(k-1, j) eta^(k-j) L^(j)`; in terms of
/// `c_k = (-s)^k L^(k) / k!` this is `c_k = (1/k) sum_{j<k} (k-j) b_{k-j} c_j`,
/// a sum of nonnegative terms.
pub fn miso_partial_sums(model: &PathlossModel, cfg: &NetworkConfig, d0: f64) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(Error::domain(format!("serving distance must be positive, got {d0}")));
    }
    miso_partial_sums_unchecked(model, cfg, d0)
}

fn miso_partial_sums_unchecked(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    d0: f64,
) -> Result<Vec<f64>> {
    let n = cfg.n_antennas as usize;
    let s = cfg.tau / (2.0 * cfg.power * model.gain_unchecked(d0));
    let b = laplace_coefficients(model, cfg.lambda, d0, 2.0 * s * cfg.power, n - 1)?;
    let mut c = Vec::with_capacity(n);
    c.push((-b[0]).exp());
    for k in 1..n {
        let ck: f64 = (0..k).map(|j| (k - j) as f64 * b[k - j] * c[j]).sum::<f64>() / k as f64;
        c.push(ck);
    }
    let mut sums = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (k, ck) in c.iter().enumerate() {
        acc += ck;
        if !acc.is_finite() || acc < -PROBABILITY_SLACK || acc > 1.0 + PROBABILITY_SLACK {
            return Err(Error::NumericalInstability(format!(
                "Laplace partial sum {k} at d0 = {d0} is {acc}"
            )));
        }
        sums.push(acc);
    }
    Ok(sums)
}

/// Exact beamforming CP: chi-square(2 N_a) desired gain against chi-square(2)
/// interferers, averaged over the serving distance.
pub fn cp_miso_exact(model: &PathlossModel, cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    let cp = contact_expectation(model, cfg.lambda, cfg.delta_h, |d0| {
        let sums = miso_partial_sums_unchecked(model, cfg, d0)?;
        Ok(*sums.last().unwrap())
    })?;
    checked_probability(cp, "beamforming CP")
}

/// Lower bound keeping only users whose serving BS lies beyond `R_{N-1}`:
/// `exp(-pi lambda [R^2 + delta (R^2 + dh^2)]) / (1 + delta)`, `delta = delta(tau, alpha_{N-1})`.
pub fn cp_siso_lower_bound(model: &PathlossModel, cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    let r = model.outer_breakpoint();
    let d = delta(cfg.tau, model.outer_exponent())?;
    let exponent = -PI * cfg.lambda * (r * r + d * (r * r + cfg.delta_h * cfg.delta_h));
    Ok(exponent.exp() / (1.0 + d))
}

/// Interference floor `q1(n)` used by [`cp_siso_upper_bound`].
pub fn upper_bound_floor(model: &PathlossModel, cfg: &NetworkConfig, n: usize) -> Result<f64> {
    let last = model.slopes() - 1;
    if n >= last {
        return Err(Error::domain(format!(
            "segment index {n} must be below the outer segment {last}"
        )));
    }
    let alpha = model.outer_exponent();
    let r = model.outer_breakpoint();
    let r_bar2 = r * r + cfg.delta_h * cfg.delta_h;
    let ratio = (model.log_amplitude(last) - model.log_amplitude(n)).exp();
    let w = omega1(cfg.tau * ratio, alpha)?;
    Ok(cfg.tau * ratio * r_bar2.powf(1.0 - 0.5 * alpha) * cfg.delta_h.powf(model.exponent(n))
        / (alpha - 2.0)
        * w)
}

/// Upper bound `sum_{n<N-1} exp(-2 pi lambda q1(n)) + exp(-pi lambda R_{N-1}^2)`.
/// Not a probability: it exceeds 1 at low density.
pub fn cp_siso_upper_bound(model: &PathlossModel, cfg: &NetworkConfig) -> Result<f64> {
    cfg.validate()?;
    if model.slopes() == 1 {
        return cp_siso(model, cfg);
    }
    if !(cfg.delta_h > 0.0) {
        return Err(Error::domain(
            "the multi-slope upper bound requires a positive antenna-height difference",
        ));
    }
    let mut total = 0.0;
    for n in 0..model.slopes() - 1 {
        total += (-2.0 * PI * cfg.lambda * upper_bound_floor(model, cfg, n)?).exp();
    }
    let r = model.outer_breakpoint();
    Ok(total + (-PI * cfg.lambda * r * r).exp())
}

/// Evaluate one analytic method at `cfg`.
pub fn evaluate(model: &PathlossModel, cfg: &NetworkConfig, method: Method) -> Result<CpStPoint> {
    let cp = match method {
        Method::SisoExact => cp_siso(model, cfg)?,
        Method::MisoExact => cp_miso_exact(model, cfg)?,
        Method::MisoApprox => cp_miso_approx(model, cfg)?,
        Method::SisoLowerBound => cp_siso_lower_bound(model, cfg)?,
        Method::SisoUpperBound => cp_siso_upper_bound(model, cfg)?,
        Method::MonteCarlo => {
            return Err(Error::domain(
                "monte_carlo is not an analytic method; use the montecarlo module",
            ))
        }
    };
    Ok(CpStPoint::new(cfg.lambda, cp, cfg.tau, method))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sspm() -> PathlossModel {
        PathlossModel::single_slope(4.0).unwrap()
    }

    fn dspm() -> PathlossModel {
        PathlossModel::dual_slope(2.5, 4.0, 10.0).unwrap()
    }

    fn cfg(lambda: f64, delta_h: f64, tau: f64, n: u32) -> NetworkConfig {
        NetworkConfig::new(lambda, delta_h, 0.2, tau, n, 0.0).unwrap()
    }

    // 1 / (1 + sqrt(10) atan(sqrt(10)))
    fn sspm_tau10_ceiling() -> f64 {
        let s = 10f64.sqrt();
        1.0 / (1.0 + s * s.atan())
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::new(0.0, 1.0, 1.0, 1.0, 1, 0.0).is_err());
        assert!(NetworkConfig::new(1e-4, -1.0, 1.0, 1.0, 1, 0.0).is_err());
        assert!(NetworkConfig::new(1e-4, 1.0, 0.0, 1.0, 1, 0.0).is_err());
        assert!(NetworkConfig::new(1e-4, 1.0, 1.0, 0.0, 1, 0.0).is_err());
        assert!(NetworkConfig::new(1e-4, 1.0, 1.0, 1.0, 0, 0.0).is_err());
        assert!(NetworkConfig::new(1e-4, 1.0, 1.0, 1.0, 1, 1.0).is_err());
        let c = NetworkConfig::new(1e-4, 1.0, 1.0, 10.0, 16, 0.5).unwrap();
        assert_eq!(c.tau_dagger(), 0.625);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }

    #[test]
    fn st_values() {
        assert_eq!(st_from_cp(0.0, 0.5, 10.0), 0.0);
        assert!((st_from_cp(1e-4, 0.2001, 10.0) - 6.923e-5).abs() < 1e-8);
        assert_eq!(st_from_cp(3e-3, 1.0, 1.0), 3e-3);
    }

    #[test]
    fn sspm_siso_without_height_difference() {
        let cp = cp_siso(&sspm(), &cfg(1e-4, 0.0, 10.0, 1)).unwrap();
        assert!((cp - sspm_tau10_ceiling()).abs() < 1e-12);
        assert!((cp - 0.2001).abs() < 1e-4);
    }

    #[test]
    fn sspm_siso_with_height_difference() {
        let cp = cp_siso(&sspm(), &cfg(1e-4, 2.0, 10.0, 1)).unwrap();
        let s = 10f64.sqrt();
        let expected = sspm_tau10_ceiling() * (-PI * 1e-4 * s * s.atan() * 4.0).exp();
        assert!((cp - expected).abs() < 1e-12);
        assert!((cp - 0.1991).abs() < 1e-4);
    }

    #[test]
    fn vanishing_threshold_covers_everyone() {
        for m in [sspm(), dspm()] {
            let cp = cp_siso(&m, &cfg(1e-3, 2.0, 1e-9, 1)).unwrap();
            assert!(cp > 1.0 - 1e-6, "{cp}");
        }
    }

    #[test]
    fn multi_slope_engine_reproduces_single_slope_closed_form() {
        // A "dual-slope" model with equal exponents is a single slope with a
        // fake breakpoint; the segment-wise route must agree with the closed form.
        let fake = PathlossModel::new(vec![4.0, 4.0], vec![15.0]).unwrap();
        for lambda in [1e-5, 1e-3, 1e-2] {
            let c = cfg(lambda, 2.0, 10.0, 1);
            let a = cp_siso(&fake, &c).unwrap();
            let b = cp_siso(&sspm(), &c).unwrap();
            assert!((a - b).abs() < 1e-9, "lambda={lambda}: {a} vs {b}");
        }
    }

    #[test]
    fn interference_integral_single_segment_matches_delta() {
        let m = sspm();
        let d0 = 3.0;
        let j = interference_integral(&m, d0, 10.0).unwrap();
        let expected = 0.5 * d0 * d0 * delta(10.0, 4.0).unwrap();
        assert!((j - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn interference_integral_matches_brute_force() {
        let m = PathlossModel::new(vec![2.0, 3.0, 4.0], vec![10.0, 50.0]).unwrap();
        for d0 in [2.0, 9.0, 12.0, 80.0] {
            let tau = 3.0;
            let ld0 = m.gain(d0).unwrap();
            let spec = QuadratureSpec::new(1e-12, 0.0, 4000).unwrap();
            let brute = integrate_with_breaks(
                |x: f64| {
                    let u = tau * m.gain_unchecked(x) / ld0;
                    x * u / (1.0 + u)
                },
                d0,
                f64::INFINITY,
                &[10.0, 50.0],
                &spec,
            )
            .unwrap()
            .value;
            let j = interference_integral(&m, d0, tau).unwrap();
            assert!((j - brute).abs() < 1e-9 * brute, "d0={d0}: {j} vs {brute}");
        }
    }

    #[test]
    fn single_antenna_exact_matches_siso() {
        for m in [sspm(), dspm()] {
            for (lambda, dh) in [(1e-5, 2.0), (1e-3, 0.5), (1e-2, 5.0)] {
                let c = cfg(lambda, dh, 10.0, 1);
                let exact = cp_miso_exact(&m, &c).unwrap();
                let siso = cp_siso(&m, &c).unwrap();
                assert!((exact - siso).abs() < 1e-8, "{exact} vs {siso}");
                assert_eq!(cp_miso_approx(&m, &c).unwrap(), siso);
            }
        }
    }

    #[test]
    fn approx_small_density_limit() {
        let c = cfg(1e-6, 2.0, 10.0, 16);
        let cp = cp_miso_approx(&sspm(), &c).unwrap();
        let limit = 1.0 / (1.0 + delta(0.625, 4.0).unwrap());
        assert!((cp - limit).abs() < 1e-4, "{cp} vs {limit}");
        assert!((limit - 0.654).abs() < 1e-3);
    }

    #[test]
    fn exact_miso_small_density_ceiling() {
        let c = cfg(1e-6, 2.0, 10.0, 16);
        let cp = cp_miso_exact(&sspm(), &c).unwrap();
        assert!((cp - 0.79).abs() < 0.02, "{cp}");
        assert!(cp > cp_miso_approx(&sspm(), &c).unwrap());
    }

    #[test]
    fn eta_at_matched_threshold_equals_siso_exponent() {
        let m = sspm();
        let c = cfg(1e-3, 2.0, 10.0, 1);
        let d0 = 3.5;
        let s = c.tau / (2.0 * c.power * m.gain(d0).unwrap());
        let eta = eta_derivatives(&m, &c, d0, s, 0).unwrap();
        let expected = -PI * c.lambda * d0 * d0 * delta(10.0, 4.0).unwrap();
        assert!((eta[0] / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eta_signs_alternate() {
        let m = dspm();
        let c = cfg(1e-3, 2.0, 10.0, 6);
        let d0 = 4.0;
        let s = c.tau / (2.0 * c.power * m.gain(d0).unwrap());
        let eta = eta_derivatives(&m, &c, d0, s, 5).unwrap();
        assert!(eta[0] < 0.0);
        for (n, e) in eta.iter().enumerate().skip(1) {
            assert!(e.abs() > 0.0);
            assert!(e * (-1f64).powi(n as i32) > 0.0, "order {n}: {e}");
        }
    }

    #[test]
    fn eta_vanishes_with_density() {
        let m = sspm();
        let c = cfg(1e-300, 2.0, 10.0, 4);
        let eta = eta_derivatives(&m, &c, 3.0, 1.0, 3).unwrap();
        assert!(eta.iter().all(|e| e.abs() < 1e-290));
    }

    #[test]
    fn eta_derivatives_match_finite_differences() {
        let m = dspm();
        let c = cfg(1e-3, 2.0, 10.0, 3);
        let d0 = 6.0;
        let s = c.tau / (2.0 * c.power * m.gain(d0).unwrap());
        let eta = eta_derivatives(&m, &c, d0, s, 2).unwrap();
        let h = 1e-3 * s;
        let at = |t: f64| eta_derivatives(&m, &c, d0, t, 0).unwrap()[0];
        let (ep, e0, em) = (at(s + h), at(s), at(s - h));
        let d1 = (ep - em) / (2.0 * h);
        let d2 = (ep - 2.0 * e0 + em) / (h * h);
        assert!((d1 / eta[1] - 1.0).abs() < 1e-5, "{d1} vs {}", eta[1]);
        assert!((d2 / eta[2] - 1.0).abs() < 1e-5, "{d2} vs {}", eta[2]);
    }

    #[test]
    fn raw_recursion_matches_normalized_sums() {
        // Rebuild L^(k) from eta^(n) with the plain exp-composition recursion
        // and compare with the normalized partial sums.
        let m = dspm();
        let c = cfg(1e-3, 2.0, 10.0, 5);
        let d0 = 3.0;
        let s = c.tau / (2.0 * c.power * m.gain(d0).unwrap());
        let eta = eta_derivatives(&m, &c, d0, s, 4).unwrap();
        let mut l = vec![eta[0].exp()];
        for k in 1..5 {
            let mut v = 0.0;
            let mut binom = 1.0;
            for j in 0..k {
                v += binom * eta[k - j] * l[j];
                binom = binom * (k - 1 - j) as f64 / (j + 1) as f64;
            }
            l.push(v);
        }
        let mut acc = 0.0;
        let mut fact = 1.0;
        let sums = miso_partial_sums(&m, &c, d0).unwrap();
        for k in 0..5 {
            if k > 0 {
                fact *= k as f64;
            }
            acc += (-s).powi(k as i32) / fact * l[k];
            assert!((acc - sums[k]).abs() < 1e-10, "k={k}: {acc} vs {}", sums[k]);
        }
    }

    #[test]
    fn partial_sums_nondecreasing() {
        for m in [sspm(), dspm()] {
            let c = cfg(1e-3, 2.0, 10.0, 16);
            for d0 in [2.0, 5.0, 9.9, 10.1, 30.0] {
                let sums = miso_partial_sums(&m, &c, d0).unwrap();
                assert!(sums.windows(2).all(|w| w[1] >= w[0]));
                assert!(*sums.last().unwrap() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn eta_rejects_bad_arguments() {
        let m = sspm();
        let c = cfg(1e-3, 2.0, 10.0, 2);
        assert!(eta_derivatives(&m, &c, 1.0, 1.0, 1).is_err());
        assert!(eta_derivatives(&m, &c, 3.0, 0.0, 1).is_err());
    }

    #[test]
    fn lower_bound_values() {
        let c = cfg(1e-4, 2.0, 10.0, 1);
        let lb = cp_siso_lower_bound(&dspm(), &c).unwrap();
        let d = delta(10.0, 4.0).unwrap();
        let expected = (-PI * 1e-4 * (100.0 + d * 104.0)).exp() / (1.0 + d);
        assert!((lb - expected).abs() < 1e-15);
        assert!((lb - 0.1701).abs() < 1e-4);
        let single = cp_siso_lower_bound(&sspm(), &c).unwrap();
        assert!((single - cp_siso(&sspm(), &c).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn upper_bound_degenerate_and_domain() {
        let c = cfg(1e-4, 2.0, 10.0, 1);
        assert_eq!(
            cp_siso_upper_bound(&sspm(), &c).unwrap(),
            cp_siso(&sspm(), &c).unwrap()
        );
        let flat = cfg(1e-4, 0.0, 10.0, 1);
        assert!(matches!(
            cp_siso_upper_bound(&dspm(), &flat),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bounds_sandwich_exact_on_grid() {
        let m = dspm();
        for i in 0..20 {
            let lambda = 10f64.powf(-4.0 + 4.0 * i as f64 / 19.0);
            let c = cfg(lambda, 2.0, 10.0, 1);
            let lo = cp_siso_lower_bound(&m, &c).unwrap();
            let mid = cp_siso(&m, &c).unwrap();
            let hi = cp_siso_upper_bound(&m, &c).unwrap();
            assert!(lo <= mid && mid <= hi, "lambda={lambda}: {lo} {mid} {hi}");
        }
    }

    #[test]
    fn evaluate_rejects_monte_carlo() {
        assert!(evaluate(&sspm(), &cfg(1e-4, 2.0, 10.0, 1), Method::MonteCarlo).is_err());
        let p = evaluate(&sspm(), &cfg(1e-4, 0.0, 10.0, 1), Method::SisoExact).unwrap();
        assert!((p.st - st_from_cp(p.lambda, p.cp, 10.0)).abs() < 1e-20);
    }
}
