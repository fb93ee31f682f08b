//! Multi-slope pathloss: a piecewise power law in link distance whose
//! amplitudes are chosen so the gain is continuous at every breakpoint.
//!
//! Segment `n` covers `R_n <= x < R_{n+1}` with gain `K_n x^(-alpha_n)`,
//! `R_0 = 0`, `R_N = inf`, `K_0 = 1` and
//! `K_n = prod_{i=1..n} R_i^(alpha_i - alpha_{i-1})`.

use crate::error::{Error, Result};

/// Speed of light used by the two-ray corner distance, in m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;

#[derive(Debug, Clone, PartialEq)]
pub struct PathlossModel {
    exponents: Vec<f64>,
    breakpoints: Vec<f64>,
    // ln K_n, accumulated as sum (alpha_i - alpha_{i-1}) ln R_i.
    log_amplitudes: Vec<f64>,
}

impl PathlossModel {
    /// Build a model from `N` exponents and `N - 1` breakpoints (meters).
    pub fn new(exponents: Vec<f64>, breakpoints: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::model("at least one pathloss exponent is required"));
        }
        if exponents.len() != breakpoints.len() + 1 {
            return Err(Error::model(format!(
                "expected {} breakpoints for {} exponents, got {}",
                exponents.len() - 1,
                exponents.len(),
                breakpoints.len()
            )));
        }
        if let Some(a) = exponents.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::model(format!(
                "exponents must be finite and nonnegative, got {a}"
            )));
        }
        if exponents.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::model(format!(
                "exponents must be nondecreasing, got {exponents:?}"
            )));
        }
        let last = *exponents.last().unwrap();
        if !(last > 2.0) {
            return Err(Error::model(format!(
                "the outermost exponent must exceed 2, got {last}"
            )));
        }
        if let Some(r) = breakpoints.iter().find(|r| !r.is_finite() || **r <= 0.0) {
            return Err(Error::model(format!(
                "breakpoints must be finite and positive, got {r}"
            )));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::model(format!(
                "breakpoints must be strictly increasing, got {breakpoints:?}"
            )));
        }

        let mut log_amplitudes = Vec::with_capacity(exponents.len());
        log_amplitudes.push(0.0);
        for (i, r) in breakpoints.iter().enumerate() {
            let prev = log_amplitudes[i];
            log_amplitudes.push(prev + (exponents[i + 1] - exponents[i]) * r.ln());
        }
        Ok(Self {
            exponents,
            breakpoints,
            log_amplitudes,
        })
    }

    /// Single-slope model `x^(-alpha)`.
    pub fn single_slope(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha], vec![])
    }

    /// Dual-slope model with corner distance `r1`.
    pub fn dual_slope(alpha0: f64, alpha1: f64, r1: f64) -> Result<Self> {
        Self::new(vec![alpha0, alpha1], vec![r1])
    }

    /// Number of slopes `N`.
    pub fn slopes(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn exponent(&self, n: usize) -> f64 {
        self.exponents[n]
    }

    pub fn log_amplitude(&self, n: usize) -> f64 {
        self.log_amplitudes[n]
    }

    pub fn amplitude(&self, n: usize) -> f64 {
        self.log_amplitudes[n].exp()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.log_amplitudes.iter().map(|l| l.exp()).collect()
    }

    /// `alpha_{N-1}`.
    pub fn outer_exponent(&self) -> f64 {
        *self.exponents.last().unwrap()
    }

    /// `R_{N-1}`, or 0 for a single-slope model.
    pub fn outer_breakpoint(&self) -> f64 {
        self.breakpoints.last().copied().unwrap_or(0.0)
    }

    /// Lower edge `R_n` of segment `n`.
    pub fn segment_start(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.breakpoints[n - 1]
        }
    }

    /// Upper edge `R_{n+1}` of segment `n` (infinite for the last one).
    pub fn segment_end(&self, n: usize) -> f64 {
        self.breakpoints.get(n).copied().unwrap_or(f64::INFINITY)
    }

    /// Index `n` with `R_n <= x < R_{n+1}`.
    pub fn segment(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|r| *r <= x)
    }

    /// `l_N(x)`.
    pub fn gain(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!(
                "pathloss distance must be positive, got {x}"
            )));
        }
        Ok(self.gain_unchecked(x))
    }

    /// `l_N(x)` without validating `x > 0`.
    #[inline]
    pub fn gain_unchecked(&self, x: f64) -> f64 {
        let n = self.segment(x);
        self.segment_gain(n, x)
    }

    /// `K_n x^(-alpha_n)` evaluated on segment `n` regardless of where `x` lies.
    #[inline]
    pub fn segment_gain(&self, n: usize, x: f64) -> f64 {
        if n == 0 {
            x.powf(-self.exponents[0])
        } else {
            (self.log_amplitudes[n] - self.exponents[n] * x.ln()).exp()
        }
    }
}

/// Two-ray corner distance `4 h_t h_r f_c / c` in meters.
pub fn corner_distance(h_t: f64, h_r: f64, f_c: f64) -> Result<f64> {
    if !(h_t >= 0.0) || !(h_r >= 0.0) || !h_t.is_finite() || !h_r.is_finite() {
        return Err(Error::domain(format!(
            "antenna heights must be finite and nonnegative, got {h_t}, {h_r}"
        )));
    }
    if !(f_c > 0.0) || !f_c.is_finite() {
        return Err(Error::domain(format!(
            "carrier frequency must be positive, got {f_c}"
        )));
    }
    Ok(4.0 * h_t * h_r * f_c / SPEED_OF_LIGHT)
}
