//! Monte Carlo simulation of the downlink.
//!
//! Each trial drops a Poisson number of base stations uniformly in a disc
//! around the typical user, associates the user with the 2-D nearest one and
//! compares the SIR with the threshold. Only radii matter: angles do not enter
//! the distances to the user at the origin.
//!
//! Trial `i` draws from a ChaCha8 stream selected by `(seed, i)`, so an
//! estimate does not depend on how trials are scheduled across threads.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::analytic::{CpStPoint, Method, NetworkConfig};
use crate::error::{Error, Result};
use crate::pathloss::PathlossModel;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingKind {
    Rayleigh,
    Beamforming,
    Rice,
}

impl FadingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FadingKind::Rayleigh => "rayleigh",
            FadingKind::Beamforming => "beamforming",
            FadingKind::Rice => "rice",
        }
    }
}

impl fmt::Display for FadingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FadingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rayleigh" => Ok(FadingKind::Rayleigh),
            "beamforming" => Ok(FadingKind::Beamforming),
            "rice" => Ok(FadingKind::Rice),
            other => Err(Error::domain(format!("unknown fading '{other}'"))),
        }
    }
}

/// Power-gain distributions.
///
/// * rayleigh: every link ~ chi-square(2).
/// * beamforming: serving link ~ chi-square(2 N_a), interferers ~ chi-square(2).
/// * rice: every link ~ noncentral chi-square with `rice_dof` degrees of
///   freedom and noncentrality `rice_noncentrality`, not normalized, so the
///   mean power is `dof + nc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingSpec {
    pub kind: FadingKind,
    pub rice_noncentrality: f64,
    pub rice_dof: u32,
}

impl FadingSpec {
    pub fn rayleigh() -> Self {
        Self {
            kind: FadingKind::Rayleigh,
            rice_noncentrality: 0.0,
            rice_dof: 0,
        }
    }

    pub fn beamforming() -> Self {
        Self {
            kind: FadingKind::Beamforming,
            rice_noncentrality: 0.0,
            rice_dof: 0,
        }
    }

    pub fn rice(noncentrality: f64, dof: u32) -> Result<Self> {
        let spec = Self {
            kind: FadingKind::Rice,
            rice_noncentrality: noncentrality,
            rice_dof: dof,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != FadingKind::Rice {
            return Ok(());
        }
        if !(self.rice_noncentrality >= 0.0) || !self.rice_noncentrality.is_finite() {
            return Err(Error::domain(format!(
                "Rice noncentrality must be finite and nonnegative, got {}",
                self.rice_noncentrality
            )));
        }
        if self.rice_dof == 0 || self.rice_dof % 2 != 0 {
            return Err(Error::domain(format!(
                "Rice degrees of freedom must be a positive even integer, got {}",
                self.rice_dof
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowRadius {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub trials: u64,
    pub seed: u64,
    pub window_radius: WindowRadius,
    pub min_expected_bs: f64,
}

impl SimSpec {
    pub const MIN_TRIALS: u64 = 100;
    pub const DEFAULT_MIN_EXPECTED_BS: f64 = 300.0;

    pub fn new(trials: u64, seed: u64) -> Result<Self> {
        let spec = Self {
            trials,
            seed,
            window_radius: WindowRadius::Auto,
            min_expected_bs: Self::DEFAULT_MIN_EXPECTED_BS,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_window(mut self, radius: f64) -> Self {
        self.window_radius = WindowRadius::Fixed(radius);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < Self::MIN_TRIALS {
            return Err(Error::domain(format!(
                "at least {} trials are required, got {}",
                Self::MIN_TRIALS,
                self.trials
            )));
        }
        if let WindowRadius::Fixed(r) = self.window_radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::domain(format!("window radius must be positive, got {r}")));
            }
        }
        if !(self.min_expected_bs > 0.0) || !self.min_expected_bs.is_finite() {
            return Err(Error::domain(format!(
                "expected BS count must be positive, got {}",
                self.min_expected_bs
            )));
        }
        Ok(())
    }

    /// Simulation disc radius in meters.
    pub fn resolve_window(&self, model: &PathlossModel, cfg: &NetworkConfig) -> f64 {
        match self.window_radius {
            WindowRadius::Fixed(r) => r,
            WindowRadius::Auto => (self.min_expected_bs / (PI * cfg.lambda))
                .sqrt()
                .max(10.0 * model.outer_breakpoint())
                .max(100.0 * cfg.delta_h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpEstimate {
    pub mean: f64,
    pub ci_halfwidth: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Half-width of the 95% Wilson score interval.
pub fn wilson_halfwidth(successes: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Random stream for trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SIR test with the conventions for degenerate draws: no interference
/// counts as covered.
pub fn covered(desired: f64, interference: f64, tau: f64) -> bool {
    if interference == 0.0 {
        return true;
    }
    desired / interference > tau
}

struct Gains {
    desired: Gamma<f64>,
    interferer: Exp<f64>,
    rice: Option<(f64, Option<ChiSquared<f64>>)>,
}

impl Gains {
    fn new(fading: &FadingSpec, n_antennas: u32) -> Result<Self> {
        fading.validate()?;
        let shape = match fading.kind {
            FadingKind::Beamforming => n_antennas as f64,
            _ => 1.0,
        };
        let desired = Gamma::new(shape, 2.0)
            .map_err(|e| Error::domain(format!("desired-gain distribution: {e}")))?;
        let interferer =
            Exp::new(0.5).map_err(|e| Error::domain(format!("interferer-gain distribution: {e}")))?;
        let rice = if fading.kind == FadingKind::Rice {
            let rest = match fading.rice_dof - 1 {
                0 => None,
                k => Some(
                    ChiSquared::new(k as f64)
                        .map_err(|e| Error::domain(format!("Rice distribution: {e}")))?,
                ),
            };
            Some((fading.rice_noncentrality.sqrt(), rest))
        } else {
            None
        };
        Ok(Self {
            desired,
            interferer,
            rice,
        })
    }

    fn rice_sample<R: Rng>(shift: f64, rest: &Option<ChiSquared<f64>>, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let tail = rest.as_ref().map_or(0.0, |c| c.sample(rng));
        (z + shift) * (z + shift) + tail
    }

    fn desired<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.rice {
            Some((shift, rest)) => Self::rice_sample(*shift, rest, rng),
            None => self.desired.sample(rng),
        }
    }

    fn interferer<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.rice {
            Some((shift, rest)) => Self::rice_sample(*shift, rest, rng),
            None => self.interferer.sample(rng),
        }
    }
}

fn run_trial<R: Rng>(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    gains: &Gains,
    window: f64,
    gain_scale: f64,
    rng: &mut R,
) -> bool {
    let mean = cfg.lambda * PI * window * window;
    let count = match Poisson::new(mean) {
        Ok(p) => p.sample(rng) as usize,
        Err(_) => return false,
    };
    if count == 0 {
        return false;
    }
    let w2 = window * window;
    let r2: Vec<f64> = (0..count).map(|_| w2 * rng.random::<f64>()).collect();
    let serving = r2
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v < r2[best] { i } else { best });
    let dh2 = cfg.delta_h * cfg.delta_h;
    let link = |i: usize| {
        let d = (r2[i] + dh2).sqrt();
        cfg.power * model.gain_unchecked(d)
    };
    let desired = gain_scale * gains.desired(rng) * link(serving);
    let mut interference = 0.0;
    for i in (0..count).filter(|i| *i != serving) {
        interference += gain_scale * gains.interferer(rng) * link(i);
    }
    covered(desired, interference, cfg.tau)
}

/// One trial: whether the typical user is covered. A draw with no BS in the
/// window is a coverage failure.
pub fn simulate_trial<R: Rng>(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    fading: &FadingSpec,
    window: f64,
    rng: &mut R,
) -> Result<bool> {
    simulate_trial_scaled(model, cfg, fading, window, 1.0, rng)
}

/// [`simulate_trial`] with every fading power gain multiplied by `gain_scale`.
pub fn simulate_trial_scaled<R: Rng>(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    fading: &FadingSpec,
    window: f64,
    gain_scale: f64,
    rng: &mut R,
) -> Result<bool> {
    cfg.validate()?;
    let gains = Gains::new(fading, cfg.n_antennas)?;
    Ok(run_trial(model, cfg, &gains, window, gain_scale, rng))
}

/// Fraction of covered trials with its Wilson 95% half-width. Runs on the
/// current rayon pool.
pub fn estimate_cp(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    fading: &FadingSpec,
    sim: &SimSpec,
) -> Result<CpEstimate> {
    cfg.validate()?;
    sim.validate()?;
    let gains = Gains::new(fading, cfg.n_antennas)?;
    let window = sim.resolve_window(model, cfg);
    let successes = (0..sim.trials)
        .into_par_iter()
        .filter(|i| {
            let mut rng = trial_rng(sim.seed, *i);
            run_trial(model, cfg, &gains, window, 1.0, &mut rng)
        })
        .count() as u64;
    Ok(CpEstimate {
        mean: successes as f64 / sim.trials as f64,
        ci_halfwidth: wilson_halfwidth(successes, sim.trials),
        trials: sim.trials,
        seed: sim.seed,
    })
}

pub fn estimate_st(
    model: &PathlossModel,
    cfg: &NetworkConfig,
    fading: &FadingSpec,
    sim: &SimSpec,
) -> Result<CpStPoint> {
    let est = estimate_cp(model, cfg, fading, sim)?;
    Ok(CpStPoint::new(cfg.lambda, est.mean, cfg.tau, Method::MonteCarlo))
}
