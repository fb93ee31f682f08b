//! Command-line front end.
//!
//! User-facing units are BS/km^2, dB and dBm; everything is converted to SI
//! once, in [`NetworkArgs::config`]. Results are CSV on stdout or, with
//! `--out`, written to a temporary sibling file and renamed into place.
//!
//! A `--config FILE` holds `key = value` lines using the long flag names;
//! any flag also given on the command line wins.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analytic::{self, NetworkConfig};
use crate::density::{self, CriticalDensityResult};
use crate::error::{Error, Result};
use crate::montecarlo::{self, FadingSpec, SimSpec};
use crate::pathloss::PathlossModel;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATE: i32 = 4;

pub const CSV_HEADER: &str = "lambda_per_km2,delta_h_m,n_antennas,tau_db,method,cp,cp_ci,st_bps_hz_km2";
pub const CRITICAL_HEADER: &str =
    "source,feasible,lambda_unconstrained_per_km2,lambda_constrained_per_km2,binding,fold";
pub const VALIDATE_HEADER: &str = "model,lambda_per_km2,n_antennas,analytic_cp,mc_cp,mc_ci,within_3ci";

/// Per-km^2 to per-m^2.
pub fn per_km2_to_per_m2(x: f64) -> f64 {
    x / 1e6
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Parser, Debug)]
#[command(name = "udn", version, about = "Coverage, throughput and critical density of dense small-cell downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate CP and ST at one operating point.
    Eval(EvalArgs),
    /// Sweep one parameter and emit one row per grid point and method.
    Sweep(SweepArgs),
    /// Critical density, closed form for sspm/dspm and numeric otherwise.
    Critical(CriticalArgs),
    /// Monte Carlo CP estimate with a 95% Wilson interval.
    Simulate(SimulateArgs),
    /// Compare exact beamforming CP with Monte Carlo on the reference grid.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Sspm,
    Dspm,
    Mspm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    #[value(name = "siso_exact")]
    SisoExact,
    #[value(name = "miso_exact")]
    MisoExact,
    #[value(name = "miso_approx")]
    MisoApprox,
    #[value(name = "bounds")]
    Bounds,
    #[value(name = "monte_carlo")]
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FadingArg {
    Rayleigh,
    Beamforming,
    Rice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Axis {
    #[value(name = "lambda")]
    Lambda,
    #[value(name = "delta_h")]
    DeltaH,
    #[value(name = "n_antennas")]
    NAntennas,
}

#[derive(Args, Debug, Clone)]
struct NetworkArgs {
    /// Pathloss family.
    #[arg(long, value_enum, default_value = "sspm")]
    model: ModelKind,
    /// Pathloss exponents, innermost first.
    #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
    alpha: Vec<f64>,
    /// Corner distance of the dual-slope model, meters.
    #[arg(long)]
    r1: Option<f64>,
    /// Breakpoints of the multi-slope model, meters.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    breakpoints: Vec<f64>,
    /// BS density, BS per km^2.
    #[arg(long = "lambda-per-km2")]
    lambda_per_km2: Option<f64>,
    /// Antenna-height difference, meters.
    #[arg(long = "delta-h", default_value_t = 0.0)]
    delta_h: f64,
    /// SIR threshold, dB.
    #[arg(long = "tau-db", default_value_t = 10.0, allow_negative_numbers = true)]
    tau_db: f64,
    /// Transmit antennas per BS.
    #[arg(long, default_value_t = 1)]
    na: u32,
    /// Transmit power, dBm.
    #[arg(long = "power-dbm", default_value_t = 23.0, allow_negative_numbers = true)]
    power_dbm: f64,
    /// Coverage requirement in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key = value` file supplying default flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct MonteCarloArgs {
    #[arg(long, default_value_t = 40_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fading for Monte Carlo trials.
    #[arg(long, value_enum, default_value = "beamforming")]
    fading: FadingArg,
    #[arg(long = "rice-nc", default_value_t = 1.0)]
    rice_nc: f64,
    #[arg(long = "rice-dof", default_value_t = 12)]
    rice_dof: u32,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Methods to evaluate.
    #[arg(long, value_enum, num_args = 1.., value_delimiter = ',', required = true)]
    method: Vec<MethodArg>,
    #[command(flatten)]
    mc: MonteCarloArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("grid_spec").required(true).args(["log", "linear", "grid"])))]
struct SweepArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long, value_enum, num_args = 1.., value_delimiter = ',', required = true)]
    method: Vec<MethodArg>,
    /// Swept parameter; lambda is in BS per km^2.
    #[arg(long, value_enum, default_value = "lambda")]
    axis: Axis,
    /// Log-spaced grid: START STOP POINTS.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "POINTS"])]
    log: Option<Vec<f64>>,
    /// Linearly spaced grid: START STOP POINTS.
    #[arg(long, num_args = 3, value_names = ["START", "STOP", "POINTS"])]
    linear: Option<Vec<f64>>,
    /// Explicit grid values.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[command(flatten)]
    mc: MonteCarloArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct CriticalArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Report both the closed form and the numeric search.
    #[arg(long = "cross-check")]
    cross_check: bool,
    /// Numeric search on the exact beamforming CP instead of the approximation.
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    mc: MonteCarloArgs,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value_t = 40_000)]
    trials: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    common: CommonArgs,
}

impl NetworkArgs {
    fn model(&self) -> Result<PathlossModel> {
        match self.model {
            ModelKind::Sspm => {
                if self.alpha.len() != 1 {
                    return Err(Error::model(format!(
                        "sspm takes one exponent, got {}",
                        self.alpha.len()
                    )));
                }
                PathlossModel::single_slope(self.alpha[0])
            }
            ModelKind::Dspm => {
                if self.alpha.len() != 2 {
                    return Err(Error::model(format!(
                        "dspm takes two exponents, got {}",
                        self.alpha.len()
                    )));
                }
                let r1 = match (self.r1, self.breakpoints.as_slice()) {
                    (Some(r), _) => r,
                    (None, [r]) => *r,
                    _ => return Err(Error::model("dspm needs --r1")),
                };
                PathlossModel::dual_slope(self.alpha[0], self.alpha[1], r1)
            }
            ModelKind::Mspm => PathlossModel::new(self.alpha.clone(), self.breakpoints.clone()),
        }
    }

    fn config(&self, lambda_per_km2: Option<f64>) -> Result<NetworkConfig> {
        let lambda = lambda_per_km2
            .or(self.lambda_per_km2)
            .ok_or_else(|| Error::domain("--lambda-per-km2 is required"))?;
        NetworkConfig::new(
            per_km2_to_per_m2(lambda),
            self.delta_h,
            dbm_to_watts(self.power_dbm),
            db_to_linear(self.tau_db),
            self.na,
            self.eps,
        )
    }
}

impl MonteCarloArgs {
    fn fading(&self) -> Result<FadingSpec> {
        match self.fading {
            FadingArg::Rayleigh => Ok(FadingSpec::rayleigh()),
            FadingArg::Beamforming => Ok(FadingSpec::beamforming()),
            FadingArg::Rice => FadingSpec::rice(self.rice_nc, self.rice_dof),
        }
    }

    fn sim(&self) -> Result<SimSpec> {
        SimSpec::new(self.trials, self.seed)
    }
}

/// One line of the CP/ST table. Densities per km^2, throughput in
/// bits/(s Hz km^2).
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub lambda_per_km2: f64,
    pub delta_h_m: f64,
    pub n_antennas: u32,
    pub tau_db: f64,
    pub method: String,
    pub cp: f64,
    pub cp_ci: Option<f64>,
    pub st_bps_hz_km2: f64,
}

impl CsvRow {
    pub fn new(
        lambda_per_km2: f64,
        delta_h_m: f64,
        n_antennas: u32,
        tau_db: f64,
        method: &str,
        cp: f64,
        cp_ci: Option<f64>,
    ) -> Self {
        let st = lambda_per_km2 * cp * (1.0 + db_to_linear(tau_db)).log2();
        Self {
            lambda_per_km2,
            delta_h_m,
            n_antennas,
            tau_db,
            method: method.to_string(),
            cp,
            cp_ci,
            st_bps_hz_km2: st,
        }
    }
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros dropped,
/// scientific notation outside `[1e-4, 1e9)`.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_fraction(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_fraction(mantissa), sign, exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn emit_csv(rows: &[CsvRow], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            format_sig(r.lambda_per_km2),
            format_sig(r.delta_h_m),
            r.n_antennas,
            format_sig(r.tau_db),
            r.method,
            format_sig(r.cp),
            r.cp_ci.map(format_sig).unwrap_or_default(),
            format_sig(r.st_bps_hz_km2),
        )?;
    }
    Ok(())
}

/// Inverse of [`emit_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::domain(format!("unexpected CSV header {other:?}")));
        }
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::domain(format!("bad number '{s}'")))
    };
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::domain(format!("expected 8 fields in '{line}'")));
            }
            Ok(CsvRow {
                lambda_per_km2: num(f[0])?,
                delta_h_m: num(f[1])?,
                n_antennas: f[2]
                    .parse()
                    .map_err(|_| Error::domain(format!("bad antenna count '{}'", f[2])))?,
                tau_db: num(f[3])?,
                method: f[4].to_string(),
                cp: num(f[5])?,
                cp_ci: if f[6].is_empty() { None } else { Some(num(f[6])?) },
                st_bps_hz_km2: num(f[7])?,
            })
        })
        .collect()
}

/// Build a grid from `--log`, `--linear` or `--grid` values.
pub fn build_grid(log: Option<&[f64]>, linear: Option<&[f64]>, explicit: Option<&[f64]>) -> Result<Vec<f64>> {
    let spaced = |v: &[f64], logarithmic: bool| -> Result<Vec<f64>> {
        let (start, stop, points) = (v[0], v[1], v[2]);
        if points.fract() != 0.0 || points < 2.0 {
            return Err(Error::domain(format!(
                "grid needs an integer number of points >= 2, got {points}"
            )));
        }
        if logarithmic && !(start > 0.0 && stop > 0.0) {
            return Err(Error::domain("log grid bounds must be positive"));
        }
        let n = points as usize;
        Ok((0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if logarithmic {
                    10f64.powf(start.log10() + t * (stop.log10() - start.log10()))
                } else {
                    start + t * (stop - start)
                }
            })
            .collect())
    };
    let grid = match (log, linear, explicit) {
        (Some(v), None, None) => spaced(v, true)?,
        (None, Some(v), None) => spaced(v, false)?,
        (None, None, Some(v)) => v.to_vec(),
        _ => return Err(Error::domain("give exactly one of --log, --linear, --grid")),
    };
    if grid.len() < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain(format!("grid must be strictly increasing, got {grid:?}")));
    }
    Ok(grid)
}

fn method_rows(
    model: &PathlossModel,
    net: &NetworkArgs,
    cfg: &NetworkConfig,
    method: MethodArg,
    mc: Option<&MonteCarloArgs>,
) -> Result<Vec<CsvRow>> {
    let lambda_km2 = cfg.lambda * 1e6;
    let row = |name: &str, cp: f64, ci: Option<f64>| {
        CsvRow::new(lambda_km2, cfg.delta_h, cfg.n_antennas, net.tau_db, name, cp, ci)
    };
    Ok(match method {
        MethodArg::SisoExact => vec![row("siso_exact", analytic::cp_siso(model, cfg)?, None)],
        MethodArg::MisoExact => vec![row("miso_exact", analytic::cp_miso_exact(model, cfg)?, None)],
        MethodArg::MisoApprox => vec![row("miso_approx", analytic::cp_miso_approx(model, cfg)?, None)],
        MethodArg::Bounds => vec![
            row("siso_lower_bound", analytic::cp_siso_lower_bound(model, cfg)?, None),
            row("siso_upper_bound", analytic::cp_siso_upper_bound(model, cfg)?, None),
        ],
        MethodArg::MonteCarlo => {
            let mc = mc.ok_or_else(|| Error::domain("monte_carlo needs simulation settings"))?;
            let est = montecarlo::estimate_cp(model, cfg, &mc.fading()?, &mc.sim()?)?;
            vec![row("monte_carlo", est.mean, Some(est.ci_halfwidth))]
        }
    })
}

fn eval(args: &EvalArgs) -> Result<Vec<CsvRow>> {
    let model = args.network.model()?;
    let cfg = args.network.config(None)?;
    let mut rows = Vec::new();
    for m in &args.method {
        rows.extend(method_rows(&model, &args.network, &cfg, *m, Some(&args.mc))?);
    }
    Ok(rows)
}

fn sweep(args: &SweepArgs) -> Result<Vec<CsvRow>> {
    let model = args.network.model()?;
    let grid = build_grid(args.log.as_deref(), args.linear.as_deref(), args.grid.as_deref())?;
    let configs: Vec<NetworkConfig> = grid
        .iter()
        .map(|x| match args.axis {
            Axis::Lambda => args.network.config(Some(*x)),
            Axis::DeltaH => {
                let mut net = args.network.clone();
                net.delta_h = *x;
                net.config(None)
            }
            Axis::NAntennas => {
                if *x < 1.0 || x.fract() != 0.0 || *x > u32::MAX as f64 {
                    return Err(Error::domain(format!(
                        "antenna grid values must be positive integers, got {x}"
                    )));
                }
                let mut net = args.network.clone();
                net.na = *x as u32;
                net.config(None)
            }
        })
        .collect::<Result<_>>()?;
    let per_point: Vec<Vec<CsvRow>> = configs
        .par_iter()
        .map(|cfg| {
            let mut rows = Vec::new();
            for m in &args.method {
                rows.extend(method_rows(&model, &args.network, cfg, *m, Some(&args.mc))?);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

fn simulate(args: &SimulateArgs) -> Result<Vec<CsvRow>> {
    let model = args.network.model()?;
    let cfg = args.network.config(None)?;
    method_rows(&model, &args.network, &cfg, MethodArg::MonteCarlo, Some(&args.mc))
}

fn critical_line(source: &str, r: &CriticalDensityResult) -> String {
    let km2 = |x: Option<f64>| x.map(|v| format_sig(v * 1e6)).unwrap_or_default();
    format!(
        "{source},{},{},{},{},{}",
        r.feasible,
        km2(r.lambda_unconstrained),
        km2(r.lambda_constrained),
        r.binding.map(|b| b.as_str()).unwrap_or(""),
        r.fold().map(format_sig).unwrap_or_default()
    )
}

fn critical(args: &CriticalArgs) -> Result<Vec<String>> {
    let net = &args.network;
    let model = net.model()?;
    // Density is irrelevant here; any valid placeholder passes validation.
    let cfg = net.config(Some(net.lambda_per_km2.unwrap_or(1.0)))?;
    let closed = match net.model {
        ModelKind::Sspm => Some(density::critical_density_sspm(net.alpha[0], &cfg)?),
        ModelKind::Dspm => Some(density::critical_density_dspm(
            model.exponent(0),
            model.exponent(1),
            model.breakpoints()[0],
            &cfg,
        )?),
        ModelKind::Mspm => None,
    };
    let mut lines = vec![CRITICAL_HEADER.to_string()];
    if let Some(r) = &closed {
        lines.push(critical_line("closed_form", r));
    }
    if closed.is_none() || args.cross_check {
        let r = density::critical_density_numeric(&model, &cfg, args.exact)?;
        lines.push(critical_line("numeric", &r));
    }
    Ok(lines)
}

/// One cell of the analytic-versus-simulation agreement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCell {
    pub model: &'static str,
    pub lambda: f64,
    pub n_antennas: u32,
    pub analytic: f64,
    pub estimate: montecarlo::CpEstimate,
}

impl ValidationCell {
    pub fn within(&self, halfwidths: f64) -> bool {
        (self.estimate.mean - self.analytic).abs() <= halfwidths * self.estimate.ci_halfwidth
    }
}

pub const VALIDATION_LAMBDAS: [f64; 3] = [1e-5, 1e-4, 1e-3];
pub const VALIDATION_ANTENNAS: [u32; 3] = [1, 4, 16];

/// Reference grid: sspm(4) and dspm(2.5, 4, 10 m), tau = 10 dB, dh = 2 m,
/// beamforming fading, exact beamforming CP as the analytic value.
pub fn validation_grid(trials: u64, seed: u64) -> Result<Vec<ValidationCell>> {
    let models = [
        ("sspm", PathlossModel::single_slope(4.0)?),
        ("dspm", PathlossModel::dual_slope(2.5, 4.0, 10.0)?),
    ];
    let mut cells = Vec::new();
    let mut index = 0u64;
    for (name, model) in &models {
        for lambda in VALIDATION_LAMBDAS {
            for na in VALIDATION_ANTENNAS {
                let cfg = NetworkConfig::new(lambda, 2.0, dbm_to_watts(23.0), 10.0, na, 0.0)?;
                let sim = SimSpec::new(trials, seed.wrapping_add(index))?;
                index += 1;
                cells.push(ValidationCell {
                    model: name,
                    lambda,
                    n_antennas: na,
                    analytic: analytic::cp_miso_exact(model, &cfg)?,
                    estimate: montecarlo::estimate_cp(model, &cfg, &FadingSpec::beamforming(), &sim)?,
                });
            }
        }
    }
    Ok(cells)
}

/// Cells per model that must agree within three half-widths.
pub const VALIDATION_REQUIRED: usize = 8;

fn validate(args: &ValidateArgs) -> Result<(Vec<String>, String, bool)> {
    let cells = validation_grid(args.trials, args.seed)?;
    let mut lines = vec![VALIDATE_HEADER.to_string()];
    for c in &cells {
        lines.push(format!(
            "{},{},{},{},{},{},{}",
            c.model,
            format_sig(c.lambda * 1e6),
            c.n_antennas,
            format_sig(c.analytic),
            format_sig(c.estimate.mean),
            format_sig(c.estimate.ci_halfwidth),
            c.within(3.0)
        ));
    }
    let mut ok = true;
    let mut summary = String::new();
    for name in ["sspm", "dspm"] {
        let passed = cells.iter().filter(|c| c.model == name && c.within(3.0)).count();
        let total = cells.iter().filter(|c| c.model == name).count();
        summary += &format!("{name}: {passed}/{total} cells within 3 half-widths\n");
        ok &= passed >= VALIDATION_REQUIRED;
    }
    Ok((lines, summary, ok))
}

fn write_output(text: &str, out_path: Option<&Path>, out: &mut dyn Write) -> io::Result<()> {
    match out_path {
        None => out.write_all(text.as_bytes()),
        Some(path) => {
            let name = path
                .file_name()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
            let tmp = path.with_file_name(format!(
                ".{}.{}.tmp",
                name.to_string_lossy(),
                std::process::id()
            ));
            fs::write(&tmp, text)?;
            fs::rename(&tmp, path).inspect_err(|_| {
                let _ = fs::remove_file(&tmp);
            })
        }
    }
}

/// Parse a `key = value` config file into flag tokens, skipping keys already
/// present in `argv`.
pub fn config_tokens(text: &str, argv: &[String]) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::domain(format!("config line {}: expected key = value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::domain(format!("config line {}: empty key", n + 1)));
        }
        let flag = format!("--{key}");
        let given = argv
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given || key == "config" {
            continue;
        }
        let value = value.trim();
        match value {
            "true" => tokens.push(flag),
            "false" => {}
            _ => {
                tokens.push(flag);
                tokens.extend(
                    value
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string),
                );
            }
        }
    }
    Ok(tokens)
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

enum Outcome {
    Text(String),
    Validate(String, String, bool),
}

fn execute(command: &Command) -> Result<Outcome> {
    let csv = |rows: Vec<CsvRow>| {
        let mut buf = Vec::new();
        emit_csv(&rows, &mut buf).expect("writing to memory cannot fail");
        Outcome::Text(String::from_utf8(buf).expect("CSV is UTF-8"))
    };
    let lines = |l: Vec<String>| l.into_iter().map(|s| s + "\n").collect::<String>();
    Ok(match command {
        Command::Eval(a) => csv(eval(a)?),
        Command::Sweep(a) => csv(sweep(a)?),
        Command::Simulate(a) => csv(simulate(a)?),
        Command::Critical(a) => Outcome::Text(lines(critical(a)?)),
        Command::Validate(a) => {
            let (l, summary, ok) = validate(a)?;
            Outcome::Validate(lines(l), summary, ok)
        }
    })
}

fn common(command: &Command) -> &CommonArgs {
    match command {
        Command::Eval(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Critical(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Validate(a) => &a.common,
    }
}

/// Run the CLI on `argv` (program name first) and return the exit code.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut args = argv.to_vec();
    if let Some(path) = config_path(argv) {
        let extra = fs::read_to_string(&path)
            .map_err(|e| Error::domain(format!("cannot read config {path}: {e}")))
            .and_then(|text| config_tokens(&text, argv));
        match extra {
            Ok(tokens) => args.extend(tokens),
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                return EXIT_INPUT;
            }
        }
    }

    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_INPUT
                }
            };
        }
    };

    let opts = common(&cli.command).clone();
    let result = match opts.threads {
        Some(0) => Err(Error::domain("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| execute(&cli.command))),
        None => execute(&cli.command),
    };

    let (text, code) = match result {
        Ok(Outcome::Text(t)) => (t, EXIT_OK),
        Ok(Outcome::Validate(t, summary, ok)) => {
            let _ = err.write_all(summary.as_bytes());
            (t, if ok { EXIT_OK } else { EXIT_VALIDATE })
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_output(&text, opts.out.as_deref(), out) {
        let _ = writeln!(err, "error: cannot write output: {e}");
        return EXIT_INPUT;
    }
    code
}
