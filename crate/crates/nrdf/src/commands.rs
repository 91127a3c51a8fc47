//! Subcommands of the `nrdf` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nrdf_core::bsms::{bsms_kernel, bsms_rd_curve};
use nrdf_core::concentration::{bound_curve, bsms_params};
use nrdf_core::probability::{DistortionSpec, MarkovSource};
use nrdf_core::simulation::{estimates_from, SimulationConfig};
use nrdf_core::solver::{distortion_range, solve_for_distortion, RdPoint, SolverConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::formats::{read_json, real, write_csv, write_json, KernelJson, SCHEMA_VERSION};
use crate::manifest::RunManifest;
use crate::parallel::simulate_parallel;
use crate::verify::{run_verify, VerifyConfig, VerifyReport};

pub const OUT_DIR_ENV: &str = "NRDF_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "nrdf", version, about = "Nonanticipative rate-distortion functions for Markov sources")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate-distortion curve of a binary symmetric Markov source.
    RdCurve(RdCurveArgs),
    /// Monte-Carlo simulation of uncoded transmission over the optimal kernel.
    Simulate(SimulateArgs),
    /// Bound on the excess-distortion probability over a log-spaced grid.
    Bound(BoundArgs),
    /// Exact small-horizon verification suite.
    Verify(VerifyArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RdCurve(_) => "rd-curve",
            Command::Simulate(_) => "simulate",
            Command::Bound(_) => "bound",
            Command::Verify(_) => "verify",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutDir {
    /// Output directory, created if missing.
    #[arg(long = "out", env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RdCurveArgs {
    /// Flip probability of the source.
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub d_min: f64,
    #[arg(long)]
    pub d_max: f64,
    /// Number of equally spaced distortions, endpoints included.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Method::ClosedForm)]
    pub method: Method,
    #[arg(long, value_enum, default_value_t = CurveFormat::Csv)]
    pub format: CurveFormat,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub p: f64,
    /// Design distortion of the reproduction kernel.
    #[arg(long)]
    pub distortion: f64,
    /// Last time index; each trial has n + 1 symbols.
    #[arg(long, value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_parser = parse_count)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-letter excess threshold; defaults to distortion + 0.01.
    #[arg(long)]
    pub d_threshold: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub distortion: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long, value_parser = parse_count)]
    pub n_min: u64,
    #[arg(long, value_parser = parse_count)]
    pub n_max: u64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Last time index of the enumerated horizon (at most 3).
    #[arg(long, default_value_t = 2)]
    pub horizon: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0.25)]
    pub p: f64,
    #[arg(long, default_value_t = 0.1)]
    pub distortion: f64,
    /// Kernel JSON to verify instead of the closed-form optimum.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Accepts plain integers and integral floats such as `1e5`.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 9_007_199_254_740_992.0 {
        Ok(v as u64)
    } else {
        Err(format!("`{s}` is not a nonnegative integer"))
    }
}

struct Run {
    manifest: RunManifest,
    dir: PathBuf,
    start: Instant,
}

impl Run {
    fn start<P: Serialize>(name: &str, argv: &[String], params: &P, seed: Option<u64>, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let parameters = serde_json::to_value(params)
            .map_err(|e| CliError::Format { what: "parameters".into(), message: e.to_string() })?;
        Ok(Run {
            manifest: RunManifest::new(name, argv.to_vec(), parameters, seed),
            dir: dir.to_path_buf(),
            start: Instant::now(),
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn output(&mut self, path: PathBuf) {
        self.manifest.outputs.push(path);
    }

    fn warn(&mut self, w: String) {
        self.manifest.warnings.push(w);
    }

    fn finish(mut self, stdout: &mut dyn Write) -> Result<()> {
        self.manifest.duration_seconds = self.start.elapsed().as_secs_f64();
        let path = self.manifest.write(&self.dir)?;
        for o in &self.manifest.outputs {
            let _ = writeln!(stdout, "wrote {}", o.display());
        }
        let _ = writeln!(stdout, "wrote {}", path.display());
        for w in &self.manifest.warnings {
            eprintln!("warning: {w}");
        }
        Ok(())
    }
}

/// Runs one parsed command. `argv` excludes the program name and is recorded
/// in the manifest for replay.
pub fn execute(command: Command, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::RdCurve(a) => rd_curve(&a, argv, stdout),
        Command::Simulate(a) => simulate(&a, argv, stdout),
        Command::Bound(a) => bound(&a, argv, stdout),
        Command::Verify(a) => verify(&a, argv, stdout),
        Command::Replay(a) => replay(&a, stdout),
    }
}

fn distortion_grid(a: &RdCurveArgs) -> Result<Vec<f64>> {
    let ok = a.d_min.is_finite() && a.d_max.is_finite() && 0.0 <= a.d_min && a.d_min <= a.d_max && a.d_max <= 1.0;
    if !ok {
        return Err(CliError::Usage(format!("need 0 <= --d-min <= --d-max <= 1, got [{}, {}]", a.d_min, a.d_max)));
    }
    match a.steps {
        0 => Err(CliError::Usage("--steps must be at least 1".into())),
        1 if a.d_min != a.d_max => Err(CliError::Usage("--steps 1 needs --d-min equal to --d-max".into())),
        1 => Ok(vec![a.d_min]),
        k => Ok((0..k)
            .map(|i| if i + 1 == k { a.d_max } else { a.d_min + (a.d_max - a.d_min) * i as f64 / (k - 1) as f64 })
            .collect()),
    }
}

fn solver_curve(p: f64, grid: &[f64]) -> Result<Vec<RdPoint>> {
    let source = MarkovSource::bsms(p)?;
    let rho = DistortionSpec::hamming(2);
    let (_, d_hi) = distortion_range(&source, &rho)?;
    let config = SolverConfig::default();
    grid.par_iter()
        .map(|&d| {
            if d >= d_hi {
                return Ok(RdPoint { distortion: d, rate_bits: 0.0, s: 0.0, iterations: 0, residual: 0.0 });
            }
            match solve_for_distortion(&source, &rho, d, &config) {
                // report the requested grid value; the solver lands within its acceptance tolerance
                Ok((pt, _)) => Ok(RdPoint { distortion: d, ..pt }),
                Err(nrdf_core::Error::Numerical(m)) => {
                    Err(CliError::NonConvergence(format!("solver failed at D = {d}: {m}")))
                }
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CurvePointJson {
    #[serde(rename = "D")]
    distortion: f64,
    rate_bits: f64,
    /// `None` for the infinite tilt of lossless points.
    s: Option<f64>,
    iterations: usize,
    residual: f64,
}

#[derive(Serialize)]
struct CurveJson {
    schema_version: u32,
    p: f64,
    method: Method,
    points: Vec<CurvePointJson>,
}

fn rd_curve(a: &RdCurveArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let grid = distortion_grid(a)?;
    MarkovSource::bsms(a.p)?;
    let mut run = Run::start("rd-curve", argv, a, None, &a.out.out)?;
    let points = match a.method {
        Method::ClosedForm => bsms_rd_curve(a.p, &grid)?,
        Method::Solver => solver_curve(a.p, &grid)?,
    };
    let flat = points.iter().filter(|pt| pt.rate_bits == 0.0).count();
    if flat > 0 {
        run.warn(format!("{flat} point(s) at or above D_max have rate 0"));
    }
    let path = match a.format {
        CurveFormat::Csv => {
            let path = run.path("rd_curve.csv");
            let rows = points.iter().map(|pt| {
                vec![real(pt.distortion), real(pt.rate_bits), real(pt.s), pt.iterations.to_string(), real(pt.residual)]
            });
            write_csv(&path, &["D", "rate_bits", "s", "iterations", "residual"], rows)?;
            path
        }
        CurveFormat::Json => {
            let path = run.path("rd_curve.json");
            let doc = CurveJson {
                schema_version: SCHEMA_VERSION,
                p: a.p,
                method: a.method,
                points: points
                    .iter()
                    .map(|pt| CurvePointJson {
                        distortion: pt.distortion,
                        rate_bits: pt.rate_bits,
                        s: pt.s.is_finite().then_some(pt.s),
                        iterations: pt.iterations,
                        residual: pt.residual,
                    })
                    .collect(),
            };
            write_json(&path, &doc)?;
            path
        }
    };
    run.output(path);
    run.finish(stdout)
}

#[derive(Serialize)]
struct EstimateJson {
    d_threshold: f64,
    empirical_prob: f64,
    wilson_interval: [f64; 2],
    excess: u64,
    trials: u64,
}

#[derive(Serialize)]
struct SimulationEcho {
    p: f64,
    distortion: f64,
    n: u64,
    trials: u64,
    d_threshold: f64,
    initial: &'static str,
}

#[derive(Serialize)]
struct ExcessJson {
    schema_version: u32,
    estimate: EstimateJson,
    mean_distortion: f64,
    config: SimulationEcho,
    seed: u64,
}

fn simulate(a: &SimulateArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let kernel = bsms_kernel(a.p, a.distortion)?.into_kernel();
    let d_threshold = a.d_threshold.unwrap_or(a.distortion + 0.01);
    let n = usize::try_from(a.n).map_err(|_| CliError::Usage(format!("--n {} is too large", a.n)))?;
    let mut config = SimulationConfig::new(
        MarkovSource::bsms(a.p)?,
        kernel,
        DistortionSpec::hamming(2),
        n,
        a.trials,
        a.seed,
        d_threshold,
    )?;
    config.record_trajectory = true;
    let mut run = Run::start("simulate", argv, a, Some(a.seed), &a.out.out)?;
    let summary = simulate_parallel(&config, &[d_threshold])?;
    let est = estimates_from(&summary, &[d_threshold])?[0];

    let traj = run.path("trajectory.csv");
    let rows = summary.mean_trajectory().into_iter().enumerate().map(|(i, v)| vec![i.to_string(), real(v)]);
    write_csv(&traj, &["step", "mean_distortion"], rows)?;
    run.output(traj);

    let excess = run.path("excess.json");
    let doc = ExcessJson {
        schema_version: SCHEMA_VERSION,
        estimate: EstimateJson {
            d_threshold,
            empirical_prob: est.empirical_prob,
            wilson_interval: [est.wilson_interval.0, est.wilson_interval.1],
            excess: est.excess,
            trials: est.trials,
        },
        mean_distortion: summary.mean_distortion(),
        config: SimulationEcho {
            p: a.p,
            distortion: a.distortion,
            n: a.n,
            trials: a.trials,
            d_threshold,
            initial: "stationary",
        },
        seed: a.seed,
    };
    write_json(&excess, &doc)?;
    run.output(excess);
    run.finish(stdout)
}

/// Log-spaced integers from `lo` to `hi` inclusive, duplicates removed.
pub fn log_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    if points <= 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut grid: Vec<u64> = (0..points)
        .map(|k| match k {
            0 => lo,
            k if k + 1 == points => hi,
            k => (a + (b - a) * k as f64 / (points - 1) as f64).exp().round() as u64,
        })
        .collect();
    grid.dedup();
    grid
}

fn bound(a: &BoundArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    if a.n_min == 0 || a.n_min > a.n_max {
        return Err(CliError::Usage(format!("need 1 <= --n-min <= --n-max, got {} and {}", a.n_min, a.n_max)));
    }
    if a.points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    let params = bsms_params(a.p, a.distortion, a.delta)?;
    let (points, skipped) = bound_curve(&params, &log_grid(a.n_min, a.n_max, a.points))?;
    if points.is_empty() {
        return Err(CliError::Usage(format!(
            "no grid point exceeds the validity threshold n > {:.6}",
            params.threshold()
        )));
    }
    let mut run = Run::start("bound", argv, a, None, &a.out.out)?;
    if !skipped.is_empty() {
        run.warn(format!(
            "{} grid point(s) at or below the threshold n > {:.6} were dropped",
            skipped.len(),
            params.threshold()
        ));
    }
    let path = run.path("bound.csv");
    write_csv(&path, &["n", "bound"], points.iter().map(|b| vec![b.n.to_string(), real(b.bound)]))?;
    run.output(path);
    run.finish(stdout)
}

fn render(report: &VerifyReport) -> String {
    let mut s = format!(
        "verification of the {} kernel, p = {}, D = {}, horizon {}\n",
        report.kernel_source, report.p, report.distortion, report.horizon
    );
    for c in &report.checks {
        s += &format!(
            "{} {:<38} deviation {:.3e} (tolerance {:.0e})  {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.deviation,
            c.tolerance,
            c.detail
        );
    }
    s += if report.passed { "all checks passed\n" } else { "verification FAILED\n" };
    s
}

fn verify(a: &VerifyArgs, argv: &[String], stdout: &mut dyn Write) -> Result<()> {
    let kernel = a.kernel.as_deref().map(read_json::<KernelJson>).transpose()?;
    let cfg = VerifyConfig { horizon: a.horizon, tolerance: a.tolerance, p: a.p, distortion: a.distortion, kernel };
    let report = run_verify(&cfg)?;
    let mut run = Run::start("verify", argv, a, None, &a.out.out)?;
    let path = run.path("verify_report.json");
    write_json(&path, &report)?;
    run.output(path);
    let text =
        if a.json { serde_json::to_string_pretty(&report).expect("report serializes") + "\n" } else { render(&report) };
    let _ = stdout.write_all(text.as_bytes());
    run.finish(stdout)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Verification(report.failures()))
    }
}

fn replay(a: &ReplayArgs, stdout: &mut dyn Write) -> Result<()> {
    let manifest = RunManifest::read(&a.manifest)?;
    let dir = match &a.out {
        Some(d) => d.clone(),
        None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    let mut argv = manifest.argv.clone();
    argv.push("--out".into());
    argv.push(dir.display().to_string());
    let bad = |message: String| CliError::Format { what: a.manifest.display().to_string(), message };
    let cli = Cli::try_parse_from(std::iter::once("nrdf".to_owned()).chain(argv.iter().cloned()))
        .map_err(|e| bad(format!("recorded argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) || cli.command.name() != manifest.subcommand {
        return Err(bad(format!("recorded argv does not run `{}`", manifest.subcommand)));
    }
    if manifest.tool_version != crate::manifest::TOOL_VERSION {
        eprintln!(
            "warning: manifest was written by version {}, replaying with {}",
            manifest.tool_version,
            crate::manifest::TOOL_VERSION
        );
    }
    execute(cli.command, &argv, stdout)
}
