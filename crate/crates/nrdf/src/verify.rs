//! Exact-enumeration verification suite for a memory-one reproduction
//! kernel driven by a binary symmetric Markov source.

use nrdf_core::bsms::{bsms_kernel, bsms_rate};
use nrdf_core::classical::{block_rdf, BlockConfig, BlockInstance};
use nrdf_core::probability::*;
use nrdf_core::solver::{pair_distortion, solve_for_distortion, SolverConfig};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::formats::{KernelJson, SCHEMA_VERSION};

pub const MAX_HORIZON: usize = 3;
/// Slack of the classical-versus-nonanticipative comparison.
pub const SANDWICH_SLACK: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub horizon: usize,
    pub tolerance: f64,
    pub p: f64,
    pub distortion: f64,
    /// Kernel under test; the closed-form optimum when absent.
    pub kernel: Option<KernelJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub deviation: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub horizon: usize,
    pub p: f64,
    pub distortion: f64,
    pub kernel_source: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)).collect()
    }
}

fn check(name: &'static str, deviation: f64, tolerance: f64, detail: String) -> Check {
    Check { name, passed: deviation <= tolerance, deviation, tolerance, detail }
}

fn names(joint: &JointMeasure, family: &str, horizon: usize) -> Result<Vec<usize>> {
    let n: Vec<String> = (0..=horizon).map(|i| format!("{family}{i}")).collect();
    Ok(joint.axes_named(&n)?)
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if cfg.horizon > MAX_HORIZON {
        return Err(CliError::Usage(format!("--horizon must be at most {MAX_HORIZON}")));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(CliError::Usage("--tolerance must be positive".into()));
    }
    let source = MarkovSource::bsms(cfg.p)?;
    let tol = cfg.tolerance;
    let n = cfg.horizon;
    let mut checks = Vec::new();
    let report = |checks: Vec<Check>, kernel_source| {
        let passed = checks.iter().all(|c| c.passed);
        VerifyReport {
            schema_version: SCHEMA_VERSION,
            horizon: n,
            p: cfg.p,
            distortion: cfg.distortion,
            kernel_source,
            passed,
            checks,
        }
    };

    let (kernel, kernel_source) = match &cfg.kernel {
        Some(file) => {
            let defects = file.row_defects();
            if let Some(&(row, sum)) = defects.first() {
                let worst = defects.iter().map(|&(_, s)| (s - 1.0).abs()).fold(0.0, f64::max);
                checks.push(Check {
                    name: "normalization",
                    passed: false,
                    deviation: worst,
                    tolerance: crate::formats::ROW_TOL,
                    detail: format!("{} row(s) are not probability vectors; row {row} sums to {sum}", defects.len()),
                });
                return Ok(report(checks, "file"));
            }
            (file.to_kernel()?, "file")
        }
        None => (bsms_kernel(cfg.p, cfg.distortion)?.into_kernel(), "closed-form"),
    };
    if kernel.input_sizes() != [2, 2] || kernel.cols() != 2 {
        return Err(CliError::Core(nrdf_core::Error::Composition(
            "kernel must map (x_i, y_{i-1}) in {0,1}^2 to y_i in {0,1}".into(),
        )));
    }
    checks.push(check("normalization", kernel.max_row_defect(), crate::formats::ROW_TOL, "all rows sum to one".into()));

    // source -> reproduction kernel, prehistory averaged into time 0
    let direct = build_joint(&CascadeSystem::memory_one(source.clone(), &kernel, n, Prehistory::Hidden)?)?;
    let xs = names(&direct, "X", n)?;
    let ys = names(&direct, "Y", n)?;

    let st = nonanticipation_statements(&direct, &xs, &ys, tol)?;
    let worst = st.statements.iter().map(|s| s.max_violation).fold(0.0, f64::max);
    let all_hold = st.statements.iter().all(|s| s.holds);
    checks.push(Check {
        name: "nonanticipation-statements",
        passed: all_hold && st.agree(),
        deviation: worst,
        tolerance: tol,
        detail: format!("statements hold: {:?}", st.statements.iter().map(|s| s.holds).collect::<Vec<_>>()),
    });

    let di = directed_information(&direct, &xs, &ys)?;
    let mi = mutual_information(&direct, &xs, &ys)?;
    checks.push(check(
        "directed-equals-mutual",
        (di - mi).abs(),
        tol,
        format!("I(X->Y) = {di:.15}, I(X;Y) = {mi:.15} bits"),
    ));

    // classical block optimum never exceeds the rate the kernel spends
    let pi = stationary_distribution(&pair_chain(&source, &kernel)?).or_else(|e| match e {
        nrdf_core::Error::NonUniqueStationary(d) => Ok(d),
        e => Err(e),
    })?;
    let d_kernel = pair_distortion(&pi, &DistortionSpec::hamming(2));
    let per_letter = di / (n + 1) as f64;
    let inst = BlockInstance::new(&source, &DistortionSpec::hamming(2), n)?;
    let (d_lo, _) = inst.distortion_range();
    if d_kernel > d_lo {
        let block = block_rdf(&inst, d_kernel, &BlockConfig::default())?;
        checks.push(check(
            "classical-below-nonanticipative",
            (block.rate_bits_per_letter - per_letter).max(0.0),
            SANDWICH_SLACK,
            format!(
                "R_0,n(D) = {:.12} <= I(X->Y)/(n+1) = {per_letter:.12} bits at D = {d_kernel:.12}",
                block.rate_bits_per_letter
            ),
        ));
    }

    // identity encoder, kernel as channel, identity decoder
    let cascade = build_joint(&CascadeSystem::uncoded(source.clone(), &kernel, n, Prehistory::Hidden)?)?;
    let cx = names(&cascade, "X", n)?;
    let cb = names(&cascade, "B", n)?;
    let cy = names(&cascade, "Y", n)?;
    let to_y = directed_information(&cascade, &cx, &cy)?;
    let to_b = directed_information(&cascade, &cx, &cb)?;
    checks.push(check(
        "data-processing",
        (to_y - to_b).max(0.0),
        tol,
        format!("I(X->Y) = {to_y:.15} <= I(X->B) = {to_b:.15} bits"),
    ));
    checks.push(check(
        "decoder-output-equals-channel-output",
        (to_y - to_b).abs(),
        tol,
        "identity decoder loses no information".into(),
    ));

    let mut realization = 0.0f64;
    let first = prehistory_kernel(&source, &kernel)?;
    for i in 0..=n {
        let (given, expected): (Vec<usize>, Vec<f64>) = if i == 0 {
            let mut m = vec![0.0; 4];
            for x in 0..2 {
                for s in 0..2 {
                    for y in 0..2 {
                        m[x * 2 + y] += first.get(x, s) * kernel.get(x * 2 + s, y);
                    }
                }
            }
            (vec![cx[0]], m)
        } else {
            (vec![cx[i], cy[i - 1]], kernel.matrix().to_vec())
        };
        let induced = cascade.conditional(&cy[i..=i], &given)?;
        for r in 0..induced.rows() {
            if let Some(row) = induced.row(r) {
                for (a, b) in row.iter().zip(&expected[r * 2..r * 2 + 2]) {
                    realization = realization.max((a - b).abs());
                }
            }
        }
    }
    checks.push(check(
        "realization",
        realization,
        tol.min(1e-12),
        "cascade induces the reproduction kernel at every step".into(),
    ));

    if cfg.kernel.is_none() && cfg.distortion > 0.0 && cfg.distortion < 0.5 {
        let rho = DistortionSpec::hamming(2);
        let (pt, st) =
            solve_for_distortion(&source, &rho, cfg.distortion, &SolverConfig::default()).map_err(|e| match e {
                nrdf_core::Error::Numerical(m) => {
                    CliError::NonConvergence(format!("solver at D = {}: {m}", cfg.distortion))
                }
                e => e.into(),
            })?;
        let cf = bsms_rate(cfg.p, cfg.distortion)?.rate_bits;
        let kdev = st.reproduction.max_abs_diff(&kernel).unwrap_or(f64::INFINITY);
        checks.push(check(
            "solver-matches-closed-form",
            (pt.rate_bits - cf).abs().max(kdev / 100.0),
            1e-6,
            format!("solver rate {:.12}, closed form {cf:.12}, kernel deviation {kdev:e}", pt.rate_bits),
        ));
    }

    Ok(report(checks, kernel_source))
}
