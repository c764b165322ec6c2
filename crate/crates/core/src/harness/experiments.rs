//! Problem construction and the `solve`, `semiconv`, `compare` and `sure`
//! drivers. Every artifact is a pure function of the config, so reruns are
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::diagnostics::oracle_solve;
use crate::error::{Error, Result};
use crate::ops::{BoundedOperator, GaussianBlur, Identity, LinearOperator, Matrix};
use crate::perturbation::{apply_noise, measure_delta, PerturbationCert};
use crate::pgm::{self, PgmFormat};
use crate::solver::{RunTrace, Solver, StopCause};
use crate::stopping::{gtg, StopReport, SureTwin};
use crate::tensor::Tensor;

use super::config::{ExperimentConfig, ProblemKind, SURE_STREAM, TRUTH_STREAM};
use super::synth;

/// A linear inverse problem with known ground truth.
#[derive(Debug, Clone)]
pub struct Problem {
    pub op: BoundedOperator,
    pub x_true: Tensor,
    pub y_clean: Tensor,
    pub y_noisy: Tensor,
    /// Dense form of small vector problems, for the oracle.
    pub matrix: Option<Matrix>,
}

impl Problem {
    pub fn is_image(&self) -> bool {
        self.x_true.cols() > 1
    }

    /// Same problem with the noise rescaled: `ȳ + s(ŷ − ȳ)`.
    pub fn with_noise_scale(&self, s: f64) -> Problem {
        let mut y = self.y_clean.clone();
        y.axpy(s, &(&self.y_noisy - &self.y_clean));
        Problem {
            y_noisy: y,
            ..self.clone()
        }
    }
}

pub fn toy_matrix() -> Matrix {
    Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 0.0]]).expect("2×2 literal")
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    cfg.validate()?;
    let (op, x_true, matrix): (Arc<dyn LinearOperator>, Tensor, Option<Matrix>) = match cfg.problem {
        ProblemKind::Toy => {
            let a = toy_matrix();
            (Arc::new(a.clone()), Tensor::vector(vec![1.0, 1.0]), Some(a))
        }
        ProblemKind::Matrix => {
            let rows = cfg.matrix.as_deref().unwrap_or_default();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let a = Matrix::from_rows(&refs)?;
            let x = Tensor::vector(cfg.x_true.clone().unwrap_or_default());
            (Arc::new(a.clone()), x, Some(a))
        }
        ProblemKind::Synthetic | ProblemKind::Image => {
            let x = if cfg.problem == ProblemKind::Synthetic {
                let (r, c) = cfg.shape();
                synth::generate(cfg.generator, r, c, cfg.stream_seed(TRUTH_STREAM))
            } else {
                let path = cfg.image_path.as_ref().expect("validated");
                pgm::read(path)?.0
            };
            let (r, c) = x.shape();
            let op: Arc<dyn LinearOperator> = if cfg.blur {
                Arc::new(GaussianBlur::standard(r, c)?)
            } else {
                Arc::new(Identity::new(r, c))
            };
            (op, x, None)
        }
    };
    let op = BoundedOperator::new(op)?;
    let y_clean = op.apply(&x_true)?;
    let y_noisy = apply_noise(&y_clean, &cfg.noise_spec())?;
    Ok(Problem {
        op,
        x_true,
        y_clean,
        y_noisy,
        matrix,
    })
}

/// Result of one run with all per-iteration metrics filled in.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub gtg_report: StopReport,
    pub sure_report: Option<StopReport>,
    /// `x_0, x_1, …` for vector problems.
    pub trajectory: Option<Vec<Tensor>>,
    pub cert: PerturbationCert,
    pub tau: f64,
    pub step_constant: f64,
    pub norm_upper: f64,
    pub sure_sigma2: Option<f64>,
}

impl RunOutput {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn gtg_at(&self, n: usize) -> f64 {
        self.trace.records[n - 1].gtg.unwrap_or(f64::NAN)
    }

    pub fn n_bar(&self) -> usize {
        self.gtg_report.chosen_n
    }

    pub fn n_hat(&self) -> Option<usize> {
        self.sure_report.as_ref().map(|r| r.chosen_n)
    }
}

fn make_solver(cfg: &ExperimentConfig, problem: &Problem) -> Result<Solver> {
    let fit = cfg.datafit(problem.y_noisy.clone())?;
    let reg = cfg.regularizer(problem.x_true.shape())?;
    Solver::new(problem.op.clone(), reg, fit, cfg.schedule_spec()?)
}

/// Noise variance for SURE: configured, or the realized one.
fn sure_variance(cfg: &ExperimentConfig, problem: &Problem) -> f64 {
    cfg.sure_sigma2.unwrap_or_else(|| {
        problem.y_noisy.distance(&problem.y_clean).powi(2) / problem.y_clean.len() as f64
    })
}

/// Runs the iteration, recording GTG, the distance to the exact-data
/// solution for small vector problems, and optionally SURE.
pub fn run_problem(cfg: &ExperimentConfig, problem: &Problem, with_sure: bool) -> Result<RunOutput> {
    let mut solver = make_solver(cfg, problem)?;
    let cert = measure_delta(cfg.loss, &problem.y_clean, &problem.y_noisy)?;
    let x_dagger = match &problem.matrix {
        Some(a) => oracle_solve(a, &problem.y_clean, solver.regularizer())
            .ok()
            .map(|s| s.x_dagger),
        None => None,
    };
    let sigma2 = with_sure.then(|| sure_variance(cfg, problem));
    let mut twin = match sigma2 {
        Some(s2) => Some(SureTwin::new(&solver, s2, cfg.stream_seed(SURE_STREAM))?),
        None => None,
    };
    let mut trajectory = (!problem.is_image()).then(|| vec![solver.state().x.clone()]);
    let mut failure = None;
    let trace = solver.run(cfg.max_iters, |state, rec| {
        rec.gtg = gtg(&state.x, &problem.x_true).ok();
        rec.dist_opt = x_dagger.as_ref().map(|xd| state.x.distance(xd));
        if let Some(t) = trajectory.as_mut() {
            t.push(state.x.clone());
        }
        if let Some(tw) = twin.as_mut() {
            match tw.observe(state) {
                Ok(v) => rec.sure = Some(v),
                Err(e) => {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    if trace.is_empty() {
        return Err(Error::config("the run produced no iterations"));
    }
    let gtg_curve: Vec<f64> = trace.records.iter().map(|r| r.gtg.unwrap_or(f64::NAN)).collect();
    let gtg_report = StopReport::from_gtg(gtg_curve)?;
    let sure_report = if with_sure {
        let curve: Vec<f64> = trace.records.iter().map(|r| r.sure.unwrap_or(f64::NAN)).collect();
        Some(StopReport::from_sure(curve, cfg.sure_window)?)
    } else {
        None
    };
    Ok(RunOutput {
        gtg_report,
        sure_report,
        trajectory,
        cert,
        tau: solver.tau(),
        step_constant: solver.step_constant(),
        norm_upper: problem.op.norm_upper(),
        sure_sigma2: sigma2,
        trace,
    })
}

/// Reruns the iteration and returns `x_n` for each requested `n ≥ 1`.
pub fn capture_iterates(
    cfg: &ExperimentConfig,
    problem: &Problem,
    ns: &[usize],
) -> Result<Vec<(usize, Tensor)>> {
    let mut wanted: Vec<usize> = ns.iter().copied().filter(|&n| n >= 1).collect();
    wanted.sort_unstable();
    wanted.dedup();
    let Some(&last) = wanted.last() else {
        return Ok(Vec::new());
    };
    let mut solver = make_solver(cfg, problem)?;
    let mut out = Vec::with_capacity(wanted.len());
    solver.run(last, |state, _| {
        if wanted.binary_search(&state.n).is_ok() {
            out.push((state.n, state.x.clone()));
        }
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Five log-spaced iteration numbers in `1..=n`.
pub fn log_checkpoints(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..5)
        .map(|k| (n as f64).powf(k as f64 / 4.0).round() as usize)
        .map(|k| k.clamp(1, n.max(1)))
        .collect();
    v.dedup();
    v
}

fn stop_cause_name(s: StopCause) -> &'static str {
    match s {
        StopCause::MaxIters => "max_iters",
        StopCause::ScheduleExhausted => "schedule_exhausted",
        StopCause::Observer => "observer",
        StopCause::Diverged => "diverged",
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub loss: &'static str,
    pub regularizer: &'static str,
    pub schedule: &'static str,
    pub delta: f64,
    pub theta: f64,
    pub tau: f64,
    pub step_constant: f64,
    pub norm_upper: f64,
    pub iterations: usize,
    pub stop_cause: &'static str,
    pub n_bar: usize,
    pub gtg_n_bar: f64,
    pub n_hat: Option<usize>,
    pub gtg_n_hat: Option<f64>,
    pub sure_sigma2: Option<f64>,
    pub gtg_stop: StopReport,
    pub sure_stop: Option<StopReport>,
    pub config: ExperimentConfig,
}

fn metadata(
    cfg: &ExperimentConfig,
    command: &'static str,
    regularizer: &'static str,
    out: &RunOutput,
) -> Result<RunMetadata> {
    let mut config = cfg.clone();
    // the output location must not leak into otherwise identical artifacts
    config.out_dir = None;
    Ok(RunMetadata {
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        loss: cfg.loss.name(),
        regularizer,
        schedule: cfg.schedule_spec()?.name(),
        delta: out.cert.delta,
        theta: out.cert.theta,
        tau: out.tau,
        step_constant: out.step_constant,
        norm_upper: out.norm_upper,
        iterations: out.iterations(),
        stop_cause: stop_cause_name(out.trace.stop),
        n_bar: out.n_bar(),
        gtg_n_bar: out.gtg_at(out.n_bar()),
        n_hat: out.n_hat(),
        gtg_n_hat: out.n_hat().map(|n| out.gtg_at(n)),
        sure_sigma2: out.sure_sigma2,
        gtg_stop: out.gtg_report.clone(),
        sure_stop: out.sure_report.clone(),
        config,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn trajectory_csv(traj: &[Tensor]) -> String {
    let dim = traj.first().map_or(0, Tensor::len);
    let mut s = String::from("n");
    for k in 0..dim {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for (n, x) in traj.iter().enumerate() {
        let _ = write!(s, "{n}");
        for v in x.as_slice() {
            // `+ 0.0` prints a negative zero as `0`
            let _ = write!(s, ",{}", v + 0.0);
        }
        s.push('\n');
    }
    s
}

fn write_image(dir: &Path, name: &str, img: &Tensor) -> Result<()> {
    pgm::write(dir.join(name), img, PgmFormat::Binary, 255)
}

/// Summary of a `solve` run.
#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub output: RunOutput,
    pub metadata: RunMetadata,
}

/// `solve`: one run with all artifacts. SURE is recorded when `sure_sigma2`
/// is configured.
pub fn solve(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SolveSummary> {
    let problem = build_problem(cfg)?;
    let output = run_problem(cfg, &problem, cfg.sure_sigma2.is_some())?;
    fs::create_dir_all(out_dir)?;
    write_run_artifacts(cfg, &problem, &output, "solve", out_dir)
}

fn write_run_artifacts(
    cfg: &ExperimentConfig,
    problem: &Problem,
    output: &RunOutput,
    command: &'static str,
    out_dir: &Path,
) -> Result<SolveSummary> {
    fs::write(out_dir.join("trace.csv"), output.trace.to_csv())?;
    if let Some(traj) = &output.trajectory {
        fs::write(out_dir.join("trajectory.csv"), trajectory_csv(traj))?;
    }
    let reg_name = cfg.regularizer(problem.x_true.shape())?.name();
    let meta = metadata(cfg, command, reg_name, output)?;
    write_json(&out_dir.join("stop.json"), &StopFile::from(output))?;
    write_json(&out_dir.join("metadata.json"), &meta)?;
    if problem.is_image() {
        write_image(out_dir, "clean.pgm", &problem.x_true)?;
        write_image(out_dir, "noisy.pgm", &problem.y_noisy)?;
        let checkpoints = log_checkpoints(output.iterations());
        let mut wanted = checkpoints.clone();
        wanted.push(output.n_bar());
        wanted.extend(output.n_hat());
        for (n, x) in capture_iterates(cfg, problem, &wanted)? {
            if checkpoints.contains(&n) {
                write_image(out_dir, &format!("iter_{n:06}.pgm"), &x)?;
            }
            if n == output.n_bar() {
                write_image(out_dir, "n_bar.pgm", &x)?;
            }
            if Some(n) == output.n_hat() {
                write_image(out_dir, "n_hat.pgm", &x)?;
            }
        }
    }
    Ok(SolveSummary {
        output: output.clone(),
        metadata: meta,
    })
}

#[derive(Serialize)]
struct StopFile<'a> {
    gtg: &'a StopReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sure: Option<&'a StopReport>,
}

impl<'a> From<&'a RunOutput> for StopFile<'a> {
    fn from(o: &'a RunOutput) -> Self {
        StopFile {
            gtg: &o.gtg_report,
            sure: o.sure_report.as_ref(),
        }
    }
}

/// `n̄` with the minimum away from the first and last 5% of iterations.
pub fn is_interior(n_bar: usize, iterations: usize) -> bool {
    let margin = (0.05 * iterations as f64).ceil() as usize;
    n_bar > margin && n_bar + margin <= iterations
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scale: f64,
    pub delta: f64,
    pub n_bar: usize,
    pub gtg_min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemiconvSummary {
    pub iterations: usize,
    pub n_bar: usize,
    pub gtg_min: f64,
    pub gtg_final: f64,
    pub interior: bool,
    pub delta: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    /// `n̄` never decreases as the noise shrinks along the sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_monotone: Option<bool>,
}

/// Noise scales of the sweep, largest first.
pub const SWEEP_SCALES: [f64; 3] = [1.0, 0.5, 0.25];

/// `semiconv`: the GTG curve, its argmin and whether it is interior;
/// optionally the noise-scale sweep.
pub fn semiconv(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SemiconvSummary> {
    let problem = build_problem(cfg)?;
    let output = run_problem(cfg, &problem, false)?;
    fs::create_dir_all(out_dir)?;
    write_run_artifacts(cfg, &problem, &output, "semiconv", out_dir)?;
    let curve = &output.gtg_report.curve;
    let mut csv = String::from("n,gtg\n");
    for (k, g) in curve.iter().enumerate() {
        let _ = writeln!(csv, "{},{g}", k + 1);
    }
    fs::write(out_dir.join("semiconv.csv"), csv)?;

    let mut sweep = Vec::new();
    if cfg.delta_sweep {
        for &s in &SWEEP_SCALES {
            let p = problem.with_noise_scale(s);
            let o = run_problem(cfg, &p, false)?;
            sweep.push(SweepRow {
                scale: s,
                delta: o.cert.delta,
                n_bar: o.n_bar(),
                gtg_min: o.gtg_at(o.n_bar()),
            });
        }
        let mut csv = String::from("scale,delta,n_bar,gtg_min\n");
        for r in &sweep {
            let _ = writeln!(csv, "{},{},{},{}", r.scale, r.delta, r.n_bar, r.gtg_min);
        }
        fs::write(out_dir.join("sweep.csv"), csv)?;
    }
    let sweep_monotone = (!sweep.is_empty()).then(|| sweep.windows(2).all(|w| w[1].n_bar >= w[0].n_bar));
    let summary = SemiconvSummary {
        iterations: output.iterations(),
        n_bar: output.n_bar(),
        gtg_min: output.gtg_at(output.n_bar()),
        gtg_final: output.gtg_at(output.iterations()),
        interior: is_interior(output.n_bar(), output.iterations()),
        delta: output.cert.delta,
        sweep,
        sweep_monotone,
    };
    write_json(&out_dir.join("semiconv.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub method: String,
    pub iterations: usize,
    pub n_bar: usize,
    pub gtg_n_bar: f64,
    pub n_hat: usize,
    pub gtg_n_hat: f64,
}

/// `compare`: one table row per config, all on the same noisy datum.
pub fn compare(cfgs: &[ExperimentConfig], out_dir: &Path) -> Result<Vec<CompareRow>> {
    let Some(first) = cfgs.first() else {
        return Err(Error::config("compare needs at least one config"));
    };
    if let Some(k) = cfgs.iter().position(|c| !c.same_problem(first)) {
        return Err(Error::config(format!(
            "config {} describes a different problem or noise than config 0",
            k
        )));
    }
    let problem = build_problem(first)?;
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(cfgs.len());
    for (k, cfg) in cfgs.iter().enumerate() {
        let o = run_problem(cfg, &problem, true)?;
        fs::write(out_dir.join(format!("trace_{k}.csv")), o.trace.to_csv())?;
        let n_hat = o.n_hat().expect("SURE requested");
        rows.push(CompareRow {
            method: cfg.schedule_spec()?.name().to_string(),
            iterations: o.iterations(),
            n_bar: o.n_bar(),
            gtg_n_bar: o.gtg_at(o.n_bar()),
            n_hat,
            gtg_n_hat: o.gtg_at(n_hat),
        });
    }
    let mut csv = String::from("method,iterations,n_bar,gtg_n_bar,n_hat,gtg_n_hat\n");
    let mut md = String::from(
        "| method | iterations | n̄ | GTG(x_n̄) | n̂ | GTG(x_n̂) |\n|---|---|---|---|---|---|\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.method, r.iterations, r.n_bar, r.gtg_n_bar, r.n_hat, r.gtg_n_hat
        );
        let _ = writeln!(
            md,
            "| {} | {} | {} | {:.4e} | {} | {:.4e} |",
            r.method, r.iterations, r.n_bar, r.gtg_n_bar, r.n_hat, r.gtg_n_hat
        );
    }
    fs::write(out_dir.join("compare.csv"), csv)?;
    fs::write(out_dir.join("compare.md"), md)?;
    Ok(rows)
}

/// `sure`: a run with SURE recorded and the min-slope selection.
pub fn sure(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SolveSummary> {
    let problem = build_problem(cfg)?;
    let output = run_problem(cfg, &problem, true)?;
    fs::create_dir_all(out_dir)?;
    write_run_artifacts(cfg, &problem, &output, "sure", out_dir)
}
