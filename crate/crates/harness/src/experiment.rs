//! Experiment runners. Each `run_*` computes its records, writes CSV files
//! into the output directory and returns the records for inspection.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use sylgraph_core::kron::{kron_product_materialize, kron_sum_materialize};
use sylgraph_core::metrics::{
    confusion, rel_frob_error, support_of, threshold_to_sparsity, SupportMatrix,
    DEFAULT_SUPPORT_EPS,
};
use sylgraph_core::solver::{fit_with_observer, FactorSet, FitReport, Warning};
use sylgraph_core::synth::{generate_factors, sample_sylvester, standardize, PrecisionSampler};
use sylgraph_core::{fit, format, Dataset, DenseTensor, FactorList, SolverConfig};

use crate::config::{ExperimentSpec, Generator, SpecError};

#[derive(Debug)]
pub enum HarnessError {
    Spec(SpecError),
    Core(sylgraph_core::Error),
    Csv(csv::Error),
    Io(io::Error),
}

impl HarnessError {
    /// 2 for specification problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use sylgraph_core::Error as E;
        match self {
            HarnessError::Spec(_) => 2,
            HarnessError::Core(
                E::InvalidParameter(_) | E::InvalidShape(_) | E::ModeOutOfRange { .. },
            ) => 2,
            HarnessError::Core(
                E::NonFinite { .. }
                | E::NotPositiveDefinite(_)
                | E::NonPositiveDiagonal { .. }
                | E::DegenerateCoordinate { .. }
                | E::NotSymmetric(_),
            ) => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Spec(e) => e.fmt(f),
            HarnessError::Core(e) => e.fmt(f),
            HarnessError::Csv(e) => write!(f, "csv: {e}"),
            HarnessError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<SpecError> for HarnessError {
    fn from(e: SpecError) -> Self {
        HarnessError::Spec(e)
    }
}

impl From<sylgraph_core::Error> for HarnessError {
    fn from(e: sylgraph_core::Error) -> Self {
        HarnessError::Core(e)
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e)
    }
}

impl From<io::Error> for HarnessError {
    fn from(e: io::Error) -> Self {
        HarnessError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Support recovery and estimation error of one mode against the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMetrics {
    pub fpr: f64,
    pub fnr: f64,
    pub mcc: f64,
    /// `||Psi_hat^off - Psi^off||_F / ||Psi^off||_F` (absolute when the truth
    /// has no edges).
    pub rel_error: f64,
}

/// Outcome of one fit in an experiment grid.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub spec_hash: String,
    pub seed: u64,
    pub lambda: f64,
    pub objective_trace: Vec<f64>,
    pub delta_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub modes: Vec<ModeMetrics>,
    /// Kept out of every CSV so repeated runs produce identical files.
    pub wall_time: Duration,
}

/// Per-sweep errors of one mode (or of `W` when `mode` is `None`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub sweep: usize,
    pub mode: Option<usize>,
    /// Natural log of the relative error against the truth.
    pub stat_err: f64,
    /// Natural log of the relative distance to the final iterate.
    pub opt_err: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub record: RunRecord,
    pub points: Vec<ErrorPoint>,
}

pub fn truth(spec: &ExperimentSpec) -> Result<FactorList> {
    Ok(generate_factors(&spec.modes)?)
}

/// Draws raw synthetic datasets under the spec's generator. The dense
/// precisions of the KS and KP generators are factored once.
pub enum Simulator<'a> {
    Sylvester(&'a FactorList, usize),
    Dense(PrecisionSampler, usize),
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &ExperimentSpec, truth: &'a FactorList) -> Result<Self> {
        let shape = truth.shape();
        let n = spec.n_obs;
        Ok(match spec.generator {
            Generator::SquaredKs => Simulator::Sylvester(truth, n),
            Generator::Ks => Simulator::Dense(
                PrecisionSampler::new(&kron_sum_materialize(truth)?, &shape)?,
                n,
            ),
            Generator::Kp => Simulator::Dense(
                PrecisionSampler::new(&kron_product_materialize(truth)?, &shape)?,
                n,
            ),
        })
    }

    pub fn draw(&self, seed: u64) -> Result<Dataset> {
        Ok(match self {
            Simulator::Sylvester(f, n) => sample_sylvester(f, *n, seed)?,
            Simulator::Dense(s, n) => s.sample(*n, seed)?,
        })
    }
}

/// The data the estimator sees: standardized when the spec asks for it.
pub fn prepare(spec: &ExperimentSpec, raw: Dataset) -> Dataset {
    if spec.standardize {
        standardize(&raw).data
    } else {
        raw
    }
}

pub fn solver_config(spec: &ExperimentSpec, order: usize, lambda: f64) -> SolverConfig {
    SolverConfig::uniform(order, lambda)
        .with_tol(spec.tol)
        .with_max_sweeps(spec.max_sweeps)
}

fn offdiag_error(est: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<f64> {
    if reference.norm() == 0.0 {
        return Ok(est.norm());
    }
    Ok(rel_frob_error(est, reference)?)
}

pub fn mode_metrics(fitted: &FactorSet, truth: &FactorList) -> Result<Vec<ModeMetrics>> {
    fitted
        .offdiag
        .iter()
        .zip(truth.factors())
        .map(|(est, t)| {
            let c = confusion(&support_of(est, DEFAULT_SUPPORT_EPS), &support_of(t, 0.0))?;
            let (fpr, fnr) = c.fpr_fnr();
            Ok(ModeMetrics {
                fpr,
                fnr,
                mcc: c.mcc(),
                rel_error: offdiag_error(est.matrix(), t.off_diagonal().matrix())?,
            })
        })
        .collect()
}

fn record(
    spec_hash: &str,
    seed: u64,
    lambda: f64,
    report: &FitReport,
    modes: Vec<ModeMetrics>,
    started: Instant,
) -> RunRecord {
    RunRecord {
        spec_hash: spec_hash.to_owned(),
        seed,
        lambda,
        objective_trace: report.objective_trace.clone(),
        delta_trace: report.delta_trace.clone(),
        sweeps: report.sweeps,
        converged: report.converged,
        modes,
        wall_time: started.elapsed(),
    }
}

fn simulate_all(spec: &ExperimentSpec, truth: &FactorList) -> Result<Vec<Dataset>> {
    let sim = Simulator::new(spec, truth)?;
    spec.seeds
        .par_iter()
        .map(|&seed| Ok(prepare(spec, sim.draw(seed)?)))
        .collect()
}

/// Fits every `(lambda, seed)` cell in parallel; records come back in
/// lambda-major order.
pub fn grid_records(spec: &ExperimentSpec, truth: &FactorList) -> Result<Vec<RunRecord>> {
    let data = simulate_all(spec, truth)?;
    let hash = spec.hash();
    let cells: Vec<(f64, usize)> = spec
        .lambdas
        .iter()
        .flat_map(|&l| (0..spec.seeds.len()).map(move |s| (l, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(lambda, s)| {
            let started = Instant::now();
            let d = &data[s];
            let report = fit(d, &solver_config(spec, d.order(), lambda))?;
            let modes = mode_metrics(&report.factors, truth)?;
            Ok(record(
                &hash,
                spec.seeds[s],
                lambda,
                &report,
                modes,
                started,
            ))
        })
        .collect()
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(dir.join(name))?)
}

/// `lambda_sweep.csv`: one row per (lambda, seed, mode).
pub fn run_lambda_sweep(spec: &ExperimentSpec, out: &Path) -> Result<Vec<RunRecord>> {
    let truth = truth(spec)?;
    let records = grid_records(spec, &truth)?;
    let mut w = writer(out, "lambda_sweep.csv")?;
    w.write_record(["lambda", "seed", "mode", "fpr", "fnr", "mcc"])?;
    for r in &records {
        for (k, m) in r.modes.iter().enumerate() {
            w.write_record([
                fmt_f64(r.lambda),
                r.seed.to_string(),
                k.to_string(),
                fmt_f64(m.fpr),
                fmt_f64(m.fnr),
                fmt_f64(m.mcc),
            ])?;
        }
    }
    w.flush()?;
    Ok(records)
}

/// `mismatch.csv`: MCC per (lambda, seed, mode) under the spec's generator.
pub fn run_mismatch(spec: &ExperimentSpec, out: &Path) -> Result<Vec<RunRecord>> {
    let truth = truth(spec)?;
    let records = grid_records(spec, &truth)?;
    let mut w = writer(out, "mismatch.csv")?;
    w.write_record(["generator", "lambda", "seed", "mode", "mcc"])?;
    for r in &records {
        for (k, m) in r.modes.iter().enumerate() {
            w.write_record([
                spec.generator.name().to_string(),
                fmt_f64(r.lambda),
                r.seed.to_string(),
                k.to_string(),
                fmt_f64(m.mcc),
            ])?;
        }
    }
    w.flush()?;
    Ok(records)
}

/// Per-sweep statistical and optimization errors for every seed, written to
/// `convergence_<seed>.csv` (per mode) and `convergence_w_<seed>.csv`.
pub fn run_convergence(spec: &ExperimentSpec, out: &Path) -> Result<Vec<ConvergenceRun>> {
    let truth = truth(spec)?;
    let truth_set = FactorSet::from_factors(&truth)?;
    let hash = spec.hash();
    let lambda = spec.lambdas[0];
    let sim = Simulator::new(spec, &truth)?;
    let runs: Vec<ConvergenceRun> = spec
        .seeds
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let d = prepare(spec, sim.draw(seed)?);
            let mut iterates = Vec::new();
            let report = fit_with_observer(&d, &solver_config(spec, d.order(), lambda), |_, s| {
                iterates.push(s.clone())
            })?;
            let points = error_points(&iterates, &report.factors, &truth_set)?;
            let modes = mode_metrics(&report.factors, &truth)?;
            Ok(ConvergenceRun {
                record: record(&hash, seed, lambda, &report, modes, started),
                points,
            })
        })
        .collect::<Result<_>>()?;

    for run in &runs {
        let seed = run.record.seed;
        let mut modes = writer(out, &format!("convergence_{seed}.csv"))?;
        modes.write_record(["sweep", "mode", "stat_err", "opt_err"])?;
        let mut w = writer(out, &format!("convergence_w_{seed}.csv"))?;
        w.write_record(["sweep", "stat_err", "opt_err"])?;
        for p in &run.points {
            match p.mode {
                Some(k) => modes.write_record([
                    p.sweep.to_string(),
                    k.to_string(),
                    fmt_f64(p.stat_err),
                    fmt_f64(p.opt_err),
                ])?,
                None => {
                    w.write_record([p.sweep.to_string(), fmt_f64(p.stat_err), fmt_f64(p.opt_err)])?
                }
            }
        }
        modes.flush()?;
        w.flush()?;
    }
    Ok(runs)
}

fn error_points(
    iterates: &[FactorSet],
    last: &FactorSet,
    truth: &FactorSet,
) -> Result<Vec<ErrorPoint>> {
    let w_matrix = |s: &FactorSet| DMatrix::from_column_slice(s.w.len(), 1, s.w.values());
    let mut points = Vec::new();
    for (sweep, it) in iterates.iter().enumerate() {
        for (k, est) in it.offdiag.iter().enumerate() {
            points.push(ErrorPoint {
                sweep,
                mode: Some(k),
                stat_err: offdiag_error(est.matrix(), truth.offdiag[k].matrix())?.ln(),
                opt_err: offdiag_error(est.matrix(), last.offdiag[k].matrix())?.ln(),
            });
        }
        points.push(ErrorPoint {
            sweep,
            mode: None,
            stat_err: offdiag_error(&w_matrix(it), &w_matrix(truth))?.ln(),
            opt_err: offdiag_error(&w_matrix(it), &w_matrix(last))?.ln(),
        });
    }
    Ok(points)
}

#[derive(Debug, Clone)]
pub struct ExternalFit {
    pub report: FitReport,
    /// Variables with zero spread that were only centred.
    pub constant: Vec<usize>,
    pub supports: Vec<SupportMatrix>,
}

/// Fits a SYGT dataset (observation mode last) and writes `offdiag_<k>.sygt`,
/// `w.sygt`, `support_<k>.csv` (edges kept at the spec's sparsity) and
/// `fit.csv`.
pub fn fit_external(spec: &ExperimentSpec, out: &Path) -> Result<ExternalFit> {
    let input = spec.input.as_ref().expect("validated spec has an input");
    let raw = Dataset::new(format::load(input)?)?;
    let (d, constant) = if spec.standardize {
        let s = standardize(&raw);
        (s.data, s.constant)
    } else {
        (raw, Vec::new())
    };
    let report = fit(&d, &solver_config(spec, d.order(), spec.lambdas[0]))?;
    fs::create_dir_all(out)?;
    let mut supports = Vec::new();
    for (k, f) in report.factors.offdiag.iter().enumerate() {
        let m = f.mode_size();
        let t = DenseTensor::new(vec![m, m], f.matrix().as_slice().to_vec())?;
        format::save(out.join(format!("offdiag_{k}.sygt")), &t)?;
        let support = threshold_to_sparsity(f, spec.sparsity)?;
        let mut w = writer(out, &format!("support_{k}.csv"))?;
        w.write_record(["i", "j", "value"])?;
        for (i, j) in support.edges() {
            w.write_record([i.to_string(), j.to_string(), fmt_f64(f.get(i, j))])?;
        }
        w.flush()?;
        supports.push(support);
    }
    format::save(out.join("w.sygt"), &report.factors.w)?;
    let mut w = writer(out, "fit.csv")?;
    w.write_record(["lambda", "sweeps", "converged", "objective"])?;
    w.write_record([
        fmt_f64(spec.lambdas[0]),
        report.sweeps.to_string(),
        report.converged.to_string(),
        fmt_f64(*report.objective_trace.last().expect("trace starts at init")),
    ])?;
    w.flush()?;
    Ok(ExternalFit {
        report,
        constant,
        supports,
    })
}

/// Writes the true factors (`truth_<k>.sygt`) and one raw dataset per seed
/// (`data_<seed>.sygt`, observation mode last).
pub fn generate(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let truth = truth(spec)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (k, f) in truth.factors().iter().enumerate() {
        let m = f.mode_size();
        let path = out.join(format!("truth_{k}.sygt"));
        format::save(
            &path,
            &DenseTensor::new(vec![m, m], f.matrix().as_slice().to_vec())?,
        )?;
        written.push(path);
    }
    let sim = Simulator::new(spec, &truth)?;
    for &seed in &spec.seeds {
        let d = sim.draw(seed)?;
        let path = out.join(format!("data_{seed}.sygt"));
        format::save(&path, d.tensor())?;
        written.push(path);
    }
    Ok(written)
}

/// Short human-readable notes for solver warnings.
pub fn describe_warnings(warnings: &[Warning]) -> Vec<String> {
    warnings
        .iter()
        .map(|w| match w {
            Warning::NotStandardized { max_abs_mean } => {
                format!("data not centred (largest |mean| {max_abs_mean:.3e})")
            }
            Warning::DegenerateCoordinate { mode, row, col } => {
                format!("mode {mode} pair ({row}, {col}) skipped: both variables are zero")
            }
            Warning::ZeroSecondMoment { index } => {
                format!("variable {index} is identically zero; W set to the floor")
            }
        })
        .collect()
}
