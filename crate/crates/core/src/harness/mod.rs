//! Seeded benchmark experiments.
//!
//! For every replication the harness draws one set of initial target points
//! and one source dataset, hands both to every method, and runs each method
//! for `budget` further evaluations. Each random stream is derived from
//! `(base_seed, replication, role)` (see [`seeds`]), so results do not depend
//! on scheduling and reruns are bitwise identical.

mod config;
mod records;
pub mod seeds;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{ExperimentConfig, HyperparameterMode, Method, ProblemSpec};
pub use records::{format_float, read_records, summarize, write_records, write_summary, RunRecord, SummaryRow};

use crate::acquisition::{suggest, Incumbent, SuggestOptions};
use crate::benchmarks::{BenchmarkError, Problem};
use crate::gp::{FitOptions, GpError, ModelParams};
use crate::models::{ModelError, ModelKind, ModelSetup};
use crate::observations::{Observation, ObservationSet};
use seeds::{derive_seed, digest, ROLE_INIT, ROLE_METHOD, ROLE_SOURCE};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{method} at iteration {iteration} has {count} replication(s); at least 2 are needed")]
    InsufficientReplications { method: Method, iteration: usize, count: usize },
}

/// Data shared by every method of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationInputs {
    pub init: Vec<Observation>,
    /// Source observations; the target list is empty.
    pub sources: ObservationSet,
}

impl ReplicationInputs {
    pub fn digest(&self) -> u64 {
        let init = self.init.iter().flat_map(|o| o.x.iter().chain(std::iter::once(&o.y)));
        let sources = self.sources.iter().flat_map(|(_, o)| o.x.iter().chain(std::iter::once(&o.y)));
        digest(init.chain(sources))
    }
}

fn uniform_point<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

pub fn replication_inputs(
    problem: &dyn Problem,
    config: &ExperimentConfig,
    replication: usize,
) -> Result<ReplicationInputs, HarnessError> {
    let rep = replication as u64;
    let target = problem.target_task();
    let dim = problem.tasks()[target].dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.base_seed, rep, ROLE_INIT));
    let init = (0..config.n_init)
        .map(|_| {
            let x = uniform_point(&mut rng, dim);
            let y = problem.evaluate(&x)?;
            Ok(Observation::new(x, y))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut sources = ObservationSet::new(problem.tasks().len(), target);
    for task in (0..problem.tasks().len()).filter(|&t| t != target) {
        let seed = derive_seed(config.base_seed, rep, ROLE_SOURCE + task as u64);
        sources.tasks[task] = problem.source_trials(task, config.source_trials_per_task, seed)?;
    }
    Ok(ReplicationInputs { init, sources })
}

/// Records of one method in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub replication: usize,
    pub records: Vec<RunRecord>,
    /// Digest of the initialization and source data the method received.
    pub input_digest: u64,
    /// Iterations that fell back to a random point because no model could be
    /// conditioned on the data.
    pub fallbacks: usize,
}

fn propose(
    kind: ModelKind,
    problem: &dyn Problem,
    data: &ObservationSet,
    config: &ExperimentConfig,
    fit_seed: u64,
    acq_seed: u64,
) -> Result<Vec<f64>, ModelError> {
    let setup = ModelSetup::new(kind, problem.tasks(), data)?;
    let model = match config.hyperparameters {
        HyperparameterMode::Map => {
            let opts = FitOptions { n_restarts: config.model_restarts, ..FitOptions::default() };
            match setup.clone().fit(fit_seed, &opts) {
                Err(ModelError::Gp(GpError::FitFailed)) => {
                    log::warn!("{kind}: every MAP restart failed; using prior medians");
                    let params = ModelParams::prior_median(&setup.layout());
                    setup.with_params(params)?
                }
                fitted => fitted?,
            }
        }
        HyperparameterMode::PriorMedian => {
            let params = ModelParams::prior_median(&setup.layout());
            setup.with_params(params)?
        }
    };
    let best = data.best_target().ok_or(ModelError::EmptyTargetData)?;
    suggest(&model, Incumbent { best_value: best }, acq_seed, &SuggestOptions::default())
}

pub fn run_method(
    problem: &dyn Problem,
    config: &ExperimentConfig,
    method: Method,
    replication: usize,
    inputs: &ReplicationInputs,
) -> Result<MethodRun, HarnessError> {
    let target = problem.target_task();
    let dim = problem.tasks()[target].dim();
    let seed = derive_seed(config.base_seed, replication as u64, ROLE_METHOD + method.index() as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = inputs.sources.clone();
    let mut records = Vec::with_capacity(config.n_init + config.budget);
    let mut best = f64::INFINITY;
    let mut push = |data: &mut ObservationSet, x: Vec<f64>, y: f64| {
        best = best.min(y);
        records.push(RunRecord { method, replication, iteration: records.len(), x: x.clone(), y, best_so_far: best });
        data.push(target, Observation::new(x, y));
    };
    for o in &inputs.init {
        push(&mut data, o.x.clone(), o.y);
    }
    let mut fallbacks = 0;
    for _ in 0..config.budget {
        let x = match method.model_kind() {
            None => uniform_point(&mut rng, dim),
            Some(kind) => {
                let (fit_seed, acq_seed) = (rng.next_u64(), rng.next_u64());
                match propose(kind, problem, &data, config, fit_seed, acq_seed) {
                    Ok(x) => x,
                    Err(ModelError::Gp(e)) => {
                        log::warn!("{method} replication {replication}: {e}; using a random point");
                        fallbacks += 1;
                        uniform_point(&mut rng, dim)
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        let y = problem.evaluate(&x)?;
        push(&mut data, x, y);
    }
    Ok(MethodRun { method, replication, records, input_digest: inputs.digest(), fallbacks })
}

/// Every (method, replication) run, ordered by method (as configured), then replication.
pub fn run_problem(
    problem: &dyn Problem,
    config: &ExperimentConfig,
    parallel: bool,
) -> Result<Vec<MethodRun>, HarnessError> {
    config.validate()?;
    config.check_tasks(problem)?;
    let inputs =
        (0..config.replications).map(|r| replication_inputs(problem, config, r)).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(Method, usize)> =
        config.methods.iter().flat_map(|&m| (0..config.replications).map(move |r| (m, r))).collect();
    let run = |&(m, r): &(Method, usize)| run_method(problem, config, m, r, &inputs[r]);
    if parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>, HarnessError> {
    let problem = config.problem.resolve()?;
    let runs = run_problem(problem.as_ref(), config, true)?;
    Ok(runs.into_iter().flat_map(|r| r.records).collect())
}

/// Writes `records` to `path`, creating parent directories.
pub fn save_records(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_records(BufWriter::new(File::create(path)?), records)
}

pub fn save_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_summary(BufWriter::new(File::create(path)?), rows)
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    read_records(File::open(path)?)
}

pub fn ablation_file_name(level: usize) -> String {
    format!("records_sources_{level}.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationLevel {
    pub source_trials: usize,
    pub records: Vec<RunRecord>,
    pub path: PathBuf,
}

/// Runs the experiment once per source-trial level with the same base seed,
/// writing `records_sources_{level}.csv` into the output directory.
pub fn run_ablation(config: &ExperimentConfig, levels: &[usize]) -> Result<Vec<AblationLevel>, HarnessError> {
    if levels.is_empty() {
        return Err(HarnessError::Config("no source-trial levels given".into()));
    }
    let problem = config.problem.resolve()?;
    levels
        .iter()
        .map(|&level| {
            let mut c = config.clone();
            c.source_trials_per_task = level;
            let records: Vec<RunRecord> =
                run_problem(problem.as_ref(), &c, true)?.into_iter().flat_map(|r| r.records).collect();
            let path = config.output_dir.join(ablation_file_name(level));
            save_records(&path, &records)?;
            Ok(AblationLevel { source_trials: level, records, path })
        })
        .collect()
}
