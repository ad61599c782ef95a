//! Benchmark problems with heterogeneous source tasks.
//!
//! All points are in normalized `[0, 1]` coordinates. Tasks are indexed with
//! the sources first and the target last.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::observations::Observation;
use crate::space::{ParamId, SpaceError, TaskSpec};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("point {x:?} is outside the unit box")]
    OutOfBounds { x: Vec<f64> },
    #[error("point has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("task {0} is not a source task of this problem")]
    NotASource(usize),
    #[error("invalid benchmark table: {0}")]
    SchemaError(String),
    #[error("task id {0} is not in the table")]
    UnknownTaskId(usize),
    #[error("task {0} has no rows")]
    EmptyTable(usize),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An optimization problem (minimization) with source tasks.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    /// Every task, indexed by position.
    fn tasks(&self) -> &[TaskSpec];

    fn target_task(&self) -> usize {
        self.tasks().len() - 1
    }

    /// Target objective.
    fn evaluate(&self, x: &[f64]) -> Result<f64, BenchmarkError>;

    /// `n` evaluated points of source task `task`, deterministic in `seed`.
    fn source_trials(&self, task: usize, n: usize, seed: u64) -> Result<Vec<Observation>, BenchmarkError>;

    /// Known global minimum of the target, if any.
    fn optimum_value(&self) -> Option<f64> {
        None
    }
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub const HARTMANN6_MINIMIZER: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
pub const HARTMANN6_MINIMUM: f64 = -3.32237;

fn check_unit(x: &[f64], dim: usize) -> Result<(), BenchmarkError> {
    if x.len() != dim {
        return Err(BenchmarkError::DimensionMismatch { expected: dim, got: x.len() });
    }
    if !x.iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err(BenchmarkError::OutOfBounds { x: x.to_vec() });
    }
    Ok(())
}

/// Six-dimensional Hartmann function on `[0, 1]^6`.
pub fn hartmann6(x: &[f64]) -> Result<f64, BenchmarkError> {
    check_unit(x, 6)?;
    let mut total = 0.0;
    for i in 0..4 {
        let d: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
        total += HARTMANN_ALPHA[i] * (-d).exp();
    }
    Ok(-total)
}

/// Hartmann6 target with one source task over `x1..x4` where `x5 = x6 = 0`.
#[derive(Debug, Clone)]
pub struct HartmannHeterogeneous {
    tasks: Vec<TaskSpec>,
}

pub fn hartmann_heterogeneous() -> HartmannHeterogeneous {
    let value = hartmann6(&HARTMANN6_MINIMIZER).expect("minimizer is in the box");
    assert!((value - HARTMANN6_MINIMUM).abs() < 1e-4, "Hartmann6 constants are corrupt: {value}");
    HartmannHeterogeneous {
        tasks: vec![TaskSpec::unit(0, &[1, 2, 3, 4]).unwrap(), TaskSpec::unit(1, &[1, 2, 3, 4, 5, 6]).unwrap()],
    }
}

impl HartmannHeterogeneous {
    pub fn evaluate_source(&self, x: &[f64]) -> Result<f64, BenchmarkError> {
        check_unit(x, 4)?;
        hartmann6(&[x[0], x[1], x[2], x[3], 0.0, 0.0])
    }
}

impl Problem for HartmannHeterogeneous {
    fn name(&self) -> &str {
        "hartmann6_heterogeneous"
    }

    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, BenchmarkError> {
        hartmann6(x)
    }

    fn source_trials(&self, task: usize, n: usize, seed: u64) -> Result<Vec<Observation>, BenchmarkError> {
        if task != 0 {
            return Err(BenchmarkError::NotASource(task));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let y = self.evaluate_source(&x)?;
                Ok(Observation::new(x, y))
            })
            .collect()
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(HARTMANN6_MINIMUM)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    tasks: Vec<RawTableTask>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTableTask {
    task_index: usize,
    parameter_ids: Vec<ParamId>,
    rows: Vec<Observation>,
}

/// Offline benchmark backed by evaluated rows. The target is evaluated by
/// nearest-neighbor lookup; source trials are rows drawn without replacement.
#[derive(Debug, Clone)]
pub struct TabularProblem {
    name: String,
    tasks: Vec<TaskSpec>,
    rows: Vec<Vec<Observation>>,
    /// Target row indices sorted by first coordinate.
    order: Vec<usize>,
}

/// Reads a table `{"tasks": [{"task_index", "parameter_ids", "rows": [{"x", "y"}]}]}`.
/// The selected sources become tasks `0..k` in the given order and the target task `k`.
pub fn load_tabular(
    path: impl AsRef<Path>,
    target_task_id: usize,
    source_task_ids: &[usize],
) -> Result<TabularProblem, BenchmarkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut problem = tabular_from_str(&text, target_task_id, source_task_ids)?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        problem.name = stem.to_string();
    }
    Ok(problem)
}

pub fn tabular_from_str(
    json: &str,
    target_task_id: usize,
    source_task_ids: &[usize],
) -> Result<TabularProblem, BenchmarkError> {
    let raw: RawTable = serde_json::from_str(json).map_err(|e| BenchmarkError::SchemaError(e.to_string()))?;
    for (i, a) in raw.tasks.iter().enumerate() {
        if raw.tasks[..i].iter().any(|b| b.task_index == a.task_index) {
            return Err(BenchmarkError::SchemaError(format!("task index {} appears twice", a.task_index)));
        }
        if a.parameter_ids.is_empty() {
            return Err(BenchmarkError::SchemaError(format!("task {} has no parameters", a.task_index)));
        }
        for row in &a.rows {
            if row.x.len() != a.parameter_ids.len() {
                return Err(BenchmarkError::SchemaError(format!(
                    "task {} row has {} coordinates for {} parameters",
                    a.task_index,
                    row.x.len(),
                    a.parameter_ids.len()
                )));
            }
            if !row.x.iter().all(|v| (0.0..=1.0).contains(v)) || !row.y.is_finite() {
                return Err(BenchmarkError::SchemaError(format!(
                    "task {} row must have coordinates in [0, 1] and a finite y",
                    a.task_index
                )));
            }
        }
    }
    if source_task_ids.contains(&target_task_id) {
        return Err(BenchmarkError::SchemaError(format!("task {target_task_id} is both source and target")));
    }

    let mut tasks = Vec::new();
    let mut rows = Vec::new();
    for (index, &id) in source_task_ids.iter().chain(std::iter::once(&target_task_id)).enumerate() {
        let task = raw.tasks.iter().find(|t| t.task_index == id).ok_or(BenchmarkError::UnknownTaskId(id))?;
        if task.rows.is_empty() {
            return Err(BenchmarkError::EmptyTable(id));
        }
        tasks.push(TaskSpec::unit(index, &task.parameter_ids)?);
        rows.push(task.rows.clone());
    }
    crate::space::universal_set(&tasks)?;

    let target = rows.last().expect("target rows");
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&a, &b| target[a].x[0].total_cmp(&target[b].x[0]).then(a.cmp(&b)));
    Ok(TabularProblem { name: "tabular".into(), tasks, rows, order })
}

impl TabularProblem {
    pub fn rows(&self, task: usize) -> &[Observation] {
        &self.rows[task]
    }

    /// Index of the target row closest to `x` in Euclidean distance; ties go
    /// to the lower index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let target = &self.rows[self.rows.len() - 1];
        let dist = |i: usize| -> f64 { target[i].x.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum() };
        let start = self.order.partition_point(|&i| target[i].x[0] < x[0]);
        let mut best = (f64::INFINITY, usize::MAX);
        let consider = |i: usize, best: &mut (f64, usize)| {
            let d = dist(i);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        };
        for &i in &self.order[start..] {
            let gap = target[i].x[0] - x[0];
            if gap * gap > best.0 {
                break;
            }
            consider(i, &mut best);
        }
        for &i in self.order[..start].iter().rev() {
            let gap = x[0] - target[i].x[0];
            if gap * gap > best.0 {
                break;
            }
            consider(i, &mut best);
        }
        best.1
    }
}

impl Problem for TabularProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64, BenchmarkError> {
        check_unit(x, self.tasks[self.target_task()].dim())?;
        Ok(self.rows[self.target_task()][self.nearest(x)].y)
    }

    fn source_trials(&self, task: usize, n: usize, seed: u64) -> Result<Vec<Observation>, BenchmarkError> {
        if task >= self.target_task() {
            return Err(BenchmarkError::NotASource(task));
        }
        let rows = &self.rows[task];
        if n > rows.len() {
            log::warn!("task {task} has {} rows, {n} requested; using all of them", rows.len());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(sample(&mut rng, rows.len(), n.min(rows.len())).into_iter().map(|i| rows[i].clone()).collect())
    }
}
