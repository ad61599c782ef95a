//! Heterogeneous search spaces.
//!
//! Every task owns an ordered list of continuous [`Parameter`]s. Parameters are
//! identified across tasks by their global id; the union of all ids is the
//! universal parameter set, and [`build_partition`] splits that set into blocks
//! of ids that are shared by exactly the same tasks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Global parameter identity, shared by every task that tunes the parameter.
pub type ParamId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("parameter {id} is defined inconsistently across tasks")]
    ConflictingParameterDefinition { id: ParamId },
    #[error("parameter {id} is not part of task {task}")]
    MissingParameter { task: usize, id: ParamId },
    #[error("invalid parameter {id}: {reason}")]
    InvalidParameter { id: ParamId, reason: String },
    #[error("invalid task {task}: {reason}")]
    InvalidTask { task: usize, reason: String },
    #[error("no tasks given")]
    NoTasks,
    #[error("point has {got} coordinates, task {task} expects {expected}")]
    DimensionMismatch { task: usize, expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub id: ParamId,
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Parameter {
    pub fn new(id: ParamId, name: impl Into<String>, lower: f64, upper: f64) -> Result<Self, SpaceError> {
        let p = Parameter { id, name: name.into(), lower, upper };
        p.validate()?;
        Ok(p)
    }

    /// Parameter on the unit interval, named after its id.
    pub fn unit(id: ParamId) -> Self {
        Parameter { id, name: format!("x{id}"), lower: 0.0, upper: 1.0 }
    }

    fn validate(&self) -> Result<(), SpaceError> {
        if self.id == 0 {
            return Err(SpaceError::InvalidParameter { id: self.id, reason: "ids start at 1".into() });
        }
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(SpaceError::InvalidParameter {
                id: self.id,
                reason: format!("bounds [{}, {}] are not an interval", self.lower, self.upper),
            });
        }
        Ok(())
    }

    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.lower) / (self.upper - self.lower)
    }

    pub fn denormalize(&self, unit: f64) -> f64 {
        self.lower + unit * (self.upper - self.lower)
    }
}

/// The search space of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTaskSpec")]
pub struct TaskSpec {
    pub task_index: usize,
    parameters: Vec<Parameter>,
}

#[derive(Deserialize)]
struct RawTaskSpec {
    task_index: usize,
    parameters: Vec<Parameter>,
}

impl TryFrom<RawTaskSpec> for TaskSpec {
    type Error = SpaceError;
    fn try_from(raw: RawTaskSpec) -> Result<Self, SpaceError> {
        TaskSpec::new(raw.task_index, raw.parameters)
    }
}

impl TaskSpec {
    pub fn new(task_index: usize, parameters: Vec<Parameter>) -> Result<Self, SpaceError> {
        if parameters.is_empty() {
            return Err(SpaceError::InvalidTask { task: task_index, reason: "no parameters".into() });
        }
        let mut seen = BTreeSet::new();
        for p in &parameters {
            p.validate()?;
            if !seen.insert(p.id) {
                return Err(SpaceError::InvalidTask {
                    task: task_index,
                    reason: format!("duplicate parameter id {}", p.id),
                });
            }
        }
        Ok(TaskSpec { task_index, parameters })
    }

    /// Task over unit-interval parameters with the given ids.
    pub fn unit(task_index: usize, ids: &[ParamId]) -> Result<Self, SpaceError> {
        Self::new(task_index, ids.iter().map(|&id| Parameter::unit(id)).collect())
    }

    pub fn parameters(&self) -> &[Parameter] {
        &self.parameters
    }

    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.parameters.iter().map(|p| p.id)
    }

    pub fn id_set(&self) -> BTreeSet<ParamId> {
        self.ids().collect()
    }

    pub fn contains(&self, id: ParamId) -> bool {
        self.position(id).is_some()
    }

    /// Column of `id` within this task's points.
    pub fn position(&self, id: ParamId) -> Option<usize> {
        self.parameters.iter().position(|p| p.id == id)
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        self.parameters.iter().zip(raw).map(|(p, &v)| p.normalize(v)).collect()
    }

    pub fn denormalize(&self, unit: &[f64]) -> Vec<f64> {
        self.parameters.iter().zip(unit).map(|(p, &v)| p.denormalize(v)).collect()
    }
}

/// Checks that tasks are indexed `0..t` and agree on shared parameter definitions.
pub fn validate_tasks(tasks: &[TaskSpec]) -> Result<(), SpaceError> {
    if tasks.is_empty() {
        return Err(SpaceError::NoTasks);
    }
    let indices: BTreeSet<usize> = tasks.iter().map(|t| t.task_index).collect();
    if indices.len() != tasks.len() || indices.iter().next_back() != Some(&(tasks.len() - 1)) {
        return Err(SpaceError::InvalidTask {
            task: tasks[0].task_index,
            reason: "task indices must be exactly 0..t".into(),
        });
    }
    universal_set(tasks).map(|_| ())
}

/// Union of all tasks' parameter ids.
pub fn universal_set(tasks: &[TaskSpec]) -> Result<BTreeSet<ParamId>, SpaceError> {
    if tasks.is_empty() {
        return Err(SpaceError::NoTasks);
    }
    let mut defs: BTreeMap<ParamId, &Parameter> = BTreeMap::new();
    for p in tasks.iter().flat_map(|t| t.parameters.iter()) {
        match defs.get(&p.id) {
            Some(existing) if *existing != p => return Err(SpaceError::ConflictingParameterDefinition { id: p.id }),
            Some(_) => {}
            None => {
                defs.insert(p.id, p);
            }
        }
    }
    Ok(defs.into_keys().collect())
}

/// Parameter ids present in every task. Empty when the tasks share nothing.
pub fn common_parameters(tasks: &[TaskSpec]) -> BTreeSet<ParamId> {
    let mut iter = tasks.iter();
    let Some(first) = iter.next() else { return BTreeSet::new() };
    let mut common = first.id_set();
    for t in iter {
        common.retain(|id| t.contains(*id));
    }
    common
}

/// Coordinates of `x` at `ids`, in ascending id order.
pub fn project(x: &[f64], task: &TaskSpec, ids: &BTreeSet<ParamId>) -> Result<Vec<f64>, SpaceError> {
    if x.len() != task.dim() {
        return Err(SpaceError::DimensionMismatch { task: task.task_index, expected: task.dim(), got: x.len() });
    }
    ids.iter()
        .map(|&id| task.position(id).map(|c| x[c]).ok_or(SpaceError::MissingParameter { task: task.task_index, id }))
        .collect()
}

/// Partition of the universal parameter set into blocks of ids shared by
/// exactly the same tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPartition {
    blocks: Vec<Vec<ParamId>>,
    /// `columns[task][block]` is the column of each block id inside the task's
    /// points, or `None` when the block is absent from the task.
    columns: Vec<Vec<Option<Vec<usize>>>>,
}

impl SubsetPartition {
    /// Blocks in canonical order: ascending by smallest id, ids ascending within a block.
    pub fn blocks(&self) -> &[Vec<ParamId>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn task_count(&self) -> usize {
        self.columns.len()
    }

    /// Whether block `block` is contained in the space of `task`.
    pub fn contains(&self, task: usize, block: usize) -> bool {
        self.columns[task][block].is_some()
    }

    pub fn columns(&self, task: usize, block: usize) -> Option<&[usize]> {
        self.columns.get(task)?.get(block)?.as_deref()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

/// Splits the universal set by successively intersecting every existing
/// subset with each task's ids, then orders the blocks canonically.
pub fn build_partition(tasks: &[TaskSpec]) -> Result<SubsetPartition, SpaceError> {
    validate_tasks(tasks)?;
    let mut ordered: Vec<&TaskSpec> = tasks.iter().collect();
    ordered.sort_by_key(|t| t.task_index);

    let mut subsets: Vec<BTreeSet<ParamId>> = vec![ordered[0].id_set()];
    for task in &ordered[1..] {
        let mut remaining_ids = task.id_set();
        let mut next = Vec::with_capacity(subsets.len() + 1);
        for sub in &subsets {
            let common: BTreeSet<ParamId> = sub.intersection(&remaining_ids).copied().collect();
            let rest: BTreeSet<ParamId> = sub.difference(&common).copied().collect();
            if !common.is_empty() {
                remaining_ids.retain(|id| !common.contains(id));
                next.push(common);
            }
            if !rest.is_empty() {
                next.push(rest);
            }
        }
        if !remaining_ids.is_empty() {
            next.push(remaining_ids);
        }
        subsets = next;
    }

    let mut blocks: Vec<Vec<ParamId>> = subsets.into_iter().map(|s| s.into_iter().collect()).collect();
    blocks.sort_by_key(|b| b[0]);

    let columns = ordered
        .iter()
        .map(|task| {
            blocks
                .iter()
                .map(|block| block.iter().map(|&id| task.position(id)).collect::<Option<Vec<usize>>>())
                .collect()
        })
        .collect();
    Ok(SubsetPartition { blocks, columns })
}
