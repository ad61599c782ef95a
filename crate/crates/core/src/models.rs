//! GP surrogates for transfer across heterogeneous search spaces.
//!
//! | kind | inputs | kernel |
//! |------|--------|--------|
//! | `Vanilla` | target only | one SE kernel over the target space |
//! | `ConditionalMtgp` | all tasks | conditional kernel times task correlation |
//! | `ImputedMtgpFixed` | all tasks in the union space, missing = 0.5 | SE times task covariance |
//! | `ImputedMtgpLearned` | as above, missing values trained | SE times task covariance |
//! | `CommonParamsMtgp` | all tasks projected on the common parameters | SE times task correlation |

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{
    fit_map, CovarianceSpec, FitOptions, FittedGp, GpError, Imputation, ModelParams, ParamLayout, Posterior,
    UnionEmbedding,
};
use crate::observations::{Observation, ObservationSet};
use crate::space::{build_partition, common_parameters, project, ParamId, SpaceError, TaskSpec};

/// Value given to missing parameters by the fixed imputed model: the center
/// of the normalized range.
pub const IMPUTATION_CENTER: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error("tasks share no parameters")]
    NoCommonParameters,
    #[error("target task has no observations")]
    EmptyTargetData,
    #[error("observations do not match the tasks: {0}")]
    InvalidData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    Vanilla,
    ConditionalMtgp,
    ImputedMtgpFixed,
    ImputedMtgpLearned,
    CommonParamsMtgp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Vanilla,
        ModelKind::ConditionalMtgp,
        ModelKind::ImputedMtgpFixed,
        ModelKind::ImputedMtgpLearned,
        ModelKind::CommonParamsMtgp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Vanilla => "VANILLA",
            ModelKind::ConditionalMtgp => "CONDITIONAL_MTGP",
            ModelKind::ImputedMtgpFixed => "IMPUTED_MTGP_FIXED",
            ModelKind::ImputedMtgpLearned => "IMPUTED_MTGP_LEARNED",
            ModelKind::CommonParamsMtgp => "COMMON_PARAMS_MTGP",
        }
    }

    pub fn uses_source_data(self) -> bool {
        self != ModelKind::Vanilla
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A model's covariance structure and the data it is trained on, before any
/// hyperparameters are chosen. Tasks without observations are dropped and the
/// remaining tasks renumbered in order.
#[derive(Debug, Clone)]
pub struct ModelSetup {
    pub kind: ModelKind,
    pub spec: CovarianceSpec,
    pub data: ObservationSet,
    /// Task index of the target inside `spec`.
    pub target_task: usize,
    /// Target columns the model sees, in order; `None` means every column.
    pub target_columns: Option<Vec<usize>>,
    target_dim: usize,
}

impl ModelSetup {
    pub fn new(kind: ModelKind, tasks: &[TaskSpec], data: &ObservationSet) -> Result<Self, ModelError> {
        crate::space::validate_tasks(tasks)?;
        check_data(tasks, data)?;
        if data.target().is_empty() {
            return Err(ModelError::EmptyTargetData);
        }
        if kind.uses_source_data() && data.tasks.iter().any(Vec::is_empty) {
            let (tasks, data) = drop_empty_tasks(tasks, data)?;
            return ModelSetup::new(kind, &tasks, &data);
        }
        let target = task_by_index(tasks, data.target_task)?;
        let target_dim = target.dim();

        let setup = match kind {
            ModelKind::Vanilla => {
                let ids: Vec<ParamId> = target.ids().collect();
                let single = TaskSpec::new(0, target.parameters().to_vec())?;
                let partition = build_partition(std::slice::from_ref(&single))?;
                debug_assert_eq!(partition.blocks()[0].len(), ids.len());
                let mut own = ObservationSet::new(1, 0);
                own.tasks[0] = data.target().to_vec();
                ModelSetup {
                    kind,
                    spec: CovarianceSpec::Conditional(partition),
                    data: own,
                    target_task: 0,
                    target_columns: None,
                    target_dim,
                }
            }
            ModelKind::ConditionalMtgp => ModelSetup {
                kind,
                spec: CovarianceSpec::Conditional(build_partition(tasks)?),
                data: data.clone(),
                target_task: data.target_task,
                target_columns: None,
                target_dim,
            },
            ModelKind::ImputedMtgpFixed | ModelKind::ImputedMtgpLearned => {
                let imputation = if kind == ModelKind::ImputedMtgpFixed {
                    Imputation::Fixed(IMPUTATION_CENTER)
                } else {
                    Imputation::Learned
                };
                ModelSetup {
                    kind,
                    spec: CovarianceSpec::Union(UnionEmbedding::new(tasks, imputation)?),
                    data: data.clone(),
                    target_task: data.target_task,
                    target_columns: None,
                    target_dim,
                }
            }
            ModelKind::CommonParamsMtgp => {
                let common = common_parameters(tasks);
                if common.is_empty() {
                    return Err(ModelError::NoCommonParameters);
                }
                let mut projected_tasks = Vec::with_capacity(tasks.len());
                let mut projected = ObservationSet::new(tasks.len(), data.target_task);
                for task in tasks {
                    let params = common
                        .iter()
                        .map(|&id| task.parameters()[task.position(id).expect("common id")].clone())
                        .collect();
                    projected_tasks.push(TaskSpec::new(task.task_index, params)?);
                    for obs in &data.tasks[task.task_index] {
                        projected.push(task.task_index, Observation::new(project(&obs.x, task, &common)?, obs.y));
                    }
                }
                let columns = common.iter().map(|&id| target.position(id).expect("common id")).collect();
                ModelSetup {
                    kind,
                    spec: CovarianceSpec::Conditional(build_partition(&projected_tasks)?),
                    data: projected,
                    target_task: data.target_task,
                    target_columns: Some(columns),
                    target_dim,
                }
            }
        };
        Ok(setup)
    }

    pub fn layout(&self) -> ParamLayout {
        self.spec.layout()
    }

    /// Conditions on the data with the given hyperparameters.
    pub fn with_params(self, params: ModelParams) -> Result<FittedModel, ModelError> {
        let gp = FittedGp::new(self.spec.clone(), params, &self.data)?;
        Ok(FittedModel { setup: self, gp })
    }

    /// MAP fit, or prior medians when there are fewer than two observations.
    pub fn fit(self, seed: u64, opts: &FitOptions) -> Result<FittedModel, ModelError> {
        let params = if self.data.len() < 2 {
            ModelParams::prior_median(&self.layout())
        } else {
            fit_map(&self.data, &self.spec, seed, opts)?.params
        };
        self.with_params(params)
    }
}

fn task_by_index(tasks: &[TaskSpec], index: usize) -> Result<&TaskSpec, ModelError> {
    tasks
        .iter()
        .find(|t| t.task_index == index)
        .ok_or_else(|| ModelError::InvalidData(format!("unknown target task {index}")))
}

/// Removes tasks without observations and renumbers the rest in order. The
/// target, which has data, is always kept.
fn drop_empty_tasks(tasks: &[TaskSpec], data: &ObservationSet) -> Result<(Vec<TaskSpec>, ObservationSet), ModelError> {
    let mut ordered: Vec<&TaskSpec> = tasks.iter().filter(|t| !data.tasks[t.task_index].is_empty()).collect();
    ordered.sort_by_key(|t| t.task_index);
    let target = ordered.iter().position(|t| t.task_index == data.target_task).expect("target has data");
    let mut kept = Vec::with_capacity(ordered.len());
    let mut kept_data = ObservationSet::new(ordered.len(), target);
    for (i, t) in ordered.into_iter().enumerate() {
        kept.push(TaskSpec::new(i, t.parameters().to_vec())?);
        kept_data.tasks[i] = data.tasks[t.task_index].clone();
    }
    Ok((kept, kept_data))
}

fn check_data(tasks: &[TaskSpec], data: &ObservationSet) -> Result<(), ModelError> {
    if data.task_count() != tasks.len() {
        return Err(ModelError::InvalidData(format!("{} task lists for {} tasks", data.task_count(), tasks.len())));
    }
    for task in tasks {
        for obs in &data.tasks[task.task_index] {
            if obs.x.len() != task.dim() {
                return Err(ModelError::InvalidData(format!(
                    "task {} point has {} coordinates, expected {}",
                    task.task_index,
                    obs.x.len(),
                    task.dim()
                )));
            }
        }
    }
    if !data.is_valid() {
        return Err(ModelError::InvalidData("points must lie in [0, 1] with finite outcomes".into()));
    }
    Ok(())
}

/// Fits a model of `kind` to `data` (MAP hyperparameters, restarts seeded by `seed`).
pub fn build_model(
    kind: ModelKind,
    tasks: &[TaskSpec],
    data: &ObservationSet,
    seed: u64,
    opts: &FitOptions,
) -> Result<FittedModel, ModelError> {
    ModelSetup::new(kind, tasks, data)?.fit(seed, opts)
}

#[derive(Debug)]
pub struct FittedModel {
    setup: ModelSetup,
    gp: FittedGp,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.setup.kind
    }

    pub fn params(&self) -> &ModelParams {
        self.gp.params()
    }

    pub fn setup(&self) -> &ModelSetup {
        &self.setup
    }

    pub fn gp(&self) -> &FittedGp {
        &self.gp
    }

    pub fn target_dim(&self) -> usize {
        self.setup.target_dim
    }

    /// Learned value of the missing parameter `id` in `task`.
    pub fn imputed_value(&self, task: usize, id: ParamId) -> Option<f64> {
        self.gp.params().imputed_value(&self.setup.layout(), task, id)
    }

    /// Best observed target outcome.
    pub fn incumbent(&self) -> Option<f64> {
        self.setup.data.best_target()
    }

    /// Posterior at a target-space point in `[0, 1]^d`.
    pub fn predict(&self, x: &[f64]) -> Result<Posterior, ModelError> {
        if x.len() != self.setup.target_dim {
            return Err(GpError::DimensionMismatch {
                task: self.setup.target_task,
                expected: self.setup.target_dim,
                got: x.len(),
            }
            .into());
        }
        let post = match &self.setup.target_columns {
            None => self.gp.predict(x, self.setup.target_task)?,
            Some(cols) => {
                let sub: Vec<f64> = cols.iter().map(|&c| x[c]).collect();
                self.gp.predict(&sub, self.setup.target_task)?
            }
        };
        Ok(post)
    }
}
