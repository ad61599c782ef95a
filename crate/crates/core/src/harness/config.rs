use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::benchmarks::{hartmann_heterogeneous, load_tabular, Problem};
use crate::models::ModelKind;
use crate::space::TaskSpec;

/// An optimization strategy compared by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Random,
    Vanilla,
    ConditionalMtgp,
    CommonParamsMtgp,
    ImputedMtgpFixed,
    ImputedMtgpLearned,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Random,
        Method::Vanilla,
        Method::ConditionalMtgp,
        Method::CommonParamsMtgp,
        Method::ImputedMtgpFixed,
        Method::ImputedMtgpLearned,
    ];

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            Method::Random => None,
            Method::Vanilla => Some(ModelKind::Vanilla),
            Method::ConditionalMtgp => Some(ModelKind::ConditionalMtgp),
            Method::CommonParamsMtgp => Some(ModelKind::CommonParamsMtgp),
            Method::ImputedMtgpFixed => Some(ModelKind::ImputedMtgpFixed),
            Method::ImputedMtgpLearned => Some(ModelKind::ImputedMtgpLearned),
        }
    }

    pub fn name(self) -> &'static str {
        self.model_kind().map_or("RANDOM", ModelKind::name)
    }

    /// Position in [`Method::ALL`]; fixes the method's seed stream.
    pub fn index(self) -> usize {
        Method::ALL.iter().position(|&m| m == self).expect("listed")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Parse(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSpec {
    Hartmann6Heterogeneous,
    Tabular { path: PathBuf, target_task_id: usize, source_task_ids: Vec<usize> },
}

impl ProblemSpec {
    pub fn resolve(&self) -> Result<Box<dyn Problem>, HarnessError> {
        Ok(match self {
            ProblemSpec::Hartmann6Heterogeneous => Box::new(hartmann_heterogeneous()),
            ProblemSpec::Tabular { path, target_task_id, source_task_ids } => {
                Box::new(load_tabular(path, *target_task_id, source_task_ids)?)
            }
        })
    }
}

/// How surrogate hyperparameters are chosen at each iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperparameterMode {
    #[default]
    Map,
    /// Frozen at the prior medians.
    PriorMedian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_source_trials")]
    pub source_trials_per_task: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub hyperparameters: HyperparameterMode,
    /// MAP restarts per fit.
    #[serde(default = "default_model_restarts")]
    pub model_restarts: usize,
    /// Expected task spaces; checked against the problem when present.
    #[serde(default)]
    pub tasks: Option<Vec<TaskSpec>>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_n_init() -> usize {
    4
}

fn default_budget() -> usize {
    30
}

fn default_source_trials() -> usize {
    30
}

fn default_replications() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_model_restarts() -> usize {
    2
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec) -> Self {
        ExperimentConfig {
            problem,
            methods: all_methods(),
            n_init: default_n_init(),
            budget: default_budget(),
            source_trials_per_task: default_source_trials(),
            replications: default_replications(),
            base_seed: 0,
            output_dir: default_output_dir(),
            hyperparameters: HyperparameterMode::Map,
            model_restarts: default_model_restarts(),
            tasks: None,
        }
    }

    pub fn from_json(json: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = serde_json::from_str(json).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.budget == 0 {
            return fail("budget must be at least 1");
        }
        if self.replications == 0 {
            return fail("replications must be at least 1");
        }
        if self.n_init == 0 {
            return fail("n_init must be at least 1");
        }
        if self.model_restarts == 0 {
            return fail("model_restarts must be at least 1");
        }
        if self.methods.is_empty() {
            return fail("no methods selected");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(HarnessError::Config(format!("method {m} listed twice")));
            }
        }
        if let Some(tasks) = &self.tasks {
            crate::space::validate_tasks(tasks).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Checks the optional task list against the problem's tasks.
    pub fn check_tasks(&self, problem: &dyn Problem) -> Result<(), HarnessError> {
        match &self.tasks {
            Some(tasks) if tasks.as_slice() != problem.tasks() => {
                Err(HarnessError::Config(format!("configured tasks do not match problem {}", problem.name())))
            }
            _ => Ok(()),
        }
    }
}
