use serde::{Deserialize, Serialize};

/// One evaluated point. `x` is in the task's normalized `[0, 1]` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Observation { x, y }
    }
}

/// Observations for every task, indexed by task index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub target_task: usize,
    pub tasks: Vec<Vec<Observation>>,
}

impl ObservationSet {
    pub fn new(task_count: usize, target_task: usize) -> Self {
        assert!(target_task < task_count);
        ObservationSet { target_task, tasks: vec![Vec::new(); task_count] }
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn push(&mut self, task: usize, obs: Observation) {
        self.tasks[task].push(obs);
    }

    pub fn target(&self) -> &[Observation] {
        &self.tasks[self.target_task]
    }

    pub fn len(&self) -> usize {
        self.tasks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All observations in stacking order: by task index, then insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &Observation)> {
        self.tasks.iter().enumerate().flat_map(|(t, obs)| obs.iter().map(move |o| (t, o)))
    }

    /// Smallest observed target outcome.
    pub fn best_target(&self) -> Option<f64> {
        self.target().iter().map(|o| o.y).fold(None, |acc, y| Some(acc.map_or(y, |a: f64| a.min(y))))
    }

    /// Every point lies in its normalized box and every outcome is finite.
    pub fn is_valid(&self) -> bool {
        self.iter().all(|(_, o)| o.y.is_finite() && o.x.iter().all(|v| (0.0..=1.0).contains(v)))
    }
}
