//! Multi-task covariance functions as used by the GP engine: values and
//! gradients with respect to the packed parameter vector.

use nalgebra::DMatrix;

use super::params::{sigmoid, ModelParams, ParamLayout, TaskCovMode};
use crate::kernels::{se_unchecked, BlockKernelParams};
use crate::space::{universal_set, ParamId, SpaceError, SubsetPartition, TaskSpec};

/// Where one union-space coordinate of a task's point comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordSource {
    Column(usize),
    Fixed(f64),
    /// Index into `ModelParams::imputed`.
    Learned(usize),
}

/// Embedding of every task's points into the union space.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionEmbedding {
    ids: Vec<ParamId>,
    sources: Vec<Vec<CoordSource>>,
    slots: Vec<(usize, ParamId)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Imputation {
    Fixed(f64),
    Learned,
}

impl UnionEmbedding {
    pub fn new(tasks: &[TaskSpec], imputation: Imputation) -> Result<Self, SpaceError> {
        let ids: Vec<ParamId> = universal_set(tasks)?.into_iter().collect();
        let mut ordered: Vec<&TaskSpec> = tasks.iter().collect();
        ordered.sort_by_key(|t| t.task_index);
        let mut slots = Vec::new();
        let sources = ordered
            .iter()
            .map(|task| {
                ids.iter()
                    .map(|&id| match (task.position(id), imputation) {
                        (Some(c), _) => CoordSource::Column(c),
                        (None, Imputation::Fixed(v)) => CoordSource::Fixed(v),
                        (None, Imputation::Learned) => {
                            slots.push((task.task_index, id));
                            CoordSource::Learned(slots.len() - 1)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(UnionEmbedding { ids, sources, slots })
    }

    /// Union parameter ids in coordinate order.
    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.ids.len()
    }

    pub fn slots(&self) -> &[(usize, ParamId)] {
        &self.slots
    }

    pub fn sources(&self, task: usize) -> &[CoordSource] {
        &self.sources[task]
    }

    pub fn embed(&self, task: usize, x: &[f64], imputed: &[f64]) -> Vec<f64> {
        self.sources[task]
            .iter()
            .map(|s| match *s {
                CoordSource::Column(c) => x[c],
                CoordSource::Fixed(v) => v,
                CoordSource::Learned(k) => imputed[k],
            })
            .collect()
    }
}

/// Covariance structure of a GP model.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSpec {
    /// Per-block SE kernels gated by block membership, times a unit-diagonal
    /// task covariance.
    Conditional(SubsetPartition),
    /// One SE kernel over the union space, times a full task covariance.
    Union(UnionEmbedding),
}

impl CovarianceSpec {
    pub fn layout(&self) -> ParamLayout {
        match self {
            CovarianceSpec::Conditional(p) => ParamLayout {
                block_dims: p.block_dims(),
                n_tasks: p.task_count(),
                task_cov: TaskCovMode::Correlation,
                imputed_slots: vec![],
            },
            CovarianceSpec::Union(e) => ParamLayout {
                block_dims: vec![e.dim()],
                n_tasks: e.sources.len(),
                task_cov: TaskCovMode::Full,
                imputed_slots: e.slots.clone(),
            },
        }
    }

    pub fn task_count(&self) -> usize {
        match self {
            CovarianceSpec::Conditional(p) => p.task_count(),
            CovarianceSpec::Union(e) => e.sources.len(),
        }
    }

    /// Dimension of a point of `task`.
    pub fn task_dim(&self, task: usize) -> usize {
        match self {
            CovarianceSpec::Conditional(p) => {
                (0..p.block_count()).filter_map(|b| p.columns(task, b)).map(<[usize]>::len).sum()
            }
            CovarianceSpec::Union(e) => e.sources[task].iter().filter(|s| matches!(s, CoordSource::Column(_))).count(),
        }
    }

    pub(crate) fn features(&self, task: usize, x: &[f64], params: &ModelParams) -> Features {
        let blocks = match self {
            CovarianceSpec::Conditional(p) => (0..p.block_count())
                .map(|b| p.columns(task, b).map(|cols| cols.iter().map(|&c| x[c]).collect()))
                .collect(),
            CovarianceSpec::Union(e) => vec![Some(e.embed(task, x, &params.imputed))],
        };
        Features { task, blocks }
    }

    /// Kernel value; `params.task_cov` supplies `B`.
    pub(crate) fn eval(&self, params: &ModelParams, a: &Features, b: &Features) -> f64 {
        block_sum(&params.blocks, a, b) * params.task_cov.matrix()[(a.task, b.task)]
    }

    /// Adds `weight * dK(a, b)/d raw` to `grad` (noise excluded).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate_grad(
        &self,
        layout: &ParamLayout,
        params: &ModelParams,
        raw: &[f64],
        dcov: &[DMatrix<f64>],
        a: &Features,
        b: &Features,
        weight: f64,
        grad: &mut [f64],
    ) {
        let bab = params.task_cov.matrix()[(a.task, b.task)];
        let mut kc = 0.0;
        for (j, bp) in params.blocks.iter().enumerate() {
            let (Some(u), Some(v)) = (&a.blocks[j], &b.blocks[j]) else { continue };
            let k = se_unchecked(u, v, bp);
            kc += k;
            let wk = weight * k * bab;
            let at = layout.block_offset(j);
            for (d, l) in bp.lengthscales.iter().enumerate() {
                let r = (u[d] - v[d]) / l;
                grad[at + d] += wk * r * r;
            }
            grad[at + bp.dim()] += wk;

            if let CovarianceSpec::Union(e) = self {
                if e.slots.is_empty() {
                    continue;
                }
                let base = layout.imputed_offset();
                let (sa, sb) = (&e.sources[a.task], &e.sources[b.task]);
                for (d, l) in bp.lengthscales.iter().enumerate() {
                    let (ka, kb) = (learned(sa[d]), learned(sb[d]));
                    if ka.is_some() && ka == kb {
                        continue;
                    }
                    let dk_du = -wk * (u[d] - v[d]) / (l * l);
                    if let Some(s) = ka {
                        let z = sigmoid(raw[base + s]);
                        grad[base + s] += dk_du * z * (1.0 - z);
                    }
                    if let Some(s) = kb {
                        let z = sigmoid(raw[base + s]);
                        grad[base + s] -= dk_du * z * (1.0 - z);
                    }
                }
            }
        }
        if kc != 0.0 {
            let at = layout.factor_offset();
            for (k, d) in dcov.iter().enumerate() {
                grad[at + k] += weight * kc * d[(a.task, b.task)];
            }
        }
    }
}

fn learned(s: CoordSource) -> Option<usize> {
    match s {
        CoordSource::Learned(k) => Some(k),
        _ => None,
    }
}

fn block_sum(blocks: &[BlockKernelParams], a: &Features, b: &Features) -> f64 {
    blocks
        .iter()
        .enumerate()
        .filter_map(|(j, bp)| match (&a.blocks[j], &b.blocks[j]) {
            (Some(u), Some(v)) => Some(se_unchecked(u, v, bp)),
            _ => None,
        })
        .sum()
}

/// A point prepared for kernel evaluation: its task and the sub-vector for
/// each block (`None` where the block is absent from the task).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Features {
    pub task: usize,
    pub blocks: Vec<Option<Vec<f64>>>,
}
