//! Trainable GP quantities and their unconstrained packing.
//!
//! Packing order: for each block its log-lengthscales then log-output-scale;
//! the log noise variance; the task-covariance factor entries (row-major lower
//! triangle); the logits of learned imputed values.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::kernels::{BlockKernelParams, TaskCovariance};
use crate::space::ParamId;

/// Lengthscale prior: `LogNormal(LENGTHSCALE_LOC + 0.5 ln D, LENGTHSCALE_SCALE)`.
pub const LENGTHSCALE_LOC: f64 = std::f64::consts::SQRT_2;
pub const LENGTHSCALE_SCALE: f64 = 1.732_050_807_568_877_2;
pub const OUTPUT_SCALE_LOC: f64 = 0.0;
pub const OUTPUT_SCALE_SCALE: f64 = 1.0;
pub const NOISE_LOC: f64 = -4.0;
pub const NOISE_SCALE: f64 = 1.0;

/// How the task covariance is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskCovMode {
    /// Unit diagonal. Row `i` of the factor is `(a_i0, .., a_i(i-1), 1)`
    /// normalized, so only the strictly-lower entries are trainable.
    Correlation,
    /// `B = L L^T` with softplus diagonal.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub block_dims: Vec<usize>,
    pub n_tasks: usize,
    pub task_cov: TaskCovMode,
    /// `(task, global id)` of each learned imputed value.
    pub imputed_slots: Vec<(usize, ParamId)>,
}

impl ParamLayout {
    pub fn block_offset(&self, block: usize) -> usize {
        self.block_dims[..block].iter().map(|d| d + 1).sum()
    }

    pub fn noise_offset(&self) -> usize {
        self.block_offset(self.block_dims.len())
    }

    pub fn factor_offset(&self) -> usize {
        self.noise_offset() + 1
    }

    pub fn factor_len(&self) -> usize {
        let t = self.n_tasks;
        match self.task_cov {
            TaskCovMode::Correlation => t * (t - 1) / 2,
            TaskCovMode::Full => t * (t + 1) / 2,
        }
    }

    pub fn imputed_offset(&self) -> usize {
        self.factor_offset() + self.factor_len()
    }

    pub fn len(&self) -> usize {
        self.imputed_offset() + self.imputed_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(row, col)` of each factor entry in packing order.
    pub fn factor_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.factor_len());
        for r in 0..self.n_tasks {
            for c in 0..=r {
                if c == r && self.task_cov == TaskCovMode::Correlation {
                    continue;
                }
                out.push((r, c));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub blocks: Vec<BlockKernelParams>,
    pub task_cov: TaskCovariance,
    pub noise_variance: f64,
    /// Learned imputed values in `[0, 1]`, aligned with `ParamLayout::imputed_slots`.
    pub imputed: Vec<f64>,
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn inv_softplus(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Task covariance from raw factor entries, with `dB/d raw_k` for each entry.
pub(crate) fn task_cov_from_raw(
    layout: &ParamLayout,
    raw: &[f64],
    with_grad: bool,
) -> (TaskCovariance, Vec<DMatrix<f64>>) {
    let t = layout.n_tasks;
    let entries = layout.factor_entries();
    let mut factor = DMatrix::zeros(t, t);
    match layout.task_cov {
        TaskCovMode::Correlation => {
            for i in 0..t {
                factor[(i, i)] = 1.0;
            }
            for (&(r, c), &v) in entries.iter().zip(raw) {
                factor[(r, c)] = v;
            }
        }
        TaskCovMode::Full => {
            for (&(r, c), &v) in entries.iter().zip(raw) {
                factor[(r, c)] = if r == c { softplus(v) } else { v };
            }
        }
    }
    let cov = match layout.task_cov {
        TaskCovMode::Correlation => TaskCovariance::correlation_from_factor(factor.clone()),
        TaskCovMode::Full => TaskCovariance::from_factor(factor.clone()),
    };
    if !with_grad {
        return (cov, Vec::new());
    }
    let used = cov.factor();
    let grads = entries
        .iter()
        .zip(raw)
        .map(|(&(r, c), &v)| {
            // derivative of row r of the (normalized) factor
            let g: DVector<f64> = match layout.task_cov {
                TaskCovMode::Correlation => {
                    let norm = factor.row(r).norm();
                    let row = used.row(r).transpose();
                    let mut e = DVector::zeros(t);
                    e[c] = 1.0;
                    (e - &row * row[c]) / norm
                }
                TaskCovMode::Full => {
                    let mut e = DVector::zeros(t);
                    e[c] = if r == c { sigmoid(v) } else { 1.0 };
                    e
                }
            };
            let mut d = DMatrix::zeros(t, t);
            for q in 0..t {
                let val = g.dot(&used.row(q).transpose());
                d[(r, q)] += val;
                d[(q, r)] += val;
            }
            d
        })
        .collect();
    (cov, grads)
}

impl ModelParams {
    pub fn unpack(layout: &ParamLayout, raw: &[f64]) -> Self {
        assert_eq!(raw.len(), layout.len(), "raw parameter vector has the wrong length");
        let mut blocks = Vec::with_capacity(layout.block_dims.len());
        let mut at = 0;
        for &d in &layout.block_dims {
            let lengthscales = raw[at..at + d].iter().map(|u| u.exp()).collect();
            let output_scale = raw[at + d].exp();
            blocks.push(BlockKernelParams::new(lengthscales, output_scale));
            at += d + 1;
        }
        let noise_variance = raw[layout.noise_offset()].exp();
        let (task_cov, _) = task_cov_from_raw(layout, &raw[layout.factor_offset()..layout.imputed_offset()], false);
        let imputed = raw[layout.imputed_offset()..].iter().map(|&u| sigmoid(u)).collect();
        ModelParams { blocks, task_cov, noise_variance, imputed }
    }

    pub fn pack(&self, layout: &ParamLayout) -> Vec<f64> {
        let mut raw = Vec::with_capacity(layout.len());
        for b in &self.blocks {
            raw.extend(b.lengthscales.iter().map(|l| l.ln()));
            raw.push(b.output_scale.ln());
        }
        raw.push(self.noise_variance.ln());
        let l = self.task_cov.factor();
        for (r, c) in layout.factor_entries() {
            raw.push(match layout.task_cov {
                TaskCovMode::Correlation => l[(r, c)] / l[(r, r)],
                TaskCovMode::Full if r == c => inv_softplus(l[(r, c)]),
                TaskCovMode::Full => l[(r, c)],
            });
        }
        raw.extend(self.imputed.iter().map(|&v| logit(v)));
        raw
    }

    /// Value learned for the missing parameter `id` of `task`, if any.
    pub fn imputed_value(&self, layout: &ParamLayout, task: usize, id: ParamId) -> Option<f64> {
        layout.imputed_slots.iter().position(|&s| s == (task, id)).map(|i| self.imputed[i])
    }

    /// Every lengthscale, output scale and the noise at its prior median; the
    /// task covariance at the identity; imputed values at 0.5.
    pub fn prior_median(layout: &ParamLayout) -> Self {
        let blocks = layout
            .block_dims
            .iter()
            .map(|&d| BlockKernelParams::isotropic(d, lengthscale_loc(d).exp(), OUTPUT_SCALE_LOC.exp()))
            .collect();
        ModelParams {
            blocks,
            task_cov: TaskCovariance::identity(layout.n_tasks),
            noise_variance: NOISE_LOC.exp(),
            imputed: vec![0.5; layout.imputed_slots.len()],
        }
    }

    /// Raw vector drawn from the priors. Flat-prior entries: factor
    /// off-diagonals from N(0, 1), softplus diagonals at 1, imputed values uniform.
    pub fn sample_raw<R: Rng>(layout: &ParamLayout, rng: &mut R) -> Vec<f64> {
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut raw = Vec::with_capacity(layout.len());
        for &d in &layout.block_dims {
            let loc = lengthscale_loc(d);
            for _ in 0..d {
                raw.push(loc + LENGTHSCALE_SCALE * std.sample(rng));
            }
            raw.push(OUTPUT_SCALE_LOC + OUTPUT_SCALE_SCALE * std.sample(rng));
        }
        raw.push(NOISE_LOC + NOISE_SCALE * std.sample(rng));
        for (r, c) in layout.factor_entries() {
            raw.push(if r == c { inv_softplus(1.0) } else { std.sample(rng) });
        }
        for _ in &layout.imputed_slots {
            raw.push(logit(rng.random_range(0.02..0.98)));
        }
        raw
    }
}

pub fn lengthscale_loc(dim: usize) -> f64 {
    LENGTHSCALE_LOC + 0.5 * (dim as f64).ln()
}

/// Log density of `LogNormal(loc, scale)` at `x`; `-inf` for `x <= 0`.
pub fn lognormal_logpdf(x: f64, loc: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x.ln() - loc) / scale;
    -x.ln() - scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
}

/// `d/du log p(e^u)` for a LogNormal prior on `x = e^u`.
fn lognormal_dlog(u: f64, loc: f64, scale: f64) -> f64 {
    -1.0 - (u - loc) / (scale * scale)
}

/// Sum of the LogNormal log densities of all lengthscales, output scales and
/// the noise variance. Factor entries and imputed values have flat priors.
pub fn log_prior(params: &ModelParams) -> f64 {
    let mut total = 0.0;
    for b in &params.blocks {
        let loc = lengthscale_loc(b.dim());
        total += b.lengthscales.iter().map(|&l| lognormal_logpdf(l, loc, LENGTHSCALE_SCALE)).sum::<f64>();
        total += lognormal_logpdf(b.output_scale, OUTPUT_SCALE_LOC, OUTPUT_SCALE_SCALE);
    }
    total + lognormal_logpdf(params.noise_variance, NOISE_LOC, NOISE_SCALE)
}

/// Log prior and its gradient with respect to the raw vector.
pub(crate) fn log_prior_raw(layout: &ParamLayout, raw: &[f64], grad: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (j, &d) in layout.block_dims.iter().enumerate() {
        let at = layout.block_offset(j);
        let loc = lengthscale_loc(d);
        for k in at..at + d {
            total += lognormal_logpdf(raw[k].exp(), loc, LENGTHSCALE_SCALE);
            grad[k] += lognormal_dlog(raw[k], loc, LENGTHSCALE_SCALE);
        }
        total += lognormal_logpdf(raw[at + d].exp(), OUTPUT_SCALE_LOC, OUTPUT_SCALE_SCALE);
        grad[at + d] += lognormal_dlog(raw[at + d], OUTPUT_SCALE_LOC, OUTPUT_SCALE_SCALE);
    }
    let k = layout.noise_offset();
    total += lognormal_logpdf(raw[k].exp(), NOISE_LOC, NOISE_SCALE);
    grad[k] += lognormal_dlog(raw[k], NOISE_LOC, NOISE_SCALE);
    total
}
