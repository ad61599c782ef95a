//! Exact GP engine shared by every model variant: marginal likelihood,
//! LogNormal priors, MAP hyperparameter fitting and posterior prediction.
//!
//! Outcomes of all tasks are standardized jointly (mean 0, sample std 1)
//! before modeling and predictions are mapped back to the original scale.

mod covariance;
pub mod optim;
mod params;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub(crate) use covariance::Features;
pub use covariance::{CoordSource, CovarianceSpec, Imputation, UnionEmbedding};
pub use optim::LbfgsOptions;
pub use params::{
    lengthscale_loc, log_prior, lognormal_logpdf, ModelParams, ParamLayout, TaskCovMode, LENGTHSCALE_LOC,
    LENGTHSCALE_SCALE, NOISE_LOC, NOISE_SCALE, OUTPUT_SCALE_LOC, OUTPUT_SCALE_SCALE,
};

use crate::kernels::{cholesky_with_jitter, KernelError, INITIAL_JITTER};
use crate::observations::ObservationSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("every restart failed to factorize the kernel matrix")]
    FitFailed,
    #[error("data has {got} tasks, model expects {expected}")]
    TaskCountMismatch { expected: usize, got: usize },
    #[error("point for task {task} has {got} coordinates, expected {expected}")]
    DimensionMismatch { task: usize, expected: usize, got: usize },
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

/// Predictive distribution of the latent function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Analytic,
    /// Central differences of the full objective in the raw parameter space.
    FiniteDifference {
        step: f64,
    },
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub n_restarts: usize,
    pub optimizer: LbfgsOptions,
    pub gradient: GradientMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { n_restarts: 1, optimizer: LbfgsOptions::default(), gradient: GradientMode::Analytic }
    }
}

/// Stacked, standardized training data.
#[derive(Debug, Clone)]
struct TrainingSet {
    inputs: Vec<(usize, Vec<f64>)>,
    y: DVector<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl TrainingSet {
    fn new(spec: &CovarianceSpec, data: &ObservationSet) -> Result<Self, GpError> {
        if data.task_count() != spec.task_count() {
            return Err(GpError::TaskCountMismatch { expected: spec.task_count(), got: data.task_count() });
        }
        let mut inputs = Vec::with_capacity(data.len());
        let mut ys = Vec::with_capacity(data.len());
        for (task, obs) in data.iter() {
            let expected = spec.task_dim(task);
            if obs.x.len() != expected {
                return Err(GpError::DimensionMismatch { task, expected, got: obs.x.len() });
            }
            inputs.push((task, obs.x.clone()));
            ys.push(obs.y);
        }
        let (y_mean, y_scale) = standardization(&ys);
        let y = DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_scale));
        Ok(TrainingSet { inputs, y, y_mean, y_scale })
    }

    fn len(&self) -> usize {
        self.inputs.len()
    }
}

/// Mean and sample standard deviation; the scale falls back to 1 when it is
/// undefined or degenerate.
pub fn standardization(ys: &[f64]) -> (f64, f64) {
    if ys.is_empty() {
        return (0.0, 1.0);
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    if ys.len() < 2 {
        return (mean, 1.0);
    }
    let var = ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

struct Factorized {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    features: Vec<Features>,
}

fn factorize(spec: &CovarianceSpec, params: &ModelParams, train: &TrainingSet) -> Result<Factorized, KernelError> {
    let features: Vec<Features> = train.inputs.iter().map(|(t, x)| spec.features(*t, x, params)).collect();
    let n = features.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = spec.eval(params, &features[a], &features[b]);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
        k[(a, a)] += params.noise_variance + INITIAL_JITTER;
    }
    let (chol, _) = cholesky_with_jitter(k)?;
    let alpha = chol.solve(&train.y);
    Ok(Factorized { chol, alpha, features })
}

fn lml_from(train: &TrainingSet, f: &Factorized) -> f64 {
    let n = train.len() as f64;
    let log_det_half: f64 = f.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * train.y.dot(&f.alpha) - log_det_half - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// `-0.5 y^T K^-1 y - 0.5 log|K| - n/2 log 2pi` on the standardized outcomes.
pub fn log_marginal_likelihood(
    params: &ModelParams,
    data: &ObservationSet,
    spec: &CovarianceSpec,
) -> Result<f64, GpError> {
    let train = TrainingSet::new(spec, data)?;
    let f = factorize(spec, params, &train)?;
    Ok(lml_from(&train, &f))
}

/// Log marginal likelihood plus log prior: the quantity MAP fitting maximizes.
pub fn map_objective(params: &ModelParams, data: &ObservationSet, spec: &CovarianceSpec) -> Result<f64, GpError> {
    Ok(log_marginal_likelihood(params, data, spec)? + log_prior(params))
}

struct Objective<'a> {
    spec: &'a CovarianceSpec,
    layout: ParamLayout,
    train: TrainingSet,
}

impl Objective<'_> {
    fn value(&self, raw: &[f64]) -> Option<f64> {
        let params = ModelParams::unpack(&self.layout, raw);
        let f = factorize(self.spec, &params, &self.train).ok()?;
        let v = lml_from(&self.train, &f) + log_prior(&params);
        v.is_finite().then_some(v)
    }

    fn value_and_grad(&self, raw: &[f64]) -> Option<(f64, Vec<f64>)> {
        let layout = &self.layout;
        let mut params = ModelParams::unpack(layout, raw);
        let (cov, dcov) =
            params::task_cov_from_raw(layout, &raw[layout.factor_offset()..layout.imputed_offset()], true);
        params.task_cov = cov;
        let f = factorize(self.spec, &params, &self.train).ok()?;
        let lml = lml_from(&self.train, &f);

        let mut grad = vec![0.0; layout.len()];
        let prior = params::log_prior_raw(layout, raw, &mut grad);
        let kinv = f.chol.inverse();
        let alpha = &f.alpha;
        let n = self.train.len();
        let mut noise_grad = 0.0;
        for a in 0..n {
            for b in 0..=a {
                let w = alpha[a] * alpha[b] - kinv[(a, b)];
                let weight = if a == b { 0.5 * w } else { w };
                self.spec.accumulate_grad(
                    layout,
                    &params,
                    raw,
                    &dcov,
                    &f.features[a],
                    &f.features[b],
                    weight,
                    &mut grad,
                );
            }
            noise_grad += 0.5 * (alpha[a] * alpha[a] - kinv[(a, a)]);
        }
        grad[layout.noise_offset()] += noise_grad * params.noise_variance;
        let v = lml + prior;
        (v.is_finite() && grad.iter().all(|g| g.is_finite())).then_some((v, grad))
    }

    fn finite_difference(&self, raw: &[f64], step: f64) -> Option<(f64, Vec<f64>)> {
        let v = self.value(raw)?;
        let mut probe = raw.to_vec();
        let mut grad = Vec::with_capacity(raw.len());
        for k in 0..raw.len() {
            probe[k] = raw[k] + step;
            let up = self.value(&probe)?;
            probe[k] = raw[k] - step;
            let dn = self.value(&probe)?;
            probe[k] = raw[k];
            grad.push((up - dn) / (2.0 * step));
        }
        Some((v, grad))
    }

    fn eval(&self, raw: &[f64], mode: GradientMode) -> Option<(f64, Vec<f64>)> {
        match mode {
            GradientMode::Analytic => self.value_and_grad(raw),
            GradientMode::FiniteDifference { step } => self.finite_difference(raw, step),
        }
    }
}

/// Objective value and gradient with respect to the packed parameter vector,
/// exposed for gradient checks.
pub fn map_objective_raw(
    raw: &[f64],
    data: &ObservationSet,
    spec: &CovarianceSpec,
    mode: GradientMode,
) -> Result<Option<(f64, Vec<f64>)>, GpError> {
    let obj = Objective { spec, layout: spec.layout(), train: TrainingSet::new(spec, data)? };
    Ok(obj.eval(raw, mode))
}

#[derive(Debug, Clone)]
pub struct MapFit {
    pub params: ModelParams,
    pub objective: f64,
    /// Objective at each restart's starting point (`None` where undefined).
    pub start_objectives: Vec<Option<f64>>,
}

/// MAP estimate of the hyperparameters. The first restart starts at the
/// prior medians, the others at draws from the priors seeded by `seed`.
pub fn fit_map(data: &ObservationSet, spec: &CovarianceSpec, seed: u64, opts: &FitOptions) -> Result<MapFit, GpError> {
    let start = ModelParams::prior_median(&spec.layout());
    fit_map_from(data, spec, seed, opts, start.pack(&spec.layout()))
}

/// [`fit_map`] with an explicit first starting point.
pub fn fit_map_from(
    data: &ObservationSet,
    spec: &CovarianceSpec,
    seed: u64,
    opts: &FitOptions,
    first_start: Vec<f64>,
) -> Result<MapFit, GpError> {
    if data.len() < 2 {
        return Err(GpError::InsufficientData { needed: 2, got: data.len() });
    }
    let obj = Objective { spec, layout: spec.layout(), train: TrainingSet::new(spec, data)? };
    let layout = &obj.layout;
    let mut starts = vec![first_start];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 1..opts.n_restarts.max(1) {
        starts.push(ModelParams::sample_raw(layout, &mut rng));
    }

    let results: Vec<(Option<f64>, Option<optim::Minimum>)> = starts
        .into_par_iter()
        .map(|x0| {
            let initial = obj.value(&x0);
            let min = initial.and_then(|_| {
                optim::minimize(
                    |raw| obj.eval(raw, opts.gradient).map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect())),
                    x0,
                    &opts.optimizer,
                )
            });
            (initial, min)
        })
        .collect();

    let start_objectives = results.iter().map(|(s, _)| *s).collect();
    let mut best: Option<&optim::Minimum> = None;
    for m in results.iter().filter_map(|(_, m)| m.as_ref()) {
        if best.is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.ok_or(GpError::FitFailed)?;
    Ok(MapFit { params: ModelParams::unpack(layout, &best.x), objective: -best.value, start_objectives })
}

/// A GP conditioned on data with fixed hyperparameters.
pub struct FittedGp {
    spec: CovarianceSpec,
    params: ModelParams,
    train: TrainingSet,
    factor: Factorized,
}

impl std::fmt::Debug for FittedGp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FittedGp").field("params", &self.params).field("n", &self.train.len()).finish()
    }
}

impl FittedGp {
    pub fn new(spec: CovarianceSpec, params: ModelParams, data: &ObservationSet) -> Result<Self, GpError> {
        let train = TrainingSet::new(&spec, data)?;
        let factor = factorize(&spec, &params, &train)?;
        Ok(FittedGp { spec, params, train, factor })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from(&self.train, &self.factor)
    }

    /// Posterior and the predictive variance before clamping at zero.
    pub fn predict_unclamped(&self, x: &[f64], task: usize) -> Result<(Posterior, f64), GpError> {
        if task >= self.spec.task_count() {
            return Err(KernelError::UnknownTask(task).into());
        }
        let expected = self.spec.task_dim(task);
        if x.len() != expected {
            return Err(GpError::DimensionMismatch { task, expected, got: x.len() });
        }
        let f = self.spec.features(task, x, &self.params);
        let k = DVector::from_iterator(
            self.train.len(),
            self.factor.features.iter().map(|t| self.spec.eval(&self.params, &f, t)),
        );
        let prior = self.spec.eval(&self.params, &f, &f);
        let mean = k.dot(&self.factor.alpha);
        let v = self.factor.chol.l_dirty().solve_lower_triangular(&k).unwrap_or_else(|| DVector::zeros(k.len()));
        let raw_var = prior - v.norm_squared();
        let scale2 = self.train.y_scale * self.train.y_scale;
        let post =
            Posterior { mean: mean * self.train.y_scale + self.train.y_mean, variance: raw_var.max(0.0) * scale2 };
        Ok((post, raw_var * scale2))
    }

    pub fn predict(&self, x: &[f64], task: usize) -> Result<Posterior, GpError> {
        self.predict_unclamped(x, task).map(|(p, _)| p)
    }
}

/// Posterior at `x` for `task` under fixed hyperparameters.
pub fn posterior(
    params: &ModelParams,
    data: &ObservationSet,
    spec: &CovarianceSpec,
    x: &[f64],
    task: usize,
) -> Result<Posterior, GpError> {
    FittedGp::new(spec.clone(), params.clone(), data)?.predict(x, task)
}
