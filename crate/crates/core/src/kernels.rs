//! Covariance functions over heterogeneous task inputs.
//!
//! * [`se_kernel`]: ARD squared-exponential base kernel.
//! * [`conditional_kernel`]: sum of per-block base kernels, restricted to the
//!   blocks that both inputs' tasks contain.
//! * [`icm_kernel`]: conditional kernel times the task covariance `B[i, i']`.
//! * [`union_kernel`]: one SE kernel over the union space times `B[i, i']`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use thiserror::Error;

use crate::space::SubsetPartition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown task {0}")]
    UnknownTask(usize),
    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
}

pub const INITIAL_JITTER: f64 = 1e-6;
pub const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockKernelParams {
    pub lengthscales: Vec<f64>,
    pub output_scale: f64,
}

impl BlockKernelParams {
    pub fn new(lengthscales: Vec<f64>, output_scale: f64) -> Self {
        debug_assert!(lengthscales.iter().all(|&l| l > 0.0) && output_scale > 0.0);
        BlockKernelParams { lengthscales, output_scale }
    }

    pub fn isotropic(dim: usize, lengthscale: f64, output_scale: f64) -> Self {
        Self::new(vec![lengthscale; dim], output_scale)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }
}

/// `output_scale * exp(-0.5 * sum(((u - v) / l)^2))`.
pub fn se_kernel(u: &[f64], v: &[f64], params: &BlockKernelParams) -> Result<f64, KernelError> {
    let d = params.dim();
    if u.len() != d || v.len() != d {
        return Err(KernelError::DimensionMismatch { expected: d, got: if u.len() != d { u.len() } else { v.len() } });
    }
    Ok(se_unchecked(u, v, params))
}

#[inline]
pub(crate) fn se_unchecked(u: &[f64], v: &[f64], params: &BlockKernelParams) -> f64 {
    let q: f64 = u
        .iter()
        .zip(v)
        .zip(&params.lengthscales)
        .map(|((a, b), l)| {
            let r = (a - b) / l;
            r * r
        })
        .sum();
    params.output_scale * (-0.5 * q).exp()
}

/// Positive semi-definite task covariance `B = L L^T (+ diag jitter)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCovariance {
    factor: DMatrix<f64>,
    jitter: Option<Vec<f64>>,
    matrix: DMatrix<f64>,
}

impl TaskCovariance {
    /// `B = L L^T` from a lower-triangular factor.
    pub fn from_factor(factor: DMatrix<f64>) -> Self {
        let factor = factor.lower_triangle();
        let matrix = &factor * factor.transpose();
        TaskCovariance { factor, jitter: None, matrix }
    }

    /// Rows of the factor are scaled to unit norm first, so `B` has a unit diagonal.
    pub fn correlation_from_factor(factor: DMatrix<f64>) -> Self {
        let mut factor = factor.lower_triangle();
        for mut row in factor.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        Self::from_factor(factor)
    }

    pub fn identity(tasks: usize) -> Self {
        Self::from_factor(DMatrix::identity(tasks, tasks))
    }

    pub fn with_jitter(mut self, jitter: Vec<f64>) -> Self {
        assert_eq!(jitter.len(), self.tasks());
        for (i, j) in jitter.iter().enumerate() {
            self.matrix[(i, i)] += j;
        }
        self.jitter = Some(jitter);
        self
    }

    pub fn tasks(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter(&self) -> Option<&[f64]> {
        self.jitter.as_deref()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64, KernelError> {
        let t = self.tasks();
        if i >= t {
            return Err(KernelError::UnknownTask(i));
        }
        if j >= t {
            return Err(KernelError::UnknownTask(j));
        }
        Ok(self.matrix[(i, j)])
    }
}

/// Sum of `k_j(x[block_j], x'[block_j])` over the blocks present in both tasks.
pub fn conditional_kernel(
    x: &[f64],
    task: usize,
    x2: &[f64],
    task2: usize,
    partition: &SubsetPartition,
    params: &[BlockKernelParams],
) -> Result<f64, KernelError> {
    let t = partition.task_count();
    for &(i, p) in &[(task, x), (task2, x2)] {
        if i >= t {
            return Err(KernelError::UnknownTask(i));
        }
        let expected = (0..partition.block_count()).filter_map(|b| partition.columns(i, b)).map(<[usize]>::len).sum();
        if p.len() != expected {
            return Err(KernelError::DimensionMismatch { expected, got: p.len() });
        }
    }
    if params.len() != partition.block_count() {
        return Err(KernelError::DimensionMismatch { expected: partition.block_count(), got: params.len() });
    }
    let mut total = 0.0;
    let mut u = Vec::new();
    let mut v = Vec::new();
    for (b, bp) in params.iter().enumerate() {
        let (Some(ca), Some(cb)) = (partition.columns(task, b), partition.columns(task2, b)) else {
            continue;
        };
        u.clear();
        v.clear();
        u.extend(ca.iter().map(|&c| x[c]));
        v.extend(cb.iter().map(|&c| x2[c]));
        total += se_kernel(&u, &v, bp)?;
    }
    Ok(total)
}

/// `conditional_kernel(x, i, x', i') * B[i, i']`.
pub fn icm_kernel(
    x: &[f64],
    task: usize,
    x2: &[f64],
    task2: usize,
    partition: &SubsetPartition,
    params: &[BlockKernelParams],
    task_cov: &TaskCovariance,
) -> Result<f64, KernelError> {
    let kc = conditional_kernel(x, task, x2, task2, partition, params)?;
    Ok(kc * task_cov.get(task, task2)?)
}

/// `se_kernel(z, z') * B[i, i']` for points already embedded in the union space.
pub fn union_kernel(
    z: &[f64],
    z2: &[f64],
    params: &BlockKernelParams,
    task_cov: &TaskCovariance,
    task: usize,
    task2: usize,
) -> Result<f64, KernelError> {
    Ok(se_kernel(z, z2, params)? * task_cov.get(task, task2)?)
}

/// Kernel matrix `K[a, b] = kernel(a, b)`; the lower triangle is computed and mirrored.
pub fn gram<P, F>(points: &[P], kernel: F) -> DMatrix<f64>
where
    F: Fn(&P, &P) -> f64,
{
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = kernel(&points[a], &points[b]);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// Fallible variant of [`gram`] for kernels that validate their inputs.
pub fn try_gram<P, F>(points: &[P], kernel: F) -> Result<DMatrix<f64>, KernelError>
where
    F: Fn(&P, &P) -> Result<f64, KernelError>,
{
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            let v = kernel(&points[a], &points[b])?;
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    Ok(k)
}

/// Gram matrix of training observations: [`gram`] plus `noise_variance + INITIAL_JITTER` on the diagonal.
pub fn gram_with_noise<P, F>(points: &[P], kernel: F, noise_variance: f64) -> DMatrix<f64>
where
    F: Fn(&P, &P) -> f64,
{
    let mut k = gram(points, kernel);
    for i in 0..k.nrows() {
        k[(i, i)] += noise_variance + INITIAL_JITTER;
    }
    k
}

/// Cholesky factor of `k`, adding diagonal jitter from `INITIAL_JITTER` up to
/// `MAX_JITTER` (x10 per attempt) until the factorization succeeds. `k` is
/// expected to already contain `INITIAL_JITTER`. Returns the total jitter.
pub fn cholesky_with_jitter(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), KernelError> {
    let mut jitter = INITIAL_JITTER;
    let mut extra = 0.0;
    loop {
        let mut attempt = k.clone();
        if extra > 0.0 {
            for i in 0..attempt.nrows() {
                attempt[(i, i)] += extra;
            }
        }
        if let Some(chol) = Cholesky::new(attempt) {
            return Ok((chol, jitter));
        }
        if jitter >= MAX_JITTER {
            return Err(KernelError::NotPositiveDefinite { jitter });
        }
        let next = jitter * 10.0;
        extra += next - jitter;
        jitter = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_partition, TaskSpec};
    use nalgebra::dmatrix;

    fn appendix_partition() -> SubsetPartition {
        let tasks = vec![
            TaskSpec::unit(0, &[1, 2]).unwrap(),
            TaskSpec::unit(1, &[1, 2, 3]).unwrap(),
            TaskSpec::unit(2, &[1, 2, 4]).unwrap(),
        ];
        build_partition(&tasks).unwrap()
    }

    fn block_params() -> Vec<BlockKernelParams> {
        vec![
            BlockKernelParams::new(vec![0.4, 0.7], 1.3),
            BlockKernelParams::new(vec![0.5], 0.8),
            BlockKernelParams::new(vec![0.9], 2.0),
        ]
    }

    #[test]
    fn se_values() {
        let p = BlockKernelParams::isotropic(1, 1.0, 1.0);
        assert_eq!(se_kernel(&[0.3], &[0.3], &BlockKernelParams::isotropic(1, 0.2, 2.5)).unwrap(), 2.5);
        assert!((se_kernel(&[0.0], &[1.0], &p).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-15);
        let q = BlockKernelParams::new(vec![0.3, 1.7], 0.9);
        assert_eq!(se_kernel(&[0.1, 0.8], &[0.5, 0.2], &q).unwrap(), se_kernel(&[0.5, 0.2], &[0.1, 0.8], &q).unwrap());
        assert!(matches!(se_kernel(&[0.0, 1.0], &[1.0], &p), Err(KernelError::DimensionMismatch { .. })));
    }

    #[test]
    fn conditional_kernel_appendix_cases() {
        let part = appendix_partition();
        let bp = block_params();
        let x = [0.1, 0.6];
        let x2 = [0.3, 0.2, 0.9];
        let k12 = conditional_kernel(&x, 0, &x2, 1, &part, &bp).unwrap();
        let k1 = se_kernel(&[0.1, 0.6], &[0.3, 0.2], &bp[0]).unwrap();
        assert!((k12 - k1).abs() < 1e-15);

        let y = [0.5, 0.5, 0.1];
        let k22 = conditional_kernel(&y, 1, &x2, 1, &part, &bp).unwrap();
        let expected =
            se_kernel(&[0.5, 0.5], &[0.3, 0.2], &bp[0]).unwrap() + se_kernel(&[0.1], &[0.9], &bp[1]).unwrap();
        assert!((k22 - expected).abs() < 1e-15);

        // tasks 1 and 2 share only block [1,2]
        let z = [0.3, 0.2, 0.4];
        let k23 = conditional_kernel(&x2, 1, &z, 2, &part, &bp).unwrap();
        assert!((k23 - se_kernel(&[0.3, 0.2], &[0.3, 0.2], &bp[0]).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn disjoint_tasks_do_not_correlate() {
        let tasks = vec![TaskSpec::unit(0, &[1, 2]).unwrap(), TaskSpec::unit(1, &[3]).unwrap()];
        let part = build_partition(&tasks).unwrap();
        let bp = vec![BlockKernelParams::isotropic(2, 0.5, 1.0), BlockKernelParams::isotropic(1, 0.5, 1.0)];
        assert_eq!(conditional_kernel(&[0.2, 0.2], 0, &[0.2], 1, &part, &bp).unwrap(), 0.0);
    }

    #[test]
    fn conditional_kernel_errors() {
        let part = appendix_partition();
        let bp = block_params();
        assert_eq!(conditional_kernel(&[0.1, 0.2], 5, &[0.1, 0.2], 0, &part, &bp), Err(KernelError::UnknownTask(5)));
        assert!(matches!(
            conditional_kernel(&[0.1], 0, &[0.1, 0.2], 0, &part, &bp),
            Err(KernelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn icm_with_identity_and_factor() {
        let part = appendix_partition();
        let bp = block_params();
        let x = [0.1, 0.6];
        let x2 = [0.3, 0.2, 0.9];
        let eye = TaskCovariance::identity(3);
        assert_eq!(icm_kernel(&x, 0, &x2, 1, &part, &bp, &eye).unwrap(), 0.0);
        let kc = conditional_kernel(&x2, 1, &x2, 1, &part, &bp).unwrap();
        assert_eq!(icm_kernel(&x2, 1, &x2, 1, &part, &bp, &eye).unwrap(), kc);

        let two = build_partition(&[TaskSpec::unit(0, &[1, 2]).unwrap(), TaskSpec::unit(1, &[1, 2]).unwrap()]).unwrap();
        let bp2 = vec![BlockKernelParams::isotropic(2, 0.5, 1.0)];
        let cov = TaskCovariance::from_factor(dmatrix![1.0, 0.0; 0.5, 0.866]);
        assert!((cov.get(0, 1).unwrap() - 0.5).abs() < 1e-15);
        let kc = conditional_kernel(&[0.1, 0.2], 0, &[0.4, 0.4], 1, &two, &bp2).unwrap();
        let k = icm_kernel(&[0.1, 0.2], 0, &[0.4, 0.4], 1, &two, &bp2, &cov).unwrap();
        assert!((k - 0.5 * kc).abs() < 1e-15);
    }

    #[test]
    fn correlation_factor_has_unit_diagonal() {
        let cov = TaskCovariance::correlation_from_factor(dmatrix![2.0, 0.0, 0.0; 0.3, 1.5, 0.0; -1.0, 0.2, 0.4]);
        for i in 0..3 {
            assert!((cov.matrix()[(i, i)] - 1.0).abs() < 1e-14);
        }
        let jittered = TaskCovariance::identity(2).with_jitter(vec![0.1, 0.2]);
        assert_eq!(jittered.get(1, 1).unwrap(), 1.2);
    }

    #[test]
    fn union_kernel_values() {
        let p = BlockKernelParams::isotropic(2, 1.0, 1.0);
        let ones = TaskCovariance::from_factor(dmatrix![1.0, 0.0; 1.0, 1e-9]);
        assert!((union_kernel(&[0.0, 0.0], &[1.0, 1.0], &p, &ones, 0, 1).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        let q = BlockKernelParams::isotropic(2, 0.3, 1.7);
        assert!(
            (union_kernel(&[0.2, 0.1], &[0.2, 0.1], &q, &TaskCovariance::identity(2), 1, 1).unwrap() - 1.7).abs()
                < 1e-15
        );
        assert_eq!(union_kernel(&[0.2, 0.1], &[0.2, 0.1], &q, &TaskCovariance::identity(2), 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn gram_is_symmetric_and_noisy_diagonal() {
        let p = BlockKernelParams::new(vec![0.3, 0.8], 1.1);
        let pts: Vec<[f64; 2]> = (0..7).map(|i| [i as f64 * 0.13 % 1.0, (i * i) as f64 * 0.07 % 1.0]).collect();
        let k = gram(&pts, |a, b| se_unchecked(a, b, &p));
        assert_eq!((&k - k.transpose()).abs().max(), 0.0);
        let one = gram_with_noise(&pts[..1], |a, b| se_unchecked(a, b, &p), 0.01);
        assert_eq!(one.shape(), (1, 1));
        assert!((one[(0, 0)] - (1.1 + 0.01 + INITIAL_JITTER)).abs() < 1e-15);
    }

    #[test]
    fn jitter_escalation() {
        // rank-one matrix: needs extra jitter but succeeds
        let k = DMatrix::from_element(3, 3, 1.0);
        let (_, jitter) = cholesky_with_jitter(k).unwrap();
        assert!((INITIAL_JITTER..=MAX_JITTER).contains(&jitter));
        let bad = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(cholesky_with_jitter(bad), Err(KernelError::NotPositiveDefinite { .. })));
    }
}
