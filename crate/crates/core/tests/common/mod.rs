//! Dense reference computations shared by the integration tests.
#![allow(dead_code)]

use hetbo::gp::standardization;
use hetbo::kernels::INITIAL_JITTER;
use nalgebra::{DMatrix, DVector};

pub type Point = (usize, Vec<f64>);

/// GP posterior by explicit matrix inversion: outcomes standardized with
/// `(mean, std)`, the given kernel, noise plus the fixed jitter on the diagonal.
pub fn dense_posterior<K: Fn(&Point, &Point) -> f64>(
    train: &[Point],
    y: &[f64],
    kernel: K,
    noise: f64,
    query: &Point,
    (mean, std): (f64, f64),
) -> (f64, f64) {
    let n = train.len();
    let k =
        DMatrix::from_fn(n, n, |a, b| kernel(&train[a], &train[b]) + if a == b { noise + INITIAL_JITTER } else { 0.0 });
    let inv = k.try_inverse().expect("invertible");
    let ks = DVector::from_fn(n, |a, _| kernel(&train[a], query));
    let ys = DVector::from_fn(n, |a, _| (y[a] - mean) / std);
    let m = (ks.transpose() * &inv * ys)[0];
    let v = kernel(query, query) - (ks.transpose() * &inv * &ks)[0];
    (mean + std * m, v * std * std)
}

pub fn joint_standardization(y: &[f64]) -> (f64, f64) {
    standardization(y)
}

pub fn se(u: &[f64], v: &[f64], lengthscales: &[f64], scale: f64) -> f64 {
    let q: f64 = u.iter().zip(v).zip(lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
    scale * (-0.5 * q).exp()
}

/// Groups ids by the exact set of tasks containing them; blocks sorted
/// internally and ordered by smallest id.
pub fn equivalence_blocks(families: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut ids: Vec<u32> = families.iter().flatten().copied().collect();
    ids.sort();
    ids.dedup();
    let signature = |id: u32| -> Vec<bool> { families.iter().map(|f| f.contains(&id)).collect() };
    let mut blocks: Vec<Vec<u32>> = Vec::new();
    for id in ids {
        match blocks.iter_mut().find(|b| signature(b[0]) == signature(id)) {
            Some(b) => b.push(id),
            None => blocks.push(vec![id]),
        }
    }
    blocks
}

/// 2 to 5 tasks over ids 1..=12, each a shuffled non-empty subset.
pub fn random_family<R: rand::Rng>(rng: &mut R) -> Vec<Vec<u32>> {
    use rand::seq::SliceRandom;
    let t = rng.random_range(2..=5);
    (0..t)
        .map(|_| {
            let mut ids: Vec<u32> = (1..=12).filter(|_| rng.random_bool(0.5)).collect();
            if ids.is_empty() {
                ids.push(rng.random_range(1..=12));
            }
            ids.shuffle(rng);
            ids
        })
        .collect()
}

pub fn min_eigenvalue(k: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
