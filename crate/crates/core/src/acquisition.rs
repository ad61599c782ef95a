//! Log expected improvement and its optimizer.
//!
//! Minimization throughout: improvement is `best - y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::gp::Posterior;
use crate::models::{FittedModel, ModelError};

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this z the closed form loses precision and the asymptotic series is used.
pub const ASYMPTOTIC_Z: f64 = -6.0;

/// Best observed target outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incumbent {
    pub best_value: f64,
}

/// `log(phi(z) + z * Phi(z))`.
pub fn log_h(z: f64) -> f64 {
    if z < ASYMPTOTIC_Z {
        let z2 = z * z;
        -0.5 * z2 - LOG_SQRT_2PI - z2.ln() + (1.0 - 3.0 / z2 + 15.0 / (z2 * z2)).ln()
    } else {
        let pdf = (-0.5 * z * z - LOG_SQRT_2PI).exp();
        let cdf = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
        (pdf + z * cdf).ln()
    }
}

/// `log E[max(best - Y, 0)]` for `Y ~ N(mean, variance)`; `-inf` when no
/// improvement is possible.
pub fn log_ei(post: &Posterior, best: Incumbent) -> f64 {
    let sigma = post.std();
    let gap = best.best_value - post.mean;
    if sigma == 0.0 {
        return if gap > 0.0 { gap.ln() } else { f64::NEG_INFINITY };
    }
    sigma.ln() + log_h(gap / sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuggestOptions {
    pub n_raw: usize,
    pub n_restarts: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_iters: usize,
}

impl Default for SuggestOptions {
    fn default() -> Self {
        SuggestOptions { n_raw: 512, n_restarts: 8, initial_step: 0.05, min_step: 1e-4, max_iters: 50 }
    }
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// `n` Halton points in `[0, 1)^dim` under a random Cranley-Patterson shift.
pub fn shifted_halton<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let bases = primes(dim);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (1..=n as u64)
        .map(|i| {
            bases
                .iter()
                .zip(&shift)
                .map(|(&b, &s)| {
                    let v = radical_inverse(i, b) + s;
                    if v >= 1.0 {
                        v - 1.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

/// Coordinate-wise pattern search maximizing `f` inside the unit box.
fn pattern_search<F: Fn(&[f64]) -> f64>(
    f: &F,
    mut x: Vec<f64>,
    mut value: f64,
    opts: &SuggestOptions,
) -> (Vec<f64>, f64) {
    let mut step = opts.initial_step;
    for _ in 0..opts.max_iters {
        if step < opts.min_step {
            break;
        }
        let mut improved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[d];
                let cand = (old + dir * step).clamp(0.0, 1.0);
                if cand == old {
                    continue;
                }
                x[d] = cand;
                let v = f(&x);
                if v > value {
                    value = v;
                    improved = true;
                    break;
                }
                x[d] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, value)
}

/// Maximizes `f` over `[0, 1]^dim`: scores quasi-random raw samples, then
/// refines the best few with pattern search. Ties go to the earlier sample.
pub fn maximize<F: Fn(&[f64]) -> f64 + Sync>(f: F, dim: usize, seed: u64, opts: &SuggestOptions) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = shifted_halton(opts.n_raw.max(1), dim, &mut rng);
    let scores: Vec<f64> = raw.par_iter().map(|x| f(x)).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| score_cmp(scores[b], scores[a]).then(a.cmp(&b)));
    let refined: Vec<(Vec<f64>, f64)> = order[..opts.n_restarts.clamp(1, raw.len())]
        .par_iter()
        .map(|&i| pattern_search(&f, raw[i].clone(), scores[i], opts))
        .collect();
    let mut best = 0;
    for (i, r) in refined.iter().enumerate() {
        if score_cmp(r.1, refined[best].1).is_gt() {
            best = i;
        }
    }
    refined.into_iter().nth(best).expect("at least one restart")
}

/// Orders NaN below everything.
fn score_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    key(a).total_cmp(&key(b))
}

/// Next target point under LogEI. For a model that only sees some target
/// coordinates, the others are drawn uniformly once.
pub fn suggest(model: &FittedModel, best: Incumbent, seed: u64, opts: &SuggestOptions) -> Result<Vec<f64>, ModelError> {
    let dim = model.target_dim();
    let gp = model.gp();
    let task = model.setup().target_task;
    let columns = model.setup().target_columns.clone();
    let active = columns.as_ref().map_or(dim, Vec::len);
    gp.predict(&vec![0.5; active], task)?;
    let score = |x: &[f64]| gp.predict(x, task).map_or(f64::NEG_INFINITY, |p| log_ei(&p, best));
    let (sub, _) = maximize(score, active, seed, opts);
    Ok(match columns {
        None => sub,
        Some(cols) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            for (v, c) in sub.into_iter().zip(cols) {
                x[c] = v;
            }
            x
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(mean: f64, sd: f64) -> Posterior {
        Posterior { mean, variance: sd * sd }
    }

    #[test]
    fn log_ei_at_zero_z() {
        assert!((log_ei(&post(1.0, 1.0), Incumbent { best_value: 1.0 }) - (-0.918_939)).abs() < 1e-6);
    }

    #[test]
    fn log_ei_no_variance() {
        assert_eq!(log_ei(&post(2.0, 0.0), Incumbent { best_value: 1.0 }), f64::NEG_INFINITY);
        assert_eq!(log_ei(&post(1.0, 0.0), Incumbent { best_value: 1.0 }), f64::NEG_INFINITY);
        assert!((log_ei(&post(0.5, 0.0), Incumbent { best_value: 1.0 }) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn branches_agree_near_threshold() {
        let z = ASYMPTOTIC_Z;
        let pdf = (-0.5 * z * z - LOG_SQRT_2PI).exp();
        let closed = (pdf + z * 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)).ln();
        assert!((log_h(z - 1e-12) - closed).abs() < 5e-3);
    }

    #[test]
    fn log_h_is_finite_far_in_the_tail() {
        for z in [-40.0, -1e3, -1e6] {
            assert!(log_h(z).is_finite());
        }
        assert!((log_h(50.0) - 50f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_mean_and_sigma() {
        let best = Incumbent { best_value: 0.0 };
        let means: Vec<f64> = (0..200).map(|i| -5.0 + i as f64 * 0.06).collect();
        for w in means.windows(2) {
            assert!(log_ei(&post(w[1], 0.7), best) < log_ei(&post(w[0], 0.7), best));
        }
        for mean in [0.1, 1.0, 3.0] {
            let sds: Vec<f64> = (1..200).map(|i| i as f64 * 0.02).collect();
            for w in sds.windows(2) {
                assert!(log_ei(&post(mean, w[1]), best) > log_ei(&post(mean, w[0]), best));
            }
        }
    }

    #[test]
    fn halton_points_are_in_box() {
        let pts = shifted_halton(300, 7, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(pts.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(primes(6), vec![2, 3, 5, 7, 11, 13]);
        assert!((radical_inverse(3, 2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn maximize_finds_smooth_peak() {
        let f = |x: &[f64]| -((x[0] - 0.33).powi(2) + (x[1] - 0.71).powi(2));
        let (x, v) = maximize(f, 2, 9, &SuggestOptions::default());
        assert!((x[0] - 0.33).abs() < 1e-3 && (x[1] - 0.71).abs() < 1e-3, "{x:?}");
        assert!(v <= 0.0);
    }

    #[test]
    fn maximize_flat_stays_in_bounds_and_is_deterministic() {
        let (a, _) = maximize(|_| 0.0, 4, 5, &SuggestOptions::default());
        let (b, _) = maximize(|_| 0.0, 4, 5, &SuggestOptions::default());
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        let (c, _) = maximize(|_| f64::NEG_INFINITY, 3, 5, &SuggestOptions::default());
        assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn maximize_reaches_box_edges() {
        let (x, _) = maximize(|x: &[f64]| x[0] - x[1], 2, 1, &SuggestOptions::default());
        assert_eq!(x, vec![1.0, 0.0]);
    }
}
