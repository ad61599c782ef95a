use std::io::Write;

use hetbo::benchmarks::{
    hartmann6, hartmann_heterogeneous, load_tabular, BenchmarkError, Problem, HARTMANN6_MINIMIZER, HARTMANN6_MINIMUM,
};
use hetbo::space::{build_partition, common_parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Compass search with shrinking steps, clamped to the unit box.
fn local_min(f: &dyn Fn(&[f64]) -> f64, mut x: Vec<f64>) -> (Vec<f64>, f64) {
    let mut fx = f(&x);
    let mut step = 0.1;
    while step > 1e-9 {
        let mut moved = false;
        for d in 0..x.len() {
            for s in [step, -step] {
                let mut y = x.clone();
                y[d] = (y[d] + s).clamp(0.0, 1.0);
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

#[test]
fn independent_minimization_confirms_optimum() {
    let f = |x: &[f64]| hartmann6(x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (x, v) = (0..60)
        .map(|_| local_min(&f, (0..6).map(|_| rng.random()).collect()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((v - HARTMANN6_MINIMUM).abs() < 1e-4, "found {v}");
    for (a, b) in x.iter().zip(HARTMANN6_MINIMIZER) {
        assert!((a - b).abs() < 1e-3, "{x:?}");
    }
    assert!((hartmann6(&HARTMANN6_MINIMIZER).unwrap() - HARTMANN6_MINIMUM).abs() < 1e-4);
}

#[test]
fn heterogeneous_structure() {
    let p = hartmann_heterogeneous();
    let partition = build_partition(p.tasks()).unwrap();
    assert_eq!(partition.blocks(), &[vec![1, 2, 3, 4], vec![5, 6]]);
    assert_eq!(common_parameters(p.tasks()).into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    assert_eq!(p.target_task(), 1);
    assert_eq!(p.optimum_value(), Some(HARTMANN6_MINIMUM));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let s: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let full = [s[0], s[1], s[2], s[3], 0.0, 0.0];
        assert_eq!(p.evaluate(&full).unwrap(), p.evaluate_source(&s).unwrap());
    }
}

fn random_table(rows: usize, seed: u64) -> (String, Vec<(Vec<f64>, f64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target: Vec<(Vec<f64>, f64)> = (0..rows)
        .map(|_| ((0..3).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0).collect(), rng.random()))
        .collect();
    let source: Vec<(Vec<f64>, f64)> = (0..10).map(|_| (vec![rng.random()], rng.random())).collect();
    let rows_json =
        |rows: &[(Vec<f64>, f64)]| rows.iter().map(|(x, y)| serde_json::json!({"x": x, "y": y})).collect::<Vec<_>>();
    let json = serde_json::json!({"tasks": [
        {"task_index": 5, "parameter_ids": [1, 2, 3], "rows": rows_json(&target)},
        {"task_index": 2, "parameter_ids": [1], "rows": rows_json(&source)},
    ]});
    (json.to_string(), target)
}

#[test]
fn nearest_neighbor_matches_linear_scan() {
    let (json, rows) = random_table(100, 3);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    file.write_all(json.as_bytes()).unwrap();
    let p = load_tabular(file.path(), 5, &[2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..60 {
        // every third query sits exactly on a stored point
        let q: Vec<f64> = if i % 3 == 0 { rows[i].0.clone() } else { (0..3).map(|_| rng.random()).collect() };
        let mut best = (f64::INFINITY, 0);
        for (j, (x, _)) in rows.iter().enumerate() {
            let d: f64 = x.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        assert_eq!(p.evaluate(&q).unwrap(), rows[best.1].1, "query {q:?}");
    }
    assert!(matches!(p.evaluate(&[0.5, 0.5]), Err(BenchmarkError::DimensionMismatch { .. })));
    assert!(matches!(p.evaluate(&[0.5, 0.5, 2.0]), Err(BenchmarkError::OutOfBounds { .. })));
}

#[test]
fn source_rows_are_drawn_from_the_table() {
    let (json, _) = random_table(5, 9);
    let p = hetbo::benchmarks::tabular_from_str(&json, 5, &[2]).unwrap();
    let trials = p.source_trials(0, 6, 1).unwrap();
    assert_eq!(trials, p.source_trials(0, 6, 1).unwrap());
    for t in &trials {
        assert!(p.rows(0).contains(t));
    }
    for (i, a) in trials.iter().enumerate() {
        assert!(!trials[..i].contains(a));
    }
}

#[test]
fn missing_file_is_an_io_error() {
    assert!(matches!(load_tabular("/nonexistent/table.json", 0, &[]), Err(BenchmarkError::Io(_))));
}
