use hetbo::benchmarks::{hartmann_heterogeneous, BenchmarkError, Problem};
use hetbo::harness::{
    ablation_file_name, load_records, replication_inputs, run_ablation, run_experiment, run_problem, summarize,
    write_records, ExperimentConfig, HyperparameterMode, Method, ProblemSpec,
};
use hetbo::space::TaskSpec;
use hetbo::Observation;

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::new(ProblemSpec::Hartmann6Heterogeneous);
    c.budget = 3;
    c.replications = 2;
    c.source_trials_per_task = 8;
    c.model_restarts = 1;
    c
}

fn csv(records: &[hetbo::harness::RunRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, records).unwrap();
    buf
}

#[test]
fn methods_share_initial_points_and_inputs() {
    let c = small_config();
    let problem = hartmann_heterogeneous();
    let runs = run_problem(&problem, &c, true).unwrap();
    assert_eq!(runs.len(), Method::ALL.len() * c.replications);
    assert_eq!(
        runs.iter().map(|r| r.records.len()).sum::<usize>(),
        Method::ALL.len() * c.replications * (c.n_init + c.budget)
    );
    for rep in 0..c.replications {
        let of_rep: Vec<_> = runs.iter().filter(|r| r.replication == rep).collect();
        let inputs = replication_inputs(&problem, &c, rep).unwrap();
        for run in &of_rep {
            assert_eq!(run.input_digest, inputs.digest());
            for (rec, init) in run.records.iter().zip(&inputs.init) {
                assert_eq!(rec.x, init.x);
                assert_eq!(rec.y, init.y);
            }
        }
    }
    let a = replication_inputs(&problem, &c, 0).unwrap();
    let b = replication_inputs(&problem, &c, 1).unwrap();
    assert_ne!(a.digest(), b.digest());
    assert_ne!(a.sources, b.sources);
}

#[test]
fn best_so_far_is_a_running_minimum() {
    let c = small_config();
    for run in run_problem(&hartmann_heterogeneous(), &c, true).unwrap() {
        let mut best = f64::INFINITY;
        for (i, r) in run.records.iter().enumerate() {
            assert_eq!(r.iteration, i);
            best = best.min(r.y);
            assert_eq!(r.best_so_far, best);
            assert!(r.x.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn reruns_and_scheduling_do_not_change_output() {
    let c = small_config();
    let problem = hartmann_heterogeneous();
    let flat =
        |parallel| run_problem(&problem, &c, parallel).unwrap().into_iter().flat_map(|r| r.records).collect::<Vec<_>>();
    let first = csv(&flat(true));
    assert_eq!(first, csv(&flat(true)));
    assert_eq!(first, csv(&flat(false)));
    assert_eq!(first, csv(&run_experiment(&c).unwrap()));
}

#[test]
fn records_are_ordered_by_method_then_replication() {
    let mut c = small_config();
    c.methods = vec![Method::Vanilla, Method::Random];
    let recs = run_experiment(&c).unwrap();
    let keys: Vec<_> = recs
        .iter()
        .map(|r| (c.methods.iter().position(|&m| m == r.method).unwrap(), r.replication, r.iteration))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let summary = summarize(&recs).unwrap();
    assert_eq!(summary.len(), 2 * (c.n_init + c.budget));
    assert_eq!(summary[0].method, Method::Vanilla);
}

#[test]
fn ablation_writes_one_file_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.methods = vec![Method::Random, Method::ConditionalMtgp];
    c.budget = 1;
    c.output_dir = dir.path().to_path_buf();
    let levels = run_ablation(&c, &[10, 30, 50]).unwrap();
    assert_eq!(levels.len(), 3);
    for (level, n) in levels.iter().zip([10, 30, 50]) {
        assert_eq!(level.source_trials, n);
        assert_eq!(level.path, dir.path().join(ablation_file_name(n)));
        assert!(level.path.to_str().unwrap().contains(&format!("_{n}.csv")));
        assert_eq!(load_records(&level.path).unwrap(), level.records);
    }
    assert!(run_ablation(&c, &[]).is_err());

    let single = run_ablation(&c, &[30]).unwrap();
    let mut direct = c.clone();
    direct.source_trials_per_task = 30;
    assert_eq!(single[0].records, run_experiment(&direct).unwrap());
}

/// The target task of another problem on its own.
struct TargetOnly<P> {
    inner: P,
    tasks: Vec<TaskSpec>,
}

impl<P: Problem> Problem for TargetOnly<P> {
    fn name(&self) -> &str {
        "target_only"
    }
    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }
    fn evaluate(&self, x: &[f64]) -> Result<f64, BenchmarkError> {
        self.inner.evaluate(x)
    }
    fn source_trials(&self, task: usize, _: usize, _: u64) -> Result<Vec<Observation>, BenchmarkError> {
        Err(BenchmarkError::NotASource(task))
    }
}

#[test]
fn zero_source_trials_degenerate_to_single_task() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small_config();
    c.replications = 1;
    c.hyperparameters = HyperparameterMode::PriorMedian;
    c.output_dir = dir.path().to_path_buf();
    let transfer =
        [Method::ConditionalMtgp, Method::CommonParamsMtgp, Method::ImputedMtgpFixed, Method::ImputedMtgpLearned];
    c.methods = transfer.to_vec();
    let level0 = run_ablation(&c, &[0]).unwrap().remove(0).records;

    let hartmann = hartmann_heterogeneous();
    let target = TaskSpec::new(0, hartmann.tasks()[1].parameters().to_vec()).unwrap();
    let single = TargetOnly { inner: hartmann, tasks: vec![target] };
    let reference: Vec<_> = run_problem(&single, &c, false).unwrap().into_iter().flat_map(|r| r.records).collect();
    assert_eq!(level0, reference);
}

#[test]
fn configured_tasks_must_match_problem() {
    let mut c = small_config();
    c.tasks = Some(vec![TaskSpec::unit(0, &[1, 2]).unwrap(), TaskSpec::unit(1, &[1, 2, 3]).unwrap()]);
    assert!(run_experiment(&c).is_err());
    c.tasks = Some(hartmann_heterogeneous().tasks().to_vec());
    c.methods = vec![Method::Random];
    run_experiment(&c).unwrap();
}

#[test]
fn tabular_problem_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.json");
    let rows = |d: usize, n: usize| -> Vec<serde_json::Value> {
        (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..d).map(|j| ((i * 7 + j * 3) % 11) as f64 / 10.0).collect();
                let y: f64 = x.iter().map(|v| (v - 0.3).powi(2)).sum();
                serde_json::json!({"x": x, "y": y})
            })
            .collect()
    };
    let table = serde_json::json!({"tasks": [
        {"task_index": 0, "parameter_ids": [1, 2], "rows": rows(2, 20)},
        {"task_index": 1, "parameter_ids": [2, 3], "rows": rows(2, 20)},
        {"task_index": 2, "parameter_ids": [1, 2, 3], "rows": rows(3, 40)},
    ]});
    std::fs::write(&path, table.to_string()).unwrap();
    let mut c = ExperimentConfig::new(ProblemSpec::Tabular { path, target_task_id: 2, source_task_ids: vec![0, 1] });
    c.budget = 2;
    c.replications = 2;
    c.source_trials_per_task = 5;
    c.model_restarts = 1;
    let recs = run_experiment(&c).unwrap();
    assert_eq!(recs.len(), 6 * 2 * 6);
    assert!(recs.iter().all(|r| r.x.len() == 3));
}
