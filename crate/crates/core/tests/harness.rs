use slate_ope::harness::output::config_from_report;
use slate_ope::harness::{
    emit_outputs, generate_log, run_experiment, Experiment, ExperimentConfig, GreedySpec, PolicySpec,
};
use slate_ope::metrics::{cvar, ks_statistic, mean_from_cdf, median, quantile};
use slate_ope::{estimate_cdf, Error, monotone_repair, Execution, StepCdf, WeightKind};

fn small_config(target: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{
  "schema_version": 1,
  "name": "small",
  "environment": {{ "kind": "synth", "num_slots": 3, "actions_per_slot": 3, "seed": 17 }},
  "logging": {{ "kind": "uniform" }},
  "target": {target},
  "sample_sizes": [40, 200],
  "trials": 6,
  "grid_size": 120,
  "estimators": ["suno", "uno", "gm:2"],
  "master_seed": 9
}}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn greedy() -> &'static str {
    r#"{ "kind": "epsilon_greedy", "epsilon": 0.1, "greedy": { "kind": "random", "seed": 3 } }"#
}

#[test]
fn on_policy_single_trial_ks_is_the_empirical_ks() {
    let mut config = small_config(r#"{ "kind": "uniform" }"#);
    config.trials = 1;
    config.estimators = vec![WeightKind::Additive];
    let exp = Experiment::prepare(&config).unwrap();
    let table = exp.run(Execution::Sequential);
    for (s, &n) in config.sample_sizes.iter().enumerate() {
        let log = generate_log(exp.env.as_ref(), exp.logging.as_ref(), n, exp.cell_seed(0, s)).unwrap();
        let empirical: Vec<f64> = exp
            .grid
            .points()
            .iter()
            .map(|&nu| log.rewards().iter().filter(|&&r| r <= nu).count() as f64 / n as f64)
            .collect();
        let empirical = StepCdf::new(exp.grid.clone(), empirical).unwrap();
        let ks = ks_statistic(&empirical, &exp.truth).unwrap();
        let row = table.get("suno", n, "ks").unwrap();
        assert!((row.mean - ks).abs() < 1e-12, "n = {n}: {} vs {ks}", row.mean);
        assert_eq!(row.trials, 1);
        assert!(row.stderr.is_nan());
    }
}

#[test]
fn cells_match_manual_composition() {
    let config = small_config(greedy());
    let exp = Experiment::prepare(&config).unwrap();
    let table = exp.run(Execution::Sequential);
    let mut sums = vec![[0.0; 5]; config.estimators.len()];
    let s = 1;
    let n = config.sample_sizes[s];
    for trial in 0..config.trials {
        let log = generate_log(exp.env.as_ref(), exp.logging.as_ref(), n, exp.cell_seed(trial, s)).unwrap();
        for (e, &kind) in config.estimators.iter().enumerate() {
            let raw = estimate_cdf(kind, exp.target.as_ref(), &log, exp.logging.as_ref(), &exp.grid).unwrap();
            let repaired = monotone_repair(&raw);
            let c = repaired.completed();
            let values = [
                ks_statistic(&repaired, &exp.truth).unwrap(),
                mean_from_cdf(&c).value,
                median(&c).unwrap(),
                quantile(&c, 0.3).unwrap(),
                cvar(&c, 0.3).unwrap(),
            ];
            for (acc, v) in sums[e].iter_mut().zip(values) {
                *acc += v;
            }
        }
    }
    for (e, kind) in config.estimators.iter().enumerate() {
        for (i, metric) in ["ks", "mean", "median", "var", "cvar"].iter().enumerate() {
            let row = table.get(&kind.to_string(), n, metric).unwrap();
            let expected = sums[e][i] / config.trials as f64;
            assert!((row.mean - expected).abs() < 1e-12, "{kind} {metric}: {} vs {expected}", row.mean);
        }
    }
}

#[test]
fn squared_error_rows_use_the_ground_truth() {
    let config = small_config(greedy());
    let exp = Experiment::prepare(&config).unwrap();
    let outcomes: Vec<_> = (0..config.trials * 2).map(|c| exp.run_cell(c / 2, c % 2, Execution::Sequential)).collect();
    let table = exp.aggregate(&outcomes);
    let truth = table.ground_truth.mean;
    let n = config.sample_sizes[0];
    let expected: f64 = (0..config.trials)
        .map(|t| (outcomes[t * 2].as_ref().unwrap()[0].points[0] - truth).powi(2))
        .sum::<f64>()
        / config.trials as f64;
    let row = table.get("suno", n, "mean_sq_err").unwrap();
    assert!((row.mean - expected).abs() < 1e-15);
}

#[test]
fn execution_modes_give_identical_tables() {
    let config = small_config(greedy());
    let a = run_experiment(&config, Execution::Parallel).unwrap();
    let b = run_experiment(&config, Execution::Sequential).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn outputs_round_trip_and_plot_layout() {
    let config = small_config(greedy());
    let table = run_experiment(&config, Execution::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&table, &config, dir.path()).unwrap();

    let csv = std::fs::read_to_string(&files.csv).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("estimator,n,metric,mean,stderr,trials"));
    assert_eq!(lines.count(), table.rows.len());

    let json = std::fs::read_to_string(&files.json).unwrap();
    assert_eq!(config_from_report(&json).unwrap(), config);

    // 3 estimators x (ks, 4 points, 4 squared errors, ess)
    assert_eq!(files.plots.len(), 3 * 10);
    let gm = dir.path().join("plot").join("gm-2_ks.dat");
    let text = std::fs::read_to_string(gm).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), config.sample_sizes.len());
    assert!(data[0].starts_with("40 "));
}

#[test]
fn unwritable_output_dir_is_an_error() {
    let config = small_config(greedy());
    let table = run_experiment(&config, Execution::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    assert!(emit_outputs(&table, &config, &blocker.join("out")).is_err());
}

#[test]
fn missing_common_support_is_rejected() {
    let mut config = small_config(r#"{ "kind": "uniform" }"#);
    config.logging = PolicySpec::EpsilonGreedy {
        epsilon: 0.0,
        greedy: GreedySpec::Random { seed: 3 },
    };
    match run_experiment(&config, Execution::default()) {
        Err(Error::SupportViolation { .. }) => {}
        other => panic!("expected a support violation, got {other:?}"),
    }
}

#[test]
fn failed_cells_become_error_count_rows() {
    let config = small_config(greedy());
    let exp = Experiment::prepare(&config).unwrap();
    let sizes = config.sample_sizes.len();
    let outcomes: Vec<_> = (0..config.trials * sizes)
        .map(|c| {
            if c % sizes == 1 && c / sizes < 2 {
                Err(Error::InvalidArgument("injected".into()))
            } else {
                exp.run_cell(c / sizes, c % sizes, Execution::Sequential)
            }
        })
        .collect();
    let table = exp.aggregate(&outcomes);
    assert!(table.has_errors());
    assert_eq!(table.errors.len(), 2);
    assert_eq!((table.errors[1].trial, table.errors[1].n), (1, 200));
    assert!(table.errors[0].message.contains("injected"));
    for kind in &config.estimators {
        let name = kind.to_string();
        assert_eq!(table.get(&name, 200, "error_count").unwrap().mean, 2.0);
        assert_eq!(table.get(&name, 200, "ks").unwrap().trials, config.trials - 2);
        assert!(table.get(&name, 40, "error_count").is_none());
        assert_eq!(table.get(&name, 40, "ks").unwrap().trials, config.trials);
    }
}
