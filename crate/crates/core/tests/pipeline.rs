use nppx_core::analysis::{group_by_condition, group_report, write_tables};
use nppx_core::session::{read_log, replay, LogSink, SessionTimings};
use nppx_core::simuser::{run_episode, run_fleet, FleetSpec, PolicyKind};
use nppx_core::cqi::reward;
use nppx_core::plant::Action;
use nppx_core::{train, Condition, ConfigError, DecisionTree, ExperimentConfig, Plant, TreeDocument};
use std::sync::Arc;

fn short_timings() -> SessionTimings {
    SessionTimings {
        training_duration_s: 300.0,
        assessment_duration_s: 120.0,
    }
}

#[test]
fn partial_configs_merge_over_defaults() {
    let c = ExperimentConfig::from_toml_str("[train]\nepisodes = 12\n[plant.anomaly_thresholds]\ntemp_max = 300.0\n").unwrap();
    let d = ExperimentConfig::default();
    assert_eq!(c.train.episodes, 12);
    assert_eq!(c.train.discount, d.train.discount);
    assert_eq!(c.plant.anomaly_thresholds.temp_max, 300.0);
    assert_eq!(c.plant.anomaly_thresholds.pressure_max, d.plant.anomaly_thresholds.pressure_max);

    match ExperimentConfig::from_toml_str("[train]\nepisodez = 3\n") {
        Err(ConfigError::Invalid { path, .. }) => assert_eq!(path, "train.episodez"),
        other => panic!("{other:?}"),
    }
    match ExperimentConfig::from_toml_str("[policy]\np_why = 1.5\n") {
        Err(ConfigError::Invalid { path, .. }) => assert_eq!(path, "policy.p_why"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        ExperimentConfig::from_toml_str("schema_version = 2\n"),
        Err(ConfigError::SchemaVersion { found: 2, .. })
    ));
}

#[test]
fn zero_episodes_give_a_single_leaf() {
    let mut c = ExperimentConfig::default();
    c.train.episodes = 0;
    let out = train(&Plant::new(c.plant.clone()), &c.train).unwrap();
    assert_eq!(out.tree.len(), 1);
    assert!(out.metrics.is_empty());
    assert_eq!(out.gate.anomalies, 0);
}

#[test]
fn train_simulate_analyze() {
    let config = ExperimentConfig::default();
    let plant = Plant::new(config.plant.clone());
    let trained = train(&plant, &config.train).unwrap();
    let doc = trained.tree.to_document();
    let tree = Arc::new(TreeDocument::from_json(&doc.to_json()).unwrap().into_tree().unwrap());
    assert_eq!(*tree, trained.tree);

    let spec = |condition| FleetSpec {
        id_prefix: condition_prefix(condition),
        condition,
        size: 6,
        base_seed: 40,
        policy: config.policy.clone(),
        timings: short_timings(),
        plant: config.plant.clone(),
        tree: Some(tree.clone()),
    };
    let mut logs = Vec::new();
    for condition in [Condition::Cxai, Condition::Axai, Condition::SelfTaught] {
        let a = run_fleet(&spec(condition)).unwrap();
        let b = run_fleet(&spec(condition)).unwrap();
        assert_eq!(a, b, "fleets are deterministic");
        for log in &a {
            assert!(replay(log, Some(&tree)).is_ok());
            assert_eq!(log.config.tree_sha256.is_some(), condition != Condition::SelfTaught);
            if condition == Condition::SelfTaught {
                assert!(log.records.iter().all(|r| !r.asked_what && !r.asked_why));
            }
        }
        logs.extend(a);
    }

    let groups = group_by_condition(logs.clone());
    assert_eq!(groups.len(), 3);
    let report = group_report(&groups, 20).unwrap();
    assert_eq!(report.sessions.len(), 18);
    // the explanandum test needs two agent groups; energy is compared for every pair
    let named = |n: &str| report.tests.iter().filter(|t| t.name == n).count();
    assert_eq!(named("explanandum_chi_square"), 1);
    assert_eq!(named("energy_welch_t"), 3);
    let again = group_report(&group_by_condition(logs), 20).unwrap();
    assert_eq!(serde_json::to_string(&report).unwrap(), serde_json::to_string(&again).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let paths = write_tables(&report, dir.path()).unwrap();
    assert_eq!(paths.len(), 5);
    let sessions = std::fs::read_to_string(dir.path().join("sessions.csv")).unwrap();
    assert_eq!(sessions.lines().count(), 19);
    let explanandum = std::fs::read_to_string(dir.path().join("explanandum.csv")).unwrap();
    // header plus eight features for each agent condition
    assert_eq!(explanandum.lines().count(), 1 + 2 * 8);
}

fn condition_prefix(c: Condition) -> String {
    format!("p-{}", c.name())
}

#[test]
fn session_files_read_back_identically() {
    let config = ExperimentConfig::default();
    let mut policy = config.policy.clone();
    policy.kind = PolicyKind::AlwaysAsk;
    let spec = FleetSpec {
        id_prefix: "file".into(),
        condition: Condition::Axai,
        size: 1,
        base_seed: 9,
        policy: policy.clone(),
        timings: short_timings(),
        plant: config.plant.clone(),
        tree: Some(Arc::new(
            train(&Plant::new(config.plant.clone()), &config.train).unwrap().tree,
        )),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("file-0000.jsonl");
    let sink = LogSink::create(&path).unwrap();
    let log = run_episode(&policy, spec.session_config(0), spec.tree.clone(), Some(sink)).unwrap();
    assert_eq!(read_log(&path).unwrap(), log);
    assert!(LogSink::create(&path).is_err(), "existing logs are never overwritten");
}

/// Reward-to-go of opening with `first` and then following the tree for the
/// rest of an episode, stopping at the first anomaly.
fn reward_to_go(plant: &Plant, tree: &DecisionTree, first: Action, config: &ExperimentConfig) -> f64 {
    let weights = &config.train.reward;
    let mut state = plant.initial_state();
    let mut action = first;
    let mut total = 0.0;
    for _ in 0..config.train.max_steps {
        let outcome = plant.step(&state, action);
        total += reward(&config.plant, &state, action, &outcome, weights);
        if outcome.anomaly.is_some() {
            break;
        }
        state = outcome.next_state;
        let leaf = tree.descend(&state.to_vector()).unwrap().leaf;
        action = tree.leaf(leaf).unwrap().best_action();
    }
    total
}

#[test]
fn expert_opens_with_the_best_lookahead_action() {
    let config = ExperimentConfig::default();
    let plant = Plant::new(config.plant.clone());
    let tree = train(&plant, &config.train).unwrap().tree;
    let start = plant.initial_state().to_vector();
    let opening = tree.leaf(tree.descend(&start).unwrap().leaf).unwrap().best_action();

    let scores: Vec<f64> = Action::ALL.iter().map(|&a| reward_to_go(&plant, &tree, a, &config)).collect();
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    assert_eq!(opening, Action::ALL[best], "lookahead scores {scores:?}");
    assert!(
        [Action::FuelDown, Action::SustainDown, Action::RegulatoryDown].contains(&opening),
        "{opening:?} does not start fission setup"
    );
}
