use crate::api::{self, AppState};
use crate::{CliError, Command, Common, GroupBy, Staging};
use nppx_core::analysis::{group_by_condition, group_report, write_tables, LogGroup};
use nppx_core::cqi::{greedy_rollout, random_rollout, write_metrics, TrainError};
use nppx_core::plant::write_trace;
use nppx_core::session::{read_log, write_log, SystemClock};
use nppx_core::simuser::{run_fleet, FleetSpec, PolicyKind};
use nppx_core::{train, Condition, DecisionTree, ExperimentConfig, Plant, SessionError, SessionLog, TreeDocument};
use rand::SeedableRng;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load_all(&common.configs).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(seed) = common.seed {
        config.train.seed = seed;
        config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    }
    Ok(config)
}

fn load_tree(path: &Path) -> Result<(DecisionTree, String), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let doc = TreeDocument::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let sha = doc.sha256();
    let tree = doc
        .into_tree()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((tree, sha))
}

fn session_error(e: SessionError) -> CliError {
    if e.is_protocol_violation() {
        CliError::Protocol(e.to_string())
    } else {
        match e {
            SessionError::Io(m) => CliError::Other(m),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

/// Runs a parsed command and returns the status payload.
pub fn run(command: Command) -> Result<Value, CliError> {
    match command {
        Command::Train { common, out } => cmd_train(&common, &out),
        Command::Rollout {
            common,
            tree,
            steps,
            out,
        } => cmd_rollout(&common, tree.as_deref(), steps, out.as_deref()),
        Command::Serve {
            common,
            tree,
            out,
            addr,
        } => cmd_serve(&common, tree.as_deref(), &out, &addr),
        Command::Simulate {
            common,
            tree,
            out,
            condition,
            fleet_size,
            policy,
        } => {
            let conditions: Vec<Condition> = condition.into_iter().map(Condition::from).collect();
            cmd_simulate(&common, tree.as_deref(), &out, &conditions, fleet_size, policy.as_deref())
        }
        Command::Analyze {
            common,
            logs,
            out,
            slices,
            group_by,
        } => cmd_analyze(&common, &logs, &out, slices, group_by),
        Command::ValidateConfig { common } => {
            let config = load_config(&common)?;
            Ok(json!({ "config": config }))
        }
    }
}

fn cmd_train(common: &Common, out: &Path) -> Result<Value, CliError> {
    let config = load_config(common)?;
    if config.train.episodes == 0 {
        warn("train.episodes = 0; writing a single-leaf tree");
    }
    let plant = Plant::new(config.plant.clone());
    let outcome = train(&plant, &config.train).map_err(|e| match e {
        TrainError::Failed(_) => CliError::Training(e.to_string()),
        TrainError::Config(_) => CliError::Validation(e.to_string()),
        TrainError::Tree(_) => CliError::Other(e.to_string()),
    })?;
    let doc = outcome.tree.to_document();
    let mut stage = Staging::new(out)?;
    stage.write("tree.json", doc.to_json())?;
    let mut metrics = Vec::new();
    write_metrics(&mut metrics, &outcome.metrics)?;
    stage.write("metrics.csv", metrics)?;
    stage.write("config.toml", config.to_toml_string())?;
    let files = stage.commit(out)?;
    Ok(json!({
        "tree_sha256": doc.sha256(),
        "nodes": outcome.tree.len(),
        "max_depth": outcome.tree.max_depth(),
        "episodes": outcome.metrics.len(),
        "gate": outcome.gate,
        "files": files,
    }))
}

fn cmd_rollout(common: &Common, tree: Option<&Path>, steps: Option<usize>, out: Option<&Path>) -> Result<Value, CliError> {
    let config = load_config(common)?;
    let plant = Plant::new(config.plant.clone());
    let steps = steps.unwrap_or(config.train.max_steps);
    let (policy, summary, trace) = match tree {
        Some(path) => {
            let (tree, _) = load_tree(path)?;
            let (summary, trace) = greedy_rollout(&tree, &plant, steps).map_err(|e| CliError::Validation(e.to_string()))?;
            ("greedy", summary, Some(trace))
        }
        None => {
            let seed = common.seed.unwrap_or(config.train.seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            ("random", random_rollout(&plant, steps, &mut rng), None)
        }
    };
    let mut files = Vec::new();
    if let (Some(out), Some(trace)) = (out, &trace) {
        let mut stage = Staging::new(out)?;
        let mut buf = Vec::new();
        write_trace(&mut buf, trace)?;
        stage.write("rollout.jsonl", buf)?;
        files = stage.commit(out)?;
    }
    Ok(json!({ "policy": policy, "summary": summary, "files": files }))
}

fn cmd_serve(common: &Common, tree: Option<&Path>, out: &Path, addr: &str) -> Result<Value, CliError> {
    let config = load_config(common)?;
    let tree = tree.map(load_tree).transpose()?.map(|(t, _)| Arc::new(t));
    fs::create_dir_all(out)?;
    let state = Arc::new(AppState::new(
        config,
        tree,
        Arc::new(SystemClock::new()),
        Some(out.to_path_buf()),
        common.seed.unwrap_or(0),
    ));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        eprintln!("listening on http://{local}");
        let ticker = tokio::spawn(api::run_clock(state.clone(), Duration::from_millis(200)));
        let sessions = state.clone();
        axum::serve(listener, api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        ticker.abort();
        Ok(json!({ "addr": local.to_string(), "sessions": sessions.registry.ids() }))
    })
}

fn cmd_simulate(
    common: &Common,
    tree: Option<&Path>,
    out: &Path,
    conditions: &[Condition],
    fleet_size: usize,
    policy: Option<&str>,
) -> Result<Value, CliError> {
    let config = load_config(common)?;
    if fleet_size == 0 {
        return Err(CliError::Validation("--fleet-size must be at least 1".into()));
    }
    let mut policy_config = config.policy.clone();
    if let Some(name) = policy {
        policy_config.kind = PolicyKind::from_name(name)
            .ok_or_else(|| CliError::Validation(format!("unknown policy {name}")))?;
    }
    let tree = tree.map(load_tree).transpose()?;
    if tree.is_none() && conditions.iter().any(|c| *c != Condition::SelfTaught) {
        return Err(CliError::Validation("agent conditions need --tree".into()));
    }
    let tree = tree.map(|(t, _)| Arc::new(t));
    let mut stage = Staging::new(out)?;
    let mut fleets = Vec::new();
    for &condition in conditions {
        let spec = FleetSpec {
            id_prefix: condition.name().to_string(),
            condition,
            size: fleet_size,
            base_seed: common.seed.unwrap_or(0),
            policy: policy_config.clone(),
            timings: config.session.clone(),
            plant: config.plant.clone(),
            tree: tree.clone(),
        };
        let logs = run_fleet(&spec).map_err(session_error)?;
        let dir = stage.entry(condition.name());
        fs::create_dir(&dir)?;
        for log in &logs {
            let mut f = fs::File::create(dir.join(format!("{}.jsonl", log.session_id())))?;
            write_log(&mut f, log)?;
        }
        let whys: usize = logs.iter().flat_map(|l| &l.records).filter(|r| r.asked_why).count();
        let steps: usize = logs.iter().map(|l| l.records.len()).sum();
        fleets.push(json!({
            "condition": condition.name(),
            "sessions": logs.len(),
            "steps": steps,
            "why_questions": whys,
        }));
    }
    let dirs = stage.commit(out).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => CliError::Validation(format!("refusing to overwrite: {e}")),
        _ => CliError::from(e),
    })?;
    Ok(json!({ "policy": policy_config.kind.name(), "fleets": fleets, "dirs": dirs }))
}

fn collect_logs(dir: &Path, found: &mut Vec<PathBuf>) -> std::io::Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            collect_logs(&path, found)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            found.push(path);
        }
    }
    Ok(())
}

fn cmd_analyze(common: &Common, dirs: &[PathBuf], out: &Path, slices: usize, group_by: GroupBy) -> Result<Value, CliError> {
    let mut groups: Vec<LogGroup> = Vec::new();
    let mut all: Vec<SessionLog> = Vec::new();
    for dir in dirs {
        let mut paths = Vec::new();
        collect_logs(dir, &mut paths).map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
        let logs = paths
            .iter()
            .map(|p| read_log(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display()))))
            .collect::<Result<Vec<_>, _>>()?;
        match group_by {
            GroupBy::Dir => {
                if !logs.is_empty() {
                    groups.push(LogGroup {
                        name: dir.display().to_string(),
                        logs,
                    });
                }
            }
            GroupBy::Condition => all.extend(logs),
        }
    }
    if group_by == GroupBy::Condition {
        groups = group_by_condition(all);
    }
    if groups.is_empty() {
        return Err(CliError::Validation("no session logs found".into()));
    }
    let report = group_report(&groups, slices).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut stage = Staging::new(out)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Other(e.to_string()))?;
    stage.write("report.json", json)?;
    let tables = write_tables(&report, stage.path())?;
    for t in &tables {
        let name = t.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        stage.entry(&name);
    }
    let files = stage.commit(out)?;
    let explanandum: Vec<Value> = report
        .groups
        .iter()
        .map(|g| json!({ "group": g.group, "explanandum": g.explanandum }))
        .collect();
    Ok(json!({
        "seed": common.seed,
        "groups": report.groups.iter().map(|g| &g.group).collect::<Vec<_>>(),
        "sessions": report.sessions.len(),
        "tests": report.tests,
        "explanandum": explanandum,
        "files": files,
    }))
}
