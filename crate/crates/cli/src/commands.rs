use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use synthplan::costmodel::{CostModel, GnnGuide, ValueNet, ValueNetConfig, ValueTrainConfig};
use synthplan::metrics::{evaluate, redundancy_study, reuse_histogram, RedundancyReport};
use synthplan::molspace::{ExpansionOracle, MoleculeId};
use synthplan::numerics::{AdamConfig, RbfConfig};
use synthplan::planner::{batch_plan as run_batches, plan as run_plan, BatchConfig, PlanConfig, PlanResult, SearchMode};
use synthplan::policygnn::{train as train_gnn, GnnConfig, GnnInput, GnnParameters, TrainConfig};
use synthplan::traindata::{generate, read_jsonl, split, value_targets, write_jsonl, GenConfig};

use crate::config::{CostKind, ModelKind, Settings};
use crate::{CliError, Outcome};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn plan_config(s: &Settings, mode: SearchMode) -> PlanConfig {
    PlanConfig { budget: s.budget, k: s.k, mode }
}

fn cost_model(s: &Settings) -> Result<CostModel, CliError> {
    let cm = match (s.cost, &s.checkpoint) {
        (CostKind::Zero, _) => return Ok(CostModel::Zero),
        (_, None) => return Err(CliError::Config("the value and gnn cost models need --checkpoint".into())),
        (_, Some(path)) => CostModel::load(&mut BufReader::new(File::open(path)?))?,
    };
    let cm = match cm {
        CostModel::Gnn(guide) => CostModel::Gnn(GnnGuide { lambda: s.lambda, ..guide }),
        other => other,
    };
    let want = match s.cost {
        CostKind::Value => "value",
        CostKind::Gnn => "gnn",
        CostKind::Zero => "zero",
    };
    if cm.name() != want {
        return Err(CliError::Config(format!(
            "checkpoint holds a {} model but --cost is {want}",
            cm.name()
        )));
    }
    Ok(cm)
}

fn plan_each(
    targets: &[MoleculeId],
    oracle: &dyn ExpansionOracle,
    s: &Settings,
    cm: &CostModel,
    mode: SearchMode,
) -> Result<Vec<PlanResult>, CliError> {
    let inv = s.inventory(oracle)?;
    let cfg = plan_config(s, mode);
    targets
        .iter()
        .map(|t| Ok(run_plan(std::slice::from_ref(t), oracle, &inv, cm, &cfg)?))
        .collect()
}

fn outcome(results: &[PlanResult]) -> Outcome {
    if results.iter().all(PlanResult::all_succeeded) {
        Outcome::AllSucceeded
    } else {
        Outcome::SomeFailed
    }
}

/// One row per iteration of every run: run index, then the record.
fn write_traces(dir: &Path, name: &str, results: &[PlanResult]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(dir, name)?);
    w.write_record([
        "run",
        "iteration",
        "expanded",
        "reactions_added",
        "molecule_nodes",
        "reaction_nodes",
        "successes",
    ])?;
    for (run, r) in results.iter().enumerate() {
        for rec in &r.trace {
            w.write_record([
                run.to_string(),
                rec.iteration.to_string(),
                rec.expanded.to_string(),
                rec.reactions_added.to_string(),
                rec.molecule_nodes.to_string(),
                rec.reaction_nodes.to_string(),
                rec.successes.iter().filter(|&&b| b).count().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn report(results: &[PlanResult]) {
    let targets: usize = results.iter().map(|r| r.targets.len()).sum();
    let ok: usize = results.iter().map(PlanResult::success_count).sum();
    println!("{ok}/{targets} targets solved");
}

pub fn plan(s: &Settings) -> Result<Outcome, CliError> {
    let oracle = s.oracle()?;
    let targets = s.targets(oracle.as_ref())?;
    let cm = cost_model(s)?;
    let results = plan_each(&targets, oracle.as_ref(), s, &cm, s.mode)?;
    write_json(&s.out, "plan.json", &results)?;
    write_traces(&s.out, "trace.csv", &results)?;
    report(&results);
    Ok(outcome(&results))
}

#[derive(Serialize)]
struct BatchOutput<'a> {
    targets: Vec<&'a MoleculeId>,
    result: &'a PlanResult,
}

pub fn batch_plan(s: &Settings) -> Result<Outcome, CliError> {
    let oracle = s.oracle()?;
    let targets = s.targets(oracle.as_ref())?;
    let inv = s.inventory(oracle.as_ref())?;
    let cm = cost_model(s)?;
    let batch = BatchConfig {
        batch_size: s.batch_size,
        clusters: s.clusters,
        feature_bits: s.feature_bits,
        seed: s.seed,
    };
    let batches = run_batches(&targets, oracle.as_ref(), &inv, &cm, &plan_config(s, s.mode), &batch)?;
    let out: Vec<BatchOutput> = batches
        .iter()
        .map(|(members, result)| BatchOutput {
            targets: members.iter().map(|&i| &targets[i]).collect(),
            result,
        })
        .collect();
    write_json(&s.out, "batch_plan.json", &out)?;
    let results: Vec<PlanResult> = batches.into_iter().map(|(_, r)| r).collect();
    write_traces(&s.out, "trace.csv", &results)?;
    report(&results);
    Ok(outcome(&results))
}

pub fn gen_data(s: &Settings) -> Result<Outcome, CliError> {
    let oracle = s.oracle()?;
    let targets = s.targets(oracle.as_ref())?;
    let inv = s.inventory(oracle.as_ref())?;
    let baseline = cost_model(s)?;
    let cfg = GenConfig {
        plan: plan_config(s, SearchMode::Graph),
        replay: s.replay,
        feature_bits: s.feature_bits,
    };
    let examples = generate(&targets, oracle.as_ref(), &inv, &baseline, &cfg)?;
    let mut w = create(&s.out, "dataset.jsonl")?;
    write_jsonl(&mut w, &examples)?;
    w.flush()?;
    println!("{} examples from {} targets", examples.len(), targets.len());
    Ok(Outcome::AllSucceeded)
}

pub fn train(s: &Settings) -> Result<Outcome, CliError> {
    match s.model {
        ModelKind::Gnn => train_policy(s),
        ModelKind::Value => train_value(s),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    model: &'static str,
    train_examples: usize,
    val_examples: usize,
    best_epoch: usize,
    final_loss: f64,
}

fn train_policy(s: &Settings) -> Result<Outcome, CliError> {
    let path = s
        .data
        .as_deref()
        .ok_or_else(|| CliError::Config("training the gnn needs --data".into()))?;
    let examples = read_jsonl(BufReader::new(File::open(path)?), &path.display().to_string())?;
    let (train_set, val_set, _) = split(&examples, s.val_size, 0, s.seed)?;
    let defaults = GnnConfig::default();
    let config = GnnConfig {
        hidden: 2 * s.rbf_size,
        layers: s.layers,
        rbf: RbfConfig::with_grid(defaults.rbf.low, defaults.rbf.high, s.rbf_size),
        feature_bits: s.feature_bits,
        dropout: s.dropout,
    };
    let encode = |set: &[synthplan::traindata::TrainingExample]| -> Result<Vec<_>, CliError> {
        set.iter()
            .map(|e| Ok((GnnInput::encode(&e.snapshot, &config)?, e.labels()?)))
            .collect()
    };
    let train_set = encode(&train_set)?;
    let val_set = encode(&val_set)?;
    let tc = TrainConfig {
        epochs: s.epochs,
        batch_size: s.train_batch,
        adam: AdamConfig {
            lr: s.lr.unwrap_or(AdamConfig::default().lr),
            ..AdamConfig::default()
        },
        seed: s.seed,
        ..TrainConfig::default()
    };
    let outcome = train_gnn(GnnParameters::init(config, s.seed)?, &train_set, &val_set, &tc)?;
    let mut w = create(&s.out, "gnn.weights")?;
    outcome.best.save(&mut w)?;
    w.flush()?;
    let mut log = create(&s.out, "train_log.csv")?;
    writeln!(log, "{}", synthplan::policygnn::EpochLog::CSV_HEADER)?;
    for row in &outcome.log {
        writeln!(log, "{}", row.csv_row())?;
    }
    log.flush()?;
    let summary = TrainSummary {
        model: "gnn",
        train_examples: train_set.len(),
        val_examples: val_set.len(),
        best_epoch: outcome.best_epoch,
        final_loss: outcome.log.last().map_or(f64::NAN, |l| l.total),
    };
    write_json(&s.out, "train_summary.json", &summary)?;
    println!("trained on {} examples; best epoch {}", summary.train_examples, summary.best_epoch);
    Ok(Outcome::AllSucceeded)
}

/// Fits the value regressor to remaining-route costs of zero-baseline
/// routes for the targets.
fn train_value(s: &Settings) -> Result<Outcome, CliError> {
    let oracle = s.oracle()?;
    let targets = s.targets(oracle.as_ref())?;
    let results = plan_each(&targets, oracle.as_ref(), s, &CostModel::Zero, SearchMode::Graph)?;
    let samples: Vec<_> = results
        .iter()
        .filter_map(|r| r.targets[0].route.as_ref())
        .flat_map(value_targets)
        .map(|(m, c)| (oracle.features(&m, s.feature_bits), c))
        .collect();
    if samples.is_empty() {
        return Err(CliError::Config("no target produced a route to learn from".into()));
    }
    let config = ValueNetConfig {
        feature_bits: s.feature_bits,
        hidden: ValueNetConfig::default().hidden,
    };
    let mut net = ValueNet::init(config, s.seed)?;
    let defaults = ValueTrainConfig::default();
    let tc = ValueTrainConfig {
        epochs: s.epochs,
        batch_size: s.train_batch,
        adam: AdamConfig {
            lr: s.lr.unwrap_or(defaults.adam.lr),
            ..defaults.adam
        },
        seed: s.seed,
    };
    let history = net.fit(&samples, &tc)?;
    let mut w = create(&s.out, "value.weights")?;
    net.save(&mut w)?;
    w.flush()?;
    let mut log = create(&s.out, "train_log.csv")?;
    writeln!(log, "epoch,mse")?;
    for (i, l) in history.iter().enumerate() {
        writeln!(log, "{i},{l}")?;
    }
    log.flush()?;
    let summary = TrainSummary {
        model: "value",
        train_examples: samples.len(),
        val_examples: 0,
        best_epoch: history.len().saturating_sub(1),
        final_loss: history.last().copied().unwrap_or(f64::NAN),
    };
    write_json(&s.out, "train_summary.json", &summary)?;
    println!("trained on {} molecules", samples.len());
    Ok(Outcome::AllSucceeded)
}

pub fn eval(s: &Settings) -> Result<Outcome, CliError> {
    let oracle = s.oracle()?;
    let targets = s.targets(oracle.as_ref())?;
    let cm = cost_model(s)?;
    let results = plan_each(&targets, oracle.as_ref(), s, &cm, s.mode)?;
    let summary = evaluate(&results, &s.limits, s.top_k)?;
    write_json(&s.out, "eval.json", &summary)?;
    summary.curve.write_csv(create(&s.out, "curve.csv")?)?;
    let routes: Vec<_> = results
        .iter()
        .flat_map(|r| &r.targets)
        .filter_map(|t| t.route.clone())
        .collect();
    reuse_histogram(&routes).write_csv(create(&s.out, "reuse.csv")?)?;
    report(&results);
    Ok(outcome(&results))
}

#[derive(Serialize)]
struct RedundancySummary<'a> {
    tree: &'a RedundancyReport,
    graph: &'a RedundancyReport,
}

pub fn study_redundancy(s: &Settings) -> Result<Outcome, CliError> {
    let oracle = s.oracle()?;
    let targets = s.targets(oracle.as_ref())?;
    let cm = cost_model(s)?;
    let tree = redundancy_study(&plan_each(&targets, oracle.as_ref(), s, &cm, SearchMode::Tree)?)?;
    let graph = redundancy_study(&plan_each(&targets, oracle.as_ref(), s, &cm, SearchMode::Graph)?)?;
    tree.write_csv(create(&s.out, "redundancy_tree.csv")?)?;
    graph.write_csv(create(&s.out, "redundancy_graph.csv")?)?;
    write_json(&s.out, "redundancy.json", &RedundancySummary { tree: &tree, graph: &graph })?;
    println!(
        "tree: {} expanded, {} unique; graph: {} expanded, {} unique",
        tree.expanded_total, tree.unique_total, graph.expanded_total, graph.unique_total
    );
    Ok(Outcome::AllSucceeded)
}
