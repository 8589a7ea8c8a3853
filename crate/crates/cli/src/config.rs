use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use synthplan::molspace::{
    ExpansionOracle, IntegerDomain, Inventory, MoleculeId, SplitRule, TableDomain, DEFAULT_FEATURE_BITS,
    DEFAULT_INVENTORY_MAX,
};
use synthplan::planner::SearchMode;
use synthplan::traindata::ReplayExpansion;

use crate::CliError;

pub const SEED_ENV: &str = "RETROGRAPH_SEED";

/// Flags shared by every subcommand. Each one overrides the matching key
/// of the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file with any of the settings below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `additive`, `factor` or a JSONL reaction file.
    #[arg(long, global = true)]
    pub domain: Option<String>,
    /// Purchasable molecules, one per line.
    #[arg(long, global = true)]
    pub inventory: Option<PathBuf>,
    /// Target molecules, one per line.
    #[arg(long, global = true)]
    pub targets: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// `zero`, `value` or `gnn`.
    #[arg(long, global = true)]
    pub cost: Option<String>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub clusters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Training dataset written by `gen-data`.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// `gnn` or `value`.
    #[arg(long, global = true)]
    pub model: Option<String>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub domain: Option<String>,
    pub inventory: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub mode: Option<String>,
    pub cost: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub budget: Option<usize>,
    pub k: Option<usize>,
    pub batch_size: Option<usize>,
    pub clusters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub model: Option<String>,
    /// Largest integer in the default `{1..n}` inventory of integer domains.
    pub inventory_max: Option<u64>,
    pub feature_bits: Option<usize>,
    pub replay: Option<ReplayExpansion>,
    pub epochs: Option<usize>,
    pub train_batch: Option<usize>,
    pub lr: Option<f64>,
    pub val_size: Option<usize>,
    pub rbf_size: Option<usize>,
    pub layers: Option<usize>,
    pub dropout: Option<f64>,
    pub lambda: Option<f64>,
    pub limits: Option<Vec<usize>>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Zero,
    Value,
    Gnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gnn,
    Value,
}

#[derive(Debug, Clone)]
pub enum DomainSpec {
    Integer(SplitRule),
    Table(PathBuf),
}

/// Fully resolved settings with defaults applied.
#[derive(Debug, Clone)]
pub struct Settings {
    pub domain: DomainSpec,
    pub inventory: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub mode: SearchMode,
    pub cost: CostKind,
    pub checkpoint: Option<PathBuf>,
    pub budget: usize,
    pub k: usize,
    pub batch_size: usize,
    pub clusters: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub model: ModelKind,
    pub inventory_max: u64,
    pub feature_bits: usize,
    pub replay: ReplayExpansion,
    pub epochs: usize,
    pub train_batch: usize,
    /// Model default when unset.
    pub lr: Option<f64>,
    pub val_size: usize,
    pub rbf_size: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lambda: f64,
    pub limits: Vec<usize>,
    pub top_k: usize,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_cost(s: &str) -> Result<CostKind, CliError> {
    match s {
        "zero" => Ok(CostKind::Zero),
        "value" => Ok(CostKind::Value),
        "gnn" => Ok(CostKind::Gnn),
        _ => Err(config_err(format!("unknown cost model {s:?}; expected zero, value or gnn"))),
    }
}

fn parse_model(s: &str) -> Result<ModelKind, CliError> {
    match s {
        "gnn" => Ok(ModelKind::Gnn),
        "value" => Ok(ModelKind::Value),
        _ => Err(config_err(format!("unknown model {s:?}; expected gnn or value"))),
    }
}

fn parse_domain(s: &str) -> DomainSpec {
    match s {
        "additive" => DomainSpec::Integer(SplitRule::Additive),
        "factor" => DomainSpec::Integer(SplitRule::Factor),
        path => DomainSpec::Table(PathBuf::from(path)),
    }
}

/// Seed precedence: flag, config file, `RETROGRAPH_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config_err(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

impl Settings {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let mode = match flags.mode.clone().or(file.mode) {
            Some(m) => m.parse::<SearchMode>().map_err(|e| config_err(e.to_string()))?,
            None => SearchMode::Graph,
        };
        let s = Settings {
            domain: parse_domain(flags.domain.as_deref().or(file.domain.as_deref()).unwrap_or("factor")),
            inventory: flags.inventory.clone().or(file.inventory),
            targets: flags.targets.clone().or(file.targets),
            mode,
            cost: parse_cost(flags.cost.as_deref().or(file.cost.as_deref()).unwrap_or("zero"))?,
            checkpoint: flags.checkpoint.clone().or(file.checkpoint),
            budget: flags.budget.or(file.budget).unwrap_or(100),
            k: flags.k.or(file.k).unwrap_or(50),
            batch_size: flags.batch_size.or(file.batch_size).unwrap_or(1),
            clusters: flags.clusters.or(file.clusters).unwrap_or(1),
            seed: resolve_seed(flags.seed, file.seed)?,
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("out")),
            data: flags.data.clone().or(file.data),
            model: parse_model(flags.model.as_deref().or(file.model.as_deref()).unwrap_or("gnn"))?,
            inventory_max: file.inventory_max.unwrap_or(DEFAULT_INVENTORY_MAX),
            feature_bits: file.feature_bits.unwrap_or(DEFAULT_FEATURE_BITS),
            replay: file.replay.unwrap_or(ReplayExpansion::FullK),
            epochs: file.epochs.unwrap_or(20),
            train_batch: file.train_batch.unwrap_or(32),
            lr: file.lr,
            val_size: file.val_size.unwrap_or(0),
            rbf_size: file.rbf_size.unwrap_or(64),
            layers: file.layers.unwrap_or(3),
            dropout: file.dropout.unwrap_or(0.1),
            lambda: file.lambda.unwrap_or(synthplan::costmodel::DEFAULT_LAMBDA),
            limits: file.limits.unwrap_or_else(|| vec![10, 20, 50, 100]),
            top_k: file.top_k.unwrap_or(10),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("budget", self.budget),
            ("k", self.k),
            ("batch-size", self.batch_size),
            ("clusters", self.clusters),
            ("feature_bits", self.feature_bits),
            ("epochs", self.epochs),
            ("train_batch", self.train_batch),
            ("rbf_size", self.rbf_size),
            ("layers", self.layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(config_err(format!("{name} must be at least 1")));
            }
        }
        if self.feature_bits < 8 {
            return Err(config_err("feature_bits must be at least 8"));
        }
        if let Some(lr) = self.lr {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(config_err(format!("lr must be finite and non-negative, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(config_err(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if self.limits.is_empty() || self.limits.contains(&0) {
            return Err(config_err("limits must be a non-empty list of positive iteration counts"));
        }
        if self.cost != CostKind::Zero && self.checkpoint.is_none() {
            return Err(config_err("the value and gnn cost models need --checkpoint"));
        }
        let files = [
            ("inventory", &self.inventory),
            ("targets", &self.targets),
            ("checkpoint", &self.checkpoint),
            ("data", &self.data),
        ];
        for (name, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(config_err(format!("{name} file {} does not exist", p.display())));
                }
            }
        }
        if let DomainSpec::Table(p) = &self.domain {
            if !p.is_file() {
                return Err(config_err(format!(
                    "domain {} is neither additive, factor nor an existing reaction file",
                    p.display()
                )));
            }
            if self.inventory.is_none() {
                return Err(config_err("table domains need --inventory"));
            }
        }
        Ok(())
    }

    pub fn require_targets(&self) -> Result<&Path, CliError> {
        self.targets.as_deref().ok_or_else(|| config_err("this command needs --targets"))
    }

    pub fn oracle(&self) -> Result<Box<dyn ExpansionOracle>, CliError> {
        Ok(match &self.domain {
            DomainSpec::Integer(rule) => Box::new(IntegerDomain::new(*rule, self.seed)),
            DomainSpec::Table(p) => Box::new(TableDomain::load(p)?),
        })
    }

    pub fn inventory(&self, oracle: &dyn ExpansionOracle) -> Result<Inventory, CliError> {
        match (&self.inventory, &self.domain) {
            (Some(p), _) => Ok(Inventory::load(p, oracle)?),
            (None, DomainSpec::Integer(_)) => Ok(IntegerDomain::inventory(self.inventory_max)),
            (None, DomainSpec::Table(_)) => Err(config_err("table domains need --inventory")),
        }
    }

    pub fn targets(&self, oracle: &dyn ExpansionOracle) -> Result<Vec<MoleculeId>, CliError> {
        Ok(synthplan::molspace::load_targets(self.require_targets()?, oracle)?)
    }
}
