//! Evaluator setup, command runners and the run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{EvaluatorChoice, RunConfig};
use super::oracle::{dp_oracle, OracleResult};
use super::policies::{graded_policy, uniform_policy, PolicyName, PolicyPlan};
use super::random::{random_search, RandomSearchOutcome};
use crate::environ::{
    log_line, protocol_fingerprint, search, write_summary, Environment, SearchOutcome, AGENT_CHECKPOINT, BEST,
    EPISODE_LOG, SUMMARY,
};
use crate::error::{Error, Result};
use crate::evaluators::{
    benchmark_network, fine_tune, load_convnet, pretrain_tinycnn, prune_network, save_convnet, DatasetConfig,
    Evaluator, PretrainConfig, ProxyModel, SyntheticDataset, TinyCnnEvaluator,
};
use crate::netmodel::read_network;
use crate::nncore::{checkpoint, Checkpoint};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_SNAPSHOT: &str = "config.txt";
pub const FINE_TUNE: &str = "finetune.json";
pub const RANDOM_LOG: &str = "random.jsonl";
pub const RANDOM_SUMMARY: &str = "random_summary.csv";
pub const RANDOM_BEST: &str = "random_best.json";
pub const ORACLE: &str = "oracle.json";

pub fn baseline_file(name: PolicyName) -> String {
    format!("baseline_{}.json", name.as_str())
}

/// Pretrains the tiny CNN and writes it with the dataset recipe as a
/// checkpoint at `prefix`. Returns the validation accuracy.
pub fn pretrain_checkpoint(prefix: &Path, dataset_seed: u64, seed: u64, config: &PretrainConfig) -> Result<f64> {
    let data = DatasetConfig::default();
    let dataset = SyntheticDataset::generate_with(data, dataset_seed)?;
    let (net, accuracy) = pretrain_tinycnn(&dataset, config, seed)?;
    let mut ckpt = Checkpoint::new();
    save_convnet(&net, &mut ckpt);
    ckpt.put_meta("dataset.seed", dataset_seed);
    ckpt.put_meta("dataset.train", data.train);
    ckpt.put_meta("dataset.validation", data.validation);
    ckpt.put_meta("dataset.noise", data.noise);
    ckpt.put_meta("pretrain.seed", seed);
    ckpt.put_meta("pretrain.epochs", config.epochs);
    ckpt.put_meta("pretrain.accuracy", accuracy);
    ckpt.save(prefix)?;
    Ok(accuracy)
}

/// The evaluator a config selects, with what fine-tuning needs.
#[allow(clippy::large_enum_variant)]
pub enum Workbench {
    Proxy(ProxyModel),
    TinyCnn {
        evaluator: TinyCnnEvaluator,
        dataset: SyntheticDataset,
        pretrain: PretrainConfig,
    },
}

impl Workbench {
    pub fn build(config: &RunConfig) -> Result<Self> {
        match config.evaluator {
            EvaluatorChoice::Proxy => {
                let network = match &config.network {
                    Some(path) => read_network(path)?,
                    None => benchmark_network(),
                };
                Ok(Workbench::Proxy(ProxyModel::seeded(
                    network,
                    config.proxy_base_error,
                    config.proxy_exponent,
                    config.proxy_seed,
                )?))
            }
            EvaluatorChoice::TinyCnn => {
                let pretrain = PretrainConfig {
                    epochs: config.pretrain_epochs,
                    ..PretrainConfig::default()
                };
                let (net, dataset) = match &config.pretrained {
                    Some(prefix) => {
                        let ckpt = Checkpoint::load(prefix)?;
                        let data = DatasetConfig {
                            train: ckpt.require_meta("dataset.train")?,
                            validation: ckpt.require_meta("dataset.validation")?,
                            noise: ckpt.require_meta("dataset.noise")?,
                        };
                        let dataset = SyntheticDataset::generate_with(data, ckpt.require_meta("dataset.seed")?)?;
                        (load_convnet(&ckpt)?, dataset)
                    }
                    None => {
                        let dataset = SyntheticDataset::generate(config.dataset_seed);
                        let (net, _) = pretrain_tinycnn(&dataset, &pretrain, config.pretrain_seed)?;
                        (net, dataset)
                    }
                };
                let evaluator = TinyCnnEvaluator::new(net, dataset.validation.clone())?;
                Ok(Workbench::TinyCnn {
                    evaluator,
                    dataset,
                    pretrain,
                })
            }
        }
    }

    pub fn evaluator(&self) -> &dyn Evaluator {
        match self {
            Workbench::Proxy(p) => p,
            Workbench::TinyCnn { evaluator, .. } => evaluator,
        }
    }

    pub fn environment(&self, config: &RunConfig) -> Result<Environment<'_>> {
        Environment::new(
            self.evaluator(),
            config.search.reward,
            config.search.constraint,
            config.search.agent.a_floor,
        )
    }

    pub fn fingerprint(&self, config: &RunConfig) -> String {
        let s = &config.search;
        protocol_fingerprint(
            self.evaluator(),
            s.reward,
            s.constraint,
            s.agent.a_floor,
            s.episodes,
            s.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: Vec<String>,
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub seed: u64,
    pub config: String,
    pub commands: Vec<CommandRecord>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("records serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Records one finished command in the run directory: writes the config
/// snapshot and appends to the manifest. A directory already holding a run
/// with a different config is refused.
pub fn persist_run(config: &RunConfig, command: &str, started_unix: u64, artifacts: Vec<String>) -> Result<PathBuf> {
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let snapshot = config.to_text();
    let path = dir.join(MANIFEST);
    let mut manifest = if path.exists() {
        let m: RunManifest = read_json(&path)?;
        if m.config != snapshot {
            return Err(Error::Config(format!(
                "{} holds a run with a different config",
                dir.display()
            )));
        }
        m
    } else {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.search.seed,
            config: snapshot.clone(),
            commands: Vec::new(),
        }
    };
    let snap = dir.join(CONFIG_SNAPSHOT);
    fs::write(&snap, &snapshot).map_err(|e| Error::io(&snap, e))?;
    let mut artifacts = artifacts;
    artifacts.push(CONFIG_SNAPSHOT.to_string());
    artifacts.push(MANIFEST.to_string());
    manifest.commands.push(CommandRecord {
        command: command.to_string(),
        started_unix,
        finished_unix: unix_now(),
        artifacts,
    });
    write_json(&path, &manifest)?;
    Ok(dir.clone())
}

/// Refuses to start in a directory that already holds a different run.
fn check_out_dir(config: &RunConfig) -> Result<()> {
    let path = config.out_dir.join(MANIFEST);
    if path.exists() {
        let m: RunManifest = read_json(&path)?;
        if m.config != config.to_text() {
            return Err(Error::Config(format!(
                "{} holds a run with a different config",
                config.out_dir.display()
            )));
        }
    }
    Ok(())
}

/// A policy plan tagged with the comparison protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    #[serde(flatten)]
    pub plan: PolicyPlan,
    pub protocol: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    #[serde(flatten)]
    pub result: OracleResult,
    pub grid_step: f64,
    pub protocol: String,
}

/// Best learned plan before and after fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineTuneRecord {
    pub episode: usize,
    pub ratios: Vec<f64>,
    pub flops_fraction: f64,
    pub error_before: f64,
    pub error_after: f64,
    pub epochs: usize,
}

pub struct SearchRun {
    pub outcome: SearchOutcome,
    pub fine_tune: Option<FineTuneRecord>,
}

/// Learned search; for the tiny CNN the best plan is fine-tuned once the
/// search completes.
pub fn run_search(config: &RunConfig, resume: bool) -> Result<SearchRun> {
    let started = unix_now();
    check_out_dir(config)?;
    let bench = Workbench::build(config)?;
    let outcome = search(&config.search, bench.evaluator(), Some(&config.out_dir), resume)?;
    let mut artifacts: Vec<String> = vec![
        EPISODE_LOG.into(),
        SUMMARY.into(),
        BEST.into(),
        file_name(&checkpoint::manifest_path(Path::new(AGENT_CHECKPOINT))),
        file_name(&checkpoint::blob_path(Path::new(AGENT_CHECKPOINT))),
    ];
    let mut fine_tuned = None;
    if let (
        Workbench::TinyCnn {
            evaluator,
            dataset,
            pretrain,
        },
        true,
        Some(best),
    ) = (&bench, outcome.complete, outcome.best.as_ref())
    {
        let pruned = prune_network(evaluator.net(), &best.clamped)?;
        let (_, error_after) = fine_tune(
            &pruned,
            dataset,
            config.fine_tune_fraction,
            pretrain,
            config.search.seed,
        )?;
        let record = FineTuneRecord {
            episode: best.episode,
            ratios: best.clamped.clone(),
            flops_fraction: best.flops_fraction,
            error_before: best.error.expect("best episode was evaluated"),
            error_after,
            epochs: (config.fine_tune_fraction * pretrain.epochs as f64).round() as usize,
        };
        write_json(&config.out_dir.join(FINE_TUNE), &record)?;
        artifacts.push(FINE_TUNE.into());
        fine_tuned = Some(record);
    }
    persist_run(
        config,
        if resume { "search --resume" } else { "search" },
        started,
        artifacts,
    )?;
    Ok(SearchRun {
        outcome,
        fine_tune: fine_tuned,
    })
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

pub fn run_baselines(config: &RunConfig, policies: &[PolicyName]) -> Result<Vec<PolicyPlan>> {
    let started = unix_now();
    check_out_dir(config)?;
    let alpha = config.budget_alpha()?;
    let bench = Workbench::build(config)?;
    let env = bench.environment(config)?;
    let protocol = bench.fingerprint(config);
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    let mut plans = Vec::new();
    let mut artifacts = Vec::new();
    for &name in policies {
        let plan = match name {
            PolicyName::Uniform => uniform_policy(&env, alpha)?,
            PolicyName::ShallowAggressive | PolicyName::DeepAggressive => graded_policy(&env, name, alpha)?,
            other => return Err(Error::Config(format!("`{}` is not a baseline policy", other.as_str()))),
        };
        let file = baseline_file(name);
        write_json(
            &config.out_dir.join(&file),
            &PlanRecord {
                plan: plan.clone(),
                protocol: protocol.clone(),
            },
        )?;
        artifacts.push(file);
        plans.push(plan);
    }
    persist_run(config, "baseline", started, artifacts)?;
    Ok(plans)
}

/// Random search with the learned search's episode budget and seed.
pub fn run_random(config: &RunConfig) -> Result<RandomSearchOutcome> {
    let started = unix_now();
    check_out_dir(config)?;
    let bench = Workbench::build(config)?;
    let env = bench.environment(config)?;
    let protocol = bench.fingerprint(config);
    let outcome = random_search(&env, config.search.episodes, config.search.seed)?;
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut log = String::new();
    for r in &outcome.trace {
        log.push_str(&log_line(r, &protocol));
        log.push('\n');
    }
    let log_path = dir.join(RANDOM_LOG);
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    write_summary(&dir.join(RANDOM_SUMMARY), &outcome.trace)?;
    write_json(
        &dir.join(RANDOM_BEST),
        &PlanRecord {
            plan: outcome.best.clone(),
            protocol,
        },
    )?;
    persist_run(
        config,
        "random",
        started,
        vec![RANDOM_LOG.into(), RANDOM_SUMMARY.into(), RANDOM_BEST.into()],
    )?;
    Ok(outcome)
}

pub fn run_oracle(config: &RunConfig) -> Result<OracleResult> {
    let started = unix_now();
    check_out_dir(config)?;
    let alpha = config.budget_alpha()?;
    let bench = Workbench::build(config)?;
    let Workbench::Proxy(proxy) = &bench else {
        return Err(Error::Config("the DP oracle needs `evaluator = proxy`".into()));
    };
    let result = dp_oracle(proxy, alpha, config.grid_step)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    write_json(
        &config.out_dir.join(ORACLE),
        &OracleRecord {
            result: result.clone(),
            grid_step: config.grid_step,
            protocol: bench.fingerprint(config),
        },
    )?;
    persist_run(config, "oracle", started, vec![ORACLE.into()])?;
    Ok(result)
}
