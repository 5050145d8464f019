use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::episode::{run_episode, Environment, EpisodeResult};
use super::{Constraint, RewardKind};
use crate::agent::{AgentConfig, DdpgAgent, NoiseSchedule};
use crate::error::{Error, Result};
use crate::evaluators::Evaluator;
use crate::nncore::{checkpoint, Checkpoint};

pub const EPISODE_LOG: &str = "episodes.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const BEST: &str = "best.json";
pub const AGENT_CHECKPOINT: &str = "agent";

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub episodes: usize,
    pub warmup_episodes: usize,
    pub warmup_sigma: f64,
    pub final_sigma: f64,
    pub reward: RewardKind,
    pub constraint: Constraint,
    pub agent: AgentConfig,
    pub seed: u64,
    /// Save the agent every this many episodes (0: only at the end).
    pub checkpoint_every: usize,
    /// Stop once this many episodes are done, leaving a resumable run.
    pub stop_after: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            episodes: 400,
            warmup_episodes: 100,
            warmup_sigma: 0.5,
            final_sigma: 0.01,
            reward: RewardKind::Err,
            constraint: Constraint::None,
            agent: AgentConfig::default(),
            seed: 0,
            checkpoint_every: 50,
            stop_after: None,
        }
    }
}

impl SearchConfig {
    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule {
            warmup_episodes: self.warmup_episodes,
            warmup_sigma: self.warmup_sigma,
            decay_episodes: self.episodes.saturating_sub(self.warmup_episodes),
            final_sigma: self.final_sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.episodes < self.warmup_episodes {
            return Err(Error::Config(format!(
                "episodes ({}) must be positive and at least warmup_episodes ({})",
                self.episodes, self.warmup_episodes
            )));
        }
        if let Constraint::FlopsBudget { alpha } = self.constraint {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::domain("alpha", alpha, "(0, 1]"));
            }
        }
        self.schedule().validate()?;
        self.agent.validate()
    }
}

/// Short hash of everything a fair comparison must share: evaluator,
/// per-layer cost and accounting, reward, constraint, action floor, episode
/// budget, master seed and seed-derivation scheme.
pub fn protocol_fingerprint(
    evaluator: &dyn Evaluator,
    reward: RewardKind,
    constraint: Constraint,
    a_floor: f64,
    episodes: usize,
    seed: u64,
) -> String {
    let cost = evaluator.cost_model();
    let flops: Vec<String> = cost.layer_flops().iter().map(|f| f.to_string()).collect();
    let text = format!(
        "evaluator={};accounting={};flops={};reward={};constraint={};a_floor={a_floor};episodes={episodes};seed={seed};seeds=sha256-le64",
        evaluator.name(),
        cost.accounting().as_str(),
        flops.join(","),
        reward.as_str(),
        constraint.describe(),
    );
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub struct SearchOutcome {
    pub episodes: Vec<EpisodeResult>,
    pub best: Option<EpisodeResult>,
    pub agent: DdpgAgent,
    pub complete: bool,
    pub fingerprint: String,
}

#[derive(Serialize)]
struct LogRecord<'a> {
    #[serde(flatten)]
    result: &'a EpisodeResult,
    protocol: &'a str,
}

/// One episode-log line tagged with the protocol fingerprint.
pub fn log_line(result: &EpisodeResult, protocol: &str) -> String {
    serde_json::to_string(&LogRecord { result, protocol }).expect("episode records serialize")
}

/// Parses an episode log written by [`search`].
pub fn read_episode_log(path: &Path) -> Result<Vec<EpisodeResult>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Comma-separated per-episode table.
pub fn write_summary(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut text = String::from("episode,sigma,reward,error,flops_fraction,best_so_far,baseline\n");
    for r in episodes {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.episode,
            r.sigma,
            opt(r.reward),
            opt(r.error),
            r.flops_fraction,
            opt(r.best_so_far),
            opt(r.baseline)
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn best_of(episodes: &[EpisodeResult]) -> Option<EpisodeResult> {
    let mut best: Option<&EpisodeResult> = None;
    for r in episodes {
        if let Some(reward) = r.reward {
            if best.is_none_or(|b| reward > b.reward.unwrap()) {
                best = Some(r);
            }
        }
    }
    best.cloned()
}

fn save_checkpoint(dir: &Path, agent: &DdpgAgent, next_episode: usize, protocol: &str) -> Result<()> {
    let mut ckpt = Checkpoint::new();
    agent.save(&mut ckpt);
    ckpt.put_meta("search.next_episode", next_episode);
    ckpt.put_meta("search.protocol", protocol);
    ckpt.save(&dir.join(AGENT_CHECKPOINT))
}

/// Runs the learned search. With `out_dir` the episode log, summary, best
/// episode and agent checkpoint are written there; `resume` continues from
/// the checkpoint in `out_dir` if one exists.
pub fn search(
    config: &SearchConfig,
    evaluator: &dyn Evaluator,
    out_dir: Option<&Path>,
    resume: bool,
) -> Result<SearchOutcome> {
    config.validate()?;
    let env = Environment::new(evaluator, config.reward, config.constraint, config.agent.a_floor)?;
    let schedule = config.schedule();
    let fingerprint = protocol_fingerprint(
        evaluator,
        config.reward,
        config.constraint,
        config.agent.a_floor,
        config.episodes,
        config.seed,
    );
    let mut agent = DdpgAgent::new(config.agent.clone(), config.seed)?;
    let mut episodes = Vec::new();

    let mut log = None;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let prefix = dir.join(AGENT_CHECKPOINT);
        let log_path = dir.join(EPISODE_LOG);
        if resume && checkpoint::manifest_path(&prefix).exists() {
            let ckpt = Checkpoint::load(&prefix)?;
            if ckpt.meta("search.protocol") != Some(fingerprint.as_str()) {
                return Err(Error::Config(format!(
                    "checkpoint in {} belongs to a different protocol",
                    dir.display()
                )));
            }
            agent.restore(&ckpt)?;
            let next: usize = ckpt.require_meta("search.next_episode")?;
            episodes = read_episode_log(&log_path)?;
            if episodes.len() < next {
                return Err(Error::Config(format!(
                    "episode log holds {} episodes, checkpoint expects {next}",
                    episodes.len()
                )));
            }
            episodes.truncate(next);
        }
        let mut text = String::new();
        for r in &episodes {
            text.push_str(&log_line(r, &fingerprint));
            text.push('\n');
        }
        fs::write(&log_path, text).map_err(|e| Error::io(&log_path, e))?;
        log = Some(
            OpenOptions::new()
                .append(true)
                .open(&log_path)
                .map_err(|e| Error::io(&log_path, e))?,
        );
    }

    let mut best_reward = best_of(&episodes).and_then(|b| b.reward);
    let stop = config.stop_after.unwrap_or(config.episodes).min(config.episodes);
    for e in episodes.len()..stop {
        let result = run_episode(&mut agent, &env, &schedule, e, best_reward)?;
        best_reward = result.best_so_far;
        if let (Some(file), Some(dir)) = (log.as_mut(), out_dir) {
            writeln!(file, "{}", log_line(&result, &fingerprint))
                .map_err(|err| Error::io(dir.join(EPISODE_LOG), err))?;
        }
        episodes.push(result);
        if let Some(dir) = out_dir {
            let done = episodes.len();
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < stop {
                save_checkpoint(dir, &agent, done, &fingerprint)?;
            }
        }
    }

    let best = best_of(&episodes);
    if let Some(dir) = out_dir {
        save_checkpoint(dir, &agent, episodes.len(), &fingerprint)?;
        write_summary(&dir.join(SUMMARY), &episodes)?;
        let best_path = dir.join(BEST);
        let text = serde_json::to_string_pretty(&best).expect("episode records serialize");
        fs::write(&best_path, text + "\n").map_err(|e| Error::io(&best_path, e))?;
    }
    Ok(SearchOutcome {
        complete: episodes.len() == config.episodes,
        episodes,
        best,
        agent,
        fingerprint,
    })
}
