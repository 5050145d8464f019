//! Flat `key = value` run configuration.
//!
//! Blank lines and text after `#` are ignored. Unknown and repeated keys
//! are errors. Relative paths are resolved against the config file's
//! directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::agent::AgentConfig;
use crate::environ::{Constraint, RewardKind, SearchConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorChoice {
    Proxy,
    TinyCnn,
}

impl EvaluatorChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            EvaluatorChoice::Proxy => "proxy",
            EvaluatorChoice::TinyCnn => "tinycnn",
        }
    }
}

/// Every accepted key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("episodes", "400", "search episodes, also used by random search"),
    ("warmup_episodes", "100", "episodes at constant warmup noise"),
    ("warmup_sigma", "0.5", "exploration noise during warmup"),
    ("final_sigma", "0.01", "noise reached on the last episode"),
    ("reward", "err", "err or flops"),
    ("constraint", "flops", "flops (budgeted) or none"),
    ("alpha", "0.5", "kept FLOPs fraction under the flops constraint"),
    ("a_floor", "0.05", "smallest selectable ratio"),
    ("batch_size", "64", "replay minibatch"),
    ("buffer_capacity", "2000", "replay capacity in transitions"),
    ("tau", "0.01", "soft target update rate"),
    ("baseline_decay", "0.95", "reward baseline moving-average decay"),
    ("actor_lr", "1e-4", "actor Adam learning rate"),
    ("critic_lr", "1e-3", "critic Adam learning rate"),
    ("hidden_sizes", "300,300", "hidden widths of actor and critic"),
    ("gamma", "1", "discount"),
    ("evaluator", "proxy", "proxy or tinycnn"),
    ("seed", "0", "master seed"),
    ("out_dir", "run", "run directory"),
    ("checkpoint_every", "50", "episodes between agent checkpoints"),
    ("grid_step", "0.05", "ratio grid of the DP oracle"),
    ("network", "", "proxy network file; empty selects the shipped benchmark"),
    ("proxy_base_error", "0.06", "proxy error of the unpruned network"),
    ("proxy_exponent", "2", "proxy penalty exponent"),
    ("proxy_seed", "0", "seed of the proxy sensitivities"),
    (
        "pretrained",
        "",
        "tiny CNN checkpoint prefix; empty pretrains in process",
    ),
    ("dataset_seed", "0", "synthetic dataset seed for in-process pretraining"),
    ("pretrain_seed", "1", "tiny CNN init and training seed"),
    ("pretrain_epochs", "30", "tiny CNN pretraining epochs"),
    (
        "fine_tune_fraction",
        "0.1",
        "fine-tuning length as a fraction of pretraining",
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub search: SearchConfig,
    /// Budget fraction; active only when the constraint is `flops`.
    pub alpha: f64,
    pub evaluator: EvaluatorChoice,
    pub out_dir: PathBuf,
    pub grid_step: f64,
    pub network: Option<PathBuf>,
    pub proxy_base_error: f64,
    pub proxy_exponent: f64,
    pub proxy_seed: u64,
    pub pretrained: Option<PathBuf>,
    pub dataset_seed: u64,
    pub pretrain_seed: u64,
    pub pretrain_epochs: usize,
    pub fine_tune_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::parse("", Path::new("")).expect("defaults parse")
    }
}

fn value<T: FromStr>(key: &str, text: &str) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{text}`")))
}

fn path_value(text: &str, base: &Path) -> Option<PathBuf> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let p = PathBuf::from(text);
    Some(if p.is_absolute() { p } else { base.join(p) })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut given: BTreeMap<&str, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fail = |msg: String| Error::Parse {
                path: base.join("<config>"),
                line: lineno + 1,
                msg,
            };
            let (key, val) = content
                .split_once('=')
                .ok_or_else(|| fail(format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let Some(&(known, _, _)) = KEYS.iter().find(|(k, _, _)| *k == key) else {
                return Err(fail(format!("unknown key `{key}`")));
            };
            if given.insert(known, val.trim().to_string()).is_some() {
                return Err(fail(format!("`{key}` given twice")));
            }
        }
        let get = |key: &str| -> String {
            given.get(key).cloned().unwrap_or_else(|| {
                KEYS.iter()
                    .find(|(k, _, _)| *k == key)
                    .map(|(_, d, _)| d.to_string())
                    .expect("known key")
            })
        };

        let reward = RewardKind::parse(get("reward").as_str())
            .ok_or_else(|| Error::Config(format!("`reward` must be err or flops, got `{}`", get("reward"))))?;
        let alpha: f64 = value("alpha", &get("alpha"))?;
        let constraint = match get("constraint").as_str() {
            "flops" => Constraint::FlopsBudget { alpha },
            "none" => Constraint::None,
            other => {
                return Err(Error::Config(format!(
                    "`constraint` must be flops or none, got `{other}`"
                )))
            }
        };
        let evaluator = match get("evaluator").as_str() {
            "proxy" => EvaluatorChoice::Proxy,
            "tinycnn" => EvaluatorChoice::TinyCnn,
            other => {
                return Err(Error::Config(format!(
                    "`evaluator` must be proxy or tinycnn, got `{other}`"
                )))
            }
        };
        let hidden = get("hidden_sizes")
            .split(',')
            .map(|w| value::<usize>("hidden_sizes", w))
            .collect::<Result<Vec<_>>>()?;
        let agent = AgentConfig {
            hidden,
            actor_lr: value("actor_lr", &get("actor_lr"))?,
            critic_lr: value("critic_lr", &get("critic_lr"))?,
            tau: value("tau", &get("tau"))?,
            gamma: value("gamma", &get("gamma"))?,
            baseline_decay: value("baseline_decay", &get("baseline_decay"))?,
            batch_size: value("batch_size", &get("batch_size"))?,
            buffer_capacity: value("buffer_capacity", &get("buffer_capacity"))?,
            a_floor: value("a_floor", &get("a_floor"))?,
        };
        let search = SearchConfig {
            episodes: value("episodes", &get("episodes"))?,
            warmup_episodes: value("warmup_episodes", &get("warmup_episodes"))?,
            warmup_sigma: value("warmup_sigma", &get("warmup_sigma"))?,
            final_sigma: value("final_sigma", &get("final_sigma"))?,
            reward,
            constraint,
            agent,
            seed: value("seed", &get("seed"))?,
            checkpoint_every: value("checkpoint_every", &get("checkpoint_every"))?,
            stop_after: None,
        };
        let config = Self {
            search,
            alpha,
            evaluator,
            out_dir: path_value(&get("out_dir"), base)
                .ok_or_else(|| Error::Config("`out_dir` must not be empty".into()))?,
            grid_step: value("grid_step", &get("grid_step"))?,
            network: path_value(&get("network"), base),
            proxy_base_error: value("proxy_base_error", &get("proxy_base_error"))?,
            proxy_exponent: value("proxy_exponent", &get("proxy_exponent"))?,
            proxy_seed: value("proxy_seed", &get("proxy_seed"))?,
            pretrained: path_value(&get("pretrained"), base),
            dataset_seed: value("dataset_seed", &get("dataset_seed"))?,
            pretrain_seed: value("pretrain_seed", &get("pretrain_seed"))?,
            pretrain_epochs: value("pretrain_epochs", &get("pretrain_epochs"))?,
            fine_tune_fraction: value("fine_tune_fraction", &get("fine_tune_fraction"))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain("alpha", self.alpha, "(0, 1]"));
        }
        if !(self.fine_tune_fraction >= 0.0 && self.fine_tune_fraction.is_finite()) {
            return Err(Error::domain("fine_tune_fraction", self.fine_tune_fraction, "[0, inf)"));
        }
        if self.pretrain_epochs == 0 {
            return Err(Error::Config("`pretrain_epochs` must be positive".into()));
        }
        self.search.validate()
    }

    /// Canonical text with every key; parsing it back gives the same config
    /// (paths come back absolute or relative to the same base).
    pub fn to_text(&self) -> String {
        let s = &self.search;
        let a = &s.agent;
        let path = |p: &Option<PathBuf>| p.as_ref().map_or_else(String::new, |p| p.display().to_string());
        let hidden: Vec<String> = a.hidden.iter().map(|h| h.to_string()).collect();
        let constraint = match s.constraint {
            Constraint::None => "none",
            Constraint::FlopsBudget { .. } => "flops",
        };
        let values: Vec<(&str, String)> = vec![
            ("episodes", s.episodes.to_string()),
            ("warmup_episodes", s.warmup_episodes.to_string()),
            ("warmup_sigma", s.warmup_sigma.to_string()),
            ("final_sigma", s.final_sigma.to_string()),
            ("reward", s.reward.as_str().to_string()),
            ("constraint", constraint.to_string()),
            ("alpha", self.alpha.to_string()),
            ("a_floor", a.a_floor.to_string()),
            ("batch_size", a.batch_size.to_string()),
            ("buffer_capacity", a.buffer_capacity.to_string()),
            ("tau", a.tau.to_string()),
            ("baseline_decay", a.baseline_decay.to_string()),
            ("actor_lr", a.actor_lr.to_string()),
            ("critic_lr", a.critic_lr.to_string()),
            ("hidden_sizes", hidden.join(",")),
            ("gamma", a.gamma.to_string()),
            ("evaluator", self.evaluator.as_str().to_string()),
            ("seed", s.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("checkpoint_every", s.checkpoint_every.to_string()),
            ("grid_step", self.grid_step.to_string()),
            ("network", path(&self.network)),
            ("proxy_base_error", self.proxy_base_error.to_string()),
            ("proxy_exponent", self.proxy_exponent.to_string()),
            ("proxy_seed", self.proxy_seed.to_string()),
            ("pretrained", path(&self.pretrained)),
            ("dataset_seed", self.dataset_seed.to_string()),
            ("pretrain_seed", self.pretrain_seed.to_string()),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("fine_tune_fraction", self.fine_tune_fraction.to_string()),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for (key, v) in values {
            let _ = writeln!(out, "{key} = {v}");
        }
        out
    }

    /// Budget fraction the baselines and the oracle target.
    pub fn budget_alpha(&self) -> Result<f64> {
        match self.search.constraint {
            Constraint::FlopsBudget { alpha } => Ok(alpha),
            Constraint::None => Err(Error::Config(
                "baselines and the oracle need `constraint = flops`".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let d = RunConfig::default();
        assert_eq!(d.search.episodes, 400);
        assert_eq!(d.search.constraint, Constraint::FlopsBudget { alpha: 0.5 });
        assert_eq!(d.search.agent, AgentConfig::default());
        let c = RunConfig::parse(
            "# demo\nepisodes = 20 # short\nwarmup_episodes=5\nhidden_sizes = 8, 4\nevaluator = tinycnn\npretrained = nets/tiny\nout_dir = /tmp/x\n",
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(c.search.episodes, 20);
        assert_eq!(c.search.agent.hidden, vec![8, 4]);
        assert_eq!(c.evaluator, EvaluatorChoice::TinyCnn);
        assert_eq!(c.pretrained, Some(PathBuf::from("/cfg/nets/tiny")));
        assert_eq!(c.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new("");
        for text in [
            "episodes = 10\nepisodes = 20",
            "epsiodes = 10",
            "episodes 10",
            "reward = accuracy",
            "alpha = 1.5",
            "episodes = -3",
            "constraint = latency",
        ] {
            assert!(RunConfig::parse(text, base).is_err(), "{text}");
        }
        match RunConfig::parse("\nbogus = 1", base).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let c = RunConfig::parse(
            "seed = 7\nalpha = 0.3\ncritic_lr = 0.0001\nnetwork = a.net",
            Path::new("/r"),
        )
        .unwrap();
        let again = RunConfig::parse(&c.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(c, again);
        assert_eq!(RunConfig::default().to_text().lines().count(), KEYS.len());
    }
}
