//! Acceptance suite. Criteria run one after another in a single test so
//! their wall-clock limits are measured without competing threads; each
//! prints one PASS/FAIL line.

mod common;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use autoprune::agent::{truncated_normal, AgentConfig};
use autoprune::environ::{search, Constraint, Environment, RewardKind, SearchConfig};
use autoprune::evaluators::{prune_network, tiny_cnn, PretrainConfig, ProxyModel};
use autoprune::harness::{
    dp_oracle, graded_policy, pretrain_checkpoint, random_search, run_baselines, run_search, uniform_policy,
    EvaluatorChoice, PolicyName, RunConfig,
};
use autoprune::nncore::Tensor;
use autoprune::seed::rng_for;
use rand::Rng as _;

const ANCHOR_TOLERANCE: f64 = 0.05;
const VGG19_ANCHOR: f64 = 19.6e9;
const PLAIN34_ANCHOR: f64 = 3.6e9;
const GRADIENT_INSTANCES: u64 = 20;
const EQUIVALENCE_CASES: u64 = 100;
const BUDGET_EPISODES: u64 = 1_000;
const TN_SAMPLES: usize = 100_000;
const TN_MEAN_TOLERANCE: f64 = 0.02;
const BANDIT_STEPS: usize = 2_000;
const BANDIT_OPTIMUM: f64 = 0.7;
const BANDIT_TOLERANCE: f64 = 0.1;
const SEEDS: u64 = 5;
const SEARCH_EPISODES: usize = 400;
const ALPHA: f64 = 0.5;
const ORACLE_GAP: f64 = 0.05;
const GRID_STEP: f64 = 0.05;
const ACCURACY_GATE: f64 = 0.90;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Printed straight to the process stdout so the lines survive output
/// capture.
fn line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn within(limit: Duration, elapsed: Duration) -> bool {
    elapsed < limit
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_autoprune")
}

fn nets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../nets")
}

fn cli_total(spec: &str) -> f64 {
    let out = Command::new(bin())
        .args(["flops", nets().join(spec).to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let total = text
        .lines()
        .find_map(|l| l.strip_prefix("total,,"))
        .expect("total line");
    total.parse().unwrap()
}

fn flops_anchors() -> Verdict {
    let start = Instant::now();
    let vgg = cli_total("vgg19.net");
    let plain = cli_total("plain34.net");
    let elapsed = start.elapsed();
    let ok = (vgg - VGG19_ANCHOR).abs() / VGG19_ANCHOR <= ANCHOR_TOLERANCE
        && (plain - PLAIN34_ANCHOR).abs() / PLAIN34_ANCHOR <= ANCHOR_TOLERANCE
        && within(Duration::from_secs(1), elapsed);
    verdict(ok, format!("vgg19 {vgg:.4e}, plain34 {plain:.4e}, {elapsed:.2?}"))
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..GRADIENT_INSTANCES {
        worst = worst
            .max(common::mlp_instance(seed))
            .max(common::dense_mse_instance(seed))
            .max(common::convnet_instance(seed));
    }
    let elapsed = start.elapsed();
    verdict(
        worst < common::FD_TOLERANCE && within(Duration::from_secs(60), elapsed),
        format!("{GRADIENT_INSTANCES} instances x 3 ops, worst relative error {worst:.2e}, {elapsed:.2?}"),
    )
}

fn pruning_equivalence() -> Verdict {
    let start = Instant::now();
    let mut mismatches = 0;
    for case in 0..EQUIVALENCE_CASES {
        let mut rng = rng_for(case, "acceptance.prune");
        let net = tiny_cnn(&mut rng);
        let ratios: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..=1.0)).collect();
        let batch = Tensor::uniform(&[4, 1, 16, 16], 1.0, &mut rng);
        let pruned = prune_network(&net, &ratios).unwrap().forward(&batch).unwrap();
        let masked = common::zero_masked(&net, &ratios).forward(&batch).unwrap();
        if pruned.data() != masked.data() {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && within(Duration::from_secs(60), elapsed),
        format!("{EQUIVALENCE_CASES} cases, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

fn budget_safety() -> Verdict {
    let start = Instant::now();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..BUDGET_EPISODES {
        let (achieved, bound) = common::budget_trial(seed);
        worst = worst.max(achieved / bound);
        if achieved > bound {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        violations == 0 && within(Duration::from_secs(60), elapsed),
        format!("{BUDGET_EPISODES} episodes, {violations} violations, max achieved/bound {worst:.4}, {elapsed:.2?}"),
    )
}

fn truncated_normal_suite() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (i, &mu) in [0.0, 0.25, 0.5, 0.75, 1.0].iter().enumerate() {
        for (j, &sigma) in [0.05, 0.2, 0.5].iter().enumerate() {
            let mut rng = rng_for((i * 3 + j) as u64, "acceptance.tn");
            let mut sum = 0.0;
            for _ in 0..TN_SAMPLES {
                let x = truncated_normal(mu, sigma, &mut rng);
                ok &= (0.0..=1.0).contains(&x);
                sum += x;
            }
            let mean = sum / TN_SAMPLES as f64;
            let want = if mu == 0.5 {
                mu
            } else {
                common::truncated_normal_mean(mu, sigma)
            };
            worst = worst.max((mean - want).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        ok && worst <= TN_MEAN_TOLERANCE && within(Duration::from_secs(10), elapsed),
        format!("15 cells x {TN_SAMPLES} samples, all in [0,1]: {ok}, worst mean gap {worst:.4}, {elapsed:.2?}"),
    )
}

fn bandit() -> Verdict {
    let start = Instant::now();
    let actions: Vec<f64> = (0..SEEDS)
        .map(|seed| common::bandit_action(AgentConfig::default(), seed, BANDIT_STEPS))
        .collect();
    let hits = actions
        .iter()
        .filter(|a| (*a - BANDIT_OPTIMUM).abs() <= BANDIT_TOLERANCE)
        .count();
    let elapsed = start.elapsed();
    let shown: Vec<String> = actions.iter().map(|a| format!("{a:.3}")).collect();
    verdict(
        hits >= 4 && within(Duration::from_secs(60), elapsed),
        format!(
            "actions [{}], {hits}/5 within 0.1 of 0.7, {elapsed:.2?}",
            shown.join(", ")
        ),
    )
}

struct ProxyRun {
    learned_reward: f64,
    learned_error: f64,
}

fn proxy_searches() -> (Vec<ProxyRun>, Duration) {
    let start = Instant::now();
    let proxy = ProxyModel::benchmark();
    let runs = (0..SEEDS)
        .map(|seed| {
            let config = SearchConfig {
                episodes: SEARCH_EPISODES,
                constraint: Constraint::FlopsBudget { alpha: ALPHA },
                seed,
                ..SearchConfig::default()
            };
            let best = search(&config, &proxy, None, false).unwrap().best.unwrap();
            ProxyRun {
                learned_reward: best.reward.unwrap(),
                learned_error: best.error.unwrap(),
            }
        })
        .collect();
    (runs, start.elapsed())
}

fn oracle_gap(runs: &[ProxyRun], search_time: Duration) -> Verdict {
    let start = Instant::now();
    let proxy = ProxyModel::benchmark();
    let opt = dp_oracle(&proxy, ALPHA, GRID_STEP).unwrap();
    let env = Environment::new(&proxy, RewardKind::Err, Constraint::FlopsBudget { alpha: ALPHA }, 0.05).unwrap();
    let mut good = 0;
    let mut cells = Vec::new();
    for (seed, run) in runs.iter().enumerate() {
        let random = random_search(&env, SEARCH_EPISODES, seed as u64).unwrap().best.reward;
        let gap = (opt.reward - run.learned_reward).abs() / opt.reward.abs();
        let pass = gap <= ORACLE_GAP && run.learned_reward >= random;
        good += pass as usize;
        cells.push(format!(
            "seed {seed}: learned {:.5} random {random:.5} gap {:.2}%{}",
            run.learned_reward,
            100.0 * gap,
            if pass { "" } else { " (miss)" }
        ));
    }
    let elapsed = search_time + start.elapsed();
    verdict(
        good >= 4,
        format!(
            "oracle {:.5}; {}; {good}/5 seeds; {elapsed:.2?} (target 5 min: {})",
            opt.reward,
            cells.join("; "),
            if elapsed < Duration::from_secs(300) {
                "met"
            } else {
                "missed"
            }
        ),
    )
}

fn baseline_ordering(runs: &[ProxyRun]) -> Verdict {
    let proxy = ProxyModel::benchmark();
    let env = Environment::new(&proxy, RewardKind::Err, Constraint::FlopsBudget { alpha: ALPHA }, 0.05).unwrap();
    let uniform = uniform_policy(&env, ALPHA).unwrap().error;
    let shallow = graded_policy(&env, PolicyName::ShallowAggressive, ALPHA).unwrap().error;
    let deep = graded_policy(&env, PolicyName::DeepAggressive, ALPHA).unwrap().error;
    let best_baseline = uniform.min(shallow).min(deep);
    let good = runs.iter().filter(|r| r.learned_error <= best_baseline).count();
    let learned: Vec<String> = runs.iter().map(|r| format!("{:.5}", r.learned_error)).collect();
    verdict(
        good >= 4,
        format!(
            "uniform {uniform:.5} shallow {shallow:.5} deep {deep:.5}; learned [{}]; {good}/5 seeds",
            learned.join(", ")
        ),
    )
}

fn tinycnn_config(pretrained: &Path, out_dir: PathBuf, seed: u64, episodes: usize, warmup: usize) -> RunConfig {
    let mut config = RunConfig {
        evaluator: EvaluatorChoice::TinyCnn,
        pretrained: Some(pretrained.to_path_buf()),
        out_dir,
        ..RunConfig::default()
    };
    config.search.seed = seed;
    config.search.episodes = episodes;
    config.search.warmup_episodes = warmup;
    config.search.constraint = Constraint::FlopsBudget { alpha: ALPHA };
    config
}

fn tinycnn_end_to_end(work: &Path) -> (Verdict, Option<PathBuf>) {
    let start = Instant::now();
    let prefix = work.join("tinycnn-pretrained");
    let accuracy = match pretrain_checkpoint(&prefix, 0, 1, &PretrainConfig::default()) {
        Ok(a) => a,
        Err(e) => return (verdict(false, format!("pretraining failed: {e}")), None),
    };
    let mut beats = 0;
    let mut holds = 0;
    let mut cells = Vec::new();
    let mut uniform_error = f64::NAN;
    for seed in 0..SEEDS {
        let config = tinycnn_config(
            &prefix,
            work.join(format!("tinycnn-{seed}")),
            seed,
            SEARCH_EPISODES,
            100,
        );
        if seed == 0 {
            uniform_error = run_baselines(&config, &[PolicyName::Uniform]).unwrap()[0].error;
        }
        let run = run_search(&config, false).unwrap();
        let complete = run.outcome.complete && run.outcome.episodes.len() == SEARCH_EPISODES;
        let ft = run.fine_tune.expect("fine-tuning runs after a complete search");
        let beat = complete && ft.error_before < uniform_error;
        let hold = ft.error_after <= ft.error_before;
        beats += beat as usize;
        holds += hold as usize;
        cells.push(format!(
            "seed {seed}: best {:.3} (flops {:.3}) fine-tuned {:.3}",
            ft.error_before, ft.flops_fraction, ft.error_after
        ));
    }
    let elapsed = start.elapsed();
    let pass = accuracy >= ACCURACY_GATE && beats >= 3 && holds >= 4;
    (
        verdict(
            pass,
            format!(
                "pretrain accuracy {accuracy:.3}; uniform {uniform_error:.3}; {}; beats uniform {beats}/5, fine-tune holds {holds}/5; {elapsed:.2?} (target 30 min: {})",
                cells.join("; "),
                if elapsed < Duration::from_secs(1800) { "met" } else { "missed" }
            ),
        ),
        Some(prefix),
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(bin())
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism(work: &Path, pretrained: Option<&Path>) -> Verdict {
    let start = Instant::now();
    let mut compared = Vec::new();
    let mut ok = true;
    let mut logs = |name: &str, config_text: String, commands: &[&str], files: &[&str]| {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = work.join(format!("det-{name}-{rep}"));
            let cfg = work.join(format!("det-{name}-{rep}.cfg"));
            std::fs::write(&cfg, format!("{config_text}out_dir = {}\n", dir.display())).unwrap();
            for cmd in commands {
                ok &= run_cli(&[cmd, cfg.to_str().unwrap()]);
            }
            outputs.push(
                files
                    .iter()
                    .map(|f| std::fs::read(dir.join(f)).unwrap_or_default())
                    .collect::<Vec<_>>(),
            );
        }
        for (i, f) in files.iter().enumerate() {
            let same = !outputs[0][i].is_empty() && outputs[0][i] == outputs[1][i];
            ok &= same;
            compared.push(format!("{name}/{f} {}", if same { "identical" } else { "DIFFERENT" }));
        }
    };
    logs(
        "proxy",
        "evaluator = proxy\nconstraint = flops\nalpha = 0.5\nseed = 3\n".into(),
        &["search", "random"],
        &["episodes.jsonl", "random.jsonl"],
    );
    match pretrained {
        Some(prefix) => logs(
            "tinycnn",
            format!(
                "evaluator = tinycnn\npretrained = {}\nconstraint = flops\nalpha = 0.5\nepisodes = 40\nwarmup_episodes = 10\nseed = 3\n",
                prefix.display()
            ),
            &["search"],
            &["episodes.jsonl"],
        ),
        None => {
            ok = false;
            compared.push("tinycnn skipped: no pretrained checkpoint".into());
        }
    }
    verdict(ok, format!("{}; {:.2?}", compared.join(", "), start.elapsed()))
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        line(&format!(
            "[{}] criterion {id} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        ));
        results.push((id, name, v));
    };
    report(1, "flops anchors", flops_anchors());
    report(2, "gradient suite", gradient_suite());
    report(3, "pruning equivalence", pruning_equivalence());
    report(4, "budget safety", budget_safety());
    report(5, "truncated normal", truncated_normal_suite());
    report(6, "bandit convergence", bandit());
    let (runs, search_time) = proxy_searches();
    report(7, "oracle gap", oracle_gap(&runs, search_time));
    report(8, "baseline ordering", baseline_ordering(&runs));
    let (v, pretrained) = tinycnn_end_to_end(work.path());
    report(9, "tiny cnn end to end", v);
    report(10, "determinism", determinism(work.path(), pretrained.as_deref()));

    let failed: Vec<String> = results
        .iter()
        .filter(|(_, _, v)| !v.pass)
        .map(|(id, name, _)| format!("{id} ({name})"))
        .collect();
    line(&format!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    ));
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
