use std::fmt::Write as _;
use std::path::Path;

use super::policies::PolicyName;
use super::run::{
    baseline_file, read_json, FineTuneRecord, OracleRecord, PlanRecord, FINE_TUNE, ORACLE, RANDOM_BEST, RANDOM_LOG,
};
use crate::environ::{read_episode_log, EpisodeResult, BEST, EPISODE_LOG};
use crate::error::{Error, Result};

fn ratios(r: &[f64]) -> String {
    r.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Renders the comparison table and plot-ready series of a run directory.
/// Only reads; the caller decides where the text goes. A directory with no
/// run artifacts is an error.
pub fn report(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a run directory", dir.display())));
    }
    let found = |name: &str| {
        let p = dir.join(name);
        p.exists().then_some(p)
    };

    let mut rows = String::new();
    let mut row = |policy: &str, error: f64, fraction: f64, reward: Option<f64>, r: &[f64], note: &str| {
        let _ = writeln!(rows, "{policy},{error},{fraction},{},{},{note}", opt(reward), ratios(r));
    };
    if let Some(p) = found(BEST) {
        let best: EpisodeResult = read_json(&p)?;
        row(
            "learned",
            best.error.unwrap_or(f64::NAN),
            best.flops_fraction,
            best.reward,
            &best.clamped,
            &format!("episode {}", best.episode),
        );
    }
    if let Some(p) = found(FINE_TUNE) {
        let ft: FineTuneRecord = read_json(&p)?;
        row(
            "learned_fine_tuned",
            ft.error_after,
            ft.flops_fraction,
            None,
            &ft.ratios,
            &format!("{} epochs", ft.epochs),
        );
    }
    for name in [
        PolicyName::Uniform,
        PolicyName::ShallowAggressive,
        PolicyName::DeepAggressive,
    ] {
        if let Some(p) = found(&baseline_file(name)) {
            let rec: PlanRecord = read_json(&p)?;
            let note = if name == PolicyName::Uniform {
                ""
            } else {
                "linear ramp stand-in"
            };
            row(
                name.as_str(),
                rec.plan.error,
                rec.plan.flops_fraction,
                Some(rec.plan.reward),
                &rec.plan.ratios,
                note,
            );
        }
    }
    if let Some(p) = found(RANDOM_BEST) {
        let rec: PlanRecord = read_json(&p)?;
        row(
            "random",
            rec.plan.error,
            rec.plan.flops_fraction,
            Some(rec.plan.reward),
            &rec.plan.ratios,
            "",
        );
    }
    if let Some(p) = found(ORACLE) {
        let rec: OracleRecord = read_json(&p)?;
        let r = &rec.result;
        row(
            "oracle",
            r.error,
            r.flops_fraction,
            Some(r.reward),
            &r.ratios,
            &format!("grid {}", rec.grid_step),
        );
    }

    let learned = found(EPISODE_LOG).map(|p| read_episode_log(&p)).transpose()?;
    let random = found(RANDOM_LOG).map(|p| read_episode_log(&p)).transpose()?;
    if rows.is_empty() && learned.is_none() && random.is_none() {
        return Err(Error::Config(format!("no run artifacts in {}", dir.display())));
    }

    let mut out = String::from("# comparison\npolicy,error,flops_fraction,reward,ratios,note\n");
    out.push_str(&rows);
    let series: Vec<(&str, &Vec<EpisodeResult>)> = [("learned", learned.as_ref()), ("random", random.as_ref())]
        .into_iter()
        .filter_map(|(n, s)| s.map(|s| (n, s)))
        .collect();
    out.push_str("\n# reward vs episode\nsource,episode,sigma,reward,best_so_far\n");
    for (name, trace) in &series {
        for r in trace.iter() {
            let _ = writeln!(
                out,
                "{name},{},{},{},{}",
                r.episode,
                r.sigma,
                opt(r.reward),
                opt(r.best_so_far)
            );
        }
    }
    out.push_str("\n# accuracy vs flops\nsource,episode,flops_fraction,accuracy\n");
    for (name, trace) in &series {
        for r in trace.iter() {
            let _ = writeln!(
                out,
                "{name},{},{},{}",
                r.episode,
                r.flops_fraction,
                opt(r.error.map(|e| 1.0 - e))
            );
        }
    }
    Ok(out)
}
