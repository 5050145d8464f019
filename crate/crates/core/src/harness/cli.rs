//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use super::config::RunConfig;
use super::policies::PolicyName;
use super::report::report;
use super::run::{pretrain_checkpoint, run_baselines, run_oracle, run_random, run_search};
use crate::error::{Error, Result};
use crate::evaluators::PretrainConfig;
use crate::netmodel::read_network;

#[derive(Debug, Parser)]
#[command(name = "autoprune", version, about = "Learned channel-pruning ratio search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Uniform,
    ShallowAggressive,
    DeepAggressive,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer and total FLOPs of a network file.
    Flops { spec: PathBuf },
    /// Build the synthetic dataset and write a pretrained tiny CNN checkpoint.
    Pretrain {
        /// Checkpoint prefix (writes PREFIX.manifest and PREFIX.bin).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        dataset_seed: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
    },
    /// Learned search.
    Search {
        config: PathBuf,
        /// Continue from the agent checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Handcrafted baselines at the configured budget.
    Baseline {
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: BaselineArg,
    },
    /// Random search with the learned search's episode budget.
    Random { config: PathBuf },
    /// Exact DP optimum of the proxy on the ratio grid.
    Oracle { config: PathBuf },
    /// Comparison table and plot-ready series of a run directory.
    Report { run_dir: PathBuf },
}

fn ratios(r: &[f64]) -> String {
    r.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(" ")
}

fn flops(spec: &Path, out: &mut dyn Write) -> Result<()> {
    let net = read_network(spec)?;
    let per_layer = net.layer_flops()?;
    let mut text = String::from("layer,kind,flops\n");
    for (layer, f) in net.layers().iter().zip(&per_layer) {
        text.push_str(&format!("{},{},{f}\n", layer.id, layer.kind.as_str()));
    }
    let total: u64 = per_layer.iter().sum();
    text.push_str(&format!("total,,{total}\n"));
    text.push_str(&format!("# {:.3e} multiply-accumulates\n", total as f64));
    write(out, &text)
}

fn write(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Flops { spec } => flops(&spec, out),
        Command::Pretrain {
            out: prefix,
            dataset_seed,
            seed,
            epochs,
        } => {
            let config = PretrainConfig {
                epochs,
                ..PretrainConfig::default()
            };
            let accuracy = pretrain_checkpoint(&prefix, dataset_seed, seed, &config)?;
            write(
                out,
                &format!("validation accuracy {accuracy:.4}\nwrote {}\n", prefix.display()),
            )
        }
        Command::Search { config, resume } => {
            let config = RunConfig::load(&config)?;
            let run = run_search(&config, resume)?;
            let mut text = String::new();
            match &run.outcome.best {
                Some(b) => text.push_str(&format!(
                    "best episode {}: reward {} error {} flops_fraction {:.4} ratios {}\n",
                    b.episode,
                    b.reward.unwrap_or(f64::NAN),
                    b.error.unwrap_or(f64::NAN),
                    b.flops_fraction,
                    ratios(&b.clamped)
                )),
                None => text.push_str("no episode was evaluated\n"),
            }
            if let Some(ft) = &run.fine_tune {
                text.push_str(&format!(
                    "fine-tuned error {} -> {} ({} epochs)\n",
                    ft.error_before, ft.error_after, ft.epochs
                ));
            }
            text.push_str(&format!(
                "protocol {}\nrun directory {}\n",
                run.outcome.fingerprint,
                config.out_dir.display()
            ));
            write(out, &text)
        }
        Command::Baseline { config, policy } => {
            let config = RunConfig::load(&config)?;
            let policies = match policy {
                BaselineArg::Uniform => vec![PolicyName::Uniform],
                BaselineArg::ShallowAggressive => vec![PolicyName::ShallowAggressive],
                BaselineArg::DeepAggressive => vec![PolicyName::DeepAggressive],
                BaselineArg::All => vec![
                    PolicyName::Uniform,
                    PolicyName::ShallowAggressive,
                    PolicyName::DeepAggressive,
                ],
            };
            let mut text = String::new();
            for plan in run_baselines(&config, &policies)? {
                text.push_str(&format!(
                    "{}: error {} flops_fraction {:.4} ratios {}\n",
                    plan.name.as_str(),
                    plan.error,
                    plan.flops_fraction,
                    ratios(&plan.ratios)
                ));
            }
            write(out, &text)
        }
        Command::Random { config } => {
            let config = RunConfig::load(&config)?;
            let r = run_random(&config)?;
            write(
                out,
                &format!(
                    "best episode {}: reward {} error {} flops_fraction {:.4} ratios {}\n",
                    r.best_episode,
                    r.best.reward,
                    r.best.error,
                    r.best.flops_fraction,
                    ratios(&r.best.ratios)
                ),
            )
        }
        Command::Oracle { config } => {
            let config = RunConfig::load(&config)?;
            let r = run_oracle(&config)?;
            write(
                out,
                &format!(
                    "oracle: reward {} error {} flops_fraction {:.4} ratios {}\n",
                    r.reward,
                    r.error,
                    r.flops_fraction,
                    ratios(&r.ratios)
                ),
            )
        }
        Command::Report { run_dir } => {
            let text = report(&run_dir)?;
            write(out, &text)
        }
    }
}

/// Parses `argv`, runs the command and maps errors to a nonzero status.
pub fn main_with<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["autoprune", "baseline", "c.cfg", "--policy", "shallow-aggressive"]).unwrap();
        assert!(matches!(
            cli.command,
            Command::Baseline {
                policy: BaselineArg::ShallowAggressive,
                ..
            }
        ));
        let cli = Cli::try_parse_from(["autoprune", "search", "c.cfg", "--resume"]).unwrap();
        assert!(matches!(cli.command, Command::Search { resume: true, .. }));
        assert!(Cli::try_parse_from(["autoprune", "search", "c.cfg", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["autoprune", "baseline", "c.cfg"]).is_err());
    }

    #[test]
    fn flops_prints_total() {
        let dir = tempfile::tempdir().unwrap();
        let spec = dir.path().join("n.net");
        std::fs::write(&spec, "conv 1 8 3 8 8 3 1 1 -\ndense 2 4 8 1 1 1 1 0 -\n").unwrap();
        let mut out = Vec::new();
        execute(
            Cli::try_parse_from(["autoprune", "flops", spec.to_str().unwrap()]).unwrap(),
            &mut out,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("total,,13856\n"), "{text}");
    }
}
