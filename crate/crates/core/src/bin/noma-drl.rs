use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use noma_drl::harness::{self, ExperimentConfig, MethodMeans, SweepRow};

#[derive(Parser)]
#[command(
    name = "noma-drl",
    version,
    about = "DDPG beamforming and power allocation for two-user mmWave NOMA"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent; writes metrics, per-episode summaries and checkpoints.
    Train(Common),
    /// Evaluate a trained actor greedily on fresh paired draws.
    Eval(Common),
    /// Evaluate TDMA, the matched-filter heuristic and a random policy.
    Baseline(Common),
    /// Sum-rate against SNR; `--snr-db` takes a comma-separated list.
    SweepSnr(Common),
    /// Sum-rate against the rate floor; `--min-rate` takes a comma-separated list.
    SweepMinrate(Common),
    /// Ratio of each method to the grid-search oracle (at most 4 antennas).
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `section.key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `run.out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Actor checkpoint to evaluate; for `train`, an extra copy of the final actor.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long = "snr-db", value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Vec<f64>,
    /// Rate floor applied to both users.
    #[arg(long = "min-rate", value_delimiter = ',')]
    min_rate: Vec<f64>,
}

fn single(values: &[f64], flag: &str) -> Result<Option<f64>> {
    match values {
        [] => Ok(None),
        [x] => Ok(Some(*x)),
        _ => bail!("{flag} takes one value for this subcommand"),
    }
}

impl Common {
    /// Resolved config; list-valued flags are left to the sweeps.
    fn resolve(&self, sweep_snr: bool, sweep_rate: bool) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(e) = self.episodes {
            cfg.agent.episodes = e;
        }
        if !sweep_snr {
            if let Some(snr) = single(&self.snr_db, "--snr-db")? {
                cfg.link.snr_db = snr;
            }
        }
        if !sweep_rate {
            if let Some(r) = single(&self.min_rate, "--min-rate")? {
                cfg.link.min_rate1 = r;
                cfg.link.min_rate2 = r;
            }
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| cfg.run.out_dir.clone());
        Ok((cfg, out))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn print_means(m: &MethodMeans) {
    println!("draws           {}", m.draws);
    println!("ddpg reward     {}", opt(m.ddpg_reward));
    println!("ddpg zero frac  {}", opt(m.ddpg_zero_fraction));
    println!("tdma sum-rate   {:.4}", m.tdma_sum_rate);
    println!("matched filter  {:.4}", m.mf_reward);
    println!("random policy   {:.4}", m.random_reward);
}

fn print_sweep(rows: &[SweepRow]) {
    println!(
        "{:>8} {:>8} {:>10} {:>10} {:>10} {:>10}",
        "snr_db", "r", "ddpg", "tdma", "mf", "oracle"
    );
    for r in rows {
        println!(
            "{:>8} {:>8} {:>10} {:>10.4} {:>10.4} {:>10}",
            r.snr_db,
            r.min_rate,
            opt(r.ddpg_reward),
            r.tdma_sum_rate,
            r.mf_reward,
            opt(r.oracle_sum_rate)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let (cfg, out) = c.resolve(false, false)?;
            let report = harness::run_train(&cfg, &out)?;
            if let Some(copy) = &c.checkpoint {
                std::fs::copy(&report.actor_path, copy).with_context(|| format!("copying actor to {}", copy.display()))?;
            }
            println!("run {} wrote {}", report.run_id, report.dir.display());
            println!(
                "steps {} first full-window score {} final score {:.4}",
                report.steps,
                opt(report.first_full_score),
                report.final_score
            );
        }
        Command::Eval(c) => {
            let (cfg, out) = c.resolve(false, false)?;
            print_means(&harness::run_eval(&cfg, c.checkpoint.as_deref(), &out)?);
        }
        Command::Baseline(c) => {
            let (cfg, out) = c.resolve(false, false)?;
            print_means(&harness::run_baseline(&cfg, &out)?);
        }
        Command::SweepSnr(c) => {
            let (cfg, out) = c.resolve(true, false)?;
            let snrs = if c.snr_db.is_empty() {
                cfg.sweep.snr_db.clone()
            } else {
                c.snr_db.clone()
            };
            print_sweep(&harness::run_sweep_snr(&cfg, &snrs, c.checkpoint.as_deref(), &out)?);
        }
        Command::SweepMinrate(c) => {
            let (cfg, out) = c.resolve(false, true)?;
            let rates = if c.min_rate.is_empty() {
                cfg.sweep.min_rate.clone()
            } else {
                c.min_rate.clone()
            };
            print_sweep(&harness::run_sweep_minrate(&cfg, &rates, c.checkpoint.as_deref(), &out)?);
        }
        Command::OracleCheck(c) => {
            let (cfg, out) = c.resolve(false, false)?;
            let report = harness::run_oracle_check(&cfg, c.checkpoint.as_deref(), &out)?;
            println!("feasible draws {}/{}", report.feasible_draws, report.draws);
            for row in &report.rows {
                println!(
                    "{:<16} sum-rate {:>8.4} ratio {:>7.4}",
                    row.method, row.mean_sum_rate, row.mean_ratio
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
