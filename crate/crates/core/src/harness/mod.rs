//! Experiment drivers behind the command-line tool.
//!
//! Every driver writes plain CSV into an output directory. Comparisons
//! evaluate all methods on the same channel draws: draw `i` of a run with
//! seed `s` comes from a ChaCha8 generator seeded with `s` on stream
//! `EVAL_STREAM_BASE + i`, which keeps results independent of the worker
//! count and disjoint from the training stream (stream 0).

pub mod config;
pub mod metrics;

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ddpg::{self, DdpgError};
use crate::env::{flatten_state, project_action, EnvError, EpisodeConfig, NomaEnv};
use crate::neural::{MlpParams, NeuralError};
use crate::noma::{self, matched_filter_action, oracle_search, tdma_baseline, NomaError};

pub use config::{ConfigError, ExperimentConfig};
pub use metrics::{CsvSink, EpisodeRecord, MetricsRecord};

pub const EVAL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o failure on {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("checkpoint {path}")]
    Checkpoint { path: PathBuf, source: NeuralError },
    #[error("no checkpoint at {0} and training of missing points is disabled")]
    MissingCheckpoint(PathBuf),
    #[error("actor in {path} maps {got} inputs, the configured array needs {expected}")]
    ActorShape { path: PathBuf, expected: usize, got: usize },
    #[error("oracle search is limited to {max} antennas, config has {n}")]
    TooManyAntennas { n: usize, max: usize },
    #[error(transparent)]
    Training(#[from] DdpgError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Link(#[from] NomaError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Stable identifier of a run: mode, seed and a hash of the resolved config.
pub fn run_id(mode: &str, cfg: &ExperimentConfig) -> String {
    let mut h = DefaultHasher::new();
    cfg.to_flat_string().hash(&mut h);
    format!("{mode}-s{}-{:016x}", cfg.run.seed, h.finish())
}

fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub run_id: String,
    pub dir: PathBuf,
    pub steps: usize,
    /// Score once the moving-average window first fills (`None` for runs
    /// shorter than the window).
    pub first_full_score: Option<f64>,
    pub final_score: f64,
    pub best_score: Option<f64>,
    pub actor_path: PathBuf,
}

/// Trains an agent and writes `config.txt`, `metrics.csv`, `episodes.csv`,
/// `actor_final.ckpt`, `critic_final.ckpt` and, when a score window filled,
/// `actor_best.ckpt` into `dir`.
pub fn run_train(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainReport, HarnessError> {
    cfg.validate()?;
    ensure_dir(dir)?;
    let id = run_id("train", cfg);
    let config_path = dir.join("config.txt");
    fs::write(&config_path, cfg.to_flat_string()).map_err(io_err(&config_path))?;

    let env = NomaEnv::new(cfg.episode_config()?)?;
    let mut sink = CsvSink::create(&id, &dir.join("metrics.csv"), &dir.join("episodes.csv")).map_err(io_err(dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let out = ddpg::train(&env, &cfg.agent_config(), &mut rng, &mut sink)?;
    sink.finish()?;

    let save = |params: &MlpParams<f64>, name: &str| -> Result<PathBuf, HarnessError> {
        let path = dir.join(name);
        params.save(&path).map_err(|source| HarnessError::Checkpoint {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    };
    let actor_path = save(&out.agent.actor, "actor_final.ckpt")?;
    save(&out.agent.critic, "critic_final.ckpt")?;
    if let Some((best, _)) = &out.best_actor {
        save(best, "actor_best.ckpt")?;
    }
    let window = cfg.agent.score_window;
    Ok(TrainReport {
        run_id: id,
        dir: dir.to_path_buf(),
        steps: out.scores.len(),
        first_full_score: out.scores.get(window - 1).copied(),
        final_score: out.scores.last().copied().unwrap_or(0.0),
        best_score: out.best_actor.map(|(_, s)| s),
        actor_path,
    })
}

/// Loads an actor and checks it fits the configured array.
pub fn load_actor(path: &Path, cfg: &ExperimentConfig) -> Result<MlpParams<f64>, HarnessError> {
    let actor = MlpParams::<f64>::load(path).map_err(|source| HarnessError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })?;
    let expected = crate::env::state_width(cfg.channel.n_antennas);
    if actor.in_width() != expected || actor.out_width() != crate::env::action_width(cfg.channel.n_antennas) {
        return Err(HarnessError::ActorShape {
            path: path.to_path_buf(),
            expected,
            got: actor.in_width(),
        });
    }
    Ok(actor)
}

/// The explicit checkpoint if given, else `dir/actor_final.ckpt`, training
/// into `dir` first when that is absent and allowed.
pub fn resolve_actor(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    dir: &Path,
) -> Result<(MlpParams<f64>, Option<TrainReport>), HarnessError> {
    if let Some(path) = checkpoint {
        return Ok((load_actor(path, cfg)?, None));
    }
    let path = dir.join("actor_final.ckpt");
    if path.exists() {
        return Ok((load_actor(&path, cfg)?, None));
    }
    if !cfg.sweep.train_if_missing {
        return Err(HarnessError::MissingCheckpoint(path));
    }
    let report = run_train(cfg, dir)?;
    Ok((load_actor(&report.actor_path, cfg)?, Some(report)))
}

/// Per-draw outcome of every method on one shared channel pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawRecord {
    pub draw: usize,
    pub ddpg_reward: Option<f64>,
    pub ddpg_sum_rate: Option<f64>,
    pub ddpg_alpha: Option<u8>,
    pub tdma_sum_rate: f64,
    pub mf_reward: f64,
    pub random_reward: f64,
    pub oracle_sum_rate: Option<f64>,
}

fn random_raw_action(width: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..width).map(|_| StandardNormal.sample(rng)).collect()
}

/// Evaluates the greedy actor (if any), TDMA, the matched-filter heuristic,
/// a random policy and optionally the oracle on `draws` shared channel pairs.
/// The actor sees `α_prev = 0`.
pub fn evaluate_draws(
    env_cfg: &EpisodeConfig<f64>,
    actor: Option<&MlpParams<f64>>,
    draws: usize,
    seed: u64,
    oracle: Option<noma::OracleGrid>,
) -> Result<Vec<DrawRecord>, HarnessError> {
    let env = NomaEnv::new(env_cfg.clone())?;
    let budget = &env_cfg.budget;
    (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(EVAL_STREAM_BASE + i as u64);
            let ch = env.draw_channels(&mut rng)?;
            let state = flatten_state(&ch, 0);
            let policy = match actor {
                Some(a) => {
                    let action = project_action(&a.predict_one(&state)?, &ch, budget)?;
                    let report = noma::evaluate(&ch, &action, budget)?;
                    Some(report)
                }
                None => None,
            };
            let mf = noma::reward(&noma::evaluate(&ch, &matched_filter_action(&ch, budget), budget)?);
            let random_action = project_action(&random_raw_action(env.action_width(), &mut rng), &ch, budget)?;
            let random = noma::reward(&noma::evaluate(&ch, &random_action, budget)?);
            let oracle_sum_rate = match oracle {
                Some(grid) => Some(match oracle_search(&ch, budget, grid) {
                    Ok(sol) => sol.sum_rate,
                    Err(NomaError::InfeasibleOnGrid) => 0.0,
                    Err(e) => return Err(e.into()),
                }),
                None => None,
            };
            Ok(DrawRecord {
                draw: i,
                ddpg_reward: policy.as_ref().map(noma::reward),
                ddpg_sum_rate: policy.as_ref().map(|r| r.sum_rate),
                ddpg_alpha: policy.as_ref().map(|r| r.alpha),
                tdma_sum_rate: tdma_baseline(&ch, budget),
                mf_reward: mf,
                random_reward: random,
                oracle_sum_rate,
            })
        })
        .collect()
}

/// Means over a set of draws. `ddpg_*` and `oracle_*` are empty when the
/// method was not run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMeans {
    pub draws: usize,
    pub ddpg_reward: Option<f64>,
    pub ddpg_sum_rate: Option<f64>,
    pub ddpg_zero_fraction: Option<f64>,
    pub tdma_sum_rate: f64,
    pub mf_reward: f64,
    pub random_reward: f64,
    pub oracle_sum_rate: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.map(|v| mean(v.into_iter()))
}

impl MethodMeans {
    pub fn from_draws(rows: &[DrawRecord]) -> Self {
        let has_ddpg = rows.first().is_some_and(|r| r.ddpg_reward.is_some());
        Self {
            draws: rows.len(),
            ddpg_reward: mean_opt(rows.iter().map(|r| r.ddpg_reward)),
            ddpg_sum_rate: mean_opt(rows.iter().map(|r| r.ddpg_sum_rate)),
            ddpg_zero_fraction: has_ddpg.then(|| mean(rows.iter().map(|r| f64::from(r.ddpg_reward == Some(0.0))))),
            tdma_sum_rate: mean(rows.iter().map(|r| r.tdma_sum_rate)),
            mf_reward: mean(rows.iter().map(|r| r.mf_reward)),
            random_reward: mean(rows.iter().map(|r| r.random_reward)),
            oracle_sum_rate: mean_opt(rows.iter().map(|r| r.oracle_sum_rate)),
        }
    }
}

fn oracle_for(cfg: &ExperimentConfig) -> Option<noma::OracleGrid> {
    (cfg.channel.n_antennas <= cfg.eval.oracle_max_antennas).then(|| cfg.oracle_grid())
}

/// Greedy evaluation of a trained actor; writes `eval.csv` (one row per draw).
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: Option<&Path>, dir: &Path) -> Result<MethodMeans, HarnessError> {
    cfg.validate()?;
    ensure_dir(dir)?;
    let (actor, _) = resolve_actor(cfg, checkpoint, dir)?;
    let rows = evaluate_draws(&cfg.episode_config()?, Some(&actor), cfg.eval.draws, cfg.run.seed, None)?;
    write_csv(&dir.join("eval.csv"), &rows)?;
    Ok(MethodMeans::from_draws(&rows))
}

/// Non-learning methods only; writes `baseline.csv` (one row per draw).
pub fn run_baseline(cfg: &ExperimentConfig, dir: &Path) -> Result<MethodMeans, HarnessError> {
    cfg.validate()?;
    ensure_dir(dir)?;
    let rows = evaluate_draws(&cfg.episode_config()?, None, cfg.eval.draws, cfg.run.seed, None)?;
    write_csv(&dir.join("baseline.csv"), &rows)?;
    Ok(MethodMeans::from_draws(&rows))
}

/// Mean per-step reward of uniformly random raw actions over the same
/// episode schedule and seed as training.
pub fn random_policy_reward(cfg: &ExperimentConfig) -> Result<f64, HarnessError> {
    let env = NomaEnv::new(cfg.episode_config()?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let (mut total, mut n) = (0.0, 0usize);
    for _ in 0..cfg.agent.episodes {
        let mut state = env.reset(&mut rng)?;
        for _ in 0..cfg.agent.steps_per_episode {
            let out = env.step(&state, &random_raw_action(env.action_width(), &mut rng), &mut rng)?;
            total += out.reward;
            n += 1;
            state = out.next_state;
        }
    }
    Ok(total / n.max(1) as f64)
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub min_rate: f64,
    pub draws: usize,
    pub ddpg_reward: Option<f64>,
    pub ddpg_sum_rate: Option<f64>,
    pub ddpg_zero_fraction: Option<f64>,
    pub tdma_sum_rate: f64,
    pub mf_reward: f64,
    pub random_reward: f64,
    pub oracle_sum_rate: Option<f64>,
    /// Last training score of the point, when it was trained in this run.
    pub train_final_score: Option<f64>,
}

fn sweep_point(cfg: &ExperimentConfig, checkpoint: Option<&Path>, dir: &Path) -> Result<SweepRow, HarnessError> {
    cfg.validate()?;
    let (actor, trained) = resolve_actor(cfg, checkpoint, dir)?;
    let rows = evaluate_draws(&cfg.episode_config()?, Some(&actor), cfg.eval.draws, cfg.run.seed, oracle_for(cfg))?;
    write_csv(&dir.join("draws.csv"), &rows)?;
    let m = MethodMeans::from_draws(&rows);
    Ok(SweepRow {
        snr_db: cfg.link.snr_db,
        min_rate: cfg.link.min_rate1,
        draws: m.draws,
        ddpg_reward: m.ddpg_reward,
        ddpg_sum_rate: m.ddpg_sum_rate,
        ddpg_zero_fraction: m.ddpg_zero_fraction,
        tdma_sum_rate: m.tdma_sum_rate,
        mf_reward: m.mf_reward,
        random_reward: m.random_reward,
        oracle_sum_rate: m.oracle_sum_rate,
        train_final_score: trained.map(|t| t.final_score),
    })
}

fn point_label(x: f64) -> String {
    format!("{x}").replace('-', "m")
}

/// SNR sweep at the configured floors; writes `sweep_snr.csv` plus one
/// subdirectory per point.
pub fn run_sweep_snr(cfg: &ExperimentConfig, snrs: &[f64], checkpoint: Option<&Path>, dir: &Path) -> Result<Vec<SweepRow>, HarnessError> {
    ensure_dir(dir)?;
    let mut rows = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        let mut point = cfg.clone();
        point.link.snr_db = snr;
        let sub = dir.join(format!("snr_{}", point_label(snr)));
        ensure_dir(&sub)?;
        rows.push(sweep_point(&point, checkpoint, &sub)?);
    }
    write_csv(&dir.join("sweep_snr.csv"), &rows)?;
    Ok(rows)
}

/// Floor sweep with `r1 = r2 = r` at the configured SNR; writes
/// `sweep_minrate.csv` plus one subdirectory per point.
pub fn run_sweep_minrate(
    cfg: &ExperimentConfig,
    rates: &[f64],
    checkpoint: Option<&Path>,
    dir: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    ensure_dir(dir)?;
    let mut rows = Vec::with_capacity(rates.len());
    for &r in rates {
        let mut point = cfg.clone();
        point.link.min_rate1 = r;
        point.link.min_rate2 = r;
        let sub = dir.join(format!("minrate_{}", point_label(r)));
        ensure_dir(&sub)?;
        rows.push(sweep_point(&point, checkpoint, &sub)?);
    }
    write_csv(&dir.join("sweep_minrate.csv"), &rows)?;
    Ok(rows)
}

/// Mean of `method / oracle` over draws where the oracle found a feasible point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub method: String,
    pub mean_sum_rate: f64,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    pub feasible_draws: usize,
    pub draws: usize,
}

impl GapReport {
    pub fn ratio(&self, method: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).map(|r| r.mean_ratio)
    }
}

type Column = fn(&DrawRecord) -> f64;

pub fn gap_report(rows: &[DrawRecord]) -> GapReport {
    let feasible: Vec<&DrawRecord> = rows.iter().filter(|r| r.oracle_sum_rate.is_some_and(|o| o > 0.0)).collect();
    let oracle = |r: &DrawRecord| r.oracle_sum_rate.unwrap_or(0.0);
    let mut methods: Vec<(&str, Column)> = vec![
        ("oracle", oracle),
        ("tdma", |r| r.tdma_sum_rate),
        ("matched_filter", |r| r.mf_reward),
        ("random", |r| r.random_reward),
    ];
    if rows.first().is_some_and(|r| r.ddpg_reward.is_some()) {
        methods.insert(1, ("ddpg", |r| r.ddpg_reward.unwrap_or(0.0)));
    }
    GapReport {
        rows: methods
            .into_iter()
            .map(|(name, f)| GapRow {
                method: name.to_string(),
                mean_sum_rate: mean(rows.iter().map(f)),
                mean_ratio: mean(feasible.iter().map(|r| f(r) / oracle(r))),
            })
            .collect(),
        feasible_draws: feasible.len(),
        draws: rows.len(),
    }
}

/// Compares every method with the grid-search oracle; writes
/// `oracle_draws.csv` and `oracle_check.csv`.
pub fn run_oracle_check(cfg: &ExperimentConfig, checkpoint: Option<&Path>, dir: &Path) -> Result<GapReport, HarnessError> {
    cfg.validate()?;
    if cfg.channel.n_antennas > cfg.eval.oracle_max_antennas {
        return Err(HarnessError::TooManyAntennas {
            n: cfg.channel.n_antennas,
            max: cfg.eval.oracle_max_antennas,
        });
    }
    ensure_dir(dir)?;
    let (actor, _) = resolve_actor(cfg, checkpoint, dir)?;
    let rows = evaluate_draws(
        &cfg.episode_config()?,
        Some(&actor),
        cfg.eval.oracle_draws,
        cfg.run.seed,
        Some(cfg.oracle_grid()),
    )?;
    write_csv(&dir.join("oracle_draws.csv"), &rows)?;
    let report = gap_report(&rows);
    write_csv(&dir.join("oracle_check.csv"), &report.rows)?;
    Ok(report)
}
