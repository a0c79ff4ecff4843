//! CSV metrics written during training.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ddpg::{EpisodeSummary, MetricsSink, StepRecord};

/// One row of `metrics.csv`. `timestamp_ms` is the only column that is not
/// reproducible from config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub episode: usize,
    pub step: usize,
    pub reward: f64,
    pub score: f64,
    pub rate1: f64,
    pub rate2: f64,
    pub alpha: u8,
    pub critic_loss: Option<f64>,
    pub timestamp_ms: u128,
}

/// One row of `episodes.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub run_id: String,
    pub episode: usize,
    pub mean_reward: f64,
    pub final_score: f64,
    pub zero_reward_fraction: f64,
    pub noise_sigma: f64,
}

/// Appends step and episode rows to two CSV files, in order.
pub struct CsvSink {
    run_id: String,
    steps: csv::Writer<BufWriter<File>>,
    episodes: csv::Writer<BufWriter<File>>,
    last: Option<(usize, usize)>,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl CsvSink {
    pub fn create(run_id: &str, steps_path: &Path, episodes_path: &Path) -> std::io::Result<Self> {
        let open = |p: &Path| -> std::io::Result<_> { Ok(csv::Writer::from_writer(BufWriter::new(File::create(p)?))) };
        Ok(Self {
            run_id: run_id.to_string(),
            steps: open(steps_path)?,
            episodes: open(episodes_path)?,
            last: None,
        })
    }

    pub fn finish(mut self) -> Result<(), csv::Error> {
        self.steps.flush()?;
        self.episodes.flush()?;
        Ok(())
    }
}

impl MetricsSink<f64> for CsvSink {
    fn record_step(&mut self, r: &StepRecord<f64>) -> Result<(), String> {
        let key = (r.episode, r.step);
        if self.last.is_some_and(|last| last >= key) {
            return Err(format!("metrics out of order at episode {} step {}", r.episode, r.step));
        }
        self.last = Some(key);
        self.steps
            .serialize(MetricsRecord {
                run_id: self.run_id.clone(),
                episode: r.episode,
                step: r.step,
                reward: r.reward,
                score: r.score,
                rate1: r.report.rate1,
                rate2: r.report.rate2,
                alpha: r.report.alpha,
                critic_loss: r.critic_loss,
                timestamp_ms: now_ms(),
            })
            .map_err(|e| e.to_string())
    }

    fn record_episode(&mut self, s: &EpisodeSummary<f64>) -> Result<(), String> {
        self.episodes
            .serialize(EpisodeRecord {
                run_id: self.run_id.clone(),
                episode: s.episode,
                mean_reward: s.mean_reward,
                final_score: s.final_score,
                zero_reward_fraction: s.zero_reward_fraction,
                noise_sigma: s.noise_sigma,
            })
            .map_err(|e| e.to_string())
    }
}

/// Reads `metrics.csv` back.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
