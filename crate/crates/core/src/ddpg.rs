//! Deep deterministic policy gradient agent.
//!
//! The critic `Q(s, a)` regresses onto bootstrapped targets
//! `y = r + γ Q'(s', π'(s'))` from slowly tracking target networks. The actor
//! follows the deterministic policy gradient `∇_a Q(s, a)|_{a=π(s)} ∇_θ π(s)`,
//! obtained by backpropagating through the critic to its action input and
//! then through the actor. The critic sees raw (pre-projection) actions.

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::env::{EnvError, NomaEnv};
use crate::neural::{adam_step, build_actor, build_critic, concat_columns, AdamState, MlpParams, NetworkShape, NeuralError};
use crate::noma::RateReport;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DdpgError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("training diverged at episode {episode}, step {step}: {what} is not finite")]
    Divergence { episode: usize, step: usize, what: &'static str },
    #[error("metrics sink failed: {0}")]
    Sink(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// One interaction record; the action is the raw actor output.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
}

/// Bounded FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<Transition<T>>,
    capacity: usize,
}

/// Column-stacked minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Array1<T>,
    pub next_states: Array2<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn from_transitions<'a>(items: impl IntoIterator<Item = &'a Transition<T>>) -> Self {
        let items: Vec<&Transition<T>> = items.into_iter().collect();
        let rows = |f: &dyn Fn(&Transition<T>) -> &[T]| {
            let width = items.first().map_or(0, |t| f(t).len());
            let flat: Vec<T> = items.iter().flat_map(|t| f(t).iter().copied()).collect();
            Array2::from_shape_vec((items.len(), width), flat).expect("transitions share widths")
        };
        Self {
            states: rows(&|t| &t.state),
            actions: rows(&|t| &t.action),
            rewards: items.iter().map(|t| t.reward).collect(),
            next_states: rows(&|t| &t.next_state),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.items.iter()
    }

    /// Uniform draw with replacement; `None` until `batch_size` transitions are held.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Batch<T>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return None;
        }
        let picks: Vec<&Transition<T>> = (0..batch_size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect();
        Some(Batch::from_transitions(picks))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Independent zero-mean Gaussian per component.
    Gaussian,
    /// Ornstein–Uhlenbeck process `x ← x − θx·dt + σ√dt·ξ`.
    OrnsteinUhlenbeck { theta: f64, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    /// σ at the start of training, decayed linearly to `sigma_end`.
    pub sigma_start: f64,
    pub sigma_end: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            sigma_start: 0.2,
            sigma_end: 0.02,
        }
    }
}

/// Exploration noise with a linearly decaying scale.
#[derive(Debug, Clone)]
pub struct ExplorationNoise<T> {
    config: NoiseConfig,
    sigma: f64,
    ou_state: Vec<T>,
}

impl<T: Scalar> ExplorationNoise<T> {
    pub fn new(config: NoiseConfig, dim: usize) -> Self {
        Self {
            config,
            sigma: config.sigma_start,
            ou_state: vec![T::zero(); dim],
        }
    }

    /// Sets σ for training progress `frac ∈ [0, 1]`.
    pub fn set_progress(&mut self, frac: f64) {
        let f = frac.clamp(0.0, 1.0);
        self.sigma = self.config.sigma_start + (self.config.sigma_end - self.config.sigma_start) * f;
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn reset(&mut self) {
        self.ou_state.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<T> {
        let sigma = self.sigma;
        match self.config.kind {
            NoiseKind::Gaussian => (0..self.ou_state.len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::of(sigma * z)
                })
                .collect(),
            NoiseKind::OrnsteinUhlenbeck { theta, dt } => {
                for x in self.ou_state.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    let xf = x.as_f64();
                    *x = T::of(xf - theta * xf * dt + sigma * dt.sqrt() * z);
                }
                self.ou_state.clone()
            }
        }
    }
}

/// `π(s)`, plus exploration noise when `noise` is given.
pub fn act<T: Scalar, R: Rng + ?Sized>(
    actor: &MlpParams<T>,
    state: &[T],
    noise: Option<(&mut ExplorationNoise<T>, &mut R)>,
) -> Result<Vec<T>, NeuralError> {
    let mut a = actor.predict_one(state)?;
    if let Some((noise, rng)) = noise {
        for (x, n) in a.iter_mut().zip(noise.sample(rng)) {
            *x += n;
        }
    }
    Ok(a)
}

/// `y_i = r_i + γ Q'(s'_i, π'(s'_i))`.
pub fn critic_target<T: Scalar>(
    critic_target: &MlpParams<T>,
    actor_target: &MlpParams<T>,
    batch: &Batch<T>,
    gamma: T,
) -> Result<Array1<T>, NeuralError> {
    let next_actions = actor_target.predict(batch.next_states.view())?;
    let q_next = critic_target.predict(concat_columns(batch.next_states.view(), next_actions.view()).view())?;
    Ok(&batch.rewards + &(q_next.column(0).to_owned() * gamma))
}

/// One Adam step on `mean (Q(s, a) − y)²`. Returns the loss before the step.
pub fn update_critic<T: Scalar>(
    critic: &mut MlpParams<T>,
    optimizer: &mut AdamState<T>,
    batch: &Batch<T>,
    targets: &Array1<T>,
) -> Result<T, NeuralError> {
    let input = concat_columns(batch.states.view(), batch.actions.view());
    let (q, cache) = critic.forward(input.view())?;
    let residual = &q.column(0) - targets;
    let n = T::of(batch.len() as f64);
    let loss = residual.mapv(|r| r * r).sum() / n;
    let grad_q = residual.mapv(|r| T::of(2.0) * r / n).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, grad_q.view())?;
    adam_step(critic, &grads, optimizer)?;
    Ok(loss)
}

/// Actor parameter gradient of `−mean_i Q(s_i, π(s_i))` with the critic held
/// fixed. Returns the gradients and `mean Q` at the current parameters.
pub fn actor_gradient<T: Scalar>(
    actor: &MlpParams<T>,
    critic: &MlpParams<T>,
    states: ArrayView2<T>,
) -> Result<(crate::neural::Gradients<T>, T), NeuralError> {
    let (actions, actor_cache) = actor.forward(states)?;
    let input = concat_columns(states, actions.view());
    let (q, critic_cache) = critic.forward(input.view())?;
    let n = T::of(states.nrows() as f64);
    let grad_q = Array2::from_elem((states.nrows(), 1), -T::one() / n);
    let (_, grad_input) = critic.backward(&critic_cache, grad_q.view())?;
    // ∂(−mean Q)/∂a, chained through the actor
    let grad_action = grad_input.slice(s![.., states.ncols()..]).to_owned();
    let (grads, _) = actor.backward(&actor_cache, grad_action.view())?;
    Ok((grads, q.column(0).sum() / n))
}

/// One Adam ascent step on `mean Q(s, π(s))`; the critic is only read.
/// Returns the objective before the step.
pub fn update_actor<T: Scalar>(
    actor: &mut MlpParams<T>,
    optimizer: &mut AdamState<T>,
    critic: &MlpParams<T>,
    batch: &Batch<T>,
) -> Result<T, NeuralError> {
    let (grads, objective) = actor_gradient(actor, critic, batch.states.view())?;
    adam_step(actor, &grads, optimizer)?;
    Ok(objective)
}

/// `target ← τ·online + (1 − τ)·target`.
pub fn soft_update<T: Scalar>(target: &mut MlpParams<T>, online: &MlpParams<T>, tau: T) -> Result<(), NeuralError> {
    let keep = T::one() - tau;
    target.zip_apply(online, |t, o| tau * o + keep * t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Discount factor γ.
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Soft target-update rate τ.
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub noise: NoiseConfig,
    pub episodes: usize,
    /// Length of the moving-average window used for the score.
    pub score_window: usize,
    pub network: NetworkShape,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 5e-4,
            tau: 0.005,
            batch_size: 64,
            buffer_capacity: 100_000,
            noise: NoiseConfig::default(),
            episodes: 1000,
            score_window: 250,
            network: NetworkShape::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer capacity must hold at least one batch");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.score_window == 0 {
            return bad("score window must be at least 1");
        }
        if self.network.hidden_width == 0 {
            return bad("hidden width must be at least 1");
        }
        if !(self.noise.sigma_start >= 0.0 && self.noise.sigma_end >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        Ok(())
    }
}

/// Actor, critic, their targets and optimizer states.
#[derive(Debug, Clone)]
pub struct DdpgAgent<T> {
    pub actor: MlpParams<T>,
    pub critic: MlpParams<T>,
    pub actor_target: MlpParams<T>,
    pub critic_target: MlpParams<T>,
    pub actor_opt: AdamState<T>,
    pub critic_opt: AdamState<T>,
    pub config: AgentConfig,
}

/// Losses of one learning step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats<T> {
    pub critic_loss: T,
    pub actor_objective: T,
}

impl<T: Scalar> DdpgAgent<T> {
    pub fn new<R: Rng + ?Sized>(n_antennas: usize, config: AgentConfig, rng: &mut R) -> Result<Self, DdpgError> {
        config.validate()?;
        let actor = build_actor(n_antennas, &config.network, rng)?;
        let critic = build_critic(n_antennas, &config.network, rng)?;
        Ok(Self::from_networks(actor, critic, config))
    }

    pub fn from_networks(actor: MlpParams<T>, critic: MlpParams<T>, config: AgentConfig) -> Self {
        Self {
            actor_opt: AdamState::new(&actor, T::of(config.actor_lr)),
            critic_opt: AdamState::new(&critic, T::of(config.critic_lr)),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            config,
        }
    }

    /// Critic step, actor step, then both soft target updates.
    pub fn learn(&mut self, batch: &Batch<T>) -> Result<UpdateStats<T>, NeuralError> {
        let targets = critic_target(&self.critic_target, &self.actor_target, batch, T::of(self.config.gamma))?;
        let critic_loss = update_critic(&mut self.critic, &mut self.critic_opt, batch, &targets)?;
        let actor_objective = update_actor(&mut self.actor, &mut self.actor_opt, &self.critic, batch)?;
        let tau = T::of(self.config.tau);
        soft_update(&mut self.critic_target, &self.critic, tau)?;
        soft_update(&mut self.actor_target, &self.actor, tau)?;
        Ok(UpdateStats {
            critic_loss,
            actor_objective,
        })
    }
}

/// Per-step training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T> {
    pub episode: usize,
    pub step: usize,
    pub reward: T,
    /// Mean of the last `score_window` rewards (fewer at the start).
    pub score: T,
    pub report: RateReport<T>,
    pub critic_loss: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary<T> {
    pub episode: usize,
    pub mean_reward: T,
    pub final_score: T,
    pub zero_reward_fraction: f64,
    pub noise_sigma: f64,
}

/// Receives training metrics as they are produced.
pub trait MetricsSink<T> {
    fn record_step(&mut self, record: &StepRecord<T>) -> Result<(), String>;

    fn record_episode(&mut self, _summary: &EpisodeSummary<T>) -> Result<(), String> {
        Ok(())
    }
}

/// Sink that drops everything.
pub struct NullSink;

impl<T> MetricsSink<T> for NullSink {
    fn record_step(&mut self, _record: &StepRecord<T>) -> Result<(), String> {
        Ok(())
    }
}

/// Sink that keeps every record in memory.
#[derive(Debug, Default)]
pub struct VecSink<T> {
    pub steps: Vec<StepRecord<T>>,
    pub episodes: Vec<EpisodeSummary<T>>,
}

impl<T: Copy> MetricsSink<T> for VecSink<T> {
    fn record_step(&mut self, record: &StepRecord<T>) -> Result<(), String> {
        self.steps.push(*record);
        Ok(())
    }

    fn record_episode(&mut self, summary: &EpisodeSummary<T>) -> Result<(), String> {
        self.episodes.push(*summary);
        Ok(())
    }
}

/// Moving average over a fixed window.
#[derive(Debug, Clone)]
pub struct MovingAverage<T> {
    window: VecDeque<T>,
    capacity: usize,
}

impl<T: Scalar> MovingAverage<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            window: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
        }
    }

    pub fn push(&mut self, x: T) -> T {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(x);
        self.mean()
    }

    /// Summed in f64 from scratch so long runs do not accumulate drift.
    pub fn mean(&self) -> T {
        if self.window.is_empty() {
            return T::zero();
        }
        T::of(self.window.iter().map(|x| x.as_f64()).sum::<f64>() / self.window.len() as f64)
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.capacity
    }
}

pub struct TrainOutcome<T> {
    pub agent: DdpgAgent<T>,
    pub rewards: Vec<T>,
    pub scores: Vec<T>,
    /// Actor snapshot at the best full-window score, if a window filled.
    pub best_actor: Option<(MlpParams<T>, T)>,
    pub buffer: ReplayBuffer<T>,
}

/// Runs `config.episodes` episodes of `env`'s length, learning after every
/// step once the buffer holds a batch.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    env: &NomaEnv<T>,
    config: &AgentConfig,
    rng: &mut R,
    sink: &mut dyn MetricsSink<T>,
) -> Result<TrainOutcome<T>, DdpgError> {
    let agent = DdpgAgent::new(env.config().n_antennas(), config.clone(), rng)?;
    train_agent(env, agent, rng, sink)
}

/// [`train`] starting from an existing agent.
pub fn train_agent<T: Scalar, R: Rng + ?Sized>(
    env: &NomaEnv<T>,
    mut agent: DdpgAgent<T>,
    rng: &mut R,
    sink: &mut dyn MetricsSink<T>,
) -> Result<TrainOutcome<T>, DdpgError> {
    let config = agent.config.clone();
    config.validate()?;
    let steps = env.config().steps_per_episode;
    let total = (config.episodes * steps).max(1);
    let mut buffer = ReplayBuffer::new(config.buffer_capacity);
    let mut noise = ExplorationNoise::new(config.noise, env.action_width());
    let mut average = MovingAverage::new(config.score_window);
    let mut rewards = Vec::with_capacity(total);
    let mut scores = Vec::with_capacity(total);
    let mut best_actor: Option<(MlpParams<T>, T)> = None;

    for episode in 0..config.episodes {
        let mut state = env.reset(rng)?;
        noise.reset();
        let (mut reward_sum, mut zeros) = (0.0, 0usize);
        for step in 0..steps {
            noise.set_progress((episode * steps + step) as f64 / total as f64);
            let action = act(&agent.actor, &state, Some((&mut noise, &mut *rng)))?;
            let out = env.step(&state, &action, rng)?;
            buffer.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: out.reward,
                next_state: out.next_state.clone(),
            });
            state = out.next_state;

            let mut critic_loss = None;
            if let Some(batch) = buffer.sample(config.batch_size, rng) {
                let stats = agent.learn(&batch)?;
                if !stats.critic_loss.is_finite() {
                    return Err(DdpgError::Divergence {
                        episode,
                        step,
                        what: "critic loss",
                    });
                }
                if !stats.actor_objective.is_finite() {
                    return Err(DdpgError::Divergence {
                        episode,
                        step,
                        what: "actor objective",
                    });
                }
                critic_loss = Some(stats.critic_loss);
            }

            let score = average.push(out.reward);
            rewards.push(out.reward);
            scores.push(score);
            reward_sum += out.reward.as_f64();
            if out.reward == T::zero() {
                zeros += 1;
            }
            if average.is_full() && best_actor.as_ref().is_none_or(|(_, s)| score > *s) {
                best_actor = Some((agent.actor.clone(), score));
            }
            sink.record_step(&StepRecord {
                episode,
                step,
                reward: out.reward,
                score,
                report: out.report,
                critic_loss,
            })
            .map_err(DdpgError::Sink)?;
        }
        sink.record_episode(&EpisodeSummary {
            episode,
            mean_reward: T::of(reward_sum / steps as f64),
            final_score: average.mean(),
            zero_reward_fraction: zeros as f64 / steps as f64,
            noise_sigma: noise.sigma(),
        })
        .map_err(DdpgError::Sink)?;
    }

    Ok(TrainOutcome {
        agent,
        rewards,
        scores,
        best_actor,
        buffer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{MultipathSpec, SteeringConfig};
    use crate::env::{ChannelSource, EpisodeConfig};
    use crate::neural::{Activation, Dense, LayerSpec};
    use crate::noma::LinkBudget;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_shape() -> NetworkShape {
        NetworkShape {
            hidden_width: 8,
            ..Default::default()
        }
    }

    fn random_batch<R: Rng>(n: usize, size: usize, rng: &mut R) -> Batch<f64> {
        let items: Vec<Transition<f64>> = (0..size)
            .map(|_| Transition {
                state: (0..4 * n + 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..4 * n + 2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(0.0..5.0),
                next_state: (0..4 * n + 1).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        Batch::from_transitions(&items)
    }

    fn env(n: usize, steps: usize) -> NomaEnv<f64> {
        NomaEnv::new(EpisodeConfig {
            steps_per_episode: steps,
            budget: LinkBudget::from_snr_db(20.0, (0.5, 0.5)).unwrap(),
            spec: MultipathSpec::default(),
            steering: SteeringConfig::new(n).unwrap(),
            source: ChannelSource::Fresh,
        })
        .unwrap()
    }

    #[test]
    fn eval_act_is_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = build_actor::<f64, _>(2, &small_shape(), &mut rng).unwrap();
        let s: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
        let a = act::<f64, ChaCha8Rng>(&actor, &s, None).unwrap();
        assert_eq!(a, actor.predict_one(&s).unwrap());
        let mut quiet = ExplorationNoise::new(
            NoiseConfig {
                sigma_start: 0.0,
                sigma_end: 0.0,
                ..Default::default()
            },
            10,
        );
        assert_eq!(act(&actor, &s, Some((&mut quiet, &mut rng))).unwrap(), a);
    }

    #[test]
    fn gaussian_noise_mean_absolute_deviation() {
        // E|σZ| = σ√(2/π) for each component
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = NoiseConfig {
            sigma_start: 0.1,
            sigma_end: 0.1,
            ..Default::default()
        };
        let mut noise = ExplorationNoise::<f64>::new(cfg, 10);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += noise.sample(&mut rng).iter().map(|x| x.abs()).sum::<f64>() / 10.0;
        }
        let expected = 0.1 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((acc / draws as f64 - expected).abs() / expected < 0.1);
    }

    #[test]
    fn noise_decays_linearly() {
        let mut noise = ExplorationNoise::<f64>::new(NoiseConfig::default(), 3);
        assert_eq!(noise.sigma(), 0.2);
        noise.set_progress(0.5);
        assert!((noise.sigma() - 0.11).abs() < 1e-12);
        noise.set_progress(1.0);
        assert!((noise.sigma() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn ou_noise_is_correlated_and_resettable() {
        let cfg = NoiseConfig {
            kind: NoiseKind::OrnsteinUhlenbeck { theta: 0.15, dt: 0.01 },
            sigma_start: 0.2,
            sigma_end: 0.2,
        };
        let mut noise = ExplorationNoise::<f64>::new(cfg, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = noise.sample(&mut rng);
        let b = noise.sample(&mut rng);
        assert!((b[0] - a[0]).abs() < 0.2);
        noise.reset();
        assert_eq!(noise.ou_state, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = build_actor::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let critic = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(1, 6, &mut rng);
        assert_eq!(critic_target(&critic, &actor, &batch, 0.0).unwrap(), batch.rewards);
    }

    #[test]
    fn zero_critic_and_rewards_give_zero_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let actor = build_actor::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let mut critic = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let last = critic.layers.len() - 1;
        critic.layers[last].weight.fill(0.0);
        critic.layers[last].bias.fill(0.0);
        let mut batch = random_batch(1, 6, &mut rng);
        batch.rewards.fill(0.0);
        assert!(critic_target(&critic, &actor, &batch, 0.99).unwrap().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn targets_match_per_sample_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let actor = build_actor::<f64, _>(2, &small_shape(), &mut rng).unwrap();
        let critic = build_critic::<f64, _>(2, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(2, 16, &mut rng);
        let y = critic_target(&critic, &actor, &batch, 0.9).unwrap();
        for i in 0..16 {
            let s: Vec<f64> = batch.next_states.row(i).to_vec();
            let mut input = s.clone();
            input.extend(actor.predict_one(&s).unwrap());
            let q = critic.predict_one(&input).unwrap()[0];
            assert!((y[i] - (batch.rewards[i] + 0.9 * q)).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_fixed_point_is_left_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut critic = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(1, 8, &mut rng);
        let q = critic
            .predict(concat_columns(batch.states.view(), batch.actions.view()).view())
            .unwrap();
        let before = critic.clone();
        let mut opt = AdamState::new(&critic, 1e-3);
        let loss = update_critic(&mut critic, &mut opt, &batch, &q.column(0).to_owned()).unwrap();
        assert_eq!(loss, 0.0);
        for (a, b) in critic.layers.iter().zip(&before.layers) {
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn single_sample_loss_is_squared_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut critic = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(1, 1, &mut rng);
        let q = critic
            .predict(concat_columns(batch.states.view(), batch.actions.view()).view())
            .unwrap()[[0, 0]];
        let mut opt = AdamState::new(&critic, 1e-3);
        let loss = update_critic(&mut critic, &mut opt, &batch, &array![2.5]).unwrap();
        assert!((loss - (q - 2.5).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn critic_loss_decreases_on_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut critic = build_critic::<f64, _>(2, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(2, 32, &mut rng);
        let mut opt = AdamState::new(&critic, 1e-3);
        let first = update_critic(&mut critic, &mut opt, &batch, &batch.rewards).unwrap();
        let mut last = first;
        for _ in 0..100 {
            last = update_critic(&mut critic, &mut opt, &batch, &batch.rewards).unwrap();
        }
        assert!(last < first, "{last} >= {first}");
    }

    #[test]
    fn action_independent_critic_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let actor = build_actor::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        // a linear critic that only reads the 5 state columns
        let mut w = Array2::zeros((1, 11));
        w.slice_mut(s![0, ..5]).fill(0.7);
        let critic = MlpParams::from_layers(vec![Dense {
            weight: w,
            bias: array![0.1],
            activation: Activation::Identity,
        }])
        .unwrap();
        let batch = random_batch(1, 8, &mut rng);
        let (g, _) = actor_gradient(&actor, &critic, batch.states.view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn updates_touch_only_their_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut actor = build_actor::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let mut critic = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(1, 8, &mut rng);
        let (a0, c0) = (actor.clone(), critic.clone());
        let mut aopt = AdamState::new(&actor, 1e-3);
        update_actor(&mut actor, &mut aopt, &critic, &batch).unwrap();
        assert_eq!(critic, c0);
        assert_ne!(actor, a0);
        let a1 = actor.clone();
        let mut copt = AdamState::new(&critic, 1e-3);
        update_critic(&mut critic, &mut copt, &batch, &batch.rewards).unwrap();
        assert_eq!(actor, a1);
    }

    fn mean_q(actor: &MlpParams<f64>, critic: &MlpParams<f64>, states: &Array2<f64>) -> f64 {
        let a = actor.predict(states.view()).unwrap();
        critic
            .predict(concat_columns(states.view(), a.view()).view())
            .unwrap()
            .mean()
            .unwrap()
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let actor = build_actor::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let mut critic = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        // a non-trivial last critic layer so ∇_a Q is not tiny
        let last = critic.layers.len() - 1;
        critic.layers[last].weight.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let batch = random_batch(1, 8, &mut rng);
        let (g, _) = actor_gradient(&actor, &critic, batch.states.view()).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (l, (gw, _)) in g.layers.iter().enumerate() {
            for idx in [(0, 0), (gw.nrows() - 1, gw.ncols() - 1), (gw.nrows() / 2, gw.ncols() / 2)] {
                let mut plus = actor.clone();
                plus.layers[l].weight[idx] += h;
                let mut minus = actor.clone();
                minus.layers[l].weight[idx] -= h;
                // gradient is of −mean Q
                let fd = -(mean_q(&plus, &critic, &batch.states) - mean_q(&minus, &critic, &batch.states)) / (2.0 * h);
                let err = (fd - gw[idx]).abs() / fd.abs().max(gw[idx].abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn small_actor_step_raises_mean_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut actor = build_actor::<f64, _>(2, &small_shape(), &mut rng).unwrap();
        let critic = build_critic::<f64, _>(2, &small_shape(), &mut rng).unwrap();
        let batch = random_batch(2, 16, &mut rng);
        let before = mean_q(&actor, &critic, &batch.states);
        let mut opt = AdamState::new(&actor, 1e-5);
        let reported = update_actor(&mut actor, &mut opt, &critic, &batch).unwrap();
        assert!((reported - before).abs() < 1e-12);
        assert!(mean_q(&actor, &critic, &batch.states) > before);
    }

    fn constant_net(value: f64) -> MlpParams<f64> {
        MlpParams::from_layers(vec![Dense {
            weight: Array2::from_elem((2, 3), value),
            bias: Array1::from_elem(2, value),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn soft_update_examples() {
        let online = constant_net(1.0);
        let mut t = constant_net(0.0);
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.layers, online.layers);
        let mut t = constant_net(0.3);
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.layers, constant_net(0.3).layers);
        let mut t = constant_net(0.0);
        soft_update(&mut t, &online, 0.5).unwrap();
        soft_update(&mut t, &online, 0.5).unwrap();
        assert!(t.layers[0].weight.iter().all(|&x| x == 0.75));
        let other = MlpParams::<f64>::init(
            &[LayerSpec {
                in_width: 3,
                out_width: 3,
                activation: Activation::Identity,
            }],
            0.1,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(soft_update(&mut t, &other, 0.5).is_err());
    }

    #[test]
    fn soft_update_contracts_toward_online() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let online = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let mut target = build_critic::<f64, _>(1, &small_shape(), &mut rng).unwrap();
        let before = target.clone();
        soft_update(&mut target, &online, 0.25).unwrap();
        for ((t1, t0), o) in target.layers.iter().zip(&before.layers).zip(&online.layers) {
            for ((&a, &b), &c) in t1.weight.iter().zip(t0.weight.iter()).zip(o.weight.iter()) {
                assert!(((a - c).abs() - 0.75 * (b - c).abs()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn replay_buffer_is_bounded_fifo() {
        let mut buf = ReplayBuffer::<f64>::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample(1, &mut rng).is_none());
        for i in 0..5 {
            buf.push(Transition {
                state: vec![i as f64],
                action: vec![0.0],
                reward: i as f64,
                next_state: vec![0.0],
            });
            assert!(buf.len() <= 3);
        }
        let held: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(held, vec![2.0, 3.0, 4.0]);
        assert!(buf.sample(4, &mut rng).is_none());
        let b = buf.sample(3, &mut rng).unwrap();
        assert!(b.rewards.iter().all(|r| (2.0..=4.0).contains(r)));
    }

    #[test]
    fn zero_discount_critic_fits_rewards() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let shape = NetworkShape {
            hidden_width: 16,
            ..Default::default()
        };
        let mut critic = build_critic::<f64, _>(1, &shape, &mut rng).unwrap();
        let actor = build_actor::<f64, _>(1, &shape, &mut rng).unwrap();
        let batch = random_batch(1, 32, &mut rng);
        let mut opt = AdamState::new(&critic, 1e-3);
        let mut loss = f64::INFINITY;
        for _ in 0..5000 {
            let y = critic_target(&critic, &actor, &batch, 0.0).unwrap();
            loss = update_critic(&mut critic, &mut opt, &batch, &y).unwrap();
        }
        assert!(loss < 1e-3, "{loss}");
    }

    #[test]
    fn first_step_stores_without_learning() {
        let env = env(2, 1);
        let cfg = AgentConfig {
            episodes: 1,
            network: small_shape(),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let agent = DdpgAgent::<f64>::new(2, cfg, &mut rng).unwrap();
        let before = agent.actor.clone();
        let out = train_agent(&env, agent, &mut rng, &mut NullSink).unwrap();
        assert_eq!(out.buffer.len(), 1);
        assert_eq!(out.agent.actor, before);
        assert_eq!(out.rewards.len(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let env = env(2, 20);
        let cfg = AgentConfig {
            episodes: 3,
            batch_size: 8,
            network: small_shape(),
            ..Default::default()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let mut sink = VecSink::default();
            let out = train(&env, &cfg, &mut rng, &mut sink).unwrap();
            assert_eq!(sink.steps.len(), 60);
            assert_eq!(sink.episodes.len(), 3);
            (out.scores, out.agent.actor)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        let ok = AgentConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            AgentConfig { gamma: 1.5, ..ok.clone() },
            AgentConfig { tau: 0.0, ..ok.clone() },
            AgentConfig {
                batch_size: 0,
                ..ok.clone()
            },
            AgentConfig {
                buffer_capacity: 10,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn moving_average_window() {
        let mut m = MovingAverage::<f64>::new(2);
        assert_eq!(m.push(1.0), 1.0);
        assert_eq!(m.push(3.0), 2.0);
        assert!(m.is_full());
        assert_eq!(m.push(5.0), 4.0);
    }
}
