//! Episodic MDP view of the NOMA downlink.
//!
//! State layout (length `4N + 1`): `[Re h1, Im h1, Re h2, Im h2, α_prev]`.
//! Action layout (length `4N + 2`): `[Re w1, Im w1, Re w2, Im w2, p1_raw, p2_raw]`.
//!
//! Raw actions are projected onto the feasible set before evaluation:
//! beamformers are normalized and powers are split by normalized softplus,
//! so only the rate floors can be violated. A fresh channel pair is drawn
//! after every step and this step's `α` is written into the next state.

use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::channel::{sample_ordered_pair, ChannelError, ChannelRealization, MultipathSpec, SteeringConfig};
use crate::noma::{self, matched_filter, LinkBudget, NomaAction, NomaError, RateReport};
use crate::scalar::{softplus, softplus_inverse, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("vector of length {got} does not fit {what} for {n} antennas (expected {expected})")]
    Dimension {
        what: &'static str,
        n: usize,
        expected: usize,
        got: usize,
    },
    #[error("state length {0} is not of the form 4N + 1")]
    StateLength(usize),
    #[error("episode must have at least one step")]
    EmptyEpisode,
    #[error("fixed channel has {got} antennas, array has {expected}")]
    FixedChannel { expected: usize, got: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Link(#[from] NomaError),
}

pub fn state_width(n_antennas: usize) -> usize {
    4 * n_antennas + 1
}

pub fn action_width(n_antennas: usize) -> usize {
    4 * n_antennas + 2
}

/// Where the environment's channel states come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSource<T> {
    /// Independent draw from the multipath spec at every reset and step.
    Fresh,
    /// The same realization at every step.
    Fixed(ChannelRealization<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig<T> {
    pub steps_per_episode: usize,
    pub budget: LinkBudget<T>,
    pub spec: MultipathSpec<T>,
    pub steering: SteeringConfig,
    pub source: ChannelSource<T>,
}

impl<T: Scalar> EpisodeConfig<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.steps_per_episode == 0 {
            return Err(EnvError::EmptyEpisode);
        }
        self.budget.validate()?;
        self.spec.validate()?;
        if let ChannelSource::Fixed(ch) = &self.source {
            if ch.n_antennas() != self.steering.n_antennas || ch.h2.len() != self.steering.n_antennas {
                return Err(EnvError::FixedChannel {
                    expected: self.steering.n_antennas,
                    got: ch.n_antennas(),
                });
            }
        }
        Ok(())
    }

    pub fn n_antennas(&self) -> usize {
        self.steering.n_antennas
    }
}

pub fn flatten_state<T: Scalar>(channels: &ChannelRealization<T>, alpha: u8) -> Vec<T> {
    let mut s = Vec::with_capacity(state_width(channels.n_antennas()));
    for h in [&channels.h1, &channels.h2] {
        s.extend(h.iter().map(|z| z.re));
        s.extend(h.iter().map(|z| z.im));
    }
    s.push(if alpha == 0 { T::zero() } else { T::one() });
    s
}

fn reassemble<T: Scalar>(re: &[T], im: &[T]) -> Vec<Complex<T>> {
    re.iter().zip(im).map(|(&a, &b)| Complex::new(a, b)).collect()
}

/// Splits a flat state into its channel pair and `α` slot. The channels are
/// taken as stored; no reordering is applied.
pub fn unflatten_state<T: Scalar>(state: &[T], spec: &MultipathSpec<T>) -> Result<(ChannelRealization<T>, u8), EnvError> {
    if state.len() % 4 != 1 {
        return Err(EnvError::StateLength(state.len()));
    }
    let n = state.len() / 4;
    let block = |i: usize| &state[i * n..(i + 1) * n];
    let channels = ChannelRealization {
        h1: reassemble(block(0), block(1)),
        h2: reassemble(block(2), block(3)),
        spec_used: spec.clone(),
        seed: None,
    };
    let alpha = if state[4 * n] > T::of(0.5) { 1 } else { 0 };
    Ok((channels, alpha))
}

/// Flat raw-action form of a structured action. Powers are stored as
/// `softplus⁻¹(p_k / P)` so that [`project_action`] maps the vector back to
/// the same action.
pub fn unflatten_action<T: Scalar>(action: &NomaAction<T>, budget: &LinkBudget<T>) -> Vec<T> {
    let n = action.w1.len();
    let mut a = Vec::with_capacity(action_width(n));
    for w in [&action.w1, &action.w2] {
        a.extend(w.iter().map(|z| z.re));
        a.extend(w.iter().map(|z| z.im));
    }
    let floor = T::of(1e-15);
    for p in [action.p1, action.p2] {
        a.push(softplus_inverse((p / budget.total_power).max(floor)));
    }
    a
}

/// Maps a raw actor output onto the feasible action set.
///
/// `w_k` is the reassembled complex vector divided by its norm (the matched
/// filter when the norm is below `1e-12`), and
/// `p_k = P · softplus(raw_k) / Σ softplus(raw)`.
pub fn project_action<T: Scalar>(raw: &[T], channels: &ChannelRealization<T>, budget: &LinkBudget<T>) -> Result<NomaAction<T>, EnvError> {
    let n = channels.n_antennas();
    if raw.len() != action_width(n) {
        return Err(EnvError::Dimension {
            what: "action",
            n,
            expected: action_width(n),
            got: raw.len(),
        });
    }
    let block = |i: usize| &raw[i * n..(i + 1) * n];
    let beam = |re: &[T], im: &[T], h: &[Complex<T>]| {
        let v = reassemble(re, im);
        let nv = crate::channel::norm(&v);
        if nv.is_finite() && nv >= T::of(1e-12) {
            v.iter().map(|z| z / nv).collect()
        } else {
            matched_filter(h)
        }
    };
    let w1 = beam(block(0), block(1), &channels.h1);
    let w2 = beam(block(2), block(3), &channels.h2);

    let p = budget.total_power;
    let (s1, s2) = (softplus(raw[4 * n]), softplus(raw[4 * n + 1]));
    let total = s1 + s2;
    let (p1, p2) = if total.is_finite() && total > T::zero() {
        (p * s1 / total, p * s2 / total)
    } else {
        let half = p / T::of(2.0);
        (half, p - half)
    };
    Ok(NomaAction { w1, w2, p1, p2 })
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub next_state: Vec<T>,
    pub reward: T,
    pub report: RateReport<T>,
    pub action: NomaAction<T>,
}

/// Stateless environment: the current channel lives inside the state vector.
#[derive(Debug, Clone)]
pub struct NomaEnv<T> {
    config: EpisodeConfig<T>,
}

impl<T: Scalar> NomaEnv<T> {
    pub fn new(config: EpisodeConfig<T>) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EpisodeConfig<T> {
        &self.config
    }

    pub fn state_width(&self) -> usize {
        state_width(self.config.n_antennas())
    }

    pub fn action_width(&self) -> usize {
        action_width(self.config.n_antennas())
    }

    pub fn draw_channels<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ChannelRealization<T>, EnvError> {
        match &self.config.source {
            ChannelSource::Fresh => Ok(sample_ordered_pair(&self.config.spec, &self.config.steering, rng)?),
            ChannelSource::Fixed(ch) => Ok(ch.clone()),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>, EnvError> {
        Ok(flatten_state(&self.draw_channels(rng)?, 0))
    }

    pub fn channels_of(&self, state: &[T]) -> Result<ChannelRealization<T>, EnvError> {
        let expected = self.state_width();
        if state.len() != expected {
            return Err(EnvError::Dimension {
                what: "state",
                n: self.config.n_antennas(),
                expected,
                got: state.len(),
            });
        }
        Ok(unflatten_state(state, &self.config.spec)?.0)
    }

    /// Scores `raw_action` against the channels held in `state`, then draws
    /// the next channel pair and records this step's `α` in it.
    pub fn step<R: Rng + ?Sized>(&self, state: &[T], raw_action: &[T], rng: &mut R) -> Result<StepOutcome<T>, EnvError> {
        let channels = self.channels_of(state)?;
        let action = project_action(raw_action, &channels, &self.config.budget)?;
        let report = noma::evaluate(&channels, &action, &self.config.budget)?;
        let reward = noma::reward(&report);
        let next_state = flatten_state(&self.draw_channels(rng)?, report.alpha);
        Ok(StepOutcome {
            next_state,
            reward,
            report,
            action,
        })
    }
}
