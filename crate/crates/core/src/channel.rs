//! Sparse multipath mmWave channels seen by a half-wavelength uniform linear array.
//!
//! A user channel is a sum of `L` steered paths, `h = Σ_l λ_l a(N, Ω_l)`,
//! where `a(N, Ω)` is the ULA response with element `m` equal to
//! `exp(j π m cos Ω)`. Pairs of channels are returned ordered so that the
//! weaker user (smaller Euclidean norm) is user 1; that user is decoded
//! without interference cancellation.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("array must have at least one antenna")]
    NoAntennas,
    #[error("a user channel needs at least one path")]
    NoPaths,
    #[error("fixed law lists {got} values for {expected} paths")]
    LawLength { expected: usize, got: usize },
    #[error("path angle {0} rad outside [0, pi)")]
    AngleOutOfRange(f64),
    #[error("angle must be finite")]
    NonFiniteAngle,
    #[error("gain variance must be finite and non-negative, got {0}")]
    BadVariance(f64),
}

/// Array geometry. Only the half-wavelength ULA is modelled, so the antenna
/// count is the whole description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SteeringConfig {
    pub n_antennas: usize,
}

impl SteeringConfig {
    pub fn new(n_antennas: usize) -> Result<Self, ChannelError> {
        if n_antennas == 0 {
            return Err(ChannelError::NoAntennas);
        }
        Ok(Self { n_antennas })
    }
}

/// Law of the complex path coefficients `λ_l`.
#[derive(Debug, Clone, PartialEq)]
pub enum GainLaw<T> {
    /// Circularly-symmetric complex Gaussian; the first path has
    /// `dominant_variance`, every later path `secondary_variance`.
    ComplexGaussian { dominant_variance: T, secondary_variance: T },
    /// Deterministic coefficients, one per path.
    Fixed(Vec<Complex<T>>),
}

/// Law of the angles of departure `Ω_l`, in radians.
#[derive(Debug, Clone, PartialEq)]
pub enum AngleLaw<T> {
    /// Uniform on `[low, high)`.
    Uniform {
        low: T,
        high: T,
    },
    Fixed(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipathSpec<T> {
    pub n_paths: usize,
    pub gains: GainLaw<T>,
    pub angles: AngleLaw<T>,
}

impl<T: Scalar> Default for MultipathSpec<T> {
    /// Three paths: one unit-variance dominant path plus two weak scatterers
    /// of variance 0.1, angles uniform on `[0, π)`.
    fn default() -> Self {
        Self {
            n_paths: 3,
            gains: GainLaw::ComplexGaussian {
                dominant_variance: T::one(),
                secondary_variance: T::of(0.1),
            },
            angles: AngleLaw::Uniform {
                low: T::zero(),
                high: T::PI(),
            },
        }
    }
}

impl<T: Scalar> MultipathSpec<T> {
    /// A single deterministic path, mostly useful in tests.
    pub fn fixed(gains: Vec<Complex<T>>, angles: Vec<T>) -> Self {
        Self {
            n_paths: gains.len(),
            gains: GainLaw::Fixed(gains),
            angles: AngleLaw::Fixed(angles),
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.n_paths == 0 {
            return Err(ChannelError::NoPaths);
        }
        match &self.gains {
            GainLaw::ComplexGaussian {
                dominant_variance,
                secondary_variance,
            } => {
                for v in [*dominant_variance, *secondary_variance] {
                    if !v.is_finite() || v < T::zero() {
                        return Err(ChannelError::BadVariance(v.as_f64()));
                    }
                }
            }
            GainLaw::Fixed(g) => {
                if g.len() != self.n_paths {
                    return Err(ChannelError::LawLength {
                        expected: self.n_paths,
                        got: g.len(),
                    });
                }
            }
        }
        let in_range = |a: T| a >= T::zero() && a < T::PI();
        match &self.angles {
            AngleLaw::Uniform { low, high } => {
                if !low.is_finite() || !high.is_finite() {
                    return Err(ChannelError::NonFiniteAngle);
                }
                if !in_range(*low) || *high > T::PI() || high < low {
                    let bad = if in_range(*low) { *high } else { *low };
                    return Err(ChannelError::AngleOutOfRange(bad.as_f64()));
                }
            }
            AngleLaw::Fixed(a) => {
                if a.len() != self.n_paths {
                    return Err(ChannelError::LawLength {
                        expected: self.n_paths,
                        got: a.len(),
                    });
                }
                if let Some(bad) = a.iter().find(|&&x| !in_range(x)) {
                    return Err(ChannelError::AngleOutOfRange(bad.as_f64()));
                }
            }
        }
        Ok(())
    }

    /// Expected `Σ_l E|λ_l|²`, the per-element second moment of a sampled channel.
    pub fn mean_path_power(&self) -> T {
        match &self.gains {
            GainLaw::ComplexGaussian {
                dominant_variance,
                secondary_variance,
            } => *dominant_variance + T::of((self.n_paths - 1) as f64) * *secondary_variance,
            GainLaw::Fixed(g) => g.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b),
        }
    }
}

/// Ordered pair of user channels, `‖h1‖ ≤ ‖h2‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    pub h1: Vec<Complex<T>>,
    pub h2: Vec<Complex<T>>,
    pub spec_used: MultipathSpec<T>,
    /// Seed of the generator the pair was drawn from, when known.
    pub seed: Option<u64>,
}

impl<T: Scalar> ChannelRealization<T> {
    /// Builds a realization from explicit vectors, applying the user ordering.
    pub fn from_vectors(a: Vec<Complex<T>>, b: Vec<Complex<T>>) -> Self {
        let (h1, h2) = order_pair(a, b);
        Self {
            h1,
            h2,
            spec_used: MultipathSpec::default(),
            seed: None,
        }
    }

    pub fn n_antennas(&self) -> usize {
        self.h1.len()
    }

    pub fn user(&self, k: usize) -> &[Complex<T>] {
        match k {
            0 => &self.h1,
            _ => &self.h2,
        }
    }
}

pub fn norm<T: Scalar>(v: &[Complex<T>]) -> T {
    norm_sqr(v).sqrt()
}

pub fn norm_sqr<T: Scalar>(v: &[Complex<T>]) -> T {
    v.iter().map(|c| c.norm_sqr()).fold(T::zero(), |a, b| a + b)
}

/// ULA response `[e^{jπ·0·cosΩ}, …, e^{jπ(N-1)cosΩ}]`.
pub fn steering_vector<T: Scalar>(n_antennas: usize, angle: T) -> Result<Vec<Complex<T>>, ChannelError> {
    if n_antennas == 0 {
        return Err(ChannelError::NoAntennas);
    }
    if !angle.is_finite() {
        return Err(ChannelError::NonFiniteAngle);
    }
    let phase_step = T::PI() * angle.cos();
    Ok((0..n_antennas)
        .map(|m| Complex::from_polar(T::one(), phase_step * T::of(m as f64)))
        .collect())
}

fn complex_gaussian<T: Scalar, R: Rng + ?Sized>(variance: T, rng: &mut R) -> Complex<T> {
    let scale = (variance.as_f64() / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::of(re * scale), T::of(im * scale))
}

/// Draws one user channel `Σ_l λ_l a(N, Ω_l)` using the gain and angle laws of `spec`.
pub fn sample_channel<T: Scalar, R: Rng + ?Sized>(
    spec: &MultipathSpec<T>,
    steering: &SteeringConfig,
    rng: &mut R,
) -> Result<Vec<Complex<T>>, ChannelError> {
    spec.validate()?;
    let n = steering.n_antennas;
    let mut h = vec![Complex::new(T::zero(), T::zero()); n];
    for l in 0..spec.n_paths {
        let gain = match &spec.gains {
            GainLaw::ComplexGaussian {
                dominant_variance,
                secondary_variance,
            } => {
                let v = if l == 0 { *dominant_variance } else { *secondary_variance };
                complex_gaussian(v, rng)
            }
            GainLaw::Fixed(g) => g[l],
        };
        let angle = match &spec.angles {
            AngleLaw::Uniform { low, high } => {
                let u: f64 = rng.random();
                *low + (*high - *low) * T::of(u)
            }
            AngleLaw::Fixed(a) => a[l],
        };
        for (hm, am) in h.iter_mut().zip(steering_vector(n, angle)?) {
            *hm += gain * am;
        }
    }
    Ok(h)
}

/// Orders two channels so the weaker one comes first; ties keep draw order.
pub fn order_pair<T: Scalar>(a: Vec<Complex<T>>, b: Vec<Complex<T>>) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
    if norm_sqr(&a) > norm_sqr(&b) {
        (b, a)
    } else {
        (a, b)
    }
}

/// Draws two independent user channels and orders them by norm.
pub fn sample_ordered_pair<T: Scalar, R: Rng + ?Sized>(
    spec: &MultipathSpec<T>,
    steering: &SteeringConfig,
    rng: &mut R,
) -> Result<ChannelRealization<T>, ChannelError> {
    let a = sample_channel(spec, steering, rng)?;
    let b = sample_channel(spec, steering, rng)?;
    let (h1, h2) = order_pair(a, b);
    Ok(ChannelRealization {
        h1,
        h2,
        spec_used: spec.clone(),
        seed: None,
    })
}

/// Same as [`sample_ordered_pair`] with a private generator built from `seed`,
/// which is recorded in the realization.
pub fn sample_ordered_pair_seeded<T: Scalar>(
    spec: &MultipathSpec<T>,
    steering: &SteeringConfig,
    seed: u64,
) -> Result<ChannelRealization<T>, ChannelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pair = sample_ordered_pair(spec, steering, &mut rng)?;
    pair.seed = Some(seed);
    Ok(pair)
}
