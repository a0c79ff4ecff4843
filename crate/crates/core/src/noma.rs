//! Two-user downlink NOMA link model.
//!
//! User 1 (weaker channel) treats user 2's stream as interference; user 2
//! removes user 1's stream by successive interference cancellation:
//!
//! ```text
//! SINR1 = |h1ᴴw1|² p1 / (|h1ᴴw2|² p2 + σ²)
//! SINR2 = |h2ᴴw2|² p2 / σ²
//! R_k   = log2(1 + SINR_k)
//! ```
//!
//! An action is feasible when both beamformers have unit norm, the powers are
//! non-negative and sum to the budget, and each user meets its rate floor.
//! The per-step reward is `(1 - α)(R1 + R2)` with `α = 1` on any violation.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use num_complex::Complex;
use thiserror::Error;

use crate::channel::{norm, ChannelRealization};
use crate::scalar::Scalar;

/// Relative tolerance for the norm and power-sum constraints.
pub const CONSTRAINT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NomaError {
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),
    #[error("total power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("minimum rates must be non-negative")]
    NegativeMinRate,
    #[error("beamformer length {got} does not match {expected} antennas")]
    Dimension { expected: usize, got: usize },
    #[error("oracle grid needs at least 3 points per axis, got {0}")]
    GridTooCoarse(usize),
    #[error("no grid point satisfies the minimum-rate constraints")]
    InfeasibleOnGrid,
    #[error("non-finite value encountered while evaluating the link")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T> {
    /// Total transmit power `P` (linear).
    pub total_power: T,
    /// Noise variance `σ²` (linear).
    pub noise_variance: T,
    /// Rate floors `(r1, r2)` in bps/Hz.
    pub min_rates: (T, T),
}

impl<T: Scalar> LinkBudget<T> {
    pub fn new(total_power: T, noise_variance: T, min_rates: (T, T)) -> Result<Self, NomaError> {
        let b = Self {
            total_power,
            noise_variance,
            min_rates,
        };
        b.validate()?;
        Ok(b)
    }

    /// `σ² = 1` and `P = 10^(snr_db / 10)`.
    pub fn from_snr_db(snr_db: f64, min_rates: (T, T)) -> Result<Self, NomaError> {
        Self::new(T::of(10f64.powf(snr_db / 10.0)), T::one(), min_rates)
    }

    pub fn validate(&self) -> Result<(), NomaError> {
        if !(self.noise_variance > T::zero()) {
            return Err(NomaError::NonPositiveNoise(self.noise_variance.as_f64()));
        }
        if !(self.total_power > T::zero()) {
            return Err(NomaError::NonPositivePower(self.total_power.as_f64()));
        }
        if !(self.min_rates.0 >= T::zero() && self.min_rates.1 >= T::zero()) {
            return Err(NomaError::NegativeMinRate);
        }
        Ok(())
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.total_power / self.noise_variance).as_f64().log10()
    }
}

/// Beamformers and powers for both users.
#[derive(Debug, Clone, PartialEq)]
pub struct NomaAction<T> {
    pub w1: Vec<Complex<T>>,
    pub w2: Vec<Complex<T>>,
    pub p1: T,
    pub p2: T,
}

impl<T: Scalar> NomaAction<T> {
    /// Whether the unit-norm and power-budget invariants hold within
    /// [`CONSTRAINT_TOL`] (relative).
    pub fn satisfies_budget(&self, budget: &LinkBudget<T>) -> bool {
        let tol = T::of(CONSTRAINT_TOL);
        let p = budget.total_power;
        let finite =
            self.w1.iter().chain(&self.w2).all(|z| z.re.is_finite() && z.im.is_finite()) && self.p1.is_finite() && self.p2.is_finite();
        finite
            && (norm(&self.w1) - T::one()).abs() <= tol
            && (norm(&self.w2) - T::one()).abs() <= tol
            && self.p1 >= -tol * p
            && self.p2 >= -tol * p
            && (self.p1 + self.p2 - p).abs() <= tol * p
    }
}

/// Per-user SINR and rate plus the violation flag `α`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport<T> {
    pub sinr1: T,
    pub sinr2: T,
    pub rate1: T,
    pub rate2: T,
    pub sum_rate: T,
    /// 1 when any constraint is violated, else 0.
    pub alpha: u8,
}

/// `hᴴ w`.
pub fn inner<T: Scalar>(h: &[Complex<T>], w: &[Complex<T>]) -> Complex<T> {
    h.iter()
        .zip(w)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
}

/// `|hᴴ w|²`.
pub fn gain<T: Scalar>(h: &[Complex<T>], w: &[Complex<T>]) -> T {
    inner(h, w).norm_sqr()
}

pub fn compute_sinr<T: Scalar>(
    channels: &ChannelRealization<T>,
    action: &NomaAction<T>,
    budget: &LinkBudget<T>,
) -> Result<(T, T), NomaError> {
    if !(budget.noise_variance > T::zero()) {
        return Err(NomaError::NonPositiveNoise(budget.noise_variance.as_f64()));
    }
    let n = channels.n_antennas();
    for w in [&action.w1, &action.w2] {
        if w.len() != n {
            return Err(NomaError::Dimension { expected: n, got: w.len() });
        }
    }
    let s2 = budget.noise_variance;
    let sinr1 = gain(&channels.h1, &action.w1) * action.p1 / (gain(&channels.h1, &action.w2) * action.p2 + s2);
    let sinr2 = gain(&channels.h2, &action.w2) * action.p2 / s2;
    Ok((sinr1, sinr2))
}

/// Rates from an SINR pair; `alpha` is left at 0 for [`check_constraints`].
pub fn compute_rates<T: Scalar>(sinr: (T, T)) -> RateReport<T> {
    let rate1 = sinr.0.ln_1p() / T::LN_2();
    let rate2 = sinr.1.ln_1p() / T::LN_2();
    RateReport {
        sinr1: sinr.0,
        sinr2: sinr.1,
        rate1,
        rate2,
        sum_rate: rate1 + rate2,
        alpha: 0,
    }
}

pub fn check_constraints<T: Scalar>(report: &RateReport<T>, action: &NomaAction<T>, budget: &LinkBudget<T>) -> u8 {
    let floors_met = report.rate1 >= budget.min_rates.0 && report.rate2 >= budget.min_rates.1;
    if floors_met && action.satisfies_budget(budget) {
        0
    } else {
        1
    }
}

/// `(1 - α)(R1 + R2)`.
pub fn reward<T: Scalar>(report: &RateReport<T>) -> T {
    if report.alpha == 0 {
        report.sum_rate
    } else {
        T::zero()
    }
}

/// SINR, rates and `α` for one action in one channel state.
pub fn evaluate<T: Scalar>(
    channels: &ChannelRealization<T>,
    action: &NomaAction<T>,
    budget: &LinkBudget<T>,
) -> Result<RateReport<T>, NomaError> {
    let mut report = compute_rates(compute_sinr(channels, action, budget)?);
    report.alpha = check_constraints(&report, action, budget);
    Ok(report)
}

/// `v / ‖v‖`, or `None` when `v` is numerically zero.
pub fn normalized<T: Scalar>(v: &[Complex<T>]) -> Option<Vec<Complex<T>>> {
    let n = norm(v);
    if !(n > T::of(1e-300_f64.max(T::min_positive_value().as_f64()))) {
        return None;
    }
    Some(v.iter().map(|z| z / n).collect())
}

/// Maximum-ratio beamformer `h / ‖h‖`; an all-zero channel falls back to the
/// first unit vector.
pub fn matched_filter<T: Scalar>(h: &[Complex<T>]) -> Vec<Complex<T>> {
    normalized(h).unwrap_or_else(|| {
        let mut e = vec![Complex::new(T::zero(), T::zero()); h.len()];
        if let Some(first) = e.first_mut() {
            *first = Complex::new(T::one(), T::zero());
        }
        e
    })
}

/// Matched filters for both users with an even power split.
pub fn matched_filter_action<T: Scalar>(channels: &ChannelRealization<T>, budget: &LinkBudget<T>) -> NomaAction<T> {
    let half = budget.total_power / T::of(2.0);
    NomaAction {
        w1: matched_filter(&channels.h1),
        w2: matched_filter(&channels.h2),
        p1: half,
        p2: half,
    }
}

/// Each user alone for half the slot with full power and a matched filter:
/// `0.5 Σ_k log2(1 + P‖h_k‖²/σ²)`.
pub fn tdma_baseline<T: Scalar>(channels: &ChannelRealization<T>, budget: &LinkBudget<T>) -> T {
    let snr = budget.total_power / budget.noise_variance;
    let half = T::of(0.5);
    [&channels.h1, &channels.h2]
        .iter()
        .map(|h| half * (snr * crate::channel::norm_sqr(h)).ln_1p() / T::LN_2())
        .fold(T::zero(), |a, b| a + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<T> {
    pub action: NomaAction<T>,
    pub report: RateReport<T>,
    pub sum_rate: T,
}

/// `M` evenly spaced points on `[lo, hi]`, endpoints included.
fn grid<T: Scalar>(lo: T, hi: T, m: usize) -> impl Iterator<Item = T> {
    let step = (hi - lo) / T::of((m - 1) as f64);
    (0..m).map(move |i| lo + step * T::of(i as f64))
}

/// Grid resolution of [`oracle_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleGrid {
    /// Points per axis of the exhaustive grid, `M ≥ 3`.
    pub points: usize,
    /// Zoom passes applied to each refined candidate; 0 returns the plain
    /// grid optimum.
    pub refine_levels: usize,
    /// Number of grid local maxima (best first) that get refined.
    pub refine_starts: usize,
    /// Points per axis of each zoom pass.
    pub refine_points: usize,
}

impl OracleGrid {
    pub fn plain(points: usize) -> Self {
        Self {
            points,
            refine_levels: 0,
            refine_starts: 0,
            refine_points: 3,
        }
    }
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            points: 41,
            refine_levels: 16,
            refine_starts: 16,
            refine_points: 9,
        }
    }
}

/// [`oracle_search`] with `M` points per axis and the default refinement.
pub fn oracle_grid_search<T: Scalar>(
    channels: &ChannelRealization<T>,
    budget: &LinkBudget<T>,
    m: usize,
) -> Result<OracleSolution<T>, NomaError> {
    oracle_search(
        channels,
        budget,
        OracleGrid {
            points: m,
            ..OracleGrid::default()
        },
    )
}

/// A point of the user-2 beam and power-split search.
#[derive(Debug, Clone, Copy)]
struct Candidate<T> {
    sum: T,
    theta: T,
    phi: T,
    rho: T,
}

/// Sum-rate evaluator with user 1 fixed on its matched filter.
///
/// User 2's beam is `cos θ · u1 + sin θ · e^{jφ} · u2` where `(u1, u2)` is an
/// orthonormal basis of `span{h1, h2}` (`u2` absent when the channels are
/// collinear).
struct Objective<'a, T> {
    h1: &'a [Complex<T>],
    h2: &'a [Complex<T>],
    u1: Vec<Complex<T>>,
    u2: Option<Vec<Complex<T>>>,
    g1: T,
    budget: &'a LinkBudget<T>,
}

impl<T: Scalar> Objective<'_, T> {
    fn beam(&self, theta: T, phi: T) -> Option<Vec<Complex<T>>> {
        let (s, c) = theta.sin_cos();
        match &self.u2 {
            Some(u2) => {
                let rot = Complex::from_polar(s, phi);
                Some(self.u1.iter().zip(u2).map(|(a, b)| a.scale(c) + rot * b).collect())
            }
            None => Some(self.u1.clone()),
        }
    }

    /// `(|h1ᴴw2|², |h2ᴴw2|²)`.
    fn beam_gains(&self, theta: T, phi: T) -> Option<(T, T)> {
        self.beam(theta, phi).map(|w| (gain(self.h1, &w), gain(self.h2, &w)))
    }

    /// Feasible sum-rate, or `None` when a floor is missed.
    fn sum_rate(&self, leak: T, g2: T, rho: T) -> Option<T> {
        let b = self.budget;
        let p1 = rho * b.total_power;
        let p2 = b.total_power - p1;
        let rate2 = (g2 * p2 / b.noise_variance).ln_1p() / T::LN_2();
        let rate1 = (self.g1 * p1 / (leak * p2 + b.noise_variance)).ln_1p() / T::LN_2();
        (rate1 >= b.min_rates.0 && rate2 >= b.min_rates.1).then_some(rate1 + rate2)
    }

    /// Best feasible point of an axis-aligned box gridded with `m` points per axis.
    fn best_in_box(&self, theta: (T, T), phi: (T, T), rho: (T, T), m: usize) -> Option<Candidate<T>> {
        let beams: Vec<(T, T, T, T)> = grid(theta.0, theta.1, m)
            .flat_map(|cv| grid(phi.0, phi.1, m).map(move |pv| (cv, pv)))
            .filter_map(|(cv, pv)| self.beam_gains(cv, pv).map(|(l, g)| (cv, pv, l, g)))
            .collect();
        let mut best: Option<Candidate<T>> = None;
        for r in grid(rho.0, rho.1, m) {
            for &(cv, pv, leak, g2) in &beams {
                if let Some(sum) = self.sum_rate(leak, g2, r) {
                    if best.is_none_or(|b| sum > b.sum) {
                        best = Some(Candidate {
                            sum,
                            theta: cv,
                            phi: pv,
                            rho: r,
                        });
                    }
                }
            }
        }
        best
    }
}

/// Brute-force search over beamformers in `span{h1, h2}` and power splits.
///
/// User 2's beamformer is `cos θ · u1 + sin θ · e^{jφ} · u2` over an
/// orthonormal basis of `span{h1, h2}`, with `θ ∈ [0, π/2]`, `φ ∈ [0, 2π]`,
/// and `p1 = ρP` with `ρ ∈ [0, 1]`, every axis on an `M`-point grid with
/// endpoints included; refining `M` to `k(M − 1) + 1` nests the grid.
/// Components outside the span reach neither user, and up to a global phase
/// this covers every unit vector in the span.
///
/// For fixed `(w2, ρ)` both the sum-rate and user 1's floor increase with
/// `|h1ᴴw1|²`, whose maximum over unit vectors is the matched filter
/// `h1/‖h1‖`, so `w1` is fixed there and the grid runs over `(θ, φ, ρ)`.
///
/// The best grid local maxima are then zoomed: each pass re-grids a box of
/// one previous step around the candidate. The result never falls below the
/// plain grid optimum.
#[allow(clippy::needless_range_loop)]
pub fn oracle_search<T: Scalar>(
    channels: &ChannelRealization<T>,
    budget: &LinkBudget<T>,
    grid_spec: OracleGrid,
) -> Result<OracleSolution<T>, NomaError> {
    let m = grid_spec.points;
    if m < 3 {
        return Err(NomaError::GridTooCoarse(m));
    }
    if grid_spec.refine_levels > 0 && grid_spec.refine_points < 3 {
        return Err(NomaError::GridTooCoarse(grid_spec.refine_points));
    }
    budget.validate()?;
    let w1 = matched_filter(&channels.h1);
    // Gram-Schmidt: u2 is the part of h2 orthogonal to h1
    let proj = inner(&w1, &channels.h2);
    let residual: Vec<Complex<T>> = channels.h2.iter().zip(&w1).map(|(b, a)| b - a * proj).collect();
    let u2 = (norm(&residual) > T::of(1e-9) * norm(&channels.h2).max(T::min_positive_value()))
        .then(|| normalized(&residual))
        .flatten();
    let obj = Objective {
        h1: &channels.h1,
        h2: &channels.h2,
        u1: w1.clone(),
        u2,
        g1: gain(&channels.h1, &w1),
        budget,
    };
    if !obj.g1.is_finite() {
        return Err(NomaError::NonFinite);
    }

    let (zero, one, tau) = (T::zero(), T::one(), T::TAU());
    let axis = |hi: T| -> Vec<T> { grid(zero, hi, m).collect() };
    let (thetas, phis, rhos) = (axis(T::FRAC_PI_2()), axis(tau), axis(one));

    // values[(ic * m + ip) * m + ir], None where infeasible or degenerate
    let mut values: Vec<Option<T>> = vec![None; m * m * m];
    for (ic, &theta) in thetas.iter().enumerate() {
        for (ip, &phi) in phis.iter().enumerate() {
            let Some((leak, g2)) = obj.beam_gains(theta, phi) else { continue };
            for (ir, &rho) in rhos.iter().enumerate() {
                values[(ic * m + ip) * m + ir] = obj.sum_rate(leak, g2, rho);
            }
        }
    }
    let at = |ic: usize, ip: usize, ir: usize| values[(ic * m + ip) * m + ir];

    let mut maxima: Vec<Candidate<T>> = Vec::new();
    let mut best: Option<Candidate<T>> = None;
    for ic in 0..m {
        for ip in 0..m {
            for ir in 0..m {
                let Some(v) = at(ic, ip, ir) else { continue };
                let cand = Candidate {
                    sum: v,
                    theta: thetas[ic],
                    phi: phis[ip],
                    rho: rhos[ir],
                };
                if best.is_none_or(|b| v > b.sum) {
                    best = Some(cand);
                }
                let neighbours_lower = (0..27).filter(|&k| k != 13).all(|k| {
                    let step = |d: usize, i: usize| (i + d).checked_sub(1).filter(|&j| j < m);
                    let jt = step(k / 9, ic);
                    // φ wraps around
                    let jp = Some((ip + m - 1 + (k / 3) % 3) % m);
                    let jr = step(k % 3, ir);
                    match (jt, jp, jr) {
                        (Some(a), Some(b), Some(c)) => at(a, b, c).is_none_or(|u| u <= v),
                        _ => true,
                    }
                });
                if neighbours_lower {
                    maxima.push(cand);
                }
            }
        }
    }
    let mut best = best.ok_or(NomaError::InfeasibleOnGrid)?;

    if grid_spec.refine_levels > 0 {
        maxima.sort_by(|a, b| b.sum.partial_cmp(&a.sum).unwrap_or(std::cmp::Ordering::Equal));
        let coarse = T::of((m - 1) as f64);
        let shrink = T::of(2.0) / T::of((grid_spec.refine_points - 1) as f64);
        for start in maxima.iter().take(grid_spec.refine_starts) {
            let mut inc = *start;
            let (mut dtheta, mut dphi, mut drho) = (T::FRAC_PI_2() / coarse, tau / coarse, one / coarse);
            for _ in 0..grid_spec.refine_levels {
                let found = obj.best_in_box(
                    ((inc.theta - dtheta).max(zero), (inc.theta + dtheta).min(T::FRAC_PI_2())),
                    (inc.phi - dphi, inc.phi + dphi),
                    ((inc.rho - drho).max(zero), (inc.rho + drho).min(one)),
                    grid_spec.refine_points,
                );
                if let Some(f) = found.filter(|f| f.sum > inc.sum) {
                    inc = f;
                }
                dtheta *= shrink;
                dphi *= shrink;
                drho *= shrink;
            }
            if inc.sum > best.sum {
                best = inc;
            }
        }
    }

    let action = NomaAction {
        w1,
        w2: obj.beam(best.theta, best.phi).ok_or(NomaError::NonFinite)?,
        p1: best.rho * budget.total_power,
        p2: budget.total_power - best.rho * budget.total_power,
    };
    let report = evaluate(channels, &action, budget)?;
    Ok(OracleSolution {
        sum_rate: report.sum_rate,
        report,
        action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_ordered_pair_seeded, MultipathSpec, SteeringConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn orthogonal() -> ChannelRealization<f64> {
        ChannelRealization::from_vectors(vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)])
    }

    fn budget(p: f64, r: f64) -> LinkBudget<f64> {
        LinkBudget::new(p, 1.0, (r, r)).unwrap()
    }

    fn random_unit<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex<f64>> {
        let v: Vec<_> = (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        normalized(&v).unwrap()
    }

    fn random_action<R: Rng>(n: usize, p: f64, rng: &mut R) -> NomaAction<f64> {
        let rho: f64 = rng.random();
        NomaAction {
            w1: random_unit(n, rng),
            w2: random_unit(n, rng),
            p1: rho * p,
            p2: (1.0 - rho) * p,
        }
    }

    #[test]
    fn sinr_examples() {
        let ch = orthogonal();
        let a = NomaAction {
            w1: vec![c(1.0, 0.0), c(0.0, 0.0)],
            w2: vec![c(0.0, 0.0), c(1.0, 0.0)],
            p1: 1.0,
            p2: 1.0,
        };
        assert_eq!(compute_sinr(&ch, &a, &budget(2.0, 0.0)).unwrap(), (1.0, 1.0));

        let ch = ChannelRealization::from_vectors(vec![c(0.1, 0.0), c(0.0, 0.0)], vec![c(0.0, 2.0f64.sqrt()), c(2.0f64.sqrt(), 0.0)]);
        let a = NomaAction {
            w1: vec![c(1.0, 0.0), c(0.0, 0.0)],
            w2: matched_filter(&ch.h2),
            p1: 0.0,
            p2: 2.0,
        };
        let (_, sinr2) = compute_sinr(&ch, &a, &budget(2.0, 0.0)).unwrap();
        assert!((sinr2 - 8.0).abs() < 1e-12);

        let bad = LinkBudget {
            total_power: 1.0,
            noise_variance: 0.0,
            min_rates: (0.0, 0.0),
        };
        assert_eq!(compute_sinr(&ch, &a, &bad), Err(NomaError::NonPositiveNoise(0.0)));
    }

    #[test]
    fn rate_examples() {
        let r = compute_rates((1.0f64, 1.0));
        assert_eq!((r.rate1, r.rate2, r.sum_rate), (1.0, 1.0, 2.0));
        let r = compute_rates((0.0f64, 0.0));
        assert_eq!((r.rate1, r.rate2), (0.0, 0.0));
        let r = compute_rates((3.0f64, 7.0));
        assert!((r.rate1 - 2.0).abs() < 1e-15 && (r.rate2 - 3.0).abs() < 1e-15);
        assert!((r.sum_rate - 5.0).abs() < 1e-15);
    }

    fn report(rate1: f64, rate2: f64) -> RateReport<f64> {
        RateReport {
            sinr1: rate1.exp2() - 1.0,
            sinr2: rate2.exp2() - 1.0,
            rate1,
            rate2,
            sum_rate: rate1 + rate2,
            alpha: 0,
        }
    }

    fn valid_action() -> NomaAction<f64> {
        NomaAction {
            w1: vec![c(0.6, 0.0), c(0.0, 0.8)],
            w2: vec![c(0.0, 1.0), c(0.0, 0.0)],
            p1: 0.5,
            p2: 0.5,
        }
    }

    #[test]
    fn constraint_examples() {
        let b = budget(1.0, 1.0);
        assert_eq!(check_constraints(&report(1.5, 2.0), &valid_action(), &b), 0);
        assert_eq!(check_constraints(&report(0.5, 2.0), &valid_action(), &b), 1);
        let mut short = valid_action();
        short.p1 = 0.45;
        short.p2 = 0.45;
        assert_eq!(check_constraints(&report(1.5, 2.0), &short, &b), 1);
        let mut long = valid_action();
        long.w1[0] = c(0.7, 0.0);
        assert_eq!(check_constraints(&report(1.5, 2.0), &long, &b), 1);
        let mut neg = valid_action();
        neg.p1 = -0.5;
        neg.p2 = 1.5;
        assert_eq!(check_constraints(&report(1.5, 2.0), &neg, &b), 1);
    }

    #[test]
    fn reward_examples() {
        let mut r = report(1.5, 2.0);
        assert_eq!(reward(&r), 3.5);
        r.alpha = 1;
        assert_eq!(reward(&r), 0.0);
        assert_eq!(reward(&report(0.0, 0.0)), 0.0);
    }

    #[test]
    fn tdma_examples() {
        let ch = orthogonal();
        assert!((tdma_baseline(&ch, &budget(1.0, 0.0)) - 1.0).abs() < 1e-15);
        let ch = ChannelRealization::from_vectors(vec![c(3f64.sqrt(), 0.0)], vec![c(0.0, 7f64.sqrt())]);
        assert!((tdma_baseline(&ch, &budget(1.0, 0.0)) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn tdma_dominates_each_half_slot() {
        let st = SteeringConfig::new(4).unwrap();
        for seed in 0..50 {
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let b = budget(100.0, 0.0);
            let t = tdma_baseline(&ch, &b);
            for h in [&ch.h1, &ch.h2] {
                let alone = 0.5 * (1.0 + 100.0 * crate::channel::norm_sqr(h)).log2();
                assert!(t >= alone);
            }
        }
    }

    #[test]
    fn oracle_orthogonal_symmetric_optimum() {
        let sol = oracle_grid_search(&orthogonal(), &budget(2.0, 0.0), 41).unwrap();
        assert!((sol.sum_rate - 2.0).abs() < 1e-12, "{}", sol.sum_rate);
        assert!((sol.action.p1 - 1.0).abs() < 1e-5);
        assert!((gain(&[c(1.0, 0.0), c(0.0, 0.0)], &sol.action.w1) - 1.0).abs() < 1e-12);
        assert_eq!(sol.report.alpha, 0);
    }

    #[test]
    fn oracle_reports_grid_infeasibility() {
        let st = SteeringConfig::new(2).unwrap();
        let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, 3).unwrap();
        assert_eq!(oracle_grid_search(&ch, &budget(10.0, 100.0), 11), Err(NomaError::InfeasibleOnGrid));
        assert_eq!(oracle_grid_search(&ch, &budget(10.0, 0.0), 2), Err(NomaError::GridTooCoarse(2)));
    }

    #[test]
    fn oracle_beats_random_feasible_actions() {
        // Random-sampling oracle: no sampled feasible action exceeds the grid optimum.
        let st = SteeringConfig::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..5 {
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let b = budget(100.0, 1.0);
            let best = oracle_grid_search(&ch, &b, 41).unwrap().sum_rate;
            for _ in 0..1000 {
                let a = random_action(2, 100.0, &mut rng);
                assert!(a.satisfies_budget(&b));
                let r = evaluate(&ch, &a, &b).unwrap();
                if r.alpha == 0 {
                    assert!(r.sum_rate <= best, "seed {seed}: {} > {best}", r.sum_rate);
                }
            }
        }
    }

    #[test]
    fn oracle_monotone_under_refinement() {
        let st = SteeringConfig::new(3).unwrap();
        for seed in 0..4 {
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let b = budget(31.6, 0.5);
            let mut last = 0.0;
            for m in [3, 5, 9, 17, 33] {
                let plain = OracleGrid::plain(m);
                let s = oracle_search(&ch, &b, plain).map(|s| s.sum_rate).unwrap_or(0.0);
                assert!(s >= last, "m={m}: {s} < {last}");
                last = s;
            }
        }
    }

    /// Scalar-arithmetic recomputation that shares no helpers with the module.
    fn scalar_sinr(h1: &[(f64, f64)], h2: &[(f64, f64)], w1: &[(f64, f64)], w2: &[(f64, f64)], p1: f64, p2: f64, s2: f64) -> (f64, f64) {
        let ip = |h: &[(f64, f64)], w: &[(f64, f64)]| {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..h.len() {
                // conj(h) * w
                re += h[i].0 * w[i].0 + h[i].1 * w[i].1;
                im += h[i].0 * w[i].1 - h[i].1 * w[i].0;
            }
            re * re + im * im
        };
        (ip(h1, w1) * p1 / (ip(h1, w2) * p2 + s2), ip(h2, w2) * p2 / s2)
    }

    fn pairs(v: &[Complex<f64>]) -> Vec<(f64, f64)> {
        v.iter().map(|z| (z.re, z.im)).collect()
    }

    proptest! {
        #[test]
        fn sinr_matches_scalar_recomputation(seed in any::<u64>(), p in 0.01f64..1e3, s2 in 0.01f64..10.0) {
            let st = SteeringConfig::new(4).unwrap();
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
            let a = random_action(4, p, &mut rng);
            let b = LinkBudget::new(p, s2, (0.0, 0.0)).unwrap();
            let got = compute_sinr(&ch, &a, &b).unwrap();
            let want = scalar_sinr(&pairs(&ch.h1), &pairs(&ch.h2), &pairs(&a.w1), &pairs(&a.w2), a.p1, a.p2, s2);
            prop_assert!((got.0 - want.0).abs() <= 1e-12 * want.0.max(1.0));
            prop_assert!((got.1 - want.1).abs() <= 1e-12 * want.1.max(1.0));
        }

        #[test]
        fn sinr_invariant_to_beam_phase(seed in any::<u64>(), phi1 in 0.0f64..6.3, phi2 in 0.0f64..6.3) {
            let st = SteeringConfig::new(4).unwrap();
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_action(4, 10.0, &mut rng);
            let b = budget(10.0, 0.0);
            let mut rotated = a.clone();
            let (e1, e2) = (Complex::from_polar(1.0, phi1), Complex::from_polar(1.0, phi2));
            rotated.w1.iter_mut().for_each(|z| *z *= e1);
            rotated.w2.iter_mut().for_each(|z| *z *= e2);
            let x = compute_sinr(&ch, &a, &b).unwrap();
            let y = compute_sinr(&ch, &rotated, &b).unwrap();
            prop_assert!((x.0 - y.0).abs() <= 1e-12 * x.0.max(1.0));
            prop_assert!((x.1 - y.1).abs() <= 1e-12 * x.1.max(1.0));
        }

        #[test]
        fn sinr_invariant_to_common_scaling(seed in any::<u64>(), k in 0.01f64..100.0) {
            let st = SteeringConfig::new(4).unwrap();
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_action(4, 10.0, &mut rng);
            let mut scaled = a.clone();
            scaled.p1 *= k;
            scaled.p2 *= k;
            let x = compute_sinr(&ch, &a, &LinkBudget::new(10.0, 1.0, (0.0, 0.0)).unwrap()).unwrap();
            let y = compute_sinr(&ch, &scaled, &LinkBudget::new(10.0 * k, k, (0.0, 0.0)).unwrap()).unwrap();
            prop_assert!((x.0 - y.0).abs() <= 1e-12 * x.0.max(1.0));
            prop_assert!((x.1 - y.1).abs() <= 1e-12 * x.1.max(1.0));
        }

        #[test]
        fn user_two_ignores_user_one(seed in any::<u64>()) {
            let st = SteeringConfig::new(4).unwrap();
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_action(4, 10.0, &mut rng);
            let mut other = a.clone();
            other.w1 = random_unit(4, &mut rng);
            other.p1 = rng.random_range(0.0..50.0);
            let b = budget(10.0, 0.0);
            prop_assert_eq!(compute_sinr(&ch, &a, &b).unwrap().1, compute_sinr(&ch, &other, &b).unwrap().1);
        }

        #[test]
        fn reward_is_sum_rate_iff_feasible(seed in any::<u64>(), r in 0.0f64..6.0) {
            let st = SteeringConfig::new(3).unwrap();
            let ch = sample_ordered_pair_seeded(&MultipathSpec::default(), &st, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = budget(100.0, r);
            let a = random_action(3, 100.0, &mut rng);
            let rep = evaluate(&ch, &a, &b).unwrap();
            let violated = rep.rate1 < r || rep.rate2 < r;
            prop_assert_eq!(rep.alpha == 1, violated);
            if violated {
                prop_assert_eq!(reward(&rep), 0.0);
            } else {
                prop_assert_eq!(reward(&rep), rep.rate1 + rep.rate2);
            }
        }
    }
}
