//! VaR and CVaR of finite discrete distributions, the Rockafellar–Uryasev
//! objective, and the saddle function `v(x, y)` of the long-run problem.
//!
//! CVaR is the right-tail quantile average
//! `CVaR_α(ξ) = 1/(1−α) ∫_α^1 VaR_q(ξ) dq`, evaluated exactly by splitting
//! the top `1 − α` of probability mass over the sorted atoms. At `α = 0` it
//! is the mean.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{MdpInstance, OccupationMeasure, PROB_TOL};

/// Slack on cumulative probabilities when locating quantiles, absorbing
/// rounding in sums of probabilities.
const CDF_TOL: f64 = 1e-12;

/// Finite distribution in canonical form: atoms sorted by value, equal
/// values merged, zero-probability atoms dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let dist = Self::canonical(atoms)?;
        let total: f64 = dist.atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidParameter(format!(
                "distribution probabilities sum to {total}"
            )));
        }
        Ok(dist)
    }

    pub fn dirac(value: f64) -> Self {
        Self {
            atoms: vec![(value, 1.0)],
        }
    }

    fn canonical(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if let Some(&(v, p)) = atoms
            .iter()
            .find(|(v, p)| !v.is_finite() || !p.is_finite() || *p < 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "invalid atom (value {v}, probability {p})"
            )));
        }
        atoms.retain(|&(_, p)| p > 0.0);
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("distribution has no mass".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Ok(Self { atoms: merged })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut dist = Self::canonical(weights)?;
        let total: f64 = dist.atoms.iter().map(|(_, p)| p).sum();
        dist.atoms.iter_mut().for_each(|(_, p)| *p /= total);
        Ok(dist)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn min_value(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max_value(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, p)| v * p).sum()
    }

    pub fn cdf(&self, z: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|(v, _)| *v <= z)
            .map(|(_, p)| p)
            .sum()
    }

    /// `P(ξ ≤ z)` and `P(ξ < z)`.
    pub fn cdf_pair(&self, z: f64) -> (f64, f64) {
        let below = self
            .atoms
            .iter()
            .take_while(|(v, _)| *v < z)
            .map(|(_, p)| p)
            .sum();
        (self.cdf(z), below)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RiskParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in [0, 1), got {alpha}"
            )));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn cvar(alpha: f64) -> Result<Self> {
        Self::new(alpha, 0.0)
    }

    /// `1 / (1 − α)`.
    pub fn tail_weight(&self) -> f64 {
        1.0 / (1.0 - self.alpha)
    }
}

fn check_alpha_right(alpha: f64) {
    assert!(
        (0.0..1.0).contains(&alpha),
        "alpha must lie in [0, 1), got {alpha}"
    );
}

/// `VaR_α = inf{z : F(z) ≥ α}`; the minimum of the support at `α = 0`.
pub fn var(dist: &DiscreteDistribution, alpha: f64) -> f64 {
    var_with_tol(dist, alpha, CDF_TOL)
}

/// As [`var`], accepting `F(z) ≥ α − tol`. Used on laws computed from
/// linear-program solutions, whose probabilities carry solver noise.
pub fn var_with_tol(dist: &DiscreteDistribution, alpha: f64, tol: f64) -> f64 {
    check_alpha_right(alpha);
    let mut cum = 0.0;
    for &(v, p) in &dist.atoms {
        cum += p;
        if cum >= alpha - tol {
            return v;
        }
    }
    dist.max_value()
}

/// Right-tailed CVaR, the mean of the top `1 − α` of the distribution.
pub fn cvar_right(dist: &DiscreteDistribution, alpha: f64) -> f64 {
    check_alpha_right(alpha);
    let tail = 1.0 - alpha;
    let mut remaining = tail;
    let mut acc = 0.0;
    for &(v, p) in dist.atoms.iter().rev() {
        let take = p.min(remaining);
        acc += take * v;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    if remaining > 0.0 {
        // Total mass fell short of one by rounding.
        acc += remaining * dist.min_value();
    }
    acc / tail
}

/// Left-tailed CVaR, the mean of the bottom `α` of the distribution,
/// `α ∈ (0, 1]`.
pub fn cvar_left(dist: &DiscreteDistribution, alpha: f64) -> f64 {
    assert!(
        alpha > 0.0 && alpha <= 1.0,
        "alpha must lie in (0, 1], got {alpha}"
    );
    let mut remaining = alpha;
    let mut acc = 0.0;
    for &(v, p) in &dist.atoms {
        let take = p.min(remaining);
        acc += take * v;
        remaining -= take;
        if remaining <= 0.0 {
            break;
        }
    }
    if remaining > 0.0 {
        acc += remaining * dist.max_value();
    }
    acc / alpha
}

/// `y + E[ξ − y]⁺ / (1 − α)`.
pub fn ru_objective(dist: &DiscreteDistribution, y: f64, alpha: f64) -> f64 {
    check_alpha_right(alpha);
    let excess: f64 = dist.atoms.iter().map(|&(v, p)| p * (v - y).max(0.0)).sum();
    y + excess / (1.0 - alpha)
}

/// Minimizes the Rockafellar–Uryasev objective over the support. Returns
/// the minimum and the leftmost minimizer.
pub fn cvar_via_ru(dist: &DiscreteDistribution, alpha: f64) -> (f64, f64) {
    let values: Vec<f64> = dist
        .atoms
        .iter()
        .map(|&(y, _)| ru_objective(dist, y, alpha))
        .collect();
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * best.abs().max(1.0);
    let k = values.iter().position(|&f| f <= best + slack).unwrap();
    (best, dist.atoms[k].0)
}

/// Law of the one-step reward when state-action pairs are drawn from `x`.
/// In next-state reward mode each pair's weight is split over next states
/// by the kernel. Negative solver noise in `x` is clipped and the weights
/// renormalized.
pub fn reward_distribution(instance: &MdpInstance, x: &OccupationMeasure) -> DiscreteDistribution {
    let weights = instance
        .pairs()
        .zip(x.values())
        .filter(|(_, &w)| w > 0.0)
        .flat_map(|((i, a), &w)| {
            instance
                .reward_outcomes(i, a)
                .into_iter()
                .map(move |(v, p)| (v, w * p))
        });
    DiscreteDistribution::from_weights(weights).expect("occupation measure has positive mass")
}

/// Per-pair coefficient of `v(·, y)`:
/// `E_j[ y + (r − y)⁺ / (1 − α) + β r ]` for pair `(i, a)`.
pub fn saddle_coefficient(
    instance: &MdpInstance,
    state: usize,
    action: usize,
    y: f64,
    params: &RiskParams,
) -> f64 {
    let w = params.tail_weight();
    instance
        .reward_outcomes(state, action)
        .iter()
        .map(|&(v, p)| p * (y + w * (v - y).max(0.0) + params.beta * v))
        .sum()
}

/// The saddle function `v(x, y)`, linear in `x` and convex piecewise linear
/// in `y`.
pub fn saddle_value(
    instance: &MdpInstance,
    x: &OccupationMeasure,
    y: f64,
    params: &RiskParams,
) -> f64 {
    instance
        .pairs()
        .zip(x.values())
        .map(|((i, a), &w)| w * saddle_coefficient(instance, i, a, y, params))
        .sum()
}

/// Sorted distinct reward values of an instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakpoints {
    pub values: Vec<f64>,
    /// Smallest gap between adjacent values; `None` with a single value.
    pub delta: Option<f64>,
    pub bounds: (f64, f64),
}

impl Breakpoints {
    pub fn contains(&self, y: f64) -> bool {
        self.values.binary_search_by(|v| v.total_cmp(&y)).is_ok()
    }
}

/// Distinct rewards that occur with positive probability under some
/// state-action pair.
pub fn breakpoints(instance: &MdpInstance) -> Breakpoints {
    let mut values: Vec<f64> = instance
        .pairs()
        .flat_map(|(i, a)| instance.reward_outcomes(i, a).into_iter().map(|(v, _)| v))
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let delta = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .min_by(f64::total_cmp);
    let bounds = (values[0], values[values.len() - 1]);
    Breakpoints {
        values,
        delta,
        bounds,
    }
}
