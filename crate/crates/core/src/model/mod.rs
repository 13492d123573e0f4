//! Finite MDP instances, policies and occupation measures.
//!
//! States are addressed by index `0..n_states()`, actions by their position
//! in the per-state admissible list, and state-action pairs by a flat index
//! (`pair_index`) that follows state order, then action order. Every vector
//! indexed by pairs (occupation measures, LP columns) uses this layout.

mod builtin;
mod generate;
mod io;

use std::borrow::Cow;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub use builtin::{builtin, BUILTIN_NAMES};
pub use generate::random_instance;
pub use io::{from_json_str, load, save, to_json_string, SCHEMA_VERSION};

/// Tolerance on kernel rows and policy rules.
pub const PROB_TOL: f64 = 1e-9;
/// Tolerance on the stationary-distribution polytope constraints.
pub const POLYTOPE_TOL: f64 = 1e-8;
/// Default threshold below which a probability counts as zero when counting
/// randomizations.
pub const RANDOMIZATION_TOL: f64 = 1e-6;

/// Reward function of an instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Rewards {
    /// `r(i, a)`, indexed `[state][action]`.
    StateAction(Vec<Vec<f64>>),
    /// `r(i, a, j)` depending on the next state, indexed `[state][action][next]`.
    NextState(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpInstance {
    name: String,
    states: Vec<String>,
    actions: Vec<Vec<String>>,
    kernel: Vec<Vec<Vec<f64>>>,
    rewards: Rewards,
    offsets: Vec<usize>,
}

impl MdpInstance {
    /// Builds an instance after checking that all tables have consistent
    /// shapes. Stochasticity and sign are not enforced here; see [`validate`].
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        actions: Vec<Vec<String>>,
        kernel: Vec<Vec<Vec<f64>>>,
        rewards: Rewards,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidInstance("instance has no states".into()));
        }
        if actions.len() != n || kernel.len() != n {
            return Err(Error::InvalidInstance(format!(
                "expected action lists and kernel rows for {n} states"
            )));
        }
        for (i, acts) in actions.iter().enumerate() {
            if kernel[i].len() != acts.len() {
                return Err(Error::InvalidInstance(format!(
                    "state `{}`: {} actions but {} kernel rows",
                    states[i],
                    acts.len(),
                    kernel[i].len()
                )));
            }
            if let Some(row) = kernel[i].iter().find(|row| row.len() != n) {
                return Err(Error::InvalidInstance(format!(
                    "state `{}`: kernel row of length {} (expected {n})",
                    states[i],
                    row.len()
                )));
            }
        }
        match &rewards {
            Rewards::StateAction(r) => {
                let ok = r.len() == n && r.iter().zip(&actions).all(|(ri, a)| ri.len() == a.len());
                if !ok {
                    return Err(Error::InvalidInstance("reward table shape mismatch".into()));
                }
            }
            Rewards::NextState(r) => {
                let ok = r.len() == n
                    && r.iter()
                        .zip(&actions)
                        .all(|(ri, a)| ri.len() == a.len() && ri.iter().all(|row| row.len() == n));
                if !ok {
                    return Err(Error::InvalidInstance("reward table shape mismatch".into()));
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        offsets.push(0);
        for acts in &actions {
            acc += acts.len();
            offsets.push(acc);
        }
        Ok(Self {
            name: name.into(),
            states,
            actions,
            kernel,
            rewards,
            offsets,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self, state: usize) -> &[String] {
        &self.actions[state]
    }

    pub fn action_lists(&self) -> &[Vec<String>] {
        &self.actions
    }

    pub fn rewards(&self) -> &Rewards {
        &self.rewards
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self, state: usize) -> usize {
        self.actions[state].len()
    }

    /// Number of state-action pairs |𝒦|.
    pub fn n_pairs(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn pair_index(&self, state: usize, action: usize) -> usize {
        self.offsets[state] + action
    }

    /// Inverse of [`pair_index`](Self::pair_index).
    pub fn pair(&self, index: usize) -> (usize, usize) {
        let state = self.offsets.partition_point(|&o| o <= index) - 1;
        (state, index - self.offsets[state])
    }

    /// All pairs in flat-index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_states()).flat_map(move |i| (0..self.n_actions(i)).map(move |a| (i, a)))
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn action_index(&self, state: usize, name: &str) -> Option<usize> {
        self.actions[state].iter().position(|a| a == name)
    }

    /// Next-state distribution `P(·|i,a)`.
    pub fn kernel_row(&self, state: usize, action: usize) -> &[f64] {
        &self.kernel[state][action]
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.kernel[state][action][next]
    }

    pub fn is_future_state_reward(&self) -> bool {
        matches!(self.rewards, Rewards::NextState(_))
    }

    /// Reward collected when taking `action` in `state` and moving to `next`.
    /// In state-action mode `next` is ignored.
    pub fn reward(&self, state: usize, action: usize, next: usize) -> f64 {
        match &self.rewards {
            Rewards::StateAction(r) => r[state][action],
            Rewards::NextState(r) => r[state][action][next],
        }
    }

    /// Reward outcomes of one step from `(state, action)` with their
    /// conditional probabilities. A single certain outcome in state-action
    /// mode; one outcome per reachable next state otherwise.
    pub fn reward_outcomes(&self, state: usize, action: usize) -> Vec<(f64, f64)> {
        match &self.rewards {
            Rewards::StateAction(r) => vec![(r[state][action], 1.0)],
            Rewards::NextState(r) => self.kernel[state][action]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(j, &p)| (r[state][action][j], p))
                .collect(),
        }
    }

    pub fn expected_reward(&self, state: usize, action: usize) -> f64 {
        self.reward_outcomes(state, action)
            .iter()
            .map(|(v, p)| v * p)
            .sum()
    }

    /// `(L_r, U_r)` over all rewards that can occur.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, a) in self.pairs() {
            for (v, _) in self.reward_outcomes(i, a) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Number of stationary deterministic policies, Π|𝒜(i)|.
    pub fn deterministic_policy_count(&self) -> u128 {
        self.actions
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
            .unwrap_or(u128::MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NoStates,
    EmptyActionSet,
    NegativeProbability,
    RowSum,
    NonFiniteProbability,
    NonFiniteReward,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub state: Option<usize>,
    pub action: Option<usize>,
    /// Human-readable location, e.g. `(s1, a2)`.
    pub location: String,
    /// Size of the violation (row-sum error, negative entry, ...).
    pub magnitude: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} at {} (magnitude {:e})",
            self.kind, self.location, self.magnitude
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant of an instance and reports violations
/// as data.
pub fn validate(instance: &MdpInstance) -> ValidationReport {
    let mut violations = Vec::new();
    let loc = |i: usize, a: Option<usize>| match a {
        Some(a) => format!("({}, {})", instance.states[i], instance.actions[i][a]),
        None => format!("({})", instance.states[i]),
    };
    for i in 0..instance.n_states() {
        if instance.n_actions(i) == 0 {
            violations.push(Violation {
                kind: ViolationKind::EmptyActionSet,
                state: Some(i),
                action: None,
                location: loc(i, None),
                magnitude: 0.0,
            });
        }
        for a in 0..instance.n_actions(i) {
            let row = instance.kernel_row(i, a);
            let mut push = |kind, magnitude| {
                violations.push(Violation {
                    kind,
                    state: Some(i),
                    action: Some(a),
                    location: loc(i, Some(a)),
                    magnitude,
                })
            };
            if let Some(&p) = row.iter().find(|p| !p.is_finite()) {
                push(ViolationKind::NonFiniteProbability, p);
                continue;
            }
            if let Some(&p) = row
                .iter()
                .filter(|&&p| p < 0.0)
                .min_by(|a, b| a.total_cmp(b))
            {
                push(ViolationKind::NegativeProbability, -p);
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                push(ViolationKind::RowSum, (sum - 1.0).abs());
            }
            let bad_reward = match &instance.rewards {
                Rewards::StateAction(r) => (!r[i][a].is_finite()).then_some(r[i][a]),
                Rewards::NextState(r) => r[i][a].iter().copied().find(|v| !v.is_finite()),
            };
            if let Some(v) = bad_reward {
                push(ViolationKind::NonFiniteReward, v);
            }
        }
    }
    ValidationReport { violations }
}

/// Stationary randomized policy `d(a|i)`, indexed `[state][action]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPolicy {
    probs: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    pub fn new(instance: &MdpInstance, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != instance.n_states() {
            return Err(Error::InvalidPolicy(format!(
                "rule covers {} states, instance has {}",
                probs.len(),
                instance.n_states()
            )));
        }
        for (i, row) in probs.iter().enumerate() {
            if row.len() != instance.n_actions(i) {
                return Err(Error::InvalidPolicy(format!(
                    "state `{}`: {} probabilities for {} actions",
                    instance.states[i],
                    row.len(),
                    instance.n_actions(i)
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < -PROB_TOL) {
                return Err(Error::InvalidPolicy(format!(
                    "state `{}`: negative or non-finite probability",
                    instance.states[i]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "state `{}`: probabilities sum to {sum}",
                    instance.states[i]
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(instance: &MdpInstance) -> Self {
        let probs = (0..instance.n_states())
            .map(|i| {
                let k = instance.n_actions(i);
                vec![1.0 / k as f64; k]
            })
            .collect();
        Self { probs }
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[state][action]
    }

    pub fn rule(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }

    pub fn rules(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.len()
    }

    /// Returns the deterministic policy this rule collapses to, if every
    /// state puts all but `tol` of its mass on a single action.
    pub fn as_deterministic(&self, tol: f64) -> Option<DeterministicPolicy> {
        self.probs
            .iter()
            .map(|row| {
                let mut support = row.iter().enumerate().filter(|(_, &p)| p > tol);
                match (support.next(), support.next()) {
                    (Some((a, _)), None) => Some(a),
                    _ => None,
                }
            })
            .collect::<Option<Vec<_>>>()
            .map(|actions| DeterministicPolicy { actions })
    }
}

/// One admissible action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(instance: &MdpInstance, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != instance.n_states() {
            return Err(Error::InvalidPolicy(format!(
                "{} actions for {} states",
                actions.len(),
                instance.n_states()
            )));
        }
        for (i, &a) in actions.iter().enumerate() {
            if a >= instance.n_actions(i) {
                return Err(Error::InvalidPolicy(format!(
                    "action index {a} is not admissible in state `{}`",
                    instance.states[i]
                )));
            }
        }
        Ok(Self { actions })
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn to_stationary(&self, instance: &MdpInstance) -> StationaryPolicy {
        let probs = self
            .actions
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut row = vec![0.0; instance.n_actions(i)];
                row[a] = 1.0;
                row
            })
            .collect();
        StationaryPolicy { probs }
    }

    /// Human-readable form `state→action, ...`.
    pub fn describe(&self, instance: &MdpInstance) -> String {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, &a)| format!("{}→{}", instance.states[i], instance.actions[i][a]))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// All deterministic policies in lexicographic order, the first state
    /// being the most significant position.
    pub fn enumerate(instance: &MdpInstance) -> DeterministicPolicies {
        DeterministicPolicies {
            sizes: (0..instance.n_states())
                .map(|i| instance.n_actions(i))
                .collect(),
            next: Some(vec![0; instance.n_states()]),
        }
    }
}

/// Iterator returned by [`DeterministicPolicy::enumerate`].
pub struct DeterministicPolicies {
    sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for DeterministicPolicies {
    type Item = DeterministicPolicy;

    fn next(&mut self) -> Option<Self::Item> {
        let current = self.next.take()?;
        if self.sizes.contains(&0) {
            return None;
        }
        let mut succ = current.clone();
        let mut pos = succ.len();
        let mut carried = true;
        while carried && pos > 0 {
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] == self.sizes[pos] {
                succ[pos] = 0;
            } else {
                carried = false;
            }
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(DeterministicPolicy { actions: current })
    }
}

/// Steady-state state-action frequencies `x(i,a)` in flat pair order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationMeasure {
    values: Vec<f64>,
}

impl OccupationMeasure {
    /// Wraps a vector without checking the polytope constraints.
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Wraps a vector after checking it lies in the stationary-distribution
    /// polytope within [`POLYTOPE_TOL`].
    pub fn new(instance: &MdpInstance, values: Vec<f64>) -> Result<Self> {
        if values.len() != instance.n_pairs() {
            return Err(Error::InvalidParameter(format!(
                "occupation measure has {} entries, instance has {} pairs",
                values.len(),
                instance.n_pairs()
            )));
        }
        let x = Self { values };
        let residual = x.polytope_residual(instance);
        if residual > POLYTOPE_TOL {
            return Err(Error::InvalidParameter(format!(
                "occupation measure violates the stationary constraints by {residual:e}"
            )));
        }
        Ok(x)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, instance: &MdpInstance, state: usize, action: usize) -> f64 {
        self.values[instance.pair_index(state, action)]
    }

    /// State marginals Σₐ x(i,a).
    pub fn state_marginals(&self, instance: &MdpInstance) -> Vec<f64> {
        (0..instance.n_states())
            .map(|i| {
                (0..instance.n_actions(i))
                    .map(|a| self.get(instance, i, a))
                    .sum()
            })
            .collect()
    }

    /// Largest violation of flow balance, normalization, or nonnegativity.
    pub fn polytope_residual(&self, instance: &MdpInstance) -> f64 {
        let n = instance.n_states();
        let mut inflow = vec![0.0; n];
        let mut worst: f64 = 0.0;
        for (k, (i, a)) in instance.pairs().enumerate() {
            let x = self.values[k];
            worst = worst.max(-x);
            for (j, p) in instance.kernel_row(i, a).iter().enumerate() {
                inflow[j] += p * x;
            }
        }
        for (out, inn) in self.state_marginals(instance).iter().zip(&inflow) {
            worst = worst.max((out - inn).abs());
        }
        let total: f64 = self.values.iter().sum();
        worst.max((total - 1.0).abs())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// A policy that may change with time but depends only on the current state.
pub trait MarkovPolicy {
    /// Decision rule used at step `t`.
    fn rule_at(&self, t: usize) -> Result<Cow<'_, StationaryPolicy>>;

    /// Number of steps the policy is defined for, `None` if unbounded.
    fn horizon(&self) -> Option<usize>;

    fn describe(&self) -> String;
}

impl MarkovPolicy for StationaryPolicy {
    fn rule_at(&self, _t: usize) -> Result<Cow<'_, StationaryPolicy>> {
        Ok(Cow::Borrowed(self))
    }

    fn horizon(&self) -> Option<usize> {
        None
    }

    fn describe(&self) -> String {
        "stationary".into()
    }
}

/// Finite sequence of decision rules `u_t`, `t < horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDependentPolicy {
    rules: Vec<StationaryPolicy>,
}

impl TimeDependentPolicy {
    pub fn new(rules: Vec<StationaryPolicy>) -> Self {
        Self { rules }
    }

    pub fn rules(&self) -> &[StationaryPolicy] {
        &self.rules
    }
}

impl MarkovPolicy for TimeDependentPolicy {
    fn rule_at(&self, t: usize) -> Result<Cow<'_, StationaryPolicy>> {
        self.rules
            .get(t)
            .map(Cow::Borrowed)
            .ok_or(Error::HorizonExceeded {
                t,
                horizon: self.rules.len(),
            })
    }

    fn horizon(&self) -> Option<usize> {
        Some(self.rules.len())
    }

    fn describe(&self) -> String {
        format!("time-dependent ({} steps)", self.rules.len())
    }
}

/// Recovers the stationary policy of an occupation measure by normalizing
/// each state's row. States with zero marginal get a point mass on their
/// first-listed action.
pub fn extract_policy(instance: &MdpInstance, x: &OccupationMeasure) -> StationaryPolicy {
    let probs = (0..instance.n_states())
        .map(|i| {
            let row: Vec<f64> = (0..instance.n_actions(i))
                .map(|a| x.get(instance, i, a).max(0.0))
                .collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter().map(|v| v / total).collect()
            } else {
                let mut point = vec![0.0; row.len()];
                point[0] = 1.0;
                point
            }
        })
        .collect();
    StationaryPolicy { probs }
}

/// Number of randomizations Σᵢ (|{a : d(a|i) > tol}| − 1).
pub fn n_randomizations(policy: &StationaryPolicy, tol: f64) -> usize {
    policy
        .probs
        .iter()
        .map(|row| row.iter().filter(|&&p| p > tol).count().saturating_sub(1))
        .sum()
}
