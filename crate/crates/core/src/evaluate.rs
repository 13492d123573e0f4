//! Finite-horizon evaluation of Markov policies: exact per-step CVaR
//! sequences and their Cesàro averages, the oscillating schedule of the
//! two-state example, Monte Carlo sanity checks, and the gap bound between
//! per-step and stationary CVaR.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chains::{stationary_distribution, t_step_distribution, Evolution, StateActionLaw};
use crate::error::{Error, Result};
use crate::model::{
    MarkovPolicy, MdpInstance, OccupationMeasure, StationaryPolicy, TimeDependentPolicy,
};
use crate::risk::{cvar_right, reward_distribution, DiscreteDistribution};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvarSequence {
    /// `CVaR_α(R_t)` for `t = 0..T`.
    pub per_step: Vec<f64>,
    /// `cesaro[t]` is the mean of `per_step[..=t]`.
    pub cesaro: Vec<f64>,
    pub alpha: f64,
    pub initial_state: usize,
    pub policy: String,
}

impl CvarSequence {
    /// Writes `t,cvar_t,cesaro_t` rows with a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,cvar_t,cesaro_t")?;
        for (t, (c, m)) in self.per_step.iter().zip(&self.cesaro).enumerate() {
            writeln!(out, "{t},{c},{m}")?;
        }
        Ok(())
    }
}

/// Law of the reward `R_t` collected at a step whose state-action law is
/// `law`.
pub fn step_reward_distribution(
    instance: &MdpInstance,
    law: &StateActionLaw,
) -> DiscreteDistribution {
    reward_distribution(instance, &OccupationMeasure::from_values(law.probs.clone()))
}

/// Exact per-step CVaR of `R_t`, `t < horizon`, from the forward evolution
/// of the state-action law.
pub fn cvar_sequence<P: MarkovPolicy + ?Sized>(
    instance: &MdpInstance,
    policy: &P,
    s0: usize,
    horizon: usize,
    alpha: f64,
) -> Result<CvarSequence> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    if let Some(h) = policy.horizon() {
        if horizon > h {
            return Err(Error::HorizonExceeded {
                t: horizon - 1,
                horizon: h,
            });
        }
    }
    let mut evo = Evolution::new(instance, policy, s0)?;
    let mut per_step = Vec::with_capacity(horizon);
    let mut cesaro = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for t in 0..horizon {
        let law = evo.step()?;
        let c = cvar_right(&step_reward_distribution(instance, &law), alpha);
        total += c;
        per_step.push(c);
        cesaro.push(total / (t + 1) as f64);
    }
    Ok(CvarSequence {
        per_step,
        cesaro,
        alpha,
        initial_state: s0,
        policy: policy.describe(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowEstimate {
    /// Largest Cesàro average over the window.
    pub limsup: f64,
    /// Smallest Cesàro average over the window.
    pub liminf: f64,
    pub window: usize,
}

/// Extremes of the Cesàro averages over the trailing `window` steps:
/// finite-horizon estimates of the limsup and liminf, not limits.
pub fn limsup_liminf_estimate(seq: &CvarSequence, window: usize) -> Result<WindowEstimate> {
    let n = seq.cesaro.len();
    if window == 0 || window > n {
        return Err(Error::InvalidParameter(format!(
            "window {window} must lie in 1..={n}"
        )));
    }
    let tail = &seq.cesaro[n - window..];
    Ok(WindowEstimate {
        limsup: tail.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        liminf: tail.iter().copied().fold(f64::INFINITY, f64::min),
        window,
    })
}

/// Block index `k` with `(3^k − 1)/2 ≤ t < (3^{k+1} − 1)/2`.
pub fn example1_block(t: u64) -> u32 {
    let mut k = 0;
    let mut end: u128 = 1; // (3^{k+1} − 1)/2
    let mut pow: u128 = 3;
    while (t as u128) >= end {
        pow *= 3;
        end = (pow - 1) / 2;
        k += 1;
    }
    k
}

/// Deterministic switching schedule on a two-state instance: the chain
/// sits in the first state during even blocks `[(3^k − 1)/2, (3^{k+1} − 1)/2)`
/// and in the second during odd blocks. The rule at `t` moves to the state
/// scheduled for `t + 1`, so it is defined for every `t` without storing
/// per-step rules.
#[derive(Debug, Clone, PartialEq)]
pub struct Example1Schedule {
    /// Rule moving to each target state from either state.
    towards: [StationaryPolicy; 2],
    horizon: Option<usize>,
}

impl Example1Schedule {
    /// Requires two states where, from each state, some action moves to
    /// each state with certainty.
    pub fn new(instance: &MdpInstance) -> Result<Self> {
        if instance.n_states() != 2 {
            return Err(Error::InvalidPolicy(
                "the switching schedule needs a two-state instance".into(),
            ));
        }
        let rule_to = |target: usize| -> Result<StationaryPolicy> {
            let probs = (0..2)
                .map(|i| {
                    let a = (0..instance.n_actions(i))
                        .find(|&a| instance.prob(i, a, target) == 1.0)
                        .ok_or_else(|| {
                            Error::InvalidPolicy(format!(
                                "no action moves from `{}` to `{}` with certainty",
                                instance.states()[i],
                                instance.states()[target]
                            ))
                        })?;
                    let mut row = vec![0.0; instance.n_actions(i)];
                    row[a] = 1.0;
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            StationaryPolicy::new(instance, probs)
        };
        Ok(Self {
            towards: [rule_to(0)?, rule_to(1)?],
            horizon: None,
        })
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = Some(horizon);
        self
    }

    /// State the schedule occupies at `t`.
    pub fn scheduled_state(t: u64) -> usize {
        (example1_block(t) % 2) as usize
    }
}

impl MarkovPolicy for Example1Schedule {
    fn rule_at(&self, t: usize) -> Result<Cow<'_, StationaryPolicy>> {
        if let Some(h) = self.horizon {
            if t >= h {
                return Err(Error::HorizonExceeded { t, horizon: h });
            }
        }
        Ok(Cow::Borrowed(
            &self.towards[Self::scheduled_state(t as u64 + 1)],
        ))
    }

    fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    fn describe(&self) -> String {
        "example1 switching schedule".into()
    }
}

/// The switching schedule materialized as `horizon` explicit rules.
pub fn example1_policy(instance: &MdpInstance, horizon: usize) -> Result<TimeDependentPolicy> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let schedule = Example1Schedule::new(instance)?;
    let rules = (0..horizon)
        .map(|t| schedule.rule_at(t).map(Cow::into_owned))
        .collect::<Result<_>>()?;
    Ok(TimeDependentPolicy::new(rules))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloResult {
    /// Per step, `(reward, count)` sorted by reward.
    pub histograms: Vec<Vec<(f64, u64)>>,
    /// Per-step CVaR of the empirical reward law.
    pub per_step: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
}

fn sample(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Simulates `replications` independent paths of length `horizon`.
/// Replication `r` draws from the ChaCha stream `r` of `seed`, so results
/// do not depend on scheduling.
pub fn monte_carlo_eval<P: MarkovPolicy + Sync + ?Sized>(
    instance: &MdpInstance,
    policy: &P,
    s0: usize,
    horizon: usize,
    replications: usize,
    seed: u64,
    alpha: f64,
) -> Result<MonteCarloResult> {
    if replications == 0 || horizon == 0 {
        return Err(Error::InvalidParameter(
            "replications and horizon must be at least 1".into(),
        ));
    }
    if s0 >= instance.n_states() {
        return Err(Error::InvalidParameter(format!(
            "initial state {s0} out of range"
        )));
    }
    let rules: Vec<StationaryPolicy> = (0..horizon)
        .map(|t| policy.rule_at(t).map(Cow::into_owned))
        .collect::<Result<_>>()?;
    let empty = || vec![BTreeMap::<u64, u64>::new(); horizon];
    let counts = (0..replications)
        .into_par_iter()
        .fold(empty, |mut acc, r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut s = s0;
            for (t, rule) in rules.iter().enumerate() {
                let a = sample(rule.rule(s), &mut rng);
                let next = sample(instance.kernel_row(s, a), &mut rng);
                let reward = instance.reward(s, a, next);
                // Normalize −0.0 so equal rewards share a key.
                *acc[t].entry((reward + 0.0).to_bits()).or_insert(0) += 1;
                s = next;
            }
            acc
        })
        .reduce(empty, |mut a, b| {
            for (ta, tb) in a.iter_mut().zip(b) {
                for (k, c) in tb {
                    *ta.entry(k).or_insert(0) += c;
                }
            }
            a
        });
    let mut histograms = Vec::with_capacity(horizon);
    let mut per_step = Vec::with_capacity(horizon);
    for step in counts {
        let mut hist: Vec<(f64, u64)> = step
            .into_iter()
            .map(|(k, c)| (f64::from_bits(k), c))
            .collect();
        hist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let dist = DiscreteDistribution::from_weights(hist.iter().map(|&(v, c)| (v, c as f64)))?;
        per_step.push(cvar_right(&dist, alpha));
        histograms.push(hist);
    }
    Ok(MonteCarloResult {
        histograms,
        per_step,
        replications,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBound {
    /// `|CVaR_α(R_t) − CVaR_α(R^d)|`.
    pub gap: f64,
    /// `(U_r − L_r)/(1 − α) · Σ |P_t(i,a) − π(i,a)|`.
    pub bound: f64,
}

impl GapBound {
    pub fn holds(&self) -> bool {
        self.gap <= self.bound + 1e-10
    }
}

/// Distance between the step-`t` CVaR and the stationary CVaR of a
/// unichain policy, with its bound in terms of the state-action laws.
pub fn lemma2_gap(
    instance: &MdpInstance,
    policy: &StationaryPolicy,
    s0: usize,
    t: usize,
    alpha: f64,
) -> Result<GapBound> {
    let law = t_step_distribution(instance, policy, s0, t)?;
    let pi = stationary_distribution(instance, policy)?;
    let step = cvar_right(&step_reward_distribution(instance, &law), alpha);
    let limit = cvar_right(&reward_distribution(instance, &pi), alpha);
    let (lo, hi) = instance.reward_bounds();
    Ok(GapBound {
        gap: (step - limit).abs(),
        bound: (hi - lo) / (1.0 - alpha) * law.l1_distance(&pi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::stationary_distribution;
    use crate::model::{builtin, random_instance, Rewards};

    #[test]
    fn block_boundaries() {
        // Blocks [0], [1, 3], [4, 12], [13, 39], ...
        let expect = [
            (0, 0),
            (1, 1),
            (3, 1),
            (4, 2),
            (12, 2),
            (13, 3),
            (39, 3),
            (40, 4),
        ];
        for (t, k) in expect {
            assert_eq!(example1_block(t), k, "t = {t}");
        }
        for n in 1..10u32 {
            let start = (3u64.pow(2 * n) - 1) / 2;
            assert_eq!(Example1Schedule::scheduled_state(start), 0);
            assert_eq!(Example1Schedule::scheduled_state(start - 1), 1);
        }
    }

    #[test]
    fn schedule_moves_as_scripted() {
        let inst = builtin("example1").unwrap();
        let sched = Example1Schedule::new(&inst).unwrap();
        // At t = 0 in the first state, move to the second.
        assert_eq!(sched.rule_at(0).unwrap().rule(0), &[0.0, 1.0]);
        let law = t_step_distribution(&inst, &sched, 0, 1).unwrap();
        assert_eq!(law.probs, vec![0.0, 0.0, 0.0, 1.0]);
        for t in 1..=3 {
            let law = t_step_distribution(&inst, &sched, 0, t).unwrap();
            assert_eq!(law.probs[2] + law.probs[3], 1.0, "t = {t}");
        }
    }

    #[test]
    fn example1_sequence_follows_blocks() {
        let inst = builtin("example1").unwrap();
        let sched = Example1Schedule::new(&inst).unwrap();
        let horizon = (3usize.pow(8) - 1) / 2;
        let seq = cvar_sequence(&inst, &sched, 0, horizon, 0.5).unwrap();
        for (t, &c) in seq.per_step.iter().enumerate() {
            let expect = if Example1Schedule::scheduled_state(t as u64) == 0 {
                2.0
            } else {
                -2.0
            };
            assert_eq!(c, expect, "t = {t}");
        }
        // Independent closed form of the Cesàro average at the end of
        // block k: 2 Σ_{j≤k} (−3)^j / ((3^{k+1} − 1)/2).
        for k in 0..8u32 {
            let end = (3i64.pow(k + 1) - 1) / 2;
            let signed: i64 = (0..=k).map(|j| (-3i64).pow(j)).sum();
            let expect = 2.0 * signed as f64 / end as f64;
            assert!((seq.cesaro[end as usize - 1] - expect).abs() < 1e-12);
        }
        // The averages oscillate between −1 (ends of odd blocks) and
        // (3^{k+1} + 1)/(3^{k+1} − 1) → 1 (ends of even blocks).
        let est = limsup_liminf_estimate(&seq, horizon - 121).unwrap();
        assert!((est.limsup - 2188.0 / 2186.0).abs() < 1e-12, "{est:?}");
        assert!((est.liminf + 1.0).abs() < 1e-12, "{est:?}");

        let explicit = example1_policy(&inst, horizon).unwrap();
        let seq2 = cvar_sequence(&inst, &explicit, 0, horizon, 0.5).unwrap();
        assert_eq!(
            seq,
            CvarSequence {
                policy: seq.policy.clone(),
                ..seq2
            }
        );
        assert!(matches!(
            cvar_sequence(&inst, &explicit, 0, horizon + 1, 0.5),
            Err(Error::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn stationary_sequence_converges() {
        let inst = random_instance(3, 4, 2, (0.0, 10.0)).unwrap();
        let d = StationaryPolicy::uniform(&inst);
        let limit = cvar_right(
            &reward_distribution(&inst, &stationary_distribution(&inst, &d).unwrap()),
            0.7,
        );
        let seq = cvar_sequence(&inst, &d, 0, 1000, 0.7).unwrap();
        assert!((seq.per_step[999] - limit).abs() < 1e-9);
        let est = limsup_liminf_estimate(&seq, 500).unwrap();
        assert!((est.limsup - limit).abs() < 1e-2 && (est.liminf - limit).abs() < 1e-2);
    }

    #[test]
    fn constant_rewards_give_constant_sequence() {
        let inst = MdpInstance::new(
            "flat",
            vec!["a".into(), "b".into()],
            vec![vec!["x".into()], vec!["x".into()]],
            vec![vec![vec![0.5, 0.5]], vec![vec![0.2, 0.8]]],
            Rewards::StateAction(vec![vec![3.0], vec![3.0]]),
        )
        .unwrap();
        let d = StationaryPolicy::uniform(&inst);
        let seq = cvar_sequence(&inst, &d, 1, 20, 0.4).unwrap();
        assert!(seq.per_step.iter().all(|&c| c == 3.0));
        let est = limsup_liminf_estimate(&seq, 20).unwrap();
        assert_eq!((est.limsup, est.liminf), (3.0, 3.0));
        let mc = monte_carlo_eval(&inst, &d, 0, 10, 50, 1, 0.4).unwrap();
        assert!(mc.per_step.iter().all(|&c| c == 3.0));
    }

    #[test]
    fn monte_carlo_is_reproducible_and_close() {
        let inst = builtin("example2").unwrap();
        let d = StationaryPolicy::uniform(&inst);
        let a = monte_carlo_eval(&inst, &d, 0, 30, 20_000, 42, 0.7).unwrap();
        let b = monte_carlo_eval(&inst, &d, 0, 30, 20_000, 42, 0.7).unwrap();
        assert_eq!(a, b);
        let exact = cvar_sequence(&inst, &d, 0, 30, 0.7).unwrap();
        for (e, m) in exact.per_step.iter().zip(&a.per_step) {
            assert!((e - m).abs() < 1.5, "{e} vs {m}");
        }
    }

    #[test]
    fn gap_bound_holds_on_random_instances() {
        for seed in 0..20 {
            let inst = random_instance(seed, 4, 2, (-5.0, 5.0)).unwrap();
            let d = StationaryPolicy::uniform(&inst);
            for t in [0, 1, 5, 25, 125] {
                let g = lemma2_gap(&inst, &d, 0, t, 0.6).unwrap();
                assert!(g.holds(), "seed {seed}, t {t}: {g:?}");
            }
            assert!(lemma2_gap(&inst, &d, 0, 2000, 0.6).unwrap().bound < 1e-9);
        }
    }

    #[test]
    fn csv_export() {
        let inst = builtin("example1").unwrap();
        let sched = Example1Schedule::new(&inst).unwrap();
        let seq = cvar_sequence(&inst, &sched, 0, 3, 0.5).unwrap();
        let mut out = Vec::new();
        seq.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "t,cvar_t,cesaro_t\n0,2,2\n1,-2,0\n2,-2,-0.6666666666666666\n"
        );
    }
}
