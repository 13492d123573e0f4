use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MdpInstance, Rewards};
use crate::error::{Error, Result};

/// Weight of the uniform kernel mixed into every row, which makes every
/// transition probability positive.
const UNIFORM_MIX: f64 = 0.05;

/// Seeded random instance with `n_states` states, `n_actions` actions per
/// state and rewards drawn uniformly from `reward_range`, rounded to four
/// decimals. Every kernel row is strictly positive, so every policy yields
/// a single aperiodic recurrent class.
pub fn random_instance(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    reward_range: (f64, f64),
) -> Result<MdpInstance> {
    let (lo, hi) = reward_range;
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidParameter(
            "random instances need at least one state and one action".into(),
        ));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidParameter(format!(
            "reward range [{lo}, {hi}] is not a finite interval"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<String> = (0..n_states).map(|i| format!("s{i}")).collect();
    let actions = vec![(0..n_actions).map(|a| format!("a{a}")).collect::<Vec<_>>(); n_states];
    let mut kernel = Vec::with_capacity(n_states);
    let mut rewards = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut rows = Vec::with_capacity(n_actions);
        let mut rew = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let raw: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let uniform = UNIFORM_MIX / n_states as f64;
            rows.push(
                raw.iter()
                    .map(|w| (1.0 - UNIFORM_MIX) * w / total + uniform)
                    .collect(),
            );
            let r = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            rew.push((r * 1e4).round() / 1e4);
        }
        kernel.push(rows);
        rewards.push(rew);
    }
    MdpInstance::new(
        format!("random-{seed}-{n_states}x{n_actions}"),
        states,
        actions,
        kernel,
        Rewards::StateAction(rewards),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = random_instance(7, 3, 2, (0.0, 100.0)).unwrap();
        let b = random_instance(7, 3, 2, (0.0, 100.0)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_instance(8, 3, 2, (0.0, 100.0)).unwrap());
    }

    #[test]
    fn output_validates_and_is_positive() {
        for seed in 0..50 {
            let inst = random_instance(
                seed,
                1 + (seed as usize % 5),
                1 + (seed as usize % 3),
                (-10.0, 10.0),
            )
            .unwrap();
            assert!(validate(&inst).is_valid());
            for (i, a) in inst.pairs() {
                assert!(inst.kernel_row(i, a).iter().all(|&p| p > 0.0));
                let r = inst.reward(i, a, 0);
                assert!((-10.0..=10.0).contains(&r));
                assert_eq!((r * 1e4).round() / 1e4, r);
            }
        }
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(random_instance(0, 0, 2, (0.0, 1.0)).is_err());
        assert!(random_instance(0, 2, 0, (0.0, 1.0)).is_err());
        assert!(random_instance(0, 2, 2, (0.0, f64::INFINITY)).is_err());
    }
}
