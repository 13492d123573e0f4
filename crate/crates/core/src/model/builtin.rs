//! The three worked instances: a two-state oscillation example, a
//! three-state instance without an optimal deterministic policy, and a
//! university-endowment allocation model with next-state-dependent rewards.

use super::{MdpInstance, Rewards};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 3] = ["example1", "example2", "endowment"];

pub fn builtin(name: &str) -> Result<MdpInstance> {
    match name {
        "example1" => Ok(example1()),
        "example2" => Ok(example2()),
        "endowment" => Ok(endowment()),
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Two states with deterministic moves; `a11`/`a22` stay, `a12`/`a21`
/// switch. Rewards are +2 in `s1` and −2 in `s2`.
fn example1() -> MdpInstance {
    MdpInstance::new(
        "example1",
        names(&["s1", "s2"]),
        vec![names(&["a11", "a12"]), names(&["a21", "a22"])],
        vec![
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        ],
        Rewards::StateAction(vec![vec![2.0, 2.0], vec![-2.0, -2.0]]),
    )
    .expect("example1 is well formed")
}

/// Three states and three actions per state.
fn example2() -> MdpInstance {
    // P(j | i, a) as [i][a][j].
    let mut kernel = vec![
        vec![
            vec![0.4688, 0.0741, 0.4571],
            vec![0.3564, 0.0857, 0.5579],
            vec![0.3991, 0.1457, 0.4552],
        ],
        vec![
            vec![0.1083, 0.1839, 0.7078],
            vec![0.7012, 0.1863, 0.1124],
            vec![0.4370, 0.4373, 0.1257],
        ],
        vec![
            vec![0.5457, 0.1834, 0.2709],
            vec![0.4102, 0.4357, 0.1541],
            vec![0.1460, 0.3986, 0.4554],
        ],
    ];
    // The published (state 2, action 2) column sums to 0.9999.
    let row = &mut kernel[1][1];
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);

    MdpInstance::new(
        "example2",
        names(&["1", "2", "3"]),
        vec![names(&["1", "2", "3"]); 3],
        kernel,
        Rewards::StateAction(vec![
            vec![5.0, 69.0, 13.0],
            vec![94.0, 4.0, 71.0],
            vec![77.0, 70.0, 39.0],
        ]),
    )
    .expect("example2 is well formed")
}

const ENDOWMENT_FUNDS: f64 = 1000.0;
const BOND_RATE: f64 = 0.02;
const STOCK_RATE: [f64; 2] = [-0.05, 0.1];
const TRANSACTION_COST: f64 = 0.005;
const MARKET_KERNEL: [[f64; 2]; 2] = [[0.8, 0.2], [0.3, 0.7]];
const STOCK_SHARES: [f64; 3] = [0.2, 0.5, 0.8];

/// One-step return of moving the stock share from `held` to `share` when
/// the market moves to `next_market`.
pub(crate) fn endowment_reward(held: f64, share: f64, next_market: usize) -> f64 {
    let raw = ENDOWMENT_FUNDS
        * ((1.0 - share) * BOND_RATE + share * STOCK_RATE[next_market]
            - TRANSACTION_COST * (share - held).abs());
    // Returns are exact multiples of 1/2; strip binary rounding noise.
    (raw * 1e6).round() / 1e6
}

/// States are `(market, held stock share)`; actions set the next stock
/// share. Each state lists the action that keeps its current share first.
fn endowment() -> MdpInstance {
    let mut states = Vec::new();
    let mut coords = Vec::new();
    for market in 0..2 {
        for (w, share) in STOCK_SHARES.iter().enumerate() {
            states.push(format!("({market},{share})"));
            coords.push((market, w));
        }
    }
    let n = states.len();
    let state_of = |market: usize, w: usize| market * STOCK_SHARES.len() + w;

    let mut actions = Vec::with_capacity(n);
    let mut kernel = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    for &(market, held) in &coords {
        let order: Vec<usize> = std::iter::once(held)
            .chain((0..STOCK_SHARES.len()).filter(|&w| w != held))
            .collect();
        actions.push(order.iter().map(|&w| STOCK_SHARES[w].to_string()).collect());
        let mut rows = Vec::new();
        let mut rew = Vec::new();
        for &w in &order {
            let mut row = vec![0.0; n];
            let mut r = vec![0.0; n];
            for (j, &(next_market, _)) in coords.iter().enumerate() {
                r[j] = endowment_reward(STOCK_SHARES[held], STOCK_SHARES[w], next_market);
            }
            for (next_market, &p) in MARKET_KERNEL[market].iter().enumerate() {
                row[state_of(next_market, w)] = p;
            }
            rows.push(row);
            rew.push(r);
        }
        kernel.push(rows);
        rewards.push(rew);
    }
    MdpInstance::new(
        "endowment",
        states,
        actions,
        kernel,
        Rewards::NextState(rewards),
    )
    .expect("endowment is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn builtins_validate() {
        for name in BUILTIN_NAMES {
            let inst = builtin(name).unwrap();
            assert!(validate(&inst).is_valid(), "{name}: {:?}", validate(&inst));
        }
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin("example4"), Err(Error::UnknownBuiltin(_))));
    }

    #[test]
    fn example2_table_values() {
        let inst = builtin("example2").unwrap();
        // state 2, action 1
        assert_eq!(inst.reward(1, 0, 0), 94.0);
        assert_eq!(inst.prob(0, 2, 0), 0.3991);
        assert_eq!(inst.prob(2, 0, 2), 0.2709);
        assert!((inst.prob(1, 1, 0) - 0.7012 / 0.9999).abs() < 1e-15);
    }

    #[test]
    fn example1_kernel() {
        let inst = builtin("example1").unwrap();
        assert_eq!(inst.prob(0, 0, 0), 1.0);
        assert_eq!(inst.prob(0, 1, 1), 1.0);
        assert_eq!(inst.prob(1, 0, 0), 1.0);
        assert_eq!(inst.prob(1, 1, 1), 1.0);
    }

    #[test]
    fn endowment_reward_formula() {
        let inst = builtin("endowment").unwrap();
        let s = inst.state_index("(1,0.8)").unwrap();
        let a = inst.action_index(s, "0.8").unwrap();
        let next = inst.state_index("(1,0.8)").unwrap();
        assert_eq!(inst.reward(s, a, next), 84.0);
        assert_eq!(inst.prob(s, a, next), 0.7);
        // 1000·(0.8·0.02 + 0.2·(−0.05) − 0.005·0.3)
        let s = inst.state_index("(0,0.5)").unwrap();
        let a = inst.action_index(s, "0.2").unwrap();
        assert_eq!(inst.reward(s, a, inst.state_index("(0,0.2)").unwrap()), 4.5);
    }

    #[test]
    fn endowment_hold_action_listed_first() {
        let inst = builtin("endowment").unwrap();
        for (i, s) in inst.states().iter().enumerate() {
            assert!(s.ends_with(&format!(",{})", inst.actions(i)[0])), "{s}");
        }
    }
}
