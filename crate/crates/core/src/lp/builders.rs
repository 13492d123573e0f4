//! Builders for the linear programs of the saddle-point reduction.
//!
//! Occupation-measure variables are named `x_i_a` by state and action
//! index; excess variables `w_i_a` (or `w_i_a_j` with next-state rewards).

use super::{LinearProgram, Relation, Sense};
use crate::chains::VertexSet;
use crate::error::{Error, Result};
use crate::model::MdpInstance;
use crate::risk::{breakpoints, saddle_coefficient, RiskParams};

/// How tail rows of the dual program are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailRows {
    /// One row per distinct reward value.
    #[default]
    DistinctValues,
    /// One row per state-action pair (per reachable triple with next-state
    /// rewards), duplicates included.
    PerPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DualLpOptions {
    pub tail_rows: TailRows,
}

fn check_alpha(params: &RiskParams) -> Result<()> {
    if !(0.0..1.0).contains(&params.alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1), got {}",
            params.alpha
        )));
    }
    Ok(())
}

/// Adds `x_i_a ≥ 0` for every pair, in pair order.
fn add_occupation_vars(lp: &mut LinearProgram, instance: &MdpInstance) -> Result<Vec<usize>> {
    instance
        .pairs()
        .map(|(i, a)| lp.add_variable(format!("x_{i}_{a}"), 0.0, f64::INFINITY))
        .collect()
}

/// Flow balance per state and normalization: the stationary-distribution
/// polytope.
fn add_polytope_rows(lp: &mut LinearProgram, instance: &MdpInstance, xs: &[usize]) -> Result<()> {
    for j in 0..instance.n_states() {
        let mut coeffs = Vec::new();
        for (k, (i, a)) in instance.pairs().enumerate() {
            let mut c = -instance.prob(i, a, j);
            if i == j {
                c += 1.0;
            }
            coeffs.push((xs[k], c));
        }
        lp.add_constraint(format!("balance_{j}"), coeffs, Relation::Eq, 0.0)?;
    }
    lp.add_constraint(
        "normalization",
        xs.iter().map(|&x| (x, 1.0)).collect(),
        Relation::Eq,
        1.0,
    )?;
    Ok(())
}

fn saddle_row(
    instance: &MdpInstance,
    xs: &[usize],
    y: f64,
    params: &RiskParams,
) -> Vec<(usize, f64)> {
    instance
        .pairs()
        .enumerate()
        .map(|(k, (i, a))| (xs[k], saddle_coefficient(instance, i, a, y, params)))
        .collect()
}

/// `max z₂` subject to `v(x, y) ≥ z₂` at every reward endpoint `y` and
/// `x` in the stationary-distribution polytope.
pub fn build_dual_lp(
    instance: &MdpInstance,
    params: &RiskParams,
    options: &DualLpOptions,
) -> Result<LinearProgram> {
    check_alpha(params)?;
    let mut lp = LinearProgram::new(format!("dual-{}", instance.name()), Sense::Maximize);
    let xs = add_occupation_vars(&mut lp, instance)?;
    let z = lp.add_variable("z2", f64::NEG_INFINITY, f64::INFINITY)?;
    lp.set_objective(z, 1.0);

    let endpoints: Vec<(String, f64)> = match options.tail_rows {
        TailRows::DistinctValues => breakpoints(instance)
            .values
            .iter()
            .enumerate()
            .map(|(k, &y)| (format!("tail_{k}"), y))
            .collect(),
        TailRows::PerPair => instance
            .pairs()
            .flat_map(|(i, a)| {
                let outcomes: Vec<(usize, f64)> = if instance.is_future_state_reward() {
                    (0..instance.n_states())
                        .filter(|&j| instance.prob(i, a, j) > 0.0)
                        .map(|j| (j, instance.reward(i, a, j)))
                        .collect()
                } else {
                    vec![(usize::MAX, instance.reward(i, a, 0))]
                };
                outcomes.into_iter().map(move |(j, y)| {
                    let name = if j == usize::MAX {
                        format!("tail_{i}_{a}")
                    } else {
                        format!("tail_{i}_{a}_{j}")
                    };
                    (name, y)
                })
            })
            .collect(),
    };
    for (name, y) in endpoints {
        let mut coeffs = saddle_row(instance, &xs, y, params);
        coeffs.push((z, -1.0));
        lp.add_constraint(name, coeffs, Relation::Ge, 0.0)?;
    }
    add_polytope_rows(&mut lp, instance, &xs)?;
    Ok(lp)
}

/// `min z₁` over `y ∈ [L_r, U_r]` subject to `v(x^l, y) ≤ z₁` at every
/// polytope vertex, with the excess `[r − y]⁺` carried by `w ≥ r − y`,
/// `w ≥ 0`.
pub fn build_primal_lp(
    instance: &MdpInstance,
    vertices: &VertexSet,
    params: &RiskParams,
) -> Result<LinearProgram> {
    check_alpha(params)?;
    if vertices.is_empty() {
        return Err(Error::InvalidParameter(
            "primal program needs at least one vertex".into(),
        ));
    }
    let (lo, hi) = instance.reward_bounds();
    let mut lp = LinearProgram::new(format!("primal-{}", instance.name()), Sense::Minimize);
    let y = lp.add_variable("y", lo, hi)?;
    let z = lp.add_variable("z1", f64::NEG_INFINITY, f64::INFINITY)?;
    lp.set_objective(z, 1.0);

    // Excess variables per pair with the conditional probability of each.
    let mut excess: Vec<Vec<(usize, f64)>> = Vec::with_capacity(instance.n_pairs());
    for (i, a) in instance.pairs() {
        let mut per_pair = Vec::new();
        if instance.is_future_state_reward() {
            for j in 0..instance.n_states() {
                let p = instance.prob(i, a, j);
                if p > 0.0 {
                    let w = lp.add_variable(format!("w_{i}_{a}_{j}"), 0.0, f64::INFINITY)?;
                    lp.add_constraint(
                        format!("excess_{i}_{a}_{j}"),
                        vec![(w, 1.0), (y, 1.0)],
                        Relation::Ge,
                        instance.reward(i, a, j),
                    )?;
                    per_pair.push((w, p));
                }
            }
        } else {
            let w = lp.add_variable(format!("w_{i}_{a}"), 0.0, f64::INFINITY)?;
            lp.add_constraint(
                format!("excess_{i}_{a}"),
                vec![(w, 1.0), (y, 1.0)],
                Relation::Ge,
                instance.reward(i, a, 0),
            )?;
            per_pair.push((w, 1.0));
        }
        excess.push(per_pair);
    }

    let tail = params.tail_weight();
    for (l, vertex) in vertices.vertices.iter().enumerate() {
        let mut coeffs = vec![(z, -1.0)];
        let mut mass = 0.0;
        let mut mean = 0.0;
        for (k, (i, a)) in instance.pairs().enumerate() {
            let xv = vertex.x.values()[k];
            if xv == 0.0 {
                continue;
            }
            mass += xv;
            mean += xv * instance.expected_reward(i, a);
            for &(w, p) in &excess[k] {
                coeffs.push((w, xv * p * tail));
            }
        }
        coeffs.push((y, mass));
        lp.add_constraint(
            format!("vertex_{l}"),
            coeffs,
            Relation::Le,
            -params.beta * mean,
        )?;
    }
    Ok(lp)
}

/// `min_y max_x v(x, y)` as one program: the inner maximization over the
/// polytope is replaced by its LP dual (gain `g`, bias `h` with `h_0 = 0`),
/// giving `min g` subject to
/// `g + h_i − Σ_j P(j|i,a) h_j ≥ y + E[w]/(1−α) + β E[r]` per pair and
/// `w ≥ r − y`, `w ≥ 0`. Its optimal `y` minimizes the upper envelope
/// `max_x v(x, ·)`, which may lie strictly between reward values.
pub fn build_minmax_lp(instance: &MdpInstance, params: &RiskParams) -> Result<LinearProgram> {
    check_alpha(params)?;
    let (lo, hi) = instance.reward_bounds();
    let mut lp = LinearProgram::new(format!("minmax-{}", instance.name()), Sense::Minimize);
    let y = lp.add_variable("y", lo, hi)?;
    let g = lp.add_variable("g", f64::NEG_INFINITY, f64::INFINITY)?;
    lp.set_objective(g, 1.0);
    let h: Vec<usize> = (0..instance.n_states())
        .map(|i| {
            let free = if i == 0 { 0.0 } else { f64::INFINITY };
            lp.add_variable(format!("h_{i}"), -free, free)
        })
        .collect::<Result<_>>()?;
    let tail = params.tail_weight();
    for (i, a) in instance.pairs() {
        let mut coeffs = vec![(g, 1.0), (h[i], 1.0), (y, -1.0)];
        for (j, &hj) in h.iter().enumerate() {
            let p = instance.prob(i, a, j);
            if p > 0.0 {
                coeffs.push((hj, -p));
            }
        }
        let outcomes: Vec<(String, f64, f64)> = if instance.is_future_state_reward() {
            (0..instance.n_states())
                .filter(|&j| instance.prob(i, a, j) > 0.0)
                .map(|j| {
                    (
                        format!("w_{i}_{a}_{j}"),
                        instance.reward(i, a, j),
                        instance.prob(i, a, j),
                    )
                })
                .collect()
        } else {
            vec![(format!("w_{i}_{a}"), instance.reward(i, a, 0), 1.0)]
        };
        for (name, r, p) in outcomes {
            let w = lp.add_variable(name.clone(), 0.0, f64::INFINITY)?;
            lp.add_constraint(
                format!("excess{}", &name[1..]),
                vec![(w, 1.0), (y, 1.0)],
                Relation::Ge,
                r,
            )?;
            coeffs.push((w, -tail * p));
        }
        lp.add_constraint(
            format!("gain_{i}_{a}"),
            coeffs,
            Relation::Ge,
            params.beta * instance.expected_reward(i, a),
        )?;
    }
    Ok(lp)
}

/// Lowers every excess variable of a primal solution to `[r − y]⁺`.
///
/// Optimal solutions may leave excess variables above `[r − y]⁺` when
/// they only enter inactive vertex rows; lowering them keeps every row
/// feasible and leaves `z₁` unchanged.
pub fn tighten_excess(
    primal: &LinearProgram,
    instance: &MdpInstance,
    values: &[f64],
) -> Result<Vec<f64>> {
    let y = primal
        .var("y")
        .map(|k| values[k])
        .ok_or_else(|| Error::InvalidParameter("program has no `y` variable".into()))?;
    let mut out = values.to_vec();
    for (i, a) in instance.pairs() {
        if instance.is_future_state_reward() {
            for j in 0..instance.n_states() {
                if let Some(k) = primal.var(&format!("w_{i}_{a}_{j}")) {
                    out[k] = (instance.reward(i, a, j) - y).max(0.0);
                }
            }
        } else if let Some(k) = primal.var(&format!("w_{i}_{a}")) {
            out[k] = (instance.reward(i, a, 0) - y).max(0.0);
        }
    }
    Ok(out)
}

/// Re-solves the dual at a known VaR level `y*` with the two quantile
/// rows `P(R ≤ y*) ≥ α` and `P(R ≤ y* − δ) + x₀ = α`. Vertex solutions
/// of this program randomize in at most one state.
pub fn build_sparsify_lp(
    instance: &MdpInstance,
    y_star: f64,
    params: &RiskParams,
    delta: Option<f64>,
) -> Result<LinearProgram> {
    check_alpha(params)?;
    let mut lp = LinearProgram::new(format!("sparsify-{}", instance.name()), Sense::Maximize);
    let xs = add_occupation_vars(&mut lp, instance)?;
    let x0 = lp.add_variable("x0", 0.0, f64::INFINITY)?;
    for (x, c) in saddle_row(instance, &xs, y_star, params) {
        lp.set_objective(x, c);
    }
    let mut at_most = Vec::new();
    let mut strictly_below = Vec::new();
    for (k, (i, a)) in instance.pairs().enumerate() {
        let mut le = 0.0;
        let mut lt = 0.0;
        for (v, p) in instance.reward_outcomes(i, a) {
            if v <= y_star {
                le += p;
            }
            if delta.is_some_and(|d| y_star - v >= d) {
                lt += p;
            }
        }
        at_most.push((xs[k], -le));
        strictly_below.push((xs[k], lt));
    }
    strictly_below.push((x0, 1.0));
    lp.add_constraint("quantile_at_most", at_most, Relation::Le, -params.alpha)?;
    lp.add_constraint("quantile_below", strictly_below, Relation::Eq, params.alpha)?;
    add_polytope_rows(&mut lp, instance, &xs)?;
    Ok(lp)
}

/// `max_x v(x, y)` over the stationary-distribution polytope at a fixed
/// `y`: an average-reward program with rewards `y + [r − y]⁺/(1−α) + βr`.
pub fn build_average_lp(
    instance: &MdpInstance,
    y: f64,
    params: &RiskParams,
) -> Result<LinearProgram> {
    check_alpha(params)?;
    let mut lp = LinearProgram::new(format!("average-{}", instance.name()), Sense::Maximize);
    let xs = add_occupation_vars(&mut lp, instance)?;
    for (x, c) in saddle_row(instance, &xs, y, params) {
        lp.set_objective(x, c);
    }
    add_polytope_rows(&mut lp, instance, &xs)?;
    Ok(lp)
}

/// Constraint count of the dual program as tallied with sign rows:
/// `|𝒮| + 2|𝒦| + 1`.
pub fn dual_paper_count(instance: &MdpInstance) -> usize {
    instance.n_states() + 2 * instance.n_pairs() + 1
}

/// Constraint count of the primal program as tallied with sign and bound
/// rows: `L + 2|𝒦| + 2`.
pub fn primal_paper_count(instance: &MdpInstance, n_vertices: usize) -> usize {
    n_vertices + 2 * instance.n_pairs() + 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{polytope_vertices, DEFAULT_POLICY_CAP};
    use crate::lp::{solve, LpStatus, SolveOptions};
    use crate::model::{builtin, random_instance, Rewards};

    fn single(c: f64) -> MdpInstance {
        MdpInstance::new(
            "single",
            vec!["s".into()],
            vec![vec!["a".into()]],
            vec![vec![vec![1.0]]],
            Rewards::StateAction(vec![vec![c]]),
        )
        .unwrap()
    }

    fn opt(lp: &LinearProgram) -> f64 {
        let sol = solve(lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(lp.max_violation(&sol.values) <= 1e-8);
        sol.objective
    }

    #[test]
    fn dual_on_example2() {
        let inst = builtin("example2").unwrap();
        let params = RiskParams::cvar(0.7).unwrap();
        let lp = build_dual_lp(&inst, &params, &DualLpOptions::default()).unwrap();
        assert_eq!(lp.structural_rows(), 9 + 3 + 1);
        let v = opt(&lp);
        assert!((v - 93.24).abs() < 1e-2, "{v}");

        let per_pair = build_dual_lp(
            &inst,
            &params,
            &DualLpOptions {
                tail_rows: TailRows::PerPair,
            },
        )
        .unwrap();
        assert_eq!(per_pair.structural_rows(), 9 + 3 + 1);
        assert!((opt(&per_pair) - v).abs() < 1e-9);
    }

    #[test]
    fn forced_single_pair() {
        let params = RiskParams::new(0.6, 0.5).unwrap();
        let inst = single(3.0);
        let dual = build_dual_lp(&inst, &params, &DualLpOptions::default()).unwrap();
        assert!((opt(&dual) - 4.5).abs() < 1e-12);

        let cvar = RiskParams::cvar(0.6).unwrap();
        let vertices = polytope_vertices(&inst, DEFAULT_POLICY_CAP).unwrap();
        let primal = build_primal_lp(&inst, &vertices, &cvar).unwrap();
        let sol = solve(&primal, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 3.0).abs() < 1e-12);
        assert!((sol.value(&primal, "y").unwrap() - 3.0).abs() < 1e-12);

        let sparse = build_sparsify_lp(&inst, 3.0, &cvar, None).unwrap();
        let sol = solve(
            &sparse,
            &SolveOptions {
                require_vertex: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((sol.value(&sparse, "x_0_0").unwrap() - 1.0).abs() < 1e-12);
        assert!((sol.value(&sparse, "x0").unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn primal_matches_dual_and_excess_is_tight() {
        let inst = builtin("example2").unwrap();
        let params = RiskParams::cvar(0.7).unwrap();
        let vertices = polytope_vertices(&inst, DEFAULT_POLICY_CAP).unwrap();
        let primal = build_primal_lp(&inst, &vertices, &params).unwrap();
        assert_eq!(
            primal_paper_count(&inst, vertices.len()),
            vertices.len() + 20
        );
        let sol = solve(&primal, &SolveOptions::default()).unwrap();
        let dual = build_dual_lp(&inst, &params, &DualLpOptions::default()).unwrap();
        assert!((sol.objective - opt(&dual)).abs() < 2e-6);
        let y = sol.value(&primal, "y").unwrap();
        for (i, a) in inst.pairs() {
            let w = sol.value(&primal, &format!("w_{i}_{a}")).unwrap();
            assert!(w >= (inst.reward(i, a, 0) - y).max(0.0) - 1e-8);
        }
        let tight = tighten_excess(&primal, &inst, &sol.values).unwrap();
        assert!(primal.max_violation(&tight) <= 1e-8);
        assert_eq!(primal.objective_value(&tight), sol.objective);
        for (i, a) in inst.pairs() {
            let w = tight[primal.var(&format!("w_{i}_{a}")).unwrap()];
            assert!((w - (inst.reward(i, a, 0) - y).max(0.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn average_lp_envelope_is_convex_over_endpoints() {
        for seed in 0..10 {
            let inst = random_instance(seed, 4, 3, (-10.0, 10.0)).unwrap();
            let params = RiskParams::new(0.8, 0.3).unwrap();
            let ys = breakpoints(&inst).values;
            let env: Vec<f64> = ys
                .iter()
                .map(|&y| opt(&build_average_lp(&inst, y, &params).unwrap()))
                .collect();
            for k in 1..ys.len() - 1 {
                let lam = (ys[k + 1] - ys[k]) / (ys[k + 1] - ys[k - 1]);
                let chord = lam * env[k - 1] + (1.0 - lam) * env[k + 1];
                assert!(env[k] <= chord + 1e-8, "seed {seed}, k {k}");
            }
        }
    }

    #[test]
    fn average_lp_at_top_endpoint() {
        let inst = builtin("example2").unwrap();
        let params = RiskParams::cvar(0.7).unwrap();
        assert!((opt(&build_average_lp(&inst, 94.0, &params).unwrap()) - 94.0).abs() < 1e-9);
    }

    #[test]
    fn minmax_matches_dual() {
        for seed in 0..10 {
            let inst = random_instance(seed, 4, 3, (-10.0, 10.0)).unwrap();
            let params = RiskParams::new(0.75, 0.2).unwrap();
            let dual = opt(&build_dual_lp(&inst, &params, &DualLpOptions::default()).unwrap());
            let lp = build_minmax_lp(&inst, &params).unwrap();
            let sol = solve(&lp, &SolveOptions::default()).unwrap();
            assert!((sol.objective - dual).abs() < 1e-7, "seed {seed}");
            // The envelope at the level found equals the optimum.
            let y = sol.value(&lp, "y").unwrap();
            assert!((opt(&build_average_lp(&inst, y, &params).unwrap()) - dual).abs() < 1e-7);
        }
    }

    #[test]
    fn example2_envelope_minimum_is_between_rewards() {
        let inst = builtin("example2").unwrap();
        let params = RiskParams::cvar(0.7).unwrap();
        let lp = build_minmax_lp(&inst, &params).unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        let y = sol.value(&lp, "y").unwrap();
        assert!(y > 70.0 && y < 71.0, "{y}");
        let at_70 = opt(&build_average_lp(&inst, 70.0, &params).unwrap());
        assert!(at_70 - sol.objective > 1e-4);
    }

    #[test]
    fn paper_counts() {
        let inst = builtin("example2").unwrap();
        assert_eq!(dual_paper_count(&inst), 3 + 18 + 1);
    }

    #[test]
    fn rejects_alpha_one() {
        let params = RiskParams {
            alpha: 1.0,
            beta: 0.0,
        };
        assert!(build_average_lp(&single(1.0), 1.0, &params).is_err());
    }
}
