//! End-to-end results on the three worked instances.

use cvar_mdp::chains::DEFAULT_POLICY_CAP;
use cvar_mdp::evaluate::{
    cvar_sequence, example1_policy, limsup_liminf_estimate, Example1Schedule,
};
use cvar_mdp::model::builtin;
use cvar_mdp::risk::RiskParams;
use cvar_mdp::solver::{
    enumerate_deterministic, solve_cvar, Flag, SolveMode, SolverOptions, CERT_TOL,
};

fn dual_primal() -> SolverOptions {
    SolverOptions {
        mode: SolveMode::DualPrimal,
        ..SolverOptions::default()
    }
}

#[test]
fn three_state_instance_needs_randomization() {
    let inst = builtin("example2").unwrap();
    let params = RiskParams::cvar(0.7).unwrap();
    let sol = solve_cvar(&inst, &params, &dual_primal()).unwrap();
    assert!((sol.v_star - 93.24).abs() < 0.01, "{}", sol.v_star);
    assert_eq!(sol.n_rand, 1);
    let p = &sol.policy;
    assert_eq!(p.rule(0), &[0.0, 0.0, 1.0]);
    assert_eq!(p.rule(1), &[1.0, 0.0, 0.0]);
    assert!((p.prob(2, 0) - 0.0255).abs() < 1e-3);
    assert!((p.prob(2, 2) - 0.9745).abs() < 1e-3);

    let c = &sol.certificates;
    assert!(c.minimax_gap.unwrap() <= CERT_TOL);
    assert!(c.saddle_certified());
    let best = c.deterministic_best.unwrap();
    assert!((best - 92.6675).abs() < 1e-4);
    assert!(best < sol.v_star - 0.5);

    let table = enumerate_deterministic(&inst, &params, DEFAULT_POLICY_CAP).unwrap();
    assert_eq!(table.rows.len(), 27);
    assert_eq!(table.best().value, best);
}

#[test]
fn endowment_mean_cvar_policy() {
    let inst = builtin("endowment").unwrap();
    let params = RiskParams::new(0.9, 0.5).unwrap();
    let sol = solve_cvar(&inst, &params, &dual_primal()).unwrap();
    assert!((sol.v_star - 96.84).abs() < 1e-6, "{}", sol.v_star);
    assert_eq!(sol.y_star, 84.0);
    assert!((sol.cvar_component - 84.0).abs() < 1e-6);
    assert!((sol.mean_component - 25.68).abs() < 1e-6);
    assert_eq!(sol.n_rand, 0);

    let expected = [
        ("(0,0.2)", "0.2"),
        ("(0,0.5)", "0.5"),
        ("(0,0.8)", "0.2"),
        ("(1,0.2)", "0.8"),
        ("(1,0.5)", "0.5"),
        ("(1,0.8)", "0.8"),
    ];
    for (state, action) in expected {
        let i = inst.state_index(state).unwrap();
        let a = inst.action_index(i, action).unwrap();
        assert_eq!(sol.policy.prob(i, a), 1.0, "{state}");
    }

    let c = &sol.certificates;
    assert!(c.certified(), "{c:?}");
    assert!((c.deterministic_best.unwrap() - sol.v_star).abs() < 1e-9);
    assert!(c.flags.contains(&Flag::AssumptionViolation));
}

#[test]
fn oscillating_schedule_cesaro_limit_points() {
    let inst = builtin("example1").unwrap();
    // Four full blocks of each sign; blocks end at (3^(k+1) − 1)/2 − 1.
    let horizon = (3usize.pow(9) - 1) / 2;
    let seq = cvar_sequence(
        &inst,
        &Example1Schedule::new(&inst).unwrap(),
        0,
        horizon,
        0.5,
    )
    .unwrap();
    for (t, &c) in seq.per_step.iter().enumerate() {
        let expected = if cvar_mdp::evaluate::example1_block(t as u64).is_multiple_of(2) {
            2.0
        } else {
            -2.0
        };
        assert_eq!(c, expected, "t = {t}");
    }
    for k in 1..9u32 {
        let end = (3usize.pow(k + 1) - 1) / 2 - 1;
        let n = 3f64.powi(k as i32 + 1);
        let expected = if k % 2 == 0 {
            (n + 1.0) / (n - 1.0)
        } else {
            -1.0
        };
        assert!((seq.cesaro[end] - expected).abs() < 1e-12, "k = {k}");
    }
    let est = limsup_liminf_estimate(&seq, horizon - (3usize.pow(7) - 1) / 2).unwrap();
    assert!(est.limsup > 1.0 && est.limsup < 1.01);
    assert_eq!(est.liminf, -1.0);
}

#[test]
fn stored_schedule_matches_rule_based_schedule() {
    let inst = builtin("example1").unwrap();
    let stored = example1_policy(&inst, 200).unwrap();
    let a = cvar_sequence(&inst, &stored, 0, 200, 0.5).unwrap();
    let b = cvar_sequence(&inst, &Example1Schedule::new(&inst).unwrap(), 0, 200, 0.5).unwrap();
    assert_eq!(a.per_step, b.per_step);
}

#[test]
fn oscillating_instance_solves_with_assumption_flag() {
    let inst = builtin("example1").unwrap();
    let params = RiskParams::cvar(0.5).unwrap();
    // Communicating, so solving proceeds with a flag; the best stationary
    // policy stays in s1 forever.
    let sol = solve_cvar(&inst, &params, &SolverOptions::default()).unwrap();
    assert!(sol.certificates.flags.contains(&Flag::AssumptionViolation));
    assert!((sol.v_star - 2.0).abs() < 1e-9);
}
