//! The saddle-point pipeline: dual program, VaR recovery, sparsification,
//! policy extraction and certification against independent oracles.

use rayon::prelude::*;
use serde::Serialize;

use crate::chains::{
    check_assumption, class_stationary_distributions, classify_chain, is_communicating,
    polytope_vertices, DEFAULT_POLICY_CAP,
};
use crate::error::{Error, Result};
use crate::lp::{
    build_average_lp, build_dual_lp, build_minmax_lp, build_primal_lp, build_sparsify_lp, solve,
    tighten_excess, DualLpOptions, LinearProgram, SolveOptions as LpOptions, TailRows,
};
use crate::model::{
    extract_policy, n_randomizations, validate, DeterministicPolicy, MdpInstance,
    OccupationMeasure, StationaryPolicy, RANDOMIZATION_TOL,
};
use crate::risk::{
    breakpoints, cvar_right, reward_distribution, saddle_value, var_with_tol, RiskParams,
};

/// Tolerance on saddle, oracle and minimax gaps of a certified solution.
pub const CERT_TOL: f64 = 2e-6;
/// `x₀` at or below this level means the quantile row is tight.
pub const QUANTILE_TIE_TOL: f64 = 1e-9;
/// LP values below this are treated as exact zeros.
const ZERO_CLEAN: f64 = 1e-12;
/// Cumulative-probability slack when reading VaR off an LP solution.
const VAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    #[default]
    DualOnly,
    DualPrimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// `x₀ = 0` in the sparsification program; the unsparsified solution
    /// is returned.
    QuantileTie,
    /// Some deterministic policy is not unichain and aperiodic.
    AssumptionViolation,
    /// Too many deterministic policies to check the assumption.
    AssumptionUnchecked,
    /// The returned policy's chain is not unichain and aperiodic.
    PolicyNotUnichain,
    /// The sparsified value differs from the dual optimum; the unsparsified
    /// solution is returned.
    SparsifyMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub mode: SolveMode,
    pub tail_rows: TailRows,
    /// Proceed when the assumption check fails.
    pub waive_assumption: bool,
    /// Cap on deterministic policy enumeration.
    pub policy_cap: u128,
    pub randomization_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::DualOnly,
            tail_rows: TailRows::DistinctValues,
            waive_assumption: false,
            policy_cap: DEFAULT_POLICY_CAP,
            randomization_tol: RANDOMIZATION_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    /// `max_x v(x, y*) − v*` at the returned VaR level `y*`.
    pub left_gap: f64,
    /// `v* − min_y v(x*, y)`.
    pub right_gap: f64,
    /// `|v* − endpoint-scan value|`.
    pub oracle_gap: f64,
    pub oracle_value: f64,
    /// Minimizer of the envelope `max_x v(x, ·)`, which need not be a
    /// reward value.
    pub saddle_level: f64,
    /// `max_x v(x, saddle_level) − v*`.
    pub saddle_left_gap: f64,
    /// `|v* − min_y max_x v(x, y)|`, the latter from one linear program.
    pub minmax_gap: f64,
    /// `|v* − (CVaR + β·mean)|` recomputed from the reward law of `x*`.
    pub consistency_gap: f64,
    /// Best value over deterministic policies, when enumeration is in cap.
    pub deterministic_best: Option<f64>,
    /// `|z₁* − z₂*|` in dual+primal mode.
    pub minimax_gap: Option<f64>,
    pub flags: Vec<Flag>,
}

impl VerificationReport {
    /// Saddle gaps at `y*`, the endpoint scan, the value recomputation and
    /// (when run) the primal program all within [`CERT_TOL`].
    pub fn certified(&self) -> bool {
        self.left_gap.abs() <= CERT_TOL
            && self.right_gap.abs() <= CERT_TOL
            && self.oracle_gap <= CERT_TOL
            && self.consistency_gap <= CERT_TOL
            && self.minimax_gap.is_none_or(|g| g <= CERT_TOL)
    }

    /// `(x*, saddle_level)` is a saddle point of `v` with value `v*`.
    pub fn saddle_certified(&self) -> bool {
        self.saddle_left_gap.abs() <= CERT_TOL
            && self.right_gap.abs() <= CERT_TOL
            && self.minmax_gap <= CERT_TOL
            && self.consistency_gap <= CERT_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimalSolution {
    pub z1: f64,
    pub y: f64,
    pub n_vertices: usize,
    pub structural_rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleSolution {
    pub v_star: f64,
    pub x_star: OccupationMeasure,
    pub y_star: f64,
    pub policy: StationaryPolicy,
    pub n_rand: usize,
    pub cvar_component: f64,
    pub mean_component: f64,
    pub params: RiskParams,
    pub dual_rows: usize,
    pub primal: Option<PrimalSolution>,
    pub certificates: VerificationReport,
}

fn clean(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| if v < ZERO_CLEAN { 0.0 } else { v })
        .collect()
}

fn lp_optimum(lp: &LinearProgram, require_vertex: bool) -> Result<crate::lp::LpSolution> {
    solve(
        lp,
        &LpOptions {
            require_vertex,
            ..LpOptions::default()
        },
    )?
    .require_optimal()
}

fn occupation_from(
    lp: &LinearProgram,
    instance: &MdpInstance,
    values: &[f64],
) -> OccupationMeasure {
    let x: Vec<f64> = instance
        .pairs()
        .map(|(i, a)| values[lp.var(&format!("x_{i}_{a}")).expect("occupation variable")])
        .collect();
    OccupationMeasure::from_values(clean(&x))
}

/// Checks the unichain/aperiodic assumption over deterministic policies.
///
/// A failing instance still proceeds, flagged, when it is communicating
/// (every state reachable from every other under some policy): the
/// long-run optimum is then independent of the initial state. Otherwise
/// the caller must waive the check.
pub fn assumption_gate(instance: &MdpInstance, cap: u128, waive: bool) -> Result<Vec<Flag>> {
    match check_assumption(instance, cap) {
        Ok(report) if report.holds() => Ok(Vec::new()),
        Ok(report) => {
            if waive || is_communicating(instance) {
                Ok(vec![Flag::AssumptionViolation])
            } else {
                let first = &report.violators[0];
                Err(Error::Assumption(format!(
                    "{} of {} deterministic policies are not unichain and aperiodic (first: {}); \
                     the instance is not communicating",
                    report.violators.len(),
                    report.policies_checked,
                    first.policy.describe(instance)
                )))
            }
        }
        Err(Error::EnumerationCap { .. }) if waive => Ok(vec![Flag::AssumptionUnchecked]),
        Err(e) => Err(e),
    }
}

/// Solves `max_x min_y v(x, y)` and certifies the result.
pub fn solve_cvar(
    instance: &MdpInstance,
    params: &RiskParams,
    options: &SolverOptions,
) -> Result<SaddleSolution> {
    let report = validate(instance);
    if !report.is_valid() {
        let first = &report.violations[0];
        return Err(Error::InvalidInstance(format!(
            "{first} ({} violation(s))",
            report.violations.len()
        )));
    }
    let mut flags = assumption_gate(instance, options.policy_cap, options.waive_assumption)?;

    let dual = build_dual_lp(
        instance,
        params,
        &DualLpOptions {
            tail_rows: options.tail_rows,
        },
    )?;
    let dual_sol = lp_optimum(&dual, false).map_err(|e| match e {
        Error::LpStatus(status) => Error::InvalidInstance(format!("dual program is {status}")),
        other => other,
    })?;
    let v_star = dual_sol.objective;
    let x_dual = occupation_from(&dual, instance, &dual_sol.values);
    let y_star = var_with_tol(
        &reward_distribution(instance, &x_dual),
        params.alpha,
        VAR_TOL,
    );

    let (x_star, sparse_flag) = sparsify(instance, &x_dual, y_star, params, v_star)?;
    flags.extend(sparse_flag);

    let policy = extract_policy(instance, &x_star);
    let n_rand = n_randomizations(&policy, options.randomization_tol);
    if !classify_chain(instance, &policy).is_unichain_aperiodic() {
        flags.push(Flag::PolicyNotUnichain);
    }

    let dist = reward_distribution(instance, &x_star);
    let cvar_component = cvar_right(&dist, params.alpha);
    let mean_component = dist.mean();

    let primal = match options.mode {
        SolveMode::DualOnly => None,
        SolveMode::DualPrimal => {
            let p = solve_primal(instance, params, options.policy_cap)?;
            if (p.z1 - v_star).abs() > CERT_TOL {
                return Err(Error::Inconsistent(format!(
                    "primal optimum {} and dual optimum {v_star} differ",
                    p.z1
                )));
            }
            Some(p)
        }
    };

    let gaps = verify_saddle(instance, &x_star, y_star, v_star, params)?;
    let oracle = endpoint_scan_oracle(instance, params)?;
    let level = saddle_level(instance, params)?;
    let saddle_gaps = verify_saddle(instance, &x_star, level.y, v_star, params)?;
    let deterministic_best = match enumerate_deterministic(instance, params, options.policy_cap) {
        Ok(table) => Some(table.best().value),
        Err(Error::EnumerationCap { .. }) => None,
        Err(e) => return Err(e),
    };
    flags.sort();
    flags.dedup();
    let certificates = VerificationReport {
        left_gap: gaps.left_gap,
        right_gap: gaps.right_gap,
        oracle_gap: (v_star - oracle.value).abs(),
        oracle_value: oracle.value,
        saddle_level: level.y,
        saddle_left_gap: saddle_gaps.left_gap,
        minmax_gap: (v_star - level.value).abs(),
        consistency_gap: (v_star - (cvar_component + params.beta * mean_component)).abs(),
        deterministic_best,
        minimax_gap: primal.as_ref().map(|p| (p.z1 - v_star).abs()),
        flags,
    };
    Ok(SaddleSolution {
        v_star,
        x_star,
        y_star,
        policy,
        n_rand,
        cvar_component,
        mean_component,
        params: *params,
        dual_rows: dual.structural_rows(),
        primal,
        certificates,
    })
}

/// Solves the primal program over all polytope vertices.
pub fn solve_primal(
    instance: &MdpInstance,
    params: &RiskParams,
    cap: u128,
) -> Result<PrimalSolution> {
    let vertices = polytope_vertices(instance, cap)?;
    let lp = build_primal_lp(instance, &vertices, params)?;
    let sol = lp_optimum(&lp, false)?;
    let values = tighten_excess(&lp, instance, &sol.values)?;
    Ok(PrimalSolution {
        z1: lp.objective_value(&values),
        y: sol.value(&lp, "y").expect("primal has y"),
        n_vertices: vertices.len(),
        structural_rows: lp.structural_rows(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleLevel {
    /// `min_y max_x v(x, y)`.
    pub value: f64,
    pub y: f64,
}

/// Minimizer of the envelope `max_x v(x, ·)` and its value, from a single
/// polynomial-size program.
pub fn saddle_level(instance: &MdpInstance, params: &RiskParams) -> Result<SaddleLevel> {
    let lp = build_minmax_lp(instance, params)?;
    let sol = lp_optimum(&lp, false)?;
    Ok(SaddleLevel {
        value: sol.objective,
        y: sol.value(&lp, "y").expect("min-max program has y"),
    })
}

/// Replaces `x*` by a vertex of the sparsification program at `y*`, which
/// randomizes in at most one state. Falls back to `x*` with a flag when the
/// quantile row is tight or the value moves.
pub fn sparsify(
    instance: &MdpInstance,
    x_star: &OccupationMeasure,
    y_star: f64,
    params: &RiskParams,
    v_star: f64,
) -> Result<(OccupationMeasure, Option<Flag>)> {
    let bp = breakpoints(instance);
    if !bp.contains(y_star) {
        return Err(Error::Inconsistent(format!(
            "y* = {y_star} is not a reward value"
        )));
    }
    let lp = build_sparsify_lp(instance, y_star, params, bp.delta)?;
    let sol = lp_optimum(&lp, true).map_err(|e| match e {
        Error::LpStatus(status) => {
            Error::Inconsistent(format!("sparsification program is {status}"))
        }
        other => other,
    })?;
    let x0 = sol.value(&lp, "x0").expect("sparsify has x0");
    if x0 <= QUANTILE_TIE_TOL {
        return Ok((x_star.clone(), Some(Flag::QuantileTie)));
    }
    if (sol.objective - v_star).abs() > 1e-6 {
        return Ok((x_star.clone(), Some(Flag::SparsifyMismatch)));
    }
    Ok((occupation_from(&lp, instance, &sol.values), None))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleGaps {
    pub left_gap: f64,
    pub right_gap: f64,
}

/// Saddle-point certificate: `max_x v(x, y*) − v*` and
/// `v* − min_y v(x*, y)`, the latter over reward endpoints.
pub fn verify_saddle(
    instance: &MdpInstance,
    x_star: &OccupationMeasure,
    y_star: f64,
    v_star: f64,
    params: &RiskParams,
) -> Result<SaddleGaps> {
    let left = lp_optimum(&build_average_lp(instance, y_star, params)?, false)?.objective;
    let right = breakpoints(instance)
        .values
        .iter()
        .map(|&y| saddle_value(instance, x_star, y, params))
        .fold(f64::INFINITY, f64::min);
    Ok(SaddleGaps {
        left_gap: left - v_star,
        right_gap: v_star - right,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub y: f64,
    /// `max_x v(x, y)`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointScan {
    pub rows: Vec<ScanRow>,
    pub value: f64,
    /// Leftmost minimizing endpoint.
    pub argmin: f64,
}

/// `min_y max_x v(x, y)` evaluated exactly over reward endpoints, where
/// the convex piecewise-linear envelope attains its minimum.
pub fn endpoint_scan_oracle(instance: &MdpInstance, params: &RiskParams) -> Result<EndpointScan> {
    let rows: Vec<ScanRow> = breakpoints(instance)
        .values
        .par_iter()
        .map(|&y| {
            let value = lp_optimum(&build_average_lp(instance, y, params)?, false)?.objective;
            Ok(ScanRow { y, value })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, row) in rows.iter().enumerate() {
        if row.value < rows[best].value - 1e-9 {
            best = k;
        }
    }
    Ok(EndpointScan {
        value: rows[best].value,
        argmin: rows[best].y,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicRow {
    pub policy: DeterministicPolicy,
    /// Recurrent classes of the policy's chain.
    pub classes: usize,
    pub mean: f64,
    pub cvar: f64,
    /// `CVaR + β·mean`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicTable {
    /// Rows in canonical policy order.
    pub rows: Vec<DeterministicRow>,
    pub best: usize,
}

impl DeterministicTable {
    pub fn best(&self) -> &DeterministicRow {
        &self.rows[self.best]
    }
}

/// Exact long-run mean, CVaR and value of every deterministic policy.
///
/// A multichain policy has one long-run law per recurrent class; its row
/// reports the class with the highest value.
pub fn enumerate_deterministic(
    instance: &MdpInstance,
    params: &RiskParams,
    cap: u128,
) -> Result<DeterministicTable> {
    let count = instance.deterministic_policy_count();
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let policies: Vec<DeterministicPolicy> = DeterministicPolicy::enumerate(instance).collect();
    let rows: Vec<DeterministicRow> = policies
        .into_par_iter()
        .map(|policy| {
            let laws = class_stationary_distributions(instance, &policy.to_stationary(instance))?;
            let classes = laws.len();
            let (mean, cvar, value) = laws
                .iter()
                .map(|x| {
                    let dist = reward_distribution(instance, x);
                    let (mean, cvar) = (dist.mean(), cvar_right(&dist, params.alpha));
                    (mean, cvar, cvar + params.beta * mean)
                })
                .fold((f64::NAN, f64::NAN, f64::NEG_INFINITY), |best, row| {
                    if row.2 > best.2 {
                        row
                    } else {
                        best
                    }
                });
            Ok(DeterministicRow {
                policy,
                classes,
                mean,
                cvar,
                value,
            })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, row) in rows.iter().enumerate() {
        if row.value > rows[best].value {
            best = k;
        }
    }
    Ok(DeterministicTable { rows, best })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaZeroComparison {
    /// `solve_cvar` at `α = 0`, `β = 0`.
    pub solved: f64,
    /// `max_x Σ x(i,a) r(i,a)` over the polytope.
    pub average_reward_lp: f64,
    /// Best long-run mean over deterministic policies.
    pub deterministic_mean: Option<f64>,
}

/// At `α = 0` the CVaR is the mean, so the problem is the classical
/// average-reward MDP.
pub fn alpha_zero_degeneration(
    instance: &MdpInstance,
    options: &SolverOptions,
) -> Result<AlphaZeroComparison> {
    let params = RiskParams::new(0.0, 0.0)?;
    let solved = solve_cvar(instance, &params, options)?.v_star;

    let mut lp = LinearProgram::new("average-reward", crate::lp::Sense::Maximize);
    let template = build_average_lp(instance, 0.0, &params)?;
    for v in template.variables() {
        lp.add_variable(v.name.clone(), v.lower, v.upper)?;
    }
    for (k, (i, a)) in instance.pairs().enumerate() {
        lp.set_objective(k, instance.expected_reward(i, a));
    }
    for c in template.constraints() {
        lp.add_constraint(c.name.clone(), c.coeffs.clone(), c.relation, c.rhs)?;
    }
    let average_reward_lp = lp_optimum(&lp, false)?.objective;
    let deterministic_mean = match enumerate_deterministic(instance, &params, options.policy_cap) {
        Ok(table) => Some(
            table
                .rows
                .iter()
                .map(|r| r.mean)
                .fold(f64::NEG_INFINITY, f64::max),
        ),
        Err(Error::EnumerationCap { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(AlphaZeroComparison {
        solved,
        average_reward_lp,
        deterministic_mean,
    })
}
