//! Backend-neutral linear programs, a dense simplex solver, and builders for
//! the programs of the saddle-point reduction.

mod builders;
mod lp_format;
mod simplex;

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub use builders::{
    build_average_lp, build_dual_lp, build_minmax_lp, build_primal_lp, build_sparsify_lp,
    dual_paper_count, primal_paper_count, tighten_excess, DualLpOptions, TailRows,
};
pub use lp_format::write_lp_format;

/// Feasibility and optimality tolerance of solved programs.
pub const LP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constraint {
    pub name: String,
    /// `(variable index, coefficient)`, at most one entry per variable.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearProgram {
    pub name: String,
    sense: Sense,
    variables: Vec<Variable>,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    #[serde(skip)]
    var_index: HashMap<String, usize>,
    #[serde(skip)]
    con_index: HashMap<String, usize>,
}

impl LinearProgram {
    pub fn new(name: impl Into<String>, sense: Sense) -> Self {
        Self {
            name: name.into(),
            sense,
            variables: Vec::new(),
            objective: Vec::new(),
            constraints: Vec::new(),
            var_index: HashMap::new(),
            con_index: HashMap::new(),
        }
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> Result<usize> {
        let name = name.into();
        if lower.is_nan()
            || upper.is_nan()
            || lower > upper
            || lower == f64::INFINITY
            || upper == f64::NEG_INFINITY
        {
            return Err(Error::InvalidParameter(format!(
                "variable `{name}` has invalid bounds [{lower}, {upper}]"
            )));
        }
        if self.var_index.contains_key(&name) {
            return Err(Error::InvalidParameter(format!(
                "duplicate variable `{name}`"
            )));
        }
        let id = self.variables.len();
        self.var_index.insert(name.clone(), id);
        self.variables.push(Variable { name, lower, upper });
        self.objective.push(0.0);
        Ok(id)
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize> {
        let name = name.into();
        if self.con_index.contains_key(&name) {
            return Err(Error::InvalidParameter(format!(
                "duplicate constraint `{name}`"
            )));
        }
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (v, c) in coeffs {
            if v >= self.variables.len() {
                return Err(Error::InvalidParameter(format!(
                    "constraint `{name}` references undeclared variable {v}"
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "constraint `{name}` has a non-finite coefficient"
                )));
            }
            match merged.iter_mut().find(|(u, _)| *u == v) {
                Some(entry) => entry.1 += c,
                None => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        if !rhs.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "constraint `{name}` has a non-finite rhs"
            )));
        }
        let id = self.constraints.len();
        self.con_index.insert(name.clone(), id);
        self.constraints.push(Constraint {
            name,
            coeffs: merged,
            relation,
            rhs,
        });
        Ok(id)
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn var(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.con_index.get(name).map(|&k| &self.constraints[k])
    }

    /// Number of structural rows, excluding variable bounds.
    pub fn structural_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint or bound at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(v, a)| a * values[v]).sum();
            let gap = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    /// The point is a basic solution, hence an extreme point of the
    /// feasible region.
    pub vertex: bool,
    pub iterations: usize,
}

impl LpSolution {
    pub fn value(&self, lp: &LinearProgram, name: &str) -> Option<f64> {
        lp.var(name).map(|k| self.values[k])
    }

    /// Error unless the status is optimal.
    pub fn require_optimal(self) -> Result<Self> {
        match self.status {
            LpStatus::Optimal => Ok(self),
            LpStatus::Infeasible => Err(Error::LpStatus("infeasible")),
            LpStatus::Unbounded => Err(Error::LpStatus("unbounded")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub require_vertex: bool,
    pub tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            require_vertex: false,
            tol: LP_TOL,
        }
    }
}

/// Solves `lp` with a two-phase dense simplex method. The result is
/// deterministic for identical input, and optimal points are always basic,
/// so `require_vertex` is satisfied by construction.
pub fn solve(lp: &LinearProgram, options: &SolveOptions) -> Result<LpSolution> {
    let sol = simplex::solve(lp, options.tol)?;
    if options.require_vertex && sol.status == LpStatus::Optimal && !sol.vertex {
        return Err(Error::Numerical(
            "solver did not return a basic solution".into(),
        ));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_max() {
        let mut lp = LinearProgram::new("t", Sense::Maximize);
        let z = lp
            .add_variable("z", f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        lp.set_objective(z, 1.0);
        lp.add_constraint("cap", vec![(z, 1.0)], Relation::Le, 3.0)
            .unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-12);
        assert!(sol.vertex);
    }

    #[test]
    fn unbounded_max() {
        let mut lp = LinearProgram::new("t", Sense::Maximize);
        let z = lp
            .add_variable("z", f64::NEG_INFINITY, f64::INFINITY)
            .unwrap();
        lp.set_objective(z, 1.0);
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
        assert!(sol.clone().require_optimal().is_err());
    }

    #[test]
    fn infeasible() {
        let mut lp = LinearProgram::new("t", Sense::Minimize);
        let x = lp.add_variable("x", 0.0, f64::INFINITY).unwrap();
        lp.add_constraint("a", vec![(x, 1.0)], Relation::Ge, 2.0)
            .unwrap();
        lp.add_constraint("b", vec![(x, 1.0)], Relation::Le, 1.0)
            .unwrap();
        assert_eq!(
            solve(&lp, &SolveOptions::default()).unwrap().status,
            LpStatus::Infeasible
        );
    }

    #[test]
    fn builder_rejects_bad_input() {
        let mut lp = LinearProgram::new("t", Sense::Minimize);
        let x = lp.add_variable("x", 0.0, 1.0).unwrap();
        assert!(lp.add_variable("x", 0.0, 1.0).is_err());
        assert!(lp.add_variable("y", 2.0, 1.0).is_err());
        lp.add_constraint("c", vec![(x, 1.0)], Relation::Le, 1.0)
            .unwrap();
        assert!(lp
            .add_constraint("c", vec![(x, 1.0)], Relation::Le, 1.0)
            .is_err());
        assert!(lp
            .add_constraint("d", vec![(7, 1.0)], Relation::Le, 1.0)
            .is_err());
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let mut lp = LinearProgram::new("wyndor", Sense::Maximize);
        let x = lp.add_variable("x", 0.0, f64::INFINITY).unwrap();
        let y = lp.add_variable("y", 0.0, f64::INFINITY).unwrap();
        lp.set_objective(x, 3.0);
        lp.set_objective(y, 5.0);
        lp.add_constraint("p1", vec![(x, 1.0)], Relation::Le, 4.0)
            .unwrap();
        lp.add_constraint("p2", vec![(y, 2.0)], Relation::Le, 12.0)
            .unwrap();
        lp.add_constraint("p3", vec![(x, 3.0), (y, 2.0)], Relation::Le, 18.0)
            .unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.values[0] - 2.0).abs() < 1e-12 && (sol.values[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_and_free_variables() {
        // min x − y with x ∈ [−3, 5], y ≤ 2 free below, x + y ≥ −4.
        let mut lp = LinearProgram::new("bounds", Sense::Minimize);
        let x = lp.add_variable("x", -3.0, 5.0).unwrap();
        let y = lp.add_variable("y", f64::NEG_INFINITY, 2.0).unwrap();
        lp.set_objective(x, 1.0);
        lp.set_objective(y, -1.0);
        lp.add_constraint("c", vec![(x, 1.0), (y, 1.0)], Relation::Ge, -4.0)
            .unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - (-5.0)).abs() < 1e-12);
        assert_eq!(sol.values, vec![-3.0, 2.0]);
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 1 stated twice, plus 2x + 2y = 2.
        let mut lp = LinearProgram::new("redundant", Sense::Maximize);
        let x = lp.add_variable("x", 0.0, f64::INFINITY).unwrap();
        let y = lp.add_variable("y", 0.0, f64::INFINITY).unwrap();
        lp.set_objective(x, 1.0);
        lp.set_objective(y, 2.0);
        lp.add_constraint("a", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0)
            .unwrap();
        lp.add_constraint("b", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 1.0)
            .unwrap();
        lp.add_constraint("c", vec![(x, 2.0), (y, 2.0)], Relation::Eq, 2.0)
            .unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
        assert!(lp.max_violation(&sol.values) < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example: min −3/4 x4 + 150 x5 − 1/50 x6 + 6 x7.
        let mut lp = LinearProgram::new("beale", Sense::Minimize);
        let v: Vec<usize> = (4..=7)
            .map(|k| {
                lp.add_variable(format!("x{k}"), 0.0, f64::INFINITY)
                    .unwrap()
            })
            .collect();
        for (k, c) in [-0.75, 150.0, -0.02, 6.0].into_iter().enumerate() {
            lp.set_objective(v[k], c);
        }
        lp.add_constraint(
            "r1",
            vec![(v[0], 0.25), (v[1], -60.0), (v[2], -0.04), (v[3], 9.0)],
            Relation::Le,
            0.0,
        )
        .unwrap();
        lp.add_constraint(
            "r2",
            vec![(v[0], 0.5), (v[1], -90.0), (v[2], -0.02), (v[3], 3.0)],
            Relation::Le,
            0.0,
        )
        .unwrap();
        lp.add_constraint("r3", vec![(v[2], 1.0)], Relation::Le, 1.0)
            .unwrap();
        let sol = solve(&lp, &SolveOptions::default()).unwrap();
        assert!((sol.objective - (-0.05)).abs() < 1e-12);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let mut lp = LinearProgram::new("ties", Sense::Maximize);
        let xs: Vec<usize> = (0..4)
            .map(|k| {
                lp.add_variable(format!("x{k}"), 0.0, f64::INFINITY)
                    .unwrap()
            })
            .collect();
        for &x in &xs {
            lp.set_objective(x, 1.0);
        }
        lp.add_constraint(
            "sum",
            xs.iter().map(|&x| (x, 1.0)).collect(),
            Relation::Le,
            1.0,
        )
        .unwrap();
        let a = solve(&lp, &SolveOptions::default()).unwrap();
        let b = solve(&lp, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values, vec![1.0, 0.0, 0.0, 0.0]);
    }
}
