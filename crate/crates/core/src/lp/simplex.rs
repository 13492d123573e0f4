//! Dense two-phase primal simplex.
//!
//! Variables are mapped to nonnegative columns (shifted by a finite bound,
//! mirrored from a finite upper bound, or split when free), every
//! constraint becomes an equality with a slack column, and phase one drives
//! artificial columns to zero. Pricing is Dantzig's rule with ties broken
//! by smallest column index; after a run of degenerate pivots the solver
//! switches permanently to Bland's rule, which cannot cycle. The final
//! basis is refactorized from the original data so the reported point is
//! accurate to rounding.

use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, LpSolution, LpStatus, Relation, Sense};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    /// `x = offset + col`.
    Shift { col: usize, offset: f64 },
    /// `x = offset − col`.
    Mirror { col: usize, offset: f64 },
    /// `x = pos − neg`.
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    maps: Vec<ColumnMap>,
    /// Structural plus slack columns.
    n: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Slack column of each row with coefficient +1 after sign flips, if any.
    unit_slack: Vec<Option<usize>>,
    cost: Vec<f64>,
    cost_offset: f64,
    /// Original constraint index of each row, `None` for bound rows.
    origin: Vec<Option<usize>>,
}

fn standard_form(lp: &LinearProgram) -> StandardForm {
    let mut maps = Vec::with_capacity(lp.variables().len());
    let mut n_struct = 0;
    let mut bound_rows = Vec::new();
    for v in lp.variables() {
        let map = match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, _) => {
                let col = n_struct;
                n_struct += 1;
                if v.upper.is_finite() {
                    bound_rows.push((col, v.upper - v.lower));
                }
                ColumnMap::Shift {
                    col,
                    offset: v.lower,
                }
            }
            (false, true) => {
                let col = n_struct;
                n_struct += 1;
                ColumnMap::Mirror {
                    col,
                    offset: v.upper,
                }
            }
            (false, false) => {
                let pos = n_struct;
                n_struct += 2;
                ColumnMap::Split { pos, neg: pos + 1 }
            }
        };
        maps.push(map);
    }

    struct Row {
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
        origin: Option<usize>,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (k, c) in lp.constraints().iter().enumerate() {
        let mut coeffs = Vec::new();
        let mut rhs = c.rhs;
        for &(v, a) in &c.coeffs {
            match maps[v] {
                ColumnMap::Shift { col, offset } => {
                    coeffs.push((col, a));
                    rhs -= a * offset;
                }
                ColumnMap::Mirror { col, offset } => {
                    coeffs.push((col, -a));
                    rhs -= a * offset;
                }
                ColumnMap::Split { pos, neg } => {
                    coeffs.push((pos, a));
                    coeffs.push((neg, -a));
                }
            }
        }
        rows.push(Row {
            coeffs,
            relation: c.relation,
            rhs,
            origin: Some(k),
        });
    }
    for (col, width) in bound_rows {
        rows.push(Row {
            coeffs: vec![(col, 1.0)],
            relation: Relation::Le,
            rhs: width,
            origin: None,
        });
    }

    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n = n_struct + n_slack;
    let m = rows.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut unit_slack = vec![None; m];
    let mut origin = Vec::with_capacity(m);
    let mut next_slack = n_struct;
    for (r, row) in rows.iter().enumerate() {
        for &(col, coeff) in &row.coeffs {
            a[(r, col)] += coeff;
        }
        b[r] = row.rhs;
        let slack = match row.relation {
            Relation::Le => Some((next_slack, 1.0)),
            Relation::Ge => Some((next_slack, -1.0)),
            Relation::Eq => None,
        };
        if let Some((col, sign)) = slack {
            a[(r, col)] = sign;
            next_slack += 1;
        }
        if b[r] < 0.0 {
            b[r] = -b[r];
            for j in 0..n {
                a[(r, j)] = -a[(r, j)];
            }
        }
        if let Some((col, _)) = slack {
            if a[(r, col)] == 1.0 {
                unit_slack[r] = Some(col);
            }
        }
        origin.push(row.origin);
    }

    let sign = match lp.sense() {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; n];
    let mut cost_offset = 0.0;
    for (v, &c) in lp.objective().iter().enumerate() {
        let c = sign * c;
        match maps[v] {
            ColumnMap::Shift { col, offset } => {
                cost[col] += c;
                cost_offset += c * offset;
            }
            ColumnMap::Mirror { col, offset } => {
                cost[col] -= c;
                cost_offset += c * offset;
            }
            ColumnMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }
    StandardForm {
        maps,
        n,
        a,
        b,
        unit_slack,
        cost,
        cost_offset,
        origin,
    }
}

/// Tableau `[B⁻¹A | B⁻¹b]` with a reduced-cost row appended.
struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn obj_row(&self) -> usize {
        self.rows
    }

    /// Rewrites the objective row as reduced costs of `cost` for the
    /// current basis.
    fn price(&mut self, cost: &[f64]) {
        let w = self.width;
        let obj = self.obj_row() * w;
        for c in 0..w {
            self.data[obj + c] = if c < cost.len() { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost.get(self.basis[r]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for c in 0..w {
                    self.data[obj + c] -= cb * self.data[r * w + c];
                }
            }
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let piv = self.at(pr, pc);
        for c in 0..w {
            self.data[pr * w + c] /= piv;
        }
        self.data[pr * w + pc] = 1.0;
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                for c in 0..w {
                    self.data[r * w + c] -= f * self.data[pr * w + c];
                }
                self.data[r * w + pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    fn run(&mut self, allowed: usize) -> Result<Outcome> {
        let mut bland = false;
        let mut degenerate_streak = 0;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::Numerical(format!(
                    "simplex exceeded {} iterations",
                    self.max_iterations
                )));
            }
            let obj = self.obj_row();
            let mut entering: Option<(usize, f64)> = None;
            for c in 0..allowed {
                let d = self.at(obj, c);
                if d < -OPT_TOL {
                    match entering {
                        None => entering = Some((c, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((c, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((e, _)) = entering else {
                return Ok(Outcome::Optimal);
            };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, e);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leaving = match leaving {
                    None => Some((r, ratio)),
                    Some((lr, best)) => {
                        let tie_slack = 1e-12 * (1.0 + best.abs());
                        if ratio < best - tie_slack {
                            Some((r, ratio))
                        } else if ratio <= best + tie_slack {
                            let better = if bland {
                                self.basis[r] < self.basis[lr]
                            } else {
                                let (ar, al) = (a, self.at(lr, e));
                                ar > al || (ar == al && self.basis[r] < self.basis[lr])
                            };
                            if better {
                                Some((r, ratio.min(best)))
                            } else {
                                Some((lr, best))
                            }
                        } else {
                            Some((lr, best))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leaving else {
                return Ok(Outcome::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate_streak += 1;
                if degenerate_streak > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, e);
        }
    }
}

pub(super) fn solve(lp: &LinearProgram, tol: f64) -> Result<LpSolution> {
    let sf = standard_form(lp);
    let m = sf.a.nrows();
    let n = sf.n;
    let artificial_rows: Vec<usize> = (0..m).filter(|&r| sf.unit_slack[r].is_none()).collect();
    let total = n + artificial_rows.len();
    let width = total + 1;

    let mut data = vec![0.0; (m + 1) * width];
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for r in 0..m {
        for c in 0..n {
            data[r * width + c] = sf.a[(r, c)];
        }
        data[r * width + total] = sf.b[r];
        match sf.unit_slack[r] {
            Some(col) => basis.push(col),
            None => {
                data[r * width + n + art] = 1.0;
                basis.push(n + art);
                art += 1;
            }
        }
    }
    let mut t = Tableau {
        rows: m,
        width,
        data,
        basis,
        iterations: 0,
        max_iterations: 20_000 + 50 * (m + total),
    };

    let b_scale = sf.b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if !artificial_rows.is_empty() {
        let mut phase1 = vec![0.0; total];
        phase1[n..total].iter_mut().for_each(|c| *c = 1.0);
        t.price(&phase1);
        t.run(total)?;
        let infeasibility: f64 = (0..m).filter(|&r| t.basis[r] >= n).map(|r| t.rhs(r)).sum();
        if infeasibility > 1e-9 * b_scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                values: vec![f64::NAN; lp.variables().len()],
                vertex: false,
                iterations: t.iterations,
            });
        }
        // Pivot zero-level artificials out of the basis; rows where that is
        // impossible are linearly dependent and are dropped.
        let mut r = 0;
        while r < t.rows {
            if t.basis[r] >= n {
                let col = (0..n)
                    .filter(|&c| t.at(r, c).abs() > 1e-7)
                    .max_by(|&a, &b| {
                        t.at(r, a)
                            .abs()
                            .total_cmp(&t.at(r, b).abs())
                            .then(b.cmp(&a))
                    });
                match col {
                    Some(c) => t.pivot(r, c),
                    None => {
                        let w = t.width;
                        t.data.drain(r * w..(r + 1) * w);
                        t.basis.remove(r);
                        t.rows -= 1;
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    t.price(&sf.cost);
    let outcome = t.run(n)?;
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: match lp.sense() {
                Sense::Minimize => f64::NEG_INFINITY,
                Sense::Maximize => f64::INFINITY,
            },
            values: vec![f64::NAN; lp.variables().len()],
            vertex: false,
            iterations: t.iterations,
        });
    }

    let columns = polish(&sf, &t)?;
    let values: Vec<f64> = sf
        .maps
        .iter()
        .map(|map| match *map {
            ColumnMap::Shift { col, offset } => offset + columns[col],
            ColumnMap::Mirror { col, offset } => offset - columns[col],
            ColumnMap::Split { pos, neg } => columns[pos] - columns[neg],
        })
        .collect();

    check_feasible(lp, &values, tol)?;
    let _ = sf.cost_offset;
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&values),
        values,
        vertex: true,
        iterations: t.iterations,
    })
}

/// Recomputes the basic solution by factorizing the final basis against
/// the original standard-form data.
fn polish(sf: &StandardForm, t: &Tableau) -> Result<Vec<f64>> {
    let n = sf.n;
    let mut columns = vec![0.0; n];
    // Rows kept after dropping dependent ones, recovered from the basis:
    // solve B x_B = b restricted to a full-rank row subset.
    let basic: Vec<usize> = t.basis.clone();
    let k = basic.len();
    let m = sf.a.nrows();
    // Pick the k original rows giving a nonsingular basis matrix greedily.
    let full = DMatrix::from_fn(m, k, |r, j| sf.a[(r, basic[j])]);
    let rows = independent_rows(&full, k);
    let fallback = || {
        let mut cols = vec![0.0; n];
        for (r, &j) in basic.iter().enumerate() {
            cols[j] = t.rhs(r).max(0.0);
        }
        cols
    };
    let Some(rows) = rows else {
        return Ok(fallback());
    };
    let bmat = DMatrix::from_fn(k, k, |r, j| full[(rows[r], j)]);
    let rhs = DVector::from_iterator(k, rows.iter().map(|&r| sf.b[r]));
    let Some(sol) = bmat.lu().solve(&rhs) else {
        return Ok(fallback());
    };
    for (j, &col) in basic.iter().enumerate() {
        let v = sol[j];
        if v < -1e-7 || !v.is_finite() {
            return Err(Error::Numerical(format!(
                "refactorized basis gives negative basic value {v:e}"
            )));
        }
        columns[col] = if v.abs() < 1e-13 { 0.0 } else { v.max(0.0) };
    }
    let _ = &sf.origin;
    Ok(columns)
}

/// Indices of `k` linearly independent rows of `mat` (m × k), chosen by
/// Gaussian elimination with partial pivoting over rows.
fn independent_rows(mat: &DMatrix<f64>, k: usize) -> Option<Vec<usize>> {
    let m = mat.nrows();
    let mut work = mat.clone();
    let mut used = vec![false; m];
    let mut chosen = Vec::with_capacity(k);
    for j in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..m {
            if used[r] {
                continue;
            }
            let v = work[(r, j)].abs();
            if v > 1e-10 && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((r, v));
            }
        }
        let (pr, _) = best?;
        used[pr] = true;
        chosen.push(pr);
        for r in 0..m {
            if r != pr && !used[r] {
                let f = work[(r, j)] / work[(pr, j)];
                if f != 0.0 {
                    for c in j..k {
                        work[(r, c)] -= f * work[(pr, c)];
                    }
                }
            }
        }
    }
    chosen.sort_unstable();
    Some(chosen)
}

fn check_feasible(lp: &LinearProgram, values: &[f64], tol: f64) -> Result<()> {
    for (v, x) in lp.variables().iter().zip(values) {
        let scale = 1.0f64
            .max(v.lower.abs().min(1e12))
            .max(v.upper.abs().min(1e12));
        if v.lower - x > tol * scale || x - v.upper > tol * scale {
            return Err(Error::Numerical(format!(
                "variable `{}` = {x} violates its bounds [{}, {}]",
                v.name, v.lower, v.upper
            )));
        }
    }
    for c in lp.constraints() {
        let lhs: f64 = c.coeffs.iter().map(|&(v, a)| a * values[v]).sum();
        let gap = match c.relation {
            Relation::Le => lhs - c.rhs,
            Relation::Ge => c.rhs - lhs,
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        let scale = c
            .coeffs
            .iter()
            .fold(1.0f64.max(c.rhs.abs()), |acc, &(_, a)| acc.max(a.abs()));
        if gap > tol * scale {
            return Err(Error::Numerical(format!(
                "constraint `{}` violated by {gap:e} after refactorization",
                c.name
            )));
        }
    }
    Ok(())
}
