//! Table and JSON rendering of solver results.

use std::fmt::Write;

use serde_json::{json, Map, Value};

use cvar_mdp::chains::{AssumptionReport, VertexSet};
use cvar_mdp::model::{MdpInstance, StationaryPolicy};
use cvar_mdp::solver::{DeterministicTable, EndpointScan, SaddleSolution, CERT_TOL};

/// `{state: {action: prob}}`; the format read back by `--policy PATH`.
pub fn policy_json(instance: &MdpInstance, policy: &StationaryPolicy) -> Value {
    let mut states = Map::new();
    for (i, name) in instance.states().iter().enumerate() {
        let rule: Map<String, Value> = instance
            .actions(i)
            .iter()
            .enumerate()
            .map(|(a, action)| (action.clone(), json!(policy.prob(i, a))))
            .collect();
        states.insert(name.clone(), Value::Object(rule));
    }
    Value::Object(states)
}

pub fn solution_json(instance: &MdpInstance, sol: &SaddleSolution) -> Value {
    let c = &sol.certificates;
    let mut value = json!({
        "instance": instance.name(),
        "alpha": sol.params.alpha,
        "beta": sol.params.beta,
        "value": sol.v_star,
        "y_star": sol.y_star,
        "cvar": sol.cvar_component,
        "mean": sol.mean_component,
        "policy": policy_json(instance, &sol.policy),
        "n_randomizations": sol.n_rand,
        "dual_rows": sol.dual_rows,
        "certificates": {
            "left_gap": c.left_gap,
            "right_gap": c.right_gap,
            "oracle_gap": c.oracle_gap,
            "oracle_value": c.oracle_value,
            "saddle_level": c.saddle_level,
            "saddle_left_gap": c.saddle_left_gap,
            "minmax_gap": c.minmax_gap,
            "consistency_gap": c.consistency_gap,
            "deterministic_best": c.deterministic_best,
            "minimax_gap": c.minimax_gap,
            "certified": c.certified(),
            "saddle_certified": c.saddle_certified(),
        },
        "flags": c.flags,
    });
    if let Some(primal) = &sol.primal {
        value["primal"] = serde_json::to_value(primal).expect("primal solution serializes");
    }
    value
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

pub fn solution_table(instance: &MdpInstance, sol: &SaddleSolution) -> String {
    let c = &sol.certificates;
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "instance        {}", instance.name()).unwrap();
    writeln!(
        w,
        "alpha, beta     {:.4}, {:.4}",
        sol.params.alpha, sol.params.beta
    )
    .unwrap();
    writeln!(w, "value           {:.4}", sol.v_star).unwrap();
    writeln!(w, "CVaR            {:.4}", sol.cvar_component).unwrap();
    writeln!(w, "mean            {:.4}", sol.mean_component).unwrap();
    writeln!(w, "y* (VaR)        {:.4}", sol.y_star).unwrap();
    writeln!(w, "randomizations  {}", sol.n_rand).unwrap();
    writeln!(w, "\npolicy").unwrap();
    let width = instance.states().iter().map(String::len).max().unwrap_or(0);
    for (i, state) in instance.states().iter().enumerate() {
        let used: Vec<String> = instance
            .actions(i)
            .iter()
            .enumerate()
            .filter(|&(a, _)| sol.policy.prob(i, a) > 0.0)
            .map(|(a, action)| format!("{action} {:.4}", sol.policy.prob(i, a)))
            .collect();
        writeln!(w, "  {state:<width$}  {}", used.join(", ")).unwrap();
    }
    writeln!(w, "\ncertificates (tolerance {CERT_TOL:e})").unwrap();
    let gap_line = |w: &mut String, name: &str, gap: f64, ok: bool| {
        writeln!(w, "  {name:<22} {gap:>12.4e}  {}", mark(ok)).unwrap();
    };
    gap_line(
        w,
        "left gap at y*",
        c.left_gap,
        c.left_gap.abs() <= CERT_TOL,
    );
    gap_line(
        w,
        "right gap at y*",
        c.right_gap,
        c.right_gap.abs() <= CERT_TOL,
    );
    gap_line(w, "endpoint scan", c.oracle_gap, c.oracle_gap <= CERT_TOL);
    gap_line(
        w,
        "left gap at level",
        c.saddle_left_gap,
        c.saddle_left_gap.abs() <= CERT_TOL,
    );
    gap_line(w, "min-max program", c.minmax_gap, c.minmax_gap <= CERT_TOL);
    gap_line(
        w,
        "value recomputation",
        c.consistency_gap,
        c.consistency_gap <= CERT_TOL,
    );
    if let Some(g) = c.minimax_gap {
        gap_line(w, "primal program", g, g <= CERT_TOL);
    }
    writeln!(w, "  saddle level           {:.4}", c.saddle_level).unwrap();
    if let Some(best) = c.deterministic_best {
        writeln!(w, "  best deterministic     {best:.4}").unwrap();
    }
    writeln!(w, "  saddle point           {}", mark(c.saddle_certified())).unwrap();
    if !c.flags.is_empty() {
        let flags: Vec<String> = c
            .flags
            .iter()
            .map(|f| {
                serde_json::to_value(f)
                    .unwrap()
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect();
        writeln!(w, "\nflags: {}", flags.join(", ")).unwrap();
    }
    out
}

/// Row indices by value, best first; ties keep canonical order.
fn ranked(table: &DeterministicTable) -> Vec<usize> {
    let mut order: Vec<usize> = (0..table.rows.len()).collect();
    order.sort_by(|&a, &b| table.rows[b].value.total_cmp(&table.rows[a].value));
    order
}

pub fn enumeration_json(instance: &MdpInstance, table: &DeterministicTable, v_star: f64) -> Value {
    let rows: Vec<Value> = ranked(table)
        .into_iter()
        .map(|k| {
            let r = &table.rows[k];
            json!({
                "policy": r.policy.describe(instance),
                "classes": r.classes,
                "mean": r.mean,
                "cvar": r.cvar,
                "value": r.value,
            })
        })
        .collect();
    let best = table.best().value;
    json!({
        "rows": rows,
        "best_value": best,
        "randomized_value": v_star,
        "gap": v_star - best,
    })
}

pub fn enumeration_table(
    instance: &MdpInstance,
    table: &DeterministicTable,
    v_star: f64,
) -> String {
    let mut out = String::new();
    let order = ranked(table);
    let names: Vec<String> = order
        .iter()
        .map(|&k| table.rows[k].policy.describe(instance))
        .collect();
    let width = names
        .iter()
        .map(|n| n.chars().count())
        .max()
        .unwrap_or(6)
        .max(6);
    writeln!(
        out,
        "{:<width$}  {:>7}  {:>12}  {:>12}  {:>12}",
        "policy", "classes", "mean", "CVaR", "value"
    )
    .unwrap();
    for (rank, (&k, name)) in order.iter().zip(&names).enumerate() {
        let row = &table.rows[k];
        let best = if rank == 0 { "  *" } else { "" };
        writeln!(
            out,
            "{name:<width$}  {:>7}  {:>12.4}  {:>12.4}  {:>12.4}{best}",
            row.classes, row.mean, row.cvar, row.value
        )
        .unwrap();
    }
    let best = table.best().value;
    writeln!(out, "\nbest deterministic  {best:.4}").unwrap();
    writeln!(out, "randomized optimum  {v_star:.4}").unwrap();
    writeln!(out, "gap                 {:.4}", v_star - best).unwrap();
    out
}

pub fn scan_table(scan: &EndpointScan) -> String {
    let mut out = String::new();
    writeln!(out, "{:>12}  {:>12}", "y", "max_x v").unwrap();
    for row in &scan.rows {
        let best = if row.y == scan.argmin { "  *" } else { "" };
        writeln!(out, "{:>12.4}  {:>12.4}{best}", row.y, row.value).unwrap();
    }
    writeln!(out, "\nminimum {:.4} at y = {:.4}", scan.value, scan.argmin).unwrap();
    out
}

pub fn check_table(
    instance: &MdpInstance,
    report: &AssumptionReport,
    communicating: bool,
) -> String {
    let mut out = String::new();
    writeln!(out, "instance `{}` is valid", instance.name()).unwrap();
    writeln!(
        out,
        "deterministic policies checked  {}",
        report.policies_checked
    )
    .unwrap();
    writeln!(
        out,
        "communicating                   {}",
        if communicating { "yes" } else { "no" }
    )
    .unwrap();
    if report.holds() {
        writeln!(out, "every policy is unichain and aperiodic").unwrap();
    } else {
        writeln!(
            out,
            "{} policies are not unichain and aperiodic:",
            report.violators.len()
        )
        .unwrap();
        for v in &report.violators {
            writeln!(
                out,
                "  {}  ({} recurrent classes{})",
                v.policy.describe(instance),
                v.classification.recurrent_classes.len(),
                if v.classification.aperiodic.iter().all(|&a| a) {
                    ""
                } else {
                    ", periodic"
                }
            )
            .unwrap();
        }
    }
    out
}

pub fn vertices_json(instance: &MdpInstance, vertices: &VertexSet) -> Value {
    let rows: Vec<Value> = vertices
        .vertices
        .iter()
        .map(|v| {
            let x: Map<String, Value> = instance
                .pairs()
                .zip(v.x.values())
                .filter(|(_, &p)| p > 0.0)
                .map(|((i, a), &p)| {
                    (
                        format!("{}/{}", instance.states()[i], instance.actions(i)[a]),
                        json!(p),
                    )
                })
                .collect();
            json!({ "policy": v.policy.describe(instance), "x": x })
        })
        .collect();
    json!({ "count": rows.len(), "vertices": rows })
}
