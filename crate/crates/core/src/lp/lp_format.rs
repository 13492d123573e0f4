//! Writer for the CPLEX "LP file" text format.

use std::fmt::Write;

use super::{LinearProgram, Relation, Sense};

fn write_terms(out: &mut String, terms: &[(usize, f64)], lp: &LinearProgram) {
    if terms.is_empty() {
        // An empty linear expression is not accepted by all readers.
        let name = lp.variables().first().map_or("x", |v| v.name.as_str());
        write!(out, " 0 {name}").unwrap();
        return;
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        let name = &lp.variables()[v].name;
        match (k, c < 0.0) {
            (0, false) => write!(out, " {c} {name}"),
            (0, true) => write!(out, " -{} {name}", -c),
            (_, false) => write!(out, " + {c} {name}"),
            (_, true) => write!(out, " - {} {name}", -c),
        }
        .unwrap();
    }
}

fn bound(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

/// Renders `lp` in LP file format.
pub fn write_lp_format(lp: &LinearProgram) -> String {
    let mut out = String::new();
    writeln!(out, "\\ {}", lp.name).unwrap();
    out.push_str(match lp.sense() {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    let objective: Vec<(usize, f64)> = lp
        .objective()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(v, &c)| (v, c))
        .collect();
    out.push_str(" obj:");
    write_terms(&mut out, &objective, lp);
    out.push_str("\nSubject To\n");
    for c in lp.constraints() {
        write!(out, " {}:", c.name).unwrap();
        write_terms(&mut out, &c.coeffs, lp);
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        writeln!(out, " {rel} {}", c.rhs).unwrap();
    }
    out.push_str("Bounds\n");
    for v in lp.variables() {
        match (v.lower, v.upper) {
            (l, u) if l == 0.0 && u == f64::INFINITY => {}
            (l, u) if l == f64::NEG_INFINITY && u == f64::INFINITY => {
                writeln!(out, " {} free", v.name).unwrap()
            }
            (l, u) => writeln!(out, " {} <= {} <= {}", bound(l), v.name, bound(u)).unwrap(),
        }
    }
    out.push_str("End\n");
    out
}
