//! Stationary policies read from JSON files.
//!
//! The format is `{state: {action: prob}}`, either bare or under a
//! top-level `policy` key (so `solve --json` output can be fed back in).
//! Omitted actions get probability zero.

use std::fs;

use serde_json::Value;

use cvar_mdp::model::{MdpInstance, StationaryPolicy};
use cvar_mdp::{Error, Result};

pub fn load(instance: &MdpInstance, path: &str) -> Result<StationaryPolicy> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let root: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_value(instance, root.get("policy").unwrap_or(&root))
}

pub fn from_value(instance: &MdpInstance, value: &Value) -> Result<StationaryPolicy> {
    let bad = |msg: String| Error::InvalidPolicy(msg);
    let states = value
        .as_object()
        .ok_or_else(|| bad("expected an object mapping states to action probabilities".into()))?;
    let mut probs: Vec<Vec<f64>> = (0..instance.n_states())
        .map(|i| vec![0.0; instance.n_actions(i)])
        .collect();
    let mut seen = vec![false; instance.n_states()];
    for (state, rule) in states {
        let i = instance
            .state_index(state)
            .ok_or_else(|| bad(format!("unknown state `{state}`")))?;
        seen[i] = true;
        let rule = rule.as_object().ok_or_else(|| {
            bad(format!(
                "rule for `{state}` must map actions to probabilities"
            ))
        })?;
        for (action, p) in rule {
            let a = instance
                .action_index(i, action)
                .ok_or_else(|| bad(format!("unknown action `{action}` in state `{state}`")))?;
            probs[i][a] = p.as_f64().ok_or_else(|| {
                bad(format!(
                    "probability of `{action}` in `{state}` is not a number"
                ))
            })?;
        }
    }
    if let Some(i) = seen.iter().position(|&s| !s) {
        return Err(bad(format!("no rule for state `{}`", instance.states()[i])));
    }
    StationaryPolicy::new(instance, probs)
}
