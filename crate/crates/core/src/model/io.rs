//! JSON instance files.
//!
//! ```json
//! {
//!   "name": "tiny",
//!   "states": ["s1", "s2"],
//!   "actions": {"s1": ["stay", "go"], "s2": ["stay"]},
//!   "transitions": {"s1": {"stay": {"s1": 1.0}, "go": {"s2": 1.0}}, "s2": {"stay": {"s1": 0.5, "s2": 0.5}}},
//!   "rewards": {"s1": {"stay": 1.0, "go": 0.0}, "s2": {"stay": 2.0}}
//! }
//! ```
//!
//! `rewards3` (state → action → next state → reward) replaces `rewards` for
//! instances whose reward depends on the next state. An optional integer
//! `schema` key pins the format version.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{MdpInstance, Rewards};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

type Table<T> = BTreeMap<String, BTreeMap<String, T>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema: Option<u32>,
    name: String,
    states: Vec<String>,
    actions: BTreeMap<String, Vec<String>>,
    transitions: Table<BTreeMap<String, f64>>,
    rewards: Option<Table<f64>>,
    rewards3: Option<Table<BTreeMap<String, f64>>>,
}

fn structural(message: String) -> Error {
    Error::Parse {
        line: 0,
        column: 0,
        message,
    }
}

pub fn from_json_str(text: &str) -> Result<MdpInstance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if let Some(found) = file.schema {
        if found != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: SCHEMA_VERSION,
            });
        }
    }
    let states = file.states;
    let state_pos = |name: &str, ctx: &str| {
        states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| structural(format!("{ctx}: unknown state `{name}`")))
    };
    for (k, s) in states.iter().enumerate() {
        if states[..k].contains(s) {
            return Err(structural(format!("states: duplicate state `{s}`")));
        }
    }
    for key in file.actions.keys() {
        state_pos(key, "actions")?;
    }
    let mut actions = Vec::with_capacity(states.len());
    for s in &states {
        let acts = file
            .actions
            .get(s)
            .ok_or_else(|| structural(format!("actions: no action list for state `{s}`")))?;
        for (k, a) in acts.iter().enumerate() {
            if acts[..k].contains(a) {
                return Err(structural(format!("actions.{s}: duplicate action `{a}`")));
            }
        }
        actions.push(acts.clone());
    }

    // Every table must cover exactly the declared pairs.
    let check_keys = |block: &str, keys: &mut dyn Iterator<Item = (&String, Vec<&String>)>| {
        for (s, acts) in keys {
            let i = state_pos(s, block)?;
            for a in acts {
                if !actions[i].contains(a) {
                    return Err(structural(format!("{block}.{s}: unknown action `{a}`")));
                }
            }
        }
        Ok(())
    };
    check_keys(
        "transitions",
        &mut file
            .transitions
            .iter()
            .map(|(s, m)| (s, m.keys().collect())),
    )?;

    let n = states.len();
    let mut kernel = Vec::with_capacity(n);
    for (i, s) in states.iter().enumerate() {
        let mut rows = Vec::with_capacity(actions[i].len());
        for a in &actions[i] {
            let entries = file
                .transitions
                .get(s)
                .and_then(|m| m.get(a))
                .ok_or_else(|| structural(format!("transitions: missing entry for ({s}, {a})")))?;
            let mut row = vec![0.0; n];
            for (next, &p) in entries {
                row[state_pos(next, &format!("transitions.{s}.{a}"))?] = p;
            }
            rows.push(row);
        }
        kernel.push(rows);
    }

    let rewards = match (file.rewards, file.rewards3) {
        (Some(_), Some(_)) => {
            return Err(structural("both `rewards` and `rewards3` given".into()));
        }
        (None, None) => {
            return Err(structural("missing `rewards` or `rewards3` block".into()));
        }
        (Some(table), None) => {
            check_keys(
                "rewards",
                &mut table.iter().map(|(s, m)| (s, m.keys().collect())),
            )?;
            let mut r = Vec::with_capacity(n);
            for (i, s) in states.iter().enumerate() {
                let mut row = Vec::with_capacity(actions[i].len());
                for a in &actions[i] {
                    let v = table.get(s).and_then(|m| m.get(a)).ok_or_else(|| {
                        structural(format!("rewards: missing entry for ({s}, {a})"))
                    })?;
                    row.push(*v);
                }
                r.push(row);
            }
            Rewards::StateAction(r)
        }
        (None, Some(table)) => {
            check_keys(
                "rewards3",
                &mut table.iter().map(|(s, m)| (s, m.keys().collect())),
            )?;
            let mut r = Vec::with_capacity(n);
            for (i, s) in states.iter().enumerate() {
                let mut per_action = Vec::with_capacity(actions[i].len());
                for (ai, a) in actions[i].iter().enumerate() {
                    let entries = table.get(s).and_then(|m| m.get(a));
                    let mut row = vec![0.0; n];
                    if let Some(entries) = entries {
                        for (next, &v) in entries {
                            row[state_pos(next, &format!("rewards3.{s}.{a}"))?] = v;
                        }
                    }
                    for (j, next) in states.iter().enumerate() {
                        let listed = entries.is_some_and(|m| m.contains_key(next));
                        if kernel[i][ai][j] > 0.0 && !listed {
                            return Err(structural(format!(
                                "rewards3: missing entry for ({s}, {a}, {next}) which has positive probability"
                            )));
                        }
                    }
                    per_action.push(row);
                }
                r.push(per_action);
            }
            Rewards::NextState(r)
        }
    };

    MdpInstance::new(file.name, states, actions, kernel, rewards)
}

pub fn to_json_value(instance: &MdpInstance) -> Value {
    let states = instance.states();
    let mut actions = Map::new();
    let mut transitions = Map::new();
    let mut rewards = Map::new();
    for (i, s) in states.iter().enumerate() {
        actions.insert(s.clone(), json!(instance.actions(i)));
        let mut t_s = Map::new();
        let mut r_s = Map::new();
        for (a, name) in instance.actions(i).iter().enumerate() {
            let mut row = Map::new();
            for (j, &p) in instance.kernel_row(i, a).iter().enumerate() {
                if p != 0.0 {
                    row.insert(states[j].clone(), json!(p));
                }
            }
            t_s.insert(name.clone(), Value::Object(row));
            let r = match instance.rewards() {
                Rewards::StateAction(r) => json!(r[i][a]),
                Rewards::NextState(r) => Value::Object(
                    states
                        .iter()
                        .zip(&r[i][a])
                        .map(|(next, v)| (next.clone(), json!(v)))
                        .collect(),
                ),
            };
            r_s.insert(name.clone(), r);
        }
        transitions.insert(s.clone(), Value::Object(t_s));
        rewards.insert(s.clone(), Value::Object(r_s));
    }
    let reward_key = if instance.is_future_state_reward() {
        "rewards3"
    } else {
        "rewards"
    };
    let mut root = Map::new();
    root.insert("schema".into(), json!(SCHEMA_VERSION));
    root.insert("name".into(), json!(instance.name()));
    root.insert("states".into(), json!(states));
    root.insert("actions".into(), Value::Object(actions));
    root.insert("transitions".into(), Value::Object(transitions));
    root.insert(reward_key.into(), Value::Object(rewards));
    Value::Object(root)
}

pub fn to_json_string(instance: &MdpInstance) -> String {
    serde_json::to_string_pretty(&to_json_value(instance)).expect("instance serializes")
}

pub fn load(path: impl AsRef<Path>) -> Result<MdpInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json_str(&text)
}

pub fn save(instance: &MdpInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json_string(instance);
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
