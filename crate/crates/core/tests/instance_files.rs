//! Instance files on disk.

use cvar_mdp::model::{builtin, from_json_str, load, random_instance, save, BUILTIN_NAMES};
use cvar_mdp::risk::RiskParams;
use cvar_mdp::solver::{solve_cvar, SolverOptions};
use cvar_mdp::Error;

#[test]
fn builtins_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in BUILTIN_NAMES {
        let inst = builtin(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        save(&inst, &path).unwrap();
        assert_eq!(load(&path).unwrap(), inst, "{name}");
    }
}

#[test]
fn reloaded_instance_solves_identically() {
    let dir = tempfile::tempdir().unwrap();
    let inst = random_instance(11, 4, 3, (0.0, 50.0)).unwrap();
    let path = dir.path().join("r.json");
    save(&inst, &path).unwrap();
    let params = RiskParams::new(0.6, 0.25).unwrap();
    let a = solve_cvar(&inst, &params, &SolverOptions::default()).unwrap();
    let b = solve_cvar(&load(&path).unwrap(), &params, &SolverOptions::default()).unwrap();
    assert_eq!(a.v_star, b.v_star);
    assert_eq!(a.policy, b.policy);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load("/nonexistent/instance.json").unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[test]
fn malformed_json_reports_position() {
    let err = from_json_str("{\n  \"name\": \"x\",\n  \"states\": [\n").unwrap_err();
    match err {
        Error::Parse { line, .. } => assert!(line >= 3),
        other => panic!("unexpected {other}"),
    }
}
