use std::path::Path;

use star_sim::config::{ConfigError, ExperimentConfig, ObjectiveKind, SolverKind};

fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg = ExperimentConfig::from_json(text, Path::new("cfg.json"))?;
    cfg.resolve()?;
    Ok(cfg)
}

fn field_of(e: ConfigError) -> String {
    match e {
        ConfigError::Validation { field, .. } => field,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn empty_object_gets_printed_defaults() {
    let cfg = parse("{}").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let printed = ExperimentConfig::default().to_json();
    assert_eq!(parse(&printed).unwrap(), cfg);
}

#[test]
fn defaults_resolve_to_the_library_scenario() {
    let r = ExperimentConfig::default().resolve().unwrap();
    let lib = star_sim_core::scenarios::NetworkScenario::default();
    assert_eq!(r.scenario.layout, lib.layout);
    assert_eq!(r.scenario.trials, lib.trials);
    assert!((r.scenario.power_budget - lib.power_budget).abs() < 1e-12);
    assert!((r.scenario.noise_power - lib.noise_power).abs() < 1e-22);
    assert!((r.scenario.fading.reference_gain - lib.fading.reference_gain).abs() < 1e-15);
    for (a, b) in r.scenario.users.iter().zip(&lib.users) {
        assert_eq!(a.side, b.side);
        for k in 0..3 {
            assert!((a.position[k] - b.position[k]).abs() < 1e-3);
        }
    }
}

#[test]
fn round_trip_is_identity() {
    let text = r#"{
        "seed": 11,
        "trials": 3,
        "solver": "element_wise",
        "objective": "min_power",
        "frequency": "28000 MHz",
        "surface": { "rows": 2, "cols": 8, "spacing": "5 mm" },
        "bs": { "position": ["-10 m", "-10 m", "0 m"], "antennas": 1, "spacing": "0.5 lambda" },
        "users": [
            { "position": ["-5 m", "5 m", "1 m"], "side": "reflection", "sinr_target": "3 dB" },
            { "position": ["5 m", "5 m", "0 m"], "side": "transmission", "sinr_target": "2 lin" }
        ],
        "noise_power": "1e-12 W",
        "power_budget": "500 mW",
        "fading": { "rician_k": "inf lin", "field_model": "near_field", "direct_link": true },
        "penalty": { "violation_tol": "0.01 deg" },
        "sweep": { "axis": "budget", "values": ["10 dBm", "20 dBm"] }
    }"#;
    let a = parse(text).unwrap();
    assert_eq!(a.solver, SolverKind::ElementWise);
    assert_eq!(a.objective, ObjectiveKind::MinPower);
    let b = parse(&a.to_json()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn negative_noise_power_names_the_field() {
    let e = parse(r#"{ "noise_power": "-1 W" }"#).unwrap_err();
    assert_eq!(field_of(e), "noise_power");
}

#[test]
fn bare_numbers_for_quantities_are_rejected_with_position() {
    let text = "{\n  \"trials\": 2,\n  \"power_budget\": 30\n}";
    match parse(text).unwrap_err() {
        ConfigError::Parse { line, message, .. } => {
            assert_eq!(line, 3);
            assert!(message.contains("no unit"), "{message}");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn wrong_unit_is_rejected() {
    assert!(matches!(
        parse(r#"{ "frequency": "3.5 dBm" }"#),
        Err(ConfigError::Parse { .. })
    ));
}

#[test]
fn unknown_keys_are_errors() {
    assert!(matches!(parse(r#"{ "sead": 1 }"#), Err(ConfigError::Parse { .. })));
    assert!(matches!(
        parse(r#"{ "surface": { "rows": 2, "colums": 2 } }"#),
        Err(ConfigError::Parse { .. })
    ));
}

#[test]
fn invariant_violations_name_their_field() {
    let cases = [
        (r#"{ "trials": 0 }"#, "trials"),
        (r#"{ "surface": { "rows": 0 } }"#, "surface"),
        (r#"{ "bs": { "antennas": 0 } }"#, "bs.antennas"),
        (r#"{ "users": [] }"#, "users"),
        (r#"{ "penalty": { "growth": 0.5 } }"#, "penalty"),
        (
            r#"{ "time_fractions": [0.7, 0.7], "protocol": "time_switching" }"#,
            "time_fractions",
        ),
        (r#"{ "time_fractions": [0.5, 0.5] }"#, "time_fractions"),
        (r#"{ "solver": "element_wise" }"#, "solver"),
        (
            r#"{ "solver": "alternating", "protocol": "mode_switching" }"#,
            "protocol",
        ),
        (
            r#"{ "sweep": { "axis": "budget", "values": ["20 dBm", "10 dBm", "30 dBm"] } }"#,
            "sweep.values",
        ),
        (r#"{ "sweep": { "axis": "distance", "values": [] } }"#, "sweep.values"),
        (r#"{ "sweep": { "axis": "budget", "values": [3] } }"#, "sweep.values"),
    ];
    for (text, field) in cases {
        assert_eq!(field_of(parse(text).unwrap_err()), field, "{text}");
    }
}

#[test]
fn malformed_json_reports_line_and_column() {
    match parse("{\n  \"seed\": 1,\n  oops\n}").unwrap_err() {
        ConfigError::Parse { line, column, .. } => {
            assert_eq!(line, 3);
            assert!(column > 0);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn missing_file_is_an_io_error_with_path() {
    let e = ExperimentConfig::load(Path::new("/definitely/not/here.json")).unwrap_err();
    assert!(matches!(e, ConfigError::Io { .. }));
    assert!(e.to_string().contains("/definitely/not/here.json"));
}
