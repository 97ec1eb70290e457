mod common;

use common::{benchmark_json, small_benchmark_json};
use hybridlab::config::{parse_scenario, CertificateRecord, Overrides};
use hybridlab::LabError;
use hybridlab_core::experiments::{Expectation, InitialValue, ScenarioModel, Suite};
use hybridlab_core::model::DelaySpec;
use serde_json::json;

fn parse(v: &serde_json::Value) -> Result<hybridlab::Scenario, LabError> {
    parse_scenario(&v.to_string(), &Overrides::default())
}

fn field_of(err: LabError) -> String {
    match err {
        LabError::Validation { field, .. } => field,
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn benchmark_parses_with_certificate_and_defaults() {
    let sc = parse(&benchmark_json()).unwrap();
    assert_eq!(sc.provenance.certificate, CertificateRecord::Certified { beta: 1.75 });
    assert_eq!(sc.config.rho_ladder, vec![0.4, 0.2, 0.1, 0.05]);
    assert_eq!(sc.config.expect, Expectation::Pass);
    assert_eq!(sc.suites, Suite::ALL.to_vec());
    let pi = &sc.provenance.stationary_distribution;
    assert!((pi[0] - 2.0 / 3.0).abs() < 1e-12 && (pi[1] - 1.0 / 3.0).abs() < 1e-12);
    // the default Q is the identity, which is what the benchmark states explicitly
    let mut no_q = benchmark_json();
    no_q["model"].as_object_mut().unwrap().remove("certificate_q");
    assert_eq!(parse(&no_q).unwrap().provenance.certificate, CertificateRecord::Certified { beta: 1.75 });
}

#[test]
fn overrides_replace_seed_steps_and_cap() {
    let overrides = Overrides { seed: Some(9), steps_per_rho: Some(4), atom_cap: Some(50) };
    let sc = parse_scenario(&small_benchmark_json().to_string(), &overrides).unwrap();
    assert_eq!(sc.config.sim.seed, 9);
    assert_eq!(sc.config.sim.steps_per_rho, Some(4));
    assert_eq!(sc.config.metric.atom_cap, 50);
    assert_eq!(sc.provenance.master_seed, 9);
    // the subsampling seed follows the master seed unless given
    let other =
        parse_scenario(&small_benchmark_json().to_string(), &Overrides { seed: Some(10), ..overrides }).unwrap();
    assert_ne!(sc.config.metric.subsample_seed, other.config.metric.subsample_seed);
}

#[test]
fn refuted_and_nonlinear_certificates_are_recorded() {
    let mut v = small_benchmark_json();
    v["model"]["gains"] = json!([[[0.0]], [[0.0]]]);
    match parse(&v).unwrap().provenance.certificate {
        CertificateRecord::Refuted { mode, lambda_max } => {
            assert_eq!(mode, 1);
            assert!((lambda_max - 2.25).abs() < 1e-12);
        }
        other => panic!("{other:?}"),
    }
    let mut v = small_benchmark_json();
    v["model"]["drift"]["name"] = json!("cubic");
    assert!(matches!(parse(&v).unwrap().provenance.certificate, CertificateRecord::NotApplicable { .. }));
}

#[test]
fn general_linear_model_with_segment_history() {
    let v = json!({
        "id": "linear_tabulated",
        "generator": [[0.0]],
        "model": {
            "kind": "linear",
            "dim": 1,
            "noise_dim": 1,
            "delay": { "kind": "tabulated", "rho": 0.2, "knots": [[0.0, 0.0], [0.5, 0.2], [1.0, 0.0]] },
            "modes": [{ "state": [[-1.0]], "delayed": [[0.5]], "noise_offset": [[0.3]] }]
        },
        "sim": { "dt": 0.05 },
        "samples": { "paths": 10, "starts": 2, "paths_per_start": 5, "calibration_pairs": 2, "coupled_paths": 10 },
        "times": { "s": 0.0, "t": 0.0, "burn_in": 1.0, "lookbacks": [1.0, 2.0], "ladder": [0.5, 1.0], "endpoint_time": 0.5 },
        "initial": [
            { "segment": [[0.0], [0.5], [1.0]], "mode": 1 },
            { "constant": [2.0] }
        ]
    });
    let sc = parse(&v).unwrap();
    match &sc.config.model {
        ScenarioModel::General(m) => assert!(matches!(m.delay(), DelaySpec::Tabulated(_))),
        other => panic!("{other:?}"),
    }
    match &sc.config.initial[0].value {
        InitialValue::Segment(g) => {
            assert_eq!(g.rho(), 1.0);
            assert_eq!(g.endpoint(), &[1.0]);
        }
        other => panic!("{other:?}"),
    }
    // the stability eigenvalue test uses F + A on the diagonal: -1 + 0.5 < 0
    assert!(matches!(sc.provenance.certificate, CertificateRecord::Certified { .. }));
    // without feedback gains the delay suites are not offered
    assert_eq!(sc.suites, vec![Suite::Existence, Suite::Periodicity, Suite::Stability]);
}

#[test]
fn validation_errors_name_fields() {
    let cases = [
        ("generator", {
            let mut v = small_benchmark_json();
            v.as_object_mut().unwrap().remove("generator");
            v
        }),
        ("generator", {
            let mut v = small_benchmark_json();
            v["generator"] = json!([[-1.0, 0.5], [2.0, -2.0]]);
            v
        }),
        ("rho ladder / grid alignment", {
            let mut v = small_benchmark_json();
            v["rho_ladder"] = json!([0.4, 0.2, 0.1, 0.0525]);
            v
        }),
        ("model.gains", {
            let mut v = small_benchmark_json();
            v["model"]["gains"] = json!([[[-2.0]]]);
            v
        }),
        ("initial", {
            let mut v = small_benchmark_json();
            v["initial"] = json!([{ "constant": [0.0, 1.0], "mode": 1 }]);
            v
        }),
        ("initial.mode", {
            let mut v = small_benchmark_json();
            v["initial"][0]["mode"] = json!(0);
            v
        }),
        ("suites", {
            let mut v = small_benchmark_json();
            v["suites"] = json!(["ergodicity"]);
            v
        }),
        ("samples.paths", {
            let mut v = small_benchmark_json();
            v["samples"]["paths"] = json!(0);
            v
        }),
    ];
    for (field, v) in cases {
        assert_eq!(field_of(parse(&v).unwrap_err()), field);
    }
}

#[test]
fn parse_errors_carry_positions() {
    match parse_scenario("{\n  \"id\": 3\n}", &Overrides::default()) {
        Err(LabError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let mut v = small_benchmark_json();
    v["model"]["kind"] = json!("neural");
    assert!(matches!(parse(&v), Err(LabError::Parse { .. })));
    assert_eq!(LabError::Parse { line: 1, column: 1, message: String::new() }.exit_code(), 2);
}
