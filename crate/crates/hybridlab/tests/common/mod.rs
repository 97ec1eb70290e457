#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn benchmark_json() -> Value {
    let text = std::fs::read_to_string(scenario_path("certified_benchmark.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// The certified benchmark with sample sizes small enough for quick runs.
pub fn small_benchmark_json() -> Value {
    let mut v = benchmark_json();
    v["samples"] = json!({
        "paths": 80, "starts": 16, "paths_per_start": 5, "calibration_pairs": 5, "coupled_paths": 200
    });
    v["times"]["burn_in"] = json!(4.0);
    v["times"]["lookbacks"] = json!([2.0, 4.0]);
    v["times"]["ladder"] = json!([1.0, 3.0]);
    v
}

pub fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}
