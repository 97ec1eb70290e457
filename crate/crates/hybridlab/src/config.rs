//! JSON scenario files.
//!
//! A scenario file describes one model together with everything the suites
//! need (sample sizes, time points, initial data, tolerances). Parsing is
//! strict: unknown keys are rejected, and every cheap model check (generator
//! validity, shapes, the linear dissipativity certificate) runs eagerly with
//! its outcome kept in the scenario's provenance.

use std::path::Path;
use std::sync::Arc;

use hybridlab_core::experiments::{
    Expectation, InitialCondition, InitialValue, SampleCounts, ScenarioConfig, ScenarioModel, Suite, TightnessGrids,
    TimePoints, Tolerances,
};
use hybridlab_core::measure::{MetricSpec, ModeMetric, DEFAULT_ATOM_CAP};
use hybridlab_core::model::{
    check_dissipativity_linear, named_drift, ControlledModelSpec, DelaySpec, DissipativityVerdict, HybridDelayModel,
    LinearCoefficients, LinearModeCoefficients, LinearModeMatrices, LinearNoise, TabulatedDelay,
};
use hybridlab_core::rng::{derive_seed, tag};
use hybridlab_core::simulate::{SegmentGrid, SimConfig, DEFAULT_BLOWUP_GUARD};
use hybridlab_core::switching::stationary_distribution;
use hybridlab_core::{Generator, Mat, Mode};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    #[serde(default)]
    seed: u64,
    generator: Option<Matrix>,
    model: RawModel,
    #[serde(default)]
    metric: RawMetric,
    sim: RawSim,
    #[serde(default)]
    samples: RawSamples,
    #[serde(default)]
    times: RawTimes,
    initial: Vec<RawInitial>,
    #[serde(default)]
    rho_ladder: Vec<f64>,
    #[serde(default)]
    tightness: RawTightness,
    #[serde(default)]
    tolerances: RawTolerances,
    #[serde(default)]
    expect: RawExpect,
    /// Suites run by `suite` when none is named on the command line.
    suites: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawModel {
    Controlled {
        dim: usize,
        noise_dim: usize,
        drift: RawDrift,
        noise: RawNoise,
        gains: Vec<Matrix>,
        rho: f64,
        certificate_q: Option<Vec<Matrix>>,
    },
    Linear {
        dim: usize,
        noise_dim: usize,
        delay: RawDelay,
        modes: Vec<RawLinearMode>,
        certificate_q: Option<Vec<Matrix>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    name: String,
    matrices: Vec<Matrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    offsets: Option<Vec<Matrix>>,
    columns: Vec<Vec<Matrix>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawDelay {
    None,
    Constant { rho: f64 },
    Sawtooth { rho: f64 },
    Tabulated { rho: f64, knots: Vec<[f64; 2]> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinearMode {
    offset: Option<Vec<f64>>,
    state: Matrix,
    delayed: Option<Matrix>,
    noise_offset: Option<Matrix>,
    noise_state: Option<Vec<Matrix>>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawModeMetric {
    LabelDifference,
    Discrete,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMetric {
    mode_metric: RawModeMetric,
    atom_cap: usize,
    subsample_seed: Option<u64>,
}

impl Default for RawMetric {
    fn default() -> Self {
        RawMetric { mode_metric: RawModeMetric::LabelDifference, atom_cap: DEFAULT_ATOM_CAP, subsample_seed: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: f64,
    steps_per_rho: Option<u32>,
    blowup_guard: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSamples {
    paths: usize,
    starts: usize,
    paths_per_start: usize,
    calibration_pairs: usize,
    coupled_paths: usize,
}

impl Default for RawSamples {
    fn default() -> Self {
        let d = SampleCounts::default();
        RawSamples {
            paths: d.paths,
            starts: d.starts,
            paths_per_start: d.paths_per_start,
            calibration_pairs: d.calibration_pairs,
            coupled_paths: d.coupled_paths,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTimes {
    s: f64,
    t: f64,
    burn_in: f64,
    lookbacks: Vec<f64>,
    ladder: Vec<f64>,
    endpoint_time: f64,
}

impl Default for RawTimes {
    fn default() -> Self {
        let d = TimePoints::default();
        RawTimes {
            s: d.s,
            t: d.t,
            burn_in: d.burn_in,
            lookbacks: d.lookbacks,
            ladder: d.ladder,
            endpoint_time: d.endpoint_time,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    /// Constant history.
    constant: Option<Vec<f64>>,
    /// Equally spaced samples of the history on `[-1, 0]`, oldest first.
    segment: Option<Matrix>,
    #[serde(default = "first_mode")]
    mode: u32,
}

fn first_mode() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTightness {
    radii: Vec<f64>,
    etas: Vec<f64>,
}

impl Default for RawTightness {
    fn default() -> Self {
        let d = TightnessGrids::default();
        RawTightness { radii: d.radii, etas: d.etas }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawTolerances {
    eps_stat: Option<f64>,
    exceedance_eta: Vec<f64>,
    final_exceedance: f64,
    delay_limit_factor: f64,
}

impl Default for RawTolerances {
    fn default() -> Self {
        let d = Tolerances::default();
        RawTolerances {
            eps_stat: d.eps_stat,
            exceedance_eta: d.exceedance_eta,
            final_exceedance: d.final_exceedance,
            delay_limit_factor: d.delay_limit_factor,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum RawExpect {
    #[default]
    Pass,
    Fail,
}

/// Command-line replacements applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps_per_rho: Option<u32>,
    pub atom_cap: Option<usize>,
}

/// Outcome of the eager linear dissipativity test.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertificateRecord {
    Certified { beta: f64 },
    Refuted { mode: u32, lambda_max: f64 },
    NotApplicable { reason: String },
}

/// Everything needed to interpret an output after the fact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub scenario: String,
    pub tool_version: String,
    pub core_version: String,
    pub master_seed: u64,
    pub subsample_seed: u64,
    pub dt: f64,
    pub steps_per_rho: Option<u32>,
    pub atom_cap: usize,
    pub stationary_distribution: Vec<f64>,
    pub certificate: CertificateRecord,
}

/// A parsed, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub provenance: Provenance,
    pub suites: Vec<Suite>,
}

pub fn load_scenario(path: &Path, overrides: &Overrides) -> Result<Scenario, LabError> {
    let text = std::fs::read_to_string(path).map_err(|source| LabError::Read { path: path.to_path_buf(), source })?;
    parse_scenario(&text, overrides)
}

fn invalid(field: &str, constraint: impl Into<String>) -> LabError {
    LabError::Validation { field: field.to_string(), constraint: constraint.into() }
}

fn matrix(field: &str, rows: &Matrix) -> Result<Mat, LabError> {
    Mat::from_rows(rows).map_err(|e| invalid(field, e.to_string()))
}

fn matrices(field: &str, list: &[Matrix]) -> Result<Vec<Mat>, LabError> {
    list.iter().map(|m| matrix(field, m)).collect()
}

fn check_count(field: &str, got: usize, modes: usize) -> Result<(), LabError> {
    if got == modes {
        Ok(())
    } else {
        Err(invalid(field, format!("{got} entries for {modes} modes")))
    }
}

pub fn parse_scenario(text: &str, overrides: &Overrides) -> Result<Scenario, LabError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| LabError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let rates = raw.generator.as_ref().ok_or_else(|| invalid("generator", "missing"))?;
    let generator = Generator::from_rows(rates).map_err(|e| invalid("generator", e.to_string()))?;
    let n_modes = generator.n_states();

    let (model, q) = match raw.model {
        RawModel::Controlled { dim, noise_dim, drift, noise, gains, rho, certificate_q } => {
            check_count("model.drift.matrices", drift.matrices.len(), n_modes)?;
            check_count("model.gains", gains.len(), n_modes)?;
            check_count("model.noise.columns", noise.columns.len(), n_modes)?;
            let f = matrices("model.drift.matrices", &drift.matrices)?;
            let a = matrices("model.gains", &gains)?;
            let columns: Vec<Vec<Mat>> =
                noise.columns.iter().map(|c| matrices("model.noise.columns", c)).collect::<Result<_, _>>()?;
            let offsets = match &noise.offsets {
                Some(o) => {
                    check_count("model.noise.offsets", o.len(), n_modes)?;
                    matrices("model.noise.offsets", o)?
                }
                None => vec![Mat::zeros(dim, noise_dim); n_modes],
            };
            for m in f.iter().chain(&a).chain(columns.iter().flatten()) {
                if (m.rows(), m.cols()) != (dim, dim) {
                    return Err(invalid(
                        "model",
                        format!("matrix of shape {}x{}, expected {dim}x{dim}", m.rows(), m.cols()),
                    ));
                }
            }
            if columns.iter().any(|c| c.len() != noise_dim) {
                return Err(invalid("model.noise.columns", format!("each mode needs {noise_dim} noise columns")));
            }
            if offsets.iter().any(|o| (o.rows(), o.cols()) != (dim, noise_dim)) {
                return Err(invalid("model.noise.offsets", format!("offsets must be {dim}x{noise_dim}")));
            }
            let linear = drift.name == "linear";
            let linear_modes: Vec<LinearModeMatrices> = (0..n_modes)
                .map(|j| LinearModeMatrices { state: f[j].clone(), gain: a[j].clone(), noise: columns[j].clone() })
                .collect();
            let h = named_drift(&drift.name, f).map_err(|e| invalid("model.drift.name", e.to_string()))?;
            let spec = ControlledModelSpec {
                dim,
                noise_dim,
                h,
                sigma: Arc::new(LinearNoise { offsets, columns }),
                gains: a,
                rho,
            };
            let q = certificate_q.map(|q| matrices("model.certificate_q", &q)).transpose()?;
            let cert_input = linear.then_some(linear_modes);
            (ScenarioModel::Controlled(spec), (cert_input, q, dim))
        }
        RawModel::Linear { dim, noise_dim, delay, modes, certificate_q } => {
            check_count("model.modes", modes.len(), n_modes)?;
            let mut coefficients = Vec::with_capacity(n_modes);
            for m in &modes {
                let mut c = LinearModeCoefficients::zeros(dim, noise_dim);
                c.state = matrix("model.modes.state", &m.state)?;
                if let Some(o) = &m.offset {
                    c.offset = o.clone();
                }
                if let Some(d) = &m.delayed {
                    c.delayed = matrix("model.modes.delayed", d)?;
                }
                if let Some(s) = &m.noise_offset {
                    c.noise_offset = matrix("model.modes.noise_offset", s)?;
                }
                if let Some(g) = &m.noise_state {
                    c.noise_state = matrices("model.modes.noise_state", g)?;
                }
                coefficients.push(c);
            }
            let delay = match delay {
                RawDelay::None => DelaySpec::None,
                RawDelay::Constant { rho } => DelaySpec::Constant { rho },
                RawDelay::Sawtooth { rho } => DelaySpec::Sawtooth { rho },
                RawDelay::Tabulated { rho, knots } => DelaySpec::Tabulated(
                    TabulatedDelay::new(rho, knots.iter().map(|k| (k[0], k[1])).collect())
                        .map_err(|e| invalid("model.delay", e.to_string()))?,
                ),
            };
            let linear_modes: Vec<LinearModeMatrices> = coefficients
                .iter()
                .map(|c| LinearModeMatrices {
                    state: c.state.clone(),
                    gain: c.delayed.clone(),
                    noise: c.noise_state.clone(),
                })
                .collect();
            let lin = LinearCoefficients::new(dim, noise_dim, coefficients)
                .map_err(|e| invalid("model.modes", e.to_string()))?;
            let model =
                HybridDelayModel::linear(lin, delay, generator.clone()).map_err(|e| invalid("model", e.to_string()))?;
            let q = certificate_q.map(|q| matrices("model.certificate_q", &q)).transpose()?;
            (ScenarioModel::General(model), (Some(linear_modes), q, dim))
        }
    };

    let seed = overrides.seed.unwrap_or(raw.seed);
    let atom_cap = overrides.atom_cap.unwrap_or(raw.metric.atom_cap);
    let subsample_seed = raw.metric.subsample_seed.unwrap_or_else(|| derive_seed(seed, tag("subsample")));
    let steps_per_rho = overrides.steps_per_rho.or(raw.sim.steps_per_rho);
    let sim = SimConfig {
        dt: raw.sim.dt,
        steps_per_rho,
        seed,
        blowup_guard: raw.sim.blowup_guard.unwrap_or(DEFAULT_BLOWUP_GUARD),
    };
    if sim.blowup_guard.is_nan() || sim.blowup_guard <= 0.0 {
        return Err(invalid("sim.blowup_guard", "must be positive"));
    }

    let mut initial = Vec::with_capacity(raw.initial.len());
    for ic in &raw.initial {
        if ic.mode == 0 {
            return Err(invalid("initial.mode", "modes are numbered from 1"));
        }
        let mode = Mode::new(ic.mode);
        let value = match (&ic.constant, &ic.segment) {
            (Some(c), None) => InitialValue::Constant(c.clone()),
            (None, Some(samples)) => {
                if samples.len() < 2 {
                    return Err(invalid("initial.segment", "need at least two samples on [-1, 0]"));
                }
                let dim = samples[0].len();
                let flat: Vec<f64> = samples.iter().flatten().copied().collect();
                if samples.iter().any(|s| s.len() != dim) {
                    return Err(invalid("initial.segment", "samples must share one dimension"));
                }
                InitialValue::Segment(
                    SegmentGrid::new(1.0, dim, flat, mode).map_err(|e| invalid("initial.segment", e.to_string()))?,
                )
            }
            _ => return Err(invalid("initial", "give exactly one of `constant` or `segment`")),
        };
        initial.push(InitialCondition { value, mode });
    }

    let config = ScenarioConfig {
        id: raw.id.clone(),
        generator: generator.clone(),
        model,
        metric: MetricSpec {
            mode_metric: match raw.metric.mode_metric {
                RawModeMetric::LabelDifference => ModeMetric::LabelDifference,
                RawModeMetric::Discrete => ModeMetric::Discrete,
            },
            atom_cap,
            subsample_seed,
        },
        sim,
        samples: SampleCounts {
            paths: raw.samples.paths,
            starts: raw.samples.starts,
            paths_per_start: raw.samples.paths_per_start,
            calibration_pairs: raw.samples.calibration_pairs,
            coupled_paths: raw.samples.coupled_paths,
        },
        times: TimePoints {
            s: raw.times.s,
            t: raw.times.t,
            burn_in: raw.times.burn_in,
            lookbacks: raw.times.lookbacks,
            ladder: raw.times.ladder,
            endpoint_time: raw.times.endpoint_time,
        },
        initial,
        rho_ladder: raw.rho_ladder,
        tightness: TightnessGrids { radii: raw.tightness.radii, etas: raw.tightness.etas },
        tolerances: Tolerances {
            eps_stat: raw.tolerances.eps_stat,
            exceedance_eta: raw.tolerances.exceedance_eta,
            final_exceedance: raw.tolerances.final_exceedance,
            delay_limit_factor: raw.tolerances.delay_limit_factor,
        },
        expect: match raw.expect {
            RawExpect::Pass => Expectation::Pass,
            RawExpect::Fail => Expectation::Fail,
        },
    };
    config.validate().map_err(|issue| LabError::Validation { field: issue.field, constraint: issue.constraint })?;

    let (linear_modes, q, dim) = q;
    let certificate = match linear_modes {
        None => CertificateRecord::NotApplicable { reason: "drift is not linear".to_string() },
        Some(modes) => {
            let q = q.unwrap_or_else(|| vec![Mat::identity(dim); n_modes]);
            match check_dissipativity_linear(&modes, &generator, &q)
                .map_err(|e| invalid("model.certificate_q", e.to_string()))?
            {
                DissipativityVerdict::Certified(c) => CertificateRecord::Certified { beta: c.beta },
                DissipativityVerdict::Refuted { mode, lambda_max } => {
                    CertificateRecord::Refuted { mode: mode.label(), lambda_max }
                }
            }
        }
    };

    let suites = match &raw.suites {
        Some(names) => names
            .iter()
            .map(|n| Suite::from_name(n).ok_or_else(|| invalid("suites", format!("unknown suite `{n}`"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => match config.model {
            ScenarioModel::Controlled(_) if !config.rho_ladder.is_empty() => Suite::ALL.to_vec(),
            _ => vec![Suite::Existence, Suite::Periodicity, Suite::Stability],
        },
    };

    let provenance = Provenance {
        scenario: raw.id,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: hybridlab_core::VERSION.to_string(),
        master_seed: seed,
        subsample_seed,
        dt: config.sim.dt,
        steps_per_rho,
        atom_cap,
        stationary_distribution: stationary_distribution(&generator)
            .map_err(|e| invalid("generator", e.to_string()))?,
        certificate,
    };
    Ok(Scenario { config, provenance, suites })
}
