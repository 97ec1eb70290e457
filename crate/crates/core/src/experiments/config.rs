use crate::measure::{restrict, MetricSpec};
use crate::model::{build_controlled_model, ControlledModelSpec, HybridDelayModel};
use crate::prelude::*;
use crate::simulate::{InitialSegment, SegmentGrid, SimConfig};
use crate::switching::{Generator, Mode};
use crate::{Error, Result};

/// The system a scenario studies.
#[derive(Debug, Clone)]
pub enum ScenarioModel {
    General(HybridDelayModel),
    /// Sampled-data feedback; the delay-limit suites need this form.
    Controlled(ControlledModelSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleCounts {
    /// Paths per ensemble.
    pub paths: usize,
    /// Start times per Krylov-Bogolyubov measure.
    pub starts: usize,
    pub paths_per_start: usize,
    /// Independent ensemble pairs behind the statistical tolerance.
    pub calibration_pairs: usize,
    /// Coupled path pairs per initial condition in the endpoint study and
    /// for the pathwise contraction statistic.
    pub coupled_paths: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts { paths: 2000, starts: 200, paths_per_start: 10, calibration_pairs: 20, coupled_paths: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimePoints {
    /// Start time for the stability and endpoint studies.
    pub s: f64,
    /// Target time of the measure estimates.
    pub t: f64,
    /// Length of the burn-in standing in for the infinite past.
    pub burn_in: f64,
    /// Increasing lookbacks `n` of the Krylov-Bogolyubov ladder.
    pub lookbacks: Vec<f64>,
    /// Increasing observation times of the stability study.
    pub ladder: Vec<f64>,
    /// Time at which coupled endpoints are compared.
    pub endpoint_time: f64,
}

impl Default for TimePoints {
    fn default() -> Self {
        TimePoints {
            s: 0.0,
            t: 0.0,
            burn_in: 20.0,
            lookbacks: vec![10.0, 20.0, 40.0, 80.0],
            ladder: vec![1.0, 2.0, 5.0, 10.0, 15.0],
            endpoint_time: 1.0,
        }
    }
}

/// Initial history as a function on `[−ρ_full, 0]` (a constant or sampled
/// segment, typically on `[−1, 0]`) together with the initial mode.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialValue {
    Constant(Vec<f64>),
    Segment(SegmentGrid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub value: InitialValue,
    pub mode: Mode,
}

impl InitialCondition {
    pub fn constant(value: Vec<f64>, mode: Mode) -> Self {
        InitialCondition { value: InitialValue::Constant(value), mode }
    }

    pub fn dim(&self) -> usize {
        match &self.value {
            InitialValue::Constant(v) => v.len(),
            InitialValue::Segment(s) => s.dim(),
        }
    }

    /// The history restricted to `[−ρ, 0]` on `k + 1` points.
    pub fn segment(&self, rho: f64, k: usize) -> Result<SegmentGrid> {
        match &self.value {
            InitialValue::Constant(v) if rho == 0.0 => SegmentGrid::point(v.clone(), self.mode),
            InitialValue::Constant(v) => SegmentGrid::constant(rho, k, v, self.mode),
            InitialValue::Segment(s) if rho == 0.0 => Ok(s.to_point()),
            InitialValue::Segment(s) => restrict(s, rho, k),
        }
    }

    pub fn initial_segment(&self, rho: f64, k: usize) -> Result<InitialSegment> {
        match &self.value {
            InitialValue::Constant(v) => Ok(InitialSegment::Constant(v.clone())),
            InitialValue::Segment(_) => Ok(InitialSegment::Grid(self.segment(rho, k)?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightnessGrids {
    pub radii: Vec<f64>,
    pub etas: Vec<f64>,
}

impl Default for TightnessGrids {
    fn default() -> Self {
        TightnessGrids { radii: vec![0.1, 0.5, 1.0, 2.0, 5.0], etas: vec![0.01, 0.05, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Replaces the calibrated statistical tolerance when set.
    pub eps_stat: Option<f64>,
    /// Thresholds `η` of the coupled endpoint exceedance.
    pub exceedance_eta: Vec<f64>,
    /// Bound on the exceedance at the smallest ρ.
    pub final_exceedance: f64,
    /// The final delay-limit distance must be at most this multiple of the
    /// statistical tolerance.
    pub delay_limit_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { eps_stat: None, exceedance_eta: vec![0.1], final_exceedance: 0.05, delay_limit_factor: 2.0 }
    }
}

/// Whether the scenario is meant to satisfy its criteria or to violate them
/// (an expected-negative control).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Expectation {
    #[default]
    Pass,
    Fail,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub id: String,
    pub generator: Generator,
    pub model: ScenarioModel,
    pub metric: MetricSpec,
    pub sim: SimConfig,
    pub samples: SampleCounts,
    pub times: TimePoints,
    pub initial: Vec<InitialCondition>,
    /// Strictly decreasing observation intervals for the delay-limit suites.
    pub rho_ladder: Vec<f64>,
    pub tightness: TightnessGrids,
    pub tolerances: Tolerances,
    pub expect: Expectation,
}

/// A violated configuration constraint, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub field: String,
    pub constraint: String,
}

impl ValidationIssue {
    fn new(field: &str, constraint: impl Into<String>) -> Self {
        ValidationIssue { field: field.to_string(), constraint: constraint.into() }
    }
}

impl core::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

impl ScenarioConfig {
    /// The model at its configured delay bound.
    pub fn model(&self) -> Result<HybridDelayModel> {
        match &self.model {
            ScenarioModel::General(m) => Ok(m.clone()),
            ScenarioModel::Controlled(spec) => build_controlled_model(spec, &self.generator),
        }
    }

    pub fn controlled(&self) -> Result<&ControlledModelSpec> {
        match &self.model {
            ScenarioModel::Controlled(spec) => Ok(spec),
            ScenarioModel::General(_) => {
                Err(Error::InvalidArgument("this suite needs a sampled-data feedback model".to_string()))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            ScenarioModel::General(m) => m.dim(),
            ScenarioModel::Controlled(spec) => spec.dim,
        }
    }

    /// Steps per delay bound on the grid used for delay `rho`.
    pub fn steps_for(&self, rho: f64) -> Result<usize> {
        Ok(self.sim.grid_for(rho)?.steps_per_rho().unwrap_or(0))
    }

    pub fn validate(&self) -> core::result::Result<(), ValidationIssue> {
        let s = &self.samples;
        for (name, v) in [
            ("samples.paths", s.paths),
            ("samples.starts", s.starts),
            ("samples.paths_per_start", s.paths_per_start),
            ("samples.calibration_pairs", s.calibration_pairs),
            ("samples.coupled_paths", s.coupled_paths),
        ] {
            if v == 0 {
                return Err(ValidationIssue::new(name, "must be at least 1"));
            }
        }
        if self.initial.is_empty() {
            return Err(ValidationIssue::new("initial", "at least one initial condition is required"));
        }
        let dim = self.dim();
        if let Some(ic) = self.initial.iter().find(|ic| ic.dim() != dim) {
            return Err(ValidationIssue::new(
                "initial",
                format!("initial value of dimension {} for a model of dimension {dim}", ic.dim()),
            ));
        }
        if let Some(ic) = self.initial.iter().find(|ic| !self.generator.contains(ic.mode)) {
            return Err(ValidationIssue::new("initial", format!("mode {} is not a state of the generator", ic.mode)));
        }
        let model = self.model().map_err(|e| ValidationIssue::new("model", e.to_string()))?;
        let grid = self.sim.grid_for(model.rho()).map_err(|e| ValidationIssue::new("sim.dt", e.to_string()))?;
        let times = &self.times;
        for (name, v) in [("times.s", times.s), ("times.t", times.t), ("times.burn_in", times.burn_in)] {
            if grid.exact_index(v).is_none() {
                return Err(ValidationIssue::new(
                    name,
                    format!("{v} is not on the integration grid (dt = {})", grid.dt()),
                ));
            }
        }
        if !(times.burn_in > 0.0) {
            return Err(ValidationIssue::new("times.burn_in", "must be positive"));
        }
        if times.lookbacks.len() < 2 || times.lookbacks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ValidationIssue::new("times.lookbacks", "need at least two strictly increasing lookbacks"));
        }
        if times.lookbacks[0] + times.t - model.rho() <= 0.0 {
            return Err(ValidationIssue::new("times.lookbacks", "lookback leaves no room before t - rho"));
        }
        if times.ladder.is_empty() || times.ladder.windows(2).any(|w| !(w[0] < w[1])) || times.ladder[0] <= times.s {
            return Err(ValidationIssue::new("times.ladder", "must be strictly increasing and after s"));
        }
        if let Some(v) = times.ladder.iter().find(|v| grid.exact_index(**v).is_none()) {
            return Err(ValidationIssue::new("times.ladder", format!("{v} is not on the integration grid")));
        }
        if !(times.endpoint_time > times.s) {
            return Err(ValidationIssue::new("times.endpoint_time", "must be after s"));
        }
        if self.rho_ladder.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(ValidationIssue::new("rho_ladder", "must be strictly decreasing"));
        }
        for &rho in &self.rho_ladder {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(ValidationIssue::new("rho_ladder", format!("{rho} outside (0, 1]")));
            }
            let g = self
                .sim
                .grid_for(rho)
                .map_err(|e| ValidationIssue::new("rho ladder / grid alignment", e.to_string()))?;
            for (name, v) in [
                ("times.s", times.s),
                ("times.t", times.t),
                ("times.endpoint_time", times.endpoint_time),
                ("times.burn_in", times.burn_in),
            ] {
                if g.exact_index(v).is_none() {
                    return Err(ValidationIssue::new(
                        "rho ladder / grid alignment",
                        format!("{name} = {v} is not a multiple of dt = {} used for rho = {rho}", g.dt()),
                    ));
                }
            }
        }
        let t = &self.tolerances;
        if let Some(eps) = t.eps_stat {
            if !(eps > 0.0) {
                return Err(ValidationIssue::new("tolerances.eps_stat", "must be positive"));
            }
        }
        if t.exceedance_eta.iter().any(|e| !(*e > 0.0)) {
            return Err(ValidationIssue::new("tolerances.exceedance_eta", "must be positive"));
        }
        if !(t.final_exceedance >= 0.0 && t.final_exceedance <= 1.0) {
            return Err(ValidationIssue::new("tolerances.final_exceedance", "must lie in [0, 1]"));
        }
        if !(t.delay_limit_factor > 0.0) {
            return Err(ValidationIssue::new("tolerances.delay_limit_factor", "must be positive"));
        }
        if self.tightness.radii.iter().chain(&self.tightness.etas).any(|v| !(*v >= 0.0)) {
            return Err(ValidationIssue::new("tightness", "grids must be nonnegative"));
        }
        Ok(())
    }
}
