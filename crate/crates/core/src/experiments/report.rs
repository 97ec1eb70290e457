use super::config::Expectation;
use crate::prelude::*;
use crate::Error;

/// The five empirical studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Existence,
    Periodicity,
    Stability,
    EndpointConvergence,
    DelayLimit,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Suite::Existence, Suite::Periodicity, Suite::Stability, Suite::EndpointConvergence, Suite::DelayLimit];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Existence => "existence",
            Suite::Periodicity => "periodicity",
            Suite::Stability => "stability",
            Suite::EndpointConvergence => "endpoint_convergence",
            Suite::DelayLimit => "delay_limit",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// One measured quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// What was measured, e.g. `kb_consecutive_distance`.
    pub quantity: String,
    /// The setting it was measured at, e.g. `n=20->40`.
    pub parameter: String,
    pub value: f64,
    /// Tolerance the value is judged against, if any.
    pub tolerance: Option<f64>,
}

/// A pass/fail judgement derived from the rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    /// How `value` is compared with `threshold`.
    pub rule: String,
    /// Binding verdicts decide the suite outcome; the criteria of an
    /// expected-negative scenario are reported but not binding.
    pub binding: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: String,
    pub suite: Suite,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
    /// Seeds of every independent sample, by label.
    pub seeds: Vec<(String, u64)>,
    /// Numerical failure that cut the run short.
    pub failure: Option<String>,
}

impl ExperimentReport {
    pub(crate) fn new(scenario: &str, suite: Suite) -> Self {
        ExperimentReport {
            scenario: scenario.to_string(),
            suite,
            rows: Vec::new(),
            verdicts: Vec::new(),
            seeds: Vec::new(),
            failure: None,
        }
    }

    pub(crate) fn row(&mut self, quantity: &str, parameter: String, value: f64, tolerance: Option<f64>) {
        self.rows.push(ReportRow { quantity: quantity.to_string(), parameter, value, tolerance });
    }

    pub(crate) fn at_most(&mut self, criterion: &str, value: f64, threshold: f64) {
        self.verdicts.push(Verdict {
            criterion: criterion.to_string(),
            passed: value <= threshold,
            value,
            threshold,
            rule: "value <= threshold".to_string(),
            binding: true,
        });
    }

    pub(crate) fn record_failure(&mut self, error: &Error) {
        let message = error.to_string();
        self.verdicts.push(Verdict {
            criterion: "run completes without numerical failure".to_string(),
            passed: false,
            value: f64::NAN,
            threshold: f64::NAN,
            rule: format!("numerical failure: {message}"),
            binding: true,
        });
        self.failure = Some(message);
    }

    /// Apply the scenario's expectation: for an expected-negative control
    /// the criteria become informational and a single binding verdict asks
    /// that at least one of them failed.
    pub(crate) fn finish(&mut self, expect: Expectation) {
        if expect == Expectation::Fail {
            let failed = self.verdicts.iter().filter(|v| !v.passed).count();
            for v in &mut self.verdicts {
                v.binding = false;
            }
            self.verdicts.push(Verdict {
                criterion: "expected-negative control violates its criteria".to_string(),
                passed: failed > 0,
                value: failed as f64,
                threshold: 1.0,
                rule: "failed criteria >= threshold".to_string(),
                binding: true,
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().filter(|v| v.binding).all(|v| v.passed)
    }

    /// First binding verdict that failed.
    pub fn first_failure(&self) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.binding && !v.passed)
    }

    pub fn value(&self, quantity: &str, parameter: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.quantity == quantity && r.parameter == parameter).map(|r| r.value)
    }

    pub fn values(&self, quantity: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.quantity == quantity).map(|r| r.value).collect()
    }
}
