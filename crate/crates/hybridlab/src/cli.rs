//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hybridlab_core::experiments::{run_suite, ExperimentReport, Suite};
use hybridlab_core::measure::{ensemble_at, tightness_report};
use hybridlab_core::rng::{derive_seed, tag};
use hybridlab_core::simulate::integrate;
use hybridlab_core::Error;

use crate::config::{load_scenario, CertificateRecord, Overrides, Scenario};
use crate::error::LabError;
use crate::output::{
    atomic_write, measure_csv, mode_path_csv, provenance_json, scenario_dir, trajectory_csv, write_suite_outputs,
    PROVENANCE_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "hybridlab", version, about = "Simulate hybrid delay SDEs and test their limiting laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check a scenario, printing its provenance.
    Validate(CommonArgs),
    /// Integrate one path per initial condition and write trajectory CSVs.
    Simulate(CommonArgs),
    /// Estimate the law at the target time and write its atom table.
    Measure(CommonArgs),
    /// Run experiment suites and write reports plus `verdict.json`.
    Suite {
        #[command(flatten)]
        common: CommonArgs,
        /// Suite to run (repeatable); defaults to the scenario's list.
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Replace the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Cap on worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replace the atom cap of the distance computation.
    #[arg(long)]
    pub atom_cap: Option<usize>,
    /// Integrate with `dt = rho / N` for every delay bound.
    #[arg(long)]
    pub dt_per_rho: Option<u32>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, steps_per_rho: self.dt_per_rho, atom_cap: self.atom_cap }
    }
}

/// Result of a successful dispatch.
#[derive(Debug)]
pub enum Outcome {
    /// Non-judging subcommand finished.
    Done,
    /// Suites ran; `failure` names the first failing binding verdict.
    Judged { failure: Option<String> },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Done | Outcome::Judged { failure: None } => 0,
            Outcome::Judged { failure: Some(_) } => 1,
        }
    }
}

/// Parse arguments, dispatch, report on the given streams and return the
/// process exit status.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(stderr, "{e}") } else { write!(stdout, "{e}") };
            return code;
        }
    };
    match dispatch(&cli, stdout) {
        Ok(outcome) => {
            if let Outcome::Judged { failure: Some(f) } = &outcome {
                let _ = writeln!(stderr, "suite failed: {f}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn common(cmd: &Command) -> &CommonArgs {
    match cmd {
        Command::Validate(c) | Command::Simulate(c) | Command::Measure(c) => c,
        Command::Suite { common, .. } => common,
    }
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> Result<Outcome, LabError> {
    let args = common(&cli.command);
    let scenario = load_scenario(&args.config, &args.overrides())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| LabError::ThreadPool(e.to_string()))?;
    let mut log = Vec::new();
    let outcome = pool.install(|| match &cli.command {
        Command::Validate(_) => validate(&scenario, &mut log),
        Command::Simulate(a) => simulate(&scenario, a, &mut log),
        Command::Measure(a) => measure(&scenario, a, &mut log),
        Command::Suite { common, suites } => suite(&scenario, common, suites, &mut log),
    });
    for line in log {
        let _ = writeln!(stdout, "{line}");
    }
    outcome
}

fn say(log: &mut Vec<String>, line: String) {
    log.push(line);
}

fn validate(sc: &Scenario, log: &mut Vec<String>) -> Result<Outcome, LabError> {
    let p = &sc.provenance;
    say(log, format!("scenario `{}` is valid", p.scenario));
    let cert = match &p.certificate {
        CertificateRecord::Certified { beta } => format!("certified with beta = {beta}"),
        CertificateRecord::Refuted { mode, lambda_max } => {
            format!("refuted in mode {mode} (largest eigenvalue {lambda_max})")
        }
        CertificateRecord::NotApplicable { reason } => format!("not checked ({reason})"),
    };
    say(log, format!("linear dissipativity certificate: {cert}"));
    say(log, format!("stationary distribution of the switching chain: {:?}", p.stationary_distribution));
    let names: Vec<&str> = sc.suites.iter().map(|s| s.name()).collect();
    say(log, format!("suites: {}", names.join(", ")));
    Ok(Outcome::Done)
}

fn simulate(sc: &Scenario, args: &CommonArgs, log: &mut Vec<String>) -> Result<Outcome, LabError> {
    let cfg = &sc.config;
    let model = cfg.model()?;
    let k = cfg.steps_for(model.rho())?;
    let t_end = cfg.times.ladder.last().copied().unwrap_or(cfg.times.s + cfg.times.burn_in);
    let dir = scenario_dir(&args.out, &cfg.id).join("simulate");
    let sim = cfg.sim.with_seed(derive_seed(cfg.sim.seed, tag("simulate")));
    for (i, ic) in cfg.initial.iter().enumerate() {
        let xi = ic.initial_segment(model.rho(), k)?;
        let tr = integrate(&model, cfg.times.s, &xi, ic.mode, t_end, &sim, i as u64).map_err(single_path_for(i))?;
        atomic_write(&dir.join(format!("trajectory_{i}.csv")), &trajectory_csv(&tr)?)?;
        atomic_write(&dir.join(format!("mode_path_{i}.csv")), &mode_path_csv(tr.mode_path())?)?;
    }
    atomic_write(&dir.join(PROVENANCE_FILE), &provenance_json(&sc.provenance)?)?;
    say(log, format!("wrote {} trajectories to {}", cfg.initial.len(), dir.display()));
    Ok(Outcome::Done)
}

/// Attach the path index to a blow-up of a single integration.
fn single_path_for(i: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Blowup { t, path: None } => Error::Blowup { t, path: Some(i as u64) },
        other => other,
    }
}

fn measure(sc: &Scenario, args: &CommonArgs, log: &mut Vec<String>) -> Result<Outcome, LabError> {
    let cfg = &sc.config;
    let model = cfg.model()?;
    let k = cfg.steps_for(model.rho())?;
    let ic = &cfg.initial[0];
    let xi = ic.initial_segment(model.rho(), k)?;
    let t = cfg.times.t;
    let sim = cfg.sim.with_seed(derive_seed(cfg.sim.seed, tag("measure")));
    let mu = ensemble_at(&model, t - cfg.times.burn_in, &xi, ic.mode, t, cfg.samples.paths, &sim)?;
    let dir = scenario_dir(&args.out, &cfg.id).join("measure");
    atomic_write(&dir.join("atoms.csv"), &measure_csv(&mu)?)?;

    let tight = tightness_report(&mu, &cfg.tightness.radii, &cfg.tightness.etas)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(["quantity", "parameter", "value"])?;
    for (r, p) in &tight.bounded {
        w.write_record(["prob_norm_at_most_R".to_string(), format!("R={r}"), format!("{p}")])?;
    }
    for m in &tight.modulus {
        for (q, v) in [("modulus_mean", m.mean), ("modulus_q95", m.q95), ("modulus_max", m.max)] {
            w.write_record([q.to_string(), format!("eta={}", m.eta), format!("{v}")])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| LabError::Csv(e.into_error().into()))?;
    atomic_write(&dir.join("tightness.csv"), &bytes)?;
    atomic_write(&dir.join(PROVENANCE_FILE), &provenance_json(&sc.provenance)?)?;
    say(log, format!("wrote {} atoms of the law at t={t} to {}", mu.len(), dir.display()));
    Ok(Outcome::Done)
}

fn suite(sc: &Scenario, args: &CommonArgs, names: &[String], log: &mut Vec<String>) -> Result<Outcome, LabError> {
    let suites = if names.is_empty() {
        sc.suites.clone()
    } else {
        names
            .iter()
            .map(|n| {
                Suite::from_name(n).ok_or_else(|| LabError::Validation {
                    field: "--suite".to_string(),
                    constraint: format!("unknown suite `{n}`"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let mut reports: Vec<ExperimentReport> = Vec::with_capacity(suites.len());
    for s in suites {
        let report = run_suite(&sc.config, s)?;
        say(log, format!("{}: {}", s.name(), if report.passed() { "PASS" } else { "FAIL" }));
        reports.push(report);
    }
    let written = write_suite_outputs(&args.out, &sc.provenance, &sc.config.tolerances, &reports)?;
    if let Some(dir) = written.first().and_then(|p| p.parent()) {
        say(log, format!("wrote {} files to {}", written.len(), dir.display()));
    }
    let failure = reports.iter().find_map(|r| {
        r.first_failure().map(|v| {
            format!(
                "{} / {}: {} (value {}, threshold {}, rule {})",
                r.scenario,
                r.suite.name(),
                v.criterion,
                v.value,
                v.threshold,
                v.rule
            )
        })
    });
    Ok(Outcome::Judged { failure })
}
