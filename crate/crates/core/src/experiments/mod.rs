//! Scenario-level studies: each suite builds measure estimates, compares them
//! in the bounded-Lipschitz metric and judges the distances against a
//! statistical tolerance calibrated on independent same-law ensembles.
//!
//! Numerical failures (blow-up, non-finite coefficients) inside a suite do not
//! abort it: they become a failed verdict naming the failure, which is the
//! expected outcome for unstable controls.

mod config;
mod report;

pub use config::{
    Expectation, InitialCondition, InitialValue, SampleCounts, ScenarioConfig, ScenarioModel, TightnessGrids,
    TimePoints, Tolerances, ValidationIssue,
};
pub use report::{ExperimentReport, ReportRow, Suite, Verdict};

use crate::measure::{bl_distance, ensemble_at, kb_average, project_t, tightness_report, EmpiricalMeasure};
use crate::model::HybridDelayModel;
use crate::par::try_map_indexed;
use crate::prelude::*;
use crate::rng::{derive_seed, tag};
use crate::simulate::{integrate, integrate_coupled_delay_limit, integrate_pair, InitialSegment, SimConfig};
use crate::{Error, Result};

/// Run one suite on a validated configuration.
pub fn run_suite(cfg: &ScenarioConfig, suite: Suite) -> Result<ExperimentReport> {
    match suite {
        Suite::Existence => run_existence(cfg),
        Suite::Periodicity => run_periodicity(cfg),
        Suite::Stability => run_stability(cfg),
        Suite::EndpointConvergence => run_endpoint_convergence(cfg),
        Suite::DelayLimit => run_delay_limit(cfg),
    }
}

pub fn run_existence(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    run(cfg, Suite::Existence, existence)
}

pub fn run_periodicity(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    run(cfg, Suite::Periodicity, periodicity)
}

pub fn run_stability(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    run(cfg, Suite::Stability, stability)
}

pub fn run_endpoint_convergence(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    run(cfg, Suite::EndpointConvergence, endpoint_convergence)
}

pub fn run_delay_limit(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    run(cfg, Suite::DelayLimit, delay_limit)
}

fn run(
    cfg: &ScenarioConfig,
    suite: Suite,
    body: fn(&ScenarioConfig, &mut Context) -> Result<()>,
) -> Result<ExperimentReport> {
    let mut ctx = Context {
        report: ExperimentReport::new(&cfg.id, suite),
        base_seed: derive_seed(cfg.sim.seed, tag(suite.name())),
    };
    ctx.report.seeds.push(("master".to_string(), cfg.sim.seed));
    match body(cfg, &mut ctx) {
        Ok(()) => {}
        Err(e) if e.is_numerical() => ctx.report.record_failure(&e),
        Err(e) => return Err(e),
    }
    ctx.report.finish(cfg.expect);
    Ok(ctx.report)
}

struct Context {
    report: ExperimentReport,
    base_seed: u64,
}

impl Context {
    /// Seed of the independent sample `label[index]`, recorded in the report.
    fn seed(&mut self, label: &str, index: usize) -> u64 {
        let seed = derive_seed(derive_seed(self.base_seed, tag(label)), index as u64);
        self.report.seeds.push((format!("{label}[{index}]"), seed));
        seed
    }

    /// Statistical tolerance: the configured value, or the nearest-rank 95th
    /// percentile of distances between independent pairs from `make`.
    fn calibrate<F>(&mut self, cfg: &ScenarioConfig, what: &str, make: F) -> Result<f64>
    where
        F: Fn(u64) -> Result<EmpiricalMeasure>,
    {
        if let Some(eps) = cfg.tolerances.eps_stat {
            self.report.row("eps_stat", "configured".to_string(), eps, None);
            return Ok(eps);
        }
        let pairs = cfg.samples.calibration_pairs;
        let mut distances = Vec::with_capacity(pairs);
        for p in 0..pairs {
            let a = make(self.seed("calibration", 2 * p))?;
            let b = make(self.seed("calibration", 2 * p + 1))?;
            let d = bl_distance(&a, &b, &cfg.metric)?;
            self.report.row("calibration_distance", format!("{what} pair={p}"), d, None);
            distances.push(d);
        }
        let eps = nearest_rank(&mut distances, 0.95);
        self.report.row("eps_stat", format!("p95 of {pairs} pairs"), eps, None);
        Ok(eps)
    }
}

/// Nearest-rank quantile.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn existence(cfg: &ScenarioConfig, ctx: &mut Context) -> Result<()> {
    let model = cfg.model()?;
    let k = cfg.steps_for(model.rho())?;
    let ic = &cfg.initial[0];
    let xi = ic.initial_segment(model.rho(), k)?;
    let t = cfg.times.t;
    let s = &cfg.samples;
    let kb = |n: f64, seed: u64| {
        kb_average(&model, &xi, ic.mode, t, n, s.starts, s.paths_per_start, &cfg.sim.with_seed(seed))
    };

    let lookbacks = &cfg.times.lookbacks;
    let mut measures = Vec::with_capacity(lookbacks.len());
    for (i, &n) in lookbacks.iter().enumerate() {
        let mu = kb(n, ctx.seed("kb", i))?;
        if model.rho() > 0.0 {
            let tight = tightness_report(&mu, &cfg.tightness.radii, &cfg.tightness.etas)?;
            for (r, p) in &tight.bounded {
                ctx.report.row("prob_norm_at_most_R", format!("n={} R={}", fmt_num(n), fmt_num(*r)), *p, None);
            }
            for m in &tight.modulus {
                let param = format!("n={} eta={}", fmt_num(n), fmt_num(m.eta));
                ctx.report.row("modulus_mean", param.clone(), m.mean, None);
                ctx.report.row("modulus_q95", param.clone(), m.q95, None);
                ctx.report.row("modulus_max", param, m.max, None);
            }
        }
        measures.push(mu);
    }
    let n_max = *lookbacks.last().expect("validated");
    let eps = ctx.calibrate(cfg, &format!("kb n={}", fmt_num(n_max)), |seed| kb(n_max, seed))?;
    let mut last = f64::NAN;
    for i in 1..measures.len() {
        let d = bl_distance(&measures[i - 1], &measures[i], &cfg.metric)?;
        let param = format!("n={}->{}", fmt_num(lookbacks[i - 1]), fmt_num(lookbacks[i]));
        ctx.report.row("kb_consecutive_distance", param, d, Some(eps));
        last = d;
    }
    ctx.report.at_most("final consecutive KB distance <= eps_stat", last, eps);
    Ok(())
}

fn periodicity(cfg: &ScenarioConfig, ctx: &mut Context) -> Result<()> {
    let model = cfg.model()?;
    let rho = model.rho();
    let grid = cfg.sim.grid_for(rho)?;
    let k = cfg.steps_for(rho)?;
    let ic = &cfg.initial[0];
    let xi = ic.initial_segment(rho, k)?;
    let (t, burn, paths) = (cfg.times.t, cfg.times.burn_in, cfg.samples.paths);
    let at =
        |time: f64, seed: u64| ensemble_at(&model, time - burn, &xi, ic.mode, time, paths, &cfg.sim.with_seed(seed));

    let half = grid.time(grid.floor_index(t + rho / 2.0));
    let mu_t = at(t, ctx.seed("mu_t", 0))?;
    let mu_shift = at(t + rho, ctx.seed("mu_t_plus_rho", 0))?;
    let mu_half = at(half, ctx.seed("mu_t_plus_half_rho", 0))?;
    let eps = ctx.calibrate(cfg, &format!("mu_t t={}", fmt_num(t)), |seed| at(t, seed))?;
    let d = bl_distance(&mu_t, &mu_shift, &cfg.metric)?;
    let contrast = bl_distance(&mu_t, &mu_half, &cfg.metric)?;
    ctx.report.row("distance_shift_rho", format!("t={} shift={}", fmt_num(t), fmt_num(rho)), d, Some(eps));
    ctx.report.row("distance_shift_half_rho", format!("t={} shift={}", fmt_num(t), fmt_num(half - t)), contrast, None);
    ctx.report.at_most("d(mu_t, mu_t+rho) <= eps_stat", d, eps);
    Ok(())
}

fn stability(cfg: &ScenarioConfig, ctx: &mut Context) -> Result<()> {
    if cfg.initial.len() < 2 {
        return Err(Error::InvalidArgument("the stability suite needs at least two initial conditions".to_string()));
    }
    let model = cfg.model()?;
    let rho = model.rho();
    let k = cfg.steps_for(rho)?;
    let (s, burn, paths) = (cfg.times.s, cfg.times.burn_in, cfg.samples.paths);
    let ladder = &cfg.times.ladder;
    let t_last = *ladder.last().expect("validated");
    let segments: Vec<InitialSegment> =
        cfg.initial.iter().map(|ic| ic.initial_segment(rho, k)).collect::<Result<_>>()?;

    // laws from each initial condition along the ladder, one path set per condition
    let mut laws: Vec<Vec<EmpiricalMeasure>> = Vec::with_capacity(cfg.initial.len());
    for (i, ic) in cfg.initial.iter().enumerate() {
        let sim = cfg.sim.with_seed(ctx.seed("initial", i));
        let per_path = try_map_indexed(paths, |p| {
            let tr = integrate(&model, s, &segments[i], ic.mode, t_last, &sim, p as u64)
                .map_err(|e| e.with_path(p as u64))?;
            ladder.iter().map(|&t| tr.segment_at(t)).collect::<Result<Vec<_>>>()
        })?;
        let mut at_times = Vec::with_capacity(ladder.len());
        for q in 0..ladder.len() {
            at_times.push(EmpiricalMeasure::uniform(per_path.iter().map(|v| v[q].clone()).collect())?);
        }
        laws.push(at_times);
    }

    let reference = &cfg.initial[0];
    let burn_in = |time: f64, seed: u64| {
        ensemble_at(&model, time - burn, &segments[0], reference.mode, time, paths, &cfg.sim.with_seed(seed))
    };
    let eps = ctx.calibrate(cfg, &format!("burn-in t={}", fmt_num(t_last)), |seed| burn_in(t_last, seed))?;

    let (mut last_a, mut last_b) = (0.0, 0.0);
    for (q, &t) in ladder.iter().enumerate() {
        let mut cross = 0.0f64;
        for i in 0..laws.len() {
            for j in i + 1..laws.len() {
                cross = cross.max(bl_distance(&laws[i][q], &laws[j][q], &cfg.metric)?);
            }
        }
        let mu = burn_in(t, ctx.seed("burn_in", q))?;
        let mut to_burn_in = 0.0f64;
        for law in &laws {
            to_burn_in = to_burn_in.max(bl_distance(&law[q], &mu, &cfg.metric)?);
        }
        ctx.report.row("max_distance_between_initial_conditions", format!("t={}", fmt_num(t)), cross, Some(eps));
        ctx.report.row("max_distance_to_burn_in", format!("t={}", fmt_num(t)), to_burn_in, Some(eps));
        last_a = cross;
        last_b = to_burn_in;
    }

    // common-randomness contraction of solution pairs
    let pairs = cfg.samples.coupled_paths;
    for i in 1..cfg.initial.len() {
        let sim = cfg.sim.with_seed(ctx.seed("pathwise", i));
        let sq = try_map_indexed(pairs, |p| {
            let (a, b) = integrate_pair(&model, s, &segments[0], &segments[i], reference.mode, t_last, &sim, p as u64)
                .map_err(|e| e.with_path(p as u64))?;
            ladder
                .iter()
                .map(|&t| {
                    let (x, y) = (a.segment_at(t)?, b.segment_at(t)?);
                    Ok(x.values()
                        .chunks_exact(x.dim())
                        .zip(y.values().chunks_exact(y.dim()))
                        .map(|(u, v)| u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
                        .fold(0.0, f64::max))
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        for (q, &t) in ladder.iter().enumerate() {
            let mean = sq.iter().map(|v| v[q]).sum::<f64>() / pairs as f64;
            ctx.report.row("pathwise_mean_sq_sup_difference", format!("pair=1-{} t={}", i + 1, fmt_num(t)), mean, None);
        }
    }

    ctx.report.at_most("final distance between initial conditions <= eps_stat", last_a, eps);
    ctx.report.at_most("final distance to burn-in law <= eps_stat", last_b, eps);
    Ok(())
}

fn endpoint_convergence(cfg: &ScenarioConfig, ctx: &mut Context) -> Result<()> {
    let spec = cfg.controlled()?;
    let (s, t) = (cfg.times.s, cfg.times.endpoint_time);
    let etas = &cfg.tolerances.exceedance_eta;
    let m = cfg.samples.coupled_paths;
    if cfg.rho_ladder.is_empty() {
        return Err(Error::InvalidArgument("the endpoint study needs a rho ladder".to_string()));
    }
    // one seed per initial condition, shared across rho: common random numbers
    let seeds: Vec<u64> = (0..cfg.initial.len()).map(|i| ctx.seed("coupled", i)).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.rho_ladder.len()); etas.len()];
    for &rho in &cfg.rho_ladder {
        let spec_rho = spec.with_rho(rho);
        let k = cfg.steps_for(rho)?;
        let mut worst = vec![0.0f64; etas.len()];
        for (i, ic) in cfg.initial.iter().enumerate() {
            let xi = ic.segment(rho, k)?;
            let sim: SimConfig = cfg.sim.with_seed(seeds[i]);
            let gaps = try_map_indexed(m, |p| {
                let (a, b) =
                    integrate_coupled_delay_limit(&spec_rho, &cfg.generator, s, &xi, ic.mode, t, &sim, p as u64)
                        .map_err(|e| e.with_path(p as u64))?;
                Ok::<f64, Error>(
                    a.final_state().iter().zip(b.final_state()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
                )
            })?;
            for (e, &eta) in etas.iter().enumerate() {
                let p = gaps.iter().filter(|g| **g >= eta).count() as f64 / m as f64;
                worst[e] = worst[e].max(p);
            }
        }
        for (e, &eta) in etas.iter().enumerate() {
            // both solutions start from xi(0) at s
            ctx.report.row(
                "sup_exceedance",
                format!("rho={} eta={} t={}", fmt_num(rho), fmt_num(eta), fmt_num(s)),
                0.0,
                None,
            );
            ctx.report.row(
                "sup_exceedance",
                format!("rho={} eta={} t={}", fmt_num(rho), fmt_num(eta), fmt_num(t)),
                worst[e],
                Some(cfg.tolerances.final_exceedance),
            );
            columns[e].push(worst[e]);
        }
    }
    for (e, &eta) in etas.iter().enumerate() {
        let col = &columns[e];
        let rise = col.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
        ctx.report.at_most(&format!("exceedance eta={} nonincreasing down the rho ladder", fmt_num(eta)), rise, 0.0);
        let last = *col.last().expect("nonempty ladder");
        ctx.report.at_most(
            &format!("exceedance eta={} at smallest rho <= final_exceedance", fmt_num(eta)),
            last,
            cfg.tolerances.final_exceedance,
        );
    }
    Ok(())
}

fn delay_limit(cfg: &ScenarioConfig, ctx: &mut Context) -> Result<()> {
    let spec = cfg.controlled()?;
    if cfg.rho_ladder.is_empty() {
        return Err(Error::InvalidArgument("the delay-limit study needs a rho ladder".to_string()));
    }
    let (t, burn, paths) = (cfg.times.t, cfg.times.burn_in, cfg.samples.paths);
    let ic = &cfg.initial[0];
    let rho_min = *cfg.rho_ladder.last().expect("nonempty");
    let finest_dt = cfg.sim.grid_for(rho_min)?.dt();
    let free: HybridDelayModel = spec.delay_free_model(&cfg.generator)?;
    let xi0 = InitialSegment::Constant(ic.segment(0.0, 0)?.endpoint().to_vec());
    let limit_law = |seed: u64| {
        let sim = SimConfig { dt: finest_dt, steps_per_rho: None, ..cfg.sim.with_seed(seed) };
        ensemble_at(&free, t - burn, &xi0, ic.mode, t, paths, &sim)
    };
    let mu0 = limit_law(ctx.seed("limit", 0))?;
    let eps = ctx.calibrate(cfg, "delay-free endpoint law", limit_law)?;

    let mut column = Vec::with_capacity(cfg.rho_ladder.len());
    for (idx, &rho) in cfg.rho_ladder.iter().enumerate() {
        let model = crate::model::build_controlled_model(&spec.with_rho(rho), &cfg.generator)?;
        let k = cfg.steps_for(rho)?;
        let xi = ic.initial_segment(rho, k)?;
        let seed = ctx.seed("delayed", idx);
        let mu = ensemble_at(&model, t - burn, &xi, ic.mode, t, paths, &cfg.sim.with_seed(seed))?;
        let d = bl_distance(&project_t(&mu), &mu0, &cfg.metric)?;
        ctx.report.row("distance_projected_to_limit", format!("rho={}", fmt_num(rho)), d, Some(eps));
        column.push(d);
    }
    let rise = column.windows(2).map(|w| w[1] - w[0]).fold(0.0f64, f64::max);
    ctx.report.at_most("distance nonincreasing down the rho ladder within eps_stat per step", rise, eps);
    let factor = cfg.tolerances.delay_limit_factor;
    ctx.report.at_most(
        &format!("distance at smallest rho <= {} * eps_stat", fmt_num(factor)),
        *column.last().expect("nonempty"),
        factor * eps,
    );
    Ok(())
}

#[cfg(test)]
mod tests;
