use super::*;
use crate::linalg::Mat;
use crate::measure::MetricSpec;
use crate::model::{named_drift, ControlledModelSpec, DelaySpec, FnCoefficients, LinearNoise, ModeVectorField};
use crate::switching::{Generator, Mode};

fn scalar_spec(h: Arc<dyn ModeVectorField>, gain: f64, noise: f64, modes: usize) -> ControlledModelSpec {
    ControlledModelSpec {
        dim: 1,
        noise_dim: 1,
        h,
        sigma: Arc::new(LinearNoise {
            offsets: vec![Mat::zeros(1, 1); modes],
            columns: vec![vec![Mat::scalar(noise)]; modes],
        }),
        gains: vec![Mat::scalar(gain); modes],
        rho: 0.1,
    }
}

fn base(model: ScenarioModel, generator: Generator) -> ScenarioConfig {
    ScenarioConfig {
        id: "test".to_string(),
        generator,
        model,
        metric: MetricSpec::default(),
        sim: SimConfig::new(0.02, 17),
        samples: SampleCounts { paths: 60, starts: 12, paths_per_start: 5, calibration_pairs: 5, coupled_paths: 60 },
        times: TimePoints {
            s: 0.0,
            t: 0.0,
            burn_in: 4.0,
            lookbacks: vec![2.0, 4.0],
            ladder: vec![1.0, 3.0],
            endpoint_time: 1.0,
        },
        initial: vec![
            InitialCondition::constant(vec![0.0], Mode::new(1)),
            InitialCondition::constant(vec![1.0], Mode::new(1)),
        ],
        rho_ladder: vec![0.4, 0.2, 0.1],
        tightness: TightnessGrids::default(),
        tolerances: Tolerances::default(),
        expect: Expectation::Pass,
    }
}

fn zero_general() -> ScenarioConfig {
    let c = FnCoefficients::new(
        |_t: f64, _j: Mode, _x: &[f64], _y: &[f64], out: &mut [f64]| out[0] = 0.0,
        |_t: f64, _j: Mode, _x: &[f64], _y: &[f64], out: &mut [f64]| out[0] = 0.0,
    );
    let m =
        HybridDelayModel::new(1, 1, Arc::new(c), DelaySpec::Sawtooth { rho: 0.1 }, Generator::single_mode()).unwrap();
    let mut cfg = base(ScenarioModel::General(m), Generator::single_mode());
    cfg.initial = vec![InitialCondition::constant(vec![0.7], Mode::new(1)); 2];
    cfg
}

fn benchmark(gain: f64) -> ScenarioConfig {
    let g = Generator::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
    let h = named_drift("linear", vec![Mat::scalar(1.0); 2]).unwrap();
    base(ScenarioModel::Controlled(scalar_spec(h, gain, 0.5, 2)), g)
}

#[test]
fn nearest_rank_quantile() {
    let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
    assert_eq!(nearest_rank(&mut v, 0.95), 19.0);
    assert_eq!(nearest_rank(&mut [3.0], 0.95), 3.0);
    assert_eq!(nearest_rank(&mut [5.0, 1.0, 4.0, 2.0, 3.0], 0.5), 3.0);
}

#[test]
fn deterministic_model_gives_zero_distances() {
    let cfg = zero_general();
    cfg.validate().unwrap();
    let ex = run_existence(&cfg).unwrap();
    assert!(ex.values("kb_consecutive_distance").iter().all(|&d| d == 0.0));
    assert!(ex.passed());
    let per = run_periodicity(&cfg).unwrap();
    assert_eq!(per.value("distance_shift_rho", "t=0 shift=0.1"), Some(0.0));
    assert!(per.passed());
    let st = run_stability(&cfg).unwrap();
    assert!(st.passed(), "{:?}", st.verdicts);
    assert!(st.values("pathwise_mean_sq_sup_difference").iter().all(|&d| d == 0.0));
}

#[test]
fn delay_suites_need_controlled_model() {
    let cfg = zero_general();
    assert!(matches!(run_delay_limit(&cfg), Err(Error::InvalidArgument(_))));
    assert!(matches!(run_endpoint_convergence(&cfg), Err(Error::InvalidArgument(_))));
}

#[test]
fn zero_gain_endpoint_exceedance_is_zero() {
    let cfg = benchmark(0.0);
    let rep = run_endpoint_convergence(&cfg).unwrap();
    assert!(rep.values("sup_exceedance").iter().all(|&p| p == 0.0));
    assert!(rep.passed());
}

#[test]
fn certified_endpoint_exceedance_shrinks() {
    let mut cfg = benchmark(-2.0);
    cfg.samples.coupled_paths = 200;
    let rep = run_endpoint_convergence(&cfg).unwrap();
    let at_t: Vec<f64> = rep.rows.iter().filter(|r| r.parameter.ends_with("t=1")).map(|r| r.value).collect();
    assert_eq!(at_t.len(), 3);
    assert!(at_t[0] > 0.5, "{at_t:?}");
    assert!(at_t[0] >= at_t[1] && at_t[1] >= at_t[2], "{at_t:?}");
    for r in rep.rows.iter().filter(|r| r.parameter.ends_with("t=0")) {
        assert_eq!(r.value, 0.0);
    }
}

#[test]
fn degenerate_delay_limit_converges_to_common_equilibrium() {
    // h(x) = 1 - x with feedback -u(kρ): equilibrium 1/2 for every ρ
    let h: Arc<dyn ModeVectorField> = Arc::new(|_j: Mode, x: &[f64], out: &mut [f64]| out[0] = 1.0 - x[0]);
    let mut cfg = base(ScenarioModel::Controlled(scalar_spec(h, -1.0, 0.0, 1)), Generator::single_mode());
    cfg.times.burn_in = 30.0;
    let rep = run_delay_limit(&cfg).unwrap();
    assert!(rep.values("distance_projected_to_limit").iter().all(|&d| d < 1e-9), "{:?}", rep.rows);
    assert!(rep.passed());
}

#[test]
fn uncontrolled_stability_is_flagged() {
    let mut cfg = benchmark(0.0);
    cfg.times.ladder = vec![2.0, 6.0];
    cfg.expect = Expectation::Fail;
    let rep = run_stability(&cfg).unwrap();
    let raw_failed = rep.verdicts.iter().filter(|v| !v.binding && !v.passed).count();
    assert!(raw_failed >= 1, "{:?}", rep.verdicts);
    assert!(rep.passed());
}

#[test]
fn blowup_becomes_failed_verdict() {
    let g = Generator::single_mode();
    let h = named_drift("linear", vec![Mat::scalar(30.0)]).unwrap();
    let mut cfg = base(ScenarioModel::Controlled(scalar_spec(h, 0.0, 0.0, 1)), g);
    cfg.initial = vec![InitialCondition::constant(vec![1.0], Mode::new(1))];
    let rep = run_periodicity(&cfg).unwrap();
    assert!(rep.failure.as_deref().is_some_and(|f| f.contains("blew up")));
    assert!(!rep.passed());
    assert!(rep.first_failure().unwrap().rule.contains("numerical failure"));
}

#[test]
fn reports_are_reproducible() {
    let cfg = benchmark(-2.0);
    assert_eq!(run_periodicity(&cfg).unwrap(), run_periodicity(&cfg).unwrap());
    let other = ScenarioConfig { sim: cfg.sim.with_seed(18), ..cfg.clone() };
    assert_ne!(run_periodicity(&cfg).unwrap().rows, run_periodicity(&other).unwrap().rows);
}

#[test]
fn validation_names_fields() {
    let mut cfg = benchmark(-2.0);
    cfg.sim = SimConfig::new(0.03, 1);
    cfg.model = match cfg.model {
        ScenarioModel::Controlled(spec) => ScenarioModel::Controlled(spec.with_rho(0.03 * 3.0)),
        other => other,
    };
    cfg.times.burn_in = 0.9;
    cfg.times.ladder = vec![0.3, 0.6];
    cfg.times.endpoint_time = 0.3;
    cfg.times.lookbacks = vec![0.3, 0.6];
    cfg.rho_ladder = vec![0.09, 0.05];
    assert_eq!(cfg.validate().unwrap_err().field, "rho ladder / grid alignment");

    let mut cfg = benchmark(-2.0);
    cfg.rho_ladder = vec![0.1, 0.2];
    assert_eq!(cfg.validate().unwrap_err().field, "rho_ladder");
    let mut cfg = benchmark(-2.0);
    cfg.samples.paths = 0;
    assert_eq!(cfg.validate().unwrap_err().field, "samples.paths");
    let mut cfg = benchmark(-2.0);
    cfg.initial[1].mode = Mode::new(3);
    assert_eq!(cfg.validate().unwrap_err().field, "initial");
}
