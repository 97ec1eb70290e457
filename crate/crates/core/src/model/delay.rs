use crate::prelude::*;
use crate::{Error, Result};

/// `ρ₀(t) = t - kρ` on `[kρ, (k+1)ρ)`, using `floor` so negative `t` works.
pub fn sawtooth_delay(t: f64, rho: f64) -> f64 {
    let lag = t - (t / rho).floor() * rho;
    if lag >= rho || lag < 0.0 {
        // `t` sits on a lattice point up to rounding.
        0.0
    } else {
        lag
    }
}

/// Variable delay given by knots `(t, ρ₀(t))`, linear between knots and
/// extended periodically with period `last.t - first.t`. Two knots with the
/// same time mark a jump; the later one is the right limit.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDelay {
    rho: f64,
    knots: Vec<(f64, f64)>,
}

impl TabulatedDelay {
    pub fn new(rho: f64, knots: Vec<(f64, f64)>) -> Result<Self> {
        let d = TabulatedDelay { rho, knots };
        d.validate()?;
        Ok(d)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Times where ρ₀ jumps, within one period.
    pub fn discontinuities(&self) -> Vec<f64> {
        self.knots.windows(2).filter(|w| w[0].0 == w[1].0).map(|w| w[0].0).collect()
    }

    fn period(&self) -> f64 {
        self.knots[self.knots.len() - 1].0 - self.knots[0].0
    }

    fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.knots.len() < 2 {
            return Err(Error::InvalidArgument("tabulated delay needs at least two knots".to_string()));
        }
        for &(t, v) in &self.knots {
            if !t.is_finite() || !(0.0..=self.rho).contains(&v) {
                return Err(Error::InvalidArgument(format!("knot ({t}, {v}) must be finite with 0 <= value <= rho")));
            }
        }
        for w in self.knots.windows(3) {
            if w[0].0 == w[1].0 && w[1].0 == w[2].0 {
                return Err(Error::InvalidArgument(format!("more than two knots at t = {}", w[0].0)));
            }
        }
        if self.knots.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::InvalidArgument("knot times must be nondecreasing".to_string()));
        }
        if !(self.period() > 0.0) {
            return Err(Error::InvalidArgument("tabulated delay has zero period".to_string()));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t0 = self.knots[0].0;
        let p = self.period();
        let mut tau = t0 + (t - t0) - ((t - t0) / p).floor() * p;
        if tau >= t0 + p {
            tau = t0;
        }
        let idx = self.knots.partition_point(|k| k.0 <= tau).max(1);
        let (ta, va) = self.knots[idx - 1];
        let (tb, vb) = self.knots[idx.min(self.knots.len() - 1)];
        if tb <= ta {
            return va;
        }
        va + (vb - va) * (tau - ta) / (tb - ta)
    }
}

/// Delay structure of a model. `None` is the delay-free (ρ = 0) limit.
#[derive(Debug, Clone, PartialEq)]
pub enum DelaySpec {
    None,
    Constant { rho: f64 },
    Sawtooth { rho: f64 },
    Tabulated(TabulatedDelay),
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("delay bound rho = {rho} outside (0, 1]")))
    }
}

impl DelaySpec {
    pub fn rho(&self) -> f64 {
        match self {
            DelaySpec::None => 0.0,
            DelaySpec::Constant { rho } | DelaySpec::Sawtooth { rho } => *rho,
            DelaySpec::Tabulated(t) => t.rho(),
        }
    }

    pub fn has_delay(&self) -> bool {
        !matches!(self, DelaySpec::None)
    }

    /// ρ₀(t)
    pub fn lag(&self, t: f64) -> f64 {
        match self {
            DelaySpec::None => 0.0,
            DelaySpec::Constant { rho } => *rho,
            DelaySpec::Sawtooth { rho } => sawtooth_delay(t, *rho),
            DelaySpec::Tabulated(tab) => tab.eval(t),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DelaySpec::None => Ok(()),
            DelaySpec::Constant { rho } | DelaySpec::Sawtooth { rho } => check_rho(*rho),
            DelaySpec::Tabulated(t) => t.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sawtooth_examples() {
        assert!((sawtooth_delay(0.25, 0.1) - 0.05).abs() < 1e-15);
        assert_eq!(sawtooth_delay(0.5, 0.25), 0.0);
        assert_eq!(sawtooth_delay(3.0, 1.0), 0.0);
        // floor(-0.3) = -1, so -0.03 + 0.1
        assert!((sawtooth_delay(-0.03, 0.1) - 0.07).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sawtooth_in_range_and_periodic_on_dyadic_grid(i in -4000i64..4000, k in 1u32..6) {
            // ρ = 2^-k and t on the 2^-10 grid are exact in binary.
            let rho = 0.5f64.powi(k as i32);
            let t = i as f64 / 1024.0;
            let lag = sawtooth_delay(t, rho);
            prop_assert!((0.0..rho).contains(&lag));
            prop_assert_eq!(sawtooth_delay(t + rho, rho), lag);
        }
    }

    #[test]
    fn tabulated_interpolates_jumps_and_repeats() {
        let d = TabulatedDelay::new(0.5, vec![(0.0, 0.0), (1.0, 0.5), (1.0, 0.1), (2.0, 0.3)]).unwrap();
        assert_eq!(d.eval(0.5), 0.25);
        assert_eq!(d.eval(1.0), 0.1);
        assert!((d.eval(0.999_999) - 0.5).abs() < 1e-5);
        assert!((d.eval(1.5) - 0.2).abs() < 1e-12);
        assert!((d.eval(2.5) - d.eval(0.5)).abs() < 1e-12);
        assert!((d.eval(-1.5) - d.eval(0.5)).abs() < 1e-12);
        assert_eq!(d.discontinuities(), vec![1.0]);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(TabulatedDelay::new(0.5, vec![(0.0, 0.6), (1.0, 0.0)]).is_err());
        assert!(TabulatedDelay::new(0.5, vec![(1.0, 0.1), (0.0, 0.0)]).is_err());
        assert!(TabulatedDelay::new(0.5, vec![(0.0, 0.1)]).is_err());
        assert!(TabulatedDelay::new(0.5, vec![(0.0, 0.1), (0.0, 0.2), (0.0, 0.3), (1.0, 0.0)]).is_err());
    }

    #[test]
    fn delay_bounds() {
        assert!(DelaySpec::Constant { rho: 1.5 }.validate().is_err());
        assert!(DelaySpec::Sawtooth { rho: 0.0 }.validate().is_err());
        assert!(DelaySpec::Sawtooth { rho: 1.0 }.validate().is_ok());
        assert_eq!(DelaySpec::None.rho(), 0.0);
    }
}
