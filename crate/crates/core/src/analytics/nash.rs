//! Closed-form open-loop Nash equilibrium for two mean-variance agents.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::schedule::{InventoryPath, SchedulePair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashInputs {
    pub params: MarketParams,
    /// Risk aversion, `>= 0`.
    pub lambda: f64,
    /// Total initial inventory `q1 + q2`.
    pub total0: f64,
    /// Initial inventory difference `q1 - q2`.
    pub diff0: f64,
}

impl NashInputs {
    /// Both agents start with `params.q0`.
    pub fn symmetric(params: MarketParams, lambda: f64) -> Self {
        Self {
            params,
            lambda,
            total0: 2.0 * params.q0,
            diff0: 0.0,
        }
    }

    pub fn from_endowments(params: MarketParams, lambda: f64, q1: f64, q2: f64) -> Self {
        Self {
            params,
            lambda,
            total0: q1 + q2,
            diff0: q1 - q2,
        }
    }

    pub fn endowments(&self) -> (f64, f64) {
        (
            0.5 * (self.total0 + self.diff0),
            0.5 * (self.total0 - self.diff0),
        )
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be >= 0"));
        }
        if !(self.total0 > 0.0) {
            return Err(Error::config("total0", "total inventory must be > 0"));
        }
        if self.params.alpha == 0.0 {
            return Err(Error::Singular(
                "alpha = 0: Nash inventory undefined".into(),
            ));
        }
        Ok(())
    }
}

/// `sinh(a) / sinh(b)` for `0 <= a <= b`, stable for large arguments and
/// continuous at `b = 0` where the ratio tends to `a / b`.
fn sinh_ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    if b > 20.0 {
        (a - b).exp() * (-(-2.0 * a).exp_m1()) / (-(-2.0 * b).exp_m1())
    } else {
        a.sinh() / b.sinh()
    }
}

/// One of the two decoupled modes: `scale * exp(drift * time) * sinh(rate (T - time)) / sinh(rate T)`.
fn mode(scale: f64, drift: f64, rate: f64, time: f64, horizon: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let ratio = if rate == 0.0 {
        (horizon - time) / horizon
    } else {
        sinh_ratio(rate * (horizon - time), rate * horizon)
    };
    scale * (drift * time).exp() * ratio
}

/// Equilibrium remaining inventories `(q1, q2)` after `t` steps.
pub fn nash_inventory(inputs: &NashInputs, t: usize) -> Result<(f64, f64)> {
    inputs.validate()?;
    let p = &inputs.params;
    let n = p.n_steps;
    if t > n {
        return Err(Error::config("t", format!("step {t} beyond horizon {n}")));
    }
    if t == 0 {
        return Ok(inputs.endowments());
    }
    if t == n {
        return Ok((0.0, 0.0));
    }
    let (kappa, alpha) = (p.kappa, p.alpha);
    let risk = inputs.lambda * p.sigma * p.sigma;
    let time = t as f64 * p.tau;
    let horizon = n as f64 * p.tau;

    let rate_sum = (kappa * kappa + 12.0 * alpha * risk).sqrt() / (6.0 * alpha);
    let rate_diff = (kappa * kappa + 4.0 * alpha * risk).sqrt() / (2.0 * alpha);
    let total = mode(
        inputs.total0,
        -kappa / (6.0 * alpha),
        rate_sum,
        time,
        horizon,
    );
    let diff = mode(
        inputs.diff0,
        kappa / (2.0 * alpha),
        rate_diff,
        time,
        horizon,
    );
    Ok((0.5 * (total + diff), 0.5 * (total - diff)))
}

/// Equilibrium inventory paths for both agents.
pub fn nash_paths(inputs: &NashInputs) -> Result<(InventoryPath, InventoryPath)> {
    let n = inputs.params.n_steps;
    let mut q1 = Vec::with_capacity(n + 1);
    let mut q2 = Vec::with_capacity(n + 1);
    for t in 0..=n {
        let (a, b) = nash_inventory(inputs, t)?;
        q1.push(a);
        q2.push(b);
    }
    Ok((InventoryPath(q1), InventoryPath(q2)))
}

/// Equilibrium trading schedules (differences of the inventory paths).
pub fn nash_schedule(inputs: &NashInputs) -> Result<SchedulePair> {
    let (q1, q2) = nash_paths(inputs)?;
    SchedulePair::new(q1.to_schedule(), q2.to_schedule())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> NashInputs {
        NashInputs::symmetric(MarketParams::default(), 0.0)
    }

    #[test]
    fn boundaries_are_exact() {
        let inp = table1();
        assert_eq!(nash_inventory(&inp, 0).unwrap(), (100.0, 100.0));
        assert_eq!(nash_inventory(&inp, 10).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn midpoint_matches_reference() {
        // exp(-5/12) * sinh(5/12) / sinh(10/12) * 100, evaluated independently
        let (q1, q2) = nash_inventory(&table1(), 5).unwrap();
        assert!((q1 - 30.294071603459272).abs() < 1e-12, "{q1}");
        assert_eq!(q1, q2);
    }

    #[test]
    fn schedule_sums_and_front_loads() {
        let pair = nash_schedule(&table1()).unwrap();
        assert_eq!(pair.first.total(), 100.0);
        assert_eq!(pair.second.total(), 100.0);
        let v = &pair.first;
        assert!(v.windows(2).all(|w| w[0] > w[1]));
        assert!(v[9] > 0.0);
    }

    #[test]
    fn vanishing_kappa_tends_to_twap() {
        let p = MarketParams {
            kappa: 1e-12,
            ..MarketParams::default()
        };
        let pair = nash_schedule(&NashInputs::symmetric(p, 0.0)).unwrap();
        for v in pair.first.iter() {
            assert!((v - 10.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_rate_limit_is_linear() {
        let p = MarketParams {
            kappa: 0.0,
            ..MarketParams::default()
        };
        let pair = nash_schedule(&NashInputs::symmetric(p, 0.0)).unwrap();
        for v in pair.first.iter() {
            assert!((v - 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_is_singular() {
        let p = MarketParams {
            alpha: 0.0,
            ..MarketParams::default()
        };
        assert!(matches!(
            nash_inventory(&NashInputs::symmetric(p, 0.0), 3),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn asymmetric_endowments() {
        let inp = NashInputs::from_endowments(MarketParams::default(), 0.0, 120.0, 80.0);
        assert_eq!(nash_inventory(&inp, 0).unwrap(), (120.0, 80.0));
        let (q1, q2) = nash_inventory(&inp, 10).unwrap();
        assert_eq!((q1, q2), (0.0, 0.0));
        let pair = nash_schedule(&inp).unwrap();
        assert!((pair.first.total() - 120.0).abs() < 1e-12);
        assert!((pair.second.total() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn large_rates_stay_finite() {
        let p = MarketParams {
            alpha: 1e-6,
            ..MarketParams::default()
        };
        for t in 0..=10 {
            let (q1, _) = nash_inventory(&NashInputs::symmetric(p, 0.0), t).unwrap();
            assert!(q1.is_finite());
        }
    }

    #[test]
    fn risk_aversion_front_loads_more() {
        let p = MarketParams::default().with_sigma(0.05);
        let neutral = nash_inventory(&NashInputs::symmetric(p, 0.0), 5).unwrap().0;
        let averse = nash_inventory(&NashInputs::symmetric(p, 1.0), 5).unwrap().0;
        assert!(averse < neutral);
    }
}
