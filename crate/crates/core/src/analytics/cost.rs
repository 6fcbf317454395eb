//! Exact expected implementation shortfall as a quadratic form in the two
//! schedules, and the best-response / equilibrium solvers built on it.
//!
//! With `C_t = sum_{j<t} (v1_j + v2_j)` the expected shortfall of agent 1 is
//!
//! ```text
//! EIS1 = kappa * sum_t v1_t C_t + alpha * sum_t v1_t^2   (+ kappa/2 * sum_t v1_t v2_t)
//! ```
//!
//! where the bracketed term only appears in sequential mode: with a fair coin
//! deciding who trades first, each agent pays the other's same-step permanent
//! impact half of the time. Positive values are costs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::market::{IntraStepMode, MarketParams, Order};
use crate::schedule::{Schedule, SchedulePair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCostModel {
    pub kappa: f64,
    pub alpha: f64,
    pub mode: IntraStepMode,
}

impl QuadraticCostModel {
    pub fn new(params: &MarketParams, mode: IntraStepMode) -> Self {
        Self {
            kappa: params.kappa,
            alpha: params.alpha,
            mode,
        }
    }

    /// Weight of the same-step cross term `v1_t v2_t` in each agent's cost.
    fn same_step_weight(&self) -> f64 {
        match self.mode {
            IntraStepMode::Sequential => 0.5 * self.kappa,
            IntraStepMode::Simultaneous => 0.0,
        }
    }

    /// Curvature of an agent's cost along admissible (sum-preserving)
    /// directions of its own schedule.
    pub fn own_curvature(&self) -> f64 {
        2.0 * self.alpha - self.kappa
    }

    /// Hessian of `EIS_agent` with respect to the stacked vector `(v1, v2)`.
    /// Costs are pure quadratic forms: `EIS_k = 0.5 * x' Q_k x`.
    pub fn hessian(&self, n: usize, agent: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        let own = agent * n;
        let other = (1 - agent) * n;
        let cross = self.same_step_weight();
        for t in 0..n {
            for j in 0..n {
                q[(own + t, own + j)] = if t == j { 2.0 * self.alpha } else { self.kappa };
                // d2 / dv_own_t dv_other_j
                let c = if j < t {
                    self.kappa
                } else if j == t {
                    cross
                } else {
                    0.0
                };
                q[(own + t, other + j)] += c;
                q[(other + j, own + t)] += c;
            }
        }
        q
    }
}

fn agent_cost(model: &QuadraticCostModel, own: &[f64], other: &[f64]) -> f64 {
    let mut executed = 0.0;
    let mut impact = 0.0;
    let mut temporary = 0.0;
    let mut cross = 0.0;
    for (a, b) in own.iter().zip(other) {
        impact += a * executed;
        temporary += a * a;
        cross += a * b;
        executed += a + b;
    }
    model.kappa * impact + model.alpha * temporary + model.same_step_weight() * cross
}

/// Expected shortfall of both agents.
pub fn expected_is(model: &QuadraticCostModel, v1: &[f64], v2: &[f64]) -> Result<(f64, f64)> {
    check_len(v1.len(), v2.len())?;
    Ok((agent_cost(model, v1, v2), agent_cost(model, v2, v1)))
}

/// Zero-noise shortfall for a known sequence of trade orders. In sequential
/// mode the agent trading second pays `kappa * v_first` extra per share;
/// simultaneous mode ignores `orders` and equals [`expected_is`].
pub fn realized_is(
    model: &QuadraticCostModel,
    v1: &[f64],
    v2: &[f64],
    orders: &[Order],
) -> Result<(f64, f64)> {
    check_len(v1.len(), v2.len())?;
    check_len(v1.len(), orders.len())?;
    let flat = QuadraticCostModel {
        mode: IntraStepMode::Simultaneous,
        ..*model
    };
    let (mut c1, mut c2) = expected_is(&flat, v1, v2)?;
    if model.mode == IntraStepMode::Sequential {
        for t in 0..v1.len() {
            let paid = model.kappa * v1[t] * v2[t];
            match orders[t] {
                Order::FirstAgentFirst => c2 += paid,
                Order::SecondAgentFirst => c1 += paid,
            }
        }
    }
    Ok((c1, c2))
}

pub fn joint_cost(model: &QuadraticCostModel, pair: &SchedulePair) -> Result<f64> {
    let (a, b) = expected_is(model, &pair.first, &pair.second)?;
    Ok(a + b)
}

fn solve(system: DMatrix<f64>, rhs: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let x = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("{what}: singular optimality system")))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::Singular(format!("{what}: non-finite solution")))
    }
}

/// Own schedule minimising expected shortfall against a fixed opponent,
/// subject to liquidating exactly `q0`.
pub fn best_response(model: &QuadraticCostModel, opponent: &[f64], q0: f64) -> Result<Schedule> {
    if model.own_curvature() <= 0.0 {
        return Err(Error::Singular(format!(
            "best response needs 2 alpha > kappa (alpha = {}, kappa = {})",
            model.alpha, model.kappa
        )));
    }
    let n = opponent.len();
    if n == 0 {
        return Err(Error::EmptyInput("opponent schedule"));
    }
    // KKT: [H 1; 1' 0] [v; mu] = [-c; q0]
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    let cross = model.same_step_weight();
    let mut opp_executed = 0.0;
    for t in 0..n {
        for j in 0..n {
            kkt[(t, j)] = if t == j {
                2.0 * model.alpha
            } else {
                model.kappa
            };
        }
        kkt[(t, n)] = 1.0;
        kkt[(n, t)] = 1.0;
        rhs[t] = -(model.kappa * opp_executed + cross * opponent[t]);
        opp_executed += opponent[t];
    }
    rhs[n] = q0;
    let x = solve(kkt, rhs, "best response")?;
    let mut s = Schedule(x.iter().take(n).copied().collect());
    s.close_to(q0);
    Ok(s)
}

/// Exact open-loop Nash equilibrium of the discrete-time game: both agents'
/// first-order conditions stacked into one linear system.
pub fn discrete_nash_schedule(
    model: &QuadraticCostModel,
    n: usize,
    endowments: (f64, f64),
) -> Result<SchedulePair> {
    if model.own_curvature() <= 0.0 {
        return Err(Error::Singular(
            "discrete equilibrium needs 2 alpha > kappa".into(),
        ));
    }
    if n == 0 {
        return Err(Error::EmptyInput("horizon"));
    }
    let dim = 2 * n + 2;
    let mut sys = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for agent in 0..2 {
        // rows of agent's gradient: Q_agent restricted to its own rows
        let q = model.hessian(n, agent);
        let own = agent * n;
        for t in 0..n {
            for j in 0..2 * n {
                sys[(own + t, j)] = q[(own + t, j)];
            }
            sys[(own + t, 2 * n + agent)] = 1.0;
            sys[(2 * n + agent, own + t)] = 1.0;
        }
    }
    rhs[2 * n] = endowments.0;
    rhs[2 * n + 1] = endowments.1;
    let x = solve(sys, rhs, "discrete Nash")?;
    let mut first = Schedule(x.rows(0, n).iter().copied().collect());
    let mut second = Schedule(x.rows(n, n).iter().copied().collect());
    first.close_to(endowments.0);
    second.close_to(endowments.1);
    SchedulePair::new(first, second)
}
