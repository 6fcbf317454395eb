//! Discrete-time two-agent Almgren-Chriss market.
//!
//! Each step both agents submit a market order. Selling `v` shares moves the
//! mid-price down by `kappa * v` permanently and fills at `mid - alpha * v`.
//! Gaussian noise `sigma * sqrt(tau) * xi` is added once per step after both
//! trades. In [`IntraStepMode::Sequential`] the second agent to trade pays the
//! permanent impact of the first; in [`IntraStepMode::Simultaneous`] both fill
//! against the same opening mid.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Number of agents in the game.
pub const AGENTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarketParams {
    /// Initial mid-price.
    pub s0: f64,
    /// Per-step volatility.
    pub sigma: f64,
    /// Permanent impact per share.
    pub kappa: f64,
    /// Temporary impact per share (already divided by `tau`).
    pub alpha: f64,
    pub tau: f64,
    /// Steps per episode.
    pub n_steps: usize,
    /// Initial inventory of each agent.
    pub q0: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            s0: 10.0,
            sigma: 0.0,
            kappa: 0.001,
            alpha: 0.002,
            tau: 1.0,
            n_steps: 10,
            q0: 100.0,
        }
    }
}

impl MarketParams {
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |key: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, "must be finite"))
            }
        };
        finite("s0", self.s0)?;
        finite("sigma", self.sigma)?;
        finite("kappa", self.kappa)?;
        finite("alpha", self.alpha)?;
        finite("tau", self.tau)?;
        finite("q0", self.q0)?;
        if self.kappa < 0.0 {
            return Err(Error::config("kappa", "must be >= 0"));
        }
        if self.alpha < 0.0 {
            return Err(Error::config("alpha", "must be >= 0"));
        }
        if self.sigma < 0.0 {
            return Err(Error::config("sigma", "must be >= 0"));
        }
        if self.tau <= 0.0 {
            return Err(Error::config("tau", "must be > 0"));
        }
        if self.n_steps < 1 {
            return Err(Error::config("n_steps", "must be >= 1"));
        }
        if self.q0 <= 0.0 {
            return Err(Error::config("q0", "must be > 0"));
        }
        Ok(())
    }

    /// Standard deviation of the per-step noise term.
    pub fn noise_scale(&self) -> f64 {
        self.sigma * self.tau.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntraStepMode {
    #[default]
    Sequential,
    Simultaneous,
}

impl std::str::FromStr for IntraStepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "simultaneous" => Ok(Self::Simultaneous),
            other => Err(Error::config(
                "mode",
                format!("unknown intra-step mode `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for IntraStepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sequential => "sequential",
            Self::Simultaneous => "simultaneous",
        })
    }
}

/// Which agent trades first within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Order {
    #[default]
    FirstAgentFirst,
    SecondAgentFirst,
}

impl Order {
    /// Agent indices in execution order.
    pub fn sequence(self) -> [usize; AGENTS] {
        match self {
            Order::FirstAgentFirst => [0, 1],
            Order::SecondAgentFirst => [1, 0],
        }
    }

    pub fn first(self) -> usize {
        self.sequence()[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub exec_price: [f64; AGENTS],
    pub reward: [f64; AGENTS],
    pub order: Order,
}

/// Evolving market state. `open_mid` is `S_{t-1}`, the mid at the start of the
/// current step; `mid` includes the impact of trades already executed in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub params: MarketParams,
    pub mode: IntraStepMode,
    pub t: usize,
    pub mid: f64,
    pub open_mid: f64,
    pub inv: [f64; AGENTS],
    pub cash: [f64; AGENTS],
    traded: [bool; AGENTS],
}

impl MarketState {
    /// Fresh episode: `t = 0`, `mid = s0`, full inventories, no cash.
    pub fn init_episode(params: MarketParams, mode: IntraStepMode) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            mode,
            t: 0,
            mid: params.s0,
            open_mid: params.s0,
            inv: [params.q0; AGENTS],
            cash: [0.0; AGENTS],
            traded: [false; AGENTS],
        })
    }

    pub fn is_complete(&self) -> bool {
        self.t >= self.params.n_steps
    }

    /// Mid-price an agent deciding now would observe.
    pub fn observed_mid(&self) -> f64 {
        match self.mode {
            IntraStepMode::Sequential => self.mid,
            IntraStepMode::Simultaneous => self.open_mid,
        }
    }

    /// Executes one agent's order within the current step. Returns the fill
    /// price; the reward is `price * v`.
    pub fn execute(&mut self, agent: usize, v: f64) -> Result<f64> {
        if self.is_complete() {
            return Err(Error::EpisodeComplete(self.t));
        }
        if agent >= AGENTS {
            return Err(Error::Shape {
                expected: AGENTS,
                got: agent + 1,
            });
        }
        if self.traded[agent] {
            return Err(Error::Sequence("agent already traded in this step"));
        }
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite trade size {v}")));
        }
        let price = self.observed_mid() - self.params.alpha * v;
        self.mid -= self.params.kappa * v;
        self.inv[agent] -= v;
        self.cash[agent] += price * v;
        self.traded[agent] = true;
        Ok(price)
    }

    /// Applies the noise term and advances `t`. Both agents must have traded.
    pub fn close_step(&mut self, xi: f64) -> Result<()> {
        if self.is_complete() {
            return Err(Error::EpisodeComplete(self.t));
        }
        if self.traded != [true; AGENTS] {
            return Err(Error::Sequence("close_step before both agents traded"));
        }
        if !xi.is_finite() {
            return Err(Error::Numeric(format!("non-finite noise draw {xi}")));
        }
        self.mid += self.params.noise_scale() * xi;
        self.open_mid = self.mid;
        self.traded = [false; AGENTS];
        self.t += 1;
        Ok(())
    }

    /// One full step with both orders known up front.
    pub fn step(&mut self, v: [f64; AGENTS], order: Order, xi: f64) -> Result<StepOutcome> {
        let mut exec_price = [0.0; AGENTS];
        let mut reward = [0.0; AGENTS];
        for k in order.sequence() {
            exec_price[k] = self.execute(k, v[k])?;
            reward[k] = exec_price[k] * v[k];
        }
        self.close_step(xi)?;
        Ok(StepOutcome {
            exec_price,
            reward,
            order,
        })
    }
}

/// Full history of one completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub params: MarketParams,
    pub schedules: [Vec<f64>; AGENTS],
    pub exec_prices: [Vec<f64>; AGENTS],
    pub rewards: [Vec<f64>; AGENTS],
    /// Mid-prices `S_0..S_N`.
    pub price_path: Vec<f64>,
    pub orders: Vec<Order>,
    pub cash: [f64; AGENTS],
    pub final_inv: [f64; AGENTS],
    pub steps: usize,
}

impl EpisodeRecord {
    pub fn new(params: MarketParams) -> Self {
        let n = params.n_steps;
        let mut price_path = Vec::with_capacity(n + 1);
        price_path.push(params.s0);
        Self {
            params,
            schedules: [Vec::with_capacity(n), Vec::with_capacity(n)],
            exec_prices: [Vec::with_capacity(n), Vec::with_capacity(n)],
            rewards: [Vec::with_capacity(n), Vec::with_capacity(n)],
            price_path,
            orders: Vec::with_capacity(n),
            cash: [0.0; AGENTS],
            final_inv: [params.q0; AGENTS],
            steps: 0,
        }
    }

    /// Appends one step; `state` is the market after `close_step`.
    pub fn push(&mut self, v: [f64; AGENTS], outcome: &StepOutcome, state: &MarketState) {
        for k in 0..AGENTS {
            self.schedules[k].push(v[k]);
            self.exec_prices[k].push(outcome.exec_price[k]);
            self.rewards[k].push(outcome.reward[k]);
        }
        self.orders.push(outcome.order);
        self.price_path.push(state.mid);
        self.cash = state.cash;
        self.final_inv = state.inv;
        self.steps = state.t;
    }

    pub fn is_complete(&self) -> bool {
        let tol = 1e-9 * self.params.q0;
        self.steps == self.params.n_steps && self.final_inv.iter().all(|q| q.abs() <= tol)
    }
}

/// `S0 * q0 - sum_t price_t * v_t` for one agent of a completed episode.
pub fn implementation_shortfall(record: &EpisodeRecord, agent: usize) -> Result<f64> {
    if agent >= AGENTS {
        return Err(Error::Shape {
            expected: AGENTS,
            got: agent + 1,
        });
    }
    if !record.is_complete() {
        return Err(Error::IncompleteEpisode {
            t: record.steps,
            n: record.params.n_steps,
            inventory: record.final_inv[agent],
        });
    }
    Ok(record.params.s0 * record.params.q0 - record.cash[agent])
}

/// Both agents' shortfalls.
pub fn is_pair(record: &EpisodeRecord) -> Result<(f64, f64)> {
    Ok((
        implementation_shortfall(record, 0)?,
        implementation_shortfall(record, 1)?,
    ))
}

/// Replays fixed schedules through the market. `orders` and `noise` must have
/// one entry per step.
pub fn simulate(
    params: MarketParams,
    mode: IntraStepMode,
    schedules: [&[f64]; AGENTS],
    orders: &[Order],
    noise: &[f64],
) -> Result<EpisodeRecord> {
    let n = params.n_steps;
    check_len(n, schedules[0].len())?;
    check_len(n, schedules[1].len())?;
    check_len(n, orders.len())?;
    check_len(n, noise.len())?;
    let mut state = MarketState::init_episode(params, mode)?;
    let mut record = EpisodeRecord::new(params);
    for t in 0..n {
        let v = [schedules[0][t], schedules[1][t]];
        let outcome = state.step(v, orders[t], noise[t])?;
        record.push(v, &outcome, &state);
    }
    Ok(record)
}
