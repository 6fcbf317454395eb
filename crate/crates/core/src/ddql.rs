//! Double Deep Q-Learning agent for one side of the impact game.
//!
//! The agent observes `g = (t, q_t, S_{t-1})` and scores candidate sale sizes
//! with a Q-network over the normalised features `(q, t, S, v)`. Exploration
//! draws from a normal centred on the TWAP rate of the remaining inventory;
//! exploitation takes the arg-max over a uniform grid on `[0, q_t]`. The last
//! step always liquidates what is left.
//!
//! Q-values are `baseline(g) + net(features)` where the optional baseline
//! `S_{t-1} q_t` is the mark-to-market value of the remaining inventory. It
//! does not depend on the action, so arg-max decisions and targets are the
//! same as for a raw network; the network only has to fit execution costs.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardUniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::neural::{AdamState, Mlp, TrainBatch, DEFAULT_LAYER_DIMS, DEFAULT_LEAKY_SLOPE};

pub const FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdqlConfig {
    /// Training batch size `b`.
    pub batch_size: usize,
    /// Replay memory length `L`.
    pub memory_len: usize,
    /// Actions between epsilon decays and target syncs (`m`).
    pub reset_every: usize,
    /// Epsilon decay factor `c`.
    pub epsilon_decay: f64,
    pub gamma: f64,
    pub lr: f64,
    /// Candidate actions on `[0, q_t]` for the greedy arg-max.
    pub grid_size: usize,
    pub layer_dims: Vec<usize>,
    pub leaky_slope: f64,
    /// Add `S_{t-1} q_t` to network outputs (see module docs).
    pub value_baseline: bool,
    pub epsilon_counting: EpsilonCounting,
}

/// Which actions count towards the `reset_every` maintenance period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonCounting {
    /// Only the agent's own actions.
    #[default]
    PerAgent,
    /// Actions of both agents; each own action counts once per agent.
    Global,
}

impl EpsilonCounting {
    fn per_action(self) -> usize {
        match self {
            EpsilonCounting::PerAgent => 1,
            EpsilonCounting::Global => crate::market::AGENTS,
        }
    }
}

impl Default for DdqlConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            memory_len: 15_000,
            reset_every: 75,
            epsilon_decay: 0.995,
            gamma: 1.0,
            lr: 1e-4,
            grid_size: 101,
            layer_dims: DEFAULT_LAYER_DIMS.to_vec(),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            value_baseline: true,
            epsilon_counting: EpsilonCounting::PerAgent,
        }
    }
}

impl DdqlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("ddql.batch_size", "must be >= 1"));
        }
        if self.memory_len < 2 || self.memory_len < self.batch_size {
            return Err(Error::config(
                "ddql.memory_len",
                "must be >= 2 and >= batch_size",
            ));
        }
        if self.reset_every == 0 {
            return Err(Error::config("ddql.reset_every", "must be >= 1"));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return Err(Error::config("ddql.epsilon_decay", "must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("ddql.gamma", "must be in [0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("ddql.lr", "must be > 0"));
        }
        if self.grid_size < 2 {
            return Err(Error::config("ddql.grid_size", "must be >= 2"));
        }
        if self.layer_dims.first() != Some(&FEATURES) {
            return Err(Error::config(
                "ddql.layer_dims",
                format!("input width must be {FEATURES}"),
            ));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("ddql.leaky_slope", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// What an agent sees before acting: step index, own inventory and the mid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: usize,
    pub inventory: f64,
    pub mid: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: f64,
    pub reward: f64,
    pub next: Observation,
    /// The action was the last of the episode (`next.t == N`).
    pub terminal: bool,
}

/// Replay memory capped at `max_len`; reaching the cap drops the oldest half.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Transition>,
    max_len: usize,
}

impl ReplayMemory {
    pub fn new(max_len: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(max_len),
            max_len,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn push(&mut self, t: Transition) {
        if self.buf.len() >= self.max_len {
            self.halve();
        }
        self.buf.push_back(t);
    }

    /// Halves the memory if it is full. Returns whether it did.
    pub fn halve_if_full(&mut self) -> bool {
        if self.buf.len() >= self.max_len {
            self.halve();
            true
        } else {
            false
        }
    }

    fn halve(&mut self) {
        let drop = self.buf.len() / 2;
        self.buf.drain(..drop);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.buf.iter()
    }

    /// `b` distinct transitions chosen uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, b: usize, rng: &mut R) -> Vec<Transition> {
        sample(rng, self.buf.len(), b.min(self.buf.len()))
            .into_iter()
            .map(|i| self.buf[i])
            .collect()
    }
}

/// Affine maps of `(q, t, S, v)` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub q0: f64,
    pub n_steps: usize,
    pub price_min: f64,
    pub price_max: f64,
}

impl FeatureScaler {
    /// Price range `[S0 - 3 (2 kappa q0 + 3 sigma sqrt(N)), S0]`.
    pub fn for_market(params: &MarketParams) -> Self {
        let spread = 3.0
            * (params.kappa * 2.0 * params.q0
                + params.noise_scale() * (params.n_steps as f64).sqrt() * 3.0);
        let spread = if spread > 0.0 { spread } else { 1.0 };
        Self {
            q0: params.q0,
            n_steps: params.n_steps,
            price_min: params.s0 - spread,
            price_max: params.s0,
        }
    }

    fn unit(x: f64, lo: f64, hi: f64, clamps: &mut u32) -> f64 {
        let y = 2.0 * (x - lo) / (hi - lo) - 1.0;
        if !(-1.0..=1.0).contains(&y) {
            *clamps += 1;
        }
        y.clamp(-1.0, 1.0)
    }

    /// Normalised features and the number of clamped coordinates.
    pub fn normalize(&self, g: &Observation, v: f64) -> ([f64; FEATURES], u32) {
        let mut clamps = 0;
        let f = [
            Self::unit(g.inventory, -self.q0, self.q0, &mut clamps),
            Self::unit(g.t as f64, 0.0, self.n_steps as f64, &mut clamps),
            Self::unit(g.mid, self.price_min, self.price_max, &mut clamps),
            Self::unit(v, -self.q0, self.q0, &mut clamps),
        ];
        (f, clamps)
    }

    /// Inverse of [`normalize`](Self::normalize) on unclamped values.
    pub fn denormalize(&self, f: &[f64; FEATURES]) -> (Observation, f64) {
        let back = |y: f64, lo: f64, hi: f64| lo + (y + 1.0) * (hi - lo) / 2.0;
        (
            Observation {
                inventory: back(f[0], -self.q0, self.q0),
                t: back(f[1], 0.0, self.n_steps as f64).round() as usize,
                mid: back(f[2], self.price_min, self.price_max),
            },
            back(f[3], -self.q0, self.q0),
        )
    }
}

/// Exploration draw: `N(q_t / (N - t), |q_t / (N - t)|)` clipped to `[-q0, q0]`.
pub fn explore_action<R: Rng + ?Sized>(
    g: &Observation,
    q0: f64,
    n_steps: usize,
    rng: &mut R,
) -> f64 {
    let mean = g.inventory / (n_steps - g.t) as f64;
    if mean == 0.0 {
        return 0.0;
    }
    let draw = Normal::new(mean, mean.abs())
        .expect("finite mean and positive sd")
        .sample(rng);
    draw.clamp(-q0, q0)
}

/// Candidate actions `q_t * i / (G - 1)`, `i = 0..G`.
pub fn action_grid(inventory: f64, grid_size: usize) -> impl Iterator<Item = f64> {
    let last = (grid_size - 1) as f64;
    (0..grid_size).map(move |i| {
        if i + 1 == grid_size {
            inventory
        } else {
            inventory * i as f64 / last
        }
    })
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub q_main: Mlp,
    pub q_tgt: Mlp,
    pub memory: ReplayMemory,
    pub adam: AdamState,
    pub epsilon: f64,
    /// Actions since the last maintenance event.
    pub action_counter: usize,
    pub maintenance_events: u64,
    pub clamp_events: u64,
    pub scaler: FeatureScaler,
    pub config: DdqlConfig,
    pub market: MarketParams,
}

impl Agent {
    /// Randomly initialised main net with an identical target copy.
    pub fn new<R: Rng + ?Sized>(
        config: &DdqlConfig,
        market: &MarketParams,
        rng: &mut R,
    ) -> Result<Self> {
        let q_main = Mlp::new(&config.layer_dims, config.leaky_slope, rng)?;
        Self::with_net(config, market, q_main)
    }

    pub fn with_net(config: &DdqlConfig, market: &MarketParams, q_main: Mlp) -> Result<Self> {
        config.validate()?;
        market.validate()?;
        if q_main.layer_dims() != config.layer_dims {
            return Err(Error::config(
                "ddql.layer_dims",
                "network topology mismatch",
            ));
        }
        Ok(Self {
            q_tgt: q_main.clone(),
            adam: AdamState::new(&q_main, config.lr),
            q_main,
            memory: ReplayMemory::new(config.memory_len),
            epsilon: 1.0,
            action_counter: 0,
            maintenance_events: 0,
            clamp_events: 0,
            scaler: FeatureScaler::for_market(market),
            config: config.clone(),
            market: *market,
        })
    }

    fn baseline(&self, g: &Observation) -> f64 {
        if self.config.value_baseline {
            g.mid * g.inventory
        } else {
            0.0
        }
    }

    fn features(&mut self, g: &Observation, v: f64) -> [f64; FEATURES] {
        let (f, c) = self.scaler.normalize(g, v);
        self.clamp_events += c as u64;
        f
    }

    /// Network scores of every grid action at each observation, one block of
    /// `grid_size` columns per observation.
    fn grid_scores(&mut self, net_is_main: bool, states: &[Observation]) -> Result<Vec<f64>> {
        let g = self.config.grid_size;
        let mut inputs = DMatrix::zeros(FEATURES, states.len() * g);
        for (s, obs) in states.iter().enumerate() {
            for (i, v) in action_grid(obs.inventory, g).enumerate() {
                let f = self.features(obs, v);
                inputs.column_mut(s * g + i).copy_from_slice(&f);
            }
        }
        let net = if net_is_main {
            &self.q_main
        } else {
            &self.q_tgt
        };
        net.forward_batch(&inputs)
    }

    /// Q-value `baseline + net` of one action under either network.
    pub fn q_value(&mut self, use_main: bool, g: &Observation, v: f64) -> Result<f64> {
        let f = self.features(g, v);
        let net = if use_main { &self.q_main } else { &self.q_tgt };
        Ok(self.baseline(g) + net.forward(&f)?)
    }

    /// The policy's exploit action: forced liquidation on the last step,
    /// otherwise the grid arg-max of the main network.
    pub fn greedy_action(&mut self, g: &Observation) -> Result<f64> {
        let n = self.market.n_steps;
        if g.t >= n {
            return Err(Error::EpisodeComplete(g.t));
        }
        if g.t + 1 == n {
            return Ok(g.inventory);
        }
        let scores = self.grid_scores(true, std::slice::from_ref(g))?;
        let best = argmax(&scores);
        Ok(action_grid(g.inventory, self.config.grid_size)
            .nth(best)
            .expect("grid index in range"))
    }

    /// Epsilon-greedy action for training.
    pub fn select_action<R: Rng + ?Sized>(&mut self, g: &Observation, rng: &mut R) -> Result<f64> {
        let n = self.market.n_steps;
        if g.t >= n {
            return Err(Error::EpisodeComplete(g.t));
        }
        if g.t + 1 == n {
            return Ok(g.inventory);
        }
        let zeta: f64 = StandardUniform.sample(rng);
        if zeta <= self.epsilon {
            Ok(explore_action(g, self.market.q0, n, rng))
        } else {
            self.greedy_action(g)
        }
    }

    /// Double-Q targets: `r` for terminal transitions, otherwise
    /// `r + gamma * Q_tgt(g', v*)` with `v*` the main network's policy action at `g'`.
    pub fn compute_targets(&mut self, batch: &[Transition]) -> Result<Vec<f64>> {
        let n = self.market.n_steps;
        let gamma = self.config.gamma;
        let mut targets: Vec<f64> = batch.iter().map(|tr| tr.reward).collect();
        if gamma == 0.0 {
            return Ok(targets);
        }
        // transitions whose next action is chosen by arg-max
        let open: Vec<usize> = (0..batch.len())
            .filter(|&j| !batch[j].terminal && batch[j].next.t + 1 < n)
            .collect();
        let states: Vec<Observation> = open.iter().map(|&j| batch[j].next).collect();
        let scores = if states.is_empty() {
            Vec::new()
        } else {
            self.grid_scores(true, &states)?
        };
        let g = self.config.grid_size;
        let mut chosen = vec![None; batch.len()];
        for (k, &j) in open.iter().enumerate() {
            let best = argmax(&scores[k * g..(k + 1) * g]);
            chosen[j] = action_grid(batch[j].next.inventory, g).nth(best);
        }
        let eval: Vec<usize> = (0..batch.len()).filter(|&j| !batch[j].terminal).collect();
        if eval.is_empty() {
            return Ok(targets);
        }
        let mut inputs = DMatrix::zeros(FEATURES, eval.len());
        for (c, &j) in eval.iter().enumerate() {
            let next = batch[j].next;
            // forced final liquidation when no arg-max was taken
            let v = chosen[j].unwrap_or(next.inventory);
            let f = self.features(&next, v);
            inputs.column_mut(c).copy_from_slice(&f);
        }
        let values = self.q_tgt.forward_batch(&inputs)?;
        for (c, &j) in eval.iter().enumerate() {
            targets[j] += gamma * (self.baseline(&batch[j].next) + values[c]);
        }
        Ok(targets)
    }

    /// One gradient step of the main network on `batch`. Returns the loss
    /// before the update.
    pub fn train_on(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        let targets = self.compute_targets(batch)?;
        let mut inputs = DMatrix::zeros(FEATURES, batch.len());
        let mut shifted = Vec::with_capacity(batch.len());
        for (c, tr) in batch.iter().enumerate() {
            let f = self.features(&tr.state, tr.action);
            inputs.column_mut(c).copy_from_slice(&f);
            shifted.push(targets[c] - self.baseline(&tr.state));
        }
        let (loss, grads) = self.q_main.backward(&TrainBatch::new(inputs, shifted)?)?;
        self.adam.update(&mut self.q_main, &grads)?;
        Ok(loss)
    }

    /// Samples a batch from memory and trains on it; `None` until the memory
    /// holds a full batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.memory.len() < self.config.batch_size {
            return Ok(None);
        }
        let batch = self.memory.sample(self.config.batch_size, rng);
        self.train_on(&batch).map(Some)
    }

    pub fn remember(&mut self, t: Transition) {
        self.memory.push(t);
    }

    /// Bookkeeping after every action: every `m` actions decay epsilon and
    /// sync the target network; halve a full memory.
    pub fn maintenance(&mut self) {
        self.action_counter += self.config.epsilon_counting.per_action();
        if self.action_counter >= self.config.reset_every {
            self.action_counter -= self.config.reset_every;
            self.maintenance_events += 1;
            self.epsilon *= self.config.epsilon_decay;
            self.q_tgt.clone_from(&self.q_main);
        }
        self.memory.halve_if_full();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn market() -> MarketParams {
        MarketParams::default()
    }

    fn zero_agent() -> Agent {
        let cfg = DdqlConfig::default();
        let net = Mlp::zeros(&cfg.layer_dims, cfg.leaky_slope).unwrap();
        Agent::with_net(&cfg, &market(), net).unwrap()
    }

    fn obs(t: usize, q: f64) -> Observation {
        Observation {
            t,
            inventory: q,
            mid: 10.0,
        }
    }

    #[test]
    fn exploration_distribution() {
        let mut agent = zero_agent();
        let mut rng = rng_from_seed(1);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| agent.select_action(&obs(1, 90.0), &mut rng).unwrap())
            .collect();
        assert!(draws.iter().all(|v| (-100.0..=100.0).contains(v)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        assert!((mean - 10.0).abs() < 0.3, "{mean}");
        assert!((var.sqrt() - 10.0).abs() < 0.3, "{}", var.sqrt());
    }

    #[test]
    fn exploration_degenerate_at_zero_inventory() {
        let mut rng = rng_from_seed(1);
        assert_eq!(explore_action(&obs(2, 0.0), 100.0, 10, &mut rng), 0.0);
        // negative inventory: buy-side mean, sd |mean|
        let v = explore_action(&obs(5, -10.0), 100.0, 10, &mut rng);
        assert!(v.is_finite());
    }

    #[test]
    fn greedy_tie_break_is_zero() {
        let mut agent = zero_agent();
        agent.epsilon = 0.0;
        let mut rng = rng_from_seed(2);
        assert_eq!(agent.select_action(&obs(3, 70.0), &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn last_step_liquidates() {
        let mut agent = zero_agent();
        let mut rng = rng_from_seed(2);
        assert_eq!(agent.select_action(&obs(9, 37.2), &mut rng).unwrap(), 37.2);
        assert_eq!(agent.greedy_action(&obs(9, -4.0)).unwrap(), -4.0);
        assert!(matches!(
            agent.select_action(&obs(10, 0.0), &mut rng),
            Err(Error::EpisodeComplete(10))
        ));
    }

    #[test]
    fn grid_endpoints() {
        let g: Vec<f64> = action_grid(37.2, 101).collect();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[100], 37.2);
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut agent =
            Agent::new(&DdqlConfig::default(), &market(), &mut rng_from_seed(5)).unwrap();
        let tr = Transition {
            state: obs(9, 10.0),
            action: 10.0,
            reward: 3.5,
            next: obs(10, 0.0),
            terminal: true,
        };
        assert_eq!(agent.compute_targets(&[tr]).unwrap(), vec![3.5]);
    }

    #[test]
    fn zero_nets_give_reward_plus_baseline() {
        let mut agent = zero_agent();
        agent.config.value_baseline = false;
        let tr = Transition {
            state: obs(2, 80.0),
            action: 10.0,
            reward: 2.0,
            next: obs(3, 70.0),
            terminal: false,
        };
        assert_eq!(agent.compute_targets(&[tr]).unwrap(), vec![2.0]);
        agent.config.value_baseline = true;
        // baseline S q of the next state
        assert_eq!(agent.compute_targets(&[tr]).unwrap(), vec![2.0 + 700.0]);
    }

    #[test]
    fn gamma_zero_targets_are_rewards() {
        let cfg = DdqlConfig {
            gamma: 0.0,
            ..DdqlConfig::default()
        };
        let mut agent = Agent::new(&cfg, &market(), &mut rng_from_seed(6)).unwrap();
        let tr = Transition {
            state: obs(2, 80.0),
            action: 10.0,
            reward: 99.0,
            next: obs(3, 70.0),
            terminal: false,
        };
        assert_eq!(agent.compute_targets(&[tr, tr]).unwrap(), vec![99.0, 99.0]);
    }

    #[test]
    fn memory_halves_keeping_newest() {
        let mut m = ReplayMemory::new(10);
        for i in 0..10 {
            m.push(Transition {
                state: obs(0, i as f64),
                action: 0.0,
                reward: i as f64,
                next: obs(1, 0.0),
                terminal: false,
            });
        }
        assert_eq!(m.len(), 10);
        assert!(m.halve_if_full());
        assert_eq!(m.len(), 5);
        let kept: Vec<f64> = m.iter().map(|t| t.reward).collect();
        assert_eq!(kept, vec![5.0, 6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn epsilon_decays_geometrically() {
        let mut agent = zero_agent();
        for _ in 0..74 {
            agent.maintenance();
        }
        assert_eq!(agent.epsilon, 1.0);
        agent.maintenance();
        assert_eq!(agent.epsilon, 0.995);
        for _ in 0..75 * 9 {
            agent.maintenance();
        }
        assert_eq!(agent.epsilon, (0..10).fold(1.0, |e, _| e * 0.995));
    }

    #[test]
    fn global_counting_decays_twice_as_fast() {
        let mut agent = zero_agent();
        agent.config.epsilon_counting = EpsilonCounting::Global;
        for _ in 0..750 {
            agent.maintenance();
        }
        assert_eq!(agent.maintenance_events, 20);
        assert_eq!(agent.epsilon, (0..20).fold(1.0, |e, _| e * 0.995));
    }

    #[test]
    fn scaler_endpoints() {
        let s = FeatureScaler::for_market(&market());
        let (f, c) = s.normalize(&obs(0, 100.0), 0.0);
        assert_eq!((f[0], f[1], c), (1.0, -1.0, 0));
        let (f, _) = s.normalize(&obs(10, -100.0), 0.0);
        assert_eq!((f[0], f[1]), (-1.0, 1.0));
        let lo = Observation {
            t: 0,
            inventory: 0.0,
            mid: s.price_min,
        };
        assert_eq!(s.normalize(&lo, 0.0).0[2], -1.0);
        assert_eq!(s.normalize(&obs(0, 0.0), 0.0).0[2], 1.0);
        let (_, c) = s.normalize(&obs(0, 250.0), 0.0);
        assert_eq!(c, 1);
    }

    #[test]
    fn train_not_ready_until_batch() {
        let mut agent = zero_agent();
        let mut rng = rng_from_seed(3);
        assert_eq!(agent.train_step(&mut rng).unwrap(), None);
    }
}
