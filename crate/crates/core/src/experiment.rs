//! Training and testing runs of two DDQL agents in the impact game, and
//! scenario reports comparing the learned behaviour with the analytic
//! references.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    centroid, classify_point, default_weight_grid, discrete_nash_schedule, expected_is,
    nash_schedule, pareto_front, twap_schedule, EquilibriumRegion, NashInputs, ParetoFrontPoint,
    QuadraticCostModel,
};
use crate::ddql::{explore_action, Agent, DdqlConfig, Observation, Transition};
use crate::error::{Error, Result};
use crate::market::{is_pair, EpisodeRecord, IntraStepMode, MarketParams, MarketState, Order};
use crate::rng::{child_seed, stream, GameRng, Stream};
use crate::schedule::SchedulePair;

/// Volatility scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Zero,
    Moderate,
    Large,
}

impl Scenario {
    pub fn sigma(self) -> f64 {
        match self {
            Scenario::Zero => 1e-9,
            Scenario::Moderate => 1e-3,
            Scenario::Large => 1e-2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::Zero => "zero noise",
            Scenario::Moderate => "moderate noise",
            Scenario::Large => "large noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Market constants; `sigma` is overridden per phase.
    pub market: MarketParams,
    pub train_iters: usize,
    pub test_iters: usize,
    pub runs: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub sigma_train: f64,
    pub sigma_test: f64,
    pub ddql: DdqlConfig,
    pub mode: IntraStepMode,
    pub front_grid_size: usize,
    /// Episodes for the random-policy baseline estimate.
    pub baseline_episodes: usize,
    /// Training log granularity in iterations.
    pub log_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scenario = Scenario::Moderate;
        Self {
            market: MarketParams::default(),
            train_iters: 5000,
            test_iters: 2500,
            runs: 20,
            seed: 42,
            scenario,
            sigma_train: scenario.sigma(),
            sigma_test: scenario.sigma(),
            ddql: DdqlConfig::default(),
            mode: IntraStepMode::Sequential,
            front_grid_size: 101,
            baseline_episodes: 2000,
            log_every: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.ddql.validate()?;
        if self.runs == 0 {
            return Err(Error::config("runs", "must be >= 1"));
        }
        if self.train_iters == 0 {
            return Err(Error::config("train_iters", "must be >= 1"));
        }
        if self.test_iters == 0 {
            return Err(Error::config("test_iters", "must be >= 1"));
        }
        if self.test_iters >= self.train_iters {
            return Err(Error::config(
                "test_iters",
                "must be smaller than train_iters",
            ));
        }
        for (key, s) in [
            ("sigma_train", self.sigma_train),
            ("sigma_test", self.sigma_test),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::config(key, "must be finite and >= 0"));
            }
        }
        if self.front_grid_size == 0 {
            return Err(Error::config("front_grid_size", "must be >= 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("log_every", "must be >= 1"));
        }
        Ok(())
    }

    pub fn train_market(&self) -> MarketParams {
        self.market.with_sigma(self.sigma_train)
    }

    pub fn test_market(&self) -> MarketParams {
        self.market.with_sigma(self.sigma_test)
    }

    pub fn is_misspecified(&self) -> bool {
        self.sigma_train != self.sigma_test
    }

    pub fn label(&self) -> String {
        if self.is_misspecified() {
            format!(
                "train sigma {:e} / test sigma {:e}",
                self.sigma_train, self.sigma_test
            )
        } else if self.sigma_train == self.scenario.sigma() {
            self.scenario.label().to_string()
        } else {
            format!("sigma {:e}", self.sigma_train)
        }
    }

    pub fn run_seed(&self, run_id: usize) -> u64 {
        child_seed(self.seed, run_id as u64)
    }
}

/// Analytic reference points under the test dynamics, both agents risk neutral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub nash: SchedulePair,
    pub nash_is: (f64, f64),
    pub pareto_is: (f64, f64),
    pub discrete_nash_is: (f64, f64),
    pub random_baseline_is: (f64, f64),
    pub front: Vec<ParetoFrontPoint>,
}

impl References {
    pub fn nash_joint(&self) -> f64 {
        self.nash_is.0 + self.nash_is.1
    }

    pub fn pareto_joint(&self) -> f64 {
        self.pareto_is.0 + self.pareto_is.1
    }

    pub fn random_baseline_joint(&self) -> f64 {
        self.random_baseline_is.0 + self.random_baseline_is.1
    }

    pub fn compute(config: &ExperimentConfig) -> Result<Self> {
        let p = config.test_market();
        let n = p.n_steps;
        let model = QuadraticCostModel::new(&p, config.mode);
        let nash = nash_schedule(&NashInputs::symmetric(p, 0.0))?;
        let nash_is = expected_is(&model, &nash.first, &nash.second)?;
        let twap = twap_schedule(p.q0, n)?;
        let pareto_is = expected_is(&model, &twap, &twap)?;
        let discrete = discrete_nash_schedule(&model, n, (p.q0, p.q0))?;
        let discrete_nash_is = expected_is(&model, &discrete.first, &discrete.second)?;
        let weights = default_weight_grid(&model, n, config.front_grid_size)?;
        let front = pareto_front(&model, n, (p.q0, p.q0), &weights)?;
        let random_baseline_is = random_policy_baseline(
            p,
            config.mode,
            config.baseline_episodes.max(1),
            child_seed(config.seed, u64::MAX),
        )?;
        Ok(Self {
            nash,
            nash_is,
            pareto_is,
            discrete_nash_is,
            random_baseline_is,
            front,
        })
    }
}

fn coin(rng: &mut GameRng) -> Order {
    if rng.random_bool(0.5) {
        Order::SecondAgentFirst
    } else {
        Order::FirstAgentFirst
    }
}

fn noise(rng: &mut GameRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Mean shortfall pair when both agents always explore (with forced final
/// liquidation), estimated over `episodes` seeded episodes.
pub fn random_policy_baseline(
    params: MarketParams,
    mode: IntraStepMode,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = stream(seed, Stream::Baseline);
    let n = params.n_steps;
    let mut pairs = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = MarketState::init_episode(params, mode)?;
        for t in 0..n {
            let order = coin(&mut rng);
            for k in order.sequence() {
                let g = Observation {
                    t,
                    inventory: state.inv[k],
                    mid: state.observed_mid(),
                };
                let v = if t + 1 == n {
                    g.inventory
                } else {
                    explore_action(&g, params.q0, n, &mut rng)
                };
                state.execute(k, v)?;
            }
            state.close_step(noise(&mut rng))?;
        }
        pairs.push((
            params.s0 * params.q0 - state.cash[0],
            params.s0 * params.q0 - state.cash[1],
        ));
    }
    centroid(&pairs)
}

/// How agents pick actions during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Train,
    Test,
}

/// Plays one episode. In training, transitions are stored and both agents
/// train and run maintenance after each step, in execution order.
fn play_episode(
    agents: &mut [Agent; 2],
    params: MarketParams,
    mode: IntraStepMode,
    phase: Phase,
    rng: &mut GameRng,
    losses: &mut Vec<f64>,
) -> Result<EpisodeRecord> {
    let n = params.n_steps;
    let mut state = MarketState::init_episode(params, mode)?;
    let mut record = EpisodeRecord::new(params);
    for t in 0..n {
        let order = coin(rng);
        let mut seen = [Observation {
            t,
            inventory: 0.0,
            mid: 0.0,
        }; 2];
        let mut v = [0.0; 2];
        let mut price = [0.0; 2];
        for k in order.sequence() {
            seen[k] = Observation {
                t,
                inventory: state.inv[k],
                mid: state.observed_mid(),
            };
            v[k] = match phase {
                Phase::Train => agents[k].select_action(&seen[k], rng)?,
                Phase::Test => agents[k].greedy_action(&seen[k])?,
            };
            price[k] = state.execute(k, v[k])?;
        }
        state.close_step(noise(rng))?;
        let outcome = crate::market::StepOutcome {
            exec_price: price,
            reward: [price[0] * v[0], price[1] * v[1]],
            order,
        };
        record.push(v, &outcome, &state);
        if phase == Phase::Train {
            for k in order.sequence() {
                let next = Observation {
                    t: t + 1,
                    inventory: state.inv[k],
                    mid: state.mid,
                };
                agents[k].remember(Transition {
                    state: seen[k],
                    action: v[k],
                    reward: outcome.reward[k],
                    next,
                    terminal: t + 1 == n,
                });
                if let Some(loss) = agents[k].train_step(rng)? {
                    losses.push(loss);
                }
                agents[k].maintenance();
            }
        }
    }
    if !record.is_complete() {
        return Err(Error::IncompleteEpisode {
            t: record.steps,
            n,
            inventory: record.final_inv[0].abs().max(record.final_inv[1].abs()),
        });
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Last iteration (1-based) covered by this entry.
    pub iter: usize,
    /// Mean episode reward (sum of fills) per agent over the window.
    pub mean_reward: (f64, f64),
    pub mean_is: (f64, f64),
    pub mean_loss: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub episode_rewards: Vec<(f64, f64)>,
    pub entries: Vec<LogEntry>,
    /// Steps in which each agent traded first.
    pub first_mover_counts: (u64, u64),
}

#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub agents: [Agent; 2],
    pub log: TrainingLog,
}

/// Trains two fresh agents for `train_iters` episodes under the training volatility.
pub fn train_run(config: &ExperimentConfig, run_seed: u64) -> Result<TrainedPair> {
    config.validate()?;
    let params = config.train_market();
    let mut agents = [
        Agent::new(
            &config.ddql,
            &params,
            &mut stream(run_seed, Stream::InitFirst),
        )?,
        Agent::new(
            &config.ddql,
            &params,
            &mut stream(run_seed, Stream::InitSecond),
        )?,
    ];
    let mut rng = stream(run_seed, Stream::Train);
    let mut log = TrainingLog::default();
    let mut window: Vec<(f64, f64, f64)> = Vec::new();
    let mut losses = Vec::new();
    for iter in 1..=config.train_iters {
        losses.clear();
        let rec = play_episode(
            &mut agents,
            params,
            config.mode,
            Phase::Train,
            &mut rng,
            &mut losses,
        )?;
        is_pair(&rec)?;
        for o in &rec.orders {
            match o.first() {
                0 => log.first_mover_counts.0 += 1,
                _ => log.first_mover_counts.1 += 1,
            }
        }
        log.episode_rewards.push((rec.cash[0], rec.cash[1]));
        let loss = if losses.is_empty() {
            f64::NAN
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        window.push((rec.cash[0], rec.cash[1], loss));
        if iter % config.log_every == 0 || iter == config.train_iters {
            let k = window.len() as f64;
            let r1 = window.iter().map(|w| w.0).sum::<f64>() / k;
            let r2 = window.iter().map(|w| w.1).sum::<f64>() / k;
            let s0q0 = params.s0 * params.q0;
            let finite: Vec<f64> = window
                .iter()
                .map(|w| w.2)
                .filter(|l| l.is_finite())
                .collect();
            log.entries.push(LogEntry {
                iter,
                mean_reward: (r1, r2),
                mean_is: (s0q0 - r1, s0q0 - r2),
                mean_loss: if finite.is_empty() {
                    f64::NAN
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                },
                epsilon: agents[0].epsilon,
            });
            window.clear();
        }
    }
    Ok(TrainedPair { agents, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: usize,
    pub is_pairs: Vec<(f64, f64)>,
    /// Mean traded quantity per step, per agent.
    pub avg_schedules: [Vec<f64>; 2],
    pub centroid: (f64, f64),
    pub region: EquilibriumRegion,
}

/// Greedy play for `test_iters` episodes under the test volatility.
pub fn test_run(
    agents: &[Agent; 2],
    config: &ExperimentConfig,
    refs: &References,
    run_id: usize,
    run_seed: u64,
) -> Result<RunResult> {
    test_run_records(agents, config, refs, run_id, run_seed, |_| ())
}

/// [`test_run`] that also hands every episode record to `inspect`.
pub fn test_run_records(
    agents: &[Agent; 2],
    config: &ExperimentConfig,
    refs: &References,
    run_id: usize,
    run_seed: u64,
    mut inspect: impl FnMut(&EpisodeRecord),
) -> Result<RunResult> {
    config.validate()?;
    let params = config.test_market();
    let n = params.n_steps;
    let mut players = agents.clone();
    for a in &mut players {
        a.market = params;
    }
    let mut rng = stream(run_seed, Stream::Test);
    let mut is_pairs = Vec::with_capacity(config.test_iters);
    let mut sums = [vec![0.0; n], vec![0.0; n]];
    let mut unused = Vec::new();
    for _ in 0..config.test_iters {
        let rec = play_episode(
            &mut players,
            params,
            config.mode,
            Phase::Test,
            &mut rng,
            &mut unused,
        )?;
        is_pairs.push(is_pair(&rec)?);
        for (sum, sched) in sums.iter_mut().zip(&rec.schedules) {
            for (s, v) in sum.iter_mut().zip(sched) {
                *s += v;
            }
        }
        inspect(&rec);
    }
    let b = config.test_iters as f64;
    let avg_schedules = sums.map(|s| s.into_iter().map(|x| x / b).collect());
    let c = centroid(&is_pairs)?;
    let region = classify_point(c, refs.nash_is, refs.pareto_is)?;
    Ok(RunResult {
        run_id,
        is_pairs,
        avg_schedules,
        centroid: c,
        region,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub label: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub refs: References,
    pub region_counts: Vec<(EquilibriumRegion, usize)>,
    pub training_logs: Vec<TrainingLog>,
}

impl ScenarioReport {
    /// Assembles a report and counts the regions of the run centroids.
    pub fn new(
        config: &ExperimentConfig,
        refs: References,
        runs: Vec<RunResult>,
        training_logs: Vec<TrainingLog>,
    ) -> Self {
        let region_counts = EquilibriumRegion::ALL
            .iter()
            .map(|&r| (r, runs.iter().filter(|run| run.region == r).count()))
            .collect();
        Self {
            label: config.label(),
            config: config.clone(),
            runs,
            refs,
            region_counts,
            training_logs,
        }
    }

    pub fn count(&self, region: EquilibriumRegion) -> usize {
        self.region_counts
            .iter()
            .find(|(r, _)| *r == region)
            .map_or(0, |(_, c)| *c)
    }
}

fn one_run(
    config: &ExperimentConfig,
    refs: &References,
    run_id: usize,
) -> Result<(RunResult, TrainingLog)> {
    let seed = config.run_seed(run_id);
    let trained = train_run(config, seed)?;
    let result = test_run(&trained.agents, config, refs, run_id, seed)?;
    Ok((result, trained.log))
}

/// Independent train+test runs (in parallel), with analytic references and
/// region counts of the run centroids.
pub fn run_scenario(config: &ExperimentConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let refs = References::compute(config)?;
    let outcomes = (0..config.runs)
        .into_par_iter()
        .map(|id| one_run(config, &refs, id))
        .collect::<Result<Vec<_>>>()?;
    let (runs, training_logs) = outcomes.into_iter().unzip();
    Ok(ScenarioReport::new(config, refs, runs, training_logs))
}

/// Scenario with separate training and testing volatilities. Equal
/// volatilities reduce to [`run_scenario`].
pub fn run_misspecified(config: &ExperimentConfig) -> Result<ScenarioReport> {
    run_scenario(config)
}

/// Total shortfall of both agents recomputed from the mid-price path: fills
/// are rebuilt from each step's opening mid, the order of trades and the
/// impact parameters.
pub fn joint_cost_from_path(record: &EpisodeRecord, mode: IntraStepMode) -> f64 {
    let p = &record.params;
    let mut proceeds = 0.0;
    for t in 0..record.steps {
        let open = record.price_path[t];
        let [first, second] = record.orders[t].sequence();
        let vf = record.schedules[first][t];
        let vs = record.schedules[second][t];
        let second_mid = match mode {
            IntraStepMode::Sequential => open - p.kappa * vf,
            IntraStepMode::Simultaneous => open,
        };
        proceeds += (open - p.alpha * vf) * vf + (second_mid - p.alpha * vs) * vs;
    }
    2.0 * p.s0 * p.q0 - proceeds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            train_iters: 3,
            test_iters: 2,
            runs: 2,
            baseline_episodes: 50,
            front_grid_size: 11,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(tiny().validate().is_ok());
        let bad = ExperimentConfig { runs: 0, ..tiny() };
        assert!(bad.validate().unwrap_err().is_config());
        let bad = ExperimentConfig {
            test_iters: 3,
            ..tiny()
        };
        assert!(bad.validate().unwrap_err().is_config());
    }

    #[test]
    fn labels() {
        assert_eq!(tiny().label(), "moderate noise");
        let m = ExperimentConfig {
            sigma_train: 1e-9,
            sigma_test: 1e-2,
            ..tiny()
        };
        assert!(m.is_misspecified());
        assert_eq!(m.label(), "train sigma 1e-9 / test sigma 1e-2");
    }

    #[test]
    fn single_iteration_bookkeeping() {
        let cfg = ExperimentConfig {
            train_iters: 1,
            test_iters: 1,
            ..tiny()
        };
        let cfg = ExperimentConfig {
            train_iters: 2,
            ..cfg
        };
        let one = ExperimentConfig {
            train_iters: 1,
            test_iters: 1,
            ..tiny()
        };
        // test_iters < train_iters forbids M = 1 in a full config; train directly
        assert!(one.validate().is_err());
        let trained = train_run(&cfg, 9).unwrap();
        let n = cfg.market.n_steps;
        for a in &trained.agents {
            assert_eq!(a.memory.len(), 2 * n);
            assert_eq!(a.adam.step_count(), 0);
        }
        assert_eq!(trained.log.episode_rewards.len(), 2);
    }

    #[test]
    fn references_are_consistent() {
        let refs = References::compute(&tiny()).unwrap();
        assert!((refs.pareto_is.0 - 11.5).abs() < 1e-9);
        assert!(refs.nash_joint() > refs.pareto_joint());
        assert!(refs.random_baseline_joint() > refs.nash_joint());
        assert_eq!(refs.front.len(), 11);
    }
}
