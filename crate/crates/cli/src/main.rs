//! Command-line front end for the impact-game laboratory.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use impact_game::analytics::{
    default_weight_grid, discrete_nash_schedule, expected_is, nash_paths, pareto_front,
    twap_schedule, NashInputs, QuadraticCostModel,
};
use impact_game::ddql::Agent;
use impact_game::experiment::{
    run_misspecified, run_scenario, test_run, train_run, ExperimentConfig, References, Scenario,
    ScenarioReport,
};
use impact_game::io::bundle::{write_training_csv, TRAINING_CSV};
use impact_game::io::{
    config::SEED_ENV, echo_config, load_snapshot, parse_config, parse_config_str, read_bundle,
    render_scatter, render_strategies, save_snapshot, write_bundle, write_front_csv,
};
use impact_game::{Error, IntraStepMode};

const AGENT_FILES: [&str; 2] = ["agent1.json", "agent2.json"];

/// Desk-scale sizes used when no configuration file is given.
const DESK_TRAIN_ITERS: usize = 1500;
const DESK_TEST_ITERS: usize = 300;
const DESK_RUNS: usize = 5;

#[derive(Parser, Debug)]
#[command(
    name = "impact-game",
    version,
    about = "Two-agent optimal execution game with DDQL agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration file; missing keys take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Root seed (overrides the file and IMPACT_GAME_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of independent runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Intra-step execution mode.
    #[arg(long)]
    mode: Option<IntraStepMode>,
    /// Full sizes: 5000 training and 2500 testing iterations, 20 runs.
    #[arg(long)]
    paper_scale: bool,
    /// Training iterations per run.
    #[arg(long)]
    train_iters: Option<usize>,
    /// Testing iterations per run.
    #[arg(long)]
    test_iters: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print Nash and TWAP schedules with their expected shortfalls.
    Analytics(Common),
    /// Write the sampled Pareto front to OUT/front.csv.
    Front {
        #[command(flatten)]
        common: Common,
        /// Number of weights in the grid.
        #[arg(long)]
        weights: Option<usize>,
    },
    /// Train one agent pair and save weight snapshots into OUT.
    Train(Common),
    /// Test agents from weight snapshots and write a one-run bundle into OUT.
    Test {
        #[command(flatten)]
        common: Common,
        /// Directory holding agent1.json and agent2.json (default OUT).
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Train and test all runs of one volatility scenario and write a bundle.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Volatility scenario; overrides the file's volatilities.
        #[arg(long)]
        scenario: Option<ScenarioArg>,
    },
    /// Run both misspecified pairings (train/test volatilities and the
    /// switched pair) into OUT/forward and OUT/switched.
    Misspec {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        sigma_train: Option<f64>,
        #[arg(long)]
        sigma_test: Option<f64>,
    },
    /// Re-render the figures of a saved bundle in OUT.
    Report(Common),
}

#[derive(clap::ValueEnum, Debug, Clone, Copy)]
enum ScenarioArg {
    Zero,
    Moderate,
    Large,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Zero => Scenario::Zero,
            ScenarioArg::Moderate => Scenario::Moderate,
            ScenarioArg::Large => Scenario::Large,
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &c.config {
        Some(path) => parse_config(path)?,
        None => {
            let env_seed = std::env::var(SEED_ENV).ok();
            let mut config = parse_config_str("{}", env_seed.as_deref())?;
            if !c.paper_scale {
                config.train_iters = DESK_TRAIN_ITERS;
                config.test_iters = DESK_TEST_ITERS;
                config.runs = DESK_RUNS;
            }
            config
        }
    };
    if c.paper_scale {
        let table = ExperimentConfig::default();
        config.train_iters = table.train_iters;
        config.test_iters = table.test_iters;
        config.runs = table.runs;
    }
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    if let Some(runs) = c.runs {
        config.runs = runs;
    }
    if let Some(mode) = c.mode {
        config.mode = mode;
    }
    if let Some(m) = c.train_iters {
        config.train_iters = m;
    }
    if let Some(b) = c.test_iters {
        config.test_iters = b;
    }
    config.validate()?;
    Ok(config)
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn analytics(c: &Common) -> Result<(), Error> {
    let config = load_config(c)?;
    let p = config.test_market();
    let n = p.n_steps;
    let model = QuadraticCostModel::new(&p, config.mode);
    let (q1, q2) = nash_paths(&NashInputs::symmetric(p, 0.0))?;
    let (v1, v2) = (q1.to_schedule(), q2.to_schedule());
    let twap = twap_schedule(p.q0, n)?;
    println!("mode: {}", config.mode);
    println!(
        "{:>3} {:>14} {:>14} {:>12} {:>12} {:>10}",
        "t", "q1*(t)", "q2*(t)", "v1*", "v2*", "twap"
    );
    for t in 0..=n {
        let (a, b) = if t < n {
            (format!("{:12.6}", v1[t]), format!("{:12.6}", v2[t]))
        } else {
            ("".into(), "".into())
        };
        let tw = if t < n {
            format!("{:10.4}", twap[t])
        } else {
            String::new()
        };
        println!(
            "{t:>3} {:>14.6} {:>14.6} {a:>12} {b:>12} {tw:>10}",
            q1.0[t], q2.0[t]
        );
    }
    let nash = expected_is(&model, &v1, &v2)?;
    let pareto = expected_is(&model, &twap, &twap)?;
    let dn = discrete_nash_schedule(&model, n, (p.q0, p.q0))?;
    let discrete = expected_is(&model, &dn.first, &dn.second)?;
    println!(
        "Nash expected IS:          {:.6} {:.6} (joint {:.6})",
        nash.0,
        nash.1,
        nash.0 + nash.1
    );
    println!(
        "Pareto (TWAP) expected IS: {:.6} {:.6} (joint {:.6})",
        pareto.0,
        pareto.1,
        pareto.0 + pareto.1
    );
    println!(
        "discrete Nash expected IS: {:.6} {:.6} (joint {:.6})",
        discrete.0,
        discrete.1,
        discrete.0 + discrete.1
    );
    Ok(())
}

fn front(c: &Common, weights: Option<usize>) -> Result<(), Error> {
    let config = load_config(c)?;
    let p = config.test_market();
    let model = QuadraticCostModel::new(&p, config.mode);
    let grid = default_weight_grid(&model, p.n_steps, weights.unwrap_or(config.front_grid_size))?;
    let front = pareto_front(&model, p.n_steps, (p.q0, p.q0), &grid)?;
    ensure_dir(&c.out)?;
    let path = c.out.join("front.csv");
    let rows = write_front_csv(&path, &front)?;
    println!("wrote {} ({rows} points)", path.display());
    Ok(())
}

fn train(c: &Common) -> Result<(), Error> {
    let config = load_config(c)?;
    let trained = train_run(&config, config.run_seed(0))?;
    ensure_dir(&c.out)?;
    for (agent, file) in trained.agents.iter().zip(AGENT_FILES) {
        save_snapshot(&c.out.join(file), &agent.q_main)?;
    }
    write_training_csv(
        &c.out.join(TRAINING_CSV),
        std::slice::from_ref(&trained.log),
    )?;
    std::fs::write(c.out.join("config.json"), echo_config(&config) + "\n").map_err(|source| {
        Error::Io {
            path: c.out.join("config.json"),
            source,
        }
    })?;
    if let Some(last) = trained.log.entries.last() {
        println!(
            "trained {} iterations; last window mean IS {:.4} {:.4}, epsilon {:.4}",
            config.train_iters, last.mean_is.0, last.mean_is.1, last.epsilon
        );
    }
    println!("snapshots written to {}", c.out.display());
    Ok(())
}

fn test(c: &Common, weights: Option<&Path>) -> Result<(), Error> {
    let config = load_config(c)?;
    let dir = weights.unwrap_or(&c.out);
    let market = config.test_market();
    let mut agents = Vec::with_capacity(2);
    for file in AGENT_FILES {
        let net = load_snapshot(&dir.join(file))?;
        agents.push(Agent::with_net(&config.ddql, &market, net)?);
    }
    let agents: [Agent; 2] = agents
        .try_into()
        .map_err(|_| Error::Sequence("two agents"))?;
    let refs = References::compute(&config)?;
    let run = test_run(&agents, &config, &refs, 0, config.run_seed(0))?;
    let report = ScenarioReport::new(&config, refs, vec![run], Vec::new());
    write_bundle(&report, &c.out)?;
    summarize(&report);
    Ok(())
}

fn summarize(report: &ScenarioReport) {
    let refs = &report.refs;
    println!("{}", report.label);
    println!("  Nash IS   {:.4} {:.4}", refs.nash_is.0, refs.nash_is.1);
    println!(
        "  Pareto IS {:.4} {:.4}",
        refs.pareto_is.0, refs.pareto_is.1
    );
    println!(
        "  random    {:.4} {:.4}",
        refs.random_baseline_is.0, refs.random_baseline_is.1
    );
    for run in &report.runs {
        println!(
            "  run {:>2}: centroid {:.4} {:.4} joint {:.4} -> {}",
            run.run_id,
            run.centroid.0,
            run.centroid.1,
            run.centroid.0 + run.centroid.1,
            run.region
        );
    }
    let counts: Vec<String> = report
        .region_counts
        .iter()
        .map(|(r, n)| format!("{r}={n}"))
        .collect();
    println!("  regions: {}", counts.join(" "));
}

fn scenario(c: &Common, which: Option<ScenarioArg>) -> Result<(), Error> {
    let mut config = load_config(c)?;
    if let Some(s) = which {
        let s = Scenario::from(s);
        config.scenario = s;
        config.sigma_train = s.sigma();
        config.sigma_test = s.sigma();
    }
    let report = run_scenario(&config)?;
    write_bundle(&report, &c.out)?;
    summarize(&report);
    println!("bundle written to {}", c.out.display());
    Ok(())
}

fn misspec(c: &Common, sigma_train: Option<f64>, sigma_test: Option<f64>) -> Result<(), Error> {
    let base = load_config(c)?;
    let (a, b) = if base.is_misspecified() {
        (base.sigma_train, base.sigma_test)
    } else {
        (Scenario::Zero.sigma(), Scenario::Large.sigma())
    };
    let (a, b) = (sigma_train.unwrap_or(a), sigma_test.unwrap_or(b));
    for (name, (train, test)) in [("forward", (a, b)), ("switched", (b, a))] {
        let config = ExperimentConfig {
            sigma_train: train,
            sigma_test: test,
            ..base.clone()
        };
        config.validate()?;
        let report = run_misspecified(&config)?;
        let dir = c.out.join(name);
        write_bundle(&report, &dir)?;
        summarize(&report);
        println!("bundle written to {}", dir.display());
    }
    Ok(())
}

fn report(c: &Common) -> Result<(), Error> {
    let data = read_bundle(&c.out)?;
    render_scatter(&data, &c.out.join("scatter.svg"))?;
    render_strategies(&data, &c.out.join("strategies.svg"))?;
    println!("figures written to {}", c.out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Analytics(c) => analytics(&c),
        Command::Front { common, weights } => front(&common, weights),
        Command::Train(c) => train(&c),
        Command::Test { common, weights } => test(&common, weights.as_deref()),
        Command::Scenario {
            common,
            scenario: s,
        } => scenario(&common, s),
        Command::Misspec {
            common,
            sigma_train,
            sigma_test,
        } => misspec(&common, sigma_train, sigma_test),
        Command::Report(c) => report(&c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
