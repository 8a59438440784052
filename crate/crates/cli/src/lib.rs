//! The `amfs` command line: validate, run, compare, plan and serve scenarios.

use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use amfs_core::hmi::{Gateway, Server};
use amfs_core::sim::batch::compare;
use amfs_core::sim::{load_scenario, plan_routes, run_scenario, ScenarioConfig, ScenarioError, SimError, Strategy};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "amfs", version, about = "Agent-based control and simulation of modular material flow systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario, its layout and descriptors without running it.
    Validate(ScenarioArg),
    /// Run a scenario to its horizon and report metrics.
    Run(RunArgs),
    /// Run a scenario under several strategies and seeds and compare throughput.
    Compare(CompareArgs),
    /// Negotiate routes only and print the plan. Fails if a relation cannot be routed.
    Plan(PlanArgs),
    /// Serve the operator gateway for a live simulation.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArg {
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Directory for events.jsonl, metrics.json and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Comma-separated; the ratio is first over second.
    #[arg(long, value_delimiter = ',', default_value = "ssr,baseline_occupancy")]
    pub strategy: Vec<Strategy>,
    /// Comma-separated seeds or inclusive ranges such as `1-10`. Defaults to the scenario seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// File to write the comparison to as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// File to write the plan to as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub listen: String,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Start with the clock stopped; advance with step commands.
    #[arg(long)]
    pub paused: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// The inputs were readable but violate a model rule.
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) | CliError::Usage(_) => 2,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Scenario(s) => s.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses `1,3,5-8` into a seed list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("invalid --seeds `{text}`: expected numbers or ranges like 1-10"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn load(path: &Path, seed: Option<u64>, strategy: Option<Strategy>) -> Result<ScenarioConfig, CliError> {
    let mut config = load_scenario(path)?;
    if let Some(s) = seed {
        config = config.with_seed(s);
    }
    if let Some(s) = strategy {
        config = config.with_strategy(s);
    }
    Ok(config)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Runs one subcommand, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let w = |out: &mut dyn Write, text: &str| out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()));
    match cli.command {
        Command::Validate(a) => {
            let config = load(&a.scenario, None, None)?;
            let topology = amfs_core::topology::Topology::from_placements(
                &config.modules.iter().map(|m| (m.descriptor.clone(), m.placement.clone())).collect::<Vec<_>>(),
                &config.settings.tolerance,
            )
            .map_err(|e| CliError::Domain(format!("layout: {e}")))?;
            w(
                out,
                &format!(
                    "ok: scenario `{}` with {} modules, {} connections, {} relations, {} scripted events\n",
                    config.name,
                    config.modules.len(),
                    topology.connections().len(),
                    config.relations.len(),
                    config.script.len()
                ),
            )
        }
        Command::Run(a) => {
            let config = load(&a.scenario, a.seed, a.strategy)?;
            let output = run_scenario(&config)?;
            w(out, &format!("scenario {} seed {} strategy {}\n", config.name, config.seed, config.strategy))?;
            w(out, &output.metrics.to_table())?;
            let s = &output.summary;
            w(
                out,
                &format!(
                    "released {} delivered {} in flight {} waiting {} diagnostics {} failovers {}\n",
                    s.released,
                    s.delivered,
                    s.in_flight,
                    s.waiting,
                    s.diagnostics,
                    s.failovers.len()
                ),
            )?;
            if let Some(dir) = a.out {
                fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                let events = dir.join("events.jsonl");
                let file = fs::File::create(&events).map_err(io_err(&events))?;
                output.log.write_jsonl(io::BufWriter::new(file)).map_err(io_err(&events))?;
                write_json(&dir.join("metrics.json"), &output.metrics)?;
                write_json(&dir.join("summary.json"), &output.summary)?;
                write_json(&dir.join("plan.json"), &output.plan)?;
            }
            Ok(())
        }
        Command::Compare(a) => {
            if a.strategy.is_empty() {
                return Err(CliError::Usage("--strategy needs at least one strategy".into()));
            }
            let config = load(&a.scenario, None, None)?;
            let seeds = match &a.seeds {
                Some(text) => parse_seeds(text)?,
                None => vec![config.seed],
            };
            let comparison = compare(&config, &a.strategy, &seeds)?;
            w(out, &comparison.to_table())?;
            if let Some(path) = a.out {
                write_json(&path, &comparison)?;
            }
            Ok(())
        }
        Command::Plan(a) => {
            let config = load(&a.scenario, None, None)?;
            let plan = plan_routes(&config)?;
            w(out, &plan.to_text())?;
            if let Some(path) = a.out {
                write_json(&path, &plan)?;
            }
            if plan.is_feasible() {
                Ok(())
            } else {
                let names: Vec<_> = plan.unrouted.iter().map(|u| u.relation_id.to_string()).collect();
                Err(CliError::Domain(format!("no feasible route for: {}", names.join(", "))))
            }
        }
        Command::Serve(a) => {
            if !(a.rate.is_finite() && a.rate > 0.0) {
                return Err(CliError::Usage("--rate must be a positive number".into()));
            }
            let config = load(&a.scenario, a.seed, a.strategy)?;
            let gateway = Gateway::new(&config, a.paused, a.rate)?;
            let listener = TcpListener::bind(&a.listen).map_err(|e| CliError::Io(format!("{}: {e}", a.listen)))?;
            let server = Server::start(listener, gateway).map_err(|e| CliError::Io(e.to_string()))?;
            w(
                out,
                &format!(
                    "serving `{}` on {} ({})\n",
                    config.name,
                    server.local_addr(),
                    if a.paused { "paused" } else { "running" }
                ),
            )?;
            out.flush().map_err(|e| CliError::Io(e.to_string()))?;
            server.wait();
            Ok(())
        }
    }
}
