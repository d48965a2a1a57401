//! `rave`: run simulated sessions, replay traces and check policies.
//!
//! Exit codes: 0 success, 1 runtime error (I/O, replay divergence), 2 validation
//! failure (bad scenario, config or policy). Every failure prints a prose line
//! and a JSON line `{"error":{"code":..,"message":..}}` on stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use crossbeam_channel::unbounded;

use rave_core::behavior::BehaviorCatalog;
use rave_core::config::Config;
use rave_core::dm::{check_policy_coverage, DmError, PolicyTable, DEFAULT_POLICY_TOML};
use rave_core::sim::{
    render_timeline, replay, ClockMode, RunOptions, Scenario, ScriptedSource, Session, SessionSetup, SessionTrace,
    SimError, SHIPPED_SCENARIOS,
};
use rave_gateway::Gateway;

#[derive(Parser)]
#[command(name = "rave", version, about = "Multiparty infant-agent dialogue sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session and write its trace.
    Run(RunArgs),
    /// Check that a policy covers every perceptual input combination.
    CheckPolicy {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Re-run a trace and compare the regenerated commands.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Print the timeline, one event per line.
        #[arg(long)]
        render: bool,
        /// Replay under a different config instead of the recorded one.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// List or print the bundled scenarios.
    Scenarios {
        /// Print this scenario's TOML.
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or `builtin:<name>` for a bundled one.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    trace: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "realtime")]
    fast: bool,
    #[arg(long)]
    realtime: bool,
    /// Realtime speed factor.
    #[arg(long, default_value_t = 1.0, requires = "realtime")]
    speed: f64,
    /// Serve the observer gateway on this port.
    #[arg(long)]
    gateway_port: Option<u16>,
}

struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: 2, code, message: message.into() }
    }

    fn runtime(code: &'static str, message: impl Into<String>) -> Self {
        Self { exit: 1, code, message: message.into() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::InvalidScenario(_) => "InvalidScenario",
            SimError::InvalidConfig(_) => "InvalidConfig",
            SimError::PolicyIncomplete(_) => "PolicyIncomplete",
            SimError::Dm(DmError::PolicyParse(_)) => "PolicyParse",
            SimError::InvalidTrace(_) => "InvalidTrace",
            SimError::Io(_) => return Self::runtime("Io", e.to_string()),
            SimError::Bus(_) | SimError::Dm(_) => return Self::runtime("Runtime", e.to_string()),
        };
        Self::validation(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        let message = format!("{}: {e}", path.display());
        if e.kind() == std::io::ErrorKind::NotFound {
            Failure::validation("MissingFile", message)
        } else {
            Failure::runtime("Io", message)
        }
    })
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    let base = match path {
        Some(p) => Config::from_toml(&read(p)?)
            .map_err(|e| Failure::validation("InvalidConfig", format!("{}: {e}", p.display())))?,
        None => Config::default(),
    };
    let vars = std::env::vars().filter(|(k, _)| k.starts_with("RAVE_") && k != "RAVE_LOG");
    base.with_env_overrides(vars).map_err(|e| Failure::validation("InvalidConfig", e.to_string()))
}

fn load_policy(path: Option<&Path>) -> Result<String, Failure> {
    path.map_or_else(|| Ok(DEFAULT_POLICY_TOML.to_string()), read)
}

fn load_scenario(source: &str) -> Result<Scenario, Failure> {
    let text = match source.strip_prefix("builtin:") {
        Some(name) => SHIPPED_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| Failure::validation("InvalidScenario", format!("no bundled scenario `{name}`")))?,
        None => read(Path::new(source))?,
    };
    let scenario = Scenario::from_toml(&text).map_err(|e| Failure::validation("InvalidScenario", format!("{source}: {e}")))?;
    Ok(scenario)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let config = load_config(args.config.as_deref())?;
    let policy = load_policy(args.policy.as_deref())?;
    let setup = SessionSetup::from_scenario(&scenario, &config, &policy);
    let source = ScriptedSource::new(&scenario, &config)?;
    let session = Session::new(setup, Box::new(source))?;

    let mode = if args.realtime { ClockMode::Realtime { speed: args.speed } } else { ClockMode::Fast };
    let mut options = RunOptions { mode, operator: None };
    let gateway = match args.gateway_port {
        Some(port) => {
            let (tx, rx) = unbounded();
            options.operator = Some(rx);
            let gw = Gateway::serve(&format!("127.0.0.1:{port}"), &session.bus(), tx)
                .map_err(|e| Failure::runtime("Gateway", e.to_string()))?;
            eprintln!("gateway: ws://{}", gw.local_addr());
            Some(gw)
        }
        None => None,
    };

    let started = Instant::now();
    let outcome = session.run(options)?;
    let elapsed = started.elapsed();
    if let Some(gw) = gateway {
        gw.shutdown();
    }
    outcome.trace.write(&args.trace)?;

    let s = &outcome.summary;
    println!("scenario {} (seed {}), {} records in {:.3}s", scenario.name, scenario.seed, outcome.trace.records.len(), elapsed.as_secs_f64());
    println!(
        "episodes: Familiarization={} NurseryRhyme={} Soothing={} AttentionGetting={}",
        s.familiarization, s.nursery_rhyme, s.soothing, s.attention_getting
    );
    println!(
        "interrupts handled={} recoveries={} commands={} rejected={}",
        s.interrupts, s.recoveries, s.commands, outcome.rejected_commands
    );
    println!("trace {} sha256 {}", args.trace.display(), outcome.trace.hash());
    Ok(())
}

fn check_policy(path: Option<&Path>) -> Result<(), Failure> {
    let text = load_policy(path)?;
    let behaviors = BehaviorCatalog::default();
    let started = Instant::now();
    let policy = PolicyTable::from_toml(&text, &behaviors).map_err(|e| Failure::validation("PolicyParse", e.to_string()))?;
    let report = check_policy_coverage(&policy, &behaviors);
    let elapsed = started.elapsed();
    println!(
        "checked {} combinations ({} baseline + {} absent): {} covered, {} uncovered in {:.1} ms",
        report.checked(),
        report.baseline,
        report.checked() - report.baseline,
        report.covered(),
        report.checked() - report.covered(),
        elapsed.as_secs_f64() * 1000.0
    );
    let mut per_aoi = std::collections::BTreeMap::<String, (usize, usize)>::new();
    for r in &report.rows {
        let e = per_aoi.entry(r.aoi.to_string()).or_default();
        e.0 += 1;
        e.1 += usize::from(r.covered);
    }
    for (aoi, (n, ok)) in per_aoi {
        println!("  {aoi:<10} {ok}/{n}");
    }
    let uncovered: Vec<_> = report.uncovered().collect();
    for r in &uncovered {
        println!("  uncovered: {} {} {}", r.aoi, r.readiness, r.behavior.as_deref().unwrap_or("absent"));
    }
    if report.is_total() {
        Ok(())
    } else {
        Err(Failure::validation("PolicyIncomplete", format!("{} combination(s) uncovered", uncovered.len())))
    }
}

fn replay_cmd(path: &Path, render: bool, config: Option<&Path>) -> Result<(), Failure> {
    let trace = SessionTrace::read(path)?;
    let config = config.map(|p| load_config(Some(p))).transpose()?;
    if render {
        let mut out = std::io::stdout().lock();
        if let Err(e) = out.write_all(render_timeline(&trace).as_bytes()).and_then(|_| out.flush()) {
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                return Err(Failure::runtime("Io", e.to_string()));
            }
        }
    }
    let report = replay(&trace, config.as_ref())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    // With --render, stdout carries only the timeline.
    let mut status: Box<dyn Write> = if render { Box::new(std::io::stderr()) } else { Box::new(std::io::stdout()) };
    let _ = writeln!(status, "compared {} commands", report.commands_compared);
    if let Some(d) = &report.divergence {
        return Err(Failure::runtime(
            "DivergenceAt",
            format!(
                "record {}: expected {}, got {}",
                d.record_index,
                d.expected.as_deref().unwrap_or("<end>"),
                d.got.as_deref().unwrap_or("<end>")
            ),
        ));
    }
    if !report.digest_valid {
        return Err(Failure::runtime("HashMismatch", "trace digest does not match its contents"));
    }
    let _ = writeln!(status, "replay matches");
    Ok(())
}

fn scenarios(name: Option<&str>) -> Result<(), Failure> {
    match name {
        None => {
            for (n, text) in SHIPPED_SCENARIOS {
                let s = Scenario::from_toml(text)?;
                println!("{n:<20} {:>5.0}s {:?}", s.duration_s, s.condition);
            }
            Ok(())
        }
        Some(n) => {
            let (_, text) = SHIPPED_SCENARIOS
                .iter()
                .find(|(k, _)| *k == n)
                .ok_or_else(|| Failure::validation("InvalidScenario", format!("no bundled scenario `{n}`")))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAVE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::CheckPolicy { policy } => check_policy(policy.as_deref()),
        Command::Replay { trace, render, config } => replay_cmd(&trace, render, config.as_deref()),
        Command::Scenarios { name } => scenarios(name.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            eprintln!("{}", serde_json::json!({ "error": { "code": f.code, "message": f.message } }));
            ExitCode::from(f.exit)
        }
    }
}
