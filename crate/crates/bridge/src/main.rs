use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eeroot::config::Config;
use eeroot::eval::{run_system_suite, run_tracking_suite, BackendKind, Category, TrackingOptions};
use eeroot_bridge::commands::{self, parse_pose, CliError};
use eeroot_bridge::server::{serve, ServerOptions};

#[derive(Parser)]
#[command(name = "eeroot", version, about = "Compliant EE-root humanoid simulator")]
struct Cli {
    /// Configuration file (JSON); defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Step a scenario and record its state stream.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ticks: u64,
        /// Line-delimited JSON of `state` messages.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Line-delimited `{"tick": N, "command": {...}}` to replay.
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    #[command(subcommand)]
    Eval(Eval),
    /// Plan a base path on a map file.
    Plan {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: [f64; 3],
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        goal: [f64; 3],
    },
    /// Run the tick loop behind a websocket at /ws.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Tick only on demand (skills, instructions, cmd.step) instead of at 50 Hz.
        #[arg(long)]
        lockstep: bool,
    },
}

#[derive(Subcommand)]
enum Eval {
    /// Tracking error and jerk over random reference trajectories.
    Tracking {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        forces: bool,
        #[arg(long)]
        no_low_pass: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Instruction-following trials for one task category.
    System {
        #[arg(long)]
        category: Category,
        /// Defaults to the category's usual count.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendName {
    Scripted,
    Llm,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendName,
    #[arg(long)]
    llm_endpoint: Option<String>,
}

impl BackendArgs {
    fn kind(&self, cfg: &Config) -> BackendKind {
        match self.backend {
            BackendName::Scripted => BackendKind::Scripted,
            BackendName::Llm => {
                let mut llm = cfg.llm.clone();
                if let Some(e) = &self.llm_endpoint {
                    llm.endpoint = e.clone();
                }
                BackendKind::Llm(llm)
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = commands::load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { scenario, seed, ticks, record, commands: log } => {
            let scene = commands::load_scenario(scenario.as_deref(), seed)?.sample();
            let log = match &log {
                Some(p) => commands::parse_command_log(&commands::read(p)?)?,
                None => Vec::new(),
            };
            let summary = match &record {
                Some(p) => {
                    let file = std::fs::File::create(p).map_err(|e| CliError::io(p, e))?;
                    let mut w = std::io::BufWriter::new(file);
                    commands::simulate(&cfg, scene, ticks, &log, &mut w).map_err(|e| CliError::io(p, e))?
                }
                None => commands::simulate(&cfg, scene, ticks, &log, &mut std::io::sink()).expect("sink never fails"),
            };
            println!("{} ticks, {} states, {} events", summary.ticks, summary.states, summary.events.len());
            for e in &summary.events {
                eprintln!("{}", serde_json::to_string(e).expect("messages serialize"));
            }
        }
        Command::Eval(Eval::Tracking { n, seed, forces, no_low_pass, out }) => {
            let opts = TrackingOptions { n, seed, forces, low_pass: !no_low_pass, ..Default::default() };
            let report = run_tracking_suite(&cfg, &opts);
            print!("{}", report.table());
            println!("joint-limit violations: {}", report.limit_violations);
            if let Some(p) = out {
                commands::write_json(&p, &report)?;
            }
        }
        Command::Eval(Eval::System { category, trials, seed, backend, out }) => {
            let trials = trials.unwrap_or(category.default_trials());
            let report = run_system_suite(&cfg, category, trials, seed, &backend.kind(&cfg));
            print!("{}", report.table());
            if let Some(p) = out {
                commands::write_json(&p, &report)?;
            }
        }
        Command::Plan { map, start, goal } => {
            let grid = commands::load_map(&cfg, &commands::read(&map)?)?;
            let out = commands::plan_route(&cfg, &grid, start, goal)?;
            // a closed pipe (`| head`) is not an error worth reporting
            writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out).expect("paths serialize")).ok();
        }
        Command::Serve { port, host, backend, scenario, seed, lockstep } => {
            let scene = commands::load_scenario(scenario.as_deref(), seed)?.sample();
            let mut opts = ServerOptions::new(cfg.clone(), scene, backend.kind(&cfg));
            opts.lockstep = lockstep;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Invalid(e.to_string()))?;
            rt.block_on(async move {
                let addr = format!("{host}:{port}");
                let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::Invalid(format!("{addr}: {e}")))?;
                let local = listener.local_addr().map_err(|e| CliError::Invalid(e.to_string()))?;
                println!("listening on ws://{local}/ws");
                std::io::stdout().flush().ok();
                serve(listener, opts).await.map_err(|e| CliError::Invalid(e.to_string()))
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
