use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use cohort_core::adapters::EndpointConfig;
use cohort_core::runtime::scenario::{run_loaded, LOG_DIR_ENV};
use cohort_core::runtime::{bench, fit_linear, replay_file, BackendConfig, RunOptions};
use cohort_core::Speaker;
use cohort_cli::load_scenario;
use cohort_cli::server::{serve, AppState};

const EXIT_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "cohort", version, about = "Multi-agent conversational robot runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Scripted,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headlessly and check its expectations.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Log path (default: $COHORT_LOG_DIR/<name>-<seed>.jsonl).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Serve the HTTP API, using the scenario's config as the session template.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "demo_fig3")]
        scenario: String,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Completion endpoint base URL, for the http backend.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "default")]
        model: String,
        /// Environment variable holding the bearer token.
        #[arg(long)]
        auth_env: Option<String>,
        #[arg(long)]
        time_dilation: Option<f64>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Rebuild the final state from a log, checking it for consistency.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Measure per-turn arbitration overhead against roster size.
    Bench {
        /// Comma separated roster sizes.
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16, 32, 64])]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        turns: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { scenario, seed, log } => run(&scenario, seed, log),
        Command::Serve {
            port,
            scenario,
            backend,
            endpoint,
            model,
            auth_env,
            time_dilation,
            host,
        } => {
            let mut s = match load_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => return input_error(e),
            };
            if let Some(d) = time_dilation {
                s.config.time_dilation = d;
            }
            if let Some(BackendKind::Http) = backend {
                let Some(url) = endpoint else {
                    eprintln!("error: --backend http needs --endpoint");
                    return ExitCode::from(EXIT_INPUT);
                };
                let mut ep = EndpointConfig::new(url, model);
                ep.auth_token_env_var = auth_env;
                s.config.backend = BackendConfig::Http { endpoint: ep };
            } else if let Some(BackendKind::Scripted) = backend {
                if !matches!(s.config.backend, BackendConfig::Scripted { .. }) {
                    eprintln!("error: scenario {} has no scripted backend", s.name);
                    return ExitCode::from(EXIT_INPUT);
                }
            }
            if let Err(e) = s.config.validate().and_then(|_| s.config.backends().map(|_| ())) {
                return input_error(e);
            }
            let addr: SocketAddr = match format!("{host}:{port}").parse() {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: bad address: {e}");
                    return ExitCode::from(EXIT_INPUT);
                }
            };
            let log_dir = std::env::var_os(LOG_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| "logs".into());
            let paced = s.config.time_dilation > 0.0;
            let state = Arc::new(AppState::new(s.config, Some(log_dir), paced));
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            let result = rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                serve(listener, state).await
            });
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Replay { log } => match replay_file(&log) {
            Ok(snap) => {
                for u in snap.context.transcript() {
                    let who = match &u.speaker {
                        Speaker::Human => "human".to_string(),
                        Speaker::Agent(a) => a.to_string(),
                    };
                    println!("[{:>7} ms] {who}: {}", u.logical_time_ms, u.text);
                }
                for (id, body) in &snap.world.agents {
                    println!(
                        "{id}: x={:.3} y={:.3} heading={:.1} posture={} hand={}",
                        body.pose.x, body.pose.y, body.pose.heading_deg, body.posture, body.hand
                    );
                }
                println!("ok: replay consistent, clock {} ms", snap.world.clock_ms);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INPUT)
            }
        },
        Command::Bench {
            agents,
            turns,
            seed,
            csv,
        } => match bench(&agents, turns, seed) {
            Ok(rows) => {
                println!("{:>6} {:>6} {:>10} {:>10} {:>9}", "agents", "turns", "mean_ms", "p95_ms", "selected");
                for r in &rows {
                    println!(
                        "{:>6} {:>6} {:>10.4} {:>10.4} {:>9.2}",
                        r.agents, r.turns, r.mean_ms, r.p95_ms, r.mean_selected
                    );
                }
                if rows.len() >= 2 {
                    let fit = fit_linear(&rows.iter().map(|r| (r.agents as f64, r.mean_ms)).collect::<Vec<_>>());
                    println!(
                        "fit: mean_ms = {:.5} * agents + {:.5} (r2 {:.4})",
                        fit.slope, fit.intercept, fit.r2
                    );
                }
                if let Some(path) = csv {
                    if let Err(e) = std::fs::write(&path, cohort_core::runtime::bench::rows_to_csv(&rows)) {
                        eprintln!("error: writing {}: {e}", path.display());
                        return ExitCode::FAILURE;
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => input_error(e),
        },
    }
}

fn run(scenario: &str, seed: Option<u64>, log: Option<PathBuf>) -> ExitCode {
    let s = match load_scenario(scenario) {
        Ok(s) => s,
        Err(e) => return input_error(e),
    };
    let opts = RunOptions {
        seed,
        log_path: log,
        no_log_file: false,
    };
    let report = match run_loaded(s, &opts) {
        Ok(r) => r,
        Err(e) => return input_error(e),
    };
    for (i, t) in report.turns.iter().enumerate() {
        let who: Vec<&str> = t.selected.iter().map(|a| a.as_str()).collect();
        println!("turn {}: \"{}\" -> [{}]", i + 1, t.trigger.text, who.join(", "));
        for a in &t.selected {
            for st in t.statuses.get(a).into_iter().flatten() {
                println!("  {a} @{}ms: {}", st.start_ms, st.detail);
            }
        }
    }
    if let Some(p) = &report.log_path {
        println!("log: {}", p.display());
    }
    if report.passed {
        println!("PASS {}", report.name);
        ExitCode::SUCCESS
    } else {
        for f in &report.failures {
            println!("  {f}");
        }
        println!("FAIL {}", report.name);
        ExitCode::from(EXIT_FAILED)
    }
}

fn input_error(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_INPUT)
}
