//! Command implementations behind the `complipay` binary.

use std::fmt::Write as _;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde_json::Value;
use thiserror::Error;

use complipay_core::agents::{FinalState, OrchestrationError, Orchestrator, RunReport, Scenario, ScenarioError, Transcript};
use complipay_core::canonical::{to_0x_hex, to_canonical_json_pretty};
use complipay_core::compliance::attestation::verify_chain;
use complipay_core::gateway::ServiceSnapshot;
use complipay_server::{AppState, Clock};

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

/// Stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    /// No quiescence, or a scenario expectation did not hold.
    Unexpected = 1,
    /// Bad config, unreadable input, or the listen address is taken.
    Config = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Scenario,
    Serve,
    Inspect,
}

#[derive(Debug, Parser)]
#[command(name = "complipay", version, about = "Compliance-gated agent payments: scenarios, gateway, inspection")]
pub struct Cli {
    #[arg(long, value_enum, default_value = "scenario")]
    pub mode: Mode,
    /// Scenario JSON file.
    #[arg(long, env = "COMPLIPAY_CONFIG")]
    pub scenario: Option<PathBuf>,
    /// Address for serve mode, e.g. 127.0.0.1:8080.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for transcript.jsonl and snapshot.json.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Snapshot file for inspect mode.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Inspect query: balances | conservation | locks | chain | attestations <tx_id>.
    #[arg(long)]
    pub query: Option<String>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Snapshot { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

pub fn write_outputs(out: &Path, transcript: &Transcript, snapshot: &impl serde::Serialize) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let t = out.join(TRANSCRIPT_FILE);
    fs::write(&t, transcript.to_jsonl()).map_err(io_err(&t))?;
    let s = out.join(SNAPSHOT_FILE);
    let mut body = to_canonical_json_pretty(snapshot).expect("snapshot serializes");
    body.push('\n');
    fs::write(&s, body).map_err(io_err(&s))?;
    Ok(())
}

/// Outcome of a scenario run, before exit-code mapping.
pub struct ScenarioRun {
    pub report: RunReport,
    pub problems: Vec<String>,
}

impl ScenarioRun {
    pub fn exit(&self) -> Exit {
        if self.report.quiescent && self.problems.is_empty() {
            Exit::Ok
        } else {
            Exit::Unexpected
        }
    }
}

/// Runs a scenario in-process and writes its transcript and snapshot.
pub fn run_scenario(path: &Path, seed: Option<u64>, out: &Path) -> Result<ScenarioRun, CliError> {
    let scenario = Scenario::load(path)?;
    let seed = seed.unwrap_or(scenario.seed);
    let orchestrator = Orchestrator::from_scenario(&scenario, seed)?;
    let (report, mut problems) = match orchestrator.run(scenario.max_rounds) {
        Ok(r) => (r, Vec::new()),
        Err(OrchestrationError::NonQuiescent { rounds, report }) => {
            (*report, vec![format!("no quiescence within {rounds} rounds")])
        }
    };
    if let Some(expect) = &scenario.expect {
        problems.extend(expect.check(&report));
    }
    write_outputs(out, &report.transcript, &report.final_state)?;
    Ok(ScenarioRun { report, problems })
}

pub fn summarize(state: &FinalState) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario {} seed {}: {} after {} rounds",
        state.scenario,
        state.seed,
        if state.quiescent { "quiescent" } else { "NOT quiescent" },
        state.rounds
    );
    for (id, bal) in &state.balances {
        let _ = writeln!(s, "  {:<16} {bal}", id.as_str());
    }
    for lock in state.service.ledger.locks.values() {
        let _ = writeln!(s, "  escrow {} {} {}", lock.lock_id, lock.amount, lock.state);
    }
    let _ = writeln!(
        s,
        "  conservation: {}",
        if state.conservation.conserved { "ok" } else { "VIOLATED" }
    );
    s
}

/// Accepts either a scenario final state or a bare service snapshot.
pub fn load_service_snapshot(path: &Path) -> Result<ServiceSnapshot, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |message: String| CliError::Snapshot { path: path.display().to_string(), message };
    let mut value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let service = match value.get_mut("service") {
        Some(v) => v.take(),
        None => value,
    };
    serde_json::from_value(service).map_err(|e| bad(e.to_string()))
}

/// Answers an inspect query; `Ok((report, healthy))`.
pub fn inspect(snapshot: &ServiceSnapshot, query: &str) -> Result<(String, bool), CliError> {
    let words: Vec<&str> = query.split_whitespace().collect();
    let mut out = String::new();
    let ledger = &snapshot.ledger;
    match words.as_slice() {
        ["balances"] => {
            for a in ledger.accounts.values() {
                let _ = writeln!(out, "{:<16} {}", a.id.as_str(), a.balance);
            }
            let _ = writeln!(out, "{:<16} {}", "(escrow)", ledger.escrow_pool);
            Ok((out, true))
        }
        ["conservation"] => {
            let sum = ledger.sum_of_balances();
            let ok = ledger.is_conserved();
            let _ = writeln!(out, "total_supply    {}", ledger.total_supply);
            let _ = writeln!(out, "sum_of_balances {}", sum.map_or("overflow".into(), |b| b.to_string()));
            let _ = writeln!(out, "escrow_pool     {}", ledger.escrow_pool);
            let _ = writeln!(out, "{}", if ok { "conserved" } else { "VIOLATED" });
            Ok((out, ok))
        }
        ["locks"] => {
            for l in ledger.locks.values() {
                let _ = writeln!(
                    out,
                    "{} {} {}->{} {} condition={} releaser={}",
                    l.lock_id, l.tx_id, l.payer, l.payee, l.amount, l.condition_id, l.releaser
                );
                let _ = writeln!(out, "  state {}", l.state);
            }
            Ok((out, true))
        }
        ["chain"] => match verify_chain(&snapshot.compliance.attestations) {
            Ok(()) => {
                let _ = writeln!(out, "{} attestations, chain intact", snapshot.compliance.attestations.len());
                Ok((out, true))
            }
            Err(e) => {
                let _ = writeln!(out, "chain broken: {e}");
                Ok((out, false))
            }
        },
        ["attestations", tx] => {
            let records: Vec<_> = snapshot
                .compliance
                .attestations
                .iter()
                .filter(|a| a.tx_id.as_str() == *tx || a.tx_id.as_str().starts_with(&format!("{tx}.")))
                .collect();
            if records.is_empty() {
                return Err(CliError::Usage(format!("no attestations for {tx}")));
            }
            for a in records {
                let _ = writeln!(out, "{} round {} {} at seq {}", a.tx_id, a.round, a.aggregate.overall, a.recorded_at);
                for p in &a.aggregate.parts {
                    let _ = writeln!(out, "  {:<16} {:<8} {}", p.policy_id, p.value.to_string(), p.reason);
                }
                let _ = writeln!(out, "  hash {}", to_0x_hex(&a.hash));
            }
            Ok((out, true))
        }
        _ => Err(CliError::Usage(format!(
            "unknown query {query:?}; expected balances | conservation | locks | chain | attestations <tx_id>"
        ))),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn cmd_serve(path: &Path, seed: Option<u64>, listen: SocketAddr, out: &Path) -> Result<Exit, CliError> {
    let scenario = Scenario::load(path)?;
    let seed = seed.unwrap_or(scenario.seed);
    let state = AppState::from_scenario(&scenario, seed, Clock::System)?;
    let runtime = tokio::runtime::Runtime::new().map_err(io_err(path))?;
    runtime.block_on(async {
        let listener = match tokio::net::TcpListener::bind(listen).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("error: cannot listen on {listen}: {e}");
                return Ok(Exit::Config);
            }
        };
        let addr = listener.local_addr().map_err(io_err(path))?;
        println!("listening on http://{addr}");
        tracing::info!(%addr, scenario = %scenario.name, "gateway up");
        complipay_server::serve(listener, state.clone(), shutdown_signal())
            .await
            .map_err(io_err(path))?;
        write_outputs(out, &state.transcript(), &state.snapshot())?;
        println!("transcript and snapshot written to {}", out.display());
        Ok(Exit::Ok)
    })
}

/// Entry point shared by the binary and tests.
pub fn run(cli: Cli) -> Exit {
    init_logging(cli.verbose);
    let result = match cli.mode {
        Mode::Scenario => match &cli.scenario {
            None => Err(CliError::Usage("scenario mode needs --scenario or COMPLIPAY_CONFIG".into())),
            Some(path) => run_scenario(path, cli.seed, &cli.out).map(|run| {
                print!("{}", summarize(&run.report.final_state));
                for p in &run.problems {
                    println!("  unexpected: {p}");
                }
                println!("  wrote {} and {}", cli.out.join(TRANSCRIPT_FILE).display(), cli.out.join(SNAPSHOT_FILE).display());
                run.exit()
            }),
        },
        Mode::Serve => match (&cli.scenario, cli.listen) {
            (Some(path), Some(listen)) => cmd_serve(path, cli.seed, listen, &cli.out),
            (None, _) => Err(CliError::Usage("serve mode needs --scenario or COMPLIPAY_CONFIG".into())),
            (_, None) => Err(CliError::Usage("serve mode needs --listen".into())),
        },
        Mode::Inspect => {
            let path = cli.snapshot.clone().unwrap_or_else(|| cli.out.join(SNAPSHOT_FILE));
            let query = cli.query.as_deref().unwrap_or("balances");
            load_service_snapshot(&path).and_then(|snap| inspect(&snap, query)).map(|(report, healthy)| {
                print!("{report}");
                if healthy {
                    Exit::Ok
                } else {
                    Exit::Unexpected
                }
            })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            Exit::Config
        }
    }
}
