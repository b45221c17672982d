use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gloss_control::{AppState, Config, DEFAULT_TAP_CAPACITY, DEFAULT_TTL};
use gloss_core::clock;
use gloss_core::services::{self, load_maps_dir};
use gloss_core::store::{IngestOutcome, Store, Watcher};
use gloss_core::transport::{
    build_mobile_assembly, build_server_assembly, load_trace, open_gateway, GatewayAddress, GpsMode, LoopbackGateway,
    TcpGatewayServer, TraceError, UserId,
};
use gloss_core::LatLongCoordinate;
use gloss_sim::{emit_metrics, load_topology, load_workload, MetricsFormat, SimError};

const DEFAULT_SERVER_NUMBER: &str = "+447700900000";

#[derive(Parser)]
#[command(name = "gloss", version, about = "Location pipelines over SMS, with a control plane and overlay simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataDir {
    /// Data directory (knowledge tables, maps, inbox).
    #[arg(long, env = "GLOSS_DATA_DIR")]
    data_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP control plane.
    Serve {
        #[command(flatten)]
        data: DataDir,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
        #[arg(long, default_value_t = DEFAULT_TAP_CAPACITY)]
        tap_capacity: usize,
    },
    /// Replay a GPS trace through the mobile assembly.
    RunMobile {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "loopback")]
        gateway: String,
        #[arg(long)]
        user: String,
        #[arg(long, default_value_t = 1000)]
        interval: u64,
        /// Number the server assembly listens on.
        #[arg(long, default_value = DEFAULT_SERVER_NUMBER)]
        server: String,
        /// Pace fixes on the wall clock instead of replaying at once.
        #[arg(long)]
        live: bool,
    },
    /// Receive location SMS and write them into an inbox directory.
    RunServer {
        #[arg(long, default_value = "loopback")]
        gateway: String,
        #[arg(long)]
        inbox: PathBuf,
        #[arg(long, default_value = DEFAULT_SERVER_NUMBER)]
        number: String,
        /// Exit after this many messages have been written.
        #[arg(long)]
        exit_after: Option<u64>,
        /// Exit after this long without a message.
        #[arg(long)]
        idle_exit_ms: Option<u64>,
    },
    /// Host a TCP SMS gateway hub.
    Gateway {
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
    },
    /// Ingest inbox files into the store.
    Ingest {
        /// Data directory whose inbox/ is ingested.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, conflicts_with = "watch", required_unless_present = "watch")]
        once: bool,
        #[arg(long)]
        watch: bool,
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
    },
    /// Query the store; prints JSON.
    Query {
        #[command(flatten)]
        data: DataDir,
        #[command(subcommand)]
        query: Query,
    },
    /// Run the overlay simulator.
    Simulate {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, value_enum)]
        policy: Policy,
        #[arg(long, default_value_t = DEFAULT_TTL)]
        ttl: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        horizon_ms: Option<u64>,
        /// Write JSON metrics to this file.
        #[arg(short = 'o', long = "output", conflicts_with = "csv")]
        output: Option<PathBuf>,
        /// Write CSV metrics to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Query {
    Location {
        user: String,
    },
    Trail {
        user: String,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
    },
    Smarttown {
        #[arg(long, allow_negative_numbers = true)]
        lat: f64,
        #[arg(long, allow_negative_numbers = true)]
        lon: f64,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        category: Option<String>,
    },
    Radar {
        user: String,
        #[arg(long)]
        radius: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Flood,
    Geo,
}

enum Failure {
    Validation(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Io(m) => m,
        }
    }
}

type CliResult = Result<(), Failure>;

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn io(e: impl std::fmt::Display) -> Failure {
    Failure::Io(e.to_string())
}

fn user(s: &str) -> Result<UserId, Failure> {
    UserId::new(s).map_err(invalid)
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult {
    let text = serde_json::to_string_pretty(value).map_err(io)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").and_then(|_| out.flush()).map_err(io)
}

fn store_failure(e: gloss_core::store::StoreError) -> Failure {
    match e {
        gloss_core::store::StoreError::Io(_) => io(e),
        other => invalid(other),
    }
}

fn sim_failure(e: SimError) -> Failure {
    match e {
        SimError::Io(_) => io(e),
        other => invalid(format!("{}: {other}", other.code())),
    }
}

fn gateway(addr: &str, loopback: &Arc<LoopbackGateway>) -> Result<Arc<dyn gloss_core::transport::SmsGateway>, Failure> {
    let address: GatewayAddress = addr.parse().map_err(invalid)?;
    open_gateway(&address, loopback).map_err(io)
}

fn serve(data: DataDir, host: String, port: u16, poll_ms: u64, tap_capacity: usize) -> CliResult {
    let state = AppState::open(Config { data_dir: data.data_dir, tap_capacity }).map_err(store_failure)?;
    let runtime = tokio::runtime::Runtime::new().map_err(io)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await.map_err(io)?;
        let addr = listener.local_addr().map_err(io)?;
        println!("listening on http://{addr}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        gloss_control::serve(state, listener, Duration::from_millis(poll_ms), shutdown).await.map_err(io)
    })
}

fn run_mobile(trace: &Path, gw: &str, user_id: &str, interval: u64, server: &str, live: bool) -> CliResult {
    let fixes = load_trace(trace).map_err(|e| match e {
        TraceError::Io(_) => io(e),
        other => invalid(other),
    })?;
    let loopback = LoopbackGateway::new();
    let gateway = gateway(gw, &loopback)?;
    let mode = if live { GpsMode::Live(clock::system()) } else { GpsMode::Simulated };
    let count = fixes.len();
    let mut a = build_mobile_assembly("mobile", fixes, interval, user(user_id)?, gateway, user(server)?, mode)
        .map_err(invalid)?;
    let sent = Arc::new(AtomicU64::new(0));
    let counter = sent.clone();
    a.set_tap(Box::new(move |t| {
        if t.component == "sms_adapter" {
            counter.fetch_add(1, Ordering::Relaxed);
        }
    }));
    a.start().map_err(io)?;
    let budget = Duration::from_millis(interval.saturating_mul(count as u64 + 1)).max(Duration::from_secs(10));
    let finished = a.run_until_quiescent(if live { budget } else { Duration::from_secs(60) });
    let diagnostics = a.diagnostics().to_vec();
    a.stop().map_err(io)?;
    for d in &diagnostics {
        eprintln!("{}: {}", d.component, d.message);
    }
    if finished.is_none() {
        return Err(io("trace replay timed out"));
    }
    if gw == "loopback" && loopback.queued() > 0 {
        eprintln!("note: loopback is in-process; {} segments were not collected", loopback.queued());
    }
    print_json(&serde_json::json!({
        "fixes": count,
        "messages": sent.load(Ordering::Relaxed),
        "gateway": gw,
    }))
}

fn run_server(gw: &str, inbox: &Path, number: &str, exit_after: Option<u64>, idle_exit_ms: Option<u64>) -> CliResult {
    std::fs::create_dir_all(inbox).map_err(io)?;
    let loopback = LoopbackGateway::new();
    let gateway = gateway(gw, &loopback)?;
    let mut a = build_server_assembly("server", gateway, user(number)?, inbox).map_err(invalid)?;
    let saved = Arc::new(AtomicU64::new(0));
    let counter = saved.clone();
    a.set_tap(Box::new(move |t| {
        if t.component == "sms_device" {
            counter.fetch_add(1, Ordering::Relaxed);
        }
    }));
    a.start().map_err(io)?;
    eprintln!("receiving on {number} via {gw}, writing to {}", inbox.display());
    let mut last_activity = Instant::now();
    loop {
        let report = a.pump();
        if report.emitted > 0 {
            last_activity = Instant::now();
        }
        if exit_after.is_some_and(|n| saved.load(Ordering::Relaxed) >= n) {
            break;
        }
        if idle_exit_ms.is_some_and(|ms| last_activity.elapsed() >= Duration::from_millis(ms)) {
            break;
        }
        if report.emitted == 0 {
            std::thread::sleep(Duration::from_millis(5));
        }
    }
    for d in a.diagnostics() {
        eprintln!("{}: {}", d.component, d.message);
    }
    a.stop().map_err(io)?;
    print_json(&serde_json::json!({ "saved": saved.load(Ordering::Relaxed) }))
}

fn run_gateway(listen: &str) -> CliResult {
    let server = TcpGatewayServer::bind(listen).map_err(io)?;
    let addr = server.local_addr().map_err(io)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "listening on tcp://{addr}").and_then(|_| out.flush()).map_err(io)?;
    drop(out);
    server.serve();
    Ok(())
}

fn ingest(dir: &Path, once: bool, poll_ms: u64) -> CliResult {
    let store = Arc::new(Store::open(dir).map_err(store_failure)?);
    services::install_hearsay_hook(&store);
    if once {
        let reports = store.poll_once().map_err(store_failure)?;
        let mut out = std::io::stdout().lock();
        for r in &reports {
            writeln!(out, "{}", serde_json::to_string(r).map_err(io)?).map_err(io)?;
        }
        let quarantined = reports.iter().filter(|r| r.outcome == IngestOutcome::Quarantined).count();
        eprintln!("{} loaded, {quarantined} quarantined", reports.len() - quarantined);
        return Ok(());
    }
    let _watcher = Watcher::spawn(store, Duration::from_millis(poll_ms));
    eprintln!("watching {}", dir.display());
    loop {
        std::thread::park();
    }
}

fn timestamp(name: &str, v: Option<&str>) -> Result<Option<DateTime<Utc>>, Failure> {
    v.map(|s| {
        DateTime::parse_from_rfc3339(s).map(|t| t.to_utc()).map_err(|e| invalid(format!("--{name} '{s}': {e}")))
    })
    .transpose()
}

fn query(data: DataDir, q: Query) -> CliResult {
    if !data.data_dir.is_dir() {
        return Err(io(format!("data dir {} does not exist", data.data_dir.display())));
    }
    let store = Store::open(&data.data_dir).map_err(store_failure)?;
    let maps = load_maps_dir(&data.data_dir).map_err(store_failure)?;
    let service = |e: services::ServiceError| match e {
        services::ServiceError::Store(s) => store_failure(s),
        other => invalid(other),
    };
    match q {
        Query::Location { user: u } => {
            let u = user(&u)?;
            let located = services::locate_user(&store, &maps, &u)
                .ok_or_else(|| invalid(format!("no known location for {u}")))?;
            print_json(&located)
        }
        Query::Trail { user: u, from, to } => {
            let u = user(&u)?;
            let (from, to) = (timestamp("from", from.as_deref())?, timestamp("to", to.as_deref())?);
            if store.latest_location(&u).is_none() {
                return Err(invalid(format!("no known location for {u}")));
            }
            print_json(&services::render_trail(&store, &maps, &u, from, to).map_err(service)?)
        }
        Query::Smarttown { lat, lon, radius, category } => {
            let p = LatLongCoordinate::new(lat, lon).map_err(invalid)?;
            print_json(&services::smart_town(&store, &p, radius, category.as_deref()).map_err(service)?)
        }
        Query::Radar { user: u, radius } => print_json(&services::radar(&store, &user(&u)?, radius).map_err(service)?),
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    topology: &Path,
    workload: &Path,
    policy: Policy,
    ttl: u32,
    seed: u64,
    horizon_ms: Option<u64>,
    output: Option<PathBuf>,
    csv: Option<PathBuf>,
) -> CliResult {
    let spec = load_topology(topology).map_err(sim_failure)?;
    let messages = load_workload(workload).map_err(sim_failure)?;
    let policy = gloss_control::api::parse_policy(
        match policy {
            Policy::Flood => "flood",
            Policy::Geo => "geo",
        },
        Some(ttl),
    )
    .map_err(sim_failure)?;
    let metrics = gloss_sim::run(&spec, &messages, policy, seed, horizon_ms).map_err(sim_failure)?;
    let write = |path: &Path, format| -> CliResult {
        let text = emit_metrics(&metrics, format).map_err(sim_failure)?;
        std::fs::write(path, text).map_err(|e| io(format!("{}: {e}", path.display())))
    };
    if let Some(p) = &output {
        write(p, MetricsFormat::Json)?;
    }
    if let Some(p) = &csv {
        write(p, MetricsFormat::Csv)?;
    }
    print_json(&metrics)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Serve { data, port, host, poll_ms, tap_capacity } => serve(data, host, port, poll_ms, tap_capacity),
        Command::RunMobile { trace, gateway, user, interval, server, live } => {
            run_mobile(&trace, &gateway, &user, interval, &server, live)
        }
        Command::RunServer { gateway, inbox, number, exit_after, idle_exit_ms } => {
            run_server(&gateway, &inbox, &number, exit_after, idle_exit_ms)
        }
        Command::Gateway { listen } => run_gateway(&listen),
        Command::Ingest { dir, once, watch: _, poll_ms } => ingest(&dir, once, poll_ms),
        Command::Query { data, query: q } => query(data, q),
        Command::Simulate { topology, workload, policy, ttl, seed, horizon_ms, output, csv } => {
            simulate(&topology, &workload, policy, ttl, seed, horizon_ms, output, csv)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
