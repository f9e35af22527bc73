//! `uclog`: operator command line for the incident store.
//!
//! Exit codes: 0 on success, 1 on a domain error (one-line reason on
//! stderr), 2 on a usage error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use uclog_core::auth::{create_account, list_accounts, Role};
use uclog_core::clock::{Clock, FixedClock, SystemClock};
use uclog_core::config::Config;
use uclog_core::correlator::SearchRequest;
use uclog_core::ingest::{parse_iso_time, IngestError, Ingestor};
use uclog_core::query::{export_tsv, render_plotspec, run_report, QueryError, ReportParams, CATALOG};
use uclog_core::store::{schema_dump, Store};
use uclog_server::AppState;

const ACTOR: &str = "cli";

#[derive(Parser)]
#[command(name = "uclog", version, about = "Security incident store, reports and flow correlation")]
struct Cli {
    /// Configuration file; defaults to $UCLOG_CONFIG.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Fixed current time (ISO-8601) for reproducible output.
    #[arg(long, global = true, value_name = "ISO")]
    now: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create the store and the configured admin account.
    Init {
        #[arg(long, env = "UCLOG_ADMIN_PASSWORD", hide_env_values = true)]
        admin_password: String,
    },
    /// Run the HTTP API.
    Serve {
        /// Overrides api.listen.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Sweep the alert drop directory.
    Ingest(IngestArgs),
    /// Run a canned report.
    Report(ReportArgs),
    /// Search a flow log source.
    Flows(FlowArgs),
    /// Manage accounts.
    #[command(subcommand)]
    User(UserCommand),
    /// Inspect the audit trail.
    #[command(subcommand)]
    Audit(AuditCommand),
    /// Print the database schema.
    #[command(subcommand)]
    Schema(SchemaCommand),
}

#[derive(Args)]
struct IngestArgs {
    /// Drop directory; defaults to ingest.drop_dir.
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Sweep once and exit (the default).
    #[arg(long, conflicts_with = "watch")]
    once: bool,
    /// Keep sweeping until interrupted.
    #[arg(long)]
    watch: bool,
    /// Seconds between sweeps with --watch.
    #[arg(long, default_value_t = 30)]
    interval: u64,
}

#[derive(Args)]
struct ReportArgs {
    name: String,
    /// Report parameter as name=value; repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Write the table as TSV to a file, or `-` for stdout (the default).
    #[arg(long, value_name = "PATH")]
    tsv: Option<String>,
    /// Write the chart as a plot spec to a file, or `-` for stdout.
    #[arg(long, value_name = "PATH")]
    plot: Option<String>,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    source: String,
    #[arg(long)]
    ip: String,
    /// Window start, epoch seconds or YYYY-MM-DDTHH:MM:SSZ.
    #[arg(long)]
    from: String,
    /// Window end (exclusive).
    #[arg(long)]
    to: String,
    #[arg(long)]
    port: Option<String>,
    /// Most records to return.
    #[arg(long)]
    max: Option<usize>,
}

#[derive(Subcommand)]
enum UserCommand {
    /// Create an account.
    Add {
        #[arg(long)]
        username: String,
        /// admin or normal.
        #[arg(long, value_parser = ["admin", "normal"])]
        role: String,
        #[arg(long, env = "UCLOG_PASSWORD", hide_env_values = true)]
        password: String,
    },
    /// List accounts.
    List,
}

#[derive(Subcommand)]
enum AuditCommand {
    /// Print the most recent entries, oldest first.
    Tail {
        #[arg(short = 'n', long, default_value_t = 20)]
        lines: usize,
    },
}

#[derive(Subcommand)]
enum SchemaCommand {
    /// Print the CREATE statements.
    Dump,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    fn domain(e: impl std::fmt::Display) -> Self {
        CliError::Domain(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(msg)) => {
            eprintln!("uclog: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("uclog: {msg}");
            eprintln!("Try 'uclog --help' for usage.");
            ExitCode::from(2)
        }
    }
}

struct Ctx {
    config_path: Option<PathBuf>,
    clock: Arc<dyn Clock>,
}

impl Ctx {
    fn config(&self) -> Result<Config, CliError> {
        Config::locate(self.config_path.as_deref()).map_err(CliError::domain)
    }

    fn store(&self, cfg: &Config) -> Result<Arc<Store>, CliError> {
        Store::open(&cfg.store.path).map(Arc::new).map_err(CliError::domain)
    }

    fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }
}

fn run(cli: Cli) -> CliResult {
    let clock: Arc<dyn Clock> = match &cli.now {
        Some(s) => Arc::new(FixedClock(
            parse_iso_time(s).ok_or_else(|| CliError::Usage(format!("--now {s:?} is not an ISO-8601 time")))?,
        )),
        None => Arc::new(SystemClock),
    };
    let ctx = Ctx {
        config_path: cli.config,
        clock,
    };
    match cli.command {
        Command::Init { admin_password } => init(&ctx, &admin_password),
        Command::Serve { listen } => serve(&ctx, listen),
        Command::Ingest(args) => ingest(&ctx, args),
        Command::Report(args) => report(&ctx, args),
        Command::Flows(args) => flows(&ctx, args),
        Command::User(UserCommand::Add {
            username,
            role,
            password,
        }) => user_add(&ctx, &username, &role, &password),
        Command::User(UserCommand::List) => user_list(&ctx),
        Command::Audit(AuditCommand::Tail { lines }) => audit_tail(&ctx, lines),
        Command::Schema(SchemaCommand::Dump) => {
            print!("{}", schema_dump());
            Ok(())
        }
    }
}

fn init(ctx: &Ctx, admin_password: &str) -> CliResult {
    let cfg = ctx.config()?;
    if let Some(dir) = cfg.store.path.parent() {
        fs::create_dir_all(dir).map_err(CliError::domain)?;
    }
    let store = ctx.store(&cfg)?;
    let admin = &cfg.auth.admin_user;
    if store.find_user(admin).map_err(CliError::domain)?.is_some() {
        println!("store {} ready; account {admin} already exists", cfg.store.path.display());
        return Ok(());
    }
    create_account(&store, &cfg.password_hasher(), ACTOR, admin, admin_password, Role::Admin)
        .map_err(CliError::domain)?;
    println!("store {} ready; created admin account {admin}", cfg.store.path.display());
    Ok(())
}

fn serve(ctx: &Ctx, listen: Option<String>) -> CliResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cfg = ctx.config()?;
    let state = AppState::from_config(&cfg, ctx.clock.clone()).map_err(CliError::domain)?;
    let listen = listen.unwrap_or_else(|| cfg.api.listen.clone());
    let rt = tokio::runtime::Runtime::new().map_err(CliError::domain)?;
    rt.block_on(uclog_server::serve(state, &listen, cfg.api.static_dir.clone()))
        .map_err(CliError::domain)
}

fn ingest(ctx: &Ctx, args: IngestArgs) -> CliResult {
    let cfg = ctx.config()?;
    let dir = args
        .dir
        .or_else(|| cfg.ingest.drop_dir.clone())
        .ok_or_else(|| CliError::Usage("no --dir given and ingest.drop_dir is not configured".into()))?;
    let ingestor = Ingestor::new(ctx.store(&cfg)?, cfg.resolver(), cfg.sender_policy());
    loop {
        match ingestor.scan_drop_directory(&dir) {
            Ok(report) => {
                println!("{}", report.summary_line());
                for r in &report.rejections {
                    eprintln!("rejected {}: {}", r.file, r.reason);
                }
            }
            Err(e @ IngestError::Busy(_)) if args.watch => eprintln!("uclog: {e}"),
            Err(e) => return Err(CliError::domain(e)),
        }
        if !args.watch {
            return Ok(());
        }
        std::thread::sleep(Duration::from_secs(args.interval.max(1)));
    }
}

fn catalog_listing() -> String {
    let names: Vec<&str> = CATALOG.iter().map(|r| r.name).collect();
    format!("available reports: {}", names.join(", "))
}

fn write_output(target: &str, text: &str) -> CliResult {
    if target == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(CliError::domain)
    } else {
        fs::write(Path::new(target), text).map_err(|e| CliError::Domain(format!("{target}: {e}")))
    }
}

fn report(ctx: &Ctx, args: ReportArgs) -> CliResult {
    let mut params = ReportParams::new();
    for p in &args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param {p:?} is not NAME=VALUE")))?;
        params.insert(k.to_string(), v.to_string());
    }
    if uclog_core::query::find_report(&args.name).is_none() {
        return Err(CliError::Usage(format!("unknown report {:?}\n{}", args.name, catalog_listing())));
    }
    let cfg = ctx.config()?;
    let store = ctx.store(&cfg)?;
    let out = run_report(&store, &args.name, &params, ctx.now()).map_err(|e| match e {
        QueryError::MissingParam(_) | QueryError::BadParam { .. } => CliError::Usage(e.to_string()),
        other => CliError::domain(other),
    })?;
    if let Some(plot) = &args.plot {
        let chart = out
            .chart
            .as_ref()
            .ok_or_else(|| CliError::Domain(format!("report {} has no chart", args.name)))?;
        write_output(plot, &render_plotspec(chart))?;
    }
    if args.tsv.is_some() || args.plot.is_none() {
        write_output(args.tsv.as_deref().unwrap_or("-"), &export_tsv(&out.table))?;
    }
    if let Some(s) = out.summary {
        eprintln!("mean={} stddev={} n={}", s.mean, s.stddev, s.n);
    }
    Ok(())
}

fn flows(ctx: &Ctx, args: FlowArgs) -> CliResult {
    let mut req = SearchRequest::from_strings(&args.source, &args.ip, args.port.as_deref(), &args.from, &args.to)
        .map_err(CliError::domain)?;
    if let Some(max) = args.max {
        req = req.with_max_records(max);
    }
    let cfg = ctx.config()?;
    let correlator = cfg
        .correlator(ctx.store(&cfg)?, ctx.clock.clone())
        .map_err(CliError::domain)?;
    let result = correlator.execute_search(&req, ACTOR).map_err(CliError::domain)?;
    let mut out = String::new();
    for r in &result.records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    write_output("-", &out)?;
    eprintln!(
        "records={} truncated={} cached={} parse_errors={}",
        result.records.len(),
        result.truncated,
        result.from_cache,
        result.parse_errors
    );
    Ok(())
}

fn user_add(ctx: &Ctx, username: &str, role: &str, password: &str) -> CliResult {
    let role = Role::parse(role).ok_or_else(|| CliError::Usage(format!("unknown role {role:?}")))?;
    let cfg = ctx.config()?;
    let store = ctx.store(&cfg)?;
    let account =
        create_account(&store, &cfg.password_hasher(), ACTOR, username, password, role).map_err(CliError::domain)?;
    println!("created {} ({})", account.username, account.role);
    Ok(())
}

fn user_list(ctx: &Ctx) -> CliResult {
    let cfg = ctx.config()?;
    let mut out = String::new();
    for u in list_accounts(&*ctx.store(&cfg)?).map_err(CliError::domain)? {
        out.push_str(&format!("{}\t{}\n", u.username, u.role));
    }
    write_output("-", &out)
}

fn audit_tail(ctx: &Ctx, lines: usize) -> CliResult {
    let cfg = ctx.config()?;
    let mut out = String::new();
    for e in ctx.store(&cfg)?.audit_tail(lines).map_err(CliError::domain)? {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
            e.actor,
            e.action,
            e.entity,
            e.detail.replace(['\t', '\n'], " ")
        ));
    }
    write_output("-", &out)
}
