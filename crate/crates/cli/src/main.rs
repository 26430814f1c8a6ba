//! `zslreq`: command-line front end of the classification service.
//!
//! Every subcommand talks to the service over HTTP. With `--server` (or
//! `ZSLREQ_SERVER`) unset, a private instance is started on a loopback port
//! for the duration of the command.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use zslreq_client::{Client, ClientError};
use zslreq_core::agreement::{Level, Statistic};
use zslreq_core::api::*;
use zslreq_core::embedding::{EmbedderKind, EmbedderSpec, DEFAULT_BATCH_SIZE};
use zslreq_core::experiment::{render_log, ConfigRef, ExperimentSpec};
use zslreq_core::metrics::{parse_report_csv, ReportFormat};
use zslreq_core::ErrorKind;
use zslreq_server::AppState;

#[derive(Parser)]
#[command(name = "zslreq", version, about = "Zero-shot requirements classification")]
struct Cli {
    /// Base URL of a running service; a local one is started when absent.
    #[arg(long, global = true, env = "ZSLREQ_SERVER")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its report and prediction log.
    Run(RunArgs),
    /// Inspect builtin label configurations.
    Configs {
        #[command(subcommand)]
        action: ConfigsAction,
    },
    /// Suggest lexicon terms close to a class name.
    Labelgen {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        term: String,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Agreement statistics over a tag file (item,annotator,tag[,group]).
    Irr {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long, value_enum, default_value_t = StatArg::Kappa)]
        stat: StatArg,
        #[arg(long, value_enum, default_value_t = LevelArg::Micro)]
        level: LevelArg,
    },
    /// Merge CSV reports into one table sorted by weighted F1.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// PROMISE NFR or SecReq CSV file.
    #[arg(long)]
    dataset: PathBuf,
    /// fr-nfr, nfr-binary:<CLASS>, nfr-multiclass, nfr-multilabel or security.
    #[arg(long)]
    task: String,
    /// top4, all or project:<NAME>.
    #[arg(long)]
    scope: Option<String>,
    /// Builtin configuration id or path to a configuration file.
    #[arg(long)]
    config: String,
    /// static:<lexicon path> or remote:<base url>.
    #[arg(long)]
    backend: EmbedderSpec,
    /// Number of labels predicted per item (multi-label tasks only).
    #[arg(long)]
    topk: Option<usize>,
    /// Report file; the report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Prediction log file; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Texts per request to a remote backend.
    #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
    batch_size: usize,
}

#[derive(Subcommand)]
enum ConfigsAction {
    /// List ids with their strategy and classes.
    List,
    /// Print one configuration as JSON.
    Show { id: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    Kappa,
    Alpha,
    Breakdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Micro,
    Macro,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Md,
}

/// Error with the exit code it maps to.
struct Failure {
    kind: ErrorKind,
    message: String,
}

impl Failure {
    fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        let kind = e.kind();
        let message = match e {
            ClientError::Api(api) => api.message,
            other => other.to_string(),
        };
        Self { kind, message }
    }
}

fn absolute(path: &Path) -> Result<PathBuf, Failure> {
    std::path::absolute(path).map_err(|e| Failure::new(ErrorKind::Usage, format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::new(ErrorKind::Data, format!("{}: {e}", path.display())))
}

fn default_log_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".log.jsonl");
    PathBuf::from(name)
}

async fn run(client: &Client, args: RunArgs) -> Result<(), Failure> {
    let mut backend = args.backend;
    if backend.kind == EmbedderKind::StaticLexicon {
        backend.source = absolute(Path::new(&backend.source))?.display().to_string();
    }
    let config = if Path::new(&args.config).is_file() {
        absolute(Path::new(&args.config))?.display().to_string()
    } else {
        args.config
    };
    let spec = ExperimentSpec {
        dataset: absolute(&args.dataset)?,
        task: args.task,
        scope: args.scope,
        k: args.topk,
        config: ConfigRef(config),
        backend,
        batch_size: args.batch_size.max(1),
    };
    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Md => ReportFormat::Markdown,
    };
    let resp = client.run_experiment(&ExperimentRequest { spec, format }).await?;

    if resp.report.excluded > 0 {
        eprintln!("warning: {} item(s) had no known tokens and were excluded", resp.report.excluded);
    }
    let log_path = args.log.or_else(|| args.out.as_deref().map(default_log_path));
    match &args.out {
        Some(out) => write_file(out, &resp.rendered)?,
        None => print!("{}", resp.rendered),
    }
    if let Some(log) = log_path {
        write_file(&log, &render_log(&resp.log))?;
    }
    Ok(())
}

async fn configs(client: &Client, action: ConfigsAction) -> Result<(), Failure> {
    match action {
        ConfigsAction::List => {
            for c in client.configs().await? {
                let classes: Vec<&str> = c.classes.iter().map(|c| c.code()).collect();
                let strategy = serde_json_string(&c.strategy);
                println!("{}\t{}\t{}", c.id, strategy, classes.join(","));
            }
        }
        ConfigsAction::Show { id } => {
            println!("{}", client.config(&id).await?.to_json());
        }
    }
    Ok(())
}

fn serde_json_string<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(e) => e.to_string(),
    }
}

async fn labelgen(client: &Client, lexicon: PathBuf, term: String, top: usize) -> Result<(), Failure> {
    let req = LabelgenRequest { lexicon: absolute(&lexicon)?, term, top };
    for s in client.labelgen(&req).await?.suggestions {
        println!("{}\t{:.4}", s.term, s.similarity);
    }
    Ok(())
}

async fn irr(client: &Client, tags: PathBuf, stat: StatArg, level: LevelArg) -> Result<(), Failure> {
    let stat = match stat {
        StatArg::Kappa => Statistic::Kappa,
        StatArg::Alpha => Statistic::Alpha,
        StatArg::Breakdown => Statistic::Breakdown,
    };
    let level = match level {
        LevelArg::Micro => Level::Micro,
        LevelArg::Macro => Level::Macro,
    };
    let resp = client.irr(&IrrRequest { tags: absolute(&tags)?, stat, level }).await?;
    let level = serde_json_string(&resp.level);
    println!("items: {}, annotators: {}", resp.items, resp.annotators);
    if let Some(b) = resp.breakdown {
        println!("perfect ({level}): {:.4}", b.perfect);
        println!("partial ({level}): {:.4}", b.partial);
        println!("disagreement ({level}): {:.4}", b.disagreement);
    }
    if let Some(v) = resp.value {
        let band = resp.band.map(|b| format!(" ({b})")).unwrap_or_default();
        println!("{} ({level}): {v:.4}{band}", serde_json_string(&resp.stat));
    }
    Ok(())
}

async fn compare(client: &Client, paths: Vec<PathBuf>) -> Result<(), Failure> {
    let mut reports = Vec::with_capacity(paths.len());
    for path in paths {
        let src = fs::read_to_string(&path)
            .map_err(|e| Failure::new(ErrorKind::Data, format!("{}: {e}", path.display())))?;
        let report = parse_report_csv(&src)
            .map_err(|e| Failure::new(ErrorKind::Data, format!("{}: {e}", path.display())))?;
        let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        reports.push(NamedReport { label, report });
    }
    print!("{}", client.compare(&CompareRequest { reports }).await?.table);
    Ok(())
}

async fn serve(addr: &str) -> Result<(), Failure> {
    let state = AppState::from_env().map_err(|e| Failure::new(e.kind, e.message))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Failure::new(ErrorKind::Usage, format!("cannot bind {addr}: {e}")))?;
    eprintln!("listening on http://{}", listener.local_addr().map_err(|e| Failure::new(ErrorKind::Usage, e.to_string()))?);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    zslreq_server::serve(listener, state, shutdown)
        .await
        .map_err(|e| Failure::new(ErrorKind::Backend, e.to_string()))
}

async fn client_for(server: Option<String>) -> Result<Client, Failure> {
    if let Some(url) = server {
        return Ok(Client::new(url));
    }
    let state = AppState::from_env().map_err(|e| Failure::new(e.kind, e.message))?;
    let (addr, _handle) = zslreq_server::spawn_local(state)
        .await
        .map_err(|e| Failure::new(ErrorKind::Backend, format!("cannot start local service: {e}")))?;
    Ok(Client::new(format!("http://{addr}")))
}

async fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Command::Serve { addr } = &cli.command {
        return serve(addr).await;
    }
    let client = client_for(cli.server).await?;
    match cli.command {
        Command::Run(args) => run(&client, args).await,
        Command::Configs { action } => configs(&client, action).await,
        Command::Labelgen { lexicon, term, top } => labelgen(&client, lexicon, term, top).await,
        Command::Irr { tags, stat, level } => irr(&client, tags, stat, level).await,
        Command::Compare { reports } => compare(&client, reports).await,
        Command::Serve { .. } => unreachable!("handled above"),
    }
}

fn parse_args<I: IntoIterator<Item = OsString>>(args: I) -> Result<Cli, ExitCode> {
    Cli::try_parse_from(args).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(ErrorKind::Usage.exit_code() as u8)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    let cli = match parse_args(std::env::args_os()) {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(ErrorKind::Backend.exit_code() as u8);
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
