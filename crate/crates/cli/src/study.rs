use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use choicescore_core::io as cio;
use choicescore_core::prior::LabelPrior;
use choicescore_service::auth::{Authenticator, OpenAccess, Roster, TokenTable};
use choicescore_service::store::CreateStudy;
use choicescore_service::{serve, AppState, StudyStore};
use clap::{Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Clone, Copy, ValueEnum)]
pub enum AuthMode {
    /// Anyone may act as any labeler or as admin.
    Open,
    /// Labelers must be listed in `--roster`; admin calls stay open.
    Roster,
    /// Bearer tokens mapped to labelers in `--tokens`.
    Tokens,
}

#[derive(Subcommand)]
pub enum StudyCmd {
    /// Design the profiles and questionnaires of a new study
    Create {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long, default_value = "uniform:-1,1")]
        prior: LabelPrior,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = choicescore_service::store::DEFAULT_RESTARTS)]
        restarts: usize,
        #[arg(long)]
        allow_multiple: bool,
    },
    /// Start accepting labelers
    Open { id: String },
    /// Print every study
    List,
    /// Run the HTTP service
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, value_enum, default_value_t = AuthMode::Open)]
        auth: AuthMode,
        /// One labeler id per line.
        #[arg(long)]
        roster: Option<PathBuf>,
        /// JSON object mapping token to labeler id.
        #[arg(long)]
        tokens: Option<PathBuf>,
        #[arg(long, env = "CHOICESCORE_ADMIN_TOKEN")]
        admin_token: Option<String>,
    },
    /// Replay a response log through the live checks
    ImportResponses {
        id: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Compute labels from completed questionnaires
    Aggregate {
        id: String,
        #[arg(long)]
        minimum: Option<usize>,
    },
    /// Write design, questionnaires, responses and scores to a directory
    Export {
        id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn authenticator(
    mode: AuthMode,
    roster: Option<&Path>,
    tokens: Option<&Path>,
    admin_token: Option<String>,
) -> Result<Arc<dyn Authenticator>> {
    Ok(match mode {
        AuthMode::Open => Arc::new(OpenAccess),
        AuthMode::Roster => {
            let path = roster.context("--auth roster needs --roster")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let names = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
            Arc::new(Roster::new(names))
        }
        AuthMode::Tokens => {
            let path = tokens.context("--auth tokens needs --tokens")?;
            let table: HashMap<String, String> = cio::read_json(path)?;
            let Some(admin) = admin_token else {
                bail!("--auth tokens needs --admin-token or CHOICESCORE_ADMIN_TOKEN");
            };
            Arc::new(TokenTable::new(table, admin))
        }
    })
}

pub fn run(data_dir: &Path, cmd: StudyCmd) -> Result<()> {
    let store = StudyStore::open(data_dir).with_context(|| format!("opening data directory {}", data_dir.display()))?;
    match cmd {
        StudyCmd::Create { n, id, catalog, prior, seed, restarts, allow_multiple } => {
            let mut req = CreateStudy::new(n, seed);
            req.id = id;
            req.catalog = catalog.map(|p| cio::read_catalog(&p)).transpose()?;
            req.prior = prior;
            req.restarts = restarts;
            req.allow_multiple = allow_multiple;
            print(&store.create_study(&req)?)
        }
        StudyCmd::Open { id } => print(&store.open_study(&id)?),
        StudyCmd::List => print(&store.list()),
        StudyCmd::Serve { host, port, auth, roster, tokens, admin_token } => {
            let auth = authenticator(auth, roster.as_deref(), tokens.as_deref(), admin_token)?;
            let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
            let state = AppState { store: Arc::new(store), auth };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(state, addr, |a| eprintln!("listening on http://{a}"), async {
                let _ = tokio::signal::ctrl_c().await;
            }))?;
            Ok(())
        }
        StudyCmd::ImportResponses { id, file } => {
            let records = cio::read_response_log(&file)?;
            let report = store.import_responses(&id, &records)?;
            print(&report)
        }
        StudyCmd::Aggregate { id, minimum } => print(&store.aggregate(&id, minimum)?),
        StudyCmd::Export { id, out } => {
            for path in store.export(&id, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}
