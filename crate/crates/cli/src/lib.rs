//! The `mtc` command line.
//!
//! Exit codes: 0 success, 1 verification or handshake reject, 2 usage,
//! 3 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod demo;
pub mod overlay;
pub mod reports;

use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Reject(String),
    #[error("{0}")]
    Runtime(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => EXIT_USAGE,
            CmdError::Reject(_) => EXIT_REJECT,
            CmdError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CmdError::Runtime(e.to_string())
    }
}

pub fn run(argv: Vec<OsString>) -> i32 {
    let argv = match overlay::apply(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_tracing(&cli.log);
    let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    match rt.block_on(dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_tracing(filter: &str) {
    let filter = tracing_subscriber::EnvFilter::try_new(filter).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

async fn dispatch(command: Command) -> Result<(), CmdError> {
    match command {
        Command::Ca(a) => commands::ca(a).await,
        Command::Cosigner(a) => commands::cosigner(a).await,
        Command::Mirror(a) => commands::mirror(a).await,
        Command::Distributor(a) => commands::distributor(a).await,
        Command::Issue(a) => commands::issue(a).await,
        Command::Verify(a) => commands::verify(a).await,
        Command::Revoke(a) => commands::revoke(a).await,
        Command::Demo(a) => {
            let mut stdout = std::io::stdout();
            demo::run(&a.into(), &mut stdout).await.map(|_| ()).map_err(CmdError::runtime)
        }
        Command::Bench(a) => reports::bench(a),
        Command::Tables(a) => reports::tables(a),
    }
}

/// Writes `body` to `out`, or stdout when `None`.
pub fn emit(body: &str, out: Option<&Path>) -> Result<(), CmdError> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| CmdError::Runtime(format!("{}: {e}", p.display()))),
        None => {
            let mut s = std::io::stdout();
            s.write_all(body.as_bytes()).and_then(|_| s.flush()).map_err(CmdError::runtime)
        }
    }
}
