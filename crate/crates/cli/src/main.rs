use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ific::baselines::ControllerKind;
use ific_cli::commands::{self, EXIT_AUDIT, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK};
use ific_cli::server::Server;

/// Interactive force-impedance control simulator.
#[derive(Parser)]
#[command(name = "ific", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the controller named in the config.
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Trace CSV; the resolved config goes to a JSON file beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several controllers on the same scenario and report their metrics.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "ific,ufic,lpf,ds")]
        controllers: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stored trace for passivity.
    Audit {
        trace: PathBuf,
        /// Exit with status 3 if any violation is found.
        #[arg(long)]
        strict: bool,
    },
    /// Realtime simulation behind a WebSocket.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn execute(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Run { config, controller, out } => {
            let config = commands::load_config(&config)?;
            let kind = controller.unwrap_or(config.controller);
            let out = out.or_else(|| config.output.trace.clone());
            let (summary, diverged) = commands::run(&config, kind, out.as_deref())?;
            commands::write_json(&summary, config.output.report.as_deref())?;
            if diverged {
                log::error!("{kind} diverged: {}", summary.metrics.failure.as_deref().unwrap_or(""));
                return Ok(EXIT_DIVERGED);
            }
            Ok(EXIT_OK)
        }
        Command::Compare { config, controllers, out } => {
            let config = commands::load_config(&config)?;
            let kinds = commands::parse_controllers(&controllers)?;
            let report = commands::compare(&config, &kinds)?;
            commands::write_json(&report, out.as_deref())?;
            Ok(if report.diverged() { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Audit { trace, strict } => {
            let summary = commands::audit(&trace)?;
            commands::write_json(&summary, None)?;
            Ok(if strict && !summary.passed { EXIT_AUDIT } else { EXIT_OK })
        }
        Command::Serve { config, port, host } => {
            let config = match config {
                Some(path) => commands::load_config(&path)?,
                None => Default::default(),
            };
            let server = Server::start(&config, &format!("{host}:{port}"))?;
            println!("listening on ws://{}", server.local_addr());
            server.wait();
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IFIC_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
