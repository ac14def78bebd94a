use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use curate_core::session::SessionConfig;
use curate_server::cli::{run, RunOptions};
use curate_server::{router, AppState};

#[derive(Parser)]
#[command(name = "curate", version, about = "Instance-hardness guided resampling sessions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "CURATE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "CURATE_BIND", default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Directory whose CSV files are registered as datasets at startup.
        #[arg(long, env = "CURATE_DATA_DIR")]
        data_dir: Option<PathBuf>,
    },
    /// Replay a session script and write session.json, metrics.csv and
    /// sankey.json.
    Run {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the split, model and projection seeds.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Dataset CSV, overriding the script's dataset path.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

async fn serve(addr: SocketAddr, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let state = Arc::new(AppState::new(SessionConfig::default()));
    if let Some(dir) = data_dir {
        for d in state.load_dir(&dir)? {
            log::info!("dataset {} = {} ({} rows)", d.id, d.name, d.dataset.len());
        }
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve { port, bind, data_dir } => {
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            };
            match rt.block_on(serve(SocketAddr::new(bind, port), data_dir)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Run {
            script,
            out,
            seed_override,
            data,
        } => {
            let opts = RunOptions {
                script,
                out,
                seed_override,
                data,
            };
            match run(&opts) {
                Ok(session) => {
                    println!(
                        "replayed {} steps, wrote {}",
                        session.steps().len(),
                        opts.out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    match e.step() {
                        Some(step) => eprintln!("error[{}] at step {step}: {e}", e.code()),
                        None => eprintln!("error[{}]: {e}", e.code()),
                    }
                    ExitCode::FAILURE
                }
            }
        }
    }
}
