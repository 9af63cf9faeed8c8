use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;

use clap::{Args, Parser, Subcommand};
use meshdevs_cli::{cmd_run, cmd_run_dist, cmd_serve, cmd_validate, Horizon, RunConfig, EXIT_USAGE};

#[derive(Parser)]
#[command(name = "meshdevs", version, about = "Parallel DEVS simulation, local or spread over simulation servers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model document.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run a model in this process.
    Run(RunArgs),
    /// Start a simulation server.
    Serve {
        /// Address to bind, e.g. 127.0.0.1:7700.
        #[arg(long = "serve", value_name = "ADDR")]
        addr: String,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a model on simulation servers.
    RunDist(RunArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("horizon").required(true).args(["until", "iterations"]))]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    /// Process every event up to this time.
    #[arg(long)]
    until: Option<f64>,
    /// Process at most this many cycles.
    #[arg(long)]
    iterations: Option<u64>,
    /// Pace the run at SCALE wall seconds per time unit.
    #[arg(long, value_name = "SCALE")]
    realtime: Option<f64>,
    /// Comma-separated server addresses; unassigned components are spread
    /// over them in order.
    #[arg(long, value_delimiter = ',')]
    servers: Vec<String>,
    /// Place a component on a server, overriding the document.
    #[arg(long, value_name = "COMPONENT=ADDR", value_parser = parse_assign)]
    assign: Vec<(String, String)>,
    /// Write the trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print only the final summary line.
    #[arg(long)]
    quiet: bool,
}

fn parse_assign(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((c, a)) if !c.is_empty() && !a.is_empty() => Ok((c.to_owned(), a.to_owned())),
        _ => Err(format!("expected COMPONENT=ADDR, got `{s}`")),
    }
}

impl RunArgs {
    fn config(self) -> RunConfig {
        let horizon = match (self.until, self.iterations) {
            (Some(t), _) => Horizon::Until(t),
            (None, Some(n)) => Horizon::Iterations(n),
            (None, None) => unreachable!("clap requires a horizon"),
        };
        RunConfig {
            model: self.model,
            horizon,
            realtime: self.realtime,
            servers: self.servers,
            assign: self.assign,
            trace: self.trace,
            quiet: self.quiet,
        }
    }
}

fn init_logging(quiet: bool) {
    let default = if quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default)).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = io::stdout();
    let code = match cli.command {
        Command::Validate { model } => {
            init_logging(false);
            cmd_validate(&model, &mut out)
        }
        Command::Run(args) => {
            init_logging(args.quiet);
            cmd_run(&args.config(), &mut out)
        }
        Command::RunDist(args) => {
            init_logging(args.quiet);
            cmd_run_dist(&args.config(), &mut out)
        }
        Command::Serve { addr, quiet } => {
            init_logging(quiet);
            let (tx, rx) = mpsc::channel();
            if let Err(e) = ctrlc::set_handler(move || {
                let _ = tx.send(());
            }) {
                eprintln!("error: cannot install signal handler: {e}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
            cmd_serve(&addr, &mut out, rx)
        }
    };
    ExitCode::from(code as u8)
}
