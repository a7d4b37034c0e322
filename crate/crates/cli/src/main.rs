use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdmpm::flow::{NoiseSpec, DEFAULT_NOISE_BOX};
use crowdmpm_cli::commands::{self, CmdResult, Failure, Op, SimulateArgs};
use crowdmpm_cli::server::{self, AppState};

#[derive(Parser)]
#[command(name = "crowdmpm", version, about = "Differentiable crowd simulation, fitting and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write snapshots, field dumps and a report.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's step count.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Force ordered, thread-count independent reductions.
        #[arg(long)]
        deterministic: bool,
    },
    /// Fit a parameter model to a flow sequence.
    Train {
        /// Flow sequence manifest (JSON).
        #[arg(long)]
        flows: PathBuf,
        /// Training configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fitted model file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Curl, divergence or stress maps of a run as CSV and PNG.
    Analyze {
        /// Run directory written by `simulate`.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long, value_enum)]
        op: OpArg,
        #[arg(long)]
        out: PathBuf,
        /// Unitize velocities before curl or divergence.
        #[arg(long)]
        normalized: bool,
        /// Another run directory used as ground truth for error metrics.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Optical-flow utilities.
    Flow {
        #[command(subcommand)]
        command: FlowCommand,
    },
    /// Serve the job API and the studio bundle.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Job store root; defaults to $CROWDMPM_DATA_DIR or ./crowdmpm-data.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Concurrent simulations; defaults to the core count.
        #[arg(long)]
        workers: Option<usize>,
        /// Directory served at `/`.
        #[arg(long, name = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OpArg {
    Curl,
    Div,
    Stress,
}

#[derive(Subcommand)]
enum FlowCommand {
    /// Flow sequence to grid velocity fields (CSV and binary).
    Convert {
        #[arg(long)]
        flows: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run velocity fields to a `.flo` sequence with a manifest.
    FromRun {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrupt a flow sequence for robustness experiments.
    Noise(NoiseArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseKind {
    Gaussian,
    Uniform,
    Mixture,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long)]
    flows: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    kind: NoiseKind,
    #[arg(long, default_value_t = 0.0)]
    std: f64,
    #[arg(long, default_value_t = 0.0)]
    prob: f64,
    #[arg(long, default_value_t = 0.5)]
    w_g: f64,
    #[arg(long, default_value_t = 0.5)]
    w_u: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl NoiseArgs {
    fn spec(&self) -> NoiseSpec {
        let bounds = DEFAULT_NOISE_BOX;
        match self.kind {
            NoiseKind::Gaussian => NoiseSpec::Gaussian { std: self.std },
            NoiseKind::Uniform => NoiseSpec::Uniform { prob: self.prob, bounds },
            NoiseKind::Mixture => {
                NoiseSpec::Mixture { std: self.std, prob: self.prob, w_g: self.w_g, w_u: self.w_u, bounds }
            }
        }
    }
}

fn serve(
    addr: SocketAddr,
    data_dir: Option<PathBuf>,
    workers: Option<usize>,
    static_dir: Option<PathBuf>,
) -> CmdResult<serde_json::Value> {
    let root = data_dir.unwrap_or_else(AppState::data_dir_from_env);
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let failed = |e: std::io::Error| Failure { code: 1, message: e.to_string() };
    let state = AppState::open(&root, workers, static_dir).map_err(failed)?;
    let rt = tokio::runtime::Runtime::new().map_err(failed)?;
    rt.block_on(server::serve(addr, state)).map_err(failed)?;
    Ok(serde_json::Value::Null)
}

fn dispatch(cmd: Command) -> CmdResult<serde_json::Value> {
    match cmd {
        Command::Simulate { scenario, out, steps, seed, deterministic } => {
            commands::simulate(&SimulateArgs { scenario, out, steps, seed, deterministic })
        }
        Command::Train { flows, config, out } => commands::train(&flows, config.as_deref(), &out),
        Command::Analyze { frames, op, out, normalized, truth } => {
            let op = match op {
                OpArg::Curl => Op::Curl,
                OpArg::Div => Op::Div,
                OpArg::Stress => Op::Stress,
            };
            commands::analyze(&frames, op, &out, normalized, truth.as_deref())
        }
        Command::Flow { command } => match command {
            FlowCommand::Convert { flows, out } => commands::flow_to_fields(&flows, &out),
            FlowCommand::FromRun { run, out } => commands::run_to_flows(&run, &out),
            FlowCommand::Noise(a) => commands::flow_noise(&a.flows, &a.spec(), a.seed, &a.out),
        },
        Command::Serve { addr, data_dir, workers, static_dir } => serve(addr, data_dir, workers, static_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
