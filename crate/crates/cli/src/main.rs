mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use asa_core::controller::{Mode, Precision};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "asa", version, about = "Probe-gated activation steering toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random draw (world sampling, random-control directions).
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Asset bundle to read (or write, for `train`).
    #[arg(long, global = true)]
    pub bundle: Option<PathBuf>,
    /// Tool schema JSON; defaults to the built-in four-domain schema.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Write the report here as JSON, plus a CSV next to it. Without it the
    /// JSON goes to stdout.
    #[arg(long, global = true)]
    pub report_out: Option<PathBuf>,
}

/// Where generated text comes from: the synthetic behavior oracle of a world.
#[derive(Args, Debug, Clone)]
pub struct WorldArgs {
    /// World config JSON; defaults to the built-in world. `--seed` replaces
    /// its seed.
    #[arg(long)]
    pub world: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a synthetic world into an activation file (and optionally a
    /// baseline generation log).
    Simulate {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, default_value_t = 500)]
        n_per_cell: usize,
        /// Split proportions cal,train,val,test.
        #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [0.2, 0.4, 0.2, 0.2])]
        splits: Vec<f64>,
        /// Emit every layer of the world's layer profile instead of one layer.
        #[arg(long)]
        all_layers: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write uninjected generations for every record.
        #[arg(long)]
        generations: Option<PathBuf>,
    },
    /// Run the whole pipeline on a synthetic world and report every diagnostic.
    Run {
        /// Pipeline config JSON; defaults to the built-in configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Estimate global and per-domain steering vectors from the cal split.
    BuildVectors {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit standardizer, router and probes on train and write a bundle.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Vectors from `build-vectors`; estimated from cal when absent.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value = "f32")]
        precision: Precision,
    },
    /// Probe every layer of a multi-layer dump and select the best one.
    SweepLayers {
        #[arg(long)]
        data: PathBuf,
    },
    /// Sweep alpha/tau on val, select by F1 and report the choice on test.
    Tune {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', default_value = "full")]
        modes: Vec<Mode>,
        /// Write the bundle with the selected operating point here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one mode on the test split against the uninjected baseline,
    /// or score an existing generation log.
    Eval {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long, required_unless_present = "generations")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        mode: Mode,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Score these generations instead of running the world oracle.
        #[arg(long, conflicts_with = "data")]
        generations: Option<PathBuf>,
    },
    /// Every requested mode at one operating point on the test split.
    Ablate {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Trigger-logit change for +v, -v and random directions.
    DiagnoseDeltaLogit {
        #[command(flatten)]
        world: WorldArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Direction to inject: "global" or a domain name.
        #[arg(long, default_value = "global")]
        direction: String,
    },
    /// Answer steering requests over the wire protocol.
    Serve {
        /// TCP address to listen on, e.g. 127.0.0.1:7878.
        #[arg(long, conflicts_with = "stdio")]
        listen: Option<String>,
        /// Speak the protocol on stdin/stdout instead.
        #[arg(long)]
        stdio: bool,
        #[arg(long, default_value = "full")]
        mode: Mode,
        #[arg(long, requires = "tau")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        tau: Option<f64>,
    },
    /// Re-encode a bundle at another precision.
    Export {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "f16")]
        precision: Precision,
    },
    /// Validate a bundle file and write it as a full-precision working copy.
    Import {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "f32")]
        precision: Precision,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
