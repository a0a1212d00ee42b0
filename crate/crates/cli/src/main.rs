//! `hesunet`: synthesize data, train, infer, evaluate and run the module
//! ablation grid.

mod commands;
mod exit;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hesunet", version = manifest::VERSION, about = "HES-UNet lesion segmentation")]
pub struct Cli {
    /// Seed for data synthesis, weight initialization and batch order
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Compute in 64-bit floating point
    #[arg(long, global = true)]
    pub float64: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic phantom dataset with a patient-disjoint split
    Synth(SynthArgs),
    /// Train a model on a dataset directory
    Train(TrainArgs),
    /// Predict masks for a directory of images
    Infer(InferArgs),
    /// Score predicted masks against ground truth
    Eval(EvalArgs),
    /// Train and score every on/off combination of the optional modules
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub patients: usize,
    /// Square image side in pixels (multiple of 64)
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Fraction of patients with cystic lesions
    #[arg(long)]
    pub ce_ratio: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub slices_per_patient: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `key=value` run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write images with the predicted boundary burned in
    #[arg(long)]
    pub overlay: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Micro-averaged report; the per-sample table is written beside it
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Modules to toggle; the others stay on
    #[arg(long, value_delimiter = ',', default_value = "mdb,mub,mab")]
    pub grid: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
