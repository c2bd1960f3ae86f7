use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use amto_cli::experiment::{cmd_compare, cmd_plot, cmd_run, cmd_sweep_tasks};
use amto_cli::{CliError, ExperimentSpec};

#[derive(Parser)]
#[command(name = "amto", version, about = "Adaptive multi-task training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec file (`key = value` lines).
    spec: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train once and write metrics, transfer log, summary and model.
    Run(Common),
    /// Paired single-task vs AMTO runs over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// AMTO over a list of task counts.
    SweepTasks {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,6")]
        counts: Vec<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Render loss curves from a metrics CSV.
    Plot {
        metrics: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentSpec, CliError> {
    let mut overrides = Vec::new();
    for item in &common.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{item}'")))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    if let Some(seed) = common.seed {
        overrides.push(("run.seed".into(), seed.to_string()));
    }
    if let Some(dir) = &common.output_dir {
        overrides.push(("run.output_dir".into(), dir.display().to_string()));
    }
    Ok(ExperimentSpec::from_file_with(&common.spec, &overrides)?)
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(common) => {
            let spec = load(&common)?;
            let outcome = cmd_run(&spec)?;
            let s = &outcome.summary;
            println!(
                "winner task {} | test accuracy {:.4} | {} checkpoints ({:?}) | {}/{} transfers accepted",
                s.winner, s.test_accuracy, s.checkpoints, s.stop_reason, s.accepted_transfers, s.transfers
            );
            println!("artifacts in {}", spec.output_dir.display());
        }
        Command::Compare { common, repeats } => {
            let spec = load(&common)?;
            let comparison = cmd_compare(&spec, repeats.unwrap_or(spec.repeats))?;
            print!("{}", comparison.to_markdown());
        }
        Command::SweepTasks { common, counts, repeats } => {
            let spec = load(&common)?;
            let sweep = cmd_sweep_tasks(&spec, &counts, repeats.unwrap_or(spec.repeats))?;
            print!("{}", sweep.to_csv());
        }
        Command::Plot { metrics, output_dir } => {
            for path in cmd_plot(&metrics, output_dir.as_deref())? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
