mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semsoft::loss::WeightMode;
use semsoft::DagPolicy;

use error::CliError;

/// Hierarchy-aware classification pipeline: taxonomy processing, dataset
/// preparation, loss weights, toy training, evaluation, and scheme comparison.
#[derive(Debug, Parser)]
#[command(name = "semsoft", version)]
struct Cli {
    /// Seed for everything seeded. Overrides SEMSOFT_SEED and any config value.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect a taxonomy.
    #[command(subcommand)]
    Taxonomy(TaxonomyCommand),
    /// Prepare dataset manifests and images.
    #[command(subcommand)]
    Prep(PrepCommand),
    /// Expand class labels along the taxonomy.
    #[command(subcommand)]
    Labels(LabelsCommand),
    /// Compute per-hierarchy loss weights.
    Weights(WeightsArgs),
    /// Train the toy model on the synthetic dataset.
    Train(TrainArgs),
    /// Evaluate a trained model on the held-out split.
    Eval(EvalArgs),
    /// Train several schemes from the same initialization and tabulate accuracy.
    Compare(CompareArgs),
    /// Train on growing subsets of the training split.
    Sweep(SweepArgs),
    /// Check every loss gradient against central finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Subcommand)]
enum TaxonomyCommand {
    /// Print the number of classes per hierarchy.
    Stats {
        /// Taxonomy TSV (class_id, parent_id, name).
        tsv: PathBuf,
        #[arg(long, value_enum, default_value_t = DagPolicyArg::MinDepthParent)]
        dag_policy: DagPolicyArg,
    },
}

#[derive(Debug, Subcommand)]
enum PrepCommand {
    /// Drop classes with fewer than --min samples.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = semsoft::prep::DEFAULT_MIN_SAMPLES)]
        min: usize,
    },
    /// Assign --per-class validation samples per class, the rest to train.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = semsoft::prep::DEFAULT_VAL_PER_CLASS)]
        per_class: usize,
    },
    /// Squish-resize a binary pixel buffer to a square.
    Resize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = semsoft::prep::DEFAULT_RESOLUTION)]
        size: usize,
    },
}

#[derive(Debug, Subcommand)]
enum LabelsCommand {
    /// Print the root-to-class chain of names for a class.
    Expand {
        tsv: PathBuf,
        class_id: String,
        #[arg(long, value_enum, default_value_t = DagPolicyArg::MinDepthParent)]
        dag_policy: DagPolicyArg,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum DagPolicyArg {
    Reject,
    MinDepthParent,
}

impl From<DagPolicyArg> for DagPolicy {
    fn from(p: DagPolicyArg) -> Self {
        match p {
            DagPolicyArg::Reject => DagPolicy::Reject,
            DagPolicyArg::MinDepthParent => DagPolicy::MinDepthParent,
        }
    }
}

#[derive(Debug, Args)]
struct WeightsArgs {
    #[arg(long)]
    taxonomy: PathBuf,
    /// Manifest whose non-validation records give the empirical counts.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// empirical, class_mass, as_printed, or uniform.
    #[arg(long, default_value_t = WeightMode::Empirical)]
    mode: WeightMode,
    /// Also write the weights JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Flags shared by every config-driven command.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat JSON config with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set train.epochs=5. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory for model.json and trace.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated subset of top1, top5, semantic, map.
    #[arg(long, value_delimiter = ',', default_value = "top1,top5,semantic,map")]
    metrics: Vec<String>,
    /// Also write the report JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated schemes: single, multi, semantic.
    #[arg(long, value_delimiter = ',', default_value = "single,multi,semantic")]
    schemes: Vec<String>,
    /// Output CSV.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated training-set sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<usize>,
    /// Output CSV.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    /// Random instances per loss.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Maximum relative error accepted.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let env_seed = match std::env::var("SEMSOFT_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("SEMSOFT_SEED must be an unsigned integer, got `{v}`")))?,
        Err(_) => 0,
    };
    let seed = cli.seed.unwrap_or(env_seed);
    let load = |c: &ConfigArgs| config::RunConfig::load(c.config.as_deref(), &c.overrides, env_seed, cli.seed);

    match cli.command {
        Command::Taxonomy(TaxonomyCommand::Stats { tsv, dag_policy }) => {
            commands::taxonomy_stats(&tsv, dag_policy.into())
        }
        Command::Prep(PrepCommand::Filter { input, output, min }) => commands::prep_filter(&input, &output, min, seed),
        Command::Prep(PrepCommand::Split {
            input,
            output,
            per_class,
        }) => commands::prep_split(&input, &output, per_class, seed),
        Command::Prep(PrepCommand::Resize { input, output, size }) => {
            commands::prep_resize(&input, &output, size, seed)
        }
        Command::Labels(LabelsCommand::Expand {
            tsv,
            class_id,
            dag_policy,
        }) => commands::labels_expand(&tsv, &class_id, dag_policy.into()),
        Command::Weights(a) => commands::weights(&a.taxonomy, a.manifest.as_deref(), a.mode, a.output.as_deref(), seed),
        Command::Train(a) => commands::train(&load(&a.config)?, &a.out),
        Command::Eval(a) => commands::eval(&load(&a.config)?, &a.model, &a.metrics, a.output.as_deref()),
        Command::Compare(a) => commands::compare(&load(&a.config)?, &a.schemes, &a.output),
        Command::Sweep(a) => commands::sweep(&load(&a.config)?, &a.counts, &a.output),
        Command::GradCheck(a) => commands::grad_check(a.instances, a.tolerance, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
