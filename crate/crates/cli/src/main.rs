//! `marginkd` command-line entry point.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "marginkd", version, about = "Margin-gated intra-class contrastive distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Anything given on the command line
/// overrides the same key from `--config`, which overrides built-in defaults.
#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-view dataset as CSV.
    GenData(GenDataArgs),
    /// Train a teacher with the margin-gated intra-class term.
    TrainTeacher(TeacherArgs),
    /// Distill a student from a teacher checkpoint.
    Distill(DistillArgs),
    /// Check the distance/loss identity and the loss-ratio bounds.
    Verify(VerifyArgs),
    /// Train teachers and students over a grid of lambdas and seeds.
    Sweep(SweepArgs),
    /// Summarize an output directory as markdown.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    views_per_class: Option<usize>,
    #[arg(long)]
    per_view: Option<usize>,
    #[arg(long)]
    d_in: Option<usize>,
    #[arg(long)]
    class_sep: Option<f64>,
    #[arg(long)]
    view_sep: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

/// Training flags shared by the commands that train models.
#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated epochs at which the learning rate decays.
    #[arg(long)]
    lr_decay_epochs: Option<String>,
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    #[arg(long)]
    aug_strength: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct TeacherArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    capacity_m: Option<usize>,
    /// drain_and_clear or sliding_window.
    #[arg(long)]
    cache_mode: Option<String>,
    /// cached or inline.
    #[arg(long)]
    intra_source: Option<String>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    teacher_hidden: Option<String>,
}

#[derive(Args, Debug)]
struct DistillArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Teacher checkpoint.
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Hard-label weight; the teacher gets 1 - alpha.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    student_hidden: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset CSV for the distance checks; a default synthetic set otherwise.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Embedder checkpoint; a seeded random network otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    anchors: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    aug_strength: Option<f64>,
    /// Comma-separated lambdas for the free-embedding bound check.
    #[arg(long)]
    lambdas: Option<String>,
    /// Comma-separated minimizer seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Classes in the free-embedding problem.
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Replace every measured loss ratio with this value (failure fixture).
    #[arg(long)]
    inject_ratio: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated lambdas; must include 0.
    #[arg(long)]
    lambdas: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    capacity_m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    teacher_hidden: Option<String>,
    #[arg(long)]
    student_hidden: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Directory written by another command.
    #[arg(long)]
    from: Option<PathBuf>,
}

/// Values given explicitly on the command line, keyed by flag id.
fn cli_overrides(cmd: &clap::Command, m: &ArgMatches) -> Vec<(String, String)> {
    cmd.get_arguments()
        .map(|a| a.get_id().as_str())
        .filter(|id| !matches!(*id, "config" | "out"))
        .filter(|id| m.value_source(id) == Some(ValueSource::CommandLine))
        .filter_map(|id| {
            let raw = m.get_raw(id)?;
            let joined = raw.map(|v| v.to_string_lossy().into_owned()).collect::<Vec<_>>().join(",");
            Some((id.to_string(), joined))
        })
        .collect()
}

fn main() {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let root = Cli::command();
    let overrides = cli_overrides(root.find_subcommand(name).expect("parsed subcommand exists"), sub);
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(&a.common.config, &a.common.out, &overrides),
        Command::TrainTeacher(a) => commands::train_teacher(&a.common.config, &a.common.out, &overrides),
        Command::Distill(a) => commands::distill(&a.common.config, &a.common.out, &overrides),
        Command::Verify(a) => commands::verify(&a.common.config, &a.common.out, &overrides),
        Command::Sweep(a) => commands::sweep(&a.common.config, &a.common.out, &overrides),
        Command::Report(a) => commands::report(&a.common.config, &a.common.out, &overrides),
    };
    match result {
        Ok(()) => std::process::exit(exit::OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = exit::code_for(&e);
            if code == exit::USAGE {
                eprintln!("run `marginkd --help` for usage");
            }
            std::process::exit(code);
        }
    }
}
