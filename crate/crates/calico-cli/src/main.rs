//! `calico`: corpus generation, training, evaluation, single-program
//! execution, perturbation analysis, calibration inspection, and gradient
//! checking for the trainable symbolic executor.
//!
//! Every command is deterministic under a fixed `--seed` (environment
//! fallback `CALICO_SEED`), reads optional `key = value` settings via
//! `--config` with flags taking precedence, and — when it writes files —
//! drops a `manifest.json` next to them from which the run can be replayed
//! to identical outputs. Errors print as one JSON object on stderr and set a
//! nonzero exit status.

mod commands;
mod kv;
mod manifest;

use clap::{Parser, Subcommand};

use commands::{analyze, eval_cmd, exec_cmd, gen, gradcheck, perturb_cmd, train_cmd};

#[derive(Parser)]
#[command(name = "calico", version, about = "Trainable symbolic executor for scene questions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded corpus of scenes and questions.
    GenData(gen::GenArgs),
    /// Train a model and save a checkpoint.
    Train(train_cmd::TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(eval_cmd::EvalArgs),
    /// Execute one program against one scene.
    Exec(exec_cmd::ExecArgs),
    /// Remove low-weight operations and measure surviving accuracy.
    Perturb(perturb_cmd::PerturbArgs),
    /// Concept frequency vs learned magnitude, as CSV plus rank correlation.
    AnalyzeMagnitudes(analyze::MagnitudeArgs),
    /// Predicted per-operation calibration weights, as CSV.
    AnalyzeWeights(analyze::WeightArgs),
    /// Verify gradients against central differences.
    GradCheck(gradcheck::GradCheckArgs),
}

fn dispatch(cli: Cli) -> calico::Result<()> {
    match cli.command {
        Command::GenData(args) => gen::run(args),
        Command::Train(args) => train_cmd::run(args),
        Command::Eval(args) => eval_cmd::run(args),
        Command::Exec(args) => exec_cmd::run(args),
        Command::Perturb(args) => perturb_cmd::run(args),
        Command::AnalyzeMagnitudes(args) => analyze::run_magnitudes(args),
        Command::AnalyzeWeights(args) => analyze::run_weights(args),
        Command::GradCheck(args) => gradcheck::run(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        let rendered = serde_json::json!({ "error": e.to_string() });
        eprintln!("{rendered}");
        std::process::exit(1);
    }
}
