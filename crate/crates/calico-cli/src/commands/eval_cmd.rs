//! `calico eval`: score a checkpoint against a corpus directory.

use std::path::PathBuf;

use calico::autodiff::ParamStore;
use calico::train::evaluate;
use calico::{Error, Result};

use crate::commands::{ensure_dir, load_corpus_dir, trained_defaults, write_json_pretty, ExecFlags};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Corpus directory (vocab.json, scenes.jsonl, questions.jsonl).
    #[arg(long)]
    pub data: PathBuf,
    /// Parameter checkpoint written by `calico train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Optional directory receiving eval.json and manifest.json; the report
    /// always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed, recorded for the manifest (evaluation itself is
    /// deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub exec: ExecFlags,
    /// Evaluate only the first N questions (key: limit).
    #[arg(long)]
    pub limit: Option<usize>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let (opts, opcal) = args.exec.resolve(&mut s, trained_defaults())?;
    let limit = s.resolve_opt("limit", args.limit)?;
    let snapshot = s.finish()?;

    let (vocab, mut dataset, mut inputs) = load_corpus_dir(&args.data)?;
    if let Some(n) = limit {
        dataset.examples.truncate(n);
    }
    if dataset.is_empty() {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    let store = ParamStore::load(&args.checkpoint)?;
    inputs.push(args.checkpoint.clone());
    inputs.extend(args.config.iter().cloned());

    let report = evaluate(&store, &vocab, &dataset, &opts, opcal)?;
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("eval report: {e}")))?;
    println!("{body}");

    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let report_path = out.join("eval.json");
        write_json_pretty(&report_path, &report)?;
        write_manifest(out, "eval", snapshot, seed, &inputs, &[report_path], started_at)?;
    }
    Ok(())
}
