//! `calico perturb`: sweep a logit threshold over the removable operations
//! of every program and report how much accuracy survives the removals.

use std::path::PathBuf;

use calico::autodiff::ParamStore;
use calico::perturb::{curve, RemovalMode};
use calico::{Error, Result};

use crate::commands::{ensure_dir, load_corpus_dir, trained_defaults, write_text, ExecFlags};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

pub const DEFAULT_THRESHOLDS: &str = "-inf,-2,-1,-0.5,0,0.5,1,2,inf";

#[derive(Debug, clap::Args)]
pub struct PerturbArgs {
    /// Corpus directory (vocab.json, scenes.jsonl, questions.jsonl).
    #[arg(long)]
    pub data: PathBuf,
    /// Parameter checkpoint written by `calico train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory receiving curve.csv, curve.json, and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated logit thresholds; inf/-inf allowed (key: thresholds).
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: Option<String>,
    /// Re-predict weights after each removal pass until a fixpoint
    /// (key: iterative).
    #[arg(long)]
    pub iterative: bool,
    /// Perturb only the first N questions (key: limit).
    #[arg(long)]
    pub limit: Option<usize>,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed, recorded for the manifest (the sweep is deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub exec: ExecFlags,
}

/// Parse, sort ascending, and deduplicate a threshold list.
pub fn parse_thresholds(raw: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let value: f64 = part
            .parse()
            .map_err(|e| Error::Config(format!("threshold `{part}`: {e}")))?;
        if value.is_nan() {
            return Err(Error::Config("threshold NaN is not orderable".into()));
        }
        out.push(value);
    }
    if out.is_empty() {
        return Err(Error::Config("no thresholds given".into()));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

pub fn run(args: PerturbArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let (opts, opcal) = args.exec.resolve(&mut s, trained_defaults())?;
    let raw =
        s.resolve("thresholds", args.thresholds.clone(), DEFAULT_THRESHOLDS.to_string())?;
    let iterative = s.resolve_switch("iterative", args.iterative)?;
    let limit = s.resolve_opt("limit", args.limit)?;
    let snapshot = s.finish()?;

    let thresholds = parse_thresholds(&raw)?;
    let mode = if iterative {
        RemovalMode::Iterative
    } else {
        RemovalMode::SinglePass
    };

    let (vocab, mut dataset, mut inputs) = load_corpus_dir(&args.data)?;
    if let Some(n) = limit {
        dataset.examples.truncate(n);
    }
    let store = ParamStore::load(&args.checkpoint)?;
    inputs.push(args.checkpoint.clone());
    inputs.extend(args.config.iter().cloned());

    let report = curve(&store, &vocab, &dataset, &thresholds, mode, &opts, opcal)?;

    println!("baseline_accuracy={:.4}", report.baseline_accuracy);
    for row in &report.rows {
        println!(
            "threshold={} frac_removed={:.4} frac_questions_modified={:.4} accuracy={:.4} delta={:+.4}",
            row.threshold, row.frac_removed, row.frac_questions_modified, row.accuracy, row.delta
        );
    }

    ensure_dir(&args.out)?;
    let csv_path = args.out.join("curve.csv");
    let json_path = args.out.join("curve.json");
    write_text(&csv_path, &report.to_csv())?;
    write_text(&json_path, &report.to_json()?)?;
    write_manifest(
        &args.out,
        "perturb",
        snapshot,
        seed,
        &inputs,
        &[csv_path, json_path],
        started_at,
    )?;
    Ok(())
}
