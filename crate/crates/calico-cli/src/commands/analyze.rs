//! `calico analyze-magnitudes` and `calico analyze-weights`: inspect the two
//! calibration mechanisms of a checkpoint.
//!
//! Magnitudes: one CSV row per concept — name, log(1 + occurrences as an
//! operation argument in the corpus), and the concept's mean learned
//! magnitude across operation types — plus the Spearman rank correlation
//! between the two columns. Weights: one CSV row per (question, operation)
//! with the predicted calibration weight and its pre-sigmoid logit.

use std::collections::BTreeMap;
use std::path::PathBuf;

use calico::autodiff::{ParamStore, Session};
use calico::concepts::magnitude_frequency_rows;
use calico::opcal::predict_weights;
use calico::program::load_questions;
use calico::stats::spearman;
use calico::synth::concept_occurrences;
use calico::vocab::Vocabulary;
use calico::Result;

use crate::commands::{ensure_dir, questions_path, vocab_path, write_text};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

// ---------------------------------------------------------------------------
// analyze-magnitudes
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct MagnitudeArgs {
    /// Parameter checkpoint written by `calico train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus directory whose questions define concept frequencies.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional directory receiving magnitudes.csv and manifest.json; without
    /// it the CSV goes to stdout and the correlation line to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed, recorded for the manifest (the analysis is deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Per-concept (log frequency, mean magnitude) pairs plus their Spearman
/// rank correlation.
pub struct MagnitudeTable {
    pub rows: Vec<(String, f64, f64)>,
    pub spearman: Option<f64>,
}

pub fn magnitude_table(store: &ParamStore, vocab: &Vocabulary, counts: &BTreeMap<usize, usize>) -> Result<MagnitudeTable> {
    let rows = magnitude_frequency_rows(store, vocab, counts)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
    Ok(MagnitudeTable {
        rows,
        spearman: spearman(&xs, &ys),
    })
}

fn magnitude_csv(table: &MagnitudeTable) -> String {
    let mut out = String::from("concept,log_count,magnitude\n");
    for (name, log_count, magnitude) in &table.rows {
        out.push_str(&format!("{name},{log_count},{magnitude}\n"));
    }
    out
}

pub fn run_magnitudes(args: MagnitudeArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let snapshot = s.finish()?;

    let vp = vocab_path(&args.data);
    let qp = questions_path(&args.data);
    let vocab = Vocabulary::load(&vp)?;
    let questions = load_questions(&qp, &vocab)?;
    let store = ParamStore::load(&args.checkpoint)?;
    let counts = concept_occurrences(&questions);

    let table = magnitude_table(&store, &vocab, &counts)?;
    let csv = magnitude_csv(&table);
    let corr_line = match table.spearman {
        Some(r) => format!("spearman log_count vs magnitude: {r:.4}"),
        None => "spearman log_count vs magnitude: undefined".to_string(),
    };

    match &args.out {
        Some(out) => {
            ensure_dir(out)?;
            let csv_path = out.join("magnitudes.csv");
            write_text(&csv_path, &csv)?;
            println!("{corr_line}");
            let inputs = vec![vp, qp, args.checkpoint.clone()];
            write_manifest(out, "analyze-magnitudes", snapshot, seed, &inputs, &[csv_path], started_at)?;
        }
        None => {
            print!("{csv}");
            eprintln!("{corr_line}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze-weights
// ---------------------------------------------------------------------------

#[derive(Debug, clap::Args)]
pub struct WeightArgs {
    /// Parameter checkpoint written by `calico train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Corpus directory whose questions are analyzed.
    #[arg(long)]
    pub data: PathBuf,
    /// Analyze only the first N questions (key: limit).
    #[arg(long)]
    pub limit: Option<usize>,
    /// Optional directory receiving weights.csv and manifest.json; without it
    /// the CSV goes to stdout and the summary to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed, recorded for the manifest (the analysis is deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run_weights(args: WeightArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let limit = s.resolve_opt("limit", args.limit)?;
    let snapshot = s.finish()?;

    let vp = vocab_path(&args.data);
    let qp = questions_path(&args.data);
    let vocab = Vocabulary::load(&vp)?;
    let mut questions = load_questions(&qp, &vocab)?;
    if let Some(n) = limit {
        questions.truncate(n);
    }
    let store = ParamStore::load(&args.checkpoint)?;

    let mut csv = String::from("qid,node,op,weight,logit\n");
    let mut per_op: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
    for q in &questions {
        let session = Session::new(&store);
        let predicted = predict_weights(&session, &vocab, &q.program)?;
        let weights = predicted.weight_values();
        let logits = predicted.logit_values();
        for (node, n) in q.program.nodes().iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                q.qid,
                node,
                n.op.name(),
                weights[node],
                logits[node]
            ));
            let slot = per_op.entry(n.op.name()).or_insert((0.0, 0));
            slot.0 += weights[node];
            slot.1 += 1;
        }
    }

    let mut summary = String::new();
    for (op, (sum, n)) in &per_op {
        summary.push_str(&format!("op={op} mean_weight={:.4} n={n}\n", sum / *n as f64));
    }

    match &args.out {
        Some(out) => {
            ensure_dir(out)?;
            let csv_path = out.join("weights.csv");
            write_text(&csv_path, &csv)?;
            print!("{summary}");
            let inputs = vec![vp, qp, args.checkpoint.clone()];
            write_manifest(out, "analyze-weights", snapshot, seed, &inputs, &[csv_path], started_at)?;
        }
        None => {
            print!("{csv}");
            eprint!("{summary}");
        }
    }
    Ok(())
}
