//! `calico train`: fit a model on a corpus directory and save a checkpoint.
//!
//! Parameters are registered fresh from the seed, so a training run is fully
//! reproducible from its manifest. The weight-predictor parameters are always
//! registered (checkpoints have one shape regardless of `--opcal`); with
//! `--opcal off` they simply receive no gradient.

use std::path::PathBuf;

use calico::autodiff::ParamStore;
use calico::executor::{register_model, ModelConfig};
use calico::opcal::{register_opcal, OpcalConfig};
use calico::train::{train, Dataset, TrainConfig};
use calico::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::{
    ensure_dir, load_corpus_dir, trained_defaults, write_json_pretty, write_jsonl, ExecFlags,
};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Corpus directory (vocab.json, scenes.jsonl, questions.jsonl).
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving checkpoint.json, report.json, metrics.jsonl, and
    /// manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed (falls back to CALICO_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub exec: ExecFlags,
    /// Training epochs (key: epochs).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Peak learning rate (key: lr).
    #[arg(long)]
    pub lr: Option<f64>,
    /// Examples per optimizer step (key: batch-size).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Linear warmup steps (key: warmup).
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Global gradient-norm ceiling (key: clip-norm).
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Early-stop patience in epochs; 0 disables (key: patience).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Fraction of questions held out for evaluation; every k-th question is
    /// held out, so the split is deterministic. 0 evaluates on the training
    /// set (key: eval-frac).
    #[arg(long)]
    pub eval_frac: Option<f64>,
    /// Embedding dimension (key: embed-dim).
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Hidden width of per-family mapping networks (key: map-hidden).
    #[arg(long)]
    pub map_hidden: Option<usize>,
    /// Hidden width of per-relationship-type pair networks (key: pair-hidden).
    #[arg(long)]
    pub pair_hidden: Option<usize>,
    /// Gaussian init std (key: init-std).
    #[arg(long)]
    pub init_std: Option<f64>,
    /// LSTM hidden size per direction in the weight predictor
    /// (key: opcal-hidden).
    #[arg(long)]
    pub opcal_hidden: Option<usize>,
}

/// Deterministic interleaved split: every k-th example is held out, where
/// k ≈ 1/frac. Both halves share the full scene table.
fn split(data: Dataset, eval_frac: f64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&eval_frac) {
        return Err(Error::Config(format!(
            "eval-frac {eval_frac} outside [0, 1)"
        )));
    }
    if eval_frac == 0.0 {
        let eval = data.clone();
        return Ok((data, eval));
    }
    let k = ((1.0 / eval_frac).round() as usize).max(2);
    let (mut train_ex, mut eval_ex) = (Vec::new(), Vec::new());
    for (i, ex) in data.examples.into_iter().enumerate() {
        if i % k == 0 {
            eval_ex.push(ex);
        } else {
            train_ex.push(ex);
        }
    }
    let train = Dataset {
        scenes: data.scenes.clone(),
        examples: train_ex,
    };
    let eval = Dataset {
        scenes: data.scenes,
        examples: eval_ex,
    };
    Ok((train, eval))
}

pub fn run(args: TrainArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let (opts, opcal) = args.exec.resolve(&mut s, trained_defaults())?;

    let td = TrainConfig::default();
    let train_cfg = TrainConfig {
        lr: s.resolve("lr", args.lr, td.lr)?,
        batch_size: s.resolve("batch-size", args.batch_size, td.batch_size)?,
        epochs: s.resolve("epochs", args.epochs, td.epochs)?,
        warmup_steps: s.resolve("warmup", args.warmup, td.warmup_steps)?,
        clip_norm: s.resolve("clip-norm", args.clip_norm, td.clip_norm)?,
        patience: s.resolve("patience", args.patience, td.patience)?,
        seed,
        ..td
    };
    let md = ModelConfig::default();
    let model_cfg = ModelConfig {
        embed_dim: s.resolve("embed-dim", args.embed_dim, md.embed_dim)?,
        map_hidden: s.resolve("map-hidden", args.map_hidden, md.map_hidden)?,
        pair_hidden: s.resolve("pair-hidden", args.pair_hidden, md.pair_hidden)?,
        init_std: s.resolve("init-std", args.init_std, md.init_std)?,
    };
    let od = OpcalConfig::default();
    let opcal_cfg = OpcalConfig {
        hidden: s.resolve("opcal-hidden", args.opcal_hidden, od.hidden)?,
        ..od
    };
    let eval_frac = s.resolve("eval-frac", args.eval_frac, 0.1)?;
    let snapshot = s.finish()?;

    let (vocab, dataset, inputs) = load_corpus_dir(&args.data)?;
    let (train_data, eval_data) = split(dataset, eval_frac)?;

    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    register_model(&mut store, &vocab, &model_cfg, &mut rng)?;
    register_opcal(&mut store, &vocab, &opcal_cfg, &mut rng)?;

    let report = train(&mut store, &vocab, &train_data, &eval_data, &opts, opcal, &train_cfg)?;

    ensure_dir(&args.out)?;
    let checkpoint = args.out.join("checkpoint.json");
    let report_path = args.out.join("report.json");
    let metrics_path = args.out.join("metrics.jsonl");
    store.save(&checkpoint)?;
    write_json_pretty(&report_path, &report)?;
    write_jsonl(&metrics_path, &report.metrics)?;

    println!(
        "trained mode={} opcal={} on {} examples ({} held out): best_eval_accuracy={:.4} at epoch {} ({} epochs run)",
        snapshot["mode"],
        snapshot["opcal"],
        train_data.len(),
        eval_data.len(),
        report.best_eval_accuracy,
        report.best_epoch,
        report.epochs_run,
    );

    let mut all_inputs = inputs;
    all_inputs.extend(args.config.iter().cloned());
    let outputs = vec![checkpoint, report_path, metrics_path];
    write_manifest(&args.out, "train", snapshot, seed, &all_inputs, &outputs, started_at)?;
    Ok(())
}
