//! `calico exec`: run one program against one scene and print the answer,
//! optionally with a full per-operation JSON trace.
//!
//! Without `--checkpoint` the reference parameters are used (exact
//! first-max arithmetic), so a freshly generated scene file can be queried
//! with no training step; the vocabulary is taken from `--vocab` or from
//! `vocab.json` next to the scene file.

use std::path::PathBuf;

use calico::autodiff::{ParamStore, Session};
use calico::executor::identity::identity_store;
use calico::executor::Executor;
use calico::opcal::predict_weights;
use calico::program::Program;
use calico::scene::load_scenes;
use calico::vocab::Vocabulary;
use calico::{Error, Result};

use crate::commands::{
    ensure_dir, write_json_pretty, AttentionArg, ExecDefaults, ExecFlags, ModeArg, OpcalArg,
};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

#[derive(Debug, clap::Args)]
pub struct ExecArgs {
    /// Program text, e.g. "exist(select[name](bag))".
    #[arg(long)]
    pub program: String,
    /// Scene file (JSONL of feature scenes).
    #[arg(long)]
    pub scene: PathBuf,
    /// Which scene in the file to execute against (key: scene-index).
    #[arg(long)]
    pub scene_index: Option<usize>,
    /// Vocabulary file; defaults to vocab.json next to the scene file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Parameter checkpoint; reference parameters when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Print a JSON trace with one step per operation.
    #[arg(long)]
    pub trace: bool,
    /// Optional directory receiving exec.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed, recorded for the manifest (execution is deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub exec: ExecFlags,
}

pub fn run(args: ExecArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let seed = s.resolve_seed(args.seed)?;
    let identity = args.checkpoint.is_none();
    // Reference parameters score with raw dot products and first-max
    // attention and have no weight predictor; a checkpoint defaults to its
    // trained configuration.
    let defaults = if identity {
        ExecDefaults {
            mode: ModeArg::Unnormalized,
            opcal: OpcalArg::Off,
            attention: AttentionArg::Hard,
        }
    } else {
        ExecDefaults {
            mode: ModeArg::Calibrated,
            opcal: OpcalArg::On,
            attention: AttentionArg::Soft,
        }
    };
    let (opts, opcal) = args.exec.resolve(&mut s, defaults)?;
    let scene_index = s.resolve("scene-index", args.scene_index, 0)?;
    let snapshot = s.finish()?;

    let vocab_path = match &args.vocab {
        Some(p) => p.clone(),
        None => args
            .scene
            .parent()
            .map(|d| d.join("vocab.json"))
            .filter(|p| p.exists())
            .ok_or_else(|| {
                Error::Config(
                    "no vocabulary: pass --vocab or keep vocab.json next to the scene file"
                        .into(),
                )
            })?,
    };
    let vocab = Vocabulary::load(&vocab_path)?;
    let scenes = load_scenes(&args.scene)?;
    let scene = scenes.get(scene_index).ok_or_else(|| {
        Error::Config(format!(
            "scene index {scene_index} out of range ({} scenes in {})",
            scenes.len(),
            args.scene.display()
        ))
    })?;
    let program = Program::parse(&args.program, &vocab)?;

    let store = match &args.checkpoint {
        Some(p) => ParamStore::load(p)?,
        None => identity_store(&vocab)?,
    };

    let session = Session::new(&store);
    let executor = Executor::new(&session, &vocab, scene, opts.clone())?;
    let weights = if opcal {
        Some(predict_weights(&session, &vocab, &program)?.weights)
    } else {
        None
    };
    let run = executor.execute(&program, weights.as_deref(), None)?;

    let rendered = serde_json::json!({
        "program": program.serialize(&vocab),
        "answer": run.answer,
        "candidates": run
            .answer_vars
            .scored_candidates()
            .iter()
            .map(|(name, score)| serde_json::json!({"candidate": name, "score": score}))
            .collect::<Vec<_>>(),
        "trace": run.trace,
    });
    if args.trace {
        let body = serde_json::to_string_pretty(&rendered)
            .map_err(|e| Error::Config(format!("trace: {e}")))?;
        println!("{body}");
    } else {
        println!("{}", run.answer);
    }

    if let Some(out) = &args.out {
        ensure_dir(out)?;
        let exec_path = out.join("exec.json");
        write_json_pretty(&exec_path, &rendered)?;
        let mut inputs = vec![args.scene.clone(), vocab_path];
        inputs.extend(args.checkpoint.iter().cloned());
        inputs.extend(args.config.iter().cloned());
        write_manifest(out, "exec", snapshot, seed, &inputs, &[exec_path], started_at)?;
    }
    Ok(())
}
