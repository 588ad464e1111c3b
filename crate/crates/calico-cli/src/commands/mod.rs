//! Subcommand implementations and the flags they share.

pub mod analyze;
pub mod eval_cmd;
pub mod exec_cmd;
pub mod gen;
pub mod gradcheck;
pub mod perturb_cmd;
pub mod train_cmd;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use calico::concepts::SimMode;
use calico::executor::ExecOptions;
use calico::train::Dataset;
use calico::vocab::Vocabulary;
use calico::{Error, Result};
use clap::ValueEnum;

use crate::kv::Settings;

// ---------------------------------------------------------------------------
// Shared flag enums
// ---------------------------------------------------------------------------

/// How concept-object similarity is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Cosine between unit direction and embedding.
    Normalized,
    /// Raw dot product (reference arithmetic).
    Unnormalized,
    /// Cosine scaled by the learned per-(operation, concept) magnitude.
    Calibrated,
}

impl ModeArg {
    pub fn name(self) -> &'static str {
        match self {
            ModeArg::Normalized => "normalized",
            ModeArg::Unnormalized => "unnormalized",
            ModeArg::Calibrated => "calibrated",
        }
    }
}

impl FromStr for ModeArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(ModeArg::Normalized),
            "unnormalized" => Ok(ModeArg::Unnormalized),
            "calibrated" => Ok(ModeArg::Calibrated),
            other => Err(Error::Config(format!(
                "mode `{other}` is not normalized|unnormalized|calibrated"
            ))),
        }
    }
}

impl std::fmt::Display for ModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl From<ModeArg> for SimMode {
    fn from(m: ModeArg) -> SimMode {
        match m {
            ModeArg::Normalized => SimMode::Normalized,
            ModeArg::Unnormalized => SimMode::Unnormalized,
            ModeArg::Calibrated => SimMode::Calibrated,
        }
    }
}

/// Whether operation-calibration weights multiply node outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OpcalArg {
    On,
    Off,
}

impl OpcalArg {
    pub fn is_on(self) -> bool {
        matches!(self, OpcalArg::On)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpcalArg::On => "on",
            OpcalArg::Off => "off",
        }
    }
}

impl FromStr for OpcalArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(OpcalArg::On),
            "off" => Ok(OpcalArg::Off),
            other => Err(Error::Config(format!("opcal `{other}` is not on|off"))),
        }
    }
}

impl std::fmt::Display for OpcalArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Attention over object distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttentionArg {
    /// Differentiable softmax at the configured temperature.
    Soft,
    /// Exact first-max selection.
    Hard,
}

impl AttentionArg {
    pub fn name(self) -> &'static str {
        match self {
            AttentionArg::Soft => "soft",
            AttentionArg::Hard => "hard",
        }
    }
}

impl FromStr for AttentionArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(AttentionArg::Soft),
            "hard" => Ok(AttentionArg::Hard),
            other => Err(Error::Config(format!(
                "attention `{other}` is not soft|hard"
            ))),
        }
    }
}

impl std::fmt::Display for AttentionArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// Shared execution flags
// ---------------------------------------------------------------------------

/// Flags selecting how programs are executed; every evaluating command takes
/// them. Defaults vary per command and are documented there.
#[derive(Debug, clap::Args)]
pub struct ExecFlags {
    /// Similarity mode (key: mode).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Operation calibration on/off (key: opcal).
    #[arg(long, value_enum)]
    pub opcal: Option<OpcalArg>,
    /// Attention kind: soft(max) or exact first-max (key: attention).
    #[arg(long, value_enum)]
    pub attention: Option<AttentionArg>,
    /// Softmax temperature when attention is soft (key: temperature).
    #[arg(long, allow_negative_numbers = true)]
    pub temperature: Option<f64>,
    /// Scores strictly above this decode to "yes" (key: binary-threshold).
    #[arg(long, allow_negative_numbers = true)]
    pub binary_threshold: Option<f64>,
}

pub struct ExecDefaults {
    pub mode: ModeArg,
    pub opcal: OpcalArg,
    pub attention: AttentionArg,
}

/// Trained-model defaults: calibrated similarity, weights on, soft attention.
pub fn trained_defaults() -> ExecDefaults {
    ExecDefaults {
        mode: ModeArg::Calibrated,
        opcal: OpcalArg::On,
        attention: AttentionArg::Soft,
    }
}

impl ExecFlags {
    /// Resolve against a settings file; returns the executor options and
    /// whether operation calibration is on.
    pub fn resolve(&self, s: &mut Settings, defaults: ExecDefaults) -> Result<(ExecOptions, bool)> {
        let mode = s.resolve("mode", self.mode, defaults.mode)?;
        let opcal = s.resolve("opcal", self.opcal, defaults.opcal)?;
        let attention = s.resolve("attention", self.attention, defaults.attention)?;
        let temperature = s.resolve("temperature", self.temperature, 1.0)?;
        let binary_threshold = s.resolve("binary-threshold", self.binary_threshold, 0.0)?;
        let opts = ExecOptions {
            mode: mode.into(),
            temperature: match attention {
                AttentionArg::Soft => Some(temperature),
                AttentionArg::Hard => None,
            },
            binary_threshold,
        };
        Ok((opts, opcal.is_on()))
    }
}

// ---------------------------------------------------------------------------
// Data-directory helpers
// ---------------------------------------------------------------------------

/// Fixed file names inside a corpus directory (as written by gen-data).
pub fn vocab_path(data: &Path) -> PathBuf {
    data.join("vocab.json")
}

pub fn scenes_path(data: &Path) -> PathBuf {
    data.join("scenes.jsonl")
}

pub fn questions_path(data: &Path) -> PathBuf {
    data.join("questions.jsonl")
}

pub fn load_corpus_dir(data: &Path) -> Result<(Vocabulary, Dataset, Vec<PathBuf>)> {
    let vp = vocab_path(data);
    let sp = scenes_path(data);
    let qp = questions_path(data);
    let vocab = Vocabulary::load(&vp)?;
    let dataset = Dataset::load(&sp, &qp, &vocab)?;
    Ok((vocab, dataset, vec![vp, sp, qp]))
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

pub fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    write_text(path, &body)
}

/// JSONL: one compact JSON object per line.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut body = String::new();
    for row in rows {
        let line = serde_json::to_string(row)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        body.push_str(&line);
        body.push('\n');
    }
    write_text(path, &body)
}
