//! `calico gen-data`: generate a seeded corpus into a directory.

use std::path::PathBuf;

use calico::synth::{generate, CorpusConfig};
use calico::Result;

use crate::commands::{ensure_dir, write_json_pretty};
use crate::kv::Settings;
use crate::manifest::{now_rfc3339, write_manifest};

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// Directory receiving vocab.json, gold.jsonl, scenes.jsonl,
    /// questions.jsonl, stats.json, and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed (falls back to CALICO_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of scenes (key: scenes).
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Number of questions (key: questions).
    #[arg(long)]
    pub questions: Option<usize>,
    /// Class-name concepts; must be a power of four (key: classes).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Color concepts; power of four (key: colors).
    #[arg(long)]
    pub colors: Option<usize>,
    /// Size concepts; power of four (key: sizes).
    #[arg(long)]
    pub sizes: Option<usize>,
    /// Material concepts; power of four (key: materials).
    #[arg(long)]
    pub materials: Option<usize>,
    /// Relationship names per relationship type; power of four
    /// (key: rels-per-type).
    #[arg(long)]
    pub rels_per_type: Option<usize>,
    /// Zipf exponent for concept draws; 0 = uniform (key: zipf-s).
    #[arg(long)]
    pub zipf_s: Option<f64>,
    /// Minimum objects per scene (key: objects-min).
    #[arg(long)]
    pub objects_min: Option<usize>,
    /// Maximum objects per scene (key: objects-max).
    #[arg(long)]
    pub objects_max: Option<usize>,
    /// Probability a question carries redundant operations (key: rho).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Gaussian feature noise std; gold stays clean (key: noise).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Density of the relationship truth table (key: relation-density).
    #[arg(long)]
    pub relation_density: Option<f64>,
    /// Fraction of scenes holding one attribute family constant
    /// (key: uniform-family-fraction).
    #[arg(long)]
    pub uniform_family_fraction: Option<f64>,
}

pub fn run(args: GenArgs) -> Result<()> {
    let started_at = now_rfc3339();
    let mut s = Settings::load(args.config.as_deref())?;
    let d = CorpusConfig::default();
    let cfg = CorpusConfig {
        n_classes: s.resolve("classes", args.classes, d.n_classes)?,
        n_colors: s.resolve("colors", args.colors, d.n_colors)?,
        n_sizes: s.resolve("sizes", args.sizes, d.n_sizes)?,
        n_materials: s.resolve("materials", args.materials, d.n_materials)?,
        rels_per_type: s.resolve("rels-per-type", args.rels_per_type, d.rels_per_type)?,
        zipf_s: s.resolve("zipf-s", args.zipf_s, d.zipf_s)?,
        n_scenes: s.resolve("scenes", args.scenes, d.n_scenes)?,
        n_questions: s.resolve("questions", args.questions, d.n_questions)?,
        objects_min: s.resolve("objects-min", args.objects_min, d.objects_min)?,
        objects_max: s.resolve("objects-max", args.objects_max, d.objects_max)?,
        rho: s.resolve("rho", args.rho, d.rho)?,
        feature_noise_std: s.resolve("noise", args.noise, d.feature_noise_std)?,
        relation_density: s.resolve(
            "relation-density",
            args.relation_density,
            d.relation_density,
        )?,
        uniform_family_fraction: s.resolve(
            "uniform-family-fraction",
            args.uniform_family_fraction,
            d.uniform_family_fraction,
        )?,
        template_mix: d.template_mix,
        seed: s.resolve_seed(args.seed)?,
    };
    let snapshot = s.finish()?;

    let corpus = generate(&cfg)?;
    ensure_dir(&args.out)?;
    let paths = corpus.save(&args.out)?;
    let stats_path = args.out.join("stats.json");
    write_json_pretty(&stats_path, &corpus.stats)?;

    println!(
        "generated {} scenes, {} questions ({} yes / {} no, {} over-specified) into {}",
        corpus.gold.len(),
        corpus.questions.len(),
        corpus.stats.yes,
        corpus.stats.no,
        corpus.stats.over_specified,
        args.out.display()
    );

    let inputs: Vec<PathBuf> = args.config.iter().cloned().collect();
    let outputs = vec![paths.vocab, paths.gold, paths.scenes, paths.questions, stats_path];
    write_manifest(&args.out, "gen-data", snapshot, cfg.seed, &inputs, &outputs, started_at)?;
    Ok(())
}
