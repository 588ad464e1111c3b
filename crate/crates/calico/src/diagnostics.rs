//! Gradient fidelity sweeps over the full model.
//!
//! [`fidelity_sweep`] builds a small seeded fixture — a generated corpus plus
//! randomly initialized executor and weight-predictor parameters — and
//! compares tape gradients of the training loss against central differences:
//! once for each operation type (through a real emitted question containing
//! it) and once for a single backward pass whose loss sums programs covering
//! all 18 operation types, so every primitive and their composition are
//! verified end to end.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{grad_check, ParamStore};
use crate::concepts::SimMode;
use crate::error::{Error, Result};
use crate::executor::{register_model, ExecOptions, ModelConfig};
use crate::opcal::{register_opcal, OpcalConfig};
use crate::program::{OpType, Program, OP_TYPES};
use crate::synth::{generate, CorpusConfig};
use crate::train::{answer_loss, run_example, Dataset, Example};
use crate::vocab::{RelType, Vocabulary, YES};

/// Knobs for a sweep: finite-difference step, per-tensor component cap, and
/// the seed fixing both the fixture and which components are probed.
#[derive(Debug, Clone)]
pub struct FidelitySettings {
    pub step: f64,
    /// Components probed per parameter tensor; `None` probes every one.
    pub max_components_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for FidelitySettings {
    fn default() -> Self {
        FidelitySettings {
            step: 1e-5,
            max_components_per_param: Some(6),
            seed: 0,
        }
    }
}

/// One verified case: a labelled program and its worst gradient disagreement.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityCase {
    pub label: String,
    pub program: String,
    pub nodes: usize,
    pub max_rel_err: f64,
    pub components_checked: usize,
    pub worst_param: String,
}

/// Every case of a sweep plus the overall worst relative error.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityReport {
    pub cases: Vec<FidelityCase>,
    pub max_rel_err: f64,
}

struct Fixture {
    vocab: Vocabulary,
    data: Dataset,
    store: ParamStore,
}

/// Small corpus + small randomly initialized model. Biases stay zero but the
/// Gaussian weights keep pre-activations away from ReLU kinks, so central
/// differences are trustworthy at step sizes around 1e-5.
fn fixture(seed: u64) -> Result<Fixture> {
    let cfg = CorpusConfig {
        n_classes: 4,
        n_colors: 4,
        n_sizes: 4,
        n_materials: 4,
        rels_per_type: 4,
        zipf_s: 0.0,
        n_scenes: 8,
        n_questions: 60,
        objects_min: 4,
        objects_max: 5,
        rho: 0.5,
        feature_noise_std: 0.05,
        relation_density: 0.3,
        uniform_family_fraction: 0.3,
        template_mix: BTreeMap::new(),
        seed,
    };
    let corpus = generate(&cfg)?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d1a_77b3);
    register_model(
        &mut store,
        &corpus.vocab,
        &ModelConfig {
            embed_dim: 12,
            map_hidden: 16,
            pair_hidden: 16,
            init_std: 0.2,
        },
        &mut rng,
    )?;
    register_opcal(
        &mut store,
        &corpus.vocab,
        &OpcalConfig {
            type_dim: 8,
            attr_dim: 8,
            concept_dim: 12,
            hidden: 10,
            share_concept_table: false,
            init_std: 0.2,
        },
        &mut rng,
    )?;
    let data = Dataset::from_parts(corpus.scenes, corpus.questions)?;
    Ok(Fixture {
        vocab: corpus.vocab,
        data,
        store,
    })
}

/// Check the summed loss of one or more examples in a single backward pass.
fn check_examples(
    fx: &mut Fixture,
    label: &str,
    examples: &[Example],
    settings: &FidelitySettings,
) -> Result<FidelityCase> {
    let opts = ExecOptions {
        mode: SimMode::Calibrated,
        temperature: Some(1.0),
        binary_threshold: 0.0,
    };
    let scenes: Vec<_> =
        examples.iter().map(|ex| fx.data.scenes[ex.scene].clone()).collect();
    let vocab = &fx.vocab;
    let report = grad_check(
        &mut fx.store,
        |session| {
            let mut total: Option<crate::autodiff::Var> = None;
            for (example, scene) in examples.iter().zip(&scenes) {
                let answer_vars = run_example(session, vocab, example, scene, &opts, true)?;
                let loss = answer_loss(&answer_vars, &example.answer)?;
                total = Some(match total {
                    None => loss,
                    Some(t) => t.add(&loss)?,
                });
            }
            total.ok_or_else(|| Error::Config("no examples to check".into()))
        },
        settings.step,
        settings.max_components_per_param,
        settings.seed,
    )?;
    let program = examples
        .iter()
        .map(|ex| ex.program.serialize(vocab))
        .collect::<Vec<_>>()
        .join(" + ");
    Ok(FidelityCase {
        label: label.to_string(),
        program,
        nodes: examples.iter().map(|ex| ex.program.len()).sum(),
        max_rel_err: report.max_rel_err,
        components_checked: report.components_checked,
        worst_param: report.worst_param,
    })
}

/// A deep program touching ten operation types across 19 nodes, written
/// against the fixture vocabulary.
fn composite_program(vocab: &Vocabulary) -> Result<Program> {
    let class = |i: usize| -> Result<&str> {
        let ids = vocab.candidates(vocab.attr_id("name")?);
        Ok(vocab.concept_name(ids[i % ids.len()]))
    };
    let family = |fam: &str, i: usize| -> Result<&str> {
        let ids = vocab.candidates(vocab.attr_id(fam)?);
        Ok(vocab.concept_name(ids[i % ids.len()]))
    };
    let rel = |rt: RelType, i: usize| -> &str {
        let ids = vocab.relation_candidates(rt);
        vocab.concept_name(ids[i % ids.len()])
    };
    let text = format!(
        "union(\
           exist(filter[size]({sz}, neg; filter[color]({c1}; \
             relate_s[spatial]({r1}; filter[material]({m1}; select[name]({n1})), select[name]({n2}))))), \
           intersect(\
             verify_rel_o[semantic]({r2}; select[name]({n3}), select[name]({n4})), \
             union(\
               exist(relate_ae[color](select[name]({n5}), select[name]({n6}))), \
               verify[color]({c2}; relate_o[spatial]({r3}; select[name]({n7}), select[name]({n8}))))))",
        sz = family("size", 0)?,
        c1 = family("color", 0)?,
        c2 = family("color", 1)?,
        m1 = family("material", 0)?,
        r1 = rel(RelType::Spatial, 0),
        r2 = rel(RelType::Semantic, 0),
        r3 = rel(RelType::Spatial, 1),
        n1 = class(0)?,
        n2 = class(1)?,
        n3 = class(2)?,
        n4 = class(3)?,
        n5 = class(0)?,
        n6 = class(2)?,
        n7 = class(1)?,
        n8 = class(3)?,
    );
    Program::parse(&text, vocab)
}

/// Check every operation type through an emitted question containing it,
/// then one combined backward pass covering all 18 operation types: the
/// composite tree plus a minimal program for each output type the tree
/// cannot legally contain (only one open-answer operation fits per tree).
/// Deterministic in the settings.
pub fn fidelity_sweep(settings: &FidelitySettings) -> Result<FidelityReport> {
    let mut fx = fixture(settings.seed)?;
    let mut cases = Vec::new();

    let mut per_op: Vec<Example> = Vec::new();
    for op in OP_TYPES {
        let example = fx
            .data
            .examples
            .iter()
            .find(|ex| ex.program.nodes().iter().any(|n| n.op == op))
            .cloned()
            .ok_or_else(|| {
                Error::Config(format!("fidelity fixture emitted no program using `{op}`"))
            })?;
        let label = format!("op:{op}");
        cases.push(check_examples(&mut fx, &label, std::slice::from_ref(&example), settings)?);
        per_op.push(example);
    }

    let composite = Example {
        qid: "composite".to_string(),
        program: composite_program(&fx.vocab)?,
        answer: YES.to_string(),
        scene: 0,
    };
    let mut covered: BTreeSet<OpType> =
        composite.program.nodes().iter().map(|n| n.op).collect();
    let mut bundle = vec![composite];
    for example in per_op {
        let ops: BTreeSet<OpType> = example.program.nodes().iter().map(|n| n.op).collect();
        if !ops.is_subset(&covered) {
            covered.extend(&ops);
            bundle.push(example);
        }
    }
    debug_assert_eq!(covered.len(), OP_TYPES.len());
    cases.push(check_examples(&mut fx, "composite", &bundle, settings)?);

    let max_rel_err = cases
        .iter()
        .map(|c| c.max_rel_err)
        .fold(0.0_f64, f64::max);
    Ok(FidelityReport { cases, max_rel_err })
}
