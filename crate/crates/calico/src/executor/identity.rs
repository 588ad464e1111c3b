//! Exactly-representable model parameters for oracle-grade execution.
//!
//! [`identity_store`] builds mapping and pair networks whose outputs are
//! dyadic rationals, so executing against one-hot gold features involves no
//! rounding at all:
//!
//! * Object embedding under family `f` (block of size `k`, a power of four):
//!   gates are zero (sigmoid exactly 0.5), the first layer is `4·diag` over
//!   the block (relu of `2v ≥ 0` is exact), and the second layer maps slot
//!   `j` to `(2 v_j - 1)/√k`. Each block slot ends up exactly `±1/√k` and the
//!   norm is exactly 1, so `l2_normalize` divides by 1.0.
//! * Pair embedding under a relationship type with `m` relationships: one
//!   hidden unit per ordered class pair fires 0/1 exactly; the output layer
//!   writes `±1/√m` into each relationship slot according to the
//!   vocabulary's relationship table.
//! * Concept directions are `α·onehot(slot)` with `α = 0.25·√k`, making the
//!   raw-dot similarity of [`SimMode::Unnormalized`] exactly `±0.25` for
//!   every concept, and cosines `±1/√k`.
//!
//! The embedding space has one slot per concept (`embed_dim = n_concepts`):
//! feature slots for classes and attribute values, appended slots for
//! relationships. Powers of four are required so `1/√k` is a power of two.

use std::collections::BTreeMap;

use crate::autodiff::params::ParamStore;
use crate::concepts::{PARAM_DIRS, PARAM_MAGS, SimMode};
use crate::error::{Error, Result};
use crate::executor::ExecOptions;
use crate::program::{OpType, Program, OP_TYPES};
use crate::scene::{gold_to_features, GoldObject, GoldScene, Scene, BOX_FEATURES, PAIR_GEOMETRY};
use crate::vocab::{RelType, Vocabulary, REL_TYPES};

/// Execution settings under which identity parameters reproduce exact set
/// semantics: raw-dot similarities, hard attention, sign decode at zero.
pub fn identity_exec_options() -> ExecOptions {
    ExecOptions {
        mode: SimMode::Unnormalized,
        temperature: None,
        binary_threshold: 0.0,
    }
}

pub(crate) fn power_of_four(n: usize) -> bool {
    n != 0 && n.is_power_of_two() && n.trailing_zeros().is_multiple_of(2)
}

/// `1/√k` for a power of four (exact: a power of two).
fn inv_sqrt(k: usize) -> f64 {
    1.0 / (k as f64).sqrt()
}

/// Build exactly-representable parameters for `vocab`. Every class count,
/// attribute family size, and relationship group size must be a power of
/// four.
pub fn identity_store(vocab: &Vocabulary) -> Result<ParamStore> {
    let feature_dim = vocab.feature_dim();
    let embed_dim = vocab.n_concepts();
    let n_classes = vocab.n_classes();
    if !power_of_four(n_classes) {
        return Err(Error::Config(format!(
            "identity parameters need a power-of-four class count, got {n_classes}"
        )));
    }

    let mut store = ParamStore::new();

    // Concept directions: α·onehot(concept slot), α = 0.25·√(block size).
    let mut dirs = vec![0.0; embed_dim * vocab.n_concepts()];
    let mut block_of = BTreeMap::new();
    for attr in vocab.attr_ids() {
        let ids = vocab.candidates(attr);
        if !power_of_four(ids.len()) {
            return Err(Error::Config(format!(
                "identity parameters need power-of-four family sizes; `{}` has {}",
                vocab.attr_name(attr),
                ids.len()
            )));
        }
        for &c in ids {
            block_of.insert(c, ids.len());
        }
    }
    for rtype in REL_TYPES {
        let ids = vocab.relation_candidates(rtype);
        if ids.is_empty() {
            continue;
        }
        if !power_of_four(ids.len()) {
            return Err(Error::Config(format!(
                "identity parameters need power-of-four relationship groups; `{}` has {}",
                rtype.name(),
                ids.len()
            )));
        }
        for &c in ids {
            block_of.insert(c, ids.len());
        }
    }
    for concept in 0..vocab.n_concepts() {
        let k = block_of[&concept];
        let alpha = 0.25 * (k as f64).sqrt();
        dirs[concept * embed_dim + concept] = alpha;
    }
    store.insert(PARAM_DIRS, vec![vocab.n_concepts(), embed_dim], dirs)?;
    store.insert_full(PARAM_MAGS, vec![OP_TYPES.len(), vocab.n_concepts()], 1.0)?;

    // Mapping networks: signed block codes (2v - 1)/√k in the block's slots.
    for attr in vocab.attr_ids() {
        let name = vocab.attr_name(attr);
        let block = vocab.candidates(attr);
        let k = block.len();
        let s = inv_sqrt(k);
        store.insert_zeros(&format!("map.{name}.gate"), vec![feature_dim])?;
        let mut w1 = vec![0.0; feature_dim * feature_dim];
        let mut w2 = vec![0.0; embed_dim * feature_dim];
        let mut b2 = vec![0.0; embed_dim];
        for &c in block {
            let slot = vocab.feature_index(c).expect("family member has a feature slot");
            w1[slot * feature_dim + slot] = 4.0;
            w2[slot * feature_dim + slot] = s;
            b2[slot] = -s;
        }
        store.insert(&format!("map.{name}.w1"), vec![feature_dim, feature_dim], w1)?;
        store.insert_zeros(&format!("map.{name}.b1"), vec![feature_dim])?;
        store.insert(&format!("map.{name}.w2"), vec![embed_dim, feature_dim], w2)?;
        store.insert(&format!("map.{name}.b2"), vec![embed_dim], b2)?;
        store.insert_zeros(&format!("map.{name}.spatial"), vec![embed_dim, BOX_FEATURES])?;
    }

    // Pair networks: hidden unit (a, b) fires iff object i has class a and
    // object j has class b; output writes the relationship table as ±1/√m.
    let pair_in = 2 * feature_dim + 2 * BOX_FEATURES + PAIR_GEOMETRY;
    let pair_hidden = n_classes * n_classes;
    for rtype in REL_TYPES {
        let rels = vocab.relation_candidates(rtype);
        if rels.is_empty() {
            continue;
        }
        let name = rtype.name();
        let m = rels.len();
        let s = inv_sqrt(m);
        let mut w1 = vec![0.0; pair_hidden * pair_in];
        let mut b1 = vec![0.0; pair_hidden];
        let mut w2 = vec![0.0; embed_dim * pair_hidden];
        for a in 0..n_classes {
            for b in 0..n_classes {
                let row = a * n_classes + b;
                w1[row * pair_in + a] = 1.0;
                w1[row * pair_in + feature_dim + b] = 1.0;
                b1[row] = -1.0;
                for &rel in rels {
                    let sign = if vocab.relation_holds(rel, a, b) { s } else { -s };
                    w2[rel * pair_hidden + row] = sign;
                }
            }
        }
        store.insert(&format!("pair.{name}.w1"), vec![pair_hidden, pair_in], w1)?;
        store.insert(&format!("pair.{name}.b1"), vec![pair_hidden], b1)?;
        store.insert(&format!("pair.{name}.w2"), vec![embed_dim, pair_hidden], w2)?;
        store.insert_zeros(&format!("pair.{name}.b2"), vec![embed_dim])?;
    }
    Ok(store)
}

/// Set one per-(operation, concept) magnitude in a store.
pub fn set_magnitude(store: &mut ParamStore, vocab: &Vocabulary, op: OpType, concept: &str, value: f64) -> Result<()> {
    let c = vocab.concept_id(concept)?;
    let mags = store.get_mut(PARAM_MAGS)?;
    mags.data[op.index() * vocab.n_concepts() + c] = value;
    Ok(())
}

/// A minimal scenario where a confident select overrides a negated filter:
/// the program asks for a non-black bag in a scene whose only bag is black.
/// With the boosted select magnitude the merged score is exactly +0.0625
/// ("yes", wrong); doubling the filter node's own result flips it to exactly
/// −0.0625 ("no", the set-semantics answer).
pub struct OverrideShowcase {
    pub vocab: Vocabulary,
    pub store: ParamStore,
    /// Symbolic form of the scene (the fixture's ground truth).
    pub gold: GoldScene,
    /// Feature form of the same scene.
    pub scene: Scene,
    pub program: Program,
    /// Index of the filter node (for the result-scaling hook).
    pub filter_node: usize,
    /// Execution settings: calibrated similarities, hard attention.
    pub options: ExecOptions,
}

/// Build the override showcase. Sixteen classes and sixteen colors keep
/// every cosine at exactly ±0.25; the select magnitude for "bag" is 1.5.
pub fn override_showcase() -> Result<OverrideShowcase> {
    let classes = [
        "bag", "box", "girl", "boy", "cat", "dog", "car", "bus", "cup", "hat", "bird", "fish",
        "tree", "lamp", "sofa", "desk",
    ];
    let colors = [
        "black", "white", "red", "blue", "green", "yellow", "brown", "gray", "pink", "purple",
        "orange", "cyan", "beige", "gold", "silver", "teal",
    ];
    let vocab = Vocabulary::new(
        classes.iter().map(|s| s.to_string()).collect(),
        vec![(
            "color".to_string(),
            colors.iter().map(|s| s.to_string()).collect(),
        )],
        Vec::new(),
        0,
        0.25,
    )?;
    let mut store = identity_store(&vocab)?;
    set_magnitude(&mut store, &vocab, OpType::Select, "bag", 1.5)?;

    let gold = GoldScene {
        id: "override-showcase".to_string(),
        objects: vec![
            GoldObject {
                bbox: [0.1, 0.1, 0.4, 0.5],
                class: "bag".to_string(),
                attributes: BTreeMap::from([(
                    "color".to_string(),
                    vec!["black".to_string()],
                )]),
            },
            GoldObject {
                bbox: [0.5, 0.2, 0.9, 0.7],
                class: "box".to_string(),
                attributes: BTreeMap::from([(
                    "color".to_string(),
                    vec!["black".to_string()],
                )]),
            },
        ],
        relations: Vec::new(),
    };
    let scene = gold_to_features(&gold, &vocab)?;
    let program = Program::parse(
        "exist(filter[color](black, neg; select[name](bag)))",
        &vocab,
    )?;
    Ok(OverrideShowcase {
        vocab,
        store,
        gold,
        scene,
        program,
        filter_node: 1,
        options: ExecOptions {
            mode: SimMode::Calibrated,
            temperature: None,
            binary_threshold: 0.0,
        },
    })
}

/// Convenience: does `rtype` appear in the vocabulary with any members?
pub fn has_relations(vocab: &Vocabulary, rtype: RelType) -> bool {
    !vocab.relation_candidates(rtype).is_empty()
}
