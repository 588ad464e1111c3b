//! Seeded synthetic corpus generation with an exact symbolic answer oracle.
//!
//! A corpus is a vocabulary (drawn from curated word lists), gold scenes
//! whose relationships come from the vocabulary's seeded truth table, feature
//! scenes derived from the gold labels (optionally noised), and questions
//! built from templates that together cover every operation type. Concept
//! draws follow a configurable Zipf law (`s = 0` is uniform, larger `s` is
//! long-tailed). With probability ρ a question is over-specified: it carries
//! redundant filter/relate operations whose removal provably leaves the
//! oracle answer unchanged.
//!
//! Every emitted question is replay-verified: the program is executed on the
//! clean feature scene with the exactly-representable reference parameters
//! and first-max attention, and must reproduce the oracle answer.

pub mod words;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::params::{ParamStore, Session};
use crate::error::{Error, Result};
use crate::executor::identity::{
    identity_exec_options, identity_store, override_showcase, power_of_four,
};
use crate::executor::Executor;
use crate::program::{OpType, Program, Question, OP_TYPES};
use crate::scene::{gold_to_features, GoldObject, GoldScene, Relation, Scene};
use crate::vocab::{AttrId, ConceptId, RelType, Vocabulary, NO, REL_TYPES, YES};

/// Answer recorded when an open question has no defined referent/value.
pub const NONE_ANSWER: &str = "none";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Knobs for corpus generation. Symbol-group sizes must be powers of four so
/// the generated corpora replay exactly under the reference parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_classes: usize,
    pub n_colors: usize,
    pub n_sizes: usize,
    pub n_materials: usize,
    /// Relationship names per relationship-type group.
    pub rels_per_type: usize,
    /// Zipf exponent for concept draws; 0 = uniform, larger = long-tailed.
    pub zipf_s: f64,
    pub n_scenes: usize,
    pub n_questions: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Probability that a question is over-specified with redundant
    /// operations.
    pub rho: f64,
    /// Gaussian noise added to emitted feature scenes (gold stays clean).
    pub feature_noise_std: f64,
    /// Density of the seeded relationship truth table.
    pub relation_density: f64,
    /// Fraction of scenes where one attribute family is held constant
    /// (these scenes host the same-attribute questions).
    pub uniform_family_fraction: f64,
    /// Template name → copies per cycle; empty = built-in default mix.
    pub template_mix: BTreeMap<String, usize>,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_classes: 16,
            n_colors: 16,
            n_sizes: 4,
            n_materials: 4,
            rels_per_type: 4,
            zipf_s: 1.0,
            n_scenes: 256,
            n_questions: 1000,
            objects_min: 4,
            objects_max: 7,
            rho: 0.3,
            feature_noise_std: 0.0,
            relation_density: 0.25,
            uniform_family_fraction: 0.3,
            template_mix: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let groups = [
            ("classes", self.n_classes, words::NOUNS.len()),
            ("colors", self.n_colors, words::COLORS.len()),
            ("sizes", self.n_sizes, words::SIZES.len()),
            ("materials", self.n_materials, words::MATERIALS.len()),
            ("relations per type", self.rels_per_type, words::SPATIAL_RELS.len()),
        ];
        for (what, n, cap) in groups {
            if !power_of_four(n) {
                return Err(Error::Config(format!(
                    "{what}: {n} is not a power of four"
                )));
            }
            if n > cap {
                return Err(Error::Config(format!(
                    "{what}: {n} exceeds the word list ({cap})"
                )));
            }
        }
        if self.objects_min == 0 || self.objects_min > self.objects_max {
            return Err(Error::Config(format!(
                "invalid objects-per-scene range {}..={}",
                self.objects_min, self.objects_max
            )));
        }
        if self.zipf_s < 0.0 {
            return Err(Error::Config(format!(
                "Zipf exponent {} must be nonnegative",
                self.zipf_s
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("ρ = {} outside [0, 1]", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.uniform_family_fraction) {
            return Err(Error::Config("uniform-family fraction outside [0, 1]".into()));
        }
        if self.feature_noise_std < 0.0 {
            return Err(Error::Config("feature noise must be nonnegative".into()));
        }
        if self.n_scenes == 0 {
            return Err(Error::Config("need at least one scene".into()));
        }
        self.cycle()?;
        Ok(())
    }

    /// The template cycle: templates repeated per their weight, interleaved
    /// round-robin so any window of one cycle length sees every template.
    pub fn cycle(&self) -> Result<Vec<TemplateKind>> {
        let mix: Vec<(TemplateKind, usize)> = if self.template_mix.is_empty() {
            DEFAULT_MIX.to_vec()
        } else {
            let mut known: BTreeMap<&str, TemplateKind> =
                DEFAULT_MIX.iter().map(|(k, _)| (k.name(), *k)).collect();
            let mut mix = Vec::new();
            for (name, &copies) in &self.template_mix {
                let kind = known.remove(name.as_str()).ok_or_else(|| {
                    Error::Config(format!("unknown question template `{name}`"))
                })?;
                mix.push((kind, copies));
            }
            mix
        };
        let total: usize = mix.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return Err(Error::Config("template mix selects no questions".into()));
        }
        if total > 200 {
            return Err(Error::Config(format!(
                "template cycle of {total} breaks the 200-question coverage window"
            )));
        }
        let max_w = mix.iter().map(|(_, w)| *w).max().unwrap_or(0);
        let mut cycle = Vec::with_capacity(total);
        for round in 0..max_w {
            for &(kind, w) in &mix {
                if round < w {
                    cycle.push(kind);
                }
            }
        }
        Ok(cycle)
    }
}

/// Question template families. Each covers a fixed root operation; selects
/// appear everywhere and filters/relates also enter through
/// over-specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    ExistSelect,
    ExistFilter,
    ExistRelateS,
    ExistRelateO,
    ExistRelateAe,
    QueryAttr,
    QueryRelS,
    QueryRelO,
    VerifyAttr,
    VerifyRelS,
    VerifyRelO,
    ChooseAttr,
    SameAttr,
    QueryAeAttr,
    Common,
    IntersectVerify,
    UnionVerify,
}

impl TemplateKind {
    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::ExistSelect => "exist_select",
            TemplateKind::ExistFilter => "exist_filter",
            TemplateKind::ExistRelateS => "exist_relate_s",
            TemplateKind::ExistRelateO => "exist_relate_o",
            TemplateKind::ExistRelateAe => "exist_relate_ae",
            TemplateKind::QueryAttr => "query_attr",
            TemplateKind::QueryRelS => "query_rel_s",
            TemplateKind::QueryRelO => "query_rel_o",
            TemplateKind::VerifyAttr => "verify_attr",
            TemplateKind::VerifyRelS => "verify_rel_s",
            TemplateKind::VerifyRelO => "verify_rel_o",
            TemplateKind::ChooseAttr => "choose_attr",
            TemplateKind::SameAttr => "same_attr",
            TemplateKind::QueryAeAttr => "query_ae_attr",
            TemplateKind::Common => "common",
            TemplateKind::IntersectVerify => "intersect_verify",
            TemplateKind::UnionVerify => "union_verify",
        }
    }
}

/// Default copies per cycle (26 questions per cycle, every operation type
/// covered well inside the 200-question window).
pub const DEFAULT_MIX: [(TemplateKind, usize); 17] = [
    (TemplateKind::ExistSelect, 2),
    (TemplateKind::ExistFilter, 3),
    (TemplateKind::ExistRelateS, 1),
    (TemplateKind::ExistRelateO, 1),
    (TemplateKind::ExistRelateAe, 1),
    (TemplateKind::QueryAttr, 3),
    (TemplateKind::QueryRelS, 1),
    (TemplateKind::QueryRelO, 1),
    (TemplateKind::VerifyAttr, 3),
    (TemplateKind::VerifyRelS, 1),
    (TemplateKind::VerifyRelO, 1),
    (TemplateKind::ChooseAttr, 2),
    (TemplateKind::SameAttr, 1),
    (TemplateKind::QueryAeAttr, 2),
    (TemplateKind::Common, 1),
    (TemplateKind::IntersectVerify, 1),
    (TemplateKind::UnionVerify, 1),
];

// ---------------------------------------------------------------------------
// Zipf sampling
// ---------------------------------------------------------------------------

/// Zipf distribution over ranks `0..n`: p(r) ∝ 1/(r+1)^s.
#[derive(Debug, Clone)]
pub struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("Zipf support must be non-empty".into()));
        }
        if s < 0.0 || !s.is_finite() {
            return Err(Error::Config(format!("Zipf exponent {s} must be finite and ≥ 0")));
        }
        let mut cumulative = Vec::with_capacity(n);
        let mut total = 0.0;
        for r in 0..n {
            total += 1.0 / ((r + 1) as f64).powf(s);
            cumulative.push(total);
        }
        Ok(Zipf { cumulative })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= u)
    }

    /// Exact probabilities per rank.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = *self.cumulative.last().expect("non-empty");
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = (c - prev) / total;
                prev = c;
                p
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Vocabulary and scenes
// ---------------------------------------------------------------------------

/// Build a vocabulary from the curated word lists per the config sizes.
pub fn build_vocabulary(cfg: &CorpusConfig) -> Result<Vocabulary> {
    let take = |list: &[&str], n: usize| -> Vec<String> {
        list[..n].iter().map(|s| s.to_string()).collect()
    };
    Vocabulary::new(
        take(&words::NOUNS, cfg.n_classes),
        vec![
            ("color".to_string(), take(&words::COLORS, cfg.n_colors)),
            ("size".to_string(), take(&words::SIZES, cfg.n_sizes)),
            ("material".to_string(), take(&words::MATERIALS, cfg.n_materials)),
        ],
        vec![
            (RelType::Spatial, take(&words::SPATIAL_RELS, cfg.rels_per_type)),
            (RelType::Semantic, take(&words::SEMANTIC_RELS, cfg.rels_per_type)),
            (
                RelType::SpatialSemantic,
                take(&words::SPATIAL_SEMANTIC_RELS, cfg.rels_per_type),
            ),
        ],
        cfg.seed,
        cfg.relation_density,
    )
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generate scene `index` from its derived seed (scenes are independent).
fn generate_scene(cfg: &CorpusConfig, vocab: &Vocabulary, index: usize) -> Result<GoldScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ (index as u64 + 1)));
    let n = rng.gen_range(cfg.objects_min..=cfg.objects_max);

    let class_zipf = Zipf::new(cfg.n_classes, cfg.zipf_s)?;
    let family_zipfs: Vec<(AttrId, Zipf)> = vocab
        .attr_ids()
        .skip(1)
        .map(|aid| Ok((aid, Zipf::new(vocab.candidates(aid).len(), cfg.zipf_s)?)))
        .collect::<Result<_>>()?;

    // Optionally hold one family constant across the scene.
    let uniform: Option<(AttrId, ConceptId)> = if rng.gen_bool(cfg.uniform_family_fraction) {
        let (aid, zipf) = &family_zipfs[rng.gen_range(0..family_zipfs.len())];
        let value = vocab.candidates(*aid)[zipf.sample(&mut rng)];
        Some((*aid, value))
    } else {
        None
    };

    let mut objects = Vec::with_capacity(n);
    for _ in 0..n {
        let class = vocab.candidates(0)[class_zipf.sample(&mut rng)];
        let mut attributes = BTreeMap::new();
        for (aid, zipf) in &family_zipfs {
            let value = match uniform {
                Some((ua, uv)) if ua == *aid => uv,
                _ => vocab.candidates(*aid)[zipf.sample(&mut rng)],
            };
            attributes.insert(
                vocab.attr_name(*aid).to_string(),
                vec![vocab.concept_name(value).to_string()],
            );
        }
        let x1 = rng.gen_range(0.05..0.75);
        let y1 = rng.gen_range(0.05..0.75);
        let w = rng.gen_range(0.08..0.2);
        let h = rng.gen_range(0.08..0.2);
        objects.push(GoldObject {
            bbox: [x1, y1, x1 + w, y1 + h],
            class: vocab.concept_name(class).to_string(),
            attributes,
        });
    }

    // Relationships follow the vocabulary's seeded class-level truth table.
    let mut relations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ci = vocab.concept_id(&objects[i].class)?;
            let cj = vocab.concept_id(&objects[j].class)?;
            for (_, rel) in vocab.relations() {
                if vocab.relation_holds(rel, ci, cj) {
                    relations.push(Relation {
                        s: i,
                        o: j,
                        rel: vocab.concept_name(rel).to_string(),
                    });
                }
            }
        }
    }

    Ok(GoldScene {
        id: format!("s{index:06}"),
        objects,
        relations,
    })
}

// ---------------------------------------------------------------------------
// Scene index (label lookups for oracle and templates)
// ---------------------------------------------------------------------------

struct SceneIndex {
    /// Per object: class id plus all attribute-value ids.
    labels: Vec<BTreeSet<ConceptId>>,
    class_of: Vec<ConceptId>,
    /// (class, first object index, count), ordered by first appearance.
    present: Vec<(ConceptId, usize, usize)>,
    absent: Vec<ConceptId>,
    /// (subject index, object index, relationship id).
    rels: BTreeSet<(usize, usize, ConceptId)>,
}

impl SceneIndex {
    fn build(gold: &GoldScene, vocab: &Vocabulary) -> Result<Self> {
        let mut labels = Vec::with_capacity(gold.objects.len());
        let mut class_of = Vec::with_capacity(gold.objects.len());
        let mut present: Vec<(ConceptId, usize, usize)> = Vec::new();
        for (i, obj) in gold.objects.iter().enumerate() {
            let class = vocab.concept_id(&obj.class)?;
            let mut set = BTreeSet::new();
            set.insert(class);
            for values in obj.attributes.values() {
                for v in values {
                    set.insert(vocab.concept_id(v)?);
                }
            }
            labels.push(set);
            class_of.push(class);
            match present.iter_mut().find(|(c, _, _)| *c == class) {
                Some((_, _, count)) => *count += 1,
                None => present.push((class, i, 1)),
            }
        }
        let present_set: BTreeSet<ConceptId> = present.iter().map(|(c, _, _)| *c).collect();
        let absent = vocab
            .candidates(0)
            .iter()
            .copied()
            .filter(|c| !present_set.contains(c))
            .collect();
        let mut rels = BTreeSet::new();
        for r in &gold.relations {
            rels.insert((r.s, r.o, vocab.concept_id(&r.rel)?));
        }
        Ok(SceneIndex {
            labels,
            class_of,
            present,
            absent,
            rels,
        })
    }

    fn n_objects(&self) -> usize {
        self.labels.len()
    }

    fn has(&self, i: usize, concept: ConceptId) -> bool {
        self.labels[i].contains(&concept)
    }

    /// The object's values under one family (usually a single id).
    fn values_of(&self, i: usize, attr: AttrId, vocab: &Vocabulary) -> Vec<ConceptId> {
        vocab
            .candidates(attr)
            .iter()
            .copied()
            .filter(|c| self.has(i, *c))
            .collect()
    }

    /// First instance of a class, if present.
    fn first(&self, class: ConceptId) -> Option<usize> {
        self.present
            .iter()
            .find(|(c, _, _)| *c == class)
            .map(|(_, i, _)| *i)
    }

    /// Objects of a class, in scene order.
    fn instances(&self, class: ConceptId) -> Vec<usize> {
        (0..self.n_objects())
            .filter(|&i| self.class_of[i] == class)
            .collect()
    }

    /// A value under `attr` carried by every instance of `class` (None when
    /// the class is absent or its instances disagree).
    fn uniform_value(
        &self,
        class: ConceptId,
        attr: AttrId,
        vocab: &Vocabulary,
    ) -> Option<ConceptId> {
        let inst = self.instances(class);
        let (&first, rest) = inst.split_first()?;
        self.values_of(first, attr, vocab)
            .into_iter()
            .find(|&v| rest.iter().all(|&i| self.has(i, v)))
    }

    /// Every value under `attr` carried by any instance of `class`.
    fn value_union(
        &self,
        class: ConceptId,
        attr: AttrId,
        vocab: &Vocabulary,
    ) -> BTreeSet<ConceptId> {
        self.instances(class)
            .into_iter()
            .flat_map(|i| self.values_of(i, attr, vocab))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Symbolic oracle
// ---------------------------------------------------------------------------

enum OracleOut {
    Set(BTreeSet<usize>),
    Text(String),
    Bool(bool),
}

/// Exact set-semantics answer for a program over a gold scene: select is a
/// membership set, filter intersects (or subtracts under neg), relate is the
/// relational image through the side set, boolean ops combine scalar
/// children, and query-type ops read labels shared by every member of a set.
/// Every operation is a function of sets — never of object order — so the
/// answer is invariant under object reordering. Open questions with no
/// uniquely defined value answer "none".
pub fn oracle_answer(gold: &GoldScene, program: &Program, vocab: &Vocabulary) -> Result<String> {
    let index = SceneIndex::build(gold, vocab)?;
    oracle_with_index(&index, program, vocab)
}

fn oracle_with_index(
    scene: &SceneIndex,
    program: &Program,
    vocab: &Vocabulary,
) -> Result<String> {
    let n = program.len();
    let mut outputs: Vec<Option<OracleOut>> = (0..n).map(|_| None).collect();

    for idx in (0..n).rev() {
        let node = &program.nodes()[idx];
        let set_of = |outputs: &Vec<Option<OracleOut>>, d: usize| -> BTreeSet<usize> {
            match &outputs[d] {
                Some(OracleOut::Set(s)) => s.clone(),
                _ => unreachable!("validated program wiring"),
            }
        };
        let bool_of = |outputs: &Vec<Option<OracleOut>>, d: usize| -> bool {
            match &outputs[d] {
                Some(OracleOut::Bool(b)) => *b,
                _ => unreachable!("validated program wiring"),
            }
        };
        // Values under one family across every member of a set output.
        let values_of_set =
            |outputs: &Vec<Option<OracleOut>>, d: usize, attr: AttrId| -> BTreeSet<ConceptId> {
                match &outputs[d] {
                    Some(OracleOut::Set(s)) => s
                        .iter()
                        .flat_map(|&i| scene.values_of(i, attr, vocab))
                        .collect(),
                    _ => unreachable!("validated program wiring"),
                }
            };

        let out = match node.op {
            OpType::Select => {
                let c = node.concept.expect("validated");
                OracleOut::Set(
                    (0..scene.n_objects()).filter(|&i| scene.has(i, c)).collect(),
                )
            }
            OpType::Filter => {
                let c = node.concept.expect("validated");
                let dep = set_of(&outputs, node.deps[0]);
                OracleOut::Set(
                    dep.into_iter()
                        .filter(|&i| scene.has(i, c) != node.neg)
                        .collect(),
                )
            }
            OpType::RelateS | OpType::RelateO => {
                let rel = node.concept.expect("validated");
                let d_in = set_of(&outputs, node.deps[0]);
                let side = set_of(&outputs, node.deps[1]);
                OracleOut::Set(
                    d_in.into_iter()
                        .filter(|&i| {
                            side.iter().any(|&j| {
                                if node.op == OpType::RelateS {
                                    scene.rels.contains(&(j, i, rel))
                                } else {
                                    scene.rels.contains(&(i, j, rel))
                                }
                            })
                        })
                        .collect(),
                )
            }
            OpType::RelateAe => {
                let attr = node.attr.expect("validated");
                let d_in = set_of(&outputs, node.deps[0]);
                let side_values = values_of_set(&outputs, node.deps[1], attr);
                OracleOut::Set(
                    d_in.into_iter()
                        .filter(|&i| {
                            scene
                                .values_of(i, attr, vocab)
                                .iter()
                                .any(|v| side_values.contains(v))
                        })
                        .collect(),
                )
            }
            OpType::Query => {
                let attr = node.attr.expect("validated");
                let members = set_of(&outputs, node.deps[0]);
                let values = values_of_set(&outputs, node.deps[0], attr);
                // Defined only when a single value covers every member.
                let unique = values
                    .iter()
                    .next()
                    .copied()
                    .filter(|_| values.len() == 1 && !members.is_empty())
                    .filter(|&v| members.iter().all(|&i| scene.has(i, v)));
                OracleOut::Text(match unique {
                    Some(v) => vocab.concept_name(v).to_string(),
                    None => NONE_ANSWER.to_string(),
                })
            }
            OpType::QueryRelS | OpType::QueryRelO => {
                let rtype = node.rtype.expect("validated");
                let (first, second) = if node.op == OpType::QueryRelS {
                    (node.deps[0], node.deps[1])
                } else {
                    (node.deps[1], node.deps[0])
                };
                let subj = set_of(&outputs, first);
                let obj = set_of(&outputs, second);
                // Lowest-indexed candidate relationship held by any pair.
                let rel = vocab.relation_candidates(rtype).iter().copied().find(|&rel| {
                    subj.iter()
                        .any(|&i| obj.iter().any(|&j| scene.rels.contains(&(i, j, rel))))
                });
                OracleOut::Text(match rel {
                    Some(r) => vocab.concept_name(r).to_string(),
                    None => NONE_ANSWER.to_string(),
                })
            }
            OpType::Verify => {
                let c = node.concept.expect("validated");
                let members = set_of(&outputs, node.deps[0]);
                OracleOut::Bool(
                    !members.is_empty() && members.iter().all(|&i| scene.has(i, c)),
                )
            }
            OpType::VerifyRelS | OpType::VerifyRelO => {
                let rel = node.concept.expect("validated");
                let (first, second) = if node.op == OpType::VerifyRelS {
                    (node.deps[0], node.deps[1])
                } else {
                    (node.deps[1], node.deps[0])
                };
                let subj = set_of(&outputs, first);
                let obj = set_of(&outputs, second);
                OracleOut::Bool(
                    subj.iter()
                        .any(|&i| obj.iter().any(|&j| scene.rels.contains(&(i, j, rel)))),
                )
            }
            OpType::Choose => {
                let c = node.concept.expect("validated");
                let branch_true = |d: usize| -> bool {
                    let members = set_of(&outputs, d);
                    !members.is_empty() && members.iter().all(|&i| scene.has(i, c))
                };
                let first_true = branch_true(node.deps[0]);
                let second_true = branch_true(node.deps[1]);
                // Ties resolve to the first branch, mirroring first-max
                // decoding.
                let branch = if !first_true && second_true {
                    node.deps[1]
                } else {
                    node.deps[0]
                };
                OracleOut::Text(base_select_name(program, branch, vocab)?)
            }
            OpType::Same => {
                let attr = node.attr.expect("validated");
                let set = set_of(&outputs, node.deps[0]);
                let mut members = set.iter();
                let all_same = match members.next() {
                    Some(&first) => {
                        let values = scene.values_of(first, attr, vocab);
                        members.all(|&i| values.iter().any(|v| scene.has(i, *v)))
                            && !values.is_empty()
                    }
                    None => true,
                };
                OracleOut::Bool(all_same)
            }
            OpType::QueryAe => {
                let attr = node.attr.expect("validated");
                let v0 = values_of_set(&outputs, node.deps[0], attr);
                let v1 = values_of_set(&outputs, node.deps[1], attr);
                OracleOut::Bool(!v0.is_empty() && v0 == v1)
            }
            OpType::Common => {
                // First family (name included) where both sets agree on a
                // single value.
                let fam = vocab.attr_ids().find(|&attr| {
                    let v0 = values_of_set(&outputs, node.deps[0], attr);
                    let v1 = values_of_set(&outputs, node.deps[1], attr);
                    v0.len() == 1 && v0 == v1
                });
                OracleOut::Text(match fam {
                    Some(attr) => vocab.attr_name(attr).to_string(),
                    None => NONE_ANSWER.to_string(),
                })
            }
            OpType::Exist => {
                OracleOut::Bool(!set_of(&outputs, node.deps[0]).is_empty())
            }
            OpType::Intersect => OracleOut::Bool(
                bool_of(&outputs, node.deps[0]) && bool_of(&outputs, node.deps[1]),
            ),
            OpType::Union => OracleOut::Bool(
                bool_of(&outputs, node.deps[0]) || bool_of(&outputs, node.deps[1]),
            ),
        };
        outputs[idx] = Some(out);
    }

    match outputs.into_iter().next().flatten().expect("root evaluated") {
        OracleOut::Text(t) => Ok(t),
        OracleOut::Bool(b) => Ok(if b { YES } else { NO }.to_string()),
        OracleOut::Set(_) => Err(Error::InvalidProgram(
            "root produced an object distribution, not an answer".into(),
        )),
    }
}

/// Name of the base select reached by following first dependencies.
fn base_select_name(program: &Program, mut node: usize, vocab: &Vocabulary) -> Result<String> {
    loop {
        let n = &program.nodes()[node];
        if n.op == OpType::Select {
            let c = n.concept.ok_or_else(|| {
                Error::InvalidProgram(format!("select node {node} without concept"))
            })?;
            return Ok(vocab.concept_name(c).to_string());
        }
        node = *n.deps.first().ok_or_else(|| {
            Error::InvalidProgram(format!(
                "node {node} has no dependencies on the way to a base select"
            ))
        })?;
    }
}

// ---------------------------------------------------------------------------
// Program construction (template ASTs)
// ---------------------------------------------------------------------------

/// Mutable program tree used while assembling a question.
#[derive(Debug, Clone)]
struct Ast {
    op: OpType,
    attr: Option<AttrId>,
    concept: Option<ConceptId>,
    rtype: Option<RelType>,
    neg: bool,
    kids: Vec<Ast>,
}

impl Ast {
    fn new(op: OpType) -> Self {
        Ast {
            op,
            attr: None,
            concept: None,
            rtype: None,
            neg: false,
            kids: Vec::new(),
        }
    }

    fn select(class: ConceptId) -> Self {
        let mut a = Ast::new(OpType::Select);
        a.attr = Some(0);
        a.concept = Some(class);
        a
    }

    fn filter(attr: AttrId, concept: ConceptId, neg: bool, inner: Ast) -> Self {
        let mut a = Ast::new(OpType::Filter);
        a.attr = Some(attr);
        a.concept = Some(concept);
        a.neg = neg;
        a.kids = vec![inner];
        a
    }

    fn relate(op: OpType, rtype: RelType, rel: ConceptId, d_in: Ast, side: Ast) -> Self {
        let mut a = Ast::new(op);
        a.rtype = Some(rtype);
        a.concept = Some(rel);
        a.kids = vec![d_in, side];
        a
    }

    /// Canonical text form (matches the parser grammar exactly).
    fn text(&self, vocab: &Vocabulary) -> String {
        let mut s = String::new();
        self.write(vocab, &mut s);
        s
    }

    fn write(&self, vocab: &Vocabulary, out: &mut String) {
        out.push_str(self.op.name());
        if let Some(rt) = self.rtype {
            out.push('[');
            out.push_str(rt.name());
            out.push(']');
        } else if let Some(a) = self.attr {
            out.push('[');
            out.push_str(vocab.attr_name(a));
            out.push(']');
        }
        out.push('(');
        let mut need_sep = false;
        if let Some(c) = self.concept {
            out.push_str(vocab.concept_name(c));
            if self.neg {
                out.push_str(", neg");
            }
            need_sep = true;
        }
        for (k, kid) in self.kids.iter().enumerate() {
            if need_sep {
                out.push_str("; ");
                need_sep = false;
            } else if k > 0 {
                out.push_str(", ");
            }
            kid.write(vocab, out);
        }
        out.push(')');
    }

    /// Paths (child-index sequences) of every select leaf.
    fn select_paths(&self) -> Vec<Vec<usize>> {
        let mut paths = Vec::new();
        let mut stack = vec![(self, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if node.op == OpType::Select {
                paths.push(path.clone());
            }
            for (k, kid) in node.kids.iter().enumerate() {
                let mut p = path.clone();
                p.push(k);
                stack.push((kid, p));
            }
        }
        paths
    }

    fn at_mut(&mut self, path: &[usize]) -> &mut Ast {
        let mut node = self;
        for &k in path {
            node = &mut node.kids[k];
        }
        node
    }

    fn at(&self, path: &[usize]) -> &Ast {
        let mut node = self;
        for &k in path {
            node = &node.kids[k];
        }
        node
    }
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

struct Draft {
    ast: Ast,
    answer: String,
}

/// Non-name attribute families.
fn families(vocab: &Vocabulary) -> Vec<AttrId> {
    vocab.attr_ids().skip(1).collect()
}

fn shuffled<T: Clone, R: Rng>(items: &[T], rng: &mut R) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}

/// Relationship ids grouped with their type, shuffled.
fn shuffled_rels<R: Rng>(vocab: &Vocabulary, rng: &mut R) -> Vec<(RelType, ConceptId)> {
    let mut rels: Vec<(RelType, ConceptId)> = vocab.relations().collect();
    rels.shuffle(rng);
    rels
}

fn build_template<R: Rng>(
    kind: TemplateKind,
    scene: &SceneIndex,
    vocab: &Vocabulary,
    rng: &mut R,
    want_yes: bool,
) -> Option<Draft> {
    let yes_no = |b: bool| if b { YES } else { NO }.to_string();
    let present = shuffled(&scene.present, rng);
    match kind {
        TemplateKind::ExistSelect => {
            let class = if want_yes {
                present.first()?.0
            } else {
                *shuffled(&scene.absent, rng).first()?
            };
            let mut exist = Ast::new(OpType::Exist);
            exist.kids = vec![Ast::select(class)];
            Some(Draft {
                ast: exist,
                answer: yes_no(want_yes),
            })
        }
        TemplateKind::ExistFilter => {
            let negated = rng.gen_bool(0.25);
            let fams = shuffled(&families(vocab), rng);
            let mut found: Option<(ConceptId, AttrId, ConceptId, bool)> = None;
            'search: for &(class, first, _) in &present {
                for &fam in &fams {
                    let instances: Vec<usize> = (0..scene.n_objects())
                        .filter(|&i| scene.class_of[i] == class)
                        .collect();
                    let member_values: BTreeSet<ConceptId> = instances
                        .iter()
                        .flat_map(|&i| scene.values_of(i, fam, vocab))
                        .collect();
                    let candidates = vocab.candidates(fam);
                    let value = if !negated {
                        if want_yes {
                            // A value the first instance carries: the filter
                            // keeps it, so it is removal-redundant.
                            scene.values_of(first, fam, vocab).first().copied()
                        } else {
                            // Present class, but no instance carries the
                            // value: the filter does the work.
                            shuffled(candidates, rng)
                                .into_iter()
                                .find(|v| !member_values.contains(v))
                        }
                    } else if want_yes {
                        // Some instance lacks the value.
                        shuffled(candidates, rng).into_iter().find(|v| {
                            instances.iter().any(|&i| !scene.has(i, *v))
                        })
                    } else {
                        // Every instance carries the value, so the negated
                        // filter empties the set.
                        let common = instances
                            .iter()
                            .map(|&i| {
                                scene
                                    .values_of(i, fam, vocab)
                                    .into_iter()
                                    .collect::<BTreeSet<_>>()
                            })
                            .reduce(|a, b| a.intersection(&b).copied().collect())
                            .unwrap_or_default();
                        common.into_iter().next()
                    };
                    if let Some(v) = value {
                        found = Some((class, fam, v, negated));
                        break 'search;
                    }
                }
            }
            // A fully redundant fallback for "no": an absent class makes any
            // filter a no-op. Taken half the time so load-bearing filters
            // stay a strict minority of the corpus.
            let use_absent_fallback =
                !want_yes && (found.is_none() || (!negated && rng.gen_bool(0.5)));
            let (class, fam, v, neg) = if use_absent_fallback && !scene.absent.is_empty() {
                let class = *shuffled(&scene.absent, rng).first()?;
                let fam = *fams.first()?;
                let v = *shuffled(vocab.candidates(fam), rng).first()?;
                (class, fam, v, negated)
            } else {
                found?
            };
            let mut exist = Ast::new(OpType::Exist);
            exist.kids = vec![Ast::filter(fam, v, neg, Ast::select(class))];
            Some(Draft {
                ast: exist,
                answer: yes_no(want_yes),
            })
        }
        TemplateKind::ExistRelateS | TemplateKind::ExistRelateO => {
            let s_side = kind == TemplateKind::ExistRelateS;
            for (rtype, rel) in shuffled_rels(vocab, rng) {
                for &(c_in, _, _) in &present {
                    for &(c_side, _, _) in &present {
                        if c_in == c_side {
                            continue;
                        }
                        let ins = scene.instances(c_in);
                        let sides = scene.instances(c_side);
                        let truth = ins.iter().any(|&i| {
                            sides.iter().any(|&j| {
                                if s_side {
                                    scene.rels.contains(&(j, i, rel))
                                } else {
                                    scene.rels.contains(&(i, j, rel))
                                }
                            })
                        });
                        if truth == want_yes {
                            let op = if s_side { OpType::RelateS } else { OpType::RelateO };
                            let mut exist = Ast::new(OpType::Exist);
                            exist.kids = vec![Ast::relate(
                                op,
                                rtype,
                                rel,
                                Ast::select(c_in),
                                Ast::select(c_side),
                            )];
                            return Some(Draft {
                                ast: exist,
                                answer: yes_no(want_yes),
                            });
                        }
                    }
                }
            }
            None
        }
        TemplateKind::ExistRelateAe => {
            // Emitted only with answer "yes": soft attribute-equality masks
            // never exactly exclude mismatched members, so negative cases
            // would not replay. The side class is a single object so its
            // family value is unambiguous.
            for &fam in &shuffled(&families(vocab), rng) {
                for &(c_in, _, _) in &present {
                    for &(c_side, side_first, side_count) in &present {
                        if c_in == c_side || side_count != 1 {
                            continue;
                        }
                        let side_values = scene.values_of(side_first, fam, vocab);
                        let truth = scene
                            .instances(c_in)
                            .iter()
                            .any(|&i| side_values.iter().any(|v| scene.has(i, *v)));
                        if truth {
                            let mut relate = Ast::new(OpType::RelateAe);
                            relate.attr = Some(fam);
                            relate.kids = vec![Ast::select(c_in), Ast::select(c_side)];
                            let mut exist = Ast::new(OpType::Exist);
                            exist.kids = vec![relate];
                            return Some(Draft {
                                ast: exist,
                                answer: YES.to_string(),
                            });
                        }
                    }
                }
            }
            None
        }
        TemplateKind::QueryAttr => {
            let (class, first, _) = *present.iter().find(|(_, _, count)| *count == 1)?;
            let fam = *shuffled(&families(vocab), rng).first()?;
            let value = *scene.values_of(first, fam, vocab).first()?;
            let mut query = Ast::new(OpType::Query);
            query.attr = Some(fam);
            query.kids = vec![Ast::select(class)];
            Some(Draft {
                ast: query,
                answer: vocab.concept_name(value).to_string(),
            })
        }
        TemplateKind::QueryRelS | TemplateKind::QueryRelO => {
            let s_side = kind == TemplateKind::QueryRelS;
            for rtype in shuffled(&REL_TYPES, rng) {
                let candidates = vocab.relation_candidates(rtype);
                if candidates.is_empty() {
                    continue;
                }
                for &(ca, ra, _) in &present {
                    for &(cb, rb, _) in &present {
                        if ca == cb {
                            continue;
                        }
                        // Subject/object referents per the operation's
                        // orientation.
                        let (s, o) = if s_side { (ra, rb) } else { (rb, ra) };
                        let rel = candidates
                            .iter()
                            .copied()
                            .find(|&rel| scene.rels.contains(&(s, o, rel)));
                        if let Some(rel) = rel {
                            let op = if s_side { OpType::QueryRelS } else { OpType::QueryRelO };
                            let mut q = Ast::new(op);
                            q.rtype = Some(rtype);
                            q.kids = vec![Ast::select(ca), Ast::select(cb)];
                            return Some(Draft {
                                ast: q,
                                answer: vocab.concept_name(rel).to_string(),
                            });
                        }
                    }
                }
            }
            None
        }
        TemplateKind::VerifyAttr => {
            // "yes" needs a value every instance carries; "no" a value none
            // carries.
            for &(class, _, _) in &present {
                for &fam in &shuffled(&families(vocab), rng) {
                    let value = if want_yes {
                        scene.uniform_value(class, fam, vocab)
                    } else {
                        let union = scene.value_union(class, fam, vocab);
                        shuffled(vocab.candidates(fam), rng)
                            .into_iter()
                            .find(|v| !union.contains(v))
                    };
                    if let Some(value) = value {
                        let mut verify = Ast::new(OpType::Verify);
                        verify.attr = Some(fam);
                        verify.concept = Some(value);
                        verify.kids = vec![Ast::select(class)];
                        return Some(Draft {
                            ast: verify,
                            answer: yes_no(want_yes),
                        });
                    }
                }
            }
            None
        }
        TemplateKind::VerifyRelS | TemplateKind::VerifyRelO => {
            let s_side = kind == TemplateKind::VerifyRelS;
            for (rtype, rel) in shuffled_rels(vocab, rng) {
                for &(ca, ra, _) in &present {
                    for &(cb, rb, _) in &present {
                        if ca == cb {
                            continue;
                        }
                        let (s, o) = if s_side { (ra, rb) } else { (rb, ra) };
                        if scene.rels.contains(&(s, o, rel)) == want_yes {
                            let op = if s_side {
                                OpType::VerifyRelS
                            } else {
                                OpType::VerifyRelO
                            };
                            let mut v = Ast::new(op);
                            v.rtype = Some(rtype);
                            v.concept = Some(rel);
                            v.kids = vec![Ast::select(ca), Ast::select(cb)];
                            return Some(Draft {
                                ast: v,
                                answer: yes_no(want_yes),
                            });
                        }
                    }
                }
            }
            None
        }
        TemplateKind::ChooseAttr => {
            let fam = *shuffled(&families(vocab), rng).first()?;
            for &(ca, _, _) in &present {
                for &(cb, _, _) in &present {
                    if ca == cb {
                        continue;
                    }
                    let Some(va) = scene.uniform_value(ca, fam, vocab) else {
                        continue;
                    };
                    if scene.value_union(cb, fam, vocab).contains(&va) {
                        continue;
                    }
                    // Every `ca` instance carries the value and no `cb`
                    // instance does, so the answer is `ca`'s name whichever
                    // branch it lands in.
                    let mut choose = Ast::new(OpType::Choose);
                    choose.attr = Some(fam);
                    choose.concept = Some(va);
                    choose.kids = vec![Ast::select(ca), Ast::select(cb)];
                    if rng.gen_bool(0.5) {
                        choose.kids.reverse();
                    }
                    return Some(Draft {
                        ast: choose,
                        answer: vocab.concept_name(ca).to_string(),
                    });
                }
            }
            None
        }
        TemplateKind::SameAttr => {
            // Needs a family that is constant across the whole scene.
            let fam = shuffled(&families(vocab), rng).into_iter().find(|&fam| {
                let first_values = scene.values_of(0, fam, vocab);
                (0..scene.n_objects())
                    .all(|i| first_values.iter().any(|v| scene.has(i, *v)))
                    && !first_values.is_empty()
            })?;
            let (class, _, _) = *present.first()?;
            let mut same = Ast::new(OpType::Same);
            same.attr = Some(fam);
            same.kids = vec![Ast::select(class)];
            Some(Draft {
                ast: same,
                answer: YES.to_string(),
            })
        }
        TemplateKind::QueryAeAttr => {
            // Restricted to four-value families: larger blocks never produce
            // an exact "no" under soft equality.
            let fams: Vec<AttrId> = families(vocab)
                .into_iter()
                .filter(|&f| vocab.candidates(f).len() == 4)
                .collect();
            for &fam in &shuffled(&fams, rng) {
                for &(ca, ra, na) in &present {
                    if na != 1 {
                        continue;
                    }
                    for &(cb, rb, nb) in &present {
                        if ca == cb || nb != 1 {
                            continue;
                        }
                        let va = scene.values_of(ra, fam, vocab);
                        let same = va.iter().any(|v| scene.has(rb, *v));
                        if same == want_yes {
                            let mut q = Ast::new(OpType::QueryAe);
                            q.attr = Some(fam);
                            q.kids = vec![Ast::select(ca), Ast::select(cb)];
                            return Some(Draft {
                                ast: q,
                                answer: yes_no(want_yes),
                            });
                        }
                    }
                }
            }
            None
        }
        TemplateKind::Common => {
            // Single-instance classes of different names sharing exactly one
            // attribute family.
            for &(ca, ra, na) in &present {
                if na != 1 {
                    continue;
                }
                for &(cb, rb, nb) in &present {
                    if ca == cb || nb != 1 {
                        continue;
                    }
                    let shared: Vec<AttrId> = families(vocab)
                        .into_iter()
                        .filter(|&fam| {
                            scene
                                .values_of(ra, fam, vocab)
                                .iter()
                                .any(|v| scene.has(rb, *v))
                        })
                        .collect();
                    if shared.len() == 1 {
                        let mut c = Ast::new(OpType::Common);
                        c.kids = vec![Ast::select(ca), Ast::select(cb)];
                        return Some(Draft {
                            ast: c,
                            answer: vocab.attr_name(shared[0]).to_string(),
                        });
                    }
                }
            }
            None
        }
        TemplateKind::IntersectVerify | TemplateKind::UnionVerify => {
            let intersect = kind == TemplateKind::IntersectVerify;
            // Pick child truths compatible with the wanted root answer.
            let (t1, t2) = if intersect == want_yes {
                if intersect {
                    (true, true)
                } else {
                    (false, false)
                }
            } else {
                match rng.gen_range(0..3) {
                    0 => (intersect, !intersect),
                    1 => (!intersect, intersect),
                    _ => (!intersect, !intersect),
                }
            };
            let mut picks = present.iter();
            let &(ca, _, _) = picks.next()?;
            let &(cb, _, _) = picks.find(|(c, _, _)| *c != ca)?;
            let child = |class: ConceptId, truth: bool, rng: &mut R| -> Option<Ast> {
                for &fam in &shuffled(&families(vocab), rng) {
                    let value = if truth {
                        scene.uniform_value(class, fam, vocab)
                    } else {
                        let union = scene.value_union(class, fam, vocab);
                        shuffled(vocab.candidates(fam), rng)
                            .into_iter()
                            .find(|v| !union.contains(v))
                    };
                    if let Some(value) = value {
                        let mut verify = Ast::new(OpType::Verify);
                        verify.attr = Some(fam);
                        verify.concept = Some(value);
                        verify.kids = vec![Ast::select(class)];
                        return Some(verify);
                    }
                }
                None
            };
            let k1 = child(ca, t1, rng)?;
            let k2 = child(cb, t2, rng)?;
            let mut root = Ast::new(if intersect { OpType::Intersect } else { OpType::Union });
            root.kids = vec![k1, k2];
            Some(Draft {
                ast: root,
                answer: yes_no(want_yes),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Over-specification
// ---------------------------------------------------------------------------

/// Wrap select leaves with redundant filter/relate operations, accepting a
/// proposal only when the oracle answer is unchanged. Returns the number of
/// operations added.
fn over_specify<R: Rng>(
    ast: &mut Ast,
    scene: &SceneIndex,
    vocab: &Vocabulary,
    rng: &mut R,
    answer: &str,
) -> Result<usize> {
    let mut added = 0;
    let rounds = if rng.gen_bool(0.5) { 2 } else { 1 };
    for _ in 0..rounds {
        if over_specify_once(ast, scene, vocab, rng, answer)? {
            added += 1;
        } else {
            break;
        }
    }
    Ok(added)
}

fn over_specify_once<R: Rng>(
    ast: &mut Ast,
    scene: &SceneIndex,
    vocab: &Vocabulary,
    rng: &mut R,
    answer: &str,
) -> Result<bool> {
    let mut paths = ast.select_paths();
    paths.shuffle(rng);
    for path in paths {
        let class = ast.at(&path).concept.expect("select has a concept");
        let mut proposals: Vec<Ast> = Vec::new();

        // Redundant filter: prefer a value every class instance carries (the
        // filtered set is then unchanged); fall back to one instance's value,
        // or any value at all if the class is absent (the set stays empty).
        let fam = *shuffled(&families(vocab), rng).first().expect("families exist");
        let filter_value = match scene.first(class) {
            Some(i) => scene
                .uniform_value(class, fam, vocab)
                .or_else(|| scene.values_of(i, fam, vocab).first().copied()),
            None => shuffled(vocab.candidates(fam), rng).first().copied(),
        };
        if let Some(v) = filter_value {
            proposals.push(Ast::filter(fam, v, false, Ast::select(class)));
        }

        // Redundant relate: a relationship between a present side referent
        // and the wrapped set that the oracle confirms is answer-preserving.
        let mut relate_candidates = Vec::new();
        for (rtype, rel) in shuffled_rels(vocab, rng).into_iter().take(4) {
            for &(c_side, _, _) in shuffled(&scene.present, rng).iter().take(3) {
                let op = if rng.gen_bool(0.5) {
                    OpType::RelateS
                } else {
                    OpType::RelateO
                };
                relate_candidates.push(Ast::relate(
                    op,
                    rtype,
                    rel,
                    Ast::select(class),
                    Ast::select(c_side),
                ));
            }
        }
        // Filters first most of the time: they are the dominant redundant
        // operation, keeping load-bearing filters a small minority.
        if rng.gen_bool(0.25) {
            proposals.splice(0..0, relate_candidates);
        } else {
            proposals.extend(relate_candidates);
        }

        for proposal in proposals {
            let mut candidate = ast.clone();
            *candidate.at_mut(&path) = proposal;
            let program = Program::parse(&candidate.text(vocab), vocab)?;
            if oracle_with_index(scene, &program, vocab)? == answer {
                *ast = candidate;
                return Ok(true);
            }
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// A generated corpus: symbolic scenes, feature scenes, questions, and the
/// vocabulary they share.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub gold: Vec<GoldScene>,
    pub scenes: Vec<Scene>,
    pub questions: Vec<Question>,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub yes: usize,
    pub no: usize,
    /// Questions carrying at least one over-specified operation.
    pub over_specified: usize,
    pub op_counts: BTreeMap<String, usize>,
}

/// File names written by [`Corpus::save`].
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub vocab: std::path::PathBuf,
    pub gold: std::path::PathBuf,
    pub scenes: std::path::PathBuf,
    pub questions: std::path::PathBuf,
}

impl Corpus {
    /// Write the corpus into a directory under fixed file names.
    pub fn save(&self, dir: &std::path::Path) -> Result<CorpusPaths> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?;
        let paths = CorpusPaths {
            vocab: dir.join("vocab.json"),
            gold: dir.join("gold.jsonl"),
            scenes: dir.join("scenes.jsonl"),
            questions: dir.join("questions.jsonl"),
        };
        self.vocab.save(&paths.vocab)?;
        crate::scene::save_gold_scenes(&paths.gold, &self.gold)?;
        crate::scene::save_scenes(&paths.scenes, &self.scenes)?;
        crate::program::save_questions(&paths.questions, &self.questions, &self.vocab)?;
        Ok(paths)
    }
}

/// How many times each concept id appears as an operation argument.
pub fn concept_occurrences(questions: &[Question]) -> BTreeMap<ConceptId, usize> {
    let mut counts = BTreeMap::new();
    for q in questions {
        for node in q.program.nodes() {
            if let Some(c) = node.concept {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Generate a full corpus. Deterministic in the config (including seed);
/// every question is oracle-answered and replay-verified.
pub fn generate(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let vocab = build_vocabulary(cfg)?;
    let reference = identity_store(&vocab)?;

    let gold: Vec<GoldScene> = (0..cfg.n_scenes)
        .map(|i| generate_scene(cfg, &vocab, i))
        .collect::<Result<_>>()?;
    let clean: Vec<Scene> = gold
        .iter()
        .map(|g| gold_to_features(g, &vocab))
        .collect::<Result<_>>()?;
    let indexes: Vec<SceneIndex> = gold
        .iter()
        .map(|g| SceneIndex::build(g, &vocab))
        .collect::<Result<_>>()?;

    let cycle = cfg.cycle()?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0xc0ffee));
    let mut questions = Vec::with_capacity(cfg.n_questions);
    let mut stats = CorpusStats::default();
    let mut per_scene_counter = vec![0usize; cfg.n_scenes];
    let mut scene_cursor = 0usize;
    let mut yes_count = 0usize;
    let mut no_count = 0usize;

    for qi in 0..cfg.n_questions {
        let kind = cycle[qi % cycle.len()];
        let want_yes = match yes_count.cmp(&no_count) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => rng.gen_bool(0.5),
        };

        let mut emitted = false;
        for attempt in 0..cfg.n_scenes {
            let s = (scene_cursor + attempt) % cfg.n_scenes;
            let Some(draft) = build_template(kind, &indexes[s], &vocab, &mut rng, want_yes)
            else {
                continue;
            };

            // Sanity: the template's claimed answer must equal the oracle's.
            let base_program = Program::parse(&draft.ast.text(&vocab), &vocab)?;
            debug_assert_eq!(
                oracle_with_index(&indexes[s], &base_program, &vocab)?,
                draft.answer,
                "template `{}` disagrees with the oracle",
                kind.name()
            );

            let mut ast = draft.ast.clone();
            let mut added = 0;
            if cfg.rho > 0.0 && rng.gen_bool(cfg.rho) {
                added = over_specify(&mut ast, &indexes[s], &vocab, &mut rng, &draft.answer)?;
            }
            let mut program = Program::parse(&ast.text(&vocab), &vocab)?;

            // Replay through the reference configuration; drop the
            // over-specification if it breaks exactness.
            if identity_replay(&reference, &vocab, &clean[s], &program)? != draft.answer {
                if added == 0 {
                    continue;
                }
                added = 0;
                program = base_program;
                if identity_replay(&reference, &vocab, &clean[s], &program)? != draft.answer {
                    continue;
                }
            }

            let qid = format!("{}-q{}", gold[s].id, per_scene_counter[s]);
            per_scene_counter[s] += 1;
            if draft.answer == YES {
                yes_count += 1;
            } else if draft.answer == NO {
                no_count += 1;
            }
            if added > 0 {
                stats.over_specified += 1;
            }
            for node in program.nodes() {
                *stats.op_counts.entry(node.op.name().to_string()).or_insert(0) += 1;
            }
            questions.push(Question {
                qid,
                program,
                answer: draft.answer,
            });
            scene_cursor = (s + 1) % cfg.n_scenes;
            emitted = true;
            break;
        }
        if !emitted {
            return Err(Error::Config(format!(
                "no scene satisfies question template `{}` (corpus too small or too skewed)",
                kind.name()
            )));
        }
    }
    stats.yes = yes_count;
    stats.no = no_count;

    let scenes = if cfg.feature_noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.feature_noise_std)
            .map_err(|e| Error::Config(format!("feature noise: {e}")))?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x7015e));
        clean
            .into_iter()
            .map(|mut scene| {
                for obj in &mut scene.objects {
                    for f in &mut obj.features {
                        *f += normal.sample(&mut noise_rng);
                    }
                }
                scene
            })
            .collect()
    } else {
        clean
    };

    Ok(Corpus {
        vocab,
        gold,
        scenes,
        questions,
        stats,
    })
}

/// Execute a program on a feature scene under the reference parameters and
/// first-max attention, returning the decoded answer.
pub fn identity_replay(
    store: &ParamStore,
    vocab: &Vocabulary,
    scene: &Scene,
    program: &Program,
) -> Result<String> {
    let session = Session::new(store);
    let executor = Executor::new(&session, vocab, scene, identity_exec_options())?;
    Ok(executor.execute(program, None, None)?.answer)
}

// ---------------------------------------------------------------------------
// Adversarial fixture
// ---------------------------------------------------------------------------

/// The canonical over-confidence fixture in symbolic form: a scene whose only
/// bag is black and a program asking for a non-black bag. The oracle answers
/// "no"; removing the filter flips it to "yes".
pub fn adversarial_example() -> Result<(Vocabulary, GoldScene, Program)> {
    let showcase = override_showcase()?;
    Ok((showcase.vocab, showcase.gold, showcase.program))
}

// ---------------------------------------------------------------------------
// Random programs (parser fuzzing / roundtrips)
// ---------------------------------------------------------------------------

/// A random valid program over the vocabulary: any root operation, with
/// random select/filter/relate chains underneath.
pub fn random_program<R: Rng>(vocab: &Vocabulary, rng: &mut R) -> Program {
    let op = OP_TYPES[rng.gen_range(0..OP_TYPES.len())];
    let ast = if op.is_output() {
        random_root(op, vocab, rng)
    } else {
        // Intermediate operations must sit under an output root.
        let mut exist = Ast::new(OpType::Exist);
        exist.kids = vec![random_intermediate(op, vocab, rng)];
        exist
    };
    let text = ast.text(vocab);
    Program::parse(&text, vocab).expect("generated programs are valid")
}

fn random_intermediate<R: Rng>(op: OpType, vocab: &Vocabulary, rng: &mut R) -> Ast {
    match op {
        OpType::Select => Ast::select(random_class(vocab, rng)),
        OpType::Filter => {
            let (attr, value) = random_family_value(vocab, rng);
            Ast::filter(attr, value, rng.gen_bool(0.2), random_dist(vocab, rng, 2))
        }
        OpType::RelateS | OpType::RelateO => match random_relation(vocab, rng) {
            Some((rt, rel)) => Ast::relate(
                op,
                rt,
                rel,
                random_dist(vocab, rng, 2),
                random_dist(vocab, rng, 1),
            ),
            None => Ast::select(random_class(vocab, rng)),
        },
        OpType::RelateAe => {
            let mut a = Ast::new(OpType::RelateAe);
            a.attr = Some(rng.gen_range(vocab.attr_ids()));
            a.kids = vec![random_dist(vocab, rng, 2), random_dist(vocab, rng, 1)];
            a
        }
        _ => unreachable!("output operation passed to random_intermediate"),
    }
}

fn random_class<R: Rng>(vocab: &Vocabulary, rng: &mut R) -> ConceptId {
    let classes = vocab.candidates(0);
    classes[rng.gen_range(0..classes.len())]
}

fn random_family_value<R: Rng>(vocab: &Vocabulary, rng: &mut R) -> (AttrId, ConceptId) {
    // Any family, including `name`.
    let attr = rng.gen_range(vocab.attr_ids());
    let values = vocab.candidates(attr);
    (attr, values[rng.gen_range(0..values.len())])
}

fn random_relation<R: Rng>(vocab: &Vocabulary, rng: &mut R) -> Option<(RelType, ConceptId)> {
    let available: Vec<RelType> = REL_TYPES
        .into_iter()
        .filter(|&rt| !vocab.relation_candidates(rt).is_empty())
        .collect();
    if available.is_empty() {
        return None;
    }
    let rt = available[rng.gen_range(0..available.len())];
    let rels = vocab.relation_candidates(rt);
    Some((rt, rels[rng.gen_range(0..rels.len())]))
}

fn random_dist<R: Rng>(vocab: &Vocabulary, rng: &mut R, depth: usize) -> Ast {
    let base = Ast::select(random_class(vocab, rng));
    if depth == 0 || rng.gen_bool(0.4) {
        return base;
    }
    match rng.gen_range(0..4) {
        0 => {
            let (attr, value) = random_family_value(vocab, rng);
            Ast::filter(attr, value, rng.gen_bool(0.2), random_dist(vocab, rng, depth - 1))
        }
        1 | 2 => match random_relation(vocab, rng) {
            Some((rt, rel)) => {
                let op = if rng.gen_bool(0.5) { OpType::RelateS } else { OpType::RelateO };
                Ast::relate(
                    op,
                    rt,
                    rel,
                    random_dist(vocab, rng, depth - 1),
                    random_dist(vocab, rng, depth.saturating_sub(2)),
                )
            }
            None => base,
        },
        _ => {
            let mut a = Ast::new(OpType::RelateAe);
            a.attr = Some(rng.gen_range(vocab.attr_ids()));
            a.kids = vec![
                random_dist(vocab, rng, depth - 1),
                random_dist(vocab, rng, depth.saturating_sub(2)),
            ];
            a
        }
    }
}

fn random_root<R: Rng>(op: OpType, vocab: &Vocabulary, rng: &mut R) -> Ast {
    let mut ast = Ast::new(op);
    match op {
        OpType::Select
        | OpType::Filter
        | OpType::RelateS
        | OpType::RelateO
        | OpType::RelateAe => {
            unreachable!("intermediate operation passed to random_root")
        }
        OpType::Query => {
            ast.attr = Some(rng.gen_range(vocab.attr_ids()));
            ast.kids = vec![random_dist(vocab, rng, 2)];
        }
        OpType::QueryRelS | OpType::QueryRelO | OpType::VerifyRelS | OpType::VerifyRelO => {
            match random_relation(vocab, rng) {
                Some((rt, rel)) => {
                    ast.rtype = Some(rt);
                    if op == OpType::VerifyRelS || op == OpType::VerifyRelO {
                        ast.concept = Some(rel);
                    }
                    ast.kids = vec![random_dist(vocab, rng, 2), random_dist(vocab, rng, 1)];
                }
                None => return random_root(OpType::Query, vocab, rng),
            }
        }
        OpType::Verify | OpType::Choose => {
            let (attr, value) = random_family_value(vocab, rng);
            ast.attr = Some(attr);
            ast.concept = Some(value);
            ast.kids = if op == OpType::Choose {
                vec![random_dist(vocab, rng, 1), random_dist(vocab, rng, 1)]
            } else {
                vec![random_dist(vocab, rng, 2)]
            };
        }
        OpType::Same => {
            ast.attr = Some(rng.gen_range(vocab.attr_ids()));
            ast.kids = vec![random_dist(vocab, rng, 2)];
        }
        OpType::QueryAe => {
            ast.attr = Some(rng.gen_range(vocab.attr_ids()));
            ast.kids = vec![random_dist(vocab, rng, 1), random_dist(vocab, rng, 1)];
        }
        OpType::Common => {
            ast.kids = vec![random_dist(vocab, rng, 1), random_dist(vocab, rng, 1)];
        }
        OpType::Exist => {
            ast.kids = vec![random_dist(vocab, rng, 2)];
        }
        OpType::Intersect | OpType::Union => {
            let scalar_ops = [
                OpType::Exist,
                OpType::Verify,
                OpType::VerifyRelS,
                OpType::VerifyRelO,
            ];
            ast.kids = (0..2)
                .map(|_| random_root(scalar_ops[rng.gen_range(0..scalar_ops.len())], vocab, rng))
                .collect();
        }
    }
    ast
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::scene_id_of_qid;

    fn small_cfg() -> CorpusConfig {
        CorpusConfig {
            n_scenes: 48,
            n_questions: 120,
            seed: 11,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn zipf_zero_exponent_is_uniform_within_three_sigma() {
        let z = Zipf::new(16, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40_000;
        let mut counts = vec![0usize; 16];
        for _ in 0..n {
            counts[z.sample(&mut rng)] += 1;
        }
        let p = 1.0 / 16.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - n as f64 * p).abs() < 3.0 * sigma,
                "count {c} too far from uniform"
            );
        }
    }

    #[test]
    fn zipf_samples_pass_chi_square_against_configured_law() {
        // Wilson-Hilferty approximation of the chi-square 99th percentile.
        fn chi2_crit_99(df: f64) -> f64 {
            let z = 2.3263478740408408; // Φ⁻¹(0.99)
            df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3)
        }
        for s in [0.0, 0.7, 1.0, 1.5] {
            let k = 16;
            let z = Zipf::new(k, s).unwrap();
            let probs = z.probabilities();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let n = 20_000usize;
            let mut counts = vec![0usize; k];
            for _ in 0..n {
                counts[z.sample(&mut rng)] += 1;
            }
            let stat: f64 = counts
                .iter()
                .zip(&probs)
                .map(|(&c, &p)| {
                    let e = n as f64 * p;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            let crit = chi2_crit_99((k - 1) as f64);
            assert!(stat < crit, "s={s}: chi-square {stat:.1} ≥ {crit:.1}");
        }
    }

    #[test]
    fn zipf_skew_orders_frequencies() {
        let z = Zipf::new(8, 1.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 8];
        for _ in 0..30_000 {
            counts[z.sample(&mut rng)] += 1;
        }
        assert!(counts[0] > 2 * counts[3]);
        assert!(counts[0] > 4 * counts[7]);
    }

    #[test]
    fn oracle_answers_the_canonical_membership_pair() {
        let cfg = CorpusConfig::default();
        let vocab = build_vocabulary(&cfg).unwrap();
        let gold = GoldScene {
            id: "g0".into(),
            objects: vec![GoldObject {
                bbox: [0.1, 0.1, 0.3, 0.3],
                class: "bag".into(),
                attributes: BTreeMap::from([
                    ("color".into(), vec!["black".into()]),
                    ("size".into(), vec!["small".into()]),
                    ("material".into(), vec!["cloth".into()]),
                ]),
            }],
            relations: vec![],
        };
        let positive =
            Program::parse("exist(filter[color](black; select[name](bag)))", &vocab).unwrap();
        let negated =
            Program::parse("exist(filter[color](black, neg; select[name](bag)))", &vocab)
                .unwrap();
        assert_eq!(oracle_answer(&gold, &positive, &vocab).unwrap(), YES);
        assert_eq!(oracle_answer(&gold, &negated, &vocab).unwrap(), NO);

        // Empty selection: open query answers "none".
        let query = Program::parse("query[color](select[name](girl))", &vocab).unwrap();
        assert_eq!(oracle_answer(&gold, &query, &vocab).unwrap(), NONE_ANSWER);
    }

    #[test]
    fn adversarial_fixture_flips_without_its_filter() {
        let (vocab, gold, program) = adversarial_example().unwrap();
        assert_eq!(oracle_answer(&gold, &program, &vocab).unwrap(), NO);
        let removable = program.removable_set();
        assert_eq!(removable.len(), 1);
        let without = program.remove_node(removable[0]).unwrap();
        assert_eq!(oracle_answer(&gold, &without, &vocab).unwrap(), YES);

        // The symbolic fixture converts losslessly to the feature fixture.
        let showcase = override_showcase().unwrap();
        let converted = gold_to_features(&gold, &vocab).unwrap();
        for (a, b) in converted.objects.iter().zip(&showcase.scene.objects) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.bbox, b.bbox);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_cfg();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        let ser = |c: &Corpus| {
            let qs: Vec<String> = c
                .questions
                .iter()
                .map(|q| format!("{}|{}|{}", q.qid, q.program.serialize(&c.vocab), q.answer))
                .collect();
            let ss: Vec<String> = c
                .scenes
                .iter()
                .map(|s| serde_json::to_string(s).unwrap())
                .collect();
            (qs, ss)
        };
        assert_eq!(ser(&a), ser(&b));
    }

    #[test]
    fn every_question_replays_through_the_reference_executor() {
        let corpus = generate(&small_cfg()).unwrap();
        let store = identity_store(&corpus.vocab).unwrap();
        let by_id: BTreeMap<&str, &Scene> =
            corpus.scenes.iter().map(|s| (s.id.as_str(), s)).collect();
        for q in &corpus.questions {
            let scene = by_id[scene_id_of_qid(&q.qid)];
            let got = identity_replay(&store, &corpus.vocab, scene, &q.program).unwrap();
            assert_eq!(got, q.answer, "question {} does not replay", q.qid);
        }
    }

    fn permute_gold<R: Rng>(gold: &GoldScene, rng: &mut R) -> GoldScene {
        let n = gold.objects.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let mut inverse = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        GoldScene {
            id: gold.id.clone(),
            objects: perm.iter().map(|&old| gold.objects[old].clone()).collect(),
            relations: gold
                .relations
                .iter()
                .map(|r| Relation {
                    s: inverse[r.s],
                    o: inverse[r.o],
                    rel: r.rel.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn oracle_is_invariant_under_object_reordering() {
        let corpus = generate(&small_cfg()).unwrap();
        let by_id: BTreeMap<&str, &GoldScene> =
            corpus.gold.iter().map(|g| (g.id.as_str(), g)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(77);

        // Every emitted question keeps its answer on a shuffled scene.
        let mut checked = 0;
        for q in corpus.questions.iter() {
            let gold = by_id[scene_id_of_qid(&q.qid)];
            let permuted = permute_gold(gold, &mut rng);
            assert_eq!(
                oracle_answer(&permuted, &q.program, &corpus.vocab).unwrap(),
                q.answer,
                "answer changed under reordering for {}",
                q.qid
            );
            checked += 1;
        }
        assert!(checked >= 100);

        // So does any random well-formed program over any scene.
        for trial in 0..500 {
            let gold = &corpus.gold[trial % corpus.gold.len()];
            let program = random_program(&corpus.vocab, &mut rng);
            let permuted = permute_gold(gold, &mut rng);
            assert_eq!(
                oracle_answer(gold, &program, &corpus.vocab).unwrap(),
                oracle_answer(&permuted, &program, &corpus.vocab).unwrap(),
                "random program answer changed under reordering (trial {trial}): {}",
                program.serialize(&corpus.vocab)
            );
        }
    }

    #[test]
    fn binary_answers_are_balanced_and_ops_covered() {
        let cfg = CorpusConfig {
            n_scenes: 96,
            n_questions: 400,
            seed: 3,
            ..CorpusConfig::default()
        };
        let corpus = generate(&cfg).unwrap();
        assert_eq!(corpus.questions.len(), 400);
        let yes = corpus.stats.yes as f64;
        let no = corpus.stats.no as f64;
        assert!(
            (yes / (yes + no) - 0.5).abs() < 0.05,
            "binary balance off: {yes} yes vs {no} no"
        );

        // Every operation type appears within each 200-question window.
        for window in corpus.questions.chunks(200) {
            let mut seen = BTreeSet::new();
            for q in window {
                for node in q.program.nodes() {
                    seen.insert(node.op);
                }
            }
            for op in OP_TYPES {
                assert!(seen.contains(&op), "window misses {}", op.name());
            }
        }
    }

    #[test]
    fn scene_labels_are_complete_and_constraints_hold() {
        let corpus = generate(&small_cfg()).unwrap();
        for gold in &corpus.gold {
            for obj in &gold.objects {
                for fam in ["color", "size", "material"] {
                    let values = obj.attributes.get(fam).map(|v| v.len()).unwrap_or(0);
                    assert_eq!(values, 1, "object missing a {fam} value");
                }
            }
        }
        for q in &corpus.questions {
            for node in q.program.nodes() {
                // Attribute-equality ops never target the class family.
                if matches!(node.op, OpType::RelateAe | OpType::QueryAe | OpType::Same) {
                    assert_ne!(node.attr, Some(0), "{}: ae over `name`", q.qid);
                }
            }
            if q.program.root().op == OpType::Same {
                assert_eq!(q.answer, YES);
            }
        }
    }

    #[test]
    fn full_over_specification_makes_filters_redundant() {
        let cfg = CorpusConfig {
            rho: 1.0,
            n_scenes: 64,
            n_questions: 300,
            seed: 9,
            ..CorpusConfig::default()
        };
        let corpus = generate(&cfg).unwrap();
        let by_id: BTreeMap<&str, &GoldScene> =
            corpus.gold.iter().map(|g| (g.id.as_str(), g)).collect();
        let mut filters = 0usize;
        let mut redundant = 0usize;
        for q in &corpus.questions {
            let gold = by_id[scene_id_of_qid(&q.qid)];
            for (i, node) in q.program.nodes().iter().enumerate() {
                if node.op != OpType::Filter {
                    continue;
                }
                filters += 1;
                let without = q.program.remove_node(i).unwrap();
                if oracle_answer(gold, &without, &corpus.vocab).unwrap() == q.answer {
                    redundant += 1;
                }
            }
        }
        assert!(filters > 100, "expected many filters, saw {filters}");
        let frac = redundant as f64 / filters as f64;
        assert!(frac >= 0.95, "only {frac:.3} of filters are redundant");
        assert!(corpus.stats.over_specified as f64 >= 0.9 * corpus.questions.len() as f64);
    }

    #[test]
    fn random_programs_roundtrip_through_text() {
        let cfg = CorpusConfig::default();
        let vocab = build_vocabulary(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut seen_ops = BTreeSet::new();
        for _ in 0..1000 {
            let p = random_program(&vocab, &mut rng);
            for node in p.nodes() {
                seen_ops.insert(node.op);
            }
            let text = p.serialize(&vocab);
            let reparsed = Program::parse(&text, &vocab).unwrap();
            assert_eq!(p.nodes(), reparsed.nodes());
            assert_eq!(reparsed.serialize(&vocab), text);
        }
        assert_eq!(seen_ops.len(), OP_TYPES.len(), "random programs miss ops");
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let cfg = CorpusConfig {
            n_classes: 12,
            ..CorpusConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = CorpusConfig {
            zipf_s: -0.1,
            ..CorpusConfig::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = CorpusConfig::default();
        cfg.template_mix.insert("no_such_template".into(), 1);
        assert!(cfg.validate().is_err());
        let mut cfg = CorpusConfig::default();
        cfg.template_mix.insert("verify_attr".into(), 201);
        assert!(cfg.validate().is_err());
        assert!(CorpusConfig::default().validate().is_ok());
    }

    #[test]
    fn noisy_scenes_keep_gold_clean() {
        let cfg = CorpusConfig {
            feature_noise_std: 0.15,
            n_scenes: 8,
            n_questions: 10,
            seed: 2,
            ..CorpusConfig::default()
        };
        let corpus = generate(&cfg).unwrap();
        let clean = gold_to_features(&corpus.gold[0], &corpus.vocab).unwrap();
        let noisy = &corpus.scenes[0];
        let mut diffs = 0;
        for (a, b) in clean.objects.iter().zip(&noisy.objects) {
            for (x, y) in a.features.iter().zip(&b.features) {
                if (x - y).abs() > 1e-9 {
                    diffs += 1;
                }
            }
        }
        assert!(diffs > 0, "noise was not applied");
        // Clean features stay exactly one-hot/multi-hot.
        for obj in &clean.objects {
            assert!(obj.features.iter().all(|&f| f == 0.0 || f == 1.0));
        }
    }
}
