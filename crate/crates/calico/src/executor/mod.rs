//! Differentiable execution of operation programs against scenes.
//!
//! Every object distribution is a length-N vector of real scores with the
//! convention that a positive score means "selected". Each operation computes
//! its own result `d_res` from the scene and merges it with its dependency
//! outputs by elementwise mean, so no step can hard-veto an earlier one —
//! softness is the point, calibration restores sharpness:
//!
//! * concept calibration ([`SimMode::Calibrated`]) scales concept
//!   similarities by a learned per-(operation, concept) magnitude;
//! * operation calibration passes per-node weights (see [`crate::opcal`])
//!   that scale each dependency's output where it is consumed.
//!
//! Attention over a distribution is `softmax(d / temperature)`;
//! `temperature = None` selects the first-max object exactly (useful for
//! oracle-exact execution, not differentiable w.r.t. the distribution).

pub mod identity;

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::autodiff::params::{ParamStore, Session};
use crate::autodiff::{argmax, Var};
use crate::concepts::{register_concepts, ConceptVars, SimMode};
use crate::error::{Error, Result};
use crate::program::{OpType, Program};
use crate::scene::{box_features, pair_geometry, Scene, BOX_FEATURES, PAIR_GEOMETRY};
use crate::vocab::{AttrId, RelType, Vocabulary, NO, YES};

/// Architecture hyperparameters used at registration time.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension shared by objects, pairs, and concepts.
    pub embed_dim: usize,
    /// Hidden width of the per-family mapping networks.
    pub map_hidden: usize,
    /// Hidden width of the per-relationship-type pair networks.
    pub pair_hidden: usize,
    /// Standard deviation for Gaussian weight init.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            map_hidden: 64,
            pair_hidden: 64,
            init_std: 0.1,
        }
    }
}

/// Dimensions inferred back from a parameter store.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub embed_dim: usize,
    pub feature_dim: usize,
}

impl ModelSpec {
    pub fn infer(store: &ParamStore, vocab: &Vocabulary) -> Result<Self> {
        let dirs = store.get(crate::concepts::PARAM_DIRS)?;
        let first_family = vocab.attr_name(0);
        let gate = store.get(&format!("map.{first_family}.gate"))?;
        Ok(ModelSpec {
            embed_dim: dirs.shape[1],
            feature_dim: gate.shape[0],
        })
    }
}

/// Register every executor parameter: concept table plus one mapping network
/// per attribute family and one pair network per relationship type.
pub fn register_model<R: Rng>(
    store: &mut ParamStore,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<()> {
    let d = cfg.embed_dim;
    let f = vocab.feature_dim();
    register_concepts(store, vocab.n_concepts(), d, cfg.init_std, rng)?;
    for attr in vocab.attr_ids() {
        let name = vocab.attr_name(attr);
        store.insert_zeros(&format!("map.{name}.gate"), vec![f])?;
        store.insert_gaussian(&format!("map.{name}.w1"), vec![cfg.map_hidden, f], cfg.init_std, rng)?;
        store.insert_zeros(&format!("map.{name}.b1"), vec![cfg.map_hidden])?;
        store.insert_gaussian(&format!("map.{name}.w2"), vec![d, cfg.map_hidden], cfg.init_std, rng)?;
        store.insert_zeros(&format!("map.{name}.b2"), vec![d])?;
        store.insert_gaussian(&format!("map.{name}.spatial"), vec![d, BOX_FEATURES], cfg.init_std, rng)?;
    }
    let pair_in = 2 * f + 2 * BOX_FEATURES + PAIR_GEOMETRY;
    for rtype in crate::vocab::REL_TYPES {
        let name = rtype.name();
        store.insert_gaussian(&format!("pair.{name}.w1"), vec![cfg.pair_hidden, pair_in], cfg.init_std, rng)?;
        store.insert_zeros(&format!("pair.{name}.b1"), vec![cfg.pair_hidden])?;
        store.insert_gaussian(&format!("pair.{name}.w2"), vec![d, cfg.pair_hidden], cfg.init_std, rng)?;
        store.insert_zeros(&format!("pair.{name}.b2"), vec![d])?;
    }
    Ok(())
}

/// Per-execution settings.
#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub mode: SimMode,
    /// Attention temperature; `None` = exact first-max selection.
    pub temperature: Option<f64>,
    /// Scores strictly above this decode to "yes".
    pub binary_threshold: f64,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            mode: SimMode::Normalized,
            temperature: Some(1.0),
            binary_threshold: 0.0,
        }
    }
}

/// Root output with live tape nodes, ready for loss construction.
#[derive(Debug, Clone)]
pub enum AnswerVars {
    /// One score per named candidate; decodes to the first-max candidate.
    Open { candidates: Vec<String>, scores: Var },
    /// Single score; decodes via the binary threshold.
    Binary { score: Var },
    /// Two branch scores named by each branch's base-select concept;
    /// decodes to the larger (ties: the first).
    Choose { candidates: [String; 2], scores: Var },
}

impl AnswerVars {
    /// Candidate names and raw scores, for traces and reports.
    pub fn scored_candidates(&self) -> Vec<(String, f64)> {
        match self {
            AnswerVars::Open { candidates, scores } => candidates
                .iter()
                .cloned()
                .zip(scores.value())
                .collect(),
            AnswerVars::Binary { score } => {
                vec![(YES.to_string(), score.value()[0])]
            }
            AnswerVars::Choose { candidates, scores } => candidates
                .iter()
                .cloned()
                .zip(scores.value())
                .collect(),
        }
    }

    pub fn decode(&self, binary_threshold: f64) -> String {
        match self {
            AnswerVars::Open { candidates, scores } => {
                candidates[argmax(&scores.value())].clone()
            }
            AnswerVars::Binary { score } => {
                if score.value()[0] > binary_threshold {
                    YES.to_string()
                } else {
                    NO.to_string()
                }
            }
            AnswerVars::Choose { candidates, scores } => {
                let v = scores.value();
                candidates[if v[1] > v[0] { 1 } else { 0 }].clone()
            }
        }
    }
}

/// Per-node record of one execution.
#[derive(Debug, Clone, Serialize)]
pub struct NodeTrace {
    pub op: String,
    /// Calibration weight applied to this node's output, when provided.
    pub weight: Option<f64>,
    /// Distribution, scalar, or candidate scores produced by the node.
    pub output: Vec<f64>,
}

/// Decoded answer plus everything needed to inspect or train on the run.
#[derive(Debug)]
pub struct Execution {
    pub answer: String,
    pub answer_vars: AnswerVars,
    pub trace: Vec<NodeTrace>,
}

enum NodeOut {
    Dist(Var),
    Scalar(Var),
    Answer(AnswerVars),
}

impl NodeOut {
    fn values(&self) -> Vec<f64> {
        match self {
            NodeOut::Dist(v) | NodeOut::Scalar(v) => v.value(),
            NodeOut::Answer(a) => a.scored_candidates().iter().map(|(_, s)| *s).collect(),
        }
    }
}

/// One program execution bound to a session, scene, and options.
pub struct Executor<'a, 's> {
    session: &'a Session<'s>,
    vocab: &'a Vocabulary,
    opts: ExecOptions,
    concepts: ConceptVars,
    feature_dim: usize,
    embed_cache: RefCell<BTreeMap<(AttrId, usize), Var>>,
    pair_cache: RefCell<BTreeMap<(usize, usize, usize), Var>>,
    features: Vec<Var>,
    boxes: Vec<Var>,
    geometry: Vec<Vec<Var>>,
}

impl<'a, 's> Executor<'a, 's> {
    pub fn new(
        session: &'a Session<'s>,
        vocab: &'a Vocabulary,
        scene: &Scene,
        opts: ExecOptions,
    ) -> Result<Self> {
        if scene.n_objects() == 0 {
            return Err(Error::Shape(format!("scene `{}` has no objects", scene.id)));
        }
        let concepts = ConceptVars::lease(session)?;
        let features: Vec<Var> = scene
            .objects
            .iter()
            .map(|o| session.constant(o.features.clone()))
            .collect();
        let boxes: Vec<Var> = scene
            .objects
            .iter()
            .map(|o| session.constant(box_features(&o.bbox).to_vec()))
            .collect();
        let geometry = scene
            .objects
            .iter()
            .map(|a| {
                scene
                    .objects
                    .iter()
                    .map(|b| session.constant(pair_geometry(&a.bbox, &b.bbox).to_vec()))
                    .collect()
            })
            .collect();
        Ok(Executor {
            session,
            vocab,
            opts,
            concepts,
            feature_dim: scene.feature_dim(),
            embed_cache: RefCell::new(BTreeMap::new()),
            pair_cache: RefCell::new(BTreeMap::new()),
            features,
            boxes,
            geometry,
        })
    }

    pub fn options(&self) -> &ExecOptions {
        &self.opts
    }

    fn n_objects(&self) -> usize {
        self.features.len()
    }

    /// Unit embedding of object `i` under family `attr`'s mapping network.
    fn embed_object(&self, attr: AttrId, i: usize) -> Result<Var> {
        if let Some(v) = self.embed_cache.borrow().get(&(attr, i)) {
            return Ok(v.clone());
        }
        let name = self.vocab.attr_name(attr);
        let gate = self.session.param(&format!("map.{name}.gate"))?;
        if gate.len() != self.feature_dim {
            return Err(Error::Shape(format!(
                "family `{name}` expects {} features, scene has {}",
                gate.len(),
                self.feature_dim
            )));
        }
        let gated = gate.sigmoid().mul(&self.features[i])?;
        let h = self
            .session
            .param(&format!("map.{name}.w1"))?
            .matvec(&gated)?
            .add(&self.session.param(&format!("map.{name}.b1"))?)?
            .relu();
        let core = self
            .session
            .param(&format!("map.{name}.w2"))?
            .matvec(&h)?
            .add(&self.session.param(&format!("map.{name}.b2"))?)?;
        let spatial = self
            .session
            .param(&format!("map.{name}.spatial"))?
            .matvec(&self.boxes[i])?;
        let e = core.add(&spatial)?.l2_normalize()?;
        self.embed_cache.borrow_mut().insert((attr, i), e.clone());
        Ok(e)
    }

    /// Unit embedding of the ordered object pair `(i, j)` under `rtype`'s
    /// pair network.
    fn embed_pair(&self, rtype: RelType, i: usize, j: usize) -> Result<Var> {
        let key = (rtype.index(), i, j);
        if let Some(v) = self.pair_cache.borrow().get(&key) {
            return Ok(v.clone());
        }
        let name = rtype.name();
        let x = Var::concat(&[
            self.features[i].clone(),
            self.features[j].clone(),
            self.boxes[i].clone(),
            self.boxes[j].clone(),
            self.geometry[i][j].clone(),
        ])?;
        let h = self
            .session
            .param(&format!("pair.{name}.w1"))?
            .matvec(&x)?
            .add(&self.session.param(&format!("pair.{name}.b1"))?)?
            .relu();
        let e = self
            .session
            .param(&format!("pair.{name}.w2"))?
            .matvec(&h)?
            .add(&self.session.param(&format!("pair.{name}.b2"))?)?
            .l2_normalize()?;
        self.pair_cache.borrow_mut().insert(key, e.clone());
        Ok(e)
    }

    /// Scale a distribution (or scalar) by an optional calibration weight.
    fn weighted(&self, d: &Var, weight: Option<&Var>) -> Result<Var> {
        match weight {
            // d as an N x 1 matrix times the length-1 weight vector.
            Some(w) => d.matvec(w),
            None => Ok(d.clone()),
        }
    }

    /// Attention over a (possibly calibration-scaled) distribution.
    fn att(&self, d: &Var, weight: Option<&Var>) -> Result<Var> {
        let scaled = self.weighted(d, weight)?;
        match self.opts.temperature {
            Some(t) => {
                if t <= 0.0 {
                    return Err(Error::Config(format!("temperature {t} must be positive")));
                }
                scaled.scale(1.0 / t).softmax()
            }
            None => {
                let v = scaled.value();
                let mut hard = vec![0.0; v.len()];
                hard[argmax(&v)] = 1.0;
                Ok(self.session.constant(hard))
            }
        }
    }

    /// Attention-pooled unit embedding under one family.
    fn pool(&self, attr: AttrId, d: &Var, weight: Option<&Var>) -> Result<Var> {
        let att = self.att(d, weight)?;
        let mut acc: Option<Var> = None;
        for i in 0..self.n_objects() {
            let term = self.embed_object(attr, i)?.matvec(&att.slice(i, 1)?)?;
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
        acc.expect("non-empty scene").l2_normalize()
    }

    /// Doubly attention-pooled unit pair embedding; `i` runs over `d1`,
    /// `j` over `d2`, pair orientation `(i, j)`.
    fn pool_pair(
        &self,
        rtype: RelType,
        d1: &Var,
        w1: Option<&Var>,
        d2: &Var,
        w2: Option<&Var>,
    ) -> Result<Var> {
        let a1 = self.att(d1, w1)?;
        let a2 = self.att(d2, w2)?;
        let mut acc: Option<Var> = None;
        for i in 0..self.n_objects() {
            for j in 0..self.n_objects() {
                let coeff = a1.slice(i, 1)?.mul(&a2.slice(j, 1)?)?;
                let term = self.embed_pair(rtype, i, j)?.matvec(&coeff)?;
                acc = Some(match acc {
                    Some(a) => a.add(&term)?,
                    None => term,
                });
            }
        }
        acc.expect("non-empty scene").l2_normalize()
    }

    /// Elementwise mean of a (weighted) dependency input and an own result,
    /// the res side optionally rescaled (diagnostic hook).
    fn merge(&self, input: &Var, res: &Var, res_scale: f64) -> Result<Var> {
        let res = if res_scale == 1.0 {
            res.clone()
        } else {
            res.scale(res_scale)
        };
        Ok(input.add(&res)?.scale(0.5))
    }

    /// Similarity scores of a pooled embedding against every candidate.
    fn candidate_scores(&self, op: OpType, pooled: &Var, candidates: &[usize]) -> Result<Var> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates(format!("{} node", op.name())));
        }
        let scores: Vec<Var> = candidates
            .iter()
            .map(|&c| self.concepts.similarity(self.opts.mode, op, c, pooled))
            .collect::<Result<_>>()?;
        Var::concat(&scores)
    }

    /// Concept-free cosine between two unit embeddings.
    fn cosine(a: &Var, b: &Var) -> Result<Var> {
        a.dot(b)
    }

    /// The concept of the base select reached by following first
    /// dependencies from `node`.
    fn base_select_concept(&self, program: &Program, mut node: usize) -> Result<String> {
        loop {
            let n = &program.nodes()[node];
            if n.op == OpType::Select {
                let concept = n.concept.ok_or_else(|| {
                    Error::InvalidProgram(format!("select node {node} without concept"))
                })?;
                return Ok(self.vocab.concept_name(concept).to_string());
            }
            node = *n.deps.first().ok_or_else(|| {
                Error::InvalidProgram(format!(
                    "node {node} has no dependencies on the way to a base select"
                ))
            })?;
        }
    }

    /// Execute a program. `weights` (one per node, same indexing as
    /// `program.nodes()`) enables operation calibration; `res_scale` rescales
    /// individual nodes' own results before merging.
    pub fn execute(
        &self,
        program: &Program,
        weights: Option<&[Var]>,
        res_scale: Option<&BTreeMap<usize, f64>>,
    ) -> Result<Execution> {
        if let Some(ws) = weights {
            if ws.len() != program.len() {
                return Err(Error::Shape(format!(
                    "{} calibration weights for {} nodes",
                    ws.len(),
                    program.len()
                )));
            }
        }
        let weight_of = |node: usize| weights.map(|ws| &ws[node]);
        let scale_of =
            |node: usize| res_scale.and_then(|m| m.get(&node).copied()).unwrap_or(1.0);

        let mut outputs: Vec<Option<NodeOut>> = (0..program.len()).map(|_| None).collect();
        // Dependencies always have larger indices, so reverse index order is
        // a valid evaluation order.
        for idx in (0..program.len()).rev() {
            let node = &program.nodes()[idx];
            let dist = |outputs: &[Option<NodeOut>], dep: usize| -> Result<Var> {
                match &outputs[dep] {
                    Some(NodeOut::Dist(v)) => Ok(v.clone()),
                    _ => Err(Error::InvalidProgram(format!(
                        "node {idx} expected an object distribution from node {dep}"
                    ))),
                }
            };
            let scalar = |outputs: &[Option<NodeOut>], dep: usize| -> Result<Var> {
                match &outputs[dep] {
                    Some(NodeOut::Scalar(v)) => Ok(v.clone()),
                    _ => Err(Error::InvalidProgram(format!(
                        "node {idx} expected a scalar from node {dep}"
                    ))),
                }
            };

            let out = match node.op {
                OpType::Select => {
                    let attr = node.attr.expect("validated");
                    let concept = node.concept.expect("validated");
                    let scores: Vec<Var> = (0..self.n_objects())
                        .map(|i| {
                            let e = self.embed_object(attr, i)?;
                            self.concepts
                                .similarity(self.opts.mode, OpType::Select, concept, &e)
                        })
                        .collect::<Result<_>>()?;
                    NodeOut::Dist(Var::concat(&scores)?)
                }
                OpType::Filter => {
                    let attr = node.attr.expect("validated");
                    let concept = node.concept.expect("validated");
                    let d_in = dist(&outputs, node.deps[0])?;
                    let input = self.weighted(&d_in, weight_of(node.deps[0]))?;
                    let scores: Vec<Var> = (0..self.n_objects())
                        .map(|i| {
                            let e = self.embed_object(attr, i)?;
                            let s = self.concepts.similarity(
                                self.opts.mode,
                                OpType::Filter,
                                concept,
                                &e,
                            )?;
                            Ok(if node.neg { s.neg() } else { s })
                        })
                        .collect::<Result<_>>()?;
                    let res = Var::concat(&scores)?;
                    NodeOut::Dist(self.merge(&input, &res, scale_of(idx))?)
                }
                OpType::RelateO | OpType::RelateS => {
                    let rtype = node.rtype.expect("validated");
                    let rel = node.concept.expect("validated");
                    let d1 = dist(&outputs, node.deps[0])?;
                    let d2 = dist(&outputs, node.deps[1])?;
                    let input = self.weighted(&d1, weight_of(node.deps[0]))?;
                    let att2 = self.att(&d2, weight_of(node.deps[1]))?;
                    let mut rows = Vec::with_capacity(self.n_objects());
                    for i in 0..self.n_objects() {
                        let masks: Vec<Var> = (0..self.n_objects())
                            .map(|j| {
                                let pair = if node.op == OpType::RelateO {
                                    self.embed_pair(rtype, i, j)?
                                } else {
                                    self.embed_pair(rtype, j, i)?
                                };
                                self.concepts
                                    .similarity(self.opts.mode, node.op, rel, &pair)
                            })
                            .collect::<Result<_>>()?;
                        rows.push(Var::concat(&masks)?.dot(&att2)?);
                    }
                    let res = Var::concat(&rows)?;
                    NodeOut::Dist(self.merge(&input, &res, scale_of(idx))?)
                }
                OpType::RelateAe => {
                    let attr = node.attr.expect("validated");
                    let d1 = dist(&outputs, node.deps[0])?;
                    let d2 = dist(&outputs, node.deps[1])?;
                    let input = self.weighted(&d1, weight_of(node.deps[0]))?;
                    let att2 = self.att(&d2, weight_of(node.deps[1]))?;
                    let mut rows = Vec::with_capacity(self.n_objects());
                    for i in 0..self.n_objects() {
                        let masks: Vec<Var> = (0..self.n_objects())
                            .map(|j| {
                                Self::cosine(
                                    &self.embed_object(attr, i)?,
                                    &self.embed_object(attr, j)?,
                                )
                            })
                            .collect::<Result<_>>()?;
                        rows.push(Var::concat(&masks)?.dot(&att2)?);
                    }
                    let res = Var::concat(&rows)?;
                    NodeOut::Dist(self.merge(&input, &res, scale_of(idx))?)
                }
                OpType::Query => {
                    let attr = node.attr.expect("validated");
                    let d_in = dist(&outputs, node.deps[0])?;
                    let pooled = self.pool(attr, &d_in, weight_of(node.deps[0]))?;
                    let candidates = self.vocab.candidates(attr).to_vec();
                    let scores = self.candidate_scores(OpType::Query, &pooled, &candidates)?;
                    NodeOut::Answer(AnswerVars::Open {
                        candidates: candidates
                            .iter()
                            .map(|&c| self.vocab.concept_name(c).to_string())
                            .collect(),
                        scores,
                    })
                }
                OpType::QueryRelS | OpType::QueryRelO => {
                    let rtype = node.rtype.expect("validated");
                    // The o-side is the s-side with swapped inputs.
                    let (first, second) = if node.op == OpType::QueryRelS {
                        (node.deps[0], node.deps[1])
                    } else {
                        (node.deps[1], node.deps[0])
                    };
                    let d1 = dist(&outputs, first)?;
                    let d2 = dist(&outputs, second)?;
                    let pooled =
                        self.pool_pair(rtype, &d1, weight_of(first), &d2, weight_of(second))?;
                    let candidates = self.vocab.relation_candidates(rtype).to_vec();
                    let scores =
                        self.candidate_scores(OpType::QueryRelS, &pooled, &candidates)?;
                    NodeOut::Answer(AnswerVars::Open {
                        candidates: candidates
                            .iter()
                            .map(|&c| self.vocab.concept_name(c).to_string())
                            .collect(),
                        scores,
                    })
                }
                OpType::Verify => {
                    let attr = node.attr.expect("validated");
                    let concept = node.concept.expect("validated");
                    let d_in = dist(&outputs, node.deps[0])?;
                    let pooled = self.pool(attr, &d_in, weight_of(node.deps[0]))?;
                    let score = self.concepts.similarity(
                        self.opts.mode,
                        OpType::Verify,
                        concept,
                        &pooled,
                    )?;
                    NodeOut::Answer(AnswerVars::Binary { score })
                }
                OpType::VerifyRelS | OpType::VerifyRelO => {
                    let rtype = node.rtype.expect("validated");
                    let rel = node.concept.expect("validated");
                    let (first, second) = if node.op == OpType::VerifyRelS {
                        (node.deps[0], node.deps[1])
                    } else {
                        (node.deps[1], node.deps[0])
                    };
                    let d1 = dist(&outputs, first)?;
                    let d2 = dist(&outputs, second)?;
                    let pooled =
                        self.pool_pair(rtype, &d1, weight_of(first), &d2, weight_of(second))?;
                    let score = self.concepts.similarity(
                        self.opts.mode,
                        OpType::VerifyRelS,
                        rel,
                        &pooled,
                    )?;
                    NodeOut::Answer(AnswerVars::Binary { score })
                }
                OpType::Choose => {
                    let attr = node.attr.expect("validated");
                    let concept = node.concept.expect("validated");
                    let mut branch_scores = Vec::with_capacity(2);
                    for &dep in &node.deps {
                        let d = dist(&outputs, dep)?;
                        let pooled = self.pool(attr, &d, weight_of(dep))?;
                        branch_scores.push(self.concepts.similarity(
                            self.opts.mode,
                            OpType::Choose,
                            concept,
                            &pooled,
                        )?);
                    }
                    let candidates = [
                        self.base_select_concept(program, node.deps[0])?,
                        self.base_select_concept(program, node.deps[1])?,
                    ];
                    NodeOut::Answer(AnswerVars::Choose {
                        candidates,
                        scores: Var::concat(&branch_scores)?,
                    })
                }
                OpType::Same => {
                    let attr = node.attr.expect("validated");
                    let d_in = dist(&outputs, node.deps[0])?;
                    let att = self.att(&d_in, weight_of(node.deps[0]))?;
                    // Scene-wide unweighted mean embedding.
                    let mut acc: Option<Var> = None;
                    for i in 0..self.n_objects() {
                        let e = self.embed_object(attr, i)?;
                        acc = Some(match acc {
                            Some(a) => a.add(&e)?,
                            None => e,
                        });
                    }
                    let mean = acc
                        .expect("non-empty scene")
                        .scale(1.0 / self.n_objects() as f64)
                        .l2_normalize()?;
                    let cosines: Vec<Var> = (0..self.n_objects())
                        .map(|i| Self::cosine(&self.embed_object(attr, i)?, &mean))
                        .collect::<Result<_>>()?;
                    let score = Var::concat(&cosines)?.dot(&att)?;
                    NodeOut::Answer(AnswerVars::Binary { score })
                }
                OpType::QueryAe => {
                    let attr = node.attr.expect("validated");
                    let d1 = dist(&outputs, node.deps[0])?;
                    let d2 = dist(&outputs, node.deps[1])?;
                    let p1 = self.pool(attr, &d1, weight_of(node.deps[0]))?;
                    let p2 = self.pool(attr, &d2, weight_of(node.deps[1]))?;
                    NodeOut::Answer(AnswerVars::Binary {
                        score: Self::cosine(&p1, &p2)?,
                    })
                }
                OpType::Common => {
                    let d1 = dist(&outputs, node.deps[0])?;
                    let d2 = dist(&outputs, node.deps[1])?;
                    let mut candidates = Vec::new();
                    let mut scores = Vec::new();
                    for attr in self.vocab.attr_ids() {
                        let p1 = self.pool(attr, &d1, weight_of(node.deps[0]))?;
                        let p2 = self.pool(attr, &d2, weight_of(node.deps[1]))?;
                        candidates.push(self.vocab.attr_name(attr).to_string());
                        scores.push(Self::cosine(&p1, &p2)?);
                    }
                    NodeOut::Answer(AnswerVars::Open {
                        candidates,
                        scores: Var::concat(&scores)?,
                    })
                }
                OpType::Exist => {
                    let d_in = dist(&outputs, node.deps[0])?;
                    let scaled = self.weighted(&d_in, weight_of(node.deps[0]))?;
                    NodeOut::Answer(AnswerVars::Binary {
                        score: scaled.max()?,
                    })
                }
                OpType::Intersect | OpType::Union => {
                    let a1 = scalar(&outputs, node.deps[0])?;
                    let a2 = scalar(&outputs, node.deps[1])?;
                    let s1 = self.weighted(&a1, weight_of(node.deps[0]))?;
                    let s2 = self.weighted(&a2, weight_of(node.deps[1]))?;
                    let both = Var::concat(&[s1, s2])?;
                    let score = if node.op == OpType::Intersect {
                        both.min()?
                    } else {
                        both.max()?
                    };
                    NodeOut::Answer(AnswerVars::Binary { score })
                }
            };

            // Scalar-output nodes feeding intersect/union act as scalars.
            let out = match out {
                NodeOut::Answer(AnswerVars::Binary { score }) if idx != 0 => {
                    NodeOut::Scalar(score)
                }
                other => other,
            };
            outputs[idx] = Some(out);
        }

        let trace = program
            .nodes()
            .iter()
            .enumerate()
            .map(|(idx, node)| NodeTrace {
                op: node.op.name().to_string(),
                weight: weights.map(|ws| ws[idx].value()[0]),
                output: outputs[idx].as_ref().expect("evaluated").values(),
            })
            .collect();

        let answer_vars = match outputs.into_iter().next().flatten().expect("root evaluated") {
            NodeOut::Answer(a) => a,
            NodeOut::Scalar(score) => AnswerVars::Binary { score },
            NodeOut::Dist(_) => {
                return Err(Error::InvalidProgram(
                    "root produced an object distribution, not an answer".into(),
                ))
            }
        };
        Ok(Execution {
            answer: answer_vars.decode(self.opts.binary_threshold),
            answer_vars,
            trace,
        })
    }
}
