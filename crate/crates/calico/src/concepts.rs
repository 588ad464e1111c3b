//! Concept directions, calibrated magnitudes, and the three similarity modes.
//!
//! Every concept in the vocabulary owns a direction vector (row of
//! `concepts.dirs`). A separate table `concepts.mags` holds one scalar
//! magnitude per (operation type, concept) pair, initialized to 1.0, so the
//! executor can sharpen or soften a concept's influence per operation without
//! moving the shared direction. Object embeddings are unit length everywhere;
//! the mode decides how the concept side enters the score:
//!
//! * [`SimMode::Normalized`]: cosine — the direction is normalized too.
//! * [`SimMode::Unnormalized`]: raw dot — the direction's length acts as a
//!   global (operation-independent) magnitude.
//! * [`SimMode::Calibrated`]: cosine scaled by the per-(operation, concept)
//!   magnitude.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::{ParamStore, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::program::{OpType, OP_TYPES};
use crate::vocab::{ConceptId, Vocabulary};

pub const PARAM_DIRS: &str = "concepts.dirs";
pub const PARAM_MAGS: &str = "concepts.mags";

/// How a concept enters a similarity score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Normalized,
    Unnormalized,
    Calibrated,
}

impl SimMode {
    pub fn name(self) -> &'static str {
        match self {
            SimMode::Normalized => "normalized",
            SimMode::Unnormalized => "unnormalized",
            SimMode::Calibrated => "calibrated",
        }
    }
}

impl fmt::Display for SimMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(SimMode::Normalized),
            "unnormalized" => Ok(SimMode::Unnormalized),
            "calibrated" => Ok(SimMode::Calibrated),
            other => Err(Error::Config(format!(
                "unknown similarity mode `{other}` (expected normalized|unnormalized|calibrated)"
            ))),
        }
    }
}

/// Register concept parameters: Gaussian directions, unit magnitudes.
pub fn register_concepts<R: Rng>(
    store: &mut ParamStore,
    n_concepts: usize,
    dim: usize,
    std: f64,
    rng: &mut R,
) -> Result<()> {
    store.insert_gaussian(PARAM_DIRS, vec![n_concepts, dim], std, rng)?;
    store.insert_full(PARAM_MAGS, vec![OP_TYPES.len(), n_concepts], 1.0)
}

/// Per-concept frequency/magnitude pairs: concept name, ln(1 + count), and
/// the concept's mean learned magnitude across operation types. `counts`
/// maps concept id to how often it occurs as an operation argument in a
/// question set; absent concepts count zero.
pub fn magnitude_frequency_rows(
    store: &ParamStore,
    vocab: &Vocabulary,
    counts: &BTreeMap<ConceptId, usize>,
) -> Result<Vec<(String, f64, f64)>> {
    let mags = store.get(PARAM_MAGS)?;
    if mags.shape.len() != 2 || mags.shape[1] != vocab.n_concepts() {
        return Err(Error::Shape(format!(
            "`{PARAM_MAGS}` has shape {:?}, expected [ops, {}]",
            mags.shape,
            vocab.n_concepts()
        )));
    }
    let (n_ops, n_concepts) = (mags.shape[0], mags.shape[1]);
    Ok((0..n_concepts)
        .map(|c| {
            let count = counts.get(&c).copied().unwrap_or(0);
            let mean_mag = (0..n_ops).map(|op| mags.data[op * n_concepts + c]).sum::<f64>()
                / n_ops as f64;
            (
                vocab.concept_name(c).to_string(),
                ((1 + count) as f64).ln(),
                mean_mag,
            )
        })
        .collect())
}

/// Which vocabulary entries an external embedding file covered.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub total: usize,
    pub found: usize,
    pub missing: Vec<String>,
}

/// Register directions from a JSON map `{concept name: [f64; dim]}`.
/// Concepts absent from the file fall back to Gaussian vectors; the report
/// says which ones.
pub fn register_concepts_from_file<R: Rng>(
    store: &mut ParamStore,
    vocab: &Vocabulary,
    dim: usize,
    path: &Path,
    fallback_std: f64,
    rng: &mut R,
) -> Result<CoverageReport> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let table: BTreeMap<String, Vec<f64>> = serde_json::from_str(&body)
        .map_err(|e| Error::schema(path.display().to_string(), 0, e.to_string()))?;

    register_concepts(store, vocab.n_concepts(), dim, fallback_std, rng)?;
    let mut report = CoverageReport {
        total: vocab.n_concepts(),
        found: 0,
        missing: Vec::new(),
    };
    let dirs = store.get_mut(PARAM_DIRS)?;
    for id in 0..vocab.n_concepts() {
        let name = vocab.concept_name(id);
        match table.get(name) {
            Some(row) => {
                if row.len() != dim {
                    return Err(Error::schema(
                        path.display().to_string(),
                        0,
                        format!("embedding `{name}` has {} values, expected {dim}", row.len()),
                    ));
                }
                dirs.data[id * dim..(id + 1) * dim].copy_from_slice(row);
                report.found += 1;
            }
            None => report.missing.push(name.to_string()),
        }
    }
    Ok(report)
}

/// Concept parameters leased onto a tape for one pass.
pub struct ConceptVars {
    dirs: Var,
    mags: Var,
    dim: usize,
    n_concepts: usize,
    raw_cache: RefCell<BTreeMap<usize, Var>>,
    unit_cache: RefCell<BTreeMap<usize, Var>>,
    mag_cache: RefCell<BTreeMap<(usize, usize), Var>>,
}

impl ConceptVars {
    pub fn lease(session: &Session) -> Result<Self> {
        let shape = session.param_shape(PARAM_DIRS)?;
        if shape.len() != 2 {
            return Err(Error::Shape(format!(
                "`{PARAM_DIRS}` must be 2-d, got {shape:?}"
            )));
        }
        Ok(ConceptVars {
            dirs: session.param(PARAM_DIRS)?,
            mags: session.param(PARAM_MAGS)?,
            n_concepts: shape[0],
            dim: shape[1],
            raw_cache: RefCell::new(BTreeMap::new()),
            unit_cache: RefCell::new(BTreeMap::new()),
            mag_cache: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_concepts(&self) -> usize {
        self.n_concepts
    }

    fn check_id(&self, concept: usize) -> Result<()> {
        if concept >= self.n_concepts {
            return Err(Error::UnknownSymbol(format!("concept id {concept}")));
        }
        Ok(())
    }

    /// Stored (un-normalized) direction row.
    pub fn raw_direction(&self, concept: usize) -> Result<Var> {
        self.check_id(concept)?;
        if let Some(v) = self.raw_cache.borrow().get(&concept) {
            return Ok(v.clone());
        }
        let v = self.dirs.slice(concept * self.dim, self.dim)?;
        self.raw_cache.borrow_mut().insert(concept, v.clone());
        Ok(v)
    }

    /// Unit-length direction row.
    pub fn unit_direction(&self, concept: usize) -> Result<Var> {
        self.check_id(concept)?;
        if let Some(v) = self.unit_cache.borrow().get(&concept) {
            return Ok(v.clone());
        }
        let v = self.raw_direction(concept)?.l2_normalize()?;
        self.unit_cache.borrow_mut().insert(concept, v.clone());
        Ok(v)
    }

    /// Per-(operation, concept) magnitude as a length-1 tape node.
    pub fn magnitude(&self, op: OpType, concept: usize) -> Result<Var> {
        self.check_id(concept)?;
        let key = (op.index(), concept);
        if let Some(v) = self.mag_cache.borrow().get(&key) {
            return Ok(v.clone());
        }
        let v = self.mags.slice(op.index() * self.n_concepts + concept, 1)?;
        self.mag_cache.borrow_mut().insert(key, v.clone());
        Ok(v)
    }

    /// Similarity of a unit-length object embedding to a concept, under the
    /// given mode, for the operation asking.
    pub fn similarity(
        &self,
        mode: SimMode,
        op: OpType,
        concept: usize,
        unit_embedding: &Var,
    ) -> Result<Var> {
        match mode {
            SimMode::Normalized => unit_embedding.dot(&self.unit_direction(concept)?),
            SimMode::Unnormalized => unit_embedding.dot(&self.raw_direction(concept)?),
            SimMode::Calibrated => {
                let cos = unit_embedding.dot(&self.unit_direction(concept)?)?;
                // scalar * scalar via elementwise product
                cos.mul(&self.magnitude(op, concept)?)
            }
        }
    }
}
