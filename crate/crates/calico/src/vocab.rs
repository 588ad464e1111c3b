//! Vocabulary: the symbol tables shared by programs, scenes, and the model.
//!
//! Three id spaces:
//! * concepts — one dense id space covering object classes, attribute values,
//!   and relationship names (relationships share the concept table so they can
//!   be scored by the same similarity machinery);
//! * attributes — the attribute families an operation can carry (`name`,
//!   `color`, ...); family `name`'s values are the object classes;
//! * relationship types — the fixed three-way grouping of relationships.
//!
//! Ids are dense and stable: they are assigned in declaration order (classes,
//! then family values in family order, then relationships in rtype order) and
//! round-trip through the JSON form unchanged.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ConceptId = usize;
pub type AttrId = usize;

pub const YES: &str = "yes";
pub const NO: &str = "no";

/// Relationship type group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelType {
    Spatial,
    Semantic,
    SpatialSemantic,
}

pub const REL_TYPES: [RelType; 3] = [RelType::Spatial, RelType::Semantic, RelType::SpatialSemantic];

impl RelType {
    pub fn name(self) -> &'static str {
        match self {
            RelType::Spatial => "spatial",
            RelType::Semantic => "semantic",
            RelType::SpatialSemantic => "spatial_semantic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(RelType::Spatial),
            "semantic" => Ok(RelType::Semantic),
            "spatial_semantic" => Ok(RelType::SpatialSemantic),
            other => Err(Error::UnknownSymbol(other.to_string())),
        }
    }

    pub fn index(self) -> usize {
        match self {
            RelType::Spatial => 0,
            RelType::Semantic => 1,
            RelType::SpatialSemantic => 2,
        }
    }
}

impl fmt::Display for RelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Serialized form of [`Vocabulary`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabFile {
    classes: Vec<String>,
    families: Vec<FamilyFile>,
    relations: Vec<RelGroupFile>,
    relation_table_seed: u64,
    relation_density: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FamilyFile {
    name: String,
    values: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RelGroupFile {
    rtype: RelType,
    values: Vec<String>,
}

/// Symbol tables plus the seeded relationship truth table.
///
/// The truth table makes relationship ground truth a deterministic function of
/// the two object classes: `relation_holds(rel, a, b)` answers whether class
/// `a` stands in `rel` to class `b`, anywhere. Scenes list the induced pairs
/// explicitly, so consumers of scene files never need the table; it exists so
/// that corpus generation and reference executor configurations agree exactly.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    concept_names: Vec<String>,
    concept_index: HashMap<String, ConceptId>,
    attr_names: Vec<String>,
    attr_index: HashMap<String, AttrId>,
    /// Concept ids per attribute family (family `name` maps to the classes).
    attr_values: Vec<Vec<ConceptId>>,
    /// Concept ids per relationship type group.
    rel_values: [Vec<ConceptId>; 3],
    n_classes: usize,
    relation_table_seed: u64,
    relation_density: f64,
}

impl Vocabulary {
    /// Build a vocabulary. `families` excludes the implicit `name` family.
    pub fn new(
        classes: Vec<String>,
        families: Vec<(String, Vec<String>)>,
        relations: Vec<(RelType, Vec<String>)>,
        relation_table_seed: u64,
        relation_density: f64,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("vocabulary needs at least one class".into()));
        }
        if !(0.0..=1.0).contains(&relation_density) {
            return Err(Error::Config(format!(
                "relation density {relation_density} outside [0, 1]"
            )));
        }
        let mut concept_names = Vec::new();
        let mut concept_index = HashMap::new();
        let reserve = |name: &str, index: &mut HashMap<String, ConceptId>,
                       names: &mut Vec<String>|
         -> Result<ConceptId> {
            if name.is_empty() {
                return Err(Error::Config("empty symbol name".into()));
            }
            if name == YES || name == NO {
                return Err(Error::Config(format!(
                    "symbol `{name}` collides with a reserved answer token"
                )));
            }
            if index.contains_key(name) {
                return Err(Error::Config(format!("duplicate symbol `{name}`")));
            }
            let id = names.len();
            names.push(name.to_string());
            index.insert(name.to_string(), id);
            Ok(id)
        };

        let mut attr_names = vec!["name".to_string()];
        let mut attr_values: Vec<Vec<ConceptId>> = vec![Vec::new()];
        for c in &classes {
            let id = reserve(c, &mut concept_index, &mut concept_names)?;
            attr_values[0].push(id);
        }
        let mut attr_index = HashMap::new();
        attr_index.insert("name".to_string(), 0usize);
        for (fname, values) in &families {
            if attr_index.contains_key(fname) {
                return Err(Error::Config(format!("duplicate attribute family `{fname}`")));
            }
            if values.is_empty() {
                return Err(Error::Config(format!("attribute family `{fname}` is empty")));
            }
            let aid = attr_names.len();
            attr_index.insert(fname.clone(), aid);
            attr_names.push(fname.clone());
            let mut ids = Vec::new();
            for v in values {
                ids.push(reserve(v, &mut concept_index, &mut concept_names)?);
            }
            attr_values.push(ids);
        }
        // Family names share the answer space with concepts (the `common`
        // module answers with a family name), so keep them disjoint too.
        for fname in &attr_names {
            if concept_index.contains_key(fname) {
                return Err(Error::Config(format!(
                    "attribute family `{fname}` collides with a concept name"
                )));
            }
        }

        let mut rel_values: [Vec<ConceptId>; 3] = Default::default();
        for (rtype, values) in &relations {
            for v in values {
                let id = reserve(v, &mut concept_index, &mut concept_names)?;
                rel_values[rtype.index()].push(id);
            }
        }

        Ok(Vocabulary {
            concept_names,
            concept_index,
            attr_names,
            attr_index,
            attr_values,
            rel_values,
            n_classes: classes.len(),
            relation_table_seed,
            relation_density,
        })
    }

    /// Total number of concepts (classes + attribute values + relationships).
    pub fn n_concepts(&self) -> usize {
        self.concept_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_attrs(&self) -> usize {
        self.attr_names.len()
    }

    /// Width of an object feature vector: one slot per class, then one per
    /// attribute value. Relationships have no feature slot.
    pub fn feature_dim(&self) -> usize {
        self.n_classes + self.attr_values[1..].iter().map(Vec::len).sum::<usize>()
    }

    /// Feature slot of a class or attribute-value concept; `None` for
    /// relationships.
    pub fn feature_index(&self, concept: ConceptId) -> Option<usize> {
        if concept < self.feature_dim() {
            Some(concept)
        } else {
            None
        }
    }

    pub fn concept_name(&self, id: ConceptId) -> &str {
        &self.concept_names[id]
    }

    pub fn concept_id(&self, name: &str) -> Result<ConceptId> {
        self.concept_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    pub fn attr_name(&self, id: AttrId) -> &str {
        &self.attr_names[id]
    }

    pub fn attr_id(&self, name: &str) -> Result<AttrId> {
        self.attr_index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    /// All attribute family ids, `name` first.
    pub fn attr_ids(&self) -> std::ops::Range<AttrId> {
        0..self.attr_names.len()
    }

    /// Candidate concepts of an attribute family (classes for `name`).
    pub fn candidates(&self, attr: AttrId) -> &[ConceptId] {
        &self.attr_values[attr]
    }

    /// Candidate relationships of a type group.
    pub fn relation_candidates(&self, rtype: RelType) -> &[ConceptId] {
        &self.rel_values[rtype.index()]
    }

    /// All relationship concept ids with their groups.
    pub fn relations(&self) -> impl Iterator<Item = (RelType, ConceptId)> + '_ {
        REL_TYPES
            .iter()
            .flat_map(move |&rt| self.rel_values[rt.index()].iter().map(move |&id| (rt, id)))
    }

    /// Which family an attribute-value concept belongs to (including `name`).
    pub fn family_of(&self, concept: ConceptId) -> Option<AttrId> {
        for (aid, vals) in self.attr_values.iter().enumerate() {
            if vals.contains(&concept) {
                return Some(aid);
            }
        }
        None
    }

    pub fn rtype_of(&self, concept: ConceptId) -> Option<RelType> {
        REL_TYPES
            .into_iter()
            .find(|rt| self.rel_values[rt.index()].contains(&concept))
    }

    pub fn is_relation(&self, concept: ConceptId) -> bool {
        concept >= self.feature_dim()
    }

    /// Whether class `a` stands in relationship `rel` to class `b`, per the
    /// seeded global truth table.
    pub fn relation_holds(&self, rel: ConceptId, class_a: ConceptId, class_b: ConceptId) -> bool {
        debug_assert!(self.is_relation(rel));
        debug_assert!(class_a < self.n_classes && class_b < self.n_classes);
        let h = mix64(
            self.relation_table_seed
                ^ (rel as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
                ^ (class_a as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9)
                ^ (class_b as u64).wrapping_mul(0x94d0_49bb_1331_11eb),
        );
        // Top 53 bits as a uniform fraction in [0, 1).
        let frac = (h >> 11) as f64 / (1u64 << 53) as f64;
        frac < self.relation_density
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = VocabFile {
            classes: self.concept_names[..self.n_classes].to_vec(),
            families: self
                .attr_names
                .iter()
                .enumerate()
                .skip(1)
                .map(|(aid, name)| FamilyFile {
                    name: name.clone(),
                    values: self.attr_values[aid]
                        .iter()
                        .map(|&c| self.concept_names[c].clone())
                        .collect(),
                })
                .collect(),
            relations: REL_TYPES
                .iter()
                .filter(|rt| !self.rel_values[rt.index()].is_empty())
                .map(|&rt| RelGroupFile {
                    rtype: rt,
                    values: self.rel_values[rt.index()]
                        .iter()
                        .map(|&c| self.concept_names[c].clone())
                        .collect(),
                })
                .collect(),
            relation_table_seed: self.relation_table_seed,
            relation_density: self.relation_density,
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::schema(path.display().to_string(), 0, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: VocabFile = serde_json::from_str(&text)
            .map_err(|e| Error::schema(path.display().to_string(), 0, e.to_string()))?;
        Vocabulary::new(
            file.classes,
            file.families
                .into_iter()
                .map(|f| (f.name, f.values))
                .collect(),
            file.relations
                .into_iter()
                .map(|r| (r.rtype, r.values))
                .collect(),
            file.relation_table_seed,
            file.relation_density,
        )
    }
}

/// SplitMix64 finalizer; a platform-stable hash for seeded truth tables.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
