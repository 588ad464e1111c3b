//! Scenes: objects with boxes and detector-style score vectors.
//!
//! Two on-disk forms, both JSONL (one scene per line):
//!
//! * score scenes — what the executor consumes: per object a box and an
//!   opaque feature vector. For symbolic corpora the vector is one slot per
//!   class followed by one slot per attribute value; dense visual features are
//!   supported as opaque vectors of any fixed width.
//! * gold scenes — ground truth: per object a class and attribute values per
//!   family, plus explicit relationship triples between object indices.
//!
//! Boxes are `[x1, y1, x2, y2]`. Score scenes carry pixel dimensions and are
//! normalized to [0, 1] at load; gold scenes are stored normalized.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

pub const BOX_FEATURES: usize = 8;
pub const PAIR_GEOMETRY: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneObject {
    /// Normalized [x1, y1, x2, y2].
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.objects.first().map_or(0, |o| o.features.len())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldObject {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub class: String,
    /// Attribute values per family; families may be absent or multi-valued.
    pub attributes: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Relation {
    /// Subject object index.
    pub s: usize,
    /// Object (target) object index.
    pub o: usize,
    pub rel: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldScene {
    pub id: String,
    pub objects: Vec<GoldObject>,
    pub relations: Vec<Relation>,
}

/// Expanded per-object box features: `[x1, y1, x2, y2, w, h, cx, cy]`.
pub fn box_features(b: &[f64; 4]) -> [f64; BOX_FEATURES] {
    let w = b[2] - b[0];
    let h = b[3] - b[1];
    [
        b[0],
        b[1],
        b[2],
        b[3],
        w,
        h,
        b[0] + w / 2.0,
        b[1] + h / 2.0,
    ]
}

/// Relative geometry of an ordered object pair `(i, j)`:
/// `[cx_j - cx_i, cy_j - cy_i, ln(w_i / w_j), ln(h_i / h_j)]`.
pub fn pair_geometry(bi: &[f64; 4], bj: &[f64; 4]) -> [f64; PAIR_GEOMETRY] {
    let fi = box_features(bi);
    let fj = box_features(bj);
    [
        fj[6] - fi[6],
        fj[7] - fi[7],
        (fi[4] / fj[4]).ln(),
        (fi[5] / fj[5]).ln(),
    ]
}

fn check_box(b: &[f64; 4], path: &str, line: usize) -> Result<()> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::schema(path, line, "non-finite box coordinate"));
    }
    if b[2] <= b[0] || b[3] <= b[1] {
        return Err(Error::schema(
            path,
            line,
            format!("degenerate box [{}, {}, {}, {}]", b[0], b[1], b[2], b[3]),
        ));
    }
    Ok(())
}

fn validate_scene(scene: &mut Scene, path: &str, line: usize) -> Result<()> {
    if scene.objects.is_empty() {
        return Err(Error::schema(path, line, "scene has zero objects"));
    }
    let usable = |d: f64| d.is_finite() && d > 0.0;
    if !usable(scene.width) || !usable(scene.height) {
        return Err(Error::schema(path, line, "non-positive scene dimensions"));
    }
    let dim = scene.objects[0].features.len();
    for obj in &mut scene.objects {
        obj.bbox[0] /= scene.width;
        obj.bbox[2] /= scene.width;
        obj.bbox[1] /= scene.height;
        obj.bbox[3] /= scene.height;
        check_box(&obj.bbox, path, line)?;
        if obj.features.len() != dim {
            return Err(Error::schema(
                path,
                line,
                format!(
                    "feature width {} differs from first object's {}",
                    obj.features.len(),
                    dim
                ),
            ));
        }
        if obj.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema(path, line, "non-finite feature value"));
        }
    }
    Ok(())
}

fn validate_gold(scene: &GoldScene, path: &str, line: usize) -> Result<()> {
    if scene.objects.is_empty() {
        return Err(Error::schema(path, line, "scene has zero objects"));
    }
    for obj in &scene.objects {
        check_box(&obj.bbox, path, line)?;
    }
    for r in &scene.relations {
        if r.s >= scene.objects.len() || r.o >= scene.objects.len() {
            return Err(Error::schema(
                path,
                line,
                format!("relation ({}, {}, {}) references a missing object", r.s, r.rel, r.o),
            ));
        }
    }
    Ok(())
}

/// Stream score scenes from a JSONL file, normalizing boxes and validating as
/// records are pulled. Blank lines are skipped; an empty file is an empty
/// stream.
pub fn scene_reader(path: &Path) -> Result<impl Iterator<Item = Result<Scene>>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let lines = BufReader::new(file).lines().enumerate();
    Ok(lines.filter_map(move |(lineno, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::io(display.clone(), e))),
        };
        if line.trim().is_empty() {
            return None;
        }
        let parsed: std::result::Result<Scene, _> = serde_json::from_str(&line);
        Some(match parsed {
            Ok(mut scene) => {
                validate_scene(&mut scene, &display, lineno + 1).map(|()| scene)
            }
            Err(e) => Err(Error::schema(display.clone(), lineno + 1, e.to_string())),
        })
    }))
}

pub fn load_scenes(path: &Path) -> Result<Vec<Scene>> {
    scene_reader(path)?.collect()
}

pub fn gold_reader(path: &Path) -> Result<impl Iterator<Item = Result<GoldScene>>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(display.clone(), e))?;
    let lines = BufReader::new(file).lines().enumerate();
    Ok(lines.filter_map(move |(lineno, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(Error::io(display.clone(), e))),
        };
        if line.trim().is_empty() {
            return None;
        }
        let parsed: std::result::Result<GoldScene, _> = serde_json::from_str(&line);
        Some(match parsed {
            Ok(scene) => validate_gold(&scene, &display, lineno + 1).map(|()| scene),
            Err(e) => Err(Error::schema(display.clone(), lineno + 1, e.to_string())),
        })
    }))
}

pub fn load_gold_scenes(path: &Path) -> Result<Vec<GoldScene>> {
    gold_reader(path)?.collect()
}

pub fn save_scenes(path: &Path, scenes: &[Scene]) -> Result<()> {
    write_jsonl(path, scenes)
}

pub fn save_gold_scenes(path: &Path, scenes: &[GoldScene]) -> Result<()> {
    write_jsonl(path, scenes)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let display = path.display().to_string();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(display.clone(), e))?,
    );
    for r in records {
        let line =
            serde_json::to_string(r).map_err(|e| Error::schema(display.clone(), 0, e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(display.clone(), e))?;
    }
    Ok(())
}

/// Convert a gold scene to a score scene: one-hot class slot plus multi-hot
/// attribute-value slots. Every feature row sums to `1 + #values present`.
pub fn gold_to_features(gold: &GoldScene, vocab: &Vocabulary) -> Result<Scene> {
    let dim = vocab.feature_dim();
    let mut objects = Vec::with_capacity(gold.objects.len());
    for obj in &gold.objects {
        let mut features = vec![0.0; dim];
        let class = vocab.concept_id(&obj.class)?;
        if vocab.is_relation(class) || vocab.family_of(class) != Some(0) {
            return Err(Error::UnknownSymbol(format!(
                "`{}` is not an object class",
                obj.class
            )));
        }
        features[vocab.feature_index(class).unwrap()] = 1.0;
        for (family, values) in &obj.attributes {
            let aid = vocab.attr_id(family)?;
            if aid == 0 {
                return Err(Error::Config(
                    "family `name` cannot appear in the attribute map".into(),
                ));
            }
            for value in values {
                let cid = vocab.concept_id(value)?;
                if !vocab.candidates(aid).contains(&cid) {
                    return Err(Error::UnknownSymbol(format!(
                        "`{value}` is not a {family} value"
                    )));
                }
                features[vocab.feature_index(cid).unwrap()] = 1.0;
            }
        }
        objects.push(SceneObject {
            bbox: obj.bbox,
            features,
        });
    }
    Ok(Scene {
        id: gold.id.clone(),
        width: 1.0,
        height: 1.0,
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::RelType;

    fn vocab() -> Vocabulary {
        Vocabulary::new(
            vec!["bag".into(), "girl".into(), "box".into()],
            vec![("color".into(), vec!["black".into(), "white".into()])],
            vec![(RelType::Spatial, vec!["left_of".into()])],
            7,
            0.25,
        )
        .unwrap()
    }

    fn gold_scene() -> GoldScene {
        GoldScene {
            id: "s0".into(),
            objects: vec![
                GoldObject {
                    bbox: [0.1, 0.1, 0.4, 0.5],
                    class: "bag".into(),
                    attributes: BTreeMap::from([("color".into(), vec!["black".into()])]),
                },
                GoldObject {
                    bbox: [0.5, 0.2, 0.9, 0.8],
                    class: "girl".into(),
                    attributes: BTreeMap::new(),
                },
            ],
            relations: vec![Relation {
                s: 0,
                o: 1,
                rel: "left_of".into(),
            }],
        }
    }

    #[test]
    fn gold_features_are_one_and_multi_hot() {
        let v = vocab();
        let scene = gold_to_features(&gold_scene(), &v).unwrap();
        // bag + black: exactly two ones, in the right slots.
        assert_eq!(scene.objects[0].features, vec![1.0, 0.0, 0.0, 1.0, 0.0]);
        // girl with no attributes: attribute block all zeros.
        assert_eq!(scene.objects[1].features, vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        for (obj, gold) in scene.objects.iter().zip(&gold_scene().objects) {
            let present: usize = gold.attributes.values().map(Vec::len).sum();
            let sum: f64 = obj.features.iter().sum();
            assert_eq!(sum, 1.0 + present as f64);
        }
    }

    #[test]
    fn gold_features_reject_unknown_symbols() {
        let v = vocab();
        let mut g = gold_scene();
        g.objects[0].class = "dragon".into();
        assert!(matches!(
            gold_to_features(&g, &v),
            Err(Error::UnknownSymbol(_))
        ));
        let mut g = gold_scene();
        g.objects[0]
            .attributes
            .insert("color".into(), vec!["bag".into()]);
        assert!(matches!(
            gold_to_features(&g, &v),
            Err(Error::UnknownSymbol(_))
        ));
    }

    #[test]
    fn boxes_normalize_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.jsonl");
        let scene = Scene {
            id: "s0".into(),
            width: 200.0,
            height: 100.0,
            objects: vec![SceneObject {
                bbox: [20.0, 10.0, 100.0, 60.0],
                features: vec![1.0, 0.0],
            }],
        };
        save_scenes(&path, &[scene]).unwrap();
        let loaded = load_scenes(&path).unwrap();
        assert_eq!(loaded[0].objects[0].bbox, [0.1, 0.1, 0.5, 0.6]);
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"width\":1.0,\"height\":1.0,\"objects\":[{\"box\":[0,0,1,1],\"features\":[1.0]}]}\nnot json\n",
        )
        .unwrap();
        let err = load_scenes(&path).unwrap_err();
        match err {
            Error::Schema { line, .. } => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn zero_object_scene_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"width\":1.0,\"height\":1.0,\"objects\":[]}\n",
        )
        .unwrap();
        assert!(matches!(
            load_scenes(&path).unwrap_err(),
            Error::Schema { .. }
        ));
    }

    #[test]
    fn non_finite_features_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"width\":1.0,\"height\":1.0,\"objects\":[{\"box\":[0,0,1,1],\"features\":[null]}]}\n",
        )
        .unwrap();
        assert!(load_scenes(&path).is_err());
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenes.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_scenes(&path).unwrap().is_empty());
    }

    #[test]
    fn gold_roundtrip_and_relation_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        let g = gold_scene();
        save_gold_scenes(&path, std::slice::from_ref(&g)).unwrap();
        let loaded = load_gold_scenes(&path).unwrap();
        assert_eq!(loaded[0].objects[0].class, g.objects[0].class);
        assert_eq!(loaded[0].relations[0].rel, "left_of");

        let mut bad = g;
        bad.relations[0].o = 9;
        save_gold_scenes(&path, &[bad]).unwrap();
        assert!(load_gold_scenes(&path).is_err());
    }

    #[test]
    fn geometry_helpers() {
        let b = [0.1, 0.2, 0.5, 0.8];
        let f = box_features(&b);
        assert_eq!(f, [0.1, 0.2, 0.5, 0.8, 0.5 - 0.1, 0.8 - 0.2, 0.30000000000000004, 0.5]);
        let g = pair_geometry(&b, &b);
        assert_eq!(g, [0.0, 0.0, 0.0, 0.0]);
    }
}
