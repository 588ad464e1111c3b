//! Named parameter storage and its tape bridge.
//!
//! [`ParamStore`] owns every trainable tensor as flat `f64` data keyed by a
//! dotted name (`"concepts.mags"`, `"map.color.w1"`, ...). Checkpoints are a
//! single JSON document; the map is a `BTreeMap` so serialization order is
//! stable. [`Session`] binds a store to a fresh [`Tape`] for one forward/
//! backward pass: each parameter is leased as a tape leaf at most once, so
//! every use shares one node and gradients accumulate in one place.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// One named tensor: logical shape plus row-major data.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    params: BTreeMap<String, Param>,
}

const FORMAT_VERSION: u32 = 1;

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Register a tensor; `data.len()` must equal the product of `shape`.
    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "parameter `{name}`: shape {shape:?} holds {numel} values, got {}",
                data.len()
            )));
        }
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        self.params.insert(name.to_string(), Param { shape, data });
        Ok(())
    }

    pub fn insert_full(&mut self, name: &str, shape: Vec<usize>, value: f64) -> Result<()> {
        let numel: usize = shape.iter().product();
        self.insert(name, shape, vec![value; numel])
    }

    pub fn insert_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        self.insert_full(name, shape, 0.0)
    }

    /// Gaussian init with the given standard deviation.
    pub fn insert_gaussian<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        std: f64,
        rng: &mut R,
    ) -> Result<()> {
        let numel: usize = shape.iter().product();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let data = (0..numel).map(|_| normal.sample(rng)).collect();
        self.insert(name, shape, data)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownSymbol(format!("parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownSymbol(format!("parameter `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Replace the data of an existing parameter, keeping its shape.
    pub fn set_data(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let param = self.get_mut(name)?;
        if param.data.len() != data.len() {
            return Err(Error::Shape(format!(
                "parameter `{name}`: cannot replace {} values with {}",
                param.data.len(),
                data.len()
            )));
        }
        param.data = data;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.params.values().map(|p| p.data.len()).sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            params: self.params.clone(),
        };
        let body = serde_json::to_string(&file)
            .map_err(|e| Error::schema(path.display().to_string(), 0, e.to_string()))?;
        fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: CheckpointFile = serde_json::from_str(&body)
            .map_err(|e| Error::schema(path.display().to_string(), 0, e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(Error::schema(
                path.display().to_string(),
                0,
                format!(
                    "unsupported checkpoint format_version {} (expected {FORMAT_VERSION})",
                    file.format_version
                ),
            ));
        }
        for (name, p) in &file.params {
            let numel: usize = p.shape.iter().product();
            if numel != p.data.len() {
                return Err(Error::schema(
                    path.display().to_string(),
                    0,
                    format!(
                        "parameter `{name}`: shape {:?} holds {numel} values, got {}",
                        p.shape,
                        p.data.len()
                    ),
                ));
            }
            if p.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::schema(
                    path.display().to_string(),
                    0,
                    format!("parameter `{name}` contains non-finite values"),
                ));
            }
        }
        Ok(ParamStore { params: file.params })
    }
}

/// One forward/backward pass over a store: a fresh tape plus memoized
/// parameter leases.
pub struct Session<'s> {
    store: &'s ParamStore,
    tape: Tape,
    bound: RefCell<BTreeMap<String, Var>>,
}

impl<'s> Session<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Session {
            store,
            tape: Tape::new(),
            bound: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn constant(&self, data: Vec<f64>) -> Var {
        self.tape.constant(data)
    }

    pub fn scalar(&self, x: f64) -> Var {
        self.tape.scalar(x)
    }

    /// Lease a parameter onto the tape. Repeated leases of the same name
    /// return the same node.
    pub fn param(&self, name: &str) -> Result<Var> {
        if let Some(v) = self.bound.borrow().get(name) {
            return Ok(v.clone());
        }
        let p = self.store.get(name)?;
        let v = self.tape.constant(p.data.clone());
        self.bound.borrow_mut().insert(name.to_string(), v.clone());
        Ok(v)
    }

    pub fn param_shape(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self.store.get(name)?.shape.clone())
    }

    /// Gradients of every leased parameter after a backward pass.
    pub fn grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.bound
            .borrow()
            .iter()
            .map(|(name, var)| (name.clone(), var.grad()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn insert_validates_shape_and_duplicates() {
        let mut store = ParamStore::new();
        store.insert("a", vec![2, 3], vec![0.0; 6]).unwrap();
        assert!(store.insert("a", vec![1], vec![0.0]).is_err());
        assert!(store.insert("b", vec![2, 2], vec![0.0; 3]).is_err());
        assert_eq!(store.numel(), 6);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact_and_stable() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        store.insert_gaussian("w.net", vec![3, 4], 0.1, &mut rng).unwrap();
        store.insert_full("mags", vec![5], 1.0).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        store.save(&path).unwrap();
        let loaded = ParamStore::load(&path).unwrap();
        assert_eq!(store, loaded);

        // Re-saving the loaded store produces byte-identical output.
        let path2 = dir.path().join("ckpt2.json");
        loaded.save(&path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );

        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("{\"format_version\":1"));
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");

        std::fs::write(&path, r#"{"format_version":2,"params":{}}"#).unwrap();
        assert!(ParamStore::load(&path).is_err());

        std::fs::write(
            &path,
            r#"{"format_version":1,"params":{"x":{"shape":[3],"data":[1.0]}}}"#,
        )
        .unwrap();
        assert!(ParamStore::load(&path).is_err());
    }

    #[test]
    fn session_memoizes_leases_and_collects_grads() {
        let mut store = ParamStore::new();
        store.insert("w", vec![2], vec![3.0, -1.0]).unwrap();
        let session = Session::new(&store);
        let w1 = session.param("w").unwrap();
        let w2 = session.param("w").unwrap();
        // Same tape node: using the parameter twice accumulates into one grad.
        let y = w1.dot(&w2).unwrap();
        y.backward().unwrap();
        let grads = session.grads();
        assert_eq!(grads["w"], vec![6.0, -2.0]);
        assert_eq!(session.tape().len(), 2); // one leaf + one dot

        assert!(session.param("missing").is_err());
    }
}
