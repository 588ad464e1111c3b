//! Operation calibration: a contextual weight per program node.
//!
//! Each node is embedded as the concatenation of a type embedding, an
//! attribute-family embedding, and a concept embedding (dedicated null rows
//! stand in when a node has no attribute or concept; relationship arguments
//! are concepts). A bidirectional LSTM reads the nodes in pre-order and a
//! sigmoid head turns each position's state into a weight in (0, 1). The
//! executor multiplies a node's output by its weight wherever a parent
//! consumes it, so a low weight mutes an operation in context while the raw
//! logit stays available for threshold-based pruning analyses.
//!
//! The concept table can be dedicated (`opcal.concept_emb`) or shared with
//! the executor's concept directions; [`predict_weights`] detects which was
//! registered.

use rand::Rng;

use crate::autodiff::lstm::{bilstm_forward, register_bilstm};
use crate::autodiff::params::{ParamStore, Session};
use crate::autodiff::Var;
use crate::concepts::PARAM_DIRS;
use crate::error::{Error, Result};
use crate::program::{Program, OP_TYPES};
use crate::vocab::Vocabulary;

/// Architecture of the weight predictor.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct OpcalConfig {
    pub type_dim: usize,
    pub attr_dim: usize,
    pub concept_dim: usize,
    /// Hidden size per LSTM direction.
    pub hidden: usize,
    /// Reuse the executor's concept directions instead of a dedicated table.
    pub share_concept_table: bool,
    pub init_std: f64,
}

impl Default for OpcalConfig {
    fn default() -> Self {
        OpcalConfig {
            type_dim: 16,
            attr_dim: 16,
            concept_dim: 32,
            hidden: 64,
            share_concept_table: false,
            init_std: 0.1,
        }
    }
}

/// Register every weight-predictor parameter.
pub fn register_opcal<R: Rng>(
    store: &mut ParamStore,
    vocab: &Vocabulary,
    cfg: &OpcalConfig,
    rng: &mut R,
) -> Result<()> {
    store.insert_gaussian(
        "opcal.type_emb",
        vec![OP_TYPES.len(), cfg.type_dim],
        cfg.init_std,
        rng,
    )?;
    store.insert_gaussian(
        "opcal.attr_emb",
        vec![vocab.n_attrs() + 1, cfg.attr_dim],
        cfg.init_std,
        rng,
    )?;
    let concept_dim = if cfg.share_concept_table {
        let dim = store.get(PARAM_DIRS)?.shape[1];
        store.insert_gaussian("opcal.concept_null", vec![dim], cfg.init_std, rng)?;
        dim
    } else {
        store.insert_gaussian(
            "opcal.concept_emb",
            vec![vocab.n_concepts() + 1, cfg.concept_dim],
            cfg.init_std,
            rng,
        )?;
        cfg.concept_dim
    };
    let input_dim = cfg.type_dim + cfg.attr_dim + concept_dim;
    register_bilstm(store, "opcal.lstm", input_dim, cfg.hidden, cfg.init_std, rng)?;
    store.insert_gaussian("opcal.head.w", vec![1, 2 * cfg.hidden], cfg.init_std, rng)?;
    store.insert_zeros("opcal.head.b", vec![1])
}

/// Weights and pre-sigmoid logits, indexed by program node.
pub struct OpWeights {
    pub weights: Vec<Var>,
    pub logits: Vec<Var>,
}

impl OpWeights {
    pub fn weight_values(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.value()[0]).collect()
    }

    pub fn logit_values(&self) -> Vec<f64> {
        self.logits.iter().map(|l| l.value()[0]).collect()
    }
}

fn table_row(table: &Var, row: usize, dim: usize) -> Result<Var> {
    table.slice(row * dim, dim)
}

/// Predict one (weight, logit) pair per node of `program`.
pub fn predict_weights(
    session: &Session,
    vocab: &Vocabulary,
    program: &Program,
) -> Result<OpWeights> {
    let type_emb = session.param("opcal.type_emb")?;
    let type_dim = session.param_shape("opcal.type_emb")?[1];
    let attr_emb = session.param("opcal.attr_emb")?;
    let attr_dim = session.param_shape("opcal.attr_emb")?[1];
    let attr_null = vocab.n_attrs();

    // Dedicated table if registered, otherwise the shared directions plus a
    // null row.
    let dedicated = session.store().contains("opcal.concept_emb");
    let (concept_emb, concept_dim, concept_null) = if dedicated {
        let shape = session.param_shape("opcal.concept_emb")?;
        (session.param("opcal.concept_emb")?, shape[1], None)
    } else {
        let shape = session.param_shape(PARAM_DIRS)?;
        (
            session.param(PARAM_DIRS)?,
            shape[1],
            Some(session.param("opcal.concept_null")?),
        )
    };

    let order = program.preorder();
    let mut inputs = Vec::with_capacity(order.len());
    for &idx in &order {
        let node = &program.nodes()[idx];
        let t = table_row(&type_emb, node.op.index(), type_dim)?;
        let a = table_row(&attr_emb, node.attr.unwrap_or(attr_null), attr_dim)?;
        let c = match (node.concept, &concept_null) {
            (Some(concept), _) => table_row(&concept_emb, concept, concept_dim)?,
            (None, Some(null)) => null.clone(),
            (None, None) => table_row(&concept_emb, vocab.n_concepts(), concept_dim)?,
        };
        inputs.push(Var::concat(&[t, a, c])?);
    }

    let states = bilstm_forward(session, "opcal.lstm", &inputs)?;
    let head_w = session.param("opcal.head.w")?;
    let head_b = session.param("opcal.head.b")?;

    let mut weights: Vec<Option<Var>> = vec![None; program.len()];
    let mut logits: Vec<Option<Var>> = vec![None; program.len()];
    for (pos, &idx) in order.iter().enumerate() {
        let logit = head_w.matvec(&states[pos])?.add(&head_b)?;
        weights[idx] = Some(logit.sigmoid());
        logits[idx] = Some(logit);
    }
    let unwrap_all = |v: Vec<Option<Var>>| -> Result<Vec<Var>> {
        v.into_iter()
            .enumerate()
            .map(|(i, x)| {
                x.ok_or_else(|| Error::InvalidProgram(format!("node {i} missing from pre-order")))
            })
            .collect()
    };
    Ok(OpWeights {
        weights: unwrap_all(weights)?,
        logits: unwrap_all(logits)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, sigmoid};
    use crate::concepts::register_concepts;
    use crate::vocab::tests::tiny_vocab;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(share: bool, seed: u64) -> (Vocabulary, ParamStore) {
        let vocab = tiny_vocab();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        register_concepts(&mut store, vocab.n_concepts(), 12, 0.4, &mut rng).unwrap();
        let cfg = OpcalConfig {
            type_dim: 6,
            attr_dim: 4,
            concept_dim: 8,
            hidden: 5,
            share_concept_table: share,
            init_std: 0.4,
        };
        register_opcal(&mut store, &vocab, &cfg, &mut rng).unwrap();
        (vocab, store)
    }

    #[test]
    fn one_weight_per_node_in_open_interval() {
        let (vocab, store) = setup(false, 1);
        let program = Program::parse(
            "exist(relate_s[spatial](left_of; filter[color](black; select[name](bag)), select[name](girl)))",
            &vocab,
        )
        .unwrap();
        let session = Session::new(&store);
        let out = predict_weights(&session, &vocab, &program).unwrap();
        assert_eq!(out.weights.len(), program.len());
        assert_eq!(out.logits.len(), program.len());
        for (w, l) in out.weight_values().iter().zip(out.logit_values().iter()) {
            assert!(*w > 0.0 && *w < 1.0);
            assert!((w - sigmoid(*l)).abs() < 1e-15);
        }
    }

    #[test]
    fn prediction_is_deterministic_and_context_sensitive() {
        let (vocab, store) = setup(false, 2);
        let p1 = Program::parse("exist(filter[color](black; select[name](bag)))", &vocab).unwrap();
        let session = Session::new(&store);
        let a = predict_weights(&session, &vocab, &p1).unwrap().weight_values();
        let b = predict_weights(&session, &vocab, &p1).unwrap().weight_values();
        assert_eq!(a, b);

        // Same select node, different context -> different weight for it.
        let p2 = Program::parse("exist(filter[color](white; select[name](bag)))", &vocab).unwrap();
        let c = predict_weights(&session, &vocab, &p2).unwrap().weight_values();
        assert!((a[2] - c[2]).abs() > 1e-9, "context must matter: {} vs {}", a[2], c[2]);
    }

    #[test]
    fn shared_concept_table_draws_rows_from_directions() {
        let (vocab, store) = setup(true, 3);
        assert!(!store.contains("opcal.concept_emb"));
        assert!(store.contains("opcal.concept_null"));
        let program = Program::parse("exist(select[name](bag))", &vocab).unwrap();
        let session = Session::new(&store);
        let out = predict_weights(&session, &vocab, &program).unwrap();
        assert_eq!(out.weights.len(), 2);

        // Gradients reach the shared directions through the predictor.
        let mut store2 = store.clone();
        let report = grad_check(
            &mut store2,
            |s| {
                let out = predict_weights(s, &vocab, &program)?;
                Var::concat(&out.weights)?.sum().mean()
            },
            1e-6,
            Some(10),
            7,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
        let session2 = Session::new(&store2);
        let out2 = predict_weights(&session2, &vocab, &program).unwrap();
        out2.weights[0].backward().unwrap();
        let grads = session2.grads();
        assert!(grads.contains_key(PARAM_DIRS));
        assert!(grads[PARAM_DIRS].iter().any(|g| *g != 0.0));
    }

    #[test]
    fn gradients_flow_through_all_tables() {
        let (vocab, mut store) = setup(false, 4);
        let program = Program::parse(
            "intersect(exist(select[name](bag)), exist(filter[color](black; select[name](box))))",
            &vocab,
        )
        .unwrap();
        let report = grad_check(
            &mut store,
            |s| {
                let out = predict_weights(s, &vocab, &program)?;
                Var::concat(&out.weights)?.sum().mean()
            },
            1e-6,
            Some(8),
            5,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }
}
