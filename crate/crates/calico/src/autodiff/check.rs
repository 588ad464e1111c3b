//! Central-difference gradient verification.
//!
//! [`grad_check`] evaluates a scalar function twice per perturbed component
//! and compares `(f(x+h) - f(x-h)) / 2h` against the tape gradient. Only
//! parameters the function actually leases are checked. Large tensors can be
//! subsampled with a seeded choice of components so the check stays cheap on
//! real models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::params::{ParamStore, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative disagreement seen.
    pub max_rel_err: f64,
    /// Parameter holding the worst component.
    pub worst_param: String,
    /// Flat index of the worst component.
    pub worst_index: usize,
    /// Number of components compared.
    pub components_checked: usize,
}

/// Relative error with a floor so near-zero gradients compare on an absolute
/// scale.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn eval_scalar<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&Session) -> Result<Var>,
{
    let session = Session::new(store);
    let y = f(&session)?;
    let v = y.scalar_value()?;
    if !v.is_finite() {
        return Err(Error::Shape(format!("gradient check: non-finite output {v}")));
    }
    Ok(v)
}

/// Compare tape gradients of `f` against central differences of size `step`.
///
/// `max_components_per_param` caps how many components of each leased tensor
/// are perturbed; `seed` fixes which ones. `None` checks every component.
pub fn grad_check<F>(
    store: &mut ParamStore,
    f: F,
    step: f64,
    max_components_per_param: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&Session) -> Result<Var>,
{
    let analytic = {
        let session = Session::new(store);
        let y = f(&session)?;
        if !y.scalar_value()?.is_finite() {
            return Err(Error::Shape("gradient check: non-finite output".into()));
        }
        y.backward()?;
        session.grads()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        components_checked: 0,
    };

    let names: Vec<String> = analytic.keys().cloned().collect();
    for name in names {
        let numel = store.get(&name)?.data.len();
        let indices: Vec<usize> = match max_components_per_param {
            Some(k) if numel > k => rand::seq::index::sample(&mut rng, numel, k).into_vec(),
            _ => (0..numel).collect(),
        };
        for i in indices {
            let old = store.get(&name)?.data[i];
            store.get_mut(&name)?.data[i] = old + step;
            let plus = eval_scalar(store, &f)?;
            store.get_mut(&name)?.data[i] = old - step;
            let minus = eval_scalar(store, &f)?;
            store.get_mut(&name)?.data[i] = old;

            let numeric = (plus - minus) / (2.0 * step);
            let err = rel_err(analytic[&name][i], numeric);
            report.components_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::lstm::{bilstm_forward, register_bilstm};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_composite_passes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        store.insert_gaussian("w1", vec![4, 3], 0.8, &mut rng).unwrap();
        store.insert_gaussian("b1", vec![4], 0.5, &mut rng).unwrap();
        store.insert_gaussian("w2", vec![2, 4], 0.8, &mut rng).unwrap();

        let report = grad_check(
            &mut store,
            |s| {
                let x = s.constant(vec![0.3, -0.7, 1.1]);
                let h = s.param("w1")?.matvec(&x)?.add(&s.param("b1")?)?.tanh();
                let out = s.param("w2")?.matvec(&h)?.softmax()?;
                out.slice(0, 1)?.ln().neg().mean()
            },
            1e-6,
            None,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-7, "rel err {}", report.max_rel_err);
        assert_eq!(report.components_checked, 4 * 3 + 4 + 2 * 4);
    }

    #[test]
    fn normalized_similarity_passes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        store.insert_gaussian("e", vec![6], 1.0, &mut rng).unwrap();
        store.insert_gaussian("c", vec![6], 1.0, &mut rng).unwrap();

        let report = grad_check(
            &mut store,
            |s| {
                let e = s.param("e")?.l2_normalize()?;
                let c = s.param("c")?.l2_normalize()?;
                e.dot(&c)
            },
            1e-6,
            None,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn bilstm_with_loss_passes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        register_bilstm(&mut store, "bi", 3, 2, 0.6, &mut rng).unwrap();
        store.insert_gaussian("head", vec![1, 4], 0.6, &mut rng).unwrap();

        let report = grad_check(
            &mut store,
            |s| {
                let xs = vec![
                    s.constant(vec![0.2, -0.4, 0.9]),
                    s.constant(vec![-1.0, 0.3, 0.1]),
                    s.constant(vec![0.5, 0.5, -0.5]),
                ];
                let states = bilstm_forward(s, "bi", &xs)?;
                let mut acc = s.scalar(0.0);
                for h in &states {
                    let w = s.param("head")?.matvec(h)?.sigmoid();
                    acc = acc.add(&w)?;
                }
                Ok(acc)
            },
            1e-6,
            None,
            17,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-6, "rel err {}", report.max_rel_err);
    }

    #[test]
    fn subsampling_caps_work() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        store.insert_gaussian("big", vec![10, 10], 0.5, &mut rng).unwrap();
        let report = grad_check(
            &mut store,
            |s| {
                let x = s.constant((0..10).map(|i| (i as f64 * 0.37).cos()).collect());
                s.param("big")?.matvec(&x)?.sum().mean()
            },
            1e-6,
            Some(7),
            99,
        )
        .unwrap();
        assert_eq!(report.components_checked, 7);
        assert!(report.max_rel_err < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_graphs_agree_with_finite_differences(
            xs in proptest::collection::vec(-2.0f64..2.0, 5),
            ws in proptest::collection::vec(-1.5f64..1.5, 20),
            shift in -0.5f64..0.5,
        ) {
            // Keep inputs away from the relu kink so the numeric derivative
            // is well defined.
            prop_assume!(xs.iter().all(|x| x.abs() > 1e-2));
            let mut store = ParamStore::new();
            store.insert("w", vec![4, 5], ws).unwrap();
            store.insert("x", vec![5], xs).unwrap();
            let report = grad_check(
                &mut store,
                |s| {
                    let x = s.param("x")?;
                    let hidden = s.param("w")?.matvec(&x.relu())?;
                    let gated = hidden.sigmoid().mul(&hidden.tanh())?;
                    let mixed = Var::concat(&[gated.softmax()?, x.l2_normalize()?])?;
                    let top = mixed.scale(1.0 + shift).max()?;
                    top.add(&mixed.mean()?)
                },
                1e-6,
                None,
                0,
            ).unwrap();
            prop_assert!(report.max_rel_err < 1e-5, "rel err {}", report.max_rel_err);
        }
    }
}
