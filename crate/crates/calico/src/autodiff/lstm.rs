//! LSTM and bidirectional LSTM built from tape primitives.
//!
//! Parameters for one direction live under a dotted prefix:
//! `{prefix}.w_ih` of shape `[4h, in]`, `{prefix}.w_hh` of shape `[4h, h]`,
//! and `{prefix}.bias` of shape `[4h]`. Gates are packed in the order
//! `[input, forget, cell, output]`. Initial hidden and cell states are zero.
//! A bidirectional layer owns `{prefix}.fwd` and `{prefix}.bwd` directions
//! and emits, per position, the concatenation of the forward state at that
//! position and the backward state at the mirrored position (`2h` values).

use rand::Rng;

use crate::autodiff::params::{ParamStore, Session};
use crate::autodiff::Var;
use crate::error::{Error, Result};

/// Leased parameters of one LSTM direction.
pub struct LstmDirection {
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    hidden: usize,
}

/// Register one direction's parameters.
pub fn register_lstm_direction<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    input_dim: usize,
    hidden: usize,
    std: f64,
    rng: &mut R,
) -> Result<()> {
    store.insert_gaussian(&format!("{prefix}.w_ih"), vec![4 * hidden, input_dim], std, rng)?;
    store.insert_gaussian(&format!("{prefix}.w_hh"), vec![4 * hidden, hidden], std, rng)?;
    store.insert_zeros(&format!("{prefix}.bias"), vec![4 * hidden])
}

/// Register both directions of a bidirectional layer.
pub fn register_bilstm<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    input_dim: usize,
    hidden: usize,
    std: f64,
    rng: &mut R,
) -> Result<()> {
    register_lstm_direction(store, &format!("{prefix}.fwd"), input_dim, hidden, std, rng)?;
    register_lstm_direction(store, &format!("{prefix}.bwd"), input_dim, hidden, std, rng)
}

impl LstmDirection {
    pub fn lease(session: &Session, prefix: &str) -> Result<Self> {
        let bias = session.param(&format!("{prefix}.bias"))?;
        if bias.len() % 4 != 0 {
            return Err(Error::Shape(format!(
                "LSTM `{prefix}`: bias length {} is not 4h",
                bias.len()
            )));
        }
        Ok(LstmDirection {
            w_ih: session.param(&format!("{prefix}.w_ih"))?,
            w_hh: session.param(&format!("{prefix}.w_hh"))?,
            bias,
            hidden: 0,
        }
        .with_hidden())
    }

    fn with_hidden(mut self) -> Self {
        self.hidden = self.bias.len() / 4;
        self
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step: `(h, c) -> (h', c')`.
    fn step(&self, x: &Var, h: &Var, c: &Var) -> Result<(Var, Var)> {
        let hn = self.hidden;
        let gates = self
            .w_ih
            .matvec(x)?
            .add(&self.w_hh.matvec(h)?)?
            .add(&self.bias)?;
        let i = gates.slice(0, hn)?.sigmoid();
        let f = gates.slice(hn, hn)?.sigmoid();
        let g = gates.slice(2 * hn, hn)?.tanh();
        let o = gates.slice(3 * hn, hn)?.sigmoid();
        let c_next = f.mul(c)?.add(&i.mul(&g)?)?;
        let h_next = o.mul(&c_next.tanh())?;
        Ok((h_next, c_next))
    }

    /// Hidden state per input position, scanning left to right.
    pub fn forward(&self, inputs: &[Var]) -> Result<Vec<Var>> {
        let tape = self.bias.tape();
        let mut h = tape.constant(vec![0.0; self.hidden]);
        let mut c = tape.constant(vec![0.0; self.hidden]);
        let mut states = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (h2, c2) = self.step(x, &h, &c)?;
            h = h2;
            c = c2;
            states.push(h.clone());
        }
        Ok(states)
    }
}

/// Run a bidirectional layer registered under `prefix` over a sequence.
/// Output `i` is `[fwd_state_i ; bwd_state_i]`, length `2h`.
pub fn bilstm_forward(session: &Session, prefix: &str, inputs: &[Var]) -> Result<Vec<Var>> {
    let fwd = LstmDirection::lease(session, &format!("{prefix}.fwd"))?;
    let bwd = LstmDirection::lease(session, &format!("{prefix}.bwd"))?;
    let fwd_states = fwd.forward(inputs)?;
    let reversed: Vec<Var> = inputs.iter().rev().cloned().collect();
    let mut bwd_states = bwd.forward(&reversed)?;
    bwd_states.reverse();
    fwd_states
        .iter()
        .zip(bwd_states.iter())
        .map(|(f, b)| Var::concat(&[f.clone(), b.clone()]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plain-f64 reimplementation used as the oracle.
    fn reference_lstm(
        w_ih: &[f64],
        w_hh: &[f64],
        bias: &[f64],
        hidden: usize,
        input_dim: usize,
        inputs: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let mut h = vec![0.0; hidden];
        let mut c = vec![0.0; hidden];
        let mut out = Vec::new();
        for x in inputs {
            let mut gates = bias.to_vec();
            for r in 0..4 * hidden {
                for k in 0..input_dim {
                    gates[r] += w_ih[r * input_dim + k] * x[k];
                }
                for k in 0..hidden {
                    gates[r] += w_hh[r * hidden + k] * h[k];
                }
            }
            let mut h2 = vec![0.0; hidden];
            let mut c2 = vec![0.0; hidden];
            for j in 0..hidden {
                let i_g = sigmoid(gates[j]);
                let f_g = sigmoid(gates[hidden + j]);
                let g_g = gates[2 * hidden + j].tanh();
                let o_g = sigmoid(gates[3 * hidden + j]);
                c2[j] = f_g * c[j] + i_g * g_g;
                h2[j] = o_g * c2[j].tanh();
            }
            h = h2;
            c = c2;
            out.push(h.clone());
        }
        out
    }

    #[test]
    fn forward_matches_reference_loop() {
        let (input_dim, hidden) = (3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        register_lstm_direction(&mut store, "seq", input_dim, hidden, 0.5, &mut rng).unwrap();

        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..input_dim).map(|j| ((i * 3 + j) as f64).sin()).collect())
            .collect();

        let session = Session::new(&store);
        let dir = LstmDirection::lease(&session, "seq").unwrap();
        let vars: Vec<Var> = inputs.iter().map(|x| session.constant(x.clone())).collect();
        let states = dir.forward(&vars).unwrap();

        let expect = reference_lstm(
            &store.get("seq.w_ih").unwrap().data,
            &store.get("seq.w_hh").unwrap().data,
            &store.get("seq.bias").unwrap().data,
            hidden,
            input_dim,
            &inputs,
        );
        for (got, want) in states.iter().zip(expect.iter()) {
            for (a, b) in got.value().iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bilstm_concatenates_mirrored_directions() {
        let (input_dim, hidden) = (2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        register_bilstm(&mut store, "bi", input_dim, hidden, 0.4, &mut rng).unwrap();

        let inputs: Vec<Vec<f64>> =
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5], vec![0.2, 0.2]];
        let session = Session::new(&store);
        let vars: Vec<Var> = inputs.iter().map(|x| session.constant(x.clone())).collect();
        let out = bilstm_forward(&session, "bi", &vars).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|v| v.len() == 2 * hidden));

        // Forward half equals the unidirectional scan; backward half equals a
        // scan over the reversed sequence, read back mirrored.
        let fwd = LstmDirection::lease(&session, "bi.fwd").unwrap();
        let fwd_states = fwd.forward(&vars).unwrap();
        let bwd = LstmDirection::lease(&session, "bi.bwd").unwrap();
        let rev: Vec<Var> = vars.iter().rev().cloned().collect();
        let bwd_states = bwd.forward(&rev).unwrap();
        for i in 0..4 {
            let v = out[i].value();
            assert_eq!(&v[..hidden], &fwd_states[i].value()[..]);
            assert_eq!(&v[hidden..], &bwd_states[3 - i].value()[..]);
        }
    }

    #[test]
    fn single_position_sequence_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        register_bilstm(&mut store, "bi", 2, 2, 0.3, &mut rng).unwrap();
        let session = Session::new(&store);
        let out = bilstm_forward(&session, "bi", &[session.constant(vec![0.5, -0.5])]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 4);
    }
}
