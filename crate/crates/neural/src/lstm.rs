//! LSTM cell with gate order (input, forget, candidate, output).

use rand::Rng;

use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::{Scalar, Tensor};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
}

impl LstmCell {
    /// Registers `wx [D, 4H]`, `wh [H, 4H]` and `b [4H]` (forget bias 1).
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let wx = store.add(format!("{prefix}.wx"), Tensor::uniform(&[input, 4 * hidden], bound, rng));
        let wh = store.add(format!("{prefix}.wh"), Tensor::uniform(&[hidden, 4 * hidden], bound, rng));
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        let b = store.add(format!("{prefix}.b"), bias);
        Self {
            input,
            hidden,
            wx,
            wh,
            b,
        }
    }

    pub fn nodes<T: Scalar>(&self, g: &mut Graph<T>, store: &ParamStore<T>) -> LstmNodes {
        LstmNodes {
            hidden: self.hidden,
            wx: g.param(store, self.wx),
            wh: g.param(store, self.wh),
            b: g.param(store, self.b),
        }
    }
}

/// Parameter nodes of a cell placed on one graph, reused across unrolled steps.
#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    pub hidden: usize,
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
}

impl LstmNodes {
    /// One step on `x [B, D]`, `h [B, H]`, `c [B, H]`; returns `(h', c')`.
    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId, h: NodeId, c: NodeId) -> Result<(NodeId, NodeId)> {
        let hd = self.hidden;
        let xw = g.matmul(x, self.wx)?;
        let hw = g.matmul(h, self.wh)?;
        let s = g.add(xw, hw)?;
        let pre = g.add_row(s, self.b)?;
        let i_pre = g.slice_cols(pre, 0, hd)?;
        let f_pre = g.slice_cols(pre, hd, 2 * hd)?;
        let g_pre = g.slice_cols(pre, 2 * hd, 3 * hd)?;
        let o_pre = g.slice_cols(pre, 3 * hd, 4 * hd)?;
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let cand = g.tanh(g_pre);
        let o = g.sigmoid(o_pre);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_new = g.add(keep, write)?;
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc)?;
        Ok((h_new, c_new))
    }
}

/// Plain forward step on single vectors.
pub fn lstm_step<T: Scalar>(
    store: &ParamStore<T>,
    cell: &LstmCell,
    x: &[T],
    h: &[T],
    c: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    let mut g = Graph::new();
    let nodes = cell.nodes(&mut g, store);
    let xn = g.input(Tensor::from_vec(&[1, x.len()], x.to_vec())?);
    let hn = g.input(Tensor::from_vec(&[1, h.len()], h.to_vec())?);
    let cn = g.input(Tensor::from_vec(&[1, c.len()], c.to_vec())?);
    let (h2, c2) = nodes.step(&mut g, xn, hn, cn)?;
    Ok((g.value(h2).data().to_vec(), g.value(c2).data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::<f64>::new();
        let cell = LstmCell::register(&mut store, "lstm", 3, 4, &mut rng);
        for id in 0..store.len() {
            store.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (h, _) = lstm_step(&store, &cell, &[1.0, -2.0, 3.0], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::<f64>::new();
        let cell = LstmCell::register(&mut store, "lstm", 2, 3, &mut rng);
        let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
        for t in 0..50 {
            let x = [100.0 * (t as f64).sin(), -50.0];
            let out = lstm_step(&store, &cell, &x, &h, &c).unwrap();
            h = out.0;
            c = out.1;
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
