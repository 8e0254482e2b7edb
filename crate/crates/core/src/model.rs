// SPDX-License-Identifier: Apache-2.0

//! The embedding network: GCN layers, attention top-k pooling with a tanh
//! gate, and a readout over the kept nodes.
//!
//! [`forward`] keeps every intermediate so [`Forward::backward`] can return
//! exact parameter gradients. Top-k selection and max-readout winners are
//! treated as constants when differentiating.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encode::{GraphTensors, NodeKind, Propagation};
use crate::linalg::{Matrix, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Readout {
    Max,
    Mean,
    Sum,
}

impl Readout {
    pub fn code(self) -> u8 {
        match self {
            Self::Max => 0,
            Self::Mean => 1,
            Self::Sum => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::Max),
            1 => Some(Self::Mean),
            2 => Some(Self::Sum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub input_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub pool_ratio: f64,
    pub readout: Readout,
    pub dropout: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { input_dim: NodeKind::COUNT, layers: 2, hidden: 16, pool_ratio: 0.5, readout: Readout::Max, dropout: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("invalid hyperparameters: {0}")]
    Hyper(&'static str),
    #[error("feature width {got} does not match the model input width {expected}")]
    Vocabulary { expected: usize, got: usize },
}

impl Hyper {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 || self.hidden == 0 || self.input_dim == 0 {
            return Err(ModelError::Hyper("layers, hidden and input_dim must be positive"));
        }
        if !(self.pool_ratio > 0.0 && self.pool_ratio <= 1.0) {
            return Err(ModelError::Hyper("pool_ratio must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Hyper("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// `(d_in, d_out)` of every GCN layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.layers).map(|l| (if l == 0 { self.input_dim } else { self.hidden }, self.hidden)).collect()
    }
}

/// Trainable weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: Hyper,
    pub gcn: Vec<Matrix>,
    /// `hidden × 1` attention projection.
    pub score: Matrix,
}

impl ModelParams {
    /// Glorot-uniform weights from a seeded stream.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self, ModelError> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |r: usize, c: usize| {
            let a = libm::sqrt(6.0 / (r + c) as f64);
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-a..a)).collect())
        };
        let gcn = hyper.layer_shapes().into_iter().map(|(i, o)| glorot(i, o)).collect();
        let score = glorot(hyper.hidden, 1);
        Ok(Self { hyper, gcn, score })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hyper: self.hyper,
            gcn: self.gcn.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            score: Matrix::zeros(self.score.rows(), 1),
        }
    }

    /// Every weight matrix, GCN layers first.
    pub fn tensors(&self) -> Vec<&Matrix> {
        self.gcn.iter().chain(core::iter::once(&self.score)).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.gcn.iter_mut().chain(core::iter::once(&mut self.score)).collect()
    }

    pub fn check(&self) -> Result<(), ModelError> {
        self.hyper.validate()?;
        let shapes = self.hyper.layer_shapes();
        if self.gcn.len() != shapes.len() {
            return Err(ModelError::Hyper("layer count does not match weights"));
        }
        for (w, &s) in self.gcn.iter().zip(&shapes) {
            if w.shape() != s {
                return Err(ShapeError { op: "gcn weight", lhs: w.shape(), rhs: s }.into());
            }
        }
        if self.score.shape() != (self.hyper.hidden, 1) {
            return Err(ShapeError { op: "score weight", lhs: self.score.shape(), rhs: (self.hyper.hidden, 1) }.into());
        }
        Ok(())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<(), ShapeError> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, scale)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}

/// Graph-level embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `σ(P · X · W)`, computed as `P · (X · W)`.
pub fn gcn_layer(x: &Matrix, p: &Propagation, w: &Matrix, relu: bool) -> Result<Matrix, ShapeError> {
    let z = p.apply(&x.matmul(w)?)?;
    Ok(if relu { z.map(|v| v.max(0.0)) } else { z })
}

/// Number of nodes kept by pooling: `⌈ratio · n⌉`, at least one.
pub fn pool_size(n: usize, ratio: f64) -> usize {
    (libm::ceil(ratio * n as f64) as usize).clamp(1, n.max(1))
}

/// Indices of the `k` largest scores, ties to the smaller index, returned in
/// ascending index order.
pub fn top_k(alpha: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub alpha: Vec<f64>,
    pub selected: Vec<usize>,
    /// `tanh(alpha)` of the selected nodes.
    pub gates: Vec<f64>,
    /// `k × d`: selected rows scaled by their gate.
    pub x: Matrix,
}

/// Scores `α = P · Xprop · s`, keeps the top `⌈ratio · n⌉` nodes and gates
/// their rows by `tanh(α)`.
pub fn sag_pool(xprop: &Matrix, p: &Propagation, score: &Matrix, ratio: f64) -> Result<Pooled, ShapeError> {
    let alpha = p.apply(&xprop.matmul(score)?)?.into_vec();
    let selected = top_k(&alpha, pool_size(xprop.rows(), ratio));
    let gates: Vec<f64> = selected.iter().map(|&i| libm::tanh(alpha[i])).collect();
    let mut x = xprop.select_rows(&selected);
    for (r, g) in gates.iter().enumerate() {
        x.row_mut(r).iter_mut().for_each(|v| *v *= g);
    }
    Ok(Pooled { alpha, selected, gates, x })
}

/// Induced subgraph of a dense adjacency on the pooled nodes.
pub fn pool_adjacency(a: &Matrix, selected: &[usize]) -> Matrix {
    a.submatrix(selected)
}

/// Column-wise aggregate. For `Max`, also the winning row of each column
/// (first on ties).
pub fn readout(x: &Matrix, mode: Readout) -> Option<(Embedding, Vec<usize>)> {
    let (k, d) = x.shape();
    if k == 0 {
        return None;
    }
    let mut out = vec![0.0; d];
    let mut arg = vec![0usize; d];
    match mode {
        Readout::Max => {
            out.copy_from_slice(x.row(0));
            for r in 1..k {
                for (c, v) in x.row(r).iter().enumerate() {
                    if *v > out[c] {
                        out[c] = *v;
                        arg[c] = r;
                    }
                }
            }
        }
        Readout::Sum | Readout::Mean => {
            for r in 0..k {
                for (o, v) in out.iter_mut().zip(x.row(r)) {
                    *o += v;
                }
            }
            if mode == Readout::Mean {
                out.iter_mut().for_each(|o| *o /= k as f64);
            }
        }
    }
    Some((Embedding(out), arg))
}

/// Inverted-dropout masks for one forward pass, one `n × hidden` matrix per
/// layer with entries `0` or `1 / (1 - rate)`.
pub fn dropout_masks(hyper: &Hyper, n: usize, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 - hyper.dropout;
    (0..hyper.layers)
        .map(|_| {
            let data =
                (0..n * hyper.hidden).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
            Matrix::from_vec(n, hyper.hidden, data)
        })
        .collect()
}

/// Everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input of each layer: `X`, then the (masked) activations.
    pub inputs: Vec<Matrix>,
    /// Pre-activation `P · H · W` of each layer.
    pub pre: Vec<Matrix>,
    pub masks: Option<Vec<Matrix>>,
    /// Output of the last layer.
    pub xprop: Matrix,
    pub pool: Pooled,
    pub argmax: Vec<usize>,
    pub embedding: Embedding,
}

pub fn forward(g: &GraphTensors, params: &ModelParams, masks: Option<Vec<Matrix>>) -> Result<Forward, ModelError> {
    if g.x.cols() != params.hyper.input_dim {
        return Err(ModelError::Vocabulary { expected: params.hyper.input_dim, got: g.x.cols() });
    }
    let mut inputs = Vec::with_capacity(params.gcn.len());
    let mut pre = Vec::with_capacity(params.gcn.len());
    let mut h = g.x.clone();
    for (l, w) in params.gcn.iter().enumerate() {
        let z = gcn_layer(&h, &g.p, w, false)?;
        let mut a = z.map(|v| v.max(0.0));
        if let Some(m) = &masks {
            a = a.hadamard(&m[l])?;
        }
        inputs.push(h);
        pre.push(z);
        h = a;
    }
    let pool = sag_pool(&h, &g.p, &params.score, params.hyper.pool_ratio)?;
    let (embedding, argmax) = readout(&pool.x, params.hyper.readout).expect("pooling keeps at least one node");
    Ok(Forward { inputs, pre, masks, xprop: h, pool, argmax, embedding })
}

/// Embeds a graph. With `training`, dropout masks are drawn from `seed`;
/// otherwise `seed` is ignored and the result is deterministic.
pub fn embed(g: &GraphTensors, params: &ModelParams, training: bool, seed: u64) -> Result<Embedding, ModelError> {
    let masks = (training && params.hyper.dropout > 0.0).then(|| dropout_masks(&params.hyper, g.n(), seed));
    Ok(forward(g, params, masks)?.embedding)
}

impl Forward {
    /// Parameter gradients given `dL/dh` for this graph's embedding.
    pub fn backward(&self, g: &GraphTensors, params: &ModelParams, dh: &[f64]) -> Result<ModelParams, ShapeError> {
        let (k, d) = self.pool.x.shape();
        let n = self.xprop.rows();
        let mut dy = Matrix::zeros(k, d);
        match params.hyper.readout {
            Readout::Max => {
                for (c, &r) in self.argmax.iter().enumerate() {
                    dy[(r, c)] = dh[c];
                }
            }
            Readout::Sum => (0..k).for_each(|r| dy.row_mut(r).copy_from_slice(dh)),
            Readout::Mean => (0..k).for_each(|r| dy.row_mut(r).iter_mut().zip(dh).for_each(|(o, v)| *o = v / k as f64)),
        }
        let mut dxp = Matrix::zeros(n, d);
        let mut dalpha = Matrix::zeros(n, 1);
        for (r, &i) in self.pool.selected.iter().enumerate() {
            let t = self.pool.gates[r];
            let mut dot = 0.0;
            for c in 0..d {
                dxp[(i, c)] += dy[(r, c)] * t;
                dot += dy[(r, c)] * self.xprop[(i, c)];
            }
            dalpha[(i, 0)] += dot * (1.0 - t * t);
        }
        let dq = g.p.apply(&dalpha)?;
        let dscore = self.xprop.t_matmul(&dq)?;
        dxp.add_scaled(&dq.matmul_t(&params.score)?, 1.0)?;

        let mut grads = vec![Matrix::zeros(0, 0); params.gcn.len()];
        let mut dh_l = dxp;
        for l in (0..params.gcn.len()).rev() {
            let mut dz = match &self.masks {
                Some(m) => dh_l.hadamard(&m[l])?,
                None => dh_l,
            };
            for (v, z) in dz.as_mut_slice().iter_mut().zip(self.pre[l].as_slice()) {
                if *z <= 0.0 {
                    *v = 0.0;
                }
            }
            let du = g.p.apply(&dz)?;
            grads[l] = self.inputs[l].t_matmul(&du)?;
            dh_l = du.matmul_t(&params.gcn[l])?;
        }
        Ok(ModelParams { hyper: params.hyper, gcn: grads, score: dscore })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::Vocabulary;

    fn path3() -> GraphTensors {
        GraphTensors::from_parts(
            &[NodeKind::Output, NodeKind::Xor, NodeKind::Input],
            &[(0, 1), (1, 2)],
            &Vocabulary::default(),
        )
        .unwrap()
    }

    #[test]
    fn identity_propagation() {
        let p = Propagation::Dense(Matrix::identity(2));
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 3.0]]);
        assert_eq!(gcn_layer(&x, &p, &Matrix::identity(2), true).unwrap(), x);
        let x = Matrix::from_rows(&[&[1.0, -2.0]]);
        let p1 = Propagation::Dense(Matrix::identity(1));
        assert_eq!(gcn_layer(&x, &p1, &Matrix::identity(2), true).unwrap(), Matrix::from_rows(&[&[1.0, 0.0]]));
    }

    #[test]
    fn gcn_layer_on_path_fixture() {
        // P for the 3-path, X and W small by hand; expected = relu(P X W)
        // evaluated with exact fractions: P X W row 0 = [1/2 + 2/√6·(-1), ...].
        let g = path3();
        let x = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let w = Matrix::from_rows(&[&[1.0, -1.0], &[2.0, 0.5]]);
        let got = gcn_layer(&x, &g.p, &w, false).unwrap();
        let s6 = 6f64.sqrt();
        let xw = [[1.0, -1.0], [2.0, 0.5], [3.0, -0.5]];
        let p = [[0.5, 1.0 / s6, 0.0], [1.0 / s6, 1.0 / 3.0, 1.0 / s6], [0.0, 1.0 / s6, 0.5]];
        for i in 0..3 {
            for j in 0..2 {
                let e: f64 = (0..3).map(|k| p[i][k] * xw[k][j]).sum();
                assert!((got[(i, j)] - e).abs() < 1e-14, "{i},{j}");
            }
        }
    }

    #[test]
    fn pooling_keeps_ceiling_half() {
        assert_eq!(pool_size(1, 0.5), 1);
        assert_eq!(pool_size(5, 0.5), 3);
        assert_eq!(pool_size(4, 0.5), 2);
        assert_eq!(top_k(&[0.9, 0.1, -0.3, 0.8], 2), vec![0, 3]);
        assert_eq!(top_k(&[0.5, 0.5], 1), vec![0]);
    }

    #[test]
    fn readout_modes() {
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 0.0]]);
        assert_eq!(readout(&x, Readout::Max).unwrap().0 .0, vec![3.0, 2.0]);
        assert_eq!(readout(&x, Readout::Mean).unwrap().0 .0, vec![2.0, 1.0]);
        assert_eq!(readout(&x, Readout::Sum).unwrap().0 .0, vec![4.0, 2.0]);
        let one = Matrix::from_rows(&[&[1.5, -2.0]]);
        for m in [Readout::Max, Readout::Mean, Readout::Sum] {
            assert_eq!(readout(&one, m).unwrap().0 .0, vec![1.5, -2.0]);
        }
        assert!(readout(&Matrix::zeros(0, 2), Readout::Max).is_none());
    }

    #[test]
    fn singleton_embedding_is_gated_row() {
        let g = GraphTensors::from_parts(&[NodeKind::Xor], &[], &Vocabulary::default()).unwrap();
        let params = ModelParams::init(Hyper::default(), 3).unwrap();
        let f = forward(&g, &params, None).unwrap();
        let t = libm::tanh(f.pool.alpha[0]);
        for c in 0..16 {
            assert_eq!(f.embedding.0[c], f.xprop[(0, c)] * t);
        }
    }

    #[test]
    fn inference_ignores_seed() {
        let params = ModelParams::init(Hyper::default(), 1).unwrap();
        let g = path3();
        assert_eq!(embed(&g, &params, false, 1).unwrap(), embed(&g, &params, false, 99).unwrap());
        assert_eq!(embed(&g, &params, true, 5).unwrap(), embed(&g, &params, true, 5).unwrap());
        assert_eq!(embed(&g, &params, false, 0).unwrap().len(), 16);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(Hyper::default(), 7).unwrap();
        assert_eq!(a, ModelParams::init(Hyper::default(), 7).unwrap());
        assert_ne!(a, ModelParams::init(Hyper::default(), 8).unwrap());
        let bound = (6.0f64 / 52.0).sqrt();
        assert!(a.gcn[0].max_abs() <= bound);
        assert_eq!(a.gcn[0].shape(), (36, 16));
        assert_eq!(a.gcn[1].shape(), (16, 16));
        assert_eq!(a.score.shape(), (16, 1));
    }

    #[test]
    fn gate_is_odd_in_the_score() {
        let xprop = Matrix::from_rows(&[&[1.0, 2.0], &[0.5, 0.25]]);
        let p = Propagation::Dense(Matrix::identity(2));
        let s = Matrix::from_rows(&[&[0.3], &[0.1]]);
        let a = sag_pool(&xprop, &p, &s, 1.0).unwrap();
        let neg = Matrix::from_rows(&[&[-0.3], &[-0.1]]);
        let b = sag_pool(&xprop, &p, &neg, 1.0).unwrap();
        for (x, y) in a.x.as_slice().iter().zip(b.x.as_slice()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn dropout_masks_have_inverted_scale() {
        let h = Hyper::default();
        let m = dropout_masks(&h, 50, 1);
        let keep = 1.0 / 0.9;
        assert!(m[0].as_slice().iter().all(|v| *v == 0.0 || *v == keep));
        let zeros = m.iter().flat_map(|x| x.as_slice()).filter(|v| **v == 0.0).count();
        assert!(zeros > 80 && zeros < 240, "{zeros}");
    }

    #[test]
    fn vocabulary_mismatch() {
        let g = GraphTensors::from_parts(&[NodeKind::Xor], &[], &Vocabulary::new(&[NodeKind::Xor])).unwrap();
        let params = ModelParams::init(Hyper::default(), 3).unwrap();
        assert!(matches!(embed(&g, &params, false, 0), Err(ModelError::Vocabulary { .. })));
    }
}
