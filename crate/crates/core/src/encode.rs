// SPDX-License-Identifier: Apache-2.0

//! Node vocabulary, one-hot features and the normalized propagation matrix
//! `P = D^-1/2 (A + I) D^-1/2` over the symmetrized adjacency.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dfg::DataFlowGraph;
use crate::linalg::{CsrMatrix, Matrix, ShapeError};

/// Bumped whenever [`NodeKind`] gains, loses or reorders a member.
pub const VOCAB_VERSION: u32 = 1;

/// Graphs with more nodes than this use a sparse propagation matrix.
pub const DENSE_LIMIT: usize = 512;

macro_rules! node_kinds {
    ($($k:ident),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum NodeKind { $($k),* }

        impl NodeKind {
            pub const ALL: &'static [NodeKind] = &[$(NodeKind::$k),*];

            pub fn name(self) -> &'static str {
                match self { $(NodeKind::$k => stringify!($k)),* }
            }

            pub fn from_name(s: &str) -> Option<Self> {
                match s { $(stringify!($k) => Some(NodeKind::$k),)* _ => None }
            }
        }
    };
}

node_kinds!(
    Input, Output, Inout, Signal, Constant, Branch, Concat, PartSelect, And, Or, Xor, Xnor, Nand, Nor, Not, Plus,
    Minus, Times, Divide, Mod, ShiftL, ShiftR, Eq, Neq, Lt, Gt, Le, Ge, LAnd, LOr, LNot, RedAnd, RedOr, RedXor, Cond,
    Unknown,
);

impl NodeKind {
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    /// Port and internal-signal kinds, as opposed to operators and constants.
    pub fn is_signal(self) -> bool {
        matches!(self, Self::Input | Self::Output | Self::Inout | Self::Signal)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered kinds that get their own one-hot column. The last column is the
/// bucket for every kind outside the list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    kinds: Vec<NodeKind>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self { kinds: NodeKind::ALL.to_vec() }
    }
}

impl Vocabulary {
    /// A vocabulary over `kinds` (in order) plus a trailing `Unknown`.
    pub fn new(kinds: &[NodeKind]) -> Self {
        let mut v: Vec<NodeKind> = kinds.iter().copied().filter(|k| *k != NodeKind::Unknown).collect();
        let mut seen = BTreeSet::new();
        v.retain(|k| seen.insert(*k));
        v.push(NodeKind::Unknown);
        Self { kinds: v }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn index_of(&self, kind: NodeKind) -> usize {
        self.kinds.iter().position(|k| *k == kind).unwrap_or(self.kinds.len() - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("edge ({0}, {1}) references a missing node")]
    BadEdge(usize, usize),
}

/// `P`, stored densely up to [`DENSE_LIMIT`] nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Propagation {
    Dense(Matrix),
    Sparse(CsrMatrix),
}

impl Propagation {
    pub fn n(&self) -> usize {
        match self {
            Self::Dense(m) => m.rows(),
            Self::Sparse(m) => m.rows(),
        }
    }

    /// `P · m`. `P` is symmetric, so this is also `Pᵀ · m`.
    pub fn apply(&self, m: &Matrix) -> Result<Matrix, ShapeError> {
        match self {
            Self::Dense(p) => p.matmul(m),
            Self::Sparse(p) => p.matmul_dense(m),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Dense(p) => p[(i, j)],
            Self::Sparse(p) => p.get(i, j),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            Self::Dense(p) => p.clone(),
            Self::Sparse(p) => p.to_dense(),
        }
    }
}

/// Numeric form of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTensors {
    /// `n × d0` one-hot rows.
    pub x: Matrix,
    /// Undirected neighbour lists, sorted, without self-loops.
    pub neighbors: Vec<Vec<usize>>,
    /// Diagonal of `D̂` (degree including the self-loop).
    pub degree: Vec<f64>,
    pub p: Propagation,
}

impl GraphTensors {
    pub fn from_parts(kinds: &[NodeKind], edges: &[(usize, usize)], vocab: &Vocabulary) -> Result<Self, EncodeError> {
        let n = kinds.len();
        if n == 0 {
            return Err(EncodeError::EmptyGraph);
        }
        let mut x = Matrix::zeros(n, vocab.len());
        for (i, k) in kinds.iter().enumerate() {
            x.as_mut_slice()[i * vocab.len() + vocab.index_of(*k)] = 1.0;
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(EncodeError::BadEdge(a, b));
            }
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        let neighbors: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let degree: Vec<f64> = neighbors.iter().map(|v| (v.len() + 1) as f64).collect();
        let weight = |i: usize, j: usize| 1.0 / libm::sqrt(degree[i] * degree[j]);
        let p = if n <= DENSE_LIMIT {
            let mut p = Matrix::zeros(n, n);
            for (i, ns) in neighbors.iter().enumerate() {
                p.as_mut_slice()[i * n + i] = weight(i, i);
                for &j in ns {
                    p.as_mut_slice()[i * n + j] = weight(i, j);
                }
            }
            Propagation::Dense(p)
        } else {
            let mut t = Vec::with_capacity(n + 2 * edges.len());
            for (i, ns) in neighbors.iter().enumerate() {
                t.push((i, i, weight(i, i)));
                for &j in ns {
                    t.push((i, j, weight(i, j)));
                }
            }
            Propagation::Sparse(CsrMatrix::from_triplets(n, n, t))
        };
        Ok(Self { x, neighbors, degree, p })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Dense 0/1 adjacency `A` (symmetrized, zero diagonal).
    pub fn adjacency(&self) -> Matrix {
        let n = self.n();
        let mut a = Matrix::zeros(n, n);
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                a.as_mut_slice()[i * n + j] = 1.0;
            }
        }
        a
    }
}

pub fn encode(g: &DataFlowGraph, vocab: &Vocabulary) -> Result<GraphTensors, EncodeError> {
    let kinds: Vec<NodeKind> = g.nodes.iter().map(|n| n.kind).collect();
    GraphTensors::from_parts(&kinds, &g.edges, vocab)
}

/// `D̂^-1/2 (A + I) D̂^-1/2` for a dense 0/1 matrix. Nonzero entries count as
/// edges; the diagonal is ignored.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix, ShapeError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(ShapeError { op: "normalize_adjacency", lhs: a.shape(), rhs: a.shape() });
    }
    let mut ahat = Matrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                ahat.as_mut_slice()[i * n + j] = 1.0;
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| ahat.row(i).iter().sum()).collect();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if ahat[(i, j)] != 0.0 {
                p.as_mut_slice()[i * n + j] = ahat[(i, j)] / libm::sqrt(d[i] * d[j]);
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn vocabulary_is_fixed() {
        assert_eq!(NodeKind::COUNT, 36);
        assert_eq!(NodeKind::ALL[0], NodeKind::Input);
        assert_eq!(*NodeKind::ALL.last().unwrap(), NodeKind::Unknown);
        for (i, k) in NodeKind::ALL.iter().enumerate() {
            assert_eq!(k.index(), i);
            assert_eq!(NodeKind::from_name(k.name()), Some(*k));
        }
        assert_eq!(NodeKind::from_name("Mux"), None);
    }

    #[test]
    fn single_node() {
        let t = GraphTensors::from_parts(&[NodeKind::Xor], &[], &Vocabulary::default()).unwrap();
        assert_eq!(t.x.row(0).iter().sum::<f64>(), 1.0);
        assert_eq!(t.x[(0, NodeKind::Xor.index())], 1.0);
        assert_eq!(t.p.to_dense(), Matrix::identity(1));
    }

    #[test]
    fn path_of_three() {
        let k = [NodeKind::Output, NodeKind::Not, NodeKind::Input];
        let t = GraphTensors::from_parts(&k, &[(0, 1), (1, 2)], &Vocabulary::default()).unwrap();
        assert_eq!(t.degree, vec![2.0, 3.0, 2.0]);
        assert!(close(t.p.get(0, 1), 1.0 / 6f64.sqrt()));
        assert!(close(t.p.get(1, 1), 1.0 / 3.0));
        assert!(close(t.p.get(0, 0), 0.5));
        assert_eq!(t.p.get(0, 2), 0.0);
    }

    #[test]
    fn hand_normalizations() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(3, 3)).unwrap(), Matrix::identity(3));
        let k2 = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let p = normalize_adjacency(&k2).unwrap();
        assert!(p.as_slice().iter().all(|v| close(*v, 0.5)));
        assert_eq!(normalize_adjacency(&Matrix::zeros(1, 1)).unwrap(), Matrix::identity(1));
        assert!(normalize_adjacency(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn out_of_vocabulary_goes_to_unknown() {
        let v = Vocabulary::new(&[NodeKind::Input, NodeKind::Xor]);
        assert_eq!(v.len(), 3);
        let t = GraphTensors::from_parts(&[NodeKind::Branch], &[], &v).unwrap();
        assert_eq!(t.x.row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_graph_is_an_error() {
        assert_eq!(GraphTensors::from_parts(&[], &[], &Vocabulary::default()), Err(EncodeError::EmptyGraph));
    }

    #[test]
    fn sparse_matches_dense() {
        let n = DENSE_LIMIT + 9;
        let kinds = vec![NodeKind::And; n];
        let edges: Vec<(usize, usize)> =
            (1..n).map(|i| (i, (i * 7) % i)).chain((0..n - 3).map(|i| (i, i + 3))).collect();
        let t = GraphTensors::from_parts(&kinds, &edges, &Vocabulary::default()).unwrap();
        assert!(matches!(t.p, Propagation::Sparse(_)));
        let reference = normalize_adjacency(&t.adjacency()).unwrap();
        let dense = t.p.to_dense();
        for (a, b) in dense.as_slice().iter().zip(reference.as_slice()) {
            assert!(close(*a, *b));
        }
    }

    fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (1usize..10).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..20)))
    }

    /// Symmetric Jacobi eigenvalues, brute force.
    fn eigenvalues(mut a: Matrix) -> Vec<f64> {
        let n = a.rows();
        for _ in 0..100 {
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-15 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a.as_mut_slice()[k * n + p] = c * akp - s * akq;
                        a.as_mut_slice()[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a.as_mut_slice()[p * n + k] = c * apk - s * aqk;
                        a.as_mut_slice()[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }

    proptest! {
        #[test]
        fn symmetric_one_hot_and_spectrally_bounded((n, edges) in graph_strategy()) {
            let kinds: Vec<NodeKind> = (0..n).map(|i| NodeKind::ALL[i % NodeKind::COUNT]).collect();
            let t = GraphTensors::from_parts(&kinds, &edges, &Vocabulary::default()).unwrap();
            let p = t.p.to_dense();
            prop_assert_eq!(p.transpose(), p.clone());
            for i in 0..n {
                prop_assert_eq!(t.x.row(i).iter().filter(|v| **v == 1.0).count(), 1);
                prop_assert_eq!(t.x.row(i).iter().sum::<f64>(), 1.0);
            }
            for ev in eigenvalues(p) {
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ev), "{}", ev);
            }
        }

        #[test]
        fn permutation_equivariance((n, edges) in graph_strategy(), seed in any::<u64>()) {
            let kinds: Vec<NodeKind> = (0..n).map(|i| NodeKind::ALL[(i * 5) % NodeKind::COUNT]).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            // node i moves to perm[i]
            let mut pk = kinds.clone();
            for i in 0..n {
                pk[perm[i]] = kinds[i];
            }
            let pe: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
            let v = Vocabulary::default();
            let t = GraphTensors::from_parts(&kinds, &edges, &v).unwrap();
            let u = GraphTensors::from_parts(&pk, &pe, &v).unwrap();
            for i in 0..n {
                prop_assert_eq!(t.x.row(i), u.x.row(perm[i]));
                for j in 0..n {
                    prop_assert_eq!(t.p.get(i, j), u.p.get(perm[i], perm[j]));
                }
            }
        }
    }
}
