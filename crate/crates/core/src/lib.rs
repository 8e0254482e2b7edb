// SPDX-License-Identifier: Apache-2.0

//! Hardware design similarity from Verilog dataflow graphs.
//!
//! The crate is `no_std` (it only needs `alloc`). It covers the whole
//! pipeline that does not touch the filesystem:
//!
//! * [`frontend`]: preprocessing, parsing and hierarchy flattening of a
//!   synthesizable Verilog subset.
//! * [`dfg`]: per-signal dataflow analysis, merge and trim into a rooted
//!   dataflow graph.
//! * [`encode`]: one-hot node features and the normalized propagation matrix.
//! * [`model`]: the GCN / attention-pooling / readout embedding network.
//! * [`train`]: cosine embedding loss, exact gradients and mini-batch training.
//! * [`detect`]: cosine similarity and the thresholded piracy verdict.
//! * [`corpus`]: pair generation, splits and semantics-preserving variants.
//! * [`pca`]: principal component projection of embeddings.
//!
//! File formats, directory scanning and the command line live in the `ipsim`
//! companion crate.

#![no_std]

extern crate alloc;

pub mod corpus;
pub mod detect;
pub mod dfg;
pub mod encode;
pub mod frontend;
pub mod linalg;
pub mod model;
pub mod pca;
pub mod train;

pub use detect::{cosine_similarity, Verdict, VerdictLabel};
pub use dfg::{DataFlowGraph, DfgNode};
pub use encode::{encode, GraphTensors, NodeKind, Vocabulary, VOCAB_VERSION};
pub use model::{Embedding, Hyper, ModelParams, Readout};
