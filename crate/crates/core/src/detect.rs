// SPDX-License-Identifier: Apache-2.0

//! Cosine similarity and the thresholded piracy verdict.

use alloc::string::String;
use core::fmt;

use crate::dfg::{extract, DataFlowGraph, DfgError};
use crate::encode::{encode, EncodeError, GraphTensors, Vocabulary};
use crate::frontend::{elaborate_with, FrontendError, IncludeResolver, SourceUnit, UnitResolver};
use crate::linalg::{dot, norm};
use crate::model::{embed, Embedding, ModelError, ModelParams};

pub const DEFAULT_DELTA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SimilarityError {
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("embeddings differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// `h1·h2 / (|h1| |h2|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(h1: &Embedding, h2: &Embedding) -> Result<f64, SimilarityError> {
    if h1.len() != h2.len() {
        return Err(SimilarityError::LengthMismatch(h1.len(), h2.len()));
    }
    let (n1, n2) = (norm(h1.as_slice()), norm(h2.as_slice()));
    if n1 == 0.0 || n2 == 0.0 {
        return Err(SimilarityError::ZeroEmbedding);
    }
    Ok((dot(h1.as_slice(), h2.as_slice()) / (n1 * n2)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictLabel {
    Piracy,
    NoPiracy,
}

impl VerdictLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Piracy => "piracy",
            Self::NoPiracy => "no-piracy",
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub score: f64,
    pub delta: f64,
    pub label: VerdictLabel,
}

impl Verdict {
    /// Piracy iff `score > delta`.
    pub fn new(score: f64, delta: f64) -> Self {
        let label = if score > delta { VerdictLabel::Piracy } else { VerdictLabel::NoPiracy };
        Self { score, delta, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Read,
    Frontend,
    Dataflow,
    Encode,
    Embed,
    Similarity,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Read => "read",
            Self::Frontend => "frontend",
            Self::Dataflow => "dataflow",
            Self::Encode => "encode",
            Self::Embed => "embed",
            Self::Similarity => "similarity",
        })
    }
}

/// A failure anywhere in the pipeline, tagged with the stage and design.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{design}: {stage} failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub design: String,
    pub message: String,
    /// Set when the frontend rejected a construct outside the subset.
    pub unsupported: bool,
}

impl PipelineError {
    fn new(stage: Stage, design: &str, err: impl fmt::Display) -> Self {
        Self { stage, design: design.into(), message: alloc::format!("{err}"), unsupported: false }
    }

    /// The design's source could not be read.
    pub fn io(design: &str, err: impl fmt::Display) -> Self {
        Self::new(Stage::Read, design, err)
    }

    pub fn frontend(design: &str, err: FrontendError) -> Self {
        let unsupported = err.is_unsupported();
        Self { unsupported, ..Self::new(Stage::Frontend, design, err) }
    }

    pub fn dataflow(design: &str, err: DfgError) -> Self {
        Self::new(Stage::Dataflow, design, err)
    }

    pub fn encode(design: &str, err: EncodeError) -> Self {
        Self::new(Stage::Encode, design, err)
    }
}

fn design_name(unit: &SourceUnit) -> &str {
    unit.files.first().map(|(p, _)| p.as_str()).unwrap_or("<empty>")
}

/// Frontend, dataflow analysis and trim.
pub fn design_graph(unit: &SourceUnit, resolver: &dyn IncludeResolver) -> Result<DataFlowGraph, PipelineError> {
    let name = design_name(unit);
    let flat = elaborate_with(unit, resolver).map_err(|e| PipelineError::frontend(name, e))?;
    extract(&flat).map_err(|e| PipelineError::dataflow(name, e))
}

/// [`design_graph`] followed by encoding.
pub fn design_tensors(unit: &SourceUnit, resolver: &dyn IncludeResolver) -> Result<GraphTensors, PipelineError> {
    let g = design_graph(unit, resolver)?;
    encode(&g, &Vocabulary::default()).map_err(|e| PipelineError::encode(design_name(unit), e))
}

pub fn embed_design(unit: &SourceUnit, params: &ModelParams) -> Result<Embedding, PipelineError> {
    let t = design_tensors(unit, &UnitResolver::new(unit))?;
    embed(&t, params, false, 0).map_err(|e: ModelError| PipelineError::new(Stage::Embed, design_name(unit), e))
}

/// Compares two designs end to end.
pub fn compare_designs(
    p1: &SourceUnit,
    p2: &SourceUnit,
    params: &ModelParams,
    delta: f64,
) -> Result<Verdict, PipelineError> {
    let h1 = embed_design(p1, params)?;
    let h2 = embed_design(p2, params)?;
    let score = cosine_similarity(&h1, &h2).map_err(|e| PipelineError::new(Stage::Similarity, design_name(p1), e))?;
    Ok(Verdict::new(score, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyper;
    use proptest::prelude::*;

    fn e(v: &[f64]) -> Embedding {
        Embedding(v.to_vec())
    }

    #[test]
    fn similarity_fixtures() {
        let h = e(&[0.3, -1.0, 2.0]);
        assert!((cosine_similarity(&h, &h).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&e(&[1.0, 0.0, 0.0]), &e(&[0.0, 1.0, 0.0])).unwrap(), 0.0);
        let neg = e(&[-0.3, 1.0, -2.0]);
        assert!((cosine_similarity(&h, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&h, &e(&[0.0; 3])), Err(SimilarityError::ZeroEmbedding));
        assert_eq!(cosine_similarity(&h, &e(&[1.0])), Err(SimilarityError::LengthMismatch(3, 1)));
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(Verdict::new(0.5, 0.5).label, VerdictLabel::NoPiracy);
        assert_eq!(Verdict::new(0.500001, 0.5).label, VerdictLabel::Piracy);
        assert_eq!(VerdictLabel::NoPiracy.as_str(), "no-piracy");
    }

    #[test]
    fn self_comparison_is_piracy() {
        let src = "module fa(input a, b, c, output s, co); assign s = a ^ b ^ c; assign co = (a & b) | (c & (a ^ b)); endmodule";
        let unit = SourceUnit::single("fa.v", src, "");
        let params = ModelParams::init(Hyper::default(), 11).unwrap();
        let v = compare_designs(&unit, &unit, &params, 0.5).unwrap();
        assert!((v.score - 1.0).abs() < 1e-9);
        assert_eq!(v.label, VerdictLabel::Piracy);
    }

    #[test]
    fn errors_name_the_stage() {
        let bad = SourceUnit::single("bad.v", "module m(input a, output y); initial y = a; endmodule", "");
        let err = design_graph(&bad, &UnitResolver::new(&bad)).unwrap_err();
        assert_eq!(err.stage, Stage::Frontend);
        assert!(err.unsupported);
        let undriven = SourceUnit::single("u.v", "module m(input a, output y); endmodule", "");
        assert_eq!(design_graph(&undriven, &UnitResolver::new(&undriven)).unwrap_err().stage, Stage::Dataflow);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_scale_free(
            a in proptest::collection::vec(-5.0f64..5.0, 4),
            b in proptest::collection::vec(-5.0f64..5.0, 4),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let (x, y) = (Embedding(a.clone()), Embedding(b.clone()));
            let s = cosine_similarity(&x, &y).unwrap();
            prop_assert_eq!(s, cosine_similarity(&y, &x).unwrap());
            prop_assert!((-1.0..=1.0).contains(&s));
            let scaled = Embedding(a.iter().map(|v| v * c).collect());
            prop_assert!((cosine_similarity(&scaled, &y).unwrap() - s).abs() < 1e-12);
        }
    }
}
