// SPDX-License-Identifier: Apache-2.0

//! JSON document form of a dataflow graph.

use ipsim_core::dfg::DataFlowGraph;
use ipsim_core::NodeKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    kind: String,
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphDoc {
    name: String,
    nodes: Vec<NodeDoc>,
    edges: Vec<[usize; 2]>,
    roots: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum DfgDocError {
    #[error("malformed graph document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown node kind `{0}`")]
    UnknownKind(String),
    #[error("node ids must be 0..n in order; found {found} at position {position}")]
    BadId { position: usize, found: usize },
    #[error("invalid graph: {0}")]
    Invalid(String),
}

pub fn to_json(g: &DataFlowGraph) -> String {
    let doc = GraphDoc {
        name: g.name.clone(),
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeDoc { id: n.id, kind: n.kind.name().to_owned(), label: n.label.clone() })
            .collect(),
        edges: g.edges.iter().map(|&(s, d)| [s, d]).collect(),
        roots: g.roots.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("graph documents always serialize")
}

pub fn from_json(text: &str) -> Result<DataFlowGraph, DfgDocError> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for (i, n) in doc.nodes.into_iter().enumerate() {
        if n.id != i {
            return Err(DfgDocError::BadId { position: i, found: n.id });
        }
        let kind = NodeKind::from_name(&n.kind).ok_or(DfgDocError::UnknownKind(n.kind))?;
        nodes.push((kind, n.label));
    }
    let edges: Vec<(usize, usize)> = doc.edges.into_iter().map(|[s, d]| (s, d)).collect();
    let g = DataFlowGraph::from_parts(doc.name, nodes, edges, doc.roots);
    g.validate().map_err(|e| DfgDocError::Invalid(e.to_string()))?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipsim_core::dfg::extract;
    use ipsim_core::frontend::{elaborate, SourceUnit};

    #[test]
    fn round_trip() {
        let src = "module m(input a, b, c, output y); assign y = c ? a + b : a & b; endmodule";
        let g = extract(&elaborate(&SourceUnit::single("m.v", src, "")).unwrap()).unwrap();
        let text = to_json(&g);
        assert_eq!(from_json(&text).unwrap(), g);
        assert!(text.contains("\"kind\": \"Cond\""), "{text}");
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let doc = r#"{"name":"x","nodes":[{"id":0,"kind":"Frobnicate","label":null}],"edges":[],"roots":[0]}"#;
        assert!(matches!(from_json(doc), Err(DfgDocError::UnknownKind(k)) if k == "Frobnicate"));
    }

    #[test]
    fn bad_edge_is_rejected() {
        let doc = r#"{"name":"x","nodes":[{"id":0,"kind":"Output","label":"y"}],"edges":[[0,3]],"roots":[0]}"#;
        assert!(matches!(from_json(doc), Err(DfgDocError::Invalid(_))));
    }
}
