// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::DiGraph;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ipsim::corpus_io::{corpus_pairs, scan, Dataset};
use ipsim::fsio::{load_unit, FsResolver};
use ipsim_core::corpus::{split, synthesize_variants, Abstraction, Transform};
use ipsim_core::detect::{compare_designs, cosine_similarity, design_graph, design_tensors, VerdictLabel};
use ipsim_core::dfg::{extract, DataFlowGraph};
use ipsim_core::encode::{normalize_adjacency, GraphTensors, NodeKind, Vocabulary};
use ipsim_core::frontend::{elaborate, SourceUnit, UnitResolver};
use ipsim_core::linalg::Matrix;
use ipsim_core::model::{dropout_masks, embed, gcn_layer, Hyper, ModelParams, Readout};
use ipsim_core::train::{
    cosine_embedding_loss, embed_all, gradient_check, pair_scores, sweep_delta, train, Optimizer, PairRef, Sequential,
    TrainConfig,
};

const FIXTURE_BUDGET: Duration = Duration::from_secs(1);
const GCN_REL_TOL: f64 = 1e-12;
const GCN_GRAPHS: usize = 25;
const GCN_BUDGET: Duration = Duration::from_secs(5);
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_PAIRS: usize = 24;
const GRAD_STEP: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const PERM_TOL: f64 = 1e-9;
const PERM_GRAPHS: usize = 50;
const LOSS_TOL: f64 = 1e-12;
const SELF_TOL: f64 = 1e-9;
const MIN_ACCURACY: f64 = 0.90;
const MIN_MEAN_SIMILAR: f64 = 0.9;
const MAX_MEAN_DIFFERENT: f64 = 0.1;
const MAX_EPOCHS: usize = 50;
const TRAIN_BUDGET: Duration = Duration::from_secs(600);
const MIN_VARIANT_MEAN: f64 = 0.9;
const MAX_CROSS_MEAN: f64 = 0.2;
const HELD_OUT_VARIANTS: usize = 3;
const ISO_VARIANTS: usize = 3;
const SEED: u64 = 1;

type Outcome = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(sub: &str) -> PathBuf {
    root().join("corpus").join(sub)
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn random_kinds(rng: &mut ChaCha8Rng, n: usize) -> Vec<NodeKind> {
    (0..n).map(|_| *NodeKind::ALL.choose(rng).unwrap()).collect()
}

/// A connected spanning tree plus a few random extra edges.
fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..rng.random_range(0..=n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    edges
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Old colour, sorted child colours, sorted parent colours.
type Signature = (usize, Vec<usize>, Vec<usize>);

/// Colour refinement over both graphs at once: a node's colour is its old
/// colour plus the multisets of its children's and parents' colours.
fn refine(graphs: [&DataFlowGraph; 2], colors: &mut [Vec<usize>; 2]) {
    let adj = graphs.map(|g| (g.children(), g.parents()));
    let classes = |c: &[Vec<usize>; 2]| c.iter().flatten().collect::<BTreeSet<_>>().len();
    loop {
        let before = classes(colors);
        let sigs: Vec<Vec<Signature>> = adj
            .iter()
            .zip(colors.iter())
            .map(|((children, parents), cs)| {
                (0..cs.len())
                    .map(|v| {
                        let mut c: Vec<usize> = children[v].iter().map(|&u| cs[u]).collect();
                        let mut p: Vec<usize> = parents[v].iter().map(|&u| cs[u]).collect();
                        c.sort_unstable();
                        p.sort_unstable();
                        (cs[v], c, p)
                    })
                    .collect()
            })
            .collect();
        let mut ids: BTreeMap<&Signature, usize> = BTreeMap::new();
        for sig in &sigs {
            for s in sig {
                let next = ids.len();
                ids.entry(s).or_insert(next);
            }
        }
        for (cs, sig) in colors.iter_mut().zip(&sigs) {
            for (c, s) in cs.iter_mut().zip(sig) {
                *c = ids[s];
            }
        }
        if classes(colors) == before {
            return;
        }
    }
}

/// Builds a kind-preserving bijection by refinement and individualization,
/// then checks that it maps the edge set of `a` exactly onto that of `b`.
fn kind_isomorphic(a: &DataFlowGraph, b: &DataFlowGraph) -> bool {
    if a.len() != b.len() || a.edges.len() != b.edges.len() {
        return false;
    }
    let init = |g: &DataFlowGraph| g.nodes.iter().map(|n| n.kind.index()).collect::<Vec<_>>();
    let mut colors = [init(a), init(b)];
    loop {
        refine([a, b], &mut colors);
        let mut members: BTreeMap<usize, [Vec<usize>; 2]> = BTreeMap::new();
        for (k, cs) in colors.iter().enumerate() {
            for (v, &c) in cs.iter().enumerate() {
                members.entry(c).or_default()[k].push(v);
            }
        }
        if members.values().any(|[x, y]| x.len() != y.len()) {
            return false;
        }
        match members.values().find(|[x, _]| x.len() > 1) {
            Some([x, y]) => {
                let fresh = colors.iter().flatten().max().map_or(0, |m| m + 1);
                colors[0][x[0]] = fresh;
                colors[1][y[0]] = fresh;
            }
            None => break,
        }
    }
    let at: BTreeMap<usize, usize> = colors[1].iter().enumerate().map(|(v, &c)| (c, v)).collect();
    let map: Vec<usize> = colors[0].iter().map(|c| at[c]).collect();
    let mapped: BTreeSet<(usize, usize)> = a.edges.iter().map(|&(x, y)| (map[x], map[y])).collect();
    let target: BTreeSet<(usize, usize)> = b.edges.iter().copied().collect();
    a.nodes.iter().all(|n| n.kind == b.nodes[map[n.id]].kind) && mapped == target
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        let p = e.path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else if p.extension().is_some_and(|x| x == "v") {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn c1_full_adder() -> Outcome {
    let path = corpus("fixtures/full_adder.v");
    let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let unit = SourceUnit::single("full_adder.v", &text, "");
    let flat = elaborate(&unit).map_err(|e| e.to_string())?;
    let g = extract(&flat).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let find = |kind, label: &str| g.find(kind, label).ok_or(format!("missing {kind} {label}"));
    let inputs = [find(NodeKind::Input, "Num1")?, find(NodeKind::Input, "Num2")?, find(NodeKind::Input, "Cin")?];
    for out in ["Sum", "Cout"] {
        let o = find(NodeKind::Output, out)?;
        for &i in &inputs {
            if !g.has_path(o, i) {
                return Err(format!("no path {out} -> {}", g.nodes[i].label.as_deref().unwrap_or("?")));
            }
        }
    }

    // Sum = (Num1 ^ Num2) ^ Cin; Cout = ((Num1 ^ Num2) & Cin) | (Num1 & Num2),
    // with the shared xor appearing once.
    let expected = DataFlowGraph::from_parts(
        "expected",
        vec![
            (NodeKind::Input, Some("Num1".into())),
            (NodeKind::Input, Some("Num2".into())),
            (NodeKind::Input, Some("Cin".into())),
            (NodeKind::Output, Some("Sum".into())),
            (NodeKind::Output, Some("Cout".into())),
            (NodeKind::Xor, None),
            (NodeKind::Xor, None),
            (NodeKind::And, None),
            (NodeKind::And, None),
            (NodeKind::Or, None),
        ],
        [(3, 6), (6, 5), (6, 2), (5, 0), (5, 1), (4, 9), (9, 7), (9, 8), (7, 5), (7, 2), (8, 0), (8, 1)],
        [3, 4],
    );
    let labelled = |g: &DataFlowGraph| {
        let mut pg = DiGraph::new();
        let ids: Vec<_> = g.nodes.iter().map(|n| pg.add_node((n.kind, n.label.clone()))).collect();
        for &(a, b) in &g.edges {
            pg.add_edge(ids[a], ids[b], ());
        }
        pg
    };
    let exact = is_isomorphic_matching(&labelled(&g), &labelled(&expected), |a, b| a == b, |_, _| true);
    ensure(
        exact && elapsed < FIXTURE_BUDGET,
        format!(
            "{} nodes, {} edges, exact match {exact}, both outputs reach all inputs, {:.1} ms",
            g.len(),
            g.edges.len(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn reference_propagation(n: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::identity(n, n);
    for &(i, j) in edges {
        if i != j {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
    }
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]).sqrt())
}

fn c2_gcn_layer() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let vocab = Vocabulary::default();
    let mut worst: f64 = 0.0;
    for _ in 0..GCN_GRAPHS {
        let n = rng.random_range(1..=12);
        let edges = random_edges(&mut rng, n);
        let t = GraphTensors::from_parts(&random_kinds(&mut rng, n), &edges, &vocab).map_err(|e| e.to_string())?;
        let x = random_matrix(&mut rng, n, 7);
        let w = random_matrix(&mut rng, 7, 5);
        let got = gcn_layer(&x, &t.p, &w, true).map_err(|e| e.to_string())?;
        let xr = DMatrix::from_row_slice(n, 7, x.as_slice());
        let wr = DMatrix::from_row_slice(7, 5, w.as_slice());
        let want = (reference_propagation(n, &edges) * xr * wr).map(|v| v.max(0.0));
        let scale = want.amax().max(1.0);
        for i in 0..n {
            for j in 0..5 {
                worst = worst.max((got[(i, j)] - want[(i, j)]).abs() / scale);
            }
        }
    }

    let s6 = 1.0 / 6f64.sqrt();
    // Path, complete and isolated graphs: (n, edges, row-major P).
    let fixtures = [
        (3, vec![(0usize, 1usize), (1, 2)], vec![0.5, s6, 0.0, s6, 1.0 / 3.0, s6, 0.0, s6, 0.5]),
        (3, vec![(0, 1), (0, 2), (1, 2)], vec![1.0 / 3.0; 9]),
        (2, vec![], vec![1.0, 0.0, 0.0, 1.0]),
    ];
    let mut fixture_err: f64 = 0.0;
    for (n, edges, want) in &fixtures {
        let t = GraphTensors::from_parts(&vec![NodeKind::Signal; *n], edges, &vocab).map_err(|e| e.to_string())?;
        let dense = normalize_adjacency(&t.adjacency()).map_err(|e| e.to_string())?;
        for (k, w) in want.iter().enumerate() {
            fixture_err = fixture_err.max((t.p.to_dense().as_slice()[k] - w).abs());
            fixture_err = fixture_err.max((dense.as_slice()[k] - w).abs());
        }
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= GCN_REL_TOL && fixture_err <= GCN_REL_TOL && elapsed < GCN_BUDGET,
        format!(
            "{GCN_GRAPHS} random graphs max rel err {worst:.2e}, path/complete/isolated fixtures max err {fixture_err:.2e} (tol {GCN_REL_TOL:e}), {:.1} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn c3_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let vocab = Vocabulary::default();
    let readouts = [Readout::Max, Readout::Mean, Readout::Sum];
    let (mut worst, mut checked, mut skipped): (f64, usize, usize) = (0.0, 0, 0);
    for k in 0..GRAD_PAIRS {
        let hyper = Hyper { hidden: 6, readout: readouts[k % 3], dropout: 0.2, ..Hyper::default() };
        let params = ModelParams::init(hyper, rng.random()).map_err(|e| e.to_string())?;
        let graph = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(3..=7);
            GraphTensors::from_parts(&random_kinds(rng, n), &random_edges(rng, n), &vocab).unwrap()
        };
        let (a, b) = (graph(&mut rng), graph(&mut rng));
        let masks = (k % 2 == 1).then(|| dropout_masks(&hyper, a.n(), k as u64));
        let y = if k % 4 < 2 { 1 } else { -1 };
        let c = gradient_check((&a, masks), (&b, None), y, &params, 0.2, GRAD_STEP).map_err(|e| e.to_string())?;
        worst = worst.max(c.max_rel_error);
        checked += c.checked;
        skipped += c.skipped;
    }
    let elapsed = start.elapsed();
    ensure(
        worst <= GRAD_REL_TOL && checked > 0 && elapsed < GRAD_BUDGET,
        format!(
            "{GRAD_PAIRS} pairs, {checked} entries checked ({skipped} at kinks), max rel err {worst:.2e} (tol {GRAD_REL_TOL:e}), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c4_permutation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let vocab = Vocabulary::default();
    let mut worst: f64 = 0.0;
    for k in 0..PERM_GRAPHS {
        let readout = [Readout::Max, Readout::Mean, Readout::Sum][k % 3];
        let params = ModelParams::init(Hyper { readout, ..Hyper::default() }, k as u64).map_err(|e| e.to_string())?;
        let n = rng.random_range(2..=30);
        let kinds = random_kinds(&mut rng, n);
        let edges = random_edges(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let mut pkinds = vec![NodeKind::Unknown; n];
        for (i, &p) in perm.iter().enumerate() {
            pkinds[p] = kinds[i];
        }
        let pedges: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let g = GraphTensors::from_parts(&kinds, &edges, &vocab).map_err(|e| e.to_string())?;
        let pg = GraphTensors::from_parts(&pkinds, &pedges, &vocab).map_err(|e| e.to_string())?;
        let h = embed(&g, &params, false, 0).map_err(|e| e.to_string())?;
        let ph = embed(&pg, &params, false, 0).map_err(|e| e.to_string())?;
        for (a, b) in h.as_slice().iter().zip(ph.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(
        worst <= PERM_TOL,
        format!("{PERM_GRAPHS} relabelled graphs, max embedding diff {worst:.2e} (tol {PERM_TOL:e})"),
    )
}

fn c5_loss() -> Outcome {
    let cases = [(1.0, 1, 0.0), (0.3, -1, 0.0), (0.9, -1, 0.4)];
    let mut lines = Vec::new();
    let mut ok = true;
    for (yhat, y, want) in cases {
        let got = cosine_embedding_loss(yhat, y, 0.5).map_err(|e| e.to_string())?;
        ok &= (got - want).abs() <= LOSS_TOL;
        lines.push(format!("L({yhat},{y:+})={got}"));
    }
    ensure(ok, format!("{} at margin 0.5", lines.join(", ")))
}

fn c6_self_pair() -> Outcome {
    let params = ModelParams::init(Hyper::default(), SEED).map_err(|e| e.to_string())?;
    let mut files = files_under(&corpus("rtl"));
    files.extend(files_under(&corpus("netlist")));
    let mut worst: f64 = 0.0;
    for f in &files {
        let unit = load_unit(std::slice::from_ref(f), "").map_err(|e| e.to_string())?;
        let v = compare_designs(&unit, &unit, &params, 0.5).map_err(|e| e.to_string())?;
        if v.label != VerdictLabel::Piracy {
            return Err(format!("{} scored {} against itself", f.display(), v.score));
        }
        worst = worst.max((v.score - 1.0).abs());
    }
    ensure(worst <= SELF_TOL, format!("{} designs, max |score - 1| {worst:.2e}, all labelled piracy", files.len()))
}

struct Trained {
    params: ModelParams,
    delta: f64,
}

/// Held-out accuracy and class means for one corpus.
struct Evaluation {
    epochs: usize,
    designs: usize,
    accuracy: f64,
    delta: f64,
    similar: f64,
    different: f64,
    elapsed: Duration,
    params: ModelParams,
}

fn train_corpus(sub: &str, abstraction: Abstraction) -> Result<Evaluation, String> {
    let start = Instant::now();
    let report = scan(&corpus(sub), None, abstraction).map_err(|e| e.to_string())?;
    if !report.skipped.is_empty() {
        return Err(format!("{} designs skipped", report.skipped.len()));
    }
    let ds = Dataset::build(&report.families, 2, SEED).map_err(|e| e.to_string())?;
    let pairs =
        split(&corpus_pairs(&ds.families, false).map_err(|e| e.to_string())?, 0.2, SEED).map_err(|e| e.to_string())?;
    let (train_pairs, test_pairs) = ds.refs(&pairs)?;
    let hyper = Hyper { readout: Readout::Mean, ..Hyper::default() };
    let config = TrainConfig {
        epochs: MAX_EPOCHS,
        patience: MAX_EPOCHS,
        learning_rate: 0.003,
        optimizer: Optimizer::adam(),
        seed: SEED,
        ..TrainConfig::default()
    };
    let params = ModelParams::init(hyper, SEED).map_err(|e| e.to_string())?;
    let out = train(&ds.graphs, &train_pairs, &test_pairs, params, &config, &Sequential, &mut |_| {})
        .map_err(|e| e.to_string())?;
    let emb = embed_all(&ds.graphs, &out.params, &Sequential).map_err(|e| e.to_string())?;
    let scores = pair_scores(&emb, &test_pairs);
    let labels: Vec<i8> = test_pairs.iter().map(|p: &PairRef| p.y).collect();
    let (delta, accuracy) = sweep_delta(&scores, &labels);
    let by = |y: i8| mean(&scores.iter().zip(&labels).filter(|(_, &l)| l == y).map(|(s, _)| *s).collect::<Vec<_>>());
    Ok(Evaluation {
        epochs: out.trace.len(),
        designs: ds.names.len(),
        accuracy,
        delta,
        similar: by(1),
        different: by(-1),
        elapsed: start.elapsed(),
        params: out.params,
    })
}

fn c7_training(trained: &mut Option<Trained>) -> Outcome {
    let e = train_corpus("rtl", Abstraction::Rtl)?;
    let detail = format!(
        "rtl: {} designs, {} epochs on one thread in {:.1} s, held-out acc {:.4} at delta {:.4}, mean similar {:.4}, mean different {:.4}",
        e.designs,
        e.epochs,
        e.elapsed.as_secs_f64(),
        e.accuracy,
        e.delta,
        e.similar,
        e.different
    );
    let ok = e.epochs <= MAX_EPOCHS
        && e.elapsed <= TRAIN_BUDGET
        && e.accuracy >= MIN_ACCURACY
        && e.similar >= MIN_MEAN_SIMILAR
        && e.different <= MAX_MEAN_DIFFERENT;
    *trained = Some(Trained { params: e.params, delta: e.delta });
    ensure(ok, detail)
}

fn netlist_note() -> String {
    match train_corpus("netlist", Abstraction::Netlist) {
        Ok(e) => format!(
            "netlist: {} designs, held-out acc {:.4} at delta {:.4}, mean similar {:.4}, mean different {:.4}",
            e.designs, e.accuracy, e.delta, e.similar, e.different
        ),
        Err(e) => format!("netlist: training failed: {e}"),
    }
}

fn c8_held_out_variants(trained: &Option<Trained>) -> Outcome {
    let t = trained.as_ref().ok_or("no trained model")?;
    let report = scan(&corpus("rtl"), None, Abstraction::Rtl).map_err(|e| e.to_string())?;
    let mut originals: Vec<(String, ipsim_core::model::Embedding)> = Vec::new();
    let mut variants: Vec<(String, ipsim_core::model::Embedding)> = Vec::new();
    for (k, d) in report.families.iter().flat_map(|f| f.members.iter().map(move |m| (f.id.clone(), m))).enumerate() {
        let (family, design) = d;
        let unit = load_unit(&[PathBuf::from(&design.path)], "").map_err(|e| e.to_string())?;
        let resolver = FsResolver::new(&unit, vec![]);
        let g = design_tensors(&unit, &resolver).map_err(|e| e.to_string())?;
        originals.push((family.clone(), embed(&g, &t.params, false, 0).map_err(|e| e.to_string())?));
        // Seeds disjoint from the ones used to build the training set.
        let texts = synthesize_variants(&unit, &resolver, &Transform::ALL, HELD_OUT_VARIANTS, 0x5eed_0000 + k as u64)
            .map_err(|e| e.to_string())?;
        for text in texts {
            let vu = SourceUnit::single("variant.v", &text, "");
            let vg = design_tensors(&vu, &UnitResolver::new(&vu)).map_err(|e| e.to_string())?;
            variants.push((family.clone(), embed(&vg, &t.params, false, 0).map_err(|e| e.to_string())?));
        }
    }
    let per = HELD_OUT_VARIANTS;
    let mut own = Vec::new();
    let mut cross = Vec::new();
    let mut above = 0;
    for (i, (family, h)) in variants.iter().enumerate() {
        let s = cosine_similarity(h, &originals[i / per].1).map_err(|e| e.to_string())?;
        above += usize::from(s > t.delta);
        own.push(s);
        for (of, oh) in &originals {
            if of != family {
                cross.push(cosine_similarity(h, oh).map_err(|e| e.to_string())?);
            }
        }
    }
    let (m_own, m_cross) = (mean(&own), mean(&cross));
    let min_own = own.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(
        above == own.len() && m_own >= MIN_VARIANT_MEAN && m_cross < MAX_CROSS_MEAN,
        format!(
            "{} fresh variants: {above} above delta {:.4}, mean vs original {m_own:.4} (min {min_own:.4}), mean vs other families {m_cross:.4}",
            own.len(),
            t.delta
        ),
    )
}

fn run_cli(args: &[&str], threads: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ipsim"))
        .args(args)
        .env("IPSIM_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("ipsim {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rtl = corpus("rtl");
    let rtl = rtl.to_str().ok_or("non-UTF-8 path")?;
    let mut ckpts = Vec::new();
    let mut traces = Vec::new();
    for (k, threads) in ["1", "4"].iter().enumerate() {
        let ckpt = dir.path().join(format!("run{k}.ckpt"));
        let c = ckpt.to_str().unwrap().to_owned();
        let trace = run_cli(
            &[
                "train",
                "--corpus",
                rtl,
                "--variants",
                "1",
                "--epochs",
                "4",
                "--seed",
                "7",
                "--optimizer",
                "adam",
                "--out",
                &c,
            ],
            threads,
        )?;
        traces.push(trace);
        ckpts.push((c.clone(), std::fs::read(&ckpt).map_err(|e| e.to_string())?));
    }
    let same_ckpt = ckpts[0].1 == ckpts[1].1;
    let a = format!("{rtl}/alu/case_alu.v");
    let b = format!("{rtl}/fifo/pointer.v");
    let cmp1 = run_cli(&["compare", &a, &b, "--checkpoint", &ckpts[0].0], "1")?;
    let cmp2 = run_cli(&["compare", &a, &b, "--checkpoint", &ckpts[1].0], "4")?;
    ensure(
        same_ckpt && traces[0] == traces[1] && cmp1 == cmp2,
        format!(
            "two training runs (1 and 4 threads): checkpoints {} bytes identical {same_ckpt}, traces identical {}, compare output identical {}",
            ckpts[0].1.len(),
            traces[0] == traces[1],
            cmp1 == cmp2
        ),
    )
}

fn c10_variant_isomorphism() -> Outcome {
    let mut files = files_under(&corpus("rtl"));
    files.extend(files_under(&corpus("netlist")));
    files.extend(files_under(&corpus("fixtures")));
    let mut plans: Vec<Vec<Transform>> = Transform::ALL.iter().map(|&t| vec![t]).collect();
    plans.push(Transform::ALL.to_vec());
    let mut checked = 0;
    let mut by_transform: BTreeMap<String, usize> = BTreeMap::new();
    for (k, f) in files.iter().enumerate() {
        let unit = load_unit(std::slice::from_ref(f), "").map_err(|e| e.to_string())?;
        let resolver = FsResolver::new(&unit, vec![]);
        let original = design_graph(&unit, &resolver).map_err(|e| e.to_string())?;
        for (p, plan) in plans.iter().enumerate() {
            let texts = synthesize_variants(&unit, &resolver, plan, ISO_VARIANTS, (k * 31 + p) as u64)
                .map_err(|e| e.to_string())?;
            for text in texts {
                let vu = SourceUnit::single("variant.v", &text, "");
                let g = design_graph(&vu, &UnitResolver::new(&vu)).map_err(|e| e.to_string())?;
                if !kind_isomorphic(&original, &g) {
                    let names: Vec<&str> = plan.iter().map(|t| t.name()).collect();
                    return Err(format!("{} variant under [{}] is not isomorphic", f.display(), names.join(",")));
                }
                checked += 1;
                let key = if plan.len() == 1 { plan[0].name().to_owned() } else { "all".to_owned() };
                *by_transform.entry(key).or_default() += 1;
            }
        }
    }
    // Negative controls: a relabelled kind or a redirected edge must be rejected.
    let unit = load_unit(&[corpus("fixtures/full_adder.v")], "").map_err(|e| e.to_string())?;
    let g = design_graph(&unit, &UnitResolver::new(&unit)).map_err(|e| e.to_string())?;
    let mut relabelled = g.clone();
    let op = relabelled.nodes.iter().position(|n| n.kind == NodeKind::Xor).ok_or("no xor node")?;
    relabelled.nodes[op].kind = NodeKind::Xnor;
    let mut redirected = g.clone();
    let (from, _) = redirected.edges[0];
    let target = (0..g.len()).find(|&t| t != from && !g.edges.contains(&(from, t))).ok_or("no free target")?;
    redirected.edges[0] = (from, target);
    if kind_isomorphic(&g, &relabelled) || kind_isomorphic(&g, &redirected) {
        return Err("checker accepted a non-isomorphic graph".into());
    }
    let summary: Vec<String> = by_transform.iter().map(|(k, v)| format!("{k} {v}")).collect();
    Ok(format!(
        "{checked} variants of {} designs kind-isomorphic to their originals ({}); mutated controls rejected",
        files.len(),
        summary.join(", ")
    ))
}

fn report(id: usize, name: &str, outcome: &Outcome) -> bool {
    match outcome {
        Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
        Err(d) => println!("criterion {id:>2} FAIL  {name}: {d}"),
    }
    outcome.is_ok()
}

fn main() {
    let mut trained = None;
    let results = [
        report(1, "full-adder dataflow graph", &c1_full_adder()),
        report(2, "graph convolution against dense reference", &c2_gcn_layer()),
        report(3, "analytic gradients against central differences", &c3_gradients()),
        report(4, "embedding permutation invariance", &c4_permutation()),
        report(5, "cosine embedding loss values", &c5_loss()),
        report(6, "self-comparison", &c6_self_pair()),
        report(7, "training on the RTL corpus", &c7_training(&mut trained)),
        report(8, "held-out variants", &c8_held_out_variants(&trained)),
        report(9, "determinism", &c9_determinism()),
        report(10, "variant graph isomorphism", &c10_variant_isomorphism()),
    ];
    println!("note: {}", netlist_note());
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
