// SPDX-License-Identifier: Apache-2.0

//! Cosine embedding loss, exact pair gradients and mini-batch training.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detect::{Verdict, VerdictLabel};
use crate::encode::{GraphTensors, VOCAB_VERSION};
use crate::linalg::{dot, norm, Matrix, ShapeError};
use crate::model::{dropout_masks, forward, Embedding, Forward, ModelError, ModelParams};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("label must be +1 or -1, got {0}")]
    InvalidLabel(i8),
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("no training pairs")]
    NoPairs,
    #[error("pair references graph {0}, which does not exist")]
    MissingGraph(usize),
    #[error("non-finite loss or parameters at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<ShapeError> for TrainError {
    fn from(e: ShapeError) -> Self {
        Self::Model(e.into())
    }
}

/// `1 - ŷ` for similar pairs, `max(0, ŷ - margin)` for different ones.
pub fn cosine_embedding_loss(yhat: f64, y: i8, margin: f64) -> Result<f64, TrainError> {
    match y {
        1 => Ok(1.0 - yhat),
        -1 => Ok((yhat - margin).max(0.0)),
        _ => Err(TrainError::InvalidLabel(y)),
    }
}

/// `dL/dŷ`; zero on the flat side of the hinge.
pub fn loss_slope(yhat: f64, y: i8, margin: f64) -> Result<f64, TrainError> {
    match y {
        1 => Ok(-1.0),
        -1 => Ok(if yhat > margin { 1.0 } else { 0.0 }),
        _ => Err(TrainError::InvalidLabel(y)),
    }
}

/// Unclamped cosine similarity with its gradients
/// `h2/(|h1||h2|) - ŷ·h1/|h1|²` and the mirror image. A zero-norm side gives
/// `ŷ = 0` and zero gradients.
pub fn similarity_with_grad(h1: &[f64], h2: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (n1, n2) = (norm(h1), norm(h2));
    if n1 == 0.0 || n2 == 0.0 {
        return (0.0, vec![0.0; h1.len()], vec![0.0; h2.len()]);
    }
    let yhat = dot(h1, h2) / (n1 * n2);
    let g1 = h1.iter().zip(h2).map(|(a, b)| b / (n1 * n2) - yhat * a / (n1 * n1)).collect();
    let g2 = h1.iter().zip(h2).map(|(a, b)| a / (n1 * n2) - yhat * b / (n2 * n2)).collect();
    (yhat, g1, g2)
}

/// One labelled pair, by index into a graph store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairRef {
    pub a: usize,
    pub b: usize,
    pub y: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub loss: f64,
    pub yhat: f64,
    pub grads: ModelParams,
}

/// Loss and exact gradients for one pair with fixed dropout masks.
pub fn pair_grads(
    g1: (&GraphTensors, Option<Vec<Matrix>>),
    g2: (&GraphTensors, Option<Vec<Matrix>>),
    y: i8,
    params: &ModelParams,
    margin: f64,
) -> Result<PairGrad, TrainError> {
    let f1 = forward(g1.0, params, g1.1)?;
    let f2 = forward(g2.0, params, g2.1)?;
    let (yhat, d1, d2) = similarity_with_grad(f1.embedding.as_slice(), f2.embedding.as_slice());
    let loss = cosine_embedding_loss(yhat, y, margin)?;
    let slope = loss_slope(yhat, y, margin)?;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * slope).collect::<Vec<_>>();
    let mut grads = f1.backward(g1.0, params, &scale(d1))?;
    grads.add_scaled(&f2.backward(g2.0, params, &scale(d2))?, 1.0)?;
    Ok(PairGrad { loss, yhat, grads })
}

/// Runs independent work items. Results come back in input order, so the
/// training result does not depend on the executor.
pub trait Executor: Sync {
    fn map<T: Sync, R: Send>(&self, items: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T: Sync, R: Send>(&self, items: &[T], f: &(dyn Fn(&T) -> R + Sync)) -> Vec<R> {
        items.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    step: u64,
    m: ModelParams,
    v: ModelParams,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, like: &ModelParams) -> Self {
        Self { kind, step: 0, m: like.zeros_like(), v: like.zeros_like() }
    }

    /// `params ← params - lr · update(grads)`.
    pub fn apply(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<(), ShapeError> {
        self.step += 1;
        match self.kind {
            Optimizer::Sgd => params.add_scaled(grads, -lr),
            Optimizer::Momentum { beta } => {
                for (m, g) in self.m.tensors_mut().into_iter().zip(grads.tensors()) {
                    for (mv, gv) in m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *mv = beta * *mv + gv;
                    }
                }
                params.add_scaled(&self.m, -lr)
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - libm::pow(beta1, t as f64);
                let c2 = 1.0 - libm::pow(beta2, t as f64);
                let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
                let state = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
                for ((p, g), (m, v)) in tensors.zip(state) {
                    let slots = p.as_mut_slice().iter_mut().zip(g.as_slice());
                    for ((pv, gv), (mv, vv)) in slots.zip(m.as_mut_slice().iter_mut().zip(v.as_mut_slice())) {
                        *mv = beta1 * *mv + (1.0 - beta1) * gv;
                        *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                        *pv -= lr * (*mv / c1) / (libm::sqrt(*vv / c2) + eps);
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub epochs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    /// Stop after this many epochs without a better test accuracy.
    pub patience: usize,
    /// Decision boundary used for the accuracy trace.
    pub delta: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 0.001,
            margin: 0.5,
            epochs: 50,
            seed: 0,
            test_fraction: 0.2,
            patience: 10,
            delta: 0.5,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(TrainError::Config("margin must lie in [0, 1)"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(TrainError::Config("test_fraction must lie in (0, 1)"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the dropout masks of `graph` in a given batch.
pub fn mask_seed(seed: u64, epoch: usize, batch: usize, graph: usize) -> u64 {
    mix(mix(mix(mix(seed) ^ epoch as u64) ^ batch as u64) ^ graph as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// `None` without test pairs.
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<EpochStats>,
    /// Mean training loss of the last epoch.
    pub final_loss: f64,
}

/// Embeds every graph once, without dropout.
pub fn embed_all<E: Executor>(
    graphs: &[GraphTensors],
    params: &ModelParams,
    exec: &E,
) -> Result<Vec<Embedding>, TrainError> {
    exec.map(graphs, &|g| forward(g, params, None).map(|f| f.embedding))
        .into_iter()
        .map(|r| r.map_err(Into::into))
        .collect()
}

/// Cosine score per pair; a zero-norm embedding scores 0.
pub fn pair_scores(embeddings: &[Embedding], pairs: &[PairRef]) -> Vec<f64> {
    pairs.iter().map(|p| crate::detect::cosine_similarity(&embeddings[p.a], &embeddings[p.b]).unwrap_or(0.0)).collect()
}

/// Fraction of pairs whose verdict at `delta` matches the label.
pub fn accuracy(scores: &[f64], labels: &[i8], delta: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, y)| (Verdict::new(**s, delta).label == VerdictLabel::Piracy) == (**y == 1))
        .count();
    hits as f64 / scores.len() as f64
}

/// Confusion counts with "piracy" as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn new(scores: &[f64], labels: &[i8], delta: f64) -> Self {
        let mut c = Self::default();
        for (s, y) in scores.iter().zip(labels) {
            match (*s > delta, *y == 1) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.tn + self.fp + self.fn_;
        if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

/// Candidate thresholds: midpoints between consecutive distinct scores plus
/// one point below and one above the range.
pub fn delta_candidates(scores: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = scores.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut out = Vec::with_capacity(s.len() + 1);
    match (s.first(), s.last()) {
        (Some(lo), Some(hi)) => {
            out.push(lo - 1e-6);
            out.extend(s.windows(2).map(|w| 0.5 * (w[0] + w[1])));
            out.push(*hi);
        }
        _ => out.push(0.5),
    }
    out
}

/// The threshold with the best accuracy; ties go to the candidate closest
/// to 0.5, then the smaller one.
pub fn sweep_delta(scores: &[f64], labels: &[i8]) -> (f64, f64) {
    let mut best: (f64, f64) = (0.5, accuracy(scores, labels, 0.5));
    for d in delta_candidates(scores) {
        let acc = accuracy(scores, labels, d);
        let closer = (d - 0.5).abs() < (best.0 - 0.5).abs();
        if acc > best.1 || (acc == best.1 && closer) {
            best = (d, acc);
        }
    }
    best
}

fn check_pairs(pairs: &[PairRef], n: usize) -> Result<(), TrainError> {
    for p in pairs {
        if p.a >= n || p.b >= n {
            return Err(TrainError::MissingGraph(p.a.max(p.b)));
        }
        if p.y != 1 && p.y != -1 {
            return Err(TrainError::InvalidLabel(p.y));
        }
    }
    Ok(())
}

/// Mean loss and summed-then-averaged gradient of one batch. Each distinct
/// graph is embedded once; gradients flow back through it once with the
/// upstream gradients of all its pairs added up.
pub fn batch_step<E: Executor>(
    graphs: &[GraphTensors],
    batch: &[PairRef],
    params: &ModelParams,
    margin: f64,
    masks_for: &(dyn Fn(usize) -> Option<Vec<Matrix>> + Sync),
    exec: &E,
) -> Result<(f64, ModelParams), TrainError> {
    let mut ids: Vec<usize> = batch.iter().flat_map(|p| [p.a, p.b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let fwd: Vec<Result<Forward, ModelError>> = exec.map(&ids, &|&g| forward(&graphs[g], params, masks_for(g)));
    let fwd: Vec<Forward> = fwd.into_iter().collect::<Result<_, _>>()?;
    let slot = |g: usize| ids.binary_search(&g).expect("graph in batch");
    let d = params.hyper.hidden;
    let mut upstream = vec![vec![0.0; d]; ids.len()];
    let mut loss = 0.0;
    let inv = 1.0 / batch.len() as f64;
    for p in batch {
        let (ia, ib) = (slot(p.a), slot(p.b));
        let (yhat, da, db) = similarity_with_grad(fwd[ia].embedding.as_slice(), fwd[ib].embedding.as_slice());
        loss += cosine_embedding_loss(yhat, p.y, margin)?;
        let s = loss_slope(yhat, p.y, margin)? * inv;
        if s != 0.0 {
            upstream[ia].iter_mut().zip(&da).for_each(|(u, v)| *u += s * v);
            upstream[ib].iter_mut().zip(&db).for_each(|(u, v)| *u += s * v);
        }
    }
    let work: Vec<usize> = (0..ids.len()).collect();
    let grads: Vec<Result<ModelParams, ShapeError>> =
        exec.map(&work, &|&i| fwd[i].backward(&graphs[ids[i]], params, &upstream[i]));
    let mut total = params.zeros_like();
    for g in grads {
        total.add_scaled(&g?, 1.0)?;
    }
    Ok((loss * inv, total))
}

/// Mini-batch training with seeded shuffling and dropout. Stops early when
/// test accuracy has not improved for `patience` epochs; the parameters of
/// the last epoch are returned.
pub fn train<E: Executor>(
    graphs: &[GraphTensors],
    train_pairs: &[PairRef],
    test_pairs: &[PairRef],
    mut params: ModelParams,
    config: &TrainConfig,
    exec: &E,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    params.check()?;
    if train_pairs.is_empty() {
        return Err(TrainError::NoPairs);
    }
    check_pairs(train_pairs, graphs.len())?;
    check_pairs(test_pairs, graphs.len())?;
    let mut opt = OptimizerState::new(config.optimizer, &params);
    let mut trace = Vec::new();
    let mut best: Option<f64> = None;
    let mut stale = 0;
    let mut final_loss = 0.0;
    let mut order: Vec<PairRef> = train_pairs.to_vec();
    let train_labels: Vec<i8> = train_pairs.iter().map(|p| p.y).collect();
    let test_labels: Vec<i8> = test_pairs.iter().map(|p| p.y).collect();
    for epoch in 1..=config.epochs {
        order.copy_from_slice(train_pairs);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mask_seed(config.seed, epoch, usize::MAX, usize::MAX)));
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let hyper = params.hyper;
            let masks = move |g: usize| {
                (hyper.dropout > 0.0).then(|| dropout_masks(&hyper, graphs[g].n(), mask_seed(config.seed, epoch, b, g)))
            };
            let (loss, grads) = batch_step(graphs, batch, &params, config.margin, &masks, exec)?;
            opt.apply(&mut params, &grads, config.learning_rate)?;
            if !loss.is_finite() || !params.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: b });
            }
            epoch_loss += loss * batch.len() as f64;
        }
        final_loss = epoch_loss / train_pairs.len() as f64;
        let emb = embed_all(graphs, &params, exec)?;
        let train_acc = accuracy(&pair_scores(&emb, train_pairs), &train_labels, config.delta);
        let test_acc =
            (!test_pairs.is_empty()).then(|| accuracy(&pair_scores(&emb, test_pairs), &test_labels, config.delta));
        let stats = EpochStats { epoch, train_loss: final_loss, train_acc, test_acc };
        on_epoch(&stats);
        trace.push(stats);
        if let Some(acc) = test_acc {
            if best.is_none_or(|b| acc > b) {
                best = Some(acc);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { params, trace, final_loss })
}

/// Everything needed to reproduce inference, plus training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab_version: u32,
    pub params: ModelParams,
    pub epoch: u32,
    pub loss: f64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(params: ModelParams, epoch: u32, loss: f64, seed: u64) -> Self {
        Self { vocab_version: VOCAB_VERSION, params, epoch, loss, seed }
    }
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Max over entries of `|a - n| / max(|a|, |n|, floor)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose ±step crossed a ReLU kink, a selection change or the hinge.
    pub skipped: usize,
}

/// Magnitude below which gradient entries are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

/// ReLU signs, pooled selection and readout argmax of one forward pass.
type Pattern = (Vec<bool>, Vec<usize>, Vec<usize>);

fn pattern(f: &Forward) -> Pattern {
    let relu = f.pre.iter().flat_map(|z| z.as_slice().iter().map(|v| *v > 0.0)).collect();
    (relu, f.pool.selected.clone(), f.argmax.clone())
}

/// Central differences of the pair loss with respect to every parameter.
pub fn gradient_check(
    g1: (&GraphTensors, Option<Vec<Matrix>>),
    g2: (&GraphTensors, Option<Vec<Matrix>>),
    y: i8,
    params: &ModelParams,
    margin: f64,
    step: f64,
) -> Result<GradCheck, TrainError> {
    let analytic = pair_grads((g1.0, g1.1.clone()), (g2.0, g2.1.clone()), y, params, margin)?;
    let eval = |p: &ModelParams| -> Result<(f64, f64, [Pattern; 2]), TrainError> {
        let f1 = forward(g1.0, p, g1.1.clone())?;
        let f2 = forward(g2.0, p, g2.1.clone())?;
        let (yhat, _, _) = similarity_with_grad(f1.embedding.as_slice(), f2.embedding.as_slice());
        Ok((cosine_embedding_loss(yhat, y, margin)?, yhat, [pattern(&f1), pattern(&f2)]))
    };
    let (_, yhat0, base) = eval(params)?;
    let hinge = |v: f64| y == 1 || v > margin;
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, skipped: 0 };
    let count = params.tensors().len();
    for t in 0..count {
        let len = params.tensors()[t].as_slice().len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[t].as_mut_slice()[i] += step;
            let mut minus = params.clone();
            minus.tensors_mut()[t].as_mut_slice()[i] -= step;
            let (lp, yp, pp) = eval(&plus)?;
            let (lm, ym, pm) = eval(&minus)?;
            if pp != base || pm != base || hinge(yp) != hinge(yhat0) || hinge(ym) != hinge(yhat0) {
                out.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic.grads.tensors()[t].as_slice()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            out.max_rel_error = out.max_rel_error.max(rel);
            out.checked += 1;
        }
    }
    Ok(out)
}
