// SPDX-License-Identifier: Apache-2.0

//! Graph recurrent network: a stack of graph convolutions feeding a per-node
//! LSTM that carries state across cycles, followed by a 4-class projection.
//!
//! All arithmetic is `f64`. Gradients are computed by hand (backpropagation
//! through time) and checked against finite differences in the tests.

mod checkpoint;
mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{NormalizedAdjacency, FEATURE_WIDTH};
use crate::tensor::{gemm, Tensor2, Trans};

pub use checkpoint::{load_model, load_train_state, save_model, save_train_state, CheckpointError, ModelSidecar};
pub use train::{
    continue_training, evaluate, infer, train, EpochRecord, Metrics, Prediction, TrainOutcome, TrainState,
};

pub const CLASSES: usize = 4;

#[derive(Debug, Error)]
pub enum GrnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss mask selects no node")]
    EmptyMask,
    #[error("non-finite loss {loss} at epoch {epoch}")]
    DivergenceDetected { epoch: usize, loss: f64 },
    #[error("model was built for {model} nodes but the graph has {graph}")]
    ModelGraphMismatch { model: usize, graph: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("seed has {got} inputs, graph has {expected}")]
    SeedWidth { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Output width of each graph-convolution layer; the first layer reads
    /// the 17-wide node features.
    pub gcn_dims: Vec<usize>,
    pub hidden: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub epsilon: f64,
    pub dropout: f64,
    /// Labelled nodes of one sample per loss chunk; each chunk takes one
    /// optimizer step. Samples are never packed together.
    pub batch_size: usize,
    /// Samples stacked into one forward pass when scoring.
    pub micro_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Attention-weighted neighbour aggregation instead of `Â H`.
    pub attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gcn_dims: vec![128, 256, 512, 256],
            hidden: 256,
            learning_rate: 0.001,
            rms_decay: 0.9,
            epsilon: 1e-8,
            dropout: 0.1,
            batch_size: 128,
            micro_batch: 32,
            max_epochs: 200,
            patience: 20,
            attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GrnnError> {
        let bad = |m: &str| Err(GrnnError::InvalidConfig(m.to_string()));
        if self.gcn_dims.is_empty() || self.gcn_dims.contains(&0) {
            return bad("gcn_dims must be non-empty and positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.micro_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.epsilon > 0.0 && (0.0..1.0).contains(&self.rms_decay)) {
            return bad("optimizer settings out of range");
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Entries drawn from `N(0, sqrt(2 / fan_in))`.
pub fn he_normal_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor2 {
    assert!(fan_in >= 1, "fan_in must be positive");
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
    Tensor2::from_vec(fan_in, fan_out, (0..fan_in * fan_out).map(|_| normal.sample(rng)).collect())
}

/// Parameters in a fixed order: GCN weights, LSTM `U`, `W`, `b`, output
/// `W_y`, `b_y`, then (with attention) a source/destination vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GrnnModel {
    pub config: ModelConfig,
    pub params: Vec<Tensor2>,
    nodes: usize,
}

impl GrnnModel {
    pub fn new(config: ModelConfig, nodes: usize, rng: &mut ChaCha8Rng) -> Result<GrnnModel, GrnnError> {
        config.validate()?;
        let h = config.hidden;
        let mut params = Vec::new();
        let mut fan_in = FEATURE_WIDTH;
        for &d in &config.gcn_dims {
            params.push(he_normal_init(fan_in, d, rng));
            fan_in = d;
        }
        params.push(he_normal_init(fan_in, 4 * h, rng));
        params.push(he_normal_init(h, 4 * h, rng));
        params.push(Tensor2::zeros(1, 4 * h));
        params.push(he_normal_init(h, CLASSES, rng));
        params.push(Tensor2::zeros(1, CLASSES));
        if config.attention {
            for &d in &config.gcn_dims {
                params.push(he_normal_init(d, 1, rng));
                params.push(he_normal_init(d, 1, rng));
            }
        }
        Ok(GrnnModel { config, params, nodes })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<Tensor2>, nodes: usize) -> Result<GrnnModel, GrnnError> {
        config.validate()?;
        let model = GrnnModel { config, params, nodes };
        let want = model.param_shapes();
        if want.len() != model.params.len() || want.iter().zip(&model.params).any(|(s, p)| *s != p.shape()) {
            return Err(GrnnError::ShapeMismatch("parameter shapes do not match the config".into()));
        }
        Ok(model)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn check_graph(&self, nodes: usize) -> Result<(), GrnnError> {
        if nodes != self.nodes {
            return Err(GrnnError::ModelGraphMismatch { model: self.nodes, graph: nodes });
        }
        Ok(())
    }

    fn layers(&self) -> usize {
        self.config.gcn_dims.len()
    }

    fn idx_u(&self) -> usize {
        self.layers()
    }

    fn idx_w(&self) -> usize {
        self.layers() + 1
    }

    fn idx_b(&self) -> usize {
        self.layers() + 2
    }

    fn idx_wy(&self) -> usize {
        self.layers() + 3
    }

    fn idx_by(&self) -> usize {
        self.layers() + 4
    }

    fn idx_attn(&self, layer: usize) -> (usize, usize) {
        let base = self.layers() + 5 + 2 * layer;
        (base, base + 1)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.layers()).map(|l| format!("gcn.{l}.w")).collect();
        names.extend(["lstm.u", "lstm.w", "lstm.b", "out.w", "out.b"].map(String::from));
        if self.config.attention {
            for l in 0..self.layers() {
                names.push(format!("attn.{l}.src"));
                names.push(format!("attn.{l}.dst"));
            }
        }
        names
    }

    fn param_shapes(&self) -> Vec<(usize, usize)> {
        let h = self.config.hidden;
        let mut shapes = Vec::new();
        let mut fan_in = FEATURE_WIDTH;
        for &d in &self.config.gcn_dims {
            shapes.push((fan_in, d));
            fan_in = d;
        }
        shapes.extend([(fan_in, 4 * h), (h, 4 * h), (1, 4 * h), (h, CLASSES), (1, CLASSES)]);
        if self.config.attention {
            for &d in &self.config.gcn_dims {
                shapes.push((d, 1));
                shapes.push((d, 1));
            }
        }
        shapes
    }

    pub fn zero_grads(&self) -> Vec<Tensor2> {
        self.params.iter().map(|p| Tensor2::zeros(p.rows(), p.cols())).collect()
    }
}

/// `ReLU(Â H W)` on one or more stacked `n`-row blocks.
pub fn gcn_forward(adj: &NormalizedAdjacency, h: &Tensor2, w: &Tensor2) -> Result<Tensor2, GrnnError> {
    if h.cols() != w.rows() {
        return Err(GrnnError::ShapeMismatch(format!("H has {} columns, W has {} rows", h.cols(), w.rows())));
    }
    if adj.node_count() == 0 || !h.rows().is_multiple_of(adj.node_count()) {
        return Err(GrnnError::ShapeMismatch(format!("H has {} rows for {} nodes", h.rows(), adj.node_count())));
    }
    let z = adj.apply(h);
    let mut p = Tensor2::zeros(h.rows(), w.cols());
    gemm(1.0, &z, Trans::N, w, Trans::N, 0.0, &mut p);
    Ok(p.map(|x| x.max(0.0)))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Activations of one LSTM step over a stack of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    /// Activated gates `[i | f | g | o]`, each `hidden` wide.
    pub gates: Tensor2,
    pub c: Tensor2,
    pub tanh_c: Tensor2,
    pub h: Tensor2,
}

/// One shared-weight LSTM step: `G = x U + h_prev W + b`, sigmoid input,
/// forget and output gates, tanh candidate.
pub fn lstm_step(
    u: &Tensor2,
    w: &Tensor2,
    b: &Tensor2,
    x: &Tensor2,
    h_prev: Option<&Tensor2>,
    c_prev: Option<&Tensor2>,
) -> Result<LstmStep, GrnnError> {
    let hidden = w.rows();
    let rows = x.rows();
    if u.rows() != x.cols() || u.cols() != 4 * hidden || w.cols() != 4 * hidden || b.shape() != (1, 4 * hidden) {
        return Err(GrnnError::ShapeMismatch("LSTM weights do not agree".into()));
    }
    if h_prev.is_some_and(|h| h.shape() != (rows, hidden)) || c_prev.is_some_and(|c| c.shape() != (rows, hidden)) {
        return Err(GrnnError::ShapeMismatch("LSTM state does not match input rows".into()));
    }
    let mut g = Tensor2::zeros(rows, 4 * hidden);
    for r in 0..rows {
        g.row_mut(r).copy_from_slice(b.row(0));
    }
    gemm(1.0, x, Trans::N, u, Trans::N, 1.0, &mut g);
    if let Some(h) = h_prev {
        gemm(1.0, h, Trans::N, w, Trans::N, 1.0, &mut g);
    }
    let mut c = Tensor2::zeros(rows, hidden);
    let mut tanh_c = Tensor2::zeros(rows, hidden);
    let mut h = Tensor2::zeros(rows, hidden);
    for r in 0..rows {
        let gr = g.row_mut(r);
        for k in 0..hidden {
            gr[k] = sigmoid(gr[k]);
            gr[hidden + k] = sigmoid(gr[hidden + k]);
            gr[2 * hidden + k] = gr[2 * hidden + k].tanh();
            gr[3 * hidden + k] = sigmoid(gr[3 * hidden + k]);
        }
        let gr = g.row(r);
        let cp = c_prev.map(|c| c.row(r));
        for k in 0..hidden {
            let prev = cp.map_or(0.0, |c| c[k]);
            let cv = gr[hidden + k] * prev + gr[k] * gr[2 * hidden + k];
            c[(r, k)] = cv;
            tanh_c[(r, k)] = cv.tanh();
            h[(r, k)] = gr[3 * hidden + k] * tanh_c[(r, k)];
        }
    }
    Ok(LstmStep { gates: g, c, tanh_c, h })
}

/// Gradients produced by [`lstm_step_backward`].
pub struct LstmGrads {
    pub dx: Tensor2,
    pub dh_prev: Option<Tensor2>,
    pub dc_prev: Tensor2,
}

/// Backward pass of one step. `dh`/`dc` are the upstream gradients of the
/// step's outputs; weight gradients are accumulated into `du`, `dw`, `db`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward(
    u: &Tensor2,
    w: &Tensor2,
    x: &Tensor2,
    h_prev: Option<&Tensor2>,
    c_prev: Option<&Tensor2>,
    step: &LstmStep,
    dh: &Tensor2,
    dc_in: Option<&Tensor2>,
    du: &mut Tensor2,
    dw: &mut Tensor2,
    db: &mut Tensor2,
) -> LstmGrads {
    let hidden = w.rows();
    let rows = x.rows();
    let mut dg = Tensor2::zeros(rows, 4 * hidden);
    let mut dc_prev = Tensor2::zeros(rows, hidden);
    for r in 0..rows {
        let g = step.gates.row(r);
        let cp = c_prev.map(|c| c.row(r));
        let dgr = dg.row_mut(r);
        for k in 0..hidden {
            let (i, f, gg, o) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
            let tc = step.tanh_c[(r, k)];
            let dhv = dh[(r, k)];
            let dc = dhv * o * (1.0 - tc * tc) + dc_in.map_or(0.0, |d| d[(r, k)]);
            let prev = cp.map_or(0.0, |c| c[k]);
            dgr[k] = dc * gg * i * (1.0 - i);
            dgr[hidden + k] = dc * prev * f * (1.0 - f);
            dgr[2 * hidden + k] = dc * i * (1.0 - gg * gg);
            dgr[3 * hidden + k] = dhv * tc * o * (1.0 - o);
            dc_prev[(r, k)] = dc * f;
        }
    }
    gemm(1.0, x, Trans::T, &dg, Trans::N, 1.0, du);
    let dbr = db.row_mut(0);
    for r in 0..rows {
        for (acc, v) in dbr.iter_mut().zip(dg.row(r)) {
            *acc += v;
        }
    }
    let mut dx = Tensor2::zeros(rows, x.cols());
    gemm(1.0, &dg, Trans::N, u, Trans::T, 0.0, &mut dx);
    let dh_prev = h_prev.map(|h| {
        gemm(1.0, h, Trans::T, &dg, Trans::N, 1.0, dw);
        let mut d = Tensor2::zeros(rows, hidden);
        gemm(1.0, &dg, Trans::N, w, Trans::T, 0.0, &mut d);
        d
    });
    LstmGrads { dx, dh_prev, dc_prev }
}

const LEAKY_SLOPE: f64 = 0.2;

/// Per-layer values kept for the backward pass.
struct LayerCache {
    /// Input to the layer.
    input: Tensor2,
    /// `Â H` (plain) or `H W` (attention).
    z: Tensor2,
    /// Pre-activation output.
    pre: Tensor2,
    /// Inverted-dropout scale per entry, when training.
    dropout: Option<Vec<f64>>,
    /// Attention coefficients and raw scores in adjacency order.
    attn: Option<(Vec<f64>, Vec<f64>)>,
}

struct StepCache {
    layers: Vec<LayerCache>,
    x: Tensor2,
    lstm: LstmStep,
}

pub(crate) struct ForwardPass {
    steps: Vec<StepCache>,
    pub logits: Vec<Tensor2>,
}

fn attention_forward(
    adj: &NormalizedAdjacency,
    p: &Tensor2,
    a_src: &Tensor2,
    a_dst: &Tensor2,
) -> (Tensor2, Vec<f64>, Vec<f64>) {
    let n = adj.node_count();
    let d = p.cols();
    let score = |row: &[f64], a: &Tensor2| row.iter().zip(a.data()).map(|(x, y)| x * y).sum::<f64>();
    let s: Vec<f64> = (0..p.rows()).map(|r| score(p.row(r), a_src)).collect();
    let t: Vec<f64> = (0..p.rows()).map(|r| score(p.row(r), a_dst)).collect();
    let mut q = Tensor2::zeros(p.rows(), d);
    let mut alpha = Vec::new();
    let mut raw = Vec::new();
    for block in 0..p.rows() / n {
        let base = block * n;
        for i in 0..n {
            let start = alpha.len();
            for (j, _) in adj.row(i) {
                let e = s[base + i] + t[base + j];
                raw.push(e);
                alpha.push(if e > 0.0 { e } else { LEAKY_SLOPE * e });
            }
            let seg = &mut alpha[start..];
            let m = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            seg.iter_mut().for_each(|v| *v = (*v - m).exp());
            let z: f64 = seg.iter().sum();
            seg.iter_mut().for_each(|v| *v /= z);
            for ((j, _), &a) in adj.row(i).zip(&alpha[start..]) {
                let src = p.row(base + j);
                for (o, &v) in q.row_mut(base + i).iter_mut().zip(src) {
                    *o += a * v;
                }
            }
        }
    }
    (q, alpha, raw)
}

impl GrnnModel {
    /// Forward pass over `xs` (one stacked feature matrix per cycle). Passing
    /// an RNG enables dropout.
    pub(crate) fn forward(
        &self,
        adj: &NormalizedAdjacency,
        xs: &[Tensor2],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardPass, GrnnError> {
        let n = adj.node_count();
        if n != self.nodes {
            return Err(GrnnError::ModelGraphMismatch { model: self.nodes, graph: n });
        }
        let keep = 1.0 - self.config.dropout;
        let mut steps: Vec<StepCache> = Vec::with_capacity(xs.len());
        let mut logits = Vec::with_capacity(xs.len());
        for x0 in xs {
            if x0.cols() != FEATURE_WIDTH || x0.rows() % n != 0 {
                return Err(GrnnError::ShapeMismatch(format!("features are {:?}", x0.shape())));
            }
            let mut layers = Vec::with_capacity(self.layers());
            let mut h = x0.clone();
            for l in 0..self.layers() {
                let w = &self.params[l];
                let (z, pre, attn) = if self.config.attention {
                    let mut hw = Tensor2::zeros(h.rows(), w.cols());
                    gemm(1.0, &h, Trans::N, w, Trans::N, 0.0, &mut hw);
                    let (ia, ib) = self.idx_attn(l);
                    let (q, alpha, raw) = attention_forward(adj, &hw, &self.params[ia], &self.params[ib]);
                    (hw, q, Some((alpha, raw)))
                } else {
                    let z = adj.apply(&h);
                    let mut pre = Tensor2::zeros(h.rows(), w.cols());
                    gemm(1.0, &z, Trans::N, w, Trans::N, 0.0, &mut pre);
                    (z, pre, None)
                };
                let mut out = pre.map(|v| v.max(0.0));
                let dropout = match rng.as_deref_mut() {
                    Some(r) if self.config.dropout > 0.0 => {
                        let mask: Vec<f64> = (0..out.data().len())
                            .map(|_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        out.data_mut().iter_mut().zip(&mask).for_each(|(o, m)| *o *= m);
                        Some(mask)
                    }
                    _ => None,
                };
                layers.push(LayerCache { input: h, z, pre, dropout, attn });
                h = out;
            }
            let prev = steps.last().map(|s| (&s.lstm.h, &s.lstm.c));
            let lstm = lstm_step(
                &self.params[self.idx_u()],
                &self.params[self.idx_w()],
                &self.params[self.idx_b()],
                &h,
                prev.map(|p| p.0),
                prev.map(|p| p.1),
            )?;
            let mut y = Tensor2::zeros(h.rows(), CLASSES);
            for r in 0..y.rows() {
                y.row_mut(r).copy_from_slice(self.params[self.idx_by()].row(0));
            }
            gemm(1.0, &lstm.h, Trans::N, &self.params[self.idx_wy()], Trans::N, 1.0, &mut y);
            logits.push(y);
            steps.push(StepCache { layers, x: h, lstm });
        }
        Ok(ForwardPass { steps, logits })
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the logits is `dlogits`.
    pub(crate) fn backward(
        &self,
        adj: &NormalizedAdjacency,
        pass: &ForwardPass,
        dlogits: &[Tensor2],
        grads: &mut [Tensor2],
    ) {
        let (iu, iw, ib, iwy, iby) = (self.idx_u(), self.idx_w(), self.idx_b(), self.idx_wy(), self.idx_by());
        let mut dh_next: Option<Tensor2> = None;
        let mut dc_next: Option<Tensor2> = None;
        for t in (0..pass.steps.len()).rev() {
            let step = &pass.steps[t];
            let dy = &dlogits[t];
            gemm(1.0, &step.lstm.h, Trans::T, dy, Trans::N, 1.0, &mut grads[iwy]);
            {
                let dby = grads[iby].row_mut(0);
                for r in 0..dy.rows() {
                    for (acc, v) in dby.iter_mut().zip(dy.row(r)) {
                        *acc += v;
                    }
                }
            }
            let mut dh = match dh_next.take() {
                Some(d) => d,
                None => Tensor2::zeros(dy.rows(), self.config.hidden),
            };
            gemm(1.0, dy, Trans::N, &self.params[iwy], Trans::T, 1.0, &mut dh);
            let prev = if t > 0 { Some(&pass.steps[t - 1].lstm) } else { None };
            let (mut du, mut dw, mut db) = (
                std::mem::replace(&mut grads[iu], Tensor2::zeros(0, 0)),
                std::mem::replace(&mut grads[iw], Tensor2::zeros(0, 0)),
                std::mem::replace(&mut grads[ib], Tensor2::zeros(0, 0)),
            );
            let lg = lstm_step_backward(
                &self.params[iu],
                &self.params[iw],
                &step.x,
                prev.map(|p| &p.h),
                prev.map(|p| &p.c),
                &step.lstm,
                &dh,
                dc_next.as_ref(),
                &mut du,
                &mut dw,
                &mut db,
            );
            grads[iu] = du;
            grads[iw] = dw;
            grads[ib] = db;
            dh_next = lg.dh_prev;
            dc_next = Some(lg.dc_prev);
            self.gcn_backward(adj, step, lg.dx, grads);
        }
    }

    fn gcn_backward(&self, adj: &NormalizedAdjacency, step: &StepCache, mut dout: Tensor2, grads: &mut [Tensor2]) {
        for l in (0..self.layers()).rev() {
            let cache = &step.layers[l];
            let w = &self.params[l];
            let mut dpre = dout;
            for (k, (d, &p)) in dpre.data_mut().iter_mut().zip(cache.pre.data()).enumerate() {
                let m = cache.dropout.as_ref().map_or(1.0, |m| m[k]);
                *d = if p > 0.0 { *d * m } else { 0.0 };
            }
            let need_input_grad = l > 0;
            let dz = match &cache.attn {
                None => {
                    gemm(1.0, &cache.z, Trans::T, &dpre, Trans::N, 1.0, &mut grads[l]);
                    if !need_input_grad {
                        return;
                    }
                    let mut dz = Tensor2::zeros(dpre.rows(), w.rows());
                    gemm(1.0, &dpre, Trans::N, w, Trans::T, 0.0, &mut dz);
                    // Â is symmetric, so its transpose is itself.
                    adj.apply(&dz)
                }
                Some((alpha, raw)) => {
                    let dp = self.attention_backward(adj, l, &cache.z, alpha, raw, &dpre, grads);
                    gemm(1.0, &cache.input, Trans::T, &dp, Trans::N, 1.0, &mut grads[l]);
                    if !need_input_grad {
                        return;
                    }
                    let mut dh = Tensor2::zeros(dp.rows(), w.rows());
                    gemm(1.0, &dp, Trans::N, w, Trans::T, 0.0, &mut dh);
                    dh
                }
            };
            dout = dz;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        adj: &NormalizedAdjacency,
        layer: usize,
        p: &Tensor2,
        alpha: &[f64],
        raw: &[f64],
        dq: &Tensor2,
        grads: &mut [Tensor2],
    ) -> Tensor2 {
        let n = adj.node_count();
        let d = p.cols();
        let (ia, ib) = self.idx_attn(layer);
        let (a_src, a_dst) = (&self.params[ia], &self.params[ib]);
        let mut dp = Tensor2::zeros(p.rows(), d);
        let mut ds = vec![0.0; p.rows()];
        let mut dt = vec![0.0; p.rows()];
        let mut k = 0;
        for block in 0..p.rows() / n {
            let base = block * n;
            for i in 0..n {
                let start = k;
                let dqi = dq.row(base + i);
                let mut dalpha = Vec::new();
                for (j, _) in adj.row(i) {
                    let a = alpha[k];
                    let pj = p.row(base + j);
                    dalpha.push(dqi.iter().zip(pj).map(|(x, y)| x * y).sum::<f64>());
                    for (o, &g) in dp.row_mut(base + j).iter_mut().zip(dqi) {
                        *o += a * g;
                    }
                    k += 1;
                }
                let dot: f64 = alpha[start..k].iter().zip(&dalpha).map(|(a, g)| a * g).sum();
                for (idx, (j, _)) in adj.row(i).enumerate() {
                    let de = alpha[start + idx] * (dalpha[idx] - dot);
                    let slope = if raw[start + idx] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                    ds[base + i] += de * slope;
                    dt[base + j] += de * slope;
                }
            }
        }
        let mut da_src = vec![0.0; d];
        let mut da_dst = vec![0.0; d];
        for r in 0..p.rows() {
            let pr = p.row(r);
            for c in 0..d {
                da_src[c] += ds[r] * pr[c];
                da_dst[c] += dt[r] * pr[c];
            }
            let row = dp.row_mut(r);
            for c in 0..d {
                row[c] += ds[r] * a_src.data()[c] + dt[r] * a_dst.data()[c];
            }
        }
        grads[ia].data_mut().iter_mut().zip(&da_src).for_each(|(g, v)| *g += v);
        grads[ib].data_mut().iter_mut().zip(&da_dst).for_each(|(g, v)| *g += v);
        dp
    }
}

/// Sum of masked cross-entropies and the matching logit gradients (softmax
/// minus one-hot on masked rows, zero elsewhere). `mask` covers one cycle of
/// the stacked rows.
pub(crate) fn masked_ce_terms(logits: &[Tensor2], labels: &[Vec<u8>], mask: &[bool]) -> (f64, Vec<Tensor2>, usize) {
    let mut total = 0.0;
    let mut count = 0;
    let mut grads = Vec::with_capacity(logits.len());
    for (y, lab) in logits.iter().zip(labels) {
        let mut g = Tensor2::zeros(y.rows(), CLASSES);
        for r in 0..y.rows() {
            if !mask[r] {
                continue;
            }
            let probs = softmax(y.row(r));
            let row = y.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            let c = lab[r] as usize;
            total += lse - row[c];
            count += 1;
            let gr = g.row_mut(r);
            gr.copy_from_slice(&probs);
            gr[c] -= 1.0;
        }
        grads.push(g);
    }
    (total, grads, count)
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Masked mean cross-entropy of `model` on one stacked instance, dropout off.
pub fn model_loss(
    model: &GrnnModel,
    adj: &NormalizedAdjacency,
    xs: &[Tensor2],
    labels: &[Vec<u8>],
    mask: &[bool],
) -> Result<f64, GrnnError> {
    let pass = model.forward(adj, xs, None)?;
    loss_masked_ce(&pass.logits, labels, mask)
}

/// [`model_loss`] and its gradient with respect to every parameter, in
/// [`GrnnModel::param_names`] order.
pub fn loss_and_gradients(
    model: &GrnnModel,
    adj: &NormalizedAdjacency,
    xs: &[Tensor2],
    labels: &[Vec<u8>],
    mask: &[bool],
) -> Result<(f64, Vec<Tensor2>), GrnnError> {
    let pass = model.forward(adj, xs, None)?;
    let loss = loss_masked_ce(&pass.logits, labels, mask)?;
    let (_, mut dl, count) = masked_ce_terms(&pass.logits, labels, mask);
    dl.iter_mut().for_each(|g| g.scale(1.0 / count as f64));
    let mut grads = model.zero_grads();
    model.backward(adj, &pass, &dl, &mut grads);
    Ok((loss, grads))
}

/// Mean softmax cross-entropy over the masked rows of every cycle.
pub fn loss_masked_ce(logits: &[Tensor2], labels: &[Vec<u8>], mask: &[bool]) -> Result<f64, GrnnError> {
    if logits.len() != labels.len()
        || logits.iter().zip(labels).any(|(y, l)| y.rows() != l.len() || y.rows() != mask.len())
    {
        return Err(GrnnError::ShapeMismatch("logits, labels and mask disagree".into()));
    }
    let (total, _, count) = masked_ce_terms(logits, labels, mask);
    if count == 0 {
        return Err(GrnnError::EmptyMask);
    }
    Ok(total / count as f64)
}

/// `acc = decay * acc + (1 - decay) * g^2`, `p -= lr * g / sqrt(acc + eps)`.
pub fn rmsprop_step(params: &mut [Tensor2], grads: &[Tensor2], acc: &mut [Tensor2], lr: f64, decay: f64, eps: f64) {
    for ((p, g), a) in params.iter_mut().zip(grads).zip(acc.iter_mut()) {
        assert_eq!(p.shape(), g.shape());
        assert_eq!(p.shape(), a.shape());
        for ((pv, &gv), av) in p.data_mut().iter_mut().zip(g.data()).zip(a.data_mut()) {
            *av = decay * *av + (1.0 - decay) * gv * gv;
            *pv -= lr * gv / (*av + eps).sqrt();
        }
    }
}
