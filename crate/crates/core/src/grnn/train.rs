// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{masked_ce_terms, rmsprop_step, softmax, GrnnError, GrnnModel, ModelConfig, CLASSES};
use crate::dataset::Sample;
use crate::graph::{encode_features, LogicSource, NetGraph, NormalizedAdjacency};
use crate::logic::{LogicValue, SimState, Waveform};
use crate::seed::Seed;
use crate::tensor::Tensor2;

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    /// RMSprop squared-gradient accumulators, one per parameter.
    pub rms: Vec<Tensor2>,
    pub rng: ChaCha8Rng,
    pub best_val_loss: f64,
    pub best_params: Vec<Tensor2>,
    pub epochs_since_best: usize,
}

impl TrainState {
    pub fn new(model: &GrnnModel, rng: ChaCha8Rng) -> TrainState {
        TrainState {
            epoch: 0,
            rms: model.zero_grads(),
            rng,
            best_val_loss: f64::INFINITY,
            best_params: model.params.clone(),
            epochs_since_best: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: GrnnModel,
    pub log: Vec<EpochRecord>,
    pub state: TrainState,
    pub stopped_early: bool,
}

impl TrainOutcome {
    /// `epoch,train_loss,val_loss,val_acc` lines with a header.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        for r in &self.log {
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_acc));
        }
        out
    }
}

/// Features, labels and mask of a sample, unpacked once.
struct Prepared {
    xs: Vec<Tensor2>,
    labels: Vec<Vec<u8>>,
    mask: Vec<bool>,
    timesteps: usize,
}

fn prepare(s: &Sample) -> Prepared {
    let n = s.nodes();
    Prepared {
        xs: s.feature_tensors(),
        labels: (0..s.timesteps()).map(|t| s.labels()[t * n..(t + 1) * n].to_vec()).collect(),
        mask: s.mask(),
        timesteps: s.timesteps(),
    }
}

/// Stacks samples with equal cycle counts into block-diagonal batches.
fn stack(items: &[&Prepared]) -> (Vec<Tensor2>, Vec<Vec<u8>>, Vec<bool>) {
    let t = items[0].timesteps;
    let xs = (0..t).map(|c| Tensor2::vstack(&items.iter().map(|p| p.xs[c].clone()).collect::<Vec<_>>())).collect();
    let labels = (0..t).map(|c| items.iter().flat_map(|p| p.labels[c].iter().copied()).collect()).collect();
    let mask = items.iter().flat_map(|p| p.mask.iter().copied()).collect();
    (xs, labels, mask)
}

/// Micro-batches of equal-length samples, in first-seen order of lengths.
fn micro_batches<'a>(items: &[&'a Prepared], size: usize) -> Vec<Vec<&'a Prepared>> {
    let mut by_len: BTreeMap<usize, Vec<&Prepared>> = BTreeMap::new();
    let mut order = Vec::new();
    for &p in items {
        if !by_len.contains_key(&p.timesteps) {
            order.push(p.timesteps);
        }
        by_len.entry(p.timesteps).or_default().push(p);
    }
    order.into_iter().flat_map(|t| by_len[&t].chunks(size).map(<[_]>::to_vec).collect::<Vec<_>>()).collect()
}

/// Mean loss and accuracy over masked pairs, dropout off.
fn score(model: &GrnnModel, adj: &NormalizedAdjacency, data: &[Prepared]) -> Result<(f64, f64), GrnnError> {
    let refs: Vec<&Prepared> = data.iter().collect();
    let (mut loss, mut correct, mut count) = (0.0, 0usize, 0usize);
    for batch in micro_batches(&refs, model.config.micro_batch) {
        let (xs, labels, mask) = stack(&batch);
        let pass = model.forward(adj, &xs, None)?;
        let (l, _, c) = masked_ce_terms(&pass.logits, &labels, &mask);
        loss += l;
        count += c;
        for (y, lab) in pass.logits.iter().zip(&labels) {
            for r in 0..y.rows() {
                if mask[r] && argmax(y.row(r)) == lab[r] as usize {
                    correct += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(GrnnError::EmptyMask);
    }
    Ok((loss / count as f64, 100.0 * correct as f64 / count as f64))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains a fresh model with RMSprop and early stopping on validation loss.
pub fn train(
    adj: &NormalizedAdjacency,
    train: &[Sample],
    val: &[Sample],
    config: &ModelConfig,
    rng_seed: u64,
) -> Result<TrainOutcome, GrnnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let model = GrnnModel::new(config.clone(), adj.node_count(), &mut rng)?;
    let state = TrainState::new(&model, rng);
    continue_training(adj, model, state, train, val)
}

/// Runs epochs from `state` until `max_epochs` or early stopping.
pub fn continue_training(
    adj: &NormalizedAdjacency,
    mut model: GrnnModel,
    mut state: TrainState,
    train: &[Sample],
    val: &[Sample],
) -> Result<TrainOutcome, GrnnError> {
    if train.is_empty() {
        return Err(GrnnError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(GrnnError::EmptySplit("validation"));
    }
    model.check_graph(adj.node_count())?;
    for s in train.iter().chain(val) {
        model.check_graph(s.nodes())?;
    }
    let cfg = model.config.clone();
    let train_data: Vec<Prepared> = train.iter().map(prepare).collect();
    let val_data: Vec<Prepared> = val.iter().map(prepare).collect();
    let mut log = Vec::new();
    let mut stopped_early = false;
    while state.epoch < cfg.max_epochs {
        let epoch = state.epoch + 1;
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut state.rng);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for &i in &order {
            let p = &train_data[i];
            let labelled: Vec<usize> = (0..p.mask.len()).filter(|&v| p.mask[v]).collect();
            // One optimizer step per chunk of `batch_size` labelled nodes of this sample.
            for chunk in labelled.chunks(cfg.batch_size) {
                let mut mask = vec![false; p.mask.len()];
                chunk.iter().for_each(|&v| mask[v] = true);
                let pass = model.forward(adj, &p.xs, Some(&mut state.rng))?;
                let (l, mut dl, c) = masked_ce_terms(&pass.logits, &p.labels, &mask);
                epoch_loss += l;
                epoch_count += c;
                dl.iter_mut().for_each(|g| g.scale(1.0 / c as f64));
                let mut grads = model.zero_grads();
                model.backward(adj, &pass, &dl, &mut grads);
                rmsprop_step(&mut model.params, &grads, &mut state.rms, cfg.learning_rate, cfg.rms_decay, cfg.epsilon);
            }
        }
        let train_loss = epoch_loss / epoch_count.max(1) as f64;
        let (val_loss, val_acc) = score(&model, adj, &val_data)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            let loss = if train_loss.is_finite() { val_loss } else { train_loss };
            log::error!("training diverged at epoch {epoch}: loss {loss}");
            return Err(GrnnError::DivergenceDetected { epoch, loss });
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {val_acc:.2}");
        log.push(EpochRecord { epoch, train_loss, val_loss, val_acc });
        state.epoch = epoch;
        if val_loss < state.best_val_loss {
            state.best_val_loss = val_loss;
            state.best_params = model.params.clone();
            state.epochs_since_best = 0;
        } else {
            state.epochs_since_best += 1;
            if state.epochs_since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let best = GrnnModel { params: state.best_params.clone(), ..model };
    Ok(TrainOutcome { model: best, log, state, stopped_early })
}

/// Classification metrics over masked (non-input) node-cycle pairs. Macro
/// averages run over the classes that occur in the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[u64; CLASSES]; CLASSES],
}

impl Metrics {
    pub fn from_confusion(confusion: [[u64; CLASSES]; CLASSES]) -> Metrics {
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..CLASSES).map(|c| confusion[c][c]).sum();
        let (mut p, mut r, mut f, mut k) = (0.0, 0.0, 0.0, 0);
        for c in 0..CLASSES {
            let support: u64 = confusion[c].iter().sum();
            if support == 0 {
                continue;
            }
            let predicted: u64 = (0..CLASSES).map(|t| confusion[t][c]).sum();
            let tp = confusion[c][c] as f64;
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = tp / support as f64;
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            p += precision;
            r += recall;
            f += f1;
            k += 1;
        }
        let k = k.max(1) as f64;
        let accuracy = if total > 0 { 100.0 * correct as f64 / total as f64 } else { 0.0 };
        Metrics { accuracy, precision: 100.0 * p / k, recall: 100.0 * r / k, f1: 100.0 * f / k, confusion }
    }
}

pub fn evaluate(model: &GrnnModel, adj: &NormalizedAdjacency, samples: &[Sample]) -> Result<Metrics, GrnnError> {
    let data: Vec<Prepared> = samples.iter().map(prepare).collect();
    let refs: Vec<&Prepared> = data.iter().collect();
    let mut confusion = [[0u64; CLASSES]; CLASSES];
    for batch in micro_batches(&refs, model.config.micro_batch) {
        let (xs, labels, mask) = stack(&batch);
        let pass = model.forward(adj, &xs, None)?;
        for (y, lab) in pass.logits.iter().zip(&labels) {
            for r in 0..y.rows() {
                if mask[r] {
                    confusion[lab[r] as usize][argmax(y.row(r))] += 1;
                }
            }
        }
    }
    Ok(Metrics::from_confusion(confusion))
}

/// Predicted waveform plus the winning class probability per node and cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub waveform: Waveform,
    pub confidence: Vec<Vec<f64>>,
}

/// Predicts every node's value from the seed's input values. Input nodes
/// echo the seed.
pub fn infer(
    model: &GrnnModel,
    graph: &NetGraph,
    adj: &NormalizedAdjacency,
    seed: &Seed,
) -> Result<Prediction, GrnnError> {
    model.check_graph(graph.node_count())?;
    model.check_graph(adj.node_count())?;
    let inputs = graph.inputs();
    if seed.width() != inputs.len() {
        return Err(GrnnError::SeedWidth { expected: inputs.len(), got: seed.width() });
    }
    let n = graph.node_count();
    let mut xs = Vec::with_capacity(seed.timesteps());
    for t in 0..seed.timesteps() {
        let mut values = vec![LogicValue::LX; n];
        for (&node, &bit) in inputs.iter().zip(seed.cycle(t)) {
            values[node] = LogicValue::from_bool(bit);
        }
        xs.push(encode_features(graph, LogicSource::InputsOnly(&values)).expect("length matches graph"));
    }
    let pass = model.forward(adj, &xs, None)?;
    let mut states = Vec::with_capacity(seed.timesteps());
    let mut confidence = Vec::with_capacity(seed.timesteps());
    for (t, y) in pass.logits.iter().enumerate() {
        let mut values = Vec::with_capacity(n);
        let mut conf = Vec::with_capacity(n);
        for r in 0..n {
            let p = softmax(y.row(r));
            let c = argmax(y.row(r));
            values.push(LogicValue::from_class(c as u8).expect("class in range"));
            conf.push(p[c]);
        }
        for (&node, &bit) in inputs.iter().zip(seed.cycle(t)) {
            values[node] = LogicValue::from_bool(bit);
            conf[node] = 1.0;
        }
        states.push(SimState { values, dff_state: Vec::new() });
        confidence.push(conf);
    }
    Ok(Prediction { waveform: Waveform::from_states(states), confidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_exhaustive, split};
    use crate::graph::{build_graph, normalized_adjacency};
    use crate::grnn::tests::tiny_config;
    use crate::logic::simulate_sequence;
    use crate::netlist::parse_bench;

    #[test]
    fn metrics_examples() {
        let mut perfect = [[0u64; 4]; 4];
        perfect[0][0] = 5;
        perfect[1][1] = 3;
        let m = Metrics::from_confusion(perfect);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (100.0, 100.0, 100.0, 100.0));
        let mut constant = [[0u64; 4]; 4];
        constant[0][0] = 10;
        constant[1][0] = 10;
        let m = Metrics::from_confusion(constant);
        assert_eq!(m.accuracy, 50.0);
        assert!((m.f1 - 100.0 / 3.0).abs() < 1e-9);
        assert!((m.precision - 25.0).abs() < 1e-12);
        assert!((m.recall - 50.0).abs() < 1e-12);
    }

    #[test]
    fn inverter_learns_quickly() {
        let nl = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        let graph = build_graph(&nl);
        let adj = normalized_adjacency(&graph);
        let (samples, _) = generate_exhaustive(&nl, 1, [1.0, 0.0, 0.0]).unwrap();
        let cfg = ModelConfig { max_epochs: 50, ..ModelConfig::default() };
        let out = train(&adj, &samples, &samples, &cfg, 1).unwrap();
        assert!(out.log.len() <= 50);
        assert!(out.log.iter().any(|r| r.val_acc == 100.0));
        let m = evaluate(&out.model, &adj, &samples).unwrap();
        assert_eq!(m.accuracy, 100.0);
        let pred = infer(&out.model, &graph, &adj, &Seed::from_value(1, 0)).unwrap();
        assert_eq!(pred.waveform.value(0, nl.find("y").unwrap()), LogicValue::L1);
        assert_eq!(pred.waveform.value(0, nl.find("a").unwrap()), LogicValue::L0);
    }

    #[test]
    fn inference_accuracy_matches_evaluate() {
        let nl = parse_bench(include_str!("../../data/c17.bench")).unwrap();
        let graph = build_graph(&nl);
        let adj = normalized_adjacency(&graph);
        let (samples, _) = generate_exhaustive(&nl, 1, [1.0, 0.0, 0.0]).unwrap();
        let (tr, va, _) = split(&samples, [0.75, 0.25, 0.0], 3).unwrap();
        let cfg = ModelConfig { max_epochs: 3, ..tiny_config(false) };
        let out = train(&adj, &tr, &va, &cfg, 2).unwrap();
        let m = evaluate(&out.model, &adj, &samples).unwrap();
        let (mut hit, mut total) = (0, 0);
        for s in &samples {
            let pred = infer(&out.model, &graph, &adj, &s.seed).unwrap();
            let truth = simulate_sequence(&nl, &s.seed).unwrap();
            for v in (0..nl.len()).filter(|&v| !graph.is_input(v)) {
                total += 1;
                hit += (pred.waveform.value(0, v) == truth.value(0, v)) as usize;
            }
        }
        assert!((m.accuracy - 100.0 * hit as f64 / total as f64).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let nl = parse_bench(include_str!("../../data/c17.bench")).unwrap();
        let adj = normalized_adjacency(&build_graph(&nl));
        let (samples, _) = generate_exhaustive(&nl, 2, [1.0, 0.0, 0.0]).unwrap();
        let cfg = ModelConfig { max_epochs: 4, batch_size: 8, dropout: 0.1, ..tiny_config(false) };
        let a = train(&adj, &samples[..20], &samples[20..], &cfg, 9).unwrap();
        let b = train(&adj, &samples[..20], &samples[20..], &cfg, 9).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
        assert!(matches!(train(&adj, &[], &samples, &cfg, 1), Err(GrnnError::EmptySplit("train"))));
    }

    #[test]
    fn divergence_is_detected() {
        let nl = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        let adj = normalized_adjacency(&build_graph(&nl));
        let (samples, _) = generate_exhaustive(&nl, 1, [1.0, 0.0, 0.0]).unwrap();
        let cfg = ModelConfig { learning_rate: f64::MAX, max_epochs: 5, ..tiny_config(false) };
        let err = train(&adj, &samples, &samples, &cfg, 1).unwrap_err();
        assert!(matches!(err, GrnnError::DivergenceDetected { .. }), "{err}");
    }

    #[test]
    fn infer_rejects_other_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = GrnnModel::new(tiny_config(false), 4, &mut rng).unwrap();
        let nl = parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap();
        let g = build_graph(&nl);
        let err = infer(&model, &g, &normalized_adjacency(&g), &Seed::from_value(1, 0)).unwrap_err();
        assert!(matches!(err, GrnnError::ModelGraphMismatch { model: 4, graph: 2 }));
    }
}
