// SPDX-License-Identifier: Apache-2.0

//! Supervised samples for the node-value predictor.
//!
//! Features reveal only primary-input values (every other node reads `X`);
//! labels are the settled simulator value of every node at every cycle.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzer::{coverage_update, gen_seed, mutate_with, Corpus, CoverageMap, MutationWeights};
use crate::graph::{build_graph, encode_features, LogicSource, NetGraph, FEATURE_WIDTH, LOGIC_OFFSET};
use crate::logic::{simulate_sequence, LogicValue, SimError, Waveform};
use crate::netlist::{Interface, Netlist};
use crate::seed::{Seed, SeedError};
use crate::tensor::Tensor2;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("split {split} would be empty")]
    EmptySplit { split: &'static str },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("dataset needs at least one seed and one cycle")]
    EmptyRequest,
    #[error("exhaustive enumeration supports at most 20 inputs, netlist has {0}")]
    TooManyInputs(usize),
    #[error("malformed dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Seed(#[from] SeedError),
}

/// One seed's features and labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub seed: Seed,
    nodes: usize,
    /// `T * n * 17` one-hot bits, row-major over (cycle, node, slot), packed
    /// most significant bit first.
    features: Vec<u8>,
    /// `T * n` class ids.
    labels: Vec<u8>,
}

fn pack_bits(bits: impl Iterator<Item = bool>) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, b) in bits.enumerate() {
        if i % 8 == 0 {
            out.push(0);
        }
        if b {
            *out.last_mut().expect("pushed above") |= 0x80 >> (i % 8);
        }
    }
    out
}

impl Sample {
    pub fn from_waveform(graph: &NetGraph, seed: &Seed, waveform: &Waveform) -> Sample {
        let n = graph.node_count();
        let mut feature_bits = Vec::with_capacity(seed.timesteps() * n * FEATURE_WIDTH);
        let mut labels = Vec::with_capacity(seed.timesteps() * n);
        for t in 0..seed.timesteps() {
            let values = &waveform.state(t).values;
            let x = encode_features(graph, LogicSource::InputsOnly(values)).expect("waveform matches graph");
            feature_bits.extend(x.data().iter().map(|&v| v != 0.0));
            labels.extend(values.iter().map(|v| v.class()));
        }
        Sample { seed: seed.clone(), nodes: n, features: pack_bits(feature_bits.into_iter()), labels }
    }

    pub fn timesteps(&self) -> usize {
        self.seed.timesteps()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn packed_features(&self) -> &[u8] {
        &self.features
    }

    pub fn feature_bit(&self, t: usize, node: usize, slot: usize) -> bool {
        let i = (t * self.nodes + node) * FEATURE_WIDTH + slot;
        self.features[i / 8] & (0x80 >> (i % 8)) != 0
    }

    /// One `n x 17` matrix per cycle.
    pub fn feature_tensors(&self) -> Vec<Tensor2> {
        (0..self.timesteps())
            .map(|t| {
                let data = (0..self.nodes * FEATURE_WIDTH)
                    .map(|k| self.feature_bit(t, k / FEATURE_WIDTH, k % FEATURE_WIDTH) as u8 as f64)
                    .collect();
                Tensor2::from_vec(self.nodes, FEATURE_WIDTH, data)
            })
            .collect()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, t: usize, node: usize) -> LogicValue {
        LogicValue::from_class(self.labels[t * self.nodes + node]).expect("class id in range")
    }

    /// Loss mask: true for every node that is not a primary input.
    pub fn mask(&self) -> Vec<bool> {
        (0..self.nodes).map(|v| !self.feature_bit(0, v, Interface::PrimaryInput as usize)).collect()
    }

    /// Logic-value class shown in the features for `(t, node)`.
    pub fn shown_class(&self, t: usize, node: usize) -> u8 {
        (0..4).find(|&c| self.feature_bit(t, node, LOGIC_OFFSET + c as usize)).expect("one-hot logic segment")
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.seed.to_hex(),
            self.timesteps(),
            self.nodes,
            B64.encode(&self.features),
            B64.encode(&self.labels)
        )
    }

    fn from_line(line: &str, width: usize, lineno: usize) -> Result<Sample, DatasetError> {
        let bad = |message: String| DatasetError::Format { line: lineno, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let t: usize = fields[1].parse().map_err(|e| bad(format!("timesteps: {e}")))?;
        let nodes: usize = fields[2].parse().map_err(|e| bad(format!("nodes: {e}")))?;
        let seed = Seed::from_hex(fields[0], width, t)?;
        let features = B64.decode(fields[3]).map_err(|e| bad(format!("features: {e}")))?;
        let labels = B64.decode(fields[4]).map_err(|e| bad(format!("labels: {e}")))?;
        if features.len() != (t * nodes * FEATURE_WIDTH).div_ceil(8) || labels.len() != t * nodes {
            return Err(bad("payload length does not match T and n".into()));
        }
        Ok(Sample { seed, nodes, features, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    CoverageGuided,
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_seeds: usize,
    pub timesteps: usize,
    pub split: [f64; 3],
    /// Probability of a fresh random seed instead of a mutated corpus seed.
    pub fresh_probability: f64,
    pub mutation: MutationWeights,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_seeds: 1000,
            timesteps: 4,
            split: [0.8, 0.1, 0.1],
            fresh_probability: 0.25,
            mutation: MutationWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub netlist_digest: String,
    pub strategy: Strategy,
    pub rng_seed: u64,
    pub n_seeds: usize,
    pub timesteps: usize,
    pub width: usize,
    pub nodes: usize,
    pub split_ratios: [f64; 3],
    pub split_counts: [usize; 3],
    pub toggle_coverage: f64,
    #[serde(default)]
    pub config_digest: Option<String>,
    #[serde(default)]
    pub fresh_probability: f64,
    #[serde(default)]
    pub mutation: MutationWeights,
}

impl DatasetManifest {
    pub fn config(&self) -> DatasetConfig {
        DatasetConfig {
            n_seeds: self.n_seeds,
            timesteps: self.timesteps,
            split: self.split_ratios,
            fresh_probability: self.fresh_probability,
            mutation: self.mutation.clone(),
        }
    }
}

fn check_ratios(r: [f64; 3]) -> Result<(), DatasetError> {
    if r.iter().any(|x| !x.is_finite() || *x < 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(r));
    }
    Ok(())
}

/// Sizes of the train/val/test partitions: rounded ratios for val and test,
/// the remainder to train.
pub fn split_sizes(len: usize, ratios: [f64; 3]) -> Result<[usize; 3], DatasetError> {
    check_ratios(ratios)?;
    let mut val = (ratios[1] * len as f64).round() as usize;
    let mut test = (ratios[2] * len as f64).round() as usize;
    let positive = ratios.iter().filter(|&&r| r > 0.0).count();
    if len >= positive {
        if ratios[1] > 0.0 && val == 0 {
            val = 1;
        }
        if ratios[2] > 0.0 && test == 0 {
            test = 1;
        }
    }
    while val + test > len {
        if test >= val && test > 0 {
            test -= 1;
        } else {
            val -= 1;
        }
    }
    let train = len - val - test;
    let sizes = [train, val, test];
    if len >= positive {
        for (i, name) in ["train", "validation", "test"].into_iter().enumerate() {
            if ratios[i] > 0.0 && sizes[i] == 0 {
                return Err(DatasetError::EmptySplit { split: name });
            }
        }
    }
    Ok(sizes)
}

/// Train, validation and test partitions.
pub type Splits<T> = (Vec<T>, Vec<T>, Vec<T>);

/// Deterministic shuffle then partition into (train, val, test).
pub fn split<T: Clone>(items: &[T], ratios: [f64; 3], rng_seed: u64) -> Result<Splits<T>, DatasetError> {
    let [train, val, _] = split_sizes(items.len(), ratios)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok((pick(&order[..train]), pick(&order[train..train + val]), pick(&order[train + val..])))
}

/// Coverage-guided dataset: fresh seeds plus mutations of seeds that raised
/// toggle coverage, each simulated once.
pub fn generate_dataset(
    netlist: &Netlist,
    config: &DatasetConfig,
    rng_seed: u64,
) -> Result<(Vec<Sample>, DatasetManifest), DatasetError> {
    if config.n_seeds == 0 || config.timesteps == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    check_ratios(config.split)?;
    let graph = build_graph(netlist);
    let width = netlist.input_ids().len();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut map = CoverageMap::new(graph.node_count());
    let mut corpus = Corpus::new();
    let mut samples = Vec::with_capacity(config.n_seeds);
    for id in 0..config.n_seeds as u64 {
        let seed = match corpus.pick(&mut rng) {
            Some(parent) if rng.gen::<f64>() >= config.fresh_probability => {
                mutate_with(&parent.seed, &corpus, &config.mutation, &mut rng).0
            }
            _ => gen_seed(width, config.timesteps, &mut rng),
        };
        let wf = simulate_sequence(netlist, &seed)?;
        let delta = coverage_update(&mut map, &wf).expect("waveform comes from this netlist");
        samples.push(Sample::from_waveform(&graph, &seed, &wf));
        if delta.interesting {
            let gain = delta.new.len() as f64;
            corpus.admit(id, seed, delta.new, gain);
        }
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        netlist_digest: netlist.digest(),
        strategy: Strategy::CoverageGuided,
        rng_seed,
        n_seeds: config.n_seeds,
        timesteps: config.timesteps,
        width,
        nodes: graph.node_count(),
        split_ratios: config.split,
        split_counts: split_sizes(config.n_seeds, config.split)?,
        toggle_coverage: map.percentage(),
        config_digest: None,
        fresh_probability: config.fresh_probability,
        mutation: config.mutation.clone(),
    };
    Ok((samples, manifest))
}

/// Every input vector once, in counting order (all-zero first). Each seed is
/// `timesteps` repetitions of the same vector.
pub fn generate_exhaustive(
    netlist: &Netlist,
    timesteps: usize,
    ratios: [f64; 3],
) -> Result<(Vec<Sample>, DatasetManifest), DatasetError> {
    let width = netlist.input_ids().len();
    if width > 20 {
        return Err(DatasetError::TooManyInputs(width));
    }
    if timesteps == 0 || width == 0 {
        return Err(DatasetError::EmptyRequest);
    }
    let graph = build_graph(netlist);
    let mut map = CoverageMap::new(graph.node_count());
    let mut samples = Vec::new();
    for v in 0..1u64 << width {
        let one = Seed::from_value(width, v);
        let seed = Seed::from_cycles(&vec![one.cycle(0).to_vec(); timesteps])?;
        let wf = simulate_sequence(netlist, &seed)?;
        coverage_update(&mut map, &wf).expect("waveform comes from this netlist");
        samples.push(Sample::from_waveform(&graph, &seed, &wf));
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        netlist_digest: netlist.digest(),
        strategy: Strategy::Exhaustive,
        rng_seed: 0,
        n_seeds: samples.len(),
        timesteps,
        width,
        nodes: graph.node_count(),
        split_ratios: ratios,
        split_counts: split_sizes(samples.len(), ratios)?,
        toggle_coverage: map.percentage(),
        config_digest: None,
        fresh_probability: 0.0,
        mutation: MutationWeights::default(),
    };
    Ok((samples, manifest))
}

/// Header line with the manifest, then one line per sample.
pub fn write_dataset(manifest: &DatasetManifest, samples: &[Sample]) -> String {
    let mut out = serde_json::to_string(manifest).expect("manifest serializes");
    out.push('\n');
    for s in samples {
        out.push_str(&s.to_line());
        out.push('\n');
    }
    out
}

pub fn read_dataset(text: &str) -> Result<(DatasetManifest, Vec<Sample>), DatasetError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(DatasetError::Format { line: 1, message: "missing header".into() })?;
    let manifest: DatasetManifest =
        serde_json::from_str(header).map_err(|e| DatasetError::Format { line: 1, message: e.to_string() })?;
    let samples = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| Sample::from_line(l.trim(), manifest.width, i + 2))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_bench;

    const C17: &str = include_str!("../data/c17.bench");

    fn inverter() -> Netlist {
        parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n").unwrap()
    }

    #[test]
    fn inverter_single_sample() {
        let nl = inverter();
        let graph = build_graph(&nl);
        let seed = Seed::from_value(1, 1);
        let wf = simulate_sequence(&nl, &seed).unwrap();
        let s = Sample::from_waveform(&graph, &seed, &wf);
        let y = nl.find("y").unwrap();
        assert_eq!(s.label(0, y), LogicValue::L0);
        assert_eq!(s.mask(), vec![false, true]);
        assert_eq!(s.shown_class(0, y), LogicValue::LX.class());
        assert_eq!(s.shown_class(0, nl.find("a").unwrap()), LogicValue::L1.class());
    }

    #[test]
    fn split_examples() {
        let ten: Vec<u32> = (0..10).collect();
        let (a, b, c) = split(&ten, [0.8, 0.1, 0.1], 4).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, ten);
        assert_eq!(split_sizes(3, [0.34, 0.33, 0.33]).unwrap(), [1, 1, 1]);
        assert_eq!(split(&ten, [0.8, 0.1, 0.1], 4).unwrap(), (a, b, c));
        assert!(split_sizes(2, [0.34, 0.33, 0.33]).is_ok());
        assert!(split_sizes(5, [0.5, 0.6, -0.1]).is_err());
    }

    #[test]
    fn empty_split_is_reported() {
        // Three samples, but the train share rounds to nothing.
        assert!(matches!(split_sizes(3, [0.01, 0.5, 0.49]), Err(DatasetError::EmptySplit { split: "train" })));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let nl = parse_bench(C17).unwrap();
        let cfg = DatasetConfig { n_seeds: 20, timesteps: 3, ..DatasetConfig::default() };
        let (samples, manifest) = generate_dataset(&nl, &cfg, 11).unwrap();
        let text = write_dataset(&manifest, &samples);
        let (m2, s2) = read_dataset(&text).unwrap();
        assert_eq!(m2, manifest);
        assert_eq!(s2, samples);
        assert_eq!(write_dataset(&m2, &s2), text);
        let (again, m3) = generate_dataset(&nl, &m2.config(), m2.rng_seed).unwrap();
        assert_eq!(write_dataset(&m3, &again), text);
    }
}
