// SPDX-License-Identifier: Apache-2.0

//! Coverage-guided fuzzing over bit-vector seeds.
//!
//! Coverage is the set of `(node, rise|fall)` transitions seen in settled
//! waveforms, which is exactly gate-level toggle coverage expressed on graph
//! nodes. A seed is admitted to the corpus only when it adds new transitions;
//! centrality-weighted coverage gain drives parent selection.

use std::time::{Duration, Instant};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{build_graph, centrality, normalized_adjacency, CentralityKind};
use crate::grnn::{self, GrnnModel};
use crate::logic::{simulate_sequence_with, toggle_coverage, NetToggle, SimError, SimMode, Waveform};
use crate::netlist::Netlist;
use crate::oracle::{
    compare, detect_transients, Channel, Discrepancy, GoldenModel, MatchMode, ObservedNet, OracleError,
};
pub use crate::seed::{Provenance, Seed};

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("fuzz budget must be positive")]
    BudgetZero,
    #[error("waveform covers {got} nets but the coverage map tracks {expected}")]
    GraphMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] grnn::GrnnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationOp {
    BitFlip1,
    BitFlip2,
    BitFlip4,
    CycleRandomize,
    Arith,
    CopyCycle,
    Splice,
    Havoc,
}

impl MutationOp {
    pub const ALL: [MutationOp; 8] = [
        MutationOp::BitFlip1,
        MutationOp::BitFlip2,
        MutationOp::BitFlip4,
        MutationOp::CycleRandomize,
        MutationOp::Arith,
        MutationOp::CopyCycle,
        MutationOp::Splice,
        MutationOp::Havoc,
    ];
}

/// Selection probability of each top-level mutation operator. Weights are
/// normalized on use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MutationWeights {
    pub bit_flip_1: f64,
    pub bit_flip_2: f64,
    pub bit_flip_4: f64,
    pub cycle_randomize: f64,
    pub arith: f64,
    pub copy_cycle: f64,
    pub splice: f64,
    pub havoc: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights {
            bit_flip_1: 0.20,
            bit_flip_2: 0.10,
            bit_flip_4: 0.10,
            cycle_randomize: 0.10,
            arith: 0.15,
            copy_cycle: 0.10,
            splice: 0.10,
            havoc: 0.15,
        }
    }
}

impl MutationWeights {
    pub fn weight(&self, op: MutationOp) -> f64 {
        match op {
            MutationOp::BitFlip1 => self.bit_flip_1,
            MutationOp::BitFlip2 => self.bit_flip_2,
            MutationOp::BitFlip4 => self.bit_flip_4,
            MutationOp::CycleRandomize => self.cycle_randomize,
            MutationOp::Arith => self.arith,
            MutationOp::CopyCycle => self.copy_cycle,
            MutationOp::Splice => self.splice,
            MutationOp::Havoc => self.havoc,
        }
    }

    pub fn probability(&self, op: MutationOp) -> f64 {
        let total: f64 = MutationOp::ALL.iter().map(|&o| self.weight(o)).sum();
        self.weight(op) / total
    }

    fn sampler(&self, include_havoc: bool) -> WeightedIndex<f64> {
        let weights =
            MutationOp::ALL
                .iter()
                .map(|&o| if o == MutationOp::Havoc && !include_havoc { 0.0 } else { self.weight(o) });
        WeightedIndex::new(weights).expect("mutation weights must be non-negative with a positive sum")
    }
}

/// Uniformly random `T x width` seed.
pub fn gen_seed<R: Rng + ?Sized>(width: usize, timesteps: usize, rng: &mut R) -> Seed {
    let bits = (0..width * timesteps).map(|_| rng.gen::<bool>()).collect();
    Seed::from_bits(width, bits).expect("width and timesteps must be positive")
}

fn flip_run<R: Rng + ?Sized>(seed: &mut Seed, len: usize, rng: &mut R) {
    let bits = seed.bits_mut();
    let len = len.min(bits.len());
    let start = rng.gen_range(0..=bits.len() - len);
    bits[start..start + len].iter_mut().for_each(|b| *b = !*b);
}

fn arith<R: Rng + ?Sized>(seed: &mut Seed, rng: &mut R) {
    let bits = seed.bits_mut();
    let len = bits.len().min(8);
    let start = rng.gen_range(0..=bits.len() - len);
    let window = &mut bits[start..start + len];
    let modulus = 1u32 << len;
    let value = window.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
    let k = rng.gen_range(1..=16u32) % modulus;
    let value = if rng.gen::<bool>() { (value + k) % modulus } else { (value + modulus - k) % modulus };
    for (i, b) in window.iter_mut().enumerate() {
        *b = (value >> (len - 1 - i)) & 1 == 1;
    }
}

fn apply_op<R: Rng + ?Sized>(seed: &mut Seed, op: MutationOp, corpus: &Corpus, weights: &MutationWeights, rng: &mut R) {
    let t = seed.timesteps();
    match op {
        MutationOp::BitFlip1 => flip_run(seed, 1, rng),
        MutationOp::BitFlip2 => flip_run(seed, 2, rng),
        MutationOp::BitFlip4 => flip_run(seed, 4, rng),
        MutationOp::CycleRandomize => {
            let c = rng.gen_range(0..t);
            seed.cycle_mut(c).iter_mut().for_each(|b| *b = rng.gen());
        }
        MutationOp::Arith => arith(seed, rng),
        MutationOp::CopyCycle => {
            let (src, dst) = (rng.gen_range(0..t), rng.gen_range(0..t));
            let row = seed.cycle(src).to_vec();
            seed.cycle_mut(dst).copy_from_slice(&row);
        }
        MutationOp::Splice => {
            let mates: Vec<&Seed> = corpus
                .entries()
                .iter()
                .map(|e| &e.seed)
                .filter(|s| s.width() == seed.width() && s.timesteps() == t)
                .collect();
            if let Some(mate) = mates.choose(rng) {
                let cut = if t > 1 { rng.gen_range(1..t) } else { rng.gen_range(0..=1) };
                for c in cut..t {
                    let row = mate.cycle(c).to_vec();
                    seed.cycle_mut(c).copy_from_slice(&row);
                }
            }
        }
        MutationOp::Havoc => {
            let sampler = weights.sampler(false);
            for _ in 0..rng.gen_range(2..=8) {
                let inner = MutationOp::ALL[sampler.sample(rng)];
                apply_op(seed, inner, corpus, weights, rng);
            }
        }
    }
}

/// Applies one randomly chosen operator. Width and cycle count never change.
pub fn mutate_with<R: Rng + ?Sized>(
    seed: &Seed,
    corpus: &Corpus,
    weights: &MutationWeights,
    rng: &mut R,
) -> (Seed, MutationOp) {
    let op = MutationOp::ALL[weights.sampler(true).sample(rng)];
    let mut child = seed.clone();
    apply_op(&mut child, op, corpus, weights, rng);
    child.provenance = Provenance::Mutated { parent: None, op };
    (child, op)
}

pub fn mutate<R: Rng + ?Sized>(seed: &Seed, corpus: &Corpus, rng: &mut R) -> Seed {
    mutate_with(seed, corpus, &MutationWeights::default(), rng).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    Rise,
    Fall,
}

/// Transitions observed on each node across every executed seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMap {
    nodes: Vec<NetToggle>,
    executed: u64,
}

impl CoverageMap {
    pub fn new(nodes: usize) -> Self {
        CoverageMap { nodes: vec![NetToggle::default(); nodes], executed: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn nodes(&self) -> &[NetToggle] {
        &self.nodes
    }

    pub fn is_covered(&self, node: usize, tr: Transition) -> bool {
        match tr {
            Transition::Rise => self.nodes[node].rise,
            Transition::Fall => self.nodes[node].fall,
        }
    }

    pub fn covered_slots(&self) -> usize {
        self.nodes.iter().map(|t| t.rise as usize + t.fall as usize).sum()
    }

    pub fn percentage(&self) -> f64 {
        if self.nodes.is_empty() {
            0.0
        } else {
            100.0 * self.covered_slots() as f64 / (2 * self.nodes.len()) as f64
        }
    }

    /// Marks a transition covered; returns whether it was new.
    pub fn cover(&mut self, node: usize, tr: Transition) -> bool {
        let slot = match tr {
            Transition::Rise => &mut self.nodes[node].rise,
            Transition::Fall => &mut self.nodes[node].fall,
        };
        !std::mem::replace(slot, true)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageDelta {
    pub new: Vec<(usize, Transition)>,
    pub interesting: bool,
}

/// Folds a waveform's toggles into `map` and reports what was new.
pub fn coverage_update(map: &mut CoverageMap, waveform: &Waveform) -> Result<CoverageDelta, FuzzError> {
    if waveform.net_count() != map.node_count() {
        return Err(FuzzError::GraphMismatch { expected: map.node_count(), got: waveform.net_count() });
    }
    let cov = toggle_coverage(waveform);
    let mut new = Vec::new();
    for (node, t) in cov.nets.iter().enumerate() {
        if t.rise && map.cover(node, Transition::Rise) {
            new.push((node, Transition::Rise));
        }
        if t.fall && map.cover(node, Transition::Fall) {
            new.push((node, Transition::Fall));
        }
    }
    map.executed += 1;
    let interesting = !new.is_empty();
    Ok(CoverageDelta { new, interesting })
}

/// Sum of `centrality[node] / 2` over covered `(node, transition)` slots.
pub fn coverage_score(map: &CoverageMap, centrality: &[f64]) -> f64 {
    assert_eq!(centrality.len(), map.node_count(), "one centrality value per node");
    map.nodes.iter().zip(centrality).map(|(t, &c)| (t.rise as u8 + t.fall as u8) as f64 * c / 2.0).sum()
}

fn delta_score(delta: &[(usize, Transition)], centrality: &[f64]) -> f64 {
    delta.iter().map(|&(node, _)| centrality[node] / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub id: u64,
    pub seed: Seed,
    pub delta: Vec<(usize, Transition)>,
    pub score_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum CorpusEvent {
    Admitted { id: u64, new_transitions: usize, score_gain: f64 },
    Evicted { id: u64 },
}

/// Retained seeds plus an admission/eviction log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    log: Vec<CorpusEvent>,
    capacity: Option<usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity_limit(capacity: usize) -> Self {
        Corpus { capacity: Some(capacity.max(1)), ..Self::default() }
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn log(&self) -> &[CorpusEvent] {
        &self.log
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Admits a seed that produced new coverage. When over capacity the entry
    /// with the smallest score gain (oldest on ties) is evicted.
    pub fn admit(&mut self, id: u64, seed: Seed, delta: Vec<(usize, Transition)>, score_gain: f64) -> bool {
        if delta.is_empty() {
            return false;
        }
        self.log.push(CorpusEvent::Admitted { id, new_transitions: delta.len(), score_gain });
        self.entries.push(CorpusEntry { id, seed, delta, score_gain });
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap {
                let (victim, _) = self
                    .entries
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.score_gain.total_cmp(&b.1.score_gain))
                    .expect("non-empty");
                let gone = self.entries.remove(victim);
                self.log.push(CorpusEvent::Evicted { id: gone.id });
            }
        }
        true
    }

    /// Picks a parent, favouring recent entries and large score gains.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&CorpusEntry> {
        if self.entries.is_empty() {
            return None;
        }
        let len = self.entries.len() as f64;
        let max_gain = self.entries.iter().map(|e| e.score_gain).fold(0.0, f64::max);
        let weights: Vec<f64> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let recency = (i + 1) as f64 / len;
                let gain = if max_gain > 0.0 { e.score_gain / max_gain } else { 0.0 };
                recency * (gain + 0.1)
            })
            .collect();
        let idx = WeightedIndex::new(&weights).ok()?.sample(rng);
        Some(&self.entries[idx])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Seeds(usize),
    WallClock(#[serde(with = "secs")] Duration),
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observation {
    #[default]
    PrimaryOutputs,
    AllNets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuzzConfig {
    pub timesteps: usize,
    /// Probability of generating a fresh seed instead of mutating a parent.
    pub fresh_probability: f64,
    /// When false every seed is freshly generated (pure random testing).
    pub coverage_guided: bool,
    pub mutation: MutationWeights,
    pub match_mode: MatchMode,
    pub observe: Observation,
    pub centrality: CentralityKind,
    pub check_transients: bool,
    pub max_corpus: usize,
    pub max_discrepancies: usize,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            timesteps: 4,
            fresh_probability: 0.1,
            coverage_guided: true,
            mutation: MutationWeights::default(),
            match_mode: MatchMode::Lenient,
            observe: Observation::PrimaryOutputs,
            centrality: CentralityKind::Eigenvector,
            check_transients: false,
            max_corpus: 1024,
            max_discrepancies: 10_000,
        }
    }
}

impl FuzzConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: u64,
    pub seed_hex: String,
    pub timesteps: usize,
    pub new_transitions: usize,
    pub score_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerSeed {
    pub id: u64,
    pub seed_hex: String,
    pub timesteps: usize,
}

/// Non-deterministic measurements, kept apart from the replayable content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_secs: f64,
    pub simulation_secs: f64,
    pub inference_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub executed: u64,
    pub coverage_series: Vec<f64>,
    pub corpus_size: usize,
    pub corpus: Vec<CorpusRecord>,
    pub corpus_log: Vec<CorpusEvent>,
    pub discrepancy_count: u64,
    pub discrepancies: Vec<Discrepancy>,
    pub trigger_seeds: Vec<TriggerSeed>,
    pub final_score: f64,
    pub prng_seed: u64,
    pub config_digest: String,
    pub timing: Timing,
}

impl FuzzReport {
    /// JSON with the timing block zeroed; identical across replays.
    pub fn replay_json(&self) -> String {
        let mut copy = self.clone();
        copy.timing = Timing::default();
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage_series.last().copied().unwrap_or(0.0)
    }

    pub fn coverage_csv(&self) -> String {
        let mut out = String::from("executed,coverage_percent\n");
        for (i, c) in self.coverage_series.iter().enumerate() {
            out.push_str(&format!("{},{c}\n", i + 1));
        }
        out
    }
}

/// The fuzz loop. `dut` is the design under test (possibly faulted); the
/// golden model is the reference. Every executed seed is compared; seeds that
/// add coverage enter the corpus.
pub fn fuzz_loop(
    dut: &Netlist,
    golden: &GoldenModel,
    model: Option<&GrnnModel>,
    budget: Budget,
    config: &FuzzConfig,
    prng_seed: u64,
) -> Result<FuzzReport, FuzzError> {
    match budget {
        Budget::Seeds(0) => return Err(FuzzError::BudgetZero),
        Budget::WallClock(d) if d.is_zero() => return Err(FuzzError::BudgetZero),
        _ => {}
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(prng_seed);
    let graph = build_graph(dut);
    let weights = centrality(&graph, config.centrality);
    let adjacency = model.map(|_| normalized_adjacency(&graph));
    if let Some(m) = model {
        m.check_graph(graph.node_count())?;
    }
    let observed = golden.observed_in(dut)?;
    let width = dut.input_ids().len();

    let mut map = CoverageMap::new(graph.node_count());
    let mut corpus = Corpus::with_capacity_limit(config.max_corpus);
    let mut coverage_series = Vec::new();
    let mut discrepancies = Vec::new();
    let mut discrepancy_count = 0u64;
    let mut trigger_seeds = Vec::new();
    let mut timing = Timing::default();
    let mode = if config.check_transients { SimMode::UnitDelay } else { SimMode::ZeroDelay };

    let mut executed = 0u64;
    loop {
        let done = match budget {
            Budget::Seeds(n) => executed >= n as u64,
            Budget::WallClock(d) => started.elapsed() >= d,
        };
        if done {
            break;
        }
        let id = executed;
        let fresh = !config.coverage_guided || corpus.is_empty() || rng.gen::<f64>() < config.fresh_probability;
        let seed = if fresh {
            gen_seed(width, config.timesteps, &mut rng)
        } else {
            let parent = corpus.pick(&mut rng).expect("corpus is non-empty");
            let parent_id = parent.id;
            let (mut child, op) = mutate_with(&parent.seed, &corpus, &config.mutation, &mut rng);
            child.provenance = Provenance::Mutated { parent: Some(parent_id), op };
            child
        };

        let sim_start = Instant::now();
        let dut_wf = simulate_sequence_with(dut, &seed, mode)?;
        let golden_wf = golden.simulate(&seed)?;
        timing.simulation_secs += sim_start.elapsed().as_secs_f64();

        let mut found = compare(&golden_wf, &dut_wf, &observed, config.match_mode, id)?;
        if config.check_transients {
            let traces = dut_wf.micro_steps().expect("unit-delay waveform carries traces");
            for (cycle, trace) in traces.iter().enumerate() {
                found.extend(detect_transients(trace, dut_wf.state(cycle), &observed, id, cycle));
            }
        }
        if let (Some(m), Some(adj)) = (model, adjacency.as_ref()) {
            let inf_start = Instant::now();
            let predicted = grnn::infer(m, &graph, adj, &seed)?;
            timing.inference_secs += inf_start.elapsed().as_secs_f64();
            let sim_as_reference: Vec<ObservedNet> =
                observed.iter().map(|o| ObservedNet { golden: o.dut, dut: o.dut, name: o.name.clone() }).collect();
            let mut mismatches = compare(&dut_wf, &predicted.waveform, &sim_as_reference, config.match_mode, id)?;
            mismatches.iter_mut().for_each(|d| d.channel = Channel::ModelVsSimulator);
            found.extend(mismatches);
        }
        if !found.is_empty() {
            trigger_seeds.push(TriggerSeed { id, seed_hex: seed.to_hex(), timesteps: seed.timesteps() });
            discrepancy_count += found.len() as u64;
            let room = config.max_discrepancies.saturating_sub(discrepancies.len());
            discrepancies.extend(found.into_iter().take(room));
        }

        let delta = coverage_update(&mut map, &dut_wf)?;
        if delta.interesting {
            let gain = delta_score(&delta.new, &weights);
            corpus.admit(id, seed, delta.new, gain);
        }
        coverage_series.push(map.percentage());
        executed += 1;
    }

    timing.wall_clock_secs = started.elapsed().as_secs_f64();
    let corpus_records = corpus
        .entries()
        .iter()
        .map(|e| CorpusRecord {
            id: e.id,
            seed_hex: e.seed.to_hex(),
            timesteps: e.seed.timesteps(),
            new_transitions: e.delta.len(),
            score_gain: e.score_gain,
        })
        .collect();
    Ok(FuzzReport {
        executed,
        coverage_series,
        corpus_size: corpus.len(),
        corpus: corpus_records,
        corpus_log: corpus.log().to_vec(),
        discrepancy_count,
        discrepancies,
        trigger_seeds,
        final_score: coverage_score(&map, &weights),
        prng_seed,
        config_digest: config.digest(),
        timing,
    })
}
