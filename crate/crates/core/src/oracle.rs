// SPDX-License-Identifier: Apache-2.0

//! Golden-model comparison, glitch detection and the injected-fault harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzer::{fuzz_loop, Budget, FuzzConfig, FuzzError, FuzzReport, Observation};
use crate::logic::{settle_zero_delay, simulate_sequence, LogicValue, SimError, SimState, Waveform};
use crate::netlist::{inject_fault, FaultSpec, NetId, Netlist, NetlistError};
use crate::seed::Seed;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("waveform shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("observed net `{0}` is missing from the design under test")]
    UnknownNet(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fuzz(#[from] FuzzError),
}

/// How unknown reference values are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// A reference `X` matches anything.
    #[default]
    Lenient,
    /// Values must be identical, `X` included.
    Strict,
}

impl MatchMode {
    pub fn matches(self, expected: LogicValue, observed: LogicValue) -> bool {
        match self {
            MatchMode::Lenient => expected == LogicValue::LX || expected == observed,
            MatchMode::Strict => expected == observed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    GateVsGolden,
    ModelVsSimulator,
    Transient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub seed_id: u64,
    pub cycle: usize,
    pub net: String,
    pub net_id: NetId,
    pub expected: LogicValue,
    pub observed: LogicValue,
    pub channel: Channel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro_step: Option<usize>,
}

/// An observed net and its id in the reference and in the design under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedNet {
    pub golden: NetId,
    pub dut: NetId,
    pub name: String,
}

/// Reference design evaluated with zero-delay semantics.
#[derive(Debug, Clone)]
pub struct GoldenModel {
    netlist: Netlist,
    observed: Vec<NetId>,
}

impl GoldenModel {
    pub fn new(netlist: Netlist, observe: Observation) -> GoldenModel {
        let observed = match observe {
            Observation::PrimaryOutputs => {
                let mut ids = netlist.output_ids().to_vec();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
            Observation::AllNets => (0..netlist.len()).collect(),
        };
        GoldenModel { netlist, observed }
    }

    pub fn netlist(&self) -> &Netlist {
        &self.netlist
    }

    pub fn observed(&self) -> &[NetId] {
        &self.observed
    }

    pub fn simulate(&self, seed: &Seed) -> Result<Waveform, SimError> {
        simulate_sequence(&self.netlist, seed)
    }

    /// Resolves the observation set in `dut` by net name.
    pub fn observed_in(&self, dut: &Netlist) -> Result<Vec<ObservedNet>, OracleError> {
        self.observed
            .iter()
            .map(|&g| {
                let name = &self.netlist.net(g).name;
                let d = dut.find(name).ok_or_else(|| OracleError::UnknownNet(name.clone()))?;
                Ok(ObservedNet { golden: g, dut: d, name: name.clone() })
            })
            .collect()
    }
}

/// Per-(cycle, net) comparison on the observation set. Results are ordered
/// by cycle, then net id.
pub fn compare(
    golden: &Waveform,
    dut: &Waveform,
    observed: &[ObservedNet],
    mode: MatchMode,
    seed_id: u64,
) -> Result<Vec<Discrepancy>, OracleError> {
    if golden.timesteps() != dut.timesteps() {
        return Err(OracleError::ShapeMismatch(format!("{} vs {} cycles", golden.timesteps(), dut.timesteps())));
    }
    if let Some(o) = observed.iter().find(|o| o.golden >= golden.net_count() || o.dut >= dut.net_count()) {
        return Err(OracleError::ShapeMismatch(format!("net `{}` outside the waveforms", o.name)));
    }
    let mut out = Vec::new();
    for t in 0..golden.timesteps() {
        for o in observed {
            let expected = golden.value(t, o.golden);
            let seen = dut.value(t, o.dut);
            if !mode.matches(expected, seen) {
                out.push(Discrepancy {
                    seed_id,
                    cycle: t,
                    net: o.name.clone(),
                    net_id: o.golden,
                    expected,
                    observed: seen,
                    channel: Channel::GateVsGolden,
                    micro_step: None,
                });
            }
        }
    }
    Ok(out)
}

/// Glitches in one unit-delay trace. Once a net has moved away from its
/// value at the start of the cycle it has been reached by the evaluation
/// wave; any later micro-step where it differs from the settled value is a
/// transient. Nets the wave has not reached yet are exempt. At most one
/// discrepancy (the first) is reported per net.
pub fn detect_transients(
    trace: &[SimState],
    settled: &SimState,
    observed: &[ObservedNet],
    seed_id: u64,
    cycle: usize,
) -> Vec<Discrepancy> {
    let mut out = Vec::new();
    let Some(first) = trace.first() else {
        return out;
    };
    for o in observed {
        let start = first.value(o.dut);
        let want = settled.value(o.dut);
        let mut moved = false;
        for (k, state) in trace.iter().enumerate().skip(1) {
            let v = state.value(o.dut);
            moved |= v != start;
            if moved && v != want {
                out.push(Discrepancy {
                    seed_id,
                    cycle,
                    net: o.name.clone(),
                    net_id: o.golden,
                    expected: want,
                    observed: v,
                    channel: Channel::Transient,
                    micro_step: Some(k),
                });
                break;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observability {
    /// Some input vector exposes the fault (checked over all vectors).
    ObservableVerified,
    /// No input vector exposes the fault (checked over all vectors).
    UnobservableVerified,
    /// Too many inputs or sequential; not checked.
    Unchecked,
}

impl Observability {
    pub fn label(self) -> &'static str {
        match self {
            Observability::ObservableVerified => "observable (verified exhaustively)",
            Observability::UnobservableVerified => "unobservable (verified exhaustively)",
            Observability::Unchecked => "observability unchecked",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstHit {
    pub cycle: usize,
    pub expected: LogicValue,
    pub observed: LogicValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub micro_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugGroup {
    pub net: String,
    pub channel: Channel,
    pub count: u64,
    pub trigger_seed_hex: String,
    pub trigger_timesteps: usize,
    pub first: FirstHit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugTotals {
    pub discrepancies: u64,
    pub groups: usize,
    pub executed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub groups: Vec<BugGroup>,
    pub totals: BugTotals,
    pub observability: Observability,
    #[serde(default)]
    pub fault: Option<FaultSpec>,
    pub prng_seed: u64,
    pub config_digest: String,
}

impl BugReport {
    /// Groups the retained discrepancies of a fuzz run by (net, channel).
    pub fn from_fuzz(report: &FuzzReport, observability: Observability, fault: Option<FaultSpec>) -> BugReport {
        let seeds: BTreeMap<u64, (&str, usize)> =
            report.trigger_seeds.iter().map(|s| (s.id, (s.seed_hex.as_str(), s.timesteps))).collect();
        let mut grouped: BTreeMap<(String, Channel), Vec<&Discrepancy>> = BTreeMap::new();
        for d in &report.discrepancies {
            grouped.entry((d.net.clone(), d.channel)).or_default().push(d);
        }
        let groups: Vec<BugGroup> = grouped
            .into_iter()
            .map(|((net, channel), ds)| {
                let first = ds[0];
                let (hex, t) = seeds[&first.seed_id];
                BugGroup {
                    net,
                    channel,
                    count: ds.len() as u64,
                    trigger_seed_hex: hex.to_string(),
                    trigger_timesteps: t,
                    first: FirstHit {
                        cycle: first.cycle,
                        expected: first.expected,
                        observed: first.observed,
                        micro_step: first.micro_step,
                    },
                }
            })
            .collect();
        BugReport {
            totals: BugTotals {
                discrepancies: report.discrepancy_count,
                groups: groups.len(),
                executed: report.executed,
            },
            groups,
            observability,
            fault,
            prng_seed: report.prng_seed,
            config_digest: report.config_digest.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Plain-text summary, one line per group.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} discrepancies in {} groups over {} seeds ({})\n",
            self.totals.discrepancies,
            self.totals.groups,
            self.totals.executed,
            self.observability.label()
        );
        for g in &self.groups {
            out.push_str(&format!(
                "  {:<16} {:<20} x{:<6} cycle {} expected {} observed {} seed {}/{}\n",
                g.net,
                format!("{:?}", g.channel),
                g.count,
                g.first.cycle,
                g.first.expected.symbol(),
                g.first.observed.symbol(),
                g.trigger_seed_hex,
                g.trigger_timesteps
            ));
        }
        out
    }
}

/// Whether `dut` and `golden` differ on the observation set for some input
/// vector, by enumeration. `None` when the check does not apply (sequential
/// or more than `max_inputs` inputs).
pub fn exhaustively_observable(
    golden: &GoldenModel,
    dut: &Netlist,
    mode: MatchMode,
    max_inputs: usize,
) -> Result<Option<bool>, PipelineError> {
    let clean = golden.netlist();
    let w = clean.input_ids().len();
    if !clean.is_combinational() || !dut.is_combinational() || w > max_inputs || w != dut.input_ids().len() {
        return Ok(None);
    }
    let observed = golden.observed_in(dut).map_err(FuzzError::from)?;
    let (gs, ds) = (SimState::new(clean), SimState::new(dut));
    for v in 0..1u64 << w {
        let inputs: Vec<LogicValue> = (0..w).map(|i| LogicValue::from_bool((v >> (w - 1 - i)) & 1 == 1)).collect();
        let a = settle_zero_delay(clean, &inputs, &gs)?;
        let b = settle_zero_delay(dut, &inputs, &ds)?;
        if observed.iter().any(|o| !mode.matches(a.value(o.golden), b.value(o.dut))) {
            return Ok(Some(true));
        }
    }
    Ok(Some(false))
}

/// Injects `fault`, fuzzes the faulted design against the clean one and
/// groups what was found. A fault proven unobservable by enumeration (up to
/// 16 inputs) yields an empty report without fuzzing.
pub fn validate_pipeline(
    clean: &Netlist,
    fault: FaultSpec,
    budget: Budget,
    config: &FuzzConfig,
    prng_seed: u64,
) -> Result<BugReport, PipelineError> {
    let dut = inject_fault(clean, fault)?;
    let golden = GoldenModel::new(clean.clone(), config.observe);
    let observability = match exhaustively_observable(&golden, &dut, config.match_mode, 16)? {
        Some(true) => Observability::ObservableVerified,
        Some(false) => Observability::UnobservableVerified,
        None => Observability::Unchecked,
    };
    if observability == Observability::UnobservableVerified {
        return Ok(BugReport {
            groups: Vec::new(),
            totals: BugTotals { discrepancies: 0, groups: 0, executed: 0 },
            observability,
            fault: Some(fault),
            prng_seed,
            config_digest: config.digest(),
        });
    }
    let report = fuzz_loop(&dut, &golden, None, budget, config, prng_seed)?;
    Ok(BugReport::from_fuzz(&report, observability, Some(fault)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{simulate_sequence_with, SimMode};
    use crate::netlist::{parse_bench, FaultKind};
    use LogicValue::*;

    const C17: &str = include_str!("../data/c17.bench");

    fn wf(rows: &[&[LogicValue]]) -> Waveform {
        Waveform::from_states(rows.iter().map(|r| SimState { values: r.to_vec(), dff_state: vec![] }).collect())
    }

    fn obs(ids: &[usize]) -> Vec<ObservedNet> {
        ids.iter().map(|&i| ObservedNet { golden: i, dut: i, name: format!("n{i}") }).collect()
    }

    #[test]
    fn compare_modes() {
        let g = wf(&[&[L0, LX]]);
        let d = wf(&[&[L0, L1]]);
        assert!(compare(&g, &g, &obs(&[0, 1]), MatchMode::Strict, 0).unwrap().is_empty());
        assert!(compare(&g, &d, &obs(&[0, 1]), MatchMode::Lenient, 0).unwrap().is_empty());
        let strict = compare(&g, &d, &obs(&[0, 1]), MatchMode::Strict, 0).unwrap();
        assert_eq!(strict.len(), 1);
        assert_eq!((strict[0].expected, strict[0].observed), (LX, L1));
        let two = wf(&[&[L0, LX], &[L0, LX]]);
        assert!(matches!(compare(&g, &two, &obs(&[0]), MatchMode::Strict, 0), Err(OracleError::ShapeMismatch(_))));
    }

    #[test]
    fn lenient_is_subset_of_strict() {
        let vals = LogicValue::ALL;
        for &a in &vals {
            for &b in &vals {
                if !MatchMode::Lenient.matches(a, b) {
                    assert!(!MatchMode::Strict.matches(a, b));
                }
            }
        }
    }

    #[test]
    fn xor_hazard_glitches_once() {
        let nl = parse_bench("INPUT(a)\nOUTPUT(y)\nn = NOT(a)\ny = XOR(a, n)\n").unwrap();
        let golden = GoldenModel::new(nl.clone(), Observation::PrimaryOutputs);
        let observed = golden.observed_in(&nl).unwrap();
        let seed = Seed::from_cycles(&[vec![false], vec![true]]).unwrap();
        let w = simulate_sequence_with(&nl, &seed, SimMode::UnitDelay).unwrap();
        let traces = w.micro_steps().unwrap();
        assert!(detect_transients(&traces[0], w.state(0), &observed, 0, 0).is_empty());
        let hits = detect_transients(&traces[1], w.state(1), &observed, 0, 1);
        assert_eq!(hits.len(), 1);
        assert_eq!((hits[0].net.as_str(), hits[0].observed, hits[0].micro_step), ("y", L0, Some(1)));
        assert!(detect_transients(&[], w.state(1), &observed, 0, 1).is_empty());
    }

    #[test]
    fn inverter_chain_has_no_transients() {
        let nl = parse_bench("INPUT(a)\nOUTPUT(d)\nb = NOT(a)\nc = NOT(b)\nd = NOT(c)\n").unwrap();
        let golden = GoldenModel::new(nl.clone(), Observation::AllNets);
        let observed = golden.observed_in(&nl).unwrap();
        let seed = Seed::from_cycles(&[vec![false], vec![true], vec![false], vec![true]]).unwrap();
        let w = simulate_sequence_with(&nl, &seed, SimMode::UnitDelay).unwrap();
        for (t, trace) in w.micro_steps().unwrap().iter().enumerate() {
            assert!(detect_transients(trace, w.state(t), &observed, 0, t).is_empty());
        }
    }

    #[test]
    fn c17_stuck_at_is_detected_and_replays() {
        let nl = parse_bench(C17).unwrap();
        let fault = FaultSpec::on(&nl, "22", FaultKind::StuckAt1).unwrap();
        let report = validate_pipeline(&nl, fault, Budget::Seeds(500), &FuzzConfig::default(), 3).unwrap();
        assert_eq!(report.observability, Observability::ObservableVerified);
        assert!(!report.is_empty());
        let dut = inject_fault(&nl, fault).unwrap();
        let golden = GoldenModel::new(nl.clone(), Observation::PrimaryOutputs);
        let observed = golden.observed_in(&dut).unwrap();
        for g in &report.groups {
            let seed = Seed::from_hex(&g.trigger_seed_hex, 5, g.trigger_timesteps).unwrap();
            let found = compare(
                &golden.simulate(&seed).unwrap(),
                &simulate_sequence(&dut, &seed).unwrap(),
                &observed,
                MatchMode::Lenient,
                0,
            )
            .unwrap();
            assert!(found.iter().any(|d| d.net == g.net && d.cycle == g.first.cycle));
        }
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["groups"][0]["trigger_seed_hex"].is_string());
        assert!(json["totals"]["discrepancies"].as_u64().unwrap() >= 1);
    }
}
