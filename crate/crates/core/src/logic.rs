// SPDX-License-Identifier: Apache-2.0

//! Four-valued gate-level simulation.
//!
//! Two evaluation modes are provided. Zero-delay settling evaluates every net
//! once in topological order and is the functional reference. Unit-delay
//! stepping re-evaluates every gate once per micro-step from the previous
//! micro-step's values, so reconvergent paths with unequal depth produce
//! short-lived glitches before the circuit settles.
//!
//! `Z` is coerced to `X` at every gate input. The gate set has no tristate
//! driver, so `Z` never appears in simulation output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{GateKind, NetId, Netlist, Op};
use crate::seed::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum LogicValue {
    #[serde(rename = "0")]
    L0 = 0,
    #[serde(rename = "1")]
    L1 = 1,
    #[serde(rename = "X")]
    LX = 2,
    #[serde(rename = "Z")]
    LZ = 3,
}

impl LogicValue {
    pub const ALL: [LogicValue; 4] = [LogicValue::L0, LogicValue::L1, LogicValue::LX, LogicValue::LZ];

    /// Class index used for one-hot encoding and labels.
    pub fn class(self) -> u8 {
        self as u8
    }

    pub fn from_class(class: u8) -> Option<LogicValue> {
        LogicValue::ALL.get(class as usize).copied()
    }

    pub fn from_bool(b: bool) -> LogicValue {
        if b {
            LogicValue::L1
        } else {
            LogicValue::L0
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            LogicValue::L0 => Some(false),
            LogicValue::L1 => Some(true),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        matches!(self, LogicValue::L0 | LogicValue::L1)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            LogicValue::L0 => "0",
            LogicValue::L1 => "1",
            LogicValue::LX => "X",
            LogicValue::LZ => "Z",
        }
    }

    pub fn from_symbol(s: &str) -> Option<LogicValue> {
        match s {
            "0" => Some(LogicValue::L0),
            "1" => Some(LogicValue::L1),
            "X" | "x" => Some(LogicValue::LX),
            "Z" | "z" => Some(LogicValue::LZ),
            _ => None,
        }
    }

    fn coerce(self) -> LogicValue {
        if self == LogicValue::LZ {
            LogicValue::LX
        } else {
            self
        }
    }

    fn invert(self) -> LogicValue {
        match self.coerce() {
            LogicValue::L0 => LogicValue::L1,
            LogicValue::L1 => LogicValue::L0,
            v => v,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("{kind} takes {want} inputs, got {got}")]
    ArityViolation { kind: GateKind, got: usize, want: String },
    #[error("seed drives {got} inputs but the netlist has {expected}")]
    SeedWidthMismatch { expected: usize, got: usize },
    #[error("input vector has {got} values but the netlist has {expected} inputs")]
    InputWidthMismatch { expected: usize, got: usize },
}

/// Controlling-value style evaluation over any iterator of inputs.
fn eval_iter<I: Iterator<Item = LogicValue>>(kind: GateKind, inputs: I) -> LogicValue {
    use LogicValue::*;
    let mut inputs = inputs.map(LogicValue::coerce);
    match kind {
        GateKind::And | GateKind::Nand | GateKind::Or | GateKind::Nor => {
            let (controlling, forced) = match kind {
                GateKind::And => (L0, L0),
                GateKind::Nand => (L0, L1),
                GateKind::Or => (L1, L1),
                _ => (L1, L0),
            };
            let mut unknown = false;
            for v in inputs {
                if v == controlling {
                    return forced;
                }
                unknown |= v == LX;
            }
            if unknown {
                LX
            } else {
                forced.invert()
            }
        }
        GateKind::Xor | GateKind::Xnor => {
            let mut parity = kind == GateKind::Xnor;
            for v in inputs {
                match v {
                    L0 => {}
                    L1 => parity = !parity,
                    _ => return LX,
                }
            }
            LogicValue::from_bool(parity)
        }
        GateKind::Not => inputs.next().map(LogicValue::invert).unwrap_or(LX),
        GateKind::Buff | GateKind::Dff => inputs.next().unwrap_or(LX),
        GateKind::Input => LX,
    }
}

/// Evaluates one gate. `DFF` is transparent here (it returns its D input);
/// `INPUT` has no function and yields `X`.
pub fn eval_gate(kind: GateKind, inputs: &[LogicValue]) -> Result<LogicValue, SimError> {
    if !kind.arity().accepts(inputs.len()) {
        return Err(SimError::ArityViolation { kind, got: inputs.len(), want: kind.arity().to_string() });
    }
    Ok(eval_iter(kind, inputs.iter().copied()))
}

#[inline]
fn eval_net(netlist: &Netlist, id: NetId, values: &[LogicValue]) -> LogicValue {
    let driver = &netlist.net(id).driver;
    match driver.op {
        Op::Const(b) => LogicValue::from_bool(b),
        Op::Gate(kind) => eval_iter(kind, driver.fanin.iter().map(|&f| values[f])),
    }
}

fn is_source(netlist: &Netlist, id: NetId) -> bool {
    matches!(netlist.net(id).driver.op, Op::Gate(GateKind::Input) | Op::Gate(GateKind::Dff))
}

/// Net values plus flip-flop contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimState {
    pub values: Vec<LogicValue>,
    pub dff_state: Vec<LogicValue>,
}

impl SimState {
    /// Everything unknown, as at power-up.
    pub fn new(netlist: &Netlist) -> SimState {
        SimState {
            values: vec![LogicValue::LX; netlist.len()],
            dff_state: vec![LogicValue::LX; netlist.dff_ids().len()],
        }
    }

    pub fn value(&self, net: NetId) -> LogicValue {
        self.values[net]
    }

    /// Flip-flop contents after a clock edge: each DFF captures its D input.
    pub fn next_dff_state(&self, netlist: &Netlist) -> Vec<LogicValue> {
        netlist.dff_ids().iter().map(|&q| self.values[netlist.net(q).driver.fanin[0]]).collect()
    }
}

fn apply_sources(netlist: &Netlist, inputs: &[LogicValue], state: &SimState) -> Result<Vec<LogicValue>, SimError> {
    if inputs.len() != netlist.input_ids().len() {
        return Err(SimError::InputWidthMismatch { expected: netlist.input_ids().len(), got: inputs.len() });
    }
    let mut values = state.values.clone();
    values.resize(netlist.len(), LogicValue::LX);
    for (&id, &v) in netlist.input_ids().iter().zip(inputs) {
        values[id] = v;
    }
    for (k, &q) in netlist.dff_ids().iter().enumerate() {
        values[q] = state.dff_state.get(k).copied().unwrap_or(LogicValue::LX);
    }
    Ok(values)
}

/// Zero-delay combinational settle. The flip-flop contents of `state` are
/// carried through unchanged.
pub fn settle_zero_delay(netlist: &Netlist, inputs: &[LogicValue], state: &SimState) -> Result<SimState, SimError> {
    let mut values = apply_sources(netlist, inputs, state)?;
    for &id in netlist.topo_order() {
        if !is_source(netlist, id) {
            values[id] = eval_net(netlist, id, &values);
        }
    }
    Ok(SimState { values, dff_state: state.dff_state.clone() })
}

/// Unit-delay evaluation. Entry 0 holds the freshly applied inputs and
/// flip-flop outputs with every gate still at its value from `state`; each
/// later entry re-evaluates every gate from the previous entry. The trace has
/// `max_level + 1` entries and the last one equals the zero-delay settle.
pub fn step_unit_delay(netlist: &Netlist, inputs: &[LogicValue], state: &SimState) -> Result<Vec<SimState>, SimError> {
    let first = apply_sources(netlist, inputs, state)?;
    let gates: Vec<NetId> = netlist.topo_order().iter().copied().filter(|&id| !is_source(netlist, id)).collect();
    let mut trace = Vec::with_capacity(netlist.max_level() + 1);
    trace.push(SimState { values: first, dff_state: state.dff_state.clone() });
    for _ in 0..netlist.max_level() {
        let prev = &trace.last().expect("non-empty").values;
        let mut next = prev.clone();
        for &id in &gates {
            next[id] = eval_net(netlist, id, prev);
        }
        trace.push(SimState { values: next, dff_state: state.dff_state.clone() });
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToggleCount {
    pub rise: u64,
    pub fall: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SimMode {
    #[default]
    ZeroDelay,
    UnitDelay,
}

/// Settled states per cycle, optional unit-delay traces and toggle counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Waveform {
    states: Vec<SimState>,
    micro: Option<Vec<Vec<SimState>>>,
    toggles: Vec<ToggleCount>,
}

impl Waveform {
    fn new(n: usize) -> Waveform {
        Waveform { states: Vec::new(), micro: None, toggles: vec![ToggleCount::default(); n] }
    }

    /// Builds a waveform from settled states, recomputing toggle counters.
    pub fn from_states(states: Vec<SimState>) -> Waveform {
        let n = states.first().map(|s| s.values.len()).unwrap_or(0);
        let mut wf = Waveform::new(n);
        for s in states {
            wf.push(s);
        }
        wf
    }

    fn push(&mut self, state: SimState) {
        if let Some(prev) = self.states.last() {
            for (count, (&a, &b)) in self.toggles.iter_mut().zip(prev.values.iter().zip(&state.values)) {
                match (a, b) {
                    (LogicValue::L0, LogicValue::L1) => count.rise += 1,
                    (LogicValue::L1, LogicValue::L0) => count.fall += 1,
                    _ => {}
                }
            }
        }
        self.states.push(state);
    }

    pub fn timesteps(&self) -> usize {
        self.states.len()
    }

    pub fn net_count(&self) -> usize {
        self.toggles.len()
    }

    pub fn states(&self) -> &[SimState] {
        &self.states
    }

    pub fn state(&self, t: usize) -> &SimState {
        &self.states[t]
    }

    pub fn value(&self, t: usize, net: NetId) -> LogicValue {
        self.states[t].values[net]
    }

    /// Unit-delay traces, one per cycle, when simulated in that mode.
    pub fn micro_steps(&self) -> Option<&[Vec<SimState>]> {
        self.micro.as_deref()
    }

    pub fn toggles(&self) -> &[ToggleCount] {
        &self.toggles
    }

    /// CSV with header `cycle,net_name,value`, one row per net per cycle.
    pub fn to_csv(&self, netlist: &Netlist) -> String {
        let mut out = String::from("cycle,net_name,value\n");
        for (t, s) in self.states.iter().enumerate() {
            for (id, v) in s.values.iter().enumerate() {
                out.push_str(&format!("{t},{},{}\n", netlist.net(id).name, v.symbol()));
            }
        }
        out
    }

    /// `{"nets": [...], "rows": [[...], ...]}`, one row per cycle.
    pub fn to_json(&self, netlist: &Netlist) -> serde_json::Value {
        let nets: Vec<&str> = (0..self.net_count()).map(|id| netlist.net(id).name.as_str()).collect();
        let rows: Vec<Vec<&str>> = self.states.iter().map(|s| s.values.iter().map(|v| v.symbol()).collect()).collect();
        serde_json::json!({ "nets": nets, "rows": rows })
    }
}

pub fn seed_inputs(seed: &Seed, t: usize) -> Vec<LogicValue> {
    seed.cycle(t).iter().map(|&b| LogicValue::from_bool(b)).collect()
}

/// Runs `seed` cycle by cycle: apply inputs, settle, then clock every DFF.
/// Flip-flops start at `X`.
pub fn simulate_sequence(netlist: &Netlist, seed: &Seed) -> Result<Waveform, SimError> {
    simulate_sequence_with(netlist, seed, SimMode::ZeroDelay)
}

pub fn simulate_sequence_with(netlist: &Netlist, seed: &Seed, mode: SimMode) -> Result<Waveform, SimError> {
    if seed.width() != netlist.input_ids().len() {
        return Err(SimError::SeedWidthMismatch { expected: netlist.input_ids().len(), got: seed.width() });
    }
    let mut wf = Waveform::new(netlist.len());
    let mut micro = Vec::new();
    let mut state = SimState::new(netlist);
    for t in 0..seed.timesteps() {
        let inputs = seed_inputs(seed, t);
        let settled = match mode {
            SimMode::ZeroDelay => settle_zero_delay(netlist, &inputs, &state)?,
            SimMode::UnitDelay => {
                let trace = step_unit_delay(netlist, &inputs, &state)?;
                let last = trace.last().expect("trace has max_level + 1 entries").clone();
                micro.push(trace);
                last
            }
        };
        state = SimState { dff_state: settled.next_dff_state(netlist), values: settled.values.clone() };
        wf.push(settled);
    }
    if mode == SimMode::UnitDelay {
        wf.micro = Some(micro);
    }
    Ok(wf)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetToggle {
    pub rise: bool,
    pub fall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToggleCoverage {
    pub nets: Vec<NetToggle>,
    pub percentage: f64,
}

impl ToggleCoverage {
    pub fn covered_slots(&self) -> usize {
        self.nets.iter().map(|t| t.rise as usize + t.fall as usize).sum()
    }

    /// `{"nets": {name: {"rise": .., "fall": ..}}, "percentage": ..}`
    pub fn to_json(&self, netlist: &Netlist) -> serde_json::Value {
        let mut nets = serde_json::Map::new();
        for (id, t) in self.nets.iter().enumerate() {
            nets.insert(netlist.net(id).name.clone(), serde_json::json!({ "rise": t.rise, "fall": t.fall }));
        }
        serde_json::json!({ "nets": nets, "percentage": self.percentage })
    }
}

/// Rise/fall coverage per net; percentage is covered slots over `2 * nets`.
pub fn toggle_coverage(waveform: &Waveform) -> ToggleCoverage {
    let nets: Vec<NetToggle> =
        waveform.toggles().iter().map(|c| NetToggle { rise: c.rise > 0, fall: c.fall > 0 }).collect();
    let covered: usize = nets.iter().map(|t| t.rise as usize + t.fall as usize).sum();
    let percentage = if nets.is_empty() { 0.0 } else { 100.0 * covered as f64 / (2 * nets.len()) as f64 };
    ToggleCoverage { nets, percentage }
}
