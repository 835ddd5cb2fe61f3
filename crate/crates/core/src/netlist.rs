// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlist IR and the ISCAS bench frontend.
//!
//! A [`Netlist`] is a flat list of nets. Every net has exactly one driver:
//! primary inputs are driven by [`GateKind::Input`], everything else by a gate
//! whose fan-in references other nets. Gate identity is fused with the net it
//! drives, so "the NAND gate driving `22`" and "net `22`" are the same object.
//!
//! The bench grammar is line oriented:
//!
//! ```text
//! # comment
//! INPUT(a)
//! OUTPUT(y)
//! y = NAND(a, b)
//! ```
//!
//! Two pseudo-gates, `CONST0()` and `CONST1()`, are accepted so that netlists
//! with injected stuck-at faults can be written out and read back.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type NetId = usize;

/// Primitive gate kinds. The discriminant order is the one-hot slot order used
/// by the graph feature encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Input,
    And,
    Nand,
    Or,
    Nor,
    Xor,
    Xnor,
    Not,
    Buff,
    Dff,
}

/// Number of fan-ins a gate kind accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Exactly(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exactly(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Exactly(k) => write!(f, "{k}"),
            Arity::AtLeast(k) => write!(f, ">= {k}"),
        }
    }
}

impl GateKind {
    pub const ALL: [GateKind; 10] = [
        GateKind::Input,
        GateKind::And,
        GateKind::Nand,
        GateKind::Or,
        GateKind::Nor,
        GateKind::Xor,
        GateKind::Xnor,
        GateKind::Not,
        GateKind::Buff,
        GateKind::Dff,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Input => "INPUT",
            GateKind::And => "AND",
            GateKind::Nand => "NAND",
            GateKind::Or => "OR",
            GateKind::Nor => "NOR",
            GateKind::Xor => "XOR",
            GateKind::Xnor => "XNOR",
            GateKind::Not => "NOT",
            GateKind::Buff => "BUFF",
            GateKind::Dff => "DFF",
        }
    }

    /// Case-insensitive lookup; `BUF` is accepted as an alias of `BUFF`.
    pub fn from_name(name: &str) -> Option<GateKind> {
        let upper = name.to_ascii_uppercase();
        if upper == "BUF" {
            return Some(GateKind::Buff);
        }
        GateKind::ALL.into_iter().find(|k| k.name() == upper)
    }

    pub fn arity(self) -> Arity {
        match self {
            GateKind::Input => Arity::Exactly(0),
            GateKind::Not | GateKind::Buff | GateKind::Dff => Arity::Exactly(1),
            _ => Arity::AtLeast(2),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Interface class of a net. Discriminant order is the one-hot slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interface {
    PrimaryInput,
    Wire,
    PrimaryOutput,
}

/// The function computed by a net's driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Gate(GateKind),
    /// Constant pseudo-gate, only produced by stuck-at faults.
    Const(bool),
}

impl Op {
    /// Gate kind used for feature encoding; constants encode as `BUFF`.
    pub fn encoded_kind(self) -> GateKind {
        match self {
            Op::Gate(k) => k,
            Op::Const(_) => GateKind::Buff,
        }
    }

    fn bench_name(self) -> &'static str {
        match self {
            Op::Gate(k) => k.name(),
            Op::Const(false) => "CONST0",
            Op::Const(true) => "CONST1",
        }
    }

    fn arity(self) -> Arity {
        match self {
            Op::Gate(k) => k.arity(),
            Op::Const(_) => Arity::Exactly(0),
        }
    }

    fn is_sequential_source(self) -> bool {
        matches!(self, Op::Gate(GateKind::Input) | Op::Gate(GateKind::Dff) | Op::Const(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Driver {
    pub op: Op,
    pub fanin: Vec<NetId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    pub id: NetId,
    pub name: String,
    pub interface: Interface,
    pub driver: Driver,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown gate `{name}`")]
    UnknownGate { line: usize, name: String },
    #[error("net `{0}` is used but never driven")]
    UndefinedNet(String),
    #[error("net `{0}` has more than one driver")]
    DuplicateDriver(String),
    #[error("combinational cycle through {}", .0.join(" -> "))]
    CombinationalCycle(Vec<String>),
    #[error("{kind} gate driving `{net}` has {got} fan-ins, expected {want}")]
    ArityViolation { net: String, kind: String, got: usize, want: Arity },
    #[error("fault target {0} does not exist")]
    TargetNotFound(String),
}

pub type Result<T> = std::result::Result<T, NetlistError>;

/// Incrementally assembles a netlist; ids are handed out in first-mention order.
#[derive(Debug, Default)]
pub struct NetlistBuilder {
    names: Vec<String>,
    index: HashMap<String, NetId>,
    drivers: Vec<Option<Driver>>,
    inputs: Vec<NetId>,
    outputs: Vec<NetId>,
    output_set: HashSet<NetId>,
}

impl NetlistBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, name: &str) -> NetId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.drivers.push(None);
        id
    }

    fn drive(&mut self, id: NetId, driver: Driver) -> Result<()> {
        if self.drivers[id].is_some() {
            return Err(NetlistError::DuplicateDriver(self.names[id].clone()));
        }
        self.drivers[id] = Some(driver);
        Ok(())
    }

    pub fn input(&mut self, name: &str) -> Result<NetId> {
        let id = self.intern(name);
        self.drive(id, Driver { op: Op::Gate(GateKind::Input), fanin: Vec::new() })?;
        self.inputs.push(id);
        Ok(id)
    }

    /// Declares `name` as a primary output. Repeated declarations are ignored.
    pub fn output(&mut self, name: &str) -> NetId {
        let id = self.intern(name);
        if self.output_set.insert(id) {
            self.outputs.push(id);
        }
        id
    }

    pub fn gate(&mut self, name: &str, kind: GateKind, fanin: &[&str]) -> Result<NetId> {
        if kind == GateKind::Input {
            return self.input(name);
        }
        self.op(name, Op::Gate(kind), fanin)
    }

    pub fn constant(&mut self, name: &str, value: bool) -> Result<NetId> {
        self.op(name, Op::Const(value), &[])
    }

    fn op(&mut self, name: &str, op: Op, fanin: &[&str]) -> Result<NetId> {
        let id = self.intern(name);
        if !op.arity().accepts(fanin.len()) {
            return Err(NetlistError::ArityViolation {
                net: name.to_string(),
                kind: op.bench_name().to_string(),
                got: fanin.len(),
                want: op.arity(),
            });
        }
        let fanin = fanin.iter().map(|f| self.intern(f)).collect();
        self.drive(id, Driver { op, fanin })?;
        Ok(id)
    }

    pub fn build(self) -> Result<Netlist> {
        let mut nets = Vec::with_capacity(self.names.len());
        for (id, (name, driver)) in self.names.into_iter().zip(self.drivers).enumerate() {
            let driver = driver.ok_or_else(|| NetlistError::UndefinedNet(name.clone()))?;
            nets.push((name, driver, id));
        }
        let nets =
            nets.into_iter().map(|(name, driver, id)| Net { id, name, interface: Interface::Wire, driver }).collect();
        Netlist::from_parts(nets, self.inputs, self.outputs)
    }
}

/// Validated, immutable gate-level netlist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    nets: Vec<Net>,
    input_ids: Vec<NetId>,
    output_ids: Vec<NetId>,
    dff_ids: Vec<NetId>,
    topo_order: Vec<NetId>,
    levels: Vec<usize>,
    index: HashMap<String, NetId>,
}

impl Netlist {
    /// Validates and indexes a list of nets. `inputs` and `outputs` carry the
    /// declaration order of the interface; interfaces stored on the nets are
    /// recomputed.
    fn from_parts(mut nets: Vec<Net>, inputs: Vec<NetId>, outputs: Vec<NetId>) -> Result<Netlist> {
        let n = nets.len();
        let mut index = HashMap::with_capacity(n);
        for net in &nets {
            if index.insert(net.name.clone(), net.id).is_some() {
                return Err(NetlistError::DuplicateDriver(net.name.clone()));
            }
            if let Some(&bad) = net.driver.fanin.iter().find(|&&f| f >= n) {
                return Err(NetlistError::UndefinedNet(format!("#{bad}")));
            }
        }

        let input_set: HashSet<NetId> = inputs.iter().copied().collect();
        let mut output_ids = Vec::with_capacity(outputs.len());
        for &o in &outputs {
            if input_set.contains(&o) {
                log::warn!("net `{}` is both a primary input and output; treating it as an input", nets[o].name);
            } else {
                output_ids.push(o);
            }
        }
        let output_set: HashSet<NetId> = output_ids.iter().copied().collect();
        for net in nets.iter_mut() {
            net.interface = if input_set.contains(&net.id) {
                Interface::PrimaryInput
            } else if output_set.contains(&net.id) {
                Interface::PrimaryOutput
            } else {
                Interface::Wire
            };
        }

        let levels = compute_levels(&nets)?;
        let mut topo_order: Vec<NetId> =
            nets.iter().filter(|net| net.driver.op != Op::Gate(GateKind::Dff)).map(|net| net.id).collect();
        topo_order.sort_by_key(|&id| (levels[id], id));
        let dff_ids = nets.iter().filter(|net| net.driver.op == Op::Gate(GateKind::Dff)).map(|net| net.id).collect();

        Ok(Netlist { nets, input_ids: inputs, output_ids, dff_ids, topo_order, levels, index })
    }

    pub fn nets(&self) -> &[Net] {
        &self.nets
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id]
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn input_ids(&self) -> &[NetId] {
        &self.input_ids
    }

    pub fn output_ids(&self) -> &[NetId] {
        &self.output_ids
    }

    pub fn dff_ids(&self) -> &[NetId] {
        &self.dff_ids
    }

    /// Non-DFF nets ordered by (combinational level, id).
    pub fn topo_order(&self) -> &[NetId] {
        &self.topo_order
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn level(&self, id: NetId) -> usize {
        self.levels[id]
    }

    pub fn max_level(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    pub fn find(&self, name: &str) -> Option<NetId> {
        self.index.get(name).copied()
    }

    pub fn is_combinational(&self) -> bool {
        self.dff_ids.is_empty()
    }

    pub fn stats(&self) -> NetlistStats {
        let mut stats = NetlistStats::default();
        for net in &self.nets {
            match net.interface {
                Interface::PrimaryInput => stats.inputs += 1,
                Interface::Wire => stats.wires += 1,
                Interface::PrimaryOutput => stats.outputs += 1,
            }
            if net.driver.op != Op::Gate(GateKind::Input) {
                *stats.gates.entry(net.driver.op.bench_name().to_string()).or_default() += 1;
            }
        }
        stats.nodes = self.nets.len();
        stats.dffs = self.dff_ids.len();
        stats.max_level = self.max_level();
        stats
    }

    /// Writes the netlist back out in bench syntax.
    pub fn to_bench(&self) -> String {
        let mut out = String::new();
        for &id in &self.input_ids {
            out.push_str(&format!("INPUT({})\n", self.nets[id].name));
        }
        for &id in &self.output_ids {
            out.push_str(&format!("OUTPUT({})\n", self.nets[id].name));
        }
        // Gate lines sorted by (level, name) so the text does not depend on
        // id assignment and re-parsing reaches a fixed point.
        let mut gates: Vec<&Net> = self.nets.iter().filter(|n| n.interface != Interface::PrimaryInput).collect();
        gates.sort_by(|a, b| (self.levels[a.id], &a.name).cmp(&(self.levels[b.id], &b.name)));
        for net in gates {
            let args: Vec<&str> = net.driver.fanin.iter().map(|&f| self.nets[f].name.as_str()).collect();
            out.push_str(&format!("{} = {}({})\n", net.name, net.driver.op.bench_name(), args.join(", ")));
        }
        out
    }

    /// Hex SHA-256 of the canonical bench serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bench().as_bytes()))
    }
}

/// Combinational depth of every net; reports a cycle if one exists.
fn compute_levels(nets: &[Net]) -> Result<Vec<usize>> {
    const UNSEEN: u8 = 0;
    const ACTIVE: u8 = 1;
    const DONE: u8 = 2;

    let n = nets.len();
    let mut state = vec![UNSEEN; n];
    let mut levels = vec![0usize; n];
    let mut stack: Vec<(NetId, usize)> = Vec::new();

    for root in 0..n {
        if state[root] != UNSEEN {
            continue;
        }
        state[root] = ACTIVE;
        stack.push((root, 0));
        while let Some(top) = stack.last_mut() {
            let v = top.0;
            let driver = &nets[v].driver;
            let deps: &[NetId] = if driver.op.is_sequential_source() { &[] } else { &driver.fanin };
            if top.1 < deps.len() {
                let u = deps[top.1];
                top.1 += 1;
                match state[u] {
                    UNSEEN => {
                        state[u] = ACTIVE;
                        stack.push((u, 0));
                    }
                    ACTIVE => {
                        let start = stack.iter().position(|&(w, _)| w == u).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            stack[start..].iter().map(|&(w, _)| nets[w].name.clone()).collect();
                        cycle.push(nets[u].name.clone());
                        return Err(NetlistError::CombinationalCycle(cycle));
                    }
                    _ => {}
                }
            } else {
                levels[v] = deps.iter().map(|&u| levels[u] + 1).max().unwrap_or(0);
                state[v] = DONE;
                stack.pop();
            }
        }
    }
    Ok(levels)
}

/// Parses the ISCAS bench dialect.
pub fn parse_bench(text: &str) -> Result<Netlist> {
    let mut builder = NetlistBuilder::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |message: &str| NetlistError::Syntax { line: line_no, message: message.to_string() };

        if let Some((lhs, rhs)) = line.split_once('=') {
            let name = lhs.trim();
            if !is_valid_name(name) {
                return Err(syntax("invalid net name on left-hand side"));
            }
            let (gate, args) = split_call(rhs.trim()).ok_or_else(|| syntax("expected GATE(args)"))?;
            let args: Vec<&str> =
                if args.trim().is_empty() { Vec::new() } else { args.split(',').map(str::trim).collect() };
            if args.iter().any(|a| !is_valid_name(a)) {
                return Err(syntax("invalid fan-in net name"));
            }
            match gate.to_ascii_uppercase().as_str() {
                "CONST0" | "CONST1" => {
                    if !args.is_empty() {
                        return Err(NetlistError::ArityViolation {
                            net: name.to_string(),
                            kind: gate.to_ascii_uppercase(),
                            got: args.len(),
                            want: Arity::Exactly(0),
                        });
                    }
                    builder.constant(name, gate.eq_ignore_ascii_case("CONST1"))?;
                }
                _ => {
                    let kind = GateKind::from_name(gate)
                        .filter(|&k| k != GateKind::Input)
                        .ok_or_else(|| NetlistError::UnknownGate { line: line_no, name: gate.to_string() })?;
                    builder.gate(name, kind, &args)?;
                }
            }
        } else {
            let (keyword, arg) =
                split_call(line).ok_or_else(|| syntax("expected INPUT(name), OUTPUT(name) or an assignment"))?;
            let arg = arg.trim();
            if !is_valid_name(arg) {
                return Err(syntax("invalid net name"));
            }
            match keyword.to_ascii_uppercase().as_str() {
                "INPUT" => {
                    builder.input(arg)?;
                }
                "OUTPUT" => {
                    builder.output(arg);
                }
                _ => return Err(NetlistError::UnknownGate { line: line_no, name: keyword.to_string() }),
            }
        }
    }
    builder.build()
}

fn split_call(s: &str) -> Option<(&str, &str)> {
    let open = s.find('(')?;
    let rest = s[open + 1..].trim_end();
    let inner = rest.strip_suffix(')')?;
    let head = s[..open].trim();
    if head.is_empty() || inner.contains('(') || inner.contains(')') {
        return None;
    }
    Some((head, inner))
}

fn is_valid_name(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || matches!(c, '(' | ')' | ',' | '=' | '#'))
}

/// Per-netlist counts. One node per net, so `nodes = inputs + wires + outputs`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetlistStats {
    pub inputs: usize,
    pub wires: usize,
    pub outputs: usize,
    pub nodes: usize,
    pub gates: BTreeMap<String, usize>,
    pub dffs: usize,
    pub max_level: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FaultKind {
    #[serde(rename = "stuck-at-0")]
    StuckAt0,
    #[serde(rename = "stuck-at-1")]
    StuckAt1,
    GateSubstitution {
        replacement: GateKind,
    },
    /// Inverts fan-in `pin` of the target gate.
    InputInversion {
        pin: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target: NetId,
    #[serde(flatten)]
    pub kind: FaultKind,
}

impl FaultSpec {
    pub fn new(target: NetId, kind: FaultKind) -> Self {
        FaultSpec { target, kind }
    }

    /// Resolves a net name against `netlist`.
    pub fn on(netlist: &Netlist, net: &str, kind: FaultKind) -> Result<Self> {
        let target = netlist.find(net).ok_or_else(|| NetlistError::TargetNotFound(net.to_string()))?;
        Ok(FaultSpec { target, kind })
    }
}

fn fresh_name(netlist: &Netlist, base: &str) -> String {
    if netlist.find(base).is_none() {
        return base.to_string();
    }
    (1..).map(|i| format!("{base}_{i}")).find(|n| netlist.find(n).is_none()).expect("unbounded name search")
}

/// Returns a faulted copy of `netlist`.
///
/// Stuck-at on an internal net replaces its driver with a constant. Stuck-at
/// on a primary input keeps the input (so seed width is unchanged) and
/// rewires its readers to a new constant net. Input inversion appends a `NOT`
/// net and rewires one fan-in of the target through it.
pub fn inject_fault(netlist: &Netlist, fault: FaultSpec) -> Result<Netlist> {
    let target = fault.target;
    if target >= netlist.len() {
        return Err(NetlistError::TargetNotFound(format!("#{target}")));
    }
    let mut nets = netlist.nets.clone();
    let target_net = &netlist.nets[target];

    match fault.kind {
        FaultKind::StuckAt0 | FaultKind::StuckAt1 => {
            let value = fault.kind == FaultKind::StuckAt1;
            if target_net.interface == Interface::PrimaryInput {
                let id = nets.len();
                let name = fresh_name(netlist, &format!("{}_sa{}", target_net.name, value as u8));
                for net in nets.iter_mut() {
                    for f in net.driver.fanin.iter_mut() {
                        if *f == target {
                            *f = id;
                        }
                    }
                }
                nets.push(Net {
                    id,
                    name,
                    interface: Interface::Wire,
                    driver: Driver { op: Op::Const(value), fanin: Vec::new() },
                });
            } else {
                nets[target].driver = Driver { op: Op::Const(value), fanin: Vec::new() };
            }
        }
        FaultKind::GateSubstitution { replacement } => {
            let Op::Gate(original) = target_net.driver.op else {
                return Err(NetlistError::ArityViolation {
                    net: target_net.name.clone(),
                    kind: replacement.name().to_string(),
                    got: 0,
                    want: replacement.arity(),
                });
            };
            let got = target_net.driver.fanin.len();
            if original == GateKind::Input || replacement == GateKind::Input || !replacement.arity().accepts(got) {
                return Err(NetlistError::ArityViolation {
                    net: target_net.name.clone(),
                    kind: replacement.name().to_string(),
                    got,
                    want: replacement.arity(),
                });
            }
            nets[target].driver.op = Op::Gate(replacement);
        }
        FaultKind::InputInversion { pin } => {
            let Some(&source) = target_net.driver.fanin.get(pin) else {
                return Err(NetlistError::TargetNotFound(format!("{} pin {pin}", target_net.name)));
            };
            let id = nets.len();
            let name = fresh_name(netlist, &format!("{}_inv{pin}", target_net.name));
            nets[target].driver.fanin[pin] = id;
            nets.push(Net {
                id,
                name,
                interface: Interface::Wire,
                driver: Driver { op: Op::Gate(GateKind::Not), fanin: vec![source] },
            });
        }
    }
    Netlist::from_parts(nets, netlist.input_ids.clone(), netlist.output_ids.clone())
}
