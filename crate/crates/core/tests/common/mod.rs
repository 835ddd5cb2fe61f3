// SPDX-License-Identifier: Apache-2.0

//! Test oracles written independently of the library: a plain boolean
//! interpreter over bench text and a random circuit generator.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

pub fn data(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Combinational bench circuit as plain strings.
#[derive(Debug, Clone)]
pub struct RefCircuit {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Net name to (gate name, fan-in names), in file order.
    pub gates: Vec<(String, String, Vec<String>)>,
}

impl RefCircuit {
    pub fn parse(text: &str) -> RefCircuit {
        let mut c = RefCircuit { inputs: Vec::new(), outputs: Vec::new(), gates: Vec::new() };
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let inner = |l: &str| l[l.find('(').unwrap() + 1..l.rfind(')').unwrap()].trim().to_string();
            if line.starts_with("INPUT") {
                c.inputs.push(inner(line));
            } else if line.starts_with("OUTPUT") {
                c.outputs.push(inner(line));
            } else {
                let (lhs, rhs) = line.split_once('=').unwrap();
                let gate = rhs[..rhs.find('(').unwrap()].trim().to_ascii_uppercase();
                let args: Vec<String> =
                    inner(rhs).split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
                c.gates.push((lhs.trim().to_string(), gate, args));
            }
        }
        c
    }

    pub fn net_names(&self) -> Vec<String> {
        self.inputs.iter().cloned().chain(self.gates.iter().map(|g| g.0.clone())).collect()
    }

    /// Every net's value. `inputs[i]` drives `self.inputs[i]`. A fault
    /// `(net, v)` forces what every reader of `net` sees, and the net itself
    /// when it is not a primary input.
    pub fn eval(&self, inputs: &[bool], fault: Option<(&str, bool)>) -> HashMap<String, bool> {
        let defs: HashMap<&str, (&str, &[String])> =
            self.gates.iter().map(|(n, g, a)| (n.as_str(), (g.as_str(), a.as_slice()))).collect();
        let mut values: HashMap<String, bool> = HashMap::new();
        for (name, &v) in self.inputs.iter().zip(inputs) {
            values.insert(name.clone(), v);
        }
        fn get(
            name: &str,
            defs: &HashMap<&str, (&str, &[String])>,
            values: &mut HashMap<String, bool>,
            fault: Option<(&str, bool)>,
        ) -> bool {
            if let Some((f, v)) = fault {
                if f == name {
                    return v;
                }
            }
            if let Some(&v) = values.get(name) {
                return v;
            }
            let (gate, args) = defs[name];
            let xs: Vec<bool> = args.iter().map(|a| get(a, defs, values, fault)).collect();
            let v = reference_gate(gate, &xs);
            values.insert(name.to_string(), v);
            v
        }
        for (name, _, _) in &self.gates {
            get(name, &defs, &mut values, fault);
        }
        if let Some((f, v)) = fault {
            if !self.inputs.iter().any(|i| i == f) {
                values.insert(f.to_string(), v);
            }
        }
        values
    }
}

/// Boolean truth function of a gate, written from the textbook definitions.
pub fn reference_gate(gate: &str, xs: &[bool]) -> bool {
    let ones = xs.iter().filter(|&&x| x).count();
    match gate {
        "AND" => ones == xs.len(),
        "NAND" => ones != xs.len(),
        "OR" => ones > 0,
        "NOR" => ones == 0,
        "XOR" => ones % 2 == 1,
        "XNOR" => ones % 2 == 0,
        "NOT" => !xs[0],
        "BUFF" | "BUF" | "DFF" => xs[0],
        other => panic!("no reference for {other}"),
    }
}

/// Random combinational circuit with `inputs` inputs and `gates` gates.
pub fn random_bench<R: Rng>(rng: &mut R, inputs: usize, gates: usize) -> String {
    const KINDS: [&str; 8] = ["AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUFF"];
    let mut names: Vec<String> = (0..inputs).map(|i| format!("i{i}")).collect();
    let mut text: String = names.iter().map(|n| format!("INPUT({n})\n")).collect();
    let mut body = String::new();
    for g in 0..gates {
        let kind = KINDS[rng.gen_range(0..KINDS.len())];
        let arity = if matches!(kind, "NOT" | "BUFF") { 1 } else { rng.gen_range(2..=4.min(names.len())) };
        let fanin: Vec<&String> = names.choose_multiple(rng, arity).collect();
        let name = format!("g{g}");
        body.push_str(&format!(
            "{name} = {kind}({})\n",
            fanin.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        ));
        names.push(name);
    }
    for g in gates.saturating_sub(5)..gates {
        text.push_str(&format!("OUTPUT(g{g})\n"));
    }
    text + &body
}

/// Bits of `v` over `width` positions, most significant first.
pub fn bits(v: u64, width: usize) -> Vec<bool> {
    (0..width).map(|i| (v >> (width - 1 - i)) & 1 == 1).collect()
}
