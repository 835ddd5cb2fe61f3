// SPDX-License-Identifier: Apache-2.0

//! Gate-level netlist fuzzing toolkit.
//!
//! The pipeline: parse a bench netlist ([`netlist`]), simulate it in
//! four-valued logic ([`logic`]), view it as a graph with one-hot node
//! features ([`graph`]), generate supervised data from simulation
//! ([`dataset`]), train a GCN + LSTM node-value predictor ([`grnn`]), and run
//! a coverage-guided fuzz loop ([`fuzzer`]) that compares the design under
//! test against a golden model ([`oracle`]).

pub mod dataset;
pub mod fuzzer;
pub mod graph;
pub mod grnn;
pub mod logic;
pub mod netlist;
pub mod oracle;
pub mod seed;
pub mod tensor;
