// SPDX-License-Identifier: Apache-2.0

//! Multi-cycle input stimulus.
//!
//! A seed is `T` cycles of `width` input bits, one bit per primary input in
//! declaration order. The hex form concatenates the cycles (cycle 0 first,
//! input 0 as the most significant bit of each cycle) into one big-endian
//! number, so a 5-input single-cycle seed `1f` drives every input high.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzer::MutationOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Provenance {
    Generated,
    Mutated { parent: Option<u64>, op: MutationOp },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeedError {
    #[error("invalid hex digit `{0}`")]
    BadHex(char),
    #[error("seed has {got} bits but {width} inputs x {timesteps} cycles needs {}", width * timesteps)]
    WidthMismatch { width: usize, timesteps: usize, got: usize },
    #[error("seed must have at least one cycle and one input")]
    Empty,
}

/// Equality compares the stimulus only; provenance is bookkeeping.
#[derive(Debug, Clone)]
pub struct Seed {
    width: usize,
    bits: Vec<bool>,
    pub provenance: Provenance,
}

impl PartialEq for Seed {
    fn eq(&self, other: &Seed) -> bool {
        self.width == other.width && self.bits == other.bits
    }
}

impl Eq for Seed {}

impl Seed {
    /// Builds a seed from row-major bits (`timesteps * width` of them).
    pub fn from_bits(width: usize, bits: Vec<bool>) -> Result<Seed, SeedError> {
        if width == 0 || bits.is_empty() {
            return Err(SeedError::Empty);
        }
        if !bits.len().is_multiple_of(width) {
            return Err(SeedError::WidthMismatch { width, timesteps: bits.len() / width + 1, got: bits.len() });
        }
        Ok(Seed { width, bits, provenance: Provenance::Generated })
    }

    pub fn from_cycles(cycles: &[Vec<bool>]) -> Result<Seed, SeedError> {
        let width = cycles.first().map(Vec::len).unwrap_or(0);
        if cycles.iter().any(|c| c.len() != width) {
            return Err(SeedError::WidthMismatch {
                width,
                timesteps: cycles.len(),
                got: cycles.iter().map(Vec::len).sum(),
            });
        }
        Seed::from_bits(width, cycles.concat())
    }

    /// Single-cycle seed holding `value`'s low `width` bits, input 0 as MSB.
    pub fn from_value(width: usize, value: u64) -> Seed {
        let bits = (0..width).map(|i| (value >> (width - 1 - i)) & 1 == 1).collect();
        Seed { width, bits, provenance: Provenance::Generated }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn timesteps(&self) -> usize {
        self.bits.len() / self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn cycle(&self, t: usize) -> &[bool] {
        &self.bits[t * self.width..(t + 1) * self.width]
    }

    pub fn cycle_mut(&mut self, t: usize) -> &mut [bool] {
        let w = self.width;
        &mut self.bits[t * w..(t + 1) * w]
    }

    pub fn hamming(&self, other: &Seed) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    pub fn to_hex(&self) -> String {
        let pad = (4 - self.bits.len() % 4) % 4;
        let padded: Vec<bool> = std::iter::repeat_n(false, pad).chain(self.bits.iter().copied()).collect();
        padded
            .chunks(4)
            .map(|nib| {
                let v = nib.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
                char::from_digit(v, 16).expect("nibble")
            })
            .collect()
    }

    /// Parses the hex form. Leading zero digits are allowed; any set bit above
    /// `width * timesteps` is a width mismatch.
    pub fn from_hex(hex: &str, width: usize, timesteps: usize) -> Result<Seed, SeedError> {
        let hex = hex.trim().trim_start_matches("0x");
        let total = width * timesteps;
        if total == 0 {
            return Err(SeedError::Empty);
        }
        let mut raw = Vec::with_capacity(hex.len() * 4);
        for c in hex.chars() {
            let v = c.to_digit(16).ok_or(SeedError::BadHex(c))?;
            raw.extend((0..4).rev().map(|i| (v >> i) & 1 == 1));
        }
        let bits = if raw.len() >= total {
            let (extra, rest) = raw.split_at(raw.len() - total);
            if extra.iter().any(|&b| b) {
                return Err(SeedError::WidthMismatch {
                    width,
                    timesteps,
                    got: raw.len() - extra.iter().take_while(|b| !**b).count(),
                });
            }
            rest.to_vec()
        } else {
            let mut bits = vec![false; total - raw.len()];
            bits.extend(raw);
            bits
        };
        Ok(Seed { width, bits, provenance: Provenance::Generated })
    }
}
