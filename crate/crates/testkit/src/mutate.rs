//! Seeded byte-level corruption of valid inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Corruptions applied by [`Mutator::next_case`], chosen uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Truncate,
    FlipBits,
    Overwrite,
    /// Writes 0, 0xFFFF or 0xFFFFFFFF over an aligned little-endian field.
    ExtremeField,
    Insert,
    Delete,
}

const ALL: [Mutation; 6] = [
    Mutation::Truncate,
    Mutation::FlipBits,
    Mutation::Overwrite,
    Mutation::ExtremeField,
    Mutation::Insert,
    Mutation::Delete,
];

pub struct Mutator {
    rng: ChaCha8Rng,
}

impl Mutator {
    pub fn new(seed: u64) -> Self {
        Mutator {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_case(&mut self, base: &[u8]) -> (Mutation, Vec<u8>) {
        let m = ALL[self.rng.random_range(0..ALL.len())];
        let mut out = base.to_vec();
        if out.is_empty() {
            return (m, out);
        }
        let at = self.rng.random_range(0..out.len());
        match m {
            Mutation::Truncate => out.truncate(at),
            Mutation::FlipBits => {
                for _ in 0..self.rng.random_range(1..=4) {
                    let i = self.rng.random_range(0..out.len());
                    out[i] ^= 1 << self.rng.random_range(0..8);
                }
            }
            Mutation::Overwrite => {
                let n = self.rng.random_range(1..=16).min(out.len() - at);
                self.rng.fill(&mut out[at..at + n]);
            }
            Mutation::ExtremeField => {
                let start = at & !3;
                let value: u32 = [0, 0xFFFF, 0xFFFF_FFFF, 0x7FFF_FFFF][self.rng.random_range(0..4)];
                for (k, b) in value.to_le_bytes().iter().enumerate() {
                    if let Some(slot) = out.get_mut(start + k) {
                        *slot = *b;
                    }
                }
            }
            Mutation::Insert => {
                let n = self.rng.random_range(1..=32);
                let extra: Vec<u8> = (0..n).map(|_| self.rng.random()).collect();
                out.splice(at..at, extra);
            }
            Mutation::Delete => {
                let n = self.rng.random_range(1..=32).min(out.len() - at);
                out.drain(at..at + n);
            }
        }
        (m, out)
    }
}
