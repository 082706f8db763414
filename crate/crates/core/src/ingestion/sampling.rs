//! Seeded reservoir sampling over the distinct canonical values of a column.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sampled example values of one column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: BTreeSet<String>,
    /// Rows observed while sampling, including rows with empty cells.
    pub sampled_from: usize,
    pub cap: usize,
}

impl SampleSet {
    pub fn empty(cap: usize) -> Self {
        Self { values: BTreeSet::new(), sampled_from: 0, cap }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Algorithm R over the stream of first occurrences of each distinct value.
///
/// Every column sampler seeded with the same seed makes the same keep/replace
/// decisions for the same distinct stream, which keeps identical columns
/// identical after sampling.
pub struct ReservoirSampler {
    cap: usize,
    rng: ChaCha8Rng,
    seen: HashSet<String>,
    reservoir: Vec<String>,
    distinct: usize,
    rows: usize,
}

impl ReservoirSampler {
    pub fn new(cap: usize, seed: u64) -> Self {
        Self {
            cap,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: HashSet::new(),
            reservoir: Vec::with_capacity(cap.min(4096)),
            distinct: 0,
            rows: 0,
        }
    }

    /// Records one row; `value` is `None` for an empty cell.
    pub fn offer(&mut self, value: Option<String>) {
        self.rows += 1;
        let Some(value) = value else { return };
        if self.seen.contains(&value) {
            return;
        }
        self.seen.insert(value.clone());
        self.distinct += 1;
        if self.cap == 0 {
            return;
        }
        if self.reservoir.len() < self.cap {
            self.reservoir.push(value);
        } else {
            let j = self.rng.gen_range(0..self.distinct);
            if j < self.cap {
                self.reservoir[j] = value;
            }
        }
    }

    pub fn distinct_seen(&self) -> usize {
        self.distinct
    }

    pub fn finish(self) -> SampleSet {
        SampleSet { values: self.reservoir.into_iter().collect(), sampled_from: self.rows, cap: self.cap }
    }
}
