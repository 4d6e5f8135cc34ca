// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Synthetic benchmark shards.
//!
//! Each rank's shard is `N / P` rows of `(key: Int64, value: Float64)`.
//! Rows come from a SplitMix64 stream seeded with `seed ^ rank`; each row
//! draws the key first, then the value:
//!
//! * key   = `(next() as u128 * G as u128) >> 64`, uniform on `[0, G)`
//! * value = `(next() >> 11) as f64 * 2^-53`, uniform on `[0, 1)`
//!
//! The recipe is fully specified so any implementation reproduces the same
//! bytes for the same `(seed, rank, config)`.

use std::str::FromStr;

use super::csv::chunked;
use crate::agg::AggregateKind;
use crate::dist::TransportKind;
use crate::error::{Error, Result};
use crate::groupby::Strategy;
use crate::table::{Chunk, Table};

pub const KEY_COLUMN: &str = "key";
pub const VALUE_COLUMN: &str = "value";

#[derive(Clone, Copy, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, bound)` by multiply-high.
    #[inline]
    pub fn next_below(&mut self, bound: u64) -> u64 {
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operation {
    Aggregate,
    GroupBy,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::Aggregate => "agg",
            Operation::GroupBy => "groupby",
        }
    }
}

impl FromStr for Operation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agg" | "aggregate" => Ok(Operation::Aggregate),
            "groupby" | "group-by" => Ok(Operation::GroupBy),
            other => Err(Error::InvalidArgument(format!("unknown operation {other:?}"))),
        }
    }
}

/// One benchmark point. `rows` is N (across all ranks), `parallelism` is P
/// and `groups` is the nominal number of distinct keys G.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub rows: u64,
    pub parallelism: usize,
    pub groups: u64,
    pub seed: u64,
    pub operation: Operation,
    pub kind: AggregateKind,
    pub strategy: Strategy,
    pub use_combiner: bool,
    pub transport: TransportKind,
    pub repetitions: usize,
    pub warmup: usize,
    /// Sort every shard by key before timing starts.
    pub presort: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            rows: 1_000_000,
            parallelism: 1,
            groups: 1_000,
            seed: 42,
            operation: Operation::GroupBy,
            kind: AggregateKind::Sum,
            strategy: Strategy::Hash,
            use_combiner: true,
            transport: TransportKind::InProcess,
            repetitions: 5,
            warmup: 1,
            presort: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::InvalidArgument("parallelism must be at least 1".into()));
        }
        if self.groups == 0 || self.groups > self.rows {
            return Err(Error::InvalidArgument(format!(
                "groups must satisfy 1 <= G <= N (G={}, N={})",
                self.groups, self.rows
            )));
        }
        if !self.rows.is_multiple_of(self.parallelism as u64) {
            return Err(Error::InvalidArgument(format!(
                "N={} is not divisible by P={}",
                self.rows, self.parallelism
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    /// N_P.
    pub fn rows_per_partition(&self) -> u64 {
        self.rows / self.parallelism as u64
    }
}

/// The shard of `rank`: `N / P` rows of uniform keys on `[0, G)` and uniform values on `[0, 1)`.
pub fn gen_shard(config: &BenchmarkConfig, rank: usize) -> Result<Table> {
    config.validate()?;
    if rank >= config.parallelism {
        return Err(Error::InvalidArgument(format!("rank {rank} outside P={}", config.parallelism)));
    }
    let n = config.rows_per_partition() as usize;
    let mut rng = SplitMix64::new(config.seed ^ rank as u64);
    let mut keys = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        keys.push(rng.next_below(config.groups) as i64);
        values.push(rng.next_f64());
    }
    Table::from_columns(vec![chunked(KEY_COLUMN, Chunk::Int64(keys))?, chunked(VALUE_COLUMN, Chunk::Float64(values))?])
}
