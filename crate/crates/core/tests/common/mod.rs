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

//! Helpers shared by the integration suites.

#![allow(dead_code)]

use std::collections::HashSet;

use colagg::dist::{dist_aggregate, dist_groupby, DistGroupByOptions, ShuffleStats, TransportKind};
use colagg::groupby::GroupByRequest;
use colagg::io::bench::launch;
use colagg::table::{take_rows, KeyColumns};
use colagg::{AggregateKind, Chunk, Column, Result, Scalar, Table};

/// Splits `table` into `parts` contiguous slices of near-equal size.
pub fn split_contiguous(table: &Table, parts: usize) -> Vec<Table> {
    let n = table.num_rows();
    (0..parts)
        .map(|p| {
            let (lo, hi) = (n * p / parts, n * (p + 1) / parts);
            take_rows(table, &(lo..hi).collect::<Vec<_>>()).unwrap()
        })
        .collect()
}

pub struct ClusterGroupBy {
    /// Every rank's result, gathered on rank 0 in rank order.
    pub gathered: Table,
    /// Each rank's own result.
    pub per_rank: Vec<Table>,
    pub shuffle: Vec<ShuffleStats>,
}

/// Runs a distributed group-by with `shards[r]` on rank r.
pub fn cluster_groupby(
    transport: TransportKind,
    shards: &[Table],
    req: &GroupByRequest,
    opts: DistGroupByOptions,
) -> Result<ClusterGroupBy> {
    let out = launch(transport, shards.len(), |mut ctx| -> Result<_> {
        let shard = &shards[ctx.rank()];
        let r = dist_groupby(&mut ctx, shard, req, opts)?;
        let gathered = ctx.gather_tables(&r.result.table, 0)?;
        Ok((r.result.table, r.shuffle, gathered))
    })?;
    let mut per_rank = Vec::new();
    let mut shuffle = Vec::new();
    let mut gathered = None;
    for r in out {
        let (t, s, g) = r?;
        per_rank.push(t);
        shuffle.push(s);
        if gathered.is_none() {
            gathered = g;
        }
    }
    Ok(ClusterGroupBy { gathered: gathered.expect("rank 0 gathers"), per_rank, shuffle })
}

/// Runs a distributed column aggregate; every rank's answer is returned.
pub fn cluster_aggregate(
    transport: TransportKind,
    shards: &[Table],
    col: usize,
    kind: AggregateKind,
) -> Result<Vec<Scalar>> {
    launch(transport, shards.len(), |mut ctx| {
        let shard = &shards[ctx.rank()];
        dist_aggregate(&mut ctx, shard, col, kind)
    })?
        .into_iter()
        .collect()
}

/// Number of distinct key tuples in `table`, by an independent hash-set count.
pub fn distinct_keys(table: &Table, key_cols: &[usize]) -> usize {
    let chunks: Vec<Chunk> = key_cols.iter().map(|&c| table.columns()[c].contiguous().into_owned()).collect();
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    for r in 0..table.num_rows() {
        seen.insert(chunks.iter().map(|c| chunk_cell(c, r)).collect());
    }
    seen.len()
}

/// Canonical text for one cell; floats by bit pattern.
pub fn cell(column: &Column, row: usize) -> String {
    chunk_cell(&column.contiguous(), row)
}

fn chunk_cell(chunk: &Chunk, row: usize) -> String {
    match chunk {
        Chunk::Int64(v) => v[row].to_string(),
        Chunk::Float64(v) => format!("{:016x}", v[row].to_bits()),
        Chunk::Utf8(u) => u.value(row).to_owned(),
    }
}

/// The FNV-1a key hash of every row, through the public key API.
pub fn row_hashes(table: &Table, key_cols: &[usize]) -> Vec<u64> {
    let keys = KeyColumns::new(table, key_cols).unwrap();
    (0..table.num_rows()).map(|r| keys.hash_row(r)).collect()
}

/// Rows `[0, cut)` and `[cut, n)`.
pub fn split_at(table: &Table, cut: usize) -> [Table; 2] {
    let n = table.num_rows();
    [
        take_rows(table, &(0..cut).collect::<Vec<_>>()).unwrap(),
        take_rows(table, &(cut..n).collect::<Vec<_>>()).unwrap(),
    ]
}
