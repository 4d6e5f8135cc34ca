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

//! Verification against the single-process oracle, and timed sweeps.
//!
//! Timers wrap only the distributed operation: shard generation, optional
//! pre-sorting and result gathering happen outside them. Each point runs
//! `warmup` untimed repetitions followed by `repetitions` timed ones; the
//! median is the headline number.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Deserialize;

use super::gen::{gen_shard, BenchmarkConfig, Operation};
use crate::agg::{aggregate_column, AggregateKind, Scalar};
use crate::dist::{
    dist_aggregate, dist_groupby, launch_local_cluster, launch_tcp_local_cluster, DistGroupByOptions, TransportKind,
    WorkerContext,
};
use crate::error::{Error, Result};
use crate::groupby::{apply_on_indices, indices_groupby, Emit, GroupByRequest, Strategy};
use crate::table::wire::serialize_table;
use crate::table::{concat_tables, fnv1a64, sort_by_keys, Chunk, Table};

pub const REPORT_HEADER: &str = "op,strategy,combiner,transport,N,P,G,rep,ms,rows_sent,rows_recv,checksum";

/// Relative tolerance for floating-point results.
pub const FLOAT_REL_TOL: f64 = 1e-9;

/// Result of one distributed operation, gathered on rank 0.
#[derive(Clone, Debug)]
pub enum Outcome {
    Scalar(Scalar),
    Table(Table),
}

impl Outcome {
    /// FNV-1a of the canonical encoding: scalar bits, or the wire bytes of
    /// the key-sorted table.
    pub fn checksum(&self, num_keys: usize) -> Result<u64> {
        Ok(match self {
            Outcome::Scalar(s) => {
                let mut b = Vec::with_capacity(9);
                match s {
                    Scalar::Int64(v) => {
                        b.push(0);
                        b.extend_from_slice(&v.to_le_bytes());
                    }
                    Scalar::Float64(v) => {
                        b.push(1);
                        b.extend_from_slice(&v.to_le_bytes());
                    }
                    Scalar::NoValue => b.push(2),
                }
                fnv1a64(&b)
            }
            Outcome::Table(t) => table_checksum(t, num_keys)?,
        })
    }
}

/// FNV-1a of the serialized table after a stable sort on its first `num_keys` columns.
pub fn table_checksum(table: &Table, num_keys: usize) -> Result<u64> {
    let keys: Vec<usize> = (0..num_keys).collect();
    let sorted = if keys.is_empty() { table.clone() } else { sort_by_keys(table, &keys)? };
    Ok(fnv1a64(&serialize_table(&sorted)))
}

#[derive(Clone, Debug)]
pub struct TimingRecord {
    pub config: BenchmarkConfig,
    /// e.g. `groupby_sum`.
    pub op: String,
    /// Distinct keys actually present (group-by only).
    pub realized_groups: Option<u64>,
    pub times_ms: Vec<f64>,
    pub rows_sent: Vec<u64>,
    pub rows_received: Vec<u64>,
    pub checksum: u64,
}

impl TimingRecord {
    pub fn median_ms(&self) -> f64 {
        median(&self.times_ms)
    }

    pub fn total_rows_sent(&self) -> u64 {
        self.rows_sent.iter().sum()
    }

    pub fn total_rows_received(&self) -> u64 {
        self.rows_received.iter().sum()
    }

    /// One report line per repetition, matching [`REPORT_HEADER`].
    pub fn report_lines(&self) -> Vec<String> {
        let c = &self.config;
        let strategy = match c.operation {
            Operation::Aggregate => "none",
            Operation::GroupBy => c.strategy.name(),
        };
        let combiner = if c.operation == Operation::GroupBy && c.use_combiner { "on" } else { "off" };
        self.times_ms
            .iter()
            .enumerate()
            .map(|(i, ms)| {
                format!(
                    "{},{},{},{},{},{},{},{},{:.3},{},{},{:016x}",
                    self.op,
                    strategy,
                    combiner,
                    c.transport,
                    c.rows,
                    c.parallelism,
                    c.groups,
                    i + 1,
                    ms,
                    self.total_rows_sent(),
                    self.total_rows_received(),
                    self.checksum
                )
            })
            .collect()
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

pub fn op_name(config: &BenchmarkConfig) -> String {
    format!("{}_{}", config.operation.name(), config.kind.name())
}

/// Runs `job` on P ranks over the configured transport.
pub fn launch<R, F>(transport: TransportKind, world_size: usize, job: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(WorkerContext) -> R + Sync,
{
    match transport {
        TransportKind::InProcess => launch_local_cluster(world_size, job),
        TransportKind::Tcp => launch_tcp_local_cluster(world_size, job),
    }
}

/// The benchmark request: group by the key column, aggregate the value column.
pub fn standard_request(kind: AggregateKind) -> GroupByRequest {
    GroupByRequest::new(vec![0], vec![(1, kind)])
}

struct RankOutcome {
    times_ms: Vec<f64>,
    rows_sent: u64,
    rows_received: u64,
    outcome: Option<Outcome>,
}

fn run_rank(mut ctx: WorkerContext, config: &BenchmarkConfig, shard: Table) -> Result<RankOutcome> {
    let opts = DistGroupByOptions { strategy: config.strategy, use_combiner: config.use_combiner };
    let req = standard_request(config.kind);
    let mut times = Vec::with_capacity(config.repetitions);
    let mut last = None;
    for rep in 0..config.warmup + config.repetitions {
        ctx.barrier()?;
        let start = Instant::now();
        let out = match config.operation {
            Operation::Aggregate => RunResult::Scalar(dist_aggregate(&mut ctx, &shard, 1, config.kind)?),
            Operation::GroupBy => RunResult::Group(Box::new(dist_groupby(&mut ctx, &shard, &req, opts)?)),
        };
        ctx.barrier()?;
        let elapsed = start.elapsed();
        if rep >= config.warmup {
            times.push(elapsed.as_secs_f64() * 1e3);
        }
        last = Some(out);
    }
    let (outcome, sent, recv) = match last.expect("at least one repetition") {
        RunResult::Scalar(s) => (Some(Outcome::Scalar(s)), 0, 0),
        RunResult::Group(g) => {
            let gathered = ctx.gather_tables(&g.result.table, 0)?;
            (gathered.map(Outcome::Table), g.shuffle.rows_sent, g.shuffle.rows_received)
        }
    };
    Ok(RankOutcome { times_ms: times, rows_sent: sent, rows_received: recv, outcome })
}

enum RunResult {
    Scalar(Scalar),
    Group(Box<crate::dist::DistGroupBy>),
}

/// Generates the shards, runs the configured operation and returns rank 0's
/// timings with every rank's shuffle volume.
pub fn run_point(config: &BenchmarkConfig) -> Result<TimingRecord> {
    config.validate()?;
    let results = launch(config.transport, config.parallelism, |ctx| {
        let mut shard = gen_shard(config, ctx.rank())?;
        if config.presort {
            shard = sort_by_keys(&shard, &[0])?;
        }
        run_rank(ctx, config, shard)
    })?;
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows_sent = results.iter().map(|r| r.rows_sent).collect();
    let rows_received = results.iter().map(|r| r.rows_received).collect();
    let mut results = results.into_iter();
    let root = results.next().expect("at least one rank");
    let outcome = root.outcome.expect("rank 0 gathers the result");
    let realized_groups = match &outcome {
        Outcome::Table(t) => Some(t.num_rows() as u64),
        Outcome::Scalar(_) => None,
    };
    Ok(TimingRecord {
        config: config.clone(),
        op: op_name(config),
        realized_groups,
        times_ms: root.times_ms,
        rows_sent,
        rows_received,
        checksum: outcome.checksum(1)?,
    })
}

/// Runs every point in order.
pub fn run_bench(configs: &[BenchmarkConfig]) -> Result<Vec<TimingRecord>> {
    configs.iter().map(run_point).collect()
}

/// Appends records to a CSV report, writing the header first when the file is new or empty.
pub fn append_report(path: impl AsRef<Path>, records: &[TimingRecord]) -> Result<()> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{REPORT_HEADER}")?;
    }
    for r in records {
        for line in r.report_lines() {
            writeln!(f, "{line}")?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verification

#[derive(Clone, Debug, Default)]
pub struct Comparison {
    pub max_rel_err: f64,
    pub first_mismatch: Option<String>,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

/// |a - b| relative to the larger magnitude; zero when bitwise equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a.to_bits() == b.to_bits() || a == b {
        return 0.0;
    }
    if a.is_nan() || b.is_nan() {
        return f64::INFINITY;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

pub fn compare_scalars(got: Scalar, want: Scalar, rel_tol: f64) -> Comparison {
    let mut c = Comparison::default();
    match (got, want) {
        (Scalar::Int64(a), Scalar::Int64(b)) if a == b => {}
        (Scalar::NoValue, Scalar::NoValue) => {}
        (Scalar::Float64(a), Scalar::Float64(b)) => {
            c.max_rel_err = rel_err(a, b);
            if c.max_rel_err > rel_tol {
                c.first_mismatch = Some(format!("got {a}, expected {b}"));
            }
        }
        (a, b) => c.first_mismatch = Some(format!("got {a:?}, expected {b:?}")),
    }
    c
}

/// Compares two grouped tables after sorting both on their first `num_keys`
/// columns: keys and Int64 values exactly, Float64 values within `rel_tol`.
pub fn compare_grouped(got: &Table, want: &Table, num_keys: usize, rel_tol: f64) -> Result<Comparison> {
    let mut c = Comparison::default();
    if got.schema() != want.schema() {
        c.first_mismatch = Some(format!("schema {:?} vs {:?}", got.schema(), want.schema()));
        return Ok(c);
    }
    if got.num_rows() != want.num_rows() {
        c.first_mismatch = Some(format!("{} groups, expected {}", got.num_rows(), want.num_rows()));
        return Ok(c);
    }
    let keys: Vec<usize> = (0..num_keys).collect();
    let (g, w) = (sort_by_keys(got, &keys)?, sort_by_keys(want, &keys)?);
    let key_text = |t: &Table, r: usize| -> String {
        (0..num_keys)
            .map(|k| match t.columns()[k].contiguous().as_ref() {
                Chunk::Int64(v) => v[r].to_string(),
                Chunk::Utf8(u) => u.value(r).to_owned(),
                Chunk::Float64(v) => v[r].to_string(),
            })
            .collect::<Vec<_>>()
            .join("|")
    };
    for (ci, (a, b)) in g.columns().iter().zip(w.columns()).enumerate() {
        let (a, b) = (a.contiguous(), b.contiguous());
        let bad_row = match (a.as_ref(), b.as_ref()) {
            (Chunk::Int64(x), Chunk::Int64(y)) => x.iter().zip(y).position(|(p, q)| p != q),
            (Chunk::Utf8(x), Chunk::Utf8(y)) => (0..x.len()).position(|r| x.bytes(r) != y.bytes(r)),
            (Chunk::Float64(x), Chunk::Float64(y)) => {
                let mut bad = None;
                for (r, (&p, &q)) in x.iter().zip(y).enumerate() {
                    let e = rel_err(p, q);
                    c.max_rel_err = c.max_rel_err.max(e);
                    if e > rel_tol && bad.is_none() {
                        bad = Some(r);
                    }
                }
                bad
            }
            _ => unreachable!("schemas are equal"),
        };
        if let Some(r) = bad_row {
            if c.first_mismatch.is_none() {
                c.first_mismatch = Some(format!(
                    "key {} column {}",
                    key_text(&w, r),
                    w.schema().fields()[ci].name
                ));
            }
        }
    }
    Ok(c)
}

/// Single-process reference: the indices-of-groups strategy over the
/// concatenated shards, or a plain column aggregate.
pub fn oracle(config: &BenchmarkConfig, shards: &[Table]) -> Result<Outcome> {
    let all = concat_tables(shards)?;
    Ok(match config.operation {
        Operation::Aggregate => Outcome::Scalar(aggregate_column(all.column(1)?, config.kind)?.finalize()),
        Operation::GroupBy => {
            let idx = indices_groupby(&all, &[0])?;
            Outcome::Table(apply_on_indices(&all, &idx, &[(1, config.kind)], Emit::Finalized)?.table)
        }
    })
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub config: BenchmarkConfig,
    pub comparison: Comparison,
    pub groups: Option<u64>,
    pub checksum: u64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.comparison.passed()
    }

    /// `Err(VerificationFailure)` naming the first mismatch.
    pub fn into_result(self) -> Result<VerifyReport> {
        match &self.comparison.first_mismatch {
            None => Ok(self),
            Some(m) => Err(Error::VerificationFailure(m.clone())),
        }
    }
}

/// Runs the configured distributed operation once and compares it with the oracle.
pub fn run_verify(config: &BenchmarkConfig) -> Result<VerifyReport> {
    let once = BenchmarkConfig { repetitions: 1, warmup: 0, ..config.clone() };
    once.validate()?;
    let results = launch(once.transport, once.parallelism, |ctx| {
        let shard = gen_shard(&once, ctx.rank())?;
        run_rank(ctx, &once, shard)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let got = results.into_iter().next().and_then(|r| r.outcome).expect("rank 0 gathers the result");
    let shards = (0..once.parallelism).map(|r| gen_shard(&once, r)).collect::<Result<Vec<_>>>()?;
    let want = oracle(&once, &shards)?;
    verify_outcome(config, &got, &want)
}

pub fn verify_outcome(config: &BenchmarkConfig, got: &Outcome, want: &Outcome) -> Result<VerifyReport> {
    let (comparison, groups) = match (got, want) {
        (Outcome::Scalar(a), Outcome::Scalar(b)) => (compare_scalars(*a, *b, FLOAT_REL_TOL), None),
        (Outcome::Table(a), Outcome::Table(b)) => {
            (compare_grouped(a, b, 1, FLOAT_REL_TOL)?, Some(a.num_rows() as u64))
        }
        _ => unreachable!("same operation on both sides"),
    };
    Ok(VerifyReport { config: config.clone(), comparison, groups, checksum: got.checksum(1)? })
}

// ---------------------------------------------------------------------------
// sweep files

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchFamily {
    /// Distributed aggregate over increasing P.
    Scaling,
    /// Group-by with and without the combiner over a range of N/G.
    Combiner,
    /// Hash against pipeline group-by on locally sorted shards.
    Pipeline,
}

impl std::str::FromStr for BenchFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaling" => Ok(BenchFamily::Scaling),
            "combiner" => Ok(BenchFamily::Combiner),
            "pipeline" => Ok(BenchFamily::Pipeline),
            other => Err(Error::InvalidArgument(format!("unknown bench family {other:?}"))),
        }
    }
}

/// TOML sweep definition. Every key is optional; missing keys take the
/// family's defaults. `rows_per_group` (N/G) and `groups` (G) are
/// alternatives.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub rows: Option<u64>,
    pub parallelism: Option<Vec<usize>>,
    pub groups: Option<Vec<u64>>,
    pub rows_per_group: Option<Vec<f64>>,
    pub operation: Option<String>,
    pub op: Option<String>,
    pub strategy: Option<Vec<String>>,
    pub combiner: Option<Vec<bool>>,
    pub transport: Option<String>,
    pub repetitions: Option<usize>,
    pub warmup: Option<usize>,
    pub seed: Option<u64>,
    pub presort: Option<bool>,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad sweep file: {e}")))
    }

    pub fn expand(&self, family: BenchFamily) -> Result<Vec<BenchmarkConfig>> {
        let rows = self.rows.unwrap_or(match family {
            BenchFamily::Scaling => 10_000_000,
            _ => 2_000_000,
        });
        let parallelism = self.parallelism.clone().unwrap_or(match family {
            BenchFamily::Scaling => vec![1, 2, 4, 8],
            _ => vec![4],
        });
        let groups: Vec<u64> = match (&self.groups, &self.rows_per_group) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument("give either groups or rows_per_group, not both".into()))
            }
            (Some(g), None) => g.clone(),
            (None, Some(r)) => r.iter().map(|&r| groups_for_ratio(rows, r)).collect(),
            (None, None) => match family {
                BenchFamily::Scaling => vec![1_000.min(rows.max(1))],
                BenchFamily::Combiner => [1.01, 10.0, 100.0, 10_000.0].iter().map(|&r| groups_for_ratio(rows, r)).collect(),
                BenchFamily::Pipeline => [1.0, 100.0, 10_000.0].iter().map(|&r| groups_for_ratio(rows, r)).collect(),
            },
        };
        let operation: Operation = match &self.operation {
            Some(s) => s.parse()?,
            None if family == BenchFamily::Scaling => Operation::Aggregate,
            None => Operation::GroupBy,
        };
        let kind: AggregateKind = self.op.as_deref().unwrap_or("sum").parse()?;
        let strategies = match &self.strategy {
            Some(s) => s.iter().map(|s| s.parse()).collect::<Result<Vec<Strategy>>>()?,
            None if family == BenchFamily::Pipeline => vec![Strategy::Hash, Strategy::Pipeline],
            None => vec![Strategy::Hash],
        };
        let combiners = self.combiner.clone().unwrap_or(match family {
            BenchFamily::Combiner => vec![true, false],
            _ => vec![true],
        });
        let transport: TransportKind = self.transport.as_deref().unwrap_or("inproc").parse()?;
        let base = BenchmarkConfig {
            rows,
            operation,
            kind,
            transport,
            repetitions: self.repetitions.unwrap_or(5),
            warmup: self.warmup.unwrap_or(1),
            seed: self.seed.unwrap_or(42),
            presort: self.presort.unwrap_or(family == BenchFamily::Pipeline),
            ..Default::default()
        };
        let mut out = Vec::new();
        for &p in &parallelism {
            for &g in &groups {
                for &strategy in &strategies {
                    for &use_combiner in &combiners {
                        let c = BenchmarkConfig { parallelism: p, groups: g, strategy, use_combiner, ..base.clone() };
                        c.validate()?;
                        out.push(c);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// G for a target N/G ratio, clamped to `[1, N]`.
pub fn groups_for_ratio(rows: u64, rows_per_group: f64) -> u64 {
    ((rows as f64 / rows_per_group).round() as u64).clamp(1, rows.max(1))
}
