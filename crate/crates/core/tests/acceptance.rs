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

//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every line is printed regardless of outcome.
//! `ACCEPTANCE_ONLY=1,3` restricts the run to the listed criteria. The
//! process exits non-zero when any selected criterion fails.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use colagg::dist::{DistGroupByOptions, TransportKind};
use colagg::groupby::{apply_on_indices, indices_groupby, Emit, GroupByRequest, Strategy};
use colagg::io::bench::{compare_grouped, compare_scalars, rel_err, run_point, TimingRecord, FLOAT_REL_TOL};
use colagg::io::{gen_shard, BenchmarkConfig, Operation};
use colagg::table::wire::serialize_table;
use colagg::table::{concat_tables, fnv1a64, rechunk, sort_by_keys};
use colagg::{aggregate_column, AggState, AggregateKind, Chunk, Column, DataType, Scalar, Table, ValueSlice};

use common::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Criterion {
    id: usize,
    title: &'static str,
    limit: Option<Duration>,
    run: fn() -> Verdict,
}

fn main() {
    let only: Option<HashSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria = [
        Criterion { id: 1, title: "oracle equivalence", limit: Some(Duration::from_secs(120)), run: c1_oracle_equivalence },
        Criterion { id: 2, title: "parallel/combiner/transport invariance", limit: Some(Duration::from_secs(120)), run: c2_invariance },
        Criterion { id: 3, title: "shuffle-volume law", limit: None, run: c3_shuffle_volume },
        Criterion { id: 4, title: "combiner crossover trend", limit: Some(Duration::from_secs(600)), run: c4_combiner_trend },
        Criterion { id: 5, title: "pipeline crossover trend", limit: Some(Duration::from_secs(600)), run: c5_pipeline_trend },
        Criterion { id: 6, title: "aggregate scaling trend", limit: Some(Duration::from_secs(300)), run: c6_scaling_trend },
        Criterion { id: 7, title: "kernel property suite", limit: Some(Duration::from_secs(60)), run: c7_kernel_properties },
    ];
    let mut failed = Vec::new();
    for c in criteria.iter().filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id))) {
        let start = Instant::now();
        let mut v = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        if let Some(limit) = c.limit {
            if elapsed > limit {
                v.pass = false;
                v.detail.push_str(&format!("; exceeded the {} s budget", limit.as_secs()));
            }
        }
        println!(
            "criterion {} [{}] {} ({:.1} s): {}",
            c.id,
            if v.pass { "PASS" } else { "FAIL" },
            c.title,
            elapsed.as_secs_f64(),
            v.detail
        );
        if !v.pass {
            failed.push(c.id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// shared data

/// Adds an Int64 value column `ival` derived from the bits of `value`, so
/// the same rows carry both an exact and a floating-point aggregate input.
fn with_int_values(shard: Table) -> Table {
    let ints: Vec<i64> = match shard.column(1).unwrap().contiguous().as_ref() {
        Chunk::Float64(v) => v.iter().map(|x| ((x.to_bits() >> 12) & 0x3_ffff_ffff) as i64 - (1 << 33)).collect(),
        _ => unreachable!("generated values are Float64"),
    };
    let mut cols: Vec<Column> = shard.columns().iter().map(|c| (**c).clone()).collect();
    cols.push(Column::from_i64("ival", ints));
    Table::from_columns(cols).unwrap()
}

/// Columns: key, value (Float64), ival (Int64).
fn generated_shards(rows: u64, parallelism: usize, groups: u64, seed: u64) -> Vec<Table> {
    let c = BenchmarkConfig { rows, parallelism, groups, seed, ..Default::default() };
    (0..parallelism).map(|r| with_int_values(gen_shard(&c, r).unwrap())).collect()
}

fn oracle_groupby(all: &Table, aggregates: &[(usize, AggregateKind)]) -> Table {
    let idx = indices_groupby(all, &[0]).unwrap();
    apply_on_indices(all, &idx, aggregates, Emit::Finalized).unwrap().table
}

// ---------------------------------------------------------------------------
// 1

fn c1_oracle_equivalence() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x0c1a_2026);
    let mut max_err = 0.0f64;
    let mut failures = Vec::new();
    let mut kinds_seen = HashSet::new();
    let mut strategies = HashSet::new();
    let mut ps = HashSet::new();
    for i in 0..50 {
        let p = *[1usize, 2, 4, 8].choose(&mut rng).unwrap();
        let n = (rng.gen_range(p as u64..=100_000) / p as u64) * p as u64;
        let g = match rng.gen_range(0..3) {
            0 => 1,
            1 => ((n as f64).sqrt().round() as u64).max(1),
            _ => n,
        };
        let kind = AggregateKind::ALL[i % 6];
        let strategy = if rng.gen_bool(0.5) { Strategy::Hash } else { Strategy::Pipeline };
        let use_combiner = rng.gen_bool(0.5);
        let transport = if i % 5 == 4 { TransportKind::Tcp } else { TransportKind::InProcess };
        kinds_seen.insert(kind);
        strategies.insert((strategy.name(), use_combiner));
        ps.insert(p);

        let shards = generated_shards(n, p, g, rng.gen());
        let all = concat_tables(&shards).unwrap();
        let aggregates = vec![(1, kind), (2, kind)];
        let req = GroupByRequest::new(vec![0], aggregates.clone());
        let run = cluster_groupby(transport, &shards, &req, DistGroupByOptions { strategy, use_combiner }).unwrap();
        let cmp = compare_grouped(&run.gathered, &oracle_groupby(&all, &aggregates), 1, FLOAT_REL_TOL).unwrap();
        max_err = max_err.max(cmp.max_rel_err);
        let label = format!("#{i} N={n} P={p} G={g} {} {} combiner={use_combiner} {transport}", kind.name(), strategy.name());
        if let Some(m) = cmp.first_mismatch {
            failures.push(format!("{label}: {m}"));
        }
        for col in [1, 2] {
            let want = aggregate_column(all.column(col).unwrap(), kind).unwrap().finalize();
            for got in cluster_aggregate(transport, &shards, col, kind).unwrap() {
                let cmp = compare_scalars(got, want, FLOAT_REL_TOL);
                max_err = max_err.max(cmp.max_rel_err);
                if let Some(m) = cmp.first_mismatch {
                    failures.push(format!("{label} aggregate col {col}: {m}"));
                }
            }
        }
    }
    let coverage = kinds_seen.len() == 6 && strategies.len() == 4 && ps.len() == 4;
    verdict(
        failures.is_empty() && coverage,
        format!(
            "50 configs ({} kinds, {} strategy/combiner pairs, P values {:?}), max rel err {:.2e} (tolerance {:.0e}, Int64 sum/count/min/max exact){}",
            kinds_seen.len(),
            strategies.len(),
            {
                let mut v: Vec<_> = ps.into_iter().collect();
                v.sort();
                v
            },
            max_err,
            FLOAT_REL_TOL,
            if failures.is_empty() { String::new() } else { format!("; mismatches: {}", failures.join(" | ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 2

/// Whether an aggregate's result is computed without floating-point
/// rounding: Int64 sum/count/min/max, and count/min/max of anything.
fn is_exact(kind: AggregateKind, dtype: DataType) -> bool {
    match kind {
        AggregateKind::Count | AggregateKind::Min | AggregateKind::Max => true,
        AggregateKind::Sum => dtype == DataType::Int64,
        AggregateKind::Mean | AggregateKind::StdDev => false,
    }
}

fn column_checksum(t: &Table, c: usize) -> u64 {
    let col = Table::from_arcs(
        std::sync::Arc::new(colagg::Schema::new(vec![t.schema().fields()[c].clone()]).unwrap()),
        vec![t.columns()[c].clone()],
    )
    .unwrap();
    fnv1a64(&serialize_table(&col))
}

fn key_values(shard: &Table, col: usize) -> BTreeMap<i64, Vec<usize>> {
    let keys = shard.column(0).unwrap().contiguous().as_i64().unwrap().to_vec();
    let mut m: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let _ = col;
    for (r, k) in keys.into_iter().enumerate() {
        m.entry(k).or_default().push(r);
    }
    m
}

fn fold_rows(state: AggState, column: &Column, rows: &[usize]) -> AggState {
    let chunk = column.contiguous();
    match chunk.as_ref() {
        Chunk::Int64(v) => state.bulk_update(ValueSlice::Int64(&rows.iter().map(|&r| v[r]).collect::<Vec<_>>())),
        Chunk::Float64(v) => state.bulk_update(ValueSlice::Float64(&rows.iter().map(|&r| v[r]).collect::<Vec<_>>())),
        Chunk::Utf8(_) => unreachable!(),
    }
    .unwrap()
}

/// Replays the group-by serially: with the combiner, each rank's per-key
/// partial state (rows in order) merged in rank order; without it, every
/// row folded in (rank, row) order.
fn replay_groupby(shards: &[Table], aggregates: &[(usize, AggregateKind)], use_combiner: bool) -> BTreeMap<i64, Vec<Scalar>> {
    let mut acc: BTreeMap<i64, Vec<AggState>> = BTreeMap::new();
    for shard in shards {
        for (key, rows) in key_values(shard, 0) {
            let states = acc.entry(key).or_insert_with(|| {
                aggregates.iter().map(|&(c, k)| AggState::init(k, shard.columns()[c].dtype()).unwrap()).collect()
            });
            for (s, &(c, k)) in states.iter_mut().zip(aggregates) {
                let column = shard.column(c).unwrap();
                *s = if use_combiner {
                    let partial = fold_rows(AggState::init(k, column.dtype()).unwrap(), column, &rows);
                    (*s).merge(partial).unwrap()
                } else {
                    fold_rows(*s, column, &rows)
                };
            }
        }
    }
    acc.into_iter().map(|(k, s)| (k, s.iter().map(AggState::finalize).collect())).collect()
}

fn scalar_at(t: &Table, c: usize, r: usize) -> Scalar {
    match t.columns()[c].contiguous().as_ref() {
        Chunk::Int64(v) => Scalar::Int64(v[r]),
        Chunk::Float64(v) => Scalar::Float64(v[r]),
        Chunk::Utf8(_) => Scalar::NoValue,
    }
}

fn c2_invariance() -> Verdict {
    // One fixed dataset, split contiguously, so only P changes between runs.
    let global = concat_tables(&generated_shards(48_000, 1, 300, 2026)).unwrap();
    let aggregates: Vec<(usize, AggregateKind)> =
        [1usize, 2].iter().flat_map(|&c| AggregateKind::ALL.iter().map(move |&k| (c, k))).collect();
    let exact: Vec<bool> =
        aggregates.iter().map(|&(c, k)| is_exact(k, global.columns()[c].dtype())).collect();
    let req = GroupByRequest::new(vec![0], aggregates.clone());

    let mut problems = Vec::new();
    let mut exact_sums: HashSet<Vec<u64>> = HashSet::new();
    let mut runs = 0;
    let mut max_cross_p_err = 0.0f64;
    let mut combiner_off_cross_p: HashSet<Vec<u64>> = HashSet::new();
    let reference = sort_by_keys(&oracle_groupby(&global, &aggregates), &[0]).unwrap();
    let mut scalar_exact: BTreeMap<(usize, &str), HashSet<u64>> = BTreeMap::new();

    for p in [1usize, 2, 4, 8] {
        let shards = split_contiguous(&global, p);
        for use_combiner in [true, false] {
            let replay = replay_groupby(&shards, &aggregates, use_combiner);
            let mut per_transport = Vec::new();
            for transport in [TransportKind::InProcess, TransportKind::Tcp] {
                let opts = DistGroupByOptions { strategy: Strategy::Hash, use_combiner };
                let out = sort_by_keys(&cluster_groupby(transport, &shards, &req, opts).unwrap().gathered, &[0]).unwrap();
                runs += 1;
                let sums: Vec<u64> = (0..out.num_columns()).map(|c| column_checksum(&out, c)).collect();
                exact_sums.insert(
                    sums.iter().skip(1).zip(&exact).filter(|(_, &e)| e).map(|(s, _)| *s).collect(),
                );
                if !use_combiner {
                    combiner_off_cross_p.insert(sums.clone());
                }
                // Bitwise agreement with the serial rank-order replay.
                let keys = out.column(0).unwrap().contiguous().as_i64().unwrap().to_vec();
                if keys.len() != replay.len() || keys.iter().zip(replay.keys()).any(|(a, b)| a != b) {
                    problems.push(format!("P={p} combiner={use_combiner} {transport}: key set differs from replay"));
                } else {
                    for (r, want) in replay.values().enumerate() {
                        for (a, w) in want.iter().enumerate() {
                            let got = scalar_at(&out, a + 1, r);
                            if !got.bit_eq(*w) {
                                problems.push(format!(
                                    "P={p} combiner={use_combiner} {transport}: key {} {} differs from replay ({got} vs {w})",
                                    keys[r],
                                    out.schema().fields()[a + 1].name
                                ));
                                break;
                            }
                        }
                    }
                }
                for c in 1..out.num_columns() {
                    for r in 0..out.num_rows() {
                        if let (Scalar::Float64(a), Scalar::Float64(b)) = (scalar_at(&out, c, r), scalar_at(&reference, c, r)) {
                            max_cross_p_err = max_cross_p_err.max(rel_err(a, b));
                        }
                    }
                }
                per_transport.push(sums);

                // Ungrouped aggregates: rank-order fold of per-rank states.
                for &(col, kind) in &aggregates {
                    let mut folded = AggState::init(kind, global.columns()[col].dtype()).unwrap();
                    for s in &shards {
                        folded = folded.merge(aggregate_column(s.column(col).unwrap(), kind).unwrap()).unwrap();
                    }
                    let want = folded.finalize();
                    for got in cluster_aggregate(transport, &shards, col, kind).unwrap() {
                        if !got.bit_eq(want) {
                            problems.push(format!("P={p} {transport}: aggregate {}({col}) {got} vs replay {want}", kind.name()));
                        }
                        if is_exact(kind, global.columns()[col].dtype()) {
                            let bits = match got {
                                Scalar::Int64(v) => v as u64,
                                Scalar::Float64(v) => v.to_bits(),
                                Scalar::NoValue => u64::MAX,
                            };
                            scalar_exact.entry((col, kind.name())).or_default().insert(bits);
                        }
                    }
                }
            }
            if per_transport[0] != per_transport[1] {
                problems.push(format!("P={p} combiner={use_combiner}: InProcess and Tcp checksums differ"));
            }
        }
    }
    if exact_sums.len() != 1 {
        problems.push(format!("exact aggregates produced {} distinct checksums", exact_sums.len()));
    }
    if combiner_off_cross_p.len() != 1 {
        problems.push(format!("combiner-off results produced {} distinct checksums across P", combiner_off_cross_p.len()));
    }
    if scalar_exact.values().any(|s| s.len() != 1) {
        problems.push("exact ungrouped aggregates differ across P".into());
    }
    if max_cross_p_err > FLOAT_REL_TOL {
        problems.push(format!("floating-point results drift {max_cross_p_err:.2e} across P"));
    }
    verdict(
        problems.is_empty(),
        format!(
            "{runs} group-by runs (P 1/2/4/8 x combiner on/off x inproc/tcp), 12 aggregates each plus ungrouped: \
             exact aggregates bitwise-identical everywhere; every result bitwise-identical across transports and to the \
             serial rank-order fold; combiner-off results bitwise-identical across P; combiner-on float sums/means/stds \
             across P differ only by reassociation (max rel err {max_cross_p_err:.2e}){}",
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(" | ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 3

fn c3_shuffle_volume() -> Verdict {
    let (n, p) = (1_000_000u64, 4usize);
    let np = n / p as u64;
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for g in [100u64, 10_000, 990_000] {
        let c = BenchmarkConfig { rows: n, parallelism: p, groups: g, seed: 3, ..Default::default() };
        let shards: Vec<Table> = (0..p).map(|r| gen_shard(&c, r).unwrap()).collect();
        let distinct: Vec<u64> = shards.iter().map(|s| distinct_keys(s, &[0]) as u64).collect();
        let req = GroupByRequest::new(vec![0], vec![(1, AggregateKind::Sum)]);
        for use_combiner in [true, false] {
            let opts = DistGroupByOptions { strategy: Strategy::Hash, use_combiner };
            let run = cluster_groupby(TransportKind::InProcess, &shards, &req, opts).unwrap();
            let sent: Vec<u64> = run.shuffle.iter().map(|s| s.rows_sent).collect();
            for (rank, &s) in sent.iter().enumerate() {
                let ok = if use_combiner {
                    s == distinct[rank] && s <= np.min(g)
                } else {
                    s == np
                };
                if !ok {
                    problems.push(format!(
                        "G={g} combiner={use_combiner} rank {rank}: sent {s}, local distinct {}, N_P {np}",
                        distinct[rank]
                    ));
                }
            }
            if use_combiner {
                summary.push(format!("G={g}: sent {sent:?} = local distinct"));
            }
        }
    }
    verdict(
        problems.is_empty(),
        format!(
            "N=1e6 P=4; {}; combiner off sent exactly N_P={np} per rank{}",
            summary.join("; "),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(" | ")) }
        ),
    )
}

// ---------------------------------------------------------------------------
// 4, 5, 6: timing trends

fn timed(config: BenchmarkConfig) -> TimingRecord {
    let r = run_point(&config).unwrap();
    eprintln!(
        "  {} {} combiner={} N={} P={} G={} presort={} reps={:?} median={:.1} ms",
        r.op,
        config.strategy.name(),
        config.use_combiner,
        config.rows,
        config.parallelism,
        config.groups,
        config.presort,
        r.times_ms.iter().map(|t| t.round() as i64).collect::<Vec<_>>(),
        r.median_ms()
    );
    r
}

fn groupby_point(groups: u64, strategy: Strategy, use_combiner: bool, presort: bool, repetitions: usize) -> BenchmarkConfig {
    BenchmarkConfig {
        rows: 20_000_000,
        parallelism: 4,
        groups,
        seed: 42,
        operation: Operation::GroupBy,
        kind: AggregateKind::Sum,
        strategy,
        use_combiner,
        transport: TransportKind::InProcess,
        repetitions,
        warmup: 1,
        presort,
    }
}

fn c4_combiner_trend() -> Verdict {
    let g = 2_000; // N/G = 10^4
    let on = timed(groupby_point(g, Strategy::Hash, true, false, 5));
    let off = timed(groupby_point(g, Strategy::Hash, false, false, 5));
    let ratio = on.median_ms() / off.median_ms();
    let g_dense = 19_801_980; // N/G ~ 1.01
    let dense_on = timed(BenchmarkConfig { warmup: 0, ..groupby_point(g_dense, Strategy::Hash, true, false, 3) });
    let dense_off = timed(BenchmarkConfig { warmup: 0, ..groupby_point(g_dense, Strategy::Hash, false, false, 3) });
    let dense_ratio = dense_on.median_ms() / dense_off.median_ms();
    verdict(
        ratio <= 0.8,
        format!(
            "N=2e7 P=4 inproc: N/G=1e4 on/off = {:.1}/{:.1} ms = {ratio:.3} (need <= 0.8); \
             N/G~1.01 on/off = {:.1}/{:.1} ms = {dense_ratio:.3} (recorded only; realized G {})",
            on.median_ms(),
            off.median_ms(),
            dense_on.median_ms(),
            dense_off.median_ms(),
            dense_on.realized_groups.unwrap_or(0)
        ),
    )
}

fn c5_pipeline_trend() -> Verdict {
    let hash = timed(groupby_point(2_000, Strategy::Hash, true, true, 5));
    let pipe = timed(groupby_point(2_000, Strategy::Pipeline, true, true, 5));
    let ratio = pipe.median_ms() / hash.median_ms();
    let mut problems = Vec::new();
    if hash.checksum != pipe.checksum {
        problems.push("N/G=1e4 results differ".to_owned());
    }
    let one_hash = timed(BenchmarkConfig { warmup: 0, ..groupby_point(20_000_000, Strategy::Hash, true, true, 1) });
    let one_pipe = timed(BenchmarkConfig { warmup: 0, ..groupby_point(20_000_000, Strategy::Pipeline, true, true, 1) });
    if one_hash.checksum != one_pipe.checksum || one_hash.realized_groups != one_pipe.realized_groups {
        problems.push("N/G=1 results differ".to_owned());
    }
    verdict(
        ratio <= 1.0 && problems.is_empty(),
        format!(
            "N=2e7 P=4 presorted shards: N/G=1e4 pipeline/hash = {:.1}/{:.1} ms = {ratio:.3} (need <= 1.0); \
             N/G=1 results identical ({} groups, pipeline/hash = {:.1}/{:.1} ms, recorded only){}",
            pipe.median_ms(),
            hash.median_ms(),
            one_hash.realized_groups.unwrap_or(0),
            one_pipe.median_ms(),
            one_hash.median_ms(),
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(" | ")) }
        ),
    )
}

fn c6_scaling_trend() -> Verdict {
    let point = |p: usize| BenchmarkConfig {
        rows: 100_000_000,
        parallelism: p,
        groups: 1_000,
        operation: Operation::Aggregate,
        kind: AggregateKind::Sum,
        repetitions: 5,
        warmup: 1,
        ..Default::default()
    };
    let one = timed(point(1));
    let eight = timed(point(8));
    let ratio = eight.median_ms() / one.median_ms();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let note = if cores < 8 {
        format!("; this host exposes {cores} core(s), below the 8 the criterion assumes, so ranks share a core and no speedup is possible")
    } else {
        String::new()
    };
    verdict(
        ratio <= 0.4,
        format!(
            "N=1e8 Float64 sum inproc: P=8/P=1 = {:.1}/{:.1} ms = {ratio:.3} (need <= 0.4){note}",
            eight.median_ms(),
            one.median_ms()
        ),
    )
}

// ---------------------------------------------------------------------------
// 7

enum Values {
    Int(Vec<i64>),
    Float(Vec<f64>),
}

impl Values {
    fn column(&self) -> Column {
        match self {
            Values::Int(v) => Column::from_i64("x", v.clone()),
            Values::Float(v) => Column::from_f64("x", v.clone()),
        }
    }

    fn as_f64(&self) -> Vec<f64> {
        match self {
            Values::Int(v) => v.iter().map(|&x| x as f64).collect(),
            Values::Float(v) => v.clone(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Values::Int(v) => v.len(),
            Values::Float(v) => v.len(),
        }
    }

    fn range(&self, lo: usize, hi: usize) -> Values {
        match self {
            Values::Int(v) => Values::Int(v[lo..hi].to_vec()),
            Values::Float(v) => Values::Float(v[lo..hi].to_vec()),
        }
    }
}

/// Straight-line loops, written independently of the kernels. Returns the
/// expected result and the magnitude its rounding error is measured against.
fn scalar_oracle(values: &Values, kind: AggregateKind) -> (Scalar, f64) {
    let f = values.as_f64();
    let n = values.len();
    let abs_sum: f64 = f.iter().map(|x| x.abs()).sum();
    if n == 0 {
        return (if kind == AggregateKind::Count { Scalar::Int64(0) } else { Scalar::NoValue }, 0.0);
    }
    match (kind, values) {
        (AggregateKind::Count, _) => (Scalar::Int64(n as i64), 0.0),
        (AggregateKind::Sum, Values::Int(v)) => (Scalar::Int64(v.iter().sum()), 0.0),
        (AggregateKind::Min, Values::Int(v)) => (Scalar::Int64(*v.iter().min().unwrap()), 0.0),
        (AggregateKind::Max, Values::Int(v)) => (Scalar::Int64(*v.iter().max().unwrap()), 0.0),
        (AggregateKind::Sum, Values::Float(v)) => {
            let mut s = 0.0;
            for x in v {
                s += x;
            }
            (Scalar::Float64(s), abs_sum)
        }
        (AggregateKind::Min, Values::Float(v)) => (Scalar::Float64(v.iter().copied().fold(f64::INFINITY, f64::min)), 0.0),
        (AggregateKind::Max, Values::Float(v)) => {
            (Scalar::Float64(v.iter().copied().fold(f64::NEG_INFINITY, f64::max)), 0.0)
        }
        (AggregateKind::Mean, _) => (Scalar::Float64(f.iter().sum::<f64>() / n as f64), abs_sum / n as f64),
        (AggregateKind::StdDev, _) => {
            // two-pass population variance
            let mean = f.iter().sum::<f64>() / n as f64;
            let var = f.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            (Scalar::Float64(var.sqrt()), f.iter().map(|x| x * x).sum::<f64>() / n as f64)
        }
    }
}

/// Exact kinds must match bitwise; rounded ones within 1e-9 of `scale`
/// (for StdDev the comparison is on the variance, scaled by the mean square).
fn agrees(kind: AggregateKind, got: Scalar, want: Scalar, scale: f64) -> bool {
    match (got, want) {
        (Scalar::Float64(a), Scalar::Float64(b)) if kind == AggregateKind::StdDev => {
            (a * a - b * b).abs() <= 1e-9 * scale.max(f64::MIN_POSITIVE)
        }
        (Scalar::Float64(a), Scalar::Float64(b)) if scale > 0.0 => (a - b).abs() <= 1e-9 * scale,
        _ => got.bit_eq(want),
    }
}

fn components_close(a: &AggState, b: &AggState, scale: f64) -> bool {
    use colagg::agg::Component;
    let (ca, cb) = (a.components(), b.components());
    a.is_empty() == b.is_empty()
        && ca.len() == cb.len()
        && ca.iter().zip(&cb).all(|(x, y)| match (x, y) {
            (Component::I(p), Component::I(q)) => p == q,
            (Component::F(p), Component::F(q)) => p == q || (p - q).abs() <= 1e-9 * scale,
            _ => false,
        })
}

fn c7_kernel_properties() -> Verdict {
    let mut rng = StdRng::seed_from_u64(0x7e57);
    let mut problems = Vec::new();
    let mut checks = 0u64;
    let mut bitwise_float_sums = 0u64;
    let mut float_sums = 0u64;
    for i in 0..1_000 {
        let n = match i % 10 {
            0 => 0,
            1 => 1,
            9 => rng.gen_range(65_536..140_000),
            _ => rng.gen_range(2..3_000),
        };
        let values = if i % 2 == 0 {
            Values::Int((0..n).map(|_| rng.gen_range(-1_000_000_000i64..1_000_000_000)).collect())
        } else {
            Values::Float((0..n).map(|_| rng.gen_range(-1e3..1e3)).collect())
        };
        let column = values.column();
        let dtype = column.dtype();
        let sq_scale: f64 = values.as_f64().iter().map(|x| x * x).sum();
        let abs_scale: f64 = values.as_f64().iter().map(|x| x.abs()).sum();
        let scale = sq_scale.max(abs_scale);
        for &kind in &AggregateKind::ALL {
            let whole = aggregate_column(&column, kind).unwrap();

            // scalar-loop oracle
            let (want, err_scale) = scalar_oracle(&values, kind);
            let got = whole.finalize();
            checks += 1;
            if !agrees(kind, got, want, err_scale) {
                problems.push(format!("array {i} ({n} values) {}: {got} vs oracle {want}", kind.name()));
            }
            if kind == AggregateKind::Sum && dtype == DataType::Float64 && n > 0 {
                float_sums += 1;
                bitwise_float_sums += u64::from(got.bit_eq(want));
            }

            // chunk neutrality
            for chunk in [1usize, 7, 65_536] {
                let rechunked = aggregate_column(&rechunk(&column, chunk).unwrap(), kind).unwrap();
                checks += 1;
                if rechunked != whole {
                    problems.push(format!("array {i} {} differs at chunk size {chunk}", kind.name()));
                }
            }

            // identity
            let id = AggState::init(kind, dtype).unwrap();
            checks += 2;
            if id.merge(whole).unwrap() != whole || whole.merge(id).unwrap() != whole {
                problems.push(format!("array {i} {}: identity law fails", kind.name()));
            }

            // associativity over a random three-way split, and agreement with the whole
            let (mut a, mut b) = (rng.gen_range(0..=n), rng.gen_range(0..=n));
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            let part = |lo, hi| aggregate_column(&values.range(lo, hi).column(), kind).unwrap();
            let (x, y, z) = (part(0, a), part(a, b), part(b, n));
            let left = x.merge(y).unwrap().merge(z).unwrap();
            let right = x.merge(y.merge(z).unwrap()).unwrap();
            checks += 2;
            if !components_close(&left, &right, scale) || !components_close(&left, &whole, scale) {
                problems.push(format!("array {i} {}: associativity fails for split {a}/{b}", kind.name()));
            }
        }
    }
    problems.truncate(5);
    verdict(
        problems.is_empty(),
        format!(
            "1000 random arrays (Int64/Float64, up to 140k values) x 6 kinds, {checks} checks: scalar-loop oracle, \
             chunk sizes 1/7/65536 bitwise-neutral, identity, associativity (float components within 1e-9 of magnitude); \
             {bitwise_float_sums}/{float_sums} float sums bitwise-equal to the serial loop{}",
            if problems.is_empty() { String::new() } else { format!("; problems: {}", problems.join(" | ")) }
        ),
    )
}
