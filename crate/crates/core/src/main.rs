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

//! `colagg` command-line driver: dataset generation, distributed aggregate
//! and group-by over CSV part files, oracle verification, and benchmark sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use colagg::dist::{
    connect_tcp_cluster, dist_aggregate, dist_groupby, parse_hosts, DistGroupByOptions, TcpConfig, TransportKind,
    WorkerContext,
};
use colagg::groupby::{apply_on_indices, indices_groupby, Emit, GroupByRequest, Strategy};
use colagg::io::bench::{
    append_report, compare_grouped, compare_scalars, run_bench, run_verify, table_checksum, BenchFamily, Comparison,
    Outcome, SweepSpec, FLOAT_REL_TOL,
};
use colagg::io::{gen_shard, read_csv, write_csv, write_csv_to, BenchmarkConfig, Operation};
use colagg::table::{concat_tables, Table};
use colagg::{aggregate_column, AggregateKind, Error, Result, Scalar};

const AFTER_HELP: &str = "\
Aggregates: sum, count, min, max, mean, std. `std` is the population standard
deviation (no n-1 correction), computed from the (sum of squares, sum, count)
state.

Exit codes: 0 success, 1 verification failure, 2 usage error,
3 runtime or transport failure.";

#[derive(Parser)]
#[command(name = "colagg", version, about = "Distributed columnar aggregation engine", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as part-{rank}.csv files (columns `key`, `value`).
    Gen(GenArgs),
    /// Aggregate one column across all ranks.
    Agg(AggArgs),
    /// Group by key columns and aggregate value columns across all ranks.
    Groupby(GroupByArgs),
    /// Run an operation and compare it with the single-process oracle.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Run a benchmark sweep and append timing records to a CSV report.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Verify a column aggregate over CSV part files.
    Agg(AggArgs),
    /// Verify a group-by over CSV part files.
    Groupby(GroupByArgs),
    /// Verify on a generated dataset without touching the filesystem.
    Synthetic(SyntheticArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    rows: u64,
    #[arg(long)]
    groups: u64,
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RuntimeArgs {
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
    #[arg(long, default_value = "inproc", value_parser = parse_transport)]
    transport: TransportKind,
    /// Comma-separated host:port list, one per rank. With --rank, this
    /// process joins the cluster as that rank; otherwise all ranks run locally.
    #[arg(long, env = "COLAGG_HOSTS")]
    hosts: Option<String>,
    /// Rank of this process in a multi-process TCP cluster.
    #[arg(long, env = "COLAGG_RANK")]
    rank: Option<usize>,
    /// Seconds to wait for every peer to connect.
    #[arg(long, default_value_t = 30)]
    handshake_timeout: u64,
}

#[derive(Args, Clone)]
struct AggArgs {
    #[arg(long, value_parser = parse_kind)]
    op: AggregateKind,
    #[arg(long)]
    col: String,
    #[command(flatten)]
    runtime: RuntimeArgs,
    /// Directory of part-*.csv files; file i is read by rank i mod P.
    in_dir: PathBuf,
}

#[derive(Args, Clone)]
struct GroupByArgs {
    /// Comma-separated key column names.
    #[arg(long, value_delimiter = ',', required = true)]
    keys: Vec<String>,
    /// Comma-separated value column names; every op is applied to every value column.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_kind)]
    ops: Vec<AggregateKind>,
    #[arg(long, default_value = "hash", value_parser = parse_strategy)]
    strategy: Strategy,
    #[arg(long, default_value = "on")]
    combiner: OnOff,
    #[command(flatten)]
    runtime: RuntimeArgs,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    in_dir: PathBuf,
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value = "groupby", value_parser = parse_operation)]
    operation: Operation,
    #[arg(long, default_value_t = 10_000)]
    rows: u64,
    #[arg(long, default_value_t = 10)]
    groups: u64,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "sum", value_parser = parse_kind)]
    op: AggregateKind,
    #[arg(long, default_value = "hash", value_parser = parse_strategy)]
    strategy: Strategy,
    #[arg(long, default_value = "on")]
    combiner: OnOff,
    #[arg(long, default_value = "inproc", value_parser = parse_transport)]
    transport: TransportKind,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(value_parser = parse_family)]
    family: BenchFamily,
    /// TOML sweep definition; omitted keys take the family defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

fn parse_kind(s: &str) -> std::result::Result<AggregateKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_transport(s: &str) -> std::result::Result<TransportKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_operation(s: &str) -> std::result::Result<Operation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_family(s: &str) -> std::result::Result<BenchFamily, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("colagg: {} ({})", e, e.name());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::VerificationFailure(_) => 1,
        Error::InvalidArgument(_)
        | Error::ColumnOutOfRange { .. }
        | Error::UnsupportedKeyType(_)
        | Error::UnsupportedValueType(_)
        | Error::SchemaMismatch(_) => 2,
        _ => 3,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Agg(a) => {
            if let Some(s) = agg(&a)? {
                println!("{s}");
            }
            Ok(())
        }
        Command::Groupby(a) => {
            if let Some(t) = groupby(&a)? {
                match &a.out {
                    Some(path) => write_csv(&t, path)?,
                    None => write_csv_to(&t, std::io::stdout().lock())?,
                }
            }
            Ok(())
        }
        Command::Verify(v) => verify(v),
        Command::Bench(a) => bench(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let config = BenchmarkConfig {
        rows: a.rows,
        groups: a.groups,
        parallelism: a.parallelism,
        seed: a.seed,
        ..Default::default()
    };
    config.validate()?;
    std::fs::create_dir_all(&a.out)?;
    for rank in 0..a.parallelism {
        write_csv(&gen_shard(&config, rank)?, a.out.join(format!("part-{rank}.csv")))?;
    }
    Ok(())
}

/// The part files of `dir`, in name order.
fn part_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("part-") && n.ends_with(".csv"))
        })
        .collect();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no part-*.csv files in {}", dir.display())));
    }
    // part-10 sorts after part-9
    files.sort_by_key(|p| {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
        (stem["part-".len()..].parse::<u64>().unwrap_or(u64::MAX), stem)
    });
    Ok(files)
}

/// The files assigned to `rank`, concatenated; empty (with the common schema) if none.
fn load_shard(files: &[PathBuf], rank: usize, world_size: usize) -> Result<Table> {
    let mine: Vec<Table> = files
        .iter()
        .enumerate()
        .filter(|(i, _)| i % world_size == rank)
        .map(|(_, p)| read_csv(p))
        .collect::<Result<_>>()?;
    if mine.is_empty() {
        return Ok(Table::empty(read_csv(&files[0])?.schema().clone()));
    }
    concat_tables(&mine)
}

fn load_all(files: &[PathBuf]) -> Result<Table> {
    concat_tables(&files.iter().map(read_csv).collect::<Result<Vec<_>>>()?)
}

fn column_index(table: &Table, name: &str) -> Result<usize> {
    table
        .schema()
        .index_of(name)
        .ok_or_else(|| Error::InvalidArgument(format!("no column named {name:?}")))
}

/// Runs `job` on every rank and returns rank 0's value, or `None` when this
/// process is a non-root member of a multi-process TCP cluster.
fn run_ranks<R, F>(rt: &RuntimeArgs, job: F) -> Result<Option<R>>
where
    R: Send,
    F: Fn(&mut WorkerContext) -> Result<Option<R>> + Sync,
{
    if rt.transport == TransportKind::Tcp {
        if let Some(rank) = rt.rank {
            let hosts = parse_hosts(rt.hosts.as_deref().unwrap_or_default());
            let world_size = if hosts.is_empty() { rt.parallelism } else { hosts.len() };
            let mut config = TcpConfig::new(rank, world_size, hosts);
            config.handshake_timeout = Duration::from_secs(rt.handshake_timeout);
            let mut ctx = connect_tcp_cluster(&config)?;
            return job(&mut ctx);
        }
    }
    let results = colagg::io::bench::launch(rt.transport, rt.parallelism, |mut ctx| job(&mut ctx))?;
    let mut root = None;
    for (rank, r) in results.into_iter().enumerate() {
        let r = r?;
        if rank == 0 {
            root = r;
        }
    }
    Ok(root)
}

fn agg(a: &AggArgs) -> Result<Option<Scalar>> {
    let files = part_files(&a.in_dir)?;
    run_ranks(&a.runtime, |ctx| {
        let shard = load_shard(&files, ctx.rank(), ctx.world_size())?;
        let col = column_index(&shard, &a.col)?;
        let s = dist_aggregate(ctx, &shard, col, a.op)?;
        Ok((ctx.rank() == 0).then_some(s))
    })
}

fn groupby_request(table: &Table, a: &GroupByArgs) -> Result<GroupByRequest> {
    let keys = a.keys.iter().map(|k| column_index(table, k)).collect::<Result<Vec<_>>>()?;
    let mut aggregates = Vec::new();
    for v in &a.values {
        let c = column_index(table, v)?;
        aggregates.extend(a.ops.iter().map(|&k| (c, k)));
    }
    Ok(GroupByRequest::new(keys, aggregates))
}

fn groupby(a: &GroupByArgs) -> Result<Option<Table>> {
    let files = part_files(&a.in_dir)?;
    let opts = DistGroupByOptions { strategy: a.strategy, use_combiner: matches!(a.combiner, OnOff::On) };
    run_ranks(&a.runtime, |ctx| {
        let shard = load_shard(&files, ctx.rank(), ctx.world_size())?;
        let req = groupby_request(&shard, a)?;
        let out = dist_groupby(ctx, &shard, &req, opts)?;
        eprintln!(
            "rank {}: {} groups, sent {} rows ({} bytes), received {} rows",
            ctx.rank(),
            out.result.num_groups(),
            out.shuffle.rows_sent,
            out.shuffle.bytes_sent,
            out.shuffle.rows_received
        );
        ctx.gather_tables(&out.result.table, 0)
    })
}

fn report_comparison(c: &Comparison, checksum: u64) -> Result<()> {
    println!("max_rel_err={:e} checksum={checksum:016x}", c.max_rel_err);
    match &c.first_mismatch {
        None => {
            println!("PASS");
            Ok(())
        }
        Some(m) => {
            println!("FAIL: {m}");
            Err(Error::VerificationFailure(m.clone()))
        }
    }
}

fn verify(v: VerifyCommand) -> Result<()> {
    match v {
        VerifyCommand::Agg(a) => {
            let Some(got) = agg(&a)? else { return Ok(()) };
            let all = load_all(&part_files(&a.in_dir)?)?;
            let want = aggregate_column(all.column(column_index(&all, &a.col)?)?, a.op)?.finalize();
            report_comparison(&compare_scalars(got, want, FLOAT_REL_TOL), Outcome::Scalar(got).checksum(0)?)
        }
        VerifyCommand::Groupby(a) => {
            let Some(got) = groupby(&a)? else { return Ok(()) };
            let all = load_all(&part_files(&a.in_dir)?)?;
            let req = groupby_request(&all, &a)?;
            let idx = indices_groupby(&all, &req.key_cols)?;
            let want = apply_on_indices(&all, &idx, &req.aggregates, Emit::Finalized)?.table;
            let k = req.key_cols.len();
            report_comparison(&compare_grouped(&got, &want, k, FLOAT_REL_TOL)?, table_checksum(&got, k)?)
        }
        VerifyCommand::Synthetic(a) => {
            let config = BenchmarkConfig {
                rows: a.rows,
                groups: a.groups,
                parallelism: a.parallelism,
                seed: a.seed,
                operation: a.operation,
                kind: a.op,
                strategy: a.strategy,
                use_combiner: matches!(a.combiner, OnOff::On),
                transport: a.transport,
                ..Default::default()
            };
            let r = run_verify(&config)?;
            if let Some(g) = r.groups {
                println!("groups={g}");
            }
            report_comparison(&r.comparison, r.checksum)
        }
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let spec = match &a.config {
        Some(path) => SweepSpec::from_toml(&std::fs::read_to_string(path)?)?,
        None => SweepSpec::default(),
    };
    let points = spec.expand(a.family)?;
    for config in &points {
        let records = run_bench(std::slice::from_ref(config))?;
        append_report(&a.report, &records)?;
        for r in &records {
            println!(
                "{} strategy={} combiner={} transport={} N={} P={} G={} realized_G={} median_ms={:.3} rows_sent={} checksum={:016x}",
                r.op,
                r.config.strategy.name(),
                if r.config.use_combiner { "on" } else { "off" },
                r.config.transport,
                r.config.rows,
                r.config.parallelism,
                r.config.groups,
                r.realized_groups.map_or_else(|| "-".to_owned(), |g| g.to_string()),
                r.median_ms(),
                r.total_rows_sent(),
                r.checksum
            );
        }
    }
    Ok(())
}
