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

//! Single-process group-by.
//!
//! Three strategies produce the same groups:
//!
//! * [`hash_groupby`] assigns rows to groups through an open-addressing table
//!   keyed by the FNV-1a hash of the key tuple, folding values into per-group
//!   accumulators as it goes. Output is in first-occurrence order.
//! * [`pipeline_groupby`] walks a key-sorted table, finds maximal runs of
//!   equal keys by comparing neighbours and reduces each run with one bulk
//!   update per value column. No hashing, no map. Output is in key order.
//! * [`indices_groupby`] + [`apply_on_indices`] materialize each group's row
//!   indices, then gather and fold them. This is the reference oracle.
//!
//! Each strategy can also run over a table of intermediate states (the
//! output of a combiner), merging state rows instead of folding raw values;
//! see [`StateLayout`].

use std::collections::HashSet;

use crate::agg::{AggState, AggregateKind, Component, Scalar, ValueSlice};
use crate::error::{Error, Result};
use crate::table::{Chunk, Column, DataType, KeyColumns, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Emit {
    #[default]
    Finalized,
    IntermediateStates,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    Hash,
    Pipeline,
    Indices,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Hash => "hash",
            Strategy::Pipeline => "pipeline",
            Strategy::Indices => "indices",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hash" => Ok(Strategy::Hash),
            "pipeline" => Ok(Strategy::Pipeline),
            "indices" => Ok(Strategy::Indices),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupByRequest {
    pub key_cols: Vec<usize>,
    /// `(value column index, aggregate)`; a key column may also be aggregated.
    pub aggregates: Vec<(usize, AggregateKind)>,
    pub emit: Emit,
}

impl GroupByRequest {
    pub fn new(key_cols: Vec<usize>, aggregates: Vec<(usize, AggregateKind)>) -> Self {
        GroupByRequest { key_cols, aggregates, emit: Emit::Finalized }
    }

    pub fn with_emit(mut self, emit: Emit) -> Self {
        self.emit = emit;
        self
    }

    /// Checks the request against `table` and returns the layout its
    /// intermediate-state output would have.
    pub fn layout_for(&self, table: &Table) -> Result<StateLayout> {
        if self.key_cols.is_empty() {
            return Err(Error::InvalidArgument("group-by needs at least one key column".into()));
        }
        if self.aggregates.is_empty() {
            return Err(Error::InvalidArgument("group-by needs at least one aggregate".into()));
        }
        let mut specs = Vec::with_capacity(self.aggregates.len());
        for &(col, kind) in &self.aggregates {
            let c = table.column(col)?;
            AggState::init(kind, c.dtype())?;
            specs.push(AggSpec { kind, input: c.dtype(), name: c.name().to_owned() });
        }
        Ok(StateLayout { num_keys: self.key_cols.len(), aggregates: specs })
    }
}

/// One aggregate as it appears in a grouped table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggSpec {
    pub kind: AggregateKind,
    /// Dtype of the raw values that were aggregated.
    pub input: DataType,
    /// Name of the raw value column.
    pub name: String,
}

/// Column layout of a table emitted with [`Emit::IntermediateStates`]:
/// `num_keys` key columns, then each aggregate's state components side by side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub num_keys: usize,
    pub aggregates: Vec<AggSpec>,
}

impl StateLayout {
    pub fn num_state_columns(&self) -> usize {
        self.aggregates.iter().map(|a| a.kind.arity()).sum()
    }
}

/// Counters recorded while grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupByStats {
    /// Key tuples hashed.
    pub hash_computations: u64,
    /// Hash-table slots inspected.
    pub hash_probes: u64,
    pub bulk_update_calls: u64,
    /// Raw values folded, summed over aggregates.
    pub elements_folded: u64,
    /// Intermediate-state rows merged, summed over aggregates.
    pub states_merged: u64,
}

#[derive(Clone, Debug)]
pub struct GroupedResult {
    pub table: Table,
    pub layout: StateLayout,
    pub emit: Emit,
    pub stats: GroupByStats,
}

impl GroupedResult {
    pub fn num_groups(&self) -> usize {
        self.table.num_rows()
    }
}

/// Row indices of every group, in first-occurrence order.
#[derive(Clone, Debug)]
pub struct GroupIndices {
    /// One row per group holding its key tuple.
    pub keys: Table,
    pub groups: Vec<Vec<usize>>,
    pub stats: GroupByStats,
}

impl GroupIndices {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

// ---------------------------------------------------------------------------
// hash grouping

const SLOT_EMPTY: u32 = u32::MAX;

/// Open-addressing map from key tuple to dense group id. Slots hold group
/// ids; the group's hash and representative row are kept beside it.
struct GroupMap {
    slots: Vec<u32>,
    shift: u32,
    hashes: Vec<u64>,
    reps: Vec<usize>,
}

impl GroupMap {
    fn new() -> Self {
        let bits = 10;
        GroupMap { slots: vec![SLOT_EMPTY; 1 << bits], shift: 64 - bits, hashes: Vec::new(), reps: Vec::new() }
    }

    #[inline]
    fn home(&self, h: u64) -> usize {
        (h.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> self.shift) as usize
    }

    fn grow(&mut self) {
        let bits = 64 - self.shift + 1;
        self.shift = 64 - bits;
        self.slots = vec![SLOT_EMPTY; 1 << bits];
        let mask = self.slots.len() - 1;
        for (g, &h) in self.hashes.iter().enumerate() {
            let mut i = self.home(h);
            while self.slots[i] != SLOT_EMPTY {
                i = (i + 1) & mask;
            }
            self.slots[i] = g as u32;
        }
    }

    /// Group id for `row`, inserting a new group when the key is unseen.
    #[inline]
    fn find_or_insert(&mut self, h: u64, row: usize, eq: impl Fn(usize) -> bool, probes: &mut u64) -> u32 {
        let mask = self.slots.len() - 1;
        let mut i = self.home(h);
        loop {
            *probes += 1;
            let g = self.slots[i];
            if g == SLOT_EMPTY {
                let g = self.hashes.len() as u32;
                self.slots[i] = g;
                self.hashes.push(h);
                self.reps.push(row);
                if self.hashes.len() * 2 > self.slots.len() {
                    self.grow();
                }
                return g;
            }
            if self.hashes[g as usize] == h && eq(self.reps[g as usize]) {
                return g;
            }
            i = (i + 1) & mask;
        }
    }
}

/// Dense group id per row plus each group's first row.
struct Assignment {
    group_of_row: Vec<u32>,
    first_rows: Vec<usize>,
}

fn hash_assign(keys: &KeyColumns<'_>, stats: &mut GroupByStats) -> Assignment {
    let n = keys.num_rows();
    let mut map = GroupMap::new();
    let mut group_of_row = Vec::with_capacity(n);
    let mut probes = 0u64;
    if let Some(v) = keys.single_i64() {
        for (row, h) in keys.hash_all().into_iter().enumerate() {
            let key = v[row];
            group_of_row.push(map.find_or_insert(h, row, |rep| v[rep] == key, &mut probes));
        }
    } else {
        for row in 0..n {
            let h = keys.hash_row(row);
            group_of_row.push(map.find_or_insert(h, row, |rep| keys.rows_eq(rep, keys, row), &mut probes));
        }
    }
    stats.hash_computations += n as u64;
    stats.hash_probes += probes;
    Assignment { group_of_row, first_rows: map.reps }
}

// ---------------------------------------------------------------------------
// per-group accumulators for the hash path

/// Columnar accumulators, one slot per group. Every group receives at least
/// one row, so Min/Max start from the type's extreme rather than "empty".
enum Accum {
    SumInt(Vec<i64>),
    SumFloat(Vec<f64>),
    Count(Vec<i64>),
    MinInt(Vec<i64>),
    MinFloat(Vec<f64>),
    MaxInt(Vec<i64>),
    MaxFloat(Vec<f64>),
    Mean(Vec<f64>, Vec<i64>),
    StdDev(Vec<f64>, Vec<f64>, Vec<i64>),
}

fn overflow() -> Error {
    Error::Overflow("Int64 sum".into())
}

fn reject_nan(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidFloat("min/max input".into()));
    }
    Ok(())
}

impl Accum {
    fn new(spec: &AggSpec, groups: usize) -> Self {
        use AggregateKind as K;
        let int = spec.input == DataType::Int64;
        match spec.kind {
            K::Sum if int => Accum::SumInt(vec![0; groups]),
            K::Sum => Accum::SumFloat(vec![0.0; groups]),
            K::Count => Accum::Count(vec![0; groups]),
            K::Min if int => Accum::MinInt(vec![i64::MAX; groups]),
            K::Min => Accum::MinFloat(vec![f64::INFINITY; groups]),
            K::Max if int => Accum::MaxInt(vec![i64::MIN; groups]),
            K::Max => Accum::MaxFloat(vec![f64::NEG_INFINITY; groups]),
            K::Mean => Accum::Mean(vec![0.0; groups], vec![0; groups]),
            K::StdDev => Accum::StdDev(vec![0.0; groups], vec![0.0; groups], vec![0; groups]),
        }
    }

    /// Folds raw values row by row into their groups.
    fn fold(&mut self, values: &Chunk, gids: &[u32]) -> Result<()> {
        let g = |r: usize| gids[r] as usize;
        match (self, values) {
            (Accum::Count(c), _) => gids.iter().for_each(|&gi| c[gi as usize] += 1),
            (Accum::SumInt(s), Chunk::Int64(v)) => {
                for (r, &x) in v.iter().enumerate() {
                    let slot = &mut s[g(r)];
                    *slot = slot.checked_add(x).ok_or_else(overflow)?;
                }
            }
            (Accum::SumFloat(s), Chunk::Float64(v)) => v.iter().enumerate().for_each(|(r, &x)| s[g(r)] += x),
            (Accum::MinInt(m), Chunk::Int64(v)) => {
                v.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].min(x))
            }
            (Accum::MaxInt(m), Chunk::Int64(v)) => {
                v.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].max(x))
            }
            (Accum::MinFloat(m), Chunk::Float64(v)) => {
                reject_nan(v)?;
                v.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].min(x))
            }
            (Accum::MaxFloat(m), Chunk::Float64(v)) => {
                reject_nan(v)?;
                v.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].max(x))
            }
            (Accum::Mean(s, c), Chunk::Int64(v)) => v.iter().enumerate().for_each(|(r, &x)| {
                s[g(r)] += x as f64;
                c[g(r)] += 1;
            }),
            (Accum::Mean(s, c), Chunk::Float64(v)) => v.iter().enumerate().for_each(|(r, &x)| {
                s[g(r)] += x;
                c[g(r)] += 1;
            }),
            (Accum::StdDev(q, s, c), Chunk::Int64(v)) => v.iter().enumerate().for_each(|(r, &x)| {
                let x = x as f64;
                let gi = g(r);
                q[gi] += x * x;
                s[gi] += x;
                c[gi] += 1;
            }),
            (Accum::StdDev(q, s, c), Chunk::Float64(v)) => v.iter().enumerate().for_each(|(r, &x)| {
                let gi = g(r);
                q[gi] += x * x;
                s[gi] += x;
                c[gi] += 1;
            }),
            _ => return Err(Error::SchemaMismatch("value column dtype changed during group-by".into())),
        }
        Ok(())
    }

    /// Merges rows of state components (one chunk per component) into their groups.
    fn merge(&mut self, comps: &[&Chunk], gids: &[u32]) -> Result<()> {
        let g = |r: usize| gids[r] as usize;
        let bad = || Error::SchemaMismatch("state column dtype does not match its aggregate".into());
        let i64s = |i: usize| comps[i].as_i64().ok_or_else(bad);
        let f64s = |i: usize| comps[i].as_f64().ok_or_else(bad);
        match self {
            Accum::SumInt(s) => {
                for (r, &x) in i64s(0)?.iter().enumerate() {
                    let slot = &mut s[g(r)];
                    *slot = slot.checked_add(x).ok_or_else(overflow)?;
                }
            }
            Accum::Count(c) => {
                for (r, &x) in i64s(0)?.iter().enumerate() {
                    let slot = &mut c[g(r)];
                    *slot = slot.checked_add(x).ok_or_else(overflow)?;
                }
            }
            Accum::SumFloat(s) => f64s(0)?.iter().enumerate().for_each(|(r, &x)| s[g(r)] += x),
            Accum::MinInt(m) => i64s(0)?.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].min(x)),
            Accum::MaxInt(m) => i64s(0)?.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].max(x)),
            Accum::MinFloat(m) => {
                let v = f64s(0)?;
                reject_nan(v)?;
                v.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].min(x))
            }
            Accum::MaxFloat(m) => {
                let v = f64s(0)?;
                reject_nan(v)?;
                v.iter().enumerate().for_each(|(r, &x)| m[g(r)] = m[g(r)].max(x))
            }
            Accum::Mean(s, c) => {
                let (vs, vc) = (f64s(0)?, i64s(1)?);
                for r in 0..vs.len() {
                    s[g(r)] += vs[r];
                    c[g(r)] += vc[r];
                }
            }
            Accum::StdDev(q, s, c) => {
                let (vq, vs, vc) = (f64s(0)?, f64s(1)?, i64s(2)?);
                for r in 0..vq.len() {
                    let gi = g(r);
                    q[gi] += vq[r];
                    s[gi] += vs[r];
                    c[gi] += vc[r];
                }
            }
        }
        Ok(())
    }

    fn into_states(self) -> Vec<AggState> {
        match self {
            Accum::SumInt(s) => s.into_iter().map(|sum| AggState::SumInt { sum, empty: false }).collect(),
            Accum::SumFloat(s) => s.into_iter().map(|sum| AggState::SumFloat { sum, empty: false }).collect(),
            Accum::Count(c) => c.into_iter().map(|count| AggState::Count { count }).collect(),
            Accum::MinInt(m) => m.into_iter().map(|v| AggState::MinInt(Some(v))).collect(),
            Accum::MinFloat(m) => m.into_iter().map(|v| AggState::MinFloat(Some(v))).collect(),
            Accum::MaxInt(m) => m.into_iter().map(|v| AggState::MaxInt(Some(v))).collect(),
            Accum::MaxFloat(m) => m.into_iter().map(|v| AggState::MaxFloat(Some(v))).collect(),
            Accum::Mean(s, c) => s.into_iter().zip(c).map(|(sum, count)| AggState::Mean { sum, count }).collect(),
            Accum::StdDev(q, s, c) => q
                .into_iter()
                .zip(s)
                .zip(c)
                .map(|((sum_sq, sum), count)| AggState::StdDev { sum_sq, sum, count })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// output

fn unique_names(base: Vec<String>, taken: &mut HashSet<String>) -> Vec<String> {
    base.into_iter()
        .map(|name| {
            let mut candidate = name.clone();
            let mut i = 1;
            while !taken.insert(candidate.clone()) {
                candidate = format!("{name}#{i}");
                i += 1;
            }
            candidate
        })
        .collect()
}

/// Assembles key columns and per-aggregate states into the output table.
fn build_output(
    mut key_columns: Vec<Column>,
    layout: &StateLayout,
    states: Vec<Vec<AggState>>,
    emit: Emit,
) -> Result<Table> {
    let mut taken: HashSet<String> = key_columns.iter().map(|c| c.name().to_owned()).collect();
    for (spec, states) in layout.aggregates.iter().zip(states) {
        let label = format!("{}({})", spec.kind, spec.name);
        match emit {
            Emit::Finalized => {
                let name = unique_names(vec![label], &mut taken).remove(0);
                let chunk = match spec.kind.output_dtype(spec.input) {
                    DataType::Int64 => Chunk::Int64(
                        states
                            .iter()
                            .map(|s| match s.finalize() {
                                Scalar::Int64(v) => v,
                                other => unreachable!("grouped {} produced {other:?}", spec.kind),
                            })
                            .collect(),
                    ),
                    _ => Chunk::Float64(
                        states
                            .iter()
                            .map(|s| match s.finalize() {
                                Scalar::Float64(v) => v,
                                other => unreachable!("grouped {} produced {other:?}", spec.kind),
                            })
                            .collect(),
                    ),
                };
                key_columns.push(Column::from_chunk(name, chunk));
            }
            Emit::IntermediateStates => {
                let comps = spec.kind.state_components(spec.input);
                let names = unique_names(
                    comps.iter().map(|(c, _)| format!("{label}.{c}")).collect(),
                    &mut taken,
                );
                for (i, ((_, dtype), name)) in comps.iter().zip(names).enumerate() {
                    let chunk = match dtype {
                        DataType::Int64 => Chunk::Int64(
                            states
                                .iter()
                                .map(|s| match s.components()[i] {
                                    Component::I(v) => v,
                                    Component::F(_) => unreachable!(),
                                })
                                .collect(),
                        ),
                        _ => Chunk::Float64(
                            states
                                .iter()
                                .map(|s| match s.components()[i] {
                                    Component::F(v) => v,
                                    Component::I(_) => unreachable!(),
                                })
                                .collect(),
                        ),
                    };
                    key_columns.push(Column::from_chunk(name, chunk));
                }
            }
        }
    }
    Table::from_columns(key_columns)
}

/// Value columns of a raw table, or state component columns of a state table.
enum Source<'a> {
    Raw { table: &'a Table, value_cols: Vec<usize> },
    States { table: &'a Table },
}

impl Source<'_> {
    fn table(&self) -> &Table {
        match self {
            Source::Raw { table, .. } | Source::States { table } => table,
        }
    }
}

/// Column indices of each aggregate's state components within a state table.
fn state_column_ranges(layout: &StateLayout) -> Vec<std::ops::Range<usize>> {
    let mut start = layout.num_keys;
    layout
        .aggregates
        .iter()
        .map(|a| {
            let r = start..start + a.kind.arity();
            start = r.end;
            r
        })
        .collect()
}

fn check_state_table(table: &Table, layout: &StateLayout) -> Result<()> {
    let expect = layout.num_keys + layout.num_state_columns();
    if table.num_columns() != expect {
        return Err(Error::SchemaMismatch(format!(
            "state table has {} columns, layout needs {expect}",
            table.num_columns()
        )));
    }
    for (spec, range) in layout.aggregates.iter().zip(state_column_ranges(layout)) {
        for ((_, dtype), col) in spec.kind.state_components(spec.input).iter().zip(range) {
            if table.columns()[col].dtype() != *dtype {
                return Err(Error::SchemaMismatch(format!(
                    "state column {} is {}, expected {dtype}",
                    table.columns()[col].name(),
                    table.columns()[col].dtype()
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// hash strategy

fn hash_impl(source: Source<'_>, key_cols: &[usize], layout: &StateLayout, emit: Emit) -> Result<GroupedResult> {
    let table = source.table();
    let mut stats = GroupByStats::default();
    let keys = KeyColumns::new(table, key_cols)?;
    let assign = hash_assign(&keys, &mut stats);
    let groups = assign.first_rows.len();
    let mut states = Vec::with_capacity(layout.aggregates.len());
    match &source {
        Source::Raw { value_cols, .. } => {
            for (spec, &col) in layout.aggregates.iter().zip(value_cols) {
                let mut acc = Accum::new(spec, groups);
                acc.fold(&table.columns()[col].contiguous(), &assign.group_of_row)?;
                stats.elements_folded += table.num_rows() as u64;
                states.push(acc.into_states());
            }
        }
        Source::States { .. } => {
            for (spec, range) in layout.aggregates.iter().zip(state_column_ranges(layout)) {
                let mut acc = Accum::new(spec, groups);
                let comps: Vec<_> = range.map(|c| table.columns()[c].contiguous()).collect();
                let refs: Vec<&Chunk> = comps.iter().map(|c| c.as_ref()).collect();
                acc.merge(&refs, &assign.group_of_row)?;
                stats.states_merged += table.num_rows() as u64;
                states.push(acc.into_states());
            }
        }
    }
    let key_columns = keys.gather(&assign.first_rows);
    let table = build_output(key_columns, layout, states, emit)?;
    Ok(GroupedResult { table, layout: layout.clone(), emit, stats })
}

/// Hash group-by with early aggregation; groups appear in first-occurrence order.
pub fn hash_groupby(table: &Table, req: &GroupByRequest) -> Result<GroupedResult> {
    let layout = req.layout_for(table)?;
    let value_cols = req.aggregates.iter().map(|a| a.0).collect();
    hash_impl(Source::Raw { table, value_cols }, &req.key_cols, &layout, req.emit)
}

// ---------------------------------------------------------------------------
// pipeline strategy

/// Start offsets of maximal equal-key runs, plus a final sentinel at `n`.
/// Fails with `NotSorted` on the first descent unless `assume_sorted`.
fn run_boundaries(keys: &KeyColumns<'_>, assume_sorted: bool) -> Result<Vec<usize>> {
    let n = keys.num_rows();
    let mut starts = Vec::new();
    if n == 0 {
        starts.push(0);
        return Ok(starts);
    }
    starts.push(0);
    if let Some(v) = keys.single_i64() {
        for r in 1..n {
            if v[r] != v[r - 1] {
                if !assume_sorted && v[r] < v[r - 1] {
                    return Err(Error::NotSorted { row: r });
                }
                starts.push(r);
            }
        }
    } else {
        for r in 1..n {
            match keys.cmp_rows(r - 1, r) {
                std::cmp::Ordering::Equal => {}
                std::cmp::Ordering::Greater if !assume_sorted => return Err(Error::NotSorted { row: r }),
                _ => starts.push(r),
            }
        }
    }
    starts.push(n);
    Ok(starts)
}

fn pipeline_impl(
    source: Source<'_>,
    key_cols: &[usize],
    layout: &StateLayout,
    emit: Emit,
    assume_sorted: bool,
) -> Result<GroupedResult> {
    let table = source.table();
    let mut stats = GroupByStats::default();
    let keys = KeyColumns::new(table, key_cols)?;
    let bounds = run_boundaries(&keys, assume_sorted)?;
    let runs: Vec<(usize, usize)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
    let mut states = Vec::with_capacity(layout.aggregates.len());
    match &source {
        Source::Raw { value_cols, .. } => {
            for (spec, &col) in layout.aggregates.iter().zip(value_cols) {
                let values = table.columns()[col].contiguous();
                let slice = ValueSlice::of_chunk(&values);
                let init = AggState::init(spec.kind, spec.input)?;
                let mut out = Vec::with_capacity(runs.len());
                for &(a, b) in &runs {
                    out.push(init.bulk_update(slice.range(a, b))?);
                    stats.bulk_update_calls += 1;
                    stats.elements_folded += (b - a) as u64;
                }
                states.push(out);
            }
        }
        Source::States { .. } => {
            for (spec, range) in layout.aggregates.iter().zip(state_column_ranges(layout)) {
                let comps: Vec<_> = range.map(|c| table.columns()[c].contiguous()).collect();
                let init = AggState::init(spec.kind, spec.input)?;
                let mut out = Vec::with_capacity(runs.len());
                for &(a, b) in &runs {
                    let mut acc = init;
                    for r in a..b {
                        acc = acc.merge(state_at(spec, &comps, r)?)?;
                    }
                    stats.states_merged += (b - a) as u64;
                    out.push(acc);
                }
                states.push(out);
            }
        }
    }
    let firsts: Vec<usize> = runs.iter().map(|r| r.0).collect();
    let key_columns = keys.gather(&firsts);
    let table = build_output(key_columns, layout, states, emit)?;
    Ok(GroupedResult { table, layout: layout.clone(), emit, stats })
}

/// Reads row `r` of a state table's component columns back into an [`AggState`].
fn state_at<C: AsRef<Chunk>>(spec: &AggSpec, comps: &[C], r: usize) -> Result<AggState> {
    let bad = || Error::SchemaMismatch("state column dtype does not match its aggregate".into());
    let i = |c: usize| comps[c].as_ref().as_i64().map(|v| v[r]).ok_or_else(bad);
    let f = |c: usize| comps[c].as_ref().as_f64().map(|v| v[r]).ok_or_else(bad);
    let int = spec.input == DataType::Int64;
    use AggregateKind as K;
    Ok(match spec.kind {
        K::Sum if int => AggState::SumInt { sum: i(0)?, empty: false },
        K::Sum => AggState::SumFloat { sum: f(0)?, empty: false },
        K::Count => AggState::Count { count: i(0)? },
        K::Min if int => AggState::MinInt(Some(i(0)?)),
        K::Min => AggState::MinFloat(Some(f(0)?)),
        K::Max if int => AggState::MaxInt(Some(i(0)?)),
        K::Max => AggState::MaxFloat(Some(f(0)?)),
        K::Mean => AggState::Mean { sum: f(0)?, count: i(1)? },
        K::StdDev => AggState::StdDev { sum_sq: f(0)?, sum: f(1)?, count: i(2)? },
    })
}

/// Group-by over a table sorted on `req.key_cols`: one bulk update per
/// (value column, run of equal keys). Output is in key order.
pub fn pipeline_groupby(table: &Table, req: &GroupByRequest, assume_sorted: bool) -> Result<GroupedResult> {
    let layout = req.layout_for(table)?;
    let value_cols = req.aggregates.iter().map(|a| a.0).collect();
    pipeline_impl(Source::Raw { table, value_cols }, &req.key_cols, &layout, req.emit, assume_sorted)
}

pub fn is_sorted(table: &Table, key_cols: &[usize]) -> Result<bool> {
    let keys = KeyColumns::new(table, key_cols)?;
    Ok((1..keys.num_rows()).all(|r| keys.cmp_rows(r - 1, r) != std::cmp::Ordering::Greater))
}

// ---------------------------------------------------------------------------
// indices-of-groups strategy

pub fn indices_groupby(table: &Table, key_cols: &[usize]) -> Result<GroupIndices> {
    let mut stats = GroupByStats::default();
    let keys = KeyColumns::new(table, key_cols)?;
    let assign = hash_assign(&keys, &mut stats);
    let mut groups = vec![Vec::new(); assign.first_rows.len()];
    for (row, &g) in assign.group_of_row.iter().enumerate() {
        groups[g as usize].push(row);
    }
    let keys = Table::from_columns(keys.gather(&assign.first_rows))?;
    Ok(GroupIndices { keys, groups, stats })
}

/// Gathers each group's values by index and folds them with one bulk update per group.
pub fn apply_on_indices(
    table: &Table,
    indices: &GroupIndices,
    aggregates: &[(usize, AggregateKind)],
    emit: Emit,
) -> Result<GroupedResult> {
    if aggregates.is_empty() {
        return Err(Error::InvalidArgument("group-by needs at least one aggregate".into()));
    }
    let mut specs = Vec::new();
    for &(col, kind) in aggregates {
        let c = table.column(col)?;
        AggState::init(kind, c.dtype())?;
        specs.push(AggSpec { kind, input: c.dtype(), name: c.name().to_owned() });
    }
    let layout = StateLayout { num_keys: indices.keys.num_columns(), aggregates: specs };
    let mut stats = indices.stats;
    let mut states = Vec::with_capacity(aggregates.len());
    for (spec, &(col, _)) in layout.aggregates.iter().zip(aggregates) {
        let values = table.columns()[col].contiguous();
        let init = AggState::init(spec.kind, spec.input)?;
        let mut out = Vec::with_capacity(indices.groups.len());
        for rows in &indices.groups {
            if rows.iter().any(|&r| r >= table.num_rows()) {
                return Err(Error::IndexOutOfBounds { index: *rows.iter().max().unwrap(), len: table.num_rows() });
            }
            let state = match values.as_ref() {
                Chunk::Int64(v) => {
                    let gathered: Vec<i64> = rows.iter().map(|&r| v[r]).collect();
                    init.bulk_update(ValueSlice::Int64(&gathered))?
                }
                Chunk::Float64(v) => {
                    let gathered: Vec<f64> = rows.iter().map(|&r| v[r]).collect();
                    init.bulk_update(ValueSlice::Float64(&gathered))?
                }
                Chunk::Utf8(_) => init.bulk_update(ValueSlice::Opaque(rows.len()))?,
            };
            stats.bulk_update_calls += 1;
            stats.elements_folded += rows.len() as u64;
            out.push(state);
        }
        states.push(out);
    }
    let key_columns = indices.keys.columns().iter().map(|c| c.as_ref().clone()).collect();
    let table = build_output(key_columns, &layout, states, emit)?;
    Ok(GroupedResult { table, layout, emit, stats })
}

/// Indices strategy over a state table: group state rows by key, then merge
/// each group's rows in index order.
fn indices_merge(table: &Table, layout: &StateLayout, emit: Emit) -> Result<GroupedResult> {
    let key_cols: Vec<usize> = (0..layout.num_keys).collect();
    let idx = indices_groupby(table, &key_cols)?;
    let mut stats = idx.stats;
    let mut states = Vec::with_capacity(layout.aggregates.len());
    for (spec, range) in layout.aggregates.iter().zip(state_column_ranges(layout)) {
        let comps: Vec<_> = range.map(|c| table.columns()[c].contiguous()).collect();
        let init = AggState::init(spec.kind, spec.input)?;
        let mut out = Vec::with_capacity(idx.groups.len());
        for rows in &idx.groups {
            let mut acc = init;
            for &r in rows {
                acc = acc.merge(state_at(spec, &comps, r)?)?;
            }
            stats.states_merged += rows.len() as u64;
            out.push(acc);
        }
        states.push(out);
    }
    let key_columns = idx.keys.columns().iter().map(|c| c.as_ref().clone()).collect();
    let table = build_output(key_columns, layout, states, emit)?;
    Ok(GroupedResult { table, layout: layout.clone(), emit, stats })
}

// ---------------------------------------------------------------------------
// entry points used by the distributed runtime

/// Runs `req` over raw rows with the chosen strategy. The pipeline strategy
/// sorts the table first when it is not already sorted.
pub fn groupby_with(table: &Table, req: &GroupByRequest, strategy: Strategy) -> Result<GroupedResult> {
    match strategy {
        Strategy::Hash => hash_groupby(table, req),
        Strategy::Pipeline => {
            if is_sorted(table, &req.key_cols)? {
                pipeline_groupby(table, req, true)
            } else {
                pipeline_groupby(&crate::table::sort_by_keys(table, &req.key_cols)?, req, true)
            }
        }
        Strategy::Indices => {
            req.layout_for(table)?;
            let idx = indices_groupby(table, &req.key_cols)?;
            apply_on_indices(table, &idx, &req.aggregates, req.emit)
        }
    }
}

/// Groups a table of intermediate states (laid out per `layout`) and merges
/// the state rows of each group.
pub fn merge_states_with(table: &Table, layout: &StateLayout, strategy: Strategy, emit: Emit) -> Result<GroupedResult> {
    check_state_table(table, layout)?;
    let key_cols: Vec<usize> = (0..layout.num_keys).collect();
    match strategy {
        Strategy::Hash => hash_impl(Source::States { table }, &key_cols, layout, emit),
        Strategy::Pipeline => {
            if is_sorted(table, &key_cols)? {
                pipeline_impl(Source::States { table }, &key_cols, layout, emit, true)
            } else {
                let sorted = crate::table::sort_by_keys(table, &key_cols)?;
                pipeline_impl(Source::States { table: &sorted }, &key_cols, layout, emit, true)
            }
        }
        Strategy::Indices => indices_merge(table, layout, emit),
    }
}

/// Finalizes every state row of an [`Emit::IntermediateStates`] table.
pub fn finalize_states(table: &Table, layout: &StateLayout) -> Result<Table> {
    check_state_table(table, layout)?;
    let mut states = Vec::with_capacity(layout.aggregates.len());
    for (spec, range) in layout.aggregates.iter().zip(state_column_ranges(layout)) {
        let comps: Vec<_> = range.map(|c| table.columns()[c].contiguous()).collect();
        states.push((0..table.num_rows()).map(|r| state_at(spec, &comps, r)).collect::<Result<Vec<_>>>()?);
    }
    let keys = table.columns()[..layout.num_keys].iter().map(|c| c.as_ref().clone()).collect();
    build_output(keys, layout, states, Emit::Finalized)
}
