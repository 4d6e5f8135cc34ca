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

//! C ABI for the colagg engine.
//!
//! Handles are opaque: a `ColaggContext` owns one rank's worker context and
//! every `ColaggTable` created through it. Functions return a
//! [`ColaggStatus`]; on failure the core error's name and message are
//! available from [`colagg_last_error_name`] and
//! [`colagg_last_error_message`] on the calling thread. Column data is
//! copied out into caller-provided buffers; nothing else crosses the
//! boundary except scalars.
//!
//! Aggregate kinds are passed as `uint32_t` values of [`ColaggAggregate`] so
//! that an out-of-range value from the caller is an error rather than
//! undefined behaviour.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use colagg::dist::{connect_tcp_cluster, dist_aggregate, dist_groupby, DistGroupByOptions, TcpConfig, WorkerContext};
use colagg::groupby::GroupByRequest;
use colagg::io::{read_csv, write_csv};
use colagg::{AggregateKind, Chunk, Column, DataType, Error, Field, Scalar, Schema, Table};

/// Result of every fallible call. One code per core error, plus boundary
/// misuse (`NULL_POINTER`, `USAGE_ERROR`) and caught panics (`INTERNAL`).
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColaggStatus {
    Ok = 0,
    LengthMismatch = 1,
    SchemaMismatch = 2,
    UnsupportedKeyType = 3,
    UnsupportedValueType = 4,
    IndexOutOfBounds = 5,
    ColumnOutOfRange = 6,
    MalformedPayload = 7,
    Overflow = 8,
    KindMismatch = 9,
    InvalidFloat = 10,
    NotSorted = 11,
    TransportFailure = 12,
    ProtocolViolation = 13,
    BindFailure = 14,
    HandshakeTimeout = 15,
    RankCollision = 16,
    ParseError = 17,
    IoFailure = 18,
    VerificationFailure = 19,
    InvalidArgument = 20,
    /// A required pointer argument was NULL.
    NullPointer = 21,
    /// The context has been finalized.
    UsageError = 22,
    /// An output buffer is too small; the required size was reported.
    BufferTooSmall = 23,
    /// A panic was caught at the boundary.
    Internal = 24,
}

/// Aggregate kinds. `COLAGG_AGGREGATE_STD` is the population standard deviation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColaggAggregate {
    Sum = 0,
    Count = 1,
    Min = 2,
    Max = 3,
    Mean = 4,
    Std = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColaggDataType {
    Int64 = 0,
    Float64 = 1,
    Utf8 = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColaggScalarTag {
    Int64 = 0,
    Float64 = 1,
    /// Aggregate of an empty input (every kind except count).
    NoValue = 2,
}

/// An aggregate result. Only the field selected by `tag` is meaningful.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColaggScalar {
    pub tag: ColaggScalarTag,
    pub int_value: i64,
    pub float_value: f64,
}

struct Session {
    worker: Option<WorkerContext>,
    distributed: bool,
    rank: usize,
    world_size: usize,
}

/// Opaque handle to one rank's worker context.
pub struct ColaggContext {
    session: Arc<Mutex<Session>>,
}

/// Opaque handle to a table shard. Usable only while its context is live.
pub struct ColaggTable {
    session: Arc<Mutex<Session>>,
    table: Table,
}

enum Failure {
    Core(Error),
    Null(&'static str),
    Usage(&'static str),
    BufferTooSmall { needed: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

struct LastError {
    name: CString,
    message: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

static BOUNDARY_CALLS: AtomicU64 = AtomicU64::new(0);

fn status_of(e: &Error) -> ColaggStatus {
    use ColaggStatus as S;
    match e {
        Error::LengthMismatch(_) => S::LengthMismatch,
        Error::SchemaMismatch(_) => S::SchemaMismatch,
        Error::UnsupportedKeyType(_) => S::UnsupportedKeyType,
        Error::UnsupportedValueType(_) => S::UnsupportedValueType,
        Error::IndexOutOfBounds { .. } => S::IndexOutOfBounds,
        Error::ColumnOutOfRange { .. } => S::ColumnOutOfRange,
        Error::MalformedPayload(_) => S::MalformedPayload,
        Error::Overflow(_) => S::Overflow,
        Error::KindMismatch(..) => S::KindMismatch,
        Error::InvalidFloat(_) => S::InvalidFloat,
        Error::NotSorted { .. } => S::NotSorted,
        Error::TransportFailure { .. } => S::TransportFailure,
        Error::ProtocolViolation(_) => S::ProtocolViolation,
        Error::BindFailure { .. } => S::BindFailure,
        Error::HandshakeTimeout(_) => S::HandshakeTimeout,
        Error::RankCollision(_) => S::RankCollision,
        Error::ParseError { .. } => S::ParseError,
        Error::IoFailure(_) => S::IoFailure,
        Error::VerificationFailure(_) => S::VerificationFailure,
        Error::InvalidArgument(_) => S::InvalidArgument,
    }
}

fn status_name(status: ColaggStatus) -> &'static CStr {
    use ColaggStatus as S;
    match status {
        S::Ok => c"Ok",
        S::LengthMismatch => c"LengthMismatch",
        S::SchemaMismatch => c"SchemaMismatch",
        S::UnsupportedKeyType => c"UnsupportedKeyType",
        S::UnsupportedValueType => c"UnsupportedValueType",
        S::IndexOutOfBounds => c"IndexOutOfBounds",
        S::ColumnOutOfRange => c"ColumnOutOfRange",
        S::MalformedPayload => c"MalformedPayload",
        S::Overflow => c"Overflow",
        S::KindMismatch => c"KindMismatch",
        S::InvalidFloat => c"InvalidFloat",
        S::NotSorted => c"NotSorted",
        S::TransportFailure => c"TransportFailure",
        S::ProtocolViolation => c"ProtocolViolation",
        S::BindFailure => c"BindFailure",
        S::HandshakeTimeout => c"HandshakeTimeout",
        S::RankCollision => c"RankCollision",
        S::ParseError => c"ParseError",
        S::IoFailure => c"IoFailure",
        S::VerificationFailure => c"VerificationFailure",
        S::InvalidArgument => c"InvalidArgument",
        S::NullPointer => c"NullPointer",
        S::UsageError => c"UsageError",
        S::BufferTooSmall => c"BufferTooSmall",
        S::Internal => c"Internal",
    }
}

fn record(status: ColaggStatus, message: String) -> ColaggStatus {
    let message = CString::new(message.replace('\0', "\\0")).expect("interior NULs replaced");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = Some(LastError { name: status_name(status).to_owned(), message });
    });
    status
}

/// Counts the call, clears the thread's last error, runs `f` and converts
/// its failure (or panic) into a status.
fn guard(f: impl FnOnce() -> Outcome) -> ColaggStatus {
    BOUNDARY_CALLS.fetch_add(1, Ordering::Relaxed);
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ColaggStatus::Ok,
        Ok(Err(Failure::Core(e))) => record(status_of(&e), e.to_string()),
        Ok(Err(Failure::Null(arg))) => record(ColaggStatus::NullPointer, format!("{arg} is NULL")),
        Ok(Err(Failure::Usage(why))) => record(ColaggStatus::UsageError, why.to_owned()),
        Ok(Err(Failure::BufferTooSmall { needed })) => {
            record(ColaggStatus::BufferTooSmall, format!("buffer too small: {needed} elements required"))
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_owned());
            record(ColaggStatus::Internal, msg)
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, arg: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(arg))
}

unsafe fn out<'a, T>(p: *mut T, arg: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(arg))
}

unsafe fn c_str<'a>(p: *const c_char, arg: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(arg));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(Error::InvalidArgument(format!("{arg} is not valid UTF-8"))))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, arg: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(arg));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn live(session: &Mutex<Session>) -> Result<MutexGuard<'_, Session>, Failure> {
    let s = session.lock().unwrap_or_else(|p| p.into_inner());
    if s.worker.is_none() {
        return Err(Failure::Usage("context has been finalized"));
    }
    Ok(s)
}

fn kind_of(code: u32) -> Result<AggregateKind, Failure> {
    let kind = match code {
        0 => AggregateKind::Sum,
        1 => AggregateKind::Count,
        2 => AggregateKind::Min,
        3 => AggregateKind::Max,
        4 => AggregateKind::Mean,
        5 => AggregateKind::StdDev,
        other => return Err(Error::InvalidArgument(format!("unknown aggregate code {other}")).into()),
    };
    Ok(kind)
}

fn scalar(s: Scalar) -> ColaggScalar {
    match s {
        Scalar::Int64(v) => ColaggScalar { tag: ColaggScalarTag::Int64, int_value: v, float_value: v as f64 },
        Scalar::Float64(v) => ColaggScalar { tag: ColaggScalarTag::Float64, int_value: 0, float_value: v },
        Scalar::NoValue => ColaggScalar { tag: ColaggScalarTag::NoValue, int_value: 0, float_value: f64::NAN },
    }
}

fn new_table(session: &Arc<Mutex<Session>>, table: Table) -> *mut ColaggTable {
    Box::into_raw(Box::new(ColaggTable { session: Arc::clone(session), table }))
}

fn column_at(table: &Table, col: usize) -> Result<&Arc<Column>, Failure> {
    Ok(table.column(col)?)
}

// ---------------------------------------------------------------------------
// context

/// Creates a context. With `distributed` false the context is a single
/// rank; with it true, rank, world size and peer addresses are read from
/// `COLAGG_RANK`, `COLAGG_WORLD_SIZE` and `COLAGG_HOSTS` and the call blocks
/// until every peer has connected over TCP.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_new(distributed: bool, out_ctx: *mut *mut ColaggContext) -> ColaggStatus {
    guard(|| {
        let slot = out(out_ctx, "out_ctx")?;
        *slot = ptr::null_mut();
        let worker = if distributed {
            connect_tcp_cluster(&TcpConfig::from_env()?)?
        } else {
            WorkerContext::single()
        };
        let session = Session {
            rank: worker.rank(),
            world_size: worker.world_size(),
            worker: Some(worker),
            distributed,
        };
        *slot = Box::into_raw(Box::new(ColaggContext { session: Arc::new(Mutex::new(session)) }));
        Ok(())
    })
}

/// # Safety
/// `ctx` must be NULL or a live context handle; `out_rank` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_rank(ctx: *const ColaggContext, out_rank: *mut usize) -> ColaggStatus {
    guard(|| {
        let ctx = deref(ctx, "ctx")?;
        *out(out_rank, "out_rank")? = ctx.session.lock().unwrap_or_else(|p| p.into_inner()).rank;
        Ok(())
    })
}

/// # Safety
/// `ctx` must be NULL or a live context handle; `out_size` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_world_size(ctx: *const ColaggContext, out_size: *mut usize) -> ColaggStatus {
    guard(|| {
        let ctx = deref(ctx, "ctx")?;
        *out(out_size, "out_size")? = ctx.session.lock().unwrap_or_else(|p| p.into_inner()).world_size;
        Ok(())
    })
}

/// # Safety
/// `ctx` must be NULL or a live context handle; `out_flag` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_is_distributed(ctx: *const ColaggContext, out_flag: *mut bool) -> ColaggStatus {
    guard(|| {
        let ctx = deref(ctx, "ctx")?;
        *out(out_flag, "out_flag")? = ctx.session.lock().unwrap_or_else(|p| p.into_inner()).distributed;
        Ok(())
    })
}

/// # Safety
/// `ctx` must be NULL or a live context handle; `out_flag` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_is_finalized(ctx: *const ColaggContext, out_flag: *mut bool) -> ColaggStatus {
    guard(|| {
        let ctx = deref(ctx, "ctx")?;
        *out(out_flag, "out_flag")? = ctx.session.lock().unwrap_or_else(|p| p.into_inner()).worker.is_none();
        Ok(())
    })
}

/// Shuts the worker context down. Idempotent. Every later operation on the
/// context or its tables fails with `COLAGG_STATUS_USAGE_ERROR`; handles
/// must still be freed.
///
/// # Safety
/// `ctx` must be NULL or a live context handle.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_finalize(ctx: *mut ColaggContext) -> ColaggStatus {
    guard(|| {
        let ctx = deref(ctx, "ctx")?;
        ctx.session.lock().unwrap_or_else(|p| p.into_inner()).worker.take();
        Ok(())
    })
}

/// Finalizes (if needed) and releases the context. NULL is ignored.
///
/// # Safety
/// `ctx` must be NULL or a context handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn colagg_context_free(ctx: *mut ColaggContext) {
    if !ctx.is_null() {
        let _ = guard(|| {
            let ctx = Box::from_raw(ctx);
            ctx.session.lock().unwrap_or_else(|p| p.into_inner()).worker.take();
            Ok(())
        });
    }
}

// ---------------------------------------------------------------------------
// tables

/// Reads a CSV file with a header row into a new table.
///
/// # Safety
/// `ctx` must be a live context handle, `path` a NUL-terminated string and
/// `out_table` writable (each may be NULL, which is reported).
#[no_mangle]
pub unsafe extern "C" fn colagg_read_csv(
    ctx: *const ColaggContext,
    path: *const c_char,
    out_table: *mut *mut ColaggTable,
) -> ColaggStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        *slot = ptr::null_mut();
        let ctx = deref(ctx, "ctx")?;
        let path = c_str(path, "path")?;
        drop(live(&ctx.session)?);
        *slot = new_table(&ctx.session, read_csv(path)?);
        Ok(())
    })
}

/// Creates a table with no columns and no rows; add columns with the
/// `colagg_table_add_*_column` functions.
///
/// # Safety
/// `ctx` must be a live context handle and `out_table` writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_new(ctx: *const ColaggContext, out_table: *mut *mut ColaggTable) -> ColaggStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        *slot = ptr::null_mut();
        let ctx = deref(ctx, "ctx")?;
        drop(live(&ctx.session)?);
        *slot = new_table(&ctx.session, Table::empty(Schema::new(Vec::new())?));
        Ok(())
    })
}

fn append_column(table: &mut ColaggTable, column: Column) -> Outcome {
    drop(live(&table.session)?);
    let t = &table.table;
    if t.num_columns() > 0 && column.len() != t.num_rows() {
        return Err(Error::LengthMismatch(format!(
            "column {:?} has {} rows, table has {}",
            column.name(),
            column.len(),
            t.num_rows()
        ))
        .into());
    }
    let mut fields = t.schema().fields().to_vec();
    fields.push(Field::new(column.name(), column.dtype()));
    let mut columns = t.columns().to_vec();
    columns.push(Arc::new(column));
    table.table = Table::from_arcs(Arc::new(Schema::new(fields)?), columns)?;
    Ok(())
}

/// Appends a copy of `len` Int64 values as a new column.
///
/// # Safety
/// `table` must be a live table handle, `name` NUL-terminated, and
/// `values` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_add_int64_column(
    table: *mut ColaggTable,
    name: *const c_char,
    values: *const i64,
    len: usize,
) -> ColaggStatus {
    guard(|| {
        let table = out(table, "table")?;
        let column = Column::from_i64(c_str(name, "name")?, slice(values, len, "values")?.to_vec());
        append_column(table, column)
    })
}

/// Appends a copy of `len` Float64 values as a new column.
///
/// # Safety
/// As for [`colagg_table_add_int64_column`].
#[no_mangle]
pub unsafe extern "C" fn colagg_table_add_float64_column(
    table: *mut ColaggTable,
    name: *const c_char,
    values: *const f64,
    len: usize,
) -> ColaggStatus {
    guard(|| {
        let table = out(table, "table")?;
        let column = Column::from_f64(c_str(name, "name")?, slice(values, len, "values")?.to_vec());
        append_column(table, column)
    })
}

/// Appends `len` NUL-terminated UTF-8 strings as a new column.
///
/// # Safety
/// As for [`colagg_table_add_int64_column`]; every element of `values`
/// must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_add_utf8_column(
    table: *mut ColaggTable,
    name: *const c_char,
    values: *const *const c_char,
    len: usize,
) -> ColaggStatus {
    guard(|| {
        let table = out(table, "table")?;
        let strs = slice(values, len, "values")?
            .iter()
            .map(|&p| c_str(p, "values[i]"))
            .collect::<Result<Vec<_>, _>>()?;
        append_column(table, Column::from_strs(c_str(name, "name")?, strs))
    })
}

/// Writes the table as CSV with a header row.
///
/// # Safety
/// `table` must be a live table handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_write_csv(table: *const ColaggTable, path: *const c_char) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        let path = c_str(path, "path")?;
        drop(live(&table.session)?);
        write_csv(&table.table, path)?;
        Ok(())
    })
}

/// # Safety
/// `table` must be a live table handle and `out_rows` writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_num_rows(table: *const ColaggTable, out_rows: *mut usize) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        *out(out_rows, "out_rows")? = table.table.num_rows();
        Ok(())
    })
}

/// # Safety
/// `table` must be a live table handle and `out_columns` writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_num_columns(table: *const ColaggTable, out_columns: *mut usize) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        *out(out_columns, "out_columns")? = table.table.num_columns();
        Ok(())
    })
}

/// # Safety
/// `table` must be a live table handle and `out_type` writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_column_type(
    table: *const ColaggTable,
    col: usize,
    out_type: *mut ColaggDataType,
) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        *out(out_type, "out_type")? = match column_at(&table.table, col)?.dtype() {
            DataType::Int64 => ColaggDataType::Int64,
            DataType::Float64 => ColaggDataType::Float64,
            DataType::Utf8 => ColaggDataType::Utf8,
        };
        Ok(())
    })
}

/// Copies `bytes` plus a terminating NUL into `buf` when it fits in `cap`;
/// always reports the required capacity through `needed`.
unsafe fn copy_str(bytes: &[u8], buf: *mut c_char, cap: usize, needed: *mut usize) -> Outcome {
    let need = bytes.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = need;
    }
    if cap < need {
        return Err(Failure::BufferTooSmall { needed: need });
    }
    if buf.is_null() {
        return Err(Failure::Null("buf"));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Copies the column name, NUL-terminated, into `buf`. `needed` (may be
/// NULL) receives the required capacity including the NUL; a smaller `cap`
/// gives `COLAGG_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `table` must be a live table handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_column_name(
    table: *const ColaggTable,
    col: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        copy_str(column_at(&table.table, col)?.name().as_bytes(), buf, cap, needed)
    })
}

fn copy_values<T: Copy>(values: &[T], buf: *mut T, cap: usize) -> Outcome {
    if cap < values.len() {
        return Err(Failure::BufferTooSmall { needed: values.len() });
    }
    if values.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(Failure::Null("buf"));
    }
    // SAFETY: the caller guarantees `buf` is valid for `cap >= len` writes.
    unsafe { ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len()) };
    Ok(())
}

/// Copies every value of an Int64 column into `buf`, which must hold at
/// least `num_rows` elements.
///
/// # Safety
/// `table` must be a live table handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_copy_int64(
    table: *const ColaggTable,
    col: usize,
    buf: *mut i64,
    cap: usize,
) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        let column = column_at(&table.table, col)?;
        match column.contiguous().as_ref() {
            Chunk::Int64(v) => copy_values(v, buf, cap),
            _ => Err(Error::SchemaMismatch(format!("column {col} is {:?}, not Int64", column.dtype())).into()),
        }
    })
}

/// Copies every value of a Float64 column into `buf`, which must hold at
/// least `num_rows` elements.
///
/// # Safety
/// `table` must be a live table handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_copy_float64(
    table: *const ColaggTable,
    col: usize,
    buf: *mut f64,
    cap: usize,
) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        let column = column_at(&table.table, col)?;
        match column.contiguous().as_ref() {
            Chunk::Float64(v) => copy_values(v, buf, cap),
            _ => Err(Error::SchemaMismatch(format!("column {col} is {:?}, not Float64", column.dtype())).into()),
        }
    })
}

/// Copies one string of a Utf8 column, NUL-terminated, into `buf`; see
/// [`colagg_table_column_name`] for the `cap`/`needed` protocol.
///
/// # Safety
/// `table` must be a live table handle and `buf` valid for `cap` writes.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_utf8_value(
    table: *const ColaggTable,
    col: usize,
    row: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        drop(live(&table.session)?);
        let column = column_at(&table.table, col)?;
        if row >= column.len() {
            return Err(Error::IndexOutOfBounds { index: row, len: column.len() }.into());
        }
        match column.contiguous().as_ref() {
            Chunk::Utf8(u) => copy_str(u.bytes(row), buf, cap, needed),
            _ => Err(Error::SchemaMismatch(format!("column {col} is {:?}, not Utf8", column.dtype())).into()),
        }
    })
}

/// Aggregates column `col` across every rank of the table's context.
/// `kind` is a [`ColaggAggregate`] value.
///
/// # Safety
/// `table` must be a live table handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_aggregate(
    table: *const ColaggTable,
    col: usize,
    kind: u32,
    out_value: *mut ColaggScalar,
) -> ColaggStatus {
    guard(|| {
        let table = deref(table, "table")?;
        let slot = out(out_value, "out_value")?;
        let kind = kind_of(kind)?;
        let mut session = live(&table.session)?;
        let worker = session.worker.as_mut().expect("checked live");
        *slot = scalar(dist_aggregate(worker, &table.table, col, kind)?);
        Ok(())
    })
}

/// Shorthand for [`colagg_table_aggregate`] with `COLAGG_AGGREGATE_SUM`.
///
/// # Safety
/// As for [`colagg_table_aggregate`].
#[no_mangle]
pub unsafe extern "C" fn colagg_table_sum(
    table: *const ColaggTable,
    col: usize,
    out_value: *mut ColaggScalar,
) -> ColaggStatus {
    colagg_table_aggregate(table, col, ColaggAggregate::Sum as u32, out_value)
}

/// Groups by `key_cols` and computes `ops[i]` over `value_cols[i]` for each
/// of the `num_aggregates` pairs, across every rank of the context. Each
/// rank receives the groups whose keys hash to it: key columns first, then
/// one column per aggregate named `op(column)`.
///
/// # Safety
/// `table` must be a live table handle; `key_cols` valid for `num_keys`
/// reads; `value_cols` and `ops` valid for `num_aggregates` reads;
/// `out_table` writable.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_groupby(
    table: *const ColaggTable,
    key_cols: *const usize,
    num_keys: usize,
    value_cols: *const usize,
    ops: *const u32,
    num_aggregates: usize,
    out_table: *mut *mut ColaggTable,
) -> ColaggStatus {
    guard(|| {
        let slot = out(out_table, "out_table")?;
        *slot = ptr::null_mut();
        let table = deref(table, "table")?;
        let keys = slice(key_cols, num_keys, "key_cols")?.to_vec();
        let values = slice(value_cols, num_aggregates, "value_cols")?;
        let ops = slice(ops, num_aggregates, "ops")?;
        let aggregates = values
            .iter()
            .zip(ops)
            .map(|(&c, &k)| Ok((c, kind_of(k)?)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let req = GroupByRequest::new(keys, aggregates);
        let result = {
            let mut session = live(&table.session)?;
            let worker = session.worker.as_mut().expect("checked live");
            dist_groupby(worker, &table.table, &req, DistGroupByOptions::default())?
        };
        *slot = new_table(&table.session, result.result.table);
        Ok(())
    })
}

/// Releases a table. NULL is ignored. Allowed after the context is finalized.
///
/// # Safety
/// `table` must be NULL or a table handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn colagg_table_free(table: *mut ColaggTable) {
    if !table.is_null() {
        let _ = guard(|| {
            drop(Box::from_raw(table));
            Ok(())
        });
    }
}

// ---------------------------------------------------------------------------
// diagnostics

/// Name of the error from the calling thread's most recent failed call
/// (e.g. `"ParseError"`), or NULL if that call succeeded. Valid until the
/// next call on this thread.
#[no_mangle]
pub extern "C" fn colagg_last_error_name() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |e| e.name.as_ptr()))
}

/// Human-readable message for [`colagg_last_error_name`], or NULL.
#[no_mangle]
pub extern "C" fn colagg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |e| e.message.as_ptr()))
}

/// Static name of a status code; `"Unknown"` for values outside the enum.
#[no_mangle]
pub extern "C" fn colagg_status_name(status: i32) -> *const c_char {
    use ColaggStatus as S;
    const ALL: [ColaggStatus; 25] = [
        S::Ok,
        S::LengthMismatch,
        S::SchemaMismatch,
        S::UnsupportedKeyType,
        S::UnsupportedValueType,
        S::IndexOutOfBounds,
        S::ColumnOutOfRange,
        S::MalformedPayload,
        S::Overflow,
        S::KindMismatch,
        S::InvalidFloat,
        S::NotSorted,
        S::TransportFailure,
        S::ProtocolViolation,
        S::BindFailure,
        S::HandshakeTimeout,
        S::RankCollision,
        S::ParseError,
        S::IoFailure,
        S::VerificationFailure,
        S::InvalidArgument,
        S::NullPointer,
        S::UsageError,
        S::BufferTooSmall,
        S::Internal,
    ];
    usize::try_from(status)
        .ok()
        .and_then(|i| ALL.get(i))
        .map_or(c"Unknown".as_ptr(), |&s| status_name(s).as_ptr())
}

/// Number of guarded calls made across the boundary since load, for
/// measuring per-call overhead.
#[no_mangle]
pub extern "C" fn colagg_boundary_calls() -> u64 {
    BOUNDARY_CALLS.load(Ordering::Relaxed)
}

/// Library version, e.g. `"0.1.0"`.
#[no_mangle]
pub extern "C" fn colagg_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}
