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

//! Typed, chunked, immutable columnar tables.
//!
//! A [`Table`] is a list of [`Column`]s sharing one row count. Each column is
//! an ordered list of [`Chunk`]s holding contiguous buffers of a single
//! [`DataType`]. Columns and chunks are reference counted, so building a
//! table or projecting columns never copies values.

mod hash;
mod keys;
mod ops;
pub mod wire;

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use hash::{fnv1a64, Fnv1a, FNV_OFFSET_BASIS, FNV_PRIME, KEY_SEPARATOR};
pub use keys::KeyColumns;
pub use ops::{concat_tables, hash_partition, rechunk, sort_by_keys, take_rows};

/// Rows per chunk when a column is built from one large buffer.
pub const DEFAULT_CHUNK_ROWS: usize = 65_536;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DataType {
    Int64,
    Float64,
    Utf8,
}

impl DataType {
    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Int64 | DataType::Float64)
    }

    pub fn is_key(self) -> bool {
        matches!(self, DataType::Int64 | DataType::Utf8)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            DataType::Int64 => 0,
            DataType::Float64 => 1,
            DataType::Utf8 => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DataType::Int64),
            1 => Some(DataType::Float64),
            2 => Some(DataType::Utf8),
            _ => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DataType::Int64 => "Int64",
            DataType::Float64 => "Float64",
            DataType::Utf8 => "Utf8",
        };
        f.write_str(s)
    }
}

/// Variable-length UTF-8 values stored as `len + 1` offsets into one byte buffer.
#[derive(Clone, Debug, Default)]
pub struct Utf8Chunk {
    offsets: Vec<u32>,
    data: Vec<u8>,
}

impl Utf8Chunk {
    pub fn from_parts(offsets: Vec<u32>, data: Vec<u8>) -> Result<Self> {
        if offsets.first() != Some(&0) {
            return Err(Error::MalformedPayload("utf8 offsets must start at 0".into()));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::MalformedPayload("utf8 offsets are not monotone".into()));
        }
        if *offsets.last().unwrap() as usize != data.len() {
            return Err(Error::MalformedPayload("utf8 offsets do not cover the byte buffer".into()));
        }
        let s = std::str::from_utf8(&data)
            .map_err(|e| Error::MalformedPayload(format!("invalid utf8: {e}")))?;
        if offsets.iter().any(|&o| !s.is_char_boundary(o as usize)) {
            return Err(Error::MalformedPayload("utf8 offset splits a character".into()));
        }
        Ok(Utf8Chunk { offsets, data })
    }

    pub fn from_values<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut b = Utf8Builder::default();
        for v in values {
            b.push(v.as_ref());
        }
        b.finish()
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn bytes(&self, i: usize) -> &[u8] {
        &self.data[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    #[inline]
    pub fn value(&self, i: usize) -> &str {
        // SAFETY: construction validates utf8 and that every offset is a char boundary.
        unsafe { std::str::from_utf8_unchecked(self.bytes(i)) }
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        (0..self.len()).map(move |i| self.value(i))
    }
}

#[derive(Debug)]
pub(crate) struct Utf8Builder {
    offsets: Vec<u32>,
    data: Vec<u8>,
}

impl Default for Utf8Builder {
    fn default() -> Self {
        Utf8Builder { offsets: vec![0], data: Vec::new() }
    }
}

impl Utf8Builder {
    pub(crate) fn with_capacity(rows: usize) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        offsets.push(0);
        Utf8Builder { offsets, data: Vec::new() }
    }

    #[inline]
    pub(crate) fn push(&mut self, v: &str) {
        self.push_bytes(v.as_bytes());
    }

    /// Caller guarantees `v` is a complete utf8 value.
    #[inline]
    pub(crate) fn push_bytes(&mut self, v: &[u8]) {
        self.data.extend_from_slice(v);
        let end = u32::try_from(self.data.len()).expect("utf8 chunk exceeds 4 GiB");
        self.offsets.push(end);
    }

    pub(crate) fn finish(self) -> Utf8Chunk {
        Utf8Chunk { offsets: self.offsets, data: self.data }
    }
}

/// One contiguous buffer of a single type.
#[derive(Clone, Debug)]
pub enum Chunk {
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    Utf8(Utf8Chunk),
}

impl Chunk {
    pub fn dtype(&self) -> DataType {
        match self {
            Chunk::Int64(_) => DataType::Int64,
            Chunk::Float64(_) => DataType::Float64,
            Chunk::Utf8(_) => DataType::Utf8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Chunk::Int64(v) => v.len(),
            Chunk::Float64(v) => v.len(),
            Chunk::Utf8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match self {
            Chunk::Int64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match self {
            Chunk::Float64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_utf8(&self) -> Option<&Utf8Chunk> {
        match self {
            Chunk::Utf8(v) => Some(v),
            _ => None,
        }
    }

    pub(crate) fn empty(dtype: DataType) -> Chunk {
        match dtype {
            DataType::Int64 => Chunk::Int64(Vec::new()),
            DataType::Float64 => Chunk::Float64(Vec::new()),
            DataType::Utf8 => Chunk::Utf8(Utf8Chunk::from_parts(vec![0], Vec::new()).unwrap()),
        }
    }

    /// Copy of rows `[start, start + len)`.
    pub(crate) fn slice(&self, start: usize, len: usize) -> Chunk {
        match self {
            Chunk::Int64(v) => Chunk::Int64(v[start..start + len].to_vec()),
            Chunk::Float64(v) => Chunk::Float64(v[start..start + len].to_vec()),
            Chunk::Utf8(v) => {
                let mut b = Utf8Builder::with_capacity(len);
                for i in start..start + len {
                    b.push_bytes(v.bytes(i));
                }
                Chunk::Utf8(b.finish())
            }
        }
    }

    /// Concatenates chunks of one dtype into a single chunk.
    pub(crate) fn concat<'a>(dtype: DataType, parts: impl IntoIterator<Item = &'a Chunk>) -> Chunk {
        let parts: Vec<&Chunk> = parts.into_iter().collect();
        let rows = parts.iter().map(|c| c.len()).sum();
        match dtype {
            DataType::Int64 => {
                let mut out = Vec::with_capacity(rows);
                for p in &parts {
                    out.extend_from_slice(p.as_i64().expect("dtype checked by caller"));
                }
                Chunk::Int64(out)
            }
            DataType::Float64 => {
                let mut out = Vec::with_capacity(rows);
                for p in &parts {
                    out.extend_from_slice(p.as_f64().expect("dtype checked by caller"));
                }
                Chunk::Float64(out)
            }
            DataType::Utf8 => {
                let mut b = Utf8Builder::with_capacity(rows);
                for p in &parts {
                    let u = p.as_utf8().expect("dtype checked by caller");
                    for i in 0..u.len() {
                        b.push_bytes(u.bytes(i));
                    }
                }
                Chunk::Utf8(b.finish())
            }
        }
    }
}

/// A named, typed sequence of chunks.
#[derive(Clone, Debug)]
pub struct Column {
    name: String,
    dtype: DataType,
    chunks: Vec<Arc<Chunk>>,
    len: usize,
}

impl Column {
    pub fn new(name: impl Into<String>, dtype: DataType, chunks: Vec<Arc<Chunk>>) -> Result<Self> {
        let name = name.into();
        if let Some(bad) = chunks.iter().find(|c| c.dtype() != dtype) {
            return Err(Error::SchemaMismatch(format!(
                "column {name} is {dtype} but has a {} chunk",
                bad.dtype()
            )));
        }
        let len = chunks.iter().map(|c| c.len()).sum();
        Ok(Column { name, dtype, chunks, len })
    }

    /// Single-chunk column owning `chunk`.
    pub fn from_chunk(name: impl Into<String>, chunk: Chunk) -> Self {
        let dtype = chunk.dtype();
        let len = chunk.len();
        let chunks = if len == 0 { Vec::new() } else { vec![Arc::new(chunk)] };
        Column { name: name.into(), dtype, chunks, len }
    }

    pub fn from_i64(name: impl Into<String>, values: Vec<i64>) -> Self {
        Self::from_chunk(name, Chunk::Int64(values))
    }

    pub fn from_f64(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self::from_chunk(name, Chunk::Float64(values))
    }

    pub fn from_strs<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_chunk(name, Chunk::Utf8(Utf8Chunk::from_values(values)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dtype(&self) -> DataType {
        self.dtype
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn chunks(&self) -> &[Arc<Chunk>] {
        &self.chunks
    }

    pub fn with_name(&self, name: impl Into<String>) -> Column {
        Column { name: name.into(), ..self.clone() }
    }

    /// All values as one chunk; borrowed when the column already has exactly one.
    pub fn contiguous(&self) -> Cow<'_, Chunk> {
        match self.chunks.as_slice() {
            [one] => Cow::Borrowed(one.as_ref()),
            [] => Cow::Owned(Chunk::empty(self.dtype)),
            many => Cow::Owned(Chunk::concat(self.dtype, many.iter().map(|c| c.as_ref()))),
        }
    }

    /// Value-wise equality, independent of chunk layout. Floats compare by bit pattern.
    pub fn values_eq(&self, other: &Column) -> bool {
        if self.dtype != other.dtype || self.len != other.len {
            return false;
        }
        let a = self.contiguous();
        let b = other.contiguous();
        match (a.as_ref(), b.as_ref()) {
            (Chunk::Int64(x), Chunk::Int64(y)) => x == y,
            (Chunk::Float64(x), Chunk::Float64(y)) => {
                x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits())
            }
            (Chunk::Utf8(x), Chunk::Utf8(y)) => (0..x.len()).all(|i| x.bytes(i) == y.bytes(i)),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub dtype: DataType,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: DataType) -> Self {
        Field { name: name.into(), dtype }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    fields: Vec<Field>,
}

impl Schema {
    pub fn new(fields: Vec<Field>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &fields {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate column name {}", f.name)));
            }
        }
        Ok(Schema { fields })
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

/// Immutable table of equally long columns.
#[derive(Clone, Debug)]
pub struct Table {
    schema: Arc<Schema>,
    columns: Vec<Arc<Column>>,
    num_rows: usize,
}

impl Table {
    /// Checks arity, dtypes and row counts against `schema`. Column names are
    /// taken from the schema.
    pub fn try_new(schema: Schema, columns: Vec<Column>) -> Result<Self> {
        Self::from_arcs(Arc::new(schema), columns.into_iter().map(Arc::new).collect())
    }

    pub fn from_arcs(schema: Arc<Schema>, columns: Vec<Arc<Column>>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "schema has {} fields but {} columns were given",
                schema.len(),
                columns.len()
            )));
        }
        for (f, c) in schema.fields().iter().zip(&columns) {
            if f.dtype != c.dtype() {
                return Err(Error::SchemaMismatch(format!(
                    "field {} is {} but column is {}",
                    f.name,
                    f.dtype,
                    c.dtype()
                )));
            }
        }
        let num_rows = columns.first().map_or(0, |c| c.len());
        if let Some(c) = columns.iter().find(|c| c.len() != num_rows) {
            return Err(Error::LengthMismatch(format!(
                "column {} has {} rows, expected {num_rows}",
                c.name(),
                c.len()
            )));
        }
        let columns = schema
            .fields()
            .iter()
            .zip(columns)
            .map(|(f, c)| if c.name() == f.name { c } else { Arc::new(c.with_name(&f.name)) })
            .collect();
        Ok(Table { schema, columns, num_rows })
    }

    /// Builds the schema from the columns' own names and dtypes.
    pub fn from_columns(columns: Vec<Column>) -> Result<Self> {
        let schema = Schema::new(columns.iter().map(|c| Field::new(c.name(), c.dtype())).collect())?;
        Self::try_new(schema, columns)
    }

    pub fn empty(schema: Schema) -> Self {
        let columns = schema
            .fields()
            .iter()
            .map(|f| Arc::new(Column::from_chunk(&f.name, Chunk::empty(f.dtype))))
            .collect();
        Table { schema: Arc::new(schema), columns, num_rows: 0 }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Arc<Column>] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> Result<&Arc<Column>> {
        self.columns
            .get(i)
            .ok_or(Error::ColumnOutOfRange { index: i, len: self.columns.len() })
    }

    pub fn column_by_name(&self, name: &str) -> Option<&Arc<Column>> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    /// Table with column `i` replaced; used by rechunking helpers and tests.
    pub fn with_column(&self, i: usize, column: Column) -> Result<Table> {
        let mut cols = self.columns.clone();
        if i >= cols.len() {
            return Err(Error::ColumnOutOfRange { index: i, len: cols.len() });
        }
        cols[i] = Arc::new(column);
        Table::from_arcs(self.schema.clone(), cols)
    }

    /// Value-wise equality of schema and contents, independent of chunking.
    pub fn values_eq(&self, other: &Table) -> bool {
        self.schema == other.schema
            && self.num_rows == other.num_rows
            && self.columns.iter().zip(&other.columns).all(|(a, b)| a.values_eq(b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_table_sets_row_count() {
        let schema = Schema::new(vec![
            Field::new("k", DataType::Int64),
            Field::new("v", DataType::Float64),
        ])
        .unwrap();
        let t = Table::try_new(
            schema,
            vec![Column::from_i64("k", vec![1, 2, 3, 4]), Column::from_f64("v", vec![0.5; 4])],
        )
        .unwrap();
        assert_eq!(t.num_rows(), 4);
        assert_eq!(t.num_columns(), 2);
    }

    #[test]
    fn empty_columns_build_empty_table() {
        let schema = Schema::new(vec![Field::new("k", DataType::Int64)]).unwrap();
        let t = Table::try_new(schema, vec![Column::from_i64("k", vec![])]).unwrap();
        assert_eq!(t.num_rows(), 0);
    }

    #[test]
    fn ragged_columns_are_rejected() {
        let err = Table::from_columns(vec![
            Column::from_i64("a", vec![1, 2, 3]),
            Column::from_i64("b", vec![1, 2, 3, 4]),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::LengthMismatch(_)));
    }

    #[test]
    fn schema_arity_and_dtype_are_checked() {
        let schema = Schema::new(vec![Field::new("k", DataType::Int64)]).unwrap();
        let err = Table::try_new(schema.clone(), vec![Column::from_f64("k", vec![1.0])]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        let err = Table::try_new(schema, vec![]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = Schema::new(vec![Field::new("a", DataType::Int64), Field::new("a", DataType::Utf8)])
            .unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
    }

    #[test]
    fn bad_utf8_offsets() {
        assert!(Utf8Chunk::from_parts(vec![1, 2], b"ab".to_vec()).is_err());
        assert!(Utf8Chunk::from_parts(vec![0, 2, 1], b"ab".to_vec()).is_err());
        assert!(Utf8Chunk::from_parts(vec![0, 1], "é".as_bytes().to_vec()).is_err());
        let ok = Utf8Chunk::from_parts(vec![0, 2, 2], "é".as_bytes().to_vec()).unwrap();
        assert_eq!(ok.iter().collect::<Vec<_>>(), vec!["é", ""]);
    }
}
