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

//! Little-endian table wire format.
//!
//! ```text
//! "CAG1" | u16 column count | per column:
//!     u8 type tag (0 Int64, 1 Float64, 2 Utf8) | u16 name length | name bytes
//!     | u64 row count | payload
//! ```
//!
//! Numeric payloads are `rows * 8` bytes. Utf8 payloads are `rows + 1` u32
//! offsets, a u64 byte length and the bytes. Every column travels as one chunk.

use super::{Chunk, Column, DataType, Field, Schema, Table, Utf8Chunk};
use crate::error::{Error, Result};

pub const TABLE_MAGIC: &[u8; 4] = b"CAG1";

pub fn serialize_table(table: &Table) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len_hint(table));
    write_table(table, &mut out);
    out
}

fn encoded_len_hint(table: &Table) -> usize {
    6 + table
        .columns()
        .iter()
        .map(|c| 11 + c.name().len() + 8 * c.len() + 16)
        .sum::<usize>()
}

pub fn write_table(table: &Table, out: &mut Vec<u8>) {
    out.extend_from_slice(TABLE_MAGIC);
    let ncols = u16::try_from(table.num_columns()).expect("more than 65535 columns");
    out.extend_from_slice(&ncols.to_le_bytes());
    for col in table.columns() {
        out.push(col.dtype().tag());
        let name = col.name().as_bytes();
        let name_len = u16::try_from(name.len()).expect("column name longer than 65535 bytes");
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(col.len() as u64).to_le_bytes());
        match col.dtype() {
            DataType::Int64 => {
                for c in col.chunks() {
                    for v in c.as_i64().unwrap() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            DataType::Float64 => {
                for c in col.chunks() {
                    for v in c.as_f64().unwrap() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            DataType::Utf8 => {
                let mut base = 0u32;
                out.extend_from_slice(&0u32.to_le_bytes());
                for c in col.chunks() {
                    let u = c.as_utf8().unwrap();
                    for &o in &u.offsets()[1..] {
                        out.extend_from_slice(&(base + o).to_le_bytes());
                    }
                    base += *u.offsets().last().unwrap();
                }
                out.extend_from_slice(&(base as u64).to_le_bytes());
                for c in col.chunks() {
                    out.extend_from_slice(c.as_utf8().unwrap().data());
                }
            }
        }
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::MalformedPayload(format!(
                "truncated: need {n} bytes at offset {}, have {}",
                self.pos,
                self.buf.len() - self.pos
            ))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn len_of(&mut self, rows: u64, width: usize) -> Result<usize> {
        usize::try_from(rows)
            .ok()
            .and_then(|r| r.checked_mul(width))
            .filter(|&n| n <= self.remaining())
            .ok_or_else(|| Error::MalformedPayload(format!("row count {rows} exceeds payload")))
    }
}

pub fn deserialize_table(bytes: &[u8]) -> Result<Table> {
    let mut r = Reader::new(bytes);
    let table = read_table(&mut r)?;
    if r.remaining() != 0 {
        return Err(Error::MalformedPayload(format!("{} trailing bytes", r.remaining())));
    }
    Ok(table)
}

pub(crate) fn read_table(r: &mut Reader<'_>) -> Result<Table> {
    if r.take(4)? != TABLE_MAGIC {
        return Err(Error::MalformedPayload("bad magic".into()));
    }
    let ncols = r.u16()? as usize;
    let mut fields = Vec::with_capacity(ncols);
    let mut columns = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let tag = r.u8()?;
        let dtype = DataType::from_tag(tag)
            .ok_or_else(|| Error::MalformedPayload(format!("unknown type tag {tag}")))?;
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::MalformedPayload("column name is not utf8".into()))?
            .to_owned();
        let rows = r.u64()?;
        let chunk = match dtype {
            DataType::Int64 => {
                let n = r.len_of(rows, 8)?;
                Chunk::Int64(
                    r.take(n)?.chunks_exact(8).map(|b| i64::from_le_bytes(b.try_into().unwrap())).collect(),
                )
            }
            DataType::Float64 => {
                let n = r.len_of(rows, 8)?;
                Chunk::Float64(
                    r.take(n)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
                )
            }
            DataType::Utf8 => {
                let n = r.len_of(rows.saturating_add(1), 4)?;
                let offsets: Vec<u32> =
                    r.take(n)?.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
                let byte_len = r.u64()?;
                let n = r.len_of(byte_len, 1)?;
                Chunk::Utf8(Utf8Chunk::from_parts(offsets, r.take(n)?.to_vec())?)
            }
        };
        fields.push(Field::new(&name, dtype));
        columns.push(Column::from_chunk(name, chunk));
    }
    let schema = Schema::new(fields).map_err(|e| Error::MalformedPayload(e.to_string()))?;
    Table::try_new(schema, columns).map_err(|e| Error::MalformedPayload(e.to_string()))
}
