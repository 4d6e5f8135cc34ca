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

use std::borrow::Cow;
use std::cmp::Ordering;

use super::hash::Fnv1a;
use super::{Chunk, Column, Table, Utf8Builder};
use crate::error::{Error, Result};

/// Contiguous views of a table's key columns, with row-level hashing,
/// equality and ordering of key tuples.
#[derive(Debug)]
pub struct KeyColumns<'a> {
    names: Vec<&'a str>,
    cols: Vec<Cow<'a, Chunk>>,
    rows: usize,
}

impl<'a> KeyColumns<'a> {
    pub fn new(table: &'a Table, key_cols: &[usize]) -> Result<Self> {
        let mut names = Vec::with_capacity(key_cols.len());
        let mut cols = Vec::with_capacity(key_cols.len());
        for &k in key_cols {
            let c = table.column(k)?;
            if !c.dtype().is_key() {
                return Err(Error::UnsupportedKeyType(format!("{} (column {})", c.dtype(), c.name())));
            }
            names.push(c.name());
            cols.push(c.contiguous());
        }
        Ok(KeyColumns { names, cols, rows: table.num_rows() })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_keys(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn hash_row(&self, row: usize) -> u64 {
        let mut h = Fnv1a::default();
        for (i, c) in self.cols.iter().enumerate() {
            if i > 0 {
                h.write_separator();
            }
            match c.as_ref() {
                Chunk::Int64(v) => h.write_i64(v[row]),
                Chunk::Utf8(u) => h.write(u.bytes(row)),
                Chunk::Float64(_) => unreachable!("rejected at construction"),
            }
        }
        h.finish()
    }

    /// Hash of every row, computed column-at-a-time for the single Int64 key case.
    pub fn hash_all(&self) -> Vec<u64> {
        if let [c] = self.cols.as_slice() {
            if let Chunk::Int64(v) = c.as_ref() {
                return v
                    .iter()
                    .map(|&x| {
                        let mut h = Fnv1a::default();
                        h.write_i64(x);
                        h.finish()
                    })
                    .collect();
            }
        }
        (0..self.rows).map(|r| self.hash_row(r)).collect()
    }

    #[inline]
    pub fn rows_eq(&self, a: usize, other: &KeyColumns<'_>, b: usize) -> bool {
        self.cols.iter().zip(&other.cols).all(|(x, y)| match (x.as_ref(), y.as_ref()) {
            (Chunk::Int64(x), Chunk::Int64(y)) => x[a] == y[b],
            (Chunk::Utf8(x), Chunk::Utf8(y)) => x.bytes(a) == y.bytes(b),
            _ => false,
        })
    }

    #[inline]
    pub fn cmp_rows(&self, a: usize, b: usize) -> Ordering {
        for c in &self.cols {
            let o = match c.as_ref() {
                Chunk::Int64(v) => v[a].cmp(&v[b]),
                Chunk::Utf8(u) => u.bytes(a).cmp(u.bytes(b)),
                Chunk::Float64(_) => unreachable!("rejected at construction"),
            };
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    }

    /// The single Int64 key, when that is the whole key tuple.
    pub fn single_i64(&self) -> Option<&[i64]> {
        match self.cols.as_slice() {
            [c] => c.as_i64(),
            _ => None,
        }
    }

    /// Key columns gathered at `rows`, keeping the source names.
    pub fn gather(&self, rows: &[usize]) -> Vec<Column> {
        self.names
            .iter()
            .zip(&self.cols)
            .map(|(name, c)| {
                let chunk = match c.as_ref() {
                    Chunk::Int64(v) => Chunk::Int64(rows.iter().map(|&r| v[r]).collect()),
                    Chunk::Utf8(u) => {
                        let mut b = Utf8Builder::with_capacity(rows.len());
                        for &r in rows {
                            b.push_bytes(u.bytes(r));
                        }
                        Chunk::Utf8(b.finish())
                    }
                    Chunk::Float64(_) => unreachable!("rejected at construction"),
                };
                Column::from_chunk(*name, chunk)
            })
            .collect()
    }
}
