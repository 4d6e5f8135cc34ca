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

use std::sync::Arc;

use super::keys::KeyColumns;
use super::{Chunk, Column, Table, Utf8Builder};
use crate::error::{Error, Result};

/// Splits `column` into chunks of exactly `target_chunk_rows` rows (the last may be shorter).
pub fn rechunk(column: &Column, target_chunk_rows: usize) -> Result<Column> {
    if target_chunk_rows == 0 {
        return Err(Error::InvalidArgument("target chunk rows must be positive".into()));
    }
    let all = column.contiguous();
    let chunks = (0..column.len())
        .step_by(target_chunk_rows)
        .map(|start| {
            let len = target_chunk_rows.min(column.len() - start);
            Arc::new(all.slice(start, len))
        })
        .collect();
    Column::new(column.name(), column.dtype(), chunks)
}

pub(crate) fn gather_chunk(chunk: &Chunk, indices: &[usize]) -> Chunk {
    match chunk {
        Chunk::Int64(v) => Chunk::Int64(indices.iter().map(|&i| v[i]).collect()),
        Chunk::Float64(v) => Chunk::Float64(indices.iter().map(|&i| v[i]).collect()),
        Chunk::Utf8(u) => {
            let mut b = Utf8Builder::with_capacity(indices.len());
            for &i in indices {
                b.push_bytes(u.bytes(i));
            }
            Chunk::Utf8(b.finish())
        }
    }
}

fn gather_unchecked(table: &Table, indices: &[usize]) -> Table {
    let cols = table
        .columns()
        .iter()
        .map(|c| Arc::new(Column::from_chunk(c.name(), gather_chunk(&c.contiguous(), indices))))
        .collect();
    Table::from_arcs(table.schema_arc().clone(), cols).expect("gather preserves schema")
}

/// Row `i` of the output is row `indices[i]` of the input.
pub fn take_rows(table: &Table, indices: &[usize]) -> Result<Table> {
    let n = table.num_rows();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfBounds { index: bad, len: n });
    }
    Ok(gather_unchecked(table, indices))
}

/// Stable sort permutation of the rows by their key tuples.
pub(crate) fn sort_permutation(keys: &KeyColumns<'_>) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..keys.num_rows()).collect();
    if let Some(v) = keys.single_i64() {
        perm.sort_by_key(|&i| v[i]);
    } else {
        perm.sort_by(|&a, &b| keys.cmp_rows(a, b));
    }
    perm
}

/// Stable lexicographic sort on `key_cols`.
pub fn sort_by_keys(table: &Table, key_cols: &[usize]) -> Result<Table> {
    let keys = KeyColumns::new(table, key_cols)?;
    let perm = sort_permutation(&keys);
    Ok(gather_unchecked(table, &perm))
}

/// Splits rows into `num_partitions` tables by `fnv1a(key) mod num_partitions`,
/// keeping input order within each partition.
pub fn hash_partition(table: &Table, key_cols: &[usize], num_partitions: usize) -> Result<Vec<Table>> {
    if num_partitions == 0 {
        return Err(Error::InvalidArgument("partition count must be at least 1".into()));
    }
    let keys = KeyColumns::new(table, key_cols)?;
    if num_partitions == 1 {
        return Ok(vec![table.clone()]);
    }
    let p = num_partitions as u64;
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); num_partitions];
    for (row, h) in keys.hash_all().into_iter().enumerate() {
        targets[(h % p) as usize].push(row);
    }
    drop(keys);
    Ok(targets.iter().map(|rows| gather_unchecked(table, rows)).collect())
}

/// Concatenates tables with identical schemas without copying chunks.
pub fn concat_tables(tables: &[Table]) -> Result<Table> {
    let first = tables
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot concatenate zero tables".into()))?;
    if let Some(t) = tables.iter().find(|t| t.schema() != first.schema()) {
        return Err(Error::SchemaMismatch(format!(
            "cannot concatenate {:?} with {:?}",
            first.schema(),
            t.schema()
        )));
    }
    let cols = first
        .schema()
        .fields()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let chunks = tables
                .iter()
                .flat_map(|t| t.columns()[i].chunks().iter().cloned())
                .collect();
            Column::new(&f.name, f.dtype, chunks).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    Table::from_arcs(first.schema_arc().clone(), cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{fnv1a64, DataType};

    fn kv(keys: Vec<i64>, vals: &[&str]) -> Table {
        Table::from_columns(vec![Column::from_i64("k", keys), Column::from_strs("v", vals)]).unwrap()
    }

    fn chunk_lens(c: &Column) -> Vec<usize> {
        c.chunks().iter().map(|c| c.len()).collect()
    }

    #[test]
    fn rechunk_splits_evenly() {
        let c = Column::from_i64("x", (1..=10).collect());
        let r = rechunk(&c, 4).unwrap();
        assert_eq!(chunk_lens(&r), vec![4, 4, 2]);
        assert!(r.values_eq(&c));
        assert_eq!(chunk_lens(&rechunk(&Column::from_i64("x", vec![1; 5]), 1000).unwrap()), vec![5]);
        let empty = rechunk(&Column::from_i64("x", vec![]), 4).unwrap();
        assert_eq!(empty.len(), 0);
        assert!(empty.chunks().is_empty());
        assert!(rechunk(&c, 0).is_err());
    }

    #[test]
    fn sort_orders_keys_and_permutes_values() {
        let t = kv(vec![3, 1, 2], &["c", "a", "b"]);
        let s = sort_by_keys(&t, &[0]).unwrap();
        assert!(s.values_eq(&kv(vec![1, 2, 3], &["a", "b", "c"])));
    }

    #[test]
    fn sort_is_stable_on_ties() {
        let t = kv(vec![1, 1, 2, 2, 2], &["a", "b", "c", "d", "e"]);
        assert!(sort_by_keys(&t, &[0]).unwrap().values_eq(&t));
        let t = kv(vec![2, 1, 2, 1], &["w", "x", "y", "z"]);
        assert!(sort_by_keys(&t, &[0]).unwrap().values_eq(&kv(vec![1, 1, 2, 2], &["x", "z", "w", "y"])));
    }

    #[test]
    fn two_column_sort_matches_brute_force() {
        let t = kv(vec![1, 1, 0], &["b", "a", "z"]);
        let s = sort_by_keys(&t, &[0, 1]).unwrap();
        // brute force: sort the materialized row tuples
        let mut rows = [(1i64, "b"), (1, "a"), (0, "z")];
        rows.sort();
        let expect = kv(rows.iter().map(|r| r.0).collect(), &rows.iter().map(|r| r.1).collect::<Vec<_>>());
        assert!(s.values_eq(&expect));
    }

    #[test]
    fn float_keys_rejected() {
        let t = Table::from_columns(vec![Column::from_f64("x", vec![1.0])]).unwrap();
        assert!(matches!(sort_by_keys(&t, &[0]), Err(Error::UnsupportedKeyType(_))));
        assert!(matches!(hash_partition(&t, &[0], 2), Err(Error::UnsupportedKeyType(_))));
    }

    #[test]
    fn partition_one_is_identity() {
        let t = kv(vec![5, 3, 9], &["a", "b", "c"]);
        let parts = hash_partition(&t, &[0], 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert!(parts[0].values_eq(&t));
    }

    #[test]
    fn partition_routes_by_fnv() {
        let keys: Vec<i64> = (0..8).collect();
        let t = Table::from_columns(vec![Column::from_i64("k", keys.clone())]).unwrap();
        let parts = hash_partition(&t, &[0], 2).unwrap();
        let mut seen = Vec::new();
        for (p, part) in parts.iter().enumerate() {
            let col = part.columns()[0].contiguous();
            for &k in col.as_i64().unwrap() {
                assert_eq!(fnv1a64(&k.to_le_bytes()) % 2, p as u64);
                seen.push(k);
            }
        }
        seen.sort();
        assert_eq!(seen, keys);
    }

    #[test]
    fn equal_composite_keys_share_partition() {
        let t = kv(vec![1, 2, 1], &["a", "b", "a"]);
        for p in 1..9 {
            let parts = hash_partition(&t, &[0, 1], p).unwrap();
            let holders: Vec<usize> = parts
                .iter()
                .map(|t| t.columns()[0].contiguous().as_i64().unwrap().iter().filter(|&&k| k == 1).count())
                .collect();
            assert!(holders.contains(&2), "P={p}: {holders:?}");
        }
    }

    #[test]
    fn take_rows_gathers_and_checks_bounds() {
        let t = kv(vec![0, 1, 2], &["a", "b", "c"]);
        assert!(take_rows(&t, &[0, 1, 2]).unwrap().values_eq(&t));
        assert!(take_rows(&t, &[2, 0]).unwrap().values_eq(&kv(vec![2, 0], &["c", "a"])));
        assert!(matches!(take_rows(&t, &[5]), Err(Error::IndexOutOfBounds { index: 5, len: 3 })));
    }

    #[test]
    fn concat_keeps_chunks() {
        let a = kv(vec![1], &["a"]);
        let b = kv(vec![2, 3], &["b", "c"]);
        let c = concat_tables(&[a, b]).unwrap();
        assert_eq!(c.num_rows(), 3);
        assert_eq!(c.columns()[0].chunks().len(), 2);
        assert_eq!(c.columns()[1].dtype(), DataType::Utf8);
    }
}
