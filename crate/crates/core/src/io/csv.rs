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

//! CSV with a header row. Column types are inferred: Int64 when every value
//! parses as an integer, else Float64 when every value parses as a float,
//! else Utf8. Floats are written with 17 significant digits so that a
//! write/read cycle reproduces them bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::table::{Chunk, Column, Table, Utf8Builder, DEFAULT_CHUNK_ROWS};

pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
    let f = File::open(path.as_ref())?;
    read_csv_from(BufReader::new(f))
}

struct Inferred {
    raw: Utf8Builder,
    int: bool,
    float: bool,
}

pub fn read_csv_from(input: impl Read) -> Result<Table> {
    let mut rdr = ::csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(input);
    let parse_err = |line: u64, e: ::csv::Error| Error::ParseError { line, reason: e.to_string() };
    let header = rdr.headers().map_err(|e| parse_err(1, e))?.clone();
    let mut cols: Vec<Inferred> = header
        .iter()
        .map(|_| Inferred { raw: Utf8Builder::default(), int: true, float: true })
        .collect();
    let mut record = ::csv::StringRecord::new();
    let mut rows = 0usize;
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(line, e));
            }
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != cols.len() {
            return Err(Error::ParseError {
                line,
                reason: format!("expected {} fields, found {}", cols.len(), record.len()),
            });
        }
        for (c, field) in cols.iter_mut().zip(record.iter()) {
            if c.int && field.parse::<i64>().is_err() {
                c.int = false;
            }
            if !c.int && c.float && field.parse::<f64>().is_err() {
                c.float = false;
            }
            c.raw.push(field);
        }
        rows += 1;
    }

    let columns = header
        .iter()
        .zip(cols)
        .map(|(name, c)| {
            let raw = c.raw.finish();
            let chunk = if c.int {
                Chunk::Int64(raw.iter().map(|s| s.parse().unwrap()).collect())
            } else if c.float {
                Chunk::Float64(raw.iter().map(|s| s.parse().unwrap()).collect())
            } else {
                Chunk::Utf8(raw)
            };
            chunked(name, chunk)
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(columns.iter().all(|c| c.len() == rows));
    Table::from_columns(columns)
}

/// Splits one buffer into [`DEFAULT_CHUNK_ROWS`]-row chunks.
pub(crate) fn chunked(name: &str, chunk: Chunk) -> Result<Column> {
    if chunk.len() <= DEFAULT_CHUNK_ROWS {
        return Ok(Column::from_chunk(name, chunk));
    }
    let dtype = chunk.dtype();
    let chunks = (0..chunk.len())
        .step_by(DEFAULT_CHUNK_ROWS)
        .map(|s| Arc::new(chunk.slice(s, DEFAULT_CHUNK_ROWS.min(chunk.len() - s))))
        .collect();
    Column::new(name, dtype, chunks)
}

pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path.as_ref())?;
    let mut w = BufWriter::new(f);
    write_csv_to(table, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to(table: &Table, out: impl Write) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(out);
    let csv_err = |e: ::csv::Error| Error::IoFailure(std::io::Error::other(e));
    w.write_record(table.schema().fields().iter().map(|f| f.name.as_str())).map_err(csv_err)?;
    let cols: Vec<_> = table.columns().iter().map(|c| c.contiguous()).collect();
    let mut fields: Vec<String> = vec![String::new(); cols.len()];
    for r in 0..table.num_rows() {
        for (field, c) in fields.iter_mut().zip(&cols) {
            field.clear();
            use std::fmt::Write as _;
            match c.as_ref() {
                Chunk::Int64(v) => write!(field, "{}", v[r]).unwrap(),
                Chunk::Float64(v) => write!(field, "{:.16e}", v[r]).unwrap(),
                Chunk::Utf8(u) => field.push_str(u.value(r)),
            }
        }
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
