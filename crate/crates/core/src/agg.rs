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

//! Decomposed aggregation kernels.
//!
//! Every aggregate is expressed through four phases: an intermediate state
//! ([`AggState::init`]), a bulk reduction over a contiguous slice
//! ([`AggState::bulk_update`]), an element-wise merge of two states
//! ([`AggState::merge`]) and a final conversion ([`AggState::finalize`]).
//! Mean carries `(sum, count)` and standard deviation `(sum_sq, sum, count)`,
//! so partial results can be combined across chunks, groups and workers
//! before the user-visible value is produced.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::table::wire::Reader;
use crate::table::{Chunk, Column, DataType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AggregateKind {
    Sum,
    Count,
    Min,
    Max,
    Mean,
    StdDev,
}

impl AggregateKind {
    pub const ALL: [AggregateKind; 6] = [
        AggregateKind::Sum,
        AggregateKind::Count,
        AggregateKind::Min,
        AggregateKind::Max,
        AggregateKind::Mean,
        AggregateKind::StdDev,
    ];

    pub fn tag(self) -> u8 {
        match self {
            AggregateKind::Sum => 0,
            AggregateKind::Count => 1,
            AggregateKind::Min => 2,
            AggregateKind::Max => 3,
            AggregateKind::Mean => 4,
            AggregateKind::StdDev => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Number of components in the intermediate state.
    pub fn arity(self) -> usize {
        match self {
            AggregateKind::Mean => 2,
            AggregateKind::StdDev => 3,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AggregateKind::Sum => "sum",
            AggregateKind::Count => "count",
            AggregateKind::Min => "min",
            AggregateKind::Max => "max",
            AggregateKind::Mean => "mean",
            AggregateKind::StdDev => "std",
        }
    }

    /// Dtype of the finalized value for an input of `input`.
    pub fn output_dtype(self, input: DataType) -> DataType {
        match self {
            AggregateKind::Count => DataType::Int64,
            AggregateKind::Mean | AggregateKind::StdDev => DataType::Float64,
            AggregateKind::Sum | AggregateKind::Min | AggregateKind::Max => input,
        }
    }

    /// Names and dtypes of the state components, in wire order.
    pub fn state_components(self, input: DataType) -> Vec<(&'static str, DataType)> {
        match self {
            AggregateKind::Sum => vec![("sum", input)],
            AggregateKind::Count => vec![("count", DataType::Int64)],
            AggregateKind::Min => vec![("min", input)],
            AggregateKind::Max => vec![("max", input)],
            AggregateKind::Mean => vec![("sum", DataType::Float64), ("count", DataType::Int64)],
            AggregateKind::StdDev => vec![
                ("sum_sq", DataType::Float64),
                ("sum", DataType::Float64),
                ("count", DataType::Int64),
            ],
        }
    }
}

impl fmt::Display for AggregateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(AggregateKind::Sum),
            "count" => Ok(AggregateKind::Count),
            "min" => Ok(AggregateKind::Min),
            "max" => Ok(AggregateKind::Max),
            "mean" => Ok(AggregateKind::Mean),
            "std" | "stddev" => Ok(AggregateKind::StdDev),
            other => Err(Error::InvalidArgument(format!("unknown aggregate {other:?}"))),
        }
    }
}

/// A finalized aggregate value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Int64(i64),
    Float64(f64),
    NoValue,
}

impl Scalar {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Scalar::Int64(v) => Some(v as f64),
            Scalar::Float64(v) => Some(v),
            Scalar::NoValue => None,
        }
    }

    /// Bitwise equality (NaN equals NaN with the same payload).
    pub fn bit_eq(self, other: Scalar) -> bool {
        match (self, other) {
            (Scalar::Int64(a), Scalar::Int64(b)) => a == b,
            (Scalar::Float64(a), Scalar::Float64(b)) => a.to_bits() == b.to_bits(),
            (Scalar::NoValue, Scalar::NoValue) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int64(v) => write!(f, "{v}"),
            Scalar::Float64(v) => write!(f, "{v}"),
            Scalar::NoValue => f.write_str("null"),
        }
    }
}

/// A contiguous run of values handed to a bulk reduction. Utf8 data can only
/// be counted, so it is passed by length.
#[derive(Clone, Copy, Debug)]
pub enum ValueSlice<'a> {
    Int64(&'a [i64]),
    Float64(&'a [f64]),
    Opaque(usize),
}

impl<'a> ValueSlice<'a> {
    pub fn len(&self) -> usize {
        match self {
            ValueSlice::Int64(v) => v.len(),
            ValueSlice::Float64(v) => v.len(),
            ValueSlice::Opaque(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn of_chunk(chunk: &'a Chunk) -> Self {
        match chunk {
            Chunk::Int64(v) => ValueSlice::Int64(v),
            Chunk::Float64(v) => ValueSlice::Float64(v),
            Chunk::Utf8(u) => ValueSlice::Opaque(u.len()),
        }
    }

    /// Rows `[start, end)` of this slice.
    pub fn range(&self, start: usize, end: usize) -> ValueSlice<'a> {
        match *self {
            ValueSlice::Int64(v) => ValueSlice::Int64(&v[start..end]),
            ValueSlice::Float64(v) => ValueSlice::Float64(&v[start..end]),
            ValueSlice::Opaque(_) => ValueSlice::Opaque(end - start),
        }
    }

    fn dtype_name(&self) -> &'static str {
        match self {
            ValueSlice::Int64(_) => "Int64",
            ValueSlice::Float64(_) => "Float64",
            ValueSlice::Opaque(_) => "Utf8",
        }
    }
}

/// Intermediate state of one aggregate. `None` marks an empty Min/Max.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AggState {
    SumInt { sum: i64, empty: bool },
    SumFloat { sum: f64, empty: bool },
    Count { count: i64 },
    MinInt(Option<i64>),
    MinFloat(Option<f64>),
    MaxInt(Option<i64>),
    MaxFloat(Option<f64>),
    Mean { sum: f64, count: i64 },
    StdDev { sum_sq: f64, sum: f64, count: i64 },
}

impl AggState {
    /// Identity state for `kind` over values of `input`.
    pub fn init(kind: AggregateKind, input: DataType) -> Result<Self> {
        use AggregateKind as K;
        if kind == K::Count {
            return Ok(AggState::Count { count: 0 });
        }
        if !input.is_numeric() {
            return Err(Error::UnsupportedValueType(format!("{input} for {kind}")));
        }
        let int = input == DataType::Int64;
        Ok(match kind {
            K::Sum if int => AggState::SumInt { sum: 0, empty: true },
            K::Sum => AggState::SumFloat { sum: 0.0, empty: true },
            K::Min if int => AggState::MinInt(None),
            K::Min => AggState::MinFloat(None),
            K::Max if int => AggState::MaxInt(None),
            K::Max => AggState::MaxFloat(None),
            K::Mean => AggState::Mean { sum: 0.0, count: 0 },
            K::StdDev => AggState::StdDev { sum_sq: 0.0, sum: 0.0, count: 0 },
            K::Count => unreachable!(),
        })
    }

    pub fn kind(&self) -> AggregateKind {
        match self {
            AggState::SumInt { .. } | AggState::SumFloat { .. } => AggregateKind::Sum,
            AggState::Count { .. } => AggregateKind::Count,
            AggState::MinInt(_) | AggState::MinFloat(_) => AggregateKind::Min,
            AggState::MaxInt(_) | AggState::MaxFloat(_) => AggregateKind::Max,
            AggState::Mean { .. } => AggregateKind::Mean,
            AggState::StdDev { .. } => AggregateKind::StdDev,
        }
    }

    /// Dtype of the Sum/Min/Max accumulator; `None` for kinds whose
    /// components have fixed dtypes.
    pub fn value_dtype(&self) -> Option<DataType> {
        match self {
            AggState::SumInt { .. } | AggState::MinInt(_) | AggState::MaxInt(_) => Some(DataType::Int64),
            AggState::SumFloat { .. } | AggState::MinFloat(_) | AggState::MaxFloat(_) => {
                Some(DataType::Float64)
            }
            _ => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        match *self {
            AggState::SumInt { empty, .. } | AggState::SumFloat { empty, .. } => empty,
            AggState::Count { count } | AggState::Mean { count, .. } | AggState::StdDev { count, .. } => {
                count == 0
            }
            AggState::MinInt(v) | AggState::MaxInt(v) => v.is_none(),
            AggState::MinFloat(v) | AggState::MaxFloat(v) => v.is_none(),
        }
    }

    fn describe(&self) -> String {
        match self.value_dtype() {
            Some(d) => format!("{}<{d}>", self.kind()),
            None => self.kind().to_string(),
        }
    }

    /// Folds every element of `slice` into the state in one pass.
    pub fn bulk_update(self, slice: ValueSlice<'_>) -> Result<Self> {
        use ValueSlice as V;
        let mismatch = || {
            Error::SchemaMismatch(format!("cannot fold a {} slice into a {} state", slice.dtype_name(), self.describe()))
        };
        Ok(match (self, slice) {
            (AggState::Count { count }, s) => AggState::Count { count: count + s.len() as i64 },
            (AggState::SumInt { sum, empty }, V::Int64(v)) => {
                let total: i128 = v.iter().map(|&x| x as i128).sum::<i128>() + sum as i128;
                let sum = i64::try_from(total).map_err(|_| Error::Overflow("Int64 sum".into()))?;
                AggState::SumInt { sum, empty: empty && v.is_empty() }
            }
            (AggState::SumFloat { mut sum, empty }, V::Float64(v)) => {
                for &x in v {
                    sum += x;
                }
                AggState::SumFloat { sum, empty: empty && v.is_empty() }
            }
            (AggState::MinInt(m), V::Int64(v)) => AggState::MinInt(fold_opt(m, v.iter().copied().min(), i64::min)),
            (AggState::MaxInt(m), V::Int64(v)) => AggState::MaxInt(fold_opt(m, v.iter().copied().max(), i64::max)),
            (AggState::MinFloat(m), V::Float64(v)) => AggState::MinFloat(fold_opt(m, float_extreme(v, f64::min)?, f64::min)),
            (AggState::MaxFloat(m), V::Float64(v)) => AggState::MaxFloat(fold_opt(m, float_extreme(v, f64::max)?, f64::max)),
            (AggState::Mean { mut sum, count }, V::Int64(v)) => {
                for &x in v {
                    sum += x as f64;
                }
                AggState::Mean { sum, count: count + v.len() as i64 }
            }
            (AggState::Mean { mut sum, count }, V::Float64(v)) => {
                for &x in v {
                    sum += x;
                }
                AggState::Mean { sum, count: count + v.len() as i64 }
            }
            (AggState::StdDev { mut sum_sq, mut sum, count }, V::Int64(v)) => {
                for &x in v {
                    let x = x as f64;
                    sum_sq += x * x;
                    sum += x;
                }
                AggState::StdDev { sum_sq, sum, count: count + v.len() as i64 }
            }
            (AggState::StdDev { mut sum_sq, mut sum, count }, V::Float64(v)) => {
                for &x in v {
                    sum_sq += x * x;
                    sum += x;
                }
                AggState::StdDev { sum_sq, sum, count: count + v.len() as i64 }
            }
            _ => return Err(mismatch()),
        })
    }

    /// Component-wise combination of two states of the same kind; empty
    /// states are the identity.
    pub fn merge(self, other: AggState) -> Result<Self> {
        use AggState as S;
        let overflow = |what: &str| Error::Overflow(format!("Int64 {what} merge"));
        Ok(match (self, other) {
            (S::SumInt { sum: a, empty: ea }, S::SumInt { sum: b, empty: eb }) => S::SumInt {
                sum: a.checked_add(b).ok_or_else(|| overflow("sum"))?,
                empty: ea && eb,
            },
            (S::SumFloat { sum: a, empty: ea }, S::SumFloat { sum: b, empty: eb }) => {
                S::SumFloat { sum: a + b, empty: ea && eb }
            }
            (S::Count { count: a }, S::Count { count: b }) => {
                S::Count { count: a.checked_add(b).ok_or_else(|| overflow("count"))? }
            }
            (S::MinInt(a), S::MinInt(b)) => S::MinInt(fold_opt(a, b, i64::min)),
            (S::MaxInt(a), S::MaxInt(b)) => S::MaxInt(fold_opt(a, b, i64::max)),
            (S::MinFloat(a), S::MinFloat(b)) => S::MinFloat(fold_opt(a, b, f64::min)),
            (S::MaxFloat(a), S::MaxFloat(b)) => S::MaxFloat(fold_opt(a, b, f64::max)),
            (S::Mean { sum: sa, count: ca }, S::Mean { sum: sb, count: cb }) => S::Mean {
                sum: sa + sb,
                count: ca.checked_add(cb).ok_or_else(|| overflow("count"))?,
            },
            (
                S::StdDev { sum_sq: qa, sum: sa, count: ca },
                S::StdDev { sum_sq: qb, sum: sb, count: cb },
            ) => S::StdDev {
                sum_sq: qa + qb,
                sum: sa + sb,
                count: ca.checked_add(cb).ok_or_else(|| overflow("count"))?,
            },
            (a, b) => return Err(Error::KindMismatch(a.describe(), b.describe())),
        })
    }

    pub fn finalize(&self) -> Scalar {
        match *self {
            AggState::Count { count } => Scalar::Int64(count),
            _ if self.is_empty() => Scalar::NoValue,
            AggState::SumInt { sum, .. } => Scalar::Int64(sum),
            AggState::SumFloat { sum, .. } => Scalar::Float64(sum),
            AggState::MinInt(v) | AggState::MaxInt(v) => Scalar::Int64(v.unwrap()),
            AggState::MinFloat(v) | AggState::MaxFloat(v) => Scalar::Float64(v.unwrap()),
            AggState::Mean { sum, count } => Scalar::Float64(sum / count as f64),
            AggState::StdDev { sum_sq, sum, count } => {
                let n = count as f64;
                let mean = sum / n;
                let var = sum_sq / n - mean * mean;
                Scalar::Float64(if var < 0.0 { 0.0 } else { var }.sqrt())
            }
        }
    }

    /// Components in declared order. Empty Min/Max report zero.
    pub fn components(&self) -> Vec<Component> {
        use Component::{F, I};
        match *self {
            AggState::SumInt { sum, .. } => vec![I(sum)],
            AggState::SumFloat { sum, .. } => vec![F(sum)],
            AggState::Count { count } => vec![I(count)],
            AggState::MinInt(v) | AggState::MaxInt(v) => vec![I(v.unwrap_or(0))],
            AggState::MinFloat(v) | AggState::MaxFloat(v) => vec![F(v.unwrap_or(0.0))],
            AggState::Mean { sum, count } => vec![F(sum), I(count)],
            AggState::StdDev { sum_sq, sum, count } => vec![F(sum_sq), F(sum), I(count)],
        }
    }

    /// Appends the wire encoding: kind tag, emptiness flag, then each
    /// component as 8 little-endian bytes.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.kind().tag());
        out.push(self.is_empty() as u8);
        for c in self.components() {
            match c {
                Component::I(v) => out.extend_from_slice(&v.to_le_bytes()),
                Component::F(v) => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }

    /// Decodes one state. The encoding does not carry the Sum/Min/Max
    /// accumulator dtype, so the caller supplies it via `value_dtype`.
    pub(crate) fn decode(r: &mut Reader<'_>, value_dtype: DataType) -> Result<Self> {
        let tag = r.u8()?;
        let kind = AggregateKind::from_tag(tag)
            .ok_or_else(|| Error::MalformedPayload(format!("unknown aggregate tag {tag}")))?;
        let empty = match r.u8()? {
            0 => false,
            1 => true,
            f => return Err(Error::MalformedPayload(format!("bad emptiness flag {f}"))),
        };
        let int = value_dtype == DataType::Int64;
        use AggregateKind as K;
        let state = match kind {
            K::Sum if int => AggState::SumInt { sum: r.i64()?, empty },
            K::Sum => AggState::SumFloat { sum: r.f64()?, empty },
            K::Count => AggState::Count { count: r.i64()? },
            K::Min if int => AggState::MinInt((!empty).then_some(r.i64()?)),
            K::Min => AggState::MinFloat((!empty).then_some(r.f64()?)),
            K::Max if int => AggState::MaxInt((!empty).then_some(r.i64()?)),
            K::Max => AggState::MaxFloat((!empty).then_some(r.f64()?)),
            K::Mean => AggState::Mean { sum: r.f64()?, count: r.i64()? },
            K::StdDev => AggState::StdDev { sum_sq: r.f64()?, sum: r.f64()?, count: r.i64()? },
        };
        let negative_count = matches!(
            state,
            AggState::Count { count } | AggState::Mean { count, .. } | AggState::StdDev { count, .. } if count < 0
        );
        if state.is_empty() != empty || negative_count {
            return Err(Error::MalformedPayload(format!("inconsistent {kind} state")));
        }
        Ok(state)
    }

    pub fn decode_from(bytes: &[u8], value_dtype: DataType) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let s = Self::decode(&mut r, value_dtype)?;
        if r.remaining() != 0 {
            return Err(Error::MalformedPayload("trailing bytes after state".into()));
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Component {
    I(i64),
    F(f64),
}

#[inline]
fn fold_opt<T>(a: Option<T>, b: Option<T>, f: impl Fn(T, T) -> T) -> Option<T> {
    match (a, b) {
        (Some(x), Some(y)) => Some(f(x, y)),
        (x, None) => x,
        (None, y) => y,
    }
}

fn float_extreme(v: &[f64], pick: fn(f64, f64) -> f64) -> Result<Option<f64>> {
    let mut it = v.iter().copied();
    let Some(mut acc) = it.next() else { return Ok(None) };
    let mut nan = acc.is_nan();
    for x in it {
        nan |= x.is_nan();
        acc = pick(acc, x);
    }
    if nan {
        return Err(Error::InvalidFloat("min/max input".into()));
    }
    Ok(Some(acc))
}

/// Worker-local state of a whole column: one bulk reduction per chunk, in
/// chunk order, threaded through a single running state.
pub fn aggregate_column(column: &Column, kind: AggregateKind) -> Result<AggState> {
    let mut state = AggState::init(kind, column.dtype())?;
    for chunk in column.chunks() {
        state = state.bulk_update(ValueSlice::of_chunk(chunk))?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::rechunk;
    use std::sync::Arc;

    fn f(kind: AggregateKind) -> AggState {
        AggState::init(kind, DataType::Float64).unwrap()
    }

    #[test]
    fn init_identities() {
        assert_eq!(f(AggregateKind::Sum), AggState::SumFloat { sum: 0.0, empty: true });
        assert_eq!(f(AggregateKind::StdDev), AggState::StdDev { sum_sq: 0.0, sum: 0.0, count: 0 });
        assert!(matches!(
            AggState::init(AggregateKind::Sum, DataType::Utf8),
            Err(Error::UnsupportedValueType(_))
        ));
        assert_eq!(AggState::init(AggregateKind::Count, DataType::Utf8).unwrap(), AggState::Count { count: 0 });
    }

    #[test]
    fn bulk_examples() {
        let xs = [1.0, 2.0, 3.0];
        let s = f(AggregateKind::Sum).bulk_update(ValueSlice::Float64(&xs)).unwrap();
        assert_eq!(s, AggState::SumFloat { sum: 6.0, empty: false });
        let s = f(AggregateKind::Mean).bulk_update(ValueSlice::Float64(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(s, AggState::Mean { sum: 10.0, count: 4 });
        // oracle: Σx², Σx, n one element at a time
        let (mut q, mut s1, mut n) = (0.0, 0.0, 0);
        for x in xs {
            q += x * x;
            s1 += x;
            n += 1;
        }
        let s = f(AggregateKind::StdDev).bulk_update(ValueSlice::Float64(&xs)).unwrap();
        assert_eq!(s, AggState::StdDev { sum_sq: q, sum: s1, count: n });
        assert_eq!(s, AggState::StdDev { sum_sq: 14.0, sum: 6.0, count: 3 });
    }

    #[test]
    fn int_sum_overflow_is_an_error() {
        let s = AggState::init(AggregateKind::Sum, DataType::Int64).unwrap();
        let err = s.bulk_update(ValueSlice::Int64(&[i64::MAX, 1])).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
        // intermediate excursions that come back into range are fine
        let ok = s.bulk_update(ValueSlice::Int64(&[i64::MAX, 1, -1])).unwrap();
        assert_eq!(ok.finalize(), Scalar::Int64(i64::MAX));
        let a = AggState::SumInt { sum: i64::MAX, empty: false };
        assert!(matches!(a.merge(AggState::SumInt { sum: 1, empty: false }), Err(Error::Overflow(_))));
    }

    #[test]
    fn mismatched_slice_dtype() {
        let s = AggState::init(AggregateKind::Sum, DataType::Int64).unwrap();
        assert!(s.bulk_update(ValueSlice::Float64(&[1.0])).is_err());
        assert!(f(AggregateKind::Min).bulk_update(ValueSlice::Opaque(3)).is_err());
    }

    #[test]
    fn nan_handling() {
        let xs = [1.0, f64::NAN, 2.0];
        let s = f(AggregateKind::Sum).bulk_update(ValueSlice::Float64(&xs)).unwrap();
        assert!(s.finalize().as_f64().unwrap().is_nan());
        let s = f(AggregateKind::StdDev).bulk_update(ValueSlice::Float64(&xs)).unwrap();
        assert!(s.finalize().as_f64().unwrap().is_nan());
        assert!(matches!(f(AggregateKind::Min).bulk_update(ValueSlice::Float64(&xs)), Err(Error::InvalidFloat(_))));
        assert!(matches!(f(AggregateKind::Max).bulk_update(ValueSlice::Float64(&[f64::NAN])), Err(Error::InvalidFloat(_))));
    }

    #[test]
    fn merge_examples() {
        let a = AggState::Mean { sum: 10.0, count: 4 };
        assert_eq!(a.merge(AggState::Mean { sum: 5.0, count: 1 }).unwrap(), AggState::Mean { sum: 15.0, count: 5 });
        assert_eq!(AggState::MinInt(None).merge(AggState::MinInt(Some(3))).unwrap(), AggState::MinInt(Some(3)));
        let a = AggState::StdDev { sum_sq: 14.0, sum: 6.0, count: 3 };
        let b = AggState::StdDev { sum_sq: 25.0, sum: 5.0, count: 1 };
        // oracle: fold the concatenated input [1,2,3,5]
        let whole = f(AggregateKind::StdDev).bulk_update(ValueSlice::Float64(&[1.0, 2.0, 3.0, 5.0])).unwrap();
        assert_eq!(a.merge(b).unwrap(), whole);
        assert_eq!(whole, AggState::StdDev { sum_sq: 39.0, sum: 11.0, count: 4 });
        assert!(matches!(a.merge(AggState::Count { count: 1 }), Err(Error::KindMismatch(..))));
        assert!(matches!(
            AggState::SumInt { sum: 1, empty: false }.merge(AggState::SumFloat { sum: 1.0, empty: false }),
            Err(Error::KindMismatch(..))
        ));
    }

    #[test]
    fn finalize_examples() {
        assert_eq!(AggState::Mean { sum: 10.0, count: 4 }.finalize(), Scalar::Float64(2.5));
        let std = AggState::StdDev { sum_sq: 14.0, sum: 6.0, count: 3 }.finalize().as_f64().unwrap();
        // oracle: population std of [1,2,3] from its definition
        let xs = [1.0f64, 2.0, 3.0];
        let mu = xs.iter().sum::<f64>() / 3.0;
        let direct = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!((std - direct).abs() <= 1e-12 * direct);
        assert!((std - 0.816496580927726).abs() < 1e-15);
        assert_eq!(AggState::MinFloat(None).finalize(), Scalar::NoValue);
        assert_eq!(AggState::Count { count: 0 }.finalize(), Scalar::Int64(0));
        assert_eq!(f(AggregateKind::Sum).finalize(), Scalar::NoValue);
        assert_eq!(AggState::MaxInt(Some(-4)).finalize(), Scalar::Int64(-4));
        // radicand clamps at zero
        let s = AggState::StdDev { sum_sq: 0.1 * 0.1 * 3.0, sum: 0.3, count: 3 };
        assert!(s.finalize().as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn aggregate_column_examples() {
        let c = Column::new(
            "x",
            DataType::Float64,
            vec![Arc::new(Chunk::Float64(vec![1.0, 2.0])), Arc::new(Chunk::Float64(vec![3.0, 4.0]))],
        )
        .unwrap();
        assert_eq!(aggregate_column(&c, AggregateKind::Mean).unwrap(), AggState::Mean { sum: 10.0, count: 4 });
        let empty = Column::from_i64("x", vec![]);
        assert_eq!(aggregate_column(&empty, AggregateKind::Sum).unwrap(), AggState::SumInt { sum: 0, empty: true });
        let c = Column::from_i64("x", vec![7, -2, 7]);
        assert_eq!(aggregate_column(&c, AggregateKind::Max).unwrap(), AggState::MaxInt(Some(7)));
        let s = Column::from_strs("s", ["a", "b"]);
        assert_eq!(aggregate_column(&s, AggregateKind::Count).unwrap(), AggState::Count { count: 2 });
        assert!(aggregate_column(&s, AggregateKind::Mean).is_err());
    }

    #[test]
    fn chunking_is_bitwise_neutral_for_float_sums() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 1e3).collect();
        let c = Column::from_f64("x", xs);
        let whole = aggregate_column(&c, AggregateKind::Sum).unwrap();
        for k in [1, 7, 64, 999] {
            assert_eq!(aggregate_column(&rechunk(&c, k).unwrap(), AggregateKind::Sum).unwrap(), whole);
        }
    }

    #[test]
    fn state_wire_round_trip() {
        let states = [
            AggState::SumInt { sum: -5, empty: false },
            AggState::SumFloat { sum: 0.0, empty: true },
            AggState::Count { count: 9 },
            AggState::MinInt(None),
            AggState::MaxFloat(Some(-1.5)),
            AggState::Mean { sum: 10.0, count: 4 },
            AggState::StdDev { sum_sq: 14.0, sum: 6.0, count: 3 },
        ];
        for s in states {
            let mut buf = Vec::new();
            s.encode(&mut buf);
            assert_eq!(buf.len(), 2 + 8 * s.kind().arity());
            let dtype = s.value_dtype().unwrap_or(DataType::Float64);
            assert_eq!(AggState::decode_from(&buf, dtype).unwrap(), s);
        }
        let mut buf = Vec::new();
        AggState::Mean { sum: 1.0, count: 1 }.encode(&mut buf);
        assert_eq!(buf[0], 4);
        assert_eq!(buf[1], 0);
        assert_eq!(&buf[2..10], &1.0f64.to_le_bytes());
        assert_eq!(&buf[10..18], &1i64.to_le_bytes());
        assert!(AggState::decode_from(&[9, 0], DataType::Int64).is_err());
        assert!(AggState::decode_from(&buf[..17], DataType::Int64).is_err());
    }
}
