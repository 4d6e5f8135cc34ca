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

//! In-memory columnar tables with distributed aggregation and group-by.
//!
//! Aggregates are decomposed into an intermediate state, a bulk reduction
//! over contiguous column slices, an element-wise merge and a finalization
//! step ([`agg`]). Group-by runs as a hash aggregation, a pipeline over
//! sorted runs, or an indices-of-groups gather ([`groupby`]). The
//! [`dist`] module executes both across P workers in bulk synchronous
//! supersteps, with an optional early-aggregation combiner ahead of the
//! hash shuffle.

pub mod agg;
pub mod dist;
pub mod error;
pub mod groupby;
pub mod io;
pub mod table;

pub use agg::{aggregate_column, AggState, AggregateKind, Scalar, ValueSlice};
pub use error::{Error, Result};
pub use table::{Chunk, Column, DataType, Field, Schema, Table};
