//! Exact k-nearest-neighbor search over fixed-length data series.
//!
//! Series are summarized with PAA and iSAX words, organized in an iSAX tree,
//! and searched by engines that prune with lower bounds while always
//! returning the exact answers. Ties in distance resolve to the lower id.

pub mod answers;
pub mod api;
pub mod data;
pub mod distance;
pub mod error;
pub mod index;
pub mod query;
pub mod search;
pub mod select;
pub mod summary;
pub mod synthetic;

pub use api::{Engine, KnnMatrix, SearchSession};
pub use data::{Dataset, LoadMode};
pub use distance::DistanceKind;
pub use error::{Error, Result};
pub use index::{IndexConfig, IsaxIndex, RawStorage};
pub use search::{Answer, EngineKind, QueryResult, SearchOptions, SearchStats};
pub use select::{select_engine, EngineChoice, EnvironmentProfile, Recommendation};
