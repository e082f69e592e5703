//! On-disk formats: the binary tensor container and the TOML text formats
//! for topologies, model bundles, and fixture tables.
//!
//! Formats are pinned for cross-language reimplementation; see
//! `docs/FORMATS.md` in the repository root for the byte-level and schema
//! documentation.

mod tables;
mod tensor;
mod text;

pub use tables::*;
pub use tensor::*;
pub use text::*;

use crate::netgraph::GraphError;
use crate::numerics::NumericsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("TOML parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad magic; not a tensor container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown tensor encoding tag {0}")]
    BadEncoding(u8),
    #[error("tensor rank {0} unsupported; containers carry rank-4 NCHW")]
    BadRank(u8),
    #[error("container truncated")]
    Truncated,
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
