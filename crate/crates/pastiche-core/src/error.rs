use thiserror::Error;

/// Errors produced by the pipeline library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON input. `offset` is the byte position of the failure.
    #[error("json parse error at byte {offset} (line {line}, column {column}): {message}")]
    JsonParse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// A mask or compressed counts string violates the RLE format.
    #[error("mask format error: {0}")]
    MaskFormat(String),

    /// Annotations referencing missing images/categories, duplicate ids, etc.
    #[error("referential integrity error: {0}")]
    Integrity(String),

    /// Pool manifest ingestion failure; messages carry the offending line numbers.
    #[error("manifest error: {0}")]
    Manifest(String),

    /// Dataset failed the invariant validator.
    #[error("validation failed with {} violation(s):\n{}", .0.len(), .0.join("\n"))]
    Validation(Vec<String>),

    #[error("pool has no usable records")]
    EmptyPool,

    #[error("dataset has no annotations; scale statistics are undefined")]
    EmptyDataset,

    /// Configuration error; `path` is the offending key path.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("image error for `{path}`: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
