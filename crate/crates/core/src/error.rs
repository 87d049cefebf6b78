use std::io;

use thiserror::Error;

use crate::model::BlockIndex5D;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while writing, transforming or reading a
/// container.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("invalid extent: max must exceed min on every spatial axis")]
    InvalidExtent,

    #[error("position {position:?} outside block of size {size:?}")]
    PositionOutOfRange { position: [usize; 5], size: [usize; 5] },

    #[error("block index {index} outside the block grid {grid:?}")]
    BlockIndexOutOfRange { index: BlockIndex5D, grid: [usize; 5] },

    #[error("block {0} was already copied")]
    DuplicateBlock(BlockIndex5D),

    #[error("block data has {actual} bytes, expected {expected}")]
    BlockLength { expected: usize, actual: usize },

    #[error("writer already finished")]
    WriterFinished,

    #[error("{missing} of {total} input blocks were never copied")]
    MissingBlocks { missing: u64, total: u64 },

    #[error("buffer of {len} bytes is not a multiple of element size {element_size}")]
    ShuffleLength { len: usize, element_size: usize },

    #[error("invalid compression: {0}")]
    InvalidCompression(String),

    #[error("corrupt compressed stream: {0}")]
    CorruptStream(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("compression pipeline is closed")]
    PipelineClosed,

    #[error("chunk {chunk} was already written")]
    DuplicateChunk { chunk: String },

    #[error("chunk {chunk} does not exist in the level grid")]
    InvalidChunk { chunk: String },

    #[error("{count} chunks were never written, first: {first:?}")]
    MissingChunks { count: usize, first: Vec<String> },

    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),

    #[error("not a container file (bad magic)")]
    BadMagic,

    #[error("truncated or unfinalized container file")]
    Truncated,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("malformed container: {0}")]
    Malformed(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
