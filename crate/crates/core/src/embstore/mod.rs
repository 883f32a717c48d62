//! Embedding storage: the `SYNCEMB1` matrix format, ID sidecars, caption
//! corpora and the aligned [`DatasetBundle`] every other stage reads from.
//!
//! Matrices are immutable once loaded and can be shared across threads.

mod bundle;
mod corpus;
mod format;
mod matrix;

pub use bundle::{load_bundle, BundlePaths, DatasetBundle};
pub use corpus::{read_corpus, write_corpus, CaptionCorpus, CaptionRecord};
pub use format::{
    encode_header, ids_path, read_ids, read_matrix, read_matrix_with, write_ids, write_matrix,
    NormCheck, ReadOptions, FLAG_NORMALIZED, HEADER_LEN, MAGIC,
};
pub use matrix::{EmbeddingMatrix, NORM_TOLERANCE};
