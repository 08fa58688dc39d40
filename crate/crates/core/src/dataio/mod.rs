//! Embedding files, manifests, pooling and speaker folds.

mod emb1;
mod folds;
mod manifest;
mod pool;

pub use emb1::{
    decode_matrix, encode_matrix, read_embedding_file, read_header, write_embedding_file,
    EmbeddingFileHeader, HEADER_LEN,
};
pub use folds::{loso_folds, loso_folds_for, FoldSpec};
pub use manifest::{load_dataset, write_manifest, Dataset, ManifestEntry};
pub use pool::{pool_first, pool_mean};
