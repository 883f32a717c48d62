//! Refinement of synthetic image-caption datasets.
//!
//! Each caption retrieves `K` candidate images, every candidate is scored
//! with a cycle-consistency retrieval scorer, the caption is reassigned to
//! its best image, and the lowest-scoring pairs are pruned so that
//! `floor(N * tau)` remain.
//!
//! * [`embstore`]: `SYNCEMB1` matrices, ID sidecars and caption corpora.
//! * [`simkernel`]: exact blocked top-K similarity search.
//! * [`selection`]: candidate selection strategies.
//! * [`scoring`]: cosine and cycle-consistency scorers.
//! * [`pipeline`]: the end-to-end refinement, manifests and ablation sweeps.
//! * [`synthbench`]: planted benchmarks, audits and a brute-force oracle.
//! * [`cli`]: the `pairsift` command line.

mod atomic;
pub mod cli;
pub mod embstore;
pub mod error;
pub mod pipeline;
pub mod scoring;
pub mod selection;
pub mod simkernel;
pub mod synthbench;

pub use embstore::{load_bundle, BundlePaths, DatasetBundle, EmbeddingMatrix};
pub use error::{Error, Result};
pub use pipeline::{refine, refine_one_to_one, PipelineConfig, RefinedManifest, ScoredTriple};
pub use scoring::{ScorerConfig, ScorerKind};
pub use selection::{CandidateSet, SelectionKind, SelectionStrategy};
