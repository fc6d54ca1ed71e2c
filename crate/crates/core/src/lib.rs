//! Similar-question recommendation over precomputed question embeddings.
//!
//! Three strategies share one corpus: exact cosine nearest neighbours, a
//! self-organizing map per subject, and a full-covariance Gaussian mixture per
//! subject ranked by posterior divergence. [`registry`] routes quiz sessions to
//! strategies, and [`analytics`] summarizes the resulting interaction logs.

// `!(x > 0.0)` is how NaN gets rejected; indexed loops mirror the matrix maths.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod config;
pub mod cosine;
pub mod data;
pub mod error;
pub mod gmm;
pub mod registry;
pub mod rng;
pub mod som;
pub mod testkit;

pub use config::RunConfig;
pub use cosine::{cosine_similarity, recommend_cosine, Recommendation};
pub use data::{load_corpus, read_corpus, save_corpus, write_corpus, Corpus, Embedding, QuestionRecord, Subject};
pub use error::{Error, ErrorKind, Result};
pub use gmm::{fit_gmm, recommend_gmm_cluster, recommend_gmm_kl, select_k, GmmConfig, GmmModel};
pub use registry::{Manifest, Strategy, StrategyRegistry};
pub use som::{recommend_som, train_som, SomConfig, SomModel};
