//! Fairness-driven refinement of job descriptions.
//!
//! A description is embedded and matched against a candidate pool; the gap
//! between the pool's demographics and a target distribution gives a
//! diversity score. An n-gram generator is then steered toward higher
//! scores by a token-level value model learned offline.

// `!(x >= 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod fairness;
pub mod ingest;
pub mod lm;
pub mod matchengine;
pub mod metrics;
pub mod pipeline;
pub mod probe;
pub mod report;
pub mod rlrefine;
pub mod synthetic;

pub use config::Config;
pub use embed::{Embedder, HashEmbedder, PrefixStripping};
pub use error::{Error, Result};
pub use fairness::{
    combined_reward, diversity_score, wasserstein1, AttributeSchema, CategoricalDistribution,
    DiversityReport,
};
pub use ingest::{CandidateProfile, JobPosting};
pub use lm::{GenerationConfig, NGramModel, Vocabulary};
pub use matchengine::{build_index, CandidateIndex, HardFilter, Match, Predicate};
pub use pipeline::{EvaluationResponse, Evaluator, ProfileField};
pub use rlrefine::{train_q, QHyper, RewriteConfig, TokenValueModel};
