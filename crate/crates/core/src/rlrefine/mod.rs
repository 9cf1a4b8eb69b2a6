//! Value-guided refinement of a frozen generator: an offline dataset scored
//! by the evaluator, a token-level value model fitted to it, and decoding
//! that reweights the generator by the learned advantages.

mod dataset;
mod perturb;
mod qlearn;
mod sweep;

pub use dataset::{build_offline_dataset, response_text, OfflineSample};
pub use perturb::{
    annotate, perturb_logits, rewrite, rewrite_annotated, RewriteConfig, DEFAULT_BETA,
};
pub use qlearn::{
    expectile, train_q, weighted_expectile, ContextKey, QHyper, QInit, TokenValueModel,
    ValueRefresh, DEFAULT_CONTEXT_WIDTH, DEFAULT_EPOCHS, DEFAULT_GAMMA, DEFAULT_LEARNING_RATE,
    DEFAULT_TAU,
};
pub use sweep::{
    beta_sweep, evaluate_generations, evaluate_or_empty, evaluate_originals, evaluate_rewrites,
    per_job_config, summarize, Spread, SweepRow, DEFAULT_SWEEP_BETAS,
};

/// Advantage vector of `values` at `history` over a `vocab_size` vocabulary.
pub fn advantages(
    values: &TokenValueModel,
    history: &[crate::lm::TokenId],
    vocab_size: usize,
) -> Vec<f64> {
    values.advantages(history, vocab_size)
}
