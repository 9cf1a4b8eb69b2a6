//! Request and response bodies shared by the CLI and the HTTP service.

use serde::{Deserialize, Serialize};

use autorefine::corpus::prompt_ids;
use autorefine::ingest::free_text_prompt;
use autorefine::pipeline::TokenAdvantage;
use autorefine::rlrefine::{annotate, response_text, rewrite_annotated};
use autorefine::{
    Config, EvaluationResponse, Evaluator, GenerationConfig, NGramModel, Result, RewriteConfig,
    TokenValueModel,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub description: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewriteRequest {
    pub description: String,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Sampling seed; decoding is greedy without one.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResponse {
    pub rewritten: String,
    pub token_advantages: Vec<TokenAdvantage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub before: Option<EvaluationResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after: Option<EvaluationResponse>,
}

/// Greedy without a seed, seeded sampling with one.
pub fn generation_config(config: &Config, seed: Option<u64>) -> GenerationConfig {
    seed.map_or_else(GenerationConfig::greedy, GenerationConfig::sample)
        .with_max_len(config.max_len)
}

/// Rewrites one description from `prompt`, evaluating both texts when an
/// evaluator is given.
pub fn rewrite_description(
    lm: &NGramModel,
    values: &TokenValueModel,
    evaluator: Option<&Evaluator>,
    description: &str,
    prompt: Option<&str>,
    rewrite: RewriteConfig,
) -> Result<RewriteResponse> {
    let prompt = prompt.map_or_else(|| free_text_prompt(description), str::to_owned);
    let ids = prompt_ids(lm.vocab(), &prompt);
    let (tokens, advantages) = rewrite_annotated(lm, values, &ids, &rewrite)?;
    let rewritten = response_text(lm, &tokens);
    let (before, after) = match evaluator {
        Some(ev) => (
            Some(ev.evaluate(description)?),
            Some(ev.evaluate(&rewritten)?),
        ),
        None => (None, None),
    };
    Ok(RewriteResponse {
        token_advantages: annotate(lm, &tokens, &advantages),
        rewritten,
        before,
        after,
    })
}
