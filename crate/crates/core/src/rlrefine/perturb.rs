//! Value-guided decoding: the base model's next-token distribution is
//! reweighted by `exp(beta * advantage)`.

use serde::{Deserialize, Serialize};

use super::qlearn::TokenValueModel;
use crate::error::{Error, Result};
use crate::lm::{decode_with, GenerationConfig, LogitsProvider, TokenId};
use crate::pipeline::TokenAdvantage;

/// Default perturbation strength for rewrites.
pub const DEFAULT_BETA: f64 = 8.0;

/// `softmax(base + beta * adv)`; at `beta == 0` this is `exp(base)` as is.
pub fn perturb_logits(base: &[f64], adv: &[f64], beta: f64) -> Result<Vec<f64>> {
    if base.len() != adv.len() {
        return Err(Error::DimMismatch {
            expected: base.len(),
            got: adv.len(),
        });
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be nonnegative, got {beta}"
        )));
    }
    if beta == 0.0 {
        return Ok(base.iter().map(|l| l.exp()).collect());
    }
    let scores: Vec<f64> = base.iter().zip(adv).map(|(b, a)| b + beta * a).collect();
    let max = scores
        .iter()
        .copied()
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter("no token has finite weight".into()));
    }
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewriteConfig {
    pub beta: f64,
    pub generation: GenerationConfig,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            generation: GenerationConfig::greedy(),
        }
    }
}

impl RewriteConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }
}

/// Decodes from `prompt` under the perturbed distribution. Returns the
/// generated tokens together with the advantage of each chosen token.
pub fn rewrite_annotated<P: LogitsProvider + ?Sized>(
    lm: &P,
    values: &TokenValueModel,
    prompt: &[TokenId],
    config: &RewriteConfig,
) -> Result<(Vec<TokenId>, Vec<f64>)> {
    if !(config.beta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta must be nonnegative, got {}",
            config.beta
        )));
    }
    let v = lm.vocab().len();
    let mut chosen_adv: Vec<Vec<f64>> = Vec::new();
    let tokens = decode_with(lm, prompt, &config.generation, |history, logits| {
        let adv = values.advantages(history, v);
        let probs = perturb_logits(logits, &adv, config.beta)
            .unwrap_or_else(|_| logits.iter().map(|l| l.exp()).collect());
        chosen_adv.push(adv);
        probs
    });
    let advantages = tokens
        .iter()
        .zip(&chosen_adv)
        .map(|(&t, adv)| adv[t as usize])
        .collect();
    Ok((tokens, advantages))
}

pub fn rewrite<P: LogitsProvider + ?Sized>(
    lm: &P,
    values: &TokenValueModel,
    prompt: &[TokenId],
    config: &RewriteConfig,
) -> Result<Vec<TokenId>> {
    rewrite_annotated(lm, values, prompt, config).map(|(t, _)| t)
}

/// Pairs each token's surface form with its advantage, skipping `<eos>`.
pub fn annotate<P: LogitsProvider + ?Sized>(
    lm: &P,
    tokens: &[TokenId],
    advantages: &[f64],
) -> Vec<TokenAdvantage> {
    tokens
        .iter()
        .zip(advantages)
        .filter(|(&t, _)| t != crate::lm::EOS_ID)
        .map(|(&t, &a)| TokenAdvantage {
            token: lm.vocab().token(t).to_owned(),
            advantage: a,
        })
        .collect()
}
