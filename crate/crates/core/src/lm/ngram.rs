//! Additive-smoothed n-gram model.
//!
//! Training is maximum likelihood by counting: for a fixed-order n-gram
//! model the smoothed count ratios minimize corpus negative log-likelihood
//! (up to the smoothing prior), so there is no iterative optimizer.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{TokenId, Vocabulary, BOS_ID, EOS_ID};
use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Source of next-token log-probabilities.
pub trait LogitsProvider {
    fn vocab(&self) -> &Vocabulary;

    /// Log-probabilities over the whole vocabulary given everything decoded
    /// so far (prompt included).
    fn next_log_probs(&self, context: &[TokenId]) -> Vec<f64>;
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

fn check_params(order: usize, alpha: f64) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidParameter(
            "n-gram order must be at least 1".into(),
        ));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "smoothing alpha must be positive, got {alpha}"
        )));
    }
    Ok(())
}

/// Counts n-grams over token sequences. Each sequence should start with
/// `<bos>`; contexts are left-padded with `<bos>`.
pub fn train_lm(
    corpus: &[Vec<TokenId>],
    vocab: Vocabulary,
    order: usize,
    alpha: f64,
) -> Result<NGramModel> {
    let spans: Vec<(&[TokenId], usize)> = corpus.iter().map(|s| (s.as_slice(), 1)).collect();
    count_spans(&spans, vocab, order, alpha)
}

/// Fits the response given the prompt: every `(prompt, response)` pair is
/// read as one sequence, but only tokens of the response are counted as
/// predictions. Prompts should start with `<bos>`.
pub fn train_lm_conditional(
    pairs: &[(Vec<TokenId>, Vec<TokenId>)],
    vocab: Vocabulary,
    order: usize,
    alpha: f64,
) -> Result<NGramModel> {
    let joined: Vec<(Vec<TokenId>, usize)> = pairs
        .iter()
        .map(|(p, r)| (join_prompt_response(p, r), p.len().max(1)))
        .collect();
    let spans: Vec<(&[TokenId], usize)> = joined
        .iter()
        .map(|(s, start)| (s.as_slice(), *start))
        .collect();
    count_spans(&spans, vocab, order, alpha)
}

/// Counts the prediction of `seq[i]` for every `i >= start`.
fn count_spans(
    spans: &[(&[TokenId], usize)],
    vocab: Vocabulary,
    order: usize,
    alpha: f64,
) -> Result<NGramModel> {
    check_params(order, alpha)?;
    if spans.iter().all(|(s, start)| s.len() <= *start) {
        return Err(Error::EmptyCorpus);
    }
    let mut model = NGramModel::untrained(vocab, order, alpha)?;
    for (seq, start) in spans {
        for i in *start..seq.len() {
            let ctx = model.context_key(&seq[..i]);
            let entry = model.counts.entry(ctx).or_default();
            entry.total += 1;
            *entry.next.entry(seq[i]).or_default() += 1;
        }
    }
    Ok(model)
}

impl NGramModel {
    /// A model with no counts, which predicts uniformly everywhere.
    pub fn untrained(vocab: Vocabulary, order: usize, alpha: f64) -> Result<Self> {
        check_params(order, alpha)?;
        Ok(Self {
            order,
            alpha,
            vocab,
            counts: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// The last `order - 1` tokens of `history`, left-padded with `<bos>`.
    pub fn context_key(&self, history: &[TokenId]) -> Vec<TokenId> {
        let width = self.order - 1;
        let tail = &history[history.len().saturating_sub(width)..];
        let mut key = vec![BOS_ID; width - tail.len()];
        key.extend_from_slice(tail);
        key
    }

    /// Smoothed conditional probability of `token` after `history`.
    pub fn prob(&self, history: &[TokenId], token: TokenId) -> f64 {
        let v = self.vocab.len() as f64;
        match self.counts.get(&self.context_key(history)) {
            None => 1.0 / v,
            Some(c) => {
                let n = c.next.get(&token).copied().unwrap_or(0) as f64;
                (n + self.alpha) / (c.total as f64 + self.alpha * v)
            }
        }
    }

    /// Writes the versioned snapshot: vocabulary, order, alpha and the
    /// sorted `(context, token, count)` triples.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut triples: Vec<(Vec<TokenId>, TokenId, u64)> = self
            .counts
            .iter()
            .flat_map(|(ctx, c)| c.next.iter().map(|(&t, &n)| (ctx.clone(), t, n)))
            .collect();
        triples.sort();
        let snap = LmSnapshot {
            format: LM_FORMAT.into(),
            version: LM_VERSION,
            order: self.order,
            alpha: self.alpha,
            vocab: self.vocab.clone(),
            counts: triples,
        };
        let json = serde_json::to_string(&snap).map_err(|e| Error::Snapshot(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: LmSnapshot =
            serde_json::from_str(&raw).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.format != LM_FORMAT || snap.version != LM_VERSION {
            return Err(Error::Snapshot(format!(
                "expected {LM_FORMAT} v{LM_VERSION}, found {} v{}",
                snap.format, snap.version
            )));
        }
        let mut model = NGramModel::untrained(snap.vocab, snap.order, snap.alpha)?;
        let v = model.vocab.len() as TokenId;
        for (ctx, token, n) in snap.counts {
            if ctx.len() != model.order - 1 || token >= v || ctx.iter().any(|&t| t >= v) {
                return Err(Error::Snapshot(
                    "count entry does not fit the vocabulary".into(),
                ));
            }
            let entry = model.counts.entry(ctx).or_default();
            entry.total += n;
            *entry.next.entry(token).or_default() += n;
        }
        Ok(model)
    }
}

const LM_FORMAT: &str = "autorefine-ngram";
const LM_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LmSnapshot {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: Vec<(Vec<TokenId>, TokenId, u64)>,
}

impl LogitsProvider for NGramModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_log_probs(&self, context: &[TokenId]) -> Vec<f64> {
        next_logits(self, context)
    }
}

/// Log of the smoothed conditionals given the last `order - 1` tokens.
pub fn next_logits(model: &NGramModel, context: &[TokenId]) -> Vec<f64> {
    let v = model.vocab.len();
    match model.counts.get(&model.context_key(context)) {
        None => vec![-(v as f64).ln(); v],
        Some(c) => {
            let denom = c.total as f64 + model.alpha * v as f64;
            let mut out = vec![(model.alpha / denom).ln(); v];
            for (&t, &n) in &c.next {
                out[t as usize] = ((n as f64 + model.alpha) / denom).ln();
            }
            out
        }
    }
}

/// Exp of the mean negative log-probability of `ids[1..]`, each predicted
/// from everything before it.
pub fn perplexity_of_ids<P: LogitsProvider + ?Sized>(model: &P, ids: &[TokenId]) -> Result<f64> {
    if ids.len() < 2 {
        return Err(Error::EmptyText);
    }
    let mut nll = 0.0;
    for i in 1..ids.len() {
        nll -= model.next_log_probs(&ids[..i])[ids[i] as usize];
    }
    Ok((nll / (ids.len() - 1) as f64).exp())
}

/// Perplexity of `text` framed by `<bos>` and `<eos>`.
pub fn perplexity<P: LogitsProvider + ?Sized>(model: &P, text: &str) -> Result<f64> {
    let ids = model.vocab().tokenize(text);
    if ids.len() <= 2 {
        return Err(Error::EmptyText);
    }
    perplexity_of_ids(model, &ids)
}

/// Perplexity of `response` alone, each token predicted from the prompt
/// and the response before it.
pub fn response_perplexity<P: LogitsProvider + ?Sized>(
    model: &P,
    prompt: &[TokenId],
    response: &[TokenId],
) -> Result<f64> {
    if response.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut history = prompt.to_vec();
    let mut nll = 0.0;
    for &t in response {
        nll -= model.next_log_probs(&history)[t as usize];
        history.push(t);
    }
    Ok((nll / response.len() as f64).exp())
}

/// Mean per-token negative log-likelihood (nats) over several sequences.
pub fn cross_entropy<P: LogitsProvider + ?Sized>(model: &P, corpus: &[Vec<TokenId>]) -> f64 {
    let mut nll = 0.0;
    let mut n = 0usize;
    for seq in corpus {
        for i in 1..seq.len() {
            nll -= model.next_log_probs(&seq[..i])[seq[i] as usize];
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        nll / n as f64
    }
}

/// Appends `<eos>`-terminated response ids to a prompt for training.
pub fn join_prompt_response(prompt: &[TokenId], response: &[TokenId]) -> Vec<TokenId> {
    let mut seq = prompt.to_vec();
    seq.extend_from_slice(response);
    if seq.last() != Some(&EOS_ID) {
        seq.push(EOS_ID);
    }
    seq
}
