//! Autoregressive decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ngram::LogitsProvider;
use super::vocab::{TokenId, EOS_ID};

/// Generated text is capped at this many tokens.
pub const DEFAULT_MAX_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DecodeMode {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub max_len: usize,
    pub mode: DecodeMode,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            mode: DecodeMode::Greedy,
        }
    }
}

impl GenerationConfig {
    pub fn greedy() -> Self {
        Self::default()
    }

    pub fn sample(seed: u64) -> Self {
        Self {
            max_len: DEFAULT_MAX_LEN,
            mode: DecodeMode::Sample {
                temperature: 1.0,
                seed,
            },
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }
}

fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

fn temper(probs: &mut [f64], temperature: f64) {
    if temperature == 1.0 {
        return;
    }
    let inv = 1.0 / temperature;
    probs.iter_mut().for_each(|p| *p = p.powf(inv));
}

/// Inverse-CDF draw from unnormalized weights.
fn draw(probs: &[f64], u: f64) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if target < acc {
            return i;
        }
    }
    last_positive
}

/// Decodes after `prompt` until `<eos>` or `max_len` tokens, turning each
/// step's log-probabilities into sampling weights with `weights`. Returns
/// the generated tokens only (a final `<eos>` included).
pub fn decode_with<P, F>(
    model: &P,
    prompt: &[TokenId],
    config: &GenerationConfig,
    mut weights: F,
) -> Vec<TokenId>
where
    P: LogitsProvider + ?Sized,
    F: FnMut(&[TokenId], &[f64]) -> Vec<f64>,
{
    let mut rng = match config.mode {
        DecodeMode::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        DecodeMode::Greedy => None,
    };
    let mut history = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < config.max_len {
        let logits = model.next_log_probs(&history);
        let mut probs = weights(&history, &logits);
        let next = match (&config.mode, rng.as_mut()) {
            (DecodeMode::Sample { temperature, .. }, Some(rng)) => {
                temper(&mut probs, *temperature);
                draw(&probs, rng.gen::<f64>())
            }
            _ => argmax(&probs),
        } as TokenId;
        history.push(next);
        out.push(next);
        if next == EOS_ID {
            break;
        }
    }
    out
}

/// Plain decoding from the model's own distribution.
pub fn generate<P: LogitsProvider + ?Sized>(
    model: &P,
    prompt: &[TokenId],
    config: &GenerationConfig,
) -> Vec<TokenId> {
    decode_with(model, prompt, config, |_, logits| {
        logits.iter().map(|l| l.exp()).collect()
    })
}

/// Drops the trailing `<eos>` marker, if any.
pub fn strip_eos(tokens: &[TokenId]) -> &[TokenId] {
    match tokens.split_last() {
        Some((&EOS_ID, rest)) => rest,
        _ => tokens,
    }
}
