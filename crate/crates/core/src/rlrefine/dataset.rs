//! Offline dataset: every response is scored once by the evaluator, so
//! training never queries the matching engine.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{prompt_ids, response_ids};
use crate::error::{Error, Result};
use crate::ingest::JobPosting;
use crate::lm::{generate, strip_eos, GenerationConfig, NGramModel, TokenId};
use crate::pipeline::Evaluator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSample {
    pub job_id: String,
    pub prompt: Vec<TokenId>,
    pub response: Vec<TokenId>,
    /// Terminal diversity score of the response text.
    pub reward: f64,
}

/// Text the evaluator sees for a generated response.
pub fn response_text(lm: &NGramModel, response: &[TokenId]) -> String {
    lm.vocab().decode(strip_eos(response))
}

/// Scores each job's original description plus `samples_per_prompt - 1`
/// sampled generations. Sampling seeds are drawn from one stream seeded by
/// `seed`, in job order.
pub fn build_offline_dataset(
    jobs: &[JobPosting],
    lm: &NGramModel,
    evaluator: &Evaluator,
    samples_per_prompt: usize,
    seed: u64,
    max_len: usize,
) -> Result<Vec<OfflineSample>> {
    if samples_per_prompt == 0 {
        return Err(Error::InvalidParameter(
            "samples_per_prompt must be at least 1".into(),
        ));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(jobs.len() * samples_per_prompt);
    for job in jobs {
        let prompt = prompt_ids(lm.vocab(), &job.prompt);
        out.push(OfflineSample {
            job_id: job.id.clone(),
            prompt: prompt.clone(),
            response: response_ids(lm.vocab(), &job.text, max_len),
            reward: evaluator.reward(&job.text)?,
        });
        for _ in 1..samples_per_prompt {
            let config = GenerationConfig::sample(seeds.next_u64()).with_max_len(max_len);
            let response = generate(lm, &prompt, &config);
            let reward = evaluator.reward(&response_text(lm, &response))?;
            out.push(OfflineSample {
                job_id: job.id.clone(),
                prompt: prompt.clone(),
                response,
                reward,
            });
        }
    }
    Ok(out)
}
