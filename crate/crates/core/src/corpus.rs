//! Supervised training data for the generator: each job contributes its
//! rendered prompt followed by its original description.

use crate::error::Result;
use crate::ingest::JobPosting;
use crate::lm::{train_lm_conditional, NGramModel, TokenId, Vocabulary, BOS_ID, EOS_ID};

/// `<bos>` followed by the prompt tokens; decoding continues from here.
pub fn prompt_ids(vocab: &Vocabulary, prompt: &str) -> Vec<TokenId> {
    let mut ids = vec![BOS_ID];
    ids.extend(vocab.encode(prompt));
    ids
}

/// Description tokens capped at `max_len` including the closing `<eos>`.
pub fn response_ids(vocab: &Vocabulary, text: &str, max_len: usize) -> Vec<TokenId> {
    let mut ids = vocab.encode(text);
    ids.truncate(max_len.saturating_sub(1));
    ids.push(EOS_ID);
    ids
}

/// Prompt-then-description training sequence for one job.
pub fn sft_sequence(vocab: &Vocabulary, job: &JobPosting, max_len: usize) -> Vec<TokenId> {
    let mut seq = prompt_ids(vocab, &job.prompt);
    seq.extend(response_ids(vocab, &job.text, max_len));
    seq
}

/// The first `fraction` of `jobs`, at least one when any exist.
pub fn training_subset(jobs: &[JobPosting], fraction: f64) -> &[JobPosting] {
    let n = ((jobs.len() as f64 * fraction).round() as usize).clamp(jobs.len().min(1), jobs.len());
    &jobs[..n]
}

/// Builds the vocabulary over prompts and descriptions and fits the n-gram
/// generator to each description given its prompt.
pub fn train_generator(
    jobs: &[JobPosting],
    vocab_size: usize,
    order: usize,
    alpha: f64,
    max_len: usize,
) -> Result<NGramModel> {
    let vocab = Vocabulary::build(
        jobs.iter()
            .flat_map(|j| [j.prompt.as_str(), j.text.as_str()]),
        vocab_size,
    );
    let pairs: Vec<(Vec<TokenId>, Vec<TokenId>)> = jobs
        .iter()
        .map(|j| {
            (
                prompt_ids(&vocab, &j.prompt),
                response_ids(&vocab, &j.text, max_len),
            )
        })
        .collect();
    train_lm_conditional(&pairs, vocab, order, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: &str, text: &str) -> JobPosting {
        JobPosting {
            id: id.into(),
            title: "Engineer".into(),
            company: "Acme".into(),
            location: "Paris".into(),
            technologies: vec!["Rust".into()],
            remote: false,
            text: text.into(),
            prompt: String::new(),
        }
        .with_prompt()
        .unwrap()
    }

    #[test]
    fn response_is_capped() {
        let v = Vocabulary::build(["a b c d e"], 100);
        assert_eq!(response_ids(&v, "a b c d e", 3).len(), 3);
        assert_eq!(*response_ids(&v, "a b c d e", 3).last().unwrap(), EOS_ID);
    }

    #[test]
    fn subset_rounds_and_keeps_one() {
        let jobs: Vec<_> = (0..10).map(|i| job(&i.to_string(), "x")).collect();
        assert_eq!(training_subset(&jobs, 0.1).len(), 1);
        assert_eq!(training_subset(&jobs, 0.01).len(), 1);
        assert_eq!(training_subset(&jobs, 1.0).len(), 10);
    }

    #[test]
    fn generator_learns_prompt_to_description() {
        let jobs = vec![
            job("1", "we build compilers"),
            job("2", "we build compilers"),
        ];
        let m = train_generator(&jobs, 1000, 3, 0.01, 256).unwrap();
        let prompt = prompt_ids(m.vocab(), &jobs[0].prompt);
        let out = crate::lm::generate(&m, &prompt, &crate::lm::GenerationConfig::greedy());
        assert_eq!(m.vocab().decode(&out), "we build compilers");
    }
}
