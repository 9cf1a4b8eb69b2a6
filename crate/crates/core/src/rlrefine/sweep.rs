//! Perturbation-strength sweep over a set of evaluation jobs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::response_text;
use super::perturb::{rewrite, RewriteConfig};
use super::qlearn::TokenValueModel;
use crate::corpus::prompt_ids;
use crate::error::{Error, Result};
use crate::ingest::JobPosting;
use crate::lm::{generate, DecodeMode, GenerationConfig, NGramModel};
use crate::metrics::mean_std;
use crate::pipeline::{EvaluationResponse, Evaluator};

/// Strengths reported by default.
pub const DEFAULT_SWEEP_BETAS: [f64; 7] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];

/// Mean and standard deviation across jobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    /// `None` for the original descriptions.
    pub beta: Option<f64>,
    pub score: Spread,
    /// attribute -> group -> impact ratio across the jobs where it is defined.
    pub impact_ratios: BTreeMap<String, BTreeMap<String, Spread>>,
    /// Per-job scores in job order.
    pub scores: Vec<f64>,
}

/// Sampling seed for job `i`, so every strength sees the same random stream
/// for a given job.
pub fn per_job_config(base: &GenerationConfig, i: usize) -> GenerationConfig {
    let mut cfg = *base;
    if let DecodeMode::Sample { seed, .. } = &mut cfg.mode {
        *seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    cfg
}

/// Evaluates `text`; text with no tokens yields `None`.
pub fn evaluate_or_empty(evaluator: &Evaluator, text: &str) -> Result<Option<EvaluationResponse>> {
    match evaluator.evaluate(text) {
        Ok(r) => Ok(Some(r)),
        Err(Error::EmptyText) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Aggregates per-job evaluations. Empty texts score [`Evaluator::worst_score`]
/// and contribute no impact ratios.
pub fn summarize(
    label: impl Into<String>,
    beta: Option<f64>,
    evaluator: &Evaluator,
    evaluations: &[Option<EvaluationResponse>],
) -> SweepRow {
    let scores: Vec<f64> = evaluations
        .iter()
        .map(|e| {
            e.as_ref()
                .map_or(evaluator.worst_score(), |r| r.diversity.score)
        })
        .collect();
    let mut irs: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in evaluations.iter().flatten() {
        for (attr, groups) in &r.impact_ratios {
            for (g, v) in groups {
                irs.entry(attr.clone())
                    .or_default()
                    .entry(g.clone())
                    .or_default()
                    .push(*v);
            }
        }
    }
    let spread = |xs: &[f64]| {
        let (mean, std) = mean_std(xs).unwrap_or((0.0, 0.0));
        Spread { mean, std }
    };
    SweepRow {
        label: label.into(),
        beta,
        score: spread(&scores),
        impact_ratios: irs
            .into_iter()
            .map(|(a, gs)| (a, gs.into_iter().map(|(g, xs)| (g, spread(&xs))).collect()))
            .collect(),
        scores,
    }
}

/// Evaluations of the original descriptions.
pub fn evaluate_originals(
    evaluator: &Evaluator,
    jobs: &[JobPosting],
) -> Result<Vec<Option<EvaluationResponse>>> {
    jobs.iter()
        .map(|j| evaluate_or_empty(evaluator, &j.text))
        .collect()
}

/// Evaluations of unperturbed generations.
pub fn evaluate_generations(
    evaluator: &Evaluator,
    jobs: &[JobPosting],
    lm: &NGramModel,
    generation: &GenerationConfig,
) -> Result<Vec<Option<EvaluationResponse>>> {
    jobs.iter()
        .enumerate()
        .map(|(i, j)| {
            let prompt = prompt_ids(lm.vocab(), &j.prompt);
            let out = generate(lm, &prompt, &per_job_config(generation, i));
            evaluate_or_empty(evaluator, &response_text(lm, &out))
        })
        .collect()
}

/// Evaluations of rewrites at one strength.
pub fn evaluate_rewrites(
    evaluator: &Evaluator,
    jobs: &[JobPosting],
    lm: &NGramModel,
    values: &TokenValueModel,
    beta: f64,
    generation: &GenerationConfig,
) -> Result<Vec<Option<EvaluationResponse>>> {
    jobs.iter()
        .enumerate()
        .map(|(i, j)| {
            let prompt = prompt_ids(lm.vocab(), &j.prompt);
            let config = RewriteConfig {
                beta,
                generation: per_job_config(generation, i),
            };
            let out = rewrite(lm, values, &prompt, &config)?;
            evaluate_or_empty(evaluator, &response_text(lm, &out))
        })
        .collect()
}

/// One row for the originals, then one per strength in `betas`.
pub fn beta_sweep(
    betas: &[f64],
    jobs: &[JobPosting],
    lm: &NGramModel,
    values: &TokenValueModel,
    evaluator: &Evaluator,
    generation: &GenerationConfig,
) -> Result<Vec<SweepRow>> {
    let mut rows = vec![summarize(
        "original",
        None,
        evaluator,
        &evaluate_originals(evaluator, jobs)?,
    )];
    for &beta in betas {
        let evals = evaluate_rewrites(evaluator, jobs, lm, values, beta, generation)?;
        rows.push(summarize(
            format!("rewrite (beta={beta})"),
            Some(beta),
            evaluator,
            &evals,
        ));
    }
    Ok(rows)
}
