//! Markdown summary comparing original descriptions, base generations and
//! value-guided rewrites on a set of evaluation jobs.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use crate::corpus::prompt_ids;
use crate::error::{Error, Result};
use crate::ingest::{CandidateProfile, JobPosting};
use crate::lm::generate;
use crate::lm::{GenerationConfig, NGramModel};
use crate::matchengine::Match;
use crate::metrics::{
    binomial_improvement_test, mean_std, mrr_at_k, ndcg_at_k, tpr, tpr_gap, Direction, GapMode,
    GroupedMatchSet, RankedRelevance,
};
use crate::pipeline::{Evaluator, ProfileField};
use crate::rlrefine::{
    evaluate_generations, evaluate_originals, evaluate_rewrites, per_job_config, response_text,
    rewrite, summarize, RewriteConfig, SweepRow, TokenValueModel,
};

/// Cutoffs reported for the ranking metrics.
pub const RANKING_CUTOFFS: [usize; 3] = [10, 25, 50];

/// Marker written when there is nothing to evaluate.
pub const NO_JOBS_MARKER: &str = "_No jobs: nothing to report._";

/// Trained artifacts the report is computed from.
pub struct ReportArtifacts<'a> {
    pub evaluator: &'a Evaluator,
    pub lm: &'a NGramModel,
    pub values: &'a TokenValueModel,
    pub beta: f64,
    pub generation: GenerationConfig,
}

/// A candidate is relevant to a job when their occupation equals the job
/// title, ignoring ASCII case and surrounding whitespace.
pub fn is_relevant(candidate: &CandidateProfile, job: &JobPosting) -> bool {
    candidate
        .occupation
        .as_deref()
        .is_some_and(|o| o.trim().eq_ignore_ascii_case(job.title.trim()))
}

/// Relevance flags of a ranked pool, best first.
pub fn ranked_relevance(
    evaluator: &Evaluator,
    job: &JobPosting,
    pool: &[Match],
) -> RankedRelevance {
    RankedRelevance::new(
        job.id.clone(),
        pool.iter()
            .map(|m| is_relevant(evaluator.index.profile(m.row), job))
            .collect(),
    )
}

/// Pool of `text`; text with no tokens retrieves nothing.
fn pool_of(evaluator: &Evaluator, text: &str) -> Result<Vec<Match>> {
    match evaluator.retrieve(text) {
        Err(Error::EmptyText) => Ok(Vec::new()),
        r => r,
    }
}

/// Gender-labelled match set of a pool with occupation relevance filled in.
fn relevance_match_set(
    evaluator: &Evaluator,
    job: &JobPosting,
    pool: &[Match],
) -> Result<GroupedMatchSet> {
    let mut ms = evaluator.match_set(ProfileField::Gender, &job.id, pool, evaluator.k_select)?;
    ms.relevant = pool
        .iter()
        .map(|m| {
            (
                m.id.clone(),
                is_relevant(evaluator.index.profile(m.row), job),
            )
        })
        .collect::<HashMap<_, _>>();
    Ok(ms)
}

struct Variant {
    row: SweepRow,
    texts: Vec<String>,
}

fn fmt_spread(xs: &[f64]) -> String {
    match mean_std(xs) {
        Some((m, s)) => format!("{m:.4} ± {s:.4}"),
        None => "n/a".to_owned(),
    }
}

fn fmt_value(r: Result<f64>) -> String {
    match r {
        Ok(v) => format!("{v:.4}"),
        Err(_) => "n/a".to_owned(),
    }
}

pub fn run_report(artifacts: &ReportArtifacts<'_>, jobs: &[JobPosting]) -> Result<String> {
    let ev = artifacts.evaluator;
    let lm = artifacts.lm;
    let mut doc = String::new();
    writeln!(doc, "# Fairness report\n").unwrap();
    writeln!(doc, "Evaluation jobs: {}\n", jobs.len()).unwrap();
    if jobs.is_empty() {
        writeln!(doc, "{NO_JOBS_MARKER}").unwrap();
        return Ok(doc);
    }
    writeln!(
        doc,
        "Pool size {}, selected {}, beta {}.\n",
        ev.k_pool, ev.k_select, artifacts.beta
    )
    .unwrap();

    let generated_texts: Vec<String> = jobs
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let prompt = prompt_ids(lm.vocab(), &j.prompt);
            response_text(
                lm,
                &generate(lm, &prompt, &per_job_config(&artifacts.generation, i)),
            )
        })
        .collect();
    let rewritten_texts: Vec<String> = jobs
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let prompt = prompt_ids(lm.vocab(), &j.prompt);
            let config = RewriteConfig {
                beta: artifacts.beta,
                generation: per_job_config(&artifacts.generation, i),
            };
            Ok(response_text(
                lm,
                &rewrite(lm, artifacts.values, &prompt, &config)?,
            ))
        })
        .collect::<Result<_>>()?;

    let variants = [
        Variant {
            row: summarize("Original", None, ev, &evaluate_originals(ev, jobs)?),
            texts: jobs.iter().map(|j| j.text.clone()).collect(),
        },
        Variant {
            row: summarize(
                "Generated",
                Some(0.0),
                ev,
                &evaluate_generations(ev, jobs, lm, &artifacts.generation)?,
            ),
            texts: generated_texts,
        },
        Variant {
            row: summarize(
                format!("Rewrite (beta={})", artifacts.beta),
                Some(artifacts.beta),
                ev,
                &evaluate_rewrites(
                    ev,
                    jobs,
                    lm,
                    artifacts.values,
                    artifacts.beta,
                    &artifacts.generation,
                )?,
            ),
            texts: rewritten_texts,
        },
    ];

    writeln!(doc, "## Diversity score\n").unwrap();
    writeln!(doc, "| Description | Score (mean ± std) |\n|---|---|").unwrap();
    for v in &variants {
        writeln!(doc, "| {} | {} |", v.row.label, fmt_spread(&v.row.scores)).unwrap();
    }

    writeln!(doc, "\n## Impact ratios\n").unwrap();
    for attr in &ev.attributes {
        let name = attr.target.schema().name();
        writeln!(doc, "### {name}\n").unwrap();
        let header: Vec<&str> = variants.iter().map(|v| v.row.label.as_str()).collect();
        writeln!(doc, "| Group | {} |", header.join(" | ")).unwrap();
        writeln!(doc, "|---|{}", "---|".repeat(variants.len())).unwrap();
        for g in attr.target.schema().categories() {
            let cells: Vec<String> = variants
                .iter()
                .map(|v| {
                    v.row
                        .impact_ratios
                        .get(name)
                        .and_then(|gs| gs.get(g))
                        .map_or("n/a".to_owned(), |s| {
                            format!("{:.4} ± {:.4}", s.mean, s.std)
                        })
                })
                .collect();
            writeln!(doc, "| {g} | {} |", cells.join(" | ")).unwrap();
        }
        writeln!(doc).unwrap();
    }

    let gender_pair = ev
        .attributes
        .iter()
        .find(|a| a.field == ProfileField::Gender)
        .map(|a| a.target.schema().categories().to_vec())
        .filter(|c| c.len() >= 2);

    writeln!(doc, "## Ranking quality\n").unwrap();
    let mut header = String::from("| Description |");
    for k in RANKING_CUTOFFS {
        write!(header, " MRR@{k} |").unwrap();
    }
    for k in RANKING_CUTOFFS {
        write!(header, " NDCG@{k} |").unwrap();
    }
    if let Some(c) = &gender_pair {
        write!(header, " TPR gap {}−{} @{} |", c[0], c[1], ev.k_select).unwrap();
    }
    writeln!(doc, "{header}").unwrap();
    let columns = 2 * RANKING_CUTOFFS.len() + usize::from(gender_pair.is_some());
    writeln!(doc, "|---|{}", "---|".repeat(columns)).unwrap();
    for v in &variants {
        let mut rankings = Vec::with_capacity(jobs.len());
        let mut gaps = Vec::new();
        for (job, text) in jobs.iter().zip(&v.texts) {
            let pool = pool_of(ev, text)?;
            rankings.push(ranked_relevance(ev, job, &pool));
            if let Some(c) = &gender_pair {
                let ms = relevance_match_set(ev, job, &pool)?;
                let mut tprs = BTreeMap::new();
                for g in &c[..2] {
                    if let Ok(t) = tpr(&ms, g, ev.k_select) {
                        tprs.insert(g.clone(), t);
                    }
                }
                if let Ok(gap) = tpr_gap(&tprs, &GapMode::Signed(c[0].clone(), c[1].clone())) {
                    gaps.push(gap);
                }
            }
        }
        let mut line = format!("| {} |", v.row.label);
        for k in RANKING_CUTOFFS {
            write!(line, " {} |", fmt_value(mrr_at_k(&rankings, k))).unwrap();
        }
        for k in RANKING_CUTOFFS {
            write!(line, " {} |", fmt_value(ndcg_at_k(&rankings, k))).unwrap();
        }
        if gender_pair.is_some() {
            write!(line, " {} |", fmt_spread(&gaps)).unwrap();
        }
        writeln!(doc, "{line}").unwrap();
    }

    writeln!(doc, "\n## Sign test on diversity score\n").unwrap();
    writeln!(
        doc,
        "| Comparison | Improved | Tied | p-value |\n|---|---|---|---|"
    )
    .unwrap();
    let rewrite_row = &variants[2].row;
    for base in &variants[..2] {
        let pairs: Vec<(f64, f64)> = base
            .row
            .scores
            .iter()
            .copied()
            .zip(rewrite_row.scores.iter().copied())
            .collect();
        let improved = pairs.iter().filter(|(b, a)| a > b).count();
        let tied = pairs.iter().filter(|(b, a)| a == b).count();
        writeln!(
            doc,
            "| {} vs {} | {improved} | {tied} | {} |",
            rewrite_row.label,
            base.row.label,
            match binomial_improvement_test(&pairs, Direction::HigherIsBetter) {
                Ok(p) => format!("{p:.3e}"),
                Err(_) => "n/a".to_owned(),
            }
        )
        .unwrap();
    }
    Ok(doc)
}
