use std::collections::BTreeMap;

use autorefine::fairness::CategoricalDistribution;
use autorefine::lm::GenerationConfig;
use autorefine::metrics::{mrr_at_k, RankedRelevance};
use autorefine::probe::{gender_probe, gendered_text};
use autorefine::report::{is_relevant, run_report, ReportArtifacts, NO_JOBS_MARKER};
use autorefine::rlrefine::{beta_sweep, evaluate_generations, summarize};
use autorefine::synthetic::{train_world, PipelineParams, TrainedWorld, WorldParams};
use autorefine::{
    build_index, wasserstein1, CandidateProfile, Config, Embedder, HardFilter, HashEmbedder,
    JobPosting,
};

fn small_world() -> TrainedWorld {
    let params = PipelineParams {
        world: WorldParams {
            candidates: 300,
            train_jobs: 40,
            eval_jobs: 12,
            ..WorldParams::default()
        },
        ..PipelineParams::default()
    };
    train_world(&Config::default(), &params).unwrap()
}

fn artifacts(tw: &TrainedWorld) -> ReportArtifacts<'_> {
    ReportArtifacts {
        evaluator: &tw.evaluator,
        lm: &tw.lm,
        values: &tw.values,
        beta: 8.0,
        generation: GenerationConfig::sample(5),
    }
}

#[test]
fn report_without_jobs_has_marker() {
    let tw = small_world();
    let doc = run_report(&artifacts(&tw), &[]).unwrap();
    assert!(doc.contains(NO_JOBS_MARKER));
    assert!(!doc.contains("## Diversity score"));
}

#[test]
fn report_is_reproducible_and_cells_match_metrics() {
    let tw = small_world();
    let jobs = &tw.world.eval_jobs;
    let a = run_report(&artifacts(&tw), jobs).unwrap();
    let b = run_report(&artifacts(&tw), jobs).unwrap();
    assert_eq!(a, b);
    for section in [
        "## Diversity score",
        "## Impact ratios",
        "### gender",
        "### geolocation",
        "## Ranking quality",
        "## Sign test",
    ] {
        assert!(a.contains(section), "missing {section}");
    }

    let rankings: Vec<RankedRelevance> = jobs
        .iter()
        .map(|j| {
            let pool = tw.evaluator.retrieve(&j.text).unwrap();
            let flags = pool
                .iter()
                .map(|m| is_relevant(tw.evaluator.index.profile(m.row), j))
                .collect();
            RankedRelevance::new(j.id.clone(), flags)
        })
        .collect();
    let mrr10 = format!("{:.4}", mrr_at_k(&rankings, 10).unwrap());
    let original_row = a
        .lines()
        .skip_while(|l| !l.starts_with("## Ranking quality"))
        .find(|l| l.starts_with("| Original |"))
        .unwrap();
    let first_cell = original_row.split('|').nth(2).unwrap().trim();
    assert_eq!(first_cell, mrr10);
}

#[test]
fn zero_strength_sweep_row_is_the_base_generation() {
    let tw = small_world();
    let jobs = &tw.world.eval_jobs;
    let generation = GenerationConfig::sample(17);
    let rows = beta_sweep(&[0.0], jobs, &tw.lm, &tw.values, &tw.evaluator, &generation).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].beta, None);
    let base = summarize(
        "base",
        Some(0.0),
        &tw.evaluator,
        &evaluate_generations(&tw.evaluator, jobs, &tw.lm, &generation).unwrap(),
    );
    assert_eq!(rows[1].scores, base.scores);
    assert_eq!(rows[1].impact_ratios, base.impact_ratios);
}

fn profile(i: usize, text: &str, gender: &str, geo: &str, e: &dyn Embedder) -> CandidateProfile {
    CandidateProfile {
        id: format!("p{i:02}"),
        text: text.to_owned(),
        gender: gender.to_owned(),
        geolocation: geo.to_owned(),
        occupation: None,
        embedding: Some(e.embed(text).unwrap()),
    }
}

#[test]
fn evaluation_composes_retrieval_and_scoring() {
    let embedder = HashEmbedder::new(64);
    let words = ["rust", "python", "cloud", "data", "mobile"];
    let geos = ["NA", "Europe", "Asia", "NA"];
    let cands: Vec<CandidateProfile> = (0..20)
        .map(|i| {
            let text = format!("{} {} engineer {i}", words[i % 5], words[(i / 5) % 5]);
            let gender = if i % 3 == 0 { "male" } else { "female" };
            profile(i, &text, gender, geos[i % 4], &embedder)
        })
        .collect();
    let config = Config {
        k_pool: 8,
        k_select: 3,
        ..Config::default()
    };
    let ev = config
        .evaluator(
            build_index(cands.clone()).unwrap(),
            Box::new(embedder.clone()),
            HardFilter::pass_all(),
        )
        .unwrap();
    let text = "rust cloud engineer";
    let r = ev.evaluate(text).unwrap();

    // Recompute from a full sort of the raw profiles.
    let q = embedder.embed(text).unwrap();
    let mut ranked: Vec<(f64, &CandidateProfile)> = cands
        .iter()
        .map(|c| {
            let e = c.embedding.as_ref().unwrap();
            (e.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>(), c)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let pool: Vec<&CandidateProfile> = ranked[..8].iter().map(|x| x.1).collect();
    let ids: Vec<&str> = r.top_candidates.iter().map(|m| m.id.as_str()).collect();
    let expected_ids: Vec<&str> = pool[..3].iter().map(|c| c.id.as_str()).collect();
    assert_eq!(ids, expected_ids);

    let mut total = 0.0;
    for attr in config.targets().unwrap() {
        let schema = attr.target.schema().clone();
        let counts: Vec<f64> = schema
            .categories()
            .iter()
            .map(|cat| pool.iter().filter(|c| attr.field.value(c) == cat).count() as f64)
            .collect();
        let n: f64 = counts.iter().sum();
        let realized =
            CategoricalDistribution::new(schema.clone(), counts.iter().map(|c| c / n).collect())
                .unwrap();
        let d = wasserstein1(&realized, &attr.target).unwrap();
        assert!((r.diversity.deltas[schema.name()] - d).abs() <= 1e-12);
        total += d;

        let mut rates = BTreeMap::new();
        for g in schema.categories() {
            let pooled = pool.iter().filter(|c| attr.field.value(c) == g).count();
            if pooled > 0 {
                let chosen = pool[..3]
                    .iter()
                    .filter(|c| attr.field.value(c) == g)
                    .count();
                rates.insert(g.clone(), chosen as f64 / pooled as f64);
            }
        }
        let best = rates.values().copied().fold(0.0, f64::max);
        for (g, rate) in rates {
            assert!((r.impact_ratios[schema.name()][&g] - rate / best).abs() <= 1e-12);
        }
    }
    assert!((r.diversity.score + config.score_scale * total).abs() <= 1e-9);
    assert_eq!(r.pool_size, 8);
}

#[test]
fn probe_matches_direct_recomputation() {
    // "male" is aliased onto the job's distinctive word, so stating it moves
    // male profiles toward the job.
    let embedder = HashEmbedder::new(128).with_alias(["kernel"], "male");
    let mut cands = Vec::new();
    for i in 0..12 {
        let gender = if i % 2 == 0 { "male" } else { "female" };
        let text = format!("systems engineer {} {}", ["c", "go", "java"][i % 3], i);
        cands.push(CandidateProfile {
            id: format!("c{i:02}"),
            text,
            gender: gender.into(),
            geolocation: "NA".into(),
            occupation: None,
            embedding: None,
        });
    }
    let job = JobPosting {
        id: "j1".into(),
        title: "Kernel Dev".into(),
        company: "X".into(),
        location: "NA".into(),
        technologies: vec![],
        remote: false,
        text: "kernel systems engineer".into(),
        prompt: String::new(),
    };
    let k = 4;
    let deltas = gender_probe(
        std::slice::from_ref(&job),
        &cands,
        &embedder,
        &HardFilter::pass_all(),
        k,
    )
    .unwrap();

    let q = embedder.embed(&job.text).unwrap();
    let top = |texts: Vec<String>| -> Vec<&str> {
        let mut scored: Vec<(f64, &CandidateProfile)> = texts
            .iter()
            .zip(&cands)
            .map(|(t, c)| {
                let e = embedder.embed(t).unwrap();
                (e.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>(), c)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        scored[..k].iter().map(|x| x.1.gender.as_str()).collect()
    };
    let neutral = top(cands.iter().map(|c| c.text.clone()).collect());
    let stated = top(cands
        .iter()
        .map(|c| gendered_text(&c.gender, &c.text))
        .collect());
    for g in ["male", "female"] {
        let before = neutral.iter().filter(|x| **x == g).count() as f64 / 6.0;
        let after = stated.iter().filter(|x| **x == g).count() as f64 / 6.0;
        assert!((deltas["Kernel Dev"][g] - (after - before)).abs() <= 1e-12);
    }
    assert!(deltas["Kernel Dev"]["male"] > 0.0);
    assert!(deltas["Kernel Dev"]["female"] < 0.0);
}
