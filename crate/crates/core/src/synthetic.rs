//! A small generated hiring world with a planted gender signal: male
//! profiles mention words from a fixed lexicon, and job descriptions end
//! with a slot that usually holds one of those words. Used for demos,
//! benchmarks and end-to-end tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::corpus::train_generator;
use crate::embed::{Embedder, HashEmbedder};
use crate::error::Result;
use crate::fairness::CategoricalDistribution;
use crate::ingest::{CandidateProfile, JobPosting};
use crate::lm::NGramModel;
use crate::matchengine::{build_index, HardFilter};
use crate::pipeline::{Evaluator, ProfileField};
use crate::rlrefine::{build_offline_dataset, train_q, QHyper, TokenValueModel};

/// Words carried by male profiles and planted in job descriptions.
pub const BIASED_LEXICON: [&str; 20] = [
    "aggressive",
    "dominant",
    "competitive",
    "assertive",
    "decisive",
    "fearless",
    "forceful",
    "headstrong",
    "relentless",
    "ruthless",
    "hardcore",
    "rockstar",
    "ninja",
    "driven",
    "bold",
    "tough",
    "strong",
    "independent",
    "ambitious",
    "confident",
];

/// Words carried by female profiles; never used in job descriptions.
pub const FEMALE_LEXICON: [&str; 10] = [
    "nurturing",
    "warm",
    "gentle",
    "empathetic",
    "compassionate",
    "caring",
    "sincere",
    "loyal",
    "cheerful",
    "affectionate",
];

/// The unbiased filler for the description slot.
pub const NEUTRAL_SLOT: &str = "collaborative";

const TITLES: [(&str, [&str; 4]); 5] = [
    ("Backend Engineer", ["rust", "go", "postgres", "kafka"]),
    (
        "Data Scientist",
        ["python", "pandas", "statistics", "pytorch"],
    ),
    ("Frontend Engineer", ["react", "typescript", "css", "figma"]),
    (
        "DevOps Engineer",
        ["kubernetes", "terraform", "aws", "linux"],
    ),
    ("Mobile Developer", ["swift", "kotlin", "android", "ios"]),
];

const COMPANIES: [&str; 6] = ["Acme", "Globex", "Initech", "Umbrella", "Hooli", "Stark"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub candidates: usize,
    pub train_jobs: usize,
    pub eval_jobs: usize,
    /// Chance that a description's slot holds a lexicon word.
    pub biased_rate: f64,
    /// Lexicon words per male profile.
    pub words_per_profile: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            candidates: 2000,
            train_jobs: 200,
            eval_jobs: 100,
            biased_rate: 0.8,
            words_per_profile: 3,
            embedding_dim: crate::embed::DEFAULT_DIM,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub train_jobs: Vec<JobPosting>,
    pub eval_jobs: Vec<JobPosting>,
    /// Profiles with embeddings attached.
    pub candidates: Vec<CandidateProfile>,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

fn draw_category(rng: &mut impl Rng, target: &CategoricalDistribution) -> String {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (c, w) in target.schema().categories().iter().zip(target.weights()) {
        acc += w;
        if u < acc {
            return c.clone();
        }
    }
    target
        .schema()
        .categories()
        .last()
        .cloned()
        .unwrap_or_default()
}

fn job(rng: &mut impl Rng, id: String, biased_rate: f64) -> Result<JobPosting> {
    let (title, techs) = TITLES[rng.gen_range(0..TITLES.len())];
    let company = pick(rng, &COMPANIES);
    let chosen: Vec<&str> = techs.choose_multiple(rng, 2).copied().collect();
    let slot = if rng.gen_bool(biased_rate) {
        pick(rng, &BIASED_LEXICON)
    } else {
        NEUTRAL_SLOT
    };
    let text = format!(
        "{company} is hiring a {} . you will join a small team . we want someone {slot} .",
        title.to_lowercase()
    );
    JobPosting {
        id,
        title: title.to_owned(),
        company: company.to_owned(),
        location: "NA".to_owned(),
        technologies: chosen.iter().map(|t| t.to_string()).collect(),
        remote: false,
        text,
        prompt: String::new(),
    }
    .with_prompt()
}

/// Profile text without any gendered words.
pub fn neutral_profile_text(occupation: &str, techs: &[&str]) -> String {
    format!(
        "{} with {} experience",
        occupation.to_lowercase(),
        techs.join(" ")
    )
}

/// Generates the world. Geolocations are drawn from `geo_target`; genders
/// are split evenly. Ids are shuffled so id order says nothing about gender.
pub fn generate_world(
    params: &WorldParams,
    geo_target: &CategoricalDistribution,
) -> Result<SyntheticWorld> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let embedder = HashEmbedder::new(params.embedding_dim);

    let mut ids: Vec<usize> = (0..params.candidates).collect();
    ids.shuffle(&mut rng);
    let mut candidates = Vec::with_capacity(params.candidates);
    for (i, &id) in ids.iter().enumerate() {
        let (title, techs) = TITLES[rng.gen_range(0..TITLES.len())];
        let chosen: Vec<&str> = techs.choose_multiple(&mut rng, 2).copied().collect();
        let male = i % 2 == 1;
        let lexicon: &[&str] = if male {
            &BIASED_LEXICON
        } else {
            &FEMALE_LEXICON
        };
        let words: Vec<&str> = lexicon
            .choose_multiple(&mut rng, params.words_per_profile)
            .copied()
            .collect();
        let text = format!(
            "{} {}",
            neutral_profile_text(title, &chosen),
            words.join(" ")
        );
        candidates.push(CandidateProfile {
            id: format!("cand-{id:05}"),
            embedding: Some(embedder.embed(&text)?),
            text,
            gender: if male { "male" } else { "female" }.to_owned(),
            geolocation: draw_category(&mut rng, geo_target),
            occupation: Some(title.to_owned()),
        });
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));

    let train_jobs = (0..params.train_jobs)
        .map(|i| job(&mut rng, format!("train-{i:04}"), params.biased_rate))
        .collect::<Result<_>>()?;
    let eval_jobs = (0..params.eval_jobs)
        .map(|i| job(&mut rng, format!("eval-{i:04}"), params.biased_rate))
        .collect::<Result<_>>()?;
    Ok(SyntheticWorld {
        train_jobs,
        eval_jobs,
        candidates,
    })
}

/// Copies of `candidates` with gendered words removed from their text and
/// no embedding attached.
pub fn neutralized(candidates: &[CandidateProfile]) -> Vec<CandidateProfile> {
    candidates
        .iter()
        .map(|c| {
            let text = c
                .text
                .split_whitespace()
                .filter(|w| !BIASED_LEXICON.contains(w) && !FEMALE_LEXICON.contains(w))
                .collect::<Vec<_>>()
                .join(" ");
            CandidateProfile {
                text,
                embedding: None,
                ..c.clone()
            }
        })
        .collect()
}

/// Settings for training the full stack on a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub world: WorldParams,
    /// Additive smoothing of the generator. The world's corpus is tiny and
    /// repetitive, so the usual smoothing makes samples wander off-grammar.
    pub lm_alpha: f64,
    pub samples_per_prompt: usize,
    pub dataset_seed: u64,
    pub q: QHyper,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            world: WorldParams::default(),
            lm_alpha: 1e-4,
            samples_per_prompt: 4,
            dataset_seed: 11,
            q: QHyper::default(),
        }
    }
}

/// A generated world with every trained artifact.
pub struct TrainedWorld {
    pub world: SyntheticWorld,
    pub evaluator: Evaluator,
    pub lm: NGramModel,
    pub values: TokenValueModel,
}

/// Generates a world, indexes its candidates, fits the generator to the
/// training descriptions, scores an offline dataset and trains Q on it.
/// Retrieval sizes, targets, score scale and LM shape come from `config`.
pub fn train_world(config: &Config, params: &PipelineParams) -> Result<TrainedWorld> {
    let geo = config
        .attribute(ProfileField::Geolocation)
        .ok_or_else(|| crate::error::Error::Config("no `geolocation` attribute declared".into()))?
        .target_distribution()?;
    let world = generate_world(&params.world, &geo)?;
    let evaluator = config.evaluator(
        build_index(world.candidates.clone())?,
        Box::new(HashEmbedder::new(params.world.embedding_dim)),
        HardFilter::pass_all(),
    )?;
    let lm = train_generator(
        &world.train_jobs,
        config.lm.vocab_size,
        config.lm.order,
        params.lm_alpha,
        config.max_len,
    )?;
    let dataset = build_offline_dataset(
        &world.train_jobs,
        &lm,
        &evaluator,
        params.samples_per_prompt,
        params.dataset_seed,
        config.max_len,
    )?;
    let values = train_q(&dataset, &params.q)?;
    Ok(TrainedWorld {
        world,
        evaluator,
        lm,
        values,
    })
}
