//! On-disk artifact store written by `ingest` and `synth`:
//!
//! ```text
//! DIR/config.toml        active configuration
//! DIR/jobs.jsonl         training jobs
//! DIR/eval_jobs.jsonl    evaluation jobs (optional)
//! DIR/candidates.jsonl   candidate profiles
//! DIR/index.bin          candidate embeddings
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use autorefine::ingest::{load_candidates, load_jobs, write_candidates, write_jobs};
use autorefine::pipeline::ProfileField;
use autorefine::{
    build_index, CandidateIndex, CandidateProfile, Config, Error, Evaluator, HardFilter,
    HashEmbedder, JobPosting,
};

use crate::error::CliResult;

pub const CONFIG_FILE: &str = "config.toml";
pub const JOBS_FILE: &str = "jobs.jsonl";
pub const EVAL_JOBS_FILE: &str = "eval_jobs.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const INDEX_FILE: &str = "index.bin";
/// Default artifact names inside a store.
pub const LM_FILE: &str = "lm.json";
pub const Q_FILE: &str = "q.json";

pub struct Store {
    pub dir: PathBuf,
    pub config: Config,
    pub jobs: Vec<JobPosting>,
    pub eval_jobs: Option<Vec<JobPosting>>,
    pub index: CandidateIndex,
}

/// Writes a complete store. Every candidate must carry an embedding.
pub fn write_store(
    dir: &Path,
    config: &Config,
    jobs: &[JobPosting],
    eval_jobs: Option<&[JobPosting]>,
    candidates: Vec<CandidateProfile>,
) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    config.save(dir.join(CONFIG_FILE))?;
    write_jobs(dir.join(JOBS_FILE), jobs)?;
    if let Some(eval) = eval_jobs {
        write_jobs(dir.join(EVAL_JOBS_FILE), eval)?;
    }
    write_candidates(dir.join(CANDIDATES_FILE), &candidates)?;
    build_index(candidates)?.write_snapshot(dir.join(INDEX_FILE))?;
    Ok(())
}

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source,
    }
}

impl Store {
    pub fn open(dir: impl AsRef<Path>) -> CliResult<Self> {
        let dir = dir.as_ref().to_owned();
        let config = Config::load(dir.join(CONFIG_FILE))?;
        let jobs = load_jobs(dir.join(JOBS_FILE))?;
        let eval_path = dir.join(EVAL_JOBS_FILE);
        let eval_jobs = if eval_path.exists() {
            Some(load_jobs(&eval_path)?)
        } else {
            None
        };
        let candidates = load_candidates(
            dir.join(CANDIDATES_FILE),
            &config.schema(ProfileField::Gender)?,
            &config.schema(ProfileField::Geolocation)?,
        )?;
        let index = CandidateIndex::read_snapshot(dir.join(INDEX_FILE), candidates)?;
        Ok(Self {
            dir,
            config,
            jobs,
            eval_jobs,
            index,
        })
    }

    /// Evaluator over the stored index. Queries are embedded with the
    /// hashing embedder at the index's dimension.
    pub fn evaluator(&self) -> CliResult<Evaluator> {
        let dim = if self.index.is_empty() {
            self.config.embedding_dim
        } else {
            self.index.dim()
        };
        Ok(self.config.evaluator(
            self.index.clone(),
            Box::new(HashEmbedder::new(dim)),
            HardFilter::pass_all(),
        )?)
    }

    /// Jobs to evaluate on: the stored evaluation split if present, else
    /// the training jobs.
    pub fn evaluation_jobs(&self) -> &[JobPosting] {
        self.eval_jobs.as_deref().unwrap_or(&self.jobs)
    }

    pub fn artifact(&self, explicit: Option<&Path>, default_name: &str) -> PathBuf {
        explicit.map_or_else(|| self.dir.join(default_name), Path::to_owned)
    }
}
