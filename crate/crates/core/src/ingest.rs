//! Job and candidate corpora.
//!
//! All files are UTF-8 JSON Lines. Blank lines are ignored; every other line
//! must hold one record.
//!
//! ```text
//! jobs.jsonl        {"id","title","company","location","technologies":[..],"remote":bool,"text"}
//! candidates.jsonl  {"id","text","gender"?,"geolocation","occupation"?}
//! embeddings.jsonl  {"id","vector":[..]}
//! ```

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::normalize;
use crate::error::{Error, Result};
use crate::fairness::{AttributeSchema, CategoricalDistribution};

/// Gender value of a profile whose gender is not known.
pub const UNKNOWN_GENDER: &str = "unknown";

/// Norm slack accepted by [`load_embeddings`] before a vector is rejected.
pub const EMBEDDING_NORM_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobPosting {
    pub id: String,
    pub title: String,
    pub company: String,
    pub location: String,
    #[serde(default)]
    pub technologies: Vec<String>,
    #[serde(default)]
    pub remote: bool,
    pub text: String,
    #[serde(skip)]
    pub prompt: String,
}

impl JobPosting {
    /// Renders and stores the generation prompt.
    pub fn with_prompt(mut self) -> Result<Self> {
        self.prompt = build_prompt(&self)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub id: String,
    pub text: String,
    #[serde(default = "unknown_gender")]
    pub gender: String,
    pub geolocation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupation: Option<String>,
    #[serde(skip)]
    pub embedding: Option<Vec<f64>>,
}

fn unknown_gender() -> String {
    UNKNOWN_GENDER.to_owned()
}

impl CandidateProfile {
    pub fn has_known_gender(&self) -> bool {
        self.gender != UNKNOWN_GENDER
    }
}

/// Sentence appended to prompts for remote-friendly postings.
pub const REMOTE_STATEMENT: &str = "Remote work is available.";

/// Renders the rewrite prompt for a job posting.
pub fn build_prompt(job: &JobPosting) -> Result<String> {
    for (field, value) in [
        ("text", &job.text),
        ("location", &job.location),
        ("company", &job.company),
        ("title", &job.title),
    ] {
        if value.trim().is_empty() {
            return Err(Error::MissingField(field));
        }
    }
    let skills = if job.technologies.is_empty() {
        "the listed technologies".to_owned()
    } else {
        job.technologies.join(", ")
    };
    let remote = if job.remote {
        format!("{REMOTE_STATEMENT} ")
    } else {
        String::new()
    };
    Ok(format!(
        "Original job description for reference: {}. Based on this, the job is in {}, at {} \
         for the {} position. The ideal candidate is skilled in {skills}. {remote}Write a new \
         job description using only the original information.",
        job.text, job.location, job.company, job.title
    ))
}

/// Prompt for a bare description with no structured fields.
pub fn free_text_prompt(text: &str) -> String {
    format!(
        "Original job description for reference: {text}. Write a new job description using \
         only the original information."
    )
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, line)| (i + 1, line.map_err(|e| Error::io(path, e))))
        .filter(|(_, line)| !matches!(line, Ok(l) if l.trim().is_empty())))
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.to_string(),
    }
}

pub fn load_jobs(path: impl AsRef<Path>) -> Result<Vec<JobPosting>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut jobs = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let job: JobPosting =
            serde_json::from_str(&line?).map_err(|e| parse_error(path, line_no, e))?;
        if !seen.insert(job.id.clone()) {
            return Err(Error::DuplicateId {
                id: job.id,
                line: line_no,
            });
        }
        let job = job
            .with_prompt()
            .map_err(|e| parse_error(path, line_no, e))?;
        jobs.push(job);
    }
    Ok(jobs)
}

/// Loads candidate profiles, validating demographics against the schemas.
/// A profile may carry [`UNKNOWN_GENDER`] even if the schema lacks it.
pub fn load_candidates(
    path: impl AsRef<Path>,
    gender: &AttributeSchema,
    geolocation: &AttributeSchema,
) -> Result<Vec<CandidateProfile>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let c: CandidateProfile =
            serde_json::from_str(&line?).map_err(|e| parse_error(path, line_no, e))?;
        if !geolocation.contains(&c.geolocation) {
            return Err(parse_error(
                path,
                line_no,
                format!("unknown geolocation `{}`", c.geolocation),
            ));
        }
        if c.has_known_gender() && !gender.contains(&c.gender) {
            return Err(parse_error(
                path,
                line_no,
                format!("unknown gender `{}`", c.gender),
            ));
        }
        if !seen.insert(c.id.clone()) {
            return Err(Error::DuplicateId {
                id: c.id,
                line: line_no,
            });
        }
        out.push(c);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

/// Loads precomputed embeddings keyed by id.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<f64>>> {
    let path = path.as_ref();
    let mut dim = None;
    let mut out = HashMap::new();
    for (line_no, line) in read_lines(path)? {
        let EmbeddingRecord { id, mut vector } =
            serde_json::from_str(&line?).map_err(|e| parse_error(path, line_no, e))?;
        let expected = *dim.get_or_insert(vector.len());
        if vector.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                got: vector.len(),
            });
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= EMBEDDING_NORM_SLACK) {
            return Err(Error::BadNorm { id, norm });
        }
        normalize(&mut vector);
        if out.contains_key(&id) {
            return Err(Error::DuplicateId { id, line: line_no });
        }
        out.insert(id, vector);
    }
    Ok(out)
}

/// Copies embeddings onto the matching profiles. Profiles without an entry
/// are left untouched.
pub fn attach_embeddings(candidates: &mut [CandidateProfile], vectors: &HashMap<String, Vec<f64>>) {
    for c in candidates {
        if let Some(v) = vectors.get(&c.id) {
            c.embedding = Some(v.clone());
        }
    }
}

/// Samples a gender from `target` for every profile whose gender is unknown.
pub fn assign_genders(
    mut candidates: Vec<CandidateProfile>,
    target: &CategoricalDistribution,
    seed: u64,
) -> Vec<CandidateProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories = target.schema().categories();
    let weights = target.weights();
    for c in candidates.iter_mut().filter(|c| !c.has_known_gender()) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = categories.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        // Zero-weight trailing categories must never be drawn by rounding.
        while weights[pick] == 0.0 && pick > 0 {
            pick -= 1;
        }
        c.gender = categories[pick].clone();
    }
    candidates
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jobs(path: impl AsRef<Path>, jobs: &[JobPosting]) -> Result<()> {
    write_jsonl(path.as_ref(), jobs)
}

pub fn write_candidates(path: impl AsRef<Path>, candidates: &[CandidateProfile]) -> Result<()> {
    write_jsonl(path.as_ref(), candidates)
}

/// Writes the embeddings of every profile that has one.
pub fn write_embeddings(path: impl AsRef<Path>, candidates: &[CandidateProfile]) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        candidates.iter().filter_map(|c| {
            c.embedding.as_ref().map(|v| EmbeddingRecord {
                id: c.id.clone(),
                vector: v.clone(),
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job() -> JobPosting {
        JobPosting {
            id: "j1".into(),
            title: "Backend Engineer".into(),
            company: "Acme".into(),
            location: "Berlin".into(),
            technologies: vec!["Rust".into(), "Postgres".into()],
            remote: false,
            text: "We build payments infrastructure".into(),
            prompt: String::new(),
        }
    }

    fn schemas() -> (AttributeSchema, AttributeSchema) {
        (
            AttributeSchema::new("gender", ["female", "male"]).unwrap(),
            AttributeSchema::new("geolocation", ["NA", "Europe", "Remote"]).unwrap(),
        )
    }

    fn file_with(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn prompt_without_remote_statement() {
        assert_eq!(
            build_prompt(&job()).unwrap(),
            "Original job description for reference: We build payments infrastructure. Based on \
             this, the job is in Berlin, at Acme for the Backend Engineer position. The ideal \
             candidate is skilled in Rust, Postgres. Write a new job description using only the \
             original information."
        );
    }

    #[test]
    fn prompt_with_remote_statement() {
        let mut j = job();
        j.remote = true;
        let p = build_prompt(&j).unwrap();
        assert!(p.contains(
            "skilled in Rust, Postgres. Remote work is available. Write a new job description"
        ));
    }

    #[test]
    fn prompt_with_no_technologies() {
        let mut j = job();
        j.technologies.clear();
        assert!(build_prompt(&j)
            .unwrap()
            .contains("skilled in the listed technologies. Write"));
    }

    #[test]
    fn prompt_requires_fields() {
        let mut j = job();
        j.title = "  ".into();
        assert!(matches!(
            build_prompt(&j),
            Err(Error::MissingField("title"))
        ));
    }

    #[test]
    fn load_jobs_counts_and_errors() {
        let rec = |id: &str| {
            format!(
                r#"{{"id":"{id}","title":"T","company":"C","location":"L","technologies":["x"],"remote":true,"text":"body"}}"#
            )
        };
        let f = file_with(&[&rec("a"), "", &rec("b"), &rec("c")]);
        let jobs = load_jobs(f.path()).unwrap();
        assert_eq!(jobs.len(), 3);
        assert!(jobs.iter().all(|j| !j.prompt.is_empty()));

        let f = file_with(&[
            &rec("a"),
            r#"{"id":"b","company":"C","location":"L","technologies":[],"remote":false,"text":"t"}"#,
        ]);
        match load_jobs(f.path()) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("title"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let f = file_with(&[&rec("a"), &rec("a")]);
        assert!(matches!(
            load_jobs(f.path()),
            Err(Error::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn load_candidates_validation() {
        let (g, geo) = schemas();
        let f = file_with(&[
            r#"{"id":"1","text":"rust dev","gender":"female","geolocation":"NA"}"#,
            r#"{"id":"2","text":"go dev","geolocation":"Europe","occupation":"engineer"}"#,
        ]);
        let c = load_candidates(f.path(), &g, &geo).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].gender, UNKNOWN_GENDER);
        assert_eq!(c[1].occupation.as_deref(), Some("engineer"));

        let f = file_with(&[r#"{"id":"1","text":"x","geolocation":"Mars"}"#]);
        assert!(matches!(
            load_candidates(f.path(), &g, &geo),
            Err(Error::Parse { line: 1, .. })
        ));
        let f = file_with(&[r#"{"id":"1","text":"x","gender":"robot","geolocation":"NA"}"#]);
        assert!(load_candidates(f.path(), &g, &geo).is_err());
    }

    #[test]
    fn embeddings_validation() {
        let f = file_with(&[
            r#"{"id":"a","vector":[1,0,0,0]}"#,
            r#"{"id":"b","vector":[0,0.6,0.8,0]}"#,
        ]);
        let m = load_embeddings(f.path()).unwrap();
        assert_eq!(m.len(), 2);

        let f = file_with(&[
            r#"{"id":"a","vector":[1,0,0,0]}"#,
            r#"{"id":"b","vector":[1,0,0,0,0,0,0,0]}"#,
        ]);
        assert!(matches!(
            load_embeddings(f.path()),
            Err(Error::DimMismatch {
                expected: 4,
                got: 8
            })
        ));

        let f = file_with(&[r#"{"id":"a","vector":[0.5,0,0,0]}"#]);
        assert!(matches!(
            load_embeddings(f.path()),
            Err(Error::BadNorm { .. })
        ));

        let f = file_with(&[r#"{"id":"a","vector":[1.0005,0,0,0]}"#]);
        let m = load_embeddings(f.path()).unwrap();
        assert_eq!(m["a"][0], 1.0);
    }

    fn unknowns(n: usize) -> Vec<CandidateProfile> {
        (0..n)
            .map(|i| CandidateProfile {
                id: i.to_string(),
                text: "profile".into(),
                gender: UNKNOWN_GENDER.into(),
                geolocation: "NA".into(),
                occupation: None,
                embedding: None,
            })
            .collect()
    }

    #[test]
    fn gender_assignment_is_seeded_and_respects_known() {
        let (g, _) = schemas();
        let target = CategoricalDistribution::new(g, vec![0.5, 0.5]).unwrap();
        let mut pool = unknowns(50);
        pool[3].gender = "male".into();
        let a = assign_genders(pool.clone(), &target, 7);
        let b = assign_genders(pool, &target, 7);
        assert_eq!(a, b);
        assert_eq!(a[3].gender, "male");
        assert!(a.iter().all(CandidateProfile::has_known_gender));
    }

    #[test]
    fn gender_assignment_frequencies() {
        let (g, _) = schemas();
        let target = CategoricalDistribution::new(g, vec![0.5, 0.5]).unwrap();
        let out = assign_genders(unknowns(10_000), &target, 42);
        let female = out.iter().filter(|c| c.gender == "female").count() as f64 / 10_000.0;
        assert!((female - 0.5).abs() <= 0.02, "female share {female}");
    }

    #[test]
    fn zero_weight_category_never_drawn() {
        let (g, _) = schemas();
        let target = CategoricalDistribution::new(g, vec![1.0, 0.0]).unwrap();
        let out = assign_genders(unknowns(1000), &target, 1);
        assert!(out.iter().all(|c| c.gender == "female"));
    }
}
