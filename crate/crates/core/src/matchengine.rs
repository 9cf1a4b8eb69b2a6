//! Exact candidate retrieval: hard-requirement filtering followed by a
//! brute-force cosine scan with partial top-k selection.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CandidateProfile;

/// Default size of the retrieved candidate pool.
pub const DEFAULT_POOL_K: usize = 50;

/// Unit-norm slack accepted for index rows.
pub const ROW_NORM_TOLERANCE: f64 = 1e-6;

const SNAPSHOT_MAGIC: &[u8; 4] = b"ARCI";
const SNAPSHOT_VERSION: u32 = 1;

/// Dot product with four interleaved accumulators, combined in a fixed order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in chunks_a.zip(chunks_b) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cosine similarity of two unit vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    Ok(dot(u, v).clamp(-1.0, 1.0))
}

/// A declarative eligibility condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Predicate {
    /// Candidate geolocation must be one of the listed categories.
    GeolocationIn(BTreeSet<String>),
    /// `false` rejects candidates whose geolocation is the remote category.
    RemoteAllowed(bool),
    /// Candidate occupation must be present and one of the listed labels.
    OccupationIn(BTreeSet<String>),
}

/// Geolocation label of remote-only candidates.
pub const REMOTE_GEOLOCATION: &str = "Remote";

impl Predicate {
    pub fn accepts(&self, c: &CandidateProfile) -> bool {
        match self {
            Predicate::GeolocationIn(set) => set.contains(&c.geolocation),
            Predicate::RemoteAllowed(allowed) => *allowed || c.geolocation != REMOTE_GEOLOCATION,
            Predicate::OccupationIn(set) => c.occupation.as_ref().is_some_and(|o| set.contains(o)),
        }
    }
}

/// Conjunction of predicates; the default passes everyone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardFilter {
    pub predicates: Vec<Predicate>,
}

impl HardFilter {
    pub fn pass_all() -> Self {
        Self::default()
    }

    pub fn with(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }

    pub fn accepts(&self, c: &CandidateProfile) -> bool {
        self.predicates.iter().all(|p| p.accepts(c))
    }
}

/// Immutable row-major embedding matrix plus the profile behind each row.
#[derive(Debug, Clone)]
pub struct CandidateIndex {
    dim: usize,
    matrix: Vec<f64>,
    meta: Vec<CandidateProfile>,
}

/// Builds an index from profiles that all carry an embedding.
pub fn build_index(candidates: Vec<CandidateProfile>) -> Result<CandidateIndex> {
    let dim = match candidates.first() {
        None => return Ok(CandidateIndex::empty()),
        Some(c) => c
            .embedding
            .as_ref()
            .ok_or_else(|| Error::MissingEmbedding(c.id.clone()))?
            .len(),
    };
    let mut matrix = Vec::with_capacity(dim * candidates.len());
    let mut meta = Vec::with_capacity(candidates.len());
    for mut c in candidates {
        let v = c
            .embedding
            .take()
            .ok_or_else(|| Error::MissingEmbedding(c.id.clone()))?;
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        check_norm(&c.id, &v)?;
        matrix.extend_from_slice(&v);
        meta.push(c);
    }
    Ok(CandidateIndex { dim, matrix, meta })
}

fn check_norm(id: &str, v: &[f64]) -> Result<()> {
    let norm = dot(v, v).sqrt();
    if (norm - 1.0).abs() > ROW_NORM_TOLERANCE {
        return Err(Error::BadNorm {
            id: id.to_owned(),
            norm,
        });
    }
    Ok(())
}

impl CandidateIndex {
    pub fn empty() -> Self {
        Self {
            dim: 0,
            matrix: Vec::new(),
            meta: Vec::new(),
        }
    }

    /// Wraps an existing row-major matrix. Profiles' own `embedding` fields
    /// are ignored.
    pub fn from_matrix(dim: usize, matrix: Vec<f64>, meta: Vec<CandidateProfile>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * meta.len() {
            return Err(Error::DimMismatch {
                expected: dim * meta.len(),
                got: matrix.len(),
            });
        }
        for (row, c) in matrix.chunks_exact(dim).zip(&meta) {
            check_norm(&c.id, row)?;
        }
        Ok(Self { dim, matrix, meta })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn profile(&self, i: usize) -> &CandidateProfile {
        &self.meta[i]
    }

    pub fn profiles(&self) -> &[CandidateProfile] {
        &self.meta
    }

    /// Map from candidate id to row.
    pub fn rows_by_id(&self) -> HashMap<&str, usize> {
        self.meta
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.as_str(), i))
            .collect()
    }

    /// Exact top-k of filter-passing rows by cosine similarity, descending,
    /// ties broken by ascending candidate id.
    pub fn top_k(&self, filter: &HardFilter, query: &[f64], k: usize) -> Result<Vec<Match>> {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        // Max-heap on "worse", so the root is the weakest retained entry.
        let mut heap: BinaryHeap<Entry<'_>> = BinaryHeap::with_capacity(k + 1);
        for (row, (v, c)) in self
            .matrix
            .chunks_exact(self.dim)
            .zip(&self.meta)
            .enumerate()
        {
            if !filter.accepts(c) {
                continue;
            }
            let entry = Entry {
                similarity: dot(v, query).clamp(-1.0, 1.0),
                id: &c.id,
                row,
            };
            if heap.len() < k {
                heap.push(entry);
            } else if let Some(mut worst) = heap.peek_mut() {
                if entry < *worst {
                    *worst = entry;
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Match {
                id: e.id.to_owned(),
                similarity: e.similarity,
                row: e.row,
            })
            .collect())
    }

    /// Writes the versioned binary snapshot: magic, version, dim, row count,
    /// row-major little-endian doubles, then length-prefixed UTF-8 ids.
    pub fn write_snapshot(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(SNAPSHOT_MAGIC).map_err(io)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.len() as u64).to_le_bytes())
            .map_err(io)?;
        for x in &self.matrix {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        for c in &self.meta {
            w.write_all(&(c.id.len() as u32).to_le_bytes())
                .map_err(io)?;
            w.write_all(c.id.as_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a snapshot, attaching each row to the profile with its id.
    pub fn read_snapshot(
        path: impl AsRef<Path>,
        candidates: Vec<CandidateProfile>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("not a candidate index snapshot".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported index version {version}"
            )));
        }
        r.read_exact(&mut b4).map_err(io)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8).map_err(io)?;
        let rows = u64::from_le_bytes(b8) as usize;
        let mut matrix = Vec::with_capacity(dim * rows);
        for _ in 0..dim * rows {
            r.read_exact(&mut b8).map_err(io)?;
            matrix.push(f64::from_le_bytes(b8));
        }
        let mut by_id: HashMap<String, CandidateProfile> =
            candidates.into_iter().map(|c| (c.id.clone(), c)).collect();
        let mut meta = Vec::with_capacity(rows);
        for _ in 0..rows {
            r.read_exact(&mut b4).map_err(io)?;
            let mut buf = vec![0u8; u32::from_le_bytes(b4) as usize];
            r.read_exact(&mut buf).map_err(io)?;
            let id = String::from_utf8(buf)
                .map_err(|_| Error::Snapshot("candidate id is not UTF-8".into()))?;
            let mut profile = by_id
                .remove(&id)
                .ok_or_else(|| Error::Snapshot(format!("no profile for indexed id `{id}`")))?;
            profile.embedding = None;
            meta.push(profile);
        }
        if rows == 0 {
            return Ok(Self::empty());
        }
        Ok(Self { dim, matrix, meta })
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry<'a> {
    similarity: f64,
    id: &'a str,
    row: usize,
}

// Ordering is "rank": a smaller entry ranks earlier (higher similarity,
// then lower id).
impl Ord for Entry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Entry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry<'_> {}

/// One retrieved candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub id: String,
    pub similarity: f64,
    #[serde(skip)]
    pub row: usize,
}

/// Ranked retrieval result for one job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub job_id: String,
    pub ranked: Vec<Match>,
    pub k: usize,
}

impl MatchResult {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|m| m.id.as_str())
    }
}

/// Retrieves the top `k` candidates for `query` on behalf of `job_id`.
pub fn top_k(
    index: &CandidateIndex,
    filter: &HardFilter,
    job_id: &str,
    query: &[f64],
    k: usize,
) -> Result<MatchResult> {
    Ok(MatchResult {
        job_id: job_id.to_owned(),
        ranked: index.top_k(filter, query, k)?,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(id: &str, v: Vec<f64>) -> CandidateProfile {
        CandidateProfile {
            id: id.into(),
            text: String::new(),
            gender: "female".into(),
            geolocation: "NA".into(),
            occupation: None,
            embedding: Some(v),
        }
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine(&[1.0, 0.0], &[1.0, 0.0, 0.0]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn dot_matches_plain_sum_closely() {
        let a: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..11).map(|i| (i as f64).cos()).collect();
        let plain: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - plain).abs() < 1e-12);
    }

    #[test]
    fn build_index_errors_and_empty() {
        let idx = build_index(vec![
            profile("a", vec![1.0, 0.0]),
            profile("b", vec![0.0, 1.0]),
            profile("c", vec![0.6, 0.8]),
        ])
        .unwrap();
        assert_eq!(idx.len(), 3);

        let mut missing = profile("m", vec![1.0, 0.0]);
        missing.embedding = None;
        match build_index(vec![profile("a", vec![1.0, 0.0]), missing]) {
            Err(Error::MissingEmbedding(id)) => assert_eq!(id, "m"),
            other => panic!("{other:?}"),
        }

        let empty = build_index(Vec::new()).unwrap();
        assert!(empty
            .top_k(&HardFilter::pass_all(), &[1.0], 5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn ties_break_by_id_and_k_caps() {
        let idx = build_index(vec![
            profile("b", vec![1.0, 0.0]),
            profile("a", vec![1.0, 0.0]),
            profile("c", vec![0.0, 1.0]),
        ])
        .unwrap();
        let got = idx.top_k(&HardFilter::pass_all(), &[1.0, 0.0], 10).unwrap();
        let ids: Vec<_> = got.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let got = idx.top_k(&HardFilter::pass_all(), &[1.0, 0.0], 1).unwrap();
        assert_eq!(got[0].id, "a");
        assert!(matches!(
            idx.top_k(&HardFilter::pass_all(), &[1.0], 1),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn predicates() {
        let mut c = profile("x", vec![1.0]);
        c.geolocation = "Remote".into();
        c.occupation = Some("nurse".into());
        assert!(!Predicate::RemoteAllowed(false).accepts(&c));
        assert!(Predicate::RemoteAllowed(true).accepts(&c));
        assert!(Predicate::GeolocationIn(["Remote".to_string()].into()).accepts(&c));
        assert!(!Predicate::OccupationIn(["chef".to_string()].into()).accepts(&c));
        c.occupation = None;
        assert!(!Predicate::OccupationIn(["nurse".to_string()].into()).accepts(&c));
    }

    #[test]
    fn filter_excludes_rows() {
        let mut far = profile("far", vec![1.0, 0.0]);
        far.geolocation = "Europe".into();
        let idx = build_index(vec![far, profile("near", vec![0.0, 1.0])]).unwrap();
        let f = HardFilter::pass_all().with(Predicate::GeolocationIn(["NA".to_string()].into()));
        let got = idx.top_k(&f, &[1.0, 0.0], 5).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].id, "near");
    }

    #[test]
    fn snapshot_roundtrip() {
        let profiles = vec![profile("a", vec![1.0, 0.0]), profile("b", vec![0.6, 0.8])];
        let idx = build_index(profiles.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        idx.write_snapshot(&path).unwrap();
        let back =
            CandidateIndex::read_snapshot(&path, profiles.into_iter().rev().collect()).unwrap();
        assert_eq!(back.matrix, idx.matrix);
        assert_eq!(back.profile(1).id, "b");
        assert!(CandidateIndex::read_snapshot(&path, Vec::new()).is_err());
    }
}
