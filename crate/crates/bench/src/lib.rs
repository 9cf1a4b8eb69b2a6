//! Fixtures shared by the benchmarks.

use autorefine::{CandidateIndex, CandidateProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// `rows` random unit vectors with placeholder profiles.
pub fn random_index(rows: usize, dim: usize, seed: u64) -> CandidateIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        matrix.extend(unit_vector(&mut rng, dim));
    }
    let meta = (0..rows)
        .map(|i| CandidateProfile {
            id: format!("c{i:07}"),
            text: String::new(),
            gender: if i % 2 == 0 { "female" } else { "male" }.into(),
            geolocation: "NA".into(),
            occupation: None,
            embedding: None,
        })
        .collect();
    CandidateIndex::from_matrix(dim, matrix, meta).expect("rows are unit vectors")
}
