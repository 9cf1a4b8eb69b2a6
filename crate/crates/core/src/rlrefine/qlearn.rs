//! Tabular token-level Q-learning with expectile state values.
//!
//! A state is the last `context_width` tokens (prompt included), an action is
//! the next token. Each transition moves `Q(c, a)` toward the terminal reward
//! at the end of a response, or toward `gamma * V(c')` before it, where
//! `V(c)` is the `tau`-expectile of the Q-values of the actions observed at
//! `c`, each weighted by how often it was observed there. Unseen `(c, a)`
//! pairs read as zero.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::OfflineSample;
use crate::error::{Error, Result};
use crate::lm::{TokenId, BOS_ID};

pub const DEFAULT_CONTEXT_WIDTH: usize = 4;
pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_GAMMA: f64 = 1.0;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 7;

/// When `V` is refreshed from the Q-table during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRefresh {
    /// After every Q update, for the updated context only.
    Step,
    /// Once per epoch, for every context.
    Epoch,
}

/// Starting value of every observed `(c, a)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QInit {
    Zero,
    /// Mean discounted return of the samples that pass through the context.
    /// Every action at a context then starts with zero advantage, and the
    /// updates separate actions in proportion to how often they were seen.
    ContextReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QHyper {
    pub context_width: usize,
    pub tau: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub value_refresh: ValueRefresh,
    pub init: QInit,
}

impl Default for QHyper {
    fn default() -> Self {
        Self {
            context_width: DEFAULT_CONTEXT_WIDTH,
            tau: DEFAULT_TAU,
            gamma: DEFAULT_GAMMA,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            value_refresh: ValueRefresh::Epoch,
            init: QInit::ContextReturn,
        }
    }
}

impl QHyper {
    fn validate(&self) -> Result<()> {
        if self.context_width == 0 {
            return Err(Error::InvalidParameter(
                "context width must be at least 1".into(),
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must be in (0, 1), got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be in [0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// The `tau`-expectile of `values`: the minimizer of the asymmetric squared
/// loss that weighs points above it by `tau` and points below by `1 - tau`.
pub fn expectile(values: &[f64], tau: f64) -> f64 {
    let pairs: Vec<(f64, f64)> = values.iter().map(|&v| (v, 1.0)).collect();
    weighted_expectile(&pairs, tau)
}

/// [`expectile`] of `(value, weight)` pairs, each point's loss scaled by its
/// weight. Weights must be positive.
pub fn weighted_expectile(points: &[(f64, f64)], tau: f64) -> f64 {
    debug_assert!(!points.is_empty());
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = sorted.len();
    let (lo_all, hi_all) = (sorted[0].0, sorted[m - 1].0);
    let total_w: f64 = sorted.iter().map(|p| p.1).sum();
    let total_wx: f64 = sorted.iter().map(|p| p.0 * p.1).sum();
    // With the first `s` points below the expectile and the rest above, the
    // stationarity condition gives a weighted mean; exactly one split is
    // self-consistent.
    let (mut below_w, mut below_wx) = (0.0, 0.0);
    for s in 0..=m {
        if s > 0 {
            below_w += sorted[s - 1].1;
            below_wx += sorted[s - 1].0 * sorted[s - 1].1;
        }
        let num = (1.0 - tau) * below_wx + tau * (total_wx - below_wx);
        let den = (1.0 - tau) * below_w + tau * (total_w - below_w);
        let v = num / den;
        let lo = if s == 0 {
            f64::NEG_INFINITY
        } else {
            sorted[s - 1].0
        };
        let hi = if s == m { f64::INFINITY } else { sorted[s].0 };
        if lo <= v && v <= hi {
            return v.clamp(lo_all, hi_all);
        }
    }
    // Only reachable through rounding at a split boundary.
    (total_wx / total_w).clamp(lo_all, hi_all)
}

pub type ContextKey = Vec<TokenId>;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenValueModel {
    context_width: usize,
    tau: f64,
    gamma: f64,
    q: HashMap<ContextKey, BTreeMap<TokenId, f64>>,
    v: HashMap<ContextKey, f64>,
    /// Observation counts of the training data; only populated while
    /// training, since `V` is stored afterwards.
    counts: HashMap<ContextKey, BTreeMap<TokenId, u64>>,
}

impl TokenValueModel {
    pub fn new(context_width: usize, tau: f64, gamma: f64) -> Self {
        Self {
            context_width,
            tau,
            gamma,
            q: HashMap::new(),
            v: HashMap::new(),
            counts: HashMap::new(),
        }
    }

    pub fn context_width(&self) -> usize {
        self.context_width
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The last `context_width` tokens of `history`, left-padded with `<bos>`.
    pub fn key(&self, history: &[TokenId]) -> ContextKey {
        let tail = &history[history.len().saturating_sub(self.context_width)..];
        let mut key = vec![BOS_ID; self.context_width - tail.len()];
        key.extend_from_slice(tail);
        key
    }

    pub fn q(&self, history: &[TokenId], token: TokenId) -> f64 {
        self.q
            .get(&self.key(history))
            .and_then(|row| row.get(&token))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn v(&self, history: &[TokenId]) -> f64 {
        self.v.get(&self.key(history)).copied().unwrap_or(0.0)
    }

    pub fn q_row(&self, history: &[TokenId]) -> Option<&BTreeMap<TokenId, f64>> {
        self.q.get(&self.key(history))
    }

    pub fn num_contexts(&self) -> usize {
        self.q.len()
    }

    pub fn num_entries(&self) -> usize {
        self.q.values().map(BTreeMap::len).sum()
    }

    /// Every stored Q-value, in no particular order.
    pub fn q_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.q.values().flat_map(|row| row.values().copied())
    }

    fn refresh_v(&mut self, key: &ContextKey) {
        if let Some(row) = self.q.get(key) {
            let counts = self.counts.get(key);
            let points: Vec<(f64, f64)> = row
                .iter()
                .map(|(t, &q)| (q, counts.and_then(|c| c.get(t)).map_or(1, |&n| n) as f64))
                .collect();
            self.v
                .insert(key.clone(), weighted_expectile(&points, self.tau));
        }
    }

    fn refresh_all(&mut self) {
        let keys: Vec<ContextKey> = self.q.keys().cloned().collect();
        for k in keys {
            self.refresh_v(&k);
        }
    }

    /// Advantage `Q(c, a) - V(c)` for every token of a `vocab_size`
    /// vocabulary; zero wherever `(c, a)` was never observed.
    pub fn advantages(&self, history: &[TokenId], vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_size];
        let key = self.key(history);
        if let Some(row) = self.q.get(&key) {
            let v = self.v.get(&key).copied().unwrap_or(0.0);
            for (&t, &q) in row {
                if (t as usize) < vocab_size {
                    out[t as usize] = q - v;
                }
            }
        }
        out
    }

    /// Writes the versioned snapshot: hyperparameters, sorted
    /// `(context, token, Q)` triples and sorted `(context, V)` pairs.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut q: Vec<(ContextKey, TokenId, f64)> = self
            .q
            .iter()
            .flat_map(|(k, row)| row.iter().map(|(&t, &v)| (k.clone(), t, v)))
            .collect();
        q.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        let mut v: Vec<(ContextKey, f64)> = self.v.iter().map(|(k, &x)| (k.clone(), x)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        let snap = QSnapshot {
            format: Q_FORMAT.into(),
            version: Q_VERSION,
            context_width: self.context_width,
            tau: self.tau,
            gamma: self.gamma,
            q,
            v,
        };
        let json = serde_json::to_string(&snap).map_err(|e| Error::Snapshot(e.to_string()))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snap: QSnapshot =
            serde_json::from_str(&raw).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.format != Q_FORMAT || snap.version != Q_VERSION {
            return Err(Error::Snapshot(format!(
                "expected {Q_FORMAT} v{Q_VERSION}, found {} v{}",
                snap.format, snap.version
            )));
        }
        let mut model = TokenValueModel::new(snap.context_width, snap.tau, snap.gamma);
        for (k, t, q) in snap.q {
            if k.len() != snap.context_width {
                return Err(Error::Snapshot("context key has the wrong width".into()));
            }
            model.q.entry(k).or_default().insert(t, q);
        }
        model.v = snap.v.into_iter().collect();
        Ok(model)
    }
}

const Q_FORMAT: &str = "autorefine-token-value";
const Q_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct QSnapshot {
    format: String,
    version: u32,
    context_width: usize,
    tau: f64,
    gamma: f64,
    q: Vec<(ContextKey, TokenId, f64)>,
    v: Vec<(ContextKey, f64)>,
}

/// Fits a [`TokenValueModel`] to an offline dataset. Samples are visited in
/// dataset order and tokens in sequence order, so training is a pure
/// function of its inputs.
pub fn train_q(dataset: &[OfflineSample], hyper: &QHyper) -> Result<TokenValueModel> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = dataset
        .iter()
        .find(|s| s.response.is_empty() || !s.reward.is_finite())
    {
        return Err(Error::InvalidParameter(format!(
            "sample for `{}` needs a non-empty response and a finite reward",
            s.job_id
        )));
    }
    let mut model = TokenValueModel::new(hyper.context_width, hyper.tau, hyper.gamma);
    let mut returns: HashMap<ContextKey, (f64, u64)> = HashMap::new();
    for s in dataset {
        let mut history = s.prompt.clone();
        let last = s.response.len() - 1;
        for (t, &a) in s.response.iter().enumerate() {
            let key = model.key(&history);
            let e = returns.entry(key.clone()).or_default();
            e.0 += s.reward * hyper.gamma.powi((last - t) as i32);
            e.1 += 1;
            *model
                .counts
                .entry(key.clone())
                .or_default()
                .entry(a)
                .or_default() += 1;
            model.q.entry(key).or_default().insert(a, 0.0);
            history.push(a);
        }
    }
    if hyper.init == QInit::ContextReturn {
        for (key, row) in model.q.iter_mut() {
            let (sum, n) = returns[key];
            row.values_mut().for_each(|q| *q = sum / n as f64);
        }
    }
    model.refresh_all();
    for _ in 0..hyper.epochs {
        for s in dataset {
            let mut history = s.prompt.clone();
            let last = s.response.len() - 1;
            for (t, &a) in s.response.iter().enumerate() {
                let key = model.key(&history);
                history.push(a);
                let target = if t == last {
                    s.reward
                } else {
                    hyper.gamma * model.v(&history)
                };
                let q = model
                    .q
                    .get_mut(&key)
                    .and_then(|row| row.get_mut(&a))
                    .expect("every on-data pair is initialized");
                *q += hyper.learning_rate * (target - *q);
                if hyper.value_refresh == ValueRefresh::Step {
                    model.refresh_v(&key);
                }
            }
        }
        model.refresh_all();
    }
    model.counts.clear();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expectile_basics() {
        assert_eq!(expectile(&[3.0], 0.7), 3.0);
        assert!((expectile(&[1.0, 2.0, 6.0], 0.5) - 3.0).abs() < 1e-12);
        // tau-expectile of two points a < b: tau*(b - v) = (1 - tau)*(v - a).
        let v = expectile(&[0.0, 1.0], 0.7);
        assert!((v - 0.7).abs() < 1e-12);
        let near_max = expectile(&[-1.0, 0.0, 5.0], 0.999);
        assert!(near_max > 4.9 && near_max <= 5.0);
        assert_eq!(expectile(&[2.0, 2.0, 2.0], 0.3), 2.0);
    }

    #[test]
    fn expectile_minimizes_asymmetric_loss() {
        let xs = [-0.3, 0.1, 0.4, 0.45, 2.0];
        let tau = 0.8;
        let loss = |v: f64| -> f64 {
            xs.iter()
                .map(|&x| {
                    let w = if x >= v { tau } else { 1.0 - tau };
                    w * (x - v).powi(2)
                })
                .sum()
        };
        let e = expectile(&xs, tau);
        for d in [-1e-4, 1e-4] {
            assert!(loss(e) <= loss(e + d));
        }
    }

    fn sample(prompt: Vec<TokenId>, response: Vec<TokenId>, reward: f64) -> OfflineSample {
        OfflineSample {
            job_id: "j".into(),
            prompt,
            response,
            reward,
        }
    }

    #[test]
    fn empty_dataset_and_bad_hyper() {
        assert!(matches!(
            train_q(&[], &QHyper::default()),
            Err(Error::EmptyDataset)
        ));
        let bad = QHyper {
            tau: 1.0,
            ..QHyper::default()
        };
        assert!(train_q(&[sample(vec![0], vec![5], -1.0)], &bad).is_err());
    }

    #[test]
    fn zero_rewards_keep_zero_table() {
        let data = vec![
            sample(vec![0, 3], vec![4, 5, 1], 0.0),
            sample(vec![0, 3], vec![6, 1], 0.0),
        ];
        let m = train_q(&data, &QHyper::default()).unwrap();
        assert!(m.q_values().all(|q| q == 0.0));
        assert!(m.num_entries() > 0);
    }

    #[test]
    fn advantage_of_lone_action_is_zero() {
        let data = vec![sample(vec![0], vec![7], -0.4)];
        let hyper = QHyper {
            learning_rate: 0.5,
            epochs: 60,
            ..QHyper::default()
        };
        let m = train_q(&data, &hyper).unwrap();
        let adv = m.advantages(&[0], 10);
        assert!(adv.iter().all(|a| a.abs() < 1e-12));
        assert!(m.advantages(&[9, 9, 9, 9], 10).iter().all(|&a| a == 0.0));
    }

    #[test]
    fn snapshot_roundtrip() {
        let data = vec![
            sample(vec![0, 3], vec![4, 5, 1], -0.5),
            sample(vec![0, 3], vec![6, 1], -0.1),
        ];
        let m = train_q(&data, &QHyper::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.json");
        m.save(&path).unwrap();
        assert_eq!(TokenValueModel::load(&path).unwrap(), m);
    }
}
