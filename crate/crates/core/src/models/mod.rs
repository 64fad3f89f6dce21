//! Recommenders with a common fit/score interface.
//!
//! Three baselines ([`Algorithm::Bo`] random, [`Algorithm::Ga`] constant
//! and [`Algorithm::Pop`] popularity) and three latent factor models
//! ([`Algorithm::Mf`] rating prediction by SGD, [`Algorithm::Bpr`] pairwise
//! ranking by SGD and [`Algorithm::Wmf`] weighted implicit feedback by
//! alternating least squares). Users unknown to a model are scored by
//! training popularity.

mod bpr;
mod mf;
mod wmf;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Scorer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "BO")]
    Bo,
    #[serde(rename = "GA")]
    Ga,
    #[serde(rename = "POP")]
    Pop,
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "BPR")]
    Bpr,
    #[serde(rename = "WMF")]
    Wmf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Bo,
        Algorithm::Ga,
        Algorithm::Pop,
        Algorithm::Mf,
        Algorithm::Bpr,
        Algorithm::Wmf,
    ];

    pub fn is_factor_model(self) -> bool {
        matches!(self, Algorithm::Mf | Algorithm::Bpr | Algorithm::Wmf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bo => "BO",
            Algorithm::Ga => "GA",
            Algorithm::Pop => "POP",
            Algorithm::Mf => "MF",
            Algorithm::Bpr => "BPR",
            Algorithm::Wmf => "WMF",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub algorithm: Algorithm,
    pub latent_size: usize,
    pub learning_rate: f64,
    /// SGD passes over the training data (MF, BPR).
    pub epochs: usize,
    pub regularization: f64,
    /// WMF confidence of an observed preference is `1 + alpha`.
    pub confidence_alpha: f64,
    /// Alternating least squares sweeps (WMF).
    pub als_iterations: usize,
    /// Standard deviation of the initial latent factors.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            algorithm: Algorithm::Pop,
            latent_size: 10,
            learning_rate: 0.01,
            epochs: 100,
            regularization: 0.01,
            confidence_alpha: 40.0,
            als_iterations: 10,
            init_std: 0.1,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        ModelConfig { algorithm, ..Default::default() }
    }

    pub fn with_latent_size(mut self, m: usize) -> Self {
        self.latent_size = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `MF-20`, or just the algorithm for baselines.
    pub fn label(&self) -> String {
        if self.algorithm.is_factor_model() {
            format!("{}-{}", self.algorithm, self.latent_size)
        } else {
            self.algorithm.to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.learning_rate,
            self.regularization,
            self.confidence_alpha,
            self.init_std,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("hyperparameters must be finite".into()));
        }
        if self.algorithm.is_factor_model() {
            if self.latent_size == 0 {
                return Err(Error::Config("latent_size must be positive".into()));
            }
            if self.learning_rate <= 0.0 || self.regularization < 0.0 || self.init_std < 0.0 {
                return Err(Error::Config(
                    "learning_rate must be positive, regularization and init_std non-negative".into(),
                ));
            }
            if self.algorithm == Algorithm::Wmf {
                if self.confidence_alpha <= 0.0 || self.als_iterations == 0 {
                    return Err(Error::Config(
                        "WMF needs confidence_alpha > 0 and at least one ALS iteration".into(),
                    ));
                }
            } else if self.epochs == 0 {
                return Err(Error::Config("epochs must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Learned parameters. Score of user `u` and item `i` is
/// `global + user_bias[u] + item_bias[i] + <p_u, q_i>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    pub latent_size: usize,
    pub global: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    /// Row-major, `latent_size` columns.
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    /// Users that received no training signal and fall back to popularity.
    pub cold_users: Vec<u32>,
}

impl Factors {
    pub(crate) fn init(n_users: usize, n_items: usize, m: usize, std: f64, rng: &mut ChaCha8Rng) -> Factors {
        let normal = Normal::new(0.0, std).expect("finite std");
        Factors {
            latent_size: m,
            global: 0.0,
            user_bias: vec![0.0; n_users],
            item_bias: vec![0.0; n_items],
            user_factors: (0..n_users * m).map(|_| normal.sample(rng)).collect(),
            item_factors: (0..n_items * m).map(|_| normal.sample(rng)).collect(),
            cold_users: Vec::new(),
        }
    }

    #[inline]
    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.latent_size..(u + 1) * self.latent_size]
    }

    #[inline]
    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.latent_size..(i + 1) * self.latent_size]
    }

    fn all_finite(&self) -> bool {
        self.global.is_finite()
            && self
                .user_bias
                .iter()
                .chain(&self.item_bias)
                .chain(&self.user_factors)
                .chain(&self.item_factors)
                .all(|v| v.is_finite())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    Random,
    Constant { value: f64 },
    Popularity,
    Factors(Factors),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    users: Vec<String>,
    items: Vec<String>,
    popularity: Vec<u32>,
    state: ModelState,
    #[serde(skip)]
    user_index: HashMap<String, u32>,
}

const CONTAINER_FORMAT: &str = "strateval-model";
const CONTAINER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Container {
    format: String,
    version: u32,
    model: TrainedModel,
}

/// Trains a model on `train`.
pub fn fit(config: &ModelConfig, train: &Dataset) -> Result<TrainedModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Fit(format!("{}: training set is empty", config.label())));
    }
    let state = match config.algorithm {
        Algorithm::Bo => ModelState::Random,
        Algorithm::Ga => {
            let sum: f64 = train.interactions().iter().map(|x| x.rating as f64).sum();
            ModelState::Constant { value: sum / train.len() as f64 }
        }
        Algorithm::Pop => ModelState::Popularity,
        Algorithm::Mf => ModelState::Factors(mf::train(config, train)?),
        Algorithm::Bpr => ModelState::Factors(bpr::train(config, train)?),
        Algorithm::Wmf => ModelState::Factors(wmf::train(config, train)?),
    };
    if let ModelState::Factors(f) = &state {
        if !f.all_finite() {
            return Err(Error::NonFiniteLoss {
                algorithm: config.label(),
                epoch: config.epochs,
            });
        }
    }
    Ok(TrainedModel::new(
        config.clone(),
        train.users().to_vec(),
        train.items().to_vec(),
        train.item_counts().to_vec(),
        state,
    ))
}

/// One model per baseline and one per (factor algorithm, latent size), in
/// the order of [`Algorithm::ALL`] and then ascending size.
pub fn sweep_configs(algorithms: &[Algorithm], latent_sizes: &[usize], base: &ModelConfig) -> Vec<ModelConfig> {
    let mut algs = algorithms.to_vec();
    algs.sort();
    algs.dedup();
    let mut sizes = latent_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::new();
    for a in algs {
        if a.is_factor_model() {
            for &m in &sizes {
                out.push(ModelConfig { algorithm: a, latent_size: m, ..base.clone() });
            }
        } else {
            out.push(ModelConfig { algorithm: a, ..base.clone() });
        }
    }
    out
}

pub fn sweep(
    algorithms: &[Algorithm],
    latent_sizes: &[usize],
    base: &ModelConfig,
    train: &Dataset,
) -> Result<Vec<TrainedModel>> {
    sweep_configs(algorithms, latent_sizes, base)
        .iter()
        .map(|c| fit(c, train).map_err(|e| Error::Fit(format!("{}: {e}", c.label()))))
        .collect()
}

/// The standard latent sizes 10, 20, …, 100.
pub fn standard_sizes() -> Vec<usize> {
    (1..=10).map(|k| k * 10).collect()
}

impl TrainedModel {
    fn new(config: ModelConfig, users: Vec<String>, items: Vec<String>, popularity: Vec<u32>, state: ModelState) -> Self {
        let user_index = users.iter().enumerate().map(|(p, u)| (u.clone(), p as u32)).collect();
        TrainedModel { config, users, items, popularity, state, user_index }
    }

    pub fn label(&self) -> String {
        self.config.label()
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    /// Scores of the model's own training items for `user`.
    pub fn score(&self, user: &str) -> Vec<f64> {
        let scorer = self.scorer(&self.items);
        let mut out = vec![0.0; self.items.len()];
        scorer.score_into(user, &mut out);
        out
    }

    /// A scorer aligned with an arbitrary item catalog. Items the model has
    /// not seen get zero popularity and a zero latent vector.
    pub fn scorer<'a>(&'a self, catalog: &[String]) -> ModelScorer<'a> {
        let index: HashMap<&str, u32> = self.items.iter().enumerate().map(|(p, i)| (i.as_str(), p as u32)).collect();
        let item_map = catalog.iter().map(|i| index.get(i.as_str()).copied()).collect();
        let cold = match &self.state {
            ModelState::Factors(f) => {
                let mut cold = vec![false; self.users.len()];
                for &u in &f.cold_users {
                    cold[u as usize] = true;
                }
                cold
            }
            _ => Vec::new(),
        };
        let catalog_hashes = match self.state {
            ModelState::Random => catalog.iter().map(|i| fnv1a(i.as_bytes())).collect(),
            _ => Vec::new(),
        };
        ModelScorer { model: self, item_map, cold, catalog_hashes }
    }

    pub fn to_json(&self) -> Result<String> {
        let c = Container {
            format: CONTAINER_FORMAT.into(),
            version: CONTAINER_VERSION,
            model: self.clone(),
        };
        serde_json::to_string(&c).map_err(|e| Error::Container(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Container = serde_json::from_str(s).map_err(|e| Error::Container(e.to_string()))?;
        if c.format != CONTAINER_FORMAT {
            return Err(Error::Container(format!("unexpected format {:?}", c.format)));
        }
        if c.version != CONTAINER_VERSION {
            return Err(Error::Container(format!("unsupported version {}", c.version)));
        }
        let m = c.model;
        Ok(TrainedModel::new(m.config, m.users, m.items, m.popularity, m.state))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A model bound to a catalog.
pub struct ModelScorer<'a> {
    model: &'a TrainedModel,
    item_map: Vec<Option<u32>>,
    cold: Vec<bool>,
    catalog_hashes: Vec<u64>,
}

impl ModelScorer<'_> {
    fn popularity_into(&self, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.item_map) {
            *o = m.map_or(0.0, |i| self.model.popularity[i as usize] as f64);
        }
    }
}

impl Scorer for ModelScorer<'_> {
    fn score_into(&self, user: &str, out: &mut [f64]) {
        let model = self.model;
        match &model.state {
            ModelState::Random => {
                let u = splitmix(model.config.seed ^ fnv1a(user.as_bytes()));
                for (o, &h) in out.iter_mut().zip(&self.catalog_hashes) {
                    *o = (splitmix(u ^ h) >> 11) as f64 / (1u64 << 53) as f64;
                }
            }
            ModelState::Constant { value } => out.fill(*value),
            ModelState::Popularity => self.popularity_into(out),
            ModelState::Factors(f) => {
                let u = match model.user_index.get(user) {
                    Some(&u) if !self.cold[u as usize] => u as usize,
                    _ => return self.popularity_into(out),
                };
                let base = f.global + f.user_bias[u];
                let pu = f.user(u);
                for (o, m) in out.iter_mut().zip(&self.item_map) {
                    *o = match m {
                        Some(i) => {
                            let i = *i as usize;
                            base + f.item_bias[i] + dot(pu, f.item(i))
                        }
                        None => base,
                    };
                }
            }
        }
    }
}

/// Training rng for a configuration.
pub(crate) fn rng_for(config: &ModelConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LoopKind, RawInteraction};
    use rand::Rng;

    fn ds(rows: &[(&str, &str, u8)]) -> Dataset {
        Dataset::from_raw(rows.iter().map(|&(u, i, r)| RawInteraction::new(u, i, r)), LoopKind::Closed)
    }

    fn argsort_desc(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
        idx
    }

    #[test]
    fn popularity_scorer() {
        let train = ds(&[("u1", "a", 5), ("u2", "a", 3), ("u3", "a", 1), ("u1", "b", 5)]);
        let m = fit(&ModelConfig::new(Algorithm::Pop), &train).unwrap();
        for user in ["u1", "u2", "nobody"] {
            let s = m.score(user);
            assert!(s[0] > s[1]);
        }
        assert_eq!(m.score("u1"), m.score("u3"));
    }

    #[test]
    fn constant_and_random() {
        let train = ds(&[("u1", "a", 5), ("u2", "b", 3), ("u1", "c", 1)]);
        let ga = fit(&ModelConfig::new(Algorithm::Ga), &train).unwrap();
        let s = ga.score("u1");
        assert!(s.iter().all(|&v| v == 3.0));
        let bo = fit(&ModelConfig::new(Algorithm::Bo).with_seed(9), &train).unwrap();
        assert_eq!(bo.score("u1"), bo.score("u1"));
        assert_ne!(bo.score("u1"), bo.score("u2"));
        let other = fit(&ModelConfig::new(Algorithm::Bo).with_seed(10), &train).unwrap();
        assert_ne!(bo.score("u1"), other.score("u1"));
        assert!(bo.score("u1").iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn empty_train_and_bad_config() {
        let empty = Dataset::empty(LoopKind::Closed);
        assert!(matches!(fit(&ModelConfig::new(Algorithm::Pop), &empty), Err(Error::Fit(_))));
        let train = ds(&[("u", "a", 5)]);
        let mut c = ModelConfig::new(Algorithm::Mf);
        c.learning_rate = f64::NAN;
        assert!(fit(&c, &train).is_err());
        c.learning_rate = 0.01;
        c.latent_size = 0;
        assert!(fit(&c, &train).is_err());
    }

    #[test]
    fn sweep_counts() {
        let base = ModelConfig::default();
        let two = sweep_configs(&[Algorithm::Mf, Algorithm::Pop], &[20, 10], &base);
        let labels: Vec<String> = two.iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["POP", "MF-10", "MF-20"]);
        assert_eq!(sweep_configs(&Algorithm::ALL, &standard_sizes(), &base).len(), 33);
        assert!(sweep_configs(&[Algorithm::Mf, Algorithm::Wmf], &[], &base).is_empty());
    }

    #[test]
    fn mf_fits_rank_one() {
        // Integer rank-one matrix: a_u, b_i ∈ {1, 2}, ratings a_u · b_i ∈ {1, 2, 4}.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<u8> = (0..20).map(|_| rng.random_range(1..=2)).collect();
        let b: Vec<u8> = (0..20).map(|_| rng.random_range(1..=2)).collect();
        let mut rows = Vec::new();
        for u in 0..20 {
            for i in 0..20 {
                if rng.random_bool(0.5) {
                    rows.push(RawInteraction::new(format!("u{u:02}"), format!("i{i:02}"), a[u] * b[i]));
                }
            }
        }
        let train = Dataset::from_raw(rows, LoopKind::Closed);
        let mut c = ModelConfig::new(Algorithm::Mf).with_latent_size(8).with_seed(1);
        c.epochs = 200;
        c.learning_rate = 0.05;
        c.regularization = 0.001;
        let m = fit(&c, &train).unwrap();
        let scorer = m.scorer(train.items());
        let mut out = vec![0.0; train.n_items()];
        let mut se = 0.0;
        for (u, user) in train.users().iter().enumerate() {
            scorer.score_into(user, &mut out);
            for x in train.user_interactions(u as u32) {
                let e = out[x.item as usize] - x.rating as f64;
                se += e * e;
            }
        }
        let rmse = (se / train.len() as f64).sqrt();
        assert!(rmse <= 0.1, "rmse {rmse}");
    }

    #[test]
    fn bpr_prefers_the_positive() {
        let mut wins = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut rows = vec![RawInteraction::new("target", "a", 5)];
            for u in 0..15 {
                for i in 0..12 {
                    if rng.random_bool(0.3) {
                        rows.push(RawInteraction::new(format!("u{u:02}"), format!("i{i:02}"), 5));
                    }
                }
                if rng.random_bool(0.3) {
                    rows.push(RawInteraction::new(format!("u{u:02}"), "a", 5));
                }
            }
            let train = Dataset::from_raw(rows, LoopKind::Closed);
            let mut c = ModelConfig::new(Algorithm::Bpr).with_latent_size(10).with_seed(seed);
            c.learning_rate = 0.05;
            let m = fit(&c, &train).unwrap();
            let s = m.score("target");
            let a = train.item_index("a").unwrap() as usize;
            let mut others: Vec<f64> = (0..s.len()).filter(|&i| i != a).map(|i| s[i]).collect();
            others.sort_by(f64::total_cmp);
            let median = 0.5 * (others[(others.len() - 1) / 2] + others[others.len() / 2]);
            if s[a] > median {
                wins += 1;
            }
        }
        assert!(wins >= 95, "{wins} of 100");
    }

    #[test]
    fn wmf_recovers_blocks() {
        // two user groups, each consuming its own half of the catalog
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        for u in 0..40 {
            for i in 0..20 {
                let same = (u < 20) == (i < 10);
                if same && rng.random_bool(0.6) {
                    rows.push(RawInteraction::new(format!("u{u:02}"), format!("i{i:02}"), 5));
                }
            }
        }
        let train = Dataset::from_raw(rows, LoopKind::Closed);
        let m = fit(&ModelConfig::new(Algorithm::Wmf).with_latent_size(4), &train).unwrap();
        for (user, lo) in [("u03", 0), ("u33", 10)] {
            let s = m.score(user);
            let top = argsort_desc(&s);
            assert!(top[..10].iter().all(|&i| (lo..lo + 10).contains(&i)), "{user}: {top:?}");
        }
    }

    #[test]
    fn cold_start_and_unseen_items() {
        let train = ds(&[("u1", "a", 5), ("u1", "b", 5), ("u2", "a", 5), ("u2", "c", 1)]);
        for alg in [Algorithm::Mf, Algorithm::Bpr, Algorithm::Wmf] {
            let m = fit(&ModelConfig::new(alg).with_latent_size(3), &train).unwrap();
            let catalog: Vec<String> = ["a", "b", "c", "zz"].iter().map(|s| s.to_string()).collect();
            let mut out = vec![0.0; 4];
            m.scorer(&catalog).score_into("stranger", &mut out);
            assert_eq!(out, vec![2.0, 1.0, 1.0, 0.0]);
            let again = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(again.score("u1"), m.score("u1"));
            assert_eq!(again, m);
        }
    }

    #[test]
    fn deterministic_fit() {
        let train = ds(&[("u1", "a", 5), ("u1", "b", 4), ("u2", "a", 2), ("u2", "c", 5), ("u3", "b", 5)]);
        for alg in [Algorithm::Mf, Algorithm::Bpr, Algorithm::Wmf] {
            let c = ModelConfig::new(alg).with_latent_size(5).with_seed(3);
            assert_eq!(fit(&c, &train).unwrap(), fit(&c, &train).unwrap());
        }
    }

    #[test]
    fn container_rejects_other_versions() {
        let train = ds(&[("u1", "a", 5)]);
        let m = fit(&ModelConfig::new(Algorithm::Pop), &train).unwrap();
        let json = m.to_json().unwrap().replace("\"version\":1", "\"version\":99");
        assert!(matches!(TrainedModel::from_json(&json), Err(Error::Container(_))));
        assert!(TrainedModel::from_json("{}").is_err());
    }
}
