//! Synthetic closed-loop and open-loop feedback.
//!
//! Users and items get standard normal latent vectors; each user's
//! relevant items are the top `relevance_quantile` fraction by affinity. A
//! deployed policy then exposes items over several sessions and every
//! exposure produces a rating: 5 for relevant items and 1 otherwise, each
//! flipped with probability `interact_noise`. The closed-loop log is split
//! 80/20 into train and test. The open-loop test exposes items uniformly at
//! random once per user.

use rand::seq::index::{sample, sample_weighted};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_holdout, Dataset, LoopKind, RawInteraction};
use crate::error::{Error, Result};
use crate::models::{fit, Algorithm, ModelConfig};
use crate::stats::{gini, spearman};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Samples items with probability proportional to their current
    /// popularity count plus one; see [`PopularitySignal`].
    #[default]
    PopularityBiased,
    /// Shows the items an MF model, fitted on one uniform bootstrap round,
    /// scores highest among those the user has not been shown yet.
    TrainedMf,
    UniformRandom,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "popularity_biased" | "popularity" => Ok(Policy::PopularityBiased),
            "trained_mf" | "mf" => Ok(Policy::TrainedMf),
            "uniform_random" | "uniform" => Ok(Policy::UniformRandom),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::PopularityBiased => "popularity_biased",
            Policy::TrainedMf => "trained_mf",
            Policy::UniformRandom => "uniform_random",
        })
    }
}

/// What the popularity-biased policy counts. Counting every interaction
/// turns the policy into a plain Polya urn whose item shares settle near a
/// flat Dirichlet, so the head never pulls away; counting positive ratings
/// lets widely liked items compound their lead.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularitySignal {
    /// Distinct users who interacted with the item, whatever the rating.
    AllInteractions,
    /// Distinct users who rated the item positively.
    #[default]
    Positives,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub true_rank: usize,
    /// Items exposed to each user per session.
    pub exposure_budget: usize,
    pub sessions: usize,
    pub deployed_policy: Policy,
    pub popularity_signal: PopularitySignal,
    pub interact_noise: f64,
    pub relevance_quantile: f64,
    /// Share of the closed-loop log used for training.
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_users: 2000,
            n_items: 500,
            true_rank: 10,
            exposure_budget: 10,
            sessions: 5,
            deployed_policy: Policy::PopularityBiased,
            popularity_signal: PopularitySignal::default(),
            interact_noise: 0.05,
            relevance_quantile: 0.1,
            train_ratio: 0.8,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.true_rank == 0 || self.sessions == 0 {
            return Err(Error::Config("sizes and session count must be positive".into()));
        }
        if self.exposure_budget == 0 || self.exposure_budget > self.n_items {
            return Err(Error::Config(format!(
                "exposure budget {} must lie in 1..={}",
                self.exposure_budget, self.n_items
            )));
        }
        if !(0.0..=1.0).contains(&self.interact_noise) {
            return Err(Error::Config("interact_noise must be a probability".into()));
        }
        if !(self.relevance_quantile > 0.0 && self.relevance_quantile < 1.0) {
            return Err(Error::Config("relevance_quantile must lie in (0, 1)".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config("train_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.deployed_policy = policy;
        self
    }
}

/// Output of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackLog {
    pub config: SimConfig,
    pub closed_train: Dataset,
    pub closed_test: Dataset,
    pub open_test: Dataset,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Closed-loop exposures per item, repeats included.
    pub exposure_counts: Vec<u64>,
    /// Distinct items shown to each user in the closed loop, sorted.
    pub exposed: Vec<Vec<u32>>,
    /// Row-major `n_users × n_items` ground-truth relevance.
    pub relevance: Vec<bool>,
}

impl FeedbackLog {
    pub fn is_relevant(&self, user: usize, item: usize) -> bool {
        self.relevance[user * self.item_ids.len() + item]
    }

    /// Closed-loop train and test together.
    pub fn closed(&self) -> Dataset {
        Dataset::merge(&[&self.closed_train, &self.closed_test])
    }
}

fn padded(prefix: char, k: usize, n: usize) -> String {
    let width = n.to_string().len().max(4);
    format!("{prefix}{:0width$}", k + 1)
}

pub fn generate(config: &SimConfig) -> Result<FeedbackLog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (nu, ni, r) = (config.n_users, config.n_items, config.true_rank);
    let user_ids: Vec<String> = (0..nu).map(|u| padded('u', u, nu)).collect();
    let item_ids: Vec<String> = (0..ni).map(|i| padded('i', i, ni)).collect();

    let uv: Vec<f64> = (0..nu * r).map(|_| rng.sample(StandardNormal)).collect();
    let iv: Vec<f64> = (0..ni * r).map(|_| rng.sample(StandardNormal)).collect();
    let n_rel = ((config.relevance_quantile * ni as f64).round() as usize).clamp(1, ni);
    let mut relevance = vec![false; nu * ni];
    let mut affinity: Vec<(f64, usize)> = Vec::with_capacity(ni);
    for u in 0..nu {
        affinity.clear();
        let pu = &uv[u * r..(u + 1) * r];
        for i in 0..ni {
            let qi = &iv[i * r..(i + 1) * r];
            affinity.push((pu.iter().zip(qi).map(|(a, b)| a * b).sum(), i));
        }
        affinity.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &affinity[..n_rel] {
            relevance[u * ni + i] = true;
        }
    }

    let rate = |rng: &mut ChaCha8Rng, u: usize, i: usize| -> u8 {
        let relevant = relevance[u * ni + i];
        let flip = config.interact_noise > 0.0 && rng.random_bool(config.interact_noise);
        if relevant != flip {
            5
        } else {
            1
        }
    };

    // interactions[u][i]: last rating, 0 when never shown
    let mut last = vec![0u8; nu * ni];
    let mut exposure_counts = vec![0u64; ni];
    let mut interaction_counts = vec![0u64; ni];
    let budget = config.exposure_budget;

    let mf_scores = match config.deployed_policy {
        Policy::TrainedMf => Some(bootstrap_scores(config, &user_ids, &item_ids, &rate, &mut rng)?),
        _ => None,
    };

    let mut slate: Vec<usize> = Vec::with_capacity(budget);
    for _ in 0..config.sessions {
        for u in 0..nu {
            slate.clear();
            match config.deployed_policy {
                Policy::UniformRandom => slate.extend(sample(&mut rng, ni, budget).into_iter()),
                Policy::PopularityBiased => {
                    let picked = sample_weighted(&mut rng, ni, |i| interaction_counts[i] as f64 + 1.0, budget)
                        .map_err(|e| Error::Config(format!("weighted sampling failed: {e}")))?;
                    slate.extend(picked.into_iter());
                }
                Policy::TrainedMf => {
                    let scores = mf_scores.as_ref().expect("scores for the MF policy");
                    let row = &scores[u * ni..(u + 1) * ni];
                    let mut fresh: Vec<usize> = (0..ni).filter(|&i| last[u * ni + i] == 0).collect();
                    if fresh.len() < budget {
                        fresh = (0..ni).collect();
                    }
                    fresh.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                    slate.extend_from_slice(&fresh[..budget]);
                }
            }
            for &i in &slate {
                exposure_counts[i] += 1;
                let before = last[u * ni + i];
                let rating = rate(&mut rng, u, i);
                last[u * ni + i] = rating;
                let counted = |r: u8| match config.popularity_signal {
                    PopularitySignal::AllInteractions => r > 0,
                    PopularitySignal::Positives => r == 5,
                };
                match (counted(before), counted(rating)) {
                    (false, true) => interaction_counts[i] += 1,
                    (true, false) => interaction_counts[i] -= 1,
                    _ => {}
                }
            }
        }
    }

    let mut closed = Vec::new();
    let mut exposed = vec![Vec::new(); nu];
    for u in 0..nu {
        for i in 0..ni {
            let rating = last[u * ni + i];
            if rating > 0 {
                exposed[u].push(i as u32);
                closed.push(RawInteraction::new(user_ids[u].clone(), item_ids[i].clone(), rating));
            }
        }
    }
    let closed = Dataset::from_raw(closed, LoopKind::Closed);
    let split = split_holdout(&closed, config.train_ratio, rng.random())?;

    let mut open = Vec::with_capacity(nu * budget);
    for u in 0..nu {
        let mut items: Vec<usize> = sample(&mut rng, ni, budget).into_vec();
        items.sort_unstable();
        for i in items {
            let rating = rate(&mut rng, u, i);
            open.push(RawInteraction::new(user_ids[u].clone(), item_ids[i].clone(), rating));
        }
    }

    Ok(FeedbackLog {
        config: config.clone(),
        closed_train: split.train,
        closed_test: split.test,
        open_test: Dataset::from_raw(open, LoopKind::Open),
        user_ids,
        item_ids,
        exposure_counts,
        exposed,
        relevance,
    })
}

/// Scores of an MF model trained on one uniform round of exposures.
fn bootstrap_scores(
    config: &SimConfig,
    user_ids: &[String],
    item_ids: &[String],
    rate: &dyn Fn(&mut ChaCha8Rng, usize, usize) -> u8,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let (nu, ni) = (user_ids.len(), item_ids.len());
    let mut rows = Vec::with_capacity(nu * config.exposure_budget);
    for u in 0..nu {
        for i in sample(rng, ni, config.exposure_budget) {
            rows.push(RawInteraction::new(user_ids[u].clone(), item_ids[i].clone(), rate(rng, u, i)));
        }
    }
    let boot = Dataset::from_raw(rows, LoopKind::Closed);
    let mut mc = ModelConfig::new(Algorithm::Mf).with_latent_size(config.true_rank).with_seed(rng.random());
    mc.epochs = 30;
    let model = fit(&mc, &boot)?;
    let scorer = model.scorer(item_ids);
    let mut scores = vec![0.0; nu * ni];
    for u in 0..nu {
        crate::metrics::Scorer::score_into(&scorer, &user_ids[u], &mut scores[u * ni..(u + 1) * ni]);
    }
    Ok(scores)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkewSummary {
    pub exposure_gini: f64,
    /// Share of closed-loop interactions on the 1% most exposed items.
    pub head_share: f64,
    /// Spearman correlation of exposure and interaction counts per item.
    pub exposure_interaction_spearman: f64,
}

pub fn audit_skew(log: &FeedbackLog) -> SkewSummary {
    let closed = log.closed();
    if closed.is_empty() || log.exposure_counts.iter().all(|&c| c == 0) {
        return SkewSummary::default();
    }
    let exposures: Vec<f64> = log.exposure_counts.iter().map(|&c| c as f64).collect();
    let interactions: Vec<f64> = log.item_ids.iter().map(|i| closed.item_count(i) as f64).collect();

    let n_head = (log.item_ids.len() as f64 * 0.01).ceil().max(1.0) as usize;
    let mut order: Vec<usize> = (0..exposures.len()).collect();
    order.sort_by(|&a, &b| exposures[b].total_cmp(&exposures[a]).then(a.cmp(&b)));
    let head: f64 = order[..n_head].iter().map(|&i| interactions[i]).sum();

    SkewSummary {
        exposure_gini: gini(&exposures),
        head_share: head / closed.len() as f64,
        exposure_interaction_spearman: spearman(&exposures, &interactions)
            .ok()
            .flatten()
            .unwrap_or(0.0),
    }
}
