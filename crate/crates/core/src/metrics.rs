//! Per-user rankings and nDCG.
//!
//! An [`EvalContext`] fixes the candidate catalog (every item seen in the
//! training set or any test set), the user universe and each user's
//! training items, which are excluded from that user's candidates. Scores
//! from a model are turned into a [`RankedList`] per user once and can then
//! be scored against any test set and cutoff.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// How per-item credits are combined into one value per user.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// DCG@k divided by the ideal DCG@k.
    #[default]
    Ndcg,
    /// Mean of `1/log2(rank+1)` over the user's relevant items, zero past
    /// the cutoff.
    MeanCredit,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricSpec {
    /// `None` scores the whole ranking.
    pub cutoff: Option<usize>,
    #[serde(default)]
    pub aggregation: Aggregation,
}

impl MetricSpec {
    pub fn at(k: usize) -> Self {
        MetricSpec { cutoff: Some(k), aggregation: Aggregation::Ndcg }
    }

    pub fn full() -> Self {
        MetricSpec { cutoff: None, aggregation: Aggregation::Ndcg }
    }

    /// nDCG@{5,10,20,30,100} and the uncut nDCG.
    pub fn standard() -> Vec<MetricSpec> {
        let mut specs: Vec<_> = [5, 10, 20, 30, 100].into_iter().map(MetricSpec::at).collect();
        specs.push(MetricSpec::full());
        specs
    }
}

impl std::fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.aggregation {
            Aggregation::Ndcg => "nDCG",
            Aggregation::MeanCredit => "credit",
        };
        match self.cutoff {
            Some(k) => write!(f, "{name}@{k}"),
            None => f.write_str(name),
        }
    }
}

impl std::str::FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, cutoff) = match lower.split_once('@') {
            Some((n, k)) => {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::Config(format!("bad cutoff in metric {s:?}")))?;
                if k == 0 {
                    return Err(Error::Config("cutoff must be positive".into()));
                }
                (n.to_string(), Some(k))
            }
            None => (lower, None),
        };
        let aggregation = match name.as_str() {
            "ndcg" => Aggregation::Ndcg,
            "credit" => Aggregation::MeanCredit,
            _ => return Err(Error::Config(format!("unknown metric {s:?}"))),
        };
        Ok(MetricSpec { cutoff, aggregation })
    }
}

/// Discount of a 1-based rank.
#[inline]
pub fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// DCG of a perfect ranking with `n` relevant items in the top `k`.
pub fn ideal_dcg(n_relevant: usize, cutoff: Option<usize>) -> f64 {
    let m = cutoff.map_or(n_relevant, |k| k.min(n_relevant));
    (1..=m).map(discount).sum()
}

/// Candidate catalog and user universe for evaluation.
#[derive(Clone, Debug)]
pub struct EvalContext {
    items: Arc<[String]>,
    item_index: HashMap<String, u32>,
    users: Arc<[String]>,
    user_index: HashMap<String, u32>,
    train_popularity: Vec<u32>,
    /// Position of each item when sorted by descending train popularity,
    /// then id.
    tie_rank: Vec<u32>,
    train_offsets: Vec<usize>,
    train_items: Vec<u32>,
    exclude_train: bool,
}

impl EvalContext {
    /// Catalog and users are the union over `train` and `tests`.
    pub fn new(train: &Dataset, tests: &[&Dataset]) -> Self {
        let mut items: Vec<String> = train.items().to_vec();
        let mut users: Vec<String> = train.users().to_vec();
        for t in tests {
            items.extend(t.items().iter().cloned());
            users.extend(t.users().iter().cloned());
        }
        items.sort_unstable();
        items.dedup();
        users.sort_unstable();
        users.dedup();
        let item_index: HashMap<String, u32> =
            items.iter().enumerate().map(|(p, i)| (i.clone(), p as u32)).collect();
        let user_index: HashMap<String, u32> =
            users.iter().enumerate().map(|(p, u)| (u.clone(), p as u32)).collect();

        let train_to_catalog: Vec<u32> = train.items().iter().map(|i| item_index[i]).collect();
        let mut train_popularity = vec![0u32; items.len()];
        for (t, &c) in train.item_counts().iter().enumerate() {
            train_popularity[train_to_catalog[t] as usize] = c;
        }
        let mut by_pop: Vec<u32> = (0..items.len() as u32).collect();
        by_pop.sort_by(|&a, &b| {
            train_popularity[b as usize]
                .cmp(&train_popularity[a as usize])
                .then(a.cmp(&b))
        });
        let mut tie_rank = vec![0u32; items.len()];
        for (pos, &i) in by_pop.iter().enumerate() {
            tie_rank[i as usize] = pos as u32;
        }

        let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); users.len()];
        for (tu, user) in train.users().iter().enumerate() {
            let u = user_index[user] as usize;
            per_user[u] = train
                .user_interactions(tu as u32)
                .iter()
                .map(|x| train_to_catalog[x.item as usize])
                .collect();
        }
        let mut train_offsets = Vec::with_capacity(users.len() + 1);
        train_offsets.push(0);
        let mut train_items = Vec::new();
        for list in per_user {
            train_items.extend(list);
            train_offsets.push(train_items.len());
        }

        EvalContext {
            items: items.into(),
            item_index,
            users: users.into(),
            user_index,
            train_popularity,
            tie_rank,
            train_offsets,
            train_items,
            exclude_train: true,
        }
    }

    /// Whether training items are removed from each user's candidates
    /// (default `true`).
    pub fn with_train_exclusion(mut self, exclude: bool) -> Self {
        self.exclude_train = exclude;
        self
    }

    pub fn items(&self) -> &Arc<[String]> {
        &self.items
    }

    pub fn users(&self) -> &Arc<[String]> {
        &self.users
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn item_index(&self, item: &str) -> Option<usize> {
        self.item_index.get(item).map(|&i| i as usize)
    }

    pub fn user_index(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).map(|&u| u as usize)
    }

    pub fn train_popularity(&self) -> &[u32] {
        &self.train_popularity
    }

    /// Catalog indices of a user's training items.
    pub fn train_items(&self, user: usize) -> &[u32] {
        &self.train_items[self.train_offsets[user]..self.train_offsets[user + 1]]
    }
}

/// One user's ranking of the candidate items.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub user: u32,
    /// Catalog indices, best first.
    pub order: Vec<u32>,
    /// 1-based rank per catalog index; 0 for items that are not candidates.
    pub rank_of: Vec<u32>,
}

impl RankedList {
    pub fn rank(&self, item: usize) -> Option<usize> {
        match self.rank_of.get(item) {
            Some(&r) if r > 0 => Some(r as usize),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Orders the user's candidates by descending `scores` (aligned with the
/// context's catalog). Ties fall back to descending train popularity and
/// then id. NaN scores rank last.
pub fn build_ranking(ctx: &EvalContext, user: usize, scores: &[f64]) -> RankedList {
    let n = ctx.n_items();
    assert_eq!(scores.len(), n, "scores must cover the catalog");
    let mut excluded = vec![false; n];
    if ctx.exclude_train {
        for &i in ctx.train_items(user) {
            excluded[i as usize] = true;
        }
    }
    let mut keyed: Vec<(f64, u32, u32)> = (0..n as u32)
        .filter(|&i| !excluded[i as usize])
        .map(|i| {
            let s = scores[i as usize];
            (if s.is_nan() { f64::NEG_INFINITY } else { s }, ctx.tie_rank[i as usize], i)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let order: Vec<u32> = keyed.into_iter().map(|k| k.2).collect();
    let mut rank_of = vec![0u32; n];
    for (r, &i) in order.iter().enumerate() {
        rank_of[i as usize] = r as u32 + 1;
    }
    RankedList { user: user as u32, order, rank_of }
}

/// Something that scores every catalog item for a user.
pub trait Scorer: Sync {
    /// Fills `out` (aligned with the catalog the scorer was built for).
    fn score_into(&self, user: &str, out: &mut [f64]);
}

impl<F: Fn(&str, &mut [f64]) + Sync> Scorer for F {
    fn score_into(&self, user: &str, out: &mut [f64]) {
        self(user, out)
    }
}

/// Rankings of one model for every user of a context.
#[derive(Clone, Debug)]
pub struct Rankings {
    pub lists: Vec<RankedList>,
}

impl Rankings {
    pub fn build(ctx: &EvalContext, scorer: &dyn Scorer) -> Self {
        let mut scores = vec![0.0; ctx.n_items()];
        let lists = (0..ctx.n_users())
            .map(|u| {
                scorer.score_into(&ctx.users[u], &mut scores);
                build_ranking(ctx, u, &scores)
            })
            .collect();
        Rankings { lists }
    }

    pub fn user(&self, u: usize) -> &RankedList {
        &self.lists[u]
    }
}

/// Per-user value over `relevant` catalog indices, each credit divided by
/// the matching entry of `propensity` when given. `None` when `relevant`
/// is empty.
pub fn user_value(
    ranked: &RankedList,
    relevant: &[u32],
    spec: MetricSpec,
    propensity: Option<&[f64]>,
) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let k = spec.cutoff.unwrap_or(usize::MAX);
    let mut gain = 0.0;
    for &i in relevant {
        if let Some(r) = ranked.rank(i as usize) {
            if r <= k {
                let g = discount(r);
                gain += match propensity {
                    Some(p) => g / p[i as usize],
                    None => g,
                };
            }
        }
    }
    let norm = match spec.aggregation {
        Aggregation::Ndcg => ideal_dcg(relevant.len(), spec.cutoff),
        Aggregation::MeanCredit => relevant.len() as f64,
    };
    Some(gain / norm)
}

/// nDCG (or mean credit) of one ranking; relevant items that are not
/// candidates earn nothing but still count in the normalizer.
pub fn ndcg(ranked: &RankedList, relevant: &[u32], spec: MetricSpec) -> Option<f64> {
    user_value(ranked, relevant, spec, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LoopKind, RawInteraction};
    use proptest::prelude::*;

    fn ds(rows: &[(&str, &str, u8)]) -> Dataset {
        Dataset::from_raw(
            rows.iter().map(|&(u, i, r)| RawInteraction::new(u, i, r)),
            LoopKind::Closed,
        )
    }

    fn names(ctx: &EvalContext, r: &RankedList) -> Vec<String> {
        r.order.iter().map(|&i| ctx.items()[i as usize].clone()).collect()
    }

    #[test]
    fn sort_contract() {
        let train = ds(&[("x", "a", 5), ("x", "b", 5), ("x", "c", 5)]);
        let test = ds(&[("u", "a", 5)]);
        let ctx = EvalContext::new(&train, &[&test]);
        let u = ctx.user_index("u").unwrap();
        let r = build_ranking(&ctx, u, &[0.9, 0.1, 0.5]);
        assert_eq!(names(&ctx, &r), ["a", "c", "b"]);
        assert_eq!(r.rank(ctx.item_index("c").unwrap()), Some(2));
    }

    #[test]
    fn exclusion_and_tie_rule() {
        let train = ds(&[
            ("u", "b", 5),
            ("x", "c", 5),
            ("y", "c", 5),
            ("x", "a", 5),
        ]);
        let ctx = EvalContext::new(&train, &[]);
        let u = ctx.user_index("u").unwrap();
        let r = build_ranking(&ctx, u, &[1.0, 1.0, 1.0]);
        assert_eq!(names(&ctx, &r), ["c", "a"]);
        assert_eq!(r.rank(ctx.item_index("b").unwrap()), None);

        let x = ctx.user_index("x").unwrap();
        let all = build_ranking(&ctx.clone().with_train_exclusion(false), x, &[0.0; 3]);
        assert_eq!(names(&ctx, &all), ["c", "a", "b"]);
    }

    #[test]
    fn ndcg_examples() {
        let r = RankedList { user: 0, order: vec![0, 1, 2], rank_of: vec![1, 2, 3] };
        let k5 = MetricSpec::at(5);
        assert_eq!(ndcg(&r, &[0], k5), Some(1.0));
        assert!((ndcg(&r, &[1], k5).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((ndcg(&r, &[1], k5).unwrap() - 0.6309).abs() < 1e-4);
        assert_eq!(ndcg(&r, &[2], MetricSpec::at(2)), Some(0.0));
        assert_eq!(ndcg(&r, &[], k5), None);
        // excluded relevant item: no gain, still in the ideal
        let partial = RankedList { user: 0, order: vec![0, 1], rank_of: vec![1, 2, 0] };
        let v = ndcg(&partial, &[0, 2], MetricSpec::full()).unwrap();
        assert!((v - 1.0 / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-15);
        // mean credit per relevant item
        let credit = MetricSpec { cutoff: Some(5), aggregation: Aggregation::MeanCredit };
        assert!((ndcg(&r, &[0, 1], credit).unwrap() - 0.5 * (1.0 + 1.0 / 3f64.log2())).abs() < 1e-15);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("nDCG@10".parse::<MetricSpec>().unwrap(), MetricSpec::at(10));
        assert_eq!("ndcg".parse::<MetricSpec>().unwrap(), MetricSpec::full());
        assert_eq!(MetricSpec::at(20).to_string(), "nDCG@20");
        assert!("ndcg@0".parse::<MetricSpec>().is_err());
        assert!("map@3".parse::<MetricSpec>().is_err());
        assert_eq!(MetricSpec::standard().len(), 6);
    }

    fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let head = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }

    fn dcg(order: &[u32], relevant: &[u32], k: usize) -> f64 {
        order
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, i)| relevant.contains(i))
            .map(|(r, _)| 1.0 / (r as f64 + 2.0).log2())
            .sum()
    }

    proptest! {
        #[test]
        fn matches_exhaustive_reference(
            n in 1usize..=7,
            scores in prop::collection::vec(0u8..4, 8),
            rel_mask in prop::collection::vec(any::<bool>(), 8),
            excl_mask in prop::collection::vec(prop::bool::weighted(0.2), 8),
            k in 1usize..10,
        ) {
            let relevant: Vec<u32> = (0..n as u32).filter(|&i| rel_mask[i as usize]).collect();
            prop_assume!(!relevant.is_empty());
            let candidates: Vec<u32> = (0..n as u32).filter(|&i| !excl_mask[i as usize]).collect();
            let mut order = candidates.clone();
            order.sort_by(|&a, &b| scores[b as usize].cmp(&scores[a as usize]).then(a.cmp(&b)));
            let mut rank_of = vec![0u32; n];
            for (r, &i) in order.iter().enumerate() {
                rank_of[i as usize] = r as u32 + 1;
            }
            let ranked = RankedList { user: 0, order: order.clone(), rank_of };
            let got = ndcg(&ranked, &relevant, MetricSpec::at(k)).unwrap();

            // ideal over every arrangement of all items, excluded ones included
            let all: Vec<u32> = (0..n as u32).collect();
            let best = permutations(&all).iter().map(|p| dcg(p, &relevant, k)).fold(0.0, f64::max);
            let expected = dcg(&order, &relevant, k) / best;
            prop_assert!((got - expected).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
        }

        #[test]
        fn promoting_a_relevant_item_never_hurts(n in 2usize..30, pos in 1usize..30, k in 1usize..30) {
            let pos = pos.min(n - 1);
            let order: Vec<u32> = (0..n as u32).collect();
            let rank_of: Vec<u32> = (1..=n as u32).collect();
            let ranked = RankedList { user: 0, order: order.clone(), rank_of };
            let item = pos as u32;
            let before = ndcg(&ranked, &[item], MetricSpec::at(k)).unwrap();
            let mut promoted = order.clone();
            promoted.swap(pos - 1, pos);
            let mut rank_of = vec![0u32; n];
            for (r, &i) in promoted.iter().enumerate() {
                rank_of[i as usize] = r as u32 + 1;
            }
            let after = ndcg(&RankedList { user: 0, order: promoted, rank_of }, &[item], MetricSpec::at(k)).unwrap();
            prop_assert!(after >= before);
        }
    }
}
