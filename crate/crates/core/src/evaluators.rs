//! Holdout, IPS and stratified estimators of recommendation accuracy.
//!
//! All three share one per-user routine ([`user_value`]) and accumulate in
//! canonical user order, so unit propensities reproduce the holdout value
//! exactly and a single stratum reproduces it as well.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{user_value, EvalContext, MetricSpec, Rankings};
use crate::propensity::PropensityTable;
use crate::stats::{paired_ttest, TTest};
use crate::strata::{StrataAssignment, StratumWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Holdout,
    Ips,
    Stratified,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Holdout => "holdout",
            Method::Ips => "ips",
            Method::Stratified => "stratified",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "holdout" => Ok(Method::Holdout),
            "ips" => Ok(Method::Ips),
            "stratified" => Ok(Method::Stratified),
            other => Err(Error::Config(format!("unknown evaluation method {other:?}"))),
        }
    }
}

/// A test set expressed in the catalog indices of an [`EvalContext`].
#[derive(Clone, Debug)]
pub struct TestView {
    users: Arc<[String]>,
    /// Relevant test items per context user.
    relevant: Vec<Vec<u32>>,
    /// Every test interaction's item, per context user.
    interacted: Vec<Vec<u32>>,
    n_interactions: usize,
}

impl TestView {
    pub fn new(ctx: &EvalContext, test: &Dataset) -> Result<Self> {
        let mut relevant = vec![Vec::new(); ctx.n_users()];
        let mut interacted = vec![Vec::new(); ctx.n_users()];
        let item_map: Vec<u32> = test
            .items()
            .iter()
            .map(|i| {
                ctx.item_index(i)
                    .map(|p| p as u32)
                    .ok_or_else(|| Error::Evaluation(format!("test item {i:?} is not in the catalog")))
            })
            .collect::<Result<_>>()?;
        for (tu, user) in test.users().iter().enumerate() {
            let u = ctx
                .user_index(user)
                .ok_or_else(|| Error::Evaluation(format!("no ranking for test user {user:?}")))?;
            for x in test.user_interactions(tu as u32) {
                let item = item_map[x.item as usize];
                interacted[u].push(item);
                if x.relevant {
                    relevant[u].push(item);
                }
            }
        }
        Ok(TestView {
            users: ctx.users().clone(),
            relevant,
            interacted,
            n_interactions: test.len(),
        })
    }

    pub fn relevant(&self, user: usize) -> &[u32] {
        &self.relevant[user]
    }

    pub fn n_interactions(&self) -> usize {
        self.n_interactions
    }

    pub fn users(&self) -> &Arc<[String]> {
        &self.users
    }
}

/// One stratum's row in a stratified report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    /// 1-based stratum.
    pub stratum: usize,
    pub value: Option<f64>,
    pub weight: f64,
    pub users: usize,
    pub interactions: usize,
    /// Only one user supports the value.
    pub low_support: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub spec: MetricSpec,
    pub overall: f64,
    /// User ids, aligned with `per_user`.
    pub users: Arc<[String]>,
    /// `None` for users without relevant test feedback.
    pub per_user: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_stratum: Option<Vec<StratumRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata_k: Option<usize>,
}

impl EvalReport {
    pub fn defined_users(&self) -> usize {
        self.per_user.iter().filter(|v| v.is_some()).count()
    }
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values.iter().flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn check_alignment(rankings: &Rankings, test: &TestView) -> Result<()> {
    if rankings.lists.len() != test.relevant.len() {
        return Err(Error::Evaluation(format!(
            "rankings cover {} users but the test view has {}",
            rankings.lists.len(),
            test.relevant.len()
        )));
    }
    Ok(())
}

/// Mean per-user nDCG over users with at least one relevant test item.
pub fn holdout_eval(rankings: &Rankings, test: &TestView, spec: MetricSpec) -> Result<EvalReport> {
    check_alignment(rankings, test)?;
    let per_user: Vec<Option<f64>> = rankings
        .lists
        .iter()
        .zip(&test.relevant)
        .map(|(r, rel)| user_value(r, rel, spec, None))
        .collect();
    let overall = mean_defined(&per_user)
        .ok_or_else(|| Error::Evaluation("no test user has a relevant item".into()))?;
    Ok(EvalReport {
        method: Method::Holdout,
        spec,
        overall,
        users: test.users.clone(),
        per_user,
        per_stratum: None,
        strata_k: None,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IpsOptions {
    /// Propensities below this value are raised to it.
    pub clip: Option<f64>,
    /// Divide each user's weighted gain by the mean inverse propensity of
    /// their relevant items.
    pub self_normalized: bool,
}

/// Inverse propensity scoring: every relevant item's credit is divided by
/// its propensity. With all propensities equal to one this is the holdout
/// estimate.
pub fn ips_eval(
    rankings: &Rankings,
    test: &TestView,
    ctx: &EvalContext,
    propensities: &PropensityTable,
    spec: MetricSpec,
    options: IpsOptions,
) -> Result<EvalReport> {
    check_alignment(rankings, test)?;
    let mut p = vec![f64::NAN; ctx.n_items()];
    for (pos, item) in propensities.items().iter().enumerate() {
        if let Some(i) = ctx.item_index(item) {
            let mut v = propensities.scores()[pos];
            if let Some(c) = options.clip {
                v = v.max(c);
            }
            p[i] = v;
        }
    }
    let mut per_user = Vec::with_capacity(rankings.lists.len());
    for (r, rel) in rankings.lists.iter().zip(&test.relevant) {
        for &i in rel {
            let v = p[i as usize];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Propensity(ctx.items()[i as usize].clone()));
            }
        }
        let mut value = user_value(r, rel, spec, Some(&p));
        if options.self_normalized {
            if let Some(v) = value.as_mut() {
                let inv_mean = rel.iter().map(|&i| 1.0 / p[i as usize]).sum::<f64>() / rel.len() as f64;
                *v /= inv_mean;
            }
        }
        per_user.push(value);
    }
    let overall = mean_defined(&per_user)
        .ok_or_else(|| Error::Evaluation("no test user has a relevant item".into()))?;
    Ok(EvalReport {
        method: Method::Ips,
        spec,
        overall,
        users: test.users.clone(),
        per_user,
        per_stratum: None,
        strata_k: None,
    })
}

/// Per-stratum accuracy of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct PerStratum {
    pub spec: MetricSpec,
    pub users: Arc<[String]>,
    /// Mean over users with relevant test items in the stratum.
    pub values: Vec<Option<f64>>,
    /// Per stratum, per context user.
    pub per_user: Vec<Vec<Option<f64>>>,
    pub user_counts: Vec<usize>,
    /// All test interactions per stratum, relevant or not.
    pub interaction_counts: Vec<usize>,
}

impl PerStratum {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Weights from this test set's feedback share per stratum.
    pub fn weights(&self) -> Result<StratumWeights> {
        StratumWeights::from_counts(self.interaction_counts.clone())
    }
}

/// Catalog-aligned 1-based strata; fails on a test item the assignment
/// does not cover.
pub fn catalog_strata(ctx: &EvalContext, assignment: &StrataAssignment) -> Vec<Option<u16>> {
    ctx.items()
        .iter()
        .map(|i| assignment.stratum(i).map(|s| s as u16))
        .collect()
}

/// Evaluates every stratum separately. Credited relevant items are limited
/// to the stratum while the ranking still covers all candidates.
pub fn per_stratum_eval(
    rankings: &Rankings,
    test: &TestView,
    ctx: &EvalContext,
    assignment: &StrataAssignment,
    spec: MetricSpec,
) -> Result<PerStratum> {
    let strata = catalog_strata(ctx, assignment);
    per_stratum_eval_with(rankings, test, ctx, &strata, assignment.k(), spec)
}

/// As [`per_stratum_eval`] with precomputed catalog strata.
pub fn per_stratum_eval_with(
    rankings: &Rankings,
    test: &TestView,
    ctx: &EvalContext,
    strata: &[Option<u16>],
    k: usize,
    spec: MetricSpec,
) -> Result<PerStratum> {
    check_alignment(rankings, test)?;
    let stratum = |i: u32| -> Result<usize> {
        strata[i as usize]
            .map(|s| s as usize - 1)
            .ok_or_else(|| Error::Unassigned(ctx.items()[i as usize].clone()))
    };
    let mut interaction_counts = vec![0usize; k];
    for items in &test.interacted {
        for &i in items {
            interaction_counts[stratum(i)?] += 1;
        }
    }
    let mut per_user = vec![Vec::with_capacity(rankings.lists.len()); k];
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (r, rel) in rankings.lists.iter().zip(&test.relevant) {
        for b in buckets.iter_mut() {
            b.clear();
        }
        for &i in rel {
            buckets[stratum(i)?].push(i);
        }
        for (s, b) in buckets.iter().enumerate() {
            per_user[s].push(user_value(r, b, spec, None));
        }
    }
    let values = per_user.iter().map(|v| mean_defined(v)).collect();
    let user_counts = per_user.iter().map(|v| v.iter().filter(|x| x.is_some()).count()).collect();
    Ok(PerStratum {
        spec,
        users: test.users.clone(),
        values,
        per_user,
        user_counts,
        interaction_counts,
    })
}

/// `Σ value_s · weight_s`. Strata with zero weight may be undefined.
pub fn weighted_sum(values: &[Option<f64>], weights: &[f64]) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::Evaluation(format!(
            "{} stratum values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    for (s, (v, &w)) in values.iter().zip(weights).enumerate() {
        match v {
            Some(v) => total += v * w,
            None if w > 0.0 => {
                return Err(Error::Evaluation(format!(
                    "stratum {} has weight {w} but no value",
                    s + 1
                )))
            }
            None => {}
        }
    }
    Ok(total)
}

/// Combines per-stratum values with the stratum weights.
pub fn stratified_eval(per_stratum: &PerStratum, weights: &StratumWeights) -> Result<EvalReport> {
    let overall = weighted_sum(&per_stratum.values, &weights.weights)?;
    let rows = (0..per_stratum.k())
        .map(|s| StratumRow {
            stratum: s + 1,
            value: per_stratum.values[s],
            weight: weights.weights[s],
            users: per_stratum.user_counts[s],
            interactions: per_stratum.interaction_counts[s],
            low_support: per_stratum.user_counts[s] == 1,
        })
        .collect();
    // A user's stratified value: the same weighted sum over the strata they
    // have relevant items in, used for paired tests.
    let n_users = per_stratum.users.len();
    let per_user = (0..n_users)
        .map(|u| {
            let mut any = false;
            let mut acc = 0.0;
            for s in 0..per_stratum.k() {
                if let Some(v) = per_stratum.per_user[s][u] {
                    any = true;
                    acc += v * weights.weights[s];
                }
            }
            any.then_some(acc)
        })
        .collect();
    Ok(EvalReport {
        method: Method::Stratified,
        spec: per_stratum.spec,
        overall,
        users: per_stratum.users.clone(),
        per_user,
        per_stratum: Some(rows),
        strata_k: Some(per_stratum.k()),
    })
}

/// Paired t-test over users defined in both reports.
pub fn paired_report_test(a: &EvalReport, b: &EvalReport) -> Result<TTest> {
    paired_values_test(&a.per_user, &b.per_user)
}

pub fn paired_values_test(a: &[Option<f64>], b: &[Option<f64>]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Evaluation("per-user vectors cover different users".into()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .unzip();
    paired_ttest(&xs, &ys)
}

/// A pair of models whose holdout order reverses inside the stratum that
/// holds most of the test feedback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimpsonFlag {
    pub holdout_winner: String,
    pub holdout_loser: String,
    pub winner_holdout: f64,
    pub loser_holdout: f64,
    pub stratum: usize,
    pub stratum_weight: f64,
    pub winner_in_stratum: f64,
    pub loser_in_stratum: f64,
}

/// Flags every model pair where the holdout winner loses in a stratum
/// whose weight is at least `min_weight`.
pub fn simpson_audit(
    models: &[String],
    holdout: &[f64],
    per_stratum: &[Vec<Option<f64>>],
    weights: &[f64],
    min_weight: f64,
) -> Vec<SimpsonFlag> {
    let mut flags = Vec::new();
    for (s, &w) in weights.iter().enumerate() {
        if w < min_weight {
            continue;
        }
        for a in 0..models.len() {
            for b in 0..models.len() {
                if holdout[a] <= holdout[b] {
                    continue;
                }
                if let (Some(va), Some(vb)) = (per_stratum[a][s], per_stratum[b][s]) {
                    if va < vb {
                        flags.push(SimpsonFlag {
                            holdout_winner: models[a].clone(),
                            holdout_loser: models[b].clone(),
                            winner_holdout: holdout[a],
                            loser_holdout: holdout[b],
                            stratum: s + 1,
                            stratum_weight: w,
                            winner_in_stratum: va,
                            loser_in_stratum: vb,
                        });
                    }
                }
            }
        }
    }
    flags
}
