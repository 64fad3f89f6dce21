//! Partitioning items into propensity strata and weighting the strata by
//! how much feedback they hold.
//!
//! Strata are numbered from 1 (lowest propensity, the long tail) to `K`
//! (highest propensity, the head). Two cutting rules are available:
//!
//! * [`StrataRule::PropensityMass`] places the `K - 1` cuts where the
//!   cumulative propensity of the ascending item list is closest to
//!   `s · total / K`.
//! * [`StrataRule::EqualWidth`] splits the score range `[min, max]` into `K`
//!   intervals of equal width. Because propensities grow faster than
//!   counts, the upper intervals hold only a handful of head items.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::propensity::PropensityTable;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrataRule {
    #[default]
    EqualWidth,
    PropensityMass,
}

impl std::str::FromStr for StrataRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_width" | "width" => Ok(StrataRule::EqualWidth),
            "propensity_mass" | "mass" => Ok(StrataRule::PropensityMass),
            other => Err(Error::Config(format!("unknown strata rule {other:?}"))),
        }
    }
}

impl std::fmt::Display for StrataRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrataRule::EqualWidth => "equal_width",
            StrataRule::PropensityMass => "propensity_mass",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrataAssignment {
    k: usize,
    rule: StrataRule,
    items: Vec<String>,
    counts: Vec<u32>,
    scores: Vec<f64>,
    /// 1-based stratum of each item, aligned with `items`.
    stratum_of: Vec<u16>,
    index: HashMap<String, usize>,
    mass: Vec<f64>,
    boundaries: Vec<f64>,
}

/// Assigns every item of the table to one of `k` strata.
pub fn assign_strata(
    propensities: &PropensityTable,
    k: usize,
    rule: StrataRule,
) -> Result<StrataAssignment> {
    let n = propensities.len();
    if k == 0 {
        return Err(Error::Assignment("the number of strata must be positive".into()));
    }
    if k > u16::MAX as usize {
        return Err(Error::Assignment(format!("{k} strata is too many")));
    }
    if n == 0 {
        return Err(Error::Assignment("propensity table is empty".into()));
    }
    if k > n {
        return Err(Error::Assignment(format!(
            "{k} strata requested for only {n} items"
        )));
    }

    let scores = propensities.scores();
    let counts = propensities.counts();
    let items = propensities.items();

    // Ascending by score, then count, then canonical id.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then(counts[a].cmp(&counts[b]))
            .then(items[a].cmp(&items[b]))
    });

    let mut stratum_of = vec![0u16; n];
    let boundaries: Vec<f64>;
    match rule {
        StrataRule::PropensityMass => {
            let cuts = mass_cuts(&order, scores, k);
            let mut start = 0;
            let mut bounds = Vec::with_capacity(k - 1);
            for (s, &end) in cuts.iter().chain(std::iter::once(&n)).enumerate() {
                for &item in &order[start..end] {
                    stratum_of[item] = (s + 1) as u16;
                }
                if end < n {
                    bounds.push(scores[order[end - 1]]);
                }
                start = end;
            }
            boundaries = bounds;
        }
        StrataRule::EqualWidth => {
            let lo = scores[order[0]];
            let hi = scores[order[n - 1]];
            let width = (hi - lo) / k as f64;
            boundaries = (1..k).map(|s| lo + width * s as f64).collect();
            for item in 0..n {
                let above = boundaries.iter().filter(|&&b| scores[item] > b).count();
                stratum_of[item] = (above + 1) as u16;
            }
        }
    }

    let mut mass = vec![0.0; k];
    for &item in &order {
        mass[stratum_of[item] as usize - 1] += scores[item];
    }

    Ok(StrataAssignment {
        k,
        rule,
        items: items.to_vec(),
        counts: counts.to_vec(),
        scores: scores.to_vec(),
        stratum_of,
        index: items.iter().enumerate().map(|(p, i)| (i.clone(), p)).collect(),
        mass,
        boundaries,
    })
}

/// End positions (exclusive) of strata `1..k` in the ascending order. Each
/// cut is the position whose cumulative mass is closest to `s · total / k`,
/// constrained so every stratum keeps at least one item.
fn mass_cuts(order: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    let n = order.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for &item in order {
        acc += scores[item];
        cumulative.push(acc);
    }
    let total = acc;

    let mut cuts = Vec::with_capacity(k - 1);
    let mut prev = 0;
    for s in 1..k {
        let target = total * s as f64 / k as f64;
        let lo = prev + 1;
        let hi = n - (k - s);
        let mut best = lo;
        for c in lo..=hi {
            if (cumulative[c] - target).abs() < (cumulative[best] - target).abs() {
                best = c;
            }
            if cumulative[c] > target {
                break;
            }
        }
        cuts.push(best);
        prev = best;
    }
    cuts
}

impl StrataAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rule(&self) -> StrataRule {
        self.rule
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// 1-based stratum of an item.
    pub fn stratum(&self, item: &str) -> Option<usize> {
        self.index.get(item).map(|&p| self.stratum_of[p] as usize)
    }

    pub fn strata(&self) -> impl Iterator<Item = (&str, usize)> {
        self.items
            .iter()
            .zip(&self.stratum_of)
            .map(|(i, &s)| (i.as_str(), s as usize))
    }

    /// Summed propensity per stratum, index 0 is stratum 1.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Largest score of strata `1..K-1` (mass rule) or the interval edges
    /// (equal-width rule).
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of items per stratum.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &s in &self.stratum_of {
            sizes[s as usize - 1] += 1;
        }
        sizes
    }

    /// Writes `item\tcount\tscore\tstratum` lines after a `#` header.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# k={} rule={}", self.k, self.rule)?;
        writeln!(w, "# item\tcount\tscore\tstratum")?;
        for p in 0..self.items.len() {
            writeln!(
                w,
                "{}\t{}\t{:e}\t{}",
                self.items[p], self.counts[p], self.scores[p], self.stratum_of[p]
            )?;
        }
        Ok(())
    }

    /// Reads the format written by [`StrataAssignment::write_tsv`].
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut header: Option<(usize, StrataRule)> = None;
        let mut rows: Vec<(String, u32, f64, u16)> = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let bad = |message: String| Error::Parse { line: n + 1, message };
            if let Some(h) = line.strip_prefix('#') {
                let h = h.trim();
                if h.starts_with("k=") {
                    let mut k = None;
                    let mut rule = StrataRule::default();
                    for field in h.split_whitespace() {
                        match field.split_once('=') {
                            Some(("k", v)) => k = v.parse().ok(),
                            Some(("rule", v)) => rule = v.parse()?,
                            _ => {}
                        }
                    }
                    header = Some((k.ok_or_else(|| bad("bad k in header".into()))?, rule));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(format!("expected 4 columns, found {}", cols.len())));
            }
            rows.push((
                cols[0].to_string(),
                cols[1].parse().map_err(|_| bad("bad count".into()))?,
                cols[2].parse().map_err(|_| bad("bad score".into()))?,
                cols[3].parse().map_err(|_| bad("bad stratum".into()))?,
            ));
        }
        let (k, rule) = header.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing `# k=` header".into(),
        })?;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let mut mass = vec![0.0; k];
        for r in &rows {
            if r.3 == 0 || r.3 as usize > k {
                return Err(Error::Assignment(format!("item {:?} has stratum {} outside 1..={k}", r.0, r.3)));
            }
            mass[r.3 as usize - 1] += r.2;
        }
        let mut boundaries = Vec::new();
        if rule == StrataRule::PropensityMass {
            for s in 1..k as u16 {
                let top = rows.iter().filter(|r| r.3 == s).map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
                boundaries.push(top);
            }
        } else {
            let lo = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
            boundaries = (1..k).map(|s| lo + (hi - lo) / k as f64 * s as f64).collect();
        }
        Ok(StrataAssignment {
            k,
            rule,
            index: rows.iter().enumerate().map(|(p, r)| (r.0.clone(), p)).collect(),
            items: rows.iter().map(|r| r.0.clone()).collect(),
            counts: rows.iter().map(|r| r.1).collect(),
            scores: rows.iter().map(|r| r.2).collect(),
            stratum_of: rows.iter().map(|r| r.3).collect(),
            mass,
            boundaries,
        })
    }
}

/// Share of the reference feedback falling into each stratum, i.e. the
/// marginal distribution of the stratum variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumWeights {
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn stratum_weights(assignment: &StrataAssignment, reference: &Dataset) -> Result<StratumWeights> {
    let item_stratum: Vec<usize> = reference
        .items()
        .iter()
        .map(|item| {
            assignment
                .stratum(item)
                .ok_or_else(|| Error::Unassigned(item.clone()))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; assignment.k()];
    for (item, &c) in reference.item_counts().iter().enumerate() {
        counts[item_stratum[item] - 1] += c as usize;
    }
    StratumWeights::from_counts(counts)
}

impl StratumWeights {
    pub fn from_counts(counts: Vec<usize>) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Evaluation("reference feedback is empty".into()));
        }
        let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(StratumWeights { weights, counts })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}
