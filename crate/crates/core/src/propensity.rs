//! User-independent exposure propensities estimated from item popularity.
//!
//! Item interaction counts are modelled as draws from a discrete power law
//! `P(n) ∝ n^-γ` for `n >= x_min`. Given the fitted exponent, the propensity
//! of item `i` is taken proportional to `n_i^((γ + 1) / 2)` and scaled so the
//! most-interacted item has propensity 1.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};

/// How the power-law exponent is estimated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    /// Maximizes the exact discrete likelihood `-n ln ζ(γ, x_min) - γ Σ ln n_i`.
    #[default]
    DiscreteExact,
    /// Closed form `1 + n / Σ ln(n_i / (x_min - 0.5))`. Cheap, but biased
    /// low for exponents above 2 when `x_min` is small.
    ContinuousApprox,
}

impl std::str::FromStr for GammaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete_exact" | "exact" => Ok(GammaMethod::DiscreteExact),
            "continuous_approx" | "approx" => Ok(GammaMethod::ContinuousApprox),
            other => Err(Error::Config(format!("unknown gamma method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    /// Number of items with count `>= x_min`.
    pub n_samples: usize,
    pub x_min: u32,
    pub method: GammaMethod,
}

/// Largest exponent the exact estimator will report.
const GAMMA_CEILING: f64 = 50.0;

/// Fits the exponent with `x_min = 1` using the exact discrete likelihood.
pub fn fit_gamma(counts: &[u32]) -> Result<GammaEstimate> {
    fit_gamma_with(counts, 1, GammaMethod::default())
}

pub fn fit_gamma_with(counts: &[u32], x_min: u32, method: GammaMethod) -> Result<GammaEstimate> {
    if x_min == 0 {
        return Err(Error::Estimation("x_min must be at least 1".into()));
    }
    let kept: Vec<u32> = counts.iter().copied().filter(|&c| c >= x_min).collect();
    let n = kept.len();
    if n < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 items with count >= {x_min}, got {n}"
        )));
    }

    let gamma = match method {
        GammaMethod::ContinuousApprox => {
            let shift = x_min as f64 - 0.5;
            let s: f64 = kept.iter().map(|&c| (c as f64 / shift).ln()).sum();
            1.0 + n as f64 / s
        }
        GammaMethod::DiscreteExact => {
            let mean_log = kept.iter().map(|&c| (c as f64).ln()).sum::<f64>() / n as f64;
            let floor = (x_min as f64).ln();
            if mean_log <= floor + 1e-15 {
                return Err(Error::Estimation(
                    "all counts equal x_min; the discrete likelihood has no finite maximum".into(),
                ));
            }
            solve_discrete(mean_log, x_min)?
        }
    };

    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::Estimation(format!("estimate {gamma} is not a positive number")));
    }
    Ok(GammaEstimate {
        gamma,
        n_samples: n,
        x_min,
        method,
    })
}

/// Solves `E_γ[ln X] = target` where `X` follows the discrete power law on
/// `x_min..`. The left side decreases monotonically in `γ`, so bisection
/// on a bracket is enough.
fn solve_discrete(target: f64, x_min: u32) -> Result<f64> {
    let expected_log = |g: f64| {
        let (z, dz) = hurwitz_zeta_with_derivative(g, x_min);
        -dz / z
    };
    let mut lo = 1.0 + 1e-9;
    let mut hi = GAMMA_CEILING;
    if expected_log(hi) > target {
        return Err(Error::Estimation(format!(
            "exponent exceeds {GAMMA_CEILING}; counts are too concentrated at x_min"
        )));
    }
    if expected_log(lo) < target {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_log(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `ζ(s, a) = Σ_{k>=a} k^-s` and its derivative in `s`, for `s > 1` and
/// integer `a >= 1`, by Euler-Maclaurin summation.
pub fn hurwitz_zeta_with_derivative(s: f64, a: u32) -> (f64, f64) {
    // Bernoulli numbers B_2j / (2j)!.
    const B2J_OVER_FACT: [f64; 7] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
    ];
    const HEAD: u32 = 24;

    let mut z = 0.0;
    let mut dz = 0.0;
    let start = a as f64;
    for k in 0..HEAD {
        let x = start + k as f64;
        let t = x.powf(-s);
        z += t;
        dz -= x.ln() * t;
    }
    let n = start + HEAD as f64;
    let ln_n = n.ln();
    let n_pow = n.powf(-s);

    // Integral tail n^(1-s) / (s-1) and half the boundary term.
    z += n * n_pow / (s - 1.0) + 0.5 * n_pow;
    dz += -n * n_pow * ln_n / (s - 1.0) - n * n_pow / ((s - 1.0) * (s - 1.0)) - 0.5 * ln_n * n_pow;

    // Σ_j B_2j/(2j)! · s(s+1)…(s+2j-2) · n^(-s-2j+1)
    let mut rising = s; // s(s+1)…(s+2j-2)
    let mut rising_log_deriv = 1.0 / s; // d/ds ln(rising)
    let mut power = n_pow / n; // n^(-s-1)
    for (j, c) in B2J_OVER_FACT.iter().enumerate() {
        if j > 0 {
            let m = 2.0 * j as f64;
            rising *= (s + m - 1.0) * (s + m);
            rising_log_deriv += 1.0 / (s + m - 1.0) + 1.0 / (s + m);
            power /= n * n;
        }
        let term = c * rising * power;
        z += term;
        dz += term * (rising_log_deriv - ln_n);
    }
    (z, dz)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Largest score equals 1.
    MaxOne,
    /// `MaxOne` scores multiplied by a constant.
    Scaled(f64),
}

/// Per-item propensities for the items of one dataset, in canonical item
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct PropensityTable {
    items: Vec<String>,
    counts: Vec<u32>,
    scores: Vec<f64>,
    index: HashMap<String, usize>,
    gamma: GammaEstimate,
    normalization: Normalization,
}

/// `score_i = (n_i / max_j n_j)^((γ + 1) / 2)`.
pub fn estimate_propensities(dataset: &Dataset, gamma: GammaEstimate) -> Result<PropensityTable> {
    if dataset.is_empty() {
        return Err(Error::Estimation("cannot estimate propensities on an empty dataset".into()));
    }
    if !(gamma.gamma.is_finite() && gamma.gamma > 0.0) {
        return Err(Error::Estimation(format!("invalid exponent {}", gamma.gamma)));
    }
    let counts = dataset.item_counts().to_vec();
    let exponent = (gamma.gamma + 1.0) / 2.0;
    let max = *counts.iter().max().expect("nonempty") as f64;
    let scores = counts
        .iter()
        .map(|&c| (c as f64 / max).powf(exponent))
        .collect();
    Ok(PropensityTable::from_parts(
        dataset.items().to_vec(),
        counts,
        scores,
        gamma,
        Normalization::MaxOne,
    ))
}

/// Fits the exponent on the dataset's item counts and derives the table.
pub fn fit_propensities(dataset: &Dataset, method: GammaMethod) -> Result<PropensityTable> {
    let gamma = fit_gamma_with(dataset.item_counts(), 1, method)?;
    estimate_propensities(dataset, gamma)
}

impl PropensityTable {
    fn from_parts(
        items: Vec<String>,
        counts: Vec<u32>,
        scores: Vec<f64>,
        gamma: GammaEstimate,
        normalization: Normalization,
    ) -> Self {
        let index = items.iter().enumerate().map(|(k, i)| (i.clone(), k)).collect();
        PropensityTable {
            items,
            counts,
            scores,
            index,
            gamma,
            normalization,
        }
    }

    /// A table with every score equal to `value`.
    pub fn uniform(items: &[String], value: f64) -> Self {
        let gamma = GammaEstimate {
            gamma: 1.0,
            n_samples: items.len(),
            x_min: 1,
            method: GammaMethod::DiscreteExact,
        };
        Self::from_parts(
            items.to_vec(),
            vec![0; items.len()],
            vec![value; items.len()],
            gamma,
            Normalization::Scaled(value),
        )
    }

    /// Every score multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.scores {
            *s *= factor;
        }
        out.normalization = match self.normalization {
            Normalization::MaxOne => Normalization::Scaled(factor),
            Normalization::Scaled(f) => Normalization::Scaled(f * factor),
        };
        out
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn gamma(&self) -> GammaEstimate {
        self.gamma
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn position(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn score(&self, item: &str) -> Option<f64> {
        self.position(item).map(|k| self.scores[k])
    }

    /// Writes `item\tcount\tscore` lines after a `#` header carrying the
    /// exponent.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.gamma;
        let norm = match self.normalization {
            Normalization::MaxOne => "max_one".to_string(),
            Normalization::Scaled(f) => format!("scaled:{f:e}"),
        };
        let method = match g.method {
            GammaMethod::DiscreteExact => "discrete_exact",
            GammaMethod::ContinuousApprox => "continuous_approx",
        };
        writeln!(
            w,
            "# gamma={:e} x_min={} n_samples={} method={} normalization={}",
            g.gamma, g.x_min, g.n_samples, method, norm
        )?;
        writeln!(w, "# item\tcount\tscore")?;
        for k in 0..self.items.len() {
            writeln!(w, "{}\t{}\t{:e}", self.items[k], self.counts[k], self.scores[k])?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut gamma = None;
        let mut normalization = Normalization::MaxOne;
        let mut rows: Vec<(String, u32, f64)> = Vec::new();
        for (k, line) in reader.lines().enumerate() {
            let lineno = k + 1;
            let line = line?;
            let bad = |message: String| Error::Parse { line: lineno, message };
            if let Some(header) = line.strip_prefix('#') {
                if header.trim_start().starts_with("gamma=") {
                    let mut est = GammaEstimate {
                        gamma: f64::NAN,
                        n_samples: 0,
                        x_min: 1,
                        method: GammaMethod::DiscreteExact,
                    };
                    for field in header.split_whitespace() {
                        let (key, value) = field
                            .split_once('=')
                            .ok_or_else(|| bad(format!("malformed header field {field:?}")))?;
                        let bad_value = || bad(format!("bad value in {field:?}"));
                        match key {
                            "gamma" => est.gamma = value.parse().map_err(|_| bad_value())?,
                            "x_min" => est.x_min = value.parse().map_err(|_| bad_value())?,
                            "n_samples" => est.n_samples = value.parse().map_err(|_| bad_value())?,
                            "method" => est.method = value.parse().map_err(|_| bad_value())?,
                            "normalization" => {
                                normalization = match value.strip_prefix("scaled:") {
                                    Some(f) => Normalization::Scaled(f.parse().map_err(|_| bad_value())?),
                                    None if value == "max_one" => Normalization::MaxOne,
                                    None => return Err(bad_value()),
                                }
                            }
                            _ => {}
                        }
                    }
                    gamma = Some(est);
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", cols.len())));
            }
            let count = cols[1].parse().map_err(|_| bad(format!("bad count {:?}", cols[1])))?;
            let score: f64 = cols[2].parse().map_err(|_| bad(format!("bad score {:?}", cols[2])))?;
            rows.push((cols[0].to_string(), count, score));
        }
        let gamma = gamma.ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing `# gamma=` header".into(),
        })?;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let (items, rest): (Vec<String>, Vec<(u32, f64)>) =
            rows.into_iter().map(|(i, c, s)| (i, (c, s))).unzip();
        let (counts, scores) = rest.into_iter().unzip();
        Ok(Self::from_parts(items, counts, scores, gamma, normalization))
    }
}
