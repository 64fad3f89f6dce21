//! Rank correlation and significance tests used to compare evaluation
//! methods.

use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc};

use crate::error::{Error, Result};

/// Pair counts behind Kendall's τ-b. `n0` is the number of pairs, `ties_x`
/// and `ties_y` the pairs tied in each input (joint ties included in both).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairCounts {
    pub n0: u64,
    pub ties_x: u64,
    pub ties_y: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

impl PairCounts {
    /// τ-b, or `None` when either input is constant.
    pub fn tau_b(&self) -> Option<f64> {
        let dx = self.n0 - self.ties_x;
        let dy = self.n0 - self.ties_y;
        if dx == 0 || dy == 0 {
            return None;
        }
        let denom = if dx == dy { dx as f64 } else { (dx as f64 * dy as f64).sqrt() };
        let tau = self.score as f64 / denom;
        Some(tau.clamp(-1.0, 1.0))
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "sequences have different lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Domain("at least two observations are required".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in input".into()));
    }
    Ok(())
}

/// Kendall's τ-b with tie correction. Returns `Ok(None)` when one of the
/// sequences is constant and τ is undefined.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    Ok(kendall_pair_counts(x, y)?.tau_b())
}

/// Knight's O(n log n) pair counting.
pub fn kendall_pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    check_pair(x, y)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let tied = |a: f64, b: f64| a == b;

    let mut ties_x = 0u64;
    let mut ties_xy = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if tied(x[a], x[b]) {
            run_x += 1;
            if tied(y[a], y[b]) {
                run_xy += 1;
            } else {
                ties_xy += run_xy * (run_xy - 1) / 2;
                run_xy = 1;
            }
        } else {
            ties_x += run_x * (run_x - 1) / 2;
            ties_xy += run_xy * (run_xy - 1) / 2;
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += run_x * (run_x - 1) / 2;
    ties_xy += run_xy * (run_xy - 1) / 2;

    // Discordant pairs are the inversions of y in this order.
    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if tied(w[0], w[1]) {
            run_y += 1;
        } else {
            ties_y += run_y * (run_y - 1) / 2;
            run_y = 1;
        }
    }
    ties_y += run_y * (run_y - 1) / 2;

    let n0 = n as u64 * (n as u64 - 1) / 2;
    let score = n0 as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * swaps as i64;
    Ok(PairCounts { n0, ties_x, ties_y, score })
}

/// Stable merge sort of `v` returning the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

pub fn fisher_z(r: f64) -> Result<f64> {
    if r.is_nan() || r.abs() >= 1.0 {
        return Err(Error::Domain(format!("Fisher transform needs |r| < 1, got {r}")));
    }
    Ok(r.abs().atanh().copysign(r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteigerTest {
    pub z: f64,
    pub p: f64,
}

/// Steiger's test for two dependent correlations `r_xy` and `r_xz` that
/// share `x`, given the correlation `r_yz` of the non-shared variables.
pub fn steiger_test(r_xy: f64, r_xz: f64, r_yz: f64, n: usize) -> Result<SteigerTest> {
    if n < 4 {
        return Err(Error::Domain(format!("Steiger's test needs n >= 4, got {n}")));
    }
    let z1 = fisher_z(r_xy)?;
    let z2 = fisher_z(r_xz)?;
    if r_yz.is_nan() || r_yz.abs() >= 1.0 {
        return Err(Error::Domain(format!("|r_yz| must be below 1, got {r_yz}")));
    }
    let rbar = 0.5 * (r_xy + r_xz);
    let r2 = rbar * rbar;
    let psi = r_yz * (1.0 - 2.0 * r2) - 0.5 * r2 * (1.0 - 2.0 * r2 - r_yz * r_yz);
    let c = psi / ((1.0 - r2) * (1.0 - r2));
    if c >= 1.0 {
        return Err(Error::Domain(format!("degenerate covariance, c = {c}")));
    }
    let z = (z1 - z2) * ((n as f64 - 3.0) / (2.0 - 2.0 * c)).sqrt();
    Ok(SteigerTest { z, p: normal_two_sided(z) })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// P(|Z| ≥ |z|) for a standard normal Z.
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Student-t CDF with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t));
    if t <= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(0.5 * df, 0.5, df / (df + t * t)).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub n: usize,
    pub mean_diff: f64,
}

/// Paired two-sided t-test on `a - b`.
///
/// All-zero differences give `t = 0, p = 1`. Constant non-zero differences
/// have no variance; `t` is then infinite and `p` the smallest positive
/// double.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    check_pair(a, b)?;
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum();
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(TTest { t: 0.0, p: 1.0, n, mean_diff: 0.0 });
    }
    let sd = (ss / (n as f64 - 1.0)).sqrt();
    if sd == 0.0 {
        return Ok(TTest {
            t: f64::INFINITY.copysign(mean),
            p: f64::MIN_POSITIVE,
            n,
            mean_diff: mean,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = student_t_two_sided(t, n as f64 - 1.0).max(f64::MIN_POSITIVE);
    Ok(TTest { t, p, n, mean_diff: mean })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("x is constant".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearFit { slope, intercept: my - slope * mx })
}

/// Pearson correlation, `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Average ranks (1-based, ties share their mean rank).
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &p in &order[i..=j] {
            out[p] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check_pair(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

/// Gini coefficient of non-negative values; 0 for all-equal input.
pub fn gini(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let total: f64 = v.iter().sum();
    if v.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = v.iter().enumerate().map(|(i, x)| (2.0 * (i as f64 + 1.0) - n - 1.0) * x).sum();
    weighted / (n * total)
}

/// Correlations of two evaluation methods (`y`, `z`) with a reference
/// ranking `x`, and Steiger's test for their difference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub tau_xy: f64,
    pub tau_xz: f64,
    pub tau_yz: f64,
    pub n: usize,
    pub steiger_z: Option<f64>,
    pub p: Option<f64>,
}

pub fn correlation_report(x: &[f64], y: &[f64], z: &[f64]) -> Result<CorrelationReport> {
    let tau = |a: &[f64], b: &[f64], what: &str| -> Result<f64> {
        kendall_tau_b(a, b)?
            .ok_or_else(|| Error::Evaluation(format!("τ_{what} undefined: constant scores")))
    };
    let tau_xy = tau(x, y, "xy")?;
    let tau_xz = tau(x, z, "xz")?;
    let tau_yz = tau(y, z, "yz")?;
    let n = x.len();
    let steiger = if n >= 4 { steiger_test(tau_xy, tau_xz, tau_yz, n).ok() } else { None };
    Ok(CorrelationReport {
        tau_xy,
        tau_xz,
        tau_yz,
        n,
        steiger_z: steiger.map(|s| s.z),
        p: steiger.map(|s| s.p),
    })
}
