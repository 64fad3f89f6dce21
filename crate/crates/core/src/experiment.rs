//! One seed of the closed-loop versus open-loop comparison: simulate,
//! train a model sweep on the closed-loop train split, and score every
//! model with every estimator against the closed-loop test split and the
//! open-loop test set.

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::Result;
use crate::evaluators::{
    catalog_strata, holdout_eval, ips_eval, per_stratum_eval_with, simpson_audit, weighted_sum,
    IpsOptions, SimpsonFlag, TestView,
};
use crate::metrics::{EvalContext, MetricSpec, Rankings};
use crate::models::{fit, standard_sizes, sweep_configs, Algorithm, ModelConfig};
use crate::propensity::{fit_propensities, GammaMethod, PropensityTable};
use crate::simulator::{audit_skew, generate, SimConfig, SkewSummary};
use crate::stats::{correlation_report, kendall_tau_b, CorrelationReport};
use crate::strata::{assign_strata, StrataRule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub algorithms: Vec<Algorithm>,
    pub latent_sizes: Vec<usize>,
    pub model: ModelConfig,
    /// Strata counts to evaluate; 1 reproduces holdout.
    pub strata: Vec<usize>,
    pub strata_rule: StrataRule,
    pub gamma_method: GammaMethod,
    pub specs: Vec<MetricSpec>,
    /// Stratum weight above which the Simpson audit looks for reversals.
    pub dominant_weight: f64,
    /// Strata count used by the Simpson audit.
    pub audit_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sim: SimConfig::default(),
            algorithms: Algorithm::ALL.to_vec(),
            latent_sizes: standard_sizes(),
            model: ModelConfig::default(),
            strata: (1..=10).collect(),
            strata_rule: StrataRule::default(),
            gamma_method: GammaMethod::default(),
            specs: vec![MetricSpec::full(), MetricSpec::at(10)],
            dominant_weight: 0.9,
            audit_k: 2,
        }
    }
}

/// Scores of every model under one metric. Vectors are aligned with
/// [`SeedResult::models`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecResult {
    pub spec: MetricSpec,
    pub open: Vec<f64>,
    pub holdout: Vec<f64>,
    pub ips: Vec<f64>,
    /// One entry per configured strata count.
    pub stratified: Vec<Vec<f64>>,
    /// Per model, per stratum values at the audit strata count.
    pub audit_strata: Vec<Vec<Option<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub models: Vec<String>,
    pub strata: Vec<usize>,
    /// Feedback share per stratum for each strata count.
    pub weights: Vec<Vec<f64>>,
    pub gamma: f64,
    pub skew: SkewSummary,
    pub specs: Vec<SpecResult>,
}

/// Kendall τ of each estimator's model ordering against the open-loop
/// ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedTaus {
    pub holdout: Option<f64>,
    pub ips: Option<f64>,
    /// Aligned with [`SeedResult::strata`].
    pub stratified: Vec<Option<f64>>,
}

impl SeedResult {
    pub fn spec(&self, spec: MetricSpec) -> Option<&SpecResult> {
        self.specs.iter().find(|s| s.spec == spec)
    }

    pub fn taus(&self, spec: MetricSpec) -> Option<SeedTaus> {
        let s = self.spec(spec)?;
        let tau = |v: &[f64]| kendall_tau_b(&s.open, v).ok().flatten();
        Some(SeedTaus {
            holdout: tau(&s.holdout),
            ips: tau(&s.ips),
            stratified: s.stratified.iter().map(|v| tau(v)).collect(),
        })
    }

    /// τ between open-loop, holdout and stratified orderings with Steiger's
    /// test, for the strata count at `k_position`.
    pub fn correlation(&self, spec: MetricSpec, k_position: usize) -> Option<Result<CorrelationReport>> {
        let s = self.spec(spec)?;
        Some(correlation_report(&s.open, &s.holdout, &s.stratified[k_position]))
    }

    /// Model pairs whose holdout order reverses in the dominant stratum.
    pub fn simpson_flags(&self, spec: MetricSpec, audit_k: usize, dominant_weight: f64) -> Vec<SimpsonFlag> {
        let (Some(s), Some(pos)) = (self.spec(spec), self.strata.iter().position(|&k| k == audit_k)) else {
            return Vec::new();
        };
        simpson_audit(&self.models, &s.holdout, &s.audit_strata, &self.weights[pos], dominant_weight)
    }
}

/// Catalog strata for every configured strata count.
pub fn strata_tables(
    ctx: &EvalContext,
    table: &PropensityTable,
    strata: &[usize],
    rule: StrataRule,
) -> Result<Vec<Vec<Option<u16>>>> {
    strata
        .iter()
        .map(|&k| Ok(catalog_strata(ctx, &assign_strata(table, k, rule)?)))
        .collect()
}

pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let sim = SimConfig { seed, ..config.sim.clone() };
    let log = generate(&sim)?;
    let closed = log.closed();
    let base = ModelConfig { seed, ..config.model.clone() };
    let configs = sweep_configs(&config.algorithms, &config.latent_sizes, &base);
    evaluate_sweep(config, seed, &log.closed_train, &log.closed_test, &log.open_test, &closed, &configs, audit_skew(&log))
}

/// Trains and scores `configs` on explicit datasets; `propensity_source`
/// is the feedback the propensities are estimated from.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_sweep(
    config: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    closed_test: &Dataset,
    open_test: &Dataset,
    propensity_source: &Dataset,
    configs: &[ModelConfig],
    skew: SkewSummary,
) -> Result<SeedResult> {
    let ctx = EvalContext::new(train, &[closed_test, open_test]);
    let closed_view = TestView::new(&ctx, closed_test)?;
    let open_view = TestView::new(&ctx, open_test)?;
    let table = fit_propensities(propensity_source, config.gamma_method)?;
    let strata = strata_tables(&ctx, &table, &config.strata, config.strata_rule)?;
    let audit_pos = config.strata.iter().position(|&k| k == config.audit_k);

    let n_models = configs.len();
    let mut specs: Vec<SpecResult> = config
        .specs
        .iter()
        .map(|&spec| SpecResult {
            spec,
            open: Vec::with_capacity(n_models),
            holdout: Vec::with_capacity(n_models),
            ips: Vec::with_capacity(n_models),
            stratified: vec![Vec::with_capacity(n_models); config.strata.len()],
            audit_strata: Vec::with_capacity(n_models),
        })
        .collect();
    let mut weights: Vec<Vec<f64>> = Vec::new();

    for mc in configs {
        let model = fit(mc, train).map_err(|e| crate::Error::Fit(format!("{}: {e}", mc.label())))?;
        let scorer = model.scorer(ctx.items());
        let rankings = Rankings::build(&ctx, &scorer);
        for s in specs.iter_mut() {
            s.open.push(holdout_eval(&rankings, &open_view, s.spec)?.overall);
            s.holdout.push(holdout_eval(&rankings, &closed_view, s.spec)?.overall);
            s.ips.push(ips_eval(&rankings, &closed_view, &ctx, &table, s.spec, IpsOptions::default())?.overall);
            let mut w_all = Vec::with_capacity(config.strata.len());
            for (pos, (&k, cat)) in config.strata.iter().zip(&strata).enumerate() {
                let per = per_stratum_eval_with(&rankings, &closed_view, &ctx, cat, k, s.spec)?;
                let w = per.weights()?;
                s.stratified[pos].push(weighted_sum(&per.values, &w.weights)?);
                if Some(pos) == audit_pos {
                    s.audit_strata.push(per.values.clone());
                }
                w_all.push(w.weights);
            }
            if weights.is_empty() {
                weights = w_all;
            }
        }
    }

    Ok(SeedResult {
        seed,
        models: configs.iter().map(|c| c.label()).collect(),
        strata: config.strata.clone(),
        weights,
        gamma: table.gamma().gamma,
        skew,
        specs,
    })
}
