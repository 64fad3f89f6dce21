//! Run configuration file (TOML). Every section is optional; missing keys
//! take the library defaults, and the resolved form goes into the manifest.
//!
//! ```toml
//! [sim]
//! n_users = 2000
//! deployed_policy = "popularity_biased"
//!
//! [model]
//! epochs = 50
//!
//! [train]
//! algorithms = ["POP", "MF", "WMF"]
//! latent_sizes = [10, 20]
//!
//! [evaluate]
//! methods = ["holdout", "stratified"]
//! strata = [2]
//! metrics = ["nDCG", "nDCG@10"]
//! baseline = "POP"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use strateval::evaluators::Method;
use strateval::metrics::MetricSpec;
use strateval::models::{standard_sizes, Algorithm, ModelConfig};
use strateval::propensity::GammaMethod;
use strateval::simulator::SimConfig;
use strateval::strata::StrataRule;

use crate::failure::{Failure, Outcome};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub propensity: PropensityConfig,
    pub evaluate: EvaluateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithms: Vec<Algorithm>,
    pub latent_sizes: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { algorithms: Algorithm::ALL.to_vec(), latent_sizes: standard_sizes() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropensityConfig {
    pub gamma_method: GammaMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub methods: Vec<Method>,
    pub strata: Vec<usize>,
    pub strata_rule: StrataRule,
    pub metrics: Vec<String>,
    /// Model label the paired t-tests compare against.
    pub baseline: Option<String>,
    pub ips_clip: Option<f64>,
    pub ips_self_normalized: bool,
    pub alpha: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            methods: vec![Method::Holdout, Method::Ips, Method::Stratified],
            strata: vec![2],
            strata_rule: StrataRule::default(),
            metrics: MetricSpec::standard().iter().map(|m| m.to_string()).collect(),
            baseline: None,
            ips_clip: None,
            ips_self_normalized: false,
            alpha: 0.05,
        }
    }
}

impl EvaluateConfig {
    pub fn metric_specs(&self) -> Outcome<Vec<MetricSpec>> {
        let specs = self
            .metrics
            .iter()
            .map(|m| m.parse::<MetricSpec>().map_err(Failure::from))
            .collect::<Outcome<Vec<_>>>()?;
        if specs.is_empty() {
            return Err(Failure::usage("no metrics configured"));
        }
        Ok(specs)
    }

    pub fn validate(&self) -> Outcome<()> {
        self.metric_specs()?;
        if self.methods.is_empty() {
            return Err(Failure::usage("no evaluation methods configured"));
        }
        if self.strata.contains(&0) {
            return Err(Failure::usage("strata counts must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Failure::usage("alpha must lie in (0, 1)"));
        }
        if let Some(c) = self.ips_clip {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Failure::usage("ips_clip must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Outcome<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(format!("config {}", path.display())))
    }

    pub fn parse(text: &str) -> Outcome<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::failure::Status;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn book_example_parses() {
        let chapter = include_str!("../../../book/src/workbench.md");
        let start = chapter.find("```toml\n").unwrap() + "```toml\n".len();
        let end = start + chapter[start..].find("```").unwrap();
        let config = RunConfig::parse(&chapter[start..end]).unwrap();
        config.evaluate.validate().unwrap();
        assert_eq!(config.train.latent_sizes, vec![10, 20, 30]);
        assert_eq!(config.evaluate.metric_specs().unwrap(), vec![MetricSpec::full(), MetricSpec::at(10)]);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        assert_eq!(RunConfig::parse("[evaluate]\nstrata_k = 2\n").unwrap_err().status, Status::Usage);
        let config = RunConfig::parse("[evaluate]\nalpha = 1.5\n").unwrap();
        assert_eq!(config.evaluate.validate().unwrap_err().status, Status::Usage);
        let config = RunConfig::parse("[evaluate]\nmetrics = [\"recall\"]\n").unwrap();
        assert_eq!(config.evaluate.validate().unwrap_err().status, Status::Usage);
    }
}
