//! Experiment configuration: scenario defaults plus explicit overrides from a
//! flat TOML document.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    QuadraticFixed,
    QuadraticHistogram,
    AnnSweep,
    LogisticSeparable,
    LogisticNonseparable,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::QuadraticFixed,
        Scenario::QuadraticHistogram,
        Scenario::AnnSweep,
        Scenario::LogisticSeparable,
        Scenario::LogisticNonseparable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::QuadraticFixed => "quadratic_fixed",
            Scenario::QuadraticHistogram => "quadratic_histogram",
            Scenario::AnnSweep => "ann_sweep",
            Scenario::LogisticSeparable => "logistic_separable",
            Scenario::LogisticNonseparable => "logistic_nonseparable",
        }
    }

    pub fn is_logistic(self) -> bool {
        matches!(self, Scenario::LogisticSeparable | Scenario::LogisticNonseparable)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

/// Every parameter of every scenario. Unused fields keep their defaults and
/// are still written to the resolved snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    /// Number of agents.
    pub n: usize,
    /// Decision-vector dimension.
    pub p: usize,
    /// Degree of the regular cycle.
    pub degree: usize,
    /// Degrees drawn uniformly per realization in the histogram study.
    pub degree_set: Vec<usize>,
    /// Condition exponent of the quadratic ensemble.
    pub xi: u32,
    pub alpha: f64,
    /// Initial `alpha` values of the adaptive sweep.
    pub alpha0_list: Vec<f64>,
    pub eta: f64,
    pub outer_rounds: usize,
    pub max_iters_per_stage: usize,
    /// Truncation orders of the NN-K runs.
    pub k_list: Vec<usize>,
    pub include_dgd: bool,
    pub epsilon: f64,
    /// Local gradient tolerance.
    pub tol: f64,
    /// Relative error used for iterations-to-target summaries.
    pub target_error: f64,
    pub max_iters: usize,
    pub realizations: usize,
    pub samples_per_node: usize,
    pub mu: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub lambda: f64,
}

impl ExperimentConfig {
    /// Defaults for a scenario: `n = 100`, `d = 4`, `alpha = 1e-2`, `eps = 1`;
    /// quadratics with `p = 4`, `xi = 2`; logistic data with `p = 10`,
    /// 50 samples per node and `lambda = 1e-4`.
    pub fn defaults(scenario: Scenario) -> Self {
        let base = Self {
            scenario,
            seed: 1,
            n: 100,
            p: 4,
            degree: 4,
            degree_set: vec![2, 4, 6, 8, 10],
            xi: 2,
            alpha: 1e-2,
            alpha0_list: vec![1e-1, 1e-2],
            eta: 0.1,
            outer_rounds: 3,
            max_iters_per_stage: 5000,
            k_list: vec![0, 1, 2],
            include_dgd: true,
            epsilon: 1.0,
            tol: 1e-10,
            target_error: 1.9e-1,
            max_iters: 2000,
            realizations: 100,
            samples_per_node: 50,
            mu: 3.0,
            sigma_plus: 1.0,
            sigma_minus: 1.0,
            lambda: 1e-4,
        };
        match scenario {
            Scenario::QuadraticFixed => base,
            Scenario::QuadraticHistogram => Self { target_error: 1e-2, max_iters: 10_000, ..base },
            Scenario::AnnSweep => Self { tol: 1e-3, target_error: 2e-2, ..base },
            Scenario::LogisticSeparable => Self { p: 10, tol: 1e-12, max_iters: 500, ..base },
            Scenario::LogisticNonseparable => Self {
                p: 10,
                tol: 1e-12,
                max_iters: 500,
                mu: 2.0,
                sigma_plus: 2.0,
                sigma_minus: 2.0,
                ..base
            },
        }
    }

    /// Parse a flat TOML document. `scenario` selects the defaults; every
    /// other key present overrides one field. Unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let scenario: Scenario = match table.remove("scenario") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => return Err(Error::Config(format!("scenario must be a string, got {other}"))),
            None => return Err(Error::Config("missing key `scenario`".into())),
        };
        Self::defaults(scenario).with_overrides(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn with_overrides(self, overrides: toml::Table) -> Result<Self> {
        let mut table = match toml::Value::try_from(&self).map_err(|e| Error::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        };
        for (key, value) in overrides {
            let slot = table
                .get_mut(&key)
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            // Integers are accepted where floats are expected.
            *slot = match (&*slot, value) {
                (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolved snapshot written next to the outputs.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", self.scenario)));
        if self.n < 3 {
            return bad(format!("n must be >= 3, got {}", self.n));
        }
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        let check_degree = |d: usize| d >= 2 && d % 2 == 0 && d < self.n;
        match self.scenario {
            Scenario::QuadraticHistogram => {
                if self.degree_set.is_empty() || !self.degree_set.iter().all(|&d| check_degree(d)) {
                    return bad(format!("degree_set entries must be even, >= 2 and < n, got {:?}", self.degree_set));
                }
                if self.realizations == 0 {
                    return bad("realizations must be >= 1".into());
                }
            }
            _ => {
                if !check_degree(self.degree) {
                    return bad(format!("degree must be even, >= 2 and < n, got {}", self.degree));
                }
            }
        }
        if !self.scenario.is_logistic() && self.p % 2 != 0 {
            return bad(format!("quadratic scenarios need even p, got {}", self.p));
        }
        if self.k_list.is_empty() && !self.include_dgd {
            return bad("no methods selected".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.target_error > 0.0) {
            return bad(format!("target_error must be > 0, got {}", self.target_error));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.scenario == Scenario::AnnSweep {
            if !(self.eta > 0.0 && self.eta < 1.0) {
                return bad(format!("eta must lie in (0, 1), got {}", self.eta));
            }
            if self.alpha0_list.is_empty() || self.alpha0_list.iter().any(|&a| !(a > 0.0)) {
                return bad(format!("alpha0_list must hold positive values, got {:?}", self.alpha0_list));
            }
            if self.outer_rounds == 0 || self.max_iters_per_stage == 0 {
                return bad("outer_rounds and max_iters_per_stage must be >= 1".into());
            }
        }
        if self.scenario.is_logistic() {
            if self.samples_per_node == 0 {
                return bad("samples_per_node must be >= 1".into());
            }
            if !(self.lambda > 0.0 && self.sigma_plus > 0.0 && self.sigma_minus > 0.0) {
                return bad("lambda and class standard deviations must be > 0".into());
            }
        }
        Ok(())
    }
}
