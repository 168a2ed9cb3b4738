//! Scenario and suite files.
//!
//! A suite is a TOML document with `schema = 1` and an array of
//! `[[scenario]]` tables:
//!
//! ```toml
//! schema = 1
//!
//! [[scenario]]
//! id = "pme-atom"
//! dim = 2
//! length = 1.0          # box side
//! final_time = 0.02
//! boundary = "dirichlet-zero"   # or "no-flux"
//! ladder = [32, 64, 128]        # grid sizes N
//! mollify = 8                   # mollification level n
//! samples = 200                 # time samples for the estimates
//! solver = { m = 1.5, epsilon = 0.0 }
//! drift = { preset = "vortex", strength = 2.0 }
//!
//! [[scenario.measure.atoms]]
//! x = [0.5, 0.5]
//! t = 0.002
//! mass = 1.0
//! ```
//!
//! Optional keys: `oracle` (`"heat"` or `"barenblatt"`), `estimates` (list of
//! tables with an `id`; defaults to the standard set), `drift_exponents`
//! (`{ q1, q2 }`, numbers or `"inf"`), `drift_divergence_free`, and `couple`
//! (`{ potential = {...}, alphas = [...] }`) to run the coupled flow model.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drift::{DriftPreset, DriftSpec};
use crate::estimates::EstimateRequest;
use crate::fluid::PotentialSpec;
use crate::grid::{Boundary, GridError, SpaceTimeDomain};
use crate::measure::MeasureSpec;
use crate::norms::{Exponent, ExponentPair};
use crate::solver::SolverConfig;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported schema {0} (expected {SCHEMA})")]
    Schema(u32),
    #[error("scenario `{id}`: {reason}")]
    Scenario { id: String, reason: String },
    #[error("duplicate scenario id `{0}`")]
    Duplicate(String),
}

fn default_ladder() -> Vec<usize> {
    vec![32, 64, 128]
}

fn default_mollify() -> usize {
    8
}

fn default_samples() -> usize {
    200
}

fn default_dim() -> usize {
    2
}

fn default_drift() -> DriftPreset {
    DriftPreset::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Oracle {
    /// Sum of Gaussians from the initial atoms (m = 1, no drift, no forcing).
    Heat,
    /// Self-similar profile from one initial atom (m = 2, d = 2, no drift,
    /// no forcing).
    Barenblatt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentSpec {
    pub q1: Exponent,
    pub q2: Exponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoupleSpec {
    pub potential: PotentialSpec,
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub length: f64,
    pub final_time: f64,
    pub boundary: Boundary,
    #[serde(default = "default_ladder")]
    pub ladder: Vec<usize>,
    #[serde(default = "default_mollify")]
    pub mollify: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub solver: SolverConfig,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default = "default_drift")]
    pub drift: DriftPreset,
    #[serde(default)]
    pub drift_exponents: Option<ExponentSpec>,
    #[serde(default)]
    pub drift_divergence_free: Option<bool>,
    #[serde(default)]
    pub estimates: Option<Vec<EstimateRequest>>,
    #[serde(default)]
    pub oracle: Option<Oracle>,
    #[serde(default)]
    pub couple: Option<CoupleSpec>,
}

impl Scenario {
    pub fn domain(&self, n: usize) -> Result<SpaceTimeDomain, GridError> {
        SpaceTimeDomain::new(self.dim, self.length, self.final_time, n, self.boundary)
    }

    pub fn drift_spec(&self) -> DriftSpec {
        let mut s = DriftSpec::preset(self.drift.clone());
        if let Some(flag) = self.drift_divergence_free {
            s = s.with_divergence_free(flag);
        }
        if let Some(e) = &self.drift_exponents {
            s = s.with_exponents(Some(ExponentPair { q1: e.q1, q2: e.q2 }));
        }
        s
    }

    pub fn estimate_requests(&self) -> Vec<EstimateRequest> {
        self.estimates.clone().unwrap_or_else(|| EstimateRequest::standard(self.solver.m, self.dim))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |reason: String| Err(ConfigError::Scenario { id: self.id.clone(), reason });
        if self.id.is_empty() {
            return bad("id must not be empty".into());
        }
        if self.ladder.is_empty() || self.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return bad("ladder must be non-empty and strictly increasing".into());
        }
        if self.samples == 0 {
            return bad("samples must be >= 1".into());
        }
        if self.mollify == 0 {
            return bad("mollify must be >= 1".into());
        }
        for &n in &self.ladder {
            let d = self.domain(n).map_err(|e| ConfigError::Scenario { id: self.id.clone(), reason: e.to_string() })?;
            self.solver
                .validate(&d)
                .map_err(|e| ConfigError::Scenario { id: self.id.clone(), reason: e.to_string() })?;
            self.measure
                .validate(&d)
                .map_err(|e| ConfigError::Scenario { id: self.id.clone(), reason: e.to_string() })?;
        }
        if let Some(o) = self.oracle {
            let plain =
                self.measure.atoms.is_empty() && self.measure.density.is_none() && self.drift == DriftPreset::Zero;
            let ok = plain
                && match o {
                    Oracle::Heat => self.solver.m == 1.0 && self.solver.epsilon == 0.0,
                    Oracle::Barenblatt => {
                        self.solver.m == 2.0
                            && self.solver.epsilon == 0.0
                            && self.dim == 2
                            && self.measure.initial_atoms.len() == 1
                    }
                };
            if !ok {
                return bad(format!("oracle {o:?} does not match the scenario's equation and data"));
            }
        }
        if let Some(c) = &self.couple {
            if self.dim != 2 {
                return bad("coupled runs are two-dimensional".into());
            }
            if self.drift != DriftPreset::Zero {
                return bad("coupled runs take their drift from the flow; leave `drift` unset".into());
            }
            if let Some(a) = &c.alphas {
                if a.iter().any(|a| !(*a > 0.0 && *a < 2.0)) {
                    return bad("alphas must lie in (0, 2)".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub schema: u32,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<Scenario>,
}

impl Suite {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let suite: Suite =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_string(), message: e.to_string() })?;
        if suite.schema != SCHEMA {
            return Err(ConfigError::Schema(suite.schema));
        }
        let mut seen = BTreeSet::new();
        for s in &suite.scenarios {
            if !seen.insert(s.id.clone()) {
                return Err(ConfigError::Duplicate(s.id.clone()));
            }
            s.validate()?;
        }
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        Self::parse(&text, &p)
    }

    pub fn find(&self, id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r#"
schema = 1

[[scenario]]
id = "a"
length = 1.0
final_time = 0.01
boundary = "no-flux"
solver = { m = 1.5 }
drift = { preset = "vortex", strength = 1.0 }
estimates = [{ id = "mass_bound" }, { id = "energy_bound", alpha = 1.5 }]

[[scenario.measure.atoms]]
x = [0.5, 0.5]
t = 0.001
mass = 1.0
"#;

    #[test]
    fn parses_a_scenario() {
        let s = Suite::parse(ONE, "x").unwrap();
        assert_eq!(s.scenarios.len(), 1);
        let sc = &s.scenarios[0];
        assert_eq!(sc.ladder, vec![32, 64, 128]);
        assert_eq!(sc.estimate_requests().len(), 2);
        assert!(sc.drift_spec().divergence_free());
    }

    #[test]
    fn empty_suite_is_fine() {
        assert!(Suite::parse("schema = 1", "x").unwrap().scenarios.is_empty());
    }

    #[test]
    fn errors_name_the_key() {
        let e = Suite::parse("schema = 1\n[[scenario]]\nid = \"a\"\nlength = \"x\"", "f.toml").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("f.toml") && msg.contains("line"), "{msg}");
        let e = Suite::parse(&ONE.replace("vortex", "whirl"), "f.toml").unwrap_err();
        assert!(e.to_string().contains("whirl"), "{e}");
        assert!(matches!(Suite::parse("schema = 2", "x"), Err(ConfigError::Schema(2))));
    }

    #[test]
    fn rejects_duplicates_and_bad_ladders() {
        let two = format!("{ONE}\n{}", &ONE[ONE.find("[[scenario]]").unwrap()..]);
        assert!(matches!(Suite::parse(&two, "x"), Err(ConfigError::Duplicate(_))));
        let bad = ONE.replace("boundary = \"no-flux\"", "boundary = \"no-flux\"\nladder = [64, 32]");
        assert!(matches!(Suite::parse(&bad, "x"), Err(ConfigError::Scenario { .. })));
    }

    #[test]
    fn oracle_must_match() {
        let bad = ONE.replace("boundary = \"no-flux\"", "boundary = \"no-flux\"\noracle = \"heat\"");
        assert!(Suite::parse(&bad, "x").is_err());
    }
}
