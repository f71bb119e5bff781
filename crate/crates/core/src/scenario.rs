//! TOML scenario files: grid, reaction term, initial and target states, strategy settings.
//!
//! ```toml
//! name = "one-zero"
//! [grid]
//! n_cells = 400
//! [nonlinearity]
//! kind = "zero"
//! [initial]
//! fixture = "sin-2"
//! [target]
//! zeros = [0.6]
//! [strategy]
//! epsilon = 0.01
//! eta = 0.05
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::fixtures;
use crate::grid::{Grid, GridFunction, GridParams};
use crate::nonlinearity::Nonlinearity;
use crate::profile::ProfileSpec;
use crate::strategy::{self, validate_hypothesis, StrategyConfig};
use crate::tracker::{extract_pattern, SignPattern, DEFAULT_NOISE_REL};

/// Either a named fixture or a profile through the given interior zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeros: Option<Vec<f64>>,
    /// Sign on each of the `n + 1` intervals; defaults to `+, -, +, …`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<Vec<f64>>,
    /// Interior curvatures in `{-1, 0, 1}`; default all zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl FieldSource {
    pub fn fixture(name: &str) -> Self {
        Self {
            fixture: Some(name.to_owned()),
            ..Self::default()
        }
    }

    pub fn profile(zeros: &[f64]) -> Self {
        Self {
            zeros: Some(zeros.to_vec()),
            ..Self::default()
        }
    }

    /// Profile description, or `None` for a fixture.
    pub fn profile_spec(&self, which: &'static str) -> Result<Option<ProfileSpec>, ScenarioError> {
        let field = |reason: String| ScenarioError::Field { which, reason };
        match (&self.fixture, &self.zeros) {
            (Some(_), Some(_)) => Err(field("give either `fixture` or `zeros`, not both".into())),
            (None, None) => Err(field("missing `fixture` or `zeros`".into())),
            (Some(_), None) => {
                if self.signs.is_some() || self.betas.is_some() || self.rho.is_some() {
                    return Err(field(
                        "`signs`, `betas` and `rho` only apply to profiles".into(),
                    ));
                }
                Ok(None)
            }
            (None, Some(zeros)) => {
                let n = zeros.len();
                let lambda = match &self.signs {
                    None => 1.0,
                    Some(signs) => {
                        if signs.len() != n + 1 {
                            return Err(field(format!(
                                "{n} zeros need {} interval signs, got {}",
                                n + 1,
                                signs.len()
                            )));
                        }
                        if let Some(i) = signs.iter().position(|s| s.abs() != 1.0) {
                            return Err(ScenarioError::NotAlternating { which, index: i });
                        }
                        if let Some(i) = (1..signs.len()).find(|&i| signs[i] == signs[i - 1]) {
                            return Err(ScenarioError::NotAlternating { which, index: i });
                        }
                        signs[0]
                    }
                };
                let betas = self.betas.clone().unwrap_or_else(|| vec![0.0; n]);
                let spec = ProfileSpec::from_interior(zeros, lambda, &betas, self.rho)
                    .map_err(|e| field(e.to_string()))?;
                Ok(Some(spec))
            }
        }
    }

    pub fn build(&self, grid: Grid, which: &'static str) -> Result<GridFunction, ScenarioError> {
        match self.profile_spec(which)? {
            Some(spec) => spec.build(grid).map_err(|e| ScenarioError::Field {
                which,
                reason: e.to_string(),
            }),
            None => {
                let name = self.fixture.as_deref().unwrap_or_default();
                fixtures::by_name(name, grid).ok_or_else(|| ScenarioError::Field {
                    which,
                    reason: format!("unknown fixture `{name}` or grid too coarse for it"),
                })
            }
        }
    }
}

fn zero_reaction() -> Nonlinearity {
    Nonlinearity::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridParams,
    #[serde(default = "zero_reaction")]
    pub nonlinearity: Nonlinearity,
    pub initial: FieldSource,
    pub target: FieldSource,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// A validated scenario with both states sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub grid: Grid,
    pub initial: GridFunction,
    pub target: GridFunction,
    pub initial_pattern: SignPattern,
    pub target_pattern: SignPattern,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Samples both states and checks the configuration and the sign-pattern hypothesis.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        self.strategy.validate()?;
        let grid = Grid::new(self.grid.n_cells)?;
        let initial = self.initial.build(grid, "initial")?;
        let target = self.target.build(grid, "target")?;
        let pattern = |f: &GridFunction, which: &'static str| {
            extract_pattern(f, DEFAULT_NOISE_REL * f.sup_norm()).map_err(|e| ScenarioError::Field {
                which,
                reason: e.to_string(),
            })
        };
        let initial_pattern = pattern(&initial, "initial")?;
        let target_pattern = pattern(&target, "target")?;
        validate_hypothesis(&initial_pattern, &target_pattern)?;
        strategy::check_budget(&self.strategy, initial_pattern.len())?;
        Ok(Prepared {
            grid,
            initial,
            target,
            initial_pattern,
            target_pattern,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::StrategyError;

    const ONE_ZERO: &str = r#"
name = "one-zero"
[grid]
n_cells = 400
[initial]
fixture = "sin-2"
[target]
zeros = [0.6]
[strategy]
epsilon = 0.01
eta = 0.05
"#;

    #[test]
    fn parses_and_prepares() {
        let sc = Scenario::from_toml_str(ONE_ZERO).unwrap();
        assert_eq!(sc.nonlinearity, Nonlinearity::Zero);
        assert_eq!(sc.strategy.epsilon, 0.01);
        let p = sc.prepare().unwrap();
        assert!((p.initial_pattern.zeros()[0] - 0.5).abs() < 1e-12);
        assert!((p.target_pattern.zeros()[0] - 0.6).abs() < 1e-12);
        assert_eq!(Scenario::from_toml_str(&sc.to_toml_string()).unwrap(), sc);
    }

    #[test]
    fn rejects_count_mismatch() {
        let text = ONE_ZERO.replace("zeros = [0.6]", "zeros = [0.3, 0.6]");
        let err = Scenario::from_toml_str(&text)
            .unwrap()
            .prepare()
            .unwrap_err();
        assert!(
            matches!(err, ScenarioError::Strategy(StrategyError::Hypothesis(_))),
            "{err}"
        );
        assert!(err.to_string().contains("hypothesis"));
    }

    #[test]
    fn rejects_non_alternating_signs() {
        let text = ONE_ZERO.replace("zeros = [0.6]", "zeros = [0.6]\nsigns = [1.0, 1.0]");
        let err = Scenario::from_toml_str(&text)
            .unwrap()
            .prepare()
            .unwrap_err();
        assert_eq!(
            err,
            ScenarioError::NotAlternating {
                which: "target",
                index: 1
            }
        );
        let text = ONE_ZERO.replace("zeros = [0.6]", "zeros = [0.6]\nsigns = [-1.0, 1.0]");
        let err = Scenario::from_toml_str(&text)
            .unwrap()
            .prepare()
            .unwrap_err();
        assert!(matches!(
            err,
            ScenarioError::Strategy(StrategyError::Hypothesis(_))
        ));
    }

    #[test]
    fn rejects_malformed_sources() {
        let both = ONE_ZERO.replace("fixture = \"sin-2\"", "fixture = \"sin-2\"\nzeros = [0.5]");
        assert!(matches!(
            Scenario::from_toml_str(&both).unwrap().prepare(),
            Err(ScenarioError::Field { .. })
        ));
        let unknown = ONE_ZERO.replace("sin-2", "cubic");
        assert!(matches!(
            Scenario::from_toml_str(&unknown).unwrap().prepare(),
            Err(ScenarioError::Field { .. })
        ));
        assert!(matches!(
            Scenario::from_toml_str("name = 3"),
            Err(ScenarioError::Parse(_))
        ));
        let typo = ONE_ZERO.replace("eta = 0.05", "etta = 0.05");
        assert!(matches!(
            Scenario::from_toml_str(&typo),
            Err(ScenarioError::Parse(_))
        ));
        let bad_eps = ONE_ZERO.replace("epsilon = 0.01", "epsilon = -1.0");
        assert!(matches!(
            Scenario::from_toml_str(&bad_eps).unwrap().prepare(),
            Err(ScenarioError::Strategy(_))
        ));
    }
}
