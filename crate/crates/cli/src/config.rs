use std::path::{Path, PathBuf};

use hybrid_kuramoto::classifier::Tolerances;
use hybrid_kuramoto::integrator::{random_initial_state, IntegratorConfig};
use hybrid_kuramoto::model::{Ensemble, State};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Random,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitValue {
    Values(Vec<f64>),
    Keyword(Keyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "random")]
    pub theta: InitValue,
    #[serde(default = "zero")]
    pub v: InitValue,
}

fn random() -> InitValue {
    InitValue::Keyword(Keyword::Random)
}

fn zero() -> InitValue {
    InitValue::Keyword(Keyword::Zero)
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { theta: random(), v: zero() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub dir: Option<PathBuf>,
    pub emit_trajectory: bool,
    pub emit_plots: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: None,
            emit_trajectory: true,
            emit_plots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ensemble: Ensemble,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunConfig {
    /// Initial state in the frame of `ensemble`; random entries are drawn
    /// from `seed`.
    pub fn initial_state(&self, ensemble: &Ensemble, seed: u64) -> Result<State, CliError> {
        let drawn = random_initial_state(ensemble, seed);
        let theta = match &self.initial.theta {
            InitValue::Values(v) => v.clone(),
            InitValue::Keyword(Keyword::Random) => drawn.theta,
            InitValue::Keyword(Keyword::Zero) => {
                return Err(CliError::Config("initial.theta must be an array or \"random\"".into()))
            }
        };
        let v = match &self.initial.v {
            InitValue::Values(v) => v.clone(),
            InitValue::Keyword(Keyword::Random) => drawn.v,
            InitValue::Keyword(Keyword::Zero) => vec![0.0; ensemble.n_inertial()],
        };
        if theta.len() != ensemble.len() || v.len() != ensemble.n_inertial() {
            return Err(CliError::Config(format!(
                "initial state needs {} phases and {} velocities, got {} and {}",
                ensemble.len(),
                ensemble.n_inertial(),
                theta.len(),
                v.len()
            )));
        }
        Ok(State::new(0.0, theta, v))
    }
}

/// Reads and validates a JSON document; errors carry `path:line:column`.
pub fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: cannot read: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        let msg = msg.rsplit_once(" at line ").map_or(msg.as_str(), |(m, _)| m);
        CliError::Config(format!("{}:{}:{}: {msg}", path.display(), e.line(), e.column()))
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = load_json(path)?;
    cfg.integrator
        .validate()
        .and_then(|_| cfg.tolerances.validate())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// `start:stop:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("bad number {s:?}: {e}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|e| format!("bad count {n:?}: {e}"))?;
            match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            }
        }
        [_] => spec.split(',').map(num).collect::<Result<_, _>>()?,
        _ => return Err(format!("grid {spec:?} is neither start:stop:count nor a list")),
    };
    if grid.is_empty() || grid.iter().any(|x| !x.is_finite()) {
        return Err(format!("grid {spec:?} is empty or not finite"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("1,3").unwrap(), vec![1.0, 3.0]);
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("1:2:0").is_err());
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"ensemble":{"N":2,"n":1,"m":[0,1],"d":[1,1],"omega":[0.5,-0.5],"lambda":2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.initial, InitialSpec::default());
        assert!(cfg.outputs.emit_plots && cfg.outputs.emit_trajectory);
        let s = cfg.initial_state(&cfg.ensemble, 3).unwrap();
        assert_eq!(s.v, vec![0.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<RunConfig, _> = serde_json::from_str(
            r#"{"ensemble":{"N":1,"n":1,"m":[0],"d":[1],"omega":[0],"lambda":1},"extra":1}"#,
        );
        assert!(r.is_err());
    }
}
