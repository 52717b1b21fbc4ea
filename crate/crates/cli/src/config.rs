//! Experiment configuration: model and branching files plus the shared
//! command-line budget.

use std::fmt;
use std::path::{Path, PathBuf};

use levy_bigjump::cbre::BranchingSpec;
use levy_bigjump::model::ModelFile;
use levy_bigjump::{FSpec, LevyModel};
use serde::de::DeserializeOwned;

/// Smallest accepted replicate count.
pub const MIN_N: u64 = 100;

/// A configuration problem: exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Reads a JSON file, naming the offending field on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {what} file {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        config_err(format!(
            "{what} file {}: field `{field}`: {}",
            path.display(),
            e.inner()
        ))
    })
}

pub fn load_model(path: &Path) -> anyhow::Result<LevyModel> {
    let file: ModelFile = read_json(path, "model")?;
    LevyModel::try_from(file).map_err(|e| config_err(format!("model file {}: {e}", path.display())))
}

pub fn load_branching(path: Option<&Path>) -> anyhow::Result<BranchingSpec> {
    let Some(path) = path else {
        return Ok(BranchingSpec::feller());
    };
    let spec: BranchingSpec = read_json(path, "branching")?;
    spec.validate()
        .map_err(|e| config_err(format!("branching file {}: {e}", path.display())))?;
    Ok(spec)
}

pub fn load_f(path: Option<&Path>) -> anyhow::Result<FSpec> {
    let Some(path) = path else {
        return Ok(FSpec::cbre_survival(1.0, 1.0, 1.0));
    };
    let f: FSpec = read_json(path, "test function")?;
    f.validate()
        .map_err(|e| config_err(format!("test function file {}: {e}", path.display())))?;
    Ok(f)
}

/// Budget shared by every command.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: LevyModel,
    pub t_ladder: Vec<f64>,
    pub n: Option<u64>,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub json: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if let Some(n) = self.n {
            if n < MIN_N {
                return Err(config_err(format!("--n must be at least {MIN_N}, got {n}")));
            }
        }
        if self.workers == 0 {
            return Err(config_err("--workers must be at least 1"));
        }
        validate_ladder(&self.t_ladder)
    }

    pub fn n_or(&self, default: u64) -> u64 {
        self.n.unwrap_or(default)
    }

    pub fn t_max(&self) -> f64 {
        *self.t_ladder.last().expect("validated ladder")
    }
}

pub fn validate_ladder(ts: &[f64]) -> anyhow::Result<()> {
    if ts.is_empty() {
        return Err(config_err("--t needs at least one value"));
    }
    if ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(config_err("--t values must be positive and finite"));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config_err("--t values must be strictly ascending"));
    }
    Ok(())
}

/// A `T[,T…]` ladder as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder(pub Vec<f64>);

pub fn parse_ladder(s: &str) -> Result<Ladder, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad t value {p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(Ladder)
}
