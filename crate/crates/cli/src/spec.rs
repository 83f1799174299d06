//! Experiment specification files.
//!
//! A spec is a TOML document. State and action indices are zero-based in the
//! file; reports print them one-based as `x1`, `a1`, ...
//!
//! ```toml
//! name = "paper_example"
//! policies = ["ps", "ucb", "dmed"]
//! horizon = 10000
//! replications = 100
//! seed = 2019
//! initial_state = 0
//!
//! [model]
//! rewards = [[0.13, 0.18], ...]                    # rewards[x][a]
//! transitions = [[[0.04, 0.69, 0.27], ...], ...]   # transitions[x][a][y]
//!
//! [rigged_prior]
//! transitions = [[[8, 1, 1], [1, 1, 8]], ...]      # counts[x][a][y]
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use mdp_lab::{CountTables, MdpModel, PolicyKind, SimConfig};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::CliError;

pub const PAPER_EXAMPLE: &str = "paper_example";

const PAPER_EXAMPLE_TOML: &str = r#"name = "paper_example"
policies = ["ps", "ucb", "dmed"]
horizon = 10000
replications = 100
seed = 2019
initial_state = 0

[model]
# rewards[x][a]
rewards = [
    [0.13, 0.18],
    [0.47, 0.71],
    [0.89, 0.63],
]
# transitions[x][a][y]
transitions = [
    [[0.04, 0.69, 0.27], [0.28, 0.68, 0.04]],
    [[0.88, 0.01, 0.11], [0.26, 0.33, 0.41]],
    [[0.02, 0.46, 0.52], [0.43, 0.35, 0.22]],
]

# Preloaded counts[x][a][y]: 60 misleading observations.
[rigged_prior]
transitions = [
    [[8, 1, 1], [1, 1, 8]],
    [[1, 1, 8], [8, 1, 1]],
    [[8, 1, 1], [1, 1, 8]],
]

[output]
dir = "out"
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDef {
    pub rewards: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiggedPriorDef {
    pub transitions: Vec<Vec<Vec<u64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDef {
    pub dir: PathBuf,
}

impl Default for OutputDef {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// A parsed and validated experiment specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub policies: Vec<PolicyKind>,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub initial_state: usize,
    pub model: ModelDef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigged_prior: Option<RiggedPriorDef>,
    #[serde(default)]
    pub output: OutputDef,
}

type SpannedRow = Spanned<Vec<f64>>;

// Mirror of the model block that remembers where each row sits in the file.
#[derive(Deserialize)]
struct SpannedModel {
    rewards: Spanned<Vec<SpannedRow>>,
    transitions: Spanned<Vec<Spanned<Vec<SpannedRow>>>>,
}

#[derive(Deserialize)]
struct SpannedDoc {
    model: SpannedModel,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl ExperimentSpec {
    pub fn paper_example() -> Self {
        Self::parse(PAPER_EXAMPLE_TOML).expect("embedded preset is valid")
    }

    /// Loads a preset by name, or a spec file by path.
    pub fn load(source: &str) -> Result<Self, CliError> {
        if source == PAPER_EXAMPLE {
            return Ok(Self::paper_example());
        }
        let text = std::fs::read_to_string(Path::new(source))
            .map_err(|e| CliError::Validation(format!("cannot read spec {source:?}: {e}")))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{source}: {msg}")),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        if let Err(msg) = spec.model() {
            // Re-read with spans to point at the offending row.
            let located = toml::from_str::<SpannedDoc>(text)
                .ok()
                .and_then(|doc| locate_model_error(text, &doc.model));
            return Err(CliError::Validation(match located {
                Some(line) => format!("line {line}: {msg}"),
                None => msg.to_string(),
            }));
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn model(&self) -> Result<MdpModel, CliError> {
        MdpModel::new(self.model.rewards.clone(), self.model.transitions.clone())
            .map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn rigged_counts(&self) -> Result<Option<CountTables>, CliError> {
        self.rigged_prior
            .as_ref()
            .map(|r| {
                CountTables::from_transition_counts(r.transitions.clone())
                    .map_err(|e| CliError::Validation(format!("rigged_prior: {e}")))
            })
            .transpose()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.model()?;
        if self.policies.is_empty() {
            return Err(CliError::Validation("policies list is empty".into()));
        }
        if self.horizon == 0 {
            return Err(CliError::Validation("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(CliError::Validation(
                "replications must be at least 1".into(),
            ));
        }
        if self.initial_state >= model.num_states() {
            return Err(CliError::Validation(format!(
                "initial_state {} out of range for {} states",
                self.initial_state,
                model.num_states()
            )));
        }
        if let Some(counts) = self.rigged_counts()? {
            let shape: Vec<usize> = (0..model.num_states())
                .map(|x| model.num_actions(x))
                .collect();
            if counts.actions_per_state() != shape {
                return Err(CliError::Validation(
                    "rigged_prior shape does not match the model".into(),
                ));
            }
        }
        Ok(())
    }

    /// Simulation config for one policy, optionally with the rigged prior.
    pub fn sim_config(&self, policy: PolicyKind, rigged: bool) -> Result<SimConfig, CliError> {
        let mut cfg = SimConfig::new(
            self.model()?,
            policy,
            self.horizon,
            self.replications,
            self.seed,
        );
        cfg.initial_state = self.initial_state;
        if rigged {
            cfg.rigged_prior =
                Some(self.rigged_counts()?.ok_or_else(|| {
                    CliError::Validation("spec has no [rigged_prior] block".into())
                })?);
        }
        Ok(cfg)
    }
}

fn locate_model_error(text: &str, model: &SpannedModel) -> Option<usize> {
    let s = model.rewards.get_ref().len();
    if model.transitions.get_ref().len() != s {
        return Some(line_of(text, model.transitions.span().start));
    }
    for (x, rows) in model.transitions.get_ref().iter().enumerate() {
        let rewards = model.rewards.get_ref().get(x)?;
        if rows.get_ref().len() != rewards.get_ref().len() {
            return Some(line_of(text, rows.span().start));
        }
        if rewards.get_ref().iter().any(|r| !r.is_finite()) {
            return Some(line_of(text, rewards.span().start));
        }
        for row in rows.get_ref() {
            if !row_ok(row.get_ref(), s) {
                return Some(line_of(text, row.span().start));
            }
        }
    }
    None
}

fn row_ok(row: &[f64], s: usize) -> bool {
    row.len() == s
        && row.iter().all(|p| p.is_finite() && *p > 0.0)
        && (row.iter().sum::<f64>() - 1.0).abs() <= mdp_lab::mdp::ROW_SUM_TOL
}
