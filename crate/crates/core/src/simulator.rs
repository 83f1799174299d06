//! Episode driver, regret accounting and replication aggregates.
//!
//! Regret is accounted through the count decomposition
//! `R(t) = sum_x sum_{a not in O(x,P)} T_{x,a}(t) Delta(x, a)`: every
//! sub-optimal activation costs its loss `Delta(x, a)` under the true model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};
use crate::estimation::CountTables;
use crate::mdp::{Analysis, MdpModel};
use crate::policies::{Controller, PolicyKind};
use crate::rng::RngStream;

/// Stream id of the chain's transition draws.
pub const CHAIN_STREAM: u64 = 0;
/// Stream id of the policy's own randomness.
pub const POLICY_STREAM: u64 = 1;
/// Normal quantile of the two-sided 95% band.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: MdpModel,
    pub policy: PolicyKind,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub initial_state: usize,
    pub rigged_prior: Option<CountTables>,
}

impl SimConfig {
    pub fn new(
        model: MdpModel,
        policy: PolicyKind,
        horizon: usize,
        replications: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            model,
            policy,
            horizon,
            replications,
            base_seed,
            initial_state: 0,
            rigged_prior: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(MdpError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(MdpError::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        if self.initial_state >= self.model.num_states() {
            return Err(MdpError::InvalidConfig(format!(
                "initial state {} out of range",
                self.initial_state
            )));
        }
        Ok(())
    }

    fn actions_per_state(&self) -> Vec<usize> {
        (0..self.model.num_states())
            .map(|x| self.model.num_actions(x))
            .collect()
    }

    /// Seed of replicate `index`.
    pub fn replicate_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// Cumulative regret after each step; entry `t - 1` holds `R(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSeries(pub Vec<f64>);

impl RegretSeries {
    pub fn at(&self, t: usize) -> f64 {
        self.0[t - 1]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("series is non-empty")
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One finished episode: the regret series, the final count tables, and the
/// tables the episode started from.
#[derive(Debug, Clone)]
pub struct Episode {
    pub series: RegretSeries,
    pub counts: CountTables,
    pub initial_counts: CountTables,
    pub actions: Vec<usize>,
}

impl Episode {
    /// Activations made during the episode itself, excluding any preloaded
    /// prior.
    pub fn played_activations(&self) -> Vec<Vec<u64>> {
        self.counts.activations_since(&self.initial_counts)
    }
}

/// Regret of a set of activation counts under the true model's losses.
/// Summation order is fixed (state-major, action-minor).
pub fn regret_from_counts(analysis: &Analysis, activations: &[Vec<u64>]) -> f64 {
    let mut total = 0.0;
    for (x, row) in activations.iter().enumerate() {
        for (a, &n) in row.iter().enumerate() {
            if !analysis.is_optimal(x, a) {
                total += n as f64 * analysis.deltas[x][a];
            }
        }
    }
    total
}

/// Draws the successor of `x` under `a` by inverse CDF on one uniform draw.
pub fn step_chain(model: &MdpModel, x: usize, a: usize, rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let row = model.row(x, a);
    let mut acc = 0.0;
    for (y, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return y;
        }
    }
    row.len() - 1
}

/// Preloads count tables from a template, validating its conservation
/// invariants; the clock is placed right after the preloaded activations.
pub fn inject_rigged_prior(template: &CountTables) -> Result<CountTables> {
    template.validate()?;
    CountTables::from_transition_counts(template.transition_table().to_vec())
}

pub fn run_episode(config: &SimConfig, replicate: usize) -> Result<Episode> {
    let analysis = Analysis::new(&config.model)?;
    run_episode_with(config, &analysis, replicate)
}

fn run_episode_with(config: &SimConfig, analysis: &Analysis, replicate: usize) -> Result<Episode> {
    config.validate()?;
    let model = &config.model;
    let initial_counts = match &config.rigged_prior {
        Some(template) => {
            let counts = inject_rigged_prior(template)?;
            if counts.actions_per_state() != config.actions_per_state() {
                return Err(MdpError::InvalidConfig(
                    "rigged prior does not match the model's shape".into(),
                ));
            }
            counts
        }
        None => CountTables::new(&config.actions_per_state()),
    };
    let controller = Controller::new(config.policy, model)?;
    let seed = config.replicate_seed(replicate);
    let mut chain_rng = RngStream::new(seed, CHAIN_STREAM);
    let mut policy_rng = RngStream::new(seed, POLICY_STREAM);

    let horizon = config.horizon;
    let start = initial_counts.clock() as usize;
    let mut counts = initial_counts.clone();
    let mut played = vec![vec![0u64; 0]; model.num_states()];
    for (x, row) in played.iter_mut().enumerate() {
        row.resize(model.num_actions(x), 0);
    }
    let mut series = vec![0.0; horizon];
    let mut actions = Vec::with_capacity(horizon.saturating_sub(start - 1));
    let mut x = config.initial_state;
    for t in start..=horizon {
        let a = controller
            .choose(model, &counts, x, &mut policy_rng)
            .map_err(|e| MdpError::Episode {
                replicate,
                step: t,
                source: Box::new(e),
            })?;
        played[x][a] += 1;
        series[t - 1] = regret_from_counts(analysis, &played);
        let y = step_chain(model, x, a, &mut chain_rng);
        counts.record_transition(x, a, y)?;
        actions.push(a);
        x = y;
    }
    Ok(Episode {
        series: RegretSeries(series),
        counts,
        initial_counts,
        actions,
    })
}

/// Runs every replicate of `config`, in parallel, returned in replicate order.
pub fn run_replications(config: &SimConfig) -> Result<Vec<Episode>> {
    config.validate()?;
    let analysis = Analysis::new(&config.model)?;
    (0..config.replications)
        .into_par_iter()
        .map(|r| run_episode_with(config, &analysis, r))
        .collect()
}

/// Per-step mean, sample variance and normal 95% band half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurves {
    pub replications: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci_half_width: Vec<f64>,
}

impl AggregateCurves {
    pub fn from_series(series: &[RegretSeries]) -> Result<Self> {
        let n = series.len();
        if n == 0 {
            return Err(MdpError::InvalidConfig("no series to aggregate".into()));
        }
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(MdpError::InvalidConfig("series lengths differ".into()));
        }
        let mut mean = vec![0.0; len];
        let mut variance = vec![0.0; len];
        let mut ci_half_width = vec![0.0; len];
        for t in 0..len {
            let m = series.iter().map(|s| s.0[t]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                series.iter().map(|s| (s.0[t] - m).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            mean[t] = m;
            variance[t] = var;
            ci_half_width[t] = Z_95 * var.sqrt() / (n as f64).sqrt();
        }
        Ok(Self {
            replications: n,
            mean,
            variance,
            ci_half_width,
        })
    }

    pub fn horizon(&self) -> usize {
        self.mean.len()
    }

    pub fn ci_low(&self, t: usize) -> f64 {
        self.mean[t - 1] - self.ci_half_width[t - 1]
    }

    pub fn ci_high(&self, t: usize) -> f64 {
        self.mean[t - 1] + self.ci_half_width[t - 1]
    }

    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("non-empty curves")
    }
}

pub fn run_experiment(config: &SimConfig) -> Result<AggregateCurves> {
    let episodes = run_replications(config)?;
    let series: Vec<RegretSeries> = episodes.into_iter().map(|e| e.series).collect();
    AggregateCurves::from_series(&series)
}

/// Least-squares slope of `values[t - 1]` against `t` over `from..=to`.
pub fn least_squares_slope(values: &[f64], from: usize, to: usize) -> f64 {
    let n = (to - from + 1) as f64;
    let ts = from..=to;
    let t_mean = ts.clone().map(|t| t as f64).sum::<f64>() / n;
    let y_mean = ts.clone().map(|t| values[t - 1]).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for t in ts {
        let dt = t as f64 - t_mean;
        sxy += dt * (values[t - 1] - y_mean);
        sxx += dt * dt;
    }
    sxy / sxx
}
