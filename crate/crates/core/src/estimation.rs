//! Visit, activation and transition counters, and the estimators built on
//! them.

use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};
use crate::klopt::ProbVector;

/// Counters `T_x`, `T_{x,a}`, `T_{x,a,y}` and the clock `t`.
///
/// The clock is the index of the step about to be played, so fresh tables
/// start at `t = 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTables {
    state_visits: Vec<u64>,
    activations: Vec<Vec<u64>>,
    transitions: Vec<Vec<Vec<u64>>>,
    clock: u64,
}

impl CountTables {
    /// Empty tables; `actions_per_state[x]` is `|A(x)|`.
    pub fn new(actions_per_state: &[usize]) -> Self {
        let s = actions_per_state.len();
        Self {
            state_visits: vec![0; s],
            activations: actions_per_state.iter().map(|&n| vec![0; n]).collect(),
            transitions: actions_per_state
                .iter()
                .map(|&n| vec![vec![0; s]; n])
                .collect(),
            clock: 1,
        }
    }

    /// Tables whose activation and visit counts are the row sums of
    /// `transitions[x][a][y]`, with the clock placed right after them.
    pub fn from_transition_counts(transitions: Vec<Vec<Vec<u64>>>) -> Result<Self> {
        let s = transitions.len();
        for (x, rows) in transitions.iter().enumerate() {
            if rows.is_empty() {
                return Err(MdpError::InconsistentCounts(format!(
                    "state {x} has no actions"
                )));
            }
            if let Some(a) = rows.iter().position(|r| r.len() != s) {
                return Err(MdpError::InconsistentCounts(format!(
                    "row of state {x} action {a} has wrong length (expected {s})"
                )));
            }
        }
        let activations: Vec<Vec<u64>> = transitions
            .iter()
            .map(|rows| rows.iter().map(|r| r.iter().sum()).collect())
            .collect();
        let state_visits: Vec<u64> = activations.iter().map(|r| r.iter().sum()).collect();
        let clock = state_visits.iter().sum::<u64>() + 1;
        Ok(Self {
            state_visits,
            activations,
            transitions,
            clock,
        })
    }

    /// Checks the conservation invariants
    /// `sum_y T_{x,a,y} = T_{x,a}` and `sum_a T_{x,a} = T_x`.
    pub fn validate(&self) -> Result<()> {
        let s = self.state_visits.len();
        if self.activations.len() != s || self.transitions.len() != s {
            return Err(MdpError::InconsistentCounts(
                "tables disagree on the number of states".into(),
            ));
        }
        for x in 0..s {
            if self.activations[x].len() != self.transitions[x].len() {
                return Err(MdpError::InconsistentCounts(format!(
                    "state {x}: activation and transition tables disagree on |A(x)|"
                )));
            }
            for (a, row) in self.transitions[x].iter().enumerate() {
                if row.len() != s {
                    return Err(MdpError::InconsistentCounts(format!(
                        "row of state {x} action {a} has {} entries, expected {s}",
                        row.len()
                    )));
                }
                let sum: u64 = row.iter().sum();
                if sum != self.activations[x][a] {
                    return Err(MdpError::InconsistentCounts(format!(
                        "state {x} action {a}: transitions sum to {sum}, activations say {}",
                        self.activations[x][a]
                    )));
                }
            }
            let sum: u64 = self.activations[x].iter().sum();
            if sum != self.state_visits[x] {
                return Err(MdpError::InconsistentCounts(format!(
                    "state {x}: activations sum to {sum}, visits say {}",
                    self.state_visits[x]
                )));
            }
        }
        if self.clock == 0 {
            return Err(MdpError::InconsistentCounts(
                "clock must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.state_visits.len()
    }

    pub fn num_actions(&self, x: usize) -> usize {
        self.activations[x].len()
    }

    pub fn actions_per_state(&self) -> Vec<usize> {
        self.activations.iter().map(Vec::len).collect()
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn state_visits(&self, x: usize) -> u64 {
        self.state_visits[x]
    }

    pub fn activations(&self, x: usize, a: usize) -> u64 {
        self.activations[x][a]
    }

    pub fn activation_table(&self) -> &[Vec<u64>] {
        &self.activations
    }

    /// `[T_{x,a,y}]_y`.
    pub fn transition_row(&self, x: usize, a: usize) -> &[u64] {
        &self.transitions[x][a]
    }

    pub fn transition_table(&self) -> &[Vec<Vec<u64>>] {
        &self.transitions
    }

    pub fn total_activations(&self) -> u64 {
        self.state_visits.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_activations() == 0
    }

    /// Records one step `x --a--> y` and advances the clock.
    pub fn record_transition(&mut self, x: usize, a: usize, y: usize) -> Result<()> {
        let s = self.num_states();
        if x >= s || y >= s {
            return Err(MdpError::IndexOutOfRange(format!(
                "transition {x} -> {y} with {s} states"
            )));
        }
        if a >= self.num_actions(x) {
            return Err(MdpError::IndexOutOfRange(format!(
                "action {a} in state {x}"
            )));
        }
        self.state_visits[x] += 1;
        self.activations[x][a] += 1;
        self.transitions[x][a][y] += 1;
        self.clock += 1;
        Ok(())
    }

    /// Smoothed estimate `(T_{x,a,y} + 1) / (T_{x,a} + s)`, always in the
    /// open simplex.
    pub fn estimate_probs(&self, x: usize, a: usize) -> ProbVector {
        let s = self.num_states() as f64;
        let denom = self.activations[x][a] as f64 + s;
        ProbVector::from_vec_unchecked(
            self.transitions[x][a]
                .iter()
                .map(|&n| (n as f64 + 1.0) / denom)
                .collect(),
        )
    }

    /// Actions of `x` tried at least `(ln T_x)^2` times, or all of `A(x)` if
    /// none qualify.
    pub fn good_action_set(&self, x: usize) -> Vec<usize> {
        let visits = self.state_visits[x];
        let threshold = if visits <= 1 {
            0.0
        } else {
            (visits as f64).ln().powi(2)
        };
        let good: Vec<usize> = self.activations[x]
            .iter()
            .enumerate()
            .filter(|(_, &n)| n as f64 >= threshold)
            .map(|(a, _)| a)
            .collect();
        if good.is_empty() {
            (0..self.num_actions(x)).collect()
        } else {
            good
        }
    }

    /// Element-wise difference `self - earlier` of activation counts.
    pub fn activations_since(&self, earlier: &CountTables) -> Vec<Vec<u64>> {
        self.activations
            .iter()
            .zip(&earlier.activations)
            .map(|(now, then)| now.iter().zip(then).map(|(n, m)| n - m).collect())
            .collect()
    }
}
