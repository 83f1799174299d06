//! Finite average-reward MDP model and the complete-information solver.
//!
//! States are `0..num_states`. Actions are scoped per state: state `x` admits
//! action ids `0..num_actions(x)`. Rewards are known constants and transition
//! rows are required to lie in the open simplex, which makes every stationary
//! policy's chain irreducible and aperiodic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};

/// Tolerance for a transition row summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Absolute tolerance on L values for membership in the optimal action set.
pub const TIE_TOL: f64 = 1e-9;
/// Relative value iteration stops once the span of successive differences
/// falls below this.
pub const SPAN_TOL: f64 = 1e-10;
/// Iteration cap for relative value iteration.
pub const MAX_RVI_ITERATIONS: usize = 1_000_000;
/// Largest number of deterministic policies `brute_force_gain` will enumerate.
pub const ENUMERATION_CAP: u128 = 1_000_000;

/// Per-state subsets of admissible action ids.
pub type ActionSets = Vec<Vec<usize>>;

/// A finite MDP with known rewards `r_x(a)` and transition law `p_{x,y}(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct MdpModel {
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawModel> for MdpModel {
    type Error = MdpError;

    fn try_from(raw: RawModel) -> Result<Self> {
        MdpModel::new(raw.rewards, raw.transitions)
    }
}

impl From<MdpModel> for RawModel {
    fn from(m: MdpModel) -> Self {
        RawModel {
            rewards: m.rewards,
            transitions: m.transitions,
        }
    }
}

impl MdpModel {
    /// Builds a model from `rewards[x][a]` and `transitions[x][a][y]`,
    /// validating that every row is a strictly positive probability vector.
    pub fn new(rewards: Vec<Vec<f64>>, transitions: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let s = rewards.len();
        if s == 0 {
            return Err(MdpError::InvalidModel("model has no states".into()));
        }
        if transitions.len() != s {
            return Err(MdpError::InvalidModel(format!(
                "{} reward rows but {} transition blocks",
                s,
                transitions.len()
            )));
        }
        for (x, (rs, rows)) in rewards.iter().zip(&transitions).enumerate() {
            if rs.is_empty() {
                return Err(MdpError::InvalidModel(format!(
                    "state {x} has no admissible actions"
                )));
            }
            if rows.len() != rs.len() {
                return Err(MdpError::InvalidModel(format!(
                    "state {x}: {} rewards but {} transition rows",
                    rs.len(),
                    rows.len()
                )));
            }
            for (a, (&r, row)) in rs.iter().zip(rows).enumerate() {
                if !r.is_finite() {
                    return Err(MdpError::InvalidModel(format!(
                        "reward of state {x} action {a} is not finite"
                    )));
                }
                validate_row(row, s).map_err(|msg| {
                    MdpError::InvalidModel(format!("transition row of state {x} action {a}: {msg}"))
                })?;
            }
        }
        Ok(Self {
            rewards,
            transitions,
        })
    }

    /// Same reward structure, different transition law. Rows are trusted to
    /// be valid (used for estimated models built from counts).
    pub(crate) fn with_transitions_unchecked(&self, transitions: Vec<Vec<Vec<f64>>>) -> Self {
        debug_assert_eq!(transitions.len(), self.num_states());
        Self {
            rewards: self.rewards.clone(),
            transitions,
        }
    }

    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_actions(&self, x: usize) -> usize {
        self.rewards[x].len()
    }

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x][a]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        &self.transitions[x][a]
    }

    pub fn transitions(&self) -> &[Vec<Vec<f64>>] {
        &self.transitions
    }

    /// `A(x)` for every state.
    pub fn action_sets(&self) -> ActionSets {
        self.rewards
            .iter()
            .map(|rs| (0..rs.len()).collect())
            .collect()
    }

    /// Returns a copy with `shift` added to every reward.
    pub fn shift_rewards(&self, shift: f64) -> Self {
        Self {
            rewards: self
                .rewards
                .iter()
                .map(|rs| rs.iter().map(|r| r + shift).collect())
                .collect(),
            transitions: self.transitions.clone(),
        }
    }

    pub fn check_action(&self, x: usize, a: usize) -> Result<()> {
        if x >= self.num_states() {
            return Err(MdpError::IndexOutOfRange(format!("state {x}")));
        }
        if a >= self.num_actions(x) {
            return Err(MdpError::IndexOutOfRange(format!(
                "action {a} in state {x}"
            )));
        }
        Ok(())
    }
}

fn validate_row(row: &[f64], s: usize) -> std::result::Result<(), String> {
    if row.len() != s {
        return Err(format!("has {} entries, expected {s}", row.len()));
    }
    if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(format!("entry {p} is not strictly positive"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(format!("sums to {sum}, expected 1"));
    }
    Ok(())
}

/// Solution `(phi, v)` of the average-reward optimality equations, with the
/// bias pinned to zero at state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBias {
    pub gain: f64,
    pub bias: Vec<f64>,
}

/// A stationary deterministic policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicPolicy(Vec<usize>);

impl DeterministicPolicy {
    pub fn new(model: &MdpModel, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != model.num_states() {
            return Err(MdpError::DimensionMismatch {
                expected: model.num_states(),
                found: actions.len(),
            });
        }
        for (x, &a) in actions.iter().enumerate() {
            model.check_action(x, a)?;
        }
        Ok(Self(actions))
    }

    pub fn action(&self, x: usize) -> usize {
        self.0[x]
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }
}

/// `r_x(a) + sum_y q_y v_y`.
pub fn l_value(model: &MdpModel, x: usize, a: usize, q: &[f64], v: &[f64]) -> Result<f64> {
    model.check_action(x, a)?;
    let s = model.num_states();
    for len in [q.len(), v.len()] {
        if len != s {
            return Err(MdpError::DimensionMismatch {
                expected: s,
                found: len,
            });
        }
    }
    Ok(model.reward(x, a) + dot(q, v))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `phi + v_x = max_{a in allowed(x)} { r_x(a) + sum_y p_{x,y}(a) v_y }`
/// by relative value iteration with span-seminorm stopping.
pub fn solve_optimality(model: &MdpModel, allowed: &[Vec<usize>]) -> Result<GainBias> {
    let s = model.num_states();
    if allowed.len() != s {
        return Err(MdpError::DimensionMismatch {
            expected: s,
            found: allowed.len(),
        });
    }
    for (x, acts) in allowed.iter().enumerate() {
        if acts.is_empty() {
            return Err(MdpError::InvalidModel(format!(
                "allowed action set of state {x} is empty"
            )));
        }
        for &a in acts {
            model.check_action(x, a)?;
        }
    }

    let bellman = |h: &[f64], out: &mut [f64]| {
        for (x, acts) in allowed.iter().enumerate() {
            out[x] = acts
                .iter()
                .map(|&a| model.reward(x, a) + dot(model.row(x, a), h))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    };

    let mut h = vec![0.0; s];
    let mut th = vec![0.0; s];
    let mut span = f64::INFINITY;
    for _ in 0..MAX_RVI_ITERATIONS {
        bellman(&h, &mut th);
        let (lo, hi) = th
            .iter()
            .zip(&h)
            .map(|(t, v)| t - v)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                (lo.min(d), hi.max(d))
            });
        span = hi - lo;
        let offset = th[0];
        for (v, t) in h.iter_mut().zip(&th) {
            *v = t - offset;
        }
        if span < SPAN_TOL {
            bellman(&h, &mut th);
            return Ok(GainBias {
                gain: th[0],
                bias: h,
            });
        }
    }
    Err(MdpError::SolverFailure {
        solver: "relative value iteration",
        iterations: MAX_RVI_ITERATIONS,
        residual: span,
    })
}

/// Everything the complete-information controller knows: the solution of
/// the optimality equations over the full action sets, every L value, the
/// optimal sets `O(x, P)` and the per-pair losses `Delta(x, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub solution: GainBias,
    pub l_values: Vec<Vec<f64>>,
    pub optimal: ActionSets,
    pub deltas: Vec<Vec<f64>>,
}

impl Analysis {
    pub fn new(model: &MdpModel) -> Result<Self> {
        let solution = solve_optimality(model, &model.action_sets())?;
        let l_values: Vec<Vec<f64>> = (0..model.num_states())
            .map(|x| {
                (0..model.num_actions(x))
                    .map(|a| model.reward(x, a) + dot(model.row(x, a), &solution.bias))
                    .collect()
            })
            .collect();
        let mut optimal = Vec::with_capacity(l_values.len());
        let mut deltas = Vec::with_capacity(l_values.len());
        for ls in &l_values {
            let best = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            optimal.push(
                ls.iter()
                    .enumerate()
                    .filter(|(_, &l)| best - l <= TIE_TOL)
                    .map(|(a, _)| a)
                    .collect(),
            );
            deltas.push(ls.iter().map(|l| best - l).collect());
        }
        Ok(Self {
            solution,
            l_values,
            optimal,
            deltas,
        })
    }

    pub fn is_optimal(&self, x: usize, a: usize) -> bool {
        self.optimal[x].contains(&a)
    }

    /// Lowest-id optimal action in every state.
    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy(self.optimal.iter().map(|o| o[0]).collect())
    }
}

/// `O(x, P)` for every state.
pub fn optimal_action_set(model: &MdpModel) -> Result<ActionSets> {
    Ok(Analysis::new(model)?.optimal)
}

/// Loss `Delta(x, a) = L*(x) - L(x, a, p^x(a), v)`; non-negative.
pub fn delta(model: &MdpModel, x: usize, a: usize) -> Result<f64> {
    model.check_action(x, a)?;
    Ok(Analysis::new(model)?.deltas[x][a])
}

/// Stationary distribution of the chain induced by `policy`.
pub fn stationary_distribution(model: &MdpModel, policy: &DeterministicPolicy) -> Result<Vec<f64>> {
    let s = model.num_states();
    // Rows 0..s-1 encode mu (P - I) = 0, the last row replaced by sum(mu) = 1.
    let mut m = DMatrix::<f64>::zeros(s, s);
    for x in 0..s {
        let row = model.row(x, policy.action(x));
        for y in 0..s {
            m[(y, x)] += row[y];
        }
        m[(x, x)] -= 1.0;
    }
    for x in 0..s {
        m[(s - 1, x)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(s);
    rhs[s - 1] = 1.0;
    let mu = m.lu().solve(&rhs).ok_or_else(|| {
        MdpError::InvalidModel("policy chain has no unique stationary distribution".into())
    })?;
    Ok(mu.iter().copied().collect())
}

/// Long-run average reward of a stationary deterministic policy.
pub fn policy_gain(model: &MdpModel, policy: &DeterministicPolicy) -> Result<f64> {
    let mu = stationary_distribution(model, policy)?;
    Ok(mu
        .iter()
        .enumerate()
        .map(|(x, m)| m * model.reward(x, policy.action(x)))
        .sum())
}

/// Exhaustive search over all stationary deterministic policies.
pub fn brute_force_gain(model: &MdpModel) -> Result<(f64, DeterministicPolicy)> {
    let s = model.num_states();
    let required = (0..s)
        .map(|x| model.num_actions(x) as u128)
        .product::<u128>();
    if required > ENUMERATION_CAP {
        return Err(MdpError::EnumerationCap {
            required,
            cap: ENUMERATION_CAP,
        });
    }
    let mut current = DeterministicPolicy(vec![0; s]);
    let mut best: Option<(f64, DeterministicPolicy)> = None;
    loop {
        let g = policy_gain(model, &current)?;
        if best.as_ref().is_none_or(|(bg, _)| g > *bg) {
            best = Some((g, current.clone()));
        }
        // Mixed-radix increment over action ids.
        let mut x = 0;
        loop {
            if x == s {
                return Ok(best.expect("at least one policy enumerated"));
            }
            current.0[x] += 1;
            if current.0[x] < model.num_actions(x) {
                break;
            }
            current.0[x] = 0;
            x += 1;
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::benchmark;
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_state(rewards: Vec<f64>) -> MdpModel {
        let n = rewards.len();
        MdpModel::new(vec![rewards], vec![vec![vec![1.0]; n]]).unwrap()
    }

    fn residual(model: &MdpModel, gb: &GainBias) -> f64 {
        (0..model.num_states())
            .map(|x| {
                let best = (0..model.num_actions(x))
                    .map(|a| l_value(model, x, a, model.row(x, a), &gb.bias).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                (gb.gain + gb.bias[x] - best).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn single_state_gain_is_best_reward() {
        let m = single_state(vec![0.3, 0.9]);
        let gb = solve_optimality(&m, &m.action_sets()).unwrap();
        assert_eq!(gb.gain, 0.9);
        assert_eq!(gb.bias, vec![0.0]);
        let (g, pol) = brute_force_gain(&m).unwrap();
        assert_abs_diff_eq!(g, 0.9, epsilon = 1e-15);
        assert_eq!(pol.actions(), &[1]);
    }

    #[test]
    fn constant_rewards_give_zero_bias() {
        let m = benchmark();
        let flat = MdpModel::new(vec![vec![0.4; 2]; 3], m.transitions().to_vec()).unwrap();
        let gb = solve_optimality(&flat, &flat.action_sets()).unwrap();
        assert_abs_diff_eq!(gb.gain, 0.4, epsilon = 1e-12);
        for v in &gb.bias {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        assert_eq!(optimal_action_set(&flat).unwrap(), flat.action_sets());
    }

    #[test]
    fn benchmark_optimal_policy_and_oracle_agree() {
        let m = benchmark();
        let analysis = Analysis::new(&m).unwrap();
        assert_eq!(analysis.optimal, vec![vec![0], vec![1], vec![0]]);
        assert_eq!(analysis.solution.bias[0], 0.0);
        assert!(residual(&m, &analysis.solution) <= 1e-9);

        let (g, pol) = brute_force_gain(&m).unwrap();
        assert_eq!(pol.actions(), &[0, 1, 0]);
        assert_abs_diff_eq!(analysis.solution.gain, g, epsilon = 1e-8);
    }

    #[test]
    fn optimal_action_attains_gain_plus_bias() {
        let m = benchmark();
        let gb = solve_optimality(&m, &m.action_sets()).unwrap();
        let l = l_value(&m, 0, 0, m.row(0, 0), &gb.bias).unwrap();
        assert_abs_diff_eq!(l, gb.gain + gb.bias[0], epsilon = 1e-9);
    }

    #[test]
    fn l_value_basics() {
        let m = benchmark();
        assert_eq!(l_value(&m, 1, 1, m.row(1, 1), &[0.0; 3]).unwrap(), 0.71);
        let q = [1e-9, 1.0 - 2e-9, 1e-9];
        let v = [3.0, -2.0, 5.0];
        assert_abs_diff_eq!(
            l_value(&m, 0, 0, &q, &v).unwrap(),
            0.13 - 2.0,
            epsilon = 1e-7
        );
        assert!(matches!(
            l_value(&m, 0, 0, &[0.5, 0.5], &v),
            Err(MdpError::DimensionMismatch { .. })
        ));
        assert!(l_value(&m, 0, 2, &q, &v).is_err());
    }

    #[test]
    fn benchmark_suboptimal_losses_positive() {
        let m = benchmark();
        let a = Analysis::new(&m).unwrap();
        for (x, sub) in [(0, 1), (1, 0), (2, 1)] {
            assert!(
                a.deltas[x][sub] > TIE_TOL,
                "Delta({x},{sub}) = {}",
                a.deltas[x][sub]
            );
            assert_eq!(delta(&m, x, sub).unwrap(), a.deltas[x][sub]);
        }
        for (x, opt) in [(0, 0), (1, 1), (2, 0)] {
            assert_eq!(a.deltas[x][opt], 0.0);
        }
    }

    #[test]
    fn duplicated_action_ties() {
        let base = benchmark();
        let mut rewards = base.rewards().to_vec();
        let mut transitions = base.transitions().to_vec();
        let r = rewards[1][1];
        rewards[1].push(r);
        let dup = transitions[1][1].clone();
        transitions[1].push(dup);
        let m = MdpModel::new(rewards, transitions).unwrap();
        let a = Analysis::new(&m).unwrap();
        assert_eq!(a.optimal[1], vec![1, 2]);
        assert_eq!(a.deltas[1][1], 0.0);
        assert_eq!(a.deltas[1][2], 0.0);
        assert_eq!(a.greedy_policy().actions(), &[0, 1, 0]);
    }

    #[test]
    fn doubly_stochastic_uniform_stationary_law() {
        // Circulant rows shared by both actions: every policy's chain is
        // doubly stochastic.
        let base = [0.5, 0.3, 0.2];
        let row = |x: usize| (0..3).map(|y| base[(y + 3 - x) % 3]).collect::<Vec<f64>>();
        let r = [0.2, 0.7];
        let m = MdpModel::new(
            vec![r.to_vec(); 3],
            (0..3).map(|x| vec![row(x), row(x)]).collect(),
        )
        .unwrap();
        let pol = DeterministicPolicy::new(&m, vec![0, 1, 1]).unwrap();
        let mu = stationary_distribution(&m, &pol).unwrap();
        for p in &mu {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(
            policy_gain(&m, &pol).unwrap(),
            (0.2 + 0.7 + 0.7) / 3.0,
            epsilon = 1e-12
        );
        let (g, best) = brute_force_gain(&m).unwrap();
        assert_abs_diff_eq!(g, 0.7, epsilon = 1e-12);
        assert_eq!(best.actions(), &[1, 1, 1]);
    }

    #[test]
    fn reward_shift_moves_gain_only() {
        let m = benchmark();
        let shifted = m.shift_rewards(2.5);
        let a = Analysis::new(&m).unwrap();
        let b = Analysis::new(&shifted).unwrap();
        assert_abs_diff_eq!(b.solution.gain, a.solution.gain + 2.5, epsilon = 1e-9);
        for (u, w) in a.solution.bias.iter().zip(&b.solution.bias) {
            assert_abs_diff_eq!(u, w, epsilon = 1e-9);
        }
        assert_eq!(a.optimal, b.optimal);
    }

    #[test]
    fn restricted_single_action_sets_evaluate_that_policy() {
        let m = benchmark();
        let pol = DeterministicPolicy::new(&m, vec![1, 0, 1]).unwrap();
        let allowed: ActionSets = pol.actions().iter().map(|&a| vec![a]).collect();
        let gb = solve_optimality(&m, &allowed).unwrap();
        assert_abs_diff_eq!(gb.gain, policy_gain(&m, &pol).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn rejects_invalid_models() {
        let bad_sum = MdpModel::new(
            vec![vec![1.0]; 2],
            vec![vec![vec![0.5, 0.4]], vec![vec![0.5, 0.5]]],
        );
        assert!(
            matches!(bad_sum, Err(MdpError::InvalidModel(msg)) if msg.contains("state 0 action 0"))
        );
        let zero = MdpModel::new(
            vec![vec![1.0]; 2],
            vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5]]],
        );
        assert!(zero.is_err());
        let no_actions = MdpModel::new(vec![vec![]], vec![vec![]]);
        assert!(no_actions.is_err());
        let nan = MdpModel::new(vec![vec![f64::NAN]], vec![vec![vec![1.0]]]);
        assert!(nan.is_err());
    }

    #[test]
    fn solver_rejects_bad_allowed_sets() {
        let m = benchmark();
        assert!(solve_optimality(&m, &[vec![0], vec![], vec![0]]).is_err());
        assert!(solve_optimality(&m, &[vec![0], vec![5], vec![0]]).is_err());
        assert!(solve_optimality(&m, &[vec![0]]).is_err());
    }

    #[test]
    fn enumeration_cap_enforced() {
        let s = 7;
        let row = vec![1.0 / s as f64; s];
        let m = MdpModel::new(vec![vec![0.0; 8]; s], vec![vec![row; 8]; s]).unwrap();
        assert!(matches!(
            brute_force_gain(&m),
            Err(MdpError::EnumerationCap { .. })
        ));
    }
}
