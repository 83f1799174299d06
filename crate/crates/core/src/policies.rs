//! Decision rules: the KL upper-confidence index rule, the minimum empirical
//! divergence rule, posterior sampling, and two baselines (the
//! complete-information controller and uniform random play).
//!
//! The learning rules only ever read the reward table and the action sets of
//! the model they are handed; transition probabilities come from the counts.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};
use crate::estimation::CountTables;
use crate::klopt::{min_kl_above_threshold, ucb_index, ProbVector};
use crate::mdp::{
    dot, solve_optimality, ActionSets, Analysis, DeterministicPolicy, GainBias, MdpModel,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Ucb,
    Dmed,
    Ps,
    Oracle,
    /// Uniformly random admissible action; a linear-regret reference.
    Uniform,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Ucb,
        PolicyKind::Dmed,
        PolicyKind::Ps,
        PolicyKind::Oracle,
        PolicyKind::Uniform,
    ];

    /// The three learning policies.
    pub const ADAPTIVE: [PolicyKind; 3] = [PolicyKind::Ps, PolicyKind::Ucb, PolicyKind::Dmed];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ucb => "ucb",
            PolicyKind::Dmed => "dmed",
            PolicyKind::Ps => "ps",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = MdpError;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                MdpError::InvalidArgument(format!(
                    "unknown policy {s:?} (expected ucb, dmed, ps, oracle or uniform)"
                ))
            })
    }
}

/// Estimated transition rows, the good action sets, and the solution of the
/// optimality equations for the estimated model restricted to those sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub probs: Vec<Vec<ProbVector>>,
    pub good_sets: ActionSets,
    pub solution: GainBias,
}

impl Estimates {
    pub fn bias(&self) -> &[f64] {
        &self.solution.bias
    }

    /// `L(x, a, p_hat^x(a), v_hat)`.
    pub fn l_value(&self, model: &MdpModel, x: usize, a: usize) -> f64 {
        model.reward(x, a) + dot(self.probs[x][a].as_slice(), self.bias())
    }
}

pub fn shared_estimates(model: &MdpModel, counts: &CountTables) -> Result<Estimates> {
    check_shape(model, counts)?;
    let s = model.num_states();
    let probs: Vec<Vec<ProbVector>> = (0..s)
        .map(|x| {
            (0..model.num_actions(x))
                .map(|a| counts.estimate_probs(x, a))
                .collect()
        })
        .collect();
    let good_sets: ActionSets = (0..s).map(|x| counts.good_action_set(x)).collect();
    let estimated = model.with_transitions_unchecked(
        probs
            .iter()
            .map(|rows| rows.iter().map(|p| p.as_slice().to_vec()).collect())
            .collect(),
    );
    let solution = solve_optimality(&estimated, &good_sets)?;
    Ok(Estimates {
        probs,
        good_sets,
        solution,
    })
}

fn check_shape(model: &MdpModel, counts: &CountTables) -> Result<()> {
    let shape: Vec<usize> = (0..model.num_states())
        .map(|x| model.num_actions(x))
        .collect();
    if counts.actions_per_state() != shape {
        return Err(MdpError::InvalidArgument(format!(
            "count tables shaped {:?} do not match model shaped {:?}",
            counts.actions_per_state(),
            shape
        )));
    }
    Ok(())
}

/// Index of a maximal entry, ties broken uniformly at random. The rng is only
/// touched when there is a tie.
pub fn argmax_random(values: &[f64], rng: &mut RngStream) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .map(|(i, _)| i)
        .collect();
    match ties.len() {
        0 => 0,
        1 => ties[0],
        n => ties[rng.index(n)],
    }
}

/// Lowest index among the maximal entries.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `ln t / T_{x,a}`, infinite for untried actions.
fn confidence_radius(ln_t: f64, activations: u64) -> f64 {
    if activations == 0 {
        f64::INFINITY
    } else {
        ln_t / activations as f64
    }
}

/// Optimistic indices `u_a(t)` for every action of `x`.
pub fn ucb_indices(
    model: &MdpModel,
    counts: &CountTables,
    est: &Estimates,
    x: usize,
) -> Result<Vec<f64>> {
    let ln_t = (counts.clock() as f64).ln();
    (0..model.num_actions(x))
        .map(|a| {
            let radius = confidence_radius(ln_t, counts.activations(x, a));
            Ok(ucb_index(&est.probs[x][a], est.bias(), model.reward(x, a), radius)?.index)
        })
        .collect()
}

pub fn ucb_choose(
    model: &MdpModel,
    counts: &CountTables,
    x: usize,
    rng: &mut RngStream,
) -> Result<usize> {
    let est = shared_estimates(model, counts)?;
    let indices = ucb_indices(model, counts, &est, x)?;
    Ok(argmax_random(&indices, rng))
}

/// Estimated best action and the discrepancies `D_t(a)` of the others
/// (`None` at the best action itself).
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancies {
    pub best: usize,
    pub values: Vec<Option<f64>>,
}

pub fn dmed_discrepancies(
    model: &MdpModel,
    counts: &CountTables,
    est: &Estimates,
    x: usize,
) -> Result<Discrepancies> {
    let ls: Vec<f64> = (0..model.num_actions(x))
        .map(|a| est.l_value(model, x, a))
        .collect();
    let best = argmax_lowest(&ls);
    let ln_t = (counts.clock() as f64).ln();
    let values = (0..ls.len())
        .map(|a| {
            if a == best {
                return Ok(None);
            }
            let threshold = ls[best] - model.reward(x, a);
            let k = min_kl_above_threshold(&est.probs[x][a], est.bias(), threshold)?;
            let target = if ln_t == 0.0 {
                0.0
            } else if k == 0.0 {
                f64::INFINITY
            } else {
                // Infinite k gives a zero target: the action is never forced.
                ln_t / k
            };
            Ok(Some(target - counts.activations(x, a) as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Discrepancies { best, values })
}

/// Plays the estimated best action unless some other action is behind its
/// exploration target, in which case the most-behind one (lowest id on ties).
pub fn dmed_rule(d: &Discrepancies) -> usize {
    let mut pick: Option<(usize, f64)> = None;
    for (a, value) in d.values.iter().enumerate() {
        if let Some(v) = *value {
            if pick.is_none_or(|(_, best)| v > best) {
                pick = Some((a, v));
            }
        }
    }
    match pick {
        Some((a, v)) if v > 0.0 => a,
        _ => d.best,
    }
}

pub fn dmed_choose(model: &MdpModel, counts: &CountTables, x: usize) -> Result<usize> {
    let est = shared_estimates(model, counts)?;
    Ok(dmed_rule(&dmed_discrepancies(model, counts, &est, x)?))
}

/// Normalized independent `Gamma(alpha_i, 1)` draws.
///
/// Components are strictly positive whenever every `alpha_i >= 1`; for very
/// small shapes a component can underflow to zero.
pub fn dirichlet_sample(alpha: &[f64], rng: &mut RngStream) -> Result<ProbVector> {
    if alpha.is_empty() {
        return Err(MdpError::InvalidAlpha("empty parameter vector".into()));
    }
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        let gamma = Gamma::new(a, 1.0)
            .map_err(|_| MdpError::InvalidAlpha(format!("{a} is not a positive shape")))?;
        draws.push(gamma.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(MdpError::InvalidAlpha(format!(
            "gamma draws sum to {total}"
        )));
    }
    Ok(ProbVector::from_vec_unchecked(
        draws.into_iter().map(|g| g / total).collect(),
    ))
}

/// Posterior values `W_a = r_x(a) + <Q^a, v_hat>` with
/// `Q^a ~ Dirichlet(T_{x,a,.} + 1)`, drawn in action order.
pub fn ps_values(
    model: &MdpModel,
    counts: &CountTables,
    est: &Estimates,
    x: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    (0..model.num_actions(x))
        .map(|a| {
            let alpha: Vec<f64> = counts
                .transition_row(x, a)
                .iter()
                .map(|&n| n as f64 + 1.0)
                .collect();
            let q = dirichlet_sample(&alpha, rng)?;
            Ok(model.reward(x, a) + dot(q.as_slice(), est.bias()))
        })
        .collect()
}

pub fn ps_choose(
    model: &MdpModel,
    counts: &CountTables,
    x: usize,
    rng: &mut RngStream,
) -> Result<usize> {
    let est = shared_estimates(model, counts)?;
    let values = ps_values(model, counts, &est, x, rng)?;
    Ok(argmax_random(&values, rng))
}

/// Lowest-id member of `O(x, P)`.
pub fn oracle_choose(analysis: &Analysis, x: usize) -> usize {
    analysis.optimal[x][0]
}

/// A policy bound to a model, ready to be queried step by step.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: PolicyKind,
    oracle: Option<DeterministicPolicy>,
}

impl Controller {
    /// The oracle variant solves the true model up front.
    pub fn new(kind: PolicyKind, model: &MdpModel) -> Result<Self> {
        let oracle = match kind {
            PolicyKind::Oracle => Some(Analysis::new(model)?.greedy_policy()),
            _ => None,
        };
        Ok(Self { kind, oracle })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn choose(
        &self,
        model: &MdpModel,
        counts: &CountTables,
        x: usize,
        rng: &mut RngStream,
    ) -> Result<usize> {
        match self.kind {
            PolicyKind::Ucb => ucb_choose(model, counts, x, rng),
            PolicyKind::Dmed => dmed_choose(model, counts, x),
            PolicyKind::Ps => ps_choose(model, counts, x, rng),
            PolicyKind::Oracle => Ok(self
                .oracle
                .as_ref()
                .expect("oracle controller carries its policy")
                .action(x)),
            PolicyKind::Uniform => Ok(rng.index(model.num_actions(x))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::benchmark;
    use approx::assert_abs_diff_eq;

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!("UCB".parse::<PolicyKind>().unwrap(), PolicyKind::Ucb);
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn fresh_estimates_are_uniform() {
        let m = benchmark();
        let counts = CountTables::new(&[2, 2, 2]);
        let est = shared_estimates(&m, &counts).unwrap();
        for rows in &est.probs {
            for p in rows {
                assert_eq!(p.as_slice(), &[1.0 / 3.0; 3]);
            }
        }
        assert_eq!(est.good_sets, m.action_sets());
        // Uniform rows: the estimated model restarts from the uniform law
        // every step, so the gain is the best reward mean.
        let best: Vec<f64> = m
            .rewards()
            .iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        assert_abs_diff_eq!(
            est.solution.gain,
            best.iter().sum::<f64>() / 3.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn huge_proportional_counts_recover_gain() {
        let m = benchmark();
        let rows = m
            .transitions()
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|r| r.iter().map(|p| (p * 1e6).round() as u64).collect())
                    .collect()
            })
            .collect();
        let counts = CountTables::from_transition_counts(rows).unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        let truth = Analysis::new(&m).unwrap().solution.gain;
        assert_abs_diff_eq!(est.solution.gain, truth, epsilon = 1e-3);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = benchmark();
        assert!(shared_estimates(&m, &CountTables::new(&[2, 2])).is_err());
    }

    #[test]
    fn untried_action_gets_open_index() {
        let m = benchmark();
        let counts = CountTables::from_transition_counts(vec![
            vec![vec![5, 3, 2], vec![0, 0, 0]],
            vec![vec![1, 1, 1], vec![1, 1, 1]],
            vec![vec![2, 2, 2], vec![2, 2, 2]],
        ])
        .unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        let idx = ucb_indices(&m, &counts, &est, 0).unwrap();
        let top = est.bias().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(idx[1], m.reward(0, 1) + top);
        assert!(idx[0] < idx[1]);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(ucb_choose(&m, &counts, 0, &mut rng).unwrap(), 1);
    }

    #[test]
    fn ucb_at_first_step_is_open_on_every_action() {
        // t = 1 with everything untried: all indices are r + max v_hat, so the
        // higher-reward action wins outright.
        let m = benchmark();
        let counts = CountTables::new(&[2, 2, 2]);
        let mut rng = RngStream::new(3, 0);
        assert_eq!(ucb_choose(&m, &counts, 0, &mut rng).unwrap(), 1);
        assert_eq!(ucb_choose(&m, &counts, 2, &mut rng).unwrap(), 0);
        assert_eq!(rng.position(), 0);
    }

    #[test]
    fn ucb_zero_radius_is_greedy() {
        // Every action tried once and t = 1: ln t = 0 collapses every KL ball.
        let m = benchmark();
        let counts = CountTables::from_transition_counts(vec![
            vec![vec![1, 0, 0], vec![0, 1, 0]],
            vec![vec![0, 0, 1], vec![1, 0, 0]],
            vec![vec![0, 1, 0], vec![0, 0, 1]],
        ])
        .unwrap();
        // Rewind the clock to 1 through the serialized snapshot.
        let mut snapshot = serde_json::to_value(&counts).unwrap();
        snapshot["clock"] = serde_json::json!(1);
        let counts: CountTables = serde_json::from_value(snapshot).unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        let idx = ucb_indices(&m, &counts, &est, 1).unwrap();
        for (a, u) in idx.iter().enumerate() {
            assert_eq!(*u, est.l_value(&m, 1, a));
        }
    }

    #[test]
    fn dmed_rule_cases() {
        let d = Discrepancies {
            best: 0,
            values: vec![None, Some(3.2), Some(-1.0)],
        };
        assert_eq!(dmed_rule(&d), 1);
        let d = Discrepancies {
            best: 1,
            values: vec![Some(0.0), None, Some(-4.0)],
        };
        assert_eq!(dmed_rule(&d), 1);
        let d = Discrepancies {
            best: 2,
            values: vec![Some(2.0), Some(2.0), None],
        };
        assert_eq!(dmed_rule(&d), 0);
    }

    #[test]
    fn dmed_infeasible_threshold_never_forces() {
        // Action 1 has a much lower reward than the best achievable L of
        // action 0 even with all mass on the top state.
        let m = MdpModel::new(
            vec![vec![5.0, 0.0], vec![0.0]],
            vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
        )
        .unwrap();
        let counts = CountTables::from_transition_counts(vec![
            vec![vec![3, 3], vec![1, 1]],
            vec![vec![2, 2]],
        ])
        .unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        let d = dmed_discrepancies(&m, &counts, &est, 0).unwrap();
        assert_eq!(d.best, 0);
        assert_eq!(d.values[1], Some(-2.0));
        assert_eq!(dmed_choose(&m, &counts, 0).unwrap(), 0);
    }

    #[test]
    fn dmed_returns_best_when_counts_exceed_targets() {
        let m = benchmark();
        let mut rows = vec![vec![vec![0u64; 3]; 2]; 3];
        for (x, acts) in m.transitions().iter().enumerate() {
            for (a, r) in acts.iter().enumerate() {
                rows[x][a] = r.iter().map(|p| (p * 1e5).round() as u64).collect();
            }
        }
        let counts = CountTables::from_transition_counts(rows).unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        for x in 0..3 {
            let d = dmed_discrepancies(&m, &counts, &est, x).unwrap();
            assert!(d.values.iter().flatten().all(|v| *v <= 0.0));
            assert_eq!(dmed_choose(&m, &counts, x).unwrap(), d.best);
        }
        assert_eq!(
            (0..3)
                .map(|x| dmed_choose(&m, &counts, x).unwrap())
                .collect::<Vec<_>>(),
            vec![0, 1, 0]
        );
    }

    #[test]
    fn dirichlet_rejects_bad_alpha() {
        let mut rng = RngStream::new(0, 0);
        assert!(dirichlet_sample(&[1.0, 0.0], &mut rng).is_err());
        assert!(dirichlet_sample(&[1.0, -2.0], &mut rng).is_err());
        assert!(dirichlet_sample(&[], &mut rng).is_err());
    }

    #[test]
    fn dirichlet_output_on_simplex() {
        let mut rng = RngStream::new(9, 0);
        for _ in 0..1000 {
            let q = dirichlet_sample(&[1.0, 2.5, 40.0], &mut rng).unwrap();
            assert!(q.is_interior());
            assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ps_concentrates_with_many_counts() {
        let m = benchmark();
        let rows = m
            .transitions()
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|r| r.iter().map(|p| (p * 1e5).round() as u64).collect())
                    .collect()
            })
            .collect();
        let counts = CountTables::from_transition_counts(rows).unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        let mut rng = RngStream::new(5, 1);
        let draws: Vec<f64> = (0..2000)
            .map(|_| ps_values(&m, &counts, &est, 0, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / draws.len() as f64;
        let truth = m.reward(0, 0) + dot(m.row(0, 0), est.bias());
        assert!((mean - truth).abs() < 1e-3, "mean {mean} vs {truth}");
        assert!(var < 1e-5, "variance {var}");
    }

    #[test]
    fn ps_symmetric_actions_split_evenly() {
        let m = MdpModel::new(
            vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            vec![
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![vec![0.3, 0.7], vec![0.6, 0.4]],
            ],
        )
        .unwrap();
        let counts = CountTables::from_transition_counts(vec![
            vec![vec![4, 6], vec![4, 6]],
            vec![vec![3, 7], vec![6, 4]],
        ])
        .unwrap();
        let est = shared_estimates(&m, &counts).unwrap();
        let mut rng = RngStream::new(11, 1);
        let n = 10_000;
        let firsts = (0..n)
            .filter(|_| {
                let w = ps_values(&m, &counts, &est, 0, &mut rng).unwrap();
                argmax_random(&w, &mut rng) == 0
            })
            .count();
        let frac = firsts as f64 / n as f64;
        // 3 sigma of a fair coin over 10^4 flips is 0.015.
        assert!((frac - 0.5).abs() < 0.015, "fraction {frac}");
    }

    #[test]
    fn oracle_picks_lowest_optimal() {
        let m = benchmark();
        let a = Analysis::new(&m).unwrap();
        assert_eq!(
            (0..3).map(|x| oracle_choose(&a, x)).collect::<Vec<_>>(),
            vec![0, 1, 0]
        );
        let flat = m.shift_rewards(0.0);
        let flat = MdpModel::new(vec![vec![1.0; 2]; 3], flat.transitions().to_vec()).unwrap();
        let a = Analysis::new(&flat).unwrap();
        assert!((0..3).all(|x| oracle_choose(&a, x) == 0));
    }

    #[test]
    fn argmax_helpers() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(argmax_random(&[1.0, 3.0, 2.0], &mut rng), 1);
        assert_eq!(rng.position(), 0);
        let mut seen = [0usize; 3];
        for _ in 0..300 {
            seen[argmax_random(&[2.0, 2.0, 2.0], &mut rng)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 50));
        assert_eq!(argmax_lowest(&[1.0, 4.0, 4.0]), 1);
    }

    #[test]
    fn reward_shift_keeps_choices() {
        let m = benchmark();
        let shifted = m.shift_rewards(0.75);
        let counts = CountTables::from_transition_counts(vec![
            vec![vec![4, 9, 2], vec![3, 5, 1]],
            vec![vec![6, 1, 1], vec![2, 2, 3]],
            vec![vec![0, 4, 5], vec![5, 3, 2]],
        ])
        .unwrap();
        for kind in [PolicyKind::Ucb, PolicyKind::Dmed, PolicyKind::Ps] {
            let a = Controller::new(kind, &m).unwrap();
            let b = Controller::new(kind, &shifted).unwrap();
            for x in 0..3 {
                let mut r1 = RngStream::new(21, 1);
                let mut r2 = RngStream::new(21, 1);
                assert_eq!(
                    a.choose(&m, &counts, x, &mut r1).unwrap(),
                    b.choose(&shifted, &counts, x, &mut r2).unwrap(),
                    "{kind} in state {x}"
                );
            }
        }
    }
}
