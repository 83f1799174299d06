//! KL-constrained programs over the probability simplex.
//!
//! Two programs share the same machinery:
//!
//! * the optimistic index `sup { r + <q, v> : KL(p, q) <= delta }`, and
//! * the minimal perturbation `inf { KL(p, q) : <q, v> > c }`.
//!
//! Both are solved through their one-dimensional Lagrangian duals. The
//! maximizer of the first has the form `q_y ∝ p_y / (nu - v_y)` with
//! `nu > max v`; the minimizer of the second is the tilted law
//! `q_y ∝ p_y / (1 - lambda (v_y - c))` with `0 <= lambda < 1 / (max v - c)`.
//! The scalar multiplier is found by safeguarded bisection in log space, so
//! both programs stay well conditioned when the optimum sits close to a face
//! of the simplex.

use serde::{Deserialize, Serialize};

use crate::error::{MdpError, Result};
use crate::mdp::{dot, ROW_SUM_TOL};

/// Stopping tolerance on the KL (resp. linear) constraint.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Bisection iteration cap.
pub const MAX_BISECTION_STEPS: usize = 200;
/// Probabilities below this are treated as zero.
pub const PROB_FLOOR: f64 = 1e-300;

/// A probability vector over next states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Non-negative, finite, sums to one within `1e-12`.
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(MdpError::InvalidProbVector("empty vector".into()));
        }
        if let Some(c) = components.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(MdpError::InvalidProbVector(format!(
                "component {c} is negative or not finite"
            )));
        }
        let sum: f64 = components.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(MdpError::InvalidProbVector(format!("sums to {sum}")));
        }
        Ok(Self(components))
    }

    /// Like [`ProbVector::new`] but additionally requires every component to
    /// be strictly positive.
    pub fn interior(components: Vec<f64>) -> Result<Self> {
        let p = Self::new(components)?;
        p.require_interior()?;
        Ok(p)
    }

    pub(crate) fn from_vec_unchecked(components: Vec<f64>) -> Self {
        Self(components)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&c| c > 0.0)
    }

    fn require_interior(&self) -> Result<()> {
        if self.is_interior() {
            Ok(())
        } else {
            Err(MdpError::InvalidProbVector(
                "base point must be strictly positive".into(),
            ))
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = MdpError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `KL(p, q) = sum_y p_y ln(p_y / q_y)`; `+inf` when `q` misses mass of `p`.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    p.require_interior()?;
    check_len(p.len(), q.len())?;
    Ok(kl(p.as_slice(), q.as_slice()))
}

pub(crate) fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi == 0.0 {
                0.0
            } else if qi < PROB_FLOOR {
                f64::INFINITY
            } else {
                pi * (pi / qi).ln()
            }
        })
        .sum()
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(MdpError::DimensionMismatch { expected, found })
    }
}

fn max_min(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), &x| {
            (hi.max(x), lo.min(x))
        })
}

/// Result of the optimistic index program.
#[derive(Debug, Clone, PartialEq)]
pub struct UcbIndex {
    pub index: f64,
    pub maximizer: ProbVector,
}

/// `sup { reward + <q, v> : KL(p_hat, q) <= radius }` over the simplex.
///
/// `radius = +inf` yields the unconstrained supremum `reward + max v`,
/// attained on the closure by spreading `p_hat`'s mass over the maximizing
/// states.
pub fn ucb_index(p_hat: &ProbVector, v: &[f64], reward: f64, radius: f64) -> Result<UcbIndex> {
    p_hat.require_interior()?;
    check_len(p_hat.len(), v.len())?;
    if radius.is_nan() || radius < 0.0 {
        return Err(MdpError::InvalidArgument(format!(
            "KL radius must be non-negative, got {radius}"
        )));
    }
    let p = p_hat.as_slice();
    let (hi, lo) = max_min(v);
    let range = hi - lo;
    if range == 0.0 {
        return Ok(UcbIndex {
            index: reward + hi,
            maximizer: p_hat.clone(),
        });
    }
    if radius == 0.0 {
        return Ok(UcbIndex {
            index: reward + dot(p, v),
            maximizer: p_hat.clone(),
        });
    }
    if radius.is_infinite() {
        let top: f64 = p
            .iter()
            .zip(v)
            .filter(|(_, &vy)| vy == hi)
            .map(|(pi, _)| pi)
            .sum();
        let q = p
            .iter()
            .zip(v)
            .map(|(&pi, &vy)| if vy == hi { pi / top } else { 0.0 })
            .collect();
        return Ok(UcbIndex {
            index: reward + hi,
            maximizer: ProbVector::from_vec_unchecked(q),
        });
    }

    // Normalized gaps d_y = (max v - v_y) / range in [0, 1]; the multiplier is
    // nu = max v + s * range with s > 0.
    let gaps: Vec<f64> = v.iter().map(|&vy| (hi - vy) / range).collect();
    // KL(p, q(s)), monotonically decreasing from +inf (s -> 0) to 0 (s -> inf).
    let divergence = |s: f64| -> f64 {
        let mut log_term = 0.0;
        let mut shrink = 0.0;
        for (&pi, &d) in p.iter().zip(&gaps) {
            log_term += pi * (d / s).ln_1p();
            shrink += pi * d / (s + d);
        }
        log_term + (-shrink).ln_1p()
    };

    let (mut s_lo, mut s_hi) = (1.0_f64, 1.0_f64);
    let mut steps = 0;
    while divergence(s_hi) > radius {
        s_hi *= 2.0;
        steps += 1;
        if steps > MAX_BISECTION_STEPS * 8 {
            return Err(solver_failure(
                "ucb index bracket",
                steps,
                divergence(s_hi) - radius,
            ));
        }
    }
    while divergence(s_lo) < radius && s_lo > PROB_FLOOR {
        s_lo *= 0.5;
    }

    let mut iterations = 0;
    let mut f_hi = divergence(s_hi);
    while radius - f_hi > CONSTRAINT_TOL {
        if iterations == MAX_BISECTION_STEPS {
            return Err(solver_failure("ucb index", iterations, radius - f_hi));
        }
        iterations += 1;
        let mid = (s_lo * s_hi).sqrt();
        if mid <= s_lo || mid >= s_hi {
            // Bracket collapsed to adjacent floats.
            break;
        }
        let f_mid = divergence(mid);
        if f_mid > radius {
            s_lo = mid;
        } else {
            s_hi = mid;
            f_hi = f_mid;
        }
    }

    // Report the feasible end of the bracket.
    let s = s_hi;
    let weights: Vec<f64> = p
        .iter()
        .zip(&gaps)
        .map(|(&pi, &d)| pi * s / (s + d))
        .collect();
    let z: f64 = weights.iter().sum();
    let q: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let mean_gap: f64 = q.iter().zip(&gaps).map(|(qi, d)| qi * d).sum();
    Ok(UcbIndex {
        index: reward + hi - range * mean_gap,
        maximizer: ProbVector::from_vec_unchecked(q),
    })
}

/// `inf { KL(p, q) : <q, v> > threshold }` over the simplex.
///
/// Returns `0` when `p` itself already satisfies the constraint and `+inf`
/// when no point of the closed simplex does (`threshold >= max v`).
pub fn min_kl_above_threshold(p: &ProbVector, v: &[f64], threshold: f64) -> Result<f64> {
    p.require_interior()?;
    check_len(p.len(), v.len())?;
    if threshold.is_nan() {
        return Err(MdpError::InvalidArgument("threshold is NaN".into()));
    }
    let probs = p.as_slice();
    let (hi, _) = max_min(v);
    if threshold >= hi {
        return Ok(f64::INFINITY);
    }
    if dot(probs, v) >= threshold {
        return Ok(0.0);
    }

    // Normalized excess w_y = (v_y - c) / (max v - c) <= 1, with equality on
    // the maximizing states. Writing lambda = (1 - u) / (max v - c), the tilt
    // denominators are g_y = (1 - w_y) + u w_y, and the optimality condition
    // is sum_y p_y w_y / g_y = 0, i.e. the constraint holds with equality.
    let span = hi - threshold;
    let excess: Vec<f64> = v.iter().map(|&vy| (vy - threshold) / span).collect();
    let slack = |u: f64| -> f64 {
        probs
            .iter()
            .zip(&excess)
            .map(|(&pi, &w)| pi * w / ((1.0 - w) + u * w))
            .sum()
    };

    // slack is decreasing in u, negative at u = 1 and +inf as u -> 0.
    let (mut u_lo, mut u_hi) = (0.5_f64, 1.0_f64);
    while slack(u_lo) < 0.0 {
        u_hi = u_lo;
        u_lo *= 0.5;
        if u_lo < PROB_FLOOR {
            return Err(solver_failure("min-KL bracket", 0, slack(u_lo)));
        }
    }

    let mut iterations = 0;
    let mut u = (u_lo * u_hi).sqrt();
    loop {
        let g = slack(u);
        if g.abs() <= CONSTRAINT_TOL {
            break;
        }
        if iterations == MAX_BISECTION_STEPS {
            return Err(solver_failure("min-KL", iterations, g));
        }
        iterations += 1;
        if g > 0.0 {
            u_lo = u;
        } else {
            u_hi = u;
        }
        let mid = (u_lo * u_hi).sqrt();
        if mid <= u_lo || mid >= u_hi {
            break;
        }
        u = mid;
    }

    let value: f64 = probs
        .iter()
        .zip(&excess)
        .map(|(&pi, &w)| pi * ((1.0 - w) + u * w).ln())
        .sum();
    Ok(value.max(0.0))
}

fn solver_failure(solver: &'static str, iterations: usize, residual: f64) -> MdpError {
    MdpError::SolverFailure {
        solver,
        iterations,
        residual,
    }
}
