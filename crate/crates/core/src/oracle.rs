//! Brute-force reference solvers used to check the dual solvers in tests.
//!
//! The mesh search is deliberately naive: it evaluates the objective on every
//! point of a regular simplex mesh (plus the base point `p`), then repeats on
//! a finer mesh around the incumbent. It shares no code path with the dual
//! solvers in [`crate::klopt`].

use crate::error::{MdpError, Result};

/// Largest dimension the mesh search supports.
pub const MAX_GRID_DIM: usize = 3;

/// One of the two KL programs, in terms of plain slices.
#[derive(Debug, Clone, Copy)]
pub enum KlProgram<'a> {
    /// `sup { reward + <q, v> : KL(p_hat, q) <= radius }`.
    UcbIndex {
        p_hat: &'a [f64],
        v: &'a [f64],
        reward: f64,
        radius: f64,
    },
    /// `inf { KL(p, q) : <q, v> >= threshold }`.
    MinKlAbove {
        p: &'a [f64],
        v: &'a [f64],
        threshold: f64,
    },
}

impl KlProgram<'_> {
    fn base(&self) -> &[f64] {
        match self {
            KlProgram::UcbIndex { p_hat, .. } => p_hat,
            KlProgram::MinKlAbove { p, .. } => p,
        }
    }

    /// Objective in "larger is better" form, `None` when infeasible.
    fn score(&self, q: &[f64]) -> Option<f64> {
        let divergence =
            |p: &[f64]| -> f64 { p.iter().zip(q).map(|(pi, qi)| pi * (pi / qi).ln()).sum() };
        let inner = |v: &[f64]| -> f64 { v.iter().zip(q).map(|(a, b)| a * b).sum() };
        match *self {
            KlProgram::UcbIndex {
                p_hat,
                v,
                reward,
                radius,
            } => (divergence(p_hat) <= radius).then(|| reward + inner(v)),
            KlProgram::MinKlAbove { p, v, threshold } => {
                (inner(v) >= threshold).then(|| -divergence(p))
            }
        }
    }

    fn value(&self, score: Option<f64>) -> f64 {
        match (self, score) {
            (KlProgram::UcbIndex { .. }, Some(s)) => s,
            (KlProgram::MinKlAbove { .. }, Some(s)) => -s,
            (KlProgram::MinKlAbove { .. }, None) => f64::INFINITY,
            (KlProgram::UcbIndex { .. }, None) => f64::NEG_INFINITY,
        }
    }
}

/// Exhaustive mesh optimum of `program` with mesh spacing `step`, followed by
/// two local refinements (spacing `step / 20` then `step / 400`) around the
/// best mesh point.
pub fn kl_grid_oracle(program: &KlProgram<'_>, step: f64) -> Result<f64> {
    let n = program.base().len();
    if !(1..=MAX_GRID_DIM).contains(&n) {
        return Err(MdpError::InvalidArgument(format!(
            "grid oracle supports 1..={MAX_GRID_DIM} states, got {n}"
        )));
    }
    if !(step > 0.0 && step <= 1e-3) {
        return Err(MdpError::InvalidArgument(format!(
            "grid step must be in (0, 1e-3], got {step}"
        )));
    }

    let mut best_score = program.score(program.base());
    let mut best_point = program.base().to_vec();
    let consider = |q: &[f64], best_score: &mut Option<f64>, best_point: &mut Vec<f64>| {
        if let Some(s) = program.score(q) {
            if best_score.is_none_or(|b| s > b) {
                *best_score = Some(s);
                best_point.clear();
                best_point.extend_from_slice(q);
            }
        }
    };

    // First pass covers the whole simplex; later passes a box of half-width
    // twice the previous spacing around the incumbent.
    let mut half_width: Option<f64> = None;
    let mut spacing = step;
    for _pass in 0..3 {
        let center = best_point.clone();
        let range = |c: f64| match half_width {
            None => (0.0, 1.0),
            Some(w) => ((c - w).max(0.0), (c + w).min(1.0)),
        };
        let (lo0, hi0) = range(center[0]);
        let steps0 = ((hi0 - lo0) / spacing).round() as usize;
        match n {
            1 => consider(&[1.0], &mut best_score, &mut best_point),
            2 => {
                for i in 0..=steps0 {
                    let q0 = lo0 + i as f64 * spacing;
                    if q0 > 0.0 && q0 < 1.0 {
                        consider(&[q0, 1.0 - q0], &mut best_score, &mut best_point);
                    }
                }
            }
            _ => {
                let (lo1, hi1) = range(center[1]);
                let steps1 = ((hi1 - lo1) / spacing).round() as usize;
                for i in 0..=steps0 {
                    let q0 = lo0 + i as f64 * spacing;
                    if q0 <= 0.0 || q0 >= 1.0 {
                        continue;
                    }
                    for j in 0..=steps1 {
                        let q1 = lo1 + j as f64 * spacing;
                        let q2 = 1.0 - q0 - q1;
                        if q1 <= 0.0 || q2 <= 0.0 {
                            continue;
                        }
                        consider(&[q0, q1, q2], &mut best_score, &mut best_point);
                    }
                }
            }
        }
        half_width = Some(2.0 * spacing);
        spacing /= 20.0;
    }
    Ok(program.value(best_score))
}
