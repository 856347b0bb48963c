//! Sample-based estimates of the determinant-multiplier interval
//! `[ρ_min(ξ), ρ_max(ξ)]` at a lifted point, and the extreme subgradients
//! `(DW(ξ) − ρ cof ξ, ρ)` it spans.
//!
//! `ρ_max` is the infimum of the growth quotient
//! `q(η) = (W(ξ+η) − W(ξ) − DW(ξ)·η) / det η` over `det η > 0`, and `ρ_min`
//! the supremum over `det η < 0`. The quotient is not scale-invariant, so the
//! scan covers random unit directions times a log radius grid and the best
//! candidates are refined by Nelder-Mead without any radius cap. Each estimate
//! keeps the `η` that attains it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cof2, det2, inner_mat, Mat2, MinorsPoint};
use crate::objective::Objective;
use crate::search::{nelder_mead, random_unit_mat, stream_rng, SearchBudget};
use crate::touching::AffineFunctional5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// `det η > 0`, infimum.
    Max,
    /// `det η < 0`, supremum.
    Min,
}

/// One side of the interval with the direction that realises it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub value: f64,
    pub witness: Mat2,
    pub samples_used: usize,
    pub min_abs_det_seen: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubgradientInterval {
    pub rho_min: f64,
    pub rho_max: f64,
    pub samples_used: usize,
    pub min_abs_det_seen: f64,
    pub witness_min: Mat2,
    pub witness_max: Mat2,
}

impl SubgradientInterval {
    pub fn width(&self) -> f64 {
        self.rho_max - self.rho_min
    }

    pub fn is_valid(&self) -> bool {
        self.rho_min <= self.rho_max + 1e-6
    }

    /// The interval `[ρ, ρ]`.
    pub fn degenerate(rho: f64) -> Self {
        SubgradientInterval {
            rho_min: rho,
            rho_max: rho,
            samples_used: 0,
            min_abs_det_seen: f64::NAN,
            witness_min: Mat2::ZERO,
            witness_max: Mat2::ZERO,
        }
    }
}

/// Quotients whose rounding-error bound exceeds this relative size are
/// rejected.
const QUOTIENT_REL_ERR: f64 = 1e-10;

const REFINE_RESTARTS: usize = 8;

/// The growth quotient at base `m`. Returns `None` when `η` fails the
/// determinant guard for the requested sign, or when cancellation in the
/// numerator could move the quotient by more than `1e-10` relative.
pub fn growth_quotient<O: Objective>(
    obj: &O,
    m: Mat2,
    w: f64,
    grad: Mat2,
    eta: Mat2,
    det_floor: f64,
    positive: bool,
) -> Option<f64> {
    let d = det2(eta);
    let guard = det_floor * eta.norm_sq();
    let ok = if positive { d > guard } else { d < -guard };
    if !ok || !eta.is_finite() {
        return None;
    }
    let w_eta = obj.value(m + eta);
    let lin = inner_mat(grad, eta);
    let q = (w_eta - w - lin) / d;
    let err = 8.0 * f64::EPSILON * (w_eta.abs() + w.abs() + lin.abs() + grad.norm() * eta.norm()) / d.abs();
    (q.is_finite() && err <= QUOTIENT_REL_ERR * (1.0 + q.abs())).then_some(q)
}

fn estimate<O: Objective>(obj: &O, m: Mat2, budget: &SearchBudget, side: Side) -> Result<RhoEstimate> {
    budget.validate()?;
    let w = obj.value(m);
    if !(w > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    let grad = obj.gradient(m)?;
    let positive = side == Side::Max;
    // Minimise `sign · q` on both sides.
    let sign = if positive { 1.0 } else { -1.0 };
    let score = |eta: Mat2| growth_quotient(obj, m, w, grad, eta, budget.det_floor, positive).map(|q| sign * q);

    let stream = if positive { 1 } else { 2 };
    let mut rng = stream_rng(budget.seed, stream);
    let mut samples_used = 0;
    let mut min_abs_det = f64::INFINITY;
    // (score, eta), kept sorted ascending, at most `refine_candidates` long
    let mut best: Vec<(f64, Mat2)> = Vec::new();
    let keep = budget.refine_candidates.max(1);

    for _ in 0..budget.direction_samples {
        let dir = random_unit_mat(&mut rng);
        for &r in &budget.radius_grid {
            let eta = r * dir;
            if let Some(s) = score(eta) {
                samples_used += 1;
                min_abs_det = min_abs_det.min(det2(eta).abs());
                if best.len() < keep || s < best[best.len() - 1].0 {
                    let pos = best.partition_point(|(v, _)| *v <= s);
                    best.insert(pos, (s, eta));
                    best.truncate(keep);
                }
            }
        }
    }
    for z in obj.structured_points() {
        let eta = z - m;
        if let Some(s) = score(eta) {
            samples_used += 1;
            min_abs_det = min_abs_det.min(det2(eta).abs());
            if best.len() < keep || s < best[best.len() - 1].0 {
                let pos = best.partition_point(|(v, _)| *v <= s);
                best.insert(pos, (s, eta));
                best.truncate(keep);
            }
        }
    }
    if best.is_empty() {
        return Err(Error::BudgetExhausted);
    }

    let (mut best_score, mut witness) = best[0];
    let mut consider = |cand: Mat2, samples_used: &mut usize, evals: usize| {
        *samples_used += evals;
        // Re-score so the witness reproduces the value bit for bit.
        if let Some(s) = score(cand) {
            if s < best_score {
                best_score = s;
                witness = cand;
                min_abs_det = min_abs_det.min(det2(cand).abs());
            }
        }
    };
    for &(_, start) in &best {
        // Plain coordinates.
        let res = nelder_mead(
            |x: &[f64]| score(mat_of(x)).unwrap_or(f64::INFINITY),
            &start.to_array(),
            &[0.1 * start.norm(); 4],
            budget.refine_iters,
            1e-15,
        );
        consider(mat_of(&res.x), &mut samples_used, res.evaluations);

        // asinh-compressed coordinates: infima approached as some entries
        // diverge while others settle become well-conditioned valleys.
        // Restarted with a fresh simplex while it keeps improving.
        let mut z = start.to_array().map(f64::asinh).to_vec();
        let mut last = f64::INFINITY;
        for _ in 0..REFINE_RESTARTS {
            let res = nelder_mead(
                |z: &[f64]| score(sinh_mat(z)).unwrap_or(f64::INFINITY),
                &z,
                &[0.25; 4],
                budget.refine_iters,
                1e-15,
            );
            consider(sinh_mat(&res.x), &mut samples_used, res.evaluations);
            if !(res.value < last) {
                break;
            }
            last = res.value;
            z = res.x;
        }
    }

    Ok(RhoEstimate {
        value: sign * best_score,
        witness,
        samples_used,
        min_abs_det_seen: min_abs_det,
    })
}

fn mat_of(x: &[f64]) -> Mat2 {
    Mat2::new(x[0], x[1], x[2], x[3])
}

fn sinh_mat(z: &[f64]) -> Mat2 {
    Mat2::new(z[0].sinh(), z[1].sinh(), z[2].sinh(), z[3].sinh())
}

/// Upper estimate of `ρ_max(m)`: the smallest quotient found over `det η > 0`.
pub fn estimate_rho_max<O: Objective>(obj: &O, m: Mat2, budget: &SearchBudget) -> Result<RhoEstimate> {
    estimate(obj, m, budget, Side::Max)
}

/// Lower estimate of `ρ_min(m)`: the largest quotient found over `det η < 0`.
pub fn estimate_rho_min<O: Objective>(obj: &O, m: Mat2, budget: &SearchBudget) -> Result<RhoEstimate> {
    estimate(obj, m, budget, Side::Min)
}

pub fn estimate_interval<O: Objective>(obj: &O, m: Mat2, budget: &SearchBudget) -> Result<SubgradientInterval> {
    let hi = estimate_rho_max(obj, m, budget)?;
    let lo = estimate_rho_min(obj, m, budget)?;
    Ok(SubgradientInterval {
        rho_min: lo.value,
        rho_max: hi.value,
        samples_used: lo.samples_used + hi.samples_used,
        min_abs_det_seen: lo.min_abs_det_seen.min(hi.min_abs_det_seen),
        witness_min: lo.witness,
        witness_max: hi.witness,
    })
}

/// The subgradient `(DW(m) − ρ cof m, ρ)` of the envelope at `lift(m)`.
pub fn subgradient_at<O: Objective>(obj: &O, m: Mat2, rho: f64) -> Result<MinorsPoint> {
    let grad = obj.gradient(m)?;
    Ok(MinorsPoint::new(grad - rho * cof2(m), rho))
}

/// The two extreme subgradients, at `ρ_min` and `ρ_max`, as supporting affine
/// functionals through `(lift(m), W(m))`.
pub fn subgradient_set<O: Objective>(
    obj: &O,
    m: Mat2,
    interval: &SubgradientInterval,
) -> Result<(AffineFunctional5, AffineFunctional5)> {
    if !interval.is_valid() {
        return Err(Error::InvalidInput(format!(
            "interval [{}, {}] is reversed",
            interval.rho_min, interval.rho_max
        )));
    }
    let base = crate::linalg::lift(m);
    let w = obj.value(m);
    let make = |rho: f64| -> Result<AffineFunctional5> {
        let g = subgradient_at(obj, m, rho)?;
        Ok(AffineFunctional5::through(g, base, w))
    };
    Ok((make(interval.rho_min)?, make(interval.rho_max)?))
}
