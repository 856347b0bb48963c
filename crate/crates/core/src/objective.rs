//! Polyconvex objectives on 2×2 matrices.
//!
//! Two built-ins are provided behind the [`Objective`] trait:
//!
//! * `Counterexample { y }`: `W(ξ) = |([ξ], det ξ − y)|`, the distance in R⁵
//!   from `(ξ, det ξ)` to the line `{(s e₁⊗e₁, y)}`. Strictly positive for
//!   `y > 0`, hence smooth everywhere.
//! * `NormOfMinors`: `f(ξ) = |(ξ, det ξ)|`, smooth away from `ξ = 0`.
//!
//! Both are `|F(ξ)|` for a map `F` into R⁵ that is affine in the minors, so
//! `DW = DFᵀ F / |F|` and the canonical determinant multiplier is the last
//! component of `F / |F|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{bracket, cof2, det2, inner_mat, lift, Mat2, MinorsPoint};

pub const DEFAULT_Y: f64 = 1.0;

/// A differentiable polyconvex function with a canonical determinant
/// multiplier `ρ(ξ)` such that
/// `W(ξ+η) ≥ W(ξ) + DW(ξ)·η + ρ(ξ) det η` for all `η`.
pub trait Objective: Sync {
    fn value(&self, m: Mat2) -> f64;
    fn gradient(&self, m: Mat2) -> Result<Mat2>;
    fn rho(&self, m: Mat2) -> Result<f64>;

    /// Points where the objective has asymptotically interesting behaviour,
    /// used to seed the derivative-free searches. Empty by default.
    fn structured_points(&self) -> Vec<Mat2> {
        Vec::new()
    }

    /// Gradient components `(index, value)` shared by every affine `a` with
    /// `a∘R ≤ W`, in the coordinate order of [`MinorsPoint::to_array`].
    fn pinned_gradient(&self) -> Vec<(usize, f64)> {
        Vec::new()
    }

    /// Linear conditions `row · (∇a, offset) ≤ rhs` that every such `a` must
    /// satisfy because of directions in which `|ξ| → ∞` while `W` stays
    /// bounded. Sampling on bounded sets cannot see them.
    fn asymptotic_constraints(&self) -> Vec<([f64; 6], f64)> {
        Vec::new()
    }

    /// Exact form of the conditions above (including the pinned
    /// components); positive means `a` fails somewhere far away.
    fn asymptotic_violation(&self, _a: [f64; 6]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Counterexample { y: f64 },
    NormOfMinors,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::Counterexample { y: DEFAULT_Y }
    }
}

impl ObjectiveSpec {
    pub fn counterexample(y: f64) -> Result<Self> {
        let spec = ObjectiveSpec::Counterexample { y };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ObjectiveSpec::Counterexample { y } if !(y > 0.0 && y.is_finite()) => Err(
                Error::InvalidInput(format!("counterexample requires finite y > 0, got {y}")),
            ),
            _ => Ok(()),
        }
    }

    /// The level `y` of the counterexample, if this is one.
    pub fn y(&self) -> Option<f64> {
        match *self {
            ObjectiveSpec::Counterexample { y } => Some(y),
            ObjectiveSpec::NormOfMinors => None,
        }
    }

    /// The vector `F(ξ)` whose Euclidean norm is the objective.
    pub fn residual_vector(&self, m: Mat2) -> MinorsPoint {
        match *self {
            ObjectiveSpec::Counterexample { y } => MinorsPoint::new(bracket(m), det2(m) - y),
            ObjectiveSpec::NormOfMinors => lift(m),
        }
    }
}

pub fn eval_w(spec: &ObjectiveSpec, m: Mat2) -> f64 {
    spec.residual_vector(m).norm()
}

pub fn grad_w(spec: &ObjectiveSpec, m: Mat2) -> Result<Mat2> {
    let f = spec.residual_vector(m);
    let w = f.norm();
    if w == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    // Both built-ins have DF(ξ)ᵀ(A, s) = P(A) + s cof ξ, with P the identity
    // or the bracket; the bracket is already applied to f.hat.
    Ok((1.0 / w) * (f.hat + f.last * cof2(m)))
}

pub fn rho_of(spec: &ObjectiveSpec, m: Mat2) -> Result<f64> {
    let f = spec.residual_vector(m);
    let w = f.norm();
    if w == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(f.last / w)
}

/// `W(m+h) − W(m) − DW(m)·h − ρ(m) det h`; nonnegative up to rounding.
pub fn prop21_residual(spec: &ObjectiveSpec, m: Mat2, h: Mat2) -> Result<f64> {
    let w = eval_w(spec, m);
    let g = grad_w(spec, m)?;
    let rho = rho_of(spec, m)?;
    Ok(eval_w(spec, m + h) - w - inner_mat(g, h) - rho * det2(h))
}

impl Objective for ObjectiveSpec {
    fn value(&self, m: Mat2) -> f64 {
        eval_w(self, m)
    }

    fn gradient(&self, m: Mat2) -> Result<Mat2> {
        grad_w(self, m)
    }

    fn rho(&self, m: Mat2) -> Result<f64> {
        rho_of(self, m)
    }

    /// For the counterexample: `diag(±t, ±y/t)` and its sign variants, the
    /// family on which `det = ±y` while `W → 0` (or stays bounded).
    fn structured_points(&self) -> Vec<Mat2> {
        match *self {
            ObjectiveSpec::Counterexample { y } => diagonal_family(y, 1e4),
            ObjectiveSpec::NormOfMinors => vec![Mat2::ZERO],
        }
    }

    /// Counterexample: along `ξ = s e₁⊗e₁ + B` with `s → ∞` and
    /// `B₂₂ = (d + B₁₂B₂₁)/s`, `W` tends to `|(B₁₂, B₂₁, 0, d − y)|` while
    /// `a∘R` tends to `a₁₁ s + a₁₂B₁₂ + a₂₁B₂₁ + a₅ d + c`. Hence `a₁₁ = 0`.
    fn pinned_gradient(&self) -> Vec<(usize, f64)> {
        match self {
            ObjectiveSpec::Counterexample { .. } => vec![(0, 0.0)],
            ObjectiveSpec::NormOfMinors => Vec::new(),
        }
    }

    /// Counterexample, same limit: `a₅ y + c ≤ 0` and `|(a₁₂, a₂₁, a₅)| ≤ 1`,
    /// the latter through 26 outer facets (cube faces, edges, corners).
    fn asymptotic_constraints(&self) -> Vec<([f64; 6], f64)> {
        let ObjectiveSpec::Counterexample { y } = *self else {
            return Vec::new();
        };
        let mut rows = vec![([0.0, 0.0, 0.0, 0.0, y, 1.0], 0.0)];
        for a in [-1.0f64, 0.0, 1.0] {
            for b in [-1.0f64, 0.0, 1.0] {
                for c in [-1.0f64, 0.0, 1.0] {
                    let n = (a * a + b * b + c * c).sqrt();
                    if n > 0.0 {
                        rows.push(([0.0, a / n, b / n, 0.0, c / n, 0.0], 1.0));
                    }
                }
            }
        }
        rows
    }

    fn asymptotic_violation(&self, a: [f64; 6]) -> f64 {
        let ObjectiveSpec::Counterexample { y } = *self else {
            return 0.0;
        };
        let pinned = if a[0] == 0.0 { 0.0 } else { f64::INFINITY };
        let ball = (a[1] * a[1] + a[2] * a[2] + a[4] * a[4]).sqrt() - 1.0;
        pinned.max(a[4] * y + a[5]).max(ball).max(0.0)
    }
}

/// `diag(s₁ t, s₂ y/t)` for `t ∈ {10^{k/4}} ∩ [1, t_max]` and all four sign
/// patterns `(s₁, s₂)`.
pub fn diagonal_family(y: f64, t_max: f64) -> Vec<Mat2> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let t = 10f64.powf(k as f64 / 4.0);
        if t > t_max * (1.0 + 1e-12) {
            break;
        }
        for (s1, s2) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
            out.push(Mat2::diag(s1 * t, s2 * y / t));
        }
        k += 1;
    }
    out
}
