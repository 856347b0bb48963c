//! Touching affine minorants of the counterexample and the function
//! `φ_τ(X) = sup{a(X) : a affine, a∘R ≤ W, a∘R = W somewhere}`.
//!
//! For `W(ξ) = |([ξ], det ξ − y)|` the affine minorant touching at `ξ₀` is
//! `X ↦ ([X̂], X′ − y) · u(ξ₀)` with the unit vector
//! `u(ξ₀) = ([ξ₀], det ξ₀ − y) / W(ξ₀)`, and by Cauchy-Schwarz
//! `φ_τ(X) = |([X̂], X′ − y)|`. The supremum is attained exactly or only
//! along a sequence `ξ₀ → ∞`; [`construct_touching_sequence`] builds that
//! sequence explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{bracket, det2, inner5, lift, Mat2, MinorsPoint};
use crate::objective::{eval_w, rho_of, ObjectiveSpec};
use crate::search::{nelder_mead, random_unit_mat, stream_rng, SearchBudget};
use crate::subgradient::subgradient_at;

/// `X ↦ grad · X + offset` on R⁵.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineFunctional5 {
    pub grad: MinorsPoint,
    pub offset: f64,
}

impl AffineFunctional5 {
    pub fn new(grad: MinorsPoint, offset: f64) -> Self {
        AffineFunctional5 { grad, offset }
    }

    pub fn constant(c: f64) -> Self {
        AffineFunctional5::new(MinorsPoint::ZERO, c)
    }

    /// The affine map with gradient `grad` taking `value` at `point`.
    pub fn through(grad: MinorsPoint, point: MinorsPoint, value: f64) -> Self {
        AffineFunctional5::new(grad, value - inner5(grad, point))
    }

    pub fn eval(&self, x: MinorsPoint) -> f64 {
        inner5(self.grad, x) + self.offset
    }

    /// `a(lift(ξ))`.
    pub fn eval_lifted(&self, m: Mat2) -> f64 {
        self.eval(lift(m))
    }

    pub fn to_array(&self) -> [f64; 6] {
        let g = self.grad.to_array();
        [g[0], g[1], g[2], g[3], g[4], self.offset]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        AffineFunctional5::new(MinorsPoint::from_array([v[0], v[1], v[2], v[3], v[4]]), v[5])
    }
}

fn require_y(spec: &ObjectiveSpec) -> Result<f64> {
    spec.y()
        .ok_or_else(|| Error::InvalidInput("touching constructions need the counterexample objective".into()))
}

/// `([X̂], X′ − y)`, the vector whose norm is `φ_τ(X)`.
pub fn target_vector(x: MinorsPoint, y: f64) -> MinorsPoint {
    MinorsPoint::new(bracket(x.hat), x.last - y)
}

/// `u(m) = ([m], det m − y) / W(m)`.
pub fn unit_direction(spec: &ObjectiveSpec, m: Mat2) -> Result<MinorsPoint> {
    let y = require_y(spec)?;
    Ok(unit_direction_y(m, y))
}

fn unit_direction_y(m: Mat2, y: f64) -> MinorsPoint {
    let f = MinorsPoint::new(bracket(m), det2(m) - y);
    (1.0 / f.norm()) * f
}

/// The touching affine minorant at `base`, in inner-product form.
pub fn touching_affine(spec: &ObjectiveSpec, base: Mat2) -> Result<AffineFunctional5> {
    let y = require_y(spec)?;
    let u = unit_direction_y(base, y);
    // ([X̂], X′ − y)·u = [u.hat]·X̂ + u.last X′ − y u.last, and u.hat is already
    // bracketed.
    Ok(AffineFunctional5::new(u, -y * u.last))
}

/// The same functional built from the envelope gradient `(DW − ρ cof, ρ)` at
/// `lift(base)` with offset fixed by the value `W(base)` there.
pub fn touching_affine_from_gradient(spec: &ObjectiveSpec, base: Mat2) -> Result<AffineFunctional5> {
    require_y(spec)?;
    let rho = rho_of(spec, base)?;
    let g = subgradient_at(spec, base, rho)?;
    Ok(AffineFunctional5::through(g, lift(base), eval_w(spec, base)))
}

pub fn phi_tau_closed(x: MinorsPoint, y: f64) -> f64 {
    target_vector(x, y).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    /// `[X̂] = 0`, `X′ < y`: attained at `ξ₀ = 0`.
    IBelow,
    /// `[X̂] = 0`, `X′ > y`: approached along `k Q`, `k → ∞`.
    IAbove,
    /// `[X̂] = 0`, `X′ = y`: `φ_τ(X) = 0`, any touching affine will do.
    IEqual,
    /// `X̂₂₂ ≠ 0`: attained at `[X̂] + μ e₁⊗e₁`.
    Ii,
    /// `[X̂] ≠ 0`, `X̂₂₂ = 0`: approached along `[X̂] + μ e₁⊗e₁ + ν e₂⊗e₂`.
    Iii,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SequenceParams {
    /// Single point, no sequence.
    Fixed,
    /// `ξ_j = k_j Q` with `k_j = k0 · 2^j`, `Q` the rotation by `angle`.
    Rotation { k0: f64, angle: f64, steps: usize },
    /// `ξ = ξ₀ + μ e₁⊗e₁`.
    Mu { mu: f64 },
    /// `ξ_j = ξ₀ + (c / ν_j) e₁⊗e₁ + ν_j e₂⊗e₂`, `ν_j = 2^{-j}`, so that
    /// `μ_j ν_j = c`.
    MuNu { product: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchingConstruction {
    pub case_tag: CaseTag,
    pub base: Mat2,
    pub params: SequenceParams,
    /// `([X̂], X′ − y)` normalised; for `IEqual` this is `u(0) = (0, −1)`.
    pub limit_direction: MinorsPoint,
    pub y: f64,
}

/// Geometric schedules run over `j = 0..=SCHEDULE_STEPS`.
pub const SCHEDULE_STEPS: usize = 40;

impl TouchingConstruction {
    pub fn len(&self) -> usize {
        match self.params {
            SequenceParams::Fixed | SequenceParams::Mu { .. } => 1,
            SequenceParams::Rotation { steps, .. } | SequenceParams::MuNu { steps, .. } => steps + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_degenerate(&self) -> bool {
        self.case_tag == CaseTag::IEqual
    }

    /// The `j`-th matrix of the sequence (clamped to the last one).
    pub fn member(&self, j: usize) -> Mat2 {
        let j = j.min(self.len() - 1);
        match self.params {
            SequenceParams::Fixed => self.base,
            SequenceParams::Mu { mu } => self.base + mu * Mat2::E11,
            SequenceParams::Rotation { k0, angle, .. } => (k0 * 2f64.powi(j as i32)) * Mat2::rotation(angle),
            SequenceParams::MuNu { product, .. } => {
                let nu = 2f64.powi(-(j as i32));
                self.base + (product / nu) * Mat2::E11 + nu * Mat2::E22
            }
        }
    }

    pub fn last(&self) -> Mat2 {
        self.member(self.len() - 1)
    }

    /// Angle (radians) between `u(member(j))` and the limit direction.
    pub fn angle_at(&self, j: usize) -> f64 {
        let u = unit_direction_y(self.member(j), self.y);
        angle_between(u, self.limit_direction)
    }

    /// `([X̂], X′ − y) · u(member(j))` for every member.
    pub fn values(&self, x: MinorsPoint) -> Vec<f64> {
        let t = target_vector(x, self.y);
        (0..self.len())
            .map(|j| inner5(t, unit_direction_y(self.member(j), self.y)))
            .collect()
    }
}

/// Angle between two nonzero vectors, accurate for small angles.
pub fn angle_between(a: MinorsPoint, b: MinorsPoint) -> f64 {
    let a = (1.0 / a.norm()) * a;
    let b = (1.0 / b.norm()) * b;
    2.0 * ((a - b).norm() / 2.0).min(1.0).asin()
}

/// Builds the explicit touching sequence whose directions `u(ξ_j)` converge
/// to `([X̂], X′ − y)/|([X̂], X′ − y)|`.
pub fn construct_touching_sequence(x: MinorsPoint, y: f64) -> Result<TouchingConstruction> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(Error::InvalidInput(format!("y must be positive, got {y}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput("target point must be finite".into()));
    }
    let t = target_vector(x, y);
    let xb = bracket(x.hat);
    let limit = |fallback: MinorsPoint| if t.norm() > 0.0 { (1.0 / t.norm()) * t } else { fallback };

    if xb == Mat2::ZERO {
        let (case_tag, params, base) = if x.last < y {
            (CaseTag::IBelow, SequenceParams::Fixed, Mat2::ZERO)
        } else if x.last > y {
            let k0 = y.sqrt().max(1.0);
            (
                CaseTag::IAbove,
                SequenceParams::Rotation { k0, angle: 0.0, steps: SCHEDULE_STEPS },
                Mat2::ZERO,
            )
        } else {
            (CaseTag::IEqual, SequenceParams::Fixed, Mat2::ZERO)
        };
        return Ok(TouchingConstruction {
            case_tag,
            base,
            params,
            limit_direction: limit(unit_direction_y(Mat2::ZERO, y)),
            y,
        });
    }

    if x.hat.e22 != 0.0 {
        let mu = (x.last - det2(xb)) / x.hat.e22;
        return Ok(TouchingConstruction {
            case_tag: CaseTag::Ii,
            base: xb,
            params: SequenceParams::Mu { mu },
            limit_direction: limit(t),
            y,
        });
    }

    let product = x.last + x.hat.e12 * x.hat.e21;
    Ok(TouchingConstruction {
        case_tag: CaseTag::Iii,
        base: xb,
        params: SequenceParams::MuNu { product, steps: SCHEDULE_STEPS },
        limit_direction: limit(t),
        y,
    })
}

/// Numerical supremum of `([X̂], X′ − y) · u(ξ₀)` over `ξ₀`, seeded with the
/// explicit touching sequence and refined from random scan candidates.
/// Returns the value and the best base found.
pub fn phi_tau_sup_numeric(x: MinorsPoint, spec: &ObjectiveSpec, budget: &SearchBudget) -> Result<(f64, Mat2)> {
    let y = require_y(spec)?;
    budget.validate()?;
    let t = target_vector(x, y);
    let score = |m: Mat2| inner5(t, unit_direction_y(m, y));

    let seq = construct_touching_sequence(x, y)?;
    let mut best = (score(Mat2::ZERO), Mat2::ZERO);
    for j in 0..seq.len() {
        let m = seq.member(j);
        let v = score(m);
        if v > best.0 {
            best = (v, m);
        }
    }

    let mut rng = stream_rng(budget.seed, 3);
    let mut cands: Vec<(f64, Mat2)> = Vec::new();
    for _ in 0..budget.direction_samples {
        let dir = random_unit_mat(&mut rng);
        for &r in &budget.radius_grid {
            let m = r * dir;
            cands.push((score(m), m));
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(v, m) in cands.iter().take(budget.refine_candidates) {
        if v > best.0 {
            best = (v, m);
        }
        let step = vec![0.1 * m.norm().max(1e-3); 4];
        let res = nelder_mead(
            |z: &[f64]| -score(Mat2::from_array([z[0], z[1], z[2], z[3]])),
            &m.to_array(),
            &step,
            budget.refine_iters,
            1e-16,
        );
        let cand = Mat2::from_array([res.x[0], res.x[1], res.x[2], res.x[3]]);
        let v = score(cand);
        if v > best.0 {
            best = (v, cand);
        }
    }
    Ok(best)
}
