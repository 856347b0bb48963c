//! Two-sided evaluation of the largest convex function `φ_W` on minors space
//! lying below `W` on the lifted set `{(ξ, det ξ)}`.
//!
//! * Upper bound: the primal formula
//!   `φ_W(X) = inf { Σ λⱼ W(ξⱼ) : Σ λⱼ (ξⱼ, det ξⱼ) = X, λ ∈ Δ₆ }`,
//!   searched by multistart local descent over combinations with
//!   `max |ξⱼ|∞ ≤ cap`.
//! * Lower bound: the dual formula `φ_W(X) = sup { a(X) : a affine, a∘R ≤ W }`,
//!   approached by a cutting-plane loop whose LP keeps `|∇a|∞ ≤ grad_box`.
//!
//! Every lower certificate is re-audited by dense sampling before it is
//! reported; every upper certificate carries its feasibility residual.

use nalgebra::{Matrix5, Vector5};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lift, Mat2, MinorsPoint};
use crate::lp::{lp_solve, LinearProgram, LpStatus};
use crate::objective::{diagonal_family, eval_w, grad_w, Objective, ObjectiveSpec};
use crate::search::{halton_mats, nelder_mead, random_unit_mat, stream_rng, SearchBudget};
use crate::subgradient::subgradient_at;
use crate::touching::{construct_touching_sequence, touching_affine, AffineFunctional5};

pub const MAX_SUPPORT: usize = 6;
pub const DEFAULT_CAP: f64 = 1e3;
pub const DEFAULT_GRAD_BOX: f64 = 1e3;
pub const DEFAULT_RESTARTS: usize = 32;
pub const DEFAULT_TOL_CUT: f64 = 1e-6;
pub const DEFAULT_MAX_CUT_ITERS: usize = 60;
pub const DEFAULT_AUDIT_SAMPLES: usize = 100_000;

/// Cuts closer than this are treated as duplicates.
pub const CUT_DEDUP_DIST: f64 = 1e-12;
/// Largest feasibility residual accepted for an upper certificate.
pub const UPPER_RESIDUAL_TOL: f64 = 1e-7;
/// Internal audit threshold; stricter than what callers check against.
pub const AUDIT_TOL: f64 = 1e-9;
/// The separation oracle and the audit stay inside `|ξ|∞ ≤` this.
pub const SEARCH_RADIUS: f64 = 1e4;

// Gradient box of the mixing LP used by the primal search. Large enough that
// paying for infeasibility is never cheaper than moving weight.
const MIXING_BOX: f64 = 1e7;
const PATTERN_ITERS: usize = 60;
const NEWTON_ITERS: usize = 30;

/// The bound imposed by `cap`: largest absolute entry.
pub fn cap_norm(m: Mat2) -> f64 {
    m.to_array().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Weighted matrices `(λⱼ, ξⱼ)`, a point of the primal feasible set when
/// `Σ λⱼ lift(ξⱼ) = X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexCombination {
    pub entries: Vec<(f64, Mat2)>,
}

impl ConvexCombination {
    pub fn singleton(m: Mat2) -> Self {
        ConvexCombination { entries: vec![(1.0, m)] }
    }

    pub fn weight_sum(&self) -> f64 {
        self.entries.iter().map(|e| e.0).sum()
    }

    pub fn lifted_mean(&self) -> MinorsPoint {
        self.entries
            .iter()
            .fold(MinorsPoint::ZERO, |acc, &(l, m)| acc + l * lift(m))
    }

    /// `|Σ λⱼ lift(ξⱼ) − X| + |Σ λⱼ − 1|`.
    pub fn residual(&self, x: MinorsPoint) -> f64 {
        (self.lifted_mean() - x).norm() + (self.weight_sum() - 1.0).abs()
    }

    pub fn objective<O: Objective + ?Sized>(&self, obj: &O) -> f64 {
        self.entries.iter().map(|&(l, m)| l * obj.value(m)).sum()
    }

    pub fn max_cap_norm(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |a, e| a.max(cap_norm(e.1)))
    }

    /// Weights nonnegative, summing to one within `1e-10`, at most six points.
    pub fn is_well_formed(&self) -> bool {
        !self.entries.is_empty()
            && self.entries.len() <= MAX_SUPPORT
            && self.entries.iter().all(|e| e.0 >= 0.0 && e.0.is_finite() && e.1.is_finite())
            && (self.weight_sum() - 1.0).abs() <= 1e-10
    }

    fn normalize(&mut self) {
        self.entries.retain(|e| e.0 > 0.0);
        let s = self.weight_sum();
        if s > 0.0 {
            for e in &mut self.entries {
                e.0 /= s;
            }
        }
    }
}

/// Finite relaxation of the constraint `a∘R ≤ W`: one row per stored point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    pub cuts: Vec<Mat2>,
    pub violation_tol: f64,
}

impl CutSet {
    pub fn new(violation_tol: f64) -> Self {
        CutSet { cuts: Vec::new(), violation_tol }
    }

    /// Adds `m` unless a stored cut lies within [`CUT_DEDUP_DIST`].
    pub fn insert(&mut self, m: Mat2) -> bool {
        if !m.is_finite() || self.cuts.iter().any(|c| (*c - m).norm() <= CUT_DEDUP_DIST) {
            return false;
        }
        self.cuts.push(m);
        true
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    pub cap: f64,
    pub grad_box: f64,
    pub restarts: usize,
    pub tol_cut: f64,
    pub max_cut_iters: usize,
    pub audit_samples: usize,
    /// Budget for each separation-oracle call.
    pub oracle: SearchBudget,
    pub seed: u64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            cap: DEFAULT_CAP,
            grad_box: DEFAULT_GRAD_BOX,
            restarts: DEFAULT_RESTARTS,
            tol_cut: DEFAULT_TOL_CUT,
            max_cut_iters: DEFAULT_MAX_CUT_ITERS,
            audit_samples: DEFAULT_AUDIT_SAMPLES,
            oracle: SearchBudget::light(),
            seed: 0,
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be finite and positive, got {v}")))
            }
        };
        positive(self.cap, "cap")?;
        positive(self.grad_box, "grad_box")?;
        positive(self.tol_cut, "tol_cut")?;
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be positive".into()));
        }
        self.oracle.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    pub certificate: ConvexCombination,
    pub residual: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerSource {
    CuttingPlane,
    Touching,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub certificate: AffineFunctional5,
    pub cuts: CutSet,
    pub source: LowerSource,
    /// Smallest `W(ξ) − a(lift ξ)` seen by the final audit.
    pub audit_min: f64,
    pub iterations: usize,
    /// The cut loop stopped on `max_cut_iters` rather than on `tol_cut`.
    pub cap_reached: bool,
    /// Dual weights of the last LP, a warm start for the primal search.
    pub dual_combination: Option<ConvexCombination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBracket {
    pub lower: f64,
    pub lower_certificate: AffineFunctional5,
    pub cuts: CutSet,
    pub lower_source: LowerSource,
    pub lower_audit_min: f64,
    pub cut_iterations: usize,
    pub cut_cap_reached: bool,
    pub upper: f64,
    pub upper_certificate: ConvexCombination,
    pub upper_residual: f64,
    pub box_bound: f64,
    pub param_cap: f64,
}

impl EnvelopeBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }
}

// ---------------------------------------------------------------------------
// Upper bound

/// Newton iterations moving the points (weights fixed) onto
/// `Σ λⱼ lift(ξⱼ) = X`, each step the minimum-norm correction.
/// Returns the final residual.
fn project_feasible(c: &mut ConvexCombination, x: MinorsPoint) -> f64 {
    let target = Vector5::from(x.to_array());
    let scale = 1.0 + x.norm();
    let mut res = f64::INFINITY;
    for _ in 0..NEWTON_ITERS {
        let r = Vector5::from(c.lifted_mean().to_array()) - target;
        res = r.norm();
        if !res.is_finite() || res <= 1e-15 * scale {
            break;
        }
        let mut jjt = Matrix5::<f64>::zeros();
        for &(l, m) in &c.entries {
            let cof = m.cof().to_array();
            let l2 = l * l;
            for k in 0..4 {
                jjt[(k, k)] += l2;
                jjt[(k, 4)] += l2 * cof[k];
                jjt[(4, k)] += l2 * cof[k];
            }
            jjt[(4, 4)] += l2 * cof.iter().map(|v| v * v).sum::<f64>();
        }
        let ridge = 1e-14 * jjt.trace().max(1e-300);
        for k in 0..5 {
            jjt[(k, k)] += ridge;
        }
        let Some(nu) = jjt.cholesky().map(|ch| ch.solve(&r)) else {
            break;
        };
        for e in &mut c.entries {
            let cof = e.1.cof();
            let hat = Mat2::new(nu[0], nu[1], nu[2], nu[3]);
            e.1 = e.1 - e.0 * (hat + nu[4] * cof);
        }
    }
    let r = (c.lifted_mean() - x).norm();
    if r.is_finite() {
        r
    } else {
        res
    }
}

/// `½ lift(X̂ + A) + ½ lift(X̂ − A) = X` exactly when `det A = X′ − det X̂`.
fn pair(x: MinorsPoint, a: Mat2) -> ConvexCombination {
    ConvexCombination { entries: vec![(0.5, x.hat + a), (0.5, x.hat - a)] }
}

fn upper_seeds(spec: &ObjectiveSpec, x: MinorsPoint, cap: f64) -> Vec<ConvexCombination> {
    let mut out = vec![ConvexCombination::singleton(x.hat)];
    let delta = x.last - x.hat.det();
    let mut shapes: Vec<Mat2> = Vec::new();
    let mut scales: Vec<f64> = (-12..=20).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    // largest diagonal pair still inside the cap
    let room = cap - cap_norm(x.hat);
    if room > 0.0 {
        scales.push(room);
    }
    for &a in &scales {
        for s in [1.0, -1.0] {
            let a = s * a;
            shapes.push(Mat2::diag(a, delta / a));
            shapes.push(Mat2::new(0.0, a, -delta / a, 0.0));
            for angle in [std::f64::consts::FRAC_PI_8, std::f64::consts::FRAC_PI_4] {
                let q = Mat2::rotation(angle);
                let d = Mat2::diag(a, delta / a);
                shapes.push(mat_mul(mat_mul(q, d), transpose(q)));
            }
        }
    }
    for a in shapes {
        out.push(pair(x, a));
    }
    // The witness family of the counterexample, centred on X̂.
    if let Some(y) = spec.y() {
        if (x.last - y).abs() <= 1e-12 * (1.0 + y) && x.hat.norm() == 0.0 {
            for m in diagonal_family(y, cap) {
                out.push(ConvexCombination { entries: vec![(0.5, m), (0.5, -1.0 * m)] });
            }
        }
    }
    out.retain(|c| c.max_cap_norm() <= cap);
    out
}

fn mat_mul(a: Mat2, b: Mat2) -> Mat2 {
    Mat2::new(
        a.e11 * b.e11 + a.e12 * b.e21,
        a.e11 * b.e12 + a.e12 * b.e22,
        a.e21 * b.e11 + a.e22 * b.e21,
        a.e21 * b.e12 + a.e22 * b.e22,
    )
}

fn transpose(a: Mat2) -> Mat2 {
    Mat2::new(a.e11, a.e21, a.e12, a.e22)
}

/// Points offered to one global mixing LP: quasi-random matrices, the
/// objective's structured points and the witness family up to the cap, the
/// touching bases for `X`, and the points of carried combinations.
fn mixing_pool(spec: &ObjectiveSpec, x: MinorsPoint, cap: f64, carried: &[ConvexCombination]) -> Vec<Mat2> {
    let mut pool = halton_mats(200, -5.0, 5.0);
    pool.push(x.hat);
    pool.extend(spec.structured_points());
    pool.extend(diagonal_family(spec.y().unwrap_or(1.0), cap));
    if let Some(y) = spec.y() {
        if let Ok(tc) = construct_touching_sequence(x, y) {
            pool.extend((0..tc.len()).map(|j| tc.member(j)));
        }
    }
    for c in carried {
        pool.extend(c.entries.iter().map(|e| e.1));
    }
    pool.retain(|m| m.is_finite() && cap_norm(*m) <= cap);
    pool
}

/// Best convex combination of the candidate points for `X`, by LP.
fn mix(spec: &ObjectiveSpec, x: MinorsPoint, points: &[Mat2]) -> Option<ConvexCombination> {
    let mut obj = x.to_array().to_vec();
    obj.push(1.0);
    let mut lower = vec![-MIXING_BOX; 5];
    let mut upper = vec![MIXING_BOX; 5];
    lower.push(f64::NEG_INFINITY);
    upper.push(f64::INFINITY);
    let mut lp = LinearProgram::new(obj, lower, upper);
    for &p in points {
        let mut row = lift(p).to_array().to_vec();
        row.push(1.0);
        lp.push(row, eval_w(spec, p));
    }
    let sol = lp_solve(&lp).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let mut c = ConvexCombination {
        entries: points
            .iter()
            .zip(&sol.multipliers)
            .filter(|(_, w)| **w > 1e-15)
            .map(|(p, w)| (*w, *p))
            .collect(),
    };
    c.normalize();
    if c.entries.is_empty() || c.entries.len() > MAX_SUPPORT {
        return None;
    }
    Some(c)
}

/// Projects and checks a candidate; `None` when it leaves the cap or fails
/// to reach the residual tolerance.
fn admissible(mut c: ConvexCombination, x: MinorsPoint, cap: f64) -> Option<(ConvexCombination, f64)> {
    c.normalize();
    if c.entries.is_empty() || c.entries.len() > MAX_SUPPORT {
        return None;
    }
    let r = project_feasible(&mut c, x);
    let r = r.max(c.residual(x));
    if r <= UPPER_RESIDUAL_TOL && c.max_cap_norm() <= cap && c.entries.iter().all(|e| e.1.is_finite()) {
        Some((c, r))
    } else {
        None
    }
}

/// Pattern search in which each step re-mixes the current support and its
/// perturbations by LP, so the objective never increases.
fn refine_upper(
    spec: &ObjectiveSpec,
    x: MinorsPoint,
    start: (ConvexCombination, f64),
    cap: f64,
    seed: u64,
    stream: u64,
) -> (ConvexCombination, f64) {
    let mut rng = stream_rng(seed, stream);
    let (mut cur, mut res) = start;
    let mut val = cur.objective(spec);
    let mut sigma: f64 = 0.25;
    for _ in 0..PATTERN_ITERS {
        if sigma < 1e-9 {
            break;
        }
        let mut cands: Vec<Mat2> = cur.entries.iter().map(|e| e.1).collect();
        for &(_, p) in &cur.entries {
            let h = sigma * p.norm().max(1e-3);
            for k in 0..4 {
                let mut e = [0.0; 4];
                e[k] = h;
                let e = Mat2::from_array(e);
                cands.push(p + e);
                cands.push(p - e);
            }
            cands.push((1.0 + sigma) * p);
            cands.push((1.0 - sigma) * p);
            if let Ok(g) = grad_w(spec, p) {
                let n = g.norm();
                if n > 0.0 {
                    cands.push(p - (h / n) * g);
                }
            }
            for _ in 0..2 {
                cands.push(p + h * random_unit_mat(&mut rng));
            }
        }
        cands.retain(|m| m.is_finite() && cap_norm(*m) <= cap);
        let step = mix(spec, x, &cands).and_then(|c| admissible(c, x, cap));
        match step {
            Some((c, r)) => {
                let v = c.objective(spec);
                if v < val - 1e-15 * (1.0 + val.abs()) {
                    cur = c;
                    val = v;
                    res = r;
                    sigma = (sigma * 1.5).min(0.5);
                } else {
                    sigma *= 0.5;
                }
            }
            None => sigma *= 0.5,
        }
    }
    (cur, res)
}

fn upper_at_cap(
    spec: &ObjectiveSpec,
    x: MinorsPoint,
    cap: f64,
    restarts: usize,
    seed: u64,
    carried: &[ConvexCombination],
) -> Option<(ConvexCombination, f64)> {
    let mut pool: Vec<(ConvexCombination, f64, f64)> = Vec::new();
    let consider = |c: ConvexCombination, pool: &mut Vec<(ConvexCombination, f64, f64)>| {
        if let Some((c, r)) = admissible(c, x, cap) {
            let v = c.objective(spec);
            if v.is_finite() {
                pool.push((c, r, v));
            }
        }
    };
    for c in upper_seeds(spec, x, cap).into_iter().chain(carried.iter().cloned()) {
        consider(c, &mut pool);
    }
    if let Some(c) = mix(spec, x, &mixing_pool(spec, x, cap, carried)) {
        consider(c, &mut pool);
    }
    // perturbed copies of the best few
    pool.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut rng = stream_rng(seed, 21);
    let parents: Vec<ConvexCombination> = pool.iter().take(4).map(|p| p.0.clone()).collect();
    for parent in parents {
        for _ in 0..2 {
            let mut c = parent.clone();
            for e in &mut c.entries {
                e.1 = e.1 + (0.1 * (1.0 + e.1.norm())) * random_unit_mat(&mut rng);
            }
            consider(c, &mut pool);
        }
    }
    pool.sort_by(|a, b| a.2.total_cmp(&b.2));
    pool.dedup_by(|a, b| a.0 == b.0);
    pool.truncate(restarts);

    pool.into_par_iter()
        .enumerate()
        .map(|(i, (c, r, _))| refine_upper(spec, x, (c, r), cap, seed, 100 + i as u64))
        .map(|(c, r)| {
            let v = c.objective(spec);
            (c, r, v)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(c, r, _)| (c, r))
}

/// The caps visited by the continuation: powers of ten below `cap`, then
/// `cap` itself.
fn cap_ladder(cap: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (1..)
        .map(|k| 10f64.powi(k))
        .take_while(|c| *c < cap * (1.0 - 1e-12))
        .collect();
    out.push(cap);
    out
}

/// Upper bound on `φ_W(X)` from the best combination found with
/// `max |ξⱼ|∞ ≤ cap`. The search continues from cap to cap along
/// [`cap_ladder`], so results are nonincreasing along powers of ten.
pub fn phi_w_upper(
    spec: &ObjectiveSpec,
    x: MinorsPoint,
    cap: f64,
    restarts: usize,
    seed: u64,
    warm: &[ConvexCombination],
) -> Result<UpperBound> {
    spec.validate()?;
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidInput(format!("cap must be finite and positive, got {cap}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput("non-finite evaluation point".into()));
    }
    let restarts = restarts.max(1);
    let mut best: Option<(ConvexCombination, f64)> = None;
    for rung in cap_ladder(cap) {
        let mut carried: Vec<ConvexCombination> = warm.to_vec();
        if let Some((c, _)) = &best {
            carried.push(c.clone());
        }
        if let Some(found) = upper_at_cap(spec, x, rung, restarts, seed, &carried) {
            let better = match &best {
                Some((b, _)) => found.0.objective(spec) <= b.objective(spec),
                None => true,
            };
            if better {
                best = Some(found);
            }
        }
    }
    let (certificate, residual) = best.ok_or(Error::NoFeasiblePoint { residual: f64::INFINITY })?;
    Ok(UpperBound { value: certificate.objective(spec), certificate, residual, cap })
}

// ---------------------------------------------------------------------------
// Lower bound

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub point: Mat2,
    pub violation: f64,
    /// Other distinct local minimisers with negative value.
    pub others: Vec<(Mat2, f64)>,
}

fn gap_at(spec: &ObjectiveSpec, a: &AffineFunctional5, m: Mat2) -> f64 {
    if !m.is_finite() || cap_norm(m) > SEARCH_RADIUS {
        return f64::INFINITY;
    }
    eval_w(spec, m) - a.eval_lifted(m)
}

fn sinh_mat(z: &[f64]) -> Mat2 {
    Mat2::new(z[0].sinh(), z[1].sinh(), z[2].sinh(), z[3].sinh())
}

fn refine_gap(spec: &ObjectiveSpec, a: &AffineFunctional5, start: Mat2, iters: usize) -> (Mat2, f64) {
    let z0: Vec<f64> = start.to_array().iter().map(|v| v.asinh()).collect();
    let r = nelder_mead(|z| gap_at(spec, a, sinh_mat(z)), &z0, &[0.25; 4], iters, 1e-15);
    let m = sinh_mat(&r.x);
    let v = gap_at(spec, a, m);
    let s = gap_at(spec, a, start);
    if v <= s {
        (m, v)
    } else {
        (start, s)
    }
}

/// Minimises `W(ξ) − a(lift ξ)` over `|ξ|∞ ≤` [`SEARCH_RADIUS`] by a
/// direction × radius scan plus structured points, refined by Nelder-Mead.
/// A negative `violation` is a witness that `a` is not below `W`.
pub fn separation_oracle(spec: &ObjectiveSpec, a: &AffineFunctional5, budget: &SearchBudget) -> Separation {
    let mut rng = stream_rng(budget.seed, 11);
    let mut scored: Vec<(f64, Mat2)> = spec
        .structured_points()
        .into_iter()
        .chain(std::iter::once(Mat2::ZERO))
        .map(|m| (gap_at(spec, a, m), m))
        .collect();
    for _ in 0..budget.direction_samples {
        let d = random_unit_mat(&mut rng);
        for &r in &budget.radius_grid {
            let m = r * d;
            scored.push((gap_at(spec, a, m), m));
        }
    }
    scored.retain(|s| s.0.is_finite());
    scored.sort_by(|p, q| p.0.total_cmp(&q.0));

    let mut refined: Vec<(Mat2, f64)> = Vec::new();
    for &(_, m) in scored.iter().take(budget.refine_candidates.max(1)) {
        let (m, v) = refine_gap(spec, a, m, budget.refine_iters);
        if v.is_finite() {
            refined.push((m, v));
        }
    }
    refined.sort_by(|p, q| p.1.total_cmp(&q.1));
    let (point, violation) = refined.first().copied().unwrap_or((Mat2::ZERO, gap_at(spec, a, Mat2::ZERO)));
    let others = refined
        .iter()
        .skip(1)
        .filter(|(m, v)| *v < 0.0 && (*m - point).norm() > 1e-6 * (1.0 + point.norm()))
        .copied()
        .collect();
    Separation { point, violation, others }
}

/// 200 quasi-random matrices in `[−5, 5]⁴`, `diag(t, y/t)` for
/// `t ∈ {±1, ±10, ±100, ±1000}`, and `X̂`.
pub fn initial_cuts(spec: &ObjectiveSpec, x: MinorsPoint, violation_tol: f64) -> CutSet {
    let mut cuts = CutSet::new(violation_tol);
    for m in halton_mats(200, -5.0, 5.0) {
        cuts.insert(m);
    }
    let y = spec.y().unwrap_or(1.0);
    for t in [1.0, 10.0, 100.0, 1000.0] {
        for s in [1.0, -1.0] {
            cuts.insert(Mat2::diag(s * t, y / (s * t)));
        }
    }
    cuts.insert(x.hat);
    cuts.insert(Mat2::ZERO);
    cuts
}

/// Affine minorants known to be valid without search: the touching affines
/// of the counterexample, the canonical supporting affine at `X̂`, and `0`
/// (both objectives are norms).
pub fn lower_seeds(spec: &ObjectiveSpec, x: MinorsPoint) -> Vec<(AffineFunctional5, LowerSource)> {
    let mut out = vec![(AffineFunctional5::constant(0.0), LowerSource::Constant)];
    if let Some(y) = spec.y() {
        if let Ok(tc) = construct_touching_sequence(x, y) {
            if let Ok(a) = touching_affine(spec, tc.last()) {
                out.push((a, LowerSource::Touching));
            }
        }
        if let Ok(a) = touching_affine(spec, x.hat) {
            out.push((a, LowerSource::Touching));
        }
    } else if let (Ok(rho), m) = (spec.rho(x.hat), x.hat) {
        if let Ok(g) = subgradient_at(spec, m, rho) {
            out.push((AffineFunctional5::through(g, lift(m), eval_w(spec, m)), LowerSource::Touching));
        }
    }
    out
}

/// Fresh audit points: log-uniform radii in `[1e-3, 1e3]` along uniform
/// directions, then the structured family `diag(±t, ±y/t)`, `t ≤ 1e4`.
pub fn audit_points(spec: &ObjectiveSpec, n: usize, seed: u64, stream: u64) -> Vec<Mat2> {
    let mut rng = stream_rng(seed, stream);
    let mut out: Vec<Mat2> = (0..n)
        .map(|_| {
            let e: f64 = rng.random_range(-3.0..3.0);
            10f64.powf(e) * random_unit_mat(&mut rng)
        })
        .collect();
    out.extend(diagonal_family(spec.y().unwrap_or(1.0), 1e4));
    out.push(Mat2::ZERO);
    out
}

/// Smallest `W(ξ) − a(lift ξ)` over the audit points, polished by a short
/// local search from the three worst. An affine failing
/// [`Objective::asymptotic_violation`] is violated far outside any sample
/// set and scores `−∞`.
pub fn audit_affine(spec: &ObjectiveSpec, a: &AffineFunctional5, points: &[Mat2]) -> (f64, Mat2) {
    if spec.asymptotic_violation(a.to_array()) > 1e-12 {
        return (f64::NEG_INFINITY, Mat2::ZERO);
    }
    let mut scored: Vec<(f64, Mat2)> = points.iter().map(|&m| (gap_at(spec, a, m), m)).collect();
    scored.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut best = scored.first().map(|s| (s.0, s.1)).unwrap_or((f64::INFINITY, Mat2::ZERO));
    for &(_, m) in scored.iter().take(3) {
        let (m, v) = refine_gap(spec, a, m, 400);
        if v < best.0 {
            best = (v, m);
        }
    }
    best
}

fn lp_affine(spec: &ObjectiveSpec, x: MinorsPoint, cuts: &CutSet, grad_box: f64) -> Option<(AffineFunctional5, ConvexCombination)> {
    let mut obj = x.to_array().to_vec();
    obj.push(1.0);
    let mut lower = vec![-grad_box; 5];
    let mut upper = vec![grad_box; 5];
    lower.push(f64::NEG_INFINITY);
    upper.push(f64::INFINITY);
    for (j, v) in spec.pinned_gradient() {
        lower[j] = v;
        upper[j] = v;
    }
    let mut lp = LinearProgram::new(obj, lower, upper);
    for (row, rhs) in spec.asymptotic_constraints() {
        lp.push(row.to_vec(), rhs);
    }
    let skip = lp.constraints.len();
    for &m in &cuts.cuts {
        let mut row = lift(m).to_array().to_vec();
        row.push(1.0);
        lp.push(row, eval_w(spec, m));
    }
    let sol = lp_solve(&lp).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let mut p = sol.point.clone();
    for (j, v) in spec.pinned_gradient() {
        p[j] = v;
    }
    let a = AffineFunctional5::new(MinorsPoint::from_array([p[0], p[1], p[2], p[3], p[4]]), p[5]);
    let mut dual = ConvexCombination {
        entries: cuts
            .cuts
            .iter()
            .zip(&sol.multipliers[skip..])
            .filter(|(_, w)| **w > 1e-15)
            .map(|(m, w)| (*w, *m))
            .collect(),
    };
    dual.normalize();
    Some((a, dual))
}

/// Lower bound on `φ_W(X)` by cutting planes, certified by audit.
///
/// The reported certificate is the best of: the last LP affine shifted down
/// by the oracle's violation, and the [`lower_seeds`]. Each candidate must
/// pass [`audit_affine`] on fresh points (possibly after a further downward
/// shift confirmed on a second independent set).
pub fn phi_w_lower(spec: &ObjectiveSpec, x: MinorsPoint, config: &EnvelopeConfig) -> Result<LowerBound> {
    spec.validate()?;
    config.validate()?;
    if !x.is_finite() {
        return Err(Error::InvalidInput("non-finite evaluation point".into()));
    }
    let mut cuts = initial_cuts(spec, x, config.tol_cut);
    let seeds = lower_seeds(spec, x);
    if let Some(y) = spec.y() {
        if let Ok(tc) = construct_touching_sequence(x, y) {
            cuts.insert(tc.last());
        }
    }

    let mut best_lp: Option<AffineFunctional5> = None;
    let mut dual_combination = None;
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..config.max_cut_iters {
        iterations = iter + 1;
        let Some((a, dual)) = lp_affine(spec, x, &cuts, config.grad_box) else {
            break;
        };
        dual_combination = Some(dual);
        let mut budget = config.oracle.clone();
        budget.seed = config.seed.wrapping_add(iter as u64);
        let sep = separation_oracle(spec, &a, &budget);
        let shifted = AffineFunctional5::new(a.grad, a.offset - (-sep.violation).max(0.0));
        if best_lp.is_none_or(|b| shifted.eval(x) > b.eval(x)) {
            best_lp = Some(shifted);
        }
        // The LP value bounds every boxed minorant from above, so a small
        // gap to the best shifted candidate or seed also means convergence.
        let floor = seeds.iter().map(|(s, _)| s.eval(x)).fold(shifted.eval(x), f64::max);
        if sep.violation >= -config.tol_cut || a.eval(x) - floor <= config.tol_cut {
            converged = true;
            break;
        }
        let mut added = cuts.insert(sep.point);
        for (m, _) in sep.others.iter().take(3) {
            added |= cuts.insert(*m);
        }
        if !added {
            break;
        }
    }

    let mut candidates: Vec<(AffineFunctional5, LowerSource)> = Vec::new();
    if let Some(a) = best_lp {
        candidates.push((a, LowerSource::CuttingPlane));
    }
    candidates.extend(seeds);

    let first = audit_points(spec, config.audit_samples, config.seed, 31);
    let second = audit_points(spec, config.audit_samples, config.seed, 32);
    let audited: Vec<Option<(AffineFunctional5, LowerSource, f64)>> = candidates
        .par_iter()
        .map(|&(a, src)| {
            let (v, _) = audit_affine(spec, &a, &first);
            if v >= -AUDIT_TOL {
                return Some((a, src, v));
            }
            if !v.is_finite() {
                return None;
            }
            let down = AffineFunctional5::new(a.grad, a.offset - (-v + AUDIT_TOL));
            let (v2, _) = audit_affine(spec, &down, &second);
            (v2 >= -AUDIT_TOL).then_some((down, src, v2))
        })
        .collect();
    let (certificate, source, audit_min) = audited
        .into_iter()
        .flatten()
        .max_by(|p, q| p.0.eval(x).total_cmp(&q.0.eval(x)))
        .ok_or_else(|| Error::Numerical("no lower certificate survived the audit".into()))?;

    Ok(LowerBound {
        value: certificate.eval(x),
        certificate,
        cuts,
        source,
        audit_min,
        iterations,
        cap_reached: !converged && iterations >= config.max_cut_iters,
        dual_combination,
    })
}

/// Both bounds with their certificates. The dual weights of the cut loop
/// warm-start the primal search.
pub fn envelope_bracket(spec: &ObjectiveSpec, x: MinorsPoint, config: &EnvelopeConfig) -> Result<EnvelopeBracket> {
    let lower = phi_w_lower(spec, x, config)?;
    let warm: Vec<ConvexCombination> = lower.dual_combination.iter().cloned().collect();
    let upper = phi_w_upper(spec, x, config.cap, config.restarts, config.seed, &warm)?;
    Ok(EnvelopeBracket {
        lower: lower.value,
        lower_certificate: lower.certificate,
        cuts: lower.cuts,
        lower_source: lower.source,
        lower_audit_min: lower.audit_min,
        cut_iterations: lower.iterations,
        cut_cap_reached: lower.cap_reached,
        upper: upper.value,
        upper_certificate: upper.certificate,
        upper_residual: upper.residual,
        box_bound: config.grad_box,
        param_cap: config.cap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::touching::phi_tau_closed;

    const CE: ObjectiveSpec = ObjectiveSpec::Counterexample { y: 1.0 };

    fn quick() -> EnvelopeConfig {
        EnvelopeConfig { restarts: 8, max_cut_iters: 20, audit_samples: 20_000, ..EnvelopeConfig::default() }
    }

    #[test]
    fn witness_pair_is_exactly_feasible() {
        let x = MinorsPoint::new(Mat2::ZERO, 1.0);
        let c = ConvexCombination { entries: vec![(0.5, Mat2::diag(10.0, 0.1)), (0.5, Mat2::diag(-10.0, -0.1))] };
        assert!(c.residual(x) < 1e-15);
        assert!((c.objective(&CE) - 0.1).abs() < 1e-15);
        assert!(c.is_well_formed());
    }

    #[test]
    fn upper_reaches_witness_values() {
        let x = MinorsPoint::new(Mat2::ZERO, 1.0);
        for cap in [10.0, 1e3] {
            let u = phi_w_upper(&CE, x, cap, 8, 0, &[]).unwrap();
            assert!(u.value <= 1.0 / cap + 1e-12, "cap {cap}: {}", u.value);
            assert!(u.residual <= UPPER_RESIDUAL_TOL);
            assert!(u.certificate.max_cap_norm() <= cap);
            assert!((u.certificate.objective(&CE) - u.value).abs() <= 1e-10);
            assert!(u.certificate.is_well_formed());
        }
    }

    #[test]
    fn upper_singleton_on_lifted_points() {
        for m in [Mat2::new(0.3, -1.2, 0.7, 2.0), Mat2::new(-2.0, 0.5, 0.1, 0.0), Mat2::IDENTITY] {
            let u = phi_w_upper(&CE, lift(m), 100.0, 4, 1, &[]).unwrap();
            assert!(u.value <= eval_w(&CE, m) + 1e-12);
            assert!(u.residual <= UPPER_RESIDUAL_TOL);
        }
    }

    #[test]
    fn upper_monotone_along_cap_ladder() {
        let x = MinorsPoint::new(Mat2::new(5.0, 0.0, 0.0, 0.05), 1.0);
        let vals: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&c| phi_w_upper(&CE, x, c, 4, 3, &[]).unwrap().value)
            .collect();
        assert!(vals[1] <= vals[0] + 1e-9 && vals[2] <= vals[1] + 1e-9, "{vals:?}");
    }

    #[test]
    fn upper_rejects_bad_cap() {
        let x = MinorsPoint::new(Mat2::ZERO, 1.0);
        assert!(phi_w_upper(&CE, x, 0.0, 4, 0, &[]).is_err());
        assert!(phi_w_upper(&CE, x, f64::NAN, 4, 0, &[]).is_err());
    }

    #[test]
    fn projection_restores_feasibility() {
        let x = MinorsPoint::new(Mat2::new(1.0, 0.5, -0.5, 2.0), 3.0);
        let mut c = ConvexCombination {
            entries: vec![(0.3, Mat2::new(1.0, 0.0, 0.0, 1.0)), (0.7, Mat2::new(2.0, 1.0, 0.0, 3.0))],
        };
        let r = project_feasible(&mut c, x);
        assert!(r < 1e-12, "{r}");
        assert!(c.residual(x) < 1e-12);
    }

    #[test]
    fn separation_examples() {
        let budget = SearchBudget::light();
        let s = separation_oracle(&CE, &AffineFunctional5::constant(-1.0), &budget);
        assert!(s.violation > 0.0);

        let m = Mat2::new(0.4, -0.3, 1.1, 0.9);
        let a = touching_affine(&CE, m).unwrap();
        let s = separation_oracle(&CE, &a, &budget);
        assert!(s.violation.abs() < 1e-9, "{}", s.violation);

        let a = AffineFunctional5::new(MinorsPoint::new(Mat2::ZERO, 2.0), 0.0);
        let s = separation_oracle(&CE, &a, &budget);
        assert!(s.violation < -1.0);
        assert!((gap_at(&CE, &a, s.point) - s.violation).abs() < 1e-12);
    }

    #[test]
    fn cut_set_rejects_duplicates() {
        let mut cuts = CutSet::new(1e-6);
        assert!(cuts.insert(Mat2::IDENTITY));
        assert!(!cuts.insert(Mat2::IDENTITY + 1e-13 * Mat2::E11));
        assert!(cuts.insert(Mat2::IDENTITY + 1e-9 * Mat2::E11));
        assert!(!cuts.insert(Mat2::new(f64::NAN, 0.0, 0.0, 0.0)));
        assert_eq!(cuts.len(), 2);
    }

    #[test]
    fn lower_certified_by_touching_on_lifted_points() {
        let m = Mat2::new(0.3, -1.2, 0.7, 2.0);
        let lo = phi_w_lower(&CE, lift(m), &quick()).unwrap();
        assert!(lo.value >= eval_w(&CE, m) - 1e-9);
        assert!(lo.value <= eval_w(&CE, m) + 1e-9);
        assert!(lo.audit_min >= -AUDIT_TOL);
    }

    #[test]
    fn lower_norm_of_minors_at_origin() {
        let nm = ObjectiveSpec::NormOfMinors;
        let lo = phi_w_lower(&nm, MinorsPoint::ZERO, &quick()).unwrap();
        assert!(lo.value.abs() < 1e-9, "{}", lo.value);
    }

    #[test]
    fn lower_dominates_touching_seed() {
        let x = MinorsPoint::new(Mat2::new(-3.0, 0.03, -0.04, 0.05), 1.0);
        let lo = phi_w_lower(&CE, x, &quick()).unwrap();
        let best_seed = lower_seeds(&CE, x)
            .iter()
            .map(|(a, _)| a.eval(x))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best_seed <= lo.value + 1e-9);
        assert!((best_seed - phi_tau_closed(x, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn bracket_ordering_and_records() {
        let cfg = quick();
        for x in [
            MinorsPoint::new(Mat2::ZERO, 1.0),
            MinorsPoint::new(Mat2::new(5.0, 0.0, 0.0, 0.05), 1.0),
            MinorsPoint::new(Mat2::new(1.0, 2.0, 3.0, 4.0), -3.0),
        ] {
            let b = envelope_bracket(&CE, x, &cfg).unwrap();
            assert!(b.lower <= b.upper + 1e-6, "{} > {}", b.lower, b.upper);
            assert_eq!(b.param_cap, cfg.cap);
            assert_eq!(b.box_bound, cfg.grad_box);
            assert!(b.upper_residual <= UPPER_RESIDUAL_TOL);
        }
    }

    #[test]
    fn config_validation() {
        assert!(EnvelopeConfig::default().validate().is_ok());
        let bad = EnvelopeConfig { cap: -1.0, ..EnvelopeConfig::default() };
        assert!(bad.validate().is_err());
        let bad = EnvelopeConfig { restarts: 0, ..EnvelopeConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn ladder_shape() {
        assert_eq!(cap_ladder(1e3), vec![10.0, 100.0, 1000.0]);
        assert_eq!(cap_ladder(5.0), vec![5.0]);
        assert_eq!(cap_ladder(50.0), vec![10.0, 50.0]);
    }
}
