//! Experiments around the tube `T_ε = {(t e₁⊗e₁ + η, y) : |η| ≤ ε}`:
//! distance and infimum probes, the gap scan comparing `φ_W` with `φ_τ`,
//! and the two probes for affinity along segments and constancy along lines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{envelope_bracket, EnvelopeBracket, EnvelopeConfig};
use crate::error::{Error, Result};
use crate::linalg::{bracket, lift, Mat2, MinorsPoint};
use crate::objective::{diagonal_family, eval_w, ObjectiveSpec};
use crate::search::{nelder_mead, random_ball_mat, random_unit_mat, stream_rng, SearchBudget};
use crate::touching::phi_tau_closed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TubeSpec {
    pub y: f64,
    pub epsilon: f64,
    pub t_range: f64,
}

impl Default for TubeSpec {
    fn default() -> Self {
        TubeSpec { y: 1.0, epsilon: 0.1, t_range: 10.0 }
    }
}

impl TubeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.y) || !ok(self.epsilon) || !(self.t_range >= 0.0 && self.t_range.is_finite()) {
            return Err(Error::InvalidInput(format!("bad tube parameters {self:?}")));
        }
        if self.epsilon >= self.y {
            return Err(Error::InvalidInput(format!(
                "epsilon ({}) must be smaller than y ({})",
                self.epsilon, self.y
            )));
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveSpec {
        ObjectiveSpec::Counterexample { y: self.y }
    }
}

/// `(t e₁⊗e₁ + η, y)`.
pub fn tube_point(tube: &TubeSpec, t: f64, eta: Mat2) -> Result<MinorsPoint> {
    let norm = eta.norm();
    if norm > tube.epsilon {
        return Err(Error::OutOfTube { norm, epsilon: tube.epsilon });
    }
    Ok(MinorsPoint::new(t * Mat2::E11 + eta, tube.y))
}

/// Euclidean distance from `lift(ξ)` to the tube. The `e₁⊗e₁` component is
/// free, the remaining matrix part must come within `ε` of zero, and the
/// last coordinate must equal `y`.
pub fn tube_distance(tube: &TubeSpec, m: Mat2) -> f64 {
    let b = (bracket(m).norm() - tube.epsilon).max(0.0);
    let d = m.det() - tube.y;
    (b * b + d * d).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    DistTubeToS,
    MinW,
    SegmentAffinity,
    DirectionConstancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Witness {
    Matrix(Mat2),
    Segment { start: MinorsPoint, end: MinorsPoint },
    Line { base: MinorsPoint, direction: MinorsPoint, t_range: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketSample {
    pub s: f64,
    pub point: MinorsPoint,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub value: f64,
    pub witness: Witness,
    /// Objective evaluations (scans) or envelope brackets (line probes).
    pub evaluations: usize,
    pub brackets: Vec<BracketSample>,
    /// Largest `upper − lower` among `brackets`, for the line probes.
    pub max_width: Option<f64>,
}

fn sinh_mat(z: &[f64]) -> Mat2 {
    Mat2::new(z[0].sinh(), z[1].sinh(), z[2].sinh(), z[3].sinh())
}

/// Minimum of `f` over a scan plus explicit seeds, refined by Nelder-Mead in
/// asinh coordinates from the best scan points only.
fn scan_minimum<F: Fn(Mat2) -> f64>(f: F, seeds: &[Mat2], budget: &SearchBudget, stream: u64) -> (f64, Mat2, usize) {
    let mut rng = stream_rng(budget.seed, stream);
    let mut scanned: Vec<(f64, Mat2)> = Vec::new();
    for _ in 0..budget.direction_samples {
        let d = random_unit_mat(&mut rng);
        for &r in &budget.radius_grid {
            scanned.push((f(r * d), r * d));
        }
    }
    let mut evaluations = scanned.len();
    scanned.retain(|s| s.0.is_finite());
    scanned.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = scanned.first().copied().unwrap_or((f64::INFINITY, Mat2::ZERO));
    let max_r = budget.radius_grid.last().copied().unwrap_or(1.0);
    for &(_, m) in scanned.iter().take(budget.refine_candidates) {
        let z0: Vec<f64> = m.to_array().iter().map(|v| v.asinh()).collect();
        let bounded = |z: &[f64]| {
            let m = sinh_mat(z);
            if m.norm() > max_r {
                f64::INFINITY
            } else {
                f(m)
            }
        };
        let r = nelder_mead(bounded, &z0, &[0.25; 4], budget.refine_iters, 1e-15);
        evaluations += r.evaluations;
        let m = sinh_mat(&r.x);
        let v = f(m);
        if v < best.0 && m.norm() <= max_r {
            best = (v, m);
        }
    }
    for &m in seeds {
        let v = f(m);
        evaluations += 1;
        if v < best.0 {
            best = (v, m);
        }
    }
    (best.0, best.1, evaluations)
}

/// Upper bound on `dist(T_ε, {lift ξ})` with witness `ξ`.
pub fn probe_dist_tube_to_s(tube: &TubeSpec, budget: &SearchBudget) -> Result<ProbeReport> {
    tube.validate()?;
    budget.validate()?;
    let mut seeds = diagonal_family(tube.y, 1e4);
    seeds.push(Mat2::ZERO);
    let (value, m, evaluations) = scan_minimum(|m| tube_distance(tube, m), &seeds, budget, 41);
    Ok(ProbeReport {
        kind: ProbeKind::DistTubeToS,
        value,
        witness: Witness::Matrix(m),
        evaluations,
        brackets: Vec::new(),
        max_width: None,
    })
}

/// Upper bound on `inf W` from a scan (independent of `cap`) together with
/// `diag(±t, ±y/t)` for `t ∈ {10^{k/4}} ∪ {cap}`, `t ≤ cap`, and `ξ = 0`.
/// The family minimum is `y/cap`, so the result is nonincreasing in `cap`.
pub fn probe_min_w(spec: &ObjectiveSpec, budget: &SearchBudget, cap: f64) -> Result<ProbeReport> {
    let Some(y) = spec.y() else {
        return Err(Error::InvalidInput("probe_min_w needs the counterexample objective".into()));
    };
    spec.validate()?;
    budget.validate()?;
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::InvalidInput(format!("cap must be finite and positive, got {cap}")));
    }
    let mut seeds = if cap >= 1.0 { diagonal_family(y, cap) } else { Vec::new() };
    seeds.push(Mat2::diag(cap, y / cap));
    seeds.push(Mat2::ZERO);
    let (value, m, evaluations) = scan_minimum(|m| eval_w(spec, m), &seeds, budget, 42);
    Ok(ProbeReport {
        kind: ProbeKind::MinW,
        value,
        witness: Witness::Matrix(m),
        evaluations,
        brackets: Vec::new(),
        max_width: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GapCertified,
    GapRefutedAtCap,
    Inconclusive,
}

impl Verdict {
    /// A certified gap takes precedence; both can only hold together if the
    /// bracket itself is inconsistent.
    pub fn classify(lower: f64, upper: f64, phi_tau: f64, epsilon: f64, margin: f64) -> Verdict {
        if lower > phi_tau + margin {
            Verdict::GapCertified
        } else if upper < epsilon {
            Verdict::GapRefutedAtCap
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::GapCertified => "gap_certified",
            Verdict::GapRefutedAtCap => "gap_refuted_at_cap",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl std::str::FromStr for Verdict {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap_certified" => Ok(Verdict::GapCertified),
            "gap_refuted_at_cap" => Ok(Verdict::GapRefutedAtCap),
            "inconclusive" => Ok(Verdict::Inconclusive),
            other => Err(Error::InvalidInput(format!("unknown verdict {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapGrid {
    pub t_points: usize,
    pub eta_points: usize,
    pub margin: f64,
}

impl Default for GapGrid {
    fn default() -> Self {
        GapGrid { t_points: 21, eta_points: 16, margin: 1e-6 }
    }
}

impl GapGrid {
    pub fn validate(&self) -> Result<()> {
        if self.t_points == 0 || self.eta_points == 0 {
            return Err(Error::InvalidInput("grid sizes must be positive".into()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::InvalidInput("margin must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t_points * self.eta_points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Uniform over `[−t_range, t_range]`; a single point sits at 0.
    pub fn t_values(&self, tube: &TubeSpec) -> Vec<f64> {
        if self.t_points == 1 {
            return vec![0.0];
        }
        (0..self.t_points)
            .map(|i| -tube.t_range + 2.0 * tube.t_range * i as f64 / (self.t_points - 1) as f64)
            .collect()
    }

    /// `η = 0` first, then uniform samples from the closed `ε`-ball.
    pub fn eta_values(&self, tube: &TubeSpec, seed: u64) -> Vec<Mat2> {
        let mut rng = stream_rng(seed, 51);
        let mut out = vec![Mat2::ZERO];
        while out.len() < self.eta_points {
            out.push(random_ball_mat(&mut rng, tube.epsilon));
        }
        out.truncate(self.eta_points);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub t: f64,
    pub eta: Mat2,
    pub x: MinorsPoint,
    pub phi_tau: f64,
    pub phi_w_lower: f64,
    pub phi_w_upper: f64,
    pub cap: f64,
    pub epsilon: f64,
    pub margin: f64,
    pub verdict: Verdict,
    pub upper_residual: f64,
    pub cut_cap_reached: bool,
}

impl GapRecord {
    pub fn recompute_verdict(&self) -> Verdict {
        Verdict::classify(self.phi_w_lower, self.phi_w_upper, self.phi_tau, self.epsilon, self.margin)
    }
}

/// Mixes the run seed with a task index so every grid point has its own
/// stream, whatever thread evaluates it.
pub fn task_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Envelope brackets over the `t × η` grid, in `(t index, η index)` order.
pub fn gap_scan(tube: &TubeSpec, grid: &GapGrid, config: &EnvelopeConfig, seed: u64) -> Result<Vec<GapRecord>> {
    tube.validate()?;
    grid.validate()?;
    config.validate()?;
    let spec = tube.objective();
    let ts = grid.t_values(tube);
    let etas = grid.eta_values(tube, seed);
    let tasks: Vec<(usize, f64, Mat2)> = ts
        .iter()
        .flat_map(|&t| etas.iter().map(move |&e| (t, e)))
        .enumerate()
        .map(|(i, (t, e))| (i, t, e))
        .collect();
    tasks
        .par_iter()
        .map(|&(i, t, eta)| {
            let x = tube_point(tube, t, eta)?;
            let phi_tau = phi_tau_closed(x, tube.y);
            let cfg = EnvelopeConfig { seed: task_seed(seed, i as u64), ..config.clone() };
            let b = envelope_bracket(&spec, x, &cfg)?;
            let verdict = Verdict::classify(b.lower, b.upper, phi_tau, tube.epsilon, grid.margin);
            Ok(GapRecord {
                t,
                eta,
                x,
                phi_tau,
                phi_w_lower: b.lower,
                phi_w_upper: b.upper,
                cap: b.param_cap,
                epsilon: tube.epsilon,
                margin: grid.margin,
                verdict,
                upper_residual: b.upper_residual,
                cut_cap_reached: b.cut_cap_reached,
            })
        })
        .collect()
}

fn brackets_at(spec: &ObjectiveSpec, points: &[(f64, MinorsPoint)], config: &EnvelopeConfig) -> Result<Vec<(BracketSample, EnvelopeBracket)>> {
    points
        .par_iter()
        .map(|&(s, p)| {
            let b = envelope_bracket(spec, p, config)?;
            Ok((BracketSample { s, point: p, lower: b.lower, upper: b.upper }, b))
        })
        .collect()
}

/// Brackets at `k` uniform points of `[lift(Y), X]` and the largest deviation
/// of the bracket midpoints from the chord through the two end midpoints.
/// A deviation below `max_width` says nothing either way.
pub fn segment_affinity_probe(
    spec: &ObjectiveSpec,
    x: MinorsPoint,
    y_source: Mat2,
    k: usize,
    config: &EnvelopeConfig,
) -> Result<ProbeReport> {
    if k < 3 {
        return Err(Error::InvalidInput(format!("segment probe needs k >= 3, got {k}")));
    }
    let start = lift(y_source);
    let points: Vec<(f64, MinorsPoint)> = (0..k)
        .map(|i| {
            let s = i as f64 / (k - 1) as f64;
            (s, start + s * (x - start))
        })
        .collect();
    let samples: Vec<BracketSample> = brackets_at(spec, &points, config)?.into_iter().map(|p| p.0).collect();
    let mid = |b: &BracketSample| 0.5 * (b.lower + b.upper);
    let (m0, m1) = (mid(&samples[0]), mid(&samples[k - 1]));
    let deviation = samples
        .iter()
        .map(|b| (mid(b) - (m0 + b.s * (m1 - m0))).abs())
        .fold(0.0, f64::max);
    let max_width = samples.iter().map(|b| b.upper - b.lower).fold(0.0, f64::max);
    Ok(ProbeReport {
        kind: ProbeKind::SegmentAffinity,
        value: deviation,
        witness: Witness::Segment { start, end: x },
        evaluations: k,
        brackets: samples,
        max_width: Some(max_width),
    })
}

/// Brackets at `k` points `Y + t e`, `t` uniform in `[−t_range, t_range]`
/// (`t = 0` when `k = 1`); reports `max upper − min lower`.
pub fn direction_constancy_probe(
    spec: &ObjectiveSpec,
    y: MinorsPoint,
    e: MinorsPoint,
    t_range: f64,
    k: usize,
    config: &EnvelopeConfig,
) -> Result<ProbeReport> {
    if (e.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("direction must have unit norm, got {}", e.norm())));
    }
    if k == 0 || !(t_range >= 0.0 && t_range.is_finite()) {
        return Err(Error::InvalidInput("direction probe needs k >= 1 and finite t_range >= 0".into()));
    }
    let points: Vec<(f64, MinorsPoint)> = (0..k)
        .map(|i| {
            let t = if k == 1 { 0.0 } else { -t_range + 2.0 * t_range * i as f64 / (k - 1) as f64 };
            (t, y + t * e)
        })
        .collect();
    let samples: Vec<BracketSample> = brackets_at(spec, &points, config)?.into_iter().map(|p| p.0).collect();
    let hi = samples.iter().map(|b| b.upper).fold(f64::NEG_INFINITY, f64::max);
    let lo = samples.iter().map(|b| b.lower).fold(f64::INFINITY, f64::min);
    let max_width = samples.iter().map(|b| b.upper - b.lower).fold(0.0, f64::max);
    Ok(ProbeReport {
        kind: ProbeKind::DirectionConstancy,
        value: hi - lo,
        witness: Witness::Line { base: y, direction: e, t_range },
        evaluations: k,
        brackets: samples,
        max_width: Some(max_width),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> EnvelopeConfig {
        EnvelopeConfig { restarts: 4, max_cut_iters: 10, audit_samples: 5_000, ..EnvelopeConfig::default() }
    }

    #[test]
    fn tube_points() {
        let tube = TubeSpec::default();
        assert_eq!(tube_point(&tube, 0.0, Mat2::ZERO).unwrap(), MinorsPoint::new(Mat2::ZERO, 1.0));
        let x = tube_point(&tube, 5.0, 0.05 * Mat2::E22).unwrap();
        assert!((phi_tau_closed(x, 1.0) - 0.05).abs() < 1e-15);
        assert!(matches!(tube_point(&tube, 0.0, Mat2::IDENTITY), Err(Error::OutOfTube { .. })));
    }

    #[test]
    fn tube_validation() {
        assert!(TubeSpec::default().validate().is_ok());
        assert!(TubeSpec { epsilon: 1.0, ..TubeSpec::default() }.validate().is_err());
        assert!(TubeSpec { y: -1.0, ..TubeSpec::default() }.validate().is_err());
    }

    #[test]
    fn tube_distance_examples() {
        let tube = TubeSpec::default();
        assert_eq!(tube_distance(&tube, Mat2::ZERO), 1.0);
        assert!(tube_distance(&tube, Mat2::diag(20.0, 0.05)) < 1e-15);
        // outside the eta-ball only the excess counts
        let m = Mat2::diag(3.0, 0.5);
        let expected = ((0.5f64 - 0.1).powi(2) + 0.25).sqrt();
        assert!((tube_distance(&tube, m) - expected).abs() < 1e-15);
    }

    #[test]
    fn dist_probe_finds_tube_points_of_s() {
        let r = probe_dist_tube_to_s(&TubeSpec::default(), &SearchBudget::light()).unwrap();
        assert!(r.value <= 1e-9);
        let Witness::Matrix(m) = r.witness else { panic!() };
        assert!((tube_distance(&TubeSpec::default(), m) - r.value).abs() <= 1e-12);
    }

    #[test]
    fn min_w_probe_is_monotone_in_cap() {
        let spec = ObjectiveSpec::Counterexample { y: 1.0 };
        let b = SearchBudget::light();
        let mut last = f64::INFINITY;
        for cap in [1.0, 3.0, 10.0, 1e2, 1e4] {
            let r = probe_min_w(&spec, &b, cap).unwrap();
            assert!(r.value <= last);
            let Witness::Matrix(m) = r.witness else { panic!() };
            assert!((eval_w(&spec, m) - r.value).abs() <= 1e-10);
            last = r.value;
        }
        assert!(last <= 1e-4);
        assert!(probe_min_w(&ObjectiveSpec::NormOfMinors, &b, 10.0).is_err());
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(Verdict::classify(0.2, 0.3, 0.05, 0.1, 1e-6), Verdict::GapCertified);
        assert_eq!(Verdict::classify(0.0, 1e-3, 0.0, 0.1, 1e-6), Verdict::GapRefutedAtCap);
        assert_eq!(Verdict::classify(0.05, 0.2, 0.05, 0.1, 1e-6), Verdict::Inconclusive);
        for v in [Verdict::GapCertified, Verdict::GapRefutedAtCap, Verdict::Inconclusive] {
            assert_eq!(v.as_str().parse::<Verdict>().unwrap(), v);
        }
    }

    #[test]
    fn small_scan_is_consistent_and_deterministic() {
        let tube = TubeSpec::default();
        let grid = GapGrid { t_points: 2, eta_points: 2, margin: 1e-6 };
        let a = gap_scan(&tube, &grid, &quick(), 7).unwrap();
        let b = gap_scan(&tube, &grid, &quick(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        for r in &a {
            assert!(r.phi_tau <= tube.epsilon + 1e-12);
            assert!(r.phi_w_lower <= r.phi_w_upper + 1e-6);
            assert_eq!(r.verdict, r.recompute_verdict());
        }
    }

    #[test]
    fn centre_point_refuted_at_cap() {
        let tube = TubeSpec { t_range: 0.0, ..TubeSpec::default() };
        let grid = GapGrid { t_points: 1, eta_points: 1, margin: 1e-6 };
        let r = gap_scan(&tube, &grid, &quick(), 0).unwrap();
        assert_eq!(r[0].phi_tau, 0.0);
        assert!(r[0].phi_w_upper <= 1e-3 + 1e-12);
        assert_eq!(r[0].verdict, Verdict::GapRefutedAtCap);
    }

    #[test]
    fn degenerate_segment_has_zero_deviation() {
        let spec = ObjectiveSpec::Counterexample { y: 1.0 };
        let m = Mat2::new(0.3, -1.2, 0.7, 2.0);
        let r = segment_affinity_probe(&spec, lift(m), m, 3, &quick()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(segment_affinity_probe(&spec, lift(m), m, 2, &quick()).is_err());
    }

    #[test]
    fn direction_probe_contract() {
        let spec = ObjectiveSpec::Counterexample { y: 1.0 };
        let y = MinorsPoint::new(Mat2::ZERO, 1.0);
        let e = MinorsPoint::new(Mat2::E11, 0.0);
        let r = direction_constancy_probe(&spec, y, e, 1.0, 1, &quick()).unwrap();
        assert!((r.value - r.max_width.unwrap()).abs() < 1e-15);
        assert!(direction_constancy_probe(&spec, y, 2.0 * e, 1.0, 3, &quick()).is_err());
    }
}
