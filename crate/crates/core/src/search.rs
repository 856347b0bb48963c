//! Sampling budgets, seeded generators and a small Nelder-Mead minimiser
//! shared by the estimators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat2;

/// Sampling budget for the derivative-free searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    pub direction_samples: usize,
    /// Log-spaced, ascending radii at which each direction is probed.
    pub radius_grid: Vec<f64>,
    /// Quotient guard: samples with `|det η| < det_floor·|η|²` are skipped.
    pub det_floor: f64,
    /// Nelder-Mead iterations per refined candidate.
    pub refine_iters: usize,
    /// Number of best scan candidates handed to local refinement.
    pub refine_candidates: usize,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            direction_samples: 2000,
            radius_grid: log_grid(1e-3, 1e2, 13),
            det_floor: 1e-6,
            refine_iters: 2000,
            refine_candidates: 10,
            seed: 0,
        }
    }
}

impl SearchBudget {
    /// A cheaper budget for inner loops (separation, numeric suprema).
    pub fn light() -> Self {
        SearchBudget {
            direction_samples: 400,
            radius_grid: log_grid(1e-2, 1e2, 9),
            det_floor: 1e-6,
            refine_iters: 600,
            refine_candidates: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.det_floor > 0.0) {
            return Err(Error::InvalidInput("det_floor must be positive".into()));
        }
        if self.radius_grid.is_empty() {
            return Err(Error::InvalidInput("radius_grid must be nonempty".into()));
        }
        if self.radius_grid.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput("radii must be finite and positive".into()));
        }
        if self.radius_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("radius_grid must be strictly ascending".into()));
        }
        if self.direction_samples == 0 {
            return Err(Error::InvalidInput("direction_samples must be positive".into()));
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.direction_samples * self.radius_grid.len()
    }
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Counter-based stream: the same `(seed, stream)` always yields the same
/// sequence regardless of which thread asks for it.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform direction on the Frobenius unit sphere.
pub fn random_unit_mat<R: Rng>(rng: &mut R) -> Mat2 {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let m = Mat2::from_array(v);
        let n = m.norm();
        if n > 1e-12 {
            return (1.0 / n) * m;
        }
    }
}

/// Uniform point of the closed Frobenius ball of the given radius.
pub fn random_ball_mat<R: Rng>(rng: &mut R, radius: f64) -> Mat2 {
    let u: f64 = rng.random();
    (radius * u.powf(0.25)) * random_unit_mat(rng)
}

/// Radical-inverse Halton points in `[lo, hi]⁴`, bases 2, 3, 5, 7, skipping
/// the origin of the sequence.
pub fn halton_mats(count: usize, lo: f64, hi: f64) -> Vec<Mat2> {
    const BASES: [u64; 4] = [2, 3, 5, 7];
    (1..=count as u64)
        .map(|i| {
            let c: [f64; 4] = std::array::from_fn(|k| lo + (hi - lo) * radical_inverse(i, BASES[k]));
            Mat2::from_array(c)
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder-Mead with the textbook coefficients (1, 2, ½, ½). Infeasible points
/// should evaluate to `+∞`. The starting simplex is `x0` plus `scale[i]` along
/// each axis.
pub fn nelder_mead<F>(f: F, x0: &[f64], scale: &[f64], max_iter: usize, ftol: f64) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += scale[i];
        let v = eval(&x);
        simplex.push((x, v));
    }

    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if best.is_finite() && worst.is_finite() && (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[n].1 {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < simplex[n].1.min(fr) {
            simplex[n] = (xc, fc);
            continue;
        }
        // shrink toward the best vertex
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let xs: Vec<f64> = x_best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            let fs = eval(&xs);
            *vertex = (xs, fs);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult { x, value, evaluations }
}
