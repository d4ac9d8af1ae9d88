//! Numerical verification of the LAR minimality claim: one unit point per
//! label, optimised under the class objective
//!
//! ```text
//! J(p) = (1/L) sum_i log(1 + sum_{j != i} exp(log(D_ij) <p_i, p_j> - 1))
//! ```
//!
//! (each point acts as its own positive, so the positive term is the
//! constant 1). On the circle the minimisers are rank-preserving
//! uniform-angle configurations — with two documented degenerate cases:
//!
//! - `L = 3`: every label pair has circular distance 1, so every multiplier
//!   is `log(1) = 0` and the objective is *constant* in the angles. Nothing
//!   can drive a random initialisation towards uniformity.
//! - `L = 4`: only the two diagonals carry weight (`log 2`); the objective
//!   pins both diagonals to `pi` but is flat in the angle *between* the two
//!   diagonal pairs, so the final gaps depend on the initialisation.
//!
//! The perturbation checks evaluate the one-point-shift inequalities (odd
//! and even label counts) row by row; at `l = 3` both sides are identically
//! zero for the same `log(1) = 0` reason, and the strict inequality fails.

use crate::loss::label_distance;
use crate::matrix::{dot, norm, Matrix};
use crate::{CoreError, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// One unit point per label, labels `0..L-1` by row index.
#[derive(Debug, Clone)]
pub struct ClassConfiguration {
    pub points: Matrix,
    pub num_labels: usize,
}

impl ClassConfiguration {
    pub fn new(points: Matrix, num_labels: usize) -> Result<Self> {
        if points.rows() != num_labels {
            return Err(CoreError::DimensionError(format!(
                "{} points for {} labels",
                points.rows(),
                num_labels
            )));
        }
        Ok(Self { points, num_labels })
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// The rank-ordered uniform-angle configuration on the circle:
    /// label `i` at polar angle `2*pi*i/L`.
    pub fn uniform_circle(num_labels: usize) -> Self {
        let mut points = Matrix::zeros(num_labels, 2);
        for i in 0..num_labels {
            let theta = 2.0 * PI * i as f64 / num_labels as f64;
            points.set(i, 0, theta.cos());
            points.set(i, 1, theta.sin());
        }
        Self { points, num_labels }
    }

    /// Seeded random unit points.
    pub fn random(num_labels: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Matrix::zeros(num_labels, dim);
        for i in 0..num_labels {
            loop {
                for j in 0..dim {
                    points.set(i, j, rng.gen_range(-1.0..1.0));
                }
                let r = norm(points.row(i));
                if r > 1e-3 {
                    for v in points.row_mut(i) {
                        *v /= r;
                    }
                    break;
                }
            }
        }
        Self { points, num_labels }
    }
}

/// Gap statistics of a two-dimensional configuration.
#[derive(Debug, Clone)]
pub struct GeometryReport {
    /// Adjacent angular gaps between circularly sorted points (radians).
    pub angular_gaps: Vec<f64>,
    /// Largest deviation of any gap from the uniform value `2*pi/L`.
    pub max_gap_deviation: f64,
    /// Whether the circular label sequence equals `0..L-1` up to rotation
    /// and reflection.
    pub ranking_preserved: bool,
    pub objective_value: f64,
}

/// Evaluate the class objective.
pub fn class_objective(config: &ClassConfiguration) -> f64 {
    let l = config.num_labels;
    let mut total = 0.0;
    for i in 0..l {
        let mut scores = Vec::with_capacity(l - 1);
        for j in 0..l {
            if j == i {
                continue;
            }
            let d = label_distance(i, j, l).unwrap() as f64;
            scores.push(d.ln() * dot(config.points.row(i), config.points.row(j)) - 1.0);
        }
        let m = scores.iter().fold(0.0_f64, |acc, &s| acc.max(s));
        let denom: f64 = (-m).exp() + scores.iter().map(|&s| (s - m).exp()).sum::<f64>();
        total += m + denom.ln();
    }
    total / l as f64
}

/// Gradient of the class objective with respect to every point.
fn class_objective_gradient(config: &ClassConfiguration) -> Matrix {
    let l = config.num_labels;
    let mut sigmas = vec![0.0; l * l];
    let mut weights = vec![0.0; l * l];
    for i in 0..l {
        let mut scores = Vec::with_capacity(l - 1);
        let mut cols = Vec::with_capacity(l - 1);
        for j in 0..l {
            if j == i {
                continue;
            }
            let w = (label_distance(i, j, l).unwrap() as f64).ln();
            weights[i * l + j] = w;
            scores.push(w * dot(config.points.row(i), config.points.row(j)) - 1.0);
            cols.push(j);
        }
        let m = scores.iter().fold(0.0_f64, |acc, &s| acc.max(s));
        let denom: f64 = (-m).exp() + scores.iter().map(|&s| (s - m).exp()).sum::<f64>();
        for (s, &j) in scores.iter().zip(&cols) {
            sigmas[i * l + j] = (s - m).exp() / denom;
        }
    }
    let mut grad = Matrix::zeros(l, config.dim());
    for k in 0..l {
        for j in 0..l {
            if j == k {
                continue;
            }
            // k appears as anchor in row k and as negative in row j.
            let c = (sigmas[k * l + j] + sigmas[j * l + k]) * weights[k * l + j] / l as f64;
            let pj = config.points.row(j);
            let gk = grad.row_mut(k);
            for (g, &v) in gk.iter_mut().zip(pj) {
                *g += c * v;
            }
        }
    }
    grad
}

/// Projected gradient descent on the class objective: gradient step, then
/// row renormalisation. Runs ten seeded restarts internally and returns the
/// best configuration found. Deterministic for a fixed seed.
pub fn optimize_configuration(
    num_labels: usize,
    dim: usize,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<ClassConfiguration> {
    assert!(num_labels >= 3, "need at least 3 labels");
    assert!(steps >= 1 && lr > 0.0);
    const RESTARTS: u64 = 10;

    let mut best: Option<(f64, ClassConfiguration)> = None;
    for restart in 0..RESTARTS {
        let sub_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(restart);
        let mut config = ClassConfiguration::random(num_labels, dim, sub_seed);
        for _ in 0..steps {
            let grad = class_objective_gradient(&config);
            for i in 0..num_labels {
                let row = config.points.row_mut(i);
                for (p, g) in row.iter_mut().zip(grad.row(i)) {
                    *p -= lr * g;
                }
                let r = norm(row);
                if r <= 1e-12 || !r.is_finite() {
                    return Err(CoreError::NonFinite {
                        context: format!("point {i} collapsed during descent (lr = {lr})"),
                    });
                }
                for p in row {
                    *p /= r;
                }
            }
        }
        let value = class_objective(&config);
        if !value.is_finite() {
            return Err(CoreError::NonFinite { context: format!("objective diverged (lr = {lr})") });
        }
        match best {
            Some((bv, _)) if bv <= value => {}
            _ => best = Some((value, config)),
        }
    }
    Ok(best.unwrap().1)
}

/// Sort 2-D points by polar angle and report adjacent gaps, the worst
/// deviation from `2*pi/L`, and whether the circular label order is intact.
pub fn measure_angles(config: &ClassConfiguration) -> Result<GeometryReport> {
    if config.dim() != 2 {
        return Err(CoreError::DimensionError(format!(
            "angle measurement requires D = 2, got D = {}",
            config.dim()
        )));
    }
    let l = config.num_labels;
    let mut order: Vec<usize> = (0..l).collect();
    let angles: Vec<f64> = (0..l)
        .map(|i| config.points.get(i, 1).atan2(config.points.get(i, 0)))
        .collect();
    order.sort_by(|&a, &b| angles[a].partial_cmp(&angles[b]).unwrap());

    let mut gaps = Vec::with_capacity(l);
    for k in 0..l {
        let a = angles[order[k]];
        let b = angles[order[(k + 1) % l]];
        let mut gap = b - a;
        if gap < 0.0 {
            gap += 2.0 * PI;
        }
        gaps.push(gap);
    }
    let uniform = 2.0 * PI / l as f64;
    let max_gap_deviation = gaps.iter().map(|g| (g - uniform).abs()).fold(0.0, f64::max);
    let labels_in_circle: Vec<usize> = order.clone();
    let ranking_preserved = circular_sequence_is_identity(&labels_in_circle);

    Ok(GeometryReport {
        angular_gaps: gaps,
        max_gap_deviation,
        ranking_preserved,
        objective_value: class_objective(config),
    })
}

/// True when `seq` equals `(0..L)` as a circular sequence, up to rotation
/// and reflection.
fn circular_sequence_is_identity(seq: &[usize]) -> bool {
    let l = seq.len();
    let start = seq.iter().position(|&v| v == 0).unwrap();
    let forward = (0..l).all(|k| seq[(start + k) % l] == k);
    let backward = (0..l).all(|k| seq[(start + l - k) % l] == k);
    forward || backward
}

/// One row of the one-point-shift verification table.
#[derive(Debug, Clone)]
pub struct PerturbationRow {
    pub l: usize,
    pub epsilon: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub variant: PerturbationVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationVariant {
    /// Odd `l`: unperturbed doubled inner sum vs the `+/- epsilon` sum.
    Odd,
    /// Even `l`: full inequality including the `l/2 * cos(pi)` diameter term.
    EvenFull,
    /// Even `l >= 6`: diameter term dropped from both sides.
    EvenDropped,
}

impl PerturbationVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbationVariant::Odd => "odd",
            PerturbationVariant::EvenFull => "even_full",
            PerturbationVariant::EvenDropped => "even_dropped",
        }
    }
}

/// `sum_{j=1}^{j_max} 2 log(j) cos(j * 2*pi/l + shift)`.
fn weighted_cosine_sum(l: usize, j_max: usize, shift: f64) -> f64 {
    (1..=j_max)
        .map(|j| 2.0 * (j as f64).ln() * (j as f64 * 2.0 * PI / l as f64 + shift).cos())
        .sum()
}

/// Evaluate every one-point-shift inequality row for `l` in `[3, l_max]`
/// against each `epsilon`. Odd rows compare the doubled unperturbed sum with
/// the literally evaluated `+/- epsilon` sum; even rows additionally carry
/// the `l/2 * cos(pi)` vs `l/2 * cos(pi - epsilon)` diameter terms, and from
/// `l = 6` the diameter-dropped variant is reported as its own row.
pub fn perturbation_inequality_check(l_max: usize, epsilons: &[f64]) -> Result<Vec<PerturbationRow>> {
    assert!(l_max >= 3, "l_max must be >= 3");
    let mut rows = Vec::new();
    for l in 3..=l_max {
        for &epsilon in epsilons {
            let limit = 2.0 * PI / l as f64;
            if !(epsilon > 0.0 && epsilon < limit) {
                return Err(CoreError::BadEpsilon { epsilon, l, limit });
            }
            if l % 2 == 1 {
                rows.push(odd_row(l, epsilon));
            } else {
                rows.push(even_row(l, epsilon, false));
                if l >= 6 {
                    rows.push(even_row(l, epsilon, true));
                }
            }
        }
    }
    Ok(rows)
}

fn odd_row(l: usize, epsilon: f64) -> PerturbationRow {
    let j_max = (l - 1) / 2;
    let lhs = 2.0 * weighted_cosine_sum(l, j_max, 0.0);
    let rhs = weighted_cosine_sum(l, j_max, -epsilon) + weighted_cosine_sum(l, j_max, epsilon);
    PerturbationRow { l, epsilon, lhs, rhs, holds: lhs < rhs, variant: PerturbationVariant::Odd }
}

fn even_row(l: usize, epsilon: f64, dropped: bool) -> PerturbationRow {
    let j_max = l / 2 - 1;
    let inner = weighted_cosine_sum(l, j_max, 0.0);
    let half = l as f64 / 2.0;
    let (lhs, rhs) = if dropped {
        (2.0 * inner, 2.0 * epsilon.cos() * inner)
    } else {
        (2.0 * inner + half * PI.cos(), 2.0 * epsilon.cos() * inner + half * (PI - epsilon).cos())
    };
    let variant = if dropped { PerturbationVariant::EvenDropped } else { PerturbationVariant::EvenFull };
    PerturbationRow { l, epsilon, lhs, rhs, holds: lhs < rhs, variant }
}

/// Both sides of the Jensen bound for the exponential of cosines:
/// returns `(mean of e^{cos theta_i}, e^{mean of cos theta_i})`.
/// The first component is always >= the second.
pub fn jensen_gap(angles: &[f64]) -> (f64, f64) {
    assert!(!angles.is_empty(), "angle list must be non-empty");
    let n = angles.len() as f64;
    let lhs = angles.iter().map(|t| t.cos().exp()).sum::<f64>() / n;
    let rhs = (angles.iter().map(|t| t.cos()).sum::<f64>() / n).exp();
    (lhs, rhs)
}
