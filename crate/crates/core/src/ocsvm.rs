//! ν one-class SVM (Schölkopf et al.) trained on the dual
//!
//! ```text
//! min ½ αᵀQα   s.t.  0 ≤ αᵢ ≤ 1/(νn),  Σ αᵢ = 1,   Q_ij = k(xᵢ, xⱼ)
//! ```
//!
//! with pairwise (SMO) updates on the maximal KKT-violating pair. The decision
//! function is `Σ αᵢ k(x, xᵢ) − ρ`; for the linear kernel it collapses to
//! `⟨w, x⟩ − ρ` with `w = Σ αᵢ xᵢ`.

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::samples::{dot, Samples};

pub const DEFAULT_NU: f64 = 0.01;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Full Gram matrices are precomputed up to this many samples (about 128 MB).
const GRAM_CACHE_LIMIT: usize = 4096;
/// Floor for the pair curvature when two samples coincide.
const TAU: f64 = 1e-12;
/// Largest problem the projected-gradient oracle accepts.
pub const ORACLE_MAX_SAMPLES: usize = 20;
const ORACLE_KKT_TOL: f64 = 1e-8;

pub trait Kernel: Sync {
    fn eval(&self, a: &[f32], b: &[f32]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LinearKernel;

impl Kernel for LinearKernel {
    #[inline]
    fn eval(&self, a: &[f32], b: &[f32]) -> f64 {
        dot(a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcsvmConfig {
    pub nu: f64,
    /// Stop when the maximal KKT violation drops below this.
    pub tol: f64,
    /// Maximum number of pair updates.
    pub max_iter: usize,
}

impl Default for OcsvmConfig {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassSvmModel {
    /// Effective ν after clamping to `1/n`.
    pub nu: f64,
    pub alphas: Vec<f64>,
    pub rho: f64,
    /// `Σ αᵢ xᵢ` (linear kernel).
    pub w: Vec<f64>,
    pub n_train: usize,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
}

impl OneClassSvmModel {
    pub fn upper_bound(&self) -> f64 {
        1.0 / (self.nu * self.n_train as f64)
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Signed normality score `⟨w, x⟩ − ρ`; positive inside the region.
    pub fn decision(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(self.decision_unchecked(x))
    }

    #[inline]
    pub(crate) fn decision_unchecked(&self, x: &[f32]) -> f64 {
        x.iter().zip(&self.w).map(|(&a, &b)| a as f64 * b).sum::<f64>() - self.rho
    }

    /// `sign(decision)`, i.e. +1 for normal and -1 for outliers.
    pub fn predict(&self, x: &[f32]) -> Result<i8> {
        Ok(if self.decision(x)? >= 0.0 { 1 } else { -1 })
    }

    /// `½ ‖w‖²`, the dual objective for the linear kernel.
    pub fn dual_objective(&self) -> f64 {
        0.5 * self.w.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn support_vector_count(&self) -> usize {
        self.alphas.iter().filter(|&&a| a > 0.0).count()
    }

    /// Largest violation of `0 ≤ α ≤ 1/(νn)` and `Σα = 1`.
    pub fn constraint_violation(&self) -> f64 {
        let c = self.upper_bound();
        let box_violation = self
            .alphas
            .iter()
            .map(|&a| (-a).max(a - c).max(0.0))
            .fold(0.0, f64::max);
        let sum: f64 = self.alphas.iter().sum();
        box_violation.max((sum - 1.0).abs())
    }

    /// Outlier and support-vector fractions on the training set. A training
    /// point is an outlier when its decision value is below `-kkt_gap`: at
    /// the solver's stopping point every multiplier under the box bound has a
    /// decision value of at least `-kkt_gap`, so only bounded points can fall
    /// below it. Points closer to zero are boundary points up to solver
    /// tolerance; they are counted separately in `strict_outlier_fraction`.
    pub fn nu_property(&self, train: &Samples) -> NuProperty {
        let n = train.len();
        // Slack for drift between the incrementally updated gradient and ⟨w, x⟩.
        let margin = self.kkt_gap.max(0.0) + 1e-9;
        let (mut outliers, mut strict) = (0usize, 0usize);
        for x in train.rows() {
            let d = self.decision_unchecked(x);
            outliers += (d < -margin) as usize;
            strict += (d < 0.0) as usize;
        }
        NuProperty {
            nu: self.nu,
            n,
            outlier_fraction: outliers as f64 / n as f64,
            strict_outlier_fraction: strict as f64 / n as f64,
            support_fraction: self.support_vector_count() as f64 / n as f64,
        }
    }
}

/// Schölkopf's ν-property on the training set: at most a ν fraction of
/// outliers and at least a ν fraction of support vectors, each up to `1/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuProperty {
    pub nu: f64,
    pub n: usize,
    pub outlier_fraction: f64,
    /// Fraction with a negative decision value, tolerance ignored.
    pub strict_outlier_fraction: f64,
    pub support_fraction: f64,
}

impl NuProperty {
    pub fn holds(&self) -> bool {
        let slack = 1.0 / self.n as f64;
        self.outlier_fraction <= self.nu + slack && self.support_fraction >= self.nu - slack
    }
}

fn validate(x: &Samples, nu: f64) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "one-class SVM needs at least 2 samples, got {n}"
        )));
    }
    if let Some((sample, component)) = x.find_non_finite() {
        return Err(Error::NonFinite { sample, component });
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidArgument(format!("nu = {nu} outside (0, 1]")));
    }
    if nu * (n as f64) < 1.0 {
        let clamped = 1.0 / n as f64;
        warn!("nu = {nu} leaves fewer than one support vector for n = {n}; using {clamped}");
        return Ok(clamped);
    }
    Ok(nu)
}

enum Gram<'a, K: Kernel> {
    Full { n: usize, q: Vec<f64> },
    OnDemand { x: &'a Samples, kernel: &'a K },
}

impl<'a, K: Kernel> Gram<'a, K> {
    fn new(x: &'a Samples, kernel: &'a K) -> Self {
        let n = x.len();
        if n > GRAM_CACHE_LIMIT {
            return Gram::OnDemand { x, kernel };
        }
        let mut q = vec![0f64; n * n];
        q.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = kernel.eval(xi, x.row(j));
            }
        });
        Gram::Full { n, q }
    }

    fn row(&self, i: usize, buf: &mut Vec<f64>) {
        match self {
            Gram::Full { n, q } => {
                buf.clear();
                buf.extend_from_slice(&q[i * n..(i + 1) * n]);
            }
            Gram::OnDemand { x, kernel } => {
                let xi = x.row(i);
                buf.clear();
                buf.extend(x.rows().map(|xj| kernel.eval(xi, xj)));
            }
        }
    }
}

/// Dual variables and offset from an SMO run with an arbitrary kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub nu: f64,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
}

/// SMO on the one-class dual with maximal-violating-pair selection.
pub fn solve_dual<K: Kernel>(x: &Samples, kernel: &K, cfg: &OcsvmConfig) -> Result<DualSolution> {
    let nu = validate(x, cfg.nu)?;
    let n = x.len();
    let c = 1.0 / (nu * n as f64);
    let gram = Gram::new(x, kernel);

    // Fill greedily: the first ⌊νn⌋ at the bound, the next with the remainder.
    let mut alphas = vec![0f64; n];
    let mut remaining = 1.0f64;
    for a in alphas.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *a = c.min(remaining);
        remaining -= *a;
    }

    let mut grad = vec![0f64; n];
    let mut row = Vec::with_capacity(n);
    for (i, &a) in alphas.iter().enumerate() {
        if a != 0.0 {
            gram.row(i, &mut row);
            for (g, q) in grad.iter_mut().zip(&row) {
                *g += a * q;
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();

    let mut row_j = Vec::with_capacity(n);
    let mut iterations = 0;
    let gap = loop {
        // i: can grow and has the smallest gradient; j: can shrink, largest gradient.
        let mut i = usize::MAX;
        let mut j = usize::MAX;
        for t in 0..n {
            if alphas[t] < c && (i == usize::MAX || grad[t] < grad[i]) {
                i = t;
            }
            if alphas[t] > 0.0 && (j == usize::MAX || grad[t] > grad[j]) {
                j = t;
            }
        }
        // With every variable pinned to a bound there is no feasible pair.
        if i == usize::MAX || j == usize::MAX {
            break 0.0;
        }
        let gap = grad[j] - grad[i];
        if gap < cfg.tol {
            break gap;
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NotConverged {
                max_iter: cfg.max_iter,
                gap,
            });
        }
        iterations += 1;

        gram.row(i, &mut row);
        gram.row(j, &mut row_j);
        let curvature = (diag[i] + diag[j] - 2.0 * row[j]).max(TAU);
        let room_i = c - alphas[i];
        let room_j = alphas[j];
        let step = gap / curvature;
        let delta = step.min(room_i).min(room_j);
        if delta == room_i {
            alphas[i] = c;
        } else {
            alphas[i] += delta;
        }
        if delta == room_j {
            alphas[j] = 0.0;
        } else {
            alphas[j] -= delta;
        }
        for ((g, qi), qj) in grad.iter_mut().zip(&row).zip(&row_j) {
            *g += delta * (qi - qj);
        }
    };

    let rho = offset(&alphas, &grad, c, 0.0);
    Ok(DualSolution {
        nu,
        alphas,
        rho,
        iterations,
        kkt_gap: gap.max(0.0),
    })
}

/// ρ from the KKT conditions: mean gradient over free variables, otherwise
/// the midpoint of `[max_{α=C} G, min_{α=0} G]`. Variables within `eps` of a
/// bound count as bounded.
fn offset(alphas: &[f64], grad: &[f64], c: f64, eps: f64) -> f64 {
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for (&a, &g) in alphas.iter().zip(grad) {
        if a <= eps {
            upper = upper.min(g);
        } else if a >= c - eps {
            lower = lower.max(g);
        } else {
            free_sum += g;
            free_n += 1;
        }
    }
    if free_n > 0 {
        free_sum / free_n as f64
    } else if lower.is_finite() && upper.is_finite() {
        (lower + upper) / 2.0
    } else if lower.is_finite() {
        lower
    } else {
        upper
    }
}

fn weight_vector(x: &Samples, alphas: &[f64]) -> Vec<f64> {
    let mut w = vec![0f64; x.dim()];
    for (row, &a) in x.rows().zip(alphas) {
        if a != 0.0 {
            for (wv, &v) in w.iter_mut().zip(row) {
                *wv += a * v as f64;
            }
        }
    }
    w
}

/// Trains a linear-kernel one-class SVM.
pub fn train_ocsvm(x: &Samples, cfg: &OcsvmConfig) -> Result<OneClassSvmModel> {
    let sol = solve_dual(x, &LinearKernel, cfg)?;
    Ok(OneClassSvmModel {
        nu: sol.nu,
        w: weight_vector(x, &sol.alphas),
        alphas: sol.alphas,
        rho: sol.rho,
        n_train: x.len(),
        iterations: sol.iterations,
        kkt_gap: sol.kkt_gap,
    })
}

/// Euclidean projection onto `{0 ≤ α ≤ c, Σα = 1}` by bisection on the shift.
fn project_capped_simplex(v: &[f64], c: f64) -> Vec<f64> {
    let mass = |tau: f64| v.iter().map(|&x| (x - tau).clamp(0.0, c)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - c - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&x| (x - tau).clamp(0.0, c)).collect()
}

/// Reference solver for small problems: accelerated projected gradient on the
/// same dual, iterated to a fixed point. Used to check [`train_ocsvm`].
pub fn brute_force_qp(x: &Samples, nu: f64) -> Result<OneClassSvmModel> {
    let n = x.len();
    if n > ORACLE_MAX_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to {ORACLE_MAX_SAMPLES} samples, got {n}"
        )));
    }
    let nu = validate(x, nu)?;
    let c = 1.0 / (nu * n as f64);
    let q: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| dot(x.row(i), x.row(j)))
        .collect();
    let grad_of = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q[i * n + j] * a[j]).sum())
            .collect()
    };
    let objective = |a: &[f64]| -> f64 {
        0.5 * a.iter().zip(grad_of(a)).map(|(ai, gi)| ai * gi).sum::<f64>()
    };
    let lipschitz = (0..n).map(|i| q[i * n + i]).sum::<f64>().max(TAU);

    // Projection clamps exactly onto 0 and c, so bound status is exact and the
    // KKT gap can be measured without a tolerance.
    let mut alpha = project_capped_simplex(&vec![1.0 / n as f64; n], c);
    let mut y = alpha.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut f_alpha = objective(&alpha);
    while iterations < 1_000_000 {
        iterations += 1;
        let g = grad_of(&y);
        let step: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - gi / lipschitz).collect();
        let next = project_capped_simplex(&step, c);
        let f_next = objective(&next);
        if f_next > f_alpha || (t == 1.0 && f_next == f_alpha) {
            if t == 1.0 {
                // A plain projected step failed to descend: roundoff floor.
                break;
            }
            // Momentum overshot: restart from the last iterate.
            t = 1.0;
            y = alpha.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        alpha = next;
        f_alpha = f_next;
        t = t_next;
        // Projected-gradient residual: zero exactly at the optimum and, unlike
        // the pairwise gap, insensitive to multipliers still creeping to a bound.
        let g = grad_of(&alpha);
        let probe: Vec<f64> = alpha.iter().zip(&g).map(|(a, gi)| a - gi / lipschitz).collect();
        let residual = project_capped_simplex(&probe, c)
            .iter()
            .zip(&alpha)
            .map(|(p, a)| (p - a).abs())
            .fold(0.0, f64::max)
            * lipschitz;
        if residual < ORACLE_KKT_TOL {
            break;
        }
    }

    let grad = grad_of(&alpha);
    let rho = offset(&alpha, &grad, c, 0.0);
    let kkt_gap = kkt_violation(&alpha, &grad, c, 0.0);
    Ok(OneClassSvmModel {
        nu,
        w: weight_vector(x, &alpha),
        alphas: alpha,
        rho,
        n_train: n,
        iterations,
        kkt_gap,
    })
}

fn kkt_violation(alphas: &[f64], grad: &[f64], c: f64, eps: f64) -> f64 {
    let min_up = alphas
        .iter()
        .zip(grad)
        .filter(|(&a, _)| a < c - eps)
        .map(|(_, &g)| g)
        .fold(f64::INFINITY, f64::min);
    let max_low = alphas
        .iter()
        .zip(grad)
        .filter(|(&a, _)| a > eps)
        .map(|(_, &g)| g)
        .fold(f64::NEG_INFINITY, f64::max);
    (max_low - min_up).max(0.0)
}
