//! Weighted least squares over the shifted nonnegative orthant:
//! `min_{v ≥ lb} Σ_i w_i (g_i − (G v)_i)²`.
//!
//! `G = [[P, 0], [0, I]]` separates. The identity block is solved coordinate
//! by coordinate; the preference block goes through a Lawson–Hanson active
//! set on its weighted Gram matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orders::ConeMatrices;

/// Variances below this get weight zero.
pub const ZERO_VARIANCE: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ConeProblem {
    pub g: Vec<f64>,
    pub matrices: ConeMatrices,
    /// Diagonal of the generalized inverse of `Ω`.
    pub weights: Vec<f64>,
    pub lower_bound: f64,
}

impl ConeProblem {
    pub fn new(g: Vec<f64>, matrices: ConeMatrices, weights: Vec<f64>, lower_bound: f64) -> Result<Self> {
        if g.len() != matrices.rows() || weights.len() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "g has {} rows, G has {}, weights {}",
                g.len(),
                matrices.rows(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::DimensionMismatch("weights and g must be finite, weights nonnegative".into()));
        }
        Ok(Self { g, matrices, weights, lower_bound })
    }

    /// `Σ w_i (g_i − (G v)_i)²`.
    pub fn objective(&self, v: &[f64]) -> f64 {
        let fit = self.matrices.apply(v);
        self.g.iter().zip(&fit).zip(&self.weights).map(|((g, f), w)| w * (g - f) * (g - f)).sum()
    }

    /// Gradient of [`Self::objective`] in `v`.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let fit = self.matrices.apply(v);
        let r: Vec<f64> = (0..self.g.len()).map(|i| 2.0 * self.weights[i] * (fit[i] - self.g[i])).collect();
        let (pr, pc) = self.matrices.preference.shape();
        let mut grad = vec![0.0; self.matrices.cols()];
        for j in 0..pc {
            grad[j] = (0..pr).map(|i| self.matrices.preference[(i, j)] * r[i]).sum();
        }
        grad[pc..].copy_from_slice(&r[pr..]);
        grad
    }

    /// Largest violation of the bound-constrained optimality conditions.
    pub fn kkt_residual(&self, v: &[f64]) -> f64 {
        let grad = self.gradient(v);
        let scale = 1.0f64.max(self.lower_bound.abs());
        grad.iter()
            .zip(v)
            .map(|(&d, &x)| if x > self.lower_bound + 1e-12 * scale { d.abs() } else { (-d).max(0.0) })
            .fold(0.0, f64::max)
    }

    pub fn zero_weight_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w == 0.0).count()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeSolution {
    pub objective: f64,
    pub v: Vec<f64>,
    /// `G v`.
    pub fitted: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Substitute `w = v − lb` so the bound becomes zero.
pub fn shift_to_zero_bound(problem: &ConeProblem) -> ConeProblem {
    let shift = problem.matrices.apply(&vec![problem.lower_bound; problem.matrices.cols()]);
    ConeProblem {
        g: problem.g.iter().zip(&shift).map(|(g, s)| g - s).collect(),
        matrices: problem.matrices.clone(),
        weights: problem.weights.clone(),
        lower_bound: 0.0,
    }
}

pub fn solve_cone(problem: &ConeProblem, tol: f64, max_iter: usize) -> Result<ConeSolution> {
    let shifted = shift_to_zero_bound(problem);
    let lb = problem.lower_bound;
    let (pr, pc) = problem.matrices.preference.shape();
    let mut v = vec![lb; problem.matrices.cols()];

    for i in 0..problem.matrices.identity_dim {
        v[pc + i] = lb + shifted.g[pr + i].max(0.0);
    }

    let sw: Vec<f64> = shifted.weights[..pr].iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(pr, pc, |i, j| sw[i] * problem.matrices.preference[(i, j)]);
    let b = DVector::from_fn(pr, |i, _| sw[i] * shifted.g[i]);
    let (x, iterations) = nnls(&a, &b, tol, max_iter)?;
    for j in 0..pc {
        v[j] = lb + x[j];
    }
    Ok(finish(problem, v, iterations))
}

pub fn solve_cone_default(problem: &ConeProblem) -> Result<ConeSolution> {
    solve_cone(problem, DEFAULT_TOL, default_max_iter(problem.matrices.cols()))
}

pub fn default_max_iter(cols: usize) -> usize {
    20 * cols + 1000
}

/// Same problem without exploiting the block structure.
pub fn solve_cone_dense(problem: &ConeProblem, tol: f64, max_iter: usize) -> Result<ConeSolution> {
    let shifted = shift_to_zero_bound(problem);
    let g = problem.matrices.dense();
    let sw: Vec<f64> = shifted.weights.iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| sw[i] * g[(i, j)]);
    let b = DVector::from_fn(g.nrows(), |i, _| sw[i] * shifted.g[i]);
    let (x, iterations) = nnls(&a, &b, tol, max_iter)?;
    let v = x.iter().map(|x| x + problem.lower_bound).collect();
    Ok(finish(problem, v, iterations))
}

fn finish(problem: &ConeProblem, v: Vec<f64>, iterations: usize) -> ConeSolution {
    let fitted = problem.matrices.apply(&v);
    ConeSolution {
        objective: problem.objective(&v).max(0.0),
        kkt_residual: problem.kkt_residual(&v),
        v,
        fitted,
        iterations,
    }
}

/// Lawson–Hanson nonnegative least squares `min_{x ≥ 0} ‖A x − b‖²` run on
/// the normal equations.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(DVector<f64>, usize)> {
    let gram = a.transpose() * a;
    let atb = a.transpose() * b;
    nnls_gram(&gram, &atb, tol, max_iter)
}

pub fn nnls_gram(gram: &DMatrix<f64>, atb: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(DVector<f64>, usize)> {
    let k = atb.len();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let mut blocked = vec![false; k];
    let scale = atb.amax().max(gram.diagonal().amax()).max(1.0);
    let thresh = tol * scale;
    let mut iterations = 0;

    loop {
        let w = atb - gram * &x;
        let pick = (0..k)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > thresh)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick else { break };
        passive[j] = true;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NonConvergence(max_iter));
            }
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s = solve_passive(gram, atb, &idx);
            if idx.iter().zip(s.iter()).all(|(_, &si)| si > 0.0) {
                for (&i, &si) in idx.iter().zip(s.iter()) {
                    x[i] = si;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &si) in idx.iter().zip(s.iter()) {
                if si <= 0.0 {
                    let denom = x[i] - si;
                    let t = if denom > 0.0 { x[i] / denom } else { 0.0 };
                    alpha = alpha.min(t);
                }
            }
            for (&i, &si) in idx.iter().zip(s.iter()) {
                x[i] += alpha * (si - x[i]);
            }
            let before = idx.len();
            for &i in &idx {
                if x[i] <= 1e-15 * scale {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            if passive.iter().filter(|&&p| p).count() == 0 || before == 0 {
                break;
            }
        }

        // A column entering and leaving at once signals numerical
        // degeneracy; skip it until the iterate moves.
        if !passive[j] {
            blocked[j] = true;
        } else {
            blocked.iter_mut().for_each(|b| *b = false);
        }
    }
    Ok((x, iterations))
}

fn solve_passive(gram: &DMatrix<f64>, atb: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let m = idx.len();
    let sub = DMatrix::from_fn(m, m, |r, c| gram[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(m, |r, _| atb[idx[r]]);
    if let Some(ch) = sub.clone().cholesky() {
        let s = ch.solve(&rhs);
        if s.iter().all(|v| v.is_finite()) {
            let resid = (&sub * &s - &rhs).amax();
            if resid <= 1e-9 * rhs.amax().max(1.0) {
                return s;
            }
        }
    }
    min_norm_solve(sub, &rhs)
}

/// Minimum-norm solution of a symmetric positive semidefinite system.
fn min_norm_solve(sub: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = sub.symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let cut = top * 1e-12;
    let proj = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_fn(proj.len(), |i, _| {
        let l = eig.eigenvalues[i];
        if l > cut {
            proj[i] / l
        } else {
            0.0
        }
    });
    &eig.eigenvectors * scaled
}

/// Diagonal generalized inverse of a variance vector.
pub fn generalized_inverse_weights(variances: &[f64]) -> Vec<f64> {
    variances.iter().map(|&s| if s < ZERO_VARIANCE { 0.0 } else { 1.0 / s }).collect()
}
