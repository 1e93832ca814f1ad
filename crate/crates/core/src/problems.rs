//! Objective instances with analytic derivatives, synthetic data and optimum finding.
//!
//! All randomness goes through ChaCha8 seeded from a `u64`, so every generator
//! is bit-reproducible for a given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::linalg::sym_eigvals;
use crate::linalg::{dot, norm2, DenseMatrix};

/// Default iteration cap for [`find_optimum`].
pub const DEFAULT_MAX_ITER: usize = 200_000;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Hessian storage of a quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Hessian {
    Diagonal(Vec<f64>),
    Dense(DenseMatrix),
}

impl Hessian {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Hessian::Diagonal(d) => d.iter().zip(v).map(|(a, b)| a * b).collect(),
            Hessian::Dense(m) => m.matvec(v),
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        match self {
            Hessian::Diagonal(d) => {
                let mut e = d.clone();
                e.sort_by(f64::total_cmp);
                Ok(e)
            }
            Hessian::Dense(m) => sym_eigvals(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// `f(x) = ½ (x - x*)ᵀ H (x - x*) + f*`.
    Quadratic {
        hessian: Hessian,
        x_star: Vec<f64>,
        f_star: f64,
    },
    /// `f(x) = (1/n) Σ log(1 + exp(-b_i a_iᵀx)) + reg ‖x‖²`.
    Logistic { a: DenseMatrix, b: Vec<f64>, reg: f64 },
}

/// An immutable objective; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveInstance {
    pub kind: ObjectiveKind,
    pub dim: usize,
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl ObjectiveInstance {
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Quadratic { .. })
    }

    pub fn x_star(&self) -> Option<&[f64]> {
        match &self.kind {
            ObjectiveKind::Quadratic { x_star, .. } => Some(x_star),
            ObjectiveKind::Logistic { .. } => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic {
                hessian,
                x_star,
                f_star,
            } => {
                let e: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
                0.5 * dot(&e, &hessian.apply(&e)) + f_star
            }
            ObjectiveKind::Logistic { a, b, reg } => {
                let z = a.matvec(x);
                let n = a.rows() as f64;
                z.iter().zip(b).map(|(zi, bi)| softplus(-bi * zi)).sum::<f64>() / n
                    + reg * dot(x, x)
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { hessian, x_star, .. } => {
                let e: Vec<f64> = x.iter().zip(x_star).map(|(a, b)| a - b).collect();
                hessian.apply(&e)
            }
            ObjectiveKind::Logistic { a, b, reg } => {
                let z = a.matvec(x);
                let n = a.rows() as f64;
                let w: Vec<f64> = z
                    .iter()
                    .zip(b)
                    .map(|(zi, bi)| -bi * sigmoid(-bi * zi) / n)
                    .collect();
                let mut g = a.t_matvec(&w);
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += 2.0 * reg * xi;
                }
                g
            }
        })
    }

    /// Curvature weights `s_i (1 - s_i) / n` of the logistic loss at `x`.
    fn logistic_weights(a: &DenseMatrix, x: &[f64]) -> Vec<f64> {
        let n = a.rows() as f64;
        a.matvec(x)
            .iter()
            .map(|zi| {
                let s = sigmoid(*zi);
                s * (1.0 - s) / n
            })
            .collect()
    }

    pub fn hessian_vec(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { hessian, .. } => hessian.apply(v),
            ObjectiveKind::Logistic { a, reg, .. } => {
                let w = Self::logistic_weights(a, x);
                let av: Vec<f64> = a.matvec(v).iter().zip(&w).map(|(p, q)| p * q).collect();
                let mut out = a.t_matvec(&av);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += 2.0 * reg * vi;
                }
                out
            }
        })
    }

    /// Dense Hessian at `x`.
    pub fn hessian(&self, x: &[f64]) -> Result<DenseMatrix> {
        self.check_dim(x)?;
        Ok(match &self.kind {
            ObjectiveKind::Quadratic { hessian, .. } => match hessian {
                Hessian::Diagonal(d) => DenseMatrix::from_diag(d),
                Hessian::Dense(m) => m.clone(),
            },
            ObjectiveKind::Logistic { a, reg, .. } => {
                let mut h = a.weighted_gram(&Self::logistic_weights(a, x));
                for i in 0..self.dim {
                    h[(i, i)] += 2.0 * reg;
                }
                h
            }
        })
    }

    /// Largest Hessian eigenvalue at `x` by power iteration.
    pub fn curvature_estimate(&self, x: &[f64]) -> Result<f64> {
        power_iteration(self.dim, |v| self.hessian_vec(x, v).expect("dimensions checked"))
    }

    /// Global smoothness constant: exact for quadratics, `‖A‖²/(4n) + 2 reg` for logistic.
    pub fn smoothness_bound(&self) -> Result<f64> {
        match &self.kind {
            ObjectiveKind::Quadratic { hessian, .. } => Ok(*hessian
                .eigenvalues()?
                .last()
                .expect("non-empty")),
            ObjectiveKind::Logistic { a, reg, .. } => {
                Ok(spectral_norm_sq(a)? / (4.0 * a.rows() as f64) + 2.0 * reg)
            }
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
pub fn power_iteration<F: Fn(&[f64]) -> Vec<f64>>(dim: usize, op: F) -> Result<f64> {
    if dim == 0 {
        return Err(Error::DegenerateInput("empty operator".into()));
    }
    // deterministic start with unequal components to avoid orthogonality to the top eigenvector
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * ((i * 7919) % 97) as f64 / 97.0).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut est = 0.0;
    for _ in 0..5000 {
        let w = op(&v);
        let nw = norm2(&w);
        if !nw.is_finite() {
            return Err(Error::NonFinite);
        }
        if nw == 0.0 {
            return Ok(0.0);
        }
        let new_est = dot(&v, &w);
        v = w.into_iter().map(|x| x / nw).collect();
        if (new_est - est).abs() <= 1e-13 * new_est.abs() {
            return Ok(new_est);
        }
        est = new_est;
    }
    Ok(est)
}

/// `‖A‖₂²`, the largest eigenvalue of `AᵀA`.
pub fn spectral_norm_sq(a: &DenseMatrix) -> Result<f64> {
    power_iteration(a.cols(), |v| a.t_matvec(&a.matvec(v)))
}

/// Diagonal quadratic with the given eigenvalues and a seeded standard Gaussian minimizer.
pub fn make_diag_quadratic(eigs: &[f64], seed: u64) -> Result<ObjectiveInstance> {
    if eigs.is_empty() {
        return Err(Error::DegenerateInput("no eigenvalues".into()));
    }
    if eigs.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidSpectrum("eigenvalues must be finite and positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let x_star = gaussian_vec(&mut rng, eigs.len());
    Ok(ObjectiveInstance {
        dim: eigs.len(),
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Diagonal(eigs.to_vec()),
            x_star,
            f_star: 0.0,
        },
    })
}

/// Quadratic with a dense symmetric positive definite Hessian.
pub fn make_dense_quadratic(h: DenseMatrix, x_star: Vec<f64>, f_star: f64) -> Result<ObjectiveInstance> {
    if h.rows() != x_star.len() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            got: x_star.len(),
        });
    }
    let eigs = sym_eigvals(&h)?;
    if eigs[0] <= 0.0 {
        return Err(Error::InvalidSpectrum(format!(
            "Hessian is not positive definite (smallest eigenvalue {})",
            eigs[0]
        )));
    }
    Ok(ObjectiveInstance {
        dim: x_star.len(),
        kind: ObjectiveKind::Quadratic {
            hessian: Hessian::Dense(h),
            x_star,
            f_star,
        },
    })
}

/// Spiked covariance data `A = X Z`: `X` is `m_rows × n` standard Gaussian and
/// `Z` is diagonal with its first `spikes` entries equal to `factor`, the rest 1.
pub fn make_spiked_covariance(n: usize, m_rows: usize, spikes: usize, factor: f64, seed: u64) -> Result<DenseMatrix> {
    if n == 0 || m_rows == 0 {
        return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
    }
    if spikes > n {
        return Err(Error::InvalidArgument(format!("{spikes} spikes exceed {n} columns")));
    }
    let mut rng = rng_from_seed(seed);
    let mut data = gaussian_vec(&mut rng, m_rows * n);
    for i in 0..m_rows {
        for j in 0..spikes {
            data[i * n + j] *= factor;
        }
    }
    DenseMatrix::from_vec(m_rows, n, data)
}

/// Labels `b = sign(A w)` for a seeded Gaussian `w`; zero margins map to `+1`.
pub fn make_sign_labels(a: &DenseMatrix, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let w = gaussian_vec(&mut rng, a.cols());
    a.matvec(&w)
        .into_iter()
        .map(|z| if z >= 0.0 { 1.0 } else { -1.0 })
        .collect()
}

/// Regularized logistic regression with `reg = reg_scale ‖A‖₂²`.
pub fn make_logistic(a: DenseMatrix, b: Vec<f64>, reg_scale: f64) -> Result<ObjectiveInstance> {
    if b.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            got: b.len(),
        });
    }
    if b.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::BadLabels);
    }
    if !(reg_scale > 0.0 && reg_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("reg_scale must be positive, got {reg_scale}")));
    }
    let reg = reg_scale * spectral_norm_sq(&a)?;
    Ok(ObjectiveInstance {
        dim: a.cols(),
        kind: ObjectiveKind::Logistic { a, b, reg },
    })
}

/// `iters` gradient descent steps with step `1 / L` for the global smoothness bound `L`.
pub fn warm_start(obj: &ObjectiveInstance, x0: &[f64], iters: usize) -> Result<Vec<f64>> {
    let step = 1.0 / obj.smoothness_bound()?;
    let mut x = x0.to_vec();
    for _ in 0..iters {
        let g = obj.gradient(&x)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= step * gi;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(x)
}

/// A point with `‖∇f‖ <= tol`: the known minimizer for quadratics, gradient
/// descent with a refreshed curvature estimate otherwise.
pub fn find_optimum(obj: &ObjectiveInstance, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if let Some(xs) = obj.x_star() {
        return Ok(xs.to_vec());
    }
    let mut x = vec![0.0; obj.dim];
    let mut f = obj.value(&x)?;
    let mut g = obj.gradient(&x)?;
    let mut step = 1.0;
    for it in 0..max_iter {
        let gn = norm2(&g);
        if gn <= tol {
            return Ok(x);
        }
        if it % 100 == 0 {
            step = 1.0 / obj.curvature_estimate(&x)?;
        }
        loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let fc = obj.value(&cand)?;
            // a relative slack keeps round-off near the optimum from stalling the loop
            if fc <= f + 1e-15 * f.abs() || step < 1e-300 {
                x = cand;
                f = fc;
                break;
            }
            step *= 0.5;
        }
        g = obj.gradient(&x)?;
    }
    Err(Error::Timeout {
        iterations: max_iter,
        grad_norm: norm2(&g),
    })
}
