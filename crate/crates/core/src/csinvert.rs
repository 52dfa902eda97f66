//! Wavelet-domain compressed-sensing inversion of the covariance model.
//!
//! Minimizes, over wavelet coefficients `α` with `p = Ψα`,
//!
//! ```text
//! F(α) = ‖A diag(Ψα) Aᴴ − Σ̂‖²_F + λ‖α‖₁
//! ```
//!
//! with a monotone (restarting) FISTA. Nonnegativity of `p` is imposed by
//! projecting the final synthesis only.

use num_complex::Complex64;

use crate::error::{Result, TomoError};
use crate::geometry::SteeringMatrix;
use crate::linalg::{ensure_square, frobenius_sq, CMatrix, PackedHermitian};
use crate::wavelet::WaveletBasis;

pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
/// Factor of the scale-free default regularization weight.
pub const DEFAULT_LAMBDA_FACTOR: f64 = 1e-2;
const POWER_ITERATIONS: usize = 50;
/// Safety margin applied on top of the power-iteration Lipschitz estimate.
const STEP_MARGIN: f64 = 1.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CsConfig {
    /// `None` selects `1e-2 · ‖Σ̂‖²_F / ‖Ψᵀ b‖_∞` with `b_i = aᵢᴴ Σ̂ aᵢ`.
    pub lambda: Option<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub nonneg_projection: bool,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            lambda: None,
            max_iter: DEFAULT_MAX_ITER,
            rel_tol: DEFAULT_REL_TOL,
            nonneg_projection: true,
        }
    }
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(TomoError::invalid("cs.lambda must be nonnegative"));
            }
        }
        if self.max_iter == 0 {
            return Err(TomoError::invalid("cs.max_iter must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(TomoError::invalid("cs.rel_tol must be positive"));
        }
        Ok(())
    }
}

fn check_dims(a: &SteeringMatrix, sigma: &CMatrix, basis: &WaveletBasis, alpha_len: Option<usize>) -> Result<()> {
    ensure_square(sigma, a.n_tracks(), "covariance")?;
    if basis.len() != a.n_heights() {
        return Err(TomoError::dim(format!(
            "basis size {} differs from {} heights",
            basis.len(),
            a.n_heights()
        )));
    }
    if let Some(n) = alpha_len {
        if n != basis.len() {
            return Err(TomoError::dim(format!("coefficient vector has {n} entries, expected {}", basis.len())));
        }
    }
    Ok(())
}

/// `A diag(p) Aᴴ`.
pub fn model_covariance(a: &SteeringMatrix, p: &[f64]) -> CMatrix {
    let n = a.n_tracks();
    let mut m = CMatrix::zeros((n, n));
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let col = a.column_slice(i);
        for r in 0..n {
            let ar = col[r] * pi;
            for c in r..n {
                m[[r, c]] += ar * col[c].conj();
            }
        }
    }
    for r in 0..n {
        m[[r, r]] = Complex64::new(m[[r, r]].re, 0.0);
        for c in (r + 1)..n {
            m[[c, r]] = m[[r, c]].conj();
        }
    }
    m
}

fn data_term(a: &SteeringMatrix, sigma: &CMatrix, p: &[f64]) -> (f64, CMatrix) {
    let residual = model_covariance(a, p) - sigma;
    (frobenius_sq(&residual), residual)
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn cs_objective(alpha: &[f64], a: &SteeringMatrix, sigma: &CMatrix, basis: &WaveletBasis, lambda: f64) -> Result<f64> {
    check_dims(a, sigma, basis, Some(alpha.len()))?;
    let p = basis.synthesize(alpha);
    Ok(data_term(a, sigma, &p).0 + lambda * l1(alpha))
}

fn gradient_from_residual(a: &SteeringMatrix, residual: &CMatrix, basis: &WaveletBasis) -> Vec<f64> {
    let packed = PackedHermitian::new(residual);
    let g: Vec<f64> = (0..a.n_heights())
        .map(|i| 2.0 * packed.quadratic(a.column_slice(i)))
        .collect();
    basis.analyze(&g)
}

/// Gradient of the Frobenius data term with respect to `α`.
pub fn cs_gradient(alpha: &[f64], a: &SteeringMatrix, sigma: &CMatrix, basis: &WaveletBasis) -> Result<Vec<f64>> {
    check_dims(a, sigma, basis, Some(alpha.len()))?;
    let p = basis.synthesize(alpha);
    let (_, residual) = data_term(a, sigma, &p);
    Ok(gradient_from_residual(a, &residual, basis))
}

/// `G_ik = |a(z_i)ᴴ a(z_k)|²`, the Hessian of the data term up to a factor 2.
pub fn steering_gram(a: &SteeringMatrix) -> Vec<f64> {
    let nz = a.n_heights();
    let mut g = vec![0.0; nz * nz];
    for i in 0..nz {
        let ai = a.column_slice(i);
        for k in i..nz {
            let s: Complex64 = ai.iter().zip(a.column_slice(k)).map(|(x, y)| x.conj() * y).sum();
            let v = s.norm_sqr();
            g[i * nz + k] = v;
            g[k * nz + i] = v;
        }
    }
    g
}

/// Lipschitz constant `2 λ_max(Ψᵀ G Ψ)` of the data-term gradient from 50
/// power iterations. Orthonormal `Ψ` leaves the spectrum of `G` unchanged, so
/// the iteration runs on `G` directly.
pub fn lipschitz_estimate(a: &SteeringMatrix, basis: &WaveletBasis) -> Result<f64> {
    if basis.len() != a.n_heights() {
        return Err(TomoError::dim("basis size differs from number of heights"));
    }
    let nz = a.n_heights();
    let g = steering_gram(a);
    let mut v = vec![1.0 / (nz as f64).sqrt(); nz];
    let mut w = vec![0.0; nz];
    let mut rayleigh = 0.0;
    for _ in 0..POWER_ITERATIONS {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = g[i * nz..(i + 1) * nz].iter().zip(&v).map(|(x, y)| x * y).sum();
        }
        rayleigh = w.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / norm);
    }
    Ok(2.0 * rayleigh)
}

/// Scale-free default weight `1e-2 · ‖Σ̂‖²_F / ‖Ψᵀ b‖_∞`.
pub fn default_lambda(a: &SteeringMatrix, sigma: &CMatrix, basis: &WaveletBasis) -> Result<f64> {
    check_dims(a, sigma, basis, None)?;
    let packed = PackedHermitian::new(sigma);
    let b: Vec<f64> = (0..a.n_heights()).map(|i| packed.quadratic(a.column_slice(i))).collect();
    let denom = basis.analyze(&b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(DEFAULT_LAMBDA_FACTOR * frobenius_sq(sigma) / denom)
}

/// `sign(v)·max(|v| − t, 0)` elementwise.
pub fn soft_threshold(v: &mut [f64], t: f64) {
    for x in v.iter_mut() {
        let mag = x.abs() - t;
        *x = if mag > 0.0 { mag.copysign(*x) } else { 0.0 };
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsSolution {
    pub alpha: Vec<f64>,
    /// `max(Ψα, 0)` when projection is enabled, otherwise `Ψα`.
    pub profile: Vec<f64>,
    pub lambda: f64,
    /// Objective at the start point and after every accepted step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub restarts: usize,
}

impl CsSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial objective")
    }
}

/// Monotone FISTA from `α = 0`. A step that would raise the objective is
/// discarded and the momentum restarted from the last accepted iterate.
pub fn fista_solve(sigma: &CMatrix, a: &SteeringMatrix, basis: &WaveletBasis, config: &CsConfig) -> Result<CsSolution> {
    let lipschitz = lipschitz_estimate(a, basis)?;
    fista_solve_with_lipschitz(sigma, a, basis, config, lipschitz)
}

/// As [`fista_solve`] with a precomputed Lipschitz constant (shared across
/// pixels that use the same steering matrix).
pub fn fista_solve_with_lipschitz(
    sigma: &CMatrix,
    a: &SteeringMatrix,
    basis: &WaveletBasis,
    config: &CsConfig,
    lipschitz: f64,
) -> Result<CsSolution> {
    config.validate()?;
    check_dims(a, sigma, basis, None)?;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(TomoError::numerical(format!("invalid Lipschitz constant {lipschitz}")));
    }
    let lambda = match config.lambda {
        Some(l) => l,
        None => default_lambda(a, sigma, basis)?,
    };
    let step = 1.0 / (STEP_MARGIN * lipschitz);
    let threshold = lambda * step;
    let nz = basis.len();

    let mut x = vec![0.0; nz];
    let (d0, mut residual_x) = data_term(a, sigma, &basis.synthesize(&x));
    let mut f_x = d0;
    let mut y = x.clone();
    let mut residual_y = residual_x.clone();
    let mut t = 1.0f64;
    let mut history = vec![f_x];
    let mut restarts = 0;
    let mut iterations = 0;

    for _ in 0..config.max_iter {
        iterations += 1;
        let grad = gradient_from_residual(a, &residual_y, basis);
        let mut z: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
        soft_threshold(&mut z, threshold);
        let (dz, residual_z) = data_term(a, sigma, &basis.synthesize(&z));
        let f_z = dz + lambda * l1(&z);
        if !f_z.is_finite() {
            return Err(TomoError::numerical("CS objective diverged"));
        }
        if f_z > f_x {
            if t == 1.0 {
                // A plain proximal step from the accepted iterate no longer
                // descends: converged to working precision.
                break;
            }
            restarts += 1;
            t = 1.0;
            y.copy_from_slice(&x);
            residual_y = residual_x.clone();
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for i in 0..nz {
            y[i] = z[i] + momentum * (z[i] - x[i]);
        }
        let converged = (f_x - f_z) <= config.rel_tol * f_x.abs().max(f64::MIN_POSITIVE);
        x = z;
        residual_x = residual_z;
        f_x = f_z;
        t = t_next;
        history.push(f_x);
        if converged {
            break;
        }
        residual_y = if momentum == 0.0 {
            residual_x.clone()
        } else {
            data_term(a, sigma, &basis.synthesize(&y)).1
        };
    }

    let mut profile = basis.synthesize(&x);
    if config.nonneg_projection {
        profile.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    Ok(CsSolution {
        alpha: x,
        profile,
        lambda,
        objective_history: history,
        iterations,
        restarts,
    })
}
