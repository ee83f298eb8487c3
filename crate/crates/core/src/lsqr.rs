//! Matrix-free LSQR (Paige & Saunders) for `min |b − A x|₂`.
//!
//! Only products with A and Aᵀ are used; AᵀA is never formed.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear map known only through its forward and adjoint products.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// y = A x
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// x = Aᵀ y
    fn apply_transpose(&self, y: &[f64], x: &mut [f64]);
}

pub struct DenseOperator<'a>(pub &'a DMatrix<f64>);

impl LinearOperator for DenseOperator<'_> {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = (0..self.0.ncols()).map(|c| self.0[(r, c)] * x[c]).sum();
        }
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        for (c, out) in x.iter_mut().enumerate() {
            *out = self.0.column(c).iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }
}

pub struct IdentityOperator(pub usize);

impl LinearOperator for IdentityOperator {
    fn nrows(&self) -> usize {
        self.0
    }

    fn ncols(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        x.copy_from_slice(y);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsqrConfig {
    pub tol: f64,
    /// `None` means `10 · ncols`; model fits default to `10 · (s + n)`.
    pub max_iter: Option<usize>,
}

impl Default for LsqrConfig {
    fn default() -> Self {
        LsqrConfig {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ZeroSolution,
    ResidualSmall,
    NormalResidualSmall,
    MachinePrecision,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsqrDiagnostics {
    pub iterations: usize,
    /// |b − A x|₂
    pub residual_norm: f64,
    /// |Aᵀ(b − A x)|₂
    pub normal_residual_norm: f64,
    /// Frobenius-norm estimate of A.
    pub operator_norm: f64,
    pub stop: StopReason,
}

impl LsqrDiagnostics {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIterations
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Solves `min |rhs − A x|₂`, optionally from a starting point.
///
/// Stops when `|r| ≤ tol·(|b| + |A||x|)` or `|Aᵀr| ≤ tol·|A||r|`. Exhausting
/// the iteration budget is not an error: the last iterate is returned with
/// [`StopReason::MaxIterations`].
pub fn lsqr_solve<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    x0: Option<&[f64]>,
    config: &LsqrConfig,
) -> Result<(Vec<f64>, LsqrDiagnostics)> {
    let (m, n) = (op.nrows(), op.ncols());
    if rhs.len() != m {
        return Err(Error::dims("LSQR right-hand side", m, rhs.len()));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("LSQR tolerance must be positive, got {}", config.tol)));
    }
    let max_iter = config.max_iter.unwrap_or(10 * n).max(1);
    let atol = config.tol;
    let btol = config.tol;

    let mut x = vec![0.0; n];
    let mut u = rhs.to_vec();
    if let Some(start) = x0 {
        if start.len() != n {
            return Err(Error::dims("LSQR starting point", n, start.len()));
        }
        x.copy_from_slice(start);
        let mut ax = vec![0.0; m];
        op.apply(&x, &mut ax);
        for (ui, a) in u.iter_mut().zip(&ax) {
            *ui -= a;
        }
    }
    let bnorm = norm2(rhs);
    let mut beta = norm2(&u);
    let mut v = vec![0.0; n];
    let mut alpha = 0.0;
    if beta > 0.0 {
        scale(&mut u, 1.0 / beta);
        op.apply_transpose(&u, &mut v);
        alpha = norm2(&v);
    }
    if alpha > 0.0 {
        scale(&mut v, 1.0 / alpha);
    }
    let mut w = v.clone();

    let mut diag = LsqrDiagnostics {
        iterations: 0,
        residual_norm: beta,
        normal_residual_norm: alpha * beta,
        operator_norm: 0.0,
        stop: StopReason::ZeroSolution,
    };
    if alpha * beta == 0.0 {
        return Ok((x, diag));
    }

    let mut rhobar = alpha;
    let mut phibar = beta;
    let mut anorm: f64 = 0.0;
    let mut ddnorm = 0.0;
    let mut xxnorm = 0.0;
    let mut z = 0.0;
    let mut cs2 = -1.0;
    let mut sn2 = 0.0;
    let mut av = vec![0.0; m];
    let mut atu = vec![0.0; n];
    // the residual bound uses |b| of the shifted problem
    let bnorm_eff = if x0.is_some() { diag.residual_norm.max(bnorm) } else { bnorm };

    let mut itn = 0;
    loop {
        itn += 1;
        op.apply(&v, &mut av);
        for (ui, a) in u.iter_mut().zip(&av) {
            *ui = a - alpha * *ui;
        }
        beta = norm2(&u);
        if beta > 0.0 {
            scale(&mut u, 1.0 / beta);
            anorm = (anorm * anorm + alpha * alpha + beta * beta).sqrt();
            op.apply_transpose(&u, &mut atu);
            for (vi, a) in v.iter_mut().zip(&atu) {
                *vi = a - beta * *vi;
            }
            alpha = norm2(&v);
            if alpha > 0.0 {
                scale(&mut v, 1.0 / alpha);
            }
        }

        let rho = rhobar.hypot(beta);
        let cs = rhobar / rho;
        let sn = beta / rho;
        let theta = sn * alpha;
        rhobar = -cs * alpha;
        let phi = cs * phibar;
        phibar *= sn;
        let tau = sn * phi;

        let t1 = phi / rho;
        let t2 = -theta / rho;
        let mut dk2 = 0.0;
        for ((xi, wi), vi) in x.iter_mut().zip(w.iter_mut()).zip(&v) {
            let dk = *wi / rho;
            dk2 += dk * dk;
            *xi += t1 * *wi;
            *wi = vi + t2 * *wi;
        }
        ddnorm += dk2;

        // running estimate of |x|
        let delta = sn2 * rho;
        let gambar = -cs2 * rho;
        let rhs_z = phi - delta * z;
        let zbar = rhs_z / gambar;
        let xnorm = (xxnorm + zbar * zbar).sqrt();
        let gamma = gambar.hypot(theta);
        cs2 = gambar / gamma;
        sn2 = theta / gamma;
        z = rhs_z / gamma;
        xxnorm += z * z;

        let acond = anorm * ddnorm.sqrt();
        let rnorm = phibar.abs();
        let arnorm = alpha * tau.abs();
        let test1 = rnorm / bnorm_eff;
        let test2 = if rnorm > 0.0 { arnorm / (anorm * rnorm) } else { 0.0 };
        let test3 = 1.0 / acond;
        let t1n = test1 / (1.0 + anorm * xnorm / bnorm_eff);
        let rtol = btol + atol * anorm * xnorm / bnorm_eff;

        diag.iterations = itn;
        diag.residual_norm = rnorm;
        diag.normal_residual_norm = arnorm;
        diag.operator_norm = anorm;

        let stop = if test1 <= rtol {
            Some(StopReason::ResidualSmall)
        } else if test2 <= atol {
            Some(StopReason::NormalResidualSmall)
        } else if 1.0 + t1n <= 1.0 || 1.0 + test2 <= 1.0 || 1.0 + test3 <= 1.0 {
            Some(StopReason::MachinePrecision)
        } else if itn >= max_iter {
            Some(StopReason::MaxIterations)
        } else {
            None
        };
        if let Some(reason) = stop {
            diag.stop = reason;
            break;
        }
    }
    Ok((x, diag))
}
