//! Laplace–Beltrami eigenpairs from the generalized problem `S e = θ M e`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemOperators;

/// Ascending eigenvalues with M-orthonormal eigenvectors (FE coefficients).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,eigenvalue\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{},{:.16e}", i + 1, v);
        }
        out
    }
}

/// Residual tolerance scale for accepted eigenpairs.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// The `k` smallest generalized eigenpairs, computed by dense reduction.
///
/// Cholesky of M turns the pencil into a standard symmetric problem, which
/// is diagonalized in full. Each eigenvector is signed so its first
/// significant coefficient is positive.
pub fn laplace_beltrami_eigs(ops: &FemOperators, k: usize) -> Result<EigenBasis> {
    let s = ops.dim();
    if k == 0 || k > s {
        return Err(Error::InvalidArgument(format!(
            "number of eigenpairs must be in [1, {s}], got {k}"
        )));
    }
    let m = ops.mass.to_dense();
    let st = ops.stiffness.to_dense();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ S L⁻ᵀ
    let linv_s = l
        .solve_lower_triangular(&st)
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
    let c_t = l
        .solve_lower_triangular(&linv_s.transpose())
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
    let c = (&c_t + c_t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);

    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    let lt = l.transpose();
    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    let mut worst = 0.0f64;
    for &idx in order.iter().take(k) {
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let e = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
        let mut e: Vec<f64> = e.iter().copied().collect();
        let theta = eig.eigenvalues[idx].max(0.0);
        // renormalize in M to absorb rounding from the back-substitution
        let nrm = ops.l2_inner(&e, &e)?.sqrt();
        e.iter_mut().for_each(|v| *v /= nrm);
        let scale = e.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if let Some(first) = e.iter().find(|v| v.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                e.iter_mut().for_each(|v| *v = -*v);
            }
        }
        worst = worst.max(relative_residual(ops, &e, theta)? / (1.0 + theta));
        eigenvalues.push(theta);
        eigenvectors.push(e);
    }
    if worst > RESIDUAL_TOLERANCE {
        return Err(Error::ConvergenceFailure(format!(
            "eigenpair residual {worst:e} exceeds {RESIDUAL_TOLERANCE:e}"
        )));
    }
    Ok(EigenBasis {
        eigenvalues,
        eigenvectors,
    })
}

/// `|S e − θ M e|₂ / |e|₂`
pub fn relative_residual(ops: &FemOperators, e: &[f64], theta: f64) -> Result<f64> {
    let se = ops.stiffness.mul_vec(e)?;
    let me = ops.mass.mul_vec(e)?;
    let r: f64 = se
        .iter()
        .zip(&me)
        .map(|(a, b)| (a - theta * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let en: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(r / en)
}

/// Gram matrix `eᵢᵀ M eⱼ` of a basis.
pub fn mass_gram(ops: &FemOperators, basis: &EigenBasis) -> Result<DMatrix<f64>> {
    let k = basis.len();
    let mut g = DMatrix::zeros(k, k);
    let me: Vec<Vec<f64>> = basis
        .eigenvectors
        .iter()
        .map(|e| ops.mass.mul_vec(e))
        .collect::<Result<_>>()?;
    for i in 0..k {
        for j in 0..k {
            g[(i, j)] = basis.eigenvectors[i].iter().zip(&me[j]).map(|(a, b)| a * b).sum();
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    #[test]
    fn constant_mode_first() {
        let ops = FemOperators::assemble(&icosphere(2, 1.0).unwrap(), None).unwrap();
        let b = laplace_beltrami_eigs(&ops, 1).unwrap();
        assert!(b.eigenvalues[0].abs() < 1e-8);
        let e = &b.eigenvectors[0];
        let spread = e.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - e.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread < 1e-8);
        assert!(e[0] > 0.0);
    }

    #[test]
    fn ascending_and_orthonormal() {
        let ops = FemOperators::assemble(&icosphere(1, 1.0).unwrap(), None).unwrap();
        let b = laplace_beltrami_eigs(&ops, 3).unwrap();
        assert!(b.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let g = mass_gram(&ops, &b).unwrap();
        assert!((g - DMatrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn k_out_of_range() {
        let ops = FemOperators::assemble(&icosphere(0, 1.0).unwrap(), None).unwrap();
        assert!(laplace_beltrami_eigs(&ops, 0).is_err());
        assert!(laplace_beltrami_eigs(&ops, 13).is_err());
    }

    #[test]
    fn csv_header() {
        let ops = FemOperators::assemble(&icosphere(0, 1.0).unwrap(), None).unwrap();
        let b = laplace_beltrami_eigs(&ops, 2).unwrap();
        assert!(b.to_csv().starts_with("index,eigenvalue\n1,"));
    }
}
