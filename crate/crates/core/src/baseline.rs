//! FPCA in the mass-weighted inner product, followed by two-class LDA on the
//! component scores.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::classifier::{center_rows, class_counts, column_means, Label};
use crate::error::{Error, Result};
use crate::fem::FemOperators;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel {
    /// M-orthonormal components, one per entry.
    pub components: Vec<Vec<f64>>,
    /// Descending sample variances of the component scores.
    pub variances: Vec<f64>,
    pub mean_coeffs: Vec<f64>,
    /// Set when fewer than the requested components were numerically available.
    pub truncated: bool,
}

impl FpcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }
}

/// Relative eigenvalue floor for the numerical rank of the dual problem.
pub const RANK_TOLERANCE: f64 = 1e-10;

fn rows_times_mass(x: &DMatrix<f64>, ops: &FemOperators) -> DMatrix<f64> {
    let s = ops.dim();
    let mut out = DMatrix::zeros(x.nrows(), s);
    let mut buf = vec![0.0; s];
    for r in 0..x.nrows() {
        let row: Vec<f64> = x.row(r).iter().copied().collect();
        ops.mass.mul_vec_into(&row, &mut buf);
        for c in 0..s {
            out[(r, c)] = buf[c];
        }
    }
    out
}

/// Top-`k` principal components through the n×n dual problem
/// `G = (1/n) X_c M X_cᵀ`.
pub fn fpca_fit(coeffs: &DMatrix<f64>, ops: &FemOperators, k: usize) -> Result<FpcaModel> {
    let (n, s) = (coeffs.nrows(), coeffs.ncols());
    if s != ops.dim() {
        return Err(Error::dims("coefficient columns", ops.dim(), s));
    }
    if k == 0 || k > n.min(s) {
        return Err(Error::InvalidArgument(format!(
            "number of components must be in [1, {}], got {k}",
            n.min(s)
        )));
    }
    let mean_coeffs = column_means(coeffs);
    let xc = center_rows(coeffs, &mean_coeffs);
    let xm = rows_times_mass(&xc, ops);
    let g = (&xc * xm.transpose()) / n as f64;
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] > RANK_TOLERANCE * top && top > 0.0)
        .count();
    let kept = k.min(rank);

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(kept);
    let mut variances = Vec::with_capacity(kept);
    for &idx in order.iter().take(kept) {
        let lam = eig.eigenvalues[idx];
        let u: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let mut comp: Vec<f64> = (xc.transpose() * &u).iter().map(|v| v / (n as f64 * lam).sqrt()).collect();
        // two passes of M-weighted Gram–Schmidt against earlier components
        for _ in 0..2 {
            for prev in &components {
                let proj = ops.l2_inner(prev, &comp)?;
                comp.iter_mut().zip(prev).for_each(|(c, p)| *c -= proj * p);
            }
            let nrm = ops.l2_inner(&comp, &comp)?.sqrt();
            comp.iter_mut().for_each(|c| *c /= nrm);
        }
        let scale = comp.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = comp.iter().find(|v| v.abs() > 1e-8 * scale) {
            if *first < 0.0 {
                comp.iter_mut().for_each(|v| *v = -*v);
            }
        }
        components.push(comp);
        variances.push(lam);
    }
    Ok(FpcaModel {
        components,
        variances,
        mean_coeffs,
        truncated: kept < k,
    })
}

/// Total M-weighted variance `(1/n) trace(X_c M X_cᵀ)`.
pub fn total_variance(coeffs: &DMatrix<f64>, ops: &FemOperators) -> Result<f64> {
    let mean = column_means(coeffs);
    let xc = center_rows(coeffs, &mean);
    let mut total = 0.0;
    for r in 0..xc.nrows() {
        let row: Vec<f64> = xc.row(r).iter().copied().collect();
        total += ops.l2_inner(&row, &row)?;
    }
    Ok(total / coeffs.nrows() as f64)
}

/// `scores_il = (x_i − x̄)ᵀ M comp_l`
pub fn fpca_scores(model: &FpcaModel, ops: &FemOperators, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = model.mean_coeffs.len();
    if coeffs.ncols() != s {
        return Err(Error::dims("coefficient columns", s, coeffs.ncols()));
    }
    if ops.dim() != s {
        return Err(Error::dims("FE operators", s, ops.dim()));
    }
    let mcomp: Vec<Vec<f64>> = model
        .components
        .iter()
        .map(|c| ops.mass.mul_vec(c))
        .collect::<Result<_>>()?;
    let offsets: Vec<f64> = mcomp
        .iter()
        .map(|m| m.iter().zip(&model.mean_coeffs).map(|(a, b)| a * b).sum())
        .collect();
    Ok(DMatrix::from_fn(coeffs.nrows(), model.k(), |r, l| {
        coeffs.row(r).iter().zip(&mcomp[l]).map(|(a, b)| a * b).sum::<f64>() - offsets[l]
    }))
}

/// M-weighted squared reconstruction error of the data from k components.
pub fn reconstruction_error(model: &FpcaModel, ops: &FemOperators, coeffs: &DMatrix<f64>) -> Result<f64> {
    let scores = fpca_scores(model, ops, coeffs)?;
    let mut total = 0.0;
    for r in 0..coeffs.nrows() {
        let mut resid: Vec<f64> = coeffs
            .row(r)
            .iter()
            .zip(&model.mean_coeffs)
            .map(|(x, m)| x - m)
            .collect();
        for (l, comp) in model.components.iter().enumerate() {
            let w = scores[(r, l)];
            resid.iter_mut().zip(comp).for_each(|(v, c)| *v -= w * c);
        }
        total += ops.l2_inner(&resid, &resid)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weight: Vec<f64>,
    pub intercept: f64,
    pub priors: [f64; 2],
    pub ridge: f64,
}

/// Ridge added to the pooled covariance, relative to `trace(Σ_pooled)/k`.
pub const DEFAULT_LDA_RIDGE: f64 = 1e-8;

/// Two-class LDA: `w = (Σ_pooled + ridge·I)⁻¹ (m₂ − m₁)`.
///
/// `ridge = None` uses the default relative ridge; `Some(0.0)` disables it.
pub fn lda_fit(scores: &DMatrix<f64>, labels: &[Label], ridge: Option<f64>) -> Result<LdaModel> {
    let (n, k) = (scores.nrows(), scores.ncols());
    if labels.len() != n {
        return Err(Error::dims("label count", n, labels.len()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("LDA needs at least one feature".into()));
    }
    let (n1, n2) = class_counts(labels);
    if n1 == 0 || n2 == 0 {
        return Err(Error::SingleClass);
    }
    let mut m1 = DVector::zeros(k);
    let mut m2 = DVector::zeros(k);
    for (r, &l) in labels.iter().enumerate() {
        let z = scores.row(r).transpose();
        match l {
            Label::G1 => m1 += z,
            Label::G2 => m2 += z,
        }
    }
    m1 /= n1 as f64;
    m2 /= n2 as f64;
    let mut pooled = DMatrix::zeros(k, k);
    for (r, &l) in labels.iter().enumerate() {
        let d = scores.row(r).transpose() - if l == Label::G1 { &m1 } else { &m2 };
        pooled += &d * d.transpose();
    }
    let dof = (n as f64 - 2.0).max(1.0);
    pooled /= dof;
    let ridge = match ridge {
        Some(r) => r,
        None => DEFAULT_LDA_RIDGE * pooled.trace() / k as f64,
    };
    for i in 0..k {
        pooled[(i, i)] += ridge;
    }
    let diff = &m2 - &m1;
    let weight = if diff.iter().all(|v| *v == 0.0) {
        DVector::zeros(k)
    } else {
        match pooled.clone().cholesky() {
            Some(ch) => ch.solve(&diff),
            None => return Err(Error::SingularCovariance),
        }
    };
    if weight.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    let mid = (&m1 + &m2) * 0.5;
    let intercept = -weight.dot(&mid);
    Ok(LdaModel {
        weight: weight.iter().copied().collect(),
        intercept,
        priors: [n1 as f64 / n as f64, n2 as f64 / n as f64],
        ridge,
    })
}

/// `wᵀ(z − (m₁+m₂)/2)`; larger means class g₂.
pub fn lda_score(model: &LdaModel, z: &[f64]) -> Result<f64> {
    if z.len() != model.weight.len() {
        return Err(Error::dims("LDA score row", model.weight.len(), z.len()));
    }
    Ok(model.weight.iter().zip(z).map(|(w, v)| w * v).sum::<f64>() + model.intercept)
}

/// FPCA(k) followed by LDA, as one fitted pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaLdaModel {
    pub fpca: FpcaModel,
    pub lda: LdaModel,
}

pub fn fpca_lda_fit(coeffs: &DMatrix<f64>, labels: &[Label], ops: &FemOperators, k: usize) -> Result<FpcaLdaModel> {
    let fpca = fpca_fit(coeffs, ops, k)?;
    let scores = fpca_scores(&fpca, ops, coeffs)?;
    let lda = lda_fit(&scores, labels, None)?;
    Ok(FpcaLdaModel { fpca, lda })
}

impl FpcaLdaModel {
    pub fn score_rows(&self, ops: &FemOperators, coeffs: &DMatrix<f64>) -> Result<Vec<f64>> {
        let z = fpca_scores(&self.fpca, ops, coeffs)?;
        (0..z.nrows())
            .map(|r| {
                let row: Vec<f64> = z.row(r).iter().copied().collect();
                lda_score(&self.lda, &row)
            })
            .collect()
    }
}
