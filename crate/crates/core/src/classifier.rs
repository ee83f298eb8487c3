//! Penalized least-squares discriminant analysis for functions on a mesh,
//! with an optional additive RKHS geometry term.
//!
//! Two-class LDA is recast as a regression on the auxiliary response
//! `y_i = −n/n₁` (class g₁) or `+n/n₂` (class g₂). The coefficients solve
//!
//! ```text
//! min ‖y − Σ c_G − X M c_F‖² + λ₁ c_Gᵀ Σ c_G + λ₂ c_Fᵀ (S M̃⁻¹ S + ε M) c_F
//! ```
//!
//! written as one stacked least-squares problem and handed to LSQR.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::lsqr::{lsqr_solve, LinearOperator, LsqrConfig, LsqrDiagnostics};
use crate::rkhs::{GeometrySet, VectorFieldRepr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    G1,
    G2,
}

impl Label {
    pub fn swapped(self) -> Label {
        match self {
            Label::G1 => Label::G2,
            Label::G2 => Label::G1,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Label::G1 => 1,
            Label::G2 => 2,
        }
    }

    pub fn from_code(code: &str) -> Option<Label> {
        match code.trim() {
            "1" | "g1" | "G1" => Some(Label::G1),
            "2" | "g2" | "G2" => Some(Label::G2),
            _ => None,
        }
    }
}

pub fn class_counts(labels: &[Label]) -> (usize, usize) {
    let n1 = labels.iter().filter(|&&l| l == Label::G1).count();
    (n1, labels.len() - n1)
}

/// n samples of FE coefficients (one per row), labels and optional geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFunctionalData {
    pub coeffs: DMatrix<f64>,
    pub labels: Vec<Label>,
    pub geometry: Option<GeometrySet>,
}

impl LabeledFunctionalData {
    pub fn new(coeffs: DMatrix<f64>, labels: Vec<Label>, geometry: Option<GeometrySet>) -> Result<Self> {
        let data = LabeledFunctionalData {
            coeffs,
            labels,
            geometry,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.coeffs.nrows();
        if self.labels.len() != n {
            return Err(Error::dims("label count", n, self.labels.len()));
        }
        if n < 2 {
            return Err(Error::InvalidArgument("at least two samples are required".into()));
        }
        let (n1, n2) = class_counts(&self.labels);
        if n1 == 0 || n2 == 0 {
            return Err(Error::SingleClass);
        }
        if let Some(r) = (0..n).find(|&r| self.coeffs.row(r).iter().any(|v| !v.is_finite())) {
            return Err(Error::Validation {
                element: "sample",
                index: r,
                message: "non-finite coefficient".into(),
            });
        }
        if let Some(g) = &self.geometry {
            if g.len() != n {
                return Err(Error::dims("geometry field count", n, g.len()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coeffs.ncols()
    }

    /// Rows in the given order, geometry included.
    pub fn select(&self, rows: &[usize]) -> Self {
        let coeffs = self.coeffs.select_rows(rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let geometry = self.geometry.as_ref().map(|g| g.select(rows));
        LabeledFunctionalData {
            coeffs,
            labels,
            geometry,
        }
    }

    pub fn with_swapped_labels(&self) -> Self {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|l| *l = l.swapped());
        out
    }

    pub fn without_geometry(&self) -> Self {
        let mut out = self.clone();
        out.geometry = None;
        out
    }
}

/// `y_i = −n/n₁` for g₁ and `+n/n₂` for g₂.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryResponse {
    pub y: Vec<f64>,
}

pub fn encode_labels(labels: &[Label]) -> Result<AuxiliaryResponse> {
    let (n1, n2) = class_counts(labels);
    if n1 == 0 || n2 == 0 {
        return Err(Error::SingleClass);
    }
    let n = labels.len() as f64;
    let (neg, pos) = (-n / n1 as f64, n / n2 as f64);
    let y = labels
        .iter()
        .map(|l| match l {
            Label::G1 => neg,
            Label::G2 => pos,
        })
        .collect();
    Ok(AuxiliaryResponse { y })
}

/// Column means of the coefficient matrix.
pub fn column_means(coeffs: &DMatrix<f64>) -> Vec<f64> {
    let n = coeffs.nrows() as f64;
    (0..coeffs.ncols()).map(|c| coeffs.column(c).sum() / n).collect()
}

pub fn center_rows(coeffs: &DMatrix<f64>, mean: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(coeffs.nrows(), coeffs.ncols(), |r, c| coeffs[(r, c)] - mean[c])
}

/// Symmetric PSD square root; eigenvalues below `−1e-10·trace` are an error,
/// the remaining negative ones are clamped to zero.
pub fn psd_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    let sym = (sigma + sigma.transpose()) * 0.5;
    let trace = sym.trace().abs();
    let eig = SymmetricEigen::new(sym);
    let floor = -1e-10 * trace.max(f64::MIN_POSITIVE);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < floor {
            return Err(Error::Validation {
                element: "gram",
                index: 0,
                message: format!("Gram matrix is not positive semidefinite (eigenvalue {v:e})"),
            });
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = q.column(k);
        out += vals[k] * &col * col.transpose();
    }
    Ok((&out + out.transpose()) * 0.5)
}

/// Geometry blocks of the stacked system.
struct GeometryBlocks {
    gram: DMatrix<f64>,
    gram_sqrt: DMatrix<f64>,
    sqrt_lambda1: f64,
}

/// The stacked operator
///
/// ```text
/// [ Σ            X M         ]   rows: n
/// [ 0            √λ₂ M̃^{-1/2} S ]       s
/// [ 0            √(λ₂ε) Lᵀ    ]       s   (M = L Lᵀ)
/// [ √λ₁ Σ^{1/2}  0           ]       n   (bivariate only)
/// ```
///
/// acting on `(c_G, c_F)`; the univariate model has no c_G columns.
pub struct AugmentedSystem<'a> {
    ops: &'a FemOperators,
    coeffs: &'a DMatrix<f64>,
    sqrt_lambda2: f64,
    sqrt_lambda2_eps: f64,
    inv_sqrt_lumped: Vec<f64>,
    geometry: Option<GeometryBlocks>,
}

impl<'a> AugmentedSystem<'a> {
    pub fn n(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn s(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn is_bivariate(&self) -> bool {
        self.geometry.is_some()
    }

    /// Number of c_G unknowns (0 for the univariate model).
    pub fn geometry_dim(&self) -> usize {
        if self.geometry.is_some() {
            self.n()
        } else {
            0
        }
    }

    /// Splits a solution vector into `(c_G, c_F)`.
    pub fn split<'v>(&self, x: &'v [f64]) -> (&'v [f64], &'v [f64]) {
        x.split_at(self.geometry_dim())
    }

    /// Densely assembled A, for small instances and testing.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let cols = self.ncols();
        let mut a = DMatrix::zeros(self.nrows(), cols);
        let mut e = vec![0.0; cols];
        let mut col = vec![0.0; self.nrows()];
        for c in 0..cols {
            e[c] = 1.0;
            self.apply(&e, &mut col);
            a.set_column(c, &DVector::from_column_slice(&col));
            e[c] = 0.0;
        }
        a
    }
}

fn dense_mul(a: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let n = a.ncols();
    for (r, out) in y.iter_mut().enumerate() {
        let mut acc = 0.0;
        for c in 0..n {
            acc += a[(r, c)] * x[c];
        }
        *out = acc;
    }
}

fn dense_mul_t(a: &DMatrix<f64>, y: &[f64], x: &mut [f64]) {
    for (c, out) in x.iter_mut().enumerate() {
        *out = a.column(c).iter().zip(y).map(|(p, q)| p * q).sum();
    }
}

impl LinearOperator for AugmentedSystem<'_> {
    fn nrows(&self) -> usize {
        self.n() + 2 * self.s() + self.geometry_dim()
    }

    fn ncols(&self) -> usize {
        self.geometry_dim() + self.s()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, s) = (self.n(), self.s());
        let (cg, cf) = self.split(x);
        let (data, rest) = y.split_at_mut(n);
        let (pen, rest) = rest.split_at_mut(s);
        let (shrink, geo) = rest.split_at_mut(s);

        let mut mcf = vec![0.0; s];
        self.ops.mass.mul_vec_into(cf, &mut mcf);
        dense_mul(self.coeffs, &mcf, data);
        if let Some(g) = &self.geometry {
            let mut tmp = vec![0.0; n];
            dense_mul(&g.gram, cg, &mut tmp);
            for (d, t) in data.iter_mut().zip(&tmp) {
                *d += t;
            }
            dense_mul(&g.gram_sqrt, cg, geo);
            geo.iter_mut().for_each(|v| *v *= g.sqrt_lambda1);
        }

        self.ops.stiffness.mul_vec_into(cf, pen);
        for (p, w) in pen.iter_mut().zip(&self.inv_sqrt_lumped) {
            *p *= self.sqrt_lambda2 * w;
        }

        self.ops.mass_factor().lt_mul_into(cf, shrink);
        shrink.iter_mut().for_each(|v| *v *= self.sqrt_lambda2_eps);
    }

    fn apply_transpose(&self, y: &[f64], x: &mut [f64]) {
        let (n, s) = (self.n(), self.s());
        let gdim = self.geometry_dim();
        let (data, rest) = y.split_at(n);
        let (pen, rest) = rest.split_at(s);
        let (shrink, geo) = rest.split_at(s);
        let (cg, cf) = x.split_at_mut(gdim);

        // c_F = M Xᵀ w₁ + √λ₂ S M̃^{-1/2} w₂ + √(λ₂ε) L w₃
        let mut xt = vec![0.0; s];
        dense_mul_t(self.coeffs, data, &mut xt);
        self.ops.mass.mul_vec_into(&xt, cf);

        let scaled: Vec<f64> = pen
            .iter()
            .zip(&self.inv_sqrt_lumped)
            .map(|(p, w)| self.sqrt_lambda2 * w * p)
            .collect();
        let mut tmp = vec![0.0; s];
        self.ops.stiffness.transpose_mul_vec_into(&scaled, &mut tmp);
        for (c, t) in cf.iter_mut().zip(&tmp) {
            *c += t;
        }
        self.ops.mass_factor().l_mul_into(shrink, &mut tmp);
        for (c, t) in cf.iter_mut().zip(&tmp) {
            *c += self.sqrt_lambda2_eps * t;
        }

        if let Some(g) = &self.geometry {
            dense_mul_t(&g.gram, data, cg);
            let mut t2 = vec![0.0; n];
            dense_mul_t(&g.gram_sqrt, geo, &mut t2);
            for (c, t) in cg.iter_mut().zip(&t2) {
                *c += g.sqrt_lambda1 * t;
            }
        }
    }
}

/// Builds the stacked operator and right-hand side `(y, 0, 0, 0)`.
///
/// `coeffs` must already be centered; `gram` is the Gram matrix of the
/// centered geometry fields and is required exactly when `lambda1` is given.
pub fn build_augmented_system<'a>(
    coeffs: &'a DMatrix<f64>,
    response: &AuxiliaryResponse,
    gram: Option<&DMatrix<f64>>,
    ops: &'a FemOperators,
    lambda1: Option<f64>,
    lambda2: f64,
) -> Result<(AugmentedSystem<'a>, Vec<f64>)> {
    let n = coeffs.nrows();
    if coeffs.ncols() != ops.dim() {
        return Err(Error::dims("coefficient columns", ops.dim(), coeffs.ncols()));
    }
    if response.y.len() != n {
        return Err(Error::dims("response length", n, response.y.len()));
    }
    if !(lambda2 > 0.0 && lambda2.is_finite()) {
        return Err(Error::NonPositivePenalty(format!("lambda2 must be positive, got {lambda2}")));
    }
    let geometry = match (gram, lambda1) {
        (Some(g), Some(l1)) => {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::dims("Gram matrix size", n, g.nrows()));
            }
            if !(l1 > 0.0 && l1.is_finite()) {
                return Err(Error::NonPositivePenalty(format!("lambda1 must be positive, got {l1}")));
            }
            Some(GeometryBlocks {
                gram: g.clone(),
                gram_sqrt: psd_sqrt(g)?,
                sqrt_lambda1: l1.sqrt(),
            })
        }
        (None, None) => None,
        (Some(_), None) => {
            return Err(Error::InvalidArgument("lambda1 is required when geometry is present".into()))
        }
        (None, Some(_)) => {
            return Err(Error::MissingGeometry("lambda1 given but no geometry supplied".into()))
        }
    };
    let system = AugmentedSystem {
        ops,
        coeffs,
        sqrt_lambda2: lambda2.sqrt(),
        sqrt_lambda2_eps: (lambda2 * ops.epsilon).sqrt(),
        inv_sqrt_lumped: ops.lumped_mass_diag.iter().map(|m| 1.0 / m.sqrt()).collect(),
        geometry,
    };
    let mut rhs = vec![0.0; system.nrows()];
    rhs[..n].copy_from_slice(&response.y);
    Ok((system, rhs))
}

/// Data-scaled reference for λ₂: `‖X M‖_F² / trace(S M̃⁻¹ S + ε M)`.
pub fn reference_lambda(centered: &DMatrix<f64>, ops: &FemOperators) -> Result<f64> {
    if centered.ncols() != ops.dim() {
        return Err(Error::dims("coefficient columns", ops.dim(), centered.ncols()));
    }
    let mut fro = 0.0;
    let mut xm = vec![0.0; ops.dim()];
    for r in 0..centered.nrows() {
        let row: Vec<f64> = centered.row(r).iter().copied().collect();
        ops.mass.mul_vec_into(&row, &mut xm);
        fro += xm.iter().map(|v| v * v).sum::<f64>();
    }
    let t = ops.penalty_trace();
    if !(fro > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument("degenerate data or penalty for reference lambda".into()));
    }
    Ok(fro / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Youden,
    FixedSpecificity { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    /// No threshold improves on a constant classifier.
    pub degenerate: bool,
}

/// Picks a cut-off for the rule `score > t ⇒ g₂`.
///
/// Youden maximizes sensitivity + specificity − 1 and returns the midpoint of
/// the first maximal run of optimal intervals. FixedSpecificity returns the
/// smallest t whose specificity reaches q.
pub fn choose_threshold(scores: &[f64], labels: &[Label], rule: ThresholdRule) -> Result<ThresholdChoice> {
    if scores.len() != labels.len() {
        return Err(Error::dims("label count", scores.len(), labels.len()));
    }
    let (n1, n2) = class_counts(labels);
    if n1 == 0 || n2 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    match rule {
        ThresholdRule::FixedSpecificity { q } => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidArgument(format!("specificity must be in [0, 1], got {q}")));
            }
            let mut neg: Vec<f64> = order
                .iter()
                .filter(|&&i| labels[i] == Label::G1)
                .map(|&i| scores[i])
                .collect();
            neg.sort_by(f64::total_cmp);
            let need = ((q * n1 as f64) - 1e-12).ceil().max(0.0) as usize;
            let threshold = if need == 0 {
                // any threshold below the smallest score qualifies; take the
                // smallest observed score so the value stays finite
                scores[order[0]]
            } else {
                neg[need - 1]
            };
            Ok(ThresholdChoice {
                threshold,
                degenerate: false,
            })
        }
        ThresholdRule::Youden => {
            // unique sorted values with class counts
            let mut uniq: Vec<(f64, usize, usize)> = Vec::new();
            for &i in &order {
                let (c1, c2) = if labels[i] == Label::G1 { (1, 0) } else { (0, 1) };
                match uniq.last_mut() {
                    Some(last) if last.0 == scores[i] => {
                        last.1 += c1;
                        last.2 += c2;
                    }
                    _ => uniq.push((scores[i], c1, c2)),
                }
            }
            // interval k (0..=m) is [u_{k-1}, u_k): everything up to u_{k-1} is called g₁
            let m = uniq.len();
            let mut j = Vec::with_capacity(m + 1);
            let (mut below1, mut below2) = (0usize, 0usize);
            j.push(0.0);
            for &(_, c1, c2) in &uniq {
                below1 += c1;
                below2 += c2;
                let spec = below1 as f64 / n1 as f64;
                let sens = (n2 - below2) as f64 / n2 as f64;
                j.push(sens + spec - 1.0);
            }
            let best = j.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-12;
            let start = j.iter().position(|&v| v >= best - tol).unwrap_or(0);
            let mut end = start;
            while end < m && j[end + 1] >= best - tol {
                end += 1;
            }
            let lower = if start == 0 { None } else { Some(uniq[start - 1].0) };
            let upper = if end == m { None } else { Some(uniq[end].0) };
            let threshold = match (lower, upper) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => uniq[0].0,
            };
            Ok(ThresholdChoice {
                threshold,
                degenerate: best <= tol,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Geometry penalty; `None` removes the geometric blocks altogether.
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub solver: LsqrConfig,
    pub threshold: ThresholdRule,
}

impl FitConfig {
    pub fn univariate(lambda2: f64) -> Self {
        FitConfig {
            lambda1: None,
            lambda2,
            solver: LsqrConfig::default(),
            threshold: ThresholdRule::Youden,
        }
    }

    pub fn bivariate(lambda1: f64, lambda2: f64) -> Self {
        FitConfig {
            lambda1: Some(lambda1),
            ..FitConfig::univariate(lambda2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub iters: usize,
    pub residual: f64,
    pub normal_residual: f64,
    pub converged: bool,
}

impl From<LsqrDiagnostics> for SolverInfo {
    fn from(d: LsqrDiagnostics) -> Self {
        SolverInfo {
            iters: d.iterations,
            residual: d.residual_norm,
            normal_residual: d.normal_residual_norm,
            converged: d.converged(),
        }
    }
}

/// A fitted discriminant direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantModel {
    pub lambda1: Option<f64>,
    pub lambda2: f64,
    pub epsilon: f64,
    pub threshold: f64,
    #[serde(rename = "c_F")]
    pub c_f: Vec<f64>,
    #[serde(rename = "c_G")]
    pub c_g: Option<Vec<f64>>,
    pub mean_coeffs: Vec<f64>,
    pub solver: SolverInfo,
    /// v̄, present for bivariate models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_geometry: Option<VectorFieldRepr>,
    /// Centered training fields `v_i − v̄`, the basis of β̂^G.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_geometry: Option<Vec<VectorFieldRepr>>,
    #[serde(default)]
    pub training_scores: Vec<f64>,
}

impl DiscriminantModel {
    pub fn is_bivariate(&self) -> bool {
        self.c_g.is_some()
    }

    /// `⟨v − v̄, v_i − v̄⟩` for each training field.
    pub fn geometry_pairing(&self, field: &VectorFieldRepr) -> Result<Vec<f64>> {
        let (Some(mean), Some(train)) = (&self.mean_geometry, &self.training_geometry) else {
            return Err(Error::MissingGeometry("model has no geometric component".into()));
        };
        train
            .iter()
            .map(|t| Ok(field.inner(t)? - mean.inner(t)?))
            .collect()
    }

    /// β̂^G as a single field: `Σ_i c_G,i (v_i − v̄)`, when the training
    /// fields share control points.
    pub fn geometry_direction(&self) -> Result<VectorFieldRepr> {
        let (Some(cg), Some(train)) = (&self.c_g, &self.training_geometry) else {
            return Err(Error::MissingGeometry("model has no geometric component".into()));
        };
        let first = train
            .first()
            .ok_or_else(|| Error::MissingGeometry("empty training geometry".into()))?;
        let mut momenta = vec![[0.0; 3]; first.momenta.len()];
        for (i, (w, f)) in cg.iter().zip(train).enumerate() {
            if !f.shares_control_points(first) {
                return Err(Error::Validation {
                    element: "field",
                    index: i,
                    message: "training fields do not share control points".into(),
                });
            }
            for (acc, a) in momenta.iter_mut().zip(&f.momenta) {
                for d in 0..3 {
                    acc[d] += w * a[d];
                }
            }
        }
        VectorFieldRepr::new(first.kernel, first.control_points.clone(), momenta)
    }

    pub fn classify(&self, score: f64) -> Label {
        if score > self.threshold {
            Label::G2
        } else {
            Label::G1
        }
    }
}

/// `(x − x̄)ᵀ M c_F + pairingᵀ c_G`
pub fn score(model: &DiscriminantModel, ops: &FemOperators, x_new: &[f64], pairing: Option<&[f64]>) -> Result<f64> {
    if x_new.len() != model.c_f.len() {
        return Err(Error::dims("sample length", model.c_f.len(), x_new.len()));
    }
    if ops.dim() != model.c_f.len() {
        return Err(Error::dims("FE operators", model.c_f.len(), ops.dim()));
    }
    let mc = ops.mass.mul_vec(&model.c_f)?;
    let mut total: f64 = x_new
        .iter()
        .zip(&model.mean_coeffs)
        .zip(&mc)
        .map(|((x, m), w)| (x - m) * w)
        .sum();
    match (&model.c_g, pairing) {
        (Some(cg), Some(p)) => {
            if p.len() != cg.len() {
                return Err(Error::dims("geometry pairing row", cg.len(), p.len()));
            }
            total += cg.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
        }
        (Some(_), None) => {
            return Err(Error::MissingGeometry("bivariate model needs a geometry pairing row".into()))
        }
        (None, _) => {}
    }
    Ok(total)
}

/// Scores every row of `coeffs`; geometry supplies the pairing rows.
pub fn score_rows(
    model: &DiscriminantModel,
    ops: &FemOperators,
    coeffs: &DMatrix<f64>,
    geometry: Option<&GeometrySet>,
) -> Result<Vec<f64>> {
    if coeffs.ncols() != model.c_f.len() {
        return Err(Error::dims("sample length", model.c_f.len(), coeffs.ncols()));
    }
    let mc = ops.mass.mul_vec(&model.c_f)?;
    let offset: f64 = model.mean_coeffs.iter().zip(&mc).map(|(a, b)| a * b).sum();
    let mut out = Vec::with_capacity(coeffs.nrows());
    for r in 0..coeffs.nrows() {
        let mut s: f64 = coeffs.row(r).iter().zip(&mc).map(|(a, b)| a * b).sum::<f64>() - offset;
        if let Some(cg) = &model.c_g {
            let g = geometry.ok_or_else(|| {
                Error::MissingGeometry("bivariate model needs geometry for every sample".into())
            })?;
            let row = model.geometry_pairing(&g.fields()[r])?;
            s += cg.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>();
        }
        out.push(s);
    }
    Ok(out)
}

/// Everything needed to solve and inspect one fit on centered data.
struct Prepared {
    centered: DMatrix<f64>,
    mean_coeffs: Vec<f64>,
    response: AuxiliaryResponse,
    gram: Option<DMatrix<f64>>,
    mean_geometry: Option<VectorFieldRepr>,
    centered_geometry: Option<GeometrySet>,
}

fn prepare(data: &LabeledFunctionalData, config: &FitConfig) -> Result<Prepared> {
    data.validate()?;
    let response = encode_labels(&data.labels)?;
    let mean_coeffs = column_means(&data.coeffs);
    let centered = center_rows(&data.coeffs, &mean_coeffs);
    let (gram, mean_geometry, centered_geometry) = match (&data.geometry, config.lambda1) {
        (Some(g), Some(_)) => {
            let mean = g.mean_field()?;
            let c = g.centered(&mean)?;
            (Some(c.gram().clone()), Some(mean), Some(c))
        }
        (_, None) => (None, None, None),
        (None, Some(_)) => {
            return Err(Error::MissingGeometry("lambda1 given but the data carry no geometry".into()))
        }
    };
    Ok(Prepared {
        centered,
        mean_coeffs,
        response,
        gram,
        mean_geometry,
        centered_geometry,
    })
}

/// Fits the univariate (`lambda1 = None`) or bivariate model.
pub fn fit(data: &LabeledFunctionalData, ops: &FemOperators, config: &FitConfig) -> Result<DiscriminantModel> {
    fit_warm(data, ops, config, None)
}

/// As [`fit`], starting LSQR from a previous solution `(c_G, c_F)` stacked.
pub fn fit_warm(
    data: &LabeledFunctionalData,
    ops: &FemOperators,
    config: &FitConfig,
    start: Option<&[f64]>,
) -> Result<DiscriminantModel> {
    let p = prepare(data, config)?;
    let (system, rhs) = build_augmented_system(
        &p.centered,
        &p.response,
        p.gram.as_ref(),
        ops,
        config.lambda1,
        config.lambda2,
    )?;
    let start = start.filter(|s| s.len() == system.ncols());
    let solver = LsqrConfig {
        max_iter: config.solver.max_iter.or(Some(10 * (data.dim() + data.len()))),
        ..config.solver
    };
    let (x, diag) = lsqr_solve(&system, &rhs, start, &solver)?;
    let (cg, cf) = system.split(&x);
    let c_g = system.is_bivariate().then(|| cg.to_vec());
    let c_f = cf.to_vec();

    // training scores from the centered data: Σ c_G + X M c_F
    let mut scores = vec![0.0; data.len()];
    let mcf = ops.mass.mul_vec(&c_f)?;
    dense_mul(&p.centered, &mcf, &mut scores);
    if let (Some(g), Some(cg)) = (&p.gram, &c_g) {
        let mut t = vec![0.0; data.len()];
        dense_mul(g, cg, &mut t);
        for (s, v) in scores.iter_mut().zip(&t) {
            *s += v;
        }
    }
    let threshold = choose_threshold(&scores, &data.labels, config.threshold)?.threshold;
    Ok(DiscriminantModel {
        lambda1: config.lambda1,
        lambda2: config.lambda2,
        epsilon: ops.epsilon,
        threshold,
        c_f,
        c_g,
        mean_coeffs: p.mean_coeffs,
        solver: diag.into(),
        mean_geometry: p.mean_geometry,
        training_geometry: p.centered_geometry.map(|g| g.fields().to_vec()),
        training_scores: scores,
    })
}

/// Stacked solution vector `(c_G, c_F)` of a model, for warm starts.
pub fn stacked_solution(model: &DiscriminantModel) -> Vec<f64> {
    let mut x = model.c_g.clone().unwrap_or_default();
    x.extend_from_slice(&model.c_f);
    x
}

/// Penalized objective of the stacked problem at a model's coefficients:
/// `‖y − Σ c_G − X M c_F‖² + λ₁ c_Gᵀ Σ c_G + λ₂ J(c_F)`.
pub fn objective(data: &LabeledFunctionalData, ops: &FemOperators, model: &DiscriminantModel) -> Result<f64> {
    let config = FitConfig {
        lambda1: model.lambda1,
        lambda2: model.lambda2,
        solver: LsqrConfig::default(),
        threshold: ThresholdRule::Youden,
    };
    let p = prepare(data, &config)?;
    objective_at(&p.centered, &p.response, p.gram.as_ref(), ops, model.lambda1, model.lambda2, model.c_g.as_deref(), &model.c_f)
}

#[allow(clippy::too_many_arguments)]
pub fn objective_at(
    centered: &DMatrix<f64>,
    response: &AuxiliaryResponse,
    gram: Option<&DMatrix<f64>>,
    ops: &FemOperators,
    lambda1: Option<f64>,
    lambda2: f64,
    c_g: Option<&[f64]>,
    c_f: &[f64],
) -> Result<f64> {
    let n = centered.nrows();
    let mcf = ops.mass.mul_vec(c_f)?;
    let mut fitted = vec![0.0; n];
    dense_mul(centered, &mcf, &mut fitted);
    let mut penalty = lambda2 * ops.penalty_value(c_f)?;
    if let (Some(g), Some(cg), Some(l1)) = (gram, c_g, lambda1) {
        let mut t = vec![0.0; n];
        dense_mul(g, cg, &mut t);
        for (f, v) in fitted.iter_mut().zip(&t) {
            *f += v;
        }
        penalty += l1 * cg.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>();
    }
    let rss: f64 = response.y.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    Ok(rss + penalty)
}
