//! Vector fields on ℝ³ in a Gaussian RKHS, stored as momenta at control points.
//!
//! The matrix-valued kernel is the scalar Gaussian times the 3×3 identity,
//! so every inner product reduces to a double sum over control points.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{dot, sub, Point3, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel bandwidth must be positive, got {sigma}")));
        }
        Ok(KernelSpec {
            family: KernelFamily::Gaussian,
            sigma,
        })
    }

    /// Bandwidth of 0.2 times the template's bounding-box diagonal.
    pub fn default_for(template: &TriangleMesh) -> Result<Self> {
        KernelSpec::gaussian(0.2 * template.bbox_diagonal())
    }

    #[inline]
    pub fn eval(&self, p: &Point3, q: &Point3) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                let d = sub(p, q);
                (-dot(&d, &d) / (self.sigma * self.sigma)).exp()
            }
        }
    }
}

pub fn kernel_eval(spec: &KernelSpec, p: &Point3, q: &Point3) -> f64 {
    spec.eval(p, q)
}

/// `v(x) = Σ_k K(x_k, x) a_k`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldRepr {
    pub kernel: KernelSpec,
    pub control_points: Vec<Point3>,
    pub momenta: Vec<Point3>,
}

impl VectorFieldRepr {
    pub fn new(kernel: KernelSpec, control_points: Vec<Point3>, momenta: Vec<Point3>) -> Result<Self> {
        if control_points.len() != momenta.len() {
            return Err(Error::dims("momenta count", control_points.len(), momenta.len()));
        }
        if control_points
            .iter()
            .chain(&momenta)
            .any(|p| p.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidArgument("vector field has non-finite entries".into()));
        }
        Ok(VectorFieldRepr {
            kernel,
            control_points,
            momenta,
        })
    }

    pub fn zero(kernel: KernelSpec, control_points: Vec<Point3>) -> Self {
        let momenta = vec![[0.0; 3]; control_points.len()];
        VectorFieldRepr {
            kernel,
            control_points,
            momenta,
        }
    }

    pub fn eval(&self, x: &Point3) -> Point3 {
        let mut v = [0.0; 3];
        for (c, a) in self.control_points.iter().zip(&self.momenta) {
            let k = self.kernel.eval(c, x);
            v[0] += k * a[0];
            v[1] += k * a[1];
            v[2] += k * a[2];
        }
        v
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for a in out.momenta.iter_mut() {
            for x in a.iter_mut() {
                *x *= factor;
            }
        }
        out
    }

    /// RKHS inner product `Σ_{k,l} a_kᵀ K(x_k, y_l) b_l`.
    pub fn inner(&self, other: &VectorFieldRepr) -> Result<f64> {
        if self.kernel != other.kernel {
            return Err(Error::KernelMismatch(1));
        }
        Ok(pairing(self, other))
    }

    pub fn norm_sq(&self) -> f64 {
        pairing(self, self)
    }

    pub fn shares_control_points(&self, other: &VectorFieldRepr) -> bool {
        self.control_points == other.control_points
    }
}

fn pairing(a: &VectorFieldRepr, b: &VectorFieldRepr) -> f64 {
    let mut total = 0.0;
    for (xk, ak) in a.control_points.iter().zip(&a.momenta) {
        if ak == &[0.0; 3] {
            continue;
        }
        let mut row = 0.0;
        for (yl, bl) in b.control_points.iter().zip(&b.momenta) {
            row += a.kernel.eval(xk, yl) * dot(ak, bl);
        }
        total += row;
    }
    total
}

/// Σ_ij = ⟨v_i, v_j⟩ over a shared kernel.
pub fn gram_matrix(fields: &[VectorFieldRepr]) -> Result<DMatrix<f64>> {
    let n = fields.len();
    if let Some(first) = fields.first() {
        if let Some(bad) = fields.iter().position(|f| f.kernel != first.kernel) {
            return Err(Error::KernelMismatch(bad));
        }
    }
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = pairing(&fields[i], &fields[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// Fields of n subjects with their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySet {
    fields: Vec<VectorFieldRepr>,
    gram: DMatrix<f64>,
}

impl GeometrySet {
    pub fn new(fields: Vec<VectorFieldRepr>) -> Result<Self> {
        let gram = gram_matrix(&fields)?;
        Ok(GeometrySet { fields, gram })
    }

    pub fn fields(&self) -> &[VectorFieldRepr] {
        &self.fields
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn kernel(&self) -> Option<KernelSpec> {
        self.fields.first().map(|f| f.kernel)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        let fields: Vec<_> = rows.iter().map(|&i| self.fields[i].clone()).collect();
        let gram = DMatrix::from_fn(rows.len(), rows.len(), |a, b| self.gram[(rows[a], rows[b])]);
        GeometrySet { fields, gram }
    }

    /// Momenta-wise mean. All fields must share control points.
    pub fn mean_field(&self) -> Result<VectorFieldRepr> {
        let first = self
            .fields
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty geometry set".into()))?;
        let n = self.fields.len() as f64;
        let mut momenta = vec![[0.0; 3]; first.momenta.len()];
        for (i, f) in self.fields.iter().enumerate() {
            if !f.shares_control_points(first) {
                return Err(Error::Validation {
                    element: "field",
                    index: i,
                    message: "control points differ from field 0".into(),
                });
            }
            for (acc, a) in momenta.iter_mut().zip(&f.momenta) {
                for d in 0..3 {
                    acc[d] += a[d];
                }
            }
        }
        for a in momenta.iter_mut() {
            for x in a.iter_mut() {
                *x /= n;
            }
        }
        VectorFieldRepr::new(first.kernel, first.control_points.clone(), momenta)
    }

    /// Subtracts a field sharing the same control points from every member.
    pub fn centered(&self, mean: &VectorFieldRepr) -> Result<Self> {
        let fields = self
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| subtract(f, mean).map_err(|_| Error::Validation {
                element: "field",
                index: i,
                message: "control points differ from the mean field".into(),
            }))
            .collect::<Result<Vec<_>>>()?;
        GeometrySet::new(fields)
    }

    /// `⟨v, f_i⟩` for every member f_i.
    pub fn pairing_row(&self, v: &VectorFieldRepr) -> Result<Vec<f64>> {
        self.fields.iter().map(|f| v.inner(f)).collect()
    }
}

pub(crate) fn subtract(a: &VectorFieldRepr, b: &VectorFieldRepr) -> Result<VectorFieldRepr> {
    if !a.shares_control_points(b) || a.kernel != b.kernel {
        return Err(Error::InvalidArgument("fields do not share control points".into()));
    }
    let momenta = a
        .momenta
        .iter()
        .zip(&b.momenta)
        .map(|(x, y)| sub(x, y))
        .collect();
    Ok(VectorFieldRepr {
        kernel: a.kernel,
        control_points: a.control_points.clone(),
        momenta,
    })
}

/// Indices of `count` points chosen by farthest-point sampling from point 0.
/// Ties go to the lowest index.
pub fn farthest_point_sample(points: &[Point3], count: usize) -> Vec<usize> {
    let count = count.min(points.len());
    if count == points.len() {
        return (0..count).collect();
    }
    let mut chosen = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    for _ in 0..count {
        chosen.push(next);
        let p = points[next];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, q) in points.iter().enumerate() {
            let d = sub(q, &p);
            let d2 = dot(&d, &d);
            if d2 < dist[i] {
                dist[i] = d2;
            }
            if dist[i] > best.0 {
                best = (dist[i], i);
            }
        }
        next = best.1;
    }
    chosen
}

pub const DEFAULT_REGISTRATION_SUBSAMPLE: usize = 500;

/// Kernel ridge fit of the displacement field under `φ_v(x) ≈ x + v(x)`.
///
/// Control points are a farthest-point subsample of the template landmarks;
/// momenta solve `(K + λI) A = ΔX` there.
pub fn register_small_deformation(
    template: &[Point3],
    target: &[Point3],
    spec: KernelSpec,
    lambda: f64,
    subsample: usize,
) -> Result<VectorFieldRepr> {
    if template.len() != target.len() {
        return Err(Error::dims("target landmark count", template.len(), target.len()));
    }
    if subsample == 0 || subsample > template.len() {
        return Err(Error::InvalidArgument(format!(
            "subsample must be in [1, {}], got {subsample}",
            template.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let idx = farthest_point_sample(template, subsample);
    let control: Vec<Point3> = idx.iter().map(|&i| template[i]).collect();
    let m = control.len();
    let mut k = DMatrix::from_fn(m, m, |a, b| spec.eval(&control[a], &control[b]));
    for i in 0..m {
        k[(i, i)] += lambda;
    }
    let rhs = DMatrix::from_fn(m, 3, |a, d| target[idx[a]][d] - template[idx[a]][d]);
    let solution = match k.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("kernel system is singular".into()))?,
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("kernel system is singular".into()));
    }
    let momenta = (0..m)
        .map(|a| [solution[(a, 0)], solution[(a, 1)], solution[(a, 2)]])
        .collect();
    VectorFieldRepr::new(spec, control, momenta)
}

/// Forward-Euler flow of a stationary field from t = 0 to t = 1.
pub fn flow_points(points: &[Point3], field: &VectorFieldRepr, steps: usize) -> Result<Vec<Point3>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("flow needs at least one step".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = points.to_vec();
    if field.momenta.iter().all(|a| a == &[0.0; 3]) {
        return Ok(x);
    }
    for _ in 0..steps {
        for p in x.iter_mut() {
            let v = field.eval(p);
            p[0] += dt * v[0];
            p[1] += dt * v[1];
            p[2] += dt * v[2];
        }
    }
    Ok(x)
}

pub fn flow_deform(mesh: &TriangleMesh, field: &VectorFieldRepr, steps: usize) -> Result<TriangleMesh> {
    let moved = flow_points(mesh.vertices(), field, steps)?;
    mesh.with_vertices(moved)
}
