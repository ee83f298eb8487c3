//! Linear finite elements on triangulated surfaces.
//!
//! Mass `M`, stiffness `S` and lumped mass `M̃` for the piecewise-linear hat
//! basis. The roughness penalty `S M̃⁻¹ S + ε M` is only ever applied as a
//! sequence of sparse products.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{cross, dot, norm, sub, TriangleMesh};
use crate::sparse::{SparseCholesky, SparseMatrix};

/// Relative area floor below which a triangle counts as degenerate.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

/// Default shrinkage weight relative to trace(S) / trace(M).
pub const DEFAULT_EPSILON_FACTOR: f64 = 1e-3;

type ElementMatrix = [[f64; 3]; 3];

fn element_mass(area: f64) -> ElementMatrix {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Gradients of the barycentric coordinates, expressed in the triangle's own
/// 2-D frame, and the triangle area.
fn local_gradients(p: [[f64; 3]; 3]) -> ([[f64; 2]; 3], f64) {
    let u = sub(&p[1], &p[0]);
    let w = sub(&p[2], &p[0]);
    let lu = norm(&u);
    let e1 = [u[0] / lu, u[1] / lu, u[2] / lu];
    let nrm = cross(&u, &w);
    let twice_area = norm(&nrm);
    let nhat = [nrm[0] / twice_area, nrm[1] / twice_area, nrm[2] / twice_area];
    let e2 = cross(&nhat, &e1);
    let q = [[0.0, 0.0], [lu, 0.0], [dot(&w, &e1), dot(&w, &e2)]];
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        grads[i] = [(q[j][1] - q[k][1]) / twice_area, (q[k][0] - q[j][0]) / twice_area];
    }
    (grads, 0.5 * twice_area)
}

fn element_stiffness(p: [[f64; 3]; 3]) -> (ElementMatrix, f64) {
    let (g, area) = local_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    (k, area)
}

fn corners(mesh: &TriangleMesh, f: usize) -> [[f64; 3]; 3] {
    let [a, b, c] = mesh.faces()[f];
    let v = mesh.vertices();
    [v[a], v[b], v[c]]
}

fn scatter(mesh: &TriangleMesh, elements: &[ElementMatrix]) -> Result<SparseMatrix> {
    let mut triplets = Vec::with_capacity(9 * elements.len());
    for (face, e) in mesh.faces().iter().zip(elements) {
        for a in 0..3 {
            for b in 0..3 {
                triplets.push((face[a], face[b], e[a][b]));
            }
        }
    }
    let s = mesh.num_vertices();
    SparseMatrix::from_triplets(s, s, &triplets)
}

/// Consistent mass matrix, `(area/12)·[[2,1,1],[1,2,1],[1,1,2]]` per triangle.
pub fn assemble_mass(mesh: &TriangleMesh) -> Result<SparseMatrix> {
    let elements: Vec<ElementMatrix> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| element_mass(mesh.face_area(f)))
        .collect();
    scatter(mesh, &elements)
}

/// Stiffness matrix of the surface gradient (cotangent Laplacian).
pub fn assemble_stiffness(mesh: &TriangleMesh) -> Result<SparseMatrix> {
    let h = mesh.mean_edge_length();
    let min_area = DEGENERATE_AREA_FACTOR * h * h;
    let elements: Vec<(ElementMatrix, f64)> = (0..mesh.num_faces())
        .into_par_iter()
        .map(|f| {
            let p = corners(mesh, f);
            let area = mesh.face_area(f);
            if !(area >= min_area) {
                return ([[0.0; 3]; 3], area);
            }
            element_stiffness(p)
        })
        .collect();
    if let Some(face) = elements.iter().position(|(_, a)| !(*a >= min_area)) {
        return Err(Error::DegenerateTriangle {
            face,
            area: elements[face].1,
        });
    }
    let mats: Vec<ElementMatrix> = elements.into_iter().map(|(k, _)| k).collect();
    scatter(mesh, &mats)
}

/// Assembled operators on one mesh.
#[derive(Debug, Clone)]
pub struct FemOperators {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub lumped_mass_diag: Vec<f64>,
    pub epsilon: f64,
    mass_factor: SparseCholesky,
}

impl FemOperators {
    /// Assembles M, S and M̃. `epsilon = None` selects the default
    /// `1e-3 · trace(S) / trace(M)`.
    pub fn assemble(mesh: &TriangleMesh, epsilon: Option<f64>) -> Result<Self> {
        let mass = assemble_mass(mesh)?;
        let stiffness = assemble_stiffness(mesh)?;
        let epsilon = match epsilon {
            Some(e) if e >= 0.0 && e.is_finite() => e,
            Some(e) => {
                return Err(Error::NonPositivePenalty(format!("epsilon must be >= 0, got {e}")))
            }
            None => DEFAULT_EPSILON_FACTOR * stiffness.trace() / mass.trace(),
        };
        FemOperators::from_matrices(mass, stiffness, epsilon)
    }

    pub fn from_matrices(mass: SparseMatrix, stiffness: SparseMatrix, epsilon: f64) -> Result<Self> {
        let s = mass.rows();
        if stiffness.rows() != s || stiffness.cols() != s || mass.cols() != s {
            return Err(Error::dims("stiffness size", s, stiffness.rows()));
        }
        let lumped_mass_diag = mass.row_sums();
        if let Some(j) = lumped_mass_diag.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::Validation {
                element: "vertex",
                index: j,
                message: "lumped mass is not positive".into(),
            });
        }
        let mass_factor = SparseCholesky::factor(&mass)?;
        Ok(FemOperators {
            mass,
            stiffness,
            lumped_mass_diag,
            epsilon,
            mass_factor,
        })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::NonPositivePenalty(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.mass.rows()
    }

    /// Factor L of M = L Lᵀ; Lᵀ serves as M^{1/2} in least-squares blocks.
    pub fn mass_factor(&self) -> &SparseCholesky {
        &self.mass_factor
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::dims("FE coefficient vector", self.dim(), v.len()));
        }
        Ok(())
    }

    pub fn mass_apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check(c)?;
        self.mass.mul_vec(c)
    }

    /// `S M̃⁻¹ S c + ε M c` via three sparse products.
    pub fn penalty_apply(&self, c: &[f64]) -> Result<Vec<f64>> {
        self.check(c)?;
        let s = self.dim();
        let mut sc = vec![0.0; s];
        self.stiffness.mul_vec_into(c, &mut sc);
        for (v, m) in sc.iter_mut().zip(&self.lumped_mass_diag) {
            *v /= m;
        }
        let mut out = vec![0.0; s];
        self.stiffness.mul_vec_into(&sc, &mut out);
        if self.epsilon != 0.0 {
            let mut mc = vec![0.0; s];
            self.mass.mul_vec_into(c, &mut mc);
            for (o, m) in out.iter_mut().zip(&mc) {
                *o += self.epsilon * m;
            }
        }
        Ok(out)
    }

    /// Discrete `J(β) = cᵀ (S M̃⁻¹ S + ε M) c`.
    pub fn penalty_value(&self, c: &[f64]) -> Result<f64> {
        let d = self.penalty_apply(c)?;
        Ok(c.iter().zip(&d).map(|(a, b)| a * b).sum())
    }

    /// trace(S M̃⁻¹ S + ε M), without forming the product.
    pub fn penalty_trace(&self) -> f64 {
        let mut t = 0.0;
        for r in 0..self.dim() {
            for (c, v) in self.stiffness.row(r) {
                t += v * v / self.lumped_mass_diag[c];
            }
        }
        t + self.epsilon * self.mass.trace()
    }

    /// `aᵀ M b`
    pub fn l2_inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let mb = self.mass.mul_vec(b)?;
        Ok(a.iter().zip(&mb).map(|(x, y)| x * y).sum())
    }

    pub fn total_area(&self) -> f64 {
        self.lumped_mass_diag.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::icosphere;

    fn right_triangle() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn right_triangle_mass() {
        let m = assemble_mass(&right_triangle()).unwrap().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert!((m[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn right_triangle_stiffness() {
        let s = assemble_stiffness(&right_triangle()).unwrap().to_dense();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[(i, j)] - expect[i][j]).abs() < 1e-15, "{i},{j}");
            }
        }
    }

    #[test]
    fn stiffness_is_rotation_invariant_in_space() {
        // tilt the right triangle out of the xy-plane; the intrinsic result is unchanged
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = |p: [f64; 3]| [p[0], c * p[1] - s * p[2], s * p[1] + c * p[2]];
        let m = TriangleMesh::new(
            vec![rot([0.0, 0.0, 0.0]), rot([1.0, 0.0, 0.0]), rot([0.0, 1.0, 0.0])],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let k = assemble_stiffness(&m).unwrap();
        assert!((k.get(0, 0) - 1.0).abs() < 1e-14);
        assert!(k.get(1, 2).abs() < 1e-14);
    }

    #[test]
    fn l2_inner_single_triangle() {
        let ops = FemOperators::assemble(&right_triangle(), Some(0.0)).unwrap();
        let one = vec![1.0; 3];
        assert!((ops.l2_inner(&one, &one).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(ops.l2_inner(&[0.0; 3], &one).unwrap(), 0.0);
        assert!(ops.l2_inner(&[1.0, 2.0], &one).is_err());
    }

    #[test]
    fn penalty_on_constants() {
        let mesh = icosphere(2, 1.0).unwrap();
        let ops = FemOperators::assemble(&mesh, Some(0.0)).unwrap();
        let one = vec![1.0; ops.dim()];
        let d = ops.penalty_apply(&one).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-10));

        let ops1 = ops.with_epsilon(1.0).unwrap();
        let d1 = ops1.penalty_apply(&one).unwrap();
        let rows = ops.mass.row_sums();
        for (a, b) in d1.iter().zip(&rows) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(ops.penalty_apply(&[1.0]).is_err());
    }

    #[test]
    fn negative_epsilon_rejected() {
        let mesh = icosphere(0, 1.0).unwrap();
        assert!(matches!(
            FemOperators::assemble(&mesh, Some(-1.0)),
            Err(Error::NonPositivePenalty(_))
        ));
    }

    #[test]
    fn degenerate_triangle_in_stiffness() {
        let mesh = icosphere(1, 1.0).unwrap();
        let mut v = mesh.vertices().to_vec();
        let [a, b, c] = mesh.faces()[0];
        v[c] = [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1]), 0.5 * (v[a][2] + v[b][2])];
        let squashed = mesh.with_vertices(v).unwrap();
        assert!(matches!(
            assemble_stiffness(&squashed),
            Err(Error::DegenerateTriangle { .. })
        ));
    }
}
