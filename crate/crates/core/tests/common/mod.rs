#![allow(dead_code)]

use flda::classifier::{Label, LabeledFunctionalData};
use flda::fem::FemOperators;
use flda::mesh::{icosphere, Point3, TriangleMesh};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn sphere_ops(level: u32) -> (TriangleMesh, FemOperators) {
    let mesh = icosphere(level, 1.0).unwrap();
    let ops = FemOperators::assemble(&mesh, None).unwrap();
    (mesh, ops)
}

/// Icosphere with vertices pushed radially by up to ±`amount`.
pub fn bumpy_sphere(level: u32, amount: f64, seed: u64) -> TriangleMesh {
    let mesh = icosphere(level, 1.0).unwrap();
    let mut r = rng(seed);
    let v: Vec<Point3> = mesh
        .vertices()
        .iter()
        .map(|p| {
            let f = 1.0 + amount * (2.0 * r.random::<f64>() - 1.0);
            [p[0] * f, p[1] * f, p[2] * f]
        })
        .collect();
    mesh.with_vertices(v).unwrap()
}

/// Relabels vertices: new index i holds old vertex perm[i].
pub fn relabel(mesh: &TriangleMesh, perm: &[usize]) -> TriangleMesh {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let v = perm.iter().map(|&o| mesh.vertices()[o]).collect();
    let f = mesh.faces().iter().map(|t| [inv[t[0]], inv[t[1]], inv[t[2]]]).collect();
    TriangleMesh::new(v, f).unwrap()
}

pub fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    let mut r = rng(seed);
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Gaussian coefficients with a g₂ mean shift along `shift`.
pub fn random_dataset(n1: usize, n2: usize, s: usize, shift: &[f64], seed: u64) -> LabeledFunctionalData {
    let mut r = rng(seed);
    let n = n1 + n2;
    let coeffs = DMatrix::from_fn(n, s, |i, j| normal(&mut r) + if i >= n1 { shift[j] } else { 0.0 });
    let labels = (0..n).map(|i| if i < n1 { Label::G1 } else { Label::G2 }).collect();
    LabeledFunctionalData::new(coeffs, labels, None).unwrap()
}

/// Dense `S M̃⁻¹ S + εM`, built without the operator code path.
pub fn dense_penalty(ops: &FemOperators) -> DMatrix<f64> {
    let s = ops.stiffness.to_dense();
    let m = ops.mass.to_dense();
    let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        ops.dim(),
        m.row_iter().map(|row| 1.0 / row.sum()),
    ));
    &s * inv * &s + m * ops.epsilon
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
