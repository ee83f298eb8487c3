//! Checks against independently computed reference values.

mod common;

use common::*;
use flda::baseline::{fpca_fit, fpca_scores, lda_fit, lda_score};
use flda::classifier::{
    build_augmented_system, center_rows, choose_threshold, column_means, encode_labels, fit, score_rows, FitConfig,
    Label, LabeledFunctionalData, ThresholdRule,
};
use flda::eval::auc;
use flda::fem::FemOperators;
use flda::lsqr::{lsqr_solve, DenseOperator, LinearOperator, LsqrConfig};
use flda::mesh::{generalized_procrustes, icosphere, parse_off, Point3, TriangleMesh};
use flda::rkhs::{flow_points, gram_matrix, register_small_deformation, GeometrySet, KernelSpec, VectorFieldRepr};
use flda::spectral::{laplace_beltrami_eigs, mass_gram};
use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use rand::Rng;

#[test]
fn right_triangle_element_matrices() {
    let mesh = TriangleMesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    let ops = FemOperators::assemble(&mesh, Some(0.0)).unwrap();
    let m = ops.mass.to_dense();
    let s = ops.stiffness.to_dense();
    let m_ref = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]) / 24.0;
    let s_ref = DMatrix::from_row_slice(3, 3, &[1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5]);
    assert!((m - m_ref).amax() < 1e-15);
    assert!((s - s_ref).amax() < 1e-15);
}

fn cot(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    // cotangent of the angle at a
    let u = Vector3::new(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
    let v = Vector3::new(c[0] - a[0], c[1] - a[1], c[2] - a[2]);
    u.dot(&v) / u.cross(&v).norm()
}

#[test]
fn stiffness_matches_cotangent_formula() {
    let mesh = bumpy_sphere(2, 0.1, 3);
    let ops = FemOperators::assemble(&mesh, None).unwrap();
    let s = mesh.num_vertices();
    let mut reference = DMatrix::zeros(s, s);
    let v = mesh.vertices();
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b, c) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let w = 0.5 * cot(&v[a], &v[b], &v[c]);
            reference[(b, c)] -= w;
            reference[(c, b)] -= w;
            reference[(b, b)] += w;
            reference[(c, c)] += w;
        }
    }
    let scale = reference.amax();
    assert!((ops.stiffness.to_dense() - reference).amax() < 1e-12 * scale);
}

#[test]
fn mass_sums_to_area_and_constants_are_harmonic() {
    let mesh = bumpy_sphere(2, 0.2, 4);
    let ops = FemOperators::assemble(&mesh, None).unwrap();
    let area = mesh.surface_area();
    assert!((ops.mass.sum() - area).abs() < 1e-12 * area);
    assert!((ops.total_area() - area).abs() < 1e-12 * area);
    let ones = vec![1.0; ops.dim()];
    let s1 = ops.stiffness.mul_vec(&ones).unwrap();
    assert!(s1.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn penalty_operator_matches_dense_product() {
    let mesh = bumpy_sphere(1, 0.15, 5);
    let ops = FemOperators::assemble(&mesh, None).unwrap();
    let d = dense_penalty(&ops);
    let mut r = rng(6);
    for _ in 0..10 {
        let c: Vec<f64> = (0..ops.dim()).map(|_| normal(&mut r)).collect();
        let got = ops.penalty_apply(&c).unwrap();
        let want = &d * DVector::from_vec(c.clone());
        let scale = want.amax();
        assert!(max_abs_diff(&got, want.as_slice()) < 1e-12 * scale);
        let j = ops.penalty_value(&c).unwrap();
        let j_ref = DVector::from_vec(c).dot(&want);
        assert!((j - j_ref).abs() < 1e-12 * j_ref.abs());
    }
    assert!((ops.penalty_trace() - d.trace()).abs() < 1e-12 * d.trace());
}

#[test]
fn augmented_gram_equals_normal_equation_blocks() {
    let (_, ops) = sphere_ops(1);
    let s = ops.dim();
    let data = random_dataset(9, 11, s, &vec![0.1; s], 7);
    let mean = column_means(&data.coeffs);
    let x = center_rows(&data.coeffs, &mean);
    let resp = encode_labels(&data.labels).unwrap();
    let lambda2 = 0.37;
    let (sys, _) = build_augmented_system(&x, &resp, None, &ops, None, lambda2).unwrap();
    let a = sys.to_dense();
    let m = ops.mass.to_dense();
    let xm = &x * &m;
    let want = xm.transpose() * &xm + dense_penalty(&ops) * lambda2;
    let got = a.transpose() * &a;
    assert!((got - &want).amax() < 1e-10 * want.amax());
}

#[test]
fn augmented_operator_adjoint_identity() {
    let mesh = icosphere(1, 1.0).unwrap();
    let ops = FemOperators::assemble(&mesh, None).unwrap();
    let s = ops.dim();
    let n = 12;
    let data = random_dataset(6, 6, s, &vec![0.0; s], 8);
    let x = center_rows(&data.coeffs, &column_means(&data.coeffs));
    let resp = encode_labels(&data.labels).unwrap();
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let control: Vec<Point3> = mesh.vertices()[..8].to_vec();
    let mut r = rng(9);
    let fields: Vec<VectorFieldRepr> = (0..n)
        .map(|_| {
            let momenta = (0..8).map(|_| [normal(&mut r), normal(&mut r), normal(&mut r)]).collect();
            VectorFieldRepr::new(spec, control.clone(), momenta).unwrap()
        })
        .collect();
    let g = GeometrySet::new(fields).unwrap();
    let centered = g.centered(&g.mean_field().unwrap()).unwrap();
    for gram in [None, Some(centered.gram())] {
        let lambda1 = gram.map(|_| 0.8);
        let (sys, _) = build_augmented_system(&x, &resp, gram, &ops, lambda1, 0.3).unwrap();
        for _ in 0..100 {
            let u: Vec<f64> = (0..sys.ncols()).map(|_| normal(&mut r)).collect();
            let v: Vec<f64> = (0..sys.nrows()).map(|_| normal(&mut r)).collect();
            let mut au = vec![0.0; sys.nrows()];
            let mut atv = vec![0.0; sys.ncols()];
            sys.apply(&u, &mut au);
            sys.apply_transpose(&v, &mut atv);
            let lhs: f64 = au.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&atv).map(|(a, b)| a * b).sum();
            let scale = norm(&au) * norm(&v) + norm(&u) * norm(&atv);
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn lsqr_matches_dense_least_squares() {
    let mut r = rng(10);
    let a = DMatrix::from_fn(50, 30, |_, _| normal(&mut r));
    let b: Vec<f64> = (0..50).map(|_| normal(&mut r)).collect();
    let cfg = LsqrConfig { tol: 1e-14, max_iter: Some(1000) };
    let (x, diag) = lsqr_solve(&DenseOperator(&a), &b, None, &cfg).unwrap();
    assert!(diag.converged());
    let want = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * DVector::from_vec(b)));
    assert!(max_abs_diff(&x, want.as_slice()) < 1e-10 * want.amax());
}

#[test]
fn univariate_fit_solves_penalized_normal_equations() {
    let (_, ops) = sphere_ops(2);
    let s = ops.dim();
    let m = ops.mass.to_dense();
    let d = dense_penalty(&ops);
    for seed in 0..20 {
        let shift: Vec<f64> = (0..s).map(|j| 0.3 * ((j as f64) * 0.1).sin()).collect();
        let data = random_dataset(15, 15, s, &shift, 100 + seed);
        let x = center_rows(&data.coeffs, &column_means(&data.coeffs));
        let y = DVector::from_vec(encode_labels(&data.labels).unwrap().y);
        let xm = &x * &m;
        let lambda2 = 10f64.powi(seed as i32 % 5 - 3);
        let lhs = xm.transpose() * &xm + &d * lambda2;
        let want = lhs.cholesky().unwrap().solve(&(xm.transpose() * &y));
        let model = fit(&data, &ops, &FitConfig::univariate(lambda2)).unwrap();
        assert!(model.solver.converged);
        let err = max_abs_diff(&model.c_f, want.as_slice()) / want.amax();
        assert!(err < 1e-6, "seed {seed}: relative error {err:e}");
    }
}

fn random_fields(mesh: &TriangleMesh, n: usize, count: usize, seed: u64) -> Vec<VectorFieldRepr> {
    let spec = KernelSpec::gaussian(0.6).unwrap();
    let control: Vec<Point3> = mesh.vertices()[..count].to_vec();
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let momenta = (0..count).map(|_| [normal(&mut r), normal(&mut r), normal(&mut r)]).collect();
            VectorFieldRepr::new(spec, control.clone(), momenta).unwrap()
        })
        .collect()
}

#[test]
fn bivariate_fit_solves_joint_normal_equations() {
    let (mesh, ops) = sphere_ops(1);
    let s = ops.dim();
    let n = 16;
    let data = random_dataset(8, 8, s, &vec![0.2; s], 11);
    let g = GeometrySet::new(random_fields(&mesh, n, 6, 12)).unwrap();
    let data = LabeledFunctionalData::new(data.coeffs, data.labels, Some(g.clone())).unwrap();
    let (l1, l2) = (0.5, 0.05);
    let mut cfg = FitConfig::bivariate(l1, l2);
    cfg.solver = LsqrConfig { tol: 1e-14, max_iter: Some(20_000) };
    let model = fit(&data, &ops, &cfg).unwrap();

    let x = center_rows(&data.coeffs, &column_means(&data.coeffs));
    let sigma = g.centered(&g.mean_field().unwrap()).unwrap().gram().clone();
    let y = DVector::from_vec(encode_labels(&data.labels).unwrap().y);
    let xm = &x * ops.mass.to_dense();
    let mut lhs = DMatrix::zeros(n + s, n + s);
    lhs.view_mut((0, 0), (n, n)).copy_from(&(&sigma * &sigma + &sigma * l1));
    lhs.view_mut((0, n), (n, s)).copy_from(&(&sigma * &xm));
    lhs.view_mut((n, 0), (s, n)).copy_from(&(xm.transpose() * &sigma));
    lhs.view_mut((n, n), (s, s)).copy_from(&(xm.transpose() * &xm + dense_penalty(&ops) * l2));
    let mut rhs = DVector::zeros(n + s);
    rhs.rows_mut(0, n).copy_from(&(&sigma * &y));
    rhs.rows_mut(n, s).copy_from(&(xm.transpose() * &y));
    // Σ is singular along the constant vector, so compare identifiable quantities
    let sol = lhs.svd(true, true).solve(&rhs, 1e-12).unwrap();
    let cf_ref = sol.rows(n, s);
    let fit_ref = &sigma * sol.rows(0, n);
    let cg = DVector::from_vec(model.c_g.clone().unwrap());
    assert!(max_abs_diff(&model.c_f, cf_ref.as_slice()) < 1e-6 * cf_ref.amax());
    assert!(((&sigma * cg) - fit_ref.clone()).amax() < 1e-6 * fit_ref.amax());
}

#[test]
fn gram_matches_brute_force_double_sum() {
    let mesh = icosphere(1, 1.0).unwrap();
    let spec = KernelSpec::gaussian(0.7).unwrap();
    let mut r = rng(13);
    let fields: Vec<VectorFieldRepr> = (0..3)
        .map(|f| {
            let control: Vec<Point3> = mesh.vertices()[f..f + 5].to_vec();
            let momenta = (0..5).map(|_| [normal(&mut r), normal(&mut r), normal(&mut r)]).collect();
            VectorFieldRepr::new(spec, control, momenta).unwrap()
        })
        .collect();
    let g = gram_matrix(&fields).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let mut want = 0.0;
            for (x, a) in fields[i].control_points.iter().zip(&fields[i].momenta) {
                for (y, b) in fields[j].control_points.iter().zip(&fields[j].momenta) {
                    let d2: f64 = (0..3).map(|k| (x[k] - y[k]).powi(2)).sum();
                    let k = (-d2 / 0.49).exp();
                    want += k * (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
                }
            }
            assert!((g[(i, j)] - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn sphere_spectrum_has_harmonic_clusters() {
    let (_, ops) = sphere_ops(3);
    let basis = laplace_beltrami_eigs(&ops, 16).unwrap();
    let th = &basis.eigenvalues;
    assert!(th[0].abs() < 1e-10);
    let clusters = [(1..4, 2.0, 0.02), (4..9, 6.0, 0.03), (9..16, 12.0, 0.05)];
    for (range, exact, tol) in clusters {
        for i in range {
            assert!((th[i] - exact).abs() / exact < tol, "theta[{i}] = {}", th[i]);
        }
    }
    let g = mass_gram(&ops, &basis).unwrap();
    assert!((g - DMatrix::identity(16, 16)).amax() < 1e-10);
}

#[test]
fn degree_one_eigenspace_contains_coordinate_functions() {
    let (mesh, ops) = sphere_ops(3);
    let basis = laplace_beltrami_eigs(&ops, 4).unwrap();
    for d in 0..3 {
        let f: Vec<f64> = mesh.vertices().iter().map(|p| p[d]).collect();
        let total = ops.l2_inner(&f, &f).unwrap();
        let mut captured = 0.0;
        for e in &basis.eigenvectors[1..4] {
            captured += ops.l2_inner(&f, e).unwrap().powi(2);
        }
        // interpolated coordinates are eigenfunctions only up to discretization
        assert!(1.0 - captured / total < 1e-6, "coordinate {d}: {}", 1.0 - captured / total);
    }
}

#[test]
fn eigenvalues_scale_with_inverse_radius_squared() {
    let base = laplace_beltrami_eigs(&FemOperators::assemble(&icosphere(2, 1.0).unwrap(), None).unwrap(), 10).unwrap();
    let scaled = laplace_beltrami_eigs(&FemOperators::assemble(&icosphere(2, 2.5).unwrap(), None).unwrap(), 10).unwrap();
    for (a, b) in base.eigenvalues.iter().zip(&scaled.eigenvalues).skip(1) {
        assert!((b * 6.25 - a).abs() < 1e-9 * a);
    }
}

#[test]
fn relabeling_vertices_permutes_operators_and_keeps_spectrum() {
    let mesh = bumpy_sphere(2, 0.1, 14);
    let perm = shuffled(mesh.num_vertices(), 15);
    let moved = relabel(&mesh, &perm);
    let a = FemOperators::assemble(&mesh, None).unwrap();
    let b = FemOperators::assemble(&moved, None).unwrap();
    let mut old_to_new = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        old_to_new[old] = new;
    }
    let pm = a.mass.permute_symmetric(&old_to_new).unwrap();
    let ps = a.stiffness.permute_symmetric(&old_to_new).unwrap();
    assert!((pm.to_dense() - b.mass.to_dense()).amax() < 1e-14 * a.mass.max_abs());
    assert!((ps.to_dense() - b.stiffness.to_dense()).amax() < 1e-13 * a.stiffness.max_abs());
    let ea = laplace_beltrami_eigs(&a, 12).unwrap();
    let eb = laplace_beltrami_eigs(&b, 12).unwrap();
    for (x, y) in ea.eigenvalues.iter().zip(&eb.eigenvalues) {
        assert!((x - y).abs() < 1e-9 * x.max(1.0));
    }
}

#[test]
fn fpca_recovers_a_planted_subspace() {
    let (_, ops) = sphere_ops(2);
    let basis = laplace_beltrami_eigs(&ops, 8).unwrap();
    let planted = &basis.eigenvectors[3..6];
    let mut r = rng(16);
    let n = 60;
    let s = ops.dim();
    let coeffs = DMatrix::from_fn(n, s, |_, _| 0.0);
    let mut coeffs = coeffs;
    for i in 0..n {
        let w = [3.0 * normal(&mut r), 2.0 * normal(&mut r), 1.0 * normal(&mut r)];
        for (wj, e) in w.iter().zip(planted) {
            for c in 0..s {
                coeffs[(i, c)] += wj * e[c];
            }
        }
    }
    let model = fpca_fit(&coeffs, &ops, 3).unwrap();
    // every component lies in the planted span: residual after M-projection
    for comp in &model.components {
        let mut resid = comp.clone();
        for e in planted {
            let p = ops.l2_inner(comp, e).unwrap();
            resid.iter_mut().zip(e).for_each(|(x, v)| *x -= p * v);
        }
        let rn = ops.l2_inner(&resid, &resid).unwrap().sqrt();
        assert!(rn < 1e-8, "sin of principal angle {rn:e}");
    }
}

#[test]
fn lda_ranking_invariant_under_invertible_maps() {
    let mut r = rng(17);
    let n = 80;
    let z = DMatrix::from_fn(n, 3, |i, j| normal(&mut r) + if i >= 40 && j == 0 { 1.0 } else { 0.0 });
    let labels: Vec<Label> = (0..n).map(|i| if i < 40 { Label::G1 } else { Label::G2 }).collect();
    let t = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.0, 0.5, 0.2, 1.0, 0.0, 3.0]);
    let zt = &z * t.transpose();
    let score_all = |m: &DMatrix<f64>| -> Vec<f64> {
        let model = lda_fit(m, &labels, Some(0.0)).unwrap();
        (0..n)
            .map(|i| lda_score(&model, &m.row(i).iter().copied().collect::<Vec<_>>()).unwrap())
            .collect()
    };
    let a = score_all(&z);
    let b = score_all(&zt);
    for i in 0..n {
        assert!((a[i] - b[i]).abs() < 1e-9 * (1.0 + a[i].abs()));
    }
    assert_eq!(auc(&a, &labels).unwrap(), auc(&b, &labels).unwrap());
}

#[test]
fn auc_matches_brute_force_with_ties() {
    let mut r = rng(18);
    for _ in 0..20 {
        let n = 40;
        let scores: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * 8.0).floor()).collect();
        let labels: Vec<Label> = (0..n).map(|i| if i % 3 == 0 { Label::G1 } else { Label::G2 }).collect();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == Label::G2 && labels[j] == Label::G1 {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-12);
    }
}

fn rates(scores: &[f64], labels: &[Label], t: f64) -> (f64, f64) {
    let (mut tp, mut p, mut tn, mut q) = (0.0, 0.0, 0.0, 0.0);
    for (s, l) in scores.iter().zip(labels) {
        match l {
            Label::G2 => {
                p += 1.0;
                if *s > t {
                    tp += 1.0;
                }
            }
            Label::G1 => {
                q += 1.0;
                if *s <= t {
                    tn += 1.0;
                }
            }
        }
    }
    (tp / p, tn / q)
}

#[test]
fn thresholds_match_exhaustive_search() {
    let mut r = rng(19);
    for _ in 0..20 {
        let n = 30;
        let labels: Vec<Label> = (0..n).map(|i| if i < 14 { Label::G1 } else { Label::G2 }).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| normal(&mut r) + if *l == Label::G2 { 1.0 } else { 0.0 })
            .collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let mut cuts = vec![sorted[0] - 1.0];
        cuts.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        cuts.push(sorted[n - 1] + 1.0);
        let best = cuts
            .iter()
            .map(|&t| {
                let (se, sp) = rates(&scores, &labels, t);
                se + sp - 1.0
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let t = choose_threshold(&scores, &labels, ThresholdRule::Youden).unwrap().threshold;
        let (se, sp) = rates(&scores, &labels, t);
        assert!((se + sp - 1.0 - best).abs() < 1e-12);

        let q = 0.8;
        let t = choose_threshold(&scores, &labels, ThresholdRule::FixedSpecificity { q }).unwrap().threshold;
        assert!(rates(&scores, &labels, t).1 >= q);
        // no smaller observed cut reaches q
        for &c in cuts.iter().filter(|&&c| c < t - 1e-12) {
            assert!(rates(&scores, &labels, c).1 < q || rates(&scores, &labels, c).0 == rates(&scores, &labels, t).0);
        }
    }
}

#[test]
fn registration_interpolates_without_penalty() {
    let mesh = icosphere(2, 1.0).unwrap();
    let template: Vec<Point3> = mesh.vertices()[..10].to_vec();
    let target: Vec<Point3> = template
        .iter()
        .map(|p| [p[0] * 1.05 + 0.01, p[1] - 0.02 * p[2], p[2] * 0.97])
        .collect();
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let field = register_small_deformation(&template, &target, spec, 0.0, 10).unwrap();
    for (x, y) in template.iter().zip(&target) {
        let v = field.eval(x);
        for d in 0..3 {
            assert!((x[d] + v[d] - y[d]).abs() < 1e-8);
        }
    }
}

#[test]
fn euler_flow_converges_at_first_order() {
    let spec = KernelSpec::gaussian(0.8).unwrap();
    let field = VectorFieldRepr::new(spec, vec![[0.0, 0.0, 0.0], [0.5, 0.2, 0.0]], vec![[0.6, -0.3, 0.2], [0.1, 0.4, -0.5]]).unwrap();
    let start = vec![[0.3, 0.1, -0.2], [-0.4, 0.5, 0.1]];
    let reference = flow_points(&start, &field, 4096).unwrap();
    let err = |steps| {
        let got = flow_points(&start, &field, steps).unwrap();
        got.iter()
            .zip(&reference)
            .map(|(a, b)| (0..3).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(16), err(32), err(64));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn procrustes_ignores_rigid_motions_of_the_inputs() {
    let meshes: Vec<TriangleMesh> = (0..4).map(|i| bumpy_sphere(1, 0.2, 20 + i)).collect();
    let base = generalized_procrustes(&meshes).unwrap();
    let moved: Vec<TriangleMesh> = meshes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let rot: Matrix3<f64> = *Rotation3::from_euler_angles(0.3 * i as f64, -0.7, 1.1 + i as f64).matrix();
            let t = Vector3::new(1.0, -2.0, 0.5 * i as f64);
            let v = m
                .vertices()
                .iter()
                .map(|p| {
                    let q = rot * Vector3::new(p[0], p[1], p[2]) * 3.0 + t;
                    [q.x, q.y, q.z]
                })
                .collect();
            m.with_vertices(v).unwrap()
        })
        .collect();
    let other = generalized_procrustes(&moved).unwrap();
    for (a, b) in base.aligned.iter().zip(&other.aligned) {
        for (p, q) in a.vertices().iter().zip(b.vertices()) {
            for d in 0..3 {
                assert!((p[d] - q[d]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn off_round_trip_is_exact() {
    let mesh = bumpy_sphere(2, 0.3, 21);
    let back = parse_off(&mesh.to_off_string()).unwrap();
    assert_eq!(back.vertices(), mesh.vertices());
    assert_eq!(back.faces(), mesh.faces());
}

#[test]
fn two_mode_toy_problem_separates_perfectly() {
    let (_, ops) = sphere_ops(1);
    let basis = laplace_beltrami_eigs(&ops, 4).unwrap();
    let (e2, e3) = (&basis.eigenvectors[1], &basis.eigenvectors[2]);
    let mut r = rng(22);
    let n = 40;
    let s = ops.dim();
    let labels: Vec<Label> = (0..n).map(|i| if i < 20 { Label::G1 } else { Label::G2 }).collect();
    let coeffs = DMatrix::from_fn(n, s, |i, c| {
        let sign = if i < 20 { -0.5 } else { 0.5 };
        sign * e2[c]
    });
    let mut coeffs = coeffs;
    for i in 0..n {
        let w = 0.05 * normal(&mut r);
        for c in 0..s {
            coeffs[(i, c)] += w * e3[c];
        }
    }
    let data = LabeledFunctionalData::new(coeffs, labels.clone(), None).unwrap();
    let model = fit(&data, &ops, &FitConfig::univariate(1e-3)).unwrap();
    let scores = score_rows(&model, &ops, &data.coeffs, None).unwrap();
    assert_eq!(auc(&scores, &labels).unwrap(), 1.0);
    let fpca = fpca_fit(&data.coeffs, &ops, 1).unwrap();
    let z = fpca_scores(&fpca, &ops, &data.coeffs).unwrap();
    assert_eq!(z.ncols(), 1);
}
