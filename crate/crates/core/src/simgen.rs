//! Synthetic two-group functional data in a Laplace–Beltrami eigenbasis.
//!
//! Group 1 samples are `Σ_j w_ij v_j`, group 2 samples are
//! `α μ + Σ_j u_ij v_j`, with independent scores `N(0, σ_j²)` and `μ` one of
//! the basis functions. The constant eigenfunction is skipped, so `v_1` is
//! the second eigenvector of the pencil.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Label, LabeledFunctionalData};
use crate::error::{Error, Result};
use crate::mesh::{Point3, TriangleMesh};
use crate::rkhs::{farthest_point_sample, GeometrySet, KernelSpec, VectorFieldRepr};
use crate::spectral::EigenBasis;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed with a sequence of stream indices.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// A deterministic generator for one (seed, stream...) coordinate.
pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSchedule {
    /// σ_j = j^(−exponent)
    PowerLaw { exponent: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for SigmaSchedule {
    fn default() -> Self {
        SigmaSchedule::PowerLaw { exponent: 1.0 }
    }
}

impl SigmaSchedule {
    pub fn values(&self, len: usize) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            SigmaSchedule::PowerLaw { exponent } => {
                if !(*exponent >= 0.0) {
                    return Err(Error::InvalidArgument(format!("sigma exponent must be >= 0, got {exponent}")));
                }
                (1..=len).map(|j| (j as f64).powf(-exponent)).collect()
            }
            SigmaSchedule::Explicit { values } => {
                if values.len() != len {
                    return Err(Error::dims("sigma schedule length", len, values.len()));
                }
                values.clone()
            }
        };
        if v.iter().any(|s| !(*s > 0.0)) || v.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("sigma schedule must be positive and non-increasing".into()));
        }
        Ok(v)
    }
}

/// Stream tags keep the draws of different datasets apart.
const GROUP_STREAM: [u64; 2] = [0x6731, 0x6732];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub icosphere_level: u32,
    pub radius: f64,
    pub basis_size: usize,
    /// 1-based index of μ within v_1..v_L.
    pub mean_index: usize,
    pub alpha: f64,
    pub n_per_group: usize,
    pub sigma: SigmaSchedule,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            icosphere_level: 3,
            radius: 1.0,
            basis_size: 40,
            mean_index: 10,
            alpha: 0.2,
            n_per_group: 128,
            sigma: SigmaSchedule::default(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.basis_size == 0 {
            return Err(Error::InvalidArgument("basis size must be positive".into()));
        }
        if self.mean_index == 0 || self.mean_index > self.basis_size {
            return Err(Error::InvalidArgument(format!(
                "mean index must be in [1, {}], got {}",
                self.basis_size, self.mean_index
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.n_per_group == 0 {
            return Err(Error::InvalidArgument("n per group must be positive".into()));
        }
        self.sigma.values(self.basis_size)?;
        Ok(())
    }

    /// Number of eigenpairs the basis must provide (constant mode included).
    pub fn required_eigenpairs(&self) -> usize {
        self.basis_size + 1
    }
}

/// Scores of one sample: `N(0, σ_j²)` drawn from its own stream.
pub fn sample_scores(seed: u64, group: usize, sample: usize, sigma: &[f64]) -> Vec<f64> {
    let mut rng = stream_rng(seed, &[GROUP_STREAM[group], sample as u64]);
    sigma
        .iter()
        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// The 2n-sample dataset; rows `0..n` are g₁, rows `n..2n` are g₂.
pub fn generate_dataset(config: &SimConfig, basis: &EigenBasis) -> Result<LabeledFunctionalData> {
    config.validate()?;
    let need = config.required_eigenpairs();
    if basis.len() < need {
        return Err(Error::BasisTooSmall {
            needed: need,
            available: basis.len(),
        });
    }
    let sigma = config.sigma.values(config.basis_size)?;
    let s = basis.dim();
    let n = config.n_per_group;
    let funcs = &basis.eigenvectors[1..need];
    let mu = &funcs[config.mean_index - 1];

    let rows: Vec<Vec<f64>> = (0..2 * n)
        .into_par_iter()
        .map(|r| {
            let (group, sample) = if r < n { (0, r) } else { (1, r - n) };
            let w = sample_scores(config.seed, group, sample, &sigma);
            let mut x = vec![0.0; s];
            if group == 1 {
                x.iter_mut().zip(mu).for_each(|(xi, m)| *xi += config.alpha * m);
            }
            for (wj, v) in w.iter().zip(funcs) {
                x.iter_mut().zip(v).for_each(|(xi, vi)| *xi += wj * vi);
            }
            x
        })
        .collect();
    let mut coeffs = DMatrix::zeros(2 * n, s);
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            coeffs[(r, c)] = *v;
        }
    }
    let labels = (0..2 * n).map(|r| if r < n { Label::G1 } else { Label::G2 }).collect();
    LabeledFunctionalData::new(coeffs, labels, None)
}

/// Random momenta `N(0, scale²)` at farthest-point control points of the
/// template, plus `class_shift` on every g₂ sample.
pub fn generate_geometry(
    labels: &[Label],
    template: &TriangleMesh,
    spec: KernelSpec,
    control_points: usize,
    momentum_scale: f64,
    class_shift: Option<&VectorFieldRepr>,
    seed: u64,
) -> Result<GeometrySet> {
    if !(momentum_scale >= 0.0) {
        return Err(Error::InvalidArgument(format!("momentum scale must be >= 0, got {momentum_scale}")));
    }
    let control: Vec<Point3> = geometry_control_points(template, control_points);
    if let Some(shift) = class_shift {
        if shift.control_points != control || shift.kernel != spec {
            return Err(Error::InvalidArgument(
                "class shift must use the generated control points and kernel".into(),
            ));
        }
    }
    let fields = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = stream_rng(seed, &[0x6765_6f6d, i as u64]);
            let mut momenta: Vec<Point3> = (0..control.len())
                .map(|_| {
                    let mut a = [0.0; 3];
                    for x in a.iter_mut() {
                        *x = momentum_scale * rng.sample::<f64, _>(StandardNormal);
                    }
                    a
                })
                .collect();
            if let (Label::G2, Some(shift)) = (label, class_shift) {
                for (m, d) in momenta.iter_mut().zip(&shift.momenta) {
                    for k in 0..3 {
                        m[k] += d[k];
                    }
                }
            }
            VectorFieldRepr::new(spec, control.clone(), momenta)
        })
        .collect::<Result<Vec<_>>>()?;
    GeometrySet::new(fields)
}

pub fn geometry_control_points(template: &TriangleMesh, count: usize) -> Vec<Point3> {
    farthest_point_sample(template.vertices(), count)
        .into_iter()
        .map(|i| template.vertices()[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FemOperators;
    use crate::mesh::icosphere;
    use crate::spectral::laplace_beltrami_eigs;

    fn small_basis() -> (FemOperators, EigenBasis) {
        let ops = FemOperators::assemble(&icosphere(2, 1.0).unwrap(), None).unwrap();
        let basis = laplace_beltrami_eigs(&ops, 11).unwrap();
        (ops, basis)
    }

    fn cfg(seed: u64) -> SimConfig {
        SimConfig {
            icosphere_level: 2,
            basis_size: 10,
            mean_index: 5,
            alpha: 0.3,
            n_per_group: 6,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn seeds_control_the_draws() {
        let (_, basis) = small_basis();
        let a = generate_dataset(&cfg(7), &basis).unwrap();
        let b = generate_dataset(&cfg(7), &basis).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&cfg(8), &basis).unwrap();
        assert_ne!(a.coeffs[(0, 0)], c.coeffs[(0, 0)]);
        assert_eq!(a.len(), 12);
        assert_eq!(a.labels[5], Label::G1);
        assert_eq!(a.labels[6], Label::G2);
    }

    #[test]
    fn basis_too_small() {
        let (_, basis) = small_basis();
        let mut c = cfg(1);
        c.basis_size = 40;
        c.mean_index = 10;
        assert!(matches!(generate_dataset(&c, &basis), Err(Error::BasisTooSmall { needed: 41, .. })));
    }

    #[test]
    fn sigma_schedule_validation() {
        assert_eq!(SigmaSchedule::default().values(3).unwrap(), vec![1.0, 0.5, 1.0 / 3.0]);
        let bad = SigmaSchedule::Explicit { values: vec![1.0, 2.0] };
        assert!(bad.values(2).is_err());
    }

    #[test]
    fn zero_momentum_gives_zero_gram() {
        let mesh = icosphere(1, 1.0).unwrap();
        let spec = KernelSpec::gaussian(0.4).unwrap();
        let labels = [Label::G1, Label::G2, Label::G1];
        let g = generate_geometry(&labels, &mesh, spec, 10, 0.0, None, 3).unwrap();
        assert!(g.gram().iter().all(|&v| v == 0.0));
        let g1 = generate_geometry(&labels, &mesh, spec, 10, 0.2, None, 3).unwrap();
        let g2 = generate_geometry(&labels, &mesh, spec, 10, 0.2, None, 3).unwrap();
        assert_eq!(g1, g2);
    }
}
