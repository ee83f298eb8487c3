//! AUC, validation-set model selection and the replicated simulation study.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{class_counts, Label, LabeledFunctionalData};
use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::mesh::icosphere;
use crate::method::{DiscriminantMethod, FittedScorer, GridConfig, Hyperparameters, MethodRegistry};
use crate::simgen::{derive_seed, generate_dataset, SigmaSchedule, SimConfig};
use crate::spectral::{laplace_beltrami_eigs, EigenBasis};

/// Normalized Mann–Whitney statistic, P(s₂ > s₁) + ½P(s₂ = s₁), with g₂
/// as the positive class.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dims("auc labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("auc: NaN score".into()));
    }
    let (n1, n2) = class_counts(labels);
    if n1 == 0 || n2 == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // rank sum of g₂ with midranks for ties
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j + 1) as f64 / 2.0;
        let pos = order[i..j].iter().filter(|&&k| labels[k] == Label::G2).count();
        rank_sum += mid * pos as f64;
        i = j;
    }
    let (n1, n2) = (n1 as f64, n2 as f64);
    let u = rank_sum - n2 * (n2 + 1.0) / 2.0;
    Ok((u / (n1 * n2)).clamp(0.0, 1.0))
}

/// (sensitivity, specificity) of the rule `score > threshold ⇒ g₂`.
pub fn sensitivity_specificity(scores: &[f64], labels: &[Label], threshold: f64) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::dims("labels", scores.len(), labels.len()));
    }
    let (n1, n2) = class_counts(labels);
    if n1 == 0 || n2 == 0 {
        return Err(Error::SingleClass);
    }
    let mut tp = 0usize;
    let mut tn = 0usize;
    for (s, l) in scores.iter().zip(labels) {
        match (l, *s > threshold) {
            (Label::G2, true) => tp += 1,
            (Label::G1, false) => tn += 1,
            _ => {}
        }
    }
    Ok((tp as f64 / n2 as f64, tn as f64 / n1 as f64))
}

pub struct Selection {
    pub hyperparameters: Hyperparameters,
    pub validation_auc: f64,
    pub model: Box<dyn FittedScorer>,
    /// Every grid point with its validation AUC, in search order.
    pub path: Vec<(Hyperparameters, f64)>,
}

/// Fits every grid point on `train` and keeps the best validation AUC.
/// Ties go to the earlier candidate in the method's preference order.
pub fn grid_search(
    train: &LabeledFunctionalData,
    validation: &LabeledFunctionalData,
    method: &dyn DiscriminantMethod,
    ops: &FemOperators,
    grids: &GridConfig,
) -> Result<Selection> {
    let candidates = method.candidates(train, ops, grids)?;
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(format!("empty grid for {}", method.name())));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut best_model: Option<Box<dyn FittedScorer>> = None;
    let mut last: Option<Box<dyn FittedScorer>> = None;
    let mut last_is_best = false;
    let mut path = Vec::with_capacity(candidates.len());
    for (i, hp) in candidates.iter().enumerate() {
        let previous = if last_is_best { best_model.as_deref() } else { last.as_deref() };
        // warm starts only along a fixed λ₁
        let warm = previous.filter(|p| p.hyperparameters().lambda1 == hp.lambda1);
        let model = method.fit(train, ops, hp, grids, warm)?;
        let a = auc(&model.score(ops, validation)?, &validation.labels)?;
        path.push((*hp, a));
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((i, a));
            best_model = Some(model);
            last_is_best = true;
        } else {
            last = Some(model);
            last_is_best = false;
        }
    }
    let (i, a) = best.expect("non-empty grid");
    let model = best_model.expect("non-empty grid");
    Ok(Selection {
        hyperparameters: candidates[i],
        validation_auc: a,
        model,
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub icosphere_level: u32,
    pub radius: f64,
    pub basis_size: usize,
    pub mean_index: usize,
    pub sigma: SigmaSchedule,
    pub alphas: Vec<f64>,
    /// Training samples per group; the validation set has the same size.
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    /// Total test samples, split evenly between the groups.
    pub test_size: usize,
    pub grids: GridConfig,
    pub methods: Vec<String>,
    pub seed: u64,
    /// Wall times are written as 0 unless this is set, so tables compare
    /// byte for byte across runs.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            icosphere_level: 3,
            radius: 1.0,
            basis_size: 40,
            mean_index: 10,
            sigma: SigmaSchedule::default(),
            alphas: vec![0.2, 0.4, 0.6],
            sample_sizes: vec![128, 256],
            replicates: 10,
            test_size: 2000,
            grids: GridConfig::default(),
            methods: vec!["flda".into(), "fpca-lda".into()],
            seed: 0,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, registry: &MethodRegistry) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.alphas.is_empty() || self.sample_sizes.is_empty() || self.methods.is_empty() {
            return bad("alpha list, sample sizes and methods must be non-empty");
        }
        if self.replicates == 0 || self.sample_sizes.contains(&0) {
            return bad("replicate count and sample sizes must be positive");
        }
        if self.test_size < 2 {
            return bad("test size must be at least 2");
        }
        if self.grids.lambda2_factors.is_empty() || self.grids.k.is_empty() || self.grids.lambda1.is_empty() {
            return bad("grids must be non-empty");
        }
        if self.grids.lambda2_factors.iter().chain(&self.grids.lambda1).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("grid values must be positive and finite");
        }
        for m in &self.methods {
            registry.get(m)?;
        }
        self.sim(self.alphas[0], self.sample_sizes[0], 0).validate()
    }

    fn sim(&self, alpha: f64, n_per_group: usize, seed: u64) -> SimConfig {
        SimConfig {
            icosphere_level: self.icosphere_level,
            radius: self.radius,
            basis_size: self.basis_size,
            mean_index: self.mean_index,
            alpha,
            n_per_group,
            sigma: self.sigma.clone(),
            seed,
        }
    }

    /// Seed of one split: 0 = train, 1 = validation, 2 = test.
    ///
    /// The seed does not depend on n. Samples are drawn per index, so the
    /// training set for a smaller n is a prefix of the one for a larger n and
    /// all sizes share a test set.
    pub fn split_seed(&self, alpha: f64, replicate: usize, split: u64) -> u64 {
        derive_seed(self.seed, &[alpha.to_bits(), replicate as u64, split])
    }
}

/// Mesh operators and eigenbasis shared by every replicate.
pub fn prepare_basis(config: &ExperimentConfig) -> Result<(FemOperators, EigenBasis)> {
    let mesh = icosphere(config.icosphere_level, config.radius)?;
    let ops = FemOperators::assemble(&mesh, None)?;
    let basis = laplace_beltrami_eigs(&ops, config.basis_size + 1)?;
    Ok((ops, basis))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub alpha: f64,
    pub n: usize,
    pub replicate: usize,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub k: Option<usize>,
    pub auc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub method: String,
    pub alpha: f64,
    pub n: usize,
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedRun>,
}

pub const RESULT_HEADER: &str = "method,alpha,n,replicate,lambda1,lambda2,k,auc,seconds";

/// Fixed 17-significant-digit rendering.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_f(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr>(s: &str, line: usize) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("bad number '{s}'"),
    })
}

fn parse_req<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    parse_opt(s, line)?.ok_or_else(|| Error::Parse {
        line,
        message: "missing value".into(),
    })
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.method,
                fmt17(r.alpha),
                r.n,
                r.replicate,
                opt_f(r.lambda1),
                opt_f(r.lambda2),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                fmt17(r.auc),
                fmt17(r.seconds)
            );
        }
        out
    }

    /// Reads rows back; failures are not part of the CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == RESULT_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{RESULT_HEADER}'"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 9 {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected 9 fields, found {}", f.len()),
                });
            }
            rows.push(ResultRow {
                method: f[0].to_string(),
                alpha: parse_req(f[1], ln)?,
                n: parse_req(f[2], ln)?,
                replicate: parse_req(f[3], ln)?,
                lambda1: parse_opt(f[4], ln)?,
                lambda2: parse_opt(f[5], ln)?,
                k: parse_opt(f[6], ln)?,
                auc: parse_req(f[7], ln)?,
                seconds: parse_req(f[8], ln)?,
            });
        }
        Ok(ResultTable {
            rows,
            failures: Vec::new(),
        })
    }

    /// AUC values grouped by (method, α, n), in first-appearance order of
    /// methods and ascending α and n.
    pub fn cells(&self) -> Vec<CellSummary> {
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        let mut groups: BTreeMap<(usize, u64, usize), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            let m = methods.iter().position(|x| *x == r.method).unwrap_or(0);
            groups
                .entry((m, ordered_bits(r.alpha), r.n))
                .or_default()
                .push(r.auc);
        }
        groups
            .into_iter()
            .map(|((m, a, n), aucs)| {
                let count = aucs.len();
                let mean = aucs.iter().sum::<f64>() / count as f64;
                let sd = if count > 1 {
                    (aucs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
                } else {
                    0.0
                };
                let alpha = from_ordered_bits(a);
                let failures = self
                    .failures
                    .iter()
                    .filter(|f| f.method == methods[m] && f.alpha == alpha && f.n == n)
                    .count();
                CellSummary {
                    method: methods[m].to_string(),
                    alpha,
                    n,
                    count,
                    failures,
                    mean_auc: mean,
                    sd_auc: sd,
                    aucs,
                }
            })
            .collect()
    }

    pub fn mean_auc(&self, method: &str, alpha: f64, n: usize) -> Option<f64> {
        self.cells()
            .into_iter()
            .find(|c| c.method == method && c.alpha == alpha && c.n == n)
            .map(|c| c.mean_auc)
    }

    pub fn summary_json(&self) -> Result<String> {
        let cells: Vec<serde_json::Value> = self
            .cells()
            .into_iter()
            .map(|c| {
                serde_json::json!({
                    "method": c.method,
                    "alpha": c.alpha,
                    "n": c.n,
                    "count": c.count,
                    "failures": c.failures,
                    "mean_auc": c.mean_auc,
                    "sd_auc": c.sd_auc,
                })
            })
            .collect();
        let v = serde_json::json!({ "cells": cells, "failures": self.failures });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Total order on f64 as u64 keys.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub method: String,
    pub alpha: f64,
    pub n: usize,
    pub count: usize,
    pub failures: usize,
    pub mean_auc: f64,
    pub sd_auc: f64,
    pub aucs: Vec<f64>,
}

type TaskOutcome = Vec<std::result::Result<ResultRow, FailedRun>>;

fn run_task(
    config: &ExperimentConfig,
    registry: &MethodRegistry,
    ops: &FemOperators,
    basis: &EigenBasis,
    alpha: f64,
    n: usize,
    replicate: usize,
) -> TaskOutcome {
    let methods: Vec<&str> = config.methods.iter().map(String::as_str).collect();
    let fail_all = |e: Error| {
        methods
            .iter()
            .map(|m| {
                Err(FailedRun {
                    method: m.to_string(),
                    alpha,
                    n,
                    replicate,
                    error: e.to_string(),
                })
            })
            .collect::<TaskOutcome>()
    };
    let gen = |split: u64, per_group: usize| {
        let seed = config.split_seed(alpha, replicate, split);
        generate_dataset(&config.sim(alpha, per_group, seed), basis)
    };
    let data = (|| Ok::<_, Error>((gen(0, n)?, gen(1, n)?, gen(2, config.test_size / 2)?)))();
    let (train, validation, test) = match data {
        Ok(d) => d,
        Err(e) => return fail_all(e),
    };
    methods
        .iter()
        .map(|&name| {
            let started = Instant::now();
            let outcome = registry.get(name).and_then(|method| {
                let sel = grid_search(&train, &validation, method, ops, &config.grids)?;
                let a = auc(&sel.model.score(ops, &test)?, &test.labels)?;
                Ok((method.name(), sel.hyperparameters, a))
            });
            match outcome {
                Ok((canonical, hp, a)) => Ok(ResultRow {
                    method: canonical.to_string(),
                    alpha,
                    n,
                    replicate,
                    lambda1: hp.lambda1,
                    lambda2: hp.lambda2,
                    k: hp.k,
                    auc: a,
                    seconds: if config.record_timing {
                        started.elapsed().as_secs_f64()
                    } else {
                        0.0
                    },
                }),
                Err(e) => Err(FailedRun {
                    method: name.to_string(),
                    alpha,
                    n,
                    replicate,
                    error: e.to_string(),
                }),
            }
        })
        .collect()
}

/// Runs every (α, n, replicate) task on `jobs` worker threads. Output order
/// is fixed by the task list, not by completion order.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    registry: &MethodRegistry,
    ops: &FemOperators,
    basis: &EigenBasis,
    jobs: usize,
) -> Result<ResultTable> {
    config.validate(registry)?;
    if basis.len() < config.basis_size + 1 {
        return Err(Error::BasisTooSmall {
            needed: config.basis_size + 1,
            available: basis.len(),
        });
    }
    let mut tasks = Vec::new();
    for &alpha in &config.alphas {
        for &n in &config.sample_sizes {
            for r in 0..config.replicates {
                tasks.push((alpha, n, r));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<TaskOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(a, n, r)| run_task(config, registry, ops, basis, a, n, r))
            .collect()
    });
    let mut table = ResultTable::default();
    for o in outcomes.into_iter().flatten() {
        match o {
            Ok(row) => table.rows.push(row),
            Err(f) => table.failures.push(f),
        }
    }
    Ok(table)
}

pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<ResultTable> {
    let registry = MethodRegistry::default();
    config.validate(&registry)?;
    let (ops, basis) = prepare_basis(config)?;
    run_experiment_with(config, &registry, &ops, &basis, jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{G1, G2};

    #[test]
    fn auc_examples() {
        let l = [G1, G1, G2, G2];
        assert_eq!(auc(&[0.0, 1.0, 2.0, 3.0], &l).unwrap(), 1.0);
        assert_eq!(auc(&[3.0, 2.0, 1.0, 0.0], &l).unwrap(), 0.0);
        assert_eq!(auc(&[1.0; 4], &l).unwrap(), 0.5);
        assert_eq!(auc(&[0.0, 2.0, 1.0, 3.0], &l).unwrap(), 0.75);
        assert!(matches!(auc(&[1.0, 2.0], &[G1, G1]), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_matches_pair_count() {
        let s = [0.3, 0.1, 0.3, 0.9, 0.5, 0.1, 0.7];
        let l = [G1, G2, G2, G1, G2, G1, G2];
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] == G1 && l[j] == G2 {
                    den += 1.0;
                    num += if s[j] > s[i] { 1.0 } else if s[j] == s[i] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&s, &l).unwrap() - num / den).abs() < 1e-15);
    }

    #[test]
    fn sens_spec() {
        let (se, sp) = sensitivity_specificity(&[0.0, 1.0, 2.0, 3.0], &[G1, G2, G1, G2], 1.5).unwrap();
        assert_eq!((se, sp), (0.5, 0.5));
    }

    #[test]
    fn csv_round_trip() {
        let t = ResultTable {
            rows: vec![
                ResultRow {
                    method: "flda".into(),
                    alpha: 0.2,
                    n: 8,
                    replicate: 0,
                    lambda1: None,
                    lambda2: Some(0.125),
                    k: None,
                    auc: 0.75,
                    seconds: 0.0,
                },
                ResultRow {
                    method: "fpca-lda".into(),
                    alpha: 0.2,
                    n: 8,
                    replicate: 0,
                    lambda1: None,
                    lambda2: None,
                    k: Some(5),
                    auc: 0.7,
                    seconds: 0.0,
                },
            ],
            failures: vec![],
        };
        let csv = t.to_csv();
        assert!(csv.starts_with(RESULT_HEADER));
        assert_eq!(ResultTable::from_csv(&csv).unwrap(), t);
        let cells = t.cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].method, "flda");
        assert_eq!(t.mean_auc("fpca-lda", 0.2, 8), Some(0.7));
    }

    #[test]
    fn ordered_bits_round_trip() {
        for x in [-2.5, -0.0, 0.0, 0.2, 7.0] {
            assert_eq!(from_ordered_bits(ordered_bits(x)).to_bits(), x.to_bits());
        }
        assert!(ordered_bits(-1.0) < ordered_bits(0.5));
        assert!(ordered_bits(0.2) < ordered_bits(0.4));
    }
}
