//! Discriminant methods behind one trait, looked up by name.
//!
//! The experiment harness and the CLI only see [`DiscriminantMethod`]; the
//! two built-ins are the penalized functional LDA (`flda`) and the
//! FPCA + LDA baseline (`fpca-lda`).

use serde::{Deserialize, Serialize};

use crate::baseline::{fpca_lda_fit, FpcaLdaModel};
use crate::classifier::{
    center_rows, column_means, fit_warm, reference_lambda, score_rows, stacked_solution,
    DiscriminantModel, FitConfig, Label, LabeledFunctionalData, ThresholdRule,
};
use crate::error::{Error, Result};
use crate::fem::FemOperators;
use crate::lsqr::LsqrConfig;

/// One point of a hyperparameter grid. Absent entries do not apply.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// λ₂ grid as multiples of the data-scaled reference.
    pub lambda2_factors: Vec<f64>,
    /// λ₁ grid; only used when the training data carry geometry.
    pub lambda1: Vec<f64>,
    pub k: Vec<usize>,
    pub solver: LsqrConfig,
    /// Cut-off rule stored with fitted FLDA models.
    #[serde(default = "youden")]
    pub threshold: ThresholdRule,
}

fn youden() -> ThresholdRule {
    ThresholdRule::Youden
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lambda2_factors: log_grid(1e-4, 1e2, 7),
            lambda1: vec![1.0],
            k: vec![5, 10, 20, 40],
            solver: LsqrConfig::default(),
            threshold: ThresholdRule::Youden,
        }
    }
}

/// A fitted model that can score new samples.
pub trait FittedScorer: Send + Sync {
    fn hyperparameters(&self) -> Hyperparameters;
    fn score(&self, ops: &FemOperators, data: &LabeledFunctionalData) -> Result<Vec<f64>>;
    fn to_json(&self) -> Result<serde_json::Value>;
    /// Label of a score under the model's own decision rule.
    fn classify(&self, score: f64) -> Label {
        if score > 0.0 {
            Label::G2
        } else {
            Label::G1
        }
    }
    /// Stacked coefficients usable as a warm start by the same method.
    fn warm_start(&self) -> Option<Vec<f64>> {
        None
    }
}

pub trait DiscriminantMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Grid points for this training set, most preferred first: on equal
    /// validation AUC the earlier candidate wins.
    fn candidates(
        &self,
        train: &LabeledFunctionalData,
        ops: &FemOperators,
        grids: &GridConfig,
    ) -> Result<Vec<Hyperparameters>>;
    fn fit(
        &self,
        train: &LabeledFunctionalData,
        ops: &FemOperators,
        hp: &Hyperparameters,
        grids: &GridConfig,
        previous: Option<&dyn FittedScorer>,
    ) -> Result<Box<dyn FittedScorer>>;
    /// Rebuilds a fitted model from the value written by `to_json`.
    fn load(&self, value: serde_json::Value) -> Result<Box<dyn FittedScorer>>;
}

pub struct Flda;

impl FittedScorer for DiscriminantModel {
    fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            lambda1: self.lambda1,
            lambda2: Some(self.lambda2),
            k: None,
        }
    }

    fn score(&self, ops: &FemOperators, data: &LabeledFunctionalData) -> Result<Vec<f64>> {
        score_rows(self, ops, &data.coeffs, data.geometry.as_ref())
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn classify(&self, score: f64) -> Label {
        DiscriminantModel::classify(self, score)
    }

    fn warm_start(&self) -> Option<Vec<f64>> {
        Some(stacked_solution(self))
    }
}

impl DiscriminantMethod for Flda {
    fn name(&self) -> &'static str {
        "flda"
    }

    fn description(&self) -> &'static str {
        "penalized least-squares functional LDA (Laplace-Beltrami penalty, LSQR)"
    }

    /// λ₂ descending, so ties favour stronger regularization.
    fn candidates(
        &self,
        train: &LabeledFunctionalData,
        ops: &FemOperators,
        grids: &GridConfig,
    ) -> Result<Vec<Hyperparameters>> {
        let mean = column_means(&train.coeffs);
        let lref = reference_lambda(&center_rows(&train.coeffs, &mean), ops)?;
        let mut l2: Vec<f64> = grids.lambda2_factors.iter().map(|f| f * lref).collect();
        l2.sort_by(|a, b| b.total_cmp(a));
        let l1: Vec<Option<f64>> = if train.geometry.is_some() {
            let mut v = grids.lambda1.clone();
            v.sort_by(|a, b| b.total_cmp(a));
            v.into_iter().map(Some).collect()
        } else {
            vec![None]
        };
        let mut out = Vec::with_capacity(l1.len() * l2.len());
        for a in &l1 {
            for b in &l2 {
                out.push(Hyperparameters {
                    lambda1: *a,
                    lambda2: Some(*b),
                    k: None,
                });
            }
        }
        Ok(out)
    }

    fn fit(
        &self,
        train: &LabeledFunctionalData,
        ops: &FemOperators,
        hp: &Hyperparameters,
        grids: &GridConfig,
        previous: Option<&dyn FittedScorer>,
    ) -> Result<Box<dyn FittedScorer>> {
        let lambda2 = hp
            .lambda2
            .ok_or_else(|| Error::InvalidArgument("flda needs lambda2".into()))?;
        let config = FitConfig {
            lambda1: hp.lambda1,
            lambda2,
            solver: grids.solver,
            threshold: grids.threshold,
        };
        let start = previous.and_then(|p| p.warm_start());
        let model = fit_warm(train, ops, &config, start.as_deref())?;
        Ok(Box::new(model))
    }

    fn load(&self, value: serde_json::Value) -> Result<Box<dyn FittedScorer>> {
        let model: DiscriminantModel = serde_json::from_value(value)?;
        Ok(Box::new(model))
    }
}

pub struct FpcaLda;

struct FpcaLdaScorer {
    model: FpcaLdaModel,
    requested_k: usize,
}

impl FittedScorer for FpcaLdaScorer {
    fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            k: Some(self.requested_k),
            ..Hyperparameters::default()
        }
    }

    fn score(&self, ops: &FemOperators, data: &LabeledFunctionalData) -> Result<Vec<f64>> {
        self.model.score_rows(ops, &data.coeffs)
    }

    fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(&self.model)?)
    }
}

impl DiscriminantMethod for FpcaLda {
    fn name(&self) -> &'static str {
        "fpca-lda"
    }

    fn description(&self) -> &'static str {
        "mass-weighted FPCA followed by two-class LDA on the component scores"
    }

    /// k ascending, so ties favour the smaller model.
    fn candidates(
        &self,
        train: &LabeledFunctionalData,
        _ops: &FemOperators,
        grids: &GridConfig,
    ) -> Result<Vec<Hyperparameters>> {
        let cap = train.len().min(train.dim());
        let mut ks: Vec<usize> = grids.k.iter().copied().filter(|&k| k >= 1 && k <= cap).collect();
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no component count in {:?} fits {} samples",
                grids.k, cap
            )));
        }
        Ok(ks
            .into_iter()
            .map(|k| Hyperparameters {
                k: Some(k),
                ..Hyperparameters::default()
            })
            .collect())
    }

    fn fit(
        &self,
        train: &LabeledFunctionalData,
        ops: &FemOperators,
        hp: &Hyperparameters,
        _grids: &GridConfig,
        _previous: Option<&dyn FittedScorer>,
    ) -> Result<Box<dyn FittedScorer>> {
        let k = hp
            .k
            .ok_or_else(|| Error::InvalidArgument("fpca-lda needs k".into()))?;
        let model = fpca_lda_fit(&train.coeffs, &train.labels, ops, k)?;
        Ok(Box::new(FpcaLdaScorer { model, requested_k: k }))
    }

    fn load(&self, value: serde_json::Value) -> Result<Box<dyn FittedScorer>> {
        let model: FpcaLdaModel = serde_json::from_value(value)?;
        let requested_k = model.fpca.k();
        Ok(Box::new(FpcaLdaScorer { model, requested_k }))
    }
}

/// Name-keyed collection of methods.
pub struct MethodRegistry {
    methods: Vec<Box<dyn DiscriminantMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = MethodRegistry::empty();
        r.register(Box::new(Flda));
        r.register(Box::new(FpcaLda));
        r
    }
}

fn normalize(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace(['_', '+'], "-")
}

impl MethodRegistry {
    pub fn empty() -> Self {
        MethodRegistry { methods: Vec::new() }
    }

    /// Registers a method, replacing any previous one with the same name.
    pub fn register(&mut self, method: Box<dyn DiscriminantMethod>) {
        let key = normalize(method.name());
        self.methods.retain(|m| normalize(m.name()) != key);
        self.methods.push(method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn DiscriminantMethod> {
        let key = normalize(name);
        self.methods
            .iter()
            .find(|m| normalize(m.name()) == key)
            .map(|m| m.as_ref())
            .ok_or_else(|| Error::UnknownMethod(format!("{name} (known: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn DiscriminantMethod> {
        self.methods.iter().map(|m| m.as_ref())
    }
}
