//! Standardization and support vector classification.
//!
//! Binary soft-margin SVMs are trained with [`smo`]; multiclass problems are
//! reduced one-vs-rest and predicted by argmax of the decision values, ties
//! going to the lowest class index.

pub mod smo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FeatureMatrix;

pub use smo::SolverReport;

pub const DEFAULT_C: f64 = 1.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Columns whose standard deviation falls below this are passed through unscaled.
const DEGENERATE_STD: f64 = 1e-12;

/// Per-column affine map to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Result<Standardizer> {
        if x.rows() < 2 {
            return Err(Error::EmptyInput(format!(
                "standardizer needs at least 2 rows, got {}",
                x.rows()
            )));
        }
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let dv = v - m;
                *s += dv * dv;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd < DEGENERATE_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn apply(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        if x.rows() > 0 && x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.cols(),
            });
        }
        let mut values = Vec::with_capacity(x.values().len());
        for row in x.iter_rows() {
            values.extend(self.apply_row(row)?);
        }
        Ok(x.with_values(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(Error::Config(
                format!("rbf gamma must be positive, got {gamma}"),
            )),
            _ => Ok(()),
        }
    }

    #[inline]
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = x - y;
                        d * d
                    })
                    .sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_unchecked(a, b))
    }

    /// Full Gram matrix of the rows of `x`, row-major.
    pub fn gram(&self, x: &FeatureMatrix) -> Vec<f64> {
        let n = x.rows();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval_unchecked(x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

/// `1 / (d · Var(X))` over every entry of `x`; 1/d when the variance vanishes.
pub fn gamma_scale(x: &FeatureMatrix) -> f64 {
    let vals = x.values();
    let d = x.cols().max(1) as f64;
    if vals.is_empty() {
        return 1.0 / d;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (d * var)
    } else {
        1.0 / d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: DEFAULT_C,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `αᵢ·yᵢ` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub report: SolverReport,
}

impl BinarySvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// `f(x) = Σ αᵢyᵢ K(xᵢ, x) + b`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let s: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval_unchecked(sv, x))
            .sum();
        Ok(s + self.bias)
    }

    /// Weight vector of a linear-kernel model.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let mut w = vec![0.0; self.dim()];
        for (sv, c) in self.support_vectors.iter().zip(&self.dual_coef) {
            for (wi, v) in w.iter_mut().zip(sv) {
                *wi += c * v;
            }
        }
        Some(w)
    }
}

fn check_training_input(x: &FeatureMatrix, params: &SvmParams, kernel: &Kernel) -> Result<()> {
    kernel.validate()?;
    if !(params.c > 0.0) {
        return Err(Error::Config(format!("C must be positive, got {}", params.c)));
    }
    if x.rows() == 0 {
        return Err(Error::EmptyInput("svm training rows".into()));
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("svm training features".into()));
    }
    Ok(())
}

/// Trains a binary SVM on targets `y ∈ {−1, +1}`.
pub fn train_binary_svm(
    x: &FeatureMatrix,
    y: &[f64],
    kernel: Kernel,
    params: &SvmParams,
) -> Result<BinarySvmModel> {
    train_binary_with_gram(x, y, kernel, params, &kernel_gram(x, kernel, params)?, false)
}

/// Like [`train_binary_svm`], recording the dual objective after every update.
pub fn train_binary_svm_traced(
    x: &FeatureMatrix,
    y: &[f64],
    kernel: Kernel,
    params: &SvmParams,
) -> Result<BinarySvmModel> {
    train_binary_with_gram(x, y, kernel, params, &kernel_gram(x, kernel, params)?, true)
}

fn kernel_gram(x: &FeatureMatrix, kernel: Kernel, params: &SvmParams) -> Result<Vec<f64>> {
    check_training_input(x, params, &kernel)?;
    Ok(kernel.gram(x))
}

fn train_binary_with_gram(
    x: &FeatureMatrix,
    y: &[f64],
    kernel: Kernel,
    params: &SvmParams,
    gram: &[f64],
    trace: bool,
) -> Result<BinarySvmModel> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Config(format!("binary targets must be ±1, got {bad}")));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    let sol = smo::solve(
        gram,
        y,
        &smo::SmoParams {
            c: params.c,
            tolerance: params.tolerance,
            max_iterations: params.max_iterations,
            trace,
        },
    );
    if !sol.report.converged {
        log::warn!(
            "SMO stopped at the iteration cap ({}) with gap {:.3e}",
            sol.report.iterations,
            sol.report.gap
        );
    }
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(x.row(i).to_vec());
            dual_coef.push(a * y[i]);
        }
    }
    Ok(BinarySvmModel {
        kernel,
        c: params.c,
        support_vectors,
        dual_coef,
        bias: sol.bias,
        report: sol.report,
    })
}

/// One-vs-rest ensemble, one binary model per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvmModel {
    pub models: Vec<BinarySvmModel>,
}

impl MulticlassSvmModel {
    pub fn n_classes(&self) -> usize {
        self.models.len()
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.decision(x)).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax_first(&self.decision_values(x)?))
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Trains one binary model per class using the labels stored in `x`.
pub fn train_multiclass(
    x: &FeatureMatrix,
    n_classes: usize,
    kernel: Kernel,
    params: &SvmParams,
) -> Result<MulticlassSvmModel> {
    if n_classes < 2 {
        return Err(Error::Config(format!(
            "multiclass training needs at least 2 classes, got {n_classes}"
        )));
    }
    if let Some(&label) = x.label_indices().iter().find(|&&l| l >= n_classes) {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    let gram = kernel_gram(x, kernel, params)?;
    let models = (0..n_classes)
        .map(|class| {
            let y: Vec<f64> = x
                .label_indices()
                .iter()
                .map(|&l| if l == class { 1.0 } else { -1.0 })
                .collect();
            train_binary_with_gram(x, &y, kernel, params, &gram, false)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassSvmModel { models })
}

/// Standardizer plus classifier, the full SVM-side model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedSvm {
    pub standardizer: Standardizer,
    pub classifier: MulticlassSvmModel,
}

/// Kernel choice before `gamma` is resolved against the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Linear,
    /// RBF with `gamma`, or the `1/(d·Var X)` heuristic when `None`.
    Rbf(Option<f64>),
}

impl StandardizedSvm {
    pub fn fit(
        x: &FeatureMatrix,
        n_classes: usize,
        kernel: KernelChoice,
        params: &SvmParams,
    ) -> Result<StandardizedSvm> {
        let standardizer = Standardizer::fit(x)?;
        let xs = standardizer.apply(x)?;
        let kernel = match kernel {
            KernelChoice::Linear => Kernel::Linear,
            KernelChoice::Rbf(Some(gamma)) => Kernel::Rbf { gamma },
            KernelChoice::Rbf(None) => Kernel::Rbf {
                gamma: gamma_scale(&xs),
            },
        };
        let classifier = train_multiclass(&xs, n_classes, kernel, params)?;
        Ok(StandardizedSvm {
            standardizer,
            classifier,
        })
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        self.classifier.predict(&self.standardizer.apply(x)?)
    }
}
