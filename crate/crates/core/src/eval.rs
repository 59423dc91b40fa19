//! Splitting, scoring and the multi-method benchmark.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{fit, prepare_inputs, InputFailure, Method, PipelineConfig};
use crate::types::{Dataset, DeviceLabel, SplitIndices};

pub const DEFAULT_RATIO: f64 = 0.7;

/// Per-class seeded shuffle; the first `⌊ratio·n_c⌋` indices of each class train.
pub fn stratified_split(
    labels: &[usize],
    classes: &[DeviceLabel],
    ratio: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in classes {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class.index)
            .map(|(i, _)| i)
            .collect();
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                name: class.name.clone(),
                count: members.len(),
            });
        }
        members.shuffle(&mut rng);
        // The small offset keeps products like 0.7·10 from landing just below an integer.
        let n_train = (ratio * members.len() as f64 + 1e-9).floor() as usize;
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes.len()) {
        return Err(Error::LabelOutOfRange {
            label,
            n_classes: classes.len(),
        });
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices {
        train,
        test,
        seed,
        ratio,
    })
}

/// Fraction of positions where prediction equals truth.
pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("accuracy needs at least one sample".into()));
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Counts (rows = truth, columns = prediction) and their row-normalized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub normalized: Vec<Vec<f64>>,
    /// Classes without test samples; their rows are all zero.
    pub empty_rows: Vec<usize>,
}

pub fn confusion_matrix_normalized(
    truth: &[usize],
    predicted: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for l in [t, p] {
            if l >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    n_classes,
                });
            }
        }
        counts[t][p] += 1;
    }
    let mut empty_rows = Vec::new();
    let normalized = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                empty_rows.push(i);
                vec![0.0; n_classes]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        counts,
        normalized,
        empty_rows,
    })
}

/// Re-normalizes rows to sum to one; zero rows stay zero.
pub fn normalize_rows(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s == 0.0 {
                row.clone()
            } else {
                row.iter().map(|v| v / s).collect()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub path: String,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: Method,
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Test samples per class, in label order.
    pub test_counts: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub ratio: f64,
    /// Images dropped because they failed to decode or preprocess.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<InputFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<Prediction>>,
    /// CNN mean loss per epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_history: Option<Vec<f64>>,
    #[serde(skip)]
    pub split: Option<Arc<SplitIndices>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: Method,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub split: Arc<SplitIndices>,
    pub reports: Vec<EvaluationReport>,
    pub failures: Vec<MethodFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub pipeline: PipelineConfig,
    pub ratio: f64,
    pub seed: u64,
    /// Emit one prediction record per test image.
    pub record_predictions: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            pipeline: PipelineConfig::default(),
            ratio: DEFAULT_RATIO,
            seed: crate::DEFAULT_SEED,
            record_predictions: false,
        }
    }
}

/// Evaluates one method on a fixed split.
pub fn evaluate_method(
    dataset: &Dataset,
    method: Method,
    split: &Arc<SplitIndices>,
    cfg: &BenchmarkConfig,
) -> Result<EvaluationReport> {
    let pcfg = &cfg.pipeline;
    let pre = pcfg.preprocessing(method);
    let all: Vec<usize> = (0..dataset.len()).collect();
    let inputs = prepare_inputs(dataset, &all, &pre, pcfg.decode_policy)?;
    let (train_rows, train_idx) = inputs.subset(&split.train);
    let (test_rows, test_idx) = inputs.subset(&split.test);
    let label_of = |i: &usize| dataset.records[*i].label.index;
    let train_labels: Vec<usize> = train_idx.iter().map(label_of).collect();
    let truth: Vec<usize> = test_idx.iter().map(label_of).collect();

    let (model, history) = fit(method, &train_rows, &train_labels, &dataset.labels, pcfg)?;
    let predicted = model.predict_rows(&test_rows)?;
    let n_classes = dataset.labels.len();
    let confusion = confusion_matrix_normalized(&truth, &predicted, n_classes)?;
    let predictions = cfg.record_predictions.then(|| {
        test_idx
            .iter()
            .zip(&predicted)
            .map(|(&i, &p)| Prediction {
                path: dataset.records[i].path.display().to_string(),
                truth: dataset.records[i].label.name.clone(),
                predicted: dataset.labels[p].name.clone(),
            })
            .collect()
    });
    Ok(EvaluationReport {
        method,
        labels: dataset.label_names(),
        accuracy: accuracy(&truth, &predicted)?,
        test_counts: confusion.counts.iter().map(|r| r.iter().sum()).collect(),
        confusion,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        seed: split.seed,
        ratio: split.ratio,
        skipped: inputs.failures,
        predictions,
        loss_history: history.map(|h| h.epoch_losses),
        split: Some(Arc::clone(split)),
    })
}

/// Runs every requested method against one shared split. A failing method is
/// recorded and the others still report.
pub fn run_benchmark(dataset: &Dataset, methods: &[Method], cfg: &BenchmarkConfig) -> Result<BenchmarkRun> {
    let split = Arc::new(stratified_split(
        &dataset.label_indices(),
        &dataset.labels,
        cfg.ratio,
        cfg.seed,
    )?);
    let mut cfg = cfg.clone();
    cfg.pipeline.cnn.seed = cfg.seed;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for &method in methods {
        log::info!("running {method}");
        match evaluate_method(dataset, method, &split, &cfg) {
            Ok(r) => reports.push(r),
            Err(e) => {
                log::error!("{method} failed: {e}");
                failures.push(MethodFailure {
                    method,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(BenchmarkRun {
        split,
        reports,
        failures,
    })
}

/// Fixed-width text table of a row-normalized confusion matrix.
pub fn render_confusion(report: &EvaluationReport) -> String {
    let corner = "true\\pred";
    let col = report.labels.iter().map(String::len).max().unwrap_or(4).max(6);
    let first = col.max(corner.len());
    let mut s = format!("{corner:>first$} |");
    for l in &report.labels {
        s.push_str(&format!(" {l:>col$}"));
    }
    s.push('\n');
    s.push_str(&"-".repeat(first + 2 + (col + 1) * report.labels.len()));
    s.push('\n');
    for (i, row) in report.confusion.normalized.iter().enumerate() {
        s.push_str(&format!("{:>first$} |", report.labels[i]));
        for v in row {
            s.push_str(&format!(" {v:>col$.2}"));
        }
        if report.confusion.empty_rows.contains(&i) {
            s.push_str("  (no test samples)");
        }
        s.push('\n');
    }
    s
}

/// Accuracy comparison across methods, one line each.
pub fn render_summary(run: &BenchmarkRun) -> String {
    let mut s = format!(
        "split seed {} ratio {:.2}: {} train / {} test\n",
        run.split.seed,
        run.split.ratio,
        run.split.train.len(),
        run.split.test.len()
    );
    s.push_str("method  accuracy\n");
    for r in &run.reports {
        s.push_str(&format!("{:<7} {:.4}\n", r.method.name(), r.accuracy));
    }
    for f in &run.failures {
        s.push_str(&format!("{:<7} FAILED: {}\n", f.method.name(), f.error));
    }
    s
}

/// Confusion matrix as CSV with a `true\pred` header row.
pub fn confusion_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("true\\pred");
    for l in &report.labels {
        s.push(',');
        s.push_str(l);
    }
    s.push('\n');
    for (label, row) in report.labels.iter().zip(&report.confusion.normalized) {
        s.push_str(label);
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}
