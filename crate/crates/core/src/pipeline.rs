//! Per-method glue: image → model inputs, training, prediction.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cnn::{hwc_to_chw, train_cnn, CnnArchitecture, CnnTrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::ingest::{load_record, resize_bilinear, DecodePolicy, ResizeSpec};
use crate::jpeg::jpeg_feature_vector;
use crate::model::{ModelPayload, Preprocessing, TrainedModel};
use crate::prnu::{prnu_feature_vector, PrnuConfig};
use crate::svm::{KernelChoice, StandardizedSvm, SvmParams};
use crate::types::{Dataset, DeviceLabel, FeatureMatrix, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Jpeg,
    Prnu,
    Cnn,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Jpeg, Method::Prnu, Method::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jpeg => "jpeg",
            Method::Prnu => "prnu",
            Method::Cnn => "cnn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jpeg" => Ok(Method::Jpeg),
            "prnu" => Ok(Method::Prnu),
            "cnn" => Ok(Method::Cnn),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected jpeg, prnu or cnn)"
            ))),
        }
    }
}

/// Parses a comma-separated method list, keeping order and dropping repeats.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods selected".into()));
    }
    Ok(out)
}

/// Hyperparameters of all three pipelines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub prnu: PrnuConfig,
    pub svm: SvmParams,
    /// RBF width for the JPEG classifier; `None` uses `1/(d·Var X)`.
    pub rbf_gamma: Option<f64>,
    pub resize: ResizeSpec,
    pub cnn: CnnTrainConfig,
    pub cnn_arch: CnnArchitecture,
    pub decode_policy: DecodePolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prnu: PrnuConfig::default(),
            svm: SvmParams::default(),
            rbf_gamma: None,
            resize: ResizeSpec::default(),
            cnn: CnnTrainConfig::default(),
            cnn_arch: CnnArchitecture::default(),
            decode_policy: DecodePolicy::Abort,
        }
    }
}

impl PipelineConfig {
    pub fn preprocessing(&self, method: Method) -> Preprocessing {
        match method {
            Method::Jpeg => Preprocessing::BlockDct,
            Method::Prnu => Preprocessing::Prnu(self.prnu),
            Method::Cnn => Preprocessing::Resize(self.resize),
        }
    }
}

/// Model input for one image under a given preprocessing.
pub fn image_to_input(img: &RasterImage, pre: &Preprocessing) -> Result<Vec<f64>> {
    match pre {
        Preprocessing::BlockDct => Ok(jpeg_feature_vector(img)?.0),
        Preprocessing::Prnu(cfg) => Ok(prnu_feature_vector(img, cfg)?.0),
        Preprocessing::Resize(spec) => {
            let rgb = if img.channels() == 1 {
                let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
                RasterImage::new(img.height(), img.width(), 3, img.range(), data)?
            } else {
                img.clone()
            };
            let small = resize_bilinear(&rgb, *spec)?;
            Ok(hwc_to_chw(small.data(), spec.height, spec.width, 3))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputFailure {
    pub path: PathBuf,
    pub error: String,
}

/// Model inputs for a subset of dataset records.
#[derive(Debug, Clone)]
pub struct PreparedInputs {
    pub rows: Vec<Vec<f64>>,
    /// Dataset index of every row.
    pub record_indices: Vec<usize>,
    pub failures: Vec<InputFailure>,
}

impl PreparedInputs {
    pub fn labels(&self, dataset: &Dataset) -> Vec<usize> {
        self.record_indices
            .iter()
            .map(|&i| dataset.records[i].label.index)
            .collect()
    }

    /// Rows whose record index is in `wanted`, in `wanted` order.
    pub fn subset(&self, wanted: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut idx = Vec::new();
        for &w in wanted {
            if let Ok(pos) = self.record_indices.binary_search(&w) {
                rows.push(self.rows[pos].clone());
                idx.push(w);
            }
        }
        (rows, idx)
    }
}

/// Decodes and preprocesses the records at `indices` (ascending). Under
/// [`DecodePolicy::Skip`] failing images are dropped and recorded; under
/// `Abort` the first failure is returned.
pub fn prepare_inputs(
    dataset: &Dataset,
    indices: &[usize],
    pre: &Preprocessing,
    policy: DecodePolicy,
) -> Result<PreparedInputs> {
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = PreparedInputs {
        rows: Vec::with_capacity(sorted.len()),
        record_indices: Vec::with_capacity(sorted.len()),
        failures: Vec::new(),
    };
    for i in sorted {
        let record = &dataset.records[i];
        match load_record(record).and_then(|img| image_to_input(&img, pre)) {
            Ok(row) => {
                out.rows.push(row);
                out.record_indices.push(i);
            }
            Err(e) if policy == DecodePolicy::Skip => {
                log::warn!("skipping {}: {e}", record.path.display());
                out.failures.push(InputFailure {
                    path: record.path.clone(),
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Trains `method` on prepared rows.
pub fn fit(
    method: Method,
    rows: &[Vec<f64>],
    labels: &[usize],
    label_order: &[DeviceLabel],
    cfg: &PipelineConfig,
) -> Result<(TrainedModel, Option<TrainHistory>)> {
    let n_classes = label_order.len();
    let preprocessing = cfg.preprocessing(method);
    let (payload, history) = match method {
        Method::Jpeg | Method::Prnu => {
            let x = FeatureMatrix::from_rows(rows.to_vec(), labels.to_vec())?;
            let kernel = match method {
                Method::Jpeg => KernelChoice::Rbf(cfg.rbf_gamma),
                _ => KernelChoice::Linear,
            };
            let svm = StandardizedSvm::fit(&x, n_classes, kernel, &cfg.svm)?;
            (ModelPayload::Svm(svm), None)
        }
        Method::Cnn => {
            let mut arch = cfg.cnn_arch.with_classes(n_classes);
            arch.input.h = cfg.resize.height;
            arch.input.w = cfg.resize.width;
            let (net, history) = train_cnn(arch, rows, labels, &cfg.cnn)?;
            (
                ModelPayload::Cnn {
                    net,
                    seed: cfg.cnn.seed,
                },
                Some(history),
            )
        }
    };
    Ok((
        TrainedModel {
            method,
            labels: label_order.to_vec(),
            preprocessing,
            payload,
        },
        history,
    ))
}
