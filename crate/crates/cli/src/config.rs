//! Flat run configuration: defaults, then a TOML file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use camid_core::cnn::{AdamConfig, CnnArchitecture, CnnTrainConfig};
use camid_core::eval::{BenchmarkConfig, DEFAULT_RATIO};
use camid_core::ingest::{DecodePolicy, ResizeSpec};
use camid_core::pipeline::PipelineConfig;
use camid_core::prnu::PrnuConfig;
use camid_core::svm::{SvmParams, DEFAULT_C, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Every tunable of a run. All keys are optional in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset root, `<root>/<device>/*.{jpg,jpeg,png,ppm}`.
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// Comma-separated subset of `jpeg,prnu,cnn`.
    pub methods: String,
    pub ratio: f64,
    pub seed: u64,
    pub on_decode_error: DecodePolicy,
    pub record_predictions: bool,

    pub prnu_sigma_residual: f64,
    pub prnu_sigma_window: f64,
    pub prnu_noise_variance: f64,
    pub prnu_crop: usize,
    pub prnu_stride: usize,

    pub svm_c: f64,
    pub svm_tolerance: f64,
    pub svm_max_iterations: usize,
    /// RBF width for the JPEG classifier; unset means `1/(d·Var X)`.
    pub rbf_gamma: Option<f64>,

    pub cnn_input_size: usize,
    pub cnn_conv_filters: [usize; 3],
    pub cnn_dense_units: usize,
    pub cnn_epochs: usize,
    pub cnn_batch_size: usize,
    pub cnn_learning_rate: f64,
    pub cnn_beta1: f64,
    pub cnn_beta2: f64,
    pub cnn_epsilon: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let prnu = PrnuConfig::default();
        let adam = AdamConfig::default();
        let cnn = CnnTrainConfig::default();
        let arch = CnnArchitecture::default();
        RunConfig {
            data: None,
            out: PathBuf::from("out"),
            methods: "jpeg,prnu,cnn".into(),
            ratio: DEFAULT_RATIO,
            seed: camid_core::DEFAULT_SEED,
            on_decode_error: DecodePolicy::Abort,
            record_predictions: true,
            prnu_sigma_residual: prnu.sigma_residual,
            prnu_sigma_window: prnu.sigma_window,
            prnu_noise_variance: prnu.noise_variance,
            prnu_crop: prnu.crop,
            prnu_stride: prnu.stride,
            svm_c: DEFAULT_C,
            svm_tolerance: DEFAULT_TOLERANCE,
            svm_max_iterations: DEFAULT_MAX_ITERATIONS,
            rbf_gamma: None,
            cnn_input_size: ResizeSpec::default().height,
            cnn_conv_filters: arch.conv_filters,
            cnn_dense_units: arch.dense_units,
            cnn_epochs: cnn.epochs,
            cnn_batch_size: cnn.batch_size,
            cnn_learning_rate: adam.lr,
            cnn_beta1: adam.beta1,
            cnn_beta2: adam.beta2,
            cnn_epsilon: adam.epsilon,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn prnu(&self) -> PrnuConfig {
        PrnuConfig {
            sigma_residual: self.prnu_sigma_residual,
            sigma_window: self.prnu_sigma_window,
            noise_variance: self.prnu_noise_variance,
            crop: self.prnu_crop,
            stride: self.prnu_stride,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            prnu: self.prnu(),
            svm: SvmParams {
                c: self.svm_c,
                tolerance: self.svm_tolerance,
                max_iterations: self.svm_max_iterations,
            },
            rbf_gamma: self.rbf_gamma,
            resize: ResizeSpec {
                height: self.cnn_input_size,
                width: self.cnn_input_size,
            },
            cnn: CnnTrainConfig {
                epochs: self.cnn_epochs,
                batch_size: self.cnn_batch_size,
                adam: AdamConfig {
                    lr: self.cnn_learning_rate,
                    beta1: self.cnn_beta1,
                    beta2: self.cnn_beta2,
                    epsilon: self.cnn_epsilon,
                },
                seed: self.seed,
            },
            cnn_arch: CnnArchitecture {
                conv_filters: self.cnn_conv_filters,
                dense_units: self.cnn_dense_units,
                ..CnnArchitecture::default()
            },
            decode_policy: self.on_decode_error,
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            pipeline: self.pipeline(),
            ratio: self.ratio,
            seed: self.seed,
            record_predictions: self.record_predictions,
        }
    }

    /// Catches bad values before any work starts.
    pub fn validate(&self) -> Result<(), String> {
        self.prnu().validate().map_err(|e| e.to_string())?;
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(format!("ratio must be in (0, 1), got {}", self.ratio));
        }
        if !(self.svm_c > 0.0 && self.svm_tolerance > 0.0) || self.svm_max_iterations == 0 {
            return Err("svm_c, svm_tolerance and svm_max_iterations must be positive".into());
        }
        if self.rbf_gamma.is_some_and(|g| !(g > 0.0)) {
            return Err("rbf_gamma must be positive".into());
        }
        if self.cnn_epochs == 0 || self.cnn_batch_size == 0 || !(self.cnn_learning_rate > 0.0) {
            return Err("cnn_epochs, cnn_batch_size and cnn_learning_rate must be positive".into());
        }
        if self.cnn_conv_filters.contains(&0) || self.cnn_dense_units == 0 {
            return Err("cnn layer widths must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
