//! Trained models and their on-disk container.
//!
//! Layout: the 8-byte magic `CAMIDMDL`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header, then (CNN only) every
//! parameter tensor as little-endian `f64` in tensor order. SVM parameters
//! live entirely in the header; floats there round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{Cnn, CnnArchitecture, TENSOR_NAMES};
use crate::error::{Error, Result};
use crate::ingest::ResizeSpec;
use crate::pipeline::{image_to_input, Method};
use crate::prnu::PrnuConfig;
use crate::svm::{argmax_first, StandardizedSvm};
use crate::types::{DeviceLabel, FeatureMatrix, RasterImage};

pub const MAGIC: &[u8; 8] = b"CAMIDMDL";
pub const FORMAT_VERSION: u32 = 1;

/// How raw pixels become model input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Preprocessing {
    BlockDct,
    Prnu(PrnuConfig),
    Resize(ResizeSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelPayload {
    Svm(StandardizedSvm),
    Cnn { net: Cnn, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub labels: Vec<DeviceLabel>,
    pub preprocessing: Preprocessing,
    pub payload: ModelPayload,
}

#[derive(Serialize, Deserialize)]
struct CnnHeader {
    architecture: CnnArchitecture,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    method: Method,
    labels: Vec<DeviceLabel>,
    preprocessing: Preprocessing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    svm: Option<StandardizedSvm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cnn: Option<CnnHeader>,
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    /// Predicted class index for each prepared input row.
    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        let preds = match &self.payload {
            ModelPayload::Svm(svm) => svm.predict(&FeatureMatrix::unlabeled(rows.to_vec())?)?,
            ModelPayload::Cnn { net, .. } => net
                .predict_proba(rows)?
                .iter()
                .map(|p| argmax_first(p))
                .collect(),
        };
        debug_assert!(preds.iter().all(|&p| p < self.n_classes()));
        Ok(preds)
    }

    pub fn predict_image(&self, img: &RasterImage) -> Result<usize> {
        let row = image_to_input(img, &self.preprocessing)?;
        Ok(self.predict_rows(&[row])?[0])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let (svm, cnn, blob) = match &self.payload {
            ModelPayload::Svm(s) => (Some(s.clone()), None, Vec::new()),
            ModelPayload::Cnn { net, seed } => {
                let shapes = net.arch.tensor_shapes()?;
                let tensors = TENSOR_NAMES
                    .iter()
                    .zip(shapes)
                    .map(|(n, shape)| TensorEntry {
                        name: n.to_string(),
                        shape,
                    })
                    .collect();
                let blob: Vec<u8> = net
                    .params
                    .tensors
                    .iter()
                    .flatten()
                    .flat_map(|v| v.to_le_bytes())
                    .collect();
                (
                    None,
                    Some(CnnHeader {
                        architecture: net.arch,
                        seed: *seed,
                        tensors,
                    }),
                    blob,
                )
            }
        };
        let header = serde_json::to_vec(&Header {
            method: self.method,
            labels: self.labels.clone(),
            preprocessing: self.preprocessing,
            svm,
            cnn,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + blob.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&blob);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel> {
        let bad = |m: &str| Error::Model(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a model container"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
        let blob = &bytes[header_end..];
        let payload = match (header.method, header.svm, header.cnn) {
            (Method::Jpeg | Method::Prnu, Some(svm), None) => {
                if svm.classifier.n_classes() != header.labels.len() {
                    return Err(bad("classifier count does not match label order"));
                }
                ModelPayload::Svm(svm)
            }
            (Method::Cnn, None, Some(cnn)) => {
                if cnn.architecture.n_classes != header.labels.len() {
                    return Err(bad("output width does not match label order"));
                }
                let expected = cnn.architecture.tensor_shapes()?;
                let mut tensors = Vec::with_capacity(expected.len());
                let mut offset = 0;
                for (entry, shape) in cnn.tensors.iter().zip(&expected) {
                    if &entry.shape != shape {
                        return Err(Error::Model(format!("tensor {} has wrong shape", entry.name)));
                    }
                    let len: usize = shape.iter().product::<usize>() * 8;
                    let chunk = blob
                        .get(offset..offset + len)
                        .ok_or_else(|| bad("truncated tensor data"))?;
                    tensors.push(
                        chunk
                            .chunks_exact(8)
                            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                            .collect(),
                    );
                    offset += len;
                }
                if offset != blob.len() {
                    return Err(bad("trailing bytes after tensor data"));
                }
                ModelPayload::Cnn {
                    net: Cnn::from_tensors(cnn.architecture, tensors)?,
                    seed: cnn.seed,
                }
            }
            _ => return Err(bad("payload does not match method")),
        };
        Ok(TrainedModel {
            method: header.method,
            labels: header.labels,
            preprocessing: header.preprocessing,
            payload,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        TrainedModel::from_bytes(&bytes)
    }
}
