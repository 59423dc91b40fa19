//! Domain types shared by every pipeline.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A device class: directory name plus its rank in the sorted name list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceLabel {
    pub name: String,
    pub index: usize,
}

impl DeviceLabel {
    /// Assigns indices by lexicographic rank. Duplicate names collapse.
    pub fn from_names<I, S>(names: I) -> Vec<DeviceLabel>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        sorted
            .into_iter()
            .enumerate()
            .map(|(index, name)| DeviceLabel { name, index })
            .collect()
    }
}

/// Value range a [`RasterImage`] is stored in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PixelRange {
    /// 8-bit values widened to reals, `[0, 255]`.
    Byte,
    /// Normalized, `[0, 1]`.
    Unit,
}

impl PixelRange {
    pub fn max_value(self) -> f64 {
        match self {
            PixelRange::Byte => 255.0,
            PixelRange::Unit => 1.0,
        }
    }
}

/// Decoded pixel grid, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    range: PixelRange,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        range: PixelRange,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "pixel count {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(RasterImage {
            height,
            width,
            channels,
            range,
            data,
        })
    }

    /// Single-channel image from a grid.
    pub fn from_grid(grid: Grid, range: PixelRange) -> Result<Self> {
        let Grid { rows, cols, data } = grid;
        RasterImage::new(rows, cols, 1, range, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn range(&self) -> PixelRange {
        self.range
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Checks that every value is finite and lies in the tagged range.
    pub fn audit_range(&self) -> Result<()> {
        let max = self.range.max_value();
        match self
            .data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > max)
        {
            None => Ok(()),
            Some(i) => Err(Error::InvalidImage(format!(
                "pixel {} = {} outside [0, {max}]",
                i, self.data[i]
            ))),
        }
    }

    /// Copy of a single-channel image as a grid.
    pub fn to_grid(&self) -> Result<Grid> {
        if self.channels != 1 {
            return Err(Error::Shape(format!(
                "expected a single-channel image, got {} channels",
                self.channels
            )));
        }
        Ok(Grid {
            rows: self.height,
            cols: self.width,
            data: self.data.clone(),
        })
    }
}

/// Dense real grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Grid {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Grid { rows, cols, data })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Elementwise combination of two equally shaped grids.
    pub fn zip_map(&self, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sub-grid starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, rows: usize, cols: usize) -> Grid {
        assert!(top + rows <= self.rows && left + cols <= self.cols);
        let mut data = Vec::with_capacity(rows * cols);
        for r in top..top + rows {
            let start = r * self.cols + left;
            data.extend_from_slice(&self.data[start..start + cols]);
        }
        Grid { rows, cols, data }
    }
}

/// One image file and its device label.
#[derive(Debug, Clone)]
pub struct ImageRecord {
    pub path: PathBuf,
    pub label: DeviceLabel,
    /// Pre-decoded pixels, used by in-memory datasets.
    pub decoded: Option<RasterImage>,
}

/// Labeled image collection with a lexicographic class order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<ImageRecord>,
    pub labels: Vec<DeviceLabel>,
}

impl Dataset {
    /// Builds a dataset from `(path, device name, optional pixels)` triples.
    /// Records are sorted by path and labels by name.
    pub fn from_entries(entries: Vec<(PathBuf, String, Option<RasterImage>)>) -> Dataset {
        let labels = DeviceLabel::from_names(entries.iter().map(|(_, n, _)| n.clone()));
        let mut records: Vec<ImageRecord> = entries
            .into_iter()
            .map(|(path, name, decoded)| {
                let label = labels
                    .iter()
                    .find(|l| l.name == name)
                    .cloned()
                    .expect("label derived from the same names");
                ImageRecord {
                    path,
                    label,
                    decoded,
                }
            })
            .collect();
        records.sort_by(|a, b| a.path.cmp(&b.path));
        Dataset { records, labels }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label.index).collect()
    }

    pub fn label_names(&self) -> Vec<String> {
        self.labels.iter().map(|l| l.name.clone()).collect()
    }

    /// Sample count per class, in label order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for r in &self.records {
            counts[r.label.index] += 1;
        }
        counts
    }
}

/// Disjoint train/test index lists over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Batch of feature vectors with their class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    label_indices: Vec<usize>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, label_indices: Vec<usize>) -> Result<Self> {
        if rows.len() != label_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: label_indices.len(),
            });
        }
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("feature row {i}")));
            }
            values.extend_from_slice(row);
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            cols,
            values,
            label_indices,
        })
    }

    /// Unlabeled matrix; every label is 0.
    pub fn unlabeled(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        FeatureMatrix::from_rows(rows, vec![0; n])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label_indices(&self) -> &[usize] {
        &self.label_indices
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.label_indices[i]);
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
            label_indices: labels,
        }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> FeatureMatrix {
        debug_assert_eq!(values.len(), self.values.len());
        FeatureMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
            label_indices: self.label_indices.clone(),
        }
    }
}
