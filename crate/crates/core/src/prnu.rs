//! Sensor-noise fingerprint features.
//!
//! The grayscale image in `[0, 1]` is center-cropped to a fixed analysis
//! window. A high-pass residual `R = I − G₁∗I` is formed, local moments of
//! `R` are estimated with a second Gaussian window, and the Wiener-style
//! estimate `R̂ = (R − μ)·σ²/(σ² + σₙ²)` is removed from the residual. What
//! is left, `K = R − R̂`, is flattened and sampled at a fixed stride.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::to_unit_grayscale;
use crate::types::{Grid, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrnuConfig {
    /// Std of the smoothing kernel used for the residual.
    pub sigma_residual: f64,
    /// Std of the window used for local mean/variance.
    pub sigma_window: f64,
    /// Noise floor `σₙ²` in the shrinkage gain.
    pub noise_variance: f64,
    /// Side of the square center crop.
    pub crop: usize,
    /// Per-axis subsampling stride; the flattened pattern is sampled every `stride²` entries.
    pub stride: usize,
}

impl Default for PrnuConfig {
    fn default() -> Self {
        PrnuConfig {
            sigma_residual: 1.0,
            sigma_window: 2.0,
            noise_variance: 0.01,
            crop: 512,
            stride: 8,
        }
    }
}

impl PrnuConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_residual > 0.0 && self.sigma_window > 0.0) {
            return Err(Error::Config("PRNU sigmas must be positive".into()));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::Config("PRNU noise variance must be positive".into()));
        }
        if self.crop == 0 || self.stride == 0 || !self.crop.is_multiple_of(self.stride) {
            return Err(Error::Config(format!(
                "PRNU crop {} must be a positive multiple of stride {}",
                self.crop, self.stride
            )));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        let side = self.crop / self.stride;
        side * side
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseResidual(pub Grid);

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoments {
    pub mean: Grid,
    pub variance: Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrnuPattern {
    pub pattern: Grid,
    pub residual: NoiseResidual,
    pub estimate: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrnuFeature(pub Vec<f64>);

/// Normalized 1-D Gaussian taps over `[-⌈4σ⌉, ⌈4σ⌉]`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|w| w / sum).collect())
}

/// Maps an out-of-range index by half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn convolve_rows(src: &Grid, taps: &[f64]) -> Grid {
    let radius = (taps.len() / 2) as i64;
    let mut out = Grid::zeros(src.rows, src.cols);
    let mut padded = vec![0.0; src.cols + 2 * radius as usize];
    for r in 0..src.rows {
        let row = &src.data[r * src.cols..(r + 1) * src.cols];
        for (j, p) in padded.iter_mut().enumerate() {
            *p = row[reflect_index(j as i64 - radius, src.cols)];
        }
        let dst = &mut out.data[r * src.cols..(r + 1) * src.cols];
        for (c, d) in dst.iter_mut().enumerate() {
            let center = row[c];
            *d = center
                + taps
                    .iter()
                    .zip(&padded[c..c + taps.len()])
                    .map(|(w, v)| w * (v - center))
                    .sum::<f64>();
        }
    }
    out
}

fn convolve_cols(src: &Grid, taps: &[f64]) -> Grid {
    let radius = taps.len() as i64 / 2;
    let mut out = Grid::zeros(src.rows, src.cols);
    for r in 0..src.rows {
        let center = &src.data[r * src.cols..(r + 1) * src.cols];
        let dst = &mut out.data[r * src.cols..(r + 1) * src.cols];
        for (k, &w) in taps.iter().enumerate() {
            let sr = reflect_index(r as i64 + k as i64 - radius, src.rows);
            let row = &src.data[sr * src.cols..(sr + 1) * src.cols];
            for ((d, &v), &c) in dst.iter_mut().zip(row).zip(center) {
                *d += w * (v - c);
            }
        }
        for (d, &c) in dst.iter_mut().zip(center) {
            *d += c;
        }
    }
    out
}

/// Separable Gaussian smoothing with reflect borders. Each pass is evaluated
/// as `x + Σ w·(x_j − x)`, so constant regions come out bit-exact.
pub fn gaussian_filter(img: &Grid, sigma: f64) -> Result<Grid> {
    let taps = gaussian_kernel(sigma)?;
    Ok(convolve_cols(&convolve_rows(img, &taps), &taps))
}

/// Center `crop × crop` window of a grid.
pub fn center_crop(grid: &Grid, crop: usize) -> Result<Grid> {
    if grid.rows < crop || grid.cols < crop {
        return Err(Error::TooSmallForPrnu {
            height: grid.rows,
            width: grid.cols,
            crop,
        });
    }
    Ok(grid.crop((grid.rows - crop) / 2, (grid.cols - crop) / 2, crop, crop))
}

/// `R = I − G₁∗I` on an image already cropped to the analysis window.
pub fn residual(img: &Grid, cfg: &PrnuConfig) -> Result<NoiseResidual> {
    cfg.validate()?;
    if img.rows < cfg.crop || img.cols < cfg.crop {
        return Err(Error::TooSmallForPrnu {
            height: img.rows,
            width: img.cols,
            crop: cfg.crop,
        });
    }
    let smooth = gaussian_filter(img, cfg.sigma_residual)?;
    Ok(NoiseResidual(img.zip_map(&smooth, |a, b| a - b)))
}

/// `μ = G_w∗R`, `σ² = max(0, G_w∗R² − μ²)`.
pub fn local_moments(r: &NoiseResidual, cfg: &PrnuConfig) -> Result<LocalMoments> {
    let mean = gaussian_filter(&r.0, cfg.sigma_window)?;
    let sq = gaussian_filter(&r.0.map(|v| v * v), cfg.sigma_window)?;
    let variance = sq.zip_map(&mean, |s, m| (s - m * m).max(0.0));
    Ok(LocalMoments { mean, variance })
}

/// Wiener-style estimate `R̂ = (R − μ)·σ²/(σ² + σₙ²)`.
pub fn wiener_shrink(r: &NoiseResidual, moments: &LocalMoments, noise_variance: f64) -> Result<Grid> {
    if !(noise_variance > 0.0) {
        return Err(Error::Config("noise variance must be positive".into()));
    }
    let data = r
        .0
        .data
        .iter()
        .zip(&moments.mean.data)
        .zip(&moments.variance.data)
        .map(|((&rv, &mu), &var)| (rv - mu) * (var / (var + noise_variance)))
        .collect();
    Grid::from_vec(r.0.rows, r.0.cols, data)
}

/// Crops, normalizes and computes `K = R − R̂`.
pub fn prnu_pattern(img: &RasterImage, cfg: &PrnuConfig) -> Result<PrnuPattern> {
    cfg.validate()?;
    let gray = to_unit_grayscale(img).to_grid()?;
    let window = center_crop(&gray, cfg.crop)?;
    let r = residual(&window, cfg)?;
    let moments = local_moments(&r, cfg)?;
    let estimate = wiener_shrink(&r, &moments, cfg.noise_variance)?;
    let pattern = r.0.zip_map(&estimate, |a, b| a - b);
    Ok(PrnuPattern {
        pattern,
        residual: r,
        estimate,
    })
}

/// Row-major flattening of `K`, keeping every `stride²`-th entry.
pub fn prnu_feature_vector(img: &RasterImage, cfg: &PrnuConfig) -> Result<PrnuFeature> {
    let k = prnu_pattern(img, cfg)?.pattern;
    let step = cfg.stride * cfg.stride;
    let g: Vec<f64> = k.data.iter().step_by(step).copied().collect();
    debug_assert_eq!(g.len(), cfg.output_dim());
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prnu feature".into()));
    }
    Ok(PrnuFeature(g))
}

/// Pearson correlation of two equally sized grids.
pub fn normalized_correlation(a: &Grid, b: &Grid) -> f64 {
    let n = a.data.len() as f64;
    let ma = a.data.iter().sum::<f64>() / n;
    let mb = b.data.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}
