//! Block-DCT statistics: the JPEG artifact feature pipeline.
//!
//! The grayscale image is cropped to a multiple of 8 in both dimensions,
//! cut into non-overlapping 8×8 blocks and transformed with an orthonormal
//! 2-D DCT-II. For every AC position the mean and unbiased variance over
//! all blocks are collected; the feature vector is the 63 means followed by
//! the 63 variances, positions in raster (u-major) order.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::to_grayscale;
use crate::types::{PixelRange, RasterImage};

pub const BLOCK: usize = 8;
pub const AC_POSITIONS: usize = BLOCK * BLOCK - 1;
pub const FEATURE_DIM: usize = 2 * AC_POSITIONS;

pub type Block = [[f64; BLOCK]; BLOCK];

/// The image cut into 8×8 blocks, in raster order of block position.
#[derive(Debug, Clone)]
pub struct BlockSet {
    pub blocks: Vec<Block>,
    pub cropped_height: usize,
    pub cropped_width: usize,
}

impl BlockSet {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Per-AC-position means and variances, 63 each, raster order skipping DC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDctStats {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

/// `[means ∥ variances]`, length 126.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JpegFeature(pub Vec<f64>);

impl JpegFeature {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Orthonormal DCT-II basis: `basis[u][x] = α(u)·cos((2x+1)uπ/16)`.
fn basis() -> &'static Block {
    static BASIS: OnceLock<Block> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (u, row) in m.iter_mut().enumerate() {
            let alpha = if u == 0 {
                1.0 / (BLOCK as f64).sqrt()
            } else {
                0.5
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

/// Keeps the top-left `H − H mod 8` × `W − W mod 8` region.
pub fn crop_to_block_multiple(img: &RasterImage) -> Result<RasterImage> {
    let (h, w) = (img.height(), img.width());
    if h < BLOCK || w < BLOCK {
        return Err(Error::TooSmallForBlocks {
            height: h,
            width: w,
        });
    }
    let (hc, wc) = (h - h % BLOCK, w - w % BLOCK);
    if (hc, wc) == (h, w) {
        return Ok(img.clone());
    }
    let ch = img.channels();
    let mut data = Vec::with_capacity(hc * wc * ch);
    for y in 0..hc {
        let start = y * w * ch;
        data.extend_from_slice(&img.data()[start..start + wc * ch]);
    }
    RasterImage::new(hc, wc, ch, img.range(), data)
}

/// Partitions a grayscale image into 8×8 blocks after cropping.
pub fn partition_blocks(img: &RasterImage) -> Result<BlockSet> {
    if img.channels() != 1 {
        return Err(Error::Shape("block partition needs a grayscale image".into()));
    }
    let cropped = crop_to_block_multiple(img)?;
    let (h, w) = (cropped.height(), cropped.width());
    let mut blocks = Vec::with_capacity((h / BLOCK) * (w / BLOCK));
    for by in (0..h).step_by(BLOCK) {
        for bx in (0..w).step_by(BLOCK) {
            let mut b = [[0.0; BLOCK]; BLOCK];
            for (x, row) in b.iter_mut().enumerate() {
                for (y, v) in row.iter_mut().enumerate() {
                    *v = cropped.get(by + x, bx + y, 0);
                }
            }
            blocks.push(b);
        }
    }
    Ok(BlockSet {
        blocks,
        cropped_height: h,
        cropped_width: w,
    })
}

/// Separable 2-D DCT-II, `C = A·b·Aᵀ` with the orthonormal basis `A`.
/// `block[x][y]` pairs `x` with `u` and `y` with `v`.
pub fn dct2_8x8(block: &Block) -> Block {
    let a = basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    // tmp[x][v] = Σ_y b[x][y]·A[v][y]
    for x in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for y in 0..BLOCK {
                s += block[x][y] * a[v][y];
            }
            tmp[x][v] = s;
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            let mut s = 0.0;
            for x in 0..BLOCK {
                s += a[u][x] * tmp[x][v];
            }
            out[u][v] = s;
        }
    }
    out
}

/// Inverse of [`dct2_8x8`], `b = Aᵀ·C·A`.
pub fn idct2_8x8(coeffs: &Block) -> Block {
    let a = basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for y in 0..BLOCK {
            let mut s = 0.0;
            for v in 0..BLOCK {
                s += coeffs[u][v] * a[v][y];
            }
            tmp[u][y] = s;
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for x in 0..BLOCK {
        for y in 0..BLOCK {
            let mut s = 0.0;
            for u in 0..BLOCK {
                s += a[u][x] * tmp[u][y];
            }
            out[x][y] = s;
        }
    }
    out
}

/// AC positions `(u, v) ≠ (0, 0)` in raster order.
pub fn ac_positions() -> impl Iterator<Item = (usize, usize)> {
    (0..BLOCK)
        .flat_map(|u| (0..BLOCK).map(move |v| (u, v)))
        .skip(1)
}

/// Mean and unbiased variance of every AC coefficient over the blocks.
///
/// Blocks are accumulated sequentially in raster order with a two-pass
/// mean/variance, so the result does not depend on how the DCTs were scheduled.
pub fn block_stats(blocks: &BlockSet) -> Result<BlockDctStats> {
    let m = blocks.len();
    if m < 2 {
        return Err(Error::InsufficientBlocks(m));
    }
    let coeffs: Vec<Block> = blocks.blocks.iter().map(dct2_8x8).collect();
    Ok(stats_from_coefficients(&coeffs))
}

pub(crate) fn stats_from_coefficients(coeffs: &[Block]) -> BlockDctStats {
    let m = coeffs.len() as f64;
    let mut means = Vec::with_capacity(AC_POSITIONS);
    let mut variances = Vec::with_capacity(AC_POSITIONS);
    for (u, v) in ac_positions() {
        // Shifted by the first block so identical coefficients give exact zeros.
        let shift = coeffs[0][u][v];
        let mean = shift + coeffs.iter().map(|c| c[u][v] - shift).sum::<f64>() / m;
        let ss: f64 = coeffs
            .iter()
            .map(|c| {
                let d = c[u][v] - mean;
                d * d
            })
            .sum();
        means.push(mean);
        variances.push(ss / (m - 1.0));
    }
    BlockDctStats { means, variances }
}

/// Full JPEG-artifact feature for one image. RGB input is converted to luma.
pub fn jpeg_feature_vector(img: &RasterImage) -> Result<JpegFeature> {
    let gray = to_grayscale(img);
    // Work in [0, 255] whatever the stored range.
    let gray = if gray.range() == PixelRange::Unit {
        let (h, w) = (gray.height(), gray.width());
        let data = gray.into_data().into_iter().map(|v| v * 255.0).collect();
        RasterImage::new(h, w, 1, PixelRange::Byte, data)?
    } else {
        gray
    };
    let stats = block_stats(&partition_blocks(&gray)?)?;
    let mut f = stats.means;
    f.extend(stats.variances);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("jpeg feature".into()));
    }
    Ok(JpegFeature(f))
}
