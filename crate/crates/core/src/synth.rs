//! Synthetic devices with known ground truth.
//!
//! Two device families are generated from seeded smooth scenes:
//! quantization devices, which push every 8×8 block through a device-specific
//! quantization table, and sensor devices, which multiply the scene by a fixed
//! per-device gain pattern `1 + s·K` before adding independent noise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg::{dct2_8x8, idct2_8x8, Block, BLOCK};
use crate::prnu::gaussian_filter;
use crate::types::{Dataset, Grid, PixelRange, RasterImage};

/// Standard JPEG luminance quantization table (quality 50).
pub const BASE_LUMA_TABLE: [[u16; 8]; 8] = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
];

pub const MAX_PRNU_STRENGTH: f64 = 0.1;

/// IJG-style quality scaling of [`BASE_LUMA_TABLE`].
pub fn scaled_table(quality: u32) -> [[u16; 8]; 8] {
    let q = quality.clamp(1, 100);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut t = [[1u16; 8]; 8];
    for (row, base) in t.iter_mut().zip(&BASE_LUMA_TABLE) {
        for (v, &b) in row.iter_mut().zip(base) {
            *v = ((b as u32 * scale + 50) / 100).clamp(1, 255) as u16;
        }
    }
    t
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDeviceSpec {
    pub name: String,
    pub quant_table: [[u16; 8]; 8],
    /// Multiplicative gain-pattern strength, in `[0, 0.1]`.
    pub prnu_strength: f64,
    pub seed: u64,
}

impl SyntheticDeviceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.quant_table.iter().flatten().any(|&q| q == 0) {
            return Err(Error::Config(format!(
                "device {}: quantization entries must be at least 1",
                self.name
            )));
        }
        if !(0.0..=MAX_PRNU_STRENGTH).contains(&self.prnu_strength) {
            return Err(Error::Config(format!(
                "device {}: pattern strength {} outside [0, {MAX_PRNU_STRENGTH}]",
                self.name, self.prnu_strength
            )));
        }
        Ok(())
    }

    /// The device gain pattern `K`, i.i.d. standard normal, fixed by the device seed.
    pub fn pattern(&self, height: usize, width: usize) -> Grid {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 0x5052_4E55));
        let data = (0..height * width)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Grid {
            rows: height,
            cols: width,
            data,
        }
    }
}

/// `count` devices with distinct tables, qualities 95, 85, 75, 60, 50, 40, …
pub fn quantization_devices(count: usize, seed: u64) -> Vec<SyntheticDeviceSpec> {
    const QUALITIES: [u32; 6] = [95, 85, 75, 60, 50, 40];
    (0..count)
        .map(|i| {
            let quality = QUALITIES
                .get(i)
                .copied()
                .unwrap_or_else(|| 40u32.saturating_sub(8 * (i - QUALITIES.len() + 1) as u32).max(5));
            SyntheticDeviceSpec {
                name: format!("qcam{i}"),
                quant_table: scaled_table(quality),
                prnu_strength: 0.0,
                seed: mix_seed(seed, i as u64),
            }
        })
        .collect()
}

/// `count` devices sharing a pattern strength, with independent patterns.
pub fn prnu_devices(count: usize, strength: f64, seed: u64) -> Vec<SyntheticDeviceSpec> {
    (0..count)
        .map(|i| SyntheticDeviceSpec {
            name: format!("pcam{i}"),
            quant_table: [[1; 8]; 8],
            prnu_strength: strength,
            seed: mix_seed(seed, 1000 + i as u64),
        })
        .collect()
}

/// Seeded base scenes: low-pass filtered noise around mid-gray, plus optional fine texture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSource {
    pub height: usize,
    pub width: usize,
    pub mean: f64,
    /// Std of the smooth component, gray levels.
    pub contrast: f64,
    pub smooth_sigma: f64,
    /// Std of the per-pixel white texture, gray levels.
    pub texture: f64,
    pub seed: u64,
}

impl SceneSource {
    /// Textured 256×256 scenes for the quantization family.
    pub fn textured(seed: u64) -> SceneSource {
        SceneSource {
            height: 256,
            width: 256,
            mean: 128.0,
            contrast: 30.0,
            smooth_sigma: 4.0,
            texture: 8.0,
            seed,
        }
    }

    /// Smooth 512×512 scenes for the sensor-pattern family.
    pub fn smooth(seed: u64) -> SceneSource {
        SceneSource {
            height: 512,
            width: 512,
            mean: 128.0,
            contrast: 25.0,
            smooth_sigma: 6.0,
            texture: 0.0,
            seed,
        }
    }

    /// Scene number `key`, in gray levels, clamped to `[16, 239]`.
    pub fn scene(&self, key: u64) -> Grid {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, key));
        let n = self.height * self.width;
        let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let noise = Grid {
            rows: self.height,
            cols: self.width,
            data: noise,
        };
        let smooth = gaussian_filter(&noise, self.smooth_sigma).expect("positive sigma");
        let m = smooth.data.iter().sum::<f64>() / n as f64;
        let sd = (smooth.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        let scale = if sd > 0.0 { self.contrast / sd } else { 0.0 };
        let mut out = smooth.map(|v| self.mean + (v - m) * scale);
        if self.texture > 0.0 {
            for v in &mut out.data {
                let t: f64 = StandardNormal.sample(&mut rng);
                *v += self.texture * t;
            }
        }
        out.map(|v| v.clamp(16.0, 239.0))
    }
}

/// One generated image.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub device: String,
    pub index: usize,
    /// Single-channel, `[0, 255]`.
    pub image: RasterImage,
}

impl LabeledImage {
    pub fn file_name(&self) -> String {
        format!("{}_{:04}.png", self.device, self.index)
    }
}

/// Block DCT → quantize/dequantize with the device table → inverse DCT → round and clamp.
/// Entries equal to 1 are treated as lossless.
pub fn quantize_through_table(scene: &Grid, table: &[[u16; 8]; 8]) -> Grid {
    let mut out = scene.clone();
    for by in (0..scene.rows - scene.rows % BLOCK).step_by(BLOCK) {
        for bx in (0..scene.cols - scene.cols % BLOCK).step_by(BLOCK) {
            let mut b: Block = [[0.0; BLOCK]; BLOCK];
            for (x, row) in b.iter_mut().enumerate() {
                for (y, v) in row.iter_mut().enumerate() {
                    *v = scene.get(by + x, bx + y);
                }
            }
            let mut c = dct2_8x8(&b);
            for (crow, trow) in c.iter_mut().zip(table) {
                // Step 1 leaves the coefficient alone.
                for (v, &q) in crow.iter_mut().zip(trow).filter(|(_, &q)| q > 1) {
                    let q = q as f64;
                    *v = (*v / q).round() * q;
                }
            }
            let rec = idct2_8x8(&c);
            for (x, row) in rec.iter().enumerate() {
                for (y, v) in row.iter().enumerate() {
                    out.set(by + x, bx + y, *v);
                }
            }
        }
    }
    out.map(|v| v.round().clamp(0.0, 255.0))
}

pub fn gen_quantized_device_images(
    spec: &SyntheticDeviceSpec,
    n: usize,
    scenes: &SceneSource,
) -> Result<Vec<LabeledImage>> {
    spec.validate()?;
    (0..n)
        .map(|i| {
            let scene = scenes.scene(mix_seed(spec.seed, i as u64));
            let img = quantize_through_table(&scene, &spec.quant_table);
            Ok(LabeledImage {
                device: spec.name.clone(),
                index: i,
                image: RasterImage::from_grid(img, PixelRange::Byte)?,
            })
        })
        .collect()
}

/// Components of one sensor-family image.
#[derive(Debug, Clone)]
pub struct PrnuImageParts {
    pub base: Grid,
    pub pattern: Grid,
    pub noise: Grid,
    /// `clamp(base·(1 + s·K) + noise, 0, 255)`.
    pub image: Grid,
}

pub fn prnu_image_parts(
    spec: &SyntheticDeviceSpec,
    index: usize,
    scenes: &SceneSource,
    noise_std: f64,
) -> Result<PrnuImageParts> {
    spec.validate()?;
    let base = scenes.scene(mix_seed(spec.seed, index as u64));
    let pattern = spec.pattern(scenes.height, scenes.width);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(spec.seed, index as u64), 0x4E4F));
    let noise = Grid {
        rows: base.rows,
        cols: base.cols,
        data: (0..base.data.len())
            .map(|_| noise_std * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect(),
    };
    let s = spec.prnu_strength;
    let image = Grid {
        rows: base.rows,
        cols: base.cols,
        data: base
            .data
            .iter()
            .zip(&pattern.data)
            .zip(&noise.data)
            .map(|((b, k), e)| (b * (1.0 + s * k) + e).clamp(0.0, 255.0))
            .collect(),
    };
    Ok(PrnuImageParts {
        base,
        pattern,
        noise,
        image,
    })
}

pub fn gen_prnu_device_images(
    spec: &SyntheticDeviceSpec,
    n: usize,
    scenes: &SceneSource,
    noise_std: f64,
) -> Result<Vec<LabeledImage>> {
    (0..n)
        .map(|i| {
            let parts = prnu_image_parts(spec, i, scenes, noise_std)?;
            Ok(LabeledImage {
                device: spec.name.clone(),
                index: i,
                image: RasterImage::from_grid(parts.image, PixelRange::Byte)?,
            })
        })
        .collect()
}

/// In-memory dataset; paths are virtual `synthetic/<device>/<file>`.
pub fn to_dataset(images: Vec<LabeledImage>) -> Dataset {
    Dataset::from_entries(
        images
            .into_iter()
            .map(|li| {
                let path = PathBuf::from("synthetic").join(&li.device).join(li.file_name());
                (path, li.device, Some(li.image))
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Quantization,
    Prnu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub mode: SynthMode,
    pub seed: u64,
    pub per_device: usize,
    pub noise_std: f64,
    pub scenes: SceneSource,
    pub devices: Vec<SyntheticDeviceSpec>,
}

/// Generates a whole synthetic set described by the manifest.
pub fn generate(manifest: &SynthManifest) -> Result<Vec<LabeledImage>> {
    let mut out = Vec::new();
    for spec in &manifest.devices {
        out.extend(match manifest.mode {
            SynthMode::Quantization => {
                gen_quantized_device_images(spec, manifest.per_device, &manifest.scenes)?
            }
            SynthMode::Prnu => {
                gen_prnu_device_images(spec, manifest.per_device, &manifest.scenes, manifest.noise_std)?
            }
        });
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `<root>/<device>/<device>_NNNN.png` (8-bit grayscale) and `manifest.json`.
pub fn write_dataset(root: &Path, images: &[LabeledImage], manifest: &SynthManifest) -> Result<()> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    for li in images {
        let dir = root.join(&li.device);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(li.file_name());
        let img = &li.image;
        let bytes: Vec<u8> = img
            .data()
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
            .ok_or_else(|| Error::InvalidImage("synthetic image must be single-channel".into()))?;
        buf.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::Decode {
                path: path.clone(),
                message: e.to_string(),
            })?;
    }
    let manifest_path = root.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(manifest)?).map_err(io_err(&manifest_path))
}
