//! Dataset scanning, decoding and the per-pipeline pixel representations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, ImageRecord, PixelRange, RasterImage};

/// File extensions the decoder accepts (compared case-insensitively).
pub const SUPPORTED_EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "ppm"];

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Target of the CNN resize: 128×128, bilinear with half-pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResizeSpec {
    pub height: usize,
    pub width: usize,
}

impl Default for ResizeSpec {
    fn default() -> Self {
        ResizeSpec {
            height: 128,
            width: 128,
        }
    }
}

/// What to do when a file in the dataset fails to decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodePolicy {
    Skip,
    #[default]
    Abort,
}

/// Result of [`scan_dataset`].
#[derive(Debug, Clone)]
pub struct ScanSummary {
    pub dataset: Dataset,
    /// Files with an unsupported extension that were ignored.
    pub skipped: Vec<PathBuf>,
}

fn extension_lower(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

pub fn is_supported(path: &Path) -> bool {
    extension_lower(path).is_some_and(|e| SUPPORTED_EXTENSIONS.contains(&e.as_str()))
}

fn is_heic(path: &Path) -> bool {
    matches!(extension_lower(path).as_deref(), Some("heic" | "heif"))
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        paths.push(entry.path());
    }
    paths.sort();
    Ok(paths)
}

/// Scans `<root>/<device>/*.{jpg,jpeg,png,ppm}`.
///
/// Every non-hidden subdirectory is a device class. A device directory
/// without a single supported file is an error, since silently dropping a
/// class would shift every label index after it.
pub fn scan_dataset(root: &Path) -> Result<ScanSummary> {
    if !root.is_dir() {
        return Err(Error::MissingRoot(root.to_path_buf()));
    }
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut n_dirs = 0;
    for dir in read_dir_sorted(root)? {
        let hidden = dir
            .file_name()
            .and_then(|n| n.to_str())
            .is_none_or(|n| n.starts_with('.'));
        if !dir.is_dir() || hidden {
            continue;
        }
        n_dirs += 1;
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .expect("checked above")
            .to_string();
        let mut found = 0;
        for file in read_dir_sorted(&dir)? {
            if !file.is_file() {
                continue;
            }
            if is_supported(&file) {
                entries.push((file, name.clone(), None));
                found += 1;
            } else {
                if is_heic(&file) {
                    log::warn!("{}: HEIC is not decoded, pre-convert to PNG", file.display());
                }
                skipped.push(file);
            }
        }
        if found == 0 {
            return Err(Error::EmptyClass(dir));
        }
    }
    if n_dirs == 0 {
        return Err(Error::NoClasses(root.to_path_buf()));
    }
    if !skipped.is_empty() {
        log::warn!("skipped {} files with unsupported extensions", skipped.len());
    }
    Ok(ScanSummary {
        dataset: Dataset::from_entries(entries),
        skipped,
    })
}

/// Decodes a raster file into an RGB image in `[0, 255]`.
pub fn decode_image(path: &Path) -> Result<RasterImage> {
    if is_heic(path) {
        return Err(Error::HeicUnsupported {
            path: path.to_path_buf(),
        });
    }
    let decode_err = |e: image::ImageError| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let reader = image::ImageReader::open(path)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let rgb = reader.decode().map_err(decode_err)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f64::from).collect();
    RasterImage::new(h as usize, w as usize, 3, PixelRange::Byte, data)
}

/// Pixels of a record: the in-memory copy when present, otherwise decoded from disk.
pub fn load_record(record: &ImageRecord) -> Result<RasterImage> {
    match &record.decoded {
        Some(img) => Ok(img.clone()),
        None => decode_image(&record.path),
    }
}

/// BT.601 luma, no rounding. Single-channel input passes through unchanged.
pub fn to_grayscale(img: &RasterImage) -> RasterImage {
    if img.channels() == 1 {
        return img.clone();
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    RasterImage::new(img.height(), img.width(), 1, img.range(), data)
        .expect("same dimensions as a valid image")
}

/// Grayscale image scaled to `[0, 1]`.
pub fn to_unit_grayscale(img: &RasterImage) -> RasterImage {
    let gray = to_grayscale(img);
    if gray.range() == PixelRange::Unit {
        return gray;
    }
    let scale = gray.range().max_value();
    let (h, w) = (gray.height(), gray.width());
    let data = gray.into_data().into_iter().map(|v| v / scale).collect();
    RasterImage::new(h, w, 1, PixelRange::Unit, data).expect("same dimensions")
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + (b - a) * t;
    v.clamp(a.min(b), a.max(b))
}

/// Source coordinates and weight for one output index under the
/// half-pixel-center convention with edge clamping.
#[inline]
fn source_coord(dst: usize, scale: f64, n_src: usize) -> (usize, usize, f64) {
    let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_src - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(n_src - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize, output normalized to `[0, 1]` by the input range maximum.
pub fn resize_bilinear(img: &RasterImage, spec: ResizeSpec) -> Result<RasterImage> {
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::Config("resize target must be at least 1x1".into()));
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let norm = img.range().max_value();
    let sy = h as f64 / spec.height as f64;
    let sx = w as f64 / spec.width as f64;
    let cols: Vec<_> = (0..spec.width).map(|x| source_coord(x, sx, w)).collect();
    let mut out = Vec::with_capacity(spec.height * spec.width * ch);
    for y in 0..spec.height {
        let (y0, y1, fy) = source_coord(y, sy, h);
        for &(x0, x1, fx) in &cols {
            for c in 0..ch {
                let top = lerp(img.get(y0, x0, c), img.get(y0, x1, c), fx);
                let bottom = lerp(img.get(y1, x0, c), img.get(y1, x1, c), fx);
                out.push(lerp(top, bottom, fy) / norm);
            }
        }
    }
    RasterImage::new(spec.height, spec.width, ch, PixelRange::Unit, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn rgb(h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> RasterImage {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        RasterImage::new(h, w, 3, PixelRange::Byte, data).unwrap()
    }

    fn touch(path: &Path, bytes: &[u8]) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::File::create(path).unwrap().write_all(bytes).unwrap();
    }

    #[test]
    fn scan_two_classes() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a/1.png", "a/2.jpg", "b/1.PNG", "b/2.ppm", "b/3.jpeg", "b/notes.txt"] {
            touch(&dir.path().join(f), b"");
        }
        let scan = scan_dataset(dir.path()).unwrap();
        assert_eq!(scan.dataset.len(), 5);
        assert_eq!(scan.dataset.label_names(), vec!["a", "b"]);
        assert_eq!(scan.dataset.label_indices(), vec![0, 0, 1, 1, 1]);
        assert_eq!(scan.skipped.len(), 1);
        let again = scan_dataset(dir.path()).unwrap();
        let p1: Vec<_> = scan.dataset.records.iter().map(|r| &r.path).collect();
        let p2: Vec<_> = again.dataset.records.iter().map(|r| &r.path).collect();
        assert_eq!(p1, p2);
    }

    #[test]
    fn scan_sorts_devices_by_name() {
        let dir = tempfile::tempdir().unwrap();
        for d in ["samsungs24", "redminote10s", "iphone17pro", "iphone13promax"] {
            touch(&dir.path().join(d).join("img.png"), b"");
        }
        let ds = scan_dataset(dir.path()).unwrap().dataset;
        assert_eq!(
            ds.label_names(),
            vec!["iphone13promax", "iphone17pro", "redminote10s", "samsungs24"]
        );
    }

    #[test]
    fn scan_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_dataset(&dir.path().join("nope")),
            Err(Error::MissingRoot(_))
        ));
        assert!(matches!(scan_dataset(dir.path()), Err(Error::NoClasses(_))));
        touch(&dir.path().join("a/1.png"), b"");
        touch(&dir.path().join("txtonly/readme.txt"), b"");
        match scan_dataset(dir.path()) {
            Err(Error::EmptyClass(p)) => assert!(p.ends_with("txtonly")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decode_ppm_red() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        for _ in 0..4 {
            bytes.extend_from_slice(&[255, 0, 0]);
        }
        touch(&path, &bytes);
        let img = decode_image(&path).unwrap();
        assert_eq!((img.height(), img.width(), img.channels()), (2, 2, 3));
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(img.get(y, x, 0), 255.0);
                assert_eq!(img.get(y, x, 1), 0.0);
            }
        }
    }

    #[test]
    fn decode_truncated_jpeg_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jpg");
        let mut buf = Vec::new();
        let src = image::RgbImage::from_fn(32, 32, |x, y| image::Rgb([x as u8 * 8, y as u8 * 8, 7]));
        src.write_to(&mut std::io::Cursor::new(&mut buf), image::ImageFormat::Jpeg)
            .unwrap();
        touch(&path, &buf[..buf.len() / 3]);
        match decode_image(&path) {
            Err(Error::Decode { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn heic_requires_preconversion() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("IMG_0001.HEIC");
        touch(&path, b"\0\0\0\x18ftypheic");
        let err = decode_image(&path).unwrap_err();
        assert!(matches!(err, Error::HeicUnsupported { .. }));
        assert!(err.to_string().contains("pre-convert required"));
    }

    #[test]
    fn grayscale_points() {
        let img = rgb(1, 3, |_, x, c| match (x, c) {
            (0, _) => 255.0,
            (1, 0) => 255.0,
            _ => 0.0,
        });
        let g = to_grayscale(&img);
        assert_eq!(g.channels(), 1);
        assert!((g.get(0, 0, 0) - 255.0).abs() < 1e-9);
        assert!((g.get(0, 1, 0) - 76.245).abs() < 1e-9);
        assert_eq!(g.get(0, 2, 0), 0.0);
        assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn resize_constant_is_exact() {
        let img = rgb(37, 91, |_, _, _| 255.0);
        let out = resize_bilinear(&img, ResizeSpec::default()).unwrap();
        assert_eq!((out.height(), out.width(), out.channels()), (128, 128, 3));
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn resize_identity() {
        let img = rgb(128, 128, |y, x, c| ((y * 7 + x * 3 + c * 11) % 256) as f64);
        let out = resize_bilinear(&img, ResizeSpec::default()).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert_eq!(a / 255.0, *b);
        }
    }

    /// Textbook bilinear sample, written independently of the resize loop.
    fn naive_sample(img: &RasterImage, oy: usize, ox: usize, c: usize, oh: usize, ow: usize) -> f64 {
        let fy = ((oy as f64 + 0.5) * img.height() as f64 / oh as f64 - 0.5)
            .max(0.0)
            .min((img.height() - 1) as f64);
        let fx = ((ox as f64 + 0.5) * img.width() as f64 / ow as f64 - 0.5)
            .max(0.0)
            .min((img.width() - 1) as f64);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(img.height() - 1), (x0 + 1).min(img.width() - 1));
        let (dy, dx) = (fy - y0 as f64, fx - x0 as f64);
        let v = img.get(y0, x0, c) * (1.0 - dy) * (1.0 - dx)
            + img.get(y0, x1, c) * (1.0 - dy) * dx
            + img.get(y1, x0, c) * dy * (1.0 - dx)
            + img.get(y1, x1, c) * dy * dx;
        v / 255.0
    }

    #[test]
    fn resize_ramp_matches_naive_oracle() {
        let img = rgb(256, 256, |_, x, _| x as f64 * 255.0 / 255.0);
        let out = resize_bilinear(&img, ResizeSpec::default()).unwrap();
        for y in (0..128).step_by(17) {
            let mut prev = f64::NEG_INFINITY;
            for x in 0..128 {
                let v = out.get(y, x, 0);
                assert!((v - naive_sample(&img, y, x, 0, 128, 128)).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&v));
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    proptest! {
        #[test]
        fn grayscale_bounded(r in 0u8..=255, g in 0u8..=255, b in 0u8..=255) {
            let img = rgb(1, 1, |_, _, c| [r, g, b][c] as f64);
            let y = to_grayscale(&img).get(0, 0, 0);
            prop_assert!((0.0..=255.0).contains(&y));
            prop_assert!(y <= r.max(g).max(b) as f64 + 1e-9);
        }

        #[test]
        fn resize_stays_in_source_range(
            h in 1usize..40, w in 1usize..40, oh in 1usize..40, ow in 1usize..40, seed in 0u64..1000
        ) {
            let img = rgb(h, w, |y, x, c| ((y * 31 + x * 17 + c * 5 + seed as usize) * 2654435761 % 256) as f64);
            let out = resize_bilinear(&img, ResizeSpec { height: oh, width: ow }).unwrap();
            let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min) / 255.0;
            let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max) / 255.0;
            for &v in out.data() {
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
