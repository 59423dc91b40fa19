use camid_core::cnn::softmax;
use camid_core::eval::{accuracy, confusion_matrix_normalized, normalize_rows, stratified_split};
use camid_core::jpeg::{block_stats, dct2_8x8, jpeg_feature_vector, partition_blocks, Block};
use camid_core::prnu::{local_moments, prnu_pattern, PrnuConfig};
use camid_core::svm::{train_binary_svm_traced, Kernel, Standardizer, SvmParams};
use camid_core::synth::{prnu_devices, gen_prnu_device_images, SceneSource};
use camid_core::{DeviceLabel, FeatureMatrix, PixelRange, RasterImage};
use proptest::prelude::*;

fn gray(h: usize, w: usize, data: Vec<f64>) -> RasterImage {
    RasterImage::new(h, w, 1, PixelRange::Byte, data).unwrap()
}

fn image_strategy(min: usize, max: usize) -> impl Strategy<Value = RasterImage> {
    (min..=max, min..=max).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.0f64..255.0, h * w).prop_map(move |d| gray(h, w, d))
    })
}

fn block_strategy() -> impl Strategy<Value = Block> {
    prop::array::uniform8(prop::array::uniform8(0.0f64..255.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dct_preserves_energy(b in block_strategy()) {
        let c = dct2_8x8(&b);
        let e_in: f64 = b.iter().flatten().map(|v| v * v).sum();
        let e_out: f64 = c.iter().flatten().map(|v| v * v).sum();
        prop_assert!((e_in - e_out).abs() <= 1e-6 * e_in.max(1.0));
    }

    #[test]
    fn block_partition_geometry(img in image_strategy(8, 40)) {
        let set = partition_blocks(&img).unwrap();
        prop_assert_eq!(set.cropped_height % 8, 0);
        prop_assert_eq!(set.cropped_width % 8, 0);
        prop_assert_eq!(set.cropped_height, img.height() - img.height() % 8);
        prop_assert_eq!(set.cropped_width, img.width() - img.width() % 8);
        prop_assert_eq!(set.len(), (set.cropped_height / 8) * (set.cropped_width / 8));
        if set.len() >= 2 {
            let s = block_stats(&set).unwrap();
            prop_assert_eq!(s.means.len(), 63);
            prop_assert_eq!(s.variances.len(), 63);
            prop_assert!(s.variances.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn jpeg_feature_ignores_cropped_remainder_and_brightness(
        img in image_strategy(16, 30),
        extra in prop::collection::vec(0.0f64..255.0, 7 * 40),
        shift in -20.0f64..20.0,
    ) {
        let (h, w) = (img.height(), img.width());
        let f = jpeg_feature_vector(&img).unwrap();
        prop_assert_eq!(f.0.len(), 126);
        prop_assert!(f.0.iter().all(|v| v.is_finite()));

        // Pad to the next multiple of 8 plus up to 7 rows/cols of junk, all cropped away.
        let (hc, wc) = (h - h % 8, w - w % 8);
        let (h2, w2) = (hc + 7, wc + 7);
        let mut padded = Vec::with_capacity(h2 * w2);
        for y in 0..h2 {
            for x in 0..w2 {
                padded.push(if y < hc && x < wc { img.get(y, x, 0) } else { extra[(y * w2 + x) % extra.len()] });
            }
        }
        let g = jpeg_feature_vector(&gray(h2, w2, padded)).unwrap();
        prop_assert_eq!(&f.0, &g.0);

        let shifted = gray(h, w, img.data().iter().map(|v| v + shift).collect());
        let s = jpeg_feature_vector(&shifted).unwrap();
        for (a, b) in f.0.iter().zip(&s.0) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn prnu_gain_and_identity(img in image_strategy(32, 40)) {
        let cfg = PrnuConfig { crop: 32, stride: 4, ..PrnuConfig::default() };
        let p = prnu_pattern(&img, &cfg).unwrap();
        let m = local_moments(&p.residual, &cfg).unwrap();
        for i in 0..p.pattern.data.len() {
            let (r, e, k) = (p.residual.0.data[i], p.estimate.data[i], p.pattern.data[i]);
            prop_assert_eq!(k.to_bits(), (r - e).to_bits());
            let var = m.variance.data[i];
            prop_assert!(var >= 0.0);
            let gain = var / (var + cfg.noise_variance);
            prop_assert!((0.0..1.0).contains(&gain));
            prop_assert!(e.abs() <= (r - m.mean.data[i]).abs());
        }
    }

    #[test]
    fn standardized_columns(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 3..20)) {
        let n = rows.len();
        let x = FeatureMatrix::unlabeled(rows).unwrap();
        let z = Standardizer::fit(&x).unwrap().apply(&x).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..n).map(|i| x.row(i)[j]).collect();
            let raw_mean = col.iter().sum::<f64>() / n as f64;
            let raw_var = col.iter().map(|v| (v - raw_mean).powi(2)).sum::<f64>() / n as f64;
            if raw_var < 1e-12 {
                continue;
            }
            let zc: Vec<f64> = (0..n).map(|i| z.row(i)[j]).collect();
            let mean = zc.iter().sum::<f64>() / n as f64;
            let std = (zc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rbf_gram_symmetric_unit_diagonal(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 2..12),
        gamma in 0.01f64..2.0,
    ) {
        let n = rows.len();
        let x = FeatureMatrix::unlabeled(rows).unwrap();
        let k = Kernel::Rbf { gamma }.gram(&x);
        for i in 0..n {
            prop_assert_eq!(k[i * n + i], 1.0);
            for j in 0..n {
                prop_assert_eq!(k[i * n + j], k[j * n + i]);
            }
        }
    }

    #[test]
    fn svm_dual_feasibility_and_ascent(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, any::<bool>()), 4..30),
        c in 0.1f64..10.0,
    ) {
        let mut y: Vec<f64> = pts.iter().map(|p| if p.2 { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let x = FeatureMatrix::unlabeled(pts.iter().map(|p| vec![p.0, p.1]).collect()).unwrap();
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.5 }] {
            let params = SvmParams { c, ..SvmParams::default() };
            let m = train_binary_svm_traced(&x, &y, kernel, &params).unwrap();
            prop_assert!(m.report.converged);
            prop_assert!(m.dual_coef.iter().all(|a| a.abs() <= c * (1.0 + 1e-12)));
            prop_assert!(m.dual_coef.iter().sum::<f64>().abs() <= 1e-6);
            for w in m.report.objective_trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn softmax_rows(logits in prop::collection::vec(-30.0f64..30.0, 2..8), shift in -100.0f64..100.0) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| *v > 0.0));
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn confusion_consistent_with_accuracy(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let cm = confusion_matrix_normalized(&truth, &pred, 4).unwrap();
        for (i, row) in cm.normalized.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if cm.empty_rows.contains(&i) {
                prop_assert!(row.iter().all(|v| *v == 0.0));
            } else {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
        let trace: usize = (0..4).map(|i| cm.counts[i][i]).sum();
        let acc = accuracy(&truth, &pred).unwrap();
        prop_assert!((acc - trace as f64 / truth.len() as f64).abs() <= 1e-15);
        let again = normalize_rows(&cm.normalized);
        for (a, b) in again.iter().flatten().zip(cm.normalized.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn split_is_stratified_partition(
        counts in prop::collection::vec(2usize..25, 2..5),
        seed in any::<u64>(),
        ratio in 0.2f64..0.9,
    ) {
        let classes = DeviceLabel::from_names((0..counts.len()).map(|i| format!("c{i}")));
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let s = stratified_split(&labels, &classes, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let tr = s.train.iter().filter(|&&i| labels[i] == c).count();
            prop_assert_eq!(tr, (ratio * n as f64 + 1e-9).floor() as usize);
        }
        let again = stratified_split(&labels, &classes, ratio, seed).unwrap();
        prop_assert_eq!(again, s);
    }

    #[test]
    fn label_order_ignores_input_order(mut names in prop::collection::vec("[a-z]{1,6}", 1..8)) {
        let a = DeviceLabel::from_names(names.clone());
        names.reverse();
        let b = DeviceLabel::from_names(names);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn synthetic_generation_is_deterministic(seed in any::<u64>(), index in 0usize..3) {
        let spec = prnu_devices(1, 0.02, seed).remove(0);
        let scenes = SceneSource { height: 24, width: 24, ..SceneSource::smooth(seed) };
        let a = gen_prnu_device_images(&spec, index + 1, &scenes, 1.0).unwrap();
        let b = gen_prnu_device_images(&spec, index + 1, &scenes, 1.0).unwrap();
        prop_assert_eq!(a[index].image.data(), b[index].image.data());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svm_decisions_ignore_row_order(
        pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 8..24),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let y: Vec<f64> = pts.iter().map(|p| if p.0 + 0.5 * p.1 > 0.2 { 1.0 } else { -1.0 }).collect();
        prop_assume!(y.contains(&1.0) && y.contains(&-1.0));
        let rows: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let permuted_rows: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let permuted_y: Vec<f64> = order.iter().map(|&i| y[i]).collect();

        // Tight tolerance so both runs reach the same optimum.
        let params = SvmParams { tolerance: 1e-10, ..SvmParams::default() };
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.7 }] {
            let a = camid_core::svm::train_binary_svm(&FeatureMatrix::unlabeled(rows.clone()).unwrap(), &y, kernel, &params).unwrap();
            let b = camid_core::svm::train_binary_svm(&FeatureMatrix::unlabeled(permuted_rows.clone()).unwrap(), &permuted_y, kernel, &params).unwrap();
            let again = camid_core::svm::train_binary_svm(&FeatureMatrix::unlabeled(rows.clone()).unwrap(), &y, kernel, &params).unwrap();
            prop_assert_eq!(&a, &again);
            for probe in [[0.0, 0.0], [1.0, -1.0], [-1.5, 0.3], [0.4, 1.9]] {
                let (da, db) = (a.decision(&probe).unwrap(), b.decision(&probe).unwrap());
                prop_assert!((da - db).abs() <= 1e-6, "{} vs {}", da, db);
            }
        }
    }
}
