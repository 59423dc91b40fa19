use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use camid_core::eval::{confusion_csv, render_confusion, render_summary, run_benchmark, stratified_split, BenchmarkRun};
use camid_core::ingest::scan_dataset;
use camid_core::pipeline::{fit, parse_methods, prepare_inputs, InputFailure, Method};
use camid_core::synth::{
    generate, mix_seed, prnu_devices, quantization_devices, write_dataset, SceneSource, SynthManifest, SynthMode,
};
use camid_core::{Dataset, SplitIndices};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn failed(e: impl ToString) -> CliError {
    CliError::Failed(e.to_string())
}

fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Vec<PathBuf>), CliError> {
    let root = cfg
        .data
        .as_ref()
        .ok_or_else(|| usage("no dataset given (use --data or `data` in the config file)"))?;
    let scan = scan_dataset(root).map_err(usage)?;
    if !scan.skipped.is_empty() {
        log::warn!("{} files with unsupported extensions ignored", scan.skipped.len());
    }
    Ok((scan.dataset, scan.skipped))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json(value: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(value).map_err(failed)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn scan(cfg: &RunConfig) -> Result<(), CliError> {
    let (dataset, skipped) = load_dataset(cfg)?;
    println!("{} images, {} devices", dataset.len(), dataset.labels.len());
    for (label, count) in dataset.labels.iter().zip(dataset.class_counts()) {
        println!("{:>3}  {:<24} {count}", label.index, label.name);
    }
    if !skipped.is_empty() {
        println!("{} unsupported files ignored", skipped.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct FeatureSidecar<'a> {
    method: Method,
    columns: usize,
    rows: usize,
    labels: Vec<String>,
    failures: &'a [InputFailure],
    config_hash: String,
    config: &'a RunConfig,
}

pub fn extract(cfg: &RunConfig, method: &str) -> Result<(), CliError> {
    let method: Method = method.parse().map_err(usage)?;
    let prefix = match method {
        Method::Jpeg => "f",
        Method::Prnu => "g",
        Method::Cnn => return Err(usage("the cnn method learns its own features; use jpeg or prnu")),
    };
    let (dataset, _) = load_dataset(cfg)?;
    let pipeline = cfg.pipeline();
    let all: Vec<usize> = (0..dataset.len()).collect();
    let inputs = prepare_inputs(&dataset, &all, &pipeline.preprocessing(method), pipeline.decode_policy)
        .map_err(failed)?;
    let dim = inputs.rows.first().map_or(0, Vec::len);
    let width = if dim > 1000 { 4 } else { 3 };

    let mut csv = String::from("path,label");
    for j in 0..dim {
        write!(csv, ",{prefix}{j:0width$}").expect("write to string");
    }
    csv.push('\n');
    for (row, &i) in inputs.rows.iter().zip(&inputs.record_indices) {
        let rec = &dataset.records[i];
        csv.push_str(&csv_field(&rec.path.display().to_string()));
        csv.push(',');
        csv.push_str(&csv_field(&rec.label.name));
        for v in row {
            write!(csv, ",{v}").expect("write to string");
        }
        csv.push('\n');
    }
    create_out(&cfg.out)?;
    let csv_path = cfg.out.join(format!("{method}_features.csv"));
    write_file(&csv_path, csv)?;
    let sidecar = FeatureSidecar {
        method,
        columns: dim,
        rows: inputs.rows.len(),
        labels: dataset.label_names(),
        failures: &inputs.failures,
        config_hash: cfg.hash(),
        config: cfg,
    };
    write_file(&cfg.out.join(format!("{method}_features.json")), to_json(&sidecar)?)?;
    println!("{} rows × {dim} features → {}", inputs.rows.len(), csv_path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainedEntry {
    method: Method,
    model: PathBuf,
    n_train: usize,
    n_test: usize,
    test_accuracy: f64,
    skipped: Vec<InputFailure>,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    config_hash: String,
    config: &'a RunConfig,
    split: &'a SplitIndices,
    models: Vec<TrainedEntry>,
    failures: Vec<camid_core::eval::MethodFailure>,
}

fn train_one(
    dataset: &Dataset,
    split: &SplitIndices,
    method: Method,
    cfg: &RunConfig,
) -> camid_core::Result<TrainedEntry> {
    let pipeline = cfg.pipeline();
    let mut wanted: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
    wanted.sort_unstable();
    let inputs = prepare_inputs(dataset, &wanted, &pipeline.preprocessing(method), pipeline.decode_policy)?;
    let (train_rows, train_idx) = inputs.subset(&split.train);
    let (test_rows, test_idx) = inputs.subset(&split.test);
    let label = |i: &usize| dataset.records[*i].label.index;
    let train_labels: Vec<usize> = train_idx.iter().map(label).collect();
    let truth: Vec<usize> = test_idx.iter().map(label).collect();
    let (model, history) = fit(method, &train_rows, &train_labels, &dataset.labels, &pipeline)?;
    let test_accuracy = camid_core::eval::accuracy(&truth, &model.predict_rows(&test_rows)?)?;

    let path = cfg.out.join(format!("model_{method}.camid"));
    model.save(&path)?;
    if let Some(h) = history {
        let per_epoch = train_rows.len().div_ceil(pipeline.cnn.batch_size);
        let loss_path = cfg.out.join("loss_cnn.csv");
        fs::write(&loss_path, h.to_csv(per_epoch)).map_err(|source| camid_core::Error::Io {
            path: loss_path,
            source,
        })?;
    }
    Ok(TrainedEntry {
        method,
        model: path,
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        test_accuracy,
        skipped: inputs.failures,
    })
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let methods = parse_methods(&cfg.methods).map_err(usage)?;
    let (dataset, _) = load_dataset(cfg)?;
    let split = stratified_split(&dataset.label_indices(), &dataset.labels, cfg.ratio, cfg.seed).map_err(usage)?;
    create_out(&cfg.out)?;
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for method in methods {
        log::info!("training {method}");
        match train_one(&dataset, &split, method, cfg) {
            Ok(entry) => {
                println!(
                    "{method:<5} held-out accuracy {:.4} → {}",
                    entry.test_accuracy,
                    entry.model.display()
                );
                models.push(entry);
            }
            Err(e) => {
                eprintln!("{method}: {e}");
                failures.push(camid_core::eval::MethodFailure {
                    method,
                    error: e.to_string(),
                });
            }
        }
    }
    let n_failed = failures.len();
    let report = TrainReport {
        config_hash: cfg.hash(),
        config: cfg,
        split: &split,
        models,
        failures,
    };
    write_file(&cfg.out.join("train.json"), to_json(&report)?)?;
    if n_failed > 0 {
        return Err(failed(format!("{n_failed} method(s) failed")));
    }
    Ok(())
}

/// On-disk benchmark result, `report.json`.
#[derive(Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub config: RunConfig,
    pub run: BenchmarkRun,
}

fn summary_text(file: &ReportFile) -> String {
    let mut s = format!(
        "config {} seed {}\n{}",
        &file.config_hash[..12.min(file.config_hash.len())],
        file.config.seed,
        render_summary(&file.run)
    );
    for r in &file.run.reports {
        write!(s, "\n{} confusion (rows: true device)\n{}", r.method, render_confusion(r)).expect("write to string");
        if !r.skipped.is_empty() {
            writeln!(s, "{} images skipped", r.skipped.len()).expect("write to string");
        }
    }
    s
}

pub fn benchmark(cfg: &RunConfig) -> Result<(), CliError> {
    let methods = parse_methods(&cfg.methods).map_err(usage)?;
    let (dataset, _) = load_dataset(cfg)?;
    create_out(&cfg.out)?;
    let run = run_benchmark(&dataset, &methods, &cfg.benchmark()).map_err(usage)?;
    for r in &run.reports {
        write_file(&cfg.out.join(format!("confusion_{}.csv", r.method)), confusion_csv(r))?;
        if let Some(losses) = &r.loss_history {
            let mut csv = String::from("epoch,loss\n");
            for (i, l) in losses.iter().enumerate() {
                writeln!(csv, "{},{l}", i + 1).expect("write to string");
            }
            write_file(&cfg.out.join("loss_cnn.csv"), csv)?;
        }
    }
    let file = ReportFile {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        run,
    };
    let summary = summary_text(&file);
    write_file(&cfg.out.join("summary.txt"), &summary)?;
    write_file(&cfg.out.join("report.json"), to_json(&file)?)?;
    print!("{summary}");
    if !file.run.failures.is_empty() {
        return Err(failed(format!("{} method(s) failed", file.run.failures.len())));
    }
    Ok(())
}

pub fn report(input: &Path) -> Result<(), CliError> {
    let path = if input.is_dir() {
        input.join("report.json")
    } else {
        input.to_path_buf()
    };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let file: ReportFile =
        serde_json::from_str(&text).map_err(|e| usage(format!("{} is not a benchmark report: {e}", path.display())))?;
    print!("{}", summary_text(&file));
    Ok(())
}

pub struct SynthOptions {
    pub prnu: bool,
    pub devices: usize,
    pub per_device: usize,
    pub strength: f64,
    pub noise_std: f64,
    pub size: Option<usize>,
}

pub fn synth(cfg: &RunConfig, opts: &SynthOptions) -> Result<(), CliError> {
    if opts.devices < 2 || opts.per_device < 2 {
        return Err(usage("need at least 2 devices with 2 images each"));
    }
    let scene_seed = mix_seed(cfg.seed, 0x5343_454E);
    let (mode, devices, mut scenes) = if opts.prnu {
        (
            SynthMode::Prnu,
            prnu_devices(opts.devices, opts.strength, cfg.seed),
            SceneSource::smooth(scene_seed),
        )
    } else {
        (
            SynthMode::Quantization,
            quantization_devices(opts.devices, cfg.seed),
            SceneSource::textured(scene_seed),
        )
    };
    if let Some(s) = opts.size {
        if s < 8 {
            return Err(usage("image size must be at least 8"));
        }
        scenes.height = s;
        scenes.width = s;
    }
    for d in &devices {
        d.validate().map_err(usage)?;
    }
    let manifest = SynthManifest {
        mode,
        seed: cfg.seed,
        per_device: opts.per_device,
        noise_std: if opts.prnu { opts.noise_std } else { 0.0 },
        scenes,
        devices,
    };
    create_out(&cfg.out)?;
    // One device at a time keeps memory bounded for large sets.
    for device in &manifest.devices {
        let single = SynthManifest {
            devices: vec![device.clone()],
            ..manifest.clone()
        };
        let images = generate(&single).map_err(usage)?;
        write_dataset(&cfg.out, &images, &manifest).map_err(usage)?;
    }
    println!(
        "{} devices × {} images → {}",
        manifest.devices.len(),
        manifest.per_device,
        cfg.out.display()
    );
    Ok(())
}
