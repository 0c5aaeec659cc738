//! Train/evaluate orchestration for one model or the whole zoo.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::checkpoint_bytes;
use crate::config::ExperimentConfig;
use crate::dataset::{
    fingerprint, preprocess_records, read_encoded_dir, vocab_json_bytes, write_encoded_dir, EncodedDataset,
    PreprocessOptions,
};
use crate::error::Error;
use crate::eval::{evaluate_records, majority_baseline, render_results_table, Averaging, MetricsReport, PercentStyle};
use crate::ingest::{filter_completed, load_reports, ClassDistribution, InputFormat};
use crate::nn::{ModelParams, ModelSpec};
use crate::text::Stoplist;
use crate::train::{split_dataset, train_on_split, DataSplit, SplitSpec, TrainConfig, TrainingHistory};
use crate::zoo::{zoo_spec, ZOO_NAMES};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SPLIT_FILE: &str = "split.json";
pub const RESULTS_TEXT_FILE: &str = "results.txt";
pub const RESULTS_CSV_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENCODED_SUBDIR: &str = "encoded";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run's output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub status: ModelStatus,
    pub error: Option<String>,
    pub test_accuracy: Option<f64>,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub vocab_size: usize,
    pub vocab_fingerprint: String,
    pub class_counts: [usize; 4],
    pub majority_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: DatasetSummary,
    pub split_spec: SplitSpec,
    pub train_config: TrainConfig,
    pub models: Vec<ModelEntry>,
    /// Files that are not specific to one model.
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn succeeded(&self) -> usize {
        self.models.iter().filter(|m| m.status == ModelStatus::Ok).count()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub manifest: RunManifest,
    pub results: Vec<(String, MetricsReport)>,
    pub results_text: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn rel_path(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Writes `bytes` to `root/rel` and records its hash.
fn write_tracked(root: &Path, rel: &Path, bytes: &[u8], files: &mut Vec<FileEntry>) -> Result<(), Error> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    std::fs::write(&path, bytes).map_err(Error::io(&path))?;
    files.push(FileEntry {
        path: rel_path(rel),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

/// Encoded data ready for training.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: EncodedDataset,
    pub vocab_fingerprint: String,
    /// Files written while preprocessing a raw corpus, relative to the
    /// output directory.
    pub written: Vec<FileEntry>,
}

/// Reads an encoded directory, or ingests and preprocesses a raw corpus
/// file into `output_dir/encoded`.
pub fn load_data(config: &ExperimentConfig, data_path: &Path, output_dir: &Path) -> Result<LoadedData, Error> {
    if data_path.is_dir() {
        let enc = read_encoded_dir(data_path)?;
        return Ok(LoadedData {
            dataset: enc.dataset,
            vocab_fingerprint: enc.vocab_fingerprint,
            written: Vec::new(),
        });
    }
    let loaded = load_reports(data_path, InputFormat::from_path(data_path))?;
    for w in &loaded.warnings {
        log::warn!("{}: entry {}: {}", data_path.display(), w.entry, w.message);
    }
    let records = filter_completed(&loaded.records);
    let stoplist = match &config.stoplist {
        Some(p) => Stoplist::from_file(p).map_err(Error::io(p))?,
        None => Stoplist::english(),
    };
    let opts = PreprocessOptions {
        vocab_size: config.vocab_size,
        seq_len: config.seq_len,
        pad: config.pad,
        stoplist,
    };
    let pre = preprocess_records(&records, &opts);
    let enc_dir = output_dir.join(ENCODED_SUBDIR);
    let paths = write_encoded_dir(&enc_dir, &pre)?;
    let mut written = Vec::new();
    for p in paths {
        let bytes = std::fs::read(&p).map_err(Error::io(&p))?;
        let rel = p.strip_prefix(output_dir).unwrap_or(&p);
        written.push(FileEntry {
            path: rel_path(rel),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(LoadedData {
        vocab_fingerprint: fingerprint(&vocab_json_bytes(&pre.vocab)),
        dataset: pre.dataset,
        written,
    })
}

/// Result of training one model and writing its artifacts.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub params: ModelParams,
    pub history: TrainingHistory,
    pub report: Option<MetricsReport>,
    pub files: Vec<FileEntry>,
}

/// Trains `spec` on `split`, writes checkpoint, history and split files
/// into `root/rel_dir`, and, when `averaging` is given, evaluates on the
/// test split and writes the metrics JSON.
#[allow(clippy::too_many_arguments)]
pub fn train_and_write(
    spec: &ModelSpec,
    data: &EncodedDataset,
    vocab_fingerprint: &str,
    train_config: &TrainConfig,
    split_spec: &SplitSpec,
    split: &DataSplit,
    root: &Path,
    rel_dir: &Path,
    averaging: Option<Averaging>,
) -> Result<ModelRun, Error> {
    let params = ModelParams::init(spec, data.vocab_size, train_config.seed)?;
    let trained = train_on_split(spec, data, train_config, split_spec, split.clone(), params)?;
    let mut files = Vec::new();
    let ckpt = checkpoint_bytes(&trained.params, spec, vocab_fingerprint, Default::default())?;
    write_tracked(root, &rel_dir.join(CHECKPOINT_FILE), &ckpt, &mut files)?;
    write_tracked(root, &rel_dir.join(HISTORY_FILE), trained.history.to_csv().as_bytes(), &mut files)?;
    let mut split_json = serde_json::to_vec_pretty(split_spec).expect("split spec serializes");
    split_json.push(b'\n');
    write_tracked(root, &rel_dir.join(SPLIT_FILE), &split_json, &mut files)?;
    let report = match averaging {
        Some(mode) => {
            let report = evaluate_records(spec, &trained.params, &data.select(&split.test), mode)?;
            write_tracked(root, &rel_dir.join(METRICS_FILE), report.to_json().as_bytes(), &mut files)?;
            Some(report)
        }
        None => None,
    };
    Ok(ModelRun {
        params: trained.params,
        history: trained.history,
        report,
        files,
    })
}

/// Trains and evaluates every configured model on one shared split.
/// A failing model is recorded in the manifest; the others continue.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, Error> {
    config.validate()?;
    let data_path = config
        .data_path
        .as_deref()
        .ok_or_else(|| Error::Usage("no data path given (--data or data_path)".into()))?;
    let out = config
        .output_dir
        .as_deref()
        .ok_or_else(|| Error::Usage("no output directory given (--out or output_dir)".into()))?;
    std::fs::create_dir_all(out).map_err(Error::io(out))?;

    let loaded = load_data(config, data_path, out)?;
    let data = &loaded.dataset;
    let split_spec = config.split_spec();
    let split = split_dataset(data.len(), &split_spec)?;
    let train_config = config.train_config();
    let widths = config.zoo_widths();

    let mut names = config.resolved_models()?;
    names.sort_by_key(|n| ZOO_NAMES.iter().position(|z| z == n));

    let slots: Vec<Mutex<Option<Result<ModelRun, Error>>>> = names.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.parallelism.min(names.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= names.len() {
                    break;
                }
                let name = names[i];
                log::info!("training {name}");
                let result = zoo_spec(name, &widths)
                    .map_err(|e| Error::Usage(e.to_string()))
                    .and_then(|spec| {
                        train_and_write(
                            &spec,
                            data,
                            &loaded.vocab_fingerprint,
                            &train_config,
                            &split_spec,
                            &split,
                            out,
                            Path::new(name),
                            Some(config.averaging),
                        )
                    });
                if let Err(e) = &result {
                    log::error!("{name} failed: {e}");
                }
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });

    let mut models = Vec::new();
    let mut results = Vec::new();
    for (name, slot) in names.iter().zip(slots) {
        let result = slot.into_inner().expect("slot lock").expect("every model ran");
        match result {
            Ok(run) => {
                let report = run.report.expect("compare always evaluates");
                models.push(ModelEntry {
                    name: name.to_string(),
                    status: ModelStatus::Ok,
                    error: None,
                    test_accuracy: Some(report.accuracy),
                    files: run.files,
                });
                results.push((name.to_string(), report));
            }
            Err(e) => models.push(ModelEntry {
                name: name.to_string(),
                status: ModelStatus::Failed,
                error: Some(e.to_string()),
                test_accuracy: None,
                files: Vec::new(),
            }),
        }
    }

    let dist = ClassDistribution::from_labels(data.labels());
    let baseline = majority_baseline(&dist)?;
    let mut files = loaded.written.clone();
    let mut results_text = String::new();
    if !results.is_empty() {
        let table = render_results_table(&results, PercentStyle::default(), Some(baseline))?;
        results_text = table.text;
        write_tracked(out, Path::new(RESULTS_CSV_FILE), table.csv.as_bytes(), &mut files)?;
    }
    for m in models.iter().filter(|m| m.status == ModelStatus::Failed) {
        results_text.push_str(&format!(
            "{}: FAILED ({})\n",
            m.name,
            m.error.as_deref().unwrap_or("unknown error")
        ));
    }
    write_tracked(out, Path::new(RESULTS_TEXT_FILE), results_text.as_bytes(), &mut files)?;

    let manifest = RunManifest {
        dataset: DatasetSummary {
            records: data.len(),
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
            vocab_size: data.vocab_size,
            vocab_fingerprint: loaded.vocab_fingerprint.clone(),
            class_counts: dist.counts,
            majority_baseline: baseline,
        },
        split_spec,
        train_config,
        models,
        files,
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, json).map_err(Error::io(&path))?;

    Ok(ExperimentSummary {
        manifest,
        results,
        results_text,
    })
}

/// Path of a model's artifact inside a compare output directory.
pub fn model_artifact(out: &Path, model: &str, file: &str) -> PathBuf {
    out.join(model).join(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{corpus_to_json, synthetic_corpus};

    fn small_config(dir: &Path, models: &[&str]) -> ExperimentConfig {
        let corpus = dir.join("corpus.json");
        std::fs::write(&corpus, corpus_to_json(&synthetic_corpus([8, 20, 6, 6], 3))).unwrap();
        ExperimentConfig {
            data_path: Some(corpus),
            output_dir: Some(dir.join("out")),
            model_names: models.iter().map(|s| s.to_string()).collect(),
            seq_len: 20,
            embedding_dim: 4,
            hidden_units: 4,
            dense_hidden_units: 4,
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        }
    }

    #[test]
    fn single_model_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), &["lstm"]);
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.manifest.models.len(), 1);
        assert_eq!(s.manifest.models[0].name, "LSTM");
        assert_eq!(s.manifest.models[0].files.len(), 4);
        assert_eq!(s.results.len(), 1);
        // Every listed file exists with the recorded hash.
        let out = cfg.output_dir.unwrap();
        let all = s.manifest.files.iter().chain(s.manifest.models.iter().flat_map(|m| &m.files));
        for f in all {
            let bytes = std::fs::read(out.join(&f.path)).unwrap();
            assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
        }
        assert!(out.join(MANIFEST_FILE).exists());
    }

    #[test]
    fn zoo_order_and_paired_split() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), &["GRU", "sRNN", "LSTM"]);
        cfg.parallelism = 3;
        let s = run_experiment(&cfg).unwrap();
        let names: Vec<_> = s.results.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["LSTM", "sRNN", "GRU"]);
        let totals: Vec<u64> = s.results.iter().map(|(_, r)| r.total).collect();
        assert!(totals.iter().all(|&t| t == s.manifest.dataset.test as u64));
        assert_eq!(s.manifest.succeeded(), 3);
    }

    #[test]
    fn failure_is_isolated() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), &["LSTM", "GRU"]);
        cfg.learning_rate = f64::MAX;
        let s = run_experiment(&cfg).unwrap();
        // With an absurd step size both models blow up, but the run still
        // completes and records each failure.
        assert!(s.manifest.models.iter().all(|m| m.status == ModelStatus::Failed));
        assert!(s.results_text.contains("FAILED"));
    }
}
