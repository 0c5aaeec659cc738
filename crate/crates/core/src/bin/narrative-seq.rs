use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use narrative_seq::checkpoint::load_checkpoint;
use narrative_seq::config::ExperimentConfig;
use narrative_seq::dataset::{preprocess_records, read_encoded_dir, write_encoded_dir, PreprocessOptions};
use narrative_seq::error::{exit, Error};
use narrative_seq::eval::{
    evaluate_records, majority_baseline, render_results_table, Averaging, PercentStyle,
};
use narrative_seq::experiment::{run_experiment, train_and_write, SPLIT_FILE};
use narrative_seq::ingest::{class_distribution, filter_completed, load_reports, ClassDistribution, InputFormat};
use narrative_seq::text::Stoplist;
use narrative_seq::train::{split_dataset, SplitSpec};
use narrative_seq::vocab::PadSide;
use narrative_seq::zoo::zoo_spec;

#[derive(Parser, Debug)]
#[command(name = "narrative-seq", version, about = "Damage-level classification of occurrence narratives")]
struct Cli {
    /// TOML experiment config; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load raw reports and print the class distribution.
    Ingest(IngestArgs),
    /// Tokenize, build the vocabulary and encode reports.
    Preprocess(PreprocessArgs),
    /// Train one zoo model on an encoded directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split of an encoded directory.
    Evaluate(EvaluateArgs),
    /// Train and evaluate several zoo models on a shared split.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<InputFormat>,
    /// Also write the distribution as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    pad: Option<PadSide>,
    #[arg(long)]
    stoplist: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    reval_per_epoch: bool,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: SplitName,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    averaging: Option<Averaging>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Encoded directory or raw JSON/CSV corpus.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated zoo names; all ten by default.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    averaging: Option<Averaging>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    let default_level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();

    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn base_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    std::fs::write(path, bytes).map_err(Error::io(path))
}

fn run(cli: Cli) -> Result<i32, Error> {
    let mut cfg = base_config(&cli)?;
    match cli.command {
        Command::Ingest(a) => {
            let format = a.format.unwrap_or_else(|| InputFormat::from_path(&a.data));
            let loaded = load_reports(&a.data, format)?;
            for w in &loaded.warnings {
                eprintln!("warning: entry {}: {}", w.entry, w.message);
            }
            let kept = filter_completed(&loaded.records);
            let dist = class_distribution(&kept);
            println!(
                "{} records loaded, {} completed with narratives, {} skipped",
                loaded.records.len(),
                kept.len(),
                loaded.warnings.len()
            );
            print!("{}", dist.render_table());
            if let Some(out) = a.out {
                let mut json = serde_json::to_vec_pretty(&dist.to_json()).expect("json serializes");
                json.push(b'\n');
                write_file(&out, &json)?;
            }
            Ok(exit::OK)
        }
        Command::Preprocess(a) => {
            let format = a.format.unwrap_or_else(|| InputFormat::from_path(&a.data));
            let loaded = load_reports(&a.data, format)?;
            for w in &loaded.warnings {
                log::warn!("entry {}: {}", w.entry, w.message);
            }
            let records = filter_completed(&loaded.records);
            let stop_path = a.stoplist.or(cfg.stoplist.clone());
            let stoplist = match &stop_path {
                Some(p) => Stoplist::from_file(p).map_err(Error::io(p))?,
                None => Stoplist::english(),
            };
            let opts = PreprocessOptions {
                vocab_size: a.vocab_size.unwrap_or(cfg.vocab_size),
                seq_len: a.seq_len.unwrap_or(cfg.seq_len),
                pad: a.pad.unwrap_or(cfg.pad),
                stoplist,
            };
            if opts.vocab_size < 3 || opts.seq_len == 0 {
                return Err(Error::Usage("--vocab-size must be at least 3 and --seq-len positive".into()));
            }
            let pre = preprocess_records(&records, &opts);
            for p in write_encoded_dir(&a.out, &pre)? {
                println!("wrote {}", p.display());
            }
            println!(
                "{} records, vocabulary {} of max {}, sequence length {}",
                pre.dataset.len(),
                pre.vocab.len(),
                opts.vocab_size,
                opts.seq_len
            );
            Ok(exit::OK)
        }
        Command::Train(a) => {
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
            cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
            cfg.reval_per_epoch |= a.reval_per_epoch;
            cfg.model_names = vec![a.model.clone()];
            cfg.validate()?;
            let spec = zoo_spec(&a.model, &cfg.zoo_widths()).map_err(|e| Error::Usage(e.to_string()))?;
            let enc = read_encoded_dir(&a.data)?;
            let split_spec = cfg.split_spec();
            let split = split_dataset(enc.dataset.len(), &split_spec)?;
            let run = train_and_write(
                &spec,
                &enc.dataset,
                &enc.vocab_fingerprint,
                &cfg.train_config(),
                &split_spec,
                &split,
                &a.out,
                Path::new(""),
                None,
            )?;
            for f in &run.files {
                println!("wrote {}", a.out.join(&f.path).display());
            }
            if let Some(last) = run.history.last() {
                println!(
                    "{}: epoch {} train_loss {:.6} train_acc {:.6} val_loss {:.6} val_acc {:.6}",
                    spec.name, last.epoch, last.train_loss, last.train_acc, last.val_loss, last.val_acc
                );
            }
            Ok(exit::OK)
        }
        Command::Evaluate(a) => {
            let enc = read_encoded_dir(&a.data)?;
            let ck = load_checkpoint(&a.model_file, Some(&enc.vocab_fingerprint))?;
            let split_path = a.model_file.with_file_name(SPLIT_FILE);
            let split_spec: SplitSpec = if split_path.exists() {
                let bytes = std::fs::read(&split_path).map_err(Error::io(&split_path))?;
                serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Usage(format!("{}: {e}", split_path.display())))?
            } else {
                cfg.split_spec()
            };
            let indices: Vec<usize> = match a.split {
                SplitName::All => (0..enc.dataset.len()).collect(),
                name => {
                    let s = split_dataset(enc.dataset.len(), &split_spec)?;
                    match name {
                        SplitName::Train => s.train,
                        SplitName::Validation => s.validation,
                        _ => s.test,
                    }
                }
            };
            let records = enc.dataset.select(&indices);
            let mode = a.averaging.unwrap_or(cfg.averaging);
            let report = evaluate_records(&ck.spec, &ck.params, &records, mode)?;
            let baseline = majority_baseline(&ClassDistribution::from_labels(records.iter().map(|r| r.label)))?;
            let rows = vec![(ck.spec.name.clone(), report.clone())];
            let table = render_results_table(&rows, PercentStyle::default(), Some(baseline))?;
            write_file(&a.out.join("metrics.json"), report.to_json().as_bytes())?;
            write_file(&a.out.join("results.txt"), table.text.as_bytes())?;
            write_file(&a.out.join("results.csv"), table.csv.as_bytes())?;
            print!("{}", table.text);
            Ok(exit::OK)
        }
        Command::Compare(a) => {
            if let Some(d) = a.data {
                cfg.data_path = Some(d);
            }
            if let Some(o) = a.out {
                cfg.output_dir = Some(o);
            }
            if let Some(m) = a.models {
                cfg.model_names = m;
            }
            cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
            cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
            cfg.learning_rate = a.lr.unwrap_or(cfg.learning_rate);
            cfg.parallelism = a.parallelism.unwrap_or(cfg.parallelism);
            cfg.averaging = a.averaging.unwrap_or(cfg.averaging);
            if let Some(data) = &cfg.data_path {
                if !data.exists() {
                    return Err(Error::Io {
                        path: data.clone(),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
                    });
                }
            }
            let summary = run_experiment(&cfg)?;
            print!("{}", summary.results_text);
            let ok = summary.manifest.succeeded();
            if ok == 0 {
                return Err(Error::AllModelsFailed(summary.manifest.models.len()));
            }
            Ok(exit::OK)
        }
    }
}
