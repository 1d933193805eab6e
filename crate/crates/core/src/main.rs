use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qadapt::corpus::{generate_synthetic, load_any, save_canonical};
use qadapt::harness::{
    emit_report, run_experiment, ExperimentConfig, ExperimentKind, ModelSettings, ReportFormat,
};
use qadapt::metrics::{evaluate, save_predictions};
use qadapt::model::{load_checkpoint, save_checkpoint, QaModel};
use qadapt::stats::{contrastive_prefixes, length_histogram, length_shares, prefix_distribution, LengthBands};
use qadapt::trainer::{finetune, train, TrainConfig, TrainLog};
use qadapt::weighting::{load_weight_table_csv, weigh_corpus, weights_for_corpora, DEFAULT_CAP};
use qadapt::{Error, Result, SynthDomainSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Domain adaptation workbench for extractive question answering.
///
/// Results go to stdout (or --output); diagnostics go to stderr. The only
/// environment knob is RAYON_NUM_THREADS, which sizes the worker pool.
#[derive(Parser, Debug)]
#[command(name = "qadapt", version)]
struct Cli {
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Overrides the seed found in the config or spec.
    #[arg(long)]
    seed: Option<u64>,

    /// Output file (or directory for `stats` and `experiment`); stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Preset {
    General,
    Manual,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Kind {
    Grid,
    Curve,
    Weighted,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus in canonical JSONL.
    GenSynth {
        /// JSON synthetic domain spec.
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// Built-in domain instead of a spec file.
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Pair count for --preset.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Answer-length histogram, length shares and question-prefix counts.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        prefix_words: u8,
        /// `shared-with <file>`: bin edges from both corpora, plus a prefix contrast.
        #[arg(long, num_args = 2, value_names = ["MODE", "FILE"])]
        edges: Option<Vec<String>>,
        /// Phrases listed per side of the prefix contrast.
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Importance weights p_t / p_s over answer length.
    Weights {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model from scratch.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON with `model` and `train` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Weight table CSV from `weights`.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Continue training a checkpoint on a target sample.
    Finetune {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// JSON with a `train` section.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint on a corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Also write the predictions as a JSON id -> answer map.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a grid, adaptation curve or weighted curve.
    Experiment {
        #[arg(value_enum)]
        kind: Kind,
        /// Experiment config JSON; the synthetic benchmark when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// File read by `train` and `finetune`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainingFile {
    model: ModelSettings,
    train: Option<TrainConfig>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|source| Error::Io {
            path: p.into(),
            source,
        }),
        None => match io::stdout().write_all(bytes) {
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            r => r.map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            }),
        },
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// The log without wall time, so stdout stays deterministic.
fn log_bytes(log: &TrainLog, format: Format) -> Result<Vec<u8>> {
    eprintln!("trained {} steps in {:.1}s", log.steps, log.wall_time_secs);
    match format {
        Format::Json => json_bytes(&serde_json::json!({
            "epoch_losses": log.epoch_losses,
            "steps": log.steps,
            "examples_seen": log.examples_seen,
            "unusable": log.unusable,
        })),
        Format::Csv => csv_bytes(|buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["epoch", "loss"])?;
            for (i, l) in log.epoch_losses.iter().enumerate() {
                w.serialize((i + 1, l))?;
            }
            w.flush().map_err(|source| Error::Io {
                path: "<csv>".into(),
                source,
            })
        }),
    }
}

fn gen_synth(spec: Option<PathBuf>, preset: Option<Preset>, n: usize, out: &Path, common: &Common) -> Result<()> {
    let mut spec: SynthDomainSpec = match (spec, preset) {
        (Some(path), _) => read_json(&path)?,
        (None, Some(Preset::General)) => SynthDomainSpec::general_like(n, 0),
        (None, Some(Preset::Manual)) => SynthDomainSpec::manual_like(n, 0),
        (None, None) => unreachable!("clap requires --spec or --preset"),
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec)?;
    save_canonical(&corpus, out)?;
    eprintln!("wrote {} pairs to {}", corpus.len(), out.display());
    Ok(())
}

fn stats(corpus: &Path, prefix_words: u8, edges: Option<Vec<String>>, top: usize, common: &Common) -> Result<()> {
    let corpus = load_any(corpus)?;
    let other = match edges.as_deref() {
        None => None,
        Some([mode, file]) if mode == "shared-with" => Some(load_any(file)?),
        Some(_) => return Err(Error::Spec("--edges takes `shared-with <file>`".into())),
    };
    let n_words = prefix_words as usize;
    let prefixes = prefix_distribution(&corpus, n_words)?;
    let shares = length_shares(&corpus, LengthBands::default())?;
    let (histogram, contrast) = match &other {
        Some(o) => {
            let report = weights_for_corpora(&corpus, o, DEFAULT_CAP)?;
            let h = length_histogram(&corpus, Some(&report.table.bin_edges))?;
            let c = contrastive_prefixes(&prefixes, &prefix_distribution(o, n_words)?, top)?;
            (h, Some(c))
        }
        None => (length_histogram(&corpus, None)?, None),
    };

    let files: Vec<(&str, Vec<u8>)> = match common.format {
        Format::Json => vec![(
            "stats.json",
            json_bytes(&serde_json::json!({
                "corpus": corpus.name,
                "length_histogram": histogram,
                "length_shares": shares,
                "prefixes": prefixes,
                "contrast": contrast,
            }))?,
        )],
        Format::Csv => {
            let mut files = vec![
                ("lengths.csv", csv_bytes(|b| histogram.write_csv(b))?),
                ("prefixes.csv", csv_bytes(|b| prefixes.write_csv(b))?),
                (
                    "shares.csv",
                    format!("short,medium,long\n{},{},{}\n", shares.short, shares.medium, shares.long).into_bytes(),
                ),
            ];
            if let Some(c) = &contrast {
                files.push((
                    "contrast.csv",
                    csv_bytes(|b| {
                        let mut w = csv::Writer::from_writer(b);
                        w.write_record(["side", "phrase", "source_fraction", "target_fraction", "difference"])?;
                        for (side, list) in [("target", &c.target_heavy), ("source", &c.source_heavy)] {
                            for e in list {
                                w.serialize((side, &e.phrase, e.source_fraction, e.target_fraction, e.difference))?;
                            }
                        }
                        w.flush().map_err(|source| Error::Io {
                            path: "<csv>".into(),
                            source,
                        })
                    })?,
                ));
            }
            files
        }
    };
    match &common.output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.clone(),
                source,
            })?;
            for (name, bytes) in &files {
                write_bytes(Some(&dir.join(name)), bytes)?;
            }
        }
        None => {
            for (i, (_, bytes)) in files.iter().enumerate() {
                if i > 0 {
                    write_bytes(None, b"\n")?;
                }
                write_bytes(None, bytes)?;
            }
        }
    }
    Ok(())
}

fn weights(source: &Path, target: &Path, cap: f64, out: Option<PathBuf>, common: &Common) -> Result<()> {
    let report = weights_for_corpora(&load_any(source)?, &load_any(target)?, cap)?;
    let bytes = match common.format {
        Format::Csv => csv_bytes(|b| report.write_csv(b))?,
        Format::Json => json_bytes(&report)?,
    };
    write_bytes(out.or(common.output.clone()).as_deref(), &bytes)
}

fn train_cmd(corpus: &Path, config: Option<PathBuf>, weights: Option<PathBuf>, out: &Path, common: &Common) -> Result<()> {
    let file: TrainingFile = match config {
        Some(p) => read_json(&p)?,
        None => TrainingFile::default(),
    };
    let corpus = load_any(corpus)?;
    let mut settings = file.model;
    let mut tc = file.train.unwrap_or_default();
    if let Some(seed) = common.seed {
        settings.seed = seed;
        tc.seed = seed;
    }
    let w = match weights {
        Some(p) => Some(weigh_corpus(&corpus, &load_weight_table_csv(p)?)),
        None => None,
    };
    let model = QaModel::init(settings.config_for([&corpus]))?;
    let (model, log) = train(model, &corpus, &tc, w.as_deref())?;
    save_checkpoint(&model, out)?;
    write_bytes(common.output.as_deref(), &log_bytes(&log, common.format)?)
}

fn finetune_cmd(base: &Path, corpus: &Path, config: Option<PathBuf>, out: &Path, common: &Common) -> Result<()> {
    let file: TrainingFile = match config {
        Some(p) => read_json(&p)?,
        None => TrainingFile::default(),
    };
    let mut tc = file.train.unwrap_or_else(TrainConfig::finetune);
    if let Some(seed) = common.seed {
        tc.seed = seed;
    }
    let base = load_checkpoint(base)?;
    let (model, log) = finetune(&base, &load_any(corpus)?, &tc)?;
    save_checkpoint(&model, out)?;
    write_bytes(common.output.as_deref(), &log_bytes(&log, common.format)?)
}

fn eval_cmd(model: &Path, corpus: &Path, predictions: Option<PathBuf>, common: &Common) -> Result<()> {
    let model = load_checkpoint(model)?;
    let corpus = load_any(corpus)?;
    let preds = model.predict_corpus(&corpus)?;
    let result = evaluate(&preds, &corpus)?;
    if let Some(p) = predictions {
        save_predictions(&preds, p)?;
    }
    let bytes = match common.format {
        Format::Json => json_bytes(&result)?,
        Format::Csv => format!("f1,em,n\n{},{},{}\n", result.f1, result.exact_match, result.n_evaluated).into_bytes(),
    };
    write_bytes(common.output.as_deref(), &bytes)
}

fn experiment(kind: Kind, config: Option<PathBuf>, out: &Path, common: &Common) -> Result<()> {
    let (mut cfg, base_dir) = match config {
        Some(p) => {
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (ExperimentConfig::load(&p)?, dir)
        }
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
        cfg.plan.master_seed = seed;
    }
    let kind = match kind {
        Kind::Grid => ExperimentKind::Grid,
        Kind::Curve => ExperimentKind::Curve,
        Kind::Weighted => ExperimentKind::WeightedCurve,
    };
    let result = run_experiment(kind, &cfg, &base_dir)?;
    fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.into(),
        source,
    })?;
    let ext = match common.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let path = out.join(format!("{}.{ext}", kind.as_str()));
    emit_report(&result, &path, common.format.into())?;
    println!("{}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth {
            spec,
            preset,
            n,
            out,
            common,
        } => gen_synth(spec, preset, n, &out, &common),
        Command::Stats {
            corpus,
            prefix_words,
            edges,
            top,
            common,
        } => stats(&corpus, prefix_words, edges, top, &common),
        Command::Weights {
            source,
            target,
            cap,
            out,
            common,
        } => weights(&source, &target, cap, out, &common),
        Command::Train {
            corpus,
            config,
            weights,
            out,
            common,
        } => train_cmd(&corpus, config, weights, &out, &common),
        Command::Finetune {
            base,
            corpus,
            config,
            out,
            common,
        } => finetune_cmd(&base, &corpus, config, &out, &common),
        Command::Eval {
            model,
            corpus,
            predictions,
            common,
        } => eval_cmd(&model, &corpus, predictions, &common),
        Command::Experiment {
            kind,
            config,
            out,
            common,
        } => experiment(kind, config, &out, &common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_runtime() { EXIT_RUNTIME } else { EXIT_DATA })
        }
    }
}
