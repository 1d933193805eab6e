//! Experiment orchestration: cross-domain grids, adaptation curves and the
//! importance-weighted pipeline, plus CSV/JSON reports.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{generate_synthetic, load_any, Corpus, SynthDomainSpec};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, PositionInit, QaModel, Vocab};
use crate::trainer::{derive_seed, finetune, sample_subsets, train, Optimizer, SubsetPlan, TrainConfig};
use crate::weighting::{weigh_corpus, weights_for_corpora, DEFAULT_CAP};

/// Published cross-domain F1 grid, shipped only to exercise report
/// rendering. Nothing in this crate reproduces these numbers.
pub const REFERENCE_GRID_JSON: &str = include_str!("../fixtures/reference_grid.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Grid,
    Curve,
    WeightedCurve,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Grid => "grid",
            ExperimentKind::Curve => "curve",
            ExperimentKind::WeightedCurve => "weighted_curve",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(ExperimentKind::Grid),
            "curve" => Ok(ExperimentKind::Curve),
            "weighted" | "weighted_curve" => Ok(ExperimentKind::WeightedCurve),
            other => Err(Error::Experiment(format!("unknown experiment kind `{other}`"))),
        }
    }
}

/// One evaluated model. `train_spec` names the series, e.g. `finetune` or
/// `weighted_base`; grid rows use the training domain names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub train_spec: String,
    pub test_corpus: String,
    pub fraction: Option<f64>,
    pub draw: Option<usize>,
    pub seed: u64,
    pub f1: f64,
    pub em: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub train_spec: String,
    pub test_corpus: String,
    pub fraction: Option<f64>,
    pub n: usize,
    pub mean_f1: f64,
    pub min_f1: f64,
    pub max_f1: f64,
    pub mean_em: Option<f64>,
}

/// A cell that could not be computed; the run went on without it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub train_spec: String,
    pub fraction: Option<f64>,
    pub draw: Option<usize>,
    pub message: String,
}

/// Run metadata. Wall-clock timestamps are left out so reruns stay
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<Failure>,
    pub provenance: Provenance,
}

fn same_group(a: &Cell, b: &Aggregate) -> bool {
    a.train_spec == b.train_spec && a.test_corpus == b.test_corpus && a.fraction == b.fraction
}

/// Mean, min and max per `(train_spec, test_corpus, fraction)`, summed in
/// draw order so the result does not depend on cell order.
pub fn aggregate(cells: &[Cell]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for c in cells {
        if out.iter().any(|a| same_group(c, a)) {
            continue;
        }
        let mut members: Vec<&Cell> = cells
            .iter()
            .filter(|m| m.train_spec == c.train_spec && m.test_corpus == c.test_corpus && m.fraction == c.fraction)
            .collect();
        members.sort_by_key(|m| m.draw);
        let n = members.len();
        let mean_f1 = members.iter().map(|m| m.f1).sum::<f64>() / n as f64;
        let mean_em = members
            .iter()
            .map(|m| m.em)
            .sum::<Option<f64>>()
            .map(|s| s / n as f64);
        out.push(Aggregate {
            train_spec: c.train_spec.clone(),
            test_corpus: c.test_corpus.clone(),
            fraction: c.fraction,
            n,
            mean_f1,
            min_f1: members.iter().map(|m| m.f1).fold(f64::INFINITY, f64::min),
            max_f1: members.iter().map(|m| m.f1).fold(f64::NEG_INFINITY, f64::max),
            mean_em,
        });
    }
    out
}

impl ExperimentResult {
    pub fn new(kind: ExperimentKind, cells: Vec<Cell>, failures: Vec<Failure>, provenance: Provenance) -> Self {
        let aggregates = aggregate(&cells);
        ExperimentResult {
            kind,
            cells,
            aggregates,
            failures,
            provenance,
        }
    }

    /// Mean F1 of a series at a fraction (`None` for grid cells).
    pub fn mean_f1(&self, train_spec: &str, fraction: Option<f64>) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.train_spec == train_spec && a.fraction == fraction)
            .map(|a| a.mean_f1)
    }

    /// `(fraction, mean F1)` of a series, in cell order.
    pub fn series(&self, train_spec: &str) -> Vec<(f64, f64)> {
        self.aggregates
            .iter()
            .filter(|a| a.train_spec == train_spec)
            .filter_map(|a| a.fraction.map(|f| (f, a.mean_f1)))
            .collect()
    }

    pub fn grid_f1(&self, train_spec: &str, test_corpus: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.train_spec == train_spec && c.test_corpus == test_corpus)
            .map(|c| c.f1)
    }
}

/// Parses the bundled published grid.
pub fn reference_grid() -> Result<ExperimentResult> {
    Ok(serde_json::from_str(REFERENCE_GRID_JSON)?)
}

fn provenance<T: Serialize>(config: &T) -> Result<Provenance> {
    let json = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&json);
    Ok(Provenance {
        config_hash: digest.iter().map(|b| format!("{b:02x}")).collect(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        note: None,
    })
}

fn evaluate_cell(
    model: &QaModel,
    test: &Corpus,
    train_spec: &str,
    fraction: Option<f64>,
    draw: Option<usize>,
    seed: u64,
) -> Result<Cell> {
    let r = model.evaluate(test)?;
    Ok(Cell {
        train_spec: train_spec.to_string(),
        test_corpus: test.name.clone(),
        fraction,
        draw,
        seed,
        f1: r.f1,
        em: Some(r.exact_match),
    })
}

fn cell_error(label: &str, fraction: Option<f64>, draw: Option<usize>, e: Error) -> Error {
    let mut cell = label.to_string();
    if let Some(f) = fraction {
        cell.push_str(&format!(" @ {f}%"));
    }
    if let Some(d) = draw {
        cell.push_str(&format!(" draw {d}"));
    }
    Error::Cell {
        cell,
        source: Box::new(e),
    }
}

/// A named domain with train and test splits.
#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    pub train: Corpus,
    pub test: Corpus,
}

/// Architecture and vocabulary size for every model of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub max_answer_len: usize,
    pub init_scale: f64,
    pub position_init: PositionInit,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for ModelSettings {
    /// The benchmark model: narrower than the library default so a full
    /// curve fits in minutes on a CPU.
    fn default() -> Self {
        ModelSettings {
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 64,
            max_seq_len: 128,
            max_answer_len: 30,
            init_scale: 0.05,
            position_init: PositionInit::Sinusoidal,
            vocab_size: 5000,
            seed: 1,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, vocab: Vocab) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_dim: self.ffn_dim,
            max_seq_len: self.max_seq_len,
            max_answer_len: self.max_answer_len,
            init_scale: self.init_scale,
            position_init: self.position_init,
            seed: self.seed,
            vocab,
        }
    }

    /// Config over the vocabulary of `corpora`.
    pub fn config_for<'a>(&self, corpora: impl IntoIterator<Item = &'a Corpus>) -> ModelConfig {
        self.model_config(Vocab::build(corpora, self.vocab_size))
    }
}

fn adam() -> Optimizer {
    Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    }
}

/// Training recipe for base and from-scratch models in the benchmark.
pub fn benchmark_base_config() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        learning_rate: 0.003,
        optimizer: adam(),
        gradient_clip: Some(5.0),
        ..TrainConfig::default()
    }
}

/// Two-epoch fine-tuning recipe for the benchmark.
pub fn benchmark_finetune_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 8,
        learning_rate: 0.0003,
        optimizer: adam(),
        gradient_clip: Some(5.0),
        ..TrainConfig::default()
    }
}

/// Trains one model per domain plus one on the union of all training sets
/// and scores each on every test split.
pub fn cross_domain_grid(
    domains: &[Domain],
    settings: &ModelSettings,
    base: &TrainConfig,
    master_seed: u64,
) -> Result<ExperimentResult> {
    if domains.len() < 2 {
        return Err(Error::Experiment("a grid needs at least two domains".into()));
    }
    let config = settings.config_for(domains.iter().map(|d| &d.train));
    let union_name = domains.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join("+");
    let union = Corpus::concat(union_name.clone(), domains.iter().map(|d| &d.train))?;
    let mut specs: Vec<(String, &Corpus)> = domains.iter().map(|d| (d.name.clone(), &d.train)).collect();
    specs.push((union_name, &union));

    let rows: Vec<Vec<Cell>> = specs
        .par_iter()
        .map(|(name, corpus)| {
            let seed = derive_seed(master_seed, name, None, None);
            let run = || -> Result<Vec<Cell>> {
                let mut mc = config.clone();
                mc.seed = seed;
                let tc = TrainConfig { seed, ..base.clone() };
                let (model, _) = train(QaModel::init(mc)?, corpus, &tc, None)?;
                domains
                    .iter()
                    .map(|d| evaluate_cell(&model, &d.test, name, None, None, seed))
                    .collect()
            };
            run().map_err(|e| cell_error(name, None, None, e))
        })
        .collect::<Result<_>>()?;

    let prov = provenance(&(domains.iter().map(|d| &d.name).collect::<Vec<_>>(), settings, base, master_seed))?;
    Ok(ExperimentResult::new(ExperimentKind::Grid, rows.into_iter().flatten().collect(), Vec::new(), prov))
}

fn check_disjoint(train: &Corpus, test: &Corpus) -> Result<()> {
    let ids: HashSet<&str> = train.iter().map(|p| p.id.as_str()).collect();
    if let Some(p) = test.iter().find(|p| ids.contains(p.id.as_str())) {
        return Err(Error::Experiment(format!("test pair `{}` also appears in the training split", p.id)));
    }
    Ok(())
}

/// Fine-tunes `base` on every draw of the plan and scores it on
/// `target_test`. The base itself is the fraction-0 cell. With `scratch`,
/// a fresh model is also trained on each draw alone using that recipe.
pub fn adaptation_curve(
    base: &QaModel,
    target_train: &Corpus,
    target_test: &Corpus,
    plan: &SubsetPlan,
    ft_config: &TrainConfig,
    scratch: Option<&TrainConfig>,
) -> Result<ExperimentResult> {
    check_disjoint(target_train, target_test)?;
    let subsets = sample_subsets(target_train, plan)?;
    let base_cell = evaluate_cell(base, target_test, "base", Some(0.0), None, base.config.seed)
        .map_err(|e| cell_error("base", Some(0.0), None, e))?;

    let mut jobs: Vec<(&'static str, f64, usize, &Corpus)> = Vec::new();
    for s in &subsets {
        for (d, sample) in s.draws.iter().enumerate() {
            jobs.push(("finetune", s.fraction, d, sample));
        }
    }
    if scratch.is_some() {
        for s in &subsets {
            for (d, sample) in s.draws.iter().enumerate() {
                jobs.push(("scratch", s.fraction, d, sample));
            }
        }
    }

    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(label, fraction, draw, sample)| {
            let seed = derive_seed(plan.master_seed, label, Some(fraction), Some(draw));
            let run = || -> Result<Cell> {
                let model = match (label, scratch) {
                    ("scratch", Some(recipe)) => {
                        let mut mc = base.config.clone();
                        mc.seed = seed;
                        let tc = TrainConfig { seed, ..recipe.clone() };
                        train(QaModel::init(mc)?, sample, &tc, None)?.0
                    }
                    _ => finetune(base, sample, &TrainConfig { seed, ..ft_config.clone() })?.0,
                };
                evaluate_cell(&model, target_test, label, Some(fraction), Some(draw), seed)
            };
            run().map_err(|e| cell_error(label, Some(fraction), Some(draw), e))
        })
        .collect::<Result<_>>()?;

    let mut all = vec![base_cell];
    all.extend(cells);
    let prov = provenance(&(&target_train.name, &target_test.name, base.config.seed, plan, ft_config, scratch))?;
    Ok(ExperimentResult::new(ExperimentKind::Curve, all, Vec::new(), prov))
}

/// Inputs of [`weighted_adaptation`].
#[derive(Debug, Clone)]
pub struct WeightedSetup<'a> {
    pub source_train: &'a Corpus,
    pub target_train: &'a Corpus,
    pub target_test: &'a Corpus,
    pub plan: &'a SubsetPlan,
    /// Architecture, vocabulary and initialization seed of both bases.
    pub model: &'a ModelConfig,
    pub base_config: &'a TrainConfig,
    pub ft_config: &'a TrainConfig,
    pub cap: f64,
}

/// For every draw: weights from the drawn target sample's answer lengths,
/// a weighted base trained on the source, its score, and its score after
/// fine-tuning on the same sample. The unweighted base (trained here unless
/// given) is fine-tuned on the same draws with the same seeds. Draws whose
/// length histograms are degenerate are recorded as failures.
pub fn weighted_adaptation(setup: &WeightedSetup<'_>, unweighted_base: Option<&QaModel>) -> Result<ExperimentResult> {
    check_disjoint(setup.target_train, setup.target_test)?;
    let subsets = sample_subsets(setup.target_train, setup.plan)?;
    let init = QaModel::init(setup.model.clone())?;
    let trained;
    let base = match unweighted_base {
        Some(b) => b,
        None => {
            trained = train(init.clone(), setup.source_train, setup.base_config, None)
                .map_err(|e| cell_error("unweighted_base", None, None, e))?
                .0;
            &trained
        }
    };
    let base_seed = setup.base_config.seed;
    let base_cell = evaluate_cell(base, setup.target_test, "unweighted_base", Some(0.0), None, base_seed)?;

    let jobs: Vec<(f64, usize, &Corpus)> = subsets
        .iter()
        .flat_map(|s| s.draws.iter().enumerate().map(move |(d, c)| (s.fraction, d, c)))
        .collect();

    let outcomes: Vec<std::result::Result<Vec<Cell>, Failure>> = jobs
        .par_iter()
        .map(|&(fraction, draw, sample)| {
            let report = match weights_for_corpora(setup.source_train, sample, setup.cap) {
                Ok(r) => r,
                Err(e) => {
                    return Ok(Err(Failure {
                        train_spec: "weighted_base".into(),
                        fraction: Some(fraction),
                        draw: Some(draw),
                        message: e.to_string(),
                    }))
                }
            };
            let weights = weigh_corpus(setup.source_train, &report.table);
            let ft_seed = derive_seed(setup.plan.master_seed, "finetune", Some(fraction), Some(draw));
            let ft = TrainConfig {
                seed: ft_seed,
                ..setup.ft_config.clone()
            };
            let run = || -> Result<Vec<Cell>> {
                let (weighted, _) = train(init.clone(), setup.source_train, setup.base_config, Some(&weights))?;
                let (weighted_ft, _) = finetune(&weighted, sample, &ft)?;
                let (plain_ft, _) = finetune(base, sample, &ft)?;
                let test = setup.target_test;
                Ok(vec![
                    evaluate_cell(&weighted, test, "weighted_base", Some(fraction), Some(draw), base_seed)?,
                    evaluate_cell(&weighted_ft, test, "weighted_finetune", Some(fraction), Some(draw), ft_seed)?,
                    evaluate_cell(&plain_ft, test, "unweighted_finetune", Some(fraction), Some(draw), ft_seed)?,
                ])
            };
            run().map(Ok).map_err(|e| cell_error("weighted", Some(fraction), Some(draw), e))
        })
        .collect::<Result<_>>()?;

    let mut per_series: [Vec<Cell>; 3] = Default::default();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(cells) => {
                for (slot, c) in per_series.iter_mut().zip(cells) {
                    slot.push(c);
                }
            }
            Err(f) => {
                log::warn!("weighted cell skipped: {}", f.message);
                failures.push(f);
            }
        }
    }
    let mut cells = vec![base_cell];
    cells.extend(per_series.into_iter().flatten());
    let prov = provenance(&(
        &setup.source_train.name,
        &setup.target_train.name,
        &setup.target_test.name,
        setup.plan,
        setup.model,
        setup.base_config,
        setup.ft_config,
        setup.cap,
    ))?;
    Ok(ExperimentResult::new(ExperimentKind::WeightedCurve, cells, failures, prov))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Experiment(format!("unknown report format `{other}`"))),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 8] = ["kind", "train_spec", "test_corpus", "fraction", "draw", "seed", "f1", "em"];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per cell; empty `fraction`/`draw`/`em` fields mean "not applicable".
pub fn write_report_csv<W: Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for c in &result.cells {
        w.write_record([
            result.kind.as_str().to_string(),
            c.train_spec.clone(),
            c.test_corpus.clone(),
            opt(c.fraction),
            opt(c.draw),
            c.seed.to_string(),
            c.f1.to_string(),
            opt(c.em),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_report_json<W: Write>(result: &ExperimentResult, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, result)?;
    out.write_all(b"\n").map_err(|e| Error::io("<json>", e))
}

pub fn emit_report(result: &ExperimentResult, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => write_report_csv(result, &mut buf)?,
        ReportFormat::Json => write_report_json(result, &mut buf)?,
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<ExperimentResult> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::parse(path, &e))
}

fn required<T>(v: Option<T>, column: &str, row: usize) -> Result<T> {
    v.ok_or(Error::MissingField {
        line: row + 2,
        field: column.to_string(),
    })
}

fn parse_field<T: std::str::FromStr>(value: &str, column: &str, row: usize) -> Result<Option<T>> {
    if value.is_empty() {
        return Ok(None);
    }
    value
        .parse()
        .map(Some)
        .map_err(|_| Error::MissingField {
            line: row + 2,
            field: column.to_string(),
        })
}

/// Reads the cells back from a CSV report, with the experiment kind.
pub fn read_report_csv(path: impl AsRef<Path>) -> Result<(Option<ExperimentKind>, Vec<Cell>)> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(raw.as_slice());
    if rdr.headers()?.iter().ne(REPORT_COLUMNS) {
        return Err(Error::MissingField {
            line: 1,
            field: REPORT_COLUMNS.join(","),
        });
    }
    let mut kind = None;
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        kind = Some(rec[0].parse::<ExperimentKind>()?);
        cells.push(Cell {
            train_spec: rec[1].to_string(),
            test_corpus: rec[2].to_string(),
            fraction: parse_field(&rec[3], "fraction", i)?,
            draw: parse_field(&rec[4], "draw", i)?,
            seed: required(parse_field(&rec[5], "seed", i)?, "seed", i)?,
            f1: required(parse_field(&rec[6], "f1", i)?, "f1", i)?,
            em: parse_field(&rec[7], "em", i)?,
        });
    }
    Ok((kind, cells))
}

/// Where a corpus comes from in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path { path: PathBuf },
    Synth { synth: SynthDomainSpec },
}

impl DataSource {
    /// Relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path) -> Result<Corpus> {
        match self {
            DataSource::Path { path } => load_any(base_dir.join(path)),
            DataSource::Synth { synth } => generate_synthetic(synth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSource {
    pub name: String,
    pub train: DataSource,
    pub test: DataSource,
}

impl DomainSource {
    fn load(&self, base_dir: &Path) -> Result<Domain> {
        Ok(Domain {
            name: self.name.clone(),
            train: self.train.load(base_dir)?,
            test: self.test.load(base_dir)?,
        })
    }
}

/// Everything an experiment run needs. Missing fields take the benchmark
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domains: Vec<DomainSource>,
    /// Source domain for curves; the first domain when absent.
    pub source: Option<String>,
    /// Target domain for curves; the second domain when absent.
    pub target: Option<String>,
    pub model: ModelSettings,
    pub base_train: TrainConfig,
    pub finetune: TrainConfig,
    /// Recipe for the from-scratch curve; the base recipe when absent.
    pub scratch: Option<TrainConfig>,
    pub plan: SubsetPlan,
    pub cap: f64,
    pub master_seed: u64,
}

/// Synthetic general-style source (8000 train, 500 test) and manual-style
/// target (2000 train, 500 test).
pub fn benchmark_domains() -> Vec<DomainSource> {
    let spec = |s: SynthDomainSpec, name: &str, n: usize, seed: u64| SynthDomainSpec {
        name: name.into(),
        n_pairs: n,
        seed,
        ..s
    };
    vec![
        DomainSource {
            name: "general".into(),
            train: DataSource::Synth {
                synth: spec(SynthDomainSpec::general_like(0, 0), "general", 8000, 1),
            },
            test: DataSource::Synth {
                synth: spec(SynthDomainSpec::general_like(0, 0), "general-test", 500, 2),
            },
        },
        DomainSource {
            name: "manual".into(),
            train: DataSource::Synth {
                synth: spec(SynthDomainSpec::manual_like(0, 0), "manual", 2000, 3),
            },
            test: DataSource::Synth {
                synth: spec(SynthDomainSpec::manual_like(0, 0), "manual-test", 500, 4),
            },
        },
    ]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domains: benchmark_domains(),
            source: None,
            target: None,
            model: ModelSettings::default(),
            base_train: benchmark_base_config(),
            finetune: benchmark_finetune_config(),
            scratch: None,
            plan: SubsetPlan {
                fractions: vec![1.0, 5.0, 10.0, 25.0, 50.0, 75.0],
                n_draws: 5,
                master_seed: 7,
            },
            cap: DEFAULT_CAP,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::parse(path, &e))
    }

    fn pick(&self, name: &Option<String>, fallback: usize) -> Result<&DomainSource> {
        match name {
            Some(n) => self
                .domains
                .iter()
                .find(|d| &d.name == n)
                .ok_or_else(|| Error::Experiment(format!("no domain named `{n}`"))),
            None => self
                .domains
                .get(fallback)
                .ok_or_else(|| Error::Experiment("source and target need two domains".into())),
        }
    }
}

/// Loaded source and target data of a curve experiment.
#[derive(Debug, Clone)]
pub struct CurveData {
    pub source: Domain,
    pub target: Domain,
    pub model: ModelConfig,
}

impl CurveData {
    pub fn load(config: &ExperimentConfig, base_dir: &Path) -> Result<Self> {
        let source = config.pick(&config.source, 0)?.load(base_dir)?;
        let target = config.pick(&config.target, 1)?.load(base_dir)?;
        let model = config.model.config_for([&source.train, &target.train]);
        Ok(CurveData { source, target, model })
    }

    /// Unweighted base model trained on the source split.
    pub fn train_base(&self, config: &ExperimentConfig) -> Result<QaModel> {
        let (m, _) = train(QaModel::init(self.model.clone())?, &self.source.train, &config.base_train, None)?;
        Ok(m)
    }
}

/// Runs the experiment described by `config`. Relative corpus paths resolve
/// against `base_dir`.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentResult> {
    let mut result = match kind {
        ExperimentKind::Grid => {
            let domains: Vec<Domain> = config.domains.iter().map(|d| d.load(base_dir)).collect::<Result<_>>()?;
            cross_domain_grid(&domains, &config.model, &config.base_train, config.master_seed)?
        }
        ExperimentKind::Curve => {
            let data = CurveData::load(config, base_dir)?;
            let base = data.train_base(config).map_err(|e| cell_error("base", None, None, e))?;
            let scratch = config.scratch.as_ref().unwrap_or(&config.base_train);
            adaptation_curve(&base, &data.target.train, &data.target.test, &config.plan, &config.finetune, Some(scratch))?
        }
        ExperimentKind::WeightedCurve => {
            let data = CurveData::load(config, base_dir)?;
            let setup = WeightedSetup {
                source_train: &data.source.train,
                target_train: &data.target.train,
                target_test: &data.target.test,
                plan: &config.plan,
                model: &data.model,
                base_config: &config.base_train,
                ft_config: &config.finetune,
                cap: config.cap,
            };
            weighted_adaptation(&setup, None)?
        }
    };
    result.provenance.config_hash = provenance(&(kind, config))?.config_hash;
    Ok(result)
}
