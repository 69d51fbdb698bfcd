//! Command-line front end: configuration, dataset files, and the
//! `gen` / `train` / `eval` / `sweep-size` / `masks` / `inspect` /
//! `validate` subcommands.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasim::{
    self, build_tokenizer, corrupt_all, default_grammar, generate_corpus, one_best_wer, read_jsonl,
    write_jsonl, Confuser, Example, LabelInventory, Metrics, NoiseModel, Task,
};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::masks::{binary_mask, causal_mask, prob_mask, AttentionMask};
use crate::pipeline::{prepare, Encoder, InputMode};
use crate::subword::Tokenizer;
use crate::transformer::checkpoint;
use crate::transformer::train::{self, EpochMetrics};
use crate::transformer::{AdamConfig, ModelConfig, ModelParams, TrainConfig};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const LABELS_FILE: &str = "labels.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const METRICS_FILE: &str = "metrics.json";

/// Learning rate for training from random initialization.
pub const DEFAULT_SCRATCH_LR: f64 = 1e-3;

/// Every knob of a run. Read from a flat `key = value` file and then
/// overridden by `--set key=value` arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub input_mode: InputMode,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_position: usize,
    pub dropout_rate: f64,
    pub preset: String,
    pub p_sub: Option<f64>,
    pub k: Option<usize>,
    pub temperature: Option<f64>,
    pub true_bonus: Option<f64>,
    pub p_del: Option<f64>,
    pub p_ins: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    pub lm_pretrain_epochs: usize,
    pub sweep_schedule: SweepSchedule,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Intent,
            input_mode: InputMode::LatticeBinary,
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_position: 256,
            dropout_rate: 0.0,
            preset: "cond3".into(),
            p_sub: None,
            k: None,
            temperature: None,
            true_bonus: None,
            p_del: None,
            p_ins: None,
            train_size: 2000,
            test_size: 500,
            epochs: 5,
            batch_size: 8,
            lr: DEFAULT_SCRATCH_LR,
            warmup_steps: 100,
            lm_pretrain_epochs: 0,
            sweep_schedule: SweepSchedule::EqualUpdates,
            seed: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "task" => self.task = v.parse()?,
            "input_mode" => self.input_mode = v.parse()?,
            "n_layers" => self.n_layers = parse_value(key, v)?,
            "n_heads" => self.n_heads = parse_value(key, v)?,
            "d_model" => self.d_model = parse_value(key, v)?,
            "d_ff" => self.d_ff = parse_value(key, v)?,
            "max_position" => self.max_position = parse_value(key, v)?,
            "dropout_rate" => self.dropout_rate = parse_value(key, v)?,
            "preset" => {
                datasim::preset(v)?;
                self.preset = v.to_string();
            }
            "p_sub" => self.p_sub = Some(parse_value(key, v)?),
            "k" => self.k = Some(parse_value(key, v)?),
            "temperature" => self.temperature = Some(parse_value(key, v)?),
            "true_bonus" => self.true_bonus = Some(parse_value(key, v)?),
            "p_del" => self.p_del = Some(parse_value(key, v)?),
            "p_ins" => self.p_ins = Some(parse_value(key, v)?),
            "train_size" => self.train_size = parse_value(key, v)?,
            "test_size" => self.test_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "warmup_steps" => self.warmup_steps = parse_value(key, v)?,
            "lm_pretrain_epochs" => self.lm_pretrain_epochs = parse_value(key, v)?,
            "sweep_schedule" => self.sweep_schedule = v.parse()?,
            "seed" => self.seed = Some(parse_value(key, v)?),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k, v)
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("an explicit seed is required (set seed=<n>)".into()))
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        let mut n = datasim::preset(&self.preset)?;
        n.p_sub = self.p_sub.unwrap_or(n.p_sub);
        n.k = self.k.unwrap_or(n.k);
        n.temperature = self.temperature.unwrap_or(n.temperature);
        n.true_bonus = self.true_bonus.unwrap_or(n.true_bonus);
        n.p_del = self.p_del.unwrap_or(n.p_del);
        n.p_ins = self.p_ins.unwrap_or(n.p_ins);
        n.validate()?;
        Ok(n)
    }

    pub fn model_config(&self, vocab_size: usize, n_labels: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab_size,
            max_position: self.max_position,
            n_labels,
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                warmup_steps: self.warmup_steps,
                ..AdamConfig::default()
            },
            seed: self.require_seed()?,
            lm_pretrain_epochs: self.lm_pretrain_epochs,
        })
    }
}

/// Config file (if given) then overrides on top of the defaults.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)?;
        cfg.apply_text(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

/// Independent sub-seeds of one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rand::Rng::random(&mut rng)
}

/// Train and test splits of one noise condition, with the label inventory
/// and subword vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub labels: LabelInventory,
    pub tokenizer: Tokenizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub preset: String,
    pub noise: NoiseModel,
    pub train_size: usize,
    pub test_size: usize,
    pub train_wer: f64,
    pub test_wer: f64,
}

pub fn generate_dataset(cfg: &RunConfig) -> Result<(Dataset, GenReport)> {
    let seed = cfg.require_seed()?;
    if cfg.train_size == 0 || cfg.test_size == 0 {
        return Err(Error::Config(
            "train_size and test_size must be at least 1".into(),
        ));
    }
    let grammar = default_grammar();
    let confuser = Confuser::new(grammar.vocabulary());
    let noise = cfg.noise()?;
    let clean_train = generate_corpus(&grammar, cfg.train_size, derive_seed(seed, 1));
    let clean_test = generate_corpus(&grammar, cfg.test_size, derive_seed(seed, 2));
    let train = corrupt_all(
        &clean_train,
        &NoiseModel {
            seed: derive_seed(seed, 3),
            ..noise
        },
        &confuser,
    )?;
    let test = corrupt_all(
        &clean_test,
        &NoiseModel {
            seed: derive_seed(seed, 4),
            ..noise
        },
        &confuser,
    )?;
    let report = GenReport {
        preset: cfg.preset.clone(),
        noise: NoiseModel { seed, ..noise },
        train_size: train.len(),
        test_size: test.len(),
        train_wer: one_best_wer(&train)?,
        test_wer: one_best_wer(&test)?,
    };
    let tokenizer = build_tokenizer(&train);
    let dataset = Dataset {
        train,
        test,
        labels: LabelInventory::from_grammar(&grammar),
        tokenizer,
    };
    Ok((dataset, report))
}

pub fn write_dataset(dir: &Path, d: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(dir.join(TRAIN_FILE), &d.train)?;
    write_jsonl(dir.join(TEST_FILE), &d.test)?;
    d.labels.save(dir.join(LABELS_FILE))?;
    std::fs::write(dir.join(VOCAB_FILE), d.tokenizer.to_vocab_file())?;
    Ok(())
}

fn require_file(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Config(format!("missing file {}", path.display())))
    }
}

/// Reads a directory written by [`write_dataset`]. The test split is
/// optional.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let train = read_jsonl(require_file(dir.join(TRAIN_FILE))?)?;
    let test_path = dir.join(TEST_FILE);
    let test = if test_path.is_file() {
        read_jsonl(test_path)?
    } else {
        Vec::new()
    };
    Ok(Dataset {
        train,
        test,
        labels: LabelInventory::load(require_file(dir.join(LABELS_FILE))?)?,
        tokenizer: Tokenizer::load(require_file(dir.join(VOCAB_FILE))?)?,
    })
}

/// What a checkpoint needs besides its tensors to be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: Task,
    pub input_mode: InputMode,
    pub labels: LabelInventory,
    pub vocab: Vec<String>,
}

impl CheckpointMeta {
    pub fn encoder(&self) -> Encoder {
        Encoder::new(Tokenizer::new(self.vocab.iter().cloned()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: Task,
    pub input_mode: InputMode,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub lm_losses: Vec<f64>,
    pub train: Metrics,
    pub test: Option<Metrics>,
}

/// Trains on `train` (and reports on `test` when non-empty) under `cfg`.
pub fn train_model(
    cfg: &RunConfig,
    train: &[Example],
    test: &[Example],
    labels: &LabelInventory,
    tokenizer: &Tokenizer,
) -> Result<(ModelParams, CheckpointMeta, TrainReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tcfg = cfg.train_config()?;
    let encoder = Encoder::new(tokenizer.clone());
    let train_inputs = prepare(train, &encoder, labels, cfg.task, cfg.input_mode)?;
    let model = cfg.model_config(encoder.vocab_size(), labels.labels(cfg.task).len());
    let mut params = train::init_params(&model, tcfg.seed)?;
    let mut lm_losses = Vec::new();
    if tcfg.lm_pretrain_epochs > 0 {
        let lm_inputs = prepare(train, &encoder, labels, cfg.task, InputMode::OneBest)?;
        let seqs: Vec<_> = lm_inputs.into_iter().map(|x| x.input).collect();
        lm_losses = train::pretrain_lm(&mut params, &seqs, tcfg.lm_pretrain_epochs, &tcfg)?;
    }
    let (params, history) = train::train_from(params, &train_inputs, &tcfg)?;
    let train_metrics = train::evaluate_params(&params, &train_inputs)?;
    let test_metrics = if test.is_empty() {
        None
    } else {
        let inputs = prepare(test, &encoder, labels, cfg.task, cfg.input_mode)?;
        Some(train::evaluate_params(&params, &inputs)?)
    };
    let meta = CheckpointMeta {
        task: cfg.task,
        input_mode: cfg.input_mode,
        labels: labels.clone(),
        vocab: tokenizer.units().map(str::to_string).collect(),
    };
    let report = TrainReport {
        task: cfg.task,
        input_mode: cfg.input_mode,
        seed: tcfg.seed,
        epochs: history,
        lm_losses,
        train: train_metrics,
        test: test_metrics,
    };
    Ok((params, meta, report))
}

/// WER band `[lo, hi)` of the 1-best path; `hi = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    pub hi: Option<f64>,
    pub count: usize,
    pub metrics: Option<Metrics>,
}

pub const WER_BANDS: [f64; 4] = [0.0, 0.1, 0.3, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub input_mode: InputMode,
    pub count: usize,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<Bucket>>,
}

pub fn evaluate_model(
    params: &ModelParams,
    meta: &CheckpointMeta,
    examples: &[Example],
    buckets: bool,
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if params.config.n_labels != meta.labels.labels(meta.task).len() {
        return Err(Error::Config(format!(
            "checkpoint has {} outputs but the label inventory has {} {} labels",
            params.config.n_labels,
            meta.labels.labels(meta.task).len(),
            meta.task
        )));
    }
    let encoder = meta.encoder();
    if encoder.vocab_size() != params.config.vocab_size {
        return Err(Error::Config(
            "checkpoint vocabulary does not match its embedding table".into(),
        ));
    }
    let inputs = prepare(examples, &encoder, &meta.labels, meta.task, meta.input_mode)?;
    let predicted = train::predict_all(params, &inputs)?;
    let gold: Vec<Vec<usize>> = inputs.iter().map(|x| x.gold.clone()).collect();
    let metrics = datasim::evaluate(&predicted, &gold)?;
    let buckets = if buckets {
        let wers = examples
            .iter()
            .map(Example::one_best_wer)
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(WER_BANDS.len());
        for (b, &lo) in WER_BANDS.iter().enumerate() {
            let hi = WER_BANDS.get(b + 1).copied();
            let idx: Vec<usize> = (0..examples.len())
                .filter(|&i| wers[i] >= lo && hi.is_none_or(|h| wers[i] < h))
                .collect();
            let p: Vec<Vec<usize>> = idx.iter().map(|&i| predicted[i].clone()).collect();
            let g: Vec<Vec<usize>> = idx.iter().map(|&i| gold[i].clone()).collect();
            out.push(Bucket {
                lo,
                hi,
                count: idx.len(),
                metrics: if idx.is_empty() {
                    None
                } else {
                    Some(datasim::evaluate(&p, &g)?)
                },
            });
        }
        Some(out)
    } else {
        None
    };
    Ok(EvalReport {
        task: meta.task,
        input_mode: meta.input_mode,
        count: examples.len(),
        metrics,
        buckets,
    })
}

/// Nested subsamples: the first `size` entries of one seeded permutation of
/// `0..total`, each returned in ascending order.
pub fn nested_subsets(total: usize, sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    if let Some(&s) = sizes.iter().find(|&&s| s > total || s == 0) {
        return Err(Error::Config(format!(
            "sample size {s} outside 1..={total}"
        )));
    }
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(sizes
        .iter()
        .map(|&s| {
            let mut sub = perm[..s].to_vec();
            sub.sort_unstable();
            sub
        })
        .collect())
}

/// How many epochs each size of a sweep trains for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSchedule {
    /// `epochs` at every size.
    EqualEpochs,
    /// As many example presentations as `epochs` over the largest size.
    EqualUpdates,
}

impl std::str::FromStr for SweepSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_epochs" => Ok(SweepSchedule::EqualEpochs),
            "equal_updates" => Ok(SweepSchedule::EqualUpdates),
            _ => Err(Error::Config(format!(
                "unknown sweep_schedule {s:?} (expected equal_epochs or equal_updates)"
            ))),
        }
    }
}

impl SweepSchedule {
    pub fn epochs(self, epochs: usize, size: usize, largest: usize) -> usize {
        match self {
            SweepSchedule::EqualEpochs => epochs,
            SweepSchedule::EqualUpdates => (epochs * largest).div_ceil(size.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub input_mode: InputMode,
    pub test: Metrics,
}

/// Trains and tests at each training-set size.
pub fn sweep_size(cfg: &RunConfig, data: &Dataset, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    if data.test.is_empty() {
        return Err(Error::Config("sweep needs a test split".into()));
    }
    let seed = cfg.require_seed()?;
    let subsets = nested_subsets(data.train.len(), sizes, derive_seed(seed, 5))?;
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(sizes.len());
    for (&size, subset) in sizes.iter().zip(subsets) {
        let train: Vec<Example> = subset.iter().map(|&i| data.train[i].clone()).collect();
        let run = RunConfig {
            epochs: cfg.sweep_schedule.epochs(cfg.epochs, size, largest),
            ..cfg.clone()
        };
        let (_, _, report) = train_model(&run, &train, &data.test, &data.labels, &data.tokenizer)?;
        out.push(SweepPoint {
            size,
            epochs: run.epochs,
            seed,
            input_mode: cfg.input_mode,
            test: report.test.expect("test split is non-empty"),
        });
    }
    Ok(out)
}

fn read_lattice(path: &Path) -> Result<Lattice> {
    let path = require_file(path.to_path_buf())?;
    let path = path.as_path();
    let text = std::fs::read_to_string(path)?;
    Lattice::from_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Positions and all three masks of a lattice, as JSON.
pub fn masks_json(lattice: &Lattice) -> Result<serde_json::Value> {
    lattice.check()?;
    let order = lattice.topological_order()?;
    let ldist = lattice.longest_path_distance()?;
    let parse = |m: AttentionMask| -> serde_json::Value {
        serde_json::from_str(&m.to_json()).expect("mask json")
    };
    Ok(serde_json::json!({
        "order": order,
        "positions": order.iter().map(|id| ldist[id]).collect::<Vec<_>>(),
        "causal": parse(causal_mask(order.len())),
        "binary": parse(binary_mask(lattice, &order)?),
        "prob": parse(prob_mask(lattice, &order)?),
    }))
}

fn fmt_entry(v: Option<f64>) -> String {
    match v {
        None => "     -".to_string(),
        Some(x) if x == 0.0 => "     0".to_string(),
        Some(x) => format!("{x:6.3}"),
    }
}

fn fmt_mask(out: &mut String, title: &str, m: &AttentionMask) {
    let _ = writeln!(out, "{title} mask (rows attend to columns, - = masked):");
    let _ = write!(out, "{:>6}", "");
    for id in m.order() {
        let _ = write!(out, "{id:>6}");
    }
    out.push('\n');
    for (i, id) in m.order().iter().enumerate() {
        let _ = write!(out, "{id:>6}");
        for &v in m.row(i) {
            out.push_str(&fmt_entry(v));
        }
        out.push('\n');
    }
}

/// Human-readable dump: nodes with position and forward mass, the 1-best
/// path, and the binary and probabilistic masks.
pub fn inspect_text(lattice: &Lattice) -> Result<String> {
    lattice.check()?;
    let order = lattice.topological_order()?;
    let ldist = lattice.longest_path_distance()?;
    let alpha = lattice.forward_mass()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} nodes, {} edges, start {}, end {}",
        lattice.len(),
        lattice.edges().len(),
        lattice.start(),
        lattice.end()
    );
    let _ = writeln!(
        out,
        "{:>6} {:<16} {:>6} {:>10}",
        "id", "label", "ldist", "alpha"
    );
    for id in &order {
        let _ = writeln!(
            out,
            "{:>6} {:<16} {:>6} {:>10.6}",
            id,
            lattice.label(*id)?,
            ldist[id],
            alpha[id]
        );
    }
    let best = lattice.one_best_nodes()?;
    let _ = writeln!(
        out,
        "1-best: {} (p = {:.6})",
        datasim::strip_markers(lattice.one_best_path()?).join(" "),
        lattice.path_probability(&best)
    );
    fmt_mask(&mut out, "binary", &binary_mask(lattice, &order)?);
    fmt_mask(&mut out, "probabilistic", &prob_mask(lattice, &order)?);
    Ok(out)
}

/// Problems found in a lattice file or JSONL dataset, one line each.
pub fn validate_file(path: &Path) -> Result<Vec<String>> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let examples = read_jsonl(require_file(path.to_path_buf())?)?;
        let mut problems = Vec::new();
        for (i, e) in examples.iter().enumerate() {
            problems.extend(
                e.lattice
                    .validate()
                    .into_iter()
                    .map(|p| format!("example {}: {p}", i + 1)),
            );
        }
        Ok(problems)
    } else {
        Ok(read_lattice(path)?.validate())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lattice-slu",
    version,
    about = "Lattice-aware transformer intent and slot classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// key=value override, applied after the config file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a train/test dataset for a noise preset.
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train a classifier; writes model.ckpt and metrics.json.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory written by `gen`.
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a JSONL dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        data: PathBuf,
        /// Add a breakdown by utterance-level 1-best WER.
        #[arg(long)]
        buckets: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Train and test at several training-set sizes.
    SweepSize {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [300, 1000, 3000])]
        sizes: Vec<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print positions and attention masks of a lattice as JSON.
    Masks { lattice: PathBuf },
    /// Print a lattice with positions, forward mass, 1-best path and masks.
    Inspect { lattice: PathBuf },
    /// Check a lattice file or a .jsonl dataset.
    Validate { path: PathBuf },
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serialization is infallible") + "\n"
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        std::fs::write(p, text)?;
    }
    print!("{text}");
    Ok(())
}

pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen { config, out } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            let (data, report) = generate_dataset(&cfg)?;
            write_dataset(&out, &data)?;
            emit(&to_json(&report), None)
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            let d = read_dataset(&data)?;
            let (params, meta, report) =
                train_model(&cfg, &d.train, &d.test, &d.labels, &d.tokenizer)?;
            std::fs::create_dir_all(&out)?;
            checkpoint::save(
                out.join(CHECKPOINT_FILE),
                &params,
                &serde_json::to_value(&meta)?,
            )?;
            emit(&to_json(&report), Some(&out.join(METRICS_FILE)))
        }
        Command::Eval {
            checkpoint: ckpt,
            data,
            buckets,
            out,
        } => {
            let (params, meta) = checkpoint::load(require_file(ckpt)?)?;
            let meta: CheckpointMeta = serde_json::from_value(meta)?;
            let examples = read_jsonl(require_file(data)?)?;
            let report = evaluate_model(&params, &meta, &examples, buckets)?;
            emit(&to_json(&report), out.as_deref())
        }
        Command::SweepSize {
            config,
            data,
            sizes,
            out,
        } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            let d = read_dataset(&data)?;
            let points = sweep_size(&cfg, &d, &sizes)?;
            emit(&to_json(&points), out.as_deref())
        }
        Command::Masks { lattice } => emit(&to_json(&masks_json(&read_lattice(&lattice)?)?), None),
        Command::Inspect { lattice } => emit(&inspect_text(&read_lattice(&lattice)?)?, None),
        Command::Validate { path } => {
            let problems = validate_file(&path)?;
            if problems.is_empty() {
                println!("ok");
                Ok(())
            } else {
                Err(Error::InvalidLattice(problems))
            }
        }
    }
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_and_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\ntask = slot\n\ninput_mode=one_best  # trailing\nseed = 4\n")
            .unwrap();
        cfg.apply_override("epochs=0").unwrap();
        assert_eq!(cfg.task, Task::Slot);
        assert_eq!(cfg.input_mode, InputMode::OneBest);
        assert_eq!((cfg.seed, cfg.epochs), (Some(4), 0));
        let err = cfg
            .apply_text("lr = 1\nbogus = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(cfg.apply_override("lr").is_err());
        assert!(cfg.apply_override("input_mode=lattice").is_err());
    }

    #[test]
    fn seed_must_be_explicit() {
        assert!(RunConfig::default().train_config().is_err());
        assert!(generate_dataset(&RunConfig::default()).is_err());
    }

    #[test]
    fn noise_overrides_apply_on_preset() {
        let mut cfg = RunConfig::default();
        cfg.apply_override("preset=cond1").unwrap();
        cfg.apply_override("k=5").unwrap();
        let n = cfg.noise().unwrap();
        assert_eq!(n.k, 5);
        assert_eq!(n.p_sub, datasim::preset("cond1").unwrap().p_sub);
        cfg.apply_override("p_sub=1.5").unwrap();
        assert!(cfg.noise().is_err());
    }

    #[test]
    fn subsets_are_nested() {
        let s = nested_subsets(50, &[5, 20, 50], 9).unwrap();
        assert!(s[0].iter().all(|i| s[1].contains(i)));
        assert!(s[1].iter().all(|i| s[2].contains(i)));
        assert_eq!(s[2], (0..50).collect::<Vec<_>>());
        assert!(nested_subsets(50, &[51], 9).is_err());
    }

    #[test]
    fn sweep_schedules() {
        assert_eq!(SweepSchedule::EqualEpochs.epochs(5, 300, 3000), 5);
        assert_eq!(SweepSchedule::EqualUpdates.epochs(5, 300, 3000), 50);
        assert_eq!(SweepSchedule::EqualUpdates.epochs(5, 1000, 3000), 15);
        assert_eq!(SweepSchedule::EqualUpdates.epochs(5, 3000, 3000), 5);
        assert_eq!(SweepSchedule::EqualUpdates.epochs(4, 3, 10), 14);
        assert!("equal".parse::<SweepSchedule>().is_err());
    }
}
