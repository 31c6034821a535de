//! Command-line front end. Every command writes its artifacts under
//! `--out` and is deterministic given `--seed`.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::encoder::JointMode;
use crate::error::{Error, Result};
use crate::fusion::{FusionModel, HeadSpec, ModelConfig, Variant};
use crate::harness::{
    corrupt_dataset, evaluate, history_csv, load_checkpoint, make_synthetic, sensitivity_experiment, stream_rng,
    to_bytes, from_bytes, train, SyntheticSpec, TrainConfig, CORRUPT_STREAM, DATA_STREAM,
};
use crate::heads::{RelationSet, TagSet};
use crate::tensor::Fault;
use crate::treebank::{corrupt_tree, read_records, uas, write_records, DepTree, Record, Sentence, Vocab};
use crate::verify::gradient_suite;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";
pub const CONFIG_ECHO_FILE: &str = "config.echo";
pub const PERTURBED_FILE: &str = "perturbed.jsonl";

#[derive(Debug, Parser)]
#[command(name = "sfl", version, about = "Syntax-fused transformer encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint.bin, metrics.csv and config.echo.
    Train(TrainArgs),
    /// Evaluate a checkpoint; prints "P=... R=... F1=...".
    Eval(EvalArgs),
    /// Write a copy of a dataset with corrupted trees.
    Perturb(PerturbArgs),
    /// Run the finite-difference gradient suite over every layer.
    Gradcheck(GradcheckArgs),
    /// Parse-quality sensitivity of a gold-trained and a noisy-trained model.
    Sensitivity(SensitivityArgs),
    /// Generate the synthetic head-copy dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Tag,
    Re,
}

/// Which trees a command feeds the model.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeSource {
    Gold,
    Corrupted(f64),
    File(PathBuf),
}

impl FromStr for TreeSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "gold" {
            return Ok(Self::Gold);
        }
        if let Some(rate) = s.strip_prefix("corrupted@") {
            return parse_rate(rate).map(Self::Corrupted);
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(Self::File(PathBuf::from(path)));
        }
        Err(format!("expected gold, corrupted@RATE or file:PATH, got {s:?}"))
    }
}

impl fmt::Display for TreeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gold => write!(f, "gold"),
            Self::Corrupted(r) => write!(f, "corrupted@{r}"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for TreeSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

fn parse_rate(s: &str) -> std::result::Result<f64, String> {
    let r: f64 = s.trim().parse().map_err(|_| format!("rate {s:?} is not a number"))?;
    if !(0.0..=1.0).contains(&r) {
        return Err(format!("rate {r} outside [0, 1]"));
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    GeluBackwardSign,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub variant: Variant,
    #[arg(long, default_value = "concat")]
    pub joint_mode: JointMode,
    /// Training set, one JSON record per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Development set for checkpoint selection; the training set is used without it.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Wordpiece vocabulary file; built from the training tokens without it.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "gold")]
    pub trees: TreeSource,
    #[arg(long)]
    pub bio_constraints: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub gnn_layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "gold")]
    pub trees: TreeSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for metrics.csv; nothing is written without it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_rate)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Break a backward rule on purpose, to see the suite catch it.
    #[arg(long, value_enum)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub gold_checkpoint: PathBuf,
    #[arg(long)]
    pub noisy_checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_rate, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    pub rates: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Index of the data sub-stream, so splits drawn from one seed differ.
    #[arg(long, default_value_t = 0)]
    pub split: u64,
    #[arg(long, default_value_t = 40)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    /// Output file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `out`, errors to `err`.
pub fn run_from<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Perturb(a) => cmd_perturb(&a, out),
        Command::Gradcheck(a) => cmd_gradcheck(&a, out),
        Command::Sensitivity(a) => cmd_sensitivity(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn read_dataset(flag: &str, path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("--{flag} {}: {e}", path.display())))?;
    read_records(&text).map_err(|e| Error::Config(format!("--{flag} {}: {e}", path.display())))
}

fn to_sentences(flag: &str, records: &[Record], vocab: &Vocab) -> Result<Vec<Sentence>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Sentence::from_record(r, vocab).map_err(|e| Error::Config(format!("--{flag} record {}: {e}", i + 1)))
        })
        .collect()
}

/// Replaces the trees of `data` according to `source`.
pub fn apply_trees(data: Vec<Sentence>, source: &TreeSource, seed: u64) -> Result<Vec<Sentence>> {
    match source {
        TreeSource::Gold => Ok(data),
        TreeSource::Corrupted(rate) => corrupt_dataset(&data, *rate, seed),
        TreeSource::File(path) => {
            let records = read_dataset("trees", path)?;
            if records.len() != data.len() {
                return Err(Error::Config(format!(
                    "--trees {}: {} records for {} sentences",
                    path.display(),
                    records.len(),
                    data.len()
                )));
            }
            data.iter()
                .zip(&records)
                .enumerate()
                .map(|(i, (s, r))| {
                    let fail = |e: crate::treebank::TreeError| Error::Config(format!("--trees record {}: {e}", i + 1));
                    let tree = DepTree::new(r.heads.clone(), r.deprels.clone()).map_err(fail)?;
                    s.with_tree(tree).map_err(fail)
                })
                .collect()
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("--out {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct TrainEcho<'a> {
    command: &'static str,
    args: &'a TrainArgs,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    train_sentences: usize,
    dev_sentences: usize,
}

fn head_spec(task: Task, records: &[&Record], bio_constraints: bool) -> Result<HeadSpec> {
    match task {
        Task::Tag => {
            let tags: Vec<&[String]> = records.iter().filter_map(|r| r.tags.as_deref()).collect();
            if tags.len() != records.len() {
                return Err(Error::Config("--task tag needs tags on every --data/--dev record".into()));
            }
            Ok(HeadSpec::Tagging {
                tags: TagSet::from_sequences(tags).tags().to_vec(),
                bio_constraints,
            })
        }
        Task::Re => {
            let labels: Vec<&str> = records.iter().filter_map(|r| r.relation.as_deref()).collect();
            if labels.len() != records.len() {
                return Err(Error::Config("--task re needs a relation on every --data/--dev record".into()));
            }
            Ok(HeadSpec::Relation {
                labels: RelationSet::new(labels).labels().to_vec(),
            })
        }
    }
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_dataset("data", &a.data)?;
    let dev_records = match &a.dev {
        Some(p) => read_dataset("dev", p)?,
        None => Vec::new(),
    };
    let vocab = match &a.vocab {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("--vocab {}: {e}", p.display())))?;
            Vocab::parse(&text).map_err(|e| Error::Config(format!("--vocab {}: {e}", p.display())))?
        }
        None => Vocab::from_corpus(records.iter().flat_map(|r| r.tokens.iter().map(String::as_str))),
    };
    let all: Vec<&Record> = records.iter().chain(&dev_records).collect();
    let head = head_spec(a.task, &all, a.bio_constraints)?;

    let mut config = ModelConfig::desk(a.variant, vocab.len(), head);
    config.joint_mode = a.joint_mode;
    if let Some(l) = a.layers {
        config.encoder.layers = l;
    }
    if let Some(l) = a.gnn_layers {
        config.gnn.layers = l;
    }
    if let Some(h) = a.heads {
        config.encoder.heads = h;
        config.gnn.heads = h;
    }
    if let Some(d) = a.d_model {
        config.encoder.d_model = d;
        config.gnn.d_model = d;
    }
    if let Some(d) = a.d_ff {
        config.encoder.d_ff = d;
        config.gnn.d_ff = d;
    }
    if let Some(m) = a.max_len {
        config.encoder.max_len = m;
    }
    if let Some(p) = a.dropout {
        config.encoder.dropout_p = p;
        config.gnn.dropout_p = p;
    }
    let train_config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        base_lr: a.lr,
        seed: a.seed,
    };
    if !(a.lr > 0.0) {
        return Err(Error::Config(format!("--lr {} must be positive", a.lr)));
    }
    if a.batch_size == 0 {
        return Err(Error::Config("--batch-size must be at least 1".into()));
    }

    let data = apply_trees(to_sentences("data", &records, &vocab)?, &a.trees, a.seed)?;
    let dev = apply_trees(to_sentences("dev", &dev_records, &vocab)?, &a.trees, a.seed)?;
    create_dir(&a.out)?;
    let model = FusionModel::new(config.clone(), vocab, a.seed)?;
    let outcome = train(model, &data, &dev, &train_config)?;

    // Report dev metrics of the model as stored, so `eval` on the written
    // checkpoint reproduces them.
    let bytes = to_bytes(&outcome.model);
    let stored = from_bytes(&bytes)?;
    std::fs::write(a.out.join(CHECKPOINT_FILE), &bytes)?;
    std::fs::write(a.out.join(METRICS_FILE), history_csv(&outcome.history))?;
    let echo = TrainEcho {
        command: "train",
        args: a,
        model: &config,
        train: &train_config,
        train_sentences: data.len(),
        dev_sentences: dev.len(),
    };
    let mut text = serde_json::to_string_pretty(&echo).expect("echo serializes");
    text.push('\n');
    std::fs::write(a.out.join(CONFIG_ECHO_FILE), text)?;

    for r in &outcome.history {
        writeln!(out, "epoch {} loss {:.4} dev {}", r.epoch, r.train_loss, r.dev.summary())?;
    }
    let report = evaluate(&stored, if dev.is_empty() { &data } else { &dev })?;
    writeln!(out, "{}", report.summary())?;
    Ok(())
}

fn load_model(flag: &str, path: &Path) -> Result<FusionModel> {
    if !path.exists() {
        return Err(Error::Config(format!("--{flag} {}: no such file", path.display())));
    }
    load_checkpoint(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("--{flag} {}: {io}", path.display())),
        Error::Checkpoint(m) => Error::Checkpoint(format!("--{flag} {}: {m}", path.display())),
        other => other,
    })
}

fn model_sentences(model: &FusionModel, records: &[Record]) -> Result<Vec<Sentence>> {
    let data = to_sentences("data", records, &model.vocab)?;
    for s in &data {
        model.check_payload(s)?;
    }
    Ok(data)
}

fn tree_uas(noisy: &[Sentence], gold: &[Sentence]) -> Result<Vec<f64>> {
    gold.iter()
        .zip(noisy)
        .map(|(g, n)| Ok(uas(&n.tree, &g.tree)?))
        .collect()
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model("checkpoint", &a.checkpoint)?;
    let records = read_dataset("data", &a.data)?;
    let gold = model_sentences(&model, &records)?;
    let noisy = apply_trees(gold.clone(), &a.trees, a.seed)?;
    let report = evaluate(&model, &noisy)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let reference = if a.trees == TreeSource::Gold {
            report.clone()
        } else {
            evaluate(&model, &gold)?
        };
        let rate = match &a.trees {
            TreeSource::Gold => "0".to_string(),
            TreeSource::Corrupted(r) => r.to_string(),
            TreeSource::File(_) => String::new(),
        };
        let mut csv = String::from("condition,rate,sentence_id,uas,f1_ref,f1_noisy,delta\n");
        let scores = tree_uas(&noisy, &gold)?;
        for (i, u) in scores.iter().enumerate() {
            let (f_ref, f_noisy) = (100.0 * reference.per_sentence_f1[i], 100.0 * report.per_sentence_f1[i]);
            csv.push_str(&format!(
                "{},{rate},{i},{:.6},{f_ref:.6},{f_noisy:.6},{:.6}\n",
                a.trees,
                100.0 * u,
                f_noisy - f_ref
            ));
        }
        std::fs::write(dir.join(METRICS_FILE), csv)?;
    }
    writeln!(out, "{}", report.summary())?;
    Ok(())
}

pub fn cmd_perturb(a: &PerturbArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_dataset("data", &a.data)?;
    let mut rng = stream_rng(a.seed, CORRUPT_STREAM, a.rate.to_bits());
    let mut perturbed = Vec::with_capacity(records.len());
    let mut total = 0.0;
    for (i, r) in records.iter().enumerate() {
        let fail = |e: crate::treebank::TreeError| Error::Config(format!("--data record {}: {e}", i + 1));
        let tree = DepTree::new(r.heads.clone(), r.deprels.clone()).map_err(fail)?;
        let noisy = corrupt_tree(&tree, a.rate, &mut rng)?.tree;
        total += uas(&noisy, &tree)?;
        perturbed.push(Record {
            heads: noisy.heads().to_vec(),
            deprels: noisy.deprels().to_vec(),
            ..r.clone()
        });
    }
    create_dir(&a.out)?;
    std::fs::write(a.out.join(PERTURBED_FILE), write_records(&perturbed))?;
    let mean = if records.is_empty() { 1.0 } else { total / records.len() as f64 };
    writeln!(out, "sentences {} mean UAS {mean:.4}", records.len())?;
    Ok(())
}

pub fn cmd_gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> Result<()> {
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let fault = a.inject_fault.map(|f| match f {
        FaultArg::GeluBackwardSign => Fault::GeluBackwardSign,
    });
    let checks = gradient_suite(a.seeds, fault)?;
    for c in &checks {
        let status = if c.passed() { "ok".to_string() } else { format!("FAIL seeds {:?}", c.failed_seeds) };
        writeln!(out, "{:<15} seeds {} max_rel_err {:.3e} {status}", c.layer, c.seeds, c.max_rel_error)?;
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.layer).collect();
    if failed.is_empty() {
        writeln!(out, "all {} layers pass", checks.len())?;
        Ok(())
    } else {
        Err(Error::Verification(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn cmd_sensitivity(a: &SensitivityArgs, out: &mut dyn Write) -> Result<()> {
    let gold_model = load_model("gold-checkpoint", &a.gold_checkpoint)?;
    let noisy_model = load_model("noisy-checkpoint", &a.noisy_checkpoint)?;
    if gold_model.vocab != noisy_model.vocab {
        return Err(Error::Compat("checkpoints use different vocabularies".into()));
    }
    if gold_model.config.head != noisy_model.config.head {
        return Err(Error::Compat("checkpoints have different output heads".into()));
    }
    let records = read_dataset("data", &a.data)?;
    let data = model_sentences(&gold_model, &records)?;
    let report = sensitivity_experiment(
        &[("gold_trained", &gold_model), ("noisy_trained", &noisy_model)],
        &data,
        &a.rates,
        a.seed,
    )?;
    create_dir(&a.out)?;
    std::fs::write(a.out.join(METRICS_FILE), report.metrics_csv())?;
    std::fs::write(a.out.join(SENSITIVITY_FILE), report.fits_csv())?;
    for f in report.fits.iter().filter(|f| f.rate.is_none()) {
        match f.slope {
            Some(s) => writeln!(out, "{} slope {s:.4} n {}", f.condition, f.n)?,
            None => writeln!(out, "{} slope undefined n {}", f.condition, f.n)?,
        }
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticSpec {
        vocab_size: a.vocab_size,
        classes: a.classes,
        min_len: a.min_len,
        max_len: a.max_len,
    };
    let mut rng = stream_rng(a.seed, DATA_STREAM, a.split);
    let data = make_synthetic(&spec, a.count, &mut rng)?;
    let records: Vec<Record> = data.iter().map(Sentence::to_record).collect();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("--out {}: {e}", dir.display())))?;
    }
    std::fs::write(&a.out, write_records(&records))?;
    let tokens: usize = data.iter().map(Sentence::len).sum();
    writeln!(out, "sentences {} tokens {tokens}", data.len())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sources() {
        assert_eq!("gold".parse::<TreeSource>(), Ok(TreeSource::Gold));
        assert_eq!("corrupted@0.25".parse::<TreeSource>(), Ok(TreeSource::Corrupted(0.25)));
        assert_eq!(
            "file:t.jsonl".parse::<TreeSource>(),
            Ok(TreeSource::File(PathBuf::from("t.jsonl")))
        );
        assert!("corrupted@1.5".parse::<TreeSource>().is_err());
        assert!("silver".parse::<TreeSource>().is_err());
        assert_eq!(TreeSource::Corrupted(0.5).to_string(), "corrupted@0.5");
    }

    #[test]
    fn rate_lists() {
        let cli = Cli::try_parse_from(["sfl", "sensitivity", "--gold-checkpoint", "g", "--noisy-checkpoint", "n", "--data", "d", "--out", "o"]).unwrap();
        let Command::Sensitivity(a) = cli.command else { panic!() };
        assert_eq!(a.rates, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]);
        let args = ["sfl", "sensitivity", "--gold-checkpoint", "g", "--noisy-checkpoint", "n", "--data", "d", "--out", "o", "--rates"];
        let parse = |r: &str| Cli::try_parse_from(args.iter().copied().chain([r]));
        let Command::Sensitivity(a) = parse("0.1,0.5").unwrap().command else { panic!() };
        assert_eq!(a.rates, vec![0.1, 0.5]);
        assert!(parse("0,-0.1").is_err());
    }

    #[test]
    fn missing_flag_is_a_config_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_from(["sfl", "train", "--task", "tag", "--variant", "late", "--out", "x"], &mut out, &mut err);
        assert_eq!(code, 2);
        assert!(String::from_utf8(err).unwrap().contains("--data"));
    }

    #[test]
    fn bad_perturb_rate() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_from(
            ["sfl", "perturb", "--data", "d", "--rate", "2", "--out", "o"],
            &mut out,
            &mut err,
        );
        assert_eq!(code, 2);
    }
}
