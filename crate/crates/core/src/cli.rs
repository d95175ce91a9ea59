//! Command-line front end. Every subcommand writes its outputs, plus the
//! fully resolved settings it ran with, under one output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::corpus::{self, generate, import_csv_dir, label_split, Corpus, DomainShift, DomainSpec, Split};
use crate::denoiser::Direction;
use crate::error::{bail, Error, Result};
use crate::pipeline::export::{write_histograms_csv, write_jsonl, write_losses_csv, write_ranks_csv, write_report_csv, write_trace_csv};
use crate::pipeline::{
    ablate, diffusion_trace, evaluate, load_checkpoint, out_domain_eval, save_checkpoint, train, Axis, EvalReport, RunConfig,
    SweepValues,
};

pub const CORPUS_FILE: &str = "corpus.dfcx";
pub const CHECKPOINT_FILE: &str = "model.dfrt";
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Debug, Parser)]
#[command(name = "jointdiff", version, about = "Text-video retrieval with diffusion-generated joint distributions")]
pub struct Cli {
    /// Output directory.
    #[arg(short, long, global = true, env = "JOINTDIFF_OUT", default_value = "runs")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (or import one from CSV) with a train/test split.
    GenData(GenDataArgs),
    /// Train a model on the train split of a corpus.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test split of a corpus.
    Eval(EvalArgs),
    /// Evaluate a frozen checkpoint in-domain and on a shifted domain.
    OutDomain(OutDomainArgs),
    /// Export the per-step distributions of one sampling chain.
    Trace(TraceArgs),
    /// One-factor sweep: train and evaluate every point of an axis.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 16)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub pairs_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub words: usize,
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    #[arg(long, default_value_t = 0.3)]
    pub sigma_within: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma_modal: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Apply the default domain shift.
    #[arg(long)]
    pub shift: bool,
    /// Import `pairs.csv` and feature CSVs from this directory instead of generating.
    #[arg(long, value_name = "DIR")]
    pub from_csv: Option<PathBuf>,
}

/// Config file plus per-field overrides. Flags win over the file.
#[derive(Debug, Default, Args, Serialize)]
pub struct ConfigArgs {
    /// TOML file of `key = value` settings.
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_scale: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aggregator_depth: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text_frame_tau: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrastive_tau: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaled_attention: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_positions: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_token_weights: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ddim_eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clamp: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fusion_weight: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram_bins: Option<usize>,
}

impl ConfigArgs {
    /// `base` (if any), then the config file, then flags.
    pub fn resolve(&self, base: Option<&RunConfig>) -> Result<RunConfig> {
        let mut table = match base {
            Some(b) => b.to_toml().parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            let file: toml::Table = text
                .parse()
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            table.extend(file);
        }
        let flags = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        table.extend(flags);
        RunConfig::from_table(table)
    }
}

#[derive(Debug, Args)]
pub struct CorpusArg {
    /// Corpus file, or a directory holding `corpus.dfcx`.
    #[arg(short, long, value_name = "PATH")]
    pub corpus: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    /// Defaults to `model.dfrt` in the output directory.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub checkpoint: CheckpointArgs,
    /// t2v, v2t, or both.
    #[arg(long, default_value = "both")]
    pub direction: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct OutDomainArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub checkpoint: CheckpointArgs,
    /// Shifted corpus. Defaults to regenerating the in-domain corpus with
    /// the default shift.
    #[arg(long, value_name = "PATH")]
    pub shifted: Option<PathBuf>,
    #[arg(long, default_value = "t2v")]
    pub direction: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    #[command(flatten)]
    pub checkpoint: CheckpointArgs,
    /// Text id (t2v) or video id (v2t) of the query.
    #[arg(long)]
    pub query: u32,
    #[arg(long, default_value = "t2v")]
    pub direction: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub corpus: CorpusArg,
    /// loss-type | sampling | schedule | strategy | steps | scale
    #[arg(long)]
    pub axis: String,
    #[arg(long, default_value = "t2v")]
    pub direction: String,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code: 0 on success, 1 on a runtime failure, 2 on a usage
/// error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => run_train(a, out),
        Command::Eval(a) => run_eval(a, out),
        Command::OutDomain(a) => run_out_domain(a, out),
        Command::Trace(a) => run_trace(a, out),
        Command::Ablate(a) => run_ablate(a, out),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    if path.is_dir() {
        corpus::load(path.join(CORPUS_FILE))
    } else {
        corpus::load(path)
    }
}

fn checkpoint_path(a: &CheckpointArgs, out: &Path) -> PathBuf {
    a.checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE))
}

fn directions(s: &str) -> Result<Vec<Direction>> {
    if s == "both" {
        Ok(Direction::BOTH.to_vec())
    } else {
        Ok(vec![s.parse()?])
    }
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn echo_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::write(out.join(CONFIG_ECHO), cfg.to_toml())?;
    Ok(())
}

fn write_reports(out: &Path, stem: &str, reports: &[(&str, &EvalReport)]) -> Result<()> {
    write_report_csv(create(out.join(format!("{stem}.csv")))?, reports)?;
    let rows: Vec<&EvalReport> = reports.iter().map(|(_, r)| *r).collect();
    write_jsonl(create(out.join(format!("{stem}.jsonl")))?, &rows)?;
    write_ranks_csv(create(out.join(format!("{stem}-ranks.csv")))?, reports)?;
    write_histograms_csv(create(out.join(format!("{stem}-histograms.csv")))?, reports)?;
    Ok(())
}

fn print_report(label: &str, r: &EvalReport) {
    let m = &r.metrics;
    println!(
        "{label:<12} {}  R@1 {:5.1}  R@5 {:5.1}  R@10 {:5.1}  Rsum {:6.1}  MdR {:4}  MnR {:6.2}  AUROC {:.3}",
        r.direction, m.r1, m.r5, m.r10, m.rsum, m.mdr, m.mnr, r.auroc
    );
}

fn gen_data(a: &GenDataArgs, out: &Path) -> Result<()> {
    let corpus = match &a.from_csv {
        Some(dir) => import_csv_dir(dir)?,
        None => {
            let spec = DomainSpec {
                classes: a.classes,
                pairs_per_class: a.pairs_per_class,
                input_dim: a.input_dim,
                words: a.words,
                frames: a.frames,
                sigma_within: a.sigma_within,
                sigma_modal: a.sigma_modal,
                shift: a.shift.then(DomainShift::default),
            };
            let c = generate(&spec, a.seed)?;
            fs::write(out.join("gen-data.toml"), toml::to_string(&spec).map_err(|e| Error::Config(e.to_string()))?)?;
            c
        }
    };
    let corpus = label_split(corpus, a.train_fraction, a.seed)?;
    corpus::save(&corpus, out.join(CORPUS_FILE))?;
    println!(
        "wrote {} pairs ({} train, {} test) to {}",
        corpus.len(),
        corpus.subset(Split::Train).len(),
        corpus.subset(Split::Test).len(),
        out.join(CORPUS_FILE).display()
    );
    Ok(())
}

fn run_train(a: &RunArgs, out: &Path) -> Result<()> {
    let cfg = a.config.resolve(None)?;
    let corpus = load_corpus(&a.corpus.corpus)?.subset(Split::Train);
    echo_config(out, &cfg)?;
    let outcome = train(&corpus, &cfg.train)?;
    if let Some(last) = outcome.losses.last() {
        println!(
            "trained {} epochs on {} pairs: loss {:.4} (disc {:.4}, gen {:.4})",
            cfg.train.epochs,
            corpus.len(),
            last.total,
            last.discrimination,
            last.generation
        );
    }
    write_losses_csv(create(out.join("losses.csv"))?, &outcome.losses)?;
    save_checkpoint(&outcome.model, out.join(CHECKPOINT_FILE))?;
    println!("checkpoint: {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

/// Checkpoint plus its training settings merged under the eval flags.
fn load_with_config(ck: &CheckpointArgs, args: &ConfigArgs, out: &Path) -> Result<(crate::pipeline::Model, RunConfig)> {
    let model = load_checkpoint(checkpoint_path(ck, out))?;
    let base = RunConfig {
        train: model.config.clone(),
        ..RunConfig::default()
    };
    let cfg = args.resolve(Some(&base))?;
    if cfg.train != model.config {
        bail!(Config, "training settings cannot be overridden when evaluating a checkpoint");
    }
    Ok((model, cfg))
}

fn run_eval(a: &EvalArgs, out: &Path) -> Result<()> {
    let (model, cfg) = load_with_config(&a.checkpoint, &a.config, out)?;
    let test = load_corpus(&a.corpus.corpus)?.subset(Split::Test);
    echo_config(out, &cfg)?;
    let mut reports = Vec::new();
    for dir in directions(&a.direction)? {
        reports.push((dir.to_string(), evaluate(&model, &test, dir, &cfg.eval)?));
    }
    for (l, r) in &reports {
        print_report(l, r);
    }
    let refs: Vec<(&str, &EvalReport)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
    write_reports(out, "report", &refs)
}

fn run_out_domain(a: &OutDomainArgs, out: &Path) -> Result<()> {
    let (model, cfg) = load_with_config(&a.checkpoint, &a.config, out)?;
    let full = load_corpus(&a.corpus.corpus)?;
    let shifted = match &a.shifted {
        Some(p) => load_corpus(p)?,
        None => {
            let (Some(spec), Some(seed)) = (full.manifest.spec, full.manifest.seed) else {
                bail!(Input, "corpus is not synthetic; pass --shifted");
            };
            let spec = DomainSpec {
                shift: Some(DomainShift::default()),
                ..spec
            };
            let mut c = generate(&spec, seed)?;
            for (p, q) in c.manifest.pairs.iter_mut().zip(&full.manifest.pairs) {
                p.split = q.split;
            }
            c
        }
    };
    let (in_test, out_test) = (full.subset(Split::Test), shifted.subset(Split::Test));
    echo_config(out, &cfg)?;
    let mut reports = Vec::new();
    for dir in directions(&a.direction)? {
        let (i, o) = out_domain_eval(&model, &in_test, &out_test, dir, &cfg.eval)?;
        reports.push((format!("in-domain-{dir}"), i));
        reports.push((format!("out-domain-{dir}"), o));
    }
    for (l, r) in &reports {
        print_report(l, r);
    }
    let refs: Vec<(&str, &EvalReport)> = reports.iter().map(|(l, r)| (l.as_str(), r)).collect();
    write_reports(out, "out-domain", &refs)
}

fn run_trace(a: &TraceArgs, out: &Path) -> Result<()> {
    let (model, cfg) = load_with_config(&a.checkpoint, &a.config, out)?;
    let test = load_corpus(&a.corpus.corpus)?.subset(Split::Test);
    let dir: Direction = a.direction.parse()?;
    echo_config(out, &cfg)?;
    let trace = diffusion_trace(&model, &test, a.query, dir, &cfg.eval)?;
    let stem = format!("trace-{dir}-{}", a.query);
    write_trace_csv(create(out.join(format!("{stem}.csv")))?, &trace)?;
    write_jsonl(create(out.join(format!("{stem}.jsonl")))?, &trace.rows)?;
    if let Some(last) = trace.rows.last() {
        println!(
            "{} steps; final probability of the positive: {:.4}",
            trace.rows.len() - 1,
            last.prob[trace.positive]
        );
    }
    Ok(())
}

fn run_ablate(a: &AblateArgs, out: &Path) -> Result<()> {
    let cfg = a.config.resolve(None)?;
    let axis: Axis = a.axis.parse()?;
    let dir: Direction = a.direction.parse()?;
    let corpus = load_corpus(&a.corpus.corpus)?;
    let (train_set, test_set) = (corpus.subset(Split::Train), corpus.subset(Split::Test));
    echo_config(out, &cfg)?;
    let outcomes = ablate(axis, &cfg, &SweepValues::default(), &train_set, &test_set, dir)?;
    let mut reports = Vec::new();
    for o in &outcomes {
        match (&o.report, &o.error) {
            (Some(r), _) => {
                print_report(&o.label, r);
                reports.push((o.label.as_str(), r));
            }
            (None, Some(e)) => println!("{:<12} infeasible: {e}", o.label),
            (None, None) => {}
        }
    }
    write_jsonl(create(out.join(format!("ablate-{axis}-cells.jsonl")))?, &outcomes)?;
    write_reports(out, &format!("ablate-{axis}"), &reports)
}
