// SPDX-License-Identifier: Apache-2.0

//! The `ipsim` command line.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 internal error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ipsim_core::corpus::{split, synthesize_variants, Abstraction, Transform};
use ipsim_core::detect::{cosine_similarity, design_graph, PipelineError, Stage, Verdict, DEFAULT_DELTA};
use ipsim_core::encode::{encode, Vocabulary};
use ipsim_core::model::{embed, Embedding, Hyper, ModelParams, Readout};
use ipsim_core::pca::project_rows;
use ipsim_core::train::{
    delta_candidates, embed_all, pair_scores, sweep_delta, train, Checkpoint, Confusion, Optimizer, PairRef,
    TrainConfig, TrainError,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint;
use crate::corpus_io::{corpus_pairs, read_pairs, scan, write_pairs, Dataset};
use crate::dfg_json::to_json;
use crate::exec::Parallel;
use crate::fsio::{load_unit, write_atomic, FsResolver};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ipsim", version, about = "Hardware design similarity from Verilog dataflow graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadoutArg {
    Max,
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbstractionArg {
    Rtl,
    Netlist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the trimmed dataflow graph of a design.
    Dfg(DfgArgs),
    /// Train a model on a corpus of design families.
    Train(TrainArgs),
    /// Compare two designs, or every pair listed in a batch file.
    Compare(CompareArgs),
    /// Score a pair manifest: accuracy, confusion counts and mean scores.
    Eval(EvalArgs),
    /// Principal component coordinates of design embeddings.
    Project(ProjectArgs),
    /// Write dataflow-preserving variants of a design.
    Variants(VariantsArgs),
}

#[derive(Debug, Args)]
pub struct DfgArgs {
    /// Verilog files forming one design.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Top module; inferred when omitted.
    #[arg(long, default_value = "")]
    pub top: String,
    /// Extra directories searched for `include files.
    #[arg(long = "include-dir", short = 'I')]
    pub include_dirs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Print node, edge, root and leaf counts.
    #[arg(long)]
    pub stats: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus root laid out as `<family>/<instance>.v`. Repeatable.
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    /// Family manifest (`family_id, path, rtl|netlist`) replacing the layout.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Abstraction of directory-scanned designs; defaults to `netlist` for
    /// roots named `netlist`, else `rtl`.
    #[arg(long, value_enum)]
    pub abstraction: Option<AbstractionArg>,
    /// Pair RTL and netlist members of a family with each other.
    #[arg(long)]
    pub mix_abstractions: bool,
    /// Synthesized variants added per corpus design.
    #[arg(long, default_value_t = 0)]
    pub variants: usize,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV (epoch,train_loss,train_acc,test_acc); stdout when omitted.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the labelled, split pair list. Synthesized variants are written
    /// to `<stem>_variants/` beside it so the list can be re-evaluated.
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long = "lr", default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, value_enum, default_value = "sgd")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    pub pool_ratio: f64,
    #[arg(long, value_enum, default_value = "max")]
    pub readout: ReadoutArg,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Report per-sample training and inference time.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Two designs to compare (omit with --batch).
    #[arg(num_args = 0..=2)]
    pub designs: Vec<PathBuf>,
    /// File of `a_path,b_path` lines; one verdict is printed per line.
    #[arg(long)]
    pub batch: Option<PathBuf>,
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pair manifest CSV: a_path,b_path,label,split.
    #[arg(long, required = true)]
    pub pairs: PathBuf,
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Choose the threshold with the best accuracy and report the sweep.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Embedding CSV with header `name,family,h0,h1,...`.
    #[arg(long, conflicts_with_all = ["corpus", "checkpoint"])]
    pub embeddings: Option<PathBuf>,
    #[arg(long, requires = "checkpoint")]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub abstraction: Option<AbstractionArg>,
    /// Also write the embeddings of a scanned corpus.
    #[arg(long, requires = "corpus")]
    pub embeddings_out: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VariantsArgs {
    /// Verilog files forming one design.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "")]
    pub top: String,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    /// Comma-separated subset of rename, reorder-decls, reorder-stmts, wrap,
    /// split-assign.
    #[arg(long, value_delimiter = ',')]
    pub transforms: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn pipeline(e: PipelineError) -> CliError {
    match e.stage {
        // Frontend messages already carry `path:line:col`.
        Stage::Frontend => CliError::Input(e.message),
        Stage::Embed => CliError::Internal(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

fn training(e: TrainError) -> CliError {
    match e {
        TrainError::NonFinite { .. } | TrainError::Model(_) => CliError::Internal(e.to_string()),
        _ => CliError::Input(e.to_string()),
    }
}

/// Writes to `out` atomically, or to stdout.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(|e| input(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Input(m) => eprintln!("error: {m}"),
                CliError::Internal(m) => eprintln!("internal error: {m}"),
            }
            e.code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Dfg(a) => cmd_dfg(a),
        Command::Train(a) => cmd_train(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Project(a) => cmd_project(a),
        Command::Variants(a) => cmd_variants(a),
    }
}

fn read_unit(inputs: &[PathBuf], top: &str) -> CliResult<ipsim_core::frontend::SourceUnit> {
    load_unit(inputs, top).map_err(|e| {
        input(format!("{}: {e}", inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")))
    })
}

pub fn cmd_dfg(a: DfgArgs) -> CliResult<()> {
    let unit = read_unit(&a.inputs, &a.top)?;
    let g = design_graph(&unit, &FsResolver::new(&unit, a.include_dirs.clone())).map_err(pipeline)?;
    let doc = match a.format {
        Format::Json => to_json(&g) + "\n",
        Format::Csv => {
            let mut s = String::from("src,dst,src_kind,dst_kind\n");
            for &(u, v) in &g.edges {
                let _ = writeln!(s, "{u},{v},{},{}", g.nodes[u].kind, g.nodes[v].kind);
            }
            s
        }
    };
    emit(a.out.as_deref(), &doc)?;
    if a.stats {
        let line =
            format!("nodes {} edges {} roots {} leaves {}", g.len(), g.edges.len(), g.roots.len(), g.leaves.len());
        if a.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn abstraction_of(root: &Path, arg: Option<AbstractionArg>) -> Abstraction {
    match arg {
        Some(AbstractionArg::Rtl) => Abstraction::Rtl,
        Some(AbstractionArg::Netlist) => Abstraction::Netlist,
        None if root.file_name().is_some_and(|n| n == "netlist") => Abstraction::Netlist,
        None => Abstraction::Rtl,
    }
}

fn scan_roots(
    roots: &[PathBuf],
    manifest: Option<&Path>,
    abstraction: Option<AbstractionArg>,
) -> CliResult<Vec<ipsim_core::corpus::DesignFamily>> {
    let mut merged: std::collections::BTreeMap<String, Vec<ipsim_core::corpus::Design>> = Default::default();
    for root in roots {
        let report = scan(root, manifest, abstraction_of(root, abstraction)).map_err(input)?;
        for s in &report.skipped {
            eprintln!("skipped {}: {}", s.path, s.reason);
        }
        for f in report.families {
            merged.entry(f.id).or_default().extend(f.members);
        }
    }
    Ok(merged
        .into_iter()
        .map(|(id, mut members)| {
            members.sort();
            members.dedup();
            ipsim_core::corpus::DesignFamily { id, members }
        })
        .collect())
}

impl TrainArgs {
    pub fn hyper(&self) -> Hyper {
        Hyper {
            layers: self.layers,
            hidden: self.hidden,
            pool_ratio: self.pool_ratio,
            readout: match self.readout {
                ReadoutArg::Max => Readout::Max,
                ReadoutArg::Mean => Readout::Mean,
                ReadoutArg::Sum => Readout::Sum,
            },
            dropout: self.dropout,
            ..Hyper::default()
        }
    }

    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            margin: self.margin,
            epochs: self.epochs,
            seed: self.seed,
            test_fraction: self.test_fraction,
            patience: self.patience,
            delta: self.delta,
            optimizer: match self.optimizer {
                OptimizerArg::Sgd => Optimizer::Sgd,
                OptimizerArg::Momentum => Optimizer::Momentum { beta: 0.9 },
                OptimizerArg::Adam => Optimizer::adam(),
            },
        }
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `pairs.csv` → `pairs_variants/` beside it.
fn variants_dir(pairs_out: &Path) -> PathBuf {
    let stem = pairs_out.file_stem().and_then(|s| s.to_str()).unwrap_or("pairs");
    pairs_out.with_file_name(format!("{stem}_variants"))
}

pub fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let config = a.config();
    config.validate().map_err(training)?;
    let hyper = a.hyper();
    hyper.validate().map_err(input)?;
    let families = scan_roots(&a.corpus, a.manifest.as_deref(), a.abstraction)?;
    let exec = Parallel::from_env();
    let ds = exec.install(|| Dataset::build(&families, a.variants, a.seed)).map_err(pipeline)?;
    let pairs = corpus_pairs(&ds.families, a.mix_abstractions).map_err(input)?;
    let pairs = split(&pairs, a.test_fraction, a.seed).map_err(input)?;
    if let Some(p) = &a.pairs_out {
        let listed = if ds.variant_sources.is_empty() {
            pairs.clone()
        } else {
            ds.materialize_variants(&pairs, &variants_dir(p)).map_err(input)?
        };
        emit(Some(p), &write_pairs(&listed))?;
    }
    let (train_pairs, test_pairs) = ds.refs(&pairs).map_err(CliError::Internal)?;
    let params = ModelParams::init(hyper, a.seed).map_err(input)?;
    let mut trace = String::from("epoch,train_loss,train_acc,test_acc\n");
    let start = Instant::now();
    let outcome = train(&ds.graphs, &train_pairs, &test_pairs, params, &config, &exec, &mut |s| {
        let _ = writeln!(trace, "{},{},{},{}", s.epoch, s.train_loss, s.train_acc, opt_f64(s.test_acc));
    })
    .map_err(training)?;
    let train_time = start.elapsed();
    let epochs = outcome.trace.len();
    emit(a.trace.as_deref(), &trace)?;
    let ckpt = Checkpoint::new(outcome.params, epochs as u32, outcome.final_loss, a.seed);
    checkpoint::save(&a.out, &ckpt).map_err(|e| input(format!("{}: {e}", a.out.display())))?;
    if a.timing {
        let t = Instant::now();
        let emb = embed_all(&ds.graphs, &ckpt.params, &exec).map_err(training)?;
        let _ = pair_scores(&emb, &test_pairs);
        let test_time = t.elapsed();
        let per_train = train_time.as_secs_f64() * 1e3 / (train_pairs.len() * epochs.max(1)) as f64;
        let per_test = test_time.as_secs_f64() * 1e3 / test_pairs.len().max(1) as f64;
        eprintln!("timing: train {per_train:.4} ms/sample, test {per_test:.4} ms/sample ({} threads)", exec.threads());
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    checkpoint::load(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn embed_path(path: &Path, params: &ModelParams) -> Result<Embedding, PipelineError> {
    let name = path.display().to_string();
    let unit = load_unit(&[path.to_owned()], "").map_err(|e| PipelineError::io(&name, e))?;
    let g = design_graph(&unit, &FsResolver::new(&unit, vec![]))?;
    let t = encode(&g, &Vocabulary::default()).map_err(|e| PipelineError::encode(&name, e))?;
    embed(&t, params, false, 0).map_err(|e| PipelineError {
        stage: Stage::Embed,
        design: name,
        message: e.to_string(),
        unsupported: false,
    })
}

#[derive(Debug, Serialize)]
struct VerdictRecord<'a> {
    a: &'a str,
    b: &'a str,
    score: f64,
    delta: f64,
    label: &'static str,
}

fn batch_lines(path: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let text = std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("a_path") {
            continue;
        }
        let mut f = line.split(',').map(str::trim);
        match (f.next(), f.next()) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => out.push((a.into(), b.into())),
            _ => return Err(input(format!("{}:{}: expected `a_path,b_path`", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn cmd_compare(a: CompareArgs) -> CliResult<()> {
    let pairs = match (&a.batch, a.designs.as_slice()) {
        (Some(b), []) => batch_lines(b)?,
        (None, [x, y]) => vec![(x.clone(), y.clone())],
        _ => return Err(input("give two designs or --batch FILE")),
    };
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let mut designs: Vec<&PathBuf> = pairs.iter().flat_map(|(x, y)| [x, y]).collect();
    designs.sort();
    designs.dedup();
    let exec = Parallel::from_env();
    let embeddings: Vec<Embedding> = exec
        .install(|| designs.par_iter().map(|p| embed_path(p, &ckpt.params)).collect::<Result<Vec<_>, _>>())
        .map_err(pipeline)?;
    let lookup = |p: &PathBuf| &embeddings[designs.binary_search(&p).expect("design embedded")];
    let mut out = String::new();
    if a.format == Format::Csv {
        out.push_str("a,b,score,delta,label\n");
    }
    for (x, y) in &pairs {
        let score = cosine_similarity(lookup(x), lookup(y))
            .map_err(|e| input(format!("{} vs {}: {e}", x.display(), y.display())))?;
        let v = Verdict::new(score, a.delta);
        let (xs, ys) = (x.display().to_string(), y.display().to_string());
        match a.format {
            Format::Json => {
                let rec = VerdictRecord { a: &xs, b: &ys, score: v.score, delta: v.delta, label: v.label.as_str() };
                out.push_str(&serde_json::to_string(&rec).expect("verdict serializes"));
                out.push('\n');
            }
            Format::Csv => {
                let _ = writeln!(out, "{xs},{ys},{},{},{}", v.score, v.delta, v.label);
            }
        }
    }
    emit(a.out.as_deref(), &out)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    delta: f64,
    accuracy: f64,
    /// Pairs scoring above the threshold.
    above: usize,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    pairs: usize,
    delta: f64,
    accuracy: f64,
    tp: usize,
    tn: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
    mean_similar: Option<f64>,
    mean_different: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<SweepRow>>,
}

fn mean_where(scores: &[f64], labels: &[i8], y: i8) -> Option<f64> {
    let v: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == y).map(|(s, _)| *s).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let all = read_pairs(&a.pairs).map_err(input)?;
    let pairs: Vec<_> = all
        .into_iter()
        .filter(|p| match a.split {
            SplitArg::All => true,
            SplitArg::Train => p.split == ipsim_core::corpus::Split::Train,
            SplitArg::Test => p.split == ipsim_core::corpus::Split::Test,
        })
        .collect();
    if pairs.is_empty() {
        return Err(input(format!("{}: no pairs in the selected split", a.pairs.display())));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let exec = Parallel::from_env();
    let ds = exec.install(|| Dataset::from_pairs(&pairs)).map_err(pipeline)?;
    let refs: Vec<PairRef> = pairs
        .iter()
        .map(|p| PairRef { a: ds.index_of(&p.a).expect("loaded"), b: ds.index_of(&p.b).expect("loaded"), y: p.label })
        .collect();
    let emb = embed_all(&ds.graphs, &ckpt.params, &exec).map_err(training)?;
    let scores = pair_scores(&emb, &refs);
    let labels: Vec<i8> = refs.iter().map(|r| r.y).collect();
    let (delta, sweep) = if a.sweep {
        let rows = delta_candidates(&scores)
            .into_iter()
            .map(|d| {
                let c = Confusion::new(&scores, &labels, d);
                SweepRow { delta: d, accuracy: c.accuracy(), above: c.tp + c.fp }
            })
            .collect();
        (sweep_delta(&scores, &labels).0, Some(rows))
    } else {
        (a.delta, None)
    };
    let c = Confusion::new(&scores, &labels, delta);
    let report = EvalReport {
        pairs: refs.len(),
        delta,
        accuracy: c.accuracy(),
        tp: c.tp,
        tn: c.tn,
        fp: c.fp,
        fn_: c.fn_,
        mean_similar: mean_where(&scores, &labels, 1),
        mean_different: mean_where(&scores, &labels, -1),
        sweep,
    };
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        Format::Csv => {
            let mut s = String::from("pairs,delta,accuracy,tp,tn,fp,fn,mean_similar,mean_different\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                report.pairs,
                report.delta,
                report.accuracy,
                report.tp,
                report.tn,
                report.fp,
                report.fn_,
                opt_f64(report.mean_similar),
                opt_f64(report.mean_different)
            );
            if let Some(rows) = &report.sweep {
                s.push_str("\ndelta,accuracy,above\n");
                for r in rows {
                    let _ = writeln!(s, "{},{},{}", r.delta, r.accuracy, r.above);
                }
            }
            s
        }
    };
    emit(a.out.as_deref(), &text)
}

fn read_embeddings(path: &Path) -> CliResult<Vec<(String, String, Vec<f64>)>> {
    let bad = |m: String| input(format!("{}: {m}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "name" || &header[1] != "family" {
        return Err(bad("header must be name,family,h0,h1,...".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v = rec
            .iter()
            .skip(2)
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        out.push((rec[0].to_owned(), rec[1].to_owned(), v));
    }
    Ok(out)
}

fn write_embeddings(rows: &[(String, String, Vec<f64>)]) -> String {
    let d = rows.first().map_or(0, |r| r.2.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_owned(), "family".to_owned()];
    header.extend((0..d).map(|i| format!("h{i}")));
    w.write_record(&header).expect("in-memory write");
    for (n, f, v) in rows {
        let mut rec = vec![n.clone(), f.clone()];
        rec.extend(v.iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn cmd_project(a: ProjectArgs) -> CliResult<()> {
    let rows = match (&a.embeddings, &a.corpus, &a.checkpoint) {
        (Some(p), None, None) => read_embeddings(p)?,
        (None, Some(root), Some(ck)) => {
            let ckpt = load_checkpoint(ck)?;
            let families = scan_roots(std::slice::from_ref(root), None, a.abstraction)?;
            let exec = Parallel::from_env();
            let ds = exec.install(|| Dataset::build(&families, 0, 0)).map_err(pipeline)?;
            let emb = embed_all(&ds.graphs, &ckpt.params, &exec).map_err(training)?;
            let mut rows = Vec::new();
            for f in &ds.families {
                for m in &f.members {
                    let i = ds.index_of(&m.path).expect("member encoded");
                    rows.push((m.path.clone(), f.id.clone(), emb[i].0.clone()));
                }
            }
            if let Some(p) = &a.embeddings_out {
                emit(Some(p), &write_embeddings(&rows))?;
            }
            rows
        }
        _ => return Err(input("give --embeddings FILE or --corpus DIR with --checkpoint FILE")),
    };
    let vectors: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
    let p = project_rows(&vectors, a.dims).map_err(input)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["name".to_owned(), "family".to_owned()];
    header.extend((1..=a.dims).map(|i| format!("pc{i}")));
    w.write_record(&header).expect("in-memory write");
    for (i, (n, f, _)) in rows.iter().enumerate() {
        let mut rec = vec![n.clone(), f.clone()];
        rec.extend(p.coords.row(i).iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
    emit(a.out.as_deref(), &text)
}

pub fn cmd_variants(a: VariantsArgs) -> CliResult<()> {
    let transforms: Vec<Transform> = if a.transforms.is_empty() {
        Transform::ALL.to_vec()
    } else {
        a.transforms
            .iter()
            .map(|t| Transform::parse(t.trim()).ok_or_else(|| input(format!("unknown transform `{t}`"))))
            .collect::<Result<_, _>>()?
    };
    let unit = read_unit(&a.inputs, &a.top)?;
    let texts = synthesize_variants(&unit, &FsResolver::new(&unit, vec![]), &transforms, a.count, a.seed)
        .map_err(|e| pipeline(PipelineError::frontend(&a.inputs[0].display().to_string(), e)))?;
    std::fs::create_dir_all(&a.out).map_err(|e| input(format!("{}: {e}", a.out.display())))?;
    let stem = a.inputs[0].file_stem().map_or_else(|| "design".into(), |s| s.to_string_lossy().into_owned());
    for (i, t) in texts.iter().enumerate() {
        let p = a.out.join(format!("{stem}_v{}.v", i + 1));
        write_atomic(&p, t.as_bytes()).map_err(|e| input(format!("{}: {e}", p.display())))?;
        println!("{}", p.display());
    }
    Ok(())
}
