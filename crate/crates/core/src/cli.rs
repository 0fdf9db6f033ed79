//! Command-line front end: `train`, `rank`, `eval`, `attn`, `synth`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataio::{load_dataset, Checkpoint, Dataset};
use crate::embeddings::load_embeddings;
use crate::evaluator::{accuracy, agreement};
use crate::ranker::{default_grid, tune_alphas, Ranker, RankingWeights};
use crate::synth::{generate, SynthConfig};
use crate::textsem::attention_weights;
use crate::token;
use crate::vissem::{train, Mode, TrainConfig};
use crate::Parallelism;

#[derive(Debug, Parser)]
#[command(
    name = "adrank",
    version,
    about = "Rank action-reason statements against ad images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train visual-semantic projections and write a checkpoint.
    Train(TrainArgs),
    /// Rank every image's candidate statements; one JSON line per image.
    Rank(RankArgs),
    /// Top-1 accuracy (and optional agreement) of rankings.
    Eval(EvalArgs),
    /// Print scene-token attention weights for one image and statement.
    Attn(AttnArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Visual-semantic weight [default: from checkpoint, 0.7]
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Action-head weight for partitioned models [default: from checkpoint, 0.5]
    #[arg(long)]
    pub alpha1a: Option<f64>,
    /// Reason-head weight for partitioned models [default: from checkpoint, 0.5]
    #[arg(long)]
    pub alpha1r: Option<f64>,
    /// Scene-text semantic weight [default: from checkpoint, 0.3]
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Lexical weight [default: from checkpoint, 1.5]
    #[arg(long)]
    pub alpha3: Option<f64>,
    /// Compare partitioned heads with the whole statement instead of its parts
    #[arg(long)]
    pub whole_statement_heads: bool,
}

impl WeightArgs {
    fn apply(&self, mut w: RankingWeights) -> RankingWeights {
        if let Some(a) = self.alpha1 {
            w.alpha1 = a;
            // a bare --alpha1 also drives both partitioned heads unless they are set
            w.alpha1a = self
                .alpha1a
                .unwrap_or(if a == 0.0 { 0.0 } else { w.alpha1a });
            w.alpha1r = self
                .alpha1r
                .unwrap_or(if a == 0.0 { 0.0 } else { w.alpha1r });
        }
        if let Some(a) = self.alpha1a {
            w.alpha1a = a;
        }
        if let Some(a) = self.alpha1r {
            w.alpha1r = a;
        }
        if let Some(a) = self.alpha2 {
            w.alpha2 = a;
        }
        if let Some(a) = self.alpha3 {
            w.alpha3 = a;
        }
        w
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset (JSON Lines)
    #[arg(long)]
    pub data: PathBuf,
    /// Word embeddings (text format)
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    pub out: PathBuf,
    /// plain | fused | partitioned | partitioned-fused
    #[arg(long, default_value = "plain")]
    pub mode: Mode,
    /// Triplet margin
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Batch size (in-batch negatives per sample = batch - 1)
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Train partitioned heads against whole statements
    #[arg(long)]
    pub whole_statement_heads: bool,
    /// Tune ranking weights on this validation set and store them in the checkpoint
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Disable data-parallel execution
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by `train`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset providing gold labels
    #[arg(long)]
    pub data: PathBuf,
    /// Rankings file from `rank`; otherwise --model and --embeddings rank end to end
    #[arg(long)]
    pub rankings: Option<PathBuf>,
    #[arg(long, requires = "embeddings")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Second rankings file; prints top-1 agreement with the first
    #[arg(long)]
    pub compare: Option<PathBuf>,
    /// Print "<id>\t<predicted>\t<correct>" for every image
    #[arg(long)]
    pub per_image: bool,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct AttnArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub image_id: String,
    #[arg(long)]
    pub statement: String,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (dataset.jsonl, embeddings.txt, gold.json)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub images: usize,
    #[arg(long, default_value_t = 5)]
    pub topics: usize,
    #[arg(long, default_value_t = 16)]
    pub word_dim: usize,
    #[arg(long, default_value_t = 12)]
    pub object_dim: usize,
    #[arg(long, default_value_t = 8)]
    pub symbol_dim: usize,
    /// Candidate statements per image
    #[arg(long, default_value_t = 15)]
    pub statements: usize,
    #[arg(long, default_value_t = 3)]
    pub positives: usize,
    /// Gaussian noise on word vectors and patch features
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Probability of dropping each scene token
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Draw action and reason topics independently
    #[arg(long)]
    pub independent_parts: bool,
}

/// One line of a rankings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingLine {
    pub id: String,
    /// Statement indices, best first.
    pub ranking: Vec<usize>,
    /// Scores aligned with `ranking` (ascending).
    pub scores: Vec<f64>,
}

fn policy(sequential: bool) -> Parallelism {
    if sequential {
        Parallelism::Sequential
    } else {
        Parallelism::Parallel
    }
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn rank_lines(
    data: &Dataset,
    model_path: &Path,
    embeddings: &Path,
    weights: &WeightArgs,
    par: Parallelism,
) -> anyhow::Result<Vec<RankingLine>> {
    let ckpt = Checkpoint::load(model_path)
        .with_context(|| format!("loading checkpoint {}", model_path.display()))?;
    let table = load_embeddings(embeddings)
        .with_context(|| format!("loading embeddings {}", embeddings.display()))?;
    let mut ranker = Ranker::new(
        &ckpt.model,
        &ckpt.tfidf,
        &table,
        weights.apply(ckpt.weights),
    )?;
    if weights.whole_statement_heads {
        ranker.whole_statement_heads = true;
    }
    let lists = ranker.rank_dataset(data, par)?;
    Ok(data
        .records
        .iter()
        .zip(lists)
        .map(|(r, l)| RankingLine {
            id: r.id.clone(),
            ranking: l.order(),
            scores: l.scores(),
        })
        .collect())
}

pub fn read_rankings(path: &Path) -> anyhow::Result<Vec<RankingLine>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RankingLine = serde_json::from_str(&line)
            .with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if r.ranking.is_empty() {
            bail!("{}: line {}: empty ranking", path.display(), i + 1);
        }
        out.push(r);
    }
    Ok(out)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let table = load_embeddings(&a.embeddings)
        .with_context(|| format!("loading embeddings {}", a.embeddings.display()))?;
    let config = TrainConfig {
        mode: a.mode,
        margin: a.margin,
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        whole_statement_heads: a.whole_statement_heads,
        parallelism: policy(a.sequential),
    };
    let outcome = train(&data, &table, &config)?;
    for (i, loss) in outcome.loss_trace.iter().enumerate() {
        writeln!(out, "epoch {} loss {loss:.6}", i + 1)?;
    }
    let tfidf = data.fit_tfidf()?;
    let mut weights = RankingWeights::default();
    if let Some(v) = &a.validation {
        let val = load_data(v)?;
        let ranker = Ranker::new(&outcome.model, &tfidf, &table, weights)?;
        let tuned = tune_alphas(&ranker, &val, &default_grid(), config.parallelism)?;
        writeln!(
            out,
            "tuned alpha1 {} alpha2 {} alpha3 {} (validation accuracy {:.4})",
            tuned.weights.alpha1, tuned.weights.alpha2, tuned.weights.alpha3, tuned.accuracy
        )?;
        weights = tuned.weights;
    }
    Checkpoint {
        model: outcome.model,
        tfidf,
        weights,
    }
    .save(&a.out)
    .with_context(|| format!("writing checkpoint {}", a.out.display()))?;
    Ok(())
}

fn cmd_rank(a: &RankArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let lines = rank_lines(
        &data,
        &a.model,
        &a.embeddings,
        &a.weights,
        policy(a.sequential),
    )?;
    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l)?);
        text.push('\n');
    }
    match &a.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let lines = match (&a.rankings, &a.model, &a.embeddings) {
        (Some(r), _, _) => read_rankings(r)?,
        (None, Some(m), Some(e)) => rank_lines(&data, m, e, &a.weights, policy(a.sequential))?,
        _ => bail!("eval needs --rankings, or --model with --embeddings"),
    };
    let predictions: Vec<(String, usize)> =
        lines.iter().map(|l| (l.id.clone(), l.ranking[0])).collect();
    let report = accuracy(&predictions, &data.gold())?;
    writeln!(out, "{}", report.summary())?;
    if !report.excluded.is_empty() {
        writeln!(
            out,
            "excluded {} images without positive statements",
            report.excluded.len()
        )?;
    }
    if a.per_image {
        for o in &report.per_image {
            writeln!(out, "{}\t{}\t{}", o.id, o.predicted, u8::from(o.correct))?;
        }
    }
    if let Some(c) = &a.compare {
        let other: HashMap<String, usize> = read_rankings(c)?
            .into_iter()
            .map(|l| (l.id, l.ranking[0]))
            .collect();
        let mine: Vec<usize> = predictions.iter().map(|p| p.1).collect();
        let theirs = predictions
            .iter()
            .map(|(id, _)| {
                other
                    .get(id)
                    .copied()
                    .ok_or_else(|| anyhow!("image {id:?} missing from {}", c.display()))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        writeln!(out, "agreement {:.4}", agreement(&mine, &theirs)?)?;
    }
    Ok(())
}

fn cmd_attn(a: &AttnArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let data = load_data(&a.data)?;
    let table = load_embeddings(&a.embeddings)?;
    let image = data
        .get(&a.image_id)
        .ok_or_else(|| crate::Error::UnknownImage(a.image_id.clone()))?;
    let statement = token::tokenize(&a.statement);
    for (tok, gamma) in attention_weights(&image.scene, &statement, &table).entries {
        writeln!(out, "{tok}\t{gamma:.4}")?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let config = SynthConfig {
        num_images: a.images,
        num_topics: a.topics,
        word_dim: a.word_dim,
        object_dim: a.object_dim,
        symbol_dim: a.symbol_dim,
        statements_per_image: a.statements,
        positives_per_image: a.positives,
        noise_sigma: a.noise,
        ocr_dropout: a.dropout,
        seed: a.seed,
        independent_parts: a.independent_parts,
        ..SynthConfig::default()
    };
    let generated = generate(&config)?;
    generated.write_dir(&a.out)?;
    writeln!(
        out,
        "wrote {} images to {}",
        generated.dataset.len(),
        a.out.display()
    )?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Rank(a) => cmd_rank(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Attn(a) => cmd_attn(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

/// Parses arguments, runs the command against stdout, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(&cli, &mut out);
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
