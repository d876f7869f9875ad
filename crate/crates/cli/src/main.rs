use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use opensed::encoder::{EncoderParams, ForwardPass};
use opensed::ingest::{parse_messages, write_messages, EmbeddingTable};
use opensed::pipeline::diagnostics::{consistency_gap, entropy_groups, pseudo_label_quality};
use opensed::pipeline::{
    checkpoint_path, evaluate_block, evaluate_embeddings, finetune_block, pretrain, run_stream,
    write_atomic, Block, Clustering, LossVariant, PipelineCheckpoint, PipelineConfig,
    PreparedStream,
};
use opensed::pseudo::{candidate_pairs, rsd_all, ReferenceMatrix};
use opensed::synth::{generate_corpus, generate_embedding_table, SynthConfig};

const EXIT_CODES: &str = "Exit codes: 0 success, 1 runtime failure, 2 usage error.";

/// Open-set streaming event detection on message streams.
#[derive(Parser)]
#[command(name = "opensed", version, after_help = EXIT_CODES)]
struct Cli {
    /// TOML config: synthetic-corpus keys for `synth`, pipeline keys otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic corpus and word-embedding table.
    Synth,
    /// Pre-train on block 0, then fine-tune and evaluate every later block.
    Run(RunArgs),
    /// Pre-train on block 0 only and write its checkpoint.
    Pretrain(RunArgs),
    /// Fine-tune one block starting from a checkpoint.
    Finetune(BlockArgs),
    /// Cluster blocks with a checkpoint's encoder and report NMI/AMI.
    Eval(EvalArgs),
    /// Audit the pseudo-labelling signal on labelled open blocks.
    Diagnose(EvalArgs),
    /// Write one block's embeddings as `id<TAB>label<TAB>v1..vd` rows.
    ExportEmbeddings(BlockArgs),
}

#[derive(Args)]
struct Inputs {
    /// Messages, one JSON object per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Word vectors in text format (`count dim` header, then `token v1 .. vd`).
    #[arg(long)]
    embeddings: PathBuf,
}

#[derive(Args)]
struct Switches {
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    /// Drop the orthogonal term (weight 0).
    #[arg(long)]
    no_ortho: bool,
    /// Start each block from the previous block's parameters.
    #[arg(long)]
    chain: bool,
    #[arg(long, value_enum)]
    clustering: Option<ClusteringArg>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    switches: Switches,
}

#[derive(Args)]
struct BlockArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    switches: Switches,
    /// Pipeline checkpoint written by `run`, `pretrain` or `finetune`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    block: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    switches: Switches,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Restrict to one block; all blocks by default.
    #[arg(long)]
    block: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Pairwise,
    Triplet,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusteringArg {
    Kmeans,
    Dbscan,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let Some(out) = cli.out.clone() else {
        Cli::command()
            .error(
                ErrorKind::MissingRequiredArgument,
                "--out <OUT> is required",
            )
            .exit();
    };
    match execute(&cli, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Synth => cmd_synth(cli, out),
        Command::Run(args) => cmd_run(cli, args, out),
        Command::Pretrain(args) => cmd_pretrain(cli, args, out),
        Command::Finetune(args) => cmd_finetune(cli, args, out),
        Command::Eval(args) => cmd_eval(cli, args, out),
        Command::Diagnose(args) => cmd_diagnose(cli, args, out),
        Command::ExportEmbeddings(args) => cmd_export(cli, args, out),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn pipeline_config(cli: &Cli, switches: &Switches) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::from_toml(&read_text(path)?)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(loss) = switches.loss {
        config.loss = match loss {
            LossArg::Pairwise => LossVariant::Pairwise,
            LossArg::Triplet => LossVariant::Triplet,
        };
    }
    if switches.no_ortho {
        config.ortho_weight = 0.0;
    }
    if switches.chain {
        config.chain_params = true;
    }
    if let Some(c) = switches.clustering {
        config.clustering = match c {
            ClusteringArg::Kmeans => Clustering::Kmeans,
            ClusteringArg::Dbscan => Clustering::Dbscan,
        };
    }
    config.validate()?;
    Ok(config)
}

fn load_inputs(inputs: &Inputs) -> Result<(Vec<opensed::ingest::MessageRecord>, EmbeddingTable)> {
    let records = parse_messages(open(&inputs.corpus)?)
        .with_context(|| format!("parsing {}", inputs.corpus.display()))?;
    let table = EmbeddingTable::read(open(&inputs.embeddings)?)
        .with_context(|| format!("parsing {}", inputs.embeddings.display()))?;
    Ok((records, table))
}

/// Checkpoint plus the stream featurised with the checkpoint's featurizer.
fn restore(
    inputs: &Inputs,
    checkpoint: &Path,
    config: &PipelineConfig,
) -> Result<(PipelineCheckpoint, EncoderParams<f64>, PreparedStream)> {
    let ckpt = PipelineCheckpoint::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    if ckpt.config_hash != config.hash() {
        warn!("checkpoint was written under a different config");
    }
    let params = ckpt.params()?;
    let (records, table) = load_inputs(inputs)?;
    let stream =
        PreparedStream::with_featurizer(&records, &table, config, ckpt.featurizer.clone())?;
    Ok((ckpt, params, stream))
}

fn block_at(stream: &PreparedStream, index: usize) -> Result<&Block> {
    match stream.blocks.get(index) {
        Some(b) => Ok(b),
        None => bail!(
            "block {index} does not exist; the corpus has {} blocks",
            stream.blocks.len()
        ),
    }
}

fn selected_blocks(stream: &PreparedStream, block: Option<usize>) -> Result<Vec<&Block>> {
    match block {
        Some(i) => Ok(vec![block_at(stream, i)?]),
        None => Ok(stream.blocks.iter().collect()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut bytes = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut bytes, row)?;
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)?;
    Ok(())
}

fn cmd_synth(cli: &Cli, out: &Path) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => SynthConfig::from_toml(&read_text(path)?)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let records = generate_corpus(&config)?;
    let table = generate_embedding_table(&config)?;
    let mut corpus = Vec::new();
    write_messages(&mut corpus, &records)?;
    write_atomic(&out.join("corpus.jsonl"), &corpus)?;
    let mut vectors = Vec::new();
    table.write(&mut vectors)?;
    write_atomic(&out.join("embeddings.txt"), &vectors)?;
    println!(
        "wrote {} messages from {} events in {} blocks and {} word vectors to {}",
        records.len(),
        config.total_events(),
        config.n_blocks,
        table.len(),
        out.display()
    );
    Ok(())
}

fn cmd_run(cli: &Cli, args: &RunArgs, out: &Path) -> Result<()> {
    let config = pipeline_config(cli, &args.switches)?;
    let (records, table) = load_inputs(&args.inputs)?;
    let stream = PreparedStream::new(&records, &table, &config)?;
    info!(
        "{} blocks, {} known events",
        stream.blocks.len(),
        stream.known_events().len()
    );
    let mut stdout = std::io::stdout().lock();
    let outcome = run_stream(&stream, &config, Some(out), |report| {
        let _ = serde_json::to_writer(&mut stdout, report).map(|_| writeln!(stdout));
    })?;
    write_jsonl(&out.join("audit.jsonl"), &outcome.audit)?;
    write_json(
        &out.join("pretrain_history.json"),
        &outcome.pretrain.history,
    )?;
    Ok(())
}

fn cmd_pretrain(cli: &Cli, args: &RunArgs, out: &Path) -> Result<()> {
    let config = pipeline_config(cli, &args.switches)?;
    let (records, table) = load_inputs(&args.inputs)?;
    let stream = PreparedStream::new(&records, &table, &config)?;
    let pre = pretrain(&stream.blocks[0], &config)?;
    PipelineCheckpoint::new(0, &pre.params, &pre.reference, &stream.featurizer, &config)
        .save(&checkpoint_path(out, 0))?;
    write_json(&out.join("pretrain_history.json"), &pre.history)?;
    println!(
        "best epoch {} of {}; test nmi {:.4} ami {:.4}",
        pre.best_epoch,
        pre.history.len(),
        pre.test_nmi,
        pre.test_ami
    );
    Ok(())
}

fn cmd_finetune(cli: &Cli, args: &BlockArgs, out: &Path) -> Result<()> {
    let config = pipeline_config(cli, &args.switches)?;
    let (ckpt, params, stream) = restore(&args.inputs, &args.checkpoint, &config)?;
    if args.block == 0 {
        bail!("block 0 is the labelled block; use `pretrain` for it");
    }
    let block = block_at(&stream, args.block)?;
    let tuned = finetune_block(block, &params, &ckpt.reference, &config)?;
    PipelineCheckpoint::new(
        block.index,
        &tuned.params,
        &ckpt.reference,
        &stream.featurizer,
        &config,
    )
    .save(&checkpoint_path(out, block.index))?;
    write_jsonl(
        &out.join(format!("audit_block{}.jsonl", block.index)),
        &tuned.audit,
    )?;
    let report = evaluate_block(block, &tuned.params, &stream.known_events(), &config)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs, out: &Path) -> Result<()> {
    let config = pipeline_config(cli, &args.switches)?;
    let (_, params, stream) = restore(&args.inputs, &args.checkpoint, &config)?;
    let known = stream.known_events();
    let mut reports = Vec::new();
    for block in selected_blocks(&stream, args.block)? {
        let emb = ForwardPass::run(&block.graph, &params)?.embeddings;
        let report = evaluate_embeddings(block, &emb, None, &known, &config)?;
        println!("{}", serde_json::to_string(&report)?);
        reports.push(report);
    }
    write_jsonl(&out.join("eval_reports.jsonl"), &reports)
}

#[derive(serde::Serialize)]
struct BlockAudit<T> {
    block: usize,
    #[serde(flatten)]
    audit: T,
}

fn cmd_diagnose(cli: &Cli, args: &EvalArgs, out: &Path) -> Result<()> {
    let config = pipeline_config(cli, &args.switches)?;
    let (ckpt, params, stream) = restore(&args.inputs, &args.checkpoint, &config)?;
    let known = stream.known_events();
    let reference: &ReferenceMatrix<f64> = &ckpt.reference;
    let blocks: Vec<&Block> = match args.block {
        Some(i) => vec![block_at(&stream, i)?],
        None => stream.blocks.iter().skip(1).collect(),
    };
    if blocks.is_empty() {
        bail!("the corpus has no open blocks to diagnose");
    }
    let (mut gaps, mut entropies, mut qualities) = (Vec::new(), Vec::new(), Vec::new());
    for block in blocks {
        let Some(labels) = block.labels() else {
            bail!(
                "block {} has unlabelled messages; diagnostics need ground truth",
                block.index
            );
        };
        let emb = ForwardPass::run(&block.graph, &params)?.embeddings;
        let rsd = rsd_all(&emb, reference, config.rsd_temperature)?;
        let gap = consistency_gap(&emb, &rsd, &labels)?;
        let entropy = entropy_groups(&rsd, &labels, &known);
        let quality = pseudo_label_quality(&candidate_pairs(&rsd), &labels, 10);
        println!(
            "block {}: consistency gap rsd {:.4} raw {:.4}; entropy known {:.4} novel {:.4} bits; |C - 0.5| correct {:.4} incorrect {:.4}",
            block.index,
            gap.rsd_gap,
            gap.raw_gap,
            entropy.known_mean,
            entropy.novel_mean,
            quality.correct_margin,
            quality.incorrect_margin
        );
        gaps.push(BlockAudit {
            block: block.index,
            audit: gap,
        });
        entropies.push(BlockAudit {
            block: block.index,
            audit: entropy,
        });
        qualities.push(BlockAudit {
            block: block.index,
            audit: quality,
        });
    }
    write_json(&out.join("consistency_gap.json"), &gaps)?;
    write_json(&out.join("entropy_groups.json"), &entropies)?;
    write_json(&out.join("quality_histogram.json"), &qualities)
}

fn cmd_export(cli: &Cli, args: &BlockArgs, out: &Path) -> Result<()> {
    let config = pipeline_config(cli, &args.switches)?;
    let (_, params, stream) = restore(&args.inputs, &args.checkpoint, &config)?;
    let block = block_at(&stream, args.block)?;
    let emb = ForwardPass::run(&block.graph, &params)?.embeddings;
    let path = out.join(format!("embeddings_block{}.tsv", block.index));
    let mut rows = BufWriter::new(Vec::new());
    for (record, row) in block.records.iter().zip(emb.rows()) {
        let label = record
            .event_id
            .map_or_else(|| "-".to_string(), |l| l.to_string());
        write!(rows, "{}\t{label}", record.id)?;
        for v in row {
            write!(rows, "\t{v}")?;
        }
        writeln!(rows)?;
    }
    write_atomic(&path, &rows.into_inner()?)?;
    println!(
        "wrote {} rows of width {} to {}",
        block.records.len(),
        emb.ncols(),
        path.display()
    );
    Ok(())
}
