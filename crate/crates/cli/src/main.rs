use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hyperalign_core::data::{
    caption_noise_metric, grid_sample, noise_rate_for_target, proposal_sample, read_records,
    synth_corpus, write_records, BBox, CaptionRecord, ConceptTree, SynonymMap,
    DEFAULT_NMS_THRESHOLD,
};
use hyperalign_core::train::{
    export_embeddings, hierarchy_report, run_experiment, Dataset, ExperimentConfig, ModelState,
};
use hyperalign_core::Error;
use serde::Serialize;

const CORPUS_FILE: &str = "corpus.jsonl";
const SYNONYMS_FILE: &str = "synonyms.json";
const TREE_FILE: &str = "tree.json";
const METRICS_FILE: &str = "metrics.jsonl";
const MODEL_FILE: &str = "model.json";

#[derive(Parser)]
#[command(name = "hyperalign", version, about = "Hyperbolic region-caption alignment experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic caption corpus, its synonym map, and concept tree.
    GenCorpus(GenCorpusArgs),
    /// Train a model and write metrics and the final state.
    Train(TrainArgs),
    /// Evaluate a saved model on the held-out split of a corpus.
    Eval(ModelArgs),
    /// Print the caption noise percentage of a corpus.
    NoiseMetric(CorpusArgs),
    /// Print grid regions and, given proposals, the NMS-filtered top proposals.
    SampleRegions(SampleArgs),
    /// Write caption and object embeddings of a corpus as JSON lines.
    ExportEmbeddings(ExportArgs),
}

/// Flags mirroring the experiment configuration; each overrides `--config`.
#[derive(Args, Default)]
struct ConfigArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    heads: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    cone_k: Option<String>,
    #[arg(long)]
    tau_init: Option<String>,
    #[arg(long)]
    curvature_init: Option<String>,
    #[arg(long)]
    noise_rate: Option<String>,
    #[arg(long)]
    grid_k: Option<String>,
    #[arg(long)]
    scenes: Option<String>,
    /// Comma-separated branching factor per tree level.
    #[arg(long)]
    branching: Option<String>,
    #[arg(long)]
    novel_every: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_file_text(&fs::read_to_string(p)?)?;
        }
        let flags = [
            ("objective", &self.objective),
            ("dim", &self.dim),
            ("heads", &self.heads),
            ("batch", &self.batch),
            ("steps", &self.steps),
            ("lr", &self.lr),
            ("gamma", &self.gamma),
            ("cone-k", &self.cone_k),
            ("tau-init", &self.tau_init),
            ("curvature-init", &self.curvature_init),
            ("noise-rate", &self.noise_rate),
            ("grid-k", &self.grid_k),
            ("scenes", &self.scenes),
            ("branching", &self.branching),
            ("novel-every", &self.novel_every),
            ("eval-every", &self.eval_every),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenCorpusArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Calibrate the noise rate so the corpus noise metric lands on this percentage.
    #[arg(long)]
    target_noise: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Corpus inputs. Without `--tree`, the tree is rebuilt from the config.
#[derive(Args)]
struct CorpusPaths {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long)]
    tree: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    paths: CorpusPaths,
    /// Defaults to `out-dir` from the config file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    synonyms: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    synonyms: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 3)]
    grid_k: usize,
    /// JSON lines of scored boxes.
    #[arg(long)]
    proposals: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    #[arg(long, default_value_t = DEFAULT_NMS_THRESHOLD)]
    iou_threshold: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<CaptionRecord>, Error> {
    read_records(BufReader::new(File::open(path)?))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn gen_corpus(args: &GenCorpusArgs) -> Result<(), Error> {
    let mut cfg = args.config.resolve()?;
    let tree = cfg.tree()?;
    if let Some(target) = args.target_noise {
        let (rho, _) = noise_rate_for_target(&tree, &cfg.corpus_config(), target)?;
        cfg.noise_rate = rho;
    }
    let corpus = synth_corpus(&tree, &cfg.corpus_config())?;
    let noise = caption_noise_metric(&corpus.records, &corpus.synonyms)?;
    fs::create_dir_all(&args.out_dir)?;
    write_records(
        &corpus.records,
        BufWriter::new(File::create(args.out_dir.join(CORPUS_FILE))?),
    )?;
    write_json(&args.out_dir.join(SYNONYMS_FILE), &corpus.synonyms)?;
    write_json(&args.out_dir.join(TREE_FILE), &tree)?;
    print_json(&serde_json::json!({
        "records": corpus.records.len(),
        "noise_rate": cfg.noise_rate,
        "noise_percent": noise,
    }))
}

fn load_inputs(cfg: &ExperimentConfig, paths: &CorpusPaths) -> Result<(ConceptTree, Vec<CaptionRecord>, SynonymMap), Error> {
    let tree_path = paths.tree.as_ref().or(cfg.tree.as_ref());
    let corpus_path = paths.corpus.as_ref().or(cfg.corpus.as_ref());
    let synonyms_path = paths.synonyms.as_ref().or(cfg.synonyms.as_ref());
    let tree = match tree_path {
        Some(p) => {
            let t: ConceptTree = read_json(p)?;
            t.validate()?;
            t
        }
        None => cfg.tree()?,
    };
    match (corpus_path, synonyms_path) {
        (Some(c), Some(s)) => {
            let syn: SynonymMap = read_json(s)?;
            syn.validate()?;
            Ok((tree, read_corpus(c)?, syn))
        }
        (None, None) => {
            let corpus = synth_corpus(&tree, &cfg.corpus_config())?;
            Ok((tree, corpus.records, corpus.synonyms))
        }
        _ => Err(Error::Invalid {
            field: "corpus",
            reason: "--corpus and --synonyms must be given together".into(),
        }),
    }
}

fn train(args: &TrainArgs) -> Result<(), Error> {
    let cfg = args.config.resolve()?;
    let (tree, records, syn) = load_inputs(&cfg, &args.paths)?;
    let out_dir = args.out_dir.as_ref().or(cfg.out_dir.as_ref()).ok_or(Error::Invalid {
        field: "out_dir",
        reason: "required, as --out-dir or in the config file".into(),
    })?;
    let out = run_experiment(&cfg, &tree, &records, &syn)?;
    fs::create_dir_all(out_dir)?;
    write_lines(&out_dir.join(METRICS_FILE), &out.metrics)?;
    write_json(&out_dir.join(MODEL_FILE), &out.state)?;
    match out.metrics.last() {
        Some(m) => print_json(m),
        None => Ok(()),
    }
}

fn load_model(args: &ModelArgs) -> Result<(ModelState, Dataset), Error> {
    let state: ModelState = read_json(&args.model)?;
    state.config.validate()?;
    let syn: SynonymMap = read_json(&args.synonyms)?;
    syn.validate()?;
    let records = read_corpus(&args.corpus)?;
    let data = Dataset::build(&state, &records, &syn)?;
    Ok((state, data))
}

fn eval(args: &ModelArgs) -> Result<(), Error> {
    let (state, data) = load_model(args)?;
    let recall = hyperalign_core::train::evaluate_retrieval(&state, &data.held_out)?;
    let h = hierarchy_report(&state, &data.held_out)?;
    print_json(&serde_json::json!({
        "objective": state.config.objective,
        "held_out_pairs": data.held_out.len(),
        "recall_at_1": recall,
        "caption_norm": h.caption_norm,
        "object_norm": h.object_norm,
        "containment": h.containment,
    }))
}

fn noise_metric(args: &CorpusArgs) -> Result<(), Error> {
    let syn: SynonymMap = read_json(&args.synonyms)?;
    syn.validate()?;
    let records = read_corpus(&args.corpus)?;
    println!("{:?}", caption_noise_metric(&records, &syn)?);
    Ok(())
}

#[derive(Serialize)]
struct RegionLine {
    source: &'static str,
    #[serde(flatten)]
    bbox: BBox,
}

fn sample_regions(args: &SampleArgs) -> Result<(), Error> {
    let mut lines: Vec<RegionLine> = grid_sample(args.grid_k)?
        .into_iter()
        .map(|bbox| RegionLine { source: "grid", bbox })
        .collect();
    if let Some(p) = &args.proposals {
        let mut props = Vec::new();
        for line in BufReader::new(File::open(p)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                let b: BBox = serde_json::from_str(&line)?;
                b.validate()?;
                props.push(b);
            }
        }
        lines.extend(
            proposal_sample(&props, args.top_n, args.iou_threshold)?
                .into_iter()
                .map(|bbox| RegionLine { source: "proposal", bbox }),
        );
    }
    for l in &lines {
        print_json(l)?;
    }
    Ok(())
}

fn export(args: &ExportArgs) -> Result<(), Error> {
    let (state, data) = load_model(&args.model)?;
    let pairs: Vec<_> = data.train.iter().chain(&data.held_out).cloned().collect();
    let rows = export_embeddings(&state, &pairs)?;
    write_lines(&args.out, &rows)?;
    print_json(&serde_json::json!({ "rows": rows.len() }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::NoiseMetric(a) => noise_metric(a),
        Command::SampleRegions(a) => sample_regions(a),
        Command::ExportEmbeddings(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.to_string(), "kind": e.kind() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
