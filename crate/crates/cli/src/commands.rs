use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use gnncl::dataset::{generate_synthetic, load_graph, save_graph, MultiRelationGraph, SyntheticConfig};
use gnncl::metrics::{MetricsReport, DEFAULT_THRESHOLD};
use gnncl::trainer::{epoch_csv_header, epoch_csv_row, prepare_graph, Checkpoint, TrainConfig, Trainer};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Layered;
use crate::{CmdResult, EvaluateArgs, Failure, GenerateArgs, ModelArgs, SplitChoice, SweepArgs, SweepParam, TrainArgs};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const GENERATION_FILE: &str = "generation.json";

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn generate(args: GenerateArgs) -> CmdResult {
    let mut layered = Layered::load(args.config.as_deref()).map_err(usage)?;
    let mut config = SyntheticConfig::default();
    let mut resolve = || -> Result<()> {
        if let Some(v) = layered.get("nodes", args.nodes)? {
            config.num_nodes = v;
        }
        if let Some(v) = layered.get("relations", args.relations)? {
            config.relation_count = v;
        }
        if let Some(v) = layered.get("fraud-ratio", args.fraud_ratio)? {
            config.fraud_ratio = v;
        }
        if let Some(v) = layered.get("camouflage", args.camouflage)? {
            config.camouflage_rate = v;
        }
        if let Some(v) = layered.get("feature-dim", args.feature_dim)? {
            config.feature_dim = v;
        }
        if let Some(v) = layered.get("intra", args.intra)? {
            config.intra_class_prob = v;
        }
        if let Some(v) = layered.get("avg-degree", args.avg_degree)? {
            config.avg_degree = v;
        }
        if let Some(v) = layered.get("seed", args.seed)? {
            config.seed = v;
        }
        Ok(())
    };
    resolve().map_err(usage)?;
    layered.finish().map_err(usage)?;
    config.validate().map_err(usage)?;

    let graph = generate_synthetic(&config).map_err(anyhow::Error::from)?;
    save_graph(&graph, &args.out).map_err(anyhow::Error::from)?;

    #[derive(Serialize)]
    struct Generation<'a> {
        generator: &'static str,
        config: &'a SyntheticConfig,
        num_fraud: usize,
        total_edges: usize,
    }
    write_json(
        &args.out.join(GENERATION_FILE),
        &Generation {
            generator: concat!("gnncl ", env!("CARGO_PKG_VERSION")),
            config: &config,
            num_fraud: graph.num_fraud(),
            total_edges: graph.total_edges(),
        },
    )?;
    println!(
        "wrote {} nodes, {} fraud, {} edges over {} relations to {}",
        graph.num_nodes(),
        graph.num_fraud(),
        graph.total_edges(),
        graph.relations().len(),
        args.out.display()
    );
    Ok(())
}

/// Defaults, then the config file, then flags.
fn resolve_config(args: &ModelArgs) -> CmdResult<TrainConfig> {
    let mut layered = Layered::load(args.config.as_deref()).map_err(usage)?;
    let mut c = TrainConfig::default();
    let mut resolve = || -> Result<()> {
        if let Some(v) = layered.get("seed", args.seed)? {
            c.seed = v;
        }
        if let Some(v) = layered.get("model", args.model)? {
            c.model = v;
        }
        if let Some(v) = layered.get("epochs", args.epochs)? {
            c.epochs = v;
        }
        if let Some(v) = layered.get("layers", args.layers)? {
            c.layers = v;
        }
        if let Some(v) = layered.get("lambda", args.lambda)? {
            c.lambda = v;
        }
        if let Some(v) = layered.get("tau", args.tau)? {
            c.tau = v;
        }
        if let Some(v) = layered.get("lr", args.lr)? {
            c.learning_rate = v;
        }
        if let Some(v) = layered.get("batch-size", args.batch_size)? {
            c.batch_size = v;
        }
        if let Some(v) = layered.get("init-threshold", args.init_threshold)? {
            c.init_threshold = v;
        }
        if let Some(v) = layered.get("hidden-dim", args.hidden_dim)? {
            c.hidden_dim = v;
        }
        if let Some(v) = layered.get("train-ratio", args.train_ratio)? {
            c.train_ratio = v;
        }
        if let Some(v) = layered.get("cell", args.cell)? {
            c.head.cell = v;
        }
        c.fixed_weight = layered.get("fixed-weight", args.fixed_weight)?;
        c.no_reinforcer = layered.switch("no-reinforcer", args.no_reinforcer)?;
        c.standardize_features = layered.switch("standardize-features", args.standardize_features)?;
        Ok(())
    };
    resolve().map_err(usage)?;
    layered.finish().map_err(usage)?;
    c.validate().map_err(usage)?;
    Ok(c)
}

/// SHA-256 over every file of a dataset directory, in name order.
fn fingerprint(dir: &Path) -> Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    names.retain(|p| p.is_file());
    names.sort();
    let mut hasher = Sha256::new();
    for path in names {
        let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

fn load_prepared(dir: &Path, config: &TrainConfig) -> Result<MultiRelationGraph> {
    let mut graph = load_graph(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    prepare_graph(&mut graph, config);
    Ok(graph)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Vec<String>,
    config: &'a TrainConfig,
    dataset: DatasetRef<'a>,
    timestamp_unix: u64,
    out_dir: &'a Path,
    version: &'static str,
}

#[derive(Clone, Serialize)]
struct DatasetRef<'a> {
    path: &'a Path,
    sha256: String,
}

/// Writes the manifest, trains with per-epoch CSV rows, then saves the checkpoint.
fn train_run(graph: &MultiRelationGraph, config: TrainConfig, dataset: DatasetRef, out: &Path) -> Result<Trainer> {
    create_dir(out)?;
    let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    write_json(
        &out.join(MANIFEST_FILE),
        &Manifest {
            command: std::env::args().collect(),
            config: &config,
            dataset,
            timestamp_unix,
            out_dir: out,
            version: env!("CARGO_PKG_VERSION"),
        },
    )?;

    let mut trainer = Trainer::new(config, graph)?;
    let csv_path = out.join(EPOCHS_FILE);
    let mut csv = BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
    trainer.fit(graph, |log| {
        let io = |e: std::io::Error| gnncl::Error::Io { path: csv_path.clone(), source: e };
        if log.epoch == 1 {
            writeln!(csv, "{}", epoch_csv_header(log)).map_err(io)?;
        }
        writeln!(csv, "{}", epoch_csv_row(log)).map_err(io)?;
        csv.flush().map_err(io)
    })?;
    trainer.checkpoint().save(out.join(CHECKPOINT_FILE))?;
    Ok(trainer)
}

pub fn train(args: TrainArgs) -> CmdResult {
    let config = resolve_config(&args.model)?;
    let graph = load_prepared(&args.data, &config)?;
    let dataset = DatasetRef { path: &args.data, sha256: fingerprint(&args.data)? };
    let trainer = train_run(&graph, config, dataset, &args.out)?;
    let m = trainer.evaluate_test(&graph)?;
    println!(
        "trained {} epochs ({}); test {}; outputs in {}",
        trainer.epochs_completed(),
        trainer.config().model,
        summary(&m),
        args.out.display()
    );
    Ok(())
}

fn summary(m: &MetricsReport) -> String {
    let auc = m.auc.map_or_else(|| "undefined".to_string(), |a| format!("{a:.4}"));
    format!(
        "auc={auc} f={:.4} recall={:.4} precision={:.4} accuracy={:.4} (tp={} tn={} fp={} fn={})",
        m.f, m.recall, m.precision, m.accuracy, m.tp, m.tn, m.fp, m.fn_
    )
}

pub fn evaluate(args: EvaluateArgs) -> CmdResult {
    let ckpt_path = if args.checkpoint.is_dir() { args.checkpoint.join(CHECKPOINT_FILE) } else { args.checkpoint.clone() };
    let ckpt = Checkpoint::load(&ckpt_path).with_context(|| format!("loading {}", ckpt_path.display()))?;
    let graph = load_prepared(&args.data, &ckpt.config)?;
    let trainer = Trainer::from_checkpoint(&ckpt, &graph)
        .with_context(|| format!("checkpoint {} does not fit dataset {}", ckpt_path.display(), args.data.display()))?;

    let (split_name, nodes) = match args.split {
        SplitChoice::Train => ("train", &trainer.split().train),
        SplitChoice::Test => ("test", &trainer.split().test),
    };
    let scores = trainer.predict(&graph, nodes)?;
    let labels: Vec<u8> = nodes.iter().map(|&v| graph.labels()[v]).collect();
    let metrics = gnncl::metrics::compute_metrics(&scores, &labels, DEFAULT_THRESHOLD)?;

    let out = match &args.out {
        Some(dir) => dir.clone(),
        None => ckpt_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !out.as_os_str().is_empty() {
        create_dir(&out)?;
    }

    #[derive(Serialize)]
    struct Report<'a> {
        #[serde(flatten)]
        metrics: &'a MetricsReport,
        split: &'a str,
        nodes: usize,
        threshold: f64,
        checkpoint: &'a Path,
        dataset: DatasetRef<'a>,
        config: &'a TrainConfig,
    }
    write_json(
        &out.join(METRICS_FILE),
        &Report {
            metrics: &metrics,
            split: split_name,
            nodes: nodes.len(),
            threshold: DEFAULT_THRESHOLD,
            checkpoint: &ckpt_path,
            dataset: DatasetRef { path: &args.data, sha256: fingerprint(&args.data)? },
            config: trainer.config(),
        },
    )?;
    if args.dump_scores {
        let path = out.join(SCORES_FILE);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(w, "node_id,label,score")?;
        for ((v, y), s) in nodes.iter().zip(&labels).zip(&scores) {
            writeln!(w, "{v},{y},{s}")?;
        }
        w.flush()?;
    }
    println!("{split_name} ({} nodes): {}", nodes.len(), summary(&metrics));
    Ok(())
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::TrainRatio => "train-ratio",
            SweepParam::Tau => "tau",
            SweepParam::InitThreshold => "init-threshold",
        }
    }

    fn apply(self, config: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Lambda => config.lambda = value,
            SweepParam::TrainRatio => config.train_ratio = value,
            SweepParam::Tau => config.tau = value,
            SweepParam::InitThreshold => config.init_threshold = value,
        }
    }
}

struct SweepRow {
    value: f64,
    seed: u64,
    metrics: MetricsReport,
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let base = resolve_config(&args.model)?;
    let mut runs = Vec::new();
    for &value in &args.values {
        for &seed in &args.seeds {
            let mut config = base.clone();
            args.param.apply(&mut config, value);
            config.seed = seed;
            config
                .validate()
                .map_err(|e| usage(anyhow!("{}={value}: {e}", args.param.name())))?;
            let dir = args.out.join(format!("{}={value}_seed={seed}", args.param.name()));
            runs.push((value, seed, config, dir));
        }
    }
    // Standardization is a dataset transform shared by every run.
    let graph = load_prepared(&args.data, &base)?;
    let sha256 = fingerprint(&args.data)?;
    create_dir(&args.out)?;

    let rows: Vec<SweepRow> = runs
        .into_par_iter()
        .map(|(value, seed, config, dir)| {
            let dataset = DatasetRef { path: &args.data, sha256: sha256.clone() };
            let trainer = train_run(&graph, config, dataset, &dir).with_context(|| format!("run {}", dir.display()))?;
            let metrics = trainer.evaluate_test(&graph)?;
            Ok(SweepRow { value, seed, metrics })
        })
        .collect::<Result<_>>()?;

    let path = args.out.join(SWEEP_FILE);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{},seed,auc,f,recall", args.param.name())?;
    for r in &rows {
        let auc = r.metrics.auc.map_or_else(String::new, |a| a.to_string());
        writeln!(w, "{},{},{auc},{},{}", r.value, r.seed, r.metrics.f, r.metrics.recall)?;
    }
    w.flush()?;
    println!("{} runs written to {}", rows.len(), path.display());
    Ok(())
}
