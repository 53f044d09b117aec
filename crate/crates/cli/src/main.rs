//! `mvr`: synthetic data, training, evaluation, sweeps and the HTTP service.
//!
//! Every command accepts `--config FILE` (TOML). Values come from built-in
//! defaults, then the command's section of that file (`[synth]`, `[split]`,
//! `[model]` and `[train]`, `[eval]`), then flags. Each run prints a JSON
//! record with the effective config and a reproducibility stanza, and
//! writes the same record next to its artifacts. Failures print one JSON
//! line `{"error":{"kind":..,"message":..}}` to stderr and exit 1; usage
//! errors exit 2.

mod config;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use config::{config_hash, layered, ConfigFile, Flags};
use mvr_core::checkpoint::{resolve_checkpoint_path, Checkpoint, CHECKPOINT_VERSION};
use mvr_core::data::{
    generate_synthetic, resplit, Dataset, GenreTaxonomy, Split, SplitFractions, SyntheticConfig, FEATURE_VERSION,
    MANIFEST_VERSION,
};
use mvr_core::losses::LossWeights;
use mvr_core::model::{parameter_group, ModelConfig};
use mvr_core::retrieval::{
    alpha_sweep, embed_corpus, optimal_alpha_from_series, EvalOptions, Protocol, RetrievalQuery, RetrievalReport,
    SeriesDirection,
};
use mvr_core::trainer::{train, TrainConfig};
use mvr_core::Direction;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub struct CliError {
    kind: String,
    message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<mvr_core::Error> for CliError {
    fn from(e: mvr_core::Error) -> Self {
        CliError::new(e.kind(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::new("json", e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mvr", version, about = "Controllable music/video retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic paired dataset.
    Synth(SynthArgs),
    /// Re-split a dataset into train/val/test by class.
    Split(SplitArgs),
    /// Train a model and keep the best-validation checkpoint.
    Train(TrainArgs),
    /// Evaluate retrieval on one split, or rank a single query.
    Eval(EvalArgs),
    /// Sweep alpha on one split and select the optimal alpha per protocol.
    Sweep(EvalArgs),
    /// Serve the HTTP retrieval API.
    Serve(ServeArgs),
    /// Print checkpoint and dataset metadata.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML config file; its [synth] section is read.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Items per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Audio feature dimension.
    #[arg(long)]
    audio_dim: Option<usize>,
    /// Video feature dimension.
    #[arg(long)]
    video_dim: Option<usize>,
    /// Stacked audio layers per item (0 = one plain vector).
    #[arg(long)]
    audio_layers: Option<usize>,
    /// Dimension of the latent pair signal.
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Pair correlation rho in [0, 1].
    #[arg(long)]
    rho: Option<f64>,
    /// Class separation sigma_c >= 0.
    #[arg(long)]
    sep: Option<f64>,
    /// Extra isotropic noise scale.
    #[arg(long)]
    noise: Option<f64>,
    #[command(flatten)]
    fractions: FractionArgs,
    /// Generator and split seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Taxonomy JSON whose class names label the synthetic classes.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FractionArgs {
    /// Training fraction.
    #[arg(long)]
    train_frac: Option<f64>,
    /// Validation fraction.
    #[arg(long)]
    val_frac: Option<f64>,
    /// Test fraction.
    #[arg(long)]
    test_frac: Option<f64>,
}

impl FractionArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::default();
        f.set("train", self.train_frac).set("val", self.val_frac).set("test", self.test_frac);
        f
    }
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// TOML config file; its [split] section is read.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset directory.
    #[arg(long, visible_alias = "manifest")]
    data: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    fractions: FractionArgs,
    /// Shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// TOML config file; its [model] and [train] sections are read.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, visible_alias = "manifest")]
    data: PathBuf,
    /// Output directory for best.ckpt and logs.
    #[arg(long)]
    out: PathBuf,
    /// Model size preset before overrides.
    #[arg(long, value_parser = ["desk", "full"], default_value = "desk")]
    preset: String,
    /// Joint embedding width.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Dropout probability in [0, 1).
    #[arg(long)]
    dropout: Option<f64>,
    /// Epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Decoupled weight decay.
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Training alpha in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Contrastive temperature.
    #[arg(long)]
    temperature: Option<f64>,
    /// Master seed (initialization, sampling, dropout).
    #[arg(long)]
    seed: Option<u64>,
    /// Loss terms to train: all, ssl (self-supervised only) or sup (supervised only).
    #[arg(long, value_parser = ["all", "ssl", "sup"])]
    objective: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// TOML config file; its [eval] section is read.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint file, its path without `.ckpt`, or a training output directory.
    #[arg(long, visible_alias = "checkpoint")]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long, visible_alias = "manifest")]
    data: PathBuf,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split to evaluate (eval: test, sweep: val).
    #[arg(long)]
    split: Option<Split>,
    /// Alphas as start:end:step or a comma list.
    #[arg(long)]
    alphas: Option<String>,
    /// Comma list of protocols: ssl, genre.
    #[arg(long)]
    protocol: Option<String>,
    /// Comma list of K values.
    #[arg(long)]
    ks: Option<String>,
    /// Pair-protocol subset size (default: whole split).
    #[arg(long)]
    subset_size: Option<usize>,
    /// Number of disjoint pair-protocol subsets.
    #[arg(long)]
    subsets: Option<usize>,
    /// Seed of the subset shuffle.
    #[arg(long)]
    subset_seed: Option<u64>,
    /// Drop the query's own pair from genre candidates.
    #[arg(long)]
    exclude_self: bool,
    /// Rank one query id instead of evaluating.
    #[arg(long)]
    query: Option<String>,
    /// Query direction: video_to_audio or audio_to_video.
    #[arg(long, default_value = "video_to_audio")]
    direction: Direction,
    /// Query alpha.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Number of results for a query.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Checkpoint file, its path without `.ckpt`, or a training output directory.
    #[arg(long, visible_alias = "checkpoint")]
    ckpt: PathBuf,
    /// Dataset directory.
    #[arg(long, visible_alias = "manifest")]
    data: PathBuf,
    /// Serve one split only (default: all items).
    #[arg(long)]
    split: Option<Split>,
    /// Bind address.
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Port.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Allowed CORS origin (default: any).
    #[arg(long)]
    cors_origin: Option<String>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Checkpoint file, its path without `.ckpt`, or a training output directory.
    #[arg(long, visible_alias = "checkpoint")]
    ckpt: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, visible_alias = "manifest")]
    data: Option<PathBuf>,
}

/// Seed, config hash and format versions of one run.
#[derive(Clone, Debug, Serialize)]
struct Reproducibility {
    seed: u64,
    config_sha256: String,
    versions: Value,
}

fn reproducibility<C: Serialize>(seed: u64, config: &C) -> Reproducibility {
    Reproducibility {
        seed,
        config_sha256: config_hash(config),
        versions: json!({
            "mvr": VERSION,
            "checkpoint_format": CHECKPOINT_VERSION,
            "manifest_format": MANIFEST_VERSION,
            "feature_format": FEATURE_VERSION,
        }),
    }
}

/// Prints the run record and, with an output directory, writes it there.
fn emit<C: Serialize>(command: &str, seed: u64, config: &C, outputs: Value, out: Option<&Path>) -> CliResult<()> {
    let record = json!({
        "command": command,
        "reproducibility": reproducibility(seed, config),
        "config": config,
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&record)? + "\n";
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{command}_run.json")), &text)?;
    }
    say(&text)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let mut flags = Flags::default();
    flags
        .set("num_classes", a.classes)
        .set("items_per_class", a.per_class)
        .set("audio_dim", a.audio_dim)
        .set("video_dim", a.video_dim)
        .set("audio_layers", a.audio_layers)
        .set("latent_dim", a.latent_dim)
        .set("pair_correlation", a.rho)
        .set("class_separation", a.sep)
        .set("noise", a.noise)
        .set("seed", a.seed)
        .nest("fractions", a.fractions.flags());
    let cfg: SyntheticConfig = layered(&SyntheticConfig::default(), &file, "synth", flags)?;
    let mut data = generate_synthetic(&cfg)?;
    if let Some(path) = &a.taxonomy {
        let t = GenreTaxonomy::load(path).map_err(|e| at_path(e, path))?;
        if t.num_classes() < cfg.num_classes {
            return Err(CliError::new(
                "config",
                format!("taxonomy has {} classes, need {}", t.num_classes(), cfg.num_classes),
            ));
        }
        data.manifest.header.class_names = t.class_names[..cfg.num_classes].to_vec();
    }
    data.save(&a.out)?;
    let h = &data.manifest.header;
    let outputs = json!({ "dir": a.out, "items": data.len(), "split_counts": h.split_counts, "class_names": h.class_names });
    emit("synth", cfg.seed, &cfg, outputs, Some(&a.out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SplitConfig {
    fractions: SplitFractions,
    seed: u64,
}

fn split(a: SplitArgs) -> CliResult<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let mut flags = Flags::default();
    flags.set("seed", a.seed).nest("fractions", a.fractions.flags());
    let defaults = SplitConfig {
        fractions: SplitFractions::default(),
        seed: 0,
    };
    let cfg: SplitConfig = layered(&defaults, &file, "split", flags)?;
    let mut data = load_dataset(&a.data)?;
    let warnings = resplit(&mut data.manifest, cfg.fractions, cfg.seed)?;
    data.save(&a.out)?;
    let outputs = json!({ "dir": a.out, "split_counts": data.manifest.header.split_counts, "warnings": warnings });
    emit("split", cfg.seed, &cfg, outputs, Some(&a.out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainRunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

fn train_cmd(a: TrainArgs) -> CliResult<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let data = load_dataset(&a.data)?;
    let h = &data.manifest.header;
    let preset = if a.preset == "full" { ModelConfig::full() } else { ModelConfig::desk() };
    let model_defaults = ModelConfig {
        audio_input_dim: h.audio_dim,
        video_input_dim: h.video_dim,
        num_audio_layers: h.audio_layers,
        ..preset
    };
    let mut mf = Flags::default();
    mf.set("embed_dim", a.embed_dim).set("dropout_p", a.dropout);
    let model: ModelConfig = layered(&model_defaults, &file, "model", mf)?;
    let mut tf = Flags::default();
    tf.set("epochs", a.epochs)
        .set("batch_size", a.batch_size)
        .set("learning_rate", a.lr)
        .set("weight_decay", a.weight_decay)
        .set("train_alpha", a.alpha)
        .set("temperature", a.temperature)
        .set("seed", a.seed);
    let weights = a.objective.as_deref().map(|o| match o {
        "ssl" => LossWeights::self_supervised(),
        "sup" => LossWeights::supervised(),
        _ => LossWeights::default(),
    });
    tf.set("loss_weights", weights);
    let mut tc: TrainConfig = layered(&TrainConfig::default(), &file, "train", tf)?;
    tc.checkpoint_dir = Some(a.out.clone());
    let out = train::<f64>(&data, &model, &tc)?;
    let cfg = TrainRunConfig { model, train: tc };
    let best = out.log.best();
    let outputs = json!({
        "checkpoint": a.out.join(mvr_core::checkpoint::BEST_CHECKPOINT),
        "best_epoch": out.log.best_epoch,
        "first_val_total": out.log.epochs[0].val.total,
        "best_val": best.val,
    });
    emit("train", cfg.train.seed, &cfg, outputs, Some(&a.out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EvalConfig {
    split: Split,
    alphas: Vec<f64>,
    protocols: Vec<Protocol>,
    ks: Vec<usize>,
    subset_size: Option<usize>,
    subset_count: usize,
    subset_seed: u64,
    exclude_self: bool,
}

/// `start:end:step` or `a,b,c`; grid values are rounded to 12 decimals so
/// that `0:1:0.1` gives exactly 0.3 rather than 0.30000000000000004.
fn parse_alphas(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::new("config", format!("invalid alphas {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !(step > 0.0) || end < start {
                return Err(bad());
            }
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
        }
        [list] => list.split(',').map(num).collect(),
        _ => Err(bad()),
    }
}

fn parse_list<T: std::str::FromStr>(spec: &str, what: &str) -> CliResult<Vec<T>> {
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::new("config", format!("invalid {what} {s:?}"))))
        .collect()
}

fn eval_config(a: &EvalArgs, default_split: Split) -> CliResult<EvalConfig> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let defaults = EvalConfig {
        split: default_split,
        alphas: mvr_core::retrieval::alpha_grid(),
        protocols: Protocol::BOTH.to_vec(),
        ks: vec![1, 10],
        subset_size: None,
        subset_count: 1,
        subset_seed: 0,
        exclude_self: false,
    };
    let mut flags = Flags::default();
    flags
        .set("split", a.split)
        .set("alphas", a.alphas.as_deref().map(parse_alphas).transpose()?)
        .set("protocols", a.protocol.as_deref().map(|p| parse_list::<Protocol>(p, "protocol")).transpose()?)
        .set("ks", a.ks.as_deref().map(|k| parse_list::<usize>(k, "K")).transpose()?)
        .set("subset_size", a.subset_size)
        .set("subset_count", a.subsets)
        .set("subset_seed", a.subset_seed)
        .set("exclude_self", a.exclude_self.then_some(true));
    let cfg: EvalConfig = layered(&defaults, &file, "eval", flags)?;
    if cfg.alphas.iter().any(|x| !(0.0..=1.0).contains(x)) || cfg.alphas.is_empty() {
        return Err(CliError::new("config", "alphas must be non-empty and within [0, 1]"));
    }
    Ok(cfg)
}

/// Names the file in io and json errors, which otherwise do not.
fn at_path(e: mvr_core::Error, path: &Path) -> CliError {
    let kind = e.kind();
    match kind {
        "io" | "json" => CliError::new(kind, format!("{}: {e}", path.display())),
        _ => e.into(),
    }
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint<f64>> {
    let path = resolve_checkpoint_path(path);
    Checkpoint::<f64>::load(&path).map_err(|e| at_path(e, &path))
}

fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    Dataset::load(dir).map_err(|e| at_path(e, dir))
}

/// Writes to stdout; a closed pipe (`mvr ... | head`) is not an error.
fn say(text: &str) -> CliResult<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load_inputs(ckpt: &Path, data: &Path) -> CliResult<(Checkpoint<f64>, Dataset)> {
    let checkpoint = load_checkpoint(ckpt)?;
    let data = load_dataset(data)?;
    checkpoint.check_compatible(&data.manifest.header)?;
    Ok((checkpoint, data))
}

fn report_for(cfg: &EvalConfig, checkpoint: &Checkpoint<f64>, data: &Dataset) -> CliResult<RetrievalReport> {
    let corpus = embed_corpus(checkpoint, data, cfg.split)?;
    let options = EvalOptions {
        ks: cfg.ks.clone(),
        subset_size: cfg.subset_size,
        subset_count: cfg.subset_count,
        subset_seed: cfg.subset_seed,
        exclude_self: cfg.exclude_self,
    };
    Ok(alpha_sweep(&corpus, &cfg.alphas, &cfg.protocols, &options)?)
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let cfg = eval_config(&a, Split::Test)?;
    let (checkpoint, data) = load_inputs(&a.ckpt, &a.data)?;
    if let Some(id) = &a.query {
        let corpus = embed_corpus(&checkpoint, &data, cfg.split)?;
        let query = RetrievalQuery {
            query_id: id.clone(),
            direction: a.direction,
            alpha: a.alpha,
            k: a.k,
        };
        let body = serde_json::to_string(&mvr_service::retrieve(&corpus, &query)?)?;
        if let Some(dir) = &a.out {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("ranking.json"), &body)?;
        }
        return say(&(body + "\n"));
    }
    let report = report_for(&cfg, &checkpoint, &data)?;
    let mut outputs = json!({ "corpus_size": report.corpus_size });
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        let file = json!({ "reproducibility": reproducibility(cfg.subset_seed, &cfg), "config": cfg, "report": report, "series": report.plot_series() });
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&file)? + "\n")?;
        std::fs::write(dir.join("report.txt"), report.to_table_text())?;
        outputs["files"] = json!(["report.json", "report.txt"]);
    } else {
        outputs["table"] = json!(report.to_table_text());
    }
    emit("eval", cfg.subset_seed, &cfg, outputs, a.out.as_deref())
}

fn sweep(a: EvalArgs) -> CliResult<()> {
    let mut cfg = eval_config(&a, Split::Val)?;
    if !cfg.ks.contains(&10) {
        cfg.ks.push(10);
        cfg.ks.sort_unstable();
    }
    let (checkpoint, data) = load_inputs(&a.ckpt, &a.data)?;
    let report = report_for(&cfg, &checkpoint, &data)?;
    let mut optimal = serde_json::Map::new();
    let mut series = Vec::new();
    for &p in &cfg.protocols {
        let s = report.series(p, 10, SeriesDirection::Mean)?;
        optimal.insert(p.as_str().to_string(), json!({ "metric": s.metric, "alpha": optimal_alpha_from_series(&s) }));
        for d in [SeriesDirection::AudioToVideo, SeriesDirection::VideoToAudio, SeriesDirection::Mean] {
            series.push(report.series(p, 10, d)?);
        }
    }
    let mut outputs = json!({ "corpus_size": report.corpus_size, "optimal_alpha": optimal });
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        let file = json!({
            "reproducibility": reproducibility(cfg.subset_seed, &cfg),
            "config": cfg,
            "optimal_alpha": optimal,
            "series": series,
            "report": report,
        });
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&file)? + "\n")?;
        std::fs::write(dir.join("sweep.txt"), report.to_table_text())?;
        outputs["files"] = json!(["sweep.json", "sweep.txt"]);
    } else {
        outputs["table"] = json!(report.to_table_text());
    }
    emit("sweep", cfg.subset_seed, &cfg, outputs, a.out.as_deref())
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let (checkpoint, data) = load_inputs(&a.ckpt, &a.data)?;
    let origin = a
        .cors_origin
        .as_deref()
        .map(|o| o.parse().map_err(|_| CliError::new("config", format!("invalid origin {o:?}"))))
        .transpose()?;
    let state = Arc::new(mvr_service::ServiceState::build(&checkpoint, &data, a.split)?);
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let cfg = json!({ "split": a.split, "host": a.host, "port": a.port, "cors_origin": a.cors_origin });
    let outputs = json!({ "listening": format!("http://{addr}"), "corpus_size": state.corpus.len() });
    emit("serve", checkpoint.meta.train.seed, &cfg, outputs, None)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(mvr_service::serve(state, addr, origin))?;
    Ok(())
}

fn inspect(a: InspectArgs) -> CliResult<()> {
    if a.ckpt.is_none() && a.data.is_none() {
        return Err(CliError::new("config", "inspect needs --ckpt and/or --data"));
    }
    let mut doc = serde_json::Map::new();
    let checkpoint = a
        .ckpt
        .as_deref()
        .map(load_checkpoint)
        .transpose()?;
    let data = a.data.as_deref().map(load_dataset).transpose()?;
    if let Some(c) = &checkpoint {
        let mut groups = std::collections::BTreeMap::<&str, usize>::new();
        for (name, t) in c.params.names.iter().zip(&c.params.tensors) {
            *groups.entry(parameter_group(name)).or_default() += t.data().len();
        }
        doc.insert(
            "checkpoint".into(),
            json!({ "meta": c.meta, "parameter_count": c.params.parameter_count(), "parameters_by_group": groups }),
        );
    }
    if let Some(d) = &data {
        let h = &d.manifest.header;
        let per_class: Vec<Value> = (0..h.class_names.len())
            .map(|y| {
                let count = |s: Split| d.manifest.items.iter().filter(|i| i.genre == y && i.split == s).count();
                json!({ "class": h.class_names[y], "train": count(Split::Train), "val": count(Split::Val), "test": count(Split::Test) })
            })
            .collect();
        doc.insert("dataset".into(), json!({ "header": h, "items": d.len(), "per_class": per_class }));
    }
    if let (Some(c), Some(d)) = (&checkpoint, &data) {
        let compatible = c.check_compatible(&d.manifest.header);
        doc.insert("compatible".into(), json!(compatible.is_ok()));
        if let Err(e) = compatible {
            doc.insert("compatibility_error".into(), json!(e.to_string()));
        }
    }
    say(&(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
        Command::Inspect(a) => inspect(a),
    }
}

fn main() {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", json!({ "error": { "kind": e.kind, "message": e.message } }));
        std::process::exit(1);
    }
}
