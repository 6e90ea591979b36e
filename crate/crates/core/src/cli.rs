//! Command-line front end. Settings come from an optional TOML file whose
//! values are then overridden by flags.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_dataset, load_knowledge_base, write_atomic, write_dataset, write_knowledge_base,
    DatasetManifest, KnowledgeBase, SynthConfig,
};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::head::FusionMode;
use crate::model::{Batch, ContrastiveSpace, ProjectionInit, QfsruModel};
use crate::quantum::{Retriever, Similarity, DEFAULT_TOP_K, RETRIEVAL_TEMPERATURE};
use crate::trainer::{
    csv_error, finish_csv,
    ablation_summary_csv, evaluate, fold_split, metrics_csv, resolve_folds, run_ablation_suite, run_cross_validation,
    TrainConfig, Variant,
};

/// Contents of a `--config` file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "qfsru", version, about = "Frequency-domain fusion with fidelity retrieval for VQA classification")]
pub struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML settings file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving output files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Folds trained concurrently.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and knowledge base.
    Synth(SynthArgs),
    /// Cross-validate one variant; writes metrics, summary and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Rank knowledge entries for JSONL queries.
    Retrieve(RetrieveArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck,
    /// Export magnitude spectra of projected features as CSV.
    Spectrum(SpectrumArgs),
    /// Cross-validate every ablation variant.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    /// Standard deviation of additive noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Total signal amplitude of the class band.
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    questions_per_image: Option<usize>,
    /// Knowledge entries matching no class.
    #[arg(long)]
    distractors: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset JSONL.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Knowledge base JSONL.
    #[arg(long)]
    knowledge: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Train only this fold; repeatable.
    #[arg(long = "fold")]
    only_folds: Vec<usize>,
    /// Global gradient-norm limit.
    #[arg(long, conflicts_with = "no_clip")]
    clip_norm: Option<f64>,
    /// Disable gradient clipping.
    #[arg(long)]
    no_clip: bool,
    #[arg(long, value_parser = parse_fusion_mode)]
    fusion_mode: Option<FusionMode>,
    #[arg(long, value_parser = parse_contrastive_space)]
    contrastive_space: Option<ContrastiveSpace>,
    #[arg(long, value_parser = parse_projection_init)]
    projection_init: Option<ProjectionInit>,
    #[arg(long)]
    filters: Option<usize>,
    /// Share one filter bank between modalities.
    #[arg(long)]
    tie_filters: bool,
    #[arg(long)]
    dropout: Option<f64>,
    /// Hidden widths of the classifier, e.g. `1024,256`.
    #[arg(long, value_parser = parse_hidden)]
    hidden: Option<[usize; 2]>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// One of full, no_frequency, no_retrieval, no_contrastive, spatial_only,
    /// cosine_similarity, no_co_selection.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Skip writing per-fold checkpoints.
    #[arg(long)]
    no_checkpoints: bool,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    train: TrainFlags,
    /// Comma-separated subset of variants; all by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<Variant>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint JSON written by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate only the validation split of this fold.
    #[arg(long)]
    fold: Option<usize>,
    /// Fold count used to rebuild the split.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    /// Knowledge base JSONL.
    #[arg(long)]
    knowledge: Option<PathBuf>,
    /// JSONL of `{"id": ..., "vector": [...]}`.
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, default_value_t = RETRIEVAL_TEMPERATURE)]
    temperature: f64,
    /// fidelity or cosine.
    #[arg(long, value_parser = parse_similarity, default_value = "fidelity")]
    similarity: Similarity,
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    /// Dataset JSONL.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use this checkpoint's projections instead of freshly initialized ones.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of leading samples to export.
    #[arg(long, default_value_t = 16)]
    limit: usize,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    Variant::parse(s).map_err(|e| e.to_string())
}

fn parse_hidden(s: &str) -> std::result::Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?,
            b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?,
        ]),
        _ => Err(format!("expected two comma-separated widths, got {s:?}")),
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unrecognized value {s:?}"))
}

fn parse_fusion_mode(s: &str) -> std::result::Result<FusionMode, String> {
    parse_enum(s)
}

fn parse_contrastive_space(s: &str) -> std::result::Result<ContrastiveSpace, String> {
    parse_enum(s)
}

fn parse_projection_init(s: &str) -> std::result::Result<ProjectionInit, String> {
    parse_enum(s)
}

fn parse_similarity(s: &str) -> std::result::Result<Similarity, String> {
    parse_enum(s)
}

/// Settings after merging the config file with flags.
struct Context {
    run: RunConfig,
    out_dir: PathBuf,
    workers: usize,
}

impl Context {
    fn new(common: &Common) -> Result<Self> {
        let mut run = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = common.seed {
            run.train.seed = s;
            run.synth.seed = s;
        }
        let out_dir = common.out_dir.clone().or_else(|| run.out_dir.clone()).unwrap_or_else(|| ".".into());
        let workers = common.workers.or(run.workers).unwrap_or(1);
        if workers == 0 {
            return Err(Error::config("--workers must be at least 1"));
        }
        Ok(Context { run, out_dir, workers })
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        Ok(self.out_dir.join(name))
    }

    fn data_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.run.data.clone())
            .ok_or_else(|| Error::config("a dataset path is required (--data or `data` in the config file)"))
    }

    fn knowledge_path(&self, flag: &Option<PathBuf>) -> Option<PathBuf> {
        flag.clone().or_else(|| self.run.knowledge.clone())
    }

    fn load_data(&self, args: &DataArgs) -> Result<(DatasetManifest, Option<KnowledgeBase>)> {
        let m = load_dataset(self.data_path(&args.data)?)?;
        let kb = match self.knowledge_path(&args.knowledge) {
            Some(p) => Some(load_knowledge_base(p, Some(m.d_model))?),
            None => None,
        };
        Ok((m, kb))
    }
}

fn apply_train_flags(cfg: &mut TrainConfig, f: &TrainFlags) {
    macro_rules! set {
        ($($field:ident <- $flag:expr),* $(,)?) => { $(if let Some(v) = $flag { cfg.$field = v; })* };
    }
    set!(
        lr <- f.lr,
        weight_decay <- f.weight_decay,
        batch_size <- f.batch_size,
        max_epochs <- f.epochs,
        patience <- f.patience,
        folds <- f.folds,
        contrastive_space <- f.contrastive_space,
        projection_init <- f.projection_init,
        filters <- f.filters,
        dropout <- f.dropout,
    );
    if let Some(h) = f.hidden {
        cfg.hidden = h;
    }
    if f.fusion_mode.is_some() {
        cfg.fusion_mode = f.fusion_mode;
    }
    if !f.only_folds.is_empty() {
        cfg.only_folds = f.only_folds.clone();
    }
    if f.no_clip {
        cfg.clip_norm = None;
    } else if f.clip_norm.is_some() {
        cfg.clip_norm = f.clip_norm;
    }
    if f.tie_filters {
        cfg.tie_filters = true;
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn cmd_synth(ctx: &Context, a: &SynthArgs) -> Result<()> {
    let mut cfg = ctx.run.synth.clone();
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { cfg.$field = v; })* };
    }
    set!(classes, per_class, d_model, noise, amplitude, questions_per_image, distractors);
    let data = generate_synthetic(&cfg)?;
    let dataset = ctx.out("dataset.jsonl")?;
    let knowledge = ctx.out("knowledge.jsonl")?;
    write_dataset(&dataset, &data.manifest)?;
    write_knowledge_base(&knowledge, &data.knowledge)?;
    println!(
        "wrote {} samples to {} and {} entries to {}",
        data.manifest.len(),
        dataset.display(),
        data.knowledge.len(),
        knowledge.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FoldSummary<'a> {
    fold: usize,
    best_epoch: usize,
    epochs_run: usize,
    metrics: crate::trainer::Metrics,
    history: &'a [crate::trainer::EpochRecord],
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    variant: &'static str,
    label: &'static str,
    config: &'a TrainConfig,
    mean: crate::trainer::Metrics,
    std: crate::trainer::Metrics,
    folds: Vec<FoldSummary<'a>>,
}

fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let (m, kb) = ctx.load_data(&a.data)?;
    let mut cfg = ctx.run.train.clone();
    apply_train_flags(&mut cfg, &a.train);
    if let Some(v) = a.variant {
        cfg.variant = v;
    }
    let report = run_cross_validation(&m, kb.as_ref(), &cfg, ctx.workers)?;
    let rows: Vec<_> = report
        .folds
        .iter()
        .map(|f| (cfg.variant.key().to_string(), f.fold, f.metrics))
        .collect();
    write_atomic(&ctx.out("metrics.csv")?, metrics_csv(&rows)?.as_bytes())?;
    if !a.no_checkpoints {
        for f in &report.folds {
            f.model.save(ctx.out(&format!("checkpoint_fold{}.json", f.fold))?)?;
        }
    }
    let summary = TrainSummary {
        variant: cfg.variant.key(),
        label: cfg.variant.label(),
        config: &cfg,
        mean: report.summary.mean,
        std: report.summary.std,
        folds: report
            .folds
            .iter()
            .map(|f| FoldSummary {
                fold: f.fold,
                best_epoch: f.best_epoch,
                epochs_run: f.history.len(),
                metrics: f.metrics,
                history: &f.history,
            })
            .collect(),
    };
    write_json(&ctx.out("summary.json")?, &summary)?;
    let (mu, sd) = (report.summary.mean, report.summary.std);
    println!(
        "{}: accuracy {:.4} ± {:.4}, f1 {:.4} ± {:.4}, auc {:.4} ± {:.4} over {} fold(s)",
        cfg.variant.label(),
        mu.accuracy,
        sd.accuracy,
        mu.f1,
        sd.f1,
        mu.auc,
        sd.auc,
        report.summary.folds
    );
    Ok(())
}

fn cmd_eval(ctx: &Context, a: &EvalArgs) -> Result<()> {
    let path = a
        .checkpoint
        .clone()
        .or_else(|| ctx.run.checkpoint.clone())
        .ok_or_else(|| Error::config("--checkpoint is required"))?;
    let model = QfsruModel::load(&path)?;
    let (m, kb) = ctx.load_data(&a.data)?;
    let indices: Vec<usize> = match a.fold {
        Some(fold) => {
            let k = a.folds.unwrap_or(ctx.run.train.folds);
            if fold >= k {
                return Err(Error::config(format!("--fold {fold} is out of range for {k} folds")));
            }
            fold_split(&resolve_folds(&m, k, ctx.run.train.seed)?, fold).1
        }
        None => (0..m.len()).collect(),
    };
    let metrics = evaluate(&model, &m, &indices, kb.as_ref())?;
    #[derive(Serialize)]
    struct EvalReport<'a> {
        checkpoint: &'a Path,
        samples: usize,
        metrics: crate::trainer::Metrics,
    }
    let report = EvalReport {
        checkpoint: &path,
        samples: indices.len(),
        metrics,
    };
    write_json(&ctx.out("eval.json")?, &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Query {
    id: String,
    vector: Vec<f64>,
}

fn cmd_retrieve(ctx: &Context, a: &RetrieveArgs) -> Result<()> {
    let kb_path = ctx
        .knowledge_path(&a.knowledge)
        .ok_or_else(|| Error::config("--knowledge is required"))?;
    let kb = load_knowledge_base(&kb_path, None)?;
    let retriever = Retriever::new(&kb, a.top_k, a.temperature, a.similarity)?;
    let text = std::fs::read_to_string(&a.queries).map_err(|e| Error::io(&a.queries, e))?;
    let mut out = String::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: a.queries.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        let r = retriever.retrieve(&q.vector)?;
        let mut obj = serde_json::to_value(&r)?;
        obj.as_object_mut()
            .expect("retrieval result is an object")
            .insert("query".into(), serde_json::Value::String(q.id));
        out.push_str(&serde_json::to_string(&obj)?);
        out.push('\n');
    }
    write_atomic(&ctx.out("retrieval.jsonl")?, out.as_bytes())?;
    print!("{out}");
    Ok(())
}

fn cmd_gradcheck(ctx: &Context) -> Result<bool> {
    let reports = gradcheck::run_all(ctx.run.train.seed)?;
    let mut ok = true;
    println!("{:<20} {:>6} {:>14}  result", "suite", "points", "max rel err");
    for r in &reports {
        println!(
            "{:<20} {:>6} {:>14.3e}  {}",
            r.name,
            r.points,
            r.max_rel_error,
            if r.passed { "PASS" } else { "FAIL" }
        );
        ok &= r.passed;
    }
    write_json(&ctx.out("gradcheck.json")?, &reports)?;
    Ok(ok)
}

fn cmd_spectrum(ctx: &Context, a: &SpectrumArgs) -> Result<()> {
    let m = load_dataset(ctx.data_path(&a.data)?)?;
    let model = match a.checkpoint.clone().or_else(|| ctx.run.checkpoint.clone()) {
        Some(p) => QfsruModel::load(p)?,
        None => QfsruModel::new(ctx.run.train.model_config(&m), ctx.run.train.seed)?,
    };
    if model.config.d_model != m.d_model || model.config.image_dim() != m.image_dim() {
        return Err(Error::schema("checkpoint and dataset widths differ"));
    }
    let idx: Vec<usize> = (0..m.len().min(a.limit)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "modality", "bin", "magnitude"])
        .map_err(csv_error)?;
    if !idx.is_empty() {
        let (tf, vf) = model.spectra(&Batch::from_manifest(&m, &idx)?)?;
        for (r, &i) in idx.iter().enumerate() {
            for (modality, spec) in [("text", &tf), ("image", &vf)] {
                for (bin, mag) in spec.row(r).iter().enumerate() {
                    w.serialize((&m.samples[i].id, modality, bin, mag))
                        .map_err(csv_error)?;
                }
            }
        }
    }
    let path = ctx.out("spectrum.csv")?;
    write_atomic(&path, finish_csv(w)?.as_bytes())?;
    println!("wrote spectra of {} samples to {}", idx.len(), path.display());
    Ok(())
}

fn cmd_ablate(ctx: &Context, a: &AblateArgs) -> Result<()> {
    let (m, kb) = ctx.load_data(&a.data)?;
    let mut cfg = ctx.run.train.clone();
    apply_train_flags(&mut cfg, &a.train);
    let variants: Vec<Variant> = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    let report = run_ablation_suite(&m, kb.as_ref(), &cfg, &variants, ctx.workers)?;
    let csv = ablation_summary_csv(&report)?;
    write_atomic(&ctx.out("ablation.csv")?, csv.as_bytes())?;
    let rows: Vec<_> = report
        .rows
        .iter()
        .flat_map(|r| r.per_fold.iter().map(|(f, mm)| (r.variant.key().to_string(), *f, *mm)))
        .collect();
    write_atomic(&ctx.out("ablation_metrics.csv")?, metrics_csv(&rows)?.as_bytes())?;
    print!("{csv}");
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let ctx = Context::new(&cli.common)?;
    info!("output directory {}", ctx.out_dir.display());
    match &cli.command {
        Command::Synth(a) => cmd_synth(&ctx, a)?,
        Command::Train(a) => cmd_train(&ctx, a)?,
        Command::Eval(a) => cmd_eval(&ctx, a)?,
        Command::Retrieve(a) => cmd_retrieve(&ctx, a)?,
        Command::Gradcheck => {
            if !cmd_gradcheck(&ctx)? {
                warn!("gradient check failed");
                return Ok(3);
            }
        }
        Command::Spectrum(a) => cmd_spectrum(&ctx, a)?,
        Command::Ablate(a) => cmd_ablate(&ctx, a)?,
    }
    Ok(0)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips_through_toml() {
        let mut rc = RunConfig::default();
        rc.train.lr = 1e-3;
        rc.train.variant = Variant::SpatialOnly;
        rc.data = Some("d.jsonl".into());
        let text = rc.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), rc);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rate = 1.0\n").is_err());
        assert!(toml::from_str::<RunConfig>("colour = 1\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = TrainConfig {
            lr: 1.0,
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let cli = Cli::try_parse_from(["qfsru", "train", "--lr", "0.5", "--no-clip", "--fold", "2"]).unwrap();
        let Command::Train(a) = cli.command else { unreachable!() };
        apply_train_flags(&mut cfg, &a.train);
        assert_eq!(cfg.lr, 0.5);
        assert_eq!(cfg.max_epochs, 3);
        assert_eq!(cfg.clip_norm, None);
        assert_eq!(cfg.only_folds, vec![2]);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(run(["qfsru", "train", "--bogus"]), 1);
        assert_eq!(run(["qfsru", "frobnicate"]), 1);
        assert_eq!(run(["qfsru", "--help"]), 0);
    }

    #[test]
    fn enum_flags_parse_snake_case() {
        assert_eq!(parse_fusion_mode("freq_plus_knowledge"), Ok(FusionMode::FreqPlusKnowledge));
        assert_eq!(parse_similarity("cosine"), Ok(Similarity::Cosine));
        assert!(parse_similarity("euclid").is_err());
        assert_eq!(parse_variant("spatial_only"), Ok(Variant::SpatialOnly));
        assert_eq!(parse_hidden("32, 16"), Ok([32, 16]));
        assert!(parse_hidden("32").is_err());
    }
}
