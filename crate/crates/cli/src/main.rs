//! Command line front end: data generation, training, explanation,
//! evaluation, the LIME audit, and report merging. Every artifact embeds
//! the resolved run configuration and the dataset hash it was produced
//! from, so downstream merges can refuse mismatched inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mmexplain::error::{Error, Result};
use mmexplain::eval::{self, AuditConfig, EvalReport};
use mmexplain::explainer::{EmbeddingTable, ExplainerConfig, ExplainerModel};
use mmexplain::linker;
use mmexplain::nn::ParameterStore;
use mmexplain::toyworld::{generator, io, Dataset, GenConfig, QaItem};
use mmexplain::trainer::{self, TrainConfig, TrainMode};
use mmexplain::vqa::{self, VqaConfig, VqaModel, VqaTrainConfig};

const OUT_DIR_ENV: &str = "MMEXPLAIN_OUT_DIR";

#[derive(Parser)]
#[command(name = "mmexplain", version, about = "Faithful multimodal VQA explanations on a synthetic scene world")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic QA dataset with gold explanations.
    GenData(GenDataArgs),
    /// Pretrain the answering model and freeze it.
    TrainVqa(TrainVqaArgs),
    /// Train the explanation decoder against a frozen answering model.
    TrainExplainer(TrainExplainerArgs),
    /// Decode, link, and render one item's explanation.
    Explain(ExplainArgs),
    /// Score explanations on the held-out split.
    Evaluate(EvaluateArgs),
    /// LIME agreement audit of linked words.
    AuditLime(AuditLimeArgs),
    /// Merge report artifacts into one comparison table.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    items: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output path, default `<out dir>/data.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Objects per scene, inclusive range `lo-hi`.
    #[arg(long, default_value = "3-8")]
    objects: String,
    #[arg(long, default_value_t = 12)]
    v_max: usize,
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    p_distractor: f64,
}

#[derive(Args)]
struct TrainVqaArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path, default `<out dir>/vqa.ckpt`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    gru_hidden: usize,
    #[arg(long, default_value_t = 32)]
    attn_hidden: usize,
    #[arg(long, default_value_t = 64)]
    joint_dim: usize,
}

#[derive(Args)]
struct TrainExplainerArgs {
    #[arg(long)]
    data: PathBuf,
    /// Frozen answering checkpoint from `train-vqa`.
    #[arg(long)]
    vqa: PathBuf,
    #[arg(long, value_parser = ["random", "filtered", "filtered_lf"], default_value = "random")]
    mode: String,
    #[arg(long, default_value_t = 0.3)]
    xi: f64,
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.8)]
    lr_decay: f64,
    #[arg(long, default_value_t = 3)]
    decay_every: usize,
    #[arg(long, default_value_t = 13)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    w_xe: f64,
    #[arg(long, default_value_t = 1.0)]
    w_s: f64,
    #[arg(long, default_value_t = 1.0)]
    w_f: f64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    word_dim: Option<usize>,
    #[arg(long)]
    attn_hidden: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long, default_value_t = 16)]
    table_dim: usize,
    #[arg(long, default_value_t = 2718)]
    table_seed: u64,
    /// Model checkpoint path, default `<out dir>/model-<mode>.ckpt`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training report path, default `<out dir>/train-<mode>.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Resume from a saved training state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Save the final training state for later resumption.
    #[arg(long)]
    save_state: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Item id to explain.
    #[arg(long)]
    item: u64,
    #[arg(long, value_enum, default_value_t = RenderFormat::Svg)]
    render: RenderFormat,
    /// Output path, default `<out dir>/explanation-<item>.<ext>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RenderFormat {
    Svg,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricName {
    #[value(name = "bleu4")]
    Bleu4,
    #[value(name = "rougeL", alias = "rouge_l")]
    RougeL,
    #[value(name = "cider")]
    Cider,
    #[value(name = "emd")]
    Emd,
    #[value(name = "sf")]
    Sf,
    #[value(name = "links")]
    Links,
}

impl MetricName {
    fn keys(self) -> &'static [&'static str] {
        match self {
            MetricName::Bleu4 => &["bleu4"],
            MetricName::RougeL => &["rouge_l"],
            MetricName::Cider => &["cider"],
            MetricName::Emd => &["mean_emd"],
            MetricName::Sf => &["mean_sf", "sf_low_frac"],
            MetricName::Links => &["avg_links", "avg_len"],
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Evaluate every item instead of the held-out tail.
    #[arg(long)]
    full: bool,
    /// Keep only these metrics (plus items/accuracy) in the report.
    #[arg(long, value_enum, value_delimiter = ',')]
    metrics: Option<Vec<MetricName>>,
    /// Report path, default `<out dir>/eval-<label>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Column label for merged tables, default: checkpoint's train mode.
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct AuditLimeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Segment budgets for the surrogate.
    #[arg(long = "K", visible_alias = "k", value_delimiter = ',', default_value = "1,2,3")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0.4)]
    p_blind: f64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Cap on audited items.
    #[arg(long)]
    max_items: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long)]
    full: bool,
    /// Report path, default `<out dir>/audit-<label>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files to merge.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Merged table path, default `<out dir>/table.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn resolve_out(out: Option<PathBuf>, default_name: &str) -> PathBuf {
    out.unwrap_or_else(|| out_dir().join(default_name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::TrainVqa(args) => train_vqa(args),
        Command::TrainExplainer(args) => train_explainer(args),
        Command::Explain(args) => explain(args),
        Command::Evaluate(args) => evaluate(args),
        Command::AuditLime(args) => audit_lime(args),
        Command::Report(args) => report(args),
    }
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('-').collect();
    let err = || Error::Config(format!("expected `lo-hi` object range, got `{s}`"));
    if parts.len() != 2 {
        return Err(err());
    }
    let lo = parts[0].parse().map_err(|_| err())?;
    let hi = parts[1].parse().map_err(|_| err())?;
    Ok((lo, hi))
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let (lo, hi) = parse_range(&args.objects)?;
    let cfg = GenConfig {
        num_objects: (lo, hi),
        v_max: args.v_max,
        feature_dim: args.feature_dim,
        noise_sigma: args.noise_sigma,
        p_distractor: args.p_distractor,
        ..GenConfig::default()
    };
    let ds = generator::generate_dataset(&cfg, args.seed, args.items)?;
    let path = resolve_out(args.out, "data.jsonl");
    io::write_dataset(&ds, &path)?;
    print_summary(json!({
        "command": "gen-data",
        "path": path,
        "items": ds.items.len(),
        "vocab": ds.vocab.len(),
        "answers": ds.vocab.answers.len(),
        "dataset_hash": eval::dataset_digest(&ds)?,
    }));
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    io::read_dataset(path)
}

fn train_vqa(args: TrainVqaArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let dataset_hash = eval::dataset_digest(&ds)?;
    let (train, test) = eval::holdout_split(&ds.items, args.test_fraction)?;
    let cfg = VqaConfig {
        embed_dim: args.embed_dim,
        gru_hidden: args.gru_hidden,
        attn_hidden: args.attn_hidden,
        joint_dim: args.joint_dim,
        seed: args.seed,
        ..VqaConfig::for_dataset(&ds)
    };
    let tc = VqaTrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        seed: args.seed,
    };
    let (model, store, report) = vqa::pretrain_vqa(train, cfg.clone(), &tc)?;
    let test_accuracy = vqa::accuracy(&model, &store, test)?;
    let majority = vqa::majority_baseline(train, test);
    let run_cfg = json!({
        "command": "train-vqa",
        "vqa_cfg": cfg,
        "train_cfg": tc,
        "test_fraction": args.test_fraction,
        "dataset_hash": dataset_hash,
    });
    let path = resolve_out(args.out, "vqa.ckpt");
    trainer::save_model_checkpoint(&path, &store, &ParameterStore::new(), run_cfg.clone())?;
    print_summary(json!({
        "command": "train-vqa",
        "path": path,
        "train_accuracy": report.final_train_accuracy,
        "test_accuracy": test_accuracy,
        "majority_baseline": majority,
        "config_hash": eval::value_digest(&run_cfg)?,
    }));
    Ok(())
}

/// Pull a typed config back out of checkpoint metadata.
fn meta_field<T: serde::de::DeserializeOwned>(meta: &serde_json::Value, key: &str) -> Result<T> {
    serde_json::from_value(meta["extra"][key].clone())
        .map_err(|e| Error::Checkpoint(format!("checkpoint metadata lacks usable `{key}`: {e}")))
}

fn train_explainer(args: TrainExplainerArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let dataset_hash = eval::dataset_digest(&ds)?;
    let (vqa_store, vqa_meta) = trainer::load_model_checkpoint(&args.vqa)?;
    let vqa_cfg: VqaConfig = meta_field(&vqa_meta, "vqa_cfg")?;
    let vqa_model = VqaModel::attach(vqa_cfg.clone());

    let (train_items, _) = eval::holdout_split(&ds.items, args.test_fraction)?;
    let mut train_ds = ds.clone();
    train_ds.items = train_items.to_vec();

    let mut expl_cfg = ExplainerConfig::for_dataset(&ds, &vqa_cfg);
    if let Some(v) = args.hidden {
        expl_cfg.hidden = v;
    }
    if let Some(v) = args.word_dim {
        expl_cfg.word_dim = v;
    }
    if let Some(v) = args.attn_hidden {
        expl_cfg.attn_hidden = v;
    }
    if let Some(v) = args.max_len {
        expl_cfg.max_len = v;
    }
    let table = EmbeddingTable::deterministic(&ds.vocab, args.table_dim, args.table_seed);
    let cfg = TrainConfig {
        mode: TrainMode::parse(&args.mode)?,
        xi: args.xi,
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        lr_decay: args.lr_decay,
        decay_every: args.decay_every,
        seed: args.seed,
        w_xe: args.w_xe,
        w_s: args.w_s,
        w_f: args.w_f,
    };
    let run_cfg = json!({
        "command": "train-explainer",
        "vqa_cfg": vqa_cfg,
        "expl_cfg": expl_cfg,
        "train_cfg": cfg,
        "mode": args.mode,
        "table_dim": args.table_dim,
        "table_seed": args.table_seed,
        "test_fraction": args.test_fraction,
        "dataset_hash": dataset_hash,
    });
    let config_hash = eval::value_digest(&run_cfg)?;

    let resume = match &args.resume {
        Some(path) => Some(trainer::load_train_state(path, &config_hash, false)?),
        None => None,
    };
    let outcome = trainer::train_explainer(
        &train_ds,
        &vqa_model,
        &vqa_store,
        &expl_cfg,
        &table,
        &cfg,
        resume,
    )?;
    if let Some(path) = &args.save_state {
        trainer::save_train_state(path, &outcome.resume, &config_hash)?;
    }

    let label = args.label.clone().unwrap_or_else(|| args.mode.clone());
    let ckpt = resolve_out(args.out, &format!("model-{}.ckpt", args.mode));
    trainer::save_model_checkpoint(&ckpt, &vqa_store, &outcome.store, run_cfg.clone())?;

    let report_path = resolve_out(args.report, &format!("train-{}.json", args.mode));
    let mut report_json = serde_json::to_value(&outcome.report)?;
    report_json["format_version"] = json!(eval::REPORT_VERSION);
    report_json["label"] = json!(label);
    report_json["config_hash"] = json!(config_hash);
    report_json["dataset_hash"] = json!(dataset_hash);
    let mut text = serde_json::to_string_pretty(&report_json)?;
    text.push('\n');
    write_text(&report_path, &text)?;

    let last = outcome.report.epochs.last();
    print_summary(json!({
        "command": "train-explainer",
        "mode": args.mode,
        "checkpoint": ckpt,
        "report": report_path,
        "optimizer_steps": outcome.report.optimizer_steps,
        "final_accepted_fraction": last.map(|e| e.accepted_fraction),
        "final_mean_score": last.map(|e| e.mean_score),
        "config_hash": config_hash,
    }));
    Ok(())
}

/// Rebuild both models from a combined checkpoint.
fn load_models(path: &Path) -> Result<(VqaModel, ExplainerModel, ParameterStore, serde_json::Value)> {
    let (store, meta) = trainer::load_model_checkpoint(path)?;
    let vqa_cfg: VqaConfig = meta_field(&meta, "vqa_cfg")?;
    let expl_cfg: ExplainerConfig = meta_field(&meta, "expl_cfg")?;
    Ok((
        VqaModel::attach(vqa_cfg),
        ExplainerModel::attach(expl_cfg),
        store,
        meta,
    ))
}

fn find_item<'a>(ds: &'a Dataset, id: u64) -> Result<&'a QaItem> {
    ds.items
        .iter()
        .find(|i| i.item_id == id)
        .ok_or_else(|| Error::Invalid(format!("item {id} not in dataset")))
}

fn explain(args: ExplainArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let (vqa_model, expl_model, store, _meta) = load_models(&args.ckpt)?;
    let item = find_item(&ds, args.item)?;
    let explained = eval::explain_item(&vqa_model, &expl_model, &store, &ds, item)?;
    let (ext, text) = match args.render {
        RenderFormat::Svg => ("svg", linker::to_svg(&explained.multimodal)),
        RenderFormat::Json => {
            let mut t = serde_json::to_string_pretty(&explained)?;
            t.push('\n');
            ("json", t)
        }
    };
    let path = resolve_out(args.out, &format!("explanation-{}.{ext}", args.item));
    write_text(&path, &text)?;
    let words: Vec<&str> = explained
        .multimodal
        .tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect();
    print_summary(json!({
        "command": "explain",
        "item": args.item,
        "path": path,
        "predicted_answer": ds.vocab.answers.get(explained.pred as usize),
        "correct": explained.correct,
        "sf": explained.sf,
        "explanation": words.join(" "),
        "links": explained.output.links.len(),
    }));
    Ok(())
}

fn eval_slice<'a>(items: &'a [QaItem], full: bool, test_fraction: f64) -> Result<&'a [QaItem]> {
    if full {
        Ok(items)
    } else {
        Ok(eval::holdout_split(items, test_fraction)?.1)
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let dataset_hash = eval::dataset_digest(&ds)?;
    let (vqa_model, expl_model, store, meta) = load_models(&args.ckpt)?;
    let items = eval_slice(&ds.items, args.full, args.test_fraction)?;
    let summary = eval::evaluate(&vqa_model, &expl_model, &store, &ds, items)?;

    let mut metrics = summary.metrics.clone();
    if let Some(wanted) = &args.metrics {
        let mut keep: Vec<&str> = vec!["items", "accuracy"];
        for m in wanted {
            keep.extend_from_slice(m.keys());
        }
        metrics.retain(|k, _| keep.contains(&k.as_str()));
    }
    let label = args
        .label
        .clone()
        .or_else(|| meta["extra"]["mode"].as_str().map(str::to_string))
        .unwrap_or_else(|| "evaluate".into());
    let run_cfg = json!({
        "command": "evaluate",
        "ckpt_config": meta["extra"],
        "test_fraction": args.test_fraction,
        "full": args.full,
        "dataset_hash": dataset_hash,
    });
    let report = EvalReport::new(
        "evaluate",
        &label,
        run_cfg,
        &dataset_hash,
        metrics,
        Some(summary.sf_histogram.clone()),
        summary.warnings.clone(),
    )?;
    let path = resolve_out(args.out, &format!("eval-{label}.json"));
    report.save(&path)?;
    print_summary(json!({
        "command": "evaluate",
        "path": path,
        "label": label,
        "metrics": report.metrics,
        "warnings": report.warnings,
    }));
    Ok(())
}

fn audit_lime(args: AuditLimeArgs) -> Result<()> {
    let ds = load_dataset(&args.data)?;
    let dataset_hash = eval::dataset_digest(&ds)?;
    let (vqa_model, expl_model, store, meta) = load_models(&args.ckpt)?;
    let items = eval_slice(&ds.items, args.full, args.test_fraction)?;
    let cfg = AuditConfig {
        ks: args.ks.clone(),
        n_samples: args.samples,
        p_blind: args.p_blind,
        seed: args.seed,
        max_items: args.max_items,
    };
    let summary = eval::audit_lime(&vqa_model, &expl_model, &store, &ds, items, &cfg)?;
    let label = args
        .label
        .clone()
        .or_else(|| meta["extra"]["mode"].as_str().map(str::to_string))
        .unwrap_or_else(|| "audit".into());
    let run_cfg = json!({
        "command": "audit-lime",
        "ckpt_config": meta["extra"],
        "audit_cfg": cfg,
        "test_fraction": args.test_fraction,
        "full": args.full,
        "dataset_hash": dataset_hash,
    });
    let mut metrics = summary.metrics.clone();
    metrics.insert("audited_items".into(), summary.audited_items as f64);
    let report = EvalReport::new(
        "audit-lime",
        &label,
        run_cfg,
        &dataset_hash,
        metrics,
        None,
        summary.warnings.clone(),
    )?;
    let path = resolve_out(args.out, &format!("audit-{label}.json"));
    report.save(&path)?;
    print_summary(json!({
        "command": "audit-lime",
        "path": path,
        "label": label,
        "metrics": report.metrics,
        "warnings": report.warnings,
    }));
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        reports.push(EvalReport::load(path)?);
    }
    let table = eval::merge_reports(&reports)?;
    let path = resolve_out(args.out, "table.json");
    let mut text = serde_json::to_string_pretty(&table)?;
    text.push('\n');
    write_text(&path, &text)?;
    let csv = table.to_csv();
    if let Some(csv_path) = &args.csv {
        write_text(csv_path, &csv)?;
    }
    print!("{csv}");
    print_summary(json!({
        "command": "report",
        "path": path,
        "columns": table.columns,
        "rows": table.rows.len(),
    }));
    Ok(())
}
