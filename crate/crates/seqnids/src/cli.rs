//! Command-line front end: data preparation, training, evaluation,
//! sequence-length sweeps, timing benchmarks, and synthetic data generation.
//!
//! Configuration comes from defaults, then an optional flat `key = value`
//! config file, then command-line flags (highest precedence). The effective
//! configuration is echoed into every report for provenance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::data::{
    self, apply_normalization, fit_normalization, fit_vocabularies, make_windows,
    split_validation, synth::write_csv, FeatureSchema, FlowRecord, SynthConfig, SynthRule,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    benchmark_prediction_time, bench::timing_to_csv, evaluate_windows, linear_fit_r2,
    sweep::sweep_to_csv, sweep_sequence_length, EvalReport,
};
use crate::layers::model::{EmbedMode, ModelConfig, ModelKind, ModelParams, Task};
use crate::training::{
    history_to_csv, load_checkpoint, save_checkpoint, train, LossMode, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "seqnids",
    about = "Sequence-based network intrusion detection: LSTM over flow-record windows with learned categorical embeddings",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse CSVs, fit vocabularies on the training split, and write binary
    /// record caches.
    Prepare(PrepareArgs),
    /// Train a model and write a checkpoint plus history CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test CSV (or cache) and write reports.
    Eval(EvalArgs),
    /// Train one model per sequence length and tabulate validation accuracy.
    Sweep(SweepArgs),
    /// Measure prediction time per sequence across sequence lengths.
    Bench(BenchArgs),
    /// Generate synthetic traffic with a planted temporal rule.
    Synth(SynthArgs),
}

/// Flags shared by the model-building subcommands. Every `Option` field can
/// also come from the config file; flags win.
#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Classification task: binary | multi | m2b.
    #[arg(long)]
    task: Option<String>,
    /// Loss aggregation: m2m | m2o.
    #[arg(long)]
    mode: Option<String>,
    /// Categorical handling: on (learned embeddings) | off (ordinal).
    #[arg(long)]
    embed: Option<String>,
    /// Model kind: lstm | mlp.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap (0 = default).
    #[arg(long)]
    threads: Option<usize>,
    /// LSTM hidden width (and MLP replacement width).
    #[arg(long)]
    hidden: Option<usize>,
    /// Validation fraction split off the training windows.
    #[arg(long)]
    val_frac: Option<f64>,
    /// Output directory for checkpoints and reports.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PrepareArgs {
    #[arg(long)]
    train_csv: PathBuf,
    #[arg(long)]
    test_csv: Option<PathBuf>,
    /// Directory receiving train.cache / test.cache.
    #[arg(long)]
    out_dir: PathBuf,
    /// Schema: unsw (default) or a synth CSV produced by `seqnids synth`.
    #[arg(long, default_value = "unsw")]
    schema: String,
    #[arg(long)]
    synth_meta: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training CSV (UNSW-NB15 partition layout or synth output).
    #[arg(long)]
    train_csv: Option<PathBuf>,
    /// Binary cache written by `prepare` (alternative to --train-csv).
    #[arg(long)]
    train_cache: Option<PathBuf>,
    /// Checkpoint output path (default <out-dir>/model.ckpt).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Schema of the CSV: unsw | synth.
    #[arg(long, default_value = "synth")]
    schema: String,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test_csv: Option<PathBuf>,
    #[arg(long)]
    test_cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    train_csv: Option<PathBuf>,
    #[arg(long)]
    train_cache: Option<PathBuf>,
    /// Comma-separated sequence lengths, e.g. 10,60,110.
    #[arg(long)]
    lengths: String,
    #[arg(long, default_value = "synth")]
    schema: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to time; a fresh default model is used when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated sequence lengths.
    #[arg(long, default_value = "10,60,110,160,210,260,310")]
    lengths: String,
    #[arg(long, default_value_t = 30)]
    reps: usize,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Records to generate (split into train/test files).
    #[arg(long)]
    n: usize,
    /// Planted rule depth k.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    vocab: usize,
    /// Rule: equality | membership-parity.
    #[arg(long, default_value = "equality")]
    rule: String,
    #[arg(long, default_value_t = 0.005)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    /// Fraction of the stream written to the training file.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Run the CLI against the given arguments (`argv[0]` included). Returns a
/// process exit status; errors print a one-line diagnostic to stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap renders its own usage/help text.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// Effective settings after merging defaults, the config file, and flags.
#[derive(Clone, Debug)]
struct Effective {
    task: Task,
    mode: LossMode,
    embed: EmbedMode,
    model: ModelKind,
    seq_len: usize,
    lr: f64,
    batch: usize,
    epochs: usize,
    dropout: f64,
    seed: u64,
    threads: usize,
    hidden: usize,
    val_frac: f64,
    out_dir: PathBuf,
}

impl Default for Effective {
    fn default() -> Self {
        Self {
            task: Task::Binary,
            mode: LossMode::M2M,
            embed: EmbedMode::Learned,
            model: ModelKind::Lstm,
            seq_len: 10,
            lr: 1e-3,
            batch: 128,
            epochs: 100,
            dropout: 0.5,
            seed: 1,
            threads: 0,
            hidden: 100,
            val_frac: 0.1,
            out_dir: PathBuf::from("."),
        }
    }
}

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!(
                "config {}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_from<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(v) => v.parse::<T>().map(Some).map_err(|e| {
            Error::InvalidArgument(format!("config key `{key}`: bad value `{v}`: {e}"))
        }),
    }
}

impl Effective {
    fn build(common: &CommonArgs) -> Result<Self> {
        let mut eff = Effective::default();
        if let Some(path) = &common.config {
            let map = parse_config_file(path)?;
            if let Some(v) = map.get("task") {
                eff.task = v.parse()?;
            }
            if let Some(v) = map.get("mode") {
                eff.mode = v.parse()?;
            }
            if let Some(v) = map.get("embed") {
                eff.embed = v.parse()?;
            }
            if let Some(v) = map.get("model") {
                eff.model = v.parse()?;
            }
            if let Some(v) = parse_from::<usize>(&map, "seq_len")? {
                eff.seq_len = v;
            }
            if let Some(v) = parse_from::<f64>(&map, "lr")? {
                eff.lr = v;
            }
            if let Some(v) = parse_from::<usize>(&map, "batch")? {
                eff.batch = v;
            }
            if let Some(v) = parse_from::<usize>(&map, "epochs")? {
                eff.epochs = v;
            }
            if let Some(v) = parse_from::<f64>(&map, "dropout")? {
                eff.dropout = v;
            }
            if let Some(v) = parse_from::<u64>(&map, "seed")? {
                eff.seed = v;
            }
            if let Some(v) = parse_from::<usize>(&map, "threads")? {
                eff.threads = v;
            }
            if let Some(v) = parse_from::<usize>(&map, "hidden")? {
                eff.hidden = v;
            }
            if let Some(v) = parse_from::<f64>(&map, "val_frac")? {
                eff.val_frac = v;
            }
            if let Some(v) = map.get("out_dir") {
                eff.out_dir = PathBuf::from(v);
            }
        }
        if let Some(v) = &common.task {
            eff.task = v.parse()?;
        }
        if let Some(v) = &common.mode {
            eff.mode = v.parse()?;
        }
        if let Some(v) = &common.embed {
            eff.embed = v.parse()?;
        }
        if let Some(v) = &common.model {
            eff.model = v.parse()?;
        }
        if let Some(v) = common.seq_len {
            eff.seq_len = v;
        }
        if let Some(v) = common.lr {
            eff.lr = v;
        }
        if let Some(v) = common.batch {
            eff.batch = v;
        }
        if let Some(v) = common.epochs {
            eff.epochs = v;
        }
        if let Some(v) = common.dropout {
            eff.dropout = v;
        }
        if let Some(v) = common.seed {
            eff.seed = v;
        }
        if let Some(v) = common.threads {
            eff.threads = v;
        }
        if let Some(v) = common.hidden {
            eff.hidden = v;
        }
        if let Some(v) = common.val_frac {
            eff.val_frac = v;
        }
        if let Some(v) = &common.out_dir {
            eff.out_dir = v.clone();
        }
        Ok(eff)
    }

    fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.task, self.mode, self.seq_len, self.seed);
        cfg.learning_rate = self.lr;
        cfg.batch_size = self.batch;
        cfg.epochs = self.epochs;
        cfg.dropout_rate = self.dropout;
        cfg.threads = self.threads;
        cfg
    }

    fn model_config(&self, schema: &FeatureSchema) -> ModelConfig {
        ModelConfig::new(schema, self.task, self.model, self.embed).with_hidden(self.hidden)
    }

    /// `key = value` lines echoed into reports.
    fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task = {}", self.task);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "embed = {}", self.embed);
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "seq_len = {}", self.seq_len);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "hidden = {}", self.hidden);
        let _ = writeln!(s, "val_frac = {}", self.val_frac);
        s
    }
}

fn base_schema(kind: &str) -> Result<FeatureSchema> {
    match kind {
        "unsw" => Ok(FeatureSchema::unsw()),
        "synth" => Err(Error::InvalidArgument(
            "synth schemas are inferred from the CSV header; pass --schema unsw for UNSW data \
             or use a cache/synth pipeline"
                .into(),
        )),
        other => Err(Error::InvalidArgument(format!("unknown schema `{other}`"))),
    }
}

/// Infer the schema of a synth-generated CSV from its header: every column
/// except id, proto, attack_cat, label is continuous; classes are read from
/// the data.
fn infer_synth_schema(path: &Path) -> Result<FeatureSchema> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut continuous = Vec::new();
    for h in headers.iter() {
        let h = h.trim();
        if h != "id" && h != "proto" && h != "attack_cat" && h != "label" {
            continuous.push(data::ContinuousFeature { name: h.to_string(), binary: false });
        }
    }
    let mut protos = Vec::new();
    let mut classes = Vec::new();
    let proto_idx = headers.iter().position(|h| h.trim() == "proto");
    let cat_idx = headers.iter().position(|h| h.trim() == "attack_cat");
    let (proto_idx, cat_idx) = match (proto_idx, cat_idx) {
        (Some(p), Some(c)) => (p, c),
        _ => return Err(Error::MissingColumn("proto/attack_cat".into())),
    };
    for row in reader.records() {
        let row = row?;
        if let Some(p) = row.get(proto_idx) {
            protos.push(p.trim().to_string());
        }
        if let Some(c) = row.get(cat_idx) {
            let c = c.trim().to_string();
            if !classes.contains(&c) {
                classes.push(c);
            }
        }
    }
    classes.sort();
    // Normal must be class 0.
    if let Some(pos) = classes.iter().position(|c| c == "Normal") {
        classes.swap(0, pos);
        classes[1..].sort();
    }
    Ok(FeatureSchema {
        continuous,
        categorical: vec![data::CategoricalFeature {
            name: "proto".into(),
            vocab: data::Vocabulary::from_values(protos.iter().map(String::as_str)),
            embed_dim: 5,
        }],
        multi_label_column: "attack_cat".into(),
        binary_label_column: "label".into(),
        class_names: classes,
    })
}

struct Dataset {
    schema: FeatureSchema,
    records: Vec<FlowRecord>,
}

/// Load training data from a cache or CSV. For CSVs, vocabularies are fit on
/// this (training) data.
fn load_train_data(
    csv: &Option<PathBuf>,
    cache: &Option<PathBuf>,
    schema_kind: &str,
) -> Result<Dataset> {
    match (cache, csv) {
        (Some(cache_path), _) => {
            let (schema, records) = data::read_cache(cache_path)?;
            Ok(Dataset { schema, records })
        }
        (None, Some(csv_path)) => {
            let schema = if schema_kind == "unsw" {
                let base = base_schema("unsw")?;
                let raw = data::load_csv_raw(csv_path, &base)?;
                let schema = fit_vocabularies(&raw, &base)?;
                let (records, tally) = data::encode_records(&raw, &schema);
                report_unknowns(&tally);
                return Ok(Dataset { schema, records });
            } else {
                infer_synth_schema(csv_path)?
            };
            let (records, tally) = data::load_csv(csv_path, &schema)?;
            report_unknowns(&tally);
            Ok(Dataset { schema, records })
        }
        (None, None) => Err(Error::InvalidArgument(
            "provide --train-csv or --train-cache".into(),
        )),
    }
}

fn report_unknowns(tally: &data::UnknownTally) {
    if tally.total() > 0 {
        for (name, n) in &tally.per_feature {
            if *n > 0 {
                eprintln!("note: {n} values of `{name}` were outside the vocabulary (mapped to UNK)");
            }
        }
    }
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn report_csv(report: &EvalReport, echo: &str) -> String {
    let mut out = String::from("metric,value\n");
    out.push_str(&format!("accuracy,{:.9}\n", report.accuracy));
    if let (Some(p), Some(r), Some(f1)) = (report.precision, report.recall, report.f1) {
        out.push_str(&format!("precision,{p:.9}\n"));
        out.push_str(&format!("recall,{r:.9}\n"));
        out.push_str(&format!("f1,{f1:.9}\n"));
    }
    if report.confusion.k() > 2 {
        out.push_str(&format!("macro_recall,{:.9}\n", report.macro_recall));
        for (c, r) in report.per_class_recall.iter().enumerate() {
            out.push_str(&format!("recall_class_{c},{r:.9}\n"));
        }
    }
    for line in echo.lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            out.push_str(&format!("config.{k},{v}\n"));
        }
    }
    out
}

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let base = base_schema(&args.schema).or_else(|_| infer_synth_schema(&args.train_csv))?;
    let raw = data::load_csv_raw(&args.train_csv, &base)?;
    let schema = fit_vocabularies(&raw, &base)?;
    let (records, tally) = data::encode_records(&raw, &schema);
    report_unknowns(&tally);

    fs::create_dir_all(&args.out_dir)?;
    let train_cache = args.out_dir.join("train.cache");
    data::write_cache(&train_cache, &schema, &records)?;
    println!(
        "prepared {} training records -> {} (schema hash {:#018x})",
        records.len(),
        train_cache.display(),
        schema.hash()
    );
    let hist = data::class_histogram(&records, schema.n_classes());
    for (name, count) in schema.class_names.iter().zip(&hist) {
        println!("  {name}: {count}");
    }

    if let Some(test_csv) = &args.test_csv {
        let (test_records, test_tally) = data::load_csv(test_csv, &schema)?;
        report_unknowns(&test_tally);
        let test_cache = args.out_dir.join("test.cache");
        data::write_cache(&test_cache, &schema, &test_records)?;
        println!("prepared {} test records -> {}", test_records.len(), test_cache.display());
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let eff = Effective::build(&args.common)?;
    let dataset = load_train_data(&args.train_csv, &args.train_cache, &args.schema)?;
    let schema = dataset.schema;
    let mut records = dataset.records;

    let stats = fit_normalization(&records, &schema);
    apply_normalization(&mut records, &stats, &schema);
    let windows = make_windows(records, eff.seq_len)?;
    let (train_ws, val_ws) = split_validation(&windows, eff.val_frac, eff.seed)?;

    let model_cfg = eff.model_config(&schema);
    let train_cfg = eff.train_config();
    let outcome = train(&model_cfg, &schema, &train_ws, &val_ws, &train_cfg)?;
    if outcome.diverged {
        eprintln!("warning: training diverged; checkpoint holds the last good parameters");
    }

    fs::create_dir_all(&eff.out_dir)?;
    let ckpt_path = args
        .checkpoint
        .unwrap_or_else(|| eff.out_dir.join("model.ckpt"));
    save_checkpoint(&ckpt_path, &outcome.params, &train_cfg, &schema, &stats)?;
    write_text(&eff.out_dir.join("history.csv"), &history_to_csv(&outcome.history))?;

    let mut summary = String::new();
    let _ = writeln!(summary, "# effective config");
    summary.push_str(&eff.echo());
    if let (Some(e), Some(a)) = (outcome.best_epoch, outcome.best_val_accuracy) {
        let _ = writeln!(summary, "best_epoch = {e}");
        let _ = writeln!(summary, "best_val_accuracy = {a:.6}");
    }
    write_text(&eff.out_dir.join("train_summary.txt"), &summary)?;
    println!(
        "checkpoint -> {} (best val acc {})",
        ckpt_path.display(),
        outcome
            .best_val_accuracy
            .map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}

fn load_eval_records(
    args: &EvalArgs,
    ckpt_schema: &FeatureSchema,
) -> Result<Vec<FlowRecord>> {
    match (&args.test_cache, &args.test_csv) {
        (Some(cache), _) => {
            let (_, records) = data::read_cache_checked(cache, ckpt_schema.hash())?;
            Ok(records)
        }
        (None, Some(csv)) => {
            let (records, tally) = data::load_csv(csv, ckpt_schema)?;
            report_unknowns(&tally);
            Ok(records)
        }
        (None, None) => Err(Error::InvalidArgument("provide --test-csv or --test-cache".into())),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let eff = Effective::build(&args.common)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let mut records = load_eval_records(&args, &ckpt.schema)?;
    apply_normalization(&mut records, &ckpt.stats, &ckpt.schema);
    let windows = make_windows(records, ckpt.train.sequence_length)?;

    let report = evaluate_windows(&ckpt.params, &windows)?;
    let mut echo = eff.echo();
    let _ = writeln!(echo, "checkpoint = {}", args.checkpoint.display());
    let _ = writeln!(echo, "checkpoint_task = {}", ckpt.model.task);
    let _ = writeln!(echo, "checkpoint_seq_len = {}", ckpt.train.sequence_length);

    fs::create_dir_all(&eff.out_dir)?;
    let text = format!("{}\n# effective config\n{}", report.to_text(), echo);
    write_text(&eff.out_dir.join("report.txt"), &text)?;
    write_text(&eff.out_dir.join("report.csv"), &report_csv(&report, &echo))?;
    print!("{}", report.to_text());
    Ok(())
}

fn parse_lengths(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad sequence length `{s}`")))
        })
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let eff = Effective::build(&args.common)?;
    let lengths = parse_lengths(&args.lengths)?;
    let dataset = load_train_data(&args.train_csv, &args.train_cache, &args.schema)?;
    let schema = dataset.schema;
    let mut records = dataset.records;
    let stats = fit_normalization(&records, &schema);
    apply_normalization(&mut records, &stats, &schema);

    let model_cfg = eff.model_config(&schema);
    let train_cfg = eff.train_config();
    let rows = sweep_sequence_length(&model_cfg, &schema, &records, &train_cfg, &lengths, eff.val_frac)?;

    fs::create_dir_all(&eff.out_dir)?;
    let csv_text = format!("{}# config\n{}", sweep_to_csv(&rows), comment_block(&eff.echo()));
    write_text(&eff.out_dir.join("sweep.csv"), &csv_text)?;
    for r in &rows {
        println!("L={}\tval_acc={:.4}", r.seq_len, r.val_accuracy);
    }
    Ok(())
}

fn comment_block(echo: &str) -> String {
    echo.lines().map(|l| format!("# {l}\n")).collect()
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let eff = Effective::build(&args.common)?;
    let lengths = parse_lengths(&args.lengths)?;
    let params = match &args.checkpoint {
        Some(path) => load_checkpoint(path)?.params,
        None => {
            // Default-capacity model over the UNSW schema shape with small
            // placeholder vocabularies.
            let mut schema = FeatureSchema::unsw();
            for cat in &mut schema.categorical {
                cat.vocab = data::Vocabulary::from_values(["a", "b", "c"]);
            }
            let cfg = eff.model_config(&schema);
            ModelParams::init(&cfg, &schema, eff.seed)?
        }
    };

    let rows = benchmark_prediction_time(&params, &lengths, args.reps)?;
    let (slope, intercept, r2) = linear_fit_r2(&rows);
    fs::create_dir_all(&eff.out_dir)?;
    let mut csv_text = timing_to_csv(&rows);
    let _ = writeln!(csv_text, "# fit slope={slope:.3e} intercept={intercept:.3e} r2={r2:.6}");
    write_text(&eff.out_dir.join("timing.csv"), &csv_text)?;
    for r in &rows {
        println!("L={}\t{:.6} s/sequence", r.seq_len, r.seconds_per_sequence);
    }
    println!("linear fit: slope={slope:.3e} s/step, intercept={intercept:.3e} s, R^2={r2:.4}");
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let rule = match args.rule.to_ascii_lowercase().as_str() {
        "equality" => SynthRule::Equality,
        "membership-parity" | "membership" => SynthRule::MembershipParity,
        other => return Err(Error::InvalidArgument(format!("unknown rule `{other}`"))),
    };
    if !(args.train_frac > 0.0 && args.train_frac < 1.0) {
        return Err(Error::InvalidArgument("train fraction must be in (0, 1)".into()));
    }
    let cfg = SynthConfig {
        n: args.n,
        num_classes: args.classes,
        pattern_length: args.k,
        vocab_size: args.vocab,
        n_continuous: 3,
        noise: args.noise,
        rule,
        seed: args.seed,
    };
    let (schema, records) = data::synth_generate(&cfg)?;
    fs::create_dir_all(&args.out_dir)?;
    let n_train = ((args.train_frac * records.len() as f64) + 0.5).floor() as usize;
    let train_path = args.out_dir.join("synth_train.csv");
    let test_path = args.out_dir.join("synth_test.csv");
    write_csv(&schema, &records[..n_train], &train_path)?;
    write_csv(&schema, &records[n_train..], &test_path)?;
    println!(
        "wrote {} train / {} test records ({} rule, k={}, vocab={}) -> {}",
        n_train,
        records.len() - n_train,
        cfg.rule,
        cfg.pattern_length,
        cfg.vocab_size,
        args.out_dir.display()
    );
    Ok(())
}

// Re-export for the thin binary.
pub use run as main_entry;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.conf");
        fs::write(&cfg_path, "# comment\ntask = multi\nseq_len = 7\nlr = 0.01\n").unwrap();
        let common = CommonArgs {
            config: Some(cfg_path),
            seq_len: Some(9), // flag wins over file
            ..Default::default()
        };
        let eff = Effective::build(&common).unwrap();
        assert_eq!(eff.task, Task::Multi);
        assert_eq!(eff.seq_len, 9);
        assert_eq!(eff.lr, 0.01);
    }

    #[test]
    fn bad_config_line_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.conf");
        fs::write(&cfg_path, "task binary\n").unwrap();
        let common = CommonArgs { config: Some(cfg_path), ..Default::default() };
        assert!(Effective::build(&common).is_err());
    }

    #[test]
    fn unknown_flag_fails_with_usage() {
        let code = run(["seqnids", "train", "--no-such-flag"]);
        assert_ne!(code, 0);
    }

    #[test]
    fn length_list_parses() {
        assert_eq!(parse_lengths("10, 60,110").unwrap(), vec![10, 60, 110]);
        assert!(parse_lengths("10,x").is_err());
    }
}
