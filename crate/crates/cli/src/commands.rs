use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clickintent_core::analyze::{
    analyze_dataset, cluster_mispredicted, confusion_partition, kmeans, metric_by_name, rank_impacts, silhouette_score,
    write_clusters, write_impacts, write_series, KMeansConfig, SeriesConvention, ThresholdPolicy,
};
use clickintent_core::contrast::{
    aggregate_impacts, render_report, ExpertTag, GroupingKey, ReportFormat, TagStore, Verdict,
};
use clickintent_core::ingest::{parse_events, read_labels, sessionize, write_events, write_labels, EventFormat, FeatureSchema};
use clickintent_core::simgen::{generate, write_truth, SimConfig};
use clickintent_core::train::{
    build_dataset, evaluate_at_k, read_dataset, read_model_file, split_by_time, train_model, write_dataset,
    write_model_file, Dataset, Hyperparams, LabeledSequence,
};
use clickintent_core::{analyze, Error, Result};
use clickintent_serve::{AppState, Exports, LoadedModel};
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Parser, Serialize)]
#[command(name = "clickintent", version, about = "Clickstream outcome prediction and sequence analysis")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Generate synthetic sessions with ground truth.
    Simulate(SimulateArgs),
    /// Parse events and labels into an encoded dataset.
    Ingest(IngestArgs),
    /// Fit a model on the training windows of a dataset.
    Train(TrainArgs),
    /// Score a model k events before the outcome.
    Eval(EvalArgs),
    /// Prediction trajectories, impact events and intent clusters.
    Analyze(AnalyzeArgs),
    /// Group impact events by an event attribute.
    Contrast(ContrastArgs),
    /// Record or list expert tags.
    Tag(TagArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Marketplace,
    PlantedMotif,
    PlantedShock,
    MispredictionModes,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "marketplace")]
    pub preset: Preset,
    /// Full generator configuration (JSON); overrides --preset and --sessions.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub sessions: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory for events, labels, truth, schema and config.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Windows to train on (comma separated); defaults to all but the latest.
    #[arg(long, value_delimiter = ',')]
    pub train_windows: Vec<String>,
    #[arg(long, default_value_t = 32)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub pos_weight: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional JSON file receiving the per-epoch loss curve.
    #[arg(long)]
    pub loss_curve: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Events hidden before the outcome.
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Windows to evaluate on; defaults to every window the model was not trained on.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Restrict to these windows; defaults to all.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<String>,
    /// Impact threshold: an absolute distance (0.2) or a percentile (p95).
    #[arg(long, default_value = "p95")]
    pub impact_threshold: String,
    #[arg(long, default_value = "abs")]
    pub metric: String,
    #[arg(long, default_value = "full")]
    pub convention: String,
    /// Decision threshold for the confusion partition.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write one tab-separated trajectory file per session.
    #[arg(long)]
    pub trajectories: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ContrastArgs {
    #[arg(long)]
    pub impacts: PathBuf,
    #[arg(long, default_value = "page_type")]
    pub feature: String,
    #[arg(long, default_value = "table")]
    pub format: String,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TagArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[command(subcommand)]
    pub action: TagAction,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TagAction {
    Record {
        #[arg(long)]
        author: String,
        /// feature=value
        #[arg(long)]
        key: String,
        /// suspected_cause | benign | needs_data
        #[arg(long)]
        verdict: String,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long)]
        timestamp_ms: Option<i64>,
    },
    List {
        #[arg(long)]
        key: Option<String>,
    },
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, env = "CLICKINTENT_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, env = "CLICKINTENT_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, env = "CLICKINTENT_EXPORTS")]
    pub exports: Option<PathBuf>,
    #[arg(long, env = "CLICKINTENT_TAGS", default_value = "tags.log")]
    pub tags: PathBuf,
    #[arg(long, env = "CLICKINTENT_TOKEN", hide_env_values = true)]
    #[serde(skip)]
    pub token: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(open(path)?)
}

fn select_windows(items: Vec<LabeledSequence>, windows: &[String]) -> Vec<LabeledSequence> {
    if windows.is_empty() {
        items
    } else {
        items.into_iter().filter(|i| windows.contains(&i.window)).collect()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    eprintln!("{}", json!({ "config": &cli.command }));
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::Contrast(a) => contrast(a),
        Command::Tag(a) => tag(a),
        Command::Serve(a) => serve(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_reader(open(path)?)?,
        None => match a.preset {
            Preset::Marketplace => SimConfig::marketplace(a.seed, a.sessions),
            Preset::PlantedMotif => SimConfig::planted_motif(a.seed, a.sessions),
            Preset::PlantedShock => SimConfig::planted_shock(a.seed, a.sessions),
            Preset::MispredictionModes => SimConfig::misprediction_modes(a.seed, a.sessions),
        },
    };
    cfg.seed = a.seed;
    let out = generate(&cfg)?;
    fs::create_dir_all(&a.out)?;
    write_events(create(&a.out.join("events.jsonl"))?, &out.events)?;
    write_labels(create(&a.out.join("labels.jsonl"))?, &out.labels)?;
    write_truth(create(&a.out.join("truth.jsonl"))?, &out.truth)?;
    fs::write(a.out.join("schema.json"), cfg.default_schema().to_json())?;
    write_json(&a.out.join("sim_config.json"), &cfg)?;
    let positives = out.labels.iter().filter(|l| l.outcome.is_positive()).count();
    println!("{}", json!({"sessions": cfg.sessions, "events": out.events.len(), "positives": positives, "out": a.out}));
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let parsed = parse_events(open(&a.events)?, &EventFormat::default())?;
    let labels = read_labels(open(&a.labels)?)?;
    let schema = FeatureSchema::from_json(&fs::read_to_string(&a.schema)?)?;
    for r in parsed.rejects.iter().take(10) {
        eprintln!("{}", json!({"rejected_line": r.line, "reason": r.reason}));
    }
    let (ds, report) = build_dataset(&sessionize(parsed.events), &labels, &schema)?;
    let mut w = create(&a.out)?;
    write_dataset(&mut w, &ds)?;
    w.flush()?;
    println!(
        "{}",
        json!({
            "sessions": report.sessions,
            "encoded": ds.items.len(),
            "rejected_lines": parsed.rejects.len(),
            "unlabeled": report.unlabeled.len(),
            "defaulted_attributes": report.defaulted_attributes,
            "truncated_sessions": report.truncated_sessions,
            "schema_fingerprint": schema.fingerprint(),
        })
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let windows = if a.train_windows.is_empty() {
        let mut all: Vec<String> = ds.items.iter().map(|i| i.window.clone()).collect();
        all.sort();
        all.dedup();
        if all.len() > 1 {
            all.pop();
        }
        all
    } else {
        a.train_windows.clone()
    };
    let split = split_by_time(ds.items, &windows)?;
    for w in &split.warnings {
        eprintln!("{}", json!({"warning": w}));
    }
    let hp = Hyperparams {
        hidden_dim: a.hidden_dim,
        epochs: a.epochs,
        batch_size: a.batch_size,
        pos_weight: a.pos_weight,
        ..Hyperparams::default()
    };
    let run = train_model(&split.train, &ds.schema, &hp, a.seed)?;
    write_model_file(&run.model, &a.out)?;
    if let Some(path) = &a.loss_curve {
        write_json(path, &json!({"initial_loss": run.initial_loss, "epochs": run.loss_curve}))?;
    }
    println!(
        "{}",
        json!({
            "train_windows": windows,
            "train_sequences": split.train.len(),
            "eval_sequences": split.eval_len(),
            "initial_loss": run.initial_loss,
            "final_loss": run.loss_curve.last(),
            "model": a.out,
        })
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = read_model_file(&a.model)?;
    let ds = load_dataset(&a.dataset)?;
    let items = if a.windows.is_empty() {
        let held_out: Vec<LabeledSequence> =
            ds.items.iter().filter(|i| !model.meta.data_windows.contains(&i.window)).cloned().collect();
        if held_out.is_empty() {
            eprintln!("{}", json!({"warning": "every window was used for training; evaluating on all of them"}));
            ds.items
        } else {
            held_out
        }
    } else {
        select_windows(ds.items, &a.windows)
    };
    let report = evaluate_at_k(&model, &items, a.k, a.threshold)?;
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let model = read_model_file(&a.model)?;
    let items = select_windows(load_dataset(&a.dataset)?.items, &a.windows);
    let policy: ThresholdPolicy = a.impact_threshold.parse()?;
    let metric = metric_by_name(&a.metric)?;
    let convention: SeriesConvention = a.convention.parse()?;
    fs::create_dir_all(&a.out)?;

    let sessions = analyze_dataset(&model, &items, metric.as_ref(), convention)?;
    write_series(create(&a.out.join("series.ndjson"))?, convention, &sessions)?;
    let pool: Vec<f64> = sessions.iter().flat_map(|s| s.distances.iter().copied()).collect();
    let impacts = rank_impacts(&sessions, policy)?;
    write_impacts(create(&a.out.join("impacts.ndjson"))?, policy, policy.resolve(&pool), &impacts)?;

    let partition = confusion_partition(&model, &items, a.threshold)?;
    write_json(&a.out.join("partition.json"), &partition)?;
    let mis = partition.mispredicted();
    let seqs: Vec<_> = items.iter().filter(|i| mis.contains(i.session_id())).map(|i| &i.sequence).collect();
    let mut silhouette = None;
    let mut cluster_count = 0;
    if seqs.len() >= a.clusters.max(1) {
        let clusters = cluster_mispredicted(&model, &seqs, a.clusters, a.seed)?;
        cluster_count = clusters.len();
        let points: Vec<Vec<f64>> =
            seqs.iter().map(|s| model.embedding(s).map(|e| e.values().to_vec())).collect::<Result<_>>()?;
        let fit = kmeans(&points, a.clusters, a.seed, KMeansConfig::default())?;
        silhouette = silhouette_score(&points, &fit.assignments);
        write_clusters(create(&a.out.join("clusters.ndjson"))?, a.seed, &clusters)?;
    } else {
        eprintln!("{}", json!({"warning": format!("{} mispredicted sessions, too few for {} clusters", seqs.len(), a.clusters)}));
        write_clusters(create(&a.out.join("clusters.ndjson"))?, a.seed, &[])?;
    }
    if let Some(s) = silhouette {
        eprintln!("{}", json!({"advisory": "silhouette score for the chosen cluster count", "k": a.clusters, "silhouette": s}));
    }
    if a.trajectories {
        write_trajectories(&a.out.join("trajectories"), &sessions)?;
    }
    println!(
        "{}",
        json!({
            "sessions": sessions.len(),
            "impacts": impacts.len(),
            "threshold": policy.resolve(&pool),
            "tp": partition.tp.len(), "tn": partition.tn.len(), "fp": partition.fp.len(), "fn": partition.fn_.len(),
            "clusters": cluster_count,
            "out": a.out,
        })
    );
    Ok(())
}

fn write_trajectories(dir: &Path, sessions: &[analyze::AnalyzedSession]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in sessions {
        let mut w = create(&dir.join(format!("{}.tsv", s.session_id)))?;
        writeln!(w, "click\tpage_type\tevent_type\tprobability\tdistance")?;
        for (t, p) in s.predictions.iter().enumerate() {
            let ev = &s.events[t];
            let page = ev.get("page_type").map_or("", String::as_str);
            let kind = ev.get("event_type").map_or("", String::as_str);
            let d = if t == 0 { String::new() } else { s.distances[t - 1].to_string() };
            writeln!(w, "{}\t{page}\t{kind}\t{p}\t{d}", t + 1)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn contrast(a: ContrastArgs) -> Result<()> {
    let impacts = analyze::read_impacts(open(&a.impacts)?)?;
    let format: ReportFormat = a.format.parse()?;
    let report = aggregate_impacts(&impacts, &a.feature)?;
    let text = render_report(&report, format)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn tag(a: TagArgs) -> Result<()> {
    let store = TagStore::open(&a.store)?;
    match a.action {
        TagAction::Record { author, key, verdict, note, timestamp_ms } => {
            let ts = timestamp_ms.unwrap_or_else(|| {
                std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_millis() as i64)
            });
            let tag = ExpertTag { author, key: key.parse()?, verdict: verdict.parse::<Verdict>()?, note, timestamp_ms: ts };
            let ack = store.record(&tag)?;
            println!("{}", json!({"sequence": ack.sequence, "tag": tag}));
        }
        TagAction::List { key } => {
            let key: Option<GroupingKey> = key.map(|k| k.parse()).transpose()?;
            for t in store.list(key.as_ref())? {
                println!("{}", serde_json::to_string(&t)?);
            }
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    if a.token.is_empty() {
        return Err(Error::Config("an auth token is required (--token or CLICKINTENT_TOKEN)".into()));
    }
    let model = a.model.as_deref().map(LoadedModel::from_file).transpose()?;
    let exports = match &a.exports {
        Some(dir) => Exports::load(dir)?,
        None => Exports::default(),
    };
    let state = Arc::new(AppState::new(model, exports, TagStore::open(&a.tags)?, a.token.clone()));
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("{}", json!({"listening": a.addr.to_string()}));
    rt.block_on(clickintent_serve::serve(a.addr, state))?;
    Ok(())
}
