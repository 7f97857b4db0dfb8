mod manifest;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use hinlp::core_graph::{build_core, CoreGraph};
use hinlp::event_study::{read_prices, run_event_study, write_event_study};
use hinlp::features::{build_features, FeatureConfig, FeatureMatrix, FeatureScheme};
use hinlp::interpret::{
    all_basis_importance, bnmf, repeated_importance, segment_peaks, write_importance, write_peaks, BnmfConfig, Link,
};
use hinlp::labels::{build_lists, choose_delta, read_events, SplitSpec, Splits};
use hinlp::metrics::{evaluate_category, EvalReport};
use hinlp::propagation::{
    predict, rank_scores, read_scores, train, write_histogram, write_scores, ModelFile, TrainConfig, WeightMode,
};
use hinlp::store::{ingest_files, write_report, HinStore, IngestConfig};
use hinlp::synthetic::{run_benchmark, write_bench_table, write_seed_table, BenchConfig, Method};
use hinlp::tsv;

use crate::manifest::{sibling, Recorder};

#[derive(Parser, Debug)]
#[command(name = "hinlp", version, about = "Label propagation with learned edge weights on heterogeneous networks")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load edge and node files into a cleaned store.
    Ingest(IngestArgs),
    /// Build the firm-to-firm core network.
    BuildCore(BuildCoreArgs),
    /// Split one category's events into sources, targets and candidates.
    Split(SplitArgs),
    /// Compute edge features of the core network.
    Features(FeaturesArgs),
    /// Fit the edge-weight model.
    Train(TrainArgs),
    /// Score candidates by label propagation.
    Predict(PredictArgs),
    /// AUC-ROC and AUC-PR of a score file.
    Evaluate(EvaluateArgs),
    /// Compare returns around news events with returns elsewhere.
    EventStudy(EventStudyArgs),
    /// Factorize features and measure per-basis importance.
    Explain(ExplainArgs),
    /// Run the planted benchmark.
    Bench(BenchArgs),
    /// Histogram of learned edge weights.
    ExportWeights(ExportWeightsArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    #[arg(long, num_args = 1.., required = true)]
    edges: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    nodes: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    min_count: usize,
    /// Comma-separated relation types to drop.
    #[arg(long, value_delimiter = ',')]
    blacklist: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    ownership_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BuildCoreArgs {
    #[arg(long)]
    store: PathBuf,
    /// One firm key per line.
    #[arg(long)]
    universe: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long, value_parser = parse_date)]
    cutoff: NaiveDate,
    #[arg(long, default_value_t = 31)]
    delta: i64,
    #[arg(long, value_parser = parse_date)]
    horizon_end: NaiveDate,
    #[arg(long)]
    category: String,
    /// Firms eligible as candidates, one per line.
    #[arg(long)]
    universe: Option<PathBuf>,
    /// Use `--long-delta` when fewer than this many sources precede the window.
    #[arg(long)]
    min_sources: Option<usize>,
    #[arg(long, default_value_t = 182)]
    long_delta: i64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FeaturesArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    core: PathBuf,
    #[arg(long, value_parser = parse_scheme)]
    scheme: FeatureScheme,
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    #[arg(long, default_value_t = 3000)]
    top_k: usize,
    /// Skip intermediates with more incident relations; 0 disables.
    #[arg(long, default_value_t = 10_000)]
    expansion_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    core: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// TOML file of training settings (`learning_rate = 0.1`, ...).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long, required_unless_present = "fixed")]
    model: Option<PathBuf>,
    #[arg(long, required_unless_present = "fixed")]
    features: Option<PathBuf>,
    #[arg(long)]
    core: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// Every weight 1 (classic label propagation).
    #[arg(long, conflicts_with_all = ["model", "features"])]
    fixed: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    /// A splits file, or a list of positive firm keys.
    #[arg(long)]
    positives: PathBuf,
    /// Candidate firm keys; defaults to the splits candidates or every
    /// scored firm.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    category: String,
    #[arg(long, default_value = "-")]
    method: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EventStudyArgs {
    #[arg(long)]
    prices: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value_t = 10)]
    window: usize,
    /// Only events of this category.
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 50)]
    rank: usize,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 300)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    bnmf_seed: u64,
    /// Plain squared-error NMF instead of the logistic link.
    #[arg(long)]
    plain_nmf: bool,
    /// Needed to retrain for `--reps` > 1.
    #[arg(long)]
    core: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Peaks per segment in the peaks table.
    #[arg(long, default_value_t = 3)]
    top_n: usize,
    /// Importance table; peaks go to `<out>.peaks.tsv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    /// TOML file with [planted], [ingest], [features] and [train] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "lp-fixed,lp-core-relation,lp-path,lp-path-segment")]
    methods: Vec<String>,
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Summary table; per-seed rows go to `<out>.seeds.tsv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExportWeightsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    tsv::parse_date(s)
}

fn parse_scheme(s: &str) -> std::result::Result<FeatureScheme, String> {
    s.parse::<FeatureScheme>().map_err(|e| e.to_string())
}

fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let mut w = tsv::create(path)?;
    fill(&mut w).with_context(|| format!("{}: write failed", path.display()))?;
    w.flush().with_context(|| format!("{}: write failed", path.display()))?;
    Ok(())
}

fn load_splits(path: &Path) -> Result<Splits> {
    Ok(Splits::load(path)?)
}

fn indices(graph: &CoreGraph, firms: &BTreeSet<String>) -> Vec<usize> {
    firms.iter().filter_map(|f| graph.node_index(f)).collect()
}

fn run_ingest(a: &IngestArgs, rec: &mut Recorder) -> Result<()> {
    let config = IngestConfig {
        min_count: a.min_count,
        blacklist: a.blacklist.iter().cloned().collect(),
        ownership_threshold: a.ownership_threshold,
        ..Default::default()
    };
    rec.set_config(&config)?;
    a.edges.iter().chain(&a.nodes).for_each(|p| rec.input(p));
    let (store, report) = ingest_files(&a.edges, &a.nodes, &config)?;
    store.save(&a.out)?;
    let report_path = sibling(&a.out, "report.tsv");
    write_file(&report_path, |w| write_report(&report, w))?;
    info!("{} entities, {} relations", store.entity_count(), store.relation_count());
    rec.output(&a.out);
    rec.output(&report_path);
    Ok(())
}

fn run_build_core(a: &BuildCoreArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_config(a)?;
    rec.input(&a.store);
    rec.input(&a.universe);
    let store = HinStore::load(&a.store)?;
    let universe = tsv::read_key_list(&a.universe)?;
    let core = build_core(&store, &universe)?;
    if !core.isolated.is_empty() {
        warn!("{} universe members have no core edge", core.isolated.len());
    }
    core.graph.save(&a.out)?;
    rec.output(&a.out);
    Ok(())
}

fn run_split(a: &SplitArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_config(a)?;
    rec.input(&a.events);
    let (events, errors) = read_events(&a.events)?;
    if !errors.is_empty() {
        warn!("{} malformed event lines skipped", errors.len());
    }
    let (lists, unknown) = build_lists(events.iter(), hinlp::labels::DEFAULT_CATEGORIES.as_slice());
    if !unknown.is_empty() {
        warn!("{} events with unknown categories skipped", unknown.len());
    }
    let list = lists
        .get(&a.category)
        .ok_or_else(|| anyhow!("no events for category {:?}", a.category))?;
    let mut spec = SplitSpec::new(a.cutoff, a.delta, a.horizon_end)?;
    if let Some(min) = a.min_sources {
        spec.delta_days = choose_delta(list, &spec, a.long_delta, min);
        info!("window: {} days", spec.delta_days);
    }
    let universe = match &a.universe {
        Some(p) => {
            rec.input(p);
            Some(tsv::read_key_list(p)?)
        }
        None => None,
    };
    let splits = Splits::compute(list, universe.as_deref(), &spec);
    splits.save(&a.out)?;
    rec.output(&a.out);
    Ok(())
}

fn run_features(a: &FeaturesArgs, rec: &mut Recorder) -> Result<()> {
    let config = FeatureConfig {
        max_len: a.max_len,
        top_k: a.top_k,
        expansion_cap: (a.expansion_cap > 0).then_some(a.expansion_cap),
    };
    rec.set_config(a)?;
    rec.input(&a.store);
    rec.input(&a.core);
    let store = HinStore::load(&a.store)?;
    let core = CoreGraph::load(&a.core)?;
    let x = build_features(&store, &core, a.scheme, &config)?;
    x.save(&a.out)?;
    rec.output(&a.out);
    Ok(())
}

fn read_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("{}: cannot read", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow!("{}: {}", p.display(), e.message()))
        }
    }
}

fn run_train(a: &TrainArgs, rec: &mut Recorder) -> Result<()> {
    let mut config = read_train_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    rec.set_config(&config)?;
    rec.seeds.push(config.seed);
    for p in [&a.features, &a.core, &a.splits].into_iter().chain(&a.config) {
        rec.input(p);
    }
    let x = FeatureMatrix::load(&a.features)?;
    let graph = CoreGraph::load(&a.core)?;
    let splits = load_splits(&a.splits)?;
    let sources = indices(&graph, &splits.sources);
    let targets = indices(&graph, &splits.targets);
    info!("{} sources, {} targets in the core", sources.len(), targets.len());
    let outcome = train(&x, &graph, &sources, &targets, &config)?;
    let file = ModelFile {
        scheme: x.scheme(),
        catalog: x.catalog().to_vec(),
        config,
        model: outcome.model,
        loss_trace: outcome.loss_trace,
    };
    file.save(&a.out)?;
    rec.output(&a.out);
    Ok(())
}

fn run_predict(a: &PredictArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_config(a)?;
    rec.input(&a.core);
    rec.input(&a.splits);
    let graph = CoreGraph::load(&a.core)?;
    let splits = load_splits(&a.splits)?;
    let known: Vec<usize> = indices(&graph, &splits.known());
    let scores = if a.fixed {
        let c = TrainConfig::default();
        predict(WeightMode::Fixed, &graph, &known, c.tol, c.max_iter)?
    } else {
        let (mp, fp) = (a.model.as_ref().expect("clap"), a.features.as_ref().expect("clap"));
        rec.input(mp);
        rec.input(fp);
        let model = ModelFile::load(mp)?;
        let x = FeatureMatrix::load(fp)?;
        model.check_features(&x)?;
        rec.seeds.push(model.config.seed);
        predict(
            WeightMode::Learned(&model.model, &x),
            &graph,
            &known,
            model.config.tol,
            model.config.max_iter,
        )?
    };
    let candidates: Vec<&str> = if splits.candidates.is_empty() {
        let known = splits.known();
        graph.nodes().iter().map(String::as_str).filter(|n| !known.contains(*n)).collect()
    } else {
        splits.candidates.iter().map(String::as_str).collect()
    };
    let rows = rank_scores(&graph, &scores, candidates);
    write_file(&a.out, |w| write_scores(&rows, w))?;
    rec.output(&a.out);
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_config(a)?;
    rec.input(&a.scores);
    rec.input(&a.positives);
    let scores = read_scores(&a.scores)?;
    let is_splits = tsv::read_lines(&a.positives)?
        .first()
        .is_some_and(|(_, l)| l.trim_end() == "firm\trole");
    let (mut candidates, positives): (BTreeSet<String>, BTreeSet<String>) = if is_splits {
        let s = load_splits(&a.positives)?;
        (s.candidates, s.positives)
    } else {
        (BTreeSet::new(), tsv::read_key_list(&a.positives)?.into_iter().collect())
    };
    if let Some(p) = &a.candidates {
        rec.input(p);
        candidates = tsv::read_key_list(p)?.into_iter().collect();
    } else if candidates.is_empty() {
        candidates = scores.keys().cloned().collect();
    }
    let report = evaluate_category(&a.category, &a.method, &scores, &candidates, &positives)?;
    write_file(&a.out, |w| {
        writeln!(w, "{}", EvalReport::HEADER)?;
        report.write_row(w)
    })?;
    rec.output(&a.out);
    Ok(())
}

fn run_event_study_cmd(a: &EventStudyArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_config(a)?;
    rec.input(&a.prices);
    rec.input(&a.events);
    let series = read_prices(&a.prices)?;
    let (mut events, errors) = read_events(&a.events)?;
    if !errors.is_empty() {
        warn!("{} malformed event lines skipped", errors.len());
    }
    if let Some(c) = &a.category {
        events.retain(|e| &e.category == c);
    }
    let study = run_event_study(&series, &events, a.window)?;
    write_file(&a.out, |w| write_event_study(&study, w))?;
    rec.output(&a.out);
    Ok(())
}

fn run_explain(a: &ExplainArgs, rec: &mut Recorder) -> Result<()> {
    if a.reps == 0 {
        bail!("--reps must be ≥ 1");
    }
    rec.set_config(a)?;
    rec.input(&a.model);
    rec.input(&a.features);
    let model = ModelFile::load(&a.model)?;
    let x = FeatureMatrix::load(&a.features)?;
    model.check_features(&x)?;
    let factors = bnmf(
        &x,
        &BnmfConfig {
            rank: a.rank,
            iters: a.iters,
            seed: a.bnmf_seed,
            link: if a.plain_nmf { Link::Identity } else { Link::Logistic },
        },
    )?;
    let seeds: Vec<u64> = (0..a.reps as u64).map(|r| model.config.seed + r).collect();
    rec.seeds = seeds.clone();
    rec.seeds.push(a.bnmf_seed);
    let table = if a.reps == 1 {
        repeated_importance(&seeds, |_| Ok(all_basis_importance(&model.model, &factors)?))?
    } else {
        let (Some(core), Some(splits)) = (&a.core, &a.splits) else {
            bail!("--reps > 1 retrains the model and needs --core and --splits");
        };
        rec.input(core);
        rec.input(splits);
        let graph = CoreGraph::load(core)?;
        let splits = load_splits(splits)?;
        let sources = indices(&graph, &splits.sources);
        let targets = indices(&graph, &splits.targets);
        repeated_importance(&seeds, |seed| {
            let config = TrainConfig {
                seed,
                ..model.config.clone()
            };
            let trained = train(&x, &graph, &sources, &targets, &config)?;
            all_basis_importance(&trained.model, &factors)
        })?
    };
    write_file(&a.out, |w| write_importance(&table, w))?;
    rec.output(&a.out);
    if x.scheme() == FeatureScheme::PathSegment {
        let peaks = table
            .rows
            .iter()
            .map(|r| Ok((r.basis, segment_peaks(&factors, &x, r.basis, a.top_n)?)))
            .collect::<hinlp::Result<Vec<_>>>()?;
        let path = sibling(&a.out, "peaks.tsv");
        write_file(&path, |w| write_peaks(&peaks, w))?;
        rec.output(&path);
    } else {
        warn!("peaks need segment features; skipped");
    }
    Ok(())
}

fn read_bench_config(path: Option<&Path>) -> Result<BenchConfig> {
    match path {
        None => Ok(BenchConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("{}: cannot read", p.display()))?;
            toml::from_str(&text).map_err(|e| anyhow!("{}: {}", p.display(), e.message()))
        }
    }
}

fn run_bench(a: &BenchArgs, rec: &mut Recorder) -> Result<()> {
    let config = read_bench_config(a.config.as_deref())?;
    if let Some(p) = &a.config {
        rec.input(p);
    }
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<hinlp::Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (a.first_seed..a.first_seed + a.seeds).collect();
    rec.set_config(&config)?;
    rec.seeds = seeds.clone();
    let result = run_benchmark(&config, &methods, &seeds)?;
    write_file(&a.out, |w| write_bench_table(&result, w))?;
    let per_seed = sibling(&a.out, "seeds.tsv");
    write_file(&per_seed, |w| write_seed_table(&result, w))?;
    rec.output(&a.out);
    rec.output(&per_seed);
    if !result.failures.is_empty() {
        warn!("{} of {} seeds failed", result.failures.len(), seeds.len());
    }
    Ok(())
}

fn run_export_weights(a: &ExportWeightsArgs, rec: &mut Recorder) -> Result<()> {
    rec.set_config(a)?;
    rec.input(&a.model);
    rec.input(&a.features);
    let model = ModelFile::load(&a.model)?;
    let x = FeatureMatrix::load(&a.features)?;
    model.check_features(&x)?;
    let weights = model.model.edge_weights(&x)?;
    write_file(&a.out, |w| write_histogram(&weights, a.bins, w))?;
    rec.output(&a.out);
    Ok(())
}

fn dispatch(cli: &Cli, rec: &mut Recorder) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => run_ingest(a, rec),
        Command::BuildCore(a) => run_build_core(a, rec),
        Command::Split(a) => run_split(a, rec),
        Command::Features(a) => run_features(a, rec),
        Command::Train(a) => run_train(a, rec),
        Command::Predict(a) => run_predict(a, rec),
        Command::Evaluate(a) => run_evaluate(a, rec),
        Command::EventStudy(a) => run_event_study_cmd(a, rec),
        Command::Explain(a) => run_explain(a, rec),
        Command::Bench(a) => run_bench(a, rec),
        Command::ExportWeights(a) => run_export_weights(a, rec),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::BuildCore(_) => "build-core",
        Command::Split(_) => "split",
        Command::Features(_) => "features",
        Command::Train(_) => "train",
        Command::Predict(_) => "predict",
        Command::Evaluate(_) => "evaluate",
        Command::EventStudy(_) => "event-study",
        Command::Explain(_) => "explain",
        Command::Bench(_) => "bench",
        Command::ExportWeights(_) => "export-weights",
    }
}

/// `io` for filesystem failures, `data` for everything else.
fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if let Some(e) = cause.downcast_ref::<hinlp::Error>() {
            return match e {
                hinlp::Error::Io { .. } | hinlp::Error::Source { .. } => "io",
                hinlp::Error::Parse { .. } | hinlp::Error::Serde(_) => "parse",
                hinlp::Error::Config(_) => "config",
                _ => "data",
            };
        }
    }
    "data"
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: config: {e}");
            return ExitCode::from(2);
        }
    }
    let mut rec = Recorder::new(subcommand_name(&cli.command), cli.threads);
    let outcome = dispatch(&cli, &mut rec).and_then(|()| rec.finish(argv));
    match outcome {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {}: {message}", error_kind(&e));
            ExitCode::from(1)
        }
    }
}
