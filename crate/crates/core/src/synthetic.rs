//! Planted benchmark networks.
//!
//! Firms are linked by typed relations; a hidden subset of relation types is
//! conductive. Labels start at seed firms and spread in dated rounds, but
//! only across conductive relations. A method that learns which relations
//! carry labels should beat one that weighs every edge alike.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::core_graph::build_core;
use crate::error::{Error, Result};
use crate::features::{build_features, FeatureConfig, FeatureMatrix, FeatureScheme};
use crate::labels::{build_lists, choose_delta, NewsEvent, SplitSpec, Splits};
use crate::metrics::{evaluate_category, EvalReport};
use crate::propagation::{predict, train, Optimizer, TrainConfig, WeightMode};
use crate::store::{EntityKind, HinStore, IngestConfig, IngestReport, Relation};

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").expect("valid literal date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub n_firms: usize,
    pub n_aux_nodes: usize,
    pub n_rel_types: usize,
    pub n_conductive: usize,
    /// Mean number of firm–firm relations per firm.
    pub firm_degree: f64,
    /// Mean number of firm–auxiliary relations per firm.
    pub aux_degree: f64,
    /// Chance that a label crosses one conductive relation.
    pub diffusion_prob: f64,
    pub n_seeds: usize,
    /// A crossing takes between 1 and this many days.
    pub round_days: i64,
    pub rng_seed: u64,
    pub category: String,
    /// Seed firms are dated uniformly in `[start, seed_end]`.
    pub start: NaiveDate,
    pub seed_end: NaiveDate,
    pub cutoff: NaiveDate,
    /// Target window; widened to `long_delta_days` when fewer than
    /// `min_sources` firms precede it.
    pub delta_days: i64,
    pub long_delta_days: i64,
    pub min_sources: usize,
    pub horizon_end: NaiveDate,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_firms: 2000,
            n_aux_nodes: 500,
            n_rel_types: 20,
            n_conductive: 4,
            firm_degree: 6.0,
            aux_degree: 2.0,
            diffusion_prob: 0.7,
            n_seeds: 100,
            round_days: 730,
            rng_seed: 0,
            category: "Product/Service".to_string(),
            start: date("2012-01-01"),
            seed_end: date("2017-02-01"),
            cutoff: date("2017-02-01"),
            delta_days: 31,
            long_delta_days: 182,
            min_sources: 500,
            horizon_end: date("2018-05-31"),
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_firms < 2 {
            return bad("n_firms must be ≥ 2");
        }
        if self.n_conductive == 0 || self.n_conductive >= self.n_rel_types {
            return bad("conductive relations must be a non-empty proper subset");
        }
        if !(0.0..=1.0).contains(&self.diffusion_prob) {
            return bad("diffusion_prob must lie in [0, 1]");
        }
        if !(self.firm_degree >= 0.0 && self.aux_degree >= 0.0) {
            return bad("degrees must be ≥ 0");
        }
        if self.n_aux_nodes == 0 && self.aux_degree > 0.0 {
            return bad("aux_degree > 0 needs auxiliary nodes");
        }
        if self.n_seeds == 0 || self.n_seeds > self.n_firms {
            return bad("n_seeds must lie in 1..=n_firms");
        }
        if self.round_days < 1 {
            return bad("round_days must be ≥ 1");
        }
        if !(self.start < self.cutoff && self.start <= self.seed_end && self.seed_end <= self.horizon_end) {
            return bad("dates must satisfy start < cutoff, start ≤ seed_end ≤ horizon_end");
        }
        SplitSpec::new(self.cutoff, self.delta_days, self.horizon_end)?;
        SplitSpec::new(self.cutoff, self.long_delta_days, self.horizon_end)?;
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            cutoff: self.cutoff,
            delta_days: self.delta_days,
            horizon_end: self.horizon_end,
        }
    }

    pub fn rel_type(&self, r: usize) -> String {
        format!("rel{r:02}")
    }

    pub fn firm_id(&self, i: usize) -> String {
        format!("F{i:05}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlantedTruth {
    pub conductive: BTreeSet<String>,
    pub seeds: BTreeSet<String>,
    /// First infection date per infected firm, including dates past the
    /// horizon that produced no event.
    pub infected: BTreeMap<String, NaiveDate>,
}

pub struct PlantedHin {
    pub store: HinStore,
    pub events: Vec<NewsEvent>,
    pub truth: PlantedTruth,
    /// Firm ids, the prediction universe.
    pub firms: Vec<String>,
}

/// Draws a planted network and runs the diffusion.
pub fn generate_hin(config: &PlantedConfig) -> Result<PlantedHin> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let n = config.n_firms;
    let firms: Vec<String> = (0..n).map(|i| config.firm_id(i)).collect();
    let mut store = HinStore::new();
    for f in &firms {
        store.entity_mut(f).kind = EntityKind::Firm;
    }
    for a in 0..config.n_aux_nodes {
        let e = store.entity_mut(&format!("A{a:05}"));
        e.kind = if a % 2 == 0 {
            EntityKind::Person
        } else {
            EntityKind::Location
        };
    }

    let mut types: Vec<usize> = (0..config.n_rel_types).collect();
    types.shuffle(&mut rng);
    let conductive: BTreeSet<usize> = types[..config.n_conductive].iter().copied().collect();

    // Firm–firm relations; `links` keeps the conductive ones for diffusion.
    let n_firm_rel = (config.firm_degree * n as f64 / 2.0).round() as usize;
    let mut links: Vec<(usize, usize)> = Vec::new();
    for _ in 0..n_firm_rel {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let r = rng.gen_range(0..config.n_rel_types);
        store.add_relation(Relation::new(&firms[a], config.rel_type(r), &firms[b]));
        if conductive.contains(&r) {
            links.push((a, b));
        }
    }
    let n_aux_rel = (config.aux_degree * n as f64).round() as usize;
    for _ in 0..n_aux_rel {
        let f = rng.gen_range(0..n);
        let a = rng.gen_range(0..config.n_aux_nodes);
        let r = rng.gen_range(0..config.n_rel_types);
        store.add_relation(Relation::new(&firms[f], config.rel_type(r), format!("A{a:05}")));
    }

    // Each direction of each conductive link transmits with the configured
    // chance after a random delay; drawn up front so the outcome does not
    // depend on visiting order.
    let mut out: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    for &(a, b) in &links {
        for (u, v) in [(a, b), (b, a)] {
            let crosses = rng.gen_bool(config.diffusion_prob);
            let delay = rng.gen_range(1..=config.round_days);
            if crosses {
                out[u].push((v, delay));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let span = (config.seed_end - config.start).num_days();
    let mut heap = BinaryHeap::new();
    let mut seeds = BTreeSet::new();
    for &s in &order[..config.n_seeds] {
        let d = config.start + Duration::days(rng.gen_range(0..=span));
        heap.push(Reverse((d, s)));
        seeds.insert(firms[s].clone());
        if out[s].is_empty() {
            warn!("seed {} has no outgoing conductive link", firms[s]);
        }
    }
    let mut infected: Vec<Option<NaiveDate>> = vec![None; n];
    while let Some(Reverse((d, u))) = heap.pop() {
        if infected[u].is_some() {
            continue;
        }
        infected[u] = Some(d);
        for &(v, delay) in &out[u] {
            if infected[v].is_none() {
                heap.push(Reverse((d + Duration::days(delay), v)));
            }
        }
    }

    let mut truth = PlantedTruth {
        conductive: conductive.iter().map(|&r| config.rel_type(r)).collect(),
        seeds,
        infected: BTreeMap::new(),
    };
    let mut events = Vec::new();
    for (i, d) in infected.iter().enumerate() {
        if let Some(d) = *d {
            truth.infected.insert(firms[i].clone(), d);
            if d <= config.horizon_end {
                events.push(NewsEvent {
                    date: d,
                    firm: firms[i].clone(),
                    category: config.category.clone(),
                });
            }
        }
    }
    events.sort_by(|a, b| (a.date, &a.firm).cmp(&(b.date, &b.firm)));
    Ok(PlantedHin {
        store,
        events,
        truth,
        firms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "lp-fixed")]
    Fixed,
    #[serde(rename = "lp-core-relation")]
    CoreRelation,
    #[serde(rename = "lp-path")]
    Path,
    #[serde(rename = "lp-path-segment")]
    PathSegment,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Fixed, Method::CoreRelation, Method::Path, Method::PathSegment];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fixed => "lp-fixed",
            Method::CoreRelation => "lp-core-relation",
            Method::Path => "lp-path",
            Method::PathSegment => "lp-path-segment",
        }
    }

    pub fn scheme(&self) -> Option<FeatureScheme> {
        match self {
            Method::Fixed => None,
            Method::CoreRelation => Some(FeatureScheme::CoreRelation),
            Method::Path => Some(FeatureScheme::Path),
            Method::PathSegment => Some(FeatureScheme::PathSegment),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp-fixed" | "fixed" => Ok(Method::Fixed),
            "lp-core-relation" | "lp-relation" | "core-relation" => Ok(Method::CoreRelation),
            "lp-path" | "path" => Ok(Method::Path),
            "lp-path-segment" | "lp-segment" | "path-segment" | "segment" => Ok(Method::PathSegment),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub planted: PlantedConfig,
    pub ingest: IngestConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
}

impl Default for BenchConfig {
    /// Plain gradient descent barely moves the weights on the planted
    /// networks within a few hundred epochs, so the benchmark trains with
    /// Adam.
    fn default() -> Self {
        BenchConfig {
            planted: PlantedConfig::default(),
            ingest: IngestConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: 150,
                optimizer: Optimizer::Adam,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<EvalReport>,
    /// Learned edge weights per trained method.
    pub weights: BTreeMap<Method, Vec<f64>>,
    pub loss_traces: BTreeMap<Method, Vec<f64>>,
}

/// Runs the full pipeline for one seed: generate, clean, build the core,
/// featurize, split, train, predict, evaluate.
pub fn run_seed(config: &BenchConfig, methods: &[Method], seed: u64) -> Result<SeedRun> {
    let planted = PlantedConfig {
        rng_seed: seed,
        ..config.planted.clone()
    };
    let hin = generate_hin(&planted)?;
    let mut store = hin.store;
    let mut report = IngestReport::default();
    store.clean(&config.ingest, &mut report);

    let core = build_core(&store, &hin.firms)?;
    let graph = core.graph;
    let (lists, _) = build_lists(hin.events.iter(), &[planted.category.as_str()]);
    let list = lists
        .get(&planted.category)
        .ok_or_else(|| Error::Config("no events generated".into()))?;
    let mut spec = planted.split_spec();
    spec.delta_days = choose_delta(list, &spec, planted.long_delta_days, planted.min_sources);
    let splits = Splits::compute(list, Some(&hin.firms), &spec);
    let index_of = |set: &BTreeSet<String>| -> Vec<usize> { set.iter().filter_map(|f| graph.node_index(f)).collect() };
    let sources = index_of(&splits.sources);
    let targets = index_of(&splits.targets);
    let known: Vec<usize> = {
        let mut k: Vec<usize> = sources.iter().chain(&targets).copied().collect();
        k.sort_unstable();
        k
    };
    info!(
        "seed {seed}: delta {} days, {} core nodes, {} edges, {} sources, {} targets, {} positives",
        spec.delta_days,
        graph.node_count(),
        graph.edge_count(),
        sources.len(),
        targets.len(),
        splits.positives.len()
    );

    let mut features: BTreeMap<FeatureScheme, FeatureMatrix> = BTreeMap::new();
    let mut run = SeedRun {
        seed,
        reports: Vec::new(),
        weights: BTreeMap::new(),
        loss_traces: BTreeMap::new(),
    };
    for &method in methods {
        let scores = match method.scheme() {
            None => predict(WeightMode::Fixed, &graph, &known, config.train.tol, config.train.max_iter)?,
            Some(scheme) => {
                if !features.contains_key(&scheme) {
                    features.insert(scheme, build_features(&store, &graph, scheme, &config.features)?);
                }
                let x = &features[&scheme];
                let train_config = TrainConfig {
                    seed,
                    ..config.train.clone()
                };
                let outcome = train(x, &graph, &sources, &targets, &train_config)?;
                let mode = WeightMode::Learned(&outcome.model, x);
                run.weights.insert(method, mode.weights(&graph)?);
                run.loss_traces.insert(method, outcome.loss_trace.clone());
                predict(mode, &graph, &known, config.train.tol, config.train.max_iter)?
            }
        };
        let by_firm: BTreeMap<String, f64> = hin
            .firms
            .iter()
            .map(|f| (f.clone(), graph.node_index(f).map_or(0.0, |i| scores[i])))
            .collect();
        run.reports.push(evaluate_category(
            &planted.category,
            method.as_str(),
            &by_firm,
            &splits.candidates,
            &splits.positives,
        )?);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub auc_roc_mean: f64,
    pub auc_roc_sd: f64,
    pub auc_pr_mean: f64,
    pub auc_pr_sd: f64,
    pub seeds_ok: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub runs: Vec<SeedRun>,
    pub failures: Vec<(u64, String)>,
    pub summary: Vec<MethodSummary>,
}

impl BenchResult {
    /// Learned weights of `method` for every successful seed.
    pub fn weights(&self, method: Method) -> Vec<&[f64]> {
        self.runs
            .iter()
            .filter_map(|r| r.weights.get(&method).map(Vec::as_slice))
            .collect()
    }

    pub fn summary_of(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every seed (in parallel) and summarizes each method by mean and
/// sample standard deviation over the seeds that succeeded.
pub fn run_benchmark(config: &BenchConfig, methods: &[Method], seeds: &[u64]) -> Result<BenchResult> {
    if seeds.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: seeds.len(),
        });
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods".into()));
    }
    config.planted.validate()?;
    config.train.validate()?;
    let outcomes: Vec<(u64, Result<SeedRun>)> = seeds.par_iter().map(|&s| (s, run_seed(config, methods, s))).collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => {
                warn!("seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    let summary = methods
        .iter()
        .map(|&m| {
            let pick = |f: fn(&EvalReport) -> f64| -> Vec<f64> {
                runs.iter()
                    .filter_map(|r| r.reports.iter().find(|e| e.method == m.as_str()).map(f))
                    .collect()
            };
            let roc = pick(|e| e.auc_roc);
            let pr = pick(|e| e.auc_pr);
            let (auc_roc_mean, auc_roc_sd) = mean_sd(&roc);
            let (auc_pr_mean, auc_pr_sd) = mean_sd(&pr);
            MethodSummary {
                method: m,
                auc_roc_mean,
                auc_roc_sd,
                auc_pr_mean,
                auc_pr_sd,
                seeds_ok: roc.len(),
            }
        })
        .collect();
    Ok(BenchResult {
        runs,
        failures,
        summary,
    })
}

pub fn write_bench_table<W: Write>(result: &BenchResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "method\tauc_roc_mean\tauc_roc_sd\tauc_pr_mean\tauc_pr_sd\tseeds_ok")?;
    for s in &result.summary {
        writeln!(
            w,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            s.method, s.auc_roc_mean, s.auc_roc_sd, s.auc_pr_mean, s.auc_pr_sd, s.seeds_ok
        )?;
    }
    for (seed, err) in &result.failures {
        writeln!(w, "# seed {seed} failed: {err}")?;
    }
    Ok(())
}

pub fn write_seed_table<W: Write>(result: &BenchResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "seed\t{}", EvalReport::HEADER)?;
    for run in &result.runs {
        for r in &run.reports {
            write!(w, "{}\t", run.seed)?;
            r.write_row(&mut w)?;
        }
    }
    Ok(())
}
