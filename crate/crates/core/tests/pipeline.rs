use std::collections::BTreeMap;

use hinlp::core_graph::build_core;
use hinlp::features::{build_features, FeatureConfig};
use hinlp::labels::{build_lists, choose_delta, Splits};
use hinlp::metrics::evaluate_category;
use hinlp::propagation::{predict, train, ModelFile, Optimizer, WeightMode};
use hinlp::store::{IngestConfig, IngestReport};
use hinlp::synthetic::{generate_hin, PlantedConfig};
use hinlp::{CoreGraph, FeatureMatrix, FeatureScheme, HinStore, TrainConfig};

fn planted() -> PlantedConfig {
    PlantedConfig {
        n_firms: 300,
        n_aux_nodes: 60,
        n_seeds: 25,
        rng_seed: 9,
        ..Default::default()
    }
}

#[test]
fn files_round_trip_through_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let config = planted();
    let mut hin = generate_hin(&config).unwrap();
    let mut report = IngestReport::default();
    hin.store.clean(
        &IngestConfig {
            min_count: 5,
            ..Default::default()
        },
        &mut report,
    );
    hin.store.save(&p("store.json")).unwrap();
    let store = HinStore::load(&p("store.json")).unwrap();
    assert_eq!(store.relation_count(), hin.store.relation_count());

    let core = build_core(&store, &hin.firms).unwrap().graph;
    core.save(&p("core.tsv")).unwrap();
    let core2 = CoreGraph::load(&p("core.tsv")).unwrap();
    assert_eq!(core2.nodes(), core.nodes());
    assert_eq!(core2.edges(), core.edges());

    let x = build_features(&store, &core, FeatureScheme::PathSegment, &FeatureConfig::default()).unwrap();
    x.save(&p("features.tsv")).unwrap();
    let x2 = FeatureMatrix::load(&p("features.tsv")).unwrap();
    assert_eq!(x2, x);
    assert_eq!(x.n_rows(), core.edge_count());

    let (lists, _) = build_lists(hin.events.iter(), &[config.category.as_str()]);
    let list = &lists[&config.category];
    let mut spec = config.split_spec();
    spec.delta_days = choose_delta(list, &spec, config.long_delta_days, config.min_sources);
    let splits = Splits::compute(list, Some(&hin.firms), &spec);
    splits.save(&p("splits.tsv")).unwrap();
    assert_eq!(Splits::load(&p("splits.tsv")).unwrap(), splits);

    let idx = |set: &std::collections::BTreeSet<String>| -> Vec<usize> {
        set.iter().filter_map(|f| core.node_index(f)).collect()
    };
    let (sources, targets) = (idx(&splits.sources), idx(&splits.targets));
    let train_config = TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: 0.05,
        epochs: 40,
        ..Default::default()
    };
    let outcome = train(&x, &core, &sources, &targets, &train_config).unwrap();
    assert!(outcome.loss_trace.last().unwrap() < &outcome.loss_trace[0]);
    let file = ModelFile {
        scheme: x.scheme(),
        catalog: x.catalog().to_vec(),
        config: train_config.clone(),
        model: outcome.model,
        loss_trace: outcome.loss_trace,
    };
    file.save(&p("model.json")).unwrap();
    let loaded = ModelFile::load(&p("model.json")).unwrap();
    assert_eq!(loaded, file);
    loaded.check_features(&x).unwrap();

    let known = idx(&splits.known());
    let learned = predict(WeightMode::Learned(&loaded.model, &x), &core, &known, 1e-6, 100).unwrap();
    let fixed = predict(WeightMode::Fixed, &core, &known, 1e-6, 100).unwrap();
    for (name, scores) in [("learned", &learned), ("fixed", &fixed)] {
        let by_firm: BTreeMap<String, f64> = hin
            .firms
            .iter()
            .map(|f| (f.clone(), core.node_index(f).map_or(0.0, |i| scores[i])))
            .collect();
        let r = evaluate_category(&config.category, name, &by_firm, &splits.candidates, &splits.positives).unwrap();
        assert!((0.0..=1.0).contains(&r.auc_roc) && (0.0..=1.0).contains(&r.auc_pr), "{r:?}");
    }
}

#[test]
fn model_rejects_mismatched_features() {
    let config = planted();
    let hin = generate_hin(&config).unwrap();
    let core = build_core(&hin.store, &hin.firms).unwrap().graph;
    let seg = build_features(&hin.store, &core, FeatureScheme::PathSegment, &FeatureConfig::default()).unwrap();
    let rel = build_features(&hin.store, &core, FeatureScheme::CoreRelation, &FeatureConfig::default()).unwrap();
    let model = hinlp::EdgeWeightModel::init(seg.n_cols(), 30, hinlp::propagation::Activation::Logistic, 0);
    let file = ModelFile {
        scheme: seg.scheme(),
        catalog: seg.catalog().to_vec(),
        config: TrainConfig::default(),
        model,
        loss_trace: vec![],
    };
    assert!(file.check_features(&seg).is_ok());
    assert!(file.check_features(&rel).is_err());
}
