//! Label propagation with learned edge weights.
//!
//! Each core edge gets a weight `w = f(x)` from its feature row. Labels are
//! spread by the Jacobi iteration in [`solver`]; the weight function is fit
//! by gradient descent on the squared error of the propagated scores at the
//! training targets ([`train`]). With every weight fixed to one this is the
//! classic label propagation.

pub mod model;
pub mod solver;
pub mod train;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use self::model::{Activation, EdgeWeightModel};
pub use self::solver::{direct_solve_oracle, jacobi_propagate, JacobiResult, PropagationState};
pub use self::train::{loss, train, Objective, TrainOutcome};

use crate::core_graph::CoreGraph;
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeatureScheme};
use crate::tsv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossScope {
    /// Every non-source node; targets count as 1, the rest as 0.
    NonSource,
    TargetsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Gd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub loss_scope: LossScope,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            tol: 1e-6,
            max_iter: 100,
            seed: 0,
            loss_scope: LossScope::NonSource,
            hidden_dim: 30,
            activation: Activation::Logistic,
            optimizer: Optimizer::Gd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be ≥ 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be ≥ 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// How edge weights are chosen at prediction time.
#[derive(Debug, Clone, Copy)]
pub enum WeightMode<'m> {
    /// Every weight is one: classic label propagation.
    Fixed,
    Learned(&'m EdgeWeightModel, &'m FeatureMatrix),
}

impl WeightMode<'_> {
    pub fn weights(&self, graph: &CoreGraph) -> Result<Vec<f64>> {
        match self {
            WeightMode::Fixed => Ok(vec![1.0; graph.edge_count()]),
            WeightMode::Learned(model, features) => {
                if features.n_rows() != graph.edge_count() {
                    return Err(Error::DimensionMismatch {
                        expected: graph.edge_count(),
                        got: features.n_rows(),
                    });
                }
                model.edge_weights(features)
            }
        }
    }
}

/// Propagates with every known node labeled 1 and returns a score for every
/// node of the graph.
pub fn predict(mode: WeightMode<'_>, graph: &CoreGraph, known: &[usize], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    if known.is_empty() {
        return Err(Error::NoSources);
    }
    let weights = mode.weights(graph)?;
    let state = PropagationState::with_known(graph, &weights, known)?;
    Ok(state.solve(tol, max_iter).y)
}

/// A trained model together with the feature catalog it was fit on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub scheme: FeatureScheme,
    pub catalog: Vec<String>,
    pub config: TrainConfig,
    pub model: EdgeWeightModel,
    pub loss_trace: Vec<f64>,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = tsv::create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(tsv::open(path)?)?)
    }

    /// Fails unless `features` uses the same scheme and catalog.
    pub fn check_features(&self, features: &FeatureMatrix) -> Result<()> {
        if features.scheme() != self.scheme {
            return Err(Error::WrongScheme {
                expected: self.scheme.to_string(),
                got: features.scheme().to_string(),
            });
        }
        if features.catalog() != self.catalog.as_slice() {
            return Err(Error::Config("feature catalog differs from the model's".into()));
        }
        Ok(())
    }
}

/// Equal-width histogram of weights in `[0, 1]`; the last bin is closed.
pub fn weight_histogram(weights: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &w in weights {
        let b = ((w * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 / bins as f64, (b + 1) as f64 / bins as f64, c))
        .collect()
}

/// Fraction of weights in `[0, 0.1] ∪ [0.9, 1]`.
pub fn extreme_weight_fraction(weights: &[f64]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let n = weights.iter().filter(|&&w| w <= 0.1 || w >= 0.9).count();
    n as f64 / weights.len() as f64
}

pub fn write_histogram<W: Write>(weights: &[f64], bins: usize, mut w: W) -> std::io::Result<()> {
    writeln!(w, "bin_lo\tbin_hi\tcount\tfraction")?;
    let total = weights.len().max(1) as f64;
    for (lo, hi, c) in weight_histogram(weights, bins) {
        writeln!(w, "{lo:.4}\t{hi:.4}\t{c}\t{:.6}", c as f64 / total)?;
    }
    Ok(())
}

/// Scores restricted to `candidates`, ranked by descending score (ties by
/// firm key). Candidates outside the graph score 0. Rows:
/// `(firm, score, rank)`.
pub fn rank_scores<'a>(
    graph: &'a CoreGraph,
    scores: &[f64],
    candidates: impl IntoIterator<Item = &'a str>,
) -> Vec<(String, f64, usize)> {
    let mut rows: Vec<(String, f64)> = candidates
        .into_iter()
        .map(|c| (c.to_string(), graph.node_index(c).map_or(0.0, |i| scores[i])))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows.into_iter()
        .enumerate()
        .map(|(r, (f, s))| (f, s, r + 1))
        .collect()
}

pub fn write_scores<W: Write>(rows: &[(String, f64, usize)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "firm\tscore\trank")?;
    for (f, s, r) in rows {
        writeln!(w, "{f}\t{s:.12}\t{r}")?;
    }
    Ok(())
}

/// Reads `firm <TAB> score [<TAB> rank]`, skipping the header.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let name = path.display().to_string();
    let mut out = BTreeMap::new();
    for (n, line) in tsv::read_lines(path)?.into_iter().skip(1) {
        if tsv::is_skippable(&line) {
            continue;
        }
        let mut parts = line.split('\t');
        let firm = parts.next().unwrap_or("").to_string();
        let score: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| tsv::parse_error(&name, n, "bad score"))?;
        out.insert(firm, score);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn path3() -> CoreGraph {
        let r = || BTreeSet::from(["r".to_string()]);
        CoreGraph::from_pairs([("a", "b", r()), ("b", "c", r()), ("x", "y", r())])
    }

    #[test]
    fn fixed_mode_three_chain() {
        let g = path3();
        let (a, c) = (g.node_index("a").unwrap(), g.node_index("c").unwrap());
        // Known: a=1. Treat c as labeled 0 through the general solver.
        let mut labeled = vec![false; g.node_count()];
        labeled[a] = true;
        labeled[c] = true;
        let mut y0 = vec![0.0; g.node_count()];
        y0[a] = 1.0;
        let w = WeightMode::Fixed.weights(&g).unwrap();
        let r = jacobi_propagate(&g, &w, &y0, &labeled, 1e-14, 10_000).unwrap();
        let b = g.node_index("b").unwrap();
        assert!((r.y[a] - 0.75).abs() < 1e-10);
        assert!((r.y[b] - 0.5).abs() < 1e-10);
        assert!((r.y[c] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn unreachable_candidate_scores_zero() {
        let g = path3();
        let scores = predict(WeightMode::Fixed, &g, &[g.node_index("a").unwrap()], 1e-10, 1000).unwrap();
        assert_eq!(scores[g.node_index("x").unwrap()], 0.0);
        assert_eq!(scores[g.node_index("y").unwrap()], 0.0);
        assert!(predict(WeightMode::Fixed, &g, &[], 1e-10, 10).is_err());
    }

    #[test]
    fn larger_weight_larger_score() {
        let g = CoreGraph::from_pairs([("a", "b", BTreeSet::from(["r".to_string()]))]);
        let y = |w: f64| {
            let s = PropagationState::with_known(&g, &[w], &[0]).unwrap();
            s.solve(1e-14, 10_000).y[1]
        };
        assert!((y(0.9) - 0.9 / (2.0 - 0.81)).abs() < 1e-10);
        assert!((y(0.5) - 0.5 / 1.75).abs() < 1e-10);
        assert!(y(0.9) > y(0.5));
    }

    #[test]
    fn histogram_and_ranking() {
        let h = weight_histogram(&[0.0, 0.05, 0.5, 1.0], 10);
        assert_eq!(h.len(), 10);
        assert_eq!(h[0].2, 2);
        assert_eq!(h[5].2, 1);
        assert_eq!(h[9].2, 1);
        assert_eq!(extreme_weight_fraction(&[0.0, 0.05, 0.5, 1.0]), 0.75);

        let g = path3();
        let rows = rank_scores(&g, &[0.1, 0.9, 0.9, 0.0, 0.0], ["c", "b", "a", "zz"]);
        assert_eq!(rows[0], ("b".to_string(), 0.9, 1));
        assert_eq!(rows[1], ("c".to_string(), 0.9, 2));
        assert_eq!(rows[3], ("zz".to_string(), 0.0, 4));
    }
}
