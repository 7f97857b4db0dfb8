//! Loss, its gradient through the unrolled Jacobi sweeps, and the training
//! loop.

use log::debug;

use super::model::{EdgeWeightModel, Forward};
use super::solver::PropagationState;
use super::{LossScope, Optimizer, TrainConfig};
use crate::core_graph::CoreGraph;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Which nodes enter the loss and what they are compared against.
#[derive(Debug, Clone)]
pub struct LossTargets {
    /// Nodes whose error counts.
    pub scored: Vec<usize>,
    /// Target value per node (1 for training targets, 0 otherwise).
    pub value: Vec<f64>,
}

impl LossTargets {
    pub fn new(n: usize, sources: &[usize], targets: &[usize], scope: LossScope) -> Result<Self> {
        let mut is_source = vec![false; n];
        sources.iter().for_each(|&i| is_source[i] = true);
        let mut value = vec![0.0; n];
        for &t in targets {
            if is_source[t] {
                return Err(Error::Config(format!("node {t} is both source and target")));
            }
            value[t] = 1.0;
        }
        let scored: Vec<usize> = match scope {
            LossScope::NonSource => (0..n).filter(|&i| !is_source[i]).collect(),
            LossScope::TargetsOnly => targets.to_vec(),
        };
        if scored.is_empty() {
            return Err(Error::Config("empty non-source set".into()));
        }
        Ok(LossTargets { scored, value })
    }

    /// Mean squared error over the scored nodes.
    pub fn loss(&self, y: &[f64]) -> f64 {
        let sum: f64 = self.scored.iter().map(|&i| (y[i] - self.value[i]).powi(2)).sum();
        sum / self.scored.len() as f64
    }

    pub fn loss_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        let scale = 2.0 / self.scored.len() as f64;
        for &i in &self.scored {
            g[i] = scale * (y[i] - self.value[i]);
        }
        g
    }
}

/// Mean squared error of `y` over non-source nodes against the target
/// indicator.
pub fn loss(y: &[f64], targets: &[usize], sources: &[usize]) -> Result<f64> {
    Ok(LossTargets::new(y.len(), sources, targets, LossScope::NonSource)?.loss(y))
}

/// `dL/dw` per edge by reverse-mode differentiation through the stored
/// iterates `Y^0 … Y^T`.
pub fn weight_gradient(state: &PropagationState<'_>, trajectory: &[Vec<f64>], d_final: &[f64]) -> Vec<f64> {
    let g = state.graph;
    let mut d_w = vec![0.0; g.edge_count()];
    let mut d_y = d_final.to_vec();
    let mut u = vec![0.0; d_y.len()];
    for t in (0..trajectory.len() - 1).rev() {
        let y_prev = &trajectory[t];
        for i in 0..u.len() {
            let a = state.a_diag[i];
            u[i] = if a > 0.0 { d_y[i] / a } else { 0.0 };
        }
        for (e, &(i, j)) in g.edges().iter().enumerate() {
            d_w[e] += u[i] * y_prev[j] + u[j] * y_prev[i];
        }
        if t > 0 {
            state.weighted_sum(&u, &mut d_y);
        }
    }
    d_w
}

/// Everything one gradient evaluation needs, fixed for a training run.
pub struct Objective<'a> {
    pub features: &'a FeatureMatrix,
    pub graph: &'a CoreGraph,
    pub sources: Vec<usize>,
    pub targets: LossTargets,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'a> Objective<'a> {
    pub fn new(
        features: &'a FeatureMatrix,
        graph: &'a CoreGraph,
        sources: &[usize],
        targets: &[usize],
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if sources.is_empty() {
            return Err(Error::NoSources);
        }
        if features.n_rows() != graph.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.edge_count(),
                got: features.n_rows(),
            });
        }
        Ok(Objective {
            features,
            graph,
            sources: sources.to_vec(),
            targets: LossTargets::new(graph.node_count(), sources, targets, config.loss_scope)?,
            tol: config.tol,
            max_iter: config.max_iter,
        })
    }

    fn propagate(&self, fwd: &Forward) -> Result<(PropagationState<'a>, Vec<Vec<f64>>)> {
        let state = PropagationState::with_known(self.graph, &fwd.weights, &self.sources)?;
        let traj = state.trajectory(self.tol, self.max_iter);
        Ok((state, traj))
    }

    pub fn loss(&self, model: &EdgeWeightModel) -> Result<f64> {
        let fwd = model.forward(self.features)?;
        let (_, traj) = self.propagate(&fwd)?;
        Ok(self.targets.loss(traj.last().expect("non-empty")))
    }

    /// Loss and its gradient with respect to [`EdgeWeightModel::params`].
    pub fn loss_and_gradient(&self, model: &EdgeWeightModel) -> Result<(f64, Vec<f64>)> {
        let fwd = model.forward(self.features)?;
        let (state, traj) = self.propagate(&fwd)?;
        let y = traj.last().expect("non-empty");
        let loss = self.targets.loss(y);
        let d_y = self.targets.loss_gradient(y);
        let d_w = weight_gradient(&state, &traj, &d_y);
        Ok((loss, model.backward(self.features, &fwd, &d_w)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: EdgeWeightModel,
    /// Loss before each update, plus the loss of the final parameters.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Full-batch training of the edge-weight model.
pub fn train(
    features: &FeatureMatrix,
    graph: &CoreGraph,
    sources: &[usize],
    targets: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let objective = Objective::new(features, graph, sources, targets, config)?;
    let mut model = EdgeWeightModel::init(features.n_cols(), config.hidden_dim, config.activation, config.seed);
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, grad) = objective.loss_and_gradient(&model)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergent { epoch, value: loss });
        }
        trace.push(loss);
        match config.optimizer {
            Optimizer::Gd => params
                .iter_mut()
                .zip(&grad)
                .for_each(|(p, g)| *p -= config.learning_rate * g),
            Optimizer::Adam => adam.step(&mut params, &grad, config.learning_rate),
        }
        model.set_params(&params)?;
        if epoch % 50 == 0 {
            debug!("epoch {epoch}: loss {loss:.6}");
        }
    }
    let final_loss = objective.loss(&model)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergent {
            epoch: config.epochs,
            value: final_loss,
        });
    }
    trace.push(final_loss);
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureScheme;
    use std::collections::BTreeSet;

    #[test]
    fn loss_examples() {
        // nodes 0 (source), 1 (target), 2, 3
        assert_eq!(loss(&[1.0, 1.0, 0.0, 0.0], &[1], &[0]).unwrap(), 0.0);
        assert!((loss(&[1.0, 0.0, 0.0, 0.0], &[1], &[0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((loss(&[1.0, 0.5, 0.2, 0.1], &[1], &[0]).unwrap() - 0.1).abs() < 1e-15);
        assert!(loss(&[1.0, 1.0], &[], &[0, 1]).is_err());
        assert!(loss(&[1.0, 1.0], &[0], &[0]).is_err());
    }

    #[test]
    fn targets_only_scope() {
        let t = LossTargets::new(4, &[0], &[1], LossScope::TargetsOnly).unwrap();
        assert_eq!(t.loss(&[1.0, 0.5, 0.9, 0.9]), 0.25);
    }

    fn chain(n: usize) -> (CoreGraph, FeatureMatrix) {
        let g = CoreGraph::from_pairs((1..n).map(|i| {
            (format!("n{:02}", i - 1), format!("n{i:02}"), BTreeSet::from([format!("r{}", i % 3)]))
        }));
        let rows = (0..g.edge_count()).map(|e| vec![(e % 3) as u32, 3]).collect();
        let catalog = (0..4).map(|c| format!("f{c}")).collect();
        (g, FeatureMatrix::new(FeatureScheme::CoreRelation, catalog, rows).unwrap())
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (g, x) = chain(8);
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            ..Default::default()
        };
        let out = train(&x, &g, &[0], &[1, 2], &config).unwrap();
        let init = EdgeWeightModel::init(4, config.hidden_dim, config.activation, config.seed);
        assert_eq!(out.model, init);
        assert_eq!(out.loss_trace.len(), 6);
        assert!(out.loss_trace.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (g, x) = chain(10);
        let config = TrainConfig {
            tol: 1e-14,
            max_iter: 60,
            hidden_dim: 5,
            ..Default::default()
        };
        let obj = Objective::new(&x, &g, &[0, 9], &[3, 4], &config).unwrap();
        let model = EdgeWeightModel::init(4, 5, config.activation, 3);
        let (_, grad) = obj.loss_and_gradient(&model).unwrap();
        let p = model.params();
        let h = 1e-5;
        for k in 0..p.len() {
            let eval = |delta: f64| {
                let mut m = model.clone();
                let mut q = p.clone();
                q[k] += delta;
                m.set_params(&q).unwrap();
                obj.loss(&m).unwrap()
            };
            let num = (eval(h) - eval(-h)) / (2.0 * h);
            let rel = (num - grad[k]).abs() / num.abs().max(grad[k].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {k}: analytic {} numeric {num}", grad[k]);
        }
    }

    #[test]
    fn training_reduces_loss() {
        let (g, x) = chain(12);
        let config = TrainConfig {
            learning_rate: 0.05,
            epochs: 40,
            optimizer: Optimizer::Adam,
            ..Default::default()
        };
        let out = train(&x, &g, &[0], &[1, 2], &config).unwrap();
        assert!(out.loss_trace.last().unwrap() < &out.loss_trace[0]);
    }
}
