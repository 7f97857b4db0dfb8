//! Jacobi iteration for the propagation system and a dense reference solve.
//!
//! With `D_ii` the unweighted degree and `A_ii = 1[i labeled] + D_ii`, the
//! iteration is `Y ← A⁻¹(W Y + Y⁰)`. Because every weight is at most one,
//! `A` dominates `W` row by row and the iteration converges to the solution
//! of `(A − W) Y = Y⁰`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::core_graph::CoreGraph;
use crate::error::{Error, Result};

/// Nodes per rayon task in a sweep; small graphs run on one thread.
const SWEEP_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiResult {
    pub y: Vec<f64>,
    pub iterations: usize,
    /// `‖Y^{t+1} − Y^t‖_∞` of the last sweep.
    pub residual: f64,
    pub converged: bool,
}

/// The fixed parts of one propagation problem.
#[derive(Debug, Clone)]
pub struct PropagationState<'g> {
    pub graph: &'g CoreGraph,
    pub weights: Vec<f64>,
    pub y0: Vec<f64>,
    pub labeled: Vec<bool>,
    /// `A_ii = 1[labeled] + D_ii`.
    pub a_diag: Vec<f64>,
}

impl<'g> PropagationState<'g> {
    pub fn new(graph: &'g CoreGraph, weights: &[f64], y0: &[f64], labeled: &[bool]) -> Result<Self> {
        let n = graph.node_count();
        if weights.len() != graph.edge_count() {
            return Err(Error::DimensionMismatch {
                expected: graph.edge_count(),
                got: weights.len(),
            });
        }
        for v in [y0.len(), labeled.len()] {
            if v != n {
                return Err(Error::DimensionMismatch { expected: n, got: v });
            }
        }
        if !labeled.iter().any(|&l| l) {
            return Err(Error::NoSources);
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::Config(format!("edge weight {w} outside [0, 1]")));
        }
        let a_diag = (0..n)
            .map(|i| f64::from(u8::from(labeled[i])) + graph.degree(i) as f64)
            .collect();
        Ok(PropagationState {
            graph,
            weights: weights.to_vec(),
            y0: y0.to_vec(),
            labeled: labeled.to_vec(),
            a_diag,
        })
    }

    /// Labels every node in `known` with 1.
    pub fn with_known(graph: &'g CoreGraph, weights: &[f64], known: &[usize]) -> Result<Self> {
        let n = graph.node_count();
        let mut labeled = vec![false; n];
        let mut y0 = vec![0.0; n];
        for &i in known {
            labeled[i] = true;
            y0[i] = 1.0;
        }
        Self::new(graph, weights, &y0, &labeled)
    }

    /// `(W y)_i = Σ_j w_ij y_j`.
    pub fn weighted_sum(&self, y: &[f64], out: &mut [f64]) {
        let g = self.graph;
        let w = &self.weights;
        out.par_iter_mut()
            .with_min_len(SWEEP_CHUNK)
            .enumerate()
            .for_each(|(i, o)| {
                *o = g.adjacency(i).iter().map(|&(j, e)| w[e] * y[j]).sum();
            });
    }

    /// One sweep `next = A⁻¹(W y + Y⁰)`; returns `‖next − y‖_∞`.
    pub fn sweep(&self, y: &[f64], next: &mut [f64]) -> f64 {
        self.weighted_sum(y, next);
        let mut residual: f64 = 0.0;
        for i in 0..next.len() {
            let a = self.a_diag[i];
            next[i] = if a > 0.0 { (next[i] + self.y0[i]) / a } else { 0.0 };
            residual = residual.max((next[i] - y[i]).abs());
        }
        debug_assert!(next.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        residual
    }

    /// Iterates from `Y⁰` until the sweep residual is at most `tol` or
    /// `max_iter` sweeps have run.
    pub fn solve(&self, tol: f64, max_iter: usize) -> JacobiResult {
        let mut y = self.y0.clone();
        let mut next = vec![0.0; y.len()];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < max_iter {
            residual = self.sweep(&y, &mut next);
            std::mem::swap(&mut y, &mut next);
            iterations += 1;
            if residual <= tol {
                break;
            }
        }
        JacobiResult {
            y,
            iterations,
            residual,
            converged: residual <= tol,
        }
    }

    /// Like [`Self::solve`] but keeps every iterate `Y^0 … Y^T`.
    pub fn trajectory(&self, tol: f64, max_iter: usize) -> Vec<Vec<f64>> {
        let mut traj = vec![self.y0.clone()];
        for _ in 0..max_iter {
            let mut next = vec![0.0; self.y0.len()];
            let residual = self.sweep(traj.last().expect("non-empty"), &mut next);
            traj.push(next);
            if residual <= tol {
                break;
            }
        }
        traj
    }

    /// Upper bound on `‖A⁻¹W‖_∞`: the largest row ratio `Σ_j w_ij / A_ii`.
    pub fn iteration_norm_bound(&self) -> f64 {
        (0..self.graph.node_count())
            .map(|i| {
                let s: f64 = self.graph.adjacency(i).iter().map(|&(_, e)| self.weights[e]).sum();
                if self.a_diag[i] > 0.0 {
                    s / self.a_diag[i]
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }
}

pub fn jacobi_propagate(
    graph: &CoreGraph,
    weights: &[f64],
    y0: &[f64],
    labeled: &[bool],
    tol: f64,
    max_iter: usize,
) -> Result<JacobiResult> {
    if tol <= 0.0 || max_iter == 0 {
        return Err(Error::Config("tolerance must be > 0 and max_iter ≥ 1".into()));
    }
    Ok(PropagationState::new(graph, weights, y0, labeled)?.solve(tol, max_iter))
}

/// Largest graph the dense reference solve accepts.
pub const DIRECT_SOLVE_MAX_NODES: usize = 2000;

/// Solves `(A − W) Y = Y⁰` by dense LU factorization. Connected components
/// without a labeled node have `Y = 0` (the limit of the iteration) and are
/// left out of the system, which may be singular there.
pub fn direct_solve_oracle(graph: &CoreGraph, weights: &[f64], y0: &[f64], labeled: &[bool]) -> Result<Vec<f64>> {
    let n = graph.node_count();
    if n > DIRECT_SOLVE_MAX_NODES {
        return Err(Error::Config(format!("{n} nodes is too many for a dense solve")));
    }
    let state = PropagationState::new(graph, weights, y0, labeled)?;
    let mut active = vec![false; n];
    for start in (0..n).filter(|&i| labeled[i]) {
        if active[start] {
            continue;
        }
        active[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &(j, _) in graph.adjacency(i) {
                if !active[j] {
                    active[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    let nodes: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    let mut pos = vec![usize::MAX; n];
    for (p, &i) in nodes.iter().enumerate() {
        pos[i] = p;
    }
    let m_size = nodes.len();
    let mut m = DMatrix::<f64>::zeros(m_size, m_size);
    for (p, &i) in nodes.iter().enumerate() {
        m[(p, p)] = state.a_diag[i];
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        if active[i] {
            m[(pos[i], pos[j])] -= weights[e];
            m[(pos[j], pos[i])] -= weights[e];
        }
    }
    let b = DVector::from_iterator(m_size, nodes.iter().map(|&i| y0[i]));
    let sol = m.lu().solve(&b).ok_or(Error::Singular)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let mut y = vec![0.0; n];
    for (p, &i) in nodes.iter().enumerate() {
        y[i] = sol[p];
    }
    Ok(y)
}
