//! The edge-weight function: a one-hidden-layer perceptron with a logistic
//! output, evaluated on sparse binary feature rows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Logistic,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Logistic => logistic(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `a` (and `z` for relu).
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Logistic => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `f(x) = σ(b2 + w2 · act(b1 + W1 x))`.
///
/// `w1` is stored input-major (`w1[c * hidden + h]`) so a sparse row only
/// touches the columns it activates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Per-edge intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub weights: Vec<f64>,
    /// Pre-activations, `edges × hidden`.
    pub z: Vec<f64>,
    /// Activations, `edges × hidden`.
    pub a: Vec<f64>,
}

impl EdgeWeightModel {
    /// All parameters zero: every weight is σ(0) = 0.5.
    pub fn zeros(input_dim: usize, hidden_dim: usize, activation: Activation) -> Self {
        EdgeWeightModel {
            input_dim,
            hidden_dim,
            activation,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        }
    }

    /// Uniform in `±0.5/√fan_in` per layer.
    pub fn init(input_dim: usize, hidden_dim: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(input_dim, hidden_dim, activation);
        let s1 = 0.5 / (input_dim.max(1) as f64).sqrt();
        let s2 = 0.5 / (hidden_dim.max(1) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.gen_range(-s1..=s1));
        m.b1.iter_mut().for_each(|w| *w = rng.gen_range(-s1..=s1));
        m.w2.iter_mut().for_each(|w| *w = rng.gen_range(-s2..=s2));
        m.b2 = rng.gen_range(-s2..=s2);
        m
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flattened parameters: `w1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: p.len(),
            });
        }
        let (w1, rest) = p.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, rest) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2 = rest[0];
        Ok(())
    }

    fn hidden(&self, active: &[u32], z: &mut [f64], a: &mut [f64]) {
        let h = self.hidden_dim;
        z.copy_from_slice(&self.b1);
        for &c in active {
            let col = &self.w1[c as usize * h..(c as usize + 1) * h];
            z.iter_mut().zip(col).for_each(|(zi, w)| *zi += w);
        }
        for (ai, &zi) in a.iter_mut().zip(z.iter()) {
            *ai = self.activation.apply(zi);
        }
    }

    /// Weight of a single sparse row.
    pub fn weight_of(&self, active: &[u32]) -> f64 {
        let mut z = vec![0.0; self.hidden_dim];
        let mut a = vec![0.0; self.hidden_dim];
        self.hidden(active, &mut z, &mut a);
        logistic(self.b2 + dot(&self.w2, &a))
    }

    /// Weight of a dense input in `[0, 1]^d` (used for partial dependence on
    /// reconstructed, non-binary inputs).
    pub fn weight_of_dense(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let h = self.hidden_dim;
        let mut z = self.b1.clone();
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                let col = &self.w1[c * h..(c + 1) * h];
                z.iter_mut().zip(col).for_each(|(zi, w)| *zi += w * xc);
            }
        }
        let a: Vec<f64> = z.iter().map(|&zi| self.activation.apply(zi)).collect();
        Ok(logistic(self.b2 + dot(&self.w2, &a)))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got,
            });
        }
        Ok(())
    }

    /// One weight per feature row, in `(0, 1)`.
    pub fn edge_weights(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.forward(features)?.weights)
    }

    pub fn forward(&self, features: &FeatureMatrix) -> Result<Forward> {
        self.check_dim(features.n_cols())?;
        let (n, h) = (features.n_rows(), self.hidden_dim);
        let mut out = Forward {
            weights: vec![0.0; n],
            z: vec![0.0; n * h],
            a: vec![0.0; n * h],
        };
        for e in 0..n {
            let z = &mut out.z[e * h..(e + 1) * h];
            let a = &mut out.a[e * h..(e + 1) * h];
            self.hidden(features.row(e), z, a);
            out.weights[e] = logistic(self.b2 + dot(&self.w2, a));
        }
        Ok(out)
    }

    /// Parameter gradient given `dL/dw` per edge, in [`Self::params`] order.
    pub fn backward(&self, features: &FeatureMatrix, fwd: &Forward, d_weights: &[f64]) -> Vec<f64> {
        let h = self.hidden_dim;
        let mut g_w1 = vec![0.0; self.w1.len()];
        let mut g_b1 = vec![0.0; h];
        let mut g_w2 = vec![0.0; h];
        let mut g_b2 = 0.0;
        let mut dz1 = vec![0.0; h];
        for (e, &dw) in d_weights.iter().enumerate() {
            if dw == 0.0 {
                continue;
            }
            let w = fwd.weights[e];
            let dz2 = dw * w * (1.0 - w);
            g_b2 += dz2;
            let z = &fwd.z[e * h..(e + 1) * h];
            let a = &fwd.a[e * h..(e + 1) * h];
            for k in 0..h {
                g_w2[k] += dz2 * a[k];
                dz1[k] = dz2 * self.w2[k] * self.activation.derivative(z[k], a[k]);
                g_b1[k] += dz1[k];
            }
            for &c in features.row(e) {
                let col = &mut g_w1[c as usize * h..(c as usize + 1) * h];
                col.iter_mut().zip(&dz1).for_each(|(g, d)| *g += d);
            }
        }
        let mut g = g_w1;
        g.extend(g_b1);
        g.extend(g_w2);
        g.push(g_b2);
        g
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureScheme;

    fn matrix(rows: Vec<Vec<u32>>, cols: usize) -> FeatureMatrix {
        let catalog = (0..cols).map(|c| format!("f{c}")).collect();
        FeatureMatrix::new(FeatureScheme::CoreRelation, catalog, rows).unwrap()
    }

    #[test]
    fn zero_parameters_give_one_half() {
        let m = EdgeWeightModel::zeros(4, 30, Activation::Logistic);
        let x = matrix(vec![vec![0, 2], vec![], vec![1, 2, 3]], 4);
        assert_eq!(m.edge_weights(&x).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn identical_rows_identical_weights() {
        let m = EdgeWeightModel::init(5, 30, Activation::Logistic, 7);
        let x = matrix(vec![vec![1, 4], vec![1, 4], vec![0]], 5);
        let w = m.edge_weights(&x).unwrap();
        assert_eq!(w[0], w[1]);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = EdgeWeightModel::zeros(3, 2, Activation::Logistic);
        let x = matrix(vec![vec![0]], 4);
        assert!(matches!(m.edge_weights(&x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dense_and_sparse_agree_on_binary_input() {
        let m = EdgeWeightModel::init(6, 8, Activation::Tanh, 3);
        let row = [0u32, 3, 5];
        let mut dense = vec![0.0; 6];
        row.iter().for_each(|&c| dense[c as usize] = 1.0);
        assert!((m.weight_of(&row) - m.weight_of_dense(&dense).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn params_round_trip() {
        let mut m = EdgeWeightModel::init(3, 4, Activation::Logistic, 1);
        let p = m.params();
        assert_eq!(p.len(), m.n_params());
        let other = EdgeWeightModel::init(3, 4, Activation::Logistic, 2);
        m.set_params(&other.params()).unwrap();
        assert_eq!(m, other);
    }

    #[test]
    fn backward_matches_finite_differences_for_sum_of_weights() {
        for act in [Activation::Logistic, Activation::Tanh] {
            let m = EdgeWeightModel::init(5, 6, act, 11);
            let x = matrix(vec![vec![0, 1], vec![2, 4], vec![3]], 5);
            let coeffs = [0.3, -1.2, 0.7];
            let fwd = m.forward(&x).unwrap();
            let g = m.backward(&x, &fwd, &coeffs);
            let f = |p: &[f64]| {
                let mut mm = m.clone();
                mm.set_params(p).unwrap();
                let w = mm.edge_weights(&x).unwrap();
                w.iter().zip(&coeffs).map(|(a, b)| a * b).sum::<f64>()
            };
            let p = m.params();
            for k in 0..p.len() {
                let (mut hi, mut lo) = (p.clone(), p.clone());
                hi[k] += 1e-6;
                lo[k] -= 1e-6;
                let num = (f(&hi) - f(&lo)) / 2e-6;
                assert!((num - g[k]).abs() < 1e-8, "param {k}: {num} vs {}", g[k]);
            }
        }
    }
}
