//! Factorizing the binary feature matrix and measuring how the learned
//! weight function responds along each basis vector.
//!
//! The factorization models each feature bit through a logistic link,
//! `x ≈ σ(C Bᵀ + b)`, with nonnegative coefficients `C` (edges × rank),
//! nonnegative basis `B` (features × rank) and a free scalar bias `b`.
//! The blocks are updated in turn by projected gradient steps with
//! backtracking, so the objective never increases.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{parse_segment_descriptor, FeatureMatrix, FeatureScheme, Segment};
use crate::propagation::model::logistic;
use crate::propagation::EdgeWeightModel;
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    /// Bernoulli likelihood through a logistic link.
    Logistic,
    /// Plain squared-error NMF; reconstructions are clipped to `[0, 1]`.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub link: Link,
    pub rank: usize,
    /// features × rank
    pub basis: DMatrix<f64>,
    /// edges × rank
    pub coefficients: DMatrix<f64>,
    pub bias: f64,
    /// Objective after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnmfConfig {
    pub rank: usize,
    pub iters: usize,
    pub seed: u64,
    pub link: Link,
}

impl Default for BnmfConfig {
    fn default() -> Self {
        BnmfConfig {
            rank: 50,
            iters: 300,
            seed: 0,
            link: Link::Logistic,
        }
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dense(features: &FeatureMatrix) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(features.n_rows(), features.n_cols());
    for (r, row) in features.rows().iter().enumerate() {
        for &c in row {
            x[(r, c as usize)] = 1.0;
        }
    }
    x
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    link: Link,
    scale: f64,
}

impl Problem<'_> {
    fn logits(&self, c: &DMatrix<f64>, b: &DMatrix<f64>, bias: f64) -> DMatrix<f64> {
        let mut z = c * b.transpose();
        if self.link == Link::Logistic {
            z.add_scalar_mut(bias);
        }
        z
    }

    fn objective(&self, c: &DMatrix<f64>, b: &DMatrix<f64>, bias: f64) -> f64 {
        let z = self.logits(c, b, bias);
        let sum: f64 = match self.link {
            Link::Logistic => z.iter().zip(self.x.iter()).map(|(&z, &x)| softplus(z) - x * z).sum(),
            Link::Identity => z.iter().zip(self.x.iter()).map(|(&z, &x)| 0.5 * (z - x).powi(2)).sum(),
        };
        sum * self.scale
    }

    /// `∂objective/∂Z`.
    fn residual(&self, c: &DMatrix<f64>, b: &DMatrix<f64>, bias: f64) -> DMatrix<f64> {
        let mut z = self.logits(c, b, bias);
        let link = self.link;
        z.zip_apply(self.x, |z, x| {
            let p = if link == Link::Logistic { logistic(*z) } else { *z };
            *z = (p - x) * self.scale;
        });
        z
    }
}

/// Projected gradient step on one block with Armijo backtracking. Returns
/// the new objective and the step size to try next time.
fn block_step(
    block: &mut DMatrix<f64>,
    grad: &DMatrix<f64>,
    step: f64,
    current: f64,
    eval: impl Fn(&DMatrix<f64>) -> f64,
) -> (f64, f64) {
    let mut eta = step;
    for _ in 0..40 {
        let mut cand = block.clone();
        cand.zip_apply(grad, |v, g| *v = (*v - eta * g).max(0.0));
        let moved: f64 = cand.iter().zip(block.iter()).zip(grad.iter()).map(|((n, o), g)| g * (o - n)).sum();
        let value = eval(&cand);
        if value <= current - 1e-4 * moved && value.is_finite() {
            *block = cand;
            return (value, eta * 2.0);
        }
        eta *= 0.5;
    }
    (current, eta)
}

/// Fits a rank-`rank` nonnegative factorization of the feature bits.
pub fn bnmf(features: &FeatureMatrix, config: &BnmfConfig) -> Result<FactorModel> {
    let (n, d) = (features.n_rows(), features.n_cols());
    let limit = n.min(d);
    if config.rank == 0 || config.rank > limit {
        return Err(Error::RankTooLarge {
            rank: config.rank,
            limit,
        });
    }
    if config.iters == 0 {
        return Err(Error::Config("iters must be ≥ 1".into()));
    }
    let x = dense(features);
    let problem = Problem {
        x: &x,
        link: config.link,
        scale: 1.0 / (n * d) as f64,
    };
    let k = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let density = x.mean().clamp(1e-3, 1.0 - 1e-3);
    let init = match config.link {
        Link::Logistic => 1.0,
        Link::Identity => (density / k as f64).sqrt(),
    };
    let mut c = DMatrix::from_fn(n, k, |_, _| init * rng.gen::<f64>());
    let mut b = DMatrix::from_fn(d, k, |_, _| init * rng.gen::<f64>());
    let mut bias = match config.link {
        Link::Logistic => (density / (1.0 - density)).ln() - init * init * k as f64 / 4.0,
        Link::Identity => 0.0,
    };
    let mut current = problem.objective(&c, &b, bias);
    let mut trace = vec![current];
    let (mut eta_c, mut eta_b, mut eta_bias) = (1.0, 1.0, 1.0);
    for _ in 0..config.iters {
        let r = problem.residual(&c, &b, bias);
        let gc = &r * &b;
        (current, eta_c) = block_step(&mut c, &gc, eta_c, current, |cand| problem.objective(cand, &b, bias));

        let r = problem.residual(&c, &b, bias);
        let gb = r.transpose() * &c;
        (current, eta_b) = block_step(&mut b, &gb, eta_b, current, |cand| problem.objective(&c, cand, bias));

        if config.link == Link::Logistic {
            let g = problem.residual(&c, &b, bias).sum();
            let mut eta = eta_bias;
            loop {
                let cand = bias - eta * g;
                let value = problem.objective(&c, &b, cand);
                if value <= current - 1e-4 * eta * g * g {
                    bias = cand;
                    current = value;
                    eta_bias = eta * 2.0;
                    break;
                }
                eta *= 0.5;
                if eta < 1e-12 {
                    break;
                }
            }
        }
        trace.push(current);
    }
    Ok(FactorModel {
        link: config.link,
        rank: k,
        basis: b,
        coefficients: c,
        bias,
        objective_trace: trace,
    })
}

impl FactorModel {
    pub fn n_rows(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.basis.nrows()
    }

    fn link_value(&self, z: f64) -> f64 {
        match self.link {
            Link::Logistic => logistic(z + self.bias),
            Link::Identity => z,
        }
        .clamp(0.0, 1.0)
    }

    /// Reconstructed feature vector for one coefficient row.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Vec<f64> {
        (0..self.n_features())
            .map(|j| {
                let z: f64 = (0..self.rank).map(|k| coefficients[k] * self.basis[(j, k)]).sum();
                self.link_value(z)
            })
            .collect()
    }

    pub fn coefficient_row(&self, i: usize) -> Vec<f64> {
        self.coefficients.row(i).iter().copied().collect()
    }

    pub fn basis_column(&self, k: usize) -> Vec<f64> {
        self.basis.column(k).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisEffect {
    pub basis: usize,
    /// Mean over edges of `f(x at q99) − f(x at q01)`.
    pub effect: f64,
    /// The coefficient column was constant, so the effect is zero.
    pub constant: bool,
}

/// Partial-dependence effect of moving coefficient `k` from its 1% to its
/// 99% quantile, other coefficients held at each edge's own values.
pub fn basis_importance(model: &EdgeWeightModel, factors: &FactorModel, k: usize) -> Result<BasisEffect> {
    if model.input_dim != factors.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim,
            got: factors.n_features(),
        });
    }
    if k >= factors.rank {
        return Err(Error::Config(format!("basis {k} out of range (rank {})", factors.rank)));
    }
    let n = factors.n_rows();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut column: Vec<f64> = factors.coefficients.column(k).iter().copied().collect();
    column.sort_by(f64::total_cmp);
    let q01 = quantile_sorted(&column, 0.01)?;
    let q99 = quantile_sorted(&column, 0.99)?;
    if q01 == q99 {
        return Ok(BasisEffect {
            basis: k,
            effect: 0.0,
            constant: true,
        });
    }
    let basis_k = factors.basis_column(k);
    let diffs = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = factors.coefficient_row(i);
            // Logits without basis k, then add it back at each quantile.
            let base: Vec<f64> = (0..factors.n_features())
                .map(|j| {
                    let z: f64 = (0..factors.rank).map(|m| row[m] * factors.basis[(j, m)]).sum();
                    z - row[k] * basis_k[j]
                })
                .collect();
            let at = |q: f64| -> Result<f64> {
                let x: Vec<f64> = base
                    .iter()
                    .zip(&basis_k)
                    .map(|(z, bk)| factors.link_value(z + q * bk))
                    .collect();
                model.weight_of_dense(&x)
            };
            Ok(at(q99)? - at(q01)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BasisEffect {
        basis: k,
        effect: diffs.iter().sum::<f64>() / n as f64,
        constant: false,
    })
}

pub fn all_basis_importance(model: &EdgeWeightModel, factors: &FactorModel) -> Result<Vec<BasisEffect>> {
    (0..factors.rank).map(|k| basis_importance(model, factors, k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub basis: usize,
    pub mean_effect: f64,
    pub mean_abs_effect: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceTable {
    /// Sorted by mean absolute effect, largest first.
    pub rows: Vec<ImportanceRow>,
    pub failures: Vec<(u64, String)>,
}

/// Runs `measure` once per seed and averages the per-basis effects over
/// the runs that succeed.
pub fn repeated_importance<F>(seeds: &[u64], measure: F) -> Result<ImportanceTable>
where
    F: Fn(u64) -> Result<Vec<BasisEffect>> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Config("repetitions must be ≥ 1".into()));
    }
    let runs: Vec<(u64, Result<Vec<BasisEffect>>)> = seeds.par_iter().map(|&s| (s, measure(s))).collect();
    let mut sums: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    for (seed, run) in runs {
        match run {
            Ok(effects) => {
                for e in effects {
                    let entry = sums.entry(e.basis).or_default();
                    entry.0 += e.effect;
                    entry.1 += e.effect.abs();
                    entry.2 += 1;
                }
            }
            Err(err) => {
                log::warn!("repetition with seed {seed} failed: {err}");
                failures.push((seed, err.to_string()));
            }
        }
    }
    let mut rows: Vec<ImportanceRow> = sums
        .into_iter()
        .map(|(basis, (s, a, r))| ImportanceRow {
            basis,
            mean_effect: s / r as f64,
            mean_abs_effect: a / r as f64,
            repetitions: r,
        })
        .collect();
    rows.sort_by(|a, b| b.mean_abs_effect.total_cmp(&a.mean_abs_effect).then(a.basis.cmp(&b.basis)));
    Ok(ImportanceTable { rows, failures })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub segment: Segment,
    pub rel_type: String,
    pub value: f64,
}

/// Largest positive entries of basis `k`, up to `top_n` per segment. Ties
/// are broken by relation name.
pub fn segment_peaks(factors: &FactorModel, features: &FeatureMatrix, k: usize, top_n: usize) -> Result<Vec<Peak>> {
    if features.scheme() != FeatureScheme::PathSegment {
        return Err(Error::WrongScheme {
            expected: FeatureScheme::PathSegment.to_string(),
            got: features.scheme().to_string(),
        });
    }
    if features.n_cols() != factors.n_features() {
        return Err(Error::DimensionMismatch {
            expected: factors.n_features(),
            got: features.n_cols(),
        });
    }
    if k >= factors.rank {
        return Err(Error::Config(format!("basis {k} out of range (rank {})", factors.rank)));
    }
    let mut by_segment: BTreeMap<Segment, Vec<(String, f64)>> = BTreeMap::new();
    for (j, desc) in features.catalog().iter().enumerate() {
        let (rel, seg) = parse_segment_descriptor(desc)?;
        let v = factors.basis[(j, k)];
        if v > 0.0 {
            by_segment.entry(seg).or_default().push((rel, v));
        }
    }
    let mut peaks = Vec::new();
    for (segment, mut entries) in by_segment {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        peaks.extend(entries.into_iter().take(top_n).map(|(rel_type, value)| Peak {
            segment,
            rel_type,
            value,
        }));
    }
    Ok(peaks)
}

pub fn write_importance<W: Write>(table: &ImportanceTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "basis\tmean_effect\tmean_abs_effect\trepetitions")?;
    for r in &table.rows {
        writeln!(w, "{}\t{:.6}\t{:.6}\t{}", r.basis, r.mean_effect, r.mean_abs_effect, r.repetitions)?;
    }
    for (seed, err) in &table.failures {
        writeln!(w, "# failed seed {seed}: {err}")?;
    }
    Ok(())
}

pub fn write_peaks<W: Write>(peaks: &[(usize, Vec<Peak>)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "basis\tsegment\trel_type\tvalue")?;
    for (k, list) in peaks {
        for p in list {
            writeln!(w, "{k}\t{}\t{}\t{:.6}", p.segment, p.rel_type, p.value)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::segment_descriptor;
    use crate::propagation::Activation;

    fn matrix(rows: Vec<Vec<u32>>, d: usize) -> FeatureMatrix {
        let catalog = (0..d).map(|c| format!("f{c}")).collect();
        FeatureMatrix::new(FeatureScheme::CoreRelation, catalog, rows).unwrap()
    }

    #[test]
    fn rank_one_fixture_is_recovered() {
        let u = [1, 0, 1, 1, 0, 1, 0, 0];
        let v = [0u32, 2, 3, 5];
        let rows: Vec<Vec<u32>> = u.iter().map(|&ui| if ui == 1 { v.to_vec() } else { vec![] }).collect();
        let x = matrix(rows.clone(), 6);
        let f = bnmf(
            &x,
            &BnmfConfig {
                rank: 1,
                iters: 500,
                seed: 7,
                link: Link::Logistic,
            },
        )
        .unwrap();
        for (i, row) in rows.iter().enumerate() {
            let rec = f.reconstruct(&f.coefficient_row(i));
            for (j, p) in rec.iter().enumerate() {
                assert_eq!(*p > 0.5, row.contains(&(j as u32)), "({i},{j}) = {p}");
            }
        }
        assert!(f.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_matrix_pushes_coefficients_down() {
        let x = matrix(vec![vec![]; 5], 4);
        let f = bnmf(
            &x,
            &BnmfConfig {
                rank: 2,
                iters: 200,
                ..Default::default()
            },
        )
        .unwrap();
        let first = f.objective_trace[0];
        assert!(f.objective_trace.last().unwrap() < &first);
        for i in 0..5 {
            assert!(f.reconstruct(&f.coefficient_row(i)).iter().all(|&p| p < 0.5));
        }
    }

    #[test]
    fn rank_limit_and_plain_variant() {
        let x = matrix(vec![vec![0], vec![1], vec![0, 1]], 2);
        assert!(matches!(
            bnmf(&x, &BnmfConfig { rank: 3, ..Default::default() }),
            Err(Error::RankTooLarge { .. })
        ));
        let f = bnmf(
            &x,
            &BnmfConfig {
                rank: 2,
                iters: 50,
                seed: 1,
                link: Link::Identity,
            },
        )
        .unwrap();
        assert!(f.basis.iter().chain(f.coefficients.iter()).all(|&v| v >= 0.0));
        assert!(f.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(f.reconstruct(&f.coefficient_row(0)).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn constant_model_has_no_importance() {
        let x = matrix((0..12).map(|i| vec![i % 3, 3 + i % 2]).collect(), 5);
        let f = bnmf(
            &x,
            &BnmfConfig {
                rank: 3,
                iters: 30,
                ..Default::default()
            },
        )
        .unwrap();
        let m = EdgeWeightModel::zeros(5, 4, Activation::Logistic);
        for e in all_basis_importance(&m, &f).unwrap() {
            assert_eq!(e.effect, 0.0);
        }
    }

    #[test]
    fn constant_column_is_flagged() {
        let mut f = FactorModel {
            link: Link::Identity,
            rank: 1,
            basis: DMatrix::from_element(2, 1, 0.5),
            coefficients: DMatrix::from_element(4, 1, 1.0),
            bias: 0.0,
            objective_trace: vec![],
        };
        let m = EdgeWeightModel::init(2, 3, Activation::Logistic, 0);
        let e = basis_importance(&m, &f, 0).unwrap();
        assert!(e.constant && e.effect == 0.0);
        f.coefficients[(0, 0)] = 0.0;
        assert!(!basis_importance(&m, &f, 0).unwrap().constant);
    }

    #[test]
    fn repeated_importance_single_run_matches() {
        let effects = vec![
            BasisEffect {
                basis: 0,
                effect: 0.1,
                constant: false,
            },
            BasisEffect {
                basis: 1,
                effect: -0.3,
                constant: false,
            },
        ];
        let t = repeated_importance(&[5], |_| Ok(effects.clone())).unwrap();
        assert_eq!(t.rows[0].basis, 1);
        assert_eq!(t.rows[0].mean_effect, -0.3);
        assert_eq!(t.rows[0].mean_abs_effect, 0.3);
        let t = repeated_importance(&[1, 2], |s| {
            if s == 1 {
                Err(Error::NoSources)
            } else {
                Ok(effects.clone())
            }
        })
        .unwrap();
        assert_eq!(t.failures.len(), 1);
        assert_eq!(t.rows[0].repetitions, 1);
    }

    #[test]
    fn peaks_per_segment() {
        let catalog: Vec<String> = [("customer", Segment::Two), ("supplier", Segment::Two), ("supplier", Segment::One)]
            .iter()
            .map(|(r, s)| segment_descriptor(r, *s))
            .collect();
        let x = FeatureMatrix::new(FeatureScheme::PathSegment, catalog, vec![vec![0], vec![1, 2], vec![2]]).unwrap();
        let mut f = FactorModel {
            link: Link::Logistic,
            rank: 1,
            basis: DMatrix::zeros(3, 1),
            coefficients: DMatrix::zeros(3, 1),
            bias: 0.0,
            objective_trace: vec![],
        };
        f.basis[(1, 0)] = 2.0;
        let p = segment_peaks(&f, &x, 0, 3).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].segment, p[0].rel_type.as_str()), (Segment::Two, "supplier"));

        f.basis.fill(1.0);
        let p = segment_peaks(&f, &x, 0, 1).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].rel_type, "supplier");
        assert_eq!(p[1].rel_type, "customer");

        let wrong = matrix(vec![vec![0]; 3], 3);
        assert!(matches!(segment_peaks(&f, &wrong, 0, 1), Err(Error::WrongScheme { .. })));
    }
}
