use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, check_input, variance_floor, Classifier, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `None` means `1 / F`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Recorded for provenance; the solver is deterministic.
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 1.0, gamma: None, tol: 1e-3, max_iter: 10_000, seed: 0 }
    }
}

/// One-vs-one machine; positive decisions vote for `positive_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive_class: usize,
    pub negative_class: usize,
    /// Standardized support vectors.
    pub support_vectors: Vec<Vec<f64>>,
    /// `y_i · alpha_i` per support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinaryMachine {
    pub fn decision(&self, z: &[f64], gamma: f64) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefficients)
            .map(|(sv, a)| a * rbf(sv, z, gamma))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    pub gamma: f64,
    pub feature_count: usize,
    pub class_count: usize,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    pub machines: Vec<BinaryMachine>,
}

impl SvmModel {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_means.iter().zip(&self.feature_scales))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

impl Classifier for SvmModel {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        check_input(x, self.feature_count)?;
        let z = self.standardize(x);
        let mut votes = vec![0usize; self.class_count];
        for m in &self.machines {
            // A zero decision counts for the lower class id.
            if m.decision(&z, self.gamma) >= 0.0 {
                votes[m.positive_class] += 1;
            } else {
                votes[m.negative_class] += 1;
            }
        }
        Ok(argmax_lowest(&votes))
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

pub fn train_svm(data: &Dataset, params: &SvmParams) -> Result<SvmModel> {
    let f = data.feature_count();
    let gamma = params.gamma.unwrap_or(1.0 / f as f64);
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C must be positive, got {}", params.c)));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(Error::InvalidParameter("tol and max_iter must be positive".into()));
    }
    let n = data.len();
    let hist = data.class_histogram(&(0..n).collect::<Vec<_>>());
    let present: Vec<usize> = (0..data.class_count()).filter(|&c| hist[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "SVM needs at least 2 classes in the training data, found {}",
            present.len()
        )));
    }

    let floor = variance_floor(data).sqrt();
    let variances = data.feature_variances();
    let feature_means: Vec<f64> = (0..f)
        .map(|j| (0..n).map(|i| data.value(i, j)).sum::<f64>() / n as f64)
        .collect();
    let feature_scales: Vec<f64> = variances.iter().map(|v| v.sqrt().max(floor)).collect();
    let z: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            data.row(i)
                .iter()
                .zip(feature_means.iter().zip(&feature_scales))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();

    let mut pairs = Vec::new();
    for (a, &ca) in present.iter().enumerate() {
        for &cb in &present[a + 1..] {
            pairs.push((ca, cb));
        }
    }
    let machines = pairs
        .par_iter()
        .map(|&(ca, cb)| {
            let idx: Vec<usize> = (0..n).filter(|&i| data.label(i) == ca || data.label(i) == cb).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if data.label(i) == ca { 1.0 } else { -1.0 }).collect();
            let x: Vec<&[f64]> = idx.iter().map(|&i| z[i].as_slice()).collect();
            let sol = smo(&x, &y, params.c, gamma, params.tol, params.max_iter);
            if !sol.converged {
                log::warn!("SVM pair ({ca}, {cb}) stopped at max_iter={} before reaching tol", params.max_iter);
            }
            let mut support_vectors = Vec::new();
            let mut dual_coefficients = Vec::new();
            for (k, &a) in sol.alpha.iter().enumerate() {
                if a > 0.0 {
                    support_vectors.push(x[k].to_vec());
                    dual_coefficients.push(y[k] * a);
                }
            }
            BinaryMachine {
                positive_class: ca,
                negative_class: cb,
                support_vectors,
                dual_coefficients,
                bias: -sol.rho,
                iterations: sol.iterations,
                converged: sol.converged,
            }
        })
        .collect();

    Ok(SvmModel {
        params: params.clone(),
        gamma,
        feature_count: f,
        class_count: data.class_count(),
        feature_means,
        feature_scales,
        machines,
    })
}

struct Solution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
    converged: bool,
}

const TAU: f64 = 1e-12;

/// Dual soft-margin SVM by SMO with second-order working-set selection:
/// minimize `½ αᵀQα − Σα` subject to `0 ≤ α ≤ C`, `yᵀα = 0`, `Q_ij = y_i y_j K_ij`.
fn smo(x: &[&[f64]], y: &[f64], c: f64, gamma: f64, tol: f64, max_iter: usize) -> Solution {
    let l = x.len();
    let mut k = vec![0.0; l * l];
    for i in 0..l {
        for j in i..l {
            let v = rbf(x[i], x[j], gamma);
            k[i * l + j] = v;
            k[j * l + i] = v;
        }
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * l + j];
    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        // i maximizes -y_t G_t over the up set.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..l {
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            if up && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // j minimizes the second-order objective decrease over the low set.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for t in 0..l {
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if !low {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + yg;
            if b > 0.0 {
                let mut a = k[i * l + i] + k[t * l + t] - 2.0 * y[i] * y[t] * k[i * l + t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < obj_min {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || i == usize::MAX || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k[i * l + i] + k[j * l + j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = k[i * l + i] + k[j * l + j] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..l {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias from free vectors, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..l {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };
    Solution { alpha, rho, iterations, converged }
}
