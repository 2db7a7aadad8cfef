use serde::{Deserialize, Serialize};

use super::{check_input, variance_floor, Classifier, Dataset};
use crate::error::Result;

/// Gaussian naive Bayes. Classes absent from training have prior 0 and are
/// never predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    pub feature_count: usize,
    pub class_count: usize,
    pub var_floor: f64,
    pub priors: Vec<f64>,
    /// `class_count × feature_count`, row-major.
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl NbModel {
    /// Unnormalized log posterior of class `c`, or `None` for absent classes.
    pub fn log_posterior(&self, c: usize, x: &[f64]) -> Option<f64> {
        if self.priors[c] <= 0.0 {
            return None;
        }
        let f = self.feature_count;
        let mut lp = self.priors[c].ln();
        for (k, &v) in x.iter().enumerate() {
            let m = self.means[c * f + k];
            let var = self.variances[c * f + k];
            lp += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - m) * (v - m) / (2.0 * var);
        }
        Some(lp)
    }
}

impl Classifier for NbModel {
    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        check_input(x, self.feature_count)?;
        let mut best: Option<(usize, f64)> = None;
        for c in 0..self.class_count {
            if let Some(lp) = self.log_posterior(c, x) {
                if best.is_none_or(|(_, b)| lp > b) {
                    best = Some((c, lp));
                }
            }
        }
        Ok(best.map_or(0, |(c, _)| c))
    }
}

pub fn train_nb(data: &Dataset) -> Result<NbModel> {
    let (k, f, n) = (data.class_count(), data.feature_count(), data.len());
    let var_floor = variance_floor(data);
    let counts = data.class_histogram(&(0..n).collect::<Vec<_>>());
    let mut means = vec![0.0; k * f];
    let mut variances = vec![var_floor; k * f];
    for i in 0..n {
        let c = data.label(i);
        for j in 0..f {
            means[c * f + j] += data.value(i, j);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..f {
                means[c * f + j] /= counts[c] as f64;
            }
        }
    }
    let mut ss = vec![0.0; k * f];
    for i in 0..n {
        let c = data.label(i);
        for j in 0..f {
            ss[c * f + j] += (data.value(i, j) - means[c * f + j]).powi(2);
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..f {
                variances[c * f + j] = (ss[c * f + j] / counts[c] as f64).max(var_floor);
            }
        }
    }
    Ok(NbModel {
        feature_count: f,
        class_count: k,
        var_floor,
        priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        means,
        variances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_parameters() {
        let d = Dataset::new(vec![-1.0, 1.0, 5.0, 5.0], 1, vec![0, 0, 1, 1], 2).unwrap();
        let m = train_nb(&d).unwrap();
        assert_eq!(m.means, vec![0.0, 5.0]);
        assert_eq!(m.variances[0], 1.0);
        assert_eq!(m.variances[1], m.var_floor);
        // Overall population variance is 6.75.
        assert!((m.var_floor - 6.75e-9).abs() < 1e-22);
    }

    #[test]
    fn priors_are_frequencies() {
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i >= 30)).collect();
        let feats: Vec<f64> = (0..40).map(f64::from).collect();
        let m = train_nb(&Dataset::new(feats, 1, labels, 2).unwrap()).unwrap();
        assert_eq!(m.priors, vec![0.75, 0.25]);
    }

    fn two_gaussians() -> NbModel {
        NbModel {
            feature_count: 1,
            class_count: 2,
            var_floor: 1e-12,
            priors: vec![0.5, 0.5],
            means: vec![0.0, 4.0],
            variances: vec![1.0, 1.0],
        }
    }

    #[test]
    fn symmetric_tie_goes_low() {
        let m = two_gaussians();
        assert_eq!(m.predict(&[2.0]).unwrap(), 0);
        assert_eq!(m.predict(&[1.0]).unwrap(), 0);
        assert_eq!(m.predict(&[2.5]).unwrap(), 1);
        assert!(m.predict(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn one_class_model() {
        let d = Dataset::new(vec![1.0, 2.0, 3.0], 1, vec![1, 1, 1], 3).unwrap();
        let m = train_nb(&d).unwrap();
        for x in [-100.0, 0.0, 2.0, 1e6] {
            assert_eq!(m.predict(&[x]).unwrap(), 1);
        }
    }

    #[test]
    fn constant_data_floor() {
        let d = Dataset::new(vec![3.0; 4], 1, vec![0, 1, 0, 1], 2).unwrap();
        let m = train_nb(&d).unwrap();
        assert_eq!(m.var_floor, 1e-12);
        assert_eq!(m.predict(&[3.0]).unwrap(), 0);
    }
}
