use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::accuracy::into_string;
use crate::error::{Error, Result};
use crate::sampling::{ClassScheme, SampleRole, SampleTable};

/// Gaussian fit of one class: mean, population covariance and sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub mean: Vec<f64>,
    /// `d × d`, row-major.
    pub covariance: Vec<f64>,
    pub count: usize,
}

impl ClassDistribution {
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d * d {
            return Err(Error::Metric("covariance does not match the mean dimension".into()));
        }
        Ok(ClassDistribution { mean, covariance, count })
    }

    /// Estimate from at least two samples of equal dimension.
    pub fn estimate<R: AsRef<[f64]>>(samples: &[R]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Metric(format!(
                "a class distribution needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        let d = samples[0].as_ref().len();
        if d == 0 || samples.iter().any(|s| s.as_ref().len() != d) {
            return Err(Error::Metric("samples differ in dimension".into()));
        }
        let n = samples.len() as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            for (m, v) in mean.iter_mut().zip(s.as_ref()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = vec![0.0; d * d];
        for s in samples {
            let s = s.as_ref();
            for a in 0..d {
                for b in a..d {
                    cov[a * d + b] += (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a * d + b] / n;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        Self::new(mean, cov, samples.len())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `Σ + λI` with `λ = max(1e-6 · trace(Σ) / d, 1e-12)`.
    pub fn regularized_covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let trace: f64 = (0..d).map(|i| self.covariance[i * d + i]).sum();
        let lambda = (1e-6 * trace / d as f64).max(1e-12);
        let mut c = self.covariance.clone();
        for i in 0..d {
            c[i * d + i] += lambda;
        }
        c
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] - s;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Metric("covariance is not positive definite".into()));
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Ok(l)
}

fn log_det(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
}

/// `xᵀ A⁻¹ x` given the Cholesky factor of `A`.
fn quadratic_form(l: &[f64], d: usize, x: &[f64]) -> f64 {
    let mut y = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
        y[i] = (x[i] - s) / l[i * d + i];
    }
    y.iter().map(|v| v * v).sum()
}

/// Which log-determinant term to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BhattacharyyaForm {
    /// `½ ln(|(Σi+Σj)/2| / √(|Σi||Σj|))`; zero for identical classes.
    #[default]
    Standard,
    /// `½ ln(|Σi+Σj| / √(|Σi||Σj|))`, which exceeds the standard value by
    /// `(d/2) ln 2`.
    AsPrinted,
}

pub fn bhattacharyya(di: &ClassDistribution, dj: &ClassDistribution, form: BhattacharyyaForm) -> Result<f64> {
    let d = di.dim();
    if dj.dim() != d {
        return Err(Error::Metric(format!("dimension mismatch: {} vs {}", d, dj.dim())));
    }
    let (si, sj) = (di.regularized_covariance(), dj.regularized_covariance());
    let sum: Vec<f64> = si.iter().zip(&sj).map(|(a, b)| a + b).collect();
    let pooled: Vec<f64> = sum.iter().map(|v| v / 2.0).collect();
    let lp = cholesky(&pooled, d)?;
    let li = cholesky(&si, d)?;
    let lj = cholesky(&sj, d)?;
    let diff: Vec<f64> = di.mean.iter().zip(&dj.mean).map(|(a, b)| a - b).collect();
    let mahal = quadratic_form(&lp, d, &diff) / 8.0;
    let ld_ij = 0.5 * (log_det(&li, d) + log_det(&lj, d));
    match form {
        BhattacharyyaForm::Standard => Ok((mahal + 0.5 * (log_det(&lp, d) - ld_ij)).max(0.0)),
        BhattacharyyaForm::AsPrinted => {
            let ls = cholesky(&sum, d)?;
            Ok(mahal + 0.5 * (log_det(&ls, d) - ld_ij))
        }
    }
}

/// `2 (1 − e^(−B))`.
pub fn jm_distance(b: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::Metric(format!("Bhattacharyya distance must be nonnegative, got {b}")));
    }
    Ok(-2.0 * (-b).exp_m1())
}

/// Named list of feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Each feature alone, then all features together as `ALL`.
pub fn default_subsets(feature_names: &[String]) -> Vec<FeatureSubset> {
    let mut v: Vec<FeatureSubset> = feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| FeatureSubset { name: n.clone(), indices: vec![i] })
        .collect();
    v.push(FeatureSubset { name: "ALL".into(), indices: (0..feature_names.len()).collect() });
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityEntry {
    pub class_a: usize,
    pub class_b: usize,
    pub pair: String,
    pub subset: String,
    pub b: f64,
    pub jm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub form: BhattacharyyaForm,
    pub subsets: Vec<String>,
    pub pairs: Vec<String>,
    pub entries: Vec<SeparabilityEntry>,
}

impl SeparabilityReport {
    pub fn get(&self, class_a: usize, class_b: usize, subset: &str) -> Option<&SeparabilityEntry> {
        let (a, b) = (class_a.min(class_b), class_a.max(class_b));
        self.entries
            .iter()
            .find(|e| e.class_a == a && e.class_b == b && e.subset == subset)
    }

    /// CSV with header `pair,subset,B,JM`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["pair", "subset", "B", "JM"])?;
        for e in &self.entries {
            w.write_record([e.pair.clone(), e.subset.clone(), e.b.to_string(), e.jm.to_string()])?;
        }
        into_string(w)
    }
}

/// B and JM for every unordered pair of classes present in the training rows
/// and every feature subset. Classes without training rows are skipped.
pub fn separability_report(
    samples: &SampleTable,
    scheme: &ClassScheme,
    subsets: &[FeatureSubset],
    form: BhattacharyyaForm,
) -> Result<SeparabilityReport> {
    let mut by_class: Vec<Vec<&[f64]>> = vec![Vec::new(); scheme.len()];
    for r in samples.with_role(SampleRole::Train) {
        let slot = by_class.get_mut(r.class_id).ok_or_else(|| {
            Error::Metric(format!("class id {} is outside the scheme", r.class_id))
        })?;
        slot.push(&r.features);
    }
    for (c, rows) in by_class.iter().enumerate() {
        if rows.len() == 1 {
            return Err(Error::Metric(format!(
                "class {} has a single training sample; separability needs at least 2",
                scheme.name(c).unwrap_or_default()
            )));
        }
    }
    let present: Vec<usize> = (0..scheme.len()).filter(|&c| !by_class[c].is_empty()).collect();
    let mut pairs = Vec::new();
    for (k, &a) in present.iter().enumerate() {
        for &b in &present[k + 1..] {
            pairs.push((a, b));
        }
    }
    let pair_name = |a: usize, b: usize| {
        format!("{} vs {}", scheme.name(a).unwrap_or_default(), scheme.name(b).unwrap_or_default())
    };
    let dims = by_class.iter().flatten().next().map_or(0, |r| r.len());
    for s in subsets {
        if s.indices.is_empty() || s.indices.iter().any(|&i| i >= dims) {
            return Err(Error::Metric(format!("feature subset {} is out of range", s.name)));
        }
    }
    let project = |rows: &[&[f64]], idx: &[usize]| -> Vec<Vec<f64>> {
        rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect()
    };
    let jobs: Vec<(usize, usize, &FeatureSubset)> = pairs
        .iter()
        .flat_map(|&(a, b)| subsets.iter().map(move |s| (a, b, s)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(a, b, s)| {
            let da = ClassDistribution::estimate(&project(&by_class[a], &s.indices))?;
            let db = ClassDistribution::estimate(&project(&by_class[b], &s.indices))?;
            let bd = bhattacharyya(&da, &db, form)?;
            Ok(SeparabilityEntry {
                class_a: a,
                class_b: b,
                pair: pair_name(a, b),
                subset: s.name.clone(),
                b: bd,
                jm: jm_distance(bd)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparabilityReport {
        form,
        subsets: subsets.iter().map(|s| s.name.clone()).collect(),
        pairs: pairs.iter().map(|&(a, b)| pair_name(a, b)).collect(),
        entries,
    })
}

/// Per-class, per-feature `count,mean,std,min,max` over training rows, as CSV.
pub fn class_band_statistics(samples: &SampleTable, scheme: &ClassScheme, feature_names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["class", "band", "count", "mean", "std", "min", "max"])?;
    for (c, name) in scheme.entries() {
        let rows: Vec<&[f64]> = samples
            .with_role(SampleRole::Train)
            .filter(|r| r.class_id == c)
            .map(|r| r.features.as_slice())
            .collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        for (f, band) in feature_names.iter().enumerate() {
            let vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            w.write_record([
                name.to_string(),
                band.clone(),
                rows.len().to_string(),
                mean.to_string(),
                std.to_string(),
                min.to_string(),
                max.to_string(),
            ])?;
        }
    }
    into_string(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use crate::sampling::SampleRow;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn gauss1(mean: f64, var: f64) -> ClassDistribution {
        ClassDistribution::new(vec![mean], vec![var], 100).unwrap()
    }

    #[test]
    fn hand_values() {
        let b = bhattacharyya(&gauss1(0.0, 1.0), &gauss1(2.0, 1.0), BhattacharyyaForm::Standard).unwrap();
        assert!((b - 0.5).abs() < 1e-5);
        let b = bhattacharyya(&gauss1(0.0, 1.0), &gauss1(0.0, 9.0), BhattacharyyaForm::Standard).unwrap();
        assert!((b - 0.5 * (5.0f64 / 3.0).ln()).abs() < 1e-6);
        assert!((jm_distance(0.5).unwrap() - 0.786_939).abs() < 1e-6);
        assert_eq!(jm_distance(0.0).unwrap(), 0.0);
        assert!(jm_distance(1e3).unwrap() <= 2.0);
        assert!(jm_distance(-0.1).is_err());
        assert!(jm_distance(f64::NAN).is_err());
    }

    #[test]
    fn identical_distributions() {
        let d = ClassDistribution::new(vec![1.0, 2.0], vec![2.0, 0.5, 0.5, 1.0], 10).unwrap();
        assert_eq!(bhattacharyya(&d, &d, BhattacharyyaForm::Standard).unwrap(), 0.0);
        let printed = bhattacharyya(&d, &d, BhattacharyyaForm::AsPrinted).unwrap();
        assert!((printed - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn estimation_and_errors() {
        let d = ClassDistribution::estimate(&[vec![-1.0, 0.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(d.mean, vec![0.0, 1.0]);
        assert_eq!(d.covariance, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(ClassDistribution::estimate(&[vec![1.0]]).is_err());
        let e = ClassDistribution::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!(bhattacharyya(&gauss1(0.0, 1.0), &e, BhattacharyyaForm::Standard).is_err());
        // Singular covariance is rescued by regularization.
        assert!(bhattacharyya(&d, &e, BhattacharyyaForm::Standard).unwrap().is_finite());
        let zero = ClassDistribution::new(vec![0.0], vec![0.0], 2).unwrap();
        assert!(bhattacharyya(&zero, &gauss1(1.0, 1.0), BhattacharyyaForm::Standard).unwrap() > 0.0);
    }

    fn spd(a: [f64; 4], b: [f64; 4]) -> ClassDistribution {
        // A Aᵀ + I is positive definite.
        let m = [
            a[0] * a[0] + a[1] * a[1] + 1.0,
            a[0] * a[2] + a[1] * a[3],
            a[0] * a[2] + a[1] * a[3],
            a[2] * a[2] + a[3] * a[3] + 1.0,
        ];
        ClassDistribution::new(vec![b[0], b[1]], m.to_vec(), 10).unwrap()
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::array::uniform4(-2.0f64..2.0), b in prop::array::uniform4(-3.0f64..3.0),
                                 c in prop::array::uniform4(-2.0f64..2.0), d in prop::array::uniform4(-3.0f64..3.0)) {
            let (x, y) = (spd(a, b), spd(c, d));
            for form in [BhattacharyyaForm::Standard, BhattacharyyaForm::AsPrinted] {
                prop_assert_eq!(bhattacharyya(&x, &y, form).unwrap(), bhattacharyya(&y, &x, form).unwrap());
            }
            let bd = bhattacharyya(&x, &y, BhattacharyyaForm::Standard).unwrap();
            let jm = jm_distance(bd).unwrap();
            prop_assert!((0.0..=2.0).contains(&jm));
            let printed = bhattacharyya(&x, &y, BhattacharyyaForm::AsPrinted).unwrap();
            prop_assert!((printed - bd - 2.0f64.ln()).abs() < 1e-9);
        }

        #[test]
        fn jm_is_increasing(b1 in 0.0f64..20.0, delta in 1e-6f64..5.0) {
            prop_assert!(jm_distance(b1 + delta).unwrap() > jm_distance(b1).unwrap());
        }

        #[test]
        fn informative_feature_never_lowers_b(m in -3.0f64..3.0, v in 0.2f64..4.0, w in 0.2f64..4.0, gap in 0.5f64..5.0) {
            let base = bhattacharyya(&gauss1(0.0, v), &gauss1(m, w), BhattacharyyaForm::Standard).unwrap();
            let x = ClassDistribution::new(vec![0.0, 0.0], vec![v, 0.0, 0.0, 1.0], 10).unwrap();
            let y = ClassDistribution::new(vec![m, gap], vec![w, 0.0, 0.0, 1.0], 10).unwrap();
            let more = bhattacharyya(&x, &y, BhattacharyyaForm::Standard).unwrap();
            prop_assert!(more >= base - 1e-9);
        }
    }

    fn table(classes: &[(usize, [f64; 3], [f64; 3])], per: usize, seed: u64) -> SampleTable {
        let mut rng = rng_from(seed);
        let mut rows = Vec::new();
        for &(c, mean, sd) in classes {
            for k in 0..per {
                let features = (0..3)
                    .map(|f| Normal::new(mean[f], sd[f]).unwrap().sample(&mut rng))
                    .collect();
                rows.push(SampleRow { role: SampleRole::Train, class_id: c, segment_id: k, provenance: k, features });
            }
        }
        SampleTable { rows, dropped: 0 }
    }

    fn names() -> Vec<String> {
        ["f0", "f1", "f2"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn report_on_sampled_classes() {
        let scheme = ClassScheme::new(["a", "b", "c", "d"]).unwrap();
        let t = table(
            &[
                (0, [0.0, 0.0, 0.0], [1.0; 3]),
                (1, [0.0, 0.0, 0.0], [1.0; 3]),
                (2, [0.0, 10.0, 10.0], [1.0; 3]),
            ],
            400,
            3,
        );
        let r = separability_report(&t, &scheme, &default_subsets(&names()), BhattacharyyaForm::Standard).unwrap();
        assert_eq!(r.pairs, vec!["a vs b", "a vs c", "b vs c"]);
        assert_eq!(r.entries.len(), 3 * 4);
        for s in ["f0", "f1", "f2", "ALL"] {
            assert!(r.get(0, 1, s).unwrap().jm < 0.1);
        }
        assert!(r.get(0, 2, "ALL").unwrap().jm >= 1.9);
        assert!(r.get(2, 1, "f0").unwrap().jm < 0.1);
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("pair,subset,B,JM\na vs b,f0,"));
        let stats = class_band_statistics(&t, &scheme, &names()).unwrap();
        assert_eq!(stats.lines().count(), 1 + 3 * 3);
    }

    #[test]
    fn single_sample_class_is_an_error() {
        let scheme = ClassScheme::new(["a", "b"]).unwrap();
        let mut t = table(&[(0, [0.0; 3], [1.0; 3])], 5, 1);
        t.extend(table(&[(1, [1.0; 3], [1.0; 3])], 1, 2));
        assert!(separability_report(&t, &scheme, &default_subsets(&names()), BhattacharyyaForm::Standard).is_err());
    }
}
