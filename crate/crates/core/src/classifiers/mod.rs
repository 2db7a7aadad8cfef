//! CART, random forest, Gaussian naive Bayes and RBF SVM on per-segment
//! feature vectors.

mod cart;
mod forest;
mod nb;
mod svm;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cart::{train_cart, CartModel, CartParams, TreeNode};
pub use forest::{train_rf, ForestModel, RfParams};
pub use nb::{train_nb, NbModel};
pub use svm::{train_svm, BinaryMachine, SvmModel, SvmParams};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sampling::{SampleRole, SampleTable};
use crate::snic::{SegmentMap, SegmentStats};

/// Nodata value of class rasters.
pub const CLASS_NODATA: f64 = -1.0;

/// Row-major n×F feature matrix with one class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    feature_count: usize,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, feature_count: usize, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if feature_count == 0 || features.len() != labels.len() * feature_count {
            return Err(Error::InvalidDataset(format!(
                "{} feature values do not form {} rows of {} features",
                features.len(),
                labels.len(),
                feature_count
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature(i % feature_count));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidDataset(format!(
                "label {l} is not below the class count {class_count}"
            )));
        }
        Ok(Dataset { features, feature_count, labels, class_count })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let f = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != f) {
            return Err(Error::InvalidDataset("rows differ in length".into()));
        }
        Self::new(rows.concat(), f, labels, class_count)
    }

    /// Dataset of all rows of `table` with the given role.
    pub fn from_samples(table: &SampleTable, role: SampleRole, class_count: usize) -> Result<Self> {
        let rows: Vec<_> = table.with_role(role).collect();
        let f = rows.first().map_or(0, |r| r.features.len());
        Self::new(
            rows.iter().flat_map(|r| r.features.iter().copied()).collect(),
            f,
            rows.iter().map(|r| r.class_id).collect(),
            class_count,
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn value(&self, i: usize, f: usize) -> f64 {
        self.features[i * self.feature_count + f]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub(crate) fn class_histogram(&self, idx: &[usize]) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &i in idx {
            h[self.labels[i]] += 1;
        }
        h
    }

    /// Population variance of each feature over all rows.
    pub(crate) fn feature_variances(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.feature_count)
            .map(|f| {
                let mean = (0..self.len()).map(|i| self.value(i, f)).sum::<f64>() / n;
                (0..self.len()).map(|i| (self.value(i, f) - mean).powi(2)).sum::<f64>() / n
            })
            .collect()
    }
}

/// `1e-9 · max feature variance`, never below `1e-12`.
pub(crate) fn variance_floor(data: &Dataset) -> f64 {
    let max = data.feature_variances().into_iter().fold(0.0, f64::max);
    (1e-9 * max).max(1e-12)
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_input(x: &[f64], feature_count: usize) -> Result<()> {
    if x.len() != feature_count {
        return Err(Error::FeatureCountMismatch { expected: feature_count, actual: x.len() });
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFiniteFeature(i)),
        None => Ok(()),
    }
}

pub trait Classifier {
    fn feature_count(&self) -> usize;
    fn class_count(&self) -> usize;
    /// Predict the class of one feature vector.
    fn predict(&self, x: &[f64]) -> Result<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Cart,
    Rf,
    Nb,
    Svm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rf, Algorithm::Cart, Algorithm::Svm, Algorithm::Nb];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Cart => "cart",
            Algorithm::Rf => "rf",
            Algorithm::Nb => "nb",
            Algorithm::Svm => "svm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Cart => "CART",
            Algorithm::Rf => "Random Forest",
            Algorithm::Nb => "Naive Bayes",
            Algorithm::Svm => "SVM",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cart" => Ok(Algorithm::Cart),
            "rf" | "random_forest" | "randomforest" => Ok(Algorithm::Rf),
            "nb" | "naive_bayes" | "naivebayes" => Ok(Algorithm::Nb),
            "svm" => Ok(Algorithm::Svm),
            _ => Err(Error::Config(format!("unknown classifier {s:?}"))),
        }
    }
}

/// Hyperparameters for every algorithm; only the selected one is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierParams {
    pub cart: CartParams,
    pub rf: RfParams,
    pub svm: SvmParams,
}

/// A trained model of any kind, as written to `model_<algo>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "snake_case")]
pub enum Model {
    Cart(CartModel),
    RandomForest(ForestModel),
    NaiveBayes(NbModel),
    Svm(SvmModel),
}

impl Model {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Model::Cart(_) => Algorithm::Cart,
            Model::RandomForest(_) => Algorithm::Rf,
            Model::NaiveBayes(_) => Algorithm::Nb,
            Model::Svm(_) => Algorithm::Svm,
        }
    }

    fn inner(&self) -> &(dyn Classifier + Sync) {
        match self {
            Model::Cart(m) => m,
            Model::RandomForest(m) => m,
            Model::NaiveBayes(m) => m,
            Model::Svm(m) => m,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Classifier for Model {
    fn feature_count(&self) -> usize {
        self.inner().feature_count()
    }

    fn class_count(&self) -> usize {
        self.inner().class_count()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        self.inner().predict(x)
    }
}

/// Train the chosen algorithm with its parameters from `params`.
pub fn train(algorithm: Algorithm, data: &Dataset, params: &ClassifierParams) -> Result<Model> {
    Ok(match algorithm {
        Algorithm::Cart => Model::Cart(train_cart(data, &params.cart)?),
        Algorithm::Rf => Model::RandomForest(train_rf(data, &params.rf)?),
        Algorithm::Nb => Model::NaiveBayes(train_nb(data)?),
        Algorithm::Svm => Model::Svm(train_svm(data, &params.svm)?),
    })
}

/// Predict every row of a dataset.
pub fn predict_all<M: Classifier + Sync + ?Sized>(model: &M, data: &Dataset) -> Result<Vec<usize>> {
    (0..data.len()).into_par_iter().map(|i| model.predict(data.row(i))).collect()
}

/// Single-band class raster: every pixel takes the class predicted from its
/// segment's mean vector; unlabelled pixels are nodata.
pub fn classify_segments<M: Classifier + Sync + ?Sized>(
    model: &M,
    stats: &SegmentStats,
    segmap: &SegmentMap,
) -> Result<Raster> {
    if model.feature_count() != stats.band_names.len() {
        return Err(Error::FeatureCountMismatch {
            expected: stats.band_names.len(),
            actual: model.feature_count(),
        });
    }
    if stats.len() != segmap.segment_count() {
        return Err(Error::GridMismatch(format!(
            "{} segment statistics for {} segments",
            stats.len(),
            segmap.segment_count()
        )));
    }
    let classes: Vec<usize> = stats
        .segments
        .par_iter()
        .map(|s| model.predict(&s.mean_per_band))
        .collect::<Result<_>>()?;
    let data = segmap
        .labels()
        .iter()
        .map(|&l| if l < 0 { CLASS_NODATA } else { classes[l as usize] as f64 })
        .collect();
    Raster::new(
        segmap.width(),
        segmap.height(),
        vec!["class".to_string()],
        data,
        CLASS_NODATA,
        segmap.transform().clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridTransform;
    use crate::snic::SegmentStat;

    fn two_blob_data() -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let d = i as f64 * 0.01;
            rows.push(vec![0.1 + d, 0.2, 0.1, 0.3, 0.5, -0.4, 0.3]);
            labels.push(0);
            rows.push(vec![0.6 + d, 0.7, 0.6, 0.1, -0.2, 0.3, -0.1]);
            labels.push(1);
        }
        Dataset::from_rows(&rows, labels, 2).unwrap()
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], 1, vec![], 1).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 2, vec![3], 2).is_err());
        assert!(matches!(
            Dataset::new(vec![1.0, f64::NAN], 2, vec![0], 1),
            Err(Error::NonFiniteFeature(1))
        ));
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2, vec![0], 1).is_err());
    }

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!("knn".parse::<Algorithm>().unwrap_err().is_config());
    }

    #[test]
    fn models_round_trip_exactly() {
        let data = two_blob_data();
        let params = ClassifierParams::default();
        let probe: Vec<Vec<f64>> = (0..20).map(|i| {
            let t = i as f64 / 19.0;
            vec![t, 0.2 + 0.5 * t, t, 0.3 - 0.2 * t, 0.5 - 0.7 * t, -0.4 + 0.7 * t, 0.3 - 0.4 * t]
        }).collect();
        for a in Algorithm::ALL {
            let m = train(a, &data, &params).unwrap();
            assert_eq!(m.algorithm(), a);
            let back = Model::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
            for x in &probe {
                assert_eq!(back.predict(x).unwrap(), m.predict(x).unwrap());
            }
        }
    }

    fn stats_fixture(means: Vec<Vec<f64>>) -> (SegmentStats, SegmentMap) {
        let t = GridTransform::new(0.0, 10.0, 10.0, 10.0, "EPSG:32735").unwrap();
        let n = means.len();
        let segments = means
            .into_iter()
            .enumerate()
            .map(|(i, m)| SegmentStat {
                segment_id: i,
                mean_per_band: m,
                pixel_count: 1,
                area_m2: 100.0,
                perimeter_m: 40.0,
                centroid: (0.0, 0.0),
            })
            .collect();
        let stats = SegmentStats {
            band_names: crate::preprocess::FEATURE_BANDS.iter().map(|s| s.to_string()).collect(),
            segments,
            transform: t.clone(),
        };
        let mut labels: Vec<i32> = (0..n as i32).collect();
        labels.push(-1);
        (stats, SegmentMap::new(n + 1, 1, labels, t).unwrap())
    }

    #[test]
    fn classify_segments_maps_each_segment() {
        let data = two_blob_data();
        let m = train(Algorithm::Cart, &data, &ClassifierParams::default()).unwrap();
        let (stats, seg) = stats_fixture(vec![data.row(0).to_vec(), data.row(1).to_vec()]);
        let r = classify_segments(&m, &stats, &seg).unwrap();
        assert_eq!(r.band(0), &[0.0, 1.0, CLASS_NODATA]);
        assert_eq!(r.nodata(), CLASS_NODATA);

        let (stats, seg) = stats_fixture(vec![data.row(0).to_vec()]);
        let r = classify_segments(&m, &stats, &seg).unwrap();
        assert_eq!(r.band(0)[0], 0.0);
    }

    #[test]
    fn classify_segments_rejects_feature_mismatch() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64; 6]).collect();
        let data = Dataset::from_rows(&rows, vec![0, 0, 1, 1], 2).unwrap();
        let m = train(Algorithm::Nb, &data, &ClassifierParams::default()).unwrap();
        let (stats, seg) = stats_fixture(vec![vec![0.0; 7]]);
        assert!(matches!(
            classify_segments(&m, &stats, &seg),
            Err(Error::FeatureCountMismatch { expected: 7, actual: 6 })
        ));
    }
}
