use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sampling::ClassScheme;

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(class_count: usize, counts: Vec<u64>) -> Result<Self> {
        if class_count == 0 || counts.len() != class_count * class_count {
            return Err(Error::Metric(format!(
                "{} counts do not form a {class_count}×{class_count} matrix",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { class_count, counts })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.class_count + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.class_count).map(<[u64]>::to_vec).collect()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.class_count).map(|p| self.get(c, p)).sum()
    }

    pub fn column_sum(&self, c: usize) -> u64 {
        (0..self.class_count).map(|r| self.get(r, c)).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count).map(|c| self.get(c, c)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn confusion_matrix(reference: &[usize], predicted: &[usize], class_count: usize) -> Result<ConfusionMatrix> {
    if reference.len() != predicted.len() {
        return Err(Error::Metric(format!(
            "{} reference labels but {} predictions",
            reference.len(),
            predicted.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Metric("no labels to compare".into()));
    }
    let mut cm = ConfusionMatrix::from_counts(class_count, vec![0; class_count * class_count])?;
    for (&r, &p) in reference.iter().zip(predicted) {
        if r >= class_count || p >= class_count {
            return Err(Error::Metric(format!("label {} is out of range", r.max(p))));
        }
        cm.counts[r * class_count + p] += 1;
    }
    Ok(cm)
}

pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::Metric("empty confusion matrix".into())),
        t => Ok(cm.trace() as f64 / t as f64),
    }
}

/// `None` when the class has no reference samples.
pub fn producers_accuracy(cm: &ConfusionMatrix, c: usize) -> Option<f64> {
    match cm.row_sum(c) {
        0 => None,
        s => Some(cm.get(c, c) as f64 / s as f64),
    }
}

/// `None` when nothing was predicted as the class.
pub fn users_accuracy(cm: &ConfusionMatrix, c: usize) -> Option<f64> {
    match cm.column_sum(c) {
        0 => None,
        s => Some(cm.get(c, c) as f64 / s as f64),
    }
}

/// How undefined producer's/user's accuracies appear in reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotAvailable {
    #[default]
    Marker,
    Zero,
}

impl NotAvailable {
    fn csv(self, v: Option<f64>) -> String {
        match (v, self) {
            (Some(v), _) => v.to_string(),
            (None, NotAvailable::Marker) => "NA".into(),
            (None, NotAvailable::Zero) => "0".into(),
        }
    }

    fn json(self, v: Option<f64>) -> Option<f64> {
        match self {
            NotAvailable::Marker => v,
            NotAvailable::Zero => Some(v.unwrap_or(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: usize,
    pub class_name: String,
    pub reference_count: u64,
    pub predicted_count: u64,
    pub producers: Option<f64>,
    pub users: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub overall_accuracy: f64,
    pub sample_count: u64,
    pub classes: Vec<ClassAccuracy>,
    pub confusion_matrix: Vec<Vec<u64>>,
}

impl AccuracyReport {
    pub fn new(cm: &ConfusionMatrix, scheme: &ClassScheme) -> Result<Self> {
        if scheme.len() != cm.class_count() {
            return Err(Error::Metric(format!(
                "scheme has {} classes but the matrix {}",
                scheme.len(),
                cm.class_count()
            )));
        }
        Ok(AccuracyReport {
            overall_accuracy: overall_accuracy(cm)?,
            sample_count: cm.total(),
            classes: scheme
                .entries()
                .map(|(c, name)| ClassAccuracy {
                    class_id: c,
                    class_name: name.to_string(),
                    reference_count: cm.row_sum(c),
                    predicted_count: cm.column_sum(c),
                    producers: producers_accuracy(cm, c),
                    users: users_accuracy(cm, c),
                })
                .collect(),
            confusion_matrix: cm.rows(),
        })
    }

    /// Copy with undefined accuracies rendered per `na`.
    pub fn rendered(&self, na: NotAvailable) -> AccuracyReport {
        let mut r = self.clone();
        for c in &mut r.classes {
            c.producers = na.json(c.producers);
            c.users = na.json(c.users);
        }
        r
    }

    /// `class,producers,users` rows followed by an `overall` row.
    pub fn to_csv(&self, na: NotAvailable) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "producers", "users"])?;
        for c in &self.classes {
            w.write_record([c.class_name.clone(), na.csv(c.producers), na.csv(c.users)])?;
        }
        w.write_record(["overall".to_string(), self.overall_accuracy.to_string(), String::new()])?;
        into_string(w)
    }
}

pub(crate) fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Metric(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Metric(e.to_string()))
}

/// Hectares mapped to each class id `0..class_count`.
pub fn class_areas(class_raster: &Raster, class_count: usize) -> Result<Vec<f64>> {
    if class_raster.band_count() != 1 {
        return Err(Error::Metric(format!(
            "class raster must have one band, found {}",
            class_raster.band_count()
        )));
    }
    let t = class_raster.transform();
    if t.is_geographic() {
        return Err(Error::UnsupportedTransform(format!(
            "areas need a projected metric CRS, got {}",
            t.crs_tag
        )));
    }
    let mut counts = vec![0u64; class_count];
    for &v in class_raster.band(0) {
        if !class_raster.is_valid_value(v) {
            continue;
        }
        if v < 0.0 || v.fract() != 0.0 || v as usize >= class_count {
            return Err(Error::Metric(format!("class raster holds unknown class value {v}")));
        }
        counts[v as usize] += 1;
    }
    let pixel_m2 = t.pixel_size_x * t.pixel_size_y;
    Ok(counts.iter().map(|&n| n as f64 * pixel_m2 / 10_000.0).collect())
}
