//! Ground-truth points, the stratified train/validation split and per-segment
//! sample tables.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::snic::{SegmentMap, SegmentStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPoint {
    pub x: f64,
    pub y: f64,
    pub class_id: usize,
    pub class_name: String,
}

/// Ordered class names; a class's id is its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassScheme {
    names: Vec<String>,
}

impl ClassScheme {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = std::collections::BTreeSet::new();
        for n in &names {
            if n.trim().is_empty() {
                return Err(Error::InvalidScheme("empty class name".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidScheme(format!("duplicate class name {n:?}")));
            }
        }
        Ok(ClassScheme { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// (class_id, class_name) pairs in id order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &str)> {
        self.names.iter().enumerate().map(|(i, n)| (i, n.as_str()))
    }
}

impl TryFrom<Vec<String>> for ClassScheme {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        ClassScheme::new(v)
    }
}

impl From<ClassScheme> for Vec<String> {
    fn from(s: ClassScheme) -> Self {
        s.names
    }
}

#[derive(Deserialize)]
struct CsvPoint {
    x: f64,
    y: f64,
    class_name: String,
}

/// Load points from CSV (`x,y,class_name`) or a GeoJSON collection of Points
/// carrying a `class_name` property. The format is sniffed from the content.
pub fn load_points(path: &Path, scheme: &ClassScheme) -> Result<Vec<GroundTruthPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points(&text, scheme)
}

pub fn parse_points(text: &str, scheme: &ClassScheme) -> Result<Vec<GroundTruthPoint>> {
    let points = if text.trim_start().starts_with('{') {
        parse_geojson_points(text, scheme)?
    } else {
        parse_csv_points(text, scheme)?
    };
    if points.is_empty() {
        return Err(Error::Parse("no ground-truth points found".into()));
    }
    Ok(points)
}

fn resolve(scheme: &ClassScheme, x: f64, y: f64, name: &str, location: String) -> Result<GroundTruthPoint> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Parse(format!("non-finite coordinates at {location}")));
    }
    let class_id = scheme.id_of(name).ok_or_else(|| Error::UnknownClass {
        name: name.to_string(),
        location: location.clone(),
    })?;
    Ok(GroundTruthPoint {
        x,
        y,
        class_id,
        class_name: name.to_string(),
    })
}

fn parse_csv_points(text: &str, scheme: &ClassScheme) -> Result<Vec<GroundTruthPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    for required in ["x", "y", "class_name"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse(format!("CSV header lacks column {required:?}")));
        }
    }
    reader
        .deserialize::<CsvPoint>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::Parse(format!("CSV row {}: {e}", i + 1)))?;
            resolve(scheme, row.x, row.y, &row.class_name, format!("CSV row {}", i + 1))
        })
        .collect()
}

fn parse_geojson_points(text: &str, scheme: &ClassScheme) -> Result<Vec<GroundTruthPoint>> {
    let value: Value = serde_json::from_str(text)?;
    let features = match value.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => value
            .get("features")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default(),
        Some("Feature") => vec![value.clone()],
        other => {
            return Err(Error::Parse(format!(
                "expected a GeoJSON FeatureCollection, got {other:?}"
            )))
        }
    };
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let location = format!("feature {}", i + 1);
            let geom = f.get("geometry").filter(|g| {
                g.get("type").and_then(Value::as_str) == Some("Point")
            });
            let coords = geom
                .and_then(|g| g.get("coordinates"))
                .and_then(Value::as_array)
                .filter(|c| c.len() >= 2)
                .ok_or_else(|| Error::Parse(format!("{location} is not a Point")))?;
            let (x, y) = match (coords[0].as_f64(), coords[1].as_f64()) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(Error::Parse(format!("{location} has bad coordinates"))),
            };
            let name = f
                .get("properties")
                .and_then(|p| p.get("class_name"))
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Parse(format!("{location} lacks a class_name property")))?;
            resolve(scheme, x, y, name, location)
        })
        .collect()
}

/// Serialize points as CSV with header `x,y,class_name`.
pub fn write_points_csv(points: &[GroundTruthPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "class_name"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.y.to_string(), p.class_name.clone()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Indices of the training and validation halves of a stratified split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Number of training points for a class of `n` points: `round(fraction * n)`
/// (half away from zero), kept within `[1, n - 1]`.
pub fn train_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Per-class seeded shuffle; both halves keep the input order.
pub fn stratified_split_indices(
    points: &[GroundTruthPoint],
    train_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        by_class.entry(p.class_id).or_default().push(i);
    }
    let mut rng = rng_from(seed);
    let mut is_train = vec![false; points.len()];
    for (class, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::Sampling(format!(
                "class {class} ({}) has {} point(s); at least 2 are needed to split",
                points[idx[0]].class_name,
                idx.len()
            )));
        }
        let k = train_count(idx.len(), train_fraction);
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            is_train[i] = true;
        }
    }
    let (train, validation) = (0..points.len()).partition(|&i| is_train[i]);
    Ok(SplitIndices { train, validation })
}

pub fn stratified_split(
    points: &[GroundTruthPoint],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<GroundTruthPoint>, Vec<GroundTruthPoint>)> {
    let s = stratified_split_indices(points, train_fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| points[i].clone()).collect();
    Ok((pick(&s.train), pick(&s.validation)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRole {
    Train,
    Validation,
}

impl SampleRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleRole::Train => "train",
            SampleRole::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub role: SampleRole,
    pub class_id: usize,
    pub segment_id: usize,
    /// Index of the source point in the list the table was built from.
    pub provenance: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTable {
    pub rows: Vec<SampleRow>,
    /// Points dropped because their segment's majority class differs.
    pub dropped: usize,
}

impl SampleTable {
    pub fn extend(&mut self, other: SampleTable) {
        self.rows.extend(other.rows);
        self.dropped += other.dropped;
    }

    pub fn with_role(&self, role: SampleRole) -> impl Iterator<Item = &SampleRow> {
        self.rows.iter().filter(move |r| r.role == role)
    }

    /// CSV with header `role,class_id,segment_id,<feature names...>`.
    pub fn write_csv(&self, feature_names: &[String], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["role".to_string(), "class_id".into(), "segment_id".into()];
        header.extend(feature_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.role.as_str().to_string(),
                r.class_id.to_string(),
                r.segment_id.to_string(),
            ];
            rec.extend(r.features.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`SampleTable::write_csv`]. Provenance becomes the row number.
    pub fn read_csv(path: &Path) -> Result<(SampleTable, Vec<String>)> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        if headers.len() < 4 || &headers[0] != "role" || &headers[1] != "class_id" || &headers[2] != "segment_id" {
            return Err(Error::Parse(format!(
                "{}: expected header role,class_id,segment_id,...",
                path.display()
            )));
        }
        let names: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse(format!("{} row {}: bad {what}", path.display(), i + 1));
            let role = match &rec[0] {
                "train" => SampleRole::Train,
                "validation" => SampleRole::Validation,
                _ => return Err(bad("role")),
            };
            let class_id = rec[1].parse().map_err(|_| bad("class_id"))?;
            let segment_id = rec[2].parse().map_err(|_| bad("segment_id"))?;
            let features = rec
                .iter()
                .skip(3)
                .map(|v| v.parse::<f64>().map_err(|_| bad("feature")))
                .collect::<Result<Vec<_>>>()?;
            if features.len() != names.len() {
                return Err(bad("feature count"));
            }
            rows.push(SampleRow {
                role,
                class_id,
                segment_id,
                provenance: i,
                features,
            });
        }
        Ok((SampleTable { rows, dropped: 0 }, names))
    }
}

/// Attach each point to the segment under it and take that segment's mean
/// vector as its features.
///
/// When a segment holds points of different classes, its label is the
/// majority class (ties go to the lowest class id) and the other points are
/// dropped. Rows are sorted by (segment, class, provenance), so the result
/// does not depend on the order of `points` beyond provenance numbering.
pub fn build_sample_table(
    points: &[GroundTruthPoint],
    segmap: &SegmentMap,
    stats: &SegmentStats,
    role: SampleRole,
) -> Result<SampleTable> {
    let t = segmap.transform();
    let mut by_segment: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let (r, c) = t
            .pixel_of(p.x, p.y, segmap.width(), segmap.height())
            .ok_or(Error::PointOutsideExtent { index: i, x: p.x, y: p.y })?;
        let label = segmap.label_at(r, c);
        if label < 0 {
            return Err(Error::PointOnNodata { index: i, x: p.x, y: p.y });
        }
        by_segment.entry(label as usize).or_default().push(i);
    }
    let mut rows = Vec::new();
    let mut dropped = 0;
    for (segment_id, members) in by_segment {
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in &members {
            *votes.entry(points[i].class_id).or_default() += 1;
        }
        // BTreeMap iterates ascending; strict > keeps the lowest id on ties.
        let (winner, _) = votes
            .iter()
            .fold((usize::MAX, 0), |best, (&c, &n)| if n > best.1 { (c, n) } else { best });
        let seg = stats
            .get(segment_id)
            .ok_or_else(|| Error::Segmentation(format!("no statistics for segment {segment_id}")))?;
        if seg.mean_per_band.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampling(format!("segment {segment_id} has non-finite means")));
        }
        for &i in &members {
            if points[i].class_id == winner {
                rows.push(SampleRow {
                    role,
                    class_id: winner,
                    segment_id,
                    provenance: i,
                    features: seg.mean_per_band.clone(),
                });
            } else {
                dropped += 1;
            }
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} point(s) outvoted within their segment");
    }
    rows.sort_by_key(|r| (r.segment_id, r.class_id, r.provenance));
    Ok(SampleTable { rows, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GridTransform;
    use crate::snic::SegmentStat;
    use proptest::prelude::*;

    fn scheme() -> ClassScheme {
        ClassScheme::new(["long grass", "short grass", "bare surface", "water"]).unwrap()
    }

    fn pts(classes: &[(usize, usize)]) -> Vec<GroundTruthPoint> {
        let s = scheme();
        let mut out = Vec::new();
        for &(c, n) in classes {
            for k in 0..n {
                out.push(GroundTruthPoint {
                    x: k as f64,
                    y: c as f64,
                    class_id: c,
                    class_name: s.name(c).unwrap().to_string(),
                });
            }
        }
        out
    }

    #[test]
    fn csv_and_geojson_agree() {
        let csv = "x,y,class_name\n1.5,2.5,water\n10,20,bare surface\n3,4,long grass\n";
        let gj = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[1.5,2.5]},"properties":{"class_name":"water"}},
            {"type":"Feature","geometry":{"type":"Point","coordinates":[10,20]},"properties":{"class_name":"bare surface"}},
            {"type":"Feature","geometry":{"type":"Point","coordinates":[3,4]},"properties":{"class_name":"long grass"}}]}"#;
        let a = parse_points(csv, &scheme()).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].class_id, 3);
        assert_eq!(a, parse_points(gj, &scheme()).unwrap());
    }

    #[test]
    fn unknown_class_names_row() {
        let csv = "x,y,class_name\n1,2,water\n3,4,Swamp\n";
        match parse_points(csv, &scheme()) {
            Err(Error::UnknownClass { name, location }) => {
                assert_eq!(name, "Swamp");
                assert_eq!(location, "CSV row 2");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_points("x,y,class_name\n", &scheme()).is_err());
        assert!(parse_points("a,b\n1,2\n", &scheme()).is_err());
    }

    #[test]
    fn scheme_rules() {
        assert!(ClassScheme::new(["a", "a"]).is_err());
        let s: ClassScheme = serde_json::from_str(r#"["a","b"]"#).unwrap();
        assert_eq!(s.id_of("b"), Some(1));
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"["a","b"]"#);
    }

    #[test]
    fn split_counts() {
        let p = pts(&[(0, 10), (1, 10), (2, 10), (3, 10)]);
        let s = stratified_split_indices(&p, 0.7, 1).unwrap();
        for c in 0..4 {
            let nt = s.train.iter().filter(|&&i| p[i].class_id == c).count();
            let nv = s.validation.iter().filter(|&&i| p[i].class_id == c).count();
            assert_eq!((nt, nv), (7, 3));
        }
        assert_eq!(s, stratified_split_indices(&p, 0.7, 1).unwrap());
        let differs = (2..20).any(|seed| stratified_split_indices(&p, 0.7, seed).unwrap() != s);
        assert!(differs);
    }

    #[test]
    fn split_small_classes() {
        assert!(matches!(
            stratified_split_indices(&pts(&[(0, 5), (1, 1)]), 0.7, 0),
            Err(Error::Sampling(_))
        ));
        let s = stratified_split_indices(&pts(&[(0, 2)]), 0.9, 0).unwrap();
        assert_eq!((s.train.len(), s.validation.len()), (1, 1));
        assert!(stratified_split_indices(&pts(&[(0, 5)]), 1.0, 0).is_err());
        assert_eq!(train_count(5, 0.7), 4);
        assert_eq!(train_count(2, 0.5), 1);
    }

    proptest! {
        #[test]
        fn split_is_partition(counts in prop::collection::vec(2usize..30, 1..4), frac in 0.05f64..0.95, seed in any::<u64>()) {
            let spec: Vec<(usize, usize)> = counts.iter().cloned().enumerate().collect();
            let p = pts(&spec);
            let s = stratified_split_indices(&p, frac, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).cloned().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..p.len()).collect::<Vec<_>>());
            for (c, n) in spec {
                let nt = s.train.iter().filter(|&&i| p[i].class_id == c).count();
                prop_assert_eq!(nt, train_count(n, frac));
            }
        }
    }

    fn segment_fixture() -> (SegmentMap, SegmentStats) {
        let t = GridTransform::new(0.0, 20.0, 10.0, 10.0, "EPSG:32735").unwrap();
        let seg = SegmentMap::new(2, 2, vec![0, 1, 0, -1], t.clone()).unwrap();
        let stat = |id, base: f64| SegmentStat {
            segment_id: id,
            mean_per_band: (1..=7).map(|k| base * k as f64).collect(),
            pixel_count: 1,
            area_m2: 100.0,
            perimeter_m: 40.0,
            centroid: (0.0, 0.0),
        };
        let stats = SegmentStats {
            band_names: crate::preprocess::FEATURE_BANDS.iter().map(|s| s.to_string()).collect(),
            segments: vec![stat(0, 0.1), stat(1, 0.2)],
            transform: t,
        };
        (seg, stats)
    }

    fn at(x: f64, y: f64, class: usize) -> GroundTruthPoint {
        GroundTruthPoint { x, y, class_id: class, class_name: scheme().name(class).unwrap().into() }
    }

    #[test]
    fn sample_table_lookup_and_majority() {
        let (seg, stats) = segment_fixture();
        let t = build_sample_table(&[at(15.0, 15.0, 1)], &seg, &stats, SampleRole::Train).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].segment_id, 1);
        assert_eq!(t.rows[0].features, stats.segments[1].mean_per_band);

        // Segment 0 spans (0,0) and (1,0): two water points and one bare.
        let p = vec![at(5.0, 15.0, 3), at(5.0, 5.0, 2), at(6.0, 14.0, 3)];
        let t = build_sample_table(&p, &seg, &stats, SampleRole::Train).unwrap();
        assert_eq!(t.dropped, 1);
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.class_id == 3));

        // Tie goes to the lowest class id.
        let p = vec![at(5.0, 15.0, 3), at(5.0, 5.0, 2)];
        let t = build_sample_table(&p, &seg, &stats, SampleRole::Train).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].class_id, 2);
    }

    #[test]
    fn sample_table_errors() {
        let (seg, stats) = segment_fixture();
        assert!(matches!(
            build_sample_table(&[at(15.0, 5.0, 0)], &seg, &stats, SampleRole::Train),
            Err(Error::PointOnNodata { index: 0, .. })
        ));
        assert!(matches!(
            build_sample_table(&[at(5.0, 5.0, 0), at(50.0, 5.0, 0)], &seg, &stats, SampleRole::Train),
            Err(Error::PointOutsideExtent { index: 1, .. })
        ));
    }

    #[test]
    fn sample_table_is_order_free() {
        let (seg, stats) = segment_fixture();
        let p = vec![at(5.0, 15.0, 3), at(5.0, 5.0, 2), at(6.0, 14.0, 3), at(15.0, 15.0, 0)];
        let strip = |t: SampleTable| {
            let mut v: Vec<_> = t.rows.into_iter().map(|r| (r.segment_id, r.class_id)).collect();
            v.sort();
            v
        };
        let a = build_sample_table(&p, &seg, &stats, SampleRole::Train).unwrap();
        let rev: Vec<_> = p.iter().rev().cloned().collect();
        let b = build_sample_table(&rev, &seg, &stats, SampleRole::Train).unwrap();
        assert_eq!(a.dropped, b.dropped);
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn sample_csv_round_trip() {
        let (seg, stats) = segment_fixture();
        let t = build_sample_table(&[at(15.0, 15.0, 1), at(5.0, 5.0, 0)], &seg, &stats, SampleRole::Validation).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        t.write_csv(&stats.band_names, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("role,class_id,segment_id,B2,B3,B4,B8,NDVI,NDWI,MSAVI2\n"));
        let (back, names) = SampleTable::read_csv(&path).unwrap();
        assert_eq!(names, stats.band_names);
        assert_eq!(back.rows.len(), 2);
        for (a, b) in back.rows.iter().zip(&t.rows) {
            assert_eq!((a.role, a.class_id, a.segment_id), (b.role, b.class_id, b.segment_id));
            assert_eq!(a.features, b.features);
        }
    }
}
