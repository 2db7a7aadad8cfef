//! File-based stages: composite, features, segment, train/classify, assess,
//! compare, render and synthetic scene export.

mod config;
mod render;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{ConfigOverrides, DateWindow, InputImage, PipelineConfig, PresplitPoints, SplitConfig};
pub use render::{colorize, encode_png, legend, render_class_map, LegendEntry};

use crate::classifiers::{self, classify_segments, predict_all, Algorithm, Classifier, Dataset, Model};
use crate::error::{Error, Result};
use crate::metrics::{
    class_areas, class_band_statistics, confusion_matrix, default_subsets, separability_report, AccuracyReport,
    NotAvailable, SeparabilityReport,
};
use crate::preprocess::{build_feature_image, median_composite, FeatureImage};
use crate::raster::{
    clip_to_bounds, filter_by_date, read_geotiff, read_label_geotiff, write_geotiff, write_label_geotiff,
    BoundsPolygon, DatedRaster, ImageStack, Raster,
};
use crate::sampling::{
    build_sample_table, load_points, stratified_split, write_points_csv, ClassScheme, GroundTruthPoint, SampleRole,
    SampleTable,
};
use crate::scenegen::{generate_scene, SceneSpec};
use crate::snic::{compute_segment_stats, snic_segment, SegmentMap, SegmentStats};

pub const COMPOSITE_TIF: &str = "composite.tif";
pub const COMPOSITE_PROVENANCE: &str = "composite_provenance.json";
pub const FEATURES_TIF: &str = "features.tif";
pub const SEGMENTS_TIF: &str = "segments.tif";
pub const SEGMENT_STATS_CSV: &str = "segment_stats.csv";
pub const SAMPLES_CSV: &str = "samples.csv";
pub const SEPARABILITY_CSV: &str = "separability.csv";
pub const CLASS_STATS_CSV: &str = "class_band_stats.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_JSON: &str = "comparison.json";

pub fn model_file(a: Algorithm) -> String {
    format!("model_{}.json", a.as_str())
}

pub fn classes_file(a: Algorithm) -> String {
    format!("classes_{}.tif", a.as_str())
}

pub fn assessment_file(a: Algorithm, ext: &str) -> String {
    format!("assessment_{}.{ext}", a.as_str())
}

pub fn map_file(a: Algorithm) -> String {
    format!("map_{}.png", a.as_str())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn prepare(cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeProvenance {
    pub input_count: usize,
    pub inputs: Vec<InputImage>,
    pub excluded_by_date: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date_window: Option<DateWindow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub band_names: Vec<String>,
}

/// Date filter, clip and per-pixel median. Writes the composite and its
/// provenance record.
pub fn run_composite(cfg: &PipelineConfig) -> Result<CompositeProvenance> {
    prepare(cfg)?;
    cfg.check_paths()?;
    let items = cfg
        .inputs
        .iter()
        .map(|i| Ok(DatedRaster { raster: read_geotiff(&i.path)?, date: i.date }))
        .collect::<Result<Vec<_>>>()?;
    let stack = ImageStack::new(items)?;
    let filtered = match cfg.date_window {
        Some(w) => filter_by_date(&stack, w.start, w.end)?,
        None => stack.clone(),
    };
    if filtered.is_empty() {
        return Err(Error::EmptyStack);
    }
    let kept: Vec<InputImage> = cfg
        .inputs
        .iter()
        .filter(|i| cfg.date_window.is_none_or(|w| i.date >= w.start && i.date <= w.end))
        .cloned()
        .collect();
    let stack = match &cfg.bounds {
        Some(path) => {
            let poly = BoundsPolygon::from_geojson_file(path)?;
            let items = filtered
                .into_items()
                .into_iter()
                .map(|it| Ok(DatedRaster { raster: clip_to_bounds(&it.raster, &poly)?, date: it.date }))
                .collect::<Result<Vec<_>>>()?;
            ImageStack::new(items)?
        }
        None => filtered,
    };
    let composite = median_composite(&stack)?;
    write_geotiff(&composite, &cfg.output(COMPOSITE_TIF))?;
    let prov = CompositeProvenance {
        input_count: kept.len(),
        excluded_by_date: cfg.inputs.len() - kept.len(),
        inputs: kept,
        date_window: cfg.date_window,
        bounds: cfg.bounds.clone(),
        width: composite.width(),
        height: composite.height(),
        band_names: composite.band_names().to_vec(),
    };
    write_json(&cfg.output(COMPOSITE_PROVENANCE), &prov)?;
    Ok(prov)
}

fn read_stage_input(cfg: &PipelineConfig, name: &str, stage: &str) -> Result<Raster> {
    let path = cfg.output(name);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} is missing; run the {stage} stage first",
            path.display()
        )));
    }
    read_geotiff(&path)
}

pub fn run_features(cfg: &PipelineConfig) -> Result<FeatureImage> {
    prepare(cfg)?;
    let composite = read_stage_input(cfg, COMPOSITE_TIF, "composite")?;
    let features = build_feature_image(&composite, &cfg.band_roles, cfg.ndwi_convention)?;
    write_geotiff(features.raster(), &cfg.output(FEATURES_TIF))?;
    Ok(features)
}

fn load_features(cfg: &PipelineConfig) -> Result<FeatureImage> {
    FeatureImage::new(read_stage_input(cfg, FEATURES_TIF, "features")?)
}

fn load_segments(cfg: &PipelineConfig) -> Result<(SegmentMap, SegmentStats)> {
    let features = load_features(cfg)?;
    let path = cfg.output(SEGMENTS_TIF);
    if !path.exists() {
        return Err(Error::Config(format!("{} is missing; run the segment stage first", path.display())));
    }
    let segmap = read_label_geotiff(&path)?;
    let stats = compute_segment_stats(&features, &segmap)?;
    Ok((segmap, stats))
}

pub fn run_segment(cfg: &PipelineConfig) -> Result<(SegmentMap, SegmentStats)> {
    prepare(cfg)?;
    let features = load_features(cfg)?;
    let segmap = snic_segment(&features, &cfg.snic)?;
    let stats = compute_segment_stats(&features, &segmap)?;
    write_label_geotiff(&segmap, &cfg.output(SEGMENTS_TIF))?;
    stats.write_csv(&cfg.output(SEGMENT_STATS_CSV))?;
    Ok((segmap, stats))
}

/// Training and validation points, from a seeded stratified split or from
/// pre-split files.
pub fn split_points(cfg: &PipelineConfig) -> Result<(Vec<GroundTruthPoint>, Vec<GroundTruthPoint>)> {
    cfg.check_paths()?;
    match (&cfg.presplit, &cfg.points) {
        (Some(p), _) => Ok((load_points(&p.train, &cfg.classes)?, load_points(&p.validation, &cfg.classes)?)),
        (None, Some(path)) => {
            let points = load_points(path, &cfg.classes)?;
            stratified_split(&points, cfg.split.train_fraction, cfg.split.seed)
        }
        (None, None) => Err(Error::Config("either points or presplit must be given".into())),
    }
}

/// Build and write the sample table for the current split.
pub fn build_samples(cfg: &PipelineConfig) -> Result<(SampleTable, SegmentMap, SegmentStats)> {
    prepare(cfg)?;
    let (segmap, stats) = load_segments(cfg)?;
    let (train, validation) = split_points(cfg)?;
    let mut table = build_sample_table(&train, &segmap, &stats, SampleRole::Train)?;
    table.extend(build_sample_table(&validation, &segmap, &stats, SampleRole::Validation)?);
    table.write_csv(&stats.band_names, &cfg.output(SAMPLES_CSV))?;
    Ok((table, segmap, stats))
}

fn train_and_map(
    cfg: &PipelineConfig,
    algorithm: Algorithm,
    table: &SampleTable,
    segmap: &SegmentMap,
    stats: &SegmentStats,
) -> Result<(Model, Raster)> {
    let data = Dataset::from_samples(table, SampleRole::Train, cfg.classes.len())?;
    let model = classifiers::train(algorithm, &data, &cfg.classifier_params)?;
    let map = classify_segments(&model, stats, segmap)?;
    model.save(&cfg.output(&model_file(algorithm)))?;
    write_geotiff(&map, &cfg.output(&classes_file(algorithm)))?;
    Ok((model, map))
}

/// Split, sample, train the configured classifier and map every segment.
pub fn run_train_classify(cfg: &PipelineConfig) -> Result<(Model, Raster)> {
    let (table, segmap, stats) = build_samples(cfg)?;
    train_and_map(cfg, cfg.classifier, &table, &segmap, &stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassArea {
    pub class_id: usize,
    pub class_name: String,
    pub area_ha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub algorithm: Algorithm,
    pub accuracy: AccuracyReport,
    pub class_areas: Vec<ClassArea>,
    pub separability: SeparabilityReport,
}

fn assess_model(
    cfg: &PipelineConfig,
    model: &Model,
    table: &SampleTable,
    feature_names: &[String],
    map: &Raster,
) -> Result<Assessment> {
    let scheme = &cfg.classes;
    let validation = Dataset::from_samples(table, SampleRole::Validation, scheme.len())?;
    if model.feature_count() != validation.feature_count() {
        return Err(Error::FeatureCountMismatch {
            expected: validation.feature_count(),
            actual: model.feature_count(),
        });
    }
    let predicted = predict_all(model, &validation)?;
    let cm = confusion_matrix(validation.labels(), &predicted, scheme.len())?;
    let accuracy = AccuracyReport::new(&cm, scheme)?;
    let class_areas = class_areas(map, scheme.len())?
        .into_iter()
        .zip(scheme.entries())
        .map(|(a, (c, n))| ClassArea { class_id: c, class_name: n.to_string(), area_ha: a })
        .collect();
    let separability = separability_report(table, scheme, &default_subsets(feature_names), cfg.bhattacharyya_form)?;
    Ok(Assessment { algorithm: model.algorithm(), accuracy, class_areas, separability })
}

fn write_assessment(cfg: &PipelineConfig, a: &Assessment, table: &SampleTable, names: &[String]) -> Result<()> {
    let na = cfg.not_available;
    write_text(&cfg.output(&assessment_file(a.algorithm, "csv")), &a.accuracy.to_csv(na)?)?;
    let rendered = Assessment { accuracy: a.accuracy.rendered(na), ..a.clone() };
    write_json(&cfg.output(&assessment_file(a.algorithm, "json")), &rendered)?;
    write_text(&cfg.output(SEPARABILITY_CSV), &a.separability.to_csv()?)?;
    write_text(&cfg.output(CLASS_STATS_CSV), &class_band_statistics(table, &cfg.classes, names)?)
}

/// Evaluate the configured classifier's saved model on the validation rows.
pub fn run_assess(cfg: &PipelineConfig) -> Result<Assessment> {
    prepare(cfg)?;
    let algorithm = cfg.classifier;
    let model_path = cfg.output(&model_file(algorithm));
    let samples_path = cfg.output(SAMPLES_CSV);
    for p in [&model_path, &samples_path] {
        if !p.exists() {
            return Err(Error::Config(format!("{} is missing; run train-classify first", p.display())));
        }
    }
    let model = Model::load(&model_path)?;
    let (table, names) = SampleTable::read_csv(&samples_path)?;
    let map = read_stage_input(cfg, &classes_file(algorithm), "train-classify")?;
    let a = assess_model(cfg, &model, &table, &names, &map)?;
    write_assessment(cfg, &a, &table, &names)?;
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub overall_accuracy: f64,
    pub producers: Vec<Option<f64>>,
    pub users: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub classes: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_csv(&self, na: NotAvailable) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["algorithm".to_string(), "overall".to_string()];
        header.extend(self.classes.iter().map(|c| format!("{c} producers")));
        header.extend(self.classes.iter().map(|c| format!("{c} users")));
        w.write_record(&header)?;
        let cell = |v: Option<f64>| match (v, na) {
            (Some(v), _) => v.to_string(),
            (None, NotAvailable::Marker) => "NA".to_string(),
            (None, NotAvailable::Zero) => "0".to_string(),
        };
        for r in &self.rows {
            let mut rec = vec![r.algorithm.as_str().to_string(), r.overall_accuracy.to_string()];
            rec.extend(r.producers.iter().map(|&v| cell(v)));
            rec.extend(r.users.iter().map(|&v| cell(v)));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Metric(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Metric(e.to_string()))
    }
}

/// Train, map and assess all four classifiers on one shared split.
pub fn run_compare(cfg: &PipelineConfig) -> Result<Comparison> {
    let (table, segmap, stats) = build_samples(cfg)?;
    let mut rows = Vec::new();
    for algorithm in Algorithm::ALL {
        let (model, map) = train_and_map(cfg, algorithm, &table, &segmap, &stats)?;
        let a = assess_model(cfg, &model, &table, &stats.band_names, &map)?;
        write_assessment(cfg, &a, &table, &stats.band_names)?;
        render_class_map(&map, &cfg.classes, cfg.palette.as_deref(), &cfg.output(&map_file(algorithm)))?;
        rows.push(ComparisonRow {
            algorithm,
            overall_accuracy: a.accuracy.overall_accuracy,
            producers: a.accuracy.classes.iter().map(|c| c.producers).collect(),
            users: a.accuracy.classes.iter().map(|c| c.users).collect(),
        });
    }
    let cmp = Comparison { classes: cfg.classes.names().to_vec(), rows };
    write_text(&cfg.output(COMPARISON_CSV), &cmp.to_csv(cfg.not_available)?)?;
    write_json(&cfg.output(COMPARISON_JSON), &cmp)?;
    Ok(cmp)
}

/// Render a class GeoTIFF to PNG plus legend.
pub fn run_render(
    class_tif: &Path,
    scheme: &ClassScheme,
    palette: Option<&[[u8; 3]]>,
    png_path: &Path,
) -> Result<Vec<LegendEntry>> {
    let raster = read_geotiff(class_tif)?;
    render_class_map(&raster, scheme, palette, png_path)
}

/// Every stage in order, ending with the four-way comparison.
pub fn run_all(cfg: &PipelineConfig) -> Result<Comparison> {
    run_composite(cfg)?;
    run_features(cfg)?;
    run_segment(cfg)?;
    run_compare(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub config_path: PathBuf,
    pub truth_path: PathBuf,
    pub points_path: PathBuf,
    pub image_paths: Vec<PathBuf>,
}

/// Generate a scene and write its stack, truth raster, points, spec and a
/// ready-to-run pipeline config into `dir`.
pub fn run_synth(spec: &SceneSpec, dir: &Path, classifier: Algorithm) -> Result<SynthOutput> {
    let scene = generate_scene(spec)?;
    let stack_dir = dir.join("stack");
    std::fs::create_dir_all(&stack_dir).map_err(|e| Error::io(&stack_dir, e))?;
    let mut inputs = Vec::new();
    let mut image_paths = Vec::new();
    for item in scene.stack.items() {
        let name = format!("scene_{}.tif", item.date.format("%Y-%m-%d"));
        let path = stack_dir.join(&name);
        write_geotiff(&item.raster, &path)?;
        inputs.push(InputImage { path: PathBuf::from("stack").join(name), date: item.date });
        image_paths.push(path);
    }
    let truth_path = dir.join("truth.tif");
    write_geotiff(&scene.truth, &truth_path)?;
    let points_path = dir.join("points.csv");
    write_points_csv(&scene.points, &points_path)?;
    write_json(&dir.join("scene_spec.json"), spec)?;
    let cfg = PipelineConfig {
        inputs,
        bounds: None,
        date_window: None,
        band_roles: Default::default(),
        ndwi_convention: Default::default(),
        snic: Default::default(),
        classifier,
        classifier_params: Default::default(),
        split: SplitConfig { seed: spec.seed, ..SplitConfig::default() },
        points: Some(PathBuf::from("points.csv")),
        presplit: None,
        classes: scene.scheme.clone(),
        output_dir: PathBuf::from("out"),
        bhattacharyya_form: Default::default(),
        not_available: Default::default(),
        palette: None,
    };
    let config_path = dir.join("config.json");
    write_text(&config_path, &cfg.to_json()?)?;
    Ok(SynthOutput { config_path, truth_path, points_path, image_paths })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene(dir: &Path) -> PipelineConfig {
        let mut spec = SceneSpec::wetland_demo(10.0, 11);
        spec.width = 40;
        spec.height = 40;
        spec.regions = crate::scenegen::block_regions(40, 40, 2, 2, 4);
        spec.dates.truncate(5);
        spec.points_per_class = 20;
        let out = run_synth(&spec, dir, Algorithm::Cart).unwrap();
        let mut cfg = PipelineConfig::load(&out.config_path).unwrap();
        cfg.classifier_params.rf.tree_count = 10;
        cfg
    }

    #[test]
    fn stages_chain_and_rerun_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_scene(dir.path());
        let prov = run_composite(&cfg).unwrap();
        assert_eq!(prov.input_count, 5);
        run_features(&cfg).unwrap();
        run_segment(&cfg).unwrap();
        run_train_classify(&cfg).unwrap();
        let a = run_assess(&cfg).unwrap();
        assert!(a.accuracy.overall_accuracy > 0.8);
        let snapshot: Vec<(String, Vec<u8>)> = [COMPOSITE_TIF, FEATURES_TIF, SEGMENTS_TIF, SAMPLES_CSV, "classes_cart.tif"]
            .iter()
            .map(|n| (n.to_string(), std::fs::read(cfg.output(n)).unwrap()))
            .collect();
        run_composite(&cfg).unwrap();
        run_features(&cfg).unwrap();
        run_segment(&cfg).unwrap();
        run_train_classify(&cfg).unwrap();
        for (n, bytes) in snapshot {
            assert_eq!(std::fs::read(cfg.output(&n)).unwrap(), bytes, "{n} changed");
        }
    }

    #[test]
    fn date_window_and_missing_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_scene(dir.path());
        assert!(run_features(&cfg).unwrap_err().is_config());
        let d = cfg.inputs[1].date;
        cfg.date_window = Some(DateWindow { start: d, end: cfg.inputs[2].date });
        let prov = run_composite(&cfg).unwrap();
        assert_eq!(prov.input_count, 2);
        assert_eq!(prov.excluded_by_date, 3);
        let far = chrono::NaiveDate::from_ymd_opt(2030, 1, 1).unwrap();
        cfg.date_window = Some(DateWindow { start: far, end: far });
        assert!(matches!(run_composite(&cfg), Err(Error::EmptyStack)));
    }

    #[test]
    fn compare_writes_four_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_scene(dir.path());
        let cmp = run_all(&cfg).unwrap();
        assert_eq!(cmp.rows.len(), 4);
        let csv = std::fs::read_to_string(cfg.output(COMPARISON_CSV)).unwrap();
        assert_eq!(csv.lines().count(), 5);
        for a in Algorithm::ALL {
            assert!(cfg.output(&map_file(a)).exists());
            assert!(cfg.output(&assessment_file(a, "json")).exists());
        }
    }
}
