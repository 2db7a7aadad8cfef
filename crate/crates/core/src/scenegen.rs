//! Synthetic multi-temporal scenes with exact ground truth.

use chrono::NaiveDate;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BoundsPolygon, DatedRaster, GridTransform, ImageStack, Raster, DEFAULT_NODATA};
use crate::rng::{mix, rng_from};
use crate::sampling::{ClassScheme, GroundTruthPoint};

/// Reflectance range of cloud pixels.
pub const CLOUD_RANGE: (f64, f64) = (0.9, 1.0);

const POINT_STREAM: u64 = 0x706f_696e_7473;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneClass {
    pub name: String,
    /// Per-band reflectance mean.
    pub mean: Vec<f64>,
    /// Per-band noise standard deviation.
    pub sigma: Vec<f64>,
}

/// A class region, as a closed polygon in pixel coordinates `(col, row)`
/// with the origin at the top-left corner. Pixel centers decide membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRegion {
    pub class_id: usize,
    pub polygon: Vec<[f64; 2]>,
}

fn default_origin_x() -> f64 {
    500_000.0
}

fn default_origin_y() -> f64 {
    7_300_000.0
}

fn default_crs() -> String {
    "EPSG:32735".into()
}

fn default_bands() -> Vec<String> {
    ["B2", "B3", "B4", "B8"].iter().map(|s| s.to_string()).collect()
}

fn default_nodata() -> f64 {
    DEFAULT_NODATA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub pixel_size_m: f64,
    #[serde(default = "default_origin_x")]
    pub origin_x: f64,
    #[serde(default = "default_origin_y")]
    pub origin_y: f64,
    #[serde(default = "default_crs")]
    pub crs_tag: String,
    #[serde(default = "default_bands")]
    pub band_names: Vec<String>,
    #[serde(default = "default_nodata")]
    pub nodata: f64,
    pub classes: Vec<SceneClass>,
    pub regions: Vec<SceneRegion>,
    pub dates: Vec<NaiveDate>,
    /// One fraction per date, or a single value for all dates.
    pub cloud_fraction: Vec<f64>,
    pub points_per_class: usize,
    pub seed: u64,
}

/// Output of [`generate_scene`].
#[derive(Debug, Clone)]
pub struct Scene {
    pub stack: ImageStack,
    /// Single band `class`; every pixel holds its region's class id.
    pub truth: Raster,
    pub points: Vec<GroundTruthPoint>,
    pub scheme: ClassScheme,
}

/// Rectangular regions tiling a `width × height` grid in `cols × rows`
/// blocks, assigning classes cyclically in row-major order.
pub fn block_regions(width: usize, height: usize, cols: usize, rows: usize, class_count: usize) -> Vec<SceneRegion> {
    let edge = |i: usize, n: usize, len: usize| (i * len / n) as f64;
    let mut out = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        for c in 0..cols {
            let (x0, x1) = (edge(c, cols, width), edge(c + 1, cols, width));
            let (y0, y1) = (edge(r, rows, height), edge(r + 1, rows, height));
            out.push(SceneRegion {
                class_id: (r * cols + c) % class_count.max(1),
                polygon: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]],
            });
        }
    }
    out
}

impl SceneSpec {
    /// Four wetland cover classes on an 80×80 grid of 10 m pixels in 4×4
    /// blocks, noise σ = 0.01 and class means `separation` σ apart in every
    /// band, 11 dates at 30% cloud and 50 points per class.
    pub fn wetland_demo(separation: f64, seed: u64) -> SceneSpec {
        let sigma = 0.01;
        let base = [0.04, 0.06, 0.05, 0.10];
        // Rank of each class within each band (B2, B3, B4, B8).
        let ranks = [[0, 1, 0, 3], [1, 2, 1, 2], [3, 3, 3, 1], [2, 0, 2, 0]];
        let names = ["long grass", "short grass", "bare surface", "water"];
        let classes = names
            .iter()
            .zip(ranks)
            .map(|(name, rank)| SceneClass {
                name: name.to_string(),
                mean: (0..4).map(|b| base[b] + rank[b] as f64 * separation * sigma).collect(),
                sigma: vec![sigma; 4],
            })
            .collect();
        let start = NaiveDate::from_ymd_opt(2019, 1, 5).expect("valid date");
        SceneSpec {
            width: 80,
            height: 80,
            pixel_size_m: 10.0,
            origin_x: default_origin_x(),
            origin_y: default_origin_y(),
            crs_tag: default_crs(),
            band_names: default_bands(),
            nodata: DEFAULT_NODATA,
            classes,
            regions: block_regions(80, 80, 4, 4, 4),
            dates: (0..11).map(|i| start + chrono::Duration::days(16 * i)).collect(),
            cloud_fraction: vec![0.3],
            points_per_class: 50,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<SceneSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn transform(&self) -> Result<GridTransform> {
        GridTransform::new(
            self.origin_x,
            self.origin_y,
            self.pixel_size_m,
            self.pixel_size_m,
            self.crs_tag.clone(),
        )
    }

    pub fn scheme(&self) -> Result<ClassScheme> {
        ClassScheme::new(self.classes.iter().map(|c| c.name.clone()))
    }

    fn cloud_fraction_at(&self, d: usize) -> f64 {
        if self.cloud_fraction.len() == 1 {
            self.cloud_fraction[0]
        } else {
            self.cloud_fraction[d]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("scene must have at least one pixel".into());
        }
        if !(self.pixel_size_m > 0.0 && self.pixel_size_m.is_finite()) {
            return bad(format!("pixel size must be positive, got {}", self.pixel_size_m));
        }
        if self.classes.is_empty() || self.band_names.is_empty() {
            return bad("scene needs at least one class and one band".into());
        }
        let nb = self.band_names.len();
        for c in &self.classes {
            if c.mean.len() != nb || c.sigma.len() != nb {
                return bad(format!("class {:?} needs {nb} means and sigmas", c.name));
            }
            if c.mean.iter().any(|v| !v.is_finite()) || c.sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return bad(format!("class {:?} has invalid means or sigmas", c.name));
            }
        }
        if self.dates.is_empty() {
            return bad("scene needs at least one date".into());
        }
        if self.cloud_fraction.len() != 1 && self.cloud_fraction.len() != self.dates.len() {
            return bad("cloud_fraction needs one value or one per date".into());
        }
        if self.cloud_fraction.iter().any(|f| !(0.0..1.0).contains(f)) {
            return bad("cloud fractions must lie in [0, 1)".into());
        }
        if let Some(r) = self.regions.iter().find(|r| r.class_id >= self.classes.len()) {
            return bad(format!("region refers to unknown class {}", r.class_id));
        }
        self.scheme()?;
        self.transform()?;
        Ok(())
    }

    /// Class id per pixel, row-major.
    fn rasterize_regions(&self) -> Result<Vec<usize>> {
        let polys = self
            .regions
            .iter()
            .map(|r| {
                BoundsPolygon::new(vec![r.polygon.iter().map(|p| (p[0], p[1])).collect()])
                    .map_err(|e| Error::InvalidScene(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut class = vec![usize::MAX; self.width * self.height];
        let mut hits = vec![0usize; self.regions.len()];
        for row in 0..self.height {
            for col in 0..self.width {
                let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
                for (k, p) in polys.iter().enumerate() {
                    if p.contains(x, y) {
                        let cell = &mut class[row * self.width + col];
                        if *cell != usize::MAX {
                            return Err(Error::InvalidScene(format!(
                                "regions overlap at pixel ({row}, {col})"
                            )));
                        }
                        *cell = self.regions[k].class_id;
                        hits[k] += 1;
                    }
                }
                if class[row * self.width + col] == usize::MAX {
                    return Err(Error::InvalidScene(format!("pixel ({row}, {col}) is not covered by any region")));
                }
            }
        }
        if let Some(k) = hits.iter().position(|&h| h == 0) {
            return Err(Error::InvalidScene(format!("region {k} covers no pixel centers")));
        }
        Ok(class)
    }
}

/// Generate the dated stack, the truth raster and stratified random points.
///
/// Each date draws from its own seeded stream: a pixel is a cloud with the
/// date's cloud fraction (all bands uniform in [`CLOUD_RANGE`]), otherwise
/// each band is its class mean plus Gaussian noise.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let class = spec.rasterize_regions()?;
    let transform = spec.transform()?;
    let (w, h, nb) = (spec.width, spec.height, spec.band_names.len());
    let n = w * h;

    let items = spec
        .dates
        .par_iter()
        .enumerate()
        .map(|(d, &date)| {
            let mut rng = rng_from(mix(spec.seed, d as u64));
            let cf = spec.cloud_fraction_at(d);
            let mut data = vec![0.0; nb * n];
            for (p, &c) in class.iter().enumerate() {
                let cloudy = cf > 0.0 && rng.random::<f64>() < cf;
                for b in 0..nb {
                    data[b * n + p] = if cloudy {
                        rng.random_range(CLOUD_RANGE.0..CLOUD_RANGE.1)
                    } else {
                        let s = spec.classes[c].sigma[b];
                        let noise = if s > 0.0 {
                            Normal::new(0.0, s).expect("finite sigma").sample(&mut rng)
                        } else {
                            0.0
                        };
                        spec.classes[c].mean[b] + noise
                    };
                }
            }
            let raster = Raster::new(w, h, spec.band_names.clone(), data, spec.nodata, transform.clone())?;
            Ok(DatedRaster { raster, date })
        })
        .collect::<Result<Vec<_>>>()?;
    let stack = ImageStack::new(items)?;

    let truth = Raster::new(
        w,
        h,
        vec!["class".into()],
        class.iter().map(|&c| c as f64).collect(),
        crate::classifiers::CLASS_NODATA,
        transform.clone(),
    )?;

    let scheme = spec.scheme()?;
    let mut points = Vec::new();
    for (c, name) in scheme.entries() {
        let pixels: Vec<usize> = (0..n).filter(|&p| class[p] == c).collect();
        if pixels.len() < spec.points_per_class {
            return Err(Error::InvalidScene(format!(
                "class {name:?} has {} pixels, fewer than {} points",
                pixels.len(),
                spec.points_per_class
            )));
        }
        let mut rng = rng_from(mix(spec.seed ^ POINT_STREAM, c as u64));
        let mut chosen = index::sample(&mut rng, pixels.len(), spec.points_per_class).into_vec();
        chosen.sort_unstable();
        for k in chosen {
            let p = pixels[k];
            let (x, y) = transform.pixel_center(p / w, p % w);
            points.push(GroundTruthPoint { x, y, class_id: c, class_name: name.to_string() });
        }
    }
    Ok(Scene { stack, truth, points, scheme })
}
