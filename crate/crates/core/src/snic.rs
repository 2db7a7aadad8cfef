//! SNIC superpixels: grid-seeded, best-first region growing over a joint
//! spatial and standardized-spectral distance, plus per-segment statistics.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::FeatureImage;
use crate::raster::{GridTransform, Raster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnicParams {
    /// Grid spacing between seeds, in pixels.
    pub seed_spacing: usize,
    /// Larger values weaken the spatial term relative to the spectral one.
    pub compactness: f64,
}

impl Default for SnicParams {
    fn default() -> Self {
        SnicParams {
            seed_spacing: 5,
            compactness: 1.0,
        }
    }
}

impl SnicParams {
    pub fn validate(&self) -> Result<()> {
        if self.seed_spacing < 2 {
            return Err(Error::InvalidParameter(format!(
                "seed_spacing must be >= 2, got {}",
                self.seed_spacing
            )));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        Ok(())
    }
}

/// Per-pixel segment ids; -1 marks nodata.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMap {
    width: usize,
    height: usize,
    labels: Vec<i32>,
    segment_count: usize,
    transform: GridTransform,
}

impl SegmentMap {
    /// Validates that labels are -1 or dense in `[0, segment_count)`.
    pub fn new(width: usize, height: usize, labels: Vec<i32>, transform: GridTransform) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "label array has {} entries, expected {}",
                labels.len(),
                width * height
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l < -1) {
            return Err(Error::InvalidRaster(format!("invalid segment id {bad}")));
        }
        let segment_count = labels.iter().map(|&l| (l + 1) as usize).max().unwrap_or(0);
        let mut used = vec![false; segment_count];
        for &l in &labels {
            if l >= 0 {
                used[l as usize] = true;
            }
        }
        if let Some(missing) = used.iter().position(|&u| !u) {
            return Err(Error::InvalidRaster(format!(
                "segment ids are not dense: id {missing} is unused"
            )));
        }
        Ok(SegmentMap {
            width,
            height,
            labels,
            segment_count,
            transform,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn label_at(&self, row: usize, col: usize) -> i32 {
        self.labels[row * self.width + col]
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn transform(&self) -> &GridTransform {
        &self.transform
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    seq: u64,
    pixel: usize,
    label: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so BinaryHeap pops the smallest (dist, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Centroid {
    count: f64,
    row_sum: f64,
    col_sum: f64,
    color_sum: Vec<f64>,
}

/// Bands z-scored over valid pixels; constant bands map to zero.
fn standardize(raster: &Raster, valid: &[bool]) -> Vec<Vec<f64>> {
    let n_valid = valid.iter().filter(|&&v| v).count() as f64;
    (0..raster.band_count())
        .map(|b| {
            let band = raster.band(b);
            let mean = band
                .iter()
                .zip(valid)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| v)
                .sum::<f64>()
                / n_valid;
            let var = band
                .iter()
                .zip(valid)
                .filter(|(_, &ok)| ok)
                .map(|(&v, _)| (v - mean) * (v - mean))
                .sum::<f64>()
                / n_valid;
            let sd = var.sqrt();
            band.iter()
                .zip(valid)
                .map(|(&v, &ok)| match ok {
                    true if sd > 0.0 => (v - mean) / sd,
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Seed positions along one axis of length `len`.
fn seed_axis(len: usize, spacing: usize) -> Vec<usize> {
    let v: Vec<usize> = (0..)
        .map(|k| k * spacing + spacing / 2)
        .take_while(|&p| p < len)
        .collect();
    if v.is_empty() {
        vec![(len - 1) / 2]
    } else {
        v
    }
}

/// Cell bounds `[start, end)` owned by seed `k` of an axis.
fn cell_bounds(k: usize, count: usize, len: usize, spacing: usize) -> (usize, usize) {
    let start = (k * spacing).min(len);
    let end = if k + 1 == count {
        len
    } else {
        ((k + 1) * spacing).min(len)
    };
    (start, end)
}

/// Grid seeds in row-major order, moved to the nearest valid pixel of their
/// cell when they land on nodata, and dropped when the cell has none.
fn place_seeds(width: usize, height: usize, spacing: usize, valid: &[bool]) -> Vec<usize> {
    let rows = seed_axis(height, spacing);
    let cols = seed_axis(width, spacing);
    let mut seeds = Vec::with_capacity(rows.len() * cols.len());
    for (ki, &r) in rows.iter().enumerate() {
        for (kj, &c) in cols.iter().enumerate() {
            if valid[r * width + c] {
                seeds.push(r * width + c);
                continue;
            }
            let (r0, r1) = cell_bounds(ki, rows.len(), height, spacing);
            let (c0, c1) = cell_bounds(kj, cols.len(), width, spacing);
            let mut best: Option<(usize, usize)> = None;
            for rr in r0..r1 {
                for cc in c0..c1 {
                    let p = rr * width + cc;
                    if !valid[p] {
                        continue;
                    }
                    let d = rr.abs_diff(r).pow(2) + cc.abs_diff(c).pow(2);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, p));
                    }
                }
            }
            if let Some((_, p)) = best {
                seeds.push(p);
            }
        }
    }
    seeds
}

/// Segment a feature image.
pub fn snic_segment(image: &FeatureImage, params: &SnicParams) -> Result<SegmentMap> {
    segment_raster(image.raster(), params)
}

/// SNIC on any multi-band raster. A pixel takes part only if valid in every band.
pub fn segment_raster(raster: &Raster, params: &SnicParams) -> Result<SegmentMap> {
    params.validate()?;
    let (w, h) = (raster.width(), raster.height());
    let valid = raster.validity_mask();
    if !valid.iter().any(|&v| v) {
        return Err(Error::Segmentation("image has no valid pixels".into()));
    }
    let color = standardize(raster, &valid);
    let nb = color.len();
    let seeds = place_seeds(w, h, params.seed_spacing, &valid);
    if seeds.is_empty() {
        return Err(Error::Segmentation("no seeds could be placed".into()));
    }

    let inv_s2 = 1.0 / (params.seed_spacing as f64).powi(2);
    let inv_m2 = 1.0 / params.compactness.powi(2);
    let mut labels = vec![-1i32; w * h];
    let mut centroids: Vec<Centroid> = Vec::with_capacity(seeds.len());
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;

    let empty_centroid = || Centroid {
        count: 0.0,
        row_sum: 0.0,
        col_sum: 0.0,
        color_sum: vec![0.0; nb],
    };
    for &pixel in &seeds {
        heap.push(Candidate {
            dist: 0.0,
            seq,
            pixel,
            label: centroids.len(),
        });
        seq += 1;
        centroids.push(empty_centroid());
    }

    // Valid pixels unreachable from any seed (islands cut off by nodata) start
    // new segments in row-major order once the queue drains.
    let mut scan = 0usize;
    loop {
        while let Some(cand) = heap.pop() {
            if labels[cand.pixel] >= 0 {
                continue;
            }
            let k = cand.label;
            labels[cand.pixel] = k as i32;
            let (r, c) = (cand.pixel / w, cand.pixel % w);
            let cen = &mut centroids[k];
            cen.count += 1.0;
            cen.row_sum += r as f64;
            cen.col_sum += c as f64;
            for (b, band) in color.iter().enumerate() {
                cen.color_sum[b] += band[cand.pixel];
            }
            let (cr, cc) = (cen.row_sum / cen.count, cen.col_sum / cen.count);

            // N, W, E, S
            let neighbors = [
                (r > 0).then(|| cand.pixel - w),
                (c > 0).then(|| cand.pixel - 1),
                (c + 1 < w).then(|| cand.pixel + 1),
                (r + 1 < h).then(|| cand.pixel + w),
            ];
            for q in neighbors.into_iter().flatten() {
                if !valid[q] || labels[q] >= 0 {
                    continue;
                }
                let (qr, qc) = ((q / w) as f64, (q % w) as f64);
                let ds2 = (qr - cr).powi(2) + (qc - cc).powi(2);
                let dc2: f64 = color
                    .iter()
                    .zip(&cen.color_sum)
                    .map(|(band, &sum)| (band[q] - sum / cen.count).powi(2))
                    .sum();
                heap.push(Candidate {
                    dist: ds2 * inv_s2 + dc2 * inv_m2,
                    seq,
                    pixel: q,
                    label: k,
                });
                seq += 1;
            }
        }
        while scan < w * h && (!valid[scan] || labels[scan] >= 0) {
            scan += 1;
        }
        if scan == w * h {
            break;
        }
        heap.push(Candidate {
            dist: 0.0,
            seq,
            pixel: scan,
            label: centroids.len(),
        });
        seq += 1;
        centroids.push(empty_centroid());
    }

    // Seeds are distinct pixels and pop before anything else, so every
    // centroid owns at least its seed; compaction guards the invariant anyway.
    let mut remap = vec![-1i32; centroids.len()];
    let mut next = 0;
    for (k, cen) in centroids.iter().enumerate() {
        if cen.count > 0.0 {
            remap[k] = next;
            next += 1;
        }
    }
    for l in labels.iter_mut().filter(|l| **l >= 0) {
        *l = remap[*l as usize];
    }
    SegmentMap::new(w, h, labels, raster.transform().clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStat {
    pub segment_id: usize,
    pub mean_per_band: Vec<f64>,
    pub pixel_count: usize,
    pub area_m2: f64,
    pub perimeter_m: f64,
    /// (row, col) in pixel units.
    pub centroid: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStats {
    pub band_names: Vec<String>,
    pub segments: Vec<SegmentStat>,
    pub transform: GridTransform,
}

impl SegmentStats {
    pub fn get(&self, id: usize) -> Option<&SegmentStat> {
        self.segments.get(id)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// CSV with header `segment_id,<bands...>,pixel_count,area_m2,perimeter_m`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("segment_id");
        for b in &self.band_names {
            out.push(',');
            out.push_str(b);
        }
        out.push_str(",pixel_count,area_m2,perimeter_m\n");
        for s in &self.segments {
            out.push_str(&s.segment_id.to_string());
            for m in &s.mean_per_band {
                out.push_str(&format!(",{m}"));
            }
            out.push_str(&format!(",{},{},{}\n", s.pixel_count, s.area_m2, s.perimeter_m));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Band means, area, perimeter and centroid of every segment.
///
/// Perimeter counts each pixel edge that borders another segment, nodata or
/// the image border; north/south edges measure `pixel_size_x`, east/west
/// edges `pixel_size_y`.
pub fn compute_segment_stats(image: &FeatureImage, segmap: &SegmentMap) -> Result<SegmentStats> {
    segment_stats_raster(image.raster(), segmap)
}

pub fn segment_stats_raster(raster: &Raster, segmap: &SegmentMap) -> Result<SegmentStats> {
    let (w, h) = (raster.width(), raster.height());
    if w != segmap.width || h != segmap.height || raster.transform() != &segmap.transform {
        return Err(Error::GridMismatch(
            "segment map and image do not share a grid".into(),
        ));
    }
    let k = segmap.segment_count;
    let nb = raster.band_count();
    let t = raster.transform();
    let mut sums = vec![vec![0.0; nb]; k];
    let mut valid_counts = vec![vec![0usize; nb]; k];
    let mut counts = vec![0usize; k];
    let mut rows = vec![0.0; k];
    let mut cols = vec![0.0; k];
    let mut perim = vec![0.0; k];
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            let l = segmap.labels[p];
            if l < 0 {
                continue;
            }
            let l = l as usize;
            counts[l] += 1;
            rows[l] += r as f64;
            cols[l] += c as f64;
            for b in 0..nb {
                let v = raster.band(b)[p];
                if raster.is_valid_value(v) {
                    sums[l][b] += v;
                    valid_counts[l][b] += 1;
                }
            }
            let exposed = |q: Option<usize>| q.is_none_or(|q| segmap.labels[q] != l as i32);
            let ns = [(r > 0).then(|| p - w), (r + 1 < h).then(|| p + w)];
            let we = [(c > 0).then(|| p - 1), (c + 1 < w).then(|| p + 1)];
            perim[l] += ns.into_iter().filter(|&q| exposed(q)).count() as f64 * t.pixel_size_x;
            perim[l] += we.into_iter().filter(|&q| exposed(q)).count() as f64 * t.pixel_size_y;
        }
    }
    let segments = (0..k)
        .map(|l| SegmentStat {
            segment_id: l,
            mean_per_band: (0..nb)
                .map(|b| match valid_counts[l][b] {
                    0 => raster.nodata(),
                    n => sums[l][b] / n as f64,
                })
                .collect(),
            pixel_count: counts[l],
            area_m2: counts[l] as f64 * t.pixel_size_x * t.pixel_size_y,
            perimeter_m: perim[l],
            centroid: (rows[l] / counts[l] as f64, cols[l] / counts[l] as f64),
        })
        .collect();
    Ok(SegmentStats {
        band_names: raster.band_names().to_vec(),
        segments,
        transform: t.clone(),
    })
}

/// Paint every pixel with its segment's mean vector.
pub fn rasterize_segment_means(stats: &SegmentStats, segmap: &SegmentMap, nodata: f64) -> Result<Raster> {
    let n = segmap.width * segmap.height;
    let nb = stats.band_names.len();
    let mut data = vec![nodata; n * nb];
    for (p, &l) in segmap.labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        let seg = stats
            .get(l as usize)
            .ok_or_else(|| Error::Segmentation(format!("unknown segment id {l}")))?;
        for (b, &m) in seg.mean_per_band.iter().enumerate() {
            data[b * n + p] = m;
        }
    }
    Raster::new(
        segmap.width,
        segmap.height,
        stats.band_names.clone(),
        data,
        nodata,
        segmap.transform.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::FEATURE_BANDS;

    const ND: f64 = -9999.0;

    fn grid() -> GridTransform {
        GridTransform::new(0.0, 200.0, 10.0, 10.0, "EPSG:32735").unwrap()
    }

    fn feature_image(w: usize, h: usize, f: impl Fn(usize, usize, usize) -> f64) -> FeatureImage {
        let mut data = Vec::with_capacity(w * h * 7);
        for b in 0..7 {
            for r in 0..h {
                for c in 0..w {
                    data.push(f(b, r, c));
                }
            }
        }
        let names = FEATURE_BANDS.iter().map(|s| s.to_string()).collect();
        FeatureImage::new(Raster::new(w, h, names, data, ND, grid()).unwrap()).unwrap()
    }

    /// Number of 4-neighbor pixel pairs whose labels differ and that straddle column `boundary`.
    fn crossing_segments(seg: &SegmentMap, boundary: usize) -> usize {
        let mut left = vec![false; seg.segment_count()];
        let mut right = vec![false; seg.segment_count()];
        for r in 0..seg.height() {
            for c in 0..seg.width() {
                let l = seg.label_at(r, c);
                if l >= 0 {
                    if c < boundary {
                        left[l as usize] = true;
                    } else {
                        right[l as usize] = true;
                    }
                }
            }
        }
        left.iter().zip(&right).filter(|(a, b)| **a && **b).count()
    }

    pub(crate) fn assert_connected(seg: &SegmentMap) {
        let (w, h) = (seg.width(), seg.height());
        let mut seen = vec![false; w * h];
        let mut visited_segments = vec![false; seg.segment_count()];
        for start in 0..w * h {
            let l = seg.labels()[start];
            if l < 0 || seen[start] {
                continue;
            }
            assert!(!visited_segments[l as usize], "segment {l} is not 4-connected");
            visited_segments[l as usize] = true;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                let (r, c) = (p / w, p % w);
                let nbrs = [
                    (r > 0).then(|| p - w),
                    (c > 0).then(|| p - 1),
                    (c + 1 < w).then(|| p + 1),
                    (r + 1 < h).then(|| p + w),
                ];
                for q in nbrs.into_iter().flatten() {
                    if !seen[q] && seg.labels()[q] == l {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_image_gives_grid_partition() {
        let img = feature_image(20, 20, |_, _, _| 0.3);
        let seg = snic_segment(&img, &SnicParams::default()).unwrap();
        assert_eq!(seg.segment_count(), 16);
        assert!(seg.labels().iter().all(|&l| l >= 0));
        assert_connected(&seg);
        let stats = compute_segment_stats(&img, &seg).unwrap();
        for s in &stats.segments {
            assert!((15..=35).contains(&s.pixel_count), "size {}", s.pixel_count);
        }
    }

    #[test]
    fn two_tone_boundary_is_respected() {
        let img = feature_image(20, 20, |b, _, c| if c < 10 { 0.0 } else { 100.0 + b as f64 });
        let seg = snic_segment(&img, &SnicParams::default()).unwrap();
        assert_eq!(crossing_segments(&seg, 10), 0);
        assert_connected(&seg);
    }

    #[test]
    fn compactness_monotonicity() {
        let flat = feature_image(20, 20, |_, _, _| 1.0);
        let a = snic_segment(&flat, &SnicParams { seed_spacing: 5, compactness: 1.0 }).unwrap();
        let b = snic_segment(&flat, &SnicParams { seed_spacing: 5, compactness: 50.0 }).unwrap();
        assert_eq!(a, b);

        // Boundary off the seed grid so a loose compactness could straddle it.
        let two_tone = feature_image(20, 20, |_, _, c| if c < 8 { 0.2 } else { 0.25 });
        let cross = |m| {
            let seg = snic_segment(&two_tone, &SnicParams { seed_spacing: 5, compactness: m }).unwrap();
            crossing_segments(&seg, 8)
        };
        assert!(cross(1e-3) <= cross(1.0));
    }

    #[test]
    fn deterministic() {
        let img = feature_image(23, 17, |b, r, c| ((r * 7 + c * 3 + b) % 11) as f64 * 0.01);
        let p = SnicParams { seed_spacing: 4, compactness: 0.5 };
        assert_eq!(snic_segment(&img, &p).unwrap(), snic_segment(&img, &p).unwrap());
    }

    #[test]
    fn nodata_pixels_and_islands() {
        // Column 5 is nodata, cutting off a strip that has no seed of its own.
        let img = feature_image(7, 4, |_, _, c| if c == 5 { ND } else { 0.5 });
        let seg = snic_segment(&img, &SnicParams { seed_spacing: 4, compactness: 1.0 }).unwrap();
        for r in 0..4 {
            assert_eq!(seg.label_at(r, 5), -1);
            assert!(seg.label_at(r, 6) >= 0);
        }
        assert_connected(&seg);
    }

    #[test]
    fn seed_on_nodata_is_relocated() {
        // The only seed (2, 2) sits on nodata and moves within its cell.
        let img = feature_image(4, 4, |_, r, c| if (r, c) == (2, 2) { ND } else { 0.1 });
        let seg = snic_segment(&img, &SnicParams { seed_spacing: 5, compactness: 1.0 }).unwrap();
        assert_eq!(seg.segment_count(), 1);
        assert_eq!(seg.label_at(2, 2), -1);
    }

    #[test]
    fn all_nodata_errors() {
        let img = feature_image(5, 5, |_, _, _| ND);
        assert!(matches!(
            snic_segment(&img, &SnicParams::default()),
            Err(Error::Segmentation(_))
        ));
        assert!(SnicParams { seed_spacing: 1, compactness: 1.0 }.validate().is_err());
        assert!(SnicParams { seed_spacing: 5, compactness: 0.0 }.validate().is_err());
    }

    #[test]
    fn stats_geometry() {
        let img = feature_image(4, 4, |_, _, _| 0.3);
        // segment 0: single pixel (0,0); segment 1: 2x2 block at rows 2-3, cols 2-3; segment 2: the rest
        let mut labels = vec![2i32; 16];
        labels[0] = 0;
        for (r, c) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
            labels[r * 4 + c] = 1;
        }
        let seg = SegmentMap::new(4, 4, labels, grid()).unwrap();
        let stats = compute_segment_stats(&img, &seg).unwrap();
        assert_eq!(stats.segments[0].area_m2, 100.0);
        assert_eq!(stats.segments[0].perimeter_m, 40.0);
        assert_eq!(stats.segments[1].area_m2, 400.0);
        assert_eq!(stats.segments[1].perimeter_m, 80.0);
        assert_eq!(stats.segments[2].pixel_count, 11);
        assert!(stats.segments.iter().all(|s| (s.mean_per_band[0] - 0.3).abs() < 1e-15));
        assert_eq!(stats.segments[1].centroid, (2.5, 2.5));
    }

    #[test]
    fn ten_pixel_segment_mean() {
        let img = feature_image(5, 2, |_, _, _| 0.3);
        let seg = SegmentMap::new(5, 2, vec![0; 10], grid()).unwrap();
        let stats = compute_segment_stats(&img, &seg).unwrap();
        assert_eq!(stats.segments[0].pixel_count, 10);
        assert!((stats.segments[0].mean_per_band[6] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn stats_grid_mismatch() {
        let img = feature_image(4, 4, |_, _, _| 0.3);
        let seg = SegmentMap::new(2, 2, vec![0; 4], grid()).unwrap();
        assert!(matches!(compute_segment_stats(&img, &seg), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn segment_map_rejects_sparse_ids() {
        assert!(SegmentMap::new(2, 1, vec![0, 2], grid()).is_err());
        assert!(SegmentMap::new(2, 1, vec![0, -2], grid()).is_err());
    }

    #[test]
    fn rasterized_means() {
        let img = feature_image(4, 2, |b, _, c| if c < 2 { 0.1 * b as f64 } else { 0.5 });
        let mut labels = vec![0, 0, 1, 1, 0, 0, 1, -1];
        let seg = SegmentMap::new(4, 2, labels.clone(), grid()).unwrap();
        let stats = compute_segment_stats(&img, &seg).unwrap();
        let r = rasterize_segment_means(&stats, &seg, ND).unwrap();
        assert_eq!(r.band_count(), 7);
        assert_eq!(r.band(0)[7], ND);
        let mut vectors: Vec<Vec<u64>> = (0..7)
            .filter(|&p| labels[p] >= 0)
            .map(|p| (0..7).map(|b| r.band(b)[p].to_bits()).collect())
            .collect();
        vectors.sort();
        vectors.dedup();
        assert_eq!(vectors.len(), 2);

        labels = vec![0; 8];
        let one = SegmentMap::new(4, 2, labels, grid()).unwrap();
        let stats = compute_segment_stats(&img, &one).unwrap();
        let r = rasterize_segment_means(&stats, &one, ND).unwrap();
        for b in 0..7 {
            assert!(r.band(b).iter().all(|&v| v == stats.segments[0].mean_per_band[b]));
        }

        let bigger = SegmentMap::new(4, 2, vec![0, 1, 2, 3, 4, 5, 6, 7], grid()).unwrap();
        assert!(rasterize_segment_means(&stats, &bigger, ND).is_err());
    }

    #[test]
    fn stats_csv_header() {
        let img = feature_image(2, 2, |_, _, _| 0.25);
        let seg = SegmentMap::new(2, 2, vec![0; 4], grid()).unwrap();
        let stats = compute_segment_stats(&img, &seg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        stats.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "segment_id,B2,B3,B4,B8,NDVI,NDWI,MSAVI2,pixel_count,area_m2,perimeter_m"
        );
        assert_eq!(lines.next().unwrap(), "0,0.25,0.25,0.25,0.25,0.25,0.25,0.25,4,400,80");
    }
}
