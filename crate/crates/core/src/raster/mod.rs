//! Georeferenced raster model, image stacks and the band/extent operations
//! used before compositing.
//!
//! Pixel values are stored band-sequentially: band `b`, row `r`, column `c`
//! lives at `b * width * height + r * width + c`. Rows increase southward from
//! the top-left origin of the [`GridTransform`].

mod bounds;
mod geotiff;

pub use bounds::BoundsPolygon;
pub use geotiff::{read_geotiff, read_label_geotiff, write_geotiff, write_label_geotiff};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nodata sentinel used when a file declares none.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// North-up affine placement of a pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    /// Stored positive; rows increase southward.
    pub pixel_size_y: f64,
    pub crs_tag: String,
}

impl GridTransform {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        pixel_size_x: f64,
        pixel_size_y: f64,
        crs_tag: impl Into<String>,
    ) -> Result<Self> {
        let t = GridTransform {
            origin_x,
            origin_y,
            pixel_size_x,
            pixel_size_y,
            crs_tag: crs_tag.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.origin_x,
            self.origin_y,
            self.pixel_size_x,
            self.pixel_size_y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.pixel_size_x <= 0.0 || self.pixel_size_y <= 0.0 {
            return Err(Error::UnsupportedTransform(format!(
                "pixel sizes must be positive and finite (got {} x {})",
                self.pixel_size_x, self.pixel_size_y
            )));
        }
        Ok(())
    }

    /// Map coordinates of the center of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size_y,
        )
    }

    /// Fractional (row, col) position of a map coordinate.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (self.origin_y - y) / self.pixel_size_y,
            (x - self.origin_x) / self.pixel_size_x,
        )
    }

    /// Pixel containing a map coordinate within a `width` x `height` grid.
    pub fn pixel_of(&self, x: f64, y: f64, width: usize, height: usize) -> Option<(usize, usize)> {
        let (r, c) = self.to_pixel(x, y);
        if !(r.is_finite() && c.is_finite()) || r < 0.0 || c < 0.0 {
            return None;
        }
        let (r, c) = (r.floor() as usize, c.floor() as usize);
        (r < height && c < width).then_some((r, c))
    }

    /// Transform of the sub-grid whose top-left pixel is (row, col) here.
    pub fn offset(&self, row: usize, col: usize) -> GridTransform {
        GridTransform {
            origin_x: self.origin_x + col as f64 * self.pixel_size_x,
            origin_y: self.origin_y - row as f64 * self.pixel_size_y,
            ..self.clone()
        }
    }

    /// Whether the CRS tag names a geographic (degree-based) system.
    pub fn is_geographic(&self) -> bool {
        const GEOGRAPHIC: [&str; 6] = [
            "EPSG:4326",
            "EPSG:4269",
            "EPSG:4258",
            "EPSG:4283",
            "EPSG:4148",
            "OGC:CRS84",
        ];
        let tag = self.crs_tag.trim().to_ascii_uppercase();
        GEOGRAPHIC.contains(&tag.as_str()) || tag.contains("LONGLAT") || tag.contains("GEOGRAPHIC")
    }
}

/// Multi-band grid of 64-bit values with a nodata sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
    nodata: f64,
    transform: GridTransform,
    band_names: Vec<String>,
}

impl Raster {
    /// Build a raster from band-sequential data.
    pub fn new(
        width: usize,
        height: usize,
        band_names: Vec<String>,
        data: Vec<f64>,
        nodata: f64,
        transform: GridTransform,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!(
                "dimensions must be at least 1x1 (got {width}x{height})"
            )));
        }
        if band_names.is_empty() {
            return Err(Error::InvalidRaster("raster has zero bands".into()));
        }
        check_unique(&band_names)?;
        let expected = width * height * band_names.len();
        if data.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "expected {expected} values, got {}",
                data.len()
            )));
        }
        transform.validate()?;
        Ok(Raster {
            width,
            height,
            data,
            nodata,
            transform,
            band_names,
        })
    }

    /// A raster with every value set to `value`.
    pub fn filled(
        width: usize,
        height: usize,
        band_names: Vec<String>,
        value: f64,
        nodata: f64,
        transform: GridTransform,
    ) -> Result<Self> {
        let n = width * height * band_names.len();
        Raster::new(width, height, band_names, vec![value; n], nodata, transform)
    }

    /// Build from one `Vec` per band.
    pub fn from_bands(
        width: usize,
        height: usize,
        bands: Vec<(String, Vec<f64>)>,
        nodata: f64,
        transform: GridTransform,
    ) -> Result<Self> {
        let mut names = Vec::with_capacity(bands.len());
        let mut data = Vec::with_capacity(bands.len() * width * height);
        for (name, values) in bands {
            if values.len() != width * height {
                return Err(Error::InvalidRaster(format!(
                    "band {name} has {} values, expected {}",
                    values.len(),
                    width * height
                )));
            }
            names.push(name);
            data.extend(values);
        }
        Raster::new(width, height, names, data, nodata, transform)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn band_count(&self) -> usize {
        self.band_names.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn nodata(&self) -> f64 {
        self.nodata
    }

    pub fn transform(&self) -> &GridTransform {
        &self.transform
    }

    pub fn band_names(&self) -> &[String] {
        &self.band_names
    }

    /// All values, band-sequential.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn band(&self, index: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn band_mut(&mut self, index: usize) -> &mut [f64] {
        let n = self.pixel_count();
        &mut self.data[index * n..(index + 1) * n]
    }

    pub fn band_index(&self, name: &str) -> Option<usize> {
        self.band_names.iter().position(|b| b == name)
    }

    pub fn band_by_name(&self, name: &str) -> Result<&[f64]> {
        let i = self
            .band_index(name)
            .ok_or_else(|| Error::UnknownBand(name.to_string()))?;
        Ok(self.band(i))
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.data[band * self.pixel_count() + row * self.width + col]
    }

    /// A value is valid iff it is finite and differs from the nodata sentinel.
    pub fn is_valid_value(&self, v: f64) -> bool {
        is_valid(v, self.nodata)
    }

    /// Valid in every band.
    pub fn pixel_valid(&self, pixel: usize) -> bool {
        let n = self.pixel_count();
        (0..self.band_count()).all(|b| is_valid(self.data[b * n + pixel], self.nodata))
    }

    /// Per-pixel mask: true where every band is valid.
    pub fn validity_mask(&self) -> Vec<bool> {
        (0..self.pixel_count()).map(|p| self.pixel_valid(p)).collect()
    }

    /// Dimensions and transform equal.
    pub fn same_grid(&self, other: &Raster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.transform == other.transform
    }
}

pub(crate) fn is_valid(v: f64, nodata: f64) -> bool {
    v.is_finite() && v != nodata
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::DuplicateBand(n.clone()));
        }
    }
    Ok(())
}

/// A raster with its acquisition date.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedRaster {
    pub raster: Raster,
    pub date: NaiveDate,
}

/// Date-ordered collection of co-registered rasters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageStack {
    items: Vec<DatedRaster>,
}

impl ImageStack {
    /// Checks that every item shares dimensions, bands and transform with the first.
    pub fn new(items: Vec<DatedRaster>) -> Result<Self> {
        if let Some(first) = items.first() {
            for (i, item) in items.iter().enumerate().skip(1) {
                let (a, b) = (&first.raster, &item.raster);
                if a.transform.crs_tag != b.transform.crs_tag {
                    return Err(Error::GridMismatch(format!(
                        "item {i} has CRS {:?}, expected {:?}",
                        b.transform.crs_tag, a.transform.crs_tag
                    )));
                }
                if !a.same_grid(b) {
                    return Err(Error::GridMismatch(format!(
                        "item {i} is not co-registered with item 0"
                    )));
                }
                if a.band_names != b.band_names {
                    return Err(Error::GridMismatch(format!(
                        "item {i} bands {:?} differ from {:?}",
                        b.band_names, a.band_names
                    )));
                }
            }
        }
        Ok(ImageStack { items })
    }

    pub fn items(&self) -> &[DatedRaster] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn into_items(self) -> Vec<DatedRaster> {
        self.items
    }
}

/// Keep items dated within `[start, end]`, both ends inclusive, in original order.
pub fn filter_by_date(stack: &ImageStack, start: NaiveDate, end: NaiveDate) -> Result<ImageStack> {
    if start > end {
        return Err(Error::InvalidDateRange { start, end });
    }
    let items = stack
        .items
        .iter()
        .filter(|it| it.date >= start && it.date <= end)
        .cloned()
        .collect();
    Ok(ImageStack { items })
}

/// Crop to the polygon's pixel-aligned bounding window and set every pixel
/// whose center lies outside the polygon (even-odd rule) to nodata.
pub fn clip_to_bounds(raster: &Raster, bounds: &BoundsPolygon) -> Result<Raster> {
    let t = &raster.transform;
    let (min_x, min_y, max_x, max_y) = bounds.bbox();
    let col0 = ((min_x - t.origin_x) / t.pixel_size_x).floor();
    let col1 = ((max_x - t.origin_x) / t.pixel_size_x).ceil();
    let row0 = ((t.origin_y - max_y) / t.pixel_size_y).floor();
    let row1 = ((t.origin_y - min_y) / t.pixel_size_y).ceil();
    let col0 = col0.max(0.0);
    let row0 = row0.max(0.0);
    let col1 = col1.min(raster.width as f64);
    let row1 = row1.min(raster.height as f64);
    if col0 >= col1 || row0 >= row1 {
        return Err(Error::NoIntersection);
    }
    let (col0, col1, row0, row1) = (col0 as usize, col1 as usize, row0 as usize, row1 as usize);
    let (w, h) = (col1 - col0, row1 - row0);

    let inside: Vec<bool> = (row0..row1)
        .flat_map(|r| (col0..col1).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (x, y) = t.pixel_center(r, c);
            bounds.contains(x, y)
        })
        .collect();
    if !inside.iter().any(|&b| b) {
        return Err(Error::NoIntersection);
    }

    let mut data = Vec::with_capacity(w * h * raster.band_count());
    for b in 0..raster.band_count() {
        let band = raster.band(b);
        for r in row0..row1 {
            for c in col0..col1 {
                let keep = inside[(r - row0) * w + (c - col0)];
                data.push(if keep {
                    band[r * raster.width + c]
                } else {
                    raster.nodata
                });
            }
        }
    }
    Raster::new(
        w,
        h,
        raster.band_names.clone(),
        data,
        raster.nodata,
        t.offset(row0, col0),
    )
}

/// Subset and reorder bands to exactly `names`.
pub fn select_bands<S: AsRef<str>>(raster: &Raster, names: &[S]) -> Result<Raster> {
    let indices = names
        .iter()
        .map(|n| {
            raster
                .band_index(n.as_ref())
                .ok_or_else(|| Error::UnknownBand(n.as_ref().to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(indices.len() * raster.pixel_count());
    for &i in &indices {
        data.extend_from_slice(raster.band(i));
    }
    Raster::new(
        raster.width,
        raster.height,
        names.iter().map(|n| n.as_ref().to_string()).collect(),
        data,
        raster.nodata,
        raster.transform.clone(),
    )
}

/// Stack `b`'s bands after `a`'s. `b`'s values are re-encoded to `a`'s nodata.
pub fn concat_bands(a: &Raster, b: &Raster) -> Result<Raster> {
    if !a.same_grid(b) {
        return Err(Error::GridMismatch(format!(
            "{}x{} vs {}x{} or differing transforms",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut names = a.band_names.clone();
    names.extend(b.band_names.iter().cloned());
    check_unique(&names)?;
    let mut data = a.data.clone();
    data.extend(b.data.iter().map(|&v| {
        if is_valid(v, b.nodata) {
            v
        } else {
            a.nodata
        }
    }));
    Raster::new(a.width, a.height, names, data, a.nodata, a.transform.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridTransform {
        GridTransform::new(500_000.0, 7_300_000.0, 10.0, 10.0, "EPSG:32735").unwrap()
    }

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    fn ramp(w: usize, h: usize, bands: &[&str]) -> Raster {
        let n = w * h * bands.len();
        Raster::new(w, h, names(bands), (0..n).map(|v| v as f64).collect(), -9999.0, grid()).unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn rejects_bad_rasters() {
        assert!(matches!(
            Raster::new(0, 2, names(&["a"]), vec![], -9999.0, grid()),
            Err(Error::InvalidRaster(_))
        ));
        assert!(matches!(
            Raster::new(1, 1, vec![], vec![], -9999.0, grid()),
            Err(Error::InvalidRaster(_))
        ));
        assert!(matches!(
            Raster::new(1, 1, names(&["a", "a"]), vec![0.0, 0.0], -9999.0, grid()),
            Err(Error::DuplicateBand(_))
        ));
        assert!(GridTransform::new(0.0, 0.0, 10.0, -10.0, "").is_err());
    }

    #[test]
    fn validity_treats_nonfinite_as_nodata() {
        let r = Raster::new(3, 1, names(&["a"]), vec![1.0, f64::NAN, -9999.0], -9999.0, grid()).unwrap();
        assert_eq!(r.validity_mask(), vec![true, false, false]);
    }

    #[test]
    fn filter_by_date_window_is_inclusive() {
        let r = ramp(2, 2, &["B8"]);
        let stack = ImageStack::new(
            ["2015-06-01", "2017-03-10", "2021-01-05"]
                .iter()
                .map(|s| DatedRaster {
                    raster: r.clone(),
                    date: d(s),
                })
                .collect(),
        )
        .unwrap();
        let out = filter_by_date(&stack, d("2016-01-01"), d("2020-12-31")).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.items()[0].date, d("2017-03-10"));

        let all = filter_by_date(&stack, d("2015-06-01"), d("2021-01-05")).unwrap();
        assert_eq!(all, stack);

        let none = filter_by_date(&stack, d("2030-01-01"), d("2030-12-31")).unwrap();
        assert!(none.is_empty());

        assert!(matches!(
            filter_by_date(&stack, d("2020-01-01"), d("2019-01-01")),
            Err(Error::InvalidDateRange { .. })
        ));
    }

    #[test]
    fn stack_requires_coregistration() {
        let a = ramp(2, 2, &["B8"]);
        let b = ramp(3, 2, &["B8"]);
        let res = ImageStack::new(vec![
            DatedRaster { raster: a.clone(), date: d("2017-01-01") },
            DatedRaster { raster: b, date: d("2017-01-02") },
        ]);
        assert!(matches!(res, Err(Error::GridMismatch(_))));

        let mut other_crs = a.clone();
        other_crs.transform.crs_tag = "EPSG:32736".into();
        let res = ImageStack::new(vec![
            DatedRaster { raster: a, date: d("2017-01-01") },
            DatedRaster { raster: other_crs, date: d("2017-01-02") },
        ]);
        assert!(matches!(res, Err(Error::GridMismatch(_))));
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundsPolygon {
        BoundsPolygon::new(vec![vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]]).unwrap()
    }

    #[test]
    fn clip_full_extent_is_identity() {
        let r = ramp(6, 4, &["a", "b"]);
        let t = r.transform();
        let poly = rect(t.origin_x, t.origin_y - 40.0, t.origin_x + 60.0, t.origin_y);
        assert_eq!(clip_to_bounds(&r, &poly).unwrap(), r);
    }

    #[test]
    fn clip_left_half() {
        let r = ramp(10, 4, &["a"]);
        let t = r.transform().clone();
        let poly = rect(t.origin_x - 5.0, t.origin_y - 40.0, t.origin_x + 50.0, t.origin_y + 3.0);
        let out = clip_to_bounds(&r, &poly).unwrap();
        assert_eq!(out.width(), 5);
        assert_eq!(out.height(), 4);
        assert!(out.validity_mask().iter().all(|&v| v));
        assert_eq!(out.transform().origin_x, t.origin_x);

        // Triangle over the whole grid: centers right of the diagonal become nodata.
        let tri = BoundsPolygon::new(vec![vec![
            (t.origin_x, t.origin_y),
            (t.origin_x + 100.0, t.origin_y),
            (t.origin_x, t.origin_y - 40.0),
            (t.origin_x, t.origin_y),
        ]])
        .unwrap();
        let out = clip_to_bounds(&r, &tri).unwrap();
        assert_eq!(out.width(), 10);
        assert!(!out.pixel_valid(3 * 10 + 9));
        assert!(out.pixel_valid(0));
    }

    #[test]
    fn clip_disjoint_errors() {
        let r = ramp(4, 4, &["a"]);
        let poly = rect(0.0, 0.0, 10.0, 10.0);
        assert!(matches!(clip_to_bounds(&r, &poly), Err(Error::NoIntersection)));
    }

    #[test]
    fn select_and_concat() {
        let bands: Vec<String> = (1..=13).map(|i| format!("B{i}")).collect();
        let refs: Vec<&str> = bands.iter().map(|s| s.as_str()).collect();
        let r = ramp(3, 2, &refs);
        let sel = select_bands(&r, &["B8", "B4", "B3", "B2"]).unwrap();
        assert_eq!(sel.band_names(), &names(&["B8", "B4", "B3", "B2"])[..]);
        assert_eq!(sel.band(0), r.band(7));
        assert_eq!(select_bands(&r, &refs).unwrap(), r);
        assert!(matches!(select_bands(&r, &["B99"]), Err(Error::UnknownBand(_))));

        let a = select_bands(&r, &["B8", "B4", "B3", "B2"]).unwrap();
        let b = select_bands(&r, &["B1", "B5", "B6"]).unwrap();
        let c = concat_bands(&a, &b).unwrap();
        assert_eq!(c.band_count(), 7);
        assert_eq!(c, select_bands(&r, &["B8", "B4", "B3", "B2", "B1", "B5", "B6"]).unwrap());
        assert!(matches!(concat_bands(&a, &a), Err(Error::DuplicateBand(_))));

        let narrow = ramp(2, 2, &["X"]);
        assert!(matches!(concat_bands(&a, &narrow), Err(Error::GridMismatch(_))));
    }
}
