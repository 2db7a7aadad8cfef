//! Temporal median compositing, spectral indices and assembly of the 7-band
//! feature image used for segmentation and classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{is_valid, ImageStack, Raster};

/// Guard for normalized-difference denominators.
pub const EPS_DIV: f64 = 1e-12;

/// Band order of every feature image.
pub const FEATURE_BANDS: [&str; 7] = ["B2", "B3", "B4", "B8", "NDVI", "NDWI", "MSAVI2"];

/// Per-pixel, per-band median of the valid values across the stack.
///
/// Even counts average the two middle values; pixels with no valid value in
/// a band become nodata. The output takes the first item's grid, band names
/// and nodata.
pub fn median_composite(stack: &ImageStack) -> Result<Raster> {
    let items = stack.items();
    let first = &items.first().ok_or(Error::EmptyStack)?.raster;
    let n = first.pixel_count();
    let nb = first.band_count();
    let nodata = first.nodata();
    let mut out = vec![nodata; n * nb];
    let mut series = Vec::with_capacity(items.len());
    for b in 0..nb {
        for p in 0..n {
            series.clear();
            series.extend(items.iter().filter_map(|it| {
                let v = it.raster.band(b)[p];
                is_valid(v, it.raster.nodata()).then_some(v)
            }));
            if let Some(m) = median_in_place(&mut series) {
                out[b * n + p] = m;
            }
        }
    }
    Raster::new(
        first.width(),
        first.height(),
        first.band_names().to_vec(),
        out,
        nodata,
        first.transform().clone(),
    )
}

/// Median of a slice (reordered in place); `None` when empty.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let len = values.len();
    if len == 0 {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = len / 2;
    Some(if len % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

/// Orientation of the water index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NdwiConvention {
    /// (NIR - Green) / (NIR + Green)
    #[default]
    #[serde(rename = "nir_green")]
    NirGreen,
    /// (Green - NIR) / (Green + NIR)
    #[serde(rename = "mcfeeters")]
    McFeeters,
}

fn normalized_difference(a: f64, b: f64) -> Option<f64> {
    let den = a + b;
    (den.abs() >= EPS_DIV).then(|| (a - b) / den)
}

pub fn ndvi_value(nir: f64, red: f64) -> Option<f64> {
    normalized_difference(nir, red)
}

pub fn ndwi_value(nir: f64, green: f64, convention: NdwiConvention) -> Option<f64> {
    match convention {
        NdwiConvention::NirGreen => normalized_difference(nir, green),
        NdwiConvention::McFeeters => normalized_difference(green, nir),
    }
}

/// Negative discriminants are clamped to zero.
pub fn msavi2_value(nir: f64, red: f64) -> f64 {
    let a = 2.0 * nir + 1.0;
    let disc = (a * a - 8.0 * (nir - red)).max(0.0);
    (a - disc.sqrt()) / 2.0
}

fn map_pair(
    a: &[f64],
    b: &[f64],
    nodata: f64,
    f: impl Fn(f64, f64) -> Option<f64>,
) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "bands must be co-registered");
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if is_valid(x, nodata) && is_valid(y, nodata) {
                f(x, y).unwrap_or(nodata)
            } else {
                nodata
            }
        })
        .collect()
}

pub fn ndvi(nir: &[f64], red: &[f64], nodata: f64) -> Vec<f64> {
    map_pair(nir, red, nodata, ndvi_value)
}

pub fn ndwi(nir: &[f64], green: &[f64], nodata: f64, convention: NdwiConvention) -> Vec<f64> {
    map_pair(nir, green, nodata, |n, g| ndwi_value(n, g, convention))
}

pub fn msavi2(nir: &[f64], red: &[f64], nodata: f64) -> Vec<f64> {
    map_pair(nir, red, nodata, |n, r| Some(msavi2_value(n, r)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpectralRole {
    Nir,
    Red,
    Green,
    Blue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRole {
    pub role: SpectralRole,
    pub band_name: String,
    pub center_wavelength_nm: f64,
}

/// Which composite bands play the NIR, Red, Green and Blue roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRoles {
    pub nir: String,
    pub red: String,
    pub green: String,
    pub blue: String,
}

impl Default for BandRoles {
    /// Sentinel-2 MSI: B8, B4, B3, B2.
    fn default() -> Self {
        BandRoles {
            nir: "B8".into(),
            red: "B4".into(),
            green: "B3".into(),
            blue: "B2".into(),
        }
    }
}

impl BandRoles {
    /// Role descriptions with Sentinel-2 center wavelengths.
    pub fn sentinel2_roles(&self) -> [BandRole; 4] {
        let role = |role, name: &str, nm| BandRole {
            role,
            band_name: name.to_string(),
            center_wavelength_nm: nm,
        };
        [
            role(SpectralRole::Nir, &self.nir, 842.0),
            role(SpectralRole::Red, &self.red, 665.0),
            role(SpectralRole::Green, &self.green, 560.0),
            role(SpectralRole::Blue, &self.blue, 490.0),
        ]
    }
}

/// Raster whose bands are exactly [`FEATURE_BANDS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage(Raster);

impl FeatureImage {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.band_names() != FEATURE_BANDS {
            return Err(Error::InvalidRaster(format!(
                "feature image bands must be {FEATURE_BANDS:?}, got {:?}",
                raster.band_names()
            )));
        }
        Ok(FeatureImage(raster))
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }
}

impl AsRef<Raster> for FeatureImage {
    fn as_ref(&self) -> &Raster {
        &self.0
    }
}

/// Assemble B2, B3, B4, B8, NDVI, NDWI, MSAVI2 from a composite.
///
/// A pixel that is invalid in any role band, or whose index denominator is
/// degenerate, is nodata in all seven output bands.
pub fn build_feature_image(
    composite: &Raster,
    roles: &BandRoles,
    convention: NdwiConvention,
) -> Result<FeatureImage> {
    let nir = composite.band_by_name(&roles.nir)?;
    let red = composite.band_by_name(&roles.red)?;
    let green = composite.band_by_name(&roles.green)?;
    let blue = composite.band_by_name(&roles.blue)?;
    let nodata = composite.nodata();
    let n = composite.pixel_count();
    let mut data = vec![nodata; 7 * n];
    for p in 0..n {
        let (b8, b4, b3, b2) = (nir[p], red[p], green[p], blue[p]);
        if ![b8, b4, b3, b2].iter().all(|&v| is_valid(v, nodata)) {
            continue;
        }
        let (Some(vi), Some(wi)) = (ndvi_value(b8, b4), ndwi_value(b8, b3, convention)) else {
            continue;
        };
        let values = [b2, b3, b4, b8, vi, wi, msavi2_value(b8, b4)];
        for (b, v) in values.into_iter().enumerate() {
            data[b * n + p] = v;
        }
    }
    FeatureImage::new(Raster::new(
        composite.width(),
        composite.height(),
        FEATURE_BANDS.iter().map(|s| s.to_string()).collect(),
        data,
        nodata,
        composite.transform().clone(),
    )?)
}
