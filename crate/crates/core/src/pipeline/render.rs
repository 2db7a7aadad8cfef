use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::sampling::ClassScheme;

const DEFAULT_PALETTE: [[u8; 3]; 10] = [
    [34, 139, 34],
    [154, 205, 50],
    [210, 180, 140],
    [30, 144, 255],
    [220, 20, 60],
    [255, 215, 0],
    [148, 0, 211],
    [255, 140, 0],
    [0, 206, 209],
    [128, 128, 128],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub class_id: usize,
    pub class_name: String,
    pub rgb: [u8; 3],
}

/// Colors per class: the given palette, else a fixed default that repeats
/// after ten classes.
pub fn legend(scheme: &ClassScheme, palette: Option<&[[u8; 3]]>) -> Result<Vec<LegendEntry>> {
    if scheme.is_empty() {
        return Err(Error::InvalidScheme("cannot render with an empty class scheme".into()));
    }
    if let Some(p) = palette {
        if p.len() < scheme.len() {
            return Err(Error::InvalidParameter(format!(
                "palette has {} colors for {} classes",
                p.len(),
                scheme.len()
            )));
        }
    }
    Ok(scheme
        .entries()
        .map(|(c, name)| LegendEntry {
            class_id: c,
            class_name: name.to_string(),
            rgb: palette.map_or(DEFAULT_PALETTE[c % DEFAULT_PALETTE.len()], |p| p[c]),
        })
        .collect())
}

/// RGBA pixels of a class raster; nodata is fully transparent.
pub fn colorize(class_raster: &Raster, legend: &[LegendEntry]) -> Result<Vec<u8>> {
    if class_raster.band_count() != 1 {
        return Err(Error::InvalidRaster("class raster must have a single band".into()));
    }
    let mut out = Vec::with_capacity(class_raster.pixel_count() * 4);
    for &v in class_raster.band(0) {
        if !class_raster.is_valid_value(v) {
            out.extend_from_slice(&[0, 0, 0, 0]);
            continue;
        }
        let entry = (v >= 0.0 && v.fract() == 0.0)
            .then(|| legend.get(v as usize))
            .flatten()
            .ok_or_else(|| Error::InvalidRaster(format!("class raster holds unknown class id {v}")))?;
        out.extend_from_slice(&[entry.rgb[0], entry.rgb[1], entry.rgb[2], 255]);
    }
    Ok(out)
}

pub fn encode_png(width: usize, height: usize, rgba: &[u8]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgba);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::InvalidRaster(e.to_string()))?;
        w.write_image_data(rgba).map_err(|e| Error::InvalidRaster(e.to_string()))?;
    }
    Ok(buf)
}

/// Write `png_path` and a legend JSON next to it (same stem, `.legend.json`).
pub fn render_class_map(
    class_raster: &Raster,
    scheme: &ClassScheme,
    palette: Option<&[[u8; 3]]>,
    png_path: &Path,
) -> Result<Vec<LegendEntry>> {
    let legend = legend(scheme, palette)?;
    let rgba = colorize(class_raster, &legend)?;
    let bytes = encode_png(class_raster.width(), class_raster.height(), &rgba)?;
    std::fs::write(png_path, bytes).map_err(|e| Error::io(png_path, e))?;
    let legend_path = png_path.with_extension("legend.json");
    let text = serde_json::to_string_pretty(&legend)? + "\n";
    std::fs::write(&legend_path, text).map_err(|e| Error::io(&legend_path, e))?;
    Ok(legend)
}
