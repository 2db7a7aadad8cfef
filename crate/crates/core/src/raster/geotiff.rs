//! GeoTIFF encoding and decoding.
//!
//! Files are written as little-endian classic TIFF, uncompressed, pixel
//! interleaved, one strip per row. Georeferencing uses ModelPixelScale plus a
//! single ModelTiepoint; nodata goes in the GDAL_NODATA tag and band names in
//! GDAL_METADATA `DESCRIPTION` items, so GDAL-based tools read them back.
//! Decoding goes through the `tiff` crate, which also accepts files produced
//! elsewhere (compressed, tiled, any numeric sample type).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::tags::Tag;
use tiff::ColorType;

use super::{GridTransform, Raster, DEFAULT_NODATA};
use crate::error::{Error, Result};
use crate::snic::SegmentMap;

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_EXTRA_SAMPLES: u16 = 338;
const TAG_SAMPLE_FORMAT: u16 = 339;
pub(crate) const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
pub(crate) const TAG_MODEL_TIEPOINT: u16 = 33922;
pub(crate) const TAG_MODEL_TRANSFORMATION: u16 = 34264;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;
const TAG_GEO_ASCII_PARAMS: u16 = 34737;
const TAG_GDAL_METADATA: u16 = 42112;
const TAG_GDAL_NODATA: u16 = 42113;

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_CITATION: u16 = 1026;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_TYPE: u16 = 3072;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FieldType {
    Ascii = 2,
    Short = 3,
    Long = 4,
    Double = 12,
}

impl FieldType {
    fn size(self) -> usize {
        match self {
            FieldType::Ascii => 1,
            FieldType::Short => 2,
            FieldType::Long => 4,
            FieldType::Double => 8,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Entry {
    tag: u16,
    kind: FieldType,
    count: u32,
    bytes: Vec<u8>,
}

impl Entry {
    fn shorts(tag: u16, v: &[u16]) -> Self {
        Entry {
            tag,
            kind: FieldType::Short,
            count: v.len() as u32,
            bytes: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn longs(tag: u16, v: &[u32]) -> Self {
        Entry {
            tag,
            kind: FieldType::Long,
            count: v.len() as u32,
            bytes: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub(crate) fn doubles(tag: u16, v: &[f64]) -> Self {
        Entry {
            tag,
            kind: FieldType::Double,
            count: v.len() as u32,
            bytes: v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    fn ascii(tag: u16, s: &str) -> Self {
        let mut bytes = s.as_bytes().to_vec();
        bytes.push(0);
        Entry {
            tag,
            kind: FieldType::Ascii,
            count: bytes.len() as u32,
            bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SampleKind {
    F64,
    I32,
}

/// Pixel-interleaved image ready for encoding.
pub(crate) struct TiffImage {
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub kind: SampleKind,
    /// Little-endian sample bytes, row-major, pixel-interleaved.
    pub pixels: Vec<u8>,
    pub tags: Vec<Entry>,
}

impl TiffImage {
    fn bytes_per_sample(&self) -> usize {
        match self.kind {
            SampleKind::F64 => 8,
            SampleKind::I32 => 4,
        }
    }

    pub(crate) fn encode(&self) -> Vec<u8> {
        let bps = self.bytes_per_sample();
        let row_bytes = self.width * self.samples * bps;
        let (bits, format) = match self.kind {
            SampleKind::F64 => (64u16, 3u16),
            SampleKind::I32 => (32u16, 2u16),
        };

        let mut entries = vec![
            Entry::longs(TAG_IMAGE_WIDTH, &[self.width as u32]),
            Entry::longs(TAG_IMAGE_LENGTH, &[self.height as u32]),
            Entry::shorts(TAG_BITS_PER_SAMPLE, &vec![bits; self.samples]),
            Entry::shorts(TAG_COMPRESSION, &[1]),
            Entry::shorts(TAG_PHOTOMETRIC, &[1]),
            Entry::longs(TAG_STRIP_OFFSETS, &vec![0; self.height]),
            Entry::shorts(TAG_SAMPLES_PER_PIXEL, &[self.samples as u16]),
            Entry::longs(TAG_ROWS_PER_STRIP, &[1]),
            Entry::longs(TAG_STRIP_BYTE_COUNTS, &vec![row_bytes as u32; self.height]),
            Entry::shorts(TAG_PLANAR_CONFIG, &[1]),
            Entry::shorts(TAG_SAMPLE_FORMAT, &vec![format; self.samples]),
        ];
        if self.samples > 1 {
            entries.push(Entry::shorts(TAG_EXTRA_SAMPLES, &vec![0; self.samples - 1]));
        }
        entries.extend(self.tags.iter().cloned());
        entries.sort_by_key(|e| e.tag);

        let ifd_len = 2 + 12 * entries.len() + 4;
        let values_len: usize = entries
            .iter()
            .filter(|e| e.bytes.len() > 4)
            .map(|e| (e.bytes.len() + 1) & !1)
            .sum();
        let data_start = (8 + ifd_len + values_len + 7) & !7;
        let offsets: Vec<u32> = (0..self.height)
            .map(|r| (data_start + r * row_bytes) as u32)
            .collect();
        if let Some(e) = entries.iter_mut().find(|e| e.tag == TAG_STRIP_OFFSETS) {
            *e = Entry::longs(TAG_STRIP_OFFSETS, &offsets);
        }

        let mut out = Vec::with_capacity(data_start + self.pixels.len());
        out.extend_from_slice(b"II");
        out.extend_from_slice(&42u16.to_le_bytes());
        out.extend_from_slice(&8u32.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u16).to_le_bytes());

        let mut value_cursor = 8 + ifd_len;
        let mut values = Vec::with_capacity(values_len);
        for e in &entries {
            debug_assert_eq!(e.bytes.len(), e.count as usize * e.kind.size());
            out.extend_from_slice(&e.tag.to_le_bytes());
            out.extend_from_slice(&(e.kind as u16).to_le_bytes());
            out.extend_from_slice(&e.count.to_le_bytes());
            if e.bytes.len() <= 4 {
                let mut inline = [0u8; 4];
                inline[..e.bytes.len()].copy_from_slice(&e.bytes);
                out.extend_from_slice(&inline);
            } else {
                out.extend_from_slice(&(value_cursor as u32).to_le_bytes());
                values.extend_from_slice(&e.bytes);
                if e.bytes.len() % 2 == 1 {
                    values.push(0);
                }
                value_cursor = 8 + ifd_len + values.len();
            }
        }
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&values);
        out.resize(data_start, 0);
        out.extend_from_slice(&self.pixels);
        out
    }
}

fn georef_tags(t: &GridTransform) -> Vec<Entry> {
    let mut tags = vec![
        Entry::doubles(TAG_MODEL_PIXEL_SCALE, &[t.pixel_size_x, t.pixel_size_y, 0.0]),
        Entry::doubles(TAG_MODEL_TIEPOINT, &[0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0]),
    ];

    let citation = format!("{}|", t.crs_tag);
    let mut keys: Vec<[u16; 4]> = vec![
        [KEY_MODEL_TYPE, 0, 1, if t.is_geographic() { 2 } else { 1 }],
        [KEY_RASTER_TYPE, 0, 1, 1],
        [KEY_CITATION, TAG_GEO_ASCII_PARAMS, citation.len() as u16, 0],
    ];
    if let Some(code) = epsg_code(&t.crs_tag) {
        let key = if t.is_geographic() {
            KEY_GEOGRAPHIC_TYPE
        } else {
            KEY_PROJECTED_TYPE
        };
        keys.push([key, 0, 1, code]);
    }
    let mut dir = vec![1u16, 1, 0, keys.len() as u16];
    dir.extend(keys.iter().flatten());
    tags.push(Entry::shorts(TAG_GEO_KEY_DIRECTORY, &dir));
    tags.push(Entry::ascii(TAG_GEO_ASCII_PARAMS, &citation));
    tags
}

fn epsg_code(tag: &str) -> Option<u16> {
    tag.trim()
        .strip_prefix("EPSG:")
        .or_else(|| tag.trim().strip_prefix("epsg:"))
        .and_then(|c| c.parse::<u16>().ok())
}

fn format_nodata(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_nodata(s: &str) -> Option<f64> {
    let s = s.trim_matches(|c: char| c.is_whitespace() || c == '\0');
    if s.eq_ignore_ascii_case("nan") {
        Some(f64::NAN)
    } else {
        s.parse().ok()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn xml_unescape(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn band_metadata_xml(names: &[String]) -> String {
    let mut xml = String::from("<GDALMetadata>\n");
    for (i, n) in names.iter().enumerate() {
        xml.push_str(&format!(
            "  <Item name=\"DESCRIPTION\" sample=\"{i}\" role=\"description\">{}</Item>\n",
            xml_escape(n)
        ));
    }
    xml.push_str("</GDALMetadata>");
    xml
}

/// Extract per-sample DESCRIPTION items from GDAL_METADATA XML.
fn parse_band_descriptions(xml: &str, bands: usize) -> Vec<Option<String>> {
    let mut out = vec![None; bands];
    for chunk in xml.split("<Item").skip(1) {
        let Some((attrs, rest)) = chunk.split_once('>') else {
            continue;
        };
        let Some((text, _)) = rest.split_once("</Item>") else {
            continue;
        };
        let attr = |name: &str| {
            let key = format!("{name}=\"");
            attrs
                .find(&key)
                .and_then(|i| attrs[i + key.len()..].split('"').next())
        };
        if attr("role") != Some("description") && attr("name") != Some("DESCRIPTION") {
            continue;
        }
        if let Some(idx) = attr("sample").and_then(|s| s.parse::<usize>().ok()) {
            if idx < bands {
                out[idx] = Some(xml_unescape(text));
            }
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn raster_image(raster: &Raster) -> TiffImage {
    let (w, h, nb) = (raster.width(), raster.height(), raster.band_count());
    let n = w * h;
    let data = raster.data();
    let mut pixels = Vec::with_capacity(n * nb * 8);
    for p in 0..n {
        for b in 0..nb {
            pixels.extend_from_slice(&data[b * n + p].to_le_bytes());
        }
    }
    let mut tags = georef_tags(raster.transform());
    tags.push(Entry::ascii(TAG_GDAL_METADATA, &band_metadata_xml(raster.band_names())));
    tags.push(Entry::ascii(TAG_GDAL_NODATA, &format_nodata(raster.nodata())));
    TiffImage {
        width: w,
        height: h,
        samples: nb,
        kind: SampleKind::F64,
        pixels,
        tags,
    }
}

/// Write a float64 GeoTIFF with nodata and band descriptions.
pub fn write_geotiff(raster: &Raster, path: &Path) -> Result<()> {
    write_bytes(path, &raster_image(raster).encode())
}

/// Write a segment label image as single-band Int32, nodata -1.
pub fn write_label_geotiff(segmap: &SegmentMap, path: &Path) -> Result<()> {
    let pixels = segmap
        .labels()
        .iter()
        .flat_map(|&l| l.to_le_bytes())
        .collect();
    let mut tags = georef_tags(segmap.transform());
    tags.push(Entry::ascii(TAG_GDAL_METADATA, &band_metadata_xml(&["segment_id".to_string()])));
    tags.push(Entry::ascii(TAG_GDAL_NODATA, "-1"));
    let img = TiffImage {
        width: segmap.width(),
        height: segmap.height(),
        samples: 1,
        kind: SampleKind::I32,
        pixels,
        tags,
    };
    write_bytes(path, &img.encode())
}

fn find_f64_vec<R: std::io::Read + std::io::Seek>(
    dec: &mut Decoder<R>,
    tag: u16,
) -> Result<Option<Vec<f64>>> {
    match dec.find_tag(Tag::from_u16_exhaustive(tag))? {
        Some(v) => Ok(Some(v.into_f64_vec()?)),
        None => Ok(None),
    }
}

fn find_string<R: std::io::Read + std::io::Seek>(
    dec: &mut Decoder<R>,
    tag: u16,
) -> Result<Option<String>> {
    match dec.find_tag(Tag::from_u16_exhaustive(tag))? {
        Some(v) => Ok(Some(v.into_string()?)),
        None => Ok(None),
    }
}

fn read_transform<R: std::io::Read + std::io::Seek>(dec: &mut Decoder<R>) -> Result<GridTransform> {
    let crs_tag = read_crs_tag(dec)?;
    if let Some(m) = find_f64_vec(dec, TAG_MODEL_TRANSFORMATION)? {
        if m.len() < 8 {
            return Err(Error::UnsupportedTransform("short ModelTransformation tag".into()));
        }
        if m[1] != 0.0 || m[4] != 0.0 {
            return Err(Error::UnsupportedTransform(
                "rotation or shear terms are not supported".into(),
            ));
        }
        if m[0] <= 0.0 || m[5] >= 0.0 {
            return Err(Error::UnsupportedTransform("grid is not north-up".into()));
        }
        return GridTransform::new(m[3], m[7], m[0], -m[5], crs_tag);
    }
    let scale = find_f64_vec(dec, TAG_MODEL_PIXEL_SCALE)?
        .ok_or_else(|| Error::UnsupportedTransform("missing georeferencing tags".into()))?;
    let tie = find_f64_vec(dec, TAG_MODEL_TIEPOINT)?
        .ok_or_else(|| Error::UnsupportedTransform("missing ModelTiepoint tag".into()))?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::UnsupportedTransform("malformed georeferencing tags".into()));
    }
    if tie.len() > 6 {
        return Err(Error::UnsupportedTransform(
            "multiple tiepoints (warped grids) are not supported".into(),
        ));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if sx <= 0.0 || sy <= 0.0 {
        return Err(Error::UnsupportedTransform("grid is not north-up".into()));
    }
    let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
    GridTransform::new(x - i * sx, y + j * sy, sx, sy, crs_tag)
}

fn read_crs_tag<R: std::io::Read + std::io::Seek>(dec: &mut Decoder<R>) -> Result<String> {
    let dir = match dec.find_tag(Tag::from_u16_exhaustive(TAG_GEO_KEY_DIRECTORY))? {
        Some(v) => v.into_u16_vec()?,
        None => return Ok(String::new()),
    };
    let ascii = find_string(dec, TAG_GEO_ASCII_PARAMS)?.unwrap_or_default();
    let mut citation = None;
    let mut code = None;
    for key in dir.chunks_exact(4).skip(1) {
        match key[0] {
            KEY_CITATION if key[1] == TAG_GEO_ASCII_PARAMS => {
                let (count, off) = (key[2] as usize, key[3] as usize);
                if let Some(s) = ascii.get(off..off + count) {
                    citation = Some(s.trim_end_matches('|').to_string());
                }
            }
            KEY_PROJECTED_TYPE | KEY_GEOGRAPHIC_TYPE if key[1] == 0 && key[3] != 32767 => {
                code = Some(key[3]);
            }
            _ => {}
        }
    }
    Ok(citation
        .filter(|c| !c.is_empty())
        .or_else(|| code.map(|c| format!("EPSG:{c}")))
        .unwrap_or_default())
}

fn decoded_to_f64(result: DecodingResult) -> Vec<f64> {
    match result {
        DecodingResult::U8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f64).collect(),
        DecodingResult::F16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::F64(v) => v,
        DecodingResult::I8(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(f64::from).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f64).collect(),
    }
}

/// Read a north-up GeoTIFF into a float64 raster.
///
/// A missing nodata tag yields [`DEFAULT_NODATA`]; missing band descriptions
/// yield names `band_1`, `band_2`, ...
pub fn read_geotiff(path: &Path) -> Result<Raster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = Decoder::new(BufReader::new(file))?.with_limits(Limits::unlimited());
    let (w, h) = dec.dimensions()?;
    let (w, h) = (w as usize, h as usize);
    let samples = match dec.colortype()? {
        ColorType::Gray(_) => 1,
        ColorType::Multiband { num_samples, .. } => num_samples as usize,
        ColorType::RGB(_) => 3,
        ColorType::RGBA(_) => 4,
        other => {
            return Err(Error::Tiff(format!("unsupported color type {other:?}")));
        }
    };
    if samples == 0 {
        return Err(Error::InvalidRaster("file has zero bands".into()));
    }
    if let Some(p) = dec.find_tag_unsigned::<u16>(Tag::PlanarConfiguration)? {
        if p != 1 {
            return Err(Error::Tiff("band-sequential (planar) layouts are not supported".into()));
        }
    }
    let transform = read_transform(&mut dec)?;
    let nodata = find_string(&mut dec, TAG_GDAL_NODATA)?
        .and_then(|s| parse_nodata(&s))
        .unwrap_or(DEFAULT_NODATA);
    let descriptions = find_string(&mut dec, TAG_GDAL_METADATA)?
        .map(|xml| parse_band_descriptions(&xml, samples))
        .unwrap_or_else(|| vec![None; samples]);
    let names: Vec<String> = descriptions
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.unwrap_or_else(|| format!("band_{}", i + 1)))
        .collect();

    let interleaved = decoded_to_f64(dec.read_image()?);
    let n = w * h;
    if interleaved.len() < n * samples {
        return Err(Error::Tiff(format!(
            "decoded {} samples, expected {}",
            interleaved.len(),
            n * samples
        )));
    }
    let mut data = vec![0.0; n * samples];
    for p in 0..n {
        for b in 0..samples {
            data[b * n + p] = interleaved[p * samples + b];
        }
    }
    Raster::new(w, h, names, data, nodata, transform)
}

/// Read a label image written by [`write_label_geotiff`] into a [`SegmentMap`].
pub fn read_label_geotiff(path: &Path) -> Result<SegmentMap> {
    let raster = read_geotiff(path)?;
    if raster.band_count() != 1 {
        return Err(Error::InvalidRaster(format!(
            "label image must have 1 band, found {}",
            raster.band_count()
        )));
    }
    let labels = raster
        .band(0)
        .iter()
        .map(|&v| {
            if !raster.is_valid_value(v) || v < 0.0 {
                Ok(-1)
            } else if v.fract() == 0.0 && v <= i32::MAX as f64 {
                Ok(v as i32)
            } else {
                Err(Error::InvalidRaster(format!("non-integer label {v}")))
            }
        })
        .collect::<Result<Vec<i32>>>()?;
    SegmentMap::new(raster.width(), raster.height(), labels, raster.transform().clone())
}
