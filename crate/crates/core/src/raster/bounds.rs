use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Polygon in the raster's CRS. The first ring is the exterior; later rings are holes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsPolygon {
    rings: Vec<Vec<(f64, f64)>>,
}

impl BoundsPolygon {
    pub fn new(rings: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        let Some(exterior) = rings.first() else {
            return Err(Error::InvalidPolygon("polygon has no rings".into()));
        };
        if exterior.len() < 4 {
            return Err(Error::InvalidPolygon(format!(
                "exterior ring needs at least 4 vertices, got {}",
                exterior.len()
            )));
        }
        for (i, ring) in rings.iter().enumerate() {
            if ring.len() < 4 || ring.first() != ring.last() {
                return Err(Error::InvalidPolygon(format!("ring {i} is not closed")));
            }
            if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(Error::InvalidPolygon(format!("ring {i} has non-finite coordinates")));
            }
        }
        Ok(BoundsPolygon { rings })
    }

    pub fn rings(&self) -> &[Vec<(f64, f64)>] {
        &self.rings
    }

    /// (min_x, min_y, max_x, max_y) of the exterior ring.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        self.rings[0].iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    /// Even-odd point-in-polygon over all rings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for edge in ring.windows(2) {
                let ((x0, y0), (x1, y1)) = (edge[0], edge[1]);
                if (y0 > y) != (y1 > y) {
                    let xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0);
                    if x < xi {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }

    /// Parse a GeoJSON `Polygon` geometry, or a `Feature`/`FeatureCollection`
    /// whose first geometry is a polygon.
    pub fn from_geojson(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_geojson_value(&value)
    }

    pub fn from_geojson_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_geojson(&text)
    }

    fn from_geojson_value(value: &Value) -> Result<Self> {
        let kind = value.get("type").and_then(Value::as_str).unwrap_or_default();
        match kind {
            "Polygon" => {
                let coords = value
                    .get("coordinates")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::Parse("Polygon without coordinates".into()))?;
                let rings = coords
                    .iter()
                    .map(parse_ring)
                    .collect::<Result<Vec<_>>>()?;
                BoundsPolygon::new(rings)
            }
            "Feature" => Self::from_geojson_value(
                value
                    .get("geometry")
                    .ok_or_else(|| Error::Parse("Feature without geometry".into()))?,
            ),
            "FeatureCollection" => {
                let first = value
                    .get("features")
                    .and_then(Value::as_array)
                    .and_then(|f| f.first())
                    .ok_or_else(|| Error::Parse("FeatureCollection has no features".into()))?;
                Self::from_geojson_value(first)
            }
            other => Err(Error::Parse(format!(
                "expected a GeoJSON Polygon, got type {other:?}"
            ))),
        }
    }
}

fn parse_ring(ring: &Value) -> Result<Vec<(f64, f64)>> {
    ring.as_array()
        .ok_or_else(|| Error::Parse("ring is not an array".into()))?
        .iter()
        .map(|pos| {
            let xy = pos.as_array().filter(|a| a.len() >= 2);
            match xy.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                Some((Some(x), Some(y))) => Ok((x, y)),
                _ => Err(Error::Parse(format!("bad position {pos}"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_polygon_and_feature() {
        let geom = r#"{"type":"Polygon","coordinates":[[[0,0],[10,0],[10,10],[0,10],[0,0]]]}"#;
        let feat = format!(r#"{{"type":"Feature","properties":{{}},"geometry":{geom}}}"#);
        let coll = format!(r#"{{"type":"FeatureCollection","features":[{feat}]}}"#);
        let a = BoundsPolygon::from_geojson(geom).unwrap();
        assert_eq!(a, BoundsPolygon::from_geojson(&feat).unwrap());
        assert_eq!(a, BoundsPolygon::from_geojson(&coll).unwrap());
        assert_eq!(a.bbox(), (0.0, 0.0, 10.0, 10.0));
        assert!(a.contains(5.0, 5.0));
        assert!(!a.contains(15.0, 5.0));
    }

    #[test]
    fn hole_excludes_points() {
        let p = BoundsPolygon::new(vec![
            vec![(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0), (0.0, 0.0)],
            vec![(4.0, 4.0), (6.0, 4.0), (6.0, 6.0), (4.0, 6.0), (4.0, 4.0)],
        ])
        .unwrap();
        assert!(!p.contains(5.0, 5.0));
        assert!(p.contains(2.0, 5.0));
    }

    #[test]
    fn rejects_open_or_short_rings() {
        assert!(BoundsPolygon::new(vec![vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)]]).is_err());
        assert!(BoundsPolygon::new(vec![vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]]).is_err());
        assert!(BoundsPolygon::from_geojson(r#"{"type":"Point","coordinates":[0,0]}"#).is_err());
    }
}
