use super::{parse_error, read_text, write_atomic};
use crate::error::{Error, Result};
use crate::geometry::{
    BoundaryModel, MultiPolygon, Point, Polygon, Region, RegionSet, ScaleDistribution,
};
use serde_json::{json, Map, Value};
use std::path::Path;

pub fn read_regions(path: &Path) -> Result<RegionSet> {
    parse_regions(&read_text(path)?, path)
}

/// Parses a GeoJSON feature collection of (multi)polygons. Each feature needs
/// an `id` property; `effort`, `boundary_model` and `active_times` are optional.
pub fn parse_regions(text: &str, path: &Path) -> Result<RegionSet> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_error(path, e))?;
    let bad = |msg: String| parse_error(path, msg);
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("expected a FeatureCollection".into()));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `features` array".into()))?;
    let mut regions = Vec::with_capacity(features.len());
    for (k, f) in features.iter().enumerate() {
        let props = f.get("properties").and_then(Value::as_object);
        let id = match props.and_then(|p| p.get("id")) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad(format!("feature {k} has no `id` property"))),
        };
        let at = |msg: String| bad(format!("region `{id}`: {msg}"));
        let geometry = f
            .get("geometry")
            .ok_or_else(|| at("missing geometry".into()))
            .and_then(|g| geometry_from_value(g).map_err(|e| at(e.to_string())))?;
        let mut region = Region::new(id.clone(), geometry);
        if let Some(p) = props {
            if let Some(e) = p.get("effort").filter(|v| !v.is_null()) {
                region.effort = e
                    .as_f64()
                    .ok_or_else(|| at("`effort` must be a number".into()))?;
            }
            if let Some(b) = p.get("boundary_model").filter(|v| !v.is_null()) {
                region.boundary = boundary_from_value(b).map_err(&at)?;
            }
            if let Some(t) = p.get("active_times").filter(|v| !v.is_null()) {
                let times = t
                    .as_array()
                    .and_then(|a| {
                        a.iter()
                            .map(|v| v.as_u64().map(|x| x as usize))
                            .collect::<Option<Vec<_>>>()
                    })
                    .ok_or_else(|| at("`active_times` must be a list of time indices".into()))?;
                region.active_times = Some(times);
            }
        }
        regions.push(region);
    }
    RegionSet::new(regions)
}

fn ring_from_value(v: &Value) -> Result<Vec<Point>> {
    let pts = v
        .as_array()
        .ok_or_else(|| Error::geometry("ring is not an array"))?;
    pts.iter()
        .map(|p| match p.as_array().map(|c| c.as_slice()) {
            Some([x, y, ..]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok(Point::new(x, y)),
                _ => Err(Error::geometry("non-numeric coordinate")),
            },
            _ => Err(Error::geometry("position needs two coordinates")),
        })
        .collect()
}

fn polygon_from_value(v: &Value) -> Result<Polygon> {
    let rings = v
        .as_array()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::geometry("polygon needs at least one ring"))?;
    let exterior = ring_from_value(&rings[0])?;
    let holes = rings[1..]
        .iter()
        .map(ring_from_value)
        .collect::<Result<Vec<_>>>()?;
    Polygon::new(exterior, holes)
}

fn geometry_from_value(g: &Value) -> Result<MultiPolygon> {
    let coords = g
        .get("coordinates")
        .ok_or_else(|| Error::geometry("missing coordinates"))?;
    match g.get("type").and_then(Value::as_str) {
        Some("Polygon") => MultiPolygon::new(vec![polygon_from_value(coords)?]),
        Some("MultiPolygon") => {
            let parts = coords
                .as_array()
                .ok_or_else(|| Error::geometry("multipolygon coordinates are not an array"))?;
            MultiPolygon::new(
                parts
                    .iter()
                    .map(polygon_from_value)
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        other => Err(Error::geometry(format!(
            "unsupported geometry type {}",
            other.unwrap_or("(none)")
        ))),
    }
}

fn closed_ring(ring: &[Point]) -> Value {
    let mut pts: Vec<Value> = ring.iter().map(|p| json!([p.x, p.y])).collect();
    if let Some(first) = pts.first().cloned() {
        pts.push(first);
    }
    Value::Array(pts)
}

fn geometry_to_value(m: &MultiPolygon) -> Value {
    let polys: Vec<Value> =
        m.0.iter()
            .map(|p| Value::Array(p.rings().map(closed_ring).collect()))
            .collect();
    if polys.len() == 1 {
        json!({"type": "Polygon", "coordinates": polys[0]})
    } else {
        json!({"type": "MultiPolygon", "coordinates": polys})
    }
}

fn boundary_from_value(v: &Value) -> std::result::Result<BoundaryModel, String> {
    let kind = v
        .get("kind")
        .and_then(Value::as_str)
        .ok_or("`boundary_model` needs a `kind`")?;
    match kind {
        "fixed" => Ok(BoundaryModel::Fixed),
        "scale" => {
            let factor: ScaleDistribution = serde_json::from_value(
                v.get("factor")
                    .cloned()
                    .ok_or("scale model needs a `factor` distribution")?,
            )
            .map_err(|e| format!("bad scale distribution: {e}"))?;
            let anchor = match v.get("anchor").filter(|a| !a.is_null()) {
                None => None,
                Some(a) => match a.as_array().map(|c| c.as_slice()) {
                    Some([x, y]) => Some(Point::new(
                        x.as_f64().ok_or("anchor must be numeric")?,
                        y.as_f64().ok_or("anchor must be numeric")?,
                    )),
                    _ => return Err("anchor must be [x, y]".into()),
                },
            };
            Ok(BoundaryModel::Scale { factor, anchor })
        }
        "mixture" => {
            let weights: Vec<f64> = serde_json::from_value(
                v.get("weights")
                    .cloned()
                    .ok_or("mixture model needs `weights`")?,
            )
            .map_err(|e| format!("bad mixture weights: {e}"))?;
            let candidates = v
                .get("candidates")
                .and_then(Value::as_array)
                .ok_or("mixture model needs a `candidates` list of geometries")?
                .iter()
                .map(|g| geometry_from_value(g).map_err(|e| e.to_string()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(BoundaryModel::Mixture {
                candidates,
                weights,
            })
        }
        other => Err(format!("unknown boundary model kind `{other}`")),
    }
}

fn boundary_to_value(b: &BoundaryModel) -> Value {
    match b {
        BoundaryModel::Fixed => json!({"kind": "fixed"}),
        BoundaryModel::Scale { factor, anchor } => json!({
            "kind": "scale",
            "factor": serde_json::to_value(factor).expect("plain data"),
            "anchor": anchor.map(|p| json!([p.x, p.y])),
        }),
        BoundaryModel::Mixture {
            candidates,
            weights,
        } => json!({
            "kind": "mixture",
            "weights": weights,
            "candidates": candidates.iter().map(geometry_to_value).collect::<Vec<_>>(),
        }),
    }
}

pub fn regions_to_geojson(regions: &RegionSet) -> String {
    let features: Vec<Value> = regions
        .iter()
        .map(|r| {
            let mut props = Map::new();
            props.insert("id".into(), json!(r.id));
            props.insert("effort".into(), json!(r.effort));
            if r.boundary != BoundaryModel::Fixed {
                props.insert("boundary_model".into(), boundary_to_value(&r.boundary));
            }
            if let Some(t) = &r.active_times {
                props.insert("active_times".into(), json!(t));
            }
            json!({"type": "Feature", "properties": props, "geometry": geometry_to_value(&r.geometry)})
        })
        .collect();
    serde_json::to_string(&json!({"type": "FeatureCollection", "features": features}))
        .expect("plain data")
}

pub fn write_regions(path: &Path, regions: &RegionSet) -> Result<()> {
    write_atomic(path, regions_to_geojson(regions).as_bytes())
}
