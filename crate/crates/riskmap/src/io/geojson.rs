//! GeoJSON FeatureCollection ingestion for polygon boundaries.
//!
//! Only `Polygon` and `MultiPolygon` geometries are accepted. The region
//! id comes from a configurable property key (default `id`), falling back
//! to the `name` property and then to the feature-level `id` member.

use std::path::Path;

use serde_json::Value;

use crate::contiguity::PolygonFeature;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default property key holding the region id.
pub const DEFAULT_ID_PROPERTY: &str = "id";

/// Reads a FeatureCollection file, returning the parsed features along
/// with the raw JSON document for later re-annotation.
pub fn read_feature_collection<F: Scalar>(
    path: &Path,
    id_property: &str,
) -> Result<(Vec<PolygonFeature<F>>, Value)> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let features = parse_feature_collection(&value, id_property)?;
    Ok((features, value))
}

/// Parses an in-memory FeatureCollection document.
pub fn parse_feature_collection<F: Scalar>(
    doc: &Value,
    id_property: &str,
) -> Result<Vec<PolygonFeature<F>>> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Geometry(
            "document is not a GeoJSON FeatureCollection".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Geometry("FeatureCollection has no features array".into()))?;
    features
        .iter()
        .enumerate()
        .map(|(k, f)| parse_feature(f, k, id_property))
        .collect()
}

fn value_as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Region id of one feature under the lookup order documented above, if
/// any.
pub fn feature_id(feature: &Value, id_property: &str) -> Option<String> {
    let props = feature.get("properties");
    props
        .and_then(|p| p.get(id_property))
        .and_then(value_as_id)
        .or_else(|| props.and_then(|p| p.get("name")).and_then(value_as_id))
        .or_else(|| feature.get("id").and_then(value_as_id))
}

fn parse_feature<F: Scalar>(
    feature: &Value,
    index: usize,
    id_property: &str,
) -> Result<PolygonFeature<F>> {
    let id = feature_id(feature, id_property).ok_or_else(|| {
        Error::Geometry(format!(
            "feature {index} has no '{id_property}' or 'name' property and no id member"
        ))
    })?;
    let name = feature
        .get("properties")
        .and_then(|p| p.get("name"))
        .and_then(Value::as_str)
        .map(str::to_string);
    let geometry = feature
        .get("geometry")
        .filter(|g| !g.is_null())
        .ok_or_else(|| Error::Geometry(format!("feature '{id}' has no geometry")))?;
    let gtype = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| Error::Geometry(format!("feature '{id}' geometry has no coordinates")))?;
    let polygons = match gtype {
        "Polygon" => vec![parse_rings(coords, &id)?],
        "MultiPolygon" => coords
            .as_array()
            .ok_or_else(|| bad_coords(&id))?
            .iter()
            .map(|p| parse_rings(p, &id))
            .collect::<Result<_>>()?,
        other => {
            return Err(Error::Geometry(format!(
                "feature '{id}' has unsupported geometry type '{other}' \
                 (expected Polygon or MultiPolygon)"
            )))
        }
    };
    Ok(PolygonFeature { id, name, polygons })
}

fn bad_coords(id: &str) -> Error {
    Error::Geometry(format!("feature '{id}' has malformed coordinates"))
}

fn parse_rings<F: Scalar>(polygon: &Value, id: &str) -> Result<Vec<Vec<[F; 2]>>> {
    polygon
        .as_array()
        .ok_or_else(|| bad_coords(id))?
        .iter()
        .map(|ring| {
            ring.as_array()
                .ok_or_else(|| bad_coords(id))?
                .iter()
                .map(|pos| {
                    let pos = pos.as_array().ok_or_else(|| bad_coords(id))?;
                    if pos.len() < 2 {
                        return Err(bad_coords(id));
                    }
                    let x = pos[0].as_f64().ok_or_else(|| bad_coords(id))?;
                    let y = pos[1].as_f64().ok_or_else(|| bad_coords(id))?;
                    Ok([F::cast(x), F::cast(y)])
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn unit_square_coords(x: f64, y: f64) -> Value {
        json!([[[x, y], [x + 1.0, y], [x + 1.0, y + 1.0], [x, y + 1.0], [x, y]]])
    }

    #[test]
    fn parses_polygons_and_multipolygons() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {"id": "a", "name": "Alpha"},
                    "geometry": {"type": "Polygon", "coordinates": unit_square_coords(0.0, 0.0)}
                },
                {
                    "type": "Feature",
                    "properties": {"id": "b"},
                    "geometry": {
                        "type": "MultiPolygon",
                        "coordinates": [unit_square_coords(1.0, 0.0), unit_square_coords(5.0, 0.0)]
                    }
                }
            ]
        });
        let feats = parse_feature_collection::<f64>(&doc, "id").unwrap();
        assert_eq!(feats.len(), 2);
        assert_eq!(feats[0].id, "a");
        assert_eq!(feats[0].name.as_deref(), Some("Alpha"));
        assert_eq!(feats[0].polygons.len(), 1);
        assert_eq!(feats[1].polygons.len(), 2);
        assert_eq!(feats[0].polygons[0][0][1], [1.0, 0.0]);
    }

    #[test]
    fn id_lookup_falls_back_to_name_then_id_member() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {"name": "OnlyName"},
                    "geometry": {"type": "Polygon", "coordinates": unit_square_coords(0.0, 0.0)}
                },
                {
                    "type": "Feature",
                    "id": 7,
                    "properties": {},
                    "geometry": {"type": "Polygon", "coordinates": unit_square_coords(2.0, 0.0)}
                }
            ]
        });
        let feats = parse_feature_collection::<f64>(&doc, "id").unwrap();
        assert_eq!(feats[0].id, "OnlyName");
        assert_eq!(feats[1].id, "7");
    }

    #[test]
    fn rejects_missing_ids_and_unsupported_geometry() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {},
                "geometry": {"type": "Polygon", "coordinates": unit_square_coords(0.0, 0.0)}
            }]
        });
        let err = parse_feature_collection::<f64>(&doc, "id").unwrap_err();
        assert!(err.to_string().contains("feature 0"), "{err}");

        let doc = json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {"id": "pt"},
                "geometry": {"type": "Point", "coordinates": [0.0, 0.0]}
            }]
        });
        let err = parse_feature_collection::<f64>(&doc, "id").unwrap_err();
        assert!(err.to_string().contains("'pt'"), "{err}");
        assert!(err.to_string().contains("Point"), "{err}");

        let err = parse_feature_collection::<f64>(&json!({"type": "Topology"}), "id").unwrap_err();
        assert!(err.to_string().contains("FeatureCollection"), "{err}");
    }

    #[test]
    fn custom_id_property_wins_over_name() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {"code": "K-01", "name": "Nairobi"},
                "geometry": {"type": "Polygon", "coordinates": unit_square_coords(0.0, 0.0)}
            }]
        });
        let feats = parse_feature_collection::<f64>(&doc, "code").unwrap();
        assert_eq!(feats[0].id, "K-01");
        assert_eq!(feats[0].name.as_deref(), Some("Nairobi"));
    }
}
