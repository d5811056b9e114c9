//! Choropleth classification and annotated GeoJSON export.
//!
//! Classes are half-open `[lo, hi)` intervals with the last class closed;
//! values outside the break range clamp to the first or last class, so
//! class assignment is monotone in the value.

use std::collections::HashMap;

use serde_json::{json, Value};

use crate::diagnostics::quantile_type7;
use crate::error::{Error, Result};
use crate::io::geojson::feature_id;
use crate::io::table::format_sig;
use crate::scalar::Scalar;

/// Class-break rule for a choropleth layer.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassBreaks<F> {
    /// `k` classes with equal-count boundaries at the type-7 quantiles.
    Quantile(usize),
    /// Explicit strictly increasing boundaries; `m` boundaries give
    /// `m - 1` classes.
    Manual(Vec<F>),
}

/// One region's classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedValue<F> {
    pub value: F,
    pub class_index: usize,
    /// Interval label `lo-hi` at six significant digits.
    pub label: String,
}

/// Resolves the break rule into concrete class boundaries (one more entry
/// than there are classes).
pub fn class_edges<F: Scalar>(values: &[F], breaks: &ClassBreaks<F>) -> Result<Vec<F>> {
    if values.is_empty() {
        return Err(Error::Data("no values to classify".into()));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite value {bad} cannot be classified")));
    }
    match breaks {
        ClassBreaks::Manual(edges) => {
            if edges.len() < 2 {
                return Err(Error::Config(
                    "manual breaks need at least two boundaries".into(),
                ));
            }
            if edges.iter().any(|e| !e.is_finite()) {
                return Err(Error::Config("manual breaks must be finite".into()));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "manual breaks must be strictly increasing".into(),
                ));
            }
            Ok(edges.clone())
        }
        ClassBreaks::Quantile(k) => {
            if *k == 0 {
                return Err(Error::Config("quantile class count must be positive".into()));
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let mut edges: Vec<F> = (0..=*k)
                .map(|i| quantile_type7(&sorted, F::cast(i as f64 / *k as f64)))
                .collect();
            // Ties collapse duplicate boundaries (and their empty classes).
            edges.dedup();
            if edges.len() == 1 {
                // All values identical: one degenerate class.
                edges.push(edges[0]);
            }
            Ok(edges)
        }
    }
}

/// Classifies each value against the resolved edges.
pub fn classify<F: Scalar>(
    values: &[F],
    breaks: &ClassBreaks<F>,
) -> Result<Vec<ClassifiedValue<F>>> {
    let edges = class_edges(values, breaks)?;
    let n_classes = edges.len() - 1;
    let labels: Vec<String> = (0..n_classes)
        .map(|c| {
            format!(
                "{}-{}",
                format_sig(edges[c].as_f64(), 6),
                format_sig(edges[c + 1].as_f64(), 6)
            )
        })
        .collect();
    Ok(values
        .iter()
        .map(|&v| {
            // Last edge at or below v, clamped into range.
            let c = edges[..edges.len() - 1]
                .partition_point(|e| *e <= v)
                .saturating_sub(1)
                .min(n_classes - 1);
            ClassifiedValue { value: v, class_index: c, label: labels[c].clone() }
        })
        .collect())
}

/// Annotates a FeatureCollection with per-region values, class indices,
/// and interval labels, returning the new document. `region_ids[i]` pairs
/// with `values[i]`; every region must match a feature by id.
///
/// The optional free-text `units` lands as a top-level member of the
/// output collection.
pub fn export_choropleth<F: Scalar>(
    collection: &Value,
    id_property: &str,
    region_ids: &[String],
    values: &[F],
    breaks: &ClassBreaks<F>,
    units: Option<&str>,
) -> Result<Value> {
    if region_ids.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} region ids but {} values",
            region_ids.len(),
            values.len()
        )));
    }
    let classified = classify(values, breaks)?;
    let by_id: HashMap<&str, &ClassifiedValue<F>> = region_ids
        .iter()
        .map(String::as_str)
        .zip(classified.iter())
        .collect();

    let mut out = collection.clone();
    if out.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Geometry(
            "document is not a GeoJSON FeatureCollection".into(),
        ));
    }
    let mut seen = vec![false; region_ids.len()];
    {
        let features = out
            .get_mut("features")
            .and_then(Value::as_array_mut)
            .ok_or_else(|| Error::Geometry("FeatureCollection has no features array".into()))?;
        for feature in features.iter_mut() {
            let Some(fid) = feature_id(feature, id_property) else { continue };
            let Some(cv) = by_id.get(fid.as_str()) else { continue };
            if let Some(k) = region_ids.iter().position(|r| r == &fid) {
                seen[k] = true;
            }
            let props = feature
                .as_object_mut()
                .ok_or_else(|| Error::Geometry("malformed feature".into()))?
                .entry("properties")
                .or_insert_with(|| json!({}));
            let props = props
                .as_object_mut()
                .ok_or_else(|| Error::Geometry("malformed feature properties".into()))?;
            props.insert("value".into(), json!(cv.value.as_f64()));
            props.insert("class_index".into(), json!(cv.class_index));
            props.insert("class_label".into(), json!(cv.label));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Geometry(format!(
            "no feature with id '{}' to carry its value",
            region_ids[missing]
        )));
    }
    if let Some(u) = units {
        out.as_object_mut()
            .expect("checked FeatureCollection")
            .insert("units".into(), json!(u));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    #[test]
    fn manual_breaks_reproduce_reference_labels() {
        let breaks = ClassBreaks::Manual(vec![1.0, 10.2, 37.8, 141.0]);
        let values = vec![3.0f64, 20.0, 100.0];
        let classes = classify(&values, &breaks).unwrap();
        assert_eq!(classes[0].label, "1-10.2");
        assert_eq!(classes[1].label, "10.2-37.8");
        assert_eq!(classes[2].label, "37.8-141");
        assert_eq!(classes[0].class_index, 0);
        assert_eq!(classes[2].class_index, 2);
    }

    #[test]
    fn values_outside_the_break_range_clamp() {
        let breaks = ClassBreaks::Manual(vec![1.0, 10.2, 37.8, 141.0]);
        let classes = classify(&[0.5f64, 141.0, 500.0], &breaks).unwrap();
        assert_eq!(classes[0].class_index, 0);
        assert_eq!(classes[1].class_index, 2);
        assert_eq!(classes[2].class_index, 2);
    }

    #[test]
    fn quantile_breaks_split_evenly() {
        let values: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let classes = classify(&values, &ClassBreaks::Quantile(5)).unwrap();
        let mut counts = [0usize; 5];
        for c in &classes {
            counts[c.class_index] += 1;
        }
        assert_eq!(counts, [2, 2, 2, 2, 2]);
    }

    #[test]
    fn constant_values_fall_in_a_single_class() {
        let values = vec![4.0f64; 7];
        let classes = classify(&values, &ClassBreaks::Quantile(5)).unwrap();
        assert!(classes.iter().all(|c| c.class_index == 0));
        assert_eq!(classes[0].label, "4-4");
    }

    #[test]
    fn bad_breaks_are_rejected() {
        assert!(classify(&[1.0f64], &ClassBreaks::Manual(vec![1.0])).is_err());
        assert!(classify(&[1.0f64], &ClassBreaks::Manual(vec![2.0, 2.0])).is_err());
        assert!(classify(&[1.0f64], &ClassBreaks::Quantile(0)).is_err());
        assert!(classify(&[f64::NAN], &ClassBreaks::Quantile(2)).is_err());
        assert!(classify::<f64>(&[], &ClassBreaks::Quantile(2)).is_err());
    }

    fn square_feature(id: &str, x: f64) -> Value {
        json!({
            "type": "Feature",
            "properties": {"id": id},
            "geometry": {
                "type": "Polygon",
                "coordinates": [[[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0], [x, 0.0]]]
            }
        })
    }

    #[test]
    fn export_annotates_features_and_units() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [square_feature("a", 0.0), square_feature("b", 1.0)]
        });
        let ids = vec!["a".to_string(), "b".to_string()];
        let out = export_choropleth(
            &doc,
            "id",
            &ids,
            &[2.0f64, 50.0],
            &ClassBreaks::Manual(vec![1.0, 10.2, 37.8, 141.0]),
            Some("cases per 100,000"),
        )
        .unwrap();
        assert_eq!(out["units"], json!("cases per 100,000"));
        let props = &out["features"][0]["properties"];
        assert_eq!(props["value"], json!(2.0));
        assert_eq!(props["class_index"], json!(0));
        assert_eq!(props["class_label"], json!("1-10.2"));
        assert_eq!(out["features"][1]["properties"]["class_label"], json!("37.8-141"));
        // Source document is untouched.
        assert!(doc["features"][0]["properties"].get("value").is_none());
    }

    #[test]
    fn export_requires_geometry_for_every_region() {
        let doc = json!({
            "type": "FeatureCollection",
            "features": [square_feature("a", 0.0)]
        });
        let ids = vec!["a".to_string(), "missing".to_string()];
        let err = export_choropleth(
            &doc,
            "id",
            &ids,
            &[1.0f64, 2.0],
            &ClassBreaks::Quantile(2),
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("'missing'"), "{err}");
    }

    proptest! {
        #[test]
        fn class_assignment_is_monotone(
            mut values in proptest::collection::vec(-1e6f64..1e6, 2..40),
            k in 1usize..8,
        ) {
            let classes = classify(&values, &ClassBreaks::Quantile(k)).unwrap();
            let mut pairs: Vec<(f64, usize)> =
                values.iter().copied().zip(classes.iter().map(|c| c.class_index)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pairs.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            // Every class index stays below the class count.
            values.sort_by(f64::total_cmp);
            for c in &classes {
                prop_assert!(c.class_index < k);
            }
        }

        #[test]
        fn quantile_class_sizes_are_balanced(
            seed_values in proptest::collection::hash_set(-1000i32..1000, 10..60),
            k in 2usize..6,
        ) {
            // Distinct values: class sizes stay within one of n/k.
            let values: Vec<f64> = seed_values.iter().map(|&v| v as f64).collect();
            let classes = classify(&values, &ClassBreaks::Quantile(k)).unwrap();
            let n_classes = classes.iter().map(|c| c.class_index).max().unwrap() + 1;
            prop_assert!(n_classes <= k);
            let mut counts = vec![0usize; n_classes];
            for c in &classes {
                counts[c.class_index] += 1;
            }
            let ceil = values.len().div_ceil(k);
            for &c in &counts {
                prop_assert!(c >= ceil.saturating_sub(1) && c <= ceil + 1, "{counts:?}");
            }
        }
    }
}
