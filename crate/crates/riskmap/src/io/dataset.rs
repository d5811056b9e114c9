//! Dataset CSV ingestion and the matching writer.
//!
//! The file layout is schema-driven: a column mapping names the region
//! id, count, expected, covariate, and optional period columns, so any
//! CSV with a header row can be ingested without reshaping.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Dataset, ObsRow};
use crate::scalar::Scalar;

/// Column mapping for dataset files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub region_id: String,
    pub count: String,
    pub expected: String,
    pub covariates: Vec<String>,
    pub period: Option<String>,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        DatasetSchema {
            region_id: "region".into(),
            count: "count".into(),
            expected: "expected".into(),
            covariates: Vec::new(),
            period: None,
        }
    }
}

/// Loads a dataset CSV, joining its rows to `region_ids` (typically the
/// graph's region order). Row order in the file is free; the result is in
/// canonical period-major, region-minor order.
pub fn load_dataset<F: Scalar>(
    path: &Path,
    schema: &DatasetSchema,
    region_ids: &[String],
) -> Result<Dataset<F>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Data(format!("dataset file {} has no column '{name}'", path.display()))
        })
    };
    let region_col = col(&schema.region_id)?;
    let count_col = col(&schema.count)?;
    let expected_col = col(&schema.expected)?;
    let covariate_cols: Vec<usize> =
        schema.covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let period_col = schema.period.as_deref().map(col).transpose()?;

    let mut rows: Vec<ObsRow<F>> = Vec::new();
    let mut unknown: BTreeSet<String> = BTreeSet::new();
    for (line, record) in reader.records().enumerate() {
        let rec = record?;
        let row_no = line + 2; // header is line 1
        let cell = |c: usize, what: &str| -> Result<&str> {
            let v = rec.get(c).map(str::trim).unwrap_or("");
            if v.is_empty() {
                return Err(Error::Data(format!(
                    "row {row_no}: missing {what} value in column '{}'",
                    &headers[c]
                )));
            }
            Ok(v)
        };
        let id = cell(region_col, "region id")?;
        let Some(region) = region_ids.iter().position(|r| r == id) else {
            unknown.insert(id.to_string());
            continue;
        };
        let count: u64 = cell(count_col, "count")?.parse().map_err(|_| {
            Error::Data(format!("row {row_no}: count '{}' is not a nonnegative integer",
                &rec[count_col]))
        })?;
        let expected = F::parse_str(cell(expected_col, "expected")?).ok_or_else(|| {
            Error::Data(format!("row {row_no}: expected count '{}' is not a number",
                &rec[expected_col]))
        })?;
        let covariates: Vec<F> = covariate_cols
            .iter()
            .map(|&c| {
                F::parse_str(cell(c, "covariate")?).ok_or_else(|| {
                    Error::Data(format!(
                        "row {row_no}: covariate '{}' value '{}' is not a number",
                        &headers[c], &rec[c]
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let period: Option<u32> = match period_col {
            Some(c) => Some(cell(c, "period")?.parse().map_err(|_| {
                Error::Data(format!("row {row_no}: period '{}' is not an integer", &rec[c]))
            })?),
            None => None,
        };
        rows.push(ObsRow { region, period, count, expected, covariates });
    }
    if !unknown.is_empty() {
        let list: Vec<String> = unknown.into_iter().collect();
        return Err(Error::Data(format!(
            "dataset references region ids not in the graph: {}",
            list.join(", ")
        )));
    }
    Dataset::from_rows(region_ids.to_vec(), rows)
}

/// Writes a dataset in canonical order using the schema's column names.
/// Floats keep full precision, so a load reproduces the dataset exactly.
pub fn save_dataset<F: Scalar>(
    path: &Path,
    data: &Dataset<F>,
    schema: &DatasetSchema,
) -> Result<()> {
    if data.n_covariates() != schema.covariates.len() {
        return Err(Error::Dimension(format!(
            "dataset has {} covariates but the schema names {}",
            data.n_covariates(),
            schema.covariates.len()
        )));
    }
    if data.has_periods() != schema.period.is_some() {
        return Err(Error::Data(
            "schema period column does not match the dataset's period structure".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> =
        vec![&schema.region_id, &schema.count, &schema.expected];
    header.extend(schema.covariates.iter().map(String::as_str));
    if let Some(p) = &schema.period {
        header.push(p);
    }
    w.write_record(&header)?;
    for k in 0..data.n_obs() {
        let mut rec: Vec<String> = vec![
            data.region_ids()[data.region_of(k)].clone(),
            data.counts()[k].to_string(),
            data.expected()[k].to_string(),
        ];
        rec.extend(data.covariates(k).iter().map(|c| c.to_string()));
        if let Some(p) = data.period_of(k) {
            rec.push(p.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::compute_sir;

    fn write(path: &Path, text: &str) {
        std::fs::write(path, text).unwrap();
    }

    fn ids(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_and_normalizes_row_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write(
            &path,
            "region,count,expected,x1\nb,5,5.0,0.2\na,3,3.0,-0.1\nc,7,7.0,0.4\n",
        );
        let schema = DatasetSchema {
            covariates: vec!["x1".into()],
            ..DatasetSchema::default()
        };
        let data: Dataset<f64> = load_dataset(&path, &schema, &ids(&["a", "b", "c"])).unwrap();
        assert_eq!(data.n_obs(), 3);
        // Canonical order follows the region list, not the file.
        assert_eq!(data.counts()[0], 3);
        assert_eq!(data.covariates(0), &[-0.1]);
        // count == expected everywhere, so every SIR is 1.
        let sir = compute_sir(&data);
        assert!(sir.iter().all(|&s| (s - 1.0f64).abs() < 1e-12));
    }

    #[test]
    fn unknown_region_ids_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write(&path, "region,count,expected\nzz,1,1.0\na,1,1.0\nqq,1,1.0\n");
        let err = load_dataset::<f64>(&path, &DatasetSchema::default(), &ids(&["a"]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("qq, zz"), "{msg}");
    }

    #[test]
    fn bad_cells_name_the_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write(&path, "region,count,expected\na,-3,1.0\n");
        let err =
            load_dataset::<f64>(&path, &DatasetSchema::default(), &ids(&["a"])).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");

        write(&path, "region,count,expected,x1\na,3,1.0,\n");
        let schema =
            DatasetSchema { covariates: vec!["x1".into()], ..DatasetSchema::default() };
        let err = load_dataset::<f64>(&path, &schema, &ids(&["a"])).unwrap_err();
        assert!(err.to_string().contains("missing covariate"), "{err}");

        write(&path, "region,count,expected\na,3,0.0\n");
        let err =
            load_dataset::<f64>(&path, &DatasetSchema::default(), &ids(&["a"])).unwrap_err();
        assert!(err.to_string().contains("expected"), "{err}");

        write(&path, "region,count\na,3\n");
        let err =
            load_dataset::<f64>(&path, &DatasetSchema::default(), &ids(&["a"])).unwrap_err();
        assert!(err.to_string().contains("no column 'expected'"), "{err}");
    }

    #[test]
    fn periods_load_into_period_major_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write(
            &path,
            "region,count,expected,year\n\
             a,1,1.0,2021\nb,2,1.0,2021\na,3,1.0,2020\nb,4,1.0,2020\n",
        );
        let schema = DatasetSchema { period: Some("year".into()), ..DatasetSchema::default() };
        let data: Dataset<f64> = load_dataset(&path, &schema, &ids(&["a", "b"])).unwrap();
        assert_eq!(data.periods(), &[2020, 2021]);
        assert_eq!(data.counts()[0], 3);
        assert_eq!(data.counts()[3], 2);
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.csv");
        write(
            &src,
            "region,count,expected,x1,year\n\
             a,1,1.25,0.125,2020\nb,2,2.5,-0.375,2020\n\
             a,3,1.1234567890123457,0.5,2021\nb,4,2.0,1.0e-9,2021\n",
        );
        let schema = DatasetSchema {
            covariates: vec!["x1".into()],
            period: Some("year".into()),
            ..DatasetSchema::default()
        };
        let region_ids = ids(&["a", "b"]);
        let data: Dataset<f64> = load_dataset(&src, &schema, &region_ids).unwrap();
        let out = dir.path().join("out.csv");
        save_dataset(&out, &data, &schema).unwrap();
        let back: Dataset<f64> = load_dataset(&out, &schema, &region_ids).unwrap();
        assert_eq!(data, back);
    }

    #[test]
    fn save_validates_schema_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write(&path, "region,count,expected\na,1,1.0\n");
        let data: Dataset<f64> =
            load_dataset(&path, &DatasetSchema::default(), &ids(&["a"])).unwrap();
        let bad = DatasetSchema { covariates: vec!["x1".into()], ..DatasetSchema::default() };
        assert!(save_dataset(&dir.path().join("o.csv"), &data, &bad).is_err());
    }
}
