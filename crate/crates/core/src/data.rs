//! CSV ingestion and column preprocessing.
//!
//! A preprocessing spec is a JSON document
//! `{"response": name, "edges": [..]?, "columns": {name: action}}` where each
//! action is one of `standardize`, `dummy_code`, `likert_sigma` or
//! `passthrough`. Columns not listed are dropped. Output covariates keep the
//! order of the CSV header.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{normal_pdf, normal_quantile};
use crate::model::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnAction {
    /// Center and scale to population variance one.
    Standardize,
    /// One indicator per level except the alphabetically first.
    DummyCode,
    /// Replace each ordered level by its normal band mean.
    LikertSigma,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSpec {
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    pub columns: BTreeMap<String, ColumnAction>,
}

impl PreprocessSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: PreprocessSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.contains_key(&self.response) {
            return Err(Error::Config(format!(
                "response '{}' cannot also be a covariate",
                self.response
            )));
        }
        if let Some(edges) = &self.edges {
            if edges.is_empty() {
                return Err(Error::Config("edges must not be empty".into()));
            }
            if edges.iter().any(|e| !e.is_finite()) {
                return Err(Error::Config("edges must be finite".into()));
            }
            if edges.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("edges must be strictly increasing".into()));
            }
        }
        Ok(())
    }
}

/// Band means of a standard normal cut at the cumulative proportions of
/// `counts`, one score per ordered level.
pub fn likert_sigma(counts: &[u64]) -> Result<Vec<f64>> {
    if counts.len() < 2 {
        return Err(Error::Domain("need at least two levels".into()));
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Domain(format!("level {} has zero count; merge it upstream", k + 1)));
    }
    let total: u64 = counts.iter().sum();
    let k = counts.len();
    // φ at the K+1 band edges, zero at both infinite ends
    let mut phi = vec![0.0; k + 1];
    let mut cum = 0u64;
    for j in 1..k {
        cum += counts[j - 1];
        phi[j] = normal_pdf(normal_quantile(cum as f64 / total as f64)?);
    }
    Ok((0..k)
        .map(|j| (phi[j] - phi[j + 1]) / (counts[j] as f64 / total as f64))
        .collect())
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

fn numeric_column(values: &[&str], name: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(r, cell)| {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Cell {
                row: r + 1,
                column: name.to_string(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row: r + 1,
                    column: name.to_string(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            Ok(v)
        })
        .collect()
}

/// Levels in their natural order: numeric when every level parses, else lexical.
fn ordered_levels(values: &[&str]) -> Vec<String> {
    let set: BTreeSet<&str> = values.iter().map(|v| v.trim()).collect();
    let mut levels: Vec<String> = set.into_iter().map(String::from).collect();
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut paired: Vec<(f64, String)> = nums.into_iter().zip(levels).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        levels = paired.into_iter().map(|(_, l)| l).collect();
    }
    levels
}

fn standardize(v: &mut [f64], name: &str) -> Result<()> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Config(format!("column '{name}' is constant and cannot be standardized")));
    }
    let sd = var.sqrt();
    v.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    Ok(())
}

fn bin_response(values: &[f64], edges: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| 1 + edges.iter().filter(|&&e| v > e).count())
        .collect()
}

fn rank_response(values: &[f64], name: &str) -> Result<(Vec<usize>, usize)> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Config(format!("response '{name}' has fewer than two levels")));
    }
    let y = values
        .iter()
        .map(|v| 1 + distinct.partition_point(|d| d < v))
        .collect();
    Ok((y, distinct.len()))
}

pub fn load_csv(path: impl AsRef<Path>, spec: &PreprocessSpec) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    load_csv_reader(file, spec)
}

pub fn load_csv_reader<R: Read>(reader: R, spec: &PreprocessSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let find = |name: &str| header.iter().position(|h| h == name);
    let response_col = find(&spec.response)
        .ok_or_else(|| Error::Config(format!("response column '{}' not in CSV header", spec.response)))?;
    for name in spec.columns.keys() {
        if find(name).is_none() {
            return Err(Error::Config(format!("column '{name}' not in CSV header")));
        }
    }
    let used: Vec<usize> = std::iter::once(response_col)
        .chain(
            header
                .iter()
                .enumerate()
                .filter(|(_, h)| spec.columns.contains_key(h.as_str()))
                .map(|(j, _)| j),
        )
        .collect();

    let mut records = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for &j in &used {
            let cell = rec.get(j).unwrap_or("");
            if is_missing(cell) {
                return Err(Error::Cell {
                    row: r + 1,
                    column: header[j].clone(),
                    message: "missing value".into(),
                });
            }
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::Config("CSV has no data rows".into()));
    }
    let column = |j: usize| -> Vec<&str> { records.iter().map(|r| r.get(j).unwrap_or("")).collect() };

    let raw_y = numeric_column(&column(response_col), &spec.response)?;
    let (y, n_categories) = match &spec.edges {
        Some(edges) => (bin_response(&raw_y, edges), edges.len() + 1),
        None => rank_response(&raw_y, &spec.response)?,
    };

    let mut names = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (j, h) in header.iter().enumerate() {
        let Some(&action) = spec.columns.get(h.as_str()) else { continue };
        let values = column(j);
        match action {
            ColumnAction::Passthrough => {
                cols.push(numeric_column(&values, h)?);
                names.push(h.clone());
            }
            ColumnAction::Standardize => {
                let mut v = numeric_column(&values, h)?;
                standardize(&mut v, h)?;
                cols.push(v);
                names.push(h.clone());
            }
            ColumnAction::DummyCode => {
                let set: BTreeSet<&str> = values.iter().map(|v| v.trim()).collect();
                for level in set.into_iter().skip(1) {
                    cols.push(values.iter().map(|v| f64::from(u8::from(v.trim() == level))).collect());
                    names.push(format!("{h}_{level}"));
                }
            }
            ColumnAction::LikertSigma => {
                let levels = ordered_levels(&values);
                let mut counts = vec![0u64; levels.len()];
                let idx: Vec<usize> = values
                    .iter()
                    .map(|v| levels.iter().position(|l| l == v.trim()).expect("level collected"))
                    .collect();
                idx.iter().for_each(|&k| counts[k] += 1);
                let scores = likert_sigma(&counts).map_err(|e| match e {
                    Error::Domain(m) => Error::Config(format!("column '{h}': {m}")),
                    other => other,
                })?;
                cols.push(idx.iter().map(|&k| scores[k]).collect());
                names.push(h.clone());
            }
        }
    }

    let n = y.len();
    let p = cols.len();
    let mut x = Vec::with_capacity(n * p);
    for i in 0..n {
        for c in &cols {
            x.push(c[i]);
        }
    }
    Dataset::new(y, x, n_categories, names).map_err(|e| match e {
        Error::Contract(m) => Error::Config(m),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};

    fn spec(json: &str) -> PreprocessSpec {
        PreprocessSpec::from_json(json).unwrap()
    }

    #[test]
    fn standardizes_with_population_sd() {
        let csv = "y,a\n1,1\n2,2\n3,3\n";
        let d = load_csv_reader(csv.as_bytes(), &spec(r#"{"response":"y","columns":{"a":"standardize"}}"#)).unwrap();
        let z = 1.5f64.sqrt();
        assert!((d.x()[0] + z).abs() < 1e-12 && d.x()[1].abs() < 1e-15 && (d.x()[2] - z).abs() < 1e-12);
        assert!((z - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn dummy_codes_drop_first_level() {
        let csv = "y,g,a\n1,b,0.5\n2,a,1\n3,c,2\n1,a,3\n";
        let s = spec(r#"{"response":"y","columns":{"g":"dummy_code","a":"passthrough"}}"#);
        let d = load_csv_reader(csv.as_bytes(), &s).unwrap();
        assert_eq!(d.column_names(), ["g_b", "g_c", "a"]);
        assert_eq!(d.row(0), [1.0, 0.0, 0.5]);
        assert_eq!(d.row(1), [0.0, 0.0, 1.0]);
        assert_eq!(d.row(2), [0.0, 1.0, 2.0]);
    }

    #[test]
    fn bins_response_by_edges() {
        let csv = "v,a\n5,1\n15,2\n25,3\n35,4\n45,5\n10,6\n";
        let s = spec(r#"{"response":"v","edges":[10,20,30,40],"columns":{"a":"passthrough"}}"#);
        let d = load_csv_reader(csv.as_bytes(), &s).unwrap();
        assert_eq!(d.y(), [1, 2, 3, 4, 5, 1]);
        assert_eq!(d.n_categories(), 5);
    }

    #[test]
    fn ranks_response_without_edges() {
        let csv = "y,a\n7,1\n3,2\n7,3\n9,4\n";
        let d = load_csv_reader(csv.as_bytes(), &spec(r#"{"response":"y","columns":{"a":"passthrough"}}"#)).unwrap();
        assert_eq!(d.y(), [2, 1, 2, 3]);
        assert_eq!(d.n_categories(), 3);
    }

    #[test]
    fn missing_cell_names_row_and_column() {
        let csv = "y,a\n1,1\n2,\n3,3\n";
        let err = load_csv_reader(csv.as_bytes(), &spec(r#"{"response":"y","columns":{"a":"passthrough"}}"#)).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("{other}"),
        }
        let csv = "y,a\n1,1\n2,x\n";
        assert!(matches!(
            load_csv_reader(csv.as_bytes(), &spec(r#"{"response":"y","columns":{"a":"passthrough"}}"#)),
            Err(Error::Cell { row: 2, .. })
        ));
    }

    #[test]
    fn unknown_column_is_config_error() {
        let csv = "y,a\n1,1\n2,2\n";
        let s = spec(r#"{"response":"y","columns":{"b":"passthrough"}}"#);
        assert!(matches!(load_csv_reader(csv.as_bytes(), &s), Err(Error::Config(_))));
        let s = spec(r#"{"response":"z","columns":{"a":"passthrough"}}"#);
        assert!(matches!(load_csv_reader(csv.as_bytes(), &s), Err(Error::Config(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(PreprocessSpec::from_json(r#"{"response":"y","edges":[2,1],"columns":{}}"#).is_err());
        assert!(PreprocessSpec::from_json(r#"{"response":"y","columns":{"a":"scale"}}"#).is_err());
        assert!(PreprocessSpec::from_json(r#"{"response":"y","columns":{"y":"passthrough"}}"#).is_err());
        assert!(PreprocessSpec::from_json(r#"{"columns":{}}"#).is_err());
    }

    #[test]
    fn likert_equal_counts() {
        let s = likert_sigma(&[5, 5]).unwrap();
        let half_normal = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((s[0] + half_normal).abs() < 1e-12 && (s[1] - half_normal).abs() < 1e-12);
        assert!((half_normal - 0.7979).abs() < 1e-4);
    }

    #[test]
    fn likert_symmetric_counts_are_antisymmetric() {
        let s = likert_sigma(&[3, 7, 7, 3]).unwrap();
        assert!((s[0] + s[3]).abs() < 1e-12 && (s[1] + s[2]).abs() < 1e-12);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    /// Truncated-normal band means by composite Simpson quadrature.
    fn band_mean_quadrature(lo: f64, hi: f64) -> f64 {
        let nrm = Normal::standard();
        let (a, b) = (lo.max(-12.0), hi.min(12.0));
        let m = 20_000;
        let h = (b - a) / m as f64;
        let mut num = 0.0;
        for k in 0..=m {
            let t = a + k as f64 * h;
            let w = if k == 0 || k == m { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            num += w * t * nrm.pdf(t);
        }
        num *= h / 3.0;
        num / (nrm.cdf(hi) - nrm.cdf(lo))
    }

    #[test]
    fn likert_matches_quadrature() {
        let counts = [10, 20, 30, 40];
        let s = likert_sigma(&counts).unwrap();
        let nrm = Normal::standard();
        let cuts = [f64::NEG_INFINITY, nrm.inverse_cdf(0.1), nrm.inverse_cdf(0.3), nrm.inverse_cdf(0.6), f64::INFINITY];
        for k in 0..4 {
            let q = band_mean_quadrature(cuts[k], cuts[k + 1]);
            assert!((s[k] - q).abs() < 1e-8, "level {k}: {} vs {q}", s[k]);
        }
        let weighted: f64 = s.iter().zip(counts).map(|(v, c)| v * c as f64).sum();
        assert!(weighted.abs() < 1e-10);
    }

    #[test]
    fn likert_rejects_degenerate_counts() {
        assert!(matches!(likert_sigma(&[3, 0, 2]), Err(Error::Domain(_))));
        assert!(matches!(likert_sigma(&[3]), Err(Error::Domain(_))));
    }

    #[test]
    fn likert_column_uses_numeric_level_order() {
        let csv = "y,s\n1,10\n2,2\n3,10\n1,2\n2,9\n";
        let d = load_csv_reader(csv.as_bytes(), &spec(r#"{"response":"y","columns":{"s":"likert_sigma"}}"#)).unwrap();
        let s = likert_sigma(&[2, 1, 2]).unwrap();
        assert_eq!(d.x(), [s[2], s[0], s[2], s[0], s[1]]);
    }
}
