//! Loading external regression data and screening predictors by robust
//! correlation with the response.
//!
//! Missing cells (`""`, `NA`, `NaN`, `N/A`, `null`) are handled as follows:
//! rows with a missing response are dropped, predictors missing in more than
//! 20% of the remaining rows are dropped, and any other gap is filled with
//! the column mean.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use faer::Mat;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{standardize_columns, Dataset};

pub const MAX_MISSING_FRACTION: f64 = 0.2;
/// Winsorization half-width in (normal-consistent) MAD units.
pub const WINSOR_MADS: f64 = 2.0;
const MAD_TO_SD: f64 = 1.4826;
pub const SCREEN_METHOD: &str = "winsorized-pearson-2mad";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseSelector {
    Name(String),
    /// Zero-based column index in the file.
    Index(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub dropped_predictors: Vec<String>,
    pub imputed_cells: usize,
}

/// A complete numeric table: response plus predictor columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub response_name: String,
    pub names: Vec<String>,
    pub y: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
    pub report: LoadReport,
}

impl RawTable {
    pub fn new(response_name: String, y: Vec<f64>, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::SchemaError(format!("{} names for {} columns", names.len(), columns.len())));
        }
        if y.len() < 3 {
            return Err(Error::InsufficientData(format!("{} usable rows, need at least 3", y.len())));
        }
        if let Some(c) = columns.iter().position(|c| c.len() != y.len()) {
            return Err(Error::SchemaError(format!("column {:?} has the wrong length", names[c])));
        }
        let rows_read = y.len();
        Ok(Self {
            response_name,
            names,
            y,
            columns,
            report: LoadReport { rows_read, ..LoadReport::default() },
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let s = raw.trim();
    if s.is_empty() || ["na", "nan", "n/a", "null"].contains(&s.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

pub fn load_csv(path: &Path, response: &ResponseSelector) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let resp_idx = match response {
        ResponseSelector::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::SchemaError(format!("response column {name:?} not found")))?,
        ResponseSelector::Index(i) if *i < headers.len() => *i,
        ResponseSelector::Index(i) => {
            return Err(Error::SchemaError(format!("response index {i} out of range ({} columns)", headers.len())))
        }
    };

    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                parse_cell(cell).map_err(|_| {
                    Error::SchemaError(format!("row {}, column {:?}: cannot parse {cell:?}", r + 1, headers[c]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let rows_read = rows.len();
    rows.retain(|row| row[resp_idx].is_some());
    let rows_dropped = rows_read - rows.len();
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} rows with a response value, need at least 3",
            rows.len()
        )));
    }

    let y: Vec<f64> = rows.iter().map(|row| row[resp_idx].unwrap()).collect();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    let mut dropped_predictors = Vec::new();
    let mut imputed_cells = 0;
    for (c, name) in headers.iter().enumerate() {
        if c == resp_idx {
            continue;
        }
        let col: Vec<Option<f64>> = rows.iter().map(|row| row[c]).collect();
        let missing = col.iter().filter(|v| v.is_none()).count();
        if missing as f64 > MAX_MISSING_FRACTION * rows.len() as f64 {
            dropped_predictors.push(name.clone());
            continue;
        }
        let present: Vec<f64> = col.iter().flatten().copied().collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        imputed_cells += missing;
        names.push(name.clone());
        columns.push(col.into_iter().map(|v| v.unwrap_or(mean)).collect());
    }
    if !dropped_predictors.is_empty() {
        warn!("dropped {} predictors with more than 20% missing values", dropped_predictors.len());
    }

    Ok(RawTable {
        response_name: headers[resp_idx].clone(),
        names,
        y,
        columns,
        report: LoadReport { rows_read, rows_dropped, dropped_predictors, imputed_cells },
    })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Clamps to `median ± 2 * 1.4826 * MAD`. A zero MAD leaves the data as is.
pub fn winsorize(v: &[f64]) -> Vec<f64> {
    let med = median(v);
    let dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
    let mad = median(&dev);
    if mad == 0.0 {
        return v.to_vec();
    }
    let half = WINSOR_MADS * MAD_TO_SD * mad;
    v.iter().map(|x| x.clamp(med - half, med + half)).collect()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx > 0.0 && syy > 0.0 {
        Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
    } else {
        None
    }
}

/// Pearson correlation of the coordinatewise-winsorized data.
pub fn robust_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need equal lengths >= 3, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite values".into()));
    }
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::DegenerateColumn(0));
    }
    if y.iter().all(|v| *v == y[0]) {
        return Err(Error::DegenerateColumn(1));
    }
    pearson(&winsorize(x), &winsorize(y)).ok_or(Error::DegenerateColumn(0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenedPredictor {
    pub name: String,
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub method: String,
    pub response: String,
    pub requested_k: usize,
    /// Sorted by decreasing absolute correlation.
    pub selected: Vec<ScreenedPredictor>,
    /// Constant predictors, which cannot be correlated or standardized.
    pub excluded_constant: Vec<String>,
    pub load: LoadReport,
}

/// Keeps the `k` predictors with the largest absolute robust correlation
/// (ties go to the earlier column). The dataset keeps the selected columns
/// in file order, standardized.
pub fn screen_predictors(table: &RawTable, k: usize) -> Result<(Dataset, ScreenReport)> {
    if k == 0 {
        return Err(Error::InvalidParameter("screen k must be >= 1".into()));
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(table.columns.len());
    let mut excluded_constant = Vec::new();
    for (j, col) in table.columns.iter().enumerate() {
        match robust_correlation(col, &table.y) {
            Ok(r) => scored.push((j, r)),
            Err(Error::DegenerateColumn(0)) => excluded_constant.push(table.names[j].clone()),
            Err(e) => return Err(e),
        }
    }
    if scored.is_empty() {
        return Err(Error::InsufficientData("no usable predictors".into()));
    }
    if k > scored.len() {
        warn!("requested {k} predictors but only {} are available; using all", scored.len());
    }
    scored.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    scored.truncate(k);

    let mut chosen: Vec<usize> = scored.iter().map(|(j, _)| *j).collect();
    chosen.sort_unstable();
    let n = table.n();
    let raw = Mat::from_fn(n, chosen.len(), |i, c| table.columns[chosen[c]][i]);
    let x = standardize_columns(raw.as_ref())?;
    let names = chosen.iter().map(|&j| table.names[j].clone()).collect();
    let dataset = Dataset::new(table.y.clone(), x, Some(names))?;

    let report = ScreenReport {
        method: SCREEN_METHOD.to_string(),
        response: table.response_name.clone(),
        requested_k: k,
        selected: scored
            .iter()
            .map(|&(j, r)| ScreenedPredictor { name: table.names[j].clone(), correlation: r })
            .collect(),
        excluded_constant,
        load: table.report.clone(),
    };
    Ok((dataset, report))
}

/// Writes the response and the (standardized) predictors with a header row.
pub fn write_dataset_csv(dataset: &Dataset, response_name: &str, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{response_name}")?;
    let p = dataset.p();
    for j in 0..p {
        match dataset.names() {
            Some(names) => write!(out, ",{}", names[j])?,
            None => write!(out, ",x{}", j + 1)?,
        }
    }
    writeln!(out)?;
    let x = dataset.x();
    for (i, y) in dataset.y().iter().enumerate() {
        write!(out, "{y}")?;
        for j in 0..p {
            write!(out, ",{}", x[(i, j)])?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rand_dist::RngStream;
    use proptest::prelude::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_complete_table() {
        let f = write_tmp("y,a,b\n1,2,3\n4,5,7\n7,9,8\n");
        let t = load_csv(f.path(), &ResponseSelector::Name("y".into())).unwrap();
        assert_eq!(t.y, vec![1.0, 4.0, 7.0]);
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.report.imputed_cells, 0);
        assert_eq!(t.report.rows_dropped, 0);

        let t2 = load_csv(f.path(), &ResponseSelector::Index(2)).unwrap();
        assert_eq!(t2.response_name, "b");
    }

    #[test]
    fn missing_response_column() {
        let f = write_tmp("y,a\n1,2\n3,4\n5,6\n");
        assert!(matches!(
            load_csv(f.path(), &ResponseSelector::Name("z".into())),
            Err(Error::SchemaError(_))
        ));
        assert!(matches!(load_csv(f.path(), &ResponseSelector::Index(5)), Err(Error::SchemaError(_))));
    }

    #[test]
    fn missing_value_policy() {
        // column b is 25% missing, column c has one imputed cell (12.5%)
        let f = write_tmp(
            "y,a,b,c\n1,1,NA,1\n2,2,2,\n3,3,3,3\n4,4,,4\nNA,5,5,5\n5,6,6,6\n6,7,7,7\n7,8,8,8\n8,9,9,9\n",
        );
        let t = load_csv(f.path(), &ResponseSelector::Name("y".into())).unwrap();
        assert_eq!(t.report.rows_dropped, 1);
        assert_eq!(t.report.dropped_predictors, vec!["b"]);
        assert_eq!(t.report.imputed_cells, 1);
        assert_eq!(t.names, vec!["a", "c"]);
        let c = &t.columns[1];
        let mean_rest = (1.0 + 3.0 + 4.0 + 6.0 + 7.0 + 8.0 + 9.0) / 7.0;
        assert!((c[1] - mean_rest).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_and_bad_cells() {
        let f = write_tmp("y,a\n1,2\nNA,3\n3,4\n");
        assert!(matches!(load_csv(f.path(), &ResponseSelector::Name("y".into())), Err(Error::InsufficientData(_))));
        let f = write_tmp("y,a\n1,2\n2,abc\n3,4\n");
        assert!(matches!(load_csv(f.path(), &ResponseSelector::Name("y".into())), Err(Error::SchemaError(_))));
    }

    #[test]
    fn robust_correlation_examples() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0 + i as f64 * 0.01).collect();
        assert!((robust_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((robust_correlation(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(robust_correlation(&[1.0; 5], &x[..5]), Err(Error::DegenerateColumn(0))));
    }

    #[test]
    fn robust_correlation_resists_outlier() {
        let mut rng = RngStream::new(77);
        let x: Vec<f64> = (0..200).map(|_| rng.standard_normal()).collect();
        let mut y = x.clone();
        y[17] = 1e6;
        let robust = robust_correlation(&x, &y).unwrap();
        let plain = pearson(&x, &y).unwrap();
        assert!(robust > 0.9, "robust {robust}");
        assert!(plain < 0.5, "plain {plain}");
    }

    fn table_from(y: Vec<f64>, cols: Vec<Vec<f64>>) -> RawTable {
        let names = (0..cols.len()).map(|j| format!("g{j}")).collect();
        RawTable::new("y".into(), y, names, cols).unwrap()
    }

    #[test]
    fn screening_examples() {
        let mut rng = RngStream::new(5);
        let n = 30;
        let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let noise: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.standard_normal()).collect()).collect();
        let mut cols = noise.clone();
        cols.insert(2, y.clone());
        let t = table_from(y.clone(), cols);

        let (d, rep) = screen_predictors(&t, 1).unwrap();
        assert_eq!(rep.selected[0].name, "g2");
        assert_eq!(d.names().unwrap(), &["g2".to_string()]);

        let (d, rep) = screen_predictors(&t, 5).unwrap();
        assert_eq!(d.names().unwrap(), &["g0", "g1", "g2", "g3", "g4"]);
        assert_eq!(rep.selected.len(), 5);
        assert!(rep.selected.windows(2).all(|w| w[0].correlation.abs() >= w[1].correlation.abs()));
        for j in 0..5 {
            let col: Vec<f64> = (0..n).map(|i| d.x()[(i, j)]).collect();
            assert!(col.iter().sum::<f64>().abs() < 1e-10);
            assert!((col.iter().map(|v| v * v).sum::<f64>() - n as f64).abs() < 1e-8);
        }

        let (d, _) = screen_predictors(&t, 50).unwrap();
        assert_eq!(d.p(), 5);
        assert!(screen_predictors(&t, 0).is_err());
    }

    #[test]
    fn screening_finds_informative_columns() {
        let mut rng = RngStream::new(6);
        let n = 60;
        let cols: Vec<Vec<f64>> = (0..100).map(|_| (0..n).map(|_| rng.standard_normal()).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (0..5).map(|j| cols[j * 20][i]).sum::<f64>() + 0.5 * rng.standard_normal())
            .collect();
        let t = table_from(y, cols);
        let (_, rep) = screen_predictors(&t, 20).unwrap();
        for j in 0..5 {
            let name = format!("g{}", j * 20);
            assert!(rep.selected.iter().any(|s| s.name == name), "{name} not selected");
        }
    }

    #[test]
    fn constant_predictors_are_excluded() {
        let t = table_from(vec![1.0, 2.0, 4.0, 3.0], vec![vec![5.0; 4], vec![1.0, 2.0, 3.0, 4.0]]);
        let (d, rep) = screen_predictors(&t, 2).unwrap();
        assert_eq!(d.p(), 1);
        assert_eq!(rep.excluded_constant, vec!["g0"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn selection_invariant_to_positive_affine_rescaling(
            seed in 0u64..10_000,
            col in 0usize..12,
            scale in 0.01f64..100.0,
            shift in -50.0f64..50.0,
        ) {
            let mut rng = RngStream::new(seed);
            let n = 25;
            let y: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
            let cols: Vec<Vec<f64>> = (0..12)
                .map(|j| (0..n).map(|i| 0.1 * j as f64 * y[i] + rng.standard_normal()).collect())
                .collect();
            let base = table_from(y.clone(), cols.clone());
            let mut moved = cols;
            moved[col] = moved[col].iter().map(|v| scale * v + shift).collect();
            let other = table_from(y, moved);
            let (a, _) = screen_predictors(&base, 5).unwrap();
            let (b, _) = screen_predictors(&other, 5).unwrap();
            prop_assert_eq!(a.names(), b.names());
        }
    }
}
