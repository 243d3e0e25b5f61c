//! Columnar numeric data with a missing-value mask and nested cluster indices.
//!
//! Data arrive in the usual joint-model layout: one column per outcome, long
//! format within an outcome (one row per measurement), survival time and
//! status recorded once per subject with `NA` elsewhere.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub na_token: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            na_token: "NA".to_string(),
        }
    }
}

/// A numeric column. Missing cells hold NaN in `values` and `true` in `missing`.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl Column {
    pub fn get(&self, row: usize) -> Option<f64> {
        if self.missing[row] {
            None
        } else {
            Some(self.values[row])
        }
    }
}

/// Cluster structure of one level.
#[derive(Debug, Clone)]
pub struct LevelIndex {
    pub name: String,
    /// Cluster id (0..K) of every row.
    pub row_cluster: Vec<usize>,
    /// Rows of every cluster, ascending.
    pub cluster_rows: Vec<Vec<usize>>,
    /// Original integer code of every cluster, ascending.
    pub labels: Vec<i64>,
    /// Cluster id at the next-higher level, absent for the top level.
    pub parent: Option<Vec<usize>>,
}

impl LevelIndex {
    pub fn n_clusters(&self) -> usize {
        self.cluster_rows.len()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Column>,
    lookup: HashMap<String, usize>,
    n_rows: usize,
    levels: Vec<LevelIndex>,
}

/// How a submodel's response is read from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseSpec {
    Scalar(String),
    Surv { time: String, event: String },
}

impl ResponseSpec {
    pub fn is_survival(&self) -> bool {
        matches!(self, ResponseSpec::Surv { .. })
    }

    pub fn columns(&self) -> Vec<&str> {
        match self {
            ResponseSpec::Scalar(c) => vec![c.as_str()],
            ResponseSpec::Surv { time, event } => vec![time.as_str(), event.as_str()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Response {
    Scalar(f64),
    TimeEvent { time: f64, event: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Scalar,
    TimeEvent,
}

#[derive(Debug, Clone)]
pub struct ResponseView {
    pub kind: ResponseKind,
    pub values: Vec<Option<Response>>,
    pub observed_rows: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from named columns of optional values.
    pub fn from_columns(cols: Vec<(String, Vec<Option<f64>>)>) -> Result<Self> {
        let n_rows = cols.first().map_or(0, |c| c.1.len());
        let mut names = Vec::with_capacity(cols.len());
        let mut columns = Vec::with_capacity(cols.len());
        let mut lookup = HashMap::new();
        for (name, vals) in cols {
            if vals.len() != n_rows {
                return data_err(format!("column `{name}` has {} rows, expected {n_rows}", vals.len()));
            }
            if lookup.insert(name.clone(), names.len()).is_some() {
                return data_err(format!("duplicate column name `{name}`"));
            }
            let missing: Vec<bool> = vals.iter().map(Option::is_none).collect();
            let values = vals.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            names.push(name);
            columns.push(Column { values, missing });
        }
        Ok(Self {
            names,
            columns,
            lookup,
            n_rows,
            levels: Vec::new(),
        })
    }

    pub fn load_table(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_table(file, options)
    }

    pub fn read_table<R: Read>(reader: R, options: &LoadOptions) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(options.delimiter)
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return data_err("missing header row");
        }
        let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != headers.len() {
                return data_err(format!("line {}: expected {} fields, found {}", i + 2, headers.len(), rec.len()));
            }
            for (j, cell) in rec.iter().enumerate() {
                let v = if cell == options.na_token {
                    None
                } else {
                    match cell.parse::<f64>() {
                        Ok(x) if x.is_finite() => Some(x),
                        _ => {
                            return data_err(format!(
                                "line {}, column `{}`: `{cell}` is not numeric",
                                i + 2,
                                headers[j]
                            ))
                        }
                    }
                };
                cols[j].push(v);
            }
        }
        Self::from_columns(headers.into_iter().zip(cols).collect())
    }

    /// Writes the table back as CSV. Values are printed with the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, writer: W, options: &LoadOptions) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(options.delimiter)
            .from_writer(writer);
        w.write_record(&self.names)?;
        for r in 0..self.n_rows {
            let rec: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c.get(r) {
                    Some(v) => format!("{v:?}"),
                    None => options.na_token.clone(),
                })
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.lookup.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        match self.lookup.get(name) {
            Some(&i) => Ok(&self.columns[i]),
            None => data_err(format!("unknown column `{name}`")),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn column_at(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn levels(&self) -> &[LevelIndex] {
        &self.levels
    }

    /// Builds cluster indices for `levels`, ordered highest to lowest, and
    /// checks that every cluster nests inside exactly one parent cluster.
    pub fn build_levels<S: AsRef<str>>(mut self, levels: &[S]) -> Result<Self> {
        let mut built: Vec<LevelIndex> = Vec::with_capacity(levels.len());
        for name in levels {
            let name = name.as_ref();
            let col = self.column(name)?;
            let mut codes = Vec::with_capacity(self.n_rows);
            for r in 0..self.n_rows {
                let v = match col.get(r) {
                    Some(v) => v,
                    None => return data_err(format!("level variable `{name}` is missing on row {}", r + 1)),
                };
                if v.fract() != 0.0 || v.abs() > 9.0e15 {
                    return data_err(format!("level variable `{name}` must be integer-coded (row {} has {v})", r + 1));
                }
                codes.push(v as i64);
            }
            let mut ids: BTreeMap<i64, usize> = codes.iter().map(|&c| (c, 0)).collect();
            for (k, v) in ids.values_mut().enumerate() {
                *v = k;
            }
            let labels: Vec<i64> = ids.keys().copied().collect();
            let row_cluster: Vec<usize> = codes.iter().map(|c| ids[c]).collect();
            let mut cluster_rows = vec![Vec::new(); labels.len()];
            for (r, &c) in row_cluster.iter().enumerate() {
                cluster_rows[c].push(r);
            }
            let parent = match built.last() {
                None => None,
                Some(up) => {
                    let mut parent = vec![usize::MAX; labels.len()];
                    for (r, &c) in row_cluster.iter().enumerate() {
                        let p = up.row_cluster[r];
                        if parent[c] == usize::MAX {
                            parent[c] = p;
                        } else if parent[c] != p {
                            return data_err(format!(
                                "level `{name}` is not nested in `{}`: cluster {} spans clusters {} and {}",
                                up.name, labels[c], up.labels[parent[c]], up.labels[p]
                            ));
                        }
                    }
                    Some(parent)
                }
            };
            built.push(LevelIndex {
                name: name.to_string(),
                row_cluster,
                cluster_rows,
                labels,
                parent,
            });
        }
        self.levels = built;
        Ok(self)
    }

    /// Per-row view of a response. A survival row counts as observed only when
    /// both the time and the indicator are present.
    pub fn response_view(&self, response: &ResponseSpec) -> Result<ResponseView> {
        match response {
            ResponseSpec::Scalar(name) => {
                let col = self.column(name)?;
                let values: Vec<Option<Response>> =
                    (0..self.n_rows).map(|r| col.get(r).map(Response::Scalar)).collect();
                let observed_rows = (0..self.n_rows).filter(|&r| values[r].is_some()).collect();
                Ok(ResponseView {
                    kind: ResponseKind::Scalar,
                    values,
                    observed_rows,
                })
            }
            ResponseSpec::Surv { time, event } => {
                let tcol = self.column(time)?;
                let dcol = self.column(event)?;
                let mut values = Vec::with_capacity(self.n_rows);
                for r in 0..self.n_rows {
                    let v = match (tcol.get(r), dcol.get(r)) {
                        (Some(t), Some(d)) => {
                            if d != 0.0 && d != 1.0 {
                                return data_err(format!("event indicator `{event}` must be 0 or 1 (row {} has {d})", r + 1));
                            }
                            if t <= 0.0 {
                                return data_err(format!("event time `{time}` must be positive (row {} has {t})", r + 1));
                            }
                            Some(Response::TimeEvent { time: t, event: d == 1.0 })
                        }
                        _ => None,
                    };
                    values.push(v);
                }
                let observed_rows = (0..self.n_rows).filter(|&r| values[r].is_some()).collect();
                Ok(ResponseView {
                    kind: ResponseKind::TimeEvent,
                    values,
                    observed_rows,
                })
            }
        }
    }

    /// Copy of the table with column `name` replaced by a constant.
    pub fn with_constant(&self, name: &str, value: f64) -> Result<Self> {
        let idx = match self.column_index(name) {
            Some(i) => i,
            None => return data_err(format!("unknown column `{name}`")),
        };
        let mut out = self.clone();
        out.columns[idx] = Column {
            values: vec![value; self.n_rows],
            missing: vec![false; self.n_rows],
        };
        Ok(out)
    }
}
