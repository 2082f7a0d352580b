//! File formats: tensor and model JSON, observation CSV and the categorical
//! level map.
//!
//! Indices are 1-based everywhere and dense entries are row-major with the
//! last index fastest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use postensor_core::cp::CpModel;
use postensor_core::{DenseTensor, FactorSet, MultiIndex, Observation, ObservationSet, PartitionComplex, TensorShape};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

/// Reads a whole file as text.
pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `contents`, creating parent directories.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn parse_json<T: DeserializeOwned>(path: &Path, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| CliError::format(path, None, e.to_string()))
}

fn read_json_value(path: &Path) -> Result<Value> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, Some(e.line() as u64), e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    write_text(path, &s)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DenseJson {
    dims: Vec<usize>,
    entries: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionJson {
    dims: Vec<usize>,
    facets: Vec<Vec<usize>>,
    factors: Vec<Vec<f64>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CpJson {
    dims: Vec<usize>,
    rank: usize,
    /// `factors[i][v][j]`: mode `i`, level `v + 1`, component `j`.
    factors: Vec<Vec<Vec<f64>>>,
}

/// Builds a complex from 1-based facets: a partition when the facets are
/// disjoint and cover every position, a general complex otherwise.
pub fn complex_from_facets(facets: Vec<Vec<usize>>, order: usize) -> postensor_core::Result<PartitionComplex> {
    let mut seen = vec![0usize; order + 1];
    for f in &facets {
        for &j in f {
            if j <= order {
                seen[j] += 1;
            }
        }
    }
    if seen[1..].iter().all(|&c| c == 1) {
        PartitionComplex::partition(facets, order)
    } else {
        PartitionComplex::general(facets, order)
    }
}

/// Parses a facet list given inline as JSON (`[[1,2],[3]]`) or as
/// semicolon-separated groups (`1,2;3`), or read from a JSON file.
pub fn parse_facets(spec: &str, order: usize) -> Result<PartitionComplex> {
    let trimmed = spec.trim();
    let facets: Vec<Vec<usize>> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| CliError::Usage(format!("bad --facets list: {}", e)))?
    } else if !trimmed.is_empty() && trimmed.chars().all(|c| c.is_ascii_digit() || ",; ".contains(c)) {
        trimmed
            .split(';')
            .map(|g| {
                g.split(',')
                    .map(|v| v.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Usage(format!("bad --facets list '{}': {}", spec, e)))?
    } else {
        let path = Path::new(trimmed);
        let value = read_json_value(path)?;
        let value = match value {
            Value::Object(mut o) => o.remove("facets").unwrap_or(Value::Null),
            v => v,
        };
        parse_json(path, value)?
    };
    Ok(complex_from_facets(facets, order)?)
}

/// A tensor file: dense entries or a decomposition.
pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    let value = read_json_value(path)?;
    let is_dense = value.get("entries").is_some();
    if is_dense {
        let d: DenseJson = parse_json(path, value)?;
        let shape = TensorShape::new(d.dims).map_err(|e| CliError::format(path, None, e.to_string()))?;
        DenseTensor::new(shape, d.entries).map_err(|e| CliError::format(path, None, e.to_string()))
    } else {
        Ok(match read_model_value(path, value)? {
            Model::Partition(f) => f.to_dense(),
            Model::Cp(m) => DenseTensor::from_fn(m.shape().clone(), |x| m.eval(x).expect("index from shape")),
        })
    }
}

/// Writes a dense tensor file.
pub fn write_tensor(path: &Path, tensor: &DenseTensor) -> Result<()> {
    write_json(
        path,
        &DenseJson {
            dims: tensor.shape().dims().to_vec(),
            entries: tensor.entries().to_vec(),
        },
    )
}

/// A fitted model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Hierarchical decomposition.
    Partition(FactorSet),
    /// CP model.
    Cp(CpModel),
}

impl Model {
    /// Tensor shape.
    pub fn shape(&self) -> &TensorShape {
        match self {
            Self::Partition(f) => f.shape(),
            Self::Cp(m) => m.shape(),
        }
    }

    /// Model value at `x`.
    pub fn eval(&self, x: &MultiIndex) -> postensor_core::Result<f64> {
        match self {
            Self::Partition(f) => postensor_core::factors::eval_decomposition(f, x),
            Self::Cp(m) => postensor_core::cp::cp_eval(m, x),
        }
    }
}

/// Reads a model file in either the decomposition or the CP layout.
pub fn read_model(path: &Path) -> Result<Model> {
    let value = read_json_value(path)?;
    read_model_value(path, value)
}

fn read_model_value(path: &Path, value: Value) -> Result<Model> {
    let bad = |e: postensor_core::Error| CliError::format(path, None, e.to_string());
    if value.get("rank").is_some() {
        let c: CpJson = parse_json(path, value)?;
        let shape = TensorShape::new(c.dims).map_err(bad)?;
        if c.factors.len() != shape.order() {
            return Err(CliError::format(
                path,
                None,
                format!(
                    "{} factor matrices for an order-{} tensor",
                    c.factors.len(),
                    shape.order()
                ),
            ));
        }
        let mut flat = Vec::with_capacity(c.factors.len());
        for (i, rows) in c.factors.into_iter().enumerate() {
            if rows.len() != shape.dim(i + 1) || rows.iter().any(|r| r.len() != c.rank) {
                return Err(CliError::format(
                    path,
                    None,
                    format!("factor {} must be {} x {}", i + 1, shape.dim(i + 1), c.rank),
                ));
            }
            flat.push(rows.into_iter().flatten().collect());
        }
        return Ok(Model::Cp(CpModel::new(shape, c.rank, flat).map_err(bad)?));
    }
    if value.get("facets").is_some() {
        let d: PartitionJson = parse_json(path, value)?;
        let shape = TensorShape::new(d.dims).map_err(bad)?;
        let complex = complex_from_facets(d.facets, shape.order()).map_err(bad)?;
        let bound = match d.bound {
            Some(m) => m,
            None => implied_bound(&d.factors),
        };
        return Ok(Model::Partition(
            FactorSet::new(shape, complex, d.factors, bound).map_err(bad)?,
        ));
    }
    Err(CliError::format(
        path,
        None,
        "unknown model layout: expected \"facets\" or \"rank\"",
    ))
}

fn implied_bound(factors: &[Vec<f64>]) -> f64 {
    let big = factors
        .iter()
        .flatten()
        .filter(|v| **v > 0.0)
        .map(|&v| v.max(1.0 / v).sqrt())
        .fold(2.0, f64::max);
    if big.is_finite() {
        big
    } else {
        2.0
    }
}

/// Writes a model file.
pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    match model {
        Model::Partition(f) => write_json(
            path,
            &PartitionJson {
                dims: f.shape().dims().to_vec(),
                facets: f.complex().facets().to_vec(),
                factors: f.factors().to_vec(),
                bound: Some(f.bound()),
            },
        ),
        Model::Cp(m) => {
            let q = m.rank();
            let factors = m
                .factors()
                .iter()
                .map(|f| f.chunks(q).map(|r| r.to_vec()).collect())
                .collect();
            write_json(
                path,
                &CpJson {
                    dims: m.shape().dims().to_vec(),
                    rank: q,
                    factors,
                },
            )
        }
    }
}

/// Column name to ordered levels; level `i` in the list is coded as `i + 1`.
pub type LevelMap = BTreeMap<String, Vec<String>>;

/// Reads a level-map sidecar.
pub fn read_levels(path: &Path) -> Result<LevelMap> {
    let value = read_json_value(path)?;
    let map: LevelMap = parse_json(path, value)?;
    for (col, levels) in &map {
        let mut sorted = levels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != levels.len() {
            return Err(CliError::format(
                path,
                None,
                format!("column '{}' lists a level twice", col),
            ));
        }
    }
    Ok(map)
}

/// Parsed observation or query table.
#[derive(Debug, Clone)]
pub struct Table {
    /// Shape the indices were checked against.
    pub shape: TensorShape,
    /// Index columns in file order.
    pub columns: Vec<String>,
    /// Indices, one per data row.
    pub indices: Vec<MultiIndex>,
    /// `y` values, when the file has a `y` column.
    pub values: Option<Vec<f64>>,
}

impl Table {
    /// Observations with `y` raised to at least `floor`.
    pub fn observations(&self, path: &Path, floor: Option<f64>) -> Result<ObservationSet> {
        let values = self
            .values
            .as_ref()
            .ok_or_else(|| CliError::format(path, Some(1), "missing column 'y'"))?;
        let records = self
            .indices
            .iter()
            .zip(values)
            .map(|(x, &y)| Observation {
                x: x.clone(),
                y: floor.map_or(y, |f| y.max(f)),
            })
            .collect();
        Ok(ObservationSet::new(self.shape.clone(), records)?)
    }
}

/// Reads a CSV with a header row. Every column other than `y` is an index
/// column; columns named in `levels` hold category labels, the rest 1-based
/// integers. Without `dims` each dimension is the number of levels or the
/// largest index seen.
pub fn read_table(path: &Path, dims: Option<&[usize]>, levels: Option<&LevelMap>, require_y: bool) -> Result<Table> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::format(path, Some(1), e.to_string()))?
        .clone();
    let y_col = header.iter().position(|h| h == "y");
    if require_y && y_col.is_none() {
        return Err(CliError::format(path, Some(1), "missing column 'y'"));
    }
    let columns: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != y_col)
        .map(|(_, h)| h.to_string())
        .collect();
    if columns.is_empty() {
        return Err(CliError::format(path, Some(1), "no index columns"));
    }
    if let Some(d) = dims {
        if d.len() != columns.len() {
            return Err(CliError::format(
                path,
                Some(1),
                format!("{} index columns but {} dims", columns.len(), d.len()),
            ));
        }
    }
    let empty = LevelMap::new();
    let levels = levels.unwrap_or(&empty);
    if let Some(unknown) = levels.keys().find(|k| !columns.contains(k)) {
        return Err(CliError::Usage(format!(
            "level map names column '{}' absent from {}",
            unknown,
            path.display()
        )));
    }
    let lookup: Vec<Option<BTreeMap<&str, usize>>> = columns
        .iter()
        .map(|c| {
            levels
                .get(c)
                .map(|ls| ls.iter().enumerate().map(|(i, l)| (l.as_str(), i + 1)).collect())
        })
        .collect();

    let mut coords_rows = Vec::new();
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::format(path, e.position().map(|p| p.line()), e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let mut coords = Vec::with_capacity(columns.len());
        let mut col = 0;
        for (i, field) in rec.iter().enumerate() {
            if Some(i) == y_col {
                let y: f64 = field
                    .parse()
                    .map_err(|_| CliError::format(path, line, format!("column 'y': '{}' is not a number", field)))?;
                if !(y.is_finite() && y > 0.0) {
                    return Err(CliError::format(
                        path,
                        line,
                        format!("column 'y': value {} must be positive", y),
                    ));
                }
                values.push(y);
                continue;
            }
            let v = match &lookup[col] {
                Some(map) => *map.get(field).ok_or_else(|| {
                    CliError::format(
                        path,
                        line,
                        format!("column '{}': unknown level '{}'", columns[col], field),
                    )
                })?,
                None => field.parse::<usize>().ok().filter(|&v| v >= 1).ok_or_else(|| {
                    CliError::format(
                        path,
                        line,
                        format!("column '{}': '{}' is not a 1-based index", columns[col], field),
                    )
                })?,
            };
            if let Some(d) = dims {
                if v > d[col] {
                    return Err(CliError::format(
                        path,
                        line,
                        format!("column '{}': index {} exceeds dimension {}", columns[col], v, d[col]),
                    ));
                }
            }
            coords.push(v);
            col += 1;
        }
        coords_rows.push(coords);
    }
    if coords_rows.is_empty() {
        return Err(CliError::format(path, None, "no data rows"));
    }
    let dims: Vec<usize> = match dims {
        Some(d) => d.to_vec(),
        None => (0..columns.len())
            .map(|c| match &lookup[c] {
                Some(map) => map.len(),
                None => coords_rows.iter().map(|r| r[c]).max().unwrap_or(1),
            })
            .collect(),
    };
    let shape = TensorShape::new(dims).map_err(|e| CliError::format(path, None, e.to_string()))?;
    let indices = coords_rows
        .into_iter()
        .map(|c| MultiIndex::new(c).expect("validated coordinates"))
        .collect();
    Ok(Table {
        shape,
        columns,
        indices,
        values: y_col.map(|_| values),
    })
}

/// Shortest round-trip decimal, in exponent form for very small or large
/// magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{:e}", v)
    } else {
        v.to_string()
    }
}

/// Writes observations as `x1,…,xp,y`.
pub fn write_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    let p = obs.shape().order();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=p).map(|i| format!("x{}", i)).collect();
    header.push("y".into());
    w.write_record(&header).expect("in-memory write");
    for r in obs.records() {
        let mut row: Vec<String> = r.x.coords().iter().map(|c| c.to_string()).collect();
        row.push(format_number(r.y));
        w.write_record(&row).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_text(path, &String::from_utf8(bytes).expect("ascii output"))
}

/// Writes rows of already formatted cells under `header`.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_text(path, &String::from_utf8(bytes).expect("utf-8 output"))
}
