//! CSV datasets with a JSON metadata sidecar.
//!
//! The CSV header is `x0..x{d-1},y0..y{m-1}`, optionally followed by
//! `front,crowding`. Values are written with 17 significant digits so a
//! save/load round trip is exact.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::OfflineDataset;
use super::problems::{Problem, ProblemKind};
use crate::error::{Error, Result};
use crate::metrics::ObjectiveStats;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    /// `None` for external data without a known evaluator.
    pub problem: Option<ProblemKind>,
    pub dim: usize,
    pub n_obj: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective_min: Vec<f64>,
    pub objective_max: Vec<f64>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub split_seed: u64,
}

/// `<path>.meta.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Text form used in every CSV this crate writes.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn dataset_header(dim: usize, n_obj: usize) -> Vec<String> {
    (0..dim)
        .map(|i| format!("x{i}"))
        .chain((0..n_obj).map(|i| format!("y{i}")))
        .collect()
}

/// Writes the CSV (raw designs and objectives) and its sidecar. With
/// `annotate`, front index and crowding distance columns are appended.
pub fn save_dataset(path: &Path, dataset: &OfflineDataset, annotate: bool) -> Result<()> {
    let mut header = dataset_header(dataset.dim(), dataset.n_obj());
    let annotations = annotate.then(|| dataset.annotations());
    if annotate {
        header.push("front".into());
        header.push("crowding".into());
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..dataset.len() {
        let mut fields: Vec<String> = dataset
            .x_raw()
            .row(i)
            .iter()
            .chain(dataset.y().row(i).iter())
            .map(|&v| format_value(v))
            .collect();
        if let Some(a) = &annotations {
            fields.push(a.front[i].to_string());
            fields.push(format_value(a.crowding[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;

    let stats = dataset.objective_stats();
    let meta = DatasetMeta {
        format_version: DATASET_FORMAT_VERSION,
        problem: dataset.problem().map(Problem::kind),
        dim: dataset.dim(),
        n_obj: dataset.n_obj(),
        lower: dataset.lower().to_vec(),
        upper: dataset.upper().to_vec(),
        objective_min: stats.min.clone(),
        objective_max: stats.max.clone(),
        train: dataset.train_indices().to_vec(),
        valid: dataset.valid_indices().to_vec(),
        split_seed: dataset.split_seed(),
    };
    let meta_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Checkpoint(format!("cannot encode metadata: {e}")))?;
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parsed CSV body: raw designs and objectives.
struct Table {
    x: Array2<f64>,
    y: Array2<f64>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            other => parse_err(path, 1, format!("{other:?}")),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let dim = header.iter().take_while(|h| h.starts_with('x')).count();
    let n_obj = header[dim..].iter().take_while(|h| h.starts_with('y')).count();
    let expected = dataset_header(dim, n_obj);
    if dim == 0 || n_obj == 0 || header[..dim + n_obj] != expected[..] {
        return Err(parse_err(path, 1, format!("header must be x0..x{{d-1}},y0..y{{m-1}}, got `{}`", header.join(","))));
    }
    let extra = &header[dim + n_obj..];
    if !(extra.is_empty() || extra == ["front", "crowding"]) {
        return Err(parse_err(path, 1, format!("unexpected columns `{}`", extra.join(","))));
    }
    let width = header.len();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for field in record.iter().take(dim + n_obj) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value `{field}`")));
            }
            values.push(v);
        }
    }
    let n = values.len() / (dim + n_obj);
    let all = Array2::from_shape_vec((n, dim + n_obj), values).expect("row widths checked");
    Ok(Table {
        x: all.slice(ndarray::s![.., ..dim]).to_owned(),
        y: all.slice(ndarray::s![.., dim..]).to_owned(),
    })
}

/// Loads a dataset CSV. Without a sidecar, the data are treated as
/// external: bounds and objective statistics come from the observed range,
/// the split uses seed 0, and no evaluator is attached.
pub fn load_dataset(path: &Path) -> Result<OfflineDataset> {
    let table = read_table(path)?;
    let (n, dim) = table.x.dim();
    if n == 0 {
        return Err(parse_err(path, 2, "dataset has no rows"));
    }
    let meta_path = sidecar_path(path);
    if !meta_path.exists() {
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for col in table.x.columns() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.0 } else { 0.5 };
            lower.push(lo - pad);
            upper.push(hi + pad);
        }
        return OfflineDataset::new(None, lower, upper, table.x, table.y, 0);
    }
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| parse_err(&meta_path, e.line() as u64, e.to_string()))?;
    if meta.format_version != DATASET_FORMAT_VERSION {
        return Err(parse_err(
            &meta_path,
            1,
            format!("unsupported dataset format version {}", meta.format_version),
        ));
    }
    if meta.dim != dim || meta.n_obj != table.y.ncols() {
        return Err(parse_err(
            &meta_path,
            1,
            format!(
                "metadata declares {}×{}, file has {dim}×{}",
                meta.dim,
                meta.n_obj,
                table.y.ncols()
            ),
        ));
    }
    let problem = meta
        .problem
        .map(|kind| Problem::new(kind, meta.dim, meta.n_obj))
        .transpose()?;
    let stats = ObjectiveStats::new(meta.objective_min, meta.objective_max)?;
    OfflineDataset::from_parts(
        problem,
        meta.lower,
        meta.upper,
        table.x,
        table.y,
        stats,
        meta.train,
        meta.valid,
        meta.split_seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::generate_dataset;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let p = Problem::by_name("dtlz7").unwrap();
        let ds = generate_dataset(&p, 150, 8).unwrap();
        save_dataset(&path, &ds, true).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.x_raw().iter().zip(ds.x_raw().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn annotation_columns_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate_dataset(&Problem::by_name("zdt1").unwrap(), 100, 1).unwrap();
        save_dataset(&path, &ds, true).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().ends_with("y1,front,crowding"));
        assert!(text.contains(",inf\n"));
    }

    #[test]
    fn short_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,x1,y0,y1\n0.1,0.2,1,2\n0.3,0.4,1\n").unwrap();
        match load_dataset(&path) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("expected 4 fields"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_and_number_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,z,y0\n1,2,3\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse { line: 1, .. })));
        std::fs::write(&path, "x0,y0\n1,2\nabc,3\n").unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn external_file_loads_without_evaluator() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ext.csv");
        let mut text = String::from("x0,x1,y0,y1\n");
        for i in 0..20 {
            let t = i as f64 / 19.0;
            text.push_str(&format!("{t},{},{t},{}\n", 1.0 - t, (1.0 - t) * (1.0 - t)));
        }
        std::fs::write(&path, text).unwrap();
        let ds = load_dataset(&path).unwrap();
        assert!(ds.problem().is_none());
        assert_eq!(ds.len(), 20);
        assert!(matches!(ds.evaluate_normalized(ds.x()), Err(Error::Unsupported(_))));
    }
}
