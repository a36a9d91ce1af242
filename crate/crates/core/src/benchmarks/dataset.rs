use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::problems::Problem;
use crate::error::{Error, Result};
use crate::metrics::ObjectiveStats;
use crate::preference::{nondominated_indices, nondominated_sort, FrontAssignment};
use crate::rng::{stream, StreamTag};

/// Share of rows used for training; the rest validate.
pub const TRAIN_FRACTION: f64 = 0.9;

/// Smallest dataset `generate_dataset` accepts.
pub const MIN_GENERATED_ROWS: usize = 100;

/// Maps `x` from `[lower, upper]` to `[−1, 1]` per variable.
pub fn normalize_design(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| -1.0 + 2.0 * (v - lo) / (hi - lo))
        .collect()
}

/// Inverse of [`normalize_design`].
pub fn denormalize_design(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| lo + (v + 1.0) * 0.5 * (hi - lo))
        .collect()
}

/// Offline design/objective pairs with frozen normalization statistics.
///
/// Raw designs are the source of truth; the normalized copy is derived
/// from them and the variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    problem: Option<Problem>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x_raw: Array2<f64>,
    x: Array2<f64>,
    y: Array2<f64>,
    objective_stats: ObjectiveStats,
    train: Vec<usize>,
    valid: Vec<usize>,
    split_seed: u64,
}

fn random_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, StreamTag::DatasetSplit, 0));
    let mut n_train = (TRAIN_FRACTION * n as f64).floor() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let mut train = perm[..n_train].to_vec();
    let mut valid = perm[n_train..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

impl OfflineDataset {
    /// Builds a dataset with a fresh 90/10 split and objective statistics
    /// taken from `y`.
    pub fn new(
        problem: Option<Problem>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        x_raw: Array2<f64>,
        y: Array2<f64>,
        split_seed: u64,
    ) -> Result<Self> {
        let rows: Vec<&[f64]> = y.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
        let stats = ObjectiveStats::from_rows(&rows)?;
        let (train, valid) = random_split(x_raw.nrows(), split_seed);
        Self::from_parts(problem, lower, upper, x_raw, y, stats, train, valid, split_seed)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        problem: Option<Problem>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        x_raw: Array2<f64>,
        y: Array2<f64>,
        objective_stats: ObjectiveStats,
        train: Vec<usize>,
        valid: Vec<usize>,
        split_seed: u64,
    ) -> Result<Self> {
        let (n, d) = x_raw.dim();
        if y.nrows() != n {
            return Err(Error::Shape(format!("{n} designs but {} objective rows", y.nrows())));
        }
        if lower.len() != d || upper.len() != d {
            return Err(Error::Shape(format!("bounds do not match {d} variables")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u)) {
            return Err(Error::Config("variable bounds must be finite with lower < upper".into()));
        }
        if objective_stats.n_obj() != y.ncols() {
            return Err(Error::Shape("objective statistics do not match objectives".into()));
        }
        if let Some(p) = &problem {
            if p.dim() != d || p.n_obj() != y.ncols() {
                return Err(Error::Shape(format!(
                    "{} is {}×{}, data is {d}×{}",
                    p.name(),
                    p.dim(),
                    p.n_obj(),
                    y.ncols()
                )));
            }
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&valid) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("split index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("split does not cover every row".into()));
        }
        if x_raw.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contains non-finite values".into()));
        }
        let mut x = Array2::zeros((n, d));
        for (mut out, row) in x.rows_mut().into_iter().zip(x_raw.rows()) {
            let raw = row.to_vec();
            for (o, v) in out.iter_mut().zip(normalize_design(&raw, &lower, &upper)) {
                *o = v;
            }
        }
        Ok(Self {
            problem,
            lower,
            upper,
            x_raw,
            x,
            y,
            objective_stats,
            train,
            valid,
            split_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_obj(&self) -> usize {
        self.y.ncols()
    }

    pub fn problem(&self) -> Option<&Problem> {
        self.problem.as_ref()
    }

    pub fn problem_name(&self) -> Option<&'static str> {
        self.problem.as_ref().map(Problem::name)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Designs in normalized coordinates.
    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn x_raw(&self) -> ArrayView2<'_, f64> {
        self.x_raw.view()
    }

    /// Raw objective values.
    pub fn y(&self) -> ArrayView2<'_, f64> {
        self.y.view()
    }

    pub fn objective_stats(&self) -> &ObjectiveStats {
        &self.objective_stats
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn valid_indices(&self) -> &[usize] {
        &self.valid
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed
    }

    pub fn y_rows(&self) -> Vec<&[f64]> {
        self.y.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect()
    }

    /// Objectives mapped with the frozen statistics.
    pub fn normalized_objectives(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.y.raw_dim());
        for (mut o, row) in out.rows_mut().into_iter().zip(self.y.rows()) {
            let v = self
                .objective_stats
                .normalize(row.as_slice().expect("standard layout"))
                .expect("stats match objectives");
            o.assign(&ndarray::ArrayView1::from(&v));
        }
        out
    }

    /// Fronts and crowding distances over all rows.
    pub fn annotations(&self) -> FrontAssignment {
        nondominated_sort(&self.y_rows())
    }

    /// Indices of the non-dominated rows.
    pub fn nondominated(&self) -> Vec<usize> {
        nondominated_indices(&self.y_rows())
    }

    pub fn normalize_design(&self, x: &[f64]) -> Vec<f64> {
        normalize_design(x, &self.lower, &self.upper)
    }

    pub fn denormalize_design(&self, x: &[f64]) -> Vec<f64> {
        denormalize_design(x, &self.lower, &self.upper)
    }

    /// Rows `indices` (in the given order) with the same bounds and frozen
    /// statistics, re-split with the dataset's split seed.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Range(format!("row {bad} outside {} rows", self.len())));
        }
        let (train, valid) = random_split(indices.len(), self.split_seed);
        Self::from_parts(
            self.problem.clone(),
            self.lower.clone(),
            self.upper.clone(),
            self.x_raw.select(Axis(0), indices),
            self.y.select(Axis(0), indices),
            self.objective_stats.clone(),
            train,
            valid,
            self.split_seed,
        )
    }

    pub fn train_x(&self) -> Array2<f64> {
        self.x.select(Axis(0), &self.train)
    }

    pub fn valid_x(&self) -> Array2<f64> {
        self.x.select(Axis(0), &self.valid)
    }

    /// True objectives of normalized designs, via the dataset's problem.
    /// Designs are clamped to `[−1, 1]` first.
    pub fn evaluate_normalized(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let problem = self.problem.as_ref().ok_or_else(|| {
            Error::Unsupported(
                "dataset has no known problem, so designs cannot be evaluated".into(),
            )
        })?;
        if x.ncols() != self.dim() {
            return Err(Error::Shape(format!("designs have {} columns, expected {}", x.ncols(), self.dim())));
        }
        let mut out = Array2::zeros((x.nrows(), self.n_obj()));
        for (mut o, row) in out.rows_mut().into_iter().zip(x.rows()) {
            let clamped: Vec<f64> = row.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
            let mut raw = self.denormalize_design(&clamped);
            for ((v, lo), hi) in raw.iter_mut().zip(&self.lower).zip(&self.upper) {
                *v = v.clamp(*lo, *hi);
            }
            let y = problem.evaluate(&raw)?;
            o.assign(&ndarray::ArrayView1::from(&y));
        }
        Ok(out)
    }
}

/// `n` designs uniform in the problem's box, each row from its own stream.
pub fn generate_dataset(problem: &Problem, n: usize, seed: u64) -> Result<OfflineDataset> {
    if n < MIN_GENERATED_ROWS {
        return Err(Error::Config(format!(
            "datasets need at least {MIN_GENERATED_ROWS} rows, got {n}"
        )));
    }
    let (d, m) = (problem.dim(), problem.n_obj());
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, m));
    for i in 0..n {
        let mut rng = stream(seed, StreamTag::DatasetRows, i as u64);
        let row: Vec<f64> = problem
            .lower()
            .iter()
            .zip(problem.upper())
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect();
        let obj = problem.evaluate(&row)?;
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        y.row_mut(i).assign(&ndarray::ArrayView1::from(&obj));
    }
    OfflineDataset::new(
        Some(problem.clone()),
        problem.lower().to_vec(),
        problem.upper().to_vec(),
        x,
        y,
        seed,
    )
}

/// Number of rows `⌈fraction·n⌉` kept by pruning, robust to products
/// such as `0.3 · 10` landing just above an integer.
pub fn pruned_size(n: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("prune fraction {fraction} outside (0, 1]")));
    }
    let raw = fraction * n as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    Ok((k as usize).min(n))
}

/// Rows kept by [`prune_top_fraction`], ascending.
pub fn prune_indices<P: AsRef<[f64]>>(y: &[P], fraction: f64) -> Result<Vec<usize>> {
    let k = pruned_size(y.len(), fraction)?;
    let mut kept = nondominated_sort(y).dominance_order();
    kept.truncate(k);
    kept.sort_unstable();
    Ok(kept)
}

/// Keeps the best `⌈fraction·N⌉` rows by front, trimming the boundary front
/// by descending crowding distance. Objective statistics stay frozen.
pub fn prune_top_fraction(dataset: &OfflineDataset, fraction: f64) -> Result<OfflineDataset> {
    if fraction == 1.0 {
        return Ok(dataset.clone());
    }
    dataset.subset(&prune_indices(&dataset.y_rows(), fraction)?)
}
