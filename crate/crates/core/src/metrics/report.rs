use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference coordinate in normalized objective space.
pub const REFERENCE_COORD: f64 = 1.1;

/// Per-objective minimum and maximum frozen at dataset generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ObjectiveStats {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Shape(format!(
                "objective bounds of length {} and {}",
                min.len(),
                max.len()
            )));
        }
        if min.iter().zip(&max).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(Error::Config("objective bounds must be finite with min ≤ max".into()));
        }
        for (k, (a, b)) in min.iter().zip(&max).enumerate() {
            if a == b {
                log::warn!("objective {k} is constant ({a}); it normalizes to 0");
            }
        }
        Ok(Self { min, max })
    }

    /// Column-wise range of `y`.
    pub fn from_rows<P: AsRef<[f64]>>(y: &[P]) -> Result<Self> {
        let first = y
            .first()
            .ok_or_else(|| Error::Shape("no objective rows".into()))?
            .as_ref();
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in y {
            let row = row.as_ref();
            if row.len() != min.len() {
                return Err(Error::Shape("ragged objective rows".into()));
            }
            for k in 0..row.len() {
                min[k] = min[k].min(row[k]);
                max[k] = max[k].max(row[k]);
            }
        }
        Self::new(min, max)
    }

    pub fn n_obj(&self) -> usize {
        self.min.len()
    }

    /// Maps `y` linearly so the frozen minimum goes to −1 and the maximum
    /// to +1; values outside the range extrapolate.
    pub fn normalize(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_obj() {
            return Err(Error::Shape(format!(
                "objective vector of length {}, expected {}",
                y.len(),
                self.n_obj()
            )));
        }
        Ok(y.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| {
                if hi > lo {
                    -1.0 + 2.0 * (v - lo) / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn reference_point(&self) -> Vec<f64> {
        vec![REFERENCE_COORD; self.n_obj()]
    }
}

/// Objective vectors in normalized space with their reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedObjectives {
    pub values: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

pub fn normalize_objectives<P: AsRef<[f64]>>(
    y: &[P],
    stats: &ObjectiveStats,
) -> Result<NormalizedObjectives> {
    let values = y
        .iter()
        .map(|row| stats.normalize(row.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedObjectives { values, reference: stats.reference_point() })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    /// `None` when `values` is empty. One value has σ = 0.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, count: values.len() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedIndicators {
    pub seed: u64,
    pub hypervolume: f64,
    pub delta_spread: Option<f64>,
}

/// Indicators of one method on one task across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorReport {
    pub task: String,
    pub method: String,
    pub seeds: Vec<SeedIndicators>,
}

impl IndicatorReport {
    pub fn hypervolume(&self) -> Option<Summary> {
        Summary::of(&self.seeds.iter().map(|s| s.hypervolume).collect::<Vec<_>>())
    }

    /// Over the seeds where Δ-spread is defined.
    pub fn delta_spread(&self) -> Option<Summary> {
        Summary::of(&self.seeds.iter().filter_map(|s| s.delta_spread).collect::<Vec<_>>())
    }
}

/// Average ranks per method, across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub tasks: Vec<String>,
    pub methods: Vec<String>,
    /// `[task][method]`; `None` where the method has no value on the task.
    pub hypervolume_ranks: Vec<Vec<Option<f64>>>,
    pub spread_ranks: Vec<Vec<Option<f64>>>,
    pub mean_hypervolume_rank: Vec<f64>,
    pub mean_spread_rank: Vec<f64>,
}

/// 1-based ranks; tied values share the average of their positions.
/// `higher_is_better` orders descending.
pub fn average_ranks(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if higher_is_better {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn rank_column(
    tasks: &[String],
    methods: &[String],
    means: &BTreeMap<(usize, usize), f64>,
    higher_is_better: bool,
) -> (Vec<Vec<Option<f64>>>, Vec<f64>) {
    let mut table = vec![vec![None; methods.len()]; tasks.len()];
    for (t, row) in table.iter_mut().enumerate() {
        let present: Vec<usize> = (0..methods.len()).filter(|m| means.contains_key(&(t, *m))).collect();
        let values: Vec<f64> = present.iter().map(|m| means[&(t, *m)]).collect();
        for (m, r) in present.iter().zip(average_ranks(&values, higher_is_better)) {
            row[*m] = Some(r);
        }
    }
    let averages = (0..methods.len())
        .map(|m| {
            let rs: Vec<f64> = table.iter().filter_map(|row| row[m]).collect();
            if rs.is_empty() {
                f64::NAN
            } else {
                rs.iter().sum::<f64>() / rs.len() as f64
            }
        })
        .collect();
    (table, averages)
}

/// Ranks methods per task by mean hypervolume (descending) and mean
/// Δ-spread (ascending), then averages ranks over tasks.
pub fn aggregate(reports: &[IndicatorReport]) -> Result<RankTable> {
    let mut tasks: Vec<String> = reports.iter().map(|r| r.task.clone()).collect();
    let mut methods: Vec<String> = reports.iter().map(|r| r.method.clone()).collect();
    tasks.sort();
    tasks.dedup();
    methods.sort();
    methods.dedup();
    if methods.len() < 2 {
        return Err(Error::Config("ranking needs at least two methods".into()));
    }
    let mut hv = BTreeMap::new();
    let mut spread = BTreeMap::new();
    for r in reports {
        let t = tasks.binary_search(&r.task).expect("task listed");
        let m = methods.binary_search(&r.method).expect("method listed");
        if hv.contains_key(&(t, m)) {
            return Err(Error::Config(format!(
                "duplicate report for {} on {}",
                r.method, r.task
            )));
        }
        if let Some(s) = r.hypervolume() {
            hv.insert((t, m), s.mean);
        }
        if let Some(s) = r.delta_spread() {
            spread.insert((t, m), s.mean);
        }
    }
    let (hypervolume_ranks, mean_hypervolume_rank) = rank_column(&tasks, &methods, &hv, true);
    let (spread_ranks, mean_spread_rank) = rank_column(&tasks, &methods, &spread, false);
    Ok(RankTable {
        tasks,
        methods,
        hypervolume_ranks,
        spread_ranks,
        mean_hypervolume_rank,
        mean_spread_rank,
    })
}
