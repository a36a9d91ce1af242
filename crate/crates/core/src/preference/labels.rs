use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dominance::{compare_scores, nondominated_sort, FrontAssignment};
use crate::error::{Error, Result};
use crate::metrics::hypervolume;

/// Tie-break used for pairs of points in the same front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiversityCriterion {
    Crowding,
    #[serde(rename = "hypervolume")]
    HypervolumeImprovement,
    None,
}

impl DiversityCriterion {
    pub const ALL: [DiversityCriterion; 3] = [
        DiversityCriterion::Crowding,
        DiversityCriterion::HypervolumeImprovement,
        DiversityCriterion::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DiversityCriterion::Crowding => "crowding",
            DiversityCriterion::HypervolumeImprovement => "hypervolume",
            DiversityCriterion::None => "none",
        }
    }
}

impl fmt::Display for DiversityCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DiversityCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crowding" => Ok(DiversityCriterion::Crowding),
            "hypervolume" | "hv" | "hypervolume-improvement" => {
                Ok(DiversityCriterion::HypervolumeImprovement)
            }
            "none" => Ok(DiversityCriterion::None),
            _ => Err(Error::Config(format!("unknown diversity criterion `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    StrictDominance,
    Diversity,
}

/// An ordered pair `(a, b)`; `label` is 1 when `a` is preferred over `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreferencePair {
    pub a: usize,
    pub b: usize,
    pub label: u8,
    pub provenance: Provenance,
}

/// Exclusive hypervolume of `front[index]`: `HV(front) − HV(front \ {index})`.
pub fn hv_improvement_score<P: AsRef<[f64]>>(
    index: usize,
    front: &[P],
    reference: &[f64],
) -> Result<f64> {
    if index >= front.len() {
        return Err(Error::Range(format!("index {index} outside front of {}", front.len())));
    }
    let all: Vec<&[f64]> = front.iter().map(|p| p.as_ref()).collect();
    let mut rest = all.clone();
    rest.remove(index);
    Ok((hypervolume(&all, reference)? - hypervolume(&rest, reference)?).max(0.0))
}

/// Exclusive hypervolume contribution of every point of `front`.
pub fn hv_contributions<P: AsRef<[f64]>>(front: &[P], reference: &[f64]) -> Result<Vec<f64>> {
    let pts: Vec<&[f64]> = front.iter().map(|p| p.as_ref()).collect();
    if reference.len() == 2 {
        return Ok(contributions_2d(&pts, reference));
    }
    let total = hypervolume(&pts, reference)?;
    (0..pts.len())
        .map(|i| {
            let mut rest = pts.clone();
            rest.remove(i);
            Ok((total - hypervolume(&rest, reference)?).max(0.0))
        })
        .collect()
}

fn contributions_2d(pts: &[&[f64]], reference: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pts.len()];
    let mut order: Vec<usize> = (0..pts.len())
        .filter(|&i| pts[i][0] < reference[0] && pts[i][1] < reference[1])
        .collect();
    order.sort_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(pts[a][1].total_cmp(&pts[b][1])));
    // Staircase of points not weakly dominated by an earlier one.
    let mut stair: Vec<usize> = Vec::new();
    let mut best = f64::INFINITY;
    for &i in &order {
        if pts[i][1] < best {
            stair.push(i);
            best = pts[i][1];
        }
    }
    for (k, &i) in stair.iter().enumerate() {
        let right = stair.get(k + 1).map_or(reference[0], |&j| pts[j][0]);
        let above = if k == 0 { reference[1] } else { pts[stair[k - 1]][1] };
        let exclusive = (right - pts[i][0]) * (above - pts[i][1]);
        // A duplicate of a staircase point shares its region, so neither owns it.
        let duplicated = order.iter().any(|&j| j != i && pts[j] == pts[i]);
        out[i] = if duplicated { 0.0 } else { exclusive };
    }
    out
}

/// Assigns pair labels from front membership, with a diversity score as the
/// within-front tie-break.
#[derive(Debug, Clone)]
pub struct PairLabeler {
    fronts: FrontAssignment,
    criterion: DiversityCriterion,
    scores: Vec<f64>,
}

impl PairLabeler {
    /// Sorts `objectives` into fronts and computes diversity scores.
    /// `hv_reference` is used only by the hypervolume criterion.
    pub fn new<P: AsRef<[f64]>>(
        objectives: &[P],
        criterion: DiversityCriterion,
        hv_reference: &[f64],
    ) -> Result<Self> {
        let fronts = nondominated_sort(objectives);
        Self::from_fronts(objectives, fronts, criterion, hv_reference)
    }

    pub fn from_fronts<P: AsRef<[f64]>>(
        objectives: &[P],
        fronts: FrontAssignment,
        criterion: DiversityCriterion,
        hv_reference: &[f64],
    ) -> Result<Self> {
        let scores = match criterion {
            DiversityCriterion::Crowding => fronts.crowding.clone(),
            DiversityCriterion::None => vec![0.0; fronts.len()],
            DiversityCriterion::HypervolumeImprovement => {
                let mut scores = vec![0.0; fronts.len()];
                for members in fronts.fronts() {
                    let pts: Vec<&[f64]> = members.iter().map(|&i| objectives[i].as_ref()).collect();
                    for (&i, c) in members.iter().zip(hv_contributions(&pts, hv_reference)?) {
                        scores[i] = c;
                    }
                }
                scores
            }
        };
        Ok(Self {
            fronts,
            criterion,
            scores,
        })
    }

    pub fn fronts(&self) -> &FrontAssignment {
        &self.fronts
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn criterion(&self) -> DiversityCriterion {
        self.criterion
    }

    /// `None` when the pair carries no preference (same point, or same
    /// front with equal scores or no criterion).
    pub fn label(&self, a: usize, b: usize) -> Option<PreferencePair> {
        if a == b {
            return None;
        }
        let pair = |label, provenance| {
            Some(PreferencePair {
                a,
                b,
                label,
                provenance,
            })
        };
        match self.fronts.front[a].cmp(&self.fronts.front[b]) {
            Ordering::Less => pair(1, Provenance::StrictDominance),
            Ordering::Greater => pair(0, Provenance::StrictDominance),
            Ordering::Equal => {
                if self.criterion == DiversityCriterion::None {
                    return None;
                }
                match compare_scores(self.scores[a], self.scores[b]) {
                    Ordering::Greater => pair(1, Provenance::Diversity),
                    Ordering::Less => pair(0, Provenance::Diversity),
                    Ordering::Equal => None,
                }
            }
        }
    }

    /// Whether at least one pair receives a label.
    pub fn has_labelable_pairs(&self) -> bool {
        let fronts = self.fronts.fronts();
        if fronts.len() > 1 {
            return true;
        }
        if self.criterion == DiversityCriterion::None {
            return false;
        }
        fronts.iter().any(|members| {
            members
                .iter()
                .any(|&i| compare_scores(self.scores[i], self.scores[members[0]]).is_ne())
        })
    }
}
