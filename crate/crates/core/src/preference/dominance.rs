use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Pareto dominance under minimization: `a` is no worse everywhere and
/// strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "objective vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strictly_better = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Front index (0 = non-dominated) and crowding distance of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontAssignment {
    pub front: Vec<usize>,
    /// Crowding distance within the point's own front; `+∞` for extremes.
    pub crowding: Vec<f64>,
}

impl FrontAssignment {
    pub fn len(&self) -> usize {
        self.front.len()
    }

    pub fn is_empty(&self) -> bool {
        self.front.is_empty()
    }

    pub fn num_fronts(&self) -> usize {
        self.front.iter().max().map_or(0, |&f| f + 1)
    }

    /// Point indices grouped by front, each group in ascending index order.
    pub fn fronts(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_fronts()];
        for (i, &f) in self.front.iter().enumerate() {
            out[f].push(i);
        }
        out
    }

    /// Indices ordered by (front ascending, crowding descending, index).
    pub fn dominance_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.front[a]
                .cmp(&self.front[b])
                .then_with(|| compare_scores(self.crowding[b], self.crowding[a]))
                .then(a.cmp(&b))
        });
        order
    }
}

/// Total order on diversity scores with `+∞` above every finite value.
pub(crate) fn compare_scores(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Indices of the non-dominated points (duplicates of a non-dominated point
/// are all kept).
pub fn nondominated_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    if points[0].as_ref().len() == 2 {
        return nondominated_2d(points);
    }
    (0..n)
        .filter(|&i| {
            let p = points[i].as_ref();
            !points.iter().any(|q| dominates_unchecked(q.as_ref(), p))
        })
        .collect()
}

fn nondominated_2d<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let key = |i: usize| (points[i].as_ref()[0], points[i].as_ref()[1]);
    order.sort_by(|&a, &b| {
        let (a0, a1) = key(a);
        let (b0, b1) = key(b);
        a0.total_cmp(&b0).then(a1.total_cmp(&b1))
    });
    let mut keep = Vec::new();
    let mut best_f2 = f64::INFINITY;
    let mut start = 0;
    while start < order.len() {
        // Identical points form a contiguous group and never dominate each other.
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        let f2 = key(order[start]).1;
        if f2 < best_f2 {
            keep.extend_from_slice(&order[start..end]);
            best_f2 = f2;
        }
        start = end;
    }
    keep.sort_unstable();
    keep
}

/// Fast non-dominated sorting followed by per-front crowding distances.
pub fn nondominated_sort<P: AsRef<[f64]>>(points: &[P]) -> FrontAssignment {
    let n = points.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let pi = points[i].as_ref();
        for j in (i + 1)..n {
            let pj = points[j].as_ref();
            if dominates_unchecked(pi, pj) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if dominates_unchecked(pj, pi) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }

    let mut front = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            front[i] = level;
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        current = next;
        level += 1;
    }

    let mut crowding = vec![0.0; n];
    let mut groups = vec![Vec::new(); level];
    for (i, &f) in front.iter().enumerate() {
        groups[f].push(i);
    }
    for members in groups {
        let pts: Vec<&[f64]> = members.iter().map(|&i| points[i].as_ref()).collect();
        for (&i, d) in members.iter().zip(crowding_distance(&pts)) {
            crowding[i] = d;
        }
    }
    FrontAssignment { front, crowding }
}

/// Crowding distance `Σ_i (y_i⁺ − y_i⁻)/(y_i^max − y_i^min)` over the
/// per-objective sorted order of `front`. Boundary points of each objective
/// get `+∞`; an objective with zero range contributes nothing. Fronts of
/// one or two points are all boundary.
pub fn crowding_distance<P: AsRef<[f64]>>(front: &[P]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut dist = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for obj in 0..m {
        let value = |i: usize| front[i].as_ref()[obj];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let lo = value(order[0]);
        let hi = value(order[n - 1]);
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        for k in 1..n - 1 {
            dist[order[k]] += (value(order[k + 1]) - value(order[k - 1])) / range;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dominance_cases() {
        assert!(dominates(&[1.0, 2.0], &[2.0, 3.0]).unwrap());
        assert!(!dominates(&[1.0, 2.0], &[1.0, 2.0]).unwrap());
        assert!(!dominates(&[1.0, 3.0], &[2.0, 2.0]).unwrap());
        assert!(!dominates(&[2.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(dominates(&[1.0, 2.0], &[1.0, 3.0]).unwrap());
        assert!(matches!(dominates(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn chain_and_leaders() {
        let chain = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert_eq!(nondominated_sort(&chain).front, vec![0, 1, 2]);
        let leaders = [[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        assert_eq!(nondominated_sort(&leaders).front, vec![0, 0, 1]);
    }

    #[test]
    fn crowding_hand_example() {
        let d = crowding_distance(&[[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert_eq!(d[1], 2.0);
    }

    #[test]
    fn small_fronts_are_all_boundary() {
        assert_eq!(crowding_distance(&[[0.0, 1.0], [1.0, 0.0]]), vec![f64::INFINITY; 2]);
        assert_eq!(crowding_distance(&[[0.3, 0.3]]), vec![f64::INFINITY]);
        assert!(crowding_distance::<[f64; 2]>(&[]).is_empty());
    }

    #[test]
    fn degenerate_objective_contributes_nothing() {
        // Second objective is constant: only the first one counts.
        let d = crowding_distance(&[[0.0, 5.0], [0.25, 5.0], [1.0, 5.0], [0.5, 5.0]]);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert_eq!(d[1], 0.5);
        assert_eq!(d[3], 0.75);
    }

    #[test]
    fn nondominated_filter_keeps_duplicates() {
        let pts = [[0.0, 1.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5], [0.0, 2.0]];
        assert_eq!(nondominated_indices(&pts), vec![0, 1, 2, 4]);
        let pts3 = [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]];
        assert_eq!(nondominated_indices(&pts3), vec![0, 1]);
    }

    #[test]
    fn dominance_order_breaks_ties_by_crowding() {
        let fa = FrontAssignment {
            front: vec![1, 0, 0, 0],
            crowding: vec![f64::INFINITY, 1.0, f64::INFINITY, 3.0],
        };
        assert_eq!(fa.dominance_order(), vec![2, 3, 1, 0]);
        assert_eq!(fa.fronts(), vec![vec![1, 2, 3], vec![0]]);
    }
}
