use crate::preference::nondominated_indices;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Δ-spread of the non-dominated subset of `points`.
///
/// Consecutive distances follow the first-objective order. With known front
/// `extremes`, each contributes its distance to the nearest point of the set;
/// without them that term is zero. Returns `None` when fewer than two
/// non-dominated points remain or the set has no extent at all.
pub fn delta_spread<P: AsRef<[f64]>, E: AsRef<[f64]>>(
    points: &[P],
    extremes: Option<&[E]>,
) -> Option<f64> {
    let mut front: Vec<&[f64]> = nondominated_indices(points)
        .into_iter()
        .map(|i| points[i].as_ref())
        .collect();
    if front.len() < 2 {
        return None;
    }
    front.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let gaps: Vec<f64> = front.windows(2).map(|w| distance(w[0], w[1])).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let extreme_term: f64 = extremes.map_or(0.0, |ext| {
        ext.iter()
            .map(|e| {
                front
                    .iter()
                    .map(|p| distance(p, e.as_ref()))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    });
    let deviation: f64 = gaps.iter().map(|d| (d - mean).abs()).sum();
    let denominator = extreme_term + gaps.len() as f64 * mean;
    if denominator <= 0.0 {
        return None;
    }
    Some((extreme_term + deviation) / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const NONE: Option<&[[f64; 2]]> = None;

    fn line(ts: &[f64]) -> Vec<[f64; 2]> {
        ts.iter().map(|&t| [t, 1.0 - t]).collect()
    }

    #[test]
    fn uniform_front_has_zero_spread() {
        let pts = line(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_relative_eq!(delta_spread(&pts, NONE).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn uneven_three_point_front() {
        // Gaps along the line scale both sums by √2, which cancels.
        let pts = line(&[0.0, 0.1, 1.0]);
        assert_relative_eq!(delta_spread(&pts, NONE).unwrap(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn duplicating_points_raises_spread() {
        let base = line(&[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        let doubled: Vec<[f64; 2]> = base.iter().flat_map(|p| [*p, *p]).collect();
        let before = delta_spread(&base, NONE).unwrap();
        let after = delta_spread(&doubled, NONE).unwrap();
        assert!(after > before);
        // Gaps 0,g,0,g,0,g,0: mean 3g/7, deviations 4·3g/7 + 3·4g/7 over 3g.
        assert_relative_eq!(after, 8.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn dominated_points_are_ignored() {
        let mut pts = line(&[0.0, 0.5, 1.0]);
        pts.push([0.9, 0.9]);
        assert_relative_eq!(delta_spread(&pts, NONE).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn known_extremes_add_their_distance() {
        let pts = line(&[0.25, 0.5, 0.75]);
        let ext = [[0.0, 1.0], [1.0, 0.0]];
        let g = 0.25 * 2f64.sqrt();
        let expected = (2.0 * g) / (2.0 * g + 2.0 * g);
        assert_relative_eq!(delta_spread(&pts, Some(&ext[..])).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_sets_are_undefined() {
        assert!(delta_spread(&[[0.0, 0.0]], NONE).is_none());
        assert!(delta_spread(&[[0.0, 0.0], [1.0, 1.0]], NONE).is_none());
        assert!(delta_spread(&[[0.5, 0.5], [0.5, 0.5]], NONE).is_none());
    }
}
