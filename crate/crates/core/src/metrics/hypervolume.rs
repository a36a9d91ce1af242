use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::nondominated_indices;
use crate::rng::{stream, StreamTag};

/// Monte Carlo sample count used above three objectives.
pub const DEFAULT_MC_SAMPLES: usize = 2_000_000;

/// A hypervolume value with its standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvEstimate {
    pub value: f64,
    pub std_error: f64,
    pub exact: bool,
}

/// Points that strictly dominate `reference`, after shape checks.
fn inside<'a, P: AsRef<[f64]>>(points: &'a [P], reference: &[f64]) -> Result<Vec<&'a [f64]>> {
    if reference.is_empty() {
        return Err(Error::Shape("reference point is empty".into()));
    }
    let mut out = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        if p.len() != reference.len() {
            return Err(Error::Shape(format!(
                "point {i} has {} objectives, reference has {}",
                p.len(),
                reference.len()
            )));
        }
        if p.iter().zip(reference).all(|(a, r)| a < r) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Area dominated by 2-D points (all strictly inside the reference box).
fn sweep_2d(points: &mut [[f64; 2]], reference: [f64; 2]) -> f64 {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in points.iter() {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

/// Volume dominated by 3-D points, slicing along the last objective.
fn slice_3d(points: &[&[f64]], reference: &[f64]) -> f64 {
    let mut pts: Vec<&[f64]> = points.to_vec();
    pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let mut volume = 0.0;
    let mut layer: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    let mut i = 0;
    while i < pts.len() {
        let z = pts[i][2];
        while i < pts.len() && pts[i][2] == z {
            layer.push([pts[i][0], pts[i][1]]);
            i += 1;
        }
        let next = if i < pts.len() { pts[i][2] } else { reference[2] };
        // Keep only the layer's staircase so later sweeps stay short.
        let area = sweep_2d(&mut layer, [reference[0], reference[1]]);
        let mut ceiling = f64::INFINITY;
        layer.retain(|p| {
            let keep = p[1] < ceiling;
            if keep {
                ceiling = p[1];
            }
            keep
        });
        volume += area * (next - z);
    }
    volume
}

/// Exact hypervolume for up to three objectives.
fn exact(points: &[&[f64]], reference: &[f64]) -> f64 {
    match reference.len() {
        1 => points
            .iter()
            .map(|p| reference[0] - p[0])
            .fold(0.0, f64::max),
        2 => {
            let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            sweep_2d(&mut pts, [reference[0], reference[1]])
        }
        3 => {
            let front: Vec<&[f64]> = nondominated_indices(points)
                .into_iter()
                .map(|i| points[i])
                .collect();
            slice_3d(&front, reference)
        }
        _ => unreachable!("exact hypervolume needs at most three objectives"),
    }
}

/// Monte Carlo estimate over the box spanned by the ideal point and
/// `reference`, with a seeded, deterministic sample stream.
pub fn hypervolume_monte_carlo<P: AsRef<[f64]>>(
    points: &[P],
    reference: &[f64],
    samples: usize,
    seed: u64,
) -> Result<HvEstimate> {
    let pts = inside(points, reference)?;
    if pts.is_empty() || samples == 0 {
        return Ok(HvEstimate { value: 0.0, std_error: 0.0, exact: pts.is_empty() });
    }
    let front: Vec<&[f64]> = nondominated_indices(&pts).into_iter().map(|i| pts[i]).collect();
    let m = reference.len();
    let ideal: Vec<f64> = (0..m)
        .map(|k| front.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let box_volume: f64 = ideal.iter().zip(reference).map(|(l, r)| r - l).product();
    let mut rng = stream(seed, StreamTag::MonteCarlo, 0);
    let mut sample = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..samples {
        for k in 0..m {
            sample[k] = rng.gen_range(ideal[k]..reference[k]);
        }
        if front.iter().any(|p| p.iter().zip(&sample).all(|(a, s)| a <= s)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    Ok(HvEstimate {
        value: box_volume * frac,
        std_error: box_volume * (frac * (1.0 - frac) / samples as f64).sqrt(),
        exact: false,
    })
}

/// Hypervolume with its standard error: exact for m ≤ 3, Monte Carlo
/// ([`DEFAULT_MC_SAMPLES`], seed 0) beyond.
pub fn hypervolume_with_error<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<HvEstimate> {
    if reference.len() > 3 {
        return hypervolume_monte_carlo(points, reference, DEFAULT_MC_SAMPLES, 0);
    }
    let pts = inside(points, reference)?;
    Ok(HvEstimate { value: exact(&pts, reference), std_error: 0.0, exact: true })
}

/// Lebesgue measure of the region dominated by `points` and bounded by
/// `reference` (minimization). Points not strictly dominating the
/// reference contribute nothing.
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64> {
    Ok(hypervolume_with_error(points, reference)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_rectangle() {
        assert_relative_eq!(hypervolume(&[[0.5, 0.5]], &[1.1, 1.1]).unwrap(), 0.36, epsilon = 1e-15);
    }

    #[test]
    fn two_points_by_inclusion_exclusion() {
        let hv = hypervolume(&[[0.2, 0.8], [0.8, 0.2]], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(hv, 0.28, epsilon = 1e-15);
    }

    #[test]
    fn unit_cube_corner() {
        assert_relative_eq!(hypervolume(&[[0.0, 0.0, 0.0]], &[1.0, 2.0, 3.0]).unwrap(), 6.0);
        let pts = [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        // Boxes of 0.25 each; every intersection is the 0.125 corner cube.
        assert_relative_eq!(hypervolume(&pts, &[1.0, 1.0, 1.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn outside_points_and_empty_sets() {
        assert_eq!(hypervolume(&[[1.2, 0.0]], &[1.1, 1.1]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[[1.1, 0.0]], &[1.1, 1.1]).unwrap(), 0.0);
        let empty: [[f64; 2]; 0] = [];
        assert_eq!(hypervolume(&empty, &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn reference_length_mismatch_is_an_error() {
        assert!(matches!(hypervolume(&[[0.0, 0.0]], &[1.0, 1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn one_objective_is_a_segment() {
        assert_eq!(hypervolume(&[[0.25], [0.5]], &[1.0]).unwrap(), 0.75);
    }

    #[test]
    fn four_objectives_use_monte_carlo() {
        let est = hypervolume_with_error(&[[0.0; 4]], &[1.0; 4]).unwrap();
        assert!(!est.exact);
        // A single point fills its whole sampling box.
        assert_relative_eq!(est.value, 1.0);
        let est = hypervolume_monte_carlo(&[[0.0, 0.0, 0.0, 0.5], [0.5, 0.5, 0.5, 0.0]], &[1.0; 4], 200_000, 3)
            .unwrap();
        let truth = 0.5 + 0.125 - 0.0625;
        assert!((est.value - truth).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn adding_points_never_decreases_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in [2, 3] {
            let mut pts: Vec<Vec<f64>> = Vec::new();
            let reference = vec![1.0; m];
            let mut last = 0.0;
            for _ in 0..60 {
                pts.push((0..m).map(|_| rng.gen_range(0.0..1.2)).collect());
                let hv = hypervolume(&pts, &reference).unwrap();
                assert!(hv >= last - 1e-15);
                last = hv;
            }
        }
    }
}
