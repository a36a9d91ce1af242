use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preference::nondominated_indices;

/// Analytic test-function families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Zdt1,
    Zdt2,
    Zdt3,
    Zdt4,
    Zdt6,
    Dtlz1,
    Dtlz2,
    Dtlz3,
    Dtlz4,
    Dtlz5,
    Dtlz6,
    Dtlz7,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 12] = [
        ProblemKind::Zdt1,
        ProblemKind::Zdt2,
        ProblemKind::Zdt3,
        ProblemKind::Zdt4,
        ProblemKind::Zdt6,
        ProblemKind::Dtlz1,
        ProblemKind::Dtlz2,
        ProblemKind::Dtlz3,
        ProblemKind::Dtlz4,
        ProblemKind::Dtlz5,
        ProblemKind::Dtlz6,
        ProblemKind::Dtlz7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Zdt1 => "zdt1",
            ProblemKind::Zdt2 => "zdt2",
            ProblemKind::Zdt3 => "zdt3",
            ProblemKind::Zdt4 => "zdt4",
            ProblemKind::Zdt6 => "zdt6",
            ProblemKind::Dtlz1 => "dtlz1",
            ProblemKind::Dtlz2 => "dtlz2",
            ProblemKind::Dtlz3 => "dtlz3",
            ProblemKind::Dtlz4 => "dtlz4",
            ProblemKind::Dtlz5 => "dtlz5",
            ProblemKind::Dtlz6 => "dtlz6",
            ProblemKind::Dtlz7 => "dtlz7",
        }
    }

    pub fn is_zdt(self) -> bool {
        matches!(
            self,
            ProblemKind::Zdt1 | ProblemKind::Zdt2 | ProblemKind::Zdt3 | ProblemKind::Zdt4 | ProblemKind::Zdt6
        )
    }

    /// Benchmark-suite dimensions `(d, m)`.
    pub fn default_dims(self) -> (usize, usize) {
        match self {
            ProblemKind::Zdt1 | ProblemKind::Zdt2 | ProblemKind::Zdt3 => (30, 2),
            ProblemKind::Zdt4 | ProblemKind::Zdt6 => (10, 2),
            ProblemKind::Dtlz1 => (7, 3),
            _ => (10, 3),
        }
    }

    /// Raw-unit reference points listed for the benchmark suite. Hypervolume
    /// in this crate is computed in normalized objective space instead; see
    /// [`crate::metrics::normalize_objectives`].
    pub fn published_reference_point(self) -> &'static [f64] {
        match self {
            ProblemKind::Dtlz1 => &[558.21, 552.30, 568.36],
            ProblemKind::Dtlz2 => &[2.77, 2.78, 2.93],
            ProblemKind::Dtlz3 => &[1703.72, 1605.54, 1670.48],
            ProblemKind::Dtlz4 => &[3.03, 2.83, 2.78],
            ProblemKind::Dtlz5 => &[2.65, 2.61, 2.70],
            ProblemKind::Dtlz6 => &[9.80, 9.78, 9.78],
            ProblemKind::Dtlz7 => &[1.10, 1.10, 33.43],
            ProblemKind::Zdt1 => &[1.10, 8.58],
            ProblemKind::Zdt2 => &[1.10, 9.59],
            ProblemKind::Zdt3 => &[1.10, 8.74],
            ProblemKind::Zdt4 => &[1.10, 300.42],
            ProblemKind::Zdt6 => &[1.07, 10.27],
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown problem `{s}`")))
    }
}

/// A box-constrained multi-objective test problem (minimization).
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    dim: usize,
    n_obj: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

const DTLZ4_ALPHA: f64 = 100.0;

// Left end of ZDT6's front: min over x of 1 − exp(−4x)·sin⁶(6πx).
const ZDT6_MIN_F1: f64 = 0.280_775_318_815_369_77;
// Right end of ZDT3's last front segment.
const ZDT3_LAST_F1: f64 = 0.851_832_865_542_307_7;

impl Problem {
    pub fn by_name(name: &str) -> Result<Self> {
        let kind: ProblemKind = name.parse()?;
        let (d, m) = kind.default_dims();
        Self::new(kind, d, m)
    }

    pub fn new(kind: ProblemKind, dim: usize, n_obj: usize) -> Result<Self> {
        if kind.is_zdt() {
            if n_obj != 2 {
                return Err(Error::Config(format!("{kind} has exactly 2 objectives")));
            }
            if dim < 2 {
                return Err(Error::Config(format!("{kind} needs at least 2 variables")));
            }
        } else if n_obj < 2 || dim < n_obj {
            return Err(Error::Config(format!(
                "{kind} needs m >= 2 and d >= m, got d={dim}, m={n_obj}"
            )));
        }
        let mut lower = vec![0.0; dim];
        let mut upper = vec![1.0; dim];
        if kind == ProblemKind::Zdt4 {
            for i in 1..dim {
                lower[i] = -5.0;
                upper[i] = 5.0;
            }
        }
        Ok(Self {
            kind,
            dim,
            n_obj,
            lower,
            upper,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_obj(&self) -> usize {
        self.n_obj
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Objective vector of a raw (de-normalized) design.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "{} expects {} variables, got {}",
                self.name(),
                self.dim,
                x.len()
            )));
        }
        for (i, ((&v, &lo), &hi)) in x.iter().zip(&self.lower).zip(&self.upper).enumerate() {
            if !(lo..=hi).contains(&v) {
                return Err(Error::Domain(format!(
                    "{}: x{i} = {v} outside [{lo}, {hi}]",
                    self.name()
                )));
            }
        }
        Ok(match self.kind {
            ProblemKind::Zdt1 => zdt(x, |f1, g| g * (1.0 - (f1 / g).sqrt()), linear_g(x)),
            ProblemKind::Zdt2 => zdt(x, |f1, g| g * (1.0 - (f1 / g).powi(2)), linear_g(x)),
            ProblemKind::Zdt3 => zdt(
                x,
                |f1, g| g * (1.0 - (f1 / g).sqrt() - f1 / g * (10.0 * PI * f1).sin()),
                linear_g(x),
            ),
            ProblemKind::Zdt4 => {
                let g = 1.0
                    + 10.0 * (x.len() - 1) as f64
                    + x[1..]
                        .iter()
                        .map(|v| v * v - 10.0 * (4.0 * PI * v).cos())
                        .sum::<f64>();
                zdt(x, |f1, g| g * (1.0 - (f1 / g).sqrt()), g)
            }
            ProblemKind::Zdt6 => {
                let f1 = 1.0 - (-4.0 * x[0]).exp() * (6.0 * PI * x[0]).sin().powi(6);
                let mean = x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
                let g = 1.0 + 9.0 * mean.powf(0.25);
                vec![f1, g * (1.0 - (f1 / g).powi(2))]
            }
            ProblemKind::Dtlz1 => {
                let g = rastrigin_g(&x[self.n_obj - 1..]);
                dtlz_linear(&x[..self.n_obj - 1], g)
            }
            ProblemKind::Dtlz2 => dtlz_spherical(&angles(&x[..self.n_obj - 1]), sphere_g(&x[self.n_obj - 1..])),
            ProblemKind::Dtlz3 => dtlz_spherical(&angles(&x[..self.n_obj - 1]), rastrigin_g(&x[self.n_obj - 1..])),
            ProblemKind::Dtlz4 => {
                let head: Vec<f64> = x[..self.n_obj - 1].iter().map(|v| v.powf(DTLZ4_ALPHA)).collect();
                dtlz_spherical(&angles(&head), sphere_g(&x[self.n_obj - 1..]))
            }
            ProblemKind::Dtlz5 => {
                let g = sphere_g(&x[self.n_obj - 1..]);
                dtlz_spherical(&degenerate_angles(&x[..self.n_obj - 1], g), g)
            }
            ProblemKind::Dtlz6 => {
                let g = x[self.n_obj - 1..].iter().map(|v| v.powf(0.1)).sum::<f64>();
                dtlz_spherical(&degenerate_angles(&x[..self.n_obj - 1], g), g)
            }
            ProblemKind::Dtlz7 => {
                let tail = &x[self.n_obj - 1..];
                let g = 1.0 + 9.0 / tail.len() as f64 * tail.iter().sum::<f64>();
                let head = &x[..self.n_obj - 1];
                let h = self.n_obj as f64
                    - head
                        .iter()
                        .map(|f| f / (1.0 + g) * (1.0 + (3.0 * PI * f).sin()))
                        .sum::<f64>();
                let mut y = head.to_vec();
                y.push((1.0 + g) * h);
                y
            }
        })
    }

    /// Value every tail variable takes on the Pareto set.
    fn optimal_tail(&self) -> f64 {
        match self.kind {
            ProblemKind::Dtlz1
            | ProblemKind::Dtlz2
            | ProblemKind::Dtlz3
            | ProblemKind::Dtlz4
            | ProblemKind::Dtlz5 => 0.5,
            _ => 0.0,
        }
    }

    /// Number of leading position variables that parameterize the Pareto set.
    fn position_vars(&self) -> usize {
        if self.kind.is_zdt() {
            1
        } else {
            self.n_obj - 1
        }
    }

    /// Pareto-optimal raw design with the given position variables in `[0, 1]`.
    pub fn optimal_design(&self, position: &[f64]) -> Result<Vec<f64>> {
        if position.len() != self.position_vars() {
            return Err(Error::Shape(format!(
                "{} has {} position variables",
                self.name(),
                self.position_vars()
            )));
        }
        let mut x = vec![self.optimal_tail(); self.dim];
        x[..position.len()].copy_from_slice(position);
        Ok(x)
    }

    /// Extreme points of the true Pareto front, where known analytically.
    pub fn front_extremes(&self) -> Option<Vec<Vec<f64>>> {
        let m = self.n_obj;
        let unit = |scale: f64| -> Vec<Vec<f64>> {
            (0..m)
                .map(|i| (0..m).map(|j| if i == j { scale } else { 0.0 }).collect())
                .collect()
        };
        match self.kind {
            ProblemKind::Zdt1 | ProblemKind::Zdt2 | ProblemKind::Zdt4 => {
                Some(vec![vec![0.0, 1.0], vec![1.0, 0.0]])
            }
            ProblemKind::Zdt3 => {
                let f2 = 1.0 - ZDT3_LAST_F1.sqrt() - ZDT3_LAST_F1 * (10.0 * PI * ZDT3_LAST_F1).sin();
                Some(vec![vec![0.0, 1.0], vec![ZDT3_LAST_F1, f2]])
            }
            ProblemKind::Zdt6 => Some(vec![
                vec![ZDT6_MIN_F1, 1.0 - ZDT6_MIN_F1 * ZDT6_MIN_F1],
                vec![1.0, 0.0],
            ]),
            ProblemKind::Dtlz1 => Some(unit(0.5)),
            ProblemKind::Dtlz2 | ProblemKind::Dtlz3 | ProblemKind::Dtlz4 => Some(unit(1.0)),
            ProblemKind::Dtlz5 | ProblemKind::Dtlz6 if m == 3 => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                Some(vec![vec![h, h, 0.0], vec![0.0, 0.0, 1.0]])
            }
            _ => None,
        }
    }

    /// Non-dominated objective vectors from a regular grid over the Pareto
    /// set (about `n` points, `⌈n^(1/k)⌉` per position variable).
    pub fn pareto_front_sample(&self, n: usize) -> Vec<Vec<f64>> {
        let k = self.position_vars();
        let per_axis = ((n.max(2) as f64).powf(1.0 / k as f64).ceil() as usize).max(2);
        let mut points = Vec::new();
        let mut idx = vec![0usize; k];
        loop {
            let pos: Vec<f64> = idx.iter().map(|&i| i as f64 / (per_axis - 1) as f64).collect();
            let x = self.optimal_design(&pos).expect("position length");
            points.push(self.evaluate(&x).expect("optimal design in bounds"));
            let mut carry = 0;
            while carry < k {
                idx[carry] += 1;
                if idx[carry] < per_axis {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == k {
                break;
            }
        }
        nondominated_indices(&points)
            .into_iter()
            .map(|i| points[i].clone())
            .collect()
    }
}

fn linear_g(x: &[f64]) -> f64 {
    1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64
}

fn zdt(x: &[f64], f2: impl Fn(f64, f64) -> f64, g: f64) -> Vec<f64> {
    let f1 = x[0];
    vec![f1, f2(f1, g)]
}

fn sphere_g(tail: &[f64]) -> f64 {
    tail.iter().map(|v| (v - 0.5).powi(2)).sum()
}

fn rastrigin_g(tail: &[f64]) -> f64 {
    100.0
        * (tail.len() as f64
            + tail
                .iter()
                .map(|v| (v - 0.5).powi(2) - (20.0 * PI * (v - 0.5)).cos())
                .sum::<f64>())
}

fn angles(head: &[f64]) -> Vec<f64> {
    head.iter().map(|v| v * FRAC_PI_2).collect()
}

fn degenerate_angles(head: &[f64], g: f64) -> Vec<f64> {
    head.iter()
        .enumerate()
        .map(|(i, v)| {
            if i == 0 {
                v * FRAC_PI_2
            } else {
                PI / (4.0 * (1.0 + g)) * (1.0 + 2.0 * g * v)
            }
        })
        .collect()
}

/// `f_j = (1+g) · Π_{i<m−j} cos θ_i · sin θ_{m−j}` (no sine for `j = 1`).
fn dtlz_spherical(theta: &[f64], g: f64) -> Vec<f64> {
    let m = theta.len() + 1;
    (0..m)
        .map(|j| {
            let cos_count = m - 1 - j;
            let mut f = 1.0 + g;
            for t in &theta[..cos_count] {
                f *= t.cos();
            }
            if j > 0 {
                f *= theta[cos_count].sin();
            }
            f
        })
        .collect()
}

fn dtlz_linear(head: &[f64], g: f64) -> Vec<f64> {
    let m = head.len() + 1;
    (0..m)
        .map(|j| {
            let prod_count = m - 1 - j;
            let mut f = 0.5 * (1.0 + g);
            for v in &head[..prod_count] {
                f *= v;
            }
            if j > 0 {
                f *= 1.0 - head[prod_count];
            }
            f
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zdt1_hand_values() {
        let p = Problem::by_name("zdt1").unwrap();
        assert_eq!(p.dim(), 30);
        assert_eq!(p.evaluate(&vec![0.0; 30]).unwrap(), vec![0.0, 1.0]);
        let mut x = vec![0.0; 30];
        x[0] = 1.0;
        assert_eq!(p.evaluate(&x).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn dtlz2_tail_at_half_lies_on_sphere() {
        let p = Problem::by_name("dtlz2").unwrap();
        for (a, b) in [(0.0, 0.0), (0.3, 0.9), (1.0, 0.5), (0.77, 0.12)] {
            let x = p.optimal_design(&[a, b]).unwrap();
            let y = p.evaluate(&x).unwrap();
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "{y:?}");
        }
    }

    #[test]
    fn registry() {
        for kind in ProblemKind::ALL {
            let p = Problem::by_name(kind.name()).unwrap();
            assert_eq!((p.dim(), p.n_obj()), kind.default_dims());
            assert_eq!(kind.published_reference_point().len(), p.n_obj());
        }
        assert!(Problem::by_name("zdt5").is_err());
        assert!(Problem::by_name("re21").is_err());
        assert_eq!("DTLZ7".parse::<ProblemKind>().unwrap(), ProblemKind::Dtlz7);
    }

    #[test]
    fn domain_and_shape_errors() {
        let p = Problem::by_name("zdt4").unwrap();
        let mut x = vec![0.0; 10];
        x[3] = -4.5;
        assert!(p.evaluate(&x).is_ok());
        x[3] = 5.5;
        assert!(matches!(p.evaluate(&x), Err(Error::Domain(_))));
        assert!(matches!(p.evaluate(&[0.0; 3]), Err(Error::Shape(_))));
        assert!(Problem::new(ProblemKind::Zdt1, 10, 3).is_err());
        assert!(Problem::new(ProblemKind::Dtlz2, 2, 3).is_err());
    }

    #[test]
    fn extremes_lie_on_sampled_fronts() {
        for kind in ProblemKind::ALL {
            let p = Problem::by_name(kind.name()).unwrap();
            let Some(ext) = p.front_extremes() else { continue };
            let front = p.pareto_front_sample(10_000);
            for e in ext {
                let nearest = front
                    .iter()
                    .map(|y| y.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .fold(f64::INFINITY, f64::min);
                assert!(nearest < 2e-2, "{kind}: extreme {e:?} is {nearest} from the front");
            }
        }
    }
}
