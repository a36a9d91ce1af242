mod oracles;

use oracles::brute_force_fronts;
use pgd_core::benchmarks::{generate_dataset, Problem};
use pgd_core::preference::{crowding_distance, dominates, nondominated_sort, DiversityCriterion, PairLabeler};
use pgd_core::sampler::select_reference;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points<R: Rng>(rng: &mut R, n: usize, m: usize, grid: Option<u32>) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| match grid {
                    // Coarse grids force ties and duplicates.
                    Some(g) => rng.gen_range(0..g) as f64,
                    None => rng.gen::<f64>(),
                })
                .collect()
        })
        .collect()
}

#[test]
fn sort_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for instance in 0..50 {
        let n = rng.gen_range(1..=500);
        let m = if instance % 2 == 0 { 2 } else { 3 };
        let grid = (instance % 5 == 0).then_some(6);
        let pts = random_points(&mut rng, n, m, grid);
        assert_eq!(nondominated_sort(&pts).front, brute_force_fronts(&pts), "instance {instance}");
    }
}

#[test]
fn dominance_is_irreflexive_and_transitive() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut chains = 0;
    for trial in 0..10_000 {
        let m = 2 + trial % 2;
        let p = random_points(&mut rng, 3, m, Some(4));
        assert!(!dominates(&p[0], &p[0]).unwrap());
        if dominates(&p[0], &p[1]).unwrap() && dominates(&p[1], &p[2]).unwrap() {
            chains += 1;
            assert!(dominates(&p[0], &p[2]).unwrap());
        }
    }
    assert!(chains > 100, "only {chains} premises held");
}

#[test]
fn reference_design_is_nondominated() {
    let ds = generate_dataset(&Problem::by_name("zdt3").unwrap(), 500, 21).unwrap();
    let r = select_reference(&ds).unwrap();
    let idx = (0..ds.len()).find(|&i| ds.x().row(i).to_vec() == r).unwrap();
    let y = ds.y_rows();
    assert!(y.iter().all(|other| !dominates(other, y[idx]).unwrap()));
}

#[test]
fn reference_prefers_extremes_of_front_zero() {
    use pgd_core::OfflineDataset;
    let y = ndarray::array![[0.5, 0.5], [0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
    let x = ndarray::array![[0.1], [0.2], [0.3], [0.4]];
    let ds = OfflineDataset::new(None, vec![0.0], vec![1.0], x, y, 0).unwrap();
    // Index 1 is the lowest-index extreme of front 0.
    assert_eq!(select_reference(&ds).unwrap(), ds.x().row(1).to_vec());
}

proptest! {
    #[test]
    fn crowding_is_invariant_to_positive_affine_maps(
        pts in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 3..40),
        scale in prop::collection::vec(0.01f64..100.0, 3),
        shift in prop::collection::vec(-50.0f64..50.0, 3),
    ) {
        let mapped: Vec<Vec<f64>> = pts
            .iter()
            .map(|p| p.iter().enumerate().map(|(k, v)| scale[k] * v + shift[k]).collect())
            .collect();
        let a = crowding_distance(&pts);
        let b = crowding_distance(&mapped);
        for (x, y) in a.iter().zip(&b) {
            if x.is_infinite() || y.is_infinite() {
                prop_assert_eq!(x, y);
            } else {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn labels_are_never_contradictory(
        pts in prop::collection::vec(prop::collection::vec(0u8..5, 2), 2..40),
        crit in 0usize..3,
    ) {
        let y: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let labeler = PairLabeler::new(&y, DiversityCriterion::ALL[crit], &[6.0, 6.0]).unwrap();
        for a in 0..y.len() {
            for b in 0..y.len() {
                if a == b {
                    continue;
                }
                match (labeler.label(a, b), labeler.label(b, a)) {
                    (Some(p), Some(q)) => prop_assert_eq!(p.label + q.label, 1),
                    (None, None) => {}
                    _ => prop_assert!(false, "asymmetric skip for ({}, {})", a, b),
                }
            }
        }
    }
}
