use ndarray::{Array1, Array2};
use pgd_core::diffusion::{forward_noise, train_denoiser, unconditional_sample, DenoiserConfig, DiffusionSchedule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn forward_process_moments_match_closed_form() {
    let sched = DiffusionSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let x0 = [0.7, -0.3];
    let draws = 10_000;
    for t in [1, 10, 100, 500, 1000] {
        let (ab, sd) = (sched.alpha_bar(t), (1.0 - sched.alpha_bar(t)).sqrt());
        for (k, &x) in x0.iter().enumerate() {
            let mut samples = Vec::with_capacity(draws);
            for _ in 0..draws {
                let eps: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
                samples.push(forward_noise(&x0, t, &eps, &sched).unwrap()[k]);
            }
            let n = draws as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let var_true = sd * sd;
            assert!((mean - ab.sqrt() * x).abs() <= 4.0 * sd / n.sqrt(), "t={t} mean {mean}");
            // Standard error of a Gaussian sample variance: σ²·√(2/(n−1)).
            assert!((var - var_true).abs() <= 4.0 * var_true * (2.0 / (n - 1.0)).sqrt(), "t={t} var {var}");
        }
    }
}

fn small_config(epochs: usize) -> DenoiserConfig {
    DenoiserConfig { hidden: vec![64, 64], time_embed_dim: 16, epochs, batch_size: 128, ..Default::default() }
}

#[test]
fn gaussian_data_gives_centered_samples() {
    let sched = DiffusionSchedule::linear(100, 1e-4, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let data = Array2::from_shape_simple_fn((2000, 2), || StandardNormal.sample(&mut rng));
    let valid = Array2::from_shape_simple_fn((200, 2), || StandardNormal.sample(&mut rng));
    let trained = train_denoiser(data.view(), valid.view(), &sched, &small_config(20), 3).unwrap();
    let n = 4096;
    let samples = unconditional_sample(&trained.model, &sched, n, 9).unwrap();
    let mean: Array1<f64> = samples.mean_axis(ndarray::Axis(0)).unwrap();
    for m in mean.iter() {
        assert!(m.abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
    }
}

#[test]
fn single_point_data_concentrates_samples() {
    let sched = DiffusionSchedule::linear(100, 1e-4, 0.02).unwrap();
    let point = [0.4, -0.2, 0.1];
    let data = Array2::from_shape_fn((512, 3), |(_, j)| point[j]);
    let trained = train_denoiser(data.view(), data.slice(ndarray::s![..64, ..]), &sched, &small_config(1500), 4).unwrap();
    let first = trained.log.first().unwrap().valid_loss;
    let best = trained.log[trained.best_epoch].valid_loss;
    assert!(best < 0.2 * first, "validation loss {first} → {best}");
    let samples = unconditional_sample(&trained.model, &sched, 256, 1).unwrap();
    for row in samples.rows() {
        let dist = row.iter().zip(&point).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(dist <= 0.1, "sample {row} is {dist} from the data point");
    }
}
