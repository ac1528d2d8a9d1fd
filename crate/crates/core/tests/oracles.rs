use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sisd::scoring::ic_spread;
use sisd::{BackgroundModel, Extension, Intention, LocationPattern, SpreadPattern};

/// Kernel density estimate at `x` with Silverman's bandwidth.
fn kde(samples: &[f64], x: f64) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let h = 1.06 * sd * n.powf(-0.2);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    norm * samples.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>()
}

/// Spread IC against a Monte-Carlo density of the spread statistic for a
/// subgroup of 200 rows spanning two differently shaped blocks.
#[test]
fn spread_ic_matches_sampled_density() {
    let n = 200;
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.7]);
    let prior = BackgroundModel::new(DVector::zeros(2), sigma, n).unwrap();
    let half = Extension::new((0..80).collect(), n).unwrap();
    let center = DVector::from_vec(vec![0.3, -0.2]);
    let loc = LocationPattern { intention: Intention::empty(), extension: half.clone(), mean: center.clone() };
    let model = prior.apply_location_constraint(&loc).unwrap();
    let w0 = DVector::from_vec(vec![0.6, 0.8]);
    let sp = SpreadPattern { intention: Intention::empty(), extension: half, center, direction: w0, variance: 0.15 };
    let model = model.apply_spread_constraint(&sp).unwrap();
    assert_eq!(model.block_count(), 2);

    let all = Extension::all(n);
    let w = DVector::from_vec(vec![1.0, -1.0]).normalize();
    let scales: Vec<f64> = (0..n).map(|i| (w.transpose() * model.row_covariance(i) * &w)[0]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<f64> = (0..100_000)
        .map(|_| {
            scales
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a * z * z
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    for q in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let v = sorted[(q * sorted.len() as f64) as usize];
        let ic = ic_spread(&model, &all, &w, v).unwrap();
        let mc = -kde(&samples, v).ln();
        assert!((ic - mc).abs() < 0.1, "quantile {q}: ic {ic} vs sampled {mc}");
    }
}
