use tpdm_market::dataset::{gen_synthetic, Distribution};

fn moments(rows: &[Vec<i64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len() as f64;
    let beta = rows[0].len();
    let mean: Vec<f64> = (0..beta).map(|j| rows.iter().map(|r| r[j] as f64).sum::<f64>() / n).collect();
    let cov = (0..beta)
        .map(|j| {
            (0..beta)
                .map(|k| rows.iter().map(|r| (r[j] as f64 - mean[j]) * (r[k] as f64 - mean[k])).sum::<f64>() / n)
                .collect()
        })
        .collect();
    (mean, cov)
}

#[test]
fn gaussian_samples_follow_the_generator_parameters() {
    let theta = 10;
    let dist = Distribution::default_gaussian(4, theta);
    let Distribution::Gaussian { mean, cov } = &dist else { unreachable!() };
    let data = gen_synthetic(10_000, 4, theta, &dist, 5).unwrap();
    let (m, c) = moments(&data.rows);
    for j in 0..4 {
        assert!((m[j] - mean[j]).abs() < 0.07, "mean {j}: {} vs {}", m[j], mean[j]);
        for k in 0..4 {
            // Rounding to integers adds 1/12 to each variance.
            let target = cov[j][k] + if j == k { 1.0 / 12.0 } else { 0.0 };
            assert!((c[j][k] - target).abs() < 0.2, "cov {j}{k}: {} vs {target}", c[j][k]);
        }
    }
}

#[test]
fn ratings_stay_in_range_and_cover_it() {
    let theta = 10u64;
    for dist in [Distribution::Uniform, Distribution::Zipf { exponent: 1.1 }, Distribution::default_gaussian(10, theta)]
    {
        let data = gen_synthetic(100_000, 10, theta, &dist, 9).unwrap();
        let mut seen = [0usize; 11];
        for &v in data.rows.iter().flatten() {
            assert!((0..=theta as i64).contains(&v), "{dist:?} produced {v}");
            seen[v as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0), "{dist:?} misses a rating: {seen:?}");
    }
}
