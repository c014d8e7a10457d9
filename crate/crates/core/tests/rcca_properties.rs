use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use idlink::rcca::{center_columns, covariances, fit_rcca, project, solve_rcca, Side};
use idlink::sampling::rng;
use idlink::{FeatureMatrix, Level};

fn random(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn independent_views_have_small_top_correlation() {
    for seed in 0..10 {
        let x = random(100 + seed, 2, 1000);
        let y = random(200 + seed, 2, 1000);
        let (xc, _) = center_columns(&x);
        let (yc, _) = center_columns(&y);
        let model = solve_rcca(&covariances(&xc, &yc).unwrap(), 1, 1e-6, 1e-6).unwrap();
        assert!(model.correlations[0] < 0.15, "seed {seed}: {}", model.correlations[0]);
    }
}

#[test]
fn projected_training_columns_reproduce_correlations() {
    let shared = random(1, 3, 300);
    let x = random(2, 6, 3) * &shared + random(3, 6, 300) * 0.5;
    let y = random(4, 5, 3) * &shared + random(5, 5, 300) * 0.5;
    let fx = FeatureMatrix::new(Level::Fused, x);
    let fy = FeatureMatrix::new(Level::Fused, y);
    let model = fit_rcca(&fx, &fy, 4, 0.0, 0.0).unwrap();
    let zx = project(&model, &fx, Side::X).unwrap();
    let zy = project(&model, &fy, Side::Y).unwrap();
    for i in 0..model.k() {
        let a: Vec<f64> = zx.data().row(i).iter().copied().collect();
        let b: Vec<f64> = zy.data().row(i).iter().copied().collect();
        let c = correlation(&a, &b);
        assert!((c - model.correlations[i]).abs() < 1e-8, "pair {i}: {c} vs {}", model.correlations[i]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solutions_satisfy_metric_constraints(seed in 0u64..10_000, dx in 2usize..7, dy in 2usize..7, t in 8usize..40, reg in 1e-3f64..1.0) {
        let x = random(seed, dx, t);
        let y = random(seed ^ 0xabcdef, dy, t);
        let (xc, _) = center_columns(&x);
        let (yc, _) = center_columns(&y);
        let cov = covariances(&xc, &yc).unwrap();
        let k = dx.min(dy);
        let model = solve_rcca(&cov, k, reg, reg).unwrap();
        let cxx = &cov.xx + DMatrix::identity(dx, dx) * reg;
        let cyy = &cov.yy + DMatrix::identity(dy, dy) * reg;
        let gx = model.h.transpose() * &cxx * &model.h;
        let gy = model.m.transpose() * &cyy * &model.m;
        let eye = DMatrix::<f64>::identity(model.k(), model.k());
        prop_assert!((&gx - &eye).amax() < 1e-6);
        prop_assert!((&gy - &eye).amax() < 1e-6);
        prop_assert!(model.correlations.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(model.correlations.iter().all(|&c| (0.0..=1.0 + 1e-6).contains(&c)));
    }
}
