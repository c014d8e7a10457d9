use nalgebra::DMatrix;
use proptest::prelude::*;

use idlink::matcher::rank_candidates;
use idlink::{FeatureMatrix, Level};

fn oracle(zx: &DMatrix<f64>, zy: &DMatrix<f64>, q: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = (0..zy.ncols()).map(|t| (t, (zx.column(q) - zy.column(t)).norm_squared())).collect();
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    scored.into_iter().map(|s| s.0).collect()
}

proptest! {
    #[test]
    fn random_instances_agree_with_per_query_oracle(vals in proptest::collection::vec(-3i8..=3, 3 * 20)) {
        let data: Vec<f64> = vals.iter().map(|&v| f64::from(v)).collect();
        let zx = DMatrix::from_column_slice(3, 10, &data[..30]);
        let zy = DMatrix::from_column_slice(3, 10, &data[30..]);
        let (fx, fy) = (FeatureMatrix::new(Level::Fused, zx.clone()), FeatureMatrix::new(Level::Fused, zy.clone()));
        for q in 0..10 {
            let got: Vec<usize> = rank_candidates(&fx, &fy, q, 10).unwrap().candidates.iter().map(|c| c.0).collect();
            prop_assert_eq!(got, oracle(&zx, &zy, q));
        }
    }

    #[test]
    fn ranking_is_invariant_under_a_common_rotation(angle in 0.0f64..std::f64::consts::TAU, seed in proptest::collection::vec(-10.0f64..10.0, 2 * 16)) {
        let zx = DMatrix::from_column_slice(2, 8, &seed[..16]);
        let zy = DMatrix::from_column_slice(2, 8, &seed[16..]);
        let rot = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
        let plain = (FeatureMatrix::new(Level::Fused, zx.clone()), FeatureMatrix::new(Level::Fused, zy.clone()));
        let turned = (FeatureMatrix::new(Level::Fused, &rot * zx), FeatureMatrix::new(Level::Fused, &rot * zy));
        for q in 0..8 {
            let a = rank_candidates(&plain.0, &plain.1, q, 3).unwrap();
            let b = rank_candidates(&turned.0, &turned.1, q, 3).unwrap();
            // continuous draws make exact distance ties vanishingly unlikely
            let ids = |r: &idlink::matcher::MatchRanking| r.candidates.iter().map(|c| c.0).collect::<Vec<_>>();
            prop_assert_eq!(ids(&a), ids(&b));
            for (x, y) in a.candidates.iter().zip(&b.candidates) {
                prop_assert!((x.1 - y.1).abs() < 1e-9 * x.1.max(1.0));
            }
        }
    }
}
