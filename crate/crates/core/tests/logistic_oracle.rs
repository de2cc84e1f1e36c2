//! The gradient trainer against brute-force references: an exhaustive grid
//! search of the same objective, and pair counting for AUC.

use asa_core::probe::{auc, binary_objective, train_binary, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn overlapping_2d(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label = (i % 2) as u8;
        let shift = if label == 1 { 0.8 } else { -0.4 };
        x.push(vec![shift + rng.gen_range(-1.5..1.5), 0.5 * shift + rng.gen_range(-1.5..1.5)]);
        y.push(label);
    }
    (x, y)
}

#[test]
fn trained_minimum_matches_grid_search() {
    let (x, y) = overlapping_2d(200, 7);
    let l2 = 1e-2;
    let cfg = TrainConfig { l2, max_iters: 50_000, tol: 1e-10, ..TrainConfig::default() };
    let fit = train_binary(&x, &y, &cfg).unwrap();
    let trained = binary_objective(&x, &y, &fit.w, fit.b, l2);

    // coarse grid, then a fine grid around the coarse winner
    let search = |center: [f64; 3], half: f64, steps: i32| {
        let mut local = (f64::INFINITY, center);
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let s = half / f64::from(steps);
                    let p = [center[0] + f64::from(i) * s, center[1] + f64::from(j) * s, center[2] + f64::from(k) * s];
                    let v = binary_objective(&x, &y, &p[..2], p[2], l2);
                    if v < local.0 {
                        local = (v, p);
                    }
                }
            }
        }
        local
    };
    let mut best = search([0.0; 3], 4.0, 20);
    best = search(best.1, 0.2, 20);
    best = search(best.1, 0.01, 10);

    assert!(trained <= best.0 + 1e-9, "trainer {trained} vs grid {}", best.0);
    for (a, b) in fit.w.iter().chain([&fit.b]).zip(best.1) {
        assert!((a - b).abs() < 2e-3, "{:?} vs {:?}", (fit.w.clone(), fit.b), best.1);
    }
}

fn auc_by_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

proptest! {
    #[test]
    fn auc_equals_pair_counting(
        data in prop::collection::vec((0u8..8, any::<bool>()), 2..120)
    ) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s)).collect();
        let labels: Vec<u8> = data.iter().map(|(_, l)| u8::from(*l)).collect();
        prop_assume!(labels.contains(&0) && labels.contains(&1));
        let got = auc(&scores, &labels).unwrap();
        prop_assert!((got - auc_by_pairs(&scores, &labels)).abs() < 1e-12);
    }
}
