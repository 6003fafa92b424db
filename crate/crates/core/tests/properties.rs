//! Randomized invariants over the simulator, features, and metrics.

use cm_core::eval::coverage_rate;
use cm_core::features::{build_features, denormalize, fit_norm, normalize, FeatureSet};
use cm_core::sim::{
    apply_action, classify_ues, generate_deployment, initial_graph, network_throughput, reward,
    valid_actions, RewardConfig, RsrpMatrix, ScenarioConfig,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_walk_scenario(seed: u64, n_ues: usize) -> (cm_core::sim::Scenario, ChaCha8Rng) {
    let scenario =
        generate_deployment(&ScenarioConfig { seed, n_ues, ..Default::default() }).unwrap();
    (scenario, ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assignment_columns_stay_unit(seed in 0u64..500, n_ues in 6usize..24) {
        let (scenario, mut rng) = random_walk_scenario(seed, n_ues);
        let mut state = initial_graph(&scenario);
        loop {
            for ue in 0..scenario.n_ues {
                let ones = (0..scenario.n_cells)
                    .filter(|&i| state.a_u[(i, ue)] != 0.0)
                    .count();
                prop_assert!(ones <= 1);
                if !state.unconnected.contains(&ue) {
                    prop_assert_eq!(ones, 1);
                }
            }
            if state.is_terminal() {
                break;
            }
            let actions = valid_actions(&state, &scenario.rsrp).unwrap();
            let pick = actions[rng.random_range(0..actions.len())];
            state = apply_action(&state, &scenario.rsrp, pick).unwrap();
        }
    }

    #[test]
    fn rewards_telescope_exactly(seed in 0u64..500, n_ues in 6usize..24) {
        let (scenario, mut rng) = random_walk_scenario(seed, n_ues);
        let cfg = RewardConfig { lambda: 0.0 };
        let mut state = initial_graph(&scenario);
        let start = network_throughput(&state, &scenario.rsrp, &scenario.channel);
        let mut total = 0.0;
        while !state.is_terminal() {
            let actions = valid_actions(&state, &scenario.rsrp).unwrap();
            let pick = actions[rng.random_range(0..actions.len())];
            let next = apply_action(&state, &scenario.rsrp, pick).unwrap();
            total += reward(&state, &next, &scenario.rsrp, &scenario.channel, &cfg);
            state = next;
        }
        let finish = network_throughput(&state, &scenario.rsrp, &scenario.channel);
        prop_assert_eq!(total, finish - start);
    }

    #[test]
    fn classification_ignores_common_column_offsets(
        seed in 0u64..1000,
        shift in -40.0f64..40.0,
        threshold in 1.0f64..12.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5;
        let m = 9;
        let mut dbm = Array2::from_shape_fn((n, m), |_| rng.random_range(-100.0..-60.0));
        for v in dbm.iter_mut() {
            if rng.random::<f64>() < 0.35 {
                *v = f64::NEG_INFINITY;
            }
        }
        for ue in 0..m {
            if (0..n).all(|i| !dbm[(i, ue)].is_finite()) {
                dbm[(rng.random_range(0..n), ue)] = rng.random_range(-100.0..-60.0);
            }
        }
        let target = rng.random_range(0..m);
        let before = classify_ues(&RsrpMatrix { dbm: dbm.clone() }, threshold);
        for i in 0..n {
            if dbm[(i, target)].is_finite() {
                dbm[(i, target)] += shift;
            }
        }
        let after = classify_ues(&RsrpMatrix { dbm }, threshold);
        prop_assert_eq!(before, after);
    }

    #[test]
    fn feature_map_scales_linearly(seed in 0u64..1000, alpha in 0.0f64..8.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let m = 6;
        let c = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..5.0));
        let r = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..5.0));
        let mut a_c = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.5 {
                    a_c[(i, j)] = 1.0;
                    a_c[(j, i)] = 1.0;
                }
            }
        }
        let a_u = Array2::from_shape_fn((n, m), |(i, j)| f64::from(i == j % n));
        let base = build_features(&c, &r, &a_c, &a_u).unwrap();
        let scaled = build_features(&(&c * alpha), &(&r * alpha), &a_c, &a_u).unwrap();
        let close = |x: &Array2<f64>, y: &Array2<f64>| {
            x.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0))
        };
        prop_assert!(close(&scaled.x_c1, &(&base.x_c1 * alpha)));
        prop_assert!(close(&scaled.x_c2, &(&base.x_c2 * alpha)));
        prop_assert!(close(&scaled.x_u, &(&base.x_u * alpha)));
    }

    #[test]
    fn features_are_ue_permutation_equivariant(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let m = 7;
        let c = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..5.0));
        let r = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..5.0));
        let mut a_c = Array2::zeros((n, n));
        a_c[(0, 1)] = 1.0;
        a_c[(1, 0)] = 1.0;
        let a_u = Array2::from_shape_fn((n, m), |(i, j)| f64::from(i == j % n));
        let base = build_features(&c, &r, &a_c, &a_u).unwrap();

        // Random UE permutation applied to all column-indexed inputs.
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let permute_cols = |x: &Array2<f64>| {
            Array2::from_shape_fn((n, m), |(i, j)| x[(i, perm.iter().position(|&p| p == j).unwrap())])
        };
        let pc = permute_cols(&c);
        let pr = permute_cols(&r);
        let pau = permute_cols(&a_u);
        let permuted = build_features(&pc, &pr, &a_c, &pau).unwrap();

        // Cell blocks are unchanged (up to summation order); the UE block is
        // row-permuted exactly.
        let close = |x: &Array2<f64>, y: &Array2<f64>| {
            x.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
        };
        prop_assert!(close(&permuted.x_c1, &base.x_c1));
        prop_assert!(close(&permuted.x_c2, &base.x_c2));
        for j in 0..m {
            for col in 0..2 {
                prop_assert_eq!(permuted.x_u[(perm[j], col)], base.x_u[(j, col)]);
            }
        }
    }

    #[test]
    fn normalization_round_trips(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 3;
        let m = 5;
        let mut mats = Vec::new();
        for _ in 0..4 {
            mats.push(FeatureSet {
                x_c1: Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..9.0)),
                x_c2: Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..9.0)),
                x_u: Array2::from_shape_fn((m, 2), |_| rng.random_range(0.0..9.0)),
            });
        }
        let stats = fit_norm(&mats).unwrap();
        for fs in &mats {
            let normed = normalize(fs, &stats);
            for v in normed
                .x_c1
                .iter()
                .chain(normed.x_c2.iter())
                .chain(normed.x_u.iter())
            {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v));
            }
            let back = denormalize(&normed, &stats);
            let close = |x: &Array2<f64>, y: &Array2<f64>| {
                x.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
            };
            prop_assert!(close(&back.x_c1, &fs.x_c1));
            prop_assert!(close(&back.x_c2, &fs.x_c2));
            prop_assert!(close(&back.x_u, &fs.x_u));
        }
    }
}

#[test]
fn coverage_matches_sort_oracle_on_1000_multisets() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let n = rng.random_range(1..400usize);
        let rates: Vec<f64> = (0..n)
            .map(|_| {
                // Multisets: draw from a small value pool to force ties.
                let pool = rng.random_range(1..10u32);
                f64::from(pool) * rng.random_range(0.5..2.0f64).round()
            })
            .collect();
        let got = coverage_rate(&rates).unwrap();
        // Brute-force order-statistic oracle: full sort, nearest rank.
        let mut sorted = rates.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((0.05 * n as f64).ceil() as usize).max(1);
        let expect = sorted[rank - 1];
        assert_eq!(got, expect, "case {case}, n = {n}");
    }
}
