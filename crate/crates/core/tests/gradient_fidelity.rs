//! Reverse-mode gradients of the full processing chain checked against
//! central finite differences, for the weights, the feature perturbation,
//! and the RSRP matrix.

use cm_core::features::{build_features, fit_norm, FeatureSet, NormStats};
use cm_core::gnn::{
    build_chain, collect_param_grads, CandidateBatch, GnnDims, GnnParams,
};
use cm_core::sim::{capacity_and_rate, ChannelParams, GraphState, RsrpMatrix};
use cm_core::tape::Tape;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fixture {
    params: GnnParams,
    norm: NormStats,
    channel: ChannelParams,
    batch: CandidateBatch,
    rsrp: RsrpMatrix,
    target: usize,
}

/// Small random deployment state: three cells, four UEs, the last UE queued
/// for placement with at least two candidate cells.
fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3;
    let m = 4;
    let mut dbm = Array2::from_shape_fn((n, m), |_| rng.random_range(-95.0..-60.0));
    for ((cell, _), v) in dbm.indexed_iter_mut() {
        // Drop some links, but keep the first two cells reported by every UE
        // so the queued UE always has at least two candidates.
        if cell >= 2 && rng.random::<f64>() < 0.3 {
            *v = f64::NEG_INFINITY;
        }
    }
    let rsrp = RsrpMatrix { dbm };

    let mut a_c = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < 0.7 {
                a_c[(i, j)] = 1.0;
                a_c[(j, i)] = 1.0;
            }
        }
    }
    let mut a_u = Array2::zeros((n, m));
    for ue in 0..m - 1 {
        let cells = rsrp.reported_cells(ue);
        let cell = cells[rng.random_range(0..cells.len())];
        a_u[(cell, ue)] = 1.0;
    }
    let state = GraphState { a_c, a_u, unconnected: vec![m - 1], step: 0 };
    let batch = CandidateBatch::from_state(&state, &rsrp).unwrap();

    // Normalization fitted over this batch's own candidate features.
    let sets: Vec<FeatureSet> = (0..batch.k())
        .map(|k| {
            let a_u = batch.candidate_a_u(k);
            let (c, r) = capacity_and_rate(&rsrp, &a_u, &ChannelParams::default());
            build_features(&c, &r, &batch.a_c, &a_u).unwrap()
        })
        .collect();
    let norm = fit_norm(&sets).unwrap();

    let target = (seed as usize) % batch.k();
    Fixture {
        params: GnnParams::init(GnnDims::default(), seed.wrapping_add(1000)),
        norm,
        channel: ChannelParams::default(),
        batch,
        rsrp,
        target,
    }
}

fn zero_deltas(n: usize, m: usize) -> [Array2<f64>; 3] {
    [Array2::zeros((n, 2)), Array2::zeros((n, 2)), Array2::zeros((m, 2))]
}

/// Log-probability of the target action for given weights, RSRP matrix and
/// feature deltas.
fn objective(fx: &Fixture, params: &GnnParams, dbm: &Array2<f64>, deltas: &[Array2<f64>; 3]) -> f64 {
    let mut chain = build_chain(
        params,
        &fx.norm,
        &fx.channel,
        &fx.batch,
        dbm,
        None,
        Some([&deltas[0], &deltas[1], &deltas[2]]),
    );
    let node = chain.tape.log_softmax_pick(chain.score_vec, fx.target);
    chain.tape.scalar(node)
}

struct Grads {
    rsrp: Array2<f64>,
    deltas: Vec<Array2<f64>>,
    params: GnnParams,
}

fn analytic_grads(fx: &Fixture) -> Grads {
    let (n, m) = fx.rsrp.dbm.dim();
    let deltas = zero_deltas(n, m);
    let mut chain = build_chain(
        &fx.params,
        &fx.norm,
        &fx.channel,
        &fx.batch,
        &fx.rsrp.dbm,
        None,
        Some([&deltas[0], &deltas[1], &deltas[2]]),
    );
    let node = chain.tape.log_softmax_pick(chain.score_vec, fx.target);
    chain.tape.backward(node);
    let ids = chain.feature_deltas.as_ref().unwrap();
    let mut params = GnnParams::zeros(fx.params.dims);
    collect_param_grads(&chain.tape, &chain.params, &mut params);
    Grads {
        rsrp: chain.tape.grad(chain.rsrp_leaf).clone(),
        deltas: vec![
            chain.tape.grad(ids.x_c1).clone(),
            chain.tape.grad(ids.x_c2).clone(),
            chain.tape.grad(ids.x_u).clone(),
        ],
        params,
    }
}

/// Per-coordinate relative error. The floor keeps coordinates whose exact
/// gradient is zero (dead paths) from being judged against pure
/// finite-difference rounding noise, which sits near 1e-10 at h = 1e-6.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

#[test]
fn full_chain_gradients_match_central_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let fx = fixture(seed);
        let (n, m) = fx.rsrp.dbm.dim();
        let grads = analytic_grads(&fx);

        // RSRP entries, h = 1e-4 dB. Unreported links must carry an exactly
        // zero gradient.
        let h = 1e-4;
        for i in 0..n {
            for j in 0..m {
                if !fx.rsrp.dbm[(i, j)].is_finite() {
                    assert_eq!(grads.rsrp[(i, j)], 0.0, "masked link with gradient");
                    continue;
                }
                let mut plus = fx.rsrp.dbm.clone();
                plus[(i, j)] += h;
                let mut minus = fx.rsrp.dbm.clone();
                minus[(i, j)] -= h;
                let fd = (objective(&fx, &fx.params, &plus, &zero_deltas(n, m))
                    - objective(&fx, &fx.params, &minus, &zero_deltas(n, m)))
                    / (2.0 * h);
                worst = worst.max(relative_error(grads.rsrp[(i, j)], fd));
            }
        }

        // Feature deltas, h = 1e-6: small enough that no ReLU kink falls
        // inside the difference window on these fixtures.
        let h = 1e-6;
        for (which, g) in grads.deltas.iter().enumerate() {
            let (rows, cols) = g.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let mut plus = zero_deltas(n, m);
                    plus[which][(r, c)] = h;
                    let mut minus = zero_deltas(n, m);
                    minus[which][(r, c)] = -h;
                    let fd = (objective(&fx, &fx.params, &fx.rsrp.dbm, &plus)
                        - objective(&fx, &fx.params, &fx.rsrp.dbm, &minus))
                        / (2.0 * h);
                    worst = worst.max(relative_error(g[(r, c)], fd));
                }
            }
        }

        // Weights, h = 1e-6, every entry.
        let mut flat_analytic = Vec::new();
        grads.params.for_each(|_, arr| flat_analytic.extend(arr.iter().cloned()));
        let deltas = zero_deltas(n, m);
        for (idx, &ag) in flat_analytic.iter().enumerate() {
            let mut plus = fx.params.clone();
            let mut minus = fx.params.clone();
            let mut cursor = 0usize;
            plus.for_each_mut(|_, arr| {
                for v in arr.iter_mut() {
                    if cursor == idx {
                        *v += h;
                    }
                    cursor += 1;
                }
            });
            cursor = 0;
            minus.for_each_mut(|_, arr| {
                for v in arr.iter_mut() {
                    if cursor == idx {
                        *v -= h;
                    }
                    cursor += 1;
                }
            });
            let fd = (objective(&fx, &plus, &fx.rsrp.dbm, &deltas)
                - objective(&fx, &minus, &fx.rsrp.dbm, &deltas))
                / (2.0 * h);
            worst = worst.max(relative_error(ag, fd));
        }

        assert!(
            worst <= 1e-4,
            "seed {seed}: max relative gradient error {worst:.3e}"
        );
    }
    println!("gradient fidelity: max relative error across 100 fixtures = {worst:.3e}");
}

#[test]
fn feature_assembly_gradients_are_exact() {
    // The feature maps are linear in C and R, so the tape gradients and
    // central differences of the plain builder agree to rounding.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 3;
    let m = 4;
    let c0 = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..4.0));
    let r0 = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..4.0));
    let mut a_c = Array2::zeros((n, n));
    a_c[(0, 1)] = 1.0;
    a_c[(1, 0)] = 1.0;
    a_c[(1, 2)] = 1.0;
    a_c[(2, 1)] = 1.0;
    let mut a_u = Array2::zeros((n, m));
    a_u[(0, 0)] = 1.0;
    a_u[(1, 1)] = 1.0;
    a_u[(2, 2)] = 1.0;

    let fs0 = build_features(&c0, &r0, &a_c, &a_u).unwrap();
    let feature_entry = |fs: &FeatureSet, which: usize, i: usize, j: usize| match which {
        0 => fs.x_c1[(i, j)],
        1 => fs.x_c2[(i, j)],
        _ => fs.x_u[(i, j)],
    };

    // Records the assembly with C and R as leaves and extracts one entry as
    // a scalar via one-hot products.
    let entry_grads = |which: usize, fi: usize, fj: usize| {
        let mut tape = Tape::new();
        let c = tape.leaf(c0.clone());
        let r = tape.leaf(r0.clone());
        let ac = tape.leaf(a_c.clone());
        let au = tape.leaf(a_u.clone());
        let rate_rows = tape.row_sum(r);
        let rate_cols = tape.col_sum(r);
        let cap_rows = tape.row_sum(c);
        let cap_cols = tape.col_sum(c);
        let nbr = tape.matmul(ac, rate_rows);
        let x_c1 = tape.concat_cols(nbr, rate_rows);
        let srv = tape.matmul(au, rate_cols);
        let x_c2 = tape.concat_cols(srv, cap_rows);
        let x_u = tape.concat_cols(cap_cols, rate_cols);
        let node = [x_c1, x_c2, x_u][which];
        assert_eq!(
            tape.value(node)[(fi, fj)],
            feature_entry(&fs0, which, fi, fj),
            "tape assembly disagrees with the plain builder"
        );
        let rows = tape.value(node).nrows();
        let mut row_hot = Array2::zeros((1, rows));
        row_hot[(0, fi)] = 1.0;
        let mut col_hot = Array2::zeros((2, 1));
        col_hot[(fj, 0)] = 1.0;
        let rh = tape.leaf(row_hot);
        let ch = tape.leaf(col_hot);
        let picked_row = tape.matmul(rh, node);
        let scalar = tape.matmul(picked_row, ch);
        tape.backward(scalar);
        (tape.grad(c).clone(), tape.grad(r).clone())
    };

    let h = 1e-5;
    for which in 0..3usize {
        let (rows, cols) = match which {
            0 | 1 => (n, 2),
            _ => (m, 2),
        };
        for fi in 0..rows {
            for fj in 0..cols {
                let (gc, gr) = entry_grads(which, fi, fj);
                for i in 0..n {
                    for j in 0..m {
                        // d feature / d C[(i,j)]
                        let mut cp = c0.clone();
                        cp[(i, j)] += h;
                        let mut cm = c0.clone();
                        cm[(i, j)] -= h;
                        let fd_c = (feature_entry(
                            &build_features(&cp, &r0, &a_c, &a_u).unwrap(),
                            which,
                            fi,
                            fj,
                        ) - feature_entry(
                            &build_features(&cm, &r0, &a_c, &a_u).unwrap(),
                            which,
                            fi,
                            fj,
                        )) / (2.0 * h);
                        assert!(
                            (gc[(i, j)] - fd_c).abs() <= 1e-6 * gc[(i, j)].abs().max(1.0),
                            "dX[{which}][{fi},{fj}]/dC[{i},{j}]: {} vs {fd_c}",
                            gc[(i, j)]
                        );
                        // d feature / d R[(i,j)]
                        let mut rp = r0.clone();
                        rp[(i, j)] += h;
                        let mut rm = r0.clone();
                        rm[(i, j)] -= h;
                        let fd_r = (feature_entry(
                            &build_features(&c0, &rp, &a_c, &a_u).unwrap(),
                            which,
                            fi,
                            fj,
                        ) - feature_entry(
                            &build_features(&c0, &rm, &a_c, &a_u).unwrap(),
                            which,
                            fi,
                            fj,
                        )) / (2.0 * h);
                        assert!(
                            (gr[(i, j)] - fd_r).abs() <= 1e-6 * gr[(i, j)].abs().max(1.0),
                            "dX[{which}][{fi},{fj}]/dR[{i},{j}]: {} vs {fd_r}",
                            gr[(i, j)]
                        );
                    }
                }
            }
        }
    }
}
