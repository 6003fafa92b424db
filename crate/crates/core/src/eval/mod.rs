//! Baselines, metrics, and experiment sweeps.

mod experiment;
mod svg;

pub use experiment::{run_experiment, ExperimentPlan, GridCell, MetricsRow};
pub use svg::write_line_chart;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::{
    apply_action, initial_graph, network_throughput, per_ue_rates, valid_actions, Action,
    ChannelParams, GraphState, RsrpMatrix, Scenario,
};

/// Fifth-percentile rate by the nearest-rank definition: sort ascending and
/// take the ceil(0.05 n)-th element (1-based).
pub fn coverage_rate(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = rates.len();
    let rank = n.div_ceil(20); // ceil(0.05 n), exactly
    let mut sorted = rates.to_vec();
    let (_, nth, _) = sorted.select_nth_unstable_by(rank - 1, |a, b| a.partial_cmp(b).unwrap());
    Ok(*nth)
}

/// Sum of served rates at a state; identical to the network throughput.
pub fn capacity_metric(state: &GraphState, rsrp: &RsrpMatrix, channel: &ChannelParams) -> f64 {
    network_throughput(state, rsrp, channel)
}

/// Completes a state by greedily attaching every queued UE to its strongest
/// cell according to `decision_dbm` (which may be a noisy copy of the true
/// matrix); ties go to the lowest cell id and unreported links are never
/// selected.
pub fn maxrsrp_complete(
    state: &GraphState,
    rsrp: &RsrpMatrix,
    decision_dbm: &Array2<f64>,
) -> Result<GraphState> {
    let mut state = state.clone();
    while !state.is_terminal() {
        let actions = valid_actions(&state, rsrp)?;
        let ue = actions[0].ue_id;
        let best = actions
            .iter()
            .map(|a| a.cell_id)
            .max_by(|&a, &b| {
                decision_dbm[(a, ue)]
                    .partial_cmp(&decision_dbm[(b, ue)])
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .expect("non-terminal states have candidates");
        state = apply_action(&state, rsrp, Action { ue_id: ue, cell_id: best })?;
    }
    Ok(state)
}

/// The greedy strongest-cell baseline on the true RSRP matrix.
pub fn maxrsrp_policy(scenario: &Scenario) -> Result<GraphState> {
    maxrsrp_complete(&initial_graph(scenario), &scenario.rsrp, &scenario.rsrp.dbm)
}

/// Uniform-noise baseline: per instance, the baseline decides on
/// `P + U(-pnr, pnr)` applied to reported links, while the realized rates
/// come from the true matrix. Returns (mean coverage, mean capacity) over
/// the instances.
pub fn noisy_maxrsrp_eval(
    scenario: &Scenario,
    pnr_db: f64,
    instances: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let runs = noisy_maxrsrp_runs(scenario, pnr_db, instances, rng)?;
    let mut coverage_sum = 0.0;
    let mut capacity_sum = 0.0;
    let count = runs.len() as f64;
    for (rates, capacity) in &runs {
        coverage_sum += coverage_rate(rates)?;
        capacity_sum += capacity;
    }
    Ok((coverage_sum / count, capacity_sum / count))
}

/// Per-instance (rates, capacity) pairs of the uniform-noise baseline.
pub fn noisy_maxrsrp_runs(
    scenario: &Scenario,
    pnr_db: f64,
    instances: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, f64)>> {
    if instances == 0 {
        return Err(Error::EmptyInput);
    }
    let mut out = Vec::with_capacity(instances);
    for _ in 0..instances {
        let noisy = scenario.rsrp.dbm.mapv(|p| {
            if p.is_finite() && pnr_db > 0.0 {
                p + rng.random_range(-pnr_db..=pnr_db)
            } else {
                p
            }
        });
        let terminal = maxrsrp_complete(&initial_graph(scenario), &scenario.rsrp, &noisy)?;
        let rates = per_ue_rates(&terminal, &scenario.rsrp, &scenario.channel);
        let capacity = capacity_metric(&terminal, &scenario.rsrp, &scenario.channel);
        out.push((rates, capacity));
    }
    Ok(out)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
