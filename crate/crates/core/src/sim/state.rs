//! Episodic graph state: adjacency, candidate actions, transitions, rewards.

use ndarray::Array2;

use super::radio::{capacity_and_rate, capacity_bps, cell_loads};
use super::types::{ChannelParams, RewardConfig, RsrpMatrix, Scenario, UeClass};
use crate::error::{Error, Result};

/// Connecting one unconnected UE to one of its reported cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub ue_id: usize,
    pub cell_id: usize,
}

/// Network topology at one episode step.
///
/// `a_c` is symmetric with a zero diagonal; every column of `a_u` holds at
/// most one 1, and exactly one once the owning UE is connected.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    pub a_c: Array2<f64>,
    pub a_u: Array2<f64>,
    /// Unconnected UE ids in placement order.
    pub unconnected: Vec<usize>,
    pub step: usize,
}

impl GraphState {
    pub fn is_terminal(&self) -> bool {
        self.unconnected.is_empty()
    }

    pub fn serving_cell(&self, ue: usize) -> Option<usize> {
        (0..self.a_u.nrows()).find(|&i| self.a_u[(i, ue)] != 0.0)
    }

    pub fn cell_loads(&self) -> Vec<usize> {
        cell_loads(&self.a_u)
    }
}

/// Builds the initial graph: virtual cell edges by distance, cell-center UEs
/// attached to their strongest cell, cell-edge UEs queued for placement in id
/// order.
pub fn initial_graph(scenario: &Scenario) -> GraphState {
    let n = scenario.n_cells;
    let m = scenario.n_ues;
    let mut a_c = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (xi, yi) = scenario.cells[i].position;
                let (xj, yj) = scenario.cells[j].position;
                let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                if d < scenario.cell_virtual_edge_dist {
                    a_c[(i, j)] = 1.0;
                }
            }
        }
    }

    let mut a_u = Array2::zeros((n, m));
    let mut unconnected = Vec::new();
    for ue in &scenario.ues {
        match ue.klass {
            UeClass::CellCenter => {
                let best = scenario
                    .rsrp
                    .best_cell(ue.id)
                    .expect("validated scenarios report at least one cell per UE");
                a_u[(best, ue.id)] = 1.0;
            }
            UeClass::CellEdge => unconnected.push(ue.id),
        }
    }

    GraphState { a_c, a_u, unconnected, step: 0 }
}

/// Candidate actions at a non-terminal state: the head of the unconnected
/// queue paired with each of its reported cells, ordered by cell id.
pub fn valid_actions(state: &GraphState, rsrp: &RsrpMatrix) -> Result<Vec<Action>> {
    let &ue_id = state.unconnected.first().ok_or(Error::EpisodeFinished)?;
    let actions: Vec<Action> = (0..rsrp.n_cells())
        .filter(|&cell| rsrp.is_reported(cell, ue_id))
        .map(|cell_id| Action { ue_id, cell_id })
        .collect();
    debug_assert!(!actions.is_empty(), "validated scenarios report >= 1 cell per UE");
    Ok(actions)
}

/// Applies one connection, advancing the step counter.
pub fn apply_action(state: &GraphState, rsrp: &RsrpMatrix, action: Action) -> Result<GraphState> {
    let pos = state
        .unconnected
        .iter()
        .position(|&u| u == action.ue_id)
        .ok_or_else(|| {
            Error::InvalidAction(format!("UE {} is already connected", action.ue_id))
        })?;
    if !rsrp.is_reported(action.cell_id, action.ue_id) {
        return Err(Error::InvalidAction(format!(
            "UE {} does not report cell {}",
            action.ue_id, action.cell_id
        )));
    }
    let mut next = state.clone();
    next.a_u[(action.cell_id, action.ue_id)] = 1.0;
    next.unconnected.remove(pos);
    next.step += 1;
    Ok(next)
}

/// Sum of delivered rates over all connected pairs, in bits/s. Each UE's
/// delivered rate is its equal share capped by the per-UE demand.
pub fn network_throughput(state: &GraphState, rsrp: &RsrpMatrix, channel: &ChannelParams) -> f64 {
    let (_, rate) = capacity_and_rate(rsrp, &state.a_u, channel);
    state
        .a_u
        .indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|((i, j), _)| rate[(i, j)].min(channel.ue_demand))
        .sum()
}

/// Delivered rate of every UE under the current assignment; zero while
/// unconnected.
pub fn per_ue_rates(state: &GraphState, rsrp: &RsrpMatrix, channel: &ChannelParams) -> Vec<f64> {
    let (_, rate) = capacity_and_rate(rsrp, &state.a_u, channel);
    (0..rsrp.n_ues())
        .map(|ue| {
            state
                .serving_cell(ue)
                .map_or(0.0, |cell| rate[(cell, ue)].min(channel.ue_demand))
        })
        .collect()
}

/// Step reward: throughput improvement plus the weighted sum of per-cell
/// minimum connected-link capacities at the new state. Cells serving nobody
/// contribute zero to the fairness sum.
pub fn reward(
    prev: &GraphState,
    next: &GraphState,
    rsrp: &RsrpMatrix,
    channel: &ChannelParams,
    cfg: &RewardConfig,
) -> f64 {
    let delta = network_throughput(next, rsrp, channel) - network_throughput(prev, rsrp, channel);
    let n = rsrp.n_cells();
    let mut min_sum = 0.0;
    for cell in 0..n {
        let min = (0..rsrp.n_ues())
            .filter(|&ue| next.a_u[(cell, ue)] != 0.0)
            .map(|ue| capacity_bps(rsrp.dbm[(cell, ue)], channel.noise_floor, channel.bandwidth))
            .fold(f64::INFINITY, f64::min);
        if min.is_finite() {
            min_sum += min;
        }
    }
    delta + cfg.lambda / n as f64 * min_sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::types::{CellKind, CellSite, UserEquipment};
    use ndarray::arr2;

    fn unit_channel() -> ChannelParams {
        ChannelParams { bandwidth: 1.0, noise_floor: 0.0, ..ChannelParams::default() }
    }

    fn tiny_scenario() -> Scenario {
        // Two cells 100 m apart, two center UEs, one edge UE.
        let dbm = arr2(&[[-70.0, -82.0, -75.0], [-80.0, -80.0, -74.0]]);
        Scenario {
            name: "tiny".into(),
            seed: 0,
            n_cells: 2,
            n_ues: 3,
            area: (1000.0, 1000.0),
            edge_gap_threshold: 6.0,
            cell_virtual_edge_dist: 500.0,
            channel: ChannelParams::default(),
            cells: vec![
                CellSite { id: 0, position: (0.0, 0.0), kind: CellKind::Macro, tx_power: 46.0 },
                CellSite { id: 1, position: (100.0, 0.0), kind: CellKind::Small, tx_power: 30.0 },
            ],
            ues: vec![
                UserEquipment { id: 0, position: (0.0, 0.0), klass: UeClass::CellCenter },
                UserEquipment { id: 1, position: (0.0, 0.0), klass: UeClass::CellCenter },
                UserEquipment { id: 2, position: (0.0, 0.0), klass: UeClass::CellEdge },
            ],
            rsrp: RsrpMatrix { dbm },
        }
    }

    #[test]
    fn initial_graph_wires_centers_and_queues_edges() {
        let s = tiny_scenario();
        let g = initial_graph(&s);
        assert_eq!(g.a_c, arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        assert_eq!(g.serving_cell(0), Some(0));
        assert_eq!(g.serving_cell(1), Some(1));
        assert_eq!(g.unconnected, vec![2]);
        assert_eq!(g.step, 0);
    }

    #[test]
    fn all_center_scenario_is_immediately_terminal() {
        let mut s = tiny_scenario();
        s.ues[2].klass = UeClass::CellCenter;
        let g = initial_graph(&s);
        assert!(g.is_terminal());
        assert!(matches!(valid_actions(&g, &s.rsrp), Err(Error::EpisodeFinished)));
    }

    #[test]
    fn valid_actions_enumerate_reported_cells() {
        let s = tiny_scenario();
        let g = initial_graph(&s);
        let actions = valid_actions(&g, &s.rsrp).unwrap();
        assert_eq!(actions.len(), 2);
        assert_eq!(actions[0], Action { ue_id: 2, cell_id: 0 });
        assert_eq!(actions[1], Action { ue_id: 2, cell_id: 1 });
    }

    #[test]
    fn forced_action_when_single_report() {
        let mut s = tiny_scenario();
        s.rsrp.dbm[(0, 2)] = f64::NEG_INFINITY;
        let g = initial_graph(&s);
        let actions = valid_actions(&g, &s.rsrp).unwrap();
        assert_eq!(actions, vec![Action { ue_id: 2, cell_id: 1 }]);
    }

    #[test]
    fn apply_action_connects_and_terminates() {
        let s = tiny_scenario();
        let g = initial_graph(&s);
        let a = Action { ue_id: 2, cell_id: 1 };
        let next = apply_action(&g, &s.rsrp, a).unwrap();
        assert!(next.is_terminal());
        assert_eq!(next.step, 1);
        let col: Vec<f64> = (0..2).map(|i| next.a_u[(i, 2)]).collect();
        assert_eq!(col, vec![0.0, 1.0]);
        // Applying the same action twice errors.
        assert!(apply_action(&next, &s.rsrp, a).is_err());
    }

    #[test]
    fn apply_action_rejects_unreported_link() {
        let mut s = tiny_scenario();
        s.rsrp.dbm[(0, 2)] = f64::NEG_INFINITY;
        let g = initial_graph(&s);
        let err = apply_action(&g, &s.rsrp, Action { ue_id: 2, cell_id: 0 });
        assert!(matches!(err, Err(Error::InvalidAction(_))));
    }

    #[test]
    fn throughput_examples() {
        let ch = unit_channel();
        // No UEs connected: zero.
        let rsrp = RsrpMatrix { dbm: arr2(&[[10.0, 10.0]]) };
        let empty = GraphState {
            a_c: Array2::zeros((1, 1)),
            a_u: Array2::zeros((1, 2)),
            unconnected: vec![0, 1],
            step: 0,
        };
        assert_eq!(network_throughput(&empty, &rsrp, &ch), 0.0);

        // One UE alone on its cell: full capacity.
        let solo = GraphState { a_u: arr2(&[[1.0, 0.0]]), ..empty.clone() };
        let c00 = capacity_bps(10.0, 0.0, 1.0);
        assert!((network_throughput(&solo, &rsrp, &ch) - c00).abs() < 1e-12);

        // Two UEs sharing the cell: each gets half, sum unchanged.
        let shared = GraphState { a_u: arr2(&[[1.0, 1.0]]), ..empty };
        assert!((network_throughput(&shared, &rsrp, &ch) - c00).abs() < 1e-12);
    }

    #[test]
    fn reward_weights_fairness_term() {
        // lambda = 0 reduces to the throughput delta.
        let s = tiny_scenario();
        let g0 = initial_graph(&s);
        let a = valid_actions(&g0, &s.rsrp).unwrap()[0];
        let g1 = apply_action(&g0, &s.rsrp, a).unwrap();
        let r0 = reward(&g0, &g1, &s.rsrp, &s.channel, &RewardConfig { lambda: 0.0 });
        let du = network_throughput(&g1, &s.rsrp, &s.channel)
            - network_throughput(&g0, &s.rsrp, &s.channel);
        assert_eq!(r0, du);

        // Unchanged assignment: reward is exactly the fairness term.
        let r_same = reward(&g1, &g1, &s.rsrp, &s.channel, &RewardConfig { lambda: 0.5 });
        let r_same0 = reward(&g1, &g1, &s.rsrp, &s.channel, &RewardConfig { lambda: 0.0 });
        assert_eq!(r_same0, 0.0);
        assert!(r_same > 0.0);
    }

    #[test]
    fn reward_hand_evaluated_fixture() {
        // Capacities chosen so that U(prev) = 8, U(next) = 10 and the
        // per-cell minimum capacities at the next state are {1, 3}:
        // cell 0 serves caps {1, 5}, cell 1 serves caps {3, 11}.
        let ch = unit_channel();
        let cap_to_dbm = |c: f64| 10.0 * (2f64.powf(c) - 1.0).log10();
        let dbm = arr2(&[
            [cap_to_dbm(1.0), cap_to_dbm(5.0), f64::NEG_INFINITY, f64::NEG_INFINITY],
            [f64::NEG_INFINITY, f64::NEG_INFINITY, cap_to_dbm(3.0), cap_to_dbm(11.0)],
        ]);
        let rsrp = RsrpMatrix { dbm };
        let prev = GraphState {
            a_c: Array2::zeros((2, 2)),
            a_u: arr2(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0]]),
            unconnected: vec![1],
            step: 0,
        };
        let next = apply_action(&prev, &rsrp, Action { ue_id: 1, cell_id: 0 }).unwrap();
        assert!((network_throughput(&prev, &rsrp, &ch) - 8.0).abs() < 1e-9);
        assert!((network_throughput(&next, &rsrp, &ch) - 10.0).abs() < 1e-9);
        let r = reward(&prev, &next, &rsrp, &ch, &RewardConfig { lambda: 0.5 });
        // r = (10 - 8) + 0.5/2 * (1 + 3) = 3.
        assert!((r - 3.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn reward_telescopes_over_an_episode() {
        let s = tiny_scenario();
        let mut g = initial_graph(&s);
        let u0 = network_throughput(&g, &s.rsrp, &s.channel);
        let mut delta_sum = 0.0;
        while !g.is_terminal() {
            let a = valid_actions(&g, &s.rsrp).unwrap()[0];
            let next = apply_action(&g, &s.rsrp, a).unwrap();
            delta_sum += reward(&g, &next, &s.rsrp, &s.channel, &RewardConfig { lambda: 0.0 });
            g = next;
        }
        let ut = network_throughput(&g, &s.rsrp, &s.channel);
        assert_eq!(delta_sum, ut - u0);
    }
}
