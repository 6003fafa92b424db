//! Seeded deployment generation and UE classification.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::radio::rsrp_dbm;
use super::types::{
    CellKind, CellSite, RsrpMatrix, Scenario, ScenarioConfig, UeClass, UserEquipment,
};
use crate::error::{Error, Result};

const UE_PLACEMENT_RETRIES: usize = 100;

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 bounded away from zero so the log stays finite.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Generates a deployment and its frozen RSRP matrix from a seeded config.
///
/// Cells and UEs are placed uniformly at random; each UE keeps its
/// `top_k_reports` strongest links above the visibility floor and reports
/// `-inf` for the rest. A UE that sees no cell at all is re-placed up to 100
/// times before the scenario is rejected as infeasible. The result is a pure
/// function of the config, including the seed.
pub fn generate_deployment(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = cfg.area;

    let cells: Vec<CellSite> = (0..cfg.n_cells)
        .map(|id| {
            let position = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            let (kind, tx_power) = if id < cfg.macro_count {
                (CellKind::Macro, cfg.macro_tx_power)
            } else {
                (CellKind::Small, cfg.small_tx_power)
            };
            CellSite { id, position, kind, tx_power }
        })
        .collect();

    let mut dbm = Array2::from_elem((cfg.n_cells, cfg.n_ues), f64::NEG_INFINITY);
    let mut ues = Vec::with_capacity(cfg.n_ues);
    for ue in 0..cfg.n_ues {
        let mut placed = None;
        for _ in 0..=UE_PLACEMENT_RETRIES {
            let position = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            let column: Vec<f64> = cells
                .iter()
                .map(|c| {
                    let shadow = cfg.channel.shadow_sigma * standard_normal(&mut rng);
                    rsrp_dbm(c.tx_power, distance(c.position, position), &cfg.channel, shadow)
                })
                .collect();
            let mut visible: Vec<usize> = (0..cfg.n_cells)
                .filter(|&i| column[i] >= cfg.channel.visibility_floor)
                .collect();
            if visible.is_empty() {
                continue;
            }
            visible.sort_by(|&a, &b| {
                column[b].partial_cmp(&column[a]).unwrap().then(a.cmp(&b))
            });
            visible.truncate(cfg.channel.top_k_reports);
            for &i in &visible {
                dbm[(i, ue)] = column[i];
            }
            placed = Some(position);
            break;
        }
        let position = placed.ok_or(Error::InfeasibleScenario {
            ue,
            retries: UE_PLACEMENT_RETRIES,
        })?;
        ues.push(UserEquipment { id: ue, position, klass: UeClass::CellCenter });
    }

    let rsrp = RsrpMatrix { dbm };
    let klass = classify_ues(&rsrp, cfg.edge_gap_threshold);
    for (u, k) in ues.iter_mut().zip(klass) {
        u.klass = k;
    }

    Ok(Scenario {
        name: format!("s{}", cfg.seed),
        seed: cfg.seed,
        n_cells: cfg.n_cells,
        n_ues: cfg.n_ues,
        area: cfg.area,
        edge_gap_threshold: cfg.edge_gap_threshold,
        cell_virtual_edge_dist: cfg.cell_virtual_edge_dist,
        channel: cfg.channel.clone(),
        cells,
        ues,
        rsrp,
    })
}

/// Classifies each UE from its reported RSRP column.
///
/// A UE is cell-edge iff it reports at least two cells and the gap between
/// its best and second-best report is below the threshold; otherwise it is
/// cell-center.
pub fn classify_ues(rsrp: &RsrpMatrix, edge_gap_threshold: f64) -> Vec<UeClass> {
    (0..rsrp.n_ues())
        .map(|ue| {
            let cells = rsrp.reported_cells(ue);
            if cells.len() < 2 {
                return UeClass::CellCenter;
            }
            let gap = rsrp.dbm[(cells[0], ue)] - rsrp.dbm[(cells[1], ue)];
            if gap < edge_gap_threshold {
                UeClass::CellEdge
            } else {
                UeClass::CellCenter
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn classification_follows_gap_rule() {
        let rsrp = RsrpMatrix {
            dbm: arr2(&[
                [-70.0, -70.0, -75.0],
                [-80.0, -73.0, f64::NEG_INFINITY],
            ]),
        };
        let klass = classify_ues(&rsrp, 6.0);
        // Gap 10 >= 6: center. Gap 3 < 6: edge. Single report: center.
        assert_eq!(klass, vec![UeClass::CellCenter, UeClass::CellEdge, UeClass::CellCenter]);
    }

    #[test]
    fn classification_invariant_to_column_shift() {
        let mut dbm = arr2(&[[-70.0, -68.0], [-73.0, -80.0], [f64::NEG_INFINITY, -99.0]]);
        let before = classify_ues(&RsrpMatrix { dbm: dbm.clone() }, 6.0);
        for i in 0..3 {
            if dbm[(i, 0)].is_finite() {
                dbm[(i, 0)] += 7.5;
            }
        }
        let after = classify_ues(&RsrpMatrix { dbm }, 6.0);
        assert_eq!(before, after);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig { seed: 7, ..Default::default() };
        let a = generate_deployment(&cfg).unwrap();
        let b = generate_deployment(&cfg).unwrap();
        assert_eq!(a.rsrp.dbm, b.rsrp.dbm);
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.position, cb.position);
        }
    }

    #[test]
    fn generated_columns_have_reports_within_limits()  {
        let cfg = ScenarioConfig { seed: 3, ..Default::default() };
        let s = generate_deployment(&cfg).unwrap();
        s.validate().unwrap();
        for ue in 0..s.n_ues {
            let reports = s.rsrp.reported_cells(ue).len();
            assert!(reports >= 1 && reports <= s.channel.top_k_reports);
        }
    }
}
