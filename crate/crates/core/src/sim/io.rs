//! Scenario files: one TOML document per scenario holding the deployment and
//! the frozen RSRP matrix in decimal dBm, `-inf` for unreported links.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{CellSite, ChannelParams, RsrpMatrix, Scenario, UserEquipment};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    seed: u64,
    #[serde(rename = "N")]
    n_cells: usize,
    #[serde(rename = "M")]
    n_ues: usize,
    area: (f64, f64),
    edge_gap_threshold: f64,
    cell_virtual_edge_dist: f64,
    #[serde(rename = "P")]
    rsrp: Vec<Vec<f64>>,
    channel: ChannelParams,
    cells: Vec<CellSite>,
    ues: Vec<UserEquipment>,
}

pub fn save_scenario(scenario: &Scenario, path: &Path) -> Result<()> {
    let file = ScenarioFile {
        seed: scenario.seed,
        n_cells: scenario.n_cells,
        n_ues: scenario.n_ues,
        area: scenario.area,
        edge_gap_threshold: scenario.edge_gap_threshold,
        cell_virtual_edge_dist: scenario.cell_virtual_edge_dist,
        rsrp: scenario
            .rsrp
            .dbm
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        channel: scenario.channel.clone(),
        cells: scenario.cells.clone(),
        ues: scenario.ues.clone(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::malformed(path, e))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| Error::malformed(path, e))?;
    if file.rsrp.len() != file.n_cells || file.rsrp.iter().any(|r| r.len() != file.n_ues) {
        return Err(Error::malformed(path, "P matrix dimensions disagree with N/M"));
    }
    let mut dbm = ndarray::Array2::zeros((file.n_cells, file.n_ues));
    for (i, row) in file.rsrp.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            dbm[(i, j)] = v;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let scenario = Scenario {
        name,
        seed: file.seed,
        n_cells: file.n_cells,
        n_ues: file.n_ues,
        area: file.area,
        edge_gap_threshold: file.edge_gap_threshold,
        cell_virtual_edge_dist: file.cell_virtual_edge_dist,
        channel: file.channel,
        cells: file.cells,
        ues: file.ues,
        rsrp: RsrpMatrix { dbm },
    };
    scenario
        .validate()
        .map_err(|e| Error::malformed(path, e))?;
    Ok(scenario)
}
