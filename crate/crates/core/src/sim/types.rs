use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Macro,
    Small,
}

/// A base station. Positions are metres within the scenario area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSite {
    pub id: usize,
    pub position: (f64, f64),
    pub kind: CellKind,
    /// Transmit power in dBm.
    pub tx_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeClass {
    #[serde(rename = "cell-center")]
    CellCenter,
    #[serde(rename = "cell-edge")]
    CellEdge,
}

/// A user equipment. `klass` is assigned exactly once, when the scenario is
/// generated, before any episode starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: usize,
    pub position: (f64, f64),
    pub klass: UeClass,
}

/// Log-distance path-loss channel with per-link log-normal shadowing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path loss in dB at the 1 m reference distance.
    pub pl0: f64,
    /// Path-loss exponent.
    pub n: f64,
    /// Shadowing standard deviation in dB, frozen at generation time.
    pub shadow_sigma: f64,
    /// Receiver noise floor in dBm.
    pub noise_floor: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Links weaker than this (dBm) are not reported.
    pub visibility_floor: f64,
    /// Each UE reports at most this many strongest cells.
    pub top_k_reports: usize,
    /// Per-UE demand in bits/s: a UE never consumes more than this, so the
    /// delivered rate is `min(demand, equal share)`. Capacities and the rate
    /// matrix fed to the scorer stay uncapped.
    #[serde(default = "default_ue_demand")]
    pub ue_demand: f64,
}

fn default_ue_demand() -> f64 {
    1.5e8
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            pl0: 40.0,
            n: 3.0,
            shadow_sigma: 6.0,
            noise_floor: -104.0,
            bandwidth: 1e8,
            visibility_floor: -110.0,
            top_k_reports: 3,
            ue_demand: default_ue_demand(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n > 0.0) {
            return Err(Error::InvalidConfig("path-loss exponent must be > 0".into()));
        }
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidConfig("bandwidth must be > 0".into()));
        }
        if !(self.shadow_sigma >= 0.0) {
            return Err(Error::InvalidConfig("shadow sigma must be >= 0".into()));
        }
        if self.top_k_reports == 0 {
            return Err(Error::InvalidConfig("top_k_reports must be >= 1".into()));
        }
        if !(self.ue_demand > 0.0) {
            return Err(Error::InvalidConfig("ue_demand must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-link RSRP in dBm, cells by rows, UEs by columns. Unreported links
/// carry `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct RsrpMatrix {
    pub dbm: Array2<f64>,
}

impl RsrpMatrix {
    pub fn n_cells(&self) -> usize {
        self.dbm.nrows()
    }

    pub fn n_ues(&self) -> usize {
        self.dbm.ncols()
    }

    pub fn is_reported(&self, cell: usize, ue: usize) -> bool {
        self.dbm[(cell, ue)].is_finite()
    }

    /// Reported cells of one UE, strongest first, ties to the lowest cell id.
    pub fn reported_cells(&self, ue: usize) -> Vec<usize> {
        let mut cells: Vec<usize> = (0..self.n_cells())
            .filter(|&i| self.is_reported(i, ue))
            .collect();
        cells.sort_by(|&a, &b| {
            self.dbm[(b, ue)]
                .partial_cmp(&self.dbm[(a, ue)])
                .unwrap()
                .then(a.cmp(&b))
        });
        cells
    }

    /// Strongest reported cell of one UE, ties to the lowest cell id.
    pub fn best_cell(&self, ue: usize) -> Option<usize> {
        self.reported_cells(ue).first().copied()
    }

    pub fn validate(&self, visibility_floor: f64) -> Result<()> {
        for ue in 0..self.n_ues() {
            let mut any = false;
            for cell in 0..self.n_cells() {
                let v = self.dbm[(cell, ue)];
                if v.is_finite() {
                    any = true;
                    if v < visibility_floor {
                        return Err(Error::InvalidConfig(format!(
                            "RSRP entry ({cell},{ue}) = {v} dBm below the visibility floor"
                        )));
                    }
                } else if v != f64::NEG_INFINITY {
                    return Err(Error::InvalidConfig(format!(
                        "RSRP entry ({cell},{ue}) is neither finite nor -inf"
                    )));
                }
            }
            if !any {
                return Err(Error::InvalidConfig(format!(
                    "UE {ue} reports no cell at all"
                )));
            }
        }
        Ok(())
    }
}

/// Weight of the fairness term in the step reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub lambda: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { lambda: 0.2 }
    }
}

/// Recipe for generating one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_cells: usize,
    pub n_ues: usize,
    /// Width and height of the deployment rectangle in metres.
    pub area: (f64, f64),
    /// The first `macro_count` cells are macros, the rest small cells.
    pub macro_count: usize,
    pub macro_tx_power: f64,
    pub small_tx_power: f64,
    pub channel: ChannelParams,
    /// A UE whose best two reports differ by less than this (dB) is cell-edge.
    pub edge_gap_threshold: f64,
    /// Cells closer than this (metres) share a virtual edge.
    pub cell_virtual_edge_dist: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_cells: 6,
            n_ues: 50,
            area: (1000.0, 1000.0),
            macro_count: 2,
            macro_tx_power: 46.0,
            small_tx_power: 30.0,
            channel: ChannelParams::default(),
            edge_gap_threshold: 6.0,
            cell_virtual_edge_dist: 500.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.n_cells == 0 || self.n_ues == 0 {
            return Err(Error::InvalidConfig("need at least one cell and one UE".into()));
        }
        if self.macro_count > self.n_cells {
            return Err(Error::InvalidConfig("macro_count exceeds cell count".into()));
        }
        if !(self.area.0 > 0.0 && self.area.1 > 0.0) {
            return Err(Error::InvalidConfig("area must be positive".into()));
        }
        if self.macro_count > 0
            && self.macro_count < self.n_cells
            && !(self.macro_tx_power > self.small_tx_power)
        {
            return Err(Error::InvalidConfig(
                "macro tx power must exceed small-cell tx power".into(),
            ));
        }
        Ok(())
    }
}

/// One generated (or loaded) deployment together with its frozen RSRP matrix.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub n_cells: usize,
    pub n_ues: usize,
    pub area: (f64, f64),
    pub edge_gap_threshold: f64,
    pub cell_virtual_edge_dist: f64,
    pub channel: ChannelParams,
    pub cells: Vec<CellSite>,
    pub ues: Vec<UserEquipment>,
    pub rsrp: RsrpMatrix,
}

impl Scenario {
    /// Ids of the macro cells, ascending.
    pub fn macro_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|c| c.kind == CellKind::Macro)
            .map(|c| c.id)
            .collect()
    }

    /// Ids of the cell-edge (reshuffled) UEs, ascending.
    pub fn edge_ues(&self) -> Vec<usize> {
        self.ues
            .iter()
            .filter(|u| u.klass == UeClass::CellEdge)
            .map(|u| u.id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.cells.len() != self.n_cells || self.ues.len() != self.n_ues {
            return Err(Error::InvalidConfig(
                "cell/UE counts disagree with N/M".into(),
            ));
        }
        if self.rsrp.n_cells() != self.n_cells || self.rsrp.n_ues() != self.n_ues {
            return Err(Error::ShapeMismatch(format!(
                "RSRP matrix is {}x{}, expected {}x{}",
                self.rsrp.n_cells(),
                self.rsrp.n_ues(),
                self.n_cells,
                self.n_ues
            )));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidConfig("cell ids must be 0..N in order".into()));
            }
            let (x, y) = c.position;
            if !(0.0..=self.area.0).contains(&x) || !(0.0..=self.area.1).contains(&y) {
                return Err(Error::InvalidConfig(format!(
                    "cell {i} lies outside the deployment area"
                )));
            }
            if !c.tx_power.is_finite() {
                return Err(Error::InvalidConfig(format!("cell {i} tx power not finite")));
            }
        }
        for (j, u) in self.ues.iter().enumerate() {
            if u.id != j {
                return Err(Error::InvalidConfig("UE ids must be 0..M in order".into()));
            }
        }
        self.rsrp.validate(self.channel.visibility_floor)
    }
}
