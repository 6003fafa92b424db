//! PGD-based evasion attacks on the trained policy through three surfaces:
//! the normalized model inputs (digital), the RSRP matrix (physical), and a
//! masked UE subset of it (patch), in white-box and surrogate black-box modes.

mod pgd;
mod surfaces;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use pgd::{default_step_size, pgd_solve, PgdOutcome};
pub use surfaces::{
    attack_step, attack_step_for_defense, blackbox_transfer, digital_attack, patch_attack,
    physical_attack, run_attacked_episode,
};

use crate::error::{Error, Result};
use crate::gnn::argmin;
use crate::sim::{Action, CellKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Digital,
    Physical,
    Patch,
}

impl Surface {
    pub fn label(&self) -> &'static str {
        match self {
            Surface::Digital => "digital",
            Surface::Physical => "physical",
            Surface::Patch => "patch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMode {
    Whitebox,
    Blackbox,
}

impl AttackMode {
    pub fn label(&self) -> &'static str {
        match self {
            AttackMode::Whitebox => "whitebox",
            AttackMode::Blackbox => "blackbox",
        }
    }
}

/// What the attacker steers towards: overloading one designated macro cell,
/// or whatever action currently looks worst to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpec {
    MacroOverload { cell_id: usize },
    WorstAction,
}

/// One attack setup. Budgets are in normalized feature units for the digital
/// surface and in dB (the PNR bound) for the physical and patch surfaces.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub surface: Surface,
    /// Perturbation norm order; only infinity is implemented.
    pub norm_order: f64,
    pub budget: f64,
    pub steps: usize,
    /// Defaults to 2.5 * budget / steps when unset.
    pub step_size: Option<f64>,
    pub restarts: usize,
    /// UE ids whose RSRP columns the patch attacker may touch.
    pub patch_mask: Vec<usize>,
    pub mode: AttackMode,
    pub target: TargetSpec,
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(surface: Surface, budget: f64, target: TargetSpec) -> Self {
        Self {
            surface,
            norm_order: f64::INFINITY,
            budget,
            steps: 20,
            step_size: None,
            restarts: 1,
            patch_mask: Vec::new(),
            mode: AttackMode::Whitebox,
            target,
            seed: 0,
        }
    }

    pub fn effective_step_size(&self) -> f64 {
        self.step_size
            .unwrap_or_else(|| default_step_size(self.budget, self.steps))
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.norm_order != f64::INFINITY {
            return Err(Error::UnsupportedNorm(self.norm_order));
        }
        if !(self.budget >= 0.0) {
            return Err(Error::InvalidConfig("attack budget must be >= 0".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if self.surface == Surface::Patch {
            if self.patch_mask.is_empty() {
                return Err(Error::EmptyPatchMask);
            }
            if let Some(&bad) = self.patch_mask.iter().find(|&&u| u >= scenario.n_ues) {
                return Err(Error::InvalidConfig(format!(
                    "patch mask names UE {bad}, scenario has {}",
                    scenario.n_ues
                )));
            }
        }
        if let TargetSpec::MacroOverload { cell_id } = self.target {
            let is_macro = scenario
                .cells
                .get(cell_id)
                .is_some_and(|c| c.kind == CellKind::Macro);
            if !is_macro {
                return Err(Error::InvalidConfig(format!(
                    "target cell {cell_id} does not exist or is not a macro"
                )));
            }
        }
        Ok(())
    }
}

/// The additive perturbation found for one episode step.
#[derive(Debug, Clone)]
pub enum Perturbation {
    /// dB offsets on the RSRP matrix; exactly zero on unreported links and
    /// outside the patch mask.
    Rsrp(Array2<f64>),
    /// Offsets on the shared normalized feature matrices.
    Features {
        x_c1: Array2<f64>,
        x_c2: Array2<f64>,
        x_u: Array2<f64>,
    },
}

impl Perturbation {
    pub fn max_abs(&self) -> f64 {
        let fold = |m: &Array2<f64>| m.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        match self {
            Perturbation::Rsrp(d) => fold(d),
            Perturbation::Features { x_c1, x_c2, x_u } => {
                fold(x_c1).max(fold(x_c2)).max(fold(x_u))
            }
        }
    }
}

/// Per-step attack artifact: the perturbation, the PGD objective trace, the
/// achieved norm, and the victim's action before/after.
#[derive(Debug, Clone)]
pub struct PerturbationResult {
    pub step: usize,
    pub perturbation: Perturbation,
    pub objective_trace: Vec<f64>,
    pub achieved_norm: f64,
    pub action_before: Action,
    pub action_after: Action,
}

/// A fully attacked episode: one result per step plus the terminal state the
/// true environment reached.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub steps: Vec<PerturbationResult>,
    pub final_state: crate::sim::GraphState,
}

/// Picks the target candidate index: the action reaching the designated
/// macro if it is available, otherwise (and for worst-action targets) the
/// candidate with the lowest current probability, ties to the lowest index.
pub fn select_target(probs: &[f64], actions: &[Action], target: &TargetSpec) -> Result<usize> {
    if actions.is_empty() || probs.len() != actions.len() {
        return Err(Error::NoCandidates);
    }
    match target {
        TargetSpec::MacroOverload { cell_id } => Ok(actions
            .iter()
            .position(|a| a.cell_id == *cell_id)
            .unwrap_or_else(|| argmin(probs))),
        TargetSpec::WorstAction => Ok(argmin(probs)),
    }
}
