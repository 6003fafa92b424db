//! Deployment generation, RSRP/capacity/rate modelling, and the episodic
//! connection-management environment.

mod deploy;
mod io;
mod radio;
mod state;
mod types;

pub use deploy::{classify_ues, generate_deployment};
pub use io::{load_scenario, save_scenario};
pub use radio::{capacity_and_rate, capacity_bps, capacity_grad_per_db, rsrp_dbm};
pub use state::{
    apply_action, initial_graph, network_throughput, per_ue_rates, reward, valid_actions, Action,
    GraphState,
};
pub use types::{
    CellKind, CellSite, ChannelParams, RewardConfig, RsrpMatrix, Scenario, ScenarioConfig,
    UeClass, UserEquipment,
};
