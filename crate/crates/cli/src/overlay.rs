//! `--config` file handling: optional TOML sections override built-in
//! defaults; command-line flags still win.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use cm_core::attack::AttackConfig;
use cm_core::defense::DefenseConfig;
use cm_core::rl::TrainConfig;
use cm_core::sim::{RewardConfig, ScenarioConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    gen: GenOverlay,
    #[serde(default)]
    train: TrainOverlay,
    #[serde(default)]
    defense: DefenseOverlay,
    #[serde(default)]
    attack: AttackOverlay,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenOverlay {
    area: Option<(f64, f64)>,
    macro_tx_power: Option<f64>,
    small_tx_power: Option<f64>,
    edge_gap_threshold: Option<f64>,
    cell_virtual_edge_dist: Option<f64>,
    pl0: Option<f64>,
    path_loss_exponent: Option<f64>,
    shadow_sigma: Option<f64>,
    noise_floor: Option<f64>,
    bandwidth: Option<f64>,
    visibility_floor: Option<f64>,
    top_k_reports: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainOverlay {
    episodes: Option<usize>,
    gamma: Option<f64>,
    eps_start: Option<f64>,
    eps_end: Option<f64>,
    eps_decay_episodes: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    target_sync: Option<usize>,
    buffer_capacity: Option<usize>,
    reward_scale: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefenseOverlay {
    pnr_train_range: Option<Vec<f64>>,
    kappa: Option<f64>,
    hinge_cap: Option<f64>,
    inner_steps: Option<usize>,
    finetune_episodes: Option<usize>,
    use_raw_q: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackOverlay {
    steps: Option<usize>,
    step_size: Option<f64>,
    restarts: Option<usize>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply_gen(&self, cfg: &mut ScenarioConfig) {
        let g = &self.gen;
        set!(cfg.area, g.area);
        set!(cfg.macro_tx_power, g.macro_tx_power);
        set!(cfg.small_tx_power, g.small_tx_power);
        set!(cfg.edge_gap_threshold, g.edge_gap_threshold);
        set!(cfg.cell_virtual_edge_dist, g.cell_virtual_edge_dist);
        set!(cfg.channel.pl0, g.pl0);
        set!(cfg.channel.n, g.path_loss_exponent);
        set!(cfg.channel.shadow_sigma, g.shadow_sigma);
        set!(cfg.channel.noise_floor, g.noise_floor);
        set!(cfg.channel.bandwidth, g.bandwidth);
        set!(cfg.channel.visibility_floor, g.visibility_floor);
        set!(cfg.channel.top_k_reports, g.top_k_reports);
    }

    pub fn apply_train(&self, cfg: &mut TrainConfig, reward: &mut RewardConfig) {
        let t = &self.train;
        set!(cfg.episodes, t.episodes);
        set!(cfg.gamma, t.gamma);
        set!(cfg.eps_start, t.eps_start);
        set!(cfg.eps_end, t.eps_end);
        set!(cfg.eps_decay_episodes, t.eps_decay_episodes);
        set!(cfg.batch_size, t.batch_size);
        set!(cfg.learning_rate, t.learning_rate);
        set!(cfg.target_sync, t.target_sync);
        set!(cfg.buffer_capacity, t.buffer_capacity);
        set!(cfg.reward_scale, t.reward_scale);
        set!(reward.lambda, t.lambda);
    }

    pub fn apply_defense(&self, cfg: &mut DefenseConfig) {
        let d = &self.defense;
        if let Some(v) = &d.pnr_train_range {
            cfg.pnr_train_range = v.clone();
        }
        set!(cfg.kappa, d.kappa);
        set!(cfg.hinge_cap, d.hinge_cap);
        set!(cfg.inner_steps, d.inner_steps);
        set!(cfg.finetune_episodes, d.finetune_episodes);
        set!(cfg.use_raw_q, d.use_raw_q);
    }

    pub fn apply_attack(&self, cfg: &mut AttackConfig) {
        let a = &self.attack;
        set!(cfg.steps, a.steps);
        if a.step_size.is_some() {
            cfg.step_size = a.step_size;
        }
        set!(cfg.restarts, a.restarts);
    }
}

/// Manifest payload for training runs.
pub fn train_manifest(cfg: &TrainConfig) -> anyhow::Result<toml::Value> {
    let mut t = toml::map::Map::new();
    t.insert("episodes".into(), (cfg.episodes as i64).into());
    t.insert("gamma".into(), cfg.gamma.into());
    t.insert("eps_start".into(), cfg.eps_start.into());
    t.insert("eps_end".into(), cfg.eps_end.into());
    t.insert("eps_decay_episodes".into(), (cfg.eps_decay_episodes as i64).into());
    t.insert("batch_size".into(), (cfg.batch_size as i64).into());
    t.insert("learning_rate".into(), cfg.learning_rate.into());
    t.insert("target_sync".into(), (cfg.target_sync as i64).into());
    t.insert("buffer_capacity".into(), (cfg.buffer_capacity as i64).into());
    t.insert("reward_scale".into(), cfg.reward_scale.into());
    t.insert("seed".into(), (cfg.seed as i64).into());
    Ok(toml::Value::Table(t))
}
