//! Deterministic experiment grids: benign baselines, the uniform-noise
//! baseline, and attack sweeps, written as CSV rows (and convenience SVGs).

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    capacity_metric, coverage_rate, maxrsrp_policy, noisy_maxrsrp_runs, write_line_chart,
};
use crate::attack::{run_attacked_episode, AttackConfig, AttackMode, Surface, TargetSpec};
use crate::error::{Error, Result};
use crate::gnn::{GnnParams, Model};
use crate::rl::greedy_rollout;
use crate::sim::{per_ue_rates, Scenario};

/// One attack setting in the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub surface: Surface,
    pub mode: AttackMode,
    /// Normalized feature budget (digital) or PNR in dB (physical/patch).
    pub budget: f64,
    /// Number of perturbable UEs; meaningful for the patch surface only.
    pub patch_width: usize,
}

/// The full experiment: policies and defenses are implied by the model map
/// passed to [`run_experiment`]; the grid may be empty for benign-only runs.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub seeds: Vec<u64>,
    pub grid: Vec<GridCell>,
    /// PNR budgets for the uniform-noise baseline; empty to skip it.
    pub noise_pnrs: Vec<f64>,
    pub noise_instances: usize,
    pub pgd_steps: usize,
    pub pgd_restarts: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            grid: Vec::new(),
            noise_pnrs: Vec::new(),
            noise_instances: 8,
            pgd_steps: 20,
            pgd_restarts: 1,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("plan must name explicit seeds".into()));
        }
        if !self.noise_pnrs.is_empty() && self.noise_instances == 0 {
            return Err(Error::InvalidConfig("noise baseline needs instances".into()));
        }
        Ok(())
    }
}

/// One measurement. `scenario = "all"` pools per-UE rates across the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub seed: u64,
    pub policy: String,
    pub defense: String,
    pub surface: String,
    pub budget: f64,
    pub patch_width: usize,
    pub coverage: f64,
    pub capacity: f64,
    pub mean_rate: f64,
    pub episode_len: usize,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "scenario,seed,policy,defense,surface,budget,patch_width,coverage,capacity,mean_rate,episode_len";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scenario,
            self.seed,
            self.policy,
            self.defense,
            self.surface,
            self.budget,
            self.patch_width,
            self.coverage,
            self.capacity,
            self.mean_rate,
            self.episode_len
        )
    }
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(MetricsRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Key used by attack rows and the chart writer.
#[derive(Clone)]
struct RowKey {
    seed: u64,
    policy: String,
    defense: String,
    surface: String,
    budget: f64,
    patch_width: usize,
}

struct EpisodeOutcome {
    rates: Vec<f64>,
    capacity: f64,
    episode_len: usize,
}

fn outcome_rows(
    key: &RowKey,
    scenarios: &[Scenario],
    outcomes: &[EpisodeOutcome],
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::with_capacity(outcomes.len() + 1);
    let mut pooled_rates = Vec::new();
    let mut pooled_capacity = 0.0;
    let mut pooled_len = 0;
    for (scenario, o) in scenarios.iter().zip(outcomes) {
        pooled_rates.extend_from_slice(&o.rates);
        pooled_capacity += o.capacity;
        pooled_len += o.episode_len;
        rows.push(MetricsRow {
            scenario: scenario.name.clone(),
            seed: key.seed,
            policy: key.policy.clone(),
            defense: key.defense.clone(),
            surface: key.surface.clone(),
            budget: key.budget,
            patch_width: key.patch_width,
            coverage: coverage_rate(&o.rates)?,
            capacity: o.capacity,
            mean_rate: o.rates.iter().sum::<f64>() / o.rates.len() as f64,
            episode_len: o.episode_len,
        });
    }
    rows.push(MetricsRow {
        scenario: "all".into(),
        seed: key.seed,
        policy: key.policy.clone(),
        defense: key.defense.clone(),
        surface: key.surface.clone(),
        budget: key.budget,
        patch_width: key.patch_width,
        coverage: coverage_rate(&pooled_rates)?,
        capacity: pooled_capacity,
        mean_rate: pooled_rates.iter().sum::<f64>() / pooled_rates.len() as f64,
        episode_len: pooled_len,
    });
    Ok(rows)
}

/// Attack target for one scenario: overload its lowest-id macro, falling back
/// to worst-action where no macro exists.
pub fn default_target(scenario: &Scenario) -> TargetSpec {
    match scenario.macro_cells().first() {
        Some(&cell_id) => TargetSpec::MacroOverload { cell_id },
        None => TargetSpec::WorstAction,
    }
}

fn attack_config(cell: &GridCell, plan: &ExperimentPlan, scenario: &Scenario, seed: u64) -> AttackConfig {
    let mut cfg = AttackConfig::new(cell.surface, cell.budget, default_target(scenario));
    cfg.mode = cell.mode;
    cfg.steps = plan.pgd_steps;
    cfg.restarts = plan.pgd_restarts;
    cfg.seed = seed;
    if cell.surface == Surface::Patch {
        cfg.patch_mask = (0..cell.patch_width.min(scenario.n_ues)).collect();
    }
    cfg
}

/// Surrogate with random weights sharing the victim's architecture and
/// processing chain.
pub fn random_surrogate(victim: &Model, seed: u64) -> Model {
    Model::new(
        GnnParams::init(victim.params.dims, seed ^ 0xBAD5EED),
        victim.norm.clone(),
        victim.reward.clone(),
    )
}

/// Executes the plan: benign rows for the baseline and every model, the
/// uniform-noise baseline, then the attack grid (cells in parallel, rows in
/// sorted key order). Reruns with the same plan and seeds write identical
/// bytes.
pub fn run_experiment(
    plan: &ExperimentPlan,
    scenarios: &[Scenario],
    models: &BTreeMap<String, Model>,
    out_dir: Option<&Path>,
) -> Result<Vec<MetricsRow>> {
    plan.validate()?;
    if scenarios.is_empty() {
        return Err(Error::EmptySuite);
    }
    let mut rows = Vec::new();

    // Benign rows: greedy baseline plus every model, once per seed (the runs
    // are deterministic; the seed column keys the grid join).
    for &seed in &plan.seeds {
        let key = RowKey {
            seed,
            policy: "maxrsrp".into(),
            defense: "none".into(),
            surface: "none".into(),
            budget: 0.0,
            patch_width: 0,
        };
        let outcomes: Vec<EpisodeOutcome> = scenarios
            .iter()
            .map(|s| -> Result<EpisodeOutcome> {
                let terminal = maxrsrp_policy(s)?;
                Ok(EpisodeOutcome {
                    rates: per_ue_rates(&terminal, &s.rsrp, &s.channel),
                    capacity: capacity_metric(&terminal, &s.rsrp, &s.channel),
                    episode_len: terminal.step,
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(outcome_rows(&key, scenarios, &outcomes)?);

        for (label, model) in models {
            let key = RowKey {
                seed,
                policy: "gnn".into(),
                defense: label.clone(),
                surface: "none".into(),
                budget: 0.0,
                patch_width: 0,
            };
            let outcomes: Vec<EpisodeOutcome> = scenarios
                .iter()
                .map(|s| -> Result<EpisodeOutcome> {
                    let terminal = greedy_rollout(model, s)?;
                    Ok(EpisodeOutcome {
                        rates: per_ue_rates(&terminal, &s.rsrp, &s.channel),
                        capacity: capacity_metric(&terminal, &s.rsrp, &s.channel),
                        episode_len: terminal.step,
                    })
                })
                .collect::<Result<_>>()?;
            rows.extend(outcome_rows(&key, scenarios, &outcomes)?);
        }
    }

    // Uniform-noise baseline.
    for &seed in &plan.seeds {
        for (pnr_idx, &pnr) in plan.noise_pnrs.iter().enumerate() {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_add((pnr_idx as u64 + 1) << 32));
            let key = RowKey {
                seed,
                policy: "maxrsrp".into(),
                defense: "none".into(),
                surface: "uniform".into(),
                budget: pnr,
                patch_width: 0,
            };
            // Instance-level runs per scenario, then averaged per scenario
            // and over instance-level pooled suites.
            let mut per_scenario: Vec<Vec<(Vec<f64>, f64)>> = Vec::new();
            for s in scenarios {
                per_scenario.push(noisy_maxrsrp_runs(s, pnr, plan.noise_instances, &mut rng)?);
            }
            let inst = plan.noise_instances;
            for (s_idx, s) in scenarios.iter().enumerate() {
                let runs = &per_scenario[s_idx];
                let coverage =
                    runs.iter().map(|(r, _)| coverage_rate(r)).sum::<Result<f64>>()? / inst as f64;
                let capacity = runs.iter().map(|(_, c)| c).sum::<f64>() / inst as f64;
                let mean_rate = runs
                    .iter()
                    .flat_map(|(r, _)| r.iter())
                    .sum::<f64>()
                    / (inst * s.n_ues) as f64;
                rows.push(MetricsRow {
                    scenario: s.name.clone(),
                    seed,
                    policy: key.policy.clone(),
                    defense: key.defense.clone(),
                    surface: key.surface.clone(),
                    budget: pnr,
                    patch_width: 0,
                    coverage,
                    capacity,
                    mean_rate,
                    episode_len: s.edge_ues().len(),
                });
            }
            let mut pooled_cov = 0.0;
            let mut pooled_cap = 0.0;
            let mut pooled_rate_sum = 0.0;
            let mut pooled_rate_count = 0usize;
            for t in 0..inst {
                let mut pooled: Vec<f64> = Vec::new();
                let mut cap = 0.0;
                for runs in &per_scenario {
                    pooled.extend_from_slice(&runs[t].0);
                    cap += runs[t].1;
                }
                pooled_cov += coverage_rate(&pooled)?;
                pooled_cap += cap;
                pooled_rate_sum += pooled.iter().sum::<f64>();
                pooled_rate_count += pooled.len();
            }
            rows.push(MetricsRow {
                scenario: "all".into(),
                seed,
                policy: key.policy,
                defense: key.defense,
                surface: key.surface,
                budget: pnr,
                patch_width: 0,
                coverage: pooled_cov / inst as f64,
                capacity: pooled_cap / inst as f64,
                mean_rate: pooled_rate_sum / pooled_rate_count as f64,
                episode_len: scenarios.iter().map(|s| s.edge_ues().len()).sum(),
            });
        }
    }

    // Attack grid, one job per (model, cell, seed), scenarios inside the job.
    let jobs: Vec<(&String, &Model, &GridCell, u64)> = models
        .iter()
        .flat_map(|(label, model)| {
            plan.grid.iter().flat_map(move |cell| {
                plan.seeds.iter().map(move |&seed| (label, model, cell, seed))
            })
        })
        .collect();
    let job_rows: Vec<Result<Vec<MetricsRow>>> = jobs
        .par_iter()
        .map(|(label, model, cell, seed)| {
            let outcomes: Vec<EpisodeOutcome> = scenarios
                .iter()
                .map(|s| -> Result<EpisodeOutcome> {
                    let cfg = attack_config(cell, plan, s, *seed);
                    let run = match cell.mode {
                        AttackMode::Whitebox => run_attacked_episode(model, model, s, &cfg)?,
                        AttackMode::Blackbox => {
                            let surrogate = random_surrogate(model, *seed);
                            run_attacked_episode(model, &surrogate, s, &cfg)?
                        }
                    };
                    Ok(EpisodeOutcome {
                        rates: per_ue_rates(&run.final_state, &s.rsrp, &s.channel),
                        capacity: capacity_metric(&run.final_state, &s.rsrp, &s.channel),
                        episode_len: run.final_state.step,
                    })
                })
                .collect::<Result<_>>()?;
            let key = RowKey {
                seed: *seed,
                policy: "gnn".into(),
                defense: (*label).clone(),
                surface: cell.surface.label().into(),
                budget: cell.budget,
                patch_width: if cell.surface == Surface::Patch { cell.patch_width } else { 0 },
            };
            let key = RowKey {
                surface: format!("{}-{}", key.surface, cell.mode.label()),
                ..key
            };
            outcome_rows(&key, scenarios, &outcomes)
        })
        .collect();
    for r in job_rows {
        rows.extend(r?);
    }

    rows.sort_by(|a, b| {
        (&a.policy, &a.defense, &a.surface)
            .cmp(&(&b.policy, &b.defense, &b.surface))
            .then(a.budget.partial_cmp(&b.budget).unwrap())
            .then(a.patch_width.cmp(&b.patch_width))
            .then(a.seed.cmp(&b.seed))
            .then(a.scenario.cmp(&b.scenario))
    });

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), rows_to_csv(&rows))?;
        write_charts(dir, &rows)?;
    }
    Ok(rows)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Coverage-versus-budget charts from the pooled rows, one per surface,
/// series per policy/defense, seed-median.
fn write_charts(dir: &Path, rows: &[MetricsRow]) -> Result<()> {
    let pooled: Vec<&MetricsRow> = rows.iter().filter(|r| r.scenario == "all").collect();
    let mut surfaces: Vec<String> = pooled
        .iter()
        .filter(|r| r.surface != "none")
        .map(|r| r.surface.clone())
        .collect();
    surfaces.sort();
    surfaces.dedup();

    for surface in surfaces {
        let patch = surface.starts_with("patch");
        // (series label, x) -> coverage per seed.
        let mut buckets: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in pooled.iter().filter(|r| r.surface == surface) {
            let x = if patch { r.patch_width as f64 } else { r.budget };
            let series = format!("{}/{}", r.policy, r.defense);
            buckets
                .entry((series, format!("{x:020.6}")))
                .or_default()
                .push(r.coverage);
        }
        let mut series_map: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for ((series, xkey), cov) in buckets {
            let x: f64 = xkey.parse().expect("formatted above");
            series_map.entry(series).or_default().push((x, median(cov)));
        }
        let series: Vec<(String, Vec<(f64, f64)>)> = series_map.into_iter().collect();
        let x_label = if patch { "patch width (UEs)" } else if surface == "digital-whitebox" { "epsilon (normalized)" } else { "PNR (dB)" };
        write_line_chart(
            &dir.join(format!("coverage_vs_{surface}.svg")),
            &format!("Coverage under {surface}"),
            x_label,
            "coverage (bits/s)",
            &series,
        )?;
    }

    // Capacity under the uniform-noise baseline.
    let noise: Vec<&&MetricsRow> = pooled.iter().filter(|r| r.surface == "uniform").collect();
    if !noise.is_empty() {
        let mut buckets: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &noise {
            buckets.entry(format!("{:020.6}", r.budget)).or_default().push(r.capacity);
        }
        let points: Vec<(f64, f64)> = buckets
            .into_iter()
            .map(|(k, v)| (k.parse::<f64>().expect("formatted above"), median(v)))
            .collect();
        write_line_chart(
            &dir.join("capacity_vs_uniform.svg"),
            "maxRSRP capacity under uniform noise",
            "PNR (dB)",
            "capacity (bits/s)",
            &[("maxrsrp/none".to_string(), points)],
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GnnDims;
    use crate::sim::{generate_deployment, RewardConfig, ScenarioConfig};

    fn tiny_setup() -> (Vec<Scenario>, BTreeMap<String, Model>) {
        let scenarios = vec![
            generate_deployment(&ScenarioConfig { seed: 1, n_ues: 8, ..Default::default() }).unwrap(),
            generate_deployment(&ScenarioConfig { seed: 2, n_ues: 8, ..Default::default() }).unwrap(),
        ];
        let norm = crate::rl::fit_norm_suite(&scenarios).unwrap();
        let model = Model::new(GnnParams::init(GnnDims::default(), 3), norm, RewardConfig::default());
        let mut models = BTreeMap::new();
        models.insert("none".to_string(), model);
        (scenarios, models)
    }

    #[test]
    fn empty_grid_yields_benign_rows_only() {
        let (scenarios, models) = tiny_setup();
        let plan = ExperimentPlan::default();
        let rows = run_experiment(&plan, &scenarios, &models, None).unwrap();
        assert!(rows.iter().all(|r| r.surface == "none"));
        // maxrsrp + gnn, per scenario plus pooled.
        assert_eq!(rows.len(), 2 * 3);
        assert!(rows.iter().all(|r| r.coverage <= r.mean_rate));
    }

    #[test]
    fn rerun_is_byte_identical() {
        let (scenarios, models) = tiny_setup();
        let plan = ExperimentPlan {
            grid: vec![GridCell {
                surface: Surface::Physical,
                mode: AttackMode::Whitebox,
                budget: 3.0,
                patch_width: 0,
            }],
            noise_pnrs: vec![6.0],
            noise_instances: 2,
            pgd_steps: 2,
            ..Default::default()
        };
        let a = rows_to_csv(&run_experiment(&plan, &scenarios, &models, None).unwrap());
        let b = rows_to_csv(&run_experiment(&plan, &scenarios, &models, None).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn missing_seeds_are_rejected() {
        let (scenarios, models) = tiny_setup();
        let plan = ExperimentPlan { seeds: vec![], ..Default::default() };
        assert!(run_experiment(&plan, &scenarios, &models, None).is_err());
    }
}
