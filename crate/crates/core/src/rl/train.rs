//! Rollouts, TD updates, and the training loop.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::replay::{Experience, ReplayBuffer};
use crate::error::{Error, Result};
use crate::features::{build_features, fit_norm, NormStats};
use crate::gnn::{
    action_scores, argmax, build_chain, collect_param_grads, CandidateBatch, GnnDims, GnnParams,
    Model,
};
use crate::sim::{
    apply_action, capacity_and_rate, initial_graph, per_ue_rates, reward, GraphState,
    RewardConfig, Scenario,
};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Episodes over which epsilon decays linearly from start to end.
    pub eps_decay_episodes: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Target network refresh interval, in updates.
    pub target_sync: usize,
    pub buffer_capacity: usize,
    /// Rewards are multiplied by this inside TD targets. Served rates are
    /// ~1e9 bits/s, so the default keeps Q-values O(1) for plain SGD.
    pub reward_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            gamma: 0.95,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_episodes: 1000,
            batch_size: 32,
            learning_rate: 1e-3,
            target_sync: 100,
            buffer_capacity: 10_000,
            reward_scale: 1e-9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig("gamma must lie in [0, 1)".into()));
        }
        if self.eps_end > self.eps_start {
            return Err(Error::InvalidConfig(
                "epsilon schedule must be non-increasing".into(),
            ));
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.buffer_capacity == 0 {
            return Err(Error::InvalidConfig(
                "batch size, target sync and buffer capacity must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Linear epsilon at the given episode, clamped to the end value.
pub fn epsilon_at(cfg: &TrainConfig, episode: usize) -> f64 {
    if cfg.eps_decay_episodes == 0 || episode >= cfg.eps_decay_episodes {
        return cfg.eps_end;
    }
    let t = episode as f64 / cfg.eps_decay_episodes as f64;
    cfg.eps_start * (1.0 - t) + cfg.eps_end * t
}

/// Fits the feature normalization over the benign suite: every candidate
/// graph's features along a strongest-cell completion of each scenario.
pub fn fit_norm_suite(scenarios: &[Scenario]) -> Result<NormStats> {
    let mut sets = Vec::new();
    for s in scenarios {
        let mut state = initial_graph(s);
        while !state.is_terminal() {
            let batch = CandidateBatch::from_state(&state, &s.rsrp)?;
            for k in 0..batch.k() {
                let a_u = batch.candidate_a_u(k);
                let (c, r) = capacity_and_rate(&s.rsrp, &a_u, &s.channel);
                sets.push(build_features(&c, &r, &batch.a_c, &a_u)?);
            }
            let ue = batch.ue;
            let best = s
                .rsrp
                .best_cell(ue)
                .expect("validated scenarios report at least one cell per UE");
            state = apply_action(&state, &s.rsrp, crate::sim::Action { ue_id: ue, cell_id: best })?;
        }
    }
    fit_norm(&sets)
}

#[derive(Debug)]
pub struct RolloutOutcome {
    pub experiences: Vec<Experience>,
    pub return_sum: f64,
    pub final_state: GraphState,
}

/// Runs one epsilon-greedy episode from the initial graph; greedy ties break
/// to the lowest cell id via the candidate ordering.
pub fn rollout_episode(
    model: &Model,
    scenario: &Scenario,
    scenario_idx: usize,
    explore_eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<RolloutOutcome> {
    let mut state = initial_graph(scenario);
    let mut experiences = Vec::new();
    let mut return_sum = 0.0;
    while !state.is_terminal() {
        let batch = CandidateBatch::from_state(&state, &scenario.rsrp)?;
        let explore = explore_eps > 0.0 && rng.random::<f64>() < explore_eps;
        let idx = if explore {
            rng.random_range(0..batch.k())
        } else {
            argmax(&action_scores(model, &scenario.channel, &batch, &scenario.rsrp))
        };
        let action = batch.actions[idx];
        let next = apply_action(&state, &scenario.rsrp, action)?;
        let r = reward(&state, &next, &scenario.rsrp, &scenario.channel, &model.reward);
        return_sum += r;
        experiences.push(Experience {
            scenario: scenario_idx,
            state: state.clone(),
            action_index: idx,
            action,
            reward: r,
            next_state: next.clone(),
            terminal: next.is_terminal(),
        });
        state = next;
    }
    Ok(RolloutOutcome { experiences, return_sum, final_state: state })
}

/// Greedy (epsilon = 0) completion of a scenario under the model.
pub fn greedy_rollout(model: &Model, scenario: &Scenario) -> Result<GraphState> {
    let mut state = initial_graph(scenario);
    while !state.is_terminal() {
        let batch = CandidateBatch::from_state(&state, &scenario.rsrp)?;
        let idx = argmax(&action_scores(model, &scenario.channel, &batch, &scenario.rsrp));
        state = apply_action(&state, &scenario.rsrp, batch.actions[idx])?;
    }
    Ok(state)
}

/// TD target: the scaled reward plus the discounted best next-state score,
/// or the reward alone at terminal transitions.
pub fn td_target(scaled_reward: f64, gamma: f64, max_next_score: Option<f64>) -> f64 {
    scaled_reward + gamma * max_next_score.unwrap_or(0.0)
}

/// Mean-squared TD error and its gradient with respect to the weights.
///
/// Per-sample gradients run in parallel and reduce in batch order, keeping
/// the result independent of thread scheduling.
pub fn td_grads(
    params: &GnnParams,
    target_params: &GnnParams,
    batch: &[&Experience],
    suite: &[Scenario],
    norm: &NormStats,
    gamma: f64,
    reward_scale: f64,
) -> Result<(GnnParams, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let count = batch.len() as f64;
    let per_sample: Vec<Result<(GnnParams, f64)>> = batch
        .par_iter()
        .map(|exp| {
            let scenario = &suite[exp.scenario];
            let max_next = if exp.terminal {
                None
            } else {
                let next_batch = CandidateBatch::from_state(&exp.next_state, &scenario.rsrp)?;
                let chain = build_chain(
                    target_params,
                    norm,
                    &scenario.channel,
                    &next_batch,
                    &scenario.rsrp.dbm,
                    None,
                    None,
                );
                Some(
                    chain
                        .score_values()
                        .into_iter()
                        .fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let y = td_target(reward_scale * exp.reward, gamma, max_next);

            let batch_k = CandidateBatch::from_state(&exp.state, &scenario.rsrp)?;
            let mut chain = build_chain(
                params,
                norm,
                &scenario.channel,
                &batch_k,
                &scenario.rsrp.dbm,
                Some(&[exp.action_index]),
                None,
            );
            let q = chain.tape.scalar(chain.scores[0]);
            let err = q - y;
            let mut grads = GnnParams::zeros(params.dims);
            chain.tape.backward_seeded(chain.scores[0], 2.0 * err / count);
            collect_param_grads(&chain.tape, &chain.params, &mut grads);
            Ok((grads, err * err / count))
        })
        .collect();

    let mut grads = GnnParams::zeros(params.dims);
    let mut loss = 0.0;
    for sample in per_sample {
        let (g, l) = sample?;
        grads.accumulate(&g, 1.0);
        loss += l;
    }
    Ok((grads, loss))
}

/// One plain-SGD step on the mean-squared TD loss.
pub fn dqn_update(
    params: &GnnParams,
    target_params: &GnnParams,
    batch: &[&Experience],
    suite: &[Scenario],
    norm: &NormStats,
    gamma: f64,
    learning_rate: f64,
    reward_scale: f64,
) -> Result<(GnnParams, f64)> {
    let (grads, loss) = td_grads(params, target_params, batch, suite, norm, gamma, reward_scale)?;
    let mut updated = params.clone();
    updated.sgd_step(&grads, learning_rate);
    Ok((updated, loss))
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub return_sum: f64,
    pub loss: f64,
    pub eval_coverage: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<EpisodeRecord>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,return,loss,eval_coverage\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.episode, r.return_sum, r.loss, r.eval_coverage
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Greedy coverage over the suite: pooled per-UE rates, fifth percentile.
fn eval_coverage(model: &Model, suite: &[Scenario]) -> Result<f64> {
    let mut rates = Vec::new();
    for s in suite {
        let terminal = greedy_rollout(model, s)?;
        rates.extend(per_ue_rates(&terminal, &s.rsrp, &s.channel));
    }
    crate::eval::coverage_rate(&rates)
}

/// Trains a fresh model over the scenario suite: epsilon-greedy rollouts fill
/// the replay buffer, one TD update per collected transition, the target
/// network refreshing every `target_sync` updates. Deterministic in the seed.
pub fn train(
    suite: &[Scenario],
    dims: GnnDims,
    reward_cfg: RewardConfig,
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    if suite.is_empty() {
        return Err(Error::EmptySuite);
    }
    let norm = fit_norm_suite(suite)?;
    let mut model = Model::new(GnnParams::init(dims, cfg.seed), norm, reward_cfg);
    let mut target = model.params.clone();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    let mut updates = 0usize;

    for episode in 0..cfg.episodes {
        let scenario_idx = episode % suite.len();
        let eps = epsilon_at(cfg, episode);
        let rollout = rollout_episode(&model, &suite[scenario_idx], scenario_idx, eps, &mut rng)?;
        let collected = rollout.experiences.len();
        for e in rollout.experiences {
            buffer.push(e);
        }

        let mut loss_sum = 0.0;
        let mut update_count = 0usize;
        for _ in 0..collected {
            if buffer.len() < cfg.batch_size {
                continue;
            }
            let batch = buffer.sample(cfg.batch_size, &mut rng);
            let (next_params, loss) = dqn_update(
                &model.params,
                &target,
                &batch,
                suite,
                &model.norm,
                cfg.gamma,
                cfg.learning_rate,
                cfg.reward_scale,
            )?;
            model.params = next_params;
            loss_sum += loss;
            update_count += 1;
            updates += 1;
            if updates % cfg.target_sync == 0 {
                target = model.params.clone();
            }
        }

        let coverage = eval_coverage(&model, suite)?;
        if (episode + 1) % 100 == 0 {
            log::info!(
                "episode {}/{}: eval coverage {:.4e} bits/s",
                episode + 1,
                cfg.episodes,
                coverage
            );
        }
        log.rows.push(EpisodeRecord {
            episode,
            return_sum: rollout.return_sum,
            loss: if update_count > 0 { loss_sum / update_count as f64 } else { 0.0 },
            eval_coverage: coverage,
        });
    }
    Ok((model, log))
}
