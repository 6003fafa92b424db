//! Robust training: adversarial fine-tuning on perturbed rollouts, and a
//! hinge policy regularizer added to the TD objective.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{attack_step_for_defense, default_step_size, pgd_solve};
use crate::error::{Error, Result};
use crate::features::NormStats;
use crate::gnn::{
    argmax, build_chain, collect_param_grads, CandidateBatch, GnnParams, Model,
};
use crate::rl::{
    dqn_update, rollout_episode, td_grads, EpisodeRecord, Experience, ReplayBuffer, TrainConfig,
    TrainLog,
};
use crate::sim::{apply_action, initial_graph, reward, GraphState, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefenseKind {
    Adversarial,
    Regularized,
}

impl DefenseKind {
    pub fn label(&self) -> &'static str {
        match self {
            DefenseKind::Adversarial => "adversarial",
            DefenseKind::Regularized => "regularized",
        }
    }
}

/// Robust-training setup. `hinge_cap` is the clamp constant of the
/// regularizer (named to avoid colliding with link capacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub kind: DefenseKind,
    /// dB budgets the inner attacker samples from during training.
    pub pnr_train_range: Vec<f64>,
    /// Weight of the regularizer in the loss.
    pub kappa: f64,
    pub hinge_cap: f64,
    /// Inner PGD steps per worst-case search.
    pub inner_steps: usize,
    pub finetune_episodes: usize,
    /// Ablation: run the hinge on raw scores instead of softmax
    /// probabilities.
    pub use_raw_q: bool,
    pub seed: u64,
}

impl DefenseConfig {
    pub fn new(kind: DefenseKind) -> Self {
        Self {
            kind,
            pnr_train_range: vec![3.0, 6.0, 9.0, 12.0, 15.0],
            kappa: 0.5,
            hinge_cap: 0.5,
            inner_steps: 10,
            finetune_episodes: 300,
            use_raw_q: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidConfig("kappa must be >= 0".into()));
        }
        if !(self.hinge_cap >= 0.0) {
            return Err(Error::InvalidConfig("hinge_cap must be >= 0".into()));
        }
        if self.pnr_train_range.is_empty() {
            return Err(Error::InvalidConfig("pnr_train_range must be non-empty".into()));
        }
        if self.pnr_train_range.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidConfig("PNR budgets must be >= 0".into()));
        }
        Ok(())
    }
}

/// Worst-case policy margin for one state: the inner maximum over perturbed
/// RSRP matrices and non-preferred actions of the probability gap to the
/// benign argmax, clamped below at `-hinge_cap`.
///
/// Returns the summed margins and the gradient with respect to the weights.
/// States with fewer than two candidates carry no policy to protect and are
/// skipped.
pub fn hinge_regularizer(
    params: &GnnParams,
    norm: &NormStats,
    states: &[(usize, &GraphState)],
    suite: &[Scenario],
    cfg: &DefenseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, GnnParams)> {
    cfg.validate()?;

    // Budgets drawn up front so the outer stream stays deterministic while
    // the per-state searches run in parallel.
    let budgets: Vec<f64> = states
        .iter()
        .map(|_| cfg.pnr_train_range[rng.random_range(0..cfg.pnr_train_range.len())])
        .collect();

    let per_state: Vec<Result<Option<(f64, Option<GnnParams>)>>> = states
        .par_iter()
        .zip(budgets)
        .map(|(&(scenario_idx, state), pnr)| {
            if state.is_terminal() {
                return Ok(None);
            }
            let scenario = &suite[scenario_idx];
            let batch = CandidateBatch::from_state(state, &scenario.rsrp)?;
            if batch.k() < 2 {
                return Ok(None);
            }
            let channel = &scenario.channel;
            let clean = build_chain(params, norm, channel, &batch, &scenario.rsrp.dbm, None, None);
            let preferred = argmax(&clean.score_values());

            let (n, m) = scenario.rsrp.dbm.dim();
            let center: Vec<f64> = scenario.rsrp.dbm.iter().cloned().collect();
            let mask: Vec<bool> = scenario.rsrp.dbm.iter().map(|v| v.is_finite()).collect();

            // Margin node: best non-preferred likelihood minus the preferred
            // one, the inner argmax re-resolved at each query point.
            let margin_chain = |p: &ndarray::Array2<f64>| {
                let mut chain = build_chain(params, norm, channel, &batch, p, None, None);
                let values = if cfg.use_raw_q {
                    chain.score_values()
                } else {
                    chain.probs()
                };
                let mut challenger = if preferred == 0 { 1 } else { 0 };
                for (i, &v) in values.iter().enumerate() {
                    if i != preferred && v > values[challenger] {
                        challenger = i;
                    }
                }
                let vec_node = if cfg.use_raw_q {
                    chain.score_vec
                } else {
                    chain.tape.softmax(chain.score_vec)
                };
                let best_other = chain.tape.pick(vec_node, challenger);
                let own = chain.tape.pick(vec_node, preferred);
                let margin = chain.tape.sub(best_other, own);
                (chain, margin)
            };

            let mut eval = |x: &[f64]| {
                let p =
                    ndarray::Array2::from_shape_vec((n, m), x.to_vec()).expect("flat length fixed");
                let (mut chain, margin) = margin_chain(&p);
                let value = chain.tape.scalar(margin);
                chain.tape.backward(margin);
                (value, chain.tape.grad(chain.rsrp_leaf).iter().cloned().collect())
            };
            // A single clean-start restart consumes no randomness.
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let out = pgd_solve(
                &center,
                &mask,
                pnr,
                cfg.inner_steps,
                default_step_size(pnr, cfg.inner_steps),
                1,
                &mut unused,
                &mut eval,
            );

            if out.best_objective > -cfg.hinge_cap {
                let worst =
                    ndarray::Array2::from_shape_vec((n, m), out.best).expect("shape fixed");
                let (mut chain, margin) = margin_chain(&worst);
                chain.tape.backward(margin);
                let mut grads = GnnParams::zeros(params.dims);
                collect_param_grads(&chain.tape, &chain.params, &mut grads);
                Ok(Some((out.best_objective, Some(grads))))
            } else {
                Ok(Some((-cfg.hinge_cap, None)))
            }
        })
        .collect();

    let mut total = 0.0;
    let mut grads = GnnParams::zeros(params.dims);
    for state_result in per_state {
        if let Some((term, state_grads)) = state_result? {
            total += term;
            if let Some(g) = state_grads {
                grads.accumulate(&g, 1.0);
            }
        }
    }
    Ok((total, grads))
}

/// One SGD step on `TD-MSE + kappa * R_DQN`. With `kappa = 0` this performs
/// exactly the plain TD update, consuming no randomness.
#[allow(clippy::too_many_arguments)]
pub fn regularized_update(
    params: &GnnParams,
    target_params: &GnnParams,
    batch: &[&Experience],
    suite: &[Scenario],
    norm: &NormStats,
    gamma: f64,
    learning_rate: f64,
    reward_scale: f64,
    cfg: &DefenseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(GnnParams, f64)> {
    let (mut grads, mut loss) =
        td_grads(params, target_params, batch, suite, norm, gamma, reward_scale)?;
    if cfg.kappa > 0.0 {
        let states: Vec<(usize, &GraphState)> =
            batch.iter().map(|e| (e.scenario, &e.state)).collect();
        let (r_dqn, reg_grads) = hinge_regularizer(params, norm, &states, suite, cfg, rng)?;
        loss += cfg.kappa * r_dqn;
        grads.accumulate(&reg_grads, cfg.kappa);
    }
    let mut updated = params.clone();
    updated.sgd_step(&grads, learning_rate);
    Ok((updated, loss))
}

/// Fine-tunes a trained model, alternating benign and attacked episodes 1:1.
///
/// In attacked episodes the policy picks actions from a PGD-perturbed view of
/// the RSRP matrix (physical surface, budget sampled per step from the
/// training range), while rewards and transitions come from the true
/// environment. All experiences feed plain TD updates.
pub fn adversarial_finetune(
    model: &Model,
    suite: &[Scenario],
    cfg: &DefenseConfig,
    train_cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    train_cfg.validate()?;
    if cfg.finetune_episodes == 0 {
        return Ok((model.clone(), TrainLog::default()));
    }
    let mut out = model.clone();
    let mut target = out.params.clone();
    let mut buffer = ReplayBuffer::new(train_cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    let mut updates = 0usize;

    for episode in 0..cfg.finetune_episodes {
        let scenario_idx = episode % suite.len();
        let scenario = &suite[scenario_idx];
        let attacked = episode % 2 == 1;

        let (experiences, return_sum) = if attacked {
            perturbed_rollout(&out, scenario, scenario_idx, cfg, &mut rng)?
        } else {
            let rollout =
                rollout_episode(&out, scenario, scenario_idx, train_cfg.eps_end, &mut rng)?;
            (rollout.experiences, rollout.return_sum)
        };
        let collected = experiences.len();
        for e in experiences {
            buffer.push(e);
        }

        let mut loss_sum = 0.0;
        let mut update_count = 0usize;
        for _ in 0..collected {
            if buffer.len() < train_cfg.batch_size {
                continue;
            }
            let batch = buffer.sample(train_cfg.batch_size, &mut rng);
            let (next, loss) = dqn_update(
                &out.params,
                &target,
                &batch,
                suite,
                &out.norm,
                train_cfg.gamma,
                train_cfg.learning_rate,
                train_cfg.reward_scale,
            )?;
            out.params = next;
            loss_sum += loss;
            update_count += 1;
            updates += 1;
            if updates % train_cfg.target_sync == 0 {
                target = out.params.clone();
            }
        }
        push_record(&mut log, episode, return_sum, loss_sum, update_count, &out, suite)?;
    }
    out.defense = Some(cfg.clone());
    Ok((out, log))
}

/// Fine-tunes a trained model with the hinge regularizer added to every TD
/// update; rollouts stay benign.
pub fn regularized_finetune(
    model: &Model,
    suite: &[Scenario],
    cfg: &DefenseConfig,
    train_cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    cfg.validate()?;
    train_cfg.validate()?;
    if cfg.finetune_episodes == 0 {
        return Ok((model.clone(), TrainLog::default()));
    }
    let mut out = model.clone();
    let mut target = out.params.clone();
    let mut buffer = ReplayBuffer::new(train_cfg.buffer_capacity);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    let mut updates = 0usize;

    for episode in 0..cfg.finetune_episodes {
        let scenario_idx = episode % suite.len();
        let rollout = rollout_episode(
            &out,
            &suite[scenario_idx],
            scenario_idx,
            train_cfg.eps_end,
            &mut rng,
        )?;
        let collected = rollout.experiences.len();
        let return_sum = rollout.return_sum;
        for e in rollout.experiences {
            buffer.push(e);
        }

        let mut loss_sum = 0.0;
        let mut update_count = 0usize;
        for _ in 0..collected {
            if buffer.len() < train_cfg.batch_size {
                continue;
            }
            let batch = buffer.sample(train_cfg.batch_size, &mut rng);
            let (next, loss) = regularized_update(
                &out.params,
                &target,
                &batch,
                suite,
                &out.norm,
                train_cfg.gamma,
                train_cfg.learning_rate,
                train_cfg.reward_scale,
                cfg,
                &mut rng,
            )?;
            out.params = next;
            loss_sum += loss;
            update_count += 1;
            updates += 1;
            if updates % train_cfg.target_sync == 0 {
                target = out.params.clone();
            }
        }
        push_record(&mut log, episode, return_sum, loss_sum, update_count, &out, suite)?;
    }
    out.defense = Some(cfg.clone());
    Ok((out, log))
}

/// Dispatches on the configured defense kind.
pub fn finetune(
    model: &Model,
    suite: &[Scenario],
    cfg: &DefenseConfig,
    train_cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    match cfg.kind {
        DefenseKind::Adversarial => adversarial_finetune(model, suite, cfg, train_cfg),
        DefenseKind::Regularized => regularized_finetune(model, suite, cfg, train_cfg),
    }
}

fn push_record(
    log: &mut TrainLog,
    episode: usize,
    return_sum: f64,
    loss_sum: f64,
    update_count: usize,
    model: &Model,
    suite: &[Scenario],
) -> Result<()> {
    let mut rates = Vec::new();
    for s in suite {
        let terminal = crate::rl::greedy_rollout(model, s)?;
        rates.extend(crate::sim::per_ue_rates(&terminal, &s.rsrp, &s.channel));
    }
    log.rows.push(EpisodeRecord {
        episode,
        return_sum,
        loss: if update_count > 0 { loss_sum / update_count as f64 } else { 0.0 },
        eval_coverage: crate::eval::coverage_rate(&rates)?,
    });
    Ok(())
}

/// One attacked episode: the policy acts greedily on a per-step PGD-perturbed
/// RSRP view; rewards come from the unperturbed environment.
fn perturbed_rollout(
    model: &Model,
    scenario: &Scenario,
    scenario_idx: usize,
    cfg: &DefenseConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Experience>, f64)> {
    let mut state = initial_graph(scenario);
    let mut experiences = Vec::new();
    let mut return_sum = 0.0;
    while !state.is_terminal() {
        let batch = CandidateBatch::from_state(&state, &scenario.rsrp)?;
        let pnr = cfg.pnr_train_range[rng.random_range(0..cfg.pnr_train_range.len())];
        let (action, idx) =
            attack_step_for_defense(model, scenario, &batch, pnr, cfg.inner_steps, rng)?;
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
    Ok((experiences, return_sum))
}
