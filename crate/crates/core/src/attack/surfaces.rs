//! Per-step attacks over the three surfaces and the episodic drivers.

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::pgd::pgd_solve;
use super::{AttackConfig, AttackRun, Perturbation, PerturbationResult, Surface};
use crate::error::Result;
use crate::gnn::{argmax, build_chain, CandidateBatch, Model};
use crate::sim::{apply_action, initial_graph, Action, Scenario};

use super::select_target;

/// Runs PGD for one episode step and returns the perturbation artifact plus
/// the action the victim takes on the perturbed view.
///
/// The attacker model drives target selection and gradients (equal to the
/// victim in white-box mode, a surrogate otherwise); the victim model decides
/// the action actually played against the true environment.
pub fn attack_step(
    victim: &Model,
    attacker: &Model,
    scenario: &Scenario,
    batch: &CandidateBatch,
    cfg: &AttackConfig,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(PerturbationResult, Action)> {
    let channel = &scenario.channel;
    let clean_p = &scenario.rsrp.dbm;

    let attacker_clean = build_chain(
        &attacker.params,
        &attacker.norm,
        channel,
        batch,
        clean_p,
        None,
        None,
    );
    let target = select_target(&attacker_clean.probs(), &batch.actions, &cfg.target)?;

    let victim_clean = build_chain(&victim.params, &victim.norm, channel, batch, clean_p, None, None);
    let action_before = batch.actions[argmax(&victim_clean.score_values())];

    let step_size = cfg.effective_step_size();
    match cfg.surface {
        Surface::Physical | Surface::Patch => {
            let (n, m) = clean_p.dim();
            let in_patch: Vec<bool> = match cfg.surface {
                Surface::Patch => {
                    let mut cols = vec![false; m];
                    for &u in &cfg.patch_mask {
                        cols[u] = true;
                    }
                    cols
                }
                _ => vec![true; m],
            };
            let center: Vec<f64> = clean_p.iter().cloned().collect();
            let mask: Vec<bool> = clean_p
                .indexed_iter()
                .map(|((_, j), &v)| v.is_finite() && in_patch[j])
                .collect();

            let mut eval = |x: &[f64]| {
                let p = Array2::from_shape_vec((n, m), x.to_vec()).expect("flat length fixed");
                let mut chain =
                    build_chain(&attacker.params, &attacker.norm, channel, batch, &p, None, None);
                let objective = chain.tape.log_softmax_pick(chain.score_vec, target);
                let value = chain.tape.scalar(objective);
                chain.tape.backward(objective);
                (value, chain.tape.grad(chain.rsrp_leaf).iter().cloned().collect())
            };
            let out = pgd_solve(
                &center,
                &mask,
                cfg.budget,
                cfg.steps,
                step_size,
                cfg.restarts,
                rng,
                &mut eval,
            );

            let perturbed = Array2::from_shape_vec((n, m), out.best.clone()).expect("shape fixed");
            let delta = Array2::from_shape_fn((n, m), |(i, j)| {
                if mask[i * m + j] {
                    perturbed[(i, j)] - clean_p[(i, j)]
                } else {
                    0.0
                }
            });

            let victim_view =
                build_chain(&victim.params, &victim.norm, channel, batch, &perturbed, None, None);
            let action_after = batch.actions[argmax(&victim_view.score_values())];
            Ok((
                PerturbationResult {
                    step,
                    perturbation: Perturbation::Rsrp(delta),
                    objective_trace: out.trace,
                    achieved_norm: out.achieved_norm,
                    action_before,
                    action_after,
                },
                action_after,
            ))
        }
        Surface::Digital => {
            let (n, m) = clean_p.dim();
            let sizes = [n * 2, n * 2, m * 2];
            let total: usize = sizes.iter().sum();
            let center = vec![0.0; total];
            let mask = vec![true; total];

            let split = |x: &[f64]| -> [Array2<f64>; 3] {
                let d1 = Array2::from_shape_vec((n, 2), x[..sizes[0]].to_vec()).unwrap();
                let d2 =
                    Array2::from_shape_vec((n, 2), x[sizes[0]..sizes[0] + sizes[1]].to_vec())
                        .unwrap();
                let du = Array2::from_shape_vec((m, 2), x[sizes[0] + sizes[1]..].to_vec()).unwrap();
                [d1, d2, du]
            };

            let mut eval = |x: &[f64]| {
                let [d1, d2, du] = split(x);
                let mut chain = build_chain(
                    &attacker.params,
                    &attacker.norm,
                    channel,
                    batch,
                    clean_p,
                    None,
                    Some([&d1, &d2, &du]),
                );
                let objective = chain.tape.log_softmax_pick(chain.score_vec, target);
                let value = chain.tape.scalar(objective);
                chain.tape.backward(objective);
                let ids = chain.feature_deltas.as_ref().expect("deltas recorded");
                let mut grad = Vec::with_capacity(total);
                grad.extend(chain.tape.grad(ids.x_c1).iter());
                grad.extend(chain.tape.grad(ids.x_c2).iter());
                grad.extend(chain.tape.grad(ids.x_u).iter());
                (value, grad)
            };
            let out = pgd_solve(
                &center,
                &mask,
                cfg.budget,
                cfg.steps,
                step_size,
                cfg.restarts,
                rng,
                &mut eval,
            );

            let [d1, d2, du] = split(&out.best);
            let victim_view = build_chain(
                &victim.params,
                &victim.norm,
                channel,
                batch,
                clean_p,
                None,
                Some([&d1, &d2, &du]),
            );
            let action_after = batch.actions[argmax(&victim_view.score_values())];
            Ok((
                PerturbationResult {
                    step,
                    perturbation: Perturbation::Features { x_c1: d1, x_c2: d2, x_u: du },
                    objective_trace: out.trace,
                    achieved_norm: out.achieved_norm,
                    action_before,
                    action_after,
                },
                action_after,
            ))
        }
    }
}

/// Greedy re-attack at every step: PGD against the attacker's chain for the
/// current candidate batch, the victim acting on the perturbed view, the true
/// environment advancing with the chosen action.
pub fn run_attacked_episode(
    victim: &Model,
    attacker: &Model,
    scenario: &Scenario,
    cfg: &AttackConfig,
) -> Result<AttackRun> {
    cfg.validate(scenario)?;
    victim.params.check_compatible(&attacker.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = initial_graph(scenario);
    let mut steps = Vec::new();
    while !state.is_terminal() {
        let batch = CandidateBatch::from_state(&state, &scenario.rsrp)?;
        let (result, action) =
            attack_step(victim, attacker, scenario, &batch, cfg, state.step, &mut rng)?;
        state = apply_action(&state, &scenario.rsrp, action)?;
        steps.push(result);
    }
    Ok(AttackRun { steps, final_state: state })
}

/// White-box attack on the RSRP matrix, all UEs perturbable.
pub fn physical_attack(model: &Model, scenario: &Scenario, cfg: &AttackConfig) -> Result<AttackRun> {
    run_attacked_episode(model, model, scenario, cfg)
}

/// White-box attack on the RSRP columns of the masked UE subset only.
pub fn patch_attack(model: &Model, scenario: &Scenario, cfg: &AttackConfig) -> Result<AttackRun> {
    run_attacked_episode(model, model, scenario, cfg)
}

/// PGD runs against the surrogate's chain; the resulting perturbation is
/// applied to the victim, whose actions and metrics are reported.
pub fn blackbox_transfer(
    victim: &Model,
    surrogate: &Model,
    scenario: &Scenario,
    cfg: &AttackConfig,
) -> Result<AttackRun> {
    run_attacked_episode(victim, surrogate, scenario, cfg)
}

/// Worst-action physical perturbation used inside adversarial fine-tuning:
/// runs one PGD step search and returns the action the model picks on the
/// perturbed view, with its candidate index.
pub fn attack_step_for_defense(
    model: &Model,
    scenario: &Scenario,
    batch: &CandidateBatch,
    pnr_db: f64,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Action, usize)> {
    let mut cfg = super::AttackConfig::new(
        Surface::Physical,
        pnr_db,
        super::TargetSpec::WorstAction,
    );
    cfg.steps = steps;
    let (_, action) = attack_step(model, model, scenario, batch, &cfg, 0, rng)?;
    let idx = batch
        .actions
        .iter()
        .position(|a| *a == action)
        .expect("chosen action is a candidate");
    Ok((action, idx))
}

/// Single-step digital attack on one candidate batch.
pub fn digital_attack(
    model: &Model,
    scenario: &Scenario,
    batch: &CandidateBatch,
    cfg: &AttackConfig,
) -> Result<PerturbationResult> {
    cfg.validate(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (result, _) = attack_step(model, model, scenario, batch, cfg, 0, &mut rng)?;
    Ok(result)
}
