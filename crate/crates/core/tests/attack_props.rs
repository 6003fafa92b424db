//! Attack-engine invariants: ball containment, zero-budget neutrality,
//! masking exactness, the patch/physical reduction, and surrogate identity.

use cm_core::attack::{
    blackbox_transfer, digital_attack, patch_attack, physical_attack, run_attacked_episode,
    AttackConfig, AttackMode, Perturbation, Surface, TargetSpec,
};
use cm_core::gnn::{CandidateBatch, GnnDims, GnnParams, Model};
use cm_core::rl::{fit_norm_suite, greedy_rollout};
use cm_core::sim::{generate_deployment, initial_graph, Scenario, ScenarioConfig, RewardConfig};

fn scenario() -> Scenario {
    generate_deployment(&ScenarioConfig { seed: 31, n_ues: 16, ..Default::default() }).unwrap()
}

fn model(scenario: &Scenario, seed: u64) -> Model {
    let suite = std::slice::from_ref(scenario);
    Model::new(
        GnnParams::init(GnnDims::default(), seed),
        fit_norm_suite(suite).unwrap(),
        RewardConfig::default(),
    )
}

fn macro_target(scenario: &Scenario) -> TargetSpec {
    TargetSpec::MacroOverload { cell_id: scenario.macro_cells()[0] }
}

#[test]
fn ball_containment_on_every_surface() {
    let s = scenario();
    let m = model(&s, 1);
    for (surface, budget) in [
        (Surface::Physical, 9.0),
        (Surface::Patch, 20.0),
        (Surface::Digital, 0.064),
    ] {
        let mut cfg = AttackConfig::new(surface, budget, macro_target(&s));
        cfg.steps = 8;
        if surface == Surface::Patch {
            cfg.patch_mask = (0..8).collect();
        }
        let run = run_attacked_episode(&m, &m, &s, &cfg).unwrap();
        assert!(!run.steps.is_empty());
        for step in &run.steps {
            assert!(step.achieved_norm <= budget + 1e-9, "{surface:?}: {}", step.achieved_norm);
            assert!(step.perturbation.max_abs() <= budget + 1e-9);
            // Restart 0 starts clean, so the best objective never loses to
            // the clean point.
            let clean = step.objective_trace[0];
            let best = step
                .objective_trace
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best >= clean);
        }
    }
}

#[test]
fn zero_budget_attacks_are_neutral() {
    let s = scenario();
    let m = model(&s, 2);
    let benign = greedy_rollout(&m, &s).unwrap();
    for surface in [Surface::Physical, Surface::Digital, Surface::Patch] {
        let mut cfg = AttackConfig::new(surface, 0.0, macro_target(&s));
        cfg.steps = 6;
        if surface == Surface::Patch {
            cfg.patch_mask = (0..s.n_ues).collect();
        }
        let run = run_attacked_episode(&m, &m, &s, &cfg).unwrap();
        assert_eq!(run.final_state, benign, "{surface:?} with budget 0 changed the episode");
        for step in &run.steps {
            assert_eq!(step.action_before, step.action_after);
            assert_eq!(step.achieved_norm, 0.0);
        }
    }
}

#[test]
fn patch_with_full_mask_reduces_to_physical_bitwise() {
    let s = scenario();
    let m = model(&s, 3);
    let mut physical_cfg = AttackConfig::new(Surface::Physical, 12.0, macro_target(&s));
    physical_cfg.steps = 10;
    physical_cfg.restarts = 2;
    physical_cfg.seed = 77;
    let mut patch_cfg = physical_cfg.clone();
    patch_cfg.surface = Surface::Patch;
    patch_cfg.patch_mask = (0..s.n_ues).collect();

    let a = physical_attack(&m, &s, &physical_cfg).unwrap();
    let b = patch_attack(&m, &s, &patch_cfg).unwrap();
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.steps.len(), b.steps.len());
    for (sa, sb) in a.steps.iter().zip(&b.steps) {
        let (Perturbation::Rsrp(da), Perturbation::Rsrp(db)) =
            (&sa.perturbation, &sb.perturbation)
        else {
            panic!("physical surfaces perturb the RSRP matrix");
        };
        for (x, y) in da.iter().zip(db.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(sa.objective_trace, sb.objective_trace);
    }
}

#[test]
fn perturbations_vanish_on_masked_links_and_columns() {
    let s = scenario();
    let m = model(&s, 4);
    let mask: Vec<usize> = vec![0, 3, 5];
    let mut cfg = AttackConfig::new(Surface::Patch, 20.0, macro_target(&s));
    cfg.steps = 10;
    cfg.patch_mask = mask.clone();
    let run = patch_attack(&m, &s, &cfg).unwrap();
    let mut moved = false;
    for step in &run.steps {
        let Perturbation::Rsrp(delta) = &step.perturbation else { unreachable!() };
        for ((cell, ue), &d) in delta.indexed_iter() {
            if !mask.contains(&ue) || !s.rsrp.is_reported(cell, ue) {
                assert_eq!(d, 0.0, "leak at ({cell},{ue})");
            }
            if d != 0.0 {
                moved = true;
            }
        }
    }
    assert!(moved, "a 20 dB patch attack should move something");
}

#[test]
fn surrogate_equal_to_victim_reproduces_whitebox() {
    let s = scenario();
    let m = model(&s, 5);
    let mut cfg = AttackConfig::new(Surface::Physical, 9.0, macro_target(&s));
    cfg.steps = 8;
    cfg.seed = 9;
    let white = physical_attack(&m, &s, &cfg).unwrap();
    cfg.mode = AttackMode::Blackbox;
    let transfer = blackbox_transfer(&m, &m.clone(), &s, &cfg).unwrap();
    assert_eq!(white.final_state, transfer.final_state);
    for (a, b) in white.steps.iter().zip(&transfer.steps) {
        assert_eq!(a.objective_trace, b.objective_trace);
    }
}

#[test]
fn architecture_mismatch_is_rejected() {
    let s = scenario();
    let m = model(&s, 6);
    let mut other = m.clone();
    other.params = GnnParams::init(GnnDims { dim: 4, ..GnnDims::default() }, 1);
    let cfg = AttackConfig::new(Surface::Physical, 9.0, macro_target(&s));
    assert!(blackbox_transfer(&m, &other, &s, &cfg).is_err());
}

#[test]
fn patch_requires_a_mask_and_valid_ids() {
    let s = scenario();
    let m = model(&s, 7);
    let cfg = AttackConfig::new(Surface::Patch, 20.0, macro_target(&s));
    assert!(patch_attack(&m, &s, &cfg).is_err(), "empty mask must error");
    let mut cfg = cfg;
    cfg.patch_mask = vec![s.n_ues + 3];
    assert!(patch_attack(&m, &s, &cfg).is_err(), "out-of-range UE must error");
}

#[test]
fn non_max_norms_are_rejected() {
    let s = scenario();
    let m = model(&s, 8);
    let mut cfg = AttackConfig::new(Surface::Physical, 9.0, macro_target(&s));
    cfg.norm_order = 2.0;
    assert!(physical_attack(&m, &s, &cfg).is_err());
}

#[test]
fn digital_single_step_keeps_features_in_the_inflated_box() {
    // On a benign initial state the clean normalized features lie in [0, 1],
    // so the perturbed ones stay within [-eps, 1 + eps].
    let s = scenario();
    let m = model(&s, 9);
    let state = initial_graph(&s);
    let batch = CandidateBatch::from_state(&state, &s.rsrp).unwrap();
    let eps = 0.064;
    let mut cfg = AttackConfig::new(Surface::Digital, eps, macro_target(&s));
    cfg.steps = 12;
    let result = digital_attack(&m, &s, &batch, &cfg).unwrap();
    let Perturbation::Features { x_c1, x_c2, x_u } = &result.perturbation else {
        panic!("digital surface perturbs features");
    };
    for d in x_c1.iter().chain(x_c2.iter()).chain(x_u.iter()) {
        assert!(d.abs() <= eps + 1e-9);
    }
    assert!(result.achieved_norm <= eps + 1e-9);

    // Zero budget leaves the chosen action unchanged.
    cfg.budget = 0.0;
    let clean = digital_attack(&m, &s, &batch, &cfg).unwrap();
    assert_eq!(clean.action_before, clean.action_after);
}
