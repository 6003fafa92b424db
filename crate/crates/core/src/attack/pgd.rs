//! Projected gradient ascent on an L-infinity ball.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Outcome of one solve: the best iterate over all steps and restarts.
#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub best: Vec<f64>,
    pub best_objective: f64,
    /// Objective at every evaluated iterate, restart-major, starting point
    /// included.
    pub trace: Vec<f64>,
    /// Max-norm of the returned perturbation over the masked coordinates.
    pub achieved_norm: f64,
}

/// Default step size: 2.5 * budget / steps.
pub fn default_step_size(budget: f64, steps: usize) -> f64 {
    if steps == 0 {
        0.0
    } else {
        2.5 * budget / steps as f64
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Maximizes `eval`'s objective over the ball `|x - center|_inf <= budget`,
/// restricted to coordinates where `mask` is true; masked-out coordinates
/// never move. Restart 0 starts from the clean point, further restarts from
/// seeded uniform points in the ball. `eval` returns the objective and its
/// gradient at the query point.
pub fn pgd_solve(
    center: &[f64],
    mask: &[bool],
    budget: f64,
    steps: usize,
    step_size: f64,
    restarts: usize,
    rng: &mut ChaCha8Rng,
    eval: &mut dyn FnMut(&[f64]) -> (f64, Vec<f64>),
) -> PgdOutcome {
    assert_eq!(center.len(), mask.len());
    assert!(budget >= 0.0);
    let restarts = restarts.max(1);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(restarts * (steps + 1));
    for restart in 0..restarts {
        let mut x = center.to_vec();
        if restart > 0 && budget > 0.0 {
            for i in 0..x.len() {
                if mask[i] {
                    x[i] = center[i] + rng.random_range(-budget..=budget);
                }
            }
        }
        let (mut objective, mut grad) = eval(&x);
        trace.push(objective);
        if best.as_ref().is_none_or(|(b, _)| objective > *b) {
            best = Some((objective, x.clone()));
        }
        for _ in 0..steps {
            for i in 0..x.len() {
                if !mask[i] {
                    continue;
                }
                let lo = center[i] - budget;
                let hi = center[i] + budget;
                x[i] = (x[i] + step_size * sign(grad[i])).clamp(lo, hi);
            }
            let (next_obj, next_grad) = eval(&x);
            objective = next_obj;
            grad = next_grad;
            trace.push(objective);
            if best.as_ref().is_none_or(|(b, _)| objective > *b) {
                best = Some((objective, x.clone()));
            }
        }
    }

    let (best_objective, best) = best.expect("at least one restart ran");
    let achieved_norm = best
        .iter()
        .zip(center)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((b, c), _)| (b - c).abs())
        .fold(0.0, f64::max);
    PgdOutcome { best, best_objective, trace, achieved_norm }
}
