//! Augmented-Lagrangian solver: equality multipliers with quadratic
//! penalties, squared-hinge inequality terms promoted to multiplier form,
//! and a damped L-BFGS inner loop with backtracking line search.

use serde::{Deserialize, Serialize};

use super::eval::{Evaluation, Triplet};
use super::{RollingNlp, Trajectory, TrajoptError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub constraint_tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Inner stationarity tolerance on the max-norm gradient.
    pub gradient_tolerance: f64,
    /// L-BFGS memory.
    pub memory: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            constraint_tolerance: 1e-6,
            max_outer_iterations: 50,
            max_inner_iterations: 500,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e12,
            gradient_tolerance: 1e-9,
            memory: 20,
        }
    }
}

/// One outer iteration of evidence: the inner merit must not increase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub merit_start: f64,
    pub merit_end: f64,
    pub max_eq_violation: f64,
    pub max_ineq_violation: f64,
    pub penalty: f64,
    pub inner_iterations: usize,
}

/// Solver outcome. `max_constraint_violation` is stamped afterwards by the
/// independent validator, not copied from solver internals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub cost: f64,
    /// Violations as the solver saw them at the returned iterate.
    pub solver_eq_violation: f64,
    pub solver_ineq_violation: f64,
    /// Violation recomputed by `validate_trajectory`; negative until set.
    pub max_constraint_violation: f64,
    pub history: Vec<OuterRecord>,
    pub message: String,
}

struct AugmentedState {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    rho: f64,
}

impl AugmentedState {
    /// Merit value and gradient of the augmented Lagrangian at `eval`.
    fn merit(&self, eval: &Evaluation) -> f64 {
        let mut value = eval.cost;
        for (i, &c) in eval.eq.iter().enumerate() {
            value += self.lambda[i] * c + 0.5 * self.rho * c * c;
        }
        for (j, &g) in eval.ineq.iter().enumerate() {
            let shifted = self.mu[j] + self.rho * g;
            if shifted > 0.0 {
                value += (shifted * shifted - self.mu[j] * self.mu[j]) / (2.0 * self.rho);
            } else {
                value -= self.mu[j] * self.mu[j] / (2.0 * self.rho);
            }
        }
        value
    }

    fn gradient(&self, eval: &Evaluation, n_vars: usize) -> Vec<f64> {
        let mut grad = eval.grad.clone();
        let eq_weights: Vec<f64> = eval
            .eq
            .iter()
            .enumerate()
            .map(|(i, &c)| self.lambda[i] + self.rho * c)
            .collect();
        accumulate(&eval.jac_eq, &eq_weights, &mut grad);
        let ineq_weights: Vec<f64> = eval
            .ineq
            .iter()
            .enumerate()
            .map(|(j, &g)| (self.mu[j] + self.rho * g).max(0.0))
            .collect();
        accumulate(&eval.jac_ineq, &ineq_weights, &mut grad);
        debug_assert_eq!(grad.len(), n_vars);
        grad
    }

    fn update_multipliers(&mut self, eval: &Evaluation) {
        for (i, &c) in eval.eq.iter().enumerate() {
            self.lambda[i] += self.rho * c;
        }
        for (j, &g) in eval.ineq.iter().enumerate() {
            self.mu[j] = (self.mu[j] + self.rho * g).max(0.0);
        }
    }
}

fn accumulate(triplets: &[Triplet], weights: &[f64], out: &mut [f64]) {
    for &(row, col, val) in triplets {
        let w = weights[row];
        if w != 0.0 {
            out[col] += val * w;
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

/// Minimize the rolling NLP from `z0`. Deterministic: identical problem
/// and starting point reproduce the iterate sequence bit for bit.
///
/// Never fails on non-convergence; the report carries the final residuals
/// instead. Only a malformed starting point is an error.
pub fn solve(nlp: &RollingNlp, z0: &[f64]) -> Result<Trajectory, TrajoptError> {
    let settings = nlp.settings.clone();
    let mut z = z0.to_vec();
    let mut eval = nlp.evaluate(&z)?;

    let mut state = AugmentedState {
        lambda: vec![0.0; eval.eq.len()],
        mu: vec![0.0; eval.ineq.len()],
        rho: settings.initial_penalty,
    };

    let mut history = Vec::new();
    let mut total_inner = 0usize;
    let mut best: Option<(f64, f64, Vec<f64>)> = None; // (viol, cost, z)
    let mut prev_viol = f64::INFINITY;
    let mut converged = false;
    let mut message = String::new();

    for _outer in 0..settings.max_outer_iterations {
        let merit_start = state.merit(&eval);
        let (inner_iters, merit_end) =
            inner_minimize(nlp, &mut z, &mut eval, &state, &settings)?;
        total_inner += inner_iters;

        let eq_viol = eval.max_eq_violation();
        let ineq_viol = eval.max_ineq_violation();
        let viol = eq_viol.max(ineq_viol);
        history.push(OuterRecord {
            merit_start,
            merit_end,
            max_eq_violation: eq_viol,
            max_ineq_violation: ineq_viol,
            penalty: state.rho,
            inner_iterations: inner_iters,
        });

        let better = match &best {
            None => true,
            Some((bv, bc, _)) => {
                viol < bv - 1e-15 || (viol <= bv + 1e-15 && eval.cost < *bc)
            }
        };
        if better {
            best = Some((viol, eval.cost, z.clone()));
        }

        if viol <= settings.constraint_tolerance {
            converged = true;
            message = format!(
                "converged: max violation {viol:.3e} within {:.1e}",
                settings.constraint_tolerance
            );
            break;
        }

        state.update_multipliers(&eval);
        if viol > 0.25 * prev_viol {
            state.rho = (state.rho * settings.penalty_growth).min(settings.max_penalty);
        }
        prev_viol = viol;
    }

    let (z_best, viol_best) = match best {
        Some((v, _, zb)) => (zb, v),
        None => (z, f64::INFINITY),
    };
    let eval_best = nlp.evaluate(&z_best)?;
    if !converged {
        message = format!(
            "did not converge: max violation {viol_best:.3e} after {} outer iterations",
            history.len()
        );
    }
    let report = SolveReport {
        converged,
        outer_iterations: history.len(),
        inner_iterations: total_inner,
        cost: eval_best.cost,
        solver_eq_violation: eval_best.max_eq_violation(),
        solver_ineq_violation: eval_best.max_ineq_violation(),
        max_constraint_violation: -1.0,
        history,
        message,
    };
    Ok(nlp.extract(&z_best, report))
}

/// L-BFGS with Armijo backtracking on the augmented Lagrangian.
/// Returns the iteration count and the final merit value.
fn inner_minimize(
    nlp: &RollingNlp,
    z: &mut Vec<f64>,
    eval: &mut Evaluation,
    state: &AugmentedState,
    settings: &SolverSettings,
) -> Result<(usize, f64), TrajoptError> {
    let n = z.len();
    let mut merit = state.merit(eval);
    let mut grad = state.gradient(eval, n);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut gamma = 1.0;

    let grad_tol = settings.gradient_tolerance * (1.0 + merit.abs());
    let mut iters = 0usize;

    while iters < settings.max_inner_iterations {
        if inf_norm(&grad) <= grad_tol {
            break;
        }
        // Two-loop recursion.
        let mut direction: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &direction);
            alphas[i] = a;
            axpy(-a, &y_hist[i], &mut direction);
        }
        for v in direction.iter_mut() {
            *v *= gamma;
        }
        for i in 0..s_hist.len() {
            let b = rho_hist[i] * dot(&y_hist[i], &direction);
            axpy(alphas[i] - b, &s_hist[i], &mut direction);
        }
        let mut dir_deriv = dot(&grad, &direction);
        if dir_deriv >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            gamma = 1.0;
            direction = grad.iter().map(|g| -g).collect();
            dir_deriv = dot(&grad, &direction);
            if dir_deriv >= 0.0 {
                break;
            }
        }

        // Backtracking Armijo line search.
        let mut step = 1.0;
        let mut accepted = false;
        let mut z_new = Vec::new();
        let mut eval_new = None;
        let mut merit_new = merit;
        for _bt in 0..60 {
            z_new = z
                .iter()
                .zip(&direction)
                .map(|(zi, di)| zi + step * di)
                .collect();
            match nlp.evaluate(&z_new) {
                Ok(ev) => {
                    let m = state.merit(&ev);
                    if m <= merit + 1e-4 * step * dir_deriv {
                        merit_new = m;
                        eval_new = Some(ev);
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {}
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let ev = eval_new.expect("accepted step has an evaluation");
        let grad_new = state.gradient(&ev, n);

        // Curvature-guarded (damped) L-BFGS update.
        let s: Vec<f64> = z_new.iter().zip(z.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = grad_new.iter().zip(grad.iter()).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let ss = dot(&s, &s);
        if sy > 1e-12 * ss.sqrt() * dot(&y, &y).sqrt() && sy.is_finite() {
            if s_hist.len() == settings.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            gamma = sy / dot(&y, &y);
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }

        *z = z_new;
        *eval = ev;
        grad = grad_new;
        let progress = merit - merit_new;
        merit = merit_new;
        iters += 1;
        if progress <= 1e-16 * (1.0 + merit.abs()) {
            break;
        }
    }
    Ok((iters, merit))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
