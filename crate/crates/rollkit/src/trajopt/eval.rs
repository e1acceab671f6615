//! Direct transcription of the rolling problem: decision variables, cost,
//! equality and inequality constraints, and their analytic derivatives in
//! sparse triplet form.

use super::geometry::StepGeometry;
use super::{RollingNlp, TrajoptError};
use crate::{cross2, perp, Vec2};

/// Index helpers for the flat decision vector.
///
/// Per knot `k`: `[x, y, theta, q_act.., d, f_nA, f_tA, f_nB, f_tB]`;
/// after all knots, torques `u_k` for the first `n_steps - 1` knots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NlpLayout {
    pub n_steps: usize,
    pub m_act: usize,
}

impl NlpLayout {
    pub fn per_step(&self) -> usize {
        3 + self.m_act + 1 + 4
    }

    pub fn n_vars(&self) -> usize {
        self.n_steps * self.per_step() + (self.n_steps - 1) * self.m_act
    }

    pub fn x(&self, k: usize) -> usize {
        k * self.per_step()
    }

    pub fn q(&self, k: usize) -> usize {
        k * self.per_step() + 3
    }

    pub fn d(&self, k: usize) -> usize {
        k * self.per_step() + 3 + self.m_act
    }

    /// Forces `[f_nA, f_tA, f_nB, f_tB]`.
    pub fn f(&self, k: usize) -> usize {
        k * self.per_step() + 4 + self.m_act
    }

    pub fn u(&self, k: usize) -> usize {
        self.n_steps * self.per_step() + k * self.m_act
    }
}

/// Sparse triplet `(row, col, value)`.
pub type Triplet = (usize, usize, f64);

/// Everything the solver needs at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub grad: Vec<f64>,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub jac_eq: Vec<Triplet>,
    pub jac_ineq: Vec<Triplet>,
}

impl Evaluation {
    pub fn max_eq_violation(&self) -> f64 {
        self.eq.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    pub fn max_ineq_violation(&self) -> f64 {
        self.ineq.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Row counts for the equality blocks, in emission order.
pub(crate) struct EqLayout {
    pub n_steps: usize,
    pub m_act: usize,
}

impl EqLayout {
    /// force_x, force_y, moment, b_tan, b_norm per step.
    pub fn per_step_rows(&self) -> usize {
        5
    }

    pub fn step_row(&self, k: usize) -> usize {
        k * self.per_step_rows()
    }

    pub fn pin_row(&self) -> usize {
        self.n_steps * self.per_step_rows()
    }

    /// prismatic + objroll per transition.
    pub fn rolling_row(&self, k: usize) -> usize {
        debug_assert!(k >= 1);
        self.pin_row() + 3 + self.m_act + (k - 1) * 2
    }

    pub fn torque_row(&self, k: usize) -> usize {
        self.pin_row() + 3 + self.m_act + (self.n_steps - 1) * 2 + k * self.m_act
    }

    pub fn n_rows(&self) -> usize {
        self.torque_row(self.n_steps - 1)
    }
}

impl RollingNlp {
    /// Number of equality constraint rows.
    pub fn n_eq(&self) -> usize {
        EqLayout {
            n_steps: self.layout.n_steps,
            m_act: self.layout.m_act,
        }
        .n_rows()
    }

    /// Number of inequality constraint rows (`g <= 0`).
    pub fn n_ineq(&self) -> usize {
        let n_full = self.model.n_joints();
        self.layout.n_steps * (6 + 2 * n_full + 1 + 2)
    }

    /// Evaluate cost, constraints, and analytic derivatives at `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation, TrajoptError> {
        if z.len() != self.layout.n_vars() {
            return Err(TrajoptError::BadVariableVector(format!(
                "length {} does not match layout {}",
                z.len(),
                self.layout.n_vars()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(TrajoptError::BadVariableVector(
                "variable vector contains non-finite entries".into(),
            ));
        }
        let lay = &self.layout;
        let n = lay.n_steps;
        let m = lay.m_act;
        let n_full = self.model.n_joints();
        let eq_lay = EqLayout {
            n_steps: n,
            m_act: m,
        };

        let mut cost = 0.0;
        let mut grad = vec![0.0; lay.n_vars()];
        let mut eq = vec![0.0; eq_lay.n_rows()];
        let mut ineq = Vec::with_capacity(self.n_ineq());
        let mut jac_eq: Vec<Triplet> = Vec::with_capacity(eq_lay.n_rows() * 8);
        let mut jac_ineq: Vec<Triplet> = Vec::with_capacity(self.n_ineq() * 3);

        let tau_b = self.thumb.tangent();
        let n_b = self.thumb.normal;
        let t_b = perp(n_b);
        let mg = self.mass * self.gravity;

        let mut geoms: Vec<StepGeometry> = Vec::with_capacity(n);

        for k in 0..n {
            let xk = &z[lay.x(k)..lay.x(k) + 3];
            let qk = &z[lay.q(k)..lay.q(k) + m];
            let dk = z[lay.d(k)];
            let fk = &z[lay.f(k)..lay.f(k) + 4];
            let (f_na, f_ta, f_nb, f_tb) = (fk[0], fk[1], fk[2], fk[3]);
            let c = Vec2::new(xk[0], xk[1]);

            let geo = StepGeometry::compute(&self.model, &self.coupling, qk, c, self.radius);

            // --- cost: state tracking + contact gap ---
            for i in 0..3 {
                let e = xk[i] - self.x_goal[i];
                cost += self.q_weights[i] * e * e;
                grad[lay.x(k) + i] += 2.0 * self.q_weights[i] * e;
            }
            let gap = geo.psi.max(0.0);
            cost += self.contact_weight * gap * gap;
            if gap > 0.0 {
                let w = 2.0 * self.contact_weight * gap;
                for a in 0..m {
                    grad[lay.q(k) + a] += w * geo.dpsi_dq[a];
                }
                grad[lay.x(k)] += w * geo.dpsi_dc.x;
                grad[lay.x(k) + 1] += w * geo.dpsi_dc.y;
            }

            // --- equalities: force balance ---
            let f_a = geo.force_a(f_na, f_ta);
            let f_b = n_b * f_nb + t_b * f_tb;
            let r_force = f_a + f_b + Vec2::new(0.0, -mg);
            let row_fx = eq_lay.step_row(k);
            let row_fy = row_fx + 1;
            eq[row_fx] = r_force.x;
            eq[row_fy] = r_force.y;
            for a in 0..m {
                let df = geo.dforce_dq(f_na, f_ta, a);
                jac_eq.push((row_fx, lay.q(k) + a, df.x));
                jac_eq.push((row_fy, lay.q(k) + a, df.y));
            }
            for e_idx in 0..2 {
                let df = geo.dforce_dc(f_na, f_ta, e_idx);
                jac_eq.push((row_fx, lay.x(k) + e_idx, df.x));
                jac_eq.push((row_fy, lay.x(k) + e_idx, df.y));
            }
            jac_eq.push((row_fx, lay.f(k), geo.n.x));
            jac_eq.push((row_fy, lay.f(k), geo.n.y));
            jac_eq.push((row_fx, lay.f(k) + 1, geo.t.x));
            jac_eq.push((row_fy, lay.f(k) + 1, geo.t.y));
            jac_eq.push((row_fx, lay.f(k) + 2, n_b.x));
            jac_eq.push((row_fy, lay.f(k) + 2, n_b.y));
            jac_eq.push((row_fx, lay.f(k) + 3, t_b.x));
            jac_eq.push((row_fy, lay.f(k) + 3, t_b.y));

            // --- moment balance about the object center ---
            let p_b = self.thumb.contact_point(dk);
            let arm_a = geo.p - c;
            let arm_b = p_b - c;
            let row_m = row_fx + 2;
            eq[row_m] = cross2(arm_a, f_a) + cross2(arm_b, f_b);
            for a in 0..m {
                let v = cross2(geo.dp_dq[a], f_a) + cross2(arm_a, geo.dforce_dq(f_na, f_ta, a));
                jac_eq.push((row_m, lay.q(k) + a, v));
            }
            for e_idx in 0..2 {
                let basis = if e_idx == 0 {
                    Vec2::new(1.0, 0.0)
                } else {
                    Vec2::new(0.0, 1.0)
                };
                let v = cross2(geo.dp_dc[e_idx] - basis, f_a)
                    + cross2(arm_a, geo.dforce_dc(f_na, f_ta, e_idx))
                    + cross2(-basis, f_b);
                jac_eq.push((row_m, lay.x(k) + e_idx, v));
            }
            jac_eq.push((row_m, lay.d(k), cross2(tau_b, f_b)));
            jac_eq.push((row_m, lay.f(k), cross2(arm_a, geo.n)));
            jac_eq.push((row_m, lay.f(k) + 1, cross2(arm_a, geo.t)));
            jac_eq.push((row_m, lay.f(k) + 2, cross2(arm_b, n_b)));
            jac_eq.push((row_m, lay.f(k) + 3, cross2(arm_b, t_b)));

            // --- thumb attachment: d matches the center, object on plane ---
            let rel = c - self.thumb.origin;
            let row_bt = row_fx + 3;
            let row_bn = row_fx + 4;
            eq[row_bt] = rel.dot(&tau_b) - dk;
            eq[row_bn] = rel.dot(&n_b) - self.radius;
            jac_eq.push((row_bt, lay.x(k), tau_b.x));
            jac_eq.push((row_bt, lay.x(k) + 1, tau_b.y));
            jac_eq.push((row_bt, lay.d(k), -1.0));
            jac_eq.push((row_bn, lay.x(k), n_b.x));
            jac_eq.push((row_bn, lay.x(k) + 1, n_b.y));

            // --- inequalities ---
            // Friction cones |f_t| <= mu f_n, as two half-planes each.
            ineq.push(f_ta - self.mu_a * f_na);
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 1, 1.0));
            jac_ineq.push((ineq.len() - 1, lay.f(k), -self.mu_a));
            ineq.push(-f_ta - self.mu_a * f_na);
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 1, -1.0));
            jac_ineq.push((ineq.len() - 1, lay.f(k), -self.mu_a));
            ineq.push(f_tb - self.mu_b * f_nb);
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 3, 1.0));
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 2, -self.mu_b));
            ineq.push(-f_tb - self.mu_b * f_nb);
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 3, -1.0));
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 2, -self.mu_b));
            // Nonnegative normal forces.
            ineq.push(-f_na);
            jac_ineq.push((ineq.len() - 1, lay.f(k), -1.0));
            ineq.push(-f_nb);
            jac_ineq.push((ineq.len() - 1, lay.f(k) + 2, -1.0));
            // Joint limits on the expanded chain.
            let mut q_full = vec![0.0; n_full];
            for j in 0..n_full {
                for a in 0..m {
                    q_full[j] += self.coupling[(j, a)] * qk[a];
                }
            }
            for j in 0..n_full {
                let (lo, hi) = self.model.joint_limits[j];
                ineq.push(q_full[j] - hi);
                for a in 0..m {
                    let w = self.coupling[(j, a)];
                    if w != 0.0 {
                        jac_ineq.push((ineq.len() - 1, lay.q(k) + a, w));
                    }
                }
                ineq.push(lo - q_full[j]);
                for a in 0..m {
                    let w = self.coupling[(j, a)];
                    if w != 0.0 {
                        jac_ineq.push((ineq.len() - 1, lay.q(k) + a, -w));
                    }
                }
            }
            // No-penetration slack: psi >= min_gap.
            ineq.push(self.min_gap - geo.psi);
            for a in 0..m {
                jac_ineq.push((ineq.len() - 1, lay.q(k) + a, -geo.dpsi_dq[a]));
            }
            jac_ineq.push((ineq.len() - 1, lay.x(k), -geo.dpsi_dc.x));
            jac_ineq.push((ineq.len() - 1, lay.x(k) + 1, -geo.dpsi_dc.y));
            // Prismatic range.
            ineq.push(dk - self.d_range.1);
            jac_ineq.push((ineq.len() - 1, lay.d(k), 1.0));
            ineq.push(self.d_range.0 - dk);
            jac_ineq.push((ineq.len() - 1, lay.d(k), -1.0));

            geoms.push(geo);
        }

        // --- initial-state pins ---
        let pin = eq_lay.pin_row();
        for i in 0..3 {
            eq[pin + i] = z[lay.x(0) + i] - self.x_initial[i];
            jac_eq.push((pin + i, lay.x(0) + i, 1.0));
        }
        for a in 0..m {
            eq[pin + 3 + a] = z[lay.q(0) + a] - self.q_initial[a];
            jac_eq.push((pin + 3 + a, lay.q(0) + a, 1.0));
        }

        // --- rolling transitions ---
        for k in 1..n {
            let row_p = eq_lay.rolling_row(k);
            let row_o = row_p + 1;
            let d_prev = z[lay.d(k - 1)];
            let d_curr = z[lay.d(k)];
            let th_prev = z[lay.x(k - 1) + 2];
            let th_curr = z[lay.x(k) + 2];
            let c_prev = Vec2::new(z[lay.x(k - 1)], z[lay.x(k - 1) + 1]);
            let c_curr = Vec2::new(z[lay.x(k)], z[lay.x(k) + 1]);
            eq[row_p] = (d_prev - d_curr) - self.radius * (th_prev - th_curr);
            jac_eq.push((row_p, lay.d(k - 1), 1.0));
            jac_eq.push((row_p, lay.d(k), -1.0));
            jac_eq.push((row_p, lay.x(k - 1) + 2, -self.radius));
            jac_eq.push((row_p, lay.x(k) + 2, self.radius));
            eq[row_o] = (c_prev - c_curr).dot(&tau_b) - self.radius * (th_prev - th_curr);
            jac_eq.push((row_o, lay.x(k - 1), tau_b.x));
            jac_eq.push((row_o, lay.x(k - 1) + 1, tau_b.y));
            jac_eq.push((row_o, lay.x(k), -tau_b.x));
            jac_eq.push((row_o, lay.x(k) + 1, -tau_b.y));
            jac_eq.push((row_o, lay.x(k - 1) + 2, -self.radius));
            jac_eq.push((row_o, lay.x(k) + 2, self.radius));
        }

        // --- torque-force consistency and input cost ---
        for k in 0..n - 1 {
            let uk = &z[lay.u(k)..lay.u(k) + m];
            for a in 0..m {
                cost += self.r_scale * uk[a] * uk[a];
                grad[lay.u(k) + a] += 2.0 * self.r_scale * uk[a];
            }
            let geo = &geoms[k];
            let fk = &z[lay.f(k)..lay.f(k) + 4];
            let (f_na, f_ta) = (fk[0], fk[1]);
            let f_a = geo.force_a(f_na, f_ta);
            let tau_full = geo.torque_full(f_a, n_full);
            let row0 = eq_lay.torque_row(k);
            for a in 0..m {
                let row = row0 + a;
                let mut resid = uk[a];
                for j in 0..n_full {
                    resid += self.coupling[(j, a)] * tau_full[j];
                }
                eq[row] = resid;
                jac_eq.push((row, lay.u(k) + a, 1.0));
                // d tau_j / d (q, c, f), reduced on the fly.
                for b in 0..m {
                    let mut v = 0.0;
                    for j in 0..=geo.link {
                        let w = self.coupling[(j, a)];
                        if w == 0.0 {
                            continue;
                        }
                        let dterm = cross2(geo.dp_dq[b] - geo.djoints_dq[j][b], f_a)
                            + cross2(geo.p - geo.joints[j], geo.dforce_dq(f_na, f_ta, b));
                        v += w * dterm;
                    }
                    if v != 0.0 {
                        jac_eq.push((row, lay.q(k) + b, v));
                    }
                }
                for e_idx in 0..2 {
                    let mut v = 0.0;
                    for j in 0..=geo.link {
                        let w = self.coupling[(j, a)];
                        if w == 0.0 {
                            continue;
                        }
                        let dterm = cross2(geo.dp_dc[e_idx], f_a)
                            + cross2(geo.p - geo.joints[j], geo.dforce_dc(f_na, f_ta, e_idx));
                        v += w * dterm;
                    }
                    if v != 0.0 {
                        jac_eq.push((row, lay.x(k) + e_idx, v));
                    }
                }
                let mut v_fn = 0.0;
                let mut v_ft = 0.0;
                for j in 0..=geo.link {
                    let w = self.coupling[(j, a)];
                    if w == 0.0 {
                        continue;
                    }
                    v_fn += w * cross2(geo.p - geo.joints[j], geo.n);
                    v_ft += w * cross2(geo.p - geo.joints[j], geo.t);
                }
                jac_eq.push((row, lay.f(k), v_fn));
                jac_eq.push((row, lay.f(k) + 1, v_ft));
            }
        }

        Ok(Evaluation {
            cost,
            grad,
            eq,
            ineq,
            jac_eq,
            jac_ineq,
        })
    }

    /// Contact geometry at one knot of a variable vector.
    pub(crate) fn step_geometry(&self, z: &[f64], k: usize) -> StepGeometry {
        let lay = &self.layout;
        let qk = &z[lay.q(k)..lay.q(k) + lay.m_act];
        let c = Vec2::new(z[lay.x(k)], z[lay.x(k) + 1]);
        StepGeometry::compute(&self.model, &self.coupling, qk, c, self.radius)
    }
}
