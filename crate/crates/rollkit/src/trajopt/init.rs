//! Starting guess for the rolling NLP: linearly interpolated object
//! states, prismatic coordinate integrated from the rolling constraint,
//! antipodal gravity-balancing forces, and joint angles from a damped
//! gap-closing iteration warm-started knot to knot.

use super::geometry::StepGeometry;
use super::RollingNlp;
use crate::Vec2;

pub(crate) fn initial_guess(nlp: &RollingNlp) -> Vec<f64> {
    let lay = &nlp.layout;
    let n = lay.n_steps;
    let m = lay.m_act;
    let mut z = vec![0.0; lay.n_vars()];

    let tau = nlp.thumb.tangent();
    let mg = nlp.mass * nlp.gravity;

    let mut q_prev = nlp.q_initial.clone();
    for k in 0..n {
        let t = k as f64 / (n - 1) as f64;
        let x: Vec<f64> = (0..3)
            .map(|i| nlp.x_initial[i] + t * (nlp.x_goal[i] - nlp.x_initial[i]))
            .collect();
        let c = Vec2::new(x[0], x[1]);
        z[lay.x(k)] = x[0];
        z[lay.x(k) + 1] = x[1];
        z[lay.x(k) + 2] = x[2];
        // Prismatic coordinate consistent with the attachment geometry.
        z[lay.d(k)] = (c - nlp.thumb.origin).dot(&tau);

        // Joints: close the gap to this knot's object position.
        let q = if k == 0 {
            q_prev.clone()
        } else {
            close_gap(nlp, &q_prev, c)
        };
        for a in 0..m {
            z[lay.q(k) + a] = q[a];
        }
        q_prev = q.clone();

        // Forces: squeeze along the contact normal, thumb reaction
        // balancing the squeeze and gravity exactly.
        let geo = StepGeometry::compute(&nlp.model, &nlp.coupling, &q, c, nlp.radius);
        let f_na = nlp.initial_squeeze;
        let f_a = geo.n * f_na;
        let f_b = -f_a + Vec2::new(0.0, mg);
        z[lay.f(k)] = f_na;
        z[lay.f(k) + 1] = 0.0;
        z[lay.f(k) + 2] = f_b.dot(&nlp.thumb.normal);
        z[lay.f(k) + 3] = f_b.dot(&crate::perp(nlp.thumb.normal));

        // Torques consistent with the squeeze at this knot.
        if k < n - 1 {
            let tau_full = geo.torque_full(f_a, nlp.model.n_joints());
            for a in 0..m {
                let mut u = 0.0;
                for j in 0..nlp.model.n_joints() {
                    u -= nlp.coupling[(j, a)] * tau_full[j];
                }
                z[lay.u(k) + a] = u;
            }
        }
    }
    z
}

/// Damped least-squares iteration driving the signed gap to zero while
/// staying close to the warm start.
fn close_gap(nlp: &RollingNlp, q_start: &[f64], center: Vec2) -> Vec<f64> {
    let mut q = q_start.to_vec();
    for _ in 0..20 {
        let geo = StepGeometry::compute(&nlp.model, &nlp.coupling, &q, center, nlp.radius);
        if geo.psi.abs() <= 1e-10 {
            break;
        }
        let g = &geo.dpsi_dq;
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg < 1e-14 {
            break;
        }
        // Newton step on the scalar gap along the least-norm direction.
        let scale = geo.psi / (gg + 1e-9);
        for (qa, ga) in q.iter_mut().zip(g) {
            *qa -= scale * ga;
        }
        // Stay inside the joint limits of the expanded chain.
        for a in 0..q.len() {
            let j = nlp.model.actuated_indices()[a];
            let (lo, hi) = nlp.model.joint_limits[j];
            q[a] = q[a].clamp(lo, hi);
        }
    }
    q
}
