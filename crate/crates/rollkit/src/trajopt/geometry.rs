//! Finger-object contact geometry with analytic derivatives for the
//! transcription. Self-contained on purpose: the independent validator
//! goes through `kinematics::signed_distance` instead, so the two code
//! paths can be cross-checked against each other.

use nalgebra::DMatrix;

use crate::kinematics::FingerModel;
use crate::{cross2, perp, Vec2};

/// Where the closest point sits on the contact link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Regime {
    /// Strict interior of the segment: the normal is the link normal.
    Interior,
    /// A segment endpoint (joint origin or fingertip).
    Endpoint(usize),
}

/// Contact gap, point, normal, and their derivatives with respect to the
/// actuated joints and the object center.
#[derive(Debug, Clone)]
pub(crate) struct StepGeometry {
    pub psi: f64,
    /// Closest point on the finger.
    pub p: Vec2,
    /// Unit normal from the finger into the object.
    pub n: Vec2,
    /// Tangent `perp(n)`.
    pub t: Vec2,
    pub link: usize,
    #[allow(dead_code)]
    pub regime: Regime,
    /// Joint origins `o_0..o_n` (last entry is the fingertip).
    pub joints: Vec<Vec2>,
    /// d psi / d q_act.
    pub dpsi_dq: Vec<f64>,
    /// d psi / d center.
    pub dpsi_dc: Vec2,
    /// d n / d q_act.
    pub dn_dq: Vec<Vec2>,
    /// d n / d center, by center component.
    pub dn_dc: [Vec2; 2],
    /// d p / d q_act.
    pub dp_dq: Vec<Vec2>,
    /// d p / d center, by center component.
    pub dp_dc: [Vec2; 2],
    /// d o_j / d q_act for every point of the chain.
    pub djoints_dq: Vec<Vec<Vec2>>,
}

impl StepGeometry {
    /// Evaluate at actuated joints `q_act` and object center `c`.
    /// `coupling` is the expansion matrix with `q_full = coupling * q_act`.
    pub fn compute(
        model: &FingerModel,
        coupling: &DMatrix<f64>,
        q_act: &[f64],
        c: Vec2,
        radius: f64,
    ) -> Self {
        let n_full = model.n_joints();
        let m_act = coupling.ncols();
        debug_assert_eq!(q_act.len(), m_act);

        // Forward kinematics on the expanded joints.
        let mut q_full = vec![0.0; n_full];
        for j in 0..n_full {
            for a in 0..m_act {
                q_full[j] += coupling[(j, a)] * q_act[a];
            }
        }
        let mut joints = Vec::with_capacity(n_full + 1);
        let mut angle = model.base_pose.angle;
        let mut point = model.base_pose.position();
        joints.push(point);
        let mut link_dirs = Vec::with_capacity(n_full);
        for (i, &len) in model.link_lengths.iter().enumerate() {
            angle += q_full[i];
            let dir = Vec2::new(angle.cos(), angle.sin());
            link_dirs.push(dir);
            point += dir * len;
            joints.push(point);
        }

        // d o_j / d q_act: chain lever arms reduced through the coupling.
        let mut djoints_dq = vec![vec![Vec2::zeros(); m_act]; n_full + 1];
        for j in 1..=n_full {
            for a in 0..m_act {
                let mut g = Vec2::zeros();
                for l in 0..j {
                    let w = coupling[(l, a)];
                    if w != 0.0 {
                        g += perp(joints[j] - joints[l]) * w;
                    }
                }
                djoints_dq[j][a] = g;
            }
        }

        // Closest link; ties resolve to the lowest index.
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..n_full {
            let a = joints[i];
            let b = joints[i + 1];
            let u = b - a;
            let t_raw = (c - a).dot(&u) / u.norm_squared();
            let t_cl = t_raw.clamp(0.0, 1.0);
            let dist = (c - (a + u * t_cl)).norm();
            if dist < best.0 {
                best = (dist, i, t_raw);
            }
        }
        let (dist_raw, link, t_raw) = best;
        let dist = dist_raw.max(1e-9);
        let (a, b) = (joints[link], joints[link + 1]);
        let u = b - a;
        let u_hat = u / u.norm();

        let regime = if t_raw <= 0.0 {
            Regime::Endpoint(link)
        } else if t_raw >= 1.0 {
            Regime::Endpoint(link + 1)
        } else {
            Regime::Interior
        };

        let p = match regime {
            Regime::Interior => a + u * t_raw,
            Regime::Endpoint(k) => joints[k],
        };
        let delta = c - p;
        let n = if delta.norm() > 1e-12 {
            delta / delta.norm()
        } else {
            // Degenerate center-on-chain; pick the link normal.
            perp(u_hat)
        };
        let t_dir = perp(n);
        let psi = dist_raw - radius;

        let mut dpsi_dq = vec![0.0; m_act];
        let dpsi_dc = n;
        let mut dn_dq = vec![Vec2::zeros(); m_act];
        let mut dn_dc = [Vec2::zeros(), Vec2::zeros()];
        let mut dp_dq = vec![Vec2::zeros(); m_act];
        let mut dp_dc = [Vec2::zeros(), Vec2::zeros()];

        match regime {
            Regime::Interior => {
                // n = sigma * perp(u_hat); sigma constant inside the regime.
                let sigma = if n.dot(&perp(u_hat)) >= 0.0 { 1.0 } else { -1.0 };
                for a_idx in 0..m_act {
                    // d psi: frozen-point lever through the coupling.
                    let mut g = 0.0;
                    for l in 0..=link {
                        let w = coupling[(l, a_idx)];
                        if w != 0.0 {
                            g += -n.dot(&perp(p - joints[l])) * w;
                        }
                    }
                    dpsi_dq[a_idx] = g;
                    // d n: every upstream joint rotates the link direction.
                    let mut rot = 0.0;
                    for l in 0..=link {
                        rot += coupling[(l, a_idx)];
                    }
                    dn_dq[a_idx] = -u_hat * (sigma * rot);
                    dp_dq[a_idx] = -n * dpsi_dq[a_idx] - dn_dq[a_idx] * dist;
                }
                // d n / d c = 0 in the interior regime.
                let nnt = nalgebra::Matrix2::from_columns(&[n * n.x, n * n.y]);
                let proj = nalgebra::Matrix2::identity() - nnt;
                dp_dc = [proj.column(0).into(), proj.column(1).into()];
            }
            Regime::Endpoint(k) => {
                let proj_over_dist = (nalgebra::Matrix2::identity()
                    - nalgebra::Matrix2::from_columns(&[n * n.x, n * n.y]))
                    / dist;
                for a_idx in 0..m_act {
                    let dok = djoints_dq[k][a_idx];
                    dpsi_dq[a_idx] = -n.dot(&dok);
                    dn_dq[a_idx] = -(proj_over_dist * dok);
                    dp_dq[a_idx] = dok;
                }
                dn_dc = [
                    proj_over_dist.column(0).into(),
                    proj_over_dist.column(1).into(),
                ];
                // p does not move with c at an endpoint.
            }
        }

        Self {
            psi,
            p,
            n,
            t: t_dir,
            link,
            regime,
            joints,
            dpsi_dq,
            dpsi_dc,
            dn_dq,
            dn_dc,
            dp_dq,
            dp_dc,
            djoints_dq,
        }
    }

    /// Contact force on the object for force variables `(f_n, f_t)`.
    pub fn force_a(&self, f_n: f64, f_t: f64) -> Vec2 {
        self.n * f_n + self.t * f_t
    }

    /// d F_A / d q_act.
    pub fn dforce_dq(&self, f_n: f64, f_t: f64, a: usize) -> Vec2 {
        self.dn_dq[a] * f_n + perp(self.dn_dq[a]) * f_t
    }

    /// d F_A / d center component `e`.
    pub fn dforce_dc(&self, f_n: f64, f_t: f64, e: usize) -> Vec2 {
        self.dn_dc[e] * f_n + perp(self.dn_dc[e]) * f_t
    }

    /// Full-joint torque vector `tau_j = cross(p - o_j, F_A)` for joints at
    /// or before the contact link, zero after.
    pub fn torque_full(&self, force: Vec2, n_full: usize) -> Vec<f64> {
        (0..n_full)
            .map(|j| {
                if j <= self.link {
                    cross2(self.p - self.joints[j], force)
                } else {
                    0.0
                }
            })
            .collect()
    }
}
