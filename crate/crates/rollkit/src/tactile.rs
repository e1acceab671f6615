//! Simulated magnetic tactile array and contact-point / object-rotation
//! estimation.
//!
//! Each taxel reports a 3-vector whose magnitude tracks local contact
//! pressure. The forward model is a Gaussian bump around the true contact
//! point plus optional Gaussian noise; any peaked, monotonically decaying
//! response works with the estimator. Estimation normalizes magnitudes to
//! 0..255, gates sensors with a threshold, and takes the
//! magnitude-weighted centroid of the neighbors of the strongest taxel.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum TactileError {
    #[error("layout needs at least 2 sensors, got {0}")]
    TooFewSensors(usize),
    #[error("sensor positions must be distinct (sensors {0} and {1} coincide)")]
    DuplicateSensors(usize, usize),
    #[error("frame has {got} readings, layout has {expected} sensors")]
    FrameSizeMismatch { got: usize, expected: usize },
    #[error("threshold {0} outside (0, 255)")]
    BadThreshold(f64),
    #[error("spread sigma must be positive, got {0}")]
    BadSpread(f64),
    #[error("force must be nonnegative, got {0}")]
    NegativeForce(f64),
    #[error("empty contact history")]
    EmptyHistory,
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Flat frames carry no contact information; estimation skips them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoContact;

/// Positions of the taxels along a finger surface, arc-length ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayout {
    pub positions: Vec<Vec2>,
    /// Unit surface normal per sensor; readings are encoded along it.
    pub normals: Vec<Vec2>,
}

impl SensorLayout {
    pub fn new(positions: Vec<Vec2>, normals: Vec<Vec2>) -> Result<Self, TactileError> {
        if positions.len() < 2 {
            return Err(TactileError::TooFewSensors(positions.len()));
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                if (positions[i] - positions[j]).norm() < 1e-12 {
                    return Err(TactileError::DuplicateSensors(i, j));
                }
            }
        }
        let normals = if normals.len() == positions.len() {
            normals
        } else {
            vec![Vec2::new(0.0, 1.0); positions.len()]
        };
        Ok(Self { positions, normals })
    }

    /// Evenly spaced sensors on a straight segment.
    pub fn uniform_line(start: Vec2, end: Vec2, count: usize) -> Result<Self, TactileError> {
        if count < 2 {
            return Err(TactileError::TooFewSensors(count));
        }
        let dir = end - start;
        let positions = (0..count)
            .map(|i| start + dir * (i as f64 / (count - 1) as f64))
            .collect();
        let n = crate::perp(dir / dir.norm());
        Self::new(positions, vec![n; count])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Spacing between the first two sensors; the pitch for uniform layouts.
    pub fn pitch(&self) -> f64 {
        (self.positions[1] - self.positions[0]).norm()
    }

    /// Cumulative arc length of each sensor along the layout polyline.
    pub fn arc_coordinates(&self) -> Vec<f64> {
        let mut arcs = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        arcs.push(0.0);
        for w in self.positions.windows(2) {
            acc += (w[1] - w[0]).norm();
            arcs.push(acc);
        }
        arcs
    }

    /// Arc coordinate of the point on the layout polyline closest to `p`.
    pub fn arc_of_point(&self, p: Vec2) -> f64 {
        let arcs = self.arc_coordinates();
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.len() - 1 {
            let a = self.positions[i];
            let b = self.positions[i + 1];
            let (dist, t, _) = crate::kinematics::point_segment_distance(p, a, b);
            if dist < best.0 {
                best = (dist, arcs[i] + t * (b - a).norm());
            }
        }
        best.1
    }
}

/// One time step of raw readings: a 3-vector per sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TactileFrame {
    pub readings: Vec<[f64; 3]>,
    pub step: usize,
}

impl TactileFrame {
    /// Per-sensor magnitudes `s_i = ||f_i||`.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.readings
            .iter()
            .map(|f| (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt())
            .collect()
    }

    /// Mean of all sensor magnitudes (the scalar force proxy).
    pub fn mean_magnitude(&self) -> f64 {
        if self.readings.is_empty() {
            return 0.0;
        }
        self.magnitudes().iter().sum::<f64>() / self.readings.len() as f64
    }
}

/// Estimated contact point with its supporting sensor set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactEstimate {
    pub p_cp: Vec2,
    /// Normalized magnitude of the strongest sensor (0..255).
    pub confidence: f64,
    /// Sensor indices that entered the centroid.
    pub neighbors: Vec<usize>,
}

/// Simulate one frame: Gaussian response around `contact` with peak
/// `force`, spread `sigma`, and additive Gaussian noise of standard
/// deviation `noise_std` per sensor. Zero force yields a pure-noise frame.
pub fn simulate_readings<R: Rng>(
    layout: &SensorLayout,
    contact: Vec2,
    force: f64,
    sigma: f64,
    noise_std: f64,
    step: usize,
    rng: &mut R,
) -> Result<TactileFrame, TactileError> {
    if !(sigma > 0.0) {
        return Err(TactileError::BadSpread(sigma));
    }
    if force < 0.0 {
        return Err(TactileError::NegativeForce(force));
    }
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).expect("positive std"))
    } else {
        None
    };
    let readings = layout
        .positions
        .iter()
        .zip(&layout.normals)
        .map(|(p, n)| {
            let d2 = (p - contact).norm_squared();
            let mut s = force * (-d2 / (2.0 * sigma * sigma)).exp();
            if let Some(dist) = &noise {
                s += dist.sample(rng);
            }
            [n.x * s, n.y * s, 0.0]
        })
        .collect();
    Ok(TactileFrame { readings, step })
}

/// Normalize magnitudes to the 0..255 range. A flat frame (max == min)
/// carries no spatial information and is reported as [`NoContact`].
pub fn normalize(frame: &TactileFrame) -> Result<Vec<f64>, NoContact> {
    let s = frame.magnitudes();
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(NoContact);
    }
    Ok(s.iter().map(|&v| 255.0 * (v - min) / (max - min)).collect())
}

/// Threshold weights `W_i = max((s'_i - T) / (s'_max - T), 0)` and the
/// resulting active set. Ties for the maximum resolve to the lowest index.
pub fn threshold_weights(
    normalized: &[f64],
    threshold: f64,
) -> Result<(Vec<f64>, Vec<usize>), TactileError> {
    if !(threshold > 0.0 && threshold < 255.0) {
        return Err(TactileError::BadThreshold(threshold));
    }
    let (i_star, &s_star) = normalized
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
        .expect("nonempty");
    if s_star <= threshold {
        // Nothing above threshold: treat as no contact.
        return Ok((vec![0.0; normalized.len()], Vec::new()));
    }
    let weights: Vec<f64> = normalized
        .iter()
        .map(|&s| ((s - threshold) / (s_star - threshold)).max(0.0))
        .collect();
    let active = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, _)| i)
        .collect();
    let _ = i_star;
    Ok((weights, active))
}

/// Weighted-centroid contact point over the strongest sensor and its up
/// to `n_neighbors` nearest active sensors.
pub fn estimate_contact_point(
    layout: &SensorLayout,
    normalized: &[f64],
    active: &[usize],
    n_neighbors: usize,
) -> Result<ContactEstimate, NoContact> {
    if normalized.len() != layout.len() {
        return Err(NoContact);
    }
    if active.is_empty() {
        return Err(NoContact);
    }
    let i_star = *active
        .iter()
        .max_by(|&&a, &&b| {
            normalized[a]
                .partial_cmp(&normalized[b])
                .unwrap()
                .then(b.cmp(&a))
        })
        .expect("nonempty active set");
    // The peak plus its nearest active sensors by position.
    let mut by_dist: Vec<usize> = active.iter().copied().filter(|&i| i != i_star).collect();
    by_dist.sort_by(|&a, &b| {
        let da = (layout.positions[a] - layout.positions[i_star]).norm();
        let db = (layout.positions[b] - layout.positions[i_star]).norm();
        da.partial_cmp(&db).unwrap().then(a.cmp(&b))
    });
    let take = n_neighbors.min(by_dist.len());
    let mut neighbors: Vec<usize> = std::iter::once(i_star)
        .chain(by_dist.into_iter().take(take))
        .collect();
    neighbors.sort_unstable();

    let total: f64 = neighbors.iter().map(|&i| normalized[i]).sum();
    if total <= 0.0 {
        return Err(NoContact);
    }
    let mut p = Vec2::zeros();
    for &i in &neighbors {
        p += layout.positions[i] * (normalized[i] / total);
    }
    Ok(ContactEstimate {
        p_cp: p,
        confidence: normalized[i_star],
        neighbors,
    })
}

/// Full pipeline for one frame: normalize, gate, estimate.
pub fn estimate_from_frame(
    layout: &SensorLayout,
    frame: &TactileFrame,
    threshold: f64,
    n_neighbors: usize,
) -> Result<Option<ContactEstimate>, TactileError> {
    let normalized = match normalize(frame) {
        Ok(n) => n,
        Err(NoContact) => return Ok(None),
    };
    let (_, active) = threshold_weights(&normalized, threshold)?;
    if active.is_empty() {
        return Ok(None);
    }
    Ok(estimate_contact_point(layout, &normalized, &active, n_neighbors).ok())
}

/// Object rotation from contact-point travel: signed arc length along the
/// layout polyline from the initial contact to each estimate, divided by
/// the object radius.
pub fn estimate_rotation(
    layout: &SensorLayout,
    cp_history: &[Vec2],
    radius: f64,
    initial_contact: Vec2,
) -> Result<Vec<f64>, TactileError> {
    if !(radius > 0.0) {
        return Err(TactileError::BadRadius(radius));
    }
    if cp_history.is_empty() {
        return Err(TactileError::EmptyHistory);
    }
    let arc0 = layout.arc_of_point(initial_contact);
    Ok(cp_history
        .iter()
        .map(|&cp| (layout.arc_of_point(cp) - arc0) / radius)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_layout(count: usize, pitch: f64) -> SensorLayout {
        SensorLayout::uniform_line(
            Vec2::zeros(),
            Vec2::new(pitch * (count - 1) as f64, 0.0),
            count,
        )
        .unwrap()
    }

    #[test]
    fn peak_at_source_sensor() {
        let layout = line_layout(17, 0.005);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame = simulate_readings(
            &layout,
            layout.positions[5],
            1.0,
            0.001,
            0.0,
            0,
            &mut rng,
        )
        .unwrap();
        let mags = frame.magnitudes();
        let argmax = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 5);
    }

    #[test]
    fn zero_force_zero_noise_is_silent() {
        let layout = line_layout(5, 0.005);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame =
            simulate_readings(&layout, Vec2::zeros(), 0.0, 0.005, 0.0, 0, &mut rng).unwrap();
        assert!(frame.magnitudes().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn midpoint_contact_symmetric_readings() {
        let layout = line_layout(5, 0.005);
        let mid = (layout.positions[2] + layout.positions[3]) / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame = simulate_readings(&layout, mid, 1.0, 0.005, 0.0, 0, &mut rng).unwrap();
        let mags = frame.magnitudes();
        assert!((mags[2] - mags[3]).abs() <= 1e-12);
    }

    #[test]
    fn normalize_affine_map() {
        let frame = TactileFrame {
            readings: vec![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]],
            step: 0,
        };
        let s = normalize(&frame).unwrap();
        assert_relative_eq!(s[0], 0.0);
        assert_relative_eq!(s[1], 127.5);
        assert_relative_eq!(s[2], 255.0);
    }

    #[test]
    fn normalize_flat_frame_is_no_contact() {
        let frame = TactileFrame {
            readings: vec![[5.0, 0.0, 0.0]; 4],
            step: 0,
        };
        assert_eq!(normalize(&frame), Err(NoContact));
    }

    #[test]
    fn threshold_weights_formula() {
        let s = vec![0.0, 100.0, 255.0];
        let (w, active) = threshold_weights(&s, 50.0).unwrap();
        assert_relative_eq!(w[0], 0.0);
        assert_relative_eq!(w[1], 50.0 / 205.0, epsilon = 1e-15);
        assert_relative_eq!(w[2], 1.0);
        assert_eq!(active, vec![1, 2]);
    }

    #[test]
    fn threshold_isolates_peak() {
        let s = vec![10.0, 20.0, 255.0, 15.0];
        let (w, active) = threshold_weights(&s, 254.0).unwrap();
        assert_eq!(active, vec![2]);
        assert_relative_eq!(w[2], 1.0);
    }

    #[test]
    fn two_equal_sensors_centroid_at_midpoint() {
        let layout = SensorLayout::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)],
            vec![Vec2::new(0.0, 1.0); 2],
        )
        .unwrap();
        let est = estimate_contact_point(&layout, &[200.0, 200.0], &[0, 1], 4).unwrap();
        assert_relative_eq!(est.p_cp.x, 0.5, epsilon = 1e-15);
        assert_relative_eq!(est.p_cp.y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn single_active_sensor_returns_its_position() {
        let layout = line_layout(5, 0.01);
        let est = estimate_contact_point(&layout, &[0.0, 0.0, 255.0, 0.0, 0.0], &[2], 4).unwrap();
        assert_eq!(est.p_cp, layout.positions[2]);
        assert_eq!(est.neighbors, vec![2]);
    }

    #[test]
    fn sweep_accuracy_noise_free() {
        // Contacts swept across the instrumented span, half a pitch inside
        // the end sensors (outside that aperture a centroid cannot avoid
        // one-sided bias).
        let pitch = 0.002;
        let layout = line_layout(17, pitch);
        let span = pitch * 16.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_err: f64 = 0.0;
        for i in 0..200 {
            let x = pitch / 2.0 + (span - pitch) * i as f64 / 199.0;
            let contact = Vec2::new(x, 0.0);
            let frame =
                simulate_readings(&layout, contact, 1.0, pitch, 0.0, i, &mut rng).unwrap();
            let est = estimate_from_frame(&layout, &frame, 30.0, 4)
                .unwrap()
                .expect("contact visible");
            max_err = max_err.max((est.p_cp - contact).norm());
        }
        assert!(
            max_err <= pitch / 2.0,
            "max error {max_err} exceeds half pitch {}",
            pitch / 2.0
        );
    }

    #[test]
    fn sweep_rmse_with_noise() {
        let pitch = 0.002;
        let layout = line_layout(17, pitch);
        let span = pitch * 16.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sq_sum = 0.0;
        let n = 200;
        for i in 0..n {
            let x = pitch / 2.0 + (span - pitch) * i as f64 / (n - 1) as f64;
            let contact = Vec2::new(x, 0.0);
            let frame =
                simulate_readings(&layout, contact, 1.0, pitch, 0.05, i, &mut rng).unwrap();
            let est = estimate_from_frame(&layout, &frame, 30.0, 4)
                .unwrap()
                .expect("contact visible");
            sq_sum += (est.p_cp - contact).norm_squared();
        }
        let rmse = (sq_sum / n as f64).sqrt();
        assert!(rmse <= pitch, "rmse {rmse} exceeds pitch {pitch}");
    }

    #[test]
    fn rotation_stationary_contact() {
        let layout = line_layout(17, 0.0015);
        let cp = layout.positions[8];
        let hist = vec![cp; 5];
        let theta = estimate_rotation(&layout, &hist, 0.0075, cp).unwrap();
        assert!(theta.iter().all(|&t| t.abs() <= 1e-12));
    }

    #[test]
    fn rotation_from_straight_travel() {
        // 1.5 mm of contact travel on a straight link at r = 7.5 mm reads
        // as 0.2 rad.
        let layout = line_layout(17, 0.0015);
        let start = Vec2::new(0.006, 0.0);
        let hist = vec![start, Vec2::new(0.0075, 0.0)];
        let theta = estimate_rotation(&layout, &hist, 0.0075, start).unwrap();
        assert_relative_eq!(theta[1], 0.2, epsilon = 1e-12);
        // Reversed travel negates the estimate.
        let hist_rev = vec![start, Vec2::new(0.0045, 0.0)];
        let theta_rev = estimate_rotation(&layout, &hist_rev, 0.0075, start).unwrap();
        assert_relative_eq!(theta_rev[1], -0.2, epsilon = 1e-12);
    }

    #[test]
    fn full_pipeline_synthetic_roll() {
        // Simulated 0.2 rad roll: contact travels 1.5 mm (one pitch), so
        // the periodic centroid bias cancels between the endpoints.
        let pitch = 0.0015;
        let layout = line_layout(17, pitch);
        let r = 0.0075;
        let start = Vec2::new(7.0 * pitch, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut history = Vec::new();
        let steps = 40;
        for k in 0..=steps {
            let x = start.x + 0.0015 * k as f64 / steps as f64;
            let frame = simulate_readings(&layout, Vec2::new(x, 0.0), 1.0, pitch, 0.0, k, &mut rng)
                .unwrap();
            let est = estimate_from_frame(&layout, &frame, 30.0, 4)
                .unwrap()
                .expect("contact visible");
            history.push(est.p_cp);
        }
        let theta = estimate_rotation(&layout, &history, r, history[0]).unwrap();
        let err = (theta.last().unwrap() - 0.2).abs();
        assert!(err <= 0.02, "rotation error {err} rad");
    }

    proptest! {
        #[test]
        fn normalize_invariant_to_positive_affine(
            base in proptest::collection::vec(0.0f64..10.0, 3..12),
            a in 0.1f64..5.0,
            b in -3.0f64..3.0,
        ) {
            let spread = base.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - base.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-6);
            let frame = TactileFrame {
                readings: base.iter().map(|&s| [s, 0.0, 0.0]).collect(),
                step: 0,
            };
            // Affine transform on magnitudes; keep them nonnegative so the
            // magnitude of the encoded vector stays affine in s.
            let shifted: Vec<f64> = base.iter().map(|&s| a * s + b.abs()).collect();
            let frame2 = TactileFrame {
                readings: shifted.iter().map(|&s| [s, 0.0, 0.0]).collect(),
                step: 0,
            };
            let n1 = normalize(&frame).unwrap();
            let n2 = normalize(&frame2).unwrap();
            for (x, y) in n1.iter().zip(&n2) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }

        #[test]
        fn centroid_translation_equivariant(
            tx in -1.0f64..1.0,
            ty in -1.0f64..1.0,
            s1 in 40.0f64..255.0,
            s2 in 40.0f64..255.0,
        ) {
            let layout = line_layout(5, 0.01);
            let translated = SensorLayout::new(
                layout.positions.iter().map(|p| p + Vec2::new(tx, ty)).collect(),
                layout.normals.clone(),
            ).unwrap();
            let s = vec![0.0, s1, 255.0, s2, 0.0];
            let active = vec![1usize, 2, 3];
            let e1 = estimate_contact_point(&layout, &s, &active, 4).unwrap();
            let e2 = estimate_contact_point(&translated, &s, &active, 4).unwrap();
            prop_assert!((e2.p_cp - e1.p_cp - Vec2::new(tx, ty)).norm() <= 1e-9);
        }

        #[test]
        fn weights_monotone(
            s_i in 0.0f64..254.0,
            bump in 0.0f64..40.0,
            t_low in 10.0f64..100.0,
            dt in 1.0f64..50.0,
        ) {
            let s = vec![s_i, 255.0];
            let s_up = vec![(s_i + bump).min(255.0), 255.0];
            let (w1, _) = threshold_weights(&s, t_low).unwrap();
            let (w2, _) = threshold_weights(&s_up, t_low).unwrap();
            prop_assert!(w2[0] >= w1[0] - 1e-12);
            let (w3, _) = threshold_weights(&s, (t_low + dt).min(254.0)).unwrap();
            prop_assert!(w3[0] <= w1[0] + 1e-12);
        }
    }
}
