// quick probe of the plant fixed point
use rollkit::config::ExperimentConfig;
use rollkit::sim::*;
use rand::SeedableRng;

fn main() {
    let config = ExperimentConfig::nominal();
    let model = config.finger_model().unwrap();
    let thumb = config.thumb_model().unwrap();
    let params = PlantParams {
        model: model.clone(),
        thumb,
        radius: config.object.radius,
        mass: config.object.mass,
        mu_a: config.contacts.mu_finger,
        mu_b: config.contacts.mu_thumb,
        gravity: config.world.gravity,
        compliance: config.compliance_model(),
        drop_gap: config.sim.drop_gap,
        min_normal_force: config.sim.min_normal_force,
        thumb_layout: config.thumb_layout(&config.thumb_model().unwrap()),
        finger_span: (config.sensors.finger.span[0], config.sensors.finger.span[1]),
        finger_sensor_count: config.sensors.finger.count,
        sigma_finger: config.sensors.finger.sigma,
        sigma_thumb: config.sensors.thumb.sigma,
        gain: config.sensors.gain,
        noise_frac: 0.0,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let q0 = config.finger.q_initial.clone();
    let mut s = PlantState::initial(&params, 0.02, 0.0, &q0);
    let press = [q0[0] + 0.012, q0[1]];
    for k in 0..30 {
        match resolve_step(&s, &press, &params, 0.02, k, &mut rng) {
            Ok((next, _)) => {
                println!("k={k} f_na={:.4} f_ta={:.4} f_nb={:.4} f_tb={:.4} d={:.6} gap={:.2e} alive={}",
                    next.contact_a.f_n, next.contact_a.f_t, next.contact_b.f_n, next.contact_b.f_t,
                    next.d, next.gap, next.grasp_alive);
                s = next;
            }
            Err(e) => { println!("k={k} ERROR: {e}"); break; }
        }
    }
}
