use bendaid::haptic::{HapticMode, ModeConfig};
use bendaid::sim::{make_vibrato_gesture, run_profile, RotorParams, Simulator};

fn kinetic(p: &RotorParams<f64>, v_dps: f64) -> f64 {
    let w = v_dps.to_radians();
    0.5 * p.inertia * w * w
}

/// Spring potential in the same units: torque −k·θ_deg is −k·(180/π)·θ_rad.
fn spring_potential(k_per_deg: f64, angle_deg: f64) -> f64 {
    0.5 * k_per_deg.to_degrees() * angle_deg.to_radians().powi(2)
}

#[test]
fn free_rotor_energy_never_increases() {
    let p = RotorParams::default();
    let mut sim = Simulator::new(p, ModeConfig::for_mode(HapticMode::Smooth)).unwrap();
    sim.place(10.0, 720.0);
    let mut e = kinetic(&p, 720.0);
    for _ in 0..10_000 {
        let s = sim.tick(0.0);
        let next = kinetic(&p, s.velocity_dps);
        assert!(next <= e);
        e = next;
    }
}

#[test]
fn released_spring_energy_never_increases() {
    let p = RotorParams::default();
    let cfg = ModeConfig::for_mode(HapticMode::Spring);
    let mut sim = Simulator::new(p, cfg).unwrap();
    sim.place(30.0, 0.0);
    let energy = |a: f64, v: f64| kinetic(&p, v) + spring_potential(cfg.spring_constant, a);
    let mut e = energy(30.0, 0.0);
    for _ in 0..20_000 {
        let s = sim.tick(0.0);
        let next = energy(s.angle_deg, s.velocity_dps);
        assert!(next <= e * (1.0 + 1e-12), "{next} > {e}");
        e = next;
    }
}

/// Closed-form solution of θ'' + cθ' + ω²θ = 0 with θ(0) = θ0, θ'(0) = 0 (underdamped).
fn damped_release(theta0: f64, c: f64, w2: f64, t: f64) -> f64 {
    let zeta_w = c / 2.0;
    let wd = (w2 - zeta_w * zeta_w).sqrt();
    theta0 * (-zeta_w * t).exp() * ((wd * t).cos() + zeta_w / wd * (wd * t).sin())
}

/// Fourth-order Runge–Kutta with a fine step, independent of the simulator code.
fn rk4_release(theta0: f64, c: f64, w2: f64, t_end: f64, h: f64) -> f64 {
    let f = |th: f64, v: f64| (v, -c * v - w2 * th);
    let (mut th, mut v) = (theta0, 0.0);
    let steps = (t_end / h).round() as usize;
    for _ in 0..steps {
        let (k1a, k1b) = f(th, v);
        let (k2a, k2b) = f(th + 0.5 * h * k1a, v + 0.5 * h * k1b);
        let (k3a, k3b) = f(th + 0.5 * h * k2a, v + 0.5 * h * k2b);
        let (k4a, k4b) = f(th + h * k3a, v + h * k3b);
        th += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        v += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    }
    th
}

#[test]
fn spring_release_matches_reference_integrators() {
    let p = RotorParams::default();
    let cfg = ModeConfig::for_mode(HapticMode::Spring);
    let mut sim = Simulator::new(p, cfg).unwrap();
    sim.place(30.0, 0.0);
    let mut last = None;
    for _ in 0..10_000 {
        last = Some(sim.tick(0.0));
    }
    let last = last.unwrap();
    assert_eq!(last.t_ms, 10_000);

    let gain = 180.0 / std::f64::consts::PI / p.inertia;
    let c = p.damping * gain;
    let w2 = cfg.spring_constant * gain;
    let exact = damped_release(30.0, c, w2, 10.0);
    let rk4 = rk4_release(30.0, c, w2, 10.0, 1e-5);
    assert!((exact - rk4).abs() < 1e-6);
    assert!((last.angle_deg - exact).abs() < 0.5, "sim {} vs exact {exact}", last.angle_deg);
    assert!(last.angle_deg.abs() < 30.0);
}

#[test]
fn semi_implicit_euler_is_stable_at_defaults() {
    // Update matrix of (θ, v) for the damped spring; both eigenvalues must lie inside
    // the unit circle.
    let p = RotorParams::<f64>::default();
    let gain = 180.0 / std::f64::consts::PI / p.inertia;
    let (h, c, k) = (p.dt(), p.damping * gain, ModeConfig::<f64>::default().spring_constant * gain);
    let a = [[1.0 - h * h * k, h * (1.0 - h * c)], [-h * k, 1.0 - h * c]];
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = tr * tr - 4.0 * det;
    let radius = if disc < 0.0 { det.sqrt() } else { (tr.abs() + disc.sqrt()) / 2.0 };
    assert!(radius < 1.0, "spectral radius {radius}");
    assert!(h * h * k < 4.0);
}

#[test]
fn vibrato_gesture_peaks() {
    let g = make_vibrato_gesture(45.0, 5.0, 3.0).unwrap();
    let out = run_profile(&g, &ModeConfig::for_mode(HapticMode::Smooth), &RotorParams::default()).unwrap();
    assert_eq!(out.len(), 3000);
    let a: Vec<f64> = out.iter().map(|s| s.angle_deg).collect();
    let peaks = (1..a.len() - 1)
        .filter(|&i| a[i] > a[i - 1] && a[i] >= a[i + 1] && (40.0..=50.0).contains(&a[i]))
        .count();
    assert!(peaks >= 12, "{peaks} peaks");
}

#[test]
fn telemetry_is_monotone() {
    let g = make_vibrato_gesture(30.0f64, 4.0, 2.0).unwrap();
    for mode in HapticMode::ALL {
        let out = run_profile(&g, &ModeConfig::for_mode(mode), &RotorParams::default()).unwrap();
        assert!(out.windows(2).all(|w| w[0].seq < w[1].seq && w[0].t_ms <= w[1].t_ms));
        assert!(out.iter().all(|s| s.torque.abs() <= 1.0 && s.mode == mode));
    }
}

#[test]
fn f32_simulator_runs() {
    let g = make_vibrato_gesture(45.0f32, 5.0, 1.0).unwrap();
    let out = run_profile(&g, &ModeConfig::for_mode(HapticMode::Spring), &RotorParams::default()).unwrap();
    assert_eq!(out.len(), 1000);
    assert!(out.iter().all(|s| s.angle_deg.is_finite()));
}
