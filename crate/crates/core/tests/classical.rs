//! Classical integrator checks: conservation, order, reversibility, quadrature period and
//! the stability of the separation indicator.

mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use arnold::classical_reference::{
    chaos_indicator, classical_diffusion, integrate_trajectory, map_stochastic_layer, ClassicalParams,
    ClassicalState, DiffusionOptions, IndicatorOptions, LayerOptions, ResonanceGeometry, Stepper,
    DEFAULT_MAX_STEP_OMEGA, DEFAULT_SCAN_STEP_OMEGA, DEFAULT_STEP_OMEGA,
};
use arnold::floquet_engine::DriveParams;
use arnold::quartic_oscillator::classical_frequency;

/// Quartic period `4 ∫_0^a dx / p` with `x = a sin θ`.
fn quadrature_period(e: f64) -> f64 {
    let a = (4.0 * e).powf(0.25);
    let n = 200_000;
    let h = 0.5 * PI / n as f64;
    let s: f64 = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            a / ((2.0 * e).sqrt() * (1.0 + t.sin().powi(2)).sqrt())
        })
        .sum();
    4.0 * s * h
}

fn drive(omega: f64, f0: f64) -> DriveParams {
    DriveParams::from_detuning(omega, 0.25, f0, 64).unwrap()
}

/// Comparable oscillator energies and a weak coupling, as on the coupling resonance.
fn start() -> ClassicalState {
    ClassicalState { x: 1.1, px: 0.2, y: -0.9, py: 0.45, t: 0.0 }
}

const MU: f64 = 2e-3;

fn max_energy_error(mu: f64, step_omega: f64, periods: usize) -> f64 {
    let s0 = start();
    let (ex, ey) = s0.oscillator_energies();
    let w = classical_frequency(ex.max(ey));
    let p = ClassicalParams::new(mu, &drive(w, 0.0), w, step_omega);
    let tr = integrate_trajectory(s0, &p, periods, None, 1.0).unwrap();
    let e0 = s0.energy(mu);
    tr.stroboscopic.iter().map(|s| ((s.energy(mu) - e0) / e0).abs()).fold(0.0, f64::max)
}

#[test]
fn autonomous_energy_is_conserved() {
    let err = max_energy_error(MU, DEFAULT_STEP_OMEGA, 50);
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn uncoupled_oscillators_conserve_each_energy() {
    let s0 = start();
    let (ex, ey) = s0.oscillator_energies();
    let w = classical_frequency(ex.max(ey));
    let p = ClassicalParams::new(0.0, &drive(w, 0.0), w, DEFAULT_STEP_OMEGA);
    let periods = (1_000_000 / p.steps_per_period).max(1);
    let tr = integrate_trajectory(s0, &p, periods, None, DEFAULT_MAX_STEP_OMEGA).unwrap();
    let (ax, ay) = s0.oscillator_energies();
    let end = tr.stroboscopic.last().unwrap();
    let (bx, by) = end.oscillator_energies();
    assert!(periods * p.steps_per_period >= 1_000_000 - p.steps_per_period);
    assert!(((bx - ax) / ax).abs() < 1e-8 && ((by - ay) / ay).abs() < 1e-8);
}

#[test]
fn energy_error_scales_as_fourth_power() {
    let errs: Vec<f64> = [0.16, 0.08, 0.04].iter().map(|&h| max_energy_error(MU, h, 20)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((3.5..4.6).contains(&order), "observed order {order} from {errs:?}");
    }
}

#[test]
fn forward_backward_returns_to_start() {
    let s0 = start();
    let w = classical_frequency(s0.oscillator_energies().0);
    let p = ClassicalParams::new(MU, &drive(w, 0.0), w, DEFAULT_STEP_OMEGA);
    let st = Stepper::new(p.clone());
    let h = p.step();
    let mut s = s0;
    let n = 20 * p.steps_per_period;
    for _ in 0..n {
        st.step(&mut s, h);
    }
    for _ in 0..n {
        st.step(&mut s, -h);
    }
    let d = ((s.x - s0.x).powi(2) + (s.px - s0.px).powi(2) + (s.y - s0.y).powi(2) + (s.py - s0.py).powi(2)).sqrt();
    assert!(d < 1e-6, "{d:e}");
    assert!(s.t.abs() < 1e-9 * n as f64 * h);
}

#[test]
fn single_oscillator_returns_after_quadrature_period() {
    for e in [0.3f64, 2.0] {
        let a = (4.0 * e).powf(0.25);
        let t_cl = quadrature_period(e);
        assert!((2.0 * PI / t_cl - classical_frequency(e)).abs() < 1e-9 * classical_frequency(e));
        let w = 2.0 * PI / t_cl;
        let mut p = ClassicalParams::new(0.0, &drive(w, 0.0), w, DEFAULT_STEP_OMEGA);
        let n = 4000;
        p.period = t_cl;
        p.steps_per_period = n;
        let st = Stepper::new(p);
        let mut s = ClassicalState { x: a, ..Default::default() };
        for _ in 0..n {
            st.step(&mut s, t_cl / n as f64);
        }
        // phase offset from the turning point: px = -a ω sin φ near φ = 0
        let phase = (s.px / (a * w)).abs() / (2.0 * PI);
        assert!(phase < 1e-6, "E = {e}: relative phase error {phase:e}");
        assert!((s.x - a).abs() < 1e-6 * a);
    }
}

#[test]
fn step_guard_rejects_coarse_steps() {
    let s0 = start();
    let w = classical_frequency(s0.oscillator_energies().0);
    let p = ClassicalParams::new(0.0, &drive(w, 0.0), w, 0.2);
    assert!(integrate_trajectory(s0, &p, 1, None, DEFAULT_MAX_STEP_OMEGA).is_err());
    let p = ClassicalParams::new(0.0, &drive(w, 0.0), w, DEFAULT_STEP_OMEGA);
    assert!(integrate_trajectory(s0, &p, 1, Some(7), DEFAULT_MAX_STEP_OMEGA).is_err());
    let fine = integrate_trajectory(s0, &p, 2, Some(p.steps_per_period), DEFAULT_MAX_STEP_OMEGA).unwrap();
    assert_eq!(fine.fine.len(), 2 * p.steps_per_period);
    assert_eq!(fine.stroboscopic.len(), 3);
}

#[test]
fn integrable_motion_has_small_indicator() {
    let s0 = ClassicalState { x: 1.0, ..Default::default() };
    let w = classical_frequency(0.25);
    let p = ClassicalParams::new(0.0, &drive(w, 0.0), w, DEFAULT_STEP_OMEGA);
    let v = chaos_indicator(&Stepper::new(p.clone()), s0, w, &IndicatorOptions { periods: 400, ..Default::default() }).unwrap();
    // regular motion separates linearly: the exponent is of order ln(N) / (N T)
    let bound = 2.0 * (400.0 * p.period * w).ln() / (400.0 * p.period);
    assert!(v < bound, "{v:e} vs {bound:e}");
}

/// Synthetic resonance geometry in the quartic scaling regime, small enough to scan quickly.
fn toy_geometry(mu: f64) -> ResonanceGeometry {
    let spec = common::small_spectrum(2e-3, 80);
    let basis = arnold::resonance_basis::ResonanceBasis::build(
        &spec,
        &arnold::resonance_basis::ResonanceParams::new(mu, 40, 10, 1),
    )
    .unwrap();
    ResonanceGeometry::new(&spec, &basis).unwrap()
}

#[test]
fn free_ensemble_does_not_diffuse() {
    let g = toy_geometry(2e-3);
    let d = drive(g.omega, 0.0);
    let k = g.k_separatrix();
    let opts = DiffusionOptions { ensemble_size: 16, periods: 120, window: (20, 100), ..Default::default() };
    let r = classical_diffusion(&g, &d, DEFAULT_STEP_OMEGA, (0.97 * k, k), &opts).unwrap();
    // only integrator noise on a conserved energy remains
    assert!(r.d.abs() < 1e-8, "{:e}", r.d);
    assert!(map_stochastic_layer(&g, &d, DEFAULT_SCAN_STEP_OMEGA, &LayerOptions::default()).is_err());
}

#[test]
fn indicator_is_stable_under_step_halving() {
    let g = toy_geometry(2e-3);
    let d = drive(g.omega, 0.01 * g.mu);
    let k = g.k_separatrix();
    let opts = IndicatorOptions::default();
    let mean = |step_omega: f64| -> f64 {
        let st = Stepper::new(ClassicalParams::new(g.mu, &d, g.omega, step_omega));
        let ks = [0.975, 0.98, 0.985, 0.99];
        ks.iter().map(|f| chaos_indicator(&st, g.initial_state(f * k), g.omega, &opts).unwrap()).sum::<f64>() / ks.len() as f64
    };
    let a = mean(DEFAULT_SCAN_STEP_OMEGA);
    let b = mean(0.5 * DEFAULT_SCAN_STEP_OMEGA);
    println!("indicator at h: {a:.4e}, at h/2: {b:.4e}");
    assert!(((a - b) / a).abs() < 0.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reversibility_from_random_states(x in -1.5f64..1.5, px in -1.0f64..1.0, y in -1.5f64..1.5, py in -1.0f64..1.0, mu in 0.0f64..0.1) {
        let s0 = ClassicalState { x, px, y, py, t: 0.0 };
        let w = classical_frequency(s0.oscillator_energies().0.max(s0.oscillator_energies().1).max(1e-3));
        let p = ClassicalParams::new(mu, &drive(w.max(0.2), 0.0), w.max(0.2), DEFAULT_STEP_OMEGA);
        let st = Stepper::new(p.clone());
        let mut s = s0;
        for _ in 0..5000 { st.step(&mut s, p.step()); }
        for _ in 0..5000 { st.step(&mut s, -p.step()); }
        prop_assert!((s.x - x).abs() < 1e-9 && (s.px - px).abs() < 1e-9);
        prop_assert!((s.y - y).abs() < 1e-9 && (s.py - py).abs() < 1e-9);
    }
}
