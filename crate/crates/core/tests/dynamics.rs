//! Spectral packet propagation against repeated application of the one-period operator.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arnold::floquet_engine::{assemble_operator, FloquetOperator, FloquetOptions};
use arnold::quantum_dynamics::{
    amplitudes_at, detect_saturation, evolve, evolve_many, fit_diffusion, make_initial_state, InitialKind,
    PacketState, Saturation, SaturationOptions,
};

use common::{max_abs_diff, small_basis, small_drive};

fn small_operator(f0: f64) -> (arnold::resonance_basis::ResonanceBasis, FloquetOperator) {
    let (_, basis) = small_basis(1e-3, 8, 3);
    let drive = small_drive(&basis, f0);
    let op = assemble_operator(&basis, &drive, &FloquetOptions { leak_limit: None, ..FloquetOptions::default() }).unwrap();
    (basis, op)
}

fn random_state(dim: usize, seed: u64) -> PacketState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> =
        (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= n);
    PacketState { amplitudes: v, n: 0, origin: None }
}

fn apply(op: &FloquetOperator, c: &[Complex64]) -> Vec<Complex64> {
    let dim = c.len();
    (0..dim).map(|r| (0..dim).map(|k| op.u[(r, k)] * c[k]).sum()).collect()
}

#[test]
fn spectral_propagation_equals_repeated_operator() {
    let (_, op) = small_operator(2e-5);
    let dim = op.layout.dimension();
    for seed in 0..3 {
        let psi = random_state(dim, seed);
        let mut c = psi.amplitudes.clone();
        for n in 1..=16 {
            c = apply(&op, &c);
            let s = amplitudes_at(&op, &psi, n);
            assert!(max_abs_diff(&s, &c) < 1e-8, "N = {n}");
        }
    }
}

#[test]
fn trajectories_conserve_norm_and_stay_in_bounds() {
    let (basis, op) = small_operator(2e-5);
    let states: Vec<PacketState> = [InitialKind::ResonanceCenter, InitialKind::Separatrix, InitialKind::AboveSeparatrix]
        .iter()
        .map(|k| make_initial_state(&basis, &op.layout, *k, 0, 2).unwrap())
        .collect();
    let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let trajs = evolve_many(&op, &states, 300, &labels).unwrap();
    let qmax = basis.params.q_halfwidth as f64;
    for (t, st) in trajs.iter().zip(&states) {
        assert_eq!(t.len(), 301);
        assert!(t.max_norm_error < 1e-10);
        assert!(t.delta_q[0] < 1e-20);
        assert!(t.delta_q.iter().all(|v| *v >= 0.0 && *v <= qmax * qmax));
        let single = evolve(&op, st, 300, "x").unwrap();
        assert_eq!(single.delta_q, t.delta_q);
    }
    let sep = basis.classification(0).unwrap().separatrix_index;
    assert_eq!(states[1].origin, Some((0, sep)));
    assert!(make_initial_state(&basis, &op.layout, InitialKind::Separatrix, 4, 0).is_err());
}

#[test]
fn free_evolution_has_no_spreading() {
    let (basis, op) = small_operator(0.0);
    let psi = make_initial_state(&basis, &op.layout, InitialKind::Separatrix, 0, 0).unwrap();
    let t = evolve(&op, &psi, 1200, "free").unwrap();
    assert!(t.delta_q.iter().all(|v| *v == 0.0));
    let sat = detect_saturation(&t.delta_q, &SaturationOptions::default()).unwrap();
    assert_eq!(sat, Saturation::NoDiffusion);
    let fit = fit_diffusion(&t.delta_q, (50, 500), sat).unwrap();
    assert_eq!(fit.d, 0.0);
}

#[test]
fn unnormalized_or_mismatched_packets_are_rejected() {
    let (_, op) = small_operator(2e-5);
    let dim = op.layout.dimension();
    let mut psi = random_state(dim, 1);
    psi.amplitudes[0] *= 2.0;
    assert!(evolve(&op, &psi, 10, "x").is_err());
    assert!(evolve(&op, &random_state(dim - 1, 1), 10, "x").is_err());
    assert!(evolve(&op, &random_state(dim, 1), 0, "x").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn evolution_is_linear(seed in 0u64..1000, re in -1.0f64..1.0, im in -1.0f64..1.0, n in 1usize..40) {
        let (_, op) = small_operator(2e-5);
        let dim = op.layout.dimension();
        let a = random_state(dim, seed);
        let b = random_state(dim, seed + 1);
        let alpha = Complex64::new(re, im);
        let beta = Complex64::new(0.3, -0.7);
        let mix = PacketState {
            amplitudes: a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| alpha * x + beta * y).collect(),
            n: 0,
            origin: None,
        };
        let lhs = amplitudes_at(&op, &mix, n);
        let ua = amplitudes_at(&op, &a, n);
        let ub = amplitudes_at(&op, &b, n);
        let rhs: Vec<Complex64> = ua.iter().zip(&ub).map(|(x, y)| alpha * x + beta * y).collect();
        prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn norm_is_conserved(seed in 0u64..1000, n in 0usize..5000) {
        let (_, op) = small_operator(2e-5);
        let psi = random_state(op.layout.dimension(), seed);
        let c = amplitudes_at(&op, &psi, n);
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_series_fit_exactly(a in -1e-3f64..1e-3, b in -1.0f64..1.0) {
        let y: Vec<f64> = (0..1000).map(|n| a * n as f64 + b).collect();
        let fit = fit_diffusion(&y, (50, 500), Saturation::NotDetected).unwrap();
        prop_assert!((fit.d - a).abs() < 1e-12);
        prop_assert!(fit.residual < 1e-10);
    }
}
