//! Resonance groups: uncoupled limit, brute-force product-basis diagonalization and the
//! symmetries of the group Hamiltonians and transition blocks.

mod common;

use nalgebra::DMatrix;

use arnold::linalg::sym_eigh;
use arnold::quartic_oscillator::{anharmonicity, level_frequency};
use arnold::resonance_basis::{
    build_group_hamiltonian, classify_states, diagonalize_groups, ResonanceBasis, ResonanceParams,
};

use common::{small_basis, small_spectrum};

#[test]
fn uncoupled_groups_are_taylor_parabolas() {
    let spec = small_spectrum(2e-3, 80);
    let params = ResonanceParams::new(0.0, 40, 10, 2);
    let e2 = anharmonicity(&spec, 40).unwrap();
    let groups = diagonalize_groups(&params, &spec).unwrap();
    assert_eq!(groups.len(), 5);
    for g in &groups {
        let h = build_group_hamiltonian(&spec, &params, g.q).unwrap();
        assert_eq!(h.nrows(), 21);
        for a in 0..21 {
            for b in 0..21 {
                if a != b {
                    assert_eq!(h[(a, b)], 0.0);
                }
            }
        }
        let q = g.q as f64;
        let mut want: Vec<f64> = (-10..=10).map(|k| k as f64).map(|k| e2 * (k * k - q * k + q * q / 2.0)).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in g.levels.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(e2));
        }
        assert!(g.classification.is_none());
        assert!(classify_states(g, 5, 0.05).is_err());
    }
}

/// Product states `|n0 + k, n0 + q - k>` with exact energies `E_n + E_m` and the full
/// `-mu x y` coupling between them. `x y` changes `n` and `m` by odd steps, so adjacent
/// groups never couple and each group is its own block.
fn brute_force_group(spec: &arnold::quartic_oscillator::OscillatorSpectrum, mu: f64, n0: usize, k: i64, q: i64) -> Vec<f64> {
    let d = (2 * k + 1) as usize;
    let idx = |a: usize| -> (usize, usize) {
        let kk = a as i64 - k;
        ((n0 as i64 + kk) as usize, (n0 as i64 + q - kk) as usize)
    };
    let mut h = DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        let (n, m) = idx(a);
        h[(a, a)] = spec.energies[n] + spec.energies[m];
        for b in 0..d {
            let (np, mp) = idx(b);
            if a != b {
                h[(a, b)] = -mu * spec.x_elements.get(n, np) * spec.x_elements.get(m, mp);
            }
        }
    }
    sym_eigh(&h).unwrap().0
}

#[test]
fn reduced_groups_match_product_basis_within_taylor_bound() {
    let spec = small_spectrum(2e-3, 80);
    let (n0, k) = (40usize, 6i64);
    let mu = 1e-3;
    let params = ResonanceParams::new(mu, n0, k as usize, 1);
    let basis = ResonanceBasis::build(&spec, &params).unwrap();
    let hw = spec.hbar0() * level_frequency(&spec, n0).unwrap();
    let e2 = anharmonicity(&spec, n0).unwrap();
    let e0 = spec.energies[n0];
    // Largest neglected cubic-and-higher Taylor remainder in the window.
    let taylor = |j: i64| (spec.energies[(n0 as i64 + j) as usize] - e0 - hw * j as f64 - 0.5 * e2 * (j * j) as f64).abs();
    for q in [0i64, 1] {
        let exact = brute_force_group(&spec, mu, n0, k, q);
        let reduced = &basis.group(q as i32).unwrap().levels;
        let bound = (-k..=k).map(|kk| taylor(kk) + taylor(q - kk)).fold(0.0, f64::max);
        let worst = exact
            .iter()
            .zip(reduced)
            .map(|(a, b)| (a - 2.0 * e0 - hw * q as f64 - b).abs())
            .fold(0.0, f64::max);
        // Weyl: the two matrices differ by a diagonal no larger than `bound`.
        assert!(worst <= bound * (1.0 + 1e-9) + 1e-15, "q = {q}: {worst:.3e} > {bound:.3e}");
        println!("q = {q}: max deviation {:.3e} hbar0 omega, Taylor bound {:.3e}", worst / hw, bound / hw);
    }
}

#[test]
fn central_group_has_exchange_symmetry() {
    let spec = small_spectrum(2e-3, 80);
    let params = ResonanceParams::new(1e-3, 40, 10, 0);
    let h = build_group_hamiltonian(&spec, &params, 0).unwrap();
    let d = h.nrows();
    for a in 0..d {
        for b in 0..d {
            assert!((h[(a, b)] - h[(d - 1 - a, d - 1 - b)]).abs() <= 1e-15 * h[(a, b)].abs());
        }
    }
    let (_, basis) = small_basis(1e-3, 10, 1);
    let g = basis.group(0).unwrap();
    let inside = &g.classification.as_ref().unwrap().inside_set;
    assert!(!inside.is_empty());
    for s in inside {
        let v = g.eigenvectors.column(*s);
        let even: f64 = (0..d).map(|a| (v[a] - v[d - 1 - a]).abs()).fold(0.0, f64::max);
        let odd: f64 = (0..d).map(|a| (v[a] + v[d - 1 - a]).abs()).fold(0.0, f64::max);
        assert!(even.min(odd) < 1e-10, "level {s} has no definite exchange parity");
    }
}

#[test]
fn groups_are_orthonormal_and_nearly_shift_invariant() {
    let (_, basis) = small_basis(1e-3, 10, 2);
    for g in &basis.groups {
        assert_eq!(g.levels.len(), 21);
        assert!(g.levels.windows(2).all(|w| w[1] >= w[0]));
        let gram = g.eigenvectors.transpose() * &g.eigenvectors;
        let dev = (gram - DMatrix::<f64>::identity(21, 21)).abs().max();
        assert!(dev < 1e-10);
    }
    // q and -q differ only through the k-dependence of the coordinate elements
    let hw = basis.hbar_omega();
    for q in 1..=2 {
        let a = &basis.group(q).unwrap().levels;
        let b = &basis.group(-q).unwrap().levels;
        let dev = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / hw;
        assert!(dev <= basis.group_shift_deviation() + 1e-15);
    }
    let (dev, bound) = (basis.group_shift_deviation(), basis.group_shift_bound());
    println!("group shift deviation {dev:.4e}, diagonal bound {bound:.4e}");
    assert!(dev.is_finite() && dev <= bound, "{dev:e} > {bound:e}");
}

#[test]
fn transition_blocks_match_direct_contraction() {
    let (spec, basis) = small_basis(1e-3, 8, 2);
    let kk = 8i64;
    let d = 17;
    for q in -2..2 {
        let a = &basis.group(q).unwrap().eigenvectors;
        let b = &basis.group(q + 1).unwrap().eigenvectors;
        for s in (0..d).step_by(3) {
            for sp in (0..d).step_by(2) {
                // <q, s| x |q+1, s'> over product states: n steps by one, m stays fixed
                let mut direct = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        let (k, kp) = (i as i64 - kk, j as i64 - kk);
                        let (n, m) = (40 + k, 40 + q as i64 - k);
                        let (np, mp) = (40 + kp, 40 + q as i64 + 1 - kp);
                        if m == mp {
                            direct += a[(i, s)] * spec.x_elements.get(n as usize, np as usize) * b[(j, sp)];
                        }
                    }
                }
                let got = basis.transitions.get(q, s, q + 1, sp);
                assert!((got - direct).abs() < 1e-12);
                assert_eq!(got, basis.transitions.get(q + 1, sp, q, s));
            }
        }
        assert_eq!(basis.transitions.get(q, 0, q + 2, 0), 0.0);
    }
}

#[test]
fn parameter_validation() {
    let spec = small_spectrum(2e-3, 80);
    assert!(ResonanceBasis::build(&spec, &ResonanceParams::new(1e-3, 40, 40, 2)).is_err());
    assert!(ResonanceBasis::build(&spec, &ResonanceParams::new(1e-3, 75, 4, 2)).is_err());
    assert!(ResonanceBasis::build(&spec, &ResonanceParams::new(-1.0, 40, 4, 2)).is_err());
    assert!(ResonanceBasis::build(&spec, &ResonanceParams::new(1e-3, 40, 0, 2)).is_err());
}
