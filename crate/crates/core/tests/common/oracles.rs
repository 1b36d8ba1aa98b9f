//! Independent reference computations shared by the integration tests.

use nalgebra::DMatrix;
use num_complex::Complex64;

use arnold::floquet_engine::{DriveParams, StateLayout};
use arnold::linalg::sym_eigh;
use arnold::resonance_basis::ResonanceBasis;

/// `p^2/2 + x^4/4` (hbar = 1) in a harmonic-oscillator basis of frequency `w`. The products
/// are formed in a larger basis and truncated so that the kept block is exact.
pub fn ho_basis_energies(size: usize, w: f64) -> Vec<f64> {
    let big = size + 8;
    let mut x = DMatrix::<f64>::zeros(big, big);
    for n in 0..big - 1 {
        let v = ((n + 1) as f64 / (2.0 * w)).sqrt();
        x[(n, n + 1)] = v;
        x[(n + 1, n)] = v;
    }
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let mut h = DMatrix::from_fn(size, size, |n, m| 0.25 * x4[(n, m)]);
    for n in 0..size {
        h[(n, n)] += 0.5 * 0.5 * w * (2 * n + 1) as f64;
        if n + 2 < size {
            let v = -0.25 * w * (((n + 1) * (n + 2)) as f64).sqrt();
            h[(n, n + 2)] += v;
            h[(n + 2, n)] += v;
        }
    }
    sym_eigh(&h).unwrap().0
}

/// Columns of `U(T)` for starts in group 0, integrating `i hbar Ċ = (hbar ω q + E^M) C
/// - f0 x (cos Ω1 t + cos Ω2 t) C` in the interaction picture with every term kept.
pub fn unreduced_columns(basis: &ResonanceBasis, drive: &DriveParams, steps: usize) -> DMatrix<Complex64> {
    let layout = StateLayout::from_basis(basis);
    let dim = layout.dimension();
    let d = layout.group_size;
    let theta: Vec<f64> =
        (0..dim).map(|r| layout.q_of(r) as f64 * layout.omega + layout.energies[r] / layout.hbar0).collect();
    let mut x = DMatrix::<f64>::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let (q, s) = (layout.q_of(r), r % d);
            let (qp, sp) = (layout.q_of(c), c % d);
            x[(r, c)] = basis.transitions.get(q, s, qp, sp);
        }
    }
    let g0 = (-layout.q_min) as usize;
    let starts: Vec<usize> = (g0 * d..(g0 + 1) * d).collect();
    let rhs = |t: f64, b: &DMatrix<Complex64>| -> DMatrix<Complex64> {
        let g = drive.f0 * ((drive.omega1 * t).cos() + (drive.omega2 * t).cos()) / layout.hbar0;
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            Complex64::new(0.0, g * x[(r, c)]) * Complex64::from_polar(1.0, (theta[r] - theta[c]) * t)
        });
        m * b
    };
    let mut b = DMatrix::from_fn(dim, starts.len(), |r, c| if r == starts[c] { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    let period = drive.period();
    let h = period / steps as f64;
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = rhs(t, &b);
        let k2 = rhs(t + 0.5 * h, &(&b + &k1 * Complex64::new(0.5 * h, 0.0)));
        let k3 = rhs(t + 0.5 * h, &(&b + &k2 * Complex64::new(0.5 * h, 0.0)));
        let k4 = rhs(t + h, &(&b + &k3 * Complex64::new(h, 0.0)));
        b += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0);
    }
    DMatrix::from_fn(dim, starts.len(), |r, c| Complex64::from_polar(1.0, -theta[r] * period) * b[(r, c)])
}
