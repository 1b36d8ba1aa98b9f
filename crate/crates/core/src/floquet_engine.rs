//! One-period evolution operator of the reduced basis under the two-frequency drive
//! `-f0 x (cos Ω1 t + cos Ω2 t)`, kept in the resonance approximation: only `q -> q ± 1`
//! transitions survive, modulated by the slow envelope `cos(ν t)`, `ν = (Ω1 - Ω2) / 2`.
//!
//! Amplitudes are propagated in the slow picture
//! `C_{q,s} = b_{q,s} exp(-i (q ω + E^M_{q,s} / hbar0) t)` with fixed-step RK4; the fast
//! phases are evaluated analytically at each stage time.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::linalg::{complex_schur, dgemm_raw, unitarity_defect, zgemm, Op};
use crate::resonance_basis::ResonanceBasis;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub f0: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// `T = i T1 = j T2`, so `Ω1 / Ω2 = i / j`.
    pub i: u32,
    pub j: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Closest fraction `i / j` to `x` with `i, j <= max_den`; ties go to the smaller denominator.
pub fn rationalize(x: f64, max_den: u32) -> (u32, u32) {
    let mut best = (1u32, 1u32);
    let mut err = f64::INFINITY;
    for j in 1..=max_den {
        let i = (x * j as f64).round() as u32;
        if i == 0 || i > max_den {
            continue;
        }
        let e = (i as f64 / j as f64 - x).abs();
        if e < err - 1e-15 {
            err = e;
            best = (i, j);
        }
    }
    let g = gcd(best.0, best.1);
    (best.0 / g, best.1 / g)
}

impl DriveParams {
    /// Places `Ω1 > Ω2` symmetrically about `omega` with `δΩ / ω ≈ detuning_ratio`, snapped to
    /// the rational grid so that `(Ω1 + Ω2) / 2 = ω` holds exactly.
    pub fn from_detuning(omega: f64, detuning_ratio: f64, f0: f64, max_den: u32) -> Result<Self> {
        if !(detuning_ratio > 0.0 && detuning_ratio < 2.0) {
            return Err(validation(format!("detuning ratio must lie in (0, 2), got {detuning_ratio}")));
        }
        let target = (1.0 + detuning_ratio / 2.0) / (1.0 - detuning_ratio / 2.0);
        let (i, j) = rationalize(target, max_den);
        if i == j {
            return Err(validation(format!("detuning {detuning_ratio} rounds to a single frequency at max denominator {max_den}")));
        }
        let s = (i + j) as f64;
        Ok(DriveParams { f0, omega1: 2.0 * omega * i as f64 / s, omega2: 2.0 * omega * j as f64 / s, i, j })
    }

    pub fn period(&self) -> f64 {
        2.0 * PI * self.i as f64 / self.omega1
    }

    pub fn delta_omega(&self) -> f64 {
        self.omega1 - self.omega2
    }

    /// Envelope frequency `ν = δΩ / 2`.
    pub fn nu(&self) -> f64 {
        0.5 * self.delta_omega()
    }

    pub fn omega_target(&self) -> f64 {
        0.5 * (self.omega1 + self.omega2)
    }

    /// Checks commensurability, centering on `omega_n0`, and the `f0 / mu` ratio.
    pub fn validate(&self, omega_n0: f64, detuning_bound: f64, mu: f64, f0_over_mu: f64) -> Result<()> {
        if self.i == 0 || self.j == 0 || gcd(self.i, self.j) != 1 {
            return Err(validation(format!("drive integers {}/{} must be coprime and positive", self.i, self.j)));
        }
        let t1 = 2.0 * PI / self.omega1;
        let t2 = 2.0 * PI / self.omega2;
        if ((self.i as f64 * t1) - (self.j as f64 * t2)).abs() > 1e-10 * self.period() {
            return Err(validation("drive frequencies are not commensurate with the stated i, j"));
        }
        if ((self.omega_target() - omega_n0) / omega_n0).abs() > detuning_bound {
            return Err(validation(format!(
                "drive center {:.6e} is off the resonance frequency {omega_n0:.6e} by more than {detuning_bound:e}",
                self.omega_target()
            )));
        }
        if mu > 0.0 && ((self.f0 / mu - f0_over_mu) / f0_over_mu).abs() > 1e-9 {
            return Err(validation(format!("f0/mu = {:e} differs from the configured {f0_over_mu:e}", self.f0 / mu)));
        }
        if self.f0 < 0.0 {
            return Err(validation("f0 must be non-negative"));
        }
        Ok(())
    }
}

/// Index layout of the reduced basis: flat index `g * d + s`, `q = q_min + g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub q_min: i32,
    pub groups: usize,
    pub group_size: usize,
    /// `E^M` for each flat index.
    pub energies: Vec<f64>,
    pub hbar0: f64,
    pub omega: f64,
}

impl StateLayout {
    pub fn from_basis(basis: &ResonanceBasis) -> Self {
        StateLayout {
            q_min: basis.groups[0].q,
            groups: basis.groups.len(),
            group_size: basis.group_size(),
            energies: basis.groups.iter().flat_map(|g| g.levels.iter().copied()).collect(),
            hbar0: basis.hbar0,
            omega: basis.omega,
        }
    }

    pub fn dimension(&self) -> usize {
        self.groups * self.group_size
    }

    pub fn q_of(&self, idx: usize) -> i32 {
        self.q_min + (idx / self.group_size) as i32
    }

    pub fn q_max(&self) -> i32 {
        self.q_min + self.groups as i32 - 1
    }

    pub fn index(&self, q: i32, s: usize) -> Result<usize> {
        if q < self.q_min || q > self.q_max() || s >= self.group_size {
            return Err(Error::IndexOutOfRange { index: q as i64, lo: self.q_min as i64, hi: self.q_max() as i64 });
        }
        Ok((q - self.q_min) as usize * self.group_size + s)
    }

    /// `exp(-i (q ω + E^M / hbar0) t)` per flat index.
    pub fn free_phase(&self, idx: usize, t: f64) -> Complex64 {
        let th = -(self.q_of(idx) as f64 * self.omega + self.energies[idx] / self.hbar0) * t;
        Complex64::from_polar(1.0, th)
    }

    /// Probability per group.
    pub fn group_populations(&self, c: &[Complex64]) -> Vec<f64> {
        (0..self.groups)
            .map(|g| c[g * self.group_size..(g + 1) * self.group_size].iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }

    /// `(q̄, σ_q)` of a normalized vector.
    pub fn q_moments(&self, c: &[Complex64]) -> (f64, f64) {
        let p = self.group_populations(c);
        let mean: f64 = p.iter().enumerate().map(|(g, w)| (self.q_min + g as i32) as f64 * w).sum();
        let var = p
            .iter()
            .enumerate()
            .map(|(g, w)| {
                let d = (self.q_min + g as i32) as f64 - mean;
                d * d * w
            })
            .sum();
        (mean, var)
    }
}

/// A batch of amplitude columns stored as `[Re | Im]`, each `dim x ncol`, column-major.
struct Batch {
    dim: usize,
    ncol: usize,
    data: Vec<f64>,
}

impl Batch {
    fn zeros(dim: usize, ncol: usize) -> Self {
        Batch { dim, ncol, data: vec![0.0; 2 * dim * ncol] }
    }

    fn axpy(&self, a: f64, k: &Batch) -> Batch {
        Batch { dim: self.dim, ncol: self.ncol, data: self.data.iter().zip(&k.data).map(|(x, y)| x + a * y).collect() }
    }
}

/// Right-hand side `ḃ = (i f0 cos νt / hbar0) P† X P b`, `P = diag exp(-i E^M t / hbar0)`.
struct SlowSystem<'a> {
    basis: &'a ResonanceBasis,
    drive: &'a DriveParams,
    energies: Vec<f64>,
}

impl<'a> SlowSystem<'a> {
    fn new(basis: &'a ResonanceBasis, drive: &'a DriveParams) -> Self {
        let energies = basis.groups.iter().flat_map(|g| g.levels.iter().copied()).collect();
        SlowSystem { basis, drive, energies }
    }

    fn rhs(&self, t: f64, b: &Batch, out: &mut Batch, x: &mut Batch) {
        let dim = b.dim;
        let n = b.ncol;
        let hb = self.basis.hbar0;
        let (cs, sn): (Vec<f64>, Vec<f64>) = self.energies.iter().map(|e| (-e * t / hb).sin_cos()).map(|(s, c)| (c, s)).unzip();
        let (br, bi) = b.data.split_at(dim * n);
        {
            let (xr, xi) = x.data.split_at_mut(dim * n);
            for col in 0..n {
                let o = col * dim;
                for r in 0..dim {
                    let (c, s) = (cs[r], sn[r]);
                    let (vr, vi) = (br[o + r], bi[o + r]);
                    xr[o + r] = c * vr - s * vi;
                    xi[o + r] = c * vi + s * vr;
                }
            }
        }
        out.data.iter_mut().for_each(|v| *v = 0.0);
        let d = self.basis.group_size();
        // Re and Im halves are one dim x 2n matrix with leading dimension dim.
        for (g, blk) in self.basis.transitions.blocks.iter().enumerate() {
            let lo = g * d;
            let hi = (g + 1) * d;
            dgemm_raw(Op::N, Op::N, d, 2 * n, d, 1.0, blk.as_slice(), d, &x.data[hi..], dim, 1.0, &mut out.data[lo..], dim);
            dgemm_raw(Op::T, Op::N, d, 2 * n, d, 1.0, blk.as_slice(), d, &x.data[lo..], dim, 1.0, &mut out.data[hi..], dim);
        }
        let gamma = self.drive.f0 * (self.drive.nu() * t).cos() / hb;
        let (yr, yi) = out.data.split_at_mut(dim * n);
        for col in 0..n {
            let o = col * dim;
            for r in 0..dim {
                let (c, s) = (cs[r], sn[r]);
                let (vr, vi) = (yr[o + r], yi[o + r]);
                // z = conj(phase) y ; ḃ = i gamma z
                let zr = c * vr + s * vi;
                let zi = c * vi - s * vr;
                yr[o + r] = -gamma * zi;
                yi[o + r] = gamma * zr;
            }
        }
    }

    fn propagate(&self, mut b: Batch, t0: f64, t1: f64, steps: usize) -> Batch {
        let h = (t1 - t0) / steps as f64;
        let (dim, n) = (b.dim, b.ncol);
        let mut k1 = Batch::zeros(dim, n);
        let mut k2 = Batch::zeros(dim, n);
        let mut k3 = Batch::zeros(dim, n);
        let mut k4 = Batch::zeros(dim, n);
        let mut scratch = Batch::zeros(dim, n);
        for step in 0..steps {
            let t = t0 + step as f64 * h;
            self.rhs(t, &b, &mut k1, &mut scratch);
            self.rhs(t + 0.5 * h, &b.axpy(0.5 * h, &k1), &mut k2, &mut scratch);
            self.rhs(t + 0.5 * h, &b.axpy(0.5 * h, &k2), &mut k3, &mut scratch);
            self.rhs(t + h, &b.axpy(h, &k3), &mut k4, &mut scratch);
            let w = h / 6.0;
            for (idx, v) in b.data.iter_mut().enumerate() {
                *v += w * (k1.data[idx] + 2.0 * k2.data[idx] + 2.0 * k3.data[idx] + k4.data[idx]);
            }
        }
        b
    }
}

/// Integration controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloquetOptions {
    /// RK4 steps per full period (must be even).
    pub steps_per_period: usize,
    pub assembly: Assembly,
    /// Abort threshold for `max |U†U - I|`.
    pub unitarity_limit: f64,
    /// Abort threshold for probability reaching `|q| = Q` in one period from `q = 0`;
    /// `None` skips the check.
    pub leak_limit: Option<f64>,
}

impl Default for FloquetOptions {
    fn default() -> Self {
        FloquetOptions { steps_per_period: 200, assembly: Assembly::Reflection, unitarity_limit: 1e-6, leak_limit: Some(1e-6) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assembly {
    /// Integrate every column over the full period.
    Direct,
    /// Integrate to `T/2` only and complete the period with the reflection
    /// `H(T - t) = G H(t) G`, which makes `U(T, T/2) = G V^T G` for `V = U(T/2, 0)`.
    Reflection,
}

/// Converts slow amplitudes at time `t` into resonance-basis amplitudes `C`.
fn slow_to_c(layout: &StateLayout, b: &Batch, t: f64) -> DMatrix<Complex64> {
    let (dim, n) = (b.dim, b.ncol);
    let ph: Vec<Complex64> = (0..dim).map(|r| layout.free_phase(r, t)).collect();
    DMatrix::from_fn(dim, n, |r, c| ph[r] * Complex64::new(b.data[c * dim + r], b.data[dim * n + c * dim + r]))
}

fn c_to_slow(layout: &StateLayout, c: &DMatrix<Complex64>, t: f64) -> Batch {
    let (dim, n) = (c.nrows(), c.ncols());
    let mut b = Batch::zeros(dim, n);
    for col in 0..n {
        for r in 0..dim {
            let v = layout.free_phase(r, t).conj() * c[(r, col)];
            b.data[col * dim + r] = v.re;
            b.data[dim * n + col * dim + r] = v.im;
        }
    }
    b
}

/// Propagates the columns of `c0` (resonance-basis amplitudes at `t0`) to `t1`.
pub fn propagate(
    basis: &ResonanceBasis,
    drive: &DriveParams,
    c0: &DMatrix<Complex64>,
    t0: f64,
    t1: f64,
    steps: usize,
) -> DMatrix<Complex64> {
    let layout = StateLayout::from_basis(basis);
    let sys = SlowSystem::new(basis, drive);
    let b = sys.propagate(c_to_slow(&layout, c0, t0), t0, t1, steps.max(1));
    slow_to_c(&layout, &b, t1)
}

/// Column of the one-period operator for the initial basis state `(q0, s0)`.
pub fn integrate_column(
    basis: &ResonanceBasis,
    drive: &DriveParams,
    q0: i32,
    s0: usize,
    steps_per_period: usize,
) -> Result<Vec<Complex64>> {
    let layout = StateLayout::from_basis(basis);
    let idx = layout.index(q0, s0)?;
    let mut c0 = DMatrix::<Complex64>::zeros(layout.dimension(), 1);
    c0[(idx, 0)] = Complex64::new(1.0, 0.0);
    let c = propagate(basis, drive, &c0, 0.0, drive.period(), steps_per_period);
    let v: Vec<Complex64> = c.column(0).iter().copied().collect();
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::Integration(format!("column norm drifted to {norm:.12}; increase steps_per_period")));
    }
    Ok(v)
}

#[derive(Clone, Debug)]
pub struct FloquetOperator {
    pub layout: StateLayout,
    pub period: f64,
    pub u: DMatrix<Complex64>,
    /// Eigenvalues `λ_Q`, ordered by quasienergy.
    pub eigenvalues: Vec<Complex64>,
    /// `ε_Q = -(hbar0 / T) arg λ_Q` in `(-π hbar0 / T, π hbar0 / T]`, ascending.
    pub quasienergies: Vec<f64>,
    /// Column `Q` is the QE state `A^Q_{q,s}`.
    pub eigenvectors: DMatrix<Complex64>,
    pub unitarity_defect: f64,
    /// Largest strictly-upper Schur element (non-normality of the computed `U`).
    pub schur_residual: f64,
    /// Edge-group probability after one period, maximized over starts in `q = 0`.
    pub edge_leakage: f64,
}

/// Principal quasienergy zone `(-π hbar0 / T, π hbar0 / T]`.
pub fn fold_quasienergy(e: f64, hbar0: f64, period: f64) -> f64 {
    let w = 2.0 * PI * hbar0 / period;
    let half = 0.5 * w;
    let mut r = e - w * ((e + half) / w).floor();
    // r in [-half, half); the lower edge maps to the upper one
    if r <= -half {
        r += w;
    }
    if r > half {
        r -= w;
    }
    r
}

pub fn assemble_operator(basis: &ResonanceBasis, drive: &DriveParams, opts: &FloquetOptions) -> Result<FloquetOperator> {
    if opts.steps_per_period < 2 || opts.steps_per_period % 2 == 1 {
        return Err(validation("steps_per_period must be even and >= 2"));
    }
    let layout = StateLayout::from_basis(basis);
    let dim = layout.dimension();
    let period = drive.period();
    let eye = DMatrix::<Complex64>::identity(dim, dim);
    let u = match opts.assembly {
        Assembly::Direct => propagate(basis, drive, &eye, 0.0, period, opts.steps_per_period),
        Assembly::Reflection => {
            let sys = SlowSystem::new(basis, drive);
            let b = sys.propagate(c_to_slow(&layout, &eye, 0.0), 0.0, 0.5 * period, opts.steps_per_period / 2);
            // a = exp(-i E^M t / hbar0) b: the frame without the q ω phases.
            let half = 0.5 * period;
            let v = DMatrix::from_fn(dim, dim, |r, c| {
                Complex64::from_polar(1.0, -layout.energies[r] * half / layout.hbar0)
                    * Complex64::new(b.data[c * dim + r], b.data[dim * dim + c * dim + r])
            });
            // ν T = π (i - j): for odd i - j the envelope flips sign, absorbed by G = diag((-1)^q).
            let odd = (drive.i as i64 - drive.j as i64).rem_euclid(2) == 1;
            let g: Vec<f64> =
                (0..dim).map(|r| if odd && layout.q_of(r).rem_euclid(2) == 1 { -1.0 } else { 1.0 }).collect();
            let vt = DMatrix::from_fn(dim, dim, |r, c| v[(c, r)] * (g[r] * g[c]));
            let mut ua = zgemm(Op::N, &vt, Op::N, &v);
            for r in 0..dim {
                let ph = Complex64::from_polar(1.0, -(layout.q_of(r) as f64) * layout.omega * period);
                for c in 0..dim {
                    ua[(r, c)] *= ph;
                }
            }
            ua
        }
    };
    finish_operator(layout, period, u, opts)
}

/// Diagonalizes an assembled one-period matrix and records its diagnostics.
pub fn finish_operator(
    layout: StateLayout,
    period: f64,
    u: DMatrix<Complex64>,
    opts: &FloquetOptions,
) -> Result<FloquetOperator> {
    let defect = unitarity_defect(&u);
    if defect > opts.unitarity_limit {
        return Err(Error::Unitarity { defect, limit: opts.unitarity_limit });
    }
    let edge_leakage = edge_leakage(&layout, &u);
    if let Some(limit) = opts.leak_limit {
        if edge_leakage > limit {
            return Err(Error::Leakage { leak: edge_leakage, limit });
        }
    }
    let (lam, z, resid) = complex_schur(&u)?;
    let hb = layout.hbar0;
    let eps: Vec<f64> = lam.iter().map(|l| fold_quasienergy(-hb / period * l.arg(), hb, period)).collect();
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[a].total_cmp(&eps[b]).then(a.cmp(&b)));
    let eigenvectors = DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| z[(r, order[c])]);
    Ok(FloquetOperator {
        layout,
        period,
        u,
        eigenvalues: order.iter().map(|&i| lam[i]).collect(),
        quasienergies: order.iter().map(|&i| eps[i]).collect(),
        eigenvectors,
        unitarity_defect: defect,
        schur_residual: resid,
        edge_leakage,
    })
}

fn edge_leakage(layout: &StateLayout, u: &DMatrix<Complex64>) -> f64 {
    if layout.q_min > 0 || layout.q_max() < 0 || layout.groups < 3 {
        return 0.0;
    }
    let d = layout.group_size;
    let g0 = (-layout.q_min) as usize;
    let edges = [0usize, layout.groups - 1];
    (0..d)
        .map(|s| {
            let col = g0 * d + s;
            edges.iter().map(|&g| (0..d).map(|r| u[(g * d + r, col)].norm_sqr()).sum::<f64>()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Per-QE-state center `q̄` and width `σ_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Delocalization {
    pub quasienergy: f64,
    pub q_mean: f64,
    pub sigma_q: f64,
}

pub fn delocalization_measures(op: &FloquetOperator) -> Vec<Delocalization> {
    (0..op.eigenvectors.ncols())
        .map(|c| {
            let v: Vec<Complex64> = op.eigenvectors.column(c).iter().copied().collect();
            let (q_mean, sigma_q) = op.layout.q_moments(&v);
            Delocalization { quasienergy: op.quasienergies[c], q_mean, sigma_q }
        })
        .collect()
}

/// Fraction of QE states with `√σ_q` above `threshold`.
pub fn delocalized_fraction(measures: &[Delocalization], threshold: f64) -> f64 {
    if measures.is_empty() {
        return 0.0;
    }
    measures.iter().filter(|m| m.sigma_q.sqrt() > threshold).count() as f64 / measures.len() as f64
}
