//! Stroboscopic wave-packet evolution through the quasienergy decomposition and the
//! diffusion observables built on it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::floquet_engine::{FloquetOperator, StateLayout};
use crate::linalg::{zgemm, Op};
use crate::resonance_basis::ResonanceBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    ResonanceCenter,
    Separatrix,
    AboveSeparatrix,
}

impl InitialKind {
    pub fn label(&self) -> &'static str {
        match self {
            InitialKind::ResonanceCenter => "center",
            InitialKind::Separatrix => "separatrix",
            InitialKind::AboveSeparatrix => "above",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PacketState {
    pub amplitudes: Vec<Complex64>,
    pub n: usize,
    /// Basis state the packet started from, if it is a single one.
    pub origin: Option<(i32, usize)>,
}

impl PacketState {
    pub fn basis_state(layout: &StateLayout, q: i32, s: usize) -> Result<Self> {
        let idx = layout.index(q, s)?;
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); layout.dimension()];
        amplitudes[idx] = Complex64::new(1.0, 0.0);
        Ok(PacketState { amplitudes, n: 0, origin: Some((q, s)) })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Level index used for `kind` in group `q_start`. The above-separatrix start sits
/// `above_offset` levels into the above set.
pub fn initial_level(basis: &ResonanceBasis, kind: InitialKind, q_start: i32, above_offset: usize) -> Result<usize> {
    basis.group(q_start)?;
    match kind {
        InitialKind::ResonanceCenter => Ok(0),
        InitialKind::Separatrix => Ok(basis.classification(q_start)?.separatrix_index),
        InitialKind::AboveSeparatrix => {
            let c = basis.classification(q_start)?;
            if c.above_set.is_empty() {
                return Err(Error::EmptyClassification(format!("group {q_start} has no above-separatrix levels")));
            }
            Ok(c.above_set[above_offset.min(c.above_set.len() - 1)])
        }
    }
}

pub fn make_initial_state(
    basis: &ResonanceBasis,
    layout: &StateLayout,
    kind: InitialKind,
    q_start: i32,
    above_offset: usize,
) -> Result<PacketState> {
    let s = initial_level(basis, kind, q_start, above_offset)?;
    PacketState::basis_state(layout, q_start, s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PacketTrajectory {
    pub label: String,
    pub origin: Option<(i32, usize)>,
    pub q_mean: Vec<f64>,
    /// `Δ_q(N) = Σ_q (q - q̃)^2 P_q`.
    pub delta_q: Vec<f64>,
    /// Variance of `q + E^M / (hbar0 ω)`.
    pub energy_dispersion: Vec<f64>,
    /// Mean intra-group variance of `E^M / (hbar0 ω)`.
    pub group_variance: Vec<f64>,
    /// Probability on the outermost groups.
    pub edge_population: Vec<f64>,
    pub max_norm_error: f64,
}

impl PacketTrajectory {
    pub fn len(&self) -> usize {
        self.delta_q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta_q.is_empty()
    }
}

fn observe(layout: &StateLayout, c: &[Complex64]) -> (f64, f64, f64, f64, f64, f64) {
    let hw = layout.hbar0 * layout.omega;
    let d = layout.group_size;
    let mut norm = 0.0;
    let (mut m1, mut m2, mut e1, mut e2, mut gv, mut edge) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for g in 0..layout.groups {
        let q = (layout.q_min + g as i32) as f64;
        let (mut p, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for s in 0..d {
            let w = c[g * d + s].norm_sqr();
            let e = layout.energies[g * d + s] / hw;
            p += w;
            s1 += w * e;
            s2 += w * e * e;
        }
        norm += p;
        m1 += q * p;
        m2 += q * q * p;
        e1 += q * p + s1;
        e2 += q * q * p + 2.0 * q * s1 + s2;
        if p > 0.0 {
            gv += s2 - s1 * s1 / p;
        }
        if g == 0 || g + 1 == layout.groups {
            edge += p;
        }
    }
    (norm, m1, (m2 - m1 * m1).max(0.0), (e2 - e1 * e1).max(0.0), gv.max(0.0), edge)
}

/// Evolves several packets for `N = 0..=n_max` periods by rephasing the QE expansion.
pub fn evolve_many(op: &FloquetOperator, states: &[PacketState], n_max: usize, labels: &[String]) -> Result<Vec<PacketTrajectory>> {
    if n_max < 1 {
        return Err(validation("n_max must be at least 1"));
    }
    let dim = op.layout.dimension();
    for st in states {
        if st.amplitudes.len() != dim {
            return Err(validation("packet dimension does not match the operator"));
        }
        if (st.norm() - 1.0).abs() > 1e-10 {
            return Err(validation(format!("packet norm {} is not 1", st.norm())));
        }
    }
    let ns = states.len();
    let c0 = DMatrix::from_fn(dim, ns, |r, c| states[c].amplitudes[r]);
    let a = zgemm(Op::C, &op.eigenvectors, Op::N, &c0);
    let hb = op.layout.hbar0;
    let rate: Vec<f64> = op.quasienergies.iter().map(|e| -e * op.period / hb).collect();
    let mut out: Vec<PacketTrajectory> = (0..ns)
        .map(|k| PacketTrajectory {
            label: labels.get(k).cloned().unwrap_or_default(),
            origin: states[k].origin,
            q_mean: Vec::with_capacity(n_max + 1),
            delta_q: Vec::with_capacity(n_max + 1),
            energy_dispersion: Vec::with_capacity(n_max + 1),
            group_variance: Vec::with_capacity(n_max + 1),
            edge_population: Vec::with_capacity(n_max + 1),
            max_norm_error: 0.0,
        })
        .collect();
    let block = (512 / ns.max(1)).max(1);
    let mut n0 = 0usize;
    while n0 <= n_max {
        let nb = block.min(n_max + 1 - n0);
        let rhs = DMatrix::from_fn(dim, ns * nb, |r, col| {
            let (k, j) = (col / nb, col % nb);
            let n = (n0 + j) as f64;
            a[(r, k)] * Complex64::from_polar(1.0, rate[r] * n)
        });
        let c = zgemm(Op::N, &op.eigenvectors, Op::N, &rhs);
        for (k, tr) in out.iter_mut().enumerate() {
            for j in 0..nb {
                let col = c.column(k * nb + j);
                let (norm, qm, dq, ed, gv, edge) = observe(&op.layout, col.as_slice());
                tr.max_norm_error = tr.max_norm_error.max((norm - 1.0).abs());
                tr.q_mean.push(qm);
                tr.delta_q.push(dq);
                tr.energy_dispersion.push(ed);
                tr.group_variance.push(gv);
                tr.edge_population.push(edge);
            }
        }
        n0 += nb;
    }
    Ok(out)
}

pub fn evolve(op: &FloquetOperator, psi0: &PacketState, n_max: usize, label: &str) -> Result<PacketTrajectory> {
    Ok(evolve_many(op, std::slice::from_ref(psi0), n_max, &[label.to_string()])?.remove(0))
}

/// Amplitudes after `n` periods, `C(N) = Z diag(exp(-i ε N T / hbar0)) Z† C(0)`.
pub fn amplitudes_at(op: &FloquetOperator, psi0: &PacketState, n: usize) -> Vec<Complex64> {
    let dim = op.layout.dimension();
    let c0 = DMatrix::from_fn(dim, 1, |r, _| psi0.amplitudes[r]);
    let mut a = zgemm(Op::C, &op.eigenvectors, Op::N, &c0);
    for r in 0..dim {
        a[(r, 0)] *= Complex64::from_polar(1.0, -op.quasienergies[r] * op.period / op.layout.hbar0 * n as f64);
    }
    zgemm(Op::N, &op.eigenvectors, Op::N, &a).column(0).iter().copied().collect()
}

/// Least-squares line through `(n, y[n])` for `n` in `[n1, n2]`: `(slope, intercept, rms residual)`.
pub fn linear_fit(y: &[f64], n1: usize, n2: usize) -> (f64, f64, f64) {
    let m = (n2 - n1 + 1) as f64;
    let xm = (n1 + n2) as f64 / 2.0;
    let ym = y[n1..=n2].iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (n, v) in y.iter().enumerate().take(n2 + 1).skip(n1) {
        let dx = n as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = ym - slope * xm;
    let rss: f64 = (n1..=n2).map(|n| (y[n] - icpt - slope * n as f64).powi(2)).sum();
    (slope, icpt, (rss / m).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Saturation {
    /// Growth terminates at this period index.
    At(usize),
    NotDetected,
    /// No growth in the initial window at all.
    NoDiffusion,
}

impl Saturation {
    pub fn n_sat(&self) -> Option<usize> {
        match self {
            Saturation::At(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationOptions {
    /// Initial window `[n1, n2]`; its width is also the trailing-window width.
    pub window: (usize, usize),
    /// Saturation once the trailing slope falls below this fraction of the initial slope.
    pub fraction: f64,
}

impl Default for SaturationOptions {
    fn default() -> Self {
        SaturationOptions { window: (50, 500), fraction: 0.1 }
    }
}

/// Finds where diffusive growth stops. The first trailing window whose slope drops below
/// `fraction` of the initial slope brackets the change-point, which is then placed by a
/// continuous ramp-then-plateau least-squares fit.
pub fn detect_saturation(series: &[f64], opts: &SaturationOptions) -> Result<Saturation> {
    let (n1, n2) = opts.window;
    if n2 <= n1 {
        return Err(validation("saturation window must have n2 > n1"));
    }
    if series.len() < 2 * n2 {
        return Err(Error::TrajectoryTooShort(format!("{} periods recorded, need at least {}", series.len(), 2 * n2)));
    }
    let (s0, _, _) = linear_fit(series, n1, n2);
    let scale = series[n1..=n2].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if s0 <= 1e-12 * scale.max(f64::MIN_POSITIVE) || s0 <= 0.0 {
        return Ok(Saturation::NoDiffusion);
    }
    let w = n2 - n1;
    let step = (w / 10).max(1);
    let mut start = n1 + step;
    let last = series.len() - 1;
    while start + w <= last {
        let (s, _, _) = linear_fit(series, start, start + w);
        if s < opts.fraction * s0 {
            let knee = ramp_plateau_knee(series, n1, start + w);
            if 2 * knee > series.len() {
                return Err(Error::TrajectoryTooShort(format!(
                    "saturation near N = {knee} needs at least {} periods",
                    2 * knee
                )));
            }
            return Ok(Saturation::At(knee));
        }
        start += step;
    }
    Ok(Saturation::NotDetected)
}

/// Break point `b` minimizing the residual of `y = a + s min(n, b)` on `[lo, hi]`.
fn ramp_plateau_knee(y: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = (f64::INFINITY, hi);
    for b in lo + 2..hi {
        // regressor u = min(n, b)
        let m = (hi - lo + 1) as f64;
        let (mut su, mut sy, mut suu, mut suy) = (0.0, 0.0, 0.0, 0.0);
        for (n, v) in y.iter().enumerate().take(hi + 1).skip(lo) {
            let u = n.min(b) as f64;
            su += u;
            sy += v;
            suu += u * u;
            suy += u * v;
        }
        let den = m * suu - su * su;
        if den <= 0.0 {
            continue;
        }
        let s = (m * suy - su * sy) / den;
        let a = (sy - s * su) / m;
        let rss: f64 = (lo..=hi).map(|n| (y[n] - a - s * n.min(b) as f64).powi(2)).sum();
        if rss < best.0 {
            best = (rss, b);
        }
    }
    best.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEstimate {
    pub d: f64,
    pub intercept: f64,
    pub residual: f64,
    /// `d * (n2 - n1)`.
    pub rise: f64,
    /// Least-squares standard error of `d` from the window residual.
    pub stderr: f64,
    pub window: (usize, usize),
    pub saturation: Saturation,
}

pub fn fit_diffusion(series: &[f64], window: (usize, usize), saturation: Saturation) -> Result<DiffusionEstimate> {
    let (n1, n2) = window;
    if n2 <= n1 || n2 >= series.len() {
        return Err(validation(format!("fit window [{n1}, {n2}] outside the {}-period trajectory", series.len())));
    }
    if let Saturation::At(n_sat) = saturation {
        if n_sat < n2 {
            return Err(Error::WindowOverlapsSaturation { n1, n2, n_sat });
        }
    }
    let (d, intercept, residual) = linear_fit(series, n1, n2);
    let m = (n2 - n1 + 1) as f64;
    let stderr = residual * (m / (m - 2.0).max(1.0) / (m * (m * m - 1.0) / 12.0)).sqrt();
    Ok(DiffusionEstimate { d, intercept, residual, rise: d * (n2 - n1) as f64, stderr, window, saturation })
}

/// Median with a seeded bootstrap standard error.
pub fn median_with_error(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    fn median(v: &mut [f64]) -> f64 {
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let med = median(&mut values.to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut meds = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; values.len()];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = values[rng.random_range(0..values.len())];
        }
        meds.push(median(&mut buf));
    }
    let mean = meds.iter().sum::<f64>() / meds.len().max(1) as f64;
    let var = meds.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (meds.len().max(2) - 1) as f64;
    (med, var.sqrt())
}

/// Quantum diffusion over the separatrix set of group 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixDiffusion {
    pub levels: Vec<usize>,
    pub per_state: Vec<DiffusionEstimate>,
    pub mean: f64,
    pub median: f64,
    /// Bootstrap spread of the median combined with the median per-state fit error.
    pub median_error: f64,
    /// Fit on the separatrix-set mean curve.
    pub ensemble: DiffusionEstimate,
}

/// Fits `D` for every separatrix-set start. A state whose growth stops inside the window is
/// fitted up to its saturation point instead.
pub fn separatrix_diffusion(
    trajectories: &[PacketTrajectory],
    opts: &SaturationOptions,
    seed: u64,
) -> Result<SeparatrixDiffusion> {
    if trajectories.is_empty() {
        return Err(Error::EmptyClassification("no separatrix trajectories".into()));
    }
    let fit_one = |y: &[f64]| -> Result<DiffusionEstimate> {
        // A knee in the second half of the record lies past the window; fit it unsaturated.
        let sat = match detect_saturation(y, opts) {
            Err(Error::TrajectoryTooShort(_)) if y.len() >= 2 * opts.window.1 => Saturation::NotDetected,
            r => r?,
        };
        match fit_diffusion(y, opts.window, sat) {
            Err(Error::WindowOverlapsSaturation { n_sat, .. }) if n_sat > opts.window.0 + 10 => {
                fit_diffusion(y, (opts.window.0, n_sat), Saturation::NotDetected).map(|mut e| {
                    e.saturation = sat;
                    e
                })
            }
            Err(Error::WindowOverlapsSaturation { .. }) => {
                Ok(DiffusionEstimate { d: 0.0, intercept: y[opts.window.0], residual: 0.0, rise: 0.0, stderr: 0.0, window: opts.window, saturation: sat })
            }
            r => r,
        }
    };
    let per_state: Vec<DiffusionEstimate> = trajectories.iter().map(|t| fit_one(&t.delta_q)).collect::<Result<_>>()?;
    let len = trajectories[0].len();
    let mean_curve: Vec<f64> =
        (0..len).map(|n| trajectories.iter().map(|t| t.delta_q[n]).sum::<f64>() / trajectories.len() as f64).collect();
    let ensemble = fit_one(&mean_curve)?;
    let ds: Vec<f64> = per_state.iter().map(|e| e.d).collect();
    let (median, spread) = median_with_error(&ds, 400, seed);
    let mut fit_errors: Vec<f64> = per_state.iter().map(|e| e.stderr).collect();
    fit_errors.sort_by(f64::total_cmp);
    let fit_error = fit_errors[fit_errors.len() / 2];
    Ok(SeparatrixDiffusion {
        levels: trajectories.iter().filter_map(|t| t.origin.map(|o| o.1)).collect(),
        mean: ds.iter().sum::<f64>() / ds.len() as f64,
        median,
        median_error: spread.hypot(fit_error),
        per_state,
        ensemble,
    })
}

/// True when `value` does not increase along ascending `x`, allowing each step to rise by
/// at most `nsigma` combined standard errors. Points are `(x, value, stderr)`.
pub fn non_increasing_within(points: &[(f64, f64, f64)], nsigma: f64) -> bool {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0));
    p.windows(2).all(|w| w[1].1 <= w[0].1 + nsigma * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt())
}
