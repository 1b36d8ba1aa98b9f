//! Classical counterpart: two quartic oscillators coupled by `-mu x y` and driven through
//! `x` by `f0 (cos Ω1 t + cos Ω2 t)`.
//!
//! Trajectories use a 4th-order Yoshida composition of drift-kick-drift steps with the
//! drive evaluated at the kick times. The stochastic layer of the coupling resonance is
//! located by scanning the resonance line with a twin-trajectory separation indicator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::floquet_engine::DriveParams;
use crate::quantum_dynamics::linear_fit;
use crate::quartic_oscillator::{classical_frequency, energy_of_action, turning_point, OscillatorSpectrum};
use crate::resonance_basis::ResonanceBasis;

/// Largest allowed `h * omega` unless overridden.
pub const DEFAULT_MAX_STEP_OMEGA: f64 = 0.05;
/// Default `h * omega_n0` for trajectories and ensembles; keeps the autonomous energy
/// error near `5e-9` relative.
pub const DEFAULT_STEP_OMEGA: f64 = 0.008;
/// Default `h * omega_n0` for the indicator scan, which only needs a stable classification.
pub const DEFAULT_SCAN_STEP_OMEGA: f64 = 0.02;

const YOSHIDA: [f64; 3] = {
    // w1 = 1 / (2 - 2^{1/3}), w0 = -2^{1/3} / (2 - 2^{1/3})
    let c = 1.259_921_049_894_873_2;
    [1.0 / (2.0 - c), -c / (2.0 - c), 1.0 / (2.0 - c)]
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub x: f64,
    pub px: f64,
    pub y: f64,
    pub py: f64,
    pub t: f64,
}

impl ClassicalState {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.px.is_finite() && self.y.is_finite() && self.py.is_finite()
    }

    /// Both oscillators at their right turning points with actions `ix`, `iy`.
    pub fn from_actions(ix: f64, iy: f64) -> Self {
        ClassicalState { x: turning_point(energy_of_action(ix)), px: 0.0, y: turning_point(energy_of_action(iy)), py: 0.0, t: 0.0 }
    }

    pub fn oscillator_energies(&self) -> (f64, f64) {
        (0.5 * self.px * self.px + 0.25 * self.x.powi(4), 0.5 * self.py * self.py + 0.25 * self.y.powi(4))
    }

    /// Autonomous energy `H0 = Hx + Hy - mu x y`.
    pub fn energy(&self, mu: f64) -> f64 {
        let (a, b) = self.oscillator_energies();
        a + b - mu * self.x * self.y
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalParams {
    pub mu: f64,
    pub f0: f64,
    pub omega1: f64,
    pub omega2: f64,
    /// Drive period; steps are `period / steps_per_period`.
    pub period: f64,
    pub steps_per_period: usize,
}

impl ClassicalParams {
    /// Step count per period chosen so that `h * omega <= step_omega`.
    pub fn new(mu: f64, drive: &DriveParams, omega: f64, step_omega: f64) -> Self {
        let period = drive.period();
        let steps_per_period = (period * omega / step_omega).ceil().max(1.0) as usize;
        ClassicalParams { mu, f0: drive.f0, omega1: drive.omega1, omega2: drive.omega2, period, steps_per_period }
    }

    pub fn step(&self) -> f64 {
        self.period / self.steps_per_period as f64
    }

    pub fn force(&self, t: f64) -> f64 {
        self.f0 * ((self.omega1 * t).cos() + (self.omega2 * t).cos())
    }

    /// Rejects steps with `h * omega_max > max_step_omega` for trajectories started at `s`.
    pub fn check_step(&self, s: &ClassicalState, max_step_omega: f64) -> Result<()> {
        let (ex, ey) = s.oscillator_energies();
        let w = classical_frequency(ex.max(ey).max(f64::MIN_POSITIVE));
        if self.step() * w > max_step_omega {
            return Err(validation(format!(
                "step {:.3e} gives h*omega = {:.3e} > {max_step_omega}",
                self.step(),
                self.step() * w
            )));
        }
        Ok(())
    }
}

/// Fixed-step propagator with the drive tabulated at the kick times of one period.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub params: ClassicalParams,
    h: f64,
    kicks: Vec<f64>,
}

impl Stepper {
    pub fn new(params: ClassicalParams) -> Self {
        let h = params.step();
        let mut kicks = Vec::with_capacity(3 * params.steps_per_period);
        for n in 0..params.steps_per_period {
            let mut t = n as f64 * h;
            for c in YOSHIDA {
                kicks.push(params.force(t + 0.5 * c * h));
                t += c * h;
            }
        }
        Stepper { params, h, kicks }
    }

    #[inline]
    fn substep(&self, s: &mut ClassicalState, hh: f64, f: f64) {
        let mu = self.params.mu;
        s.x += 0.5 * hh * s.px;
        s.y += 0.5 * hh * s.py;
        s.px += hh * (-s.x * s.x * s.x + mu * s.y + f);
        s.py += hh * (-s.y * s.y * s.y + mu * s.x);
        s.x += 0.5 * hh * s.px;
        s.y += 0.5 * hh * s.py;
    }

    /// One step of size `h` (negative runs backward) with the drive evaluated at stage times.
    pub fn step(&self, s: &mut ClassicalState, h: f64) {
        for c in YOSHIDA {
            let hh = c * h;
            let f = self.params.force(s.t + 0.5 * hh);
            self.substep(s, hh, f);
            s.t += hh;
        }
    }

    /// Advances by whole periods; `s.t` must sit on a period boundary.
    pub fn advance_periods(&self, s: &mut ClassicalState, periods: usize) {
        for _ in 0..periods {
            for n in 0..self.params.steps_per_period {
                for (k, c) in YOSHIDA.iter().enumerate() {
                    self.substep(s, c * self.h, self.kicks[3 * n + k]);
                }
            }
            s.t += self.params.period;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTrajectory {
    /// States at `t = N T`.
    pub stroboscopic: Vec<ClassicalState>,
    /// States every `period / fine_per_period`, if requested.
    pub fine: Vec<ClassicalState>,
}

/// Integrates `periods` drive periods from `s0`, sampling at each period and optionally at
/// `fine_per_period` points inside each period (must divide the step count).
pub fn integrate_trajectory(
    s0: ClassicalState,
    params: &ClassicalParams,
    periods: usize,
    fine_per_period: Option<usize>,
    max_step_omega: f64,
) -> Result<ClassicalTrajectory> {
    params.check_step(&s0, max_step_omega)?;
    let stepper = Stepper::new(params.clone());
    let nst = params.steps_per_period;
    let every = match fine_per_period {
        Some(0) => return Err(validation("fine_per_period must be positive")),
        Some(f) if nst % f != 0 => {
            return Err(validation(format!("fine_per_period {f} does not divide {nst} steps per period")))
        }
        Some(f) => Some(nst / f),
        None => None,
    };
    let e0 = s0.energy(params.mu).abs().max(f64::MIN_POSITIVE);
    let mut s = s0;
    let mut out = ClassicalTrajectory { stroboscopic: vec![s], fine: Vec::new() };
    for n in 0..periods {
        let base = s0.t + n as f64 * params.period;
        for m in 0..nst {
            if let Some(e) = every {
                if m % e == 0 {
                    out.fine.push(s);
                }
            }
            s.t = base + m as f64 * stepper.h;
            stepper.step(&mut s, stepper.h);
        }
        s.t = base + params.period;
        if !s.is_finite() || s.energy(params.mu).abs() > 1e6 * e0 {
            return Err(Error::Integration(format!("trajectory escaped after {} periods", n + 1)));
        }
        out.stroboscopic.push(s);
    }
    Ok(out)
}

/// Twin-trajectory settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndicatorOptions {
    pub periods: usize,
    /// Initial twin offset in `x`.
    pub d0: f64,
    /// Renormalize the twin once the separation exceeds this.
    pub renorm: f64,
}

impl Default for IndicatorOptions {
    fn default() -> Self {
        IndicatorOptions { periods: 1600, d0: 1e-10, renorm: 1e-4 }
    }
}

/// Finite-time separation exponent (per unit time) of a twin displaced by `d0` in `x`,
/// renormalized back to `d0` at period boundaries. Momenta are weighted by `1 / omega`.
pub fn chaos_indicator(stepper: &Stepper, s0: ClassicalState, omega: f64, opts: &IndicatorOptions) -> Result<f64> {
    if opts.periods == 0 {
        return Err(validation("indicator needs at least one period"));
    }
    let dist = |a: &ClassicalState, b: &ClassicalState| {
        ((a.x - b.x).powi(2) + ((a.px - b.px) / omega).powi(2) + (a.y - b.y).powi(2) + ((a.py - b.py) / omega).powi(2))
            .sqrt()
    };
    let mut a = s0;
    let mut b = ClassicalState { x: s0.x + opts.d0, ..s0 };
    let mut log_sum = 0.0;
    for _ in 0..opts.periods {
        stepper.advance_periods(&mut a, 1);
        stepper.advance_periods(&mut b, 1);
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Integration("twin trajectory overflow".into()));
        }
        let d = dist(&a, &b);
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Integration(format!("twin separation {d} underflowed or overflowed")));
        }
        if d > opts.renorm {
            log_sum += (d / opts.d0).ln();
            let f = opts.d0 / d;
            b = ClassicalState {
                x: a.x + (b.x - a.x) * f,
                px: a.px + (b.px - a.px) * f,
                y: a.y + (b.y - a.y) * f,
                py: a.py + (b.py - a.py) * f,
                t: b.t,
            };
        }
    }
    let d = dist(&a, &b);
    Ok((log_sum + (d / opts.d0).ln()) / (opts.periods as f64 * stepper.params.period))
}

/// Everything the classical side borrows from the quantum setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceGeometry {
    pub hbar0: f64,
    pub n0: usize,
    pub omega: f64,
    pub e2: f64,
    pub mu: f64,
    /// `2 E_{n0}`.
    pub e_center: f64,
    /// `x_{n0, n0+d}` for `d = 1, 3, 5, 7`.
    pub x_odd: [f64; 4],
    /// `E^M_{0,s}`, ascending.
    pub levels: Vec<f64>,
}

impl ResonanceGeometry {
    pub fn new(spec: &OscillatorSpectrum, basis: &ResonanceBasis) -> Result<Self> {
        let n0 = basis.params.n0;
        let x_odd = [1, 3, 5, 7].map(|d| spec.x_elements.get(n0, n0 + d));
        Ok(ResonanceGeometry {
            hbar0: basis.hbar0,
            n0,
            omega: basis.omega,
            e2: basis.e2,
            mu: basis.params.mu,
            e_center: 2.0 * spec.energies[n0],
            x_odd,
            levels: basis.group(0)?.levels.clone(),
        })
    }

    pub fn hbar_omega(&self) -> f64 {
        self.hbar0 * self.omega
    }

    /// Offset `k` (in units of `hbar0`) where the `ψ = 0` line meets the separatrix energy
    /// `resonance_energy(0, π)`.
    pub fn k_separatrix(&self) -> f64 {
        let s: f64 = self.x_odd.iter().map(|x| x * x).sum();
        (4.0 * self.mu * s / self.e2).sqrt()
    }

    /// Resonance energy `E''k^2 - 2 mu Σ_d x_d^2 cos(d ψ)` of the offset `k` at phase `psi`.
    pub fn resonance_energy(&self, k: f64, psi: f64) -> f64 {
        let pot: f64 = self.x_odd.iter().zip([1.0, 3.0, 5.0, 7.0]).map(|(x, d)| x * x * (d * psi).cos()).sum();
        self.e2 * k * k - 2.0 * self.mu * pot
    }

    /// Initial condition with actions `hbar0 (n0 + 1/2 ± k)`, both at the right turning point.
    pub fn initial_state(&self, k: f64) -> ClassicalState {
        let base = self.hbar0 * (self.n0 as f64 + 0.5);
        ClassicalState::from_actions(base + self.hbar0 * k, base - self.hbar0 * k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerOptions {
    pub points: usize,
    /// Scan range in units of the separatrix offset.
    pub span: (f64, f64),
    pub indicator: IndicatorOptions,
    /// A point is chaotic when its indicator exceeds this multiple of the scan median.
    pub threshold_ratio: f64,
    /// Re-scan around the band while it holds fewer points than this.
    pub zoom_min_points: usize,
    pub zoom_points: usize,
    pub zoom_levels: usize,
    pub max_step_omega: f64,
}

impl Default for LayerOptions {
    fn default() -> Self {
        LayerOptions {
            points: 200,
            span: (0.9, 1.1),
            indicator: IndicatorOptions::default(),
            threshold_ratio: 3.0,
            zoom_min_points: 5,
            zoom_points: 100,
            zoom_levels: 3,
            max_step_omega: DEFAULT_MAX_STEP_OMEGA,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Action offset `k` in units of `hbar0`.
    pub k: f64,
    pub indicator: f64,
    pub chaotic: bool,
    /// `E^M(k, 0) / (hbar0 omega)`.
    pub energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMeasurement {
    pub k_separatrix: f64,
    /// Chaotic band in `k`, extended half a scan step past the outermost chaotic points.
    pub k_band: (f64, f64),
    /// Band in resonance energy `E^M`.
    pub energy_band: (f64, f64),
    pub layer_width: f64,
    /// Levels whose cell (half-way to each neighbour) overlaps the band.
    pub m_s: usize,
    /// Levels strictly inside the band.
    pub m_s_strict: usize,
    pub threshold: f64,
    /// Coarse scan followed by the zoom scans, in scan order.
    pub scan: Vec<ScanPoint>,
    pub zoom_levels_used: usize,
}

/// Median of the indicator values.
pub fn indicator_baseline(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn scan_line(geom: &ResonanceGeometry, stepper: &Stepper, ks: &[f64], opts: &LayerOptions) -> Result<Vec<(f64, f64)>> {
    ks.par_iter()
        .map(|&k| {
            let s = geom.initial_state(k);
            stepper.params.check_step(&s, opts.max_step_omega)?;
            Ok((k, chaos_indicator(stepper, s, geom.omega, &opts.indicator)?))
        })
        .collect()
}

/// Longest run of consecutive chaotic points.
fn longest_run(flags: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a + 1) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Scans the `ψ = 0` line across the separatrix and measures the chaotic band. A band
/// narrower than `zoom_min_points` is re-scanned on a finer grid around it, or around the
/// separatrix crossing when the coarse scan finds nothing.
pub fn map_stochastic_layer(geom: &ResonanceGeometry, drive: &DriveParams, step_omega: f64, opts: &LayerOptions) -> Result<LayerMeasurement> {
    if geom.mu <= 0.0 || drive.f0 <= 0.0 {
        return Err(Error::NoChaoticLayer("coupling and drive must both be on".into()));
    }
    if opts.points < 3 || opts.zoom_points < 3 || opts.span.0 >= opts.span.1 {
        return Err(validation("layer scans need >= 3 points over a non-empty span"));
    }
    let stepper = Stepper::new(ClassicalParams::new(geom.mu, drive, geom.omega, step_omega));
    let ksep = geom.k_separatrix();
    let hw = geom.hbar_omega();
    let raw = scan_line(geom, &stepper, &linspace(opts.span.0 * ksep, opts.span.1 * ksep, opts.points), opts)?;
    let threshold = opts.threshold_ratio * indicator_baseline(&raw.iter().map(|p| p.1).collect::<Vec<_>>());
    let classify = |pts: &[(f64, f64)]| -> Vec<ScanPoint> {
        pts.iter()
            .map(|&(k, v)| ScanPoint { k, indicator: v, chaotic: v > threshold, energy: geom.resonance_energy(k, 0.0) / hw })
            .collect()
    };
    let mut level = classify(&raw);
    let mut scan = level.clone();
    let mut zoom_levels_used = 0;
    let band = loop {
        let step = level[1].k - level[0].k;
        let run = longest_run(&level.iter().map(|p| p.chaotic).collect::<Vec<_>>());
        let wide = run.is_some_and(|(a, b)| b - a + 1 >= opts.zoom_min_points);
        if wide || zoom_levels_used == opts.zoom_levels {
            match run {
                Some((a, b)) => break (level[a].k - 0.5 * step, level[b].k + 0.5 * step),
                None => {
                    return Err(Error::NoChaoticLayer(format!(
                        "no indicator above {threshold:.3e} after {zoom_levels_used} zoom levels"
                    )))
                }
            }
        }
        let (lo, hi) = match run {
            Some((a, b)) => (level[a].k - 2.0 * step, level[b].k + 2.0 * step),
            None => (ksep - 2.0 * step, ksep + 2.0 * step),
        };
        level = classify(&scan_line(geom, &stepper, &linspace(lo, hi, opts.zoom_points), opts)?);
        scan.extend_from_slice(&level);
        zoom_levels_used += 1;
    };
    let e1 = geom.resonance_energy(band.0, 0.0);
    let e2 = geom.resonance_energy(band.1, 0.0);
    let energy_band = (e1.min(e2), e1.max(e2));
    let (m_s, m_s_strict) = count_levels(&geom.levels, energy_band);
    Ok(LayerMeasurement {
        k_separatrix: ksep,
        k_band: band,
        energy_band,
        layer_width: energy_band.1 - energy_band.0,
        m_s,
        m_s_strict,
        threshold,
        scan,
        zoom_levels_used,
    })
}

/// `(cell-overlap count, strict count)` of ascending `levels` against `[lo, hi]`.
pub fn count_levels(levels: &[f64], (lo, hi): (f64, f64)) -> (usize, usize) {
    let strict = levels.iter().filter(|&&e| e >= lo && e <= hi).count();
    let n = levels.len();
    let cell = (0..n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (levels[i - 1] + levels[i]) };
            let right = if i + 1 == n { f64::INFINITY } else { 0.5 * (levels[i] + levels[i + 1]) };
            left <= hi && right >= lo
        })
        .count();
    (cell, strict)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionOptions {
    pub ensemble_size: usize,
    pub periods: usize,
    pub window: (usize, usize),
    pub seed: u64,
    pub bootstrap: usize,
    /// Members farther than this from the center (in `hbar0 omega`) at the end count as escaped.
    pub escape_limit: f64,
    pub max_step_omega: f64,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        DiffusionOptions {
            ensemble_size: 200,
            periods: 600,
            window: (50, 500),
            seed: 1,
            bootstrap: 200,
            escape_limit: 6.0,
            max_step_omega: DEFAULT_MAX_STEP_OMEGA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDiffusionResult {
    pub d: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub residual: f64,
    pub ensemble_size: usize,
    pub window: (usize, usize),
    pub k_band: (f64, f64),
    /// Ensemble variance of `(H0 - 2 E_{n0}) / (hbar0 omega)` at each period.
    pub variance: Vec<f64>,
}

fn variance_series(series: &[Vec<f64>], members: &[usize], len: usize) -> Vec<f64> {
    let m = members.len() as f64;
    (0..len)
        .map(|n| {
            let mean = members.iter().map(|&i| series[i][n]).sum::<f64>() / m;
            members.iter().map(|&i| (series[i][n] - mean).powi(2)).sum::<f64>() / m
        })
        .collect()
}

/// Ensemble spread of the unperturbed energy for starts drawn uniformly from `k_band` on the
/// `ψ = 0` line, in the rescaled units of the quantum `Δ_q`.
pub fn classical_diffusion(
    geom: &ResonanceGeometry,
    drive: &DriveParams,
    step_omega: f64,
    k_band: (f64, f64),
    opts: &DiffusionOptions,
) -> Result<ClassicalDiffusionResult> {
    let (n1, n2) = opts.window;
    if opts.ensemble_size < 2 || n2 <= n1 || n2 > opts.periods {
        return Err(validation("classical ensemble needs >= 2 members and a window inside the run"));
    }
    let stepper = Stepper::new(ClassicalParams::new(geom.mu, drive, geom.omega, step_omega));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ks: Vec<f64> = (0..opts.ensemble_size)
        .map(|_| if k_band.1 > k_band.0 { rng.random_range(k_band.0..=k_band.1) } else { k_band.0 })
        .collect();
    let hw = geom.hbar_omega();
    let series: Vec<Vec<f64>> = ks
        .par_iter()
        .map(|&k| {
            let mut s = geom.initial_state(k);
            stepper.params.check_step(&s, opts.max_step_omega)?;
            let mut out = Vec::with_capacity(opts.periods + 1);
            out.push((s.energy(geom.mu) - geom.e_center) / hw);
            for _ in 0..opts.periods {
                stepper.advance_periods(&mut s, 1);
                if !s.is_finite() {
                    return Err(Error::Integration("ensemble member overflowed".into()));
                }
                out.push((s.energy(geom.mu) - geom.e_center) / hw);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let escaped = series.iter().filter(|s| s.last().is_some_and(|e| e.abs() > opts.escape_limit)).count();
    if escaped == series.len() {
        return Err(Error::EnsembleEscaped(format!("all {escaped} members beyond {} hbar omega", opts.escape_limit)));
    }
    let all: Vec<usize> = (0..series.len()).collect();
    let len = opts.periods + 1;
    let variance = variance_series(&series, &all, len);
    let (d, intercept, residual) = linear_fit(&variance, n1, n2);
    let mut slopes = Vec::with_capacity(opts.bootstrap);
    let mut brng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..opts.bootstrap {
        let pick: Vec<usize> = (0..series.len()).map(|_| brng.random_range(0..series.len())).collect();
        slopes.push(linear_fit(&variance_series(&series, &pick, n2 + 1), n1, n2).0);
    }
    let stderr = if slopes.len() > 1 {
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        (slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(ClassicalDiffusionResult { d, stderr, intercept, residual, ensemble_size: opts.ensemble_size, window: opts.window, k_band, variance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_params(mu: f64, f0: f64) -> ClassicalParams {
        ClassicalParams { mu, f0, omega1: 0.3, omega2: 0.2, period: 20.0 * std::f64::consts::PI, steps_per_period: 4000 }
    }

    #[test]
    fn yoshida_weights_sum_to_one() {
        assert!((YOSHIDA.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_and_direct_steps_agree() {
        let p = free_params(1e-3, 1e-4);
        let st = Stepper::new(p.clone());
        let s0 = ClassicalState { x: 0.3, px: 0.0, y: 0.25, py: 0.01, t: 0.0 };
        let mut a = s0;
        st.advance_periods(&mut a, 2);
        let tr = integrate_trajectory(s0, &p, 2, None, 1.0).unwrap();
        let b = tr.stroboscopic[2];
        assert!((a.x - b.x).abs() < 1e-12 && (a.py - b.py).abs() < 1e-12);
    }

    #[test]
    fn baseline_is_median() {
        assert_eq!(indicator_baseline(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(indicator_baseline(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn level_counting() {
        let lv = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(count_levels(&lv, (1.2, 1.4)), (1, 0));
        assert_eq!(count_levels(&lv, (0.9, 2.1)), (2, 2));
        assert_eq!(count_levels(&lv, (1.4, 1.6)), (2, 0));
    }

    #[test]
    fn longest_run_picks_widest() {
        assert_eq!(longest_run(&[false, true, false, true, true, false]), Some((3, 4)));
        assert_eq!(longest_run(&[true, true]), Some((0, 1)));
        assert_eq!(longest_run(&[false]), None);
    }
}
