//! One-dimensional quartic oscillator `H = p^2/2 + x^4/4` with Planck constant `hbar0`.
//!
//! The eigenproblem is discretized on a uniform grid `x_i = i*h`, `|x| < L`, with a
//! high-order central finite-difference Laplacian and Dirichlet walls at `±L`. Even and
//! odd parity sectors are solved separately on the half grid `i >= 0` as banded
//! symmetric problems.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation, Error, Result};
use crate::linalg::SymBand;

/// `∫₀¹ √(1 − u⁴) du`; the quartic action is `∮ p dx = 8 * QUARTIC_ACTION * E^{3/4}`.
pub const QUARTIC_ACTION: f64 = 0.874_019_184_764_039_9;

/// Default number of grid points per shortest local wavelength.
pub const DEFAULT_POINTS_PER_WAVELENGTH: f64 = 8.0;
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;
pub const MIN_BOX_MARGIN: f64 = 1.5;
pub const DEFAULT_OFFSET_CUTOFF: usize = 21;
pub const DEFAULT_OFFSET_TOLERANCE: f64 = 1e-13;

/// Closed-orbit action `∮ p dx` at energy `e`.
pub fn action_of_energy(e: f64) -> f64 {
    8.0 * QUARTIC_ACTION * e.powf(0.75)
}

/// Inverse of [`action_of_energy`] for the action variable `I = ∮ p dx / 2π`.
pub fn energy_of_action(i: f64) -> f64 {
    (2.0 * PI * i / (8.0 * QUARTIC_ACTION)).powf(4.0 / 3.0)
}

/// Semiclassical level `∮ p dx = 2π hbar (n + 1/2)`.
pub fn wkb_energy(hbar0: f64, n: usize) -> f64 {
    energy_of_action(hbar0 * (n as f64 + 0.5))
}

pub fn turning_point(e: f64) -> f64 {
    (4.0 * e).powf(0.25)
}

/// Classical angular frequency `dE/dI` at energy `e`.
pub fn classical_frequency(e: f64) -> f64 {
    // E = c I^{4/3}  =>  dE/dI = (4/3) E / I
    let i = action_of_energy(e) / (2.0 * PI);
    4.0 * e / (3.0 * i)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub hbar0: f64,
    pub n_max: usize,
    /// Grid spans `[-L, L]`.
    pub grid_box_halfwidth: f64,
    /// Points on `[-L, L]` including both walls; always odd so that `x = 0` is a node.
    pub grid_points: usize,
    /// Required ratio of `L` to the classical turning point of level `n_max`.
    pub margin: f64,
    /// Half width `m` of the central stencil (order `2m`).
    pub stencil_half_width: usize,
    pub max_refinements: usize,
    pub convergence_tol: f64,
}

impl OscillatorParams {
    pub fn auto(hbar0: f64, n_max: usize) -> Self {
        Self::auto_with(hbar0, n_max, MIN_BOX_MARGIN, DEFAULT_POINTS_PER_WAVELENGTH)
    }

    /// Sizes the box and spacing from a WKB estimate of `E_{n_max}`.
    pub fn auto_with(hbar0: f64, n_max: usize, margin: f64, points_per_wavelength: f64) -> Self {
        let e = wkb_energy(hbar0, n_max);
        let l = margin * turning_point(e);
        let lambda = 2.0 * PI * hbar0 / (2.0 * e).sqrt();
        let half = (l * points_per_wavelength / lambda).ceil().max(2.0) as usize;
        OscillatorParams {
            hbar0,
            n_max,
            grid_box_halfwidth: l,
            grid_points: 2 * half + 1,
            margin,
            stencil_half_width: 8,
            max_refinements: 2,
            convergence_tol: 1e-8,
        }
    }

    /// Intervals between `x = 0` and the wall.
    pub fn half_intervals(&self) -> usize {
        (self.grid_points - 1) / 2
    }

    pub fn spacing(&self) -> f64 {
        self.grid_box_halfwidth / self.half_intervals() as f64
    }

    pub fn points_per_wavelength(&self) -> f64 {
        let e = wkb_energy(self.hbar0, self.n_max);
        2.0 * PI * self.hbar0 / (2.0 * e).sqrt() / self.spacing()
    }

    /// Same box, twice the resolution.
    pub fn refined(&self) -> Self {
        OscillatorParams { grid_points: 2 * self.grid_points - 1, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar0 > 0.0 && self.hbar0.is_finite()) {
            return Err(validation(format!("hbar0 must be positive, got {}", self.hbar0)));
        }
        if self.grid_points < 3 || self.grid_points % 2 == 0 {
            return Err(validation(format!("grid_points must be odd and >= 3, got {}", self.grid_points)));
        }
        if self.margin < MIN_BOX_MARGIN {
            return Err(validation(format!("box margin {} below {}", self.margin, MIN_BOX_MARGIN)));
        }
        if self.stencil_half_width == 0 || self.stencil_half_width > 16 {
            return Err(validation("stencil_half_width must be in 1..=16"));
        }
        let e = wkb_energy(self.hbar0, self.n_max);
        let need = self.margin * turning_point(e);
        if self.grid_box_halfwidth < need * (1.0 - 1e-12) {
            return Err(Error::GridTooSmall(format!(
                "box half-width {:.6e} < {} x turning point {:.6e}",
                self.grid_box_halfwidth,
                self.margin,
                turning_point(e)
            )));
        }
        let ppw = self.points_per_wavelength();
        if ppw < MIN_POINTS_PER_WAVELENGTH * (1.0 - 1e-12) {
            return Err(Error::GridTooSmall(format!(
                "{ppw:.2} points per wavelength at n_max, need {MIN_POINTS_PER_WAVELENGTH}"
            )));
        }
        if self.half_intervals() < self.n_max + 2 {
            return Err(Error::GridTooSmall(format!(
                "{} half-grid points cannot hold {} levels",
                self.half_intervals(),
                self.n_max + 1
            )));
        }
        Ok(())
    }

    /// Hex digest identifying the discretization.
    pub fn grid_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.hbar0.to_le_bytes());
        h.update((self.n_max as u64).to_le_bytes());
        h.update(self.grid_box_halfwidth.to_le_bytes());
        h.update((self.grid_points as u64).to_le_bytes());
        h.update((self.stencil_half_width as u64).to_le_bytes());
        let d = h.finalize();
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Coefficients `c_0..c_m` of the order-`2m` central second-derivative stencil.
pub fn stencil_coefficients(m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m + 1];
    // c_j = 2 (-1)^{j+1} (m!)^2 / (j^2 (m-j)! (m+j)!), built as a running product.
    for j in 1..=m {
        let mut ratio = 1.0;
        for t in 1..=j {
            ratio *= (m + 1 - t) as f64 / (m + t) as f64;
        }
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        c[j] = 2.0 * sign * ratio / (j * j) as f64;
    }
    c[0] = -2.0 * c[1..].iter().sum::<f64>();
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

/// Coordinate matrix restricted to odd offsets `|n - n'| <= cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionMatrix {
    pub n_levels: usize,
    pub cutoff: usize,
    /// `bands[b][n] = x_{n, n+2b+1}`.
    pub bands: Vec<Vec<f64>>,
}

impl PositionMatrix {
    pub fn get(&self, n: usize, m: usize) -> f64 {
        let (lo, hi) = if n <= m { (n, m) } else { (m, n) };
        let d = hi - lo;
        if d % 2 == 0 || d > self.cutoff || hi >= self.n_levels {
            return 0.0;
        }
        self.bands[(d - 1) / 2][lo]
    }

    pub fn max_abs(&self) -> f64 {
        self.bands.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

#[derive(Clone, Debug)]
pub struct OscillatorSpectrum {
    pub params: OscillatorParams,
    pub energies: Vec<f64>,
    /// Half-grid values `psi_n(i*h)`, `i = 0..N`, normalized on the full grid.
    /// Absent when loaded from a cache written without wavefunctions.
    pub wavefunctions: Option<DMatrix<f64>>,
    pub x_elements: PositionMatrix,
    /// Relative change of `E_{n_max}` under the last grid doubling.
    pub convergence_change: f64,
}

impl OscillatorSpectrum {
    pub fn hbar0(&self) -> f64 {
        self.params.hbar0
    }

    pub fn n_max(&self) -> usize {
        self.energies.len() - 1
    }

    pub fn half_grid(&self) -> Vec<f64> {
        let h = self.params.spacing();
        (0..self.params.half_intervals()).map(|i| i as f64 * h).collect()
    }

    /// `psi_n` on the interior of the full grid, `x = -(N-1)h ..= (N-1)h`.
    pub fn full_wavefunction(&self, n: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        let w = self.wavefunctions.as_ref()?;
        let nh = self.params.half_intervals();
        let h = self.params.spacing();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let mut xs = Vec::with_capacity(2 * nh - 1);
        let mut ys = Vec::with_capacity(2 * nh - 1);
        for i in (1..nh).rev() {
            xs.push(-(i as f64) * h);
            ys.push(sign * w[(i, n)]);
        }
        for i in 0..nh {
            xs.push(i as f64 * h);
            ys.push(w[(i, n)]);
        }
        Some((xs, ys))
    }

    /// Trapezoidal `<n| f(x) |m>` on the grid (the walls carry zero weight).
    pub fn grid_expectation(&self, n: usize, m: usize, f: impl Fn(f64) -> f64) -> Option<f64> {
        let (xs, a) = self.full_wavefunction(n)?;
        let (_, b) = self.full_wavefunction(m)?;
        let h = self.params.spacing();
        Some(xs.iter().zip(a.iter().zip(&b)).map(|(x, (u, v))| f(*x) * u * v).sum::<f64>() * h)
    }
}

fn sector_matrix(p: &OscillatorParams, parity: Parity) -> SymBand {
    let m = p.stencil_half_width;
    let nh = p.half_intervals();
    let h = p.spacing();
    let c = stencil_coefficients(m);
    let kin = -p.hbar0 * p.hbar0 / (2.0 * h * h);
    match parity {
        Parity::Even => {
            // phi_0 = psi_0, phi_i = sqrt(2) psi_i keeps the folded operator symmetric.
            let mut a = SymBand::zeros(nh, m);
            for i in 0..nh {
                let x = i as f64 * h;
                a.set(i, i, kin * c[0] + 0.25 * x.powi(4));
                for d in 1..=m.min(nh - 1 - i) {
                    a.set(i + d, i, kin * c[d]);
                }
            }
            for d in 1..=m.min(nh - 1) {
                a.set(d, 0, std::f64::consts::SQRT_2 * kin * c[d]);
            }
            for i in 1..nh {
                for j in 1..=i {
                    if i + j <= m {
                        a.add(i, j, kin * c[i + j]);
                    }
                }
            }
            a
        }
        Parity::Odd => {
            let n = nh - 1;
            let mut a = SymBand::zeros(n, m);
            for r in 0..n {
                let i = r + 1;
                let x = i as f64 * h;
                a.set(r, r, kin * c[0] + 0.25 * x.powi(4));
                for d in 1..=m.min(n - 1 - r) {
                    a.set(r + d, r, kin * c[d]);
                }
            }
            for i in 1..nh {
                for j in 1..=i {
                    if i + j <= m {
                        a.add(i - 1, j - 1, -kin * c[i + j]);
                    }
                }
            }
            a
        }
    }
}

fn sector_count(n_max: usize, parity: Parity) -> usize {
    match parity {
        Parity::Even => n_max / 2 + 1,
        Parity::Odd => (n_max + 1) / 2,
    }
}

fn top_level_energy(p: &OscillatorParams) -> Result<f64> {
    let parity = if p.n_max % 2 == 0 { Parity::Even } else { Parity::Odd };
    let idx = sector_count(p.n_max, parity) - 1;
    let (w, _) = sector_matrix(p, parity).eigen_range(idx, idx, false)?;
    Ok(w[0])
}

fn solve_at(p: &OscillatorParams) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let nh = p.half_intervals();
    let nl = p.n_max + 1;
    let solve = |parity| -> Result<(Vec<f64>, DMatrix<f64>)> {
        let cnt = sector_count(p.n_max, parity);
        if cnt == 0 {
            return Ok((vec![], DMatrix::zeros(0, 0)));
        }
        let (w, z) = sector_matrix(p, parity).eigen_range(0, cnt - 1, true)?;
        Ok((w, z.expect("vectors requested")))
    };
    let (even, odd) = rayon::join(|| solve(Parity::Even), || solve(Parity::Odd));
    let ((we, ze), (wo, zo)) = (even?, odd?);
    let h = p.spacing();
    let norm = 1.0 / h.sqrt();
    let mut energies = Vec::with_capacity(nl);
    let mut psi = DMatrix::<f64>::zeros(nh, nl);
    for n in 0..nl {
        let k = n / 2;
        if n % 2 == 0 {
            energies.push(we[k]);
            psi[(0, n)] = ze[(0, k)] * norm;
            for i in 1..nh {
                psi[(i, n)] = ze[(i, k)] * norm * std::f64::consts::FRAC_1_SQRT_2;
            }
        } else {
            energies.push(wo[k]);
            for i in 1..nh {
                psi[(i, n)] = zo[(i - 1, k)] * norm * std::f64::consts::FRAC_1_SQRT_2;
            }
        }
        // Sign convention: positive tail for x -> +L.
        let col = psi.column(n);
        let peak = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let tail = col.iter().rposition(|v| v.abs() > 1e-3 * peak).unwrap_or(0);
        if col[tail] < 0.0 {
            psi.column_mut(n).neg_mut();
        }
    }
    for w in energies.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::NotConverged { refinements: 0, change: f64::NAN });
        }
    }
    if energies[0] <= 0.0 {
        return Err(Error::NotConverged { refinements: 0, change: f64::NAN });
    }
    Ok((energies, psi))
}

/// Solves for levels `0..=n_max`, doubling the resolution until `E_{n_max}` is stable.
pub fn solve_spectrum(params: &OscillatorParams) -> Result<OscillatorSpectrum> {
    params.validate()?;
    let mut p = params.clone();
    let mut refinements = 0;
    loop {
        let (energies, psi) = solve_at(&p)?;
        let fine = top_level_energy(&p.refined())?;
        let top = energies[p.n_max];
        let change = ((fine - top) / top).abs();
        if change < p.convergence_tol {
            let x = coordinate_bands(&p, &psi, DEFAULT_OFFSET_CUTOFF.min(odd_floor(p.n_max)), DEFAULT_OFFSET_TOLERANCE);
            return Ok(OscillatorSpectrum {
                params: p,
                energies,
                wavefunctions: Some(psi),
                x_elements: x,
                convergence_change: change,
            });
        }
        if refinements == p.max_refinements {
            return Err(Error::NotConverged { refinements, change });
        }
        refinements += 1;
        p = p.refined();
    }
}

fn odd_floor(n: usize) -> usize {
    if n == 0 {
        0
    } else if n % 2 == 1 {
        n
    } else {
        n - 1
    }
}

fn coordinate_bands(p: &OscillatorParams, psi: &DMatrix<f64>, cutoff: usize, tol: f64) -> PositionMatrix {
    let nl = psi.ncols();
    let nh = psi.nrows();
    let h = p.spacing();
    let xs: Vec<f64> = (0..nh).map(|i| i as f64 * h).collect();
    // x psi_n psi_m is even for opposite parities: twice the half-grid sum (x = 0 drops out).
    let elem = |n: usize, m: usize| -> f64 {
        let a = psi.column(n);
        let b = psi.column(m);
        2.0 * h * (1..nh).map(|i| xs[i] * a[i] * b[i]).sum::<f64>()
    };
    let nb = cutoff.div_ceil(2);
    let mut bands: Vec<Vec<f64>> = (0..nb)
        .map(|b| {
            let d = 2 * b + 1;
            (0..nl.saturating_sub(d)).map(|n| elem(n, n + d)).collect()
        })
        .collect();
    if let Some(first) = bands.first().cloned() {
        while bands.len() > 1 {
            let last = bands.last().unwrap();
            let rel = last
                .iter()
                .enumerate()
                .map(|(n, v)| v.abs() / first[n].abs().max(f64::MIN_POSITIVE))
                .fold(0.0f64, f64::max);
            if rel < tol {
                bands.pop();
            } else {
                break;
            }
        }
    }
    PositionMatrix { n_levels: nl, cutoff: 2 * bands.len().max(1) - 1, bands }
}

/// Coordinate elements for odd offsets up to `offset_cutoff`, dropping the outermost
/// offsets whose magnitude relative to `x_{n,n+1}` stays below `tolerance`.
pub fn position_matrix_elements(
    spec: &OscillatorSpectrum,
    offset_cutoff: usize,
    tolerance: f64,
) -> Result<PositionMatrix> {
    if offset_cutoff > spec.n_max() {
        return Err(validation(format!(
            "offset cutoff {offset_cutoff} exceeds the {} available levels",
            spec.n_max() + 1
        )));
    }
    match &spec.wavefunctions {
        Some(psi) => Ok(coordinate_bands(&spec.params, psi, odd_floor(offset_cutoff.max(1)), tolerance)),
        None => {
            if offset_cutoff > spec.x_elements.cutoff {
                return Err(Error::MissingStage("wavefunctions were not cached; re-solve the spectrum".into()));
            }
            let mut x = spec.x_elements.clone();
            x.bands.truncate(offset_cutoff.div_ceil(2));
            x.cutoff = 2 * x.bands.len() - 1;
            Ok(x)
        }
    }
}

fn interior(spec: &OscillatorSpectrum, n: usize) -> Result<()> {
    if n == 0 || n + 1 > spec.n_max() {
        return Err(Error::IndexOutOfRange { index: n as i64, lo: 1, hi: spec.n_max() as i64 - 1 });
    }
    Ok(())
}

/// `omega_n = (E_{n+1} - E_{n-1}) / (2 hbar0)`.
pub fn level_frequency(spec: &OscillatorSpectrum, n: usize) -> Result<f64> {
    interior(spec, n)?;
    Ok((spec.energies[n + 1] - spec.energies[n - 1]) / (2.0 * spec.hbar0()))
}

/// `E''_n = E_{n+1} - 2 E_n + E_{n-1}`.
pub fn anharmonicity(spec: &OscillatorSpectrum, n: usize) -> Result<f64> {
    interior(spec, n)?;
    Ok(spec.energies[n + 1] - 2.0 * spec.energies[n] + spec.energies[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_reproduces_second_derivative() {
        let c = stencil_coefficients(4);
        // exact on polynomials up to degree 2m+1
        let h = 0.1;
        let f = |x: f64| x.powi(6) - 3.0 * x.powi(2);
        let x0 = 0.3;
        let mut d2 = c[0] * f(x0);
        for j in 1..=4 {
            d2 += c[j] * (f(x0 + j as f64 * h) + f(x0 - j as f64 * h));
        }
        d2 /= h * h;
        let exact = 30.0 * x0.powi(4) - 6.0;
        assert!((d2 - exact).abs() < 1e-10, "{d2} vs {exact}");
        let c1 = stencil_coefficients(1);
        assert_eq!(c1, vec![-2.0, 1.0]);
    }

    #[test]
    fn validation_rejects_small_box() {
        let mut p = OscillatorParams::auto(1.0, 20);
        p.grid_box_halfwidth *= 0.8;
        assert!(matches!(p.validate(), Err(Error::GridTooSmall(_))));
        let mut p = OscillatorParams::auto(1.0, 20);
        p.grid_points = (p.grid_points - 1) / 2 + 1;
        if p.grid_points % 2 == 0 {
            p.grid_points += 1;
        }
        assert!(matches!(p.validate(), Err(Error::GridTooSmall(_))));
        let mut p = OscillatorParams::auto(1.0, 20);
        p.margin = 1.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn small_spectrum_basics() {
        let s = solve_spectrum(&OscillatorParams::auto(1.0, 30)).unwrap();
        assert_eq!(s.energies.len(), 31);
        assert!((s.energies[0] - 0.420_804_974).abs() < 1e-7);
        assert!(s.x_elements.get(0, 2) == 0.0);
        assert!(s.x_elements.get(3, 4) > 0.0);
        assert_eq!(s.x_elements.get(5, 8), s.x_elements.get(8, 5));
        let w = level_frequency(&s, 10).unwrap();
        assert!(w > level_frequency(&s, 9).unwrap());
        assert!(anharmonicity(&s, 10).unwrap() > 0.0);
        assert!(level_frequency(&s, 0).is_err());
        assert!(anharmonicity(&s, 30).is_err());
        assert!(position_matrix_elements(&s, 31, 1e-13).is_err());
    }

    #[test]
    fn classical_frequency_matches_action_derivative() {
        let e = 2.5;
        let de = 1e-6;
        let di = (action_of_energy(e + de) - action_of_energy(e - de)) / (2.0 * PI);
        assert!((classical_frequency(e) - 2.0 * de / di).abs() < 1e-8);
        assert!((energy_of_action(action_of_energy(e) / (2.0 * PI)) - e).abs() < 1e-12);
    }
}
