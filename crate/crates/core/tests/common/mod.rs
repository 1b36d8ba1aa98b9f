#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use arnold::cli_io::config::RunConfig;
use arnold::cli_io::Pipeline;
use arnold::floquet_engine::DriveParams;
use arnold::quartic_oscillator::{solve_spectrum, OscillatorParams, OscillatorSpectrum};
use arnold::resonance_basis::{ResonanceBasis, ResonanceParams};

/// A spectrum small enough to solve in well under a second.
pub fn small_spectrum(hbar0: f64, n_max: usize) -> OscillatorSpectrum {
    solve_spectrum(&OscillatorParams::auto(hbar0, n_max)).unwrap()
}

/// Resonance basis around `n0 = 40` at `hbar0 = 2e-3`.
pub fn small_basis(mu: f64, k: usize, q: usize) -> (OscillatorSpectrum, ResonanceBasis) {
    let spec = small_spectrum(2e-3, 80);
    let basis = ResonanceBasis::build(&spec, &ResonanceParams::new(mu, 40, k, q)).unwrap();
    (spec, basis)
}

pub fn small_drive(basis: &ResonanceBasis, f0: f64) -> DriveParams {
    DriveParams::from_detuning(basis.omega, 0.25, f0, 64).unwrap()
}

/// Shared cache for the full-size stages so that the expensive spectrum and operators
/// are built once per checkout.
pub fn shared_cache() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/arnold-cache")
}

/// Default full-size pipeline writing into `out`.
pub fn paper_pipeline(out: PathBuf) -> Pipeline {
    let mut c = RunConfig::default();
    c.cache_dir = shared_cache();
    c.output_dir = out;
    Pipeline::new(c).unwrap()
}

pub fn max_abs_diff(a: &[num_complex::Complex64], b: &[num_complex::Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
