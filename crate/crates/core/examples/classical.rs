//! Map the classical stochastic layer of the coupling resonance, count the quantum levels
//! inside it and measure the classical ensemble diffusion.
//!
//!     cargo run --release --example classical -- [mu]

use std::time::Instant;

use arnold::classical_reference::{
    classical_diffusion, map_stochastic_layer, DiffusionOptions, LayerOptions, ResonanceGeometry, DEFAULT_SCAN_STEP_OMEGA,
    DEFAULT_STEP_OMEGA,
};
use arnold::floquet_engine::DriveParams;
use arnold::quartic_oscillator::{solve_spectrum, OscillatorParams};
use arnold::resonance_basis::{ResonanceBasis, ResonanceParams};

fn main() -> arnold::Result<()> {
    let mu: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.25e-4);
    let spec = solve_spectrum(&OscillatorParams::auto(1.77e-5, 540))?;
    let basis = ResonanceBasis::build(&spec, &ResonanceParams::new(mu, 446, 60, 6))?;
    let drive = DriveParams::from_detuning(basis.omega, 0.25, 0.01 * mu, 64)?;
    let geom = ResonanceGeometry::new(&spec, &basis)?;

    let t = Instant::now();
    let layer = map_stochastic_layer(&geom, &drive, DEFAULT_SCAN_STEP_OMEGA, &LayerOptions::default())?;
    println!("layer scan in {:.1?}, threshold {:.3e}", t.elapsed(), layer.threshold);
    let ks = layer.k_separatrix;
    println!(
        "k_sep = {ks:.3}, band k/k_sep = [{:.4}, {:.4}], width {:.4} hbar omega, M_s = {} (strict {})",
        layer.k_band.0 / ks,
        layer.k_band.1 / ks,
        layer.layer_width / basis.hbar_omega(),
        layer.m_s,
        layer.m_s_strict
    );

    let t = Instant::now();
    let d = classical_diffusion(&geom, &drive, DEFAULT_STEP_OMEGA, layer.k_band, &DiffusionOptions::default())?;
    println!("classical D = {:.3e} +- {:.1e} ({} members, {:.1?})", d.d, d.stderr, d.ensemble_size, t.elapsed());
    Ok(())
}
