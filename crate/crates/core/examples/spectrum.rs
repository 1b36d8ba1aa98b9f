//! Solve the quartic oscillator at the resonance-study Planck constant and print the
//! quantities that fix the coupling resonance at n0.
//!
//!     cargo run --release --example spectrum

use std::time::Instant;

use arnold::quartic_oscillator::{
    anharmonicity, level_frequency, solve_spectrum, wkb_energy, OscillatorParams,
};

fn main() -> arnold::Result<()> {
    let hbar0 = 1.77e-5;
    let n0 = 446;
    let params = OscillatorParams::auto(hbar0, 540);
    println!(
        "grid: L = {:.4}, {} points, {:.1} points/wavelength",
        params.grid_box_halfwidth,
        params.grid_points,
        params.points_per_wavelength()
    );
    let t = Instant::now();
    let spec = solve_spectrum(&params)?;
    println!("solved {} levels in {:.1?} (doubling change {:.1e})", spec.energies.len(), t.elapsed(), spec.convergence_change);

    let omega = level_frequency(&spec, n0)?;
    let e2 = anharmonicity(&spec, n0)?;
    println!("E_n0       = {:.10e}", spec.energies[n0]);
    println!("WKB        = {:.10e}", wkb_energy(hbar0, n0));
    println!("omega_n0   = {omega:.10e}");
    println!("E''_n0     = {e2:.6e}  (E''/hbar omega = {:.4e})", e2 / (hbar0 * omega));
    println!("x_n0,n0+1  = {:.6e}", spec.x_elements.get(n0, n0 + 1));
    println!("x_n0,n0+3  = {:.6e}", spec.x_elements.get(n0, n0 + 3));
    println!("x cutoff   = {}", spec.x_elements.cutoff);
    Ok(())
}
