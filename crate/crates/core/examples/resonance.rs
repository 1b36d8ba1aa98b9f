//! Diagonalize the resonance groups at one coupling strength, locate the separatrix in
//! the central group and show how the inter-group coordinate concentrates on it.
//!
//!     cargo run --release --example resonance -- [mu]

use arnold::quartic_oscillator::{solve_spectrum, OscillatorParams};
use arnold::resonance_basis::{ResonanceBasis, ResonanceParams};

fn main() -> arnold::Result<()> {
    let mu: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-4);
    let spec = solve_spectrum(&OscillatorParams::auto(1.77e-5, 540))?;
    let basis = ResonanceBasis::build(&spec, &ResonanceParams::new(mu, 446, 60, 6))?;
    let hw = basis.hbar_omega();
    println!("mu = {mu:e}: {} groups of {} levels", basis.groups.len(), basis.group_size());
    println!(
        "E''/hbar omega = {:.3e}, group shift deviation {:.4} (bound {:.4})",
        basis.e2 / hw,
        basis.group_shift_deviation(),
        basis.group_shift_bound()
    );

    let g = basis.group(0)?;
    let c = basis.classification(0)?;
    println!("separatrix at s = {}, set {:?}, {} doublets above", c.separatrix_index, c.separatrix_set, c.doublets.len());
    println!("   s   E^M/hbar omega   gap");
    let lo = c.separatrix_index.saturating_sub(8);
    for s in lo..(c.separatrix_index + 10).min(g.levels.len() - 1) {
        let tag = if c.separatrix_set.contains(&s) { "  separatrix" } else { "" };
        println!("{s:4}   {:+.6}   {:.6}{tag}", g.levels[s] / hw, (g.levels[s + 1] - g.levels[s]) / hw);
    }

    let x = |s: usize, sp: usize| basis.transitions.get(0, s, 1, sp).abs();
    let mean = |a: &[usize], b: &[usize]| {
        a.iter().flat_map(|&s| b.iter().map(move |&sp| x(s, sp))).sum::<f64>() / (a.len() * b.len()) as f64
    };
    let c1 = basis.classification(1)?;
    println!(
        "mean |x_(0,s;1,s')|: separatrix block {:.3e}, inside x above {:.3e}",
        mean(&c.separatrix_set, &c1.separatrix_set),
        mean(&c.inside_set, &c1.above_set)
    );
    Ok(())
}
