//! Run configuration: every knob of the pipeline, loadable from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical_reference::{DiffusionOptions, LayerOptions, DEFAULT_SCAN_STEP_OMEGA, DEFAULT_STEP_OMEGA};
use crate::error::{validation, Result};
use crate::floquet_engine::FloquetOptions;
use crate::quantum_dynamics::SaturationOptions;
use crate::quartic_oscillator::{OscillatorParams, DEFAULT_POINTS_PER_WAVELENGTH, MIN_BOX_MARGIN};
use crate::resonance_basis::{ParitySector, ResonanceParams};

pub const CACHE_DIR_ENV: &str = "ARNOLD_CACHE_DIR";
pub const OUTPUT_DIR_ENV: &str = "ARNOLD_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillatorConfig {
    pub hbar0: f64,
    pub n_max: usize,
    pub margin: f64,
    pub points_per_wavelength: f64,
    /// Overrides the automatic box half-width.
    pub grid_box_halfwidth: Option<f64>,
    /// Overrides the automatic point count (odd, walls included).
    pub grid_points: Option<usize>,
    pub stencil_half_width: usize,
    pub max_refinements: usize,
    pub convergence_tol: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        OscillatorConfig {
            hbar0: 1.77e-5,
            n_max: 540,
            margin: MIN_BOX_MARGIN,
            points_per_wavelength: DEFAULT_POINTS_PER_WAVELENGTH,
            grid_box_halfwidth: None,
            grid_points: None,
            stencil_half_width: 8,
            max_refinements: 2,
            convergence_tol: 1e-8,
        }
    }
}

impl OscillatorConfig {
    pub fn params(&self) -> OscillatorParams {
        let mut p = OscillatorParams::auto_with(self.hbar0, self.n_max, self.margin, self.points_per_wavelength);
        if let Some(l) = self.grid_box_halfwidth {
            p.grid_box_halfwidth = l;
        }
        if let Some(n) = self.grid_points {
            p.grid_points = n;
        }
        p.stencil_half_width = self.stencil_half_width;
        p.max_refinements = self.max_refinements;
        p.convergence_tol = self.convergence_tol;
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceConfig {
    pub mu: f64,
    pub n0: usize,
    pub k_halfwidth: usize,
    pub q_halfwidth: usize,
    pub parity_sector: Option<ParitySector>,
    pub separatrix_window: usize,
    pub doublet_ratio: f64,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        ResonanceConfig {
            mu: 1e-4,
            n0: 446,
            k_halfwidth: 60,
            q_halfwidth: 6,
            parity_sector: None,
            separatrix_window: 5,
            doublet_ratio: 0.05,
        }
    }
}

impl ResonanceConfig {
    pub fn params(&self, mu: f64) -> ResonanceParams {
        ResonanceParams {
            mu,
            n0: self.n0,
            k_halfwidth: self.k_halfwidth,
            q_halfwidth: self.q_halfwidth,
            parity_sector: self.parity_sector,
            separatrix_window: self.separatrix_window,
            doublet_ratio: self.doublet_ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    pub f0_over_mu: f64,
    /// Target `δΩ / ω`; snapped to the nearest ratio `Ω1 / Ω2 = i / j`.
    pub detuning_ratio: f64,
    pub max_denominator: u32,
    /// Allowed relative offset of `(Ω1 + Ω2) / 2` from `omega_n0`.
    pub center_tolerance: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        DriveConfig { f0_over_mu: 0.01, detuning_ratio: 0.25, max_denominator: 64, center_tolerance: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub periods: usize,
    pub fit_window: (usize, usize),
    pub saturation_fraction: f64,
    pub q_start: i32,
    /// Position of the above-separatrix start inside the above set.
    pub above_offset: usize,
    pub bootstrap: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig { periods: 3000, fit_window: (50, 500), saturation_fraction: 0.1, q_start: 0, above_offset: 5, bootstrap: 400 }
    }
}

impl DynamicsConfig {
    pub fn saturation(&self) -> SaturationOptions {
        SaturationOptions { window: self.fit_window, fraction: self.saturation_fraction }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    /// `h * omega_n0` for the ensemble runs.
    pub step_omega: f64,
    /// `h * omega_n0` for the layer scan.
    pub scan_step_omega: f64,
    pub layer: LayerOptions,
    pub diffusion: DiffusionOptions,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig {
            step_omega: DEFAULT_STEP_OMEGA,
            scan_step_omega: DEFAULT_SCAN_STEP_OMEGA,
            layer: LayerOptions::default(), diffusion: DiffusionOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub mu_grid: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { mu_grid: vec![3e-5, 5e-5, 7.5e-5, 1e-4, 1.25e-4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    /// Groups `|q| <= fig1_q` go into the level diagram.
    pub fig1_q: i32,
    pub fig3_mu: Vec<f64>,
    pub fig3_threshold: f64,
    pub fig4_mu: f64,
}

impl Default for FigureConfig {
    fn default() -> Self {
        FigureConfig { fig1_q: 2, fig3_mu: vec![3e-5, 1e-4], fig3_threshold: 0.5, fig4_mu: 1.25e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub oscillator: OscillatorConfig,
    pub resonance: ResonanceConfig,
    pub drive: DriveConfig,
    pub floquet: FloquetOptions,
    pub dynamics: DynamicsConfig,
    pub classical: ClassicalConfig,
    pub scan: ScanConfig,
    pub figures: FigureConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            oscillator: OscillatorConfig::default(),
            resonance: ResonanceConfig::default(),
            drive: DriveConfig::default(),
            floquet: FloquetOptions::default(),
            dynamics: DynamicsConfig::default(),
            classical: ClassicalConfig::default(),
            scan: ScanConfig::default(),
            figures: FigureConfig::default(),
            seed: 1,
            output_dir: PathBuf::from("out"),
            cache_dir: PathBuf::from("cache"),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies `ARNOLD_CACHE_DIR` / `ARNOLD_OUTPUT_DIR` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(d) = std::env::var_os(CACHE_DIR_ENV) {
            self.cache_dir = PathBuf::from(d);
        }
        if let Some(d) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(d);
        }
        self
    }

    /// Sets one dotted field, e.g. `resonance.mu = 2e-4`; the value is parsed as a TOML
    /// literal and falls back to a plain string.
    pub fn set_path(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| validation(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = &mut root;
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| validation(format!("{key}: {part} is not a section")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed);
                break;
            }
            node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        *self = root.try_into().map_err(|e: toml::de::Error| validation(format!("{key} = {value}: {e}")))?;
        Ok(())
    }

    /// Digest of everything that affects results (directories excluded).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.cache_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())[..16].to_string()
    }

    /// Every `mu` the configured commands touch.
    pub fn all_mu(&self) -> Vec<f64> {
        let mut v = vec![self.resonance.mu, self.figures.fig4_mu];
        v.extend(&self.scan.mu_grid);
        v.extend(&self.figures.fig3_mu);
        v
    }

    /// Cross-parameter checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        let osc = self.oscillator.params();
        osc.validate()?;
        for mu in self.all_mu() {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(validation(format!("coupling mu must be positive, got {mu}")));
            }
            self.resonance.params(mu).validate(osc.n_max)?;
        }
        if self.scan.mu_grid.is_empty() {
            return Err(validation("scan mu_grid is empty"));
        }
        let d = &self.drive;
        if !(d.f0_over_mu > 0.0 && d.f0_over_mu < 1.0) {
            return Err(validation(format!("f0/mu must lie in (0, 1), got {}", d.f0_over_mu)));
        }
        if !(d.detuning_ratio > 0.0 && d.detuning_ratio < 2.0) {
            return Err(validation(format!("detuning ratio must lie in (0, 2), got {}", d.detuning_ratio)));
        }
        if d.max_denominator < 2 {
            return Err(validation("max_denominator must be at least 2"));
        }
        let f = &self.floquet;
        if f.steps_per_period < 2 || f.steps_per_period % 2 == 1 {
            return Err(validation("floquet.steps_per_period must be even and >= 2"));
        }
        let dy = &self.dynamics;
        let (n1, n2) = dy.fit_window;
        if n2 <= n1 {
            return Err(validation("dynamics.fit_window must satisfy n1 < n2"));
        }
        if dy.periods < 2 * n2 {
            return Err(validation(format!("dynamics.periods = {} must be at least twice the window end {n2}", dy.periods)));
        }
        if !(dy.saturation_fraction > 0.0 && dy.saturation_fraction < 1.0) {
            return Err(validation("dynamics.saturation_fraction must lie in (0, 1)"));
        }
        if dy.q_start.unsigned_abs() as usize > self.resonance.q_halfwidth {
            return Err(validation(format!("q_start {} outside the basis", dy.q_start)));
        }
        let c = &self.classical;
        if !(c.step_omega > 0.0 && c.step_omega <= c.diffusion.max_step_omega) {
            return Err(validation(format!("classical.step_omega {} must be positive and within the step limit", c.step_omega)));
        }
        if !(c.scan_step_omega > 0.0 && c.scan_step_omega <= c.layer.max_step_omega) {
            return Err(validation(format!(
                "classical.scan_step_omega {} must be positive and within the step limit",
                c.scan_step_omega
            )));
        }
        let (c1, c2) = c.diffusion.window;
        if c2 <= c1 || c2 > c.diffusion.periods {
            return Err(validation("classical.diffusion.window must lie inside the run"));
        }
        if c.diffusion.ensemble_size < 2 {
            return Err(validation("classical ensemble needs at least 2 members"));
        }
        if self.figures.fig3_mu.len() != 2 {
            return Err(validation("figures.fig3_mu must list exactly two couplings"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml_str("seed = 7\n[resonance]\nmu = 2e-4\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.resonance.mu, 2e-4);
        assert_eq!(c.resonance.k_halfwidth, 60);
        assert_ne!(c.hash(), RunConfig::default().hash());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn dotted_overrides() {
        let mut c = RunConfig::default();
        c.set_path("resonance.mu", "2e-4").unwrap();
        c.set_path("dynamics.fit_window", "[40, 400]").unwrap();
        c.set_path("output_dir", "runs/a").unwrap();
        assert_eq!(c.resonance.mu, 2e-4);
        assert_eq!(c.dynamics.fit_window, (40, 400));
        assert_eq!(c.output_dir, PathBuf::from("runs/a"));
        assert!(c.set_path("resonance.nope", "1").is_err());
        assert!(c.set_path("resonance.n0", "\"x\"").is_err());
    }

    #[test]
    fn directories_do_not_change_hash() {
        let mut c = RunConfig::default();
        let h = c.hash();
        c.output_dir = "/elsewhere".into();
        assert_eq!(c.hash(), h);
    }

    #[test]
    fn invalid_combinations_rejected() {
        let mut c = RunConfig::default();
        c.resonance.k_halfwidth = 200;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.dynamics.periods = 600;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.oscillator.grid_box_halfwidth = Some(0.1);
        assert!(c.validate().is_err());
    }
}
