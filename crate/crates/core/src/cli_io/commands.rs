//! Subcommand implementations. Each writes its CSV/JSON outputs into the configured
//! output directory and records them in the manifest there.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::output::{fmt_f, mu_tag, write_json, CsvTable, PointStatus, ProducedFile, RunManifest, ScanPointRecord};
use super::Pipeline;
use crate::classical_reference::{classical_diffusion, map_stochastic_layer, LayerMeasurement, ResonanceGeometry};
use crate::error::{validation, Error, Result};
use crate::floquet_engine::{delocalization_measures, delocalized_fraction};
use crate::quantum_dynamics::{
    detect_saturation, evolve_many, fit_diffusion, initial_level, non_increasing_within, separatrix_diffusion,
    DiffusionEstimate, InitialKind, PacketState, PacketTrajectory, Saturation, SeparatrixDiffusion,
};
use crate::quartic_oscillator::{anharmonicity, level_frequency, wkb_energy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(FigureId::Fig1),
            "fig2" => Ok(FigureId::Fig2),
            "fig3" => Ok(FigureId::Fig3),
            "fig4" => Ok(FigureId::Fig4),
            "fig5" => Ok(FigureId::Fig5),
            _ => Err(validation(format!("unknown figure {s:?}; expected fig1..fig5"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Spectrum,
    /// `None` uses `resonance.mu`.
    Resonance { mu: Option<f64> },
    Floquet { mu: Option<f64> },
    Evolve { mu: Option<f64> },
    Classical { mu: Option<f64> },
    Figure(FigureId),
    Scan,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub summary: String,
    pub files: Vec<ProducedFile>,
}

impl Report {
    fn add(&mut self, f: ProducedFile) {
        self.files.push(f);
    }

    fn extend(&mut self, other: Report) {
        self.summary.push_str(&other.summary);
        self.files.extend(other.files);
    }
}

/// Runs one command and updates the manifest with the files it produced.
pub fn run(cmd: &Command, p: &Pipeline) -> Result<Report> {
    let mu_or = |m: &Option<f64>| m.unwrap_or(p.config.resonance.mu);
    let outcome = match cmd {
        Command::Spectrum => spectrum(p),
        Command::Resonance { mu } => resonance(p, mu_or(mu)),
        Command::Floquet { mu } => floquet(p, mu_or(mu)),
        Command::Evolve { mu } => evolve(p, mu_or(mu)).map(|r| r.0),
        Command::Classical { mu } => classical(p, mu_or(mu)).map(|r| r.0),
        Command::Figure(id) => figure(p, *id),
        Command::Scan => return scan(p),
    };
    let report = outcome?;
    let dir = &p.config.output_dir;
    let mut m = RunManifest::load_or_new(dir, &p.config_hash);
    for f in &report.files {
        m.record(f);
    }
    m.save(dir)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub hbar0: f64,
    pub n_max: usize,
    pub grid_points: usize,
    pub grid_box_halfwidth: f64,
    pub convergence_change: f64,
    pub n0: usize,
    pub e_n0: f64,
    pub e_n0_wkb: f64,
    pub omega_n0: f64,
    pub e2_n0: f64,
    pub e2_over_hbar_omega: f64,
    pub x_n0_n0p1: f64,
    pub x_n0_n0p3: f64,
}

pub fn spectrum(p: &Pipeline) -> Result<Report> {
    let spec = p.spectrum()?;
    let n0 = p.config.resonance.n0;
    let omega = level_frequency(spec, n0)?;
    let e2 = anharmonicity(spec, n0)?;
    let s = SpectrumSummary {
        hbar0: spec.hbar0(),
        n_max: spec.n_max(),
        grid_points: spec.params.grid_points,
        grid_box_halfwidth: spec.params.grid_box_halfwidth,
        convergence_change: spec.convergence_change,
        n0,
        e_n0: spec.energies[n0],
        e_n0_wkb: wkb_energy(spec.hbar0(), n0),
        omega_n0: omega,
        e2_n0: e2,
        e2_over_hbar_omega: e2 / (spec.hbar0() * omega),
        x_n0_n0p1: spec.x_elements.get(n0, n0 + 1),
        x_n0_n0p3: spec.x_elements.get(n0, n0 + 3),
    };
    let mut r = Report::default();
    let _ = writeln!(r.summary, "hbar0 = {:e}, n_max = {}, grid {} points on |x| < {:.6}", s.hbar0, s.n_max, s.grid_points, s.grid_box_halfwidth);
    let _ = writeln!(r.summary, "E_n0      = {:.12e}  (n0 = {n0}, WKB {:.12e})", s.e_n0, s.e_n0_wkb);
    let _ = writeln!(r.summary, "omega_n0  = {:.12e}", s.omega_n0);
    let _ = writeln!(r.summary, "E''_n0    = {:.12e}  ({:.6e} hbar0 omega)", s.e2_n0, s.e2_over_hbar_omega);
    let _ = writeln!(r.summary, "x_n0,n0+1 = {:.12e}", s.x_n0_n0p1);

    let mut t = CsvTable::new("spectrum/v1", &["n", "energy", "energy_wkb", "x_n_n1"]).meta("hbar0", spec.hbar0());
    for (n, e) in spec.energies.iter().enumerate() {
        let x = if n < spec.n_max() { spec.x_elements.get(n, n + 1) } else { 0.0 };
        t.push(vec![n.to_string(), fmt_f(*e), fmt_f(wkb_energy(spec.hbar0(), n)), fmt_f(x)]);
    }
    let dir = &p.config.output_dir;
    r.add(t.write(dir, "spectrum.csv", &p.config_hash)?);
    r.add(write_json(dir, "spectrum_summary.json", &s)?);
    Ok(r)
}

fn region(c: Option<&crate::resonance_basis::Classification>, s: usize) -> &'static str {
    match c {
        None => "unclassified",
        Some(c) if c.separatrix_set.contains(&s) => "separatrix",
        Some(c) if c.above_set.contains(&s) => "above",
        Some(c) if c.inside_set.contains(&s) => "inside",
        Some(_) => "other",
    }
}

pub fn resonance(p: &Pipeline, mu: f64) -> Result<Report> {
    let basis = p.basis(mu)?;
    let hw = basis.hbar_omega();
    let mut t = CsvTable::new("resonance-groups/v1", &["q", "s", "k_label", "E_M_over_hbar_omega", "region"])
        .meta("mu", mu)
        .meta("n0", basis.params.n0);
    for g in &basis.groups {
        for (s, e) in g.levels.iter().enumerate() {
            t.push(vec![g.q.to_string(), s.to_string(), g.centered_label(s).to_string(), fmt_f(e / hw), region(g.classification.as_ref(), s).into()]);
        }
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        mu: f64,
        omega_n0: f64,
        e2: f64,
        group_size: usize,
        group_shift_deviation: f64,
        group_shift_bound: f64,
        classification: Vec<(i32, Option<&'a crate::resonance_basis::Classification>)>,
    }
    let s = Summary {
        mu,
        omega_n0: basis.omega,
        e2: basis.e2,
        group_size: basis.group_size(),
        group_shift_deviation: basis.group_shift_deviation(),
        group_shift_bound: basis.group_shift_bound(),
        classification: basis.groups.iter().map(|g| (g.q, g.classification.as_ref())).collect(),
    };
    let mut r = Report::default();
    let c0 = basis.classification(0).ok();
    let _ = writeln!(
        r.summary,
        "mu = {mu:e}: {} groups x {} levels, separatrix level {:?}, {} doublets in group 0",
        basis.groups.len(),
        basis.group_size(),
        c0.map(|c| c.separatrix_index),
        c0.map_or(0, |c| c.doublets.len())
    );
    let dir = &p.config.output_dir;
    let tag = mu_tag(mu);
    r.add(t.write(dir, &format!("resonance_{tag}.csv"), &p.config_hash)?);
    r.add(write_json(dir, &format!("resonance_{tag}.json"), &s)?);
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloquetSummary {
    pub mu: f64,
    pub f0: f64,
    pub drive_ratio: (u32, u32),
    pub period: f64,
    pub dimension: usize,
    pub unitarity_defect: f64,
    pub schur_residual: f64,
    pub edge_leakage: f64,
    pub threshold: f64,
    pub delocalized_fraction: f64,
}

fn quasienergy_table(p: &Pipeline, mu: f64, schema: &str) -> Result<(CsvTable, FloquetSummary)> {
    let st = p.stage(mu)?;
    let hw = st.basis.hbar_omega();
    let m = delocalization_measures(&st.op);
    let thr = p.config.figures.fig3_threshold;
    let s = FloquetSummary {
        mu,
        f0: st.drive.f0,
        drive_ratio: (st.drive.i, st.drive.j),
        period: st.op.period,
        dimension: st.op.layout.dimension(),
        unitarity_defect: st.op.unitarity_defect,
        schur_residual: st.op.schur_residual,
        edge_leakage: st.op.edge_leakage,
        threshold: thr,
        delocalized_fraction: delocalized_fraction(&m, thr),
    };
    let mut t = CsvTable::new(schema, &["index", "quasienergy_over_hbar_omega", "q_mean", "sigma_q", "sqrt_sigma_q"])
        .meta("mu", mu)
        .meta("drive", format!("{}/{}", st.drive.i, st.drive.j))
        .meta("delocalized_fraction", fmt_f(s.delocalized_fraction));
    for (i, d) in m.iter().enumerate() {
        t.push(vec![i.to_string(), fmt_f(d.quasienergy / hw), fmt_f(d.q_mean), fmt_f(d.sigma_q), fmt_f(d.sigma_q.sqrt())]);
    }
    Ok((t, s))
}

pub fn floquet(p: &Pipeline, mu: f64) -> Result<Report> {
    let (t, s) = quasienergy_table(p, mu, "quasienergies/v1")?;
    let mut r = Report::default();
    let _ = writeln!(
        r.summary,
        "mu = {mu:e}: drive {}/{}, T = {:.6}, dim {}, unitarity defect {:.2e}, leakage {:.2e}, fraction sqrt(sigma_q) > {} = {:.4}",
        s.drive_ratio.0,
        s.drive_ratio.1,
        s.period,
        s.dimension,
        s.unitarity_defect,
        s.edge_leakage,
        s.threshold,
        s.delocalized_fraction
    );
    let dir = &p.config.output_dir;
    let tag = mu_tag(mu);
    r.add(t.write(dir, &format!("floquet_{tag}.csv"), &p.config_hash)?);
    r.add(write_json(dir, &format!("floquet_{tag}.json"), &s)?);
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub label: String,
    pub level: usize,
    pub saturation: Option<Saturation>,
    pub fit: Option<DiffusionEstimate>,
    pub fit_error: Option<String>,
    pub max_delta_q: f64,
    pub final_delta_q: f64,
    pub max_norm_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveSummary {
    pub mu: f64,
    pub q_start: i32,
    pub periods: usize,
    pub trajectories: Vec<TrajectorySummary>,
    pub separatrix_set: SeparatrixDiffusion,
}

fn summarize(tr: &PacketTrajectory, level: usize, p: &Pipeline) -> TrajectorySummary {
    let opts = p.config.dynamics.saturation();
    let sat = detect_saturation(&tr.delta_q, &opts);
    let fit = sat.as_ref().map_err(|e| e.to_string()).and_then(|s| fit_diffusion(&tr.delta_q, opts.window, *s).map_err(|e| e.to_string()));
    let tail = (tr.len() / 10).max(1);
    TrajectorySummary {
        label: tr.label.clone(),
        level,
        saturation: sat.ok(),
        fit_error: fit.as_ref().err().cloned(),
        fit: fit.ok(),
        max_delta_q: tr.delta_q.iter().fold(0.0, |a, &b| a.max(b)),
        final_delta_q: tr.delta_q[tr.len() - tail..].iter().sum::<f64>() / tail as f64,
        max_norm_error: tr.max_norm_error,
    }
}

/// Center, separatrix and above-separatrix runs plus every separatrix-set start.
pub fn evolve(p: &Pipeline, mu: f64) -> Result<(Report, EvolveSummary, Vec<PacketTrajectory>)> {
    let st = p.stage(mu)?;
    let dy = &p.config.dynamics;
    let layout = &st.op.layout;
    let kinds = [InitialKind::ResonanceCenter, InitialKind::Separatrix, InitialKind::AboveSeparatrix];
    let mut levels: Vec<usize> = kinds.iter().map(|k| initial_level(&st.basis, *k, dy.q_start, dy.above_offset)).collect::<Result<_>>()?;
    let mut labels: Vec<String> = kinds.iter().map(|k| k.label().to_string()).collect();
    for &s in &st.basis.classification(dy.q_start)?.separatrix_set {
        levels.push(s);
        labels.push(format!("separatrix-set-{s}"));
    }
    let states: Vec<PacketState> = levels.iter().map(|&s| PacketState::basis_state(layout, dy.q_start, s)).collect::<Result<_>>()?;
    let trajs = evolve_many(&st.op, &states, dy.periods, &labels)?;
    let set = separatrix_diffusion(&trajs[3..], &dy.saturation(), p.config.seed)?;
    let summary = EvolveSummary {
        mu,
        q_start: dy.q_start,
        periods: dy.periods,
        trajectories: trajs[..3].iter().zip(&levels).map(|(t, &s)| summarize(t, s, p)).collect(),
        separatrix_set: set,
    };

    let mut t = CsvTable::new("fig4-dispersion/v1", &["N", "Delta_q", "energy_dispersion", "group_variance", "q_mean", "label"])
        .meta("mu", mu)
        .meta("f0", st.drive.f0)
        .meta("drive", format!("{}/{}", st.drive.i, st.drive.j))
        .meta("levels", format!("center={} separatrix={} above={}", levels[0], levels[1], levels[2]));
    for tr in &trajs[..3] {
        for n in 0..tr.len() {
            t.push(vec![
                n.to_string(),
                fmt_f(tr.delta_q[n]),
                fmt_f(tr.energy_dispersion[n]),
                fmt_f(tr.group_variance[n]),
                fmt_f(tr.q_mean[n]),
                tr.label.clone(),
            ]);
        }
    }
    let mut r = Report::default();
    for s in &summary.trajectories {
        let _ = writeln!(
            r.summary,
            "{:<10} s = {:3}: D = {}, N_sat = {}, max Delta_q = {:.4}",
            s.label,
            s.level,
            s.fit.as_ref().map_or_else(|| "-".into(), |f| format!("{:.3e}", f.d)),
            s.saturation.and_then(|x| x.n_sat()).map_or_else(|| "-".into(), |n| n.to_string()),
            s.max_delta_q
        );
    }
    let _ = writeln!(
        r.summary,
        "separatrix set ({} states): median D = {:.3e} +- {:.1e}, mean {:.3e}",
        summary.separatrix_set.per_state.len(),
        summary.separatrix_set.median,
        summary.separatrix_set.median_error,
        summary.separatrix_set.mean
    );
    let dir = &p.config.output_dir;
    let tag = mu_tag(mu);
    r.add(t.write(dir, &format!("evolve_{tag}.csv"), &p.config_hash)?);
    r.add(write_json(dir, &format!("evolve_{tag}.json"), &summary)?);
    Ok((r, summary, trajs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSummary {
    pub mu: f64,
    pub k_separatrix: f64,
    pub k_band: (f64, f64),
    pub energy_band_over_hbar_omega: (f64, f64),
    pub layer_width_over_hbar_omega: f64,
    pub m_s: usize,
    pub m_s_strict: usize,
    pub threshold: f64,
    pub zoom_levels_used: usize,
    pub d_classical: f64,
    pub d_classical_stderr: f64,
    pub fit_residual: f64,
    pub ensemble_size: usize,
}

pub fn classical(p: &Pipeline, mu: f64) -> Result<(Report, ClassicalSummary, LayerMeasurement)> {
    let spec = p.spectrum()?;
    let basis = p.basis(mu)?;
    let drive = p.drive(&basis)?;
    let geom = ResonanceGeometry::new(spec, &basis)?;
    let c = &p.config.classical;
    let layer = map_stochastic_layer(&geom, &drive, c.scan_step_omega, &c.layer)?;
    let mut dopts = c.diffusion.clone();
    dopts.seed = p.config.seed;
    let diff = classical_diffusion(&geom, &drive, c.step_omega, layer.k_band, &dopts)?;
    let hw = geom.hbar_omega();
    let s = ClassicalSummary {
        mu,
        k_separatrix: layer.k_separatrix,
        k_band: layer.k_band,
        energy_band_over_hbar_omega: (layer.energy_band.0 / hw, layer.energy_band.1 / hw),
        layer_width_over_hbar_omega: layer.layer_width / hw,
        m_s: layer.m_s,
        m_s_strict: layer.m_s_strict,
        threshold: layer.threshold,
        zoom_levels_used: layer.zoom_levels_used,
        d_classical: diff.d,
        d_classical_stderr: diff.stderr,
        fit_residual: diff.residual,
        ensemble_size: diff.ensemble_size,
    };
    let mut scan = CsvTable::new("layer-scan/v1", &["k", "k_over_ksep", "indicator", "chaotic", "E_M_over_hbar_omega"])
        .meta("mu", mu)
        .meta("threshold", fmt_f(layer.threshold));
    for pt in &layer.scan {
        scan.push(vec![fmt_f(pt.k), fmt_f(pt.k / layer.k_separatrix), fmt_f(pt.indicator), (pt.chaotic as u8).to_string(), fmt_f(pt.energy)]);
    }
    let mut ens = CsvTable::new("classical-ensemble/v1", &["N", "variance"])
        .meta("mu", mu)
        .meta("ensemble_size", diff.ensemble_size)
        .meta("seed", dopts.seed);
    for (n, v) in diff.variance.iter().enumerate() {
        ens.push(vec![n.to_string(), fmt_f(*v)]);
    }
    let mut r = Report::default();
    let _ = writeln!(
        r.summary,
        "mu = {mu:e}: layer k/k_sep in [{:.5}, {:.5}], width {:.4e} hbar0 omega, M_s = {} (strict {}), D_classical = {:.3e} +- {:.1e}",
        s.k_band.0 / s.k_separatrix,
        s.k_band.1 / s.k_separatrix,
        s.layer_width_over_hbar_omega,
        s.m_s,
        s.m_s_strict,
        s.d_classical,
        s.d_classical_stderr
    );
    let dir = &p.config.output_dir;
    let tag = mu_tag(mu);
    r.add(scan.write(dir, &format!("layer_{tag}.csv"), &p.config_hash)?);
    r.add(ens.write(dir, &format!("classical_{tag}.csv"), &p.config_hash)?);
    r.add(write_json(dir, &format!("classical_{tag}.json"), &s)?);
    Ok((r, s, layer))
}

pub fn figure(p: &Pipeline, id: FigureId) -> Result<Report> {
    let dir = &p.config.output_dir;
    let h = &p.config_hash;
    let mut r = Report::default();
    match id {
        FigureId::Fig1 => {
            let mu = p.config.resonance.mu;
            let basis = p.basis(mu)?;
            let hw = basis.hbar_omega();
            let qmax = p.config.figures.fig1_q;
            let mut t = CsvTable::new("fig1-levels/v1", &["q", "s", "k_label", "E_M_over_hbar_omega", "E_over_hbar_omega", "region"])
                .meta("mu", mu)
                .meta("n0", basis.params.n0)
                .meta("k_halfwidth", basis.params.k_halfwidth);
            for g in basis.groups.iter().filter(|g| g.q.abs() <= qmax) {
                for (s, e) in g.levels.iter().enumerate() {
                    t.push(vec![
                        g.q.to_string(),
                        s.to_string(),
                        g.centered_label(s).to_string(),
                        fmt_f(e / hw),
                        fmt_f(g.q as f64 + e / hw),
                        region(g.classification.as_ref(), s).into(),
                    ]);
                }
            }
            let _ = writeln!(r.summary, "fig1: {} rows", t.rows.len());
            r.add(t.write(dir, "fig1.csv", h)?);
        }
        FigureId::Fig2 => {
            let mu = p.config.resonance.mu;
            let basis = p.basis(mu)?;
            let d = basis.group_size();
            let mut t = CsvTable::new("fig2-transitions/v1", &["s", "s_prime", "abs_x"]).meta("mu", mu).meta("q", "0 -> 1");
            for s in 0..d {
                for sp in 0..d {
                    t.push(vec![s.to_string(), sp.to_string(), fmt_f(basis.transitions.get(0, s, 1, sp).abs())]);
                }
            }
            let _ = writeln!(r.summary, "fig2: {d} x {d} transition block");
            r.add(t.write(dir, "fig2.csv", h)?);
        }
        FigureId::Fig3 => {
            for &mu in &p.config.figures.fig3_mu {
                let (t, s) = quasienergy_table(p, mu, "fig3-quasienergy-states/v1")?;
                let _ = writeln!(r.summary, "fig3 mu = {mu:e}: fraction sqrt(sigma_q) > {} = {:.4}", s.threshold, s.delocalized_fraction);
                r.add(t.write(dir, &format!("fig3_{}.csv", mu_tag(mu)), h)?);
            }
        }
        FigureId::Fig4 => {
            let (er, _, _) = evolve(p, p.config.figures.fig4_mu)?;
            r.summary = er.summary;
            let src = &er.files[0].path;
            let bytes = std::fs::read(src)?;
            let path = dir.join("fig4.csv");
            std::fs::write(&path, &bytes)?;
            r.add(ProducedFile { path, sha256: super::config::sha256_hex(&bytes) });
            r.files.extend(er.files);
        }
        FigureId::Fig5 => {
            let sr = scan(p)?;
            r.extend(sr);
        }
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub mu: f64,
    pub inv_sqrt_mu: f64,
    pub d_quantum: f64,
    pub d_quantum_stderr: f64,
    pub d_quantum_mean: f64,
    pub d_classical: f64,
    pub d_classical_stderr: f64,
    pub m_s: usize,
    pub m_s_strict: usize,
    pub layer_width_over_hbar_omega: f64,
    pub separatrix_levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub points: usize,
    pub failed: Vec<(f64, String)>,
    /// Quantum median `D` non-increasing in `1/√mu` within two standard errors.
    pub quantum_trend: bool,
    pub classical_trend: bool,
    pub quantum_below_classical: bool,
    pub m_s_at_smallest_mu: Option<usize>,
}

fn scan_point(p: &Pipeline, mu: f64) -> Result<(ScanRow, Report)> {
    let (mut r, ev, _) = evolve(p, mu)?;
    let (cr, cl, _) = classical(p, mu)?;
    r.extend(cr);
    let set = &ev.separatrix_set;
    Ok((
        ScanRow {
            mu,
            inv_sqrt_mu: 1.0 / mu.sqrt(),
            d_quantum: set.median,
            d_quantum_stderr: set.median_error,
            d_quantum_mean: set.mean,
            d_classical: cl.d_classical,
            d_classical_stderr: cl.d_classical_stderr,
            m_s: cl.m_s,
            m_s_strict: cl.m_s_strict,
            layer_width_over_hbar_omega: cl.layer_width_over_hbar_omega,
            separatrix_levels: set.levels.clone(),
        },
        r,
    ))
}

pub fn scan_summary(rows: &[ScanRow], failed: Vec<(f64, String)>) -> ScanSummary {
    let q: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.inv_sqrt_mu, r.d_quantum, r.d_quantum_stderr)).collect();
    let c: Vec<(f64, f64, f64)> = rows.iter().map(|r| (r.inv_sqrt_mu, r.d_classical, r.d_classical_stderr)).collect();
    ScanSummary {
        points: rows.len(),
        failed,
        quantum_trend: non_increasing_within(&q, 2.0),
        classical_trend: non_increasing_within(&c, 2.0),
        quantum_below_classical: rows.iter().all(|r| r.d_quantum < r.d_classical),
        m_s_at_smallest_mu: rows.iter().min_by(|a, b| a.mu.total_cmp(&b.mu)).map(|r| r.m_s),
    }
}

/// Per-coupling pipeline over `scan.mu_grid`, resumable through the manifest. Completed
/// points are reused; failures are recorded and the remaining points still run.
pub fn scan(p: &Pipeline) -> Result<Report> {
    let dir = &p.config.output_dir;
    let mut manifest = RunManifest::load_or_new(dir, &p.config_hash);
    let mut report = Report::default();
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for &mu in &p.config.scan.mu_grid {
        let key = mu_tag(mu);
        if let Some(rec) = manifest.scan.get(&key) {
            if rec.status == PointStatus::Done {
                if let Some(row) = rec.result.clone().and_then(|v| serde_json::from_value::<ScanRow>(v).ok()) {
                    let _ = writeln!(report.summary, "mu = {mu:e}: reused from manifest");
                    rows.push(row);
                    continue;
                }
            }
        }
        let rec = match scan_point(p, mu) {
            Ok((row, r)) => {
                for f in &r.files {
                    manifest.record(f);
                }
                report.extend(r);
                let rec = ScanPointRecord { mu, status: PointStatus::Done, error: None, result: Some(serde_json::to_value(&row)?) };
                rows.push(row);
                rec
            }
            Err(e) => {
                let _ = writeln!(report.summary, "mu = {mu:e}: FAILED: {e}");
                failed.push((mu, e.to_string()));
                ScanPointRecord { mu, status: PointStatus::Failed, error: Some(e.to_string()), result: None }
            }
        };
        manifest.scan.insert(key, rec);
        manifest.save(dir)?;
    }
    rows.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    let mut t = CsvTable::new(
        "fig5-diffusion/v1",
        &["inv_sqrt_mu", "mu", "D_quantum", "D_quantum_stderr", "D_quantum_mean", "D_classical", "D_classical_stderr", "M_s", "M_s_strict", "layer_width_over_hbar_omega"],
    )
    .meta("f0_over_mu", p.config.drive.f0_over_mu)
    .meta("detuning_ratio", p.config.drive.detuning_ratio);
    for r in &rows {
        t.push(vec![
            fmt_f(r.inv_sqrt_mu),
            fmt_f(r.mu),
            fmt_f(r.d_quantum),
            fmt_f(r.d_quantum_stderr),
            fmt_f(r.d_quantum_mean),
            fmt_f(r.d_classical),
            fmt_f(r.d_classical_stderr),
            r.m_s.to_string(),
            r.m_s_strict.to_string(),
            fmt_f(r.layer_width_over_hbar_omega),
        ]);
    }
    let summary = scan_summary(&rows, failed.clone());
    let f = t.write(dir, "fig5.csv", &p.config_hash)?;
    manifest.record(&f);
    report.add(f);
    let f = write_json(dir, "scan_summary.json", &summary)?;
    manifest.record(&f);
    report.add(f);
    manifest.save(dir)?;
    let _ = writeln!(
        report.summary,
        "scan: {} points, quantum trend {}, classical trend {}, quantum below classical {}",
        summary.points, summary.quantum_trend, summary.classical_trend, summary.quantum_below_classical
    );
    if !failed.is_empty() {
        eprint!("{}", report.summary);
        return Err(Error::PartialScan { failed: failed.len(), total: p.config.scan.mu_grid.len() });
    }
    Ok(report)
}
