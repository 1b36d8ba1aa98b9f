//! Reduced stationary problem at the `omega_x = omega_y` coupling resonance.
//!
//! States `|n0 + k> |m0 + l>` with `p = k + l` fixed form group `q = p`; inside a group the
//! coupling `-mu x y` acts through resonance-preserving (`Δp = 0`) terms only, giving the
//! Mathieu-like sub-spectrum `E^M_{q,s}` on top of the shift `hbar0 omega q`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::linalg::sym_eigh;
use crate::quartic_oscillator::{anharmonicity, level_frequency, OscillatorSpectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParitySector {
    EvenP,
    OddP,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub mu: f64,
    pub n0: usize,
    /// `k = n - n0` runs over `[-K, K]`.
    pub k_halfwidth: usize,
    /// Groups `q` run over `[-Q, Q]`.
    pub q_halfwidth: usize,
    /// Restrict the stationary groups to one parity of `p`. The drive couples `q` to
    /// `q ± 1`, so Floquet work needs `None`.
    pub parity_sector: Option<ParitySector>,
    /// Half-width `W` (in levels) of the separatrix window.
    pub separatrix_window: usize,
    /// A pair of levels counts as a doublet when its gap is below this fraction of the
    /// gap to the following level.
    pub doublet_ratio: f64,
}

impl ResonanceParams {
    pub fn new(mu: f64, n0: usize, k_halfwidth: usize, q_halfwidth: usize) -> Self {
        ResonanceParams {
            mu,
            n0,
            k_halfwidth,
            q_halfwidth,
            parity_sector: None,
            separatrix_window: 5,
            doublet_ratio: 0.05,
        }
    }

    pub fn group_size(&self) -> usize {
        2 * self.k_halfwidth + 1
    }

    pub fn group_count(&self) -> usize {
        2 * self.q_halfwidth + 1
    }

    pub fn groups(&self) -> Vec<i32> {
        let q = self.q_halfwidth as i32;
        (-q..=q)
            .filter(|g| match self.parity_sector {
                None => true,
                Some(ParitySector::EvenP) => g.rem_euclid(2) == 0,
                Some(ParitySector::OddP) => g.rem_euclid(2) == 1,
            })
            .collect()
    }

    pub fn validate(&self, n_max: usize) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(validation(format!("mu must be non-negative, got {}", self.mu)));
        }
        let reach = self.k_halfwidth + self.q_halfwidth;
        if self.n0 < reach {
            return Err(validation(format!("n0 = {} < K + Q = {reach}", self.n0)));
        }
        if self.n0 + reach > n_max {
            return Err(validation(format!(
                "n0 + K + Q = {} exceeds the solved n_max = {n_max}",
                self.n0 + reach
            )));
        }
        if self.k_halfwidth == 0 {
            return Err(validation("k_halfwidth must be positive"));
        }
        if !(self.doublet_ratio > 0.0 && self.doublet_ratio < 1.0) {
            return Err(validation("doublet_ratio must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Separatrix classification of one group's levels (indices into `levels`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// Level at the spacing minimum of the doublet-merged ladder.
    pub separatrix_index: usize,
    pub separatrix_set: Vec<usize>,
    pub inside_set: Vec<usize>,
    pub above_set: Vec<usize>,
    /// Quasi-degenerate pairs `(s, s+1)` in the above set.
    pub doublets: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct GroupSpectrum {
    pub q: i32,
    /// Ascending `E^M_{q,s}`, `s = 0..2K`.
    pub levels: Vec<f64>,
    /// Column `s` holds the eigenvector over `k = -K..=K` (row `k + K`).
    pub eigenvectors: DMatrix<f64>,
    pub classification: Option<Classification>,
}

impl GroupSpectrum {
    /// Label centered on the group: `s - K`.
    pub fn centered_label(&self, s: usize) -> i64 {
        s as i64 - (self.levels.len() / 2) as i64
    }
}

/// Inter-group coordinate blocks: `blocks[g][(s, s')] = x_{q,s; q+1,s'}` with `q = q_min + g`.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    pub q_min: i32,
    pub blocks: Vec<DMatrix<f64>>,
}

impl TransitionMatrix {
    /// `x_{q,s; q',s'}` for `|q - q'| = 1`, zero otherwise.
    pub fn get(&self, q: i32, s: usize, qp: i32, sp: usize) -> f64 {
        if qp == q + 1 {
            let g = q - self.q_min;
            if g >= 0 && (g as usize) < self.blocks.len() {
                return self.blocks[g as usize][(s, sp)];
            }
        } else if qp == q - 1 {
            return self.get(qp, sp, q, s);
        }
        0.0
    }
}

/// Complete reduced basis consumed by the Floquet engine.
#[derive(Clone, Debug)]
pub struct ResonanceBasis {
    pub params: ResonanceParams,
    pub hbar0: f64,
    /// `omega_{n0}`.
    pub omega: f64,
    /// `E''_{n0}`.
    pub e2: f64,
    pub groups: Vec<GroupSpectrum>,
    pub transitions: TransitionMatrix,
}

impl ResonanceBasis {
    pub fn build(spec: &OscillatorSpectrum, params: &ResonanceParams) -> Result<Self> {
        params.validate(spec.n_max())?;
        let groups = diagonalize_groups(params, spec)?;
        let transitions = transition_elements(&groups, spec, params)?;
        Ok(ResonanceBasis {
            params: params.clone(),
            hbar0: spec.hbar0(),
            omega: level_frequency(spec, params.n0)?,
            e2: anharmonicity(spec, params.n0)?,
            groups,
            transitions,
        })
    }

    pub fn hbar_omega(&self) -> f64 {
        self.hbar0 * self.omega
    }

    pub fn group(&self, q: i32) -> Result<&GroupSpectrum> {
        self.groups.iter().find(|g| g.q == q).ok_or(Error::IndexOutOfRange {
            index: q as i64,
            lo: -(self.params.q_halfwidth as i64),
            hi: self.params.q_halfwidth as i64,
        })
    }

    pub fn classification(&self, q: i32) -> Result<&Classification> {
        self.group(q)?
            .classification
            .as_ref()
            .ok_or_else(|| Error::NoSeparatrix(format!("group {q} has no interior spacing minimum")))
    }

    pub fn group_size(&self) -> usize {
        self.params.group_size()
    }

    pub fn dimension(&self) -> usize {
        self.groups.len() * self.group_size()
    }

    /// Flat index of `(q, s)` in the Floquet state vector.
    pub fn flat_index(&self, q: i32, s: usize) -> usize {
        (q - self.groups[0].q) as usize * self.group_size() + s
    }

    /// `max_{q,s} |E^M_{q,s} - E^M_{0,s}| / (hbar0 omega)`.
    pub fn group_shift_deviation(&self) -> f64 {
        let Ok(g0) = self.group(0) else { return f64::NAN };
        let hw = self.hbar_omega();
        self.groups
            .iter()
            .flat_map(|g| g.levels.iter().zip(&g0.levels).map(|(a, b)| (a - b).abs() / hw))
            .fold(0.0, f64::max)
    }

    /// Norm of the q-dependent diagonal `E''(q^2/2 - q k)` over `|k| <= K`, `|q| <= Q`, in
    /// units of `hbar0 omega`. Bounds `group_shift_deviation` up to the weak q-dependence of
    /// the coupling; the largest shifts sit at the truncation edge.
    pub fn group_shift_bound(&self) -> f64 {
        let (k, q) = (self.params.k_halfwidth as f64, self.params.q_halfwidth as f64);
        self.e2.abs() * (q * k + 0.5 * q * q) / self.hbar_omega()
    }
}

/// Group Hamiltonian over `k = -K..=K` (the common shift `hbar0 omega q` excluded).
pub fn build_group_hamiltonian(spec: &OscillatorSpectrum, params: &ResonanceParams, q: i32) -> Result<DMatrix<f64>> {
    let kk = params.k_halfwidth as i64;
    let n0 = params.n0 as i64;
    let q64 = q as i64;
    let n_max = spec.n_max() as i64;
    for idx in [n0 - kk, n0 + kk, n0 + q64 - kk, n0 + q64 + kk] {
        if idx < 0 || idx > n_max {
            return Err(Error::IndexOutOfRange { index: idx, lo: 0, hi: n_max });
        }
    }
    let e2 = anharmonicity(spec, params.n0)?;
    let d = params.group_size();
    let x = &spec.x_elements;
    let mut h = DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        let k = a as i64 - kk;
        let kf = k as f64;
        let qf = q as f64;
        h[(a, a)] = e2 * (kf * kf - qf * kf + qf * qf / 2.0);
        for b in (a + 1..d).step_by(2) {
            let kp = b as i64 - kk;
            let (n, np) = ((n0 + k) as usize, (n0 + kp) as usize);
            let (m, mp) = ((n0 + q64 - k) as usize, (n0 + q64 - kp) as usize);
            let v = -params.mu * x.get(n, np) * x.get(m, mp);
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    Ok(h)
}

fn fix_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0usize;
        for i in 0..col.len() {
            if col[i].abs() > col[best].abs() * (1.0 + 1e-9) {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn diagonalize_groups(params: &ResonanceParams, spec: &OscillatorSpectrum) -> Result<Vec<GroupSpectrum>> {
    params.validate(spec.n_max())?;
    params
        .groups()
        .into_par_iter()
        .map(|q| {
            let h = build_group_hamiltonian(spec, params, q)?;
            let (levels, mut v) = sym_eigh(&h)?;
            fix_signs(&mut v);
            let mut g = GroupSpectrum { q, levels, eigenvectors: v, classification: None };
            g.classification = classify_states(&g, params.separatrix_window, params.doublet_ratio).ok();
            Ok(g)
        })
        .collect()
}

/// Ladder of levels with quasi-degenerate pairs merged: `(first level index, energy)`.
pub fn merged_ladder(levels: &[f64], doublet_ratio: f64) -> Vec<(usize, f64, bool)> {
    let n = levels.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n {
            let gap = levels[i + 1] - levels[i];
            // reference scale: distance to the next level, or to the previous one at the top
            let next = if i + 2 < n {
                levels[i + 2] - levels[i]
            } else if i > 0 {
                levels[i] - levels[i - 1]
            } else {
                f64::INFINITY
            };
            if gap < doublet_ratio * next {
                out.push((i, 0.5 * (levels[i] + levels[i + 1]), true));
                i += 2;
                continue;
            }
        }
        out.push((i, levels[i], false));
        i += 1;
    }
    out
}

pub fn classify_states(group: &GroupSpectrum, window: usize, doublet_ratio: f64) -> Result<Classification> {
    let levels = &group.levels;
    let ladder = merged_ladder(levels, doublet_ratio);
    if ladder.len() < 4 {
        return Err(Error::NoSeparatrix(format!("group {} has too few distinct levels", group.q)));
    }
    let spacings: Vec<f64> = ladder.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let (jmin, _) = spacings
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |acc, (j, &s)| if s < acc.1 { (j, s) } else { acc });
    // The accumulation point must be an interior dip of the ladder spacing.
    if jmin == 0 || jmin + 1 >= spacings.len() {
        return Err(Error::NoSeparatrix(format!(
            "group {}: ladder spacing has no interior minimum (uncoupled or too weak coupling)",
            group.q
        )));
    }
    let sidx = ladder[jmin].0;
    let lo = sidx.saturating_sub(window);
    let hi = (sidx + window).min(levels.len() - 1);
    let doublets = ladder
        .iter()
        .filter(|(i, _, pair)| *pair && *i > hi)
        .map(|(i, _, _)| (*i, *i + 1))
        .collect();
    Ok(Classification {
        separatrix_index: sidx,
        separatrix_set: (lo..=hi).collect(),
        inside_set: (0..lo).collect(),
        above_set: (hi + 1..levels.len()).collect(),
        doublets,
    })
}

/// `x_{q,s; q+1,s'} = Σ_k v^{(q)}_{k,s} x_{n0+k, n0+k+1} v^{(q+1)}_{k+1,s'}`: the drive moves
/// `n` by one while `m` stays put, so `k` and `q` both step by one.
pub fn transition_elements(
    groups: &[GroupSpectrum],
    spec: &OscillatorSpectrum,
    params: &ResonanceParams,
) -> Result<TransitionMatrix> {
    let d = params.group_size();
    let kk = params.k_halfwidth as i64;
    let n0 = params.n0 as i64;
    let xs: Vec<f64> = (0..d - 1)
        .map(|a| {
            let n = (n0 + a as i64 - kk) as usize;
            spec.x_elements.get(n, n + 1)
        })
        .collect();
    let mut blocks = Vec::new();
    for w in groups.windows(2) {
        if w[1].q != w[0].q + 1 {
            return Err(Error::MissingStage(format!("neighbor group {} of group {} missing", w[0].q + 1, w[0].q)));
        }
        let mut a = w[0].eigenvectors.rows(0, d - 1).into_owned();
        for (r, x) in xs.iter().enumerate() {
            a.row_mut(r).scale_mut(*x);
        }
        let b = w[1].eigenvectors.rows(1, d - 1);
        blocks.push(a.transpose() * b);
    }
    if blocks.is_empty() {
        return Err(Error::MissingStage("at least two adjacent groups are needed".into()));
    }
    Ok(TransitionMatrix { q_min: groups[0].q, blocks })
}
