//! Reservoir-engineering design on top of the effective model: spectra,
//! detuning choice, predicted rates, regime checks and parameter scans.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::displacement;
use crate::effective::{EffectiveModel, ResonanceReport};
use crate::error::{Error, Result};
use crate::fockspace::FockBasis;
use crate::model::FullModel;
use crate::sparse::SparseOperator;
use crate::C64;

pub const DENSE_LIMIT: usize = 4096;
pub const DEFAULT_TARGET_NBAR: f64 = 1.5;
pub const ZERO_COUPLING: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct EffectiveSpectrum {
    pub sector: usize,
    /// Lattice-basis indices spanning the sector.
    pub indices: Vec<usize>,
    /// Ascending.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors in sector coordinates.
    pub vectors: DMatrix<C64>,
}

impl EffectiveSpectrum {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// ε_η − ε_η′.
    pub fn gap(&self, eta: usize, eta_p: usize) -> f64 {
        self.energies[eta] - self.energies[eta_p]
    }

    pub fn gap_table(&self) -> DMatrix<f64> {
        let k = self.len();
        DMatrix::from_fn(k, k, |a, b| self.gap(a, b))
    }

    /// ⟨η|O|η′⟩ for an operator on the lattice basis.
    pub fn matrix_element(&self, op: &SparseOperator, eta: usize, eta_p: usize) -> C64 {
        let block = op.block(&self.indices);
        let u = self.vectors.column(eta);
        let v = self.vectors.column(eta_p);
        (u.adjoint() * block * v)[(0, 0)]
    }

    /// All ⟨η|O|η′⟩.
    pub fn matrix_elements(&self, op: &SparseOperator) -> DMatrix<C64> {
        let block = op.block(&self.indices);
        self.vectors.adjoint() * block * &self.vectors
    }

    /// Eigenvector η expanded on the whole lattice basis.
    pub fn full_vector(&self, eta: usize, lattice_dim: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); lattice_dim];
        for (k, &i) in self.indices.iter().enumerate() {
            out[i] = self.vectors[(k, eta)];
        }
        out
    }
}

pub fn effective_spectrum(h_s_eff: &SparseOperator, lattice_basis: &FockBasis, n: usize) -> Result<EffectiveSpectrum> {
    effective_spectrum_with_limit(h_s_eff, lattice_basis, n, DENSE_LIMIT)
}

pub fn effective_spectrum_with_limit(
    h_s_eff: &SparseOperator,
    lattice_basis: &FockBasis,
    n: usize,
    limit: usize,
) -> Result<EffectiveSpectrum> {
    if h_s_eff.dim() != lattice_basis.len() {
        return Err(Error::Domain(format!(
            "operator dimension {} does not match the lattice basis ({})",
            h_s_eff.dim(),
            lattice_basis.len()
        )));
    }
    let herm = h_s_eff.hermiticity_error();
    if herm > 1e-12 {
        return Err(Error::Domain(format!("effective Hamiltonian is not Hermitian (error {herm:.2e})")));
    }
    if n > lattice_basis.layout().max_total_excitations {
        return Err(Error::Domain(format!("sector N = {n} lies outside the basis")));
    }
    let indices: Vec<usize> = lattice_basis.sector(n).collect();
    if indices.is_empty() {
        return Err(Error::Domain(format!("sector N = {n} is empty")));
    }
    if indices.len() > limit {
        return Err(Error::Oversize { count: indices.len() as u128, limit });
    }
    let block = h_s_eff.block(&indices);
    let block = (&block + block.adjoint()) * C64::new(0.5, 0.0);
    let eig = block.symmetric_eigen();
    let k = indices.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::zeros(k, k);
    for (col, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_phase(v.as_mut_slice());
        vectors.set_column(col, &v);
    }
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(EffectiveSpectrum { sector: n, indices, energies, vectors })
}

/// Rotate so the largest-magnitude component (first one on ties) is real positive.
pub fn fix_phase(v: &mut [C64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let pivot = v.iter().position(|z| z.norm() >= max * (1.0 - 1e-9)).expect("nonempty");
    let ph = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= ph);
    v[pivot] = C64::new(v[pivot].re, 0.0);
}

/// Γ = 4 n̄ |χ|²/κ.
pub fn transition_rate(chi_me: f64, n_ph: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("transition rate needs kappa > 0 (got {kappa})")));
    }
    Ok(4.0 * n_ph * chi_me * chi_me / kappa)
}

/// Transitions one cavity is asked to drive.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityAssignment {
    pub cavity: usize,
    /// (η, η′) pairs: population moves from η to η′.
    #[serde(default)]
    pub transitions: Vec<(usize, usize)>,
    /// Explicit detuning overriding the gap.
    #[serde(default)]
    pub detuning: Option<f64>,
    /// Keep the cavity's configured pump amplitude instead of auto-picking.
    #[serde(default)]
    pub keep_pump: bool,
    #[serde(default)]
    pub target_nbar: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionCoupling {
    pub from: usize,
    pub to: usize,
    pub gap: f64,
    pub chi_re: f64,
    pub chi_im: f64,
    pub chi_abs: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CavityDesign {
    pub cavity: usize,
    pub site: usize,
    pub detuning: f64,
    pub pump_freq: f64,
    pub pump_re: f64,
    pub pump_im: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub nbar: f64,
    pub kappa: f64,
    pub transitions: Vec<TransitionCoupling>,
    pub warnings: Vec<String>,
}

impl CavityDesign {
    pub fn alpha(&self) -> C64 {
        C64::new(self.alpha_re, self.alpha_im)
    }
    pub fn pump(&self) -> C64 {
        C64::new(self.pump_re, self.pump_im)
    }
}

/// |⟨η|χ_j|η′⟩| for every cavity and every ordered pair.
#[derive(Clone, Debug, Serialize)]
pub struct ChiTable {
    pub cavity: usize,
    pub site: usize,
    pub abs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProtocolDesign {
    pub sector: usize,
    pub energies: Vec<f64>,
    pub cavities: Vec<CavityDesign>,
    pub chi_tables: Vec<ChiTable>,
}

impl ProtocolDesign {
    /// The model with the designed pump frequencies and amplitudes.
    pub fn apply(&self, model: &FullModel) -> Result<FullModel> {
        let mut m = model.clone();
        for c in &self.cavities {
            let spec = &mut m.cavities[c.cavity];
            spec.pump_freq = c.pump_freq;
            spec.pump_amp = (c.pump_re, c.pump_im);
        }
        Ok(m)
    }
}

pub fn chi_tables(eff: &EffectiveModel, spectrum: &EffectiveSpectrum) -> Vec<ChiTable> {
    (0..eff.cavities.len())
        .map(|j| {
            let me = spectrum.matrix_elements(&eff.chi_lattice(j));
            let k = spectrum.len();
            ChiTable {
                cavity: j,
                site: eff.cavities[j].site,
                abs: (0..k).map(|a| (0..k).map(|b| me[(a, b)].norm()).collect()).collect(),
            }
        })
        .collect()
}

/// Set each assigned cavity's detuning to its target gap and evaluate the
/// resulting couplings and rates. Unassigned cavities keep their pumps.
pub fn design_cooling(
    eff: &EffectiveModel,
    spectrum: &EffectiveSpectrum,
    assignments: &[CavityAssignment],
) -> Result<ProtocolDesign> {
    let k = spectrum.len();
    let mut out = Vec::new();
    let mut seen = vec![false; eff.cavities.len()];
    for a in assignments {
        let Some(cav) = eff.cavities.get(a.cavity) else {
            return Err(Error::Config(format!("assignment names cavity {} which does not exist", a.cavity)));
        };
        if std::mem::replace(&mut seen[a.cavity], true) {
            return Err(Error::Config(format!("cavity {} is assigned twice", a.cavity)));
        }
        if a.transitions.is_empty() && a.detuning.is_none() {
            return Err(Error::Config(format!("cavity {} has neither transitions nor a detuning", a.cavity)));
        }
        let me = spectrum.matrix_elements(&eff.chi_lattice(a.cavity));
        let mut warnings = Vec::new();
        let mut couplings = Vec::new();
        for &(from, to) in &a.transitions {
            if from >= k || to >= k || from == to {
                return Err(Error::Config(format!("invalid transition {from}->{to} for a {k}-level sector")));
            }
            let chi = me[(to, from)];
            if chi.norm() < ZERO_COUPLING {
                warnings.push(format!("transition {from}->{to} has zero coupling (symmetry-forbidden)"));
            }
            couplings.push((from, to, spectrum.gap(from, to), chi));
        }
        if !couplings.is_empty() && couplings.iter().all(|c| c.3.norm() < ZERO_COUPLING) && a.detuning.is_none() {
            return Err(Error::Regime(format!(
                "cavity {}: every requested transition has zero coupling ({})",
                a.cavity,
                warnings.join("; ")
            )));
        }
        let detuning = match a.detuning {
            Some(d) => d,
            None if couplings.len() == 1 => couplings[0].2,
            None => {
                let w: f64 = couplings.iter().map(|c| c.3.norm_sqr()).sum();
                couplings.iter().map(|c| c.2 * c.3.norm_sqr()).sum::<f64>() / w
            }
        };
        let pump = if a.keep_pump {
            cav.pump()
        } else {
            let nbar = a.target_nbar.unwrap_or(DEFAULT_TARGET_NBAR);
            let mag = (nbar * (detuning * detuning + cav.kappa * cav.kappa / 4.0)).sqrt();
            let p = cav.pump();
            if p.norm() > 0.0 {
                p / p.norm() * mag
            } else {
                C64::new(mag, 0.0)
            }
        };
        let alpha = displacement(pump, detuning, cav.kappa)?;
        let nbar = alpha.norm_sqr();
        let transitions = couplings
            .into_iter()
            .map(|(from, to, gap, chi)| TransitionCoupling {
                from,
                to,
                gap,
                chi_re: chi.re,
                chi_im: chi.im,
                chi_abs: chi.norm(),
                rate: if cav.kappa > 0.0 { transition_rate(chi.norm(), nbar, cav.kappa).unwrap() } else { f64::INFINITY },
            })
            .collect();
        out.push(CavityDesign {
            cavity: a.cavity,
            site: cav.site,
            detuning,
            pump_freq: cav.pump_freq_for_detuning(detuning),
            pump_re: pump.re,
            pump_im: pump.im,
            alpha_re: alpha.re,
            alpha_im: alpha.im,
            nbar,
            kappa: cav.kappa,
            transitions,
            warnings,
        });
    }
    Ok(ProtocolDesign {
        sector: spectrum.sector,
        energies: spectrum.energies.clone(),
        cavities: out,
        chi_tables: chi_tables(eff, spectrum),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub pass: f64,
    pub warn: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { pass: 10.0, warn: 3.0 }
    }
}

impl Thresholds {
    pub fn classify(&self, ratio: f64) -> Status {
        if ratio >= self.pass {
            Status::Pass
        } else if ratio >= self.warn {
            Status::Warn
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Condition {
    pub name: String,
    pub detail: String,
    pub ratio: f64,
    pub status: Status,
    /// Informational checks never make the report fail.
    pub blocking: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidityReport {
    pub thresholds: Thresholds,
    pub conditions: Vec<Condition>,
    pub nbar: Vec<f64>,
}

impl ValidityReport {
    pub fn overall(&self) -> Status {
        self.conditions.iter().filter(|c| c.blocking).map(|c| c.status).max().unwrap_or(Status::Pass)
    }

    pub fn failures(&self) -> Vec<&Condition> {
        self.conditions.iter().filter(|c| c.blocking && c.status == Status::Fail).collect()
    }
}

/// Evaluate the perturbative and Markovian conditions for a design.
pub fn validate_regime(
    model: &FullModel,
    resonance: &ResonanceReport,
    spectrum: Option<&EffectiveSpectrum>,
    design: &ProtocolDesign,
    th: Thresholds,
) -> ValidityReport {
    let mut conds = Vec::new();
    let jmax = model.lattice.bonds.iter().map(|b| b.j.abs()).fold(0.0, f64::max);
    let ratio = if jmax > 0.0 { model.drive.omega / jmax } else { f64::INFINITY };
    conds.push(Condition {
        name: "omega_vs_J".into(),
        detail: format!("omega = {}, max J = {}", model.drive.omega, jmax),
        ratio,
        status: th.classify(ratio),
        blocking: true,
    });
    for (j, c) in model.cavities.iter().enumerate() {
        if let Some(e) = resonance
            .entries
            .iter()
            .filter(|e| e.cavity == j)
            .min_by(|a, b| a.denominator.abs().total_cmp(&b.denominator.abs()))
        {
            let ratio = if c.g > 0.0 { e.denominator.abs() / c.g } else { f64::INFINITY };
            conds.push(Condition {
                name: format!("cavity{j}_denominator_vs_g"),
                detail: format!("min |delta + U n - m omega| = {:.4} at n = {}, m = {}", e.denominator.abs(), e.n, e.m),
                ratio,
                status: th.classify(ratio),
                blocking: true,
            });
        }
    }
    let mut nbar = Vec::new();
    for cd in &design.cavities {
        nbar.push(cd.nbar);
        let j = cd.cavity;
        for t in &cd.transitions {
            let (ratio, detail) = if cd.kappa > 0.0 {
                (t.gap.abs() / cd.kappa, format!("|gap| = {:.4}, kappa = {}", t.gap.abs(), cd.kappa))
            } else {
                (0.0, "kappa = 0".to_string())
            };
            conds.push(Condition {
                name: format!("cavity{j}_gap_{}_{}_vs_kappa", t.from, t.to),
                detail,
                ratio,
                status: th.classify(ratio),
                blocking: true,
            });
            let coupling = t.chi_abs * cd.nbar.sqrt();
            let (ratio, detail) = if cd.kappa <= 0.0 {
                (0.0, "kappa = 0: no Markovian cavity".to_string())
            } else if coupling == 0.0 {
                (f64::INFINITY, "zero coupling".to_string())
            } else {
                (cd.kappa / coupling, format!("kappa = {}, |chi| sqrt(nbar) = {coupling:.3e}", cd.kappa))
            };
            conds.push(Condition {
                name: format!("cavity{j}_kappa_{}_{}_vs_coupling", t.from, t.to),
                detail,
                ratio,
                status: th.classify(ratio),
                blocking: true,
            });
        }
        if let Some(sp) = spectrum {
            // closest unassigned gap seen by this cavity
            let me = design.chi_tables.get(j).map(|t| &t.abs);
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..sp.len() {
                for b in 0..sp.len() {
                    if a == b || cd.transitions.iter().any(|t| t.from == a && t.to == b) {
                        continue;
                    }
                    if me.map(|m| m[b][a] < 1e-6).unwrap_or(false) {
                        continue;
                    }
                    let off = (sp.gap(a, b) - cd.detuning).abs();
                    if best.map(|x| off < x.0).unwrap_or(true) {
                        best = Some((off, a, b));
                    }
                }
            }
            if let Some((off, a, b)) = best {
                let ratio = if cd.kappa > 0.0 { off / cd.kappa } else { f64::INFINITY };
                conds.push(Condition {
                    name: format!("cavity{j}_gap_crowding"),
                    detail: format!("transition {a}->{b} lies {off:.4} from the detuning"),
                    ratio,
                    status: th.classify(ratio),
                    blocking: false,
                });
            }
        }
    }
    ValidityReport { thresholds: th, conditions: conds, nbar }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ScanRow {
    pub point: usize,
    pub params: Vec<f64>,
    pub t: f64,
    pub values: Vec<f64>,
    pub flagged: bool,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ScanResult {
    pub axes: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<ScanRow>,
}

/// One sample of a scan point: time and observable values.
pub type PointSeries = Vec<(f64, Vec<f64>)>;

/// Outcome of one scan point. A flagged point still carries its values.
#[derive(Clone, Debug, Default)]
pub struct PointRun {
    pub series: PointSeries,
    pub flagged: bool,
    pub message: String,
}

impl PointRun {
    pub fn clean(series: PointSeries) -> Self {
        PointRun { series, flagged: false, message: String::new() }
    }
}

/// Cartesian product of the axes, row-major with the last axis fastest.
pub fn grid_points(axes: &[ScanAxis]) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for ax in axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                ax.values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Evaluate `run` on every grid point in parallel. Points failing with a
/// resonance or regime error become flagged rows of NaN; other errors abort.
pub fn scan<F>(axes: &[ScanAxis], columns: &[String], budget: usize, run: F) -> Result<ScanResult>
where
    F: Fn(&[f64]) -> Result<PointRun> + Sync,
{
    let count: usize = axes.iter().map(|a| a.values.len()).product();
    if count > budget {
        return Err(Error::Config(format!("scan grid has {count} points, above the budget of {budget}")));
    }
    if axes.iter().any(|a| a.values.is_empty()) {
        return Err(Error::Config("scan axis with no values".into()));
    }
    let pts = grid_points(axes);
    let results: Vec<Result<Vec<ScanRow>>> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| match run(p) {
            Ok(pr) => Ok(pr
                .series
                .into_iter()
                .map(|(t, values)| ScanRow {
                    point: i,
                    params: p.clone(),
                    t,
                    values,
                    flagged: pr.flagged,
                    message: pr.message.clone(),
                })
                .collect()),
            Err(e @ (Error::Resonance { .. } | Error::Regime(_))) => Ok(vec![ScanRow {
                point: i,
                params: p.clone(),
                t: f64::NAN,
                values: vec![f64::NAN; columns.len()],
                flagged: true,
                message: e.to_string(),
            }]),
            Err(e) => Err(e),
        })
        .collect();
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(ScanResult { axes: axes.iter().map(|a| a.name.clone()).collect(), columns: columns.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{build_effective_model, EffectiveOptions};
    use crate::fockspace::ModeLayout;
    use crate::model::{flux_drive_pattern, CavitySpec, DriveSpec, FluxOptions, LatticeSpec};
    use std::f64::consts::PI;

    fn plaquette(flux: f64) -> (FullModel, EffectiveModel) {
        let lat = LatticeSpec::plaquette();
        let drive = flux_drive_pattern(&lat, flux, 20.0, FluxOptions::default()).unwrap();
        let cav = CavitySpec { site: 0, delta: 35.2, g: 1.0, pump_amp: (1.0, 0.0), pump_freq: 0.0, kappa: 0.1 };
        let layout =
            ModeLayout { n_sites: 4, n_cavities: 1, max_site_occ: 1, max_total_excitations: 1, max_photons_per_cavity: 1 };
        let m = FullModel::new(lat, drive, vec![cav], -8.0, layout, 10_000).unwrap();
        let e = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        (m, e)
    }

    #[test]
    fn rate_formula() {
        assert!((transition_rate(0.01, 1.0, 0.1).unwrap() - 0.004).abs() < 1e-15);
        assert_eq!(transition_rate(0.0, 1.3, 0.1).unwrap(), 0.0);
        assert!(transition_rate(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn plaquette_circulant_spectrum() {
        let lat = LatticeSpec::plaquette();
        let flux = 0.7 * PI;
        let drive = flux_drive_pattern(&lat, flux, 20.0, FluxOptions::default()).unwrap();
        let layout =
            ModeLayout { n_sites: 4, n_cavities: 0, max_site_occ: 1, max_total_excitations: 1, max_photons_per_cavity: 0 };
        let m = FullModel::new(lat, drive, vec![], -8.0, layout, 100).unwrap();
        let e = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        let sp = effective_spectrum(&e.h_s_eff, &e.lattice_basis, 1).unwrap();
        let je = crate::effective::effective_tunneling(1.0, &m.drive, 0, 1).norm();
        let mut want: Vec<f64> = (0..4).map(|k| -2.0 * je * ((2.0 * PI * k as f64 + flux) / 4.0).cos()).collect();
        want.sort_by(|a, b| a.total_cmp(b));
        for (a, b) in sp.energies.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let ortho = sp.vectors.adjoint() * &sp.vectors - DMatrix::identity(4, 4);
        assert!(ortho.iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn phase_fixing() {
        let mut v = vec![C64::new(0.0, 0.3), C64::new(0.0, -0.8), C64::new(0.1, 0.0)];
        fix_phase(&mut v);
        assert!(v[1].im == 0.0 && v[1].re > 0.0);
        assert!((v.iter().map(|z| z.norm_sqr()).sum::<f64>() - 0.74).abs() < 1e-12);
    }

    #[test]
    fn oversize_sector_rejected() {
        let (_, e) = plaquette(PI / 2.0);
        assert!(matches!(effective_spectrum_with_limit(&e.h_s_eff, &e.lattice_basis, 1, 3), Err(Error::Oversize { .. })));
    }

    #[test]
    fn design_sets_gap_and_nbar() {
        let (m, e) = plaquette(PI / 2.0);
        let sp = effective_spectrum(&e.h_s_eff, &e.lattice_basis, 1).unwrap();
        let a = CavityAssignment { cavity: 0, transitions: vec![(3, 0)], ..Default::default() };
        let d = design_cooling(&e, &sp, &[a]).unwrap();
        let c = &d.cavities[0];
        assert!((c.detuning - sp.gap(3, 0)).abs() < 1e-14);
        assert!((c.nbar - DEFAULT_TARGET_NBAR).abs() < 1e-12);
        assert!((c.pump_freq - m.cavities[0].pump_freq_for_detuning(c.detuning)).abs() < 1e-14);
        let rep = validate_regime(&m, &e.resonance, Some(&sp), &d, Thresholds::default());
        assert!(rep.conditions.iter().any(|c| c.name == "omega_vs_J" && c.status == Status::Pass));
    }

    #[test]
    fn kappa_zero_fails_markovian_condition() {
        let (mut m, _) = plaquette(PI / 2.0);
        m.cavities[0].kappa = 0.0;
        let e = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        let sp = effective_spectrum(&e.h_s_eff, &e.lattice_basis, 1).unwrap();
        let a = CavityAssignment { cavity: 0, transitions: vec![(3, 0)], ..Default::default() };
        let d = design_cooling(&e, &sp, &[a]).unwrap();
        let rep = validate_regime(&m, &e.resonance, Some(&sp), &d, Thresholds::default());
        assert_eq!(rep.overall(), Status::Fail);
        assert!(rep.failures().iter().any(|c| c.detail.contains("kappa = 0")));
    }

    #[test]
    fn slow_drive_fails_omega_condition() {
        let lat = LatticeSpec::plaquette();
        let layout =
            ModeLayout { n_sites: 4, n_cavities: 0, max_site_occ: 1, max_total_excitations: 1, max_photons_per_cavity: 0 };
        let m = FullModel::new(lat, DriveSpec::undriven(4, 2.0), vec![], 0.0, layout, 100).unwrap();
        let e = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        let d = ProtocolDesign { sector: 1, energies: vec![], cavities: vec![], chi_tables: vec![] };
        let rep = validate_regime(&m, &e.resonance, None, &d, Thresholds::default());
        assert_eq!(rep.conditions[0].status, Status::Fail);
    }

    #[test]
    fn scan_flags_and_budget() {
        let axes = vec![ScanAxis { name: "x".into(), values: vec![1.0, 2.0, 3.0] }];
        let cols = vec!["y".to_string()];
        let r = scan(&axes, &cols, 10, |p| {
            if p[0] == 2.0 {
                Err(Error::Regime("bad".into()))
            } else {
                Ok(PointRun::clean(vec![(0.0, vec![p[0] * 2.0])]))
            }
        })
        .unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r.rows[1].flagged && !r.rows[0].flagged);
        assert_eq!(r.rows[2].values[0], 6.0);
        assert!(scan(&axes, &cols, 2, |_| Ok(PointRun::default())).is_err());
        let g = grid_points(&[axes[0].clone(), ScanAxis { name: "z".into(), values: vec![0.0, 1.0] }]);
        assert_eq!(g.len(), 6);
        assert_eq!(g[1], vec![1.0, 1.0]);
    }
}
