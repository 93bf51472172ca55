//! Time-independent effective model: dressed couplings χ, ξ, ξ̃, effective
//! tunnelling, the effective Hamiltonian and dressed jump operators.

pub mod bessel;

use serde::Serialize;

pub use bessel::{bessel_j, bessel_j_symmetric};

use crate::error::{Error, Result};
use crate::fockspace::{enumerate_basis_with_limit, mode_operator, FockBasis, Mode, ModeLayout, OpKind};
use crate::model::{dressed_tunneling_component, CavitySpec, DriveSpec, FullModel};
use crate::sparse::SparseOperator;
use crate::tdop::{Oscillation, TdOperator};
use crate::C64;

pub const DEFAULT_M_TRUNC: usize = 50;
/// Resonance threshold below which construction fails, in units of g.
pub const ERROR_THRESHOLD_G: f64 = 3.0;
/// Threshold below which a warning is recorded, in units of g.
pub const WARN_THRESHOLD_G: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiXi {
    pub chi: f64,
    pub xi: f64,
    pub xi_tilde: f64,
}

/// Parameters entering the dressed couplings of one cavity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingParams {
    pub g: f64,
    pub delta: f64,
    pub u: f64,
    pub lambda: f64,
    pub omega: f64,
}

impl CouplingParams {
    pub fn new(cav: &CavitySpec, drive: &DriveSpec, u: f64) -> Self {
        CouplingParams { g: cav.g, delta: cav.delta, u, lambda: drive.lambda, omega: drive.omega }
    }

    pub fn denominator(&self, n: usize, m: i64) -> f64 {
        self.delta + self.u * n as f64 - m as f64 * self.omega
    }
}

fn check_denominator(p: &CouplingParams, cavity: usize, n: usize, m: i64, threshold: f64) -> Result<f64> {
    let d = p.denominator(n, m);
    if d.abs() < threshold || d == 0.0 {
        return Err(Error::Resonance { cavity, n, m, denominator: d, threshold });
    }
    Ok(d)
}

/// ξ(n), ξ̃(n) and χ(n) = ξ̃(n) − ξ(n), summed over |m| ≤ m_trunc.
///
/// Fails when a denominator δ + U n′ − mω with n′ ∈ {n − 1, n} is below 3g.
pub fn chi_xi(g: f64, delta: f64, u: f64, lambda: f64, omega: f64, n: usize, m_trunc: usize) -> Result<ChiXi> {
    let p = CouplingParams { g, delta, u, lambda, omega };
    chi_xi_with_threshold(&p, n, m_trunc, ERROR_THRESHOLD_G * g.abs(), 0)
}

pub fn chi_xi_with_threshold(p: &CouplingParams, n: usize, m_trunc: usize, threshold: f64, cavity: usize) -> Result<ChiXi> {
    if p.g == 0.0 {
        return Ok(ChiXi { chi: 0.0, xi: 0.0, xi_tilde: 0.0 });
    }
    let jm = bessel_j_symmetric(m_trunc, p.lambda / p.omega);
    let mt = m_trunc as i64;
    let g2 = p.g * p.g;
    let mut xi = 0.0;
    let mut xt = 0.0;
    for m in -mt..=mt {
        let w = g2 * jm[(m + mt) as usize].powi(2);
        let dn = check_denominator(p, cavity, n, m, threshold)?;
        xi += w / dn;
        if n > 0 {
            let dm = check_denominator(p, cavity, n - 1, m, threshold)?;
            xt += w * p.u * n as f64 / (dm * dn);
        }
    }
    Ok(ChiXi { chi: xt - xi, xi, xi_tilde: xt })
}

/// ξ^(1) and χ^(1) of the single-excitation restriction.
pub fn single_excitation_couplings(p: &CouplingParams, m_trunc: usize, threshold: f64, cavity: usize) -> Result<(f64, f64)> {
    let jm = bessel_j_symmetric(m_trunc, p.lambda / p.omega);
    let mt = m_trunc as i64;
    let g2 = p.g * p.g;
    let mut xi = 0.0;
    let mut chi = 0.0;
    if p.g == 0.0 {
        return Ok((0.0, 0.0));
    }
    for m in -mt..=mt {
        let w = g2 * jm[(m + mt) as usize].powi(2);
        let d0 = check_denominator(p, cavity, 0, m, threshold)?;
        let d1 = check_denominator(p, cavity, 1, m, threshold)?;
        xi += w / d0;
        chi += 2.0 * p.u * w / (d0 * d1);
    }
    Ok((xi, chi))
}

/// J^eff e^{iθ^eff}: the time average of J e^{iθ_{ℓ′ℓ}(t)}.
pub fn effective_tunneling(j_bond: f64, drive: &DriveSpec, l: usize, lp: usize) -> C64 {
    dressed_tunneling_component(j_bond, drive, l, lp, 0)
}

#[derive(Clone, Debug, Serialize)]
pub struct CavityCouplings {
    pub cavity: usize,
    pub site: usize,
    /// Tables indexed by site occupation n = 0..=cap.
    pub chi: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_tilde: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BondCoupling {
    pub from: usize,
    pub to: usize,
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DressedCouplings {
    pub cavities: Vec<CavityCouplings>,
    pub bonds: Vec<BondCoupling>,
    pub m_trunc: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResonanceEntry {
    pub cavity: usize,
    pub n: usize,
    pub m: i64,
    pub denominator: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceReport {
    pub threshold: f64,
    pub entries: Vec<ResonanceEntry>,
}

impl ResonanceReport {
    pub fn flagged(&self) -> Vec<ResonanceEntry> {
        self.entries.iter().filter(|e| e.flagged).copied().collect()
    }

    /// Entry with the smallest |denominator|.
    pub fn min_entry(&self) -> Option<ResonanceEntry> {
        self.entries
            .iter()
            .min_by(|a, b| a.denominator.abs().total_cmp(&b.denominator.abs()))
            .copied()
    }

    pub fn min_abs_denominator(&self) -> f64 {
        self.min_entry().map(|e| e.denominator.abs()).unwrap_or(f64::INFINITY)
    }
}

/// Highest site occupation the basis can reach.
fn occupation_cap(layout: &ModeLayout) -> usize {
    layout.max_site_occ.min(layout.max_total_excitations)
}

/// Every denominator δ_j + U n − mω for n up to the occupation cap.
pub fn resonance_scan(model: &FullModel, m_trunc: usize, threshold: f64) -> ResonanceReport {
    let cap = occupation_cap(model.basis.layout());
    let mt = m_trunc as i64;
    let mut entries = Vec::new();
    for (j, c) in model.cavities.iter().enumerate() {
        let p = CouplingParams::new(c, &model.drive, model.u);
        for n in 0..=cap {
            for m in -mt..=mt {
                let d = p.denominator(n, m);
                entries.push(ResonanceEntry { cavity: j, n, m, denominator: d, flagged: d.abs() < threshold });
            }
        }
    }
    ResonanceReport { threshold, entries }
}

/// Dressed loss channel of one cavity: ĉ_{j,m} = ĉ_j δ_{m0} + F_m(n̂_j) â_j.
#[derive(Clone, Debug)]
pub struct DressedJumps {
    pub cavity: usize,
    pub kappa: f64,
    pub c: SparseOperator,
    pub a: SparseOperator,
    /// Occupation of the cavity's site in each basis state.
    pub site_occ: Vec<u8>,
    pub m_values: Vec<i64>,
    /// f[k][n] = g J_m(λ/ω) / (δ + U n − mω) for m = m_values[k].
    pub f: Vec<Vec<f64>>,
}

impl DressedJumps {
    fn new(basis: &FockBasis, cavity: usize, cav: &CavitySpec, drive: &DriveSpec, u: f64, m_trunc: usize, cap: usize) -> Result<Self> {
        let p = CouplingParams::new(cav, drive, u);
        let jm = bessel_j_symmetric(m_trunc, p.lambda / p.omega);
        let mt = m_trunc as i64;
        let mut m_values = Vec::new();
        let mut f = Vec::new();
        for m in -mt..=mt {
            let row: Vec<f64> = (0..=cap)
                .map(|n| if p.g == 0.0 { 0.0 } else { p.g * jm[(m + mt) as usize] / p.denominator(n, m) })
                .collect();
            if m != 0 && row.iter().all(|&v| v == 0.0) {
                continue;
            }
            m_values.push(m);
            f.push(row);
        }
        let site_occ = (0..basis.len()).map(|i| basis.occupation(i, Mode::Site(cav.site)) as u8).collect();
        Ok(DressedJumps {
            cavity,
            kappa: cav.kappa,
            c: mode_operator(basis, Mode::Cavity(cavity), OpKind::Lower)?,
            a: mode_operator(basis, Mode::Site(cav.site), OpKind::Lower)?,
            site_occ,
            m_values,
            f,
        })
    }

    /// Explicit ĉ_{j,m} for every retained m.
    pub fn operators(&self) -> Vec<(i64, SparseOperator)> {
        self.m_values
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let fa = self.f_times_a(k);
                let op = if m == 0 { fa.add(&self.c) } else { fa };
                (m, op)
            })
            .collect()
    }

    /// F_m(n̂) â, with n̂ evaluated on the row state.
    pub fn f_times_a(&self, k: usize) -> SparseOperator {
        let t = self
            .a
            .entries()
            .map(|(r, c, v)| (r, c, v * self.f[k][self.site_occ[r] as usize]));
        SparseOperator::from_triplets(self.a.dim(), t).expect("indices in range")
    }

    pub fn index_of_m0(&self) -> Option<usize> {
        self.m_values.iter().position(|&m| m == 0)
    }

    /// K[p][q] = Σ_m F_m(p) F_m(q).
    pub fn kernel(&self) -> Vec<Vec<f64>> {
        let cap = self.f.first().map(|r| r.len()).unwrap_or(0);
        let mut k = vec![vec![0.0; cap]; cap];
        for row in &self.f {
            for p in 0..cap {
                for q in 0..cap {
                    k[p][q] += row[p] * row[q];
                }
            }
        }
        k
    }

    /// Σ_m ĉ†_{j,m} ĉ_{j,m}.
    pub fn number_sum(&self) -> SparseOperator {
        let mut acc = SparseOperator::zeros(self.c.dim());
        for (_, op) in self.operators() {
            acc = acc.add(&op.adjoint().matmul(&op));
        }
        acc
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveModel {
    pub basis: FockBasis,
    pub lattice_basis: FockBasis,
    /// Time-independent part of H_eff on the cavity-inclusive basis.
    pub h_static: SparseOperator,
    /// Lattice-only effective Hamiltonian.
    pub h_s_eff: SparseOperator,
    pub cavities: Vec<CavitySpec>,
    pub jumps: Vec<DressedJumps>,
    pub couplings: DressedCouplings,
    pub resonance: ResonanceReport,
    pub m_trunc: usize,
}

impl EffectiveModel {
    /// H_eff including the pump tones E_j ĉ†_j e^{−iω_j t} + h.c.
    pub fn operator(&self) -> TdOperator {
        let mut op = TdOperator::new(self.h_static.clone());
        for (j, c) in self.cavities.iter().enumerate() {
            let cd = mode_operator(&self.basis, Mode::Cavity(j), OpKind::Raise).expect("cavity exists");
            op.push(cd, Oscillation::tone(c.pump(), -c.pump_freq));
        }
        op
    }

    /// χ_j(n̂_j) as a diagonal operator on the cavity-inclusive basis.
    pub fn chi_operator(&self, j: usize) -> SparseOperator {
        let site = self.cavities[j].site;
        let tab = &self.couplings.cavities[j].chi;
        let d: Vec<f64> = (0..self.basis.len())
            .map(|i| tab[self.basis.occupation(i, Mode::Site(site))])
            .collect();
        SparseOperator::from_real_diagonal(&d)
    }

    /// χ_j(n̂_j) on the lattice-only basis.
    pub fn chi_lattice(&self, j: usize) -> SparseOperator {
        let site = self.cavities[j].site;
        let tab = &self.couplings.cavities[j].chi;
        let d: Vec<f64> = (0..self.lattice_basis.len())
            .map(|i| tab[self.lattice_basis.occupation(i, Mode::Site(site))])
            .collect();
        SparseOperator::from_real_diagonal(&d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveOptions {
    pub m_trunc: usize,
    /// Error threshold per cavity in units of g_j.
    pub threshold_g: f64,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        EffectiveOptions { m_trunc: DEFAULT_M_TRUNC, threshold_g: ERROR_THRESHOLD_G }
    }
}

fn lattice_layout(layout: &ModeLayout) -> ModeLayout {
    ModeLayout { n_cavities: 0, max_photons_per_cavity: 0, ..*layout }
}

fn hopping_terms(model: &FullModel, basis: &FockBasis) -> (Vec<(usize, usize, C64)>, Vec<BondCoupling>) {
    let mut trip = Vec::new();
    let mut bonds = Vec::new();
    for b in &model.lattice.bonds {
        let je = effective_tunneling(b.j, &model.drive, b.from, b.to);
        bonds.push(BondCoupling { from: b.from, to: b.to, re: je.re, im: je.im });
        let a = mode_operator(basis, Mode::Site(b.from), OpKind::Lower).expect("site exists");
        let ad = mode_operator(basis, Mode::Site(b.to), OpKind::Raise).expect("site exists");
        for (r, c, v) in ad.matmul(&a).entries() {
            trip.push((r, c, -je * v));
            trip.push((c, r, (-je * v).conj()));
        }
    }
    (trip, bonds)
}

/// Effective model on the model's own (cavity-inclusive) basis.
pub fn build_effective_model(model: &FullModel, opts: EffectiveOptions) -> Result<EffectiveModel> {
    let basis = model.basis.clone();
    let layout = *basis.layout();
    let cap = occupation_cap(&layout);
    let lattice_basis = enumerate_basis_with_limit(lattice_layout(&layout), usize::MAX)?;

    let mut cav_tables = Vec::new();
    for (j, c) in model.cavities.iter().enumerate() {
        let p = CouplingParams::new(c, &model.drive, model.u);
        let thr = opts.threshold_g * c.g.abs();
        let mut chi = Vec::new();
        let mut xi = Vec::new();
        let mut xt = Vec::new();
        for n in 0..=cap {
            let v = chi_xi_with_threshold(&p, n, opts.m_trunc, thr, j)?;
            chi.push(v.chi);
            xi.push(v.xi);
            xt.push(v.xi_tilde);
        }
        cav_tables.push(CavityCouplings { cavity: j, site: c.site, chi, xi, xi_tilde: xt });
    }

    let lattice_diag = |b: &FockBasis, i: usize| -> f64 {
        let mut e = 0.0;
        for s in 0..model.lattice.n_sites {
            let n = b.occupation(i, Mode::Site(s)) as f64;
            e += 0.5 * model.u * n * (n - 1.0);
        }
        for t in &cav_tables {
            let n = b.occupation(i, Mode::Site(t.site));
            if n > 0 {
                e += t.xi[n - 1] * n as f64;
            }
        }
        e
    };

    let (mut hs, bonds) = hopping_terms(model, &lattice_basis);
    for i in 0..lattice_basis.len() {
        hs.push((i, i, C64::new(lattice_diag(&lattice_basis, i), 0.0)));
    }
    let h_s_eff = SparseOperator::from_triplets(lattice_basis.len(), hs)?;

    let (mut hf, _) = hopping_terms(model, &basis);
    for i in 0..basis.len() {
        let mut e = lattice_diag(&basis, i);
        for (j, c) in model.cavities.iter().enumerate() {
            let p = basis.occupation(i, Mode::Cavity(j)) as f64;
            let n = basis.occupation(i, Mode::Site(c.site));
            e += (c.mode_energy() + cav_tables[j].chi[n]) * p;
        }
        hf.push((i, i, C64::new(e, 0.0)));
    }
    let h_static = SparseOperator::from_triplets(basis.len(), hf)?;

    let mut jumps = Vec::new();
    for (j, c) in model.cavities.iter().enumerate() {
        jumps.push(DressedJumps::new(&basis, j, c, &model.drive, model.u, opts.m_trunc, cap)?);
    }
    let warn = model.cavities.iter().map(|c| WARN_THRESHOLD_G * c.g.abs()).fold(0.0, f64::max);
    Ok(EffectiveModel {
        basis,
        lattice_basis,
        h_static,
        h_s_eff,
        cavities: model.cavities.clone(),
        jumps,
        couplings: DressedCouplings { cavities: cav_tables, bonds, m_trunc: opts.m_trunc },
        resonance: resonance_scan(model, opts.m_trunc, warn),
        m_trunc: opts.m_trunc,
    })
}

/// Effective model restricted to at most one lattice excitation, with the
/// single-excitation couplings ξ^(1), χ^(1).
pub fn single_excitation_restriction(model: &FullModel, opts: EffectiveOptions) -> Result<EffectiveModel> {
    let layout = ModeLayout { max_site_occ: 1, max_total_excitations: 1, ..*model.basis.layout() };
    let m1 = model.with_basis(layout, usize::MAX)?;
    let basis = m1.basis.clone();
    let lattice_basis = enumerate_basis_with_limit(lattice_layout(&layout), usize::MAX)?;

    let mut one = Vec::new();
    let mut cav_tables = Vec::new();
    for (j, c) in m1.cavities.iter().enumerate() {
        let p = CouplingParams::new(c, &m1.drive, m1.u);
        let (xi1, chi1) = single_excitation_couplings(&p, opts.m_trunc, opts.threshold_g * c.g.abs(), j)?;
        one.push((xi1, chi1));
        // tables in the general form: χ(0) = −ξ^(1), χ(1) − χ(0) = χ^(1)
        cav_tables.push(CavityCouplings {
            cavity: j,
            site: c.site,
            chi: vec![-xi1, chi1 - xi1],
            xi: vec![xi1, f64::NAN],
            xi_tilde: vec![0.0, 0.5 * chi1],
        });
    }

    let (mut hs, bonds) = hopping_terms(&m1, &lattice_basis);
    for i in 0..lattice_basis.len() {
        let mut e = 0.0;
        for (j, c) in m1.cavities.iter().enumerate() {
            e += one[j].0 * lattice_basis.occupation(i, Mode::Site(c.site)) as f64;
        }
        hs.push((i, i, C64::new(e, 0.0)));
    }
    let h_s_eff = SparseOperator::from_triplets(lattice_basis.len(), hs)?;

    let (mut hf, _) = hopping_terms(&m1, &basis);
    for i in 0..basis.len() {
        let mut e = 0.0;
        for (j, c) in m1.cavities.iter().enumerate() {
            let n = basis.occupation(i, Mode::Site(c.site)) as f64;
            let p = basis.occupation(i, Mode::Cavity(j)) as f64;
            let (xi1, chi1) = one[j];
            e += xi1 * (n - p) + chi1 * n * p + c.mode_energy() * p;
        }
        hf.push((i, i, C64::new(e, 0.0)));
    }
    let h_static = SparseOperator::from_triplets(basis.len(), hf)?;

    let mut jumps = Vec::new();
    for (j, c) in m1.cavities.iter().enumerate() {
        jumps.push(DressedJumps::new(&basis, j, c, &m1.drive, m1.u, opts.m_trunc, 1)?);
    }
    let warn = m1.cavities.iter().map(|c| WARN_THRESHOLD_G * c.g.abs()).fold(0.0, f64::max);
    Ok(EffectiveModel {
        basis,
        lattice_basis,
        h_static,
        h_s_eff,
        cavities: m1.cavities.clone(),
        jumps,
        couplings: DressedCouplings { cavities: cav_tables, bonds, m_trunc: opts.m_trunc },
        resonance: resonance_scan(&m1, opts.m_trunc, warn),
        m_trunc: opts.m_trunc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{flux_drive_pattern, FluxOptions, LatticeSpec};
    use std::f64::consts::PI;

    fn fig3c_model(n_max: usize, photons: usize, u: f64) -> FullModel {
        let lat = LatticeSpec::ladder(3);
        let drive = flux_drive_pattern(&lat, PI / 2.0, 20.0, FluxOptions::default()).unwrap();
        let cavs = vec![
            CavitySpec { site: 0, delta: 35.2, g: 1.0, pump_amp: (1.2, 0.0), pump_freq: -36.2, kappa: 0.1 },
            CavitySpec { site: 2, delta: 34.0, g: 1.0, pump_amp: (0.5, 0.0), pump_freq: -34.4, kappa: 0.1 },
        ];
        let layout = ModeLayout {
            n_sites: 6,
            n_cavities: 2,
            max_site_occ: n_max,
            max_total_excitations: n_max,
            max_photons_per_cavity: photons,
        };
        FullModel::new(lat, drive, cavs, u, layout, 100_000).unwrap()
    }

    #[test]
    fn zero_coupling() {
        let v = chi_xi(0.0, 35.2, 8.0, 20.0, 20.0, 1, 50).unwrap();
        assert_eq!(v, ChiXi { chi: 0.0, xi: 0.0, xi_tilde: 0.0 });
    }

    #[test]
    fn undriven_limit() {
        let (g, d, u) = (1.0, 35.2, 8.0);
        for n in 0..3usize {
            let v = chi_xi(g, d, u, 0.0, 20.0, n, 50).unwrap();
            let nf = n as f64;
            assert!((v.xi - g * g / (d + u * nf)).abs() < 1e-15);
            let xt = g * g * u * nf / ((d + u * (nf - 1.0)) * (d + u * nf));
            assert!((v.xi_tilde - xt).abs() < 1e-15);
            assert_eq!(v.chi, v.xi_tilde - v.xi);
        }
        let p = CouplingParams { g, delta: d, u, lambda: 0.0, omega: 20.0 };
        let (_, chi1) = single_excitation_couplings(&p, 50, 3.0, 0).unwrap();
        assert!((chi1 - 2.0 * g * g * u / (d * (d + u))).abs() < 1e-15);
    }

    #[test]
    fn resonance_is_reported_with_pair() {
        let e = chi_xi(1.0, 40.0, 0.0, 20.0, 20.0, 0, 50).unwrap_err();
        match e {
            Error::Resonance { n, m, .. } => assert_eq!((n, m), (0, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relabelled_sum_agrees() {
        // the same sum written with +mω in the first factor
        let (g, d, u, x, w) = (1.0, 35.2, -8.0, 1.0145, 20.0);
        let jm = bessel_j_symmetric(50, x);
        let n = 1.0;
        let mut alt = 0.0;
        for m in -50i64..=50 {
            let mf = m as f64;
            let j2 = jm[(m + 50) as usize].powi(2);
            alt += g * g * j2 * (u * n / ((d + u * (n - 1.0) + mf * w) * (d + u * n + mf * w)) - 1.0 / (d + u * n + mf * w));
        }
        let v = chi_xi(g, d, u, x * w, w, 1, 50).unwrap();
        assert!((v.chi - alt).abs() < 1e-14);
    }

    #[test]
    fn truncation_converged() {
        let a = chi_xi(1.0, 35.2, 8.0, 20.36, 20.0, 1, 50).unwrap();
        let b = chi_xi(1.0, 35.2, 8.0, 20.36, 20.0, 1, 100).unwrap();
        assert!((a.chi - b.chi).abs() <= 1e-10 * a.chi.abs());
        assert!((a.xi - b.xi).abs() <= 1e-10 * a.xi.abs());
    }

    #[test]
    fn single_excitation_matches_general_block() {
        let m = fig3c_model(1, 1, -8.0);
        let gen = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        let one = single_excitation_restriction(&m, EffectiveOptions::default()).unwrap();
        assert!(gen.h_static.max_abs_diff(&one.h_static) < 1e-12);
        assert!(gen.h_s_eff.max_abs_diff(&one.h_s_eff) < 1e-12);
    }

    #[test]
    fn hermitian_and_number_conserving() {
        let m = fig3c_model(2, 2, -3.0);
        let e = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        assert!(e.h_static.hermiticity_error() < 1e-12);
        assert!(e.h_s_eff.hermiticity_error() < 1e-12);
        let n: Vec<f64> = (0..e.lattice_basis.len()).map(|i| e.lattice_basis.lattice_excitations(i) as f64).collect();
        let nop = SparseOperator::from_real_diagonal(&n);
        assert!(e.h_s_eff.commutator(&nop).max_abs() < 1e-14);
    }

    #[test]
    fn jump_kernel_matches_explicit_sum() {
        let m = fig3c_model(2, 1, -3.0);
        let e = build_effective_model(&m, EffectiveOptions::default()).unwrap();
        let fam = &e.jumps[0];
        let k = fam.kernel();
        let mut direct = 0.0;
        for row in &fam.f {
            direct += row[1] * row[0];
        }
        assert!((k[1][0] - direct).abs() < 1e-15);
        // every â-part lowers the lattice excitation number by one
        for (mm, op) in fam.operators() {
            for (r, c, _) in op.entries() {
                let dn = e.basis.lattice_excitations(c) as i64 - e.basis.lattice_excitations(r) as i64;
                assert!(dn == 1 || (mm == 0 && dn == 0));
            }
        }
    }
}
