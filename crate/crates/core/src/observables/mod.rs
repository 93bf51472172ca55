//! Postselection and the measured quantities: eigenstate populations, site
//! densities, ladder currents and photon numbers.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::effective::BondCoupling;
use crate::error::{Error, Result};
use crate::fockspace::{mode_operator, FockBasis, Mode, OpKind};
use crate::model::LatticeSpec;
use crate::protocol::{effective_spectrum, EffectiveSpectrum};
use crate::sparse::SparseOperator;
use crate::C64;

pub const EMPTY_SECTOR: f64 = 1e-12;
pub const MULTIPLET_TOL: f64 = 1e-9;

/// (leg, rung) ↔ site id on a two-leg ladder; legs are numbered 1 and 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LadderIndex {
    rungs: usize,
}

impl LadderIndex {
    pub fn new(lattice: &LatticeSpec) -> Result<Self> {
        match lattice.geometry_tag.as_str() {
            "ladder" | "plaquette" if lattice.n_sites % 2 == 0 => Ok(LadderIndex { rungs: lattice.n_sites / 2 }),
            tag => Err(Error::Domain(format!("no ladder labelling for a {tag} lattice of {} sites", lattice.n_sites))),
        }
    }

    pub fn rungs(&self) -> usize {
        self.rungs
    }

    pub fn site(&self, leg: usize, rung: usize) -> usize {
        assert!((1..=2).contains(&leg) && rung < self.rungs, "({leg}, {rung}) is not a ladder site");
        (leg - 1) * self.rungs + rung
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        assert!(site < 2 * self.rungs, "site {site} outside the ladder");
        (site / self.rungs + 1, site % self.rungs)
    }
}

#[derive(Clone, Debug)]
pub struct PostselectedState {
    pub rho_ps: DMatrix<C64>,
    pub discarded: f64,
    pub sector: usize,
}

/// P_N ρ P_N / tr(P_N ρ) with P_N the lattice-excitation projector.
pub fn postselect(rho: &DMatrix<C64>, basis: &FockBasis, n: usize) -> Result<PostselectedState> {
    if rho.nrows() != basis.len() || rho.ncols() != basis.len() {
        return Err(Error::Domain(format!("density matrix is {}x{}, basis has {}", rho.nrows(), rho.ncols(), basis.len())));
    }
    if n > basis.layout().max_total_excitations {
        return Err(Error::Domain(format!("sector N = {n} lies outside the basis")));
    }
    let sec = basis.sector(n);
    let tr: f64 = sec.clone().map(|i| rho[(i, i)].re).sum();
    if !(tr > EMPTY_SECTOR) {
        return Err(Error::EmptySector(tr));
    }
    let dim = basis.len();
    let mut out = DMatrix::zeros(dim, dim);
    let inv = 1.0 / tr;
    for c in sec.clone() {
        for r in sec.clone() {
            out[(r, c)] = rho[(r, c)] * inv;
        }
    }
    Ok(PostselectedState { rho_ps: out, discarded: (1.0 - tr).clamp(0.0, 1.0), sector: n })
}

/// Trace over all cavity modes; the result lives on the lattice basis.
pub fn partial_trace_cavities(rho: &DMatrix<C64>, basis: &FockBasis) -> DMatrix<C64> {
    let nc = basis.cavity_dim();
    let nl = basis.lattice_dim();
    DMatrix::from_fn(nl, nl, |a, b| (0..nc).map(|c| rho[(a * nc + c, b * nc + c)]).sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct Multiplet {
    pub energy: f64,
    pub members: Vec<usize>,
    pub population: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Populations {
    /// Ascending.
    pub energies: Vec<f64>,
    pub populations: Vec<f64>,
    pub multiplets: Vec<Multiplet>,
}

/// p_η = ⟨η|ρ_S|η⟩ with ρ_S a lattice-basis density matrix.
pub fn populations_in(spectrum: &EffectiveSpectrum, rho_lattice: &DMatrix<C64>) -> Populations {
    let idx = &spectrum.indices;
    let k = idx.len();
    let block = DMatrix::from_fn(k, k, |a, b| rho_lattice[(idx[a], idx[b])]);
    let v = &spectrum.vectors;
    let t = &block * v;
    let pops: Vec<f64> = (0..k).map(|e| v.column(e).dotc(&t.column(e)).re).collect();
    let mut multiplets: Vec<Multiplet> = Vec::new();
    for (e, (&eps, &p)) in spectrum.energies.iter().zip(&pops).enumerate() {
        match multiplets.last_mut() {
            Some(m) if (eps - spectrum.energies[*m.members.last().unwrap()]).abs() < MULTIPLET_TOL => {
                m.members.push(e);
                m.population += p;
            }
            _ => multiplets.push(Multiplet { energy: eps, members: vec![e], population: p }),
        }
    }
    for m in &mut multiplets {
        m.energy = m.members.iter().map(|&e| spectrum.energies[e]).sum::<f64>() / m.members.len() as f64;
    }
    Populations { energies: spectrum.energies.clone(), populations: pops, multiplets }
}

/// Cavities are traced out first, then the sector eigenbasis of H_S^eff is applied.
pub fn eigenstate_populations(
    state: &PostselectedState,
    basis: &FockBasis,
    lattice_basis: &FockBasis,
    h_s_eff: &SparseOperator,
    n: usize,
) -> Result<Populations> {
    if state.sector != n {
        return Err(Error::Domain(format!("state was postselected on N = {}, not {n}", state.sector)));
    }
    let sp = effective_spectrum(h_s_eff, lattice_basis, n)?;
    Ok(populations_in(&sp, &partial_trace_cavities(&state.rho_ps, basis)))
}

/// tr(ρ O) for each operator.
pub fn expectations(rho: &DMatrix<C64>, ops: &[SparseOperator]) -> Result<Vec<C64>> {
    ops.iter()
        .map(|op| {
            if op.dim() != rho.nrows() || rho.nrows() != rho.ncols() {
                return Err(Error::Domain(format!("operator dimension {} does not match the state ({})", op.dim(), rho.nrows())));
            }
            Ok(op.expect_dm(rho))
        })
        .collect()
}

/// Site number operators on the given basis.
pub fn site_densities_ops(basis: &FockBasis) -> Vec<SparseOperator> {
    (0..basis.layout().n_sites)
        .map(|s| mode_operator(basis, Mode::Site(s), OpKind::Number).expect("site exists"))
        .collect()
}

pub fn photon_number_ops(basis: &FockBasis) -> Vec<SparseOperator> {
    (0..basis.layout().n_cavities)
        .map(|j| mode_operator(basis, Mode::Cavity(j), OpKind::Number).expect("cavity exists"))
        .collect()
}

/// i·J·(u â†_to â_from − u* â†_from â_to).
pub fn bond_current_operator(basis: &FockBasis, from: usize, to: usize, u: C64, j: f64) -> SparseOperator {
    let a = mode_operator(basis, Mode::Site(from), OpKind::Lower).expect("site exists");
    let ad = mode_operator(basis, Mode::Site(to), OpKind::Raise).expect("site exists");
    let hop = ad.matmul(&a).scale(u);
    hop.sub(&hop.adjoint()).scale(C64::new(0.0, j))
}

#[derive(Clone, Debug, Serialize)]
pub struct Currents {
    /// Indexed [leg − 1][r] for the bond (ℓ, r) → (ℓ, r + 1).
    pub leg: Vec<Vec<f64>>,
    /// Rung r, oriented from leg 2 to leg 1.
    pub rung: Vec<f64>,
    /// Largest imaginary part encountered.
    pub max_imag: f64,
}

#[derive(Clone, Debug)]
pub struct CurrentOperators {
    ladder: LadderIndex,
    leg: Vec<Vec<SparseOperator>>,
    rung: Vec<SparseOperator>,
}

impl CurrentOperators {
    /// Leg bonds bare, rung r with phase e^{−irΦ} (Landau gauge).
    pub fn landau(basis: &FockBasis, ladder: LadderIndex, flux: f64, j: f64) -> Self {
        Self::build(basis, ladder, j, |from, to| {
            let (lf, r) = ladder.coords(from);
            let (lt, _) = ladder.coords(to);
            if lf == lt {
                C64::new(1.0, 0.0)
            } else {
                C64::from_polar(1.0, -(r as f64) * flux)
            }
        })
    }

    /// Phases taken from the model's effective bonds, so the currents obey
    /// continuity with respect to the simulated Hamiltonian.
    pub fn from_bonds(basis: &FockBasis, ladder: LadderIndex, bonds: &[BondCoupling], j: f64) -> Self {
        Self::build(basis, ladder, j, |from, to| {
            for b in bonds {
                let z = C64::new(b.re, b.im);
                if z.norm() == 0.0 {
                    continue;
                }
                if b.from == from && b.to == to {
                    return z / z.norm();
                }
                if b.from == to && b.to == from {
                    return z.conj() / z.norm();
                }
            }
            C64::new(1.0, 0.0)
        })
    }

    fn build(basis: &FockBasis, ladder: LadderIndex, j: f64, phase: impl Fn(usize, usize) -> C64) -> Self {
        let r = ladder.rungs();
        let leg = (1..=2)
            .map(|l| {
                (0..r.saturating_sub(1))
                    .map(|k| {
                        let (f, t) = (ladder.site(l, k), ladder.site(l, k + 1));
                        bond_current_operator(basis, f, t, phase(f, t), j)
                    })
                    .collect()
            })
            .collect();
        let rung = (0..r)
            .map(|k| {
                let (f, t) = (ladder.site(2, k), ladder.site(1, k));
                bond_current_operator(basis, f, t, phase(f, t), j)
            })
            .collect();
        CurrentOperators { ladder, leg, rung }
    }

    pub fn ladder(&self) -> LadderIndex {
        self.ladder
    }

    pub fn evaluate(&self, rho: &DMatrix<C64>) -> Currents {
        let mut max_imag: f64 = 0.0;
        let mut ev = |op: &SparseOperator| {
            let z = op.expect_dm(rho);
            max_imag = max_imag.max(z.im.abs());
            z.re
        };
        let leg = self.leg.iter().map(|l| l.iter().map(&mut ev).collect()).collect();
        let rung = self.rung.iter().map(&mut ev).collect();
        Currents { leg, rung, max_imag }
    }
}

/// Leg and rung currents with the bare J and Landau-gauge rung phases.
pub fn currents(rho_lattice: &DMatrix<C64>, lattice_basis: &FockBasis, ladder: LadderIndex, flux: f64, j: f64) -> Currents {
    CurrentOperators::landau(lattice_basis, ladder, flux, j).evaluate(rho_lattice)
}
