//! Lattices, drives, cavities and the full time-periodic Hamiltonian.
//!
//! Conventions: ħ = J = 1. Bond phases follow
//! θ_{ℓℓ′}(t) = (2λ/ω) sin((φ_ℓ − φ_ℓ′)/2) sin(ωt − (φ_ℓ + φ_ℓ′)/2) + (ν_ℓ − ν_ℓ′) ωt,
//! which equals ϑ_ℓ(t) − ϑ_ℓ′(t) for the single-site phase
//! ϑ_ℓ(t) = ν_ℓ ωt + (λ/ω) cos(ωt − φ_ℓ). The atom-cavity exchange carries
//! e^{−iϑ_j(t)}, so hopping and exchange are written in one rotating frame.
//! Cavity modes sit at energy −δ_j in this frame.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::effective::bessel::{bessel_j, j0_j1_crossing, j1_over_j0_root};
use crate::error::{Error, Result};
use crate::fockspace::{enumerate_basis_with_limit, mode_operator, FockBasis, Mode, ModeLayout, OpKind};
use crate::sparse::SparseOperator;
use crate::tdop::{Oscillation, TdOperator};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub from: usize,
    pub to: usize,
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n_sites: usize,
    pub bonds: Vec<Bond>,
    pub geometry_tag: String,
}

pub const SUPPORTED_GEOMETRIES: &[&str] = &["ladder", "plaquette", "rhombic"];

impl LatticeSpec {
    pub fn new(n_sites: usize, bonds: Vec<Bond>, geometry_tag: &str) -> Result<Self> {
        let l = LatticeSpec { n_sites, bonds, geometry_tag: geometry_tag.to_string() };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for b in &self.bonds {
            if b.from >= self.n_sites || b.to >= self.n_sites {
                return Err(Error::Config(format!("bond {}-{} has an invalid endpoint", b.from, b.to)));
            }
            if b.from == b.to {
                return Err(Error::Config(format!("self-bond on site {}", b.from)));
            }
            let key = (b.from.min(b.to), b.from.max(b.to));
            if !seen.insert(key) {
                return Err(Error::Config(format!("duplicate bond {}-{}", b.from, b.to)));
            }
        }
        Ok(())
    }

    /// Two-leg ladder; site (leg, rung) has id leg * rungs + rung (leg 0 is the upper leg).
    pub fn ladder(rungs: usize) -> Self {
        let mut bonds = Vec::new();
        for leg in 0..2 {
            for r in 0..rungs.saturating_sub(1) {
                bonds.push(Bond { from: leg * rungs + r, to: leg * rungs + r + 1, j: 1.0 });
            }
        }
        for r in 0..rungs {
            bonds.push(Bond { from: r, to: rungs + r, j: 1.0 });
        }
        LatticeSpec { n_sites: 2 * rungs, bonds, geometry_tag: "ladder".into() }
    }

    /// Single square plaquette, laid out as a two-rung ladder.
    pub fn plaquette() -> Self {
        let mut l = Self::ladder(2);
        l.geometry_tag = "plaquette".into();
        l
    }

    /// Diamond chain of corner-sharing rhombi.
    ///
    /// Cell c has hub 3c, upper site 3c + 1, lower site 3c + 2; the last hub is 3 * cells.
    pub fn rhombic(cells: usize) -> Self {
        let mut bonds = Vec::new();
        for c in 0..cells {
            let h = 3 * c;
            bonds.push(Bond { from: h, to: h + 1, j: 1.0 });
            bonds.push(Bond { from: h + 1, to: h + 3, j: 1.0 });
            bonds.push(Bond { from: h, to: h + 2, j: 1.0 });
            bonds.push(Bond { from: h + 2, to: h + 3, j: 1.0 });
        }
        LatticeSpec { n_sites: 3 * cells + 1, bonds, geometry_tag: "rhombic".into() }
    }

    pub fn rungs(&self) -> usize {
        self.n_sites / 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub omega: f64,
    pub lambda: f64,
    pub phases: Vec<f64>,
    pub offsets: Vec<i64>,
    #[serde(default)]
    pub delta_static: f64,
}

impl DriveSpec {
    pub fn undriven(n_sites: usize, omega: f64) -> Self {
        DriveSpec {
            omega,
            lambda: 0.0,
            phases: vec![0.0; n_sites],
            offsets: vec![0; n_sites],
            delta_static: 0.0,
        }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        if self.phases.len() != n_sites || self.offsets.len() != n_sites {
            return Err(Error::Config(format!(
                "drive has {} phases and {} offsets for {} sites",
                self.phases.len(),
                self.offsets.len(),
                n_sites
            )));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config(format!("omega must be positive, got {}", self.omega)));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    pub site: usize,
    pub delta: f64,
    pub g: f64,
    /// Pump amplitude E as (re, im).
    pub pump_amp: (f64, f64),
    /// Pump frequency ω_j in the rotating frame.
    #[serde(default)]
    pub pump_freq: f64,
    pub kappa: f64,
}

impl CavitySpec {
    pub fn pump(&self) -> C64 {
        C64::new(self.pump_amp.0, self.pump_amp.1)
    }

    /// Cavity-mode energy in the rotating frame.
    pub fn mode_energy(&self) -> f64 {
        -self.delta
    }

    /// Pump frequency that puts the cavity-pump detuning at `d`.
    pub fn pump_freq_for_detuning(&self, d: f64) -> f64 {
        self.mode_energy() - d
    }

    /// Cavity-pump detuning d_j.
    pub fn detuning(&self) -> f64 {
        self.mode_energy() - self.pump_freq
    }
}

/// θ_{ℓℓ′}(t).
pub fn peierls_phase(drive: &DriveSpec, l: usize, lp: usize, t: f64) -> f64 {
    let w = drive.omega;
    let (pl, plp) = (drive.phases[l], drive.phases[lp]);
    let nu = (drive.offsets[l] - drive.offsets[lp]) as f64;
    2.0 * drive.lambda / w * ((pl - plp) / 2.0).sin() * (w * t - (pl + plp) / 2.0).sin() + nu * w * t
}

/// Single-site phase ϑ_ℓ(t) whose differences give the bond phases.
pub fn site_phase(drive: &DriveSpec, l: usize, t: f64) -> f64 {
    let w = drive.omega;
    drive.offsets[l] as f64 * w * t + drive.lambda / w * (w * t - drive.phases[l]).cos()
}

// Coefficient of a†_{ℓ′} a_ℓ: amp · e^{iθ_{ℓ′ℓ}(t)}.
fn bond_oscillation(drive: &DriveSpec, l: usize, lp: usize, amp: C64) -> Oscillation {
    let w = drive.omega;
    let (pl, plp) = (drive.phases[l], drive.phases[lp]);
    Oscillation {
        amp,
        rate: (drive.offsets[lp] - drive.offsets[l]) as f64 * w,
        wiggle: 2.0 * drive.lambda / w * ((plp - pl) / 2.0).sin(),
        freq: w,
        offset: (pl + plp) / 2.0,
    }
}

// amp · e^{−iϑ_j(t)} · e^{i rate t} for a site with ν_j = 0.
fn exchange_oscillation(drive: &DriveSpec, j: usize, amp: C64, rate: f64) -> Oscillation {
    let w = drive.omega;
    // −(λ/ω) cos(ωt − φ) = −(λ/ω) sin(ωt − φ + π/2)
    Oscillation {
        amp,
        rate,
        wiggle: -drive.lambda / w,
        freq: w,
        offset: drive.phases[j] - PI / 2.0,
    }
}

#[derive(Clone, Debug)]
pub struct FullModel {
    pub lattice: LatticeSpec,
    pub drive: DriveSpec,
    pub cavities: Vec<CavitySpec>,
    pub u: f64,
    pub basis: FockBasis,
}

impl FullModel {
    pub fn new(
        lattice: LatticeSpec,
        drive: DriveSpec,
        cavities: Vec<CavitySpec>,
        u: f64,
        layout: ModeLayout,
        basis_limit: usize,
    ) -> Result<Self> {
        lattice.validate()?;
        drive.validate(lattice.n_sites)?;
        if layout.n_sites != lattice.n_sites || layout.n_cavities != cavities.len() {
            return Err(Error::Config(format!(
                "layout has {} sites / {} cavities, model has {} / {}",
                layout.n_sites,
                layout.n_cavities,
                lattice.n_sites,
                cavities.len()
            )));
        }
        let mut used = HashSet::new();
        for (k, c) in cavities.iter().enumerate() {
            if c.site >= lattice.n_sites {
                return Err(Error::Config(format!("cavity {k} attached to missing site {}", c.site)));
            }
            if !used.insert(c.site) {
                return Err(Error::Config(format!("two cavities attached to site {}", c.site)));
            }
            if c.kappa < 0.0 {
                return Err(Error::Config(format!("cavity {k} has negative kappa")));
            }
            if drive.offsets[c.site] != 0 {
                return Err(Error::Config(format!(
                    "cavity {k} sits on site {} with potential offset nu = {}; cavities need nu = 0",
                    c.site, drive.offsets[c.site]
                )));
            }
        }
        let basis = enumerate_basis_with_limit(layout, basis_limit)?;
        Ok(FullModel { lattice, drive, cavities, u, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn period(&self) -> f64 {
        self.drive.period()
    }

    pub fn with_basis(&self, layout: ModeLayout, limit: usize) -> Result<FullModel> {
        FullModel::new(self.lattice.clone(), self.drive.clone(), self.cavities.clone(), self.u, layout, limit)
    }

    /// Diagonal of the static part: U/2 n(n − 1) plus cavity mode energies.
    pub fn static_diagonal(&self) -> Vec<f64> {
        let b = &self.basis;
        (0..b.len())
            .map(|i| {
                let mut e = 0.0;
                for s in 0..self.lattice.n_sites {
                    let n = b.occupation(i, Mode::Site(s)) as f64;
                    e += 0.5 * self.u * n * (n - 1.0);
                }
                for (j, c) in self.cavities.iter().enumerate() {
                    e += c.mode_energy() * b.occupation(i, Mode::Cavity(j)) as f64;
                }
                e
            })
            .collect()
    }

    fn hop_op(&self, l: usize, lp: usize) -> SparseOperator {
        let a = mode_operator(&self.basis, Mode::Site(l), OpKind::Lower).expect("site exists");
        let ad = mode_operator(&self.basis, Mode::Site(lp), OpKind::Raise).expect("site exists");
        ad.matmul(&a)
    }

    fn exchange_op(&self, j: usize) -> SparseOperator {
        let site = self.cavities[j].site;
        let a = mode_operator(&self.basis, Mode::Site(site), OpKind::Lower).expect("site exists");
        let cd = mode_operator(&self.basis, Mode::Cavity(j), OpKind::Raise).expect("cavity exists");
        cd.matmul(&a)
    }

    /// T-periodic part (no pumps) as a time-dependent operator.
    pub fn periodic_operator(&self) -> TdOperator {
        let mut op = TdOperator::new(SparseOperator::from_real_diagonal(&self.static_diagonal()));
        for b in &self.lattice.bonds {
            op.push(self.hop_op(b.from, b.to), bond_oscillation(&self.drive, b.from, b.to, C64::new(-b.j, 0.0)));
        }
        for (j, c) in self.cavities.iter().enumerate() {
            op.push(self.exchange_op(j), exchange_oscillation(&self.drive, c.site, C64::new(c.g, 0.0), 0.0));
        }
        op
    }

    /// Full Hamiltonian including the pump terms.
    pub fn operator(&self) -> TdOperator {
        let mut op = self.periodic_operator();
        for (j, c) in self.cavities.iter().enumerate() {
            let cd = mode_operator(&self.basis, Mode::Cavity(j), OpKind::Raise).expect("cavity exists");
            op.push(cd, Oscillation::tone(c.pump(), -c.pump_freq));
        }
        op
    }

    /// H(t) after displacing each cavity by β_j(t) = α_j e^{−iω_j t}: pumps
    /// are replaced by the atom drive g α_j* e^{iω_j t} e^{−iϑ_j} â_j + h.c.
    pub fn displaced_operator(&self, alphas: &[C64]) -> TdOperator {
        let mut op = self.periodic_operator();
        for (j, c) in self.cavities.iter().enumerate() {
            let a = mode_operator(&self.basis, Mode::Site(c.site), OpKind::Lower).expect("site exists");
            op.push(a, exchange_oscillation(&self.drive, c.site, c.g * alphas[j].conj(), c.pump_freq));
        }
        op
    }

    /// H(t) in the frame rotating with the drive.
    pub fn build_full_hamiltonian(&self, t: f64) -> SparseOperator {
        self.operator().at(t)
    }

    /// Fourier components H_m of the pump-free part, H(t) = Σ_m H_m e^{imωt}.
    pub fn fourier_components(&self, m_max: usize) -> Vec<(i64, SparseOperator)> {
        let dim = self.dim();
        let mm = m_max as i64;
        let mut trip: Vec<Vec<(usize, usize, C64)>> = vec![Vec::new(); 2 * m_max + 1];
        let slot = |m: i64| (m + mm) as usize;
        for (r, c, v) in SparseOperator::from_real_diagonal(&self.static_diagonal()).entries() {
            trip[slot(0)].push((r, c, v));
        }
        for b in &self.lattice.bonds {
            let op = self.hop_op(b.from, b.to);
            for m in -mm..=mm {
                let jm = dressed_tunneling_component(b.j, &self.drive, b.from, b.to, m);
                let amp = -jm;
                if amp.norm() == 0.0 {
                    continue;
                }
                for (r, c, v) in op.entries() {
                    trip[slot(m)].push((r, c, amp * v));
                    if -m >= -mm && -m <= mm {
                        trip[slot(-m)].push((c, r, (amp * v).conj()));
                    }
                }
            }
        }
        for (j, c) in self.cavities.iter().enumerate() {
            let op = self.exchange_op(j);
            for m in -mm..=mm {
                let gm = cavity_coupling_component(c.g, &self.drive, c.site, m);
                if gm.norm() == 0.0 {
                    continue;
                }
                for (r, cc, v) in op.entries() {
                    trip[slot(m)].push((r, cc, gm * v));
                    trip[slot(-m)].push((cc, r, (gm * v).conj()));
                }
            }
        }
        trip.into_iter()
            .enumerate()
            .map(|(k, t)| (k as i64 - mm, SparseOperator::from_triplets(dim, t).expect("indices in range")))
            .collect()
    }
}

/// J_{ℓℓ′,m}: m-th Fourier component of J e^{iθ_{ℓ′ℓ}(t)}.
pub fn dressed_tunneling_component(j_bond: f64, drive: &DriveSpec, l: usize, lp: usize, m: i64) -> C64 {
    let (pl, plp) = (drive.phases[l], drive.phases[lp]);
    let nu = drive.offsets[lp] - drive.offsets[l];
    let z = 2.0 * drive.lambda / drive.omega * ((plp - pl) / 2.0).sin();
    let k = m - nu;
    j_bond * bessel_j(k, z) * C64::from_polar(1.0, -(k as f64) * (plp + pl) / 2.0)
}

/// g_{j,m}: m-th Fourier component of g e^{−iϑ_j(t)} (site with ν = 0).
///
/// Equals g J_m(λ/ω) e^{−im(π/2 + φ_j)}; satisfies g*_{j,−m} = (−1)^m g_{j,m}.
pub fn cavity_coupling_component(g: f64, drive: &DriveSpec, site: usize, m: i64) -> C64 {
    let x = drive.lambda / drive.omega;
    g * bessel_j(m, x) * C64::from_polar(1.0, -(m as f64) * (PI / 2.0 + drive.phases[site]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxOptions {
    /// Ratio |J_rung^eff / J_leg^eff| for ladders; 1 gives uniform bonds.
    pub rung_ratio: f64,
}

impl Default for FluxOptions {
    fn default() -> Self {
        FluxOptions { rung_ratio: 1.0 }
    }
}

/// Drive amplitude solving J_0(x) = J_1(x), x = 2λ/ω sin(Φ/2).
pub fn flux_lambda(flux: f64, omega: f64, opts: FluxOptions) -> Result<f64> {
    let s = (flux / 2.0).sin();
    if !(s.abs() > 1e-6) || !flux.is_finite() {
        return Err(Error::Domain(format!(
            "flux {flux} gives sin(flux/2) = {s:.3e}; the drive amplitude diverges"
        )));
    }
    if !(opts.rung_ratio > 0.0) {
        return Err(Error::Domain("rung_ratio must be positive".into()));
    }
    let x = if opts.rung_ratio == 1.0 { j0_j1_crossing() } else { j1_over_j0_root(opts.rung_ratio) };
    Ok(x * omega / (2.0 * s.abs()))
}

/// Drive phases, offsets and amplitude giving flux Φ per plaquette.
pub fn flux_drive_pattern(lattice: &LatticeSpec, flux: f64, omega: f64, opts: FluxOptions) -> Result<DriveSpec> {
    let lambda = flux_lambda(flux, omega, opts)?;
    let n = lattice.n_sites;
    let mut phases = vec![0.0; n];
    let mut offsets = vec![0i64; n];
    match lattice.geometry_tag.as_str() {
        "ladder" | "plaquette" => {
            if n % 2 != 0 {
                return Err(Error::Config("ladder needs an even number of sites".into()));
            }
            let rungs = n / 2;
            for r in 0..rungs {
                phases[r] = r as f64 * flux + flux / 2.0;
                phases[rungs + r] = r as f64 * flux - flux / 2.0;
                offsets[rungs + r] = 1;
            }
        }
        "rhombic" => {
            if n % 3 != 1 || n < 4 {
                return Err(Error::Config("rhombic chain needs 3 * cells + 1 sites".into()));
            }
            if opts.rung_ratio != 1.0 {
                return Err(Error::Config("rung_ratio applies to ladders only".into()));
            }
            let cells = (n - 1) / 3;
            let centre = (cells / 2) as i64;
            for c in 0..cells {
                let h = 3 * c;
                let cc = c as i64 - centre;
                phases[h] = flux / 2.0;
                offsets[h] = cc;
                phases[h + 1] = 1.5 * flux;
                offsets[h + 1] = cc;
                phases[h + 2] = -flux / 2.0;
                offsets[h + 2] = cc + 1;
            }
            phases[n - 1] = flux / 2.0;
            offsets[n - 1] = cells as i64 - centre;
        }
        other => {
            return Err(Error::Config(format!(
                "unsupported geometry '{other}'; supported: {}",
                SUPPORTED_GEOMETRIES.join(", ")
            )))
        }
    }
    Ok(DriveSpec { omega, lambda, phases, offsets, delta_static: 0.0 })
}
