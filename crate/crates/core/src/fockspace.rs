//! Truncated multimode Fock bases and the ladder operators built on them.
//!
//! States are ordered by total lattice excitation number (ascending), then
//! by lattice occupations in descending lexicographic order, then by cavity
//! occupations in ascending lexicographic order. Every lattice sector is a
//! contiguous index range, and the full index factorises as
//! `lattice_index * cavity_dim + cavity_index`.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::sparse::SparseOperator;
use crate::C64;

/// Default basis-size ceiling for density-matrix work.
pub const DEFAULT_DM_LIMIT: usize = 100_000;
/// Default basis-size ceiling for pure-state trajectories.
pub const DEFAULT_TRAJECTORY_LIMIT: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeLayout {
    pub n_sites: usize,
    pub n_cavities: usize,
    pub max_site_occ: usize,
    pub max_total_excitations: usize,
    pub max_photons_per_cavity: usize,
}

impl ModeLayout {
    pub fn validate(&self) -> Result<()> {
        if self.max_total_excitations > self.n_sites * self.max_site_occ {
            return Err(Error::Domain(format!(
                "max_total_excitations = {} exceeds n_sites * max_site_occ = {}",
                self.max_total_excitations,
                self.n_sites * self.max_site_occ
            )));
        }
        if self.max_site_occ > u8::MAX as usize || self.max_photons_per_cavity > u8::MAX as usize {
            return Err(Error::Domain("occupation caps above 255 are not supported".into()));
        }
        Ok(())
    }

    /// Number of lattice configurations within the caps.
    pub fn lattice_count(&self) -> u128 {
        let cap = self.max_site_occ.min(self.max_total_excitations);
        // ways[n] = configurations of the modes seen so far with n excitations
        let mut ways = vec![0u128; self.max_total_excitations + 1];
        ways[0] = 1;
        for _ in 0..self.n_sites {
            let mut next = vec![0u128; ways.len()];
            for (n, &w) in ways.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                for k in 0..=cap {
                    if n + k < next.len() {
                        next[n + k] = next[n + k].saturating_add(w);
                    }
                }
            }
            ways = next;
        }
        ways.iter().fold(0u128, |a, &b| a.saturating_add(b))
    }

    pub fn cavity_count(&self) -> u128 {
        (self.max_photons_per_cavity as u128 + 1)
            .checked_pow(self.n_cavities as u32)
            .unwrap_or(u128::MAX)
    }

    /// Combinatorial size of the basis.
    pub fn count(&self) -> u128 {
        self.lattice_count().saturating_mul(self.cavity_count())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Site(usize),
    Cavity(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Lower,
    Raise,
    Number,
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    layout: ModeLayout,
    lattice_states: Vec<Vec<u8>>,
    lattice_index: HashMap<Vec<u8>, usize>,
    // lattice index where each excitation sector starts, plus the end
    sector_start: Vec<usize>,
    cavity_dim: usize,
}

pub fn enumerate_basis(layout: ModeLayout) -> Result<FockBasis> {
    enumerate_basis_with_limit(layout, DEFAULT_DM_LIMIT)
}

pub fn enumerate_basis_with_limit(layout: ModeLayout, limit: usize) -> Result<FockBasis> {
    layout.validate()?;
    let count = layout.count();
    if count > limit as u128 {
        return Err(Error::Oversize { count, limit });
    }
    let m = layout.n_sites;
    let cap = layout.max_site_occ;
    let mut lattice_states = Vec::new();
    let mut sector_start = Vec::with_capacity(layout.max_total_excitations + 2);
    let mut cur = vec![0u8; m];
    for n in 0..=layout.max_total_excitations {
        sector_start.push(lattice_states.len());
        fill_sector(&mut cur, 0, n, cap, &mut lattice_states);
    }
    sector_start.push(lattice_states.len());
    let lattice_index = lattice_states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i))
        .collect();
    Ok(FockBasis {
        layout,
        lattice_states,
        lattice_index,
        sector_start,
        cavity_dim: layout.cavity_count() as usize,
    })
}

// Occupations of modes `pos..` summing to `left`, descending lexicographic.
fn fill_sector(cur: &mut Vec<u8>, pos: usize, left: usize, cap: usize, out: &mut Vec<Vec<u8>>) {
    if pos == cur.len() {
        if left == 0 {
            out.push(cur.clone());
        }
        return;
    }
    let rest = cur.len() - pos - 1;
    for k in (0..=left.min(cap)).rev() {
        if left - k > rest * cap {
            continue;
        }
        cur[pos] = k as u8;
        fill_sector(cur, pos + 1, left - k, cap, out);
    }
    cur[pos] = 0;
}

impl FockBasis {
    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.lattice_states.len() * self.cavity_dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lattice_dim(&self) -> usize {
        self.lattice_states.len()
    }

    pub fn cavity_dim(&self) -> usize {
        self.cavity_dim
    }

    pub fn lattice_state(&self, lat: usize) -> &[u8] {
        &self.lattice_states[lat]
    }

    pub fn lattice_index_of(&self, occ: &[u8]) -> Option<usize> {
        self.lattice_index.get(occ).copied()
    }

    /// Photon number of cavity `j` in cavity configuration `cav`.
    pub fn cavity_occ(&self, cav: usize, j: usize) -> usize {
        let base = self.layout.max_photons_per_cavity + 1;
        let shift = self.layout.n_cavities - 1 - j;
        (cav / base.pow(shift as u32)) % base
    }

    /// Full occupation vector (lattice modes first, then cavities).
    pub fn state(&self, i: usize) -> Vec<u8> {
        let lat = i / self.cavity_dim;
        let cav = i % self.cavity_dim;
        let mut v = self.lattice_states[lat].clone();
        for j in 0..self.layout.n_cavities {
            v.push(self.cavity_occ(cav, j) as u8);
        }
        v
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        let m = self.layout.n_sites;
        if occ.len() != m + self.layout.n_cavities {
            return None;
        }
        let lat = self.lattice_index_of(&occ[..m])?;
        let base = self.layout.max_photons_per_cavity + 1;
        let mut cav = 0;
        for &p in &occ[m..] {
            if p as usize >= base {
                return None;
            }
            cav = cav * base + p as usize;
        }
        Some(lat * self.cavity_dim + cav)
    }

    pub fn occupation(&self, i: usize, mode: Mode) -> usize {
        match mode {
            Mode::Site(j) => self.lattice_states[i / self.cavity_dim][j] as usize,
            Mode::Cavity(j) => self.cavity_occ(i % self.cavity_dim, j),
        }
    }

    pub fn lattice_excitations(&self, i: usize) -> usize {
        self.lattice_states[i / self.cavity_dim]
            .iter()
            .map(|&x| x as usize)
            .sum()
    }

    /// Lattice-index range of the N-excitation sector.
    pub fn lattice_sector(&self, n: usize) -> Range<usize> {
        if n + 1 >= self.sector_start.len() {
            return 0..0;
        }
        self.sector_start[n]..self.sector_start[n + 1]
    }

    /// Full-index range of states with N lattice excitations.
    pub fn sector(&self, n: usize) -> Range<usize> {
        let r = self.lattice_sector(n);
        r.start * self.cavity_dim..r.end * self.cavity_dim
    }

    fn check_mode(&self, mode: Mode) -> Result<()> {
        match mode {
            Mode::Site(j) if j < self.layout.n_sites => Ok(()),
            Mode::Cavity(j) if j < self.layout.n_cavities => Ok(()),
            _ => Err(Error::Domain(format!("unknown mode {mode:?}"))),
        }
    }

    /// Index reached by adding `delta` quanta to `mode` in state `i`.
    pub fn shifted(&self, i: usize, mode: Mode, delta: i32) -> Option<usize> {
        let lat = i / self.cavity_dim;
        let cav = i % self.cavity_dim;
        match mode {
            Mode::Site(j) => {
                let mut occ = self.lattice_states[lat].clone();
                let n = occ[j] as i32 + delta;
                if n < 0 {
                    return None;
                }
                occ[j] = n as u8;
                self.lattice_index_of(&occ).map(|l| l * self.cavity_dim + cav)
            }
            Mode::Cavity(j) => {
                let p = self.cavity_occ(cav, j) as i32 + delta;
                if p < 0 || p as usize > self.layout.max_photons_per_cavity {
                    return None;
                }
                let base = self.layout.max_photons_per_cavity + 1;
                let stride = base.pow((self.layout.n_cavities - 1 - j) as u32) as i64;
                let new_cav = cav as i64 + delta as i64 * stride;
                Some(lat * self.cavity_dim + new_cav as usize)
            }
        }
    }
}

pub fn mode_operator(basis: &FockBasis, mode: Mode, kind: OpKind) -> Result<SparseOperator> {
    basis.check_mode(mode)?;
    let dim = basis.len();
    match kind {
        OpKind::Number => {
            let d: Vec<f64> = (0..dim).map(|i| basis.occupation(i, mode) as f64).collect();
            Ok(SparseOperator::from_real_diagonal(&d))
        }
        OpKind::Lower => {
            let mut t = Vec::new();
            for i in 0..dim {
                let n = basis.occupation(i, mode);
                if n == 0 {
                    continue;
                }
                if let Some(k) = basis.shifted(i, mode, -1) {
                    t.push((k, i, C64::new((n as f64).sqrt(), 0.0)));
                }
            }
            SparseOperator::from_triplets(dim, t)
        }
        OpKind::Raise => Ok(mode_operator(basis, mode, OpKind::Lower)?.adjoint()),
    }
}

/// Diagonal projector onto states with N lattice excitations.
pub fn projector_total_excitations(basis: &FockBasis, n: usize) -> Result<SparseOperator> {
    if n > basis.layout.max_total_excitations {
        return Err(Error::Domain(format!(
            "sector N = {n} exceeds max_total_excitations = {}",
            basis.layout.max_total_excitations
        )));
    }
    let r = basis.sector(n);
    let d: Vec<f64> = (0..basis.len())
        .map(|i| if r.contains(&i) { 1.0 } else { 0.0 })
        .collect();
    Ok(SparseOperator::from_real_diagonal(&d))
}
