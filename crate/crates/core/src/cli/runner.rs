//! Experiment orchestration: model resolution, design, validation and the
//! time-evolution runners.

use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{ExperimentConfig, InitialState, ModelKind, Observable, Runner};
use crate::dynamics::{
    displace_frame, displace_full, integrate_master_observed, mcwf_mixture, IntegratorOptions, MasterOptions,
    McwfOptions, ModelRef, StepStats,
};
use crate::effective::{build_effective_model, EffectiveModel, EffectiveOptions};
use crate::error::{Error, Result};
use crate::fockspace::{mode_operator, FockBasis, Mode, ModeLayout, OpKind};
use crate::model::{DriveSpec, FullModel, LatticeSpec};
use crate::observables::{CurrentOperators, LadderIndex};
use crate::protocol::{
    design_cooling, effective_spectrum, validate_regime, EffectiveSpectrum, ProtocolDesign, Status, ValidityReport,
};
use crate::sparse::SparseOperator;
use crate::C64;

/// Everything fixed before time evolution.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub lattice: LatticeSpec,
    pub drive: DriveSpec,
    /// Designed model on the effective (N-excitation) layout.
    pub model: FullModel,
    pub eff: EffectiveModel,
    pub spectrum: EffectiveSpectrum,
    pub design: ProtocolDesign,
    pub validity: ValidityReport,
}

impl Prepared {
    pub fn sector(&self) -> usize {
        self.spectrum.sector
    }

    /// The designed driven model on the full-run layout: N + 1 excitations.
    pub fn full_model(&self, cfg: &ExperimentConfig) -> Result<FullModel> {
        let n = cfg.model.excitations + 1;
        let layout = ModeLayout {
            n_sites: self.lattice.n_sites,
            n_cavities: self.model.cavities.len(),
            max_site_occ: n,
            max_total_excitations: n,
            max_photons_per_cavity: cfg.run.full_photons.unwrap_or(cfg.model.photons),
        };
        self.model.with_basis(layout, cfg.model.basis_limit)
    }
}

fn effective_options(cfg: &ExperimentConfig) -> EffectiveOptions {
    EffectiveOptions { m_trunc: cfg.model.m_trunc, threshold_g: cfg.model.resonance_threshold_g }
}

/// Build the effective model, its spectrum, the cooling design and the
/// regime report. Does not refuse on a failing report.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let m = &cfg.model;
    let lattice = m.lattice.build()?;
    let drive = m.drive.build(&lattice)?;
    let assigned: Vec<usize> = cfg.design.assignments.iter().map(|a| a.cavity).collect();
    let mut cavities = Vec::new();
    for (j, c) in m.cavities.iter().enumerate() {
        if !assigned.contains(&j) && c.detuning.is_none() && (c.pump[0] != 0.0 || c.pump[1] != 0.0) {
            return Err(Error::Config(format!(
                "model.cavities[{j}] is pumped but has no detuning and no design assignment"
            )));
        }
        cavities.push(c.build(drive.omega, j)?);
    }
    let n = m.excitations;
    let layout = ModeLayout {
        n_sites: lattice.n_sites,
        n_cavities: cavities.len(),
        max_site_occ: if m.hardcore { 1 } else { n },
        max_total_excitations: n,
        max_photons_per_cavity: if cavities.is_empty() { 0 } else { m.photons },
    };
    let model0 = FullModel::new(lattice.clone(), drive.clone(), cavities, m.u, layout, m.basis_limit)?;
    let opts = effective_options(cfg);
    let eff0 = build_effective_model(&model0, opts)?;
    let spectrum = effective_spectrum(&eff0.h_s_eff, &eff0.lattice_basis, n)?;
    let design = design_cooling(&eff0, &spectrum, &cfg.design.assignments)?;
    let model = design.apply(&model0)?;
    let eff = build_effective_model(&model, opts)?;
    let validity = validate_regime(&model, &eff.resonance, Some(&spectrum), &design, cfg.design.thresholds);
    Ok(Prepared { lattice, drive, model, eff, spectrum, design, validity })
}

/// Refuse a failing regime report unless forced.
pub fn check_regime(p: &Prepared, force: bool) -> Result<()> {
    if p.validity.overall() != Status::Fail || force {
        return Ok(());
    }
    let f: Vec<String> = p.validity.failures().iter().map(|c| format!("{} ({}, ratio {:.3})", c.name, c.detail, c.ratio)).collect();
    Err(Error::Regime(format!("failed conditions: {}; rerun with --force to override", f.join("; "))))
}

/// Sample instants k·dt up to t_final, snapped to whole drive periods when
/// stroboscopic.
pub fn sample_times(t_final: f64, dt: f64, period: Option<f64>) -> Vec<f64> {
    let count = (t_final / dt + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let mut t = k as f64 * dt;
        if let Some(p) = period {
            t = (t / p).round() * p;
        }
        if ts.last().map_or(true, |&l| t > l) {
            ts.push(t);
        }
    }
    ts
}

/// Pure states of an equal-weight mixture on `basis`, cavities in the
/// displaced vacuum.
pub fn initial_states(init: &InitialState, p: &Prepared, basis: &FockBasis) -> Result<Vec<Vec<C64>>> {
    let n_sites = p.lattice.n_sites;
    let ncav = basis.layout().n_cavities;
    let index = |occ: &[u8]| -> Result<usize> {
        let mut full = occ.to_vec();
        full.extend(std::iter::repeat(0).take(ncav));
        basis
            .index_of(&full)
            .ok_or_else(|| Error::Config(format!("initial occupations {occ:?} are outside the truncated basis")))
    };
    let unit = |i: usize| {
        let mut v = vec![C64::new(0.0, 0.0); basis.len()];
        v[i] = C64::new(1.0, 0.0);
        v
    };
    let check_n = |occ: &[u8]| -> Result<()> {
        let tot: usize = occ.iter().map(|&x| x as usize).sum();
        if tot != p.sector() {
            return Err(Error::Config(format!("initial state has {tot} excitations, the target sector has {}", p.sector())));
        }
        Ok(())
    };
    match init {
        InitialState::Sites { sites } => {
            let mut occ = vec![0u8; n_sites];
            for &s in sites {
                if s >= n_sites {
                    return Err(Error::Config(format!("run.initial.sites: site {s} does not exist")));
                }
                occ[s] += 1;
            }
            check_n(&occ)?;
            Ok(vec![unit(index(&occ)?)])
        }
        InitialState::Fock { occupations } => {
            if occupations.len() != n_sites {
                return Err(Error::Config(format!(
                    "run.initial.occupations has {} entries for {n_sites} sites",
                    occupations.len()
                )));
            }
            check_n(occupations)?;
            Ok(vec![unit(index(occupations)?)])
        }
        InitialState::Eigenstate { index: eta } => {
            if *eta >= p.spectrum.len() {
                return Err(Error::Config(format!("run.initial.index {eta}: the sector has {} states", p.spectrum.len())));
            }
            let lb = &p.eff.lattice_basis;
            let mut v = vec![C64::new(0.0, 0.0); basis.len()];
            for (row, &li) in p.spectrum.indices.iter().enumerate() {
                v[index(lb.lattice_state(li))?] = p.spectrum.vectors[(row, *eta)];
            }
            Ok(vec![v])
        }
        InitialState::Mixed => {
            let lb = &p.eff.lattice_basis;
            p.spectrum.indices.iter().map(|&li| Ok(unit(index(lb.lattice_state(li))?))).collect()
        }
    }
}

/// Output columns, in order, for the requested observables.
pub fn columns(cfg: &ExperimentConfig, p: &Prepared) -> Vec<String> {
    let k = p.spectrum.len();
    let mut cols = Vec::new();
    for o in &cfg.observables.include {
        match o {
            Observable::Populations => cols.extend((0..k).map(|e| format!("p_{e}"))),
            Observable::RawPopulations => cols.extend((0..k).map(|e| format!("p_raw_{e}"))),
            Observable::Discarded => cols.push("discarded".into()),
            Observable::Densities => cols.extend((0..p.lattice.n_sites).map(|s| format!("n_{s}"))),
            Observable::Currents => {
                let r = p.lattice.n_sites / 2;
                for leg in 1..=2 {
                    cols.extend((0..r.saturating_sub(1)).map(|i| format!("j_leg{leg}_{i}")));
                }
                cols.extend((0..r).map(|i| format!("j_rung_{i}")));
            }
            Observable::Photons => cols.extend((0..p.model.cavities.len()).map(|j| format!("nph_{j}"))),
            Observable::CavityField => {
                for j in 0..p.model.cavities.len() {
                    cols.push(format!("a_{j}_re"));
                    cols.push(format!("a_{j}_im"));
                }
            }
        }
    }
    cols
}

/// Maps a state on a run basis to the observable columns. `raw` values are
/// linear in the state, so trajectory means of them are unbiased; `finish`
/// applies the postselection ratio.
pub struct Evaluator {
    include: Vec<Observable>,
    n_sites: usize,
    nc: usize,
    /// Run-basis lattice index of each spectrum row.
    rows: Vec<usize>,
    occ: Vec<Vec<u8>>,
    vectors: DMatrix<C64>,
    embed: Vec<usize>,
    lattice_dim: usize,
    currents: Option<CurrentOperators>,
    lower: Vec<SparseOperator>,
    number: Vec<SparseOperator>,
    alphas: Vec<C64>,
    rates: Vec<f64>,
}

impl Evaluator {
    /// `rates` are the frequencies ω_j with which the cavity field rotates
    /// relative to the pump frame in the run's state.
    pub fn new(cfg: &ExperimentConfig, p: &Prepared, basis: &FockBasis, alphas: Vec<C64>, rates: Vec<f64>) -> Result<Self> {
        let lb = &p.eff.lattice_basis;
        let mut rows = Vec::new();
        let mut occ = Vec::new();
        for &li in &p.spectrum.indices {
            let o = lb.lattice_state(li);
            let r = basis
                .lattice_index_of(o)
                .ok_or_else(|| Error::Config(format!("sector state {o:?} missing from the run basis")))?;
            rows.push(r);
            occ.push(o.to_vec());
        }
        let currents = if cfg.observables.has(Observable::Currents) {
            let ladder = LadderIndex::new(&p.lattice)
                .map_err(|e| Error::Config(format!("observables.currents: {e}")))?;
            Some(CurrentOperators::from_bonds(lb, ladder, &p.eff.couplings.bonds, cfg.observables.current_prefactor))
        } else {
            None
        };
        let ncav = basis.layout().n_cavities;
        let lower = (0..ncav).map(|j| mode_operator(basis, Mode::Cavity(j), OpKind::Lower)).collect::<Result<Vec<_>>>()?;
        let number = (0..ncav).map(|j| mode_operator(basis, Mode::Cavity(j), OpKind::Number)).collect::<Result<Vec<_>>>()?;
        Ok(Evaluator {
            include: cfg.observables.include.clone(),
            n_sites: p.lattice.n_sites,
            nc: basis.cavity_dim(),
            rows,
            occ,
            vectors: p.spectrum.vectors.clone(),
            embed: p.spectrum.indices.clone(),
            lattice_dim: lb.len(),
            currents,
            lower,
            number,
            alphas,
            rates,
        })
    }

    fn sector_block_dm(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let k = self.rows.len();
        let nc = self.nc;
        DMatrix::from_fn(k, k, |a, b| {
            let (la, lb) = (self.rows[a] * nc, self.rows[b] * nc);
            (0..nc).map(|c| rho[(la + c, lb + c)]).sum()
        })
    }

    fn sector_block_psi(&self, psi: &[C64]) -> DMatrix<C64> {
        let k = self.rows.len();
        let nc = self.nc;
        DMatrix::from_fn(k, k, |a, b| {
            let (la, lb) = (self.rows[a] * nc, self.rows[b] * nc);
            (0..nc).map(|c| psi[la + c] * psi[lb + c].conj()).sum()
        })
    }

    /// Raw values: tr P first, then the P-weighted columns.
    fn raw(&self, t: f64, block: &DMatrix<C64>, cav: &[(C64, f64)]) -> Vec<f64> {
        let k = self.rows.len();
        let tr: f64 = (0..k).map(|a| block[(a, a)].re).sum();
        let mut out = vec![tr];
        let pops = || {
            let t = block * &self.vectors;
            (0..k).map(|e| self.vectors.column(e).dotc(&t.column(e)).re).collect::<Vec<f64>>()
        };
        for o in &self.include {
            match o {
                Observable::Populations | Observable::RawPopulations => out.extend(pops()),
                Observable::Discarded => out.push(tr),
                Observable::Densities => {
                    let mut n = vec![0.0; self.n_sites];
                    for a in 0..k {
                        let w = block[(a, a)].re;
                        for (s, &x) in self.occ[a].iter().enumerate() {
                            n[s] += w * x as f64;
                        }
                    }
                    out.extend(n);
                }
                Observable::Currents => {
                    let ops = self.currents.as_ref().expect("current operators built");
                    let mut full = DMatrix::zeros(self.lattice_dim, self.lattice_dim);
                    for a in 0..k {
                        for b in 0..k {
                            full[(self.embed[a], self.embed[b])] = block[(a, b)];
                        }
                    }
                    let c = ops.evaluate(&full);
                    for l in &c.leg {
                        out.extend(l);
                    }
                    out.extend(&c.rung);
                }
                Observable::Photons => {
                    for (j, &(c, n)) in cav.iter().enumerate() {
                        let a = self.alphas[j];
                        let z = c * C64::from_polar(1.0, self.rates[j] * t);
                        out.push(a.norm_sqr() + 2.0 * (a.conj() * z).re + n);
                    }
                }
                Observable::CavityField => {
                    for (j, &(c, _)) in cav.iter().enumerate() {
                        let z = self.alphas[j] + c * C64::from_polar(1.0, self.rates[j] * t);
                        out.push(z.re);
                        out.push(z.im);
                    }
                }
            }
        }
        out
    }

    pub fn raw_dm(&self, t: f64, rho: &DMatrix<C64>) -> Vec<f64> {
        let cav: Vec<(C64, f64)> =
            self.lower.iter().zip(&self.number).map(|(a, n)| (a.expect_dm(rho), n.expect_dm(rho).re)).collect();
        self.raw(t, &self.sector_block_dm(rho), &cav)
    }

    pub fn raw_psi(&self, t: f64, psi: &[C64]) -> Vec<f64> {
        let cav: Vec<(C64, f64)> =
            self.lower.iter().zip(&self.number).map(|(a, n)| (a.expect_vec(psi), n.expect_vec(psi).re)).collect();
        self.raw(t, &self.sector_block_psi(psi), &cav)
    }

    /// Column values and standard errors from raw means and errors.
    /// `cov0[i]` is the covariance of raw quantity i with the trace; with it
    /// the postselected columns get delta-method errors.
    pub fn finish(&self, raw: &[f64], raw_se: &[f64], cov0: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let tr = raw[0];
        let inv = if tr > crate::observables::EMPTY_SECTOR { 1.0 / tr } else { f64::NAN };
        let k = self.rows.len();
        let mut vals = Vec::new();
        let mut ses = Vec::new();
        let mut pos = 1;
        let mut take = |len: usize, ratio: bool, vals: &mut Vec<f64>, ses: &mut Vec<f64>| {
            let scale = if ratio { inv } else { 1.0 };
            for i in pos..pos + len {
                let v = raw[i] * scale;
                vals.push(v);
                ses.push(match cov0 {
                    Some(c) if ratio && inv.is_finite() => {
                        let var = raw_se[i].powi(2) - 2.0 * v * c[i] + v * v * raw_se[0].powi(2);
                        var.max(0.0).sqrt() * inv
                    }
                    _ => raw_se[i] * scale.abs(),
                });
            }
            pos += len;
        };
        for o in &self.include {
            match o {
                Observable::Populations => take(k, true, &mut vals, &mut ses),
                Observable::RawPopulations => take(k, false, &mut vals, &mut ses),
                Observable::Discarded => {
                    take(1, false, &mut vals, &mut ses);
                    let v = vals.last_mut().unwrap();
                    *v = (1.0 - *v).clamp(0.0, 1.0);
                }
                Observable::Densities => take(self.n_sites, true, &mut vals, &mut ses),
                Observable::Currents => {
                    let r = self.n_sites / 2;
                    take(2 * r.saturating_sub(1) + r, true, &mut vals, &mut ses)
                }
                Observable::Photons => take(self.lower.len(), false, &mut vals, &mut ses),
                Observable::CavityField => take(2 * self.lower.len(), false, &mut vals, &mut ses),
            }
        }
        (vals, ses)
    }
}

/// Which propagation a config resolves to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Plan {
    EffectiveMaster,
    FullMaster,
    EffectiveTrajectories,
    FullTrajectories,
}

pub fn plan(cfg: &ExperimentConfig) -> Plan {
    match cfg.run.runner {
        Runner::Effective => Plan::EffectiveMaster,
        Runner::Full if cfg.model.excitations >= 2 && !cfg.run.direct => Plan::FullTrajectories,
        Runner::Full => Plan::FullMaster,
        Runner::Mcwf => match cfg.run.mcwf_model {
            ModelKind::Effective => Plan::EffectiveTrajectories,
            ModelKind::Full => Plan::FullTrajectories,
        },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TimeSeries {
    pub plan: Plan,
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub alphas: Vec<(f64, f64)>,
    pub dim: usize,
    pub norm_drift: f64,
    pub n_traj: usize,
    pub step_stats: StepStats,
}

fn integrator_options(cfg: &ExperimentConfig) -> IntegratorOptions {
    let mut o = IntegratorOptions::default();
    if let Some(r) = cfg.run.rtol {
        o.rtol = r;
    }
    if let Some(a) = cfg.run.atol {
        o.atol = a;
    }
    o
}

/// Propagate the prepared experiment and evaluate the observables.
pub fn evolve(cfg: &ExperimentConfig, p: &Prepared) -> Result<TimeSeries> {
    let plan = plan(cfg);
    let period = cfg.run.stroboscopic.then(|| p.drive.period());
    let ts = sample_times(cfg.run.t_final, cfg.run.dt, period);
    let full;
    let (problem, alphas, basis, rates) = match plan {
        Plan::EffectiveMaster | Plan::EffectiveTrajectories => {
            let (pr, a) = displace_frame(ModelRef::Effective(&p.eff), None)?;
            (pr, a, &p.eff.basis, vec![0.0; p.model.cavities.len()])
        }
        Plan::FullMaster | Plan::FullTrajectories => {
            full = p.full_model(cfg)?;
            if plan == Plan::FullMaster && cfg.model.excitations >= 2 {
                let n = full.dim() as f64;
                eprintln!(
                    "warning: direct integration of the full model holds a {}x{} density matrix ({:.1} GiB per copy)",
                    full.dim(),
                    full.dim(),
                    n * n * 16.0 / (1u64 << 30) as f64
                );
            }
            let (pr, a) = displace_full(&full, None)?;
            let rates = full.cavities.iter().map(|c| c.pump_freq).collect();
            (pr, a, &full.basis, rates)
        }
    };
    let ev = Evaluator::new(cfg, p, basis, alphas.clone(), rates)?;
    let psis = initial_states(&cfg.run.initial, p, basis)?;
    let columns = columns(cfg, p);
    let integ = integrator_options(cfg);
    let mut values = Vec::new();
    let mut std_err = Vec::new();
    let (norm_drift, step_stats, n_traj) = match plan {
        Plan::EffectiveMaster | Plan::FullMaster => {
            let n = basis.len();
            let mut rho0 = DMatrix::<C64>::zeros(n, n);
            let w = 1.0 / psis.len() as f64;
            for psi in &psis {
                for c in 0..n {
                    if psi[c].norm() == 0.0 {
                        continue;
                    }
                    for r in 0..n {
                        rho0[(r, c)] += psi[r] * psi[c].conj() * w;
                    }
                }
            }
            let opts = MasterOptions { integrator: integ, ..Default::default() };
            let s = integrate_master_observed(&problem, &rho0, 0.0, &ts, &opts, |_, t, rho| {
                let raw = ev.raw_dm(t, rho);
                let (v, _) = ev.finish(&raw, &vec![0.0; raw.len()], None);
                std_err.push(vec![0.0; v.len()]);
                values.push(v);
                Ok(())
            })?;
            (s.norm_drift, s.step_stats, 0)
        }
        Plan::EffectiveTrajectories | Plan::FullTrajectories => {
            let opts = McwfOptions { integrator: integ, n_traj: cfg.run.n_traj, seed: cfg.run.seed, ..Default::default() };
            let e = mcwf_mixture(&problem, &psis, &ts, &opts, |t, psi| ev.raw_psi(t, psi))?;
            for ((m, s), c) in e.mean.iter().zip(&e.std_err).zip(&e.cov_first) {
                let (v, se) = ev.finish(m, s, Some(c));
                values.push(v);
                std_err.push(se);
            }
            (0.0, e.step_stats, e.n_traj)
        }
    };
    Ok(TimeSeries {
        plan,
        columns,
        times: ts,
        values,
        std_err,
        alphas: alphas.iter().map(|a| (a.re, a.im)).collect(),
        dim: basis.len(),
        norm_drift,
        n_traj,
        step_stats,
    })
}
