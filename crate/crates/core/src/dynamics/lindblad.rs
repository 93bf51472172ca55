//! Lindblad problems and matrix-free density-matrix integration.

use nalgebra::DMatrix;

use super::integrator::{integrate, IntegratorOptions, OdeSystem, StepStats};
use crate::effective::{DressedJumps, EffectiveModel};
use crate::error::{Error, Result};
use crate::fockspace::{mode_operator, FockBasis, Mode, OpKind};
use crate::model::FullModel;
use crate::sparse::SparseOperator;
use crate::tdop::{Assembler, TdOperator};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Clone, Debug)]
pub enum Hamiltonian {
    Static(SparseOperator),
    Driven(TdOperator),
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Static(h) => h.dim(),
            Hamiltonian::Driven(h) => h.dim(),
        }
    }

    pub fn at(&self, t: f64) -> SparseOperator {
        match self {
            Hamiltonian::Static(h) => h.clone(),
            Hamiltonian::Driven(h) => h.at(t),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Dissipator {
    /// κ D[L].
    Simple { op: SparseOperator, rate: f64 },
    /// κ Σ_m D[ĉ_m] for one dressed cavity loss family.
    Dressed(DressedJumps),
}

impl Dissipator {
    pub fn rate(&self) -> f64 {
        match self {
            Dissipator::Simple { rate, .. } => *rate,
            Dissipator::Dressed(f) => f.kappa,
        }
    }

    /// Σ L†L over the channels of this dissipator (without the rate).
    pub fn number_sum(&self) -> SparseOperator {
        match self {
            Dissipator::Simple { op, .. } => op.adjoint().matmul(op),
            Dissipator::Dressed(f) => f.number_sum(),
        }
    }

    /// Explicit channel list.
    pub fn channels(&self) -> Vec<SparseOperator> {
        match self {
            Dissipator::Simple { op, .. } => vec![op.clone()],
            Dissipator::Dressed(f) => f.operators().into_iter().map(|(_, o)| o).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladProblem {
    pub basis: FockBasis,
    pub hamiltonian: Hamiltonian,
    pub dissipators: Vec<Dissipator>,
    /// Diagonal H_0 defining an interaction picture for the integration.
    pub frame: Option<Vec<f64>>,
}

impl LindbladProblem {
    pub fn new(basis: FockBasis, hamiltonian: Hamiltonian, dissipators: Vec<Dissipator>) -> Result<Self> {
        let n = basis.len();
        if hamiltonian.dim() != n {
            return Err(Error::Domain(format!("Hamiltonian dimension {} != basis size {n}", hamiltonian.dim())));
        }
        for (k, d) in dissipators.iter().enumerate() {
            if !(d.rate() >= 0.0) {
                return Err(Error::Domain(format!("dissipator {k} has negative rate {}", d.rate())));
            }
            let dim = match d {
                Dissipator::Simple { op, .. } => op.dim(),
                Dissipator::Dressed(f) => f.c.dim(),
            };
            if dim != n {
                return Err(Error::Domain(format!("dissipator {k} dimension {dim} != basis size {n}")));
            }
        }
        Ok(LindbladProblem { basis, hamiltonian, dissipators, frame: None })
    }

    /// Driven problem with pumps, cavity decay κ_j D[ĉ_j], integrated in the
    /// interaction picture of the static diagonal.
    pub fn from_full(model: &FullModel) -> Result<Self> {
        let p = LindbladProblem::new(model.basis.clone(), Hamiltonian::Driven(model.operator()), cavity_decay(model)?)?;
        p.with_frame(model.static_diagonal())
    }

    pub fn from_effective(model: &EffectiveModel) -> Result<Self> {
        let h = model.operator();
        let ham = if h.is_static() { Hamiltonian::Static(h.static_part) } else { Hamiltonian::Driven(h) };
        let diss = model.jumps.iter().cloned().map(Dissipator::Dressed).collect();
        LindbladProblem::new(model.basis.clone(), ham, diss)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Switch to interaction-picture integration w.r.t. diag(h0). Every jump
    /// operator must shift H_0 by a single frequency.
    pub fn with_frame(mut self, h0: Vec<f64>) -> Result<Self> {
        if h0.len() != self.dim() {
            return Err(Error::Domain("frame diagonal has the wrong length".into()));
        }
        for d in &self.dissipators {
            match d {
                Dissipator::Simple { op, .. } => {
                    let mut w: Option<f64> = None;
                    for (r, c, _) in op.entries() {
                        let f = h0[r] - h0[c];
                        match w {
                            None => w = Some(f),
                            Some(w0) if (w0 - f).abs() > 1e-9 * (1.0 + w0.abs()) => {
                                return Err(Error::UnsupportedFrame(
                                    "jump operator has no uniform frequency in the requested frame".into(),
                                ));
                            }
                            _ => {}
                        }
                    }
                }
                Dissipator::Dressed(_) => {
                    return Err(Error::UnsupportedFrame("dressed loss families need the lab frame".into()));
                }
            }
        }
        self.frame = Some(h0);
        Ok(self)
    }

    /// Effective non-Hermitian Hamiltonian part −(i/2) Σ κ L†L.
    pub fn decay_operator(&self) -> SparseOperator {
        let mut g = SparseOperator::zeros(self.dim());
        for d in &self.dissipators {
            if d.rate() > 0.0 {
                g = g.add_scaled(&d.number_sum(), C64::new(0.0, -0.5 * d.rate()));
            }
        }
        g
    }

    /// Every channel with its rate.
    pub fn jump_channels(&self) -> Vec<(SparseOperator, f64)> {
        self.dissipators
            .iter()
            .filter(|d| d.rate() > 0.0)
            .flat_map(|d| d.channels().into_iter().map(move |o| (o, d.rate())))
            .collect()
    }

    /// H(t) plus the non-Hermitian decay part, as a refillable assembler.
    /// In frame mode the assembled operator is the interaction-picture one.
    pub fn nonhermitian_assembler(&self) -> Assembler {
        let g = self.decay_operator();
        let op = match &self.hamiltonian {
            Hamiltonian::Static(h) => TdOperator::new(h.add(&g)),
            Hamiltonian::Driven(h) => {
                let mut op = TdOperator::new(h.static_part.add(&g));
                op.terms = h.terms.clone();
                op
            }
        };
        match &self.frame {
            Some(d) => op.assembler_in_frame(d),
            None => op.assembler(),
        }
    }
}

fn cavity_decay(model: &FullModel) -> Result<Vec<Dissipator>> {
    let mut v = Vec::new();
    for (j, c) in model.cavities.iter().enumerate() {
        if c.kappa > 0.0 {
            v.push(Dissipator::Simple { op: mode_operator(&model.basis, Mode::Cavity(j), OpKind::Lower)?, rate: c.kappa });
        }
    }
    Ok(v)
}

/// Cavity decay channels of a full model (used by the displaced full frame).
pub fn full_cavity_decay(model: &FullModel) -> Result<Vec<Dissipator>> {
    cavity_decay(model)
}

// An operator with at most one entry per row: row r reads column src[r].
#[derive(Clone, Debug)]
struct Monomial {
    src: Vec<usize>,
    val: Vec<C64>,
}

impl Monomial {
    fn from_op(op: &SparseOperator) -> Option<Self> {
        let n = op.dim();
        let mut src = vec![usize::MAX; n];
        let mut val = vec![ZERO; n];
        let rp = op.row_ptr();
        for r in 0..n {
            match rp[r + 1] - rp[r] {
                0 => {}
                1 => {
                    src[r] = op.col_indices()[rp[r]];
                    val[r] = op.values()[rp[r]];
                }
                _ => return None,
            }
        }
        Some(Monomial { src, val })
    }

    fn row_scaled(&self, f: impl Fn(usize) -> f64) -> Self {
        Monomial { src: self.src.clone(), val: self.val.iter().enumerate().map(|(r, v)| v * f(r)).collect() }
    }
}

// out_rc += rate · w(r, c) · A_r conj(B_c) ρ[sA_r, sB_c]
struct Gather {
    a: Monomial,
    b: Monomial,
    rate: f64,
    kernel: Option<(Vec<u8>, Vec<Vec<f64>>)>,
}

enum Sandwich {
    Gather(Gather),
    General { op: SparseOperator, rate: f64 },
}

/// Matrix-free Liouvillian acting on column-major density matrices.
pub struct Liouvillian {
    n: usize,
    asm: Assembler,
    h: SparseOperator,
    is_static: bool,
    sandwiches: Vec<Sandwich>,
    x: Vec<C64>,
    w: Vec<C64>,
    wt: Vec<C64>,
    z: Vec<C64>,
}

const TILE: usize = 32;

fn mul_cols(op: &SparseOperator, n: usize, x: &[C64], y: &mut [C64]) {
    for c in 0..n {
        op.apply(&x[c * n..(c + 1) * n], &mut y[c * n..(c + 1) * n]);
    }
}

/// Tiled y = x†.
pub(crate) fn adjoint_into(n: usize, x: &[C64], y: &mut [C64]) {
    for c0 in (0..n).step_by(TILE) {
        for r0 in (0..n).step_by(TILE) {
            for c in c0..(c0 + TILE).min(n) {
                for r in r0..(r0 + TILE).min(n) {
                    y[r + c * n] = x[c + r * n].conj();
                }
            }
        }
    }
}

/// Tiled in-place ρ ← (ρ + ρ†)/2; returns the trace.
pub(crate) fn hermitize(n: usize, y: &mut [C64]) -> f64 {
    for c0 in (0..n).step_by(TILE) {
        for r0 in (0..=c0).step_by(TILE) {
            for c in c0..(c0 + TILE).min(n) {
                for r in r0..(r0 + TILE).min(c) {
                    let v = (y[r + c * n] + y[c + r * n].conj()) * 0.5;
                    y[r + c * n] = v;
                    y[c + r * n] = v.conj();
                }
            }
        }
    }
    let mut tr = 0.0;
    for c in 0..n {
        let d = &mut y[c + c * n];
        *d = C64::new(d.re, 0.0);
        tr += d.re;
    }
    tr
}

impl Gather {
    fn apply(&self, n: usize, rho: &[C64], out: &mut [C64]) {
        for c in 0..n {
            let sb = self.b.src[c];
            if sb == usize::MAX {
                continue;
            }
            let bc = self.b.val[c].conj() * self.rate;
            let col = &rho[sb * n..(sb + 1) * n];
            let o = &mut out[c * n..(c + 1) * n];
            match &self.kernel {
                None => {
                    for r in 0..n {
                        let sa = self.a.src[r];
                        if sa != usize::MAX {
                            o[r] += self.a.val[r] * bc * col[sa];
                        }
                    }
                }
                Some((occ, k)) => {
                    let kc = occ[c] as usize;
                    for r in 0..n {
                        let sa = self.a.src[r];
                        if sa != usize::MAX {
                            o[r] += self.a.val[r] * bc * col[sa] * k[occ[r] as usize][kc];
                        }
                    }
                }
            }
        }
    }
}

impl Liouvillian {
    pub fn new(problem: &LindbladProblem) -> Self {
        let n = problem.dim();
        let asm = problem.nonhermitian_assembler();
        let h = asm.build(0.0);
        let is_static = matches!(problem.hamiltonian, Hamiltonian::Static(_)) && problem.frame.is_none();
        let mut sandwiches = Vec::new();
        for d in &problem.dissipators {
            if d.rate() == 0.0 {
                continue;
            }
            match d {
                Dissipator::Simple { op, rate } => match Monomial::from_op(op) {
                    Some(m) => sandwiches.push(Sandwich::Gather(Gather { a: m.clone(), b: m, rate: *rate, kernel: None })),
                    None => sandwiches.push(Sandwich::General { op: op.clone(), rate: *rate }),
                },
                Dissipator::Dressed(f) => {
                    // Σ_m ĉ_m ρ ĉ_m† = cρc† + cρ(F₀a)† + (F₀a)ρc† + K∘(aρa†)
                    let k0 = f.index_of_m0().expect("m = 0 channel present");
                    let c = Monomial::from_op(&f.c).expect("cavity lowering has one entry per row");
                    let a = Monomial::from_op(&f.a).expect("site lowering has one entry per row");
                    let fa = a.row_scaled(|r| f.f[k0][f.site_occ[r] as usize]);
                    let rate = f.kappa;
                    sandwiches.push(Sandwich::Gather(Gather { a: c.clone(), b: c.clone(), rate, kernel: None }));
                    sandwiches.push(Sandwich::Gather(Gather { a: c.clone(), b: fa.clone(), rate, kernel: None }));
                    sandwiches.push(Sandwich::Gather(Gather { a: fa, b: c, rate, kernel: None }));
                    sandwiches.push(Sandwich::Gather(Gather {
                        a: a.clone(),
                        b: a,
                        rate,
                        kernel: Some((f.site_occ.clone(), f.kernel())),
                    }));
                }
            }
        }
        let buf = vec![ZERO; n * n];
        Liouvillian { n, asm, h, is_static, sandwiches, x: buf.clone(), w: buf.clone(), wt: buf.clone(), z: buf }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// dρ/dt at time t (interaction picture if the problem has a frame).
    /// Exactly Hermitian output for exactly Hermitian input.
    pub fn apply(&mut self, t: f64, rho: &[C64], out: &mut [C64]) {
        let n = self.n;
        if !self.is_static {
            self.asm.fill(t, &mut self.h);
        }
        mul_cols(&self.h, n, rho, &mut self.x);
        let x = &self.x;
        for c0 in (0..n).step_by(TILE) {
            for r0 in (0..n).step_by(TILE) {
                for c in c0..(c0 + TILE).min(n) {
                    for r in r0..(r0 + TILE).min(n) {
                        let v = x[r + c * n] - x[c + r * n].conj();
                        out[r + c * n] = C64::new(v.im, -v.re);
                    }
                }
            }
        }
        for s in &self.sandwiches {
            match s {
                Sandwich::Gather(g) => g.apply(n, rho, out),
                Sandwich::General { op, rate } => {
                    mul_cols(op, n, rho, &mut self.w);
                    adjoint_into(n, &self.w, &mut self.wt);
                    mul_cols(op, n, &self.wt, &mut self.z);
                    for (o, z) in out.iter_mut().zip(&self.z) {
                        *o += z * *rate;
                    }
                }
            }
        }
    }
}

impl OdeSystem for Liouvillian {
    fn dim(&self) -> usize {
        self.n * self.n
    }
    fn rhs(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        self.apply(t, y, dy);
    }
}

#[derive(Clone, Debug)]
pub struct MasterOptions {
    pub integrator: IntegratorOptions,
    /// Ceiling on |tr ρ − 1| over the run.
    pub trace_ceiling: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions { integrator: IntegratorOptions::default(), trace_ceiling: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<C64>>,
    pub norm_drift: f64,
    pub step_stats: StepStats,
}

/// Summary returned by the observed variant.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct RunSummary {
    pub norm_drift: f64,
    pub step_stats: StepStats,
}

fn frame_rotate(rho: &mut DMatrix<C64>, d: &[f64], t: f64, sign: f64) {
    let n = d.len();
    for c in 0..n {
        for r in 0..n {
            let w = d[r] - d[c];
            if w != 0.0 {
                rho[(r, c)] *= C64::from_polar(1.0, sign * w * t);
            }
        }
    }
}

/// Validate an initial density matrix.
pub fn check_density_matrix(rho: &DMatrix<C64>, n: usize) -> Result<()> {
    if rho.nrows() != n || rho.ncols() != n {
        return Err(Error::Domain(format!("density matrix is {}x{}, basis has {n} states", rho.nrows(), rho.ncols())));
    }
    let herm = (rho - rho.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if herm > 1e-10 {
        return Err(Error::Domain(format!("density matrix not Hermitian (deviation {herm:.2e})")));
    }
    let tr = rho.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::Domain(format!("density matrix trace {tr} != 1")));
    }
    let ev = rho.clone().symmetric_eigenvalues();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::Domain(format!("density matrix not positive (eigenvalue {min:.2e})")));
    }
    Ok(())
}

/// Integrate and hand each (lab-frame) sample to `observe`.
pub fn integrate_master_observed<F>(
    problem: &LindbladProblem,
    rho0: &DMatrix<C64>,
    t0: f64,
    samples: &[f64],
    opts: &MasterOptions,
    mut observe: F,
) -> Result<RunSummary>
where
    F: FnMut(usize, f64, &DMatrix<C64>) -> Result<()>,
{
    let n = problem.dim();
    check_density_matrix(rho0, n)?;
    let mut rho = rho0.clone();
    if let Some(d) = &problem.frame {
        frame_rotate(&mut rho, d, t0, 1.0);
    }
    let mut y: Vec<C64> = rho.as_slice().to_vec();
    let mut liou = Liouvillian::new(problem);
    let mut drift: f64 = 0.0;
    let ceiling = opts.trace_ceiling;
    let frame = problem.frame.clone();
    let mut buf = DMatrix::<C64>::zeros(n, n);
    let stats = integrate(
        &mut liou,
        t0,
        &mut y,
        samples,
        opts.integrator,
        |t, y| {
            let tr = hermitize(n, y);
            drift = drift.max((tr - 1.0).abs());
            if drift > ceiling {
                return Err(Error::Integration { t, reason: format!("trace drift {drift:.3e} exceeds {ceiling:.1e}") });
            }
            Ok(false)
        },
        |i, t, y| {
            buf.as_mut_slice().copy_from_slice(y);
            if let Some(d) = &frame {
                frame_rotate(&mut buf, d, t, -1.0);
            }
            observe(i, t, &buf)
        },
    )?;
    Ok(RunSummary { norm_drift: drift, step_stats: stats })
}

/// Integrate the master equation from t = 0 and keep every sampled state.
pub fn integrate_master(problem: &LindbladProblem, rho0: &DMatrix<C64>, samples: &[f64]) -> Result<EvolutionResult> {
    integrate_master_with(problem, rho0, samples, &MasterOptions::default())
}

pub fn integrate_master_with(
    problem: &LindbladProblem,
    rho0: &DMatrix<C64>,
    samples: &[f64],
    opts: &MasterOptions,
) -> Result<EvolutionResult> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let s = integrate_master_observed(problem, rho0, 0.0, samples, opts, |_, t, r| {
        times.push(t);
        states.push(r.clone());
        Ok(())
    })?;
    Ok(EvolutionResult { times, states, norm_drift: s.norm_drift, step_stats: s.step_stats })
}

/// Dense Liouvillian action, for tests and small problems.
pub fn liouvillian_dense(problem: &LindbladProblem, t: f64, rho: &DMatrix<C64>) -> DMatrix<C64> {
    let h = problem.hamiltonian.at(t).to_dense();
    let i = C64::new(0.0, 1.0);
    let mut out = -(&h * rho - rho * &h) * i;
    for (l, k) in problem.jump_channels() {
        let l = l.to_dense();
        let ld = l.adjoint();
        let ll = &ld * &l;
        out += (&l * rho * &ld - (&ll * rho + rho * &ll) * C64::new(0.5, 0.0)) * C64::new(k, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{enumerate_basis, ModeLayout};

    fn cavity_basis(photons: usize) -> FockBasis {
        enumerate_basis(ModeLayout { n_sites: 0, n_cavities: 1, max_site_occ: 0, max_total_excitations: 0, max_photons_per_cavity: photons })
            .unwrap()
    }

    #[test]
    fn damped_cavity_decays_exponentially() {
        let b = cavity_basis(2);
        let c = mode_operator(&b, Mode::Cavity(0), OpKind::Lower).unwrap();
        let nop = c.adjoint().matmul(&c);
        let kappa = 0.3;
        let p = LindbladProblem::new(b.clone(), Hamiltonian::Static(SparseOperator::zeros(3)), vec![Dissipator::Simple { op: c, rate: kappa }])
            .unwrap();
        let mut rho0 = DMatrix::zeros(3, 3);
        let one = b.index_of(&[1]).unwrap();
        rho0[(one, one)] = C64::new(1.0, 0.0);
        let ts: Vec<f64> = (0..6).map(|k| k as f64).collect();
        let r = integrate_master(&p, &rho0, &ts).unwrap();
        for (t, rho) in r.times.iter().zip(&r.states) {
            let n = nop.expect_dm(rho).re;
            assert!((n - (-kappa * t).exp()).abs() < 1e-8, "t={t} n={n}");
        }
        assert!(r.norm_drift < 1e-8);
    }

    #[test]
    fn matrix_free_matches_dense() {
        let b = cavity_basis(3);
        let c = mode_operator(&b, Mode::Cavity(0), OpKind::Lower).unwrap();
        let mut h = TdOperator::new(c.adjoint().matmul(&c).scale(C64::new(0.7, 0.0)));
        h.push(c.adjoint(), crate::tdop::Oscillation::tone(C64::new(0.4, 0.1), 1.3));
        let p = LindbladProblem::new(b, Hamiltonian::Driven(h), vec![Dissipator::Simple { op: c, rate: 0.2 }]).unwrap();
        let mut rho = DMatrix::from_fn(4, 4, |r, c| C64::new((r + c) as f64 * 0.1, r as f64 - c as f64));
        rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
        let mut l = Liouvillian::new(&p);
        let mut out = vec![ZERO; 16];
        l.apply(0.9, rho.as_slice(), &mut out);
        let want = liouvillian_dense(&p, 0.9, &rho);
        let got = DMatrix::from_column_slice(4, 4, &out);
        assert!((got - want).norm() < 1e-13);
    }

    #[test]
    fn unitary_run_conserves_purity() {
        let b = cavity_basis(3);
        let c = mode_operator(&b, Mode::Cavity(0), OpKind::Lower).unwrap();
        let h = c.add(&c.adjoint()).add(&c.adjoint().matmul(&c).scale(C64::new(0.3, 0.0)));
        let p = LindbladProblem::new(b, Hamiltonian::Static(h), vec![]).unwrap();
        let mut rho0 = DMatrix::zeros(4, 4);
        rho0[(0, 0)] = C64::new(1.0, 0.0);
        let opts = MasterOptions { integrator: IntegratorOptions { atol: 1e-12, rtol: 1e-11, ..Default::default() }, ..Default::default() };
        let r = integrate_master_with(&p, &rho0, &[5.0], &opts).unwrap();
        let pur = (&r.states[0] * &r.states[0]).trace().re;
        assert!((pur - 1.0).abs() < 1e-10, "purity {pur}");
    }

    #[test]
    fn rejects_bad_initial_state() {
        let b = cavity_basis(1);
        let p = LindbladProblem::new(b, Hamiltonian::Static(SparseOperator::zeros(2)), vec![]).unwrap();
        let rho0 = DMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(matches!(integrate_master(&p, &rho0, &[1.0]), Err(Error::Domain(_))));
    }
}
