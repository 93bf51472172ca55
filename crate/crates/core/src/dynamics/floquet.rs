//! One-period propagator of the pump-free driven Hamiltonian.

use nalgebra::DMatrix;

use super::integrator::{integrate, IntegratorOptions, OdeSystem};
use crate::error::{Error, Result};
use crate::model::FullModel;
use crate::sparse::SparseOperator;
use crate::tdop::{Assembler, TdOperator};
use crate::C64;

pub const UNITARITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct FloquetResult {
    pub u_t: DMatrix<C64>,
    /// Folded into (−ω/2, ω/2], ascending.
    pub quasienergies: Vec<f64>,
    /// Columns are Floquet modes at t = 0, ordered like `quasienergies`.
    pub modes: DMatrix<C64>,
    pub unitarity_error: f64,
}

struct Propagator {
    asm: Assembler,
    h: SparseOperator,
    n: usize,
}

impl OdeSystem for Propagator {
    fn dim(&self) -> usize {
        self.n * self.n
    }
    fn rhs(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        self.asm.fill(t, &mut self.h);
        let n = self.n;
        for c in 0..n {
            self.h.apply(&y[c * n..(c + 1) * n], &mut dy[c * n..(c + 1) * n]);
        }
        for v in dy.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
    }
}

/// Fold into (−ω/2, ω/2].
pub fn fold_quasienergy(e: f64, omega: f64) -> f64 {
    let mut x = e - omega * (e / omega).round();
    if x <= -omega / 2.0 {
        x += omega;
    }
    if x > omega / 2.0 {
        x -= omega;
    }
    x
}

fn restrict(op: &SparseOperator, idx: &[usize]) -> SparseOperator {
    let mut map = vec![usize::MAX; op.dim()];
    for (k, &i) in idx.iter().enumerate() {
        map[i] = k;
    }
    let t = op
        .entries()
        .filter(|&(r, c, _)| map[r] != usize::MAX && map[c] != usize::MAX)
        .map(|(r, c, v)| (map[r], map[c], v));
    SparseOperator::from_triplets(idx.len(), t).expect("indices in range")
}

fn restrict_td(op: &TdOperator, idx: &[usize]) -> TdOperator {
    let mut out = TdOperator::new(restrict(&op.static_part, idx));
    for term in &op.terms {
        out.push(restrict(&term.op, idx), term.coef);
    }
    out
}

/// U(T) over the whole basis.
pub fn floquet_propagator(model: &FullModel, pumps_off: bool) -> Result<FloquetResult> {
    let idx: Vec<usize> = (0..model.dim()).collect();
    if !pumps_off {
        return Err(Error::Domain("the one-period propagator requires pumps off".into()));
    }
    floquet_propagator_block(model, &idx)
}

/// U(T) on a subspace invariant under the pump-free Hamiltonian.
pub fn floquet_propagator_block(model: &FullModel, idx: &[usize]) -> Result<FloquetResult> {
    let full = model.periodic_operator();
    let n = idx.len();
    let mut inside = vec![false; model.dim()];
    idx.iter().for_each(|&i| inside[i] = true);
    let leaks = std::iter::once(&full.static_part)
        .chain(full.terms.iter().map(|t| &t.op))
        .any(|op| op.entries().any(|(r, c, _)| inside[r] != inside[c]));
    if leaks {
        return Err(Error::Domain("index block is not invariant under the Hamiltonian".into()));
    }
    let td = restrict_td(&full, idx);
    let asm = td.assembler();
    let h = asm.build(0.0);
    let mut sys = Propagator { asm, h, n };
    let mut y = DMatrix::<C64>::identity(n, n).as_slice().to_vec();
    let period = model.period();
    let opts = IntegratorOptions { atol: 1e-13, rtol: 1e-12, ..Default::default() };
    integrate(&mut sys, 0.0, &mut y, &[period], opts, |_, _| Ok(false), |_, _, _| Ok(()))?;
    let u = DMatrix::from_column_slice(n, n, &y);
    let dev = &u.adjoint() * &u - DMatrix::<C64>::identity(n, n);
    let unitarity_error = dev.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if unitarity_error > UNITARITY_TOL {
        return Err(Error::Integration { t: period, reason: format!("unitarity drift {unitarity_error:.2e}") });
    }
    let (eps, modes) = unitary_eigen(&u, period, model.drive.omega);
    Ok(FloquetResult { u_t: u, quasienergies: eps, modes, unitarity_error })
}

/// Eigen-decomposition of a unitary through a generic Hermitian combination
/// of its real and imaginary parts, which share its eigenvectors.
pub fn unitary_eigen(u: &DMatrix<C64>, period: f64, omega: f64) -> (Vec<f64>, DMatrix<C64>) {
    let n = u.nrows();
    let ud = u.adjoint();
    let re = (u + &ud) * C64::new(0.5, 0.0);
    let im = (u - &ud) * C64::new(0.0, -0.5);
    let mix = &re + &im * C64::new(0.6180339887498949, 0.0);
    let mix = (&mix + mix.adjoint()) * C64::new(0.5, 0.0);
    let eig = mix.symmetric_eigen();
    let mut pairs: Vec<(f64, usize)> = (0..n)
        .map(|k| {
            let v = eig.eigenvectors.column(k);
            let lam = (v.adjoint() * u * v)[(0, 0)];
            (fold_quasienergy(-lam.arg() / period, omega), k)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut modes = DMatrix::zeros(n, n);
    for (j, &(_, k)) in pairs.iter().enumerate() {
        modes.set_column(j, &eig.eigenvectors.column(k));
    }
    (pairs.into_iter().map(|p| p.0).collect(), modes)
}
