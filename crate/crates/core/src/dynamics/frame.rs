//! Displaced-cavity frames.

use super::lindblad::{full_cavity_decay, Dissipator, Hamiltonian, LindbladProblem};
use crate::effective::EffectiveModel;
use crate::error::{Error, Result};
use crate::fockspace::{mode_operator, Mode, OpKind};
use crate::model::FullModel;
use crate::sparse::SparseOperator;
use crate::C64;

/// Coherent amplitude cancelling the pump: α = −E/(d − iκ/2).
pub fn displacement(pump: C64, detuning: f64, kappa: f64) -> Result<C64> {
    let den = C64::new(detuning, -0.5 * kappa);
    if den.norm() == 0.0 {
        if pump.norm() == 0.0 {
            return Ok(C64::new(0.0, 0.0));
        }
        return Err(Error::Domain("resonant pump with κ = 0 has no stationary displacement".into()));
    }
    Ok(-pump / den)
}

#[derive(Clone, Copy, Debug)]
pub enum ModelRef<'a> {
    Full(&'a FullModel),
    Effective(&'a EffectiveModel),
}

/// Displaced frame of an effective model. `detunings` overrides each
/// cavity's pump detuning d_j. Returns the static problem and α_j.
pub fn displace_frame(model: ModelRef<'_>, detunings: Option<&[f64]>) -> Result<(LindbladProblem, Vec<C64>)> {
    let eff = match model {
        ModelRef::Full(_) => {
            return Err(Error::UnsupportedFrame(
                "the displaced frame applies to the effective model only; use displace_full for the driven model".into(),
            ))
        }
        ModelRef::Effective(e) => e,
    };
    let d = resolve_detunings(eff.cavities.iter().map(|c| c.detuning()).collect(), detunings)?;
    let basis = &eff.basis;
    let mut h = eff.h_static.clone();
    let mut alphas = Vec::new();
    for (j, c) in eff.cavities.iter().enumerate() {
        let alpha = displacement(c.pump(), d[j], c.kappa)?;
        alphas.push(alpha);
        let cop = mode_operator(basis, Mode::Cavity(j), OpKind::Lower)?;
        let nc = cop.adjoint().matmul(&cop);
        let chi = eff.chi_operator(j);
        // (−δ + χ) c†c in the static part becomes (d + χ) c†c in the pump frame
        h = h.add_scaled(&nc, C64::new(d[j] - c.mode_energy(), 0.0));
        let lin = cop.scale(alpha.conj()).add(&cop.adjoint().scale(alpha));
        let shift = SparseOperator::identity(basis.len()).scale(C64::new(alpha.norm_sqr(), 0.0));
        h = h.add(&chi.matmul(&lin.add(&shift)));
    }
    let diss = eff.jumps.iter().cloned().map(Dissipator::Dressed).collect();
    let p = LindbladProblem::new(basis.clone(), Hamiltonian::Static(h), diss)?;
    Ok((p, alphas))
}

/// Exact displaced frame of the driven model, β_j(t) = α_j e^{−iω_j t}.
/// Integrated in the interaction picture of the static diagonal.
pub fn displace_full(model: &FullModel, detunings: Option<&[f64]>) -> Result<(LindbladProblem, Vec<C64>)> {
    let d = resolve_detunings(model.cavities.iter().map(|c| c.detuning()).collect(), detunings)?;
    let mut m = model.clone();
    for (c, &dj) in m.cavities.iter_mut().zip(&d) {
        c.pump_freq = c.pump_freq_for_detuning(dj);
    }
    let alphas = m
        .cavities
        .iter()
        .zip(&d)
        .map(|(c, &dj)| displacement(c.pump(), dj, c.kappa))
        .collect::<Result<Vec<_>>>()?;
    let h = m.displaced_operator(&alphas);
    let p = LindbladProblem::new(m.basis.clone(), Hamiltonian::Driven(h), full_cavity_decay(&m)?)?;
    Ok((p.with_frame(m.static_diagonal())?, alphas))
}

fn resolve_detunings(own: Vec<f64>, given: Option<&[f64]>) -> Result<Vec<f64>> {
    match given {
        None => Ok(own),
        Some(g) if g.len() == own.len() => Ok(g.to_vec()),
        Some(g) => Err(Error::Domain(format!("{} detunings given for {} cavities", g.len(), own.len()))),
    }
}
