//! Monte Carlo wavefunction unravelling.
//!
//! Trajectory k draws from ChaCha20 seeded with the root seed on stream k, so
//! ensembles do not depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::integrator::{IntegratorOptions, OdeSystem, Stepper, StepStats};
use super::lindblad::LindbladProblem;
use crate::error::{Error, Result};
use crate::sparse::SparseOperator;
use crate::tdop::Assembler;
use crate::C64;

#[derive(Clone, Debug)]
pub struct McwfOptions {
    pub integrator: IntegratorOptions,
    pub n_traj: usize,
    pub seed: u64,
    pub keep_jumps: bool,
    /// Relative tolerance on jump times.
    pub jump_time_tol: f64,
}

impl Default for McwfOptions {
    fn default() -> Self {
        McwfOptions { integrator: IntegratorOptions::default(), n_traj: 350, seed: 0, keep_jumps: false, jump_time_tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpRecord {
    pub t: f64,
    pub channel: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryEnsemble {
    pub n_traj: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// mean[time][quantity]
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    /// cov_first[time][k]: covariance of the means of quantity k and
    /// quantity 0, for ratio estimators with quantity 0 as denominator.
    pub cov_first: Vec<Vec<f64>>,
    pub jumps: Option<Vec<Vec<JumpRecord>>>,
    pub step_stats: StepStats,
}

struct Drift {
    asm: Assembler,
    h: SparseOperator,
    is_static: bool,
}

impl OdeSystem for Drift {
    fn dim(&self) -> usize {
        self.h.dim()
    }
    fn rhs(&mut self, t: f64, y: &[C64], dy: &mut [C64]) {
        if !self.is_static {
            self.asm.fill(t, &mut self.h);
        }
        self.h.apply(y, dy);
        for v in dy.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
    }
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

struct Trajectory {
    samples: Vec<Vec<f64>>,
    jumps: Vec<JumpRecord>,
    stats: StepStats,
}

fn to_lab(psi: &[C64], frame: &Option<Vec<f64>>, t: f64, out: &mut Vec<C64>) {
    let s = norm2(psi).sqrt();
    out.clear();
    match frame {
        None => out.extend(psi.iter().map(|z| z / s)),
        Some(d) => out.extend(psi.iter().zip(d).map(|(z, &e)| z * C64::from_polar(1.0 / s, -e * t))),
    }
}

fn run_one<F>(
    problem: &LindbladProblem,
    channels: &[(SparseOperator, f64)],
    psi0: &[C64],
    samples: &[f64],
    opts: &McwfOptions,
    traj: usize,
    observe: &F,
) -> Result<Trajectory>
where
    F: Fn(f64, &[C64]) -> Vec<f64>,
{
    let n = psi0.len();
    let asm = problem.nonhermitian_assembler();
    let h = asm.build(0.0);
    let is_static = matches!(problem.hamiltonian, super::Hamiltonian::Static(_)) && problem.frame.is_none();
    let mut sys = Drift { asm, h, is_static };
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    rng.set_stream(traj as u64);
    let mut st = Stepper::new(n, opts.integrator);
    // at t = 0 the interaction and lab pictures coincide
    let mut psi = psi0.to_vec();
    let mut old = psi.clone();
    let mut trial = psi.clone();
    let mut lab = Vec::with_capacity(n);
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    let mut out = Vec::with_capacity(samples.len());
    let mut jumps = Vec::new();
    let mut r: f64 = rng.random();
    let mut t = 0.0;
    for &ts in samples {
        if ts < t {
            return Err(Error::Domain("sample times must be ascending and ≥ 0".into()));
        }
        while t < ts {
            old.copy_from_slice(&psi);
            let t_old = t;
            t = st.step(&mut sys, t, &mut psi, ts)?;
            if channels.is_empty() || norm2(&psi) > r {
                continue;
            }
            // bisect the crossing ‖ψ(τ)‖² = r inside (t_old, t]
            st.invalidate();
            let (mut lo, mut hi) = (t_old, t);
            trial.copy_from_slice(&psi);
            while hi - lo > opts.jump_time_tol * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                st.fixed_step(&mut sys, t_old, &old, mid - t_old, &mut scratch);
                if norm2(&scratch) > r {
                    lo = mid;
                } else {
                    hi = mid;
                    trial.copy_from_slice(&scratch);
                }
            }
            t = hi;
            psi.copy_from_slice(&trial);
            let mut weights = Vec::with_capacity(channels.len());
            let mut total = 0.0;
            for (op, k) in channels {
                op.apply(&psi, &mut scratch);
                let w = k * norm2(&scratch);
                total += w;
                weights.push(w);
            }
            if !(total > 0.0) {
                return Err(Error::Numerical(format!("jump triggered at t = {t} with zero total jump weight")));
            }
            let mut pick = rng.random::<f64>() * total;
            let mut ch = weights.len() - 1;
            for (k, &w) in weights.iter().enumerate() {
                if pick < w {
                    ch = k;
                    break;
                }
                pick -= w;
            }
            channels[ch].0.apply(&psi, &mut scratch);
            let s = norm2(&scratch).sqrt();
            for (p, z) in psi.iter_mut().zip(&scratch) {
                *p = z / s;
            }
            st.invalidate();
            jumps.push(JumpRecord { t, channel: ch });
            r = rng.random();
        }
        to_lab(&psi, &problem.frame, t, &mut lab);
        out.push(observe(t, &lab));
    }
    Ok(Trajectory { samples: out, jumps, stats: st.stats })
}

/// Ensemble of trajectories; `observe` maps the normalized lab-frame state
/// to a vector of real quantities that are averaged.
pub fn mcwf_observed<F>(
    problem: &LindbladProblem,
    psi0: &[C64],
    samples: &[f64],
    opts: &McwfOptions,
    observe: F,
) -> Result<TrajectoryEnsemble>
where
    F: Fn(f64, &[C64]) -> Vec<f64> + Sync,
{
    mcwf_mixture(problem, &[psi0.to_vec()], samples, opts, observe)
}

/// Equal-weight mixture of pure states, sampled stratified: trajectory k
/// starts in `states[k % states.len()]`.
pub fn mcwf_mixture<F>(
    problem: &LindbladProblem,
    states: &[Vec<C64>],
    samples: &[f64],
    opts: &McwfOptions,
    observe: F,
) -> Result<TrajectoryEnsemble>
where
    F: Fn(f64, &[C64]) -> Vec<f64> + Sync,
{
    if states.is_empty() {
        return Err(Error::Domain("no initial states".into()));
    }
    for psi0 in states {
        if psi0.len() != problem.dim() {
            return Err(Error::Domain(format!("state has {} components, basis {}", psi0.len(), problem.dim())));
        }
        if (norm2(psi0) - 1.0).abs() > 1e-10 {
            return Err(Error::Domain("initial state is not normalized".into()));
        }
    }
    if opts.n_traj == 0 {
        return Err(Error::Domain("n_traj must be positive".into()));
    }
    let channels = problem.jump_channels();
    let runs: Vec<Result<Trajectory>> = (0..opts.n_traj)
        .into_par_iter()
        .map(|k| run_one(problem, &channels, &states[k % states.len()], samples, opts, k, &observe))
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let nt = runs.len() as f64;
    let mut mean = Vec::new();
    let mut se = Vec::new();
    let mut cov = Vec::new();
    for i in 0..samples.len() {
        let q = runs[0].samples[i].len();
        let mut m = vec![0.0; q];
        for r in &runs {
            for (a, b) in m.iter_mut().zip(&r.samples[i]) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|a| *a /= nt);
        let mut v = vec![0.0; q];
        for r in &runs {
            for k in 0..q {
                v[k] += (r.samples[i][k] - m[k]).powi(2);
            }
        }
        let e: Vec<f64> = v.iter().map(|x| if nt > 1.0 { (x / (nt - 1.0) / nt).sqrt() } else { 0.0 }).collect();
        let mut c = vec![0.0; q];
        if nt > 1.0 {
            for r in &runs {
                let d0 = r.samples[i][0] - m[0];
                for k in 0..q {
                    c[k] += d0 * (r.samples[i][k] - m[k]);
                }
            }
            c.iter_mut().for_each(|x| *x /= (nt - 1.0) * nt);
        }
        mean.push(m);
        se.push(e);
        cov.push(c);
    }
    let mut stats = StepStats::default();
    runs.iter().for_each(|r| stats.merge(&r.stats));
    let jumps = opts.keep_jumps.then(|| runs.iter().map(|r| r.jumps.clone()).collect());
    Ok(TrajectoryEnsemble {
        n_traj: opts.n_traj,
        seed: opts.seed,
        times: samples.to_vec(),
        mean,
        std_err: se,
        cov_first: cov,
        jumps,
        step_stats: stats,
    })
}

/// Ensemble averages of ⟨O_k⟩ for the given operators (real parts).
pub fn mcwf(
    problem: &LindbladProblem,
    psi0: &[C64],
    samples: &[f64],
    observables: &[SparseOperator],
    opts: &McwfOptions,
) -> Result<TrajectoryEnsemble> {
    for o in observables {
        if o.dim() != problem.dim() {
            return Err(Error::Domain("observable dimension mismatch".into()));
        }
    }
    mcwf_observed(problem, psi0, samples, opts, |_, psi| observables.iter().map(|o| o.expect_vec(psi).re).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Dissipator, Hamiltonian};
    use crate::fockspace::{enumerate_basis, mode_operator, Mode, ModeLayout, OpKind};

    fn damped(photons: usize, kappa: f64) -> (LindbladProblem, SparseOperator) {
        let b = enumerate_basis(ModeLayout { n_sites: 0, n_cavities: 1, max_site_occ: 0, max_total_excitations: 0, max_photons_per_cavity: photons })
            .unwrap();
        let c = mode_operator(&b, Mode::Cavity(0), OpKind::Lower).unwrap();
        let n = c.adjoint().matmul(&c);
        let n_dim = b.len();
        let p = LindbladProblem::new(b, Hamiltonian::Static(SparseOperator::zeros(n_dim)), vec![Dissipator::Simple { op: c, rate: kappa }])
            .unwrap();
        (p, n)
    }

    #[test]
    fn damped_cavity_statistics() {
        let kappa = 0.5;
        let (p, n) = damped(1, kappa);
        let psi0 = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let ts = [0.5, 1.0, 2.0, 4.0];
        let opts = McwfOptions { n_traj: 2000, seed: 11, ..Default::default() };
        let e = mcwf(&p, &psi0, &ts, &[n], &opts).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            let want = (-kappa * t).exp();
            assert!((e.mean[i][0] - want).abs() < 3.0 * e.std_err[i][0].max(1e-3), "t={t} {} {want} {}", e.mean[i][0], e.std_err[i][0]);
        }
    }

    #[test]
    fn reproducible_with_seed() {
        let (p, n) = damped(1, 0.5);
        let psi0 = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let opts = McwfOptions { n_traj: 50, seed: 3, keep_jumps: true, ..Default::default() };
        let a = mcwf(&p, &psi0, &[1.0, 2.0], &[n.clone()], &opts).unwrap();
        let b = mcwf(&p, &psi0, &[1.0, 2.0], &[n], &opts).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.jumps, b.jumps);
    }

    #[test]
    fn no_channels_is_deterministic() {
        let b = enumerate_basis(ModeLayout { n_sites: 0, n_cavities: 1, max_site_occ: 0, max_total_excitations: 0, max_photons_per_cavity: 1 })
            .unwrap();
        let c = mode_operator(&b, Mode::Cavity(0), OpKind::Lower).unwrap();
        let h = c.add(&c.adjoint());
        let p = LindbladProblem::new(b, Hamiltonian::Static(h), vec![]).unwrap();
        let n = c.adjoint().matmul(&c);
        let e = mcwf(&p, &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], &[0.7], &[n], &McwfOptions { n_traj: 20, ..Default::default() })
            .unwrap();
        assert!(e.std_err[0][0] < 1e-14);
        assert!((e.mean[0][0] - 0.7f64.sin().powi(2)).abs() < 1e-8);
    }
}
