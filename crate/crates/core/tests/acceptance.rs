//! Acceptance run: one PASS/FAIL line per headline criterion.
//!
//! `cargo test --release --test acceptance` runs everything (tens of
//! minutes on one core). A trailing argument selects criteria by substring,
//! e.g. `cargo test --test acceptance -- tunnelling flux`. The process exits
//! non-zero on failures only when FLOQRES_ACCEPTANCE_STRICT is set, so the
//! workspace test run reports failing criteria without aborting.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;

use floqres::cli::config::{ExperimentConfig, InitialState, ModelKind, Observable, Runner};
use floqres::cli::presets::preset;
use floqres::cli::runner::{evolve, prepare, Prepared, TimeSeries};
use floqres::cli::scan_experiment;
use floqres::dynamics::{
    floquet_propagator_block, integrate_master, mcwf, Dissipator, Hamiltonian, LindbladProblem, McwfOptions,
};
use floqres::effective::{bessel_j_symmetric, chi_xi_with_threshold, effective_tunneling, CouplingParams};
use floqres::fockspace::{enumerate_basis, mode_operator, Mode, ModeLayout, OpKind};
use floqres::model::{flux_drive_pattern, flux_lambda, FluxOptions, LatticeSpec};
use floqres::observables::postselect;
use floqres::C64;

// tolerances
const JEFF_TARGET: f64 = 0.549;
const JEFF_TOL: f64 = 0.005;
const FLUX_TARGET: f64 = 0.717;
const FLUX_TOL: f64 = 0.003;
const FIG3C_P0_TOL: f64 = 0.05;
const FIG3C_DISCARD_TOL: f64 = 0.02;
const FIG3C_FULL_PHOTONS: usize = 2;
const MCWF_SIGMAS: f64 = 3.0;
const FIG3D_SHORT_T: f64 = 40.0;
const RATE_TOL: f64 = 0.15;
const COLLAPSE_FRACTION: f64 = 0.2;
const AUTOSTAB_FACTOR: f64 = 3.0;
const FIG4_LOWER_BAND: f64 = 0.8;
const CAGE_LEAK: f64 = 0.01;
const TRACE_DRIFT: f64 = 1e-8;
const HERMITICITY: f64 = 1e-12;
const UNITARITY: f64 = 1e-9;
const QUASIENERGY_TOL: f64 = 0.05;
const BESSEL_SUM: f64 = 1e-12;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

thread_local! {
    /// Trace drift of every master-equation run, for the property suite.
    static DRIFTS: RefCell<Vec<(String, f64)>> = const { RefCell::new(Vec::new()) };
}

fn col(ts: &TimeSeries, name: &str) -> usize {
    ts.columns.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn run(label: &str, cfg: &ExperimentConfig) -> (Prepared, TimeSeries) {
    let p = prepare(cfg).unwrap_or_else(|e| panic!("{label}: {e}"));
    let ts = evolve(cfg, &p).unwrap_or_else(|e| panic!("{label}: {e}"));
    if ts.n_traj == 0 {
        DRIFTS.with(|d| d.borrow_mut().push((label.to_string(), ts.norm_drift)));
    }
    (p, ts)
}

fn final_populations(ts: &TimeSeries, n: usize) -> Vec<f64> {
    let last = ts.values.last().unwrap();
    (0..n).map(|e| last[col(ts, &format!("p_{e}"))]).collect()
}

fn tunnelling() -> Verdict {
    let lat = LatticeSpec::ladder(3);
    let d = flux_drive_pattern(&lat, PI / 2.0, 20.0, FluxOptions::default()).unwrap();
    let j = effective_tunneling(1.0, &d, 0, 1).norm();
    verdict((j - JEFF_TARGET).abs() <= JEFF_TOL, format!("|J_eff|/J = {j:.4} (target {JEFF_TARGET} ± {JEFF_TOL})"))
}

fn flux_condition() -> Verdict {
    let vals: Vec<f64> = [0.4, 0.5, 0.8]
        .iter()
        .map(|f| {
            let phi = f * PI;
            flux_lambda(phi, 20.0, FluxOptions::default()).unwrap() / 20.0 * (phi / 2.0).sin()
        })
        .collect();
    let ok = vals.iter().all(|v| (v - FLUX_TARGET).abs() <= FLUX_TOL);
    verdict(ok, format!("λ/ω sin(Φ/2) at Φ/π = 0.4, 0.5, 0.8: {vals:.4?}"))
}

fn fig3c() -> Verdict {
    let base = preset("fig3c_ladder_1exc").unwrap();
    let mut eff = base.clone();
    eff.run.runner = Runner::Effective;
    let (_, te) = run("fig3c effective", &eff);
    let mut full = base;
    full.run.runner = Runner::Full;
    full.run.full_photons = Some(FIG3C_FULL_PHOTONS);
    let (pf, tf) = run("fig3c full", &full);
    let n = pf.spectrum.len();
    let (i0e, i0f) = (col(&te, "p_0"), col(&tf, "p_0"));
    let dev = te.values.iter().zip(&tf.values).map(|(a, b)| (a[i0e] - b[i0f]).abs()).fold(0.0, f64::max);
    let pops = final_populations(&tf, n);
    let dominant = pops.iter().skip(1).all(|&p| p < pops[0]);
    let (de, df) = (te.values.last().unwrap()[col(&te, "discarded")], tf.values.last().unwrap()[col(&tf, "discarded")]);
    let pass = dev <= FIG3C_P0_TOL && dominant && (de - df).abs() <= FIG3C_DISCARD_TOL;
    verdict(
        pass,
        format!(
            "max |Δp_0| = {dev:.3} (≤ {FIG3C_P0_TOL}); final p_0 full {:.3} / effective {:.3}, dominant {dominant}; discarded full {df:.3} vs effective {de:.3} (≤ {FIG3C_DISCARD_TOL})",
            pops[0],
            te.values.last().unwrap()[i0e]
        ),
    )
}

/// Largest |direct − MCWF| in units of the trajectory standard error. A
/// trajectory is either lost from the sector or not, so with few loss events
/// in the sample the empirical error understates the null one. `discarded` is
/// floored at the binomial error, and a postselected column R gains
/// the shift max(R, 1 − R) that each lost trajectory can cause.
fn within_sigmas(direct: &TimeSeries, traj: &TimeSeries, cols: &[String]) -> (bool, f64) {
    let n = traj.n_traj as f64;
    let lost = direct.columns.iter().position(|c| c == "discarded");
    let mut worst = 0.0f64;
    for (a, (b, s)) in direct.values.iter().zip(traj.values.iter().zip(&traj.std_err)) {
        let q = lost.map_or(0.0, |j| a[j].clamp(0.0, 1.0));
        let binom = (q * (1.0 - q) / n).sqrt();
        for c in cols {
            let (i, k) = (col(direct, c), col(traj, c));
            let d = (a[i] - b[k]).abs();
            let mut se = s[k];
            if c == "discarded" {
                se = se.max(binom);
            } else if ["p_", "n_", "j_"].iter().any(|p| c.starts_with(p)) && !c.starts_with("p_raw") {
                se = se.hypot(binom * a[i].max(1.0 - a[i]).abs());
            }
            if d > 1e-9 {
                worst = worst.max(d / se.max(1e-300));
            }
        }
    }
    (worst <= MCWF_SIGMAS, worst)
}

fn fig3d() -> Verdict {
    let cfg = preset("fig3d_ladder_2exc_hardcore").unwrap();
    let (p, ts) = run("fig3d", &cfg);
    let pops = final_populations(&ts, p.spectrum.len());
    let dominant = pops.iter().skip(1).all(|&x| x < pops[0]);
    let runner_up = pops.iter().skip(1).cloned().fold(0.0, f64::max);

    let mut short = cfg.clone();
    short.run.t_final = FIG3D_SHORT_T;
    short.run.dt = 10.0;
    short.model.photons = 2;
    short.observables.include = vec![Observable::Populations, Observable::Discarded];
    let mut direct = short.clone();
    direct.run.runner = Runner::Effective;
    let (ps, td) = run("fig3d direct", &direct);
    let (_, tm) = run("fig3d mcwf", &short);
    let mut cols: Vec<String> = (0..ps.spectrum.len()).map(|e| format!("p_{e}")).collect();
    cols.push("discarded".into());
    let (agree, worst) = within_sigmas(&td, &tm, &cols);
    verdict(
        dominant && agree,
        format!(
            "final p_0 = {:.3} vs next {runner_up:.3} ({} trajectories); t ≤ {FIG3D_SHORT_T}: worst MCWF deviation {worst:.2} SE (≤ {MCWF_SIGMAS})",
            pops[0], ts.n_traj
        ),
    )
}

fn rate_formula() -> Verdict {
    let mut cfg = preset("fig3c_ladder_1exc").unwrap();
    cfg.run.runner = Runner::Effective;
    cfg.run.initial = InitialState::Eigenstate { index: 1 };
    cfg.observables.include = vec![Observable::RawPopulations];
    let p = prepare(&cfg).unwrap();
    let predicted: f64 = p
        .design
        .cavities
        .iter()
        .flat_map(|c| c.transitions.iter())
        .filter(|t| t.from == 1)
        .map(|t| t.rate)
        .sum();
    let ratio = p
        .validity
        .conditions
        .iter()
        .filter(|c| c.name.contains("kappa_1_0"))
        .map(|c| c.ratio)
        .fold(f64::INFINITY, f64::min);
    cfg.run.t_final = 2.0 / predicted;
    cfg.run.dt = cfg.run.t_final / 40.0;
    let (_, ts) = run("rate", &cfg);
    let i = col(&ts, "p_raw_1");
    let pts: Vec<(f64, f64)> = ts
        .times
        .iter()
        .zip(&ts.values)
        .filter(|(_, v)| v[i] > 0.1 && v[i] < 0.95)
        .map(|(&t, v)| (t, v[i].ln()))
        .collect();
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let fitted = -slope;
    let rel = (fitted - predicted).abs() / predicted;
    verdict(
        rel <= RATE_TOL,
        format!(
            "1 → 0: fitted Γ = {fitted:.4e}, predicted 4 nbar |χ|²/κ = {predicted:.4e}, relative error {rel:.3} (≤ {RATE_TOL}); κ / (|χ| sqrt(nbar)) = {ratio:.1}"
        ),
    )
}

fn scan_collapse() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("sm_plaquette_scan_U155").unwrap();
    cfg.output.dir = dir.path().display().to_string();
    let out = scan_experiment(&cfg, true).unwrap();
    let res = out.scan.unwrap();
    let io = res.columns.iter().position(|c| c == "p_raw_0").unwrap();
    let t_end = res.rows.iter().map(|r| r.t).fold(f64::NAN, f64::max);
    let finals: Vec<(f64, bool, f64)> =
        res.rows.iter().filter(|r| r.t == t_end).map(|r| (r.params[0], r.flagged, r.values[io])).collect();
    let mut clean: Vec<f64> = finals.iter().filter(|f| !f.1).map(|f| f.2).collect();
    clean.sort_by(f64::total_cmp);
    let reference = clean[clean.len() / 2];
    let omega = cfg.model.drive.omega;
    let mut lines = Vec::new();
    let mut all = true;
    let mut stripe = false;
    for &(delta, flagged, p0) in &finals {
        if !flagged {
            continue;
        }
        let collapsed = p0 < COLLAPSE_FRACTION * reference;
        all &= collapsed;
        if (delta - 2.0 * omega).abs() < 1.0 {
            stripe = collapsed;
        }
        lines.push(format!("δ = {delta}: {p0:.3}{}", if collapsed { "" } else { " (no collapse)" }));
    }
    verdict(
        all && stripe && !lines.is_empty(),
        format!("off-resonant final p_0 = {reference:.3}; flagged points: {}", lines.join(", ")),
    )
}

fn autostab() -> Verdict {
    let cfg = preset("sm_autostab").unwrap();
    let (p, ts) = run("autostab", &cfg);
    let pops = final_populations(&ts, p.spectrum.len());
    let other = pops.iter().enumerate().filter(|(e, _)| *e != 1).map(|(_, &x)| x).fold(0.0, f64::max);
    verdict(
        pops[1] >= AUTOSTAB_FACTOR * other,
        format!("final p_1 = {:.3}, largest other {other:.3}, ratio {:.2} (≥ {AUTOSTAB_FACTOR})", pops[1], pops[1] / other),
    )
}

fn fig4() -> Verdict {
    let cfg = preset("fig4_interband_100").unwrap();
    let (p, ts) = run("fig4", &cfg);
    let half = p.spectrum.len() / 2;
    let e = &p.spectrum.energies;
    let gap = e[half] - e[half - 1];
    let lower: f64 = final_populations(&ts, p.spectrum.len())[..half].iter().sum();
    verdict(
        lower > FIG4_LOWER_BAND && gap > 0.0,
        format!(
            "lower-band population {lower:.3} at t = {} (> {FIG4_LOWER_BAND}, {} trajectories); band gap {gap:.3} (lower max {:.3}, upper min {:.3})",
            ts.times.last().unwrap(),
            ts.n_traj,
            e[half - 1],
            e[half]
        ),
    )
}

fn ab_cage() -> Verdict {
    let cfg = preset("sm_abcage").unwrap();
    let (p, ts) = run("abcage", &cfg);
    let last = ts.values.last().unwrap();
    let centre = cfg.model.cavities[0].site;
    let outside: Vec<(usize, f64)> = (0..p.lattice.n_sites)
        .filter(|s| s.abs_diff(centre) > 2)
        .map(|s| (s, last[col(&ts, &format!("n_{s}"))]))
        .collect();
    let worst = outside.iter().map(|o| o.1).fold(0.0, f64::max);
    verdict(worst < CAGE_LEAK, format!("densities outside sites {}..={}: {outside:.4?} (< {CAGE_LEAK})", centre - 2, centre + 2))
}

fn damped_cavity_agreement() -> (bool, f64) {
    let kappa = 0.4;
    let b = enumerate_basis(ModeLayout { n_sites: 0, n_cavities: 1, max_site_occ: 0, max_total_excitations: 0, max_photons_per_cavity: 3 })
        .unwrap();
    let c = mode_operator(&b, Mode::Cavity(0), OpKind::Lower).unwrap();
    let n_op = c.adjoint().matmul(&c);
    let h = c.add(&c.adjoint()).scale(C64::new(0.3, 0.0));
    let dim = b.len();
    let prob = LindbladProblem::new(b, Hamiltonian::Static(h), vec![Dissipator::Simple { op: c, rate: kappa }]).unwrap();
    let mut psi0 = vec![C64::new(0.0, 0.0); dim];
    psi0[3] = C64::new(1.0, 0.0);
    let ts = [0.5, 1.0, 2.0, 4.0, 8.0];
    let e = mcwf(&prob, &psi0, &ts, &[n_op.clone()], &McwfOptions { n_traj: 1000, seed: 5, ..Default::default() }).unwrap();
    let mut rho0 = DMatrix::zeros(dim, dim);
    rho0[(3, 3)] = C64::new(1.0, 0.0);
    let me = integrate_master(&prob, &rho0, &ts).unwrap();
    DRIFTS.with(|d| d.borrow_mut().push(("damped cavity".into(), me.norm_drift)));
    let mut worst = 0.0f64;
    for (i, rho) in me.states.iter().enumerate() {
        let want = n_op.expect_dm(rho).re;
        worst = worst.max((e.mean[i][0] - want).abs() / e.std_err[i][0].max(1e-300));
    }
    (worst <= MCWF_SIGMAS, worst)
}

fn properties() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    // Hermiticity of the full and effective Hamiltonians
    let cfg = preset("fig3c_ladder_1exc").unwrap();
    let p = prepare(&cfg).unwrap();
    let mut full_cfg = cfg.clone();
    full_cfg.run.full_photons = Some(FIG3C_FULL_PHOTONS);
    let full = p.full_model(&full_cfg).unwrap();
    let hf = full.operator();
    let he = p.eff.operator();
    let herm = (0..7)
        .map(|k| k as f64 * full.period() / 7.0)
        .map(|t| hf.at(t).hermiticity_error().max(he.at(t).hermiticity_error()))
        .fold(p.eff.h_s_eff.hermiticity_error(), f64::max);
    ok &= herm < HERMITICITY;
    notes.push(format!("hermiticity {herm:.1e}"));

    // Floquet propagator of the pump-free lattice against H_eff
    let mut bare = cfg.clone();
    bare.model.cavities.clear();
    bare.design.assignments.clear();
    let pb = prepare(&bare).unwrap();
    let lattice_model = pb.full_model(&bare).unwrap();
    let idx: Vec<usize> = lattice_model.basis.sector(1).collect();
    let fl = floquet_propagator_block(&lattice_model, &idx).unwrap();
    ok &= fl.unitarity_error < UNITARITY;
    let mut qe = fl.quasienergies.clone();
    qe.sort_by(f64::total_cmp);
    let dq = qe.iter().zip(&pb.spectrum.energies).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= qe.len() == pb.spectrum.len() && dq < QUASIENERGY_TOL;
    notes.push(format!("unitarity {:.1e}, quasienergy vs H_eff {dq:.4}", fl.unitarity_error));

    // MCWF against direct integration
    let (cav_ok, cav_worst) = damped_cavity_agreement();
    let mut lad = cfg.clone();
    lad.run.runner = Runner::Effective;
    lad.run.t_final = 40.0;
    lad.run.dt = 5.0;
    lad.observables.include = vec![Observable::Populations, Observable::Discarded, Observable::Densities];
    let (_, direct) = run("ladder direct", &lad);
    lad.run.runner = Runner::Mcwf;
    lad.run.mcwf_model = ModelKind::Effective;
    let (_, traj) = run("ladder mcwf", &lad);
    let (lad_ok, lad_worst) = within_sigmas(&direct, &traj, &direct.columns);
    ok &= cav_ok && lad_ok;
    notes.push(format!("MCWF vs direct: damped cavity {cav_worst:.2} SE, ladder {lad_worst:.2} SE"));

    // Bessel sum rule
    let bs = [0.1, 1.16, 2.405, 7.0, 25.0]
        .iter()
        .map(|&x| (bessel_j_symmetric(80, x).iter().map(|j| j * j).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    ok &= bs < BESSEL_SUM;
    notes.push(format!("Bessel sum rule {bs:.1e}"));

    // χ = ξ̃ − ξ
    let mut chi_exact = true;
    for n in 0..4 {
        for &delta in &[34.8, 35.2, 45.0] {
            let cp = CouplingParams { g: 1.0, delta, u: -8.0, lambda: 23.0, omega: 20.0 };
            let c = chi_xi_with_threshold(&cp, n, 60, 0.0, 0).unwrap();
            chi_exact &= c.chi == c.xi_tilde - c.xi;
        }
    }
    ok &= chi_exact;
    notes.push(format!("χ = ξ̃ − ξ exact {chi_exact}"));

    // postselection on a state with weight outside the sector
    let b = &lattice_model.basis;
    let d = b.len();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        rho[(i, i)] = C64::new(1.0 + i as f64, 0.0);
        if i + 1 < d {
            rho[(i, i + 1)] = C64::new(0.1, 0.2);
            rho[(i + 1, i)] = C64::new(0.1, -0.2);
        }
    }
    let tr: C64 = rho.trace();
    rho /= tr;
    let once = postselect(&rho, b, 1).unwrap();
    let twice = postselect(&once.rho_ps, b, 1).unwrap();
    let idem = (&once.rho_ps - &twice.rho_ps).iter().map(|z| z.norm()).fold(0.0, f64::max);
    ok &= idem < 1e-14 && twice.discarded.abs() < 1e-14;
    notes.push(format!("postselection idempotence {idem:.1e}"));

    // trace drift of every direct run in this session
    let drifts = DRIFTS.with(|d| d.borrow().clone());
    let (wl, wd) = drifts.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    ok &= wd < TRACE_DRIFT;
    notes.push(format!("trace drift max {wd:.1e} over {} runs{}", drifts.len(), if wl.is_empty() { String::new() } else { format!(" ({wl})") }));

    verdict(ok, notes.join("; "))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: &[Criterion] = &[
        ("tunnelling", tunnelling),
        ("flux_condition", flux_condition),
        ("fig3c", fig3c),
        ("fig3d", fig3d),
        ("rate_formula", rate_formula),
        ("scan_collapse", scan_collapse),
        ("autostab", autostab),
        ("fig4", fig4),
        ("ab_cage", ab_cage),
        ("properties", properties),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let strict = std::env::var_os("FLOQRES_ACCEPTANCE_STRICT").is_some();
    let (mut passed, mut total) = (0, 0);
    for (name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        total += 1;
        let t0 = Instant::now();
        let v = f();
        if v.pass {
            passed += 1;
        }
        println!("{} {name}: {} [{:.1} s]", if v.pass { "PASS" } else { "FAIL" }, v.detail, t0.elapsed().as_secs_f64());
    }
    println!("acceptance: {passed}/{total} criteria passed");
    if strict && passed < total {
        std::process::exit(1);
    }
}
