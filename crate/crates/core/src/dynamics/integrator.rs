//! Adaptive embedded Runge-Kutta integration of complex ODE systems.
//!
//! Two pairs are provided: Dormand-Prince 5(4) and Dormand-Prince 8(5,3).
//! Steps are clamped so that every requested sample time is hit exactly.

use crate::error::{Error, Result};
use crate::C64;

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&mut self, t: f64, y: &[C64], dy: &mut [C64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dopri5,
    Dop853,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorOptions {
    pub method: Method,
    pub atol: f64,
    pub rtol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    /// Smallest admissible step, relative to max(1, |t|).
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            method: Method::Dop853,
            atol: 1e-10,
            rtol: 1e-8,
            h_init: None,
            h_max: f64::INFINITY,
            h_min_rel: 1e-13,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl StepStats {
    pub fn merge(&mut self, o: &StepStats) {
        self.accepted += o.accepted;
        self.rejected += o.rejected;
        self.rhs_evals += o.rhs_evals;
    }
}

const DP5_C: [f64; 6] = [0.0, 0.2, 0.3, 0.8, 0.8888888888888888, 1.0];
const DP5_A: [&[f64]; 6] = [
    &[],
    &[0.2],
    &[0.075, 0.225],
    &[0.9777777777777777, -3.7333333333333334, 3.5555555555555554],
    &[2.9525986892242035, -11.595793324188385, 9.822892851699436, -0.2908093278463649],
    &[2.8462752525252526, -10.757575757575758, 8.906422717743473, 0.2784090909090909, -0.2735313036020583],
];
const DP5_B: [f64; 6] = [0.09114583333333333, 0.0, 0.44923629829290207, 0.6510416666666666, -0.322376179245283, 0.13095238095238096];
const DP5_E: [f64; 7] = [-0.0012326388888888888, 0.0, 0.0042527702905061394, -0.03697916666666667, 0.05086379716981132, -0.0419047619047619, 0.025];
const DP8_C: [f64; 12] = [0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0];
const DP8_A: [&[f64]; 12] = [
    &[],
    &[0.05260015195876773],
    &[0.0197250569845379, 0.0591751709536137],
    &[0.02958758547680685, 0.0, 0.08876275643042054],
    &[0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792],
    &[0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242],
    &[0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125],
    &[0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023],
    &[0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996],
    &[0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627],
    &[-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196],
    &[2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636],
];
const DP8_B: [f64; 12] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];
const DP8_E3: [f64; 13] = [-0.18980075407240762, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, -0.4226823213237919, -0.1521609496625161, 0.20136540080403034, 0.02265179219836082, 0.0];
const DP8_E5: [f64; 13] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294, 0.0];

struct Tableau {
    c: &'static [f64],
    a: &'static [&'static [f64]],
    b: &'static [f64],
    order: i32,
    error_order: i32,
}

const DOPRI5: Tableau = Tableau { c: &DP5_C, a: &DP5_A, b: &DP5_B, order: 5, error_order: 4 };
const DOP853: Tableau = Tableau { c: &DP8_C, a: &DP8_A, b: &DP8_B, order: 8, error_order: 7 };

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// One adaptive stepper; owns its stage buffers.
pub struct Stepper {
    opts: IntegratorOptions,
    tab: &'static Tableau,
    k: Vec<Vec<C64>>,
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    h: Option<f64>,
    fsal: bool,
    pub stats: StepStats,
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt()
}

const CHUNK: usize = 512;

fn terms<'a>(k: &'a [Vec<C64>], coef: &[f64], h: f64) -> Vec<(&'a [C64], f64)> {
    coef.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(j, &c)| (k[j].as_slice(), c * h)).collect()
}

fn accumulate(out: &mut [C64], terms: &[(&[C64], f64)], lo: usize) {
    let m = out.len();
    out.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
    for (k, c) in terms {
        for (o, v) in out.iter_mut().zip(&k[lo..lo + m]) {
            *o += v * c;
        }
    }
}

// out = y + h Σ_j a_j k_j, chunked so each k is streamed once.
fn combine(out: &mut [C64], y: &[C64], k: &[Vec<C64>], a: &[f64], h: f64) {
    let t = terms(k, a, h);
    for lo in (0..y.len()).step_by(CHUNK) {
        let hi = (lo + CHUNK).min(y.len());
        let o = &mut out[lo..hi];
        o.copy_from_slice(&y[lo..hi]);
        for (kj, c) in &t {
            for (o, v) in o.iter_mut().zip(&kj[lo..hi]) {
                *o += v * c;
            }
        }
    }
}

impl Stepper {
    pub fn new(n: usize, opts: IntegratorOptions) -> Self {
        let tab = match opts.method {
            Method::Dopri5 => &DOPRI5,
            Method::Dop853 => &DOP853,
        };
        Stepper {
            opts,
            tab,
            k: vec![vec![C64::new(0.0, 0.0); n]; tab.b.len() + 1],
            ytmp: vec![C64::new(0.0, 0.0); n],
            ynew: vec![C64::new(0.0, 0.0); n],
            h: opts.h_init,
            fsal: false,
            stats: StepStats::default(),
        }
    }

    /// Must be called after the state is modified outside the stepper.
    pub fn invalidate(&mut self) {
        self.fsal = false;
    }

    pub fn step_size(&self) -> Option<f64> {
        self.h
    }

    fn eval<S: OdeSystem>(&mut self, sys: &mut S, t: f64, slot: usize, from_tmp: bool, y: &[C64]) {
        let src = if from_tmp { &self.ytmp } else { y };
        // the k buffers and ytmp are disjoint fields
        let out = &mut self.k[slot];
        sys.rhs(t, src, out);
        self.stats.rhs_evals += 1;
    }

    fn ensure_f0<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &[C64]) {
        if !self.fsal {
            self.eval(sys, t, 0, false, y);
            self.fsal = true;
        }
    }

    fn initial_step<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &[C64], span: f64) -> f64 {
        let n = y.len();
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        let scale: Vec<f64> = y.iter().map(|v| atol + rtol * v.norm()).collect();
        let d0 = rms(y.iter().zip(&scale).map(|(v, s)| v.norm() / s), n);
        let d1 = rms(self.k[0].iter().zip(&scale).map(|(v, s)| v.norm() / s), n);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for i in 0..n {
            self.ytmp[i] = y[i] + self.k[0][i] * h0;
        }
        self.eval(sys, t + h0, 1, true, y);
        let d2 = rms(
            self.k[1].iter().zip(&self.k[0]).zip(&scale).map(|((a, b), s)| (a - b).norm() / s),
            n,
        ) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / (self.tab.order as f64 + 1.0))
        };
        (100.0 * h0).min(h1).min(self.opts.h_max)
    }

    fn stages<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &[C64], h: f64) {
        let tab = self.tab;
        let s = tab.b.len();
        for st in 1..s {
            combine(&mut self.ytmp, y, &self.k, tab.a[st], h);
            self.eval(sys, t + tab.c[st] * h, st, true, y);
        }
        combine(&mut self.ynew, y, &self.k, tab.b, h);
    }

    fn error_norm(&self, y: &[C64], h: f64) -> f64 {
        let n = y.len();
        let (atol, rtol) = (self.opts.atol, self.opts.rtol);
        let (e1, e2): (&[f64], &[f64]) = match self.opts.method {
            Method::Dopri5 => (&DP5_E, &[]),
            Method::Dop853 => (&DP8_E5, &DP8_E3),
        };
        let t1 = terms(&self.k, e1, 1.0);
        let t2 = terms(&self.k, e2, 1.0);
        let mut b1 = [C64::new(0.0, 0.0); CHUNK];
        let mut b2 = [C64::new(0.0, 0.0); CHUNK];
        let (mut s1, mut s2) = (0.0, 0.0);
        for lo in (0..n).step_by(CHUNK) {
            let hi = (lo + CHUNK).min(n);
            let m = hi - lo;
            accumulate(&mut b1[..m], &t1, lo);
            accumulate(&mut b2[..m], &t2, lo);
            for i in 0..m {
                let sc = atol + rtol * y[lo + i].norm().max(self.ynew[lo + i].norm());
                s1 += b1[i].norm_sqr() / (sc * sc);
                s2 += b2[i].norm_sqr() / (sc * sc);
            }
        }
        match self.opts.method {
            Method::Dopri5 => h.abs() * (s1 / n as f64).sqrt(),
            Method::Dop853 => {
                if s1 == 0.0 && s2 == 0.0 {
                    return 0.0;
                }
                h.abs() * s1 / ((s1 + 0.01 * s2) * n as f64).sqrt()
            }
        }
    }

    /// One accepted adaptive step from (t, y), never beyond `t_max`.
    /// Returns the new time; `y` is overwritten.
    pub fn step<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &mut [C64], t_max: f64) -> Result<f64> {
        let span = t_max - t;
        if span <= 0.0 {
            return Ok(t);
        }
        self.ensure_f0(sys, t, y);
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(sys, t, y, span),
        };
        let h_min = self.opts.h_min_rel * t.abs().max(1.0);
        let s = self.tab.b.len();
        let expo = -1.0 / (self.tab.error_order as f64 + 1.0);
        loop {
            if self.stats.accepted + self.stats.rejected >= self.opts.max_steps {
                return Err(Error::Integration { t, reason: "step budget exhausted".into() });
            }
            h = h.min(self.opts.h_max);
            // avoid a sliver step right before a sample time
            let clamped = h >= span || span - h < 1e-3 * h;
            let h_try = if clamped { span } else { h };
            self.stages(sys, t, y, h_try);
            let t_new = if clamped { t_max } else { t + h_try };
            self.eval_new(sys, t_new, s);
            let err = self.error_norm(y, h_try);
            if err.is_finite() && err <= 1.0 {
                let fac = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(expo)).clamp(MIN_FACTOR, MAX_FACTOR) };
                // a step shortened to hit a sample keeps the natural size
                self.h = Some(if clamped && h_try < h { h } else { h_try * fac });
                y.copy_from_slice(&self.ynew);
                self.k.swap(0, s);
                self.stats.accepted += 1;
                return Ok(t_new);
            }
            self.stats.rejected += 1;
            let fac = if err.is_finite() { (SAFETY * err.powf(expo)).max(MIN_FACTOR) } else { MIN_FACTOR };
            h = h_try * fac;
            if h < h_min {
                return Err(Error::Integration { t, reason: format!("step size underflow (h = {h:.3e})") });
            }
        }
    }

    fn eval_new<S: OdeSystem>(&mut self, sys: &mut S, t: f64, slot: usize) {
        std::mem::swap(&mut self.ytmp, &mut self.ynew);
        self.eval(sys, t, slot, true, &[]);
        std::mem::swap(&mut self.ytmp, &mut self.ynew);
    }

    /// A single unadaptive step of size h from (t, y) into `out`.
    pub fn fixed_step<S: OdeSystem>(&mut self, sys: &mut S, t: f64, y: &[C64], h: f64, out: &mut [C64]) {
        self.ensure_f0(sys, t, y);
        self.stages(sys, t, y, h);
        out.copy_from_slice(&self.ynew);
    }
}

/// Integrate from `t0` through every time in `samples` (ascending, ≥ t0).
///
/// `post_step` runs after every accepted step and may modify the state in
/// place; `on_sample` receives each sample.
pub fn integrate<S, P, F>(
    sys: &mut S,
    t0: f64,
    y: &mut [C64],
    samples: &[f64],
    opts: IntegratorOptions,
    mut post_step: P,
    mut on_sample: F,
) -> Result<StepStats>
where
    S: OdeSystem,
    P: FnMut(f64, &mut [C64]) -> Result<bool>,
    F: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let mut st = Stepper::new(y.len(), opts);
    let mut t = t0;
    for (i, &ts) in samples.iter().enumerate() {
        if ts < t {
            return Err(Error::Domain(format!("sample times must be ascending and ≥ t0 (got {ts} after {t})")));
        }
        while t < ts {
            t = st.step(sys, t, y, ts)?;
            if post_step(t, y)? {
                st.invalidate();
            }
        }
        on_sample(i, t, y)?;
    }
    Ok(st.stats)
}
