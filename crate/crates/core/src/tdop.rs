//! Time-dependent Hermitian operators of the form
//! H(t) = H_0 + Σ_k [f_k(t) A_k + h.c.].
//!
//! Every coefficient is f(t) = amp · exp(i (rate t + wiggle sin(freq t - offset))),
//! which covers dressed hopping, atom-cavity exchange, pumps and the
//! atom drive of the displaced frame.

use crate::sparse::SparseOperator;
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Oscillation {
    pub amp: C64,
    pub rate: f64,
    pub wiggle: f64,
    pub freq: f64,
    pub offset: f64,
}

impl Oscillation {
    pub fn constant(amp: C64) -> Self {
        Oscillation { amp, rate: 0.0, wiggle: 0.0, freq: 0.0, offset: 0.0 }
    }

    pub fn tone(amp: C64, rate: f64) -> Self {
        Oscillation { amp, rate, wiggle: 0.0, freq: 0.0, offset: 0.0 }
    }

    #[inline]
    pub fn at(&self, t: f64) -> C64 {
        let ph = self.rate * t + self.wiggle * (self.freq * t - self.offset).sin();
        self.amp * C64::from_polar(1.0, ph)
    }
}

#[derive(Clone, Debug)]
pub struct TdTerm {
    pub op: SparseOperator,
    pub coef: Oscillation,
}

#[derive(Clone, Debug)]
pub struct TdOperator {
    pub static_part: SparseOperator,
    pub terms: Vec<TdTerm>,
}

impl TdOperator {
    pub fn new(static_part: SparseOperator) -> Self {
        TdOperator { static_part, terms: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.static_part.dim()
    }

    pub fn push(&mut self, op: SparseOperator, coef: Oscillation) {
        assert_eq!(op.dim(), self.dim(), "dimension mismatch");
        if op.nnz() > 0 && coef.amp != C64::new(0.0, 0.0) {
            self.terms.push(TdTerm { op, coef });
        }
    }

    pub fn is_static(&self) -> bool {
        self.terms.is_empty()
    }

    /// Direct evaluation; slow but simple.
    pub fn at(&self, t: f64) -> SparseOperator {
        let mut trip: Vec<(usize, usize, C64)> = self.static_part.entries().collect();
        for term in &self.terms {
            let f = term.coef.at(t);
            for (r, c, v) in term.op.entries() {
                trip.push((r, c, f * v));
                trip.push((c, r, (f * v).conj()));
            }
        }
        SparseOperator::from_triplets(self.dim(), trip).expect("indices in range")
    }

    pub fn assembler(&self) -> Assembler {
        Assembler::new(self, None)
    }

    /// Assembler in the interaction picture w.r.t. a diagonal H_0 = diag(d).
    pub fn assembler_in_frame(&self, diag: &[f64]) -> Assembler {
        Assembler::new(self, Some(diag))
    }
}

/// Refills a fixed CSR pattern with H(t) values.
#[derive(Clone, Debug)]
pub struct Assembler {
    pattern: SparseOperator,
    base: Vec<C64>,
    // per term: (slot, value) for A and for A†
    fwd: Vec<Vec<(u32, C64)>>,
    bwd: Vec<Vec<(u32, C64)>>,
    coefs: Vec<Oscillation>,
    // interaction-picture slot frequencies d_r - d_c
    slot_freq: Option<Vec<f64>>,
}

impl Assembler {
    fn new(op: &TdOperator, diag: Option<&[f64]>) -> Self {
        let dim = op.dim();
        let one = C64::new(1.0, 0.0);
        let mut trip: Vec<(usize, usize, C64)> =
            op.static_part.entries().map(|(r, c, _)| (r, c, one)).collect();
        for term in &op.terms {
            for (r, c, _) in term.op.entries() {
                trip.push((r, c, one));
                trip.push((c, r, one));
            }
        }
        let pattern = SparseOperator::from_triplets(dim, trip).expect("indices in range");
        let rp = pattern.row_ptr();
        let cols = pattern.col_indices();
        let slot = |r: usize, c: usize| -> u32 {
            let lo = rp[r];
            let k = cols[lo..rp[r + 1]].binary_search(&c).expect("slot in pattern");
            (lo + k) as u32
        };
        let mut base = vec![C64::new(0.0, 0.0); pattern.nnz()];
        for (r, c, v) in op.static_part.entries() {
            base[slot(r, c) as usize] += v;
        }
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        for term in &op.terms {
            fwd.push(term.op.entries().map(|(r, c, v)| (slot(r, c), v)).collect());
            bwd.push(term.op.entries().map(|(r, c, v)| (slot(c, r), v.conj())).collect());
        }
        let slot_freq = diag.map(|d| {
            let mut f = vec![0.0; pattern.nnz()];
            for r in 0..dim {
                for k in rp[r]..rp[r + 1] {
                    f[k] = d[r] - d[cols[k]];
                }
            }
            f
        });
        let mut a = Assembler {
            pattern,
            base,
            fwd,
            bwd,
            coefs: op.terms.iter().map(|t| t.coef).collect(),
            slot_freq,
        };
        // diagonal static entries vanish in the interaction picture
        if a.slot_freq.is_some() {
            let rp = a.pattern.row_ptr().to_vec();
            let cols = a.pattern.col_indices().to_vec();
            for r in 0..dim {
                for k in rp[r]..rp[r + 1] {
                    if cols[k] == r {
                        a.base[k] -= C64::new(diag.unwrap()[r], 0.0);
                    }
                }
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Write H(t) (or H_I(t)) into `out`, which must share this pattern.
    pub fn fill(&self, t: f64, out: &mut SparseOperator) {
        let vals = out.values_mut();
        vals.copy_from_slice(&self.base);
        for (k, c) in self.coefs.iter().enumerate() {
            let f = c.at(t);
            let fc = f.conj();
            for &(s, v) in &self.fwd[k] {
                vals[s as usize] += f * v;
            }
            for &(s, v) in &self.bwd[k] {
                vals[s as usize] += fc * v;
            }
        }
        if let Some(freq) = &self.slot_freq {
            for (v, &w) in vals.iter_mut().zip(freq) {
                if w != 0.0 {
                    *v *= C64::from_polar(1.0, w * t);
                }
            }
        }
    }

    /// A fresh operator with this pattern, filled at t.
    pub fn build(&self, t: f64) -> SparseOperator {
        let mut out = self.pattern.clone();
        self.fill(t, &mut out);
        out
    }
}
