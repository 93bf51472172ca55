//! Bessel functions of the first kind for integer order.
//!
//! Miller's downward recurrence, normalised with J_0 + 2 Σ J_2k = 1.

/// J_0(x) .. J_mmax(x).
pub fn bessel_j_upto(mmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; mmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = mmax.max(ax.ceil() as usize);
    let start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    let start = start + (start & 1);

    let mut vals = vec![0.0f64; start + 2];
    vals[start + 1] = 0.0;
    vals[start] = 1e-300;
    let mut k = start;
    while k > 0 {
        let prev = 2.0 * k as f64 / ax * vals[k] - vals[k + 1];
        vals[k - 1] = prev;
        k -= 1;
        if prev.abs() > 1e250 {
            for v in vals[k..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = vals[0];
    for kk in (2..=start).step_by(2) {
        norm += 2.0 * vals[kk];
    }
    for m in 0..=mmax {
        let v = vals[m] / norm;
        out[m] = if x < 0.0 && m % 2 == 1 { -v } else { v };
    }
    out
}

/// J_m(x) for any integer order, using J_{-m} = (-1)^m J_m.
pub fn bessel_j(m: i64, x: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let v = bessel_j_upto(am, x)[am];
    if m < 0 && am % 2 == 1 {
        -v
    } else {
        v
    }
}

/// J_m(x) for m in [-mmax, mmax], indexed by m + mmax.
pub fn bessel_j_symmetric(mmax: usize, x: f64) -> Vec<f64> {
    let pos = bessel_j_upto(mmax, x);
    let mut out = vec![0.0; 2 * mmax + 1];
    for m in 0..=mmax {
        out[mmax + m] = pos[m];
        out[mmax - m] = if m % 2 == 1 { -pos[m] } else { pos[m] };
    }
    out
}

/// Smallest positive root of J_0(x) = J_1(x), by bisection.
pub fn j0_j1_crossing() -> f64 {
    let f = |x: f64| bessel_j(0, x) - bessel_j(1, x);
    bisect(f, 1.0, 2.0, 1e-14)
}

/// Smallest positive x with J_1(x) / J_0(x) = ratio (ratio > 0).
pub fn j1_over_j0_root(ratio: f64) -> f64 {
    // J_1/J_0 rises monotonically from 0 to +inf on (0, first zero of J_0)
    let f = |x: f64| bessel_j(1, x) - ratio * bessel_j(0, x);
    bisect(f, 1e-12, 2.404_825_557_695_77, 1e-14)
}

pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    // power series, fine for small x
    fn series(m: usize, x: f64) -> f64 {
        let mut term = (x / 2.0).powi(m as i32);
        for k in 1..=m {
            term /= k as f64;
        }
        let mut sum = term;
        for k in 1..60 {
            term *= -(x * x / 4.0) / (k as f64 * (k + m) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        assert_eq!(bessel_j(3, 0.0), 0.0);
        assert_eq!(bessel_j(-2, 0.0), 0.0);
    }

    #[test]
    fn matches_series() {
        for &x in &[0.01, 0.5, 1.0, 1.4347, 2.2, 3.7] {
            for m in 0..8 {
                let a = bessel_j(m as i64, x);
                let b = series(m, x);
                assert!((a - b).abs() < 1e-14 || (a - b).abs() < 1e-12 * b.abs(), "m={m} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reference_values() {
        // tabulated values
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((bessel_j(1, 1.0) - 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((bessel_j(0, 10.0) - (-0.245_935_764_451_348_3)).abs() < 1e-14);
        assert!((bessel_j(5, 40.0) - 0.122_573_465_977_117_8).abs() < 1e-13);
    }

    #[test]
    fn sum_rule() {
        let j = bessel_j_symmetric(50, 1.44);
        let s: f64 = j.iter().map(|v| v * v).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflection() {
        for m in -6i64..=6 {
            let sign = if m.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
            assert!((bessel_j(-m, 2.3) - sign * bessel_j(m, 2.3)).abs() < 1e-15);
            assert!((bessel_j(m, -2.3) - sign * bessel_j(m, 2.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn crossing_root() {
        let x = j0_j1_crossing();
        assert!((x - 1.434_695_650_819_565).abs() < 1e-12);
        assert!((bessel_j(0, x) - bessel_j(1, x)).abs() < 1e-13);
        assert!((series(0, x) - series(1, x)).abs() < 1e-12);
    }
}
