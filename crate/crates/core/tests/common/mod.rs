//! Exact-arithmetic reference implementations shared by the oracle tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn binom(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

pub fn rat(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

fn pow(t: &BigRational, e: usize) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc *= t;
    }
    acc
}

/// Π_i C(N_i + j, k_i)/C(N_i, k_i) for signed j.
pub fn ratio(n: &[usize], k: &[usize], j: i64) -> BigRational {
    let mut acc = BigRational::one();
    for (&ni, &ki) in n.iter().zip(k) {
        let h = (ni as i64 + j) as usize;
        acc *= BigRational::new(binom(h, ki), binom(ni, ki));
    }
    acc
}

/// 1 − c₋ Σ_{j≥1} r(−j) t^{−j} − c₊ Σ_{j≥1} r(j) t^j, exactly.
pub fn psi_weighted(
    k: &[usize],
    n: &[usize],
    h: &[usize],
    c_minus: &BigRational,
    c_plus: &BigRational,
    t: &BigRational,
) -> BigRational {
    let jm = n.iter().zip(k).map(|(a, b)| a - b).min().unwrap();
    let jp = h.iter().zip(n).map(|(a, b)| a - b).min().unwrap();
    let mut s = BigRational::one();
    if jm > 0 {
        let inv = t.recip();
        let (mut acc, mut p) = (BigRational::zero(), BigRational::one());
        for j in 1..=jm {
            p *= &inv;
            acc += ratio(n, k, -(j as i64)) * &p;
        }
        s -= c_minus * acc;
    }
    let (mut acc, mut p) = (BigRational::zero(), BigRational::one());
    for j in 1..=jp {
        p *= t;
        acc += ratio(n, k, j as i64) * &p;
    }
    s -= c_plus * acc;
    s
}

/// ψ_{k,N,H}(t) with weight β/(|J_0|−1) on both sums.
pub fn psi_exact(k: &[usize], n: &[usize], h: &[usize], beta: f64, t: f64) -> BigRational {
    let d = n.iter().min().unwrap() + h.iter().zip(n).map(|(a, b)| a - b).min().unwrap();
    let c = rat(beta) / BigRational::from_integer(BigInt::from(d));
    psi_weighted(k, n, h, &c, &c, &rat(t))
}

/// ψ for m = 1 in plain floating point with direct binomial ratios.
pub fn psi_direct_1d(k: usize, n: usize, h: usize, c_minus: f64, c_plus: f64, t: f64) -> f64 {
    let c = |a: usize, b: usize| -> f64 {
        (0..b).map(|i| (a - i) as f64 / (i + 1) as f64).product()
    };
    let base = c(n, k);
    let mut s = 1.0;
    for hh in k..n {
        s -= c_minus * c(hh, k) / base * t.powi(hh as i32 - n as i32);
    }
    for hh in n + 1..=h {
        s -= c_plus * c(hh, k) / base * t.powi(hh as i32 - n as i32);
    }
    s
}

/// Zero crossings of `f` on a uniform grid of `points` interior points of
/// (lo, hi), as midpoints of the bracketing cells.
pub fn dense_scan_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points + 1) as f64;
    let mut out = Vec::new();
    let mut prev_x = lo + step;
    let mut prev = f(prev_x);
    for i in 2..=points {
        let x = lo + step * i as f64;
        let y = f(x);
        if (prev >= 0.0) != (y >= 0.0) {
            out.push(0.5 * (prev_x + x));
        }
        prev = y;
        prev_x = x;
    }
    out
}

/// Σ_{k ≤ h ≤ H} λ(h) Π_i C(h_i,k_i)/C(N_i,k_i) (1−v_i)^{h_i−N_i}, summed
/// over the full index grid in exact arithmetic.
pub fn region_exhaustive(
    lambda: impl Fn(&[usize]) -> f64,
    k: &[usize],
    n: &[usize],
    h_max: &[usize],
    v: &[f64],
) -> f64 {
    let m = k.len();
    let x: Vec<BigRational> = v.iter().map(|&vi| BigRational::one() - rat(vi)).collect();
    let mut h: Vec<usize> = k.to_vec();
    let mut total = BigRational::zero();
    loop {
        let lam = lambda(&h);
        if lam != 0.0 {
            let mut term = rat(lam);
            for i in 0..m {
                term *= BigRational::new(binom(h[i], k[i]), binom(n[i], k[i]));
                if h[i] >= n[i] {
                    term *= pow(&x[i], h[i] - n[i]);
                } else {
                    term /= pow(&x[i], n[i] - h[i]);
                }
            }
            total += term;
        }
        let mut i = 0;
        loop {
            if i == m {
                return to_f64(&total);
            }
            if h[i] < h_max[i] {
                h[i] += 1;
                break;
            }
            h[i] = k[i];
            i += 1;
        }
    }
}
