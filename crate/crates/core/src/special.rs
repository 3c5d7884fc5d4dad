//! Special functions, log-domain combinatorics and 1-D quadrature.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `P(a <= Z <= b)` for a standard normal `Z`, computed from whichever tail
/// avoids cancellation.
pub fn normal_interval(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        0.5 * (libm::erfc(a * FRAC_1_SQRT_2) - libm::erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (libm::erfc(-b * FRAC_1_SQRT_2) - libm::erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * libm::erfc(-a * FRAC_1_SQRT_2) - 0.5 * libm::erfc(b * FRAC_1_SQRT_2)
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_factorial(m: u64) -> f64 {
    libm::lgamma(m as f64 + 1.0)
}

/// `ln C(n, k)`; `-inf` when `k > n`.
///
/// Small `min(k, n-k)` uses an explicit log-sum, which stays accurate for
/// `n` around 1e9 where the log-gamma difference would lose digits.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let kk = k.min(n - k);
    if kk == 0 {
        return 0.0;
    }
    if kk <= 64 {
        let mut acc = 0.0;
        for i in 0..kk {
            acc += ((n - i) as f64).ln();
        }
        acc - ln_factorial(kk)
    } else {
        ln_factorial(n) - ln_factorial(kk) - ln_factorial(n - kk)
    }
}

/// `ln (total! / prod parts!)`. Parts must sum to `total`.
pub fn ln_multinomial(total: u64, parts: &[u64]) -> f64 {
    debug_assert_eq!(parts.iter().sum::<u64>(), total);
    ln_factorial(total) - parts.iter().map(|&m| ln_factorial(m)).sum::<f64>()
}

/// Exact binomial coefficient, saturating at `u128::MAX`.
pub fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        let num = match acc.checked_mul(n - i) {
            Some(v) => v,
            None => return u128::MAX,
        };
        acc = num / (i + 1);
    }
    acc
}

/// Numerically stable `ln sum exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let n = order as f64;
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    for i in 0..order.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp;
        loop {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=order {
                let j = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            dp = n * (z * p1 - p2) / (z * z - 1.0);
            let prev = z;
            z = prev - p1 / dp;
            if (z - prev).abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[order - 1 - i] = z;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

fn cached_rule(order: usize) -> Option<&'static (Vec<f64>, Vec<f64>)> {
    static GL10: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static GL20: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match order {
        10 => Some(GL10.get_or_init(|| gauss_legendre(10))),
        20 => Some(GL20.get_or_init(|| gauss_legendre(20))),
        _ => None,
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum over accepted panels of `|coarse - refined|`, plus a rounding floor.
    pub error: f64,
}

const MAX_DEPTH: u32 = 30;

/// Adaptive Gauss–Legendre integration of `f` over `[a, b]`.
///
/// Each panel is integrated with the `order`-point rule and again as two
/// halves; the halves are accepted when they agree with the whole to within
/// the panel's share of `tol`, or to rounding level.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, order: usize, tol: f64) -> Integral {
    let owned;
    let (nodes, weights) = match cached_rule(order) {
        Some((n, w)) => (n.as_slice(), w.as_slice()),
        None => {
            owned = gauss_legendre(order);
            (owned.0.as_slice(), owned.1.as_slice())
        }
    };
    let rule = |lo: f64, hi: f64| -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + half * x);
        }
        s * half
    };

    let mut value = 0.0;
    let mut error = 0.0;
    let mut stack = vec![(a, b, rule(a, b), tol, 0u32)];
    while let Some((lo, hi, whole, panel_tol, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule(lo, mid);
        let right = rule(mid, hi);
        let diff = (left + right - whole).abs();
        let noise = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        if diff <= panel_tol.max(noise) || depth >= MAX_DEPTH {
            value += left + right;
            error += diff;
        } else {
            stack.push((mid, hi, right, 0.5 * panel_tol, depth + 1));
            stack.push((lo, mid, left, 0.5 * panel_tol, depth + 1));
        }
    }
    error += 4.0 * f64::EPSILON * value.abs();
    Integral { value, error }
}
