//! Probability kernels and conditional moments of the count of
//! `‖·‖∞`-near supports.
//!
//! For a response `Y` and a threshold `t`, let `Z` count the k-supports with
//! `‖Y − Xβ‖∞ < t√k`. Conditionally on `Y`, the residual coordinates of one
//! support are independent `N(Y_i, k)`, and two supports sharing `ℓ` indices
//! have correlation `ρ = ℓ/k`. Both moments therefore reduce to the
//! one-dimensional kernels
//!
//! * `p(t, y) = P(|Z − y| ≤ t)` and
//! * `q(t, y, ρ) = P(|Z₁ − y| ≤ t, |Z₂ − y| ≤ t)` for a standard bivariate
//!   normal pair with correlation `ρ`.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::special::{integrate_adaptive, ln_binomial, log_sum_exp, normal_interval, normal_pdf};
use crate::{Error, Result};

/// Correlations above this use the `ρ = 1` value.
pub const RHO_ONE_CUTOFF: f64 = 1.0 - 1e-6;
/// Default absolute tolerance of the bivariate quadrature.
pub const Q_TOLERANCE: f64 = 1e-12;
pub const Q_ORDER: usize = 20;

/// `P(|Z − y| ≤ t)`; zero for `t ≤ 0`.
pub fn p_ty(t: f64, y: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    normal_interval(y - t, y + t)
}

/// The kernel value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub order: usize,
    /// Absolute tolerance; tightened further relative to `p²` for small `p`.
    pub tolerance: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { order: Q_ORDER, tolerance: Q_TOLERANCE }
    }
}

/// `q(t, y, ρ)` with default quadrature settings.
pub fn q_tyrho(t: f64, y: f64, rho: f64) -> Result<f64> {
    q_tyrho_with(t, y, rho, &QuadratureOptions::default()).map(|k| k.value)
}

/// `q(t, y, ρ) = ∫_{y−t}^{y+t} φ(z) [Φ((y+t−ρz)/s) − Φ((y−t−ρz)/s)] dz`,
/// `s = √(1 − ρ²)`.
pub fn q_tyrho_with(t: f64, y: f64, rho: f64, options: &QuadratureOptions) -> Result<Kernel> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} must lie in [0, 1]")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    let p = p_ty(t, y);
    if rho == 0.0 {
        return Ok(Kernel { value: p * p, error: 4.0 * f64::EPSILON * p * p });
    }
    if rho > RHO_ONE_CUTOFF {
        // q(1) − q(ρ) ≤ 2 sup φ · E|Z₁ − Z₂|
        return Ok(Kernel { value: p, error: (4.0 / std::f64::consts::PI) * (1.0 - rho).sqrt() });
    }
    let s = (1.0 - rho * rho).sqrt();
    let (lo, hi) = (y - t, y + t);
    let integrand = |z: f64| normal_pdf(z) * normal_interval((lo - rho * z) / s, (hi - rho * z) / s);
    let tol = options.tolerance.min(options.tolerance * p * p).max(f64::MIN_POSITIVE);

    // the inner probability changes fastest where the inner limits cross 0
    let mut cuts = vec![lo, hi];
    for c in [lo / rho, hi / rho, y] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let width = hi - lo;
    let mut value = 0.0;
    let mut error = 0.0;
    for w in cuts.windows(2) {
        let share = tol * (w[1] - w[0]) / width;
        let part = integrate_adaptive(integrand, w[0], w[1], options.order, share);
        value += part.value;
        error += part.error;
    }
    Ok(Kernel { value, error })
}

/// `√((1+ρ)/(1−ρ)) e^{ρ y²}`, an upper bound on `q / p²`.
pub fn q_ratio_bound(y: f64, rho: f64) -> f64 {
    ((1.0 + rho) / (1.0 - rho)).sqrt() * (rho * y * y).exp()
}

/// `ln t − t²/2 − y²/2 + ½ ln(2/π)`, a lower bound on `ln p(t, y)` for
/// `t ∈ (0, 1]`.
pub fn log_p_lower_bound(t: f64, y: f64) -> f64 {
    t.ln() - 0.5 * t * t - 0.5 * y * y + 0.5 * (2.0 / std::f64::consts::PI).ln()
}

fn check_moment_args(y: &[f64], params: &ModelParams, t: f64) -> Result<()> {
    if params.k == 0 || params.k > params.p {
        return Err(Error::InvalidParams(format!("need 1 <= k <= p, got k = {}, p = {}", params.k, params.p)));
    }
    if y.len() != params.n {
        return Err(Error::InvalidParams(format!("Y has {} entries, n = {}", y.len(), params.n)));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} must be positive and finite")));
    }
    Ok(())
}

/// `ln E[Z | Y] = ln C(p, k) + Σ ln p(t, Y_i/√k)`.
pub fn cond_first_moment_log(y: &[f64], params: &ModelParams, t: f64) -> Result<f64> {
    check_moment_args(y, params, t)?;
    let sk = (params.k as f64).sqrt();
    let logs: f64 = y.iter().map(|&yi| p_ty(t, yi / sk).ln()).sum();
    Ok(ln_binomial(params.p as u64, params.k as u64) + logs)
}

/// `ln E[Z² | Y] = ln Σ_ℓ C(p; k−ℓ, k−ℓ, ℓ, p−2k+ℓ) Π q(t, Y_i/√k, ℓ/k)`.
pub fn cond_second_moment_log(y: &[f64], params: &ModelParams, t: f64) -> Result<f64> {
    Ok(moment_report(y, params, t)?.log_second_moment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub t: f64,
    pub log_first_moment: f64,
    pub log_second_moment: f64,
    /// `E[Z²|Y] / E[Z|Y]²`.
    pub upsilon: f64,
    /// `Υ − 1`, computed without cancellation.
    pub upsilon_minus_one: f64,
    /// Entry `ℓ − 1` is the log of the `ℓ`-th summand of `Υ`, `ℓ = 1..k`.
    pub per_rho_ratio: Vec<f64>,
    /// Bound on the relative error of `Υ` from quadrature.
    pub quadrature_error_estimate: f64,
}

/// Both conditional moments and `Υ`.
///
/// `Υ = Σ_ℓ [C(k,ℓ) C(p−k,k−ℓ) / C(p,k)] Π_i q(t, Y_i/√k, ℓ/k) / p(t, Y_i/√k)²`.
pub fn moment_report(y: &[f64], params: &ModelParams, t: f64) -> Result<MomentReport> {
    moment_report_with(y, params, t, &QuadratureOptions::default())
}

pub fn moment_report_with(y: &[f64], params: &ModelParams, t: f64, options: &QuadratureOptions) -> Result<MomentReport> {
    check_moment_args(y, params, t)?;
    let (p, k) = (params.p as u64, params.k as u64);
    if p < 2 * k {
        return Err(Error::InvalidParams(format!(
            "second moment needs p >= 2k (disjoint supports must exist), got p = {p}, k = {k}"
        )));
    }
    let log_first = cond_first_moment_log(y, params, t)?;
    let sk = (k as f64).sqrt();
    let scaled: Vec<f64> = y.iter().map(|&yi| yi / sk).collect();
    let log_p: Vec<f64> = scaled.iter().map(|&u| p_ty(t, u).ln()).collect();
    let ln_ck = ln_binomial(p, k);

    let mut terms = Vec::with_capacity(k as usize + 1);
    let mut rel_err = 0.0;
    for ell in 0..=k {
        let coeff = ln_binomial(k, ell) + ln_binomial(p - k, k - ell) - ln_ck;
        let rho = ell as f64 / k as f64;
        let mut log_ratio = 0.0;
        if ell > 0 {
            for (&u, &lp) in scaled.iter().zip(&log_p) {
                let q = q_tyrho_with(t, u, rho, options)?;
                log_ratio += q.value.ln() - 2.0 * lp;
                rel_err += q.error / q.value;
            }
        }
        terms.push(coeff + log_ratio);
    }
    let upsilon_minus_one = terms[0].exp_m1() + terms[1..].iter().map(|l| l.exp()).sum::<f64>();
    let log_upsilon = upsilon_minus_one.ln_1p();
    Ok(MomentReport {
        t,
        log_first_moment: log_first,
        log_second_moment: 2.0 * log_first + log_upsilon,
        upsilon: 1.0 + upsilon_minus_one,
        upsilon_minus_one,
        per_rho_ratio: terms[1..].to_vec(),
        quadrature_error_estimate: rel_err,
    })
}

/// Log of the ℓ = 0 summand of `E[Z² | Y]`, which factorizes.
pub fn second_moment_disjoint_term_log(y: &[f64], params: &ModelParams, t: f64) -> Result<f64> {
    check_moment_args(y, params, t)?;
    let (p, k) = (params.p as u64, params.k as u64);
    if p < 2 * k {
        return Err(Error::InvalidParams("second moment needs p >= 2k".into()));
    }
    let sk = (k as f64).sqrt();
    let logs: f64 = y.iter().map(|&yi| p_ty(t, yi / sk).ln()).sum();
    Ok(ln_binomial(p, k) + ln_binomial(p - k, k) + 2.0 * logs)
}

/// `f(t₀) = (1 − t₀² + 2 ln t₀)/2`, the exponent in
/// `P(χ²_n ≤ n t₀²) ≤ exp(n f(t₀))`.
pub fn chi_square_tail_exponent(t0: f64) -> Result<f64> {
    if !(t0 > 0.0 && t0 < 1.0) {
        return Err(Error::Domain(format!("t0 = {t0} must lie in (0, 1)")));
    }
    Ok(0.5 * (1.0 - t0 * t0 + 2.0 * t0.ln()))
}

/// `exp(n f(t₀))`.
pub fn chi_square_tail_bound(n: usize, t0: f64) -> Result<f64> {
    Ok((n as f64 * chi_square_tail_exponent(t0)?).exp())
}

/// `f(ρ) = ρ⁻¹ ln((1−ρ)/(1+ρ)) = −2 atanh(ρ)/ρ`, with `f(0) = −2`.
pub fn f_rho(rho: f64) -> f64 {
    if rho == 0.0 {
        return -2.0;
    }
    -2.0 * libm::atanh(rho) / rho
}

/// Whether all divided second differences of `f_rho` on the grid are
/// non-positive, up to rounding.
pub fn concavity_check_f_rho(grid: &[f64]) -> Result<bool> {
    if grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::Domain("grid points must lie in (0, 1)".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let f: Vec<f64> = grid.iter().map(|&r| f_rho(r)).collect();
    Ok((0..grid.len().saturating_sub(2)).all(|i| {
        let s1 = (f[i + 1] - f[i]) / (grid[i + 1] - grid[i]);
        let s2 = (f[i + 2] - f[i + 1]) / (grid[i + 2] - grid[i + 1]);
        let slack = 64.0 * f64::EPSILON * (f[i].abs() + f[i + 1].abs() + f[i + 2].abs())
            / (grid[i + 1] - grid[i]).min(grid[i + 2] - grid[i + 1]);
        s2 - s1 <= slack
    }))
}

/// Log-sum-exp of the per-ℓ log summands, exposed for reporting.
pub fn log_upsilon_from_terms(terms: &[f64]) -> f64 {
    log_sum_exp(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_cdf;

    #[test]
    fn p_symmetric_case() {
        for t in [0.1, 0.5, 1.0, 2.0] {
            assert!((p_ty(t, 0.0) - (2.0 * normal_cdf(t) - 1.0)).abs() < 1e-15);
        }
        assert_eq!(p_ty(0.0, 1.0), 0.0);
    }

    #[test]
    fn p_matches_midpoint_rule() {
        let m = 200_000;
        let h = 2.0 / m as f64;
        let mid: f64 = (0..m).map(|i| normal_pdf((i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((p_ty(1.0, 1.0) - mid).abs() < 1e-10);
    }

    #[test]
    fn p_log_lower_bound_on_grid() {
        for ti in 1..=20 {
            let t = ti as f64 / 20.0;
            for yi in -50..=50 {
                let y = yi as f64 / 10.0;
                assert!(p_ty(t, y).ln() >= log_p_lower_bound(t, y), "t={t} y={y}");
            }
        }
    }

    #[test]
    fn q_endpoints() {
        for t in [0.1, 0.5, 1.0] {
            for y in [-3.0, -1.0, 0.0, 2.0] {
                let p = p_ty(t, y);
                assert!((q_tyrho(t, y, 0.0).unwrap() - p * p).abs() < 1e-10);
                assert_eq!(q_tyrho(t, y, 1.0).unwrap(), p);
            }
        }
        assert!(q_tyrho(1.0, 0.0, 1.2).is_err());
        assert!(q_tyrho(1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn q_small_rho_is_close_to_independent() {
        let p = p_ty(0.5, 1.0);
        let q = q_tyrho(0.5, 1.0, 1e-9).unwrap();
        assert!((q / (p * p) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn q_matches_brute_force_double_integral() {
        // 2-D midpoint rule on the rectangle with the bivariate density
        let (t, y, rho): (f64, f64, f64) = (0.7, 0.4, 0.6);
        let m = 1500;
        let h = 2.0 * t / m as f64;
        let s2 = 1.0 - rho * rho;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * s2.sqrt());
        let mut acc = 0.0;
        for i in 0..m {
            let a = y - t + (i as f64 + 0.5) * h;
            for j in 0..m {
                let b = y - t + (j as f64 + 0.5) * h;
                acc += (-(a * a - 2.0 * rho * a * b + b * b) / (2.0 * s2)).exp();
            }
        }
        let brute = acc * norm * h * h;
        let q = q_tyrho(t, y, rho).unwrap();
        assert!((q - brute).abs() < 1e-6, "q={q} brute={brute}");
    }

    #[test]
    fn q_error_is_tiny_near_one() {
        let k = q_tyrho_with(0.1, 3.0, 0.95, &QuadratureOptions::default()).unwrap();
        assert!(k.error < 1e-10);
        let p = p_ty(0.1, 3.0);
        assert!(k.value >= p * p && k.value <= p);
    }

    #[test]
    fn first_moment_edges() {
        let params = ModelParams::new(10, 3, 0, 1.0, 0);
        let v = cond_first_moment_log(&[], &params, 1.0).unwrap();
        assert!((v - 120f64.ln()).abs() < 1e-12);
        let params = ModelParams::new(10, 3, 2, 1.0, 0);
        assert!(cond_first_moment_log(&[0.5], &params, 1.0).is_err());
        let y = [0.3, -1.2];
        let a = cond_first_moment_log(&y, &params, 0.5).unwrap();
        let b = cond_first_moment_log(&y, &params, 0.9).unwrap();
        assert!(a <= b);
    }

    #[test]
    fn second_moment_structure() {
        let params = ModelParams::new(12, 3, 4, 1.0, 0);
        let y = [0.5, -1.0, 2.0, 0.1];
        let rep = moment_report(&y, &params, 0.8).unwrap();
        assert!(rep.upsilon >= 1.0);
        assert!(rep.log_second_moment >= 2.0 * rep.log_first_moment);
        assert_eq!(rep.per_rho_ratio.len(), 3);
        let direct = second_moment_disjoint_term_log(&y, &params, 0.8).unwrap();
        let mut all = vec![direct - 2.0 * rep.log_first_moment];
        all.extend(&rep.per_rho_ratio);
        let recon = 2.0 * rep.log_first_moment + log_upsilon_from_terms(&all);
        assert!((recon - rep.log_second_moment).abs() < 1e-12);
        assert!(moment_report(&y, &ModelParams::new(5, 3, 4, 1.0, 0), 0.8).is_err());
    }

    #[test]
    fn chi_square_exponent() {
        assert!(chi_square_tail_exponent(1.0 - 1e-12).unwrap().abs() <= 1e-9);
        let f = chi_square_tail_exponent(0.5).unwrap();
        assert!((f - (0.75 + 2.0 * 0.5f64.ln()) / 2.0).abs() < 1e-15);
        assert!((f + 0.318147).abs() < 1e-6);
        assert!((chi_square_tail_bound(20, 0.5).unwrap() - 1.7236e-3).abs() < 1e-6);
        assert!(chi_square_tail_exponent(1.0).is_err());
        assert!(chi_square_tail_exponent(0.0).is_err());
    }

    #[test]
    fn f_rho_shape() {
        assert!((f_rho(1e-8) + 2.0).abs() < 1e-6);
        assert!(concavity_check_f_rho(&[0.1, 0.5, 0.9]).unwrap());
        let grid: Vec<f64> = (1..=1000).map(|i| i as f64 / 1001.0).collect();
        assert!(concavity_check_f_rho(&grid).unwrap());
        assert!(concavity_check_f_rho(&[0.5, 0.2]).is_err());
        assert!(concavity_check_f_rho(&[0.0, 0.2]).is_err());
        let x: f64 = 0.3;
        assert!((f_rho(x) - ((1.0 - x) / (1.0 + x)).ln() / x).abs() < 1e-14);
    }
}
