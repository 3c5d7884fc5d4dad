//! The limiting curve Γ, the three sample-size thresholds and the overlap
//! window.
//!
//! `Γ(ζ) = (2ζk + σ²)^{1/2} exp(−ζ k ln p / n)` on `ζ ∈ [0, 1]`. Its shape
//! as `n` grows moves through five regimes separated by
//! `n_inf1 = σ² ln p`, `n* = 2k ln p / ln(2k/σ² + 1)` and
//! `n_lasso = (2k + σ²) ln p`.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::special::{ln_binomial, ln_factorial};
use crate::{Error, Result};

/// Half-width of the band around `n*` classified as critical.
pub const CRITICAL_BAND: f64 = 0.5;

/// `exp(−3/2)`, the constant in front of the lower bounds.
pub fn lower_bound_constant() -> f64 {
    (-1.5f64).exp()
}

/// `ln Γ(ζ)`. Returns `-inf` at `ζ = 0, σ² = 0`.
pub fn log_gamma(zeta: f64, params: &ModelParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Domain(format!("zeta = {zeta} outside [0, 1]")));
    }
    let k = params.k as f64;
    let base = 2.0 * zeta * k + params.sigma2;
    let decay = zeta * k * (params.p as f64).ln() / params.n as f64;
    Ok(0.5 * base.ln() - decay)
}

/// `Γ(ζ)`, evaluated in the log domain.
pub fn gamma(zeta: f64, params: &ModelParams) -> Result<f64> {
    log_gamma(zeta, params).map(f64::exp)
}

/// Shape of Γ on `[0, 1]` at a given `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    /// `n ≤ σ² ln p`: Γ strictly decreasing.
    Decreasing,
    /// `σ² ln p < n < n*`: interior maximum, minimum at ζ = 1.
    #[serde(rename = "NONMONOTONE_MIN_AT_1")]
    NonmonotoneMinAt1,
    /// `|n − n*| ≤ 1/2`: Γ(0) ≈ Γ(1).
    Critical,
    /// `n* < n < (2k + σ²) ln p`: interior maximum, minimum at ζ = 0.
    #[serde(rename = "NONMONOTONE_MIN_AT_0")]
    NonmonotoneMinAt0,
    /// `n ≥ (2k + σ²) ln p`: Γ strictly increasing.
    Increasing,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::Decreasing => "DECREASING",
            Regime::NonmonotoneMinAt1 => "NONMONOTONE_MIN_AT_1",
            Regime::Critical => "CRITICAL",
            Regime::NonmonotoneMinAt0 => "NONMONOTONE_MIN_AT_0",
            Regime::Increasing => "INCREASING",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub p: usize,
    pub k: usize,
    pub sigma2: f64,
    pub n: usize,
    /// `σ² ln p`.
    pub n_inf1: f64,
    /// `2k ln p / ln(2k/σ² + 1)`.
    pub n_star: f64,
    /// `(2k + σ²) ln p`.
    pub n_lasso: f64,
    /// Stationary point of ln Γ: `(n − σ² ln p) / (2k ln p)`.
    pub zeta_star: f64,
    pub regime: Regime,
}

/// `n* = 2k ln p / ln(2k/σ² + 1)`.
pub fn n_star(params: &ModelParams) -> f64 {
    let k = params.k as f64;
    2.0 * k * (params.p as f64).ln() / (2.0 * k / params.sigma2).ln_1p()
}

/// Thresholds and regime at `params.n`.
pub fn thresholds(params: &ModelParams) -> Result<ThresholdReport> {
    params.validate()?;
    if params.sigma2 <= 0.0 {
        return Err(Error::InvalidParams("sigma2 must be positive: n* is undefined at sigma2 = 0".into()));
    }
    if params.p <= params.k {
        return Err(Error::InvalidParams(format!("need p > k, got p = {}, k = {}", params.p, params.k)));
    }
    let ln_p = (params.p as f64).ln();
    let k = params.k as f64;
    let n = params.n as f64;
    let n_inf1 = params.sigma2 * ln_p;
    let n_star = n_star(params);
    let n_lasso = (2.0 * k + params.sigma2) * ln_p;
    let zeta_star = (n - n_inf1) / (2.0 * k * ln_p);
    let regime = if zeta_star <= 0.0 {
        Regime::Decreasing
    } else if zeta_star >= 1.0 {
        Regime::Increasing
    } else if (n - n_star).abs() <= CRITICAL_BAND {
        Regime::Critical
    } else if n < n_star {
        Regime::NonmonotoneMinAt1
    } else {
        Regime::NonmonotoneMinAt0
    };
    Ok(ThresholdReport { p: params.p, k: params.k, sigma2: params.sigma2, n: params.n, n_inf1, n_star, n_lasso, zeta_star, regime })
}

/// Evaluation grid of Γ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCurve {
    pub params: ModelParams,
    /// `(ζ, Γ(ζ))` pairs on a uniform grid including both endpoints.
    pub points: Vec<(f64, f64)>,
}

impl GammaCurve {
    pub fn log_values(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, g)| g.ln()).collect()
    }

    /// Grid point with the smallest Γ (first on ties).
    pub fn argmin(&self) -> (f64, f64) {
        self.points.iter().copied().fold((f64::NAN, f64::INFINITY), |best, pt| if pt.1 < best.1 { pt } else { best })
    }
}

pub fn gamma_curve(params: &ModelParams, points: usize) -> Result<GammaCurve> {
    params.validate()?;
    if points < 2 {
        return Err(Error::Domain("a curve needs at least two grid points".into()));
    }
    let pts = (0..points)
        .map(|i| {
            let zeta = i as f64 / (points - 1) as f64;
            gamma(zeta, params).map(|g| (zeta, g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaCurve { params: *params, points: pts })
}

/// `(ℓ, e^{−3/2} Γ(ℓ/k))` for `ℓ = 0..=k`.
pub fn lower_bound_curve(params: &ModelParams) -> Result<Vec<(usize, f64)>> {
    params.validate()?;
    let c = lower_bound_constant();
    (0..=params.k)
        .map(|ell| gamma(ell as f64 / params.k as f64, params).map(|g| (ell, c * g)))
        .collect()
}

/// Which case of the window construction applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowBranch {
    /// `n ≤ n*`: window scales with `σ²/k`.
    BelowCritical,
    /// `n > n*`: fixed window `(1/5, 1/4)`.
    AboveCritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgpWindow {
    pub branch: WindowBranch,
    /// Window `(ζ'_1, ζ'_2)` on which Γ exceeds `e³ D₀ max(Γ(0), Γ(1))`.
    pub ratio_lo: f64,
    pub ratio_hi: f64,
    /// Forbidden band `(1 − ζ'_2, 1 − ζ'_1)` for `(2k)^{-1} ‖β − β*‖₀`.
    pub zeta1: f64,
    pub zeta2: f64,
    /// Sub-level radius `r_k = D₀ max(Γ(0), Γ(1))`.
    pub r: f64,
    pub d0: f64,
    /// Sample-size range of the branch holds.
    pub n_range_holds: bool,
    /// `D₀` is large enough for the branch's ratio estimate.
    pub d0_large_enough: bool,
}

impl OgpWindow {
    pub fn hypotheses_hold(&self) -> bool {
        self.n_range_holds && self.d0_large_enough
    }
}

/// `r_k = D₀ max(Γ(0), Γ(1))`.
pub fn ogp_radius(params: &ModelParams, d0: f64) -> Result<f64> {
    Ok(d0 * gamma(0.0, params)?.max(gamma(1.0, params)?))
}

/// Overlap-gap window and radius at `params.n`.
///
/// Fails with [`Error::VacuousWindow`] when the ratio window does not fit
/// inside `(0, 1)`, which is the usual outcome at small `k`.
pub fn ogp_window(params: &ModelParams, d0: f64) -> Result<OgpWindow> {
    params.validate()?;
    if !(d0 > 1.0) {
        return Err(Error::Domain(format!("D0 = {d0} must exceed 1")));
    }
    if params.sigma2 <= 0.0 {
        return Err(Error::InvalidParams("sigma2 must be positive".into()));
    }
    let k = params.k as f64;
    let n = params.n as f64;
    let ln_p = (params.p as f64).ln();
    let e7d2 = 7f64.exp() * d0 * d0;
    let n_star = n_star(params);

    let (branch, lo, hi, n_range_holds, d0_large_enough) = if n <= n_star {
        let lo = e7d2 * params.sigma2 / (2.0 * k);
        let hi = e7d2 * params.sigma2 / k;
        let in_range = (e7d2 + 1.0) * params.sigma2 * ln_p <= n;
        (WindowBranch::BelowCritical, lo, hi, in_range, true)
    } else {
        let in_range = n < k * ln_p / (3.0 * d0.ln());
        let ratio = (0.25 * d0.powf(12.0 / 5.0)).min(2.0 / 3.0 * d0.powf(9.0 / 4.0));
        (WindowBranch::AboveCritical, 0.2, 0.25, in_range, ratio > 6f64.exp() * d0 * d0)
    };
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::VacuousWindow { lo, hi });
    }
    Ok(OgpWindow {
        branch,
        ratio_lo: lo,
        ratio_hi: hi,
        zeta1: 1.0 - hi,
        zeta2: 1.0 - lo,
        r: ogp_radius(params, d0)?,
        d0,
        n_range_holds,
        d0_large_enough,
    })
}

/// Evaluates `C(m1, m2) ≥ m1^{m2} / (4 · m2!)` in the log domain.
pub fn check_binomial_bound(m1: u64, m2: u64) -> Result<bool> {
    if m1 < 4 {
        return Err(Error::Domain(format!("m1 = {m1} must be at least 4")));
    }
    if m2 == 0 || m2.saturating_mul(m2) > m1 {
        return Err(Error::Domain(format!("m2 = {m2} must lie in [1, sqrt(m1)]")));
    }
    let lhs = ln_binomial(m1, m2);
    let rhs = m2 as f64 * (m1 as f64).ln() - 4f64.ln() - ln_factorial(m2);
    Ok(lhs >= rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1(n: usize) -> ModelParams {
        ModelParams::new(1_000_000_000, 10, n, 1.0, 0)
    }

    #[test]
    fn regime_serializes_as_label() {
        use Regime::*;
        for r in [Decreasing, NonmonotoneMinAt1, Critical, NonmonotoneMinAt0, Increasing] {
            assert_eq!(serde_json::to_string(&r).unwrap(), format!("\"{}\"", r.label()));
        }
    }

    /// σ² that puts `n*` exactly at `n`.
    fn sigma2_for_critical(p: usize, k: usize, n: usize) -> f64 {
        let k = k as f64;
        2.0 * k / (2.0 * k * (p as f64).ln() / n as f64).exp_m1()
    }

    #[test]
    fn gamma_endpoints() {
        let params = ModelParams::new(60, 4, 15, 2.5, 0);
        assert!((gamma(0.0, &params).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        let s2 = sigma2_for_critical(1_000_000_000, 10, 137);
        let at_crit = ModelParams::new(1_000_000_000, 10, 137, s2, 0);
        let g0 = gamma(0.0, &at_crit).unwrap();
        let g1 = gamma(1.0, &at_crit).unwrap();
        assert!((g1 / g0 - 1.0).abs() <= 1e-9);
        assert!(gamma(1.2, &params).is_err());
        assert!(gamma(-0.1, &params).is_err());
    }

    #[test]
    fn gamma_matches_high_precision_value() {
        // sqrt(11) * exp(-5 ln(1e9) / 200), evaluated with 50-digit arithmetic
        let expected = 1.9755878319045524;
        let got = gamma(0.5, &fig1(200)).unwrap();
        assert!((got / expected - 1.0).abs() <= 1e-12, "{got}");
    }

    #[test]
    fn reference_thresholds() {
        let rep = thresholds(&fig1(10)).unwrap();
        assert!((rep.n_inf1 - 20.72326583694641).abs() < 1e-9);
        assert_eq!(rep.n_inf1.ceil(), 21.0);
        assert!((rep.n_star - 136.1).abs() < 0.1);
        assert_eq!(rep.n_star.ceil(), 137.0);
        assert!((rep.n_lasso - 435.19).abs() < 0.01);
        assert_eq!(rep.regime, Regime::Decreasing);
        assert_eq!(thresholds(&fig1(200)).unwrap().regime, Regime::NonmonotoneMinAt0);
        assert!(thresholds(&ModelParams::new(100, 5, 20, 0.0, 0)).is_err());
    }

    #[test]
    fn zeta_star_sign_matches_monotone_regimes() {
        for n in [5, 20, 21, 100, 136, 137, 300, 435, 436, 1000] {
            let rep = thresholds(&fig1(n)).unwrap();
            assert_eq!(rep.zeta_star <= 0.0, rep.regime == Regime::Decreasing, "n = {n}");
            assert_eq!(rep.zeta_star >= 1.0, rep.regime == Regime::Increasing, "n = {n}");
        }
    }

    #[test]
    fn lower_bound_curve_endpoints() {
        let params = ModelParams::new(60, 4, 15, 1.0, 0);
        let curve = lower_bound_curve(&params).unwrap();
        assert_eq!(curve.len(), 5);
        assert!((curve[0].1 - (-1.5f64).exp()).abs() < 1e-15);

        let s2 = sigma2_for_critical(60, 4, 15);
        let crit = lower_bound_curve(&ModelParams::new(60, 4, 15, s2, 0)).unwrap();
        assert!((crit[4].1 / ((-1.5f64).exp() * s2.sqrt()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_curve_matches_direct_formula() {
        let params = ModelParams::new(60, 4, 15, 1.0, 0);
        let curve = lower_bound_curve(&params).unwrap();
        for (ell, v) in curve {
            let l = ell as f64;
            let direct = (-1.5f64).exp() * (2.0 * l + 1.0).sqrt() * (-(l * 60f64.ln()) / 15.0).exp();
            assert!((v - direct).abs() <= 1e-12 * direct, "ell {ell}");
        }
    }

    #[test]
    fn ogp_window_above_critical() {
        let params = ModelParams::new(60, 4, 30, 1.0, 0);
        let w = ogp_window(&params, 3.0).unwrap();
        assert_eq!(w.branch, WindowBranch::AboveCritical);
        assert!((w.zeta1 - 0.75).abs() < 1e-15 && (w.zeta2 - 0.8).abs() < 1e-15);
        assert!(!w.d0_large_enough);
    }

    #[test]
    fn ogp_radius_at_critical_is_d0_sigma() {
        let s2 = sigma2_for_critical(1_000_000_000, 10, 137);
        let params = ModelParams::new(1_000_000_000, 10, 137, s2, 0);
        let r = ogp_radius(&params, 3.0).unwrap();
        assert!((r / (3.0 * s2.sqrt()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ogp_window_below_critical_width() {
        let (k, sigma2, d0) = (100_000usize, 1.0, 3.0);
        let params = ModelParams::new(1_000_000_000, k, 50_000, sigma2, 0);
        let w = ogp_window(&params, d0).unwrap();
        assert_eq!(w.branch, WindowBranch::BelowCritical);
        let width = k as f64 * (w.zeta2 - w.zeta1);
        let expected = 0.5 * 7f64.exp() * d0 * d0 * sigma2;
        assert!((width / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ogp_window_vacuous_at_small_k() {
        let params = ModelParams::new(60, 4, 10, 1.0, 0);
        assert!(matches!(ogp_window(&params, 3.0), Err(Error::VacuousWindow { .. })));
        assert!(ogp_window(&params, 1.0).is_err());
    }

    #[test]
    fn binomial_bound_examples() {
        assert!(check_binomial_bound(4, 2).unwrap());
        assert!(check_binomial_bound(100, 10).unwrap());
        assert!(check_binomial_bound(9, 3).unwrap());
        assert!(check_binomial_bound(10, 4).is_err());
        assert!(check_binomial_bound(3, 1).is_err());
    }
}
