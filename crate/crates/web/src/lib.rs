//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! Three operations are exported, each returning a JSON string: the
//! thresholds and regime at a sample size, the Γ curve with its lower bound,
//! and the per-overlap profile of a small random instance.

use binreg::theory::{self, ThresholdReport};
use binreg::{generate_instance, overlap_profile, ModelParams, SolverConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest enumeration the demo will run inside the page.
pub const DEMO_BUDGET: u64 = 2_000_000;

fn params(p: u32, k: u32, n: u32, sigma2: f64, seed: u64) -> binreg::Result<ModelParams> {
    let params = ModelParams::new(p as usize, k as usize, n as usize, sigma2, seed);
    params.validate()?;
    Ok(params)
}

fn to_json<T: Serialize>(value: &T) -> binreg::Result<String> {
    Ok(serde_json::to_string(value)?)
}

#[derive(Serialize)]
struct Thresholds {
    #[serde(flatten)]
    report: ThresholdReport,
    regime_label: &'static str,
}

pub fn thresholds_report(p: u32, k: u32, n: u32, sigma2: f64) -> binreg::Result<String> {
    let report = theory::thresholds(&params(p, k, n, sigma2, 0)?)?;
    let regime_label = report.regime.label();
    to_json(&Thresholds { report, regime_label })
}

#[derive(Serialize)]
struct Curve {
    zeta: Vec<f64>,
    gamma: Vec<f64>,
    lower_bound: Vec<f64>,
    argmin: f64,
}

pub fn curve_report(p: u32, k: u32, n: u32, sigma2: f64, points: u32) -> binreg::Result<String> {
    let curve = theory::gamma_curve(&params(p, k, n, sigma2, 0)?, points as usize)?;
    let c = theory::lower_bound_constant();
    to_json(&Curve {
        zeta: curve.points.iter().map(|pt| pt.0).collect(),
        gamma: curve.points.iter().map(|pt| pt.1).collect(),
        lower_bound: curve.points.iter().map(|pt| c * pt.1).collect(),
        argmin: curve.argmin().0,
    })
}

#[derive(Serialize)]
struct Profile {
    radius: f64,
    planted: Vec<usize>,
    ell: Vec<usize>,
    min_objective: Vec<f64>,
    count_below_r: Vec<u64>,
    theory_lb: Vec<f64>,
    best_support: Vec<usize>,
    best_objective: f64,
    supports_evaluated: u64,
}

/// Profile of a fresh planted instance; `radius <= 0` selects `D₀ max(Γ(0), Γ(1))`.
pub fn profile_report(p: u32, k: u32, n: u32, sigma2: f64, seed: u64, radius: f64, d0: f64) -> binreg::Result<String> {
    let params = params(p, k, n, sigma2, seed)?;
    let radius = if radius > 0.0 { radius } else { theory::ogp_radius(&params, d0)? };
    let inst = generate_instance(&params)?;
    let prof = overlap_profile(&inst, radius, &SolverConfig::default().with_budget(DEMO_BUDGET))?;
    let (best_objective, best) = prof.overall_min();
    let best_support = best.to_vec();
    to_json(&Profile {
        radius,
        planted: inst.planted_support.clone(),
        ell: prof.per_ell.iter().map(|e| e.ell).collect(),
        min_objective: prof.per_ell.iter().map(|e| e.min_objective).collect(),
        count_below_r: prof.per_ell.iter().map(|e| e.count_below_r).collect(),
        theory_lb: prof.per_ell.iter().map(|e| e.theory_lower_bound).collect(),
        best_support,
        best_objective,
        supports_evaluated: prof.supports_evaluated,
    })
}

fn js(r: binreg::Result<String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn thresholds(p: u32, k: u32, n: u32, sigma2: f64) -> Result<String, JsValue> {
    js(thresholds_report(p, k, n, sigma2))
}

#[wasm_bindgen]
pub fn gamma_curve(p: u32, k: u32, n: u32, sigma2: f64, points: u32) -> Result<String, JsValue> {
    js(curve_report(p, k, n, sigma2, points))
}

#[wasm_bindgen]
pub fn profile(p: u32, k: u32, n: u32, sigma2: f64, seed: u32, radius: f64, d0: f64) -> Result<String, JsValue> {
    js(profile_report(p, k, n, sigma2, u64::from(seed), radius, d0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_json_has_regime() {
        let v: serde_json::Value = serde_json::from_str(&thresholds_report(1_000_000_000, 10, 200, 1.0).unwrap()).unwrap();
        assert_eq!(v["regime_label"], "NONMONOTONE_MIN_AT_0");
        assert!((v["n_star"].as_f64().unwrap() - 136.13).abs() < 0.01);
    }

    #[test]
    fn curve_has_requested_points() {
        let v: serde_json::Value = serde_json::from_str(&curve_report(60, 4, 8, 1.0, 51).unwrap()).unwrap();
        assert_eq!(v["zeta"].as_array().unwrap().len(), 51);
        assert_eq!(v["argmin"], 1.0);
    }

    #[test]
    fn profile_round_trip_and_budget() {
        let v: serde_json::Value = serde_json::from_str(&profile_report(20, 3, 12, 0.5, 1, 0.0, 3.0).unwrap()).unwrap();
        assert_eq!(v["ell"].as_array().unwrap().len(), 4);
        assert_eq!(v["supports_evaluated"], 1140);
        assert!(profile_report(200, 10, 12, 0.5, 1, 0.0, 3.0).unwrap_err().is_budget());
    }
}
