//! LASSO baseline by cyclic coordinate descent on
//! `‖Y − Xβ‖₂² + λ‖β‖₁`, stopped on the relative duality gap.

use serde::{Deserialize, Serialize};

use crate::model::Instance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tolerance: 1e-6, max_sweeps: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoResult {
    /// Indices of the `k` largest `|β_j|`, sorted; ties go to the smaller index.
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Relative duality gap at termination.
    pub duality_gap: f64,
    /// Fewer than `k` coefficients are non-zero.
    pub degenerate: bool,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Primal value, dual value at the rescaled residual, and their relative gap.
fn relative_gap(cols: &[Vec<f64>], y: &[f64], beta: &[f64], residual: &[f64], lambda: f64) -> f64 {
    let rss: f64 = residual.iter().map(|r| r * r).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    let primal = rss + lambda * l1;
    let corr = cols
        .iter()
        .map(|c| c.iter().zip(residual).map(|(x, r)| x * r).sum::<f64>().abs())
        .fold(0.0f64, f64::max);
    let scale = if corr > 0.0 { (lambda / (2.0 * corr)).min(1.0) } else { 1.0 };
    let ty: f64 = residual.iter().zip(y).map(|(r, y)| scale * r * y).sum();
    let dual = 2.0 * ty - scale * scale * rss;
    let gap = (primal - dual).max(0.0);
    if primal > 0.0 {
        gap / primal
    } else {
        0.0
    }
}

pub fn lasso_baseline(instance: &Instance, lambda: f64) -> Result<LassoResult> {
    lasso_with_options(instance, lambda, &LassoOptions::default())
}

pub fn lasso_with_options(instance: &Instance, lambda: f64, options: &LassoOptions) -> Result<LassoResult> {
    instance.validate()?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda = {lambda} must be positive and finite")));
    }
    let (p, k) = (instance.p(), instance.k());
    let y = &instance.response;
    let cols: Vec<Vec<f64>> = (0..p).map(|j| instance.column(j)).collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    let mut beta = vec![0.0; p];
    let mut residual = y.clone();
    let mut sweeps = 0;
    let mut gap = relative_gap(&cols, y, &beta, &residual, lambda);
    let mut converged = gap <= options.tolerance;

    while !converged && sweeps < options.max_sweeps {
        sweeps += 1;
        for j in 0..p {
            if sq[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho: f64 = col.iter().zip(&residual).map(|(x, r)| x * r).sum::<f64>() + sq[j] * beta[j];
            let updated = soft_threshold(rho, lambda / 2.0) / sq[j];
            let delta = updated - beta[j];
            if delta != 0.0 {
                for (r, x) in residual.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = updated;
            }
        }
        gap = relative_gap(&cols, y, &beta, &residual, lambda);
        converged = gap <= options.tolerance;
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| beta[b].abs().total_cmp(&beta[a].abs()).then(a.cmp(&b)));
    let mut support = order[..k].to_vec();
    support.sort_unstable();
    let nonzero = beta.iter().filter(|b| **b != 0.0).count();
    Ok(LassoResult { support, coefficients: beta, converged, sweeps, duality_gap: gap, degenerate: nonzero < k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, ModelParams};
    use crate::solver::{objective_of, solve_exact, NormMode, SolverConfig};

    #[test]
    fn huge_lambda_is_degenerate() {
        let inst = generate_instance(&ModelParams::new(20, 3, 10, 1.0, 1)).unwrap();
        let res = lasso_baseline(&inst, 1e12).unwrap();
        assert!(res.coefficients.iter().all(|b| *b == 0.0));
        assert_eq!(res.support, vec![0, 1, 2]);
        assert!(res.degenerate);
        assert!(res.converged);
    }

    #[test]
    fn rejects_bad_lambda() {
        let inst = generate_instance(&ModelParams::new(10, 2, 5, 1.0, 1)).unwrap();
        assert!(lasso_baseline(&inst, 0.0).is_err());
        assert!(lasso_baseline(&inst, f64::NAN).is_err());
    }

    #[test]
    fn converges_and_never_beats_exact() {
        let inst = generate_instance(&ModelParams::new(14, 3, 12, 1.0, 4)).unwrap();
        let res = lasso_baseline(&inst, 2.0).unwrap();
        assert!(res.converged, "gap {}", res.duality_gap);
        let phi = solve_exact(&inst, &SolverConfig::default()).unwrap().objective;
        assert!(objective_of(&inst, &res.support, NormMode::L2Scaled) >= phi);
    }

    #[test]
    fn noiseless_recovery_rate() {
        // n = 3 k ln p at p = 60, k = 4
        let n = (3.0 * 4.0 * 60f64.ln()).ceil() as usize;
        let hits = (0..100)
            .filter(|&seed| {
                let inst = generate_instance(&ModelParams::new(60, 4, n, 0.0, seed)).unwrap();
                lasso_baseline(&inst, 1.0).unwrap().support == inst.planted_support
            })
            .count();
        assert!(hits >= 90, "recovered {hits}/100");
    }
}
