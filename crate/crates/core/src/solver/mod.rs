//! Exact solvers for the binary k-sparse least-squares problem.
//!
//! Every solver enumerates supports exhaustively; there is no approximate
//! mode. A configurable budget bounds the number of supports, and requests
//! beyond it are refused with the count they would need.
//!
//! Among supports with equal objective the lexicographically smallest one
//! wins, independent of the thread count.

mod enumerate;
mod lasso;

use serde::{Deserialize, Serialize};

use crate::model::Instance;
use crate::special::binomial_u128;
use crate::theory;
use crate::{Error, Result};

use enumerate::{Columns, Constraint, Search, SharedBest, Sink};
pub use lasso::{lasso_baseline, LassoOptions, LassoResult};

pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NormMode {
    /// `n^{-1/2} ‖Y − Xβ‖₂`
    #[default]
    #[serde(rename = "L2_SCALED", alias = "l2")]
    L2Scaled,
    /// `‖Y − Xβ‖_∞`
    #[serde(rename = "LINF", alias = "linf")]
    Linf,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "l2_scaled" => Ok(NormMode::L2Scaled),
            "linf" => Ok(NormMode::Linf),
            other => Err(Error::Domain(format!("unknown norm mode {other:?} (expected l2 or linf)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub norm: NormMode,
    /// Triangle-inequality pruning. Never changes the result.
    pub prune: bool,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    /// Maximum number of supports to enumerate.
    pub budget: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { norm: NormMode::L2Scaled, prune: false, threads: 1, budget: DEFAULT_BUDGET }
    }
}

impl SolverConfig {
    pub fn with_norm(self, norm: NormMode) -> Self {
        SolverConfig { norm, ..self }
    }

    pub fn with_prune(self, prune: bool) -> Self {
        SolverConfig { prune, ..self }
    }

    pub fn with_threads(self, threads: usize) -> Self {
        SolverConfig { threads, ..self }
    }

    pub fn with_budget(self, budget: u64) -> Self {
        SolverConfig { budget, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Optimal support, sorted.
    pub support: Vec<usize>,
    pub objective: f64,
    /// `k − |support ∩ planted|`; `None` for pure-noise instances.
    pub overlap_ell: Option<usize>,
    pub norm: NormMode,
    pub supports_evaluated: u64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllEntry {
    pub ell: usize,
    pub min_objective: f64,
    pub argmin: Vec<usize>,
    /// Supports at this ℓ with objective strictly below the radius.
    pub count_below_r: u64,
    /// `e^{−3/2} Γ(ℓ/k)`.
    pub theory_lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapProfile {
    pub per_ell: Vec<EllEntry>,
    pub radius_r: f64,
    pub norm_mode: NormMode,
    pub supports_evaluated: u64,
}

impl OverlapProfile {
    /// Minimum over ℓ, with the lexicographic tie rule.
    pub fn overall_min(&self) -> (f64, &[usize]) {
        let mut best: Option<&EllEntry> = None;
        for e in &self.per_ell {
            best = match best {
                Some(b) if !(e.min_objective < b.min_objective || (e.min_objective == b.min_objective && e.argmin < b.argmin)) => Some(b),
                _ => Some(e),
            };
        }
        let b = best.expect("profile has k + 1 entries");
        (b.min_objective, &b.argmin)
    }

    /// ℓ values whose sub-level set is non-empty.
    pub fn sublevel_ells(&self) -> Vec<usize> {
        self.per_ell.iter().filter(|e| e.count_below_r > 0).map(|e| e.ell).collect()
    }
}

/// Objective of `support` computed from scratch: the residual subtracts
/// columns in ascending index order.
pub fn objective_of(instance: &Instance, support: &[usize], norm: NormMode) -> f64 {
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    let p = instance.p();
    let residual: Vec<f64> = instance
        .response
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut r = y;
            for &j in &sorted {
                r -= instance.design[i * p + j];
            }
            r
        })
        .collect();
    match norm {
        NormMode::L2Scaled => residual.iter().map(|r| r * r).sum::<f64>().sqrt() / (instance.n() as f64).sqrt(),
        NormMode::Linf => residual.iter().fold(0.0f64, |m, r| m.max(r.abs())),
    }
}

fn check_budget(required: u128, budget: u64) -> Result<()> {
    if required > budget as u128 {
        Err(Error::BudgetExceeded { required, budget })
    } else {
        Ok(())
    }
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Stopwatch {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

struct BestSink<'a> {
    objective: f64,
    support: Vec<usize>,
    shared: &'a SharedBest,
    prune: bool,
}

impl Sink for BestSink<'_> {
    fn cutoff(&self) -> f64 {
        if self.prune {
            self.objective.min(self.shared.get())
        } else {
            f64::INFINITY
        }
    }

    fn visit(&mut self, support: &[usize], objective: f64, _planted: usize) {
        if objective < self.objective {
            self.objective = objective;
            self.support.clear();
            self.support.extend_from_slice(support);
            if self.prune {
                self.shared.offer(objective);
            }
        }
    }
}

struct ProfileSink {
    k: usize,
    radius: f64,
    min: Vec<f64>,
    argmin: Vec<Vec<usize>>,
    count: Vec<u64>,
}

impl ProfileSink {
    fn new(k: usize, radius: f64) -> Self {
        ProfileSink { k, radius, min: vec![f64::INFINITY; k + 1], argmin: vec![Vec::new(); k + 1], count: vec![0; k + 1] }
    }
}

impl Sink for ProfileSink {
    fn cutoff(&self) -> f64 {
        f64::INFINITY
    }

    fn visit(&mut self, support: &[usize], objective: f64, planted: usize) {
        let ell = self.k - planted;
        if objective < self.min[ell] {
            self.min[ell] = objective;
            self.argmin[ell] = support.to_vec();
        }
        if objective < self.radius {
            self.count[ell] += 1;
        }
    }
}

/// Maps `work` over `items`, possibly in parallel, keeping input order.
pub(crate) fn par_map<T, F>(items: &[usize], threads: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if threads != 1 && items.len() > 1 {
            let run = || items.par_iter().map(|&l| work(l)).collect::<Vec<_>>();
            if threads == 0 {
                return run();
            }
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(run);
            }
        }
    }
    let _ = threads;
    items.iter().map(|&l| work(l)).collect()
}

fn search_best(instance: &Instance, constraint: Option<&Constraint>, mask: Option<&[bool]>, config: &SolverConfig) -> Result<SolveResult> {
    let clock = Stopwatch::start();
    let cols = Columns::from_row_major(&instance.design, instance.n(), instance.p());
    let k = instance.k();
    let search = Search {
        cols: &cols,
        y: &instance.response,
        k,
        norm: config.norm,
        constraint,
        mask,
        top_norms: config.prune.then(|| Search::top_norm_sums(&cols, k)),
    };
    let shared = SharedBest::new();
    let leads = search.leads();
    let partials = par_map(&leads, config.threads, |lead| {
        let mut sink = BestSink { objective: f64::INFINITY, support: Vec::new(), shared: &shared, prune: config.prune };
        let leaves = search.run_lead(lead, &mut sink);
        (sink.objective, sink.support, leaves)
    });

    let mut objective = f64::INFINITY;
    let mut support = Vec::new();
    let mut evaluated = 0u64;
    for (obj, sup, leaves) in partials {
        evaluated += leaves;
        // leads arrive in ascending order, so strict improvement keeps the
        // lexicographically smallest optimum
        if obj < objective {
            objective = obj;
            support = sup;
        }
    }
    if support.is_empty() {
        return Err(Error::Domain("no admissible support".into()));
    }
    Ok(SolveResult {
        overlap_ell: instance.overlap_ell(&support),
        support,
        objective,
        norm: config.norm,
        supports_evaluated: evaluated,
        wall_time: clock.seconds(),
    })
}

/// Globally optimal k-support by exhaustive enumeration.
pub fn solve_exact(instance: &Instance, config: &SolverConfig) -> Result<SolveResult> {
    instance.validate()?;
    check_budget(binomial_u128(instance.p() as u64, instance.k() as u64), config.budget)?;
    let mask = instance.is_planted().then(|| instance.planted_mask());
    search_best(instance, None, mask.as_deref(), config)
}

/// Optimum over supports sharing exactly `k − ell` indices with the planted
/// support.
pub fn solve_restricted(instance: &Instance, ell: usize, config: &SolverConfig) -> Result<SolveResult> {
    instance.validate()?;
    if !instance.is_planted() {
        return Err(Error::NotPlanted);
    }
    let (p, k) = (instance.p(), instance.k());
    if ell > k || ell > p - k {
        return Err(Error::Domain(format!("ell = {ell} must lie in [0, min(k, p - k)] = [0, {}]", k.min(p - k))));
    }
    let required = binomial_u128(k as u64, (k - ell) as u64).saturating_mul(binomial_u128((p - k) as u64, ell as u64));
    check_budget(required, config.budget)?;
    let mask = instance.planted_mask();
    let constraint = Constraint::new(mask.clone(), k - ell, ell);
    search_best(instance, Some(&constraint), Some(&mask), config)
}

/// Exhaustive solve on a pure-noise instance.
pub fn solve_pure_noise(instance: &Instance, config: &SolverConfig) -> Result<SolveResult> {
    if instance.is_planted() {
        return Err(Error::Domain("expected a pure-noise instance".into()));
    }
    solve_exact(instance, config)
}

/// Per-ℓ minima and sub-level counts (objective `< r`) in one pass.
pub fn overlap_profile(instance: &Instance, r: f64, config: &SolverConfig) -> Result<OverlapProfile> {
    instance.validate()?;
    if !instance.is_planted() {
        return Err(Error::NotPlanted);
    }
    if r.is_nan() {
        return Err(Error::Domain("radius is NaN".into()));
    }
    let (p, k) = (instance.p() as u64, instance.k() as u64);
    for ell in 0..=k {
        let required = binomial_u128(k, k - ell).saturating_mul(binomial_u128(p - k, ell));
        check_budget(required, config.budget)?;
    }
    check_budget(binomial_u128(p, k), config.budget)?;

    let cols = Columns::from_row_major(&instance.design, instance.n(), instance.p());
    let mask = instance.planted_mask();
    let k = instance.k();
    let search = Search { cols: &cols, y: &instance.response, k, norm: config.norm, constraint: None, mask: Some(&mask), top_norms: None };
    let leads = search.leads();
    let partials = par_map(&leads, config.threads, |lead| {
        let mut sink = ProfileSink::new(k, r);
        let leaves = search.run_lead(lead, &mut sink);
        (sink, leaves)
    });

    let mut total = ProfileSink::new(k, r);
    let mut evaluated = 0;
    for (part, leaves) in partials {
        evaluated += leaves;
        for ell in 0..=k {
            if part.min[ell] < total.min[ell] {
                total.min[ell] = part.min[ell];
                total.argmin[ell] = part.argmin[ell].clone();
            }
            total.count[ell] += part.count[ell];
        }
    }
    let bounds = theory::lower_bound_curve(&instance.params)?;
    let per_ell = (0..=k)
        .map(|ell| EllEntry {
            ell,
            min_objective: total.min[ell],
            argmin: std::mem::take(&mut total.argmin[ell]),
            count_below_r: total.count[ell],
            theory_lower_bound: bounds[ell].1,
        })
        .collect();
    Ok(OverlapProfile { per_ell, radius_r: r, norm_mode: config.norm, supports_evaluated: evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, generate_pure_noise, ModelParams};

    /// Fresh-residual enumeration over all k-subsets in lexicographic order.
    fn naive(instance: &Instance, norm: NormMode, filter: impl Fn(&[usize]) -> bool) -> (f64, Vec<usize>) {
        let (p, k) = (instance.p(), instance.k());
        let mut idx: Vec<usize> = (0..k).collect();
        let mut best = (f64::INFINITY, Vec::new());
        loop {
            if filter(&idx) {
                let obj = objective_of(instance, &idx, norm);
                if obj < best.0 {
                    best = (obj, idx.clone());
                }
            }
            // next combination
            let mut i = k;
            while i > 0 && idx[i - 1] == p - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                return best;
            }
            idx[i - 1] += 1;
            for t in i..k {
                idx[t] = idx[t - 1] + 1;
            }
        }
    }

    #[test]
    fn noiseless_recovers_planted() {
        let inst = generate_instance(&ModelParams::new(15, 3, 8, 0.0, 3)).unwrap();
        let res = solve_exact(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(res.support, inst.planted_support);
        assert!(res.objective < 1e-12);
        assert_eq!(res.overlap_ell, Some(0));
        assert_eq!(res.supports_evaluated, 455);
    }

    #[test]
    fn matches_naive_oracle() {
        for seed in 0..5 {
            let inst = generate_instance(&ModelParams::new(12, 3, 6, 1.0, seed)).unwrap();
            for norm in [NormMode::L2Scaled, NormMode::Linf] {
                let res = solve_exact(&inst, &SolverConfig::default().with_norm(norm)).unwrap();
                let (obj, sup) = naive(&inst, norm, |_| true);
                assert_eq!(res.objective, obj);
                assert_eq!(res.support, sup);
                assert_eq!(res.supports_evaluated, 220);
            }
        }
    }

    #[test]
    fn k_equal_one_and_k_equal_p() {
        let inst = generate_instance(&ModelParams::new(7, 1, 4, 0.5, 1)).unwrap();
        let res = solve_exact(&inst, &SolverConfig::default()).unwrap();
        assert_eq!((res.objective, res.support.clone()), naive(&inst, NormMode::L2Scaled, |_| true));
        let full = generate_instance(&ModelParams::new(5, 5, 4, 0.5, 1)).unwrap();
        let res = solve_exact(&full, &SolverConfig::default()).unwrap();
        assert_eq!(res.support, vec![0, 1, 2, 3, 4]);
        assert_eq!(res.overlap_ell, Some(0));
    }

    #[test]
    fn restricted_extremes() {
        let inst = generate_instance(&ModelParams::new(14, 3, 7, 1.0, 11)).unwrap();
        let cfg = SolverConfig::default();
        let r0 = solve_restricted(&inst, 0, &cfg).unwrap();
        let w = inst.noise.iter().map(|w| w * w).sum::<f64>().sqrt() / 7f64.sqrt();
        assert_eq!(r0.support, inst.planted_support);
        assert!((r0.objective - w).abs() <= 1e-12 * w.max(1.0));
        assert_eq!(r0.supports_evaluated, 1);

        let rk = solve_restricted(&inst, 3, &cfg).unwrap();
        let planted = inst.planted_support.clone();
        let (obj, sup) = naive(&inst, NormMode::L2Scaled, |s| s.iter().all(|j| !planted.contains(j)));
        assert_eq!((rk.objective, rk.support.clone()), (obj, sup));
        assert!(solve_restricted(&inst, 4, &cfg).is_err());
    }

    #[test]
    fn restricted_rejects_pure_noise() {
        let inst = generate_pure_noise(&ModelParams::new(10, 2, 5, 1.0, 0)).unwrap();
        assert!(matches!(solve_restricted(&inst, 1, &SolverConfig::default()), Err(Error::NotPlanted)));
        let res = solve_pure_noise(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(res.overlap_ell, None);
    }

    #[test]
    fn budget_refusal_names_requirement() {
        let inst = generate_instance(&ModelParams::new(30, 5, 3, 1.0, 0)).unwrap();
        let err = solve_exact(&inst, &SolverConfig::default().with_budget(1000)).unwrap_err();
        match err {
            Error::BudgetExceeded { required, budget } => {
                assert_eq!(required, 142_506);
                assert_eq!(budget, 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(solve_restricted(&inst, 1, &SolverConfig::default().with_budget(124)).is_err());
        assert!(solve_restricted(&inst, 1, &SolverConfig::default().with_budget(125)).is_ok());
    }

    #[test]
    fn profile_radius_extremes() {
        let inst = generate_instance(&ModelParams::new(10, 3, 5, 1.0, 2)).unwrap();
        let zero = overlap_profile(&inst, 0.0, &SolverConfig::default()).unwrap();
        assert!(zero.per_ell.iter().all(|e| e.count_below_r == 0));
        let all = overlap_profile(&inst, f64::INFINITY, &SolverConfig::default()).unwrap();
        for e in &all.per_ell {
            let expected = binomial_u128(3, (3 - e.ell) as u64) * binomial_u128(7, e.ell as u64);
            assert_eq!(e.count_below_r as u128, expected);
        }
        assert_eq!(all.supports_evaluated, 120);
    }

    #[test]
    fn parallel_matches_sequential() {
        let inst = generate_instance(&ModelParams::new(16, 3, 6, 1.0, 5)).unwrap();
        let seq = solve_exact(&inst, &SolverConfig::default()).unwrap();
        let par = solve_exact(&inst, &SolverConfig::default().with_threads(4)).unwrap();
        let pruned = solve_exact(&inst, &SolverConfig::default().with_threads(4).with_prune(true)).unwrap();
        assert_eq!((seq.objective, &seq.support), (par.objective, &par.support));
        assert_eq!((seq.objective, &seq.support), (pruned.objective, &pruned.support));
        let a = overlap_profile(&inst, 1.0, &SolverConfig::default()).unwrap();
        let b = overlap_profile(&inst, 1.0, &SolverConfig::default().with_threads(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lexicographic_tie_break() {
        // two identical columns make two supports tie exactly
        let mut inst = generate_instance(&ModelParams::new(6, 1, 4, 1.0, 8)).unwrap();
        for i in 0..4 {
            let v = inst.design[i * 6 + 4];
            inst.design[i * 6 + 1] = v;
        }
        let target: Vec<f64> = (0..4).map(|i| inst.design[i * 6 + 4]).collect();
        inst.response = target;
        inst.noise = vec![0.0; 4];
        inst.planted_support = vec![4];
        let res = solve_exact(&inst, &SolverConfig::default().with_threads(3)).unwrap();
        assert_eq!(res.support, vec![1]);
        assert_eq!(res.objective, 0.0);
    }
}
