//! Seeded Monte Carlo harnesses.
//!
//! Every trial draws its instance from a seed derived from the master seed,
//! the experiment and the trial coordinates, so results do not depend on
//! scheduling. Trials run in parallel and are gathered back in
//! `(n, trial)` order before any aggregation.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{generate_instance, generate_pure_noise, ModelParams};
use crate::moments;
use crate::solver::{overlap_profile, par_map, solve_exact, solve_pure_noise, NormMode, OverlapProfile, SolverConfig};
use crate::special::binomial_u128;
use crate::theory::{self, OgpWindow};
use crate::{Error, Result};

const TAG_SWEEP: u64 = 1;
const TAG_GAMMA: u64 = 2;
const TAG_OGP: u64 = 3;
const TAG_PURE_NOISE: u64 = 4;
const TAG_MOMENT_ORACLE: u64 = 5;
const TAG_CHI_SQUARE: u64 = 6;
const TAG_TREND: u64 = 7;

/// Monte Carlo work is cut into this many fixed chunks, each with its own
/// derived seed.
const MC_CHUNKS: usize = 64;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the unit of work identified by `tags` under `master`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(master), |h, &t| splitmix64(h ^ t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Base model. `params.n` is the sample size of the single-`n`
    /// experiments and `params.seed` the master seed.
    pub params: ModelParams,
    /// Sample sizes of the all-or-nothing sweep.
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub d0: f64,
    /// Slack in the `(1 + ε)σ` upper bound.
    pub epsilon: f64,
    pub norm: NormMode,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses the global pool.
    pub threads: usize,
    pub budget: u64,
    pub moments: MomentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: ModelParams::new(60, 4, 15, 1.0, 0),
            n_grid: vec![8, 15, 30],
            trials: 100,
            d0: 3.0,
            epsilon: 0.1,
            norm: NormMode::L2Scaled,
            output: None,
            threads: 0,
            budget: crate::solver::DEFAULT_BUDGET,
            moments: MomentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentConfig {
    /// Design draws per conditional-moment comparison.
    pub mc_samples: usize,
    pub oracle_p: usize,
    pub oracle_k: usize,
    pub oracle_n: Vec<usize>,
    pub oracle_t: f64,
    /// Variance of the fixed response used by the oracle.
    pub oracle_sigma2: f64,
    pub chi_n: Vec<usize>,
    pub chi_t0: Vec<f64>,
    pub chi_samples: usize,
    pub kernel_t: Vec<f64>,
    pub kernel_y: Vec<f64>,
    pub kernel_rho: Vec<f64>,
    pub pure_noise: PureNoiseConfig,
    pub trend: TrendConfig,
}

impl Default for MomentConfig {
    fn default() -> Self {
        MomentConfig {
            mc_samples: 1_000_000,
            oracle_p: 6,
            oracle_k: 2,
            oracle_n: vec![1, 2, 3],
            oracle_t: 1.0,
            oracle_sigma2: 1.0,
            chi_n: vec![10, 20, 50],
            chi_t0: vec![0.3, 0.5, 0.8],
            chi_samples: 1_000_000,
            kernel_t: vec![0.1, 0.5, 1.0],
            kernel_y: (-3..=3).map(f64::from).collect(),
            kernel_rho: (0..20).map(|i| f64::from(i) / 20.0).collect(),
            pure_noise: PureNoiseConfig::default(),
            trend: TrendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PureNoiseConfig {
    pub p: usize,
    pub k: usize,
    pub n: usize,
    pub sigma2: f64,
    pub trials: usize,
}

impl Default for PureNoiseConfig {
    fn default() -> Self {
        PureNoiseConfig { p: 40, k: 3, n: 12, sigma2: 6.0, trials: 1000 }
    }
}

/// Ladder for the `E_Y min{1, Υ − 1}` trend. For each `k`,
/// `n = ⌈k ln k / c⌉`, `p` is the smallest integer with
/// `n ≤ k ln(p/k²) / (2 ln d)`, `σ² = variance_ratio · k` and
/// `t = d √(1 + σ²/k) (p/k²)^{−k/n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrendConfig {
    pub ks: Vec<usize>,
    pub d: f64,
    pub c: f64,
    pub variance_ratio: f64,
    pub samples: usize,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig { ks: vec![8, 16, 32], d: 8.0, c: 1.0, variance_ratio: 2.0, samples: 64 }
    }
}

impl ExperimentConfig {
    /// Parses TOML, or JSON when the extension is `.json`, and validates.
    pub fn from_path(path: &Path) -> Result<Self> {
        let config = Self::parse_path(path)?;
        config.validate()?;
        Ok(config)
    }

    /// Like [`ExperimentConfig::from_path`] without validation, for callers
    /// that apply overrides first.
    pub fn parse_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n == 0) {
            return bad(format!("n_grid entry {n} must be at least 1"));
        }
        if !(self.d0 > 1.0) {
            return bad(format!("d0 = {} must exceed 1", self.d0));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon = {} must be non-negative", self.epsilon));
        }
        let supports = binomial_u128(self.params.p as u64, self.params.k as u64);
        if supports > self.budget as u128 {
            return Err(Error::BudgetExceeded { required: supports, budget: self.budget });
        }
        let m = &self.moments;
        if m.mc_samples == 0 || m.chi_samples == 0 {
            return bad("Monte Carlo sample counts must be positive".into());
        }
        if m.oracle_k == 0 || m.oracle_p < 2 * m.oracle_k {
            return bad("moment oracle needs 1 <= k and p >= 2k".into());
        }
        if !(m.oracle_t > 0.0) || !(m.oracle_sigma2 >= 0.0) {
            return bad("moment oracle needs t > 0 and sigma2 >= 0".into());
        }
        if m.chi_t0.iter().any(|&t| !(t > 0.0 && t < 1.0)) || m.chi_n.contains(&0) {
            return bad("chi-square grid needs t0 in (0, 1) and n >= 1".into());
        }
        if m.kernel_t.iter().any(|&t| !(t > 0.0)) || m.kernel_rho.iter().any(|&r| !(0.0..1.0).contains(&r)) {
            return bad("kernel grid needs t > 0 and rho in [0, 1)".into());
        }
        let pn = &m.pure_noise;
        ModelParams::new(pn.p, pn.k, pn.n, pn.sigma2, 0).validate()?;
        if pn.trials == 0 {
            return bad("pure-noise trials must be positive".into());
        }
        let tr = &m.trend;
        if tr.ks.iter().any(|&k| k < 2) || !(tr.d > 1.0) || !(tr.c > 0.0) || !(tr.variance_ratio > 0.0) || tr.samples == 0 {
            return bad("trend needs k >= 2, d > 1, c > 0, variance_ratio > 0, samples >= 1".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig { norm: self.norm, prune: false, threads: 1, budget: self.budget }
    }

    fn trial_indices(&self) -> Vec<usize> {
        (0..self.trials).collect()
    }
}

/// Writes header plus rows in a fixed, locale-independent dialect.
pub fn write_csv<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

fn rate(flags: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for f in flags {
        hit += f as usize;
        total += 1;
    }
    if total == 0 {
        f64::NAN
    } else {
        hit as f64 / total as f64
    }
}

fn regime_label(params: &ModelParams) -> String {
    theory::thresholds(params).map_or_else(|_| "UNDEFINED".to_string(), |r| r.regime.label().to_string())
}

// ---------------------------------------------------------------------------
// all-or-nothing sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    /// `ok`, or the refusal / error message.
    pub status: String,
    pub overlap_ell: Option<usize>,
    /// `‖β₂ − β*‖₀ / (2k)`.
    pub overlap_fraction: Option<f64>,
    pub phi2: Option<f64>,
    pub regime: String,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub n: usize,
    pub trials: usize,
    pub solved: usize,
    pub mean_overlap_fraction: f64,
    pub stderr_overlap_fraction: f64,
    pub mean_phi2: f64,
    pub n_inf1: f64,
    pub n_star: f64,
    pub n_lasso: f64,
    pub regime: String,
    /// Smallest `C` with `max{k, 2k/σ² + 1} ≤ exp(√(C ln p))`.
    pub hypothesis_c_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<SweepAggregate>,
}

pub fn run_all_or_nothing_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    if config.n_grid.is_empty() {
        return Err(Error::Config("n_grid is empty".into()));
    }
    let base = config.params;
    let solver = config.solver();
    let units: Vec<(usize, usize)> =
        config.n_grid.iter().flat_map(|&n| (0..config.trials).map(move |t| (n, t))).collect();
    let index: Vec<usize> = (0..units.len()).collect();
    let records = par_map(&index, config.threads, |u| {
        let (n, trial) = units[u];
        let seed = derive_seed(base.seed, &[TAG_SWEEP, n as u64, trial as u64]);
        let params = base.with_n(n).with_seed(seed);
        let regime = regime_label(&params);
        let outcome = generate_instance(&params).and_then(|inst| solve_exact(&inst, &solver));
        match outcome {
            Ok(res) => {
                let ell = res.overlap_ell.expect("planted instance");
                SweepRecord {
                    n,
                    trial,
                    seed,
                    status: "ok".into(),
                    overlap_ell: Some(ell),
                    overlap_fraction: Some(ell as f64 / base.k as f64),
                    phi2: Some(res.objective),
                    regime,
                    wall_time: res.wall_time,
                }
            }
            Err(e) => SweepRecord {
                n,
                trial,
                seed,
                status: e.to_string(),
                overlap_ell: None,
                overlap_fraction: None,
                phi2: None,
                regime,
                wall_time: 0.0,
            },
        }
    });

    let k = base.k as f64;
    let c_min = if base.sigma2 > 0.0 {
        k.max(2.0 * k / base.sigma2 + 1.0).ln().powi(2) / (base.p as f64).ln()
    } else {
        f64::INFINITY
    };
    let aggregates = config
        .n_grid
        .iter()
        .map(|&n| {
            let rows: Vec<&SweepRecord> = records.iter().filter(|r| r.n == n).collect();
            let fr: Vec<f64> = rows.iter().filter_map(|r| r.overlap_fraction).collect();
            let phi: Vec<f64> = rows.iter().filter_map(|r| r.phi2).collect();
            let (mean, se) = mean_stderr(&fr);
            let params = base.with_n(n);
            let th = theory::thresholds(&params).ok();
            SweepAggregate {
                n,
                trials: rows.len(),
                solved: fr.len(),
                mean_overlap_fraction: mean,
                stderr_overlap_fraction: se,
                mean_phi2: mean_stderr(&phi).0,
                n_inf1: th.as_ref().map_or(f64::NAN, |t| t.n_inf1),
                n_star: th.as_ref().map_or(f64::NAN, |t| t.n_star),
                n_lasso: th.as_ref().map_or(f64::NAN, |t| t.n_lasso),
                regime: regime_label(&params),
                hypothesis_c_min: c_min,
            }
        })
        .collect();
    Ok(SweepOutput { records, aggregates })
}

// ---------------------------------------------------------------------------
// Γ validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub trial: usize,
    pub ell: usize,
    pub min_objective: f64,
    pub count_below_r: u64,
    pub theory_lb: f64,
}

fn profile_rows(trial: usize, profile: &OverlapProfile) -> Vec<ProfileRow> {
    profile
        .per_ell
        .iter()
        .map(|e| ProfileRow {
            trial,
            ell: e.ell,
            min_objective: e.min_objective,
            count_below_r: e.count_below_r,
            theory_lb: e.theory_lower_bound,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub radius_r: f64,
    pub phi2: f64,
    pub phi2_ell: usize,
    /// Every per-ℓ minimum is at least `e^{−3/2} Γ(ℓ/k)`.
    pub lower_ok: bool,
    pub count_at_k: u64,
    /// More than one support at `ℓ = k` lies below the radius.
    pub count_ok: bool,
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
    pub sandwich_ok: bool,
    /// `|φ₂(0) − n^{−1/2}‖W‖₂|`.
    pub ell0_gap: f64,
    pub ell0_matches_noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSummary {
    pub trials: usize,
    pub lower_pass_rate: f64,
    pub count_pass_rate: f64,
    pub sandwich_pass_rate: f64,
    pub ell0_exact_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaOutput {
    pub records: Vec<GammaRecord>,
    pub profiles: Vec<ProfileRow>,
    pub summary: GammaSummary,
}

/// `D₀ √(2k + σ²) e^{−k ln p / n}`.
pub fn gamma_validation_radius(params: &ModelParams, d0: f64) -> f64 {
    let (p, k, n) = (params.p as f64, params.k as f64, params.n as f64);
    d0 * (2.0 * k + params.sigma2).sqrt() * (-k * p.ln() / n).exp()
}

pub fn run_gamma_validation(config: &ExperimentConfig) -> Result<GammaOutput> {
    config.validate()?;
    let base = config.params;
    let solver = config.solver();
    let radius = gamma_validation_radius(&base, config.d0);
    let g0 = theory::gamma(0.0, &base)?;
    let g1 = theory::gamma(1.0, &base)?;
    let lower = theory::lower_bound_constant() * g0.min(g1);
    let upper = ((1.0 + config.epsilon) * base.sigma()).min(config.d0 * g1);

    let results = par_map(&config.trial_indices(), config.threads, |trial| -> Result<(GammaRecord, Vec<ProfileRow>)> {
        let seed = derive_seed(base.seed, &[TAG_GAMMA, base.n as u64, trial as u64]);
        let inst = generate_instance(&base.with_seed(seed))?;
        let profile = overlap_profile(&inst, radius, &solver)?;
        let (phi2, argmin) = profile.overall_min();
        let phi2_ell = inst.overlap_ell(argmin).expect("planted instance");
        let lower_ok = profile.per_ell.iter().all(|e| e.min_objective >= e.theory_lower_bound);
        let count_at_k = profile.per_ell[base.k].count_below_r;
        let w = inst.noise.iter().map(|w| w * w).sum::<f64>().sqrt() / (base.n as f64).sqrt();
        let ell0_gap = (profile.per_ell[0].min_objective - w).abs();
        let record = GammaRecord {
            trial,
            seed,
            n: base.n,
            radius_r: radius,
            phi2,
            phi2_ell,
            lower_ok,
            count_at_k,
            count_ok: count_at_k > 1,
            sandwich_lower: lower,
            sandwich_upper: upper,
            sandwich_ok: lower <= phi2 && phi2 <= upper,
            ell0_gap,
            ell0_matches_noise: ell0_gap <= 1e-12 * w.max(1.0),
        };
        Ok((record, profile_rows(trial, &profile)))
    });
    let mut records = Vec::with_capacity(config.trials);
    let mut profiles = Vec::new();
    for r in results {
        let (rec, rows) = r?;
        records.push(rec);
        profiles.extend(rows);
    }
    let summary = GammaSummary {
        trials: records.len(),
        lower_pass_rate: rate(records.iter().map(|r| r.lower_ok)),
        count_pass_rate: rate(records.iter().map(|r| r.count_ok)),
        sandwich_pass_rate: rate(records.iter().map(|r| r.sandwich_ok)),
        ell0_exact_rate: rate(records.iter().map(|r| r.ell0_matches_noise)),
    };
    Ok(GammaOutput { records, profiles, summary })
}

// ---------------------------------------------------------------------------
// overlap gap probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub zeta: f64,
    pub gamma: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgpRecord {
    pub trial: usize,
    pub seed: u64,
    pub radius_rk: f64,
    /// `ℓ` values with a non-empty sub-level set, `;`-separated.
    pub sublevel_ells: String,
    pub zero_in_l: bool,
    pub count_at_k: u64,
    pub count_at_k_ok: bool,
    /// The sub-level `ℓ` values form at least two separated blocks.
    pub splits: bool,
    /// No `ℓ` with `ℓ/k` strictly inside the forbidden band is in the set.
    pub middle_band_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgpSummary {
    pub trials: usize,
    pub zero_in_l_rate: f64,
    pub count_at_k_rate: f64,
    pub split_rate: f64,
    pub middle_band_empty_rate: f64,
    /// Some `ℓ/k` lies strictly inside the band, so emptiness is not vacuous.
    pub band_contains_grid_point: bool,
    pub hypotheses_hold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgpOutput {
    pub window: OgpWindow,
    pub curve: Vec<CurveRow>,
    pub records: Vec<OgpRecord>,
    pub profiles: Vec<ProfileRow>,
    pub summary: OgpSummary,
}

pub fn run_ogp_probe(config: &ExperimentConfig) -> Result<OgpOutput> {
    config.validate()?;
    let base = config.params;
    let window = theory::ogp_window(&base, config.d0)?;
    let solver = config.solver();
    let k = base.k;
    let in_band = |ell: usize| {
        let z = ell as f64 / k as f64;
        z > window.zeta1 && z < window.zeta2
    };
    let c = theory::lower_bound_constant();
    let curve = theory::gamma_curve(&base, 101)?
        .points
        .into_iter()
        .map(|(zeta, gamma)| CurveRow { zeta, gamma, lower_bound: c * gamma })
        .collect();

    let results = par_map(&config.trial_indices(), config.threads, |trial| -> Result<(OgpRecord, Vec<ProfileRow>)> {
        let seed = derive_seed(base.seed, &[TAG_OGP, base.n as u64, trial as u64]);
        let inst = generate_instance(&base.with_seed(seed))?;
        let profile = overlap_profile(&inst, window.r, &solver)?;
        let ells = profile.sublevel_ells();
        let count_at_k = profile.per_ell[k].count_below_r;
        let record = OgpRecord {
            trial,
            seed,
            radius_rk: window.r,
            sublevel_ells: ells.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"),
            zero_in_l: ells.first() == Some(&0),
            count_at_k,
            count_at_k_ok: count_at_k >= 1,
            splits: ells.windows(2).any(|w| w[1] > w[0] + 1),
            middle_band_empty: !ells.iter().any(|&l| in_band(l)),
        };
        Ok((record, profile_rows(trial, &profile)))
    });
    let mut records = Vec::with_capacity(config.trials);
    let mut profiles = Vec::new();
    for r in results {
        let (rec, rows) = r?;
        records.push(rec);
        profiles.extend(rows);
    }
    let summary = OgpSummary {
        trials: records.len(),
        zero_in_l_rate: rate(records.iter().map(|r| r.zero_in_l)),
        count_at_k_rate: rate(records.iter().map(|r| r.count_at_k_ok)),
        split_rate: rate(records.iter().map(|r| r.splits)),
        middle_band_empty_rate: rate(records.iter().map(|r| r.middle_band_empty)),
        band_contains_grid_point: (0..=k).any(in_band),
        hypotheses_hold: window.hypotheses_hold(),
    };
    Ok(OgpOutput { window, curve, records, profiles, summary })
}

// ---------------------------------------------------------------------------
// moment validation

/// One line of the pass/fail table. For Monte Carlo rows `tolerance` is three
/// standard errors; for kernel rows it is the quadrature error estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub group: String,
    pub case: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentValidation {
    pub rows: Vec<CheckRow>,
    pub warnings: Vec<String>,
}

impl MomentValidation {
    pub fn group_passes(&self, group: &str) -> bool {
        let mut rows = self.rows.iter().filter(|r| r.group == group).peekable();
        rows.peek().is_some() && rows.all(|r| r.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

fn row(group: &str, case: String, value: f64, reference: f64, tolerance: f64, pass: bool) -> CheckRow {
    CheckRow { group: group.into(), case, value, reference, tolerance, pass }
}

fn k_subsets(p: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in start..=p - (k - cur.len()) {
            cur.push(j);
            rec(j + 1, p, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, p, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Monte Carlo of `E[Z | Y]` and `E[Z² | Y]`, `Z` the number of k-supports
/// with `‖Y − Xβ‖∞ < t√k`, over fresh designs. Returns
/// `((mean Z, se), (mean Z², se))`.
pub fn monte_carlo_moments(
    y: &[f64],
    p: usize,
    k: usize,
    t: f64,
    samples: usize,
    seed: u64,
    threads: usize,
) -> ((f64, f64), (f64, f64)) {
    let n = y.len();
    let subsets = k_subsets(p, k);
    let thresh = t * (k as f64).sqrt();
    let chunks: Vec<usize> = (0..MC_CHUNKS).collect();
    let partial = par_map(&chunks, threads, |c| {
        let m = samples / MC_CHUNKS + usize::from(c < samples % MC_CHUNKS);
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
        let mut x = vec![0.0; n * p];
        let mut sums = [0.0f64; 4];
        for _ in 0..m {
            for v in x.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let z = subsets
                .iter()
                .filter(|s| {
                    (0..n).all(|i| {
                        let fit: f64 = s.iter().map(|&j| x[i * p + j]).sum();
                        (y[i] - fit).abs() < thresh
                    })
                })
                .count() as f64;
            sums[0] += z;
            sums[1] += z * z;
            sums[2] += z * z * z * z;
        }
        sums[3] = m as f64;
        sums
    });
    let mut tot = [0.0f64; 4];
    for s in partial {
        for (a, b) in tot.iter_mut().zip(s) {
            *a += b;
        }
    }
    let m = tot[3];
    let m1 = tot[0] / m;
    let m2 = tot[1] / m;
    let m4 = tot[2] / m;
    let se1 = ((m2 - m1 * m1).max(0.0) * m / (m - 1.0) / m).sqrt();
    let se2 = ((m4 - m2 * m2).max(0.0) * m / (m - 1.0) / m).sqrt();
    ((m1, se1), (m2, se2))
}

/// Empirical `P(χ²_n ≤ n t₀²)` with its standard error.
pub fn monte_carlo_chi_square(n: usize, t0: f64, samples: usize, seed: u64, threads: usize) -> Result<(f64, f64)> {
    let dist = ChiSquared::new(n as f64).map_err(|e| Error::Domain(e.to_string()))?;
    let cut = n as f64 * t0 * t0;
    let chunks: Vec<usize> = (0..MC_CHUNKS).collect();
    let hits: u64 = par_map(&chunks, threads, |c| {
        let m = samples / MC_CHUNKS + usize::from(c < samples % MC_CHUNKS);
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
        (0..m).filter(|_| dist.sample(&mut rng) <= cut).count() as u64
    })
    .into_iter()
    .sum();
    let phat = hits as f64 / samples as f64;
    Ok((phat, (phat * (1.0 - phat) / samples as f64).sqrt()))
}

/// Pure-noise lower bound `e^{−3/2} √(k+σ²) e^{−k ln p / n}`.
pub fn pure_noise_bound(params: &ModelParams) -> f64 {
    let (p, k, n) = (params.p as f64, params.k as f64, params.n as f64);
    theory::lower_bound_constant() * (k + params.sigma2).sqrt() * (-k * p.ln() / n).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureNoiseSummary {
    pub trials: usize,
    pub bound: f64,
    pub pass_rate: f64,
    pub min_objective: f64,
}

pub fn run_pure_noise_check(cfg: &PureNoiseConfig, master: u64, budget: u64, threads: usize) -> Result<PureNoiseSummary> {
    let params = ModelParams::new(cfg.p, cfg.k, cfg.n, cfg.sigma2, 0);
    params.validate()?;
    let bound = pure_noise_bound(&params);
    let solver = SolverConfig::default().with_budget(budget);
    let trials: Vec<usize> = (0..cfg.trials).collect();
    let objectives = par_map(&trials, threads, |trial| -> Result<f64> {
        let seed = derive_seed(master, &[TAG_PURE_NOISE, trial as u64]);
        let inst = generate_pure_noise(&params.with_seed(seed))?;
        Ok(solve_pure_noise(&inst, &solver)?.objective)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(PureNoiseSummary {
        trials: cfg.trials,
        bound,
        pass_rate: rate(objectives.iter().map(|&o| o >= bound)),
        min_objective: objectives.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// One rung of the `Υ` trend ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub k: usize,
    pub n: usize,
    pub p: u64,
    pub t: f64,
    pub sigma2: f64,
    /// Mean and standard error of `min{1, Υ − 1}` over sampled `Y`.
    pub mean: f64,
    pub stderr: f64,
    pub min_upsilon: f64,
}

pub fn trend_params(cfg: &TrendConfig, k: usize) -> Result<(ModelParams, f64)> {
    let kf = k as f64;
    let n = (kf * kf.ln() / cfg.c).ceil().max(1.0) as usize;
    // smallest p with n <= k ln(p/k²) / (2 ln d)
    let ln_ratio = 2.0 * cfg.d.ln() * n as f64 / kf;
    let p = (kf * kf * ln_ratio.exp()).ceil();
    if !(p < 9.0e15) {
        return Err(Error::Domain(format!("trend rung k = {k} needs p = {p:e}, beyond exact integer range")));
    }
    let p = (p as usize).max(2 * k);
    let sigma2 = cfg.variance_ratio * kf;
    let t = cfg.d * (1.0 + sigma2 / kf).sqrt() * (-(kf / n as f64) * (p as f64 / (kf * kf)).ln()).exp();
    Ok((ModelParams::new(p, k, n, sigma2, 0), t))
}

pub fn run_upsilon_trend(cfg: &TrendConfig, master: u64, threads: usize) -> Result<Vec<TrendPoint>> {
    cfg.ks
        .iter()
        .map(|&k| {
            let (params, t) = trend_params(cfg, k)?;
            let samples: Vec<usize> = (0..cfg.samples).collect();
            let ups = par_map(&samples, threads, |s| -> Result<f64> {
                let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(master, &[TAG_TREND, k as u64, s as u64]));
                let sd = params.sigma();
                let y: Vec<f64> = (0..params.n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
                Ok(moments::moment_report(&y, &params, t)?.upsilon_minus_one)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let clipped: Vec<f64> = ups.iter().map(|u| u.min(1.0)).collect();
            let (mean, stderr) = mean_stderr(&clipped);
            Ok(TrendPoint {
                k,
                n: params.n,
                p: params.p as u64,
                t,
                sigma2: params.sigma2,
                mean,
                stderr,
                min_upsilon: 1.0 + ups.iter().copied().fold(f64::INFINITY, f64::min),
            })
        })
        .collect()
}

/// Conditional moments against Monte Carlo over fresh designs, plus `Υ ≥ 1`.
pub fn moment_oracle_rows(m: &MomentConfig, master: u64, threads: usize) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &n in &m.oracle_n {
        let params = ModelParams::new(m.oracle_p, m.oracle_k, n, m.oracle_sigma2, 0);
        let seed = derive_seed(master, &[TAG_MOMENT_ORACLE, n as u64]);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sd = m.oracle_sigma2.sqrt();
        let y: Vec<f64> = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let report = moments::moment_report(&y, &params, m.oracle_t)?;
        let ((m1, se1), (m2, se2)) =
            monte_carlo_moments(&y, m.oracle_p, m.oracle_k, m.oracle_t, m.mc_samples, splitmix64(seed), threads);
        let e1 = report.log_first_moment.exp();
        let e2 = report.log_second_moment.exp();
        let case = format!("p={} k={} n={n} t={}", m.oracle_p, m.oracle_k, m.oracle_t);
        rows.push(row("first_moment", case.clone(), m1, e1, 3.0 * se1, (m1 - e1).abs() <= 3.0 * se1));
        rows.push(row("second_moment", case.clone(), m2, e2, 3.0 * se2, (m2 - e2).abs() <= 3.0 * se2));
        rows.push(row("upsilon_ge_1", case, report.upsilon, 1.0, 0.0, report.upsilon >= 1.0));
    }
    Ok(rows)
}

/// Empirical chi-square lower tail against `exp(n f(t₀))`.
pub fn chi_square_rows(m: &MomentConfig, master: u64, threads: usize) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &n in &m.chi_n {
        for &t0 in &m.chi_t0 {
            let seed = derive_seed(master, &[TAG_CHI_SQUARE, n as u64, t0.to_bits()]);
            let (phat, se) = monte_carlo_chi_square(n, t0, m.chi_samples, seed, threads)?;
            let bound = moments::chi_square_tail_bound(n, t0)?;
            rows.push(row("chi_square", format!("n={n} t0={t0}"), phat, bound, 3.0 * se, phat <= bound + 3.0 * se));
        }
    }
    Ok(rows)
}

/// The `q / p²` ratio bound, `p² ≤ q ≤ p`, quadrature error below `1e-10`,
/// and the `ln p` lower bound, over the kernel grid.
pub fn kernel_rows(m: &MomentConfig) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for &t in &m.kernel_t {
        for &y in &m.kernel_y {
            let p = moments::p_ty(t, y);
            let lb = moments::log_p_lower_bound(t, y);
            if t <= 1.0 {
                rows.push(row("log_p_lower", format!("t={t} y={y}"), p.ln(), lb, 0.0, p.ln() >= lb));
            }
            for &rho in &m.kernel_rho {
                let q = moments::q_tyrho_with(t, y, rho, &moments::QuadratureOptions::default())?;
                let ratio = q.value / (p * p);
                let bound = moments::q_ratio_bound(y, rho);
                let ordered = q.value >= p * p * (1.0 - 1e-12) && q.value <= p * (1.0 + 1e-12);
                let pass = ratio <= bound && q.error < 1e-10 && ordered;
                rows.push(row("q_ratio", format!("t={t} y={y} rho={rho}"), ratio, bound, q.error, pass));
            }
        }
    }
    let grid: Vec<f64> = (1..=1000).map(|i| i as f64 / 1001.0).collect();
    let concave = moments::concavity_check_f_rho(&grid)?;
    rows.push(row("f_rho_concave", "1000-point grid".into(), f64::from(u8::from(concave)), 1.0, 0.0, concave));
    Ok(rows)
}

/// `Υ ≥ 1` and the decrease of `E_Y min{1, Υ − 1}` along the ladder.
pub fn trend_rows(trend: &[TrendPoint]) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let mut previous = f64::INFINITY;
    for pt in trend {
        let case = format!("k={} n={} p={} t={:.6}", pt.k, pt.n, pt.p, pt.t);
        rows.push(row("upsilon_ge_1", case.clone(), pt.min_upsilon, 1.0, 0.0, pt.min_upsilon >= 1.0));
        rows.push(row("upsilon_trend", case, pt.mean, previous, pt.stderr, pt.mean <= previous));
        previous = pt.mean;
    }
    rows
}

pub fn run_moment_validation(config: &ExperimentConfig) -> Result<MomentValidation> {
    config.validate()?;
    let m = &config.moments;
    let master = config.params.seed;
    let threads = config.threads;
    let mut warnings = Vec::new();
    if m.mc_samples < 100_000 || m.chi_samples < 100_000 {
        warnings.push(format!(
            "low statistical power: {} moment draws, {} chi-square draws (1e6 recommended)",
            m.mc_samples, m.chi_samples
        ));
    }
    let mut rows = moment_oracle_rows(m, master, threads)?;
    rows.extend(chi_square_rows(m, master, threads)?);
    rows.extend(kernel_rows(m)?);
    let pn = run_pure_noise_check(&m.pure_noise, master, config.budget, threads)?;
    let pn_case = format!("p={} k={} n={} sigma2={}", m.pure_noise.p, m.pure_noise.k, m.pure_noise.n, m.pure_noise.sigma2);
    rows.push(row("pure_noise_bound", pn_case, pn.pass_rate, 0.99, 0.0, pn.pass_rate >= 0.99));
    rows.extend(trend_rows(&run_upsilon_trend(&m.trend, master, threads)?));
    Ok(MomentValidation { rows, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            params: ModelParams::new(10, 2, 6, 1.0, 42),
            n_grid: vec![3, 8],
            trials: 6,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = derive_seed(1, &[TAG_SWEEP, 8, 0]);
        assert_eq!(a, derive_seed(1, &[TAG_SWEEP, 8, 0]));
        assert_ne!(a, derive_seed(1, &[TAG_SWEEP, 8, 1]));
        assert_ne!(a, derive_seed(2, &[TAG_SWEEP, 8, 0]));
        assert_ne!(a, derive_seed(1, &[TAG_GAMMA, 8, 0]));
    }

    #[test]
    fn config_parsing_and_validation() {
        let cfg = ExperimentConfig::from_toml("trials = 5\nn_grid = [4, 9]\n[params]\np = 12\nk = 3\nn = 6\nsigma2 = 0.5\n").unwrap();
        assert_eq!(cfg.trials, 5);
        assert_eq!(cfg.params.p, 12);
        assert_eq!(cfg.moments, MomentConfig::default());
        cfg.validate().unwrap();
        assert!(ExperimentConfig::from_toml("trails = 5").is_err());
        let zero = ExperimentConfig { trials: 0, ..small() };
        assert!(zero.validate().is_err());
        let grid = ExperimentConfig { n_grid: vec![0], ..small() };
        assert!(grid.validate().is_err());
        let budget = ExperimentConfig { budget: 10, ..small() };
        assert!(matches!(budget.validate(), Err(Error::BudgetExceeded { required: 45, .. })));
        let json = serde_json::to_string(&small()).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), small());
    }

    #[test]
    fn hash_tracks_content() {
        assert_eq!(small().hash(), small().hash());
        assert_eq!(small().hash().len(), 64);
        assert_ne!(small().hash(), ExperimentConfig { trials: 7, ..small() }.hash());
    }

    #[test]
    fn sweep_is_reproducible_across_thread_counts() {
        let one = run_all_or_nothing_sweep(&ExperimentConfig { threads: 1, ..small() }).unwrap();
        let many = run_all_or_nothing_sweep(&ExperimentConfig { threads: 4, ..small() }).unwrap();
        let csv = |o: &SweepOutput| {
            let mut a = Vec::new();
            write_csv(&mut a, &o.records).unwrap();
            write_csv(&mut a, &o.aggregates).unwrap();
            a
        };
        assert_eq!(csv(&one), csv(&many));
        assert_eq!(one.aggregates.len(), 2);
        for r in &one.records {
            let f = r.overlap_fraction.unwrap();
            assert!((0.0..=1.0).contains(&f));
            assert!(r.phi2.unwrap() >= 0.0);
        }
    }

    #[test]
    fn gamma_validation_basics() {
        let out = run_gamma_validation(&small()).unwrap();
        assert_eq!(out.records.len(), 6);
        assert_eq!(out.profiles.len(), 6 * 3);
        assert_eq!(out.summary.ell0_exact_rate, 1.0);
        for r in &out.records {
            let mins: Vec<f64> = out.profiles.iter().filter(|p| p.trial == r.trial).map(|p| p.min_objective).collect();
            assert_eq!(r.phi2, mins.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }

    #[test]
    fn ogp_probe_reports_window() {
        let cfg = ExperimentConfig { params: ModelParams::new(20, 3, 12, 1.0, 1), trials: 4, ..small() };
        let out = run_ogp_probe(&cfg).unwrap();
        assert_eq!(out.curve.len(), 101);
        assert_eq!(out.records.len(), 4);
        assert!(out.window.zeta1 < out.window.zeta2);
    }

    #[test]
    fn chi_square_monte_carlo_is_seeded() {
        let a = monte_carlo_chi_square(10, 0.5, 20_000, 3, 1).unwrap();
        let b = monte_carlo_chi_square(10, 0.5, 20_000, 3, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.0 <= moments::chi_square_tail_bound(10, 0.5).unwrap() + 3.0 * a.1);
    }

    #[test]
    fn moment_oracle_small_run() {
        let y = [0.4, -0.8];
        let params = ModelParams::new(6, 2, 2, 1.0, 0);
        let rep = moments::moment_report(&y, &params, 1.0).unwrap();
        let ((m1, se1), (m2, se2)) = monte_carlo_moments(&y, 6, 2, 1.0, 50_000, 9, 0);
        assert!((m1 - rep.log_first_moment.exp()).abs() <= 4.0 * se1);
        assert!((m2 - rep.log_second_moment.exp()).abs() <= 4.0 * se2);
    }

    #[test]
    fn trend_rungs_satisfy_sample_size_condition() {
        let cfg = TrendConfig::default();
        for &k in &cfg.ks {
            let (params, t) = trend_params(&cfg, k).unwrap();
            let kf = k as f64;
            let lim = kf * (params.p as f64 / (kf * kf)).ln() / (2.0 * cfg.d.ln());
            assert!(params.n as f64 <= lim + 1e-9);
            assert!(t > 0.0 && t <= 1.0, "t = {t}");
        }
    }
}
