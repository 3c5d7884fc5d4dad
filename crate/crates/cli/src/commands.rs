use std::path::{Path, PathBuf};

use binreg::experiments::{self, ExperimentConfig};
use binreg::io::{load_instance, params_json, write_instance};
use binreg::moments::{self, QuadratureOptions};
use binreg::solver::DEFAULT_BUDGET;
use binreg::theory::{self, OgpWindow, ThresholdReport};
use binreg::{generate_instance, generate_pure_noise, Instance, ModelParams, NormMode, SolverConfig};
use serde::Serialize;

use crate::output::{commit, resolve_out_dir, unix_ms, Outputs, RunManifest};
use crate::{CliError, Command, ExperimentArgs, ParamArgs, RunArgs};

impl ParamArgs {
    fn over(&self, base: ModelParams) -> ModelParams {
        ModelParams {
            p: self.p.unwrap_or(base.p),
            k: self.k.unwrap_or(base.k),
            n: self.n.unwrap_or(base.n),
            sigma2: self.sigma2.unwrap_or(base.sigma2),
            seed: self.seed.unwrap_or(base.seed),
        }
    }

    fn resolve(&self) -> ModelParams {
        self.over(ExperimentConfig::default().params)
    }
}

impl RunArgs {
    fn solver(&self, norm: NormMode, prune: bool) -> SolverConfig {
        SolverConfig::default()
            .with_norm(norm)
            .with_prune(prune)
            .with_threads(self.threads.unwrap_or(0))
            .with_budget(self.budget.unwrap_or(DEFAULT_BUDGET))
    }
}

struct Run<'a> {
    name: &'a str,
    out: Option<PathBuf>,
    started: u128,
    outputs: Outputs,
}

impl<'a> Run<'a> {
    fn new(name: &'a str, run: &RunArgs) -> Self {
        Run { name, out: run.out.clone(), started: unix_ms(), outputs: Outputs::default() }
    }

    fn finish<C: Serialize>(self, seed: u64, config: &C, summary: String) -> Result<String, CliError> {
        let dir = resolve_out_dir(self.out.as_deref());
        let manifest = RunManifest::new(self.name, seed, serde_json::to_value(config)?, self.started, self.outputs.names());
        commit(&dir, &self.outputs, &manifest)?;
        Ok(summary)
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Gen { params, run, pure_noise } => gen(&params, &run, pure_noise),
        Command::Theory { params, run, points, d0 } => theory_cmd(&params, &run, points, d0),
        Command::Solve { params, run, input, ell, prune, norm, pure_noise } => {
            solve(&params, &run, input.as_deref(), ell, prune, norm, pure_noise)
        }
        Command::Profile { params, run, input, r, d0, norm } => profile(&params, &run, input.as_deref(), r, d0, norm),
        Command::Moments { params, run, input, y, t } => moments_cmd(&params, &run, input.as_deref(), y, t),
        Command::Kernels { run, t, y, rho } => kernels(&run, t, y, rho),
        Command::Sweep(args) => sweep(&args),
        Command::Gammaval(args) => gammaval(&args),
        Command::Ogp(args) => ogp(&args),
        Command::Momval(args) => momval(&args),
    }
}

fn gen(params: &ParamArgs, run: &RunArgs, pure_noise: bool) -> Result<String, CliError> {
    let params = params.resolve();
    let mut r = Run::new("gen", run);
    let inst = if pure_noise { generate_pure_noise(&params)? } else { generate_instance(&params)? };
    let mut bytes = Vec::new();
    write_instance(&mut bytes, &inst)?;
    r.outputs.add("instance.bin", bytes);
    r.outputs.add("instance.bin.json", params_json(&inst)?.into_bytes());
    #[derive(Serialize)]
    struct GenConfig {
        params: ModelParams,
        pure_noise: bool,
    }
    let summary = format!("wrote instance.bin (p={}, k={}, n={}, planted={})", params.p, params.k, params.n, !pure_noise);
    r.finish(params.seed, &GenConfig { params, pure_noise }, summary)
}

#[derive(Serialize)]
struct TheoryOutput {
    thresholds: ThresholdReport,
    /// `(ℓ, e^{-3/2} Γ(ℓ/k))`
    lower_bound: Vec<(usize, f64)>,
    gamma_min: f64,
    ogp_radius: f64,
    ogp_window: Option<OgpWindow>,
    ogp_note: Option<String>,
}

fn theory_cmd(args: &ParamArgs, run: &RunArgs, points: usize, d0: f64) -> Result<String, CliError> {
    let mut params = args.resolve();
    if args.n.is_none() {
        if params.sigma2.is_nan() || params.sigma2 <= 0.0 {
            return Err(CliError::Usage("sigma2 must be positive to default n to ceil(n*)".into()));
        }
        params.n = theory::n_star(&params).ceil().max(1.0) as usize;
    }
    let mut r = Run::new("theory", run);
    let thresholds = theory::thresholds(&params)?;
    let curve = theory::gamma_curve(&params, points)?;
    let (ogp_window, ogp_note) = match theory::ogp_window(&params, d0) {
        Ok(w) => (Some(w), None),
        Err(e @ binreg::Error::VacuousWindow { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let out = TheoryOutput {
        thresholds,
        lower_bound: theory::lower_bound_curve(&params)?,
        gamma_min: curve.argmin().1,
        ogp_radius: theory::ogp_radius(&params, d0)?,
        ogp_window,
        ogp_note,
    };
    let c = theory::lower_bound_constant();
    let rows: Vec<experiments::CurveRow> =
        curve.points.iter().map(|&(zeta, gamma)| experiments::CurveRow { zeta, gamma, lower_bound: c * gamma }).collect();
    r.outputs.add_json("theory.json", &out)?;
    r.outputs.add_csv("gamma_curve.csv", &rows)?;
    #[derive(Serialize)]
    struct TheoryConfig {
        params: ModelParams,
        points: usize,
        d0: f64,
    }
    let summary = pretty(&out)?;
    r.finish(params.seed, &TheoryConfig { params, points, d0 }, summary)
}

fn instance_from(input: Option<&Path>, params: &ParamArgs, pure_noise: bool) -> Result<Instance, CliError> {
    match input {
        Some(path) => {
            if params.p.is_some() || params.k.is_some() || params.n.is_some() || params.sigma2.is_some() {
                return Err(CliError::Usage("--p/--k/--n/--sigma2 conflict with --input".into()));
            }
            Ok(load_instance(path)?)
        }
        None => {
            let p = params.resolve();
            Ok(if pure_noise { generate_pure_noise(&p)? } else { generate_instance(&p)? })
        }
    }
}

#[derive(Serialize)]
struct InstanceConfig<'a> {
    input: Option<&'a Path>,
    params: ModelParams,
    planted: bool,
    solver: SolverConfig,
}

fn solve(
    params: &ParamArgs,
    run: &RunArgs,
    input: Option<&Path>,
    ell: Option<usize>,
    prune: bool,
    norm: NormMode,
    pure_noise: bool,
) -> Result<String, CliError> {
    let mut r = Run::new("solve", run);
    let inst = instance_from(input, params, pure_noise)?;
    let solver = run.solver(norm, prune);
    let result = match (ell, inst.is_planted()) {
        (Some(ell), _) => binreg::solve_restricted(&inst, ell, &solver)?,
        (None, true) => binreg::solve_exact(&inst, &solver)?,
        (None, false) => binreg::solve_pure_noise(&inst, &solver)?,
    };
    r.outputs.add_json("solve.json", &result)?;
    #[derive(Serialize)]
    struct SolveConfig<'a> {
        #[serde(flatten)]
        base: InstanceConfig<'a>,
        ell: Option<usize>,
    }
    let config = SolveConfig {
        base: InstanceConfig { input, params: inst.params, planted: inst.is_planted(), solver },
        ell,
    };
    let summary = pretty(&result)?;
    r.finish(inst.params.seed, &config, summary)
}

fn profile(
    params: &ParamArgs,
    run: &RunArgs,
    input: Option<&Path>,
    radius: Option<f64>,
    d0: f64,
    norm: NormMode,
) -> Result<String, CliError> {
    let mut r = Run::new("profile", run);
    let inst = instance_from(input, params, false)?;
    let radius = match radius {
        Some(v) => v,
        None => theory::ogp_radius(&inst.params, d0)?,
    };
    let solver = run.solver(norm, false);
    let prof = binreg::overlap_profile(&inst, radius, &solver)?;
    let rows: Vec<ProfileCsv> = prof
        .per_ell
        .iter()
        .map(|e| ProfileCsv {
            ell: e.ell,
            min_objective: e.min_objective,
            count_below_r: e.count_below_r,
            theory_lb: e.theory_lower_bound,
        })
        .collect();
    r.outputs.add_csv("profile.csv", &rows)?;
    r.outputs.add_json("profile.json", &prof)?;
    #[derive(Serialize)]
    struct ProfileConfig<'a> {
        #[serde(flatten)]
        base: InstanceConfig<'a>,
        r: f64,
        d0: f64,
    }
    let config = ProfileConfig {
        base: InstanceConfig { input, params: inst.params, planted: inst.is_planted(), solver },
        r: radius,
        d0,
    };
    let (best, support) = prof.overall_min();
    let summary = format!(
        "r = {radius:.6}; overall min {best:.6} at {support:?}; sub-level overlaps {:?}; wrote profile.csv",
        prof.sublevel_ells()
    );
    r.finish(inst.params.seed, &config, summary)
}

/// `ell,min_objective,count_below_r,theory_lb`
#[derive(Serialize)]
struct ProfileCsv {
    ell: usize,
    min_objective: f64,
    count_below_r: u64,
    theory_lb: f64,
}

fn moments_cmd(params: &ParamArgs, run: &RunArgs, input: Option<&Path>, y: Option<Vec<f64>>, t: f64) -> Result<String, CliError> {
    let mut r = Run::new("moments", run);
    let (y, model) = match (input, y) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --input or --y, not both".into())),
        (Some(path), None) => {
            let inst = instance_from(Some(path), params, false)?;
            (inst.response.clone(), inst.params)
        }
        (None, Some(y)) => {
            if params.n.is_some_and(|n| n != y.len()) {
                return Err(CliError::Usage(format!("--n disagrees with the {} values given by --y", y.len())));
            }
            let n = y.len();
            (y, ModelParams { n, ..params.resolve() })
        }
        (None, None) => return Err(CliError::Usage("moments needs --input or --y".into())),
    };
    let report = moments::moment_report(&y, &model, t)?;
    r.outputs.add_json("moments.json", &report)?;
    #[derive(Serialize)]
    struct MomentsConfig<'a> {
        input: Option<&'a Path>,
        params: ModelParams,
        y: &'a [f64],
        t: f64,
    }
    let summary = pretty(&report)?;
    r.finish(model.seed, &MomentsConfig { input, params: model, y: &y, t }, summary)
}

#[derive(Serialize)]
struct KernelRow {
    t: f64,
    y: f64,
    rho: f64,
    p: f64,
    log_p: f64,
    log_p_lower_bound: f64,
    q: f64,
    q_error: f64,
    ratio: f64,
    ratio_bound: f64,
}

fn kernels(run: &RunArgs, ts: Vec<f64>, ys: Vec<f64>, rho: Option<Vec<f64>>) -> Result<String, CliError> {
    let mut r = Run::new("kernels", run);
    let rhos = rho.unwrap_or_else(|| ExperimentConfig::default().moments.kernel_rho);
    let options = QuadratureOptions::default();
    let mut rows = Vec::with_capacity(ts.len() * ys.len() * rhos.len());
    for &t in &ts {
        for &y in &ys {
            let p = moments::p_ty(t, y);
            for &rho in &rhos {
                let q = moments::q_tyrho_with(t, y, rho, &options)?;
                rows.push(KernelRow {
                    t,
                    y,
                    rho,
                    p,
                    log_p: p.ln(),
                    log_p_lower_bound: moments::log_p_lower_bound(t, y),
                    q: q.value,
                    q_error: q.error,
                    ratio: q.value / (p * p),
                    ratio_bound: moments::q_ratio_bound(y, rho),
                });
            }
        }
    }
    r.outputs.add_csv("kernels.csv", &rows)?;
    #[derive(Serialize)]
    struct KernelConfig {
        t: Vec<f64>,
        y: Vec<f64>,
        rho: Vec<f64>,
    }
    let summary = format!("wrote kernels.csv ({} rows)", rows.len());
    r.finish(0, &KernelConfig { t: ts, y: ys, rho: rhos }, summary)
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::parse_path(path)?,
            None => ExperimentConfig::default(),
        };
        cfg.params = self.params.over(cfg.params);
        if let Some(v) = self.run.threads {
            cfg.threads = v;
        }
        if let Some(v) = self.run.budget {
            cfg.budget = v;
        }
        if let Some(v) = &self.run.out {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = self.norm {
            cfg.norm = v;
        }
        if let Some(v) = self.d0 {
            cfg.d0 = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = &self.n_grid {
            cfg.n_grid = v.clone();
        }
        if let Some(v) = self.samples {
            cfg.moments.mc_samples = v;
            cfg.moments.chi_samples = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn start<'a>(&'a self, name: &'a str) -> Result<(Run<'a>, ExperimentConfig), CliError> {
        let mut r = Run::new(name, &self.run);
        let cfg = self.resolve()?;
        r.out.clone_from(&cfg.output);
        Ok((r, cfg))
    }
}

fn sweep(args: &ExperimentArgs) -> Result<String, CliError> {
    let (mut r, cfg) = args.start("sweep")?;
    let out = experiments::run_all_or_nothing_sweep(&cfg)?;
    r.outputs.add_csv("sweep_records.csv", &out.records)?;
    r.outputs.add_csv("sweep_aggregates.csv", &out.aggregates)?;
    let lines: Vec<String> = out
        .aggregates
        .iter()
        .map(|a| {
            format!(
                "n={:>4} {:<22} solved {}/{} mean overlap fraction {:.4} ± {:.4}",
                a.n, a.regime, a.solved, a.trials, a.mean_overlap_fraction, a.stderr_overlap_fraction
            )
        })
        .collect();
    r.finish(cfg.params.seed, &cfg, lines.join("\n"))
}

fn gammaval(args: &ExperimentArgs) -> Result<String, CliError> {
    let (mut r, cfg) = args.start("gammaval")?;
    let out = experiments::run_gamma_validation(&cfg)?;
    r.outputs.add_csv("gamma_records.csv", &out.records)?;
    r.outputs.add_csv("gamma_profiles.csv", &out.profiles)?;
    r.outputs.add_json("gamma_summary.json", &out.summary)?;
    let summary = pretty(&out.summary)?;
    r.finish(cfg.params.seed, &cfg, summary)
}

fn ogp(args: &ExperimentArgs) -> Result<String, CliError> {
    let (mut r, cfg) = args.start("ogp")?;
    let out = experiments::run_ogp_probe(&cfg)?;
    r.outputs.add_csv("ogp_records.csv", &out.records)?;
    r.outputs.add_csv("ogp_profiles.csv", &out.profiles)?;
    r.outputs.add_csv("ogp_curve.csv", &out.curve)?;
    #[derive(Serialize)]
    struct OgpReport<'a> {
        window: &'a OgpWindow,
        summary: &'a experiments::OgpSummary,
    }
    let report = OgpReport { window: &out.window, summary: &out.summary };
    r.outputs.add_json("ogp_summary.json", &report)?;
    let summary = pretty(&report)?;
    r.finish(cfg.params.seed, &cfg, summary)
}

fn momval(args: &ExperimentArgs) -> Result<String, CliError> {
    let (mut r, cfg) = args.start("momval")?;
    let out = experiments::run_moment_validation(&cfg)?;
    r.outputs.add_csv("moment_checks.csv", &out.rows)?;
    r.outputs.add_json("moment_summary.json", &out)?;
    let failed = out.rows.iter().filter(|row| !row.pass).count();
    let mut lines: Vec<String> = out.warnings.iter().map(|w| format!("warning: {w}")).collect();
    lines.push(format!("{} checks, {failed} failed; wrote moment_checks.csv", out.rows.len()));
    r.finish(cfg.params.seed, &cfg, lines.join("\n"))
}
