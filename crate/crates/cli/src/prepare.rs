//! Turning a config into built objects and derived bound constants, with
//! every problem collected as a diagnostic rather than returned early.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use scorelab_core::linalg::{self, Matrix, Vector};
use scorelab_core::prelude::*;
use serde::Serialize;
use std::result::Result as StdResult;

use crate::config::{Algorithm, ErrorMethod, ExperimentConfig, InitSpec, Metric, ScoreErrorConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Config location the diagnostic is about, e.g. `bounds[0]`.
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn warning(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag} [{}]: {}", self.field, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

/// Score-error figures used by the bounds. For DDPM each field is the
/// maximum over the forward times the estimator was checked at.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub mgf_order_r: f64,
    pub eps2_sq: f64,
    pub eps_mgf_sq: f64,
    pub eps_inf: f64,
    pub eps_inf_certified: bool,
    pub method: Method,
    pub ci_halfwidth: (f64, f64),
    pub times_checked: usize,
}

impl ErrorSummary {
    fn from_report(r: ErrorReport) -> Self {
        Self {
            mgf_order_r: r.mgf_order_r,
            eps2_sq: r.eps2_sq,
            eps_mgf_sq: r.eps_mgf_sq,
            eps_inf: r.eps_inf,
            eps_inf_certified: r.eps_inf_certified,
            method: r.method,
            ci_halfwidth: r.ci_halfwidth,
            times_checked: 1,
        }
    }

    fn max(self, other: Self) -> Self {
        Self {
            mgf_order_r: self.mgf_order_r,
            eps2_sq: self.eps2_sq.max(other.eps2_sq),
            eps_mgf_sq: self.eps_mgf_sq.max(other.eps_mgf_sq),
            eps_inf: self.eps_inf.max(other.eps_inf),
            eps_inf_certified: self.eps_inf_certified && other.eps_inf_certified,
            method: self.method,
            ci_halfwidth: (
                self.ci_halfwidth.0.max(other.ci_halfwidth.0),
                self.ci_halfwidth.1.max(other.ci_halfwidth.1),
            ),
            times_checked: self.times_checked + other.times_checked,
        }
    }
}

pub fn error_report(
    est: &ScoreEstimator,
    target: &TargetModel,
    r: f64,
    cfg: &ScoreErrorConfig,
    seed: u64,
) -> Result<ErrorReport> {
    let closed_form = est.affine_parts().is_some() && target.is_gaussian();
    match cfg.method {
        ErrorMethod::Auto | ErrorMethod::Analytic if closed_form => ErrorReport::analytic(est, target, r),
        ErrorMethod::Analytic => Err(Error::UnsupportedFamily {
            op: "closed-form score error",
            family: "non-affine estimator or non-Gaussian target",
        }),
        _ => ErrorReport::monte_carlo(est, target, r, cfg.n, seed, cfg.box_radius, cfg.grid_n),
    }
}

/// A bound request with its constants resolved.
#[derive(Clone, Debug)]
pub struct PreparedBound {
    pub label: String,
    pub spec: BoundSpec,
    /// Where each constant came from.
    pub sources: BTreeMap<String, String>,
    pub window_violation: Option<String>,
}

/// Everything a run needs, built from a config.
pub struct Prepared {
    pub config: ExperimentConfig,
    pub target: TargetModel,
    pub estimator: ScoreEstimator,
    pub init: InitLaw,
    /// Gaussian law of the starting point, when it has one.
    pub init_law: Option<GaussianMoments>,
    pub ddpm: Option<DdpmParams>,
    /// DDPM estimators for times h·1..h·K.
    pub schedule: Option<Vec<ScoreEstimator>>,
    pub bounds: Vec<PreparedBound>,
    pub score_errors: Vec<ErrorSummary>,
}

impl Prepared {
    pub fn langevin_params(&self) -> LangevinParams {
        let p = &self.config.params;
        LangevinParams {
            step_h: p.step_h,
            num_steps_k: p.num_steps_k,
            substeps_per_step: self.config.algorithm.substeps(),
            chains: p.chains,
            seed: self.config.seed,
        }
    }

    /// Affine drift (A, b) driving the chains, when the score is affine.
    pub fn affine_drift(&self) -> Option<(Matrix, Vector)> {
        let est = match self.config.algorithm {
            Algorithm::Ula => exact_estimator(&self.target),
            _ => self.estimator.clone(),
        };
        est.affine_parts().map(|(a, b)| (a.clone(), b.clone()))
    }
}

const BOUND_ORDER_FORMULA: &[(BoundName, &str)] = &[
    (BoundName::IldKl, "1/α"),
    (BoundName::IlaKl, "9/α"),
    (BoundName::DdpmKl, "65/(6α)"),
];

fn algorithm_fits(name: BoundName, alg: &Algorithm, exact_score: bool) -> StdResult<(), String> {
    use BoundName::*;
    let ok = match name {
        IldKl | IldRenyiSurrogate => matches!(alg, Algorithm::Ild { .. }),
        IlaKl | IlaRenyi | IlaRenyiMgf | IlaRenyiSurrogate => {
            matches!(alg, Algorithm::Ila | Algorithm::Ula)
        }
        UlaKl => matches!(alg, Algorithm::Ula) || (matches!(alg, Algorithm::Ila) && exact_score),
        DdpmKl | OuInit => matches!(alg, Algorithm::Ddpm),
        KdeMgf | DdpmComplexity | IlaComplexity => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{name} does not apply to {} runs", alg.name()))
    }
}

/// Monte-Carlo KL(p‖ν) with both log-densities normalized.
fn kl_mc(p: &TargetModel, nu: &TargetModel, n: usize, seed: u64) -> Result<f64> {
    let bank = SampleBank::draw(p, n, seed)?;
    let total: f64 = bank.points().map(|x| p.log_density(&x) - nu.log_density(&x)).sum();
    Ok(total / n as f64)
}

/// N(−A⁻¹b, (−A)⁻¹) when A is symmetric negative definite: the law whose
/// score is x ↦ Ax + b.
fn affine_score_law(a: &Matrix, b: &Vector) -> Option<GaussianMoments> {
    if linalg::max_asymmetry(a) > 1e-12 {
        return None;
    }
    let neg = -a;
    let cov = linalg::symmetrize(&linalg::cholesky_spd(&neg).ok()?.inverse());
    let mean = &cov * b;
    GaussianMoments::new(mean, cov).ok()
}

struct Deriver<'a> {
    p: &'a Prepared,
    cache: BTreeMap<u64, StdResult<ErrorSummary, String>>,
}

impl Deriver<'_> {
    fn alpha(&self) -> StdResult<(f64, &'static str), String> {
        if let Some(d) = &self.p.ddpm {
            return Ok((d.alpha, "params.alpha"));
        }
        self.p
            .target
            .lsi_alpha()
            .value()
            .map(|a| (a, "target"))
            .ok_or_else(|| "the target's LSI constant is unknown".into())
    }

    fn score_error(&mut self, r: f64) -> StdResult<ErrorSummary, String> {
        if let Some(hit) = self.cache.get(&r.to_bits()) {
            return hit.clone();
        }
        let res = measure_score_error(self.p, r).map_err(|e| e.to_string());
        self.cache.insert(r.to_bits(), res.clone());
        res
    }

    fn mgf_order(&self, name: BoundName, alpha: f64) -> StdResult<f64, String> {
        if let Some(r) = self.p.config.score_error.mgf_order {
            return Ok(r);
        }
        name.mgf_order(alpha)
            .ok_or_else(|| format!("{name} has no fixed MGF order; set score_error.mgf_order"))
    }

    fn gamma_kl(&self, alpha: f64) -> StdResult<(f64, &'static str), String> {
        let gamma = GaussianMoments::isotropic(self.p.target.dim(), 1.0 / alpha);
        match self.p.target.gaussian_moments() {
            Some(nu) => kl_gaussian(&gamma, &nu)
                .map(|v| (v, "analytic"))
                .map_err(|e| e.to_string()),
            None => {
                let g = make_gaussian_target(GaussianSpec::from(gamma));
                let cfg = &self.p.config;
                kl_mc(&g, &self.p.target, cfg.score_error.n, cfg.mc_seed())
                    .map(|v| (v, "monte_carlo"))
                    .map_err(|e| e.to_string())
            }
        }
    }

    /// Value and provenance of one constant.
    fn derive(&mut self, key: &str, spec: &BoundSpec, q: f64) -> StdResult<(f64, String), String> {
        let p = self.p;
        let target = &p.target;
        let known = |c: Constant, what: &str| c.value().ok_or_else(|| format!("{what} is unknown"));
        let out = match key {
            "alpha" => {
                let (a, src) = self.alpha()?;
                (a, src.to_string())
            }
            "L" => (
                known(target.smoothness_l(), "the target's smoothness constant")?,
                if target.smoothness_l().is_numerical() {
                    "target (numerical certificate)"
                } else {
                    "target"
                }
                .into(),
            ),
            "Ls" => {
                let ls = match (&p.schedule, p.config.algorithm) {
                    (Some(s), _) => s
                        .iter()
                        .map(|e| e.lipschitz().value())
                        .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
                        .ok_or("the Lipschitz constant of some DDPM score is unknown")?,
                    (None, Algorithm::Ula) => known(target.smoothness_l(), "the target's smoothness constant")?,
                    _ => known(p.estimator.lipschitz(), "the estimator's Lipschitz constant")?,
                };
                (ls, "estimator".into())
            }
            "d" => (target.dim() as f64, "target".into()),
            "h" => (p.config.params.step_h, "params.step_h".into()),
            "q" => (q, "default".into()),
            "H0" => match (&p.init, &p.init_law, target.gaussian_moments()) {
                (InitLaw::Target(_), _, _) => (0.0, "init = target".into()),
                (InitLaw::Point(_), _, _) => (f64::INFINITY, "point init (no density)".into()),
                (_, Some(init), Some(nu)) => (kl_gaussian(init, &nu).map_err(|e| e.to_string())?, "analytic".into()),
                (_, Some(init), None) => {
                    let g = make_gaussian_target(GaussianSpec::from(init.clone()));
                    let cfg = &p.config;
                    let v = kl_mc(&g, target, cfg.score_error.n, cfg.mc_seed()).map_err(|e| e.to_string())?;
                    (v, "monte_carlo".into())
                }
                _ => return Err("no density for the initial law".into()),
            },
            "R0" => match (&p.init, &p.init_law, target.gaussian_moments()) {
                (InitLaw::Target(_), _, _) => (0.0, "init = target".into()),
                (_, Some(init), Some(nu)) => (
                    renyi_gaussian(q, init, &nu).map_err(|e| e.to_string())?,
                    "analytic".into(),
                ),
                _ => return Err("Rényi divergence of the initial law needs Gaussian init and target".into()),
            },
            "H_gamma" => {
                let a = match spec.get("alpha") {
                    Ok(a) => a,
                    Err(_) => self.alpha()?.0,
                };
                let (v, src) = self.gamma_kl(a)?;
                (v, src.into())
            }
            "eps_mgf_sq" => {
                let a = match spec.get("alpha") {
                    Ok(a) => a,
                    Err(_) => self.alpha()?.0,
                };
                let r = self.mgf_order(spec.name, a)?;
                let s = self.score_error(r)?;
                (
                    s.eps_mgf_sq,
                    format!("score error at r = {r} ({})", method_name(&s.method)),
                )
            }
            "eps_inf_sq" => {
                let s = self.score_error(1.0)?;
                let src = if s.eps_inf_certified {
                    "score error (certified)"
                } else {
                    "score error (grid lower bound, not certified)"
                };
                (s.eps_inf * s.eps_inf, src.into())
            }
            "R0_2" | "renyi_bias" => {
                let (a, b) = p
                    .estimator
                    .affine_parts()
                    .ok_or("needs an affine estimator to identify ν̂")?;
                let nu_hat = affine_score_law(a, b).ok_or("estimator is not the score of a Gaussian law")?;
                let nu = target.gaussian_moments().ok_or("needs a Gaussian target")?;
                if key == "R0_2" {
                    let init = p.init_law.as_ref().ok_or("needs a Gaussian initial law")?;
                    (
                        renyi_gaussian(2.0, init, &nu_hat).map_err(|e| e.to_string())?,
                        "analytic".into(),
                    )
                } else {
                    (
                        renyi_gaussian(2.0 * q - 1.0, &nu_hat, &nu).map_err(|e| e.to_string())?,
                        "analytic".into(),
                    )
                }
            }
            "eta" => match &p.config.estimator {
                EstimatorSpec::KdePop { eta } | EstimatorSpec::KdeEmp { eta, .. } => (*eta, "estimator".into()),
                _ => return Err("needs a KDE estimator".into()),
            },
            "sigma" => (
                known(target.subgaussian_sigma(), "the target's sub-Gaussian constant")?,
                "target".into(),
            ),
            "r" => (
                p.config.score_error.mgf_order.unwrap_or(1.0),
                "score_error.mgf_order (default 1)".into(),
            ),
            "s0_norm_sq" => (
                target.score(&Vector::zeros(target.dim())).norm_squared(),
                "target".into(),
            ),
            "eps" => return Err("target accuracy has no default".into()),
            other => return Err(format!("no derivation for `{other}`")),
        };
        Ok(out)
    }
}

pub fn method_name(m: &Method) -> &'static str {
    match m {
        Method::Analytic => "analytic",
        Method::MonteCarlo { .. } => "monte_carlo",
        Method::MomentFit { .. } => "moment_fit",
        Method::Knn { .. } => "knn",
        Method::Grid { .. } => "grid",
    }
}

/// Score error at order r. DDPM checks every forward time in closed form,
/// or 16 evenly spaced times by Monte Carlo.
fn measure_score_error(p: &Prepared, r: f64) -> Result<ErrorSummary> {
    let cfg = &p.config.score_error;
    let seed = p.config.mc_seed();
    match (&p.schedule, &p.ddpm) {
        (Some(schedule), Some(d)) => {
            let k = schedule.len();
            let closed = p.target.is_gaussian() && schedule.iter().all(|e| e.affine_parts().is_some());
            let times: Vec<usize> = if closed && cfg.method != ErrorMethod::MonteCarlo {
                (1..=k).collect()
            } else {
                let n = k.min(16);
                let mut t: Vec<usize> = (0..n).map(|i| 1 + i * (k - 1) / (n - 1).max(1)).collect();
                t.dedup();
                t
            };
            let reports: Vec<ErrorSummary> = times
                .par_iter()
                .map(|&j| {
                    let nu_t = ou_marginal(&p.target, d.step_h * j as f64, d.alpha)?;
                    error_report(&schedule[j - 1], &nu_t, r, cfg, seed.wrapping_add(j as u64))
                        .map(ErrorSummary::from_report)
                })
                .collect::<Result<_>>()?;
            Ok(reports
                .into_iter()
                .reduce(ErrorSummary::max)
                .expect("at least one time"))
        }
        _ => error_report(&p.estimator, &p.target, r, cfg, seed).map(ErrorSummary::from_report),
    }
}

fn build_init(spec: Option<&InitSpec>, target: &TargetModel) -> Result<(InitLaw, Option<GaussianMoments>)> {
    let d = target.dim();
    let check = |n: usize| {
        if n == d {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: d, got: n })
        }
    };
    Ok(match spec {
        None => {
            let law = GaussianMoments::isotropic(d, 1.0);
            (InitLaw::Gaussian(law.clone()), Some(law))
        }
        Some(InitSpec::Gaussian { mean, cov }) => {
            check(mean.len())?;
            let law = GaussianMoments::new(linalg::vector_from(mean), linalg::matrix_from_rows(cov)?)?;
            (InitLaw::Gaussian(law.clone()), Some(law))
        }
        Some(InitSpec::Point { x }) => {
            check(x.len())?;
            (InitLaw::Point(linalg::vector_from(x)), None)
        }
        Some(InitSpec::Target) => (InitLaw::Target(target.clone()), target.gaussian_moments()),
    })
}

pub(crate) fn check_output(c: &ExperimentConfig, diags: &mut Vec<Diagnostic>) {
    if c.output.trim().is_empty() {
        diags.push(Diagnostic::error("output", "output prefix is empty"));
    } else if let Some(parent) = std::path::Path::new(&c.output).parent() {
        if !parent.as_os_str().is_empty() && !parent.is_dir() {
            diags.push(Diagnostic::error(
                "output",
                format!("directory {} does not exist", parent.display()),
            ));
        }
    }
}

fn check_params(c: &ExperimentConfig, diags: &mut Vec<Diagnostic>) {
    let p = &c.params;
    if !(p.step_h > 0.0) || !p.step_h.is_finite() {
        diags.push(Diagnostic::error(
            "params.step_h",
            format!("step size must be positive and finite, got {}", p.step_h),
        ));
    }
    if p.num_steps_k == 0 {
        diags.push(Diagnostic::error("params.num_steps_k", "need at least one step"));
    }
    if p.chains == 0 {
        diags.push(Diagnostic::error("params.chains", "need at least one chain"));
    }
    if p.record_every == 0 {
        diags.push(Diagnostic::error("params.record_every", "must be ≥ 1"));
    }
    if let Algorithm::Ild { substeps: 0 } = c.algorithm {
        diags.push(Diagnostic::error("algorithm.substeps", "must be ≥ 1"));
    }
    if let Some(a) = p.alpha {
        if c.algorithm != Algorithm::Ddpm {
            diags.push(Diagnostic::warning(
                "params.alpha",
                "only DDPM uses params.alpha; ignored",
            ));
        } else if !(a > 0.0) || !a.is_finite() {
            diags.push(Diagnostic::error(
                "params.alpha",
                format!("must be positive and finite, got {a}"),
            ));
        }
    }
    check_output(c, diags);
    if let Some(InitSpec::Gaussian { .. } | InitSpec::Point { .. } | InitSpec::Target) = &c.init {
        if c.algorithm == Algorithm::Ddpm {
            diags.push(Diagnostic::warning(
                "init",
                "DDPM always starts at γ = N(0, α⁻¹I); init ignored",
            ));
        }
    }
    for (i, m) in c.metrics.iter().enumerate() {
        if let Metric::Renyi { q } = m {
            if !(*q > 1.0) || !q.is_finite() {
                diags.push(Diagnostic::error(
                    format!("metrics[{i}]"),
                    format!("Rényi order must be > 1, got {q}"),
                ));
            }
        }
    }
}

/// Builds everything the config describes. Returns `None` when an error
/// prevents building; diagnostics are exhaustive either way.
pub fn prepare(config: &ExperimentConfig) -> (Option<Prepared>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    check_params(config, &mut diags);

    let target = match config.target.build() {
        Ok(t) => Some(t),
        Err(e) => {
            diags.push(Diagnostic::error("target", e.to_string()));
            None
        }
    };
    let Some(target) = target else {
        return (None, diags);
    };

    let alg = config.algorithm;
    if alg == Algorithm::Ddpm && matches!(config.estimator, EstimatorSpec::KdeEmp { .. }) {
        diags.push(Diagnostic::error(
            "estimator",
            "kde_emp has no per-time sample banks; DDPM supports exact, perturbed, offset and kde_pop",
        ));
    }
    let estimator = match config.estimator.build(&target) {
        Ok(e) => Some(e),
        Err(e) => {
            diags.push(Diagnostic::error("estimator", e.to_string()));
            None
        }
    };
    if alg == Algorithm::Ula && !matches!(config.estimator, EstimatorSpec::Exact) {
        diags.push(Diagnostic::warning(
            "algorithm",
            "ula steps with the exact score; the estimator only enters score-error reports",
        ));
    }
    let init = match build_init(config.init.as_ref(), &target) {
        Ok(i) => Some(i),
        Err(e) => {
            diags.push(Diagnostic::error("init", e.to_string()));
            None
        }
    };

    let ddpm = if alg == Algorithm::Ddpm {
        let alpha = config.params.alpha.or(target.lsi_alpha().value());
        match alpha {
            None => {
                diags.push(Diagnostic::error(
                    "params.alpha",
                    "DDPM needs params.alpha: the target's LSI constant is unknown",
                ));
                None
            }
            Some(alpha) => {
                if let Some(lsi) = target.lsi_alpha().value() {
                    if alpha > lsi * (1.0 + 1e-12) {
                        diags.push(Diagnostic::warning(
                            "params.alpha",
                            format!("OU rate α = {alpha} exceeds the target's LSI constant {lsi}; the DDPM bounds assume ν is α-LSI"),
                        ));
                    }
                }
                let d = DdpmParams {
                    alpha,
                    step_h: config.params.step_h,
                    num_steps_k: config.params.num_steps_k,
                    chains: config.params.chains,
                    seed: config.seed,
                };
                match d.validate() {
                    Ok(()) => Some(d),
                    Err(_) => None, // already reported by check_params
                }
            }
        }
    } else {
        None
    };

    let (Some(estimator), Some((init, init_law))) = (estimator, init) else {
        return (None, diags);
    };
    if has_errors(&diags) {
        return (None, diags);
    }

    let schedule = match &ddpm {
        Some(d) => {
            let built: Result<Vec<ScoreEstimator>> = (1..=d.num_steps_k)
                .into_par_iter()
                .map(|j| {
                    config
                        .estimator
                        .build(&ou_marginal(&target, d.step_h * j as f64, d.alpha)?)
                })
                .collect();
            match built {
                Ok(s) => Some(s),
                Err(e) => {
                    diags.push(Diagnostic::error(
                        "estimator",
                        format!("building the DDPM score schedule: {e}"),
                    ));
                    return (None, diags);
                }
            }
        }
        None => None,
    };
    let (init, init_law) = match &ddpm {
        Some(d) => {
            let g = d.prior(target.dim());
            (InitLaw::Gaussian(g.clone()), Some(g))
        }
        None => (init, init_law),
    };

    let mut prepared = Prepared {
        config: config.clone(),
        target,
        estimator,
        init,
        init_law,
        ddpm,
        schedule,
        bounds: Vec::new(),
        score_errors: Vec::new(),
    };

    if let Some((a, _)) = prepared.affine_drift() {
        if alg != Algorithm::Ddpm {
            let h = config.params.step_h / alg.substeps() as f64;
            let bound = ila_contraction_bound(&a);
            if h >= bound {
                diags.push(Diagnostic::warning(
                    "params.step_h",
                    format!("step {h} ≥ {bound}: I + hA is not a contraction for this score; chains and propagated moments diverge"),
                ));
            }
        }
    }
    let analytic = prepared.target.is_gaussian()
        && prepared.init_law.is_some()
        && match &prepared.schedule {
            Some(s) => s.iter().all(|e| e.affine_parts().is_some()),
            None => prepared.affine_drift().is_some(),
        };
    for (i, m) in config.metrics.iter().enumerate() {
        if !analytic && matches!(m, Metric::Renyi { .. } | Metric::Fisher) {
            diags.push(Diagnostic::warning(
                format!("metrics[{i}]"),
                "Rényi and Fisher values are only computed for affine-Gaussian runs; skipped",
            ));
        }
    }

    let mut deriver = Deriver {
        p: &prepared,
        cache: BTreeMap::new(),
    };
    let exact_score = matches!(config.estimator, EstimatorSpec::Exact);
    let mut bounds = Vec::new();
    for (i, req) in config.bounds.iter().enumerate() {
        let field = format!("bounds[{i}]");
        let label = req.label();
        if let Err(msg) = algorithm_fits(req.name, &alg, exact_score) {
            diags.push(Diagnostic::error(&field, msg));
            continue;
        }
        let q = req.constants.get("q").copied().unwrap_or(2.0);
        let mut spec = BoundSpec::new(req.name);
        let mut sources = BTreeMap::new();
        let mut missing = Vec::new();
        for key in req.name.required_constants() {
            if let Some(v) = req.constants.get(*key) {
                spec = spec.with(key, *v);
                sources.insert(key.to_string(), "config".to_string());
                continue;
            }
            match deriver.derive(key, &spec, q) {
                Ok((v, src)) => {
                    spec = spec.with(key, v);
                    sources.insert(key.to_string(), src);
                }
                Err(why) => missing.push(format!("{key} ({why})")),
            }
        }
        for (k, v) in &req.constants {
            if !spec.constants.contains_key(k) {
                spec = spec.with(k, *v);
                sources.insert(k.clone(), "config".to_string());
            }
        }
        if !missing.is_empty() {
            diags.push(Diagnostic::error(
                &field,
                format!(
                    "{label}: cannot derive {}; supply them under `constants`",
                    missing.join(", ")
                ),
            ));
            continue;
        }
        if let (Some(r), Some((_, formula))) = (
            config.score_error.mgf_order,
            BOUND_ORDER_FORMULA.iter().find(|(n, _)| *n == req.name),
        ) {
            if let Some(stated) = spec.get("alpha").ok().and_then(|a| req.name.mgf_order(a)) {
                if (r - stated).abs() > 1e-12 * stated {
                    diags.push(Diagnostic::warning(
                        &field,
                        format!("{label} is stated with r = {formula} = {stated}; ε²_mgf is measured at r = {r}"),
                    ));
                }
            }
        }
        if sources.get("eps_inf_sq").is_some_and(|s| s.contains("not certified")) {
            diags.push(Diagnostic::warning(
                &field,
                format!("{label}: ε∞ is a grid maximum, a lower bound on the supremum"),
            ));
        }
        let mut window_violation = None;
        match spec.check() {
            Ok(()) => {}
            Err(Error::Precondition(msg)) => match spec.evaluate(probe_point(&spec)) {
                Ok(ev) if ev.window_violation.is_some() => {
                    diags.push(Diagnostic::warning(
                        &field,
                        format!("{label}: {msg}; evaluated outside its window"),
                    ));
                    window_violation = Some(msg);
                }
                _ => {
                    diags.push(Diagnostic::error(&field, format!("{label}: {msg}")));
                    continue;
                }
            },
            Err(e) => {
                diags.push(Diagnostic::error(&field, format!("{label}: {e}")));
                continue;
            }
        }
        if req.name == BoundName::KdeMgf {
            if let (Ok(eta), Ok(l), Ok(sigma), Ok(r), Ok(s0)) = (
                spec.get("eta"),
                spec.get("L"),
                spec.get("sigma"),
                spec.get("r"),
                spec.get("s0_norm_sq"),
            ) {
                if let Ok(k) = rhs_kde_mgf(eta, l, sigma, prepared.target.dim(), r, s0) {
                    if !k.in_window {
                        let msg = format!("η > {}: bandwidth outside the KDE window", k.window);
                        diags.push(Diagnostic::warning(&field, format!("{label}: {msg}")));
                        window_violation = Some(msg);
                    }
                }
            }
        }
        bounds.push(PreparedBound {
            label,
            spec,
            sources,
            window_violation,
        });
    }
    let score_errors = deriver.cache.into_values().filter_map(|r| r.ok()).collect();
    prepared.bounds = bounds;
    prepared.score_errors = score_errors;
    (Some(prepared), diags)
}

fn probe_point(spec: &BoundSpec) -> f64 {
    if spec.name == BoundName::IlaRenyiSurrogate {
        let (q, a, h) = (spec.get("q"), spec.get("alpha"), spec.get("h"));
        if let (Ok(q), Ok(a), Ok(h)) = (q, a, h) {
            return ila_surrogate_start(q, a, h).max(0.0).floor() + 1.0;
        }
    }
    if spec.name == BoundName::IldRenyiSurrogate {
        if let (Ok(q), Ok(a)) = (spec.get("q"), spec.get("alpha")) {
            return ild_surrogate_start(q, a).max(0.0);
        }
    }
    0.0
}

/// Diagnostics for a config, including every sweep point.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    match &config.sweep {
        None => diags.extend(prepare(config).1),
        Some(sweep) => {
            if sweep.values.is_empty() {
                diags.push(Diagnostic::error("sweep.values", "sweep has no values"));
            }
            if sweep.parameter == "eta" {
                diags.extend(crate::kde::validate_bandwidth_sweep(config, &sweep.values));
                return diags;
            }
            for v in &sweep.values {
                match config.with_parameter(&sweep.parameter, *v) {
                    Err(msg) => diags.push(Diagnostic::error("sweep.parameter", msg)),
                    Ok(c) => {
                        for mut d in prepare(&c).1 {
                            d.field = format!("sweep[{}={v}].{}", sweep.parameter, d.field);
                            diags.push(d);
                        }
                    }
                }
            }
            diags.dedup_by(|a, b| a.severity == Severity::Error && a == b);
        }
    }
    diags
}
