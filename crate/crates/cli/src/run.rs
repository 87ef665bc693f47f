//! Executing a prepared experiment: simulation, exact laws where they exist,
//! bound values along the trajectory, audits and summary figures.

use std::collections::BTreeMap;

use scorelab_core::prelude::*;
use serde::Serialize;
use std::result::Result as StdResult;

use crate::config::{Algorithm, Metric};
use crate::prepare::{ErrorSummary, Prepared, PreparedBound};

/// Relative tolerance for an audit's tail maximum against the asymptote.
pub const STABILITY_TOL: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub parameter: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecordOut {
    pub step: usize,
    pub censored: usize,
    pub preconditions_ok: bool,
    pub divergences: Vec<DivergenceValue>,
    pub bound_values: Vec<BoundValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<SampleMoments>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundOut {
    pub label: String,
    pub name: BoundName,
    pub constants: BTreeMap<String, f64>,
    pub sources: BTreeMap<String, String>,
    pub window_violation: Option<String>,
    pub shape_only: bool,
    /// Single value for bounds that are not evaluated along the trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kde: Option<KdeScaling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity: Option<Complexity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_skipped: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunResult {
    pub run_id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepPoint>,
    pub algorithm: &'static str,
    pub num_steps_k: usize,
    pub chains: usize,
    pub censored: usize,
    pub censoring_fraction: f64,
    pub all_diverged: bool,
    pub score_errors: Vec<ErrorSummary>,
    pub summary: BTreeMap<String, f64>,
    pub bounds: Vec<BoundOut>,
    pub records: Vec<RecordOut>,
}

/// Exact Gaussian laws at the given steps, when the run is affine-Gaussian.
fn exact_laws(p: &Prepared, steps: &[usize]) -> Option<Vec<GaussianMoments>> {
    let init = p.init_law.as_ref()?;
    if !p.target.is_gaussian() {
        return None;
    }
    let h = p.config.params.step_h;
    match p.config.algorithm {
        Algorithm::Ddpm => {
            let laws = gaussian_ddpm_propagate(p.schedule.as_ref()?, p.ddpm.as_ref()?.alpha, h).ok()?;
            Some(steps.iter().map(|&k| laws[k].clone()).collect())
        }
        Algorithm::Ild { .. } => {
            let (a, b) = p.affine_drift()?;
            steps
                .iter()
                .map(|&k| ild_gaussian_law(init, &a, &b, k as f64 * h).ok())
                .collect()
        }
        Algorithm::Ila | Algorithm::Ula => {
            let (a, b) = p.affine_drift()?;
            let mut flow = IlaMomentFlow::new(init, &a, &b, h).ok()?;
            let mut out = Vec::with_capacity(steps.len());
            for &k in steps {
                while flow.steps() < k {
                    flow.step().ok()?;
                }
                out.push(flow.moments());
            }
            Some(out)
        }
    }
}

/// Divergence kinds to compute exactly: requested metrics plus whatever the
/// bounds are audited against.
fn wanted_kinds(p: &Prepared) -> Vec<DivergenceKind> {
    let mut kinds: Vec<DivergenceKind> = p
        .config
        .metrics
        .iter()
        .filter_map(|m| match m {
            Metric::Kl => Some(DivergenceKind::Kl),
            Metric::Renyi { q } => Some(DivergenceKind::Renyi(*q)),
            Metric::Fisher => Some(DivergenceKind::Fisher),
            Metric::Moments => None,
        })
        .collect();
    for b in &p.bounds {
        if let Some(k) = b.spec.name.divergence(b.spec.constants.get("q").copied()) {
            kinds.push(k);
        }
    }
    let mut out: Vec<DivergenceKind> = Vec::new();
    for k in kinds {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

fn exact_divergence(kind: DivergenceKind, law: &GaussianMoments, nu: &GaussianMoments) -> Option<f64> {
    match kind {
        DivergenceKind::Kl => kl_gaussian(law, nu).ok(),
        DivergenceKind::Renyi(q) => renyi_gaussian(q, law, nu).ok(),
        DivergenceKind::Fisher => fisher_gaussian(law, nu).ok(),
    }
}

fn is_trajectory_bound(name: BoundName) -> bool {
    use BoundName::*;
    matches!(
        name,
        IldKl | IlaKl | IlaRenyi | IlaRenyiMgf | UlaKl | IldRenyiSurrogate | IlaRenyiSurrogate
    )
}

fn bound_argument(b: &PreparedBound, step: usize, h: f64) -> f64 {
    if b.spec.name.continuous_time() {
        step as f64 * h
    } else {
        step as f64
    }
}

fn asymptote(spec: &BoundSpec) -> f64 {
    spec.asymptote()
        .or_else(|_| spec.evaluate(1e300).map(|e| e.rhs))
        .unwrap_or(f64::NAN)
}

fn audit_bound(b: &PreparedBound, records: &[RecordOut], h: f64, final_step: usize) -> StdResult<AuditResult, String> {
    let spec = &b.spec;
    let kind = spec
        .name
        .divergence(spec.constants.get("q").copied())
        .ok_or_else(|| format!("{} is not compared with a divergence", spec.name))?;
    let mut points = Vec::new();
    for r in records {
        if spec.name == BoundName::DdpmKl && r.step != final_step {
            continue;
        }
        let candidates = r.divergences.iter().filter(|d| d.kind == kind);
        let best = candidates
            .clone()
            .find(|d| d.method == Method::Analytic)
            .or_else(|| candidates.clone().next());
        let Some(dv) = best else { continue };
        let at = bound_argument(b, r.step, h);
        if spec.evaluate(at).is_err() {
            // Surrogate bounds only start after a burn-in.
            continue;
        }
        let ci = if dv.method == Method::Analytic {
            0.0
        } else {
            dv.ci_halfwidth.max(f64::MIN_POSITIVE)
        };
        points.push(AuditPoint {
            at,
            lhs: dv.value,
            ci_halfwidth: ci,
        });
    }
    if points.is_empty() {
        return Err(format!("no {} values recorded where the bound applies", kind.label()));
    }
    let mut out = audit_points(
        &b.label,
        &points,
        |at| spec.evaluate(at).map(|e| e.rhs),
        asymptote(spec),
        STABILITY_TOL,
    )
    .map_err(|e| e.to_string())?;
    out.constants = spec.constants.clone();
    Ok(out)
}

/// Runs one prepared experiment.
pub fn execute(p: &Prepared, run_id: usize, sweep: Option<SweepPoint>) -> Result<RunResult> {
    let cfg = &p.config;
    let params = &cfg.params;
    let h = params.step_h;
    let k_total = params.num_steps_k;

    let output = match (cfg.algorithm, &p.ddpm, &p.schedule) {
        (Algorithm::Ddpm, Some(d), Some(schedule)) => {
            run_ddpm(&p.target, &ScoreSource::Table(schedule.clone()), d, params.record_every)?
        }
        (Algorithm::Ddpm, _, _) => return Err(Error::InvalidParameter("DDPM run was not prepared".into())),
        (Algorithm::Ula, _, _) => run_ula(&p.init, &p.target, &p.langevin_params(), params.record_every)?,
        _ => run_ila(
            &p.init,
            &p.estimator,
            Some(&p.target),
            &p.langevin_params(),
            params.record_every,
        )?,
    };

    let (censoring_fraction, all_diverged) = (output.censoring_fraction(), output.all_diverged());
    let steps: Vec<usize> = output.records.iter().map(|r| r.step_index).collect();
    let laws = exact_laws(p, &steps);
    let nu = p.target.gaussian_moments();
    let kinds = wanted_kinds(p);
    let keep_moments = cfg.metrics.contains(&Metric::Moments);
    let window_ok = p.bounds.iter().all(|b| b.window_violation.is_none());

    let mut records = Vec::with_capacity(output.records.len());
    for (i, rec) in output.records.into_iter().enumerate() {
        let mut divergences = rec.divergences;
        if let (Some(laws), Some(nu)) = (&laws, &nu) {
            for kind in &kinds {
                if let Some(value) = exact_divergence(*kind, &laws[i], nu) {
                    divergences.push(DivergenceValue {
                        kind: *kind,
                        value,
                        method: Method::Analytic,
                        ci_halfwidth: 0.0,
                    });
                }
            }
        }
        let mut bound_values = Vec::new();
        for b in &p.bounds {
            let at = match b.spec.name {
                n if is_trajectory_bound(n) => bound_argument(b, rec.step_index, h),
                BoundName::DdpmKl if rec.step_index == k_total => k_total as f64,
                _ => continue,
            };
            if let Ok(ev) = b.spec.evaluate(at) {
                bound_values.push(BoundValue {
                    name: b.label.clone(),
                    rhs: ev.rhs,
                });
            }
        }
        records.push(RecordOut {
            step: rec.step_index,
            censored: rec.censored,
            preconditions_ok: window_ok,
            divergences,
            bound_values,
            moments: if keep_moments { rec.moments } else { None },
        });
    }

    let mut bounds = Vec::new();
    for b in &p.bounds {
        let mut out = BoundOut {
            label: b.label.clone(),
            name: b.spec.name,
            constants: b.spec.constants.clone(),
            sources: b.sources.clone(),
            window_violation: b.window_violation.clone(),
            shape_only: b.spec.name.shape_only(),
            value: None,
            kde: None,
            complexity: None,
            audit: None,
            audit_skipped: None,
        };
        match b.spec.name {
            BoundName::KdeMgf => {
                let s = &b.spec;
                let scaling = (|| {
                    rhs_kde_mgf(
                        s.get("eta")?,
                        s.get("L")?,
                        s.get("sigma")?,
                        p.target.dim(),
                        s.get("r")?,
                        s.get("s0_norm_sq")?,
                    )
                })();
                out.value = scaling.as_ref().ok().map(|k| k.value);
                out.kde = scaling.ok();
                out.audit_skipped = Some("scaling carries an unstated absolute constant".into());
            }
            BoundName::DdpmComplexity | BoundName::IlaComplexity => {
                out.complexity = b.spec.complexity().ok();
                out.audit_skipped = Some("complexity rates are not inequalities".into());
            }
            BoundName::OuInit => {
                let t = k_total as f64 * h;
                out.value = b.spec.evaluate(t).ok().map(|e| e.rhs);
                let lhs = p.ddpm.as_ref().and_then(|d| {
                    let gamma = d.prior(p.target.dim());
                    let nu_t = ou_marginal(&p.target, t, d.alpha).ok()?.gaussian_moments()?;
                    kl_gaussian(&gamma, &nu_t).ok()
                });
                match lhs {
                    Some(lhs) => {
                        let mut a = audit_points(
                            &b.label,
                            &[AuditPoint::analytic(t, lhs)],
                            |at| b.spec.evaluate(at).map(|e| e.rhs),
                            0.0,
                            STABILITY_TOL,
                        )
                        .ok();
                        if let Some(a) = a.as_mut() {
                            a.constants = b.spec.constants.clone();
                        }
                        out.audit = a;
                    }
                    None => out.audit_skipped = Some("KL(γ‖ν_T) needs a Gaussian target".into()),
                }
            }
            _ => match audit_bound(b, &records, h, k_total) {
                Ok(a) => out.audit = Some(a),
                Err(why) => out.audit_skipped = Some(why),
            },
        }
        bounds.push(out);
    }

    let mut summary = BTreeMap::new();
    summary.insert(
        "censoring_fraction".to_string(),
        output.censored as f64 / output.chains as f64,
    );
    if let (Some(laws), Some(nu)) = (&laws, &nu) {
        if let Some(last) = laws.last() {
            if let Ok(v) = kl_gaussian(last, nu) {
                summary.insert("kl_final".into(), v);
            }
        }
    }
    if let (Some(nu), Some((a, b)), false) = (&nu, p.affine_drift(), cfg.algorithm == Algorithm::Ddpm) {
        let ild = ild_stationary_law(&a, &b).and_then(|law| kl_gaussian(&law, nu));
        if let Ok(v) = ild {
            summary.insert("kl_stationary_ild".into(), v);
        }
        if matches!(cfg.algorithm, Algorithm::Ila | Algorithm::Ula) {
            let ila = ila_stationary_law(&a, &b, h).and_then(|law| kl_gaussian(&law, nu));
            if let Ok(v) = ila {
                summary.insert("kl_stationary".into(), v);
                if let Ok(floor) = ild {
                    summary.insert("kl_stationary_gap".into(), v - floor);
                }
            }
        }
    }
    for e in &p.score_errors {
        let r = e.mgf_order_r;
        summary.insert(format!("eps_mgf_sq_r{r}"), e.eps_mgf_sq);
        summary.insert("eps2_sq".into(), e.eps2_sq);
        summary.insert("eps_inf".into(), e.eps_inf);
    }

    Ok(RunResult {
        run_id,
        sweep,
        algorithm: cfg.algorithm.name(),
        num_steps_k: k_total,
        chains: output.chains,
        censored: output.censored,
        censoring_fraction,
        all_diverged,
        score_errors: p.score_errors.clone(),
        summary,
        bounds,
        records,
    })
}
