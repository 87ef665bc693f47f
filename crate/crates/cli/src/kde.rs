//! Bandwidth sweeps for the population KDE score: measured ε²_mgf next to
//! the ηL²(d + σ²ηL²) scaling and its bandwidth window.

use rayon::prelude::*;
use scorelab_core::linalg::Vector;
use scorelab_core::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::prepare::{self, Diagnostic};

#[derive(Clone, Debug, Serialize)]
pub struct KdeRow {
    pub eta: f64,
    pub eps2_sq: f64,
    pub eps_mgf_sq: f64,
    /// 95% half-width of `eps_mgf_sq`; 0 when computed in closed form.
    pub ci_halfwidth: f64,
    pub method: Method,
    /// `None` when the target lacks a smoothness or sub-Gaussian constant.
    pub scaling: Option<KdeScaling>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KdeTable {
    pub mgf_order_r: f64,
    pub rows: Vec<KdeRow>,
    /// Least-squares slope of log ε²_mgf against log η over rows with η > 0.
    pub loglog_slope: Option<f64>,
}

fn mgf_order(config: &ExperimentConfig) -> f64 {
    config.score_error.mgf_order.unwrap_or(1.0)
}

fn scaling(target: &TargetModel, eta: f64, r: f64) -> Option<KdeScaling> {
    let l = target.smoothness_l().value()?;
    let sigma = target.subgaussian_sigma().value()?;
    let s0 = target.score(&Vector::zeros(target.dim())).norm_squared();
    rhs_kde_mgf(eta, l, sigma, target.dim(), r, s0).ok()
}

pub fn validate_bandwidth_sweep(config: &ExperimentConfig, etas: &[f64]) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    prepare::check_output(config, &mut diags);
    if !matches!(config.estimator, EstimatorSpec::KdePop { .. }) {
        diags.push(Diagnostic::error(
            "estimator",
            "an eta sweep tabulates the population KDE; set estimator.kind = kde_pop",
        ));
    }
    let r = mgf_order(config);
    if !(r > 0.0) || !r.is_finite() {
        diags.push(Diagnostic::error(
            "score_error.mgf_order",
            format!("must be positive, got {r}"),
        ));
    }
    let target = match config.target.build() {
        Ok(t) => t,
        Err(e) => {
            diags.push(Diagnostic::error("target", e.to_string()));
            return diags;
        }
    };
    if target.smoothness_l().value().is_none() || target.subgaussian_sigma().value().is_none() {
        diags.push(Diagnostic::warning(
            "target",
            "smoothness or sub-Gaussian constant unknown; the scaling column stays empty",
        ));
    }
    for (i, &eta) in etas.iter().enumerate() {
        let field = format!("sweep.values[{i}]");
        if !(eta >= 0.0) || !eta.is_finite() {
            diags.push(Diagnostic::error(field, format!("bandwidth must be ≥ 0, got {eta}")));
            continue;
        }
        if let Some(k) = scaling(&target, eta, r) {
            if !k.in_window {
                diags.push(Diagnostic::warning(
                    field,
                    format!("η = {eta} > {}: outside the KDE bandwidth window", k.window),
                ));
            }
        }
    }
    diags
}

pub fn bandwidth_table(config: &ExperimentConfig, etas: &[f64]) -> Result<KdeTable> {
    let target = config.target.build()?;
    let r = mgf_order(config);
    let seed = config.mc_seed();
    let rows = etas
        .par_iter()
        .map(|&eta| {
            let est = kde_population_estimator(&target, eta)?;
            let rep = prepare::error_report(&est, &target, r, &config.score_error, seed)?;
            Ok(KdeRow {
                eta,
                eps2_sq: rep.eps2_sq,
                eps_mgf_sq: rep.eps_mgf_sq,
                ci_halfwidth: rep.ci_halfwidth.1,
                method: rep.method,
                scaling: scaling(&target, eta, r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|row| row.eta > 0.0 && row.eps_mgf_sq > 0.0 && row.eps_mgf_sq.is_finite())
        .map(|row| (row.eta.ln(), row.eps_mgf_sq.ln()))
        .collect();
    Ok(KdeTable {
        mgf_order_r: r,
        loglog_slope: slope(&pts),
        rows,
    })
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
