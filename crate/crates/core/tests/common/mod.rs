//! Independent oracles for the integration tests. Nothing here calls into
//! the algorithms under test: closed forms are re-derived in scalar form.

#![allow(dead_code)]

use scorelab_core::prelude::*;
use std::result::Result;

/// ε₂² of ŝ(x) = −α̂x against N(0, α⁻¹I_d).
pub fn perturbed_l2(alpha: f64, alpha_hat: f64, d: usize) -> f64 {
    (alpha_hat - alpha).powi(2) * d as f64 / alpha
}

/// ε²_mgf(r) of ŝ(x) = −α̂x against N(0, α⁻¹I_d); +∞ past the threshold.
pub fn perturbed_mgf(alpha: f64, alpha_hat: f64, d: usize, r: f64) -> f64 {
    let denom = alpha - 2.0 * r * (alpha_hat - alpha).powi(2);
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    d as f64 / (2.0 * r) * (alpha / denom).ln()
}

/// KL between Gaussians with diagonal covariances.
pub fn kl_diag(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    (0..m1.len())
        .map(|i| 0.5 * (v1[i] / v2[i] + (m1[i] - m2[i]).powi(2) / v2[i] - 1.0 + (v2[i] / v1[i]).ln()))
        .sum()
}

/// Rényi divergence of order q between Gaussians with diagonal covariances.
pub fn renyi_diag(q: f64, m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    (0..m1.len())
        .map(|i| {
            let vq = q * v2[i] + (1.0 - q) * v1[i];
            if vq <= 0.0 {
                return f64::INFINITY;
            }
            q * (m1[i] - m2[i]).powi(2) / (2.0 * vq)
                - (vq / (v1[i].powf(1.0 - q) * v2[i].powf(q))).ln() / (2.0 * (q - 1.0))
        })
        .sum()
}

/// Law after k ILA steps with ŝ(x) = −ax + c from N(m0, v0 I), per
/// coordinate: m_k = ρᵏ(m0 − c/a) + c/a, v_k = ρ^{2k}(v0 − v*) + v*, with
/// ρ = 1 − ha and v* = 2/(a(2 − ha)).
pub fn ila_isotropic(m0: &[f64], v0: f64, a: f64, c: &[f64], h: f64, k: u32) -> (Vec<f64>, f64) {
    let rho = 1.0 - h * a;
    let vstar = 2.0 / (a * (2.0 - h * a));
    let mean = m0
        .iter()
        .zip(c)
        .map(|(m, ci)| rho.powi(k as i32) * (m - ci / a) + ci / a)
        .collect();
    (mean, rho.powi(2 * k as i32) * (v0 - vstar) + vstar)
}

/// OU law dX = (−aX + c)dt + √2 dW at time t from N(m0, v0 I).
pub fn ou_isotropic(m0: &[f64], v0: f64, a: f64, c: &[f64], t: f64) -> (Vec<f64>, f64) {
    let e = (-a * t).exp();
    let mean = m0.iter().zip(c).map(|(m, ci)| e * m + (1.0 - e) * ci / a).collect();
    (mean, e * e * v0 + (1.0 - e * e) / a)
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Density of a 1-D Gaussian mixture.
pub fn mixture_pdf_1d(weights: &[f64], means: &[f64], vars: &[f64], x: f64) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(vars)
        .map(|((w, m), v)| w * (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
        .sum()
}

/// Central second difference.
pub fn second_difference<F: Fn(f64) -> f64>(f: F, x: f64, step: f64) -> f64 {
    (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step)
}

/// Empirical moments vs a Gaussian law: every mean and covariance entry
/// within `z` standard errors (Gaussian fourth-moment formula for the
/// covariance).
pub fn moments_within(m: &SampleMoments, law: &GaussianMoments, z: f64) -> Result<(), String> {
    let n = m.n as f64;
    let c = &law.cov;
    for i in 0..law.dim() {
        let se = (c[(i, i)] / n).sqrt();
        let dev = (m.mean[i] - law.mean[i]).abs() / se;
        if dev > z {
            return Err(format!("mean[{i}] off by {dev:.2} SE"));
        }
        for j in 0..law.dim() {
            let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / n).sqrt();
            let dev = (m.cov[i][j] - c[(i, j)]).abs() / se;
            if dev > z {
                return Err(format!("cov[{i}][{j}] off by {dev:.2} SE"));
            }
        }
    }
    Ok(())
}

pub fn vector(x: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(x)
}

pub fn iso_target(d: usize, alpha: f64) -> TargetModel {
    make_gaussian_target(GaussianSpec::isotropic(d, alpha).unwrap())
}

pub fn gaussian_target(mean: &[f64], cov_rows: &[f64]) -> TargetModel {
    let d = mean.len();
    make_gaussian_target(GaussianSpec::new(vector(mean), nalgebra::DMatrix::from_row_slice(d, d, cov_rows)).unwrap())
}
