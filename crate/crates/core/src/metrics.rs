//! Score-error metrics and divergences.
//!
//! Three score-error metrics are measured against a reference law ν:
//!
//! * ε₂² = E_ν‖ŝ − s_ν‖²
//! * ε²_mgf(r) = (1/r) log E_ν exp(r‖ŝ − s_ν‖²)
//! * ε∞ = sup_x ‖ŝ(x) − s_ν(x)‖
//!
//! and they are ordered ε₂² ≤ ε²_mgf(r) ≤ ε∞². When the estimator is affine
//! and ν Gaussian all three have closed forms; otherwise they are estimated
//! by Monte Carlo with explicit seeds and CLT confidence half-widths.
//!
//! Divergences (KL, Rényi, relative Fisher information) between Gaussians are
//! closed forms evaluated through Cholesky factors. [`kl_knn_estimate`] is a
//! biased nearest-neighbour diagnostic for non-Gaussian laws and is never
//! used to accept a bound.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::estimators::{SampleBank, ScoreEstimator};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::GaussianMoments;
use crate::rng::chain_rng;
use crate::targets::TargetModel;

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo {
        n: usize,
        seed: u64,
    },
    /// KL between Gaussians fitted to empirical moments.
    MomentFit {
        n: usize,
    },
    Knn {
        n: usize,
        k: usize,
    },
    Grid {
        points: usize,
    },
}

/// Monte-Carlo mean with its 95% CLT half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub ci_halfwidth: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn stderr(&self) -> f64 {
        self.ci_halfwidth / Z_975
    }
}

/// Hill index at or below which the MGF is reported divergent. Exactly at a
/// Gaussian threshold the tail is Pareto(1) times a slowly decaying log factor,
/// which biases the top-1% Hill estimate to about 1 + 1/(2 log w) ≈ 1.15, so the
/// cut sits above 1. Indices below 2 already mean infinite variance.
pub const TAIL_INDEX_FLAG: f64 = 1.25;

/// Monte-Carlo MGF error with heavy-tail diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfEstimate {
    /// `raw_value`, or +∞ when the tail diagnostics flag divergence.
    pub value: f64,
    pub raw_value: f64,
    pub ci_halfwidth: f64,
    pub order_r: f64,
    /// Largest single-sample share of the empirical MGF sum.
    pub max_weight_fraction: f64,
    /// Hill estimate of the Pareto tail index of exp(r‖ŝ − s_ν‖²); the MGF
    /// is infinite when the true index is ≤ 1.
    pub tail_index: f64,
    pub divergent: bool,
    /// Largest ‖ŝ − s_ν‖² among the draws.
    pub max_sq_error: f64,
    pub n: usize,
    pub seed: u64,
}

impl MgfEstimate {
    pub fn stderr(&self) -> f64 {
        self.ci_halfwidth / Z_975
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfError {
    pub value: f64,
    /// True when `value` is the exact supremum rather than a grid maximum.
    pub certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub eps_inf: f64,
    pub eps_inf_certified: bool,
    pub eps2_sq: f64,
    pub mgf_order_r: f64,
    pub eps_mgf_sq: f64,
    pub method: Method,
    /// Half-widths for (ε₂², ε²_mgf); zero for analytic reports.
    pub ci_halfwidth: (f64, f64),
}

impl ErrorReport {
    /// Closed-form report for an affine estimator against a Gaussian target.
    pub fn analytic(est: &ScoreEstimator, target: &TargetModel, r: f64) -> Result<Self> {
        let linf = linf_error(est, target, 0.0, 1)?;
        Ok(Self {
            eps_inf: linf.value,
            eps_inf_certified: linf.certified,
            eps2_sq: l2_error_affine_gaussian(est, target)?,
            mgf_order_r: r,
            eps_mgf_sq: mgf_error_affine_gaussian(est, target, r)?,
            method: Method::Analytic,
            ci_halfwidth: (0.0, 0.0),
        })
    }

    /// Monte-Carlo report. Unless ε∞ is certified analytically it is the
    /// largest error over a grid on `[−box_radius, box_radius]^d` and the
    /// Monte-Carlo draws, a lower bound on the supremum.
    pub fn monte_carlo(
        est: &ScoreEstimator,
        target: &TargetModel,
        r: f64,
        n: usize,
        seed: u64,
        box_radius: f64,
        grid_n: usize,
    ) -> Result<Self> {
        let l2 = l2_error_mc(est, target, n, seed)?;
        let mgf = mgf_error_mc(est, target, r, n, seed)?;
        let linf = linf_error(est, target, box_radius, grid_n)?;
        let eps_inf = if linf.certified {
            linf.value
        } else {
            linf.value.max(mgf.max_sq_error.sqrt())
        };
        Ok(Self {
            eps_inf,
            eps_inf_certified: linf.certified,
            eps2_sq: l2.value,
            mgf_order_r: r,
            eps_mgf_sq: mgf.value,
            method: Method::MonteCarlo { n, seed },
            ci_halfwidth: (l2.ci_halfwidth, mgf.ci_halfwidth),
        })
    }
}

fn check_dims(est: &ScoreEstimator, target: &TargetModel) -> Result<()> {
    if est.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: est.dim(),
        });
    }
    Ok(())
}

/// Squared errors ‖ŝ(x_i) − s_ν(x_i)‖² at N exact draws from ν.
fn squared_errors(est: &ScoreEstimator, target: &TargetModel, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = chain_rng(seed, 0);
    (0..n)
        .map(|_| {
            let x = target.sample(&mut rng);
            (est.eval(&x) - target.score(&x)).norm_squared()
        })
        .collect()
}

pub fn l2_error_mc(est: &ScoreEstimator, target: &TargetModel, n: usize, seed: u64) -> Result<McEstimate> {
    check_dims(est, target)?;
    if n < 100 {
        return Err(Error::InvalidParameter(format!("need N ≥ 100 draws, got {n}")));
    }
    let errs = squared_errors(est, target, n, seed);
    let nf = n as f64;
    let mean = errs.iter().sum::<f64>() / nf;
    let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok(McEstimate {
        value: mean,
        ci_halfwidth: Z_975 * (var / nf).sqrt(),
        n,
        seed,
    })
}

pub fn mgf_error_mc(est: &ScoreEstimator, target: &TargetModel, r: f64, n: usize, seed: u64) -> Result<MgfEstimate> {
    check_dims(est, target)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("MGF order must be > 0, got {r}")));
    }
    if n < 100 {
        return Err(Error::InvalidParameter(format!("need N ≥ 100 draws, got {n}")));
    }
    let errs = squared_errors(est, target, n, seed);
    Ok(mgf_from_squared_errors(&errs, r, seed))
}

pub(crate) fn mgf_from_squared_errors(errs: &[f64], r: f64, seed: u64) -> MgfEstimate {
    let n = errs.len();
    let nf = n as f64;
    let logw: Vec<f64> = errs.iter().map(|e| r * e).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    let mean_w = sum / nf;
    let var_w = w.iter().map(|x| (x - mean_w).powi(2)).sum::<f64>() / (nf - 1.0);
    let raw_value = (max + mean_w.ln()) / r;
    // Delta method on log(mean W).
    let ci_halfwidth = Z_975 * (var_w / nf).sqrt() / mean_w / r;
    let max_weight_fraction = 1.0 / sum;

    let mut sorted = logw;
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = (n / 100).max(10).min(n - 1);
    let threshold = sorted[k];
    let hill = sorted[..k].iter().map(|l| l - threshold).sum::<f64>() / k as f64;
    let tail_index = if hill > 0.0 { 1.0 / hill } else { f64::INFINITY };

    let divergent = max_weight_fraction > 0.5 || tail_index <= TAIL_INDEX_FLAG;
    MgfEstimate {
        value: if divergent { f64::INFINITY } else { raw_value },
        raw_value,
        ci_halfwidth,
        order_r: r,
        max_weight_fraction,
        tail_index,
        divergent,
        max_sq_error: errs.iter().copied().fold(0.0, f64::max),
        n,
        seed,
    }
}

/// Closed-form MGF error for ν = N(0, α⁻¹I_d) and ŝ(x) = −α̂x:
/// (d/2r) log(α / (α − 2r(α̂ − α)²)), infinite once r ≥ α / (2(α̂ − α)²).
pub fn mgf_error_analytic_gaussian(alpha: f64, alpha_hat: f64, d: usize, r: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(alpha_hat > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need alpha, alpha_hat, r > 0 (got {alpha}, {alpha_hat}, {r})"
        )));
    }
    let gap_sq = (alpha_hat - alpha).powi(2);
    let c = 2.0 * r * gap_sq / alpha;
    // r = α/(2(α̂ − α)²) computed in floating point can land a few ulps short.
    if c >= 1.0 - 4.0 * f64::EPSILON {
        return Ok(f64::INFINITY);
    }
    // −ln(1 − c) stays accurate as r → 0.
    Ok(-(d as f64) / (2.0 * r) * (-c).ln_1p())
}

/// Error field e(x) = ŝ(x) − s_ν(x) = D x + c for an affine estimator and a
/// Gaussian target.
fn affine_error_field(est: &ScoreEstimator, target: &TargetModel) -> Result<(Matrix, Vector)> {
    check_dims(est, target)?;
    let (a, b) = est.affine_parts().ok_or(Error::UnsupportedFamily {
        op: "analytic score error",
        family: "non-affine estimator",
    })?;
    let (p, g) = target
        .precision()
        .zip(target.gaussian_spec())
        .ok_or(Error::UnsupportedFamily {
            op: "analytic score error",
            family: "mixture",
        })?;
    Ok((a + p, b - p * &g.mean))
}

/// E_ν‖Dx + c‖² = tr(DΣDᵀ) + ‖Dm + c‖².
pub fn l2_error_affine_gaussian(est: &ScoreEstimator, target: &TargetModel) -> Result<f64> {
    let (d, c) = affine_error_field(est, target)?;
    let g = target.gaussian_spec().unwrap();
    let s = &d * &g.cov * d.transpose();
    Ok(s.trace() + (&d * &g.mean + c).norm_squared())
}

/// For y = Dx + c ~ N(μ, S): E exp(r‖y‖²) = det(I − 2rS)^{−1/2} exp(r μᵀ(I − 2rS)⁻¹μ),
/// finite iff I − 2rS ≻ 0.
pub fn mgf_error_affine_gaussian(est: &ScoreEstimator, target: &TargetModel, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("MGF order must be > 0, got {r}")));
    }
    let (d, c) = affine_error_field(est, target)?;
    let g = target.gaussian_spec().unwrap();
    let s = linalg::symmetrize(&(&d * &g.cov * d.transpose()));
    let mu = &d * &g.mean + c;
    let dim = s.nrows();
    let m = Matrix::identity(dim, dim) - &s * (2.0 * r);
    let eig = linalg::sym_eigenvalues(&m);
    if eig[0] <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let Ok(chol) = linalg::cholesky_spd(&linalg::symmetrize(&m)) else {
        return Ok(f64::INFINITY);
    };
    // log det(I − 2rS) via ln_1p of the eigenvalues of 2rS for small-r accuracy.
    let s_eig = linalg::sym_eigenvalues(&s);
    let log_det: f64 = s_eig.iter().map(|l| (-2.0 * r * l).ln_1p()).sum();
    let quad = mu.dot(&chol.solve(&mu));
    Ok((-0.5 * log_det + r * quad) / r)
}

/// ε∞. Affine estimator vs Gaussian target is exact: finite (= ‖c‖) iff the
/// error field has no linear part, otherwise infinite. Everything else is a
/// grid maximum over `[−box_radius, box_radius]^d` with `grid_n` points per
/// axis, which only lower-bounds the supremum.
pub fn linf_error(est: &ScoreEstimator, target: &TargetModel, box_radius: f64, grid_n: usize) -> Result<LinfError> {
    if grid_n == 0 {
        return Err(Error::InvalidParameter("grid_n must be positive".into()));
    }
    if let Ok((d, c)) = affine_error_field(est, target) {
        let value = if d.amax() <= 1e-12 { c.norm() } else { f64::INFINITY };
        return Ok(LinfError { value, certified: true });
    }
    let dim = target.dim();
    let total = grid_n
        .checked_pow(dim as u32)
        .filter(|t| *t <= 50_000_000)
        .ok_or_else(|| Error::InvalidParameter(format!("grid {grid_n}^{dim} is too large")))?;
    let coord = |i: usize| {
        if grid_n == 1 {
            0.0
        } else {
            -box_radius + 2.0 * box_radius * i as f64 / (grid_n - 1) as f64
        }
    };
    let mut best = 0.0f64;
    let mut x = Vector::zeros(dim);
    for idx in 0..total {
        let mut rem = idx;
        for j in 0..dim {
            x[j] = coord(rem % grid_n);
            rem /= grid_n;
        }
        best = best.max((est.eval(&x) - target.score(&x)).norm());
    }
    Ok(LinfError {
        value: best,
        certified: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "snake_case")]
pub enum DivergenceKind {
    Kl,
    Renyi(f64),
    Fisher,
}

impl DivergenceKind {
    pub fn label(&self) -> String {
        match self {
            DivergenceKind::Kl => "kl".into(),
            DivergenceKind::Renyi(q) => format!("renyi_{q}"),
            DivergenceKind::Fisher => "fisher".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub kind: DivergenceKind,
    pub value: f64,
    pub method: Method,
    /// 95% half-width for Monte-Carlo based values; 0 otherwise.
    #[serde(default)]
    pub ci_halfwidth: f64,
}

fn check_pair(p: &GaussianMoments, q: &GaussianMoments) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok(())
}

/// KL(p ‖ q) for Gaussians.
pub fn kl_gaussian(p: &GaussianMoments, q: &GaussianMoments) -> Result<f64> {
    check_pair(p, q)?;
    let cp = linalg::cholesky_spd(&p.cov)?;
    let cq = linalg::cholesky_spd(&q.cov)?;
    let lq = cq.l();
    let lp = cp.l();
    let whitened = lq
        .solve_lower_triangular(&lp)
        .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))?;
    let trace = whitened.norm_squared();
    let diff = &q.mean - &p.mean;
    let wd = lq
        .solve_lower_triangular(&diff)
        .ok_or_else(|| Error::NotPositiveDefinite("singular factor".into()))?;
    let quad = wd.norm_squared();
    let log_det_ratio = linalg::log_det_chol(&cq) - linalg::log_det_chol(&cp);
    let kl = 0.5 * (trace + quad - p.dim() as f64 + log_det_ratio);
    Ok(kl.max(0.0))
}

/// KL(· ‖ ν) against a fixed Gaussian ν with ν's factorization cached, for
/// evaluating long moment trajectories.
#[derive(Clone, Debug)]
pub struct GaussianKlReference {
    mean: Vector,
    precision: Matrix,
    log_det: f64,
}

impl GaussianKlReference {
    pub fn new(nu: &GaussianMoments) -> Result<Self> {
        let chol = linalg::cholesky_spd(&nu.cov)?;
        Ok(Self {
            mean: nu.mean.clone(),
            log_det: linalg::log_det_chol(&chol),
            precision: linalg::symmetrize(&chol.inverse()),
        })
    }

    pub fn kl(&self, p: &GaussianMoments) -> Result<f64> {
        if p.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: p.dim(),
            });
        }
        let chol = linalg::cholesky_spd(&p.cov)?;
        let trace = self.precision.component_mul(&p.cov).sum();
        let diff = &p.mean - &self.mean;
        let quad = diff.dot(&(&self.precision * &diff));
        let kl = 0.5 * (trace + quad - p.dim() as f64 + self.log_det - linalg::log_det_chol(&chol));
        Ok(kl.max(0.0))
    }
}

/// Rényi divergence R_q(p ‖ ν) of order q > 1 for Gaussians; +∞ when
/// qC_ν + (1 − q)C_p is not positive definite.
pub fn renyi_gaussian(q: f64, p: &GaussianMoments, nu: &GaussianMoments) -> Result<f64> {
    if !(q > 1.0) {
        return Err(Error::InvalidParameter(format!("Rényi order must exceed 1, got {q}")));
    }
    check_pair(p, nu)?;
    let cp = linalg::cholesky_spd(&p.cov)?;
    let cn = linalg::cholesky_spd(&nu.cov)?;
    let mixed = linalg::symmetrize(&(&nu.cov * q + &p.cov * (1.0 - q)));
    let Ok(cm) = linalg::cholesky_spd(&mixed) else {
        return Ok(f64::INFINITY);
    };
    let diff = &p.mean - &nu.mean;
    let quad = diff.dot(&cm.solve(&diff));
    let log_det_term =
        linalg::log_det_chol(&cm) - (1.0 - q) * linalg::log_det_chol(&cp) - q * linalg::log_det_chol(&cn);
    let r = 0.5 * q * quad - log_det_term / (2.0 * (q - 1.0));
    Ok(r.max(0.0))
}

/// Relative Fisher information J_ν(p) = E_p‖∇log p − ∇log ν‖²
/// = tr((P_ν − P_p) C_p (P_ν − P_p)) + ‖P_ν(m_p − m_ν)‖².
pub fn fisher_gaussian(p: &GaussianMoments, nu: &GaussianMoments) -> Result<f64> {
    check_pair(p, nu)?;
    let pp = linalg::cholesky_spd(&p.cov)?.inverse();
    let pn = linalg::cholesky_spd(&nu.cov)?.inverse();
    let diff = &pn - &pp;
    let trace = (&diff * &p.cov * &diff).trace();
    let shift = (&pn * (&p.mean - &nu.mean)).norm_squared();
    Ok((trace + shift).max(0.0))
}

/// Kozachenko–Leonenko estimate of KL(p ‖ ν) = E_p log p − E_p log ν from
/// draws of p, with ν evaluated through its (normalized) log-density.
///
/// The estimator is biased at finite N; it is a qualitative diagnostic.
pub fn kl_knn_estimate(samples: &SampleBank, nu: &TargetModel, k: usize) -> Result<f64> {
    let n = samples.len();
    let d = samples.dim();
    if d != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: nu.dim(),
            got: d,
        });
    }
    if k == 0 || n < 10 * k {
        return Err(Error::InvalidParameter(format!(
            "kNN estimate needs k ≥ 1 and N ≥ 10k (N = {n}, k = {k})"
        )));
    }
    let dists = knn_distances(samples, k);
    if dists.iter().any(|r| *r <= 0.0) {
        return Err(Error::Degenerate(
            "duplicated samples give a zero k-th neighbour distance".into(),
        ));
    }
    let df = d as f64;
    let log_unit_ball = 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0);
    let mean_log_r = dists.iter().map(|r| r.ln()).sum::<f64>() / n as f64;
    let entropy = digamma(n as f64) - digamma(k as f64) + log_unit_ball + df * mean_log_r;
    let cross = samples.points().map(|x| nu.log_density(&x)).sum::<f64>() / n as f64;
    Ok(-entropy - cross)
}

fn knn_distances(samples: &SampleBank, k: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let n = samples.len();
    if samples.dim() == 1 {
        let mut xs: Vec<f64> = (0..n).map(|i| samples.row(i)[0]).collect();
        xs.sort_by(f64::total_cmp);
        return (0..n)
            .map(|i| {
                // Merge outward from i; the k-th nearest lies within k slots.
                let (mut lo, mut hi) = (i, i);
                let mut last = 0.0;
                for _ in 0..k {
                    let left = if lo > 0 { xs[i] - xs[lo - 1] } else { f64::INFINITY };
                    let right = if hi + 1 < n { xs[hi + 1] - xs[i] } else { f64::INFINITY };
                    if left <= right {
                        lo -= 1;
                        last = left;
                    } else {
                        hi += 1;
                        last = right;
                    }
                }
                last
            })
            .collect();
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = samples.row(i);
            let mut best = vec![f64::INFINITY; k];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let sq: f64 = xi.iter().zip(samples.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if sq < best[k - 1] {
                    let pos = best.partition_point(|b| *b <= sq);
                    best.insert(pos, sq);
                    best.pop();
                }
            }
            best[k - 1].sqrt()
        })
        .collect()
}
