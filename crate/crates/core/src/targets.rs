//! Target distributions with analytic scores and known (or certified)
//! constants.
//!
//! Two families are supported: a single Gaussian and a finite Gaussian
//! mixture. Both are closed under Gaussian convolution and under the
//! Ornstein–Uhlenbeck flow, which is what makes population-level KDE scores
//! and DDPM forward scores available in closed form.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::moments::GaussianMoments;
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A model constant that may be exact, numerically certified, or unknown.
///
/// `Unknown` is distinct from zero: bound evaluators refuse it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "value")]
pub enum Constant {
    Known(f64),
    /// Certified by numerical search rather than in closed form.
    Numerical(f64),
    Unknown,
}

impl Constant {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Constant::Known(v) | Constant::Numerical(v) => Some(v),
            Constant::Unknown => None,
        }
    }

    pub fn require(&self, name: &'static str) -> Result<f64> {
        self.value().ok_or(Error::UnknownConstant(name))
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Constant::Numerical(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianSpec {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        let spec = Self { mean, cov };
        spec.validate()?;
        Ok(spec)
    }

    /// N(0, alpha⁻¹ I_d).
    pub fn isotropic(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "isotropic Gaussian needs dim ≥ 1 and alpha > 0 (got {dim}, {alpha})"
            )));
        }
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim) / alpha)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if self.cov.nrows() != self.dim() || self.cov.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: self.cov.nrows(),
            });
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean".into()));
        }
        linalg::cholesky_spd(&self.cov).map(|_| ())
    }

    pub fn moments(&self) -> GaussianMoments {
        GaussianMoments {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

impl From<GaussianMoments> for GaussianSpec {
    fn from(m: GaussianMoments) -> Self {
        Self {
            mean: m.mean,
            cov: m.cov,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianSpec>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianSpec>) -> Result<Self> {
        let spec = Self { weights, components };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidParameter("mixture has no components".into()));
        }
        if self.weights.len() != self.components.len() {
            return Err(Error::DimensionMismatch {
                expected: self.components.len(),
                got: self.weights.len(),
            });
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        let dim = self.components[0].dim();
        for c in &self.components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            c.validate()?;
        }
        Ok(())
    }
}

/// JSON form of a target:
/// `{"family":"gaussian","mean":[..],"cov":[[..]]}` or
/// `{"family":"mixture","weights":[..],"components":[{"mean":..,"cov":..}]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<ComponentWire>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentWire {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl ComponentWire {
    fn to_spec(&self) -> Result<GaussianSpec> {
        GaussianSpec::new(linalg::vector_from(&self.mean), linalg::matrix_from_rows(&self.cov)?)
    }

    fn from_spec(spec: &GaussianSpec) -> Self {
        Self {
            mean: spec.mean.iter().copied().collect(),
            cov: linalg::matrix_to_rows(&spec.cov),
        }
    }
}

impl TargetSpec {
    pub fn build(&self) -> Result<TargetModel> {
        match self {
            TargetSpec::Gaussian { mean, cov } => {
                let spec = ComponentWire {
                    mean: mean.clone(),
                    cov: cov.clone(),
                }
                .to_spec()?;
                Ok(make_gaussian_target(spec))
            }
            TargetSpec::Mixture { weights, components } => {
                let comps = components
                    .iter()
                    .map(ComponentWire::to_spec)
                    .collect::<Result<Vec<_>>>()?;
                make_mixture_target(MixtureSpec::new(weights.clone(), comps)?)
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Component {
    spec: GaussianSpec,
    precision: Matrix,
    chol_lower: Matrix,
    /// −½ log det(2πΣ)
    log_norm: f64,
}

impl Component {
    fn new(spec: GaussianSpec) -> Self {
        let chol = linalg::cholesky_spd(&spec.cov).expect("validated covariance");
        let d = spec.dim() as f64;
        let log_norm = -0.5 * (d * LN_2PI + linalg::log_det_chol(&chol));
        Self {
            precision: linalg::symmetrize(&chol.inverse()),
            chol_lower: chol.l(),
            spec,
            log_norm,
        }
    }

    fn log_density(&self, x: &Vector) -> f64 {
        let diff = x - &self.spec.mean;
        self.log_norm - 0.5 * diff.dot(&(&self.precision * &diff))
    }

    fn score(&self, x: &Vector) -> Vector {
        -(&self.precision * (x - &self.spec.mean))
    }
}

#[derive(Clone, Debug)]
enum Family {
    Gaussian(Component),
    Mixture {
        weights: Vec<f64>,
        log_weights: Vec<f64>,
        components: Vec<Component>,
    },
}

/// A target distribution ν ∝ e^{−f}.
///
/// Log-densities are normalized (both families have known normalizers), but
/// consumers should treat them as defined up to an additive constant.
/// Immutable after construction; the mixture smoothness certificate is
/// computed lazily on first use.
#[derive(Clone, Debug)]
pub struct TargetModel {
    dim: usize,
    family: Family,
    lsi_alpha: Constant,
    smoothness: OnceLock<Constant>,
    subgaussian_sigma: Constant,
}

pub fn make_gaussian_target(spec: GaussianSpec) -> TargetModel {
    let comp = Component::new(spec);
    let prec_eigs = linalg::sym_eigenvalues(&comp.precision);
    let cov_max = linalg::lambda_max(&comp.spec.cov);
    let smoothness = OnceLock::new();
    let _ = smoothness.set(Constant::Known(*prec_eigs.last().unwrap()));
    TargetModel {
        dim: comp.spec.dim(),
        lsi_alpha: Constant::Known(prec_eigs[0]),
        smoothness,
        subgaussian_sigma: Constant::Known(cov_max.sqrt()),
        family: Family::Gaussian(comp),
    }
}

pub fn make_mixture_target(spec: MixtureSpec) -> Result<TargetModel> {
    spec.validate()?;
    let dim = spec.components[0].dim();
    let components: Vec<Component> = spec.components.into_iter().map(Component::new).collect();
    let log_weights = spec.weights.iter().map(|w| w.ln()).collect();

    // Sub-Gaussian certificate: E exp⟨v, X − EX⟩ factors into the component
    // MGF times a bounded-variable MGF, so Hoeffding's lemma gives
    // σ² = max λ_max(Σ_i) + max_i ‖m_i − m̄‖².
    let mut overall = DVector::zeros(dim);
    for (w, c) in spec.weights.iter().zip(&components) {
        overall += &c.spec.mean * *w;
    }
    let spread = spec
        .weights
        .iter()
        .zip(&components)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, c)| (&c.spec.mean - &overall).norm_squared())
        .fold(0.0, f64::max);
    let cov_max = components
        .iter()
        .map(|c| linalg::lambda_max(&c.spec.cov))
        .fold(0.0, f64::max);

    Ok(TargetModel {
        dim,
        lsi_alpha: Constant::Unknown,
        smoothness: OnceLock::new(),
        subgaussian_sigma: Constant::Known((cov_max + spread).sqrt()),
        family: Family::Mixture {
            weights: spec.weights,
            log_weights,
            components,
        },
    })
}

impl TargetModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Gaussian(_) => "gaussian",
            Family::Mixture { .. } => "mixture",
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, Family::Gaussian(_))
    }

    pub fn lsi_alpha(&self) -> Constant {
        self.lsi_alpha
    }

    /// Smoothness constant L of f = −log ν. Exact for Gaussians; for
    /// mixtures in d ≤ 2 a grid certificate flagged [`Constant::Numerical`],
    /// otherwise unknown.
    pub fn smoothness_l(&self) -> Constant {
        *self.smoothness.get_or_init(|| self.certify_smoothness())
    }

    pub fn subgaussian_sigma(&self) -> Constant {
        self.subgaussian_sigma
    }

    pub fn gaussian_spec(&self) -> Option<&GaussianSpec> {
        match &self.family {
            Family::Gaussian(c) => Some(&c.spec),
            Family::Mixture { .. } => None,
        }
    }

    pub fn gaussian_moments(&self) -> Option<GaussianMoments> {
        self.gaussian_spec().map(GaussianSpec::moments)
    }

    /// Precision matrix of a Gaussian target.
    pub fn precision(&self) -> Option<&Matrix> {
        match &self.family {
            Family::Gaussian(c) => Some(&c.precision),
            Family::Mixture { .. } => None,
        }
    }

    pub fn mixture_spec(&self) -> Option<MixtureSpec> {
        match &self.family {
            Family::Gaussian(_) => None,
            Family::Mixture {
                weights, components, ..
            } => Some(MixtureSpec {
                weights: weights.clone(),
                components: components.iter().map(|c| c.spec.clone()).collect(),
            }),
        }
    }

    pub fn to_spec(&self) -> TargetSpec {
        match &self.family {
            Family::Gaussian(c) => {
                let w = ComponentWire::from_spec(&c.spec);
                TargetSpec::Gaussian {
                    mean: w.mean,
                    cov: w.cov,
                }
            }
            Family::Mixture {
                weights, components, ..
            } => TargetSpec::Mixture {
                weights: weights.clone(),
                components: components.iter().map(|c| ComponentWire::from_spec(&c.spec)).collect(),
            },
        }
    }

    fn check_dim(&self, x: &Vector) {
        assert_eq!(x.len(), self.dim, "point dimension does not match target");
    }

    /// Posterior component responsibilities at `x` and the mixture
    /// log-density (log-sum-exp).
    fn responsibilities(weights_log: &[f64], components: &[Component], x: &Vector) -> (Vec<f64>, f64) {
        let logits: Vec<f64> = weights_log
            .iter()
            .zip(components)
            .map(|(lw, c)| lw + c.log_density(x))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let resp = exps.iter().map(|e| e / total).collect();
        (resp, max + total.ln())
    }

    pub fn log_density(&self, x: &Vector) -> f64 {
        self.check_dim(x);
        match &self.family {
            Family::Gaussian(c) => c.log_density(x),
            Family::Mixture {
                log_weights,
                components,
                ..
            } => Self::responsibilities(log_weights, components, x).1,
        }
    }

    /// ∇ log ν(x).
    pub fn score(&self, x: &Vector) -> Vector {
        self.check_dim(x);
        match &self.family {
            Family::Gaussian(c) => c.score(x),
            Family::Mixture {
                log_weights,
                components,
                ..
            } => {
                let (resp, _) = Self::responsibilities(log_weights, components, x);
                let mut s = DVector::zeros(self.dim);
                for (r, c) in resp.iter().zip(components) {
                    if *r > 0.0 {
                        s += c.score(x) * *r;
                    }
                }
                s
            }
        }
    }

    /// ∇² log ν(x).
    pub fn hessian_log_density(&self, x: &Vector) -> Matrix {
        self.check_dim(x);
        match &self.family {
            Family::Gaussian(c) => -c.precision.clone(),
            Family::Mixture {
                log_weights,
                components,
                ..
            } => {
                // ∇² log p = Σ r_i (s_i s_iᵀ − P_i) − s sᵀ
                let (resp, _) = Self::responsibilities(log_weights, components, x);
                let mut h = DMatrix::zeros(self.dim, self.dim);
                let mut s = DVector::zeros(self.dim);
                for (r, c) in resp.iter().zip(components) {
                    if *r > 0.0 {
                        let si = c.score(x);
                        h += (&si * si.transpose() - &c.precision) * *r;
                        s += si * *r;
                    }
                }
                linalg::symmetrize(&(h - &s * s.transpose()))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let comp = match &self.family {
            Family::Gaussian(c) => c,
            Family::Mixture {
                weights, components, ..
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                &components[chosen]
            }
        };
        let z = rng::standard_normal(rng, self.dim);
        &comp.spec.mean + &comp.chol_lower * z
    }

    fn map_components<F>(&self, f: F) -> Result<TargetModel>
    where
        F: Fn(&GaussianSpec) -> Result<GaussianSpec>,
    {
        match &self.family {
            Family::Gaussian(c) => Ok(make_gaussian_target(f(&c.spec)?)),
            Family::Mixture {
                weights, components, ..
            } => {
                let comps = components.iter().map(|c| f(&c.spec)).collect::<Result<Vec<_>>>()?;
                make_mixture_target(MixtureSpec {
                    weights: weights.clone(),
                    components: comps,
                })
            }
        }
    }

    fn certify_smoothness(&self) -> Constant {
        let Family::Mixture { components, .. } = &self.family else {
            unreachable!("Gaussian smoothness is set at construction");
        };
        if self.dim > 2 {
            return Constant::Unknown;
        }
        const PER_DIM: usize = 1000;
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for c in components {
            for j in 0..self.dim {
                let sd = c.spec.cov[(j, j)].sqrt();
                lo[j] = lo[j].min(c.spec.mean[j] - 6.0 * sd);
                hi[j] = hi[j].max(c.spec.mean[j] + 6.0 * sd);
            }
        }
        let axis = |j: usize, i: usize| lo[j] + (hi[j] - lo[j]) * i as f64 / (PER_DIM - 1) as f64;
        let total = PER_DIM.pow(self.dim as u32);
        let grid_max = (0..total)
            .into_par_iter()
            .map(|idx| {
                let x = DVector::from_fn(self.dim, |j, _| axis(j, (idx / PER_DIM.pow(j as u32)) % PER_DIM));
                let ev = linalg::sym_eigenvalues(&self.hessian_log_density(&x));
                ev[0].abs().max(ev[ev.len() - 1].abs())
            })
            .reduce(|| 0.0, f64::max);
        // Far from the box the Hessian tends to −P_i of the dominant component.
        let tail = components
            .iter()
            .map(|c| linalg::lambda_max(&c.precision))
            .fold(0.0, f64::max);
        Constant::Numerical(grid_max.max(tail))
    }
}

/// ρ ↦ ρ ∗ N(0, ηI): every component covariance gains ηI.
pub fn convolve_gaussian(target: &TargetModel, eta: f64) -> Result<TargetModel> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter(format!("bandwidth must be ≥ 0, got {eta}")));
    }
    let eye = DMatrix::<f64>::identity(target.dim, target.dim);
    target.map_components(|c| {
        Ok(GaussianSpec {
            mean: c.mean.clone(),
            cov: linalg::symmetrize(&(&c.cov + &eye * eta)),
        })
    })
}

/// Law at time `t` of the OU process dX = −αX dt + √2 dW started from the
/// target.
pub fn ou_marginal(target: &TargetModel, t: f64, alpha: f64) -> Result<TargetModel> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("OU time must be ≥ 0, got {t}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("OU rate must be > 0, got {alpha}")));
    }
    let decay = (-alpha * t).exp();
    let decay2 = decay * decay;
    let added = -(-2.0 * alpha * t).exp_m1() / alpha;
    let eye = DMatrix::<f64>::identity(target.dim, target.dim);
    let mut out = target.map_components(|c| {
        Ok(GaussianSpec {
            mean: &c.mean * decay,
            cov: linalg::symmetrize(&(&c.cov * decay2 + &eye * added)),
        })
    })?;
    if let Constant::Known(a0) = target.lsi_alpha {
        if target.is_gaussian() {
            out.lsi_alpha = Constant::Known(lsi_along_ou(a0, alpha, t)?);
        }
    }
    Ok(out)
}

/// LSI constant at time t of an α-LSI law evolved along the OU process with
/// rate β: αβ / (α + (β − α)e^{−2βt}).
pub fn lsi_along_ou(alpha: f64, beta: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0) || !(beta > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lsi_along_ou needs alpha, beta > 0 and t ≥ 0 (got {alpha}, {beta}, {t})"
        )));
    }
    if alpha == beta {
        return Ok(alpha);
    }
    Ok(alpha * beta / (alpha + (beta - alpha) * (-2.0 * beta * t).exp()))
}

/// Spectrum of −∇² log ρ_t for ρ_t = ρ ∗ N(0, tI) at one point, next to the
/// heat-flow envelope −L/(1−tL) ≤ · ≤ L/(1+tL).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianEnvelope {
    pub min_eig: f64,
    pub max_eig: f64,
    pub lower_env: f64,
    pub upper_env: f64,
}

impl HessianEnvelope {
    pub fn contained(&self, tol: f64) -> bool {
        self.min_eig >= self.lower_env - tol && self.max_eig <= self.upper_env + tol
    }
}

pub fn heat_flow_hessian_envelope(target: &TargetModel, t: f64, points: &[Vector]) -> Result<Vec<HessianEnvelope>> {
    let l = target.smoothness_l().require("smoothness_L")?;
    if !(t > 0.0) || t > 1.0 / (2.0 * l) {
        return Err(Error::Precondition(format!(
            "heat-flow time t = {t} must lie in (0, 1/(2L)] = (0, {}]",
            1.0 / (2.0 * l)
        )));
    }
    let smoothed = convolve_gaussian(target, t)?;
    let lower_env = -l / (1.0 - t * l);
    let upper_env = l / (1.0 + t * l);
    Ok(points
        .iter()
        .map(|x| {
            let ev = linalg::sym_eigenvalues(&(-smoothed.hessian_log_density(x)));
            HessianEnvelope {
                min_eig: ev[0],
                max_eig: ev[ev.len() - 1],
                lower_env,
                upper_env,
            }
        })
        .collect())
}
