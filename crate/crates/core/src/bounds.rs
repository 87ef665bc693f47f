//! Convergence-bound right-hand sides, step-size windows and trajectory
//! audits.
//!
//! Every `rhs_*` function checks its window first and refuses with
//! [`Error::Precondition`] naming the violated inequality. Strict windows
//! (`h < …`) refuse equality; non-strict ones (`h ≤ …`) accept it.
//!
//! | Name | Sampler | Divergence | Window | Score error |
//! |------|---------|------------|--------|-------------|
//! | `ild_kl` | ILD | KL | none | ε²_mgf, r = 1/α |
//! | `ila_kl` | ILA | KL | h < min(α/(12 L_s L), 1/(2α)) | ε²_mgf, r = 9/α |
//! | `ila_renyi` | ILA | Rényi q | h < min(α/(12 L L_s q), q/(4α)) | ε∞² |
//! | `ddpm_kl` | DDPM | KL | h ≤ α/(96 L_s L) | ε²_mgf, r = 65/(6α) |
//! | `ula_kl` | ULA | KL | h ≤ α/(4L²) | none |
//! | `ild_renyi_surrogate` | ILD, ŝ = ∇log ν̂ | Rényi q | t ≥ log(2q − 1)/(2α) | R_{2q−1,ν}(ν̂) |
//! | `ila_renyi_surrogate` | ILA, ŝ = ∇log ν̂ | Rényi q | q ≥ 3, h < α/(192q²L²), k > K₀ | R_{2q−1,ν}(ν̂) |
//!
//! `ula_kl` and `ila_renyi_surrogate` contain O(·) terms without explicit
//! constants; they take a configurable constant and are only used for shape
//! checks, never as hard inequalities.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{DivergenceKind, Method};
use crate::samplers::TrajectoryRecord;

/// Relative slack for analytic audits.
pub const AUDIT_SLACK: f64 = 1e-9;

/// Default constant for the O(dhL²/α) bias of ULA.
pub const ULA_BIAS_CONSTANT: f64 = 8.0;

fn refuse(msg: String) -> Error {
    Error::Precondition(msg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    // +∞ is allowed for divergences and errors: the bound is then vacuous.
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be ≥ 0, got {v}")))
    }
}

/// Products like 0·∞ appear when an infinite error meets a zero weight;
/// treat them as 0.
fn weighted(c: f64, v: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * v
    }
}

/// ILD, KL: e^{−αt/2}H₀ + (2/α)(1 − e^{−αt/2})ε²_mgf.
pub fn rhs_ild_kl(h0: f64, alpha: f64, eps_mgf_sq: f64, t: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    nonnegative("H0", h0)?;
    nonnegative("eps_mgf_sq", eps_mgf_sq)?;
    nonnegative("t", t)?;
    let decay = (-0.5 * alpha * t).exp();
    Ok(weighted(decay, h0) + weighted(-2.0 / alpha * (-0.5 * alpha * t).exp_m1(), eps_mgf_sq))
}

/// Limit of [`rhs_ild_kl`] as t → ∞: 2ε²_mgf/α.
pub fn ild_kl_asymptote(alpha: f64, eps_mgf_sq: f64) -> f64 {
    2.0 * eps_mgf_sq / alpha
}

pub fn ila_kl_window(alpha: f64, l: f64, ls: f64, h: f64) -> Result<()> {
    positive("alpha", alpha)?;
    positive("L", l)?;
    positive("L_s", ls)?;
    positive("h", h)?;
    let a = alpha / (12.0 * ls * l);
    let b = 1.0 / (2.0 * alpha);
    if h >= a {
        return Err(refuse(format!("h ≥ α/(12 L_s L): h = {h}, α/(12 L_s L) = {a}")));
    }
    if h >= b {
        return Err(refuse(format!("h ≥ 1/(2α): h = {h}, 1/(2α) = {b}")));
    }
    Ok(())
}

/// (C₁, C₂) = (128 L_s(L_s + L)/α, 8/(3α)).
pub fn ila_kl_constants(alpha: f64, l: f64, ls: f64) -> (f64, f64) {
    (128.0 * ls * (ls + l) / alpha, 8.0 / (3.0 * alpha))
}

/// ILA, KL: e^{−αhk/4}H₀ + C₁dh + C₂ε²_mgf.
#[allow(clippy::too_many_arguments)]
pub fn rhs_ila_kl(h0: f64, alpha: f64, l: f64, ls: f64, d: usize, h: f64, eps_mgf_sq: f64, k: f64) -> Result<f64> {
    ila_kl_window(alpha, l, ls, h)?;
    ila_kl_formula(h0, alpha, l, ls, d, h, eps_mgf_sq, k)
}

#[allow(clippy::too_many_arguments)]
fn ila_kl_formula(h0: f64, alpha: f64, l: f64, ls: f64, d: usize, h: f64, eps_mgf_sq: f64, k: f64) -> Result<f64> {
    nonnegative("H0", h0)?;
    nonnegative("eps_mgf_sq", eps_mgf_sq)?;
    nonnegative("k", k)?;
    let (c1, c2) = ila_kl_constants(alpha, l, ls);
    Ok(weighted((-alpha * h * k / 4.0).exp(), h0) + c1 * d as f64 * h + weighted(c2, eps_mgf_sq))
}

pub fn ila_renyi_window(alpha: f64, l: f64, ls: f64, h: f64, q: f64) -> Result<()> {
    positive("alpha", alpha)?;
    positive("L", l)?;
    positive("L_s", ls)?;
    positive("h", h)?;
    if !(q >= 1.0) {
        return Err(refuse(format!("q < 1: q = {q}")));
    }
    let a = alpha / (12.0 * l * ls * q);
    let b = q / (4.0 * alpha);
    if h >= a {
        return Err(refuse(format!("h ≥ α/(12 L L_s q): h = {h}, α/(12 L L_s q) = {a}")));
    }
    if h >= b {
        return Err(refuse(format!("h ≥ q/(4α): h = {h}, q/(4α) = {b}")));
    }
    Ok(())
}

/// (C₁, C₂, C₃) = ((16 L_s q/α)(L + 2L_s q), 96 L_s² q²/α, 16q²/(3α)).
pub fn ila_renyi_constants(alpha: f64, l: f64, ls: f64, q: f64) -> (f64, f64, f64) {
    (
        16.0 * ls * q / alpha * (l + 2.0 * ls * q),
        96.0 * ls * ls * q * q / alpha,
        16.0 * q * q / (3.0 * alpha),
    )
}

/// ILA, Rényi of order q: e^{−αhk/q}R₀ + C₁dh + (C₂h² + C₃)ε∞².
#[allow(clippy::too_many_arguments)]
pub fn rhs_ila_renyi(
    r0: f64,
    alpha: f64,
    l: f64,
    ls: f64,
    d: usize,
    h: f64,
    eps_inf_sq: f64,
    q: f64,
    k: f64,
) -> Result<f64> {
    ila_renyi_window(alpha, l, ls, h, q)?;
    ila_renyi_formula(r0, alpha, l, ls, d, h, eps_inf_sq, q, k)
}

#[allow(clippy::too_many_arguments)]
fn ila_renyi_formula(
    r0: f64,
    alpha: f64,
    l: f64,
    ls: f64,
    d: usize,
    h: f64,
    eps_inf_sq: f64,
    q: f64,
    k: f64,
) -> Result<f64> {
    nonnegative("R0", r0)?;
    nonnegative("eps_inf_sq", eps_inf_sq)?;
    nonnegative("k", k)?;
    let (c1, c2, c3) = ila_renyi_constants(alpha, l, ls, q);
    Ok(weighted((-alpha * h * k / q).exp(), r0) + c1 * d as f64 * h + weighted(c2 * h * h + c3, eps_inf_sq))
}

/// Exploratory: the Rényi bound shape with ε²_mgf in place of ε∞². Whether
/// it holds is not established; audits report violations, tests do not
/// assert it.
#[allow(clippy::too_many_arguments)]
pub fn rhs_ila_renyi_mgf(
    r0: f64,
    alpha: f64,
    l: f64,
    ls: f64,
    d: usize,
    h: f64,
    eps_mgf_sq: f64,
    q: f64,
    k: f64,
) -> Result<f64> {
    rhs_ila_renyi(r0, alpha, l, ls, d, h, eps_mgf_sq, q, k)
}

pub fn ddpm_window(alpha: f64, l: f64, ls: f64, h: f64) -> Result<()> {
    positive("alpha", alpha)?;
    positive("L", l)?;
    positive("L_s", ls)?;
    positive("h", h)?;
    let a = alpha / (96.0 * ls * l);
    if h > a {
        return Err(refuse(format!("h > α/(96 L_s L): h = {h}, α/(96 L_s L) = {a}")));
    }
    Ok(())
}

/// DDPM, KL: e^{−9αhK/4}H_ν(γ) + (11/α)ε²_mgf + 96 L_s(32 L_s/α + 3)dh.
#[allow(clippy::too_many_arguments)]
pub fn rhs_ddpm_kl(
    h_gamma: f64,
    alpha: f64,
    l: f64,
    ls: f64,
    d: usize,
    h: f64,
    eps_mgf_sq: f64,
    big_k: f64,
) -> Result<f64> {
    ddpm_window(alpha, l, ls, h)?;
    ddpm_kl_formula(h_gamma, alpha, ls, d, h, eps_mgf_sq, big_k)
}

fn ddpm_kl_formula(h_gamma: f64, alpha: f64, ls: f64, d: usize, h: f64, eps_mgf_sq: f64, big_k: f64) -> Result<f64> {
    nonnegative("H_gamma", h_gamma)?;
    nonnegative("eps_mgf_sq", eps_mgf_sq)?;
    nonnegative("K", big_k)?;
    Ok(weighted((-9.0 * alpha * h * big_k / 4.0).exp(), h_gamma)
        + weighted(11.0 / alpha, eps_mgf_sq)
        + ddpm_discretization(alpha, ls, d, h))
}

fn ddpm_discretization(alpha: f64, ls: f64, d: usize, h: f64) -> f64 {
    96.0 * ls * (32.0 * ls / alpha + 3.0) * d as f64 * h
}

/// One DDPM step measured against the moving true-backward law:
/// e^{−αh/4}·prev + 18 L_s(3α + 32 L_s)dh² + (65/32)hε²_mgf.
#[allow(clippy::too_many_arguments)]
pub fn rhs_ddpm_one_step(prev: f64, alpha: f64, l: f64, ls: f64, d: usize, h: f64, eps_mgf_sq: f64) -> Result<f64> {
    ddpm_window(alpha, l, ls, h)?;
    nonnegative("previous divergence", prev)?;
    nonnegative("eps_mgf_sq", eps_mgf_sq)?;
    Ok(weighted((-alpha * h / 4.0).exp(), prev)
        + 18.0 * ls * (3.0 * alpha + 32.0 * ls) * d as f64 * h * h
        + weighted(65.0 / 32.0 * h, eps_mgf_sq))
}

/// Initialization error of the forward OU process: H_{ν_T}(γ) ≤ e^{−2αT}H_ν(γ).
pub fn rhs_ou_init(h_nu_gamma: f64, alpha: f64, t: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    nonnegative("H_nu(gamma)", h_nu_gamma)?;
    nonnegative("T", t)?;
    Ok(weighted((-2.0 * alpha * t).exp(), h_nu_gamma))
}

/// ULA, KL: e^{−αhk}H₀ + C·dhL²/α with C configurable.
#[allow(clippy::too_many_arguments)]
pub fn rhs_ula_kl(h0: f64, alpha: f64, l: f64, d: usize, h: f64, k: f64, constant: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("L", l)?;
    positive("h", h)?;
    nonnegative("H0", h0)?;
    nonnegative("k", k)?;
    let a = alpha / (4.0 * l * l);
    if h > a {
        return Err(refuse(format!("h > α/(4L²): h = {h}, α/(4L²) = {a}")));
    }
    Ok(ula_kl_formula(h0, alpha, l, d, h, k, constant))
}

fn ula_kl_formula(h0: f64, alpha: f64, l: f64, d: usize, h: f64, k: f64, constant: f64) -> f64 {
    weighted((-alpha * h * k).exp(), h0) + constant * d as f64 * h * l * l / alpha
}

/// Value of the KDE MGF-error scaling ηL²(d + σ²ηL²) (no absolute
/// constant), with the bandwidth window min(d/‖s(0)‖², 1/(2√2 σ√r L²)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeScaling {
    pub value: f64,
    pub window: f64,
    pub in_window: bool,
}

pub fn rhs_kde_mgf(eta: f64, l: f64, sigma: f64, d: usize, r: f64, s0_norm_sq: f64) -> Result<KdeScaling> {
    nonnegative("eta", eta)?;
    positive("L", l)?;
    positive("sigma", sigma)?;
    positive("r", r)?;
    nonnegative("‖s(0)‖²", s0_norm_sq)?;
    let df = d as f64;
    let first = if s0_norm_sq > 0.0 {
        df / s0_norm_sq
    } else {
        f64::INFINITY
    };
    let second = 1.0 / (2.0 * 2f64.sqrt() * sigma * r.sqrt() * l * l);
    let window = first.min(second);
    Ok(KdeScaling {
        value: eta * l * l * (df + sigma * sigma * eta * l * l),
        window,
        in_window: eta <= window,
    })
}

/// A right-hand side and, when evaluated outside its step-size window, the
/// violated inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEval {
    pub rhs: f64,
    pub window_violation: Option<String>,
}

/// Which sampler a surrogate-score Rényi bound is for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SurrogateMode {
    /// Continuous time t.
    Ild { t: f64 },
    /// Step k of size h; `bias_constant` multiplies the Õ(dhqL²/α) term.
    Ila {
        h: f64,
        k: f64,
        l: f64,
        d: usize,
        bias_constant: f64,
    },
}

/// t₀ = log(2q − 1)/(2α).
pub fn ild_surrogate_start(q: f64, alpha: f64) -> f64 {
    (2.0 * q - 1.0).ln() / (2.0 * alpha)
}

/// K₀ = (2/(αh)) log((q − 1)/2).
pub fn ila_surrogate_start(q: f64, alpha: f64, h: f64) -> f64 {
    2.0 / (alpha * h) * ((q - 1.0) / 2.0).ln()
}

/// Rényi bound when ŝ = ∇log ν̂ for an α-LSI law ν̂:
/// ((q − ½)/(q − 1)) e^{−decay} R_{2,ν̂}(ρ₀) + R_{2q−1,ν}(ν̂) [+ C·dhqL²/α for ILA],
/// with decay α(t − t₀)/q for ILD and αh(k − K₀)/4 for ILA.
pub fn rhs_renyi_surrogate(r0_2: f64, q: f64, alpha: f64, renyi_bias: f64, mode: SurrogateMode) -> Result<f64> {
    positive("alpha", alpha)?;
    nonnegative("R_2(rho_0)", r0_2)?;
    if !(q > 1.0) {
        return Err(refuse(format!("q ≤ 1: q = {q}")));
    }
    if !(renyi_bias >= 0.0) || !renyi_bias.is_finite() {
        return Err(refuse(format!("R_{{2q−1}}(ν̂) must be finite, got {renyi_bias}")));
    }
    let lead = (q - 0.5) / (q - 1.0);
    match mode {
        SurrogateMode::Ild { t } => {
            let t0 = ild_surrogate_start(q, alpha);
            if t < t0 {
                return Err(refuse(format!("t < t₀ = log(2q − 1)/(2α): t = {t}, t₀ = {t0}")));
            }
            Ok(weighted(lead * (-alpha * (t - t0) / q).exp(), r0_2) + renyi_bias)
        }
        SurrogateMode::Ila {
            h,
            k,
            l,
            d,
            bias_constant,
        } => {
            positive("h", h)?;
            positive("L", l)?;
            if q < 3.0 {
                return Err(refuse(format!("q < 3: q = {q}")));
            }
            if alpha > 1.0 || l < 1.0 {
                return Err(refuse(format!("α ≤ 1 ≤ L fails: α = {alpha}, L = {l}")));
            }
            let a = alpha / (192.0 * q * q * l * l);
            if h >= a {
                return Err(refuse(format!("h ≥ α/(192 q² L²): h = {h}, α/(192 q² L²) = {a}")));
            }
            let k0 = ila_surrogate_start(q, alpha, h);
            if k <= k0 {
                return Err(refuse(format!("k ≤ K₀ = (2/(αh))log((q − 1)/2): k = {k}, K₀ = {k0}")));
            }
            Ok(weighted(lead * (-alpha * h * (k - k0) / 4.0).exp(), r0_2)
                + renyi_bias
                + bias_constant * d as f64 * h * q * l * l / alpha)
        }
    }
}

/// Step size and iteration count from the complexity rates, with unit
/// constants. These are rates, not sharp prescriptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub h: f64,
    /// Unrounded iteration count.
    pub steps: f64,
    pub k: usize,
    /// KDE bandwidth (ILA only).
    pub bandwidth: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityFor {
    /// h = εα/(dL_s²), K = (dL_s²/(εα²)) log(H_ν(γ)/ε).
    Ddpm,
    /// h = η = εα/(dL²), k = (dL²/(εα²)) log(H₀/ε).
    Ila,
}

pub fn complexity(eps: f64, alpha: f64, lipschitz: f64, d: usize, h0: f64, which: ComplexityFor) -> Result<Complexity> {
    positive("eps", eps)?;
    positive("alpha", alpha)?;
    positive("Lipschitz constant", lipschitz)?;
    positive("initial divergence", h0)?;
    let scale = d as f64 * lipschitz * lipschitz;
    let h = eps * alpha / scale;
    let steps = (scale / (eps * alpha * alpha) * (h0 / eps).ln()).max(0.0);
    Ok(Complexity {
        h,
        steps,
        k: steps.ceil() as usize,
        bandwidth: matches!(which, ComplexityFor::Ila).then_some(h),
    })
}

/// ε²_mgf target that makes the DDPM score term at most ε/3: αε/33.
pub fn ddpm_target_mgf_error(eps: f64, alpha: f64) -> f64 {
    alpha * eps / 33.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    IldKl,
    IlaKl,
    IlaRenyi,
    IlaRenyiMgf,
    DdpmKl,
    UlaKl,
    IldRenyiSurrogate,
    IlaRenyiSurrogate,
    OuInit,
    KdeMgf,
    DdpmComplexity,
    IlaComplexity,
}

impl BoundName {
    pub const ALL: [BoundName; 12] = [
        BoundName::IldKl,
        BoundName::IlaKl,
        BoundName::IlaRenyi,
        BoundName::IlaRenyiMgf,
        BoundName::DdpmKl,
        BoundName::UlaKl,
        BoundName::IldRenyiSurrogate,
        BoundName::IlaRenyiSurrogate,
        BoundName::OuInit,
        BoundName::KdeMgf,
        BoundName::DdpmComplexity,
        BoundName::IlaComplexity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundName::IldKl => "ild_kl",
            BoundName::IlaKl => "ila_kl",
            BoundName::IlaRenyi => "ila_renyi",
            BoundName::IlaRenyiMgf => "ila_renyi_mgf",
            BoundName::DdpmKl => "ddpm_kl",
            BoundName::UlaKl => "ula_kl",
            BoundName::IldRenyiSurrogate => "ild_renyi_surrogate",
            BoundName::IlaRenyiSurrogate => "ila_renyi_surrogate",
            BoundName::OuInit => "ou_init",
            BoundName::KdeMgf => "kde_mgf",
            BoundName::DdpmComplexity => "ddpm_complexity",
            BoundName::IlaComplexity => "ila_complexity",
        }
    }

    /// Constants [`BoundSpec::rhs`] reads.
    pub fn required_constants(&self) -> &'static [&'static str] {
        match self {
            BoundName::IldKl => &["H0", "alpha", "eps_mgf_sq"],
            BoundName::IlaKl => &["H0", "alpha", "L", "Ls", "d", "h", "eps_mgf_sq"],
            BoundName::IlaRenyi => &["R0", "alpha", "L", "Ls", "d", "h", "eps_inf_sq", "q"],
            BoundName::IlaRenyiMgf => &["R0", "alpha", "L", "Ls", "d", "h", "eps_mgf_sq", "q"],
            BoundName::DdpmKl => &["H_gamma", "alpha", "L", "Ls", "d", "h", "eps_mgf_sq"],
            BoundName::UlaKl => &["H0", "alpha", "L", "d", "h"],
            BoundName::IldRenyiSurrogate => &["R0_2", "q", "alpha", "renyi_bias"],
            BoundName::IlaRenyiSurrogate => &["R0_2", "q", "alpha", "renyi_bias", "L", "d", "h"],
            BoundName::OuInit => &["H_gamma", "alpha"],
            BoundName::KdeMgf => &["eta", "L", "sigma", "d", "r", "s0_norm_sq"],
            BoundName::DdpmComplexity => &["eps", "alpha", "Ls", "d", "H_gamma"],
            BoundName::IlaComplexity => &["eps", "alpha", "L", "d", "H0"],
        }
    }

    /// MGF order at which ε²_mgf must be measured, if any.
    pub fn mgf_order(&self, alpha: f64) -> Option<f64> {
        match self {
            BoundName::IldKl => Some(1.0 / alpha),
            BoundName::IlaKl => Some(9.0 / alpha),
            BoundName::DdpmKl => Some(65.0 / (6.0 * alpha)),
            _ => None,
        }
    }

    /// Whether [`BoundSpec::rhs`] takes continuous time rather than a step.
    pub fn continuous_time(&self) -> bool {
        matches!(
            self,
            BoundName::IldKl | BoundName::IldRenyiSurrogate | BoundName::OuInit
        )
    }

    /// The divergence an audit compares against, if the bound is a
    /// trajectory bound.
    pub fn divergence(&self, q: Option<f64>) -> Option<DivergenceKind> {
        match self {
            BoundName::IldKl | BoundName::IlaKl | BoundName::DdpmKl | BoundName::UlaKl => Some(DivergenceKind::Kl),
            BoundName::IlaRenyi
            | BoundName::IlaRenyiMgf
            | BoundName::IldRenyiSurrogate
            | BoundName::IlaRenyiSurrogate => q.map(DivergenceKind::Renyi),
            _ => None,
        }
    }

    /// Bounds with unstated constants: never audited as hard inequalities.
    pub fn shape_only(&self) -> bool {
        matches!(
            self,
            BoundName::UlaKl | BoundName::IlaRenyiSurrogate | BoundName::IlaRenyiMgf
        )
    }
}

impl fmt::Display for BoundName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bound together with the constants it is evaluated at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub name: BoundName,
    pub constants: BTreeMap<String, f64>,
}

impl BoundSpec {
    pub fn new(name: BoundName) -> Self {
        Self {
            name,
            constants: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &'static str) -> Result<f64> {
        match self.constants.get(key) {
            Some(v) if !v.is_nan() => Ok(*v),
            _ => Err(Error::UnknownConstant(key)),
        }
    }

    fn opt(&self, key: &str) -> Option<f64> {
        self.constants.get(key).copied()
    }

    fn dim(&self) -> Result<usize> {
        let d = self.get("d")?;
        if d < 1.0 || d.fract() != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "d must be a positive integer, got {d}"
            )));
        }
        Ok(d as usize)
    }

    /// Names of required constants that are absent.
    pub fn missing_constants(&self) -> Vec<&'static str> {
        self.name
            .required_constants()
            .iter()
            .copied()
            .filter(|k| self.get(k).is_err())
            .collect()
    }

    /// Right-hand side at step k (or time t for continuous-time bounds, or
    /// horizon K for `ddpm_kl`).
    pub fn rhs(&self, at: f64) -> Result<f64> {
        use BoundName::*;
        match self.name {
            IldKl => rhs_ild_kl(self.get("H0")?, self.get("alpha")?, self.get("eps_mgf_sq")?, at),
            IlaKl => rhs_ila_kl(
                self.get("H0")?,
                self.get("alpha")?,
                self.get("L")?,
                self.get("Ls")?,
                self.dim()?,
                self.get("h")?,
                self.get("eps_mgf_sq")?,
                at,
            ),
            IlaRenyi | IlaRenyiMgf => {
                let eps = if self.name == IlaRenyi {
                    self.get("eps_inf_sq")?
                } else {
                    self.get("eps_mgf_sq")?
                };
                rhs_ila_renyi(
                    self.get("R0")?,
                    self.get("alpha")?,
                    self.get("L")?,
                    self.get("Ls")?,
                    self.dim()?,
                    self.get("h")?,
                    eps,
                    self.get("q")?,
                    at,
                )
            }
            DdpmKl => rhs_ddpm_kl(
                self.get("H_gamma")?,
                self.get("alpha")?,
                self.get("L")?,
                self.get("Ls")?,
                self.dim()?,
                self.get("h")?,
                self.get("eps_mgf_sq")?,
                at,
            ),
            UlaKl => rhs_ula_kl(
                self.get("H0")?,
                self.get("alpha")?,
                self.get("L")?,
                self.dim()?,
                self.get("h")?,
                at,
                self.opt("bias_constant").unwrap_or(ULA_BIAS_CONSTANT),
            ),
            IldRenyiSurrogate => rhs_renyi_surrogate(
                self.get("R0_2")?,
                self.get("q")?,
                self.get("alpha")?,
                self.get("renyi_bias")?,
                SurrogateMode::Ild { t: at },
            ),
            IlaRenyiSurrogate => rhs_renyi_surrogate(
                self.get("R0_2")?,
                self.get("q")?,
                self.get("alpha")?,
                self.get("renyi_bias")?,
                SurrogateMode::Ila {
                    h: self.get("h")?,
                    k: at,
                    l: self.get("L")?,
                    d: self.dim()?,
                    bias_constant: self.opt("bias_constant").unwrap_or(1.0),
                },
            ),
            OuInit => rhs_ou_init(self.get("H_gamma")?, self.get("alpha")?, at),
            KdeMgf => Ok(rhs_kde_mgf(
                self.get("eta")?,
                self.get("L")?,
                self.get("sigma")?,
                self.dim()?,
                self.get("r")?,
                self.get("s0_norm_sq")?,
            )?
            .value),
            DdpmComplexity | IlaComplexity => Err(Error::InvalidParameter(format!(
                "{} yields (h, K), not a right-hand side; use BoundSpec::complexity",
                self.name
            ))),
        }
    }

    /// Like [`Self::rhs`], but a violated step-size window is reported
    /// instead of refused for the bounds whose formula stays well defined
    /// outside it. Other preconditions still refuse.
    pub fn evaluate(&self, at: f64) -> Result<BoundEval> {
        match self.rhs(at) {
            Ok(rhs) => Ok(BoundEval {
                rhs,
                window_violation: None,
            }),
            Err(Error::Precondition(msg)) => match self.formula(at)? {
                Some(rhs) => Ok(BoundEval {
                    rhs,
                    window_violation: Some(msg),
                }),
                None => Err(Error::Precondition(msg)),
            },
            Err(e) => Err(e),
        }
    }

    fn formula(&self, at: f64) -> Result<Option<f64>> {
        use BoundName::*;
        Ok(Some(match self.name {
            IlaKl => ila_kl_formula(
                self.get("H0")?,
                self.get("alpha")?,
                self.get("L")?,
                self.get("Ls")?,
                self.dim()?,
                self.get("h")?,
                self.get("eps_mgf_sq")?,
                at,
            )?,
            IlaRenyi | IlaRenyiMgf => ila_renyi_formula(
                self.get("R0")?,
                self.get("alpha")?,
                self.get("L")?,
                self.get("Ls")?,
                self.dim()?,
                self.get("h")?,
                self.get(if self.name == IlaRenyi {
                    "eps_inf_sq"
                } else {
                    "eps_mgf_sq"
                })?,
                self.get("q")?,
                at,
            )?,
            DdpmKl => ddpm_kl_formula(
                self.get("H_gamma")?,
                self.get("alpha")?,
                self.get("Ls")?,
                self.dim()?,
                self.get("h")?,
                self.get("eps_mgf_sq")?,
                at,
            )?,
            UlaKl => ula_kl_formula(
                self.get("H0")?,
                self.get("alpha")?,
                self.get("L")?,
                self.dim()?,
                self.get("h")?,
                at,
                self.opt("bias_constant").unwrap_or(ULA_BIAS_CONSTANT),
            ),
            _ => return Ok(None),
        }))
    }

    /// Checks constants and the step-size window without evaluating at a
    /// particular step.
    pub fn check(&self) -> Result<()> {
        if let Some(k) = self.missing_constants().first() {
            return Err(Error::UnknownConstant(k));
        }
        use BoundName::*;
        match self.name {
            IlaComplexity | DdpmComplexity => self.complexity().map(|_| ()),
            IlaRenyiSurrogate => {
                // Any k past K₀ will do for the window check.
                let q = self.get("q")?;
                let k0 = ila_surrogate_start(q, self.get("alpha")?, self.get("h")?);
                self.rhs(k0.max(0.0).floor() + 1.0).map(|_| ())
            }
            IldRenyiSurrogate => {
                let t0 = ild_surrogate_start(self.get("q")?, self.get("alpha")?);
                self.rhs(t0.max(0.0)).map(|_| ())
            }
            _ => self.rhs(0.0).map(|_| ()),
        }
    }

    /// Value as k (or t) → ∞.
    pub fn asymptote(&self) -> Result<f64> {
        use BoundName::*;
        let alpha = self.get("alpha")?;
        match self.name {
            IldKl => Ok(ild_kl_asymptote(alpha, self.get("eps_mgf_sq")?)),
            IlaKl => {
                self.check()?;
                let (c1, c2) = ila_kl_constants(alpha, self.get("L")?, self.get("Ls")?);
                Ok(c1 * self.dim()? as f64 * self.get("h")? + weighted(c2, self.get("eps_mgf_sq")?))
            }
            IlaRenyi | IlaRenyiMgf => {
                self.check()?;
                let big = 1e300;
                self.rhs(big)
            }
            DdpmKl => {
                self.check()?;
                Ok(weighted(11.0 / alpha, self.get("eps_mgf_sq")?)
                    + ddpm_discretization(alpha, self.get("Ls")?, self.dim()?, self.get("h")?))
            }
            UlaKl => {
                self.check()?;
                self.rhs(f64::INFINITY)
            }
            IldRenyiSurrogate => {
                self.check()?;
                Ok(self.get("renyi_bias")?)
            }
            IlaRenyiSurrogate => {
                self.check()?;
                self.rhs(f64::INFINITY)
            }
            OuInit => Ok(0.0),
            KdeMgf => self.rhs(0.0),
            DdpmComplexity | IlaComplexity => self.rhs(0.0),
        }
    }

    pub fn complexity(&self) -> Result<Complexity> {
        match self.name {
            BoundName::DdpmComplexity => complexity(
                self.get("eps")?,
                self.get("alpha")?,
                self.get("Ls")?,
                self.dim()?,
                self.get("H_gamma")?,
                ComplexityFor::Ddpm,
            ),
            BoundName::IlaComplexity => complexity(
                self.get("eps")?,
                self.get("alpha")?,
                self.get("L")?,
                self.dim()?,
                self.get("H0")?,
                ComplexityFor::Ila,
            ),
            other => Err(Error::InvalidParameter(format!("{other} is not a complexity rate"))),
        }
    }
}

/// One left-hand-side observation: the bound argument (step or time), the
/// divergence, and a 95% half-width (0 for analytic values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub at: f64,
    pub lhs: f64,
    pub ci_halfwidth: f64,
}

impl AuditPoint {
    pub fn analytic(at: f64, lhs: f64) -> Self {
        Self {
            at,
            lhs,
            ci_halfwidth: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditStep {
    pub at: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub bound_name: String,
    pub steps: Vec<AuditStep>,
    pub all_satisfied: bool,
    /// Index of the first violated step, if any.
    pub first_violation: Option<usize>,
    /// Largest lhs over the last half of the points.
    pub tail_max_lhs: f64,
    pub asymptote: f64,
    /// tail_max_lhs ≤ asymptote·(1 + tolerance).
    pub stable: bool,
    /// Monte-Carlo lhs compared through the lower end of its CI.
    pub soft: bool,
    pub constants: BTreeMap<String, f64>,
}

/// Compares each point with `rhs(at)`. Analytic points pass when
/// lhs ≤ rhs·(1 + 1e-9); points with a CI pass when lhs − halfwidth ≤ rhs.
pub fn audit_points<F>(
    bound_name: &str,
    points: &[AuditPoint],
    rhs: F,
    asymptote: f64,
    stability_tol: f64,
) -> Result<AuditResult>
where
    F: Fn(f64) -> Result<f64>,
{
    if points.is_empty() {
        return Err(Error::InvalidParameter("audit needs at least one point".into()));
    }
    let mut steps = Vec::with_capacity(points.len());
    let mut soft = false;
    for p in points {
        let r = rhs(p.at)?;
        let satisfied = if p.ci_halfwidth > 0.0 {
            soft = true;
            p.lhs - p.ci_halfwidth <= r
        } else {
            p.lhs <= r * (1.0 + AUDIT_SLACK) || (r.is_infinite() && r > 0.0)
        };
        steps.push(AuditStep {
            at: p.at,
            lhs: p.lhs,
            rhs: r,
            satisfied,
        });
    }
    let first_violation = steps.iter().position(|s| !s.satisfied);
    let tail_max_lhs = tail_max(&steps.iter().map(|s| s.lhs).collect::<Vec<_>>());
    Ok(AuditResult {
        bound_name: bound_name.to_string(),
        all_satisfied: first_violation.is_none(),
        first_violation,
        steps,
        tail_max_lhs,
        asymptote,
        stable: tail_max_lhs <= asymptote * (1.0 + stability_tol),
        soft,
        constants: BTreeMap::new(),
    })
}

/// Max over the last half (the later ⌈n/2⌉ entries).
pub fn tail_max(values: &[f64]) -> f64 {
    let start = values.len() / 2;
    values[start..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Relative change of the tail maximum when a run is extended.
pub fn tail_change(short: &AuditResult, long: &AuditResult) -> f64 {
    let base = short.tail_max_lhs.abs().max(f64::MIN_POSITIVE);
    (long.tail_max_lhs - short.tail_max_lhs).abs() / base
}

/// Audit of analytic or Monte-Carlo trajectory points against a bound spec.
/// Refuses (precondition error) when the bound's step-size window fails.
pub fn audit(spec: &BoundSpec, points: &[AuditPoint], stability_tol: f64) -> Result<AuditResult> {
    spec.check()?;
    let asymptote = spec.asymptote()?;
    let mut out = audit_points(spec.name.as_str(), points, |at| spec.rhs(at), asymptote, stability_tol)?;
    out.constants = spec.constants.clone();
    Ok(out)
}

/// Audit of sampler records. The lhs is the recorded divergence of the kind
/// the bound concerns; steps map to time `step·h` for continuous-time
/// bounds. Moment-fit, kNN and Monte-Carlo divergences are compared softly.
pub fn audit_run(records: &[TrajectoryRecord], spec: &BoundSpec, stability_tol: f64) -> Result<AuditResult> {
    let kind = spec
        .name
        .divergence(spec.opt("q"))
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a trajectory bound", spec.name)))?;
    let scale = if spec.name.continuous_time() {
        spec.get("h")?
    } else {
        1.0
    };
    let mut points = Vec::new();
    for r in records {
        let Some(dv) = r.divergences.iter().find(|dv| dv.kind == kind) else {
            continue;
        };
        let ci = match dv.method {
            Method::Analytic => 0.0,
            // Estimated lhs: always compare softly, with at least a tiny band.
            _ => dv.ci_halfwidth.max(f64::MIN_POSITIVE),
        };
        points.push(AuditPoint {
            at: r.step_index as f64 * scale,
            lhs: dv.value,
            ci_halfwidth: ci,
        });
    }
    if points.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "records carry no {} divergence for {}",
            kind.label(),
            spec.name
        )));
    }
    audit(spec, &points, stability_tol)
}
