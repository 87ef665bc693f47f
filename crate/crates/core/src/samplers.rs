//! Samplers.
//!
//! * ILA: x ← x + h ŝ(x) + √(2h) z. ULA is the same step with the exact score.
//! * ILD is emulated by running ILA with `substeps_per_step` Euler–Maruyama
//!   substeps of size h/m per step; the emulation error is O(h/m). For affine
//!   drifts the continuous-time law is available exactly through
//!   [`ild_gaussian_law`].
//! * DDPM: starting from γ = N(0, α⁻¹I), step k applies the exponential
//!   integrator
//!   y ← e^{αh} y + (2(e^{αh} − 1)/α) ŝ_{h(K−k)}(y) + √((e^{2αh} − 1)/α) z,
//!   so step 0 uses the score at the horizon T = Kh and the last step uses
//!   time h.
//!
//! For affine scores the law of every chain stays Gaussian and its moments
//! are propagated exactly; those recursions are the noise-free oracle for the
//! bound audits.
//!
//! Chains draw from their own `(seed, chain_index)` stream, initial point
//! first and then one normal vector per substep, so a run is reproducible
//! independently of the worker count. Chains that produce a non-finite
//! coordinate are censored and counted.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{exact_estimator, offset_estimator, SampleBank, ScoreEstimator};
use crate::linalg::{self, Matrix, Vector};
use crate::metrics::{kl_gaussian, kl_knn_estimate, DivergenceKind, DivergenceValue, Method};
use crate::moments::GaussianMoments;
use crate::rng::{chain_rng, fill_standard_normal, ChainRng};
use crate::targets::{make_gaussian_target, ou_marginal, GaussianSpec, TargetModel};

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinParams {
    pub step_h: f64,
    pub num_steps_k: usize,
    #[serde(default = "one")]
    pub substeps_per_step: usize,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
}

impl LangevinParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0) || !self.step_h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step_h must be > 0, got {}",
                self.step_h
            )));
        }
        if self.substeps_per_step == 0 {
            return Err(Error::InvalidParameter("substeps_per_step must be ≥ 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidParameter("chains must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Continuous time covered by the run.
    pub fn horizon(&self) -> f64 {
        self.step_h * self.num_steps_k as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DdpmParams {
    pub alpha: f64,
    pub step_h: f64,
    pub num_steps_k: usize,
    #[serde(default = "one")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
}

impl DdpmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.step_h > 0.0) || !self.step_h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step_h must be > 0, got {}",
                self.step_h
            )));
        }
        if self.num_steps_k == 0 {
            return Err(Error::InvalidParameter("DDPM needs at least one step".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidParameter("chains must be ≥ 1".into()));
        }
        Ok(())
    }

    /// T = Kh.
    pub fn horizon(&self) -> f64 {
        self.step_h * self.num_steps_k as f64
    }

    /// γ = N(0, α⁻¹I_d).
    pub fn prior(&self, dim: usize) -> GaussianMoments {
        GaussianMoments::isotropic(dim, 1.0 / self.alpha)
    }
}

/// Law of the initial point of every chain.
#[derive(Clone, Debug)]
pub enum InitLaw {
    Gaussian(GaussianMoments),
    Target(TargetModel),
    Point(Vector),
}

impl InitLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitLaw::Gaussian(m) => m.dim(),
            InitLaw::Target(t) => t.dim(),
            InitLaw::Point(x) => x.len(),
        }
    }

    fn sampler(&self) -> Result<Option<TargetModel>> {
        Ok(match self {
            InitLaw::Gaussian(m) => {
                m.validate()?;
                Some(make_gaussian_target(GaussianSpec::from(m.clone())))
            }
            InitLaw::Target(t) => Some(t.clone()),
            InitLaw::Point(_) => None,
        })
    }
}

/// Sample mean and (unbiased) covariance of the live chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMoments {
    pub n: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl SampleMoments {
    pub fn from_points(points: &[Vector]) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::Degenerate(format!("need at least 2 points, got {n}")));
        }
        let d = points[0].len();
        let mut mean = Vector::zeros(d);
        for p in points {
            mean += p;
        }
        mean /= n as f64;
        let mut cov = Matrix::zeros(d, d);
        for p in points {
            let c = p - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        Ok(Self {
            n,
            mean: mean.iter().copied().collect(),
            cov: linalg::matrix_to_rows(&linalg::symmetrize(&cov)),
        })
    }

    pub fn mean_vector(&self) -> Vector {
        linalg::vector_from(&self.mean)
    }

    pub fn cov_matrix(&self) -> Matrix {
        let d = self.mean.len();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }

    /// Gaussian with these moments; fails when the sample covariance is
    /// singular.
    pub fn to_gaussian(&self) -> Result<GaussianMoments> {
        GaussianMoments::new(self.mean_vector(), self.cov_matrix())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub name: String,
    pub rhs: f64,
}

/// Diagnostics at one recorded step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step_index: usize,
    pub divergences: Vec<DivergenceValue>,
    pub bound_values: Vec<BoundValue>,
    pub preconditions_ok: bool,
    /// Chains censored so far.
    pub censored: usize,
    pub moments: Option<SampleMoments>,
    /// Seconds since the start of the run. Excluded from [`Self::content_eq`].
    pub wallclock: f64,
}

impl TrajectoryRecord {
    /// Equality of everything except timing.
    pub fn content_eq(&self, other: &Self) -> bool {
        self.step_index == other.step_index
            && self.divergences == other.divergences
            && self.bound_values == other.bound_values
            && self.preconditions_ok == other.preconditions_ok
            && self.censored == other.censored
            && self.moments == other.moments
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<TrajectoryRecord>,
    /// Final states of the live chains in chain order; `None` when every
    /// chain was censored.
    pub final_bank: Option<SampleBank>,
    pub chains: usize,
    pub censored: usize,
}

impl RunOutput {
    pub fn censoring_fraction(&self) -> f64 {
        self.censored as f64 / self.chains as f64
    }

    pub fn all_diverged(&self) -> bool {
        self.censored == self.chains
    }
}

pub fn ila_step(x: &Vector, est: &ScoreEstimator, h: f64, noise: &Vector) -> Vector {
    x + est.eval(x) * h + noise * (2.0 * h).sqrt()
}

/// Reference ULA step written coordinate by coordinate against the target
/// score.
pub fn ula_step(x: &Vector, target: &TargetModel, h: f64, noise: &Vector) -> Vector {
    let s = target.score(x);
    let scale = (2.0 * h).sqrt();
    let mut out = x.clone();
    for i in 0..out.len() {
        out[i] = x[i] + s[i] * h + noise[i] * scale;
    }
    out
}

pub fn ddpm_step(y: &Vector, score_hat: &ScoreEstimator, alpha: f64, h: f64, noise: &Vector) -> Vector {
    let growth = (alpha * h).exp();
    let gain = 2.0 * (alpha * h).exp_m1() / alpha;
    let scale = ((2.0 * alpha * h).exp_m1() / alpha).sqrt();
    y * growth + score_hat.eval(y) * gain + noise * scale
}

struct Chain {
    x: Vector,
    rng: ChainRng,
    alive: bool,
}

struct Simulation<'a> {
    init: &'a InitLaw,
    chains: usize,
    seed: u64,
    steps: usize,
    substeps: usize,
    record_every: usize,
    reference: Option<&'a TargetModel>,
}

impl Simulation<'_> {
    /// `step(x, k, noise)` advances one substep of outer step k.
    fn run<F>(&self, step: F) -> Result<RunOutput>
    where
        F: Fn(&Vector, usize, &Vector) -> Vector + Sync,
    {
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be ≥ 1".into()));
        }
        let dim = self.init.dim();
        if let Some(r) = self.reference {
            if r.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: r.dim(),
                    got: dim,
                });
            }
        }
        let start = Instant::now();
        let sampler = self.init.sampler()?;
        let mut chains: Vec<Chain> = (0..self.chains)
            .into_par_iter()
            .map(|i| {
                let mut rng = chain_rng(self.seed, i as u64);
                let x = match (&sampler, self.init) {
                    (Some(t), _) => t.sample(&mut rng),
                    (None, InitLaw::Point(p)) => p.clone(),
                    (None, _) => unreachable!(),
                };
                let alive = x.iter().all(|v| v.is_finite());
                Chain { x, rng, alive }
            })
            .collect();

        let mut records = Vec::new();
        let mut done = 0;
        while done < self.steps {
            let until = (done + self.record_every).min(self.steps);
            chains.par_iter_mut().for_each(|c| {
                let mut z = Vector::zeros(dim);
                'outer: for k in done..until {
                    for _ in 0..self.substeps {
                        if !c.alive {
                            break 'outer;
                        }
                        fill_standard_normal(&mut c.rng, &mut z);
                        c.x = step(&c.x, k, &z);
                        c.alive = c.x.iter().all(|v| v.is_finite());
                    }
                }
            });
            done = until;
            records.push(self.record(done, &chains, start)?);
        }

        let live: Vec<Vector> = chains.iter().filter(|c| c.alive).map(|c| c.x.clone()).collect();
        let censored = self.chains - live.len();
        let final_bank = if live.is_empty() {
            None
        } else {
            Some(SampleBank::new(&live, Some(self.seed))?)
        };
        Ok(RunOutput {
            records,
            final_bank,
            chains: self.chains,
            censored,
        })
    }

    fn record(&self, step_index: usize, chains: &[Chain], start: Instant) -> Result<TrajectoryRecord> {
        let live: Vec<Vector> = chains.iter().filter(|c| c.alive).map(|c| c.x.clone()).collect();
        let censored = chains.len() - live.len();
        let moments = SampleMoments::from_points(&live).ok();
        let mut divergences = Vec::new();
        if let Some(reference) = self.reference {
            if let (Some(nu), Some(m)) = (reference.gaussian_moments(), &moments) {
                if m.n > m.mean.len() + 1 {
                    if let Ok(fit) = m.to_gaussian() {
                        divergences.push(DivergenceValue {
                            kind: DivergenceKind::Kl,
                            value: kl_gaussian(&fit, &nu)?,
                            method: Method::MomentFit { n: m.n },
                            ci_halfwidth: 0.0,
                        });
                    }
                }
            } else if reference.dim() == 1 && live.len() >= 50 {
                let k = 5;
                let bank = SampleBank::new(&live, None)?;
                if let Ok(value) = kl_knn_estimate(&bank, reference, k) {
                    divergences.push(DivergenceValue {
                        kind: DivergenceKind::Kl,
                        value,
                        method: Method::Knn { n: live.len(), k },
                        ci_halfwidth: 0.0,
                    });
                }
            }
        }
        Ok(TrajectoryRecord {
            step_index,
            divergences,
            bound_values: Vec::new(),
            preconditions_ok: true,
            censored,
            moments,
            wallclock: start.elapsed().as_secs_f64(),
        })
    }
}

/// Runs `chains` independent ILA trajectories (ILD emulation when
/// `substeps_per_step > 1`). Records are taken every `record_every` steps
/// and at the final step; divergences are measured against `reference`.
pub fn run_ila(
    init: &InitLaw,
    est: &ScoreEstimator,
    reference: Option<&TargetModel>,
    params: &LangevinParams,
    record_every: usize,
) -> Result<RunOutput> {
    params.validate()?;
    if est.dim() != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            got: est.dim(),
        });
    }
    let sub_h = params.step_h / params.substeps_per_step as f64;
    Simulation {
        init,
        chains: params.chains,
        seed: params.seed,
        steps: params.num_steps_k,
        substeps: params.substeps_per_step,
        record_every,
        reference,
    }
    .run(|x, _, z| ila_step(x, est, sub_h, z))
}

/// ULA through the reference [`ula_step`].
pub fn run_ula(
    init: &InitLaw,
    target: &TargetModel,
    params: &LangevinParams,
    record_every: usize,
) -> Result<RunOutput> {
    params.validate()?;
    if target.dim() != init.dim() {
        return Err(Error::DimensionMismatch {
            expected: init.dim(),
            got: target.dim(),
        });
    }
    let sub_h = params.step_h / params.substeps_per_step as f64;
    Simulation {
        init,
        chains: params.chains,
        seed: params.seed,
        steps: params.num_steps_k,
        substeps: params.substeps_per_step,
        record_every,
        reference: Some(target),
    }
    .run(|x, _, z| ula_step(x, target, sub_h, z))
}

/// Where DDPM scores come from.
#[derive(Clone, Debug)]
pub enum ScoreSource {
    /// ŝ_t = ∇log ν_t from the analytic OU marginal.
    ExactForward,
    /// ŝ_t = ∇log ν_t + shift.
    Offset { shift: Vector },
    /// Entry j − 1 is ŝ_{hj}, j = 1..K.
    Table(Vec<ScoreEstimator>),
}

/// The K estimators used by a DDPM run; entry j − 1 is the score at time hj.
pub fn ddpm_schedule(target: &TargetModel, source: &ScoreSource, params: &DdpmParams) -> Result<Vec<ScoreEstimator>> {
    params.validate()?;
    let k = params.num_steps_k;
    let at = |j: usize| ou_marginal(target, params.step_h * j as f64, params.alpha);
    match source {
        ScoreSource::ExactForward => (1..=k).map(|j| Ok(exact_estimator(&at(j)?))).collect(),
        ScoreSource::Offset { shift } => (1..=k).map(|j| offset_estimator(&at(j)?, shift.clone())).collect(),
        ScoreSource::Table(entries) => {
            if entries.len() < k {
                return Err(Error::MissingTableEntry(entries.len() + 1));
            }
            if entries.len() > k {
                return Err(Error::InvalidParameter(format!(
                    "score table has {} entries but K = {k}; the table must cover times h·1..h·K exactly",
                    entries.len()
                )));
            }
            if let Some(bad) = entries.iter().find(|e| e.dim() != target.dim()) {
                return Err(Error::DimensionMismatch {
                    expected: target.dim(),
                    got: bad.dim(),
                });
            }
            Ok(entries.clone())
        }
    }
}

/// DDPM from γ with divergences recorded against `target`.
pub fn run_ddpm(
    target: &TargetModel,
    source: &ScoreSource,
    params: &DdpmParams,
    record_every: usize,
) -> Result<RunOutput> {
    let schedule = ddpm_schedule(target, source, params)?;
    let init = InitLaw::Gaussian(params.prior(target.dim()));
    let k_total = params.num_steps_k;
    Simulation {
        init: &init,
        chains: params.chains,
        seed: params.seed,
        steps: k_total,
        substeps: 1,
        record_every,
        reference: Some(target),
    }
    .run(|y, k, z| ddpm_step(y, &schedule[k_total - k - 1], params.alpha, params.step_h, z))
}

/// Largest h for which I + hA is a strict contraction in spectral radius:
/// min over eigenvalues λ of −2 Re λ / |λ|², or 0 when some Re λ ≥ 0.
pub fn ila_contraction_bound(a: &Matrix) -> f64 {
    let eig = a.clone().complex_eigenvalues();
    eig.iter()
        .map(|l| if l.re >= 0.0 { 0.0 } else { -2.0 * l.re / l.norm_sqr() })
        .fold(f64::INFINITY, f64::min)
}

/// In-place moment recursion of ILA with affine score x ↦ Ax + b:
/// m ← (I + hA)m + hb, C ← (I + hA)C(I + hA)ᵀ + 2hI.
#[derive(Clone, Debug)]
pub struct IlaMomentFlow {
    mean: Vector,
    cov: Matrix,
    transition: Matrix,
    transition_t: Matrix,
    shift: Vector,
    noise: f64,
    scratch_m: Vector,
    scratch_c: Matrix,
    steps: usize,
}

impl IlaMomentFlow {
    pub fn new(init: &GaussianMoments, a: &Matrix, b: &Vector, h: f64) -> Result<Self> {
        let d = init.dim();
        if a.nrows() != d || a.ncols() != d || b.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: if b.len() != d { b.len() } else { a.nrows() },
            });
        }
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {h}")));
        }
        let bound = ila_contraction_bound(a);
        if h >= bound {
            return Err(Error::ContractionLost { h, bound });
        }
        let transition = Matrix::identity(d, d) + a * h;
        Ok(Self {
            mean: init.mean.clone(),
            cov: init.cov.clone(),
            transition_t: transition.transpose(),
            transition,
            shift: b * h,
            noise: 2.0 * h,
            scratch_m: Vector::zeros(d),
            scratch_c: Matrix::zeros(d, d),
            steps: 0,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        self.transition.mul_to(&self.mean, &mut self.scratch_m);
        self.scratch_m += &self.shift;
        std::mem::swap(&mut self.mean, &mut self.scratch_m);

        self.transition.mul_to(&self.cov, &mut self.scratch_c);
        self.scratch_c.mul_to(&self.transition_t, &mut self.cov);
        let d = self.cov.nrows();
        for i in 0..d {
            self.cov[(i, i)] += self.noise;
            for j in 0..i {
                let s = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = s;
                self.cov[(j, i)] = s;
            }
        }
        self.steps += 1;
        check_definite(&self.cov, self.steps)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix {
        &self.cov
    }

    pub fn moments(&self) -> GaussianMoments {
        GaussianMoments {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

fn check_definite(cov: &Matrix, step: usize) -> Result<()> {
    let d = cov.nrows();
    if cov.iter().any(|v| !v.is_finite()) || (0..d).any(|i| cov[(i, i)] <= 0.0) {
        return Err(Error::LostDefiniteness {
            step,
            reason: "non-finite or non-positive diagonal".into(),
        });
    }
    if d > 1 && linalg::cholesky_spd(cov).is_err() {
        return Err(Error::LostDefiniteness {
            step,
            reason: "Cholesky factorization failed".into(),
        });
    }
    Ok(())
}

/// Exact laws ρ_0..ρ_k of ILA with affine score; `k + 1` entries.
pub fn gaussian_ila_propagate(
    init: &GaussianMoments,
    a: &Matrix,
    b: &Vector,
    h: f64,
    k: usize,
) -> Result<Vec<GaussianMoments>> {
    let mut flow = IlaMomentFlow::new(init, a, b, h)?;
    let mut out = Vec::with_capacity(k + 1);
    out.push(init.clone());
    for _ in 0..k {
        flow.step()?;
        out.push(flow.moments());
    }
    Ok(out)
}

/// Law at time t of dX = (AX + b) dt + √2 dW from a Gaussian start, via
/// block matrix exponentials:
/// exp([[A, b], [0, 0]] t) gives e^{At} and ∫₀ᵗ e^{As} ds b;
/// exp([[−A, 2I], [0, Aᵀ]] t) = [[·, F₁₂], [0, F₂₂]] gives the noise
/// covariance F₂₂ᵀF₁₂.
pub fn ild_gaussian_law(init: &GaussianMoments, a: &Matrix, b: &Vector, t: f64) -> Result<GaussianMoments> {
    let d = init.dim();
    if a.nrows() != d || a.ncols() != d || b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: a.nrows(),
        });
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be ≥ 0, got {t}")));
    }
    let mut aug = Matrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&(a * t));
    aug.view_mut((0, d), (d, 1)).copy_from(&(b * t));
    let e = aug.exp();
    let flow = e.view((0, 0), (d, d)).into_owned();
    let offset: Vector = e.view((0, d), (d, 1)).column(0).into_owned();

    let mut vl = Matrix::zeros(2 * d, 2 * d);
    vl.view_mut((0, 0), (d, d)).copy_from(&(-a * t));
    vl.view_mut((0, d), (d, d))
        .copy_from(&(Matrix::identity(d, d) * (2.0 * t)));
    vl.view_mut((d, d), (d, d)).copy_from(&(a.transpose() * t));
    let f = vl.exp();
    let f12 = f.view((0, d), (d, d)).into_owned();
    let f22 = f.view((d, d), (d, d)).into_owned();
    let noise = f22.transpose() * f12;

    let mean = &flow * &init.mean + offset;
    let cov = linalg::symmetrize(&(&flow * &init.cov * flow.transpose() + noise));
    GaussianMoments::new(mean, cov)
}

/// Exact laws of DDPM with affine scores, starting at γ = N(0, α⁻¹I):
/// with M = e^{αh}I + (2(e^{αh} − 1)/α)A_t,
/// m ← Mm + (2(e^{αh} − 1)/α)u_t and C ← MCMᵀ + ((e^{2αh} − 1)/α)I.
/// `schedule[j − 1]` is the score at time hj; returns K + 1 laws.
pub fn gaussian_ddpm_propagate(schedule: &[ScoreEstimator], alpha: f64, h: f64) -> Result<Vec<GaussianMoments>> {
    let Some(first) = schedule.first() else {
        return Err(Error::MissingTableEntry(1));
    };
    if !(alpha > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("need alpha, h > 0 (got {alpha}, {h})")));
    }
    let d = first.dim();
    let big_k = schedule.len();
    let growth = (alpha * h).exp();
    let gain = 2.0 * (alpha * h).exp_m1() / alpha;
    let noise = (2.0 * alpha * h).exp_m1() / alpha;
    let eye = Matrix::identity(d, d);

    let mut law = GaussianMoments::isotropic(d, 1.0 / alpha);
    let mut out = Vec::with_capacity(big_k + 1);
    out.push(law.clone());
    for k in 0..big_k {
        let j = big_k - k;
        let (a, u) = schedule[j - 1].affine_parts().ok_or(Error::UnsupportedFamily {
            op: "exact DDPM propagation",
            family: "non-affine score",
        })?;
        if a.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: a.nrows(),
            });
        }
        let m = &eye * growth + a * gain;
        let mean = &m * &law.mean + u * gain;
        let cov = linalg::symmetrize(&(&m * &law.cov * m.transpose() + &eye * noise));
        check_definite(&cov, k + 1)?;
        law = GaussianMoments { mean, cov };
        out.push(law.clone());
    }
    Ok(out)
}

fn affine_zero(a: &Matrix, b: &Vector) -> Result<Vector> {
    a.clone()
        .lu()
        .solve(&(-b))
        .ok_or_else(|| Error::Degenerate("drift matrix is singular".into()))
}

fn solve_vec(op: Matrix, rhs: &Matrix, d: usize) -> Result<Matrix> {
    let v = op
        .lu()
        .solve(&Vector::from_column_slice(rhs.as_slice()))
        .ok_or_else(|| Error::Degenerate("Lyapunov system is singular".into()))?;
    Ok(linalg::symmetrize(&Matrix::from_column_slice(d, d, v.as_slice())))
}

/// Stationary law of ILA with affine score x ↦ Ax + b: mean −A⁻¹b and the
/// covariance solving C = MCMᵀ + 2hI, M = I + hA.
pub fn ila_stationary_law(a: &Matrix, b: &Vector, h: f64) -> Result<GaussianMoments> {
    let d = a.nrows();
    let bound = ila_contraction_bound(a);
    if !(h > 0.0) || h >= bound {
        return Err(Error::ContractionLost { h, bound });
    }
    let m = Matrix::identity(d, d) + a * h;
    let op = Matrix::identity(d * d, d * d) - m.kronecker(&m);
    let cov = solve_vec(op, &(Matrix::identity(d, d) * (2.0 * h)), d)?;
    GaussianMoments::new(affine_zero(a, b)?, cov)
}

/// Stationary law of dX = (AX + b) dt + √2 dW: mean −A⁻¹b and the
/// covariance solving AC + CAᵀ + 2I = 0. Needs every eigenvalue of A in the
/// open left half-plane.
pub fn ild_stationary_law(a: &Matrix, b: &Vector) -> Result<GaussianMoments> {
    let d = a.nrows();
    if a.clone().complex_eigenvalues().iter().any(|l| l.re >= 0.0) {
        return Err(Error::Precondition(
            "drift has an eigenvalue with Re λ ≥ 0; no stationary law".into(),
        ));
    }
    let eye = Matrix::identity(d, d);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let cov = solve_vec(op, &(eye * -2.0), d)?;
    GaussianMoments::new(affine_zero(a, b)?, cov)
}
