//! Score estimators.
//!
//! Every estimator carries its Lipschitz constant (possibly unknown) and a
//! structural tag. Affine estimators `x ↦ Ax + b` are what allow exact
//! Gaussian propagation downstream, so the tag is kept honest: it is only
//! set when `eval` really is `Ax + b`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng::chain_rng;
use crate::targets::{convolve_gaussian, Constant, TargetModel};

#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    Affine { a: Matrix, b: Vector },
    General,
}

#[derive(Clone, Debug)]
pub enum EstimatorKind {
    Exact(TargetModel),
    Perturbed { alpha_hat: f64 },
    Offset { target: TargetModel, shift: Vector },
    KdePopulation { eta: f64, smoothed: TargetModel },
    KdeEmpirical { eta: f64, bank: Arc<SampleBank> },
}

#[derive(Clone, Debug)]
pub struct ScoreEstimator {
    dim: usize,
    kind: EstimatorKind,
    lipschitz: Constant,
    structure: Structure,
}

fn affine_of_target(target: &TargetModel, shift: Option<&Vector>) -> Structure {
    match (target.precision(), target.gaussian_spec()) {
        (Some(p), Some(g)) => {
            let mut b = p * &g.mean;
            if let Some(s) = shift {
                b += s;
            }
            Structure::Affine { a: -p.clone(), b }
        }
        _ => Structure::General,
    }
}

pub fn exact_estimator(target: &TargetModel) -> ScoreEstimator {
    ScoreEstimator {
        dim: target.dim(),
        structure: affine_of_target(target, None),
        lipschitz: target.smoothness_l(),
        kind: EstimatorKind::Exact(target.clone()),
    }
}

/// ŝ(x) = −α̂x, the score of N(0, α̂⁻¹I).
pub fn perturbed_gaussian_estimator(alpha_hat: f64, dim: usize) -> Result<ScoreEstimator> {
    if !(alpha_hat > 0.0) || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "perturbed estimator needs alpha_hat > 0 and dim ≥ 1 (got {alpha_hat}, {dim})"
        )));
    }
    Ok(ScoreEstimator {
        dim,
        kind: EstimatorKind::Perturbed { alpha_hat },
        lipschitz: Constant::Known(alpha_hat),
        structure: Structure::Affine {
            a: DMatrix::identity(dim, dim) * -alpha_hat,
            b: DVector::zeros(dim),
        },
    })
}

/// ŝ(x) = s_ν(x) + b. Its L∞ error is exactly ‖b‖.
pub fn offset_estimator(target: &TargetModel, shift: Vector) -> Result<ScoreEstimator> {
    if shift.len() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: shift.len(),
        });
    }
    Ok(ScoreEstimator {
        dim: target.dim(),
        structure: affine_of_target(target, Some(&shift)),
        lipschitz: target.smoothness_l(),
        kind: EstimatorKind::Offset {
            target: target.clone(),
            shift,
        },
    })
}

/// Population-level KDE score ∇ log(ρ ∗ N(0, ηI)).
pub fn kde_population_estimator(target: &TargetModel, eta: f64) -> Result<ScoreEstimator> {
    let smoothed = convolve_gaussian(target, eta)?;
    let lipschitz = if smoothed.is_gaussian() {
        smoothed.smoothness_l()
    } else {
        // Certifying a smoothed mixture costs a full grid sweep; callers
        // that need it can ask the smoothed target directly.
        Constant::Unknown
    };
    Ok(ScoreEstimator {
        dim: target.dim(),
        structure: affine_of_target(&smoothed, None),
        lipschitz,
        kind: EstimatorKind::KdePopulation { eta, smoothed },
    })
}

/// Score of the Gaussian KDE built on `bank` with bandwidth `eta`.
pub fn kde_empirical_estimator(bank: Arc<SampleBank>, eta: f64) -> Result<ScoreEstimator> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "empirical KDE bandwidth must be > 0, got {eta}"
        )));
    }
    Ok(ScoreEstimator {
        dim: bank.dim(),
        kind: EstimatorKind::KdeEmpirical { eta, bank },
        lipschitz: Constant::Unknown,
        structure: Structure::General,
    })
}

impl ScoreEstimator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &EstimatorKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            EstimatorKind::Exact(_) => "exact",
            EstimatorKind::Perturbed { .. } => "perturbed",
            EstimatorKind::Offset { .. } => "offset",
            EstimatorKind::KdePopulation { .. } => "kde_pop",
            EstimatorKind::KdeEmpirical { .. } => "kde_emp",
        }
    }

    pub fn lipschitz(&self) -> Constant {
        self.lipschitz
    }

    /// Supply a Lipschitz constant the estimator cannot derive itself
    /// (e.g. for empirical KDE).
    pub fn with_lipschitz_override(mut self, ls: f64) -> Self {
        self.lipschitz = Constant::Known(ls);
        self
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn affine_parts(&self) -> Option<(&Matrix, &Vector)> {
        match &self.structure {
            Structure::Affine { a, b } => Some((a, b)),
            Structure::General => None,
        }
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        match &self.kind {
            EstimatorKind::Exact(t) => t.score(x),
            EstimatorKind::Perturbed { alpha_hat } => x * -*alpha_hat,
            EstimatorKind::Offset { target, shift } => target.score(x) + shift,
            EstimatorKind::KdePopulation { smoothed, .. } => smoothed.score(x),
            EstimatorKind::KdeEmpirical { eta, bank } => {
                let w = bank.kde_weights(x, *eta);
                let mut out = DVector::zeros(self.dim);
                for (i, wi) in w.iter().enumerate() {
                    if *wi > 0.0 {
                        out += (bank.point(i) - x) * *wi;
                    }
                }
                out / *eta
            }
        }
    }
}

/// I.i.d. draws X_1..X_N stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBank {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    source_seed: Option<u64>,
}

impl SampleBank {
    pub fn new(points: &[Vector], source_seed: Option<u64>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if points.is_empty() || dim == 0 {
            return Err(Error::InvalidParameter("sample bank needs N ≥ 1, d ≥ 1".into()));
        }
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend(p.iter());
        }
        Self::from_flat(points.len(), dim, data, source_seed)
    }

    pub fn from_flat(n: usize, dim: usize, data: Vec<f64>, source_seed: Option<u64>) -> Result<Self> {
        if n == 0 || dim == 0 || data.len() != n * dim {
            return Err(Error::MalformedBank(format!(
                "{} values do not form a {n}x{dim} bank",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedBank("non-finite entry".into()));
        }
        Ok(Self {
            n,
            dim,
            data,
            source_seed,
        })
    }

    /// N exact draws from `target` using stream 0 of `seed`.
    pub fn draw(target: &TargetModel, n: usize, seed: u64) -> Result<Self> {
        let mut rng = chain_rng(seed, 0);
        let pts: Vec<Vector> = (0..n).map(|_| target.sample(&mut rng)).collect();
        Self::new(&pts, Some(seed))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source_seed(&self) -> Option<u64> {
        self.source_seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> Vector {
        DVector::from_column_slice(self.row(i))
    }

    pub fn points(&self) -> impl Iterator<Item = Vector> + '_ {
        (0..self.n).map(|i| self.point(i))
    }

    /// Softmax KDE weights w_i(y) ∝ exp(−‖y − X_i‖²/(2η)), computed with the
    /// largest logit subtracted.
    pub fn kde_weights(&self, y: &Vector, eta: f64) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.n)
            .map(|i| {
                let sq: f64 = self.row(i).iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                -sq / (2.0 * eta)
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        w
    }

    pub fn translated(&self, shift: &Vector) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.dim) {
            for (v, s) in row.iter_mut().zip(shift.iter()) {
                *v += s;
            }
        }
        Self { data, ..self.clone() }
    }

    /// Little-endian layout: `N: u32`, `d: u32`, then N·d `f64` values
    /// row-major.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = u32::try_from(self.n).map_err(|_| Error::MalformedBank("N does not fit in u32".into()))?;
        let d = u32::try_from(self.dim).map_err(|_| Error::MalformedBank("d does not fit in u32".into()))?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let n = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != n * d * 8 {
            return Err(Error::MalformedBank(format!(
                "header says {n}x{d} but payload holds {} bytes",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(n, d, data, None)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// JSON form of an estimator, resolved against a target by
/// [`EstimatorSpec::build`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Exact,
    Perturbed {
        alpha_hat: f64,
    },
    Offset {
        b: Vec<f64>,
    },
    KdePop {
        eta: f64,
    },
    KdeEmp {
        eta: f64,
        /// Binary sample bank to load; if absent, `n_samples` draws are taken
        /// from the target with `seed`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bank: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_samples: Option<usize>,
        #[serde(default)]
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz_override: Option<f64>,
    },
}

impl EstimatorSpec {
    pub fn build(&self, target: &TargetModel) -> Result<ScoreEstimator> {
        match self {
            EstimatorSpec::Exact => Ok(exact_estimator(target)),
            EstimatorSpec::Perturbed { alpha_hat } => perturbed_gaussian_estimator(*alpha_hat, target.dim()),
            EstimatorSpec::Offset { b } => offset_estimator(target, linalg::vector_from(b)),
            EstimatorSpec::KdePop { eta } => kde_population_estimator(target, *eta),
            EstimatorSpec::KdeEmp {
                eta,
                bank,
                n_samples,
                seed,
                lipschitz_override,
            } => {
                let bank = match (bank, n_samples) {
                    (Some(path), _) => SampleBank::load(path)?,
                    (None, Some(n)) => SampleBank::draw(target, *n, *seed)?,
                    (None, None) => {
                        return Err(Error::InvalidParameter(
                            "kde_emp needs either `bank` or `n_samples`".into(),
                        ))
                    }
                };
                if bank.dim() != target.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: target.dim(),
                        got: bank.dim(),
                    });
                }
                let est = kde_empirical_estimator(Arc::new(bank), *eta)?;
                Ok(match lipschitz_override {
                    Some(ls) => est.with_lipschitz_override(*ls),
                    None => est,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normal;
    use crate::targets::{make_gaussian_target, make_mixture_target, GaussianSpec, MixtureSpec};
    use proptest::prelude::*;

    fn v(x: &[f64]) -> Vector {
        linalg::vector_from(x)
    }

    fn std_normal(dim: usize) -> TargetModel {
        make_gaussian_target(GaussianSpec::isotropic(dim, 1.0).unwrap())
    }

    fn bumps() -> TargetModel {
        let c = |mu: f64| GaussianSpec::new(v(&[mu]), DMatrix::from_element(1, 1, 0.6)).unwrap();
        make_mixture_target(MixtureSpec::new(vec![0.4, 0.6], vec![c(-1.5), c(1.0)]).unwrap()).unwrap()
    }

    fn correlated() -> TargetModel {
        make_gaussian_target(
            GaussianSpec::new(v(&[1.0, -1.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
        )
    }

    fn assert_affine_consistent(est: &ScoreEstimator) {
        let (a, b) = est.affine_parts().expect("affine");
        let mut rng = chain_rng(5, 3);
        for _ in 0..100 {
            let x = standard_normal(&mut rng, est.dim()) * 2.0;
            assert!((est.eval(&x) - (a * &x + b)).amax() < 1e-12);
        }
    }

    #[test]
    fn exact_estimator_structure() {
        let alpha = 2.0;
        let t = make_gaussian_target(GaussianSpec::isotropic(3, alpha).unwrap());
        let est = exact_estimator(&t);
        let (a, b) = est.affine_parts().unwrap();
        assert!((a + DMatrix::<f64>::identity(3, 3) * alpha).amax() < 1e-12);
        assert_eq!(b.amax(), 0.0);
        assert!((est.lipschitz().value().unwrap() - alpha).abs() < 1e-14);

        let mix = bumps();
        let est = exact_estimator(&mix);
        assert_eq!(est.structure(), &Structure::General);
        for x in [-2.0, 0.1, 3.0] {
            assert_eq!(est.eval(&v(&[x])), mix.score(&v(&[x])));
        }
        assert_affine_consistent(&exact_estimator(&correlated()));
    }

    #[test]
    fn perturbed_estimator() {
        let est = perturbed_gaussian_estimator(1.2, 2).unwrap();
        assert_eq!(est.lipschitz(), Constant::Known(1.2));
        assert_affine_consistent(&est);
        assert!(perturbed_gaussian_estimator(0.0, 2).is_err());
        let exact = exact_estimator(&std_normal(2));
        let same = perturbed_gaussian_estimator(1.0, 2).unwrap();
        let x = v(&[0.3, -2.0]);
        assert_eq!(exact.eval(&x), same.eval(&x));
    }

    #[test]
    fn offset_estimator_shift() {
        let t = correlated();
        let b = v(&[0.3, 0.0]);
        let est = offset_estimator(&t, b.clone()).unwrap();
        assert_affine_consistent(&est);
        let x = v(&[0.5, 0.5]);
        assert!((est.eval(&x) - t.score(&x) - &b).amax() < 1e-15);
        let zero = offset_estimator(&t, v(&[0.0, 0.0])).unwrap();
        assert_eq!(zero.eval(&x), t.score(&x));
        assert!(offset_estimator(&t, v(&[0.1])).is_err());
    }

    #[test]
    fn population_kde() {
        let t = std_normal(1);
        let same = kde_population_estimator(&t, 0.0).unwrap();
        assert_eq!(same.eval(&v(&[1.3])), t.score(&v(&[1.3])));
        let est = kde_population_estimator(&t, 1.0).unwrap();
        let (a, b) = est.affine_parts().unwrap();
        assert!((a[(0, 0)] + 0.5).abs() < 1e-15 && b[0] == 0.0);

        let mix = bumps();
        let est = kde_population_estimator(&mix, 0.2).unwrap();
        let smoothed = convolve_gaussian(&mix, 0.2).unwrap();
        let mut rng = chain_rng(9, 0);
        for _ in 0..100 {
            let x = standard_normal(&mut rng, 1) * 2.0;
            assert!((est.eval(&x) - smoothed.score(&x)).amax() < 1e-12);
        }
    }

    #[test]
    fn empirical_kde_examples() {
        let eta = 0.3;
        let single = SampleBank::new(&[v(&[1.0, 2.0])], None).unwrap();
        let est = kde_empirical_estimator(Arc::new(single), eta).unwrap();
        let y = v(&[-0.5, 0.25]);
        assert!((est.eval(&y) - (v(&[1.0, 2.0]) - &y) / eta).amax() < 1e-14);

        let sym = SampleBank::new(&[v(&[-1.7]), v(&[1.7])], None).unwrap();
        let est = kde_empirical_estimator(Arc::new(sym), eta).unwrap();
        assert!(est.eval(&v(&[0.0]))[0].abs() < 1e-15);
        assert!(est.lipschitz() == Constant::Unknown);

        let bank = SampleBank::new(&[v(&[0.0])], None).unwrap();
        assert!(kde_empirical_estimator(Arc::new(bank), 0.0).is_err());
    }

    #[test]
    fn empirical_kde_no_overflow_far_away() {
        let bank = SampleBank::new(&[v(&[0.0]), v(&[1.0])], None).unwrap();
        let w = bank.kde_weights(&v(&[1000.0]), 0.5);
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let est = kde_empirical_estimator(Arc::new(bank), 0.5).unwrap();
        assert!((est.eval(&v(&[1000.0]))[0] - (1.0 - 1000.0) / 0.5).abs() < 1e-9);
    }

    #[test]
    fn empirical_kde_tracks_population() {
        let t = std_normal(1);
        let bank = Arc::new(SampleBank::draw(&t, 10_000, 2024).unwrap());
        let emp = kde_empirical_estimator(bank, 0.1).unwrap();
        let pop = kde_population_estimator(&t, 0.1).unwrap();
        for y in [-1.0, 0.0, 1.0] {
            let y = v(&[y]);
            assert!((emp.eval(&y) - pop.eval(&y)).amax() < 0.1);
        }
    }

    #[test]
    fn empirical_kde_error_shrinks_with_n() {
        let t = std_normal(1);
        let pop = kde_population_estimator(&t, 0.1).unwrap();
        let grid: Vec<Vector> = (-8..=8).map(|i| v(&[i as f64 * 0.25])).collect();
        let mut prev = f64::INFINITY;
        for n in [100, 1_000, 10_000] {
            let bank = Arc::new(SampleBank::draw(&t, n, 77).unwrap());
            let emp = kde_empirical_estimator(bank, 0.1).unwrap();
            let msd = grid
                .iter()
                .map(|y| (emp.eval(y) - pop.eval(y)).norm_squared())
                .sum::<f64>()
                / grid.len() as f64;
            assert!(msd <= prev, "n={n}: {msd} > {prev}");
            prev = msd;
        }
    }

    #[test]
    fn bank_binary_format() {
        let bank = SampleBank::new(&[v(&[1.0, -2.5]), v(&[0.125, 3.0])], Some(4)).unwrap();
        let mut bytes = Vec::new();
        bank.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 4 * 8);
        assert_eq!(&bytes[0..8], &[2, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &1.0f64.to_le_bytes());
        let back = SampleBank::read_from(&bytes[..]).unwrap();
        assert_eq!(back.row(1), bank.row(1));
        assert_eq!(back.source_seed(), None);
        assert!(SampleBank::read_from(&bytes[..20]).is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        bank.save(&path).unwrap();
        assert_eq!(SampleBank::load(&path).unwrap().row(0), bank.row(0));
    }

    #[test]
    fn estimator_spec_json() {
        let t = correlated();
        let specs = [
            r#"{"kind":"exact"}"#,
            r#"{"kind":"perturbed","alpha_hat":1.1}"#,
            r#"{"kind":"offset","b":[0.1,0.2]}"#,
            r#"{"kind":"kde_pop","eta":0.05}"#,
            r#"{"kind":"kde_emp","eta":0.05,"n_samples":50,"seed":3}"#,
        ];
        let names = ["exact", "perturbed", "offset", "kde_pop", "kde_emp"];
        for (json, name) in specs.iter().zip(names) {
            let spec: EstimatorSpec = serde_json::from_str(json).unwrap();
            assert_eq!(spec.build(&t).unwrap().kind_name(), name);
        }
        let bad: EstimatorSpec = serde_json::from_str(r#"{"kind":"kde_emp","eta":0.05}"#).unwrap();
        assert!(bad.build(&t).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn kde_weights_normalized(seed in 0u64..1000, y in prop::collection::vec(-50.0f64..50.0, 2), eta in 0.01f64..3.0) {
            let bank = SampleBank::draw(&std_normal(2), 40, seed).unwrap();
            let w = bank.kde_weights(&v(&y), eta);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn kde_translation_equivariant(seed in 0u64..1000, y in prop::collection::vec(-3.0f64..3.0, 2),
                                       shift in prop::collection::vec(-5.0f64..5.0, 2), eta in 0.05f64..2.0) {
            let bank = SampleBank::draw(&std_normal(2), 30, seed).unwrap();
            let shift = v(&shift);
            let y = v(&y);
            let a = kde_empirical_estimator(Arc::new(bank.clone()), eta).unwrap().eval(&y);
            let b = kde_empirical_estimator(Arc::new(bank.translated(&shift)), eta).unwrap().eval(&(&y + &shift));
            prop_assert!((a - b).amax() < 1e-10);
        }

        #[test]
        fn lipschitz_bound_holds(alpha_hat in 0.1f64..4.0, x in prop::collection::vec(-10.0f64..10.0, 2),
                                 y in prop::collection::vec(-10.0f64..10.0, 2), shift in prop::collection::vec(-1.0f64..1.0, 2)) {
            let (x, y) = (v(&x), v(&y));
            let t = correlated();
            for est in [perturbed_gaussian_estimator(alpha_hat, 2).unwrap(),
                        exact_estimator(&t),
                        offset_estimator(&t, v(&shift)).unwrap(),
                        kde_population_estimator(&t, alpha_hat).unwrap()] {
                let ls = est.lipschitz().value().unwrap();
                let lhs = (est.eval(&x) - est.eval(&y)).norm();
                prop_assert!(lhs <= ls * (&x - &y).norm() + 1e-9);
            }
        }

        #[test]
        fn affine_lipschitz_is_spectral_norm(alpha_hat in 0.1f64..4.0, eta in 0.0f64..2.0) {
            let t = correlated();
            for est in [perturbed_gaussian_estimator(alpha_hat, 2).unwrap(),
                        exact_estimator(&t),
                        kde_population_estimator(&t, eta).unwrap()] {
                let (a, _) = est.affine_parts().unwrap();
                prop_assert!((est.lipschitz().value().unwrap() - linalg::spectral_norm(a)).abs() < 1e-10);
            }
        }
    }
}
