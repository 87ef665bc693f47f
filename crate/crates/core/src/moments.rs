use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Mean and covariance of a Gaussian law. This is the state carried by the
/// exact propagation routines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentsWire", into = "MomentsWire")]
pub struct GaussianMoments {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianMoments {
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        linalg::cholesky_spd(&cov)?;
        Ok(Self { mean, cov })
    }

    /// N(0, var·I_d).
    pub fn isotropic(dim: usize, var: f64) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * var,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn precision(&self) -> Result<Matrix> {
        Ok(linalg::cholesky_spd(&self.cov)?.inverse())
    }

    pub fn validate(&self) -> Result<()> {
        linalg::cholesky_spd(&self.cov).map(|_| ())
    }

    /// Largest absolute difference over means and covariance entries.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let dm = (&self.mean - &other.mean).amax();
        let dc = (&self.cov - &other.cov).amax();
        dm.max(dc)
    }
}

#[derive(Serialize, Deserialize)]
struct MomentsWire {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl TryFrom<MomentsWire> for GaussianMoments {
    type Error = Error;
    fn try_from(w: MomentsWire) -> Result<Self> {
        GaussianMoments::new(linalg::vector_from(&w.mean), linalg::matrix_from_rows(&w.cov)?)
    }
}

impl From<GaussianMoments> for MomentsWire {
    fn from(m: GaussianMoments) -> Self {
        MomentsWire {
            mean: m.mean.iter().copied().collect(),
            cov: linalg::matrix_to_rows(&m.cov),
        }
    }
}
