//! Independent reference computations for unit tests: finite differences,
//! quadrature, and brute-force simulation. Nothing here calls into the
//! closed-form routines it is used to check.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{Matrix, Vector};
use crate::rng::{chain_rng, standard_normal};
use crate::targets::TargetModel;

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient<F: Fn(&Vector) -> f64>(f: F, x: &Vector, step: f64) -> Vector {
    DVector::from_fn(x.len(), |i, _| {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[i] += step;
        dn[i] -= step;
        (f(&up) - f(&dn)) / (2.0 * step)
    })
}

/// Composite Simpson rule on [a, b] with `n` (even) intervals.
pub fn integrate_1d<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Tensor-product Simpson rule on a square box.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(lo: f64, hi: f64, n: usize, f: F) -> f64 {
    integrate_1d(lo, hi, n, |x| integrate_1d(lo, hi, n, |y| f(x, y)))
}

/// Gaussian density evaluated directly from the textbook formula.
pub fn gaussian_pdf(x: &Vector, mean: &Vector, cov: &Matrix) -> f64 {
    let d = x.len() as f64;
    let inv = cov.clone().try_inverse().expect("invertible");
    let diff = x - mean;
    let quad = diff.dot(&(&inv * &diff));
    (-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powf(d) * cov.determinant()).sqrt()
}

pub fn empirical_moments(draws: &[Vector]) -> (Vector, Matrix) {
    let n = draws.len() as f64;
    let d = draws[0].len();
    let mut mean = DVector::zeros(d);
    for x in draws {
        mean += x;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for x in draws {
        let c = x - &mean;
        cov += &c * c.transpose();
    }
    (mean, cov / (n - 1.0))
}

/// Euler–Maruyama simulation of dX = −αX dt + √2 dW in 1-D from `start`,
/// returning the sample mean and variance at time `t`.
pub fn euler_maruyama_ou(start: &TargetModel, alpha: f64, t: f64, steps: usize, paths: usize, seed: u64) -> (f64, f64) {
    let dt = t / steps as f64;
    let mut rng = chain_rng(seed, 0);
    let mut finals = Vec::with_capacity(paths);
    for _ in 0..paths {
        let mut x = start.sample(&mut rng)[0];
        for _ in 0..steps {
            let z = standard_normal(&mut rng, 1)[0];
            x += -alpha * x * dt + (2.0 * dt).sqrt() * z;
        }
        finals.push(x);
    }
    let n = paths as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
