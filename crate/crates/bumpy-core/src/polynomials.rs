//! Degree-1 and degree-2 polynomial Stokes solutions vanishing on the plane x3 = 0.

use crate::error::{BumpyError, Result};

/// A member of the no-slip polynomial bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct NoSlipPolynomial {
    pub degree: u8,
    pub index: u8,
}

impl NoSlipPolynomial {
    pub fn new(degree: u8, index: u8) -> Result<Self> {
        if basis_dimension(degree).map_or(false, |n| index >= 1 && (index as usize) <= n) {
            Ok(Self { degree, index })
        } else {
            Err(BumpyError::InvalidIndex { degree, index })
        }
    }

    pub fn velocity(&self, x: [f64; 3]) -> [f64; 3] {
        eval_velocity(self.degree, self.index, x)
    }

    pub fn pressure(&self, x: [f64; 3]) -> f64 {
        eval_pressure(self.degree, self.index, x)
    }

    /// Velocity gradient, `g[i][j] = d u_i / d x_j`.
    pub fn gradient(&self, x: [f64; 3]) -> [[f64; 3]; 3] {
        eval_gradient(self.degree, self.index, x)
    }

    /// Every basis member of the given degree.
    pub fn all(degree: u8) -> Vec<NoSlipPolynomial> {
        let n = basis_dimension(degree).unwrap_or(0);
        (1..=n as u8).map(|index| NoSlipPolynomial { degree, index }).collect()
    }
}

pub fn basis_dimension(degree: u8) -> Option<usize> {
    match degree {
        1 => Some(2),
        2 => Some(6),
        _ => None,
    }
}

fn eval_velocity(degree: u8, j: u8, x: [f64; 3]) -> [f64; 3] {
    let [x1, x2, x3] = x;
    match (degree, j) {
        (1, 1) => [x3, 0.0, 0.0],
        (1, 2) => [0.0, x3, 0.0],
        (2, 1) => [x2 * x3, 0.0, 0.0],
        (2, 2) => [x3 * x3, 0.0, 0.0],
        (2, 3) => [0.0, x1 * x3, 0.0],
        (2, 4) => [0.0, x3 * x3, 0.0],
        (2, 5) => [-2.0 * x1 * x3, 0.0, x3 * x3],
        (2, 6) => [0.0, -2.0 * x2 * x3, x3 * x3],
        _ => [0.0; 3],
    }
}

fn eval_pressure(degree: u8, j: u8, x: [f64; 3]) -> f64 {
    match (degree, j) {
        (2, 2) => 2.0 * x[0],
        (2, 4) => 2.0 * x[1],
        (2, 5) | (2, 6) => 2.0 * x[2],
        _ => 0.0,
    }
}

fn eval_gradient(degree: u8, j: u8, x: [f64; 3]) -> [[f64; 3]; 3] {
    let [x1, x2, x3] = x;
    let mut g = [[0.0; 3]; 3];
    match (degree, j) {
        (1, 1) => g[0][2] = 1.0,
        (1, 2) => g[1][2] = 1.0,
        (2, 1) => {
            g[0][1] = x3;
            g[0][2] = x2;
        }
        (2, 2) => g[0][2] = 2.0 * x3,
        (2, 3) => {
            g[1][0] = x3;
            g[1][2] = x1;
        }
        (2, 4) => g[1][2] = 2.0 * x3,
        (2, 5) => {
            g[0][0] = -2.0 * x3;
            g[0][2] = -2.0 * x1;
            g[2][2] = 2.0 * x3;
        }
        (2, 6) => {
            g[1][1] = -2.0 * x3;
            g[1][2] = -2.0 * x2;
            g[2][2] = 2.0 * x3;
        }
        _ => {}
    }
    g
}

/// Closed-form evaluation of velocity and pressure.
pub fn eval_basis(degree: u8, j: u8, x: [f64; 3]) -> Result<([f64; 3], f64)> {
    let p = NoSlipPolynomial::new(degree, j)?;
    Ok((p.velocity(x), p.pressure(x)))
}

/// Maximum divergence and momentum residuals over an 11^3 lattice on [-1,1]^3.
///
/// Derivatives are taken by central differences with step 1/2; for polynomials of
/// degree at most two these are exact up to round-off.
pub fn stokes_residual(degree: u8, j: u8) -> Result<(f64, f64)> {
    let p = NoSlipPolynomial::new(degree, j)?;
    let s = 0.5;
    let mut max_div: f64 = 0.0;
    let mut max_mom: f64 = 0.0;
    for a in 0..11 {
        for b in 0..11 {
            for c in 0..11 {
                let x = [-1.0 + 0.2 * a as f64, -1.0 + 0.2 * b as f64, -1.0 + 0.2 * c as f64];
                let shifted = |d: usize, t: f64| {
                    let mut y = x;
                    y[d] += t;
                    y
                };
                let mut div = 0.0;
                let mut lap = [0.0; 3];
                let mut grad_p = [0.0; 3];
                let u0 = p.velocity(x);
                for d in 0..3 {
                    let up = p.velocity(shifted(d, s));
                    let um = p.velocity(shifted(d, -s));
                    div += (up[d] - um[d]) / (2.0 * s);
                    for i in 0..3 {
                        lap[i] += (up[i] - 2.0 * u0[i] + um[i]) / (s * s);
                    }
                    grad_p[d] = (p.pressure(shifted(d, s)) - p.pressure(shifted(d, -s))) / (2.0 * s);
                }
                max_div = max_div.max(div.abs());
                for i in 0..3 {
                    max_mom = max_mom.max((-lap[i] + grad_p[i]).abs());
                }
            }
        }
    }
    Ok((max_div, max_mom))
}

/// Sampled velocity gradients of a field: one entry per quadrature point with its weight.
pub struct GradientSamples {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub gradients: Vec<[[f64; 3]; 3]>,
}

/// Coefficients of the degree-`degree` basis minimizing the weighted L2 mismatch of gradients.
pub fn project_gradients(samples: &GradientSamples, degree: u8) -> Result<Vec<f64>> {
    let basis = NoSlipPolynomial::all(degree);
    if basis.is_empty() {
        return Err(BumpyError::InvalidIndex { degree, index: 0 });
    }
    let m = basis.len();
    if samples.points.len() < 10 * m {
        return Err(BumpyError::RankDeficient(format!(
            "{} samples for a {}-dimensional basis",
            samples.points.len(),
            m
        )));
    }
    let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for ((x, w), g) in samples.points.iter().zip(&samples.weights).zip(&samples.gradients) {
        let bg: Vec<[[f64; 3]; 3]> = basis.iter().map(|b| b.gradient(*x)).collect();
        for a in 0..m {
            rhs[a] += w * frob(&bg[a], g);
            for b in a..m {
                let v = w * frob(&bg[a], &bg[b]);
                gram[(a, b)] += v;
                if a != b {
                    gram[(b, a)] += v;
                }
            }
        }
    }
    crate::linalg::solve_spd(gram, rhs)
}

pub(crate) fn frob(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}
