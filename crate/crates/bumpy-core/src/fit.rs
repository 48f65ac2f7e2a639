//! Power-law and exponential fits of sampled (abscissa, value) series.

use crate::linalg::line_fit;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitKind {
    /// value ~ C r^slope
    PowerLaw,
    /// value ~ C exp(-rate t); `slope` stores the rate
    Exponential,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    pub kind: FitKind,
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub constant: f64,
    pub residual_rms: f64,
    /// True when every value is below the noise floor and no fit was attempted.
    pub degenerate: bool,
}

const FLOOR: f64 = 1e-300;

impl DecayFit {
    pub fn power_law(r: &[f64], v: &[f64]) -> DecayFit {
        Self::fit(FitKind::PowerLaw, r, v)
    }

    pub fn exponential(t: &[f64], v: &[f64]) -> DecayFit {
        Self::fit(FitKind::Exponential, t, v)
    }

    /// Exponential rate of a layer norm whose square behaves like
    /// `(c0 + c1 t + c2 t^2) exp(-2 rate t)`, as for sums of modes `(a + b t) exp(-|k| t)`.
    /// Values at or below `floor` everywhere give a degenerate fit.
    pub fn layer_decay(t: &[f64], v: &[f64], floor: f64) -> DecayFit {
        let mut out = DecayFit {
            kind: FitKind::Exponential,
            abscissa: t.to_vec(),
            values: v.to_vec(),
            slope: 0.0,
            constant: 0.0,
            residual_rms: 0.0,
            degenerate: true,
        };
        let keep: Vec<(f64, f64)> =
            t.iter().zip(v).filter(|(_, y)| **y > floor.max(FLOOR) && y.is_finite()).map(|(x, y)| (*x, *y)).collect();
        if keep.len() < 4 {
            return out;
        }
        let t0 = keep[0].0;
        let span = (keep[keep.len() - 1].0 - t0).max(1e-300);
        let solve = |r: f64| -> (f64, f64) {
            let m = keep.len();
            let a = DMatrix::from_fn(m, 3, |i, j| {
                let u = (keep[i].0 - t0) / span;
                u.powi(j as i32) * (-2.0 * r * (keep[i].0 - t0)).exp() / (keep[i].1 * keep[i].1)
            });
            let b = DVector::from_element(m, 1.0);
            let svd = a.clone().svd(true, true);
            match svd.solve(&b, 1e-14) {
                Ok(c) => ((&a * &c - &b).norm_squared(), c[0]),
                Err(_) => (f64::INFINITY, 0.0),
            }
        };
        let step = 0.02;
        let mut best = (f64::INFINITY, step);
        let mut r = step;
        while r <= 6.0 + 1e-12 {
            let j = solve(r).0;
            if j < best.0 {
                best = (j, r);
            }
            r += step;
        }
        // golden-section refinement around the best grid point
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = ((best.1 - step).max(1e-6), best.1 + step);
        for _ in 0..60 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if solve(a).0 < solve(b).0 {
                hi = b;
            } else {
                lo = a;
            }
        }
        let rate = 0.5 * (lo + hi);
        let (j, c0) = solve(rate);
        out.slope = rate;
        out.constant = c0.max(0.0).sqrt();
        out.residual_rms = (j / keep.len() as f64).sqrt();
        out.degenerate = false;
        out
    }

    fn fit(kind: FitKind, a: &[f64], v: &[f64]) -> DecayFit {
        let keep: Vec<(f64, f64)> = a
            .iter()
            .zip(v)
            .filter(|(_, y)| **y > FLOOR && y.is_finite())
            .map(|(x, y)| (*x, *y))
            .collect();
        if keep.len() < 2 {
            return DecayFit {
                kind,
                abscissa: a.to_vec(),
                values: v.to_vec(),
                slope: 0.0,
                constant: 0.0,
                residual_rms: 0.0,
                degenerate: true,
            };
        }
        let xs: Vec<f64> = keep
            .iter()
            .map(|(x, _)| if kind == FitKind::PowerLaw { x.ln() } else { *x })
            .collect();
        let ys: Vec<f64> = keep.iter().map(|(_, y)| y.ln()).collect();
        let (s, c, rms) = line_fit(&xs, &ys);
        let slope = if kind == FitKind::Exponential { -s } else { s };
        DecayFit {
            kind,
            abscissa: a.to_vec(),
            values: v.to_vec(),
            slope,
            constant: c.exp(),
            residual_rms: rms,
            degenerate: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_laws() {
        let r: Vec<f64> = (1..8).map(|i| 0.1 * i as f64).collect();
        let v: Vec<f64> = r.iter().map(|x| 3.0 * x.powf(1.5)).collect();
        let f = DecayFit::power_law(&r, &v);
        assert!((f.slope - 1.5).abs() < 1e-12 && (f.constant - 3.0).abs() < 1e-12);
        let e: Vec<f64> = r.iter().map(|x| 2.0 * (-0.7 * x).exp()).collect();
        let f = DecayFit::exponential(&r, &e);
        assert!((f.slope - 0.7).abs() < 1e-12);
    }

    #[test]
    fn zero_signal_is_degenerate() {
        let f = DecayFit::exponential(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]);
        assert!(f.degenerate);
    }

    #[test]
    fn layer_decay_recovers_mode_rate() {
        let t: Vec<f64> = (0..40).map(|i| 1.0 + 0.05 * i as f64).collect();
        let v: Vec<f64> = t
            .iter()
            .map(|s| {
                let a = (0.4 + 0.3 * s) * (-s).exp();
                let b = (0.2 - 0.1 * s) * (-s).exp();
                let c = 0.05 * (1.0 + s) * (-2.0 * s).exp();
                (a * a + b * b + c * c).sqrt()
            })
            .collect();
        let f = DecayFit::layer_decay(&t, &v, 0.0);
        assert!(!f.degenerate && (f.slope - 1.0).abs() < 0.05, "{}", f.slope);
        assert!(DecayFit::layer_decay(&t, &vec![1e-20; t.len()], 1e-12).degenerate);
    }
}
