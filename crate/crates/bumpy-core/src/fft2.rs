//! Square periodic 2D FFTs on `i`-fastest layers.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

#[derive(Clone)]
pub struct Fft2 {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut p = FftPlanner::new();
        Fft2 { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) }
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        plan.process(data);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = data[j * n + i];
            }
            plan.process(&mut col);
            for j in 0..n {
                data[j * n + i] = col[j];
            }
        }
    }

    /// `F(m) = sum_x f(x) exp(-2 pi i m.x / n)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd)
    }

    /// Unnormalized inverse.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv)
    }

    /// Signed mode number for FFT index `m`.
    pub fn signed(&self, m: usize) -> i64 {
        if m <= self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        self.n % 2 == 0 && m == self.n / 2
    }
}
