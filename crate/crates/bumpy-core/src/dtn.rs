//! Transparent top closure: the map from the velocity trace on a horizontal plane to the
//! traction of the decaying Stokes extension above it, one horizontal mode at a time.
//!
//! Above the plane, with `s` the height over it, mode `k != 0` of the extension reads
//! `v = (a + (-i k, |k|) V s) e^{-|k| s} e^{i k.x'}`, `q = 2 |k| V e^{-|k| s} e^{i k.x'}`,
//! `V = a_3 - i khat.a'`. The traction `-(d_s v - q e_3)` at `s = 0` equals `N(k) a`.

use crate::fft2::Fft2;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};

pub type Sym3 = [[C; 3]; 3];

const ZERO: C = C { re: 0.0, im: 0.0 };

/// Traction symbol `N(k)` acting on `(a_1, a_2, a_3)`.
pub fn traction_symbol(k1: f64, k2: f64) -> Sym3 {
    let kap = (k1 * k1 + k2 * k2).sqrt();
    if kap == 0.0 {
        return [[ZERO; 3]; 3];
    }
    let (e1, e2) = (k1 / kap, k2 / kap);
    let i = C::new(0.0, 1.0);
    let r = |x: f64| C::new(x, 0.0);
    [
        [r(kap * (1.0 + e1 * e1)), r(kap * e1 * e2), i * kap * e1],
        [r(kap * e1 * e2), r(kap * (1.0 + e2 * e2)), i * kap * e2],
        [-i * kap * e1, -i * kap * e2, r(2.0 * kap)],
    ]
}

/// Symbol acting on (tangential values half a cell below the plane, normal value on the plane),
/// obtained by eliminating the tangential trace on the plane with the one-sided flux
/// `beta (b - c)`, `beta = 2 / hz`.
pub fn discrete_top_symbol(k1: f64, k2: f64, hz: f64) -> Sym3 {
    let n = traction_symbol(k1, k2);
    let beta = 2.0 / hz;
    let kmat = tangential_resolvent(&n, beta);
    let mut m = [[ZERO; 3]; 3];
    for a in 0..2 {
        for b in 0..2 {
            m[a][b] = -beta * beta * kmat[a][b];
        }
        m[a][a] += beta;
        m[a][2] = beta * (kmat[a][0] * n[0][2] + kmat[a][1] * n[1][2]);
        m[2][a] = beta * (n[2][0] * kmat[0][a] + n[2][1] * kmat[1][a]);
    }
    let mut s = n[2][2];
    for a in 0..2 {
        for b in 0..2 {
            s -= n[2][a] * kmat[a][b] * n[b][2];
        }
    }
    m[2][2] = s;
    m
}

/// `(beta I + N_11)^{-1}`.
fn tangential_resolvent(n: &Sym3, beta: f64) -> [[C; 2]; 2] {
    let a = n[0][0] + beta;
    let b = n[0][1];
    let c = n[1][0];
    let d = n[1][1] + beta;
    let det = a * d - b * c;
    [[d / det, -b / det], [-c / det, a / det]]
}

/// Recovers the tangential trace on the plane from the values half a cell below and the normal value.
pub fn trace_from_top(k1: f64, k2: f64, hz: f64, c: [C; 2], w: C) -> [C; 3] {
    let n = traction_symbol(k1, k2);
    let beta = 2.0 / hz;
    let kmat = tangential_resolvent(&n, beta);
    let rhs = [beta * c[0] - n[0][2] * w, beta * c[1] - n[1][2] * w];
    [kmat[0][0] * rhs[0] + kmat[0][1] * rhs[1], kmat[1][0] * rhs[0] + kmat[1][1] * rhs[1], w]
}

/// Per-mode symbol table for a periodic `n x n` layer of period `lx`.
#[derive(Clone, Debug)]
pub struct DtnClosure {
    pub height: f64,
    pub n: usize,
    pub lx: f64,
    pub mode_cut: usize,
    /// Continuous traction symbol per FFT index `(m1, m2)`, `m1` fastest.
    pub symbols: Vec<Sym3>,
}

impl DtnClosure {
    pub fn wavevector(&self, m1: usize, m2: usize) -> (f64, f64) {
        let s = |m: usize| if m <= self.n / 2 { m as f64 } else { m as f64 - self.n as f64 };
        let f = 2.0 * std::f64::consts::PI / self.lx;
        (f * s(m1), f * s(m2))
    }
}

/// Builds the symbol table. Modes with a signed index beyond `mode_cut` in either direction are
/// given the zero-mode (free) rule.
pub fn build_dtn(height: f64, n: usize, lx: f64, mode_cut: usize) -> DtnClosure {
    let mut d = DtnClosure { height, n, lx, mode_cut: mode_cut.min(n / 2), symbols: Vec::with_capacity(n * n) };
    let cut = d.mode_cut as i64;
    for m2 in 0..n {
        for m1 in 0..n {
            let (k1, k2) = d.wavevector(m1, m2);
            let s = |m: usize| if m <= n / 2 { m as i64 } else { m as i64 - n as i64 };
            let sym = if s(m1).abs() > cut || s(m2).abs() > cut { [[ZERO; 3]; 3] } else { traction_symbol(k1, k2) };
            d.symbols.push(sym);
        }
    }
    d
}

/// Fourier coefficients of a velocity trace on the plane `x_3 = height`:
/// `v(x', height) = Re sum_k a_k e^{i k.x'}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TopTrace {
    pub height: f64,
    pub modes: Vec<TraceMode>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TraceMode {
    pub k: [f64; 2],
    pub re: [f64; 3],
    pub im: [f64; 3],
}

impl TraceMode {
    pub fn coeff(&self) -> [C; 3] {
        [C::new(self.re[0], self.im[0]), C::new(self.re[1], self.im[1]), C::new(self.re[2], self.im[2])]
    }
}

impl TopTrace {
    pub fn zero(height: f64) -> Self {
        TopTrace { height, modes: Vec::new() }
    }

    /// Mean (zero-mode) value of the trace.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for md in &self.modes {
            if md.k == [0.0, 0.0] {
                for c in 0..3 {
                    m[c] += md.re[c];
                }
            }
        }
        m
    }

    /// Decay factor `V(k) = a_3 - i khat.a'` per mode.
    pub fn vertical_amplitudes(&self) -> Vec<([f64; 2], C)> {
        self.modes
            .iter()
            .map(|md| {
                let a = md.coeff();
                let kap = (md.k[0].powi(2) + md.k[1].powi(2)).sqrt();
                let v = if kap == 0.0 {
                    ZERO
                } else {
                    a[2] - C::new(0.0, 1.0) * (md.k[0] / kap * a[0] + md.k[1] / kap * a[1])
                };
                (md.k, v)
            })
            .collect()
    }
}

/// Velocity, gradient (`grad[a][b] = d v_a / d x_b`) and pressure of the decaying extension on
/// one horizontal layer of cell centers `x0 + (i + 1/2) h`.
pub struct ExtensionLayer {
    pub vel: [Vec<f64>; 3],
    pub grad: [[Vec<f64>; 3]; 3],
    pub q: Vec<f64>,
}

impl TopTrace {
    /// Re-expresses the coefficients for a coordinate origin moved to `origin`.
    pub fn shift_origin(&mut self, origin: [f64; 2]) {
        for md in &mut self.modes {
            let ph = C::from_polar(1.0, -(md.k[0] * origin[0] + md.k[1] * origin[1]));
            let a = md.coeff();
            for c in 0..3 {
                let b = a[c] * ph;
                md.re[c] = b.re;
                md.im[c] = b.im;
            }
        }
    }

    /// Extension sampled on an `n x n` layer of period `lx` at height `z >= height`.
    pub fn extension_layer(&self, n: usize, lx: f64, x0: f64, z: f64) -> ExtensionLayer {
        let s = (z - self.height).max(0.0);
        let nn = n * n;
        let h = lx / n as f64;
        let i = C::new(0.0, 1.0);
        let mut vel = vec![vec![ZERO; nn]; 3];
        let mut grad = vec![vec![ZERO; nn]; 9];
        let mut q = vec![ZERO; nn];
        let tau = 2.0 * std::f64::consts::PI / lx;
        for md in &self.modes {
            let (k1, k2) = (md.k[0], md.k[1]);
            let m1 = ((k1 / tau).round() as i64).rem_euclid(n as i64) as usize;
            let m2 = ((k2 / tau).round() as i64).rem_euclid(n as i64) as usize;
            let id = m2 * n + m1;
            // first sample sits at x0 + h/2 in both directions
            let ph = C::from_polar(1.0, (k1 + k2) * (x0 + 0.5 * h));
            let a = md.coeff();
            let kap = (k1 * k1 + k2 * k2).sqrt();
            if kap == 0.0 {
                for c in 0..3 {
                    vel[c][id] += a[c] * ph;
                }
                continue;
            }
            let vv = a[2] - i * (k1 / kap * a[0] + k2 / kap * a[1]);
            let dec = (-kap * s).exp() * ph;
            let prof = [a[0] - i * k1 * vv * s, a[1] - i * k2 * vv * s, a[2] + kap * vv * s];
            let dprof = [-i * k1 * vv, -i * k2 * vv, kap * vv];
            for c in 0..3 {
                vel[c][id] += prof[c] * dec;
                grad[3 * c][id] += i * k1 * prof[c] * dec;
                grad[3 * c + 1][id] += i * k2 * prof[c] * dec;
                grad[3 * c + 2][id] += (dprof[c] - kap * prof[c]) * dec;
            }
            q[id] += 2.0 * kap * vv * dec;
        }
        let fft = Fft2::new(n);
        let mut real = |mut d: Vec<C>| -> Vec<f64> {
            fft.inverse(&mut d);
            d.iter().map(|z| z.re).collect()
        };
        let mut vel_r = vel.into_iter().map(&mut real);
        let vel = [vel_r.next().unwrap(), vel_r.next().unwrap(), vel_r.next().unwrap()];
        let mut g: Vec<Vec<f64>> = grad.into_iter().map(&mut real).collect();
        let mut row = || [g.remove(0), g.remove(0), g.remove(0)];
        let grad = [row(), row(), row()];
        let q = real(q);
        ExtensionLayer { vel, grad, q }
    }
}

/// Evaluates the decaying extension (velocity, pressure) at a point with `x_3 >= height`.
pub fn poisson_extension(trace: &TopTrace, x: [f64; 3]) -> ([f64; 3], f64) {
    let s = (x[2] - trace.height).max(0.0);
    let i = C::new(0.0, 1.0);
    let mut v = [ZERO; 3];
    let mut q = ZERO;
    for md in &trace.modes {
        let a = md.coeff();
        let (k1, k2) = (md.k[0], md.k[1]);
        let kap = (k1 * k1 + k2 * k2).sqrt();
        let ph = C::from_polar(1.0, k1 * x[0] + k2 * x[1]);
        if kap == 0.0 {
            for c in 0..3 {
                v[c] += a[c] * ph;
            }
            continue;
        }
        let vv = a[2] - i * (k1 / kap * a[0] + k2 / kap * a[1]);
        let dec = (-kap * s).exp();
        let f = ph * dec;
        v[0] += (a[0] - i * k1 * vv * s) * f;
        v[1] += (a[1] - i * k2 * vv * s) * f;
        v[2] += (a[2] + kap * vv * s) * f;
        q += 2.0 * kap * vv * f;
    }
    ([v[0].re, v[1].re, v[2].re], q.re)
}

/// Applies the discrete top symbol to real layer data: tangential components sampled at
/// staggered positions (shifted by `-h/2` along their own axis) and the normal component at
/// cell centers. Output is the per-point traction (to be multiplied by the face area).
pub struct TopOperator {
    pub n: usize,
    pub h: f64,
    pub hz: f64,
    fft: Fft2,
    /// Discrete symbol with the staggering phases folded in, per FFT index.
    table: Vec<Sym3>,
    /// Real diagonal of the symbol, per component and FFT index.
    pub diag: [Vec<f64>; 3],
}

impl TopOperator {
    pub fn new(closure: &DtnClosure, h: f64, hz: f64) -> Self {
        let n = closure.n;
        let fft = Fft2::new(n);
        let mut table = Vec::with_capacity(n * n);
        let mut diag = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
        let cut = closure.mode_cut as i64;
        for m2 in 0..n {
            for m1 in 0..n {
                let (k1, k2) = closure.wavevector(m1, m2);
                let mut m = if fft.signed(m1).abs() > cut || fft.signed(m2).abs() > cut {
                    discrete_top_symbol(0.0, 0.0, hz)
                } else {
                    discrete_top_symbol(k1, k2, hz)
                };
                if fft.is_nyquist(m1) || fft.is_nyquist(m2) {
                    for a in 0..3 {
                        for b in 0..3 {
                            if a != b {
                                m[a][b] = ZERO;
                            }
                        }
                        m[a][a] = C::new(m[a][a].re, 0.0);
                    }
                } else {
                    // sample offsets: component 0 at -h/2 e1, component 1 at -h/2 e2, normal at 0
                    let off = [C::from_polar(1.0, k1 * h / 2.0), C::from_polar(1.0, k2 * h / 2.0), C::new(1.0, 0.0)];
                    for a in 0..3 {
                        for b in 0..3 {
                            m[a][b] = m[a][b] * off[b] * off[a].conj();
                        }
                    }
                }
                for c in 0..3 {
                    diag[c][m2 * n + m1] = m[c][c].re;
                }
                table.push(m);
            }
        }
        TopOperator { n, h, hz, fft, table, diag }
    }

    pub fn apply(&self, input: [&[f64]; 3], out: [&mut [f64]; 3]) {
        let nn = self.n * self.n;
        let spec: Vec<Vec<C>> = input
            .iter()
            .map(|v| {
                let mut d: Vec<C> = v.iter().map(|x| C::new(*x, 0.0)).collect();
                self.fft.forward(&mut d);
                d
            })
            .collect();
        let scale = 1.0 / nn as f64;
        let mut res = vec![vec![ZERO; nn]; 3];
        for m in 0..nn {
            let t = &self.table[m];
            let a = [spec[0][m], spec[1][m], spec[2][m]];
            for r in 0..3 {
                res[r][m] = (t[r][0] * a[0] + t[r][1] * a[1] + t[r][2] * a[2]) * scale;
            }
        }
        for (r, o) in res.iter_mut().zip(out) {
            self.fft.inverse(r);
            for (oi, ri) in o.iter_mut().zip(r.iter()) {
                *oi = ri.re;
            }
        }
    }

    /// Commutator `T(x_g v) - x_g T(v)` with the unwrapped horizontal coordinate `x_g`, i.e. the
    /// multiplier `-i dM/dk_g` (central differences in `k`, symmetric at `k = 0`). Modes beyond
    /// the cut and Nyquist modes contribute nothing.
    pub fn commutator(&self, closure: &DtnClosure, g: usize, input: [&[f64]; 3], out: [&mut [f64]; 3]) {
        let n = self.n;
        let nn = n * n;
        let cut = closure.mode_cut as i64;
        let dk = 1e-5 * 2.0 * std::f64::consts::PI / closure.lx;
        let spec: Vec<Vec<C>> = input
            .iter()
            .map(|v| {
                let mut d: Vec<C> = v.iter().map(|x| C::new(*x, 0.0)).collect();
                self.fft.forward(&mut d);
                d
            })
            .collect();
        let scale = 1.0 / nn as f64;
        let mut res = vec![vec![ZERO; nn]; 3];
        let mi = C::new(0.0, -1.0);
        for m2 in 0..n {
            for m1 in 0..n {
                if self.fft.signed(m1).abs() > cut
                    || self.fft.signed(m2).abs() > cut
                    || self.fft.is_nyquist(m1)
                    || self.fft.is_nyquist(m2)
                {
                    continue;
                }
                let (k1, k2) = closure.wavevector(m1, m2);
                let (mut kp, mut km) = ([k1, k2], [k1, k2]);
                kp[g] += dk;
                km[g] -= dk;
                let sp = discrete_top_symbol(kp[0], kp[1], self.hz);
                let sm = discrete_top_symbol(km[0], km[1], self.hz);
                let off = [C::from_polar(1.0, k1 * self.h / 2.0), C::from_polar(1.0, k2 * self.h / 2.0), C::new(1.0, 0.0)];
                let id = m2 * n + m1;
                let a = [spec[0][id], spec[1][id], spec[2][id]];
                for r in 0..3 {
                    let mut s = ZERO;
                    for b in 0..3 {
                        let d = (sp[r][b] - sm[r][b]) / (2.0 * dk);
                        s += mi * d * off[b] * off[r].conj() * a[b];
                    }
                    res[r][id] = s * scale;
                }
            }
        }
        for (r, o) in res.iter_mut().zip(out) {
            self.fft.inverse(r);
            for (oi, ri) in o.iter_mut().zip(r.iter()) {
                *oi = ri.re;
            }
        }
    }

    /// Fourier trace on the plane from the top-layer tangential values and normal values.
    pub fn trace(&self, closure: &DtnClosure, input: [&[f64]; 3]) -> TopTrace {
        let n = self.n;
        let nn = n * n;
        let spec: Vec<Vec<C>> = input
            .iter()
            .map(|v| {
                let mut d: Vec<C> = v.iter().map(|x| C::new(*x / nn as f64, 0.0)).collect();
                self.fft.forward(&mut d);
                d
            })
            .collect();
        let mut modes = Vec::with_capacity(nn);
        for m2 in 0..n {
            for m1 in 0..n {
                let id = m2 * n + m1;
                let (k1, k2) = closure.wavevector(m1, m2);
                let nyq = self.fft.is_nyquist(m1) || self.fft.is_nyquist(m2);
                let (c0, c1) = if nyq {
                    (spec[0][id], spec[1][id])
                } else {
                    (spec[0][id] * C::from_polar(1.0, k1 * self.h / 2.0), spec[1][id] * C::from_polar(1.0, k2 * self.h / 2.0))
                };
                let w = spec[2][id];
                let b = if nyq {
                    let nsym = traction_symbol(k1, k2);
                    let beta = 2.0 / self.hz;
                    [c0 * beta / (beta + nsym[0][0].re), c1 * beta / (beta + nsym[1][1].re), w]
                } else {
                    trace_from_top(k1, k2, self.hz, [c0, c1], w)
                };
                if b.iter().all(|z| z.norm() < 1e-300) {
                    continue;
                }
                modes.push(TraceMode {
                    k: [k1, k2],
                    re: [b[0].re, b[1].re, b[2].re],
                    im: [b[0].im, b[1].im, b[2].im],
                });
            }
        }
        TopTrace { height: closure.height, modes }
    }
}
