//! Regularized point-force responses of the Stokes system over a rough wall with a
//! transparent top, and power-law fits of their decay.

use crate::error::{BumpyError, Result};
use crate::field::StaggeredField;
use crate::fit::DecayFit;
use crate::geometry::DiscreteDomain;
use crate::stokes::{zero_wall, SolverConfig, StokesData, StokesSystem, TopKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Smooth bump supported in the unit ball.
fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(3)
    }
}

/// Solver settings of the probe solves.
pub fn green_config() -> SolverConfig {
    SolverConfig { tol: 1e-9, tol_div: 1e-10, max_iter: 100_000, mode_cut: None }
}

/// Operator wrapper reused across sources.
pub struct GreenSolver<'a> {
    pub domain: &'a DiscreteDomain,
    pub system: StokesSystem,
    distance: Vec<f64>,
}

/// Responses to unit forces `e_1, e_2, e_3` smeared over a ball about `y`.
#[derive(Clone, Debug)]
pub struct GreenColumn {
    pub y: [f64; 3],
    pub radius: f64,
    /// Distance from the source to the rough boundary.
    pub delta: f64,
    /// Velocity and pressure per force direction.
    pub responses: [StaggeredField; 3],
}

impl<'a> GreenSolver<'a> {
    pub fn new(domain: &'a DiscreteDomain, cfg: SolverConfig) -> Result<GreenSolver<'a>> {
        let system = StokesSystem::new(domain, TopKind::Transparent, cfg)?;
        Ok(GreenSolver { domain, system, distance: domain.distance_to_boundary() })
    }

    /// Distance to the boundary at the cell containing `y`.
    pub fn delta(&self, y: [f64; 3]) -> f64 {
        let g = &self.domain.grid;
        let (i, j, k) = g.locate(y);
        self.distance[g.idx(i, j, k)]
    }

    /// Normalized smeared force of total `f` about `y`, volume scaled.
    pub fn smeared_load(&self, y: [f64; 3], radius: f64, f: [f64; 3]) -> [Vec<f64>; 3] {
        let g = self.domain.grid;
        let lx = g.lx;
        let dist = move |x: [f64; 3]| {
            let d = |a: f64, b: f64| {
                let t = (a - b).rem_euclid(lx);
                t.min(lx - t)
            };
            (d(x[0], y[0]).powi(2) + d(x[1], y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
        };
        let mut load = self.system.pointwise_load(|x| [bump(dist(x) / radius); 3]);
        for c in 0..3 {
            let s: f64 = load[c].iter().sum();
            let scale = if s > 0.0 { f[c] / s } else { 0.0 };
            load[c].iter_mut().for_each(|v| *v *= scale);
        }
        load
    }

    fn check_source(&self, y: [f64; 3], radius: f64) -> Result<f64> {
        let g = &self.domain.grid;
        if radius < 2.0 * g.h.max(g.hz) * (1.0 - 1e-12) {
            return Err(BumpyError::Invalid(format!("regularization radius {radius} below two cells")));
        }
        if y[2] + radius >= g.z1() {
            return Err(BumpyError::Invalid(format!("source support reaches the top at height {}", y[2])));
        }
        let delta = self.delta(y);
        if delta < 2.0 * radius {
            return Err(BumpyError::SourceTooCloseToBoundary(delta));
        }
        Ok(delta)
    }

    /// Response to a sum of smeared forces `(y, f)` sharing one radius.
    pub fn response(&self, sources: &[([f64; 3], [f64; 3])], radius: f64) -> Result<StaggeredField> {
        let g = self.domain.grid;
        let mut load = [vec![0.0; g.nfaces(0)], vec![0.0; g.nfaces(1)], vec![0.0; g.nfaces(2)]];
        for &(y, f) in sources {
            self.check_source(y, radius)?;
            let l = self.smeared_load(y, radius, f);
            for c in 0..3 {
                load[c].iter_mut().zip(&l[c]).for_each(|(a, b)| *a += b);
            }
        }
        let (mut u, _) = self.system.solve(&StokesData { wall: &zero_wall, load: Some(&load), div: None }, None)?;
        normalize_pressure(&mut u, &self.domain.fluid);
        Ok(u)
    }

    pub fn column(&self, y: [f64; 3], radius: f64) -> Result<GreenColumn> {
        let delta = self.check_source(y, radius)?;
        let responses: Vec<StaggeredField> = (0..3)
            .into_par_iter()
            .map(|c| {
                let mut f = [0.0; 3];
                f[c] = 1.0;
                self.response(&[(y, f)], radius)
            })
            .collect::<Result<_>>()?;
        let [a, b, c]: [StaggeredField; 3] = responses.try_into().expect("three responses");
        Ok(GreenColumn { y, radius, delta, responses: [a, b, c] })
    }

    /// `G(x, y)` with both arguments smeared by the same bump: `m[a][b]` is component `a`
    /// of the response to force `e_b`.
    pub fn evaluate(&self, col: &GreenColumn, x: [f64; 3]) -> [[f64; 3]; 3] {
        let w = self.smeared_load(x, col.radius, [1.0; 3]);
        let mut m = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] = w[a].iter().zip(&col.responses[b].u[a]).map(|(p, q)| p * q).sum();
            }
        }
        m
    }
}

/// Zero pressure mean over the fluid, then zero average over the top cell layer.
fn normalize_pressure(u: &mut StaggeredField, fluid: &[bool]) {
    let g = u.grid;
    let (s, n) = u.p.iter().zip(fluid).filter(|(_, f)| **f).fold((0.0, 0usize), |(s, n), (p, _)| (s + p, n + 1));
    if n == 0 {
        return;
    }
    let mean = s / n as f64;
    let top = (g.nz - 1) * g.layer();
    let slab = u.p[top..].iter().sum::<f64>() / g.layer() as f64 - mean;
    for (p, f) in u.p.iter_mut().zip(fluid) {
        if *f {
            *p -= mean + slab;
        }
    }
}

/// Free-space Stokeslet (Oseen tensor) for unit viscosity.
pub fn stokeslet(r: [f64; 3]) -> [[f64; 3]; 3] {
    let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let mut m = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            m[a][b] = (if a == b { 1.0 / d } else { 0.0 } + r[a] * r[b] / (d * d * d)) / (8.0 * PI);
        }
    }
    m
}

/// Free-space Stokeslet pressure for a unit force along each axis.
pub fn stokeslet_pressure(r: [f64; 3]) -> [f64; 3] {
    let d = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    r.map(|v| v / (4.0 * PI * d * d * d))
}

/// Gauss-Legendre nodes and weights on [0, 1].
fn gauss01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        out.push((0.5 * (1.0 - x), 1.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Velocity (3x3) and pressure (3) kernels packed as 12 numbers.
fn kernel(r: [f64; 3]) -> [f64; 12] {
    let g = stokeslet(r);
    let p = stokeslet_pressure(r);
    let mut out = [0.0; 12];
    for a in 0..3 {
        for b in 0..3 {
            out[3 * a + b] = g[a][b];
        }
        out[9 + a] = p[a];
    }
    out
}

fn add(acc: &mut [f64; 12], v: [f64; 12], w: f64) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += w * b);
}

/// Laterally periodic Stokeslet (period `lx` in both directions) with its horizontal mean
/// removed at every height, in free space. Lattice sums run over `|n|_inf <= 2 * images`.
pub struct PeriodicStokeslet {
    pub lx: f64,
    pub images: i64,
}

impl PeriodicStokeslet {
    pub fn new(lx: f64, images: i64) -> Self {
        PeriodicStokeslet { lx, images }
    }

    /// Sum over the image lattice of `k(x + nL) - k(nL)`, without the `n = 0` term.
    fn lattice(&self, x: [f64; 3], n: i64) -> [f64; 12] {
        let mut acc = [0.0; 12];
        for i in -n..=n {
            for j in -n..=n {
                if i == 0 && j == 0 {
                    continue;
                }
                let (sx, sy) = (i as f64 * self.lx, j as f64 * self.lx);
                add(&mut acc, kernel([x[0] + sx, x[1] + sy, x[2]]), 1.0);
                add(&mut acc, kernel([sx, sy, 0.0]), -1.0);
            }
        }
        acc
    }

    /// Integral of the kernel over the period cell centered at the origin, in polar form.
    fn central_integral(&self, z: f64) -> [f64; 12] {
        let mut acc = [0.0; 12];
        let half = 0.5 * self.lx;
        let nt = 64;
        let rq = gauss01(48);
        for side in 0..4 {
            // triangle from the origin to one side of the square: theta in [-pi/4, pi/4]
            for &(tu, tw) in &gauss01(nt) {
                let th = -PI / 4.0 + tu * PI / 2.0 + side as f64 * PI / 2.0;
                let rmax = half / (th - side as f64 * PI / 2.0).cos();
                let (c, s) = (th.cos(), th.sin());
                for &(ru, rw) in &rq {
                    // cluster nodes towards the origin
                    let rho = rmax * ru * ru;
                    let jac = rmax * 2.0 * ru;
                    add(&mut acc, kernel([rho * c, rho * s, z]), tw * (PI / 2.0) * rw * jac * rho);
                }
            }
        }
        acc
    }

    /// Integral over one shifted period cell, by tensor Gauss rules.
    fn cell_integral(&self, z: f64, cx: f64, cy: f64, q: &[(f64, f64)]) -> [f64; 12] {
        let mut acc = [0.0; 12];
        for &(u, wu) in q {
            for &(v, wv) in q {
                let x = cx + (u - 0.5) * self.lx;
                let y = cy + (v - 0.5) * self.lx;
                add(&mut acc, kernel([x, y, z]), wu * wv * self.lx * self.lx);
            }
        }
        acc
    }

    /// Horizontal mean at height `z` of the lattice-summed kernel.
    fn layer_mean(&self, z: f64, n: i64) -> [f64; 12] {
        let area = self.lx * self.lx;
        let mut acc = self.central_integral(z);
        let (near, far) = (gauss01(16), gauss01(6));
        for i in -n..=n {
            for j in -n..=n {
                if i == 0 && j == 0 {
                    continue;
                }
                let (sx, sy) = (i as f64 * self.lx, j as f64 * self.lx);
                let q = if i.abs().max(j.abs()) <= 2 { &near } else { &far };
                add(&mut acc, self.cell_integral(z, sx, sy, q), 1.0);
                add(&mut acc, kernel([sx, sy, 0.0]), -area);
            }
        }
        acc.map(|v| v / area)
    }

    /// Velocity tensor and pressure vector at offset `x` from the source.
    pub fn eval(&self, x: [f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
        let mut v = kernel(x);
        add(&mut v, self.correction(x), 1.0);
        unpack(v)
    }

    /// Periodic part only: `eval(x)` minus the free-space Stokeslet.
    pub fn regular_part(&self, x: [f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
        unpack(self.correction(x))
    }

    /// Truncated sums err like `1/N`; extrapolate from `N` and `2N` images.
    fn correction(&self, x: [f64; 3]) -> [f64; 12] {
        let at = |n: i64| {
            let mut v = self.lattice(x, n);
            add(&mut v, self.layer_mean(x[2], n), -1.0);
            v
        };
        let (a, b) = (at(self.images), at(2 * self.images));
        let mut out = [0.0; 12];
        for i in 0..12 {
            out[i] = 2.0 * b[i] - a[i];
        }
        out
    }
}

fn unpack(v: [f64; 12]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut g = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            g[a][b] = v[3 * a + b];
        }
    }
    (g, [v[9], v[10], v[11]])
}

/// Removes the horizontal mean of every fully fluid layer: the periodic zero mode carried by
/// the lateral images.
pub fn without_layer_means(f: &StaggeredField, first_open_layer: usize) -> StaggeredField {
    let g = f.grid;
    let l = g.layer();
    let mut out = f.clone();
    for c in 0..3 {
        let layers = if c == 2 { g.nz + 1 } else { g.nz };
        for k in first_open_layer.min(layers)..layers {
            let s = &mut out.u[c][k * l..(k + 1) * l];
            let m = s.iter().sum::<f64>() / l as f64;
            s.iter_mut().for_each(|v| *v -= m);
        }
    }
    for k in first_open_layer.min(g.nz)..g.nz {
        let s = &mut out.p[k * l..(k + 1) * l];
        let m = s.iter().sum::<f64>() / l as f64;
        s.iter_mut().for_each(|v| *v -= m);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenMode {
    Velocity,
    Gradient,
    Pressure,
}

/// Samples along horizontal rays from the source at height `height`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenRays {
    pub height: f64,
    pub distance: Vec<f64>,
    pub velocity: Vec<f64>,
    pub gradient: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl GreenRays {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("distance,G,gradG,Pi\n");
        for i in 0..self.distance.len() {
            s += &format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.distance[i], self.velocity[i], self.gradient[i], self.pressure[i]
            );
        }
        s
    }
}

/// Frobenius norms of `G`, `grad_x G` and `Pi` at cell centers on the `+e_1` and `+e_2`
/// rays from the source (at height `height`), averaged over the rays, for distances in
/// `[r_min, r_max]`. The per-layer horizontal means are removed and the regular part of the
/// periodic image lattice is subtracted, which leaves the response of an isolated source.
pub fn sample_rays(domain: &DiscreteDomain, col: &GreenColumn, height: f64, r_min: f64, r_max: f64) -> GreenRays {
    let g = domain.grid;
    let open = domain.first_open_layer();
    let fields: Vec<StaggeredField> = col.responses.iter().map(|f| without_layer_means(f, open)).collect();
    let lattice = PeriodicStokeslet::new(g.lx, 16);
    let (iy, jy, _) = g.locate(col.y);
    let (_, _, k) = g.locate([col.y[0], col.y[1], height]);
    let c0 = g.cell_center(iy, jy, k);
    let mut out = GreenRays { height: c0[2], distance: vec![], velocity: vec![], gradient: vec![], pressure: vec![] };
    let fd = 1e-4;
    for step in 1..g.n / 2 {
        let mut cells = Vec::new();
        for (i, j) in [((iy + step) % g.n, jy), (iy, (jy + step) % g.n)] {
            let x = g.cell_center(i, j, k);
            let wrap = |t: f64| t - g.lx * (t / g.lx).round();
            let off = [wrap(x[0] - col.y[0]), wrap(x[1] - col.y[1]), x[2] - col.y[2]];
            cells.push((i, j, off));
        }
        let dist = cells.iter().map(|c| norm(c.2)).sum::<f64>() / 2.0;
        if dist < r_min || dist > r_max {
            continue;
        }
        let mut acc = [0.0; 3];
        for &(i, j, off) in &cells {
            let (reg, reg_p) = lattice.regular_part(off);
            let mut dreg = [[[0.0; 3]; 3]; 3];
            for d in 0..3 {
                let (mut xp, mut xm) = (off, off);
                xp[d] += fd;
                xm[d] -= fd;
                let (gp, gm) = (lattice.regular_part(xp).0, lattice.regular_part(xm).0);
                for a in 0..3 {
                    for b in 0..3 {
                        dreg[b][a][d] = (gp[a][b] - gm[a][b]) / (2.0 * fd);
                    }
                }
            }
            let (mut v, mut gr, mut p) = (0.0, 0.0, 0.0);
            for (b, f) in fields.iter().enumerate() {
                let u = f.cell_velocity(i, j, k);
                let du = f.cell_gradient(i, j, k);
                for a in 0..3 {
                    v += (u[a] - reg[a][b]).powi(2);
                    for d in 0..3 {
                        gr += (du[a][d] - dreg[b][a][d]).powi(2);
                    }
                }
                p += (f.p[g.idx(i, j, k)] - reg_p[b]).powi(2);
            }
            acc[0] += v.sqrt() / 2.0;
            acc[1] += gr.sqrt() / 2.0;
            acc[2] += p.sqrt() / 2.0;
        }
        out.distance.push(dist);
        out.velocity.push(acc[0]);
        out.gradient.push(acc[1]);
        out.pressure.push(acc[2]);
    }
    out
}

fn norm(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Power-law fit of one quantity along the rays; needs at least four distances spanning a
/// factor 1.4.
pub fn decay_fit(rays: &GreenRays, mode: GreenMode) -> Result<DecayFit> {
    let n = rays.distance.len();
    if n < 4 || rays.distance[n - 1] < 1.4 * rays.distance[0] {
        return Err(BumpyError::InsufficientRange(format!(
            "{} samples over [{:.3}, {:.3}]",
            n,
            rays.distance.first().copied().unwrap_or(0.0),
            rays.distance.last().copied().unwrap_or(0.0)
        )));
    }
    let v = match mode {
        GreenMode::Velocity => &rays.velocity,
        GreenMode::Gradient => &rays.gradient,
        GreenMode::Pressure => &rays.pressure,
    };
    Ok(DecayFit::power_law(&rays.distance, v))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenSummary {
    pub y: [f64; 3],
    pub radius: f64,
    pub delta: f64,
    pub velocity_exponent: f64,
    pub gradient_exponent: f64,
    pub pressure_exponent: f64,
}

pub fn summarize(col: &GreenColumn, rays: &GreenRays) -> Result<GreenSummary> {
    Ok(GreenSummary {
        y: col.y,
        radius: col.radius,
        delta: col.delta,
        velocity_exponent: decay_fit(rays, GreenMode::Velocity)?.slope,
        gradient_exponent: decay_fit(rays, GreenMode::Gradient)?.slope,
        pressure_exponent: decay_fit(rays, GreenMode::Pressure)?.slope,
    })
}
