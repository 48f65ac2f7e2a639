//! First- and second-order boundary-layer correctors over a periodic rough wall.
//!
//! Second-order correctors with tangential growth are stored as
//! `scale * x_axis * v1 + periodic`, where `v1` is the first-order corrector named by
//! [`GrowthTerm::source`] and `periodic` holds every other term.

use crate::bogovskii::build_inverse;
use crate::dtn::{poisson_extension, TopTrace, TraceMode};
use crate::error::{BumpyError, Result};
use crate::fft2::Fft2;
use crate::field::StaggeredField;
use crate::fit::DecayFit;
use crate::geometry::{DiscreteDomain, VoxelIndicator};
use crate::grid::Grid;
use crate::polynomials::NoSlipPolynomial;
use crate::stokes::{zero_wall, SolveStats, SolverConfig, StokesData, StokesSystem, TopKind};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// `6t^5 - 15t^4 + 10t^3` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// 1 below 3, 0 above 4.
pub fn eta_minus(t: f64) -> f64 {
    1.0 - smoothstep(t - 3.0)
}

/// 0 below 1/2, 1 above 1.
pub fn eta_plus(t: f64) -> f64 {
    smoothstep(2.0 * t - 1.0)
}

/// Profile of the constant-flux cutoff: 0 below 0, 1 above 1.
pub fn chi_profile(t: f64) -> f64 {
    smoothstep(t)
}

/// Solver settings used for every corrector solve.
pub fn corrector_config() -> SolverConfig {
    SolverConfig { tol: 1e-10, tol_div: 1e-11, max_iter: 100_000, mode_cut: None }
}

#[derive(Clone)]
pub struct Corrector1 {
    pub j: u8,
    pub field: StaggeredField,
    pub fluid: Vec<bool>,
    /// Trace on the top plane in absolute coordinates; extends the field above the channel.
    pub top_trace: TopTrace,
    /// Trace just above the roughness.
    pub fourier_trace: TopTrace,
    pub alpha: [f64; 3],
    pub decay_rate: Option<f64>,
    /// `int (|grad v|^2 + q^2)` over one period column, including the part above the channel.
    pub column_energy: f64,
    pub noslip_residual: f64,
    pub stats: SolveStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Corrector1Meta {
    pub j: u8,
    pub alpha: [f64; 3],
    pub decay_rate: Option<f64>,
    pub column_energy: f64,
    pub noslip_residual: f64,
    pub stats: SolveStats,
    pub top_trace: TopTrace,
    pub fourier_trace: TopTrace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthTerm {
    pub scale: f64,
    /// Horizontal axis (0 or 1) of the growing coordinate.
    pub axis: usize,
    /// Index of the first-order corrector being multiplied.
    pub source: u8,
}

/// Growth term of the second-order corrector `j`, if any.
pub fn growth_term(j: u8) -> Option<GrowthTerm> {
    match j {
        1 => Some(GrowthTerm { scale: 1.0, axis: 1, source: 1 }),
        3 => Some(GrowthTerm { scale: 1.0, axis: 0, source: 2 }),
        5 => Some(GrowthTerm { scale: -2.0, axis: 0, source: 1 }),
        6 => Some(GrowthTerm { scale: -2.0, axis: 1, source: 2 }),
        _ => None,
    }
}

pub struct Corrector2Parts {
    /// Velocity of the vertical cutoff terms.
    pub vertical: StaggeredField,
    /// `d * eta_plus`.
    pub divergence_corrector: StaggeredField,
    /// Volume-weighted divergence left after the growth, vertical and `d` terms.
    pub residual_divergence: Vec<f64>,
    /// Integral of the residual divergence.
    pub chi_constant: f64,
    /// Height where the flux cutoff starts rising: the first fully fluid layer, or 0.
    pub chi_start: f64,
    pub bogovskii: StaggeredField,
    /// Everything periodic except the vertical terms, with the remainder pressure.
    pub remainder: StaggeredField,
    /// Upper end of the region handed to the divergence inverse.
    pub bogovskii_top: f64,
    /// Largest `|D|` (per unit volume) outside that region.
    pub leak: f64,
}

impl Corrector2Parts {
    /// Value of the flux cutoff at height `z`.
    pub fn chi(&self, grid: &Grid, z: f64) -> f64 {
        self.chi_constant / (grid.lx * grid.lx) * chi_profile(z - self.chi_start)
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Corrector2Norms {
    pub remainder_gradient: f64,
    pub remainder_pressure: f64,
    pub bogovskii_gradient: f64,
    pub divergence_corrector_gradient: f64,
    pub chi_constant: f64,
}

pub struct Corrector2 {
    pub j: u8,
    pub growth: Option<GrowthTerm>,
    pub periodic: StaggeredField,
    pub fluid: Vec<bool>,
    pub top_trace: TopTrace,
    pub parts: Option<Corrector2Parts>,
    pub norms: Corrector2Norms,
    pub noslip_residual: f64,
    pub divergence_residual: f64,
    pub momentum_residual: f64,
    pub stats: SolveStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Corrector2Meta {
    pub j: u8,
    pub growth: Option<GrowthTerm>,
    pub norms: Corrector2Norms,
    pub noslip_residual: f64,
    pub divergence_residual: f64,
    pub momentum_residual: f64,
    pub stats: SolveStats,
    pub top_trace: TopTrace,
    pub bogovskii_top: Option<f64>,
    pub leak: Option<f64>,
}

/// Transparent-top system shared by all corrector solves on one domain.
pub struct LayerSolver<'a> {
    pub domain: &'a DiscreteDomain,
    pub system: StokesSystem,
}

pub fn solve_bl1(j: u8, domain: &DiscreteDomain) -> Result<Corrector1> {
    LayerSolver::new(domain, corrector_config())?.solve_bl1(j, None)
}

pub fn solve_bl2(j: u8, domain: &DiscreteDomain, correctors1: &[Corrector1]) -> Result<Corrector2> {
    LayerSolver::new(domain, corrector_config())?.solve_bl2(j, correctors1)
}

fn poly(degree: u8, j: u8) -> Result<NoSlipPolynomial> {
    NoSlipPolynomial::new(degree, j)
}

impl<'a> LayerSolver<'a> {
    pub fn new(domain: &'a DiscreteDomain, cfg: SolverConfig) -> Result<Self> {
        if !domain.periodic {
            return Err(BumpyError::NonPeriodicDomain);
        }
        let system = StokesSystem::new(domain, TopKind::Transparent, cfg)?;
        Ok(LayerSolver { domain, system })
    }

    pub fn grid(&self) -> Grid {
        self.system.grid
    }

    pub fn solve_bl1(&self, j: u8, guess: Option<&StaggeredField>) -> Result<Corrector1> {
        let p = poly(1, j)?;
        let wall = move |x: [f64; 3]| p.velocity(x).map(|v| -v);
        let data = StokesData { wall: &wall, load: None, div: None };
        let (field, stats) = self.system.solve(&data, guess)?;
        let noslip = self.system.residual_report(&field, &data).noslip;
        let top_trace = self.system.top_trace(&field).expect("transparent top");
        let fourier_trace = layer_trace(self.domain, &field, trace_height(self.domain));
        let alpha = fourier_trace.mean();
        let column_energy = column_energy(self.domain, &field, &top_trace, 0.0);
        let mut c = Corrector1 {
            j,
            field,
            fluid: self.domain.fluid.clone(),
            top_trace,
            fourier_trace,
            alpha,
            decay_rate: None,
            column_energy,
            noslip_residual: noslip,
            stats,
        };
        if let Ok(p) = decay_profile(&c) {
            if !p.gradient_fit.degenerate {
                c.decay_rate = Some(p.gradient_fit.slope);
            }
        }
        Ok(c)
    }

    pub fn solve_bl2(&self, j: u8, correctors1: &[Corrector1]) -> Result<Corrector2> {
        let p2 = poly(2, j)?;
        let sys = &self.system;
        let g = sys.grid;
        let Some(gt) = growth_term(j) else {
            let wall = move |x: [f64; 3]| p2.velocity(x).map(|v| -v);
            let data = StokesData { wall: &wall, load: None, div: None };
            let (mut field, stats) = sys.solve(&data, None)?;
            let rep = sys.residual_report(&field, &data);
            // the top closure pins the pressure constant; residuals are taken before the shift
            normalize_pressure(self.domain, &mut field);
            let top_trace = sys.top_trace(&field).expect("transparent top");
            let norms = Corrector2Norms {
                remainder_gradient: column_energy(self.domain, &field, &top_trace, 0.0).sqrt(),
                ..Default::default()
            };
            return Ok(Corrector2 {
                j,
                growth: None,
                periodic: field,
                fluid: self.domain.fluid.clone(),
                top_trace,
                parts: None,
                norms,
                noslip_residual: rep.noslip,
                divergence_residual: rep.divergence,
                momentum_residual: rep.momentum,
                stats,
            });
        };
        let c1 = correctors1
            .iter()
            .find(|c| c.j == gt.source)
            .ok_or(BumpyError::MissingCorrector1(gt.source))?;
        if c1.field.grid != g {
            return Err(BumpyError::Invalid("first-order corrector lives on another grid".into()));
        }
        let quad = matches!(j, 5 | 6);
        if quad && g.z1() < 4.0 {
            return Err(BumpyError::Invalid("second-order correctors 5 and 6 need a top at height >= 4".into()));
        }
        let (s, ax) = (gt.scale, gt.axis);
        let alpha_g = c1.alpha[ax];
        let vert = move |z: f64| -s * alpha_g * z * eta_plus(z) - if quad { z * z * eta_minus(z) } else { 0.0 };
        let wall_v = move |x: [f64; 3]| [0.0, 0.0, vert(x[2])];
        let mut vertical = StaggeredField::zeros(g);
        for k in 0..=g.nz {
            let w = vert(g.z0 + k as f64 * g.hz);
            for id in k * g.layer()..(k + 1) * g.layer() {
                vertical.u[2][id] = w;
            }
        }

        // divergence of the growth and vertical terms
        let p1 = poly(1, gt.source)?;
        let wall1 = move |x: [f64; 3]| p1.velocity(x).map(|v| -v);
        let (mut gu, mut gp) = sys.growth_residual_fields(ax, &c1.field, &wall1);
        gu.iter_mut().for_each(|a| a.iter_mut().for_each(|v| *v *= s));
        gp.iter_mut().for_each(|v| *v *= s);
        fn none<'w>(w: &'w (dyn Fn([f64; 3]) -> [f64; 3] + Sync)) -> StokesData<'w> {
            StokesData { wall: w, load: None, div: None }
        }
        let (_, vp) = sys.residual_fields(&vertical, &none(&wall_v));
        let vol = g.cell_volume();
        let mut dres: Vec<f64> = gp.iter().zip(&vp).map(|(a, b)| -(a + b)).collect();

        let (dfield, target) = divergence_corrector(self.domain, c1, gt);
        for (id, t) in target.iter().enumerate() {
            let (_, _, k) = g.ijk(id);
            dres[id] -= vol * eta_plus(g.cell_center(0, 0, k)[2]) * t;
        }

        let ztop = if quad { g.z1().min(4.5) } else { 2.0 };
        let region: Vec<bool> = (0..g.ncells())
            .map(|id| self.domain.fluid[id] && g.cell_center(0, 0, g.ijk(id).2)[2] < ztop)
            .collect();
        let mut leak: f64 = 0.0;
        let mut a_const = 0.0;
        for id in 0..g.ncells() {
            if region[id] {
                a_const += dres[id];
            } else if self.domain.fluid[id] {
                leak = leak.max(dres[id].abs() / vol);
            }
        }
        let chi_start = (g.z0 + self.domain.first_open_layer() as f64 * g.hz).max(0.0);
        let chi = move |z: f64| a_const / (g.lx * g.lx) * chi_profile(z - chi_start);
        let mut f = vec![0.0; g.ncells()];
        for id in 0..g.ncells() {
            if region[id] {
                let (_, _, k) = g.ijk(id);
                let (zl, zh) = (g.z0 + k as f64 * g.hz, g.z0 + (k + 1) as f64 * g.hz);
                f[id] = dres[id] / vol - (chi(zh) - chi(zl)) / g.hz;
            }
        }
        let bog = build_inverse(self.domain, &region)?;
        let bfield = bog.apply(&f)?;
        let bogovskii_gradient = bog.gradient_norm(&bfield);

        // periodic part before the remainder solve: vertical terms - d eta_+ - chi e3 - B
        let mut corr = StaggeredField::zeros(g);
        corr.axpy(-1.0, &dfield);
        corr.axpy(-1.0, &bfield);
        for k in 0..=g.nz {
            let w = chi(g.z0 + k as f64 * g.hz);
            for id in k * g.layer()..(k + 1) * g.layer() {
                corr.u[2][id] -= w;
            }
        }
        let mut p0 = vertical.clone();
        p0.axpy(1.0, &corr);
        let (pu, pp) = sys.residual_fields(&p0, &none(&wall_v));
        let load: [Vec<f64>; 3] = std::array::from_fn(|c| gu[c].iter().zip(&pu[c]).map(|(a, b)| a + b).collect());
        let div: Vec<f64> = gp.iter().zip(&pp).map(|(a, b)| a + b).collect();
        let (rem, stats) = sys.solve(&StokesData { wall: &zero_wall, load: Some(&load), div: Some(&div) }, None)?;

        let mut periodic = p0;
        periodic.axpy(1.0, &rem);

        // residuals of the assembled field, before the pressure shift
        let (tu, tp) = sys.residual_fields(&periodic, &none(&wall_v));
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..3 {
            for (face, (a, b)) in tu[c].iter().zip(&gu[c]).enumerate() {
                if sys.is_unknown(c, face) {
                    let cv = sys.control_volume(c, face);
                    num += ((a + b) / cv).powi(2);
                    den += (b / cv).powi(2);
                }
            }
        }
        let divergence_residual = tp.iter().zip(&gp).map(|(a, b)| ((a + b) / vol).abs()).fold(0.0, f64::max);
        normalize_pressure(self.domain, &mut periodic);
        let mut remainder = corr;
        remainder.axpy(1.0, &rem);
        remainder.p.copy_from_slice(&periodic.p);
        let top_trace = sys.top_trace(&periodic).expect("transparent top");
        let noslip_residual = assembled_noslip(self.domain, j, gt, &c1.field, &periodic);
        let remainder_pressure = {
            let mut e = 0.0;
            for (id, q) in remainder.p.iter().enumerate() {
                if self.domain.fluid[id] {
                    e += q * q * vol;
                }
            }
            e.sqrt()
        };
        let norms = Corrector2Norms {
            remainder_gradient: sys.energy(&remainder).max(0.0).sqrt(),
            remainder_pressure,
            bogovskii_gradient,
            divergence_corrector_gradient: sys.energy(&dfield).max(0.0).sqrt(),
            chi_constant: a_const,
        };
        Ok(Corrector2 {
            j,
            growth: Some(gt),
            periodic,
            fluid: self.domain.fluid.clone(),
            top_trace,
            parts: Some(Corrector2Parts {
                vertical,
                divergence_corrector: dfield,
                residual_divergence: dres,
                chi_constant: a_const,
                chi_start,
                bogovskii: bfield,
                remainder,
                bogovskii_top: ztop,
                leak,
            }),
            norms,
            noslip_residual,
            divergence_residual,
            momentum_residual: if den > 0.0 { (num / den).sqrt() } else { num.sqrt() },
            stats,
        })
    }
}

/// Height just above the roughness used for the near-wall trace.
fn trace_height(domain: &DiscreteDomain) -> f64 {
    let g = &domain.grid;
    (g.z0 + domain.first_open_layer() as f64 * g.hz).max(0.0)
}

/// Fourier trace of a field at height `z` in absolute coordinates, interpolated between
/// layers. Heights below the first fully fluid cell layer move up to its centers.
pub fn layer_trace(domain: &DiscreteDomain, field: &StaggeredField, z: f64) -> TopTrace {
    let g = &field.grid;
    let open = domain.first_open_layer().min(g.nz - 1);
    let zc = |k: usize| g.z0 + (k as f64 + 0.5) * g.hz;
    let z = z.max(zc(open)).min(zc(g.nz - 1));
    let fk = ((z - g.z0) / g.hz - 0.5).floor().max(0.0) as usize;
    let (k0, k1) = (fk.min(g.nz - 1), (fk + 1).min(g.nz - 1));
    let t = if k1 > k0 { (z - zc(k0)) / g.hz } else { 0.0 };
    let ff = ((z - g.z0) / g.hz).floor() as usize;
    let (f0, f1) = (ff.min(g.nz), (ff + 1).min(g.nz));
    let tf = if f1 > f0 { (z - (g.z0 + f0 as f64 * g.hz)) / g.hz } else { 0.0 };
    let l = g.layer();
    let mix = |a: &[f64], lo: usize, hi: usize, t: f64| -> Vec<f64> {
        (0..l).map(|p| (1.0 - t) * a[lo * l + p] + t * a[hi * l + p]).collect()
    };
    let layers = [mix(&field.u[0], k0, k1, t), mix(&field.u[1], k0, k1, t), mix(&field.u[2], f0, f1, tf)];
    let n = g.n;
    let fft = Fft2::new(n);
    let mut spec: Vec<Vec<C>> = layers
        .iter()
        .map(|v| {
            let mut d: Vec<C> = v.iter().map(|x| C::new(*x / l as f64, 0.0)).collect();
            fft.forward(&mut d);
            d
        })
        .collect();
    let mut modes = Vec::new();
    for m2 in 0..n {
        for m1 in 0..n {
            let id = m2 * n + m1;
            let (k1, k2) = (g.wavenumber(m1), g.wavenumber(m2));
            let mut b = [C::new(0.0, 0.0); 3];
            for (c, bc) in b.iter_mut().enumerate() {
                let p0 = g.face_pos(c, 0, 0, 0);
                *bc = spec[c][id] * C::from_polar(1.0, -(k1 * p0[0] + k2 * p0[1]));
                spec[c][id] = *bc;
            }
            if b.iter().all(|v| v.norm() < 1e-300) {
                continue;
            }
            modes.push(TraceMode { k: [k1, k2], re: b.map(|v| v.re), im: b.map(|v| v.im) });
        }
    }
    TopTrace { height: z, modes }
}

/// The `d` term for a growth corrector built layer by layer from the discrete first-order
/// field, so that its discrete divergence equals `scale (avg v1_axis - alpha_axis)` minus the
/// layer mean in every fully fluid layer. Returns `d eta_+` and the target per cell.
pub fn divergence_corrector(domain: &DiscreteDomain, c1: &Corrector1, gt: GrowthTerm) -> (StaggeredField, Vec<f64>) {
    let g = domain.grid;
    let n = g.n;
    let l = g.layer();
    let fft = Fft2::new(n);
    let mut out = StaggeredField::zeros(g);
    let mut target = vec![0.0; g.ncells()];
    let ax = gt.axis;
    for k in domain.first_open_layer()..g.nz {
        let z = g.cell_center(0, 0, k)[2];
        let mut t = vec![0.0; l];
        for jj in 0..n {
            for ii in 0..n {
                let id = g.idx(ii, jj, k);
                let hi = if ax == 0 { g.idx((ii + 1) % n, jj, k) } else { g.idx(ii, (jj + 1) % n, k) };
                t[jj * n + ii] = gt.scale * (0.5 * (c1.field.u[ax][id] + c1.field.u[ax][hi]) - c1.alpha[ax]);
            }
        }
        let mean = t.iter().sum::<f64>() / l as f64;
        t.iter_mut().for_each(|v| *v -= mean);
        target[k * l..(k + 1) * l].copy_from_slice(&t);
        let eta = eta_plus(z);
        if eta == 0.0 {
            continue;
        }
        let mut spec: Vec<C> = t.iter().map(|v| C::new(*v, 0.0)).collect();
        fft.forward(&mut spec);
        let mut d1 = vec![C::new(0.0, 0.0); l];
        let mut d2 = vec![C::new(0.0, 0.0); l];
        for m2 in 0..n {
            for m1 in 0..n {
                let id = m2 * n + m1;
                let e = |m: usize| C::from_polar(1.0, 2.0 * std::f64::consts::PI * m as f64 / n as f64) - 1.0;
                if m1 != 0 {
                    d1[id] = spec[id] * g.h / e(m1);
                } else if m2 != 0 {
                    d2[id] = spec[id] * g.h / e(m2);
                }
            }
        }
        fft.inverse(&mut d1);
        fft.inverse(&mut d2);
        for p in 0..l {
            out.u[0][k * l + p] = eta * d1[p].re / l as f64;
            out.u[1][k * l + p] = eta * d2[p].re / l as f64;
        }
    }
    (out, target)
}

/// Mode-by-mode closed form of `d` at a point above the trace height, from the trace of the
/// first-order corrector and its decay amplitudes.
pub fn divergence_corrector_formula(trace: &TopTrace, gt: GrowthTerm, x: [f64; 3]) -> [f64; 3] {
    let s = (x[2] - trace.height).max(0.0);
    let i = C::new(0.0, 1.0);
    let mut d = [C::new(0.0, 0.0); 2];
    for md in &trace.modes {
        let [k1, k2] = md.k;
        let kap = (k1 * k1 + k2 * k2).sqrt();
        if kap == 0.0 {
            continue;
        }
        let a = md.coeff();
        let vv = a[2] - i * (k1 / kap * a[0] + k2 / kap * a[1]);
        let kg = md.k[gt.axis];
        let t = gt.scale * (a[gt.axis] - i * kg * vv * s) * (-kap * s).exp() * C::from_polar(1.0, k1 * x[0] + k2 * x[1]);
        if k1.abs() > 1e-14 {
            d[0] += t / (i * k1);
        } else if k2.abs() > 1e-14 {
            d[1] += t / (i * k2);
        }
    }
    [d[0].re, d[1].re, 0.0]
}

/// Shifts the pressure to zero mean over fluid cells below height 2.
fn normalize_pressure(domain: &DiscreteDomain, f: &mut StaggeredField) {
    let g = f.grid;
    let (mut s, mut cnt) = (0.0, 0.0);
    for id in 0..g.ncells() {
        if domain.fluid[id] && g.cell_center(0, 0, g.ijk(id).2)[2] < 2.0 {
            s += f.p[id];
            cnt += 1.0;
        }
    }
    if cnt > 0.0 {
        let m = s / cnt;
        for id in 0..g.ncells() {
            if domain.fluid[id] {
                f.p[id] -= m;
            } else {
                f.p[id] = 0.0;
            }
        }
    }
}

/// Max over boundary faces of `|scale x_axis v1 + periodic + P|`.
fn assembled_noslip(domain: &DiscreteDomain, j: u8, gt: GrowthTerm, v1: &StaggeredField, periodic: &StaggeredField) -> f64 {
    let g = domain.grid;
    let p = NoSlipPolynomial { degree: 2, index: j };
    let mut worst: f64 = 0.0;
    for &(c, face) in &domain.boundary_faces {
        let (i, jj, k) = g.ijk(face);
        let x = g.face_pos(c, i, jj, k);
        let v = gt.scale * x[gt.axis] * v1.u[c][face] + periodic.u[c][face];
        worst = worst.max((v + p.velocity(x)[c]).abs());
    }
    worst
}

impl Corrector2 {
    /// Assembled field over the stored period, with the growing coordinate taken in place.
    pub fn assembled(&self, c1: Option<&Corrector1>) -> Result<StaggeredField> {
        let mut f = self.periodic.clone();
        if let Some(gt) = self.growth {
            let c1 = c1.filter(|c| c.j == gt.source).ok_or(BumpyError::MissingCorrector1(gt.source))?;
            let g = f.grid;
            for c in 0..3 {
                for (face, v) in f.u[c].iter_mut().enumerate() {
                    let (i, j, k) = g.ijk(face);
                    *v += gt.scale * g.face_pos(c, i, j, k)[gt.axis] * c1.field.u[c][face];
                }
            }
            for (id, q) in f.p.iter_mut().enumerate() {
                let (i, j, k) = g.ijk(id);
                *q += gt.scale * g.cell_center(i, j, k)[gt.axis] * c1.field.p[id];
            }
        }
        Ok(f)
    }

    /// Velocity and pressure at any point; `c1` is the source corrector when there is growth.
    pub fn eval(&self, c1: Option<&Corrector1>, y: [f64; 3]) -> Result<([f64; 3], f64)> {
        let (mut v, mut q) = eval_periodic(&self.periodic, &self.top_trace, y);
        if let Some(gt) = self.growth {
            let c1 = c1.filter(|c| c.j == gt.source).ok_or(BumpyError::MissingCorrector1(gt.source))?;
            let (w, p) = c1.eval(y);
            let top = self.periodic.grid.z1();
            if y[2] > top {
                // the vertical cutoff keeps growing linearly above the channel
                v[2] += -gt.scale * c1.alpha[gt.axis] * (y[2] - top);
            }
            for c in 0..3 {
                v[c] += gt.scale * y[gt.axis] * w[c];
            }
            q += gt.scale * y[gt.axis] * p;
        }
        Ok((v, q))
    }

    pub fn meta(&self) -> Corrector2Meta {
        Corrector2Meta {
            j: self.j,
            growth: self.growth,
            norms: self.norms,
            noslip_residual: self.noslip_residual,
            divergence_residual: self.divergence_residual,
            momentum_residual: self.momentum_residual,
            stats: self.stats,
            top_trace: self.top_trace.clone(),
            bogovskii_top: self.parts.as_ref().map(|p| p.bogovskii_top),
            leak: self.parts.as_ref().map(|p| p.leak),
        }
    }

    /// Writes `v2{j}.bfld` (periodic part) and `v2{j}.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.periodic.write(&dir.join(format!("v2{}.bfld", self.j)))?;
        write_mask(dir, &self.periodic.grid, &self.fluid)?;
        std::fs::write(dir.join(format!("v2{}.json", self.j)), serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn load(dir: &Path, j: u8) -> Result<Corrector2> {
        let periodic = StaggeredField::read(&dir.join(format!("v2{}.bfld", j)))?;
        let m: Corrector2Meta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("v2{}.json", j)))?)?;
        let fluid = read_mask(dir, &periodic.grid)?;
        Ok(Corrector2 {
            j: m.j,
            growth: m.growth,
            periodic,
            fluid,
            top_trace: m.top_trace,
            parts: None,
            norms: m.norms,
            noslip_residual: m.noslip_residual,
            divergence_residual: m.divergence_residual,
            momentum_residual: m.momentum_residual,
            stats: m.stats,
        })
    }
}

const MASK_FILE: &str = "fluid.bmsk";

fn write_mask(dir: &Path, g: &Grid, fluid: &[bool]) -> Result<()> {
    VoxelIndicator {
        dims: [g.n, g.n, g.nz],
        z_lo: g.z0,
        z_hi: g.z1(),
        solid: fluid.iter().map(|f| u8::from(!*f)).collect(),
    }
    .write(&dir.join(MASK_FILE))
}

fn read_mask(dir: &Path, g: &Grid) -> Result<Vec<bool>> {
    let m = VoxelIndicator::read(&dir.join(MASK_FILE))?;
    if m.dims != [g.n, g.n, g.nz] {
        return Err(BumpyError::Invalid("mask does not match the field grid".into()));
    }
    Ok(m.solid.iter().map(|s| *s == 0).collect())
}

fn eval_periodic(f: &StaggeredField, top: &TopTrace, y: [f64; 3]) -> ([f64; 3], f64) {
    if y[2] >= f.grid.z1() {
        poisson_extension(top, y)
    } else {
        f.interpolate(y)
    }
}

impl Corrector1 {
    /// Velocity and pressure at any point of the rough half-space (periodic horizontally).
    pub fn eval(&self, y: [f64; 3]) -> ([f64; 3], f64) {
        eval_periodic(&self.field, &self.top_trace, y)
    }

    pub fn meta(&self) -> Corrector1Meta {
        Corrector1Meta {
            j: self.j,
            alpha: self.alpha,
            decay_rate: self.decay_rate,
            column_energy: self.column_energy,
            noslip_residual: self.noslip_residual,
            stats: self.stats,
            top_trace: self.top_trace.clone(),
            fourier_trace: self.fourier_trace.clone(),
        }
    }

    /// Writes `v1{j}.bfld` and `v1{j}.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.field.write(&dir.join(format!("v1{}.bfld", self.j)))?;
        write_mask(dir, &self.field.grid, &self.fluid)?;
        std::fs::write(dir.join(format!("v1{}.json", self.j)), serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn load(dir: &Path, j: u8) -> Result<Corrector1> {
        let field = StaggeredField::read(&dir.join(format!("v1{}.bfld", j)))?;
        let m: Corrector1Meta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("v1{}.json", j)))?)?;
        let fluid = read_mask(dir, &field.grid)?;
        Ok(Corrector1 {
            j: m.j,
            field,
            fluid,
            top_trace: m.top_trace,
            fourier_trace: m.fourier_trace,
            alpha: m.alpha,
            decay_rate: m.decay_rate,
            column_energy: m.column_energy,
            noslip_residual: m.noslip_residual,
            stats: m.stats,
        })
    }
}

/// `int (|grad v|^2 + q^2)` over the fluid part of the column plus the extension above it.
fn column_energy(domain: &DiscreteDomain, f: &StaggeredField, top: &TopTrace, extra_grad: f64) -> f64 {
    let g = f.grid;
    let vol = g.cell_volume();
    let mut e = 0.0;
    for k in 0..g.nz {
        for j in 0..g.n {
            for i in 0..g.n {
                let id = g.idx(i, j, k);
                if domain.fluid[id] {
                    let gr = f.cell_gradient(i, j, k);
                    e += vol * (gr.iter().flatten().map(|v| v * v).sum::<f64>() + f.p[id] * f.p[id]);
                }
            }
        }
    }
    let dz = 0.05;
    let mut z = g.z1() + 0.5 * dz;
    while z < g.z1() + 12.0 {
        let lay = top.extension_layer(g.n, g.lx, g.x0, z);
        for p in 0..g.layer() {
            let mut s = lay.q[p] * lay.q[p];
            for a in 0..3 {
                for b in 0..3 {
                    let v = lay.grad[a][b][p] + if a == 2 && b == 2 { extra_grad } else { 0.0 };
                    s += v * v;
                }
            }
            e += s * g.h * g.h * dz;
        }
        z += dz;
    }
    e
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayProfile {
    pub heights: Vec<f64>,
    /// Layer `L2` norms of `v - alpha`, `grad v` and `q`.
    pub deviation: Vec<f64>,
    pub gradient: Vec<f64>,
    pub pressure: Vec<f64>,
    pub deviation_fit: DecayFit,
    pub gradient_fit: DecayFit,
    pub pressure_fit: DecayFit,
}

/// Per-height norms over `[1, T - 1]` with fitted exponential rates.
pub fn decay_profile(c: &Corrector1) -> Result<DecayProfile> {
    let f = &c.field;
    let g = f.grid;
    let top = g.z1();
    let ks: Vec<usize> = (0..g.nz)
        .filter(|&k| {
            let z = g.cell_center(0, 0, k)[2];
            (1.0..=top - 1.0).contains(&z)
        })
        .collect();
    if ks.len() < 5 {
        return Err(BumpyError::InsufficientHeights(ks.len()));
    }
    let a = g.h * g.h;
    let (mut hs, mut dev, mut grad, mut pres) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &k in &ks {
        let (mut sd, mut sg, mut sp) = (0.0, 0.0, 0.0);
        for j in 0..g.n {
            for i in 0..g.n {
                let v = f.cell_velocity(i, j, k);
                sd += (0..3).map(|d| (v[d] - c.alpha[d]).powi(2)).sum::<f64>();
                let gr = f.cell_gradient(i, j, k);
                sg += gr.iter().flatten().map(|x| x * x).sum::<f64>();
                let q = f.p[g.idx(i, j, k)];
                sp += q * q;
            }
        }
        hs.push(g.cell_center(0, 0, k)[2]);
        dev.push((sd * a).sqrt());
        grad.push((sg * a).sqrt());
        pres.push((sp * a).sqrt());
    }
    let reference = c.fourier_trace.modes.iter().map(|m| m.coeff().iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>().sqrt() * g.lx;
    let floor = 1e-6 * reference.max(1e-300);
    Ok(DecayProfile {
        deviation_fit: DecayFit::layer_decay(&hs, &dev, floor),
        gradient_fit: DecayFit::layer_decay(&hs, &grad, floor),
        pressure_fit: DecayFit::layer_decay(&hs, &pres, floor),
        heights: hs,
        deviation: dev,
        gradient: grad,
        pressure: pres,
    })
}

/// Corrector whose rescaled norms are measured.
pub enum ScaledSource<'a> {
    First(&'a Corrector1),
    /// A second-order corrector and, when it has a growth term, its source.
    Second(&'a Corrector2, Option<&'a Corrector1>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaledNorms {
    pub epsilon: f64,
    pub radii: Vec<f64>,
    /// Root mean square of the rescaled gradient over each box (with the `eps/r` weight for
    /// second order).
    pub gradient: Vec<f64>,
    pub pressure: Vec<f64>,
    /// `gradient + pressure` per radius.
    pub values: Vec<f64>,
    /// Power law of `values` against `eps/r`.
    pub fit: DecayFit,
}

/// Per-cell data of a (possibly growing) field: gradient `y_g A + B`, pressure `y_g a + b`.
struct CellData {
    a_grad: [[f64; 3]; 3],
    b_grad: [[f64; 3]; 3],
    a_p: f64,
    b_p: f64,
}

/// Image sums `(count, sum y, sum y^2)` of the periodic copies `x + m lx` inside `(-r, r)`.
fn image_sums(x: f64, lx: f64, r: f64) -> (f64, f64, f64) {
    let lo = ((-r - x) / lx).ceil() as i64;
    let hi = ((r - x) / lx).floor() as i64;
    let (mut c, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for m in lo..=hi {
        let y = x + m as f64 * lx;
        if y.abs() < r {
            c += 1.0;
            s1 += y;
            s2 += y * y;
        }
    }
    (c, s1, s2)
}

/// Means over `B_{r,+}` of the rescaled corrector, computed in unscaled coordinates on the box
/// `|y'| < r / eps`, `y_3 < r / eps` from periodic images of the stored column.
pub fn scaled_norms(src: ScaledSource, epsilon: f64, radii: &[f64]) -> Result<ScaledNorms> {
    for &r in radii {
        if !(r > epsilon) {
            return Err(BumpyError::RadiusOutOfRange(r));
        }
    }
    let (field, fluid, second) = match &src {
        ScaledSource::First(c) => (&c.field, &c.fluid, None),
        ScaledSource::Second(c, c1) => {
            let growth = match c.growth {
                Some(gt) => {
                    let c1 = c1.filter(|x| x.j == gt.source).ok_or(BumpyError::MissingCorrector1(gt.source))?;
                    Some((gt, c1))
                }
                None => None,
            };
            (&c.periodic, &c.fluid, Some((*c, growth)))
        }
    };
    let g = field.grid;
    let axis = second.and_then(|(_, gr)| gr.map(|(gt, _)| gt.axis)).unwrap_or(0);
    let cell = |i: usize, j: usize, k: usize| -> CellData {
        let id = g.idx(i, j, k);
        let mut d = CellData { a_grad: [[0.0; 3]; 3], b_grad: field.cell_gradient(i, j, k), a_p: 0.0, b_p: field.p[id] };
        if let Some((_, Some((gt, c1)))) = second {
            let ga = c1.field.cell_gradient(i, j, k);
            let v1 = c1.field.cell_velocity(i, j, k);
            for a in 0..3 {
                for b in 0..3 {
                    d.a_grad[a][b] = gt.scale * ga[a][b];
                }
                d.b_grad[a][gt.axis] += gt.scale * v1[a];
            }
            d.a_p = gt.scale * c1.field.p[id];
        }
        d
    };
    // extension layers above the channel
    let top = g.z1();
    let layer_above = |z: f64| -> Vec<CellData> {
        let (trace, extra, pconst) = match &src {
            ScaledSource::First(c) => (&c.top_trace, 0.0, 0.0),
            ScaledSource::Second(c, _) => {
                let l = g.layer();
                let k = g.nz - 1;
                let pm = c.periodic.p[k * l..(k + 1) * l].iter().sum::<f64>() / l as f64;
                let extra = match second.and_then(|(_, gr)| gr) {
                    Some((gt, c1)) => -gt.scale * c1.alpha[gt.axis],
                    None => 0.0,
                };
                (&c.top_trace, extra, pm)
            }
        };
        let lay = trace.extension_layer(g.n, g.lx, g.x0, z);
        let src1 = second.and_then(|(_, gr)| gr).map(|(gt, c1)| (gt, c1.top_trace.extension_layer(g.n, g.lx, g.x0, z)));
        (0..g.layer())
            .map(|p| {
                let mut d = CellData {
                    a_grad: [[0.0; 3]; 3],
                    b_grad: std::array::from_fn(|a| std::array::from_fn(|b| lay.grad[a][b][p])),
                    a_p: 0.0,
                    b_p: lay.q[p] + pconst,
                };
                d.b_grad[2][2] += extra;
                if let Some((gt, l1)) = &src1 {
                    for a in 0..3 {
                        for b in 0..3 {
                            d.a_grad[a][b] = gt.scale * l1.grad[a][b][p];
                        }
                        d.b_grad[a][gt.axis] += gt.scale * l1.vel[a][p];
                    }
                    d.a_p = gt.scale * l1.q[p];
                }
                d
            })
            .collect()
    };
    let mut out = ScaledNorms {
        epsilon,
        radii: radii.to_vec(),
        gradient: Vec::new(),
        pressure: Vec::new(),
        values: Vec::new(),
        fit: DecayFit::power_law(&[], &[]),
    };
    for &r in radii {
        let big = r / epsilon;
        let cols: Vec<[(f64, f64, f64); 2]> = (0..g.layer())
            .map(|p| {
                let c = g.cell_center(p % g.n, p / g.n, 0);
                [image_sums(c[0], g.lx, big), image_sums(c[1], g.lx, big)]
            })
            .collect();
        let (mut eg, mut ep, mut vol) = (0.0, 0.0, 0.0);
        let mut add = |p: usize, d: &CellData, w: f64| {
            let [cx, cy] = cols[p];
            let (own, other) = if axis == 0 { (cx, cy) } else { (cy, cx) };
            let m = own.0 * other.0;
            if m == 0.0 {
                return;
            }
            let s1 = own.1 * other.0;
            let s2 = own.2 * other.0;
            let (mut aa, mut ab, mut bb) = (0.0, 0.0, 0.0);
            for a in 0..3 {
                for b in 0..3 {
                    aa += d.a_grad[a][b] * d.a_grad[a][b];
                    ab += d.a_grad[a][b] * d.b_grad[a][b];
                    bb += d.b_grad[a][b] * d.b_grad[a][b];
                }
            }
            eg += w * (s2 * aa + 2.0 * s1 * ab + m * bb);
            ep += w * (s2 * d.a_p * d.a_p + 2.0 * s1 * d.a_p * d.b_p + m * d.b_p * d.b_p);
            vol += w * m;
        };
        let cv = g.cell_volume();
        for k in 0..g.nz {
            if g.cell_center(0, 0, k)[2] >= big {
                break;
            }
            for j in 0..g.n {
                for i in 0..g.n {
                    if fluid[g.idx(i, j, k)] {
                        add(j * g.n + i, &cell(i, j, k), cv);
                    }
                }
            }
        }
        let mut z = top;
        while z < big {
            let dz = g.hz.min(big - z);
            let lay = layer_above(z + 0.5 * dz);
            for (p, d) in lay.iter().enumerate() {
                add(p, d, g.h * g.h * dz);
            }
            z += dz;
        }
        let weight = if second.is_some() { epsilon / r } else { 1.0 };
        let (gn, pn) = (weight * (eg / vol).sqrt(), weight * (ep / vol).sqrt());
        out.gradient.push(gn);
        out.pressure.push(pn);
        out.values.push(gn + pn);
    }
    let x: Vec<f64> = radii.iter().map(|r| epsilon / r).collect();
    out.fit = DecayFit::power_law(&x, &out.values);
    Ok(out)
}
