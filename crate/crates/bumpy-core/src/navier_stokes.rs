//! Stationary Navier-Stokes flow by damped Picard iteration over the Stokes solver, and the
//! cube-averaging operator `M_t^p[g](x) = (mean over Q_t(x) of |g|^p)^(1/p)`.

use crate::error::{BumpyError, Result};
use crate::field::StaggeredField;
use crate::fit::DecayFit;
use crate::geometry::DiscreteDomain;
use crate::grid::Grid;
use crate::stokes::{FaceKind, SolverConfig, StokesData, StokesSystem, TopKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type TopData<'a> = &'a (dyn Fn([f64; 3]) -> [f64; 3] + Sync);

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsConfig {
    /// Relaxation weight of the new Stokes solve.
    pub damping: f64,
    /// Stop when the RMS gradient of the increment falls below `tol` (relative to `M` when `M > 0`).
    pub tol: f64,
    pub max_iter: usize,
    pub solver: SolverConfig,
}

impl Default for NsConfig {
    fn default() -> Self {
        NsConfig {
            damping: 0.7,
            tol: 1e-8,
            max_iter: 300,
            solver: SolverConfig { tol: 1e-11, tol_div: 1e-12, max_iter: 100_000, mode_cut: None },
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PicardStep {
    pub step: usize,
    /// RMS gradient of the change from the previous iterate.
    pub increment: f64,
    /// Relative nonlinear momentum residual of the iterate.
    pub residual: f64,
    pub m: f64,
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct NsSolution {
    pub field: StaggeredField,
    pub trace: Vec<PicardStep>,
    /// `(mean |grad u|^2)^(1/2)` over the fluid.
    pub m: f64,
    pub nonlinear_residual: f64,
}

impl NsSolution {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,increment,residual,m,energy\n");
        for t in &self.trace {
            s += &format!("{},{:.17e},{:.17e},{:.17e},{:.17e}\n", t.step, t.increment, t.residual, t.m, t.energy);
        }
        s
    }
}

/// Wall data that is zero on the rough wall and `top` on the top plane.
pub fn boxed_data<'a>(grid: Grid, top: TopData<'a>) -> impl Fn([f64; 3]) -> [f64; 3] + Sync + 'a {
    let z1 = grid.z1();
    let tol = 1e-9 * grid.hz;
    move |x: [f64; 3]| if x[2] > z1 - tol { top(x) } else { [0.0; 3] }
}

/// Volume-scaled `-div(u (x) u)` on the unknown faces, with face-averaged fluxes. Values
/// across walls come from mirror ghosts carrying the wall data.
pub fn convective_load(sys: &StokesSystem, u: &StaggeredField, wall: TopData) -> [Vec<f64>; 3] {
    let g = sys.grid;
    let n = g.n as isize;
    let get = |c: usize, i: isize, j: isize, k: isize| -> f64 {
        let kmax = if c == 2 { g.nz as isize } else { g.nz as isize - 1 };
        if k < 0 || k > kmax {
            return 0.0;
        }
        u.u[c][g.idx(i.rem_euclid(n) as usize, j.rem_euclid(n) as usize, k as usize)]
    };
    // neighbour of face (c; i,j,k) along d with sign s, or its mirror ghost
    let tangential = |c: usize, i: isize, j: isize, k: isize, d: usize, s: isize| -> f64 {
        let (ni, nj, nk) = match d {
            0 => (i + s, j, k),
            1 => (i, j + s, k),
            _ => (i, j, k + s),
        };
        let kmax = if c == 2 { g.nz as isize } else { g.nz as isize - 1 };
        let dead = nk < 0 || nk > kmax || sys.face_kind(c, ni, nj, nk) == FaceKind::Dead;
        if dead {
            let mut pos = g.face_pos(c, i.rem_euclid(n) as usize, j.rem_euclid(n) as usize, k as usize);
            pos[d] += 0.5 * s as f64 * g.spacing(d);
            2.0 * wall(pos)[c] - get(c, i, j, k)
        } else {
            get(c, ni, nj, nk)
        }
    };
    let off = |d: usize| -> [isize; 3] {
        let mut e = [0isize; 3];
        e[d] = 1;
        e
    };
    let mut out = [vec![0.0; g.nfaces(0)], vec![0.0; g.nfaces(1)], vec![0.0; g.nfaces(2)]];
    for (c, o) in out.iter_mut().enumerate() {
        o.par_iter_mut().enumerate().for_each(|(f, val)| {
            if !sys.is_unknown(c, f) {
                return;
            }
            let (i, j, k) = g.ijk(f);
            let (i, j, k) = (i as isize, j as isize, k as isize);
            let ec = off(c);
            let here = get(c, i, j, k);
            let mut div = 0.0;
            for d in 0..3 {
                if d == c {
                    let after = 0.5 * (here + get(c, i + ec[0], j + ec[1], k + ec[2]));
                    let before = 0.5 * (here + get(c, i - ec[0], j - ec[1], k - ec[2]));
                    div += (after * after - before * before) / g.spacing(c);
                } else {
                    let ed = off(d);
                    let up_c = 0.5 * (here + tangential(c, i, j, k, d, 1));
                    let dn_c = 0.5 * (here + tangential(c, i, j, k, d, -1));
                    let up_d = 0.5
                        * (get(d, i + ed[0], j + ed[1], k + ed[2])
                            + get(d, i + ed[0] - ec[0], j + ed[1] - ec[1], k + ed[2] - ec[2]));
                    let dn_d = 0.5 * (get(d, i, j, k) + get(d, i - ec[0], j - ec[1], k - ec[2]));
                    div += (up_c * up_d - dn_c * dn_d) / g.spacing(d);
                }
            }
            *val = -sys.control_volume(c, f) * div;
        });
    }
    out
}

/// RMS over fluid cells of the cell-centered velocity gradient.
pub fn gradient_rms(f: &StaggeredField, fluid: &[bool]) -> f64 {
    let g = f.grid;
    let (s, cnt) = (0..g.ncells())
        .into_par_iter()
        .filter(|id| fluid[*id])
        .map(|id| {
            let (i, j, k) = g.ijk(id);
            let gr = f.cell_gradient(i, j, k);
            (gr.iter().flatten().map(|v| v * v).sum::<f64>(), 1usize)
        })
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if cnt == 0 {
        0.0
    } else {
        (s / cnt as f64).sqrt()
    }
}

fn difference(a: &StaggeredField, b: &StaggeredField) -> StaggeredField {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d
}

/// Damped Picard iteration `u <- (1-l) u + l S(-div(u (x) u))` with Dirichlet data `top` on
/// the top plane and no-slip on the rough wall.
pub fn solve_ns(domain: &DiscreteDomain, top: TopData, cfg: &NsConfig) -> Result<NsSolution> {
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(BumpyError::Invalid(format!("damping {} outside (0, 1]", cfg.damping)));
    }
    let sys = StokesSystem::new(domain, TopKind::Dirichlet, cfg.solver)?;
    let wall = boxed_data(domain.grid, top);
    let (mut u, _) = sys.solve(&StokesData { wall: &wall, load: None, div: None }, None)?;
    let mut trace = Vec::new();
    let mut growth = 0;
    let mut last = f64::INFINITY;
    for step in 1..=cfg.max_iter {
        let load = convective_load(&sys, &u, &wall);
        if load.iter().flatten().any(|v| !v.is_finite()) {
            return Err(BumpyError::PicardDiverged(step));
        }
        let data = StokesData { wall: &wall, load: Some(&load), div: None };
        let residual = nonlinear_residual_with(&sys, &u, &data);
        let s = match sys.solve(&data, Some(&u)) {
            Ok((s, _)) => s,
            // a failing inner solve while increments grow is the iteration blowing up
            Err(BumpyError::NoConvergence { .. }) if growth > 0 => return Err(BumpyError::PicardDiverged(step)),
            Err(e) => return Err(e),
        };
        let mut next = u.clone();
        next.scale(1.0 - cfg.damping);
        next.axpy(cfg.damping, &s);
        let increment = gradient_rms(&difference(&next, &u), &domain.fluid);
        u = next;
        let m = gradient_rms(&u, &domain.fluid);
        trace.push(PicardStep { step, increment, residual, m, energy: sys.energy(&u) });
        if increment <= cfg.tol * if m > 0.0 { m } else { 1.0 } {
            let load = convective_load(&sys, &u, &wall);
            let nonlinear_residual =
                nonlinear_residual_with(&sys, &u, &StokesData { wall: &wall, load: Some(&load), div: None });
            return Ok(NsSolution { field: u, trace, m, nonlinear_residual });
        }
        growth = if increment > last { growth + 1 } else { 0 };
        last = increment;
        if growth >= 20 || !increment.is_finite() {
            return Err(BumpyError::PicardDiverged(step));
        }
    }
    Err(BumpyError::NoConvergence { iterations: cfg.max_iter, residual: last })
}

fn nonlinear_residual_with(sys: &StokesSystem, u: &StaggeredField, data: &StokesData) -> f64 {
    let (ru, _) = sys.residual_fields(u, data);
    let b = sys.saddle_rhs(data);
    let (nu, _) = sys.num_unknowns();
    let bn = b[..nu].iter().map(|v| v * v).sum::<f64>().sqrt();
    let rn = ru.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    if bn == 0.0 {
        rn
    } else {
        rn / bn
    }
}

/// Relative nonlinear momentum residual of a field for the boxed problem with data `top`.
pub fn nonlinear_residual(domain: &DiscreteDomain, u: &StaggeredField, top: TopData) -> Result<f64> {
    let sys = StokesSystem::new(domain, TopKind::Dirichlet, SolverConfig::default())?;
    let wall = boxed_data(domain.grid, top);
    let load = convective_load(&sys, u, &wall);
    Ok(nonlinear_residual_with(&sys, u, &StokesData { wall: &wall, load: Some(&load), div: None }))
}

/// Cell-centered `|grad u|`, zero outside the fluid.
pub fn gradient_magnitude(f: &StaggeredField, fluid: &[bool]) -> Vec<f64> {
    let g = f.grid;
    (0..g.ncells())
        .into_par_iter()
        .map(|id| {
            if !fluid[id] {
                return 0.0;
            }
            let (i, j, k) = g.ijk(id);
            f.cell_gradient(i, j, k).iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect()
}

/// Cell-centered `|u (x) u| = |u|^2`, zero outside the fluid.
pub fn flux_magnitude(f: &StaggeredField, fluid: &[bool]) -> Vec<f64> {
    let g = f.grid;
    (0..g.ncells())
        .into_par_iter()
        .map(|id| {
            if !fluid[id] {
                return 0.0;
            }
            let (i, j, k) = g.ijk(id);
            f.cell_velocity(i, j, k).iter().map(|v| v * v).sum::<f64>()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct AveragedField {
    pub grid: Grid,
    pub t: f64,
    pub p: f64,
    /// Window half-widths in cells (horizontal, vertical).
    pub window: [usize; 2],
    pub values: Vec<f64>,
}

/// Half-widths in cells of the cube of half-side `t`: cells whose centers lie within `t`.
pub fn window_cells(grid: &Grid, t: f64) -> [usize; 2] {
    [(t / grid.h * (1.0 + 1e-9)).floor() as usize, (t / grid.hz * (1.0 + 1e-9)).floor() as usize]
}

/// Moving sums over `(2w+1)` cells along each axis; periodic horizontally, zero beyond the
/// vertical range.
pub fn box_sums(grid: &Grid, v: &[f64], wh: usize, wz: usize) -> Vec<f64> {
    let (n, nz) = (grid.n, grid.nz);
    let mut a = v.to_vec();
    let mut b = vec![0.0; v.len()];
    let wh = wh.min(n / 2);
    for axis in 0..3 {
        b.par_chunks_mut(n * n).enumerate().for_each(|(k, out)| {
            for j in 0..n {
                for i in 0..n {
                    let mut s = 0.0;
                    match axis {
                        0 => {
                            for d in -(wh as isize)..=wh as isize {
                                s += a[grid.idx(grid.wrap(i as isize + d), j, k)];
                            }
                        }
                        1 => {
                            for d in -(wh as isize)..=wh as isize {
                                s += a[grid.idx(i, grid.wrap(j as isize + d), k)];
                            }
                        }
                        _ => {
                            let lo = k.saturating_sub(wz);
                            let hi = (k + wz).min(nz - 1);
                            for kk in lo..=hi {
                                s += a[grid.idx(i, j, kk)];
                            }
                        }
                    }
                    out[j * n + i] = s;
                }
            }
        });
        std::mem::swap(&mut a, &mut b);
    }
    a
}

/// `M_t^p` of cell-centered magnitudes `g` (already zero outside the fluid).
pub fn averaging(grid: &Grid, g: &[f64], t: f64, p: f64) -> Result<AveragedField> {
    if t < grid.h.max(grid.hz) * (1.0 - 1e-9) {
        return Err(BumpyError::WindowTooSmall(t));
    }
    if p < 1.0 {
        return Err(BumpyError::Invalid(format!("exponent {p} < 1")));
    }
    let [wh, wz] = window_cells(grid, t);
    let pw: Vec<f64> = g.iter().map(|v| v.abs().powf(p)).collect();
    let sums = box_sums(grid, &pw, wh, wz);
    let count = ((2 * wh.min(grid.n / 2) + 1).pow(2) * (2 * wz + 1)) as f64;
    let values = sums.iter().map(|s| (s.max(0.0) / count).powf(1.0 / p)).collect();
    Ok(AveragedField { grid: *grid, t, p, window: [wh, wz], values })
}

/// Cells whose centers lie in the cube of half-side `r` about `y`, and the number of lattice
/// cells such a cube holds (counting cells outside the vertical range).
pub fn cube_cells(grid: &Grid, y: [f64; 3], r: f64) -> (Vec<usize>, usize) {
    let tol = 1e-9 * grid.h;
    let mut ids = Vec::new();
    let inside = |a: f64, b: f64| (a - b).abs() <= r + tol;
    let horiz: Vec<usize> = (0..grid.n)
        .filter(|&i| {
            let x = grid.x0 + (i as f64 + 0.5) * grid.h;
            let d = (x - y[0] + 0.5 * grid.lx).rem_euclid(grid.lx) - 0.5 * grid.lx;
            d.abs() <= r + tol
        })
        .collect();
    let horiz2: Vec<usize> = (0..grid.n)
        .filter(|&j| {
            let x = grid.x0 + (j as f64 + 0.5) * grid.h;
            let d = (x - y[1] + 0.5 * grid.lx).rem_euclid(grid.lx) - 0.5 * grid.lx;
            d.abs() <= r + tol
        })
        .collect();
    let mut nzc = 0usize;
    let lo = ((y[2] - r - grid.z0) / grid.hz - 0.5).floor() as isize - 1;
    let hi = ((y[2] + r - grid.z0) / grid.hz - 0.5).ceil() as isize + 1;
    for k in lo..=hi {
        let z = grid.z0 + (k as f64 + 0.5) * grid.hz;
        if !inside(z, y[2]) {
            continue;
        }
        nzc += 1;
        if k < 0 || k >= grid.nz as isize {
            continue;
        }
        for &j in &horiz2 {
            for &i in &horiz {
                ids.push(grid.idx(i, j, k as usize));
            }
        }
    }
    (ids, horiz.len() * horiz2.len() * nzc)
}

/// Mean of `v^q` over the cube (zero extension), to the power `1/q`.
pub fn cube_norm(grid: &Grid, v: &[f64], y: [f64; 3], r: f64, q: f64) -> f64 {
    let (ids, count) = cube_cells(grid, y, r);
    if count == 0 {
        return 0.0;
    }
    let s: f64 = ids.iter().map(|&id| v[id].abs().powf(q)).sum();
    (s / count as f64).powf(1.0 / q)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MorreyReport {
    pub l: f64,
    pub delta: f64,
    /// Theoretical exponent `2 - 6/l`.
    pub target: f64,
    /// Log-log fit of `(mean_{Q_r} M_eps[u (x) u]^3)^(1/3)` against `r`.
    pub fit: DecayFit,
    /// Smallest `C` with value <= C r^target at every radius.
    pub constant: f64,
}

/// Cube averages of `M_eps^2[u (x) u]` about the origin against `r^(2 - 6/l)`.
pub fn morrey_check(u: &StaggeredField, fluid: &[bool], eps: f64, radii: &[f64], l: f64, delta: f64) -> Result<MorreyReport> {
    if !(l > 3.0) || !(delta > 0.0) || l * delta >= 6.0 {
        return Err(BumpyError::Invalid(format!("need l > 3 and 0 < l delta < 6 (l {l}, delta {delta})")));
    }
    let g = u.grid;
    let t = eps.max(g.h.max(g.hz));
    let mf = averaging(&g, &flux_magnitude(u, fluid), t, 2.0)?;
    let values: Vec<f64> = radii.iter().map(|&r| cube_norm(&g, &mf.values, [0.0; 3], r, 3.0)).collect();
    let target = 2.0 - 6.0 / l;
    let constant = radii.iter().zip(&values).map(|(r, v)| v / r.powf(target)).fold(0.0, f64::max);
    Ok(MorreyReport { l, delta, target, fit: DecayFit::power_law(radii, &values), constant })
}

/// Measured constants of the averaging-operator properties for one field.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct AveragingConstants {
    /// max of `M^{6/5} / M^2`.
    pub monotone: f64,
    /// max of `M_t / ((t2/t)^{3/2} M_{t2})`, `t2 = 2t`.
    pub window_growth: f64,
    /// `int_{Q_s} |g|^2 / int_{Q_s} M_t^2` and `int_{Q_s} M_t^2 / int_{Q_{s+t}} |g|^2`, `s = 2t`.
    pub equivalence_lower: f64,
    pub equivalence_upper: f64,
    /// `mean_{Q_s} M_{t2}^3 / mean_{Q_{s+t2}} M_t^3`, `t2 = 2t`, `s = 2 t2`.
    pub higher_integrability: f64,
    /// `M_t(y) / mean_{Q_s(y)} M_t`, `s = t/2`.
    pub mean_value: f64,
}

impl AveragingConstants {
    pub fn max(self, o: AveragingConstants) -> AveragingConstants {
        AveragingConstants {
            monotone: self.monotone.max(o.monotone),
            window_growth: self.window_growth.max(o.window_growth),
            equivalence_lower: self.equivalence_lower.max(o.equivalence_lower),
            equivalence_upper: self.equivalence_upper.max(o.equivalence_upper),
            higher_integrability: self.higher_integrability.max(o.higher_integrability),
            mean_value: self.mean_value.max(o.mean_value),
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.monotone,
            self.window_growth,
            self.equivalence_lower,
            self.equivalence_upper,
            self.higher_integrability,
            self.mean_value,
        ]
    }
}

/// Evaluates the five averaging properties for `g` at window `t`, over cube centers `ys`
/// whose largest cube (half-side `5t`) stays inside the grid vertically.
pub fn averaging_constants(grid: &Grid, g: &[f64], t: f64, ys: &[[f64; 3]]) -> Result<AveragingConstants> {
    let m2 = averaging(grid, g, t, 2.0)?;
    let m65 = averaging(grid, g, t, 1.2)?;
    let m2b = averaging(grid, g, 2.0 * t, 2.0)?;
    let mut out = AveragingConstants::default();
    for (a, b) in m65.values.iter().zip(&m2.values) {
        if *b > 0.0 {
            out.monotone = out.monotone.max(a / b);
        }
    }
    let growth = 2f64.powf(1.5);
    for (a, b) in m2.values.iter().zip(&m2b.values) {
        if *b > 0.0 {
            out.window_growth = out.window_growth.max(a / (growth * b));
        }
    }
    let sq: Vec<f64> = g.iter().map(|v| v * v).collect();
    let msq: Vec<f64> = m2.values.iter().map(|v| v * v).collect();
    let m2c: Vec<f64> = m2.values.iter().map(|v| v.powi(3)).collect();
    let m2bc: Vec<f64> = m2b.values.iter().map(|v| v.powi(3)).collect();
    let mean = |v: &[f64], y: [f64; 3], r: f64| -> f64 {
        let (ids, count) = cube_cells(grid, y, r);
        ids.iter().map(|&i| v[i]).sum::<f64>() / count.max(1) as f64
    };
    let total = |v: &[f64], y: [f64; 3], r: f64| -> f64 {
        let (ids, _) = cube_cells(grid, y, r);
        ids.iter().map(|&i| v[i]).sum::<f64>()
    };
    for &y in ys {
        let (k, kt) = (grid.locate(y).2, window_cells(grid, 5.0 * t)[1]);
        if k < kt || k + kt >= grid.nz {
            return Err(BumpyError::Invalid("cube leaves the grid vertically".into()));
        }
        let s = 2.0 * t;
        let (gs, ms, gst) = (total(&sq, y, s), total(&msq, y, s), total(&sq, y, s + t));
        if ms > 0.0 {
            out.equivalence_lower = out.equivalence_lower.max(gs / ms);
        }
        if gst > 0.0 {
            out.equivalence_upper = out.equivalence_upper.max(ms / gst);
        }
        let s4 = 4.0 * t;
        let lower = mean(&m2c, y, s4 + 2.0 * t);
        if lower > 0.0 {
            out.higher_integrability = out.higher_integrability.max(mean(&m2bc, y, s4) / lower);
        }
        let (i, j, k) = grid.locate(y);
        let here = m2.values[grid.idx(i, j, k)];
        let local = mean(&m2.values, y, 0.5 * t);
        if local > 0.0 {
            out.mean_value = out.mean_value.max(here / local);
        }
    }
    Ok(out)
}
