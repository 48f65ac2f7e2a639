//! Staggered-grid Stokes solver for periodic channels over voxelized rough walls.
//!
//! Unknowns are the velocities on faces separating two fluid cells and the pressure in fluid
//! cells. Equations are volume-scaled: `A u - D^T p = F`, `-D u = -G`, with `A` the 7-point
//! Laplacian (SPD), `D u` the per-cell net outflux. Faces with exactly one fluid neighbour
//! carry prescribed normal velocities; tangential wall values enter through mirror ghosts.
//! The top is either a Dirichlet wall or the transparent closure of [`crate::dtn`].

use crate::dtn::{build_dtn, DtnClosure, TopOperator, TopTrace};
use crate::error::{BumpyError, Result};
use crate::fft2::Fft2;
use crate::field::StaggeredField;
use crate::geometry::DiscreteDomain;
use crate::grid::Grid;
use crate::krylov::{minres, norm};
use num_complex::Complex64 as C;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopKind {
    Dirichlet,
    Transparent,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub tol_div: f64,
    pub max_iter: usize,
    /// Highest signed horizontal mode index given the exact top symbol; `None` keeps all.
    pub mode_cut: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-8, tol_div: 1e-10, max_iter: 100_000, mode_cut: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceKind {
    Active,
    Wall,
    Dead,
}

/// Right-hand side of one solve.
pub struct StokesData<'a> {
    /// Velocity prescribed on walls and (for a Dirichlet top) on the top plane.
    pub wall: &'a (dyn Fn([f64; 3]) -> [f64; 3] + Sync),
    /// Volume-scaled momentum load per face (indexed like the field arrays).
    pub load: Option<&'a [Vec<f64>; 3]>,
    /// Volume-scaled divergence target per cell.
    pub div: Option<&'a [f64]>,
}

pub fn zero_wall(_: [f64; 3]) -> [f64; 3] {
    [0.0; 3]
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub momentum_rel: f64,
    pub divergence_rel: f64,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    /// RMS over unknown faces of the pointwise momentum residual.
    pub momentum: f64,
    /// Max over fluid cells of the pointwise divergence residual.
    pub divergence: f64,
    /// Max deviation of prescribed faces from the wall data.
    pub noslip: f64,
}

struct BTerm {
    row: u32,
    coef: f64,
    pos: [f64; 3],
    comp: u8,
}

struct WallFace {
    comp: u8,
    face: u32,
    pos: [f64; 3],
    cell: u32,
    sign: f64,
}

pub struct StokesSystem {
    pub grid: Grid,
    pub top: TopKind,
    pub cfg: SolverConfig,
    fluid: Vec<bool>,
    unknown: [Vec<u32>; 3],
    faces: Vec<(u8, u32)>,
    pcell: Vec<u32>,
    cells: Vec<u32>,
    nu: usize,
    diag: Vec<f64>,
    nbr: Vec<[u32; 6]>,
    nbc: Vec<[f64; 6]>,
    pgrad: Vec<[u32; 2]>,
    vol: Vec<f64>,
    bterms: Vec<BTerm>,
    walls: Vec<WallFace>,
    top_op: Option<(TopOperator, DtnClosure, [Vec<u32>; 3])>,
    prec: Preconditioner,
}

impl StokesSystem {
    pub fn new(domain: &DiscreteDomain, top: TopKind, cfg: SolverConfig) -> Result<Self> {
        Self::from_mask(domain.grid, domain.fluid.clone(), top, cfg)
    }

    pub fn from_mask(grid: Grid, fluid: Vec<bool>, top: TopKind, cfg: SolverConfig) -> Result<Self> {
        let g = grid;
        let l = g.layer();
        if top == TopKind::Transparent && !fluid[(g.nz - 1) * l..].iter().all(|f| *f) {
            return Err(BumpyError::Invalid("transparent top requires a fully fluid top layer".into()));
        }
        let mut sys = StokesSystem {
            grid,
            top,
            cfg,
            fluid,
            unknown: [vec![NONE; g.nfaces(0)], vec![NONE; g.nfaces(1)], vec![NONE; g.nfaces(2)]],
            faces: Vec::new(),
            pcell: vec![NONE; g.ncells()],
            cells: Vec::new(),
            nu: 0,
            diag: Vec::new(),
            nbr: Vec::new(),
            nbc: Vec::new(),
            pgrad: Vec::new(),
            vol: Vec::new(),
            bterms: Vec::new(),
            walls: Vec::new(),
            top_op: None,
            prec: Preconditioner::empty(),
        };
        for id in 0..g.ncells() {
            if sys.fluid[id] {
                sys.pcell[id] = sys.cells.len() as u32;
                sys.cells.push(id as u32);
            }
        }
        for c in 0..3 {
            let nk = if c == 2 { g.nz + 1 } else { g.nz };
            for k in 0..nk {
                for j in 0..g.n {
                    for i in 0..g.n {
                        match sys.face_kind(c, i as isize, j as isize, k as isize) {
                            FaceKind::Active => {
                                let f = g.idx(i, j, k);
                                sys.unknown[c][f] = sys.faces.len() as u32;
                                sys.faces.push((c as u8, f as u32));
                            }
                            FaceKind::Wall => {
                                let (a, b) = sys.adjacent(c, i as isize, j as isize, k as isize);
                                let (cell, sign) = match (a, b) {
                                    (Some(a), _) if sys.fluid[a] => (a, 1.0),
                                    (_, Some(b)) => (b, -1.0),
                                    _ => unreachable!(),
                                };
                                sys.walls.push(WallFace {
                                    comp: c as u8,
                                    face: g.idx(i, j, k) as u32,
                                    pos: g.face_pos(c, i, j, k),
                                    cell: sys.pcell[cell],
                                    sign,
                                });
                            }
                            FaceKind::Dead => {}
                        }
                    }
                }
            }
        }
        sys.nu = sys.faces.len();
        sys.assemble();
        if top == TopKind::Transparent {
            let cut = cfg.mode_cut.unwrap_or(g.n / 2);
            let closure = build_dtn(g.z1(), g.n, g.lx, cut);
            let op = TopOperator::new(&closure, g.h, g.hz);
            let mut ids = [vec![0u32; l], vec![0u32; l], vec![0u32; l]];
            for p in 0..l {
                ids[0][p] = sys.unknown[0][(g.nz - 1) * l + p];
                ids[1][p] = sys.unknown[1][(g.nz - 1) * l + p];
                ids[2][p] = sys.unknown[2][g.nz * l + p];
            }
            sys.top_op = Some((op, closure, ids));
        }
        sys.prec = Preconditioner::new(&sys);
        Ok(sys)
    }

    fn cell_fluid(&self, i: isize, j: isize, k: isize) -> bool {
        if k < 0 || k >= self.grid.nz as isize {
            return false;
        }
        self.fluid[self.grid.idx(self.grid.wrap(i), self.grid.wrap(j), k as usize)]
    }

    /// Cells before and after a face (None outside the vertical range).
    fn adjacent(&self, c: usize, i: isize, j: isize, k: isize) -> (Option<usize>, Option<usize>) {
        let g = &self.grid;
        let cell = |i: isize, j: isize, k: isize| {
            if k < 0 || k >= g.nz as isize {
                None
            } else {
                Some(g.idx(g.wrap(i), g.wrap(j), k as usize))
            }
        };
        match c {
            0 => (cell(i - 1, j, k), cell(i, j, k)),
            1 => (cell(i, j - 1, k), cell(i, j, k)),
            _ => (cell(i, j, k - 1), cell(i, j, k)),
        }
    }

    pub fn face_kind(&self, c: usize, i: isize, j: isize, k: isize) -> FaceKind {
        if c == 2 && k == self.grid.nz as isize {
            let below = self.cell_fluid(i, j, k - 1);
            return match (self.top, below) {
                (TopKind::Transparent, true) => FaceKind::Active,
                (_, true) => FaceKind::Wall,
                _ => FaceKind::Dead,
            };
        }
        let (a, b) = match c {
            0 => (self.cell_fluid(i - 1, j, k), self.cell_fluid(i, j, k)),
            1 => (self.cell_fluid(i, j - 1, k), self.cell_fluid(i, j, k)),
            _ => (self.cell_fluid(i, j, k - 1), self.cell_fluid(i, j, k)),
        };
        match (a, b) {
            (true, true) => FaceKind::Active,
            (false, false) => FaceKind::Dead,
            _ => FaceKind::Wall,
        }
    }

    fn assemble(&mut self) {
        let g = self.grid;
        let vcell = g.cell_volume();
        let nu = self.nu;
        self.diag = vec![0.0; nu];
        self.nbr = vec![[NONE; 6]; nu];
        self.nbc = vec![[0.0; 6]; nu];
        self.pgrad = vec![[NONE; 2]; nu];
        self.vol = vec![vcell; nu];
        for row in 0..nu {
            let (c, f) = self.faces[row];
            let c = c as usize;
            let (i, j, k) = g.ijk(f as usize);
            let (i, j, k) = (i as isize, j as isize, k as isize);
            let top_w = c == 2 && k == g.nz as isize;
            let v = if top_w { 0.5 * vcell } else { vcell };
            self.vol[row] = v;
            let (a, b) = self.adjacent(c, i, j, k);
            self.pgrad[row] = [a.map_or(NONE, |a| self.pcell[a]), b.map_or(NONE, |b| self.pcell[b])];
            let here = g.face_pos(c, i as usize, j as usize, k as usize);
            let mut slot = 0;
            for d in 0..3 {
                let w = if d == 2 { vcell / (g.hz * g.hz) } else { v / (g.h * g.h) };
                for s in [-1isize, 1] {
                    let (ni, nj, nk) = match d {
                        0 => (i + s, j, k),
                        1 => (i, j + s, k),
                        _ => (i, j, k + s),
                    };
                    let zmax = if c == 2 { g.nz as isize } else { g.nz as isize - 1 };
                    let outside = nk < 0 || nk > zmax;
                    if outside && nk > zmax && self.top == TopKind::Transparent {
                        continue;
                    }
                    let kind = if outside { FaceKind::Dead } else { self.face_kind(c, ni, nj, nk) };
                    match kind {
                        FaceKind::Active => {
                            let nf = g.idx(g.wrap(ni), g.wrap(nj), nk as usize);
                            self.diag[row] += w;
                            self.nbr[row][slot] = self.unknown[c][nf];
                            self.nbc[row][slot] = -w;
                            slot += 1;
                        }
                        FaceKind::Wall => {
                            self.diag[row] += w;
                            let mut pos = here;
                            pos[d] += s as f64 * g.spacing(d);
                            self.bterms.push(BTerm { row: row as u32, coef: w, pos, comp: c as u8 });
                        }
                        FaceKind::Dead => {
                            self.diag[row] += 2.0 * w;
                            let mut pos = here;
                            pos[d] += 0.5 * s as f64 * g.spacing(d);
                            self.bterms.push(BTerm { row: row as u32, coef: 2.0 * w, pos, comp: c as u8 });
                        }
                    }
                }
            }
        }
    }

    pub fn num_unknowns(&self) -> (usize, usize) {
        (self.nu, self.cells.len())
    }

    pub fn closure(&self) -> Option<&DtnClosure> {
        self.top_op.as_ref().map(|t| &t.1)
    }

    /// Control volume of each face (for turning pointwise forces into loads).
    pub fn control_volume(&self, c: usize, face: usize) -> f64 {
        let id = self.unknown[c][face];
        if id == NONE {
            self.grid.cell_volume()
        } else {
            self.vol[id as usize]
        }
    }

    pub fn is_unknown(&self, c: usize, face: usize) -> bool {
        self.unknown[c][face] != NONE
    }

    pub fn is_fluid_cell(&self, cell: usize) -> bool {
        self.fluid[cell]
    }

    /// Volume-scaled load from a pointwise force evaluated at face positions.
    pub fn pointwise_load(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> [Vec<f64>; 3] {
        let g = &self.grid;
        let mut load = [vec![0.0; g.nfaces(0)], vec![0.0; g.nfaces(1)], vec![0.0; g.nfaces(2)]];
        for (row, &(c, face)) in self.faces.iter().enumerate() {
            let (i, j, k) = g.ijk(face as usize);
            load[c as usize][face as usize] = self.vol[row] * f(g.face_pos(c as usize, i, j, k))[c as usize];
        }
        load
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nu = self.nu;
        let g = &self.grid;
        let (xu, xp) = x.split_at(nu);
        let (yu, yp) = y.split_at_mut(nu);
        let areas = [g.area(0), g.area(1), g.area(2)];
        yu.par_iter_mut().enumerate().for_each(|(row, out)| {
            let mut s = self.diag[row] * xu[row];
            let nb = &self.nbr[row];
            let cf = &self.nbc[row];
            for t in 0..6 {
                if nb[t] == NONE {
                    break;
                }
                s += cf[t] * xu[nb[t] as usize];
            }
            let [pa, pb] = self.pgrad[row];
            let area = areas[self.faces[row].0 as usize];
            if pa != NONE {
                s -= area * xp[pa as usize];
            }
            if pb != NONE {
                s += area * xp[pb as usize];
            }
            *out = s;
        });
        yp.iter_mut().for_each(|v| *v = 0.0);
        for row in 0..nu {
            let [pa, pb] = self.pgrad[row];
            let flux = areas[self.faces[row].0 as usize] * xu[row];
            if pa != NONE {
                yp[pa as usize] -= flux;
            }
            if pb != NONE {
                yp[pb as usize] += flux;
            }
        }
        if let Some((op, _, ids)) = &self.top_op {
            let l = g.layer();
            let inp: Vec<Vec<f64>> = ids.iter().map(|v| v.iter().map(|&r| xu[r as usize]).collect()).collect();
            let mut out = vec![vec![0.0; l]; 3];
            {
                let [o0, o1, o2] = &mut out[..] else { unreachable!() };
                op.apply([&inp[0], &inp[1], &inp[2]], [o0, o1, o2]);
            }
            let area = g.area(2);
            for c in 0..3 {
                for p in 0..l {
                    yu[ids[c][p] as usize] += area * out[c][p];
                }
            }
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let (ru, rp) = r.split_at(self.nu);
        let (zu, zp) = z.split_at_mut(self.nu);
        self.prec.apply(self, ru, zu);
        let v = self.grid.cell_volume();
        for (a, b) in zp.iter_mut().zip(rp) {
            *a = b / v;
        }
        // keep iterates clear of the constant-pressure kernel
        if self.top == TopKind::Dirichlet {
            let mean = zp.iter().sum::<f64>() / zp.len().max(1) as f64;
            zp.iter_mut().for_each(|a| *a -= mean);
        }
    }

    /// Right-hand side (momentum part, signed divergence part) and the evaluated wall values.
    fn rhs(&self, data: &StokesData) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let mut bu = vec![0.0; self.nu];
        if let Some(load) = data.load {
            for (row, &(c, f)) in self.faces.iter().enumerate() {
                bu[row] = load[c as usize][f as usize];
            }
        }
        for t in &self.bterms {
            bu[t.row as usize] += t.coef * (data.wall)(t.pos)[t.comp as usize];
        }
        let mut gp = vec![0.0; self.cells.len()];
        if let Some(div) = data.div {
            for (p, &cell) in self.cells.iter().enumerate() {
                gp[p] = div[cell as usize];
            }
        }
        for w in &self.walls {
            let val = (data.wall)(w.pos)[w.comp as usize];
            gp[w.cell as usize] -= w.sign * g.area(w.comp as usize) * val;
        }
        (bu, gp)
    }

    pub fn solve(&self, data: &StokesData, guess: Option<&StaggeredField>) -> Result<(StaggeredField, SolveStats)> {
        let (bu, mut gp) = self.rhs(data);
        let np = self.cells.len();
        let net: f64 = gp.iter().sum();
        let scale: f64 = gp.iter().map(|v| v.abs()).sum::<f64>();
        if self.top == TopKind::Dirichlet && net.abs() > 1e-9 * scale.max(1e-300) && net.abs() > 1e-13 {
            return Err(BumpyError::FluxImbalance(net));
        }
        if self.top == TopKind::Dirichlet {
            let mean = net / np as f64;
            gp.iter_mut().for_each(|v| *v -= mean);
        }
        let mut b = bu;
        b.extend(gp.iter().map(|v| -v));
        let mut x = vec![0.0; self.nu + np];
        if let Some(f) = guess {
            for (row, &(c, face)) in self.faces.iter().enumerate() {
                x[row] = f.u[c as usize][face as usize];
            }
            for (p, &cell) in self.cells.iter().enumerate() {
                x[self.nu + p] = f.p[cell as usize];
            }
        }
        let mut stats = SolveStats::default();
        if norm(&b) == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let mut rtol = 1e-10;
            let mut y = vec![0.0; x.len()];
            loop {
                let remaining = self.cfg.max_iter.saturating_sub(stats.iterations);
                let st = minres(|a, o| self.apply(a, o), |r, z| self.precondition(r, z), &b, &mut x, rtol, remaining);
                stats.iterations += st.iterations;
                self.apply(&x, &mut y);
                let (mr, dr) = self.relative_residuals(&b, &x, &y);
                stats.momentum_rel = mr;
                stats.divergence_rel = dr;
                if mr <= self.cfg.tol && dr <= self.cfg.tol_div {
                    break;
                }
                if !(mr.is_finite() && dr.is_finite()) {
                    return Err(BumpyError::NoConvergence { iterations: stats.iterations, residual: f64::NAN });
                }
                if stats.iterations >= self.cfg.max_iter || st.iterations == 0 || rtol < 1e-15 {
                    return Err(BumpyError::NoConvergence { iterations: stats.iterations, residual: mr.max(dr) });
                }
                rtol *= 0.1;
            }
        }
        let field = self.assemble_field(&x, data);
        Ok((field, stats))
    }

    fn relative_residuals(&self, b: &[f64], x: &[f64], ax: &[f64]) -> (f64, f64) {
        let nu = self.nu;
        let ru: Vec<f64> = (0..nu).map(|i| b[i] - ax[i]).collect();
        let grad_scale = {
            let mut z = vec![0.0; x.len()];
            z[nu..].copy_from_slice(&x[nu..]);
            let mut o = vec![0.0; x.len()];
            self.apply(&z, &mut o);
            norm(&o[..nu])
        };
        let mr = norm(&ru) / (norm(&b[..nu]) + grad_scale).max(1e-300);
        let g = &self.grid;
        let flux_scale = self
            .faces
            .iter()
            .enumerate()
            .map(|(r, &(c, _))| (g.area(c as usize) * x[r]).abs())
            .fold(0.0, f64::max)
            .max(b[nu..].iter().fold(0.0, |m, v| m.max(v.abs())));
        let dr = (nu..x.len()).map(|i| (b[i] - ax[i]).abs()).fold(0.0, f64::max) / flux_scale.max(1e-300);
        (mr, dr)
    }

    fn assemble_field(&self, x: &[f64], data: &StokesData) -> StaggeredField {
        let mut f = StaggeredField::zeros(self.grid);
        for (row, &(c, face)) in self.faces.iter().enumerate() {
            f.u[c as usize][face as usize] = x[row];
        }
        for w in &self.walls {
            f.u[w.comp as usize][w.face as usize] = (data.wall)(w.pos)[w.comp as usize];
        }
        let mut mean = 0.0;
        for (p, &cell) in self.cells.iter().enumerate() {
            f.p[cell as usize] = x[self.nu + p];
            mean += x[self.nu + p];
        }
        if self.top == TopKind::Dirichlet {
            mean /= self.cells.len() as f64;
            for &cell in &self.cells {
                f.p[cell as usize] -= mean;
            }
        }
        f
    }

    /// Applies the symmetric saddle-point matrix to `[velocity unknowns, pressure unknowns]`.
    pub fn apply_saddle(&self, x: &[f64], y: &mut [f64]) {
        self.apply(x, y)
    }

    /// Saddle right-hand side for the given data (divergence rows negated).
    pub fn saddle_rhs(&self, data: &StokesData) -> Vec<f64> {
        let (mut b, gp) = self.rhs(data);
        b.extend(gp.iter().map(|v| -v));
        b
    }

    /// Packs a field into the unknown vector layout.
    pub fn pack(&self, field: &StaggeredField) -> Vec<f64> {
        let mut x = vec![0.0; self.nu + self.cells.len()];
        for (row, &(c, face)) in self.faces.iter().enumerate() {
            x[row] = field.u[c as usize][face as usize];
        }
        for (p, &cell) in self.cells.iter().enumerate() {
            x[self.nu + p] = field.p[cell as usize];
        }
        x
    }

    /// Discrete Dirichlet energy `u^T A u` of the unknown faces (equals the squared gradient
    /// norm for fields with zero wall values).
    pub fn energy(&self, field: &StaggeredField) -> f64 {
        let mut x = self.pack(field);
        x[self.nu..].iter_mut().for_each(|v| *v = 0.0);
        let mut y = vec![0.0; x.len()];
        self.apply(&x, &mut y);
        x[..self.nu].iter().zip(&y[..self.nu]).map(|(a, b)| a * b).sum()
    }

    fn apply_velocity(&self, xu: &[f64], yu: &mut [f64]) {
        let mut x = xu.to_vec();
        x.resize(self.nu + self.cells.len(), 0.0);
        let mut y = vec![0.0; x.len()];
        self.apply(&x, &mut y);
        yu.copy_from_slice(&y[..self.nu]);
    }

    /// Pressure-Schur (Uzawa) solve: conjugate gradients on `D A^-1 D^T` with preconditioned
    /// CG inner solves. Slower than [`StokesSystem::solve`]; kept as an independent check.
    pub fn solve_uzawa(&self, data: &StokesData) -> Result<(StaggeredField, SolveStats)> {
        let (bu, mut gp) = self.rhs(data);
        let np = self.cells.len();
        if self.top == TopKind::Dirichlet {
            let mean = gp.iter().sum::<f64>() / np as f64;
            gp.iter_mut().for_each(|v| *v -= mean);
        }
        let inner_tol = 1e-13;
        let inner = |rhs: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            crate::krylov::pcg(
                |a, o| self.apply_velocity(a, o),
                |r, z| self.prec.apply(self, r, z),
                rhs,
                out,
                inner_tol,
                self.cfg.max_iter,
            )
        };
        let areas = [self.grid.area(0), self.grid.area(1), self.grid.area(2)];
        // gradient term -D^T p as a velocity vector, and D u as a pressure vector
        let grad = |p: &[f64], out: &mut [f64]| {
            for (row, o) in out.iter_mut().enumerate() {
                let [pa, pb] = self.pgrad[row];
                let a = areas[self.faces[row].0 as usize];
                let mut s = 0.0;
                if pa != NONE {
                    s += a * p[pa as usize];
                }
                if pb != NONE {
                    s -= a * p[pb as usize];
                }
                *o = s;
            }
        };
        let div = |u: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for row in 0..self.nu {
                let [pa, pb] = self.pgrad[row];
                let flux = areas[self.faces[row].0 as usize] * u[row];
                if pa != NONE {
                    out[pa as usize] += flux;
                }
                if pb != NONE {
                    out[pb as usize] -= flux;
                }
            }
        };
        let nu = self.nu;
        let mut u0 = vec![0.0; nu];
        inner(&bu, &mut u0);
        let mut du0 = vec![0.0; np];
        div(&u0, &mut du0);
        // S p = G - D A^-1 F with S = D A^-1 D^T
        let rhs: Vec<f64> = (0..np).map(|i| gp[i] - du0[i]).collect();
        let schur = |p: &[f64], out: &mut [f64]| {
            let mut t = vec![0.0; nu];
            grad(p, &mut t);
            let mut s = vec![0.0; nu];
            inner(&t, &mut s);
            div(&s, out);
            if self.top == TopKind::Dirichlet {
                let m = out.iter().sum::<f64>() / out.len() as f64;
                out.iter_mut().for_each(|v| *v -= m);
            }
        };
        let v = self.grid.cell_volume();
        let mut p = vec![0.0; np];
        let st = crate::krylov::pcg(schur, |r, z| z.iter_mut().zip(r).for_each(|(a, b)| *a = b / v), &rhs, &mut p, self.cfg.tol_div * 1e-2, self.cfg.max_iter);
        if !st.converged {
            return Err(BumpyError::NoConvergence { iterations: st.iterations, residual: st.relative_residual });
        }
        let mut t = vec![0.0; nu];
        grad(&p, &mut t);
        let rhs_u: Vec<f64> = (0..nu).map(|i| bu[i] + t[i]).collect();
        let mut u = vec![0.0; nu];
        inner(&rhs_u, &mut u);
        let mut x = u;
        x.extend_from_slice(&p);
        let b = self.saddle_rhs(data);
        let mut y = vec![0.0; x.len()];
        self.apply(&x, &mut y);
        let (mr, dr) = self.relative_residuals(&b, &x, &y);
        Ok((self.assemble_field(&x, data), SolveStats { iterations: st.iterations, momentum_rel: mr, divergence_rel: dr }))
    }

    /// Residuals of an arbitrary field against the discrete equations with the given data.
    pub fn residual_report(&self, field: &StaggeredField, data: &StokesData) -> ResidualReport {
        let (ru, rp) = self.residual_vectors(field, data);
        let mom = (ru.iter().enumerate().map(|(r, v)| (v / self.vol[r]).powi(2)).sum::<f64>() / ru.len().max(1) as f64).sqrt();
        let v = self.grid.cell_volume();
        let div = rp.iter().fold(0.0f64, |m, x| m.max(x.abs() / v));
        let noslip = self
            .walls
            .iter()
            .map(|w| (field.u[w.comp as usize][w.face as usize] - (data.wall)(w.pos)[w.comp as usize]).abs())
            .fold(0.0, f64::max);
        ResidualReport { momentum: mom, divergence: div, noslip }
    }

    /// Volume-scaled residuals `F - (A u - D^T p)` per unknown face and `G - D u` per fluid cell.
    pub fn residual_vectors(&self, field: &StaggeredField, data: &StokesData) -> (Vec<f64>, Vec<f64>) {
        let (bu, gp) = self.rhs(data);
        let mut x = vec![0.0; self.nu + self.cells.len()];
        for (row, &(c, face)) in self.faces.iter().enumerate() {
            x[row] = field.u[c as usize][face as usize];
        }
        for (p, &cell) in self.cells.iter().enumerate() {
            x[self.nu + p] = field.p[cell as usize];
        }
        let mut y = vec![0.0; x.len()];
        self.apply(&x, &mut y);
        let ru = (0..self.nu).map(|i| bu[i] - y[i]).collect();
        let rp = (0..self.cells.len()).map(|p| gp[p] + y[self.nu + p]).collect();
        (ru, rp)
    }

    /// Residual vectors scattered back onto face/cell arrays.
    pub fn residual_fields(&self, field: &StaggeredField, data: &StokesData) -> ([Vec<f64>; 3], Vec<f64>) {
        let g = &self.grid;
        let (ru, rp) = self.residual_vectors(field, data);
        let mut fu = [vec![0.0; g.nfaces(0)], vec![0.0; g.nfaces(1)], vec![0.0; g.nfaces(2)]];
        for (row, &(c, face)) in self.faces.iter().enumerate() {
            fu[c as usize][face as usize] = ru[row];
        }
        let mut fp = vec![0.0; g.ncells()];
        for (p, &cell) in self.cells.iter().enumerate() {
            fp[cell as usize] = rp[p];
        }
        (fu, fp)
    }

    /// Residual fields of the non-periodic pair `(x_g u, x_g p)` with wall data `x_g w`, where
    /// `(u, p)` is periodic and `x_g` is the unwrapped coordinate along horizontal axis `g`.
    /// Computed as `x_g` times the residual of `(u, p)` plus the commutator terms, so the result
    /// is periodic. Same layout as [`StokesSystem::residual_fields`].
    pub fn growth_residual_fields(
        &self,
        g: usize,
        field: &StaggeredField,
        wall: &(dyn Fn([f64; 3]) -> [f64; 3] + Sync),
    ) -> ([Vec<f64>; 3], Vec<f64>) {
        let gr = &self.grid;
        let data = StokesData { wall, load: None, div: None };
        let (mut fu, mut fp) = self.residual_fields(field, &data);
        let lx = gr.lx;
        let wrap = |d: f64| d - lx * (d / lx).round();
        let face_x = |c: usize, f: usize| {
            let (i, j, k) = gr.ijk(f);
            gr.face_pos(c, i, j, k)[g]
        };
        let cell_x = |cell: usize| {
            let (i, j, k) = gr.ijk(cell);
            gr.cell_center(i, j, k)[g]
        };
        let area = [gr.area(0), gr.area(1), gr.area(2)];
        let mut extra = vec![0.0; self.nu];
        for (row, &(c, f)) in self.faces.iter().enumerate() {
            let (c, f) = (c as usize, f as usize);
            let xr = face_x(c, f);
            let mut s = xr * fu[c][f];
            for t in 0..6 {
                let nb = self.nbr[row][t];
                if nb == NONE {
                    break;
                }
                let (nc, nf) = self.faces[nb as usize];
                let d = wrap(face_x(nc as usize, nf as usize) - xr);
                s -= self.nbc[row][t] * d * field.u[nc as usize][nf as usize];
            }
            let [pa, pb] = self.pgrad[row];
            if pa != NONE {
                let cell = self.cells[pa as usize] as usize;
                s += area[c] * wrap(cell_x(cell) - xr) * field.p[cell];
            }
            if pb != NONE {
                let cell = self.cells[pb as usize] as usize;
                s -= area[c] * wrap(cell_x(cell) - xr) * field.p[cell];
            }
            extra[row] = s;
        }
        for t in &self.bterms {
            let (c, f) = self.faces[t.row as usize];
            let d = wrap(t.pos[g] - face_x(c as usize, f as usize));
            extra[t.row as usize] += t.coef * d * wall(t.pos)[t.comp as usize];
        }
        if let Some((op, closure, ids)) = &self.top_op {
            let l = gr.layer();
            let inp: Vec<Vec<f64>> =
                ids.iter().enumerate().map(|(c, v)| v.iter().map(|&r| field.u[c][self.faces[r as usize].1 as usize]).collect()).collect();
            let mut out = vec![vec![0.0; l]; 3];
            {
                let [o0, o1, o2] = &mut out[..] else { unreachable!() };
                op.commutator(closure, g, [&inp[0], &inp[1], &inp[2]], [o0, o1, o2]);
            }
            for c in 0..3 {
                for p in 0..l {
                    extra[ids[c][p] as usize] -= area[2] * out[c][p];
                }
            }
        }
        for (row, &(c, f)) in self.faces.iter().enumerate() {
            fu[c as usize][f as usize] = extra[row];
        }
        // continuity: x_cell times the residual minus the commutator of the flux sum
        let mut pextra: Vec<f64> = self.cells.iter().map(|&cell| cell_x(cell as usize) * fp[cell as usize]).collect();
        for (row, &(c, f)) in self.faces.iter().enumerate() {
            let [pa, pb] = self.pgrad[row];
            let flux = area[c as usize] * field.u[c as usize][f as usize];
            let xf = face_x(c as usize, f as usize);
            if pa != NONE {
                let cell = self.cells[pa as usize] as usize;
                pextra[pa as usize] -= flux * wrap(xf - cell_x(cell));
            }
            if pb != NONE {
                let cell = self.cells[pb as usize] as usize;
                pextra[pb as usize] += flux * wrap(xf - cell_x(cell));
            }
        }
        for w in &self.walls {
            let cell = self.cells[w.cell as usize] as usize;
            let flux = area[w.comp as usize] * wall(w.pos)[w.comp as usize];
            pextra[w.cell as usize] -= w.sign * flux * wrap(w.pos[g] - cell_x(cell));
        }
        for (p, &cell) in self.cells.iter().enumerate() {
            fp[cell as usize] = pextra[p];
        }
        (fu, fp)
    }

    /// Fourier trace of a solved field on the transparent top plane.
    pub fn top_trace(&self, field: &StaggeredField) -> Option<TopTrace> {
        let (op, closure, _) = self.top_op.as_ref()?;
        let g = &self.grid;
        let l = g.layer();
        let k = g.nz - 1;
        let c0 = &field.u[0][k * l..(k + 1) * l];
        let c1 = &field.u[1][k * l..(k + 1) * l];
        let w = &field.u[2][g.nz * l..(g.nz + 1) * l];
        let mut tr = op.trace(closure, [c0, c1, w]);
        let o = g.cell_center(0, 0, 0);
        tr.shift_origin([o[0], o[1]]);
        Some(tr)
    }
}

/// Inverse of the flat-box operator (per velocity component) restricted to unknown faces:
/// horizontal FFT per layer and a real tridiagonal solve per horizontal mode.
struct Preconditioner {
    fft: Option<Fft2>,
    lam: Vec<f64>,
    /// For each component: first layer index, number of layers.
    span: [(usize, usize); 3],
    top_diag: [Vec<f64>; 3],
}

impl Preconditioner {
    fn empty() -> Self {
        Preconditioner { fft: None, lam: Vec::new(), span: [(0, 0); 3], top_diag: [Vec::new(), Vec::new(), Vec::new()] }
    }

    fn new(sys: &StokesSystem) -> Self {
        let g = &sys.grid;
        let n = g.n;
        let l = g.layer();
        let k0 = (0..g.nz).find(|k| sys.fluid[k * l..(k + 1) * l].iter().any(|f| *f)).unwrap_or(0);
        let mut lam = vec![0.0; l];
        for m2 in 0..n {
            for m1 in 0..n {
                let e = |m: usize| (2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / n as f64).cos()) / (g.h * g.h);
                lam[m2 * n + m1] = e(m1) + e(m2);
            }
        }
        let transparent = sys.top == TopKind::Transparent;
        let tz = if transparent { g.nz + 1 } else { g.nz };
        let span = [(k0, g.nz - k0), (k0, g.nz - k0), (k0 + 1, tz - (k0 + 1))];
        let top_diag = match &sys.top_op {
            Some((op, _, _)) => op.diag.clone(),
            None => [vec![0.0; l], vec![0.0; l], vec![0.0; l]],
        };
        Preconditioner { fft: Some(Fft2::new(n)), lam, span, top_diag }
    }

    fn apply(&self, sys: &StokesSystem, r: &[f64], z: &mut [f64]) {
        let g = &sys.grid;
        let l = g.layer();
        let fft = self.fft.as_ref().unwrap();
        let v = g.cell_volume();
        let wz = v / (g.hz * g.hz);
        let area = g.area(2);
        let transparent = sys.top == TopKind::Transparent;
        for c in 0..3 {
            let (ks, nl) = self.span[c];
            if nl == 0 {
                continue;
            }
            let mut buf = vec![C::new(0.0, 0.0); nl * l];
            for t in 0..nl {
                let k = ks + t;
                for p in 0..l {
                    let id = sys.unknown[c][k * l + p];
                    if id != NONE {
                        buf[t * l + p] = C::new(r[id as usize], 0.0);
                    }
                }
            }
            buf.par_chunks_mut(l).for_each(|layer| fft.forward(layer));
            // tridiagonal solves, one per horizontal mode
            let mut diag = vec![0.0; nl];
            let mut cp = vec![0.0; nl];
            let mut dp = vec![C::new(0.0, 0.0); nl];
            for m in 0..l {
                let lam = self.lam[m];
                for t in 0..nl {
                    let top_row = t + 1 == nl;
                    let mut d = v * lam + 2.0 * wz;
                    if c < 2 {
                        if t == 0 {
                            d += wz;
                        }
                        if top_row {
                            d += if transparent { -wz + area * self.top_diag[c][m] } else { wz };
                        }
                    } else if top_row && transparent {
                        d = 0.5 * v * lam + wz + area * self.top_diag[2][m];
                    }
                    diag[t] = d;
                }
                // Thomas with constant off-diagonal -wz
                let off = -wz;
                cp[0] = off / diag[0];
                dp[0] = buf[m] / diag[0];
                for t in 1..nl {
                    let den = diag[t] - off * cp[t - 1];
                    cp[t] = off / den;
                    dp[t] = (buf[t * l + m] - off * dp[t - 1]) / den;
                }
                buf[(nl - 1) * l + m] = dp[nl - 1];
                for t in (0..nl - 1).rev() {
                    buf[t * l + m] = dp[t] - cp[t] * buf[(t + 1) * l + m];
                }
            }
            buf.par_chunks_mut(l).for_each(|layer| fft.inverse(layer));
            let s = 1.0 / l as f64;
            for t in 0..nl {
                let k = ks + t;
                for p in 0..l {
                    let id = sys.unknown[c][k * l + p];
                    if id != NONE {
                        z[id as usize] = buf[t * l + p].re * s;
                    }
                }
            }
        }
    }
}

/// Dirichlet-box solve: wall data on rough faces and on the top plane.
pub fn solve_dirichlet(
    domain: &DiscreteDomain,
    wall: &(dyn Fn([f64; 3]) -> [f64; 3] + Sync),
    force: Option<&(dyn Fn([f64; 3]) -> [f64; 3] + Sync)>,
    cfg: SolverConfig,
) -> Result<(StaggeredField, SolveStats)> {
    let sys = StokesSystem::new(domain, TopKind::Dirichlet, cfg)?;
    let load = force.map(|f| sys.pointwise_load(f));
    sys.solve(&StokesData { wall, load: load.as_ref(), div: None }, None)
}

/// Channel solve with the transparent top closure at the top of the domain.
pub fn solve_channel_dtn(
    domain: &DiscreteDomain,
    bottom: &(dyn Fn([f64; 3]) -> [f64; 3] + Sync),
    cfg: SolverConfig,
) -> Result<(StaggeredField, SolveStats, TopTrace)> {
    let sys = StokesSystem::new(domain, TopKind::Transparent, cfg)?;
    let (f, st) = sys.solve(&StokesData { wall: bottom, load: None, div: None }, None)?;
    let tr = sys.top_trace(&f).expect("transparent system has a trace");
    Ok((f, st, tr))
}
