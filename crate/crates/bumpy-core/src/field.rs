//! Face-centered velocity and cell-centered pressure on a staggered grid.

use crate::error::{BumpyError, Result};
use crate::grid::Grid;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredField {
    pub grid: Grid,
    pub u: [Vec<f64>; 3],
    pub p: Vec<f64>,
}

const FIELD_MAGIC: &[u8; 4] = b"BFLD";

impl StaggeredField {
    pub fn zeros(grid: Grid) -> Self {
        StaggeredField {
            grid,
            u: [vec![0.0; grid.nfaces(0)], vec![0.0; grid.nfaces(1)], vec![0.0; grid.nfaces(2)]],
            p: vec![0.0; grid.ncells()],
        }
    }

    /// Samples a velocity field at face positions and a pressure at cell centers.
    pub fn sample(grid: Grid, vel: impl Fn([f64; 3]) -> [f64; 3], pres: impl Fn([f64; 3]) -> f64) -> Self {
        let mut f = StaggeredField::zeros(grid);
        for c in 0..3 {
            let nk = if c == 2 { grid.nz + 1 } else { grid.nz };
            for k in 0..nk {
                for j in 0..grid.n {
                    for i in 0..grid.n {
                        f.u[c][grid.idx(i, j, k)] = vel(grid.face_pos(c, i, j, k))[c];
                    }
                }
            }
        }
        for k in 0..grid.nz {
            for j in 0..grid.n {
                for i in 0..grid.n {
                    f.p[grid.idx(i, j, k)] = pres(grid.cell_center(i, j, k));
                }
            }
        }
        f
    }

    pub fn scale(&mut self, a: f64) {
        for c in 0..3 {
            self.u[c].iter_mut().for_each(|v| *v *= a);
        }
        self.p.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &StaggeredField) {
        for c in 0..3 {
            for (x, y) in self.u[c].iter_mut().zip(&other.u[c]) {
                *x += a * y;
            }
        }
        for (x, y) in self.p.iter_mut().zip(&other.p) {
            *x += a * y;
        }
    }

    /// Velocity at the center of cell `(i,j,k)` by averaging the two faces of each component.
    pub fn cell_velocity(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let g = &self.grid;
        [
            0.5 * (self.u[0][g.idx(i, j, k)] + self.u[0][g.idx((i + 1) % g.n, j, k)]),
            0.5 * (self.u[1][g.idx(i, j, k)] + self.u[1][g.idx(i, (j + 1) % g.n, k)]),
            0.5 * (self.u[2][g.idx(i, j, k)] + self.u[2][g.idx(i, j, k + 1)]),
        ]
    }

    /// Velocity gradient `g[a][b] = d u_a / d x_b` at the center of cell `(i,j,k)`.
    /// Diagonal entries use the two faces of the cell; off-diagonal entries average centered
    /// differences of neighbouring cell velocities (one-sided at the vertical ends).
    pub fn cell_gradient(&self, i: usize, j: usize, k: usize) -> [[f64; 3]; 3] {
        let g = &self.grid;
        let mut out = [[0.0; 3]; 3];
        out[0][0] = (self.u[0][g.idx((i + 1) % g.n, j, k)] - self.u[0][g.idx(i, j, k)]) / g.h;
        out[1][1] = (self.u[1][g.idx(i, (j + 1) % g.n, k)] - self.u[1][g.idx(i, j, k)]) / g.h;
        out[2][2] = (self.u[2][g.idx(i, j, k + 1)] - self.u[2][g.idx(i, j, k)]) / g.hz;
        let (ip, im) = ((i + 1) % g.n, (i + g.n - 1) % g.n);
        let (jp, jm) = ((j + 1) % g.n, (j + g.n - 1) % g.n);
        let cx = (self.cell_velocity(ip, j, k), self.cell_velocity(im, j, k));
        let cy = (self.cell_velocity(i, jp, k), self.cell_velocity(i, jm, k));
        let (kp, km, dz) = if k == 0 {
            (1, 0, g.hz)
        } else if k + 1 == g.nz {
            (k, k - 1, g.hz)
        } else {
            (k + 1, k - 1, 2.0 * g.hz)
        };
        let cz = (self.cell_velocity(i, j, kp), self.cell_velocity(i, j, km));
        for a in 0..3 {
            if a != 0 {
                out[a][0] = (cx.0[a] - cx.1[a]) / (2.0 * g.h);
            }
            if a != 1 {
                out[a][1] = (cy.0[a] - cy.1[a]) / (2.0 * g.h);
            }
            if a != 2 {
                out[a][2] = (cz.0[a] - cz.1[a]) / dz;
            }
        }
        out
    }

    /// As [`cell_gradient`](Self::cell_gradient), but a solid neighbour is replaced by the
    /// mirror value `-u` so off-diagonal differences see zero velocity on the shared face.
    pub fn cell_gradient_in(&self, fluid: &[bool], i: usize, j: usize, k: usize) -> [[f64; 3]; 3] {
        let g = &self.grid;
        let mut out = self.cell_gradient(i, j, k);
        let own = self.cell_velocity(i, j, k);
        let side = |i: usize, j: usize, k: usize| -> [f64; 3] {
            if fluid[g.idx(i, j, k)] {
                self.cell_velocity(i, j, k)
            } else {
                own.map(|v| -v)
            }
        };
        let (ip, im) = ((i + 1) % g.n, (i + g.n - 1) % g.n);
        let (jp, jm) = ((j + 1) % g.n, (j + g.n - 1) % g.n);
        let cx = (side(ip, j, k), side(im, j, k));
        let cy = (side(i, jp, k), side(i, jm, k));
        let below = if k == 0 { None } else { Some(side(i, j, k - 1)) };
        let above = if k + 1 == g.nz { None } else { Some(side(i, j, k + 1)) };
        let cz = match (above, below) {
            (Some(a), Some(b)) => Some((a, b, 2.0 * g.hz)),
            (Some(a), None) => Some((a, own, g.hz)),
            (None, Some(b)) => Some((own, b, g.hz)),
            (None, None) => None,
        };
        for a in 0..3 {
            if a != 0 {
                out[a][0] = (cx.0[a] - cx.1[a]) / (2.0 * g.h);
            }
            if a != 1 {
                out[a][1] = (cy.0[a] - cy.1[a]) / (2.0 * g.h);
            }
            if let (true, Some((p, m, dz))) = (a != 2, cz) {
                out[a][2] = (p[a] - m[a]) / dz;
            }
        }
        out
    }

    /// Raw binary: magic, n, nz (u32), lx, x0, z0, h, hz (f64), then u0, u1, u2, p as f64.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let g = &self.grid;
        f.write_all(FIELD_MAGIC)?;
        f.write_all(&(g.n as u32).to_le_bytes())?;
        f.write_all(&(g.nz as u32).to_le_bytes())?;
        for v in [g.lx, g.x0, g.z0, g.h, g.hz] {
            f.write_all(&v.to_le_bytes())?;
        }
        for arr in self.u.iter().chain(std::iter::once(&self.p)) {
            for v in arr {
                f.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 52 || &buf[0..4] != FIELD_MAGIC {
            return Err(BumpyError::Invalid("not a field file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let (n, nz) = (u32_at(4), u32_at(8));
        let grid = Grid { n, nz, lx: f64_at(12), x0: f64_at(20), z0: f64_at(28), h: f64_at(36), hz: f64_at(44) };
        let mut field = StaggeredField::zeros(grid);
        let total = 3 * grid.ncells() + grid.layer() + grid.ncells();
        if buf.len() != 52 + 8 * total {
            return Err(BumpyError::Invalid("field payload size mismatch".into()));
        }
        let mut o = 52;
        for arr in field.u.iter_mut().chain(std::iter::once(&mut field.p)) {
            for v in arr.iter_mut() {
                *v = f64_at(o);
                o += 8;
            }
        }
        Ok(field)
    }

    /// Trilinear interpolation of each velocity component on its own lattice and of the
    /// pressure on cell centers; periodic horizontally, clamped vertically.
    pub fn interpolate(&self, x: [f64; 3]) -> ([f64; 3], f64) {
        let g = &self.grid;
        let mut v = [0.0; 3];
        for (c, out) in v.iter_mut().enumerate() {
            let off = [if c == 0 { 0.0 } else { 0.5 }, if c == 1 { 0.0 } else { 0.5 }, if c == 2 { 0.0 } else { 0.5 }];
            let nk = if c == 2 { g.nz + 1 } else { g.nz };
            *out = self.lerp(&self.u[c], x, off, nk);
        }
        (v, self.lerp(&self.p, x, [0.5; 3], g.nz))
    }

    fn lerp(&self, data: &[f64], x: [f64; 3], off: [f64; 3], nk: usize) -> f64 {
        let g = &self.grid;
        let fx = (x[0] - g.x0) / g.h - off[0];
        let fy = (x[1] - g.x0) / g.h - off[1];
        let fz = ((x[2] - g.z0) / g.hz - off[2]).clamp(0.0, (nk - 1) as f64);
        let (i0, j0) = (fx.floor(), fy.floor());
        let k0 = fz.floor().min((nk.max(2) - 2) as f64);
        let (tx, ty, tz) = (fx - i0, fy - j0, (fz - k0).min(1.0));
        let k0 = k0 as usize;
        let mut s = 0.0;
        for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
            for (dj, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (dk, wz) in [(0, 1.0 - tz), (1, tz)] {
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        let i = g.wrap(i0 as isize + di);
                        let j = g.wrap(j0 as isize + dj);
                        s += w * data[g.idx(i, j, (k0 + dk).min(nk - 1))];
                    }
                }
            }
        }
        s
    }

    /// Vertical line probe through cell column `(i,j)`: rows `z, u0, u1, u2, p` at cell centers.
    pub fn column_csv(&self, i: usize, j: usize) -> String {
        let mut s = String::from("z,u0,u1,u2,p\n");
        for k in 0..self.grid.nz {
            let v = self.cell_velocity(i, j, k);
            let z = self.grid.cell_center(i, j, k)[2];
            s += &format!("{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n", z, v[0], v[1], v[2], self.p[self.grid.idx(i, j, k)]);
        }
        s
    }
}
