//! Staggered (MAC) grid layout: horizontally periodic, vertically bounded.
//!
//! Cells are indexed `(i, j, k)` with `i` fastest. Velocity component 0 lives on x-faces,
//! face `i` sitting at `x0 + i*h` between cells `i-1` and `i` (periodic wrap). Component 1
//! likewise in y. Component 2 lives on z-faces `k = 0..=nz`, face `k` at `z0 + k*hz`.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub nz: usize,
    /// Horizontal period (both directions).
    pub lx: f64,
    pub x0: f64,
    pub z0: f64,
    pub h: f64,
    pub hz: f64,
}

impl Grid {
    pub fn new(n: usize, nz: usize, lx: f64, z0: f64, z1: f64) -> Grid {
        Grid { n, nz, lx, x0: -0.5 * lx, z0, h: lx / n as f64, hz: (z1 - z0) / nz as f64 }
    }

    pub fn z1(&self) -> f64 {
        self.z0 + self.nz as f64 * self.hz
    }

    pub fn ncells(&self) -> usize {
        self.n * self.n * self.nz
    }

    pub fn layer(&self) -> usize {
        self.n * self.n
    }

    /// Number of faces for velocity component `c`.
    pub fn nfaces(&self, c: usize) -> usize {
        if c == 2 {
            self.n * self.n * (self.nz + 1)
        } else {
            self.ncells()
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    #[inline]
    pub fn ijk(&self, id: usize) -> (usize, usize, usize) {
        let i = id % self.n;
        let j = (id / self.n) % self.n;
        let k = id / self.layer();
        (i, j, k)
    }

    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.n as isize) as usize
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.x0 + (i as f64 + 0.5) * self.h,
            self.x0 + (j as f64 + 0.5) * self.h,
            self.z0 + (k as f64 + 0.5) * self.hz,
        ]
    }

    /// Position of face `(i,j,k)` of component `c`.
    pub fn face_pos(&self, c: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut p = self.cell_center(i, j, k);
        match c {
            0 => p[0] -= 0.5 * self.h,
            1 => p[1] -= 0.5 * self.h,
            _ => p[2] = self.z0 + k as f64 * self.hz,
        }
        p
    }

    pub fn cell_volume(&self) -> f64 {
        self.h * self.h * self.hz
    }

    /// Spacing along axis `d`.
    pub fn spacing(&self, d: usize) -> f64 {
        if d == 2 {
            self.hz
        } else {
            self.h
        }
    }

    /// Area of a face normal to axis `d`.
    pub fn area(&self, d: usize) -> f64 {
        if d == 2 {
            self.h * self.h
        } else {
            self.h * self.hz
        }
    }

    /// Horizontal wavenumber for FFT index `m`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        let mm = if m <= self.n / 2 { m as f64 } else { m as f64 - self.n as f64 };
        2.0 * std::f64::consts::PI * mm / self.lx
    }

    /// Cell index containing a point, clamped vertically, wrapped horizontally.
    pub fn locate(&self, x: [f64; 3]) -> (usize, usize, usize) {
        let fi = ((x[0] - self.x0) / self.h).floor() as isize;
        let fj = ((x[1] - self.x0) / self.h).floor() as isize;
        let fk = ((x[2] - self.z0) / self.hz).floor() as isize;
        (self.wrap(fi), self.wrap(fj), fk.clamp(0, self.nz as isize - 1) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_positions() {
        let g = Grid::new(8, 5, 2.0 * std::f64::consts::PI, -1.0, 4.0);
        for id in [0, 7, 8, 63, 64, 319] {
            let (i, j, k) = g.ijk(id);
            assert_eq!(g.idx(i, j, k), id);
        }
        assert!((g.hz - 1.0).abs() < 1e-15);
        assert_eq!(g.face_pos(2, 0, 0, 5)[2], 4.0);
        assert_eq!(g.wrap(-1), 7);
        assert!((g.wavenumber(7) + 1.0).abs() < 1e-12);
    }
}
