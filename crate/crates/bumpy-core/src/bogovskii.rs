//! Minimum-norm discrete right inverse of the divergence with zero boundary trace.

use crate::error::{BumpyError, Result};
use crate::field::StaggeredField;
use crate::geometry::{count_components, DiscreteDomain};
use crate::grid::Grid;
use crate::stokes::{zero_wall, SolveStats, SolverConfig, StokesData, StokesSystem, TopKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance on the volume-weighted mean of an input.
const MEAN_TOL: f64 = 1e-10;

pub struct DivergenceInverse {
    pub mask: Vec<bool>,
    system: StokesSystem,
    /// Largest `|grad B f| / |f|` seen by [`DivergenceInverse::norm_track`].
    pub norm_estimate: Option<f64>,
}

pub fn build_inverse(domain: &DiscreteDomain, subregion: &[bool]) -> Result<DivergenceInverse> {
    if subregion.len() != domain.fluid.len() {
        return Err(BumpyError::Invalid("subregion mask has the wrong size".into()));
    }
    if subregion.iter().zip(&domain.fluid).any(|(s, f)| *s && !*f) {
        return Err(BumpyError::Invalid("subregion contains solid cells".into()));
    }
    build_inverse_on_grid(domain.grid, subregion)
}

/// Same as [`build_inverse`] for a bare grid; every masked cell is fluid.
pub fn build_inverse_on_grid(grid: Grid, subregion: &[bool]) -> Result<DivergenceInverse> {
    if subregion.len() != grid.ncells() {
        return Err(BumpyError::Invalid("subregion mask has the wrong size".into()));
    }
    let comps = count_components(&grid, subregion);
    if comps != 1 {
        return Err(BumpyError::DisconnectedSubregion(comps));
    }
    let cfg = SolverConfig { tol: 1e-10, tol_div: 1e-12, max_iter: 20000, mode_cut: None };
    let system = StokesSystem::from_mask(grid, subregion.to_vec(), TopKind::Dirichlet, cfg)?;
    Ok(DivergenceInverse { mask: subregion.to_vec(), system, norm_estimate: None })
}

impl DivergenceInverse {
    pub fn grid(&self) -> Grid {
        self.system.grid
    }

    pub fn system(&self) -> &StokesSystem {
        &self.system
    }

    /// Subtracts the mean over the subregion and zeroes `f` outside it.
    pub fn remove_mean(&self, f: &mut [f64]) {
        let cnt = self.mask.iter().filter(|m| **m).count() as f64;
        let mean = f.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(v, _)| v).sum::<f64>() / cnt;
        for (v, m) in f.iter_mut().zip(&self.mask) {
            *v = if *m { *v - mean } else { 0.0 };
        }
    }

    /// Discrete `L2` norm of a cell function over the subregion.
    pub fn l2(&self, f: &[f64]) -> f64 {
        let v = self.system.grid.cell_volume();
        (f.iter().zip(&self.mask).filter(|(_, m)| **m).map(|(x, _)| x * x).sum::<f64>() * v).sqrt()
    }

    /// Field `u` with `div u = f` in the subregion, zero on its boundary, least Dirichlet energy.
    pub fn apply(&self, f: &[f64]) -> Result<StaggeredField> {
        self.apply_with_stats(f).map(|(u, _)| u)
    }

    pub fn apply_with_stats(&self, f: &[f64]) -> Result<(StaggeredField, SolveStats)> {
        let g = self.system.grid;
        if f.len() != g.ncells() {
            return Err(BumpyError::Invalid("input has the wrong size".into()));
        }
        let (mut sum, mut abs) = (0.0, 0.0);
        for (v, m) in f.iter().zip(&self.mask) {
            if *m {
                sum += v;
                abs += v.abs();
            }
        }
        if sum.abs() > MEAN_TOL * abs && sum.abs() > 1e-300 {
            let cnt = self.mask.iter().filter(|m| **m).count() as f64;
            return Err(BumpyError::MeanNotZero(sum / cnt));
        }
        let vol = g.cell_volume();
        let div: Vec<f64> = f.iter().zip(&self.mask).map(|(v, m)| if *m { v * vol } else { 0.0 }).collect();
        let data = StokesData { wall: &zero_wall, load: None, div: Some(&div) };
        let (mut u, stats) = self.system.solve(&data, None)?;
        u.p.iter_mut().for_each(|p| *p = 0.0);
        Ok((u, stats))
    }

    /// `|grad u|_2` in the discrete energy norm.
    pub fn gradient_norm(&self, u: &StaggeredField) -> f64 {
        self.system.energy(u).max(0.0).sqrt()
    }

    /// Pointwise `max |div u - f|` over the subregion.
    pub fn divergence_residual(&self, u: &StaggeredField, f: &[f64]) -> f64 {
        let g = self.system.grid;
        let mut worst: f64 = 0.0;
        for k in 0..g.nz {
            for j in 0..g.n {
                for i in 0..g.n {
                    let id = g.idx(i, j, k);
                    if !self.mask[id] {
                        continue;
                    }
                    let d = (u.u[0][g.idx((i + 1) % g.n, j, k)] - u.u[0][id]) / g.h
                        + (u.u[1][g.idx(i, (j + 1) % g.n, k)] - u.u[1][id]) / g.h
                        + (u.u[2][g.idx(i, j, k + 1)] - u.u[2][id]) / g.hz;
                    worst = worst.max((d - f[id]).abs());
                }
            }
        }
        worst
    }

    /// Largest velocity magnitude on faces that are not interior to the subregion.
    pub fn trace_max(&self, u: &StaggeredField) -> f64 {
        let mut worst: f64 = 0.0;
        for c in 0..3 {
            for (face, v) in u.u[c].iter().enumerate() {
                if !self.system.is_unknown(c, face) {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst
    }

    /// `|grad B f| / |f|` for one input (mean removed first).
    pub fn ratio(&self, f: &[f64]) -> Result<f64> {
        let mut f = f.to_vec();
        self.remove_mean(&mut f);
        let nf = self.l2(&f);
        if nf == 0.0 {
            return Ok(0.0);
        }
        let u = self.apply(&f)?;
        Ok(self.gradient_norm(&u) / nf)
    }

    /// Random smooth zero-mean input: a few low cosine modes over the bounding box of the
    /// subregion with decaying random amplitudes plus a small white-noise part.
    pub fn random_input(&self, rng: &mut impl Rng) -> Vec<f64> {
        let g = self.system.grid;
        let (mut lo, mut hi) = ([f64::INFINITY; 3], [f64::NEG_INFINITY; 3]);
        for (id, m) in self.mask.iter().enumerate() {
            if *m {
                let (i, j, k) = g.ijk(id);
                let c = g.cell_center(i, j, k);
                for d in 0..3 {
                    lo[d] = lo[d].min(c[d]);
                    hi[d] = hi[d].max(c[d]);
                }
            }
        }
        let modes = 3;
        let mut coef = Vec::new();
        for a in 0..=modes {
            for b in 0..=modes {
                for c in 0..=modes {
                    let s = (1 + a * a + b * b + c * c) as f64;
                    coef.push(([a, b, c], rng.gen_range(-1.0..1.0) / s));
                }
            }
        }
        let mut f = vec![0.0; g.ncells()];
        for (id, m) in self.mask.iter().enumerate() {
            if !*m {
                continue;
            }
            let (i, j, k) = g.ijk(id);
            let x = g.cell_center(i, j, k);
            let t: Vec<f64> = (0..3).map(|d| (x[d] - lo[d]) / (hi[d] - lo[d]).max(1e-300)).collect();
            let mut v = 0.1 * rng.gen_range(-1.0..1.0);
            for (m, a) in &coef {
                v += a * (std::f64::consts::PI * m[0] as f64 * t[0]).cos()
                    * (std::f64::consts::PI * m[1] as f64 * t[1]).cos()
                    * (std::f64::consts::PI * m[2] as f64 * t[2]).cos();
            }
            f[id] = v;
        }
        self.remove_mean(&mut f);
        f
    }

    /// Max of `|grad B f| / |f|` over `trials` seeded random inputs. Inputs depend only on
    /// the seed and the trial number, so the estimate is monotone in `trials`.
    pub fn norm_track(&mut self, trials: usize, seed: u64) -> Result<f64> {
        if trials < 10 {
            return Err(BumpyError::Invalid(format!("norm tracking needs at least 10 trials, got {}", trials)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for _ in 0..trials {
            let f = self.random_input(&mut rng);
            best = best.max(self.ratio(&f)?);
        }
        self.norm_estimate = Some(best);
        Ok(best)
    }
}

/// Grid with `m^3` fluid cells filling the unit cube `[0,1]^3`, framed by one solid cell
/// column on the low side of each periodic direction.
pub fn unit_cube(m: usize) -> (Grid, Vec<bool>) {
    let h = 1.0 / m as f64;
    let n = m + 1;
    let grid = Grid { n, nz: m, lx: n as f64 * h, x0: -h, z0: 0.0, h, hz: h };
    let mut mask = vec![false; grid.ncells()];
    for k in 0..m {
        for j in 1..n {
            for i in 1..n {
                mask[grid.idx(i, j, k)] = true;
            }
        }
    }
    (grid, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_gives_zero() {
        let (g, m) = unit_cube(8);
        let b = build_inverse_on_grid(g, &m).unwrap();
        let u = b.apply(&vec![0.0; g.ncells()]).unwrap();
        assert!(u.u.iter().all(|c| c.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn nonzero_mean_rejected() {
        let (g, m) = unit_cube(8);
        let b = build_inverse_on_grid(g, &m).unwrap();
        let f: Vec<f64> = m.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect();
        assert!(matches!(b.apply(&f), Err(BumpyError::MeanNotZero(_))));
    }

    #[test]
    fn disconnected_rejected() {
        let (g, mut m) = unit_cube(8);
        for k in 0..8 {
            for j in 0..g.n {
                m[g.idx(4, j, k)] = false;
            }
        }
        assert!(matches!(build_inverse_on_grid(g, &m), Err(BumpyError::DisconnectedSubregion(2))));
    }
}
