//! Excess functionals on bumpy cubes `B_rho = (-rho, rho)^2 x (-inf, rho)` about the origin,
//! their decay across scales, and a battery of local inequalities.
//!
//! Candidates are discrete fields sampled on the same grid as the data, so every gradient
//! goes through the same stencil and members of a candidate space have zero excess.

use crate::boundary_layers::{corrector_config, Corrector1, Corrector2, LayerSolver};
use crate::error::{BumpyError, Result};
use crate::field::StaggeredField;
use crate::geometry::{DiscreteDomain, DomainLayout};
use crate::grid::Grid;
use crate::navier_stokes::{averaging, cube_norm, gradient_magnitude, morrey_check, MorreyReport};
use crate::polynomials::NoSlipPolynomial;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Box `(-P pi eps, P pi eps)^2 x (-eps, 1)` holding `periods` roughness cells per direction.
pub fn macro_layout(eps: f64, periods: usize, cells_per_period: usize, cells_per_eps: f64) -> DomainLayout {
    DomainLayout { eps, periods, cells_per_period, cells_per_eps, top: 1.0 }
}

fn integral(v: f64) -> Option<usize> {
    let r = v.round();
    ((v - r).abs() < 1e-6).then_some(r as usize)
}

/// Unit-cell layout whose lattice coincides with the macro lattice scaled by `1/eps`, up to `top`.
pub fn cell_layout(m: &DomainLayout, top: f64) -> Result<DomainLayout> {
    let macro_nz = (m.top / m.eps + 1.0) * m.cells_per_eps;
    let cell_nz = (top + 1.0) * m.cells_per_eps;
    if integral(macro_nz).is_none() || integral(cell_nz).is_none() {
        return Err(BumpyError::Invalid(format!(
            "vertical lattices do not align: {macro_nz} macro cells, {cell_nz} cell layers"
        )));
    }
    Ok(DomainLayout { eps: 1.0, periods: 1, cells_per_period: m.cells_per_period, cells_per_eps: m.cells_per_eps, top })
}

/// First- and second-order correctors of one unit cell, used at scale `eps`.
pub struct CorrectorSet {
    pub eps: f64,
    pub first: Vec<Corrector1>,
    pub second: Vec<Corrector2>,
}

impl CorrectorSet {
    pub fn build(cell: &DiscreteDomain, eps: f64, with_second: bool) -> Result<CorrectorSet> {
        let ls = LayerSolver::new(cell, corrector_config())?;
        let first = vec![ls.solve_bl1(1, None)?, ls.solve_bl1(2, None)?];
        let mut second = Vec::new();
        if with_second {
            for j in 1..=6 {
                second.push(ls.solve_bl2(j, &first)?);
            }
        }
        Ok(CorrectorSet { eps, first, second })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for c in &self.first {
            c.save(dir)?;
        }
        for c in &self.second {
            c.save(dir)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, eps: f64) -> Result<CorrectorSet> {
        let first = vec![Corrector1::load(dir, 1)?, Corrector1::load(dir, 2)?];
        let mut second = Vec::new();
        if dir.join("v21.bfld").exists() {
            for j in 1..=6 {
                second.push(Corrector2::load(dir, j)?);
            }
        }
        Ok(CorrectorSet { eps, first, second })
    }

    fn first_order(&self, k: u8) -> Option<&Corrector1> {
        self.first.iter().find(|c| c.j == k)
    }
}

fn dead_face(grid: &Grid, fluid: &[bool], c: usize, face: usize) -> bool {
    let (i, j, k) = grid.ijk(face);
    let cell = |i: isize, j: isize, k: isize| -> bool {
        k >= 0 && k < grid.nz as isize && fluid[grid.idx(grid.wrap(i), grid.wrap(j), k as usize)]
    };
    let (i, j, k) = (i as isize, j as isize, k as isize);
    let (a, b) = match c {
        0 => (cell(i - 1, j, k), cell(i, j, k)),
        1 => (cell(i, j - 1, k), cell(i, j, k)),
        _ => (cell(i, j, k - 1), cell(i, j, k)),
    };
    !a && !b
}

/// Samples a candidate on the data lattice, zero on dead faces and in solid cells.
pub fn sample_candidate(
    grid: Grid,
    fluid: &[bool],
    vel: impl Fn([f64; 3]) -> [f64; 3] + Sync,
    pres: impl Fn([f64; 3]) -> f64 + Sync,
) -> StaggeredField {
    let mut f = StaggeredField::zeros(grid);
    for c in 0..3 {
        f.u[c].par_iter_mut().enumerate().for_each(|(face, v)| {
            if !dead_face(&grid, fluid, c, face) {
                let (i, j, k) = grid.ijk(face);
                *v = vel(grid.face_pos(c, i, j, k))[c];
            }
        });
    }
    f.p.par_iter_mut().enumerate().for_each(|(id, v)| {
        if fluid[id] {
            let (i, j, k) = grid.ijk(id);
            *v = pres(grid.cell_center(i, j, k));
        }
    });
    f
}

/// Candidate basis of the given order on the macro lattice: order 0 the two linear shears,
/// order 1 the shears corrected by first-order layers, order 2 those plus the six corrected
/// quadratics.
pub fn candidate_basis(order: u8, domain: &DiscreteDomain, set: Option<&CorrectorSet>) -> Result<Vec<StaggeredField>> {
    let (g, fluid) = (domain.grid, &domain.fluid[..]);
    let mut out = Vec::new();
    if order == 0 {
        for k in 1..=2 {
            let p = NoSlipPolynomial::new(1, k)?;
            out.push(sample_candidate(g, fluid, |x| p.velocity(x), |_| 0.0));
        }
        return Ok(out);
    }
    if order > 2 {
        return Err(BumpyError::Invalid(format!("excess order {order}")));
    }
    let set = set.ok_or(BumpyError::MissingCorrectors(order))?;
    let eps = set.eps;
    for k in 1..=2 {
        let c1 = set.first_order(k).ok_or(BumpyError::MissingCorrectors(order))?;
        let p = NoSlipPolynomial::new(1, k)?;
        let vel = |x: [f64; 3]| {
            let (v, _) = c1.eval(x.map(|a| a / eps));
            let pv = p.velocity(x);
            [pv[0] + eps * v[0], pv[1] + eps * v[1], pv[2] + eps * v[2]]
        };
        out.push(sample_candidate(g, fluid, vel, |x| c1.eval(x.map(|a| a / eps)).1));
    }
    if order == 2 {
        if !domain.periodic {
            return Err(BumpyError::NonPeriodicDomain);
        }
        if set.second.len() != 6 {
            return Err(BumpyError::MissingCorrectors(2));
        }
        for c2 in &set.second {
            let p = NoSlipPolynomial::new(2, c2.j)?;
            let c1 = c2.growth.and_then(|gt| set.first_order(gt.source));
            // evaluation errors only arise for a missing source, checked once here
            c2.eval(c1, [0.0, 0.0, 1.0])?;
            let vel = |x: [f64; 3]| {
                let (v, _) = c2.eval(c1, x.map(|a| a / eps)).expect("source present");
                let pv = p.velocity(x);
                [pv[0] + eps * eps * v[0], pv[1] + eps * eps * v[1], pv[2] + eps * eps * v[2]]
            };
            let pres = |x: [f64; 3]| p.pressure(x) + eps * c2.eval(c1, x.map(|a| a / eps)).expect("source present").1;
            out.push(sample_candidate(g, fluid, vel, pres));
        }
    }
    Ok(out)
}

/// Which cells a cube average runs over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// Fluid cells of `B_rho`.
    Bumpy,
    /// All cells of `(-rho, rho)^2 x (z0, rho)`, zero-extended.
    Cube,
}

/// Cells whose centers lie in the region of radius `r` (nearest-cell truncation).
pub fn region_cells(grid: &Grid, fluid: &[bool], region: Region, r: f64) -> Vec<usize> {
    let tol = 1e-9 * grid.h;
    let cols: Vec<usize> = (0..grid.n).filter(|&i| (grid.x0 + (i as f64 + 0.5) * grid.h).abs() <= r + tol).collect();
    let mut out = Vec::new();
    for k in 0..grid.nz {
        let z = grid.z0 + (k as f64 + 0.5) * grid.hz;
        if z > r + tol {
            break;
        }
        for &j in &cols {
            for &i in &cols {
                let id = grid.idx(i, j, k);
                if region == Region::Cube || fluid[id] {
                    out.push(id);
                }
            }
        }
    }
    out
}

/// Upper-triangular factor of `[A | b]` for rows streamed in chunks.
fn stacked_r(blocks: Vec<DMatrix<f64>>, cols: usize) -> DMatrix<f64> {
    blocks
        .into_iter()
        .map(|m| {
            if m.nrows() == 0 {
                DMatrix::zeros(0, cols)
            } else {
                m.qr().r()
            }
        })
        .reduce(|a, b| {
            let mut s = DMatrix::zeros(a.nrows() + b.nrows(), cols);
            s.rows_mut(0, a.nrows()).copy_from(&a);
            s.rows_mut(a.nrows(), b.nrows()).copy_from(&b);
            if s.nrows() == 0 {
                s
            } else {
                s.qr().r()
            }
        })
        .unwrap_or_else(|| DMatrix::zeros(0, cols))
}

/// Least-squares fit of the gradient of `u` by the basis gradients over `cells`: returns
/// coefficients and the mean squared misfit per cell.
pub fn gradient_fit(u: &StaggeredField, basis: &[StaggeredField], fluid: &[bool], cells: &[usize]) -> (Vec<f64>, f64) {
    let kb = basis.len();
    let cols = kb + 1;
    if cells.is_empty() {
        return (vec![0.0; kb], 0.0);
    }
    let g = u.grid;
    let blocks: Vec<DMatrix<f64>> = cells
        .par_chunks(1024)
        .map(|chunk| {
            let mut m = DMatrix::zeros(9 * chunk.len(), cols);
            for (r, &id) in chunk.iter().enumerate() {
                let (i, j, k) = g.ijk(id);
                for (b, f) in basis.iter().enumerate() {
                    let gr = f.cell_gradient_in(fluid, i, j, k);
                    for e in 0..9 {
                        m[(9 * r + e, b)] = gr[e / 3][e % 3];
                    }
                }
                let gr = u.cell_gradient_in(fluid, i, j, k);
                for e in 0..9 {
                    m[(9 * r + e, kb)] = gr[e / 3][e % 3];
                }
            }
            m.qr().r()
        })
        .collect();
    let r = stacked_r(blocks, cols);
    let n = r.nrows().min(cols);
    let mut full = DMatrix::zeros(cols, cols);
    full.rows_mut(0, n).copy_from(&r.rows(0, n));
    let misfit = full[(kb, kb)].powi(2);
    if kb == 0 {
        return (Vec::new(), misfit / cells.len() as f64);
    }
    let rk = full.view((0, 0), (kb, kb)).into_owned();
    let z = DVector::from_iterator(kb, (0..kb).map(|i| full[(i, kb)]));
    let scale = (0..kb).map(|i| rk[(i, i)].abs()).fold(0.0, f64::max);
    let coeffs = if scale == 0.0 {
        vec![0.0; kb]
    } else {
        rk.svd(true, true).solve(&z, 1e-12 * scale).map(|c| c.iter().cloned().collect()).unwrap_or(vec![0.0; kb])
    };
    (coeffs, misfit / cells.len() as f64)
}

/// Sampling points `s in [1/16, 1/4]` of the pressure oscillation.
pub fn pressure_scales() -> [f64; 9] {
    std::array::from_fn(|i| 1.0 / 16.0 + i as f64 * (0.25 - 1.0 / 16.0) / 8.0)
}

/// `max_{s,t} |mean_{s rho} q - mean_{t rho} q|` for `q = p - sum c_k pi_k`, over the
/// non-empty regions.
pub fn pressure_oscillation(
    u: &StaggeredField,
    basis: &[StaggeredField],
    coeffs: &[f64],
    fluid: &[bool],
    region: Region,
    rho: f64,
) -> f64 {
    let g = u.grid;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in pressure_scales() {
        let cells = region_cells(&g, fluid, region, s * rho);
        if cells.is_empty() {
            continue;
        }
        let m = cells
            .iter()
            .map(|&id| u.p[id] - basis.iter().zip(coeffs).map(|(b, c)| c * b.p[id]).sum::<f64>())
            .sum::<f64>()
            / cells.len() as f64;
        lo = lo.min(m);
        hi = hi.max(m);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcessValue {
    pub value: f64,
    pub gradient_term: f64,
    pub pressure_term: f64,
    pub coefficients: Vec<f64>,
}

/// Candidate basis for one excess order on a fixed domain.
pub struct ExcessContext {
    pub order: u8,
    pub eps: f64,
    pub grid: Grid,
    pub fluid: Vec<bool>,
    pub basis: Vec<StaggeredField>,
}

impl ExcessContext {
    pub fn new(domain: &DiscreteDomain, order: u8, set: Option<&CorrectorSet>) -> Result<ExcessContext> {
        let basis = candidate_basis(order, domain, set)?;
        Ok(ExcessContext { order, eps: domain.layout.eps, grid: domain.grid, fluid: domain.fluid.clone(), basis })
    }

    pub fn compute(&self, u: &StaggeredField, rho: f64) -> Result<ExcessValue> {
        self.compute_in(u, rho, Region::Bumpy)
    }

    pub fn compute_in(&self, u: &StaggeredField, rho: f64, region: Region) -> Result<ExcessValue> {
        check_radius(rho, self.eps)?;
        let cells = region_cells(&self.grid, &self.fluid, region, rho);
        let (coefficients, misfit) = gradient_fit(u, &self.basis, &self.fluid, &cells);
        let pressure_term = pressure_oscillation(u, &self.basis, &coefficients, &self.fluid, region, rho);
        let gradient_term = misfit.max(0.0).sqrt();
        Ok(ExcessValue { value: gradient_term + pressure_term, gradient_term, pressure_term, coefficients })
    }
}

fn check_radius(rho: f64, eps: f64) -> Result<()> {
    if !(rho > eps && rho <= 0.5 + 1e-12) {
        return Err(BumpyError::RadiusOutOfRange(rho));
    }
    Ok(())
}

/// One-shot excess of `(u, p)` at radius `rho`.
pub fn compute_excess(
    u: &StaggeredField,
    domain: &DiscreteDomain,
    rho: f64,
    order: u8,
    set: Option<&CorrectorSet>,
) -> Result<ExcessValue> {
    check_radius(rho, domain.layout.eps)?;
    ExcessContext::new(domain, order, set)?.compute(u, rho)
}

/// `Phi`: the zeroth-order excess with the zero candidate.
pub fn phi(u: &StaggeredField, fluid: &[bool], rho: f64, region: Region) -> f64 {
    let cells = region_cells(&u.grid, fluid, region, rho);
    let (_, misfit) = gradient_fit(u, &[], fluid, &cells);
    misfit.sqrt() + pressure_oscillation(u, &[], &[], fluid, region, rho)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    /// 95% confidence interval of the slope.
    pub interval: [f64; 2],
    /// Fitted constant `C` in `value ~ C r^slope`.
    pub constant: f64,
    pub points: usize,
}

fn t_quantile(df: usize) -> f64 {
    const T: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    if df == 0 {
        f64::INFINITY
    } else if df <= 10 {
        T[df - 1]
    } else {
        1.96 + 2.4 / df as f64
    }
}

/// Log-log least squares over the radii with the largest and smallest dropped.
pub fn slope_fit(radii: &[f64], values: &[f64]) -> SlopeFit {
    let n = radii.len();
    let (r, v) = if n > 2 { (&radii[1..n - 1], &values[1..n - 1]) } else { (radii, values) };
    let pts: Vec<(f64, f64)> =
        r.iter().zip(v).filter(|(_, y)| **y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len();
    if m < 2 {
        return SlopeFit { slope: f64::NAN, interval: [f64::NAN; 2], constant: 0.0, points: m };
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (slope, icpt, rms) = crate::linalg::line_fit(&xs, &ys);
    let mx = xs.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let half = if m > 2 {
        let s2 = rms * rms * m as f64 / (m - 2) as f64;
        t_quantile(m - 2) * (s2 / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    SlopeFit { slope, interval: [slope - half, slope + half], constant: icpt.exp(), points: m }
}

/// Radii `4 eps 2^(k/per_octave)` up to `1/4`.
pub fn scan_radii(eps: f64, per_octave: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let r = 4.0 * eps * 2f64.powf(k as f64 / per_octave as f64);
        if r > 0.25 * (1.0 + 1e-9) {
            break;
        }
        out.push(r);
        k += 1;
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcessReport {
    pub eps: f64,
    pub radii: Vec<f64>,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    pub h_tilde: Vec<f64>,
    /// Empty when the order was not requested.
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// Minimizing coefficients per radius and order (`coefficients[order][radius]`).
    pub coefficients: BTreeMap<u8, Vec<Vec<f64>>>,
    /// `Phi(1/2)`, the reference value of the boundedness check.
    pub phi_half: f64,
    /// Corrected-pressure averages over `B_{4 eps}` with the coefficients of the smallest radius.
    pub anchor1: Option<f64>,
    pub anchor2: Option<f64>,
    pub fits: BTreeMap<String, SlopeFit>,
}

impl ExcessReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,H,Phi,H_tilde,H1,H2\n");
        let cell = |v: &Vec<f64>, i: usize| v.get(i).map_or(String::new(), |x| format!("{x:.16e}"));
        for (i, r) in self.radii.iter().enumerate() {
            s += &format!(
                "{:.16e},{},{},{},{},{}\n",
                r,
                cell(&self.h, i),
                cell(&self.phi, i),
                cell(&self.h_tilde, i),
                cell(&self.h1, i),
                cell(&self.h2, i)
            );
        }
        s
    }

    pub fn slopes_csv(&self) -> String {
        let mut s = String::from("quantity,slope,lower,upper,constant,points\n");
        for (k, f) in &self.fits {
            s += &format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                k, f.slope, f.interval[0], f.interval[1], f.constant, f.points
            );
        }
        s
    }
}

fn anchor(ctx: &ExcessContext, u: &StaggeredField, coeffs: &[f64]) -> Option<f64> {
    let cells = region_cells(&ctx.grid, &ctx.fluid, Region::Bumpy, 4.0 * ctx.eps);
    if cells.is_empty() {
        return None;
    }
    let s: f64 = cells
        .iter()
        .map(|&id| u.p[id] - ctx.basis.iter().zip(coeffs).map(|(b, c)| c * b.p[id]).sum::<f64>())
        .sum();
    Some(s / cells.len() as f64)
}

/// Excess values over `radii` for the zeroth order (always) and the orders with a context.
pub fn excess_scan(u: &StaggeredField, radii: &[f64], eps: f64, contexts: &[&ExcessContext]) -> Result<ExcessReport> {
    if radii.len() < 4 {
        return Err(BumpyError::Invalid(format!("{} radii, at least 4 needed", radii.len())));
    }
    for &r in radii {
        check_radius(r, eps)?;
    }
    let zero = contexts.iter().find(|c| c.order == 0);
    let own;
    let zero = match zero {
        Some(z) => *z,
        None => {
            let g = u.grid;
            let fluid = contexts
                .first()
                .map(|c| c.fluid.clone())
                .ok_or_else(|| BumpyError::Invalid("no excess context".into()))?;
            own = ExcessContext {
                order: 0,
                eps,
                grid: g,
                basis: {
                    let mut b = Vec::new();
                    for k in 1..=2 {
                        let p = NoSlipPolynomial::new(1, k)?;
                        b.push(sample_candidate(g, &fluid, |x| p.velocity(x), |_| 0.0));
                    }
                    b
                },
                fluid,
            };
            &own
        }
    };
    let mut rep = ExcessReport {
        eps,
        radii: radii.to_vec(),
        h: Vec::new(),
        phi: Vec::new(),
        h_tilde: Vec::new(),
        h1: Vec::new(),
        h2: Vec::new(),
        coefficients: BTreeMap::new(),
        phi_half: phi(u, &zero.fluid, 0.5, Region::Bumpy),
        anchor1: None,
        anchor2: None,
        fits: BTreeMap::new(),
    };
    for &r in radii {
        let e = zero.compute(u, r)?;
        rep.h.push(e.value);
        rep.coefficients.entry(0).or_default().push(e.coefficients);
        rep.phi.push(phi(u, &zero.fluid, r, Region::Bumpy));
        rep.h_tilde.push(zero.compute_in(u, r, Region::Cube)?.value);
    }
    for ctx in contexts.iter().filter(|c| c.order > 0) {
        let mut vals = Vec::new();
        for &r in radii {
            let e = ctx.compute(u, r)?;
            vals.push(e.value);
            rep.coefficients.entry(ctx.order).or_default().push(e.coefficients);
        }
        let first = &rep.coefficients[&ctx.order][0];
        let a = anchor(ctx, u, first);
        if ctx.order == 1 {
            rep.h1 = vals;
            rep.anchor1 = a;
        } else {
            rep.h2 = vals;
            rep.anchor2 = a;
        }
    }
    for (name, v) in [("H", &rep.h), ("Phi", &rep.phi), ("H_tilde", &rep.h_tilde), ("H1", &rep.h1), ("H2", &rep.h2)] {
        if !v.is_empty() {
            rep.fits.insert(name.to_string(), slope_fit(radii, v));
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityRow {
    pub r_fine: f64,
    pub r_coarse: f64,
    /// Sum of coefficient changes; second-order coefficients weighted by the radius.
    pub change: f64,
    pub excess: f64,
    pub ratio: f64,
    pub flagged: bool,
}

/// Coefficient changes between adjacent radii against the excess at the coarser radius,
/// flagged above ten times the median ratio.
pub fn coefficient_stability(rep: &ExcessReport, order: u8) -> Result<Vec<StabilityRow>> {
    let coeffs = rep.coefficients.get(&order).ok_or(BumpyError::MissingCorrectors(order))?;
    let excess = match order {
        0 => &rep.h,
        1 => &rep.h1,
        _ => &rep.h2,
    };
    if rep.radii.len() < 3 {
        return Err(BumpyError::Invalid("at least 3 radii needed".into()));
    }
    let mut rows = Vec::new();
    for i in 0..rep.radii.len() - 1 {
        let (a, b) = (&coeffs[i], &coeffs[i + 1]);
        let r = rep.radii[i + 1];
        let change: f64 = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| if order == 2 && k >= 2 { r * (x - y).abs() } else { (x - y).abs() })
            .sum();
        let e = excess[i + 1];
        let ratio = if change == 0.0 {
            0.0
        } else if e > 0.0 {
            change / e
        } else {
            f64::INFINITY
        };
        rows.push(StabilityRow { r_fine: rep.radii[i], r_coarse: r, change, excess: e, ratio, flagged: false });
    }
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    for r in &mut rows {
        r.flagged = r.ratio > 10.0 * median;
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityResult {
    pub name: String,
    pub parameter: f64,
    /// Smallest constant making the inequality hold at every radius.
    pub constant: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatteryReport {
    pub radii: Vec<f64>,
    pub window: f64,
    /// Weak Caccioppoli constants for each `theta`.
    pub caccioppoli: Vec<InequalityResult>,
    /// Reverse Holder ratios of `M_t^2[grad u]` for each exponent.
    pub meyers: Vec<InequalityResult>,
    /// Calderon-Zygmund constants for each exponent.
    pub calderon_zygmund: Vec<InequalityResult>,
    pub morrey: Option<MorreyReport>,
}

pub const MEYERS_EXPONENTS: [f64; 4] = [2.25, 2.5, 3.0, 4.0];

fn l2_over(v: &[f64], cells: &[usize]) -> f64 {
    cells.iter().map(|&i| v[i] * v[i]).sum::<f64>().sqrt()
}

/// Instantiates the local inequalities at cubes about the origin. `f_mag` holds cell values
/// of `|F|` for the source `div F` (zero for homogeneous problems). With `morrey_l`, the
/// Morrey decay of `M_eps[u (x) u]` is fitted too.
pub fn inequality_battery(
    u: &StaggeredField,
    fluid: &[bool],
    f_mag: &[f64],
    eps: f64,
    radii: &[f64],
    morrey_l: Option<f64>,
) -> Result<BatteryReport> {
    let g = u.grid;
    let vol = g.cell_volume();
    let grad = gradient_magnitude(u, fluid);
    let vel: Vec<f64> = (0..g.ncells())
        .map(|id| {
            if !fluid[id] {
                return 0.0;
            }
            let (i, j, k) = g.ijk(id);
            u.cell_velocity(i, j, k).iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect();
    let mut caccioppoli = Vec::new();
    for theta in [0.25, 0.5] {
        let mut c: f64 = 0.0;
        for &r in radii {
            let inner = region_cells(&g, fluid, Region::Bumpy, r);
            let outer = region_cells(&g, fluid, Region::Bumpy, 4.0 * r);
            let a = l2_over(&grad, &inner) * vol.sqrt();
            let b = l2_over(&grad, &outer) * vol.sqrt();
            let d = l2_over(&vel, &outer) * vol.sqrt();
            let e = l2_over(f_mag, &outer) * vol.sqrt();
            let need = a - theta * b;
            if need > 0.0 {
                let den = d / (theta * r) + e;
                c = c.max(if den > 0.0 { need / den } else { f64::INFINITY });
            }
        }
        caccioppoli.push(InequalityResult { name: "caccioppoli".into(), parameter: theta, constant: c });
    }
    let t = eps.max(g.h.max(g.hz));
    let mg = averaging(&g, &grad, t, 2.0)?;
    let mf = averaging(&g, f_mag, t, 2.0)?;
    let origin = [0.0; 3];
    let mut meyers = Vec::new();
    let mut cz = Vec::new();
    for p in MEYERS_EXPONENTS {
        let (mut rh, mut c) = (0.0f64, 0.0f64);
        for &r in radii {
            let lhs = cube_norm(&g, &mg.values, origin, r, p);
            let rhs3 = cube_norm(&g, &mg.values, origin, 3.0 * r, 2.0) + cube_norm(&g, &mf.values, origin, 3.0 * r, p);
            let rhs4 = cube_norm(&g, &mg.values, origin, 4.0 * r, 2.0) + cube_norm(&g, &mf.values, origin, 4.0 * r, p);
            if lhs > 0.0 {
                rh = rh.max(lhs / rhs3);
                c = c.max(lhs / rhs4);
            }
        }
        meyers.push(InequalityResult { name: "meyers".into(), parameter: p, constant: rh });
        cz.push(InequalityResult { name: "calderon-zygmund".into(), parameter: p, constant: c });
    }
    let morrey = match morrey_l {
        Some(l) => Some(morrey_check(u, fluid, eps, radii, l, 0.5 * (6.0 / l).min(1.0))?),
        None => None,
    };
    Ok(BatteryReport { radii: radii.to_vec(), window: t, caccioppoli, meyers, calderon_zygmund: cz, morrey })
}

/// Largest exponent whose reverse Holder ratio moves by at most `tol` (relative) between a
/// coarse and a refined run.
pub fn meyers_exponent(coarse: &BatteryReport, fine: &BatteryReport, tol: f64) -> Option<f64> {
    coarse
        .meyers
        .iter()
        .zip(&fine.meyers)
        .filter(|(a, b)| a.constant > 0.0 && ((b.constant / a.constant) - 1.0).abs() <= tol)
        .map(|(a, _)| a.parameter)
        .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |q| q.max(p))))
}
