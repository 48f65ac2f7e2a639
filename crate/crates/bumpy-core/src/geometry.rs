//! Periodic rough half-space geometries and their voxelization onto the staggered grid.

use crate::error::{BumpyError, Result};
use crate::grid::Grid;
use serde::{Deserialize, Serialize};
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

/// Solid indicator sampled on a box covering one period horizontally and `z_lo..z_hi` vertically.
/// Values are 1 for solid, 0 for fluid; layout is `i` fastest, then `j`, then `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelIndicator {
    pub dims: [usize; 3],
    pub z_lo: f64,
    pub z_hi: f64,
    pub solid: Vec<u8>,
}

const MASK_MAGIC: &[u8; 4] = b"BMSK";

impl VoxelIndicator {
    /// Raw binary: magic, three u32 dims, two f64 bounds (little endian), then one byte per voxel.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(MASK_MAGIC)?;
        for d in self.dims {
            f.write_all(&(d as u32).to_le_bytes())?;
        }
        f.write_all(&self.z_lo.to_le_bytes())?;
        f.write_all(&self.z_hi.to_le_bytes())?;
        f.write_all(&self.solid)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<VoxelIndicator> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 32 || &buf[0..4] != MASK_MAGIC {
            return Err(BumpyError::Invalid("not a mask file".into()));
        }
        let u = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let f = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let dims = [u(4), u(8), u(12)];
        let (z_lo, z_hi) = (f(16), f(24));
        let len = dims[0] * dims[1] * dims[2];
        if buf.len() != 32 + len {
            return Err(BumpyError::Invalid(format!("mask payload {} != {}", buf.len() - 32, len)));
        }
        Ok(VoxelIndicator { dims, z_lo, z_hi, solid: buf[32..].to_vec() })
    }

    fn is_solid(&self, x: [f64; 3]) -> bool {
        if x[2] >= self.z_hi {
            return false;
        }
        if x[2] < self.z_lo {
            return true;
        }
        let [nx, ny, nz] = self.dims;
        let t = |v: f64, n: usize| (((v + PI).rem_euclid(2.0 * PI)) / (2.0 * PI) * n as f64).floor() as usize % n;
        let k = (((x[2] - self.z_lo) / (self.z_hi - self.z_lo)) * nz as f64).floor() as usize;
        self.solid[(k.min(nz - 1) * ny + t(x[1], ny)) * nx + t(x[0], nx)] != 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryProfile {
    /// Plane at height `-depth`.
    FlatShift { depth: f64 },
    /// Graph `h(x') = amplitude * sum (c cos(k.x') + s sin(k.x'))`, modes `[k1, k2, c, s]`.
    Graph { amplitude: f64, fourier_modes: Vec<[f64; 4]> },
    Voxel {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        path: Option<String>,
        #[serde(skip)]
        indicator: Option<VoxelIndicator>,
    },
}

impl BoundaryProfile {
    pub fn flat() -> Self {
        BoundaryProfile::FlatShift { depth: 0.0 }
    }

    /// `h = -a (1 + cos x1) / 2`.
    pub fn cosine(a: f64) -> Self {
        BoundaryProfile::Graph { amplitude: -0.5 * a, fourier_modes: vec![[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0]] }
    }

    /// Loads voxel data referenced by `path` if not yet present.
    pub fn resolve(self, base: Option<&Path>) -> Result<Self> {
        match self {
            BoundaryProfile::Voxel { path: Some(p), indicator: None } => {
                let full = match base {
                    Some(b) => b.join(&p),
                    None => p.clone().into(),
                };
                let ind = VoxelIndicator::read(&full)?;
                Ok(BoundaryProfile::Voxel { path: Some(p), indicator: Some(ind) })
            }
            other => Ok(other),
        }
    }

    /// Graph height, or None for voxel profiles.
    pub fn height(&self, x1: f64, x2: f64) -> Option<f64> {
        match self {
            BoundaryProfile::FlatShift { depth } => Some(-depth),
            BoundaryProfile::Graph { amplitude, fourier_modes } => Some(
                amplitude
                    * fourier_modes
                        .iter()
                        .map(|[k1, k2, c, s]| {
                            let ph = k1 * x1 + k2 * x2;
                            c * ph.cos() + s * ph.sin()
                        })
                        .sum::<f64>(),
            ),
            BoundaryProfile::Voxel { .. } => None,
        }
    }

    /// Whether a point (in units where the period is 2*pi) lies in the fluid.
    pub fn is_fluid(&self, x: [f64; 3]) -> bool {
        match self {
            BoundaryProfile::Voxel { indicator, .. } => match indicator {
                Some(ind) => !ind.is_solid(x),
                None => x[2] > 0.0,
            },
            _ => x[2] > self.height(x[0], x[1]).unwrap(),
        }
    }

    /// Checks -1 < h <= 0 on a fine sample; returns the offending value if any.
    pub fn validate(&self) -> Result<()> {
        match self {
            BoundaryProfile::Voxel { indicator, .. } => {
                let ind = indicator
                    .as_ref()
                    .ok_or_else(|| BumpyError::Invalid("voxel profile without data".into()))?;
                let [nx, ny, nz] = ind.dims;
                let dz = (ind.z_hi - ind.z_lo) / nz as f64;
                for k in 0..nz {
                    let zc = ind.z_lo + (k as f64 + 0.5) * dz;
                    let any_solid = (0..nx * ny).any(|p| ind.solid[k * nx * ny + p] != 0);
                    let any_fluid = (0..nx * ny).any(|p| ind.solid[k * nx * ny + p] == 0);
                    if any_solid && zc > 0.0 {
                        return Err(BumpyError::ProfileOutOfSlab(zc));
                    }
                    if any_fluid && zc < -1.0 {
                        return Err(BumpyError::ProfileOutOfSlab(zc));
                    }
                }
                if ind.z_hi > 0.0 && ind.z_lo < -1.0 && nz == 0 {
                    return Err(BumpyError::ProfileOutOfSlab(ind.z_lo));
                }
                Ok(())
            }
            _ => {
                let m = 256;
                for a in 0..m {
                    for b in 0..m {
                        let x = -PI + 2.0 * PI * a as f64 / m as f64;
                        let y = -PI + 2.0 * PI * b as f64 / m as f64;
                        let h = self.height(x, y).unwrap();
                        if !(h > -1.0 && h <= 1e-14) {
                            return Err(BumpyError::ProfileOutOfSlab(h));
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

/// Grid placement for a domain, in physical units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainLayout {
    /// Roughness scale: the boundary is `eps * profile(x/eps)`.
    pub eps: f64,
    /// Number of roughness periods across the horizontal extent.
    pub periods: usize,
    /// Cells per roughness period.
    pub cells_per_period: usize,
    /// Vertical cells per unit of `eps`.
    pub cells_per_eps: f64,
    /// Top of the domain in physical units.
    pub top: f64,
}

impl DomainLayout {
    /// The unscaled periodic cell `(2pi)^2 x [-1, top]` with `n` horizontal cells and near-isotropic spacing.
    pub fn unit(n: usize, top: f64) -> Self {
        let h = 2.0 * PI / n as f64;
        let nz = ((top + 1.0) / h).round().max(1.0);
        DomainLayout { eps: 1.0, periods: 1, cells_per_period: n, cells_per_eps: nz / (top + 1.0), top }
    }

    /// Unit cell with an explicit vertical cell count.
    pub fn unit_nz(n: usize, nz: usize, top: f64) -> Self {
        DomainLayout { eps: 1.0, periods: 1, cells_per_period: n, cells_per_eps: nz as f64 / (top + 1.0), top }
    }

    pub fn grid(&self) -> Grid {
        let n = self.periods * self.cells_per_period;
        let lx = self.periods as f64 * 2.0 * PI * self.eps;
        let nz = ((self.top / self.eps + 1.0) * self.cells_per_eps).round() as usize;
        Grid::new(n, nz.max(2), lx, -self.eps, self.top)
    }
}

/// Voxelized fluid region on a staggered grid.
#[derive(Clone, Debug)]
pub struct DiscreteDomain {
    pub grid: Grid,
    pub fluid: Vec<bool>,
    pub profile: BoundaryProfile,
    pub layout: DomainLayout,
    pub periodic: bool,
    /// Faces separating a fluid cell from a solid cell: (component, face index).
    pub boundary_faces: Vec<(usize, usize)>,
    pub john_constant_estimate: Option<f64>,
}

pub fn build_domain(profile: BoundaryProfile, resolution: usize, top_height: f64) -> Result<DiscreteDomain> {
    if resolution < 8 {
        return Err(BumpyError::Invalid(format!("resolution {} < 8", resolution)));
    }
    if top_height < 2.0 {
        return Err(BumpyError::Invalid(format!("top height {} < 2", top_height)));
    }
    build_domain_with(profile, DomainLayout::unit(resolution, top_height))
}

pub fn build_domain_with(profile: BoundaryProfile, layout: DomainLayout) -> Result<DiscreteDomain> {
    profile.validate()?;
    let grid = layout.grid();
    let eps = layout.eps;
    let mut fluid = vec![false; grid.ncells()];
    for k in 0..grid.nz {
        for j in 0..grid.n {
            for i in 0..grid.n {
                let c = grid.cell_center(i, j, k);
                fluid[grid.idx(i, j, k)] = profile.is_fluid([c[0] / eps, c[1] / eps, c[2] / eps]);
            }
        }
    }
    DiscreteDomain::from_mask(grid, fluid, profile, layout)
}

impl DiscreteDomain {
    pub fn from_mask(grid: Grid, fluid: Vec<bool>, profile: BoundaryProfile, layout: DomainLayout) -> Result<Self> {
        let comps = count_components(&grid, &fluid);
        if comps != 1 {
            return Err(BumpyError::DisconnectedFluid(comps));
        }
        let mut d = DiscreteDomain {
            grid,
            fluid,
            profile,
            layout,
            periodic: true,
            boundary_faces: Vec::new(),
            john_constant_estimate: None,
        };
        d.boundary_faces = d.enumerate_boundary_faces();
        Ok(d)
    }

    pub fn is_fluid(&self, i: isize, j: isize, k: isize) -> bool {
        if k < 0 || k >= self.grid.nz as isize {
            return false;
        }
        self.fluid[self.grid.idx(self.grid.wrap(i), self.grid.wrap(j), k as usize)]
    }

    fn enumerate_boundary_faces(&self) -> Vec<(usize, usize)> {
        let g = &self.grid;
        let mut out = Vec::new();
        for k in 0..g.nz {
            for j in 0..g.n {
                for i in 0..g.n {
                    let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                    let here = self.is_fluid(ii, jj, kk);
                    if here != self.is_fluid(ii - 1, jj, kk) {
                        out.push((0, g.idx(i, j, k)));
                    }
                    if here != self.is_fluid(ii, jj - 1, kk) {
                        out.push((1, g.idx(i, j, k)));
                    }
                    if here != self.is_fluid(ii, jj, kk - 1) {
                        out.push((2, g.idx(i, j, k)));
                    }
                }
            }
        }
        out
    }

    pub fn fluid_fraction(&self) -> f64 {
        self.fluid.iter().filter(|f| **f).count() as f64 / self.fluid.len() as f64
    }

    /// Lowest layer containing a fluid cell.
    pub fn lowest_fluid_layer(&self) -> usize {
        let l = self.grid.layer();
        (0..self.grid.nz).find(|k| self.fluid[k * l..(k + 1) * l].iter().any(|f| *f)).unwrap_or(0)
    }

    /// Lowest layer at and above which every cell is fluid.
    pub fn first_open_layer(&self) -> usize {
        let l = self.grid.layer();
        let mut k = self.grid.nz;
        while k > 0 && self.fluid[(k - 1) * l..k * l].iter().all(|f| *f) {
            k -= 1;
        }
        k
    }

    pub fn mask_indicator(&self) -> VoxelIndicator {
        VoxelIndicator {
            dims: [self.grid.n, self.grid.n, self.grid.nz],
            z_lo: self.grid.z0 / self.layout.eps,
            z_hi: self.grid.z1() / self.layout.eps,
            solid: self.fluid.iter().map(|f| if *f { 0 } else { 1 }).collect(),
        }
    }

    /// Euclidean distance from each cell center to the solid surface (half a cell less than
    /// the distance to the nearest solid cell center); zero in solid cells.
    pub fn distance_to_boundary(&self) -> Vec<f64> {
        let g = &self.grid;
        let big = 1e30;
        let mut f: Vec<f64> = self.fluid.iter().map(|fl| if *fl { big } else { 0.0 }).collect();
        let mut line = Vec::new();
        let mut out = Vec::new();
        // x and y passes are periodic; z pass has a virtual solid layer below the bottom.
        for axis in 0..3 {
            let (len, sp) = if axis == 2 { (g.nz, g.hz) } else { (g.n, g.h) };
            let lines: Vec<Vec<usize>> = match axis {
                0 => (0..g.nz).flat_map(|k| (0..g.n).map(move |j| (k, j))).map(|(k, j)| (0..g.n).map(|i| g.idx(i, j, k)).collect()).collect(),
                1 => (0..g.nz).flat_map(|k| (0..g.n).map(move |i| (k, i))).map(|(k, i)| (0..g.n).map(|j| g.idx(i, j, k)).collect()).collect(),
                _ => (0..g.n).flat_map(|j| (0..g.n).map(move |i| (j, i))).map(|(j, i)| (0..g.nz).map(|k| g.idx(i, j, k)).collect()).collect(),
            };
            for ids in lines {
                line.clear();
                if axis == 2 {
                    line.push(0.0);
                    line.extend(ids.iter().map(|&id| f[id]));
                    edt_1d(&line, sp, &mut out);
                    for (t, &id) in ids.iter().enumerate() {
                        f[id] = out[t + 1];
                    }
                } else {
                    for _ in 0..3 {
                        line.extend(ids.iter().map(|&id| f[id]));
                    }
                    edt_1d(&line, sp, &mut out);
                    for (t, &id) in ids.iter().enumerate() {
                        f[id] = out[t + len];
                    }
                }
            }
        }
        let half = 0.5 * g.h.min(g.hz);
        f.iter()
            .zip(&self.fluid)
            .map(|(d2, fl)| if *fl { (d2.sqrt() - half).max(half) } else { 0.0 })
            .collect()
    }
}

/// Squared-distance transform along a line (lower envelope of parabolas).
fn edt_1d(f: &[f64], sp: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let pos = |q: usize| q as f64 * sp;
    let mut k = 0usize;
    let first = (0..n).find(|&q| f[q] < 1e29);
    let Some(q0) = first else {
        out.iter_mut().for_each(|o| *o = 1e30);
        return;
    };
    v[0] = q0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in q0 + 1..n {
        if f[q] >= 1e29 {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut kk = 0;
    for q in 0..n {
        while z[kk + 1] < pos(q) {
            kk += 1;
        }
        let d = pos(q) - pos(v[kk]);
        out[q] = d * d + f[v[kk]];
    }
}

pub(crate) fn count_components(g: &Grid, fluid: &[bool]) -> usize {
    let mut label = vec![usize::MAX; fluid.len()];
    let mut comps = 0;
    let mut queue = VecDeque::new();
    for start in 0..fluid.len() {
        if !fluid[start] || label[start] != usize::MAX {
            continue;
        }
        label[start] = comps;
        queue.push_back(start);
        while let Some(id) = queue.pop_front() {
            let (i, j, k) = g.ijk(id);
            let (i, j, k) = (i as isize, j as isize, k as isize);
            for (di, dj, dk) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                let kk = k + dk;
                if kk < 0 || kk >= g.nz as isize {
                    continue;
                }
                let nb = g.idx(g.wrap(i + di), g.wrap(j + dj), kk as usize);
                if fluid[nb] && label[nb] == usize::MAX {
                    label[nb] = comps;
                    queue.push_back(nb);
                }
            }
        }
        comps += 1;
    }
    comps
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JohnScale {
    pub radius: f64,
    pub estimate: f64,
    pub samples: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JohnReport {
    pub scales: Vec<JohnScale>,
    pub estimate: f64,
    pub threshold: f64,
}

pub const JOHN_K: f64 = 2.0;

/// Carrot-path search from boundary-adjacent fluid cells to the point `R` above them.
///
/// For each start cell the smallest `L` is sought such that a 26-connected path stays inside
/// the cube of half-width `K R` around the start and satisfies `t <= L dist` at every node,
/// `t` being the path length so far. `stride` subsamples start cells horizontally.
pub fn john_check(domain: &DiscreteDomain, scales: &[f64], stride: usize, threshold: f64) -> JohnReport {
    let g = &domain.grid;
    let dist = domain.distance_to_boundary();
    let stride = stride.max(1);
    let mut starts = Vec::new();
    for k in 0..g.nz {
        for j in (0..g.n).step_by(stride) {
            for i in (0..g.n).step_by(stride) {
                let (ii, jj, kk) = (i as isize, j as isize, k as isize);
                if !domain.is_fluid(ii, jj, kk) {
                    continue;
                }
                let touches = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, -1)]
                    .iter()
                    .any(|(a, b, c)| !domain.is_fluid(ii + a, jj + b, kk + c));
                if touches && k > 0 {
                    starts.push((i, j, k));
                }
            }
        }
    }
    let mut out = Vec::new();
    let mut worst_all: f64 = 0.0;
    for &r in scales {
        let mut worst: f64 = 0.0;
        for &s in &starts {
            let l = carrot_constant(domain, &dist, s, r, threshold * 4.0);
            worst = worst.max(l);
        }
        worst_all = worst_all.max(worst);
        out.push(JohnScale { radius: r, estimate: worst, samples: starts.len(), pass: worst <= threshold });
    }
    JohnReport { scales: out, estimate: worst_all, threshold }
}

fn carrot_constant(domain: &DiscreteDomain, dist: &[f64], s: (usize, usize, usize), r: f64, cap: f64) -> f64 {
    let g = &domain.grid;
    let steps_up = (r / g.hz).round() as isize;
    let target_k = (s.2 as isize + steps_up).min(g.nz as isize - 1);
    let target = (0isize, 0isize, target_k - s.2 as isize);
    // Straight vertical path first.
    let mut straight: f64 = 0.0;
    let mut ok = true;
    for dk in 0..=(target_k - s.2 as isize) {
        let k = s.2 as isize + dk;
        if !domain.is_fluid(s.0 as isize, s.1 as isize, k) {
            ok = false;
            break;
        }
        let d = dist[g.idx(s.0, s.1, k as usize)];
        straight = straight.max(dk as f64 * g.hz / d);
    }
    let mut hi = if ok { straight.max(1.0) } else { cap };
    if hi <= 1.0 {
        return hi;
    }
    let mut lo = 1.0;
    if !feasible(domain, dist, s, target, r, hi) {
        // Expand to the cap before giving up.
        if !feasible(domain, dist, s, target, r, cap) {
            return f64::INFINITY;
        }
        lo = hi;
        hi = cap;
    }
    for _ in 0..10 {
        if hi / lo < 1.02 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if feasible(domain, dist, s, target, r, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(PartialEq)]
struct Node(f64, (isize, isize, isize));
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.partial_cmp(&self.0).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Dijkstra over offsets relative to the start cell, pruning nodes violating `t <= L dist`.
fn feasible(
    domain: &DiscreteDomain,
    dist: &[f64],
    s: (usize, usize, usize),
    target: (isize, isize, isize),
    r: f64,
    l: f64,
) -> bool {
    let g = &domain.grid;
    let wx = ((JOHN_K * r) / g.h).ceil() as isize;
    let wz_top = ((JOHN_K * r) / g.hz).ceil() as isize;
    let nx = (2 * wx + 1) as usize;
    let kmin = -(s.2 as isize);
    let kmax = (wz_top).min(g.nz as isize - 1 - s.2 as isize);
    let nzl = (kmax - kmin + 1) as usize;
    let key = |o: (isize, isize, isize)| ((((o.2 - kmin) as usize) * nx + (o.1 + wx) as usize) * nx) + (o.0 + wx) as usize;
    let mut best = vec![f64::INFINITY; nx * nx * nzl];
    let mut heap = BinaryHeap::new();
    best[key((0, 0, 0))] = 0.0;
    heap.push(Node(0.0, (0, 0, 0)));
    while let Some(Node(t, o)) = heap.pop() {
        if o == target {
            return true;
        }
        if t > best[key(o)] {
            continue;
        }
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = (o.0 + dx, o.1 + dy, o.2 + dz);
                    if n.0.abs() > wx || n.1.abs() > wx || n.2 < kmin || n.2 > kmax {
                        continue;
                    }
                    let (ci, cj, ck) = (s.0 as isize + n.0, s.1 as isize + n.1, s.2 as isize + n.2);
                    if !domain.is_fluid(ci, cj, ck) {
                        continue;
                    }
                    // Diagonal moves must not cut through solid corners.
                    if (dx != 0 && !domain.is_fluid(s.0 as isize + o.0 + dx, s.1 as isize + o.1, s.2 as isize + o.2))
                        || (dy != 0 && !domain.is_fluid(s.0 as isize + o.0, s.1 as isize + o.1 + dy, s.2 as isize + o.2))
                        || (dz != 0 && !domain.is_fluid(s.0 as isize + o.0, s.1 as isize + o.1, s.2 as isize + o.2 + dz))
                    {
                        continue;
                    }
                    let step = ((dx as f64 * g.h).powi(2) + (dy as f64 * g.h).powi(2) + (dz as f64 * g.hz).powi(2)).sqrt();
                    let nt = t + step;
                    let d = dist[g.idx(g.wrap(ci), g.wrap(cj), ck as usize)];
                    if nt > l * d {
                        continue;
                    }
                    let kn = key(n);
                    if nt < best[kn] {
                        best[kn] = nt;
                        heap.push(Node(nt, n));
                    }
                }
            }
        }
    }
    false
}
