use bumpy_core::field::StaggeredField;
use bumpy_core::geometry::{build_domain_with, BoundaryProfile, DomainLayout};
use bumpy_core::grid::Grid;
use bumpy_core::stokes::*;
use std::f64::consts::PI;

fn channel(n: usize, nz: usize, top: TopKind) -> StokesSystem {
    let g = Grid::new(n, nz, 2.0 * PI, 0.0, 1.0);
    StokesSystem::from_mask(g, vec![true; g.ncells()], top, SolverConfig::default()).unwrap()
}

#[test]
fn zero_data_gives_zero_field() {
    let sys = channel(8, 8, TopKind::Dirichlet);
    let (f, st) = sys.solve(&StokesData { wall: &zero_wall, load: None, div: None }, None).unwrap();
    assert_eq!(st.iterations, 0);
    assert!(f.u.iter().all(|a| a.iter().all(|v| *v == 0.0)) && f.p.iter().all(|v| *v == 0.0));
}

#[test]
fn poiseuille_profile() {
    let mut errs = Vec::new();
    for nz in [8, 16] {
        let sys = channel(8, nz, TopKind::Dirichlet);
        let load = sys.pointwise_load(|_| [2.0, 0.0, 0.0]);
        let data = StokesData { wall: &zero_wall, load: Some(&load), div: None };
        let (f, _) = sys.solve(&data, None).unwrap();
        let g = f.grid;
        let mut e: f64 = 0.0;
        for k in 0..g.nz {
            let z = g.cell_center(0, 0, k)[2];
            e = e.max((f.u[0][g.idx(3, 2, k)] - z * (1.0 - z)).abs());
            assert!(f.u[2][g.idx(3, 2, k)].abs() < 1e-9);
        }
        let osc = f.p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(osc < 1e-8, "{osc}");
        assert!(e <= g.hz * g.hz, "{e}");
        let rep = sys.residual_report(&f, &data);
        assert!(rep.momentum < 1e-8 && rep.divergence < 1e-8 && rep.noslip == 0.0, "{rep:?}");
        errs.push(e);
    }
    assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
}

fn mms_velocity(x: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = x;
    [
        4.0 * z.powi(3) * x.sin() - 6.0 * z.powi(2) * x.sin() + 2.0 * z * x.sin(),
        4.0 * z.powi(3) * y.cos() - 6.0 * z.powi(2) * y.cos() + 2.0 * z * y.cos(),
        z.powi(4) * y.sin() - z.powi(4) * x.cos() - 2.0 * z.powi(3) * y.sin() + 2.0 * z.powi(3) * x.cos()
            + z.powi(2) * y.sin()
            - z.powi(2) * x.cos(),
    ]
}

fn mms_force(x: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = x;
    [
        4.0 * z.powi(3) * x.sin() - 6.0 * z.powi(2) * x.sin() - z * x.sin() * y.sin() - 22.0 * z * x.sin() + 12.0 * x.sin(),
        4.0 * z.powi(3) * y.cos() - 6.0 * z.powi(2) * y.cos() + z * x.cos() * y.cos() - 22.0 * z * y.cos() + 12.0 * y.cos(),
        z.powi(4) * y.sin() - z.powi(4) * x.cos() - 2.0 * z.powi(3) * y.sin() + 2.0 * z.powi(3) * x.cos()
            - 11.0 * z.powi(2) * y.sin()
            + 11.0 * z.powi(2) * x.cos()
            + 12.0 * z * y.sin()
            - 12.0 * z * x.cos()
            + y.sin() * x.cos()
            - 2.0 * y.sin()
            + 2.0 * x.cos(),
    ]
}

#[test]
fn manufactured_solution_second_order() {
    let mut errs = Vec::new();
    for n in [8usize, 16, 32] {
        let nz = n / 2;
        let sys = channel(n, nz, TopKind::Dirichlet);
        let load = sys.pointwise_load(mms_force);
        let (f, _) = sys.solve(&StokesData { wall: &zero_wall, load: Some(&load), div: None }, None).unwrap();
        let exact = StaggeredField::sample(f.grid, mms_velocity, |_| 0.0);
        let mut s = 0.0;
        let mut cnt = 0.0;
        for c in 0..3 {
            for (a, b) in f.u[c].iter().zip(&exact.u[c]) {
                s += (a - b).powi(2);
                cnt += 1.0;
            }
        }
        errs.push((s / cnt).sqrt());
    }
    let slope1 = (errs[0] / errs[1]).log2();
    let slope2 = (errs[1] / errs[2]).log2();
    assert!(slope1 >= 1.8 && slope2 >= 1.8, "{errs:?} {slope1} {slope2}");
}

#[test]
fn transparent_flat_shift_constant() {
    // faces aligned with the wall at -0.3
    let layout = DomainLayout::unit_nz(8, 50, 4.0);
    let d = build_domain_with(BoundaryProfile::FlatShift { depth: 0.3 }, layout).unwrap();
    let sys = StokesSystem::new(&d, TopKind::Transparent, SolverConfig::default()).unwrap();
    let wall = |_: [f64; 3]| [0.3, 0.0, 0.0];
    let (f, st) = sys.solve(&StokesData { wall: &wall, load: None, div: None }, None).unwrap();
    let g = f.grid;
    for id in 0..g.ncells() {
        if d.fluid[id] {
            assert!((f.u[0][id] - 0.3).abs() < 1e-8, "{} {:?}", f.u[0][id], st);
            assert!(f.u[1][id].abs() < 1e-8 && f.p[id].abs() < 1e-8);
        }
    }
    let tr = sys.top_trace(&f).unwrap();
    let m = tr.mean();
    assert!((m[0] - 0.3).abs() < 1e-8 && m[2].abs() < 1e-10);
}

fn bump(x: [f64; 3]) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    if r2 < 16.0 {
        (1.0 - r2 / 16.0).powi(3) * (1.0 + 0.3 * x[2])
    } else {
        0.0
    }
}

/// Growth residual versus the direct residual of the multiplied field, for data supported
/// away from the periodic seam.
fn growth_case(top: TopKind, n: usize) -> (f64, f64) {
    let g = Grid::new(n, 6, n as f64, 0.0, 6.0);
    let mut fluid = vec![true; g.ncells()];
    for j in 0..g.n {
        for i in 0..g.n {
            let c = g.cell_center(i, j, 0);
            if c[0].abs() < 2.0 && c[1].abs() < 1.5 {
                fluid[g.idx(i, j, 0)] = false;
            }
        }
    }
    let sys = StokesSystem::from_mask(g, fluid, top, SolverConfig::default()).unwrap();
    let vel = |x: [f64; 3]| [bump(x), -0.5 * bump([x[1], x[0], x[2]]), 0.7 * bump([x[0] + 0.5, x[1], x[2]])];
    let u = StaggeredField::sample(g, vel, |x| 0.4 * bump(x));
    let wall = |x: [f64; 3]| [bump(x) * 0.2, 0.1 * bump(x), -0.3 * bump(x)];
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for axis in 0..2 {
        let xu = StaggeredField::sample(g, |x| vel(x).map(|v| v * x[axis]), |x| 0.4 * bump(x) * x[axis]);
        let xwall = move |x: [f64; 3]| wall(x).map(|v| v * x[axis]);
        let (du, dp) = sys.residual_fields(&xu, &StokesData { wall: &xwall, load: None, div: None });
        let (gu, gp) = sys.growth_residual_fields(axis, &u, &wall);
        for c in 0..3 {
            for (f, (a, b)) in du[c].iter().zip(&gu[c]).enumerate() {
                let (i, j, k) = g.ijk(f);
                let x = g.face_pos(c, i, j, k.min(g.nz - 1));
                if top == TopKind::Transparent && (x[0].abs() > 4.0 || x[1].abs() > 4.0) {
                    continue;
                }
                worst = worst.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        for (a, b) in dp.iter().zip(&gp) {
            worst = worst.max((a - b).abs());
            scale = scale.max(a.abs());
        }
    }
    (worst, scale)
}

#[test]
fn growth_residual_matches_direct_product() {
    let (w, s) = growth_case(TopKind::Dirichlet, 16);
    assert!(w < 1e-12 * s, "{w} vs {s}");
    // the transparent closure is nonlocal: periodic images of the multiplied field differ
    // from the unwrapped product, an effect that shrinks as the period grows
    let (w16, s16) = growth_case(TopKind::Transparent, 16);
    let (w32, s32) = growth_case(TopKind::Transparent, 32);
    let (w64, s64) = growth_case(TopKind::Transparent, 64);
    let (e16, e32, e64) = (w16 / s16, w32 / s32, w64 / s64);
    assert!(e32 < 0.25 * e16 && e64 < 0.25 * e32 && e64 < 2e-3, "{e16} {e32} {e64}");
}

#[test]
fn energy_matches_gradient_sum_for_zero_wall_fields() {
    let sys = channel(8, 8, TopKind::Dirichlet);
    let g = sys.grid;
    let f = StaggeredField::sample(
        g,
        |x| {
            let b = (PI * x[2]).sin();
            [b * x[0].cos(), b * x[1].sin(), 0.0]
        },
        |_| 0.0,
    );
    let e = sys.energy(&f);
    // direct sum of squared one-sided differences with mirror ghosts at the walls
    let mut s = 0.0;
    let v = g.cell_volume();
    for c in 0..2 {
        for k in 0..g.nz {
            for j in 0..g.n {
                for i in 0..g.n {
                    let u = f.u[c][g.idx(i, j, k)];
                    let ux = f.u[c][g.idx((i + 1) % g.n, j, k)];
                    let uy = f.u[c][g.idx(i, (j + 1) % g.n, k)];
                    s += v * ((ux - u) / g.h).powi(2) + v * ((uy - u) / g.h).powi(2);
                    if k + 1 < g.nz {
                        s += v * ((f.u[c][g.idx(i, j, k + 1)] - u) / g.hz).powi(2);
                    } else {
                        s += 2.0 * v * (u / g.hz).powi(2);
                    }
                    if k == 0 {
                        s += 2.0 * v * (u / g.hz).powi(2);
                    }
                }
            }
        }
    }
    assert!(((e - s) / s).abs() < 1e-12, "{e} {s}");
}

#[test]
fn pressure_schur_solver_matches_minres() {
    let sys = channel(8, 8, TopKind::Dirichlet);
    let load = sys.pointwise_load(|x| [x[2].sin(), (x[0] + x[2]).cos(), x[1].sin()]);
    let data = StokesData { wall: &zero_wall, load: Some(&load), div: None };
    let (a, _) = sys.solve(&data, None).unwrap();
    let (b, _) = sys.solve_uzawa(&data).unwrap();
    for c in 0..3 {
        for (x, y) in a.u[c].iter().zip(&b.u[c]) {
            assert!((x - y).abs() < 1e-8);
        }
    }
    for (x, y) in a.p.iter().zip(&b.p) {
        assert!((x - y).abs() < 1e-7, "{x} {y}");
    }
}
