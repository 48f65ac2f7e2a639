use bumpy_core::error::BumpyError;
use bumpy_core::excess::macro_layout;
use bumpy_core::geometry::{build_domain_with, BoundaryProfile, DiscreteDomain};
use bumpy_core::grid::Grid;
use bumpy_core::navier_stokes::*;
use bumpy_core::stokes::{StokesData, StokesSystem, TopKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn flat_box() -> DiscreteDomain {
    build_domain_with(BoundaryProfile::flat(), macro_layout(1.0 / 8.0, 2, 8, 2.0)).unwrap()
}

fn shear(amp: f64, lx: f64) -> impl Fn([f64; 3]) -> [f64; 3] + Sync {
    move |x: [f64; 3]| {
        let s = (2.0 * PI * x[0] / lx).sin();
        [amp * (1.0 + 0.5 * s), 0.0, 0.5 * amp * s]
    }
}

#[test]
fn zero_data_gives_zero_solution_in_one_step() {
    let d = flat_box();
    let zero = |_: [f64; 3]| [0.0; 3];
    let sol = solve_ns(&d, &zero, &NsConfig::default()).unwrap();
    assert_eq!(sol.trace.len(), 1);
    assert!(sol.field.u.iter().flatten().all(|v| *v == 0.0));
    assert_eq!(sol.m, 0.0);
}

#[test]
fn small_data_stays_close_to_the_linear_solve() {
    let d = flat_box();
    let top = shear(0.1, d.grid.lx);
    let cfg = NsConfig::default();
    let sol = solve_ns(&d, &top, &cfg).unwrap();
    assert!(sol.nonlinear_residual < 1e-7, "residual {}", sol.nonlinear_residual);
    let sys = StokesSystem::new(&d, TopKind::Dirichlet, cfg.solver).unwrap();
    let wall = boxed_data(d.grid, &top);
    let (lin, _) = sys.solve(&StokesData { wall: &wall, load: None, div: None }, None).unwrap();
    let mut diff = sol.field.clone();
    diff.axpy(-1.0, &lin);
    let rel = gradient_rms(&diff, &d.fluid) / gradient_rms(&lin, &d.fluid);
    assert!(rel < 1e-2, "relative deviation {rel}");
    assert!(rel > 0.0);
    let m = gradient_rms(&sol.field, &d.fluid);
    assert!((m - sol.m).abs() < 1e-12 * m);
    let csv = sol.trace_csv();
    assert!(csv.starts_with("step,"));
    assert_eq!(csv.lines().count(), sol.trace.len() + 1);
}

#[test]
fn energy_is_monotone_after_the_first_steps() {
    let d = build_domain_with(BoundaryProfile::cosine(0.3), macro_layout(1.0 / 8.0, 2, 8, 2.0)).unwrap();
    let top = shear(2.0, d.grid.lx);
    let sol = solve_ns(&d, &top, &NsConfig::default()).unwrap();
    assert!(sol.trace.len() > 6);
    assert!(sol.nonlinear_residual < 1e-6);
    let e: Vec<f64> = sol.trace.iter().skip(5).map(|s| s.energy).collect();
    let up = e.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0]);
    let down = e.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0]);
    assert!(up || down, "{e:?}");
}

#[test]
fn configuration_errors() {
    let d = flat_box();
    let top = shear(0.1, d.grid.lx);
    let cfg = NsConfig { damping: 0.0, ..NsConfig::default() };
    assert!(matches!(solve_ns(&d, &top, &cfg), Err(BumpyError::Invalid(_))));
    let cfg = NsConfig { damping: 1.5, ..NsConfig::default() };
    assert!(matches!(solve_ns(&d, &top, &cfg), Err(BumpyError::Invalid(_))));
    let big = shear(400.0, d.grid.lx);
    let cfg = NsConfig { damping: 1.0, ..NsConfig::default() };
    assert!(matches!(solve_ns(&d, &big, &cfg), Err(BumpyError::PicardDiverged(_))));
}

fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // mix of smooth and rough parts so that averages are not all alike
    let (a, b, c) = (rng.gen_range(0.5..3.0), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..1.0));
    (0..g.ncells())
        .map(|id| {
            let (i, j, k) = g.ijk(id);
            let x = g.cell_center(i, j, k);
            let smooth = (a * 2.0 * PI * x[0] / g.lx + b).sin() * (a * x[2]).cos();
            c * smooth + rng.gen_range(-1.0..1.0) * rng.gen_range(0.0f64..1.0).powi(3)
        })
        .collect()
}

#[test]
fn averaging_properties_on_random_fields() {
    let g = Grid::new(16, 96, 1.0, 0.0, 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fields: Vec<Vec<f64>> = (0..100).map(|_| random_field(&g, &mut rng)).collect();
    let mut per_t = Vec::new();
    for m in [2.0, 4.0, 8.0] {
        let t = m * g.h;
        let ys: Vec<[f64; 3]> = (0..6).map(|s| [(s as f64 - 2.5) * 0.1, 0.05 * s as f64, 3.0 + 0.01 * s as f64]).collect();
        let mut acc = AveragingConstants::default();
        for f in &fields {
            acc = acc.max(averaging_constants(&g, f, t, &ys).unwrap());
        }
        per_t.push(acc);
    }
    for c in &per_t {
        assert!(c.monotone <= 1.0 + 1e-12, "{c:?}");
        assert!(c.equivalence_lower <= 4.0 && c.equivalence_upper <= 4.0, "{c:?}");
        for v in c.as_array() {
            assert!(v.is_finite() && v > 0.0, "{c:?}");
        }
    }
    for q in 0..6 {
        let vals: Vec<f64> = per_t.iter().map(|c| c.as_array()[q]).collect();
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[2] <= 1.5 * sorted[1], "property {q}: {vals:?}");
    }
}

#[test]
fn averaging_of_constants_and_small_windows() {
    let g = Grid::new(12, 40, 1.0, 0.0, 3.0);
    let v = vec![1.75; g.ncells()];
    for p in [1.2, 2.0, 3.0] {
        let a = averaging(&g, &v, 2.0 * g.h, p).unwrap();
        let k = g.nz / 2;
        assert!((a.values[g.idx(5, 6, k)] - 1.75).abs() < 1e-13);
    }
    assert!(matches!(averaging(&g, &v, 0.5 * g.h, 2.0), Err(BumpyError::WindowTooSmall(_))));
}

#[test]
fn morrey_check_arguments_and_zero_field() {
    let d = flat_box();
    let u = bumpy_core::field::StaggeredField::zeros(d.grid);
    let radii = [0.2, 0.3, 0.4, 0.5];
    let r = morrey_check(&u, &d.fluid, 1.0 / 8.0, &radii, 4.0, 0.5).unwrap();
    assert!(r.constant == 0.0 && r.fit.values.iter().all(|v| *v == 0.0));
    assert!((r.target - 0.5).abs() < 1e-15);
    assert!(morrey_check(&u, &d.fluid, 1.0 / 8.0, &radii, 3.0, 0.5).is_err());
    assert!(morrey_check(&u, &d.fluid, 1.0 / 8.0, &radii, 4.0, 1.5).is_err());
}
