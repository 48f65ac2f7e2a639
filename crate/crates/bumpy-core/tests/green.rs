use bumpy_core::error::BumpyError;
use bumpy_core::geometry::{build_domain_with, BoundaryProfile, DiscreteDomain, DomainLayout};
use bumpy_core::green::*;
use std::f64::consts::FRAC_PI_2;

fn domain(top: f64) -> DiscreteDomain {
    build_domain_with(BoundaryProfile::cosine(0.3), DomainLayout::unit(48, top)).unwrap()
}

fn centered(d: &DiscreteDomain, y: [f64; 3]) -> [f64; 3] {
    let (i, j, k) = d.grid.locate(y);
    d.grid.cell_center(i, j, k)
}

fn radius(d: &DiscreteDomain) -> f64 {
    2.0 * d.grid.h.max(d.grid.hz)
}

fn fro(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn near_field_matches_the_periodic_stokeslet() {
    let d = domain(7.0);
    let gs = GreenSolver::new(&d, green_config()).unwrap();
    let r0 = radius(&d);
    let y = centered(&d, [0.0, 0.0, 5.0]);
    let col = gs.column(y, r0).unwrap();
    assert!(col.delta > 16.0 * r0);
    // layer means carry the periodic zero mode; the oracle has none either
    let open = d.first_open_layer();
    let flat = GreenColumn { responses: col.responses.clone().map(|f| without_layer_means(&f, open)), ..col.clone() };
    let oracle = PeriodicStokeslet::new(d.grid.lx, 16);
    let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.6, 0.0, 0.8], [0.48, 0.6, -0.64]];
    let mut worst: f64 = 0.0;
    for dir in dirs {
        for t in [0.0, 0.5, 1.0] {
            let r = 4.0 * r0 + t * (col.delta / 4.0 - 4.0 * r0);
            let off = dir.map(|c| r * c);
            let x = [y[0] + off[0], y[1] + off[1], y[2] + off[2]];
            let got = gs.evaluate(&flat, x);
            let want = oracle.eval(off).0;
            let mut err = got;
            for a in 0..3 {
                for b in 0..3 {
                    err[a][b] -= want[a][b];
                }
            }
            worst = worst.max(fro(&err) / fro(&want));
        }
    }
    assert!(worst <= 0.1, "relative error {worst}");
}

#[test]
fn decay_exponents_on_the_source_plane() {
    let d = domain(5.0);
    let gs = GreenSolver::new(&d, green_config()).unwrap();
    let r0 = radius(&d);
    let col = gs.column(centered(&d, [0.0, 0.0, 2.5]), r0).unwrap();
    let rays = sample_rays(&d, &col, col.y[2], 2.0 * r0, FRAC_PI_2);
    let s = summarize(&col, &rays).unwrap();
    assert!((s.velocity_exponent + 1.0).abs() <= 0.3, "{s:?}");
    assert!((s.gradient_exponent + 2.0).abs() <= 0.4, "{s:?}");
    assert!((s.pressure_exponent + 2.0).abs() <= 0.5, "{s:?}");
    let csv = rays.to_csv();
    assert_eq!(csv.lines().count(), rays.distance.len() + 1);
    assert!(matches!(decay_fit(&sample_rays(&d, &col, col.y[2], 1.2, 1.3), GreenMode::Velocity), Err(BumpyError::InsufficientRange(_))));
}

#[test]
fn reciprocity_of_smeared_responses() {
    let d = domain(5.0);
    let gs = GreenSolver::new(&d, green_config()).unwrap();
    let r0 = radius(&d);
    let y = centered(&d, [-0.5, 0.0, 2.5]);
    let x = centered(&d, [1.0, 0.5, 1.5]);
    let gy = gs.column(y, r0).unwrap();
    let gx = gs.column(x, r0).unwrap();
    let a = gs.evaluate(&gy, x);
    let b = gs.evaluate(&gx, y);
    let scale = fro(&a);
    for i in 0..3 {
        for j in 0..3 {
            assert!((a[i][j] - b[j][i]).abs() <= 0.05 * scale, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn zero_force_and_linearity() {
    let d = domain(4.0);
    let gs = GreenSolver::new(&d, green_config()).unwrap();
    let r0 = radius(&d);
    let y1 = centered(&d, [0.0, 0.0, 2.0]);
    let y2 = centered(&d, [1.5, -1.0, 2.5]);
    let zero = gs.response(&[(y1, [0.0; 3])], r0).unwrap();
    assert!(zero.u.iter().flatten().all(|v| *v == 0.0));
    let f1 = [1.0, -0.5, 0.25];
    let f2 = [0.0, 2.0, 1.0];
    let both = gs.response(&[(y1, f1), (y2, f2)], r0).unwrap();
    let mut sum = gs.response(&[(y1, f1)], r0).unwrap();
    sum.axpy(1.0, &gs.response(&[(y2, f2)], r0).unwrap());
    let scale = both.u.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for c in 0..3 {
        for (p, q) in both.u[c].iter().zip(&sum.u[c]) {
            assert!((p - q).abs() <= 1e-6 * scale);
        }
    }
}

#[test]
fn response_far_away_scales_with_source_distance_to_the_wall() {
    let d = build_domain_with(BoundaryProfile::flat(), DomainLayout::unit(48, 4.0)).unwrap();
    let gs = GreenSolver::new(&d, green_config()).unwrap();
    let r0 = radius(&d);
    let x = [1.5, 0.0, 2.0];
    let mut prev: Option<(f64, f64)> = None;
    for y3 in [0.6, 0.8, 1.0, 1.2] {
        let y = centered(&d, [0.0, 0.0, y3]);
        let u = gs.response(&[(y, [1.0, 0.0, 0.0])], r0).unwrap();
        let w = gs.smeared_load(x, r0, [1.0; 3]);
        let v: f64 = w[0].iter().zip(&u.u[0]).map(|(p, q)| p * q).sum();
        let delta = gs.delta(y);
        if let Some((d0, v0)) = prev {
            let r = (v / v0) / (delta / d0);
            assert!((r - 1.0).abs() <= 0.25, "delta {d0} -> {delta}: ratio {r}");
        }
        prev = Some((delta, v));
    }
}

#[test]
fn invalid_sources() {
    let d = domain(4.0);
    let gs = GreenSolver::new(&d, green_config()).unwrap();
    let r0 = radius(&d);
    let near = gs.column(centered(&d, [0.0, 0.0, 0.0]), r0);
    assert!(matches!(near, Err(BumpyError::SourceTooCloseToBoundary(_))), "{:?}", near.map(|c| c.delta));
    assert!(matches!(gs.column(centered(&d, [0.0, 0.0, 2.0]), 0.5 * r0), Err(BumpyError::Invalid(_))));
    assert!(matches!(gs.column([0.0, 0.0, 3.9], r0), Err(BumpyError::Invalid(_))));
}
