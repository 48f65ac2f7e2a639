use bumpy_core::error::BumpyError;
use bumpy_core::excess::*;
use bumpy_core::field::StaggeredField;
use bumpy_core::geometry::{build_domain_with, BoundaryProfile, DiscreteDomain};
use bumpy_core::navier_stokes::{solve_ns, NsConfig};
use bumpy_core::polynomials::NoSlipPolynomial;
use std::f64::consts::PI;
use std::sync::OnceLock;

const EPS: f64 = 1.0 / 16.0;
const RADII: [f64; 5] = [0.1, 0.15, 0.2, 0.3, 0.4];

fn small(profile: BoundaryProfile) -> (DiscreteDomain, CorrectorSet) {
    let lay = macro_layout(EPS, 4, 8, 2.0);
    let d = build_domain_with(profile.clone(), lay).unwrap();
    let cell = build_domain_with(profile, cell_layout(&lay, 5.0).unwrap()).unwrap();
    let set = CorrectorSet::build(&cell, EPS, true).unwrap();
    (d, set)
}

fn flat() -> &'static (DiscreteDomain, CorrectorSet) {
    static C: OnceLock<(DiscreteDomain, CorrectorSet)> = OnceLock::new();
    C.get_or_init(|| small(BoundaryProfile::flat()))
}

fn rough() -> &'static (DiscreteDomain, CorrectorSet) {
    static C: OnceLock<(DiscreteDomain, CorrectorSet)> = OnceLock::new();
    C.get_or_init(|| small(BoundaryProfile::cosine(0.3)))
}

fn poly_field(d: &DiscreteDomain, terms: &[(u8, u8, f64)]) -> StaggeredField {
    let ps: Vec<(NoSlipPolynomial, f64)> =
        terms.iter().map(|&(deg, k, c)| (NoSlipPolynomial::new(deg, k).unwrap(), c)).collect();
    sample_candidate(
        d.grid,
        &d.fluid,
        |x| {
            let mut v = [0.0; 3];
            for (p, c) in &ps {
                let w = p.velocity(x);
                (0..3).for_each(|i| v[i] += c * w[i]);
            }
            v
        },
        |x| ps.iter().map(|(p, c)| c * p.pressure(x)).sum(),
    )
}

fn combine(basis: &[StaggeredField], c: &[f64], shift: f64) -> StaggeredField {
    let mut u = StaggeredField::zeros(basis[0].grid);
    for (b, a) in basis.iter().zip(c) {
        u.axpy(*a, b);
    }
    u.p.iter_mut().for_each(|p| *p += shift);
    u
}

#[test]
fn linear_shear_over_flat_wall_has_zero_excess() {
    let (d, _) = flat();
    let ctx = ExcessContext::new(d, 0, None).unwrap();
    let mut u = poly_field(d, &[(1, 1, 1.0)]);
    u.p.iter_mut().for_each(|p| *p = 3.0);
    for r in RADII {
        let e = ctx.compute(&u, r).unwrap();
        assert!(e.value < 1e-12, "r {r}: {}", e.value);
    }
}

#[test]
fn order_zero_matches_normal_equation_oracle() {
    let (d, _) = flat();
    let g = d.grid;
    let u = poly_field(d, &[(1, 1, 1.0), (2, 2, 1.0)]);
    let basis = candidate_basis(0, d, None).unwrap();
    let rho = 0.25;
    let (mut gram, mut rhs, mut uu, mut count) = ([[0.0; 2]; 2], [0.0; 2], 0.0, 0usize);
    let (mut pmax, mut pmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for id in 0..g.ncells() {
        let (i, j, k) = g.ijk(id);
        let c = g.cell_center(i, j, k);
        if !d.fluid[id] || c[0].abs() > rho || c[1].abs() > rho || c[2] > rho {
            continue;
        }
        count += 1;
        let gu = u.cell_gradient_in(&d.fluid, i, j, k);
        let gb: Vec<_> = basis.iter().map(|b| b.cell_gradient_in(&d.fluid, i, j, k)).collect();
        for a in 0..3 {
            for b in 0..3 {
                uu += gu[a][b] * gu[a][b];
                for m in 0..2 {
                    rhs[m] += gb[m][a][b] * gu[a][b];
                    for n in 0..2 {
                        gram[m][n] += gb[m][a][b] * gb[n][a][b];
                    }
                }
            }
        }
    }
    for s in pressure_scales() {
        let (mut sum, mut n) = (0.0, 0);
        for id in 0..g.ncells() {
            let (i, j, k) = g.ijk(id);
            let c = g.cell_center(i, j, k);
            let r = s * rho;
            if d.fluid[id] && c[0].abs() <= r && c[1].abs() <= r && c[2] <= r {
                sum += u.p[id];
                n += 1;
            }
        }
        if n > 0 {
            pmax = pmax.max(sum / n as f64);
            pmin = pmin.min(sum / n as f64);
        }
    }
    let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
    let c0 = (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det;
    let c1 = (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det;
    let misfit = uu - c0 * rhs[0] - c1 * rhs[1];
    let oracle = (misfit / count as f64).sqrt() + (pmax - pmin);
    let e = compute_excess(&u, d, rho, 0, None).unwrap();
    assert!((e.value - oracle).abs() < 1e-10 * oracle, "{} vs {}", e.value, oracle);
    assert!((e.coefficients[0] - c0).abs() < 1e-10 && (e.coefficients[1] - c1).abs() < 1e-10);
    assert!(e.value > 0.05);
}

#[test]
fn candidate_space_members_have_zero_excess() {
    let (d, set) = rough();
    let c1 = ExcessContext::new(d, 1, Some(set)).unwrap();
    let c2 = ExcessContext::new(d, 2, Some(set)).unwrap();
    let u1 = combine(&c1.basis, &[0.7, -0.3], 2.5);
    let u2 = combine(&c2.basis, &[0.7, -0.3, 0.4, 1.1, -0.6, 0.2, 0.9, -0.5], -1.0);
    let zero = ExcessContext::new(d, 0, None).unwrap();
    let mut r = 1.01 * EPS;
    while r <= 0.5 {
        let e1 = c1.compute(&u1, r).unwrap();
        let e2 = c2.compute(&u2, r).unwrap();
        assert!(e1.value < 1e-6 && e2.value < 1e-6, "r {r}: {} {}", e1.value, e2.value);
        assert!((e1.coefficients[0] - 0.7).abs() < 1e-8);
        for u in [&u1, &u2] {
            let h = zero.compute(u, r).unwrap().value;
            assert!(h <= phi(u, &d.fluid, r, Region::Bumpy) + 1e-14);
        }
        r *= 1.2;
    }
}

#[test]
fn quadratic_over_flat_wall_gives_linear_first_order_excess() {
    let (d, set) = flat();
    let ctx = ExcessContext::new(d, 1, Some(set)).unwrap();
    let u = poly_field(d, &[(2, 2, 1.0)]);
    let values: Vec<f64> = RADII.iter().map(|&r| ctx.compute(&u, r).unwrap().value).collect();
    let fit = slope_fit(&RADII, &values);
    assert!((fit.slope - 1.0).abs() < 0.1, "slope {}", fit.slope);
}

#[test]
fn minimizers_are_linear_and_excess_is_homogeneous() {
    let (d, set) = rough();
    let ctx = ExcessContext::new(d, 1, Some(set)).unwrap();
    let a = poly_field(d, &[(2, 2, 1.0)]);
    let b = poly_field(d, &[(2, 3, 1.0), (1, 2, 0.5)]);
    let mut ab = a.clone();
    ab.axpy(1.0, &b);
    for r in [0.15, 0.3] {
        let (ea, eb, eab) = (ctx.compute(&a, r).unwrap(), ctx.compute(&b, r).unwrap(), ctx.compute(&ab, r).unwrap());
        for k in 0..2 {
            assert!((eab.coefficients[k] - ea.coefficients[k] - eb.coefficients[k]).abs() < 1e-9);
        }
        let mut s = ab.clone();
        s.scale(2.5);
        let es = ctx.compute(&s, r).unwrap();
        assert!((es.value - 2.5 * eab.value).abs() < 1e-10 * es.value);
        for k in 0..2 {
            assert!((es.coefficients[k] - 2.5 * eab.coefficients[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn argument_errors() {
    let (d, set) = rough();
    let u = StaggeredField::zeros(d.grid);
    assert!(matches!(compute_excess(&u, d, EPS, 0, None), Err(BumpyError::RadiusOutOfRange(_))));
    assert!(matches!(compute_excess(&u, d, 0.6, 0, None), Err(BumpyError::RadiusOutOfRange(_))));
    assert!(matches!(compute_excess(&u, d, 0.2, 1, None), Err(BumpyError::MissingCorrectors(1))));
    let only_first = CorrectorSet { eps: EPS, first: set.first.clone(), second: Vec::new() };
    assert!(matches!(ExcessContext::new(d, 2, Some(&only_first)), Err(BumpyError::MissingCorrectors(2))));
    let mut open = d.clone();
    open.periodic = false;
    assert!(matches!(ExcessContext::new(&open, 2, Some(set)), Err(BumpyError::NonPeriodicDomain)));
    let ctx = ExcessContext::new(d, 0, None).unwrap();
    assert!(excess_scan(&u, &RADII[..3], EPS, &[&ctx]).is_err());
    let lay = macro_layout(EPS, 4, 8, 1.5);
    assert!(cell_layout(&lay, 5.0).is_err());
}

#[test]
fn coefficient_stability_of_members_and_rescaled_fields() {
    let (d, set) = rough();
    let c1 = ExcessContext::new(d, 1, Some(set)).unwrap();
    let member = combine(&c1.basis, &[0.4, 0.8], 0.0);
    let rep = excess_scan(&member, &RADII, EPS, &[&c1]).unwrap();
    for row in coefficient_stability(&rep, 1).unwrap() {
        assert!(row.change < 1e-8, "{row:?}");
    }
    let mut u = poly_field(d, &[(2, 2, 1.0), (2, 5, 0.5), (1, 1, 1.0)]);
    let r1 = coefficient_stability(&excess_scan(&u, &RADII, EPS, &[&c1]).unwrap(), 1).unwrap();
    u.scale(2.0);
    let r2 = coefficient_stability(&excess_scan(&u, &RADII, EPS, &[&c1]).unwrap(), 1).unwrap();
    for (a, b) in r1.iter().zip(&r2) {
        assert!((b.change - 2.0 * a.change).abs() < 1e-9 * b.change.max(1e-12));
        assert!((b.ratio - a.ratio).abs() < 1e-8 * a.ratio.max(1e-12));
    }
}

#[test]
fn report_csv_is_deterministic() {
    let (d, set) = rough();
    let c1 = ExcessContext::new(d, 1, Some(set)).unwrap();
    let u = poly_field(d, &[(2, 2, 1.0)]);
    let a = excess_scan(&u, &RADII, EPS, &[&c1]).unwrap();
    let b = excess_scan(&u, &RADII, EPS, &[&c1]).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let csv = a.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "radius,H,Phi,H_tilde,H1,H2");
    assert_eq!(lines.len(), 6);
    let json = serde_json::to_string(&a).unwrap();
    let back: ExcessReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.to_csv(), a.to_csv());
}

#[test]
fn zero_field_battery_has_zero_constants() {
    let (d, _) = rough();
    let u = StaggeredField::zeros(d.grid);
    let f = vec![0.0; d.grid.ncells()];
    let rep = inequality_battery(&u, &d.fluid, &f, EPS, &[0.1, 0.15], Some(4.0)).unwrap();
    for r in rep.caccioppoli.iter().chain(&rep.meyers).chain(&rep.calderon_zygmund) {
        assert_eq!(r.constant, 0.0, "{}", r.name);
    }
    assert!(rep.morrey.unwrap().constant == 0.0);
}

/// Shear-driven flow over `eps = 1/32` cosine roughness at the coarse desk resolution.
#[test]
fn navier_stokes_pipeline_excess_decay() {
    let eps = 1.0 / 32.0;
    let lay = macro_layout(eps, 6, 8, 4.0 / 3.0);
    let d = build_domain_with(BoundaryProfile::cosine(0.3), lay).unwrap();
    let lx = d.grid.lx;
    let top = move |x: [f64; 3]| {
        let s = (2.0 * PI * x[0] / lx).sin();
        [1.0 + 0.5 * s, 0.0, 0.5 * s]
    };
    let sol = solve_ns(&d, &top, &NsConfig::default()).unwrap();
    assert!(sol.nonlinear_residual < 1e-6);
    let cell = build_domain_with(BoundaryProfile::cosine(0.3), cell_layout(&lay, 5.0).unwrap()).unwrap();
    let set = CorrectorSet::build(&cell, eps, true).unwrap();
    let ctx: Vec<ExcessContext> = (0..3).map(|o| ExcessContext::new(&d, o, Some(&set)).unwrap()).collect();
    let radii = scan_radii(eps, 4);
    let rep = excess_scan(&sol.field, &radii, eps, &ctx.iter().collect::<Vec<_>>()).unwrap();
    let (phi_fit, h1, h2) = (rep.fits["Phi"], rep.fits["H1"], rep.fits["H2"]);
    assert!(phi_fit.slope >= -0.1, "Phi slope {}", phi_fit.slope);
    assert!(h1.slope >= 0.4, "H1 slope {}", h1.slope);
    assert!(h2.slope >= 1.2, "H2 slope {}", h2.slope);
    let max_phi = rep.phi.iter().cloned().fold(0.0, f64::max);
    assert!(max_phi / rep.phi_half <= phi_fit.constant.max(1.0) * 2.0);
    for (h, p) in rep.h.iter().zip(&rep.phi) {
        assert!(h <= p);
    }
    for o in 0..3 {
        let rows = coefficient_stability(&rep, o).unwrap();
        let mut r: Vec<f64> = rows.iter().map(|x| x.ratio).collect();
        r.sort_by(f64::total_cmp);
        assert!(rows.iter().all(|x| x.ratio <= 10.0 * r[r.len() / 2]));
    }
    let f: Vec<f64> = bumpy_core::navier_stokes::flux_magnitude(&sol.field, &d.fluid);
    let bat = inequality_battery(&sol.field, &d.fluid, &f, eps, &radii[..3], Some(4.0)).unwrap();
    let m = bat.morrey.unwrap();
    assert!(m.fit.slope >= 0.25, "Morrey slope {}", m.fit.slope);
    assert!(bat.caccioppoli.iter().all(|c| c.constant.is_finite()));
}
