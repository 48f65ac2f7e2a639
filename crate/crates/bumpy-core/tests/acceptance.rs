//! Acceptance battery: one PASS/FAIL line per criterion, nonzero exit if any fails.

use bumpy_core::bogovskii::{build_inverse_on_grid, unit_cube};
use bumpy_core::boundary_layers::*;
use bumpy_core::excess::*;
use bumpy_core::field::StaggeredField;
use bumpy_core::geometry::{build_domain_with, BoundaryProfile, DiscreteDomain, DomainLayout};
use bumpy_core::green::*;
use bumpy_core::grid::Grid;
use bumpy_core::iteration::*;
use bumpy_core::navier_stokes::{averaging_constants, solve_ns, AveragingConstants, NsConfig};
use bumpy_core::polynomials::{basis_dimension, stokes_residual};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn polynomials() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (deg, n) in [(1u8, 2u8), (2, 6)] {
        for j in 1..=n {
            let (div, mom) = stokes_residual(deg, j).map_err(|e| e.to_string())?;
            worst = worst.max(div).max(mom);
        }
    }
    let dims = (basis_dimension(1), basis_dimension(2));
    let secs = t.elapsed().as_secs_f64();
    check(
        worst <= 1e-13 && dims == (Some(2), Some(6)) && secs < 1.0,
        format!("max residual {worst:.2e} (<= 1e-13), dims {dims:?}, {secs:.2}s (< 1s)"),
    )
}

fn flat_closed_forms() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for delta in [0.1, 0.3] {
        let d = build_domain_with(BoundaryProfile::FlatShift { depth: delta }, DomainLayout::unit_nz(16, 50, 4.0))
            .map_err(|e| e.to_string())?;
        let g = d.grid;
        let ls = LayerSolver::new(&d, corrector_config()).map_err(|e| e.to_string())?;
        let c11 = ls.solve_bl1(1, None).map_err(|e| e.to_string())?;
        let c21 = ls.solve_bl2(1, std::slice::from_ref(&c11)).map_err(|e| e.to_string())?;
        let c22 = ls.solve_bl2(2, &[]).map_err(|e| e.to_string())?;
        let v21 = c21.assembled(Some(&c11)).map_err(|e| e.to_string())?;
        for id in (0..g.ncells()).filter(|&id| d.fluid[id]) {
            let (i, j, k) = g.ijk(id);
            let x2 = g.face_pos(0, i, j, k)[1];
            let errs = [
                c11.field.u[0][id] - delta,
                c11.field.u[1][id],
                c22.periodic.u[0][id] + delta * delta,
                c22.periodic.u[2][id],
                v21.u[0][id] - delta * x2,
                v21.u[1][id],
                v21.u[2][id],
            ];
            worst = errs.iter().fold(worst, |m, e| m.max(e.abs()));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 1e-8 && secs < 120.0, format!("max deviation {worst:.2e} (<= 1e-8), {secs:.1}s (< 120s)"))
}

struct Profiled {
    name: &'static str,
    single_mode: bool,
    first: Vec<Corrector1>,
    secs: f64,
}

fn profiled(name: &'static str, single_mode: bool, profile: BoundaryProfile) -> Result<Profiled, String> {
    let t = Instant::now();
    let d = build_domain_with(profile, DomainLayout::unit_nz(64, 192, 4.0)).map_err(|e| e.to_string())?;
    let ls = LayerSolver::new(&d, corrector_config()).map_err(|e| e.to_string())?;
    let first = (1..=2).map(|j| ls.solve_bl1(j, None)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    Ok(Profiled { name, single_mode, first, secs: t.elapsed().as_secs_f64() })
}

fn corrector_decay(cases: &[Profiled]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in cases {
        for (j, c1) in c.first.iter().enumerate() {
            let p = decay_profile(c1).map_err(|e| e.to_string())?;
            let rate = p.deviation_fit.slope;
            let fine = !p.deviation_fit.degenerate && rate >= 0.5 && (!c.single_mode || (rate - 1.0).abs() <= 0.1);
            ok &= fine;
            parts.push(format!("{} j={}: {rate:.3}", c.name, j + 1));
        }
        ok &= c.secs < 300.0;
        parts.push(format!("{} {:.0}s", c.name, c.secs));
    }
    check(ok, format!("rates {} (>= 0.5; single mode within 10% of 1; < 300s each)", parts.join(", ")))
}

fn corrector_scaling(single: &Profiled) -> Outcome {
    let radii = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];
    let s = scaled_norms(ScaledSource::First(&single.first[0]), 1.0 / 32.0, &radii).map_err(|e| e.to_string())?;
    check((0.4..=0.6).contains(&s.fit.slope), format!("slope {:.3} in [0.4, 0.6]", s.fit.slope))
}

struct ExcessRun {
    report: ExcessReport,
    members_ok: bool,
    member_worst: f64,
}

fn excess_run(eps: f64, cells_per_period: usize, cells_per_eps: f64, with_members: bool) -> Result<ExcessRun, String> {
    let lay = macro_layout(eps, 6, cells_per_period, cells_per_eps);
    let profile = BoundaryProfile::cosine(0.3);
    let d = build_domain_with(profile.clone(), lay).map_err(|e| e.to_string())?;
    let lx = d.grid.lx;
    let top = move |x: [f64; 3]| {
        let s = (2.0 * PI * x[0] / lx).sin();
        [1.0 + 0.5 * s, 0.0, 0.5 * s]
    };
    let sol = solve_ns(&d, &top, &NsConfig::default()).map_err(|e| e.to_string())?;
    let cell = build_domain_with(profile, cell_layout(&lay, 5.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let set = CorrectorSet::build(&cell, eps, true).map_err(|e| e.to_string())?;
    let ctx: Vec<ExcessContext> =
        (0..3).map(|o| ExcessContext::new(&d, o, Some(&set))).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let radii = scan_radii(eps, 4);
    let report = excess_scan(&sol.field, &radii, eps, &ctx.iter().collect::<Vec<_>>()).map_err(|e| e.to_string())?;
    let (mut members_ok, mut member_worst) = (true, 0.0f64);
    if with_members {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..4 {
            let mut u = StaggeredField::zeros(d.grid);
            for b in &ctx[1].basis {
                u.axpy(rng.gen_range(-2.0..2.0), b);
            }
            let shift = rng.gen_range(-3.0..3.0);
            u.p.iter_mut().for_each(|p| *p += shift);
            let mut r = 1.01 * eps;
            while r <= 0.5 {
                let e = ctx[1].compute(&u, r).map_err(|e| e.to_string())?;
                member_worst = member_worst.max(e.value);
                let h = ctx[0].compute(&u, r).map_err(|e| e.to_string())?.value;
                members_ok &= h <= phi(&u, &d.fluid, r, Region::Bumpy);
                r *= 1.15;
            }
        }
    }
    Ok(ExcessRun { report, members_ok, member_worst })
}

fn excess_decay(coarse: &ExcessRun, fine: &ExcessRun, secs: f64) -> Outcome {
    let slope = |r: &ExcessReport, k: &str| r.fits[k].slope;
    let (p, h1, h2) = (slope(&coarse.report, "Phi"), slope(&coarse.report, "H1"), slope(&coarse.report, "H2"));
    let (fp, fh1, fh2) = (slope(&fine.report, "Phi"), slope(&fine.report, "H1"), slope(&fine.report, "H2"));
    let rel = |a: f64, b: f64| ((b - a) / a).abs();
    let phi_change = coarse.report.phi.iter().zip(&fine.report.phi).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
    let ok = p >= -0.1
        && h1 >= 0.4
        && h2 >= 1.2
        && rel(h1, fh1) <= 0.25
        && rel(h2, fh2) <= 0.25
        && phi_change <= 0.25
        && coarse.report.radii == fine.report.radii
        && secs < 1800.0;
    check(
        ok,
        format!(
            "slopes Phi {p:.3} (>= -0.1), H1 {h1:.3} (>= 0.4), H2 {h2:.3} (>= 1.2); doubled: Phi {fp:.3}, H1 {fh1:.3} ({:.0}%), H2 {fh2:.3} ({:.0}%), max Phi change {:.0}% (<= 25%); {secs:.0}s (< 1800s)",
            100.0 * rel(h1, fh1),
            100.0 * rel(h2, fh2),
            100.0 * phi_change
        ),
    )
}

fn bogovskii() -> Outcome {
    let mut residual: f64 = 0.0;
    let mut norms = Vec::new();
    for m in [16, 32] {
        let (g, mask) = unit_cube(m);
        let mut b = build_inverse_on_grid(g, &mask).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
        for _ in 0..3 {
            let mut f = b.random_input(&mut rng);
            b.remove_mean(&mut f);
            let u = b.apply(&f).map_err(|e| e.to_string())?;
            residual = residual.max(b.divergence_residual(&u, &f));
        }
        norms.push(b.norm_track(10, 11).map_err(|e| e.to_string())?);
    }
    let ratio = norms[1] / norms[0];
    check(
        residual <= 1e-10 && (0.5..=2.0).contains(&ratio),
        format!("residual {residual:.2e} (<= 1e-10), norm 16^3 {:.4} -> 32^3 {:.4}, ratio {ratio:.3} (within 2x)", norms[0], norms[1]),
    )
}

fn batch_constant(eps: f64) -> Result<(f64, usize), String> {
    let params = SynthParams { eps, ..SynthParams::default() };
    let (mut c, mut fails) = (0.0f64, 0);
    for seed in 0..200 {
        let inst = synth_family(seed, &params).map_err(|e| e.to_string())?;
        let rep = check_hypotheses(&inst).map_err(|e| e.to_string())?;
        match verify_conclusion(&inst) {
            Ok(v) if rep.all_pass() => c = c.max(v.ratio),
            _ => fails += 1,
        }
    }
    Ok((c, fails))
}

fn iteration() -> Outcome {
    let t = Instant::now();
    let (c1, f1) = batch_constant(1.0 / 48.0)?;
    let (c2, f2) = batch_constant(1.0 / 96.0)?;
    let k = LemmaConstants::default();
    let blow_up = IterationInstance::from_fns(k, DEFAULT_POINTS, |r| 1.0 / r, |_| 1.0, |_| 1.0);
    let mut flagged = !check_hypotheses(&blow_up).map_err(|e| e.to_string())?.all_pass() && verify_conclusion(&blow_up).is_err();
    for m in 0..4 {
        let inst = inflated_family(1.0 / (48.0 * 2f64.powi(m)));
        flagged &= !check_hypotheses(&inst).map_err(|e| e.to_string())?.pass[0];
    }
    let change = (c2 / c1 - 1.0).abs();
    let secs = t.elapsed().as_secs_f64();
    check(
        f1 == 0 && f2 == 0 && c1.is_finite() && change <= 0.3 && flagged && secs < 10.0,
        format!("failures {f1}+{f2} of 400, C {c1:.4} -> {c2:.4} ({:.0}% <= 30%), violations flagged {flagged}, {secs:.1}s (< 10s)", 100.0 * change),
    )
}

fn fro(m: &[[f64; 3]; 3]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn green() -> Outcome {
    let t = Instant::now();
    let domain = |top| build_domain_with(BoundaryProfile::cosine(0.3), DomainLayout::unit(48, top)).map_err(|e| e.to_string());
    let centered = |d: &DiscreteDomain, y| {
        let (i, j, k) = d.grid.locate(y);
        d.grid.cell_center(i, j, k)
    };
    let d = domain(5.0)?;
    let gs = GreenSolver::new(&d, green_config()).map_err(|e| e.to_string())?;
    let r0 = 2.0 * d.grid.h.max(d.grid.hz);
    let col = gs.column(centered(&d, [0.0, 0.0, 2.5]), r0).map_err(|e| e.to_string())?;
    let rays = sample_rays(&d, &col, col.y[2], 2.0 * r0, FRAC_PI_2);
    let s = summarize(&col, &rays).map_err(|e| e.to_string())?;

    let d = domain(7.0)?;
    let gs = GreenSolver::new(&d, green_config()).map_err(|e| e.to_string())?;
    let r0 = 2.0 * d.grid.h.max(d.grid.hz);
    let y = centered(&d, [0.0, 0.0, 5.0]);
    let col = gs.column(y, r0).map_err(|e| e.to_string())?;
    let open = d.first_open_layer();
    let flat = GreenColumn { responses: col.responses.clone().map(|f| without_layer_means(&f, open)), ..col.clone() };
    let oracle = PeriodicStokeslet::new(d.grid.lx, 16);
    let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.6, 0.0, 0.8], [0.48, 0.6, -0.64]];
    let mut near: f64 = 0.0;
    for dir in dirs {
        for w in [0.0, 0.5, 1.0] {
            let r = 4.0 * r0 + w * (col.delta / 4.0 - 4.0 * r0);
            let off = dir.map(|c| r * c);
            let got = gs.evaluate(&flat, [y[0] + off[0], y[1] + off[1], y[2] + off[2]]);
            let want = oracle.eval(off).0;
            let mut err = got;
            for a in 0..3 {
                for b in 0..3 {
                    err[a][b] -= want[a][b];
                }
            }
            near = near.max(fro(&err) / fro(&want));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        (s.velocity_exponent + 1.0).abs() <= 0.3
            && (s.gradient_exponent + 2.0).abs() <= 0.4
            && (s.pressure_exponent + 2.0).abs() <= 0.5
            && near <= 0.1
            && secs < 900.0,
        format!(
            "exponents G {:.3} (-1 +- 0.3), grad G {:.3} (-2 +- 0.4), Pi {:.3} (-2 +- 0.5), near field {:.1}% (<= 10%), {secs:.0}s (< 900s)",
            s.velocity_exponent,
            s.gradient_exponent,
            s.pressure_exponent,
            100.0 * near
        ),
    )
}

fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
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

fn averaging() -> Outcome {
    let t = Instant::now();
    let g = Grid::new(16, 96, 1.0, 0.0, 6.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let fields: Vec<Vec<f64>> = (0..100).map(|_| random_field(&g, &mut rng)).collect();
    let ys: Vec<[f64; 3]> = (0..6).map(|s| [(s as f64 - 2.5) * 0.1, 0.05 * s as f64, 3.0 + 0.01 * s as f64]).collect();
    let mut per_t = Vec::new();
    for m in [2.0, 4.0, 8.0] {
        let mut acc = AveragingConstants::default();
        for f in &fields {
            acc = acc.max(averaging_constants(&g, f, m * g.h, &ys).map_err(|e| e.to_string())?);
        }
        per_t.push(acc);
    }
    let mut ok = per_t.iter().all(|c| {
        c.monotone <= 1.0 + 1e-12
            && c.equivalence_lower <= 4.0
            && c.equivalence_upper <= 4.0
            && c.as_array().iter().all(|v| v.is_finite() && *v > 0.0)
    });
    let mut spread: f64 = 0.0;
    for q in 0..6 {
        let mut vals: Vec<f64> = per_t.iter().map(|c| c.as_array()[q]).collect();
        vals.sort_by(f64::total_cmp);
        spread = spread.max(vals[2] / vals[1]);
    }
    ok &= spread <= 1.5;
    let secs = t.elapsed().as_secs_f64();
    check(
        ok && secs < 30.0,
        format!("monotone {:.3} (<= 1), worst max/median over t {spread:.3} (<= 1.5), {secs:.1}s (< 30s)", per_t[0].monotone),
    )
}

fn candidate_space(runs: &[&ExcessRun]) -> Outcome {
    let ordered = runs.iter().all(|r| r.report.h.iter().zip(&r.report.phi).all(|(h, p)| h <= p));
    let worst = runs.iter().map(|r| r.member_worst).fold(0.0, f64::max);
    let members = runs.iter().all(|r| r.members_ok);
    check(worst < 1e-6 && ordered && members, format!("member excess {worst:.2e} (< 1e-6), H <= Phi at every radius {}", ordered && members))
}

fn report(n: usize, name: &str, out: &Outcome, failed: &mut usize) {
    match out {
        Ok(d) => println!("PASS criterion {n:>2} {name}: {d}"),
        Err(d) => {
            *failed += 1;
            println!("FAIL criterion {n:>2} {name}: {d}");
        }
    }
}

fn main() {
    let mut failed = 0;
    report(1, "polynomial exactness", &polynomials(), &mut failed);
    report(2, "flat-wall closed forms", &flat_closed_forms(), &mut failed);

    let multi = BoundaryProfile::Graph {
        amplitude: -0.1,
        fourier_modes: vec![[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.5, 0.0], [1.0, 1.0, 0.3, 0.0], [2.0, 0.0, 0.0, 0.2]],
    };
    let cases: Result<Vec<Profiled>, String> =
        [("cosine", true, BoundaryProfile::cosine(0.2)), ("multi-mode", false, multi)].into_iter().map(|(n, s, p)| profiled(n, s, p)).collect();
    match &cases {
        Ok(cases) => {
            report(3, "corrector decay", &corrector_decay(cases), &mut failed);
            report(4, "corrector scaling", &corrector_scaling(&cases[0]), &mut failed);
        }
        Err(e) => {
            report(3, "corrector decay", &Err(e.clone()), &mut failed);
            report(4, "corrector scaling", &Err(e.clone()), &mut failed);
        }
    }

    let t = Instant::now();
    let coarse = excess_run(1.0 / 32.0, 8, 4.0 / 3.0, true);
    let fine = excess_run(1.0 / 32.0, 16, 8.0 / 3.0, false);
    let secs = t.elapsed().as_secs_f64();
    let (fifth, tenth) = match (&coarse, &fine) {
        (Ok(c), Ok(f)) => (excess_decay(c, f, secs), candidate_space(&[c, f])),
        (Err(e), _) | (_, Err(e)) => (Err(e.clone()), Err(e.clone())),
    };
    report(5, "excess decay", &fifth, &mut failed);
    report(6, "divergence inverse", &bogovskii(), &mut failed);
    report(7, "iteration lemma", &iteration(), &mut failed);
    report(8, "Green decay", &green(), &mut failed);
    report(9, "averaging operator", &averaging(), &mut failed);
    report(10, "candidate-space exactness", &tenth, &mut failed);

    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
