use crate::config::*;
use crate::plot::{chart, Series};
use bumpy_core::boundary_layers::{decay_profile, LayerSolver, corrector_config};
use bumpy_core::error::BumpyError;
use bumpy_core::excess::*;
use bumpy_core::geometry::{build_domain_with, john_check, DiscreteDomain, DomainLayout};
use bumpy_core::green::*;
use bumpy_core::iteration::{check_hypotheses, synth_family, to_csv as iteration_csv, verify_conclusion};
use bumpy_core::navier_stokes::{flux_magnitude, solve_ns, NsSolution};
use serde::Serialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

impl From<BumpyError> for CliError {
    fn from(e: BumpyError) -> Self {
        use BumpyError::*;
        match e {
            ProfileOutOfSlab(_) | DisconnectedFluid(_) | InvalidIndex { .. } | NonPeriodicDomain | RadiusOutOfRange(_)
            | MissingCorrectors(_) | MissingCorrector1(_) | GridTooCoarse(_) | WindowTooSmall(_)
            | SourceTooCloseToBoundary(_) | InsufficientRange(_) | Invalid(_) | Json(_) => CliError::Config(e.to_string()),
            HypothesesFail(_) => CliError::Invariant(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

pub struct Ctx {
    pub config: RunConfig,
    pub base: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub plots: bool,
}

impl Ctx {
    fn write(&self, name: &str, text: &str) -> Res<()> {
        let p = self.out.join(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Solver(format!("{}: {e}", dir.display())))?;
        }
        std::fs::write(&p, text).map_err(|e| CliError::Solver(format!("{}: {e}", p.display())))
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> Res<()> {
        let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Solver(e.to_string()))?;
        self.write(name, &(s + "\n"))
    }

    fn plot(&self, name: &str, svg: impl FnOnce() -> String) -> Res<()> {
        if self.plots {
            self.write(name, &svg())?;
        }
        Ok(())
    }

    fn domain(&self) -> Res<DiscreteDomain> {
        let (profile, layout) = self.config.layout().map_err(CliError::Config)?;
        let profile = profile.resolve(Some(&self.base))?;
        Ok(build_domain_with(profile, layout)?)
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn shear_data(d: TopDataBlock, lx: f64) -> impl Fn([f64; 3]) -> [f64; 3] + Sync {
    move |x: [f64; 3]| {
        let s = (2.0 * PI * x[0] / lx).sin();
        [d.amplitude * (1.0 + d.modulation * s), 0.0, d.amplitude * d.modulation * s]
    }
}

fn run_ns(ctx: &Ctx, d: &DiscreteDomain) -> Res<NsSolution> {
    let block = ctx.config.ns.clone().unwrap_or_default();
    let mut picard = block.picard;
    if let Some(s) = ctx.config.solver {
        picard.solver = s;
    }
    let top = shear_data(block.data, d.grid.lx);
    Ok(solve_ns(d, &top, &picard)?)
}

#[derive(Serialize)]
struct DomainSummary {
    layout: DomainLayout,
    n: usize,
    nz: usize,
    h: f64,
    hz: f64,
    fluid_fraction: f64,
    boundary_faces: usize,
    periodic: bool,
    john_estimate: Option<f64>,
}

pub fn domain(ctx: &Ctx) -> Res<()> {
    let d = ctx.domain()?;
    let scales = ctx.config.domain.as_ref().map(|b| b.john_scales.clone()).unwrap_or_default();
    let john = (!scales.is_empty()).then(|| john_check(&d, &scales, 1, 1e3));
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Solver(e.to_string()))?;
    d.mask_indicator().write(&ctx.out.join("mask.bvox"))?;
    let sum = DomainSummary {
        layout: d.layout,
        n: d.grid.n,
        nz: d.grid.nz,
        h: d.grid.h,
        hz: d.grid.hz,
        fluid_fraction: d.fluid_fraction(),
        boundary_faces: d.boundary_faces.len(),
        periodic: d.periodic,
        john_estimate: john.as_ref().map(|j| j.estimate),
    };
    ctx.write_json("domain.json", &sum)?;
    if let Some(j) = &john {
        ctx.write_json("john.json", j)?;
        if let Some(bad) = j.scales.iter().find(|s| !s.pass) {
            return Err(CliError::Invariant(format!("John check fails at radius {}", bad.radius)));
        }
    }
    Ok(())
}

pub fn correctors(ctx: &Ctx) -> Res<()> {
    let d = ctx.domain()?;
    let block = ctx.config.correctors.clone().unwrap_or_default();
    let ls = LayerSolver::new(&d, ctx.config.solver.unwrap_or_else(corrector_config))?;
    let first = vec![ls.solve_bl1(1, None)?, ls.solve_bl1(2, None)?];
    let mut second = Vec::new();
    if block.second_order {
        for j in 1..=6 {
            second.push(ls.solve_bl2(j, &first)?);
        }
    }
    let dir = ctx.out.join("correctors");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Solver(e.to_string()))?;
    let mut alpha = String::from("j,alpha1,alpha2,alpha3\n");
    let mut decay = String::from("j,deviation_rate,gradient_rate,pressure_rate\n");
    let mut worst: f64 = 0.0;
    for c in &first {
        c.save(&dir)?;
        alpha += &format!("{},{},{},{}\n", c.j, num(c.alpha[0]), num(c.alpha[1]), num(c.alpha[2]));
        match decay_profile(c) {
            Ok(p) => {
                let rate = |f: &bumpy_core::fit::DecayFit| if f.degenerate { String::new() } else { num(f.slope) };
                decay += &format!("{},{},{},{}\n", c.j, rate(&p.deviation_fit), rate(&p.gradient_fit), rate(&p.pressure_fit));
                ctx.plot(&format!("decay_v1{}.svg", c.j), || {
                    chart(
                        &format!("first-order corrector {} layer norms", c.j),
                        &[
                            Series { name: "|v - alpha|", x: &p.heights, y: &p.deviation },
                            Series { name: "|grad v|", x: &p.heights, y: &p.gradient },
                            Series { name: "|q|", x: &p.heights, y: &p.pressure },
                        ],
                        false,
                        true,
                    )
                })?;
            }
            Err(BumpyError::InsufficientHeights(_)) => decay += &format!("{},,,\n", c.j),
            Err(e) => return Err(e.into()),
        }
        worst = worst.max(c.noslip_residual);
    }
    let mut norms = String::from("j,remainder_gradient,remainder_pressure,bogovskii_gradient,divergence_corrector_gradient,noslip_residual,divergence_residual\n");
    for c in &second {
        c.save(&dir)?;
        let n = c.norms;
        norms += &format!(
            "{},{},{},{},{},{},{}\n",
            c.j,
            num(n.remainder_gradient),
            num(n.remainder_pressure),
            num(n.bogovskii_gradient),
            num(n.divergence_corrector_gradient),
            num(c.noslip_residual),
            num(c.divergence_residual)
        );
        worst = worst.max(c.noslip_residual);
    }
    ctx.write("alpha.csv", &alpha)?;
    ctx.write("decay.csv", &decay)?;
    if block.second_order {
        ctx.write("second_order_norms.csv", &norms)?;
    }
    let metas: Vec<_> = first.iter().map(|c| c.meta()).collect();
    ctx.write_json("first_order.json", &metas)?;
    if worst > block.noslip_tol {
        return Err(CliError::Invariant(format!("no-slip residual {worst} above {}", block.noslip_tol)));
    }
    Ok(())
}

pub fn ns_solve(ctx: &Ctx) -> Res<()> {
    let d = ctx.domain()?;
    let sol = run_ns(ctx, &d)?;
    ctx.write("trace.csv", &sol.trace_csv())?;
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::Solver(e.to_string()))?;
    sol.field.write(&ctx.out.join("velocity.bfld"))?;
    #[derive(Serialize)]
    struct Summary {
        steps: usize,
        m: f64,
        nonlinear_residual: f64,
    }
    ctx.write_json("ns.json", &Summary { steps: sol.trace.len(), m: sol.m, nonlinear_residual: sol.nonlinear_residual })?;
    let steps: Vec<f64> = sol.trace.iter().map(|t| t.step as f64).collect();
    let inc: Vec<f64> = sol.trace.iter().map(|t| t.increment).collect();
    let res: Vec<f64> = sol.trace.iter().map(|t| t.residual).collect();
    ctx.plot("trace.svg", || {
        chart("Picard iteration", &[Series { name: "increment", x: &steps, y: &inc }, Series { name: "residual", x: &steps, y: &res }], false, true)
    })?;
    let tol = ctx.config.ns.clone().unwrap_or_default().residual_tol;
    if !(sol.nonlinear_residual <= tol) {
        return Err(CliError::Invariant(format!("nonlinear residual {} above {tol}", sol.nonlinear_residual)));
    }
    Ok(())
}

pub fn excess_scan(ctx: &Ctx) -> Res<()> {
    let d = ctx.domain()?;
    let scan = ctx.config.scan.clone().unwrap_or_default();
    let eps = d.layout.eps;
    let needs = scan.orders.iter().copied().filter(|&o| o > 0).max();
    if let Some(o) = scan.orders.iter().find(|&&o| o > 2) {
        return Err(CliError::Config(format!("candidate order {o} not available")));
    }
    let set = match (needs, &scan.correctors, scan.build_correctors) {
        (None, _, _) => None,
        (Some(_), Some(dir), _) => Some(CorrectorSet::load(&ctx.base.join(dir), eps)?),
        (Some(o), None, true) => {
            let cell = build_domain_with(d.profile.clone(), cell_layout(&d.layout, scan.cell_top)?)?;
            Some(CorrectorSet::build(&cell, eps, o >= 2)?)
        }
        (Some(o), None, false) => return Err(BumpyError::MissingCorrectors(o).into()),
    };
    let mut orders = scan.orders.clone();
    if !orders.contains(&0) {
        orders.push(0);
    }
    orders.sort_unstable();
    orders.dedup();
    let ctxs: Vec<ExcessContext> = orders.iter().map(|&o| ExcessContext::new(&d, o, set.as_ref())).collect::<Result<_, _>>()?;
    let sol = run_ns(ctx, &d)?;
    let radii = scan_radii(eps, scan.radii_per_octave.max(1));
    let rep = bumpy_core::excess::excess_scan(&sol.field, &radii, eps, &ctxs.iter().collect::<Vec<_>>())?;
    ctx.write("excess.csv", &rep.to_csv())?;
    ctx.write("slopes.csv", &rep.slopes_csv())?;
    ctx.write_json("excess.json", &rep)?;
    ctx.write("trace.csv", &sol.trace_csv())?;
    for &o in &orders {
        let rows = coefficient_stability(&rep, o)?;
        let mut s = String::from("r_fine,r_coarse,change,excess,ratio,flagged\n");
        for r in &rows {
            s += &format!("{},{},{},{},{},{}\n", num(r.r_fine), num(r.r_coarse), num(r.change), num(r.excess), num(r.ratio), r.flagged);
        }
        ctx.write(&format!("stability_{o}.csv"), &s)?;
    }
    ctx.plot("excess.svg", || {
        let mut series = vec![Series { name: "H", x: &rep.radii, y: &rep.h }, Series { name: "Phi", x: &rep.radii, y: &rep.phi }];
        if !rep.h1.is_empty() {
            series.push(Series { name: "H1", x: &rep.radii, y: &rep.h1 });
        }
        if !rep.h2.is_empty() {
            series.push(Series { name: "H2", x: &rep.radii, y: &rep.h2 });
        }
        chart("excess against radius", &series, true, true)
    })?;
    for (i, (h, p)) in rep.h.iter().zip(&rep.phi).enumerate() {
        if !(h <= p) || !h.is_finite() {
            return Err(CliError::Invariant(format!("H {h} exceeds Phi {p} at radius {}", rep.radii[i])));
        }
    }
    Ok(())
}

pub fn verify_iteration(ctx: &Ctx) -> Res<()> {
    let block = ctx.config.iteration.clone().unwrap_or_default();
    if block.count == 0 {
        return Err(CliError::Config("empty batch: iteration.count is 0".into()));
    }
    let mut rows = String::from("seed,ratio,hypotheses\n");
    let (mut c, mut failures): (f64, Vec<String>) = (0.0, Vec::new());
    for s in ctx.seed..ctx.seed + block.count as u64 {
        let inst = synth_family(s, &block.params)?;
        let rep = check_hypotheses(&inst)?;
        let ratio = match verify_conclusion(&inst) {
            Ok(con) => con.ratio,
            Err(e) => {
                failures.push(format!("seed {s}: {e}"));
                f64::NAN
            }
        };
        if ratio.is_finite() {
            c = c.max(ratio);
        }
        rows += &format!("{s},{},{}\n", num(ratio), if rep.all_pass() { "pass" } else { "fail" });
        if s == ctx.seed {
            ctx.write("first_instance.csv", &iteration_csv(&inst))?;
        }
    }
    ctx.write("batch.csv", &rows)?;
    #[derive(Serialize)]
    struct Summary {
        count: usize,
        first_seed: u64,
        batch_constant: f64,
        failures: usize,
    }
    ctx.write_json("iteration.json", &Summary { count: block.count, first_seed: ctx.seed, batch_constant: c, failures: failures.len() })?;
    if !failures.is_empty() {
        return Err(CliError::Invariant(failures.join("; ")));
    }
    Ok(())
}

pub fn green_probe(ctx: &Ctx) -> Res<()> {
    let g = ctx.config.green.clone().unwrap_or_default();
    let profile = match &ctx.config.domain {
        Some(b) => b.profile.clone().resolve(Some(&ctx.base))?,
        None => bumpy_core::geometry::BoundaryProfile::cosine(0.3),
    };
    let d = build_domain_with(profile, DomainLayout::unit(g.resolution, g.top))?;
    let solver = GreenSolver::new(&d, ctx.config.solver.unwrap_or_else(green_config))?;
    let radius = g.radius_cells * d.grid.h.max(d.grid.hz);
    let (i, j, k) = d.grid.locate(g.source);
    let y = d.grid.cell_center(i, j, k);
    let col = solver.column(y, radius)?;
    let rays = sample_rays(&d, &col, y[2], g.r_min_radii * radius, g.r_max);
    ctx.write("rays.csv", &rays.to_csv())?;
    let mut fits = Vec::new();
    for (mode, name) in [(GreenMode::Velocity, "G"), (GreenMode::Gradient, "gradG"), (GreenMode::Pressure, "Pi")] {
        let f = decay_fit(&rays, mode)?;
        let mut s = String::from("distance,value,fit\n");
        for (r, v) in f.abscissa.iter().zip(&f.values) {
            s += &format!("{},{},{}\n", num(*r), num(*v), num(f.constant * r.powf(f.slope)));
        }
        ctx.write(&format!("fit_{name}.csv"), &s)?;
        fits.push(f);
    }
    let summary = summarize(&col, &rays)?;
    ctx.write_json("green.json", &summary)?;
    ctx.plot("green.svg", || {
        chart(
            "isolated response along rays",
            &[
                Series { name: "|G|", x: &rays.distance, y: &rays.velocity },
                Series { name: "|grad G|", x: &rays.distance, y: &rays.gradient },
                Series { name: "|Pi|", x: &rays.distance, y: &rays.pressure },
            ],
            true,
            true,
        )
    })?;
    if fits.iter().any(|f| !f.slope.is_finite() || f.values.iter().any(|v| !(*v > 0.0))) {
        return Err(CliError::Invariant("degenerate response along the rays".into()));
    }
    Ok(())
}

pub fn inequalities(ctx: &Ctx) -> Res<()> {
    let d = ctx.domain()?;
    let block = ctx.config.inequalities.clone().unwrap_or_default();
    let sol = run_ns(ctx, &d)?;
    let f = flux_magnitude(&sol.field, &d.fluid);
    let bat = inequality_battery(&sol.field, &d.fluid, &f, d.layout.eps, &block.radii, block.morrey_l)?;
    let mut s = String::from("inequality,parameter,constant\n");
    for r in bat.caccioppoli.iter().chain(&bat.meyers).chain(&bat.calderon_zygmund) {
        s += &format!("{},{},{}\n", r.name, num(r.parameter), num(r.constant));
    }
    ctx.write("inequalities.csv", &s)?;
    ctx.write_json("inequalities.json", &bat)?;
    if let Some(m) = &bat.morrey {
        let mut t = String::from("radius,value\n");
        for (r, v) in m.fit.abscissa.iter().zip(&m.fit.values) {
            t += &format!("{},{}\n", num(*r), num(*v));
        }
        ctx.write("morrey.csv", &t)?;
    }
    let bad = bat.caccioppoli.iter().chain(&bat.meyers).chain(&bat.calderon_zygmund).find(|r| !r.constant.is_finite());
    if let Some(r) = bad {
        return Err(CliError::Invariant(format!("{} constant is not finite at parameter {}", r.name, r.parameter)));
    }
    Ok(())
}

pub fn out_dir(out: Option<&Path>, command: &str) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out").join(command))
}
