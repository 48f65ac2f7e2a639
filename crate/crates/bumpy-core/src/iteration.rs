//! Executable form of the scale-iteration lemma: hypothesis checks (a)-(f), the conclusion
//! ratio, and random families satisfying the hypotheses by construction.

use crate::error::{BumpyError, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_POINTS: usize = 256;
const SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LemmaConstants {
    pub c0: f64,
    pub b0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub eps: f64,
}

impl Default for LemmaConstants {
    fn default() -> Self {
        LemmaConstants { c0: 4.0, b0: 1.0, alpha: 0.5, beta: 0.5, theta: 0.125, eps: 1.0 / 48.0 }
    }
}

/// Nonnegative functions sampled on an increasing log-uniform radius grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationInstance {
    pub radii: Vec<f64>,
    pub big_h: Vec<f64>,
    pub phi: Vec<f64>,
    pub small_h: Vec<f64>,
    pub constants: LemmaConstants,
}

/// Log-uniform grid from `lo` to 1 with `n` points.
pub fn log_grid(lo: f64, n: usize) -> Vec<f64> {
    let a = lo.ln();
    (0..n).map(|i| (a * (1.0 - i as f64 / (n - 1) as f64)).exp()).collect()
}

impl IterationInstance {
    pub fn from_fns(
        constants: LemmaConstants,
        n: usize,
        big_h: impl Fn(f64) -> f64,
        phi: impl Fn(f64) -> f64,
        small_h: impl Fn(f64) -> f64,
    ) -> Self {
        let radii = log_grid(constants.theta * constants.eps * 0.5, n);
        IterationInstance {
            big_h: radii.iter().map(|&r| big_h(r)).collect(),
            phi: radii.iter().map(|&r| phi(r)).collect(),
            small_h: radii.iter().map(|&r| small_h(r)).collect(),
            radii,
            constants,
        }
    }

    fn interp(&self, v: &[f64], r: f64) -> f64 {
        let n = self.radii.len();
        if r <= self.radii[0] {
            return v[0];
        }
        if r >= self.radii[n - 1] {
            return v[n - 1];
        }
        let i = self.radii.partition_point(|&x| x <= r).max(1) - 1;
        let (a, b) = (self.radii[i].ln(), self.radii[i + 1].ln());
        let t = (r.ln() - a) / (b - a);
        v[i] * (1.0 - t) + v[i + 1] * t
    }

    pub fn big_h_at(&self, r: f64) -> f64 {
        self.interp(&self.big_h, r)
    }
    pub fn phi_at(&self, r: f64) -> f64 {
        self.interp(&self.phi, r)
    }
    pub fn small_h_at(&self, r: f64) -> f64 {
        self.interp(&self.small_h, r)
    }

    /// Maximum of `v` over [a, b]: grid samples inside plus both interpolated endpoints.
    fn window_max(&self, v: &[f64], a: f64, b: f64) -> f64 {
        let mut m = self.interp(v, a).max(self.interp(v, b));
        for (r, x) in self.radii.iter().zip(v) {
            if *r >= a && *r <= b {
                m = m.max(*x);
            }
        }
        m
    }

    fn window_min(&self, v: &[f64], a: f64, b: f64) -> f64 {
        let mut m = self.interp(v, a).min(self.interp(v, b));
        for (r, x) in self.radii.iter().zip(v) {
            if *r >= a && *r <= b {
                m = m.min(*x);
            }
        }
        m
    }

    fn radii_in(&self, a: f64, b: f64) -> impl Iterator<Item = f64> + '_ {
        self.radii.iter().cloned().filter(move |r| *r >= a * (1.0 - 1e-12) && *r <= b * (1.0 + 1e-12))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HypothesisReport {
    /// Pass flags for (a)..(f).
    pub pass: [bool; 6],
    /// Largest violation margin (left minus right) per hypothesis; nonpositive when passing.
    pub worst_margin: [f64; 6],
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|p| *p)
    }
}

pub fn check_hypotheses(inst: &IterationInstance) -> Result<HypothesisReport> {
    let k = inst.constants;
    let count = inst.radii_in(k.eps, 0.5).count();
    if count < 50 {
        return Err(BumpyError::GridTooCoarse(count));
    }
    if inst.radii[0] > k.theta * k.eps * (1.0 + 1e-12) || *inst.radii.last().unwrap() < 1.0 - 1e-12 {
        return Err(BumpyError::Invalid("grid must cover [theta*eps, 1]".into()));
    }
    let mut worst = [f64::NEG_INFINITY; 6];
    let mut upd = |i: usize, lhs: f64, rhs: f64| {
        let m = lhs - rhs - SLACK * (1.0 + rhs.abs());
        if m > worst[i] {
            worst[i] = m;
        }
    };
    for r in inst.radii_in(k.eps, 1.0 / 16.0) {
        let lhs = inst.big_h_at(k.theta * r);
        let rhs = 0.5 * inst.big_h_at(2.0 * r)
            + k.c0 * ((k.eps / r).powf(k.alpha) * inst.phi_at(16.0 * r) + k.b0 * r.powf(k.beta));
        upd(0, lhs, rhs);
    }
    for r in inst.radii_in(k.eps, 0.5) {
        let (hh, ph, sh) = (inst.big_h_at(r), inst.phi_at(r), inst.small_h_at(r));
        upd(1, hh, k.c0 * ph);
        upd(3, sh, k.c0 * (hh + ph));
        upd(4, ph, k.c0 * (hh + sh));
    }
    for r in inst.radii_in(k.eps, 0.25) {
        let sup = inst.window_max(&inst.phi, r, 2.0 * r);
        upd(2, sup, k.c0 * (inst.phi_at(2.0 * r) + k.b0 * r.powf(k.beta)));
        let osc = inst.window_max(&inst.small_h, r, 2.0 * r) - inst.window_min(&inst.small_h, r, 2.0 * r);
        upd(5, osc, k.c0 * inst.big_h_at(2.0 * r));
    }
    let nonneg = inst
        .big_h
        .iter()
        .chain(&inst.phi)
        .chain(&inst.small_h)
        .all(|v| *v >= 0.0 && v.is_finite());
    if !nonneg {
        return Err(BumpyError::Invalid("functions must be finite and nonnegative".into()));
    }
    let mut pass = [false; 6];
    for i in 0..6 {
        pass[i] = worst[i] <= 0.0;
    }
    Ok(HypothesisReport { pass, worst_margin: worst })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Conclusion {
    /// Integral of H(t)/t over [eps, 1/2] plus sup of Phi there.
    pub lhs: f64,
    /// Phi(1/2) + B0.
    pub reference: f64,
    pub ratio: f64,
}

/// Left side of the conclusion without checking hypotheses.
pub fn conclusion_ratio(inst: &IterationInstance) -> Conclusion {
    let k = inst.constants;
    let (a, b) = (k.eps, 0.5);
    let mut pts: Vec<f64> = vec![a];
    pts.extend(inst.radii.iter().cloned().filter(|r| *r > a && *r < b));
    pts.push(b);
    let mut integral = 0.0;
    for w in pts.windows(2) {
        let (fa, fb) = (inst.big_h_at(w[0]), inst.big_h_at(w[1]));
        integral += 0.5 * (fa + fb) * (w[1].ln() - w[0].ln());
    }
    let sup = inst.window_max(&inst.phi, a, b);
    let lhs = integral + sup;
    let reference = inst.phi_at(0.5) + k.b0;
    Conclusion { lhs, reference, ratio: lhs / reference }
}

pub fn verify_conclusion(inst: &IterationInstance) -> Result<Conclusion> {
    let rep = check_hypotheses(inst)?;
    if !rep.all_pass() {
        let failed: Vec<&str> = ["a", "b", "c", "d", "e", "f"]
            .iter()
            .zip(rep.pass)
            .filter(|(_, p)| !p)
            .map(|(n, _)| *n)
            .collect();
        return Err(BumpyError::HypothesesFail(failed.join(",")));
    }
    Ok(conclusion_ratio(inst))
}

/// Ranges for the random generator; each constant is drawn uniformly from its range.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub c0: (f64, f64),
    pub b0: (f64, f64),
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
    pub theta: (f64, f64),
    pub eps: f64,
    pub points: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            c0: (2.0, 8.0),
            b0: (0.1, 2.0),
            alpha: (0.2, 1.0),
            beta: (0.2, 1.0),
            theta: (1.0 / 16.0, 1.0 / 8.0),
            eps: 1.0 / 48.0,
            points: DEFAULT_POINTS,
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.gen_range(r.0..=r.1)
    } else {
        r.0
    }
}

/// Random instance satisfying (a)-(f) by construction, re-checked before returning.
pub fn synth_family(seed: u64, params: &SynthParams) -> Result<IterationInstance> {
    if params.eps <= 0.0 || params.eps > 1.0 / 48.0 + 1e-15 {
        return Err(BumpyError::Invalid(format!("eps {} outside (0, 1/48]", params.eps)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let k = LemmaConstants {
            c0: draw(&mut rng, params.c0),
            b0: draw(&mut rng, params.b0),
            alpha: draw(&mut rng, params.alpha),
            beta: draw(&mut rng, params.beta),
            theta: draw(&mut rng, params.theta).min(0.125),
            eps: params.eps,
        };
        let inst = synth_once(&mut rng, k, params.points.max(64));
        if let Ok(rep) = check_hypotheses(&inst) {
            if rep.all_pass() {
                return Ok(inst);
            }
        }
    }
    Err(BumpyError::GenerationFailed(100))
}

fn synth_once(rng: &mut ChaCha8Rng, k: LemmaConstants, n: usize) -> IterationInstance {
    let radii = log_grid(k.theta * k.eps * 0.5, n);
    // Phi: bounded random walk in log r with knots every ~1/3 decade.
    let spread = k.c0.sqrt().min(2.0);
    let knots = 12;
    let lo = radii[0].ln();
    let kx: Vec<f64> = (0..=knots).map(|i| lo * (1.0 - i as f64 / knots as f64)).collect();
    let base: f64 = rng.gen_range(0.5..2.0);
    let ky: Vec<f64> = (0..=knots).map(|_| base * rng.gen_range(1.0..spread)).collect();
    let phi_min = ky.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi_max = ky.iter().cloned().fold(0.0, f64::max);
    let phi: Vec<f64> = radii
        .iter()
        .map(|r| {
            let x = r.ln();
            let i = kx.partition_point(|&t| t <= x).clamp(1, knots) - 1;
            let t = ((x - kx[i]) / (kx[i + 1] - kx[i])).clamp(0.0, 1.0);
            ky[i] * (1.0 - t) + ky[i + 1] * t
        })
        .collect();
    // H: below a decaying envelope compatible with (a) and (b).
    let kappa = 0.9 * k.c0 * rng.gen_range(0.2..1.0);
    let kappa_p = 0.9 * k.c0 * k.theta.powf(k.alpha) * rng.gen_range(0.2..1.0);
    let wobble_amp: f64 = rng.gen_range(0.0..0.3);
    let wobble_freq: f64 = rng.gen_range(1.0..4.0);
    let phase: f64 = rng.gen_range(0.0..6.3);
    let big_h: Vec<f64> = radii
        .iter()
        .zip(&phi)
        .map(|(&r, &p)| {
            let env = kappa * k.b0 * r.powf(k.beta) + kappa_p * (k.eps / r).min(1.0).powf(k.alpha) * phi_min;
            let w = 1.0 - wobble_amp * (0.5 + 0.5 * (wobble_freq * r.ln() + phase).sin());
            (env * w).min(0.9 * k.c0 * p)
        })
        .collect();
    // h: level set by (d)/(e), modulated by H so that (f) holds.
    let level = phi_max / k.c0 * rng.gen_range(1.05..1.5);
    let level = level.min(0.95 * k.c0 * phi_min);
    let c = 0.25 * rng.gen_range(0.0..1.0);
    let small_h: Vec<f64> = big_h.iter().map(|hh| level + c * hh).collect();
    IterationInstance { radii, big_h, phi, small_h, constants: k }
}

/// Instance whose H does not decay: (a) fails and the conclusion grows like log(1/eps).
pub fn inflated_family(eps: f64) -> IterationInstance {
    let k = LemmaConstants { eps, alpha: 1.0, b0: 0.01, ..LemmaConstants::default() };
    IterationInstance::from_fns(k, DEFAULT_POINTS, |_| 1.2, |_| 0.3, |_| 1.0)
}

/// CSV rows (radius, H, Phi, h) with 17 significant digits.
pub fn to_csv(inst: &IterationInstance) -> String {
    let mut s = String::from("radius,H,Phi,h\n");
    for i in 0..inst.radii.len() {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            inst.radii[i], inst.big_h[i], inst.phi[i], inst.small_h[i]
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_instance_passes() {
        let k = LemmaConstants::default();
        let inst = IterationInstance::from_fns(k, 256, |_| 0.0, |_| 1.0, |_| k.c0);
        assert!(check_hypotheses(&inst).unwrap().all_pass());
        let c = verify_conclusion(&inst).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12);
        assert!((c.ratio - 1.0 / (1.0 + k.b0)).abs() < 1e-12);
    }

    #[test]
    fn blow_up_fails_b() {
        let k = LemmaConstants::default();
        let inst = IterationInstance::from_fns(k, 256, |r| 1.0 / r, |_| 1.0, |_| 1.0);
        assert!(!check_hypotheses(&inst).unwrap().pass[1]);
    }

    #[test]
    fn coarse_grid_rejected() {
        let k = LemmaConstants::default();
        let inst = IterationInstance::from_fns(k, 30, |_| 0.0, |_| 1.0, |_| 1.0);
        assert!(matches!(check_hypotheses(&inst), Err(BumpyError::GridTooCoarse(_))));
    }

    #[test]
    fn seed_zero_valid() {
        let inst = synth_family(0, &SynthParams::default()).unwrap();
        assert!(check_hypotheses(&inst).unwrap().all_pass());
    }

    #[test]
    fn endpoint_constants() {
        let p = SynthParams { theta: (0.125, 0.125), eps: 1.0 / 48.0, ..SynthParams::default() };
        let inst = synth_family(3, &p).unwrap();
        assert_eq!(inst.constants.theta, 0.125);
    }

    #[test]
    fn inflated_violates_a() {
        let rep = check_hypotheses(&inflated_family(1.0 / 48.0)).unwrap();
        assert!(!rep.pass[0]);
    }
}
