use bumpy_core::error::BumpyError;
use bumpy_core::iteration::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch_constant(eps: f64, seeds: std::ops::Range<u64>) -> f64 {
    let params = SynthParams { eps, ..SynthParams::default() };
    let mut c: f64 = 0.0;
    for seed in seeds {
        let inst = synth_family(seed, &params).unwrap();
        let rep = check_hypotheses(&inst).unwrap();
        assert!(rep.all_pass(), "seed {seed}: {rep:?}");
        c = c.max(verify_conclusion(&inst).unwrap().ratio);
    }
    c
}

#[test]
fn seeded_batch_has_a_stable_constant() {
    let c1 = batch_constant(1.0 / 48.0, 0..200);
    let c2 = batch_constant(1.0 / 96.0, 0..200);
    assert!(c1.is_finite() && c1 > 0.0);
    assert!((c2 / c1 - 1.0).abs() <= 0.3, "C {c1} -> {c2}");
}

#[test]
fn trivial_instances() {
    let k = LemmaConstants::default();
    let inst = IterationInstance::from_fns(k, DEFAULT_POINTS, |_| 0.0, |_| 1.0, |_| k.c0);
    assert!(check_hypotheses(&inst).unwrap().all_pass());
    let c = verify_conclusion(&inst).unwrap();
    assert!((c.ratio - 1.0 / (1.0 + k.b0)).abs() < 1e-12);
}

#[test]
fn hypothesis_a_matches_closed_form_predicate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut agree, mut pass, mut fail) = (0, 0, 0);
    for _ in 0..300 {
        let k = LemmaConstants {
            c0: rng.gen_range(0.01..2.0),
            b0: rng.gen_range(0.0..0.5),
            alpha: rng.gen_range(0.1..1.0),
            beta: rng.gen_range(0.05..1.0),
            theta: rng.gen_range(0.02..0.125),
            eps: 1.0 / 48.0,
        };
        let lam: f64 = rng.gen_range(0.5..20.0);
        let b = k.beta;
        let inst = IterationInstance::from_fns(k, 2048, |r| lam * r.powf(b), |r| 1.0 + r.powf(b), |r| 1.0 + r.powf(b));
        // exact margins at the grid radii in [eps, 1/16]
        let margins: Vec<f64> = inst
            .radii
            .iter()
            .filter(|&&r| r >= k.eps && r <= 1.0 / 16.0)
            .map(|&r| {
                let lhs = lam * (k.theta * r).powf(b);
                let rhs = 0.5 * lam * (2.0 * r).powf(b)
                    + k.c0 * ((k.eps / r).powf(k.alpha) * (1.0 + (16.0 * r).powf(b)) + k.b0 * r.powf(b));
                (lhs - rhs) / rhs
            })
            .collect();
        let worst = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if worst.abs() < 1e-2 {
            continue;
        }
        let closed = worst <= 0.0;
        let checked = check_hypotheses(&inst).unwrap().pass[0];
        assert_eq!(closed, checked, "{k:?} lam {lam} worst {worst}");
        agree += 1;
        if closed {
            pass += 1;
        } else {
            fail += 1;
        }
    }
    assert!(agree > 200 && pass > 20 && fail > 20, "{agree} {pass} {fail}");
}

#[test]
fn blow_up_and_inflated_families_are_flagged() {
    let k = LemmaConstants::default();
    let inst = IterationInstance::from_fns(k, DEFAULT_POINTS, |r| 1.0 / r, |_| 1.0, |_| 1.0);
    let rep = check_hypotheses(&inst).unwrap();
    assert!(!rep.pass[1]);
    assert!(matches!(verify_conclusion(&inst), Err(BumpyError::HypothesesFail(_))));
    let mut last = 0.0;
    for m in 0..4 {
        let inst = inflated_family(1.0 / (48.0 * 2f64.powi(m)));
        assert!(!check_hypotheses(&inst).unwrap().pass[0]);
        let r = conclusion_ratio(&inst).ratio;
        assert!(r > last + 0.5, "ratio {r} after {last}");
        last = r;
    }
}

#[test]
fn small_beta_stress_case() {
    for beta in [0.05, 0.02] {
        let params = SynthParams { beta: (beta, beta), b0: (0.1 / beta, 0.1 / beta), ..SynthParams::default() };
        let inst = synth_family(0, &params).unwrap();
        assert!(check_hypotheses(&inst).unwrap().all_pass());
    }
}

#[test]
fn argument_errors() {
    let params = SynthParams { eps: 0.1, ..SynthParams::default() };
    assert!(matches!(synth_family(0, &params), Err(BumpyError::Invalid(_))));
    let k = LemmaConstants::default();
    let inst = IterationInstance::from_fns(k, 20, |_| 0.0, |_| 1.0, |_| 1.0);
    assert!(matches!(check_hypotheses(&inst), Err(BumpyError::GridTooCoarse(_))));
    let mut bad = IterationInstance::from_fns(k, DEFAULT_POINTS, |_| 0.0, |_| 1.0, |_| 1.0);
    bad.phi[3] = -1.0;
    assert!(check_hypotheses(&bad).is_err());
    let csv = to_csv(&bad);
    assert_eq!(csv.lines().count(), DEFAULT_POINTS + 1);
}
