//! Krylov iterations over plain `Vec<f64>` vectors.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Preconditioned residual norm relative to the initial one.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned MINRES for symmetric (possibly indefinite) `A` with SPD preconditioner `M^-1`.
/// `x` holds the initial guess on entry.
pub fn minres<A, P>(op: A, prec: P, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> KrylovStats
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r1 = vec![0.0; n];
    op(x, &mut r1);
    for i in 0..n {
        r1[i] = b[i] - r1[i];
    }
    let mut y = vec![0.0; n];
    prec(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if !beta1.is_finite() {
        return KrylovStats { iterations: 0, relative_residual: f64::NAN, converged: false };
    }
    if beta1 <= 0.0 {
        return KrylovStats { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        op(&v, &mut y);
        if it >= 2 {
            axpy(&mut y, -beta / oldb, &r1);
        }
        let alfa = dot(&v, &y);
        axpy(&mut y, -alfa / beta, &r2);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        prec(&r2, &mut y);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            break;
        }
        beta = bb.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
        }
        axpy(x, phi, &w);
        if !phibar.is_finite() {
            return KrylovStats { iterations: it, relative_residual: f64::NAN, converged: false };
        }
        if phibar <= rtol * beta1 || beta == 0.0 {
            return KrylovStats { iterations: it, relative_residual: phibar / beta1, converged: true };
        }
    }
    KrylovStats { iterations: it, relative_residual: phibar / beta1, converged: false }
}

/// Preconditioned conjugate gradients for SPD `A`.
pub fn pcg<A, P>(op: A, prec: P, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> KrylovStats
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut r = vec![0.0; n];
    op(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = norm(b).max(norm(&r));
    if r0 == 0.0 {
        return KrylovStats { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        op(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return KrylovStats { iterations: it, relative_residual: norm(&r) / r0, converged: false };
        }
        let a = rz / pq;
        axpy(x, a, &p);
        axpy(&mut r, -a, &q);
        let rel = norm(&r) / r0;
        if rel <= rtol {
            return KrylovStats { iterations: it, relative_residual: rel, converged: true };
        }
        prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let b = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + b * p[i];
        }
    }
    KrylovStats { iterations: max_iter, relative_residual: norm(&r) / r0, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(x: &[f64], y: &mut [f64], shift: f64) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = (2.0 + shift) * x[i] - l - r;
        }
    }

    #[test]
    fn minres_indefinite() {
        let n = 60;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let st = minres(|a, y| lap1d(a, y, -1.3), |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 1000);
        assert!(st.converged);
        let mut y = vec![0.0; n];
        lap1d(&x, &mut y, -1.3);
        let err: f64 = y.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn pcg_spd() {
        let n = 50;
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let st = pcg(|a, y| lap1d(a, y, 0.1), |r, z| z.iter_mut().zip(r).for_each(|(z, r)| *z = r / 2.1), &b, &mut x, 1e-12, 500);
        assert!(st.converged);
        let mut y = vec![0.0; n];
        lap1d(&x, &mut y, 0.1);
        assert!(y.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
