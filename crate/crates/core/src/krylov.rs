//! Restarted GMRES with right preconditioning, over closures.

use crate::grid::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    /// Target relative residual `|b - A x| / |b|`.
    pub tol: f64,
    /// Cap on the total number of Arnoldi steps.
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, restart: 40 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Identity preconditioner.
pub fn identity(x: &[C64], y: &mut [C64]) {
    y.copy_from_slice(x);
}

/// Solves `A x = b` by GMRES on `A M y = b`, `x = M y`.
///
/// `apply(x, y)` writes `A x` into `y`; `precond(x, y)` writes `M x` into `y`.
pub fn gmres(
    mut apply: impl FnMut(&[C64], &mut [C64]),
    mut precond: impl FnMut(&[C64], &mut [C64]),
    b: &[C64],
    x0: Option<&[C64]>,
    cfg: &GmresConfig,
) -> GmresOutcome {
    let n = b.len();
    let zero = C64::new(0.0, 0.0);
    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n);
            x0.to_vec()
        }
        None => vec![zero; n],
    };
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return GmresOutcome { x: vec![zero; n], iterations: 0, residual: 0.0, converged: true };
    }
    let m = cfg.restart.max(1);
    let mut work = vec![zero; n];
    let mut z = vec![zero; n];
    let mut r = vec![zero; n];
    let mut v: Vec<Vec<C64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![zero; m]; m + 1];
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![zero; m];
    let mut g = vec![zero; m + 1];
    let mut total = 0usize;

    loop {
        apply(&x, &mut work);
        for i in 0..n {
            r[i] = b[i] - work[i];
        }
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= cfg.tol || total >= cfg.max_iter || !rel.is_finite() {
            return GmresOutcome { x, iterations: total, residual: rel, converged: rel <= cfg.tol };
        }
        v.clear();
        v.push(r.iter().map(|c| c / beta).collect());
        g.iter_mut().for_each(|c| *c = zero);
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for j in 0..m {
            if total >= cfg.max_iter {
                break;
            }
            total += 1;
            precond(&v[j], &mut z);
            apply(&z, &mut work);
            for i in 0..=j {
                let hij = dot(&v[i], &work);
                h[i][j] = hij;
                for (w, vi) in work.iter_mut().zip(&v[i]) {
                    *w -= hij * vi;
                }
            }
            let hn = norm(&work);
            h[j + 1][j] = C64::new(hn, 0.0);
            for i in 0..j {
                let a = h[i][j];
                let bb = h[i + 1][j];
                h[i][j] = cs[i] * a + sn[i] * bb;
                h[i + 1][j] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (c, s, rr) = givens(h[j][j], h[j + 1][j]);
            cs[j] = c;
            sn[j] = s;
            h[j][j] = rr;
            h[j + 1][j] = zero;
            g[j + 1] = -s.conj() * g[j];
            g[j] *= c;
            k_used = j + 1;
            let est = g[j + 1].norm() / bnorm;
            if est <= cfg.tol || hn == 0.0 {
                break;
            }
            v.push(work.iter().map(|c| c / hn).collect());
        }
        // Back substitution for the upper triangular system.
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        let mut dy = vec![zero; n];
        for (l, yl) in y.iter().enumerate() {
            for (d, vl) in dy.iter_mut().zip(&v[l]) {
                *d += yl * vl;
            }
        }
        precond(&dy, &mut z);
        for i in 0..n {
            x[i] += z[i];
        }
    }
}

fn givens(a: C64, b: C64) -> (f64, C64, C64) {
    let an = a.norm();
    if b.norm() == 0.0 {
        return (1.0, C64::new(0.0, 0.0), a);
    }
    if an == 0.0 {
        return (0.0, C64::new(1.0, 0.0), b);
    }
    let t = (an * an + b.norm_sqr()).sqrt();
    let phase = a / an;
    (an / t, phase * b.conj() / t, phase * t)
}
