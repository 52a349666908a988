//! Finite-difference stencils and Dirichlet solvers on a box.
//!
//! Unknowns live on the interior nodes of a [`Grid3D`]; the boundary nodes
//! carry Dirichlet data. Interior arrays are flat with `x` fastest and have
//! `(nx - 2) (ny - 2) (nz - 2)` entries.

use crate::error::{Error, Result};
use crate::fft::Dst1;
use crate::grid::{Grid3D, C64};
use crate::krylov::{gmres, GmresConfig};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn check(grid: &Grid3D, len: usize) -> Result<()> {
    if grid.counts().iter().any(|&n| n < 3) {
        return Err(Error::invalid("finite differences need at least 3 nodes per axis"));
    }
    if len != grid.len() {
        return Err(Error::mismatch(format!("{len} values for a grid of {} nodes", grid.len())));
    }
    Ok(())
}

fn strides(grid: &Grid3D) -> [usize; 3] {
    let [nx, ny, _] = grid.counts();
    [1, nx, nx * ny]
}

/// Derivative along `axis`: central inside, one-sided second order on the
/// two faces normal to `axis`.
pub fn partial(grid: &Grid3D, f: &[C64], axis: usize) -> Result<Vec<C64>> {
    check(grid, f.len())?;
    let n = grid.counts()[axis];
    let s = strides(grid)[axis];
    let h = grid.spacing()[axis];
    let inv2h = 1.0 / (2.0 * h);
    let mut out = vec![ZERO; f.len()];
    for p in 0..f.len() {
        let t = grid.unravel(p)[axis];
        out[p] = if t == 0 {
            (-3.0 * f[p] + 4.0 * f[p + s] - f[p + 2 * s]) * inv2h
        } else if t == n - 1 {
            (3.0 * f[p] - 4.0 * f[p - s] + f[p - 2 * s]) * inv2h
        } else {
            (f[p + s] - f[p - s]) * inv2h
        };
    }
    Ok(out)
}

pub fn gradient(grid: &Grid3D, f: &[C64]) -> Result<[Vec<C64>; 3]> {
    Ok([partial(grid, f, 0)?, partial(grid, f, 1)?, partial(grid, f, 2)?])
}

pub fn divergence(grid: &Grid3D, g: &[Vec<C64>; 3]) -> Result<Vec<C64>> {
    let mut out = partial(grid, &g[0], 0)?;
    for a in 1..3 {
        let d = partial(grid, &g[a], a)?;
        out.iter_mut().zip(d).for_each(|(o, v)| *o += v);
    }
    Ok(out)
}

/// Seven-point Laplacian at interior nodes. Boundary nodes receive the value
/// of the nearest interior node.
pub fn laplacian(grid: &Grid3D, f: &[C64]) -> Result<Vec<C64>> {
    check(grid, f.len())?;
    let [nx, ny, nz] = grid.counts();
    let st = strides(grid);
    let inv = grid.spacing().map(|h| 1.0 / (h * h));
    let mut out = vec![ZERO; f.len()];
    for l in 1..nz - 1 {
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let p = grid.index(i, j, l);
                let mut s = ZERO;
                for a in 0..3 {
                    s += (f[p + st[a]] - 2.0 * f[p] + f[p - st[a]]) * inv[a];
                }
                out[p] = s;
            }
        }
    }
    fill_boundary_from_interior(grid, &mut out);
    Ok(out)
}

/// Overwrites every boundary node by the value at the nearest interior node.
pub fn fill_boundary_from_interior<T: Copy>(grid: &Grid3D, f: &mut [T]) {
    let [nx, ny, nz] = grid.counts();
    for l in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if grid.is_boundary(i, j, l) {
                    let src = grid.index(i.clamp(1, nx - 2), j.clamp(1, ny - 2), l.clamp(1, nz - 2));
                    f[grid.index(i, j, l)] = f[src];
                }
            }
        }
    }
}

/// Interior node counts `(nx - 2, ny - 2, nz - 2)`.
pub fn interior_counts(grid: &Grid3D) -> [usize; 3] {
    grid.counts().map(|n| n - 2)
}

pub fn extract_interior(grid: &Grid3D, f: &[C64]) -> Vec<C64> {
    let [nx, ny, nz] = grid.counts();
    let mut out = Vec::with_capacity((nx - 2) * (ny - 2) * (nz - 2));
    for l in 1..nz - 1 {
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                out.push(f[grid.index(i, j, l)]);
            }
        }
    }
    out
}

/// Writes interior values into a full-grid array, leaving the boundary alone.
pub fn insert_interior(grid: &Grid3D, interior: &[C64], full: &mut [C64]) {
    let [nx, ny, nz] = grid.counts();
    let mut it = interior.iter();
    for l in 1..nz - 1 {
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                full[grid.index(i, j, l)] = *it.next().expect("interior length");
            }
        }
    }
}

/// Exact solver for `alpha Lap_h u + b D_z u = f` with homogeneous Dirichlet
/// data, `b` a complex constant. Sine transforms diagonalize the transverse
/// part; each transverse mode leaves a tridiagonal system in `z`.
pub struct SeparableSolver {
    m: [usize; 3],
    lam_x: Vec<f64>,
    lam_y: Vec<f64>,
    lower: C64,
    upper: C64,
    diag0: f64,
    alpha: f64,
    dst_x: Dst1,
    dst_y: Dst1,
    dl: Vec<C64>,
    d: Vec<C64>,
    du: Vec<C64>,
    rhs: Vec<C64>,
}

fn dst_eigenvalues(m: usize, h: f64) -> Vec<f64> {
    (1..=m)
        .map(|p| {
            let s = (p as f64 * std::f64::consts::PI / (2.0 * (m + 1) as f64)).sin();
            -4.0 * s * s / (h * h)
        })
        .collect()
}

impl SeparableSolver {
    pub fn new(grid: &Grid3D, alpha: f64, conv_z: C64) -> Result<Self> {
        check(grid, grid.len())?;
        if !(alpha > 0.0) {
            return Err(Error::invalid("diffusion coefficient must be positive"));
        }
        let m = interior_counts(grid);
        let [hx, hy, hz] = grid.spacing();
        Ok(Self {
            m,
            lam_x: dst_eigenvalues(m[0], hx),
            lam_y: dst_eigenvalues(m[1], hy),
            lower: C64::new(alpha / (hz * hz), 0.0) - conv_z / (2.0 * hz),
            upper: C64::new(alpha / (hz * hz), 0.0) + conv_z / (2.0 * hz),
            diag0: -2.0 * alpha / (hz * hz),
            alpha,
            dst_x: Dst1::new(m[0]),
            dst_y: Dst1::new(m[1]),
            dl: vec![ZERO; m[2]],
            d: vec![ZERO; m[2]],
            du: vec![ZERO; m[2]],
            rhs: vec![ZERO; m[2]],
        })
    }

    pub fn interior_len(&self) -> usize {
        self.m.iter().product()
    }

    /// Overwrites the interior array `f` by the solution.
    pub fn solve_in_place(&mut self, f: &mut [C64]) -> Result<()> {
        let [mx, my, mz] = self.m;
        assert_eq!(f.len(), mx * my * mz);
        self.dst_x.apply_strided(f, 1);
        self.dst_y.apply_strided(f, mx);
        let plane = mx * my;
        for q in 0..my {
            for p in 0..mx {
                let base = p + mx * q;
                let diag = C64::new(self.diag0 + self.alpha * (self.lam_x[p] + self.lam_y[q]), 0.0);
                for l in 0..mz {
                    self.d[l] = diag;
                    self.dl[l] = self.lower;
                    self.du[l] = self.upper;
                    self.rhs[l] = f[base + l * plane];
                }
                solve_tridiagonal(&mut self.dl[..mz - 1], &mut self.d, &mut self.du[..mz - 1], &mut self.rhs)?;
                for l in 0..mz {
                    f[base + l * plane] = self.rhs[l];
                }
            }
        }
        self.dst_x.apply_strided(f, 1);
        self.dst_y.apply_strided(f, mx);
        let s = 4.0 / ((mx + 1) * (my + 1)) as f64;
        f.iter_mut().for_each(|v| *v *= s);
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting for a tridiagonal system.
///
/// `dl` and `du` hold the sub- and superdiagonals (length `n - 1`), `d` the
/// diagonal. All three are overwritten; `b` receives the solution.
pub fn solve_tridiagonal(dl: &mut [C64], d: &mut [C64], du: &mut [C64], b: &mut [C64]) -> Result<()> {
    let n = d.len();
    assert!(dl.len() + 1 == n && du.len() + 1 == n && b.len() == n);
    let singular = || Error::invalid("singular tridiagonal system");
    let abs1 = |z: C64| z.re.abs() + z.im.abs();
    for k in 0..n.saturating_sub(1) {
        if dl[k] == ZERO {
            if d[k] == ZERO {
                return Err(singular());
            }
        } else if abs1(d[k]) >= abs1(dl[k]) {
            let mult = dl[k] / d[k];
            d[k + 1] -= mult * du[k];
            b[k + 1] = b[k + 1] - mult * b[k];
            if k + 2 < n {
                dl[k] = ZERO;
            }
        } else {
            let mult = d[k] / dl[k];
            d[k] = dl[k];
            let temp = d[k + 1];
            d[k + 1] = du[k] - mult * temp;
            if k + 2 < n {
                dl[k] = du[k + 1];
                du[k + 1] = -mult * dl[k];
            }
            du[k] = temp;
            let temp = b[k];
            b[k] = b[k + 1];
            b[k + 1] = temp - mult * b[k + 1];
        }
    }
    if d[n - 1] == ZERO {
        return Err(singular());
    }
    b[n - 1] /= d[n - 1];
    if n > 1 {
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    }
    for j in (0..n.saturating_sub(2)).rev() {
        b[j] = (b[j] - du[j] * b[j + 1] - dl[j] * b[j + 2]) / d[j];
    }
    if b.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(singular());
    }
    Ok(())
}

/// Applies `alpha Lap_h u + w . D u` at the interior nodes of a full array.
fn apply_operator(grid: &Grid3D, alpha: f64, w: Option<&[Vec<C64>; 3]>, u: &[C64], out: &mut [C64]) {
    let [nx, ny, nz] = grid.counts();
    let st = strides(grid);
    let h = grid.spacing();
    let inv = h.map(|h| alpha / (h * h));
    let inv2 = h.map(|h| 1.0 / (2.0 * h));
    let mut k = 0;
    for l in 1..nz - 1 {
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let p = grid.index(i, j, l);
                let mut s = ZERO;
                for a in 0..3 {
                    s += (u[p + st[a]] - 2.0 * u[p] + u[p - st[a]]) * inv[a];
                    if let Some(w) = w {
                        s += w[a][p] * (u[p + st[a]] - u[p - st[a]]) * inv2[a];
                    }
                }
                out[k] = s;
                k += 1;
            }
        }
    }
}

/// Full-grid array that equals `boundary` on the boundary and 0 inside.
fn boundary_extension(grid: &Grid3D, boundary: &[C64]) -> Vec<C64> {
    let mut g = boundary.to_vec();
    let zeros = vec![ZERO; grid.counts().map(|n| n - 2).iter().product()];
    insert_interior(grid, &zeros, &mut g);
    g
}

/// Direct solve of `alpha Lap_h u = f` inside, `u = g` on the boundary.
/// `source` and `boundary` are full-grid arrays; only their interior and
/// boundary parts, respectively, are read.
pub fn solve_poisson(grid: &Grid3D, alpha: f64, source: &[C64], boundary: &[C64]) -> Result<Vec<C64>> {
    check(grid, source.len())?;
    check(grid, boundary.len())?;
    let mut full = boundary_extension(grid, boundary);
    let mut lifted = vec![ZERO; interior_counts(grid).iter().product()];
    apply_operator(grid, alpha, None, &full, &mut lifted);
    let mut rhs = extract_interior(grid, source);
    rhs.iter_mut().zip(&lifted).for_each(|(r, l)| *r -= l);
    SeparableSolver::new(grid, alpha, ZERO)?.solve_in_place(&mut rhs)?;
    insert_interior(grid, &rhs, &mut full);
    Ok(full)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// Whether the solver reached its tolerance.
    pub converged: bool,
}

/// Solves `alpha Lap_h u + w . D u = f` inside, `u = g` on the boundary, by
/// GMRES right-preconditioned with the separable operator built from the mean
/// of `w_z` over the interior. An iterate that misses `cfg.tol` is still
/// returned when its residual is at most `accept`.
pub fn solve_convection_diffusion(
    grid: &Grid3D,
    alpha: f64,
    w: &[Vec<C64>; 3],
    source: &[C64],
    boundary: &[C64],
    cfg: &GmresConfig,
    accept: f64,
) -> Result<(Vec<C64>, SolveStats)> {
    check(grid, source.len())?;
    check(grid, boundary.len())?;
    for c in w {
        check(grid, c.len())?;
    }
    let interior = extract_interior(grid, &w[2]);
    let mean_wz = interior.iter().sum::<C64>() / interior.len() as f64;
    let mut pre = SeparableSolver::new(grid, alpha, mean_wz)?;

    let mut full = boundary_extension(grid, boundary);
    let m = pre.interior_len();
    let mut lifted = vec![ZERO; m];
    apply_operator(grid, alpha, Some(w), &full, &mut lifted);
    let mut rhs = extract_interior(grid, source);
    rhs.iter_mut().zip(&lifted).for_each(|(r, l)| *r -= l);

    let mut scratch = vec![ZERO; grid.len()];
    let mut pre_err = None;
    let out = gmres(
        |x, y| {
            insert_interior(grid, x, &mut scratch);
            apply_operator(grid, alpha, Some(w), &scratch, y);
        },
        |x, y| {
            y.copy_from_slice(x);
            if let Err(e) = pre.solve_in_place(y) {
                pre_err.get_or_insert(e);
            }
        },
        &rhs,
        None,
        cfg,
    );
    if let Some(e) = pre_err {
        return Err(e);
    }
    if !out.converged && !(out.residual <= accept) {
        return Err(Error::NonConvergence {
            what: "convection-diffusion solve",
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    insert_interior(grid, &out.x, &mut full);
    Ok((full, SolveStats { iterations: out.iterations, residual: out.residual, converged: out.converged }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: [usize; 3]) -> Grid3D {
        Grid3D::from_bounds([-1.0, -0.5, 0.0], [1.0, 0.5, 1.5], n).unwrap()
    }

    fn sample(g: &Grid3D, f: impl Fn([f64; 3]) -> C64) -> Vec<C64> {
        (0..g.len()).map(|p| f(g.node_at(p))).collect()
    }

    fn max_err(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    // Central differences are exact on quadratics, so a quadratic manufactured
    // solution must be reproduced to rounding.
    fn quad(x: [f64; 3]) -> C64 {
        C64::new(x[0] * x[0] - 0.5 * x[1] * x[2] + x[2], 0.3 * x[0] * x[1] + x[2] * x[2] - 0.2)
    }

    fn quad_lap(_: [f64; 3]) -> C64 {
        C64::new(2.0, 2.0)
    }

    fn quad_grad(x: [f64; 3]) -> [C64; 3] {
        [
            C64::new(2.0 * x[0], 0.3 * x[1]),
            C64::new(-0.5 * x[2], 0.3 * x[0]),
            C64::new(-0.5 * x[1] + 1.0, 2.0 * x[2]),
        ]
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = grid([7, 6, 8]);
        let f = sample(&g, quad);
        let gr = gradient(&g, &f).unwrap();
        for p in 0..g.len() {
            let want = quad_grad(g.node_at(p));
            for a in 0..3 {
                assert!((gr[a][p] - want[a]).norm() < 1e-11);
            }
        }
        let lap = laplacian(&g, &f).unwrap();
        assert!(max_err(&lap, &sample(&g, quad_lap)) < 1e-9);
        let div = divergence(&g, &gr).unwrap();
        assert!(max_err(&div, &sample(&g, quad_lap)) < 1e-9);
    }

    #[test]
    fn poisson_reproduces_quadratic() {
        let g = grid([9, 8, 10]);
        let exact = sample(&g, quad);
        let src = sample(&g, |x| quad_lap(x) * 0.5);
        let u = solve_poisson(&g, 0.5, &src, &exact).unwrap();
        assert!(max_err(&u, &exact) < 1e-11);
    }

    #[test]
    fn convection_diffusion_reproduces_quadratic() {
        let g = grid([9, 11, 10]);
        let exact = sample(&g, quad);
        let w = [
            sample(&g, |x| C64::new(0.3 * x[1], -0.2)),
            sample(&g, |x| C64::new(0.0, 0.5 * x[0])),
            sample(&g, |x| C64::new(0.4, 5.5 + 0.2 * x[2])),
        ];
        let src: Vec<C64> = (0..g.len())
            .map(|p| {
                let x = g.node_at(p);
                let gr = quad_grad(x);
                0.5 * quad_lap(x) + w[0][p] * gr[0] + w[1][p] * gr[1] + w[2][p] * gr[2]
            })
            .collect();
        let cfg = GmresConfig { tol: 1e-12, max_iter: 200, restart: 40 };
        let (u, stats) = solve_convection_diffusion(&g, 0.5, &w, &src, &exact, &cfg, cfg.tol).unwrap();
        assert!(max_err(&u, &exact) < 1e-9, "{}", max_err(&u, &exact));
        assert!(stats.iterations < 60);
    }

    #[test]
    fn separable_solver_is_exact_for_constant_convection() {
        let g = grid([8, 7, 12]);
        let b = C64::new(0.0, 5.0);
        let w = [vec![ZERO; g.len()], vec![ZERO; g.len()], vec![b; g.len()]];
        let x: Vec<C64> = (0..g.len()).map(|p| C64::new((p as f64 * 0.37).sin(), (p as f64).cos())).collect();
        let mut u = x.clone();
        for p in 0..g.len() {
            let [i, j, l] = g.unravel(p);
            if g.is_boundary(i, j, l) {
                u[p] = ZERO;
            }
        }
        let mut f = vec![ZERO; interior_counts(&g).iter().product()];
        apply_operator(&g, 0.5, Some(&w), &u, &mut f);
        SeparableSolver::new(&g, 0.5, b).unwrap().solve_in_place(&mut f).unwrap();
        assert!(max_err(&f, &extract_interior(&g, &u)) < 1e-10);
    }

    #[test]
    fn poisson_second_order() {
        use std::f64::consts::PI;
        let exact = |x: [f64; 3]| C64::new((PI * x[0]).sin() * (x[1] + x[2]).exp(), 0.0);
        let lap = |x: [f64; 3]| exact(x) * (2.0 - PI * PI);
        let mut errs = vec![];
        for n in [9, 17] {
            let g = Grid3D::from_bounds([0.0; 3], [1.0; 3], [n; 3]).unwrap();
            let e = sample(&g, exact);
            let u = solve_poisson(&g, 1.0, &sample(&g, lap), &e).unwrap();
            errs.push(max_err(&u, &e));
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 1.8, "observed order {rate}");
    }

    #[test]
    fn tridiagonal_needs_pivoting() {
        // Zero leading diagonal forces a row interchange.
        let mut dl = vec![C64::new(1.0, 0.0), C64::new(2.0, 1.0)];
        let mut d = vec![ZERO, C64::new(1.0, 0.0), C64::new(3.0, 0.0)];
        let mut du = vec![C64::new(2.0, 0.0), C64::new(-1.0, 0.5)];
        let x = [C64::new(1.0, 2.0), C64::new(-1.0, 0.0), C64::new(0.5, -0.5)];
        let mut b = vec![
            d[0] * x[0] + du[0] * x[1],
            dl[0] * x[0] + d[1] * x[1] + du[1] * x[2],
            dl[1] * x[1] + d[2] * x[2],
        ];
        solve_tridiagonal(&mut dl, &mut d, &mut du, &mut b).unwrap();
        assert!(max_err(&b, &x) < 1e-14);
    }

    proptest! {
        #[test]
        fn tridiagonal_matches_product(vals in prop::collection::vec(-2.0..2.0f64, 60)) {
            let n = 10;
            let c = |k: usize| C64::new(vals[2 * k], vals[2 * k + 1]);
            let dl0: Vec<C64> = (0..n - 1).map(c).collect();
            let du0: Vec<C64> = (10..10 + n - 1).map(c).collect();
            let d0: Vec<C64> = (20..20 + n).map(|k| c(k) + C64::new(5.0, 0.0)).collect();
            let x: Vec<C64> = (0..n).map(|k| c(k) * C64::new(0.0, 1.0) + c(20 + k)).collect();
            let mut b = vec![ZERO; n];
            for r in 0..n {
                b[r] = d0[r] * x[r];
                if r > 0 { b[r] += dl0[r - 1] * x[r - 1]; }
                if r + 1 < n { b[r] += du0[r] * x[r + 1]; }
            }
            let (mut dl, mut d, mut du) = (dl0.clone(), d0.clone(), du0.clone());
            solve_tridiagonal(&mut dl, &mut d, &mut du, &mut b).unwrap();
            prop_assert!(max_err(&b, &x) < 1e-10);
        }
    }
}
