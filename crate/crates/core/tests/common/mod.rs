//! Independent reference solutions shared by integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use hcip_core::{Coefficient, Grid3D, C64};

/// Spherical Bessel functions `j_0..=j_lmax` by normalized downward recurrence.
pub fn sph_j(lmax: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0);
    let start = lmax + 20 + (x as usize) * 2;
    let mut vals = vec![0.0; start + 2];
    vals[start + 1] = 0.0;
    vals[start] = 1e-300;
    for l in (1..=start).rev() {
        vals[l - 1] = (2 * l + 1) as f64 / x * vals[l] - vals[l + 1];
        if vals[l - 1].abs() > 1e250 {
            for v in vals.iter_mut().skip(l - 1) {
                *v *= 1e-250;
            }
        }
    }
    let j0 = x.sin() / x;
    // Normalize with j_0, or with j_1 when j_0 is tiny.
    let scale = if j0.abs() > 1e-3 {
        j0 / vals[0]
    } else {
        (x.sin() / (x * x) - x.cos() / x) / vals[1]
    };
    vals.truncate(lmax + 1);
    vals.iter().map(|v| v * scale).collect()
}

/// Spherical Neumann functions by upward recurrence (stable for y_l).
pub fn sph_y(lmax: usize, x: f64) -> Vec<f64> {
    let mut y = vec![0.0; lmax + 1];
    y[0] = -x.cos() / x;
    if lmax >= 1 {
        y[1] = -x.cos() / (x * x) - x.sin() / x;
    }
    for l in 1..lmax {
        y[l + 1] = (2 * l + 1) as f64 / x * y[l] - y[l - 1];
    }
    y
}

/// Derivatives from `f_l' = f_{l-1} - (l+1)/x f_l`, `f_0' = -f_1`.
pub fn derivs(f: &[f64], x: f64) -> Vec<f64> {
    let n = f.len() - 1;
    (0..n)
        .map(|l| if l == 0 { -f[1] } else { f[l - 1] - (l + 1) as f64 / x * f[l] })
        .collect()
}

pub fn legendre(lmax: usize, t: f64) -> Vec<f64> {
    let mut p = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = t;
    }
    for l in 1..lmax {
        p[l + 1] = ((2 * l + 1) as f64 * t * p[l] - l as f64 * p[l - 1]) / (l + 1) as f64;
    }
    p
}

fn i_pow(l: usize) -> C64 {
    [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][l % 4]
}

/// Total field of a penetrable sphere (radius `a`, constant `c`, centred at
/// the origin) under the incident wave `exp(ikz)`, at an exterior point.
pub fn sphere_total_field(k: f64, a: f64, c: f64, x: [f64; 3], lmax: usize) -> C64 {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    assert!(r > a, "series evaluated inside the sphere");
    let k1 = k * c.sqrt();
    let n = lmax + 2;
    let ja = sph_j(n, k * a);
    let ya = sph_y(n, k * a);
    let j1a = sph_j(n, k1 * a);
    let dja = derivs(&ja, k * a);
    let dya = derivs(&ya, k * a);
    let dj1a = derivs(&j1a, k1 * a);
    let jr = sph_j(n, k * r);
    let yr = sph_y(n, k * r);
    let p = legendre(lmax, x[2] / r);
    let mut sc = C64::new(0.0, 0.0);
    for l in 0..=lmax {
        let h = C64::new(ja[l], ya[l]);
        let dh = C64::new(dja[l], dya[l]);
        let num = k1 * dj1a[l] * ja[l] - k * j1a[l] * dja[l];
        let den = k * j1a[l] * dh - k1 * dj1a[l] * h;
        let al = num / den;
        sc += (2 * l + 1) as f64 * i_pow(l) * al * C64::new(jr[l], yr[l]) * p[l];
    }
    C64::from_polar(1.0, k * x[2]) + sc
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for l in 1..n {
                let p2 = ((2 * l + 1) as f64 * t * p1 - l as f64 * p0) / (l + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-15 {
                break;
            }
        }
        out.push((t, 2.0 / ((1.0 - t * t) * dp * dp)));
    }
    out
}

/// `int_{|y|<a} Phi_k(x - y) exp(ik y_3) dy` by the partial-wave expansion of
/// the kernel; radial integrals by composite Gauss-Legendre.
pub fn ball_plane_wave_potential(k: f64, a: f64, x: [f64; 3], lmax: usize) -> C64 {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let rule = gauss_legendre(16);
    let zero = C64::new(0.0, 0.0);
    // inner[l] = int_0^min(r,a) j_l^2 s^2, outer[l] = int_min(r,a)^a j_l h_l s^2.
    let mut inner = vec![zero; lmax + 1];
    let mut outer = vec![zero; lmax + 1];
    let split = r.min(a);
    let accumulate = |lo: f64, hi: f64, dst: &mut Vec<C64>, with_h: bool| {
        if hi <= lo {
            return;
        }
        let panels = 8;
        let w = (hi - lo) / panels as f64;
        for p in 0..panels {
            let m = lo + (p as f64 + 0.5) * w;
            for &(t, wt) in &rule {
                let s = m + 0.5 * w * t;
                let j = sph_j(lmax, k * s);
                let y = if with_h { sph_y(lmax, k * s) } else { vec![0.0; lmax + 1] };
                for l in 0..=lmax {
                    let f = if with_h { C64::new(j[l], y[l]) * j[l] } else { C64::new(j[l] * j[l], 0.0) };
                    dst[l] += f * (s * s * 0.5 * w * wt);
                }
            }
        }
    };
    accumulate(0.0, split, &mut inner, false);
    accumulate(split, a, &mut outer, true);
    if r == 0.0 {
        return C64::new(0.0, k) * outer[0];
    }
    let jr = sph_j(lmax, k * r);
    let yr = sph_y(lmax, k * r);
    let p = legendre(lmax, x[2] / r);
    let mut total = zero;
    for l in 0..=lmax {
        let radial = C64::new(jr[l], yr[l]) * inner[l] + jr[l] * outer[l];
        total += C64::new(0.0, k) * (2 * l + 1) as f64 * i_pow(l) * p[l] * radial;
    }
    total
}

/// Coefficient of a ball with cell-fraction rasterization (`sub^3` samples per cell).
pub fn ball_coefficient(grid: &Grid3D, centre: [f64; 3], radius: f64, c: f64, sub: usize) -> Coefficient {
    let h = grid.spacing();
    let values = (0..grid.len())
        .map(|p| {
            let x = grid.node_at(p);
            let mut inside = 0usize;
            for a in 0..sub {
                for b in 0..sub {
                    for d in 0..sub {
                        let off = |t: usize, ax: usize| ((t as f64 + 0.5) / sub as f64 - 0.5) * h[ax];
                        let y = [x[0] + off(a, 0) - centre[0], x[1] + off(b, 1) - centre[1], x[2] + off(d, 2) - centre[2]];
                        if y[0] * y[0] + y[1] * y[1] + y[2] * y[2] < radius * radius {
                            inside += 1;
                        }
                    }
                }
            }
            1.0 + (c - 1.0) * inside as f64 / (sub * sub * sub) as f64
        })
        .collect();
    Coefficient::new(*grid, values).unwrap()
}

/// Cube-shaped grid of `n` cell-centred nodes covering `[-half, half]^3`.
pub fn centred_grid(half: f64, n: usize) -> Grid3D {
    let h = 2.0 * half / n as f64;
    Grid3D::new([-half + 0.5 * h; 3], [h; 3], [n; 3]).unwrap()
}

/// Quasi-uniform points on a sphere.
pub fn fibonacci_sphere(radius: f64, n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [radius * rho * phi.cos(), radius * rho * phi.sin(), radius * z]
        })
        .collect()
}

pub fn rel_l2(got: &[C64], want: &[C64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Cube of constant `c` with half-width `half`, centred at `(cx, cy)` in the
/// plane and with its front face at `z = 0`, on a cell-centred grid of spacing `hs`.
pub fn cube_coefficient(cx: f64, cy: f64, half: f64, c: f64, hs: f64) -> Coefficient {
    let m = (2.0 * half / hs).round() as usize;
    let g = Grid3D::new([cx - half + 0.5 * hs, cy - half + 0.5 * hs, 0.5 * hs], [hs; 3], [m, m, m]).unwrap();
    Coefficient::new(g, vec![c; g.len()]).unwrap()
}

/// Total and reference plane data of `coef` at the given frequencies.
pub fn simulate_planes(
    coef: &Coefficient,
    plane: &hcip_core::Grid2D,
    freqs: &[f64],
    conv: hcip_core::WaveConvention,
) -> (hcip_core::preprocess::MultiFrequencyData, hcip_core::preprocess::MultiFrequencyData) {
    use hcip_core::forward::{scattered_on_plane, LsConfig, LsSolver};
    use hcip_core::preprocess::MultiFrequencyData;
    use hcip_core::{ghz_to_k, PlaneData};
    let z = plane.z_level();
    let mut tot = vec![];
    let mut refp = vec![];
    for &f in freqs {
        let k = ghz_to_k(f).unwrap();
        let u = LsSolver::new(coef.grid(), k, conv, LsConfig::default()).unwrap().solve(coef).unwrap().field;
        let sc = scattered_on_plane(&u, coef, k, conv, plane).unwrap();
        let inc = conv.plane_wave(k, z);
        tot.push(PlaneData::new(*plane, k, sc.values().iter().map(|v| v + inc).collect()).unwrap());
        refp.push(PlaneData::from_fn(*plane, k, |_| inc).unwrap());
    }
    (MultiFrequencyData::new(freqs.to_vec(), tot).unwrap(), MultiFrequencyData::new(freqs.to_vec(), refp).unwrap())
}

/// Relative L2 errors (total, scattered) of the LS solution for the
/// penetrable sphere of radius 0.5, c = 2, k = 3 on an `n^3` grid, on 200
/// points of the unit sphere, and the Krylov iteration count.
pub fn sphere_errors(n: usize) -> (f64, f64, usize) {
    use hcip_core::forward::{scattered_at_points, LsConfig, LsSolver};
    use hcip_core::WaveConvention;
    let (k, a, c) = (3.0, 0.5, 2.0);
    let grid = centred_grid(a, n);
    let coef = ball_coefficient(&grid, [0.0; 3], a, c, 4);
    let sol = LsSolver::new(&grid, k, WaveConvention::Plus, LsConfig::default()).unwrap().solve(&coef).unwrap();
    let pts = fibonacci_sphere(1.0, 200);
    let sc = scattered_at_points(&sol.field, &coef, k, WaveConvention::Plus, &pts).unwrap();
    let total: Vec<C64> = pts.iter().zip(&sc).map(|(x, s)| C64::from_polar(1.0, k * x[2]) + s).collect();
    let want: Vec<C64> = pts.iter().map(|x| sphere_total_field(k, a, c, *x, 25)).collect();
    let want_sc: Vec<C64> = pts.iter().zip(&want).map(|(x, w)| w - C64::from_polar(1.0, k * x[2])).collect();
    (rel_l2(&total, &want), rel_l2(&sc, &want_sc), sol.iterations)
}

/// Relative L2 errors (total, scattered) between the LS solution for a ball
/// of radius 0.3 and contrast 0.01 at k = 3 and the Born approximation
/// evaluated with the closed-form volume potential, on every 7th node.
pub fn born_errors() -> (f64, f64) {
    use hcip_core::forward::{incident_field, LsConfig, LsSolver};
    use hcip_core::WaveConvention;
    let (k, a, beta) = (3.0, 0.3, 0.01);
    let grid = centred_grid(a, 24);
    let coef = ball_coefficient(&grid, [0.0; 3], a, 1.0 + beta, 4);
    let sol = LsSolver::new(&grid, k, WaveConvention::Plus, LsConfig::default()).unwrap().solve(&coef).unwrap();
    let inc = incident_field(k, &grid, WaveConvention::Plus).unwrap();
    let (mut got, mut born, mut got_sc, mut born_sc) = (vec![], vec![], vec![], vec![]);
    for p in (0..grid.len()).step_by(7) {
        let x = grid.node_at(p);
        let w = ball_plane_wave_potential(k, a, x, 12) * (k * k * beta);
        got.push(sol.field.values()[p]);
        born.push(inc.values()[p] + w);
        got_sc.push(sol.field.values()[p] - inc.values()[p]);
        born_sc.push(w);
    }
    (rel_l2(&got, &born), rel_l2(&got_sc, &born_sc))
}

// Manufactured q-problem: the tail gradient `w` is prescribed and its
// divergence is chosen so that `q*` solves the equation exactly.
pub fn q_star(x: [f64; 3]) -> C64 {
    C64::new(1.0, 0.5) * x[0].sin() * (0.7 * x[1]).cos() * (0.3 * x[2]).exp()
}

pub fn q_star_grad(x: [f64; 3]) -> [C64; 3] {
    let a = C64::new(1.0, 0.5);
    let (s, c) = x[0].sin_cos();
    let (s7, c7) = (0.7 * x[1]).sin_cos();
    let e = (0.3 * x[2]).exp();
    [a * c * c7 * e, -a * s * 0.7 * s7 * e, a * s * c7 * 0.3 * e]
}

pub fn q_star_lap(x: [f64; 3]) -> C64 {
    q_star(x) * (-1.0 - 0.49 + 0.09)
}

pub fn tail_w(x: [f64; 3], k: f64) -> [C64; 3] {
    [C64::new(0.2 * x[1].cos(), 0.0), C64::new(0.0, 0.1 * x[0]), -C64::new(0.0, 1.0) * k + 0.1 * x[2]]
}

/// Max-norm error of the q solver on the manufactured problem, and the spacing.
pub fn manufactured_q_error(n: usize) -> (f64, f64) {
    use hcip_core::inversion::{solve_q_bvp, QSequence, TailField};
    use hcip_core::krylov::GmresConfig;
    use hcip_core::ComplexVolume;
    // Tail gradient close to the incident one at k = 3; at k = 5.5 the
    // coarsest grid is still pre-asymptotic.
    let k = 3.0;
    let g = Grid3D::from_bounds([-1.0, -1.0, 0.0], [1.0, 1.0, 2.0], [n, n, n]).unwrap();
    let grad: [ComplexVolume; 3] = std::array::from_fn(|a| ComplexVolume::from_fn(g, |x| tail_w(x, k)[a]));
    let div = ComplexVolume::from_fn(g, |x| {
        let w = tail_w(x, k);
        let gq = q_star_grad(x);
        let conv: C64 = (0..3).map(|a| w[a] * gq[a]).sum();
        let w2: C64 = w.iter().map(|v| v * v).sum();
        k * (0.5 * q_star_lap(x) + conv) - w2
    });
    let tail = TailField { grad, div };
    let bc = ComplexVolume::from_fn(g, q_star);
    let q0 = QSequence::new(&g, 0.1);
    let (q, _) = solve_q_bvp(&tail, &q0, k, &bc, &GmresConfig { tol: 1e-12, max_iter: 2000, restart: 100 }, 1e-12).unwrap();
    let err = q.values().iter().zip(bc.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    (err, g.spacing()[0])
}

