//! Forward scattering by the Lippmann-Schwinger equation
//! `u = u_inc + k^2 Phi_k * (beta u)`.
//!
//! The volume integral is discretized with cell-integrated kernel weights on
//! the coefficient grid and applied as a discrete convolution through a
//! zero-padded FFT, so the discrete operator is exact aperiodic convolution.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::{smooth_size, FftNd};
use crate::grid::{Coefficient, ComplexVolume, Grid2D, Grid3D, PlaneData, WaveConvention, C64};
use crate::krylov::{gmres, GmresConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsConfig {
    pub krylov_tolerance: f64,
    pub max_iterations: usize,
    pub restart: usize,
    /// Transform box per axis relative to the grid extent.
    pub padding_factor: f64,
}

impl Default for LsConfig {
    fn default() -> Self {
        Self { krylov_tolerance: 1e-6, max_iterations: 2000, restart: 80, padding_factor: 2.0 }
    }
}

impl LsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.krylov_tolerance > 0.0 && self.krylov_tolerance < 1.0) {
            return Err(Error::invalid("Krylov tolerance must lie in (0, 1)"));
        }
        if self.max_iterations == 0 || self.restart == 0 {
            return Err(Error::invalid("iteration limits must be positive"));
        }
        if !(self.padding_factor >= 2.0) {
            return Err(Error::invalid("padding factor must be at least 2"));
        }
        Ok(())
    }
}

/// `exp(ikr) / (4 pi r)`; `k = 0` gives the static kernel.
pub fn green_function(k: f64, r: f64) -> Result<C64> {
    if !(r > 0.0) {
        return Err(Error::invalid(format!("Green's function evaluated at r = {r}")));
    }
    if !(k >= 0.0) {
        return Err(Error::invalid(format!("wavenumber {k} must be nonnegative")));
    }
    Ok(phi(k, r))
}

#[inline]
fn phi(k: f64, r: f64) -> C64 {
    C64::from_polar(1.0 / (4.0 * PI * r), k * r)
}

pub fn incident_field(k: f64, grid: &Grid3D, conv: WaveConvention) -> Result<ComplexVolume> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("wavenumber {k} must be positive")));
    }
    Ok(ComplexVolume::from_fn(*grid, |x| conv.plane_wave(k, x[2])))
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

const GAUSS2: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

/// Integral of `1/|y|` over the box `[-a,a] x [-b,b] x [-c,c]`.
pub fn static_box_integral(a: f64, b: f64, c: f64) -> f64 {
    // Divergence theorem: the integral equals sum over faces of (distance to
    // face) times the face integral of 1/|y|.
    fn face(a: f64, b: f64, c: f64) -> f64 {
        let d = (a * a + b * b + c * c).sqrt();
        4.0 * (b * ((c + d) / (a * a + b * b).sqrt()).ln() + c * ((b + d) / (a * a + c * c).sqrt()).ln()
            - a * (b * c / (a * d)).atan())
    }
    a * face(a, b, c) + b * face(b, c, a) + c * face(c, a, b)
}

/// Tensor Gauss rule over the box centred at `centre` with half-sides `half`.
fn gauss_box(rule: &[(f64, f64)], centre: [f64; 3], half: [f64; 3], mut f: impl FnMut(f64) -> C64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    let jac = half[0] * half[1] * half[2];
    for &(xa, wa) in rule {
        let x = centre[0] + half[0] * xa;
        for &(xb, wb) in rule {
            let y = centre[1] + half[1] * xb;
            for &(xc, wc) in rule {
                let z = centre[2] + half[2] * xc;
                s += f((x * x + y * y + z * z).sqrt()) * (wa * wb * wc);
            }
        }
    }
    s * jac
}

/// `int Phi_k` over the grid cell centred at offset `m h` (PLUS world).
fn cell_weight(k: f64, h: [f64; 3], m: [i64; 3]) -> C64 {
    let half = h.map(|v| 0.5 * v);
    let centre = [0, 1, 2].map(|a| m[a] as f64 * h[a]);
    let cheb = m.iter().map(|v| v.abs()).max().unwrap();
    if cheb == 0 {
        let stat = static_box_integral(half[0], half[1], half[2]) / (4.0 * PI);
        let dynamic = gauss_box(&GAUSS4, centre, half, |r| {
            // (exp(ikr) - 1) / r written to keep precision for small kr.
            let kr = k * r;
            let s = (0.5 * kr).sin();
            C64::new(-2.0 * s * s, kr.sin()) / (4.0 * PI * r)
        });
        C64::new(stat, 0.0) + dynamic
    } else if cheb <= 3 {
        let q = half.map(|v| 0.5 * v);
        let mut s = C64::new(0.0, 0.0);
        for dx in [-1.0, 1.0] {
            for dy in [-1.0, 1.0] {
                for dz in [-1.0, 1.0] {
                    let c = [centre[0] + dx * q[0], centre[1] + dy * q[1], centre[2] + dz * q[2]];
                    s += gauss_box(&GAUSS4, c, q, |r| phi(k, r));
                }
            }
        }
        s
    } else {
        gauss_box(&GAUSS2, centre, half, |r| phi(k, r))
    }
}

/// The discrete volume potential `(K f)_p = sum_q G_{p-q} f_q`, with `G` the
/// cell integral of the outgoing kernel for the chosen convention.
pub struct VolumeOperator {
    grid: Grid3D,
    k: f64,
    conv: WaveConvention,
    dims: [usize; 3],
    kernel_hat: Vec<C64>,
    fft: FftNd,
    buf: Vec<C64>,
}

impl VolumeOperator {
    pub fn new(grid: &Grid3D, k: f64, conv: WaveConvention, padding_factor: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("wavenumber {k} must be positive")));
        }
        if !(padding_factor >= 2.0) {
            return Err(Error::invalid("padding factor must be at least 2"));
        }
        let n = grid.counts();
        let dims = [0, 1, 2].map(|a| smooth_size(((padding_factor * n[a] as f64).ceil() as usize).max(2 * n[a] - 1)));
        let h = grid.spacing();
        let total = dims[0] * dims[1] * dims[2];
        let mut kernel = vec![C64::new(0.0, 0.0); total];
        let wrap = |m: i64, d: usize| m.rem_euclid(d as i64) as usize;
        let r = n.map(|v| v as i64 - 1);
        for mz in -r[2]..=r[2] {
            for my in -r[1]..=r[1] {
                for mx in -r[0]..=r[0] {
                    let mut w = cell_weight(k, h, [mx, my, mz]);
                    if conv == WaveConvention::Minus {
                        w = w.conj();
                    }
                    let p = wrap(mx, dims[0]) + dims[0] * (wrap(my, dims[1]) + dims[1] * wrap(mz, dims[2]));
                    kernel[p] = w;
                }
            }
        }
        let mut fft = FftNd::new(&dims);
        fft.forward(&mut kernel);
        let scale = 1.0 / total as f64;
        kernel.iter_mut().for_each(|v| *v *= scale);
        Ok(Self { grid: *grid, k, conv, dims, kernel_hat: kernel, fft, buf: vec![C64::new(0.0, 0.0); total] })
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn wavenumber(&self) -> f64 {
        self.k
    }

    pub fn convention(&self) -> WaveConvention {
        self.conv
    }

    /// Writes `K f` into `out`.
    pub fn apply(&mut self, f: &[C64], out: &mut [C64]) {
        let [nx, ny, nz] = self.grid.counts();
        let [dx, dy, _] = self.dims;
        assert_eq!(f.len(), nx * ny * nz);
        self.buf.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for l in 0..nz {
            for j in 0..ny {
                let src = nx * (j + ny * l);
                let dst = dx * (j + dy * l);
                self.buf[dst..dst + nx].copy_from_slice(&f[src..src + nx]);
            }
        }
        self.fft.forward(&mut self.buf);
        self.buf.iter_mut().zip(&self.kernel_hat).for_each(|(b, g)| *b *= g);
        self.fft.inverse(&mut self.buf);
        for l in 0..nz {
            for j in 0..ny {
                let dst = nx * (j + ny * l);
                let src = dx * (j + dy * l);
                out[dst..dst + nx].copy_from_slice(&self.buf[src..src + nx]);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub field: ComplexVolume,
    pub iterations: usize,
    /// Relative residual `|u - u_inc - k^2 K(beta u)| / |u_inc|`.
    pub residual: f64,
    pub min_modulus: f64,
}

/// Reusable solver at one wavenumber on one grid.
pub struct LsSolver {
    op: VolumeOperator,
    cfg: LsConfig,
}

impl LsSolver {
    pub fn new(grid: &Grid3D, k: f64, conv: WaveConvention, cfg: LsConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { op: VolumeOperator::new(grid, k, conv, cfg.padding_factor)?, cfg })
    }

    pub fn operator(&mut self) -> &mut VolumeOperator {
        &mut self.op
    }

    pub fn solve(&mut self, c: &Coefficient) -> Result<LsSolution> {
        self.solve_from(c, None)
    }

    /// As [`solve`](Self::solve), starting GMRES from `guess`.
    pub fn solve_from(&mut self, c: &Coefficient, guess: Option<&ComplexVolume>) -> Result<LsSolution> {
        let grid = *self.op.grid();
        if c.grid() != &grid {
            return Err(Error::mismatch("coefficient grid differs from the solver grid"));
        }
        if let Some(g) = guess {
            if g.grid() != &grid {
                return Err(Error::mismatch("initial guess grid differs from the solver grid"));
            }
        }
        let k = self.op.wavenumber();
        let inc = incident_field(k, &grid, self.op.convention())?;
        let beta = c.beta();
        if beta.iter().all(|&b| b == 0.0) {
            let min_modulus = inc.min_modulus();
            return Ok(LsSolution { field: inc, iterations: 0, residual: 0.0, min_modulus });
        }
        let k2 = k * k;
        let n = grid.len();
        let mut tmp = vec![C64::new(0.0, 0.0); n];
        let gcfg = GmresConfig {
            tol: self.cfg.krylov_tolerance,
            max_iter: self.cfg.max_iterations,
            restart: self.cfg.restart,
        };
        let op = &mut self.op;
        let out = gmres(
            |x, y| {
                for i in 0..n {
                    tmp[i] = x[i] * beta[i];
                }
                op.apply(&tmp, y);
                for i in 0..n {
                    y[i] = x[i] - k2 * y[i];
                }
            },
            crate::krylov::identity,
            inc.values(),
            guess.map(|g| g.values()),
            &gcfg,
        );
        if !out.converged {
            return Err(Error::NonConvergence {
                what: "Lippmann-Schwinger solve",
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        let field = ComplexVolume::new(grid, out.x)?;
        let min_modulus = field.min_modulus();
        Ok(LsSolution { field, iterations: out.iterations, residual: out.residual, min_modulus })
    }

    /// Relative residual of the discrete equation for a given field.
    pub fn residual(&mut self, c: &Coefficient, u: &ComplexVolume) -> Result<f64> {
        let grid = *self.op.grid();
        if c.grid() != &grid || u.grid() != &grid {
            return Err(Error::mismatch("residual fields must share the solver grid"));
        }
        let k = self.op.wavenumber();
        let inc = incident_field(k, &grid, self.op.convention())?;
        let f: Vec<C64> = u.values().iter().zip(c.values()).map(|(v, c)| v * (c - 1.0)).collect();
        let mut kf = vec![C64::new(0.0, 0.0); grid.len()];
        self.op.apply(&f, &mut kf);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..grid.len() {
            num += (u.values()[i] - inc.values()[i] - k * k * kf[i]).norm_sqr();
            den += inc.values()[i].norm_sqr();
        }
        Ok((num / den).sqrt())
    }
}

pub fn solve_lippmann_schwinger(c: &Coefficient, k: f64, conv: WaveConvention, cfg: &LsConfig) -> Result<ComplexVolume> {
    Ok(LsSolver::new(c.grid(), k, conv, *cfg)?.solve(c)?.field)
}

/// `k^2 sum_q Phi_k(x - y_q) beta_q u_q dV` at arbitrary points away from the
/// support of `beta`.
pub fn scattered_at_points(
    u: &ComplexVolume,
    c: &Coefficient,
    k: f64,
    conv: WaveConvention,
    points: &[[f64; 3]],
) -> Result<Vec<C64>> {
    let grid = u.grid();
    if c.grid() != grid {
        return Err(Error::mismatch("field and coefficient grids differ"));
    }
    let dv = grid.cell_volume();
    let sources: Vec<([f64; 3], C64)> = c
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &cv)| cv != 1.0)
        .map(|(p, &cv)| (grid.node_at(p), u.values()[p] * ((cv - 1.0) * dv * k * k / (4.0 * PI))))
        .collect();
    let sign = conv.sign();
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        let mut s = C64::new(0.0, 0.0);
        for (y, w) in &sources {
            let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
            if r == 0.0 {
                return Err(Error::invalid("evaluation point coincides with a source node"));
            }
            let (sn, cs) = (k * r).sin_cos();
            s += w * C64::new(cs, sign * sn) / r;
        }
        out.push(s);
    }
    Ok(out)
}

/// Scattered field on a plane that does not meet the support box of `beta`.
pub fn scattered_on_plane(
    u: &ComplexVolume,
    c: &Coefficient,
    k: f64,
    conv: WaveConvention,
    plane: &Grid2D,
) -> Result<PlaneData> {
    if let Some((lo, hi)) = c.support() {
        let g = c.grid();
        let (zlo, zhi) = (g.coord(2, lo[2]) - 0.5 * g.spacing()[2], g.coord(2, hi[2]) + 0.5 * g.spacing()[2]);
        let z = plane.z_level();
        if z >= zlo && z <= zhi {
            return Err(Error::invalid(format!(
                "plane z = {z} intersects the scatterer support [{zlo}, {zhi}]"
            )));
        }
    }
    let points: Vec<[f64; 3]> = (0..plane.len())
        .map(|p| {
            let [x, y] = plane.node_at(p);
            [x, y, plane.z_level()]
        })
        .collect();
    let values = scattered_at_points(u, c, k, conv, &points)?;
    PlaneData::new(*plane, k, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn green_examples() {
        let g = green_function(0.0, 1.0).unwrap();
        assert!((g.re - 0.079_577_471_545_947_67).abs() < 1e-15 && g.im == 0.0);
        let g = green_function(PI, 1.0).unwrap();
        assert!((g - C64::new(-1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
        // e^{11i}/(8 pi): cos 11 = 0.004425697988050785, sin 11 = -0.9999902065507035.
        let g = green_function(5.5, 2.0).unwrap();
        let want = C64::new(0.004_425_697_988_050_785, -0.999_990_206_550_703_5) / (8.0 * PI);
        assert!((g - want).norm() < 1e-15);
        assert!(green_function(1.0, 0.0).is_err());
    }

    #[test]
    fn incident_examples() {
        let g = Grid3D::new([0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        let u = incident_field(PI, &g, WaveConvention::Plus).unwrap();
        assert!((u.get(0, 0, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((u.get(1, 1, 1) - C64::new(-1.0, 0.0)).norm() < 1e-15);
        let u = incident_field(PI, &g, WaveConvention::Minus).unwrap();
        assert!((u.get(0, 1, 1) - C64::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(incident_field(0.0, &g, WaveConvention::Plus).is_err());
    }

    #[test]
    fn unit_cube_static_integral() {
        // Reference value of the integral of 1/|y| over the unit cube centred at 0.
        assert!((static_box_integral(0.5, 0.5, 0.5) - 2.380_077_363_979_553_5).abs() < 1e-12);
        // Scaling: the integral grows like length^2.
        let s = static_box_integral(1.0, 1.0, 1.0) / static_box_integral(0.5, 0.5, 0.5);
        assert!((s - 4.0).abs() < 1e-12);
    }

    #[test]
    fn self_cell_matches_brute_force() {
        // Compare against a fine midpoint sum that avoids the origin.
        let h = [0.2, 0.15, 0.1];
        let k = 3.0;
        let w = cell_weight(k, h, [0, 0, 0]);
        let n = 60;
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let x = (i as f64 + 0.5) / n as f64 - 0.5;
                    let y = (j as f64 + 0.5) / n as f64 - 0.5;
                    let z = (l as f64 + 0.5) / n as f64 - 0.5;
                    let r = ((x * h[0]).powi(2) + (y * h[1]).powi(2) + (z * h[2]).powi(2)).sqrt();
                    s += phi(k, r);
                }
            }
        }
        s *= h[0] * h[1] * h[2] / (n * n * n) as f64;
        assert!((w - s).norm() / w.norm() < 2e-3, "{w} vs {s}");
    }

    #[test]
    fn neighbour_cells_accurate() {
        let h = [0.1; 3];
        let k = 4.0;
        for m in [[1, 0, 0], [1, 1, 0], [2, -1, 3]] {
            let w = cell_weight(k, h, m);
            let centre = [0, 1, 2].map(|a| m[a] as f64 * h[a]);
            let mut s = C64::new(0.0, 0.0);
            let n = 40;
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        let off = |t: usize| ((t as f64 + 0.5) / n as f64 - 0.5) * 0.1;
                        let x = [centre[0] + off(i), centre[1] + off(j), centre[2] + off(l)];
                        s += phi(k, (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
                    }
                }
            }
            s *= 1e-3 / (n * n * n) as f64;
            assert!((w - s).norm() / w.norm() < 1e-4, "{m:?}: {w} vs {s}");
        }
    }

    #[test]
    fn ball_integral_of_kernel() {
        // int_{|x|<a} Phi_k(x) dx = ((1 - ika) e^{ika} - 1) / k^2: sum the
        // cell weights of all cells whose centres lie in the ball.
        let (a, k, n) = (0.5, 3.0, 41);
        let h = 2.0 * a / (n - 1) as f64;
        let r = (n / 2) as i64;
        let mut s = C64::new(0.0, 0.0);
        for i in -r..=r {
            for j in -r..=r {
                for l in -r..=r {
                    let d = h * ((i * i + j * j + l * l) as f64).sqrt();
                    if d < a {
                        s += cell_weight(k, [h; 3], [i, j, l]);
                    }
                }
            }
        }
        let ika = C64::new(0.0, k * a);
        let want = ((1.0 - ika) * ika.exp() - 1.0) / (k * k);
        assert!((s - want).norm() / want.norm() < 0.03, "{s} vs {want}");
    }

    #[test]
    fn operator_matches_direct_sum() {
        let g = Grid3D::new([0.0; 3], [0.1, 0.12, 0.09], [5, 4, 6]).unwrap();
        let f: Vec<C64> = (0..g.len()).map(|p| C64::new((p as f64 * 0.7).sin(), (p as f64 * 0.3).cos())).collect();
        for conv in [WaveConvention::Plus, WaveConvention::Minus] {
            let mut op = VolumeOperator::new(&g, 2.5, conv, 2.0).unwrap();
            let mut got = vec![C64::new(0.0, 0.0); g.len()];
            op.apply(&f, &mut got);
            for p in 0..g.len() {
                let ip = g.unravel(p);
                let mut s = C64::new(0.0, 0.0);
                for q in 0..g.len() {
                    let iq = g.unravel(q);
                    let m = [0, 1, 2].map(|a| ip[a] as i64 - iq[a] as i64);
                    let w = cell_weight(2.5, g.spacing(), m);
                    s += conv.apply(w) * f[q];
                }
                assert!((s - got[p]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn background_is_exact() {
        let g = Grid3D::new([0.0; 3], [0.1; 3], [6, 6, 6]).unwrap();
        let c = Coefficient::background(g);
        let u = solve_lippmann_schwinger(&c, 3.0, WaveConvention::Minus, &LsConfig::default()).unwrap();
        assert_eq!(u, incident_field(3.0, &g, WaveConvention::Minus).unwrap());
        let plane = Grid2D::new([0.0; 2], [0.1; 2], [3, 3], -1.0).unwrap();
        let s = scattered_on_plane(&u, &c, 3.0, WaveConvention::Minus, &plane).unwrap();
        assert!(s.values().iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = LsConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.padding_factor = 1.5;
        assert!(cfg.validate().is_err());
        cfg = LsConfig { krylov_tolerance: 1.0, ..LsConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
