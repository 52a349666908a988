//! Angular-spectrum propagation between parallel planes and the half-space
//! double-layer oracle used to check the propagation formula.
//!
//! Transform convention: `g^(v) = dx dy sum_j g(x_j) exp(-i x_j . v)` on the
//! lattice `v = 2 pi m / (N dx)`, which is the Riemann sum of the continuous
//! transform of data extended by zero outside the rectangle.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::grid::{Grid2D, PlaneData, WaveConvention, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationConfig {
    /// Zero-padding factor per axis (1 means the bare periodic lattice).
    pub padding: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { padding: 2 }
    }
}

/// `sqrt(k^2 - |v|^2)` for propagating modes, `i sqrt(|v|^2 - k^2)` otherwise.
pub fn kappa(k: f64, v1: f64, v2: f64) -> C64 {
    let d = k * k - v1 * v1 - v2 * v2;
    if d >= 0.0 {
        C64::new(d.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-d).sqrt())
    }
}

/// Spatial frequency of FFT bin `m` on a lattice of `n` points, step `h`.
fn lattice_frequency(m: usize, n: usize, h: f64) -> f64 {
    let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    2.0 * PI * signed / (n as f64 * h)
}

/// Transverse spectrum of a plane field.
#[derive(Debug, Clone)]
pub struct SpectralPlane {
    source: Grid2D,
    counts: [usize; 2],
    wavenumber: f64,
    values: Vec<C64>,
}

impl SpectralPlane {
    pub fn source_grid(&self) -> &Grid2D {
        &self.source
    }

    /// Lattice size, including padding.
    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn wavenumber(&self) -> f64 {
        self.wavenumber
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    /// `(v1, v2)` of lattice node `p`.
    pub fn frequency(&self, p: usize) -> [f64; 2] {
        let [n1, n2] = self.counts;
        let h = self.source.spacing();
        [lattice_frequency(p % n1, n1, h[0]), lattice_frequency(p / n1, n2, h[1])]
    }

    pub fn is_propagating(&self, p: usize) -> bool {
        let [v1, v2] = self.frequency(p);
        v1 * v1 + v2 * v2 <= self.wavenumber * self.wavenumber
    }

    /// Multiplies every propagating mode by the phase that carries the field
    /// from the source plane to `target_z`, zeroing evanescent modes.
    pub fn propagate(&self, target_z: f64, conv: WaveConvention) -> SpectralPlane {
        let b = self.source.z_level();
        let k = self.wavenumber;
        // PLUS: exp(i kappa (b - a)); MINUS: exp(-i kappa (b - a)).
        let dist = conv.sign() * (b - target_z);
        let mut out = self.clone();
        for (p, v) in out.values.iter_mut().enumerate() {
            let [v1, v2] = self.frequency(p);
            let d = k * k - v1 * v1 - v2 * v2;
            if d >= 0.0 {
                *v *= C64::from_polar(1.0, d.sqrt() * dist);
            } else {
                *v = C64::new(0.0, 0.0);
            }
        }
        out.source = self.source.with_z(target_z);
        out
    }

    /// Keeps propagating modes and zeroes the rest.
    pub fn propagating_part(&self) -> SpectralPlane {
        let mut out = self.clone();
        for (p, v) in out.values.iter_mut().enumerate() {
            if !self.is_propagating(p) {
                *v = C64::new(0.0, 0.0);
            }
        }
        out
    }

    /// `sum |g^|^2` over propagating modes.
    pub fn propagating_energy(&self) -> f64 {
        (0..self.values.len()).filter(|&p| self.is_propagating(p)).map(|p| self.values[p].norm_sqr()).sum()
    }
}

pub fn forward_transform(p: &PlaneData) -> SpectralPlane {
    forward_transform_padded(p, 1)
}

pub fn forward_transform_padded(p: &PlaneData, padding: usize) -> SpectralPlane {
    let grid = *p.grid();
    let [nx, ny] = grid.counts();
    let padding = padding.max(1);
    let counts = [nx * padding, ny * padding];
    let mut buf = vec![C64::new(0.0, 0.0); counts[0] * counts[1]];
    for j in 0..ny {
        buf[j * counts[0]..j * counts[0] + nx].copy_from_slice(&p.values()[j * nx..(j + 1) * nx]);
    }
    FftNd::new(&counts).forward(&mut buf);
    let mut s = SpectralPlane { source: grid, counts, wavenumber: p.wavenumber(), values: buf };
    let o = grid.origin();
    let area = grid.cell_area();
    for idx in 0..s.values.len() {
        let [v1, v2] = s.frequency(idx);
        s.values[idx] *= C64::from_polar(area, -(o[0] * v1 + o[1] * v2));
    }
    s
}

/// Inverse of [`forward_transform_padded`], cropped to the source rectangle.
pub fn inverse_transform(s: &SpectralPlane) -> PlaneData {
    let grid = s.source;
    let o = grid.origin();
    let area = grid.cell_area();
    let mut buf: Vec<C64> = (0..s.values.len())
        .map(|idx| {
            let [v1, v2] = s.frequency(idx);
            s.values[idx] * C64::from_polar(1.0 / area, o[0] * v1 + o[1] * v2)
        })
        .collect();
    let counts = s.counts;
    FftNd::new(&counts).inverse_normalized(&mut buf);
    let [nx, ny] = grid.counts();
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        values.extend_from_slice(&buf[j * counts[0]..j * counts[0] + nx]);
    }
    PlaneData::from_raw(grid, s.wavenumber, values)
}

/// Moves `g` from its own plane to `target_z`.
pub fn propagate(g: &PlaneData, target_z: f64, conv: WaveConvention) -> Result<PlaneData> {
    propagate_with(g, target_z, conv, &PropagationConfig::default())
}

pub fn propagate_with(g: &PlaneData, target_z: f64, conv: WaveConvention, cfg: &PropagationConfig) -> Result<PlaneData> {
    if !target_z.is_finite() || target_z == g.grid().z_level() {
        return Err(Error::invalid("propagation distance must be nonzero"));
    }
    if cfg.padding == 0 {
        return Err(Error::invalid("padding factor must be at least 1"));
    }
    let s = forward_transform_padded(g, cfg.padding);
    Ok(inverse_transform(&s.propagate(target_z, conv)))
}

/// Double-layer potential `w(x) = -int dG/dy3(x, (y1, y2, 0)) phi(y) dy` of the
/// half-space Dirichlet Green's function, evaluated on `phi`'s lattice at
/// height `x3 < 0` by the midpoint sum (PLUS world).
///
/// The sum is a discrete convolution and is evaluated through a zero-padded
/// FFT, which reproduces the direct sum to rounding.
pub fn halfspace_oracle(phi: &PlaneData, x3: f64, k: f64) -> Result<PlaneData> {
    if !(x3 < 0.0) {
        return Err(Error::invalid(format!("oracle plane x3 = {x3} must be negative")));
    }
    if !(k > 0.0) {
        return Err(Error::invalid("wavenumber must be positive"));
    }
    let grid = *phi.grid();
    let [nx, ny] = grid.counts();
    let [hx, hy] = grid.spacing();
    let dims = [2 * nx, 2 * ny];
    let mut kernel = vec![C64::new(0.0, 0.0); dims[0] * dims[1]];
    for my in -(ny as i64 - 1)..=(ny as i64 - 1) {
        for mx in -(nx as i64 - 1)..=(nx as i64 - 1) {
            let (dx, dy) = (mx as f64 * hx, my as f64 * hy);
            let p = mx.rem_euclid(dims[0] as i64) as usize + dims[0] * my.rem_euclid(dims[1] as i64) as usize;
            kernel[p] = double_layer_kernel(k, x3, dx, dy) * (hx * hy);
        }
    }
    let mut fft = FftNd::new(&dims);
    fft.forward(&mut kernel);
    let mut buf = vec![C64::new(0.0, 0.0); dims[0] * dims[1]];
    for j in 0..ny {
        buf[j * dims[0]..j * dims[0] + nx].copy_from_slice(&phi.values()[j * nx..(j + 1) * nx]);
    }
    fft.forward(&mut buf);
    buf.iter_mut().zip(&kernel).for_each(|(b, g)| *b *= g);
    fft.inverse_normalized(&mut buf);
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        values.extend_from_slice(&buf[j * dims[0]..j * dims[0] + nx]);
    }
    PlaneData::new(grid.with_z(x3), k, values)
}

/// `2 x3 exp(ikr) (ikr - 1) / (4 pi r^3)` with `r = |(dx, dy, x3)|`.
pub fn double_layer_kernel(k: f64, x3: f64, dx: f64, dy: f64) -> C64 {
    let r = (dx * dx + dy * dy + x3 * x3).sqrt();
    C64::from_polar(2.0 * x3 / (4.0 * PI * r * r * r), k * r) * C64::new(-1.0, k * r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremCheck {
    /// Relative L2 mismatch of `w^` and `phi^ exp(-i kappa x3)` on propagating modes.
    pub rel_error: f64,
    pub propagating_modes: usize,
}

/// Compares the transform of the double-layer oracle with `phi^ exp(-i kappa x3)`.
pub fn check_theorem(phi: &PlaneData, x3: f64, k: f64) -> Result<TheoremCheck> {
    let w = halfspace_oracle(phi, x3, k)?;
    let what = forward_transform(&w);
    let phat = forward_transform(phi);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut modes = 0;
    for p in 0..phat.values.len() {
        if phat.is_propagating(p) {
            let [v1, v2] = phat.frequency(p);
            let want = phat.values[p] * (-C64::new(0.0, 1.0) * kappa(k, v1, v2) * x3).exp();
            num += (what.values[p] - want).norm_sqr();
            den += want.norm_sqr();
            modes += 1;
        }
    }
    Ok(TheoremCheck { rel_error: (num / den).sqrt(), propagating_modes: modes })
}

/// Parameters of the standard numerical check of the propagation theorem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremSetup {
    pub k: f64,
    pub x3: f64,
    pub sigma: f64,
    pub spacing: f64,
    pub nodes: usize,
}

impl Default for TheoremSetup {
    fn default() -> Self {
        Self { k: 3.0, x3: -1.0, sigma: 1.0, spacing: 0.2, nodes: 128 }
    }
}

impl TheoremSetup {
    /// Gaussian bump of width `sigma` centred on a square lattice.
    pub fn phi(&self) -> Result<PlaneData> {
        let n = self.nodes;
        let h = self.spacing;
        let o = -0.5 * (n as f64 - 1.0) * h;
        let grid = Grid2D::new([o, o], [h, h], [n, n], 0.0)?;
        let s2 = self.sigma * self.sigma;
        PlaneData::from_fn(grid, self.k, |[x, y]| C64::new((-(x * x + y * y) / (2.0 * s2)).exp(), 0.0))
    }

    /// The same spacing on a lattice twice as wide.
    pub fn refined(&self) -> Self {
        Self { nodes: 2 * self.nodes, ..*self }
    }

    pub fn run(&self) -> Result<TheoremCheck> {
        check_theorem(&self.phi()?, self.x3, self.k)
    }
}
