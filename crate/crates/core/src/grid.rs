//! Uniform grids, field containers and the wavenumber partition.
//!
//! Lengths are dimensionless throughout: one unit is 10 cm. Fields are stored
//! flat and row-major with `x` fastest, i.e. node `(i, j, l)` lives at
//! `i + nx * (j + ny * l)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default upper bound on admissible dielectric constants.
pub const C_MAX_DEFAULT: f64 = 15.0;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Length of one dimensionless unit in metres.
pub const UNIT_LENGTH_M: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3D {
    origin: [f64; 3],
    spacing: [f64; 3],
    counts: [usize; 3],
}

impl Grid3D {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(spacing[a] > 0.0 && spacing[a].is_finite()) {
                return Err(Error::invalid(format!("spacing[{a}] = {} must be positive", spacing[a])));
            }
            if counts[a] < 2 {
                return Err(Error::invalid(format!("counts[{a}] = {} must be at least 2", counts[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::invalid("grid origin must be finite"));
            }
        }
        Ok(Self { origin, spacing, counts })
    }

    /// Grid whose first and last nodes sit exactly on `lo` and `hi`.
    pub fn from_bounds(lo: [f64; 3], hi: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        let mut spacing = [0.0; 3];
        for a in 0..3 {
            if counts[a] < 2 {
                return Err(Error::invalid(format!("counts[{a}] = {} must be at least 2", counts[a])));
            }
            spacing[a] = (hi[a] - lo[a]) / (counts[a] - 1) as f64;
        }
        Self::new(lo, spacing, counts)
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Coordinate of the last node along each axis.
    pub fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (self.counts[a] - 1) as f64 * self.spacing[a])
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * l)
    }

    #[inline]
    pub fn unravel(&self, p: usize) -> [usize; 3] {
        let nx = self.counts[0];
        let ny = self.counts[1];
        [p % nx, (p / nx) % ny, p / (nx * ny)]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, l: usize) -> [f64; 3] {
        [self.coord(0, i), self.coord(1, j), self.coord(2, l)]
    }

    #[inline]
    pub fn node_at(&self, p: usize) -> [f64; 3] {
        let [i, j, l] = self.unravel(p);
        self.node(i, j, l)
    }

    /// Index of the node closest to `x`, or `None` when `x` lies more than
    /// half a cell outside the grid.
    pub fn nearest_index(&self, x: [f64; 3]) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let t = ((x[a] - self.origin[a]) / self.spacing[a]).round();
            if t < 0.0 || t > (self.counts[a] - 1) as f64 {
                return None;
            }
            out[a] = t as usize;
        }
        Some(out)
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize, l: usize) -> bool {
        let [nx, ny, nz] = self.counts;
        i == 0 || j == 0 || l == 0 || i == nx - 1 || j == ny - 1 || l == nz - 1
    }

    /// The transverse grid of the face `z = const` at layer `l`.
    pub fn z_face(&self, l: usize) -> Grid2D {
        Grid2D {
            origin: [self.origin[0], self.origin[1]],
            spacing: [self.spacing[0], self.spacing[1]],
            counts: [self.counts[0], self.counts[1]],
            z_level: self.coord(2, l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    origin: [f64; 2],
    spacing: [f64; 2],
    counts: [usize; 2],
    z_level: f64,
}

impl Grid2D {
    pub fn new(origin: [f64; 2], spacing: [f64; 2], counts: [usize; 2], z_level: f64) -> Result<Self> {
        for a in 0..2 {
            if !(spacing[a] > 0.0 && spacing[a].is_finite()) {
                return Err(Error::invalid(format!("spacing[{a}] = {} must be positive", spacing[a])));
            }
            if counts[a] < 2 {
                return Err(Error::invalid(format!("counts[{a}] = {} must be at least 2", counts[a])));
            }
        }
        if !z_level.is_finite() || !origin.iter().all(|o| o.is_finite()) {
            return Err(Error::invalid("plane origin and level must be finite"));
        }
        Ok(Self { origin, spacing, counts, z_level })
    }

    pub fn from_bounds(lo: [f64; 2], hi: [f64; 2], counts: [usize; 2], z_level: f64) -> Result<Self> {
        if counts[0] < 2 || counts[1] < 2 {
            return Err(Error::invalid("plane needs at least two nodes per axis"));
        }
        let spacing = [0, 1].map(|a| (hi[a] - lo[a]) / (counts[a] - 1) as f64);
        Self::new(lo, spacing, counts, z_level)
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }

    pub fn z_level(&self) -> f64 {
        self.z_level
    }

    pub fn with_z(&self, z_level: f64) -> Self {
        Self { z_level, ..*self }
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.counts[0] * j
    }

    #[inline]
    pub fn unravel(&self, p: usize) -> [usize; 2] {
        [p % self.counts[0], p / self.counts[0]]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing[axis]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coord(0, i), self.coord(1, j)]
    }

    pub fn node_at(&self, p: usize) -> [f64; 2] {
        let [i, j] = self.unravel(p);
        self.node(i, j)
    }

    /// True when both grids share the same transverse lattice, ignoring the
    /// plane level.
    pub fn same_lattice(&self, other: &Grid2D) -> bool {
        self.counts == other.counts
            && (0..2).all(|a| {
                (self.origin[a] - other.origin[a]).abs() <= 1e-12 * (1.0 + self.origin[a].abs())
                    && (self.spacing[a] - other.spacing[a]).abs() <= 1e-12 * self.spacing[a]
            })
    }
}

fn check_finite(values: &[C64]) -> Result<()> {
    match values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
        Some(p) => Err(Error::invalid(format!("non-finite field value at flat index {p}"))),
        None => Ok(()),
    }
}

/// Complex scalar field on a [`Grid3D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVolume {
    grid: Grid3D,
    values: Vec<C64>,
}

impl ComplexVolume {
    pub fn new(grid: Grid3D, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3D) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn from_fn(grid: Grid3D, mut f: impl FnMut([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|p| f(grid.node_at(p))).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid3D, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> C64 {
        self.values[self.grid.index(i, j, l)]
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn conj(&self) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v.conj()).collect() }
    }
}

/// Complex field on a plane `z = const`, tied to one wavenumber.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneData {
    grid: Grid2D,
    wavenumber: f64,
    values: Vec<C64>,
}

impl PlaneData {
    pub fn new(grid: Grid2D, wavenumber: f64, values: Vec<C64>) -> Result<Self> {
        if !(wavenumber > 0.0 && wavenumber.is_finite()) {
            return Err(Error::invalid(format!("wavenumber {wavenumber} must be positive")));
        }
        if values.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "{} values for a plane of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, wavenumber, values })
    }

    pub fn zeros(grid: Grid2D, wavenumber: f64) -> Result<Self> {
        Self::new(grid, wavenumber, vec![C64::new(0.0, 0.0); grid.len()])
    }

    pub fn from_fn(grid: Grid2D, wavenumber: f64, mut f: impl FnMut([f64; 2]) -> C64) -> Result<Self> {
        let values = (0..grid.len()).map(|p| f(grid.node_at(p))).collect();
        Self::new(grid, wavenumber, values)
    }

    pub(crate) fn from_raw(grid: Grid2D, wavenumber: f64, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, wavenumber, values }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
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

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Flat index of the node of largest modulus (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (p, v) in self.values.iter().enumerate() {
            let m = v.norm();
            if m > best_val {
                best_val = m;
                best = p;
            }
        }
        best
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            wavenumber: self.wavenumber,
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { grid: self.grid, wavenumber: self.wavenumber, values: self.values.iter().map(|v| v * s).collect() }
    }
}

/// Real dielectric constant on a [`Grid3D`], background value 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    grid: Grid3D,
    values: Vec<f64>,
}

impl Coefficient {
    pub fn new(grid: Grid3D, values: Vec<f64>) -> Result<Self> {
        Self::with_bound(grid, values, C_MAX_DEFAULT)
    }

    /// Validates `1 <= c <= c_max` at every node.
    pub fn with_bound(grid: Grid3D, values: Vec<f64>, c_max: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(p) = values.iter().position(|&c| !(c >= 1.0 && c <= c_max)) {
            return Err(Error::invalid(format!(
                "coefficient {} at node {:?} outside [1, {c_max}]",
                values[p],
                grid.unravel(p)
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn background(grid: Grid3D) -> Self {
        Self { grid, values: vec![1.0; grid.len()] }
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.values[self.grid.index(i, j, l)]
    }

    /// The contrast `c - 1`.
    pub fn beta(&self) -> Vec<f64> {
        self.values.iter().map(|c| c - 1.0).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_background(&self) -> bool {
        self.values.iter().all(|&c| c == 1.0)
    }

    /// Smallest axis-aligned node box containing every node with `c != 1`.
    pub fn support(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (p, &c) in self.values.iter().enumerate() {
            if c != 1.0 {
                any = true;
                let idx = self.grid.unravel(p);
                for a in 0..3 {
                    lo[a] = lo[a].min(idx[a]);
                    hi[a] = hi[a].max(idx[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }
}

/// Sign convention of the time-harmonic factor.
///
/// With `Plus`, `exp(ikz)` travels toward `+z`; with `Minus`, `exp(-ikz)` does.
/// The two worlds are complex conjugates of each other for real coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveConvention {
    Plus,
    Minus,
}

impl WaveConvention {
    pub fn sign(self) -> f64 {
        match self {
            WaveConvention::Plus => 1.0,
            WaveConvention::Minus => -1.0,
        }
    }

    /// The incident plane wave `exp(±ikz)`.
    pub fn plane_wave(self, k: f64, z: f64) -> C64 {
        C64::from_polar(1.0, self.sign() * k * z)
    }

    /// Applies the convention to a value computed in the `Plus` world.
    pub fn apply(self, v: C64) -> C64 {
        match self {
            WaveConvention::Plus => v,
            WaveConvention::Minus => v.conj(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WaveConvention::Plus => "plus",
            WaveConvention::Minus => "minus",
        }
    }
}

impl std::str::FromStr for WaveConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plus" | "+" => Ok(WaveConvention::Plus),
            "minus" | "-" => Ok(WaveConvention::Minus),
            other => Err(Error::invalid(format!("unknown wave convention `{other}`"))),
        }
    }
}

/// Uniform partition `k_N = k_min < ... < k_0 = k_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavenumberPartition {
    k_min: f64,
    k_max: f64,
    count: usize,
}

pub fn build_partition(k_min: f64, k_max: f64, count: usize) -> Result<WavenumberPartition> {
    if !(k_min > 0.0 && k_min.is_finite() && k_max.is_finite()) {
        return Err(Error::invalid(format!("k_min = {k_min} must be positive")));
    }
    if k_min >= k_max {
        return Err(Error::invalid(format!("k_min = {k_min} must be below k_max = {k_max}")));
    }
    if count == 0 {
        return Err(Error::invalid("partition needs at least one step"));
    }
    Ok(WavenumberPartition { k_min, k_max, count })
}

impl WavenumberPartition {
    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    /// Number of steps `N`; there are `N + 1` nodes.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn step(&self) -> f64 {
        (self.k_max - self.k_min) / self.count as f64
    }

    /// `k_i = k_max - i h`, with the last node pinned to `k_min`.
    pub fn node(&self, i: usize) -> f64 {
        assert!(i <= self.count, "partition index {i} > N = {}", self.count);
        if i == self.count {
            self.k_min
        } else {
            self.k_max - i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.count).map(|i| self.node(i)).collect()
    }
}

/// Dimensionless wavenumber for a frequency in GHz (`k = 2 pi f / c * 10 cm`).
pub fn ghz_to_k(f_ghz: f64) -> Result<f64> {
    if !(f_ghz > 0.0 && f_ghz.is_finite()) {
        return Err(Error::invalid(format!("frequency {f_ghz} GHz must be positive")));
    }
    Ok(2.0 * PI * f_ghz * 1e9 / SPEED_OF_LIGHT * UNIT_LENGTH_M)
}

/// Inverse of [`ghz_to_k`].
pub fn k_to_ghz(k: f64) -> f64 {
    k * SPEED_OF_LIGHT / (2.0 * PI * 1e9 * UNIT_LENGTH_M)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn partition_of_the_measured_interval() {
        let p = build_partition(5.31, 5.69, 2).unwrap();
        assert_abs_diff_eq!(p.step(), 0.19, epsilon = 1e-12);
        let nodes = p.nodes();
        assert_eq!(nodes.len(), 3);
        assert_abs_diff_eq!(nodes[0], 5.69, epsilon = 1e-12);
        assert_abs_diff_eq!(nodes[1], 5.50, epsilon = 1e-12);
        assert_abs_diff_eq!(nodes[2], 5.31, epsilon = 1e-12);
    }

    #[test]
    fn partition_small_cases() {
        let p = build_partition(1.0, 2.0, 1).unwrap();
        assert_eq!(p.nodes(), vec![2.0, 1.0]);
        assert_eq!(p.step(), 1.0);
        let p = build_partition(5.0, 6.0, 4).unwrap();
        assert_eq!(p.step(), 0.25);
        assert_eq!(p.node(2), 5.5);
    }

    #[test]
    fn partition_rejects_bad_input() {
        assert!(build_partition(2.0, 2.0, 3).is_err());
        assert!(build_partition(3.0, 2.0, 3).is_err());
        assert!(build_partition(1.0, 2.0, 0).is_err());
        assert!(build_partition(0.0, 2.0, 2).is_err());
    }

    #[test]
    fn frequency_conversion() {
        // 2.6 GHz is labelled k = 5.5 in the data figures and 5.46 in the text.
        let k = ghz_to_k(2.6).unwrap();
        assert!((k - 5.45).abs() < 0.01, "{k}");
        let k = ghz_to_k(2.62).unwrap();
        assert!((k - 5.49).abs() < 0.005, "{k}");
        assert!(ghz_to_k(0.0).is_err());
        assert!(ghz_to_k(-1.0).is_err());
        assert_abs_diff_eq!(k_to_ghz(ghz_to_k(3.1).unwrap()), 3.1, epsilon = 1e-12);
    }

    #[test]
    fn coefficient_bounds() {
        let g = Grid3D::new([0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        assert!(Coefficient::new(g, vec![1.0; 8]).is_ok());
        assert!(Coefficient::new(g, vec![0.5; 8]).is_err());
        assert!(Coefficient::new(g, vec![16.0; 8]).is_err());
        assert!(Coefficient::new(g, vec![1.0; 7]).is_err());
        let mut v = vec![1.0; 8];
        v[g.index(1, 0, 1)] = 3.0;
        let c = Coefficient::new(g, v).unwrap();
        assert_eq!(c.support(), Some(([1, 0, 1], [1, 0, 1])));
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(Grid3D::new([0.0; 3], [0.1, 0.0, 0.1], [4, 4, 4]).is_err());
        assert!(Grid3D::new([0.0; 3], [0.1; 3], [4, 1, 4]).is_err());
        assert!(Grid2D::new([0.0; 2], [0.1; 2], [4, 4], f64::NAN).is_err());
    }

    #[test]
    fn incident_signs() {
        use std::f64::consts::PI;
        let p = WaveConvention::Plus.plane_wave(PI, 1.0);
        let m = WaveConvention::Minus.plane_wave(PI, 1.0);
        assert_abs_diff_eq!(p.re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.re, -1.0, epsilon = 1e-15);
        assert!((WaveConvention::Minus.plane_wave(2.0, 0.3) - WaveConvention::Plus.plane_wave(2.0, 0.3).conj()).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn node_round_trip(
            ox in -5.0..5.0f64, oy in -5.0..5.0f64, oz in -5.0..5.0f64,
            hx in 0.01..1.0f64, hy in 0.01..1.0f64, hz in 0.01..1.0f64,
            nx in 2usize..20, ny in 2usize..20, nz in 2usize..20,
            seed in 0usize..10_000,
        ) {
            let g = Grid3D::new([ox, oy, oz], [hx, hy, hz], [nx, ny, nz]).unwrap();
            let p = seed % g.len();
            let idx = g.unravel(p);
            prop_assert_eq!(g.index(idx[0], idx[1], idx[2]), p);
            prop_assert_eq!(g.nearest_index(g.node_at(p)), Some(idx));
        }

        #[test]
        fn partition_steps_uniform(kmin in 0.1..10.0f64, width in 0.01..5.0f64, n in 1usize..50) {
            let p = build_partition(kmin, kmin + width, n).unwrap();
            let nodes = p.nodes();
            let h = p.step();
            for i in 1..nodes.len() {
                prop_assert!(nodes[i - 1] > nodes[i]);
                prop_assert!(((nodes[i - 1] - nodes[i]) - h).abs() <= 1e-12 * (kmin + width));
            }
        }

        #[test]
        fn ghz_to_k_monotone(a in 0.01..20.0f64, d in 1e-6..5.0f64) {
            prop_assert!(ghz_to_k(a + d).unwrap() > ghz_to_k(a).unwrap());
        }
    }
}
