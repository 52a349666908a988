//! From raw multi-frequency plane data to boundary data for the inversion:
//! reference subtraction, back-propagation, stable-interval selection,
//! truncation, smoothing, target localization and boundary completion.

use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::grid::{build_partition, ghz_to_k, ComplexVolume, Grid2D, Grid3D, PlaneData, WaveConvention, WavenumberPartition, C64};
use crate::propagation::{forward_transform_padded, inverse_transform, PropagationConfig};

/// One plane per frequency, all on the same lattice and level.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFrequencyData {
    frequencies_ghz: Vec<f64>,
    planes: Vec<PlaneData>,
}

impl MultiFrequencyData {
    pub fn new(frequencies_ghz: Vec<f64>, planes: Vec<PlaneData>) -> Result<Self> {
        if frequencies_ghz.is_empty() || frequencies_ghz.len() != planes.len() {
            return Err(Error::mismatch(format!(
                "{} frequencies for {} planes",
                frequencies_ghz.len(),
                planes.len()
            )));
        }
        if frequencies_ghz.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("frequencies must be strictly increasing"));
        }
        let g0 = *planes[0].grid();
        for (f, p) in frequencies_ghz.iter().zip(&planes) {
            if !g0.same_lattice(p.grid()) || p.grid().z_level() != g0.z_level() {
                return Err(Error::mismatch("planes of one dataset must share a grid"));
            }
            let k = ghz_to_k(*f)?;
            if (p.wavenumber() - k).abs() > 1e-9 * k {
                return Err(Error::mismatch(format!("plane wavenumber {} does not match {f} GHz", p.wavenumber())));
            }
        }
        Ok(Self { frequencies_ghz, planes })
    }

    pub fn frequencies_ghz(&self) -> &[f64] {
        &self.frequencies_ghz
    }

    pub fn planes(&self) -> &[PlaneData] {
        &self.planes
    }

    pub fn grid(&self) -> &Grid2D {
        self.planes[0].grid()
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        self.planes.iter().map(|p| p.wavenumber()).collect()
    }

    pub fn max_moduli(&self) -> Vec<f64> {
        self.planes.iter().map(|p| p.max_modulus()).collect()
    }

    /// Frequencies `range` as a new dataset.
    pub fn slice(&self, range: std::ops::RangeInclusive<usize>) -> Self {
        Self {
            frequencies_ghz: self.frequencies_ghz[range.clone()].to_vec(),
            planes: self.planes[range].to_vec(),
        }
    }

    pub fn map_planes(&self, mut f: impl FnMut(&PlaneData) -> Result<PlaneData>) -> Result<Self> {
        let planes = self.planes.iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        Self::new(self.frequencies_ghz.clone(), planes)
    }
}

pub fn subtract_reference(total: &MultiFrequencyData, reference: &MultiFrequencyData) -> Result<MultiFrequencyData> {
    if total.frequencies_ghz != reference.frequencies_ghz {
        return Err(Error::mismatch("target and reference frequency lists differ"));
    }
    if !total.grid().same_lattice(reference.grid()) || total.grid().z_level() != reference.grid().z_level() {
        return Err(Error::mismatch("target and reference planes differ"));
    }
    let planes = total
        .planes
        .iter()
        .zip(&reference.planes)
        .map(|(t, r)| {
            let v = t.values().iter().zip(r.values()).map(|(a, b)| a - b).collect();
            PlaneData::from_raw(*t.grid(), t.wavenumber(), v)
        })
        .collect();
    Ok(MultiFrequencyData { frequencies_ghz: total.frequencies_ghz.clone(), planes })
}

pub fn propagate_all(
    data: &MultiFrequencyData,
    target_z: f64,
    conv: WaveConvention,
    cfg: &PropagationConfig,
) -> Result<MultiFrequencyData> {
    data.map_planes(|p| crate::propagation::propagate_with(p, target_z, conv, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConfig {
    /// Adjacent maxima may differ by a factor of at most `1 + delta`.
    pub delta: f64,
    /// Largest allowed move of the argmax between adjacent frequencies, in cells.
    pub r_loc: usize,
    pub min_len: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { delta: 0.2, r_loc: 1, min_len: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableInterval {
    /// First and last frequency index, inclusive.
    pub start: usize,
    pub end: usize,
    pub optimal: usize,
    pub f_min_ghz: f64,
    pub f_max_ghz: f64,
    pub f_opt_ghz: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub k_opt: f64,
}

/// Default step of the wavenumber partition over a stable interval.
pub const PARTITION_STEP: f64 = 0.19;

impl StableInterval {
    /// Uniform partition of `[k_min, k_max]` with step as close to `step` as
    /// an integer count allows, and at least two steps.
    pub fn partition(&self, step: f64) -> Result<WavenumberPartition> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("partition step {step} must be positive")));
        }
        let count = (((self.k_max - self.k_min) / step).round() as usize).max(2);
        build_partition(self.k_min, self.k_max, count)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Stable-interval selection on per-frequency summaries: the maximum modulus
/// and the node where it is attained.
///
/// Among runs of maximal length the one with the largest mean maximum wins.
pub fn select_stable_run(
    maxima: &[f64],
    argmax: &[[usize; 2]],
    frequencies_ghz: &[f64],
    cfg: &StabilityConfig,
) -> Result<StableInterval> {
    let n = maxima.len();
    if argmax.len() != n || frequencies_ghz.len() != n {
        return Err(Error::mismatch("curve lengths differ"));
    }
    if !(cfg.delta > 0.0) || cfg.min_len < 2 {
        return Err(Error::invalid("stability thresholds out of range"));
    }
    if n < cfg.min_len.max(3) {
        return Err(Error::invalid(format!("need at least {} frequencies, got {n}", cfg.min_len.max(3))));
    }
    let hi = 1.0 + cfg.delta;
    let ok = |i: usize| {
        let (a, b) = (maxima[i], maxima[i + 1]);
        let ratio_ok = a > 0.0 && b > 0.0 && b / a <= hi && a / b <= hi;
        let moved = argmax[i][0].abs_diff(argmax[i + 1][0]).max(argmax[i][1].abs_diff(argmax[i + 1][1]));
        ratio_ok && moved <= cfg.r_loc
    };
    let mut best: Option<(usize, usize, f64)> = None;
    let mut s = 0;
    while s < n {
        let mut e = s;
        while e + 1 < n && ok(e) {
            e += 1;
        }
        let len = e - s + 1;
        let mean = maxima[s..=e].iter().sum::<f64>() / len as f64;
        let better = match best {
            None => true,
            Some((bs, be, bm)) => len > be - bs + 1 || (len == be - bs + 1 && mean > bm),
        };
        if better {
            best = Some((s, e, mean));
        }
        s = e + 1;
    }
    let (start, end, _) = best.unwrap();
    if end - start + 1 < cfg.min_len.max(3) {
        return Err(Error::NoStableInterval { min_len: cfg.min_len.max(3) });
    }
    // Median, or the smaller of the two middle frequencies for even lengths.
    let optimal = start + (end - start) / 2;
    Ok(StableInterval {
        start,
        end,
        optimal,
        f_min_ghz: frequencies_ghz[start],
        f_max_ghz: frequencies_ghz[end],
        f_opt_ghz: frequencies_ghz[optimal],
        k_min: ghz_to_k(frequencies_ghz[start])?,
        k_max: ghz_to_k(frequencies_ghz[end])?,
        k_opt: ghz_to_k(frequencies_ghz[optimal])?,
    })
}

pub fn select_stable_interval(data: &MultiFrequencyData, cfg: &StabilityConfig) -> Result<StableInterval> {
    let maxima = data.max_moduli();
    let argmax: Vec<[usize; 2]> = data.planes.iter().map(|p| p.grid().unravel(p.argmax())).collect();
    select_stable_run(&maxima, &argmax, &data.frequencies_ghz, cfg)
}

/// Zeroes every value below `fraction` times the maximum modulus.
pub fn truncate_plane(f: &PlaneData, fraction: f64) -> Result<PlaneData> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("truncation fraction {fraction} outside (0, 1]")));
    }
    let m = f.max_modulus();
    if m == 0.0 {
        return Err(Error::FlatResponse("cannot truncate an all-zero plane".into()));
    }
    let cut = fraction * m;
    let values = f.values().iter().map(|v| if v.norm() >= cut { *v } else { C64::new(0.0, 0.0) }).collect();
    Ok(PlaneData::from_raw(*f.grid(), f.wavenumber(), values))
}

/// Separable three-tap Gaussian filter with replicated edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFilter {
    pub sigma_cells: f64,
}

impl Default for GaussianFilter {
    fn default() -> Self {
        Self { sigma_cells: 0.65 }
    }
}

impl GaussianFilter {
    /// Normalized taps `[w, 1 - 2w, w]`.
    pub fn taps(&self) -> [f64; 3] {
        let side = (-1.0 / (2.0 * self.sigma_cells * self.sigma_cells)).exp();
        let s = 1.0 + 2.0 * side;
        [side / s, 1.0 / s, side / s]
    }

    /// Filters a flat x-fastest array with the given axis lengths in place.
    pub fn apply<T>(&self, data: &mut [T], dims: &[usize])
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T>,
    {
        let [a, b, c] = self.taps();
        let mut stride = 1;
        let mut line: Vec<T> = Vec::new();
        for &n in dims {
            if n > 1 {
                let block = stride * n;
                for base in (0..data.len()).step_by(block) {
                    for off in 0..stride {
                        let start = base + off;
                        line.clear();
                        line.extend((0..n).map(|t| data[start + t * stride]));
                        for t in 0..n {
                            let l = line[t.saturating_sub(1)];
                            let r = line[(t + 1).min(n - 1)];
                            data[start + t * stride] = l * a + line[t] * b + r * c;
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

pub trait Smooth {
    fn smoothed(&self, filter: &GaussianFilter) -> Self;
}

impl Smooth for PlaneData {
    fn smoothed(&self, filter: &GaussianFilter) -> Self {
        let mut v = self.values().to_vec();
        filter.apply(&mut v, &self.grid().counts());
        PlaneData::from_raw(*self.grid(), self.wavenumber(), v)
    }
}

impl Smooth for ComplexVolume {
    fn smoothed(&self, filter: &GaussianFilter) -> Self {
        let mut v = self.values().to_vec();
        filter.apply(&mut v, &self.grid().counts());
        ComplexVolume::from_raw(*self.grid(), v)
    }
}

/// Default-filter smoothing of a plane or a volume.
pub fn gaussian_smooth<T: Smooth>(x: &T) -> T {
    x.smoothed(&GaussianFilter::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScanConfig {
    pub z_min: f64,
    pub z_max: f64,
    pub step: f64,
}

impl Default for ZScanConfig {
    fn default() -> Self {
        Self { z_min: -3.5, z_max: 3.5, step: 0.1 }
    }
}

impl ZScanConfig {
    pub fn planes(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.z_min.is_finite() && self.z_max.is_finite() && self.z_max >= self.z_min) {
            return Err(Error::invalid("z-scan range or step invalid"));
        }
        let n = ((self.z_max - self.z_min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.z_min + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZScan {
    pub z_star: f64,
    /// `(z, max |f|)` for every scanned plane.
    pub curve: Vec<(f64, f64)>,
}

/// Plane of strongest back-propagated response. Ties go to the plane nearest
/// the measurement plane.
pub fn estimate_z_star(
    plane: &PlaneData,
    scan: &ZScanConfig,
    conv: WaveConvention,
    prop: &PropagationConfig,
) -> Result<ZScan> {
    let zs = scan.planes()?;
    let z_meas = plane.grid().z_level();
    if zs.iter().any(|&z| z == z_meas) {
        return Err(Error::invalid("z-scan includes the measurement plane"));
    }
    let spectrum = forward_transform_padded(plane, prop.padding.max(1));
    let curve: Vec<(f64, f64)> = zs
        .iter()
        .map(|&z| (z, inverse_transform(&spectrum.propagate(z, conv)).max_modulus()))
        .collect();
    let top = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    let bottom = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    if !(top > 0.0) || top - bottom <= 1e-12 * top {
        return Err(Error::FlatResponse("back-propagated maxima do not vary with z".into()));
    }
    let tol = 1e-12 * top;
    let z_star = curve
        .iter()
        .filter(|c| c.1 >= top - tol)
        .min_by(|a, b| (a.0 - z_meas).abs().total_cmp(&(b.0 - z_meas).abs()))
        .unwrap()
        .0;
    Ok(ZScan { z_star, curve })
}

/// Transverse target region `Omega_T` on the propagated plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFootprint {
    pub grid: Grid2D,
    pub mask: Vec<bool>,
    pub z_star: f64,
}

impl TargetFootprint {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn centroid(&self) -> Option<[f64; 2]> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        let mut c = [0.0; 2];
        for (p, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let x = self.grid.node_at(p);
            c[0] += x[0];
            c[1] += x[1];
        }
        Some([c[0] / n as f64, c[1] / n as f64])
    }

    /// The mask on another lattice: the indicator is interpolated bilinearly
    /// and nodes where it reaches 1/2 are kept. Points outside this
    /// footprint's rectangle are outside the mask.
    pub fn on_grid(&self, target: &Grid2D) -> Vec<bool> {
        let indicator: Vec<C64> = self.mask.iter().map(|&m| C64::new(if m { 1.0 } else { 0.0 }, 0.0)).collect();
        let plane = PlaneData::from_raw(self.grid, 1.0, indicator);
        resample_plane(&plane, target).values().iter().map(|v| v.re >= 0.5 - 1e-12).collect()
    }
}

/// Nodes where `|f| > threshold max |f|` (strict).
pub fn target_footprint(f_smooth: &PlaneData, threshold: f64) -> Result<TargetFootprint> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid(format!("footprint threshold {threshold} outside (0, 1]")));
    }
    let m = f_smooth.max_modulus();
    if m == 0.0 {
        return Err(Error::FlatResponse("footprint of an all-zero plane".into()));
    }
    let mask = f_smooth.values().iter().map(|v| v.norm() > threshold * m).collect();
    Ok(TargetFootprint { grid: *f_smooth.grid(), mask, z_star: f_smooth.grid().z_level() })
}

/// Bilinear interpolation of `p` onto `target` (whose level is kept). Nodes
/// outside the source rectangle receive zero.
pub fn resample_plane(p: &PlaneData, target: &Grid2D) -> PlaneData {
    let g = p.grid();
    let o = g.origin();
    let h = g.spacing();
    let [nx, ny] = g.counts();
    let values = (0..target.len())
        .map(|q| {
            let [x, y] = target.node_at(q);
            let s = (x - o[0]) / h[0];
            let t = (y - o[1]) / h[1];
            let eps = 1e-9;
            if s < -eps || t < -eps || s > (nx - 1) as f64 + eps || t > (ny - 1) as f64 + eps {
                return C64::new(0.0, 0.0);
            }
            let s = s.clamp(0.0, (nx - 1) as f64);
            let t = t.clamp(0.0, (ny - 1) as f64);
            let i = (s.floor() as usize).min(nx - 2);
            let j = (t.floor() as usize).min(ny - 2);
            let (a, b) = (s - i as f64, t - j as f64);
            p.get(i, j) * ((1.0 - a) * (1.0 - b))
                + p.get(i + 1, j) * (a * (1.0 - b))
                + p.get(i, j + 1) * ((1.0 - a) * b)
                + p.get(i + 1, j + 1) * (a * b)
        })
        .collect();
    PlaneData::from_raw(*target, p.wavenumber(), values)
}

/// Total field on all of `partial Omega`: `g` on the face `z = z*`, the
/// incident wave elsewhere. Interior nodes are set to zero.
pub fn complete_boundary_data(g: &PlaneData, omega: &Grid3D, k: f64, conv: WaveConvention) -> Result<ComplexVolume> {
    let face = omega.z_face(0);
    if !face.same_lattice(g.grid()) || (face.z_level() - g.grid().z_level()).abs() > 1e-9 * (1.0 + face.z_level().abs()) {
        return Err(Error::mismatch("measured plane does not coincide with the face z = z* of the domain"));
    }
    if !(k > 0.0) {
        return Err(Error::invalid("wavenumber must be positive"));
    }
    let [nx, ny, nz] = omega.counts();
    let mut values = vec![C64::new(0.0, 0.0); omega.len()];
    for l in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !omega.is_boundary(i, j, l) {
                    continue;
                }
                let p = omega.index(i, j, l);
                values[p] = if l == 0 { g.get(i, j) } else { conv.plane_wave(k, omega.coord(2, l)) };
            }
        }
    }
    ComplexVolume::new(*omega, values)
}

/// Everything the inversion needs from the raw data.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    /// Frequency with the strongest raw scattered signal, used for the z-scan.
    pub probe_index: usize,
    pub scan: ZScan,
    /// Maximum modulus per frequency after propagation to `z*`.
    pub propagated_maxima: Vec<f64>,
    pub interval: StableInterval,
    /// Truncated and smoothed data at `z*` for the frequencies of the interval.
    pub processed: MultiFrequencyData,
    pub footprint: TargetFootprint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessConfig {
    pub convention: WaveConvention,
    pub propagation: PropagationConfig,
    pub scan: ZScanConfig,
    pub stability: StabilityConfig,
    pub truncation: f64,
    pub footprint_threshold: f64,
    pub filter: GaussianFilter,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            convention: WaveConvention::Minus,
            propagation: PropagationConfig::default(),
            scan: ZScanConfig::default(),
            stability: StabilityConfig::default(),
            truncation: 0.8,
            footprint_threshold: 0.7,
            filter: GaussianFilter::default(),
        }
    }
}

/// Subtraction, z-scan, propagation, interval selection, truncation and
/// smoothing, and the footprint, in that order.
pub fn preprocess(
    total: &MultiFrequencyData,
    reference: &MultiFrequencyData,
    cfg: &PreprocessConfig,
) -> Result<Preprocessed> {
    let scattered = subtract_reference(total, reference)?;
    let raw = scattered.max_moduli();
    let probe_index = raw
        .iter()
        .enumerate()
        .fold(0, |best, (i, &m)| if m > raw[best] { i } else { best });
    if raw[probe_index] == 0.0 {
        return Err(Error::FlatResponse("target and reference data coincide".into()));
    }
    let scan = estimate_z_star(&scattered.planes[probe_index], &cfg.scan, cfg.convention, &cfg.propagation)?;
    let propagated = propagate_all(&scattered, scan.z_star, cfg.convention, &cfg.propagation)?;
    let interval = select_stable_interval(&propagated, &cfg.stability)?;
    let selected = propagated.slice(interval.start..=interval.end);
    let processed = selected.map_planes(|p| Ok(truncate_plane(p, cfg.truncation)?.smoothed(&cfg.filter)))?;
    let footprint = target_footprint(&processed.planes[interval.optimal - interval.start], cfg.footprint_threshold)?;
    Ok(Preprocessed {
        probe_index,
        scan,
        propagated_maxima: propagated.max_moduli(),
        interval,
        processed,
        footprint,
    })
}
