//! The globally convergent reconstruction: tail initialization, the sweep
//! over the wavenumber partition with inner iterations, coefficient
//! truncation and the stopping rules.

use crate::elliptic::{divergence, gradient, laplacian, solve_convection_diffusion, solve_poisson, SolveStats};
use crate::error::{Error, Result};
use crate::forward::{LsConfig, LsSolver};
use crate::grid::{Coefficient, ComplexVolume, Grid3D, WaveConvention, WavenumberPartition, C64, C_MAX_DEFAULT};
use crate::krylov::GmresConfig;
use crate::preprocess::{complete_boundary_data, resample_plane, GaussianFilter, MultiFrequencyData, TargetFootprint};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Completed total-field data on `partial Omega` at every partition node.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    partition: WavenumberPartition,
    fields: Vec<ComplexVolume>,
}

impl BoundaryData {
    /// `fields[n]` holds `g(., k_n)` on the boundary nodes; interior values are ignored.
    pub fn new(partition: WavenumberPartition, fields: Vec<ComplexVolume>) -> Result<Self> {
        if fields.len() != partition.count() + 1 {
            return Err(Error::mismatch(format!(
                "{} boundary fields for {} partition nodes",
                fields.len(),
                partition.count() + 1
            )));
        }
        let g = *fields[0].grid();
        if g.counts().iter().any(|&n| n < 3) {
            return Err(Error::invalid("the domain grid needs at least 3 nodes per axis"));
        }
        if fields.iter().any(|f| f.grid() != &g) {
            return Err(Error::mismatch("boundary fields must share one grid"));
        }
        Ok(Self { partition, fields })
    }

    /// Incident-only data: what a target-free scene produces.
    pub fn incident(omega: &Grid3D, partition: WavenumberPartition, conv: WaveConvention) -> Result<Self> {
        let fields = partition
            .nodes()
            .iter()
            .map(|&k| ComplexVolume::from_fn(*omega, |x| conv.plane_wave(k, x[2])))
            .collect();
        Self::new(partition, fields)
    }

    /// Interpolates processed scattered planes (at `z*`) linearly in `k` onto
    /// the partition, resamples them onto the face `z = z*` of `omega`, adds
    /// the incident wave and completes the data on the other faces.
    pub fn from_planes(
        scattered: &MultiFrequencyData,
        omega: &Grid3D,
        partition: WavenumberPartition,
        conv: WaveConvention,
    ) -> Result<Self> {
        let ks = scattered.wavenumbers();
        let face = omega.z_face(0);
        let z_star = face.z_level();
        let slack = 1e-9 * partition.k_max();
        let mut fields = Vec::with_capacity(partition.count() + 1);
        for k in partition.nodes() {
            if k < ks[0] - slack || k > ks[ks.len() - 1] + slack {
                return Err(Error::invalid(format!(
                    "partition node k = {k} outside the data range [{}, {}]",
                    ks[0],
                    ks[ks.len() - 1]
                )));
            }
            let j = ks.partition_point(|&kk| kk <= k).clamp(1, ks.len().max(2) - 1);
            let planes = scattered.planes();
            let values: Vec<C64> = if ks.len() == 1 {
                planes[0].values().to_vec()
            } else {
                let t = ((k - ks[j - 1]) / (ks[j] - ks[j - 1])).clamp(0.0, 1.0);
                planes[j - 1].values().iter().zip(planes[j].values()).map(|(a, b)| a * (1.0 - t) + b * t).collect()
            };
            let f = crate::grid::PlaneData::new(*planes[0].grid(), k, values)?;
            let on_face = resample_plane(&f, &face);
            let incident = conv.plane_wave(k, z_star);
            let g = crate::grid::PlaneData::from_raw(face, k, on_face.values().iter().map(|v| v + incident).collect());
            fields.push(complete_boundary_data(&g, omega, k, conv)?);
        }
        Self::new(partition, fields)
    }

    pub fn grid(&self) -> &Grid3D {
        self.fields[0].grid()
    }

    pub fn partition(&self) -> &WavenumberPartition {
        &self.partition
    }

    pub fn field(&self, n: usize) -> &ComplexVolume {
        &self.fields[n]
    }
}

fn boundary_nodes(grid: &Grid3D) -> impl Iterator<Item = (usize, [usize; 3])> + '_ {
    (0..grid.len()).filter_map(move |p| {
        let [i, j, l] = grid.unravel(p);
        grid.is_boundary(i, j, l).then_some((p, [i, j, l]))
    })
}

/// Finite-difference rule for `psi = d_k g / g` between partition nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QBoundaryRule {
    /// `(g(k_n) - g(k_{n+1})) / (h g(k_n))`.
    Quotient,
    /// `log(g(k_n) / g(k_{n+1})) / h`, exact on `exp(±ikz)`.
    #[default]
    Logarithmic,
}

/// Dirichlet data of `q_n`: `(g(k_n) - g(k_{n+1})) / (h g(k_n))` on the
/// boundary, zero inside.
pub fn boundary_q(data: &BoundaryData, n: usize) -> Result<ComplexVolume> {
    boundary_q_with(data, n, QBoundaryRule::Quotient)
}

pub fn boundary_q_with(data: &BoundaryData, n: usize, rule: QBoundaryRule) -> Result<ComplexVolume> {
    let big_n = data.partition.count();
    if n >= big_n {
        return Err(Error::invalid(format!("boundary_q needs k_(n+1); n = {n} but N = {big_n}")));
    }
    let h = data.partition.step();
    let grid = *data.grid();
    let a = data.fields[n].values();
    let b = data.fields[n + 1].values();
    let scale = a.iter().chain(b).map(|v| v.norm()).fold(0.0, f64::max);
    let mut out = vec![ZERO; grid.len()];
    for (p, idx) in boundary_nodes(&grid) {
        let tiny = |v: C64| !(v.norm() > 1e-12 * scale);
        if tiny(a[p]) || (rule == QBoundaryRule::Logarithmic && tiny(b[p])) {
            return Err(Error::Vanishing { what: "boundary data", index: idx, position: grid.node_at(p) });
        }
        out[p] = match rule {
            QBoundaryRule::Quotient => (a[p] - b[p]) / (h * a[p]),
            QBoundaryRule::Logarithmic => (a[p] / b[p]).ln() / h,
        };
    }
    ComplexVolume::new(grid, out)
}

/// Approximation of `grad V` with its divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct TailField {
    pub grad: [ComplexVolume; 3],
    pub div: ComplexVolume,
}

impl TailField {
    pub fn from_gradient(grid: &Grid3D, grad: [Vec<C64>; 3]) -> Result<Self> {
        let div = divergence(grid, &grad)?;
        let [gx, gy, gz] = grad;
        Ok(Self {
            grad: [ComplexVolume::new(*grid, gx)?, ComplexVolume::new(*grid, gy)?, ComplexVolume::new(*grid, gz)?],
            div: ComplexVolume::new(*grid, div)?,
        })
    }

    /// Tail of the incident wave, `grad V = (0, 0, ±ik)`.
    pub fn incident(grid: &Grid3D, k: f64, conv: WaveConvention) -> Self {
        let gz = C64::new(0.0, conv.sign() * k);
        Self {
            grad: [ComplexVolume::zeros(*grid), ComplexVolume::zeros(*grid), ComplexVolume::from_fn(*grid, |_| gz)],
            div: ComplexVolume::zeros(*grid),
        }
    }

    pub fn grid(&self) -> &Grid3D {
        self.div.grid()
    }

    fn components(&self) -> [&[C64]; 3] {
        [self.grad[0].values(), self.grad[1].values(), self.grad[2].values()]
    }
}

/// First tail: every component of `grad V` is the harmonic extension of the
/// boundary vector `R`.
///
/// On the measured face `R` is the gradient of `V = kbar q(., kbar)` extended
/// harmonically from its boundary trace; on the other faces it is the
/// incident value `(0, 0, ±i kbar)`.
pub fn initial_tail(data: &BoundaryData, conv: WaveConvention, rule: QBoundaryRule) -> Result<TailField> {
    let grid = *data.grid();
    let k_bar = data.partition.k_max();
    let psi0 = boundary_q_with(data, 0, rule)?;
    let v_trace: Vec<C64> = psi0.values().iter().map(|q| q * k_bar).collect();
    let zero = vec![ZERO; grid.len()];
    let v_ext = solve_poisson(&grid, 1.0, &zero, &v_trace)?;
    let grad_v = gradient(&grid, &v_ext)?;
    let background = [ZERO, ZERO, C64::new(0.0, conv.sign() * k_bar)];
    let mut comps: [Vec<C64>; 3] = [zero.clone(), zero.clone(), zero.clone()];
    for a in 0..3 {
        let mut r = vec![ZERO; grid.len()];
        for (p, [_, _, l]) in boundary_nodes(&grid) {
            r[p] = if l == 0 { grad_v[a][p] } else { background[a] };
        }
        comps[a] = solve_poisson(&grid, 1.0, &zero, &r)?;
    }
    TailField::from_gradient(&grid, comps)
}

/// Running sum `Q_{n-1} = h sum_{j<n} q_j` with its gradient and Laplacian.
#[derive(Debug, Clone)]
pub struct QSequence {
    h: f64,
    grid: Grid3D,
    sum: Vec<C64>,
    grad: [Vec<C64>; 3],
    lap: Vec<C64>,
    terms: usize,
}

impl QSequence {
    /// `Q_0 = h q_0 = 0`.
    pub fn new(grid: &Grid3D, h: f64) -> Self {
        let z = vec![ZERO; grid.len()];
        Self { h, grid: *grid, sum: z.clone(), grad: [z.clone(), z.clone(), z.clone()], lap: z, terms: 0 }
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Number of accumulated `q_j`.
    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn values(&self) -> &[C64] {
        &self.sum
    }

    pub fn gradient(&self) -> &[Vec<C64>; 3] {
        &self.grad
    }

    pub fn laplacian(&self) -> &[C64] {
        &self.lap
    }

    /// `Q_n = Q_{n-1} + h q_n`.
    pub fn push(&mut self, q: &ComplexVolume) -> Result<()> {
        if q.grid() != &self.grid {
            return Err(Error::mismatch("q lives on a different grid"));
        }
        let g = gradient(&self.grid, q.values())?;
        let l = laplacian(&self.grid, q.values())?;
        let h = self.h;
        self.sum.iter_mut().zip(q.values()).for_each(|(s, v)| *s += h * v);
        for a in 0..3 {
            self.grad[a].iter_mut().zip(&g[a]).for_each(|(s, v)| *s += h * v);
        }
        self.lap.iter_mut().zip(&l).for_each(|(s, v)| *s += h * v);
        self.terms += 1;
        Ok(())
    }
}

/// Solves `(k/2) Lap q + k grad q . (grad V - grad Q) = -Lap Q + Lap V + (grad V - grad Q)^2`
/// with Dirichlet data `boundary`.
pub fn solve_q_bvp(
    tail: &TailField,
    q_prev: &QSequence,
    k_n: f64,
    boundary: &ComplexVolume,
    cfg: &GmresConfig,
    accept: f64,
) -> Result<(ComplexVolume, SolveStats)> {
    let grid = *tail.grid();
    if boundary.grid() != &grid || q_prev.grid != grid {
        return Err(Error::mismatch("q problem inputs live on different grids"));
    }
    if !(k_n > 0.0) {
        return Err(Error::invalid("wavenumber must be positive"));
    }
    let gv = tail.components();
    let w: [Vec<C64>; 3] = std::array::from_fn(|a| gv[a].iter().zip(&q_prev.grad[a]).map(|(v, q)| v - q).collect());
    let source: Vec<C64> = (0..grid.len())
        .map(|p| {
            let w2 = w[0][p] * w[0][p] + w[1][p] * w[1][p] + w[2][p] * w[2][p];
            (tail.div.values()[p] - q_prev.lap[p] + w2) / k_n
        })
        .collect();
    let (q, stats) = solve_convection_diffusion(&grid, 0.5, &w, &source, boundary.values(), cfg, accept)?;
    Ok((ComplexVolume::new(grid, q)?, stats))
}

/// `grad v`, `Lap v` and the untruncated coefficient of one inner iteration.
#[derive(Debug, Clone)]
pub struct VUpdate {
    pub grad_v: [ComplexVolume; 3],
    pub lap_v: ComplexVolume,
    pub raw_c: ComplexVolume,
}

/// `grad v = -(h grad q + grad Q) + grad V`, same for `Lap v`, and
/// `c = -(Lap v + grad v . grad v) / k_n^2`.
pub fn update_v_and_c(q: &ComplexVolume, q_prev: &QSequence, tail: &TailField, k_n: f64) -> Result<VUpdate> {
    let grid = *tail.grid();
    if q.grid() != &grid || q_prev.grid != grid {
        return Err(Error::mismatch("coefficient update inputs live on different grids"));
    }
    let h = q_prev.h;
    let gq = gradient(&grid, q.values())?;
    let lq = laplacian(&grid, q.values())?;
    let gv = tail.components();
    let grad: [Vec<C64>; 3] =
        std::array::from_fn(|a| (0..grid.len()).map(|p| gv[a][p] - h * gq[a][p] - q_prev.grad[a][p]).collect());
    let lap: Vec<C64> = (0..grid.len()).map(|p| tail.div.values()[p] - h * lq[p] - q_prev.lap[p]).collect();
    let inv = 1.0 / (k_n * k_n);
    let raw: Vec<C64> = (0..grid.len())
        .map(|p| -(lap[p] + grad[0][p] * grad[0][p] + grad[1][p] * grad[1][p] + grad[2][p] * grad[2][p]) * inv)
        .collect();
    let [g0, g1, g2] = grad;
    Ok(VUpdate {
        grad_v: [ComplexVolume::new(grid, g0)?, ComplexVolume::new(grid, g1)?, ComplexVolume::new(grid, g2)?],
        lap_v: ComplexVolume::new(grid, lap)?,
        raw_c: ComplexVolume::new(grid, raw)?,
    })
}

/// Where the target is searched: the footprint columns over `z* < z < z_top`.
pub fn search_region(grid: &Grid3D, footprint: &TargetFootprint, z_top: f64) -> Vec<bool> {
    let mask = footprint.on_grid(&grid.z_face(0));
    let z_star = footprint.z_star;
    (0..grid.len())
        .map(|p| {
            let [i, j, l] = grid.unravel(p);
            let z = grid.coord(2, l);
            mask[i + grid.counts()[0] * j] && z > z_star && z < z_top
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub z_top: f64,
    pub c_max: f64,
    pub filter: GaussianFilter,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { z_top: 1.0, c_max: C_MAX_DEFAULT, filter: GaussianFilter::default() }
    }
}

/// `max(|c|, 1)` (capped at `c_max`) inside the search region, 1 outside,
/// smoothed, and reset to 1 outside the region.
pub fn truncate_c(raw: &ComplexVolume, footprint: &TargetFootprint, t: &Truncation) -> Result<Coefficient> {
    if !(t.c_max >= 1.0) {
        return Err(Error::invalid("c_max must be at least 1"));
    }
    let grid = *raw.grid();
    let region = search_region(&grid, footprint, t.z_top);
    let mut c: Vec<f64> = raw
        .values()
        .iter()
        .zip(&region)
        .map(|(v, &inside)| if inside { v.norm().clamp(1.0, t.c_max) } else { 1.0 })
        .collect();
    t.filter.apply(&mut c, &grid.counts());
    for (v, &inside) in c.iter_mut().zip(&region) {
        *v = if inside { v.clamp(1.0, t.c_max) } else { 1.0 };
    }
    Coefficient::with_bound(grid, c, t.c_max)
}

/// `grad u / u` by differences of `log u`, which is exact on plane waves.
/// Nodes where `|u|` drops below `guard * max |u|`, and nodes whose stencil
/// touches one, take the value of the nearest unaffected node. Returns the
/// gradient and the number of affected nodes.
pub fn log_gradient(u: &ComplexVolume, guard: f64) -> Result<([Vec<C64>; 3], usize)> {
    let grid = *u.grid();
    if grid.counts().iter().any(|&n| n < 3) {
        return Err(Error::invalid("log gradient needs at least 3 nodes per axis"));
    }
    let f = u.values();
    let eps = guard * u.max_modulus();
    let small: Vec<bool> = f.iter().map(|v| !(v.norm() > eps)).collect();
    let counts = grid.counts();
    let spacing = grid.spacing();
    let strides = [1, counts[0], counts[0] * counts[1]];
    let mut bad = vec![false; grid.len()];
    let mut out: [Vec<C64>; 3] = std::array::from_fn(|_| vec![ZERO; grid.len()]);
    for p in 0..grid.len() {
        let idx = grid.unravel(p);
        for a in 0..3 {
            let (s, h, t, n) = (strides[a], spacing[a], idx[a], counts[a]);
            // Phase increments are taken one cell at a time so that they stay
            // on the principal branch.
            let step = |a: usize, b: usize| (f[b] / f[a]).ln();
            let (nodes, val) = if t == 0 {
                let l1 = step(p, p + s);
                ([p, p + s, p + 2 * s], (3.0 * l1 - step(p + s, p + 2 * s)) / (2.0 * h))
            } else if t == n - 1 {
                let l1 = step(p - s, p);
                ([p, p - s, p - 2 * s], (3.0 * l1 - step(p - 2 * s, p - s)) / (2.0 * h))
            } else {
                ([p, p + s, p - s], (step(p - s, p) + step(p, p + s)) / (2.0 * h))
            };
            if nodes.iter().any(|&q| small[q]) || !val.is_finite() {
                bad[p] = true;
            } else {
                out[a][p] = val;
            }
        }
    }
    let affected = bad.iter().filter(|&&b| b).count();
    if affected == grid.len() {
        return Err(Error::Vanishing { what: "total field", index: [0; 3], position: grid.node_at(0) });
    }
    if affected > 0 {
        for p in (0..grid.len()).filter(|&p| bad[p]) {
            let src = nearest_good(&grid, &bad, p);
            for comp in out.iter_mut() {
                comp[p] = comp[src];
            }
        }
    }
    Ok((out, affected))
}

fn nearest_good(grid: &Grid3D, bad: &[bool], p: usize) -> usize {
    let [i, j, l] = grid.unravel(p).map(|v| v as isize);
    let n = grid.counts().map(|v| v as isize);
    let mut best: Option<(isize, usize)> = None;
    for r in 1..n.iter().copied().max().unwrap() {
        for dl in -r..=r {
            for dj in -r..=r {
                for di in -r..=r {
                    if di.abs().max(dj.abs()).max(dl.abs()) != r {
                        continue;
                    }
                    let (a, b, c) = (i + di, j + dj, l + dl);
                    if a < 0 || b < 0 || c < 0 || a >= n[0] || b >= n[1] || c >= n[2] {
                        continue;
                    }
                    let q = grid.index(a as usize, b as usize, c as usize);
                    let d2 = di * di + dj * dj + dl * dl;
                    if !bad[q] && best.is_none_or(|(bd, bq)| d2 < bd || (d2 == bd && q < bq)) {
                        best = Some((d2, q));
                    }
                }
            }
        }
        if let Some((_, q)) = best {
            return q;
        }
    }
    unreachable!("a good node exists")
}

/// Result of one tail update.
#[derive(Debug, Clone)]
pub struct TailUpdate {
    pub tail: TailField,
    pub field: ComplexVolume,
    pub ls_iterations: usize,
    pub ls_residual: f64,
    pub min_modulus: f64,
    pub guarded: usize,
}

/// Solves the forward problem at `kbar` for `c` and returns `grad u / u`.
pub fn update_tail(c: &Coefficient, solver: &mut LsSolver, guess: Option<&ComplexVolume>, guard: f64) -> Result<TailUpdate> {
    let sol = solver.solve_from(c, guess)?;
    let (grad, guarded) = log_gradient(&sol.field, guard)?;
    let tail = TailField::from_gradient(c.grid(), grad)?;
    Ok(TailUpdate {
        tail,
        min_modulus: sol.min_modulus,
        ls_iterations: sol.iterations,
        ls_residual: sol.residual,
        field: sol.field,
        guarded,
    })
}

/// Relative L2 difference `|a - b| / |b|`.
pub fn relative_error(a: &Coefficient, b: &Coefficient) -> f64 {
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.values().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRules {
    /// Inner iterations stop once `e_{n,2}` falls below this.
    pub inner_tol: f64,
    pub max_inner: usize,
    /// Threshold for the three consecutive outer errors.
    pub outer_tol: f64,
    pub max_outer: usize,
}

impl Default for StoppingRules {
    fn default() -> Self {
        Self { inner_tol: 1e-6, max_inner: 3, outer_tol: 5e-4, max_outer: 5 }
    }
}

impl StoppingRules {
    /// Whether the inner loop ends after iteration `i`, given `e_{n,2}` once known.
    pub fn inner_done(&self, i: usize, e_n2: Option<f64>) -> bool {
        i >= self.max_inner || (i == 2 && e_n2.is_some_and(|e| e < self.inner_tol))
    }
}

/// First position of three consecutive values `<= tol`.
pub fn three_below(seq: &[f64], tol: f64) -> Option<usize> {
    seq.windows(3).position(|w| w.iter().all(|&e| e <= tol))
}

/// One element of the error sequence, tied to the coefficient it measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEntry {
    pub n: usize,
    pub i: usize,
    pub value: f64,
    /// `true` for the bridge error between the last coefficient of sweep `n - 1`
    /// and the first of sweep `n`.
    pub bridge: bool,
}

/// The append-only error sequence with the outer stopping test.
#[derive(Debug, Clone, Default)]
pub struct StoppingState {
    pub rules: StoppingRules,
    entries: Vec<ErrorEntry>,
}

impl StoppingState {
    pub fn new(rules: StoppingRules) -> Self {
        Self { rules, entries: Vec::new() }
    }

    pub fn entries(&self) -> &[ErrorEntry] {
        &self.entries
    }

    pub fn push(&mut self, entry: ErrorEntry) -> Result<()> {
        if !(entry.value >= 0.0) {
            return Err(Error::invalid("relative errors are nonnegative"));
        }
        if let Some(last) = self.entries.last() {
            if (entry.n, entry.i) <= (last.n, last.i) {
                return Err(Error::invalid("error entries must be appended in order"));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Test after sweep `n`: the sequence of sweeps `n - 1` and `n` holds
    /// three consecutive errors `<= outer_tol`. Returns the three entries.
    pub fn outer_done(&self, n: usize) -> Option<[ErrorEntry; 3]> {
        if n < 2 {
            return None;
        }
        let seq: Vec<ErrorEntry> =
            self.entries.iter().filter(|e| (e.n == n - 1 && !e.bridge) || e.n == n).copied().collect();
        let values: Vec<f64> = seq.iter().map(|e| e.value).collect();
        three_below(&values, self.rules.outer_tol).map(|s| [seq[s], seq[s + 1], seq[s + 2]])
    }

    /// Three consecutive entries of the whole sequence with the smallest
    /// maximum, for runs that hit the cap.
    pub fn best_window(&self) -> Option<[ErrorEntry; 3]> {
        self.entries
            .windows(3)
            .min_by(|a, b| {
                let ma = a.iter().map(|e| e.value).fold(0.0, f64::max);
                let mb = b.iter().map(|e| e.value).fold(0.0, f64::max);
                ma.total_cmp(&mb)
            })
            .map(|w| [w[0], w[1], w[2]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub convention: WaveConvention,
    pub ls: LsConfig,
    pub q_solver: GmresConfig,
    /// Stalled q solves with a relative residual up to this are kept.
    pub q_accept: f64,
    pub stopping: StoppingRules,
    pub truncation: Truncation,
    /// Relative modulus below which `u` counts as vanishing in `grad u / u`.
    pub guard: f64,
    pub q_boundary: QBoundaryRule,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            convention: WaveConvention::Minus,
            ls: LsConfig::default(),
            q_solver: GmresConfig { tol: 1e-8, max_iter: 3000, restart: 100 },
            q_accept: 1e-3,
            stopping: StoppingRules::default(),
            truncation: Truncation::default(),
            guard: 1e-6,
            q_boundary: QBoundaryRule::default(),
        }
    }
}

/// One record per inner iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub i: usize,
    pub k: f64,
    /// `e_{n,i}` for `i >= 2`, the bridge error for `i = 1, n >= 2`.
    pub error: Option<f64>,
    pub q_iterations: usize,
    pub q_residual: f64,
    pub q_converged: bool,
    pub ls_iterations: usize,
    pub ls_residual: f64,
    pub max_c: f64,
    pub min_u: f64,
    pub guarded: usize,
    /// Largest `|Im c|` in the search region before truncation.
    pub max_imag_c: f64,
}

#[derive(Debug, Clone)]
pub struct InversionResult {
    pub coefficient: Coefficient,
    /// Reported dielectric constant, the maximum of `coefficient`.
    pub max_c: f64,
    pub converged: bool,
    /// Last completed sweep.
    pub sweeps: usize,
    /// `(n, i)` of the coefficients averaged into the result.
    pub averaged: Vec<(usize, usize)>,
    pub errors: Vec<ErrorEntry>,
    pub records: Vec<IterationRecord>,
}

fn average(cs: &[&Coefficient], c_max: f64) -> Result<Coefficient> {
    let grid = *cs[0].grid();
    let m = cs.len() as f64;
    let v = (0..grid.len()).map(|p| cs.iter().map(|c| c.values()[p]).sum::<f64>() / m).collect();
    Coefficient::with_bound(grid, v, c_max)
}

/// Runs the sweeps `n = 1, ..., min(N - 1, max_outer)`.
///
/// Converged runs return the average of the three coefficients that met the
/// outer rule. Otherwise the best window of three consecutive coefficients
/// is averaged and `converged` is false.
pub fn run_inversion(data: &BoundaryData, footprint: &TargetFootprint, cfg: &InversionConfig) -> Result<InversionResult> {
    let tail = initial_tail(data, cfg.convention, cfg.q_boundary)?;
    run_inversion_from(data, footprint, cfg, tail)
}

/// [`run_inversion`] with a given first tail.
pub fn run_inversion_from(
    data: &BoundaryData,
    footprint: &TargetFootprint,
    cfg: &InversionConfig,
    initial: TailField,
) -> Result<InversionResult> {
    let grid = *data.grid();
    if initial.grid() != &grid {
        return Err(Error::mismatch("initial tail lives on a different grid"));
    }
    let partition = *data.partition();
    if partition.count() < 2 {
        return Err(Error::invalid("the partition needs at least two steps"));
    }
    if (footprint.z_star - grid.origin()[2]).abs() > 1e-9 * (1.0 + footprint.z_star.abs()) {
        return Err(Error::mismatch("footprint plane differs from the lower face of the domain"));
    }
    let conv = cfg.convention;
    let k_bar = partition.k_max();
    let h = partition.step();
    let mut solver = LsSolver::new(&grid, k_bar, conv, cfg.ls)?;
    let mut tail = initial;
    let mut q_sum = QSequence::new(&grid, h);
    let mut state = StoppingState::new(cfg.stopping);
    let mut records = Vec::new();
    let mut coefficients: Vec<((usize, usize), Coefficient)> = Vec::new();
    let mut u_guess: Option<ComplexVolume> = None;
    let region = search_region(&grid, footprint, cfg.truncation.z_top);
    let last = (partition.count() - 1).min(cfg.stopping.max_outer);
    let mut stop: Option<[ErrorEntry; 3]> = None;
    let mut sweeps = 0;

    for n in 1..=last {
        let k_n = partition.node(n);
        let wrap = |i: usize| move |e: Error| Error::Sweep { n, i, source: Box::new(e) };
        let bq = boundary_q_with(data, n, cfg.q_boundary).map_err(wrap(0))?;
        let mut tail_i = tail.clone();
        let mut q_last = None;
        let mut e_n2 = None;
        for i in 1..=cfg.stopping.max_inner.max(1) {
            let (q, qs) = solve_q_bvp(&tail_i, &q_sum, k_n, &bq, &cfg.q_solver, cfg.q_accept).map_err(wrap(i))?;
            let upd = update_v_and_c(&q, &q_sum, &tail_i, k_n).map_err(wrap(i))?;
            let c = truncate_c(&upd.raw_c, footprint, &cfg.truncation).map_err(wrap(i))?;
            let max_imag_c = upd
                .raw_c
                .values()
                .iter()
                .zip(&region)
                .filter(|(_, &r)| r)
                .map(|(v, _)| v.im.abs())
                .fold(0.0, f64::max);
            let error = match coefficients.last() {
                Some((_, prev)) if i >= 2 || n >= 2 => Some(relative_error(&c, prev)),
                _ => None,
            };
            if let Some(e) = error {
                state.push(ErrorEntry { n, i, value: e, bridge: i == 1 }).map_err(wrap(i))?;
                if i == 2 {
                    e_n2 = Some(e);
                }
            }
            let up = update_tail(&c, &mut solver, u_guess.as_ref(), cfg.guard).map_err(wrap(i))?;
            records.push(IterationRecord {
                n,
                i,
                k: k_n,
                error,
                q_iterations: qs.iterations,
                q_residual: qs.residual,
                q_converged: qs.converged,
                ls_iterations: up.ls_iterations,
                ls_residual: up.ls_residual,
                max_c: c.max(),
                min_u: up.min_modulus,
                guarded: up.guarded,
                max_imag_c,
            });
            log::debug!("n = {n}, i = {i}, k = {k_n:.4}, error = {error:?}, max c = {:.4}", c.max());
            coefficients.push(((n, i), c));
            tail_i = up.tail;
            u_guess = Some(up.field);
            q_last = Some(q);
            if cfg.stopping.inner_done(i, e_n2) {
                break;
            }
        }
        q_sum.push(&q_last.expect("at least one inner iteration")).map_err(wrap(0))?;
        tail = tail_i;
        sweeps = n;
        if let Some(w) = state.outer_done(n) {
            stop = Some(w);
            break;
        }
    }

    let converged = stop.is_some();
    let window = stop.or_else(|| state.best_window());
    let chosen: Vec<&((usize, usize), Coefficient)> = match window {
        Some(w) => w
            .iter()
            .map(|e| coefficients.iter().find(|(key, _)| *key == (e.n, e.i)).expect("entry has a coefficient"))
            .collect(),
        None => vec![coefficients.last().expect("at least one sweep")],
    };
    let coefficient = average(&chosen.iter().map(|(_, c)| c).collect::<Vec<_>>(), cfg.truncation.c_max)?;
    Ok(InversionResult {
        max_c: coefficient.max(),
        coefficient,
        converged,
        sweeps,
        averaged: chosen.iter().map(|(key, _)| *key).collect(),
        errors: state.entries().to_vec(),
        records,
    })
}
