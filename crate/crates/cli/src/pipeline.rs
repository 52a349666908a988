//! The four batch steps and the standalone theorem check. Every step echoes
//! its configuration into its output directory and writes nothing that
//! depends on wall-clock time.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hcip_core::forward::{scattered_on_plane, LsSolver};
use hcip_core::inversion::{run_inversion, BoundaryData, InversionResult};
use hcip_core::preprocess::{preprocess as run_preprocess, subtract_reference, MultiFrequencyData, StableInterval, TargetFootprint};
use hcip_core::propagation::TheoremSetup;
use hcip_core::{ghz_to_k, Coefficient, Grid2D, PlaneData, C64};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{Convention, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, Volume};
use crate::phantom::Phantom;
use crate::report::{self as geom, Mesh};

pub const CONFIG_FILE: &str = "config.toml";
pub const PHANTOM_FILE: &str = "phantom.json";
pub const TARGET_FILE: &str = "target.plane";
pub const REFERENCE_FILE: &str = "reference.plane";
pub const TRUTH_FILE: &str = "truth.vtk";
pub const PROCESSED_FILE: &str = "processed.plane";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const COEFFICIENT_FILE: &str = "c.vtk";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const MESH_FILE: &str = "isosurface.obj";

fn prepare(out: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let path = out.join(CONFIG_FILE);
    std::fs::write(&path, cfg.to_toml()).map_err(CliError::io(&path))
}

/// Paths written by [`simulate`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub target: PathBuf,
    pub reference: PathBuf,
    pub truth: Option<PathBuf>,
}

/// Complex Gaussian noise of standard deviation `level * max |u_sc|` per plane.
fn add_noise(sc: &mut PlaneData, level: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    let sigma = level * sc.max_modulus() / std::f64::consts::SQRT_2;
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CliError::Config(format!("noise: {e}")))?;
    for v in sc.values_mut() {
        *v += C64::new(normal.sample(rng), normal.sample(rng));
    }
    Ok(())
}

/// Synthesizes target-present and target-absent measurements over the band.
pub fn simulate(cfg: &RunConfig, phantom: &Phantom, out: &Path) -> Result<Dataset> {
    cfg.validate()?;
    phantom.validate()?;
    if let Some((lo, hi)) = phantom.bounds() {
        let w = cfg.omega_half_width;
        if lo[0] < -w || lo[1] < -w || hi[0] > w || hi[1] > w || lo[2] <= cfg.plane_z {
            return Err(CliError::Config(format!("phantom {} does not fit the inversion domain", phantom.name)));
        }
    }
    prepare(out, cfg)?;
    io::write_json(&out.join(PHANTOM_FILE), phantom)?;
    let conv = cfg.wave_convention();
    let plane = cfg.measurement_plane()?;
    let freqs = cfg.band();
    let support = match phantom.support_grid(cfg.sim_spacing)? {
        Some(g) => Some(phantom.rasterize(&g, cfg.sim_subsamples)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut total, mut reference) = (Vec::with_capacity(freqs.len()), Vec::with_capacity(freqs.len()));
    let start = Instant::now();
    for &f in &freqs {
        let k = ghz_to_k(f).map_err(CliError::step("simulate"))?;
        let incident = conv.plane_wave(k, plane.z_level());
        let mut sc = match &support {
            Some(c) => {
                let mut solver = LsSolver::new(c.grid(), k, conv, cfg.ls()).map_err(CliError::step("simulate"))?;
                let u = solver.solve(c).map_err(CliError::step("simulate"))?;
                info!("{f:.4} GHz: LS {} iterations, residual {:.2e}", u.iterations, u.residual);
                scattered_on_plane(&u.field, c, k, conv, &plane).map_err(CliError::step("simulate"))?
            }
            None => PlaneData::zeros(plane, k).map_err(CliError::step("simulate"))?,
        };
        add_noise(&mut sc, phantom.noise, &mut rng)?;
        let tot = sc.values().iter().map(|v| v + incident).collect();
        total.push(PlaneData::new(plane, k, tot).map_err(CliError::step("simulate"))?);
        reference.push(PlaneData::from_fn(plane, k, |_| incident).map_err(CliError::step("simulate"))?);
    }
    info!("simulated {} frequencies in {:.1} s", freqs.len(), start.elapsed().as_secs_f64());
    let total = MultiFrequencyData::new(freqs.clone(), total).map_err(CliError::step("simulate"))?;
    let reference = MultiFrequencyData::new(freqs, reference).map_err(CliError::step("simulate"))?;
    let ds = Dataset { target: out.join(TARGET_FILE), reference: out.join(REFERENCE_FILE), truth: None };
    io::write_planes(&ds.target, &total)?;
    io::write_planes(&ds.reference, &reference)?;
    io::write_planes_csv(&out.join("target.csv"), &total)?;
    io::write_planes_csv(&out.join("reference.csv"), &reference)?;
    let truth = support.map(|c| Volume { grid: *c.grid(), name: "c".into(), values: c.into_values() });
    match truth {
        Some(v) => {
            let path = out.join(TRUTH_FILE);
            io::write_vtk(&path, &v)?;
            Ok(Dataset { truth: Some(path), ..ds })
        }
        None => Ok(ds),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
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

impl From<&StableInterval> for IntervalReport {
    fn from(s: &StableInterval) -> Self {
        Self {
            start: s.start,
            end: s.end,
            optimal: s.optimal,
            f_min_ghz: s.f_min_ghz,
            f_max_ghz: s.f_max_ghz,
            f_opt_ghz: s.f_opt_ghz,
            k_min: s.k_min,
            k_max: s.k_max,
            k_opt: s.k_opt,
        }
    }
}

impl IntervalReport {
    pub fn interval(&self) -> StableInterval {
        StableInterval {
            start: self.start,
            end: self.end,
            optimal: self.optimal,
            f_min_ghz: self.f_min_ghz,
            f_max_ghz: self.f_max_ghz,
            f_opt_ghz: self.f_opt_ghz,
            k_min: self.k_min,
            k_max: self.k_max,
            k_opt: self.k_opt,
        }
    }
}

/// The target footprint on the propagated-plane lattice, as node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub counts: [usize; 2],
    pub z_level: f64,
    pub nodes: Vec<usize>,
    pub centroid: Option<[f64; 2]>,
}

impl From<&TargetFootprint> for FootprintReport {
    fn from(f: &TargetFootprint) -> Self {
        Self {
            origin: f.grid.origin(),
            spacing: f.grid.spacing(),
            counts: f.grid.counts(),
            z_level: f.grid.z_level(),
            nodes: f.mask.iter().enumerate().filter(|(_, &m)| m).map(|(p, _)| p).collect(),
            centroid: f.centroid(),
        }
    }
}

impl FootprintReport {
    pub fn footprint(&self) -> Result<TargetFootprint> {
        let grid = Grid2D::new(self.origin, self.spacing, self.counts, self.z_level).map_err(CliError::step("bundle"))?;
        let mut mask = vec![false; grid.len()];
        for &p in &self.nodes {
            *mask.get_mut(p).ok_or_else(|| CliError::Config(format!("footprint node {p} outside the plane")))? = true;
        }
        Ok(TargetFootprint { grid, mask, z_star: self.z_level })
    }
}

/// Everything `preprocess` learned, apart from the processed planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub convention: Convention,
    pub frequencies_ghz: Vec<f64>,
    /// Max modulus of the scattered data on the measurement plane.
    pub raw_maxima: Vec<f64>,
    /// Max modulus after propagation to `z*`.
    pub propagated_maxima: Vec<f64>,
    pub probe_index: usize,
    pub z_star: f64,
    /// `(z, max |f|)` along the z-scan at the probe frequency.
    pub scan_curve: Vec<[f64; 2]>,
    pub interval: IntervalReport,
    pub footprint: FootprintReport,
}

/// Subtraction, propagation, interval selection, truncation, smoothing and
/// the footprint.
pub fn preprocess(cfg: &RunConfig, target: &Path, reference: &Path, out: &Path) -> Result<Bundle> {
    cfg.validate()?;
    let total = io::read_planes(target)?;
    let refd = io::read_planes(reference)?;
    let raw = subtract_reference(&total, &refd).map_err(CliError::step("subtract"))?;
    let pre = run_preprocess(&total, &refd, &cfg.preprocess()).map_err(CliError::step("preprocess"))?;
    info!(
        "z* = {:.2}, stable interval {}..={} ({:.4}-{:.4} GHz), optimal {:.4} GHz, footprint {} nodes",
        pre.scan.z_star,
        pre.interval.start,
        pre.interval.end,
        pre.interval.f_min_ghz,
        pre.interval.f_max_ghz,
        pre.interval.f_opt_ghz,
        pre.footprint.count()
    );
    prepare(out, cfg)?;
    let bundle = Bundle {
        convention: cfg.convention,
        frequencies_ghz: total.frequencies_ghz().to_vec(),
        raw_maxima: raw.max_moduli(),
        propagated_maxima: pre.propagated_maxima.clone(),
        probe_index: pre.probe_index,
        z_star: pre.scan.z_star,
        scan_curve: pre.scan.curve.iter().map(|&(z, m)| [z, m]).collect(),
        interval: (&pre.interval).into(),
        footprint: (&pre.footprint).into(),
    };
    io::write_planes(&out.join(PROCESSED_FILE), &pre.processed)?;
    io::write_json(&out.join(BUNDLE_FILE), &bundle)?;
    Ok(bundle)
}

pub fn load_bundle(dir: &Path) -> Result<(Bundle, MultiFrequencyData)> {
    Ok((io::read_json(&dir.join(BUNDLE_FILE))?, io::read_planes(&dir.join(PROCESSED_FILE))?))
}

/// One line of the diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub n: usize,
    pub i: usize,
    pub k: f64,
    pub error: Option<f64>,
    pub q_iterations: usize,
    pub q_residual: f64,
    pub q_converged: bool,
    pub ls_iterations: usize,
    pub ls_residual: f64,
    pub max_c: f64,
    pub min_abs_u: f64,
    pub guarded_nodes: usize,
    pub max_imag_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    pub c_true: f64,
    pub relative_error: f64,
    pub centre: Option<[f64; 3]>,
    pub centroid_distance: Option<f64>,
    pub centroid_within_wavelength: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub phantom: Option<String>,
    /// Reported dielectric constant.
    pub max_c: f64,
    pub argmax: [f64; 3],
    pub converged: bool,
    pub sweeps: usize,
    pub averaged: Vec<[usize; 2]>,
    pub partition_count: usize,
    pub k_min: f64,
    pub k_max: f64,
    pub z_star: f64,
    /// Free-space wavelength at the optimal frequency.
    pub wavelength: f64,
    pub isovalue: f64,
    pub support_centroid: Option<[f64; 3]>,
    pub truth: Option<TruthComparison>,
}

fn compare(summary: &Summary, phantom: &Phantom) -> TruthComparison {
    let c_true = phantom.max_c();
    let centre = phantom.centre();
    let centroid_distance = match (centre, summary.support_centroid) {
        (Some(a), Some(b)) => Some(geom::distance(a, b)),
        _ => None,
    };
    TruthComparison {
        c_true,
        relative_error: (summary.max_c - c_true).abs() / c_true,
        centre,
        centroid_distance,
        centroid_within_wavelength: centroid_distance.is_some_and(|d| d <= summary.wavelength),
    }
}

/// Runs the reconstruction on a preprocessed bundle.
pub fn invert(cfg: &RunConfig, bundle_dir: &Path, truth: Option<&Phantom>, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    let (bundle, processed) = load_bundle(bundle_dir)?;
    if bundle.convention != cfg.convention {
        warn!("bundle was preprocessed with the {:?} convention, inverting with {:?}", bundle.convention, cfg.convention);
    }
    let footprint = bundle.footprint.footprint()?;
    let interval = bundle.interval.interval();
    let omega = cfg.omega(bundle.z_star)?;
    let partition = interval.partition(cfg.partition_step).map_err(CliError::step("partition"))?;
    let data = BoundaryData::from_planes(&processed, &omega, partition, cfg.wave_convention())
        .map_err(CliError::step("boundary data"))?;
    let start = Instant::now();
    let result = run_inversion(&data, &footprint, &cfg.inversion()).map_err(CliError::step("inversion"))?;
    info!(
        "inversion: max c = {:.4}, converged = {}, {} sweeps in {:.1} s",
        result.max_c,
        result.converged,
        result.sweeps,
        start.elapsed().as_secs_f64()
    );
    let stalled = result.records.iter().filter(|r| !r.q_converged).count();
    if stalled > 0 {
        warn!("{stalled} q solves stalled above the tolerance and were accepted");
    }
    if !result.converged {
        warn!("the outer stopping rule was not met; the best window was averaged");
    }
    prepare(out, cfg)?;
    let vol = coefficient_volume(&result.coefficient);
    io::write_vtk(&out.join(COEFFICIENT_FILE), &vol)?;
    io::write_jsonl(&out.join(DIAGNOSTICS_FILE), &diagnostics(&result))?;
    let (p, _) = geom::argmax(&vol.values);
    let mut summary = Summary {
        phantom: truth.map(|t| t.name.clone()),
        max_c: result.max_c,
        argmax: omega.node_at(p),
        converged: result.converged,
        sweeps: result.sweeps,
        averaged: result.averaged.iter().map(|&(n, i)| [n, i]).collect(),
        partition_count: partition.count(),
        k_min: partition.k_min(),
        k_max: partition.k_max(),
        z_star: bundle.z_star,
        wavelength: 2.0 * std::f64::consts::PI / interval.k_opt,
        isovalue: cfg.isovalue,
        support_centroid: geom::support_centroid(&vol, cfg.isovalue),
        truth: None,
    };
    if let Some(t) = truth {
        summary.truth = Some(compare(&summary, t));
        io::write_json(&out.join(PHANTOM_FILE), t)?;
    }
    io::write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

pub fn coefficient_volume(c: &Coefficient) -> Volume {
    Volume { grid: *c.grid(), name: "c".into(), values: c.values().to_vec() }
}

pub fn diagnostics(r: &InversionResult) -> Vec<Diagnostic> {
    r.records
        .iter()
        .map(|d| Diagnostic {
            n: d.n,
            i: d.i,
            k: d.k,
            error: d.error,
            q_iterations: d.q_iterations,
            q_residual: d.q_residual,
            q_converged: d.q_converged,
            ls_iterations: d.ls_iterations,
            ls_residual: d.ls_residual,
            max_c: d.max_c,
            min_abs_u: d.min_u,
            guarded_nodes: d.guarded,
            max_imag_c: d.max_imag_c,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub max_c: f64,
    pub isovalue: f64,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
    pub mesh_bbox: Option<[[f64; 3]; 2]>,
    pub truth_bbox: Option<[[f64; 3]; 2]>,
    pub bbox_overlap: Option<bool>,
    pub relative_error: Option<f64>,
}

/// Slices through the maximum, the isosurface at `isovalue * max c`, the
/// data curves when a bundle is given, and truth comparisons when a phantom
/// is given.
pub fn report(vol: &Volume, bundle: Option<&Bundle>, truth: Option<&Phantom>, isovalue: f64, out: &Path) -> Result<(Report, Mesh)> {
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let (p, max_c) = geom::argmax(&vol.values);
    for s in geom::slices(vol, vol.grid.unravel(p)) {
        let rows = (0..s.values.len()).map(|q| {
            let w = s.axes[0].len();
            vec![s.axes[0][q % w], s.axes[1][q / w], s.values[q]]
        });
        let names = [&s.plane[..1], &s.plane[1..], "c"];
        io::write_csv(&out.join(format!("slice_{}.csv", s.plane)), &names, rows)?;
        let (w, h, px) = s.pixels(1.0, max_c);
        io::write_png(&out.join(format!("slice_{}.png", s.plane)), w, h, px)?;
    }
    let mesh = geom::isosurface(vol, isovalue * max_c);
    io::write_obj(&out.join(MESH_FILE), &mesh.vertices, &mesh.triangles)?;
    if let Some(b) = bundle {
        let rows = (0..b.frequencies_ghz.len()).map(|i| vec![b.frequencies_ghz[i], b.raw_maxima[i], b.propagated_maxima[i]]);
        io::write_csv(&out.join("curve_frequency.csv"), &["freq_ghz", "raw_max", "propagated_max"], rows)?;
        io::write_csv(&out.join("curve_plane.csv"), &["z", "max"], b.scan_curve.iter().map(|r| r.to_vec()))?;
    }
    let mesh_bbox = mesh.bbox();
    let truth_bbox = truth.and_then(|t| t.bounds());
    let r = Report {
        max_c,
        isovalue,
        mesh_vertices: mesh.vertices.len(),
        mesh_triangles: mesh.triangles.len(),
        mesh_bbox: mesh_bbox.map(|(a, b)| [a, b]),
        truth_bbox: truth_bbox.map(|(a, b)| [a, b]),
        bbox_overlap: mesh_bbox.zip(truth_bbox).map(|(a, b)| geom::boxes_overlap(a, b)),
        relative_error: truth.map(|t| (max_c - t.max_c()).abs() / t.max_c()),
    };
    io::write_json(&out.join(REPORT_FILE), &r)?;
    Ok((r, mesh))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub nodes: [usize; 2],
    pub rel_error: [f64; 2],
    pub propagating_modes: [usize; 2],
    pub decreasing: bool,
}

/// The double-layer oracle against the spectral propagator on the standard
/// plane and on one refinement.
pub fn verify_theorem() -> Result<TheoremReport> {
    let base = TheoremSetup::default();
    let fine = base.refined();
    let a = base.run().map_err(CliError::step("theorem"))?;
    let b = fine.run().map_err(CliError::step("theorem"))?;
    Ok(TheoremReport {
        nodes: [base.nodes, fine.nodes],
        rel_error: [a.rel_error, b.rel_error],
        propagating_modes: [a.propagating_modes, b.propagating_modes],
        decreasing: b.rel_error < a.rel_error,
    })
}
