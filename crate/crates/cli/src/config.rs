//! Run configuration: every threshold and solver setting in one flat table.

use std::path::Path;

use hcip_core::forward::LsConfig;
use hcip_core::inversion::{InversionConfig, QBoundaryRule, StoppingRules, Truncation};
use hcip_core::krylov::GmresConfig;
use hcip_core::preprocess::{GaussianFilter, PreprocessConfig, StabilityConfig, ZScanConfig};
use hcip_core::propagation::PropagationConfig;
use hcip_core::{Grid2D, Grid3D, WaveConvention};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Plus,
    Minus,
}

impl From<Convention> for WaveConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Plus => WaveConvention::Plus,
            Convention::Minus => WaveConvention::Minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryRule {
    Quotient,
    Logarithmic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub convention: Convention,

    /// Frequency sweep `f_i = freq_min + i (freq_max - freq_min) / (freq_count - 1)`,
    /// of which indices `band_first..=band_last` are simulated.
    pub freq_min_ghz: f64,
    pub freq_max_ghz: f64,
    pub freq_count: usize,
    pub band_first: usize,
    pub band_last: usize,

    /// Square measurement plane `[-w, w]^2` with `plane_nodes^2` nodes.
    pub plane_half_width: f64,
    pub plane_nodes: usize,
    pub plane_z: f64,

    /// Phantom rasterization for the forward solver.
    pub sim_spacing: f64,
    pub sim_subsamples: usize,

    pub ls_tolerance: f64,
    pub ls_max_iterations: usize,
    pub ls_restart: usize,
    pub ls_padding: f64,

    pub propagation_padding: usize,
    pub scan_z_min: f64,
    pub scan_z_max: f64,
    pub scan_step: f64,
    pub stability_delta: f64,
    pub stability_r_loc: usize,
    pub stability_min_len: usize,
    pub truncation: f64,
    pub footprint_threshold: f64,
    pub smoothing_sigma: f64,

    /// Inversion domain `[-w, w]^2 x (z*, z* + height)` with `omega_nodes^3` nodes.
    pub omega_nodes: usize,
    pub omega_half_width: f64,
    pub omega_height: f64,
    pub partition_step: f64,
    pub q_boundary: BoundaryRule,
    pub q_tolerance: f64,
    pub q_max_iterations: usize,
    pub q_restart: usize,
    pub q_accept: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub outer_tol: f64,
    pub max_outer: usize,
    pub c_max: f64,
    pub z_top: f64,
    pub guard: f64,

    /// Isovalue for the reported support, as a fraction of max c.
    pub isovalue: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ls = LsConfig::default();
        let pre = PreprocessConfig::default();
        let inv = InversionConfig::default();
        Self {
            seed: 7,
            convention: Convention::Minus,
            freq_min_ghz: 1.0,
            freq_max_ghz: 10.0,
            freq_count: 300,
            band_first: 49,
            band_last: 59,
            plane_half_width: 5.0,
            plane_nodes: 51,
            plane_z: -8.78,
            sim_spacing: 0.05,
            sim_subsamples: 3,
            ls_tolerance: ls.krylov_tolerance,
            ls_max_iterations: ls.max_iterations,
            ls_restart: ls.restart,
            ls_padding: ls.padding_factor,
            propagation_padding: pre.propagation.padding,
            scan_z_min: pre.scan.z_min,
            scan_z_max: pre.scan.z_max,
            scan_step: pre.scan.step,
            stability_delta: pre.stability.delta,
            stability_r_loc: pre.stability.r_loc,
            stability_min_len: pre.stability.min_len,
            truncation: pre.truncation,
            footprint_threshold: pre.footprint_threshold,
            smoothing_sigma: pre.filter.sigma_cells,
            omega_nodes: 32,
            omega_half_width: 2.5,
            omega_height: 5.0,
            partition_step: hcip_core::preprocess::PARTITION_STEP,
            q_boundary: BoundaryRule::Logarithmic,
            q_tolerance: inv.q_solver.tol,
            q_max_iterations: inv.q_solver.max_iter,
            q_restart: inv.q_solver.restart,
            q_accept: inv.q_accept,
            inner_tol: inv.stopping.inner_tol,
            max_inner: inv.stopping.max_inner,
            outer_tol: inv.stopping.outer_tol,
            max_outer: inv.stopping.max_outer,
            c_max: inv.truncation.c_max,
            z_top: inv.truncation.z_top,
            guard: inv.guard,
            isovalue: 0.5,
        }
    }
}

fn fraction(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} = {v} must lie in (0, 1]")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} = {v} must be positive")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Applies `key=value`, the value parsed as a TOML literal (bare words
    /// are taken as strings).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got {assignment:?}")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.to_string()),
        };
        let mut table = toml::Table::try_from(&*self).expect("flat config serializes");
        if !table.contains_key(key) {
            return Err(CliError::Config(format!("unknown setting {key:?}")));
        }
        // Integers are accepted where floats are expected.
        let value = match (&table[key], value) {
            (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (_, v) => v,
        };
        table.insert(key.to_string(), value);
        let next: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        fraction("truncation", self.truncation)?;
        fraction("footprint_threshold", self.footprint_threshold)?;
        fraction("isovalue", self.isovalue)?;
        for (name, v) in [
            ("freq_min_ghz", self.freq_min_ghz),
            ("plane_half_width", self.plane_half_width),
            ("sim_spacing", self.sim_spacing),
            ("ls_tolerance", self.ls_tolerance),
            ("scan_step", self.scan_step),
            ("stability_delta", self.stability_delta),
            ("smoothing_sigma", self.smoothing_sigma),
            ("omega_half_width", self.omega_half_width),
            ("omega_height", self.omega_height),
            ("partition_step", self.partition_step),
            ("q_tolerance", self.q_tolerance),
            ("q_accept", self.q_accept),
            ("inner_tol", self.inner_tol),
            ("outer_tol", self.outer_tol),
            ("guard", self.guard),
        ] {
            positive(name, v)?;
        }
        if !(self.freq_max_ghz > self.freq_min_ghz) || self.freq_count < 2 {
            return Err(CliError::Config("frequency sweep needs freq_max_ghz > freq_min_ghz and 2+ points".into()));
        }
        if self.band_first > self.band_last || self.band_last >= self.freq_count {
            return Err(CliError::Config(format!(
                "band {}..={} outside the {} frequencies",
                self.band_first, self.band_last, self.freq_count
            )));
        }
        if self.plane_nodes < 3 || self.omega_nodes < 3 || self.sim_subsamples == 0 {
            return Err(CliError::Config("grids need at least 3 nodes per axis and 1 subsample".into()));
        }
        if !(self.c_max >= 1.0) {
            return Err(CliError::Config(format!("c_max = {} must be at least 1", self.c_max)));
        }
        if !(self.ls_padding >= 1.0) || self.propagation_padding == 0 {
            return Err(CliError::Config("padding factors must be at least 1".into()));
        }
        if self.max_inner == 0 || self.max_outer == 0 || self.ls_restart == 0 || self.q_restart == 0 {
            return Err(CliError::Config("iteration caps and restarts must be positive".into()));
        }
        if !(self.scan_z_max >= self.scan_z_min) {
            return Err(CliError::Config("scan_z_max below scan_z_min".into()));
        }
        Ok(())
    }

    pub fn wave_convention(&self) -> WaveConvention {
        self.convention.into()
    }

    /// The full frequency list of the sweep.
    pub fn sweep(&self) -> Vec<f64> {
        let n = self.freq_count;
        (0..n)
            .map(|i| self.freq_min_ghz + (self.freq_max_ghz - self.freq_min_ghz) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Simulated frequencies.
    pub fn band(&self) -> Vec<f64> {
        self.sweep()[self.band_first..=self.band_last].to_vec()
    }

    pub fn measurement_plane(&self) -> Result<Grid2D> {
        let w = self.plane_half_width;
        let n = self.plane_nodes;
        Grid2D::from_bounds([-w, -w], [w, w], [n, n], self.plane_z).map_err(CliError::step("config"))
    }

    pub fn omega(&self, z_star: f64) -> Result<Grid3D> {
        let w = self.omega_half_width;
        let n = self.omega_nodes;
        Grid3D::from_bounds([-w, -w, z_star], [w, w, z_star + self.omega_height], [n, n, n])
            .map_err(CliError::step("config"))
    }

    pub fn ls(&self) -> LsConfig {
        LsConfig {
            krylov_tolerance: self.ls_tolerance,
            max_iterations: self.ls_max_iterations,
            restart: self.ls_restart,
            padding_factor: self.ls_padding,
        }
    }

    pub fn filter(&self) -> GaussianFilter {
        GaussianFilter { sigma_cells: self.smoothing_sigma }
    }

    pub fn preprocess(&self) -> PreprocessConfig {
        PreprocessConfig {
            convention: self.wave_convention(),
            propagation: PropagationConfig { padding: self.propagation_padding },
            scan: ZScanConfig { z_min: self.scan_z_min, z_max: self.scan_z_max, step: self.scan_step },
            stability: StabilityConfig {
                delta: self.stability_delta,
                r_loc: self.stability_r_loc,
                min_len: self.stability_min_len,
            },
            truncation: self.truncation,
            footprint_threshold: self.footprint_threshold,
            filter: self.filter(),
        }
    }

    pub fn inversion(&self) -> InversionConfig {
        InversionConfig {
            convention: self.wave_convention(),
            ls: self.ls(),
            q_solver: GmresConfig { tol: self.q_tolerance, max_iter: self.q_max_iterations, restart: self.q_restart },
            q_accept: self.q_accept,
            stopping: StoppingRules {
                inner_tol: self.inner_tol,
                max_inner: self.max_inner,
                outer_tol: self.outer_tol,
                max_outer: self.max_outer,
            },
            truncation: Truncation { z_top: self.z_top, c_max: self.c_max, filter: self.filter() },
            guard: self.guard,
            q_boundary: match self.q_boundary {
                BoundaryRule::Quotient => QBoundaryRule::Quotient,
                BoundaryRule::Logarithmic => QBoundaryRule::Logarithmic,
            },
        }
    }
}
