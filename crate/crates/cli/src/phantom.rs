//! Synthetic targets: boxes and balls of constant dielectric constant in air.

use hcip_core::{Coefficient, Grid3D, C_MAX_DEFAULT};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Box { half: [f64; 3] },
    Ball { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inclusion {
    #[serde(flatten)]
    pub shape: Shape,
    pub center: [f64; 3],
    pub c: f64,
}

impl Inclusion {
    pub fn contains(&self, x: [f64; 3]) -> bool {
        let d = [x[0] - self.center[0], x[1] - self.center[1], x[2] - self.center[2]];
        match self.shape {
            Shape::Box { half } => (0..3).all(|a| d[a].abs() < half[a]),
            Shape::Ball { radius } => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < radius * radius,
        }
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let h = match self.shape {
            Shape::Box { half } => half,
            Shape::Ball { radius } => [radius; 3],
        };
        (
            std::array::from_fn(|a| self.center[a] - h[a]),
            std::array::from_fn(|a| self.center[a] + h[a]),
        )
    }

    pub fn volume(&self) -> f64 {
        match self.shape {
            Shape::Box { half } => 8.0 * half[0] * half[1] * half[2],
            Shape::Ball { radius } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub name: String,
    pub inclusions: Vec<Inclusion>,
    /// Additive noise level relative to the peak scattered modulus per frequency.
    pub noise: f64,
}

/// Names of the built-in phantoms.
pub const PRESETS: [&str; 6] = ["object1", "object2", "object3", "object4", "object5", "object6"];

/// Box with its front face on `z = 0`, centred on the `z` axis.
fn buried_box(half: [f64; 3], c: f64) -> Inclusion {
    Inclusion { shape: Shape::Box { half }, center: [0.0, 0.0, half[2]], c }
}

impl Phantom {
    pub fn empty() -> Self {
        Phantom { name: "empty".into(), inclusions: vec![], noise: 0.0 }
    }

    /// Desk-scale targets of 5 to 15 cm (lengths in units of 10 cm) with 5% noise.
    pub fn preset(name: &str) -> Result<Self> {
        let inclusion = match name {
            "object1" => buried_box([0.4, 0.15, 0.15], 4.50),
            "object2" => Inclusion { shape: Shape::Ball { radius: 0.35 }, center: [0.0, 0.0, 0.35], c: 5.45 },
            "object3" => buried_box([0.3, 0.25, 0.25], 5.61),
            "object4" => buried_box([0.35, 0.2, 0.25], 4.89),
            "object5" => buried_box([0.4, 0.25, 0.2], 7.58),
            "object6" => buried_box([0.5, 0.5, 0.5], 4.80),
            "empty" => return Ok(Self::empty()),
            other => return Err(CliError::Config(format!("unknown phantom preset {other:?}"))),
        };
        Ok(Phantom { name: name.into(), inclusions: vec![inclusion], noise: 0.05 })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(CliError::Config(format!("noise level {} must be nonnegative", self.noise)));
        }
        for inc in &self.inclusions {
            let ok_shape = match inc.shape {
                Shape::Box { half } => half.iter().all(|&h| h > 0.0 && h.is_finite()),
                Shape::Ball { radius } => radius > 0.0 && radius.is_finite(),
            };
            if !ok_shape || !(inc.c >= 1.0 && inc.c <= C_MAX_DEFAULT) {
                return Err(CliError::Config(format!("invalid inclusion {inc:?}")));
            }
        }
        Ok(())
    }

    /// Dielectric constant at a point; later inclusions win on overlap.
    pub fn value_at(&self, x: [f64; 3]) -> f64 {
        self.inclusions.iter().rev().find(|i| i.contains(x)).map_or(1.0, |i| i.c)
    }

    pub fn max_c(&self) -> f64 {
        self.inclusions.iter().map(|i| i.c).fold(1.0, f64::max)
    }

    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        self.inclusions.iter().map(|i| i.bounds()).reduce(|(alo, ahi), (blo, bhi)| {
            (std::array::from_fn(|a| alo[a].min(blo[a])), std::array::from_fn(|a| ahi[a].max(bhi[a])))
        })
    }

    /// Volume-weighted centre of the inclusions.
    pub fn centre(&self) -> Option<[f64; 3]> {
        let v: f64 = self.inclusions.iter().map(|i| i.volume()).sum();
        if self.inclusions.is_empty() || v == 0.0 {
            return None;
        }
        Some(std::array::from_fn(|a| self.inclusions.iter().map(|i| i.volume() * i.center[a]).sum::<f64>() / v))
    }

    /// Cell-centred grid of spacing about `h` covering the inclusions.
    pub fn support_grid(&self, h: f64) -> Result<Option<Grid3D>> {
        let Some((lo, hi)) = self.bounds() else { return Ok(None) };
        let counts: [usize; 3] = std::array::from_fn(|a| (((hi[a] - lo[a]) / h).ceil() as usize).max(1));
        let spacing: [f64; 3] = std::array::from_fn(|a| (hi[a] - lo[a]) / counts[a] as f64);
        let origin: [f64; 3] = std::array::from_fn(|a| lo[a] + 0.5 * spacing[a]);
        Grid3D::new(origin, spacing, counts).map(Some).map_err(CliError::step("phantom"))
    }

    /// Cell averages from `sub^3` samples per cell.
    pub fn rasterize(&self, grid: &Grid3D, sub: usize) -> Result<Coefficient> {
        let h = grid.spacing();
        let w = 1.0 / (sub * sub * sub) as f64;
        let offsets: Vec<f64> = (0..sub).map(|t| (t as f64 + 0.5) / sub as f64 - 0.5).collect();
        let values = (0..grid.len())
            .map(|p| {
                let x = grid.node_at(p);
                let mut acc = 0.0;
                for &a in &offsets {
                    for &b in &offsets {
                        for &d in &offsets {
                            acc += self.value_at([x[0] + a * h[0], x[1] + b * h[1], x[2] + d * h[2]]) - 1.0;
                        }
                    }
                }
                1.0 + w * acc
            })
            .collect();
        Coefficient::new(*grid, values).map_err(CliError::step("phantom"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_measured_constants() {
        let want = [4.50, 5.45, 5.61, 4.89, 7.58, 4.80];
        for (name, c) in PRESETS.iter().zip(want) {
            let p = Phantom::preset(name).unwrap();
            p.validate().unwrap();
            assert_eq!(p.max_c(), c);
            let (lo, _) = p.bounds().unwrap();
            assert!(lo[2].abs() < 1e-12, "{name} front face at z = 0");
        }
        assert!(Phantom::preset("object7").is_err());
    }

    #[test]
    fn rasterized_volume_matches_geometry() {
        let p = Phantom::preset("object3").unwrap();
        let g = p.support_grid(0.05).unwrap().unwrap();
        let c = p.rasterize(&g, 2).unwrap();
        let excess: f64 = c.values().iter().map(|v| v - 1.0).sum::<f64>() * g.cell_volume();
        let want = (5.61 - 1.0) * 0.6 * 0.5 * 0.5;
        assert!((excess - want).abs() < 1e-9 * want);
        let ball = Phantom::preset("object2").unwrap();
        let g = ball.support_grid(0.05).unwrap().unwrap();
        let c = ball.rasterize(&g, 4).unwrap();
        let excess: f64 = c.values().iter().map(|v| v - 1.0).sum::<f64>() * g.cell_volume();
        let want = 4.45 * 4.0 / 3.0 * std::f64::consts::PI * 0.35f64.powi(3);
        assert!((excess - want).abs() < 0.02 * want, "{excess} vs {want}");
    }

    #[test]
    fn json_round_trip() {
        let p = Phantom::preset("object2").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Phantom>(&s).unwrap(), p);
        assert!(Phantom::empty().support_grid(0.1).unwrap().is_none());
    }
}
