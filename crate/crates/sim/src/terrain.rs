//! Ground height models. Queries are total: every `(x, y)` has a height.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct StairSpec {
    /// World x of the stair origin; the first riser sits one depth later.
    pub origin: f64,
    /// Depth of each pallet, m.
    pub depth: f64,
    /// Riser heights from the bottom up, m.
    pub risers: Vec<f64>,
    /// Width of the linear ramp that smooths each riser edge, m.
    pub edge_smoothing: f64,
}

impl Default for StairSpec {
    fn default() -> Self {
        Self { origin: 1.45, depth: 0.55, risers: vec![0.16, 0.16, 0.13], edge_smoothing: 0.01 }
    }
}

impl StairSpec {
    pub fn top_height(&self) -> f64 {
        self.risers.iter().sum()
    }

    /// End of the stairs in x (start of the top level).
    pub fn top_start(&self) -> f64 {
        self.origin + self.depth * self.risers.len() as f64
    }

    pub fn height(&self, x: f64) -> f64 {
        let mut h = 0.0;
        for (i, riser) in self.risers.iter().enumerate() {
            let edge = self.origin + self.depth * (i + 1) as f64;
            let w = self.edge_smoothing;
            let frac = if w > 0.0 {
                ((x - edge) / w + 0.5).clamp(0.0, 1.0)
            } else if x >= edge {
                1.0
            } else {
                0.0
            };
            h += riser * frac;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightfieldSpec {
    /// Patch extent in x, m.
    pub x_min: f64,
    pub x_max: f64,
    /// Half-width of the patch in y, m.
    pub half_width: f64,
    /// Grid spacing, which sets the correlation length, m.
    pub spacing: f64,
    /// Heights are uniform in `[-amplitude, amplitude]`, m.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for HeightfieldSpec {
    fn default() -> Self {
        Self { x_min: 3.65, x_max: 5.65, half_width: 1.0, spacing: 0.25, amplitude: 0.06, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Grid {
    nx: usize,
    ny: usize,
    heights: Vec<f64>,
}

/// Heightfield patch whose grid is generated once from the seed and
/// bilinearly interpolated. The rim of the grid is pinned to zero so the
/// patch blends into the surrounding ground.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    pub spec: HeightfieldSpec,
    grid: Grid,
}

impl Heightfield {
    pub fn new(spec: HeightfieldSpec) -> Self {
        let nx = ((spec.x_max - spec.x_min) / spec.spacing).round().max(1.0) as usize + 1;
        let ny = ((2.0 * spec.half_width) / spec.spacing).round().max(1.0) as usize + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut heights = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let v: f64 = rng.gen_range(-spec.amplitude..=spec.amplitude);
                let rim = i == 0 || j == 0 || i + 1 == nx || j + 1 == ny;
                heights[j * nx + i] = if rim { 0.0 } else { v };
            }
        }
        Self { spec, grid: Grid { nx, ny, heights } }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let s = &self.spec;
        if x <= s.x_min || x >= s.x_max || y <= -s.half_width || y >= s.half_width {
            return 0.0;
        }
        let gx = (x - s.x_min) / s.spacing;
        let gy = (y + s.half_width) / s.spacing;
        let i = (gx.floor() as usize).min(self.grid.nx - 2);
        let j = (gy.floor() as usize).min(self.grid.ny - 2);
        let (fx, fy) = (gx - i as f64, gy - j as f64);
        let h = |i: usize, j: usize| self.grid.heights[j * self.grid.nx + i];
        let h0 = h(i, j) * (1.0 - fx) + h(i + 1, j) * fx;
        let h1 = h(i, j + 1) * (1.0 - fx) + h(i + 1, j + 1) * fx;
        h0 * (1.0 - fy) + h1 * fy
    }
}

/// Flat ground, optionally with a pallet staircase and a rock patch laid on
/// top of whatever level lies beneath it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Terrain {
    pub stairs: Option<StairSpec>,
    pub heightfield: Option<Heightfield>,
}

impl Terrain {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let base = self.stairs.as_ref().map_or(0.0, |s| s.height(x));
        base + self.heightfield.as_ref().map_or(0.0, |h| h.height(x, y))
    }

    /// Upward unit normal from central differences.
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let e = 1e-4;
        let dx = (self.height(x + e, y) - self.height(x - e, y)) / (2.0 * e);
        let dy = (self.height(x, y + e) - self.height(x, y - e)) / (2.0 * e);
        Vector3::new(-dx, -dy, 1.0).normalize()
    }
}
