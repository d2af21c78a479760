//! Smooth compactly supported windows and squared partitions of unity.
//!
//! Physical-space localisation of a measure needs a family `{φ_p}` with
//! `Σ_p φ_p² = 1`, so that summing cell masses reproduces the total energy
//! exactly. The construction below is the standard complementary-ramp pair:
//! with `T(s) + T(1-s) = 1`, the profiles `cos(π/2·T)` and `sin(π/2·T)`
//! square-sum to one, and shifted copies tile the torus with overlap 2.

use crate::error::{Error, Result};
use crate::grid::{PhysTestFn, TorusGrid};
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

/// C-infinity ramp: 0 for `s ≤ 0`, 1 for `s ≥ 1`, and `T(s) + T(1-s) = 1`.
pub fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let g = |t: f64| (-1.0 / t).exp();
        let a = g(s);
        a / (a + g(1.0 - s))
    }
}

/// Even window profile `ρ(s) = cos(π/2 · T(|s|))`: 1 at the centre, 0 for
/// `|s| ≥ 1`, with `ρ²(s) + ρ²(1-s) = 1` on `[0, 1]`.
pub fn taper_profile(s: f64) -> f64 {
    let s = s.abs();
    if s >= 1.0 {
        0.0
    } else {
        (FRAC_PI_2 * smooth_step(s)).cos()
    }
}

/// Maximum allowed defect of `Σ φ_p² - 1` for a usable partition.
pub const PARTITION_TOL: f64 = 1e-10;

/// A family of windows whose squares sum to one on the grid.
#[derive(Debug, Clone)]
pub struct PhysPartition {
    grid: TorusGrid,
    windows: Vec<PhysTestFn>,
    centers: Vec<[f64; 3]>,
    counts: [usize; 3],
}

impl PhysPartition {
    /// The single window `φ ≡ 1`.
    pub fn trivial(grid: TorusGrid) -> Self {
        Self {
            grid,
            windows: vec![PhysTestFn::one(grid)],
            centers: vec![[0.0; 3]],
            counts: [1; 3],
        }
    }

    /// Tensor-product partition with `counts[a]` windows along axis `a`.
    ///
    /// Along an axis with count `P ≥ 2` the windows are
    /// `ρ((x - p·h)/h)` with `h = period/P`: spacing `h`, support width `2h`,
    /// every point covered by exactly two windows per axis. A count of 1
    /// contributes the constant factor. Each window must individually pass
    /// the spectral smoothness gate, which in practice needs
    /// `N/P ≳ 300` samples per window; multi-window partitions are therefore
    /// a fine-grid (mostly one-dimensional) tool.
    pub fn smooth(grid: TorusGrid, counts: &[usize]) -> Result<Self> {
        if counts.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} axis counts, got {}",
                grid.dim(),
                counts.len()
            )));
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidArgument("window counts must be positive".into()));
        }
        let period = grid.period();
        let dim = grid.dim();
        let mut windows = Vec::new();
        let mut centers = Vec::new();
        let total_windows: usize = counts.iter().product();
        for w in 0..total_windows {
            // Decode the per-axis window index (axis 0 slowest).
            let mut idx = [0usize; 3];
            let mut rest = w;
            for a in (0..dim).rev() {
                idx[a] = rest % counts[a];
                rest /= counts[a];
            }
            let mut center = [0.0f64; 3];
            for a in 0..dim {
                center[a] = idx[a] as f64 * period / counts[a] as f64;
            }
            let counts_local: Vec<usize> = counts.to_vec();
            let f = move |x: &[f64]| {
                let mut v = 1.0f64;
                for a in 0..x.len() {
                    if counts_local[a] == 1 {
                        continue;
                    }
                    let h = period / counts_local[a] as f64;
                    let mut dx = (x[a] - center[a]).rem_euclid(period);
                    if dx > period / 2.0 {
                        dx -= period;
                    }
                    v *= taper_profile(dx / h);
                }
                Complex64::new(v, 0.0)
            };
            windows.push(PhysTestFn::from_fn(
                grid,
                f,
                None,
                format!("window[{w}]"),
            )?);
            centers.push(center);
        }
        let mut this = Self {
            grid,
            windows,
            centers,
            counts: {
                let mut c = [1usize; 3];
                c[..dim].copy_from_slice(counts);
                c
            },
        };
        let defect = this.squared_unity_defect();
        if defect > PARTITION_TOL {
            return Err(Error::PartitionDefect {
                deviation: defect,
                tol: PARTITION_TOL,
            });
        }
        this.counts[..dim].copy_from_slice(counts);
        Ok(this)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[PhysTestFn] {
        &self.windows
    }

    pub fn window(&self, p: usize) -> &PhysTestFn {
        &self.windows[p]
    }

    pub fn center(&self, p: usize) -> &[f64] {
        &self.centers[p][..self.grid.dim()]
    }

    /// Half-width of a window's support along an axis (`period` if count 1).
    pub fn half_width(&self, axis: usize) -> f64 {
        if self.counts[axis] == 1 {
            self.grid.period()
        } else {
            self.grid.period() / self.counts[axis] as f64
        }
    }

    /// `max_x |Σ_p φ_p(x)² - 1|` over the grid.
    pub fn squared_unity_defect(&self) -> f64 {
        let total = self.grid.total_points();
        let mut worst = 0.0f64;
        for flat in 0..total {
            let sum: f64 = self
                .windows
                .iter()
                .map(|w| w.samples()[flat].norm_sqr())
                .sum();
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }

    /// Construction-style check against an explicit tolerance.
    pub fn verify_squared_unity(&self, tol: f64) -> Result<f64> {
        let defect = self.squared_unity_defect();
        if defect > tol {
            return Err(Error::PartitionDefect {
                deviation: defect,
                tol,
            });
        }
        Ok(defect)
    }
}
