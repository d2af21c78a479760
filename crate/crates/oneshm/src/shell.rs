//! The compactified frequency shell and its test functions.
//!
//! Frequencies are compactified radially: `R^d ∖ {0}` is completed by a
//! sphere `Σ₀` of directions at radius 0 and a sphere `Σ∞` at radius ∞.
//! A continuous test function on the shell is an interior rule together
//! with boundary traces `ψ₀`, `ψ∞` on the two spheres; admissibility is the
//! compatibility requirement that the interior rule approaches its traces
//! along rays, which construction checks numerically at probe radii.
//!
//! The radial coordinate used for binning is `τ = s/(1+s) ∈ (0, 1)`, with
//! bands `τ < δ` and `τ > 1-δ` assigned to the boundary spheres.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Default tolerance for the boundary-compatibility check.
pub const COMPAT_TOL: f64 = 1e-6;
/// Default probe radii for the boundary-compatibility check.
pub const COMPAT_RADII: (f64, f64) = (1e-4, 1e4);

/// A point of the compactified shell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShellPoint {
    /// A nonzero finite frequency.
    Interior(Vec<f64>),
    /// A direction on the vanishing-radius sphere.
    Sigma0(Vec<f64>),
    /// A direction on the escaping-radius sphere.
    SigmaInf(Vec<f64>),
}

impl ShellPoint {
    pub fn interior(eta: &[f64]) -> Result<Self> {
        if norm(eta) == 0.0 {
            return Err(Error::ZeroFrequency);
        }
        Ok(Self::Interior(eta.to_vec()))
    }

    pub fn sigma0(dir: &[f64]) -> Result<Self> {
        Ok(Self::Sigma0(unit(dir)?))
    }

    pub fn sigma_inf(dir: &[f64]) -> Result<Self> {
        Ok(Self::SigmaInf(unit(dir)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Interior(v) | Self::Sigma0(v) | Self::SigmaInf(v) => v.len(),
        }
    }

    /// Unit direction of the point.
    pub fn direction(&self) -> Vec<f64> {
        match self {
            Self::Interior(v) => {
                let n = norm(v);
                v.iter().map(|&c| c / n).collect()
            }
            Self::Sigma0(v) | Self::SigmaInf(v) => v.clone(),
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&c| c * c).sum::<f64>().sqrt()
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    Ok(v.iter().map(|&c| c / n).collect())
}

type ShellRule = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// A continuous test function on the compactified shell.
#[derive(Clone)]
pub struct ShellTestFn {
    dim: usize,
    interior: ShellRule,
    sigma0: ShellRule,
    sigma_inf: ShellRule,
    compat_tol: f64,
    compat_radii: (f64, f64),
    label: String,
}

impl std::fmt::Debug for ShellTestFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShellTestFn")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("compat_tol", &self.compat_tol)
            .field("compat_radii", &self.compat_radii)
            .finish()
    }
}

/// Direction samples used for the compatibility check.
fn direction_samples(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..64)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 64.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for i in 0..16 {
                let theta = PI * (i as f64 + 0.5) / 16.0;
                for j in 0..16 {
                    let phi = 2.0 * PI * j as f64 / 16.0;
                    out.push(vec![
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ]);
                }
            }
            out.push(vec![0.0, 0.0, 1.0]);
            out.push(vec![0.0, 0.0, -1.0]);
            out
        }
    }
}

impl ShellTestFn {
    /// Build with explicit boundary traces; checks compatibility at the
    /// default probe radii.
    pub fn new(
        dim: usize,
        interior: ShellRule,
        sigma0: ShellRule,
        sigma_inf: ShellRule,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::with_compat(
            dim,
            interior,
            sigma0,
            sigma_inf,
            COMPAT_TOL,
            COMPAT_RADII,
            label,
        )
    }

    /// Build with explicit compatibility tolerance and probe radii. Both are
    /// stored so a failure is reproducible from the value alone.
    pub fn with_compat(
        dim: usize,
        interior: ShellRule,
        sigma0: ShellRule,
        sigma_inf: ShellRule,
        compat_tol: f64,
        compat_radii: (f64, f64),
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "shell dimension must be 1..=3, got {dim}"
            )));
        }
        let this = Self {
            dim,
            interior,
            sigma0,
            sigma_inf,
            compat_tol,
            compat_radii,
            label: label.into(),
        };
        this.check_compatibility()?;
        Ok(this)
    }

    /// The constant function `c` on the whole shell.
    pub fn constant(dim: usize, c: Complex64) -> Self {
        let f: ShellRule = Arc::new(move |_| c);
        Self {
            dim,
            interior: f.clone(),
            sigma0: f.clone(),
            sigma_inf: f,
            compat_tol: COMPAT_TOL,
            compat_radii: COMPAT_RADII,
            label: format!("const({c})"),
        }
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, Complex64::new(1.0, 0.0))
    }

    /// Lift of a function `g` on the unit sphere by `ψ(ξ) = g(ξ/|ξ|)`:
    /// scale-invariant, so both boundary traces equal `g` exactly.
    pub fn homogeneous(
        dim: usize,
        g: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Self {
        let g = Arc::new(g);
        let gi = g.clone();
        let interior: ShellRule = Arc::new(move |eta| {
            let n = norm(eta);
            let dir: Vec<f64> = eta.iter().map(|&c| c / n).collect();
            gi(&dir)
        });
        let gb = g.clone();
        let boundary: ShellRule = Arc::new(move |e| gb(e));
        Self {
            dim,
            interior,
            sigma0: boundary.clone(),
            sigma_inf: boundary,
            compat_tol: COMPAT_TOL,
            compat_radii: COMPAT_RADII,
            label: label.into(),
        }
    }

    /// Lift of a continuous `h` vanishing at infinity: trace `h(0)` on the
    /// vanishing sphere, zero on the escaping sphere. The decay of `h` is
    /// enforced by the compatibility check at the outer probe radius.
    pub fn c0(
        dim: usize,
        h: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        let h = Arc::new(h);
        let origin = vec![0.0f64; dim];
        let h0 = h(&origin);
        let interior: ShellRule = Arc::new(move |eta| h(eta));
        let sigma0: ShellRule = Arc::new(move |_| h0);
        let sigma_inf: ShellRule = Arc::new(|_| Complex64::default());
        Self::new(dim, interior, sigma0, sigma_inf, label)
    }

    /// The admissible rational function `ξ^α / (|ξ|^l + |ξ|^m)`, `l ≤ |α| ≤ m`.
    ///
    /// Boundary traces follow from the ray limits: on the vanishing sphere
    /// the trace is `e^α` when `|α| = l` and 0 otherwise; on the escaping
    /// sphere `e^α` when `|α| = m` and 0 otherwise; for `l = m` the function
    /// is homogeneous and both traces are `e^α / 2`.
    ///
    /// The probe radii are tightened to `(1e-8, 1e8)` because the ray limits
    /// converge only like `ρ^{m-l}`; the wider defaults would sit above the
    /// compatibility tolerance.
    pub fn rational(dim: usize, alpha: &[u32], l: u32, m: u32) -> Result<Self> {
        if alpha.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "multi-index length {} does not match dimension {dim}",
                alpha.len()
            )));
        }
        let order: u32 = alpha.iter().sum();
        if !(l <= order && order <= m) {
            return Err(Error::InvalidArgument(format!(
                "multi-index order {order} must lie in [{l}, {m}]"
            )));
        }
        let alpha_v: Vec<u32> = alpha.to_vec();
        let ai = alpha_v.clone();
        let interior: ShellRule = Arc::new(move |eta| {
            let n = norm(eta);
            let num = monomial(eta, &ai);
            Complex64::new(num / (n.powi(l as i32) + n.powi(m as i32)), 0.0)
        });
        let a0 = alpha_v.clone();
        let sigma0: ShellRule = Arc::new(move |e| {
            let v = if l == m {
                monomial(e, &a0) / 2.0
            } else if a0.iter().sum::<u32>() == l {
                monomial(e, &a0)
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        });
        let am = alpha_v.clone();
        let sigma_inf: ShellRule = Arc::new(move |e| {
            let v = if l == m {
                monomial(e, &am) / 2.0
            } else if am.iter().sum::<u32>() == m {
                monomial(e, &am)
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        });
        Self::with_compat(
            dim,
            interior,
            sigma0,
            sigma_inf,
            COMPAT_TOL,
            (1e-8, 1e8),
            format!("rational(alpha={alpha_v:?}, l={l}, m={m})"),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Interior evaluation; the origin is excluded from the shell.
    pub fn eval(&self, eta: &[f64]) -> Result<Complex64> {
        if norm(eta) == 0.0 {
            return Err(Error::ZeroFrequency);
        }
        Ok((self.interior)(eta))
    }

    pub fn eval_sigma0(&self, dir: &[f64]) -> Complex64 {
        (self.sigma0)(dir)
    }

    pub fn eval_sigma_inf(&self, dir: &[f64]) -> Complex64 {
        (self.sigma_inf)(dir)
    }

    pub fn eval_point(&self, p: &ShellPoint) -> Result<Complex64> {
        match p {
            ShellPoint::Interior(eta) => self.eval(eta),
            ShellPoint::Sigma0(e) => Ok(self.eval_sigma0(e)),
            ShellPoint::SigmaInf(e) => Ok(self.eval_sigma_inf(e)),
        }
    }

    /// Whether all sampled values are real (pairs with hermitian symmetry).
    pub fn is_real_on(&self, samples: &[Vec<f64>]) -> bool {
        samples.iter().all(|eta| {
            norm(eta) == 0.0 || (self.interior)(eta).im.abs() < 1e-14
        })
    }

    /// The vanishing-sphere trace, if it is constant across directions
    /// (within the compatibility tolerance). A constant trace means the
    /// function extends continuously across the origin — the bounded
    /// uniformly continuous case; a direction-dependent trace returns
    /// `None`.
    pub fn constant_sigma0(&self) -> Option<Complex64> {
        let samples = direction_samples(self.dim);
        let first = (self.sigma0)(&samples[0]);
        let spread = samples
            .iter()
            .map(|e| ((self.sigma0)(e) - first).norm())
            .fold(0.0f64, f64::max);
        (spread <= self.compat_tol).then_some(first)
    }

    fn check_compatibility(&self) -> Result<()> {
        let (rho0, rho_inf) = self.compat_radii;
        let mut worst0 = 0.0f64;
        let mut worst_inf = 0.0f64;
        for e in direction_samples(self.dim) {
            let near: Vec<f64> = e.iter().map(|&c| c * rho0).collect();
            let far: Vec<f64> = e.iter().map(|&c| c * rho_inf).collect();
            worst0 = worst0.max(((self.interior)(&near) - (self.sigma0)(&e)).norm());
            worst_inf = worst_inf.max(((self.interior)(&far) - (self.sigma_inf)(&e)).norm());
        }
        if worst0 > self.compat_tol {
            return Err(Error::Compatibility {
                side: "the vanishing sphere",
                deviation: worst0,
                tol: self.compat_tol,
            });
        }
        if worst_inf > self.compat_tol {
            return Err(Error::Compatibility {
                side: "the escaping sphere",
                deviation: worst_inf,
                tol: self.compat_tol,
            });
        }
        Ok(())
    }
}

fn monomial(v: &[f64], alpha: &[u32]) -> f64 {
    v.iter()
        .zip(alpha)
        .map(|(&c, &a)| c.powi(a as i32))
        .product()
}

/// Radial compactification `s ↦ s/(1+s)`, mapping `[0, ∞]` onto `[0, 1]`.
pub fn compactify_radius(s: f64) -> f64 {
    if s.is_infinite() {
        1.0
    } else {
        s / (1.0 + s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Sigma0,
    Interior,
    SigmaInf,
}

/// Identity of one cell of the shell partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellInfo {
    pub kind: CellKind,
    pub dir_bin: usize,
    /// Radial bin for interior cells; `None` on the boundary spheres.
    pub rad_bin: Option<usize>,
}

/// A finite partition of the compactified shell into direction × radius
/// cells, with boundary bands `τ < δ` and `τ > 1-δ` assigned to the spheres.
///
/// Cell ids are stable: the `Σ₀` block occupies `[0, n_dir)`, interior cells
/// follow as `n_dir + dir·n_rad + rad`, and the `Σ∞` block closes the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellBins {
    dim: usize,
    n_dir: usize,
    n_rad: usize,
    delta: f64,
    /// Latitude band count for `d = 3` (direction bins factor as lat × lon).
    n_lat: usize,
}

impl ShellBins {
    pub fn new(dim: usize, n_dir: usize, n_rad: usize, delta: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidBins(format!("dimension must be 1..=3, got {dim}")));
        }
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::InvalidBins(format!(
                "boundary band delta must lie in (0, 0.5), got {delta}"
            )));
        }
        if n_rad == 0 || n_dir == 0 {
            return Err(Error::InvalidBins("bin counts must be positive".into()));
        }
        let (n_dir, n_lat) = match dim {
            1 => {
                if n_dir != 2 {
                    return Err(Error::InvalidBins(
                        "one-dimensional shells have exactly the two directions ±1".into(),
                    ));
                }
                (2, 1)
            }
            2 => (n_dir, 1),
            _ => {
                // Factor n_dir into latitude bands × longitude sectors,
                // rounding the total down to an exact rectangle count.
                let n_lat = ((n_dir as f64 / 2.0).sqrt().round() as usize).max(1);
                let n_lon = (n_dir / n_lat).max(1);
                (n_lat * n_lon, n_lat)
            }
        };
        Ok(Self { dim, n_dir, n_rad, delta, n_lat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_dir(&self) -> usize {
        self.n_dir
    }

    pub fn n_rad(&self) -> usize {
        self.n_rad
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn total_cells(&self) -> usize {
        self.n_dir * (self.n_rad + 2)
    }

    /// Radius below which a frequency is binned on the vanishing sphere.
    pub fn inner_radius(&self) -> f64 {
        self.delta / (1.0 - self.delta)
    }

    /// Radius above which a frequency is binned on the escaping sphere.
    pub fn outer_radius(&self) -> f64 {
        (1.0 - self.delta) / self.delta
    }

    /// Direction bin of a nonzero vector.
    ///
    /// For `d = 2` the circle splits into `n_dir` equal half-open sectors
    /// offset by half a sector width, so sector centroids sit at angles
    /// `2πb/n_dir` — in particular the coordinate axes are sector centroids.
    pub fn dir_bin_of(&self, v: &[f64]) -> Result<usize> {
        if norm(v) == 0.0 {
            return Err(Error::ZeroFrequency);
        }
        Ok(match self.dim {
            1 => {
                if v[0] > 0.0 {
                    0
                } else {
                    1
                }
            }
            2 => {
                let w = 2.0 * PI / self.n_dir as f64;
                let a = (v[1].atan2(v[0]) + w / 2.0).rem_euclid(2.0 * PI);
                ((a / w) as usize).min(self.n_dir - 1)
            }
            _ => {
                let n_lon = self.n_dir / self.n_lat;
                let n = norm(v);
                let theta = (v[2] / n).clamp(-1.0, 1.0).acos();
                let lat = ((theta / PI * self.n_lat as f64) as usize).min(self.n_lat - 1);
                let w = 2.0 * PI / n_lon as f64;
                let a = (v[1].atan2(v[0]) + w / 2.0).rem_euclid(2.0 * PI);
                let lon = ((a / w) as usize).min(n_lon - 1);
                lat * n_lon + lon
            }
        })
    }

    /// Centroid direction of a direction bin.
    pub fn dir_centroid(&self, bin: usize) -> Vec<f64> {
        match self.dim {
            1 => vec![if bin == 0 { 1.0 } else { -1.0 }],
            2 => {
                let a = 2.0 * PI * bin as f64 / self.n_dir as f64;
                vec![a.cos(), a.sin()]
            }
            _ => {
                let n_lon = self.n_dir / self.n_lat;
                let lat = bin / n_lon;
                let lon = bin % n_lon;
                let theta = PI * (lat as f64 + 0.5) / self.n_lat as f64;
                let phi = 2.0 * PI * lon as f64 / n_lon as f64;
                vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
            }
        }
    }

    /// Cell id of a nonzero frequency vector.
    pub fn classify(&self, eta: &[f64]) -> Result<usize> {
        let n = norm(eta);
        if n == 0.0 {
            return Err(Error::ZeroFrequency);
        }
        let dir = self.dir_bin_of(eta)?;
        let tau = compactify_radius(n);
        Ok(if tau < self.delta {
            dir
        } else if tau > 1.0 - self.delta {
            self.n_dir + self.n_dir * self.n_rad + dir
        } else {
            let width = (1.0 - 2.0 * self.delta) / self.n_rad as f64;
            let rad = (((tau - self.delta) / width) as usize).min(self.n_rad - 1);
            self.n_dir + dir * self.n_rad + rad
        })
    }

    pub fn cell_id(&self, info: &CellInfo) -> usize {
        match info.kind {
            CellKind::Sigma0 => info.dir_bin,
            CellKind::Interior => {
                self.n_dir + info.dir_bin * self.n_rad + info.rad_bin.unwrap_or(0)
            }
            CellKind::SigmaInf => self.n_dir + self.n_dir * self.n_rad + info.dir_bin,
        }
    }

    pub fn info(&self, cell: usize) -> Result<CellInfo> {
        if cell >= self.total_cells() {
            return Err(Error::InvalidBins(format!(
                "cell {cell} out of range 0..{}",
                self.total_cells()
            )));
        }
        Ok(if cell < self.n_dir {
            CellInfo {
                kind: CellKind::Sigma0,
                dir_bin: cell,
                rad_bin: None,
            }
        } else if cell < self.n_dir + self.n_dir * self.n_rad {
            let rel = cell - self.n_dir;
            CellInfo {
                kind: CellKind::Interior,
                dir_bin: rel / self.n_rad,
                rad_bin: Some(rel % self.n_rad),
            }
        } else {
            CellInfo {
                kind: CellKind::SigmaInf,
                dir_bin: cell - self.n_dir - self.n_dir * self.n_rad,
                rad_bin: None,
            }
        })
    }

    /// Geometric representative of a cell: direction-bin centroid, and for
    /// interior cells the centre of the radial band mapped back through the
    /// compactification.
    pub fn representative(&self, cell: usize) -> Result<ShellPoint> {
        let info = self.info(cell)?;
        let dir = self.dir_centroid(info.dir_bin);
        Ok(match info.kind {
            CellKind::Sigma0 => ShellPoint::Sigma0(dir),
            CellKind::SigmaInf => ShellPoint::SigmaInf(dir),
            CellKind::Interior => {
                let width = (1.0 - 2.0 * self.delta) / self.n_rad as f64;
                let tau = self.delta + (info.rad_bin.unwrap() as f64 + 0.5) * width;
                let s = tau / (1.0 - tau);
                ShellPoint::Interior(dir.iter().map(|&c| c * s).collect())
            }
        })
    }

    /// All cell representatives, in cell-id order.
    pub fn representatives(&self) -> Vec<ShellPoint> {
        (0..self.total_cells())
            .map(|c| self.representative(c).expect("cell range"))
            .collect()
    }

    /// The cell covering the antipodal direction at the same radial band.
    pub fn antipodal_cell(&self, cell: usize) -> Result<usize> {
        let info = self.info(cell)?;
        let c = self.dir_centroid(info.dir_bin);
        let neg: Vec<f64> = c.iter().map(|&v| -v).collect();
        let dir_bin = self.dir_bin_of(&neg)?;
        Ok(self.cell_id(&CellInfo { dir_bin, ..info }))
    }

    /// Table of cell descriptions, indexed by cell id.
    pub fn cell_table(&self) -> Vec<CellInfo> {
        (0..self.total_cells())
            .map(|c| self.info(c).expect("cell range"))
            .collect()
    }

    /// JSON schema of the cell indexing contract.
    pub fn cell_schema() -> serde_json::Value {
        serde_json::json!({
            "title": "shell cell identity",
            "description": "Cell ids are contiguous: the sigma0 block occupies [0, n_dir), interior cells follow as n_dir + dir_bin*n_rad + rad_bin, and the sigmainf block occupies the final n_dir ids.",
            "type": "object",
            "properties": {
                "kind": { "enum": ["sigma0", "interior", "sigmainf"] },
                "dir_bin": { "type": "integer", "minimum": 0 },
                "rad_bin": { "type": ["integer", "null"], "minimum": 0 }
            },
            "required": ["kind", "dir_bin", "rad_bin"]
        })
    }
}
