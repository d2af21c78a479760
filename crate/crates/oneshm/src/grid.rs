//! Periodic grids, complex fields, and the discrete Fourier transform.
//!
//! All spectral quantities use the Fourier-series convention on the unit
//! torus: the forward transform carries the `1/N^d` factor, so for
//! `period = 1` the coefficient at integer frequency `k` of `e^{2πik·x}` is
//! exactly 1 and Parseval reads `Σ_ξ |c_ξ|² = ∫|u|² dx`.
//!
//! Frequency components live in `(-N/2, N/2]` (the Nyquist index is kept on
//! the positive side so that a wave at `+N/2` keeps its nominal direction).

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

/// Hard cap on `N^d` so a mistyped config cannot exhaust memory.
pub const MAX_TOTAL_POINTS: usize = 1 << 26;

/// Relative spectral-decay threshold for [`PhysTestFn`]: coefficients at
/// `|ξ| ≥ N/4` must stay below this fraction of the peak coefficient.
pub const SMOOTHNESS_DECAY_TOL: f64 = 1e-10;

/// Absolute tolerance for samples outside a declared support box.
pub const SUPPORT_TOL: f64 = 1e-14;

/// A uniform grid on the d-dimensional torus, `d ∈ {1, 2, 3}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points_per_axis: usize,
    period: f64,
}

impl TorusGrid {
    pub fn new(dim: usize, points_per_axis: usize) -> Result<Self> {
        Self::with_period(dim, points_per_axis, 1.0)
    }

    pub fn with_period(dim: usize, points_per_axis: usize, period: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2, or 3, got {dim}"
            )));
        }
        let n = points_per_axis;
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 2, got {n}"
            )));
        }
        let total = n.checked_pow(dim as u32).filter(|&t| t <= MAX_TOTAL_POINTS);
        if total.is_none() {
            return Err(Error::InvalidGrid(format!(
                "{n}^{dim} exceeds the supported total point count {MAX_TOTAL_POINTS}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        Ok(Self { dim, points_per_axis: n, period })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Largest representable frequency component, `N/2`.
    pub fn nyquist(&self) -> i64 {
        (self.points_per_axis / 2) as i64
    }

    /// Axis strides of the row-major layout (axis 0 slowest).
    fn strides(&self) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut s = [0usize; 3];
        let mut acc = 1usize;
        for axis in (0..self.dim).rev() {
            s[axis] = acc;
            acc *= n;
        }
        s
    }

    pub fn coords_of(&self, flat: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut c = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            c[axis] = rest % n;
            rest /= n;
        }
        c
    }

    pub fn flat_of(&self, coords: &[usize]) -> usize {
        let s = self.strides();
        coords
            .iter()
            .enumerate()
            .take(self.dim)
            .map(|(a, &c)| c * s[a])
            .sum()
    }

    /// Physical coordinates of grid point `flat`: `x_a = j_a · period / N`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let c = self.coords_of(flat);
        let h = self.period / self.points_per_axis as f64;
        let mut x = [0.0f64; 3];
        for a in 0..self.dim {
            x[a] = c[a] as f64 * h;
        }
        x
    }

    /// Signed integer frequency of storage index `j`: in `(-N/2, N/2]`.
    pub fn signed_index(&self, j: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Integer frequency vector of a flat spectral index.
    pub fn freq_int(&self, flat: usize) -> [i64; 3] {
        let c = self.coords_of(flat);
        let mut k = [0i64; 3];
        for a in 0..self.dim {
            k[a] = self.signed_index(c[a]);
        }
        k
    }

    /// Real frequency vector `k / period` of a flat spectral index.
    pub fn freq_real(&self, flat: usize) -> [f64; 3] {
        let k = self.freq_int(flat);
        let mut f = [0.0f64; 3];
        for a in 0..self.dim {
            f[a] = k[a] as f64 / self.period;
        }
        f
    }

    /// Whether an integer frequency vector lies on this grid's lattice.
    pub fn holds_frequency(&self, k: &[i64]) -> bool {
        let ny = self.nyquist();
        k.len() == self.dim && k.iter().all(|&c| -ny < c && c <= ny)
    }

    /// Flat spectral index of an on-lattice integer frequency vector.
    pub fn freq_flat(&self, k: &[i64]) -> Result<usize> {
        if !self.holds_frequency(k) {
            return Err(Error::Aliasing(format!(
                "frequency {:?} is outside the lattice of N = {}",
                k, self.points_per_axis
            )));
        }
        let n = self.points_per_axis as i64;
        let coords: Vec<usize> = k.iter().map(|&c| (c.rem_euclid(n)) as usize).collect();
        Ok(self.flat_of(&coords))
    }

    /// Quadrature weight of one grid cell, `(period/N)^d`.
    pub fn cell_volume(&self) -> f64 {
        (self.period / self.points_per_axis as f64).powi(self.dim as i32)
    }
}

/// A complex vector field sampled on a [`TorusGrid`].
///
/// Storage is component-major: component `c` occupies
/// `data[c * total .. (c + 1) * total]` in row-major grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    components: usize,
    data: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid, components: usize) -> Self {
        Self {
            grid,
            components,
            data: vec![Complex64::default(); components * grid.total_points()],
        }
    }

    pub fn from_fn(
        grid: TorusGrid,
        components: usize,
        f: impl Fn(usize, &[f64]) -> Complex64,
    ) -> Self {
        let total = grid.total_points();
        let mut data = Vec::with_capacity(components * total);
        for c in 0..components {
            for flat in 0..total {
                let x = grid.point(flat);
                data.push(f(c, &x[..grid.dim()]));
            }
        }
        Self { grid, components, data }
    }

    /// The scalar wave `e^{2πik·x}` sampled with modular phase arithmetic, so
    /// that its single Fourier coefficient is exact to rounding.
    pub fn plane_wave(grid: TorusGrid, k: &[i64]) -> Result<Self> {
        if !grid.holds_frequency(k) {
            return Err(Error::Aliasing(format!(
                "plane-wave frequency {:?} is off the lattice of N = {}",
                k,
                grid.points_per_axis()
            )));
        }
        let n = grid.points_per_axis() as i64;
        let total = grid.total_points();
        let mut data = Vec::with_capacity(total);
        for flat in 0..total {
            let c = grid.coords_of(flat);
            let mut phase_num = 0i64;
            for a in 0..grid.dim() {
                phase_num = (phase_num + k[a].rem_euclid(n) * c[a] as i64).rem_euclid(n);
            }
            let phase = 2.0 * PI * phase_num as f64 / n as f64;
            data.push(Complex64::new(phase.cos(), phase.sin()));
        }
        Ok(Self { grid, components: 1, data })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let total = self.grid.total_points();
        &self.data[c * total..(c + 1) * total]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let total = self.grid.total_points();
        &mut self.data[c * total..(c + 1) * total]
    }

    pub fn get(&self, c: usize, flat: usize) -> Complex64 {
        self.data[c * self.grid.total_points() + flat]
    }

    /// Component values at one grid point, as a length-`r` vector.
    pub fn value_at(&self, flat: usize) -> Vec<Complex64> {
        (0..self.components).map(|c| self.get(c, flat)).collect()
    }

    pub fn scaled(mut self, s: Complex64) -> Self {
        for v in &mut self.data {
            *v *= s;
        }
        self
    }

    pub fn add_assign(&mut self, other: &Field) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    fn check_same_shape(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid || self.components != other.components {
            return Err(Error::ShapeMismatch(
                "fields differ in grid or component count".into(),
            ));
        }
        Ok(())
    }

    /// `∫ |u|² dx` by the grid quadrature (no transform involved).
    pub fn physical_mass(&self) -> f64 {
        self.grid.cell_volume() * self.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.physical_mass().sqrt()
    }

    /// Max absolute imaginary part relative to the max modulus; 0 for real fields.
    pub fn imag_fraction(&self) -> f64 {
        let max_mod = self.data.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        if max_mod == 0.0 {
            return 0.0;
        }
        let max_im = self.data.iter().map(|v| v.im.abs()).fold(0.0f64, f64::max);
        max_im / max_mod
    }

    /// Write the flat binary layout (see `docs/formats.md`).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"OSHM")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis() as u32).to_le_bytes())?;
        w.write_all(&(self.components as u32).to_le_bytes())?;
        w.write_all(&self.grid.period().to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"OSHM" {
            return Err(Error::Format("bad magic; not a field file".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != 1 {
            return Err(Error::Format(format!("unsupported field format version {version}")));
        }
        r.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf)?;
        let components = u32::from_le_bytes(u32buf) as usize;
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut f64buf)?;
        let period = f64::from_le_bytes(f64buf);
        let grid = TorusGrid::with_period(dim, n, period)?;
        let total = components * grid.total_points();
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            r.read_exact(&mut f64buf)?;
            let re = f64::from_le_bytes(f64buf);
            r.read_exact(&mut f64buf)?;
            let im = f64::from_le_bytes(f64buf);
            data.push(Complex64::new(re, im));
        }
        Ok(Self { grid, components, data })
    }
}

/// Fourier coefficients of a [`Field`], same layout, indexed by frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqCoeffs {
    grid: TorusGrid,
    components: usize,
    data: Vec<Complex64>,
}

impl FreqCoeffs {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let total = self.grid.total_points();
        &self.data[c * total..(c + 1) * total]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let total = self.grid.total_points();
        &mut self.data[c * total..(c + 1) * total]
    }

    pub fn at(&self, c: usize, k: &[i64]) -> Result<Complex64> {
        let flat = self.grid.freq_flat(k)?;
        Ok(self.data[c * self.grid.total_points() + flat])
    }

    /// Coefficient vector (over components) at a flat spectral index.
    pub fn vector_at(&self, flat: usize) -> Vec<Complex64> {
        let total = self.grid.total_points();
        (0..self.components).map(|c| self.data[c * total + flat]).collect()
    }

    pub fn zero_mode(&self, c: usize) -> Complex64 {
        self.data[c * self.grid.total_points()]
    }

    pub fn zeros(grid: TorusGrid, components: usize) -> Self {
        Self {
            grid,
            components,
            data: vec![Complex64::default(); components * grid.total_points()],
        }
    }
}

fn fft_each_axis(data: &mut [Complex64], dim: usize, n: usize, forward: bool) {
    let mut planner = FftPlanner::new();
    let plan = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let mut buf = vec![Complex64::default(); n];
    for axis in 0..dim {
        let inner: usize = n.pow((dim - 1 - axis) as u32);
        let outer: usize = n.pow(axis as u32);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * n * inner + i;
                for j in 0..n {
                    buf[j] = data[base + j * inner];
                }
                plan.process(&mut buf);
                for j in 0..n {
                    data[base + j * inner] = buf[j];
                }
            }
        }
    }
}

/// Forward transform: `c_ξ = (1/N^d) Σ_j u(x_j) e^{-2πi ξ·x_j}`.
pub fn dft_forward(f: &Field) -> FreqCoeffs {
    let grid = *f.grid();
    let total = grid.total_points();
    let mut data = f.data.clone();
    let scale = 1.0 / total as f64;
    for c in 0..f.components {
        fft_each_axis(
            &mut data[c * total..(c + 1) * total],
            grid.dim(),
            grid.points_per_axis(),
            true,
        );
    }
    for v in &mut data {
        *v *= scale;
    }
    FreqCoeffs { grid, components: f.components, data }
}

/// Inverse transform: `u(x_j) = Σ_ξ c_ξ e^{+2πi ξ·x_j}` (exact round trip).
pub fn dft_inverse(c: &FreqCoeffs) -> Field {
    let grid = *c.grid();
    let total = grid.total_points();
    let mut data = c.data.clone();
    for comp in 0..c.components {
        fft_each_axis(
            &mut data[comp * total..(comp + 1) * total],
            grid.dim(),
            grid.points_per_axis(),
            false,
        );
    }
    Field { grid, components: c.components, data }
}

/// `period^d · Σ_ξ |c_ξ|²` over all components — equals `∫|u|²` by Parseval.
pub fn parseval_mass(f: &Field) -> f64 {
    let coeffs = dft_forward(f);
    f.grid().period().powi(f.grid().dim() as i32)
        * coeffs.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
}

/// Multiply a field by a scalar test function, component by component.
pub fn pointwise_mul(phi: &PhysTestFn, u: &Field) -> Result<Field> {
    if phi.grid() != u.grid() {
        return Err(Error::GridMismatch(
            "test function and field live on different grids".into(),
        ));
    }
    let total = u.grid.total_points();
    let mut out = u.clone();
    for c in 0..u.components {
        let slice = &mut out.data[c * total..(c + 1) * total];
        for (v, p) in slice.iter_mut().zip(phi.samples()) {
            *v *= p;
        }
    }
    Ok(out)
}

/// Axis-aligned box used to declare where a test function is supported.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SupportBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl SupportBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(a, &v)| v >= self.lo[a] && v <= self.hi[a])
    }
}

/// A smooth scalar test function sampled on the grid.
///
/// Construction enforces a smoothness proxy: the spectrum must decay below
/// [`SMOOTHNESS_DECAY_TOL`] of its peak before `|ξ| = N/4`, leaving headroom
/// so products with band-limited fields stay alias-free.
#[derive(Clone)]
pub struct PhysTestFn {
    grid: TorusGrid,
    samples: Arc<Vec<Complex64>>,
    declared_support: Option<SupportBox>,
    label: String,
}

impl std::fmt::Debug for PhysTestFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhysTestFn")
            .field("grid", &self.grid)
            .field("label", &self.label)
            .field("declared_support", &self.declared_support)
            .finish()
    }
}

impl PhysTestFn {
    pub fn new(
        grid: TorusGrid,
        samples: Vec<Complex64>,
        declared_support: Option<SupportBox>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if samples.len() != grid.total_points() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} samples, got {}",
                grid.total_points(),
                samples.len()
            )));
        }
        let this = Self {
            grid,
            samples: Arc::new(samples),
            declared_support,
            label: label.into(),
        };
        this.check_smoothness()?;
        this.check_support()?;
        Ok(this)
    }

    pub fn from_fn(
        grid: TorusGrid,
        f: impl Fn(&[f64]) -> Complex64,
        declared_support: Option<SupportBox>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let samples = (0..grid.total_points())
            .map(|flat| {
                let x = grid.point(flat);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::new(grid, samples, declared_support, label)
    }

    pub fn constant(grid: TorusGrid, value: Complex64) -> Self {
        Self {
            grid,
            samples: Arc::new(vec![value; grid.total_points()]),
            declared_support: None,
            label: format!("const({value})"),
        }
    }

    pub fn one(grid: TorusGrid) -> Self {
        Self::constant(grid, Complex64::new(1.0, 0.0))
    }

    /// Real positive function with prescribed radially decreasing spectrum
    /// `ĉ(k) = e^{-|k|²/s}`. Useful when a test needs monotone pairings.
    pub fn gaussian_spectrum(grid: TorusGrid, s: f64) -> Result<Self> {
        let mut coeffs = FreqCoeffs::zeros(grid, 1);
        let total = grid.total_points();
        for flat in 0..total {
            let k = grid.freq_int(flat);
            let k2: f64 = (0..grid.dim()).map(|a| (k[a] * k[a]) as f64).sum();
            coeffs.component_mut(0)[flat] = Complex64::new((-k2 / s).exp(), 0.0);
        }
        let field = dft_inverse(&coeffs);
        Self::new(
            grid,
            field.component(0).to_vec(),
            None,
            format!("gaussian_spectrum(s={s})"),
        )
    }

    /// Compactly supported C-infinity bump of the given radius around
    /// `center`, with periodic wrap-around distance.
    ///
    /// The profile is `cos(π/2 · T(ρ))` with `T` the exponential ramp of
    /// [`crate::windows::smooth_step`]; spreading the transition over the
    /// whole radius gives far better spectral decay than the classical
    /// `exp(-1/(1-ρ²))` bump. The decay gate still needs a reasonably fine
    /// grid: roughly `radius · N ≳ 150` samples across the support.
    pub fn bump(grid: TorusGrid, center: &[f64], radius: f64) -> Result<Self> {
        if radius <= 0.0 || 2.0 * radius >= grid.period() {
            return Err(Error::InvalidArgument(format!(
                "bump radius {radius} must be positive and below half the period"
            )));
        }
        let period = grid.period();
        let dim = grid.dim();
        let mut lo = [0.0f64; 3];
        let mut hi = [0.0f64; 3];
        for a in 0..dim {
            lo[a] = center[a] - radius;
            hi[a] = center[a] + radius;
        }
        let f = move |x: &[f64]| {
            let mut r2 = 0.0;
            for a in 0..dim {
                let mut dx = (x[a] - center[a]).rem_euclid(period);
                if dx > period / 2.0 {
                    dx -= period;
                }
                r2 += dx * dx;
            }
            Complex64::new(crate::windows::taper_profile(r2.sqrt() / radius), 0.0)
        };
        Self::from_fn(
            grid,
            f,
            Some(SupportBox { lo, hi }),
            format!("bump(r={radius})"),
        )
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn declared_support(&self) -> Option<&SupportBox> {
        self.declared_support.as_ref()
    }

    pub fn as_field(&self) -> Field {
        Field {
            grid: self.grid,
            components: 1,
            data: self.samples.to_vec(),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `∫ |φ|² dx` by grid quadrature.
    pub fn squared_mass(&self) -> f64 {
        self.grid.cell_volume() * self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Conjugate-linear pairing `⟨u, φ⟩ = ∫ u φ̄ dx` for a scalar field.
    pub fn inner(&self, u: &Field) -> Result<Complex64> {
        if self.grid() != u.grid() || u.components() != 1 {
            return Err(Error::GridMismatch(
                "inner product needs a scalar field on the same grid".into(),
            ));
        }
        let sum: Complex64 = u
            .component(0)
            .iter()
            .zip(self.samples.iter())
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(sum * self.grid.cell_volume())
    }

    fn check_smoothness(&self) -> Result<()> {
        let coeffs = dft_forward(&self.as_field());
        let spectrum = coeffs.component(0);
        let peak = spectrum.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        if peak == 0.0 {
            return Ok(());
        }
        let quarter = (self.grid.points_per_axis() / 4) as f64;
        let mut worst = 0.0f64;
        for flat in 0..self.grid.total_points() {
            let k = self.grid.freq_int(flat);
            let norm: f64 = (0..self.grid.dim())
                .map(|a| (k[a] * k[a]) as f64)
                .sum::<f64>()
                .sqrt();
            if norm >= quarter {
                worst = worst.max(spectrum[flat].norm());
            }
        }
        if worst > SMOOTHNESS_DECAY_TOL * peak {
            return Err(Error::NotSmooth(format!(
                "'{}': spectrum at |ξ| ≥ N/4 reaches {:.3e} of peak (limit {:.0e})",
                self.label,
                worst / peak,
                SMOOTHNESS_DECAY_TOL
            )));
        }
        Ok(())
    }

    fn check_support(&self) -> Result<()> {
        let Some(support) = &self.declared_support else {
            return Ok(());
        };
        for flat in 0..self.grid.total_points() {
            let x = self.grid.point(flat);
            if !support.contains(&x[..self.grid.dim()]) && self.samples[flat].norm() > SUPPORT_TOL {
                return Err(Error::SupportViolated(format!(
                    "'{}': |φ| = {:.3e} at {:?} outside the declared box",
                    self.label,
                    self.samples[flat].norm(),
                    &x[..self.grid.dim()]
                )));
            }
        }
        Ok(())
    }
}
