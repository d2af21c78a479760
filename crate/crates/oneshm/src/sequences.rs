//! Parametric families of oscillating and concentrating fields.
//!
//! A [`SequenceFamily`] describes a bounded sequence `u_n` on a fixed torus
//! grid: a construction rule, the weak limit it converges to, and optional
//! amplitude and length-scale schedules. [`SequenceFamily::generate`]
//! realises one element and enforces the representability checks — lattice
//! membership for pure oscillations, spectral headroom for windowed ones,
//! and a minimum cell width for concentrations.

use crate::error::{Error, Result};
use crate::grid::{dft_forward, dft_inverse, pointwise_mul, Field, PhysTestFn, TorusGrid};
use crate::windows::taper_profile;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Minimum number of grid cells across a concentration profile.
pub const MIN_CONCENTRATION_CELLS: f64 = 4.0;

/// A positive scalar schedule `n ↦ s_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScaleSchedule {
    /// `s_n = coeff · n^exponent`.
    Power { coeff: f64, exponent: f64 },
    /// Explicit values for `n = 1, 2, …, len`.
    Explicit(Vec<f64>),
}

impl ScaleSchedule {
    pub fn power(coeff: f64, exponent: f64) -> Self {
        Self::Power { coeff, exponent }
    }

    pub fn eval(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidSchedule("indices start at n = 1".into()));
        }
        let v = match self {
            Self::Power { coeff, exponent } => coeff * (n as f64).powf(*exponent),
            Self::Explicit(vals) => *vals.get(n - 1).ok_or_else(|| {
                Error::InvalidSchedule(format!(
                    "explicit schedule has {} entries, asked for n = {n}",
                    vals.len()
                ))
            })?,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "schedule value at n = {n} is {v}, must be positive and finite"
            )));
        }
        Ok(v)
    }

    pub fn values(&self, n_list: &[usize]) -> Result<Vec<f64>> {
        n_list.iter().map(|&n| self.eval(n)).collect()
    }
}

/// Integer oscillation index `round(n^exponent)`.
fn scale_int(n: usize, exponent: f64) -> Result<i64> {
    let m = (n as f64).powf(exponent).round();
    if !(m >= 1.0 && m <= i64::MAX as f64) {
        return Err(Error::InvalidSchedule(format!(
            "oscillation index round({n}^{exponent}) = {m} is not a positive integer"
        )));
    }
    Ok(m as i64)
}

/// One spectral forcing mode of a relaxation system: component `component`
/// receives amplitude `amplitude(n)` at frequency `round(n^exponent) · k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingMode {
    pub component: usize,
    pub k: Vec<i64>,
    pub exponent: f64,
    pub amplitude: ScaleSchedule,
}

/// Construction rule of a sequence family.
#[derive(Clone)]
pub enum FamilyKind {
    /// `u_n(x) = exp(2πi m_n k·x / L)` with `m_n = round(n^exponent)`.
    PlaneWave { k: Vec<i64>, exponent: f64 },
    /// `u_n(x) = cos(2π m_n k·x / L)`: the real part of the plane wave,
    /// carrying half the mass at `+m_n k` and half at `-m_n k`.
    RealCosine { k: Vec<i64>, exponent: f64 },
    /// Sum of two plane waves whose oscillation indices grow at different
    /// rates, so their mass separates under a single length scale.
    TwoScaleSum {
        k_slow: Vec<i64>,
        slow_exponent: f64,
        k_fast: Vec<i64>,
        fast_exponent: f64,
    },
    /// `u_n(x) = ε_n^{-d/2} ρ(dist(x, center) / (ε_n · radius))` with `ρ` the
    /// smooth taper profile: unit-order mass concentrating at `center`.
    Concentration {
        center: Vec<f64>,
        radius: f64,
        eps: ScaleSchedule,
    },
    /// Smooth envelope times a plane wave. The envelope's spectrum sits
    /// below `N/4`, so the carrier index must also stay within `N/4` to keep
    /// the product on the lattice.
    ModulatedOscillation {
        envelope: PhysTestFn,
        k: Vec<i64>,
        exponent: f64,
    },
    /// Solution of the two-component relaxation system
    /// `u_i + ε_n a_i ∂_i u_i = f_i` with spectral forcing modes.
    RelaxationSystem {
        a: [f64; 2],
        eps: ScaleSchedule,
        forcing: Vec<ForcingMode>,
    },
    /// Arbitrary rule `n ↦ u_n`.
    Custom {
        gen: Arc<dyn Fn(usize, &TorusGrid) -> Result<Field> + Send + Sync>,
    },
}

impl std::fmt::Debug for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::PlaneWave { k, exponent } => f
                .debug_struct("PlaneWave")
                .field("k", k)
                .field("exponent", exponent)
                .finish(),
            Self::RealCosine { k, exponent } => f
                .debug_struct("RealCosine")
                .field("k", k)
                .field("exponent", exponent)
                .finish(),
            Self::TwoScaleSum {
                k_slow,
                slow_exponent,
                k_fast,
                fast_exponent,
            } => f
                .debug_struct("TwoScaleSum")
                .field("k_slow", k_slow)
                .field("slow_exponent", slow_exponent)
                .field("k_fast", k_fast)
                .field("fast_exponent", fast_exponent)
                .finish(),
            Self::Concentration { center, radius, eps } => f
                .debug_struct("Concentration")
                .field("center", center)
                .field("radius", radius)
                .field("eps", eps)
                .finish(),
            Self::ModulatedOscillation { k, exponent, .. } => f
                .debug_struct("ModulatedOscillation")
                .field("k", k)
                .field("exponent", exponent)
                .finish(),
            Self::RelaxationSystem { a, eps, forcing } => f
                .debug_struct("RelaxationSystem")
                .field("a", a)
                .field("eps", eps)
                .field("forcing", forcing)
                .finish(),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// What the family converges to weakly.
#[derive(Clone)]
pub enum WeakLimit {
    Zero,
    Known(Arc<Field>),
    Unknown,
}

impl std::fmt::Debug for WeakLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Known(_) => f.write_str("Known(..)"),
            Self::Unknown => f.write_str("Unknown"),
        }
    }
}

/// A parametric family `n ↦ u_n` on a fixed grid.
#[derive(Debug, Clone)]
pub struct SequenceFamily {
    grid: TorusGrid,
    components: usize,
    kind: FamilyKind,
    weak_limit: WeakLimit,
    amplitude: Option<ScaleSchedule>,
    label: String,
}

impl SequenceFamily {
    pub fn plane_wave(grid: TorusGrid, k: &[i64], exponent: f64) -> Result<Self> {
        check_wave_vector(&grid, k)?;
        Ok(Self {
            grid,
            components: 1,
            kind: FamilyKind::PlaneWave {
                k: k.to_vec(),
                exponent,
            },
            weak_limit: WeakLimit::Zero,
            amplitude: None,
            label: format!("plane_wave(k={k:?}, exponent={exponent})"),
        })
    }

    pub fn real_cosine(grid: TorusGrid, k: &[i64], exponent: f64) -> Result<Self> {
        check_wave_vector(&grid, k)?;
        Ok(Self {
            grid,
            components: 1,
            kind: FamilyKind::RealCosine {
                k: k.to_vec(),
                exponent,
            },
            weak_limit: WeakLimit::Zero,
            amplitude: None,
            label: format!("real_cosine(k={k:?}, exponent={exponent})"),
        })
    }

    pub fn two_scale_sum(
        grid: TorusGrid,
        k_slow: &[i64],
        slow_exponent: f64,
        k_fast: &[i64],
        fast_exponent: f64,
    ) -> Result<Self> {
        check_wave_vector(&grid, k_slow)?;
        check_wave_vector(&grid, k_fast)?;
        Ok(Self {
            grid,
            components: 1,
            kind: FamilyKind::TwoScaleSum {
                k_slow: k_slow.to_vec(),
                slow_exponent,
                k_fast: k_fast.to_vec(),
                fast_exponent,
            },
            weak_limit: WeakLimit::Zero,
            amplitude: None,
            label: format!(
                "two_scale_sum(k_slow={k_slow:?}^{slow_exponent}, k_fast={k_fast:?}^{fast_exponent})"
            ),
        })
    }

    pub fn concentration(
        grid: TorusGrid,
        center: &[f64],
        radius: f64,
        eps: ScaleSchedule,
    ) -> Result<Self> {
        if center.len() != grid.dim() {
            return Err(Error::ShapeMismatch(format!(
                "centre has {} coordinates on a {}-dimensional grid",
                center.len(),
                grid.dim()
            )));
        }
        if radius <= 0.0 {
            return Err(Error::InvalidArgument(
                "concentration radius must be positive".into(),
            ));
        }
        Ok(Self {
            grid,
            components: 1,
            kind: FamilyKind::Concentration {
                center: center.to_vec(),
                radius,
                eps,
            },
            weak_limit: WeakLimit::Zero,
            amplitude: None,
            label: format!("concentration(radius={radius})"),
        })
    }

    pub fn modulated(
        grid: TorusGrid,
        envelope: PhysTestFn,
        k: &[i64],
        exponent: f64,
    ) -> Result<Self> {
        check_wave_vector(&grid, k)?;
        if envelope.grid() != &grid {
            return Err(Error::GridMismatch(
                "envelope lives on a different grid".into(),
            ));
        }
        let label = format!("modulated({}, k={k:?}, exponent={exponent})", envelope.label());
        Ok(Self {
            grid,
            components: 1,
            kind: FamilyKind::ModulatedOscillation {
                envelope,
                k: k.to_vec(),
                exponent,
            },
            weak_limit: WeakLimit::Zero,
            amplitude: None,
            label,
        })
    }

    /// Relaxation family with vanishing forcing amplitudes, so the solutions
    /// converge weakly (indeed strongly) to zero. Override the weak limit
    /// with [`Self::with_weak_limit`] for non-vanishing forcing.
    pub fn relaxation(
        grid: TorusGrid,
        a: [f64; 2],
        eps: ScaleSchedule,
        forcing: Vec<ForcingMode>,
    ) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::InvalidSystem(
                "the relaxation system is two-dimensional".into(),
            ));
        }
        if forcing.is_empty() {
            return Err(Error::InvalidSystem("no forcing modes given".into()));
        }
        for mode in &forcing {
            if mode.component >= 2 {
                return Err(Error::InvalidSystem(format!(
                    "forcing component {} out of range for a 2-component system",
                    mode.component
                )));
            }
            check_wave_vector(&grid, &mode.k)?;
        }
        Ok(Self {
            grid,
            components: 2,
            kind: FamilyKind::RelaxationSystem { a, eps, forcing },
            weak_limit: WeakLimit::Zero,
            amplitude: None,
            label: format!("relaxation(a={a:?})"),
        })
    }

    pub fn custom(
        grid: TorusGrid,
        components: usize,
        weak_limit: WeakLimit,
        gen: impl Fn(usize, &TorusGrid) -> Result<Field> + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        if components == 0 {
            return Err(Error::ShapeMismatch("a field needs at least one component".into()));
        }
        Ok(Self {
            grid,
            components,
            kind: FamilyKind::Custom { gen: Arc::new(gen) },
            weak_limit,
            amplitude: None,
            label: label.into(),
        })
    }

    pub fn with_amplitude(mut self, schedule: ScaleSchedule) -> Self {
        self.amplitude = Some(schedule);
        self
    }

    pub fn with_weak_limit(mut self, weak_limit: WeakLimit) -> Self {
        self.weak_limit = weak_limit;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn weak_limit(&self) -> &WeakLimit {
        &self.weak_limit
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Realise the `n`-th element of the family.
    pub fn generate(&self, n: usize) -> Result<Field> {
        if n == 0 {
            return Err(Error::InvalidArgument("family indices start at n = 1".into()));
        }
        let mut u = match &self.kind {
            FamilyKind::PlaneWave { k, exponent } => {
                let kn = scaled_wave_vector(&self.grid, k, *exponent, n)?;
                Field::plane_wave(self.grid.clone(), &kn)?
            }
            FamilyKind::RealCosine { k, exponent } => {
                let kn = scaled_wave_vector(&self.grid, k, *exponent, n)?;
                let neg: Vec<i64> = kn.iter().map(|&c| -c).collect();
                if !self.grid.holds_frequency(&neg) {
                    return Err(Error::Aliasing(format!(
                        "cosine needs both ±{kn:?} on the lattice; the mirror of a \
                         positive-Nyquist frequency is not representable"
                    )));
                }
                let mut w = Field::plane_wave(self.grid.clone(), &kn)?
                    .scaled(Complex64::new(0.5, 0.0));
                w.add_assign(
                    &Field::plane_wave(self.grid.clone(), &neg)?.scaled(Complex64::new(0.5, 0.0)),
                )?;
                w
            }
            FamilyKind::TwoScaleSum {
                k_slow,
                slow_exponent,
                k_fast,
                fast_exponent,
            } => {
                let ks = scaled_wave_vector(&self.grid, k_slow, *slow_exponent, n)?;
                let kf = scaled_wave_vector(&self.grid, k_fast, *fast_exponent, n)?;
                let mut w = Field::plane_wave(self.grid.clone(), &ks)?;
                w.add_assign(&Field::plane_wave(self.grid.clone(), &kf)?)?;
                w
            }
            FamilyKind::Concentration { center, radius, eps } => {
                let eps_n = eps.eval(n)?;
                self.concentration_element(center, radius * eps_n)?
            }
            FamilyKind::ModulatedOscillation { envelope, k, exponent } => {
                let kn = scaled_wave_vector(&self.grid, k, *exponent, n)?;
                let headroom = self.grid.points_per_axis() as i64 / 4;
                if kn.iter().any(|&c| c.abs() > headroom) {
                    return Err(Error::Aliasing(format!(
                        "carrier frequency {kn:?} exceeds the N/4 = {headroom} headroom \
                         reserved for the envelope spectrum"
                    )));
                }
                let carrier = Field::plane_wave(self.grid.clone(), &kn)?;
                pointwise_mul(envelope, &carrier)?
            }
            FamilyKind::RelaxationSystem { a, eps, forcing } => {
                let eps_n = eps.eval(n)?;
                let f = assemble_forcing(&self.grid, forcing, n)?;
                solve_relaxation_system(&f, *a, eps_n)?
            }
            FamilyKind::Custom { gen } => {
                let u = gen(n, &self.grid)?;
                if u.grid() != &self.grid {
                    return Err(Error::GridMismatch(
                        "custom rule produced a field on the wrong grid".into(),
                    ));
                }
                if u.components() != self.components {
                    return Err(Error::ShapeMismatch(format!(
                        "custom rule produced {} components, declared {}",
                        u.components(),
                        self.components
                    )));
                }
                u
            }
        };
        if let Some(amp) = &self.amplitude {
            u = u.scaled(Complex64::new(amp.eval(n)?, 0.0));
        }
        Ok(u)
    }

    /// `ε^{-d/2} ρ(dist / support_radius)` with the taper profile `ρ`.
    ///
    /// This does not route through the test-function smoothness gate — a
    /// concentrating element is supposed to outgrow any fixed resolution —
    /// but it must remain representable: at least
    /// [`MIN_CONCENTRATION_CELLS`] grid cells across the support.
    fn concentration_element(&self, center: &[f64], support_radius: f64) -> Result<Field> {
        let grid = &self.grid;
        let cells_across = 2.0 * support_radius / grid.period() * grid.points_per_axis() as f64;
        if cells_across < MIN_CONCENTRATION_CELLS {
            return Err(Error::UnderResolved(format!(
                "concentration support spans {cells_across:.2} grid cells, fewer than the \
                 required {MIN_CONCENTRATION_CELLS}"
            )));
        }
        let dim = grid.dim();
        let period = grid.period();
        // Amplitude support_radius^{-d/2} makes the continuum mass equal to
        // ∫_{|y|≤1} ρ(|y|)² dy independently of the scale; in one dimension
        // the taper's complementary-squares identity makes that integral
        // exactly 1.
        let eps_pow = support_radius.powf(-(dim as f64) / 2.0);
        let mut data = Vec::with_capacity(grid.total_points());
        for flat in 0..grid.total_points() {
            let x = grid.point(flat);
            let mut r2 = 0.0;
            for a in 0..dim {
                let mut dx = (x[a] - center[a]).rem_euclid(period);
                if dx > period / 2.0 {
                    dx -= period;
                }
                r2 += dx * dx;
            }
            let v = taper_profile(r2.sqrt() / support_radius);
            data.push(Complex64::new(eps_pow * v, 0.0));
        }
        let mut field = Field::zeros(grid.clone(), 1);
        field.component_mut(0).copy_from_slice(&data);
        Ok(field)
    }
}

fn check_wave_vector(grid: &TorusGrid, k: &[i64]) -> Result<()> {
    if k.len() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "wave vector {k:?} on a {}-dimensional grid",
            grid.dim()
        )));
    }
    if k.iter().all(|&c| c == 0) {
        return Err(Error::ZeroFrequency);
    }
    Ok(())
}

fn scaled_wave_vector(grid: &TorusGrid, k: &[i64], exponent: f64, n: usize) -> Result<Vec<i64>> {
    let m = scale_int(n, exponent)?;
    let kn: Vec<i64> = k.iter().map(|&c| m * c).collect();
    if !grid.holds_frequency(&kn) {
        return Err(Error::Aliasing(format!(
            "frequency {kn:?} at n = {n} is off the lattice of N = {}",
            grid.points_per_axis()
        )));
    }
    Ok(kn)
}

fn assemble_forcing(grid: &TorusGrid, forcing: &[ForcingMode], n: usize) -> Result<Field> {
    let mut coeffs = crate::grid::FreqCoeffs::zeros(grid.clone(), 2);
    for mode in forcing {
        let kn = scaled_wave_vector(grid, &mode.k, mode.exponent, n)?;
        let amp = mode.amplitude.eval(n)?;
        let flat = grid.freq_flat(&kn)?;
        coeffs.component_mut(mode.component)[flat] += Complex64::new(amp, 0.0);
    }
    Ok(dft_inverse(&coeffs))
}

/// Solve `u_i + ε a_i ∂_i u_i = f_i` spectrally, component `i` transported
/// along axis `i`.
pub fn solve_relaxation_system(f: &Field, a: [f64; 2], eps: f64) -> Result<Field> {
    let grid = f.grid().clone();
    if grid.dim() != 2 || f.components() != 2 {
        return Err(Error::InvalidSystem(format!(
            "expected a 2-component field on a 2-dimensional grid, got {} components in \
             dimension {}",
            f.components(),
            grid.dim()
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidSystem(format!(
            "relaxation scale must be finite and non-negative, got {eps}"
        )));
    }
    let mut coeffs = dft_forward(f);
    for i in 0..2 {
        let comp = coeffs.component_mut(i);
        for flat in 0..grid.total_points() {
            let xi = grid.freq_real(flat)[i];
            let denom = Complex64::new(1.0, 2.0 * PI * eps * a[i] * xi);
            comp[flat] /= denom;
        }
    }
    Ok(dft_inverse(&coeffs))
}

/// Pairings `‖⟨u_n, φ⟩‖` of family elements against one fixed test function,
/// a concrete proxy for weak convergence to zero.
pub fn weak_null_proxy(
    family: &SequenceFamily,
    n_list: &[usize],
    phi: &PhysTestFn,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let u = family.generate(n)?;
        let mut sq = 0.0;
        for c in 0..u.components() {
            let mut comp = Field::zeros(u.grid().clone(), 1);
            comp.component_mut(0).copy_from_slice(u.component(c));
            sq += phi.inner(&comp)?.norm_sqr();
        }
        out.push(sq.sqrt());
    }
    Ok(out)
}

/// Subtract a known weak limit so the family converges weakly to zero.
///
/// Families already declared [`WeakLimit::Zero`] pass through unchanged; a
/// family with an unknown limit cannot be centred.
pub fn center_sequence(family: &SequenceFamily) -> Result<SequenceFamily> {
    match family.weak_limit() {
        WeakLimit::Zero => Ok(family.clone()),
        WeakLimit::Unknown => Err(Error::WeakLimitUnknown(format!(
            "family '{}' has no declared weak limit to subtract",
            family.label()
        ))),
        WeakLimit::Known(limit) => {
            if limit.grid() != family.grid() || limit.components() != family.components() {
                return Err(Error::GridMismatch(
                    "declared weak limit does not match the family's grid and components".into(),
                ));
            }
            let base = family.clone();
            let limit = limit.clone();
            let label = format!("centered({})", family.label());
            SequenceFamily::custom(
                family.grid().clone(),
                family.components(),
                WeakLimit::Zero,
                move |n, _| base.generate(n)?.sub(&limit),
                label,
            )
        }
    }
}
