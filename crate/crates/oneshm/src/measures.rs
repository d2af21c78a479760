//! Empirical microlocal defect objects: pairings, histogram measures on the
//! product of the torus with the compactified shell, and their projections.
//!
//! The central quantity is the pairing
//! `M_n = Σ_{ξ≠0} (φ₁uₙ)^(ξ) ⊗ conj((φ₂uₙ)^(ξ)) · ψ(ω_n ξ)`,
//! an r×r matrix per sequence index. Binning the same summands by shell cell
//! instead of weighting by ψ gives the histogram measure
//! [`EmpiricalMeasure`]; forgetting radius gives the H-measure marginal,
//! dropping the escaping sphere gives the semiclassical one.
//!
//! The zero frequency is excluded from every sum — shell test functions are
//! undefined there, and a centred sequence carries no limiting mass at 0 —
//! and its energy is reported separately so bookkeeping stays exact.

use crate::error::{Error, Result};
use crate::grid::{dft_forward, pointwise_mul, PhysTestFn, TorusGrid};
use crate::sequences::{ScaleSchedule, SequenceFamily, WeakLimit};
use crate::shell::{CellInfo, CellKind, ShellBins, ShellPoint, ShellTestFn};
use crate::windows::{PhysPartition, PARTITION_TOL};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub type CMat = DMatrix<Complex64>;

/// Threshold on the imaginary energy fraction below which a generated field
/// counts as real-valued.
pub const REAL_SOURCE_TOL: f64 = 1e-12;

/// How a finite trace of pairings is extrapolated to its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitMethod {
    /// The value at the largest index.
    LastValue,
    /// Aitken acceleration on the last three values, assuming the deficit
    /// decays geometrically along the index list; falls back to the last
    /// value where the differences vanish.
    RichardsonGeometric,
}

pub(crate) fn aitken(x0: Complex64, x1: Complex64, x2: Complex64) -> Complex64 {
    let d1 = x1 - x0;
    let d2 = x2 - x1;
    let den = d2 - d1;
    let scale = x0.norm().max(x1.norm()).max(x2.norm()).max(1e-300);
    if den.norm() <= 1e-14 * scale {
        x2
    } else {
        x2 - d2 * d2 / den
    }
}

fn extrapolate(values: &[CMat], method: LimitMethod) -> CMat {
    let last = values.last().expect("nonempty trace").clone();
    match method {
        LimitMethod::LastValue => last,
        LimitMethod::RichardsonGeometric => {
            if values.len() < 3 {
                return last;
            }
            let [x0, x1, x2] = [
                &values[values.len() - 3],
                &values[values.len() - 2],
                &values[values.len() - 1],
            ];
            let mut out = last;
            for i in 0..out.nrows() {
                for j in 0..out.ncols() {
                    out[(i, j)] = aitken(x0[(i, j)], x1[(i, j)], x2[(i, j)]);
                }
            }
            out
        }
    }
}

/// A finite trace of pairing matrices along an index list.
#[derive(Debug, Clone)]
pub struct PairingTrace {
    pub n_list: Vec<usize>,
    pub values: Vec<CMat>,
    /// Magnitude of the excluded zero-frequency term, per index.
    pub zero_mode_norms: Vec<f64>,
    pub limit_estimate: CMat,
    pub limit_method: LimitMethod,
}

fn check_increasing(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::InvalidArgument("empty index list".into()));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "index list must be strictly increasing, got {n_list:?}"
        )));
    }
    Ok(())
}

fn require_centered(fam: &SequenceFamily) -> Result<()> {
    match fam.weak_limit() {
        WeakLimit::Zero => Ok(()),
        WeakLimit::Known(_) => Err(Error::NotCentered(format!(
            "family '{}' has a nonzero weak limit; subtract it with center_sequence first",
            fam.label()
        ))),
        WeakLimit::Unknown => Err(Error::WeakLimitUnknown(format!(
            "family '{}' has an unknown weak limit; the pairing is only meaningful for \
             sequences converging weakly to zero",
            fam.label()
        ))),
    }
}

/// `m += w · v₁ v₂^*`.
fn accumulate_outer(m: &mut CMat, v1: &[Complex64], v2: &[Complex64], w: Complex64) {
    for i in 0..v1.len() {
        for j in 0..v2.len() {
            m[(i, j)] += w * v1[i] * v2[j].conj();
        }
    }
}

/// Evaluate the defining pairing along an index list.
///
/// For each `n` the element is generated, windowed by the two physical test
/// functions, transformed, and summed against `ψ(ω_n ξ)` over all nonzero
/// lattice frequencies. The quadrature weight `L^d` makes the value with
/// `ψ ≡ 1`, `φ ≡ 1` equal to the physical mass of the element.
pub fn pairing(
    fam: &SequenceFamily,
    phi1: &PhysTestFn,
    phi2: &PhysTestFn,
    psi: &ShellTestFn,
    omega: &ScaleSchedule,
    n_list: &[usize],
    method: LimitMethod,
) -> Result<PairingTrace> {
    check_increasing(n_list)?;
    require_centered(fam)?;
    let grid = fam.grid();
    if phi1.grid() != grid || phi2.grid() != grid {
        return Err(Error::GridMismatch(
            "physical test functions live on a different grid than the family".into(),
        ));
    }
    if psi.dim() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "shell test function of dimension {} against a {}-dimensional grid",
            psi.dim(),
            grid.dim()
        )));
    }
    let r = fam.components();
    let dim = grid.dim();
    let vol = grid.period().powi(dim as i32);
    let mut values = Vec::with_capacity(n_list.len());
    let mut zero_mode_norms = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let u = fam.generate(n)?;
        let w_n = omega.eval(n)?;
        let c1 = dft_forward(&pointwise_mul(phi1, &u)?);
        let c2 = dft_forward(&pointwise_mul(phi2, &u)?);
        let mut m = CMat::zeros(r, r);
        for flat in 0..grid.total_points() {
            let v1 = c1.vector_at(flat);
            let v2 = c2.vector_at(flat);
            if flat == 0 {
                let n1: f64 = v1.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let n2: f64 = v2.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                zero_mode_norms.push(vol * n1 * n2);
                continue;
            }
            let f = grid.freq_real(flat);
            let eta: Vec<f64> = (0..dim).map(|a| w_n * f[a]).collect();
            let w = psi.eval(&eta)? * vol;
            accumulate_outer(&mut m, &v1, &v2, w);
        }
        values.push(m);
    }
    let limit_estimate = extrapolate(&values, method);
    Ok(PairingTrace {
        n_list: n_list.to_vec(),
        values,
        zero_mode_norms,
        limit_estimate,
        limit_method: method,
    })
}

/// Histogram measure on (physical cell) × (shell cell) for one element.
///
/// Alongside the r×r mass matrix, each cell keeps the trace-weighted mean
/// direction and mean scaled frequency of its contributing modes, so that
/// projections can pair test functions exactly whenever the underlying
/// measure is atomic within the cell.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    grid: TorusGrid,
    bins: ShellBins,
    phys_centers: Vec<[f64; 3]>,
    r: usize,
    /// Indexed `p * bins.total_cells() + cell`.
    mass: Vec<CMat>,
    wdir: Vec<[f64; 3]>,
    weta: Vec<[f64; 3]>,
    wtr: Vec<f64>,
    zero_mode_mass: CMat,
    expected_mass: f64,
    n_used: usize,
    omega_used: f64,
    source_real: bool,
    family_label: String,
}

/// Bin one element of a centred family into an [`EmpiricalMeasure`].
pub fn empirical_measure(
    fam: &SequenceFamily,
    partition: &PhysPartition,
    omega: &ScaleSchedule,
    n: usize,
    bins: &ShellBins,
) -> Result<EmpiricalMeasure> {
    require_centered(fam)?;
    let grid = fam.grid();
    if partition.grid() != grid {
        return Err(Error::GridMismatch(
            "partition lives on a different grid than the family".into(),
        ));
    }
    if bins.dim() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "shell bins of dimension {} against a {}-dimensional grid",
            bins.dim(),
            grid.dim()
        )));
    }
    partition.verify_squared_unity(PARTITION_TOL)?;
    let u = fam.generate(n)?;
    let omega_n = omega.eval(n)?;
    let r = fam.components();
    let dim = grid.dim();
    let vol = grid.period().powi(dim as i32);
    let n_cells = bins.total_cells();
    let n_phys = partition.len();
    let mut mass = vec![CMat::zeros(r, r); n_phys * n_cells];
    let mut wdir = vec![[0.0f64; 3]; n_phys * n_cells];
    let mut weta = vec![[0.0f64; 3]; n_phys * n_cells];
    let mut wtr = vec![0.0f64; n_phys * n_cells];
    let mut zero_mode_mass = CMat::zeros(r, r);
    let mut expected_mass = 0.0;
    for p in 0..n_phys {
        let windowed = pointwise_mul(partition.window(p), &u)?;
        expected_mass += windowed.physical_mass();
        let coeffs = dft_forward(&windowed);
        for flat in 0..grid.total_points() {
            let v = coeffs.vector_at(flat);
            if flat == 0 {
                accumulate_outer(&mut zero_mode_mass, &v, &v, Complex64::new(vol, 0.0));
                continue;
            }
            let f = grid.freq_real(flat);
            let eta: Vec<f64> = (0..dim).map(|a| omega_n * f[a]).collect();
            let cell = bins.classify(&eta)?;
            let idx = p * n_cells + cell;
            let tr: f64 = vol * v.iter().map(|z| z.norm_sqr()).sum::<f64>();
            accumulate_outer(&mut mass[idx], &v, &v, Complex64::new(vol, 0.0));
            wtr[idx] += tr;
            let fnorm = crate::shell::norm(&f[..dim]);
            for a in 0..dim {
                wdir[idx][a] += tr * f[a] / fnorm;
                weta[idx][a] += tr * eta[a];
            }
        }
    }
    Ok(EmpiricalMeasure {
        grid: grid.clone(),
        bins: bins.clone(),
        phys_centers: (0..n_phys)
            .map(|p| {
                let c = partition.center(p);
                let mut out = [0.0f64; 3];
                out[..c.len()].copy_from_slice(c);
                out
            })
            .collect(),
        r,
        mass,
        wdir,
        weta,
        wtr,
        zero_mode_mass,
        expected_mass,
        n_used: n,
        omega_used: omega_n,
        source_real: u.imag_fraction() < REAL_SOURCE_TOL,
        family_label: fam.label().to_string(),
    })
}

impl EmpiricalMeasure {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn bins(&self) -> &ShellBins {
        &self.bins
    }

    pub fn components(&self) -> usize {
        self.r
    }

    pub fn n_phys(&self) -> usize {
        self.phys_centers.len()
    }

    pub fn phys_center(&self, p: usize) -> [f64; 3] {
        self.phys_centers[p]
    }

    pub fn n_used(&self) -> usize {
        self.n_used
    }

    pub fn omega_used(&self) -> f64 {
        self.omega_used
    }

    pub fn source_real(&self) -> bool {
        self.source_real
    }

    pub fn family_label(&self) -> &str {
        &self.family_label
    }

    pub fn zero_mode_mass(&self) -> &CMat {
        &self.zero_mode_mass
    }

    pub fn mass_matrix(&self, p: usize, cell: usize) -> &CMat {
        &self.mass[p * self.bins.total_cells() + cell]
    }

    pub fn cell_trace(&self, p: usize, cell: usize) -> f64 {
        self.wtr[p * self.bins.total_cells() + cell]
    }

    /// Iterate all (phys cell, shell cell, mass matrix) triples in index
    /// order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, &CMat)> {
        let n_cells = self.bins.total_cells();
        self.mass
            .iter()
            .enumerate()
            .map(move |(idx, m)| (idx / n_cells, idx % n_cells, m))
    }

    /// Total trace mass over all cells, zero mode excluded.
    pub fn total_trace(&self) -> f64 {
        self.wtr.iter().sum()
    }

    /// Trace mass on cells of one kind, summed over physical cells.
    pub fn band_trace(&self, kind: CellKind) -> f64 {
        let n_cells = self.bins.total_cells();
        let mut total = 0.0;
        for (idx, &t) in self.wtr.iter().enumerate() {
            let info = self.bins.info(idx % n_cells).expect("cell range");
            if info.kind == kind {
                total += t;
            }
        }
        total
    }

    /// Trace mass on the escaping sphere.
    pub fn sigma_inf_mass(&self) -> f64 {
        self.band_trace(CellKind::SigmaInf)
    }

    /// Diagonal entry `i` summed over cells satisfying the predicate.
    pub fn component_mass_where(
        &self,
        i: usize,
        mut pred: impl FnMut(&CellInfo) -> bool,
    ) -> f64 {
        let mut total = 0.0;
        for (_, cell, m) in self.cells() {
            let info = self.bins.info(cell).expect("cell range");
            if pred(&info) {
                total += m[(i, i)].re;
            }
        }
        total
    }

    /// Diagonal entry `i` summed over everything.
    pub fn component_mass(&self, i: usize) -> f64 {
        self.mass.iter().map(|m| m[(i, i)].re).sum()
    }

    /// Largest deviation of any cell matrix from its own adjoint.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in &self.mass {
            for i in 0..self.r {
                for j in 0..self.r {
                    worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
                }
            }
        }
        worst
    }

    /// Smallest diagonal entry over all cell matrices.
    pub fn min_diagonal(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for m in &self.mass {
            for i in 0..self.r {
                worst = worst.min(m[(i, i)].re);
            }
        }
        worst
    }

    /// Relative defect of `Σ cells + zero mode` against the windowed
    /// physical masses recorded at construction.
    pub fn bookkeeping_defect(&self) -> f64 {
        let total = self.total_trace()
            + (0..self.r).map(|i| self.zero_mode_mass[(i, i)].re).sum::<f64>();
        (total - self.expected_mass).abs() / self.expected_mass.max(1e-300)
    }

    /// Trace-weighted representative of a cell, if it carries mass.
    ///
    /// Interior cells yield the weighted mean of the scaled frequencies that
    /// landed there; boundary cells the weighted mean direction. For a
    /// single-mode cell this is the mode itself.
    pub fn weighted_representative(&self, p: usize, cell: usize) -> Option<ShellPoint> {
        let idx = p * self.bins.total_cells() + cell;
        let t = self.wtr[idx];
        if t <= 0.0 {
            return None;
        }
        let info = self.bins.info(cell).expect("cell range");
        let dim = self.grid.dim();
        Some(match info.kind {
            CellKind::Interior => {
                ShellPoint::Interior((0..dim).map(|a| self.weta[idx][a] / t).collect())
            }
            CellKind::Sigma0 | CellKind::SigmaInf => {
                let mut d: Vec<f64> = (0..dim).map(|a| self.wdir[idx][a] / t).collect();
                let n = crate::shell::norm(&d);
                if n > 0.0 {
                    d.iter_mut().for_each(|c| *c /= n);
                } else {
                    d = self.bins.dir_centroid(info.dir_bin);
                }
                if info.kind == CellKind::Sigma0 {
                    ShellPoint::Sigma0(d)
                } else {
                    ShellPoint::SigmaInf(d)
                }
            }
        })
    }

    /// Pair the measure against a shell test function, evaluating it at the
    /// weighted representative of each occupied cell.
    pub fn pair_shell(&self, psi: &ShellTestFn) -> Result<CMat> {
        let mut out = CMat::zeros(self.r, self.r);
        let n_cells = self.bins.total_cells();
        for (idx, m) in self.mass.iter().enumerate() {
            let (p, cell) = (idx / n_cells, idx % n_cells);
            let Some(rep) = self.weighted_representative(p, cell) else {
                continue;
            };
            let w = psi.eval_point(&rep)?;
            out += m.map(|z| z * w);
        }
        Ok(out)
    }

    /// Deterministic JSON rendering of the whole measure.
    pub fn to_json(&self) -> serde_json::Value {
        let n_cells = self.bins.total_cells();
        let mut cells = Vec::new();
        for (idx, m) in self.mass.iter().enumerate() {
            if self.wtr[idx] == 0.0 {
                continue;
            }
            let (p, cell) = (idx / n_cells, idx % n_cells);
            let info = self.bins.info(cell).expect("cell range");
            cells.push(serde_json::json!({
                "phys_cell": p,
                "cell": cell,
                "kind": info.kind,
                "dir_bin": info.dir_bin,
                "rad_bin": info.rad_bin,
                "trace": self.wtr[idx],
                "matrix": cmat_to_json(m),
            }));
        }
        serde_json::json!({
            "object": "empirical_measure",
            "family": self.family_label,
            "n": self.n_used,
            "omega": self.omega_used,
            "components": self.r,
            "source_real": self.source_real,
            "bins": {
                "dim": self.bins.dim(),
                "n_dir": self.bins.n_dir(),
                "n_rad": self.bins.n_rad(),
                "delta": self.bins.delta(),
            },
            "phys_cells": self.phys_centers.iter()
                .map(|c| c[..self.grid.dim()].to_vec())
                .collect::<Vec<_>>(),
            "total_trace": self.total_trace(),
            "zero_mode": cmat_to_json(&self.zero_mode_mass),
            "cells": cells,
        })
    }

    /// CSV rendering: one row per (physical cell, shell cell), matrices
    /// flattened to `m{i}{j}_re`/`_im` columns.
    pub fn to_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut header = String::from("phys_cell,cell,kind,dir_bin,rad_bin,trace");
        for i in 0..self.r {
            for j in 0..self.r {
                header.push_str(&format!(",m{i}{j}_re,m{i}{j}_im"));
            }
        }
        writeln!(w, "{header}")?;
        let n_cells = self.bins.total_cells();
        for (idx, m) in self.mass.iter().enumerate() {
            let (p, cell) = (idx / n_cells, idx % n_cells);
            let info = self.bins.info(cell).expect("cell range");
            let kind = match info.kind {
                CellKind::Sigma0 => "sigma0",
                CellKind::Interior => "interior",
                CellKind::SigmaInf => "sigmainf",
            };
            let rad = info
                .rad_bin
                .map(|b| b.to_string())
                .unwrap_or_default();
            let mut row = format!("{p},{cell},{kind},{},{rad},{}", info.dir_bin, self.wtr[idx]);
            for i in 0..self.r {
                for j in 0..self.r {
                    row.push_str(&format!(",{},{}", m[(i, j)].re, m[(i, j)].im));
                }
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// Matrix as nested `[re, im]` pairs.
pub fn cmat_to_json(m: &CMat) -> serde_json::Value {
    serde_json::Value::Array(
        (0..m.nrows())
            .map(|i| {
                serde_json::Value::Array(
                    (0..m.ncols())
                        .map(|j| serde_json::json!([m[(i, j)].re, m[(i, j)].im]))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Direction marginal: the H-measure seen by the histogram, radius
/// forgotten. Mass from both boundary spheres is folded into the direction
/// bins.
#[derive(Debug, Clone)]
pub struct HMeasure {
    r: usize,
    n_dir: usize,
    n_phys: usize,
    bins: ShellBins,
    /// Indexed `p * n_dir + dir_bin`.
    mass: Vec<CMat>,
    wdir: Vec<[f64; 3]>,
    wtr: Vec<f64>,
}

/// Collapse radial structure: sum interior bands and both boundary spheres
/// into their direction bins.
pub fn h_projection(em: &EmpiricalMeasure) -> HMeasure {
    let n_dir = em.bins().n_dir();
    let n_phys = em.n_phys();
    let r = em.components();
    let n_cells = em.bins().total_cells();
    let mut mass = vec![CMat::zeros(r, r); n_phys * n_dir];
    let mut wdir = vec![[0.0f64; 3]; n_phys * n_dir];
    let mut wtr = vec![0.0f64; n_phys * n_dir];
    for (idx, m) in em.mass.iter().enumerate() {
        let (p, cell) = (idx / n_cells, idx % n_cells);
        let info = em.bins().info(cell).expect("cell range");
        let out = p * n_dir + info.dir_bin;
        mass[out] += m;
        for a in 0..3 {
            wdir[out][a] += em.wdir[idx][a];
        }
        wtr[out] += em.wtr[idx];
    }
    HMeasure {
        r,
        n_dir,
        n_phys,
        bins: em.bins().clone(),
        mass,
        wdir,
        wtr,
    }
}

impl HMeasure {
    pub fn components(&self) -> usize {
        self.r
    }

    pub fn n_dir(&self) -> usize {
        self.n_dir
    }

    pub fn n_phys(&self) -> usize {
        self.n_phys
    }

    pub fn mass_matrix(&self, p: usize, dir_bin: usize) -> &CMat {
        &self.mass[p * self.n_dir + dir_bin]
    }

    pub fn dir_trace(&self, dir_bin: usize) -> f64 {
        (0..self.n_phys)
            .map(|p| self.wtr[p * self.n_dir + dir_bin])
            .sum()
    }

    pub fn total_trace(&self) -> f64 {
        self.wtr.iter().sum()
    }

    /// Pair against a function of direction, evaluated at each occupied
    /// bin's trace-weighted mean direction (the interior rule of `g` at
    /// radius one).
    pub fn pair(&self, g: &ShellTestFn) -> Result<CMat> {
        let mut out = CMat::zeros(self.r, self.r);
        for (idx, m) in self.mass.iter().enumerate() {
            let t = self.wtr[idx];
            if t <= 0.0 {
                continue;
            }
            let dir_bin = idx % self.n_dir;
            let dim = self.bins.dim();
            let mut d: Vec<f64> = (0..dim).map(|a| self.wdir[idx][a] / t).collect();
            let n = crate::shell::norm(&d);
            if n > 0.0 {
                d.iter_mut().for_each(|c| *c /= n);
            } else {
                d = self.bins.dir_centroid(dir_bin);
            }
            let w = g.eval(&d)?;
            out += m.map(|z| z * w);
        }
        Ok(out)
    }
}

/// Semiclassical marginal: interior cells with their mean scaled
/// frequencies, a synthetic atom at frequency zero carrying the
/// vanishing-sphere mass, and the escaping-sphere mass dropped (recorded as
/// `escaped_trace`).
#[derive(Debug, Clone)]
pub struct ScMeasure {
    r: usize,
    n_phys: usize,
    /// Occupied interior cells: (phys cell, shell cell, mean η, mass).
    interior: Vec<(usize, usize, Vec<f64>, CMat)>,
    /// Per physical cell, the mass folded into the frequency-zero atom.
    zero_atom: Vec<CMat>,
    escaped_trace: f64,
}

/// Project to the semiclassical measure: continuous-at-infinity test
/// functions see the vanishing sphere only through their value at 0 and see
/// nothing on the escaping sphere.
pub fn sc_projection(em: &EmpiricalMeasure) -> ScMeasure {
    let n_cells = em.bins().total_cells();
    let r = em.components();
    let n_phys = em.n_phys();
    let mut interior = Vec::new();
    let mut zero_atom = vec![CMat::zeros(r, r); n_phys];
    let mut escaped_trace = 0.0;
    for (idx, m) in em.mass.iter().enumerate() {
        if em.wtr[idx] == 0.0 {
            continue;
        }
        let (p, cell) = (idx / n_cells, idx % n_cells);
        let info = em.bins().info(cell).expect("cell range");
        match info.kind {
            CellKind::Interior => {
                let t = em.wtr[idx];
                let dim = em.grid().dim();
                let eta: Vec<f64> = (0..dim).map(|a| em.weta[idx][a] / t).collect();
                interior.push((p, cell, eta, m.clone()));
            }
            CellKind::Sigma0 => zero_atom[p] += m,
            CellKind::SigmaInf => escaped_trace += em.wtr[idx],
        }
    }
    ScMeasure {
        r,
        n_phys,
        interior,
        zero_atom,
        escaped_trace,
    }
}

impl ScMeasure {
    pub fn components(&self) -> usize {
        self.r
    }

    pub fn n_phys(&self) -> usize {
        self.n_phys
    }

    pub fn interior_cells(&self) -> &[(usize, usize, Vec<f64>, CMat)] {
        &self.interior
    }

    pub fn zero_atom(&self, p: usize) -> &CMat {
        &self.zero_atom[p]
    }

    pub fn zero_atom_trace(&self) -> f64 {
        self.zero_atom
            .iter()
            .map(|m| (0..self.r).map(|i| m[(i, i)].re).sum::<f64>())
            .sum()
    }

    pub fn interior_trace(&self) -> f64 {
        self.interior
            .iter()
            .map(|(_, _, _, m)| (0..self.r).map(|i| m[(i, i)].re).sum::<f64>())
            .sum()
    }

    pub fn escaped_trace(&self) -> f64 {
        self.escaped_trace
    }

    pub fn total_trace(&self) -> f64 {
        self.interior_trace() + self.zero_atom_trace()
    }

    /// Pair against a continuous-at-infinity test function: `h` at each
    /// interior cell's mean frequency, `h(0)` on the zero atom.
    pub fn pair_c0(&self, h: impl Fn(&[f64]) -> Complex64) -> CMat {
        let mut out = CMat::zeros(self.r, self.r);
        for (_, _, eta, m) in &self.interior {
            let w = h(eta);
            out += m.map(|z| z * w);
        }
        let dim = self
            .interior
            .first()
            .map(|(_, _, eta, _)| eta.len())
            .unwrap_or(1);
        let w0 = h(&vec![0.0; dim]);
        for m in &self.zero_atom {
            out += m.map(|z| z * w0);
        }
        out
    }
}

/// Tail-energy table certifying (or refuting) the oscillatory property.
#[derive(Debug, Clone)]
pub struct OscillatoryIndexReport {
    pub n_list: Vec<usize>,
    pub r_list: Vec<f64>,
    /// `table[ri][ni]` = windowed energy at scaled radius ≥ `r_list[ri]`.
    pub table: Vec<Vec<f64>>,
    /// Last-index value at the largest radius.
    pub limit: f64,
    pub tolerance: f64,
    pub oscillatory: bool,
    /// Set when, at the largest radius, the tail threshold exceeds the
    /// lattice Nyquist radius for every index, so the tail is empty by
    /// discretization rather than by decay.
    pub tail_empty_warning: bool,
}

/// Default verdict tolerance for the oscillatory property.
pub const OSCILLATORY_TOL: f64 = 1e-6;

/// Tail energies `T[r][n] = Σ_{|ξ| ≥ r/ω_n} ‖(φ uₙ)^(ξ)‖²` and the
/// resulting verdict: oscillatory iff the tail at the largest radius has
/// died out by the largest index.
pub fn oscillatory_index(
    fam: &SequenceFamily,
    phi: &PhysTestFn,
    omega: &ScaleSchedule,
    n_list: &[usize],
    r_list: &[f64],
) -> Result<OscillatoryIndexReport> {
    check_increasing(n_list)?;
    if r_list.is_empty() || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "radius list must be nonempty and strictly increasing".into(),
        ));
    }
    if r_list[0] <= 0.0 {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    if matches!(fam.weak_limit(), WeakLimit::Unknown) {
        return Err(Error::WeakLimitUnknown(format!(
            "family '{}' needs a declared weak limit for the oscillatory test",
            fam.label()
        )));
    }
    let grid = fam.grid();
    if phi.grid() != grid {
        return Err(Error::GridMismatch(
            "window lives on a different grid than the family".into(),
        ));
    }
    let dim = grid.dim();
    let vol = grid.period().powi(dim as i32);
    let nyquist_radius =
        (dim as f64).sqrt() * grid.points_per_axis() as f64 / 2.0 / grid.period();
    let mut table = vec![vec![0.0f64; n_list.len()]; r_list.len()];
    let mut empty_at_rmax = vec![false; n_list.len()];
    for (ni, &n) in n_list.iter().enumerate() {
        let u = fam.generate(n)?;
        let w_n = omega.eval(n)?;
        let coeffs = dft_forward(&pointwise_mul(phi, &u)?);
        // Radial energy profile, summed once per n.
        let mut radii_energy: Vec<(f64, f64)> = Vec::new();
        for flat in 1..grid.total_points() {
            let f = grid.freq_real(flat);
            let radius = crate::shell::norm(&f[..dim]);
            let e: f64 = coeffs.vector_at(flat).iter().map(|z| z.norm_sqr()).sum();
            radii_energy.push((radius, vol * e));
        }
        for (ri, &rr) in r_list.iter().enumerate() {
            let threshold = rr / w_n;
            table[ri][ni] = radii_energy
                .iter()
                .filter(|(rad, _)| *rad >= threshold)
                .map(|(_, e)| e)
                .sum();
            if ri == r_list.len() - 1 {
                empty_at_rmax[ni] = threshold > nyquist_radius;
            }
        }
    }
    let limit = table[r_list.len() - 1][n_list.len() - 1];
    Ok(OscillatoryIndexReport {
        n_list: n_list.to_vec(),
        r_list: r_list.to_vec(),
        table,
        limit,
        tolerance: OSCILLATORY_TOL,
        oscillatory: limit <= OSCILLATORY_TOL,
        tail_empty_warning: empty_at_rmax.iter().all(|&b| b),
    })
}

/// Maximum antipodal asymmetry of a real scalar measure's cells.
pub fn antipodal_check(em: &EmpiricalMeasure) -> Result<f64> {
    if em.components() != 1 {
        return Err(Error::InvalidArgument(format!(
            "antipodal symmetry applies to scalar sequences; this measure has {} components",
            em.components()
        )));
    }
    if !em.source_real() {
        return Err(Error::InvalidArgument(
            "antipodal symmetry requires a real-valued sequence".into(),
        ));
    }
    let n_cells = em.bins().total_cells();
    let mut worst = 0.0f64;
    for (idx, m) in em.mass.iter().enumerate() {
        let (p, cell) = (idx / n_cells, idx % n_cells);
        let anti = em.bins().antipodal_cell(cell)?;
        let other = &em.mass[p * n_cells + anti];
        worst = worst.max((m[(0, 0)] - other[(0, 0)]).norm());
    }
    Ok(worst)
}

/// Per-pair support-inclusion report: wherever an off-diagonal entry is
/// present, both diagonal entries must be present, quantitatively via the
/// cellwise Cauchy–Schwarz inequality.
#[derive(Debug, Clone, Serialize)]
pub struct SupportInclusionReport {
    pub tol: f64,
    pub pass: bool,
    /// For each unordered pair (i, j), whether inclusion holds on every cell.
    pub pair_ok: Vec<(usize, usize, bool)>,
    /// Largest value of `|m_ij|² − m_ii·m_jj` seen (≤ 0 when the inequality
    /// is strict everywhere).
    pub worst_excess: f64,
}

pub fn support_inclusion_check(em: &EmpiricalMeasure, tol: f64) -> SupportInclusionReport {
    let r = em.components();
    let mut pair_ok = Vec::new();
    let mut pass = true;
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..r {
        for j in (i + 1)..r {
            let mut ok = true;
            for m in &em.mass {
                let off = m[(i, j)].norm();
                let dii = m[(i, i)].re;
                let djj = m[(j, j)].re;
                let excess = off * off - dii * djj;
                worst_excess = worst_excess.max(excess);
                if off > tol {
                    let cs_ok = off * off <= dii * djj * (1.0 + 1e-10) + tol * tol;
                    if dii <= tol * tol || djj <= tol * tol || !cs_ok {
                        ok = false;
                    }
                }
            }
            pass &= ok;
            pair_ok.push((i, j, ok));
        }
    }
    if worst_excess == f64::NEG_INFINITY {
        worst_excess = 0.0;
    }
    SupportInclusionReport {
        tol,
        pass,
        pair_ok,
        worst_excess,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parseval_mass, Field};
    use crate::sequences::ForcingMode;
    use approx::assert_abs_diff_eq;

    fn trivial(grid: &TorusGrid) -> PhysPartition {
        PhysPartition::trivial(grid.clone())
    }

    fn one(grid: &TorusGrid) -> PhysTestFn {
        PhysTestFn::one(grid.clone())
    }

    #[test]
    fn plane_wave_pairing_is_psi_at_k() {
        // Oscillation at frequency n·k with characteristic length 1/n pins
        // the scaled mode at k itself, for every n.
        let grid = TorusGrid::new(2, 64).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0).unwrap();
        let psi = ShellTestFn::rational(2, &[0, 0], 0, 1).unwrap();
        let trace = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &psi,
            &ScaleSchedule::power(1.0, -1.0),
            &[4, 8, 16],
            LimitMethod::LastValue,
        )
        .unwrap();
        for m in &trace.values {
            assert_abs_diff_eq!(m[(0, 0)].re, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(m[(0, 0)].im, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(trace.limit_estimate[(0, 0)].re, 0.5, epsilon = 1e-12);
        for z in &trace.zero_mode_norms {
            assert_abs_diff_eq!(*z, 0.0, epsilon = 1e-20);
        }
    }

    #[test]
    fn pairing_with_one_recovers_parseval_mass() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[3], 1.0).unwrap();
        let trace = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &ShellTestFn::one(1),
            &ScaleSchedule::power(1.0, -1.0),
            &[2, 4],
            LimitMethod::LastValue,
        )
        .unwrap();
        for m in &trace.values {
            assert_abs_diff_eq!(m[(0, 0)].re, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn two_scale_pairing_against_a_c0_lift() {
        // Slow wave at n·1 scaled by n⁻² shrinks to the vanishing sphere,
        // where the lift of h sees h(0) = 1; fast wave at n²·1 lands at
        // scaled frequency exactly 1, contributing e^{−1}.
        let grid = TorusGrid::new(1, 2048).unwrap();
        let fam = SequenceFamily::two_scale_sum(grid.clone(), &[1], 1.0, &[1], 2.0).unwrap();
        let psi = ShellTestFn::c0(
            1,
            |eta| Complex64::new((-(eta[0] * eta[0])).exp(), 0.0),
            "gauss",
        )
        .unwrap();
        let n_list = [4, 8, 16];
        let trace = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &psi,
            &ScaleSchedule::power(1.0, -2.0),
            &n_list,
            LimitMethod::RichardsonGeometric,
        )
        .unwrap();
        let target = 1.0 + (-1.0f64).exp();
        for (i, m) in trace.values.iter().enumerate() {
            let n = n_list[i] as f64;
            // Slow mode at scaled frequency 1/n, fast mode exactly at 1.
            let exact = (-1.0 / (n * n)).exp() + (-1.0f64).exp();
            assert_abs_diff_eq!(m[(0, 0)].re, exact, epsilon = 1e-12);
        }
        let last_err = (trace.values.last().unwrap()[(0, 0)].re - target).abs();
        let acc_err = (trace.limit_estimate[(0, 0)].re - target).abs();
        assert!(
            acc_err < last_err / 5.0,
            "acceleration should beat the last value: {acc_err} vs {last_err}"
        );
    }

    #[test]
    fn swapping_windows_conjugates_the_pairing() {
        let grid = TorusGrid::new(1, 128).unwrap();
        let g2 = grid.clone();
        let fam = SequenceFamily::custom(
            grid.clone(),
            2,
            WeakLimit::Zero,
            move |n, _| {
                let mut f = Field::zeros(g2.clone(), 2);
                let w1 = Field::plane_wave(g2.clone(), &[n as i64]).unwrap();
                let w2 = Field::plane_wave(g2.clone(), &[2 * n as i64]).unwrap();
                f.component_mut(0).copy_from_slice(w1.component(0));
                let half: Vec<Complex64> = w1
                    .component(0)
                    .iter()
                    .zip(w2.component(0))
                    .map(|(a, b)| 0.5 * a + 0.25 * b)
                    .collect();
                f.component_mut(1).copy_from_slice(&half);
                Ok(f)
            },
            "two_component",
        )
        .unwrap();
        let phi1 = PhysTestFn::gaussian_spectrum(grid.clone(), 8.0).unwrap();
        let phi2 = PhysTestFn::gaussian_spectrum(grid.clone(), 12.0).unwrap();
        let psi = ShellTestFn::rational(1, &[1], 0, 2).unwrap();
        let omega = ScaleSchedule::power(1.0, -1.0);
        let a = pairing(&fam, &phi1, &phi2, &psi, &omega, &[3, 6], LimitMethod::LastValue).unwrap();
        let b = pairing(&fam, &phi2, &phi1, &psi, &omega, &[3, 6], LimitMethod::LastValue).unwrap();
        for (ma, mb) in a.values.iter().zip(&b.values) {
            let diff = (ma - mb.adjoint()).norm();
            assert!(diff < 1e-10, "swap defect {diff}");
        }
    }

    #[test]
    fn measure_places_the_three_schedule_rows() {
        // One plane wave under three characteristic lengths: interior,
        // vanishing sphere, escaping sphere.
        let grid = TorusGrid::new(2, 128).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0).unwrap();
        let bins = ShellBins::new(2, 8, 5, 0.15).unwrap();
        let part = trivial(&grid);
        let n = 64;

        let em = empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -1.0), n, &bins)
            .unwrap();
        let interior = em.band_trace(CellKind::Interior);
        assert_abs_diff_eq!(interior, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(em.total_trace(), 1.0, epsilon = 1e-12);
        // All of it in the cell of (1, 0).
        let cell = bins.classify(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(em.cell_trace(0, cell), 1.0, epsilon = 1e-12);

        let em0 = empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -2.0), n, &bins)
            .unwrap();
        assert_abs_diff_eq!(em0.band_trace(CellKind::Sigma0), 1.0, epsilon = 1e-12);

        let em_inf =
            empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -0.5), n, &bins).unwrap();
        assert_abs_diff_eq!(em_inf.sigma_inf_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn measure_bookkeeping_and_matrix_structure() {
        let grid = TorusGrid::new(1, 2048).unwrap();
        let envelope = PhysTestFn::bump(grid.clone(), &[0.5], 0.3).unwrap();
        let fam = SequenceFamily::modulated(grid.clone(), envelope, &[1], 1.0).unwrap();
        let part = PhysPartition::smooth(grid.clone(), &[2]).unwrap();
        let bins = ShellBins::new(1, 2, 4, 0.1).unwrap();
        let em = empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -1.0), 32, &bins)
            .unwrap();
        assert!(em.bookkeeping_defect() < 1e-10, "{}", em.bookkeeping_defect());
        assert!(em.hermiticity_defect() < 1e-12);
        assert!(em.min_diagonal() >= -1e-12);
    }

    #[test]
    fn centering_is_required() {
        let grid = TorusGrid::new(1, 32).unwrap();
        let g2 = grid.clone();
        let fam = SequenceFamily::custom(
            grid.clone(),
            1,
            WeakLimit::Unknown,
            move |n, _| Field::plane_wave(g2.clone(), &[n as i64]),
            "unknown",
        )
        .unwrap();
        let res = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &ShellTestFn::one(1),
            &ScaleSchedule::power(1.0, -1.0),
            &[2],
            LimitMethod::LastValue,
        );
        assert!(matches!(res, Err(Error::WeakLimitUnknown(_))));
    }

    #[test]
    fn h_projection_pairs_like_the_homogeneous_lift() {
        let grid = TorusGrid::new(2, 64).unwrap();
        // Two modes in two different direction bins.
        let fam = SequenceFamily::two_scale_sum(grid.clone(), &[1, 0], 1.0, &[0, 1], 1.5).unwrap();
        let g = ShellTestFn::homogeneous(2, |e| Complex64::new(e[0] * e[0] - e[1], 0.0), "g");
        let omega = ScaleSchedule::power(1.0, -1.0);
        let bins = ShellBins::new(2, 8, 5, 0.15).unwrap();
        let part = trivial(&grid);
        let n = 9;
        let em = empirical_measure(&fam, &part, &omega, n, &bins).unwrap();
        let marginal = h_projection(&em);
        let via_projection = marginal.pair(&g).unwrap();
        let direct = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &g,
            &omega,
            &[n],
            LimitMethod::LastValue,
        )
        .unwrap();
        let diff = (&via_projection - &direct.values[0]).norm();
        assert!(diff < 1e-13, "projection pairing defect {diff}");
        // Direction marginal: mass 1 at each of the two bins.
        let b1 = bins.dir_bin_of(&[1.0, 0.0]).unwrap();
        let b2 = bins.dir_bin_of(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(marginal.dir_trace(b1), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(marginal.dir_trace(b2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn h_projection_is_schedule_invariant_for_plane_waves() {
        let grid = TorusGrid::new(2, 128).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0).unwrap();
        let g = ShellTestFn::homogeneous(2, |e| Complex64::new(3.0 * e[0] + e[1], 0.0), "g");
        let bins = ShellBins::new(2, 8, 5, 0.15).unwrap();
        let part = trivial(&grid);
        let mut results = Vec::new();
        for omega in [
            ScaleSchedule::power(1.0, -0.5),
            ScaleSchedule::power(1.0, -1.0),
            ScaleSchedule::power(1.0, -2.0),
        ] {
            let em = empirical_measure(&fam, &part, &omega, 64, &bins).unwrap();
            results.push(h_projection(&em).pair(&g).unwrap()[(0, 0)]);
        }
        assert_eq!(results[0], results[1]);
        assert_eq!(results[1], results[2]);
    }

    #[test]
    fn sc_projection_reproduces_the_three_rows() {
        let grid = TorusGrid::new(2, 128).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0).unwrap();
        let bins = ShellBins::new(2, 8, 5, 0.15).unwrap();
        let part = trivial(&grid);
        let n = 64;
        let h = |eta: &[f64]| {
            Complex64::new((-(eta.iter().map(|c| c * c).sum::<f64>())).exp(), 0.0)
        };

        // Slow scale: atom at frequency zero.
        let em = empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -2.0), n, &bins)
            .unwrap();
        let sc = sc_projection(&em);
        assert_abs_diff_eq!(sc.zero_atom_trace(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sc.pair_c0(h)[(0, 0)].re, 1.0, epsilon = 1e-12);

        // Fast scale: everything escapes, the semiclassical measure is zero.
        let em = empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -0.5), n, &bins)
            .unwrap();
        let sc = sc_projection(&em);
        assert_abs_diff_eq!(sc.total_trace(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.escaped_trace(), 1.0, epsilon = 1e-12);

        // Matched scale: atom exactly at k, pairing = h(k).
        let em = empirical_measure(&fam, &part, &ScaleSchedule::power(1.0, -1.0), n, &bins)
            .unwrap();
        let sc = sc_projection(&em);
        assert_abs_diff_eq!(sc.interior_trace(), 1.0, epsilon = 1e-12);
        let got = sc.pair_c0(h)[(0, 0)].re;
        assert_abs_diff_eq!(got, (-1.0f64).exp(), epsilon = 1e-10);
        // Same value as the direct pairing with the lift.
        let psi = ShellTestFn::c0(2, move |eta| h(eta), "gauss").unwrap();
        let direct = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &psi,
            &ScaleSchedule::power(1.0, -1.0),
            &[n],
            LimitMethod::LastValue,
        )
        .unwrap();
        assert_abs_diff_eq!(got, direct.values[0][(0, 0)].re, epsilon = 1e-10);
    }

    #[test]
    fn oscillatory_index_matches_the_worked_rows() {
        let grid = TorusGrid::new(1, 256).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[1], 1.0).unwrap();
        let phi = one(&grid);
        let n_list = [16, 32, 64];
        // Matched schedule: tails beyond r > |k| are empty, oscillatory.
        let rep = oscillatory_index(
            &fam,
            &phi,
            &ScaleSchedule::power(1.0, -1.0),
            &n_list,
            &[2.0, 4.0],
        )
        .unwrap();
        for row in &rep.table {
            for v in row {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-15);
            }
        }
        assert!(rep.oscillatory);

        // Slow schedule: the wave sits beyond r/ω_n whenever √n ≥ r.
        let rep = oscillatory_index(
            &fam,
            &phi,
            &ScaleSchedule::power(1.0, -0.5),
            &n_list,
            &[2.0, 4.0],
        )
        .unwrap();
        assert_abs_diff_eq!(rep.table[1][2], 1.0, epsilon = 1e-12);
        assert!(!rep.oscillatory);
        assert!(!rep.tail_empty_warning);

        // Zero family: trivially oscillatory.
        let g2 = grid.clone();
        let zero = SequenceFamily::custom(
            grid.clone(),
            1,
            WeakLimit::Zero,
            move |_, _| Ok(Field::zeros(g2.clone(), 1)),
            "zero",
        )
        .unwrap();
        let rep = oscillatory_index(
            &zero,
            &phi,
            &ScaleSchedule::power(1.0, -1.0),
            &[2, 4],
            &[1.0],
        )
        .unwrap();
        assert!(rep.oscillatory);

        // Radius so large the tail is off-lattice for every n.
        let rep = oscillatory_index(
            &fam,
            &phi,
            &ScaleSchedule::power(1.0, -1.0),
            &n_list,
            &[10.0],
        )
        .unwrap();
        assert!(rep.tail_empty_warning);
    }

    #[test]
    fn antipodal_symmetry_of_a_real_cosine() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let fam = SequenceFamily::real_cosine(grid.clone(), &[1], 1.0).unwrap();
        let bins = ShellBins::new(1, 2, 3, 0.1).unwrap();
        let em = empirical_measure(
            &fam,
            &trivial(&grid),
            &ScaleSchedule::power(1.0, -1.0),
            8,
            &bins,
        )
        .unwrap();
        assert!(antipodal_check(&em).unwrap() < 1e-12);
        // Mass one half at each of ±1.
        assert_abs_diff_eq!(em.total_trace(), 0.5, epsilon = 1e-12);

        let complex_fam = SequenceFamily::plane_wave(grid.clone(), &[1], 1.0).unwrap();
        let em = empirical_measure(
            &complex_fam,
            &trivial(&grid),
            &ScaleSchedule::power(1.0, -1.0),
            8,
            &bins,
        )
        .unwrap();
        assert!(antipodal_check(&em).is_err());
    }

    #[test]
    fn support_inclusion_on_rank_one_and_diagonal_measures() {
        let grid = TorusGrid::new(2, 32).unwrap();
        // Rank-one: both components carry the same wave, scaled.
        let g2 = grid.clone();
        let fam = SequenceFamily::custom(
            grid.clone(),
            2,
            WeakLimit::Zero,
            move |n, _| {
                let w = Field::plane_wave(g2.clone(), &[n as i64, 0]).unwrap();
                let mut f = Field::zeros(g2.clone(), 2);
                f.component_mut(0).copy_from_slice(w.component(0));
                let doubled: Vec<Complex64> =
                    w.component(0).iter().map(|z| 2.0 * z).collect();
                f.component_mut(1).copy_from_slice(&doubled);
                Ok(f)
            },
            "rank_one",
        )
        .unwrap();
        let bins = ShellBins::new(2, 4, 3, 0.1).unwrap();
        let em = empirical_measure(
            &fam,
            &trivial(&grid),
            &ScaleSchedule::power(1.0, -1.0),
            8,
            &bins,
        )
        .unwrap();
        let rep = support_inclusion_check(&em, 1e-10);
        assert!(rep.pass);
        // Rank-one equality case: excess attains zero.
        assert!(rep.worst_excess.abs() < 1e-10, "{}", rep.worst_excess);

        // Diagonal: components at different frequencies, off-diagonals
        // vanish cellwise.
        let fam = SequenceFamily::relaxation(
            grid.clone(),
            [1.0, 1.0],
            ScaleSchedule::power(1.0, -1.0),
            vec![
                ForcingMode {
                    component: 0,
                    k: vec![0, 3],
                    exponent: 0.0,
                    amplitude: ScaleSchedule::power(1.0, 0.0),
                },
                ForcingMode {
                    component: 1,
                    k: vec![5, 0],
                    exponent: 0.0,
                    amplitude: ScaleSchedule::power(1.0, 0.0),
                },
            ],
        )
        .unwrap();
        let em = empirical_measure(
            &fam,
            &trivial(&grid),
            &ScaleSchedule::power(1.0, -1.0),
            8,
            &bins,
        )
        .unwrap();
        assert!(support_inclusion_check(&em, 1e-10).pass);
    }

    #[test]
    fn serialization_is_deterministic() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let fam = SequenceFamily::real_cosine(grid.clone(), &[1], 1.0).unwrap();
        let bins = ShellBins::new(1, 2, 3, 0.1).unwrap();
        let make = || {
            empirical_measure(
                &fam,
                &trivial(&grid),
                &ScaleSchedule::power(1.0, -1.0),
                8,
                &bins,
            )
            .unwrap()
        };
        let a = make();
        let b = make();
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        a.to_csv(&mut csv_a).unwrap();
        b.to_csv(&mut csv_b).unwrap();
        assert_eq!(csv_a, csv_b);
        let text = String::from_utf8(csv_a).unwrap();
        assert!(text.starts_with("phys_cell,cell,kind,dir_bin,rad_bin,trace,m00_re,m00_im"));
    }

    #[test]
    fn pair_shell_sums_weighted_cell_values() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[2], 1.0).unwrap();
        let bins = ShellBins::new(1, 2, 4, 0.1).unwrap();
        let omega = ScaleSchedule::power(0.5, -1.0);
        let n = 8;
        let em = empirical_measure(&fam, &trivial(&grid), &omega, n, &bins).unwrap();
        // Single mode at scaled frequency 0.5·16/8... omega_n = 0.5/8, mode
        // at ξ = 16, so η = 1. A rational symbol evaluates there as 1/2.
        let psi = ShellTestFn::rational(1, &[0], 0, 1).unwrap();
        let got = em.pair_shell(&psi).unwrap();
        assert_abs_diff_eq!(got[(0, 0)].re, 0.5, epsilon = 1e-12);
        let direct = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &psi,
            &omega,
            &[n],
            LimitMethod::LastValue,
        )
        .unwrap();
        assert_abs_diff_eq!(
            got[(0, 0)].re,
            direct.values[0][(0, 0)].re,
            epsilon = 1e-12
        );
    }

    #[test]
    fn richardson_is_exact_on_constant_traces() {
        let grid = TorusGrid::new(1, 64).unwrap();
        let fam = SequenceFamily::plane_wave(grid.clone(), &[1], 1.0).unwrap();
        let trace = pairing(
            &fam,
            &one(&grid),
            &one(&grid),
            &ShellTestFn::one(1),
            &ScaleSchedule::power(1.0, -1.0),
            &[4, 8, 16],
            LimitMethod::RichardsonGeometric,
        )
        .unwrap();
        assert_abs_diff_eq!(trace.limit_estimate[(0, 0)].re, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn mass_is_conserved_per_window() {
        // Corollary-4-style identity: ψ ≡ 1 pairing equals the sum of
        // windowed Parseval masses minus nothing (zero mode excluded but
        // reported).
        let grid = TorusGrid::new(1, 1024).unwrap();
        let fam = SequenceFamily::concentration(
            grid.clone(),
            &[0.5],
            0.4,
            ScaleSchedule::power(1.0, -0.5),
        )
        .unwrap();
        let u = fam.generate(9).unwrap();
        let phi = one(&grid);
        let trace = pairing(
            &fam,
            &phi,
            &phi,
            &ShellTestFn::one(1),
            &ScaleSchedule::power(1.0, -0.5),
            &[9],
            LimitMethod::LastValue,
        )
        .unwrap();
        let windowed = pointwise_mul(&phi, &u).unwrap();
        let total = trace.values[0][(0, 0)].re + trace.zero_mode_norms[0];
        assert_abs_diff_eq!(total, parseval_mass(&windowed), epsilon = 1e-10);
    }
}
