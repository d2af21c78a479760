//! Experiment configuration: a versioned JSON surface over the library.
//!
//! A config file names a grid, a sequence family, the scale schedules, a
//! physical partition, shell bins, and one action with its parameters.  The
//! loader resolves all of that into ready-to-run library objects, so every
//! structural mistake is caught here — with a field path and a line anchor —
//! before anything heavy starts.  Numeric work never begins on a half-valid
//! config.
//!
//! Messages follow a fixed shape: `origin:line: path: message`.  The line is
//! a best-effort anchor (the first occurrence of the offending key), which is
//! exact for the common case of one key per line.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::compensation::QuadraticForm;
use crate::error::Error;
use crate::grid::{PhysTestFn, TorusGrid};
use crate::measures::CMat;
use crate::measures::LimitMethod;
use crate::sequences::{ForcingMode, ScaleSchedule, SequenceFamily};
use crate::shell::{CellKind, ShellBins, ShellTestFn};
use crate::symbols::{Coefficient, SymbolRegime, SystemDescriptor, Term};
use crate::windows::PhysPartition;

/// Version string accepted in the `version` field and stamped into reports.
pub const SCHEMA_VERSION: &str = "1.0";

/// A validation failure with enough context to locate it in the source file.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub origin: String,
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(
                f,
                "{}:{}: {}: {}",
                self.origin, line, self.path, self.message
            ),
            None => write!(f, "{}: {}: {}", self.origin, self.path, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        Error::Config(e.to_string())
    }
}

/// Which artifact classes a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OutputFormat {
    Json,
    Csv,
    Plotdata,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Plotdata => "plotdata",
        }
    }
}

/// Expected mass placement for the `measure` action.
#[derive(Debug, Clone, Copy)]
pub struct BandExpectation {
    pub kind: CellKind,
    pub min_share: f64,
}

/// The experiment to perform, with all parameters resolved.
pub enum Action {
    Measure {
        n_list: Vec<usize>,
        expect_band: Option<BandExpectation>,
    },
    Project {
        n: usize,
    },
    Oscillatory {
        n_list: Vec<usize>,
        r_list: Vec<f64>,
        expect_oscillatory: Option<bool>,
    },
    Localize {
        system: SystemDescriptor,
        n_list: Vec<usize>,
        expect_localised: Option<bool>,
    },
    Commutator {
        omega_list: Vec<f64>,
        psi: ShellTestFn,
        expect_decay: Option<bool>,
    },
    Compensate {
        form: QuadraticForm,
        system: SystemDescriptor,
        regime: SymbolRegime,
        n_list: Vec<usize>,
        method: LimitMethod,
    },
    Example5 {
        a: [f64; 2],
        forcing: Vec<ForcingMode>,
        n_list: Vec<usize>,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Measure { .. } => "measure",
            Self::Project { .. } => "project",
            Self::Oscillatory { .. } => "oscillatory",
            Self::Localize { .. } => "localize",
            Self::Commutator { .. } => "commutator",
            Self::Compensate { .. } => "compensate",
            Self::Example5 { .. } => "example5",
        }
    }
}

/// A fully resolved experiment: everything the runner needs, already
/// validated and constructed.
pub struct Experiment {
    pub version: String,
    pub grid: TorusGrid,
    pub family: Option<SequenceFamily>,
    pub eps: Option<ScaleSchedule>,
    pub omega: Option<ScaleSchedule>,
    pub partition: PhysPartition,
    pub bins: Option<ShellBins>,
    pub action: Action,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub seed: u64,
    /// SHA-256 of the raw config bytes, stamped into reports.
    pub config_hash: String,
}

impl Experiment {
    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment")
            .field("version", &self.version)
            .field("grid", &(self.grid.dim(), self.grid.points_per_axis()))
            .field("action", &self.action.name())
            .field("seed", &self.seed)
            .field("config_hash", &self.config_hash)
            .finish_non_exhaustive()
    }
}

/// Hex SHA-256 of the raw config text.
pub fn config_hash(raw: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(raw.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Read and validate a config file.
pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let origin = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|e| ConfigError {
        origin: origin.clone(),
        line: None,
        path: "-".into(),
        message: format!("cannot read config: {e}"),
    })?;
    parse_str(&raw, &origin)
}

/// Parse and validate config text; `origin` labels diagnostics (a path or
/// a pseudo-name like `<inline>`).
pub fn parse_str(raw: &str, origin: &str) -> Result<Experiment, ConfigError> {
    let ctx = Ctx { raw, origin };
    let root: Value = serde_json::from_str(raw).map_err(|e| ConfigError {
        origin: origin.to_string(),
        line: Some(e.line()),
        path: "-".into(),
        message: format!("not valid JSON: {e}"),
    })?;
    let root = ctx.as_object(&root, "")?;

    let version = ctx.req_str(root, "", "version")?;
    if version != SCHEMA_VERSION {
        return Err(ctx.err(
            "version",
            format!("unrecognized config version {version:?}; this build reads {SCHEMA_VERSION:?}"),
        ));
    }

    let grid = parse_grid(&ctx, root)?;
    let (eps, omega) = parse_schedules(&ctx, root)?;
    let partition = parse_windows(&ctx, root, &grid)?;
    let bins = parse_bins(&ctx, root, &grid)?;
    let seed = ctx.req_u64(root, "", "seed")?;
    let (output_dir, formats) = parse_output(&ctx, root)?;
    let family = parse_family(&ctx, root, &grid, eps.as_ref())?;
    let action = parse_action(&ctx, root, &grid, eps.as_ref(), omega.as_ref(), family.as_ref())?;

    if bins.is_none() && action_needs_bins(&action) {
        return Err(ctx.err(
            "bins",
            format!("the {:?} action needs shell bins", action.name()),
        ));
    }
    if family.is_none() && action_needs_family(&action) {
        return Err(ctx.err(
            "family",
            format!("the {:?} action needs a sequence family", action.name()),
        ));
    }

    Ok(Experiment {
        version,
        grid,
        family,
        eps,
        omega,
        partition,
        bins,
        action,
        output_dir,
        formats,
        seed,
        config_hash: config_hash(raw),
    })
}

fn action_needs_bins(action: &Action) -> bool {
    matches!(
        action,
        Action::Measure { .. } | Action::Project { .. } | Action::Compensate { .. } | Action::Example5 { .. }
    )
}

fn action_needs_family(action: &Action) -> bool {
    !matches!(action, Action::Example5 { .. })
}

// ---------------------------------------------------------------------------
// section parsers

fn parse_grid(ctx: &Ctx, root: &serde_json::Map<String, Value>) -> Result<TorusGrid, ConfigError> {
    let grid = ctx.req_object(root, "", "grid")?;
    let d = ctx.req_u64(grid, "grid", "d")? as usize;
    let n = ctx.req_u64(grid, "grid", "N")? as usize;
    if n < 2 || n % 2 != 0 {
        return Err(ctx.err("grid.N", format!("points_per_axis must be even (got {n})")));
    }
    TorusGrid::new(d, n).map_err(|e| ctx.err("grid", e.to_string()))
}

fn parse_schedule(
    ctx: &Ctx,
    v: &Value,
    path: &str,
) -> Result<ScaleSchedule, ConfigError> {
    let obj = ctx.as_object(v, path)?;
    let coeff = ctx.req_f64(obj, path, "coeff")?;
    let exponent = ctx.req_f64(obj, path, "exponent")?;
    if !(coeff.is_finite() && coeff > 0.0) {
        return Err(ctx.err(
            &format!("{path}.coeff"),
            format!("schedule coefficient must be positive and finite, got {coeff}"),
        ));
    }
    if !exponent.is_finite() {
        return Err(ctx.err(
            &format!("{path}.exponent"),
            "schedule exponent must be finite".to_string(),
        ));
    }
    Ok(ScaleSchedule::power(coeff, exponent))
}

fn parse_schedules(
    ctx: &Ctx,
    root: &serde_json::Map<String, Value>,
) -> Result<(Option<ScaleSchedule>, Option<ScaleSchedule>), ConfigError> {
    let Some(v) = root.get("schedules") else {
        return Ok((None, None));
    };
    let obj = ctx.as_object(v, "schedules")?;
    for key in obj.keys() {
        if key != "eps" && key != "omega" {
            return Err(ctx.err(
                &format!("schedules.{key}"),
                "unknown schedule; expected eps and/or omega".to_string(),
            ));
        }
    }
    let eps = match obj.get("eps") {
        Some(v) => Some(parse_schedule(ctx, v, "schedules.eps")?),
        None => None,
    };
    let omega = match obj.get("omega") {
        Some(v) => Some(parse_schedule(ctx, v, "schedules.omega")?),
        None => None,
    };
    Ok((eps, omega))
}

fn parse_windows(
    ctx: &Ctx,
    root: &serde_json::Map<String, Value>,
    grid: &TorusGrid,
) -> Result<PhysPartition, ConfigError> {
    let Some(v) = root.get("windows") else {
        return Ok(PhysPartition::trivial(grid.clone()));
    };
    let obj = ctx.as_object(v, "windows")?;
    let kind = ctx.req_str(obj, "windows", "kind")?;
    match kind.as_str() {
        "trivial" => Ok(PhysPartition::trivial(grid.clone())),
        "smooth" => {
            let counts = ctx.req_usize_list(obj, "windows", "counts")?;
            PhysPartition::smooth(grid.clone(), &counts)
                .map_err(|e| ctx.err("windows", e.to_string()))
        }
        other => Err(ctx.err(
            "windows.kind",
            format!("unknown window kind {other:?}; expected trivial or smooth"),
        )),
    }
}

fn parse_bins(
    ctx: &Ctx,
    root: &serde_json::Map<String, Value>,
    grid: &TorusGrid,
) -> Result<Option<ShellBins>, ConfigError> {
    let Some(v) = root.get("bins") else {
        return Ok(None);
    };
    let obj = ctx.as_object(v, "bins")?;
    let n_dir = ctx.req_u64(obj, "bins", "n_dir")? as usize;
    let n_rad = ctx.req_u64(obj, "bins", "n_rad")? as usize;
    let delta = ctx.req_f64(obj, "bins", "delta")?;
    ShellBins::new(grid.dim(), n_dir, n_rad, delta)
        .map(Some)
        .map_err(|e| ctx.err("bins", e.to_string()))
}

fn parse_output(
    ctx: &Ctx,
    root: &serde_json::Map<String, Value>,
) -> Result<(PathBuf, Vec<OutputFormat>), ConfigError> {
    let obj = ctx.req_object(root, "", "output")?;
    let dir = ctx.req_str(obj, "output", "dir")?;
    let formats = ctx.req_array(obj, "output", "formats")?;
    if formats.is_empty() {
        return Err(ctx.err("output.formats", "at least one format is needed".to_string()));
    }
    let mut set = BTreeSet::new();
    for (i, f) in formats.iter().enumerate() {
        let name = ctx.as_str(f, &format!("output.formats[{i}]"))?;
        let fmt = match name.as_str() {
            "json" => OutputFormat::Json,
            "csv" => OutputFormat::Csv,
            "plotdata" => OutputFormat::Plotdata,
            other => {
                return Err(ctx.err(
                    &format!("output.formats[{i}]"),
                    format!("unknown format {other:?}; expected json, csv, or plotdata"),
                ))
            }
        };
        set.insert(fmt);
    }
    Ok((PathBuf::from(dir), set.into_iter().collect()))
}

fn parse_forcing(
    ctx: &Ctx,
    v: &Value,
    path: &str,
    grid: &TorusGrid,
) -> Result<Vec<ForcingMode>, ConfigError> {
    let arr = ctx.as_array(v, path)?;
    if arr.is_empty() {
        return Err(ctx.err(path, "at least one forcing mode is needed".to_string()));
    }
    let mut out = Vec::with_capacity(arr.len());
    for (i, mode) in arr.iter().enumerate() {
        let mpath = format!("{path}[{i}]");
        let obj = ctx.as_object(mode, &mpath)?;
        let component = ctx.req_u64(obj, &mpath, "component")? as usize;
        let k = ctx.req_i64_list(obj, &mpath, "k")?;
        if k.len() != grid.dim() {
            return Err(ctx.err(
                &format!("{mpath}.k"),
                format!("wave vector has {} entries on a {}-dimensional grid", k.len(), grid.dim()),
            ));
        }
        let exponent = ctx.req_f64(obj, &mpath, "exponent")?;
        let amplitude = parse_schedule(
            ctx,
            ctx.req(obj, &mpath, "amplitude")?,
            &format!("{mpath}.amplitude"),
        )?;
        out.push(ForcingMode {
            component,
            k,
            exponent,
            amplitude,
        });
    }
    Ok(out)
}

fn parse_family(
    ctx: &Ctx,
    root: &serde_json::Map<String, Value>,
    grid: &TorusGrid,
    eps: Option<&ScaleSchedule>,
) -> Result<Option<SequenceFamily>, ConfigError> {
    let Some(v) = root.get("family") else {
        return Ok(None);
    };
    let obj = ctx.as_object(v, "family")?;
    let kind = ctx.req_str(obj, "family", "kind")?;
    let need_eps = |what: &str| -> Result<ScaleSchedule, ConfigError> {
        eps.cloned().ok_or_else(|| {
            ctx.err(
                "schedules.eps",
                format!("the {what} family needs an eps schedule"),
            )
        })
    };
    let fam = match kind.as_str() {
        "plane_wave" => {
            let k = ctx.req_i64_list(obj, "family", "k")?;
            let exponent = ctx.req_f64(obj, "family", "exponent")?;
            SequenceFamily::plane_wave(grid.clone(), &k, exponent)
        }
        "real_cosine" => {
            let k = ctx.req_i64_list(obj, "family", "k")?;
            let exponent = ctx.req_f64(obj, "family", "exponent")?;
            SequenceFamily::real_cosine(grid.clone(), &k, exponent)
        }
        "two_scale_sum" => {
            let k_slow = ctx.req_i64_list(obj, "family", "k_slow")?;
            let slow_exponent = ctx.req_f64(obj, "family", "slow_exponent")?;
            let k_fast = ctx.req_i64_list(obj, "family", "k_fast")?;
            let fast_exponent = ctx.req_f64(obj, "family", "fast_exponent")?;
            SequenceFamily::two_scale_sum(grid.clone(), &k_slow, slow_exponent, &k_fast, fast_exponent)
        }
        "concentration" => {
            let center = ctx.req_f64_list(obj, "family", "center")?;
            let radius = ctx.req_f64(obj, "family", "radius")?;
            let eps = need_eps("concentration")?;
            SequenceFamily::concentration(grid.clone(), &center, radius, eps)
        }
        "modulated" => {
            let s = ctx.req_f64(obj, "family", "envelope_s")?;
            let k = ctx.req_i64_list(obj, "family", "k")?;
            let exponent = ctx.req_f64(obj, "family", "exponent")?;
            PhysTestFn::gaussian_spectrum(grid.clone(), s)
                .and_then(|env| SequenceFamily::modulated(grid.clone(), env, &k, exponent))
        }
        "relaxation" => {
            let a = parse_a_pair(ctx, obj, "family")?;
            let forcing = parse_forcing(ctx, ctx.req(obj, "family", "forcing")?, "family.forcing", grid)?;
            let eps = need_eps("relaxation")?;
            SequenceFamily::relaxation(grid.clone(), a, eps, forcing)
        }
        other => {
            return Err(ctx.err(
                "family.kind",
                format!(
                    "unknown family kind {other:?}; expected plane_wave, real_cosine, \
                     two_scale_sum, concentration, modulated, or relaxation"
                ),
            ))
        }
    };
    let mut fam = fam.map_err(|e| ctx.err("family", e.to_string()))?;
    if let Some(amp) = obj.get("amplitude") {
        let schedule = parse_schedule(ctx, amp, "family.amplitude")?;
        fam = fam.with_amplitude(schedule);
    }
    Ok(Some(fam))
}

fn parse_a_pair(
    ctx: &Ctx,
    obj: &serde_json::Map<String, Value>,
    path: &str,
) -> Result<[f64; 2], ConfigError> {
    let a = ctx.req_f64_list(obj, path, "a")?;
    if a.len() != 2 {
        return Err(ctx.err(
            &format!("{path}.a"),
            format!("expected two transport speeds, got {}", a.len()),
        ));
    }
    Ok([a[0], a[1]])
}

fn parse_complex_matrix(ctx: &Ctx, v: &Value, path: &str) -> Result<CMat, ConfigError> {
    let rows = ctx.as_array(v, path)?;
    if rows.is_empty() {
        return Err(ctx.err(path, "matrix must be nonempty".to_string()));
    }
    let mut data: Vec<Complex64> = Vec::new();
    let mut ncols = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let rpath = format!("{path}[{i}]");
        let row = ctx.as_array(row, &rpath)?;
        if i == 0 {
            ncols = row.len();
            if ncols == 0 {
                return Err(ctx.err(&rpath, "matrix rows must be nonempty".to_string()));
            }
        } else if row.len() != ncols {
            return Err(ctx.err(
                &rpath,
                format!("ragged matrix: row 0 has {ncols} entries, row {i} has {}", row.len()),
            ));
        }
        for (j, entry) in row.iter().enumerate() {
            let epath = format!("{rpath}[{j}]");
            let pair = ctx.as_array(entry, &epath)?;
            if pair.len() != 2 {
                return Err(ctx.err(
                    &epath,
                    "matrix entries are [re, im] pairs".to_string(),
                ));
            }
            let re = ctx.as_f64(&pair[0], &epath)?;
            let im = ctx.as_f64(&pair[1], &epath)?;
            data.push(Complex64::new(re, im));
        }
    }
    Ok(CMat::from_row_slice(rows.len(), ncols, &data))
}

fn parse_system(
    ctx: &Ctx,
    v: &Value,
    path: &str,
    grid: &TorusGrid,
    eps: Option<&ScaleSchedule>,
) -> Result<SystemDescriptor, ConfigError> {
    let obj = ctx.as_object(v, path)?;
    let l = ctx.req_u64(obj, path, "l")? as usize;
    let m = ctx.req_u64(obj, path, "m")? as usize;
    let terms_v = ctx.req_array(obj, path, "terms")?;
    if terms_v.is_empty() {
        return Err(ctx.err(
            &format!("{path}.terms"),
            "a system needs at least one term".to_string(),
        ));
    }
    let mut terms = Vec::with_capacity(terms_v.len());
    let mut shape: Option<(usize, usize)> = None;
    for (i, tv) in terms_v.iter().enumerate() {
        let tpath = format!("{path}.terms[{i}]");
        let tobj = ctx.as_object(tv, &tpath)?;
        let alpha = ctx.req_usize_list(tobj, &tpath, "alpha")?;
        if alpha.len() != grid.dim() {
            return Err(ctx.err(
                &format!("{tpath}.alpha"),
                format!(
                    "multi-index has {} entries on a {}-dimensional grid",
                    alpha.len(),
                    grid.dim()
                ),
            ));
        }
        let matrix = parse_complex_matrix(
            ctx,
            ctx.req(tobj, &tpath, "matrix")?,
            &format!("{tpath}.matrix"),
        )?;
        match shape {
            None => shape = Some(matrix.shape()),
            Some(s) if s != matrix.shape() => {
                return Err(ctx.err(
                    &format!("{tpath}.matrix"),
                    format!(
                        "coefficient shape {:?} disagrees with the first term's {s:?}",
                        matrix.shape()
                    ),
                ))
            }
            _ => {}
        }
        let mut term = Term::new(alpha, Coefficient::Constant(matrix));
        if let Some(pv) = tobj.get("perturbation") {
            let ppath = format!("{tpath}.perturbation");
            let pobj = ctx.as_object(pv, &ppath)?;
            let direction = parse_complex_matrix(
                ctx,
                ctx.req(pobj, &ppath, "direction")?,
                &format!("{ppath}.direction"),
            )?;
            let gamma = parse_schedule(
                ctx,
                ctx.req(pobj, &ppath, "gamma")?,
                &format!("{ppath}.gamma"),
            )?;
            term = term.with_perturbation(direction, gamma);
        }
        terms.push(term);
    }
    let (q, r) = shape.expect("nonempty terms");
    let eps = eps.cloned().ok_or_else(|| {
        ctx.err(
            "schedules.eps",
            "a symbol system needs an eps schedule".to_string(),
        )
    })?;
    SystemDescriptor::new(grid.clone(), r, q, l, m, terms, eps)
        .map_err(|e| ctx.err(path, e.to_string()))
}

fn parse_regime(ctx: &Ctx, v: &Value, path: &str) -> Result<SymbolRegime, ConfigError> {
    if let Some(s) = v.as_str() {
        return match s {
            "p1" => Ok(SymbolRegime::P1),
            "p0" => Ok(SymbolRegime::P0),
            "pinf" => Ok(SymbolRegime::Pinf),
            other => Err(ctx.err(
                path,
                format!("unknown regime {other:?}; expected p1, p0, pinf, or {{\"pc\": c}}"),
            )),
        };
    }
    let obj = ctx.as_object(v, path)?;
    let c = ctx.req_f64(obj, path, "pc")?;
    if !(c.is_finite() && c > 0.0) {
        return Err(ctx.err(
            &format!("{path}.pc"),
            format!("the ratio c must lie in (0, ∞), got {c}"),
        ));
    }
    Ok(SymbolRegime::Pc(c))
}

fn parse_form(ctx: &Ctx, v: &Value, path: &str) -> Result<QuadraticForm, ConfigError> {
    let obj = ctx.as_object(v, path)?;
    let kind = ctx.req_str(obj, path, "kind")?;
    let built = match kind.as_str() {
        "energy" => {
            let r = ctx.req_u64(obj, path, "r")? as usize;
            QuadraticForm::energy(r)
        }
        "cross" => {
            let r = ctx.req_u64(obj, path, "r")? as usize;
            let i = ctx.req_u64(obj, path, "i")? as usize;
            let j = ctx.req_u64(obj, path, "j")? as usize;
            QuadraticForm::cross_term(r, i, j)
        }
        "constant" => {
            let matrix = parse_complex_matrix(
                ctx,
                ctx.req(obj, path, "matrix")?,
                &format!("{path}.matrix"),
            )?;
            QuadraticForm::constant(matrix, "config form")
        }
        other => {
            return Err(ctx.err(
                &format!("{path}.kind"),
                format!("unknown form kind {other:?}; expected energy, cross, or constant"),
            ))
        }
    };
    built.map_err(|e| ctx.err(path, e.to_string()))
}

fn parse_psi(ctx: &Ctx, v: &Value, path: &str, dim: usize) -> Result<ShellTestFn, ConfigError> {
    let obj = ctx.as_object(v, path)?;
    let kind = ctx.req_str(obj, path, "kind")?;
    match kind.as_str() {
        "one" => Ok(ShellTestFn::one(dim)),
        "rational" => {
            let alpha = ctx.req_usize_list(obj, path, "alpha")?;
            if alpha.len() != dim {
                return Err(ctx.err(
                    &format!("{path}.alpha"),
                    format!("multi-index has {} entries in dimension {dim}", alpha.len()),
                ));
            }
            let alpha: Vec<u32> = alpha.iter().map(|&a| a as u32).collect();
            let l = ctx.req_u64(obj, path, "l")? as u32;
            let m = ctx.req_u64(obj, path, "m")? as u32;
            ShellTestFn::rational(dim, &alpha, l, m).map_err(|e| ctx.err(path, e.to_string()))
        }
        other => Err(ctx.err(
            &format!("{path}.kind"),
            format!("unknown shell test kind {other:?}; expected one or rational"),
        )),
    }
}

fn parse_action(
    ctx: &Ctx,
    root: &serde_json::Map<String, Value>,
    grid: &TorusGrid,
    eps: Option<&ScaleSchedule>,
    omega: Option<&ScaleSchedule>,
    family: Option<&SequenceFamily>,
) -> Result<Action, ConfigError> {
    let name = ctx.req_str(root, "", "action")?;
    let params = ctx.req_object(root, "", "action_params")?;
    let p = "action_params";
    let need_omega = || -> Result<(), ConfigError> {
        if omega.is_none() {
            return Err(ctx.err(
                "schedules.omega",
                format!("the {name:?} action needs an omega schedule"),
            ));
        }
        Ok(())
    };
    match name.as_str() {
        "measure" => {
            need_omega()?;
            let n_list = ctx.req_n_list(params, p, "n_list")?;
            let expect_band = match params.get("expect_band") {
                None => None,
                Some(v) => {
                    let epath = format!("{p}.expect_band");
                    let obj = ctx.as_object(v, &epath)?;
                    let kind = match ctx.req_str(obj, &epath, "kind")?.as_str() {
                        "sigma0" => CellKind::Sigma0,
                        "interior" => CellKind::Interior,
                        "sigmainf" => CellKind::SigmaInf,
                        other => {
                            return Err(ctx.err(
                                &format!("{epath}.kind"),
                                format!(
                                    "unknown band {other:?}; expected sigma0, interior, or sigmainf"
                                ),
                            ))
                        }
                    };
                    let min_share = ctx.req_f64(obj, &epath, "min_share")?;
                    if !(0.0 < min_share && min_share <= 1.0) {
                        return Err(ctx.err(
                            &format!("{epath}.min_share"),
                            format!("share threshold must lie in (0, 1], got {min_share}"),
                        ));
                    }
                    Some(BandExpectation { kind, min_share })
                }
            };
            Ok(Action::Measure { n_list, expect_band })
        }
        "project" => {
            need_omega()?;
            let n = ctx.req_u64(params, p, "n")? as usize;
            if n == 0 {
                return Err(ctx.err(&format!("{p}.n"), "index must be at least 1".to_string()));
            }
            Ok(Action::Project { n })
        }
        "oscillatory" => {
            need_omega()?;
            let n_list = ctx.req_n_list(params, p, "n_list")?;
            let r_list = ctx.req_f64_list(params, p, "r_list")?;
            if r_list.is_empty()
                || r_list[0] <= 0.0
                || r_list.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(ctx.err(
                    &format!("{p}.r_list"),
                    "radii must be positive and strictly increasing".to_string(),
                ));
            }
            let expect_oscillatory = ctx.opt_bool(params, p, "expect_oscillatory")?;
            Ok(Action::Oscillatory {
                n_list,
                r_list,
                expect_oscillatory,
            })
        }
        "localize" => {
            let system = parse_system(
                ctx,
                ctx.req(params, p, "system")?,
                &format!("{p}.system"),
                grid,
                eps,
            )?;
            if let Some(fam) = family {
                if fam.components() != system.unknowns() {
                    return Err(ctx.err(
                        &format!("{p}.system"),
                        format!(
                            "system acts on {} unknowns but the family has {} components",
                            system.unknowns(),
                            fam.components()
                        ),
                    ));
                }
            }
            let n_list = ctx.req_n_list(params, p, "n_list")?;
            let expect_localised = ctx.opt_bool(params, p, "expect_localised")?;
            Ok(Action::Localize {
                system,
                n_list,
                expect_localised,
            })
        }
        "commutator" => {
            let omega_list = ctx.req_f64_list(params, p, "omega_list")?;
            if omega_list.is_empty()
                || omega_list.iter().any(|&w| !(w.is_finite() && w > 0.0))
                || omega_list.windows(2).any(|w| w[1] >= w[0])
            {
                return Err(ctx.err(
                    &format!("{p}.omega_list"),
                    "scales must be positive and strictly decreasing".to_string(),
                ));
            }
            let psi = parse_psi(ctx, ctx.req(params, p, "psi")?, &format!("{p}.psi"), grid.dim())?;
            let expect_decay = ctx.opt_bool(params, p, "expect_decay")?;
            Ok(Action::Commutator {
                omega_list,
                psi,
                expect_decay,
            })
        }
        "compensate" => {
            let form = parse_form(ctx, ctx.req(params, p, "form")?, &format!("{p}.form"))?;
            let system = parse_system(
                ctx,
                ctx.req(params, p, "system")?,
                &format!("{p}.system"),
                grid,
                eps,
            )?;
            if form.components() != system.unknowns() {
                return Err(ctx.err(
                    &format!("{p}.form"),
                    format!(
                        "form takes {} components but the system has {} unknowns",
                        form.components(),
                        system.unknowns()
                    ),
                ));
            }
            let regime = match params.get("regime") {
                None => SymbolRegime::P1,
                Some(v) => parse_regime(ctx, v, &format!("{p}.regime"))?,
            };
            let n_list = ctx.req_n_list(params, p, "n_list")?;
            let method = match params.get("method") {
                None => LimitMethod::RichardsonGeometric,
                Some(v) => match ctx.as_str(v, &format!("{p}.method"))?.as_str() {
                    "last" => LimitMethod::LastValue,
                    "richardson" => LimitMethod::RichardsonGeometric,
                    other => {
                        return Err(ctx.err(
                            &format!("{p}.method"),
                            format!("unknown limit method {other:?}; expected last or richardson"),
                        ))
                    }
                },
            };
            Ok(Action::Compensate {
                form,
                system,
                regime,
                n_list,
                method,
            })
        }
        "example5" => {
            if grid.dim() != 2 {
                return Err(ctx.err(
                    "grid.d",
                    format!("example5 runs on a two-dimensional grid, got d = {}", grid.dim()),
                ));
            }
            let a = parse_a_pair(ctx, params, p)?;
            if a[0] == 0.0 || a[1] == 0.0 {
                return Err(ctx.err(
                    &format!("{p}.a"),
                    format!(
                        "a = {a:?} violates the hypothesis a1, a2 != 0 everywhere; \
                         the relaxation system needs both transport speeds nonzero"
                    ),
                ));
            }
            let forcing = parse_forcing(
                ctx,
                ctx.req(params, p, "forcing")?,
                &format!("{p}.forcing"),
                grid,
            )?;
            if eps.is_none() {
                return Err(ctx.err(
                    "schedules.eps",
                    "example5 needs an eps schedule for the relaxation scale".to_string(),
                ));
            }
            let n_list = ctx.req_n_list(params, p, "n_list")?;
            if n_list.len() < 2 {
                return Err(ctx.err(
                    &format!("{p}.n_list"),
                    "example5 compares at least two indices".to_string(),
                ));
            }
            Ok(Action::Example5 { a, forcing, n_list })
        }
        other => Err(ctx.err(
            "action",
            format!(
                "unknown action {other:?}; expected measure, project, oscillatory, localize, \
                 commutator, compensate, or example5"
            ),
        )),
    }
}

// ---------------------------------------------------------------------------
// extraction helpers

struct Ctx<'a> {
    raw: &'a str,
    origin: &'a str,
}

impl<'a> Ctx<'a> {
    fn err(&self, path: &str, message: String) -> ConfigError {
        ConfigError {
            origin: self.origin.to_string(),
            line: line_of(self.raw, path),
            path: path.to_string(),
            message,
        }
    }

    fn join(path: &str, key: &str) -> String {
        if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        }
    }

    fn req<'v>(
        &self,
        obj: &'v serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<&'v Value, ConfigError> {
        obj.get(key).ok_or_else(|| {
            let full = Self::join(path, key);
            ConfigError {
                origin: self.origin.to_string(),
                line: line_of(self.raw, path),
                path: full,
                message: "missing field".to_string(),
            }
        })
    }

    fn as_object<'v>(
        &self,
        v: &'v Value,
        path: &str,
    ) -> Result<&'v serde_json::Map<String, Value>, ConfigError> {
        v.as_object()
            .ok_or_else(|| self.err(path, "expected a JSON object".to_string()))
    }

    fn as_array<'v>(&self, v: &'v Value, path: &str) -> Result<&'v Vec<Value>, ConfigError> {
        v.as_array()
            .ok_or_else(|| self.err(path, "expected a JSON array".to_string()))
    }

    fn as_str(&self, v: &Value, path: &str) -> Result<String, ConfigError> {
        v.as_str()
            .map(str::to_string)
            .ok_or_else(|| self.err(path, "expected a string".to_string()))
    }

    fn as_f64(&self, v: &Value, path: &str) -> Result<f64, ConfigError> {
        v.as_f64()
            .ok_or_else(|| self.err(path, "expected a number".to_string()))
    }

    fn req_object<'v>(
        &self,
        obj: &'v serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<&'v serde_json::Map<String, Value>, ConfigError> {
        let v = self.req(obj, path, key)?;
        self.as_object(v, &Self::join(path, key))
    }

    fn req_array<'v>(
        &self,
        obj: &'v serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<&'v Vec<Value>, ConfigError> {
        let v = self.req(obj, path, key)?;
        self.as_array(v, &Self::join(path, key))
    }

    fn req_str(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<String, ConfigError> {
        let v = self.req(obj, path, key)?;
        self.as_str(v, &Self::join(path, key))
    }

    fn req_f64(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<f64, ConfigError> {
        let v = self.req(obj, path, key)?;
        self.as_f64(v, &Self::join(path, key))
    }

    fn req_u64(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<u64, ConfigError> {
        let v = self.req(obj, path, key)?;
        v.as_u64()
            .ok_or_else(|| self.err(&Self::join(path, key), "expected a nonnegative integer".to_string()))
    }

    fn opt_bool(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<Option<bool>, ConfigError> {
        match obj.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| self.err(&Self::join(path, key), "expected a boolean".to_string())),
        }
    }

    fn req_f64_list(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<Vec<f64>, ConfigError> {
        let full = Self::join(path, key);
        let arr = self.req_array(obj, path, key)?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| self.as_f64(v, &format!("{full}[{i}]")))
            .collect()
    }

    fn req_i64_list(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<Vec<i64>, ConfigError> {
        let full = Self::join(path, key);
        let arr = self.req_array(obj, path, key)?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_i64()
                    .ok_or_else(|| self.err(&format!("{full}[{i}]"), "expected an integer".to_string()))
            })
            .collect()
    }

    fn req_usize_list(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<Vec<usize>, ConfigError> {
        let full = Self::join(path, key);
        let arr = self.req_array(obj, path, key)?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_u64().map(|u| u as usize).ok_or_else(|| {
                    self.err(&format!("{full}[{i}]"), "expected a nonnegative integer".to_string())
                })
            })
            .collect()
    }

    /// A strictly increasing, nonempty list of indices ≥ 1.
    fn req_n_list(
        &self,
        obj: &serde_json::Map<String, Value>,
        path: &str,
        key: &str,
    ) -> Result<Vec<usize>, ConfigError> {
        let full = Self::join(path, key);
        let list = self.req_usize_list(obj, path, key)?;
        if list.is_empty() || list[0] == 0 || list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(self.err(
                &full,
                "indices must be ≥ 1 and strictly increasing".to_string(),
            ));
        }
        Ok(list)
    }
}

/// 1-based line of the first occurrence of the path's final key in the raw
/// text; `None` when the key never appears literally (for example a root-level
/// complaint about a missing section).
fn line_of(raw: &str, path: &str) -> Option<usize> {
    let tail = path.rsplit('.').next()?;
    let key = tail.split('[').next()?;
    if key.is_empty() || key == "-" {
        return None;
    }
    let needle = format!("\"{key}\"");
    let pos = raw.find(&needle)?;
    Some(raw[..pos].bytes().filter(|&b| b == b'\n').count() + 1)
}

// ---------------------------------------------------------------------------
// schema

/// The JSON schema of the config format, served by `oneshm schema`.
pub fn schema() -> Value {
    let schedule = serde_json::json!({
        "type": "object",
        "description": "power-law schedule n ↦ coeff · n^exponent",
        "required": ["coeff", "exponent"],
        "properties": {
            "coeff": {"type": "number", "exclusiveMinimum": 0},
            "exponent": {"type": "number"}
        }
    });
    let complex_matrix = serde_json::json!({
        "type": "array",
        "description": "rows of [re, im] pairs",
        "items": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 2,
                "maxItems": 2
            }
        },
        "minItems": 1
    });
    let forcing = serde_json::json!({
        "type": "array",
        "minItems": 1,
        "items": {
            "type": "object",
            "required": ["component", "k", "exponent", "amplitude"],
            "properties": {
                "component": {"type": "integer", "minimum": 0, "maximum": 1},
                "k": {"type": "array", "items": {"type": "integer"}},
                "exponent": {"type": "number"},
                "amplitude": schedule.clone()
            }
        }
    });
    let system = serde_json::json!({
        "type": "object",
        "description": "differential system; constant coefficient matrices only",
        "required": ["l", "m", "terms"],
        "properties": {
            "l": {"type": "integer", "minimum": 0},
            "m": {"type": "integer", "minimum": 0},
            "terms": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["alpha", "matrix"],
                    "properties": {
                        "alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                        "matrix": complex_matrix.clone(),
                        "perturbation": {
                            "type": "object",
                            "required": ["direction", "gamma"],
                            "properties": {
                                "direction": complex_matrix.clone(),
                                "gamma": schedule.clone()
                            }
                        }
                    }
                }
            }
        }
    });
    serde_json::json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "oneshm experiment config",
        "schema_version": SCHEMA_VERSION,
        "type": "object",
        "required": ["version", "grid", "action", "action_params", "output", "seed"],
        "properties": {
            "version": {"const": SCHEMA_VERSION},
            "grid": {
                "type": "object",
                "required": ["d", "N"],
                "properties": {
                    "d": {"type": "integer", "minimum": 1, "maximum": 3},
                    "N": {"type": "integer", "minimum": 2,
                          "description": "points per axis; must be even"}
                }
            },
            "family": {
                "type": "object",
                "description": "sequence family; required by every action except example5",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["plane_wave", "real_cosine", "two_scale_sum",
                                       "concentration", "modulated", "relaxation"]},
                    "k": {"type": "array", "items": {"type": "integer"}},
                    "exponent": {"type": "number"},
                    "k_slow": {"type": "array", "items": {"type": "integer"}},
                    "slow_exponent": {"type": "number"},
                    "k_fast": {"type": "array", "items": {"type": "integer"}},
                    "fast_exponent": {"type": "number"},
                    "center": {"type": "array", "items": {"type": "number"}},
                    "radius": {"type": "number", "exclusiveMinimum": 0},
                    "envelope_s": {"type": "number", "exclusiveMinimum": 0},
                    "a": {"type": "array", "items": {"type": "number"},
                           "minItems": 2, "maxItems": 2},
                    "forcing": forcing.clone(),
                    "amplitude": schedule.clone()
                }
            },
            "schedules": {
                "type": "object",
                "properties": {"eps": schedule.clone(), "omega": schedule.clone()}
            },
            "windows": {
                "type": "object",
                "required": ["kind"],
                "properties": {
                    "kind": {"enum": ["trivial", "smooth"]},
                    "counts": {"type": "array", "items": {"type": "integer", "minimum": 1}}
                },
                "description": "defaults to the trivial partition when absent"
            },
            "bins": {
                "type": "object",
                "required": ["n_dir", "n_rad", "delta"],
                "properties": {
                    "n_dir": {"type": "integer", "minimum": 1},
                    "n_rad": {"type": "integer", "minimum": 1},
                    "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5}
                }
            },
            "action": {"enum": ["measure", "project", "oscillatory", "localize",
                                  "commutator", "compensate", "example5"]},
            "action_params": {
                "type": "object",
                "description": "per-action parameters",
                "properties": {
                    "n": {"type": "integer", "minimum": 1},
                    "n_list": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                    "r_list": {"type": "array", "items": {"type": "number"}},
                    "omega_list": {"type": "array", "items": {"type": "number"}},
                    "expect_band": {
                        "type": "object",
                        "required": ["kind", "min_share"],
                        "properties": {
                            "kind": {"enum": ["sigma0", "interior", "sigmainf"]},
                            "min_share": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}
                        }
                    },
                    "expect_oscillatory": {"type": "boolean"},
                    "expect_localised": {"type": "boolean"},
                    "expect_decay": {"type": "boolean"},
                    "system": system,
                    "psi": {
                        "type": "object",
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["one", "rational"]},
                            "alpha": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            "l": {"type": "integer", "minimum": 0},
                            "m": {"type": "integer", "minimum": 0}
                        }
                    },
                    "form": {
                        "type": "object",
                        "required": ["kind"],
                        "properties": {
                            "kind": {"enum": ["energy", "cross", "constant"]},
                            "r": {"type": "integer", "minimum": 1},
                            "i": {"type": "integer", "minimum": 0},
                            "j": {"type": "integer", "minimum": 0},
                            "matrix": complex_matrix
                        }
                    },
                    "regime": {
                        "description": "\"p1\", \"p0\", \"pinf\", or {\"pc\": c} with c in (0, ∞)",
                        "anyOf": [
                            {"enum": ["p1", "p0", "pinf"]},
                            {"type": "object", "required": ["pc"],
                             "properties": {"pc": {"type": "number", "exclusiveMinimum": 0}}}
                        ]
                    },
                    "method": {"enum": ["last", "richardson"]},
                    "a": {"type": "array", "items": {"type": "number"},
                           "minItems": 2, "maxItems": 2},
                    "forcing": forcing
                }
            },
            "output": {
                "type": "object",
                "required": ["dir", "formats"],
                "properties": {
                    "dir": {"type": "string"},
                    "formats": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"enum": ["json", "csv", "plotdata"]}
                    }
                }
            },
            "seed": {"type": "integer", "minimum": 0}
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> String {
        r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "family": {"kind": "plane_wave", "k": [3, 0], "exponent": 1.0},
  "schedules": {"omega": {"coeff": 1.0, "exponent": -1.0}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "measure",
  "action_params": {"n_list": [4, 8], "expect_band": {"kind": "interior", "min_share": 0.9}},
  "output": {"dir": "out", "formats": ["json", "csv"]},
  "seed": 7
}"#
        .to_string()
    }

    #[test]
    fn valid_config_resolves_to_library_objects() {
        let raw = base_config();
        let exp = parse_str(&raw, "<inline>").unwrap();
        assert_eq!(exp.version, SCHEMA_VERSION);
        assert_eq!(exp.grid.dim(), 2);
        assert_eq!(exp.grid.points_per_axis(), 32);
        assert!(exp.family.is_some());
        assert!(exp.omega.is_some() && exp.eps.is_none());
        assert_eq!(exp.partition.len(), 1, "windows default to trivial");
        assert_eq!(exp.bins.as_ref().unwrap().n_dir(), 8);
        assert_eq!(exp.seed, 7);
        assert_eq!(
            exp.formats,
            vec![OutputFormat::Json, OutputFormat::Csv],
            "formats are deduplicated and ordered"
        );
        match &exp.action {
            Action::Measure { n_list, expect_band } => {
                assert_eq!(n_list, &[4, 8]);
                let band = expect_band.expect("expectation parsed");
                assert_eq!(band.kind, CellKind::Interior);
                assert!((band.min_share - 0.9).abs() < 1e-15);
            }
            _ => panic!("wrong action"),
        }
        assert_eq!(exp.config_hash.len(), 64);
        assert_eq!(exp.config_hash, config_hash(&raw), "hash covers raw bytes");
    }

    #[test]
    fn odd_grid_is_rejected_with_the_canonical_message() {
        let raw = base_config().replace("\"N\": 32", "\"N\": 33");
        let err = parse_str(&raw, "bad.json").unwrap_err();
        assert!(err.message.contains("points_per_axis must be even"), "{err}");
        assert_eq!(err.path, "grid.N");
        let rendered = err.to_string();
        assert!(rendered.starts_with("bad.json:3:"), "line anchor in {rendered}");
    }

    #[test]
    fn example5_zero_speed_cites_the_hypothesis() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "schedules": {"eps": {"coeff": 1.0, "exponent": -0.5}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "example5",
  "action_params": {
    "a": [0.0, 1.0],
    "forcing": [{"component": 0, "k": [0, 4], "exponent": 0.0,
                  "amplitude": {"coeff": 1.0, "exponent": -2.0}}],
    "n_list": [4, 8]
  },
  "output": {"dir": "out", "formats": ["json"]},
  "seed": 1
}"#;
        let err = parse_str(raw, "e5.json").unwrap_err();
        assert!(err.message.contains("hypothesis"), "{err}");
        assert!(err.message.contains("a1, a2 != 0"), "{err}");
        assert_eq!(err.path, "action_params.a");
    }

    #[test]
    fn missing_and_malformed_fields_carry_their_paths() {
        let no_version = base_config().replace("\"version\": \"1.0\",", "");
        let err = parse_str(&no_version, "x").unwrap_err();
        assert_eq!(err.path, "version");
        assert_eq!(err.message, "missing field");

        let bad_version = base_config().replace("\"1.0\"", "\"9.9\"");
        let err = parse_str(&bad_version, "x").unwrap_err();
        assert!(err.message.contains("unrecognized config version"));

        let bad_action = base_config().replace("\"measure\"", "\"transmogrify\"");
        let err = parse_str(&bad_action, "x").unwrap_err();
        assert_eq!(err.path, "action");
        assert!(err.message.contains("unknown action"), "{err}");

        let bad_json = "{ not json";
        let err = parse_str(bad_json, "x").unwrap_err();
        assert!(err.message.contains("not valid JSON"));
        assert_eq!(err.line, Some(1));

        let no_family = base_config().replace(
            "\"family\": {\"kind\": \"plane_wave\", \"k\": [3, 0], \"exponent\": 1.0},",
            "",
        );
        let err = parse_str(&no_family, "x").unwrap_err();
        assert_eq!(err.path, "family");
        assert!(err.message.contains("needs a sequence family"));
    }

    #[test]
    fn aliasing_and_schedule_violations_surface_from_constructors() {
        // Wave vector of the wrong length: the family constructor rejects it
        // and the path points at the family section.
        let raw = base_config().replace("\"k\": [3, 0]", "\"k\": [3]");
        let err = parse_str(&raw, "x").unwrap_err();
        assert_eq!(err.path, "family");
        assert!(err.message.contains("wave vector"), "{err}");

        let raw = base_config().replace(
            "\"omega\": {\"coeff\": 1.0, \"exponent\": -1.0}",
            "\"omega\": {\"coeff\": -1.0, \"exponent\": -1.0}",
        );
        let err = parse_str(&raw, "x").unwrap_err();
        assert_eq!(err.path, "schedules.omega.coeff");
    }

    #[test]
    fn compensate_action_builds_form_system_and_regime() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 16},
  "family": {"kind": "relaxation", "a": [0.7, -1.3],
              "forcing": [{"component": 0, "k": [0, 4], "exponent": 0.0,
                            "amplitude": {"coeff": 1.0, "exponent": -2.0}}]},
  "schedules": {"eps": {"coeff": 1.0, "exponent": -0.5}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "compensate",
  "action_params": {
    "form": {"kind": "cross", "r": 2, "i": 0, "j": 1},
    "system": {"l": 0, "m": 1, "terms": [
      {"alpha": [0, 0], "matrix": [[[1,0],[0,0]],[[0,0],[1,0]]]},
      {"alpha": [1, 0], "matrix": [[[0.7,0],[0,0]],[[0,0],[0,0]]]},
      {"alpha": [0, 1], "matrix": [[[0,0],[0,0]],[[0,0],[-1.3,0]]]}
    ]},
    "regime": {"pc": 2.0},
    "n_list": [4, 8, 16],
    "method": "last"
  },
  "output": {"dir": "out", "formats": ["json", "plotdata"]},
  "seed": 42
}"#;
        let exp = parse_str(raw, "<inline>").unwrap();
        match &exp.action {
            Action::Compensate {
                form,
                system,
                regime,
                n_list,
                method,
            } => {
                assert_eq!(form.components(), 2);
                assert!(!form.is_hermitian(), "cross term splits");
                assert_eq!(system.unknowns(), 2);
                assert_eq!(system.equations(), 2);
                assert_eq!(*regime, SymbolRegime::Pc(2.0));
                assert_eq!(n_list, &[4, 8, 16]);
                assert_eq!(*method, LimitMethod::LastValue);
            }
            _ => panic!("wrong action"),
        }

        // Mismatched form arity is caught against the system.
        let raw = raw.replace("\"r\": 2", "\"r\": 3").replace(
            "\"i\": 0, \"j\": 1",
            "\"i\": 0, \"j\": 2",
        );
        let err = parse_str(&raw, "x").unwrap_err();
        assert_eq!(err.path, "action_params.form");
    }

    #[test]
    fn schema_document_names_every_action() {
        let s = schema();
        let actions = s["properties"]["action"]["enum"].as_array().unwrap();
        let names: Vec<&str> = actions.iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(
            names,
            vec!["measure", "project", "oscillatory", "localize", "commutator",
                 "compensate", "example5"]
        );
        assert_eq!(s["schema_version"], SCHEMA_VERSION);
        // The schema itself is valid JSON that round-trips.
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let raw = base_config();
        assert_eq!(config_hash(&raw), config_hash(&raw));
        let other = raw.replace("\"seed\": 7", "\"seed\": 8");
        assert_ne!(config_hash(&raw), config_hash(&other));
        assert_eq!(
            config_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
            "sha-256 of the empty string"
        );
    }
}
