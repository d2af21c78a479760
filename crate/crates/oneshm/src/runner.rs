//! Executes a resolved experiment and writes its artifacts.
//!
//! The runner composes library operations per action, collects a flat list
//! of named checks, and assembles one `report.json` plus optional CSV tables
//! and plotdata files.  Per-index solves may run in parallel (capped by the
//! `ONESHM_THREADS` environment variable); report assembly is sequential, so
//! two runs of the same config and seed produce identical artifacts except
//! for the report's timestamp field.
//!
//! Formats, by construction: JSON maps serialize with sorted keys; CSV uses
//! `.` decimals, `,` separators, and LF line endings; plotdata files are
//! two-column `x y` text with a single `#` header line.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::compensation::{
    characteristic_sample_grid, compensation_check, example5_pipeline, form_sign_on_characteristic,
    phi_dictionary, FormSign,
};
use crate::config::{Action, Experiment, OutputFormat};
use crate::error::{Error, Result};
use crate::grid::PhysTestFn;
use crate::measures::{empirical_measure, h_projection, oscillatory_index, sc_projection};
use crate::operators::commutation_decay_experiment;
use crate::shell::CellKind;
use crate::symbols::localisation_residual;

/// Relative bound on the hermiticity defect of a reported measure.
pub const HERMITICITY_REL: f64 = 1e-10;
/// Relative slack allowed below zero on diagonal masses.
pub const POSITIVITY_REL: f64 = 1e-10;
/// Relative bound on the bin-bookkeeping defect.
pub const BOOKKEEPING_REL: f64 = 1e-8;
/// Relative agreement required between a measure and its projections.
pub const PROJECTION_REL: f64 = 1e-10;

/// One named, asserted verdict.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything a run produced: the exit code, the report value, and the
/// artifact paths written under the output directory.
pub struct RunOutcome {
    pub exit_code: i32,
    pub all_passed: bool,
    pub checks: Vec<CheckLine>,
    pub report: Value,
    pub artifacts: Vec<PathBuf>,
}

struct CsvTable {
    name: &'static str,
    text: String,
}

struct PlotData {
    name: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    points: Vec<(f64, f64)>,
}

struct ActionOutput {
    results: Value,
    checks: Vec<CheckLine>,
    tables: Vec<CsvTable>,
    plots: Vec<PlotData>,
}

/// Cap the global thread pool from `ONESHM_THREADS`, once.
fn init_thread_pool() {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        if let Ok(v) = std::env::var("ONESHM_THREADS") {
            if let Ok(t) = v.trim().parse::<usize>() {
                if t >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
                }
            }
        }
    });
}

/// Execute the experiment and write the requested artifacts.
pub fn run(exp: &Experiment) -> Result<RunOutcome> {
    init_thread_pool();
    let out = match &exp.action {
        Action::Measure { n_list, expect_band } => run_measure(exp, n_list, expect_band.as_ref())?,
        Action::Project { n } => run_project(exp, *n)?,
        Action::Oscillatory {
            n_list,
            r_list,
            expect_oscillatory,
        } => run_oscillatory(exp, n_list, r_list, *expect_oscillatory)?,
        Action::Localize {
            system,
            n_list,
            expect_localised,
        } => run_localize(exp, system, n_list, *expect_localised)?,
        Action::Commutator {
            omega_list,
            psi,
            expect_decay,
        } => run_commutator(exp, omega_list, psi, *expect_decay)?,
        Action::Compensate {
            form,
            system,
            regime,
            n_list,
            method,
        } => run_compensate(exp, form, system, *regime, n_list, *method)?,
        Action::Example5 { a, forcing, n_list } => run_example5(exp, *a, forcing, n_list)?,
    };

    let all_passed = out.checks.iter().all(|c| c.passed);
    let report = assemble_report(exp, &out, all_passed);
    let artifacts = write_artifacts(exp, &report, &out)?;
    Ok(RunOutcome {
        exit_code: if all_passed { 0 } else { 1 },
        all_passed,
        checks: out.checks,
        report,
        artifacts,
    })
}

fn assemble_report(exp: &Experiment, out: &ActionOutput, all_passed: bool) -> Value {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs_f64();
    let checks: Vec<Value> = out
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
            })
        })
        .collect();
    json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "config_hash": exp.config_hash,
        "timestamp": timestamp,
        "seed": exp.seed,
        "action": exp.action.name(),
        "family": exp.family.as_ref().map(|f| f.label().to_string()),
        "grid": {"d": exp.grid.dim(), "N": exp.grid.points_per_axis()},
        "tolerances": {
            "hermiticity_rel": HERMITICITY_REL,
            "positivity_rel": POSITIVITY_REL,
            "bookkeeping_rel": BOOKKEEPING_REL,
            "projection_rel": PROJECTION_REL,
        },
        "results": out.results,
        "checks": checks,
        "all_passed": all_passed,
    })
}

fn write_artifacts(exp: &Experiment, report: &Value, out: &ActionOutput) -> Result<Vec<PathBuf>> {
    let dir = &exp.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if exp.wants(OutputFormat::Json) {
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        written.push(path);
    }
    if exp.wants(OutputFormat::Csv) {
        for table in &out.tables {
            let path = dir.join(format!("{}.csv", table.name));
            std::fs::write(&path, &table.text)?;
            written.push(path);
        }
    }
    if exp.wants(OutputFormat::Plotdata) {
        for plot in &out.plots {
            let path = dir.join(format!("{}.dat", plot.name));
            let mut text = format!("# {} {}\n", plot.x_label, plot.y_label);
            for (x, y) in &plot.points {
                text.push_str(&format!("{x:?} {y:?}\n"));
            }
            std::fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Render rows as CSV text: `,` separator, `.` decimals, LF endings.
fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    text
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn check(name: &str, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn need_family(exp: &Experiment) -> Result<&crate::sequences::SequenceFamily> {
    exp.family
        .as_ref()
        .ok_or_else(|| Error::Config("this action needs a sequence family".into()))
}

fn need_omega(exp: &Experiment) -> Result<&crate::sequences::ScaleSchedule> {
    exp.omega
        .as_ref()
        .ok_or_else(|| Error::Config("this action needs an omega schedule".into()))
}

fn need_bins(exp: &Experiment) -> Result<&crate::shell::ShellBins> {
    exp.bins
        .as_ref()
        .ok_or_else(|| Error::Config("this action needs shell bins".into()))
}

// ---------------------------------------------------------------------------
// actions

fn run_measure(
    exp: &Experiment,
    n_list: &[usize],
    expect: Option<&crate::config::BandExpectation>,
) -> Result<ActionOutput> {
    let fam = need_family(exp)?;
    let omega = need_omega(exp)?;
    let bins = need_bins(exp)?;
    let ems = n_list
        .par_iter()
        .map(|&n| empirical_measure(fam, &exp.partition, omega, n, bins))
        .collect::<Result<Vec<_>>>()?;

    let mut per_n = Vec::new();
    let mut rows = Vec::new();
    let mut band_points = [Vec::new(), Vec::new(), Vec::new()];
    for (i, em) in ems.iter().enumerate() {
        let n = n_list[i];
        let total = em.total_trace();
        let s0 = em.band_trace(CellKind::Sigma0);
        let int = em.band_trace(CellKind::Interior);
        let sinf = em.band_trace(CellKind::SigmaInf);
        let zero = em.zero_mode_mass().diagonal().iter().map(|z| z.re).sum::<f64>();
        per_n.push(json!({
            "n": n,
            "total": total,
            "sigma0": s0,
            "interior": int,
            "sigmainf": sinf,
            "zero_mode": zero,
            "hermiticity_defect": em.hermiticity_defect(),
            "min_diagonal": em.min_diagonal(),
            "bookkeeping_defect": em.bookkeeping_defect(),
        }));
        rows.push(vec![n.to_string(), f(s0), f(int), f(sinf), f(total)]);
        band_points[0].push((n as f64, s0));
        band_points[1].push((n as f64, int));
        band_points[2].push((n as f64, sinf));
    }

    let last = ems.last().expect("n_list is nonempty");
    let total = last.total_trace();
    let scale = total.max(1.0);
    let mut checks = vec![
        check(
            "hermiticity",
            last.hermiticity_defect() <= HERMITICITY_REL * scale,
            format!("defect {:.3e} against scale {scale:.3e}", last.hermiticity_defect()),
        ),
        check(
            "positivity",
            last.min_diagonal() >= -POSITIVITY_REL * scale,
            format!("min diagonal {:.3e}", last.min_diagonal()),
        ),
        check(
            "bookkeeping",
            last.bookkeeping_defect() <= BOOKKEEPING_REL * scale,
            format!("defect {:.3e}", last.bookkeeping_defect()),
        ),
    ];
    if let Some(band) = expect {
        let share = if total > 0.0 {
            last.band_trace(band.kind) / total
        } else {
            0.0
        };
        checks.push(check(
            "mass_placement",
            share >= band.min_share,
            format!("share {share:.6} in {:?} against {:.6}", band.kind, band.min_share),
        ));
    }

    let mut measure_csv = Vec::new();
    last.to_csv(&mut measure_csv)?;
    let tables = vec![
        CsvTable {
            name: "bands",
            text: csv_text(&["n", "sigma0", "interior", "sigmainf", "total"], &rows),
        },
        CsvTable {
            name: "measure",
            text: String::from_utf8(measure_csv)
                .map_err(|e| Error::Format(format!("measure CSV is not UTF-8: {e}")))?,
        },
    ];
    let [p0, p1, p2] = band_points;
    let plots = vec![
        PlotData { name: "mass_sigma0", x_label: "n", y_label: "sigma0_mass", points: p0 },
        PlotData { name: "mass_interior", x_label: "n", y_label: "interior_mass", points: p1 },
        PlotData { name: "mass_sigmainf", x_label: "n", y_label: "sigmainf_mass", points: p2 },
    ];
    Ok(ActionOutput {
        results: json!({"per_n": per_n}),
        checks,
        tables,
        plots,
    })
}

fn run_project(exp: &Experiment, n: usize) -> Result<ActionOutput> {
    let fam = need_family(exp)?;
    let omega = need_omega(exp)?;
    let bins = need_bins(exp)?;
    let em = empirical_measure(fam, &exp.partition, omega, n, bins)?;
    let h = h_projection(&em);
    let sc = sc_projection(&em);

    let total = em.total_trace();
    let scale = total.max(1.0);
    let dir_masses: Vec<f64> = (0..h.n_dir()).map(|d| h.dir_trace(d)).collect();
    let h_total = h.total_trace();
    let sc_total = sc.total_trace();

    let checks = vec![
        check(
            "h_projection_mass",
            (h_total - total).abs() <= PROJECTION_REL * scale,
            format!("|{h_total:.6e} - {total:.6e}|"),
        ),
        check(
            "sc_projection_mass",
            (sc_total - total).abs() <= PROJECTION_REL * scale,
            format!("|{sc_total:.6e} - {total:.6e}|"),
        ),
    ];

    let mut h_rows = Vec::new();
    for p in 0..h.n_phys() {
        for d in 0..h.n_dir() {
            let trace: f64 = h.mass_matrix(p, d).diagonal().iter().map(|z| z.re).sum();
            h_rows.push(vec![p.to_string(), d.to_string(), f(trace)]);
        }
    }
    let sc_rows = vec![
        vec!["zero_atom".to_string(), f(sc.zero_atom_trace())],
        vec!["interior".to_string(), f(sc.interior_trace())],
        vec!["escaped".to_string(), f(sc.escaped_trace())],
    ];

    let plots = vec![PlotData {
        name: "h_dir_mass",
        x_label: "dir_bin",
        y_label: "mass",
        points: dir_masses
            .iter()
            .enumerate()
            .map(|(d, &m)| (d as f64, m))
            .collect(),
    }];
    Ok(ActionOutput {
        results: json!({
            "n": n,
            "total": total,
            "h": {"dir_masses": dir_masses, "total": h_total},
            "sc": {
                "zero_atom": sc.zero_atom_trace(),
                "interior": sc.interior_trace(),
                "escaped": sc.escaped_trace(),
                "total": sc_total,
            },
        }),
        checks,
        tables: vec![
            CsvTable {
                name: "h_measure",
                text: csv_text(&["phys_cell", "dir_bin", "trace"], &h_rows),
            },
            CsvTable {
                name: "sc_bands",
                text: csv_text(&["band", "mass"], &sc_rows),
            },
        ],
        plots,
    })
}

fn run_oscillatory(
    exp: &Experiment,
    n_list: &[usize],
    r_list: &[f64],
    expect: Option<bool>,
) -> Result<ActionOutput> {
    let fam = need_family(exp)?;
    let omega = need_omega(exp)?;
    let phi = PhysTestFn::one(exp.grid.clone());
    let rep = oscillatory_index(fam, &phi, omega, n_list, r_list)?;

    let mut checks = Vec::new();
    if let Some(want) = expect {
        checks.push(check(
            "oscillatory_expectation",
            rep.oscillatory == want,
            format!("verdict {} against expected {want}", rep.oscillatory),
        ));
    }

    let mut rows = Vec::new();
    for (ri, &r) in rep.r_list.iter().enumerate() {
        let mut row = vec![f(r)];
        row.extend(rep.table[ri].iter().map(|&t| f(t)));
        rows.push(row);
    }
    let mut header: Vec<String> = vec!["r".to_string()];
    header.extend(rep.n_list.iter().map(|n| format!("n={n}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();

    let largest = rep.table.last().expect("nonempty radius list");
    let plots = vec![PlotData {
        name: "tail_largest_radius",
        x_label: "n",
        y_label: "tail_energy",
        points: rep
            .n_list
            .iter()
            .zip(largest.iter())
            .map(|(&n, &t)| (n as f64, t))
            .collect(),
    }];
    Ok(ActionOutput {
        results: json!({
            "n_list": rep.n_list,
            "r_list": rep.r_list,
            "table": rep.table,
            "limit": rep.limit,
            "tolerance": rep.tolerance,
            "oscillatory": rep.oscillatory,
            "tail_empty_warning": rep.tail_empty_warning,
        }),
        checks,
        tables: vec![CsvTable {
            name: "tails",
            text: csv_text(&header_refs, &rows),
        }],
        plots,
    })
}

fn run_localize(
    exp: &Experiment,
    system: &crate::symbols::SystemDescriptor,
    n_list: &[usize],
    expect: Option<bool>,
) -> Result<ActionOutput> {
    let fam = need_family(exp)?;
    let phi = PhysTestFn::one(exp.grid.clone());
    let rep = localisation_residual(fam, system, &phi, n_list)?;

    let mut checks = Vec::new();
    if let Some(want) = expect {
        checks.push(check(
            "localisation_expectation",
            rep.localised == want,
            format!("verdict {} against expected {want}", rep.localised),
        ));
    }

    let rows: Vec<Vec<String>> = rep
        .n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            vec![
                n.to_string(),
                f(rep.residual_norms[i]),
                f(rep.base_norms[i]),
                f(rep.ratios[i]),
            ]
        })
        .collect();
    let plots = vec![PlotData {
        name: "localisation_ratio",
        x_label: "n",
        y_label: "ratio",
        points: rep
            .n_list
            .iter()
            .zip(rep.ratios.iter())
            .map(|(&n, &r)| (n as f64, r))
            .collect(),
    }];
    Ok(ActionOutput {
        results: json!({
            "n_list": rep.n_list,
            "residual_norms": rep.residual_norms,
            "base_norms": rep.base_norms,
            "ratios": rep.ratios,
            "zero_mode_norms": rep.zero_mode_norms,
            "localised": rep.localised,
        }),
        checks,
        tables: vec![CsvTable {
            name: "localisation",
            text: csv_text(&["n", "residual", "base", "ratio"], &rows),
        }],
        plots,
    })
}

fn run_commutator(
    exp: &Experiment,
    omega_list: &[f64],
    psi: &crate::shell::ShellTestFn,
    expect: Option<bool>,
) -> Result<ActionOutput> {
    let phi = exp.partition.window(0);
    let rep = commutation_decay_experiment(phi, psi, omega_list, exp.seed)?;

    let mut checks = Vec::new();
    if let Some(want) = expect {
        checks.push(check(
            "commutator_decay_expectation",
            rep.decays == want,
            format!("verdict {} against expected {want}", rep.decays),
        ));
    }

    let rows: Vec<Vec<String>> = rep
        .omega_list
        .iter()
        .zip(rep.norms.iter())
        .map(|(&w, &nm)| vec![f(w), f(nm)])
        .collect();
    let plots = vec![PlotData {
        name: "commutator_norms",
        x_label: "omega",
        y_label: "norm",
        points: rep.omega_list.iter().cloned().zip(rep.norms.iter().cloned()).collect(),
    }];
    Ok(ActionOutput {
        results: json!({
            "omega_list": rep.omega_list,
            "norms": rep.norms,
            "decays": rep.decays,
        }),
        checks,
        tables: vec![CsvTable {
            name: "commutator",
            text: csv_text(&["omega", "norm"], &rows),
        }],
        plots,
    })
}

fn run_compensate(
    exp: &Experiment,
    form: &crate::compensation::QuadraticForm,
    system: &crate::symbols::SystemDescriptor,
    regime: crate::symbols::SymbolRegime,
    n_list: &[usize],
    method: crate::measures::LimitMethod,
) -> Result<ActionOutput> {
    let fam = need_family(exp)?;
    let bins = need_bins(exp)?;
    let samples = characteristic_sample_grid(&exp.partition, bins)?;
    let sign = form_sign_on_characteristic(form, system, regime, &samples, exp.seed)?;
    let dict = phi_dictionary(&exp.partition)?;
    let comp = compensation_check(form, fam, &sign, &dict, n_list, method)?;

    let witness = match &sign.verdict {
        FormSign::Indefinite(w) => json!({
            "x_flat": w.x_flat,
            "point": serde_json::to_value(&w.point)?,
            "lambda": w.lambda.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
            "value": [w.value.re, w.value.im],
        }),
        _ => Value::Null,
    };
    let checks = vec![check(
        "compensation_dictionary",
        comp.all_passed,
        format!(
            "verdict {} over {} test functions",
            comp.sign.name(),
            comp.checks.len()
        ),
    )];

    let rows: Vec<Vec<String>> = comp
        .checks
        .iter()
        .map(|c| {
            vec![
                c.label.clone(),
                f(c.nu.re),
                f(c.nu.im),
                f(c.reference.re),
                f(c.reference.im),
                f(c.gap),
                f(c.threshold),
                c.asserted.to_string(),
                c.passed.to_string(),
            ]
        })
        .collect();
    let plots = vec![PlotData {
        name: "dictionary_gaps",
        x_label: "phi_index",
        y_label: "gap",
        points: comp
            .checks
            .iter()
            .enumerate()
            .map(|(i, c)| (i as f64, c.gap))
            .collect(),
    }];
    Ok(ActionOutput {
        results: json!({
            "form": form.label(),
            "sign": {
                "verdict": sign.verdict.name(),
                "points": sign.points,
                "vectors_tested": sign.vectors_tested,
                "marginal_points": sign.marginal_points,
                "vacuous": sign.vacuous,
                "witness": witness,
            },
            "compensation": comp.to_json(),
        }),
        checks,
        tables: vec![CsvTable {
            name: "compensation_checks",
            text: csv_text(
                &["label", "nu_re", "nu_im", "ref_re", "ref_im", "gap", "threshold", "asserted", "passed"],
                &rows,
            ),
        }],
        plots,
    })
}

fn run_example5(
    exp: &Experiment,
    a: [f64; 2],
    forcing: &[crate::sequences::ForcingMode],
    n_list: &[usize],
) -> Result<ActionOutput> {
    let eps = exp
        .eps
        .as_ref()
        .ok_or_else(|| Error::Config("example5 needs an eps schedule".into()))?;
    let bins = need_bins(exp)?;
    let rep = example5_pipeline(&exp.grid, a, eps, forcing, bins, n_list)?;

    let mut checks = vec![
        check("rhs_condition", rep.rhs.satisfied, format!("final norm {:.3e}", rep.rhs.norms.last().copied().unwrap_or(f64::NAN))),
        check("localisation", rep.localisation_ok, format!("final ratio {:.3e}", rep.localisation.ratios.last().copied().unwrap_or(f64::NAN))),
        check("mu11_support", rep.mu11.passed, format!("share {:.6}", rep.mu11.share)),
        check("mu22_support", rep.mu22.passed, format!("share {:.6}", rep.mu22.share)),
        check("off_diagonal", rep.off_diagonal_ok, format!("ratio {:.3e}", rep.off_diagonal_ratio)),
        check("cross_terms", rep.cross_ok, format!("{} pairings", rep.cross_terms.len())),
        check("eq51_residuals", rep.eq51_ok, format!("mu11 {:.3e}, mu22 {:.3e}", rep.eq51_mu11, rep.eq51_mu22)),
        check("measure_residual", rep.measure_residual_ok, format!("max {:.3e}", rep.measure_residual.normalized)),
        check("rank_one", rep.rank_one_ok, format!("defect {:.3e}", rep.rank_one_defect)),
    ];
    if let Some(branch) = &rep.oscillatory_branch {
        checks.push(check(
            "oscillatory_branch",
            branch.passed,
            format!("mass ratio {:.3e}, norm ratio {:.3e}", branch.mass_ratio, branch.norm_ratio),
        ));
    }

    let rhs_rows: Vec<Vec<String>> = rep
        .rhs
        .n_list
        .iter()
        .zip(rep.rhs.norms.iter())
        .map(|(&n, &v)| vec![n.to_string(), f(v)])
        .collect();
    let loc_rows: Vec<Vec<String>> = rep
        .localisation
        .n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            vec![
                n.to_string(),
                f(rep.localisation.residual_norms[i]),
                f(rep.localisation.base_norms[i]),
                f(rep.localisation.ratios[i]),
            ]
        })
        .collect();
    let plots = vec![
        PlotData {
            name: "rhs_norms",
            x_label: "n",
            y_label: "weighted_norm",
            points: rep
                .rhs
                .n_list
                .iter()
                .zip(rep.rhs.norms.iter())
                .map(|(&n, &v)| (n as f64, v))
                .collect(),
        },
        PlotData {
            name: "localisation_ratio",
            x_label: "n",
            y_label: "ratio",
            points: rep
                .localisation
                .n_list
                .iter()
                .zip(rep.localisation.ratios.iter())
                .map(|(&n, &r)| (n as f64, r))
                .collect(),
        },
    ];
    Ok(ActionOutput {
        results: rep.to_json(),
        checks,
        tables: vec![
            CsvTable {
                name: "rhs_curve",
                text: csv_text(&["n", "norm"], &rhs_rows),
            },
            CsvTable {
                name: "localisation_curve",
                text: csv_text(&["n", "residual", "base", "ratio"], &loc_rows),
            },
        ],
        plots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_str;
    use std::path::Path;

    fn run_config(raw: &str) -> (RunOutcome, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let raw = raw.replace("OUTDIR", dir.path().to_str().unwrap());
        let exp = parse_str(&raw, "<test>").unwrap();
        let outcome = run(&exp).unwrap();
        (outcome, dir)
    }

    fn strip_timestamp(report: &Value) -> Value {
        let mut v = report.clone();
        v.as_object_mut().unwrap().remove("timestamp");
        v
    }

    fn read(path: &Path) -> String {
        std::fs::read_to_string(path).unwrap()
    }

    #[test]
    fn measure_run_is_deterministic_and_well_formed() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "family": {"kind": "plane_wave", "k": [1, 0], "exponent": 1.0},
  "schedules": {"omega": {"coeff": 1.0, "exponent": -1.0}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "measure",
  "action_params": {"n_list": [2, 4, 8],
                     "expect_band": {"kind": "interior", "min_share": 0.99}},
  "output": {"dir": "OUTDIR", "formats": ["json", "csv"]},
  "seed": 7
}"#;
        let (first, dir1) = run_config(raw);
        assert_eq!(first.exit_code, 0, "checks: {:?}", first.checks);
        assert!(first.all_passed);

        // The report names every check and carries the config hash.
        let names: Vec<&str> = first.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["hermiticity", "positivity", "bookkeeping", "mass_placement"]
        );
        assert_eq!(
            first.report["config_hash"].as_str().unwrap().len(),
            64
        );
        assert_eq!(first.report["action"], "measure");

        // Artifacts: report + two CSV tables, no plotdata (not requested).
        let report_path = dir1.path().join("report.json");
        assert!(report_path.exists());
        assert!(dir1.path().join("bands.csv").exists());
        assert!(dir1.path().join("measure.csv").exists());
        assert!(!dir1.path().join("mass_interior.dat").exists());

        // CSV format: LF endings, '.' decimals, ',' separators.
        let bands = read(&dir1.path().join("bands.csv"));
        assert!(!bands.contains('\r'));
        assert!(bands.starts_with("n,sigma0,interior,sigmainf,total\n"));
        assert!(bands.lines().count() == 4);

        // Determinism: rerunning the identical config into the same
        // directory reproduces the CSV byte-for-byte and the report minus
        // its timestamp.
        let measure1 = read(&dir1.path().join("measure.csv"));
        let r1: Value = serde_json::from_str(&read(&report_path)).unwrap();
        let raw_same = raw.replace("OUTDIR", dir1.path().to_str().unwrap());
        let exp = parse_str(&raw_same, "<test>").unwrap();
        let second = run(&exp).unwrap();
        assert_eq!(
            strip_timestamp(&first.report),
            strip_timestamp(&second.report)
        );
        assert_eq!(bands, read(&dir1.path().join("bands.csv")));
        assert_eq!(measure1, read(&dir1.path().join("measure.csv")));
        let r2: Value = serde_json::from_str(&read(&report_path)).unwrap();
        assert_eq!(strip_timestamp(&r1), strip_timestamp(&r2));
    }

    #[test]
    fn failed_expectation_exits_one() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "family": {"kind": "plane_wave", "k": [1, 0], "exponent": 1.0},
  "schedules": {"omega": {"coeff": 1.0, "exponent": -1.0}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "measure",
  "action_params": {"n_list": [2, 4, 8],
                     "expect_band": {"kind": "sigmainf", "min_share": 0.9}},
  "output": {"dir": "OUTDIR", "formats": ["json"]},
  "seed": 7
}"#;
        let (outcome, _dir) = run_config(raw);
        assert_eq!(outcome.exit_code, 1);
        assert!(!outcome.all_passed);
        let failed: Vec<&str> = outcome
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        assert_eq!(failed, vec!["mass_placement"]);
        assert_eq!(outcome.report["all_passed"], false);
    }

    #[test]
    fn project_masses_are_consistent() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "family": {"kind": "real_cosine", "k": [1, 1], "exponent": 1.0},
  "schedules": {"omega": {"coeff": 1.0, "exponent": -1.0}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "project",
  "action_params": {"n": 8},
  "output": {"dir": "OUTDIR", "formats": ["json", "csv", "plotdata"]},
  "seed": 3
}"#;
        let (outcome, dir) = run_config(raw);
        assert_eq!(outcome.exit_code, 0, "checks: {:?}", outcome.checks);
        assert!(dir.path().join("h_measure.csv").exists());
        assert!(dir.path().join("sc_bands.csv").exists());
        assert!(dir.path().join("h_dir_mass.dat").exists());
        let plot = read(&dir.path().join("h_dir_mass.dat"));
        assert!(plot.starts_with("# dir_bin mass\n"));
        assert_eq!(plot.lines().count(), 9, "header plus one line per bin");
        // Antipodal directions of the real cosine each carry half the mass.
        let total = outcome.report["results"]["total"].as_f64().unwrap();
        let dirs = outcome.report["results"]["h"]["dir_masses"].as_array().unwrap();
        let positive: Vec<f64> = dirs.iter().map(|v| v.as_f64().unwrap()).collect();
        let top = positive.iter().cloned().fold(0.0, f64::max);
        assert!((top / total - 0.5).abs() < 1e-9, "top bin holds half the mass");
    }

    #[test]
    fn oscillatory_and_localize_report_their_verdicts() {
        let osc = r#"{
  "version": "1.0",
  "grid": {"d": 1, "N": 32},
  "family": {"kind": "plane_wave", "k": [1], "exponent": 1.0},
  "schedules": {"omega": {"coeff": 1.0, "exponent": -1.0}},
  "action": "oscillatory",
  "action_params": {"n_list": [2, 4, 8], "r_list": [0.5, 1.5],
                     "expect_oscillatory": true},
  "output": {"dir": "OUTDIR", "formats": ["json", "csv"]},
  "seed": 5
}"#;
        let (outcome, dir) = run_config(osc);
        assert_eq!(outcome.exit_code, 0, "checks: {:?}", outcome.checks);
        assert_eq!(outcome.report["results"]["oscillatory"], true);
        assert_eq!(
            outcome.report["results"]["tail_empty_warning"], false,
            "radii stay inside the lattice"
        );
        let tails = read(&dir.path().join("tails.csv"));
        assert!(tails.starts_with("r,n=2,n=4,n=8\n"));

        let loc = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "family": {"kind": "relaxation", "a": [0.7, -1.3],
              "forcing": [{"component": 0, "k": [0, 12], "exponent": 0.0,
                            "amplitude": {"coeff": 1.0, "exponent": -2.0}}]},
  "schedules": {"eps": {"coeff": 100.0, "exponent": -0.5}},
  "action": "localize",
  "action_params": {
    "system": {"l": 0, "m": 1, "terms": [
      {"alpha": [0, 0], "matrix": [[[1,0],[0,0]],[[0,0],[1,0]]]},
      {"alpha": [1, 0], "matrix": [[[0.7,0],[0,0]],[[0,0],[0,0]]]},
      {"alpha": [0, 1], "matrix": [[[0,0],[0,0]],[[0,0],[-1.3,0]]]}
    ]},
    "n_list": [4, 16, 64],
    "expect_localised": true
  },
  "output": {"dir": "OUTDIR", "formats": ["json", "csv"]},
  "seed": 5
}"#;
        let (outcome, dir) = run_config(loc);
        assert_eq!(outcome.exit_code, 0, "checks: {:?}", outcome.checks);
        assert_eq!(outcome.report["results"]["localised"], true);
        let table = read(&dir.path().join("localisation.csv"));
        assert!(table.starts_with("n,residual,base,ratio\n"));
        // Kernel-aligned forcing: the ratio is exactly 1/(1 + 12 ε_n).
        let ratios = outcome.report["results"]["ratios"].as_array().unwrap();
        let last = ratios.last().unwrap().as_f64().unwrap();
        let expected = 1.0 / (1.0 + 12.0 * 100.0 / 8.0);
        assert!((last - expected).abs() < 1e-12, "{last} vs {expected}");
    }

    #[test]
    fn example5_run_produces_full_verdict_set() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 128},
  "schedules": {"eps": {"coeff": 1.0, "exponent": -2.0}},
  "bins": {"n_dir": 8, "n_rad": 3, "delta": 0.2},
  "action": "example5",
  "action_params": {
    "a": [0.7, -1.3],
    "forcing": [
      {"component": 0, "k": [0, 1], "exponent": 1.0,
        "amplitude": {"coeff": 1.0, "exponent": -2.0}},
      {"component": 1, "k": [1, 0], "exponent": 1.0,
        "amplitude": {"coeff": 1.0, "exponent": -2.0}}
    ],
    "n_list": [4, 32]
  },
  "output": {"dir": "OUTDIR", "formats": ["json", "csv", "plotdata"]},
  "seed": 11
}"#;
        let (outcome, dir) = run_config(raw);
        assert_eq!(outcome.exit_code, 0, "checks: {:?}", outcome.checks);
        let names: Vec<&str> = outcome.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "rhs_condition", "localisation", "mu11_support", "mu22_support",
                "off_diagonal", "cross_terms", "eq51_residuals", "measure_residual",
                "rank_one", "oscillatory_branch",
            ]
        );
        assert!(dir.path().join("rhs_curve.csv").exists());
        assert!(dir.path().join("localisation_curve.csv").exists());
        assert!(dir.path().join("rhs_norms.dat").exists());
        assert_eq!(outcome.report["results"]["all_passed"], true);
    }

    #[test]
    fn compensate_run_reports_the_verdict_and_gaps() {
        let raw = r#"{
  "version": "1.0",
  "grid": {"d": 2, "N": 32},
  "family": {"kind": "relaxation", "a": [0.7, -1.3],
              "forcing": [
                {"component": 0, "k": [0, 8], "exponent": 0.0,
                  "amplitude": {"coeff": 1.0, "exponent": -1.0}},
                {"component": 1, "k": [8, 0], "exponent": 0.0,
                  "amplitude": {"coeff": 1.0, "exponent": -1.0}}
              ]},
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
    "regime": "p1",
    "n_list": [4, 8, 16],
    "method": "last"
  },
  "output": {"dir": "OUTDIR", "formats": ["json", "csv"]},
  "seed": 42
}"#;
        let (outcome, dir) = run_config(raw);
        assert_eq!(outcome.exit_code, 0, "checks: {:?}", outcome.checks);
        assert_eq!(
            outcome.report["results"]["sign"]["verdict"],
            "ZeroEverywhere"
        );
        assert_eq!(outcome.report["results"]["sign"]["witness"], Value::Null);
        let table = read(&dir.path().join("compensation_checks.csv"));
        assert!(table.starts_with(
            "label,nu_re,nu_im,ref_re,ref_im,gap,threshold,asserted,passed\n"
        ));
        // Trivial partition: one window plus eight harmonics.
        assert_eq!(table.lines().count(), 10);
    }
}
