//! Project one empirical measure onto its two classical shadows: the
//! direction-only H-measure and the semiclassical measure with its atom at
//! the origin.  The same binned object answers both questions.

use num_complex::Complex64;
use oneshm::error::Result;
use oneshm::grid::TorusGrid;
use oneshm::measures::{empirical_measure, h_projection, sc_projection};
use oneshm::sequences::{ScaleSchedule, SequenceFamily};
use oneshm::shell::{ShellBins, ShellTestFn};
use oneshm::windows::PhysPartition;

fn main() -> Result<()> {
    let grid = TorusGrid::new(2, 128)?;
    let fam = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0)?;
    let part = PhysPartition::trivial(grid.clone());
    let bins = ShellBins::new(2, 8, 5, 0.15)?;
    let matched = ScaleSchedule::power(1.0, -1.0);

    let em = empirical_measure(&fam, &part, &matched, 64, &bins)?;

    // H-measure: forget the radius, keep the direction histogram.
    let hm = h_projection(&em);
    println!("H-measure direction histogram (8 bins):");
    for d in 0..8 {
        let share = hm.dir_trace(d) / hm.total_trace();
        let bar = "#".repeat((share * 40.0).round() as usize);
        println!("  dir {d}: {share:>7.4} {bar}");
    }

    // Pairing a homogeneous symbol through the projection agrees with the
    // value read straight off the binned measure.
    let g = ShellTestFn::homogeneous(2, |e| Complex64::new(e[0], 0.0), "eta_1/|eta|");
    let via = hm.pair(&g)?[(0, 0)];
    println!();
    println!("<mu, eta_1/|eta|> via the projection: {:.6} + {:.1e} i", via.re, via.im);

    // Semiclassical measure at three schedules: the radius information the
    // H-measure dropped decides between the zero atom, an interior atom,
    // and escape to infinity.
    println!();
    println!("semiclassical projection of the same wave:");
    println!("{:<22} {:>10} {:>10} {:>10}", "schedule", "zero atom", "interior", "escaped");
    let schedules = [
        ("omega = n^-2", ScaleSchedule::power(1.0, -2.0)),
        ("omega = 1/n", matched.clone()),
        ("omega = 2/n", ScaleSchedule::power(2.0, -1.0)),
        ("omega = n^-1/2", ScaleSchedule::power(1.0, -0.5)),
    ];
    for (label, omega) in &schedules {
        let sc = sc_projection(&empirical_measure(&fam, &part, omega, 64, &bins)?);
        let total = (sc.total_trace() + sc.escaped_trace()).max(1e-300);
        println!(
            "{label:<22} {:>10.4} {:>10.4} {:>10.4}",
            sc.zero_atom_trace() / total,
            sc.interior_trace() / total,
            sc.escaped_trace() / total
        );
        if let Some((_, _, eta, _)) = sc.interior_cells().iter().max_by(|x, y| {
            x.3[(0, 0)].re.total_cmp(&y.3[(0, 0)].re)
        }) {
            println!("{:<22} interior atom near ({:.3}, {:.3})", "", eta[0], eta[1]);
        }
    }

    Ok(())
}
