//! Bin a single plane wave at three characteristic-length schedules and
//! watch its mass land in the interior, the zero sphere, and the sphere at
//! infinity.
//!
//! Run with `cargo run --release --example plane_wave_regimes`.

use oneshm::error::Result;
use oneshm::measures::empirical_measure;
use oneshm::sequences::{ScaleSchedule, SequenceFamily};
use oneshm::shell::{CellKind, ShellBins};
use oneshm::windows::PhysPartition;

fn main() -> Result<()> {
    let grid = oneshm::grid::TorusGrid::new(2, 128)?;
    let fam = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0)?;
    let part = PhysPartition::trivial(grid);
    let bins = ShellBins::new(2, 8, 5, 0.15)?;

    let rows = [
        ("omega = 1/n      (matched)", ScaleSchedule::power(1.0, -1.0)),
        ("omega = 1/n^2    (too fine)", ScaleSchedule::power(1.0, -2.0)),
        ("omega = 1/sqrt(n) (too coarse)", ScaleSchedule::power(1.0, -0.5)),
    ];

    println!("plane wave exp(2 pi i n x_1) on a 128^2 grid, measured at n = 64");
    println!();
    println!("{:<32} {:>8} {:>10} {:>10}", "schedule", "sigma0", "interior", "sigma_inf");
    for (label, omega) in &rows {
        let em = empirical_measure(&fam, &part, omega, 64, &bins)?;
        let mut by_band = [0.0f64; 3];
        for (_, cell, m) in em.cells() {
            let trace: f64 = (0..m.nrows()).map(|i| m[(i, i)].re).sum();
            match em.bins().info(cell).unwrap().kind {
                CellKind::Sigma0 => by_band[0] += trace,
                CellKind::Interior => by_band[1] += trace,
                CellKind::SigmaInf => by_band[2] += trace,
            }
        }
        let total = em.total_trace();
        println!(
            "{label:<32} {:>8.4} {:>10.4} {:>10.4}",
            by_band[0] / total,
            by_band[1] / total,
            by_band[2] / total
        );
    }

    println!();
    println!("the matched schedule keeps the wave at eta = k; mismatched schedules");
    println!("push the same unit of mass to one of the two boundary spheres.");
    Ok(())
}
