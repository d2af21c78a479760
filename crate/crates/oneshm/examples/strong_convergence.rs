//! The strong-convergence tail criterion: a forced family whose spectrum
//! stays inside every rescaled ball converges strongly (negative Sobolev
//! norms collapse), while a family escaping the balls is rejected without
//! any conclusion being asserted.

use oneshm::error::Result;
use oneshm::grid::{PhysTestFn, TorusGrid};
use oneshm::measures::CMat;
use oneshm::sequences::{ScaleSchedule, SequenceFamily};
use oneshm::symbols::{rhs_condition, tail_condition, Coefficient, Term};

fn main() -> Result<()> {
    let grid = TorusGrid::new(2, 256)?;
    let id = CMat::identity(1, 1);
    let sys = oneshm::symbols::SystemDescriptor::new(
        grid.clone(),
        1,
        1,
        0,
        1,
        vec![
            Term::new(vec![0, 0], Coefficient::Constant(id.clone())),
            Term::new(vec![1, 0], Coefficient::Constant(id)),
        ],
        ScaleSchedule::power(1.0, -1.5),
    )?;
    let phi = PhysTestFn::one(grid.clone());
    let n_list = [8usize, 16, 32, 64];
    let r_list = [1.0, 2.0];

    // Mode n with amplitude n^{-3/2}: inside the ball of radius r/eps_n for
    // every r, so the criterion applies and the norms decay.
    let good = SequenceFamily::plane_wave(grid.clone(), &[1, 0], 1.0)?
        .with_amplitude(ScaleSchedule::power(1.0, -1.5));
    let rhs = rhs_condition(&good, &phi, &sys, &n_list)?;
    let tail = tail_condition(&good, &sys, &rhs, &r_list, &n_list)?;
    println!("contained family (mode n, amplitude n^-3/2):");
    println!("  rhs satisfied: {}", rhs.satisfied);
    if let Some(h) = &tail.h_norms {
        for (n, v) in n_list.iter().zip(h) {
            println!("  n = {n:>3}: negative-norm {v:.4e}");
        }
        println!("  decay {:.1}x over the run", h[0] / h[h.len() - 1]);
    }
    println!("  verdict: {:?}", tail.verdict);

    // Mode n^2 sits beyond radius r*n^{3/2} already at n = 11: the
    // hypothesis fails, so no decay claim is made either way.
    let bad = SequenceFamily::plane_wave(grid, &[1, 0], 2.0)?;
    let n_bad = [4usize, 8, 11];
    let rhs_bad = rhs_condition(&bad, &phi, &sys, &n_bad)?;
    let tail_bad = tail_condition(&bad, &sys, &rhs_bad, &r_list, &n_bad)?;
    println!();
    println!("escaping family (mode n^2):");
    println!("  tail hypothesis met: {}", tail_bad.tail_condition_met);
    println!("  verdict: {:?}", tail_bad.verdict);
    Ok(())
}
