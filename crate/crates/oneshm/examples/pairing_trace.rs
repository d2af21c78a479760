//! Follow a pairing along the index list.  Two sanity identities come out:
//! with the constant symbol the pairing is the plain mass at every index
//! (no transform is involved in the reference value), and a homogeneous
//! symbol cannot see which admissible schedule was used.

use num_complex::Complex64;
use oneshm::error::Result;
use oneshm::grid::{PhysTestFn, TorusGrid};
use oneshm::measures::{pairing, LimitMethod};
use oneshm::sequences::{ScaleSchedule, SequenceFamily};
use oneshm::shell::ShellTestFn;

fn main() -> Result<()> {
    let grid = TorusGrid::new(2, 64)?;
    let fam = SequenceFamily::real_cosine(grid.clone(), &[1, 1], 1.0)?;
    let one = PhysTestFn::one(grid.clone());
    let n_list = [4usize, 8, 16];

    let trace = pairing(
        &fam,
        &one,
        &one,
        &ShellTestFn::one(2),
        &ScaleSchedule::power(1.0, -1.0),
        &n_list,
        LimitMethod::LastValue,
    )?;
    println!("psi = 1: pairing value vs. quadrature mass");
    for (i, &n) in n_list.iter().enumerate() {
        let mass = fam.generate(n)?.physical_mass();
        let value = trace.values[i][(0, 0)].re;
        println!(
            "  n = {n:>2}: pairing {value:.12}  mass {mass:.12}  rel {:.1e}",
            (value - mass).abs() / mass
        );
    }

    let g = ShellTestFn::homogeneous(
        2,
        |e| Complex64::new(e[0] * e[0] - 0.3 * e[1], 0.0),
        "eta_1^2 - 0.3 eta_2",
    );
    let phi = PhysTestFn::gaussian_spectrum(grid, 30.0)?;
    let n_long = [8usize, 16, 32, 64];
    let mut limits = Vec::new();
    for omega in [ScaleSchedule::power(1.0, -1.0), ScaleSchedule::power(3.0, -2.0)] {
        let t = pairing(&fam, &phi, &phi, &g, &omega, &n_long, LimitMethod::LastValue)?;
        limits.push(t.limit_estimate[(0, 0)]);
    }
    println!();
    println!("homogeneous symbol, two schedules:");
    println!("  omega = 1/n:    {:.12}", limits[0].re);
    println!("  omega = 3/n^2:  {:.12}", limits[1].re);
    println!(
        "  relative difference {:.1e}",
        (limits[0] - limits[1]).norm() / limits[0].norm()
    );
    Ok(())
}
