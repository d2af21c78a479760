//! The first commutation lemma, numerically: the commutator of a smooth
//! cut-off and a scaled Fourier multiplier shrinks with the scale, and the
//! commutator is a compact operator while the multiplier is not.

use num_complex::Complex64;
use oneshm::error::Result;
use oneshm::grid::{PhysTestFn, TorusGrid};
use oneshm::operators::{
    commutation_decay_experiment, compactness_probe, escaping_wave_probes, CommutatorOp,
    MultiplicationOp, MultiplierOp,
};
use oneshm::shell::ShellTestFn;

fn main() -> Result<()> {
    let grid = TorusGrid::new(1, 512)?;
    let phi = PhysTestFn::bump(grid.clone(), &[0.5], 0.35)?;
    let psi = ShellTestFn::c0(1, |eta| Complex64::new((-(eta[0] * eta[0])).exp(), 0.0), "gauss")?;

    let omegas: Vec<f64> = (2..=8).map(|p| 0.5f64.powi(p)).collect();
    let rep = commutation_decay_experiment(&phi, &psi, &omegas, 11)?;

    println!("|| [phi, psi(omega D)] || on random unit fields:");
    println!();
    println!("{:>10} {:>12}", "omega", "norm est.");
    for (omega, norm) in omegas.iter().zip(&rep.norms) {
        println!("{omega:>10.5} {norm:>12.3e}");
    }
    println!();
    println!(
        "decays: {} (final/initial = {:.3})",
        rep.decays,
        rep.norms.last().unwrap() / rep.norms[0]
    );

    // Negative control: a homogeneous symbol has no scale, so the same
    // experiment sees a flat curve.
    let sign = ShellTestFn::homogeneous(1, |e| Complex64::new(e[0], 0.0), "sign");
    let control = commutation_decay_experiment(&phi, &sign, &omegas, 11)?;
    println!("homogeneous control decays: {}", control.decays);

    // Compactness: escaping normalised waves are flattened by the
    // commutator even at a fixed scale.
    let envelope = PhysTestFn::gaussian_spectrum(grid.clone(), 50.0)?;
    let carriers: Vec<Vec<i64>> = [8i64, 16, 32, 64].iter().map(|&k| vec![k]).collect();
    let probes = escaping_wave_probes(&envelope, &carriers)?;
    let comm = CommutatorOp::new(
        MultiplicationOp::new(phi),
        MultiplierOp::scaled(grid, &psi, 0.25)?,
    );
    let norms = compactness_probe(&comm, &probes)?;
    println!();
    println!("commutator norm on waves escaping to infinity (carrier 8 -> 64):");
    for (k, norm) in [8, 16, 32, 64].iter().zip(&norms) {
        println!("  carrier {k:>3}: {norm:.3e}");
    }
    Ok(())
}
