//! Single-array IMC design: modal poles, sensitivity, robust margin and a
//! step response from simulation.

use std::f64::consts::PI;

use cdctl::analysis::{db, single_array_robust_margin, single_array_sensitivity, FrequencyGrid, Realization};
use cdctl::design::single_array_design;
use cdctl::sim::simulate_single_array;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cdctl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let r = DMatrix::from_fn(8, 10, |_, _| rng.random_range(-1.0..1.0));
    let fs = 10_000.0;
    let d = single_array_design(&r, 2.0 * PI * 100.0, 0.1, 2.0 * PI * 700.0, 900e-6)?;
    let poles = d.mode_poles();
    println!("mode poles [rad/s]: {:.1} .. {:.1}", poles.iter().copied().fold(f64::INFINITY, f64::min), poles.iter().copied().fold(f64::NEG_INFINITY, f64::max));

    let grid = FrequencyGrid::log_hz(0.1, 5000.0, 300)?;
    let s = single_array_sensitivity(&d, &grid, Realization::Continuous)?;
    let peak = s.iter().copied().fold(0.0, f64::max);
    let margin = single_array_robust_margin(&d, &grid, Realization::Continuous)?;
    println!("peak sigma_max(S) {:.2} dB, Delta_max {:.3e} at {:.1} Hz", db(peak), margin.delta_max, margin.argmin_hz);

    let n = 5000;
    let step = DMatrix::from_fn(8, n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let trace = simulate_single_array(&d, &step, None, fs, None)?;
    for t in [0.001, 0.005, 0.02, 0.1, 0.499] {
        let k = (t * fs) as usize;
        println!("t = {t:5.3} s: |y| = {:.3e}", trace.y.column(k).amax());
    }
    Ok(())
}
