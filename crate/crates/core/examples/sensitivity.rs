//! Output sensitivity of the two-array loop (Γ = I) with and without the
//! input compensator, and the fast-array control effort for two slow-only bands.

use std::f64::consts::PI;

use cdctl::analysis::{db, input_sensitivity_sweep, output_sensitivity_sweep, FrequencyGrid, Realization};
use cdctl::design::{compose_design, midranging_filters, Compensators, WeightMode};
use cdctl::numlin::gsvd;
use cdctl::sim::synth_response_pair;

fn main() -> cdctl::Result<()> {
    let pair = synth_response_pair(32, 32, 20, 1000.0, 1)?;
    let fact = gsvd(&pair)?;
    let a = 2.0 * PI * 700.0;
    let grid = FrequencyGrid::log_hz(0.01, 5000.0, 300)?;
    let filters = |ls_hz: f64| midranging_filters(a, a, 900e-6, 2.0 * PI * 176.0, 2.0 * PI * ls_hz);

    let d = compose_design(&fact, &filters(50.0)?, 1.0, &WeightMode::Identity, Compensators::default())?;
    for input in [true, false] {
        let s = output_sensitivity_sweep(&d, &grid, input, false, Realization::Continuous)?;
        let peak = s.smax.iter().copied().fold(0.0, f64::max);
        println!("input compensator {input:5}: peak sigma_max(S) {:.2} dB, modal gap {:.2e}", db(peak), s.modal_gap());
    }

    println!("\n  f [Hz]   fast effort (10 Hz band)   fast effort (50 Hz band)");
    let slow10 = input_sensitivity_sweep(&d.with_filters(filters(10.0)?), &grid, Realization::Continuous)?;
    let slow50 = input_sensitivity_sweep(&d, &grid, Realization::Continuous)?;
    for k in (0..grid.len()).step_by(30) {
        println!("{:8.2}   {:20.2} dB   {:20.2} dB", slow10.freq_hz[k], db(slow10.su_f_max[k]), db(slow50.su_f_max[k]));
    }
    Ok(())
}
