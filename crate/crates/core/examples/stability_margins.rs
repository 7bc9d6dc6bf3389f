//! Nyquist verdict, distance of det L(jω) to −1 and the robust stability
//! margin of a two-array design, over the regularisation weight μ.

use std::f64::consts::PI;

use cdctl::analysis::{open_loop_and_margin, robust_stability_margin, FrequencyGrid, Realization};
use cdctl::design::{compose_design, midranging_filters, Compensators, WeightMode};
use cdctl::numlin::gsvd;
use cdctl::sim::synth_response_pair;

fn main() -> cdctl::Result<()> {
    let pair = synth_response_pair(16, 16, 10, 300.0, 2)?;
    let fact = gsvd(&pair)?;
    let a = 2.0 * PI * 700.0;
    let filters = midranging_filters(a, a, 900e-6, 2.0 * PI * 176.0, 2.0 * PI * 50.0)?;
    let grid = FrequencyGrid::log_hz(0.01, 5000.0, 400)?;

    println!("   mu  stable  winding  min |det L + 1|   at [Hz]  Re det L0 > -0.5   Delta_max   at [Hz]");
    for mu in [0.0, 0.1, 1.0, 10.0] {
        let d = compose_design(&fact, &filters, mu, &WeightMode::Identity, Compensators::default())?;
        let ol = open_loop_and_margin(&d, &grid, Realization::Continuous)?;
        let rm = robust_stability_margin(&d, &grid, Realization::Continuous)?;
        println!(
            "{mu:5}  {:6}  {:7}  {:15.4}  {:8.1}  {:16}  {:10.4e}  {:8.2}",
            ol.verdict.stable,
            ol.verdict.winding,
            ol.min_distance_to_minus_one,
            ol.min_distance_hz,
            ol.margin_hypothesis,
            rm.delta_max,
            rm.argmin_hz
        );
    }
    Ok(())
}
