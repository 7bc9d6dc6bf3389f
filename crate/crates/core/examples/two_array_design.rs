//! Composes a two-array controller on the synthetic plant and prints the
//! gain structure and the closed-loop modal poles for several μ.

use std::f64::consts::PI;

use cdctl::design::{closed_loop_poles, compose_design, midranging_filters, Compensators, WeightMode};
use cdctl::numlin::{gsvd, norm2};
use cdctl::sim::synth_response_pair;

fn main() -> cdctl::Result<()> {
    let pair = synth_response_pair(24, 24, 16, 100.0, 5)?;
    let fact = gsvd(&pair)?;
    let filters = midranging_filters(2.0 * PI * 700.0, 2.0 * PI * 700.0, 900e-6, 2.0 * PI * 176.0, 2.0 * PI * 50.0)?;

    for mu in [0.0, 0.1, 1.0, 10.0] {
        let d = compose_design(&fact, &filters, mu, &WeightMode::Identity, Compensators::default())?;
        let poles = closed_loop_poles(filters.lambda_tiso, mu, &fact.x);
        let (lo, hi) = poles.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        println!(
            "mu = {mu:4}: |K_s| = {:.3}, |K_f| = {:.3}, |Gamma| = {:.3}, shared poles in [{lo:.1}, {hi:.1}] rad/s",
            norm2(&d.k_s),
            norm2(&d.k_f),
            norm2(&d.gamma),
        );
    }

    let d = compose_design(&fact, &filters, 1.0, &WeightMode::Identity, Compensators::default())?;
    let projector_err = (&d.upsilon_f * &d.upsilon_f - &d.upsilon_f).amax();
    println!("input compensator idempotent to {projector_err:.1e}");
    Ok(())
}
