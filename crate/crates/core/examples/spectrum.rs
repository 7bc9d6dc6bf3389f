//! Amplitude spectral density and integrated beam motion of a simulated run,
//! open loop against closed loop.

use std::f64::consts::PI;

use cdctl::design::{compose_design, midranging_filters, Compensators, WeightMode};
use cdctl::numlin::gsvd;
use cdctl::sim::{gen_disturbance, simulate_two_array, synth_response_pair, DisturbanceModel};
use cdctl::spectral::{welch_asd, Window};

fn main() -> cdctl::Result<()> {
    let fs = 10_000.0;
    let pair = synth_response_pair(24, 24, 16, 1000.0, 1)?;
    let filters = midranging_filters(2.0 * PI * 700.0, 2.0 * PI * 700.0, 900e-6, 2.0 * PI * 176.0, 2.0 * PI * 50.0)?;
    let design = compose_design(&gsvd(&pair)?, &filters, 1.0, &WeightMode::Identity, Compensators::default())?;
    let d = gen_disturbance(&DisturbanceModel::girder(&pair, 4), &pair, 40_000, fs)?;
    let trace = simulate_two_array(&design, &d, None, fs, Some(4))?;

    let open = welch_asd(&trace.d, fs, 8, Window::Hann)?;
    let closed = welch_asd(&trace.y, fs, 8, Window::Hann)?;
    let (ibm_open, ibm_closed) = (open.ibm(), closed.ibm());
    let last = open.freq_hz.len() - 1;
    println!("channel 0, {} segments of {} samples", open.segments, open.n);
    println!("  f [Hz]   ASD open    ASD closed");
    for &f in &[2.0, 20.0, 120.0, 600.0, 2000.0] {
        let k = open.freq_hz.iter().position(|&v| v >= f).unwrap_or(last);
        println!("{:8.2}   {:.3e}   {:.3e}", open.freq_hz[k], open.asd[(0, k)], closed.asd[(0, k)]);
    }
    println!("IBM at Nyquist: open {:.3e}, closed {:.3e}", ibm_open[(0, last)], ibm_closed[(0, last)]);
    let s = closed.summary();
    println!("largest closed-loop line: {:.2} Hz", s.channels[0].peak_hz);
    Ok(())
}
