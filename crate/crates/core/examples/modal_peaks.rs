//! Peak modal sensitivities of the shared and slow-only loops for a few
//! mid-ranging tunings.

use std::f64::consts::PI;

use cdctl::analysis::{modal_peaks, FrequencyGrid, Realization};
use cdctl::design::midranging_filters;

fn main() -> cdctl::Result<()> {
    let a = 2.0 * PI * 700.0;
    let tau = 900e-6;
    let grid = FrequencyGrid::log_hz(0.01, 5000.0, 2000)?;
    println!("lambda_tiso [Hz]  lambda_siso [Hz]   |S_tiso| peak        |S_siso| peak");
    for (lt, ls) in [(176.0, 50.0), (176.0, 10.0), (120.0, 50.0), (60.0, 20.0)] {
        let f = midranging_filters(a, a, tau, 2.0 * PI * lt, 2.0 * PI * ls)?;
        let p = modal_peaks(&f, Realization::Continuous, &grid)?;
        println!(
            "{lt:16.0}  {ls:16.0}   {:5.2} dB @ {:6.1} Hz   {:5.2} dB @ {:6.1} Hz",
            p.s_tiso.value_db, p.s_tiso.freq_hz, p.s_siso.value_db, p.s_siso.freq_hz
        );
    }
    Ok(())
}
