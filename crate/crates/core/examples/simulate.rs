//! Closed-loop simulation of the two-array loop under the girder-vibration
//! disturbance with a random model error at half the robust margin, saved
//! as CSV.
//!
//! `cargo run --release --example simulate -- [out.csv]`

use std::f64::consts::PI;
use std::path::PathBuf;

use cdctl::analysis::{robust_stability_margin, FrequencyGrid, Realization};
use cdctl::design::{compose_design, midranging_filters, Compensators, WeightMode};
use cdctl::numlin::gsvd;
use cdctl::sim::{gen_disturbance, simulate_two_array, synth_response_pair, DisturbanceModel, TraceFormat, UncertaintySpec};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rms(m: &DMatrix<f64>) -> f64 {
    (m.norm_squared() / m.len() as f64).sqrt()
}

fn main() -> cdctl::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let fs = 10_000.0;
    let pair = synth_response_pair(48, 48, 32, 1000.0, 1)?;
    let filters = midranging_filters(2.0 * PI * 700.0, 2.0 * PI * 700.0, 900e-6, 2.0 * PI * 176.0, 2.0 * PI * 50.0)?;
    let design = compose_design(&gsvd(&pair)?, &filters, 1.0, &WeightMode::Identity, Compensators::default())?;

    let d = gen_disturbance(&DisturbanceModel::girder(&pair, 11), &pair, 20_000, fs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut noise = |r: usize, c: usize, scale: f64| {
        DMatrix::from_fn(r, c, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let raw = UncertaintySpec {
        delta_s: noise(48, 48, 1.0),
        delta_f: noise(48, 32, 1.0),
    };
    let grid = FrequencyGrid::log_hz(0.01, 5000.0, 400)?;
    let margin = robust_stability_margin(&design, &grid, Realization::Continuous)?.delta_max;
    let k = 0.5 * margin / raw.norm();
    let unc = UncertaintySpec {
        delta_s: raw.delta_s * k,
        delta_f: raw.delta_f * k,
    };
    println!("robust margin {margin:.3e}");
    let trace = simulate_two_array(&design, &d, Some(&unc), fs, Some(11))?;

    println!("{} samples at {fs} Hz, model error norm {:.3e}", trace.len(), trace.meta.uncertainty_norm);
    println!("rms disturbance  {:.4e}", rms(&trace.d));
    println!("rms output       {:.4e}", rms(&trace.y));
    println!("rms slow input   {:.4e}", rms(&trace.u_s));
    println!("rms fast input   {:.4e}", rms(&trace.u_f));
    if let Some(path) = out {
        trace.save(&path, TraceFormat::Csv)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
