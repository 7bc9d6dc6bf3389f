//! Builds the bundled synthetic slow/fast response pair and prints its
//! conditioning and the angles between the modal and actuator directions.
//!
//! `cargo run --example synthetic_plant -- [n_y] [kappa] [seed]`

use cdctl::numlin::{condition_number, gsvd, subspace_angles};
use cdctl::sim::synth_response_pair;

fn main() -> cdctl::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ny: usize = args.first().and_then(|v| v.parse().ok()).unwrap_or(96);
    let kappa: f64 = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(1000.0);
    let seed: u64 = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(1);
    let nf = 2 * ny / 3;

    let pair = synth_response_pair(ny, ny, nf, kappa, seed)?;
    let f = gsvd(&pair)?;
    println!("pair {ny}x{ny} / {ny}x{nf}, seed {seed}");
    println!("cond [R_s R_f] = {:.1}", condition_number(&pair.concat())?);
    println!("cond R_s = {:.1}, cond R_f = {:.1}", condition_number(&pair.rs)?, condition_number(&pair.rf)?);
    println!("cond X = {:.1}", condition_number(&f.x)?);

    let angles = subspace_angles(&f.x, &f.u_s)?;
    let diag: Vec<f64> = (0..ny).map(|i| angles[(i, i)]).collect();
    let (lo, hi) = diag.iter().fold((90.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    println!("angle between x_i and the i-th slow direction: {lo:.1} to {hi:.1} deg");
    Ok(())
}
