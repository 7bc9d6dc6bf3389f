//! Gain ratio between the two arrays along the stationary directions of a
//! pair, against random directions.

use cdctl::analysis::{gain_ratio, gain_ratio_gradient, stationary_directions};
use cdctl::numlin::gsvd;
use cdctl::sim::synth_response_pair;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cdctl::Result<()> {
    let pair = synth_response_pair(12, 12, 12, 50.0, 9)?;
    let f = gsvd(&pair)?;
    let ys = stationary_directions(&f.x)?;
    println!("  i   sigma_s/sigma_f   f(y_i)      |grad f(y_i)|");
    for i in 0..12 {
        let y = ys.column(i).into_owned();
        let y = &y / y.norm();
        println!(
            "{i:3}   {:14.4}   {:9.4}   {:.2e}",
            f.sigma_s[i] / f.sigma_f[i],
            gain_ratio(&y, &pair)?,
            gain_ratio_gradient(&y, &pair)?.norm()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let y = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0)).normalize();
    println!("random direction: f = {:.4}, |grad| = {:.3}", gain_ratio(&y, &pair)?, gain_ratio_gradient(&y, &pair)?.norm());
    Ok(())
}
