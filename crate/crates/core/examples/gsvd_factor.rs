//! Generalised SVD of a response pair: the two-actuator toy and a random
//! 12-output pair, with the reconstruction report.

use cdctl::numlin::{gsvd, ResponsePair};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cdctl::Result<()> {
    let toy = ResponsePair::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))?;
    let f = gsvd(&toy)?;
    println!("toy: x = {:.6}, sigma_s = {:.6}, sigma_f = {:.6}", f.x[(0, 0)], f.sigma_s[0], f.sigma_f[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let pair = ResponsePair::new(m(12, 12), m(12, 7))?;
    let f = gsvd(&pair)?;
    println!("\n  i   sigma_s   sigma_f   s^2+f^2");
    for i in 0..f.nf() {
        let (s, c) = (f.sigma_s[i], f.sigma_f[i]);
        println!("{i:3}  {s:8.5}  {c:8.5}  {:.3e}", s * s + c * c - 1.0);
    }
    let rep = f.report(&pair);
    println!("\n{}", serde_json::to_string_pretty(&rep).expect("serializable"));
    println!("invariants hold: {}", rep.passes());
    Ok(())
}
