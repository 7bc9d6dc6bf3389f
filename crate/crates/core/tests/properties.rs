//! Property checks that cut across modules, on randomly drawn pairs,
//! designs and signals.

use std::f64::consts::PI;

use cdctl::analysis::{ScalarModel, Realization};
use cdctl::design::{closed_loop_poles, compose_design, midranging_filters, Compensators, WeightMode};
use cdctl::numlin::{gsvd, norm2, pseudo_inverse, regularized_inverse, singular_values, ResponsePair};
use cdctl::sim::{simulate_two_array, synth_response_pair};
use cdctl::spectral::{asd, welch_asd, Window};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn filters() -> cdctl::design::MidrangingFilters {
    let a = 2.0 * PI * 700.0;
    midranging_filters(a, a, 900e-6, 2.0 * PI * 176.0, 2.0 * PI * 50.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gsvd_reconstructs_and_pairs_values(seed in 0u64..10_000, ny in 2usize..14, extra in 0usize..4, nf_frac in 0.2f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nf = ((ny as f64 * nf_frac).ceil() as usize).clamp(1, ny);
        let pair = ResponsePair::new(random(ny, ny + extra, &mut rng), random(ny, nf, &mut rng)).unwrap();
        let f = gsvd(&pair).unwrap();
        let rep = f.report(&pair);
        prop_assert!(rep.passes(), "{rep:?}");
        for i in 0..nf {
            prop_assert!((f.sigma_s[i].powi(2) + f.sigma_f[i].powi(2) - 1.0).abs() < 1e-12);
        }
        prop_assert!(f.sigma_f.windows(2).all(|w| w[0] >= w[1]));
        let sx = singular_values(&f.x);
        let sr = singular_values(&pair.concat());
        for (a, b) in sx.iter().zip(sr.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * sr[0]);
        }
    }

    #[test]
    fn input_compensator_is_a_rank_nf_projector(seed in 0u64..10_000, ny in 3usize..12) {
        let nf = 1 + (seed as usize % (ny - 1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = ResponsePair::new(random(ny, ny, &mut rng), random(ny, nf, &mut rng)).unwrap();
        let f = gsvd(&pair).unwrap();
        let xt = f.x_tiso();
        let p = &xt * pseudo_inverse(&xt);
        prop_assert!((&p * &p - &p).amax() < 1e-10);
        prop_assert!((&p - p.transpose()).amax() < 1e-10);
        prop_assert!((p.trace() - nf as f64).abs() < 1e-9);
    }

    #[test]
    fn regularised_gain_shrinks_with_mu(seed in 0u64..10_000, n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(n, n, &mut rng);
        let eye = DMatrix::identity(n, n);
        let g = |mu| norm2(&regularized_inverse(&x, mu, &eye).unwrap());
        let (g0, g1, g10) = (g(0.0), g(1.0), g(10.0));
        prop_assert!(g10 <= g1 * (1.0 + 1e-12) && g1 <= g0 * (1.0 + 1e-12));
        prop_assert!((g0 - norm2(&pseudo_inverse(&x))).abs() < 1e-7 * g0);
    }

    #[test]
    fn modal_poles_match_matrix_eigenvalues(seed in 0u64..10_000, n in 2usize..10, mu in 0.0f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(n, n, &mut rng);
        let lambda = 2.0 * PI * 100.0;
        let mut poles = closed_loop_poles(lambda, mu, &x);
        let xxt = &x * x.transpose();
        let inner = DMatrix::identity(n, n) + xxt.try_inverse().unwrap() * mu;
        let a = -(inner.try_inverse().unwrap() * lambda);
        let a = (&a + a.transpose()) * 0.5;
        let mut eig: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        poles.sort_by(f64::total_cmp);
        eig.sort_by(f64::total_cmp);
        for (p, e) in poles.iter().zip(&eig) {
            prop_assert!((p - e).abs() <= 1e-9 * lambda);
            prop_assert!(*p < 0.0 && *p >= -lambda * (1.0 + 1e-12));
        }
    }

    #[test]
    fn ibm_is_monotone_and_welch_of_one_segment_is_plain(seed in 0u64..10_000, n in 4usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(2, n, &mut rng);
        let s = asd(&x, 1000.0).unwrap();
        let ibm = s.ibm();
        for c in 0..2 {
            prop_assert!((1..ibm.ncols()).all(|k| ibm[(c, k)] >= ibm[(c, k - 1)]));
        }
        let w = welch_asd(&x, 1000.0, 1, Window::Rectangular).unwrap();
        prop_assert_eq!(w.asd, s.asd);
    }

    #[test]
    fn simulation_is_linear_in_the_disturbance(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let pair = synth_response_pair(6, 6, 4, 20.0, seed).unwrap();
        let d = compose_design(&gsvd(&pair).unwrap(), &filters(), 1.0, &WeightMode::Identity, Compensators::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let (d1, d2) = (random(6, 300, &mut rng), random(6, 300, &mut rng));
        let run = |dist: &DMatrix<f64>| simulate_two_array(&d, dist, None, 10_000.0, None).unwrap().y;
        let combined = run(&(&d1 * alpha + &d2));
        let separate = run(&d1) * alpha + run(&d2);
        prop_assert!((combined - &separate).amax() <= 1e-9 * (1.0 + separate.amax()));
    }
}

#[test]
fn midranging_loops_have_zero_steady_state_sensitivity() {
    let m = ScalarModel::new(&filters(), Realization::Continuous).unwrap();
    let sc = m.at(1e-7).unwrap();
    assert!(sc.s_tiso().norm() < 1e-6 && sc.s_siso().norm() < 1e-6);
}
