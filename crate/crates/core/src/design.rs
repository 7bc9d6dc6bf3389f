//! Controller synthesis for one- and two-array systems.
//!
//! A two-array controller acts in generalised modal coordinates. The slow
//! array gets `q_s` on every mode, the fast array gets `q_f` on the first
//! `n_f` (shared) modes, and static compensators fix up the map back to the
//! original output space.
//!
//! The feedback signal is `Γy − ŷ`, with `ŷ` the model output, so
//!
//! ```text
//! u_s = −q_s (K_s y − G_s ŷ)        u_f = −q_f (K_f y − G_f ŷ)
//! ```
//!
//! The `K` gains are built on the regularised inverse `X_μ⁻¹`, the `G` gains
//! on `X⁻¹`. With `Γ = I` they coincide and the loop is plain IMC on `y − ŷ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlin::{pseudo_inverse, regularized_inverse, sorted_svd, GsvdFactorization, RANK_TOL};
use crate::plant::{FrequencyResponse, TransferFunction};

/// Mid-ranging IMC filters and the actuator lags they were designed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidrangingFilters {
    pub q_s: TransferFunction,
    pub q_f: TransferFunction,
    pub lambda_tiso: f64,
    pub lambda_siso: f64,
    pub tau_d: f64,
    pub a_s: f64,
    pub a_f: f64,
}

pub fn midranging_filters(a_s: f64, a_f: f64, tau_d: f64, lambda_tiso: f64, lambda_siso: f64) -> Result<MidrangingFilters> {
    let finite_pos = |v: f64| v.is_finite() && v > 0.0;
    if !finite_pos(a_s) || !finite_pos(a_f) {
        return Err(Error::Validation("actuator poles must be positive".into()));
    }
    if !tau_d.is_finite() || tau_d < 0.0 {
        return Err(Error::Validation("delay must be nonnegative".into()));
    }
    if !finite_pos(lambda_siso) || !finite_pos(lambda_tiso) {
        return Err(Error::InvalidBandwidth("bandwidths must be positive".into()));
    }
    if lambda_siso > lambda_tiso {
        return Err(Error::InvalidBandwidth(format!(
            "slow-only bandwidth {lambda_siso} rad/s exceeds shared bandwidth {lambda_tiso} rad/s"
        )));
    }
    let q_s = TransferFunction::new(vec![lambda_siso / a_s, lambda_siso], vec![1.0, lambda_siso], 0.0)?;
    let c = (lambda_tiso - lambda_siso) / a_f;
    let q_f = TransferFunction::new(
        vec![c, c * a_f, 0.0],
        vec![1.0, lambda_tiso + lambda_siso, lambda_tiso * lambda_siso],
        0.0,
    )?;
    Ok(MidrangingFilters {
        q_s,
        q_f,
        lambda_tiso,
        lambda_siso,
        tau_d,
        a_s,
        a_f,
    })
}

impl MidrangingFilters {
    pub fn g_s(&self) -> TransferFunction {
        TransferFunction::first_order_lag(self.a_s, self.tau_d).expect("validated at construction")
    }

    pub fn g_f(&self) -> TransferFunction {
        TransferFunction::first_order_lag(self.a_f, self.tau_d).expect("validated at construction")
    }

    /// Both filters multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.q_s.num.iter_mut().for_each(|c| *c *= k);
        out.q_f.num.iter_mut().for_each(|c| *c *= k);
        out
    }
}

/// Choice of the weight `W` in the regularised inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", content = "weights", rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Identity,
    /// `W = U diag(w) Uᵀ` with `U` the left singular vectors of `X`.
    SingularBasis(Vec<f64>),
}

impl WeightMode {
    pub fn matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = x.nrows();
        match self {
            WeightMode::Identity => Ok(DMatrix::identity(n, n)),
            WeightMode::SingularBasis(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch(format!("{} weights for {n} modes", w.len())));
                }
                if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::Validation("weights must be positive".into()));
                }
                let (u, _, _) = sorted_svd(x);
                Ok(&u * DMatrix::from_diagonal(&DVector::from_column_slice(w)) * u.transpose())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compensators {
    pub input: bool,
    pub output: bool,
}

impl Default for Compensators {
    fn default() -> Self {
        Self {
            input: true,
            output: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoArrayDesign {
    pub factorization: GsvdFactorization,
    pub filters: MidrangingFilters,
    pub mu: f64,
    #[serde(with = "crate::io::matrix_serde")]
    pub w: DMatrix<f64>,
    pub compensators: Compensators,
    #[serde(with = "crate::io::matrix_serde")]
    pub upsilon_f: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub gamma: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub x_inv: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub x_mu_inv: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub k_s: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub k_f: DMatrix<f64>,
    /// Gains applied to the model output.
    #[serde(with = "crate::io::matrix_serde")]
    pub g_s: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub g_f: DMatrix<f64>,
}

/// `Υ_f = X_{s∩f}† X`.
pub fn input_compensator(fact: &GsvdFactorization) -> DMatrix<f64> {
    pseudo_inverse(&fact.x_tiso()) * &fact.x
}

/// `Γ = X (XᵀWX + μI)⁻¹ (WX)ᵀ`.
pub fn output_compensator(fact: &GsvdFactorization, mu: f64, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(&fact.x * regularized_inverse(&fact.x, mu, w)?)
}

pub fn invert(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    x.clone().lu().try_inverse().ok_or(Error::SingularSystem)
}

/// `[diag(Σ_s, I)⁻¹; 0]`, n_s × n_y.
pub fn slow_modal_inverse(fact: &GsvdFactorization) -> DMatrix<f64> {
    let (ny, ns, nf) = (fact.ny(), fact.ns(), fact.nf());
    DMatrix::from_fn(ns, ny, |i, j| match (i == j, i < nf) {
        (true, true) => 1.0 / fact.sigma_s[i],
        (true, false) => 1.0,
        _ => 0.0,
    })
}

/// `[Σ_f⁻¹ 0]`, n_f × n_y.
pub fn fast_modal_inverse(fact: &GsvdFactorization) -> DMatrix<f64> {
    DMatrix::from_fn(fact.nf(), fact.ny(), |i, j| if i == j { 1.0 / fact.sigma_f[i] } else { 0.0 })
}

pub fn compose_design(
    fact: &GsvdFactorization,
    filters: &MidrangingFilters,
    mu: f64,
    weight: &WeightMode,
    compensators: Compensators,
) -> Result<TwoArrayDesign> {
    let ny = fact.ny();
    let w = weight.matrix(&fact.x)?;
    let x_inv = invert(&fact.x)?;
    let (gamma, x_mu_inv) = if compensators.output {
        let xm = regularized_inverse(&fact.x, mu, &w)?;
        (&fact.x * &xm, xm)
    } else {
        (DMatrix::identity(ny, ny), x_inv.clone())
    };
    let upsilon_f = if compensators.input {
        input_compensator(fact)
    } else {
        DMatrix::identity(ny, ny)
    };
    let ds = &fact.u_s * slow_modal_inverse(fact);
    let df = &fact.u_f * fast_modal_inverse(fact) * &upsilon_f;
    Ok(TwoArrayDesign {
        factorization: fact.clone(),
        filters: filters.clone(),
        mu,
        w,
        compensators,
        k_s: &ds * &x_mu_inv,
        k_f: &df * &x_mu_inv,
        g_s: &ds * &x_inv,
        g_f: &df * &x_inv,
        upsilon_f,
        gamma,
        x_inv,
        x_mu_inv,
    })
}

impl TwoArrayDesign {
    pub fn ny(&self) -> usize {
        self.factorization.ny()
    }
    pub fn ns(&self) -> usize {
        self.factorization.ns()
    }
    pub fn nf(&self) -> usize {
        self.factorization.nf()
    }

    pub fn with_filters(&self, filters: MidrangingFilters) -> Self {
        Self {
            filters,
            ..self.clone()
        }
    }

    /// Nominal plant responses reconstructed from the factorization.
    pub fn r_s(&self) -> DMatrix<f64> {
        self.factorization.reconstruct_s()
    }
    pub fn r_f(&self) -> DMatrix<f64> {
        self.factorization.reconstruct_f()
    }
}

/// `λ(s+a) / (a(s + λ(1 − e^{−sτ})))`, the equivalent feedback controller of
/// the single-array IMC loop. Not rational because of the delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImcController {
    pub lambda: f64,
    pub a: f64,
    pub tau_d: f64,
}

impl FrequencyResponse for ImcController {
    fn response(&self, omega: f64) -> Result<Complex64> {
        let s = Complex64::new(0.0, omega);
        let den = self.a * (s + self.lambda * (1.0 - (-s * self.tau_d).exp()));
        if den.norm() < 1e-300 {
            return Err(Error::PoleOnGrid { omega });
        }
        Ok(self.lambda * (s + self.a) / den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleArrayDesign {
    #[serde(with = "crate::io::matrix_serde")]
    pub r: DMatrix<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub tau_d: f64,
    #[serde(with = "crate::io::matrix_serde")]
    pub k: DMatrix<f64>,
    pub k_i: Vec<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub v: DMatrix<f64>,
}

pub fn single_array_design(r: &DMatrix<f64>, lambda: f64, mu: f64, a: f64, tau_d: f64) -> Result<SingleArrayDesign> {
    if !(lambda > 0.0 && a > 0.0) || !(mu >= 0.0) || !(tau_d >= 0.0) {
        return Err(Error::Validation("lambda and a must be positive, mu and tau_d nonnegative".into()));
    }
    let ny = r.nrows();
    if r.ncols() < ny {
        return Err(Error::InfeasibleDimensions(format!("{} inputs for {ny} outputs", r.ncols())));
    }
    let (u, s, vt) = sorted_svd(r);
    let rank = s.iter().filter(|&&v| v > RANK_TOL * s[0]).count();
    if rank < ny {
        return Err(Error::RankDeficient {
            matrix: "R",
            rank,
            expected: ny,
        });
    }
    let sigma: Vec<f64> = s.iter().take(ny).copied().collect();
    let k_i: Vec<f64> = sigma.iter().map(|&x| x / (mu + x * x)).collect();
    let u = u.columns(0, ny).into_owned();
    let v = vt.rows(0, ny).transpose();
    let k = &v * DMatrix::from_diagonal(&DVector::from_column_slice(&k_i)) * u.transpose();
    Ok(SingleArrayDesign {
        r: r.clone(),
        lambda,
        mu,
        a,
        tau_d,
        k,
        k_i,
        u,
        sigma,
        v,
    })
}

impl SingleArrayDesign {
    pub fn ny(&self) -> usize {
        self.r.nrows()
    }
    pub fn nu(&self) -> usize {
        self.r.ncols()
    }

    pub fn controller(&self) -> ImcController {
        ImcController {
            lambda: self.lambda,
            a: self.a,
            tau_d: self.tau_d,
        }
    }

    /// `q = λ(s+a)/(a(s+λ))`.
    pub fn q(&self) -> TransferFunction {
        TransferFunction::new(vec![self.lambda / self.a, self.lambda], vec![1.0, self.lambda], 0.0)
            .expect("validated at construction")
    }

    pub fn g(&self) -> TransferFunction {
        TransferFunction::first_order_lag(self.a, self.tau_d).expect("validated at construction")
    }

    /// `R† = V Σ⁻¹ Uᵀ`, applied to the model output.
    pub fn model_inverse(&self) -> DMatrix<f64> {
        let inv: Vec<f64> = self.sigma.iter().map(|s| 1.0 / s).collect();
        &self.v * DMatrix::from_diagonal(&DVector::from_vec(inv)) * self.u.transpose()
    }

    /// `Γ = R K = U diag(σ_i k_i) Uᵀ`.
    pub fn gamma(&self) -> DMatrix<f64> {
        &self.r * &self.k
    }

    /// Closed-loop complementary sensitivity of mode `i`,
    /// `σk λ e^{−sτ} / (s + λ(1 − (1 − σk) e^{−sτ}))`.
    pub fn mode_complementary_sensitivity(&self, i: usize, omega: f64) -> Complex64 {
        let s = Complex64::new(0.0, omega);
        let sk = self.sigma[i] * self.k_i[i];
        let e = (-s * self.tau_d).exp();
        sk * self.lambda * e / (s + self.lambda * (1.0 - (1.0 - sk) * e))
    }

    /// Low-frequency pole of each mode, `−λσ_i k_i`.
    pub fn mode_poles(&self) -> Vec<f64> {
        self.sigma.iter().zip(&self.k_i).map(|(s, k)| -self.lambda * s * k).collect()
    }
}

/// `−λσ_i²/(σ_i² + μ)` for the standard singular values of `X`.
pub fn closed_loop_poles(lambda: f64, mu: f64, x: &DMatrix<f64>) -> Vec<f64> {
    let (_, s, _) = sorted_svd(x);
    s.iter().map(|&v| -lambda * (v * v / (v * v + mu))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{gsvd, ResponsePair};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const A: f64 = 2.0 * PI * 700.0;
    const TAU: f64 = 900e-6;

    fn filters(ls_hz: f64) -> MidrangingFilters {
        midranging_filters(A, A, TAU, 2.0 * PI * 176.0, 2.0 * PI * ls_hz).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_design(ny: usize, ns: usize, nf: usize, seed: u64, mu: f64) -> TwoArrayDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = ResponsePair::new(random(&mut rng, ny, ns), random(&mut rng, ny, nf)).unwrap();
        let fact = gsvd(&pair).unwrap();
        compose_design(&fact, &filters(50.0), mu, &WeightMode::Identity, Compensators::default()).unwrap()
    }

    #[test]
    fn steady_state_conditions() {
        let f = filters(50.0);
        let gs0 = f.g_s().dc_gain().unwrap();
        let gf0 = f.g_f().dc_gain().unwrap();
        assert_relative_eq!(gs0 * f.q_s.dc_gain().unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(gf0 * f.q_f.dc_gain().unwrap(), 0.0);
    }

    #[test]
    fn equal_bandwidths_zero_fast_filter() {
        let f = midranging_filters(A, A, TAU, 100.0, 100.0).unwrap();
        assert!(f.q_f.is_zero());
    }

    #[test]
    fn bandwidth_order_enforced() {
        assert!(matches!(
            midranging_filters(A, A, TAU, 10.0, 20.0),
            Err(Error::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn filters_reproduce_modal_sensitivities() {
        let f = filters(50.0);
        let (gs, gf) = (f.g_s(), f.g_f());
        for w in [1.0, 100.0, 2000.0, 20000.0] {
            let e = Complex64::new(0.0, -w * TAU).exp();
            let s = Complex64::new(0.0, w);
            let gq_s = gs.response(w).unwrap() * f.q_s.response(w).unwrap();
            let gq_f = gf.response(w).unwrap() * f.q_f.response(w).unwrap();
            let t_siso = f.lambda_siso / (s + f.lambda_siso) * e;
            let t_tiso = f.lambda_tiso / (s + f.lambda_tiso) * e;
            assert!((gq_s - t_siso).norm() < 1e-12);
            assert!((gq_s + gq_f - t_tiso).norm() < 1e-12);
        }
    }

    #[test]
    fn projector_and_block_structure() {
        let d = random_design(8, 8, 5, 3, 1.0);
        let fact = &d.factorization;
        let xt = fact.x_tiso();
        let pinv = pseudo_inverse(&xt);
        for i in 5..8 {
            assert!(pinv.row(i).norm() < 1e-12);
        }
        let z = pinv.view((0, 0), (5, 8)) * fact.x.view((0, 0), (8, 5));
        assert!((z - DMatrix::<f64>::identity(5, 5)).norm() < 1e-10);
        let p = &xt * &pinv;
        assert!((&p * &p - &p).norm() < 1e-10);
        assert!((&p - p.transpose()).norm() < 1e-10);
        let eig = p.symmetric_eigenvalues();
        assert_eq!(eig.iter().filter(|v| (*v - 1.0).abs() < 1e-10).count(), 5);
        assert_eq!(eig.iter().filter(|v| v.abs() < 1e-10).count(), 3);
        let coupled = &d.x_inv * &p * &fact.x;
        let lower = coupled.view((5, 0), (3, 8));
        assert!(lower.norm() < 1e-9);
        assert!((coupled.view((0, 0), (5, 5)) - DMatrix::<f64>::identity(5, 5)).norm() < 1e-9);
    }

    #[test]
    fn full_fast_array_makes_upsilon_identity() {
        let d = random_design(6, 6, 6, 4, 0.0);
        assert!((&d.upsilon_f - DMatrix::<f64>::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn output_compensator_collapses_at_zero_mu() {
        let d = random_design(6, 6, 4, 5, 0.0);
        assert!((&d.gamma - DMatrix::<f64>::identity(6, 6)).norm() < 1e-10);
        let expect = &d.factorization.u_s * slow_modal_inverse(&d.factorization) * &d.x_inv;
        assert!((&d.k_s - expect).norm() < 1e-10 * d.k_s.norm());
    }

    #[test]
    fn gamma_eigenvalues_and_determinant() {
        let d0 = random_design(6, 6, 4, 6, 0.0);
        let fact = &d0.factorization;
        let i = DMatrix::identity(6, 6);
        let mut prev = f64::INFINITY;
        for mu in [0.0, 0.1, 1.0, 10.0] {
            let g = output_compensator(fact, mu, &i).unwrap();
            let eig = g.clone().complex_eigenvalues();
            for e in eig.iter() {
                assert!(e.im.abs() < 1e-9 && e.re > 0.0 && e.re <= 1.0 + 1e-12, "{e}");
            }
            let det = g.determinant();
            assert!(det < prev);
            if mu > 0.0 {
                assert!(det > 0.0 && det < 1.0);
            }
            prev = det;
        }
    }

    #[test]
    fn singular_basis_weight_diagonalizes_gamma() {
        let d0 = random_design(5, 5, 3, 7, 0.0);
        let fact = &d0.factorization;
        let w = WeightMode::SingularBasis(vec![1.0, 2.0, 0.5, 3.0, 1.5]);
        let g = output_compensator(fact, 1.0, &w.matrix(&fact.x).unwrap()).unwrap();
        let (u, _, _) = sorted_svd(&fact.x);
        let rotated = u.transpose() * g * &u;
        let off = rotated.clone() - DMatrix::from_diagonal(&rotated.diagonal());
        assert!(off.norm() < 1e-10, "{off}");
    }

    #[test]
    fn composition_from_parts() {
        let d = random_design(96, 96, 64, 8, 1.0);
        let f = &d.factorization;
        let ks = &f.u_s * slow_modal_inverse(f) * &d.x_mu_inv;
        let kf = &f.u_f * fast_modal_inverse(f) * &d.upsilon_f * &d.x_mu_inv;
        assert!((&ks - &d.k_s).norm() <= 1e-12 * d.k_s.norm());
        assert!((&kf - &d.k_f).norm() <= 1e-12 * d.k_f.norm());
        assert!((&f.x * &d.x_mu_inv - &d.gamma).norm() < 1e-12 * d.gamma.norm());
    }

    #[test]
    fn regularization_lowers_fast_gain() {
        use crate::numlin::norm2;
        let d1 = random_design(12, 12, 8, 9, 1.0);
        let d0 = random_design(12, 12, 8, 9, 0.0);
        assert!(norm2(&d1.k_f) <= norm2(&d0.k_f));
    }

    #[test]
    fn model_gains_invert_nominal_plant() {
        let d = random_design(7, 9, 4, 10, 1.0);
        let rs_gs = d.r_s() * &d.g_s;
        assert!((rs_gs - DMatrix::<f64>::identity(7, 7)).norm() < 1e-9);
        let p = {
            let xt = d.factorization.x_tiso();
            &xt * pseudo_inverse(&xt)
        };
        assert!((d.r_f() * &d.g_f - p).norm() < 1e-9);
    }

    #[test]
    fn single_array_gains() {
        let r = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 0.5, 0.0]);
        let d = single_array_design(&r, 100.0, 0.0, A, TAU).unwrap();
        assert!((&d.k - pseudo_inverse(&r)).norm() < 1e-12);
        let eye = DMatrix::<f64>::identity(2, 2);
        let d = single_array_design(&eye, 100.0, 1.0, A, TAU).unwrap();
        assert_eq!(d.k_i, vec![0.5, 0.5]);
        let d = single_array_design(&r, 100.0, 2.0, A, TAU).unwrap();
        for &k in &d.k_i {
            assert!(k <= 1.0 / (2.0 * 2f64.sqrt()) + 1e-15);
        }
        assert!(matches!(
            single_array_design(&DMatrix::zeros(2, 3), 1.0, 1.0, A, TAU),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn single_array_poles_track_singular_values() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![100.0, 1.0, 0.01]));
        let d = single_array_design(&r, 2.0 * PI * 176.0, 1.0, A, TAU).unwrap();
        let p = d.mode_poles();
        assert!((p[0] / -d.lambda - 1.0).abs() < 1e-3);
        assert!((p[1] / -d.lambda - 0.5).abs() < 1e-12);
        assert!(p[2] / -d.lambda < 1e-3);
    }

    #[test]
    fn imc_controller_matches_loop_algebra() {
        let d = single_array_design(&DMatrix::identity(1, 1), 2.0 * PI * 176.0, 0.0, A, TAU).unwrap();
        let c = d.controller();
        for w in [1.0, 300.0, 5000.0] {
            let q = d.q().response(w).unwrap();
            let g = d.g().response(w).unwrap();
            let via_imc = q / (1.0 - q * g);
            assert!((c.response(w).unwrap() - via_imc).norm() < 1e-10 * via_imc.norm());
            // mode loop: T = gkc/(1+gkc) with σk = 1
            let t = g * c.response(w).unwrap() / (1.0 + g * c.response(w).unwrap());
            assert!((t - d.mode_complementary_sensitivity(0, w)).norm() < 1e-12);
        }
    }

    #[test]
    fn pole_formula_matches_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let lam = 2.0 * PI * 176.0;
        let x = random(&mut rng, 20, 20);
        for mu in [0.0, 0.1, 1.0, 10.0] {
            let mut p = closed_loop_poles(lam, mu, &x);
            let xxt_inv = invert(&(&x * x.transpose())).unwrap();
            let m = -lam * invert(&(DMatrix::identity(20, 20) + xxt_inv * mu)).unwrap();
            let mut e: Vec<f64> = m.complex_eigenvalues().iter().map(|c| c.re).collect();
            p.sort_by(f64::total_cmp);
            e.sort_by(f64::total_cmp);
            for (a, b) in p.iter().zip(&e) {
                assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
            }
            if mu == 0.0 {
                assert!(p.iter().all(|&v| v == -lam));
            }
        }
        let one = DMatrix::from_element(1, 1, 10.0);
        assert_relative_eq!(closed_loop_poles(lam, 1.0, &one)[0], -lam * 100.0 / 101.0, epsilon = 1e-9);
    }

    #[test]
    fn design_json_round_trip() {
        let d = random_design(4, 5, 2, 12, 1.0);
        let s = serde_json::to_string(&d).unwrap();
        let back: TwoArrayDesign = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }
}
