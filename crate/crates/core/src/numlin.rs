//! Dense linear algebra for paired response matrices.
//!
//! The central object is the transposed generalised SVD of a slow/fast pair
//! of response matrices,
//!
//! ```text
//! R_s = X [diag(Σ_s, I) 0] U_sᵀ        R_f = X [Σ_f; 0] U_fᵀ
//! ```
//!
//! with `X` square and invertible, `U_s`, `U_f` orthogonal and
//! `σ_s,i² + σ_f,i² = 1`. Everything else in this module (pseudo-inverse,
//! regularised inverse, condition numbers, subspace angles) is the small
//! toolkit needed around it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Slow (`rs`, n_y × n_s) and fast (`rf`, n_y × n_f) response matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePair {
    #[serde(with = "crate::io::matrix_serde")]
    pub rs: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub rf: DMatrix<f64>,
}

impl ResponsePair {
    /// Validates shapes (`n_s ≥ n_y ≥ n_f ≥ 1`, same row count) and finiteness.
    /// Rank is only checked by [`gsvd`].
    pub fn new(rs: DMatrix<f64>, rf: DMatrix<f64>) -> Result<Self> {
        if rs.nrows() != rf.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "R_s has {} rows but R_f has {}",
                rs.nrows(),
                rf.nrows()
            )));
        }
        let (ny, ns, nf) = (rs.nrows(), rs.ncols(), rf.ncols());
        if ny == 0 || nf == 0 {
            return Err(Error::DimensionMismatch("empty response matrix".into()));
        }
        if ns < ny || nf > ny {
            return Err(Error::DimensionMismatch(format!(
                "need n_s >= n_y >= n_f, got n_y={ny}, n_s={ns}, n_f={nf}"
            )));
        }
        if rs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("R_s"));
        }
        if rf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("R_f"));
        }
        Ok(Self { rs, rf })
    }

    pub fn ny(&self) -> usize {
        self.rs.nrows()
    }
    pub fn ns(&self) -> usize {
        self.rs.ncols()
    }
    pub fn nf(&self) -> usize {
        self.rf.ncols()
    }

    /// `[R_s R_f]`, the response matrix of the equivalent single-array system.
    pub fn concat(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.ny(), self.ns() + self.nf());
        r.columns_mut(0, self.ns()).copy_from(&self.rs);
        r.columns_mut(self.ns(), self.nf()).copy_from(&self.rf);
        r
    }
}

/// Generalised SVD factors. `sigma_s` and `sigma_f` hold the `n_f` paired
/// generalised singular values; the remaining `n_y - n_f` slow values are 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsvdFactorization {
    #[serde(with = "crate::io::matrix_serde")]
    pub x: DMatrix<f64>,
    pub sigma_s: Vec<f64>,
    pub sigma_f: Vec<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub u_s: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub u_f: DMatrix<f64>,
}

/// Residuals of a factorization against the matrices it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsvdReport {
    pub residual_s: f64,
    pub residual_f: f64,
    pub normalization: f64,
    pub orthogonality_s: f64,
    pub orthogonality_f: f64,
    pub cond_x: f64,
}

impl GsvdReport {
    pub fn passes(&self) -> bool {
        self.residual_s <= 1e-10
            && self.residual_f <= 1e-10
            && self.normalization <= 1e-12
            && self.orthogonality_s <= 1e-12
            && self.orthogonality_f <= 1e-12
            && self.cond_x.is_finite()
            && self.cond_x < 1e12
    }
}

impl GsvdFactorization {
    pub fn ny(&self) -> usize {
        self.x.nrows()
    }
    pub fn ns(&self) -> usize {
        self.u_s.nrows()
    }
    pub fn nf(&self) -> usize {
        self.u_f.nrows()
    }

    /// The n_y × n_s block `[diag(Σ_s, I) 0]`.
    pub fn slow_modal_gain(&self) -> DMatrix<f64> {
        let (ny, ns, nf) = (self.ny(), self.ns(), self.nf());
        DMatrix::from_fn(ny, ns, |i, j| match (i == j, i < nf) {
            (true, true) => self.sigma_s[i],
            (true, false) => 1.0,
            _ => 0.0,
        })
    }

    /// The n_y × n_f block `[Σ_f; 0]`.
    pub fn fast_modal_gain(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.ny(), self.nf(), |i, j| {
            if i == j {
                self.sigma_f[i]
            } else {
                0.0
            }
        })
    }

    pub fn reconstruct_s(&self) -> DMatrix<f64> {
        &self.x * self.slow_modal_gain() * self.u_s.transpose()
    }

    pub fn reconstruct_f(&self) -> DMatrix<f64> {
        &self.x * self.fast_modal_gain() * self.u_f.transpose()
    }

    /// `X_{s∩f}`: the first `n_f` columns of `X`, the rest zeroed.
    pub fn x_tiso(&self) -> DMatrix<f64> {
        let mut m = self.x.clone();
        m.columns_mut(self.nf(), self.ny() - self.nf()).fill(0.0);
        m
    }

    pub fn report(&self, pair: &ResponsePair) -> GsvdReport {
        let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm() / b.norm().max(f64::MIN_POSITIVE);
        let normalization = self
            .sigma_s
            .iter()
            .zip(&self.sigma_f)
            .map(|(s, f)| (s * s + f * f - 1.0).abs())
            .fold(0.0, f64::max);
        let orth = |u: &DMatrix<f64>| {
            let g = u.transpose() * u;
            let n = g.nrows();
            (g - DMatrix::<f64>::identity(n, n)).amax()
        };
        GsvdReport {
            residual_s: rel(&self.reconstruct_s(), &pair.rs),
            residual_f: rel(&self.reconstruct_f(), &pair.rf),
            normalization,
            orthogonality_s: orth(&self.u_s),
            orthogonality_f: orth(&self.u_f),
            cond_x: condition_number(&self.x).unwrap_or(f64::INFINITY),
        }
    }
}

/// Thin SVD with singular values sorted in non-increasing order.
///
/// Backed by faer: the nalgebra bidiagonal solver loses several digits of
/// reconstruction accuracy on moderately sized dense matrices.
pub fn sorted_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return (DMatrix::zeros(m, 0), DVector::zeros(0), DMatrix::zeros(0, n));
    }
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa.thin_svd().expect("svd did not converge");
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| fs[j].total_cmp(&fs[i]));
    let u = DMatrix::from_fn(m, k, |r, c| fu[(r, order[c])]);
    let vt = DMatrix::from_fn(k, n, |r, c| fv[(c, order[r])]);
    let s = DVector::from_iterator(k, order.iter().map(|&i| fs[i]));
    (u, s, vt)
}

/// Singular values in non-increasing order.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    sorted_svd(a).1
}

/// Number of singular values above `RANK_TOL · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    let s = singular_values(a);
    match s.iter().next() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * smax).count(),
        _ => 0,
    }
}

pub fn norm2(a: &DMatrix<f64>) -> f64 {
    singular_values(a).iter().next().copied().unwrap_or(0.0)
}

/// Extends a matrix with orthonormal columns to a square orthogonal matrix.
pub fn orthonormal_completion(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = q.shape();
    if k >= n {
        return q.clone();
    }
    // The leading left singular vectors of the complement projector span the
    // missing directions.
    let proj = DMatrix::<f64>::identity(n, n) - q * q.transpose();
    let (u, _, _) = sorted_svd(&proj);
    let mut cols: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    for j in 0..n - k {
        let mut v = u.column(j).into_owned();
        for _ in 0..2 {
            for c in &cols {
                let p = c.dot(&v);
                v.axpy(-p, c, 1.0);
            }
        }
        let nv = v.norm();
        cols.push(v / nv);
    }
    DMatrix::from_columns(&cols)
}

/// Nearest matrix with orthonormal columns (polar factor).
fn orthonormalize(w: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, _, vt) = sorted_svd(w);
    u * vt
}

/// Generalised SVD of a response pair in the transposed layout.
///
/// Route: thin QR of the stacked `[R_sᵀ; R_fᵀ]`, then an SVD of the fast
/// block of the orthonormal factor (cosine-sine split). Columns are ordered
/// with `σ_f` non-increasing and each column of `X` has its largest-magnitude
/// entry positive.
pub fn gsvd(pair: &ResponsePair) -> Result<GsvdFactorization> {
    let (ny, ns, nf) = (pair.ny(), pair.ns(), pair.nf());
    let rank_s = numerical_rank(&pair.rs);
    if rank_s != ny {
        return Err(Error::RankDeficient {
            matrix: "R_s",
            rank: rank_s,
            expected: ny,
        });
    }
    let rank_f = numerical_rank(&pair.rf);
    if rank_f != nf {
        return Err(Error::RankDeficient {
            matrix: "R_f",
            rank: rank_f,
            expected: nf,
        });
    }

    let mut stacked = DMatrix::zeros(ns + nf, ny);
    stacked.rows_mut(0, ns).copy_from(&pair.rs.transpose());
    stacked.rows_mut(ns, nf).copy_from(&pair.rf.transpose());
    let qr = stacked.qr();
    let q = qr.q();
    let rt = qr.r();
    let q1 = q.rows(0, ns).into_owned();
    let q2 = q.rows(ns, nf).into_owned();

    // Q2ᵀ = A S Bᵀ, so Q2 = B S Aᵀ: U_f = B and the first n_f columns of V are A.
    let (a, sq2, bt) = sorted_svd(&q2.transpose());
    let u_f0 = bt.transpose();
    let v = orthonormal_completion(&a);

    let w0 = &q1 * &v;
    let mut w = DMatrix::zeros(ns, ny);
    let mut sigma_s = vec![0.0; nf];
    let mut sigma_f = vec![0.0; nf];
    let mut scale = vec![1.0; ny];
    for i in 0..ny {
        let col = w0.column(i);
        let c = col.norm();
        if c <= RANK_TOL {
            return Err(Error::RankDeficient {
                matrix: "R_s",
                rank: ny - 1,
                expected: ny,
            });
        }
        let s = if i < nf { sq2[i] } else { 0.0 };
        let r = c.hypot(s);
        if i < nf {
            sigma_s[i] = c / r;
            sigma_f[i] = s / r;
        }
        scale[i] = r;
        w.column_mut(i).copy_from(&(col / c));
    }
    let u_s_thin = orthonormalize(&w);
    let mut u_s = orthonormal_completion(&u_s_thin);
    let mut u_f = u_f0;

    // X = Rtᵀ V diag(r)
    let mut x = rt.transpose() * &v;
    for (i, r) in scale.iter().enumerate() {
        x.column_mut(i).scale_mut(*r);
    }

    for i in 0..ny {
        let col = x.column(i);
        let imax = col.iamax();
        if col[imax] < 0.0 {
            x.column_mut(i).neg_mut();
            u_s.column_mut(i).neg_mut();
            if i < nf {
                u_f.column_mut(i).neg_mut();
            }
        }
    }

    Ok(GsvdFactorization {
        x,
        sigma_s,
        sigma_f,
        u_s,
        u_f,
    })
}

/// Moore-Penrose pseudo-inverse via the SVD, with the relative rank tolerance.
pub fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 || a.iter().all(|&v| v == 0.0) {
        return DMatrix::zeros(n, m);
    }
    let (u, s, vt) = sorted_svd(a);
    let tol = RANK_TOL * s[0];
    let mut out = DMatrix::zeros(n, m);
    for (k, &sk) in s.iter().enumerate() {
        if sk > tol {
            out += (vt.row(k).transpose() / sk) * u.column(k).transpose();
        }
    }
    out
}

/// `(XᵀWX + μI)⁻¹ (WX)ᵀ`, the regularised inverse of `X` under weight `W`.
pub fn regularized_inverse(x: &DMatrix<f64>, mu: f64, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if !x.is_square() || w.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "X is {:?}, W is {:?}",
            x.shape(),
            w.shape()
        )));
    }
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::Validation(format!("mu must be a finite nonnegative number, got {mu}")));
    }
    let wx = w * x;
    let mut normal = x.transpose() * &wx;
    normal = (&normal + normal.transpose()) * 0.5;
    for i in 0..n {
        normal[(i, i)] += mu;
    }
    let s = singular_values(&normal);
    if s.is_empty() || s[s.len() - 1] <= RANK_TOL * s[0] {
        return Err(Error::SingularSystem);
    }
    let chol = normal.clone().cholesky();
    let rhs = wx.transpose();
    match chol {
        Some(c) => Ok(c.solve(&rhs)),
        None => normal.lu().solve(&rhs).ok_or(Error::SingularSystem),
    }
}

/// Acute angles in degrees between the columns of `X` and the columns of an
/// orthogonal `U`: entry `(i, j)` is `acos(|x_iᵀ u_j| / ‖x_i‖)`.
pub fn subspace_angles(x: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != u.nrows() {
        return Err(Error::DimensionMismatch("X and U row counts differ".into()));
    }
    let mut out = DMatrix::zeros(x.ncols(), u.ncols());
    for i in 0..x.ncols() {
        let xi = x.column(i);
        let nx = xi.norm();
        if nx == 0.0 {
            return Err(Error::ZeroColumn(i));
        }
        for j in 0..u.ncols() {
            let c = (xi.dot(&u.column(j)).abs() / nx).min(1.0);
            out[(i, j)] = c.acos().to_degrees();
        }
    }
    Ok(out)
}

/// `‖A‖₂ ‖A†‖₂`.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(a);
    let smax = s.iter().next().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let smin = s
        .iter()
        .copied()
        .rfind(|&v| v > RANK_TOL * smax)
        .unwrap_or(smax);
    Ok(smax / smin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_pair_has_equal_generalised_values() {
        let pair = ResponsePair::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let f = gsvd(&pair).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..2 {
            assert_relative_eq!(f.sigma_s[i], h, epsilon = 1e-14);
            assert_relative_eq!(f.sigma_f[i], h, epsilon = 1e-14);
        }
        assert!(f.report(&pair).passes());
    }

    #[test]
    fn single_fast_actuator_hand_solution() {
        // R_s R_sᵀ = X diag(σ_s², 1) Xᵀ = I and R_f R_fᵀ = X diag(σ_f², 0) Xᵀ = diag(1, 0)
        // are solved by σ_s = σ_f = 1/√2, X = diag(√2, 1).
        let rf = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let pair = ResponsePair::new(DMatrix::identity(2, 2), rf).unwrap();
        let f = gsvd(&pair).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(f.sigma_s[0], h, epsilon = 1e-14);
        assert_relative_eq!(f.sigma_f[0], h, epsilon = 1e-14);
        let expected = DMatrix::from_row_slice(2, 2, &[2f64.sqrt(), 0.0, 0.0, 1.0]);
        assert_relative_eq!(f.x, expected, epsilon = 1e-13);
        assert_relative_eq!(f.u_f[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn random_square_pair_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pair = ResponsePair::new(random_matrix(&mut rng, 96, 96), random_matrix(&mut rng, 96, 64)).unwrap();
        let f = gsvd(&pair).unwrap();
        let rep = f.report(&pair);
        assert!(rep.passes(), "{rep:?}");
        assert!(f.sigma_f.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn wide_slow_array_is_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = ResponsePair::new(random_matrix(&mut rng, 6, 9), random_matrix(&mut rng, 6, 4)).unwrap();
        let f = gsvd(&pair).unwrap();
        assert_eq!(f.u_s.shape(), (9, 9));
        assert!(f.report(&pair).passes(), "{:?}", f.report(&pair));
    }

    #[test]
    fn rank_deficient_slow_array_is_rejected() {
        let mut rs = DMatrix::identity(3, 3);
        rs[(2, 2)] = 0.0;
        let pair = ResponsePair::new(rs, DMatrix::identity(3, 1)).unwrap();
        assert!(matches!(gsvd(&pair), Err(Error::RankDeficient { matrix: "R_s", .. })));
    }

    #[test]
    fn rank_deficient_fast_array_is_rejected() {
        let rf = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let pair = ResponsePair::new(DMatrix::identity(3, 3), rf).unwrap();
        assert!(matches!(gsvd(&pair), Err(Error::RankDeficient { matrix: "R_f", .. })));
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let r = ResponsePair::new(DMatrix::identity(3, 3), DMatrix::identity(2, 1));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn pseudo_inverse_cases() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&a);
        assert_relative_eq!(p, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]), epsilon = 1e-15);

        let b = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        assert_relative_eq!(pseudo_inverse(&b), b.clone().try_inverse().unwrap(), epsilon = 1e-14);

        let z = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(pseudo_inverse(&z), DMatrix::<f64>::zeros(2, 3));
    }

    #[test]
    fn regularized_inverse_per_axis_formula() {
        let x = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 0.1]);
        let w = DMatrix::identity(2, 2);
        let xi = regularized_inverse(&x, 1.0, &w).unwrap();
        assert_relative_eq!(xi[(0, 0)], 10.0 / 101.0, epsilon = 1e-15);
        assert_relative_eq!(xi[(1, 1)], 0.1 / 1.01, epsilon = 1e-15);
        // direct inversion cross-check
        let direct = (x.transpose() * &x + DMatrix::identity(2, 2)).try_inverse().unwrap() * x.transpose();
        assert_relative_eq!(xi, direct, epsilon = 1e-14);
    }

    #[test]
    fn regularized_inverse_collapses_at_zero_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 8, 8) + DMatrix::identity(8, 8) * 3.0;
        let xi = regularized_inverse(&x, 0.0, &DMatrix::identity(8, 8)).unwrap();
        let inv = x.clone().try_inverse().unwrap();
        assert!((&xi - &inv).norm() / inv.norm() < 1e-10);
    }

    #[test]
    fn regularized_inverse_singular_at_zero_mu() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let r = regularized_inverse(&x, 0.0, &DMatrix::identity(2, 2));
        assert!(matches!(r, Err(Error::SingularSystem)));
        assert!(regularized_inverse(&x, 0.5, &DMatrix::identity(2, 2)).is_ok());
    }

    #[test]
    fn angles_identity_and_diagonal() {
        let u = DMatrix::<f64>::identity(3, 3);
        let a = subspace_angles(&u, &u).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 90.0 };
                assert_relative_eq!(a[(i, j)], expect, epsilon = 1e-12);
            }
        }
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let a = subspace_angles(&x, &u).unwrap();
        assert_relative_eq!(a[(0, 0)], 45.0, epsilon = 1e-12);
        assert_relative_eq!(a[(0, 1)], 45.0, epsilon = 1e-12);
        assert_relative_eq!(a[(0, 2)], 90.0, epsilon = 1e-12);

        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.0]);
        assert!(matches!(subspace_angles(&x, &u), Err(Error::ZeroColumn(0))));
    }

    #[test]
    fn condition_number_cases() {
        assert_relative_eq!(condition_number(&DMatrix::identity(4, 4)).unwrap(), 1.0, epsilon = 1e-15);
        let d = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 0.01]);
        assert_relative_eq!(condition_number(&d).unwrap(), 1000.0, epsilon = 1e-10);
        assert!(matches!(condition_number(&DMatrix::zeros(2, 2)), Err(Error::ZeroMatrix)));
    }

    #[test]
    fn completion_is_orthogonal() {
        let q = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let full = orthonormal_completion(&q);
        let g = full.transpose() * &full;
        assert!((g - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }
}
