//! Frequency-domain evaluation of the closed loop.
//!
//! Every array contributes a branch `u_k = −q_k G_k (Γy − ŷ)` with model gain
//! `G_k` and nominal response `R_k`. Writing `H = Σ g_k q_k R_k G_k` gives
//!
//! ```text
//! S  = I − H (I + (Γ − I) H)⁻¹ Γ         output sensitivity
//! M  = −[q_k G_k] (I + (Γ − I) H)⁻¹ Γ    disturbance to inputs
//! L  = (I − H)⁻¹ H Γ = L₀ Γ              open loop
//! ```
//!
//! Scalars can be evaluated on the imaginary axis or, for comparison with
//! simulation, on the unit circle through the zero-order-hold filters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{fast_modal_inverse, slow_modal_inverse, Compensators, MidrangingFilters, SingleArrayDesign, TwoArrayDesign};
use crate::error::{Error, Result};
use crate::numlin::ResponsePair;
use crate::plant::{zoh_discretize, FrequencyResponse, TransferFunction};

pub type CMatrix = DMatrix<Complex64>;

pub fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    /// rad/s, strictly increasing.
    pub omega: Vec<f64>,
    pub min_hz: f64,
    pub max_hz: f64,
}

impl FrequencyGrid {
    pub fn log_hz(min_hz: f64, max_hz: f64, count: usize) -> Result<Self> {
        if !(min_hz > 0.0 && max_hz > min_hz && max_hz.is_finite()) || count < 2 {
            return Err(Error::Validation(format!(
                "grid needs 0 < min < max and at least 2 points, got [{min_hz}, {max_hz}] x {count}"
            )));
        }
        let ratio = (max_hz / min_hz).ln();
        let omega = (0..count)
            .map(|k| 2.0 * PI * min_hz * (ratio * k as f64 / (count - 1) as f64).exp())
            .collect();
        Ok(Self { omega, min_hz, max_hz })
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn hz(&self) -> Vec<f64> {
        self.omega.iter().map(|w| w / (2.0 * PI)).collect()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::log_hz(0.01, 5000.0, 2000).expect("valid default grid")
    }
}

/// Where scalar transfer functions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Realization {
    #[default]
    Continuous,
    /// Zero-order-hold equivalents at `e^{jωT}`.
    Discrete { fs_hz: f64 },
}

type Response = Box<dyn FrequencyResponse + Send + Sync>;

fn realize(tf: &TransferFunction, r: Realization) -> Result<Response> {
    Ok(match r {
        Realization::Continuous => Box::new(tf.clone()),
        Realization::Discrete { fs_hz } => Box::new(zoh_discretize(tf, fs_hz)?),
    })
}

/// Actuator and filter scalars of a two-array loop at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopScalars {
    pub g_s: Complex64,
    pub g_f: Complex64,
    pub q_s: Complex64,
    pub q_f: Complex64,
}

impl LoopScalars {
    pub fn t_siso(&self) -> Complex64 {
        self.g_s * self.q_s
    }
    pub fn t_tiso(&self) -> Complex64 {
        self.g_s * self.q_s + self.g_f * self.q_f
    }
    pub fn s_siso(&self) -> Complex64 {
        1.0 - self.t_siso()
    }
    pub fn s_tiso(&self) -> Complex64 {
        1.0 - self.t_tiso()
    }
}

pub struct ScalarModel {
    g_s: Response,
    g_f: Response,
    q_s: Response,
    q_f: Response,
}

impl ScalarModel {
    pub fn new(filters: &MidrangingFilters, realization: Realization) -> Result<Self> {
        Ok(Self {
            g_s: realize(&filters.g_s(), realization)?,
            g_f: realize(&filters.g_f(), realization)?,
            q_s: realize(&filters.q_s, realization)?,
            q_f: realize(&filters.q_f, realization)?,
        })
    }

    pub fn at(&self, omega: f64) -> Result<LoopScalars> {
        Ok(LoopScalars {
            g_s: self.g_s.response(omega)?,
            g_f: self.g_f.response(omega)?,
            q_s: self.q_s.response(omega)?,
            q_f: self.q_f.response(omega)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalSweep {
    pub freq_hz: Vec<f64>,
    pub s_tiso: Vec<f64>,
    pub s_siso: Vec<f64>,
    pub t_tiso: Vec<f64>,
    pub t_siso: Vec<f64>,
}

pub fn modal_sensitivities(filters: &MidrangingFilters, realization: Realization, grid: &FrequencyGrid) -> Result<ModalSweep> {
    let model = ScalarModel::new(filters, realization)?;
    let mut out = ModalSweep {
        freq_hz: grid.hz(),
        s_tiso: Vec::with_capacity(grid.len()),
        s_siso: Vec::with_capacity(grid.len()),
        t_tiso: Vec::with_capacity(grid.len()),
        t_siso: Vec::with_capacity(grid.len()),
    };
    for &w in &grid.omega {
        let sc = model.at(w)?;
        out.s_tiso.push(sc.s_tiso().norm());
        out.s_siso.push(sc.s_siso().norm());
        out.t_tiso.push(sc.t_tiso().norm());
        out.t_siso.push(sc.t_siso().norm());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub omega: f64,
    pub freq_hz: f64,
    pub value_db: f64,
}

/// Grid maximum of `f` refined by golden-section search between the
/// neighbouring grid points.
pub fn refine_peak(f: impl Fn(f64) -> Result<f64>, grid: &FrequencyGrid) -> Result<Peak> {
    let vals: Vec<f64> = grid.omega.iter().map(|&w| f(w)).collect::<Result<_>>()?;
    let k = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(Error::EmptySignal)?;
    let lo = grid.omega[k.saturating_sub(1)];
    let hi = grid.omega[(k + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > 1e-10 * b {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    let (mut w, mut v) = if fc > fd { (c, fc) } else { (d, fd) };
    if vals[k] > v {
        w = grid.omega[k];
        v = vals[k];
    }
    Ok(Peak {
        omega: w,
        freq_hz: w / (2.0 * PI),
        value_db: db(v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalPeaks {
    pub s_tiso: Peak,
    pub s_siso: Peak,
}

pub fn modal_peaks(filters: &MidrangingFilters, realization: Realization, grid: &FrequencyGrid) -> Result<ModalPeaks> {
    let model = ScalarModel::new(filters, realization)?;
    Ok(ModalPeaks {
        s_tiso: refine_peak(|w| Ok(model.at(w)?.s_tiso().norm()), grid)?,
        s_siso: refine_peak(|w| Ok(model.at(w)?.s_siso().norm()), grid)?,
    })
}

/// `ln|det|` and phase, so large determinants do not overflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDet {
    pub ln_abs: f64,
    pub phase: f64,
}

impl LogDet {
    pub fn of(m: &CMatrix) -> Self {
        let lu = m.clone().lu();
        let u = lu.u();
        let sign: f64 = lu.p().determinant();
        let mut ln_abs = 0.0;
        let mut phase = if sign < 0.0 { PI } else { 0.0 };
        for i in 0..u.nrows() {
            let d = u[(i, i)];
            ln_abs += d.norm().ln();
            phase += d.arg();
        }
        Self {
            ln_abs,
            phase: wrap(phase),
        }
    }

    pub fn of_real(m: &DMatrix<f64>) -> Self {
        Self::of(&complexify(m))
    }

    pub fn mul(self, o: Self) -> Self {
        Self {
            ln_abs: self.ln_abs + o.ln_abs,
            phase: wrap(self.phase + o.phase),
        }
    }

    /// The value itself; may overflow to infinity.
    pub fn value(self) -> Complex64 {
        Complex64::from_polar(self.ln_abs.exp(), self.phase)
    }

    /// `|self/other − 1|`.
    pub fn relative_error(self, other: Self) -> f64 {
        (Complex64::from_polar((self.ln_abs - other.ln_abs).exp(), self.phase - other.phase) - 1.0).norm()
    }
}

fn wrap(p: f64) -> f64 {
    let r = (p + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// One actuator array in the loop.
struct Branch {
    g: Response,
    q: Response,
    /// model gain, n_u × n_y
    gain: CMatrix,
    /// `R G`, n_y × n_y
    rg: CMatrix,
}

/// Complex matrices of a closed loop at one frequency.
pub struct LoopPoint {
    pub omega: f64,
    pub h: CMatrix,
    /// `(I + (Γ − I)H)⁻¹ Γ`
    pub z: CMatrix,
}

/// A design reduced to what the frequency-domain formulas need.
pub struct LoopModel {
    ny: usize,
    branches: Vec<Branch>,
    gamma: CMatrix,
    gamma_is_identity: bool,
    pub det_gamma: LogDet,
    scalars: Option<ScalarModel>,
}

impl LoopModel {
    /// Two-array loop with the chosen compensators switched on.
    pub fn two_array(design: &TwoArrayDesign, compensators: Compensators, realization: Realization) -> Result<Self> {
        let fact = &design.factorization;
        let ny = design.ny();
        let gamma = if compensators.output && design.compensators.output {
            design.gamma.clone()
        } else {
            DMatrix::identity(ny, ny)
        };
        let upsilon = if compensators.input && design.compensators.input {
            design.upsilon_f.clone()
        } else {
            DMatrix::identity(ny, ny)
        };
        let g_s = &fact.u_s * slow_modal_inverse(fact) * &design.x_inv;
        let g_f = &fact.u_f * fast_modal_inverse(fact) * upsilon * &design.x_inv;
        let f = &design.filters;
        let branches = vec![
            Branch {
                g: realize(&f.g_s(), realization)?,
                q: realize(&f.q_s, realization)?,
                rg: complexify(&(design.r_s() * &g_s)),
                gain: complexify(&g_s),
            },
            Branch {
                g: realize(&f.g_f(), realization)?,
                q: realize(&f.q_f, realization)?,
                rg: complexify(&(design.r_f() * &g_f)),
                gain: complexify(&g_f),
            },
        ];
        Ok(Self::assemble(ny, branches, &gamma, Some(ScalarModel::new(f, realization)?)))
    }

    pub fn single_array(design: &SingleArrayDesign, realization: Realization) -> Result<Self> {
        let gain = design.model_inverse();
        let branch = Branch {
            g: realize(&design.g(), realization)?,
            q: realize(&design.q(), realization)?,
            rg: complexify(&(&design.r * &gain)),
            gain: complexify(&gain),
        };
        Ok(Self::assemble(design.ny(), vec![branch], &design.gamma(), None))
    }

    fn assemble(ny: usize, branches: Vec<Branch>, gamma: &DMatrix<f64>, scalars: Option<ScalarModel>) -> Self {
        let eye = DMatrix::<f64>::identity(ny, ny);
        Self {
            ny,
            branches,
            gamma_is_identity: gamma == &eye,
            det_gamma: LogDet::of_real(gamma),
            gamma: complexify(gamma),
            scalars,
        }
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Total input count across branches.
    pub fn nu(&self) -> usize {
        self.branches.iter().map(|b| b.gain.nrows()).sum()
    }

    pub fn scalars(&self, omega: f64) -> Result<Option<LoopScalars>> {
        self.scalars.as_ref().map(|s| s.at(omega)).transpose()
    }

    fn branch_gq(&self, omega: f64) -> Result<Vec<(Complex64, Complex64)>> {
        self.branches
            .iter()
            .map(|b| Ok((b.g.response(omega)?, b.q.response(omega)?)))
            .collect()
    }

    pub fn point(&self, omega: f64) -> Result<LoopPoint> {
        let gq = self.branch_gq(omega)?;
        let mut h = CMatrix::zeros(self.ny, self.ny);
        for (b, (g, q)) in self.branches.iter().zip(&gq) {
            h += &b.rg * (g * q);
        }
        let z = if self.gamma_is_identity {
            self.gamma.clone()
        } else {
            let eye = CMatrix::identity(self.ny, self.ny);
            let inner = &eye + (&self.gamma - &eye) * &h;
            inner.lu().solve(&self.gamma).ok_or(Error::SingularLoop { omega })?
        };
        Ok(LoopPoint { omega, h, z })
    }

    pub fn sensitivity(&self, p: &LoopPoint) -> CMatrix {
        CMatrix::identity(self.ny, self.ny) - &p.h * &p.z
    }

    /// Map from output disturbance to each branch's inputs.
    pub fn input_sensitivities(&self, p: &LoopPoint) -> Result<Vec<CMatrix>> {
        self.branches
            .iter()
            .map(|b| Ok(&b.gain * &p.z * (-b.q.response(p.omega)?)))
            .collect()
    }

    /// Stacked `M`, rows ordered by branch.
    pub fn m_matrix(&self, p: &LoopPoint) -> Result<CMatrix> {
        let parts = self.input_sensitivities(p)?;
        let rows: usize = parts.iter().map(|m| m.nrows()).sum();
        let mut out = CMatrix::zeros(rows, self.ny);
        let mut r0 = 0;
        for m in parts {
            out.view_mut((r0, 0), (m.nrows(), self.ny)).copy_from(&m);
            r0 += m.nrows();
        }
        Ok(out)
    }

    /// `L₀ = (I − H)⁻¹ H`; the open loop is `L₀ Γ`.
    pub fn open_loop0(&self, p: &LoopPoint) -> Result<CMatrix> {
        let eye = CMatrix::identity(self.ny, self.ny);
        (&eye - &p.h).lu().solve(&p.h).ok_or(Error::SingularLoop { omega: p.omega })
    }

    pub fn open_loop(&self, p: &LoopPoint) -> Result<CMatrix> {
        Ok(self.open_loop0(p)? * &self.gamma)
    }

    /// `diag(g_k I) M`.
    pub fn weighted_m(&self, p: &LoopPoint) -> Result<CMatrix> {
        let parts = self.input_sensitivities(p)?;
        let rows: usize = parts.iter().map(|m| m.nrows()).sum();
        let mut out = CMatrix::zeros(rows, self.ny);
        let mut r0 = 0;
        for (b, m) in self.branches.iter().zip(parts) {
            let g = b.g.response(p.omega)?;
            out.view_mut((r0, 0), (m.nrows(), self.ny)).copy_from(&(m * g));
            r0 += b.gain.nrows();
        }
        Ok(out)
    }
}

fn singular_extremes(m: &CMatrix) -> (f64, f64) {
    let s = m.singular_values();
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    (min, max)
}

pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_extremes(m).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySweep {
    pub freq_hz: Vec<f64>,
    pub smin: Vec<f64>,
    pub smax: Vec<f64>,
    pub s_tiso: Vec<f64>,
    pub s_siso: Vec<f64>,
    pub t_tiso: Vec<f64>,
    pub t_siso: Vec<f64>,
    pub compensators: Compensators,
    /// False when every mode is shared, so `S_{s\f}` plays no part.
    pub has_siso_modes: bool,
}

impl SensitivitySweep {
    pub fn header() -> Vec<String> {
        ["freq_hz", "smin_db", "smax_db", "s_tiso_db", "s_siso_db", "t_tiso_db", "t_siso_db"]
            .map(String::from)
            .to_vec()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.freq_hz.len())
            .map(|i| {
                vec![
                    self.freq_hz[i],
                    db(self.smin[i]),
                    db(self.smax[i]),
                    db(self.s_tiso[i]),
                    db(self.s_siso[i]),
                    db(self.t_tiso[i]),
                    db(self.t_siso[i]),
                ]
            })
            .collect()
    }

    /// `max_ω |σ_max(S) − max(|S_{s∩f}|, |S_{s\f}|)|`.
    pub fn modal_gap(&self) -> f64 {
        self.smax
            .iter()
            .zip(self.s_tiso.iter().zip(&self.s_siso))
            .map(|(s, (a, b))| (s - if self.has_siso_modes { a.max(*b) } else { *a }).abs())
            .fold(0.0, f64::max)
    }
}

pub fn output_sensitivity_sweep(
    design: &TwoArrayDesign,
    grid: &FrequencyGrid,
    use_input_comp: bool,
    use_output_comp: bool,
    realization: Realization,
) -> Result<SensitivitySweep> {
    let compensators = Compensators {
        input: use_input_comp,
        output: use_output_comp,
    };
    let model = LoopModel::two_array(design, compensators, realization)?;
    let pts: Vec<[f64; 6]> = grid
        .omega
        .par_iter()
        .map(|&w| {
            let p = model.point(w)?;
            let (smin, smax) = singular_extremes(&model.sensitivity(&p));
            let sc = model.scalars(w)?.expect("two-array model has scalars");
            Ok([smin, smax, sc.s_tiso().norm(), sc.s_siso().norm(), sc.t_tiso().norm(), sc.t_siso().norm()])
        })
        .collect::<Result<_>>()?;
    let col = |i: usize| pts.iter().map(|p| p[i]).collect::<Vec<_>>();
    Ok(SensitivitySweep {
        freq_hz: grid.hz(),
        smin: col(0),
        smax: col(1),
        s_tiso: col(2),
        s_siso: col(3),
        t_tiso: col(4),
        t_siso: col(5),
        compensators,
        has_siso_modes: design.nf() < design.ny(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSweep {
    pub freq_hz: Vec<f64>,
    pub su_s_max: Vec<f64>,
    pub su_f_max: Vec<f64>,
}

impl InputSweep {
    pub fn header() -> Vec<String> {
        ["freq_hz", "su_s_max_db", "su_f_max_db"].map(String::from).to_vec()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.freq_hz.len())
            .map(|i| vec![self.freq_hz[i], db(self.su_s_max[i]), db(self.su_f_max[i])])
            .collect()
    }
}

/// Largest singular values of the disturbance-to-input maps of both arrays.
pub fn input_sensitivity_sweep(design: &TwoArrayDesign, grid: &FrequencyGrid, realization: Realization) -> Result<InputSweep> {
    let model = LoopModel::two_array(design, design.compensators, realization)?;
    let pts: Vec<(f64, f64)> = grid
        .omega
        .par_iter()
        .map(|&w| {
            let p = model.point(w)?;
            let su = model.input_sensitivities(&p)?;
            Ok((spectral_norm(&su[0]), spectral_norm(&su[1])))
        })
        .collect::<Result<_>>()?;
    Ok(InputSweep {
        freq_hz: grid.hz(),
        su_s_max: pts.iter().map(|p| p.0).collect(),
        su_f_max: pts.iter().map(|p| p.1).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistVerdict {
    pub stable: bool,
    /// Net encirclements of the origin by `det(I + L)` beyond what the
    /// integrators require; zero for a stable loop.
    pub winding: i64,
    /// False when the loop gain was still large at the last frequency tried.
    pub conclusive: bool,
    pub omega_end: f64,
}

/// Log-spaced points per decade used for phase tracking, on top of the
/// caller's grid.
const TRACK_PER_DECADE: f64 = 200.0;

/// Winding-number test on `det(I + L(jω))` for loops with one integrator per
/// output and otherwise stable open-loop poles.
///
/// `det` returns `det(I + L(jω))` and `eig` the eigenvalues of `L(jω)`. Phase
/// is tracked over `omega` merged with a dense log grid, with bisection
/// whenever one step turns by more than π/4, then past the last point until
/// every eigenvalue is below one in magnitude, after which the phase can no
/// longer wrap.
pub fn nyquist_verdict(
    det: impl Fn(f64) -> Result<LogDet>,
    eig: impl Fn(f64) -> Result<Vec<Complex64>>,
    omega: &[f64],
) -> Result<NyquistVerdict> {
    let principal_sum = |eig: &[Complex64]| eig.iter().map(|l| (1.0 + l).arg()).sum::<f64>();
    let (w0, w_max) = (omega[0], *omega.last().unwrap());
    let mut track: Vec<f64> = omega.to_vec();
    let n_dense = ((w_max / w0).log10() * TRACK_PER_DECADE).ceil().max(1.0) as usize;
    track.extend((0..=n_dense).map(|i| w0 * (w_max / w0).powf(i as f64 / n_dense as f64)));
    track.sort_by(f64::total_cmp);
    track.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());

    let d0 = det(w0)?;
    // start on the branch the integrators fix: the sum of per-eigenvalue arguments
    let mut phase = {
        let target = principal_sum(&eig(w0)?);
        d0.phase + 2.0 * PI * ((target - d0.phase) / (2.0 * PI)).round()
    };
    let mut last_w = w0;
    let mut last_p = d0.phase;
    let mut step_to = |w: f64, phase: &mut f64| -> Result<()> {
        let mut stack = vec![w];
        while let Some(&target) = stack.last() {
            let d = det(target)?;
            let inc = wrap(d.phase - last_p);
            if inc.abs() > PI / 4.0 && (target - last_w) > 1e-12 * target && stack.len() < 60 {
                stack.push(0.5 * (last_w + target));
                continue;
            }
            *phase += inc;
            last_p = d.phase;
            last_w = target;
            stack.pop();
        }
        Ok(())
    };
    for &w in &track[1..] {
        step_to(w, &mut phase)?;
    }
    let mut e = eig(w_max)?;
    let mut conclusive = e.iter().all(|l| l.norm() < 1.0);
    let mut w = w_max;
    while !conclusive && w < 1e3 * w_max {
        w *= 1.02;
        step_to(w, &mut phase)?;
        e = eig(w)?;
        conclusive = e.iter().all(|l| l.norm() < 1.0);
    }
    let residual = principal_sum(&e);
    let winding = ((phase - residual) / (2.0 * PI)).round() as i64;
    Ok(NyquistVerdict {
        stable: winding == 0,
        winding,
        conclusive,
        omega_end: w,
    })
}

fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let e = m
        .clone()
        .schur()
        .eigenvalues()
        .ok_or(Error::NonFinite("open-loop eigenvalues"))?;
    Ok(e.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub freq_hz: Vec<f64>,
    pub det_l: Vec<LogDet>,
    pub det_l0: Vec<LogDet>,
    pub det_gamma: LogDet,
    /// `max_ω |det L / (det L₀ det Γ) − 1|`.
    pub proportionality_error: f64,
    /// `min_ω |det L(jω) + 1|`.
    pub min_distance_to_minus_one: f64,
    pub min_distance_hz: f64,
    /// Whether `Re(det L₀) > −0.5` held at every grid point.
    pub margin_hypothesis: bool,
    pub verdict: NyquistVerdict,
}

impl OpenLoopReport {
    pub fn header() -> Vec<String> {
        ["freq_hz", "det_l_re", "det_l_im", "det_l_ln_abs", "det_l_phase", "det_l0_ln_abs", "det_l0_phase"]
            .map(String::from)
            .to_vec()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.freq_hz.len())
            .map(|i| {
                let v = self.det_l[i].value();
                vec![
                    self.freq_hz[i],
                    v.re,
                    v.im,
                    self.det_l[i].ln_abs,
                    self.det_l[i].phase,
                    self.det_l0[i].ln_abs,
                    self.det_l0[i].phase,
                ]
            })
            .collect()
    }
}

fn loop_report(model: &LoopModel, grid: &FrequencyGrid) -> Result<OpenLoopReport> {
    let samples: Vec<(LogDet, LogDet)> = grid
        .omega
        .par_iter()
        .map(|&w| {
            if let Some(sc) = model.scalars(w)? {
                if sc.s_tiso().norm() < 1e-300 || sc.s_siso().norm() < 1e-300 {
                    return Err(Error::SensitivityZero { omega: w });
                }
            }
            let p = model.point(w)?;
            let l0 = model.open_loop0(&p)?;
            let l = l0.clone() * &model.gamma;
            Ok((LogDet::of(&l), LogDet::of(&l0)))
        })
        .collect::<Result<_>>()?;
    let mut err: f64 = 0.0;
    let mut dist = f64::INFINITY;
    let mut dist_w = grid.omega[0];
    let mut hyp = true;
    for (&w, (l, l0)) in grid.omega.iter().zip(&samples) {
        err = err.max(l.relative_error(l0.mul(model.det_gamma)));
        let d = if l.ln_abs > 700.0 { f64::INFINITY } else { (l.value() + 1.0).norm() };
        if d < dist {
            dist = d;
            dist_w = w;
        }
        if l0.ln_abs < 700.0 && l0.value().re <= -0.5 {
            hyp = false;
        }
    }
    let open_loop = |w: f64| model.point(w).and_then(|p| model.open_loop(&p));
    let verdict = nyquist_verdict(
        |w| Ok(LogDet::of(&(CMatrix::identity(model.ny, model.ny) + open_loop(w)?))),
        |w| eigenvalues(&open_loop(w)?),
        &grid.omega,
    )?;
    Ok(OpenLoopReport {
        freq_hz: grid.hz(),
        det_l: samples.iter().map(|s| s.0).collect(),
        det_l0: samples.iter().map(|s| s.1).collect(),
        det_gamma: model.det_gamma,
        proportionality_error: err,
        min_distance_to_minus_one: dist,
        min_distance_hz: dist_w / (2.0 * PI),
        margin_hypothesis: hyp,
        verdict,
    })
}

/// Open-loop determinant trace, the `det L = det L₀ det Γ` check, distance of
/// the Nyquist plot to −1 and a stability verdict.
pub fn open_loop_and_margin(design: &TwoArrayDesign, grid: &FrequencyGrid, realization: Realization) -> Result<OpenLoopReport> {
    let model = LoopModel::two_array(design, design.compensators, realization)?;
    loop_report(&model, grid)
}

pub fn single_array_open_loop(design: &SingleArrayDesign, grid: &FrequencyGrid, realization: Realization) -> Result<OpenLoopReport> {
    loop_report(&LoopModel::single_array(design, realization)?, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustMargin {
    pub delta_max: f64,
    pub argmin_hz: f64,
    pub freq_hz: Vec<f64>,
    /// `‖diag(g_s I, g_f I) M(jω)‖₂` per frequency.
    pub norm: Vec<f64>,
}

fn robust_margin(model: &LoopModel, grid: &FrequencyGrid) -> Result<RobustMargin> {
    let norm: Vec<f64> = grid
        .omega
        .par_iter()
        .map(|&w| Ok(spectral_norm(&model.weighted_m(&model.point(w)?)?)))
        .collect::<Result<_>>()?;
    let (k, worst) = norm
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (k, *v))
        .ok_or(Error::EmptySignal)?;
    Ok(RobustMargin {
        delta_max: 1.0 / worst,
        argmin_hz: grid.omega[k] / (2.0 * PI),
        freq_hz: grid.hz(),
        norm,
    })
}

/// Bound on `‖[Δ_s Δ_f]‖₂` below which stability is guaranteed.
pub fn robust_stability_margin(design: &TwoArrayDesign, grid: &FrequencyGrid, realization: Realization) -> Result<RobustMargin> {
    robust_margin(&LoopModel::two_array(design, design.compensators, realization)?, grid)
}

pub fn single_array_robust_margin(design: &SingleArrayDesign, grid: &FrequencyGrid, realization: Realization) -> Result<RobustMargin> {
    robust_margin(&LoopModel::single_array(design, realization)?, grid)
}

/// Largest singular value of the single-array sensitivity per frequency.
pub fn single_array_sensitivity(design: &SingleArrayDesign, grid: &FrequencyGrid, realization: Realization) -> Result<Vec<f64>> {
    let model = LoopModel::single_array(design, realization)?;
    grid.omega
        .par_iter()
        .map(|&w| Ok(spectral_norm(&model.sensitivity(&model.point(w)?))))
        .collect()
}

fn array_gains(y: &DVector<f64>, pair: &ResponsePair) -> Result<(f64, f64, DVector<f64>, DVector<f64>)> {
    if y.len() != pair.ny() {
        return Err(Error::DimensionMismatch(format!("y has {} entries, expected {}", y.len(), pair.ny())));
    }
    let ys = pair.rs.tr_mul(y);
    let yf = pair.rf.tr_mul(y);
    let (a, b) = (ys.norm_squared(), yf.norm_squared());
    // below this the ratio is rounding noise
    let floor = |r: &DMatrix<f64>| (1e-12 * y.norm() * r.norm()).powi(2).max(1e-300);
    if !(a > floor(&pair.rs)) {
        return Err(Error::DegenerateDirection("s"));
    }
    if !(b > floor(&pair.rf)) {
        return Err(Error::DegenerateDirection("f"));
    }
    Ok((a, b, &pair.rs * ys, &pair.rf * yf))
}

/// `½(‖yᵀR_s‖²/‖yᵀR_f‖² + ‖yᵀR_f‖²/‖yᵀR_s‖²)`.
pub fn gain_ratio(y: &DVector<f64>, pair: &ResponsePair) -> Result<f64> {
    let (a, b, _, _) = array_gains(y, pair)?;
    Ok(0.5 * (a / b + b / a))
}

pub fn gain_ratio_gradient(y: &DVector<f64>, pair: &ResponsePair) -> Result<DVector<f64>> {
    let (a, b, ga, gb) = array_gains(y, pair)?;
    // ∇a = 2 R_s R_sᵀ y, ∇b = 2 R_f R_fᵀ y
    Ok(ga * (1.0 / b - b / (a * a)) + gb * (1.0 / a - a / (b * b)))
}

/// Columns `y_i = (XXᵀ)⁻¹ x_i`, the stationary points of the gain ratio.
///
/// For square `X` this is `X⁻ᵀ`, solved directly so the conditioning is that
/// of `X` rather than `XXᵀ`, followed by one step of iterative refinement.
pub fn stationary_directions(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !x.is_square() {
        let xxt = x * x.transpose();
        return xxt.lu().solve(x).ok_or(Error::SingularSystem);
    }
    let xt = x.transpose();
    let lu = xt.clone().lu();
    let eye = DMatrix::<f64>::identity(x.nrows(), x.ncols());
    let mut y = lu.solve(&eye).ok_or(Error::SingularSystem)?;
    let r = &eye - &xt * &y;
    y += lu.solve(&r).ok_or(Error::SingularSystem)?;
    Ok(y)
}
