//! Scalar actuator dynamics: continuous transfer functions with pure delay,
//! their zero-order-hold equivalents, and causal filtering.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything that can be evaluated on the imaginary axis (or the unit circle).
pub trait FrequencyResponse {
    fn response(&self, omega: f64) -> Result<Complex64>;
}

/// Evaluates a polynomial with descending real coefficients at a complex point.
pub fn polyval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

/// Product of two polynomials with descending coefficients.
pub fn polymul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn trim_leading_zeros(p: &[f64]) -> Vec<f64> {
    let first = p.iter().position(|&c| c != 0.0).unwrap_or(p.len().saturating_sub(1));
    let t = p[first.min(p.len())..].to_vec();
    if t.is_empty() {
        vec![0.0]
    } else {
        t
    }
}

/// `N(s)/D(s) · e^{-sτ}` with descending coefficients and a monic denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    #[serde(rename = "delay_s")]
    pub delay: f64,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>, delay: f64) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::Validation("empty polynomial".into()));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) || !delay.is_finite() || delay < 0.0 {
            return Err(Error::Validation("coefficients and delay must be finite, delay nonnegative".into()));
        }
        let num = trim_leading_zeros(&num);
        let den = trim_leading_zeros(&den);
        if den[0] == 0.0 {
            return Err(Error::Validation("zero denominator".into()));
        }
        let zero_num = num.iter().all(|&c| c == 0.0);
        if !zero_num && num.len() > den.len() {
            return Err(Error::ImproperSystem);
        }
        let lead = den[0];
        Ok(Self {
            num: if zero_num { vec![0.0] } else { num.iter().map(|c| c / lead).collect() },
            den: den.iter().map(|c| c / lead).collect(),
            delay,
        })
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![1.0],
            delay: 0.0,
        }
    }

    /// `a/(s + a) · e^{-sτ}`, the unity-DC-gain first-order lag.
    pub fn first_order_lag(a: f64, delay: f64) -> Result<Self> {
        Self::new(vec![a], vec![1.0, a], delay)
    }

    pub fn pure_delay(delay: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![1.0], delay)
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|&c| c == 0.0)
    }

    pub fn order(&self) -> usize {
        self.den.len() - 1
    }

    /// Rational part evaluated at an arbitrary complex point, delay included.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let d = polyval(&self.den, s);
        if d.norm() < 1e-300 {
            return Err(Error::PoleOnGrid { omega: s.im });
        }
        Ok(polyval(&self.num, s) / d * (-s * self.delay).exp())
    }

    /// `N(0)/D(0)`, or `None` for a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        let d = *self.den.last().unwrap();
        (d != 0.0).then(|| self.num.last().unwrap() / d)
    }

    pub fn without_delay(&self) -> Self {
        Self {
            delay: 0.0,
            ..self.clone()
        }
    }

    /// Controller-form state-space realisation of the rational part.
    pub fn state_space(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, f64) {
        let n = self.order();
        let mut num = vec![0.0; self.den.len() - self.num.len()];
        num.extend_from_slice(&self.num);
        let d = num[0];
        // strictly proper remainder N - d·D, degree < n
        let rem: Vec<f64> = num.iter().zip(&self.den).map(|(a, b)| a - d * b).skip(1).collect();
        let mut a = DMatrix::zeros(n, n);
        for j in 0..n {
            a[(0, j)] = -self.den[j + 1];
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let mut b = DMatrix::zeros(n, 1);
        if n > 0 {
            b[(0, 0)] = 1.0;
        }
        let c = DMatrix::from_row_slice(1, n, &rem);
        (a, b, c, d)
    }
}

impl FrequencyResponse for TransferFunction {
    fn response(&self, omega: f64) -> Result<Complex64> {
        if !omega.is_finite() {
            return Err(Error::Validation("omega must be finite".into()));
        }
        self.eval(Complex64::new(0.0, omega))
    }
}

/// `H(z) = z^{-D} · Σ b_k z^{-k} / Σ a_k z^{-k}` at sample rate `fs_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFilter {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub delay_samples: usize,
    pub fs_hz: f64,
}

/// Rounds `delay·fs` to an integer, rejecting fractional sample delays.
pub fn delay_in_samples(delay: f64, fs_hz: f64) -> Result<usize> {
    let raw = delay * fs_hz;
    let n = raw.round();
    if (raw - n).abs() > 1e-9 || n < 0.0 {
        return Err(Error::NonIntegerDelay { delay_s: delay, fs_hz });
    }
    Ok(n as usize)
}

impl DiscreteFilter {
    pub fn new(num: Vec<f64>, den: Vec<f64>, delay_samples: usize, fs_hz: f64) -> Result<Self> {
        if num.is_empty() || den.is_empty() || den[0] == 0.0 {
            return Err(Error::Validation("denominator constant term must be nonzero".into()));
        }
        if !(fs_hz > 0.0) {
            return Err(Error::Validation("sample rate must be positive".into()));
        }
        Ok(Self {
            num,
            den,
            delay_samples,
            fs_hz,
        })
    }

    pub fn with_delay_seconds(num: Vec<f64>, den: Vec<f64>, delay_s: f64, fs_hz: f64) -> Result<Self> {
        let d = delay_in_samples(delay_s, fs_hz)?;
        Self::new(num, den, d, fs_hz)
    }

    pub fn identity(fs_hz: f64) -> Self {
        Self {
            num: vec![1.0],
            den: vec![1.0],
            delay_samples: 0,
            fs_hz,
        }
    }

    /// True when the current input reaches the current output.
    pub fn has_feedthrough(&self) -> bool {
        self.delay_samples == 0 && self.num.first().is_some_and(|&b| b != 0.0)
    }

    /// `H(1)`.
    pub fn dc_gain(&self) -> f64 {
        self.num.iter().sum::<f64>() / self.den.iter().sum::<f64>()
    }

    /// Causal direct-form recursion from zero initial conditions.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut bank = FilterBank::new(self, 1);
        let mut out = vec![0.0; input.len()];
        for (x, y) in input.iter().zip(out.iter_mut()) {
            let mut o = [0.0];
            bank.step(std::slice::from_ref(x), &mut o);
            *y = o[0];
        }
        out
    }
}

impl FrequencyResponse for DiscreteFilter {
    fn response(&self, omega: f64) -> Result<Complex64> {
        if !omega.is_finite() {
            return Err(Error::Validation("omega must be finite".into()));
        }
        let zinv = Complex64::from_polar(1.0, -omega / self.fs_hz);
        let ascending = |c: &[f64]| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &v| acc * zinv + v);
        let d = ascending(&self.den);
        if d.norm() < 1e-300 {
            return Err(Error::PoleOnGrid { omega });
        }
        Ok(ascending(&self.num) / d * zinv.powu(self.delay_samples as u32))
    }
}

/// Characteristic polynomial (descending, monic) via Faddeev-LeVerrier.
fn charpoly(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        let am = m * &mk;
        let c = -am.trace() / k as f64;
        coeffs.push(c);
        mk = am + DMatrix::<f64>::identity(n, n) * c;
    }
    coeffs
}

/// Exact zero-order-hold equivalent of `tf` at `fs_hz`; the delay becomes an
/// integer number of samples.
pub fn zoh_discretize(tf: &TransferFunction, fs_hz: f64) -> Result<DiscreteFilter> {
    if tf.num.len() > tf.den.len() && !tf.is_zero() {
        return Err(Error::ImproperSystem);
    }
    if !(fs_hz > 0.0) {
        return Err(Error::Validation("sample rate must be positive".into()));
    }
    let delay = delay_in_samples(tf.delay, fs_hz)?;
    let n = tf.order();
    if tf.is_zero() {
        return DiscreteFilter::new(vec![0.0], vec![1.0], delay, fs_hz);
    }
    if n == 0 {
        return DiscreteFilter::new(vec![tf.num[0]], vec![1.0], delay, fs_hz);
    }
    let t = 1.0 / fs_hz;
    let (a, b, c, d) = tf.state_space();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(&a * t));
    aug.view_mut((0, n), (n, 1)).copy_from(&(&b * t));
    let e = aug.exp();
    let phi = e.view((0, 0), (n, n)).into_owned();
    let gamma = e.view((0, n), (n, 1)).into_owned();

    let p_phi = charpoly(&phi);
    let p_cl = charpoly(&(&phi - &gamma * &c));
    // C adj(zI-Φ) Γ = det(zI-Φ+ΓC) - det(zI-Φ)
    let num: Vec<f64> = p_cl.iter().zip(&p_phi).map(|(x, y)| x - y + d * y).collect();
    DiscreteFilter::new(num, p_phi, delay, fs_hz)
}

/// Multi-channel streaming filter sharing one set of coefficients.
///
/// Each channel keeps its own input and output history, so a bank replaces
/// `channels` independent scalar filters in a simulation loop.
#[derive(Debug, Clone)]
pub struct FilterBank {
    b: Vec<f64>,
    a: Vec<f64>,
    delay: usize,
    channels: usize,
    xlen: usize,
    ylen: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    head: usize,
}

impl FilterBank {
    pub fn new(filter: &DiscreteFilter, channels: usize) -> Self {
        let a0 = filter.den[0];
        let b: Vec<f64> = filter.num.iter().map(|v| v / a0).collect();
        let a: Vec<f64> = filter.den.iter().map(|v| v / a0).collect();
        let xlen = filter.delay_samples + b.len();
        let ylen = a.len().max(1);
        Self {
            delay: filter.delay_samples,
            channels,
            xlen,
            ylen,
            x: vec![0.0; channels * xlen],
            y: vec![0.0; channels * ylen],
            head: 0,
            b,
            a,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn has_feedthrough(&self) -> bool {
        self.delay == 0 && self.b.first().is_some_and(|&v| v != 0.0)
    }

    // `head` counts committed samples; sample t lives at t % len
    #[inline]
    fn slot(&self, lag: usize, len: usize) -> usize {
        (self.head + len - lag) % len
    }

    fn output(&self, input: Option<&[f64]>, out: &mut [f64]) {
        for ch in 0..self.channels {
            let xs = &self.x[ch * self.xlen..(ch + 1) * self.xlen];
            let ys = &self.y[ch * self.ylen..(ch + 1) * self.ylen];
            let mut acc = 0.0;
            for (k, &bk) in self.b.iter().enumerate() {
                let lag = self.delay + k;
                if bk == 0.0 {
                    continue;
                }
                let xv = if lag == 0 {
                    input.map_or(0.0, |i| i[ch])
                } else {
                    xs[self.slot(lag, self.xlen)]
                };
                acc += bk * xv;
            }
            for (k, &ak) in self.a.iter().enumerate().skip(1) {
                acc -= ak * ys[self.slot(k, self.ylen)];
            }
            out[ch] = acc;
        }
    }

    /// Output for the current sample when the current input cannot reach it.
    pub fn peek(&self, out: &mut [f64]) {
        debug_assert!(!self.has_feedthrough());
        self.output(None, out);
    }

    /// Stores the current sample's input and output and advances time.
    pub fn commit(&mut self, input: &[f64], output: &[f64]) {
        let (xl, yl) = (self.xlen, self.ylen);
        let (xi, yi) = (self.head % xl, self.head % yl);
        for ch in 0..self.channels {
            self.x[ch * xl + xi] = input[ch];
            self.y[ch * yl + yi] = output[ch];
        }
        self.head += 1;
    }

    pub fn step(&mut self, input: &[f64], out: &mut [f64]) {
        self.output(Some(input), out);
        self.commit(input, out);
    }
}
