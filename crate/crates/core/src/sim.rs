//! Sampled closed-loop simulation of the IMC loop, synthetic response pairs,
//! disturbance generation and trace persistence.
//!
//! The actuator filters carry the whole loop delay (at least one sample), so
//! each sample is evaluated as: read the delayed actuator states, form the
//! plant and model outputs, compute the new inputs through the biproper IMC
//! filters, then push those inputs into the actuator filters.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{SingleArrayDesign, TwoArrayDesign};
use crate::error::{Error, Result};
use crate::io::content_hash;
use crate::numlin::{norm2, ResponsePair};
use crate::plant::{zoh_discretize, DiscreteFilter, FilterBank, TransferFunction};

pub const LATENCY_NOTE: &str =
    "entire loop delay lumped into the actuator filters; same-sample algebraic feedback through static gains";

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    // sign fix makes the distribution Haar
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormal real Fourier basis on a ring of `n` points, lowest spatial
/// frequency first.
pub fn ring_basis(n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, n);
    let nf = n as f64;
    let mut col = 0;
    out.column_mut(col).fill(1.0 / nf.sqrt());
    col += 1;
    let mut k = 1;
    while col < n {
        let w = 2.0 * PI * k as f64 / nf;
        if 2 * k == n {
            for t in 0..n {
                out[(t, col)] = (w * t as f64).cos() / nf.sqrt();
            }
            col += 1;
        } else {
            for t in 0..n {
                out[(t, col)] = (w * t as f64).cos() * (2.0 / nf).sqrt();
            }
            col += 1;
            if col < n {
                for t in 0..n {
                    out[(t, col)] = (w * t as f64).sin() * (2.0 / nf).sqrt();
                }
                col += 1;
            }
        }
        k += 1;
    }
    out
}

/// Synthetic response pair `R_s = X[diag(C, I) 0]U_sᵀ`, `R_f = X[S; 0]U_fᵀ`
/// with `X = F Σ Vᵀ` on a ring basis `F`, singular values decaying
/// geometrically with spatial frequency from 100 to `100/κ`, a random
/// orthogonal `V`, and generalised angles spread over `[15°, 75°]` (all 45°
/// when `κ = 1`).
pub fn synth_response_pair(ny: usize, ns: usize, nf: usize, target_kappa: f64, seed: u64) -> Result<ResponsePair> {
    if !(ns >= ny && ny >= nf && nf >= 1) {
        return Err(Error::InfeasibleDimensions(format!(
            "need n_s ≥ n_y ≥ n_f ≥ 1, got n_s={ns}, n_y={ny}, n_f={nf}"
        )));
    }
    if !(target_kappa >= 1.0 && target_kappa.is_finite()) {
        return Err(Error::Validation(format!("target condition number {target_kappa} must be ≥ 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 100.0;
    let sigma: Vec<f64> = (0..ny)
        .map(|i| {
            let t = if ny > 1 { i as f64 / (ny - 1) as f64 } else { 0.0 };
            scale * target_kappa.powf(-t)
        })
        .collect();
    let vt = random_orthogonal(ny, &mut rng).transpose();
    let x = ring_basis(ny) * DMatrix::from_diagonal(&DVector::from_vec(sigma)) * vt;

    let mut angles: Vec<f64> = (0..nf)
        .map(|i| {
            if target_kappa == 1.0 || nf == 1 {
                PI / 4.0
            } else {
                (15.0 + 60.0 * i as f64 / (nf - 1) as f64).to_radians()
            }
        })
        .collect();
    for i in (1..angles.len()).rev() {
        let j = rng.random_range(0..=i);
        angles.swap(i, j);
    }

    let us = random_orthogonal(ns, &mut rng);
    let uf = random_orthogonal(nf, &mut rng);
    let ds = DMatrix::from_fn(ny, ns, |i, j| match (i == j, i < nf) {
        (true, true) => angles[i].cos(),
        (true, false) => 1.0,
        _ => 0.0,
    });
    let df = DMatrix::from_fn(ny, nf, |i, j| if i == j { angles[i].sin() } else { 0.0 });
    ResponsePair::new(&x * ds * us.transpose(), &x * df * uf.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Enters at the actuators and reaches the outputs through `[R_s R_f]`.
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub freq_hz: f64,
    pub amplitude: f64,
    pub space: Space,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DisturbanceModel {
    #[serde(default)]
    pub resonances: Vec<Resonance>,
    /// Standard deviation of white output noise, per channel.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl DisturbanceModel {
    /// Girder-like default: input-space resonances at 0.2, 1, 20 and 120 Hz
    /// with amplitudes falling as `1/f`, scaled so the 1 Hz line has unit
    /// output size, plus white output noise at 1% of that.
    pub fn girder(pair: &ResponsePair, seed: u64) -> Self {
        let r = norm2(&pair.concat()).max(f64::MIN_POSITIVE);
        let resonances = [0.2, 1.0, 20.0, 120.0]
            .iter()
            .map(|&f| Resonance {
                freq_hz: f,
                amplitude: 1.0 / (f * r),
                space: Space::Input,
            })
            .collect();
        Self {
            resonances,
            noise_std: 0.01,
            offset: None,
            seed,
        }
    }

    pub fn validate(&self, ny: usize, fs_hz: f64) -> Result<()> {
        for r in &self.resonances {
            if !(r.amplitude >= 0.0 && r.amplitude.is_finite()) || !(r.freq_hz >= 0.0) {
                return Err(Error::Validation(format!("bad resonance {r:?}")));
            }
            if r.freq_hz >= fs_hz / 2.0 {
                return Err(Error::FrequencyAboveNyquist {
                    freq_hz: r.freq_hz,
                    nyquist_hz: fs_hz / 2.0,
                });
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Validation("noise level must be nonnegative".into()));
        }
        if let Some(o) = &self.offset {
            if o.len() != ny {
                return Err(Error::DimensionMismatch(format!("offset has {} entries, expected {ny}", o.len())));
            }
        }
        Ok(())
    }
}

/// `d_t = R d_{u,t} + d_{y,t}` sampled at `fs_hz`.
pub fn gen_disturbance(model: &DisturbanceModel, pair: &ResponsePair, n: usize, fs_hz: f64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    let ny = pair.ny();
    model.validate(ny, fs_hz)?;
    let r = pair.concat();
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut d = DMatrix::zeros(ny, n);
    for res in &model.resonances {
        let dim = match res.space {
            Space::Input => r.ncols(),
            Space::Output => ny,
        };
        let mut dir = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        dir /= dir.norm();
        let dir = match res.space {
            Space::Input => &r * dir,
            Space::Output => dir,
        };
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * res.freq_hz / fs_hz;
        for t in 0..n {
            let a = res.amplitude * (w * t as f64 + phase).sin();
            let mut col = d.column_mut(t);
            col.axpy(a, &dir, 1.0);
        }
    }
    if model.noise_std > 0.0 {
        for v in d.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += model.noise_std * z;
        }
    }
    if let Some(o) = &model.offset {
        for t in 0..n {
            for i in 0..ny {
                d[(i, t)] += o[i];
            }
        }
    }
    Ok(d)
}

/// Additive static model error on each array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    #[serde(with = "crate::io::matrix_serde")]
    pub delta_s: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub delta_f: DMatrix<f64>,
}

impl UncertaintySpec {
    pub fn zero(ny: usize, ns: usize, nf: usize) -> Self {
        Self {
            delta_s: DMatrix::zeros(ny, ns),
            delta_f: DMatrix::zeros(ny, nf),
        }
    }

    /// `‖[Δ_s Δ_f]‖₂`.
    pub fn norm(&self) -> f64 {
        let mut c = DMatrix::zeros(self.delta_s.nrows(), self.delta_s.ncols() + self.delta_f.ncols());
        c.columns_mut(0, self.delta_s.ncols()).copy_from(&self.delta_s);
        c.columns_mut(self.delta_s.ncols(), self.delta_f.ncols()).copy_from(&self.delta_f);
        if c.is_empty() {
            0.0
        } else {
            norm2(&c)
        }
    }

    fn check(&self, ny: usize, ns: usize, nf: usize) -> Result<()> {
        if self.delta_s.shape() != (ny, ns) || self.delta_f.shape() != (ny, nf) {
            return Err(Error::DimensionMismatch(format!(
                "uncertainty shapes {:?}/{:?}, expected ({ny}, {ns})/({ny}, {nf})",
                self.delta_s.shape(),
                self.delta_f.shape()
            )));
        }
        if self.delta_s.iter().chain(self.delta_f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("uncertainty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TraceMeta {
    pub design_hash: String,
    pub seed: Option<u64>,
    pub uncertainty_norm: f64,
    pub latency: String,
}

/// Sampled signals, one column per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    #[serde(with = "crate::io::matrix_serde")]
    pub y: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub u_s: DMatrix<f64>,
    /// Empty for single-array runs.
    #[serde(with = "crate::io::matrix_serde")]
    pub u_f: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    pub d: DMatrix<f64>,
    /// `y − ŷ`.
    #[serde(with = "crate::io::matrix_serde")]
    pub feedback: DMatrix<f64>,
    pub fs_hz: f64,
    pub meta: TraceMeta,
}

/// One actuator array as the simulator sees it.
struct Array {
    g: DiscreteFilter,
    q: DiscreteFilter,
    plant: DMatrix<f64>,
    model: DMatrix<f64>,
    /// applied to the measurement
    k: DMatrix<f64>,
    /// applied to the model output
    gk: DMatrix<f64>,
}

fn run(arrays: Vec<Array>, d: &DMatrix<f64>, fs_hz: f64, meta: TraceMeta) -> Result<SimTrace> {
    let (ny, n) = d.shape();
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("disturbance"));
    }
    let scale = d.amax();
    let limit = 1e9 * if scale > 0.0 { scale } else { 1.0 };
    let mut g_banks = Vec::new();
    let mut q_banks = Vec::new();
    for a in &arrays {
        if a.g.has_feedthrough() {
            return Err(Error::Validation("actuator filters need at least one sample of delay".into()));
        }
        g_banks.push(FilterBank::new(&a.g, a.plant.ncols()));
        q_banks.push(FilterBank::new(&a.q, a.plant.ncols()));
    }
    let mut inputs: Vec<DMatrix<f64>> = arrays.iter().map(|a| DMatrix::zeros(a.plant.ncols(), n)).collect();
    let mut y = DMatrix::zeros(ny, n);
    let mut feedback = DMatrix::zeros(ny, n);

    let mut v: Vec<DVector<f64>> = arrays.iter().map(|a| DVector::zeros(a.plant.ncols())).collect();
    let mut w: Vec<DVector<f64>> = v.clone();
    let mut u: Vec<DVector<f64>> = v.clone();
    let mut yt = DVector::zeros(ny);
    let mut yhat = DVector::zeros(ny);
    for t in 0..n {
        yt.copy_from(&d.column(t));
        yhat.fill(0.0);
        for (i, a) in arrays.iter().enumerate() {
            g_banks[i].peek(v[i].as_mut_slice());
            yt.gemv(1.0, &a.plant, &v[i], 1.0);
            yhat.gemv(1.0, &a.model, &v[i], 1.0);
        }
        let peak = yt.amax();
        if !peak.is_finite() || peak > limit {
            return Err(Error::Diverged { sample: t, magnitude: peak });
        }
        for (i, a) in arrays.iter().enumerate() {
            w[i].gemv(1.0, &a.k, &yt, 0.0);
            w[i].gemv(-1.0, &a.gk, &yhat, 1.0);
            q_banks[i].step(w[i].as_slice(), u[i].as_mut_slice());
            u[i].neg_mut();
            g_banks[i].commit(u[i].as_slice(), v[i].as_slice());
            inputs[i].set_column(t, &u[i]);
        }
        y.set_column(t, &yt);
        feedback.set_column(t, &(&yt - &yhat));
    }
    let mut inputs = inputs.into_iter();
    let u_s = inputs.next().expect("at least one array");
    let u_f = inputs.next().unwrap_or_else(|| DMatrix::zeros(0, n));
    Ok(SimTrace {
        y,
        u_s,
        u_f,
        d: d.clone(),
        feedback,
        fs_hz,
        meta,
    })
}

fn discretize_pair(g: &TransferFunction, q: &TransferFunction, fs_hz: f64) -> Result<(DiscreteFilter, DiscreteFilter)> {
    Ok((zoh_discretize(g, fs_hz)?, zoh_discretize(q, fs_hz)?))
}

/// Two-array IMC loop driven by the output disturbance `d` (n_y × N) at `fs_hz`.
/// The true plant is the design's nominal pair plus `uncertainty`.
pub fn simulate_two_array(
    design: &TwoArrayDesign,
    d: &DMatrix<f64>,
    uncertainty: Option<&UncertaintySpec>,
    fs_hz: f64,
    seed: Option<u64>,
) -> Result<SimTrace> {
    let (ny, ns, nf) = (design.ny(), design.ns(), design.nf());
    if d.nrows() != ny {
        return Err(Error::DimensionMismatch(format!("disturbance has {} rows, expected {ny}", d.nrows())));
    }
    let zero = UncertaintySpec::zero(ny, ns, nf);
    let unc = uncertainty.unwrap_or(&zero);
    unc.check(ny, ns, nf)?;
    let f = &design.filters;
    let (gs, qs) = discretize_pair(&f.g_s(), &f.q_s, fs_hz)?;
    let (gf, qf) = discretize_pair(&f.g_f(), &f.q_f, fs_hz)?;
    let (rs, rf) = (design.r_s(), design.r_f());
    let meta = TraceMeta {
        design_hash: content_hash(design)?,
        seed,
        uncertainty_norm: unc.norm(),
        latency: LATENCY_NOTE.into(),
    };
    let arrays = vec![
        Array {
            g: gs,
            q: qs,
            plant: &rs + &unc.delta_s,
            model: rs,
            k: design.k_s.clone(),
            gk: design.g_s.clone(),
        },
        Array {
            g: gf,
            q: qf,
            plant: &rf + &unc.delta_f,
            model: rf,
            k: design.k_f.clone(),
            gk: design.g_f.clone(),
        },
    ];
    run(arrays, d, fs_hz, meta)
}

/// Single-array IMC loop; `uncertainty`, if given, is n_y × n_u.
pub fn simulate_single_array(
    design: &SingleArrayDesign,
    d: &DMatrix<f64>,
    uncertainty: Option<&DMatrix<f64>>,
    fs_hz: f64,
    seed: Option<u64>,
) -> Result<SimTrace> {
    let (ny, nu) = (design.ny(), design.nu());
    if d.nrows() != ny {
        return Err(Error::DimensionMismatch(format!("disturbance has {} rows, expected {ny}", d.nrows())));
    }
    let delta = uncertainty.cloned().unwrap_or_else(|| DMatrix::zeros(ny, nu));
    if delta.shape() != (ny, nu) {
        return Err(Error::DimensionMismatch("uncertainty must be n_y × n_u".into()));
    }
    let (g, q) = discretize_pair(&design.g(), &design.q(), fs_hz)?;
    let meta = TraceMeta {
        design_hash: content_hash(design)?,
        seed,
        uncertainty_norm: if delta.is_empty() { 0.0 } else { norm2(&delta) },
        latency: LATENCY_NOTE.into(),
    };
    let arrays = vec![Array {
        g,
        q,
        plant: &design.r + &delta,
        model: design.r.clone(),
        k: design.k.clone(),
        gk: design.model_inverse(),
    }];
    run(arrays, d, fs_hz, meta)
}

/// Complex amplitude `A e^{jφ}` of `A cos(ωt + φ)` in `x`, which must span a
/// whole number of periods.
pub fn phasor(x: &[f64], fs_hz: f64, freq_hz: f64) -> Complex64 {
    let w = 2.0 * PI * freq_hz / fs_hz;
    let acc: Complex64 = x
        .iter()
        .enumerate()
        .map(|(t, &v)| Complex64::from_polar(v, -w * t as f64))
        .sum();
    acc * (2.0 / x.len() as f64)
}

const MAGIC: &[u8; 4] = b"CDT1";

impl SimTrace {
    pub fn len(&self) -> usize {
        self.y.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.y.ncols() == 0
    }

    fn blocks(&self) -> [(&str, &DMatrix<f64>); 5] {
        [
            ("y", &self.y),
            ("u_s", &self.u_s),
            ("u_f", &self.u_f),
            ("d", &self.d),
            ("e", &self.feedback),
        ]
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["time_s".to_string()];
        for (name, m) in self.blocks() {
            h.extend((0..m.nrows()).map(|i| format!("{name}_{i}")));
        }
        h
    }

    /// One row per sample; a `tag` becomes a leading `# tag` line.
    pub fn to_csv(&self, tag: Option<&str>) -> String {
        use std::fmt::Write as _;
        let mut s = tag.map(|t| format!("# {t}\n")).unwrap_or_default();
        s.push_str(&self.csv_header().join(","));
        s.push('\n');
        for t in 0..self.len() {
            let _ = write!(s, "{}", t as f64 / self.fs_hz);
            for (_, m) in self.blocks() {
                for i in 0..m.nrows() {
                    let _ = write!(s, ",{}", m[(i, t)]);
                }
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`SimTrace::to_csv`]; metadata is not stored in CSV.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or(Error::EmptySignal)?.split(',').collect();
        let count = |p: &str| header.iter().filter(|h| h.strip_prefix(p).is_some_and(|r| r.parse::<usize>().is_ok())).count();
        let dims = [count("y_"), count("u_s_"), count("u_f_"), count("d_"), count("e_")];
        if header.first() != Some(&"time_s") || 1 + dims.iter().sum::<usize>() != header.len() {
            return Err(Error::Parse("unrecognised trace header".into()));
        }
        let rows: Vec<Vec<f64>> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("{v}: {e}"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(Error::Parse("ragged trace rows".into()));
        }
        let fs_hz = if n > 1 { 1.0 / rows[1][0] } else { 1.0 };
        let mut mats = Vec::new();
        let mut c0 = 1;
        for &k in &dims {
            mats.push(DMatrix::from_fn(k, n, |i, t| rows[t][c0 + i]));
            c0 += k;
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("five blocks");
        Ok(Self {
            y: next(),
            u_s: next(),
            u_f: next(),
            d: next(),
            feedback: next(),
            fs_hz,
            meta: TraceMeta::default(),
        })
    }

    /// `CDT1`, then u64 `n_y, n_s, n_f, N`, f64 `f_s`, then the blocks
    /// `y, u_s, u_f, d, e` each row-major, all little-endian.
    pub fn write_bin(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.y.nrows(), self.u_s.nrows(), self.u_f.nrows(), self.len()] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.fs_hz.to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.len() * (3 * self.y.nrows() + self.u_s.nrows() + self.u_f.nrows()));
        for (_, m) in self.blocks() {
            for i in 0..m.nrows() {
                for t in 0..m.ncols() {
                    buf.extend_from_slice(&m[(i, t)].to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_bin(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a CDT1 trace".into()));
        }
        let mut word = [0u8; 8];
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            r.read_exact(&mut word)?;
            *d = usize::try_from(u64::from_le_bytes(word)).map_err(|_| Error::Parse("dimension overflow".into()))?;
        }
        r.read_exact(&mut word)?;
        let fs_hz = f64::from_le_bytes(word);
        let [ny, ns, nf, n] = dims;
        let mut read_block = |rows: usize| -> Result<DMatrix<f64>> {
            let mut raw = vec![0u8; 8 * rows * n];
            r.read_exact(&mut raw)?;
            let vals: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            Ok(DMatrix::from_row_slice(rows, n, &vals))
        };
        Ok(Self {
            y: read_block(ny)?,
            u_s: read_block(ns)?,
            u_f: read_block(nf)?,
            d: read_block(ny)?,
            feedback: read_block(ny)?,
            fs_hz,
            meta: TraceMeta::default(),
        })
    }

    pub fn save(&self, path: &Path, format: TraceFormat) -> Result<()> {
        match format {
            TraceFormat::Csv => {
                let tag = format!("design_hash={}", self.meta.design_hash);
                std::fs::write(path, self.to_csv(Some(&tag)))?
            }
            TraceFormat::Bin => self.write_bin(std::io::BufWriter::new(std::fs::File::create(path)?))?,
            TraceFormat::Json => crate::io::write_json(path, self)?,
        }
        Ok(())
    }

    /// Format chosen from the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Self::from_csv(&std::fs::read_to_string(path)?),
            Some("json") => crate::io::read_json(path),
            _ => Self::read_bin(std::io::BufReader::new(std::fs::File::open(path)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
    Json,
    Bin,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Json => "json",
            TraceFormat::Bin => "bin",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{LoopModel, Realization};
    use crate::design::{compose_design, midranging_filters, single_array_design, Compensators, WeightMode};
    use crate::numlin::{condition_number, gsvd, numerical_rank};

    const FS: f64 = 10_000.0;
    const A: f64 = 2.0 * PI * 700.0;
    const TAU: f64 = 900e-6;

    fn design(ny: usize, ns: usize, nf: usize, kappa: f64, output: bool) -> TwoArrayDesign {
        let pair = synth_response_pair(ny, ns, nf, kappa, 3).unwrap();
        let fact = gsvd(&pair).unwrap();
        let f = midranging_filters(A, A, TAU, 2.0 * PI * 176.0, 2.0 * PI * 50.0).unwrap();
        compose_design(&fact, &f, 1.0, &WeightMode::Identity, Compensators { input: true, output }).unwrap()
    }

    fn sinusoid(dir: &DVector<f64>, f_hz: f64, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(dir.len(), n, |i, t| dir[i] * (2.0 * PI * f_hz * t as f64 / FS).cos())
    }

    #[test]
    fn ring_basis_is_orthonormal() {
        for n in [1, 2, 5, 8] {
            let f = ring_basis(n);
            assert!((f.transpose() * &f - DMatrix::identity(n, n)).norm() < 1e-12);
        }
    }

    #[test]
    fn synth_square_unit_kappa() {
        let p = synth_response_pair(2, 2, 2, 1.0, 0).unwrap();
        for r in [&p.rs, &p.rf] {
            let g = r.transpose() * r;
            let c = g[(0, 0)];
            assert!((g - DMatrix::identity(2, 2) * c).norm() < 1e-10 * c);
        }
        let k = condition_number(&p.concat()).unwrap();
        assert!((1.0..=2.0).contains(&k));
    }

    #[test]
    fn synth_meets_rank_and_kappa() {
        let p = synth_response_pair(24, 30, 16, 1000.0, 9).unwrap();
        assert_eq!(numerical_rank(&p.rs), 24);
        assert_eq!(numerical_rank(&p.rf), 16);
        let k = condition_number(&p.concat()).unwrap();
        assert!((500.0..=2000.0).contains(&k), "{k}");
        let again = synth_response_pair(24, 30, 16, 1000.0, 9).unwrap();
        assert_eq!(p, again);
        assert!(synth_response_pair(4, 3, 2, 1.0, 0).is_err());
    }

    #[test]
    fn disturbance_basics() {
        let p = synth_response_pair(4, 4, 2, 10.0, 1).unwrap();
        let z = gen_disturbance(&DisturbanceModel::default(), &p, 10, FS).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        let m = DisturbanceModel {
            offset: Some(vec![1.0, 2.0, 3.0, 4.0]),
            ..Default::default()
        };
        let d = gen_disturbance(&m, &p, 5, FS).unwrap();
        for t in 0..5 {
            assert_eq!(d[(2, t)], 3.0);
        }
        let bad = DisturbanceModel {
            resonances: vec![Resonance {
                freq_hz: 6000.0,
                amplitude: 1.0,
                space: Space::Output,
            }],
            ..Default::default()
        };
        assert!(matches!(gen_disturbance(&bad, &p, 5, FS), Err(Error::FrequencyAboveNyquist { .. })));
        let g = DisturbanceModel::girder(&p, 4);
        assert_eq!(gen_disturbance(&g, &p, 100, FS).unwrap(), gen_disturbance(&g, &p, 100, FS).unwrap());
    }

    #[test]
    fn output_sinusoid_has_the_closed_form_asd() {
        let p = synth_response_pair(3, 3, 2, 10.0, 1).unwrap();
        let n = 1000;
        let amp = 2.5;
        let m = DisturbanceModel {
            resonances: vec![Resonance {
                freq_hz: 50.0 * FS / n as f64,
                amplitude: amp,
                space: Space::Output,
            }],
            ..Default::default()
        };
        let d = gen_disturbance(&m, &p, n, FS).unwrap();
        let s = crate::spectral::asd(&d, FS).unwrap();
        // channel amplitudes are amp·|dir_i| with ‖dir‖ = 1
        let total: f64 = (0..3).map(|i| s.asd[(i, 50)].powi(2)).sum::<f64>();
        let expect = (2.0 / (FS * n as f64)) * (amp * n as f64 / 2.0).powi(2);
        assert!((total - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn zero_disturbance_zero_trace() {
        let dz = design(4, 5, 2, 50.0, true);
        let tr = simulate_two_array(&dz, &DMatrix::zeros(4, 200), None, FS, None).unwrap();
        assert!(tr.y.iter().chain(tr.u_s.iter()).chain(tr.u_f.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn step_settles() {
        let dz = design(4, 5, 2, 50.0, false);
        let n = 10_000;
        let d = DMatrix::from_fn(4, n, |i, _| [1.0, -0.5, 0.25, 2.0][i]);
        let tr = simulate_two_array(&dz, &d, None, FS, None).unwrap();
        let tail = tr.y.column(n - 1).amax();
        assert!(tail < 1e-6 * 2.0, "{tail}");
    }

    #[test]
    fn feedback_equals_disturbance_without_model_error() {
        let dz = design(4, 5, 2, 50.0, true);
        let p = ResponsePair::new(dz.r_s(), dz.r_f()).unwrap();
        let d = gen_disturbance(&DisturbanceModel::girder(&p, 2), &p, 2000, FS).unwrap();
        let tr = simulate_two_array(&dz, &d, None, FS, Some(2)).unwrap();
        let err = (&tr.feedback - &d).amax();
        assert!(err <= 1e-9 * d.amax(), "{err}");
    }

    #[test]
    fn sinusoid_matches_discrete_frequency_response() {
        let dz = design(4, 5, 2, 20.0, false);
        let model = LoopModel::two_array(&dz, dz.compensators, Realization::Discrete { fs_hz: FS }).unwrap();
        let dir = DVector::from_vec(vec![0.3, -0.8, 0.5, 0.1]);
        let f_hz = 5.0;
        let n = 6000;
        let tr = simulate_two_array(&dz, &sinusoid(&dir, f_hz, n), None, FS, None).unwrap();
        let p = model.point(2.0 * PI * f_hz).unwrap();
        let expect = model.sensitivity(&p) * dir.map(|v| Complex64::new(v, 0.0));
        let window = 2000; // ten periods
        for i in 0..4 {
            let row: Vec<f64> = (n - window..n).map(|t| tr.y[(i, t)]).collect();
            let got = phasor(&row, FS, f_hz) * Complex64::from_polar(1.0, -2.0 * PI * f_hz * (n - window) as f64 / FS);
            let e = expect[i];
            assert!((got.norm() / e.norm() - 1.0).abs() < 0.01, "ch {i}: {got} vs {e}");
            assert!((got.arg() - e.arg()).abs().to_degrees() < 1.0);
        }
    }

    #[test]
    fn linearity_and_determinism() {
        let dz = design(4, 5, 2, 50.0, true);
        let p = ResponsePair::new(dz.r_s(), dz.r_f()).unwrap();
        let d1 = gen_disturbance(&DisturbanceModel::girder(&p, 1), &p, 1500, FS).unwrap();
        let d2 = DMatrix::from_fn(4, 1500, |i, t| ((i + 1) as f64 * t as f64 * 0.01).sin());
        let unc = UncertaintySpec {
            delta_s: DMatrix::from_fn(4, 5, |i, j| 0.01 * ((i * 5 + j) as f64).sin()),
            delta_f: DMatrix::from_fn(4, 2, |i, j| 0.01 * ((i + j) as f64).cos()),
        };
        let a = simulate_two_array(&dz, &d1, Some(&unc), FS, None).unwrap();
        let b = simulate_two_array(&dz, &d2, Some(&unc), FS, None).unwrap();
        let c = simulate_two_array(&dz, &(&d1 + &d2), Some(&unc), FS, None).unwrap();
        let sum = &a.y + &b.y;
        assert!((&c.y - &sum).amax() <= 1e-9 * sum.amax());
        let again = simulate_two_array(&dz, &d1, Some(&unc), FS, None).unwrap();
        assert!(a.y.iter().zip(again.y.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.meta.uncertainty_norm > 0.0);
    }

    #[test]
    fn large_model_error_diverges() {
        let dz = design(2, 2, 1, 2.0, false);
        let unc = UncertaintySpec {
            delta_s: -dz.r_s() * 3.0,
            delta_f: -dz.r_f() * 3.0,
        };
        let d = DMatrix::from_element(2, 20_000, 1.0);
        assert!(matches!(
            simulate_two_array(&dz, &d, Some(&unc), FS, None),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn single_array_tracks_mode_formula() {
        let pair = synth_response_pair(3, 3, 3, 5.0, 2).unwrap();
        let sd = single_array_design(&pair.rs, 2.0 * PI * 50.0, 0.0, A, TAU).unwrap();
        let n = 8000;
        let step = DMatrix::from_element(3, n, 1.0);
        let tr = simulate_single_array(&sd, &step, None, FS, None).unwrap();
        assert!(tr.y.column(n - 1).amax() < 1e-6);
        assert_eq!(tr.u_f.nrows(), 0);

        let f_hz = 20.0;
        let dir = sd.u.column(0).into_owned();
        let tr = simulate_single_array(&sd, &sinusoid(&dir, f_hz, n), None, FS, None).unwrap();
        let t_expect = sd.mode_complementary_sensitivity(0, 2.0 * PI * f_hz);
        let window = 4000;
        let shift = Complex64::from_polar(1.0, -2.0 * PI * f_hz * (n - window) as f64 / FS);
        let proj: Vec<f64> = (n - window..n).map(|t| dir.dot(&(tr.d.column(t) - tr.y.column(t)))).collect();
        let t_got = phasor(&proj, FS, f_hz) * shift;
        assert!((t_got.norm() / t_expect.norm() - 1.0).abs() < 0.01, "{t_got} vs {t_expect}");
    }

    #[test]
    fn trace_round_trips() {
        let dz = design(3, 3, 2, 10.0, true);
        let d = DMatrix::from_fn(3, 64, |i, t| (i as f64 + 1.0) * (t as f64 * 0.37).sin() / 3.0);
        let tr = simulate_two_array(&dz, &d, None, FS, Some(1)).unwrap();
        let mut buf = Vec::new();
        tr.write_bin(&mut buf).unwrap();
        let back = SimTrace::read_bin(buf.as_slice()).unwrap();
        assert_eq!(back.y, tr.y);
        assert_eq!(back.u_f, tr.u_f);
        assert_eq!(back.feedback, tr.feedback);
        assert_eq!(back.fs_hz, tr.fs_hz);
        let csv = SimTrace::from_csv(&tr.to_csv(Some("spec_hash=0"))).unwrap();
        assert_eq!(csv.y, tr.y);
        assert_eq!(csv.u_s, tr.u_s);
        assert_eq!(csv.d, tr.d);
        assert!(SimTrace::read_bin(&b"XXXX"[..]).is_err());
    }
}
