//! Command-line pipeline: `gen → factor → design → analyze → simulate →
//! spectrum → report`, with every stage reading its predecessors from the
//! output directory when their spec hash matches and recomputing otherwise.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{debug, info};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::analysis::{
    input_sensitivity_sweep, modal_peaks, open_loop_and_margin, output_sensitivity_sweep, robust_stability_margin,
    FrequencyGrid, Realization,
};
use crate::design::{closed_loop_poles, compose_design, midranging_filters, Compensators, TwoArrayDesign, WeightMode};
use crate::error::{Error, Result};
use crate::io::{content_hash, matrix_to_csv_tagged, read_json, read_matrix, write_json, write_table_csv, MatrixJson};
use crate::numlin::{condition_number, gsvd, pseudo_inverse, singular_values, GsvdFactorization, ResponsePair};
use crate::sim::{gen_disturbance, simulate_two_array, synth_response_pair, DisturbanceModel, SimTrace, TraceFormat, UncertaintySpec};
use crate::spectral::{welch_asd, Window};

/// Angular frequency in rad/s, written in files as `"<value> Hz"` or
/// `"<value> rad/s"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Freq(pub f64);

impl Freq {
    pub fn hz(v: f64) -> Self {
        Freq(2.0 * PI * v)
    }
    pub fn rad_s(self) -> f64 {
        self.0
    }
    pub fn as_hz(self) -> f64 {
        self.0 / (2.0 * PI)
    }
}

impl fmt::Display for Freq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rad/s", self.0)
    }
}

impl std::str::FromStr for Freq {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let (num, scale) = if let Some(v) = t.strip_suffix("rad/s") {
            (v, 1.0)
        } else if let Some(v) = t.strip_suffix("Hz") {
            (v, 2.0 * PI)
        } else {
            return Err(Error::Validation(format!("frequency '{s}' needs a 'Hz' or 'rad/s' suffix")));
        };
        let v: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Validation(format!("frequency '{s}' is not a number")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Validation(format!("frequency '{s}' must be finite and nonnegative")));
        }
        Ok(Freq(v * scale))
    }
}

impl Serialize for Freq {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Freq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairFiles {
    pub rs: PathBuf,
    pub rf: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantSpec {
    pub n_y: usize,
    pub n_s: usize,
    pub n_f: usize,
    pub target_kappa: f64,
    pub seed: u64,
    pub a_s: Freq,
    pub a_f: Freq,
    pub tau_d_s: f64,
    pub fs_hz: f64,
    /// Measured matrices to use instead of a synthetic pair.
    pub pair: Option<PairFiles>,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            n_y: 96,
            n_s: 96,
            n_f: 64,
            target_kappa: 1000.0,
            seed: 1,
            a_s: Freq::hz(700.0),
            a_f: Freq::hz(700.0),
            tau_d_s: 900e-6,
            fs_hz: 10_000.0,
            pair: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignSpec {
    pub lambda_tiso: Freq,
    pub lambda_siso: Freq,
    pub mu: f64,
    pub weight: WeightMode,
    pub compensators: Compensators,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            lambda_tiso: Freq::hz(176.0),
            lambda_siso: Freq::hz(50.0),
            mu: 1.0,
            weight: WeightMode::Identity,
            compensators: Compensators::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    None,
    /// Default resonance set; the seed falls back to the plant seed.
    Girder { seed: Option<u64> },
    Custom(DisturbanceModel),
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        DisturbanceSpec::Girder { seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintySection {
    /// `‖[Δ_s Δ_f]‖₂ / ‖[R_s R_f]‖₂` of a random perturbation.
    pub relative: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSpec {
    pub min: Freq,
    pub max: Freq,
    pub points: usize,
    pub realization: Realization,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            min: Freq::hz(0.01),
            max: Freq::hz(5000.0),
            points: 400,
            realization: Realization::Continuous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub samples: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self { samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSpec {
    pub segments: usize,
    pub window: Window,
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        Self {
            segments: 1,
            window: Window::Rectangular,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub plant: PlantSpec,
    pub design: DesignSpec,
    pub disturbance: DisturbanceSpec,
    pub uncertainty: UncertaintySection,
    pub analysis: AnalysisSpec,
    pub simulation: SimulationSpec,
    pub spectrum: SpectrumSpec,
    pub output_dir: Option<PathBuf>,
}

impl RunSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: RunSpec = serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.plant;
        if let Some(files) = &p.pair {
            for f in [&files.rs, &files.rf] {
                if !f.exists() {
                    return Err(Error::Validation(format!("missing file {}", f.display())));
                }
            }
        }
        if !(p.fs_hz > 0.0 && p.fs_hz.is_finite()) {
            return Err(Error::Validation("fs_hz must be positive".into()));
        }
        if !(p.tau_d_s >= 0.0 && p.tau_d_s.is_finite()) {
            return Err(Error::Validation("tau_d_s must be nonnegative".into()));
        }
        if !(self.design.mu >= 0.0 && self.design.mu.is_finite()) {
            return Err(Error::Validation("mu must be nonnegative".into()));
        }
        let a = &self.analysis;
        if a.points < 2 || !(a.min.0 > 0.0) || a.max.0 <= a.min.0 {
            return Err(Error::Validation("analysis grid needs 0 < min < max and at least 2 points".into()));
        }
        if self.simulation.samples == 0 || self.spectrum.segments == 0 {
            return Err(Error::Validation("samples and segments must be positive".into()));
        }
        if !(self.uncertainty.relative >= 0.0 && self.uncertainty.relative.is_finite()) {
            return Err(Error::Validation("uncertainty.relative must be nonnegative".into()));
        }
        Ok(())
    }

    /// Hash of everything that affects results; the output location is excluded.
    pub fn hash(&self) -> Result<String> {
        let mut s = self.clone();
        s.output_dir = None;
        content_hash(&s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toy {
    /// `R_s = R_f = I₂`
    Square,
    /// `R_s = I₂`, `R_f = [1 0]ᵀ`
    Column,
}

#[derive(Debug, Parser)]
#[command(name = "cdctl", version, about = "Two-array cross-directional controller design toolkit")]
pub struct Cli {
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the plant seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the response pair.
    Gen,
    /// Generalised SVD of the pair and its invariant report.
    Factor {
        #[arg(long, value_enum, conflicts_with_all = ["rs", "rf"])]
        toy: Option<Toy>,
        #[arg(long, requires = "rf")]
        rs: Option<PathBuf>,
        #[arg(long, requires = "rs")]
        rf: Option<PathBuf>,
    },
    /// Two-array controller.
    Design,
    /// Frequency sweeps, peaks, Nyquist trace and robustness margin.
    Analyze,
    /// Closed-loop time-domain run.
    Simulate,
    /// ASD and IBM of a trace.
    Spectrum {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Aggregate invariant checks and headline metrics.
    Report,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub spec_hash: String,
    pub data: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairFile {
    #[serde(with = "crate::io::matrix_serde")]
    rs: DMatrix<f64>,
    #[serde(with = "crate::io::matrix_serde")]
    rf: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub peaks: crate::analysis::ModalPeaks,
    pub kappa_x: f64,
    /// Gap between `σ_max(S)` and the modal bound, with `Γ = I`.
    pub modal_gap_input_compensated: f64,
    pub modal_gap_uncompensated: f64,
    pub delta_max: f64,
    pub delta_max_hz: f64,
    pub det_proportionality_error: f64,
    pub min_distance_to_minus_one: f64,
    pub min_distance_hz: f64,
    pub re_det_l0_above_half: bool,
    pub nyquist: crate::analysis::NyquistVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }

    fn truth(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
            pass: ok,
        }
    }
}

/// One invocation's resolved state.
pub struct Pipeline {
    pub spec: RunSpec,
    pub hash: String,
    pub out: PathBuf,
    pub format: Format,
}

impl Pipeline {
    pub fn new(spec: RunSpec, out: PathBuf, format: Format) -> Result<Self> {
        spec.validate()?;
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            hash: spec.hash()?,
            spec,
            out,
            format,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn tag(&self) -> String {
        format!("spec_hash={}", self.hash)
    }

    fn cached<T: DeserializeOwned>(&self, name: &str) -> Option<T> {
        let s: Stamped<T> = read_json(&self.path(name)).ok()?;
        (s.spec_hash == self.hash).then(|| {
            debug!("reusing {name}");
            s.data
        })
    }

    fn stamp<T: Serialize>(&self, name: &str, data: &T) -> Result<()> {
        write_json(
            &self.path(name),
            &Stamped {
                spec_hash: self.hash.clone(),
                data,
            },
        )
    }

    fn table(&self, name: &str, header: &[String], rows: Vec<Vec<f64>>) -> Result<()> {
        let tag = self.tag();
        match self.format {
            Format::Json => write_json(
                &self.path(&format!("{name}.json")),
                &json!({"spec_hash": self.hash, "columns": header, "rows": rows}),
            ),
            _ => write_table_csv(&self.path(&format!("{name}.csv")), header, rows, Some(&tag)),
        }
    }

    fn build_pair(&self) -> Result<ResponsePair> {
        let p = &self.spec.plant;
        match &p.pair {
            Some(files) => ResponsePair::new(read_matrix(&files.rs)?, read_matrix(&files.rf)?),
            None => synth_response_pair(p.n_y, p.n_s, p.n_f, p.target_kappa, p.seed),
        }
    }

    pub fn pair(&self) -> Result<ResponsePair> {
        if let Some(f) = self.cached::<PairFile>("pair.json") {
            return ResponsePair::new(f.rs, f.rf);
        }
        let pair = self.build_pair()?;
        self.stamp(
            "pair.json",
            &PairFile {
                rs: pair.rs.clone(),
                rf: pair.rf.clone(),
            },
        )?;
        Ok(pair)
    }

    pub fn factorization(&self) -> Result<GsvdFactorization> {
        if let Some(f) = self.cached("factorization.json") {
            return Ok(f);
        }
        let fact = gsvd(&self.pair()?)?;
        self.stamp("factorization.json", &fact)?;
        Ok(fact)
    }

    pub fn design(&self) -> Result<TwoArrayDesign> {
        if let Some(d) = self.cached("design.json") {
            return Ok(d);
        }
        let (p, d) = (&self.spec.plant, &self.spec.design);
        let filters = midranging_filters(p.a_s.0, p.a_f.0, p.tau_d_s, d.lambda_tiso.0, d.lambda_siso.0)?;
        let design = compose_design(&self.factorization()?, &filters, d.mu, &d.weight, d.compensators)?;
        self.stamp("design.json", &design)?;
        Ok(design)
    }

    fn grid(&self) -> Result<FrequencyGrid> {
        let a = &self.spec.analysis;
        FrequencyGrid::log_hz(a.min.as_hz(), a.max.as_hz(), a.points)
    }

    pub fn analysis(&self) -> Result<AnalysisSummary> {
        if let Some(s) = self.cached("analysis.json") {
            return Ok(s);
        }
        let design = self.design()?;
        let grid = self.grid()?;
        let r = self.spec.analysis.realization;
        info!("sweeping {} frequencies", grid.len());
        let sens = output_sensitivity_sweep(&design, &grid, design.compensators.input, design.compensators.output, r)?;
        self.table("sensitivity", &crate::analysis::SensitivitySweep::header(), sens.rows())?;
        let with_in = output_sensitivity_sweep(&design, &grid, true, false, r)?;
        let without_in = output_sensitivity_sweep(&design, &grid, false, false, r)?;
        let input = input_sensitivity_sweep(&design, &grid, r)?;
        self.table("input_sensitivity", &crate::analysis::InputSweep::header(), input.rows())?;
        let ol = open_loop_and_margin(&design, &grid, r)?;
        self.table("open_loop", &crate::analysis::OpenLoopReport::header(), ol.rows())?;
        let rm = robust_stability_margin(&design, &grid, r)?;
        let header = vec!["freq_hz".to_string(), "weighted_m_norm".to_string()];
        self.table("robust_margin", &header, rm.freq_hz.iter().zip(&rm.norm).map(|(f, n)| vec![*f, *n]).collect())?;
        let summary = AnalysisSummary {
            peaks: modal_peaks(&design.filters, r, &grid)?,
            kappa_x: condition_number(&design.factorization.x)?,
            modal_gap_input_compensated: with_in.modal_gap(),
            modal_gap_uncompensated: without_in.modal_gap(),
            delta_max: rm.delta_max,
            delta_max_hz: rm.argmin_hz,
            det_proportionality_error: ol.proportionality_error,
            min_distance_to_minus_one: ol.min_distance_to_minus_one,
            min_distance_hz: ol.min_distance_hz,
            re_det_l0_above_half: ol.margin_hypothesis,
            nyquist: ol.verdict,
        };
        self.stamp("analysis.json", &summary)?;
        Ok(summary)
    }

    fn disturbance_model(&self, pair: &ResponsePair) -> DisturbanceModel {
        match &self.spec.disturbance {
            DisturbanceSpec::None => DisturbanceModel::default(),
            DisturbanceSpec::Girder { seed } => DisturbanceModel::girder(pair, seed.unwrap_or(self.spec.plant.seed)),
            DisturbanceSpec::Custom(m) => m.clone(),
        }
    }

    fn uncertainty(&self, pair: &ResponsePair) -> Option<UncertaintySpec> {
        let u = &self.spec.uncertainty;
        if u.relative == 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(u.seed);
        let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
        let mut spec = UncertaintySpec {
            delta_s: draw(pair.ny(), pair.ns()),
            delta_f: draw(pair.ny(), pair.nf()),
        };
        let k = u.relative * crate::numlin::norm2(&pair.concat()) / spec.norm();
        spec.delta_s *= k;
        spec.delta_f *= k;
        Some(spec)
    }

    fn trace_path(&self) -> PathBuf {
        let fmt = match self.format {
            Format::Csv => TraceFormat::Csv,
            Format::Json => TraceFormat::Json,
            Format::Bin => TraceFormat::Bin,
        };
        self.path(&format!("trace.{}", fmt.extension()))
    }

    pub fn simulate(&self, samples: usize) -> Result<SimTrace> {
        let design = self.design()?;
        let pair = self.pair()?;
        let unc = self.uncertainty(&pair);
        let fs = self.spec.plant.fs_hz;
        let d = gen_disturbance(&self.disturbance_model(&pair), &pair, samples, fs)?;
        simulate_two_array(&design, &d, unc.as_ref(), fs, Some(self.spec.plant.seed))
    }

    fn find_trace(&self) -> Option<PathBuf> {
        let preferred = self.trace_path();
        if preferred.exists() {
            return Some(preferred);
        }
        ["bin", "csv", "json"].iter().map(|e| self.path(&format!("trace.{e}"))).find(|p| p.exists())
    }
}

fn spectra(p: &Pipeline, trace: &SimTrace) -> Result<Value> {
    let sp = &p.spec.spectrum;
    let mut out = serde_json::Map::new();
    for (name, m) in [("y", &trace.y), ("u_s", &trace.u_s), ("u_f", &trace.u_f)] {
        if m.nrows() == 0 {
            continue;
        }
        let s = welch_asd(m, trace.fs_hz, sp.segments, sp.window)?;
        p.table(&format!("asd_{name}"), &s.header(), s.rows(&s.asd))?;
        p.table(&format!("ibm_{name}"), &s.header(), s.rows(&s.ibm()))?;
        out.insert(name.into(), serde_json::to_value(s.summary())?);
    }
    Ok(Value::Object(out))
}

fn mean_removed_rms(row: &[f64]) -> f64 {
    let m = row.iter().sum::<f64>() / row.len() as f64;
    (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / row.len() as f64).sqrt()
}

fn report(p: &Pipeline) -> Result<Value> {
    let pair = p.pair()?;
    let fact = p.factorization()?;
    let design = p.design()?;
    let summary = p.analysis()?;
    let mut checks = Vec::new();

    let rep = fact.report(&pair);
    checks.push(Check::truth("gsvd_invariants", rep.passes()));

    let sx = singular_values(&fact.x);
    let sr = singular_values(&pair.concat());
    let sv_gap = sx.iter().zip(sr.iter()).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    checks.push(Check::at_most("singular_values_x_match_pair", sv_gap, 1e-9));

    let xt = fact.x_tiso();
    let proj = &xt * pseudo_inverse(&xt);
    let eig = proj.symmetric_eigen().eigenvalues;
    let ones = eig.iter().filter(|v| (*v - 1.0).abs() <= 1e-10).count();
    let zeros = eig.iter().filter(|v| v.abs() <= 1e-10).count();
    checks.push(Check::truth(
        "projector_spectrum",
        ones == fact.nf() && zeros == fact.ny() - fact.nf(),
    ));

    checks.push(Check::at_most("input_compensator_modal_gap", summary.modal_gap_input_compensated, 1e-8));
    checks.push(Check::at_most("det_proportionality", summary.det_proportionality_error, 1e-8));
    checks.push(Check::truth("nyquist_stable", summary.nyquist.stable));
    checks.push(Check::truth(
        "delta_max_positive",
        summary.delta_max.is_finite() && summary.delta_max > 0.0,
    ));

    let lambda = p.spec.design.lambda_tiso.0;
    let xxt = &fact.x * fact.x.transpose();
    let inv = crate::design::invert(&xxt)?;
    let m = -(DMatrix::identity(fact.ny(), fact.ny()) + inv * design.mu).try_inverse().ok_or(Error::SingularSystem)? * lambda;
    let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    let mut poles = closed_loop_poles(lambda, design.mu, &fact.x);
    eig.sort_by(f64::total_cmp);
    poles.sort_by(f64::total_cmp);
    let pole_err = eig.iter().zip(&poles).map(|(a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max);
    checks.push(Check::at_most("closed_loop_pole_formula", pole_err, 1e-9));

    let nominal = Pipeline {
        spec: RunSpec {
            uncertainty: UncertaintySection::default(),
            ..p.spec.clone()
        },
        hash: p.hash.clone(),
        out: p.out.clone(),
        format: p.format,
    };
    let samples = p.spec.simulation.samples.min(2000);
    let tr = nominal.simulate(samples)?;
    let scale = tr.d.amax().max(f64::MIN_POSITIVE);
    checks.push(Check::at_most("imc_feedback_equals_disturbance", (&tr.feedback - &tr.d).amax() / scale, 1e-9));

    let s = crate::spectral::asd(&tr.y, tr.fs_hz)?;
    let ibm = s.ibm();
    let last = ibm.ncols() - 1;
    let ibm_err = (0..tr.y.nrows())
        .map(|i| {
            let row: Vec<f64> = tr.y.row(i).iter().copied().collect();
            let rms = mean_removed_rms(&row);
            (ibm[(i, last)] - rms).abs() / rms.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    checks.push(Check::at_most("ibm_equals_rms", ibm_err, 1e-6));

    let all_pass = checks.iter().all(|c| c.pass);
    let value = json!({
        "spec_hash": p.hash,
        "all_pass": all_pass,
        "checks": checks,
        "metrics": {
            "s_tiso_peak_db": summary.peaks.s_tiso.value_db,
            "s_tiso_peak_hz": summary.peaks.s_tiso.freq_hz,
            "s_siso_peak_db": summary.peaks.s_siso.value_db,
            "s_siso_peak_hz": summary.peaks.s_siso.freq_hz,
            "kappa_x": summary.kappa_x,
            "delta_max": summary.delta_max,
            "delta_max_hz": summary.delta_max_hz,
            "modal_gap_uncompensated": summary.modal_gap_uncompensated,
            "min_distance_to_minus_one": summary.min_distance_to_minus_one,
            "gsvd": rep,
        },
    });
    write_json(&p.path("report.json"), &value)?;
    Ok(value)
}

fn toy_pair(toy: Toy) -> Result<ResponsePair> {
    let eye = DMatrix::<f64>::identity(2, 2);
    match toy {
        Toy::Square => ResponsePair::new(eye.clone(), eye),
        Toy::Column => ResponsePair::new(eye, DMatrix::from_column_slice(2, 1, &[1.0, 0.0])),
    }
}

fn write_matrix(p: &Pipeline, name: &str, m: &DMatrix<f64>) -> Result<PathBuf> {
    match p.format {
        Format::Csv => {
            let path = p.path(&format!("{name}.csv"));
            std::fs::write(&path, matrix_to_csv_tagged(m, Some(&p.tag())))?;
            Ok(path)
        }
        Format::Json => {
            let path = p.path(&format!("{name}.json"));
            write_json(&path, &json!({"spec_hash": p.hash, "matrix": MatrixJson::from(m)}))?;
            Ok(path)
        }
        Format::Bin => Err(Error::Validation("binary output is only available for traces".into())),
    }
}

/// Executes one command and returns its stdout summary.
pub fn run(cli: &Cli) -> Result<Value> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Error::Validation("--workers must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut spec = match &cli.spec {
        Some(path) => RunSpec::load(path)?,
        None => RunSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.plant.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("run"));
    let p = Pipeline::new(spec, out, cli.format)?;
    info!("spec hash {}", p.hash);

    match &cli.command {
        Command::Gen => {
            let pair = p.build_pair()?;
            p.stamp(
                "pair.json",
                &PairFile {
                    rs: pair.rs.clone(),
                    rf: pair.rf.clone(),
                },
            )?;
            let rs = write_matrix(&p, "rs", &pair.rs)?;
            let rf = write_matrix(&p, "rf", &pair.rf)?;
            Ok(json!({
                "spec_hash": p.hash,
                "files": [rs, rf],
                "n_y": pair.ny(), "n_s": pair.ns(), "n_f": pair.nf(),
                "kappa": condition_number(&pair.concat())?,
            }))
        }
        Command::Factor { toy, rs, rf } => {
            let (pair, fact) = match (toy, rs, rf) {
                (Some(t), _, _) => {
                    let pair = toy_pair(*t)?;
                    let fact = gsvd(&pair)?;
                    (pair, fact)
                }
                (None, Some(rs), Some(rf)) => {
                    let pair = ResponsePair::new(read_matrix(rs)?, read_matrix(rf)?)?;
                    let fact = gsvd(&pair)?;
                    (pair, fact)
                }
                _ => (p.pair()?, p.factorization()?),
            };
            let rep = fact.report(&pair);
            p.stamp("factorization.json", &fact)?;
            p.stamp("gsvd_report.json", &rep)?;
            Ok(json!({
                "spec_hash": p.hash,
                "sigma_s": fact.sigma_s,
                "sigma_f": fact.sigma_f,
                "report": rep,
                "passes": rep.passes(),
            }))
        }
        Command::Design => {
            let d = p.design()?;
            Ok(json!({
                "spec_hash": p.hash,
                "file": p.path("design.json"),
                "mu": d.mu,
                "compensators": d.compensators,
                "kappa_x": condition_number(&d.factorization.x)?,
            }))
        }
        Command::Analyze => {
            let s = p.analysis()?;
            Ok(json!({"spec_hash": p.hash, "summary": s}))
        }
        Command::Simulate => {
            let tr = p.simulate(p.spec.simulation.samples)?;
            let path = p.trace_path();
            let fmt = match p.format {
                Format::Csv => TraceFormat::Csv,
                Format::Json => TraceFormat::Json,
                Format::Bin => TraceFormat::Bin,
            };
            tr.save(&path, fmt)?;
            p.stamp("trace_meta.json", &tr.meta)?;
            Ok(json!({
                "spec_hash": p.hash,
                "file": path,
                "samples": tr.len(),
                "y_peak": tr.y.amax(),
                "meta": tr.meta,
            }))
        }
        Command::Spectrum { trace } => {
            let path = trace
                .clone()
                .or_else(|| p.find_trace())
                .ok_or_else(|| Error::Validation("no trace found; run `simulate` first or pass --trace".into()))?;
            let tr = SimTrace::load(&path)?;
            let summary = spectra(&p, &tr)?;
            p.stamp("spectrum.json", &summary)?;
            Ok(json!({"spec_hash": p.hash, "trace": path, "spectra": summary}))
        }
        Command::Report => report(&p),
    }
}

/// Process entry point: prints the summary on success, error JSON on
/// failure, and returns the exit code.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CDCTL_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) => {
            use std::io::Write as _;
            // a closed pipe downstream is not our failure
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            0
        }
        Err(e) => {
            let code = if e.is_numerical() { 3 } else { 2 };
            eprintln!(
                "{}",
                json!({"error": e.kind(), "message": e.to_string(), "exit_code": code})
            );
            code
        }
    }
}
