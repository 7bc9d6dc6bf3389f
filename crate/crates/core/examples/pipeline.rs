//! Runs the staged pipeline from library code: a small run specification,
//! factorization, design, analysis, a short simulation and the spectra, all
//! cached under one output directory.
//!
//! `cargo run --release --example pipeline -- [out_dir]`

use std::path::PathBuf;

use cdctl::cli::{Format, Pipeline, RunSpec};

fn main() -> cdctl::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cdctl-pipeline"));
    let mut spec = RunSpec::default();
    spec.plant.n_y = 16;
    spec.plant.n_s = 16;
    spec.plant.n_f = 10;
    spec.simulation.samples = 4000;
    let p = Pipeline::new(spec, out.clone(), Format::Csv)?;
    println!("spec hash {}", p.hash);

    let fact = p.factorization()?;
    println!("factorization: cond X = {:.1}", fact.report(&p.pair()?).cond_x);
    let summary = p.analysis()?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    let trace = p.simulate(4000)?;
    println!("simulated {} samples", trace.len());
    println!("outputs in {}", out.display());
    Ok(())
}
