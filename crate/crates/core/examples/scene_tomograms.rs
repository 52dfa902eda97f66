//! Reconstructs the synthetic boreal scene with every method and writes
//! CSV + PGM images to the given directory.
//!
//! cargo run --release --example scene_tomograms -- out/scene

use std::path::PathBuf;

use tomosar::evalharness::{
    canopy_splits, reconstruct_tomogram, ridge_summary, simulate_scene, Method, MethodConfig, SceneDescription,
};
use tomosar::geometry::{geometry_ramp, make_height_grid};
use tomosar::neuralnet::{train, Architecture, TrainingConfig};
use tomosar::simulator::{build_dataset, ProfilePrior};

fn main() -> tomosar::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/scene".into()));
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geometries = geometry_ramp(64, 6.0, 25.0, 6, 0.25, 7)?;

    // a quickly trained network; the CLI `train` command produces the real one
    let ds = build_dataset(2000, &ProfilePrior::boreal(), &geometries, &grid, 100, 1)?;
    let cfg = TrainingConfig { epochs: 20, ..Default::default() };
    let (weights, _) = train(&ds, &Architecture::default_for(512, 5), &cfg)?;

    let desc = SceneDescription::default_boreal(64);
    let scene = simulate_scene(&desc, &geometries, &grid, 11)?;
    let mc = MethodConfig { weights: Some(weights), ..Default::default() };
    let splits = canopy_splits(&desc);
    scene.truth.save(&grid, &out, "truth")?;
    for m in Method::ALL {
        let tomo = reconstruct_tomogram(&scene, m, &mc)?;
        let widths: Vec<f64> = ridge_summary(&tomo, &grid, &splits).into_iter().flatten().map(|r| r.1).collect();
        println!("{:12} mean canopy ridge width {:.2} m", m.name(), widths.iter().sum::<f64>() / widths.len() as f64);
        tomo.save(&grid, &out, m.name())?;
    }
    println!("tomograms written to {}", out.display());
    Ok(())
}
