//! Spread of the estimators over independent speckle draws of one profile.
//!
//! cargo run --release --example speckle_realizations

use tomosar::evalharness::{speckle_realizations, Method, MethodConfig};
use tomosar::geometry::{make_height_grid, synthesize_geometry};
use tomosar::simulator::GaussianMixtureParams;

fn main() -> tomosar::Result<()> {
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geom = synthesize_geometry(6, 10.0, 0.25, 7)?;
    let params = GaussianMixtureParams {
        amp_ground: 0.7,
        amp_canopy: 0.9,
        mu_ground: 0.0,
        mu_canopy: 18.0,
        sigma_ground: 1.5,
        sigma_canopy: 4.0,
    };
    let methods = [Method::Beamforming, Method::Capon];
    let set = speckle_realizations(&params, &geom, &grid, 64, 0.1, 20, &methods, &MethodConfig::default(), 3)?;

    let truth_peak = argmax(&set.truth);
    println!("true canopy peak at {:.2} m", grid.heights()[truth_peak]);
    for (m, runs) in &set.methods {
        let peaks: Vec<f64> = runs.iter().map(|p| grid.heights()[argmax(p)]).collect();
        let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
        let sd = (peaks.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (peaks.len() - 1) as f64).sqrt();
        println!("{:12} strongest peak {:.2} ± {:.2} m over {} draws", m.name(), mean, sd, runs.len());
    }
    Ok(())
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap()
}
