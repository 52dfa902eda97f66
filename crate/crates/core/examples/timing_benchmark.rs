//! Single-threaded wall-clock comparison of the four estimators on a
//! 200 x 512 scene (untrained network weights: only the cost matters here).
//!
//! cargo run --release --example timing_benchmark

use tomosar::evalharness::{simulate_scene, timing_benchmark, Method, MethodConfig, SceneDescription};
use tomosar::geometry::{geometry_ramp, make_height_grid};
use tomosar::neuralnet::{default_layer_sizes, init_network, DEFAULT_LEAKY_SLOPE};

fn main() -> tomosar::Result<()> {
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geometries = geometry_ramp(200, 6.0, 25.0, 6, 0.25, 7)?;
    let scene = simulate_scene(&SceneDescription::default_boreal(200), &geometries, &grid, 11)?;
    let weights = init_network(&default_layer_sizes(512, 5), DEFAULT_LEAKY_SLOPE, 0)?;
    let mc = MethodConfig { weights: Some(weights), ..Default::default() };

    let report = timing_benchmark(&scene, &Method::ALL, &mc, 3, None)?;
    report.write_csv(std::io::stdout())?;
    println!("outputs identical across repetitions: {}", report.outputs_identical);
    Ok(())
}
