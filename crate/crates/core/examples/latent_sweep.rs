//! Validation error against latent size, a few repeats per size.
//!
//! cargo run --release --example latent_sweep

use tomosar::evalharness::{latent_sweep, write_sweep_csv};
use tomosar::geometry::{geometry_ramp, make_height_grid};
use tomosar::neuralnet::{TrainingConfig, DEFAULT_LEAKY_SLOPE};
use tomosar::simulator::{build_dataset, ProfilePrior};

fn main() -> tomosar::Result<()> {
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geometries = geometry_ramp(200, 6.0, 25.0, 6, 0.25, 7)?;
    let ds = build_dataset(1000, &ProfilePrior::boreal(), &geometries, &grid, 100, 1)?;
    let cfg = TrainingConfig { epochs: 20, ..Default::default() };
    let rows = latent_sweep(&[2, 3, 5, 8], &[0, 1, 2], &ds, DEFAULT_LEAKY_SLOPE, &cfg)?;
    write_sweep_csv(&rows, std::io::stdout())?;
    Ok(())
}
