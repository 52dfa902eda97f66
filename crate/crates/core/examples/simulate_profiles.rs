//! Draws a handful of boreal training examples and prints their summary.
//!
//! cargo run --release --example simulate_profiles

use tomosar::geometry::{geometry_ramp, make_height_grid};
use tomosar::simulator::{build_dataset, ProfilePrior};

fn main() -> tomosar::Result<()> {
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geometries = geometry_ramp(20, 6.0, 25.0, 6, 0.25, 7)?;
    let ds = build_dataset(8, &ProfilePrior::boreal(), &geometries, &grid, 100, 1)?;

    for (k, ex) in ds.examples.iter().enumerate() {
        let peak = |v: &[f64]| {
            let i = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
            grid.heights()[i]
        };
        println!(
            "example {k}: geometry {:2}  trace scale {:.3}  target peak {:6.2} m  input peak {:6.2} m",
            ex.geometry_index,
            ex.trace_scale,
            peak(&ex.target),
            peak(&ex.input)
        );
    }
    let (train, val) = ds.split(0.75);
    println!("split: {} train / {} validation", train.len(), val.len());
    Ok(())
}
