//! Trains a small encoder-decoder and compares it to its beamforming input.
//!
//! cargo run --release --example train_network -- [epochs]

use tomosar::evalharness::compare_to_baseline;
use tomosar::geometry::{geometry_ramp, make_height_grid};
use tomosar::neuralnet::{train, Architecture, TrainingConfig};
use tomosar::simulator::{build_dataset, ProfilePrior};

fn main() -> tomosar::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geometries = geometry_ramp(200, 6.0, 25.0, 6, 0.25, 7)?;
    let ds = build_dataset(2000, &ProfilePrior::boreal(), &geometries, &grid, 100, 1)?;

    let cfg = TrainingConfig { epochs, ..Default::default() };
    let (weights, history) = train(&ds, &Architecture::default_for(512, 5), &cfg)?;
    for (e, (t, v)) in history.train.iter().zip(&history.validation).enumerate() {
        if e % 5 == 0 || e + 1 == epochs {
            println!("epoch {e:3}: train {t:.4e}  validation {v:.4e}");
        }
    }
    let (_, val) = ds.split(cfg.split);
    let cmp = compare_to_baseline(&weights, &ds, &val)?;
    println!(
        "per-profile squared error on {} validation profiles: network {:.4e}, beamforming {:.4e}",
        cmp.examples, cmp.network_error, cmp.baseline_error
    );
    Ok(())
}
