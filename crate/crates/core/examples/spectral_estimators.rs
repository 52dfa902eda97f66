//! Beamforming vs Capon on one simulated ground + canopy column.
//!
//! cargo run --release --example spectral_estimators

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tomosar::geometry::{make_height_grid, steering_matrix, synthesize_geometry};
use tomosar::simulator::{draw_speckle_stack, render_profile, sample_covariance, GaussianMixtureParams};
use tomosar::spectral::{beamforming, capon, DEFAULT_CAPON_LOADING};

fn main() -> tomosar::Result<()> {
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geom = synthesize_geometry(6, 8.0, 0.25, 3)?;
    let a = steering_matrix(&geom, &grid);
    let params = GaussianMixtureParams {
        amp_ground: 0.8,
        amp_canopy: 0.6,
        mu_ground: 0.0,
        mu_canopy: 20.0,
        sigma_ground: 1.5,
        sigma_canopy: 3.5,
    };
    let truth = render_profile(&params, &grid);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let stack = draw_speckle_stack(&a, &truth, 0.1, 64, &mut rng)?;
    let cov = sample_covariance(&stack)?;

    let bf = beamforming(cov.matrix(), &a)?.profile;
    let loading = DEFAULT_CAPON_LOADING * cov.trace_scale();
    let cp = capon(cov.matrix(), &a, loading)?.profile;

    println!("{:>8} {:>10} {:>10} {:>10}", "z [m]", "truth", "bf", "capon");
    for i in (0..grid.len()).step_by(16) {
        println!("{:8.2} {:10.4} {:10.4} {:10.4}", grid.heights()[i], truth.values()[i], bf[i], cp[i]);
    }
    Ok(())
}
