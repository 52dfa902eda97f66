//! Wavelet-regularized covariance fitting with monotone FISTA.
//!
//! cargo run --release --example cs_inversion

use tomosar::csinvert::{fista_solve, CsConfig};
use tomosar::geometry::{make_height_grid, steering_matrix, synthesize_geometry};
use tomosar::simulator::{render_profile, true_covariance, GaussianMixtureParams};
use tomosar::wavelet::WaveletBasis;

fn main() -> tomosar::Result<()> {
    let grid = make_height_grid(-20.0, 40.0, 512)?;
    let geom = synthesize_geometry(6, 10.0, 0.25, 2)?;
    let a = steering_matrix(&geom, &grid);
    let params = GaussianMixtureParams {
        amp_ground: 0.9,
        amp_canopy: 0.7,
        mu_ground: 0.0,
        mu_canopy: 17.0,
        sigma_ground: 1.2,
        sigma_canopy: 4.0,
    };
    let truth = render_profile(&params, &grid);
    let sigma = true_covariance(&a, &truth, 0.05)?;

    let basis = WaveletBasis::haar(grid.len())?;
    let sol = fista_solve(&sigma, &a, &basis, &CsConfig::default())?;
    println!(
        "lambda {:.3e}: {} iterations, {} restarts, objective {:.4e} -> {:.4e}",
        sol.lambda,
        sol.iterations,
        sol.restarts,
        sol.objective_history[0],
        sol.objective()
    );
    let nonzero = sol.alpha.iter().filter(|v| **v != 0.0).count();
    println!("{nonzero} of {} wavelet coefficients are nonzero", sol.alpha.len());
    for i in (0..grid.len()).step_by(32) {
        println!("{:8.2} m  truth {:.4}  cs {:.4}", grid.heights()[i], truth.values()[i], sol.profile[i]);
    }
    Ok(())
}
