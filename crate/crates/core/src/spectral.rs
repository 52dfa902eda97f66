//! Non-parametric vertical spectral estimators: beamforming and Capon.

use num_complex::Complex64;

use crate::error::{Result, TomoError};
use crate::geometry::SteeringMatrix;
use crate::linalg::{ensure_hermitian, ensure_square, hermitian_pd_inverse, trace_re, CMatrix, PackedHermitian};

/// Default Capon diagonal loading, as a fraction of the mean eigenvalue.
pub const DEFAULT_CAPON_LOADING: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Beamforming,
    Capon,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Beamforming => "beamforming",
            Estimator::Capon => "capon",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub profile: Vec<f64>,
    pub method: Estimator,
    /// Entries whose small negative round-off was clamped to zero.
    pub clamped: usize,
}

fn check_inputs(r: &CMatrix, a: &SteeringMatrix) -> Result<()> {
    ensure_square(r, a.n_tracks(), "covariance")?;
    ensure_hermitian(r, "covariance")
}

/// `a(z_i)^H R a(z_i) / N²` for every height of the steering matrix.
pub fn beamforming(r: &CMatrix, a: &SteeringMatrix) -> Result<EstimatorOutput> {
    check_inputs(r, a)?;
    let n = a.n_tracks() as f64;
    let packed = PackedHermitian::new(r);
    let tol = 1e-8 * trace_re(r).abs() / n;
    let norm = 1.0 / (n * n);
    let mut profile: Vec<f64> = (0..a.n_heights())
        .map(|i| packed.quadratic(a.column_slice(i)) * norm)
        .collect();
    let mut clamped = 0;
    if profile.iter().any(|v| *v < 0.0) {
        for v in &mut profile {
            *v = clamp_roundoff(*v, tol * norm, &mut clamped)?;
        }
    }
    Ok(EstimatorOutput {
        profile,
        method: Estimator::Beamforming,
        clamped,
    })
}

/// `1 / (a(z_i)^H R_dl^{-1} a(z_i))` with `R_dl = R + loading · (Tr R / N) · I`.
pub fn capon(r: &CMatrix, a: &SteeringMatrix, loading: f64) -> Result<EstimatorOutput> {
    check_inputs(r, a)?;
    if !(loading >= 0.0 && loading.is_finite()) {
        return Err(TomoError::invalid("Capon loading must be a nonnegative fraction"));
    }
    let n = a.n_tracks();
    let mean_eig = trace_re(r) / n as f64;
    let mut loaded = r.clone();
    for i in 0..n {
        loaded[[i, i]] += Complex64::new(loading * mean_eig, 0.0);
    }
    let inv = hermitian_pd_inverse(&loaded).ok_or_else(|| {
        TomoError::numerical("loaded covariance is singular; use a nonzero diagonal loading")
    })?;
    let packed = PackedHermitian::new(&inv);
    let mut profile: Vec<f64> = (0..a.n_heights())
        .map(|i| packed.quadratic(a.column_slice(i)))
        .collect();
    if profile.iter().any(|q| !(*q > 0.0)) {
        return Err(TomoError::numerical("Capon denominator is not positive"));
    }
    for q in &mut profile {
        *q = 1.0 / *q;
    }
    Ok(EstimatorOutput {
        profile,
        method: Estimator::Capon,
        clamped: 0,
    })
}

fn clamp_roundoff(v: f64, tol: f64, clamped: &mut usize) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if -v <= tol {
        *clamped += 1;
        Ok(0.0)
    } else {
        Err(TomoError::numerical(format!(
            "quadratic form {v} is significantly negative; input is not positive semidefinite"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_height_grid, steering_matrix, steering_vector, synthesize_geometry, HeightGrid};
    use crate::simulator::{
        correlation_normalize, draw_speckle_stack, render_profile, sample_covariance, true_covariance,
        GaussianMixtureParams, ReflectivityProfile,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> CMatrix {
        CMatrix::from_shape_fn((n, n), |(i, j)| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
    }

    fn outer(a: &[Complex64]) -> CMatrix {
        CMatrix::from_shape_fn((a.len(), a.len()), |(i, j)| a[i] * a[j].conj())
    }

    fn setup() -> (HeightGrid, SteeringMatrix, crate::geometry::AcquisitionGeometry) {
        let geom = synthesize_geometry(6, 15.0, 0.0, 0).unwrap();
        let grid = make_height_grid(-20.0, 40.0, 512).unwrap();
        let a = steering_matrix(&geom, &grid);
        (grid, a, geom)
    }

    #[test]
    fn identity_gives_flat_profile() {
        let (_, a, _) = setup();
        let out = beamforming(&identity(6), &a).unwrap();
        assert!(out.profile.iter().all(|v| (*v - 1.0 / 6.0).abs() < 1e-15));
        let out = capon(&identity(6), &a, 0.0).unwrap();
        assert!(out.profile.iter().all(|v| (*v - 1.0 / 6.0).abs() < 1e-14));
    }

    #[test]
    fn unit_scatterer_peaks_at_one() {
        let (grid, a, geom) = setup();
        let i0 = 217;
        let r = outer(&steering_vector(&geom, grid.heights()[i0]));
        let out = beamforming(&r, &a).unwrap();
        assert!((out.profile[i0] - 1.0).abs() < 1e-14);
        assert!(out.profile.iter().all(|v| *v <= 1.0 + 1e-14));
    }

    fn two_scatterer_r(grid: &HeightGrid, a: &SteeringMatrix, i1: usize, i2: usize) -> CMatrix {
        let mut p = vec![0.0; grid.len()];
        p[i1] = 0.5;
        p[i2] = 0.5;
        true_covariance(a, &ReflectivityProfile::new(p).unwrap(), 0.0).unwrap()
    }

    fn local_maxima(v: &[f64]) -> Vec<usize> {
        (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect()
    }

    /// Half-power width (in samples) of the lobe containing `peak`.
    fn lobe_width(v: &[f64], peak: usize) -> usize {
        let half = 0.5 * v[peak];
        let mut lo = peak;
        while lo > 0 && v[lo - 1] >= half {
            lo -= 1;
        }
        let mut hi = peak;
        while hi + 1 < v.len() && v[hi + 1] >= half {
            hi += 1;
        }
        hi - lo + 1
    }

    #[test]
    fn separated_scatterers_resolved_and_capon_is_sharper() {
        // Ambiguity height is 75 m, so both scatterers stay unambiguous on
        // [-20, 40]. Separation 30 m is twice the resolution.
        let (grid, a, _) = setup();
        let i1 = grid.nearest_index(-5.0);
        let i2 = grid.nearest_index(25.0);
        let r = two_scatterer_r(&grid, &a, i1, i2);
        let bf = beamforming(&r, &a).unwrap().profile;
        let mut peaks = local_maxima(&bf);
        peaks.sort_by(|x, y| bf[*y].partial_cmp(&bf[*x]).unwrap());
        let mut top: Vec<usize> = peaks[..2].to_vec();
        top.sort();
        assert!(top[0].abs_diff(i1) <= 1, "{top:?}");
        assert!(top[1].abs_diff(i2) <= 1, "{top:?}");

        let cp = capon(&r, &a, DEFAULT_CAPON_LOADING).unwrap().profile;
        for (&i, &j) in [i1, i2].iter().zip(&top) {
            let cap_peak = (i.saturating_sub(20)..(i + 20).min(cp.len()))
                .max_by(|x, y| cp[*x].partial_cmp(&cp[*y]).unwrap())
                .unwrap();
            let ratio = lobe_width(&cp, cap_peak) as f64 / lobe_width(&bf, j) as f64;
            assert!(ratio < 1.0, "width ratio {ratio}");
        }
    }

    #[test]
    fn capon_scaled_identity() {
        let (_, a, _) = setup();
        let cmat = identity(6).mapv(|v| v * 3.0);
        let out = capon(&cmat, &a, 0.2).unwrap();
        assert!(out.profile.iter().all(|v| (*v - 3.0 * 1.2 / 6.0).abs() < 1e-13));
    }

    #[test]
    fn capon_rejects_singular_without_loading() {
        let (grid, a, geom) = setup();
        let r = outer(&steering_vector(&geom, grid.heights()[10]));
        assert!(matches!(capon(&r, &a, 0.0), Err(TomoError::Numerical(_))));
        assert!(capon(&r, &a, 0.01).is_ok());
        assert!(capon(&r, &a, -1.0).is_err());
    }

    #[test]
    fn dimension_and_hermitian_checks() {
        let (_, a, _) = setup();
        assert!(matches!(beamforming(&identity(4), &a), Err(TomoError::Dimension(_))));
        let mut bad = identity(6);
        bad[[0, 1]] = Complex64::new(0.5, 0.0);
        assert!(beamforming(&bad, &a).is_err());
    }

    #[test]
    fn capon_heavy_loading_flattens() {
        let (grid, a, _) = setup();
        let r = two_scatterer_r(&grid, &a, 100, 400);
        let out = capon(&r, &a, 1e9).unwrap().profile;
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert!(out.iter().all(|v| (v / mean - 1.0).abs() < 1e-6));
    }

    #[test]
    fn expected_beamforming_matches_mean_over_speckle() {
        let geom = synthesize_geometry(6, 15.0, 0.2, 5).unwrap();
        let grid = make_height_grid(-20.0, 40.0, 128).unwrap();
        let a = steering_matrix(&geom, &grid);
        let params = GaussianMixtureParams {
            amp_ground: 1.0,
            amp_canopy: 1.0,
            mu_ground: 0.0,
            mu_canopy: 18.0,
            sigma_ground: 1.0,
            sigma_canopy: 4.0,
        };
        let p = render_profile(&params, &grid);
        let sigma = true_covariance(&a, &p, 0.1).unwrap();
        let expected = beamforming(&sigma, &a).unwrap().profile;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 1000;
        let mut sum = vec![0.0; grid.len()];
        let mut sum_sq = vec![0.0; grid.len()];
        for _ in 0..draws {
            let stack = draw_speckle_stack(&a, &p, 0.1, 10, &mut rng).unwrap();
            let est = sample_covariance(&stack).unwrap();
            let bf = beamforming(est.matrix(), &a).unwrap().profile;
            for i in 0..grid.len() {
                sum[i] += bf[i];
                sum_sq[i] += bf[i] * bf[i];
            }
        }
        for i in 0..grid.len() {
            let mean = sum[i] / draws as f64;
            let var = sum_sq[i] / draws as f64 - mean * mean;
            let se = (var / draws as f64).sqrt();
            assert!((mean - expected[i]).abs() <= 3.0 * se + 1e-12, "bin {i}");
        }
        // correlation input keeps the estimator well defined too
        let stack = draw_speckle_stack(&a, &p, 0.1, 10, &mut rng).unwrap();
        let r = correlation_normalize(&sample_covariance(&stack).unwrap()).unwrap();
        assert_eq!(beamforming(r.matrix(), &a).unwrap().profile.len(), 128);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn beamforming_is_linear_and_capon_scales(seed in any::<u64>(), alpha in 0.0f64..5.0, beta in 0.0f64..5.0, c in 0.01f64..100.0) {
            let geom = synthesize_geometry(6, 12.0, 0.3, seed).unwrap();
            let grid = make_height_grid(-20.0, 40.0, 64).unwrap();
            let a = steering_matrix(&geom, &grid);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| {
                let stack = ndarray::Array2::from_shape_fn((9, 6), |_| crate::simulator::circular_gaussian(rng, 1.0));
                sample_covariance(&stack).unwrap().matrix().clone()
            };
            let r1 = mk(&mut rng);
            let r2 = mk(&mut rng);
            let combo = r1.mapv(|v| v * alpha) + r2.mapv(|v| v * beta);
            let b1 = beamforming(&r1, &a).unwrap().profile;
            let b2 = beamforming(&r2, &a).unwrap().profile;
            let bc = beamforming(&combo, &a).unwrap().profile;
            for i in 0..64 {
                let lin = alpha * b1[i] + beta * b2[i];
                prop_assert!((bc[i] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
            }
            let cap = capon(&r1, &a, 0.05).unwrap().profile;
            let cap_s = capon(&r1.mapv(|v| v * c), &a, 0.05).unwrap().profile;
            let bf_s = beamforming(&r1.mapv(|v| v * c), &a).unwrap().profile;
            for i in 0..64 {
                prop_assert!((cap_s[i] - c * cap[i]).abs() <= 1e-9 * c * cap[i]);
                prop_assert!((bf_s[i] - c * b1[i]).abs() <= 1e-12 * c * (1.0 + b1[i]));
                prop_assert!(cap[i] > 0.0 && b1[i] >= 0.0);
            }
        }
    }
}
