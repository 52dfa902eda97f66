use tomosar::geometry::{geometry_ramp, make_height_grid, steering_matrix, synthesize_geometry};
use tomosar::simulator::{
    build_dataset, split_indices, true_covariance, correlation_normalize, render_profile, Dataset,
    GaussianMixtureParams, ProfilePrior, SampleCovariance,
};
use tomosar::spectral::beamforming;
use tomosar::TomoError;

fn small(count: usize, seed: u64) -> Dataset {
    let grid = make_height_grid(-20.0, 40.0, 32).unwrap();
    let geoms = geometry_ramp(4, 6.0, 25.0, 6, 0.25, 3).unwrap();
    build_dataset(count, &ProfilePrior::boreal(), &geoms, &grid, 8, seed).unwrap()
}

#[test]
fn ten_thousand_examples_split_75_25() {
    let ds = small(10_000, 5);
    let (tr, va) = ds.split(0.75);
    assert_eq!((tr.len(), va.len()), (7500, 2500));
    let mut all: Vec<usize> = tr.iter().chain(&va).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..10_000).collect::<Vec<_>>());
    assert_eq!(split_indices(10_000, 0.75, 5), (tr, va));
}

#[test]
fn same_seed_gives_identical_bytes_regardless_of_threads() {
    let a = small(300, 9);
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| small(300, 9));
    assert_eq!(a, b);
    let (mut ba, mut bb) = (Vec::new(), Vec::new());
    a.write_to(&mut ba).unwrap();
    b.write_to(&mut bb).unwrap();
    assert_eq!(ba, bb);
    assert_ne!(a, small(300, 10));
}

#[test]
fn container_round_trips_and_rejects_corruption() {
    let ds = small(7, 1);
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();
    assert_eq!(Dataset::read_from(buf.as_slice()).unwrap(), ds);
    assert!(matches!(Dataset::read_from(&buf[..buf.len() - 1]), Err(TomoError::Format(_))));
    let mut extra = buf.clone();
    extra.push(0);
    assert!(matches!(Dataset::read_from(extra.as_slice()), Err(TomoError::Format(_))));
    let mut magic = buf.clone();
    magic[1] = b'?';
    assert!(matches!(Dataset::read_from(magic.as_slice()), Err(TomoError::Format(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.bin");
    let one = small(1, 2);
    one.save(&path).unwrap();
    assert_eq!(Dataset::load(&path).unwrap(), one);
}

#[test]
fn targets_are_normalized_and_inputs_nonnegative() {
    let ds = small(50, 4);
    for ex in &ds.examples {
        let s: f64 = ex.target.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(ex.input.iter().all(|v| *v >= 0.0));
        assert!(ex.trace_scale > 0.0);
        assert!(ex.geometry_index < 4);
    }
}

#[test]
fn many_looks_approach_noise_free_beamforming() {
    let grid = make_height_grid(-20.0, 40.0, 128).unwrap();
    let g = synthesize_geometry(6, 10.0, 0.25, 8).unwrap();
    let params = GaussianMixtureParams {
        amp_ground: 0.6,
        amp_canopy: 0.9,
        mu_ground: 0.5,
        mu_canopy: 18.0,
        sigma_ground: 1.5,
        sigma_canopy: 4.0,
    };
    let prior = ProfilePrior::point(params, 0.1);
    let ds = build_dataset(1, &prior, std::slice::from_ref(&g), &grid, 100_000, 3).unwrap();
    let a = steering_matrix(&g, &grid);
    let sigma = true_covariance(&a, &render_profile(&params, &grid), 0.1).unwrap();
    let r = correlation_normalize(&SampleCovariance::from_matrix(sigma, 1).unwrap()).unwrap();
    let expected = beamforming(r.matrix(), &a).unwrap().profile;
    let got = &ds.examples[0].input;
    let num: f64 = got.iter().zip(&expected).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = expected.iter().map(|y| y * y).sum::<f64>().sqrt();
    assert!(num / den < 0.02, "relative error {}", num / den);
}
