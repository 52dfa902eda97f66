//! Metrics, synthetic azimuth × height scenes, tomogram reconstruction with
//! every method, the latent-size sweep and the timing benchmark.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::csinvert::{fista_solve_with_lipschitz, lipschitz_estimate, CsConfig};
use crate::error::{Result, TomoError};
use crate::geometry::{steering_matrix, AcquisitionGeometry, HeightGrid, SteeringMatrix};
use crate::neuralnet::{gather, infer_batch, train, Architecture, NetworkWeights, TrainingConfig};
use crate::simulator::{
    correlation_normalize, draw_speckle_stack, render_profile, sample_covariance, true_covariance, Dataset,
    GaussianMixtureParams, SampleCorrelation, SampleCovariance, DEFAULT_NOISE_POWER,
};
use crate::spectral::{beamforming, capon, DEFAULT_CAPON_LOADING};
use crate::wavelet::{WaveletBasis, WaveletFamily};

/// `‖c·b − p‖²` with the least-squares scale `c = ⟨b, p⟩ / ⟨b, b⟩`.
pub fn normalized_baseline_error(bf_profile: &[f64], reference: &[f64]) -> Result<f64> {
    if bf_profile.len() != reference.len() {
        return Err(TomoError::dim(format!(
            "profile lengths differ: {} vs {}",
            bf_profile.len(),
            reference.len()
        )));
    }
    let bb: f64 = bf_profile.iter().map(|b| b * b).sum();
    if bb == 0.0 {
        return Err(TomoError::invalid("beamforming profile is identically zero"));
    }
    let bp: f64 = bf_profile.iter().zip(reference).map(|(b, p)| b * p).sum();
    let c = bp / bb;
    Ok(bf_profile
        .iter()
        .zip(reference)
        .map(|(b, p)| (c * b - p) * (c * b - p))
        .sum())
}

/// Network against its own input on one set of examples, both as per-profile
/// sums of squared errors.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineComparison {
    /// Mean over examples of `‖f(b) − p‖²` (raw network output).
    pub network_error: f64,
    /// Mean of [`normalized_baseline_error`].
    pub baseline_error: f64,
    pub examples: usize,
}

impl BaselineComparison {
    /// Per-entry mean squared error of the network, the training loss scale.
    pub fn network_mse(&self, n_z: usize) -> f64 {
        self.network_error / n_z as f64
    }
}

pub fn compare_to_baseline(weights: &NetworkWeights, dataset: &Dataset, indices: &[usize]) -> Result<BaselineComparison> {
    if indices.is_empty() {
        return Err(TomoError::invalid("no examples to evaluate"));
    }
    let (x, t) = gather(dataset, indices);
    let pred = infer_batch(weights, x.view())?;
    let network_error = (&pred - &t).mapv(|v| v * v).sum() / indices.len() as f64;
    let mut baseline_error = 0.0;
    for &i in indices {
        let ex = &dataset.examples[i];
        baseline_error += normalized_baseline_error(&ex.input, &ex.target)?;
    }
    Ok(BaselineComparison {
        network_error,
        baseline_error: baseline_error / indices.len() as f64,
        examples: indices.len(),
    })
}

/// Azimuth × height image of nonnegative reflectivities.
#[derive(Debug, Clone, PartialEq)]
pub struct Tomogram {
    values: Array2<f64>,
    geometry_index: Vec<usize>,
    method: String,
}

impl Tomogram {
    pub fn new(values: Array2<f64>, geometry_index: Vec<usize>, method: impl Into<String>) -> Result<Self> {
        if geometry_index.len() != values.nrows() {
            return Err(TomoError::dim(format!(
                "{} geometry indices for {} columns",
                geometry_index.len(),
                values.nrows()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(TomoError::invalid(format!("tomogram entries must be finite and >= 0, found {v}")));
        }
        Ok(Tomogram {
            values,
            geometry_index,
            method: method.into(),
        })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_azimuth(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_heights(&self) -> usize {
        self.values.ncols()
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn geometry_index(&self) -> &[usize] {
        &self.geometry_index
    }

    pub fn column(&self, az: usize) -> &[f64] {
        self.values
            .row(az)
            .to_slice()
            .expect("tomogram rows are contiguous")
    }

    /// Long-format CSV `azimuth,height,value`.
    pub fn write_csv<W: Write>(&self, grid: &HeightGrid, w: W) -> Result<()> {
        if grid.len() != self.n_heights() {
            return Err(TomoError::dim("height grid does not match tomogram"));
        }
        let mut w = BufWriter::new(w);
        writeln!(w, "azimuth,height,value")?;
        for (az, row) in self.values.rows().into_iter().enumerate() {
            for (z, v) in grid.heights().iter().zip(row) {
                writeln!(w, "{az},{z},{v:e}")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// 8-bit binary PGM, one image row per height (highest first) and one
    /// column per azimuth, scaled linearly from the image min to max.
    /// Returns the `(min, max)` bounds used.
    pub fn write_pgm<W: Write>(&self, w: W) -> Result<(f64, f64)> {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        let mut w = BufWriter::new(w);
        write!(w, "P5\n{} {}\n255\n", self.n_azimuth(), self.n_heights())?;
        let mut row = vec![0u8; self.n_azimuth()];
        for z in (0..self.n_heights()).rev() {
            for (az, px) in row.iter_mut().enumerate() {
                let v = self.values[[az, z]];
                *px = if range > 0.0 {
                    ((v - lo) / range * 255.0).round() as u8
                } else {
                    0
                };
            }
            w.write_all(&row)?;
        }
        w.flush()?;
        Ok((lo, hi))
    }

    /// Writes `<stem>.csv`, `<stem>.pgm` and the `<stem>.pgm.txt` sidecar
    /// holding the normalization bounds.
    pub fn save(&self, grid: &HeightGrid, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(grid, std::fs::File::create(dir.join(format!("{stem}.csv")))?)?;
        let (lo, hi) = self.write_pgm(std::fs::File::create(dir.join(format!("{stem}.pgm")))?)?;
        let mut side = std::fs::File::create(dir.join(format!("{stem}.pgm.txt")))?;
        writeln!(side, "method = {}", self.method)?;
        writeln!(side, "min = {lo:e}")?;
        writeln!(side, "max = {hi:e}")?;
        writeln!(side, "width = {}", self.n_azimuth())?;
        writeln!(side, "height = {}", self.n_heights())?;
        writeln!(side, "z_min = {}", grid.z_min())?;
        writeln!(side, "z_max = {}", grid.z_max())?;
        Ok(())
    }

    /// Raw little-endian value bytes, for bit-level comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Column-wise two-Gaussian parameters plus the acquisition settings of a
/// synthetic scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDescription {
    pub columns: Vec<GaussianMixtureParams>,
    pub looks: usize,
    pub noise_power: f64,
    pub n_tracks: usize,
    pub resolution_near: f64,
    pub resolution_far: f64,
    pub perturbation: f64,
}

pub const DEFAULT_SCENE_COLUMNS: usize = 200;
pub const DEFAULT_SCENE_LOOKS: usize = 64;
pub const DEFAULT_TRACKS: usize = 6;
pub const DEFAULT_RESOLUTION_NEAR: f64 = 6.0;
pub const DEFAULT_RESOLUTION_FAR: f64 = 25.0;
pub const DEFAULT_PERTURBATION: f64 = 0.25;

impl SceneDescription {
    /// Smoothly varying boreal stand: ground near 0 m, canopy center
    /// wandering between about 12 and 24 m.
    pub fn default_boreal(n_columns: usize) -> Self {
        let columns = (0..n_columns)
            .map(|c| {
                let t = if n_columns > 1 { c as f64 / (n_columns - 1) as f64 } else { 0.0 };
                let tau = std::f64::consts::TAU;
                GaussianMixtureParams {
                    amp_ground: 0.6 + 0.25 * (tau * 1.3 * t).sin(),
                    amp_canopy: 0.75 + 0.2 * (tau * 0.8 * t + 1.0).cos(),
                    mu_ground: 1.0 * (tau * 0.6 * t).sin(),
                    mu_canopy: 18.0 + 6.0 * (tau * 0.9 * t + 0.4).sin(),
                    sigma_ground: 1.5 + 0.5 * (tau * 1.1 * t).cos(),
                    sigma_canopy: 3.5 + 1.0 * (tau * 0.7 * t + 2.0).sin(),
                }
            })
            .collect();
        SceneDescription {
            columns,
            looks: DEFAULT_SCENE_LOOKS,
            noise_power: DEFAULT_NOISE_POWER,
            n_tracks: DEFAULT_TRACKS,
            resolution_near: DEFAULT_RESOLUTION_NEAR,
            resolution_far: DEFAULT_RESOLUTION_FAR,
            perturbation: DEFAULT_PERTURBATION,
        }
    }

    /// Taller, wider tropical canopy centered between about 22 and 38 m.
    pub fn default_tropical(n_columns: usize) -> Self {
        let mut desc = Self::default_boreal(n_columns);
        for (c, p) in desc.columns.iter_mut().enumerate() {
            let t = if n_columns > 1 { c as f64 / (n_columns - 1) as f64 } else { 0.0 };
            let tau = std::f64::consts::TAU;
            p.mu_canopy = 30.0 + 8.0 * (tau * 0.9 * t + 0.4).sin();
            p.sigma_canopy = 5.5 + 1.5 * (tau * 0.7 * t + 2.0).sin();
            p.sigma_ground = 2.0 + 0.5 * (tau * 1.1 * t).cos();
        }
        desc.resolution_near = 14.0;
        desc.resolution_far = 16.0;
        desc
    }

    /// Every column shares `params`.
    pub fn constant(params: GaussianMixtureParams, n_columns: usize, looks: usize) -> Self {
        SceneDescription {
            columns: vec![params; n_columns],
            looks,
            ..Self::default_boreal(0)
        }
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(TomoError::invalid("scene needs at least one column"));
        }
        if self.looks == 0 {
            return Err(TomoError::invalid("scene needs at least one look"));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(TomoError::invalid("noise power must be nonnegative"));
        }
        for p in &self.columns {
            p.validate()?;
        }
        Ok(())
    }
}

/// Simulated measurements of every azimuth column plus the rendered truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub grid: HeightGrid,
    pub geometries: Vec<AcquisitionGeometry>,
    pub steering: Vec<SteeringMatrix>,
    pub covariances: Vec<SampleCovariance>,
    pub correlations: Vec<SampleCorrelation>,
    pub truth: Tomogram,
}

impl Scene {
    pub fn n_columns(&self) -> usize {
        self.covariances.len()
    }
}

fn check_scene_inputs(desc: &SceneDescription, geometries: &[AcquisitionGeometry]) -> Result<()> {
    desc.validate()?;
    if geometries.len() != desc.n_columns() {
        return Err(TomoError::dim(format!(
            "{} geometries for {} scene columns",
            geometries.len(),
            desc.n_columns()
        )));
    }
    Ok(())
}

/// Column `c` draws its looks from ChaCha stream `(seed, c)`.
pub fn simulate_scene(
    desc: &SceneDescription,
    geometries: &[AcquisitionGeometry],
    grid: &HeightGrid,
    seed: u64,
) -> Result<Scene> {
    check_scene_inputs(desc, geometries)?;
    let columns: Vec<_> = (0..desc.n_columns())
        .into_par_iter()
        .map(|c| {
            let a = steering_matrix(&geometries[c], grid);
            let p = render_profile(&desc.columns[c], grid);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let stack = draw_speckle_stack(&a, &p, desc.noise_power, desc.looks, &mut rng)?;
            let cov = sample_covariance(&stack)?;
            let corr = correlation_normalize(&cov)?;
            Ok((a, p, cov, corr))
        })
        .collect::<Result<_>>()?;
    assemble_scene(columns, geometries, grid)
}

/// Speckle-free variant: every column carries its exact model covariance.
pub fn simulate_scene_noiseless(
    desc: &SceneDescription,
    geometries: &[AcquisitionGeometry],
    grid: &HeightGrid,
) -> Result<Scene> {
    check_scene_inputs(desc, geometries)?;
    let columns: Vec<_> = (0..desc.n_columns())
        .into_par_iter()
        .map(|c| {
            let a = steering_matrix(&geometries[c], grid);
            let p = render_profile(&desc.columns[c], grid);
            let cov = SampleCovariance::from_matrix(true_covariance(&a, &p, desc.noise_power)?, desc.looks)?;
            let corr = correlation_normalize(&cov)?;
            Ok((a, p, cov, corr))
        })
        .collect::<Result<_>>()?;
    assemble_scene(columns, geometries, grid)
}

type SceneColumn = (SteeringMatrix, crate::simulator::ReflectivityProfile, SampleCovariance, SampleCorrelation);

fn assemble_scene(columns: Vec<SceneColumn>, geometries: &[AcquisitionGeometry], grid: &HeightGrid) -> Result<Scene> {
    let n = columns.len();
    let mut truth = Array2::zeros((n, grid.len()));
    let mut steering = Vec::with_capacity(n);
    let mut covariances = Vec::with_capacity(n);
    let mut correlations = Vec::with_capacity(n);
    for (c, (a, p, cov, corr)) in columns.into_iter().enumerate() {
        truth.row_mut(c).assign(&ndarray::ArrayView1::from(p.values()));
        steering.push(a);
        covariances.push(cov);
        correlations.push(corr);
    }
    Ok(Scene {
        grid: grid.clone(),
        geometries: geometries.to_vec(),
        steering,
        covariances,
        correlations,
        truth: Tomogram::new(truth, (0..n).collect(), "truth")?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Beamforming,
    Capon,
    Cs,
    Network,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Beamforming, Method::Capon, Method::Cs, Method::Network];

    pub fn name(self) -> &'static str {
        match self {
            Method::Beamforming => "beamforming",
            Method::Capon => "capon",
            Method::Cs => "cs",
            Method::Network => "network",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beamforming" | "bf" => Some(Method::Beamforming),
            "capon" => Some(Method::Capon),
            "cs" | "wavelet-cs" => Some(Method::Cs),
            "network" | "nn" => Some(Method::Network),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub capon_loading: f64,
    pub cs: CsConfig,
    pub wavelet: WaveletFamily,
    pub wavelet_level: Option<usize>,
    pub weights: Option<NetworkWeights>,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            capon_loading: DEFAULT_CAPON_LOADING,
            cs: CsConfig::default(),
            wavelet: WaveletFamily::Haar,
            wavelet_level: None,
            weights: None,
        }
    }
}

/// Reconstructs every column with the column's own geometry. Beamforming,
/// Capon and CS work on `Σ̂`; the network maps the beamforming profile of
/// `R̂` and rescales by `Tr(Σ̂)/N`.
pub fn reconstruct_tomogram(scene: &Scene, method: Method, cfg: &MethodConfig) -> Result<Tomogram> {
    let n = scene.n_columns();
    let n_z = scene.grid.len();
    let rows: Vec<Vec<f64>> = match method {
        Method::Beamforming => (0..n)
            .into_par_iter()
            .map(|c| Ok(beamforming(scene.covariances[c].matrix(), &scene.steering[c])?.profile))
            .collect::<Result<_>>()?,
        Method::Capon => (0..n)
            .into_par_iter()
            .map(|c| Ok(capon(scene.covariances[c].matrix(), &scene.steering[c], cfg.capon_loading)?.profile))
            .collect::<Result<_>>()?,
        Method::Cs => {
            let basis = WaveletBasis::new(n_z, cfg.wavelet, cfg.wavelet_level)?;
            (0..n)
                .into_par_iter()
                .map(|c| {
                    let a = &scene.steering[c];
                    let lip = lipschitz_estimate(a, &basis)?;
                    let sol = fista_solve_with_lipschitz(scene.covariances[c].matrix(), a, &basis, &cfg.cs, lip)?;
                    Ok(sol.profile)
                })
                .collect::<Result<_>>()?
        }
        Method::Network => {
            let weights = cfg
                .weights
                .as_ref()
                .ok_or_else(|| TomoError::invalid("network reconstruction needs trained weights"))?;
            return network_tomogram(scene, weights);
        }
    };
    let mut values = Array2::zeros((n, n_z));
    for (c, row) in rows.into_iter().enumerate() {
        values.row_mut(c).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    Tomogram::new(values, (0..n).collect(), method.name())
}

fn network_tomogram(scene: &Scene, weights: &NetworkWeights) -> Result<Tomogram> {
    let n = scene.n_columns();
    let n_z = scene.grid.len();
    if weights.n_inputs() != n_z || weights.n_outputs() != n_z {
        return Err(TomoError::dim(format!(
            "network maps {} → {} values but the scene has {n_z} heights",
            weights.n_inputs(),
            weights.n_outputs()
        )));
    }
    let inputs: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|c| Ok(beamforming(scene.correlations[c].matrix(), &scene.steering[c])?.profile))
        .collect::<Result<_>>()?;
    let mut x = Array2::zeros((n, n_z));
    for (c, row) in inputs.iter().enumerate() {
        x.row_mut(c).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    let chunk = 64;
    let blocks: Vec<Array2<f64>> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|b| {
            let rows = b * chunk..((b + 1) * chunk).min(n);
            infer_batch(weights, x.slice(ndarray::s![rows, ..]))
        })
        .collect::<Result<_>>()?;
    let mut out = ndarray::concatenate(Axis(0), &blocks.iter().map(|b| b.view()).collect::<Vec<_>>())
        .map_err(|e| TomoError::dim(e.to_string()))?;
    for (c, mut row) in out.rows_mut().into_iter().enumerate() {
        let scale = scene.covariances[c].trace_scale();
        row.mapv_inplace(|v| v.max(0.0) * scale);
    }
    Tomogram::new(out, (0..n).collect(), Method::Network.name())
}

/// Half-power extent of the canopy ridge in one column: the contiguous run
/// around the maximum above `z_split` where the value stays at or above half
/// the maximum, with linear interpolation at both crossings. Returns
/// `(peak index, width in meters)`, or `None` for an all-zero window.
pub fn canopy_ridge(profile: &[f64], grid: &HeightGrid, z_split: f64) -> Option<(usize, f64)> {
    let start = grid.heights().iter().position(|&z| z >= z_split)?;
    let (peak, &pmax) = profile[start..]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i + start, v))?;
    if !(pmax > 0.0) {
        return None;
    }
    let half = 0.5 * pmax;
    let dz = grid.spacing();
    let mut lo = peak;
    while lo > start && profile[lo - 1] >= half {
        lo -= 1;
    }
    let left = if lo > start {
        let (a, b) = (profile[lo - 1], profile[lo]);
        lo as f64 - (b - half) / (b - a)
    } else {
        lo as f64
    };
    let mut hi = peak;
    while hi + 1 < profile.len() && profile[hi + 1] >= half {
        hi += 1;
    }
    let right = if hi + 1 < profile.len() {
        let (a, b) = (profile[hi], profile[hi + 1]);
        hi as f64 + (a - half) / (a - b)
    } else {
        hi as f64
    };
    Some((peak, (right - left) * dz))
}

/// Per-column canopy ridges of a tomogram; the ground/canopy split height
/// of each column is taken from `splits`.
pub fn ridge_summary(tomogram: &Tomogram, grid: &HeightGrid, splits: &[f64]) -> Vec<Option<(usize, f64)>> {
    (0..tomogram.n_azimuth())
        .map(|c| canopy_ridge(tomogram.column(c), grid, splits[c]))
        .collect()
}

/// Midpoint between the ground and canopy centers of each scene column.
pub fn canopy_splits(desc: &SceneDescription) -> Vec<f64> {
    desc.columns.iter().map(|p| 0.5 * (p.mu_ground + p.mu_canopy)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub latent: usize,
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
    pub values: Vec<f64>,
}

/// Retrains the default architecture for each latent size and seed on the
/// same dataset. The standard deviation is the sample one (zero for a
/// single repeat).
pub fn latent_sweep(
    sizes: &[usize],
    seeds: &[u64],
    dataset: &Dataset,
    leaky_slope: f64,
    config: &TrainingConfig,
) -> Result<Vec<SweepRow>> {
    if sizes.is_empty() || seeds.is_empty() {
        return Err(TomoError::invalid("latent sweep needs at least one size and one seed"));
    }
    let jobs: Vec<(usize, u64)> = sizes.iter().flat_map(|&s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let results: Vec<f64> = jobs
        .par_iter()
        .map(|&(latent, seed)| {
            let arch = Architecture {
                layer_sizes: crate::neuralnet::default_layer_sizes(dataset.n_z, latent),
                leaky_slope,
            };
            let cfg = TrainingConfig { seed, ..config.clone() };
            let (_, history) = train(dataset, &arch, &cfg)?;
            Ok(history.final_validation().expect("at least one epoch"))
        })
        .collect::<Result<_>>()?;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(k, &latent)| {
            let values = results[k * seeds.len()..(k + 1) * seeds.len()].to_vec();
            let (mean, std) = mean_std(&values);
            SweepRow {
                latent,
                mean,
                std,
                repeats: values.len(),
                values,
            }
        })
        .collect())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "latent,mean_mse,std_mse,repeats")?;
    for r in rows {
        writeln!(w, "{},{:e},{:e},{}", r.latent, r.mean, r.std, r.repeats)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: String,
    pub median_seconds: f64,
    pub per_profile_us: Option<f64>,
    pub speedup_vs_cs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// Output of the warm-up run of each method.
    pub tomograms: Vec<Tomogram>,
    /// Whether every repetition reproduced the first bit for bit.
    pub outputs_identical: bool,
}

impl TimingReport {
    pub fn seconds(&self, method: Method) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method.name()).map(|r| r.median_seconds)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "method,median_seconds,per_profile_us,speedup_vs_cs")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{},{}",
                r.method,
                r.median_seconds,
                opt(r.per_profile_us),
                opt(r.speedup_vs_cs)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Shortest wall-clock span of one timing sample; faster methods average
/// several back-to-back runs per sample.
const MIN_SAMPLE_SECONDS: f64 = 0.05;

/// Times full-tomogram reconstruction on a single worker thread. Methods are
/// interleaved over `repetitions` rounds, with the starting method rotated
/// each round, so that drift in machine speed and after-effects of the
/// previous method affect all of them alike; each reported time is a median.
/// A `training` row is appended when a training time is supplied.
pub fn timing_benchmark(
    scene: &Scene,
    methods: &[Method],
    cfg: &MethodConfig,
    repetitions: usize,
    training_seconds: Option<f64>,
) -> Result<TimingReport> {
    if repetitions == 0 {
        return Err(TomoError::invalid("need at least one repetition"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| TomoError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        // untimed warm-up, which also calibrates the runs per sample
        let mut tomograms = Vec::with_capacity(methods.len());
        let mut runs = Vec::with_capacity(methods.len());
        for &m in methods {
            let t0 = Instant::now();
            tomograms.push(reconstruct_tomogram(scene, m, cfg)?);
            let t = t0.elapsed().as_secs_f64().max(1e-9);
            runs.push(((MIN_SAMPLE_SECONDS / t).ceil() as usize).clamp(1, 1000));
        }
        let mut samples = vec![Vec::with_capacity(repetitions); methods.len()];
        let mut identical = true;
        for round in 0..repetitions {
            // rotate the starting method so no method always follows the same one
            for j in 0..methods.len() {
                let k = (round + j) % methods.len();
                let m = methods[k];
                let t0 = Instant::now();
                let mut last = None;
                for _ in 0..runs[k] {
                    last = Some(reconstruct_tomogram(scene, m, cfg)?);
                }
                samples[k].push(t0.elapsed().as_secs_f64() / runs[k] as f64);
                identical &= last.expect("at least one run").to_bytes() == tomograms[k].to_bytes();
            }
        }
        let medians: Vec<(Method, f64)> = methods
            .iter()
            .zip(&mut samples)
            .map(|(&m, s)| (m, median(s)))
            .collect();
        let cs = medians.iter().find(|(m, _)| *m == Method::Cs).map(|(_, t)| *t);
        let n = scene.n_columns() as f64;
        let mut rows: Vec<TimingRow> = medians
            .iter()
            .map(|&(m, t)| TimingRow {
                method: m.name().to_string(),
                median_seconds: t,
                per_profile_us: Some(t / n * 1e6),
                speedup_vs_cs: cs.map(|c| c / t),
            })
            .collect();
        if let Some(t) = training_seconds {
            rows.push(TimingRow {
                method: "training".into(),
                median_seconds: t,
                per_profile_us: None,
                speedup_vs_cs: None,
            });
        }
        Ok(TimingReport {
            rows,
            tomograms,
            outputs_identical: identical,
        })
    })
}

/// Reconstructions of one profile under `realizations` independent speckle
/// draws (stream `k` for realization `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSet {
    pub truth: Vec<f64>,
    /// `(method, profiles)`, one profile per realization.
    pub methods: Vec<(Method, Vec<Vec<f64>>)>,
}

#[allow(clippy::too_many_arguments)]
pub fn speckle_realizations(
    params: &GaussianMixtureParams,
    geometry: &AcquisitionGeometry,
    grid: &HeightGrid,
    looks: usize,
    noise_power: f64,
    realizations: usize,
    methods: &[Method],
    cfg: &MethodConfig,
    seed: u64,
) -> Result<RealizationSet> {
    if realizations == 0 {
        return Err(TomoError::invalid("need at least one realization"));
    }
    let desc = SceneDescription {
        columns: vec![params.clone(); realizations],
        looks,
        noise_power,
        ..SceneDescription::default_boreal(0)
    };
    let geometries = vec![geometry.clone(); realizations];
    let scene = simulate_scene(&desc, &geometries, grid, seed)?;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let tomo = reconstruct_tomogram(&scene, m, cfg)?;
        out.push((m, (0..realizations).map(|k| tomo.column(k).to_vec()).collect()));
    }
    Ok(RealizationSet {
        truth: scene.truth.column(0).to_vec(),
        methods: out,
    })
}

impl RealizationSet {
    /// Long format `method,realization,height,value`; the truth is written
    /// with realization index -1.
    pub fn write_csv<W: Write>(&self, grid: &HeightGrid, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "method,realization,height,value")?;
        for (z, v) in grid.heights().iter().zip(&self.truth) {
            writeln!(w, "truth,-1,{z},{v:e}")?;
        }
        for (m, profiles) in &self.methods {
            for (k, p) in profiles.iter().enumerate() {
                for (z, v) in grid.heights().iter().zip(p) {
                    writeln!(w, "{},{k},{z},{v:e}", m.name())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geometry_ramp, make_height_grid, synthesize_geometry};
    use crate::neuralnet::{default_layer_sizes, init_network};

    #[test]
    fn baseline_error_examples() {
        let p = [0.1, 0.5, 0.4, 0.0];
        assert_eq!(normalized_baseline_error(&p, &p).unwrap(), 0.0);
        let scaled: Vec<f64> = p.iter().map(|v| v * -3.7).collect();
        assert!(normalized_baseline_error(&scaled, &p).unwrap() < 1e-30);
        let a = [1.0, 0.0, 0.0, 0.0];
        let b = [0.0, 2.0, 1.0, 0.0];
        assert_eq!(normalized_baseline_error(&a, &b).unwrap(), 5.0);
        assert!(normalized_baseline_error(&[0.0; 4], &p).is_err());
        assert!(normalized_baseline_error(&[1.0; 3], &p).is_err());
    }

    #[test]
    fn baseline_error_scale_invariant() {
        let b = [0.3, 0.9, 0.2, 0.05, 0.7];
        let p = [0.1, 0.6, 0.1, 0.0, 0.2];
        let e = normalized_baseline_error(&b, &p).unwrap();
        for c in [1e-3, 0.5, 2.0, 1e4] {
            let bc: Vec<f64> = b.iter().map(|v| v * c).collect();
            let ec = normalized_baseline_error(&bc, &p).unwrap();
            assert!((ec - e).abs() <= 1e-14 * e.max(1e-300), "{ec} vs {e}");
        }
    }

    #[test]
    fn ridge_width_of_box_and_triangle() {
        let grid = make_height_grid(0.0, 10.0, 11).unwrap();
        let mut p = vec![0.0; 11];
        for v in &mut p[4..=7] {
            *v = 1.0;
        }
        let (peak, w) = canopy_ridge(&p, &grid, 2.0).unwrap();
        assert!((4..=7).contains(&peak));
        // crossings interpolated halfway to the zero neighbours
        assert!((w - 4.0).abs() < 1e-12, "{w}");
        let tri = [0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        let (peak, w) = canopy_ridge(&tri, &grid, 2.0).unwrap();
        assert_eq!(peak, 5);
        assert!((w - 2.0).abs() < 1e-12, "{w}");
        assert!(canopy_ridge(&[0.0; 11], &grid, 2.0).is_none());
    }

    #[test]
    fn pgm_and_csv_shapes() {
        let values = Array2::from_shape_fn((3, 4), |(a, z)| (a * 4 + z) as f64);
        let t = Tomogram::new(values, vec![0, 1, 2], "test").unwrap();
        let mut buf = Vec::new();
        let (lo, hi) = t.write_pgm(&mut buf).unwrap();
        assert_eq!((lo, hi), (0.0, 11.0));
        let header = b"P5\n3 4\n255\n";
        assert_eq!(&buf[..header.len()], header);
        let px = &buf[header.len()..];
        assert_eq!(px.len(), 12);
        // top image row is the highest height
        assert_eq!(px[0], (3.0f64 / 11.0 * 255.0).round() as u8);
        assert_eq!(px[11], (8.0f64 / 11.0 * 255.0).round() as u8);
        let grid = make_height_grid(0.0, 3.0, 4).unwrap();
        let mut csv = Vec::new();
        t.write_csv(&grid, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 13);
        assert!(Tomogram::new(Array2::from_elem((1, 2), -1.0), vec![0], "x").is_err());
    }

    fn small_scene(noiseless: bool) -> Scene {
        let grid = make_height_grid(-20.0, 40.0, 64).unwrap();
        let desc = SceneDescription {
            looks: 32,
            ..SceneDescription::default_boreal(12)
        };
        let geoms = geometry_ramp(12, 6.0, 25.0, 6, 0.25, 3).unwrap();
        if noiseless {
            simulate_scene_noiseless(&desc, &geoms, &grid).unwrap()
        } else {
            simulate_scene(&desc, &geoms, &grid, 9).unwrap()
        }
    }

    #[test]
    fn scene_is_deterministic_and_all_methods_agree_on_shape() {
        let s1 = small_scene(false);
        let s2 = small_scene(false);
        let net = init_network(&default_layer_sizes(64, 3), 0.01, 1).unwrap();
        let cfg = MethodConfig {
            weights: Some(net),
            cs: CsConfig {
                max_iter: 50,
                ..CsConfig::default()
            },
            ..MethodConfig::default()
        };
        for m in Method::ALL {
            let a = reconstruct_tomogram(&s1, m, &cfg).unwrap();
            let b = reconstruct_tomogram(&s2, m, &cfg).unwrap();
            assert_eq!(a.values().dim(), (12, 64));
            assert_eq!(a.to_bytes(), b.to_bytes(), "{}", m.name());
        }
        assert!(reconstruct_tomogram(&s1, Method::Network, &MethodConfig::default()).is_err());
    }

    #[test]
    fn noiseless_beamforming_tomogram_has_two_ridges() {
        let s = small_scene(true);
        let bf = reconstruct_tomogram(&s, Method::Beamforming, &MethodConfig::default()).unwrap();
        for c in 0..s.n_columns() {
            let col = bf.column(c);
            let max = col.iter().cloned().fold(0.0, f64::max);
            assert!(col.iter().all(|v| *v >= 0.0) && max > 0.0);
        }
        for v in s.truth.values() {
            assert!(*v >= 0.0);
        }
    }

    #[test]
    fn network_tomogram_rescales_by_trace() {
        let s = small_scene(false);
        let net = init_network(&default_layer_sizes(64, 3), 0.01, 4).unwrap();
        let cfg = MethodConfig {
            weights: Some(net.clone()),
            ..MethodConfig::default()
        };
        let t = reconstruct_tomogram(&s, Method::Network, &cfg).unwrap();
        for c in 0..s.n_columns() {
            let input = beamforming(s.correlations[c].matrix(), &s.steering[c]).unwrap().profile;
            let raw = crate::neuralnet::predict_profile(&net, &input, 1.0).unwrap();
            let scale = s.covariances[c].trace_scale();
            let lhs: f64 = t.column(c).iter().sum();
            let rhs = scale * raw.total();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }

    #[test]
    fn realizations_share_truth_and_differ_in_speckle() {
        let grid = make_height_grid(-20.0, 40.0, 64).unwrap();
        let g = synthesize_geometry(6, 10.0, 0.2, 1).unwrap();
        let params = SceneDescription::default_boreal(1).columns[0].clone();
        let set = speckle_realizations(
            &params,
            &g,
            &grid,
            32,
            0.1,
            5,
            &[Method::Beamforming, Method::Capon],
            &MethodConfig::default(),
            2,
        )
        .unwrap();
        assert_eq!(set.methods.len(), 2);
        let bf = &set.methods[0].1;
        assert_eq!(bf.len(), 5);
        assert_ne!(bf[0], bf[1]);
        let mut csv = Vec::new();
        set.write_csv(&grid, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 64 + 2 * 5 * 64);
    }

    #[test]
    fn mean_std_and_median() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
