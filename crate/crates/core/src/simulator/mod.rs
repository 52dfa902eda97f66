//! Two-Gaussian forest profiles, the interferometric covariance model and
//! speckled multi-look measurements.

mod dataset;

pub use dataset::{build_dataset, split_indices, Dataset, Example};

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TomoError};
use crate::geometry::{HeightGrid, SteeringMatrix};
use crate::linalg::{ensure_square, CMatrix};

/// Nonnegative vertical power density over the height grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectivityProfile {
    p: Vec<f64>,
}

impl ReflectivityProfile {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(i) = p.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(TomoError::invalid(format!(
                "reflectivity must be finite and nonnegative (entry {i} = {})",
                p[i]
            )));
        }
        Ok(ReflectivityProfile { p })
    }

    pub fn zeros(n: usize) -> Self {
        ReflectivityProfile { p: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn into_values(self) -> Vec<f64> {
        self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Ground and canopy Gaussian parameters (heights and widths in meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMixtureParams {
    pub amp_ground: f64,
    pub amp_canopy: f64,
    pub mu_ground: f64,
    pub mu_canopy: f64,
    pub sigma_ground: f64,
    pub sigma_canopy: f64,
}

impl GaussianMixtureParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.amp_ground,
            self.amp_canopy,
            self.mu_ground,
            self.mu_canopy,
            self.sigma_ground,
            self.sigma_canopy,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(TomoError::invalid("mixture parameters must be finite"));
        }
        if self.amp_ground < 0.0 || self.amp_canopy < 0.0 {
            return Err(TomoError::invalid("mixture amplitudes must be nonnegative"));
        }
        if self.sigma_ground <= 0.0 || self.sigma_canopy <= 0.0 {
            return Err(TomoError::invalid("mixture widths must be positive"));
        }
        if self.mu_ground >= self.mu_canopy {
            return Err(TomoError::invalid("ground must lie below canopy"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub const fn point(v: f64) -> Self {
        Range { min: v, max: v }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestPreset {
    Boreal,
    Tropical,
}

impl ForestPreset {
    pub fn name(self) -> &'static str {
        match self {
            ForestPreset::Boreal => "boreal",
            ForestPreset::Tropical => "tropical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "boreal" => Some(ForestPreset::Boreal),
            "tropical" => Some(ForestPreset::Tropical),
            _ => None,
        }
    }
}

/// Uniform prior over mixture parameters plus the thermal noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePrior {
    pub amp_ground: Range,
    pub amp_canopy: Range,
    pub mu_ground: Range,
    pub mu_canopy: Range,
    pub sigma_ground: Range,
    pub sigma_canopy: Range,
    pub noise_power: f64,
    pub preset: ForestPreset,
}

/// Noise power giving 10 dB per-channel SNR against unit total signal power.
pub const DEFAULT_NOISE_POWER: f64 = 0.1;

impl ProfilePrior {
    /// Both amplitudes on `[0.1, 1]`, so the canopy/ground ratio spans `[0.1, 10]`.
    pub fn boreal() -> Self {
        ProfilePrior {
            amp_ground: Range::new(0.1, 1.0),
            amp_canopy: Range::new(0.1, 1.0),
            mu_ground: Range::new(-3.0, 3.0),
            mu_canopy: Range::new(8.0, 30.0),
            sigma_ground: Range::new(0.5, 5.0),
            sigma_canopy: Range::new(0.5, 5.0),
            noise_power: DEFAULT_NOISE_POWER,
            preset: ForestPreset::Boreal,
        }
    }

    pub fn tropical() -> Self {
        ProfilePrior {
            mu_canopy: Range::new(15.0, 45.0),
            sigma_ground: Range::new(1.0, 8.0),
            sigma_canopy: Range::new(1.0, 8.0),
            preset: ForestPreset::Tropical,
            ..ProfilePrior::boreal()
        }
    }

    pub fn from_preset(preset: ForestPreset) -> Self {
        match preset {
            ForestPreset::Boreal => Self::boreal(),
            ForestPreset::Tropical => Self::tropical(),
        }
    }

    /// Degenerate prior that always yields `params`.
    pub fn point(params: GaussianMixtureParams, noise_power: f64) -> Self {
        ProfilePrior {
            amp_ground: Range::point(params.amp_ground),
            amp_canopy: Range::point(params.amp_canopy),
            mu_ground: Range::point(params.mu_ground),
            mu_canopy: Range::point(params.mu_canopy),
            sigma_ground: Range::point(params.sigma_ground),
            sigma_canopy: Range::point(params.sigma_canopy),
            noise_power,
            preset: ForestPreset::Boreal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("amp_ground", self.amp_ground),
            ("amp_canopy", self.amp_canopy),
            ("mu_ground", self.mu_ground),
            ("mu_canopy", self.mu_canopy),
            ("sigma_ground", self.sigma_ground),
            ("sigma_canopy", self.sigma_canopy),
        ];
        for (name, r) in fields {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min > r.max {
                return Err(TomoError::invalid(format!("prior range {name} has min > max")));
            }
        }
        if self.amp_ground.min < 0.0 || self.amp_canopy.min < 0.0 {
            return Err(TomoError::invalid("prior amplitudes must be nonnegative"));
        }
        if self.sigma_ground.min <= 0.0 || self.sigma_canopy.min <= 0.0 {
            return Err(TomoError::invalid("prior widths must be positive"));
        }
        if self.mu_ground.min >= self.mu_canopy.max {
            return Err(TomoError::invalid(
                "mu ranges make ground-below-canopy ordering impossible",
            ));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(TomoError::invalid("noise power must be nonnegative"));
        }
        Ok(())
    }
}

const MAX_ORDERING_REDRAWS: usize = 100_000;

/// Draws every parameter uniformly in its range, redrawing the heights until
/// the ground lies below the canopy.
pub fn sample_profile_params<R: Rng + ?Sized>(
    prior: &ProfilePrior,
    rng: &mut R,
) -> Result<GaussianMixtureParams> {
    prior.validate()?;
    let amp_ground = prior.amp_ground.sample(rng);
    let amp_canopy = prior.amp_canopy.sample(rng);
    let sigma_ground = prior.sigma_ground.sample(rng);
    let sigma_canopy = prior.sigma_canopy.sample(rng);
    for _ in 0..MAX_ORDERING_REDRAWS {
        let mu_ground = prior.mu_ground.sample(rng);
        let mu_canopy = prior.mu_canopy.sample(rng);
        if mu_ground < mu_canopy {
            return Ok(GaussianMixtureParams {
                amp_ground,
                amp_canopy,
                mu_ground,
                mu_canopy,
                sigma_ground,
                sigma_canopy,
            });
        }
    }
    Err(TomoError::invalid("could not draw ordered ground/canopy heights from prior"))
}

/// Unnormalized two-Gaussian density at the grid heights. Widths are clamped
/// to half a grid spacing.
pub fn mixture_density(params: &GaussianMixtureParams, grid: &HeightGrid) -> Vec<f64> {
    let floor = 0.5 * grid.spacing();
    let sg = params.sigma_ground.max(floor);
    let sc = params.sigma_canopy.max(floor);
    grid.heights()
        .iter()
        .map(|&z| {
            let dg = (z - params.mu_ground) / sg;
            let dc = (z - params.mu_canopy) / sc;
            params.amp_ground * (-0.5 * dg * dg).exp() + params.amp_canopy * (-0.5 * dc * dc).exp()
        })
        .collect()
}

/// Mixture density normalized to unit total power. An all-zero density
/// (both amplitudes zero) is returned unchanged.
pub fn render_profile(params: &GaussianMixtureParams, grid: &HeightGrid) -> ReflectivityProfile {
    let mut p = mixture_density(params, grid);
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        p.iter_mut().for_each(|v| *v /= total);
    }
    ReflectivityProfile { p }
}

fn check_profile_len(a: &SteeringMatrix, p: &ReflectivityProfile) -> Result<()> {
    if a.n_heights() != p.len() {
        return Err(TomoError::dim(format!(
            "steering matrix has {} heights but profile has {}",
            a.n_heights(),
            p.len()
        )));
    }
    Ok(())
}

/// `A diag(p) A^H + noise_power · I`.
pub fn true_covariance(a: &SteeringMatrix, p: &ReflectivityProfile, noise_power: f64) -> Result<CMatrix> {
    check_profile_len(a, p)?;
    if !(noise_power >= 0.0) {
        return Err(TomoError::invalid("noise power must be nonnegative"));
    }
    let n = a.n_tracks();
    let mut sigma = CMatrix::zeros((n, n));
    for (i, &pi) in p.values().iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let col = a.column_slice(i);
        for r in 0..n {
            let ar = col[r] * pi;
            for c in r..n {
                sigma[[r, c]] += ar * col[c].conj();
            }
        }
    }
    for r in 0..n {
        sigma[[r, r]] = Complex64::new(sigma[[r, r]].re + noise_power, 0.0);
        for c in (r + 1)..n {
            sigma[[c, r]] = sigma[[r, c]].conj();
        }
    }
    Ok(sigma)
}

/// Circular complex Gaussian sample with `E|x|^2 = variance`.
#[inline]
pub fn circular_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `L` looks `y_l = A diag(√p) w_l + ε_l` as an `L × N` array (one look per row).
pub fn draw_speckle_stack<R: Rng + ?Sized>(
    a: &SteeringMatrix,
    p: &ReflectivityProfile,
    noise_power: f64,
    looks: usize,
    rng: &mut R,
) -> Result<Array2<Complex64>> {
    check_profile_len(a, p)?;
    if looks == 0 {
        return Err(TomoError::invalid("need at least one look"));
    }
    if !(noise_power >= 0.0) {
        return Err(TomoError::invalid("noise power must be nonnegative"));
    }
    let n = a.n_tracks();
    let amplitude: Vec<f64> = p.values().iter().map(|v| v.sqrt()).collect();
    let mut stack = Array2::<Complex64>::zeros((looks, n));
    for mut y in stack.rows_mut() {
        for (i, &amp) in amplitude.iter().enumerate() {
            let w = circular_gaussian(rng, 1.0) * amp;
            for (yn, an) in y.iter_mut().zip(a.column_slice(i)) {
                *yn += w * an;
            }
        }
        for yn in y.iter_mut() {
            *yn += circular_gaussian(rng, noise_power);
        }
    }
    Ok(stack)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    matrix: CMatrix,
    looks: usize,
}

impl SampleCovariance {
    /// Wraps an externally supplied covariance (e.g. the exact model matrix).
    pub fn from_matrix(matrix: CMatrix, looks: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(TomoError::dim("covariance must be square and nonempty"));
        }
        crate::linalg::ensure_hermitian(&matrix, "covariance")?;
        Ok(SampleCovariance { matrix, looks })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn looks(&self) -> usize {
        self.looks
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// `Tr(Σ̂) / N`, the intensity used to rescale normalized reconstructions.
    pub fn trace_scale(&self) -> f64 {
        crate::linalg::trace_re(&self.matrix) / self.n() as f64
    }

    pub fn scaled(&self, c: f64) -> Self {
        SampleCovariance {
            matrix: self.matrix.mapv(|v| v * c),
            looks: self.looks,
        }
    }
}

/// `Σ̂ = (1/L) Σ_l y_l y_l^H` over the rows of `stack`.
pub fn sample_covariance(stack: &Array2<Complex64>) -> Result<SampleCovariance> {
    let (looks, n) = stack.dim();
    if looks == 0 || n == 0 {
        return Err(TomoError::invalid("empty measurement stack"));
    }
    let mut m = CMatrix::zeros((n, n));
    for y in stack.rows() {
        for r in 0..n {
            let yr = y[r];
            for c in r..n {
                m[[r, c]] += yr * y[c].conj();
            }
        }
    }
    let inv = 1.0 / looks as f64;
    for r in 0..n {
        m[[r, r]] = Complex64::new(m[[r, r]].re * inv, 0.0);
        for c in (r + 1)..n {
            m[[r, c]] *= inv;
            m[[c, r]] = m[[r, c]].conj();
        }
    }
    Ok(SampleCovariance { matrix: m, looks })
}

/// Unit-diagonal correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCorrelation {
    matrix: CMatrix,
}

impl SampleCorrelation {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `R̂_mn = Σ̂_mn / √(Σ̂_mm Σ̂_nn)`.
pub fn correlation_normalize(cov: &SampleCovariance) -> Result<SampleCorrelation> {
    let n = cov.n();
    ensure_square(&cov.matrix, n, "covariance")?;
    let q: Vec<f64> = (0..n)
        .map(|i| {
            let d = cov.matrix[[i, i]].re;
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d.sqrt())
            } else {
                Err(TomoError::invalid(format!("degenerate channel {i}: diagonal {d}")))
            }
        })
        .collect::<Result<_>>()?;
    let mut r = CMatrix::zeros((n, n));
    for i in 0..n {
        r[[i, i]] = Complex64::new(1.0, 0.0);
        for j in (i + 1)..n {
            let v = cov.matrix[[i, j]] * (q[i] * q[j]);
            r[[i, j]] = v;
            r[[j, i]] = v.conj();
        }
    }
    Ok(SampleCorrelation { matrix: r })
}
