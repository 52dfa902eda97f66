//! Height grids, vertical-wavenumber configurations and steering matrices.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ShapeBuilder};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TomoError};
use crate::kvtext::{fmt_exact, Document};

/// Uniformly spaced heights in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightGrid {
    z: Vec<f64>,
    z_min: f64,
    z_max: f64,
}

impl HeightGrid {
    pub fn new(z_min: f64, z_max: f64, n_z: usize) -> Result<Self> {
        if !(z_min.is_finite() && z_max.is_finite()) || z_min >= z_max {
            return Err(TomoError::invalid(format!(
                "height bounds must satisfy z_min < z_max (got {z_min}, {z_max})"
            )));
        }
        if n_z < 2 {
            return Err(TomoError::invalid(format!("height grid needs n_z >= 2, got {n_z}")));
        }
        let step = (z_max - z_min) / (n_z - 1) as f64;
        let mut z: Vec<f64> = (0..n_z).map(|i| z_min + step * i as f64).collect();
        z[n_z - 1] = z_max;
        Ok(HeightGrid { z, z_min, z_max })
    }

    /// Single-height "grid", only useful for steering-matrix corner cases.
    pub fn single(z: f64) -> Self {
        HeightGrid {
            z: vec![z],
            z_min: z,
            z_max: z,
        }
    }

    pub fn heights(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn spacing(&self) -> f64 {
        if self.z.len() < 2 {
            0.0
        } else {
            (self.z_max - self.z_min) / (self.z.len() - 1) as f64
        }
    }

    /// Index of the grid node closest to `z` (clamped to the grid).
    pub fn nearest_index(&self, z: f64) -> usize {
        if self.z.len() < 2 {
            return 0;
        }
        let pos = ((z - self.z_min) / self.spacing()).round();
        pos.clamp(0.0, (self.z.len() - 1) as f64) as usize
    }
}

pub fn make_height_grid(z_min: f64, z_max: f64, n_z: usize) -> Result<HeightGrid> {
    HeightGrid::new(z_min, z_max, n_z)
}

/// Vertical wavenumbers of the tracks, master track first at `kz = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionGeometry {
    kz: Vec<f64>,
    seed: u64,
}

impl AcquisitionGeometry {
    pub fn from_kz(kz: Vec<f64>, seed: u64) -> Result<Self> {
        if kz.len() < 2 {
            return Err(TomoError::invalid(format!("geometry needs >= 2 tracks, got {}", kz.len())));
        }
        if kz[0] != 0.0 {
            return Err(TomoError::invalid("master track must have kz = 0"));
        }
        if kz.iter().any(|k| !k.is_finite()) {
            return Err(TomoError::invalid("kz values must be finite"));
        }
        for i in 0..kz.len() {
            for j in (i + 1)..kz.len() {
                if kz[i] == kz[j] {
                    return Err(TomoError::invalid(format!("kz[{i}] and kz[{j}] coincide")));
                }
            }
        }
        Ok(AcquisitionGeometry { kz, seed })
    }

    pub fn kz(&self) -> &[f64] {
        &self.kz
    }

    pub fn n_tracks(&self) -> usize {
        self.kz.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn kz_span(&self) -> f64 {
        let (lo, hi) = self
            .kz
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| (lo.min(k), hi.max(k)));
        hi - lo
    }

    /// Rayleigh resolution `2π / span(kz)` in meters.
    pub fn vertical_resolution(&self) -> f64 {
        2.0 * PI / self.kz_span()
    }

    pub fn to_text(&self) -> String {
        let kz: Vec<String> = self.kz.iter().map(|&k| fmt_exact(k)).collect();
        format!(
            "# acquisition geometry, kz in rad/m\nn_tracks = {}\nkz = [{}]\nseed = {}\n",
            self.kz.len(),
            kz.join(", "),
            self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        doc.reject_unknown(&["n_tracks", "kz", "seed"])?;
        let kz = doc.f64_list("kz")?.ok_or_else(|| TomoError::Config {
            line: 0,
            key: "kz".into(),
            message: "missing".into(),
        })?;
        if let Some(n) = doc.usize("n_tracks")? {
            if n != kz.len() {
                return Err(TomoError::Config {
                    line: doc.line_of("n_tracks"),
                    key: "n_tracks".into(),
                    message: format!("declares {n} tracks but kz has {}", kz.len()),
                });
            }
        }
        let seed = doc.u64("seed")?.unwrap_or(0);
        AcquisitionGeometry::from_kz(kz, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Nominally uniform wavenumbers on `[0, 2π/vertical_resolution]` with the
/// interior tracks jittered by up to `perturbation` times the nominal spacing.
/// The first and last tracks are not jittered, so the span is exact.
pub fn synthesize_geometry(
    n_tracks: usize,
    vertical_resolution: f64,
    perturbation: f64,
    seed: u64,
) -> Result<AcquisitionGeometry> {
    if n_tracks < 2 {
        return Err(TomoError::invalid(format!("need >= 2 tracks, got {n_tracks}")));
    }
    if !(vertical_resolution > 0.0 && vertical_resolution.is_finite()) {
        return Err(TomoError::invalid("vertical resolution must be positive"));
    }
    if !(0.0..0.5).contains(&perturbation) {
        return Err(TomoError::invalid("perturbation must lie in [0, 0.5)"));
    }
    let span = 2.0 * PI / vertical_resolution;
    let spacing = span / (n_tracks - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kz = (0..n_tracks)
        .map(|n| {
            let nominal = spacing * n as f64;
            if n == 0 || n == n_tracks - 1 || perturbation == 0.0 {
                nominal
            } else {
                nominal + rng.random_range(-perturbation..=perturbation) * spacing
            }
        })
        .collect();
    AcquisitionGeometry::from_kz(kz, seed)
}

/// One geometry per range column, resolution ramping linearly from `near` to
/// `far` meters. Column `c` uses seed `seed + c`.
pub fn geometry_ramp(
    n_columns: usize,
    near: f64,
    far: f64,
    n_tracks: usize,
    perturbation: f64,
    seed: u64,
) -> Result<Vec<AcquisitionGeometry>> {
    if n_columns == 0 {
        return Err(TomoError::invalid("geometry ramp needs at least one column"));
    }
    (0..n_columns)
        .map(|c| {
            let t = if n_columns == 1 { 0.0 } else { c as f64 / (n_columns - 1) as f64 };
            synthesize_geometry(n_tracks, near + t * (far - near), perturbation, seed.wrapping_add(c as u64))
        })
        .collect()
}

pub fn steering_vector(geom: &AcquisitionGeometry, z: f64) -> Vec<Complex64> {
    geom.kz.iter().map(|&k| Complex64::from_polar(1.0, k * z)).collect()
}

/// `N × N_z` matrix whose column `i` is the steering vector at height `z_i`.
/// Stored column-major so each steering vector is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    a: Array2<Complex64>,
}

impl SteeringMatrix {
    pub fn new(geom: &AcquisitionGeometry, grid: &HeightGrid) -> Self {
        let n = geom.n_tracks();
        let mut data = Vec::with_capacity(n * grid.len());
        for &z in grid.heights() {
            data.extend(geom.kz.iter().map(|&k| Complex64::from_polar(1.0, k * z)));
        }
        let a = Array2::from_shape_vec((n, grid.len()).f(), data).expect("shape matches data");
        SteeringMatrix { a }
    }

    pub fn n_tracks(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_heights(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.a
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, Complex64> {
        self.a.column(i)
    }

    /// Contiguous slice view of column `i`.
    pub fn column_slice(&self, i: usize) -> &[Complex64] {
        let n = self.a.nrows();
        let all = self.a.as_slice_memory_order().expect("column-major storage");
        &all[i * n..(i + 1) * n]
    }
}

pub fn steering_matrix(geom: &AcquisitionGeometry, grid: &HeightGrid) -> SteeringMatrix {
    SteeringMatrix::new(geom, grid)
}
