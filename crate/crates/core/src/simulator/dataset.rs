//! Paired (beamforming input, normalized target) training sets and their
//! on-disk container.
//!
//! Binary layout, all little-endian:
//!
//! | field            | type              |
//! |------------------|-------------------|
//! | magic            | `b"TSDS"`         |
//! | version          | u32 (= 1)         |
//! | count            | u64               |
//! | n_tracks         | u64               |
//! | n_z              | u64               |
//! | looks            | u64               |
//! | seed             | u64               |
//!
//! followed by `count` records of `n_z` input values, `n_z` target values,
//! the trace scale and the geometry index, each stored as f64.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    correlation_normalize, draw_speckle_stack, render_profile, sample_covariance, sample_profile_params,
    ProfilePrior,
};
use crate::error::{Result, TomoError};
use crate::geometry::{steering_matrix, AcquisitionGeometry, HeightGrid};
use crate::spectral::beamforming;

const MAGIC: &[u8; 4] = b"TSDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Beamforming profile of the unit-diagonal sample correlation.
    pub input: Vec<f64>,
    /// Ground-truth profile normalized to unit sum.
    pub target: Vec<f64>,
    /// `Tr(Σ̂) / N` of the simulated measurement.
    pub trace_scale: f64,
    pub geometry_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_tracks: usize,
    pub n_z: usize,
    pub looks: usize,
    pub seed: u64,
    pub examples: Vec<Example>,
}

/// Deterministic permutation of `0..count` split into (train, validation).
pub fn split_indices(count: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SEED_TWEAK);
    idx.shuffle(&mut rng);
    let n_train = ((count as f64) * train_fraction).round() as usize;
    let n_train = n_train.min(count);
    let val = idx.split_off(n_train);
    (idx, val)
}

// Keeps the split permutation independent of the per-example streams.
const SPLIT_SEED_TWEAK: u64 = 0x5eed_5011_7000_0001;

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Train/validation indices from the dataset's own seed.
    pub fn split(&self, train_fraction: f64) -> (Vec<usize>, Vec<usize>) {
        split_indices(self.len(), train_fraction, self.seed)
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [self.len(), self.n_tracks, self.n_z, self.looks] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for ex in &self.examples {
            for v in ex.input.iter().chain(&ex.target) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&ex.trace_scale.to_le_bytes())?;
            w.write_all(&(ex.geometry_index as f64).to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TomoError::Format("not a dataset file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(TomoError::Format(format!("unsupported dataset version {version}")));
        }
        let count = read_u64(&mut r)? as usize;
        let n_tracks = read_u64(&mut r)? as usize;
        let n_z = read_u64(&mut r)? as usize;
        let looks = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let mut examples = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let input = (0..n_z).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            let target = (0..n_z).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
            let trace_scale = read_f64(&mut r)?;
            let gi = read_f64(&mut r)?;
            if !(gi >= 0.0 && gi.fract() == 0.0) {
                return Err(TomoError::Format(format!("invalid geometry index {gi}")));
            }
            examples.push(Example {
                input,
                target,
                trace_scale,
                geometry_index: gi as usize,
            });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(TomoError::Format("trailing bytes after last record".into()));
        }
        Ok(Dataset {
            n_tracks,
            n_z,
            looks,
            seed,
            examples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path).map_err(|e| {
            TomoError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?)
    }

    /// Wide CSV: one row per (example, series) with the `n_z` values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        write!(w, "example,geometry_index,trace_scale,series")?;
        for i in 0..self.n_z {
            write!(w, ",v{i}")?;
        }
        writeln!(w)?;
        for (k, ex) in self.examples.iter().enumerate() {
            for (series, values) in [("input", &ex.input), ("target", &ex.target)] {
                write!(w, "{k},{},{},{series}", ex.geometry_index, ex.trace_scale)?;
                for v in values {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> TomoError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        TomoError::Format("file truncated".into())
    } else {
        TomoError::Io(e)
    }
}

/// Simulates `count` examples. Example `k` draws from its own ChaCha stream
/// `(seed, k)`, so the result does not depend on the worker count.
pub fn build_dataset(
    count: usize,
    prior: &ProfilePrior,
    geometries: &[AcquisitionGeometry],
    grid: &HeightGrid,
    looks: usize,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(TomoError::invalid("dataset needs at least one example"));
    }
    if looks == 0 {
        return Err(TomoError::invalid("need at least one look"));
    }
    if geometries.is_empty() {
        return Err(TomoError::invalid("need at least one acquisition geometry"));
    }
    let n_tracks = geometries[0].n_tracks();
    if geometries.iter().any(|g| g.n_tracks() != n_tracks) {
        return Err(TomoError::invalid("all geometries must have the same track count"));
    }
    prior.validate()?;
    let steering: Vec<_> = geometries.iter().map(|g| steering_matrix(g, grid)).collect();
    let examples = (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let params = sample_profile_params(prior, &mut rng)?;
            let target = render_profile(&params, grid);
            let geometry_index = rand::Rng::random_range(&mut rng, 0..steering.len());
            let a = &steering[geometry_index];
            let stack = draw_speckle_stack(a, &target, prior.noise_power, looks, &mut rng)?;
            let cov = sample_covariance(&stack)?;
            let corr = correlation_normalize(&cov)?;
            let input = beamforming(corr.matrix(), a)?.profile;
            Ok(Example {
                input,
                target: target.into_values(),
                trace_scale: cov.trace_scale(),
                geometry_index,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        n_tracks,
        n_z: grid.len(),
        looks,
        seed,
        examples,
    })
}
