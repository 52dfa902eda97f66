//! Orthonormal periodized wavelet bases used as the sparsifying dictionary.
//!
//! Coefficients are laid out coarse to fine: `[a_L | d_L | d_{L-1} | … | d_1]`.

use std::f64::consts::SQRT_2;

use ndarray::Array2;

use crate::error::{Result, TomoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveletFamily {
    /// The identity dictionary (coefficients are the profile itself).
    Identity,
    Haar,
    /// Daubechies with two vanishing moments (4 taps).
    Db2,
}

impl WaveletFamily {
    pub fn name(self) -> &'static str {
        match self {
            WaveletFamily::Identity => "identity",
            WaveletFamily::Haar => "haar",
            WaveletFamily::Db2 => "db2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(WaveletFamily::Identity),
            "haar" => Some(WaveletFamily::Haar),
            "db2" => Some(WaveletFamily::Db2),
            _ => None,
        }
    }

    fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletFamily::Identity => vec![1.0],
            WaveletFamily::Haar => vec![1.0 / SQRT_2, 1.0 / SQRT_2],
            WaveletFamily::Db2 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }
}

/// `N_z × N_z` orthonormal dictionary with fast analysis/synthesis.
#[derive(Debug, Clone)]
pub struct WaveletBasis {
    n: usize,
    family: WaveletFamily,
    level: usize,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl WaveletBasis {
    /// `level = None` picks the deepest decomposition the size allows.
    pub fn new(n: usize, family: WaveletFamily, level: Option<usize>) -> Result<Self> {
        if n == 0 {
            return Err(TomoError::invalid("wavelet basis size must be positive"));
        }
        let low = family.lowpass();
        let taps = low.len();
        let high: Vec<f64> = (0..taps)
            .map(|t| {
                let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                sign * low[taps - 1 - t]
            })
            .collect();
        let max_level = if family == WaveletFamily::Identity {
            0
        } else {
            let mut lvl = 0;
            let mut m = n;
            while m % 2 == 0 && m >= taps.max(2) {
                m /= 2;
                lvl += 1;
            }
            lvl
        };
        let level = match (family, level) {
            (WaveletFamily::Identity, _) => 0,
            (_, None) => {
                if family == WaveletFamily::Haar && !n.is_power_of_two() {
                    return Err(TomoError::invalid(format!(
                        "full-depth Haar basis needs a power-of-two size, got {n}"
                    )));
                }
                max_level
            }
            (_, Some(l)) if l <= max_level => l,
            (_, Some(l)) => {
                return Err(TomoError::invalid(format!(
                    "level {l} unsupported for size {n} ({} allows at most {max_level})",
                    family.name()
                )))
            }
        };
        if family != WaveletFamily::Identity && level == 0 {
            return Err(TomoError::invalid(format!("size {n} too small for {}", family.name())));
        }
        Ok(WaveletBasis {
            n,
            family,
            level,
            low,
            high,
        })
    }

    pub fn haar(n: usize) -> Result<Self> {
        Self::new(n, WaveletFamily::Haar, None)
    }

    pub fn identity(n: usize) -> Self {
        Self::new(n, WaveletFamily::Identity, None).expect("identity basis of positive size")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn family(&self) -> WaveletFamily {
        self.family
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `Ψᵀ p`.
    pub fn analyze(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.n, "analysis input length");
        let mut out = p.to_vec();
        let mut tmp = vec![0.0; self.n];
        let mut m = self.n;
        for _ in 0..self.level {
            let half = m / 2;
            for k in 0..half {
                let (mut a, mut d) = (0.0, 0.0);
                for (t, (&h, &g)) in self.low.iter().zip(&self.high).enumerate() {
                    let x = out[(2 * k + t) % m];
                    a += h * x;
                    d += g * x;
                }
                tmp[k] = a;
                tmp[half + k] = d;
            }
            out[..m].copy_from_slice(&tmp[..m]);
            m = half;
        }
        out
    }

    /// `Ψ α`.
    pub fn synthesize(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.n, "synthesis input length");
        let mut out = alpha.to_vec();
        let mut tmp = vec![0.0; self.n];
        let mut m = self.n >> self.level;
        for _ in 0..self.level {
            let full = 2 * m;
            tmp[..full].iter_mut().for_each(|v| *v = 0.0);
            for k in 0..m {
                let a = out[k];
                let d = out[m + k];
                for (t, (&h, &g)) in self.low.iter().zip(&self.high).enumerate() {
                    tmp[(2 * k + t) % full] += h * a + g * d;
                }
            }
            out[..full].copy_from_slice(&tmp[..full]);
            m = full;
        }
        out
    }

    /// Dense `Ψ`; column `j` is the synthesis of the `j`-th unit coefficient.
    pub fn matrix(&self) -> Array2<f64> {
        let mut psi = Array2::zeros((self.n, self.n));
        let mut e = vec![0.0; self.n];
        for j in 0..self.n {
            e[j] = 1.0;
            for (i, v) in self.synthesize(&e).into_iter().enumerate() {
                psi[[i, j]] = v;
            }
            e[j] = 0.0;
        }
        psi
    }
}
