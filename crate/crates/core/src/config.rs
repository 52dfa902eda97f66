//! Run configuration shared by every command: one sectioned text file, see
//! `configs/boreal.cfg`. Missing keys take the defaults below; unknown keys
//! and out-of-range values are rejected with the offending line and key.

use std::path::{Path, PathBuf};

use crate::csinvert::{CsConfig, DEFAULT_MAX_ITER, DEFAULT_REL_TOL};
use crate::error::{Result, TomoError};
use crate::evalharness::{SceneDescription, DEFAULT_SCENE_LOOKS};
use crate::geometry::{geometry_ramp, make_height_grid, AcquisitionGeometry, HeightGrid};
use crate::kvtext::Document;
use crate::neuralnet::{default_layer_sizes, validate_layer_sizes, Architecture, TrainingConfig, DEFAULT_LATENT, DEFAULT_LEAKY_SLOPE};
use crate::simulator::{ForestPreset, ProfilePrior, Range};
use crate::spectral::DEFAULT_CAPON_LOADING;
use crate::wavelet::{WaveletBasis, WaveletFamily};

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySection {
    pub n_tracks: usize,
    /// Number of geometries in the near-to-far ramp; also the scene width.
    pub columns: usize,
    pub resolution_near: f64,
    pub resolution_far: f64,
    pub perturbation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub z_min: f64,
    pub z_max: f64,
    pub n_z: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSection {
    pub count: usize,
    pub looks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsSection {
    pub solver: CsConfig,
    pub wavelet: WaveletFamily,
    pub level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSection {
    pub looks: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub dataset: PathBuf,
    pub weights: PathBuf,
    pub history: PathBuf,
    pub tomograms: PathBuf,
    pub sweep: PathBuf,
    pub benchmark: PathBuf,
    pub export: PathBuf,
    pub train_time: PathBuf,
}

impl OutputSection {
    fn under(dir: &Path) -> Self {
        OutputSection {
            dir: dir.to_path_buf(),
            dataset: dir.join("dataset.bin"),
            weights: dir.join("weights.bin"),
            history: dir.join("loss.csv"),
            tomograms: dir.join("tomograms"),
            sweep: dir.join("sweep.csv"),
            benchmark: dir.join("benchmark.csv"),
            export: dir.join("dataset.csv"),
            train_time: dir.join("train_time.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub grid: GridSection,
    pub prior: ProfilePrior,
    pub simulation: SimulationSection,
    pub architecture: Architecture,
    pub training: TrainingConfig,
    pub cs: CsSection,
    pub capon_loading: f64,
    pub scene: SceneSection,
    pub sweep: SweepSection,
    pub benchmark_repetitions: usize,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(ForestPreset::Boreal)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "geometry.n_tracks",
    "geometry.columns",
    "geometry.resolution_near",
    "geometry.resolution_far",
    "geometry.perturbation",
    "geometry.seed",
    "grid.z_min",
    "grid.z_max",
    "grid.n_z",
    "prior.preset",
    "prior.amp_ground",
    "prior.amp_canopy",
    "prior.mu_ground",
    "prior.mu_canopy",
    "prior.sigma_ground",
    "prior.sigma_canopy",
    "prior.noise_power",
    "simulation.count",
    "simulation.looks",
    "simulation.seed",
    "network.latent",
    "network.layer_sizes",
    "network.leaky_slope",
    "training.epochs",
    "training.batch_size",
    "training.learning_rate",
    "training.split",
    "training.seed",
    "training.beta1",
    "training.beta2",
    "training.epsilon",
    "cs.lambda",
    "cs.max_iter",
    "cs.rel_tol",
    "cs.wavelet",
    "cs.level",
    "cs.nonneg",
    "capon.loading",
    "scene.looks",
    "scene.seed",
    "sweep.sizes",
    "sweep.repeats",
    "sweep.epochs",
    "benchmark.repetitions",
    "output.dir",
    "output.dataset",
    "output.weights",
    "output.history",
    "output.tomograms",
    "output.sweep",
    "output.benchmark",
    "output.export",
    "output.train_time",
];

fn bad(doc: &Document, key: &str, message: impl Into<String>) -> TomoError {
    TomoError::Config {
        line: doc.line_of(key),
        key: key.to_string(),
        message: message.into(),
    }
}

fn require(doc: &Document, key: &str, ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(bad(doc, key, message))
    }
}

fn range(doc: &Document, key: &str, default: Range) -> Result<Range> {
    match doc.f64_list(key)? {
        None => Ok(default),
        Some(v) if v.len() == 2 && v[0] <= v[1] => Ok(Range::new(v[0], v[1])),
        Some(_) => Err(bad(doc, key, "expected `[min, max]` with min <= max")),
    }
}

impl RunConfig {
    pub fn for_preset(preset: ForestPreset) -> Self {
        let (near, far) = match preset {
            ForestPreset::Boreal => (6.0, 25.0),
            ForestPreset::Tropical => (14.0, 16.0),
        };
        let n_z = 512;
        RunConfig {
            geometry: GeometrySection {
                n_tracks: 6,
                columns: 200,
                resolution_near: near,
                resolution_far: far,
                perturbation: 0.25,
                seed: 7,
            },
            grid: match preset {
                ForestPreset::Boreal => GridSection {
                    z_min: -20.0,
                    z_max: 40.0,
                    n_z,
                },
                ForestPreset::Tropical => GridSection {
                    z_min: -20.0,
                    z_max: 60.0,
                    n_z,
                },
            },
            prior: ProfilePrior::from_preset(preset),
            simulation: SimulationSection {
                count: 10_000,
                looks: 100,
                seed: 1,
            },
            architecture: Architecture::default_for(n_z, DEFAULT_LATENT),
            training: TrainingConfig::default(),
            cs: CsSection {
                solver: CsConfig::default(),
                wavelet: WaveletFamily::Haar,
                level: None,
            },
            capon_loading: DEFAULT_CAPON_LOADING,
            scene: SceneSection {
                looks: DEFAULT_SCENE_LOOKS,
                seed: 11,
            },
            sweep: SweepSection {
                sizes: vec![3, 4, 5, 6, 8, 10, 15, 20],
                repeats: 5,
                epochs: 200,
            },
            benchmark_repetitions: 3,
            output: OutputSection::under(Path::new("out")),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        doc.reject_unknown(KNOWN_KEYS)?;
        let preset = match doc.string("prior.preset")? {
            None => ForestPreset::Boreal,
            Some(s) => ForestPreset::parse(&s).ok_or_else(|| bad(&doc, "prior.preset", format!("unknown preset `{s}`")))?,
        };
        let mut c = RunConfig::for_preset(preset);

        let g = &mut c.geometry;
        g.n_tracks = doc.usize("geometry.n_tracks")?.unwrap_or(g.n_tracks);
        g.columns = doc.usize("geometry.columns")?.unwrap_or(g.columns);
        g.resolution_near = doc.f64("geometry.resolution_near")?.unwrap_or(g.resolution_near);
        g.resolution_far = doc.f64("geometry.resolution_far")?.unwrap_or(g.resolution_far);
        g.perturbation = doc.f64("geometry.perturbation")?.unwrap_or(g.perturbation);
        g.seed = doc.u64("geometry.seed")?.unwrap_or(g.seed);
        require(&doc, "geometry.n_tracks", g.n_tracks >= 2, "need at least 2 tracks")?;
        require(&doc, "geometry.columns", g.columns >= 1, "need at least one column")?;
        require(&doc, "geometry.resolution_near", g.resolution_near > 0.0, "must be positive")?;
        require(&doc, "geometry.resolution_far", g.resolution_far > 0.0, "must be positive")?;
        require(&doc, "geometry.perturbation", (0.0..0.5).contains(&g.perturbation), "must lie in [0, 0.5)")?;

        let gr = &mut c.grid;
        gr.z_min = doc.f64("grid.z_min")?.unwrap_or(gr.z_min);
        gr.z_max = doc.f64("grid.z_max")?.unwrap_or(gr.z_max);
        gr.n_z = doc.usize("grid.n_z")?.unwrap_or(gr.n_z);
        require(&doc, "grid.z_max", gr.z_min < gr.z_max, "z_max must exceed z_min")?;
        require(&doc, "grid.n_z", gr.n_z >= 2, "need at least 2 heights")?;

        let p = &mut c.prior;
        p.amp_ground = range(&doc, "prior.amp_ground", p.amp_ground)?;
        p.amp_canopy = range(&doc, "prior.amp_canopy", p.amp_canopy)?;
        p.mu_ground = range(&doc, "prior.mu_ground", p.mu_ground)?;
        p.mu_canopy = range(&doc, "prior.mu_canopy", p.mu_canopy)?;
        p.sigma_ground = range(&doc, "prior.sigma_ground", p.sigma_ground)?;
        p.sigma_canopy = range(&doc, "prior.sigma_canopy", p.sigma_canopy)?;
        p.noise_power = doc.f64("prior.noise_power")?.unwrap_or(p.noise_power);
        p.validate().map_err(|e| bad(&doc, "prior", e.to_string()))?;

        let s = &mut c.simulation;
        s.count = doc.usize("simulation.count")?.unwrap_or(s.count);
        s.looks = doc.usize("simulation.looks")?.unwrap_or(s.looks);
        s.seed = doc.u64("simulation.seed")?.unwrap_or(s.seed);
        require(&doc, "simulation.count", s.count >= 1, "need at least one example")?;
        require(&doc, "simulation.looks", s.looks >= 1, "need at least one look")?;

        let latent = doc.usize("network.latent")?.unwrap_or(DEFAULT_LATENT);
        c.architecture = Architecture {
            layer_sizes: doc
                .usize_list("network.layer_sizes")?
                .unwrap_or_else(|| default_layer_sizes(c.grid.n_z, latent)),
            leaky_slope: doc.f64("network.leaky_slope")?.unwrap_or(DEFAULT_LEAKY_SLOPE),
        };
        let key = if doc.get("network.layer_sizes").is_some() { "network.layer_sizes" } else { "network.latent" };
        validate_layer_sizes(&c.architecture.layer_sizes).map_err(|e| bad(&doc, key, e.to_string()))?;
        require(
            &doc,
            key,
            c.architecture.layer_sizes[0] == c.grid.n_z,
            "network input size must equal grid.n_z",
        )?;
        require(&doc, "network.leaky_slope", c.architecture.leaky_slope >= 0.0, "must be nonnegative")?;

        let t = &mut c.training;
        t.epochs = doc.usize("training.epochs")?.unwrap_or(t.epochs);
        t.batch_size = doc.usize("training.batch_size")?.unwrap_or(t.batch_size);
        t.learning_rate = doc.f64("training.learning_rate")?.unwrap_or(t.learning_rate);
        t.split = doc.f64("training.split")?.unwrap_or(t.split);
        t.seed = doc.u64("training.seed")?.unwrap_or(t.seed);
        t.beta1 = doc.f64("training.beta1")?.unwrap_or(t.beta1);
        t.beta2 = doc.f64("training.beta2")?.unwrap_or(t.beta2);
        t.epsilon = doc.f64("training.epsilon")?.unwrap_or(t.epsilon);
        require(&doc, "training.epochs", t.epochs >= 1, "must be at least 1")?;
        require(&doc, "training.batch_size", t.batch_size >= 1, "must be at least 1")?;
        require(&doc, "training.learning_rate", t.learning_rate > 0.0, "must be positive")?;
        require(&doc, "training.split", t.split > 0.0 && t.split < 1.0, "must lie strictly between 0 and 1")?;
        require(&doc, "training.beta1", (0.0..1.0).contains(&t.beta1), "must lie in [0, 1)")?;
        require(&doc, "training.beta2", (0.0..1.0).contains(&t.beta2), "must lie in [0, 1)")?;
        require(&doc, "training.epsilon", t.epsilon > 0.0, "must be positive")?;

        let cs = &mut c.cs;
        cs.solver = CsConfig {
            lambda: doc.f64("cs.lambda")?,
            max_iter: doc.usize("cs.max_iter")?.unwrap_or(DEFAULT_MAX_ITER),
            rel_tol: doc.f64("cs.rel_tol")?.unwrap_or(DEFAULT_REL_TOL),
            nonneg_projection: doc.bool("cs.nonneg")?.unwrap_or(true),
        };
        require(&doc, "cs.lambda", cs.solver.lambda.is_none_or(|l| l >= 0.0), "must be nonnegative")?;
        require(&doc, "cs.max_iter", cs.solver.max_iter >= 1, "must be at least 1")?;
        require(&doc, "cs.rel_tol", cs.solver.rel_tol > 0.0, "must be positive")?;
        if let Some(w) = doc.string("cs.wavelet")? {
            cs.wavelet = WaveletFamily::parse(&w).ok_or_else(|| bad(&doc, "cs.wavelet", format!("unknown wavelet `{w}`")))?;
        }
        cs.level = doc.usize("cs.level")?;
        let wkey = if doc.get("cs.level").is_some() { "cs.level" } else { "cs.wavelet" };
        WaveletBasis::new(c.grid.n_z, cs.wavelet, cs.level).map_err(|e| bad(&doc, wkey, e.to_string()))?;

        c.capon_loading = doc.f64("capon.loading")?.unwrap_or(c.capon_loading);
        require(&doc, "capon.loading", c.capon_loading >= 0.0, "must be nonnegative")?;

        c.scene.looks = doc.usize("scene.looks")?.unwrap_or(c.scene.looks);
        c.scene.seed = doc.u64("scene.seed")?.unwrap_or(c.scene.seed);
        require(&doc, "scene.looks", c.scene.looks >= 1, "need at least one look")?;

        let sw = &mut c.sweep;
        sw.sizes = doc.usize_list("sweep.sizes")?.unwrap_or(sw.sizes.clone());
        sw.repeats = doc.usize("sweep.repeats")?.unwrap_or(sw.repeats);
        sw.epochs = doc.usize("sweep.epochs")?.unwrap_or(sw.epochs);
        require(&doc, "sweep.sizes", !sw.sizes.is_empty(), "need at least one latent size")?;
        for &latent in &sw.sizes {
            validate_layer_sizes(&default_layer_sizes(c.grid.n_z, latent))
                .map_err(|e| bad(&doc, "sweep.sizes", format!("latent {latent}: {e}")))?;
        }
        require(&doc, "sweep.repeats", sw.repeats >= 1, "must be at least 1")?;
        require(&doc, "sweep.epochs", sw.epochs >= 1, "must be at least 1")?;

        c.benchmark_repetitions = doc.usize("benchmark.repetitions")?.unwrap_or(c.benchmark_repetitions);
        require(&doc, "benchmark.repetitions", c.benchmark_repetitions >= 1, "must be at least 1")?;

        let dir = doc.string("output.dir")?.map(PathBuf::from).unwrap_or_else(|| c.output.dir.clone());
        let mut out = OutputSection::under(&dir);
        let paths: [(&str, &mut PathBuf); 8] = [
            ("output.dataset", &mut out.dataset),
            ("output.weights", &mut out.weights),
            ("output.history", &mut out.history),
            ("output.tomograms", &mut out.tomograms),
            ("output.sweep", &mut out.sweep),
            ("output.benchmark", &mut out.benchmark),
            ("output.export", &mut out.export),
            ("output.train_time", &mut out.train_time),
        ];
        for (key, slot) in paths {
            if let Some(p) = doc.string(key)? {
                *slot = PathBuf::from(p);
            }
        }
        c.output = out;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            TomoError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        Self::parse(&text)
    }

    /// Overrides every stochastic seed except the acquisition geometry.
    pub fn override_seed(&mut self, seed: u64) {
        self.simulation.seed = seed;
        self.training.seed = seed;
        self.scene.seed = seed;
    }

    pub fn height_grid(&self) -> Result<HeightGrid> {
        make_height_grid(self.grid.z_min, self.grid.z_max, self.grid.n_z)
    }

    /// Near-to-far geometry ramp, one geometry per scene column. The
    /// training set draws its steering matrices from the same list.
    pub fn geometries(&self) -> Result<Vec<AcquisitionGeometry>> {
        let g = &self.geometry;
        geometry_ramp(g.columns, g.resolution_near, g.resolution_far, g.n_tracks, g.perturbation, g.seed)
    }

    pub fn scene_description(&self) -> SceneDescription {
        let mut desc = match self.prior.preset {
            ForestPreset::Boreal => SceneDescription::default_boreal(self.geometry.columns),
            ForestPreset::Tropical => SceneDescription::default_tropical(self.geometry.columns),
        };
        desc.looks = self.scene.looks;
        desc.noise_power = self.prior.noise_power;
        desc.n_tracks = self.geometry.n_tracks;
        desc.resolution_near = self.geometry.resolution_near;
        desc.resolution_far = self.geometry.resolution_far;
        desc.perturbation = self.geometry.perturbation;
        desc
    }

    pub fn method_config(&self) -> crate::evalharness::MethodConfig {
        crate::evalharness::MethodConfig {
            capon_loading: self.capon_loading,
            cs: self.cs.solver.clone(),
            wavelet: self.cs.wavelet,
            wavelet_level: self.cs.level,
            weights: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.architecture.layer_sizes, vec![512, 256, 64, 16, 5, 16, 64, 256, 512]);
        assert_eq!(c.simulation.count, 10_000);
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.training.epochs, 200);
        assert_eq!(c.training.learning_rate, 1e-3);
        assert_eq!(c.training.split, 0.75);
        assert_eq!(c.simulation.looks, 100);
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse(
            "[simulation]\ncount = 100\nseed = 9\n[network]\nlatent = 8\n[cs]\nwavelet = \"db2\"\nlevel = 3\n[prior]\nmu_canopy = [10, 20]\n",
        )
        .unwrap();
        assert_eq!(c.simulation.count, 100);
        assert_eq!(c.simulation.seed, 9);
        assert_eq!(c.architecture.layer_sizes[4], 8);
        assert_eq!(c.cs.wavelet, WaveletFamily::Db2);
        assert_eq!(c.cs.level, Some(3));
        assert_eq!(c.prior.mu_canopy, Range::new(10.0, 20.0));
        let t = RunConfig::parse("[prior]\npreset = tropical\n").unwrap();
        assert_eq!(t.prior.mu_canopy, Range::new(15.0, 45.0));
    }

    fn diag(text: &str) -> (usize, String) {
        match RunConfig::parse(text) {
            Err(TomoError::Config { line, key, .. }) => (line, key),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        assert_eq!(diag("[training]\nepochs = 10\nsplit = 1.5\n"), (3, "training.split".into()));
        assert_eq!(diag("[training]\nepoch = 10\n"), (2, "training.epoch".into()));
        assert_eq!(diag("[grid]\nn_z = abc\n"), (2, "grid.n_z".into()));
        assert_eq!(diag("[network]\nlatent = 100\n"), (2, "network.latent".into()));
        assert_eq!(diag("\n[cs]\nwavelet = \"sym8\"\n"), (3, "cs.wavelet".into()));
        assert_eq!(diag("[prior]\nmu_ground = [5, 1]\n"), (2, "prior.mu_ground".into()));
        assert_eq!(diag("[prior]\npreset = savanna\n"), (2, "prior.preset".into()));
        assert_eq!(diag("[grid]\nn_z = 300\n").1, "cs.wavelet");
        assert_eq!(diag("just garbage\n").0, 1);
    }

    #[test]
    fn seed_override_leaves_geometry() {
        let mut c = RunConfig::default();
        let g = c.geometry.seed;
        c.override_seed(99);
        assert_eq!((c.simulation.seed, c.training.seed, c.scene.seed, c.geometry.seed), (99, 99, 99, g));
    }
}
