//! Command implementations behind the `tomosar` binary.
//!
//! ```text
//! tomosar [--config FILE] [--seed N] [--threads N] <command>
//!   simulate      generate the training dataset
//!   train         train the encoder-decoder on a dataset
//!   reconstruct   rebuild the synthetic scene with one or all methods
//!   sweep-latent  retrain for several latent sizes
//!   benchmark     single-thread timing of every method
//!   export        dataset → CSV
//! ```
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure, 4 I/O or file-format error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Result, TomoError};
use crate::evalharness::{
    compare_to_baseline, latent_sweep, reconstruct_tomogram, simulate_scene, simulate_scene_noiseless,
    speckle_realizations, timing_benchmark, write_sweep_csv, Method,
};
use crate::geometry::AcquisitionGeometry;
use crate::neuralnet::{train, NetworkWeights, TrainingConfig};
use crate::simulator::{build_dataset, Dataset};

#[derive(Debug, Parser)]
#[command(name = "tomosar", version, about = "Forest SAR tomography on synthetic data")]
pub struct Cli {
    /// Run configuration; built-in boreal defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the simulation, training and scene seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for simulation and reconstruction.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate (beamforming input, target profile) pairs.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the network; writes weights and the per-epoch loss CSV.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Reconstruct the synthetic scene; writes CSV + PGM per method.
    Reconstruct {
        /// beamforming, capon, cs, network or all
        #[arg(long, default_value = "all")]
        method: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Use the exact model covariances instead of speckled estimates.
        #[arg(long)]
        noiseless: bool,
        /// Instead of the scene, reconstruct one column under this many
        /// independent speckle draws (written to `realizations.csv`).
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long, default_value_t = 0)]
        column: usize,
    },
    /// Mean ± std of the final validation MSE per latent size.
    SweepLatent {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated latent sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Single-thread timing of all four methods on the scene.
    Benchmark {
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Dataset → wide CSV.
    Export {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; diagnostics go to stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(TomoError::invalid("--threads must be at least 1"));
        }
        // Fails only if a global pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate { out, count } => {
            if let Some(c) = count {
                cfg.simulation.count = c;
            }
            cmd_simulate(&cfg, &out.unwrap_or_else(|| cfg.output.dataset.clone()))
        }
        Command::Train {
            dataset,
            weights,
            history,
            epochs,
        } => {
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            cmd_train(
                &cfg,
                &dataset.unwrap_or_else(|| cfg.output.dataset.clone()),
                &weights.unwrap_or_else(|| cfg.output.weights.clone()),
                &history.unwrap_or_else(|| cfg.output.history.clone()),
            )
        }
        Command::Reconstruct {
            method,
            weights,
            out_dir,
            noiseless,
            realizations,
            column,
        } => {
            let methods = parse_methods(&method)?;
            let out_dir = out_dir.unwrap_or_else(|| cfg.output.tomograms.clone());
            match realizations {
                Some(n) => cmd_realizations(&cfg, &methods, weights.as_deref(), &out_dir, n, column),
                None => cmd_reconstruct(&cfg, &methods, weights.as_deref(), &out_dir, noiseless),
            }
        }
        Command::SweepLatent {
            dataset,
            out,
            repeats,
            sizes,
            epochs,
        } => {
            if let Some(r) = repeats {
                cfg.sweep.repeats = r;
            }
            if let Some(s) = sizes {
                cfg.sweep.sizes = s;
            }
            if let Some(e) = epochs {
                cfg.sweep.epochs = e;
            }
            cmd_sweep_latent(
                &cfg,
                &dataset.unwrap_or_else(|| cfg.output.dataset.clone()),
                &out.unwrap_or_else(|| cfg.output.sweep.clone()),
            )
        }
        Command::Benchmark {
            weights,
            out,
            repetitions,
        } => {
            if let Some(r) = repetitions {
                cfg.benchmark_repetitions = r;
            }
            cmd_benchmark(
                &cfg,
                &weights.unwrap_or_else(|| cfg.output.weights.clone()),
                &out.unwrap_or_else(|| cfg.output.benchmark.clone()),
            )
        }
        Command::Export { dataset, out } => cmd_export(
            &dataset.unwrap_or_else(|| cfg.output.dataset.clone()),
            &out.unwrap_or_else(|| cfg.output.export.clone()),
        ),
    }
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Method::ALL.to_vec());
    }
    s.split(',')
        .map(|m| Method::parse(m.trim()).ok_or_else(|| TomoError::invalid(format!("unknown method `{m}`"))))
        .collect()
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    create_parent(path)?;
    std::fs::File::create(path)
        .map_err(|e| TomoError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// FNV-1a over the wavenumber bits of every geometry.
pub fn geometry_digest(geometries: &[AcquisitionGeometry]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for g in geometries {
        for k in g.kz() {
            for b in k.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let grid = cfg.height_grid()?;
    let geometries = cfg.geometries()?;
    let ds = build_dataset(
        cfg.simulation.count,
        &cfg.prior,
        &geometries,
        &grid,
        cfg.simulation.looks,
        cfg.simulation.seed,
    )?;
    ds.write_to(create_file(out)?)?;
    let (tr, va) = ds.split(cfg.training.split);
    println!(
        "wrote {}: {} examples ({} train / {} validation), L = {}, N = {}, N_z = {}, geometry digest {:016x}",
        out.display(),
        ds.len(),
        tr.len(),
        va.len(),
        ds.looks,
        ds.n_tracks,
        ds.n_z,
        geometry_digest(&geometries)
    );
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path)
}

pub fn cmd_train(cfg: &RunConfig, dataset: &Path, weights_out: &Path, history_out: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let t0 = Instant::now();
    let (weights, history) = train(&ds, &cfg.architecture, &cfg.training)?;
    let seconds = t0.elapsed().as_secs_f64();
    weights.write_to(create_file(weights_out)?)?;
    history.write_csv(create_file(history_out)?)?;
    std::fs::write(&cfg.output.train_time, format!("{seconds}\n")).ok();
    let (_, val) = ds.split(cfg.training.split);
    let cmp = compare_to_baseline(&weights, &ds, &val)?;
    println!(
        "trained {} epochs in {seconds:.1} s; final validation MSE {:e}; per-profile error {:e} vs beamforming baseline {:e}",
        cfg.training.epochs,
        history.final_validation().unwrap_or(f64::NAN),
        cmp.network_error,
        cmp.baseline_error
    );
    println!("wrote {} and {}", weights_out.display(), history_out.display());
    Ok(())
}

fn method_config(cfg: &RunConfig, methods: &[Method], weights: Option<&Path>) -> Result<crate::evalharness::MethodConfig> {
    let mut mc = cfg.method_config();
    if methods.contains(&Method::Network) {
        let path = weights.ok_or_else(|| TomoError::invalid("method `network` needs --weights"))?;
        mc.weights = Some(NetworkWeights::load(path)?);
    }
    Ok(mc)
}

pub fn cmd_reconstruct(
    cfg: &RunConfig,
    methods: &[Method],
    weights: Option<&Path>,
    out_dir: &Path,
    noiseless: bool,
) -> Result<()> {
    let mc = method_config(cfg, methods, weights)?;
    let grid = cfg.height_grid()?;
    let geometries = cfg.geometries()?;
    let desc = cfg.scene_description();
    let scene = if noiseless {
        simulate_scene_noiseless(&desc, &geometries, &grid)?
    } else {
        simulate_scene(&desc, &geometries, &grid, cfg.scene.seed)?
    };
    scene.truth.save(&grid, out_dir, "truth")?;
    for &m in methods {
        let tomo = reconstruct_tomogram(&scene, m, &mc)?;
        tomo.save(&grid, out_dir, m.name())?;
        println!(
            "{}: {} × {} tomogram → {}",
            m.name(),
            tomo.n_azimuth(),
            tomo.n_heights(),
            out_dir.join(format!("{}.csv", m.name())).display()
        );
    }
    Ok(())
}

pub fn cmd_realizations(
    cfg: &RunConfig,
    methods: &[Method],
    weights: Option<&Path>,
    out_dir: &Path,
    realizations: usize,
    column: usize,
) -> Result<()> {
    let mc = method_config(cfg, methods, weights)?;
    let grid = cfg.height_grid()?;
    let geometries = cfg.geometries()?;
    let desc = cfg.scene_description();
    let params = desc
        .columns
        .get(column)
        .ok_or_else(|| TomoError::invalid(format!("column {column} outside the {}-column scene", desc.n_columns())))?;
    let set = speckle_realizations(
        params,
        &geometries[column],
        &grid,
        desc.looks,
        desc.noise_power,
        realizations,
        methods,
        &mc,
        cfg.scene.seed,
    )?;
    let path = out_dir.join("realizations.csv");
    set.write_csv(&grid, create_file(&path)?)?;
    println!("wrote {realizations} realizations of column {column} → {}", path.display());
    Ok(())
}

pub fn cmd_sweep_latent(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    if cfg.sweep.repeats < 2 {
        eprintln!("warning: a single repeat per size gives no spread; std column is 0");
    }
    let seeds: Vec<u64> = (0..cfg.sweep.repeats as u64).map(|k| cfg.training.seed.wrapping_add(k)).collect();
    let tc = TrainingConfig {
        epochs: cfg.sweep.epochs,
        ..cfg.training.clone()
    };
    let rows = latent_sweep(&cfg.sweep.sizes, &seeds, &ds, cfg.architecture.leaky_slope, &tc)?;
    write_sweep_csv(&rows, create_file(out)?)?;
    for r in &rows {
        println!("latent {:>3}: {:e} ± {:e} ({} runs)", r.latent, r.mean, r.std, r.repeats);
    }
    Ok(())
}

pub fn cmd_benchmark(cfg: &RunConfig, weights: &Path, out: &Path) -> Result<()> {
    let mc = method_config(cfg, &Method::ALL, Some(weights))?;
    let grid = cfg.height_grid()?;
    let geometries = cfg.geometries()?;
    let scene = simulate_scene(&cfg.scene_description(), &geometries, &grid, cfg.scene.seed)?;
    let training = std::fs::read_to_string(&cfg.output.train_time)
        .ok()
        .and_then(|s| s.trim().parse::<f64>().ok());
    let report = timing_benchmark(&scene, &Method::ALL, &mc, cfg.benchmark_repetitions, training)?;
    report.write_csv(create_file(out)?)?;
    for r in &report.rows {
        println!(
            "{:<12} {:>12.6} s{}",
            r.method,
            r.median_seconds,
            r.speedup_vs_cs.map_or(String::new(), |s| format!("  ({s:.0}× vs cs)"))
        );
    }
    if !report.outputs_identical {
        return Err(TomoError::numerical("repeated reconstructions differ"));
    }
    Ok(())
}

pub fn cmd_export(dataset: &Path, out: &Path) -> Result<()> {
    let ds = load_dataset(dataset)?;
    ds.write_csv(create_file(out)?)?;
    println!("exported {} examples → {}", ds.len(), out.display());
    Ok(())
}
