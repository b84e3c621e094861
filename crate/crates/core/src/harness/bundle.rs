//! Result bundles: one directory per resolved configuration.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ResolvedRun, RunConfig, SolverConfig};
use super::fixtures::{fixture, Target};
use super::formats::{render_contours, write_points, write_timeseries, GridFile};
use super::Failure;
use crate::error::{Error, Result};
use crate::fockspace::{tail_population, FockBasis};
use crate::lindblad::{evolve, DensityMatrix};
use crate::observables::{summarize, wigner, GridSpec, ObservableRecord, SeriesSummary, WignerGrid};
use crate::qsd::{run_ensemble, EnsembleConfig};
use crate::semiclassical::{diameter, distinct_points, lyapunov_max, poincare_section, MeanField};

pub const TOOL: &str = "kerrchaos";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const DATA: &str = "bundle.json";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const TIMESERIES: &str = "timeseries.csv";
pub const POINCARE: &str = "poincare.csv";
const DEFAULT_WIGNER_RESOLUTION: usize = 101;
const PNG_PIXELS: u32 = 480;
const PNG_LEVELS: usize = 8;
/// Distinctness resolution for Poincare points.
const SECTION_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: ResolvedRun,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
    pub files: Vec<String>,
}

/// Fixture comparison for one quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub measured: f64,
    pub target: Target,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub fock_dim: usize,
    pub final_time: f64,
    pub final_tail_population: f64,
    pub summary: Option<SeriesSummary>,
    pub lyapunov: Option<f64>,
    pub poincare_distinct: Option<usize>,
    pub poincare_diameter: Option<f64>,
    pub wigner_normalization: Vec<f64>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSnapshot {
    pub t: f64,
    pub grid: WignerGrid,
}

/// Everything `export` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleData {
    pub records: Vec<ObservableRecord>,
    pub wigner: Vec<WignerSnapshot>,
    pub poincare: Option<Vec<(f64, f64)>>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    /// The bundle already existed and nothing was recomputed.
    pub reused: bool,
}

pub fn config_hash(run: &ResolvedRun) -> String {
    let bytes = serde_json::to_vec(&(TOOL, VERSION, run)).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn bundle_dir_name(run: &ResolvedRun) -> String {
    format!("{}-{}", run.name, &config_hash(run)[..12])
}

/// `run <config>`: resolves the file, then runs into `output_dir` (from the
/// command line, else the config, else `runs/` next to the config).
pub fn run_file(path: &Path, output_dir: Option<&Path>, force: bool) -> Result<RunOutcome, Failure> {
    let cfg = RunConfig::load(path).map_err(Failure::stage("config"))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = match (output_dir, &cfg.output_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) if d.is_absolute() => d.clone(),
        (None, Some(d)) => base.join(d),
        (None, None) => base.join("runs"),
    };
    run_config(&cfg, &out, force)
}

pub fn run_config(cfg: &RunConfig, output_root: &Path, force: bool) -> Result<RunOutcome, Failure> {
    let run = cfg.resolve().map_err(Failure::stage("config"))?;
    let dir = output_root.join(bundle_dir_name(&run));
    if dir.join(MANIFEST).exists() && !force {
        log::info!("{} exists; nothing to do", dir.display());
        return Ok(RunOutcome { dir, reused: true });
    }
    let started = Instant::now();
    let data = compute(&run)?;
    let staging = output_root.join(format!(".{}.partial", bundle_dir_name(&run)));
    let write = || -> Result<()> {
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        let mut files = write_json(&staging, DATA, &data)?;
        files.extend(write_json(&staging, DIAGNOSTICS, &data.diagnostics)?);
        if run.outputs.timeseries {
            files.extend(export_into(&data, &staging, ExportFormat::Csv)?);
        } else if data.poincare.is_some() {
            files.extend(write_poincare(&data, &staging)?);
        }
        files.extend(export_into(&data, &staging, ExportFormat::Grid)?);
        if run.outputs.png {
            files.extend(export_into(&data, &staging, ExportFormat::Png)?);
        }
        files.sort();
        files.dedup();
        let manifest = Manifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: config_hash(&run),
            config: run.clone(),
            seed: run.seed,
            workers: rayon::current_num_threads(),
            wall_time_s: started.elapsed().as_secs_f64(),
            files,
        };
        write_json(&staging, MANIFEST, &manifest)?;
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&staging, &dir)?;
        Ok(())
    };
    write().map_err(Failure::stage("write"))?;
    Ok(RunOutcome { dir, reused: false })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<Vec<String>> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(vec![name.to_string()])
}

/// Runs the solver and every requested diagnostic.
pub fn compute(run: &ResolvedRun) -> Result<BundleData, Failure> {
    let basis = FockBasis::new(run.fock_dim).map_err(Failure::stage("config"))?;
    let mut targets: Vec<f64> = run.outputs.wigner.as_ref().map(|w| w.times.clone()).unwrap_or_default();
    targets.sort_by(f64::total_cmp);
    let mut snapshots: Vec<(f64, DensityMatrix)> = Vec::new();
    let mut capture = |t: f64, rho: &DensityMatrix| -> Result<()> {
        while let Some(&target) = targets.first() {
            if t < target - 1e-9 {
                break;
            }
            if snapshots.last().is_none_or(|(last, _)| *last != t) {
                snapshots.push((t, rho.clone()));
            }
            targets.remove(0);
        }
        Ok(())
    };
    let (records, final_state, final_time) = match run.solver {
        SolverConfig::Lindblad => {
            let ev = evolve(&run.system, &DensityMatrix::vacuum(basis), &run.evolution, &mut [&mut capture])
                .map_err(Failure::stage("lindblad"))?;
            (ev.records, ev.final_state, ev.final_time)
        }
        SolverConfig::Qsd { n_traj, scheme } => {
            let e = &run.evolution;
            let cfg = EnsembleConfig {
                n_traj,
                seed: run.seed,
                dt: e.dt,
                t_end: e.t_end,
                record_every: e.record_every,
                scheme,
                allow_large_dt: e.allow_large_dt,
                tail_levels: e.tail_levels,
                tail_tol: e.tail_tol,
            };
            let ens = run_ensemble(&run.system, basis, &cfg, &mut [&mut capture]).map_err(Failure::stage("qsd"))?;
            (ens.records, ens.final_state, ens.final_time)
        }
    };
    let summary = summarize(&records, run.evolution.t_transient);

    let mut wigner_out = Vec::new();
    if let Some(w) = &run.outputs.wigner {
        if w.times.is_empty() {
            snapshots = vec![(final_time, final_state.clone())];
        }
        let peak = records.iter().map(|r| r.excitation).fold(0.0, f64::max);
        let spec =
            w.grid.unwrap_or_else(|| GridSpec::for_excitation(peak, w.resolution.unwrap_or(DEFAULT_WIGNER_RESOLUTION)));
        for (t, rho) in &snapshots {
            let grid = wigner(rho, &spec).map_err(Failure::stage("wigner"))?;
            wigner_out.push(WignerSnapshot { t: *t, grid });
        }
    }

    let model = MeanField::with_damping(run.system, run.semiclassical.amplitude_damping);
    let origin = Complex64::new(0.0, 0.0);
    let lyapunov = match &run.outputs.lyapunov {
        Some(cfg) => Some(lyapunov_max(&model, cfg, origin).map_err(Failure::stage("lyapunov"))?),
        None => None,
    };
    let poincare = match &run.outputs.poincare {
        Some(p) => Some(
            poincare_section(&model, origin, p.n_points, p.t_transient, run.evolution.dt)
                .map_err(Failure::stage("poincare"))?,
        ),
        None => None,
    };

    let mut checks = Vec::new();
    if let Some(name) = &run.fixture {
        let expected = fixture(name).map_err(Failure::stage("config"))?.expected;
        let mut push = |quantity: &str, measured: Option<f64>, target: Option<Target>| {
            if let (Some(m), Some(t)) = (measured, target) {
                checks.push(Check { quantity: String::from(quantity), measured: m, target: t, pass: t.contains(m) });
            }
        };
        push("mean_excitation", summary.map(|s| s.mean_excitation), expected.excitation);
        push("mean_purity", summary.map(|s| s.mean_purity), expected.purity);
        push("lyapunov", lyapunov, expected.lyapunov);
    }

    let diagnostics = Diagnostics {
        fock_dim: run.fock_dim,
        final_time,
        final_tail_population: tail_population(&final_state, run.evolution.tail_levels),
        summary,
        lyapunov,
        poincare_distinct: poincare.as_ref().map(|p| distinct_points(p, SECTION_RESOLUTION)),
        poincare_diameter: poincare.as_ref().map(|p| diameter(p)),
        wigner_normalization: wigner_out.iter().map(|w| w.grid.normalization()).collect(),
        checks,
    };
    Ok(BundleData { records, wigner: wigner_out, poincare, diagnostics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Timeseries and Poincare points.
    Csv,
    /// Wigner grid text files.
    Grid,
    /// Contour images of the Wigner grids.
    Png,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "grid" => Ok(ExportFormat::Grid),
            "png" => Ok(ExportFormat::Png),
            _ => Err(Error::Config(format!("unknown export format {s:?} (csv, grid, png)"))),
        }
    }
}

pub fn load_bundle(dir: &Path) -> Result<BundleData> {
    let path = dir.join(DATA);
    let file = File::open(&path).map_err(|e| Error::Config(format!("no bundle at {}: {e}", dir.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let file = File::open(dir.join(MANIFEST))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// `export <bundle> --format`: writes into `out` (the bundle itself by
/// default) and returns the file names written.
pub fn export(bundle: &Path, format: ExportFormat, out: Option<&Path>) -> Result<Vec<String>, Failure> {
    let data = load_bundle(bundle).map_err(Failure::stage("load"))?;
    let out = out.unwrap_or(bundle);
    fs::create_dir_all(out).map_err(|e| Failure::stage("export")(e.into()))?;
    export_into(&data, out, format).map_err(Failure::stage("export"))
}

fn grid_name(k: usize, ext: &str) -> String {
    format!("wigner_{k:03}.{ext}")
}

fn write_poincare(data: &BundleData, out: &Path) -> Result<Vec<String>> {
    match &data.poincare {
        Some(points) => {
            let mut w = BufWriter::new(File::create(out.join(POINCARE))?);
            write_points(&mut w, points)?;
            w.flush()?;
            Ok(vec![POINCARE.to_string()])
        }
        None => Ok(Vec::new()),
    }
}

pub fn export_into(data: &BundleData, out: &Path, format: ExportFormat) -> Result<Vec<String>> {
    let mut files = Vec::new();
    match format {
        ExportFormat::Csv => {
            let mut w = BufWriter::new(File::create(out.join(TIMESERIES))?);
            write_timeseries(&mut w, &data.records)?;
            w.flush()?;
            files.push(TIMESERIES.to_string());
            files.extend(write_poincare(data, out)?);
        }
        ExportFormat::Grid => {
            for (k, snap) in data.wigner.iter().enumerate() {
                let name = grid_name(k, "grid");
                let mut w = BufWriter::new(File::create(out.join(&name))?);
                GridFile { t: snap.t, grid: snap.grid.clone() }.write(&mut w)?;
                w.flush()?;
                files.push(name);
            }
        }
        ExportFormat::Png => {
            for (k, snap) in data.wigner.iter().enumerate() {
                let name = grid_name(k, "png");
                render_contours(&snap.grid, PNG_PIXELS, PNG_LEVELS)?.save(out.join(&name))?;
                files.push(name);
            }
        }
    }
    Ok(files)
}
