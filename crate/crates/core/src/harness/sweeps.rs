//! `sweep <config>`: grid table, constant-excitation selection and the
//! transition curve.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::SweepConfig;
use super::formats::fmt_num;
use super::Failure;
use crate::error::{Error, Result};
use crate::sweep::{run_sweep, select_constant_excitation, transition_curve, SweepTable, TransitionCurve};

pub const SWEEP_TABLE: &str = "sweep.csv";
pub const SELECTION_TABLE: &str = "selection.csv";
pub const TRANSITION_TABLE: &str = "transition.csv";
pub const TRANSITION_SUMMARY: &str = "transition.json";

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub table: SweepTable,
    pub curve: Option<TransitionCurve>,
}

#[derive(Serialize)]
struct Summary<'a> {
    band: [f64; 2],
    sign_change: Option<usize>,
    steepest_drop: Option<usize>,
    coincident_within_one_step: Option<bool>,
    min_purity_regular: Option<f64>,
    max_purity_chaotic: Option<f64>,
    curve: &'a TransitionCurve,
}

pub fn sweep_hash(cfg: &SweepConfig) -> String {
    let bytes = serde_json::to_vec(&(&cfg.spec, &cfg.selection)).expect("sweep config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Runs (or resumes) the sweep described by `path`. The table doubles as
/// the checkpoint, so rerunning an interrupted sweep finishes it.
pub fn sweep_file(path: &Path, output_dir: Option<&Path>) -> Result<SweepOutcome, Failure> {
    let cfg = SweepConfig::load(path).map_err(Failure::stage("config"))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out = match (output_dir, &cfg.output_dir) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(d)) if d.is_absolute() => d.clone(),
        (None, Some(d)) => base.join(d),
        (None, None) => base.join("sweeps"),
    };
    sweep_config(&cfg, &out)
}

pub fn sweep_config(cfg: &SweepConfig, output_root: &Path) -> Result<SweepOutcome, Failure> {
    let name = cfg.name.clone().unwrap_or_else(|| "sweep".into());
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(Failure::stage("config")(Error::Config(format!("bad sweep name {name:?}"))));
    }
    let dir = output_root.join(format!("{name}-{}", &sweep_hash(cfg)[..12]));
    fs::create_dir_all(&dir).map_err(|e| Failure::stage("write")(e.into()))?;
    let table = run_sweep(&cfg.spec, Some(&dir.join(SWEEP_TABLE))).map_err(Failure::stage("sweep"))?;
    // rewrite in grid order once complete
    table.write(&dir.join(SWEEP_TABLE)).map_err(Failure::stage("write"))?;

    let mut curve = None;
    if let Some(sel) = &cfg.selection {
        let band = (sel.band[0], sel.band[1]);
        let selection = select_constant_excitation(&table, band).map_err(Failure::stage("selection"))?;
        SweepTable { rows: selection.selected.clone() }
            .write(&dir.join(SELECTION_TABLE))
            .map_err(Failure::stage("write"))?;
        let c = transition_curve(&selection);
        write_curve(&dir, &c, sel.band).map_err(Failure::stage("write"))?;
        curve = Some(c);
    }
    Ok(SweepOutcome { dir, table, curve })
}

fn write_curve(dir: &Path, c: &TransitionCurve, band: [f64; 2]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(TRANSITION_TABLE))?;
    w.write_record(["x1", "x2", "max_purity", "lyapunov"])?;
    for p in &c.points {
        let x2 = match p.x2 {
            Some(x) => fmt_num(x)?,
            None => String::new(),
        };
        w.write_record([fmt_num(p.x1)?, x2, fmt_num(p.max_purity)?, fmt_num(p.lyapunov)?])?;
    }
    w.flush()?;
    let sep = c.separation();
    let summary = Summary {
        band,
        sign_change: c.sign_change,
        steepest_drop: c.steepest_drop,
        coincident_within_one_step: c.coincident(1),
        min_purity_regular: sep.map(|s| s.0),
        max_purity_chaotic: sep.map(|s| s.1),
        curve: c,
    };
    let mut f = BufWriter::new(File::create(dir.join(TRANSITION_SUMMARY))?);
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
