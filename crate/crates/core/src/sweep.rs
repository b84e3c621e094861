//! Grid scans over system parameters, constant-excitation selection and the
//! purity/Lyapunov transition curve.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drive::DriveSpec;
use crate::error::{Error, Result};
use crate::fockspace::{FockBasis, SystemParams, DEFAULT_DIM};
use crate::lindblad::{evolve, DensityMatrix, EvolutionConfig};
use crate::observables::summarize;
use crate::semiclassical::{lyapunov_max, LyapunovConfig, MeanField};

/// Fractional growth of the Fock dimension after a truncation overflow.
const DIM_GROWTH: f64 = 1.5;

/// A scalar that a sweep axis can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    Chi,
    Nbar,
    /// Constant or pulse-train amplitude.
    Amp,
    F0,
    F1,
    DeltaMod,
    Width,
    Period,
    Offset,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::Chi => "chi",
            SweepParam::Nbar => "nbar",
            SweepParam::Amp => "amp",
            SweepParam::F0 => "f0",
            SweepParam::F1 => "f1",
            SweepParam::DeltaMod => "delta_mod",
            SweepParam::Width => "width",
            SweepParam::Period => "period",
            SweepParam::Offset => "offset",
        }
    }

    /// Copy of `params` with this parameter set to `value`.
    pub fn apply(self, params: &SystemParams, value: f64) -> Result<SystemParams> {
        let mut p = *params;
        let mismatch = || {
            Error::InvalidParameter(format!("sweep parameter {} does not apply to this drive", self.name()))
        };
        match (self, &mut p.drive) {
            (SweepParam::Delta, _) => p.delta = value,
            (SweepParam::Chi, _) => p.chi = value,
            (SweepParam::Nbar, _) => p.nbar = value,
            (SweepParam::Amp, DriveSpec::Constant { amp }) | (SweepParam::Amp, DriveSpec::GaussianTrain { amp, .. }) => {
                *amp = value
            }
            (SweepParam::F0, DriveSpec::Bichromatic { f0, .. }) => *f0 = value,
            (SweepParam::F1, DriveSpec::Bichromatic { f1, .. }) => *f1 = value,
            (SweepParam::DeltaMod, DriveSpec::Bichromatic { delta_mod, .. }) => *delta_mod = value,
            (SweepParam::Width, DriveSpec::GaussianTrain { width, .. }) => *width = value,
            (SweepParam::Period, DriveSpec::GaussianTrain { period, .. }) => *period = value,
            (SweepParam::Offset, DriveSpec::GaussianTrain { offset, .. }) => *offset = value,
            _ => return Err(mismatch()),
        }
        Ok(p)
    }
}

/// One sweep axis: an explicit list, or `start..=stop` in steps of `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: SweepParam,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl Axis {
    pub fn list(param: SweepParam, values: Vec<f64>) -> Self {
        Axis { param, values, start: None, stop: None, step: None }
    }

    pub fn range(param: SweepParam, start: f64, stop: f64, step: f64) -> Self {
        Axis { param, values: Vec::new(), start: Some(start), stop: Some(stop), step: Some(step) }
    }

    /// Grid values, validated nonempty and strictly monotone.
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let values = match (self.values.is_empty(), self.start, self.stop, self.step) {
            (false, None, None, None) => self.values.clone(),
            (true, Some(a), Some(b), Some(h)) => {
                if !(h != 0.0 && h.is_finite() && (b - a) / h >= -1e-9) {
                    return Err(Error::Config(format!("axis {}: bad range {a}..{b} step {h}", self.param.name())));
                }
                let n = ((b - a) / h + 1e-9).floor() as usize + 1;
                (0..n).map(|k| a + k as f64 * h).collect()
            }
            _ => {
                return Err(Error::Config(format!(
                    "axis {}: give either values or start/stop/step",
                    self.param.name()
                )))
            }
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("axis {}: values must be finite and nonempty", self.param.name())));
        }
        let rising = values.windows(2).all(|w| w[1] > w[0]);
        let falling = values.windows(2).all(|w| w[1] < w[0]);
        if !(rising || falling) {
            return Err(Error::Config(format!("axis {}: values must be strictly monotone", self.param.name())));
        }
        Ok(values)
    }
}

fn yes() -> bool {
    true
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: SystemParams,
    pub axis1: Axis,
    #[serde(default)]
    pub axis2: Option<Axis>,
    /// Quantum leg: post-transient excitation and purity.
    #[serde(default = "yes")]
    pub quantum: bool,
    /// Semiclassical leg: maximum Lyapunov exponent from the origin.
    #[serde(default = "yes")]
    pub lyapunov: bool,
    #[serde(default = "default_dim")]
    pub fock_dim: usize,
    /// Ceiling for automatic growth of the basis after a truncation overflow.
    #[serde(default)]
    pub max_fock_dim: Option<usize>,
    #[serde(default)]
    pub evolution: EvolutionConfig,
    #[serde(default)]
    pub lyapunov_config: LyapunovConfig,
    #[serde(default)]
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.axis1.resolve()?;
        if let Some(ax) = &self.axis2 {
            ax.resolve()?;
            if ax.param == self.axis1.param {
                return Err(Error::Config("both axes vary the same parameter".into()));
            }
        }
        FockBasis::new(self.fock_dim)?;
        if self.max_fock_dim.is_some_and(|m| m < self.fock_dim) {
            return Err(Error::Config("max_fock_dim is below fock_dim".into()));
        }
        self.evolution.validate()?;
        self.lyapunov_config.validate()?;
        if !(self.quantum || self.lyapunov) {
            return Err(Error::Config("sweep requests no diagnostics".into()));
        }
        Ok(())
    }

    /// Grid points as `(i, j, x1, x2)`, axis 2 varying fastest.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        let v1 = self.axis1.resolve()?;
        let v2 = match &self.axis2 {
            Some(ax) => ax.resolve()?.into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::with_capacity(v1.len() * v2.len());
        for (i, &x1) in v1.iter().enumerate() {
            for (j, &x2) in v2.iter().enumerate() {
                out.push(GridPoint { i, j, x1, x2 });
            }
        }
        Ok(out)
    }

    pub fn params_at(&self, pt: &GridPoint) -> Result<SystemParams> {
        let mut p = self.axis1.param.apply(&self.base, pt.x1)?;
        if let (Some(ax), Some(x2)) = (&self.axis2, pt.x2) {
            p = ax.param.apply(&p, x2)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub i: usize,
    pub j: usize,
    pub x1: f64,
    pub x2: Option<f64>,
}

/// One grid point's inputs and outputs. Failed points carry `error` and no
/// outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub i: usize,
    pub j: usize,
    pub x1: f64,
    pub x2: Option<f64>,
    pub params: SystemParams,
    pub seed: u64,
    pub fock_dim: Option<usize>,
    pub mean_excitation: Option<f64>,
    pub max_excitation: Option<f64>,
    pub mean_purity: Option<f64>,
    pub max_purity: Option<f64>,
    pub lyapunov: Option<f64>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 16] = [
    "i",
    "j",
    "x1",
    "x2",
    "delta",
    "chi",
    "nbar",
    "drive",
    "seed",
    "fock_dim",
    "mean_excitation",
    "max_excitation",
    "mean_purity",
    "max_purity",
    "lyapunov",
    "error",
];

fn fmt_f(x: f64) -> String {
    format!("{x:.8e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

fn parse_f(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("not a number: {s:?}")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f(s).map(Some)
    }
}

impl SweepRow {
    pub fn to_record(&self) -> Vec<String> {
        vec![
            self.i.to_string(),
            self.j.to_string(),
            fmt_f(self.x1),
            fmt_opt(self.x2),
            fmt_f(self.params.delta),
            fmt_f(self.params.chi),
            fmt_f(self.params.nbar),
            serde_json::to_string(&self.params.drive).expect("drive serializes"),
            self.seed.to_string(),
            self.fock_dim.map(|d| d.to_string()).unwrap_or_default(),
            fmt_opt(self.mean_excitation),
            fmt_opt(self.max_excitation),
            fmt_opt(self.mean_purity),
            fmt_opt(self.max_purity),
            fmt_opt(self.lyapunov),
            self.error.clone().unwrap_or_default(),
        ]
    }

    pub fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != SWEEP_HEADER.len() {
            return Err(Error::Format(format!("sweep row has {} fields, expected {}", rec.len(), SWEEP_HEADER.len())));
        }
        let int = |k: usize| rec[k].parse::<usize>().map_err(|_| Error::Format(format!("bad integer {:?}", &rec[k])));
        Ok(SweepRow {
            i: int(0)?,
            j: int(1)?,
            x1: parse_f(&rec[2])?,
            x2: parse_opt(&rec[3])?,
            params: SystemParams {
                delta: parse_f(&rec[4])?,
                chi: parse_f(&rec[5])?,
                nbar: parse_f(&rec[6])?,
                drive: serde_json::from_str(&rec[7])?,
            },
            seed: rec[8].parse().map_err(|_| Error::Format(format!("bad seed {:?}", &rec[8])))?,
            fock_dim: if rec[9].is_empty() { None } else { Some(int(9)?) },
            mean_excitation: parse_opt(&rec[10])?,
            max_excitation: parse_opt(&rec[11])?,
            mean_purity: parse_opt(&rec[12])?,
            max_purity: parse_opt(&rec[13])?,
            lyapunov: parse_opt(&rec[14])?,
            error: if rec[15].is_empty() { None } else { Some(rec[15].to_string()) },
        })
    }

    /// Same row after a trip through the table format.
    fn canonical(&self) -> Self {
        let rec = csv::StringRecord::from(self.to_record());
        SweepRow::from_record(&rec).expect("own format parses")
    }
}

/// Sweep results ordered by grid coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.iter().ne(SWEEP_HEADER.iter().copied()) {
            return Err(Error::Format(format!("{} is not a sweep table", path.display())));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(SweepRow::from_record(&rec?)?);
        }
        rows.sort_by_key(|r| (r.i, r.j));
        rows.dedup_by_key(|r| (r.i, r.j));
        Ok(SweepTable { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            w.write_record(r.to_record())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.i == i && r.j == j)
    }
}

/// Runs every grid point not already present in `checkpoint`, appending each
/// finished row to it as soon as it completes.
pub fn run_sweep(spec: &SweepSpec, checkpoint: Option<&Path>) -> Result<SweepTable> {
    spec.validate()?;
    let points = spec.points()?;
    let mut done = BTreeMap::new();
    let writer = match checkpoint {
        Some(path) => {
            if path.exists() && std::fs::metadata(path)?.len() > 0 {
                for row in SweepTable::read(path)?.rows {
                    done.insert((row.i, row.j), row);
                }
                Some(OpenOptions::new().append(true).open(path)?)
            } else {
                let mut f = File::create(path)?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(SWEEP_HEADER)?;
                f.write_all(&w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
                Some(f)
            }
        }
        None => None,
    };
    let writer = Mutex::new(writer);
    let pending: Vec<_> = points.iter().filter(|p| !done.contains_key(&(p.i, p.j))).collect();
    if !done.is_empty() {
        log::info!("resuming sweep: {} of {} points already done", done.len(), points.len());
    }

    let fresh: Vec<Result<SweepRow>> = pending
        .par_iter()
        .map(|pt| {
            let row = run_point(spec, pt).canonical();
            if let Some(f) = writer.lock().expect("writer lock").as_mut() {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(row.to_record())?;
                f.write_all(&w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
                f.flush()?;
            }
            Ok(row)
        })
        .collect();
    for row in fresh {
        let row = row?;
        done.insert((row.i, row.j), row);
    }
    Ok(SweepTable { rows: done.into_values().collect() })
}

/// Post-transient quantum statistics and the Lyapunov exponent at one
/// point. Failures are recorded in the row.
pub fn run_point(spec: &SweepSpec, pt: &GridPoint) -> SweepRow {
    let mut row = SweepRow {
        i: pt.i,
        j: pt.j,
        x1: pt.x1,
        x2: pt.x2,
        params: spec.base,
        seed: spec.seed,
        fock_dim: None,
        mean_excitation: None,
        max_excitation: None,
        mean_purity: None,
        max_purity: None,
        lyapunov: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let params = spec.params_at(pt)?;
        row.params = params;
        params.validate()?;
        if spec.lyapunov {
            let model = MeanField::new(params);
            row.lyapunov = Some(lyapunov_max(&model, &spec.lyapunov_config, Complex64::new(0.0, 0.0))?);
        }
        if spec.quantum {
            let (dim, records) = evolve_escalating(&params, spec)?;
            row.fock_dim = Some(dim);
            let s = summarize(&records, spec.evolution.t_transient).ok_or_else(|| {
                Error::InvalidParameter("no samples after the transient; increase t_end".into())
            })?;
            row.mean_excitation = Some(s.mean_excitation);
            row.max_excitation = Some(s.max_excitation);
            row.mean_purity = Some(s.mean_purity);
            row.max_purity = Some(s.max_purity);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("sweep point ({}, {}) failed: {e}", pt.i, pt.j);
        row.error = Some(e.to_string());
    }
    row
}

fn evolve_escalating(
    params: &SystemParams,
    spec: &SweepSpec,
) -> Result<(usize, Vec<crate::observables::ObservableRecord>)> {
    let ceiling = spec.max_fock_dim.unwrap_or(spec.fock_dim);
    let mut dim = spec.fock_dim;
    loop {
        let basis = FockBasis::new(dim)?;
        match evolve(params, &DensityMatrix::vacuum(basis), &spec.evolution, &mut []) {
            Ok(ev) => return Ok((dim, ev.records)),
            Err(Error::TruncationOverflow { .. }) if dim < ceiling => {
                let next = ((dim as f64 * DIM_GROWTH).ceil() as usize).min(ceiling);
                log::info!("truncation overflow at dim {dim}; retrying with {next}");
                dim = next;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Constant-excitation subset of a 2-D sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSelection {
    pub band: (f64, f64),
    /// One row per qualifying axis-1 value, in axis-1 order.
    pub selected: Vec<SweepRow>,
}

/// For each axis-1 value, the axis-2 point whose maximum excitation lies in
/// `band` and is closest to its center (lowest axis-2 index on ties).
pub fn select_constant_excitation(table: &SweepTable, band: (f64, f64)) -> Result<ConstraintSelection> {
    let (lo, hi) = band;
    if !(lo <= hi) || lo.is_nan() {
        return Err(Error::InvalidParameter(format!("bad band ({lo}, {hi})")));
    }
    let center = 0.5 * (lo + hi);
    // an unbounded band's center is +inf: the largest value is closest
    let distance = |x: f64| if center.is_finite() { (x - center).abs() } else { -x };
    let mut best: BTreeMap<usize, &SweepRow> = BTreeMap::new();
    for row in &table.rows {
        let Some(n) = row.max_excitation else { continue };
        if row.error.is_some() || n < lo || n > hi {
            continue;
        }
        match best.get(&row.i) {
            Some(b) if distance(b.max_excitation.unwrap()) <= distance(n) => {}
            _ => {
                best.insert(row.i, row);
            }
        }
    }
    if best.is_empty() {
        return Err(Error::EmptySelection { min: lo, max: hi });
    }
    Ok(ConstraintSelection { band, selected: best.into_values().cloned().collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPoint {
    pub x1: f64,
    pub x2: Option<f64>,
    pub max_purity: f64,
    pub lyapunov: f64,
}

/// Purity and Lyapunov exponent along the selection, with the two detected
/// transition locations (indices into `points`, marking the step from
/// `k - 1` to `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCurve {
    pub points: Vec<TransitionPoint>,
    /// First step where the exponent changes sign.
    pub sign_change: Option<usize>,
    /// Step with the largest purity decrease.
    pub steepest_drop: Option<usize>,
}

impl TransitionCurve {
    pub fn from_points(points: Vec<TransitionPoint>) -> Self {
        let positive = |p: &TransitionPoint| p.lyapunov > 0.0;
        let sign_change = (1..points.len()).find(|&k| positive(&points[k]) != positive(&points[k - 1]));
        let steepest_drop = (1..points.len())
            .map(|k| (k, points[k - 1].max_purity - points[k].max_purity))
            .filter(|&(_, d)| d > 0.0)
            .fold(None, |acc: Option<(usize, f64)>, (k, d)| match acc {
                Some((_, best)) if best >= d => acc,
                _ => Some((k, d)),
            })
            .map(|(k, _)| k);
        TransitionCurve { points, sign_change, steepest_drop }
    }

    /// Whether the two detectors agree within `tolerance` steps.
    pub fn coincident(&self, tolerance: usize) -> Option<bool> {
        Some(self.sign_change?.abs_diff(self.steepest_drop?) <= tolerance)
    }

    /// `(min purity over negative exponents, max purity over positive ones)`.
    pub fn separation(&self) -> Option<(f64, f64)> {
        let regular = self.points.iter().filter(|p| p.lyapunov < 0.0).map(|p| p.max_purity);
        let chaotic = self.points.iter().filter(|p| p.lyapunov > 0.0).map(|p| p.max_purity);
        let min_regular = regular.fold(None, |a: Option<f64>, x| Some(a.map_or(x, |a| a.min(x))))?;
        let max_chaotic = chaotic.fold(None, |a: Option<f64>, x| Some(a.map_or(x, |a| a.max(x))))?;
        Some((min_regular, max_chaotic))
    }
}

/// Rows lacking either diagnostic are skipped.
pub fn transition_curve(selection: &ConstraintSelection) -> TransitionCurve {
    let points = selection
        .selected
        .iter()
        .filter_map(|r| {
            Some(TransitionPoint { x1: r.x1, x2: r.x2, max_purity: r.max_purity?, lyapunov: r.lyapunov? })
        })
        .collect();
    TransitionCurve::from_points(points)
}
