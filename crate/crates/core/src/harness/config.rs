//! Declarative run and sweep configurations (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fixtures::{fixture, verify_caption, Fixture};
use crate::error::{Error, Result};
use crate::fockspace::{FockBasis, SystemParams};
use crate::lindblad::EvolutionConfig;
use crate::observables::GridSpec;
use crate::qsd::{QsdScheme, DEFAULT_N_TRAJ};
use crate::semiclassical::LyapunovConfig;
use crate::sweep::SweepSpec;

fn default_n_traj() -> usize {
    DEFAULT_N_TRAJ
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    /// Direct integration of the master equation.
    #[default]
    Lindblad,
    /// Ensemble of state-diffusion trajectories; step and duration come
    /// from `[evolution]`, the seed from the top level.
    Qsd {
        #[serde(default = "default_n_traj")]
        n_traj: usize,
        #[serde(default)]
        scheme: QsdScheme,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerOutput {
    /// Explicit window; sized from the peak excitation when absent.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Points per axis for the automatic window.
    #[serde(default)]
    pub resolution: Option<usize>,
    /// Sample times; the final time when empty. Each snaps to the first
    /// record at or after it.
    #[serde(default)]
    pub times: Vec<f64>,
}

fn default_points() -> usize {
    1000
}

fn default_section_transient() -> f64 {
    100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareOutput {
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default = "default_section_transient")]
    pub t_transient: f64,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "yes")]
    pub timeseries: bool,
    #[serde(default)]
    pub wigner: Option<WignerOutput>,
    #[serde(default)]
    pub poincare: Option<PoincareOutput>,
    #[serde(default)]
    pub lyapunov: Option<LyapunovConfig>,
    /// Also render each Wigner grid as a contour image.
    #[serde(default)]
    pub png: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { timeseries: true, wigner: None, poincare: None, lyapunov: None, png: false }
    }
}

fn default_damping() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiclassicalConfig {
    /// Mean-amplitude damping rate.
    #[serde(default = "default_damping")]
    pub amplitude_damping: f64,
}

impl Default for SemiclassicalConfig {
    fn default() -> Self {
        SemiclassicalConfig { amplitude_damping: 1.0 }
    }
}

/// A run as written in the config file. `fixture` supplies the system (and
/// recommended basis, step and duration) for any field left out.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub system: Option<SystemParams>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub semiclassical: SemiclassicalConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fock_dim: Option<usize>,
    /// Parent of the bundle directory; relative paths resolve against the
    /// config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A run with every default filled in; this is what the bundle hash covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub name: String,
    pub fixture: Option<String>,
    pub system: SystemParams,
    pub solver: SolverConfig,
    pub evolution: EvolutionConfig,
    pub outputs: Outputs,
    pub semiclassical: SemiclassicalConfig,
    pub seed: u64,
    pub fock_dim: usize,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn for_fixture(name: &str) -> Self {
        RunConfig { fixture: Some(name.to_string()), ..Default::default() }
    }

    /// Fills defaults from the fixture and validates everything that can be
    /// checked before running. All failures are configuration errors.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let fx: Option<Fixture> = self.fixture.as_deref().map(fixture).transpose()?;
        let system = match (&self.system, &fx) {
            (Some(s), _) => *s,
            (None, Some(f)) => f.params,
            (None, None) => return Err(Error::Config("give either [system] or a fixture".into())),
        };
        if let Some(f) = &fx {
            verify_caption(f.name, &system)?;
        }
        let evolution = match (&self.evolution, &fx) {
            (Some(e), _) => *e,
            (None, Some(f)) => EvolutionConfig {
                dt: f.recommended.dt,
                t_end: f.recommended.t_end,
                t_transient: f.recommended.t_transient,
                record_every: ((0.1 / f.recommended.dt).round() as usize).max(1),
                ..Default::default()
            },
            (None, None) => EvolutionConfig::default(),
        };
        let fock_dim = self
            .fock_dim
            .or(fx.as_ref().map(|f| f.recommended.fock_dim))
            .unwrap_or(crate::fockspace::DEFAULT_DIM);
        let name = self
            .name
            .clone()
            .or_else(|| self.fixture.clone())
            .unwrap_or_else(|| "run".to_string());
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Config(format!("name {name:?} must be ASCII letters, digits, - or _")));
        }
        let cfg_err = |e: Error| Error::Config(e.to_string());
        system.validate().map_err(cfg_err)?;
        evolution.validate().map_err(cfg_err)?;
        FockBasis::new(fock_dim).map_err(cfg_err)?;
        if evolution.tail_levels >= fock_dim {
            return Err(Error::Config("tail_levels must be below fock_dim".into()));
        }
        if let SolverConfig::Qsd { n_traj: 0, .. } = self.solver {
            return Err(Error::Config("n_traj must be >= 1".into()));
        }
        if let Some(w) = &self.outputs.wigner {
            if let Some(g) = &w.grid {
                g.validate().map_err(cfg_err)?;
            }
            if w.resolution.is_some_and(|n| n < 2) {
                return Err(Error::Config("wigner resolution must be >= 2".into()));
            }
            if w.times.iter().any(|&t| !(0.0..=evolution.t_end).contains(&t)) {
                return Err(Error::Config("wigner times must lie in [0, t_end]".into()));
            }
        }
        if self.outputs.poincare.is_some() && system.drive.period().is_none() {
            return Err(Error::Config("a Poincare section needs a periodic drive".into()));
        }
        if let Some(p) = &self.outputs.poincare {
            if p.n_points == 0 || !(p.t_transient >= 0.0) {
                return Err(Error::Config("poincare needs n_points >= 1 and t_transient >= 0".into()));
            }
        }
        if let Some(l) = &self.outputs.lyapunov {
            l.validate().map_err(cfg_err)?;
        }
        if !(self.semiclassical.amplitude_damping >= 0.0) {
            return Err(Error::Config("amplitude_damping must be >= 0".into()));
        }
        if self.outputs.png && self.outputs.wigner.is_none() {
            return Err(Error::Config("png output needs a wigner output".into()));
        }
        Ok(ResolvedRun {
            name,
            fixture: self.fixture.clone(),
            system,
            solver: self.solver,
            evolution,
            outputs: self.outputs.clone(),
            semiclassical: self.semiclassical,
            seed: self.seed,
            fock_dim,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    /// Accepted range of the maximum excitation.
    pub band: [f64; 2],
}

/// A sweep as written in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: SweepSpec,
    /// Constant-excitation selection and transition curve.
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.spec.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        if let Some(sel) = &cfg.selection {
            if !(sel.band[0] <= sel.band[1]) {
                return Err(Error::Config("selection band must be [min, max]".into()));
            }
            if cfg.spec.axis2.is_none() {
                return Err(Error::Config("selection needs a two-axis sweep".into()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::DriveSpec;

    #[test]
    fn fixture_only_config() {
        let r = RunConfig::parse("fixture = \"fig1\"").unwrap().resolve().unwrap();
        assert_eq!(r.name, "fig1");
        assert_eq!(r.system.delta, -15.0);
        assert_eq!(r.fock_dim, 40);
        assert_eq!(r.solver, SolverConfig::Lindblad);
        assert!(r.outputs.timeseries);
    }

    #[test]
    fn full_config() {
        let text = r#"
            name = "weak"
            seed = 7
            fock_dim = 12
            [system]
            delta = 1.0
            chi = 0.5
            nbar = 0.2
            drive = { kind = "constant", amp = 0.5 }
            [solver]
            kind = "qsd"
            n_traj = 50
            [evolution]
            t_end = 2.0
            dt = 0.001
            record_every = 20
            [outputs.wigner]
            resolution = 21
            times = [1.0]
            [outputs.lyapunov]
            t_transient = 5.0
            t_total = 20.0
        "#;
        let r = RunConfig::parse(text).unwrap().resolve().unwrap();
        assert_eq!(r.seed, 7);
        assert_eq!(r.system.drive, DriveSpec::Constant { amp: 0.5 });
        assert_eq!(r.solver, SolverConfig::Qsd { n_traj: 50, scheme: QsdScheme::Auto });
        assert_eq!(r.evolution.record_every, 20);
        assert_eq!(r.outputs.wigner.as_ref().unwrap().times, vec![1.0]);
        assert_eq!(r.outputs.lyapunov.unwrap().t_total, 20.0);
    }

    #[test]
    fn config_errors() {
        for text in [
            "",
            "fixture = \"fig9\"",
            "fixture = \"fig1\"\nbogus = 1",
            "fixture = \"fig1\"\n[evolution]\ndt = -0.001",
            "fixture = \"fig1\"\nfock_dim = 1",
            "fixture = \"fig1\"\n[system]\ndelta = -15.0\nchi = 2.5\ndrive = { kind = \"bichromatic\", f0 = 10.2, f1 = 10.2, delta_mod = 5.0 }",
            "[system]\ndelta = 0.0\nchi = 0.0\ndrive = { kind = \"constant\", amp = 1.0 }\n[outputs.poincare]",
            "fixture = \"fig1\"\nname = \"a/b\"",
            "fixture = \"fig1\"\n[outputs]\npng = true",
        ] {
            let res = RunConfig::parse(text).and_then(|c| c.resolve());
            assert!(matches!(res, Err(Error::Config(_))), "{text:?} gave {res:?}");
        }
    }

    #[test]
    fn sweep_config() {
        let text = r#"
            fock_dim = 30
            max_fock_dim = 80
            [base]
            delta = -15.0
            chi = 0.1
            drive = { kind = "gaussian_train", amp = 12.0, width = 0.1, period = 1.2566370614359172 }
            [axis1]
            param = "amp"
            start = 6.0
            stop = 24.0
            step = 2.0
            [axis2]
            param = "chi"
            values = [0.1, 0.2]
            [selection]
            band = [3.6958, 5.5217]
        "#;
        let c = SweepConfig::parse(text).unwrap();
        assert_eq!(c.spec.points().unwrap().len(), 20);
        assert_eq!(c.selection.unwrap().band, [3.6958, 5.5217]);
        assert!(c.spec.quantum && c.spec.lyapunov);
        let bad = text.replace("values = [0.1, 0.2]", "values = []");
        assert!(matches!(SweepConfig::parse(&bad), Err(Error::Config(_))));
    }
}
