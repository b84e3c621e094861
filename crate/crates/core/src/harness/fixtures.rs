//! Named parameter sets for the six figures, with the diagnostics reported
//! for each.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::drive::DriveSpec;
use crate::error::{Error, Result};
use crate::fockspace::SystemParams;

const CAPTIONS: &str = include_str!("../../fixtures/captions.toml");

/// A reported value and the band accepted around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub nominal: f64,
    pub min: f64,
    pub max: f64,
}

impl Target {
    pub fn around(nominal: f64, tol: f64) -> Self {
        Target { nominal, min: nominal - tol, max: nominal + tol }
    }

    pub fn band(nominal: f64, min: f64, max: f64) -> Self {
        Target { nominal, min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Post-transient means and the semiclassical exponent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Expected {
    pub excitation: Option<Target>,
    pub purity: Option<Target>,
    pub lyapunov: Option<Target>,
}

/// Solver settings that keep a fixture inside the truncation budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recommended {
    pub fock_dim: usize,
    pub dt: f64,
    pub t_end: f64,
    pub t_transient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fixture {
    pub name: &'static str,
    pub regime: &'static str,
    pub params: SystemParams,
    pub expected: Expected,
    pub recommended: Recommended,
}

fn bichromatic(delta: f64, chi: f64, f0: f64, f1: f64) -> SystemParams {
    SystemParams { delta, chi, nbar: 0.0, drive: DriveSpec::Bichromatic { f0, f1, delta_mod: 5.0 } }
}

fn pulses(amp: f64, chi: f64, width: f64) -> SystemParams {
    SystemParams {
        delta: -15.0,
        chi,
        nbar: 0.0,
        drive: DriveSpec::GaussianTrain { amp, width, period: 2.0 * PI / 5.0, offset: 0.0 },
    }
}

pub fn list_fixtures() -> Vec<Fixture> {
    let rec = |fock_dim, t_end| Recommended { fock_dim, dt: 1e-3, t_end, t_transient: 20.0 };
    vec![
        Fixture {
            name: "fig1",
            regime: "chaotic",
            params: bichromatic(-15.0, 2.0, 10.2, 10.2),
            expected: Expected { purity: Some(Target::band(0.09, 0.04, 0.18)), ..Default::default() },
            recommended: rec(40, 100.0),
        },
        Fixture {
            name: "fig2",
            regime: "deep chaotic",
            params: bichromatic(-14.25, 0.175, 20.4, 20.4),
            expected: Expected { purity: Some(Target::band(0.03, 0.01, 0.08)), ..Default::default() },
            recommended: rec(200, 60.0),
        },
        Fixture {
            name: "fig3",
            regime: "regular",
            params: bichromatic(-15.0, 0.7, 32.2, 10.2),
            expected: Expected { purity: Some(Target::band(0.7, 0.55, 0.85)), ..Default::default() },
            recommended: rec(60, 100.0),
        },
        Fixture {
            name: "fig4",
            regime: "chaotic",
            params: pulses(15.0, 0.7, 10.2),
            expected: Expected {
                excitation: Some(Target::around(2.5, 0.5)),
                purity: Some(Target::around(0.305, 0.08)),
                lyapunov: Some(Target::around(0.187, 0.05)),
            },
            // the pulses overlap into a nearly constant drive of about 216
            recommended: Recommended { fock_dim: 100, dt: 2.5e-4, t_end: 60.0, t_transient: 20.0 },
        },
        Fixture {
            name: "fig5",
            regime: "deep chaotic",
            params: pulses(20.4, 0.7, 0.1),
            expected: Expected {
                excitation: Some(Target::around(3.0, 0.6)),
                purity: Some(Target::around(0.22, 0.06)),
                lyapunov: Some(Target::around(0.4197, 0.08)),
            },
            recommended: rec(50, 100.0),
        },
        Fixture {
            name: "fig6",
            regime: "regular",
            params: pulses(12.0, 0.1, 0.1),
            expected: Expected {
                excitation: Some(Target::around(2.0, 0.5)),
                purity: Some(Target::around(0.922, 0.05)),
                lyapunov: Some(Target::around(-0.1693, 0.05)),
            },
            recommended: rec(40, 100.0),
        },
    ]
}

pub fn fixture(name: &str) -> Result<Fixture> {
    list_fixtures()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::Config(format!("unknown fixture {name:?}")))
}

fn caption_value(table: &toml::Table, key: &str) -> Result<f64> {
    match table.get(key) {
        Some(toml::Value::Float(x)) => Ok(*x),
        Some(toml::Value::Integer(n)) => Ok(*n as f64),
        Some(toml::Value::String(s)) if s == "2pi/5" => Ok(2.0 * PI / 5.0),
        _ => Err(Error::Format(format!("caption table: bad or missing {key}"))),
    }
}

/// Caption values for every fixture, from the checked-in table.
pub fn caption_table() -> Result<BTreeMap<String, SystemParams>> {
    let doc: toml::Table = CAPTIONS.parse().map_err(|e| Error::Format(format!("caption table: {e}")))?;
    let mut out = BTreeMap::new();
    for (name, entry) in doc {
        let t = entry.as_table().ok_or_else(|| Error::Format(format!("caption table: {name} is not a table")))?;
        let v = |k| caption_value(t, k);
        let drive = if t.contains_key("omega") {
            DriveSpec::GaussianTrain { amp: v("omega")?, width: v("width")?, period: v("period")?, offset: 0.0 }
        } else {
            DriveSpec::Bichromatic { f0: v("f0")?, f1: v("f1")?, delta_mod: v("delta_mod")? }
        };
        out.insert(name, SystemParams { delta: v("delta")?, chi: v("chi")?, nbar: 0.0, drive });
    }
    Ok(out)
}

/// Fails unless `params` are exactly the captioned values for `name`.
pub fn verify_caption(name: &str, params: &SystemParams) -> Result<()> {
    let table = caption_table()?;
    let expected = table
        .get(name)
        .ok_or_else(|| Error::Config(format!("fixture {name:?} has no caption entry")))?;
    if expected != params {
        return Err(Error::Config(format!(
            "fixture {name:?} drifted from its caption: {params:?} vs {expected:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_match_captions() {
        let fx = list_fixtures();
        assert_eq!(fx.len(), 6);
        assert_eq!(caption_table().unwrap().len(), 6);
        for f in &fx {
            verify_caption(f.name, &f.params).unwrap();
        }
    }

    #[test]
    fn caption_drift_is_caught() {
        let mut p = fixture("fig1").unwrap().params;
        p.chi = 2.01;
        assert!(verify_caption("fig1", &p).is_err());
        assert!(fixture("fig9").is_err());
    }

    #[test]
    fn quoted_values() {
        let f3 = fixture("fig3").unwrap();
        assert_eq!(f3.params, bichromatic(-15.0, 0.7, 32.2, 10.2));
        assert_eq!(f3.expected.purity.unwrap().nominal, 0.7);
        let f4 = fixture("fig4").unwrap().expected;
        assert_eq!(
            (f4.excitation.unwrap().nominal, f4.purity.unwrap().nominal, f4.lyapunov.unwrap().nominal),
            (2.5, 0.305, 0.187)
        );
        assert_eq!(fixture("fig2").unwrap().expected.purity.unwrap().nominal, 0.03);
        let DriveSpec::GaussianTrain { period, .. } = fixture("fig6").unwrap().params.drive else { panic!() };
        assert!((period - 1.2566370614359172).abs() < 1e-15);
    }

    #[test]
    fn targets() {
        let t = Target::around(0.187, 0.05);
        assert!(t.contains(0.2) && !t.contains(0.25));
        assert!(Target::band(0.09, 0.04, 0.18).contains(0.1735));
    }
}
