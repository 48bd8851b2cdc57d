use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{GridError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Generator,
    Vsc,
    Passive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Series element between two buses. Give either `r` and `x` (impedance) or
/// `g` and `b` (admittance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Total line charging, split equally between the two ends.
    #[serde(default)]
    pub shunt_b: f64,
}

impl Branch {
    pub fn series_admittance(&self) -> Result<Complex64> {
        match (self.r, self.x, self.g, self.b) {
            (Some(r), Some(x), None, None) => {
                let z = Complex64::new(r, x);
                if z.norm() == 0.0 {
                    return Err(GridError::Invalid(format!("branch {} has zero impedance", self.id)));
                }
                Ok(z.inv())
            }
            (None, None, Some(g), Some(b)) => Ok(Complex64::new(g, b)),
            _ => Err(GridError::Invalid(format!("branch {} must give exactly one of (r, x) or (g, b)", self.id))),
        }
    }
}

/// Classical machine behind transient reactance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub bus: usize,
    /// Inertia coefficient `2H` (s).
    pub m: f64,
    pub d: f64,
    /// Internal voltage magnitude.
    pub e: f64,
    /// Mechanical power before slack balancing.
    pub pm: f64,
    pub xd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VscTerminal {
    pub bus: usize,
    pub pvs: f64,
    pub qvs: f64,
    /// Largest allowed `|ΔPv|`.
    pub limit: f64,
}

/// Constant-admittance load `g + jb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: usize,
    pub g: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCase {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub frequency_hz: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<GeneratorParams>,
    #[serde(default)]
    pub vscs: Vec<VscTerminal>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

impl NetworkCase {
    /// Parse and validate a TOML case document. Syntax errors carry line and
    /// column information.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let case: NetworkCase = toml::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GridError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            GridError::Parse(msg) => GridError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("case serializes")
    }

    pub fn ng(&self) -> usize {
        self.generators.len()
    }

    pub fn nv(&self) -> usize {
        self.vscs.len()
    }

    /// Base angular frequency ω0 (rad/s).
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency_hz
    }

    /// Bus id to position in `buses`.
    pub fn bus_index(&self) -> BTreeMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GridError::Invalid(msg));
        if !(self.base_mva > 0.0) || !(self.frequency_hz > 0.0) {
            return bad("base_mva and frequency_hz must be positive".into());
        }
        if self.generators.is_empty() {
            return bad("case has no generators".into());
        }
        let index = self.bus_index();
        if index.len() != self.buses.len() {
            return bad("duplicate bus id".into());
        }
        let kind_of = |id: usize| index.get(&id).map(|&i| self.buses[i].kind);

        let mut ids = BTreeSet::new();
        for br in &self.branches {
            if !ids.insert(br.id) {
                return bad(format!("duplicate branch id {}", br.id));
            }
            if kind_of(br.from).is_none() || kind_of(br.to).is_none() {
                return bad(format!("branch {} references an unknown bus", br.id));
            }
            if br.from == br.to {
                return bad(format!("branch {} is a self-loop", br.id));
            }
            let y = br.series_admittance()?;
            if !y.re.is_finite() || !y.im.is_finite() || !br.shunt_b.is_finite() {
                return bad(format!("branch {} has non-finite parameters", br.id));
            }
        }

        let mut used = BTreeSet::new();
        for (k, g) in self.generators.iter().enumerate() {
            if kind_of(g.bus) != Some(BusKind::Generator) {
                return bad(format!("generator {k} must sit on a bus of kind generator (bus {})", g.bus));
            }
            if !used.insert(g.bus) {
                return bad(format!("bus {} carries more than one generator", g.bus));
            }
            if !(g.m > 0.0) || !(g.e > 0.0) || !(g.d >= 0.0) || !(g.xd > 0.0) || !g.pm.is_finite() {
                return bad(format!("generator {k} needs m > 0, e > 0, d >= 0, xd > 0"));
            }
        }
        for (k, v) in self.vscs.iter().enumerate() {
            if kind_of(v.bus) != Some(BusKind::Vsc) {
                return bad(format!("vsc {k} must sit on a bus of kind vsc (bus {})", v.bus));
            }
            if !used.insert(v.bus) {
                return bad(format!("bus {} carries more than one device", v.bus));
            }
            if !(v.limit > 0.0) || !v.pvs.is_finite() || !v.qvs.is_finite() {
                return bad(format!("vsc {k} needs a positive limit and finite setpoints"));
            }
        }
        for bus in &self.buses {
            if bus.kind != BusKind::Passive && !used.contains(&bus.id) {
                return bad(format!("bus {} is declared {:?} but has no device", bus.id, bus.kind));
            }
        }
        for l in &self.loads {
            if kind_of(l.bus).is_none() {
                return bad(format!("load references unknown bus {}", l.bus));
            }
            if !l.g.is_finite() || !l.b.is_finite() {
                return bad(format!("load at bus {} has non-finite admittance", l.bus));
            }
        }
        Ok(())
    }

    /// Copy with one branch removed.
    pub fn without_branch(&self, id: usize) -> Result<Self> {
        let mut out = self.clone();
        let before = out.branches.len();
        out.branches.retain(|b| b.id != id);
        if out.branches.len() == before {
            return Err(GridError::Invalid(format!("no branch with id {id}")));
        }
        Ok(out)
    }

    /// Copy with every load admittance at `bus` scaled by `1 + fraction`.
    pub fn with_load_scaled(&self, bus: usize, fraction: f64) -> Result<Self> {
        let mut out = self.clone();
        let mut found = false;
        for l in out.loads.iter_mut().filter(|l| l.bus == bus) {
            l.g *= 1.0 + fraction;
            l.b *= 1.0 + fraction;
            found = true;
        }
        if !found {
            return Err(GridError::Invalid(format!("no load at bus {bus}")));
        }
        Ok(out)
    }

    /// Copy with an extra shunt conductance at `bus`.
    pub fn with_shunt(&self, bus: usize, g: f64) -> Result<Self> {
        if !self.bus_index().contains_key(&bus) {
            return Err(GridError::Invalid(format!("no bus with id {bus}")));
        }
        let mut out = self.clone();
        out.loads.push(Load { bus, g, b: 0.0 });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
base_mva = 100.0
frequency_hz = 50.0

[[buses]]
id = 1
kind = "generator"

[[buses]]
id = 2
kind = "passive"

[[branches]]
id = 1
from = 1
to = 2
r = 0.0
x = 0.1

[[generators]]
bus = 1
m = 10.0
d = 1.0
e = 1.05
pm = 0.5
xd = 0.2

[[loads]]
bus = 2
g = 0.5
b = 0.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = NetworkCase::from_toml_str(TINY).unwrap();
        assert_eq!(c.ng(), 1);
        assert_eq!(c.nv(), 0);
        let again = NetworkCase::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn series_admittance_forms() {
        let c = NetworkCase::from_toml_str(TINY).unwrap();
        let y = c.branches[0].series_admittance().unwrap();
        assert!((y - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn syntax_error_reports_line() {
        let err = NetworkCase::from_toml_str("base_mva = 100.0\nfrequency_hz = = 5\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn generator_on_wrong_bus_kind_is_rejected() {
        let text = TINY.replace("kind = \"generator\"", "kind = \"passive\"");
        assert!(matches!(NetworkCase::from_toml_str(&text), Err(GridError::Invalid(_))));
    }

    #[test]
    fn negative_inertia_is_rejected() {
        let text = TINY.replace("m = 10.0", "m = -1.0");
        assert!(NetworkCase::from_toml_str(&text).is_err());
    }

    #[test]
    fn removing_unknown_branch_fails() {
        let c = NetworkCase::from_toml_str(TINY).unwrap();
        assert!(c.without_branch(7).is_err());
        assert_eq!(c.without_branch(1).unwrap().branches.len(), 0);
    }
}
