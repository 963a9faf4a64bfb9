//! Run configuration: a TOML file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lpmech::algebroid::{PhasePoint, StructureTensor};
use lpmech::models::{self, constant_table_system, quadratic_potential, SystemBundle, SystemParams};
use lpmech::Error;
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

pub const OUT_DIR_ENV: &str = "LPMECH_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "lpmech-out";
pub const DEFAULT_SEED: u64 = 42;

/// A number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Numbers {
    One(f64),
    Many(Vec<f64>),
}

impl Numbers {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Numbers::One(x) => vec![*x],
            Numbers::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initial {
    pub q: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    pub method: Option<String>,
    pub step: Option<f64>,
    pub t_final: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    /// Spacing of recorded samples.
    pub sample_interval: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verify {
    pub samples: Option<usize>,
    pub fd_step: Option<f64>,
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: Option<PathBuf>,
}

/// Constant-table system: `[e_α, e_β] = Σ value·e_γ` entries given as
/// `[α, β, γ, value]` with 1-based indices.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTable {
    pub name: Option<String>,
    pub fiber_dim: usize,
    /// `m` rows of `n` anchor coefficients `ρ^i_α`.
    #[serde(default)]
    pub anchor: Vec<Vec<f64>>,
    #[serde(default)]
    pub brackets: Vec<[f64; 4]>,
    /// `n` diagonal entries or `n` rows.
    pub cometric: Option<Numbers2>,
    pub stiffness: Option<Numbers2>,
    pub linear: Option<Vec<f64>>,
    pub offset: Option<f64>,
}

/// A diagonal (flat list) or a full matrix (list of rows).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Numbers2 {
    Diagonal(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl Numbers2 {
    fn matrix(&self, k: usize, what: &str) -> Result<DMatrix<f64>, Error> {
        match self {
            Numbers2::Diagonal(d) if d.len() == k => Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d))),
            Numbers2::Rows(r) if r.len() == k && r.iter().all(|row| row.len() == k) => {
                Ok(DMatrix::from_fn(k, k, |i, j| r[i][j]))
            }
            _ => Err(Error::Config(format!("{what} must be {k} diagonal entries or {k} rows of {k}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Numbers>,
    pub energy: Option<f64>,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub verify: Verify,
    #[serde(default)]
    pub output: Output,
    pub system_table: Option<SystemTable>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Output directory: config, then the environment, then a fixed default.
    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// Builds the configured system with energy and initial point applied.
    pub fn bundle(&self) -> Result<SystemBundle, Error> {
        let name = self.system.as_deref().unwrap_or(if self.system_table.is_some() { "inline" } else { "" });
        let mut bundle = match (name, &self.system_table) {
            ("", _) => return Err(Error::Config("no system given (set `system` or pass --system)".into())),
            ("inline", Some(t)) => {
                if !self.params.is_empty() {
                    return Err(Error::Config("inline systems take no params".into()));
                }
                table_system(t, self.energy, &self.initial)?
            }
            ("inline", None) => return Err(Error::Config("system = \"inline\" needs a [system_table]".into())),
            (_, Some(_)) => return Err(Error::Config("[system_table] requires system = \"inline\"".into())),
            (registered, None) => {
                let params = SystemParams(self.params.iter().map(|(k, v)| (k.clone(), v.to_vec())).collect());
                models::by_name(registered, &params)?
            }
        };
        if let Some(e) = self.energy {
            bundle = bundle.with_energy(e);
        }
        if self.initial.q.is_some() || self.initial.y.is_some() {
            let q = self.initial.q.clone().unwrap_or_else(|| bundle.initial.q.clone());
            let y = self.initial.y.clone().unwrap_or_else(|| bundle.initial.y.clone());
            bundle = bundle.with_initial(PhasePoint::new(q, y))?;
        }
        Ok(bundle)
    }
}

fn table_system(t: &SystemTable, energy: Option<f64>, initial: &Initial) -> Result<SystemBundle, Error> {
    let n = t.fiber_dim;
    if n == 0 {
        return Err(Error::Config("system_table.fiber_dim must be at least 1".into()));
    }
    let m = t.anchor.len();
    if t.anchor.iter().any(|row| row.len() != n) {
        return Err(Error::Config(format!("system_table.anchor rows must have {n} entries")));
    }
    let anchor = DMatrix::from_fn(m, n, |i, a| t.anchor[i][a]);
    let mut c = StructureTensor::zeros(n);
    for &[a, b, g, value] in &t.brackets {
        let index = |x: f64| -> Result<usize, Error> {
            if x.fract() == 0.0 && x >= 1.0 && x <= n as f64 {
                Ok(x as usize - 1)
            } else {
                Err(Error::Config(format!("bracket index {x} outside 1..={n}")))
            }
        };
        let (a, b, g) = (index(a)?, index(b)?, index(g)?);
        if a == b {
            return Err(Error::Config("bracket entries need two different indices".into()));
        }
        c.set_bracket(a, b, g, c.get(g, a, b) + value);
    }
    let cometric = t.cometric.as_ref().map_or(Ok(DMatrix::identity(n, n)), |x| x.matrix(n, "system_table.cometric"))?;
    let stiffness = t.stiffness.as_ref().map_or(Ok(DMatrix::zeros(m, m)), |x| x.matrix(m, "system_table.stiffness"))?;
    let linear = DVector::from_vec(t.linear.clone().unwrap_or_else(|| vec![0.0; m]));
    let potential = quadratic_potential(stiffness, linear, t.offset.unwrap_or(0.0))?;
    let q = initial.q.clone().unwrap_or_else(|| vec![0.0; m]);
    let y = initial.y.clone().unwrap_or_else(|| {
        let mut y = vec![0.0; n];
        y[0] = 1.0;
        y
    });
    let e = energy.unwrap_or_else(|| potential.at(&q) + 0.5);
    let name = t.name.clone().unwrap_or_else(|| "inline".into());
    constant_table_system(&name, anchor, c, cometric, potential, e, PhasePoint::new(q, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = RunConfig::parse(
            r#"
            system = "heavy-top"
            energy = 2.0
            [params]
            I = [1.0, 2.0, 3.0]
            mgl = 1.0
            [initial]
            y = [0.1, 0.2, 0.3]
            [integrator]
            method = "rk4"
            step = 1e-3
            t_final = 1.0
            [verify]
            samples = 10
            seed = 7
            [output]
            dir = "out"
            "#,
        )
        .unwrap();
        let b = cfg.bundle().unwrap();
        assert_eq!(b.name, "heavy-top");
        assert_eq!(b.initial.y, vec![0.1, 0.2, 0.3]);
        assert_eq!(cfg.out_dir(), PathBuf::from("out"));
    }

    #[test]
    fn rejects_unknown_keys_and_params() {
        assert!(RunConfig::parse("sytem = \"x\"").is_err());
        let cfg = RunConfig::parse("system = \"rigid-body\"\n[params]\nmass = 1.0").unwrap();
        assert!(matches!(cfg.bundle(), Err(Error::Config(_))));
    }

    #[test]
    fn inline_table_matches_rigid_body() {
        let cfg = RunConfig::parse(
            r#"
            system = "inline"
            [system_table]
            fiber_dim = 3
            brackets = [[1, 2, 3, 1.0], [2, 3, 1, 1.0], [3, 1, 2, 1.0]]
            cometric = [1.0, 0.5, 0.3333333333333333]
            "#,
        )
        .unwrap();
        let b = cfg.bundle().unwrap();
        let pi = b.model.poisson_matrix(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(pi[(0, 1)], -1.0);
        assert_eq!(b.energy.0, 0.5);
    }
}
