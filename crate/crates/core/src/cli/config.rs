//! Job configuration files (TOML). Complex numbers are `[re, im]` pairs.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bochner::Geometry;
use crate::error::{Error, Result};
use crate::qdiff::{extract_principal_part, LaurentQD, PolynomialQD, PrincipalPart, Domain};

pub type Pair = [f64; 2];

fn to_complex(pairs: &[Pair]) -> Vec<Complex64> {
    pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DifferentialConfig {
    /// `(c_0 + c_1 z + … + c_d z^d) dz²`, pole at infinity.
    Polynomial { coeffs: Vec<Pair> },
    /// `Σ a_k z^{-k} dz²` with `laurent = [a_n, …, a_2]` and an optional
    /// tail `[b_{-1}, b_0, …]` (which puts it on the punctured plane).
    Laurent {
        pole_order: usize,
        laurent: Vec<Pair>,
        #[serde(default)]
        tail: Vec<Pair>,
    },
    /// Principal part `(ε; α_r, …, α_1)` with lower coefficients
    /// `[a_{n−r}, …, a_2]`.
    Principal {
        parity: u8,
        alphas: Vec<Pair>,
        #[serde(default)]
        lower: Vec<Pair>,
    },
}

/// The differential of a job, resolved.
#[derive(Debug, Clone)]
pub enum Differential {
    Polynomial(PolynomialQD),
    Laurent(LaurentQD),
}

impl DifferentialConfig {
    pub fn resolve(&self) -> Result<Differential> {
        match self {
            DifferentialConfig::Polynomial { coeffs } => {
                Ok(Differential::Polynomial(PolynomialQD::new(to_complex(coeffs))?))
            }
            DifferentialConfig::Laurent { pole_order, laurent, tail } => {
                let domain = if tail.is_empty() { Domain::PuncturedDisk } else { Domain::PuncturedPlane };
                Ok(Differential::Laurent(LaurentQD::new(
                    *pole_order,
                    to_complex(laurent),
                    to_complex(tail),
                    domain,
                )?))
            }
            DifferentialConfig::Principal { parity, alphas, lower } => {
                let p = PrincipalPart::new(*parity, to_complex(alphas))?;
                let lower = if lower.is_empty() {
                    vec![Complex64::default(); p.pole_order() - p.r() - 1]
                } else {
                    to_complex(lower)
                };
                Ok(Differential::Laurent(crate::hmap::assemble(&p, &lower)?))
            }
        }
    }
}

impl Differential {
    /// The Laurent data at the pole (polynomials are pulled to `u = 1/z`).
    pub fn at_pole(&self) -> LaurentQD {
        match self {
            Differential::Polynomial(p) => p.at_infinity(),
            Differential::Laurent(q) => q.clone(),
        }
    }

    pub fn principal_part(&self) -> Result<PrincipalPart> {
        extract_principal_part(&self.at_pole())
    }

    /// Principal part and lower coefficients `a_{n−r}, …, a_2` at the pole.
    pub fn pipeline_input(&self) -> Result<(PrincipalPart, Vec<Complex64>)> {
        let q = self.at_pole();
        let p = extract_principal_part(&q)?;
        let n = p.pole_order();
        let lower = (2..=(n - p.r())).rev().map(|k| q.a(k)).collect();
        Ok((p, lower))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeometryKind {
    Disk,
    Annulus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_geometry")]
    pub geometry: GeometryKind,
    /// Disk radius.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Annulus inner radius; the pipeline chooses one when absent.
    pub inner: Option<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_newton")]
    pub max_newton: usize,
}

fn default_geometry() -> GeometryKind {
    GeometryKind::Disk
}
fn default_radius() -> f64 {
    6.0
}
fn default_n() -> usize {
    129
}
fn default_tol() -> f64 {
    1e-9
}
fn default_newton() -> usize {
    60
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            geometry: default_geometry(),
            radius: default_radius(),
            inner: None,
            n: default_n(),
            tol: default_tol(),
            max_newton: default_newton(),
        }
    }
}

impl SolverConfig {
    pub fn geometry(&self) -> Result<Geometry> {
        match self.geometry {
            GeometryKind::Disk => Ok(Geometry::Disk { radius: self.radius }),
            GeometryKind::Annulus => Ok(Geometry::Annulus {
                inner: self.inner.ok_or_else(|| Error::Config("annulus geometry needs `inner`".into()))?,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionConfig {
    /// Explicit levels; otherwise `count` default levels.
    pub levels: Option<Vec<f64>>,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoliateConfig {
    /// Radius of the circle of starting points; chosen from the zeros when absent.
    pub radius: Option<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

fn default_seeds() -> usize {
    12
}
fn default_length() -> f64 {
    4.0
}

impl Default for FoliateConfig {
    fn default() -> Self {
        FoliateConfig { radius: None, seeds: default_seeds(), length: default_length() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub differential: DifferentialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub exhaustion: ExhaustionConfig,
    #[serde(default)]
    pub foliate: FoliateConfig,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: JobConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks value ranges and that the differential is well formed.
    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        if !(s.radius > 0.0) {
            return Err(Error::Config("solver.radius must be positive".into()));
        }
        if let Some(inner) = s.inner {
            if !(inner > 0.0 && inner < 1.0) {
                return Err(Error::Config("solver.inner must lie in (0, 1)".into()));
            }
        }
        if s.n < 64 {
            return Err(Error::Config("solver.n must be at least 64".into()));
        }
        if !(s.tol > 0.0) {
            return Err(Error::Config("solver.tol must be positive".into()));
        }
        if let Some(levels) = &self.exhaustion.levels {
            if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] <= 0.0 {
                return Err(Error::Config(
                    "exhaustion.levels must be positive and strictly increasing".into(),
                ));
            }
        }
        if self.foliate.seeds == 0 || !(self.foliate.length > 0.0) {
            return Err(Error::Config("foliate.seeds and foliate.length must be positive".into()));
        }
        self.differential.resolve().map_err(|e| Error::Config(format!("differential: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_job() {
        let text = r#"
            seed = 3
            [differential]
            kind = "polynomial"
            coeffs = [[0, 1], [0, 0], [1, 0]]
            [solver]
            radius = 7.0
            n = 129
            [exhaustion]
            count = 3
        "#;
        let c = JobConfig::parse(text).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.exhaustion.count, Some(3));
        let p = c.differential.resolve().unwrap().principal_part().unwrap();
        assert_eq!(p.pole_order(), 6);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = "[differential]\nkind = \"polynomial\"\ncoeffs = [[1, 0]]\ncolour = 1\n";
        assert!(JobConfig::parse(text).is_err());
        let text = "bogus = 1\n[differential]\nkind = \"polynomial\"\ncoeffs = [[1, 0]]\n";
        let err = JobConfig::parse(text).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn rejects_vanishing_leading_coefficient() {
        let text = "[differential]\nkind = \"laurent\"\npole_order = 4\nlaurent = [[0, 0], [0, 0], [1, 0]]\n";
        assert!(JobConfig::parse(text).unwrap_err().is_config());
    }

    #[test]
    fn principal_input_round_trips() {
        let text = "[differential]\nkind = \"principal\"\nparity = 0\nalphas = [[1, 0], [0, 0], [0, 0.5]]\nlower = [[0.1, 0], [0, 0.2]]\n";
        let c = JobConfig::parse(text).unwrap();
        let (p, lower) = c.differential.resolve().unwrap().pipeline_input().unwrap();
        assert_eq!(p.alphas().len(), 3);
        assert_eq!(lower, vec![Complex64::new(0.1, 0.0), Complex64::new(0.0, 0.2)]);
    }
}
