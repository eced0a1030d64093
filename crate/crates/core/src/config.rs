//! Declarative TOML run configs for the command-line surface.
//!
//! Every config carries a `version` field (current schema: 1) and is parsed
//! with unknown keys rejected. Matrices are given as nested row arrays, the
//! string "identity", or "@relative/path.csv" referencing a plain numeric CSV
//! resolved against the config file's directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::policy::GainFile;
use crate::trajectory::{CostSpec, LtvSystem, SystemDims};

pub const SCHEMA_VERSION: u32 = 1;

/// Config/schema-level failure; the CLI maps these to exit code 64.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

fn invalid(field: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

pub fn check_version(version: u32) -> CResult<()> {
    if version != SCHEMA_VERSION {
        return Err(invalid(
            "version",
            format!("unsupported schema version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    Ok(())
}

/// Matrix literal, named form, or CSV reference.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    Named(String),
}

fn read_csv_matrix(path: &Path) -> CResult<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: CResult<Vec<f64>> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| {
                    ConfigError(format!(
                        "{}:{}: bad number {cell:?}: {e}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect();
        rows.push(row?);
    }
    rows_to_matrix(&rows, &format!("{}", path.display()))
}

fn rows_to_matrix(rows: &[Vec<f64>], field: &str) -> CResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(invalid(field, "matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(invalid(field, "matrix has empty rows"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(field, "matrix rows have inconsistent lengths"));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

impl MatrixSpec {
    /// Resolves the spec to a concrete matrix. `expected` supplies the target
    /// shape, required by the "identity" shorthand and validated otherwise.
    pub fn resolve(
        &self,
        field: &str,
        expected: Option<(usize, usize)>,
        base_dir: &Path,
    ) -> CResult<DMatrix<f64>> {
        let m = match self {
            MatrixSpec::Rows(rows) => rows_to_matrix(rows, field)?,
            MatrixSpec::Named(name) => {
                if name == "identity" {
                    let (r, c) = expected
                        .ok_or_else(|| invalid(field, "\"identity\" needs a known target shape"))?;
                    if r != c {
                        return Err(invalid(field, "\"identity\" requires a square target"));
                    }
                    DMatrix::identity(r, c)
                } else if let Some(rel) = name.strip_prefix('@') {
                    read_csv_matrix(&base_dir.join(rel))?
                } else {
                    return Err(invalid(
                        field,
                        format!("unrecognized matrix literal {name:?} (use rows, \"identity\", or \"@file.csv\")"),
                    ));
                }
            }
        };
        if let Some((r, c)) = expected {
            if m.nrows() != r || m.ncols() != c {
                return Err(invalid(
                    field,
                    format!("expected a {r}x{c} matrix, got {}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        Ok(m)
    }
}

/// Vector literal or scalar broadcast over the target length.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    List(Vec<f64>),
}

impl VectorSpec {
    pub fn resolve(&self, field: &str, len: usize) -> CResult<DVector<f64>> {
        match self {
            VectorSpec::Scalar(v) => Ok(DVector::from_element(len, *v)),
            VectorSpec::List(vals) => {
                if vals.len() != len {
                    return Err(invalid(
                        field,
                        format!("expected length {len}, got {}", vals.len()),
                    ));
                }
                Ok(DVector::from_vec(vals.clone()))
            }
        }
    }
}

/// Value grid, explicit or uniformly spaced.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range { min: f64, max: f64, points: usize },
}

impl GridSpec {
    pub fn resolve(&self, field: &str) -> CResult<Vec<f64>> {
        match self {
            GridSpec::List(vals) => {
                if vals.is_empty() {
                    return Err(invalid(field, "grid is empty"));
                }
                Ok(vals.clone())
            }
            GridSpec::Range { min, max, points } => {
                if *points == 0 {
                    return Err(invalid(field, "grid needs at least one point"));
                }
                if max < min {
                    return Err(invalid(field, "grid max is below min"));
                }
                if *points == 1 {
                    return Ok(vec![*min]);
                }
                Ok((0..*points)
                    .map(|i| min + (max - min) * (i as f64) / ((points - 1) as f64))
                    .collect())
            }
        }
    }
}

/// System block: preset random walk or explicit per-step matrices. A single
/// A/B matrix is broadcast over the horizon.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub a: Option<Vec<MatrixSpec>>,
    #[serde(default)]
    pub b: Option<Vec<MatrixSpec>>,
}

impl SystemConfig {
    pub fn build(&self, base_dir: &Path) -> CResult<LtvSystem> {
        if let Some(preset) = &self.preset {
            if preset != "random_walk" {
                return Err(invalid(
                    "system.preset",
                    format!("unknown preset {preset:?}"),
                ));
            }
            if self.a.is_some() || self.b.is_some() {
                return Err(invalid(
                    "system",
                    "preset and explicit matrices are mutually exclusive",
                ));
            }
            let horizon = self
                .horizon
                .ok_or_else(|| invalid("system.horizon", "required with preset"))?;
            if horizon == 0 {
                return Err(invalid("system.horizon", "must be >= 1"));
            }
            return Ok(LtvSystem::random_walk(horizon));
        }
        let a_specs = self
            .a
            .as_ref()
            .ok_or_else(|| invalid("system.a", "required without a preset"))?;
        let b_specs = self
            .b
            .as_ref()
            .ok_or_else(|| invalid("system.b", "required without a preset"))?;
        let horizon = self.horizon.unwrap_or(a_specs.len().max(b_specs.len()));
        if horizon == 0 {
            return Err(invalid("system.horizon", "must be >= 1"));
        }
        let expand = |specs: &[MatrixSpec], field: &str| -> CResult<Vec<DMatrix<f64>>> {
            let mats: CResult<Vec<_>> = specs
                .iter()
                .map(|s| s.resolve(field, None, base_dir))
                .collect();
            let mats = mats?;
            if mats.len() == horizon {
                Ok(mats)
            } else if mats.len() == 1 {
                Ok(vec![mats[0].clone(); horizon])
            } else {
                Err(invalid(
                    field,
                    format!("expected 1 or {horizon} matrices, got {}", mats.len()),
                ))
            }
        };
        let a = expand(a_specs, "system.a")?;
        let b = expand(b_specs, "system.b")?;
        LtvSystem::new(a, b).map_err(|e| invalid("system", e))
    }
}

/// Cost block; both weights default to the identity.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub q: Option<MatrixSpec>,
    #[serde(default)]
    pub r: Option<MatrixSpec>,
}

impl CostConfig {
    pub fn build(&self, dims: SystemDims, base_dir: &Path) -> CResult<CostSpec> {
        let (n_x, n_u) = (dims.n_x(), dims.n_u());
        let q = match &self.q {
            Some(spec) => spec.resolve("cost.q", Some((n_x, n_x)), base_dir)?,
            None => DMatrix::identity(n_x, n_x),
        };
        let r = match &self.r {
            Some(spec) => spec.resolve("cost.r", Some((n_u, n_u)), base_dir)?,
            None => DMatrix::identity(n_u, n_u),
        };
        CostSpec::new(q, r).map_err(|e| invalid("cost", e))
    }
}

/// Ambiguity block: nominal second moment, optional mean, radius.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbiguityConfig {
    pub m0: MatrixSpec,
    #[serde(default)]
    pub mean0: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeConfig {
    pub version: u32,
    pub method: String,
    pub system: SystemConfig,
    #[serde(default)]
    pub cost: CostConfig,
    pub ambiguity: AmbiguityConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorstCaseConfig {
    pub version: u32,
    /// Direct quadratic objective matrix; exclusive with `controller`.
    #[serde(default)]
    pub c: Option<MatrixSpec>,
    /// Controller file whose regret/cost matrix supplies the objective.
    #[serde(default)]
    pub controller: Option<PathBuf>,
    /// "regret" (default) or "cost"; meaningful with `controller`.
    #[serde(default)]
    pub objective: Option<String>,
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    pub ambiguity: AmbiguityConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleConfig {
    pub version: u32,
    pub c: f64,
    pub rho_grid: GridSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFileConfig {
    pub version: u32,
    pub system: SystemConfig,
    #[serde(default)]
    pub cost: CostConfig,
    pub true_mean: VectorSpec,
    #[serde(default)]
    pub true_cov: Option<MatrixSpec>,
    pub samples_per_trial: usize,
    pub trials: usize,
    pub radii: GridSpec,
    pub seed: u64,
    #[serde(default)]
    pub jitter: Option<f64>,
    /// Output path prefix; `<prefix>.json` and `<prefix>.csv` are written.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub version: u32,
    pub controller: PathBuf,
    pub system: SystemConfig,
    #[serde(default)]
    pub cost: CostConfig,
    pub true_mean: VectorSpec,
    #[serde(default)]
    pub true_cov: Option<MatrixSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Parses a TOML config file into the given schema type.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> CResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

/// Loads a controller gain file: either a bare gain object or any JSON
/// document with a "gain" field holding one (synthesize output qualifies).
pub fn load_gain_file(path: &Path) -> CResult<GainFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let payload = value.get("gain").unwrap_or(&value);
    serde_json::from_value(payload.clone())
        .map_err(|e| ConfigError(format!("{}: not a gain file: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"
version = 1
method = "ce"
nonsense = true
[system]
preset = "random_walk"
horizon = 1
[ambiguity]
m0 = "identity"
"#;
        let err = toml::from_str::<SynthesizeConfig>(text).unwrap_err();
        assert!(err.to_string().contains("nonsense"), "{err}");
    }

    #[test]
    fn parses_minimal_synthesize() {
        let text = r#"
version = 1
method = "mro"
[system]
preset = "random_walk"
horizon = 2
[ambiguity]
m0 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
radius = 0.5
"#;
        let cfg: SynthesizeConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.method, "mro");
        let sys = cfg.system.build(Path::new(".")).unwrap();
        assert_eq!(sys.dims().horizon, 2);
        let m0 = cfg
            .ambiguity
            .m0
            .resolve("ambiguity.m0", Some((3, 3)), Path::new("."))
            .unwrap();
        assert_eq!(m0, DMatrix::identity(3, 3));
    }

    #[test]
    fn grid_range_resolution() {
        let grid = GridSpec::Range {
            min: 0.0,
            max: 3.0,
            points: 13,
        };
        let vals = grid.resolve("radii").unwrap();
        assert_eq!(vals.len(), 13);
        assert_eq!(vals[0], 0.0);
        assert_eq!(vals[12], 3.0);
        assert!((vals[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn csv_matrix_reference() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.csv"), "1.0, 0.5\n0.5, 2.0\n").unwrap();
        let spec = MatrixSpec::Named("@m.csv".to_string());
        let m = spec.resolve("m0", Some((2, 2)), dir.path()).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]));
    }

    #[test]
    fn broadcast_time_invariant_system() {
        let text = r#"
version = 1
method = "ce"
[system]
horizon = 3
a = [[[0.9]]]
b = [[[1.0]]]
[ambiguity]
m0 = "identity"
"#;
        let cfg: SynthesizeConfig = toml::from_str(text).unwrap();
        let sys = cfg.system.build(Path::new(".")).unwrap();
        assert_eq!(sys.dims().horizon, 3);
        assert_eq!(sys.a()[2][(0, 0)], 0.9);
    }

    #[test]
    fn scalar_mean_broadcasts() {
        let spec = VectorSpec::Scalar(1.0);
        let v = spec.resolve("true_mean", 4).unwrap();
        assert_eq!(v, DVector::from_element(4, 1.0));
    }

    #[test]
    fn gain_file_plain_and_wrapped() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("k.json");
        fs::write(&plain, r#"{"n":1,"m":1,"T":1,"K":[-0.4,0.0]}"#).unwrap();
        let g = load_gain_file(&plain).unwrap();
        assert_eq!(g.k, vec![-0.4, 0.0]);

        let wrapped = dir.path().join("sol.json");
        fs::write(
            &wrapped,
            r#"{"method":"mro","gain":{"n":1,"m":1,"T":1,"K":[-0.4,0.0]},"objective":0.1}"#,
        )
        .unwrap();
        let g = load_gain_file(&wrapped).unwrap();
        assert_eq!(g.horizon, 1);
    }

    #[test]
    fn version_gate() {
        assert!(check_version(1).is_ok());
        assert!(check_version(2).is_err());
    }
}
