//! JSON experiment configuration.
//!
//! ```json
//! {"A": [[...]], "B": [[...]], "Q": [[...]], "R": [[...]], "Sigma": [[...]],
//!  "K0": [[...]], "methods": ["gd", "ngd", "qn"], "grad_tol": 1e-10,
//!  "max_iter": 500, "dare_tol": 1e-13, "seed": 0}
//! ```
//!
//! `A`, `B`, `Q` and `R` are required. `Sigma` defaults to the identity, `K0`
//! to zero and `methods` to all three.

use std::fmt;
use std::path::{Path, PathBuf};

use lqropt_core::matlin::{lambda_min, relative_asymmetry, SYMMETRY_TOL};
use lqropt_core::{Mat, Method, ProblemInstance};
use serde::Deserialize;
use thiserror::Error;

/// The 5-state benchmark with `Sigma = I` and `K0 = 0`.
pub const PAPER_SEC5_CFG: &str = include_str!("../configs/paper_sec5.cfg");

pub const DEFAULT_GRAD_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_DARE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("ParseError: {origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("ValidationError: field `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Whether a matrix came from the file or was filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Config,
    Default,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Config => "from config",
            Source::Default => "default",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Where the config came from, for reports.
    pub origin: String,
    pub instance: ProblemInstance,
    pub k0: Mat,
    pub sigma_source: Source,
    pub k0_source: Source,
    pub methods: Vec<Method>,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub dare_tol: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
}

type Rows = Vec<Vec<f64>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "A")]
    a: Rows,
    #[serde(rename = "B")]
    b: Rows,
    #[serde(rename = "Q")]
    q: Rows,
    #[serde(rename = "R")]
    r: Rows,
    #[serde(rename = "Sigma", default)]
    sigma: Option<Rows>,
    #[serde(rename = "K0", default)]
    k0: Option<Rows>,
    #[serde(default)]
    methods: Option<Vec<String>>,
    #[serde(default)]
    grad_tol: Option<f64>,
    #[serde(default)]
    max_iter: Option<usize>,
    #[serde(default)]
    dare_tol: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text, &path.display().to_string())
}

/// The built-in benchmark configuration.
pub fn paper_sec5_config() -> ExperimentConfig {
    parse_config(PAPER_SEC5_CFG, "paper_sec5.cfg").expect("built-in config is valid")
}

pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let a = matrix("A", &raw.a)?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(invalid("A", format!("must be square, got {}x{}", n, a.ncols())));
    }
    let b = matrix("B", &raw.b)?;
    if b.nrows() != n {
        return Err(invalid("B", format!("must have {n} rows to match A, got {}", b.nrows())));
    }
    let m = b.ncols();
    let q = square("Q", &raw.q, n)?;
    let r = square("R", &raw.r, m)?;
    let (sigma, sigma_source) = match &raw.sigma {
        Some(rows) => (square("Sigma", rows, n)?, Source::Config),
        None => (Mat::identity(n, n), Source::Default),
    };
    for (field, mat) in [("Q", &q), ("R", &r), ("Sigma", &sigma)] {
        let asym = relative_asymmetry(mat);
        if asym > SYMMETRY_TOL {
            return Err(invalid(field, format!("must be symmetric (relative asymmetry {asym:.3e})")));
        }
    }
    let sigma_min = lambda_min(&sigma).map_err(|e| invalid("Sigma", e.to_string()))?;
    if sigma_min <= 1e-12 * sigma.norm() {
        return Err(invalid(
            "Sigma",
            format!("must be positive definite (smallest eigenvalue {sigma_min:.3e})"),
        ));
    }
    let (k0, k0_source) = match &raw.k0 {
        Some(rows) => {
            let k0 = matrix("K0", rows)?;
            if k0.shape() != (m, n) {
                return Err(invalid("K0", format!("must be {m}x{n}, got {}x{}", k0.nrows(), k0.ncols())));
            }
            (k0, Source::Config)
        }
        None => (Mat::zeros(m, n), Source::Default),
    };

    let methods = match &raw.methods {
        None => Method::ALL.to_vec(),
        Some(names) => {
            let mut out = Vec::new();
            for name in names {
                let method = Method::parse(name)
                    .ok_or_else(|| invalid("methods", format!("unknown method `{name}` (expected gd, ngd or qn)")))?;
                if out.contains(&method) {
                    return Err(invalid("methods", format!("`{name}` listed twice")));
                }
                out.push(method);
            }
            out
        }
    };
    if methods.is_empty() {
        return Err(invalid("methods", "must not be empty"));
    }
    let grad_tol = positive("grad_tol", raw.grad_tol.unwrap_or(DEFAULT_GRAD_TOL))?;
    let dare_tol = positive("dare_tol", raw.dare_tol.unwrap_or(DEFAULT_DARE_TOL))?;
    let max_iter = raw.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be at least 1"));
    }

    let instance = ProblemInstance::new(a, b, q, r, sigma).map_err(|e| invalid("instance", e.to_string()))?;
    Ok(ExperimentConfig {
        origin: origin.to_string(),
        instance,
        k0,
        sigma_source,
        k0_source,
        methods,
        grad_tol,
        max_iter,
        dare_tol,
        seed: raw.seed.unwrap_or(0),
        output_dir: PathBuf::from("out"),
    })
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn matrix(field: &str, rows: &Rows) -> Result<Mat, ConfigError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(invalid(field, "must be a nonempty array of nonempty rows"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(invalid(
            field,
            format!("row {} has {} entries, expected {cols}", i + 1, rows[i].len()),
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(rows.len(), cols, &flat))
}

fn square(field: &str, rows: &Rows, dim: usize) -> Result<Mat, ConfigError> {
    let mat = matrix(field, rows)?;
    if mat.shape() != (dim, dim) {
        return Err(invalid(
            field,
            format!("must be {dim}x{dim}, got {}x{}", mat.nrows(), mat.ncols()),
        ));
    }
    Ok(mat)
}
