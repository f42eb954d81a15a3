//! Run configuration: a single TOML file with nested sections and flat
//! row-major arrays for matrices.
//!
//! All module preconditions are checked eagerly at load time so that
//! validation failures name the offending field (and cell, for sampled
//! problems) instead of surfacing later inside the numerics.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::matfun::Matrix;
use crate::model::{self, CoefficientPath, Problem};

/// Problem selection, mirroring the four supported families.
#[derive(Debug, Clone)]
pub enum ProblemSpec {
    Oscillator { r: f64 },
    Magnetic { r: f64 },
    Lti { a: Matrix, r: Matrix },
    Sampled { d: usize, m: usize, nt: usize, h: Vec<f64>, y: Vec<f64>, x: Vec<f64> },
}

/// Numerical method settings with spec defaults.
#[derive(Debug, Clone)]
pub struct MethodSettings {
    /// RK4 steps for the Jacobi flow (also the quadrature cell count for
    /// the Gramm matrix and the trace identity).
    pub steps: usize,
    /// Galerkin cells.
    pub galerkin_n: usize,
    /// Series length for the identity checks.
    pub n_terms: usize,
    /// Root-scan interval.
    pub s_lo: f64,
    pub s_hi: f64,
    /// Root-scan grid points.
    pub s_grid: usize,
    /// Simplex quadrature cells per axis for the trace identity check.
    pub identity_nq: usize,
    /// Legendre margin for sampled problems.
    pub legendre_margin: f64,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            steps: 4096,
            galerkin_n: 1024,
            n_terms: 100_000,
            s_lo: 0.5,
            s_hi: 60.0,
            s_grid: 600,
            identity_nq: 2000,
            legendre_margin: model::DEFAULT_LEGENDRE_MARGIN,
        }
    }
}

/// Output destinations; `None` means stdout for the report and no CSV.
#[derive(Debug, Clone, Default)]
pub struct OutputSettings {
    pub report: Option<String>,
    pub spectrum_csv: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub method: MethodSettings,
    pub output: OutputSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    #[serde(default)]
    method: RawMethod,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    kind: String,
    r: Option<f64>,
    m: Option<usize>,
    d: Option<usize>,
    nt: Option<usize>,
    a: Option<Vec<f64>>,
    r_mat: Option<Vec<f64>>,
    h: Option<Vec<f64>>,
    y: Option<Vec<f64>>,
    x: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    steps: Option<usize>,
    galerkin_n: Option<usize>,
    n_terms: Option<usize>,
    s_lo: Option<f64>,
    s_hi: Option<f64>,
    s_grid: Option<usize>,
    identity_nq: Option<usize>,
    legendre_margin: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    report: Option<String>,
    spectrum_csv: Option<String>,
}

fn require<T>(v: Option<T>, field: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("problem kind '{kind}' requires field '{field}'")))
}

fn square_matrix(data: &[f64], m: usize, field: &str) -> Result<Matrix> {
    if data.len() != m * m {
        return Err(Error::Config(format!(
            "field '{field}' must hold {m}x{m} = {} entries row-major, got {}",
            m * m,
            data.len()
        )));
    }
    Matrix::new(m, m, data.to_vec())
}

/// Parse and validate a configuration from TOML text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| Error::Config(format!("parse error: {e}")))?;

    let mut method = MethodSettings::default();
    if let Some(v) = raw.method.steps {
        method.steps = v;
    }
    if let Some(v) = raw.method.galerkin_n {
        method.galerkin_n = v;
    }
    if let Some(v) = raw.method.n_terms {
        method.n_terms = v;
    }
    if let Some(v) = raw.method.s_lo {
        method.s_lo = v;
    }
    if let Some(v) = raw.method.s_hi {
        method.s_hi = v;
    }
    if let Some(v) = raw.method.s_grid {
        method.s_grid = v;
    }
    if let Some(v) = raw.method.identity_nq {
        method.identity_nq = v;
    }
    if let Some(v) = raw.method.legendre_margin {
        method.legendre_margin = v;
    }

    if method.steps < 16 || method.steps % 2 != 0 {
        return Err(Error::Config(format!(
            "method.steps must be even and at least 16, got {}",
            method.steps
        )));
    }
    if !(method.s_lo < method.s_hi) {
        return Err(Error::Config(format!(
            "method.s_lo must be below method.s_hi, got [{}, {}]",
            method.s_lo, method.s_hi
        )));
    }
    if method.s_grid < 8 {
        return Err(Error::Config("method.s_grid must be at least 8".into()));
    }
    if method.n_terms == 0 || method.identity_nq == 0 || method.galerkin_n == 0 {
        return Err(Error::Config(
            "method.n_terms, method.identity_nq and method.galerkin_n must be positive".into(),
        ));
    }

    let problem = match raw.problem.kind.as_str() {
        "oscillator" => ProblemSpec::Oscillator {
            r: require(raw.problem.r, "r", "oscillator")?,
        },
        "magnetic" => ProblemSpec::Magnetic {
            r: require(raw.problem.r, "r", "magnetic")?,
        },
        "lti" => {
            let m = require(raw.problem.m, "m", "lti")?;
            if m == 0 {
                return Err(Error::Config("lti problem needs m >= 1".into()));
            }
            let a = square_matrix(&require(raw.problem.a, "a", "lti")?, m, "problem.a")?;
            let r = square_matrix(&require(raw.problem.r_mat, "r_mat", "lti")?, m, "problem.r_mat")?;
            a.check_symmetric(1e-10, "problem.a")?;
            r.check_symmetric(1e-10, "problem.r_mat")?;
            ProblemSpec::Lti { a, r }
        }
        "sampled" => {
            let d = require(raw.problem.d, "d", "sampled")?;
            let m = require(raw.problem.m, "m", "sampled")?;
            let nt = require(raw.problem.nt, "nt", "sampled")?;
            if nt == 0 {
                return Err(Error::Config("sampled problem needs nt >= 1".into()));
            }
            if d == 0 || m == 0 {
                return Err(Error::Config("sampled problem needs d >= 1 and m >= 1".into()));
            }
            let h = require(raw.problem.h, "h", "sampled")?;
            let y = require(raw.problem.y, "y", "sampled")?;
            let x = require(raw.problem.x, "x", "sampled")?;
            let expect = |name: &str, got: usize, want: usize| -> Result<()> {
                if got != want {
                    return Err(Error::Config(format!(
                        "field '{name}' must hold {want} entries (nt blocks row-major), got {got}"
                    )));
                }
                Ok(())
            };
            expect("h", h.len(), nt * m * m)?;
            expect("y", y.len(), nt * d * m)?;
            expect("x", x.len(), nt * d * m)?;
            ProblemSpec::Sampled { d, m, nt, h, y, x }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown problem kind '{other}' \
                 (expected oscillator | magnetic | lti | sampled)"
            )));
        }
    };

    let cfg = RunConfig {
        problem,
        method,
        output: OutputSettings {
            report: raw.output.report,
            spectrum_csv: raw.output.spectrum_csv,
        },
    };
    // building the problem runs the remaining invariants (Legendre margin,
    // symmetry per cell) so bad data fails here, not mid-run
    build_problem(&cfg)?;
    Ok(cfg)
}

/// Load and validate a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    parse_config(&text)
}

/// Construct the problem a configuration describes.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem> {
    match &cfg.problem {
        ProblemSpec::Oscillator { r } => Ok(model::build_oscillator(*r)),
        ProblemSpec::Magnetic { r } => Ok(model::build_magnetic(*r)),
        ProblemSpec::Lti { a, r } => model::build_lti(a, r),
        ProblemSpec::Sampled { d, m, nt, h, y, x } => {
            let slice_mats = |data: &[f64], rows: usize, cols: usize| -> Result<Vec<Matrix>> {
                data.chunks(rows * cols)
                    .map(|c| Matrix::new(rows, cols, c.to_vec()))
                    .collect()
            };
            let hm = slice_mats(h, *m, *m)?;
            let ym = slice_mats(y, *d, *m)?;
            let xm = slice_mats(x, *d, *m)?;
            debug_assert_eq!(hm.len(), *nt);
            let path =
                CoefficientPath::sampled(*d, *m, hm, ym, xm, cfg.method.legendre_margin)?;
            Ok(Problem {
                path,
                normalized: false,
                label: format!("sampled(d={d}, m={m}, nt={nt})"),
            })
        }
    }
}
