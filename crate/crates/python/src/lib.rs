//! Python bindings: meshes, eigenvalue estimates, hypothesis checks,
//! hierarchy solves and the non-monotonicity probe.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pq_galerkin::cli::certify;
use pq_galerkin::config::{apply_overrides, parse_config, RunConfig};
use pq_galerkin::eigen::{estimate_lambda1, EigenOptions};
use pq_galerkin::galerkin::run_hierarchy;
use pq_galerkin::operators::{probe_nonmonotonicity, probe_root};
use pq_galerkin::{Error, P1Space, RefinementHierarchy, SolveReport};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Exponent(_) | Error::InvalidArgument(_) | Error::LevelOutOfRange { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// One mesh level as plain lists.
#[pyclass(name = "Mesh", frozen)]
struct PyMesh {
    #[pyo3(get)]
    level: usize,
    #[pyo3(get)]
    vertices: Vec<(f64, f64)>,
    #[pyo3(get)]
    triangles: Vec<(usize, usize, usize)>,
    #[pyo3(get)]
    num_dofs: usize,
}

#[pymethods]
impl PyMesh {
    fn __repr__(&self) -> String {
        format!(
            "Mesh(level={}, vertices={}, triangles={}, dofs={})",
            self.level,
            self.vertices.len(),
            self.triangles.len(),
            self.num_dofs
        )
    }
}

/// Meshes of levels `0..=finest` on the unit square.
#[pyfunction]
#[pyo3(signature = (finest, cells_per_side = 2))]
fn unit_square_meshes(finest: usize, cells_per_side: usize) -> PyResult<Vec<PyMesh>> {
    let h = RefinementHierarchy::unit_square(cells_per_side, finest).map_err(py_err)?;
    Ok(h.meshes()
        .iter()
        .map(|m| PyMesh {
            level: m.level(),
            vertices: m.vertices().iter().map(|v| (v[0], v[1])).collect(),
            triangles: m.triangles().iter().map(|t| (t[0], t[1], t[2])).collect(),
            num_dofs: m.num_dofs(),
        })
        .collect())
}

/// First eigenvalue of the discrete `r`-Laplacian on `level`.
#[pyfunction]
#[pyo3(signature = (r, level, cells_per_side = 2, tol = 1e-10))]
fn lambda1(r: f64, level: usize, cells_per_side: usize, tol: f64) -> PyResult<f64> {
    let h = RefinementHierarchy::unit_square(cells_per_side, level).map_err(py_err)?;
    let opts = EigenOptions {
        tol,
        ..Default::default()
    };
    Ok(estimate_lambda1(r, &h, level, &opts).map_err(py_err)?.lambda)
}

/// `(t, E(t))` along `sin(πx) sin(πy)` on a log grid around the root.
#[pyfunction]
#[pyo3(signature = (p, q, mu, level = 3, points = 61))]
fn probe(p: f64, q: f64, mu: f64, level: usize, points: usize) -> PyResult<Vec<(f64, f64)>> {
    let h = RefinementHierarchy::unit_square(2, level).map_err(py_err)?;
    let space = P1Space::new(h.mesh(level).map_err(py_err)?);
    let pi = std::f64::consts::PI;
    let f0 = space.interpolate(|x| (pi * x[0]).sin() * (pi * x[1]).sin());
    let center = probe_root(&space, &f0, p, q, mu).unwrap_or(1.0);
    let n = points.max(2);
    let grid: Vec<f64> = (0..n)
        .map(|i| center * 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64))
        .collect();
    probe_nonmonotonicity(&space, &f0, p, q, mu, &grid).map_err(py_err)
}

/// Per-level results and diagnostics of a hierarchy solve.
#[pyclass(name = "SolveReport", frozen)]
struct PySolveReport {
    inner: SolveReport,
    #[pyo3(get)]
    hypotheses_passed: bool,
}

#[pymethods]
impl PySolveReport {
    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    #[getter]
    fn pair_norms(&self) -> Vec<f64> {
        self.inner.condition_a.clone()
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.inner.levels.iter().map(|l| l.residual_linf).collect()
    }

    #[getter]
    fn condition_b(&self) -> Vec<f64> {
        self.inner.condition_b.clone()
    }

    #[getter]
    fn condition_c(&self) -> Vec<f64> {
        self.inner.condition_c.clone()
    }

    #[getter]
    fn condition_c_prime(&self) -> Vec<f64> {
        self.inner.condition_c_prime.clone()
    }

    #[getter]
    fn strong_convergence(&self) -> Vec<f64> {
        self.inner.strong_convergence.clone()
    }

    #[getter]
    fn failure(&self) -> Option<String> {
        self.inner.failure.as_ref().map(|f| format!("level {}: {}", f.level, f.message))
    }

    /// Coefficients `(u, v)` of the solution on `level`.
    fn solution(&self, level: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let l = self
            .inner
            .levels
            .get(level)
            .ok_or_else(|| PyValueError::new_err(format!("level {level} was not solved")))?;
        Ok((l.state.u.coeffs.clone(), l.state.v.coeffs.clone()))
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "SolveReport(levels={}, radius={:.4e}, succeeded={})",
            self.inner.levels.len(),
            self.inner.radius,
            self.inner.succeeded()
        )
    }
}

/// A run configuration (TOML text plus `key=value` overrides).
#[pyclass(name = "Config", frozen)]
struct PyConfig {
    cfg: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = "", overrides = Vec::new()))]
    fn new(toml: &str, overrides: Vec<String>) -> PyResult<Self> {
        let text = apply_overrides(toml, &overrides).map_err(py_err)?;
        Ok(Self {
            cfg: parse_config(&text).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.cfg.to_toml().map_err(py_err)
    }

    /// Hypothesis reports as `(name, passed, violations, margin)` rows.
    fn check(&self) -> PyResult<Vec<(String, bool, usize, Option<f64>)>> {
        let h = self.cfg.hierarchy().map_err(py_err)?;
        let cert = certify(&self.cfg, &h).map_err(|f| PyRuntimeError::new_err(f.message))?;
        Ok(cert
            .reports
            .iter()
            .map(|r| (r.hypothesis.label().to_string(), r.passed, r.violation_count, r.coercivity_margin))
            .collect())
    }

    /// Certifies the hypotheses, then solves the hierarchy inside the
    /// a-priori ball. Raises if a hypothesis fails and
    /// `solver.override_hypotheses` is not set.
    fn solve(&self) -> PyResult<PySolveReport> {
        let h = self.cfg.hierarchy().map_err(py_err)?;
        let cert = certify(&self.cfg, &h).map_err(|f| PyRuntimeError::new_err(f.message))?;
        if !cert.passed() && !self.cfg.solver.override_hypotheses {
            return Err(PyRuntimeError::new_err("hypothesis check failed"));
        }
        let radius = cert.radius(&h).map_err(py_err)?;
        let mut inner = run_hierarchy(&cert.spec, &h, self.cfg.domain.levels, radius, &self.cfg.solve_options())
            .map_err(py_err)?;
        inner.lambda_estimates = cert.lambdas.clone();
        inner.hypothesis_reports = cert.reports.clone();
        Ok(PySolveReport {
            inner,
            hypotheses_passed: cert.passed(),
        })
    }
}

#[pymodule]
fn pqgalerkin(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PySolveReport>()?;
    m.add_function(wrap_pyfunction!(unit_square_meshes, m)?)?;
    m.add_function(wrap_pyfunction!(lambda1, m)?)?;
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    Ok(())
}
