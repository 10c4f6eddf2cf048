//! Python bindings: problems, solves, error norms, inf-sup estimates and
//! batch runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use xtwave::analysis;
use xtwave::config::{Mode, Regularity, RunConfig};
use xtwave::driver::{self, RunOptions};
use xtwave::dump::SolutionDump;
use xtwave::problems::{by_name, NamedProblem};
use xtwave::splines::{Basis, Constraint, SplineSpace};
use xtwave::system::{assemble_with, DiscreteSolution};
use xtwave::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Expr(_) | Error::InvalidRegularity { .. } | Error::InvalidSpace(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) | Error::Dump(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_regularity(p: usize, regularity: &str) -> PyResult<usize> {
    let r = match regularity {
        "maximal" => Regularity::Maximal,
        "c1" => Regularity::C1,
        s => Regularity::Explicit(
            s.parse()
                .map_err(|_| PyValueError::new_err(format!("bad regularity '{s}'")))?,
        ),
    };
    r.resolve(p).map_err(to_py)
}

/// A built-in benchmark problem ("smooth" or "singular").
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: NamedProblem,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        by_name(name)
            .map(|inner| Self { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown problem '{name}'")))
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn omega(&self) -> (f64, f64) {
        self.inner.spec.omega
    }

    #[getter]
    fn final_time(&self) -> f64 {
        self.inner.spec.final_time
    }

    /// 1 / (2 √(C_Ω²/c0² + 4T²))
    fn infsup_lower_bound(&self) -> f64 {
        self.inner.spec.infsup_lower_bound()
    }

    /// Exact (U, V) at (x, t), if known.
    fn exact(&self, x: f64, t: f64) -> PyResult<(f64, f64)> {
        let ex = self.inner.spec.exact().map_err(to_py)?;
        Ok(((ex.u)(x, t), (ex.u_dt)(x, t)))
    }

    fn __repr__(&self) -> String {
        format!("Problem('{}')", self.inner.name)
    }
}

/// Discrete solution (U_h, V_h).
#[pyclass(name = "Solution")]
struct PySolution {
    inner: DiscreteSolution,
    problem: NamedProblem,
    galerkin_residual: f64,
}

#[pymethods]
impl PySolution {
    /// (U_h, V_h) or a first derivative of both at (x, t).
    #[pyo3(signature = (x, t, dx = 0, dt = 0))]
    fn evaluate(&self, x: f64, t: f64, dx: usize, dt: usize) -> PyResult<(f64, f64)> {
        self.inner.evaluate(x, t, dx, dt).map_err(to_py)
    }

    /// Coefficients of the shifted unknowns, U block then V block.
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients()
    }

    #[getter]
    fn dims(&self) -> (usize, usize) {
        (self.inner.n_x(), self.inner.n_t())
    }

    #[getter]
    fn galerkin_residual(&self) -> f64 {
        self.galerkin_residual
    }

    /// Relative errors against the exact solution, as a dict.
    fn errors<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let pair = analysis::error_report(&self.inner, &self.problem.spec, None).map_err(to_py)?;
        let r = pair.relative();
        let d = PyDict::new(py);
        d.set_item("veh", r.err_veh)?;
        d.set_item("u_l2", r.err_u_l2)?;
        d.set_item("v_l2", r.err_v_l2)?;
        d.set_item("u_l2e", r.err_u_l2e)?;
        d.set_item("cgrad_u", pair.relative_cgrad())?;
        Ok(d)
    }

    /// Writes the text dump.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        SolutionDump::from_solution(&self.problem.name, &self.inner)
            .write(&path)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(problem='{}', n_x={}, n_t={})",
            self.problem.name,
            self.inner.n_x(),
            self.inner.n_t()
        )
    }
}

fn spaces(problem: &NamedProblem, degree: usize, regularity: &str, n_x: usize, n_t: usize) -> PyResult<(SplineSpace, SplineSpace)> {
    let r = parse_regularity(degree, regularity)?;
    let spec = &problem.spec;
    let sx = SplineSpace::uniform(spec.omega, n_x, degree, r, Constraint::ZeroBoth).map_err(to_py)?;
    let st = SplineSpace::uniform((0.0, spec.final_time), n_t, degree, r, Constraint::ZeroLeft).map_err(to_py)?;
    Ok((sx, st))
}

/// Solves on a uniform n_x × n_t mesh.
#[pyfunction]
#[pyo3(signature = (problem, degree, n_x, n_t, regularity = "maximal"))]
fn solve(py: Python<'_>, problem: &PyProblem, degree: usize, n_x: usize, n_t: usize, regularity: &str) -> PyResult<PySolution> {
    let named = problem.inner.clone();
    let (sx, st) = spaces(&named, degree, regularity, n_x, n_t)?;
    let (sol, res) = py
        .detach(|| -> xtwave::Result<_> {
            let sys = assemble_with(&named.spec, &sx, &st, None)?;
            let z = sys.solve_coefficients()?;
            let res = sys.galerkin_residual(&z);
            Ok((DiscreteSolution::from_coefficients(sx, st, z, &named.spec), res))
        })
        .map_err(to_py)?;
    Ok(PySolution {
        inner: sol,
        problem: named,
        galerkin_residual: res,
    })
}

/// Reads a dump written by `Solution.save`.
#[pyfunction]
fn load(path: PathBuf) -> PyResult<PySolution> {
    let dump = SolutionDump::read(&path).map_err(to_py)?;
    let named = by_name(&dump.problem)
        .ok_or_else(|| PyValueError::new_err(format!("unknown problem '{}' in dump", dump.problem)))?;
    let inner = dump.reconstruct(&named.spec).map_err(to_py)?;
    Ok(PySolution {
        inner,
        problem: named,
        galerkin_residual: f64::NAN,
    })
}

/// (gamma_h, lower_bound) on a small mesh.
#[pyfunction]
#[pyo3(signature = (problem, degree, n_x, n_t, regularity = "maximal"))]
fn infsup(problem: &PyProblem, degree: usize, n_x: usize, n_t: usize, regularity: &str) -> PyResult<(f64, f64)> {
    let (sx, st) = spaces(&problem.inner, degree, regularity, n_x, n_t)?;
    let est = analysis::estimate_infsup(&problem.inner.spec, &sx, &st, None).map_err(to_py)?;
    Ok((est.gamma_h, est.lower_bound))
}

/// log2 ratios of successive errors (None for the first entry).
#[pyfunction]
fn eoc(errors: Vec<f64>) -> Vec<Option<f64>> {
    analysis::eoc(&errors)
}

/// Runs a TOML config in the given mode; returns the results CSV text.
#[pyfunction]
#[pyo3(signature = (config, mode, out, seed = None))]
fn run(py: Python<'_>, config: &str, mode: &str, out: PathBuf, seed: Option<u64>) -> PyResult<String> {
    let mode = match mode {
        "solve" => Mode::Solve,
        "convergence" => Mode::Convergence,
        "stability" => Mode::Stability,
        "infsup" => Mode::Infsup,
        m => return Err(PyValueError::new_err(format!("unknown mode '{m}'"))),
    };
    let cfg = RunConfig::parse(config).map_err(to_py)?;
    let opts = RunOptions {
        mode,
        out: Some(out),
        threads: None,
        seed,
    };
    let res = py.detach(|| driver::run(&cfg, &opts)).map_err(to_py)?;
    Ok(driver::results_csv(&res.rows))
}

/// Dimension of a constrained uniform spline space.
#[pyfunction]
#[pyo3(signature = (n_elements, degree, regularity = "maximal", constraint = "none"))]
fn space_dim(n_elements: usize, degree: usize, regularity: &str, constraint: &str) -> PyResult<usize> {
    let r = parse_regularity(degree, regularity)?;
    let c = Constraint::from_name(constraint)
        .ok_or_else(|| PyValueError::new_err(format!("unknown constraint '{constraint}'")))?;
    let s = SplineSpace::uniform((0.0, 1.0), n_elements, degree, r, c).map_err(to_py)?;
    Ok(s.dim())
}

#[pymodule]
fn pyxtwave(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(infsup, m)?)?;
    m.add_function(wrap_pyfunction!(eoc, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(space_dim, m)?)?;
    m.add("CSV_HEADER", driver::CSV_HEADER)?;
    Ok(())
}
