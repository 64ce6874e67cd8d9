//! Python bindings: kernels, the planar and bidisc solvers, and the CLI entry point.

use canonical_dbar::appendix::identity_random_check;
use canonical_dbar::field::Targets;
use canonical_dbar::forms::{builtin_form, resolve_potential_1d};
use canonical_dbar::geometry::{make_domain, DomainDescriptor, PlanarDomain, PolarRule};
use canonical_dbar::kernels::{KernelSet, DEFAULT_BOUNDARY_NODES};
use canonical_dbar::product::{solve_smooth, solve_tilde, ProductDomain};
use canonical_dbar::{cli, solve1d, Error};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Descriptor(_) | Error::Membership { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn domain(name: &str) -> PyResult<PlanarDomain> {
    make_domain(&DomainDescriptor::resolve(name).map_err(py_err)?).map_err(py_err)
}

fn rule(angular: usize, gauss: usize, levels: usize) -> PolarRule {
    PolarRule { angular, gauss, levels }
}

/// `(L, S, K)` of a domain at the pair `(w, z)`.
#[pyfunction]
#[pyo3(signature = (domain_name, w, z, boundary_nodes = DEFAULT_BOUNDARY_NODES))]
fn kernels(domain_name: &str, w: Complex64, z: Complex64, boundary_nodes: usize) -> PyResult<(Complex64, Complex64, Complex64)> {
    let ks = KernelSet::new(&domain(domain_name)?, boundary_nodes).map_err(py_err)?;
    let field = ks.l_field(w).map_err(py_err)?;
    Ok((field.l(z), field.s(z), field.k(z)))
}

/// Canonical solution of `∂̄u = ∂̄p` on a planar domain, `p` a builtin name or potential expression.
#[pyfunction]
#[pyo3(signature = (domain_name, data, points, angular = 64, gauss = 6, levels = 20))]
fn solve_t(
    domain_name: &str,
    data: &str,
    points: Vec<Complex64>,
    angular: usize,
    gauss: usize,
    levels: usize,
) -> PyResult<Vec<Complex64>> {
    let dom = domain(domain_name)?;
    let ks = KernelSet::new(&dom, DEFAULT_BOUNDARY_NODES).map_err(py_err)?;
    let f = resolve_potential_1d(data).map_err(py_err)?.scalar_data();
    let u = solve1d::solve_t(&ks, &f, &Targets::scattered(points), &rule(angular, gauss, levels)).map_err(py_err)?;
    Ok(u.values)
}

/// Canonical solution on the unit polydisc for a builtin form; `mode` is `smooth` or `tilde`.
#[pyfunction]
#[pyo3(signature = (form, points, mode = "tilde", angular = 12, gauss = 3, levels = 6))]
fn solve_product(
    form: &str,
    points: Vec<Vec<Complex64>>,
    mode: &str,
    angular: usize,
    gauss: usize,
    levels: usize,
) -> PyResult<Vec<Complex64>> {
    let n = points.first().map_or(2, Vec::len);
    let pd = ProductDomain::unit_polydisc(n).map_err(py_err)?;
    let f = builtin_form(form, n).map_err(py_err)?;
    let targets = Targets::points_nd(points);
    let r = rule(angular, gauss, levels);
    let u = match mode {
        "smooth" => solve_smooth(&pd, &f, &targets, &r),
        "tilde" => solve_tilde(&pd, &f, &targets, &r),
        _ => return Err(PyValueError::new_err(format!("unknown mode {mode}; expected smooth or tilde"))),
    }
    .map_err(py_err)?;
    Ok(u.values)
}

/// Largest relative gap of the two-variable Cauchy kernel identity over random pairs.
#[pyfunction]
#[pyo3(signature = (count = 1000, seed = 1))]
fn identity_gap(count: usize, seed: u64) -> PyResult<f64> {
    identity_random_check(count, seed).map_err(py_err)
}

/// Runs the `dbar` command line with `args` (without the program name); returns the exit status.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    cli::main_with_args(std::iter::once("dbar".to_string()).chain(args))
}

#[pymodule]
fn canonical_dbar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(kernels, m)?)?;
    m.add_function(wrap_pyfunction!(solve_t, m)?)?;
    m.add_function(wrap_pyfunction!(solve_product, m)?)?;
    m.add_function(wrap_pyfunction!(identity_gap, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
