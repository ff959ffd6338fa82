//! Python module `elastic_eri`.

use std::collections::BTreeMap;

use eri_core::allocator::{tune, BlockSampleWorkload, WorkloadConfig};
use eri_core::block::BlockOptions;
use eri_core::compiler::{compile, plan_stats, CompilerConfig, EriClass};
use eri_core::executor::{Executor, FockEngine, ReductionMode};
use eri_core::input::{fixtures, parse_xyz, read_xyz, BasisSet};
use eri_core::scf::{scf_iterate, ScfOptions, TuneOptions};
use eri_core::validation::{oracle_suite, symmetry_suite};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: eri_core::Error) -> PyErr {
    match e {
        eri_core::Error::InvalidArgument(_) | eri_core::Error::Parse { .. } | eri_core::Error::MissingElement(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mode(deterministic: bool) -> ReductionMode {
    if deterministic {
        ReductionMode::Deterministic
    } else {
        ReductionMode::Concurrent
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize) -> PyResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Molecule with a basis attached.
#[pyclass(name = "Molecule", module = "elastic_eri", frozen)]
pub struct PyMolecule {
    inner: eri_core::input::Molecule,
}

#[pymethods]
impl PyMolecule {
    /// Parses XYZ text (Angstrom).
    #[staticmethod]
    #[pyo3(signature = (text, basis = "sto-3g"))]
    fn from_xyz(text: &str, basis: &str) -> PyResult<Self> {
        let b = BasisSet::load(basis).map_err(to_py)?;
        let inner = parse_xyz(text).and_then(|m| m.attach_basis(&b)).map_err(to_py)?;
        Ok(PyMolecule { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, basis = "sto-3g"))]
    fn read(path: &str, basis: &str) -> PyResult<Self> {
        let b = BasisSet::load(basis).map_err(to_py)?;
        let inner = read_xyz(path).and_then(|m| m.attach_basis(&b)).map_err(to_py)?;
        Ok(PyMolecule { inner })
    }

    /// Bundled geometry: `h2`, `water` or `benzene`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let text = fixtures::get(name).ok_or_else(|| PyValueError::new_err(format!("no fixture `{name}`")))?;
        Self::from_xyz(text, "sto-3g")
    }

    #[getter]
    fn n_atoms(&self) -> usize {
        self.inner.atoms.len()
    }

    #[getter]
    fn n_shells(&self) -> usize {
        self.inner.shells.len()
    }

    #[getter]
    fn n_functions(&self) -> usize {
        self.inner.n_functions()
    }

    #[getter]
    fn n_electrons(&self) -> i64 {
        self.inner.n_electrons()
    }

    #[getter]
    fn nuclear_repulsion(&self) -> f64 {
        self.inner.nuclear_repulsion()
    }

    fn to_xyz(&self) -> String {
        self.inner.to_xyz("")
    }

    fn __repr__(&self) -> String {
        format!("Molecule(atoms={}, functions={})", self.inner.atoms.len(), self.inner.n_functions())
    }
}

/// Outcome of an RHF run.
#[pyclass(name = "ScfResult", module = "elastic_eri", frozen, get_all)]
pub struct PyScfResult {
    energy: f64,
    iterations: usize,
    converged: bool,
    per_iteration_energies: Vec<f64>,
    orbital_energies: Vec<f64>,
    nuclear_repulsion: f64,
    density: Vec<Vec<f64>>,
    total_seconds: f64,
    fock_seconds: f64,
    workload: BTreeMap<String, usize>,
}

#[pymethods]
impl PyScfResult {
    fn __repr__(&self) -> String {
        format!(
            "ScfResult(energy={:.10}, iterations={}, converged={})",
            self.energy, self.iterations, self.converged
        )
    }
}

/// Restricted Hartree-Fock from the core-Hamiltonian guess.
#[pyfunction]
#[pyo3(signature = (molecule, conv = 1e-6, max_iter = 99, damping = Some(0.3), diis = false, threads = 1, deterministic = false, tune = false))]
#[allow(clippy::too_many_arguments)]
fn run_scf(
    molecule: &PyMolecule,
    conv: f64,
    max_iter: usize,
    damping: Option<f64>,
    diis: bool,
    threads: usize,
    deterministic: bool,
    tune: bool,
) -> PyResult<PyScfResult> {
    let options = ScfOptions {
        conv,
        max_iter,
        damping,
        diis,
        threads,
        mode: mode(deterministic),
        tune: tune.then(TuneOptions::default),
        ..Default::default()
    };
    let r = scf_iterate(&molecule.inner, &options).map_err(to_py)?;
    Ok(PyScfResult {
        energy: r.energy,
        iterations: r.iterations,
        converged: r.converged,
        per_iteration_energies: r.per_iteration_energies,
        orbital_energies: r.orbital_energies.iter().copied().collect(),
        nuclear_repulsion: r.nuclear_repulsion,
        density: to_rows(&r.state.density),
        total_seconds: r.timing.total_s,
        fock_seconds: r.timing.fock_s,
        workload: r.workload.into_iter().collect(),
    })
}

/// Two-electron part `G = 2J - K` of the Fock matrix for a fixed basis.
#[pyclass(name = "FockBuilder", module = "elastic_eri")]
pub struct PyFockBuilder {
    engine: FockEngine,
    executor: Executor,
    mode: ReductionMode,
}

#[pymethods]
impl PyFockBuilder {
    #[new]
    #[pyo3(signature = (molecule, threads = 1, tile_size = 32, deterministic = false))]
    fn new(molecule: &PyMolecule, threads: usize, tile_size: usize, deterministic: bool) -> PyResult<Self> {
        let options = BlockOptions {
            tile_size,
            ..Default::default()
        };
        Ok(PyFockBuilder {
            engine: FockEngine::new(&molecule.inner, options, &CompilerConfig::default()).map_err(to_py)?,
            executor: Executor::new(threads).map_err(to_py)?,
            mode: mode(deterministic),
        })
    }

    #[getter]
    fn n_functions(&self) -> usize {
        self.engine.n_functions()
    }

    #[getter]
    fn n_blocks(&self) -> usize {
        self.engine.block_list.len()
    }

    /// `density` as a list of rows.
    fn build_g(&self, density: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let d = from_rows(&density, self.engine.n_functions())?;
        let g = self.executor.build_g(&self.engine, &d, self.mode).map_err(to_py)?;
        Ok(to_rows(&g))
    }

    /// Tunes granularity on sampled blocks and keeps the result.
    #[pyo3(signature = (density, sample_blocks = 4, repeats = 3))]
    fn tune(&mut self, density: Vec<Vec<f64>>, sample_blocks: usize, repeats: usize) -> PyResult<BTreeMap<String, usize>> {
        let d = from_rows(&density, self.engine.n_functions())?;
        let out = {
            let mut w = BlockSampleWorkload::new(&mut self.engine, &self.executor, &d, sample_blocks).map_err(to_py)?;
            w.mode = self.mode;
            tune(&mut w, WorkloadConfig::default(), repeats).map_err(to_py)?
        };
        self.engine.workload = out.config;
        Ok(self.granularity())
    }

    /// Current per-class granularity.
    fn granularity(&self) -> BTreeMap<String, usize> {
        let mut m: BTreeMap<String, usize> = self.engine.blocks.classes().into_iter().map(|c| (c.to_string(), 1)).collect();
        for (c, g) in self.engine.workload.iter() {
            m.insert(c.to_string(), g);
        }
        m
    }
}

fn class_of(class: (u32, u32, u32, u32)) -> EriClass {
    EriClass([class.0, class.1, class.2, class.3])
}

/// Plan statistics for one `(La, Lb, Lc, Ld)` class.
#[pyfunction]
#[pyo3(signature = (class_, lambda_ = None))]
fn compile_stats(class_: (u32, u32, u32, u32), lambda_: Option<f64>) -> PyResult<BTreeMap<String, usize>> {
    let config = match lambda_ {
        Some(l) => CompilerConfig::with_lambda(l).map_err(to_py)?,
        None => CompilerConfig::default(),
    };
    let s = plan_stats(&compile(class_of(class_), &config));
    Ok(BTreeMap::from([
        ("op_count".to_string(), s.op_count),
        ("slot_count".to_string(), s.slot_count),
        ("node_count".to_string(), s.node_count),
        ("reuse_count".to_string(), s.reuse_count),
    ]))
}

/// Scalar source text equivalent to the plan of a class.
#[pyfunction]
fn emit_source(class_: (u32, u32, u32, u32)) -> String {
    compile(class_of(class_), &CompilerConfig::default()).emit_source()
}

/// `F_0(t) .. F_m(t)`.
#[pyfunction]
fn boys(m_max: i64, t: f64) -> PyResult<Vec<f64>> {
    eri_core::boys::boys(m_max, t).map_err(to_py)
}

/// Largest relative plan-versus-reference error and whether it is within tolerance.
#[pyfunction]
#[pyo3(signature = (l_max = 2, geometries = 50, seed = 0))]
fn validate_oracle(l_max: u32, geometries: usize, seed: u64) -> (f64, bool) {
    let r = oracle_suite(l_max, geometries, seed, &CompilerConfig::default());
    (r.max_relative_error, r.passed)
}

/// Largest 8-fold permutational error over random quadruples.
#[pyfunction]
#[pyo3(signature = (quadruples = 200, seed = 0))]
fn validate_symmetry(quadruples: usize, seed: u64) -> (f64, bool) {
    let r = symmetry_suite(quadruples, seed, &CompilerConfig::default());
    (r.max_abs_error, r.passed)
}

#[pymodule]
pub fn elastic_eri(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMolecule>()?;
    m.add_class::<PyScfResult>()?;
    m.add_class::<PyFockBuilder>()?;
    m.add_function(wrap_pyfunction!(run_scf, m)?)?;
    m.add_function(wrap_pyfunction!(compile_stats, m)?)?;
    m.add_function(wrap_pyfunction!(emit_source, m)?)?;
    m.add_function(wrap_pyfunction!(boys, m)?)?;
    m.add_function(wrap_pyfunction!(validate_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(validate_symmetry, m)?)?;
    Ok(())
}
