//! Python bindings for the branching-random-walk Gibbs toolkit.
//!
//! The module mirrors the core crate's surface:
//!
//! - [`Model`] wraps an increment law plus branching factor d and exposes
//!   φ, φ′, β_c, the free energy, and the speed of the maximum;
//! - [`Instance`] wraps a seeded depth-N environment whose vertex values
//!   are pure functions of (seed, path);
//! - module-level functions cover the exact Gibbs measure (`gibbs_probs`,
//!   `partition`, `kl_gibbs_pair`), the block sampler (`sample`,
//!   `algorithm_probs`, `kl_exact`, `kl_statistics`, `block_plan`,
//!   `tau_formula`), and the supercritical hardness experiment
//!   (`exceptional_probability`, `naive_search`, `max_tail`,
//!   `rescaled_path`, `calibrate_z`), plus the `derive_seed` helper that
//!   reproduces the seed schedule used by the command-line tool.
//!
//! Vertex paths cross the boundary as strings of child digits ("011"; ""
//! is the root; dot-separated for d > 10), identical to the path syntax
//! accepted everywhere else in the toolkit. Aggregate results come back as
//! plain dicts so downstream code can feed them to pandas or json without
//! a conversion layer.
//!
//! Build modes: the default feature set links libpython and is what the
//! Rust tests in this crate use (they embed an interpreter and import the
//! module through the inittab). For an importable wheel-style module build
//! with `--features extension-module` and rename the cdylib to
//! `brwgibbs.so` (see python/smoke_test.py at the repository root).

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use brwgibbs_core::{BrwInstance, IncrementModel, ProbeOrder, VertexPath};

/// Maps core errors onto Python exceptions: numerical failures become
/// RuntimeError, every rejected input (parse, domain, depth, cap, shape)
/// becomes ValueError.
fn to_py_err(e: brwgibbs_core::Error) -> PyErr {
    match e {
        brwgibbs_core::Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn ok<T>(r: brwgibbs_core::Result<T>) -> PyResult<T> {
    r.map_err(to_py_err)
}

/// An increment law together with the branching factor d.
///
/// Immutable and hashable by value; equality compares the family, its
/// parameters, and d.
#[pyclass(frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct Model {
    inner: IncrementModel,
}

#[pymethods]
impl Model {
    /// Parses a spec string: `gaussian:d=2`, `bernoulli:d=2,p=0.3`, or
    /// `finite:d=3,support=[(-1,0.5),(1,0.5)]`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: ok(spec.parse())? })
    }

    /// Standard Gaussian increments with branching factor d.
    #[staticmethod]
    fn gaussian(d: u32) -> PyResult<Self> {
        Ok(Self { inner: ok(IncrementModel::gaussian(d))? })
    }

    /// Bernoulli(p) increments with branching factor d.
    #[staticmethod]
    fn bernoulli(d: u32, p: f64) -> PyResult<Self> {
        Ok(Self { inner: ok(IncrementModel::bernoulli(d, p))? })
    }

    /// Finite-support increments from (value, probability) atoms.
    #[staticmethod]
    fn finite_support(d: u32, support: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: ok(IncrementModel::finite_support(d, support))? })
    }

    /// Branching factor d.
    #[getter]
    fn d(&self) -> u32 {
        self.inner.d()
    }

    /// φ(β) = log d + log E e^{βY}.
    fn phi(&self, beta: f64) -> f64 {
        self.inner.log_mgf(beta)
    }

    /// φ′(β), the tilted mean of the increment.
    fn phi_prime(&self, beta: f64) -> f64 {
        self.inner.log_mgf_derivative(beta)
    }

    /// The critical inverse temperature β_c = sup{β ≥ 0 : βφ′(β) < φ(β)};
    /// `inf` when no finite β breaks the inequality.
    fn critical_beta(&self) -> PyResult<f64> {
        ok(self.inner.critical_beta())
    }

    /// The limiting free energy: φ(β)/β for β ≤ β_c, frozen at φ(β_c)/β_c
    /// beyond. Requires β > 0.
    fn free_energy(&self, beta: f64) -> PyResult<f64> {
        ok(self.inner.free_energy(beta))
    }

    /// The linear speed m of the maximum: max_{|u|=n} X_u ≈ m·n.
    fn typical_speed(&self) -> PyResult<f64> {
        ok(brwgibbs_core::typical_speed(&self.inner))
    }

    /// The increment's quantile function, as used by the seeded tree:
    /// maps u ∈ [0, 1) to an increment value.
    fn quantile(&self, u: f64) -> f64 {
        self.inner.component_quantile(u)
    }

    /// Canonical spec string, re-parseable by the constructor.
    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.inner)
    }
}

/// A seeded branching random walk of depth N on the d-ary tree.
///
/// Every value is a pure function of (seed, path): repeated queries are
/// bit-identical across calls, processes, and platforms.
#[pyclass(frozen)]
pub struct Instance {
    inner: BrwInstance,
}

impl Instance {
    fn path(&self, s: &str) -> PyResult<VertexPath> {
        ok(VertexPath::parse(s, self.inner.d()))
    }
}

#[pymethods]
impl Instance {
    /// Creates the environment. `cap` bounds the number of entries any
    /// single enumeration may materialize (default 2^24).
    #[new]
    #[pyo3(signature = (model, depth, seed, cap=None))]
    fn new(model: &Model, depth: u32, seed: u64, cap: Option<u64>) -> Self {
        let mut inner = BrwInstance::new(model.inner.clone(), depth, seed);
        if let Some(c) = cap {
            inner = inner.with_cap(c);
        }
        Self { inner }
    }

    #[getter]
    fn model(&self) -> Model {
        Model { inner: self.inner.model().clone() }
    }

    #[getter]
    fn depth(&self) -> u32 {
        self.inner.depth()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[getter]
    fn d(&self) -> u32 {
        self.inner.d()
    }

    #[getter]
    fn cap(&self) -> u64 {
        self.inner.cap()
    }

    /// X_v for the vertex at `path` ("" is the root, whose value is 0).
    fn vertex_value(&self, path: &str) -> PyResult<f64> {
        ok(self.inner.vertex_value(&self.path(path)?, None))
    }

    /// The d increments (Y_{v·0}, …, Y_{v·(d−1)}) of the children of `path`.
    fn child_increments(&self, path: &str) -> PyResult<Vec<f64>> {
        ok(self.inner.child_increments(&self.path(path)?, None))
    }

    /// Subtree-relative values X_u − X_root for all vertices `depth` levels
    /// below `root`, in lexicographic order (d^depth entries).
    #[pyo3(signature = (depth, root=""))]
    fn leaf_values(&self, depth: u32, root: &str) -> PyResult<Vec<f64>> {
        ok(self.inner.enumerate_leaf_values(&self.path(root)?, depth, None))
    }

    /// max_{|u|=depth} X_u over the whole level.
    #[pyo3(signature = (depth=None))]
    fn max_value(&self, depth: Option<u32>) -> PyResult<f64> {
        ok(self.inner.max_value(depth.unwrap_or_else(|| self.inner.depth()), None))
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(model='{}', depth={}, seed={})",
            self.inner.model(),
            self.inner.depth(),
            self.inner.seed()
        )
    }
}

/// Exact Gibbs probabilities μ^root_{β,depth} in lexicographic leaf order.
#[pyfunction]
#[pyo3(signature = (instance, beta, depth, root=""))]
fn gibbs_probs(instance: &Instance, beta: f64, depth: u32, root: &str) -> PyResult<Vec<f64>> {
    let root = instance.path(root)?;
    Ok(ok(brwgibbs_core::gibbs_distribution(&instance.inner, &root, beta, depth))?.probs())
}

/// log W_{β,depth}, its β-derivative D, and the Gibbs entropy H from one
/// enumeration: `{"log_w", "derivative", "entropy"}`.
#[pyfunction]
fn partition<'py>(
    py: Python<'py>,
    instance: &Instance,
    beta: f64,
    depth: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let rep = ok(brwgibbs_core::partition_report(&instance.inner, beta, depth))?;
    let out = PyDict::new(py);
    out.set_item("log_w", rep.log_w)?;
    out.set_item("derivative", rep.derivative)?;
    out.set_item("entropy", rep.entropy)?;
    Ok(out)
}

/// KL(μ_{β,m} ‖ depth-m marginal of μ_{β,n}): how far the shallow Gibbs
/// measure sits from the deep one's restriction.
#[pyfunction]
fn kl_gibbs_pair(instance: &Instance, beta: f64, m: u32, n: u32) -> PyResult<f64> {
    ok(brwgibbs_core::kl_gibbs_pair(&instance.inner, beta, m, n))
}

/// One run of the block sampler with block size m, driven by its own
/// uniform stream (`algo_seed`). Returns `{"leaf", "value", "tau",
/// "algo_seed", "blocks"}` where blocks is a list of (start vertex,
/// relative word) pairs whose words concatenate to the leaf.
#[pyfunction]
fn sample<'py>(
    py: Python<'py>,
    instance: &Instance,
    beta: f64,
    m: u32,
    algo_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let rec = ok(brwgibbs_core::recursive_sample(&instance.inner, beta, m, algo_seed))?;
    let value = ok(instance.inner.vertex_value(&rec.output, None))?;
    let blocks: Vec<(String, String)> =
        rec.blocks.iter().map(|(v, w)| (v.to_string(), w.to_string())).collect();
    let out = PyDict::new(py);
    out.set_item("leaf", rec.output.to_string())?;
    out.set_item("value", value)?;
    out.set_item("tau", rec.tau)?;
    out.set_item("algo_seed", rec.seed_algo)?;
    out.set_item("blocks", blocks)?;
    Ok(out)
}

/// The sampler's exact output law on depth-N leaves, as probabilities in
/// lexicographic order.
#[pyfunction]
fn algorithm_probs(instance: &Instance, beta: f64, m: u32) -> PyResult<Vec<f64>> {
    Ok(ok(brwgibbs_core::algorithm_law(&instance.inner, beta, m))?.probs())
}

/// Exact KL(sampler output law ‖ Gibbs measure) for block size m, computed
/// in closed form without materializing either distribution.
#[pyfunction]
fn kl_exact(instance: &Instance, beta: f64, m: u32) -> PyResult<f64> {
    ok(brwgibbs_core::kl_algorithm_exact(&instance.inner, beta, m))
}

/// `kl_exact` over a batch of instance seeds, summarized: `{"beta", "N",
/// "M", "num_seeds", "mean", "std", "p1", "p2", "p4", "centered_p1",
/// "centered_p2", "centered_p4"}`.
#[pyfunction]
fn kl_statistics<'py>(
    py: Python<'py>,
    model: &Model,
    beta: f64,
    n: u32,
    m: u32,
    seeds: Vec<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let s = ok(brwgibbs_core::kl_statistics(&model.inner, beta, n, m, &seeds))?;
    let out = PyDict::new(py);
    out.set_item("beta", s.beta)?;
    out.set_item("N", s.n)?;
    out.set_item("M", s.m)?;
    out.set_item("num_seeds", s.num_seeds)?;
    out.set_item("mean", s.mean)?;
    out.set_item("std", s.std)?;
    out.set_item("p1", s.p1)?;
    out.set_item("p2", s.p2)?;
    out.set_item("p4", s.p4)?;
    out.set_item("centered_p1", s.centered_p1)?;
    out.set_item("centered_p2", s.centered_p2)?;
    out.set_item("centered_p4", s.centered_p4)?;
    Ok(out)
}

/// Block sizes [m, m, …, n mod m] the sampler uses at depth n.
#[pyfunction]
fn block_plan(n: u32, m: u32) -> PyResult<Vec<u32>> {
    ok(brwgibbs_core::block_plan(n, m))
}

/// The sampler's deterministic query count τ(d, n, m) as an exact integer.
#[pyfunction]
fn tau_formula(d: u32, n: u32, m: u32) -> PyResult<u128> {
    ok(brwgibbs_core::tau_formula(d, n, m))
}

/// Monte Carlo estimate of P(E_w): the probability that the leftmost
/// depth-⌊N/2⌋ vertex of a fresh environment has a descendant beating the
/// typical speed by z√N. Returns `{"N", "z", "trials", "successes",
/// "phat", "stderr"}`.
#[pyfunction]
fn exceptional_probability<'py>(
    py: Python<'py>,
    model: &Model,
    n: u32,
    z: f64,
    trials: u64,
    base_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let est = ok(brwgibbs_core::exceptional_probability(&model.inner, n, z, trials, base_seed))?;
    let out = PyDict::new(py);
    out.set_item("N", est.n)?;
    out.set_item("z", est.z)?;
    out.set_item("trials", est.trials)?;
    out.set_item("successes", est.successes)?;
    out.set_item("phat", est.phat)?;
    out.set_item("stderr", est.stderr)?;
    Ok(out)
}

/// Probes depth-⌊N/2⌋ roots of `instance` (order "random" or
/// "lexicographic") until one is z-exceptional or `budget` probes are
/// spent. Returns `{"z", "found", "probes", "tau", "witness"}` where
/// witness is a (root, leaf) path pair or None.
#[pyfunction]
#[pyo3(signature = (instance, z, budget, order="random"))]
fn naive_search<'py>(
    py: Python<'py>,
    instance: &Instance,
    z: f64,
    budget: u64,
    order: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let order: ProbeOrder = ok(order.parse())?;
    let rec = ok(brwgibbs_core::naive_search(&instance.inner, z, order, budget))?;
    let out = PyDict::new(py);
    out.set_item("z", rec.z)?;
    out.set_item("found", rec.found)?;
    out.set_item("probes", rec.probes)?;
    out.set_item("tau", rec.tau)?;
    out.set_item(
        "witness",
        rec.witness.map(|(w, u)| (w.to_string(), u.to_string())),
    )?;
    Ok(out)
}

/// The rescaled ancestor line Z^N_{k/N} = (m·k − X_{u_k})/√N for k = 0..N
/// along the ancestry of a depth-N leaf.
#[pyfunction]
fn rescaled_path(instance: &Instance, leaf: &str) -> PyResult<Vec<f64>> {
    let leaf = instance.path(leaf)?;
    ok(brwgibbs_core::rescaled_path(&instance.inner, &leaf))
}

/// Empirical tail table P(max_{|u|=n} X_u ≥ m·n + x) for each x, sharing
/// one batch of simulated maxima. Returns a list of `{"x", "trials",
/// "successes", "phat"}` dicts.
#[pyfunction]
fn max_tail<'py>(
    py: Python<'py>,
    model: &Model,
    n: u32,
    xs: Vec<f64>,
    trials: u64,
    base_seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let points = ok(brwgibbs_core::max_tail_probe(&model.inner, n, &xs, trials, base_seed))?;
    points
        .iter()
        .map(|p| {
            let row = PyDict::new(py);
            row.set_item("x", p.x)?;
            row.set_item("trials", p.trials)?;
            row.set_item("successes", p.successes)?;
            row.set_item("phat", p.phat)?;
            Ok(row)
        })
        .collect()
}

/// Calibrates z so that P(E_w) ≈ `target` at depth n: the empirical
/// (1 − target)-quantile of per-environment best margins over `trials`
/// pilot environments.
#[pyfunction]
fn calibrate_z(model: &Model, n: u32, target: f64, trials: u64, base_seed: u64) -> PyResult<f64> {
    ok(brwgibbs_core::calibrate_z(&model.inner, n, target, trials, base_seed))
}

/// Derives a child seed from a base seed and a list of integer coordinates
/// — the same schedule the command-line tool uses for its grids, so Python
/// code can reproduce any CSV cell exactly.
#[pyfunction]
fn derive_seed(base: u64, parts: Vec<u64>) -> u64 {
    brwgibbs_core::derive_seed(base, &parts)
}

#[pymodule]
pub fn brwgibbs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(gibbs_probs, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(kl_gibbs_pair, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(algorithm_probs, m)?)?;
    m.add_function(wrap_pyfunction!(kl_exact, m)?)?;
    m.add_function(wrap_pyfunction!(kl_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(block_plan, m)?)?;
    m.add_function(wrap_pyfunction!(tau_formula, m)?)?;
    m.add_function(wrap_pyfunction!(exceptional_probability, m)?)?;
    m.add_function(wrap_pyfunction!(naive_search, m)?)?;
    m.add_function(wrap_pyfunction!(rescaled_path, m)?)?;
    m.add_function(wrap_pyfunction!(max_tail, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_z, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    m.add("DEFAULT_CAP", brwgibbs_core::DEFAULT_CAP)?;
    Ok(())
}
