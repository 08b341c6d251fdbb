//! Python bindings: exact fIETs, induction, constructions, and the sampled
//! experiments. Scalars cross the boundary as text in the map's arithmetic
//! ("3/10", "1+2*sqrt(5)", "0.25~prec=53"), experiment reports as JSON
//! strings, so Python sees exactly what the CLI writes.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fietlab::construct::{glue_flip, golden_rotation as golden_rotation_iet, rotation_iet};
use fietlab::dynamics::iterate_orbit;
use fietlab::fiet::{FietRecord, FlipIET};
use fietlab::graph::{build_graph, find_positive_loop};
use fietlab::induction::{
    arrow_for, rauzy_step, zorich_step, InductionError, RauzyPath, StepCase, StepOutcome,
    ZorichOutcome,
};
use fietlab::lab::experiments as lab;
use fietlab::lab::{LabError, WeightVector};
use fietlab::perm::SignedPermutation;
use fietlab::scalar::{ArithError, Backend, Scalar};

fn value_err(msg: impl Into<String>) -> PyErr {
    PyValueError::new_err(msg.into())
}

fn arith_err(e: ArithError) -> PyErr {
    match e {
        ArithError::Undecidable { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn lab_err(e: LabError) -> PyErr {
    match e {
        LabError::Arith(a) => arith_err(a),
        other => value_err(other.to_string()),
    }
}

fn parse_perm(text: &str) -> PyResult<SignedPermutation> {
    text.parse()
        .map_err(|e| value_err(format!("bad permutation {text:?}: {e}")))
}

fn parse_backend(text: &str) -> PyResult<Backend> {
    text.parse()
        .map_err(|e| value_err(format!("bad backend {text:?}: {e}")))
}

fn parse_cases(text: &str) -> PyResult<Vec<StepCase>> {
    let mut out = Vec::new();
    for ch in text.chars() {
        match ch {
            'A' | 'a' => out.push(StepCase::A),
            'B' | 'b' => out.push(StepCase::B),
            c if c.is_whitespace() || c == ',' => {}
            other => return Err(value_err(format!("bad case letter {other:?}"))),
        }
    }
    if out.is_empty() {
        return Err(value_err("empty case word"));
    }
    Ok(out)
}

fn path_from_cases(p: &SignedPermutation, cases: &[StepCase]) -> PyResult<RauzyPath> {
    let mut path = RauzyPath::new(p.clone());
    for (i, &case) in cases.iter().enumerate() {
        let arrow = arrow_for(path.end(), case).ok_or_else(|| {
            value_err(format!(
                "case {case} at step {} leaves the irreducible class",
                i + 1
            ))
        })?;
        path.push(arrow).map_err(induction_err)?;
    }
    Ok(path)
}

fn induction_err(e: InductionError) -> PyErr {
    match e {
        InductionError::BudgetExceeded { .. } => PyRuntimeError::new_err(e.to_string()),
        InductionError::Arith(a) => arith_err(a),
        other => value_err(other.to_string()),
    }
}

fn resolve_loop(p: &SignedPermutation, section: Option<&str>) -> PyResult<RauzyPath> {
    match section {
        Some(txt) => path_from_cases(p, &parse_cases(txt)?),
        None => {
            let g = build_graph(p, 4096).map_err(|e| value_err(e.to_string()))?;
            find_positive_loop(&g, &p.to_string(), 12, false)
                .map_err(|e| value_err(e.to_string()))?
                .ok_or_else(|| {
                    value_err(format!("no positive loop of length <= 12 at {p}"))
                })
        }
    }
}

fn parse_weights(weights: Vec<String>) -> PyResult<WeightVector> {
    let mut v = Vec::with_capacity(weights.len());
    for w in &weights {
        v.push(
            Scalar::parse_with_backend(w, Backend::Rational)
                .map_err(|e| value_err(format!("bad weight {w:?}: {e}")))?,
        );
    }
    WeightVector::new(v).map_err(lab_err)
}

/// An interval exchange transformation with flips over exact arithmetic.
#[pyclass(name = "Fiet", module = "fietlab_py")]
struct PyFiet {
    inner: FlipIET,
}

#[pymethods]
impl PyFiet {
    /// Fiet(perm, lengths, backend="rational"): perm is signed permutation
    /// text like "-2 1", lengths are scalar texts in the given arithmetic.
    #[new]
    #[pyo3(signature = (perm, lengths, backend = "rational"))]
    fn new(perm: &str, lengths: Vec<String>, backend: &str) -> PyResult<PyFiet> {
        let refs: Vec<&str> = lengths.iter().map(String::as_str).collect();
        let inner =
            FlipIET::parse(perm, &refs, parse_backend(backend)?).map_err(value_err)?;
        Ok(PyFiet { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn perm(&self) -> String {
        self.inner.perm().to_string()
    }

    #[getter]
    fn lengths(&self) -> Vec<String> {
        self.inner.lengths().iter().map(Scalar::to_string).collect()
    }

    #[getter]
    fn backend(&self) -> String {
        self.inner.backend().to_string()
    }

    #[getter]
    fn total(&self) -> String {
        self.inner.total().to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Fiet({:?}, {:?}, backend={:?})",
            self.perm(),
            self.lengths(),
            self.backend()
        )
    }

    /// Exact image of an interior point given as scalar text.
    fn evaluate(&self, x: &str) -> PyResult<String> {
        let x = Scalar::parse_with_backend(x, self.inner.backend())
            .map_err(|e| value_err(format!("bad point {x:?}: {e}")))?;
        let y = self
            .inner
            .evaluate(&x)
            .map_err(|e| value_err(e.to_string()))?;
        Ok(y.to_string())
    }

    /// One right-cut induction step: the induced map, or None at a tie or
    /// hole.
    fn step(&self) -> PyResult<Option<PyFiet>> {
        match rauzy_step(&self.inner).map_err(arith_err)? {
            StepOutcome::Step { next, .. } => Ok(Some(PyFiet { inner: next })),
            StepOutcome::Tie | StepOutcome::Hole { .. } => Ok(None),
        }
    }

    /// Run induction up to a step budget. Returns (verdict, steps_done,
    /// end_perm) with verdict one of "SurvivedBudget", "Tie", "Hole".
    #[pyo3(signature = (steps, zorich = false))]
    fn induce(&self, steps: usize, zorich: bool) -> PyResult<(String, usize, String)> {
        let mut f = self.inner.clone();
        let mut done = 0usize;
        let verdict = loop {
            if done == steps {
                break "SurvivedBudget";
            }
            if zorich {
                match zorich_step(&f).map_err(arith_err)? {
                    ZorichOutcome::Run { next, .. } => {
                        done += 1;
                        f = next;
                    }
                    ZorichOutcome::Tie => break "Tie",
                    ZorichOutcome::Hole { successor, .. } => {
                        return Ok(("Hole".to_string(), done, successor.to_string()))
                    }
                }
            } else {
                match rauzy_step(&f).map_err(arith_err)? {
                    StepOutcome::Step { next, .. } => {
                        done += 1;
                        f = next;
                    }
                    StepOutcome::Tie => break "Tie",
                    StepOutcome::Hole { successor, .. } => {
                        return Ok(("Hole".to_string(), done, successor.to_string()))
                    }
                }
            }
        };
        Ok((verdict.to_string(), done, f.perm().to_string()))
    }

    /// Orbit of a starting point: (points as scalar text, stop reason).
    #[pyo3(signature = (start, steps = 1000))]
    fn orbit(&self, start: &str, steps: usize) -> PyResult<(Vec<String>, String)> {
        let x0 = Scalar::parse_with_backend(start, self.inner.backend())
            .map_err(|e| value_err(format!("bad point {start:?}: {e}")))?;
        let rec = iterate_orbit(&self.inner, &x0, steps);
        let points = rec.points.iter().map(Scalar::to_string).collect();
        Ok((points, format!("{:?}", rec.stop)))
    }

    /// JSON record, the same shape the CLI emits and accepts.
    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FietRecord::of(&self.inner))
            .expect("record serializes")
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<PyFiet> {
        let rec: serde_json::Value =
            serde_json::from_str(text).map_err(|e| value_err(format!("bad record: {e}")))?;
        let rec: FietRecord = serde_json::from_value(rec)
            .map_err(|e| value_err(format!("bad record: {e}")))?;
        Ok(PyFiet {
            inner: rec.build().map_err(value_err)?,
        })
    }
}

/// The 2-interval realization of x -> x + alpha (mod 1).
#[pyfunction]
#[pyo3(signature = (alpha, backend = "rational"))]
fn rotation(alpha: &str, backend: &str) -> PyResult<PyFiet> {
    let a = Scalar::parse_with_backend(alpha, parse_backend(backend)?)
        .map_err(|e| value_err(format!("bad rotation amount {alpha:?}: {e}")))?;
    Ok(PyFiet {
        inner: rotation_iet(&a).map_err(|e| value_err(e.to_string()))?,
    })
}

/// Rotation by the golden amount in quad:5 arithmetic.
#[pyfunction]
fn golden_rotation() -> PyFiet {
    PyFiet {
        inner: golden_rotation_iet(),
    }
}

/// Glue the two continuity branches of an unflipped IET into a flipped map
/// on an extended interval whose first return reproduces the source.
#[pyfunction]
fn glue(f: &PyFiet) -> PyResult<PyFiet> {
    Ok(PyFiet {
        inner: glue_flip(&f.inner)
            .map_err(|e| value_err(e.to_string()))?
            .fiet,
    })
}

/// Induction class graph from a seed permutation, as adjacency JSON.
#[pyfunction]
#[pyo3(signature = (perm, limit = 10_000))]
fn class_graph_json(perm: &str, limit: usize) -> PyResult<String> {
    let p = parse_perm(perm)?;
    let g = build_graph(&p, limit).map_err(|e| value_err(e.to_string()))?;
    Ok(g.to_json_string())
}

/// Case word of the shortest positive loop at a vertex, or None.
#[pyfunction]
#[pyo3(signature = (perm, max_len = 12))]
fn positive_loop(perm: &str, max_len: usize) -> PyResult<Option<String>> {
    let p = parse_perm(perm)?;
    let g = build_graph(&p, 4096).map_err(|e| value_err(e.to_string()))?;
    let found = find_positive_loop(&g, &p.to_string(), max_len, false)
        .map_err(|e| value_err(e.to_string()))?;
    Ok(found.map(|path| path.cases().iter().map(|c| c.to_string()).collect()))
}

/// Fraction of length vectors alive at each induction depth; report JSON.
#[pyfunction]
#[pyo3(signature = (perm, depths, samples, seed, threshold = None))]
fn survival(
    perm: &str,
    depths: Vec<usize>,
    samples: usize,
    seed: u64,
    threshold: Option<f64>,
) -> PyResult<String> {
    let p = parse_perm(perm)?;
    lab::survival_fraction(&p, &depths, samples, seed, threshold)
        .map(|r| r.json())
        .map_err(lab_err)
}

/// Short-interval hitting probabilities against the n/T ceiling; report JSON.
#[pyfunction]
fn kerckhoff(
    perm: &str,
    weights: Vec<String>,
    alpha: usize,
    ts: Vec<f64>,
    samples: usize,
    seed: u64,
) -> PyResult<String> {
    let p = parse_perm(perm)?;
    let q = parse_weights(weights)?;
    lab::kerckhoff_experiment(&p, &q, alpha, &ts, samples, seed)
        .map(|r| r.json())
        .map_err(lab_err)
}

/// Decay of cylinder-weight distortion along random walks; report JSON.
#[pyfunction]
fn distortion(
    perm: &str,
    weights: Vec<String>,
    cs: Vec<f64>,
    depth: usize,
    samples: usize,
    seed: u64,
) -> PyResult<String> {
    let p = parse_perm(perm)?;
    let q = parse_weights(weights)?;
    lab::distortion_experiment(&p, &q, &cs, depth, samples, seed)
        .map(|r| r.json())
        .map_err(lab_err)
}

/// Tail of the return roof over a positive loop section; report JSON.
#[pyfunction]
#[pyo3(signature = (perm, ts, samples, seed, section = None, budget = 4000))]
fn tails(
    perm: &str,
    ts: Vec<f64>,
    samples: usize,
    seed: u64,
    section: Option<&str>,
    budget: usize,
) -> PyResult<String> {
    let p = parse_perm(perm)?;
    let gamma = resolve_loop(&p, section)?;
    lab::roof_tail(&gamma, &ts, samples, seed, budget)
        .map(|r| r.json())
        .map_err(lab_err)
}

/// Exact small-mass decay of first-return words; report JSON.
#[pyfunction]
#[pyo3(signature = (perm, epsilons, samples, seed, section = None, depth = 20_000))]
fn fastdecay(
    perm: &str,
    epsilons: Vec<f64>,
    samples: usize,
    seed: u64,
    section: Option<&str>,
    depth: usize,
) -> PyResult<String> {
    let p = parse_perm(perm)?;
    let gamma = resolve_loop(&p, section)?;
    lab::fast_decay_check(&p, &gamma, depth, &epsilons, samples, seed)
        .map(|r| r.json())
        .map_err(lab_err)
}

/// Box-counting dimension of the set surviving deep induction; report JSON.
#[pyfunction]
#[pyo3(signature = (perm, depth, resolutions, candidates, seed, slope_min = 0.9, slope_max = 2.0))]
fn dimension(
    perm: &str,
    depth: usize,
    resolutions: Vec<usize>,
    candidates: usize,
    seed: u64,
    slope_min: f64,
    slope_max: f64,
) -> PyResult<String> {
    let p = parse_perm(perm)?;
    lab::box_dimension(&p, depth, &resolutions, candidates, seed, (slope_min, slope_max))
        .map(|r| r.json())
        .map_err(lab_err)
}

/// Projective contraction and Jacobian identity spot checks; report JSON.
#[pyfunction]
#[pyo3(signature = (perm, pairs, seed, path = None))]
fn expansion(perm: &str, pairs: usize, seed: u64, path: Option<&str>) -> PyResult<String> {
    let p = parse_perm(perm)?;
    let gamma = resolve_loop(&p, path)?;
    lab::expansion_check(&gamma, pairs, seed)
        .map(|r| r.json())
        .map_err(lab_err)
}

#[pymodule]
fn fietlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFiet>()?;
    m.add_function(wrap_pyfunction!(rotation, m)?)?;
    m.add_function(wrap_pyfunction!(golden_rotation, m)?)?;
    m.add_function(wrap_pyfunction!(glue, m)?)?;
    m.add_function(wrap_pyfunction!(class_graph_json, m)?)?;
    m.add_function(wrap_pyfunction!(positive_loop, m)?)?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    m.add_function(wrap_pyfunction!(kerckhoff, m)?)?;
    m.add_function(wrap_pyfunction!(distortion, m)?)?;
    m.add_function(wrap_pyfunction!(tails, m)?)?;
    m.add_function(wrap_pyfunction!(fastdecay, m)?)?;
    m.add_function(wrap_pyfunction!(dimension, m)?)?;
    m.add_function(wrap_pyfunction!(expansion, m)?)?;
    Ok(())
}
