//! Python bindings: codec, FPE, a local tuple space, agent validation and
//! the simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use ::beets::codec::{self, classify_value, Opcode, Tuple, Value, WireMessage, UDP_MAX_MESSAGE};
use ::beets::fpe::FpeTables;
use ::beets::space::{Lifetime, Origin, Pattern, TupleSpace};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_value(v: &Bound<'_, PyAny>) -> PyResult<Value> {
    if v.is_none() {
        return Ok(Value::Formal);
    }
    if let Ok(s) = v.extract::<String>() {
        return Value::string(s).map_err(err);
    }
    if v.extract::<bool>().is_ok() {
        return Err(PyValueError::new_err("booleans are not tuple values"));
    }
    let x: f64 = v.extract()?;
    classify_value(x).map_err(err)
}

fn to_tuple(items: &Bound<'_, PyAny>) -> PyResult<Tuple> {
    let values = items
        .try_iter()?
        .map(|v| to_value(&v?))
        .collect::<PyResult<Vec<_>>>()?;
    Tuple::new(values).map_err(err)
}

fn from_tuple<'py>(py: Python<'py>, t: &Tuple) -> PyResult<Bound<'py, PyList>> {
    let items: Vec<Py<PyAny>> = t
        .values()
        .iter()
        .map(|v| -> PyResult<Py<PyAny>> {
            Ok(match v {
                Value::Formal => py.None(),
                Value::Str(s) => s.into_pyobject(py)?.into_any().unbind(),
                Value::Int16(i) => i.into_pyobject(py)?.into_any().unbind(),
                Value::Float32(x) => (*x as f64).into_pyobject(py)?.into_any().unbind(),
            })
        })
        .collect::<PyResult<_>>()?;
    PyList::new(py, items)
}

fn tables(key: Option<&str>) -> PyResult<Option<FpeTables>> {
    key.map(FpeTables::from_secret).transpose().map_err(err)
}

/// Encodes a request; `key` applies FPE to the whole message.
#[pyfunction]
#[pyo3(signature = (op, items, seq=0, key=None))]
fn encode<'py>(
    py: Python<'py>,
    op: &str,
    items: &Bound<'py, PyAny>,
    seq: u8,
    key: Option<&str>,
) -> PyResult<Bound<'py, PyBytes>> {
    let op: Opcode = op.parse().map_err(err)?;
    if seq > 3 {
        return Err(PyValueError::new_err("seq must be 0..=3"));
    }
    let m = WireMessage::new(op, seq, to_tuple(items)?);
    let mut bytes = codec::encode_message(&m, UDP_MAX_MESSAGE).map_err(err)?;
    if let Some(t) = tables(key)? {
        bytes = t.encrypt(&bytes);
    }
    Ok(PyBytes::new(py, &bytes))
}

/// Returns `(op, seq, values)`.
#[pyfunction]
#[pyo3(signature = (data, key=None))]
fn decode<'py>(
    py: Python<'py>,
    data: &[u8],
    key: Option<&str>,
) -> PyResult<(String, u8, Bound<'py, PyList>)> {
    let plain = match tables(key)? {
        Some(t) => t.decrypt(data),
        None => data.to_vec(),
    };
    let m = codec::decode_message(&plain).map_err(err)?;
    Ok((m.op.name().to_string(), m.seq, from_tuple(py, &m.tuple)?))
}

/// Returns `(uuids, local_name)` for a message of at most 32 bytes.
#[pyfunction]
fn ble_pack(data: &[u8]) -> PyResult<(Vec<u16>, String)> {
    let p = codec::ble_pack(data).map_err(err)?;
    Ok((p.uuids.to_vec(), p.local_name))
}

#[pyfunction]
fn ble_unpack<'py>(py: Python<'py>, uuids: [u16; 7], local_name: String) -> PyResult<Bound<'py, PyBytes>> {
    let b = codec::ble_unpack(&codec::BleAdvPayload { uuids, local_name }).map_err(err)?;
    Ok(PyBytes::new(py, &b))
}

#[pyfunction]
fn fpe_encrypt<'py>(py: Python<'py>, key: &str, data: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let t = FpeTables::from_secret(key).map_err(err)?;
    Ok(PyBytes::new(py, &t.encrypt(data)))
}

#[pyfunction]
fn fpe_decrypt<'py>(py: Python<'py>, key: &str, data: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let t = FpeTables::from_secret(key).map_err(err)?;
    Ok(PyBytes::new(py, &t.decrypt(data)))
}

/// Validates an agent document and returns its name.
#[pyfunction]
fn check_agent(doc: &str) -> PyResult<String> {
    ::beets::agent::parse_agent(doc).map(|d| d.name).map_err(err)
}

/// Runs a built-in scenario or scenario file. Writes CSVs when `out` is
/// given and returns the summary metrics.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None, out=None))]
fn run_scenario<'py>(
    py: Python<'py>,
    scenario: &str,
    seed: Option<u64>,
    out: Option<std::path::PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut s = ::beets::sim::resolve_scenario(scenario).map_err(err)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let m = py
        .detach(|| ::beets::sim::run_scenario(&s))
        .map_err(err)?;
    if let Some(dir) = out {
        ::beets::sim::emit_metrics(&m, &dir).map_err(err)?;
    }
    let d = PyDict::new(py);
    for (k, v) in &m.summary {
        d.set_item(k, v)?;
    }
    Ok(d)
}

/// A host-local tuple space. Times are caller-supplied milliseconds.
#[pyclass(name = "TupleSpace")]
struct PySpace(TupleSpace);

#[pymethods]
impl PySpace {
    #[new]
    #[pyo3(signature = (name="local"))]
    fn new(name: &str) -> Self {
        PySpace(TupleSpace::new(name))
    }

    /// `lifetime_ms=None` never expires.
    #[pyo3(signature = (items, now=0, lifetime_ms=None))]
    fn out(&self, items: &Bound<'_, PyAny>, now: u64, lifetime_ms: Option<u64>) -> PyResult<()> {
        let lifetime = lifetime_ms.map_or(Lifetime::Never, Lifetime::Millis);
        self.0.out_local(to_tuple(items)?, lifetime, now, Origin::Local);
        Ok(())
    }

    #[pyo3(signature = (pattern, now=0))]
    fn rd<'py>(&self, py: Python<'py>, pattern: &Bound<'py, PyAny>, now: u64) -> PyResult<Option<Bound<'py, PyList>>> {
        let p = Pattern::new(to_tuple(pattern)?);
        self.0.rd_local(&p, now).map(|t| from_tuple(py, &t)).transpose()
    }

    #[pyo3(signature = (pattern, now=0))]
    fn inp<'py>(&self, py: Python<'py>, pattern: &Bound<'py, PyAny>, now: u64) -> PyResult<Option<Bound<'py, PyList>>> {
        let p = Pattern::new(to_tuple(pattern)?);
        self.0.inp_local(&p, now).map(|t| from_tuple(py, &t)).transpose()
    }

    #[pyo3(signature = (pattern, now=0))]
    fn rm(&self, pattern: &Bound<'_, PyAny>, now: u64) -> PyResult<usize> {
        Ok(self.0.rm_local(&Pattern::new(to_tuple(pattern)?), now))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pymodule]
#[pyo3(name = "beets")]
fn beets_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(ble_pack, m)?)?;
    m.add_function(wrap_pyfunction!(ble_unpack, m)?)?;
    m.add_function(wrap_pyfunction!(fpe_encrypt, m)?)?;
    m.add_function(wrap_pyfunction!(fpe_decrypt, m)?)?;
    m.add_function(wrap_pyfunction!(check_agent, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<PySpace>()?;
    Ok(())
}
