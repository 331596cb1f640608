//! Python extension module over the detection library: realize channel
//! instances, run any detector on them, and read the same instrumentation
//! the command-line binary reports.
//!
//! Build with `cargo build -p mimo-altmin-py`; the resulting cdylib is
//! importable once named `mimo_altmin_py.so` on `sys.path` (see
//! `python/smoke_test.py` for a loader that handles this).

use mimo_altmin::altmin::{self, AltMinConfig, DetectorResult};
use mimo_altmin::baselines::{self, LinearDetectorKind};
use mimo_altmin::metrics::{self, count_scope, OpCounter};
use mimo_altmin::model::{self, MimoSystem, RngStream};
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: mimo_altmin::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Bit vectors go out as lists of ints; a returned `Vec<u8>` would become
/// Python `bytes`.
fn bits_out(bits: Vec<u8>) -> Vec<u32> {
    bits.into_iter().map(u32::from).collect()
}

/// One realized uplink instance: channel, transmitted symbols, and the
/// noisy received vector, with real vectors in the stacked [Re; Im] layout.
#[pyclass(frozen, name = "System")]
struct PySystem {
    inner: MimoSystem,
    modulation: u32,
}

#[pymethods]
impl PySystem {
    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t
    }

    #[getter]
    fn n_r(&self) -> usize {
        self.inner.n_r
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }

    /// Complex noise variance σ_v² per receive dimension.
    #[getter]
    fn noise_var(&self) -> f64 {
        self.inner.noise_var_complex
    }

    #[getter]
    fn modulation(&self) -> u32 {
        self.modulation
    }

    /// Transmitted symbols, length 2·n_t.
    #[getter]
    fn x_true(&self) -> Vec<f64> {
        self.inner.x_true_real.clone()
    }

    /// Received vector, length 2·n_r.
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y_real.clone()
    }

    /// Bits behind `x_true`, in modulation order.
    #[getter]
    fn tx_bits(&self) -> PyResult<Vec<u32>> {
        let c = model::build_constellation(self.modulation).map_err(err)?;
        Ok(bits_out(model::demodulate(&self.inner.x_true_real, &c)))
    }

    /// Complex channel matrix as a row-major list of lists.
    fn channel(&self) -> Vec<Vec<Complex64>> {
        let h = &self.inner.h_complex;
        (0..h.rows()).map(|r| (0..h.cols()).map(|c| h.get(r, c)).collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "System(n_t={}, n_r={}, snr_db={}, modulation={})",
            self.inner.n_t, self.inner.n_r, self.inner.snr_db, self.modulation
        )
    }
}

/// Output of one detector run, including the real-multiplication tally the
/// complexity experiments are built on.
#[pyclass(frozen, name = "Detection")]
struct PyDetection {
    #[pyo3(get)]
    detector: String,
    #[pyo3(get)]
    x_hat: Vec<f64>,
    #[pyo3(get)]
    x_sliced: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    bit_errors: u64,
    #[pyo3(get)]
    bits: u64,
    #[pyo3(get)]
    real_mults: u64,
    #[pyo3(get)]
    sqrts: u64,
    /// ‖y − H·x_sliced‖² in the real expansion.
    #[pyo3(get)]
    residual_sq: f64,
    /// Objective after init and after each iteration, when traced.
    #[pyo3(get)]
    v_trace: Option<Vec<f64>>,
}

#[pymethods]
impl PyDetection {
    fn __repr__(&self) -> String {
        format!(
            "Detection(detector={:?}, bit_errors={}/{}, iterations={}, real_mults={})",
            self.detector, self.bit_errors, self.bits, self.iterations, self.real_mults
        )
    }
}

fn finish(
    label: &str,
    sys: &PySystem,
    r: DetectorResult,
    counter: &OpCounter,
) -> PyResult<PyDetection> {
    let c = model::build_constellation(sys.modulation).map_err(err)?;
    let tx = model::demodulate(&sys.inner.x_true_real, &c);
    let rx = model::demodulate(&r.x_hat_sliced, &c);
    let stat = metrics::ber(&tx, &rx).map_err(err)?;
    let hx = sys.inner.h_real.matvec(&r.x_hat_sliced);
    let residual_sq = sys.inner.y_real.iter().zip(&hx).map(|(y, v)| (y - v) * (y - v)).sum();
    Ok(PyDetection {
        detector: label.to_string(),
        x_hat: r.x_hat_real,
        x_sliced: r.x_hat_sliced,
        iterations: r.iterations,
        converged: r.converged,
        bit_errors: stat.bit_errors,
        bits: stat.bits_total,
        real_mults: counter.real_mults(),
        sqrts: counter.sqrts(),
        residual_sq,
        v_trace: r.v_trace,
    })
}

/// Draws bits, channel, and noise for one instance. `snr_db = inf` gives an
/// exactly noiseless system; `stream` selects an independent substream of
/// the same seed, matching the harness trial streams.
#[pyfunction]
#[pyo3(signature = (n_t, n_r, snr_db, modulation = 4, seed = 1, stream = 0))]
fn realize_system(
    n_t: usize,
    n_r: usize,
    snr_db: f64,
    modulation: u32,
    seed: u64,
    stream: u64,
) -> PyResult<PySystem> {
    let c = model::build_constellation(modulation).map_err(err)?;
    let mut rng = RngStream::new(seed, stream);
    let inner = model::realize_system(n_t, n_r, &c, snr_db, &mut rng).map_err(err)?;
    Ok(PySystem { inner, modulation })
}

/// Runs the alternating-minimization detector. `c_scale` defaults to N_t
/// (the recommended scaling); the stop rule is |ΔV| < tol with a hard cap
/// of `max_iter` iterations.
#[pyfunction]
#[pyo3(signature = (system, tol = 1e-3, max_iter = 8, c_scale = None, trace = false))]
fn altmin_detect(
    system: PyRef<'_, PySystem>,
    tol: f64,
    max_iter: usize,
    c_scale: Option<f64>,
    trace: bool,
) -> PyResult<PyDetection> {
    let cfg = AltMinConfig {
        tol,
        max_iter,
        c_scale: c_scale.unwrap_or(system.inner.n_t as f64),
        record_trace: trace,
    };
    cfg.validate().map_err(err)?;
    let c = model::build_constellation(system.modulation).map_err(err)?;
    let mut counter = count_scope("altmin");
    let r = altmin::run(&system.inner, &cfg, &c, &mut counter).map_err(err)?;
    finish("altmin", &system, r, &counter)
}

fn linear(system: &PySystem, kind: LinearDetectorKind, label: &str) -> PyResult<PyDetection> {
    let c = model::build_constellation(system.modulation).map_err(err)?;
    let mut counter = count_scope(label);
    let r = baselines::linear_detect(&system.inner, kind, &c, &mut counter).map_err(err)?;
    finish(label, system, r, &counter)
}

/// Exact MMSE detection via Hermitian Cholesky on the complex Gram matrix.
#[pyfunction]
fn mmse_detect(system: PyRef<'_, PySystem>) -> PyResult<PyDetection> {
    linear(&system, LinearDetectorKind::Mmse, "mmse")
}

/// Exact zero-forcing detection; fails on rank-deficient channels.
#[pyfunction]
fn zf_detect(system: PyRef<'_, PySystem>) -> PyResult<PyDetection> {
    linear(&system, LinearDetectorKind::Zf, "zf")
}

/// Exhaustive maximum-likelihood search; feasible only for small systems.
#[pyfunction]
fn ml_detect(system: PyRef<'_, PySystem>) -> PyResult<PyDetection> {
    let c = model::build_constellation(system.modulation).map_err(err)?;
    let mut counter = count_scope("ml");
    let r = baselines::ml_bruteforce(&system.inner, &c, &mut counter).map_err(err)?;
    finish("ml", &system, r, &counter)
}

/// Gray-maps bits onto the stacked real symbol vector; the antenna count is
/// inferred from the bit count.
#[pyfunction]
#[pyo3(signature = (bits, modulation = 4))]
fn modulate(bits: Vec<u8>, modulation: u32) -> PyResult<Vec<f64>> {
    let c = model::build_constellation(modulation).map_err(err)?;
    let per_antenna = 2 * c.bits_per_real_dim as usize;
    if bits.is_empty() || bits.len() % per_antenna != 0 {
        return Err(PyValueError::new_err(format!(
            "bit count {} is not a positive multiple of {per_antenna}",
            bits.len()
        )));
    }
    model::modulate(&bits, &c, bits.len() / per_antenna).map_err(err)
}

/// Per-coordinate nearest-amplitude slicing back to bits.
#[pyfunction]
#[pyo3(signature = (x, modulation = 4))]
fn demodulate(x: Vec<f64>, modulation: u32) -> PyResult<Vec<u32>> {
    let c = model::build_constellation(modulation).map_err(err)?;
    Ok(bits_out(model::demodulate(&x, &c)))
}

/// Bit error statistics as (ber, bit_errors, bits, ci95_half_width).
#[pyfunction]
fn ber(tx_bits: Vec<u8>, rx_bits: Vec<u8>) -> PyResult<(f64, u64, u64, f64)> {
    let stat = metrics::ber(&tx_bits, &rx_bits).map_err(err)?;
    Ok((stat.ber, stat.bit_errors, stat.bits_total, stat.ci95_half_width))
}

/// (σ_v², per-real-dimension variance) under the N_t-referenced convention
/// σ_v² = N_t·10^(−snr_db/10).
#[pyfunction]
fn snr_to_noise_variance(snr_db: f64, n_t: usize) -> (f64, f64) {
    model::snr_to_noise_variance(snr_db, n_t)
}

/// Per-dimension PAM amplitudes of the supported square constellations.
#[pyfunction]
#[pyo3(signature = (modulation = 4))]
fn alphabet(modulation: u32) -> PyResult<Vec<f64>> {
    Ok(model::build_constellation(modulation).map_err(err)?.alphabet)
}

#[pymodule]
fn mimo_altmin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystem>()?;
    m.add_class::<PyDetection>()?;
    m.add_function(wrap_pyfunction!(realize_system, m)?)?;
    m.add_function(wrap_pyfunction!(altmin_detect, m)?)?;
    m.add_function(wrap_pyfunction!(mmse_detect, m)?)?;
    m.add_function(wrap_pyfunction!(zf_detect, m)?)?;
    m.add_function(wrap_pyfunction!(ml_detect, m)?)?;
    m.add_function(wrap_pyfunction!(modulate, m)?)?;
    m.add_function(wrap_pyfunction!(demodulate, m)?)?;
    m.add_function(wrap_pyfunction!(ber, m)?)?;
    m.add_function(wrap_pyfunction!(snr_to_noise_variance, m)?)?;
    m.add_function(wrap_pyfunction!(alphabet, m)?)?;
    Ok(())
}
