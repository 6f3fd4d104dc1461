//! Python bindings: `import padp`.

use std::collections::BTreeMap;

use padp_core::antenna::{self, Side};
use padp_core::crlb as core_crlb;
use padp_core::estimation::{self, EstimatorOptions, Method};
use padp_core::experiments;
use padp_core::io::{self as core_io, PowerScale};
use padp_core::synthesis::{self, ArrayConfig, MpcTruth, SoundingConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: padp_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_side(s: &str) -> PyResult<Side> {
    match s {
        "minus" | "-" => Ok(Side::Minus),
        "plus" | "+" => Ok(Side::Plus),
        _ => Err(PyValueError::new_err(format!("side must be 'minus' or 'plus', got {s:?}"))),
    }
}

/// Receive antenna pattern.
#[pyclass(name = "AntennaPattern", module = "padp", frozen)]
struct PyPattern {
    inner: padp_core::AntennaPattern,
}

#[pymethods]
impl PyPattern {
    /// Gaussian beam from peak gain (dB) and half-power beamwidth (degrees).
    #[staticmethod]
    fn gaussian(g_max_db: f64, hpbw_deg: f64) -> PyResult<Self> {
        padp_core::AntennaPattern::gaussian_db(g_max_db, hpbw_deg)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    /// Tabulated pattern from `(offset_rad, amplitude_gain)` pairs.
    #[staticmethod]
    fn table(points: Vec<(f64, f64)>) -> PyResult<Self> {
        padp_core::AntennaPattern::tabulated(points).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        padp_core::AntennaPattern::load_csv(path).map(|inner| Self { inner }).map_err(err)
    }

    fn gain(&self, offset: f64) -> f64 {
        self.inner.gain(offset)
    }

    fn power(&self, offset: f64) -> f64 {
        self.inner.power(offset)
    }

    #[getter]
    fn g_max(&self) -> f64 {
        self.inner.g_max()
    }

    #[getter]
    fn hpbw(&self) -> f64 {
        self.inner.hpbw()
    }

    #[getter]
    fn kappa(&self) -> Option<f64> {
        self.inner.kappa()
    }

    fn __repr__(&self) -> String {
        format!(
            "AntennaPattern(g_max={:.4}, hpbw_deg={:.4}, gaussian={})",
            self.inner.g_max(),
            self.inner.hpbw().to_degrees(),
            self.inner.is_gaussian()
        )
    }
}

/// Power-angle-delay profile.
#[pyclass(name = "Padp", module = "padp", frozen)]
struct PyPadp {
    inner: padp_core::Padp,
}

#[pymethods]
impl PyPadp {
    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn asi(&self) -> f64 {
        self.inner.asi
    }

    #[getter]
    fn delay_step(&self) -> f64 {
        self.inner.delay_step
    }

    #[getter]
    fn has_cir(&self) -> bool {
        self.inner.cir.is_some()
    }

    /// Row-major power values as nested lists.
    fn power(&self) -> Vec<Vec<f64>> {
        self.inner.power.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    #[pyo3(signature = (path, db = false))]
    fn save(&self, path: &str, db: bool) -> PyResult<()> {
        let scale = if db { PowerScale::Db } else { PowerScale::Linear };
        core_io::write_padp(path, &self.inner, scale, &BTreeMap::new()).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        core_io::read_padp(path).map(|(_, inner)| Self { inner }).map_err(err)
    }
}

/// One estimated MPC. Angles in radians, delay in seconds, linear power.
#[pyclass(name = "Estimate", module = "padp", frozen, get_all)]
struct PyEstimate {
    method: String,
    tau: f64,
    phi: f64,
    power: f64,
    chi_hat: Option<f64>,
    eps: Option<f64>,
    side: Option<String>,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "Estimate(method={:?}, tau_ns={:.4}, phi_deg={:.6}, power_db={:.4})",
            self.method,
            self.tau * 1e9,
            self.phi.to_degrees(),
            antenna::linear_to_db(self.power)
        )
    }
}

fn sounding(k: usize, fc: f64, bw: f64, sigma2: f64) -> SoundingConfig {
    SoundingConfig {
        fc,
        bw,
        k,
        sigma2,
        ..Default::default()
    }
}

fn truths(mpcs: Vec<(f64, f64, f64, f64)>) -> Vec<MpcTruth> {
    mpcs.into_iter()
        .map(|(alpha, phase, tau, phi)| MpcTruth::new(alpha, phase, tau, phi))
        .collect()
}

/// Normalized power difference for an MPC at `eps` from the peak direction.
#[pyfunction]
#[pyo3(signature = (pattern, eps, side = "minus"))]
fn chi(pattern: &PyPattern, eps: f64, side: &str) -> PyResult<f64> {
    Ok(antenna::chi(&pattern.inner, eps, parse_side(side)?))
}

/// Offset from chi: closed form for Gaussian beams, table search otherwise.
#[pyfunction]
#[pyo3(signature = (pattern, chi, side = "minus"))]
fn invert_chi(pattern: &PyPattern, chi: f64, side: &str) -> PyResult<f64> {
    let side = parse_side(side)?;
    match pattern.inner.kappa() {
        Some(kappa) => antenna::invert_chi_closed(chi, side, pattern.inner.hpbw(), kappa).map_err(err),
        None => Ok(antenna::invert_chi_tabulated(chi, side, &pattern.inner, antenna::DEFAULT_INVERSION_STEP)),
    }
}

/// Simulate a PADP. `mpcs` holds `(alpha, phase_rad, tau_s, phi_rad)` tuples.
#[pyfunction]
#[pyo3(signature = (mpcs, pattern, m = 36, k = 1001, fc = 37.5e9, bw = 2e9, sigma2 = 0.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    mpcs: Vec<(f64, f64, f64, f64)>,
    pattern: &PyPattern,
    m: usize,
    k: usize,
    fc: f64,
    bw: f64,
    sigma2: f64,
    seed: u64,
) -> PyResult<PyPadp> {
    let arr = ArrayConfig::new(m).map_err(err)?;
    synthesis::simulate_padp(&truths(mpcs), &arr, &pattern.inner, &sounding(k, fc, bw, sigma2), seed)
        .map(|inner| PyPadp { inner })
        .map_err(err)
}

/// Run one estimator (`o1`, `o2`, `haed`, `haed+`).
#[pyfunction]
#[pyo3(signature = (padp, pattern, method = "haed", upsample = 16, threshold_db = 6.0))]
fn estimate(padp: &PyPadp, pattern: &PyPattern, method: &str, upsample: usize, threshold_db: f64) -> PyResult<Vec<PyEstimate>> {
    let method: Method = method.parse().map_err(err)?;
    let mut opts = EstimatorOptions {
        upsample: upsample.max(2),
        ..Default::default()
    };
    opts.peaks.noise_floor_db_offset = threshold_db;
    opts.peaks.validate().map_err(err)?;
    Ok(estimation::estimate(&padp.inner, &pattern.inner, method, &opts)
        .into_iter()
        .map(|e| PyEstimate {
            method: e.method.as_str().to_string(),
            tau: e.tau_hat,
            phi: e.phi_hat,
            power: e.p_hat,
            chi_hat: e.aux.map(|a| a.chi_hat),
            eps: e.aux.map(|a| a.eps_hat),
            side: e.aux.map(|a| a.side.as_str().to_string()),
        })
        .collect())
}

/// Closed-form single-MPC angle bound, rad^2.
#[pyfunction]
#[pyo3(signature = (gamma_i, pattern, phi, m = 36, k = 1001))]
fn crlb_single_phi(gamma_i: f64, pattern: &PyPattern, phi: f64, m: usize, k: usize) -> PyResult<f64> {
    let arr = ArrayConfig::new(m).map_err(err)?;
    core_crlb::crlb_single_phi(gamma_i, &sounding(k, 37.5e9, 2e9, 0.0), &arr, &pattern.inner, phi).map_err(err)
}

/// Closed-form single-MPC normalized-amplitude (and phase) bound.
#[pyfunction]
#[pyo3(signature = (gamma_i, pattern, phi, m = 36, k = 1001))]
fn crlb_single_alpha(gamma_i: f64, pattern: &PyPattern, phi: f64, m: usize, k: usize) -> PyResult<f64> {
    let arr = ArrayConfig::new(m).map_err(err)?;
    core_crlb::crlb_single_alpha(gamma_i, &sounding(k, 37.5e9, 2e9, 0.0), &arr, &pattern.inner, phi).map_err(err)
}

/// Bounds from the full FIM, one `(alpha, phase, phi, tau)` variance tuple per MPC.
#[pyfunction]
#[pyo3(signature = (mpcs, pattern, sigma2, m = 36, k = 1001, fc = 37.5e9, bw = 2e9))]
fn crlb(
    mpcs: Vec<(f64, f64, f64, f64)>,
    pattern: &PyPattern,
    sigma2: f64,
    m: usize,
    k: usize,
    fc: f64,
    bw: f64,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let arr = ArrayConfig::new(m).map_err(err)?;
    let r = core_crlb::crlb(&truths(mpcs), &arr, &pattern.inner, &sounding(k, fc, bw, sigma2)).map_err(err)?;
    Ok((0..r.n_mpcs())
        .map(|l| {
            let b = r.mpc(l);
            (b.amplitude, b.phase, b.angle, b.delay)
        })
        .collect())
}

/// Noise-free uniform-angle study. Returns `{method: (mean_abs_angle_deg, mean_power_err_db)}`.
#[pyfunction]
#[pyo3(signature = (pattern, n = 1000, seed = 0, m = 36, k = 256))]
fn offset_study(pattern: &PyPattern, n: usize, seed: u64, m: usize, k: usize) -> PyResult<BTreeMap<String, (f64, f64)>> {
    let arr = ArrayConfig::new(m).map_err(err)?;
    let stats = experiments::uniform_offset_study(
        n,
        seed,
        &[Method::O1, Method::O2, Method::Haed],
        &sounding(k, 37.5e9, 2e9, 0.0),
        &arr,
        &pattern.inner,
        &EstimatorOptions::default(),
    )
    .map_err(err)?;
    Ok(stats
        .into_iter()
        .map(|s| (s.method.as_str().to_string(), (s.angle_deg.mae, s.power_db.mean)))
        .collect())
}

#[pymodule]
fn padp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", padp_core::VERSION)?;
    m.add_class::<PyPattern>()?;
    m.add_class::<PyPadp>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(chi, m)?)?;
    m.add_function(wrap_pyfunction!(invert_chi, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(crlb_single_phi, m)?)?;
    m.add_function(wrap_pyfunction!(crlb_single_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(crlb, m)?)?;
    m.add_function(wrap_pyfunction!(offset_study, m)?)?;
    Ok(())
}
