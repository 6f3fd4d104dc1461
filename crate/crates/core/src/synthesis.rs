//! Wideband DSS observation model: per-direction channel frequency responses,
//! additive noise, the delay-domain transform and the assembled PADP.
//!
//! The frequency grid is `K` points spaced `bw / K`, symmetric about `fc`,
//! so the delay grid `j / bw` together with the `1/sqrt(K)` scaling makes the
//! frequency-to-delay transform unitary.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaPattern;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundingConfig {
    /// Centre frequency, Hz.
    pub fc: f64,
    /// Bandwidth, Hz.
    pub bw: f64,
    /// Number of frequency points.
    pub k: usize,
    /// Transmit power; the transmitted spectrum is `sqrt(pu)`.
    pub pu: f64,
    /// Noise spectral height.
    pub sigma2: f64,
    /// Transmit antenna amplitude gain.
    pub g_tx: f64,
}

impl Default for SoundingConfig {
    fn default() -> Self {
        Self {
            fc: 37.5e9,
            bw: 2e9,
            k: 1001,
            pu: 1.0,
            sigma2: 0.0,
            g_tx: 1.0,
        }
    }
}

impl SoundingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Invalid(format!("need at least 2 frequency points, got {}", self.k)));
        }
        if !(self.bw > 0.0 && self.bw.is_finite()) {
            return Err(Error::Invalid(format!("bandwidth must be positive, got {}", self.bw)));
        }
        if !(self.pu > 0.0) || !(self.sigma2 >= 0.0) || !(self.g_tx > 0.0) || !self.fc.is_finite() {
            return Err(Error::Invalid("pu and g_tx must be positive, sigma2 non-negative".into()));
        }
        Ok(())
    }

    pub fn freq_step(&self) -> f64 {
        self.bw / self.k as f64
    }

    /// Lowest frequency of the grid.
    pub fn f0(&self) -> f64 {
        self.fc - 0.5 * (self.k as f64 - 1.0) * self.freq_step()
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.f0() + i as f64 * self.freq_step()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.frequency(i)).collect()
    }

    pub fn delay_step(&self) -> f64 {
        1.0 / self.bw
    }

    pub fn delays(&self) -> Vec<f64> {
        (0..self.k).map(|j| j as f64 * self.delay_step()).collect()
    }

    /// Noise spectral height giving input SNR `alpha^2 pu / sigma2 = gamma_i`.
    pub fn sigma2_for_input_snr(&self, gamma_i: f64, alpha: f64) -> f64 {
        alpha * alpha * self.pu / gamma_i
    }

    /// Input SNR for unit amplitude.
    pub fn input_snr(&self) -> f64 {
        self.pu / self.sigma2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// Number of scan directions around the full circle.
    pub m: usize,
}

impl ArrayConfig {
    pub fn new(m: usize) -> Result<Self> {
        let a = Self { m };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::Invalid(format!("need at least 3 scan directions, got {}", self.m)));
        }
        Ok(())
    }

    /// Angular sampling interval, `2 pi / M`.
    pub fn asi(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    pub fn steering(&self, idx: usize) -> f64 {
        2.0 * PI * idx as f64 / self.m as f64
    }

    pub fn steering_angles(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.steering(i)).collect()
    }
}

/// Ground-truth multipath component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcTruth {
    pub alpha: f64,
    /// Phase, rad.
    pub phase: f64,
    /// Delay, s.
    pub tau: f64,
    /// Azimuth angle of arrival, rad in [0, 2 pi).
    pub phi: f64,
}

impl MpcTruth {
    pub fn new(alpha: f64, phase: f64, tau: f64, phi: f64) -> Self {
        Self {
            alpha,
            phase,
            tau,
            phi: crate::wrap_2pi(phi),
        }
    }
}

/// Complex samples over (scan direction, frequency).
#[derive(Debug, Clone, PartialEq)]
pub struct CfrSet {
    pub values: Array2<Complex64>,
    /// First frequency of the grid, Hz.
    pub f0: f64,
    /// Frequency spacing, Hz.
    pub df: f64,
}

/// Complex delay-domain responses over (scan direction, delay bin).
#[derive(Debug, Clone, PartialEq)]
pub struct CirSet {
    pub values: Array2<Complex64>,
    pub delay_step: f64,
    /// First frequency of the spectrum these responses came from, Hz.
    pub f0: f64,
}

/// Power-angle-delay profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Padp {
    /// Linear power, rows = scan direction in steering order, columns = delay bin.
    pub power: Array2<f64>,
    /// Angular sampling interval, rad.
    pub asi: f64,
    /// Delay bin width, s.
    pub delay_step: f64,
    /// Complex delay responses the powers came from, when available.
    pub cir: Option<CirSet>,
}

impl Padp {
    pub fn m(&self) -> usize {
        self.power.nrows()
    }

    pub fn k(&self) -> usize {
        self.power.ncols()
    }

    pub fn angle(&self, m: usize) -> f64 {
        m as f64 * self.asi
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.m()).map(|m| self.angle(m)).collect()
    }

    pub fn delay(&self, j: usize) -> f64 {
        j as f64 * self.delay_step
    }

    pub fn delays(&self) -> Vec<f64> {
        (0..self.k()).map(|j| self.delay(j)).collect()
    }

    pub fn row(&self, m: usize) -> ArrayView1<'_, f64> {
        self.power.row(m)
    }

    /// Previous scan direction, wrapping around the circle.
    pub fn prev_row(&self, m: usize) -> usize {
        (m + self.m() - 1) % self.m()
    }

    pub fn next_row(&self, m: usize) -> usize {
        (m + 1) % self.m()
    }

    /// Same PADP without the complex responses, as it would be read from disk.
    pub fn power_only(&self) -> Padp {
        Padp {
            cir: None,
            ..self.clone()
        }
    }
}

fn unit_phasor(cycles: f64) -> Complex64 {
    // reduce to a fraction of a cycle before multiplying by 2 pi
    let frac = cycles - cycles.round();
    Complex64::from_polar(1.0, 2.0 * PI * frac)
}

/// Noise-free received spectra `S_m(f_k) = sqrt(pu) H_m(f_k)`.
pub fn synth_cfr(
    mpcs: &[MpcTruth],
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    cfg: &SoundingConfig,
) -> Result<CfrSet> {
    if mpcs.is_empty() {
        return Err(Error::Invalid("at least one MPC is required".into()));
    }
    cfg.validate()?;
    arr.validate()?;
    let freqs = cfg.frequencies();
    let mut values = Array2::<Complex64>::zeros((arr.m, cfg.k));
    let scale = cfg.pu.sqrt() * cfg.g_tx;
    for mpc in mpcs {
        let spectrum: Vec<Complex64> = freqs.iter().map(|&f| unit_phasor(-f * mpc.tau)).collect();
        let c = Complex64::from_polar(mpc.alpha * scale, mpc.phase);
        for (m, mut row) in values.rows_mut().into_iter().enumerate() {
            let a = c * pat.gain(arr.steering(m) - mpc.phi);
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (v, s) in row.iter_mut().zip(&spectrum) {
                *v += a * s;
            }
        }
    }
    Ok(CfrSet {
        values,
        f0: cfg.f0(),
        df: cfg.freq_step(),
    })
}

/// `Y = S + W` with circular complex Gaussian `W` of variance `sigma2`,
/// drawn from a ChaCha stream seeded with `seed`.
pub fn add_noise(s: &CfrSet, sigma2: f64, seed: u64) -> CfrSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with(s, sigma2, &mut rng)
}

pub fn add_noise_with<R: Rng + ?Sized>(s: &CfrSet, sigma2: f64, rng: &mut R) -> CfrSet {
    assert!(sigma2 >= 0.0, "noise variance must be non-negative");
    let mut out = s.clone();
    if sigma2 == 0.0 {
        return out;
    }
    let sd = (0.5 * sigma2).sqrt();
    for v in out.values.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(sd * re, sd * im);
    }
    out
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Delay-domain responses `h_m(tau_j) = K^{-1/2} sum_k H_m(f_k) exp(j 2 pi f_k tau_j)`
/// on `tau_j = j / (K df)`, absolute frequencies included.
pub fn cfr_to_cir(y: &CfrSet) -> CirSet {
    let k = y.values.ncols();
    let delay_step = 1.0 / (k as f64 * y.df);
    let fft = plan(k, true);
    let norm = 1.0 / (k as f64).sqrt();
    let ramp: Vec<Complex64> = (0..k)
        .map(|j| unit_phasor(y.f0 * j as f64 * delay_step) * norm)
        .collect();
    let mut values = y.values.clone();
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for mut row in values.rows_mut() {
        let buf = row.as_slice_mut().expect("standard layout");
        fft.process_with_scratch(buf, &mut scratch);
        for (v, r) in buf.iter_mut().zip(&ramp) {
            *v *= r;
        }
    }
    CirSet {
        values,
        delay_step,
        f0: y.f0,
    }
}

/// Baseband spectrum `H_m(f_0 + k df)` of one delay-domain row (inverse of
/// [`cfr_to_cir`] up to the absolute-frequency ramp).
pub(crate) fn cir_row_to_baseband(row: ArrayView1<'_, Complex64>, f0: f64, delay_step: f64) -> Vec<Complex64> {
    let k = row.len();
    let fft = plan(k, false);
    let norm = 1.0 / (k as f64).sqrt();
    let mut buf: Vec<Complex64> = row
        .iter()
        .enumerate()
        .map(|(j, v)| v * unit_phasor(-f0 * j as f64 * delay_step) * norm)
        .collect();
    fft.process(&mut buf);
    buf
}

/// `PDP_m(tau_j) = |h_m(tau_j)|^2`.
pub fn pdp(h: &CirSet) -> Array2<f64> {
    h.values.mapv(|v| v.norm_sqr())
}

/// Stack per-direction PDPs (in steering order) into a PADP.
pub fn assemble_padp(rows: &[Vec<f64>], asi: f64, delay_step: f64) -> Result<Padp> {
    let m = rows.len();
    if m == 0 {
        return Err(Error::Shape("no PDP rows".into()));
    }
    let k = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(Error::Shape(format!("row {i} has {} delay bins, expected {k}", r.len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let power = Array2::from_shape_vec((m, k), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(Padp {
        power,
        asi,
        delay_step,
        cir: None,
    })
}

/// Synthesis, optional noise and transform in one step, keeping the complex
/// responses on the returned PADP.
pub fn simulate_padp_with<R: Rng + ?Sized>(
    mpcs: &[MpcTruth],
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    cfg: &SoundingConfig,
    rng: &mut R,
) -> Result<Padp> {
    let s = synth_cfr(mpcs, arr, pat, cfg)?;
    let y = add_noise_with(&s, cfg.sigma2, rng);
    let h = cfr_to_cir(&y);
    Ok(Padp {
        power: pdp(&h),
        asi: arr.asi(),
        delay_step: h.delay_step,
        cir: Some(h),
    })
}

pub fn simulate_padp(
    mpcs: &[MpcTruth],
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    cfg: &SoundingConfig,
    seed: u64,
) -> Result<Padp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_padp_with(mpcs, arr, pat, cfg, &mut rng)
}
