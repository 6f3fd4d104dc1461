//! MPC estimators operating on a PADP.
//!
//! All methods report power de-embedded from the receive antenna, in the
//! same units as the PADP (so a noise-free single MPC on the delay grid
//! reports `K alpha^2 Pu g_tx^2`).

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::antenna::{
    self, AntennaPattern, Side, DEFAULT_INVERSION_STEP,
};
use crate::error::{Error, Result};
use crate::synthesis::{cir_row_to_baseband, Padp};
use crate::wrap_2pi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    O1,
    O2,
    Haed,
    HaedPlus,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::O1, Method::O2, Method::Haed, Method::HaedPlus];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::O1 => "o1",
            Method::O2 => "o2",
            Method::Haed => "haed",
            Method::HaedPlus => "haed+",
        }
    }

    /// Parse a comma-separated method list such as `o1,o2,haed`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::Invalid("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "o1" | "o-1" => Ok(Method::O1),
            "o2" | "o-2" => Ok(Method::O2),
            "haed" => Ok(Method::Haed),
            "haed+" | "haedplus" | "haed-plus" => Ok(Method::HaedPlus),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

/// Fine-stage details kept alongside HAED estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaedAux {
    pub chi_hat: f64,
    pub eps_hat: f64,
    pub side: Side,
    /// Chi or the arcsin argument had to be clamped.
    pub clamped: bool,
    /// Both adjacent powers were exactly equal; `Side::Minus` was used.
    pub tie: bool,
    /// Corrected peak before dividing out `g^2(0)`: `P g^2(0) / g^2(eps)`.
    pub raw_power: f64,
    /// Scan direction and delay bin of the coarse peak.
    pub row: usize,
    pub bin: usize,
    /// HAED+ had no complex responses and used the two-bin sinc fit.
    pub sinc_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcEstimate {
    /// Delay, s.
    pub tau_hat: f64,
    /// Angle of arrival, rad in [0, 2 pi).
    pub phi_hat: f64,
    /// De-embedded linear power.
    pub p_hat: f64,
    pub method: Method,
    pub aux: Option<HaedAux>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Detection threshold, dB above the expected largest noise cell
    /// (see [`noise_peak_level`]).
    pub noise_floor_db_offset: f64,
    /// Keep at most this many (strongest) peaks.
    pub max_peaks: Option<usize>,
    /// Ignore anything this far below the strongest PADP entry, dB. Keeps
    /// floating-point residue out of noise-free runs.
    pub dynamic_range_db: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            noise_floor_db_offset: 6.0,
            max_peaks: None,
            dynamic_range_db: 120.0,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_floor_db_offset > 0.0) {
            return Err(Error::Invalid("noise floor offset must be positive".into()));
        }
        if !(self.dynamic_range_db > 0.0) {
            return Err(Error::Invalid("dynamic range must be positive".into()));
        }
        Ok(())
    }
}

/// How o-2 divides the antenna out of the summed profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum O2Normalization {
    /// Ring power sum averaged over all MPC angles (unbiased on average).
    #[default]
    RingAverage,
    /// Peak power gain `g^2(0)`, as for o-1.
    PeakGain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub peaks: PeakConfig,
    /// Use the closed-form chi inversion when the pattern allows it.
    pub use_closed_form: bool,
    /// HAED+ delay upsampling factor.
    pub upsample: usize,
    pub o2_normalization: O2Normalization,
    /// Grid step for the table-driven chi inversion, rad.
    pub inversion_step: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            peaks: PeakConfig::default(),
            use_closed_form: true,
            upsample: 16,
            o2_normalization: O2Normalization::RingAverage,
            inversion_step: DEFAULT_INVERSION_STEP,
        }
    }
}

/// Noise power per PADP cell: median over all cells divided by `ln 2`
/// (median of an exponential variable).
pub fn noise_floor(padp: &Padp) -> f64 {
    let mut v: Vec<f64> = padp.power.iter().copied().collect();
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, median, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *median / std::f64::consts::LN_2
}

/// Level the largest of the `M K` noise cells reaches on average:
/// mean cell noise times `ln(M K)`.
pub fn noise_peak_level(padp: &Padp) -> f64 {
    noise_floor(padp) * (padp.power.len().max(2) as f64).ln()
}

/// Detection threshold for a profile whose noise is a sum of `noise_terms`
/// PADP cells.
fn threshold(padp: &Padp, pk: &PeakConfig, noise_terms: f64, profile_max: f64) -> f64 {
    let floor = noise_peak_level(padp) * noise_terms * antenna::db_to_linear(pk.noise_floor_db_offset);
    let range = profile_max * antenna::db_to_linear(-pk.dynamic_range_db);
    floor.max(range)
}

/// `PDP_o1(tau_j) = max_m A(m, j)`.
pub fn synth_omni_max(padp: &Padp) -> Array1<f64> {
    padp.power
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// `PDP_o2(tau_j) = sum_m A(m, j)`.
pub fn synth_omni_sum(padp: &Padp) -> Array1<f64> {
    padp.power.sum_axis(ndarray::Axis(0))
}

/// Local maxima of a 1-D profile above `thr`. A flat-topped peak is
/// reported at its first bin; end bins compare against their single neighbour.
pub fn peaks_1d(profile: &[f64], thr: f64) -> Vec<usize> {
    let n = profile.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let v = profile[i];
        let mut end = i;
        while end + 1 < n && profile[end + 1] == v {
            end += 1;
        }
        let left_ok = i == 0 || profile[i - 1] < v;
        let right_ok = end + 1 == n || profile[end + 1] < v;
        if left_ok && right_ok && v > thr {
            out.push(i);
        }
        i = end + 1;
    }
    out
}

fn argmax_row(padp: &Padp, j: usize) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for m in 0..padp.m() {
        let v = padp.power[[m, j]];
        if v > best_v {
            best_v = v;
            best = m;
        }
    }
    best
}

fn cap_peaks<T>(mut items: Vec<T>, max: Option<usize>, power: impl Fn(&T) -> f64) -> Vec<T> {
    if let Some(n) = max {
        if items.len() > n {
            let mut idx: Vec<usize> = (0..items.len()).collect();
            idx.sort_by(|&a, &b| power(&items[b]).total_cmp(&power(&items[a])).then(a.cmp(&b)));
            let mut keep = vec![false; items.len()];
            for &i in idx.iter().take(n) {
                keep[i] = true;
            }
            let mut k = keep.into_iter();
            items.retain(|_| k.next().unwrap());
        }
    }
    items
}

fn sort_estimates(v: &mut [MpcEstimate]) {
    v.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.tau_hat.total_cmp(&b.tau_hat))
            .then(a.phi_hat.total_cmp(&b.phi_hat))
    });
}

fn omni_estimates(
    padp: &Padp,
    profile: &Array1<f64>,
    noise_terms: f64,
    pk: &PeakConfig,
    deembed: f64,
    method: Method,
) -> Vec<MpcEstimate> {
    let prof = profile.as_slice().expect("contiguous");
    let max = prof.iter().copied().fold(0.0, f64::max);
    let thr = threshold(padp, pk, noise_terms, max);
    let bins = cap_peaks(peaks_1d(prof, thr), pk.max_peaks, |&j| prof[j]);
    let mut out: Vec<MpcEstimate> = bins
        .into_iter()
        .map(|j| MpcEstimate {
            tau_hat: padp.delay(j),
            phi_hat: padp.angle(argmax_row(padp, j)),
            p_hat: prof[j] / deembed,
            method,
            aux: None,
        })
        .collect();
    sort_estimates(&mut out);
    out
}

/// Max-synthesis estimator: peaks of `PDP_o1`, angle of the strongest
/// direction in that bin, power divided by `g^2(0)`.
pub fn estimate_o1(padp: &Padp, pat: &AntennaPattern, pk: &PeakConfig) -> Vec<MpcEstimate> {
    omni_estimates(padp, &synth_omni_max(padp), 1.0, pk, pat.peak_power(), Method::O1)
}

/// Sum-synthesis estimator with the ring-average de-embedding constant.
pub fn estimate_o2(padp: &Padp, pat: &AntennaPattern, pk: &PeakConfig) -> Vec<MpcEstimate> {
    estimate_o2_with(padp, pat, pk, O2Normalization::RingAverage)
}

pub fn estimate_o2_with(
    padp: &Padp,
    pat: &AntennaPattern,
    pk: &PeakConfig,
    norm: O2Normalization,
) -> Vec<MpcEstimate> {
    let c = o2_constant(pat, padp.m(), norm);
    omni_estimates(padp, &synth_omni_sum(padp), padp.m() as f64, pk, c, Method::O2)
}

/// De-embedding constant of the sum-synthesis estimator.
pub fn o2_constant(pat: &AntennaPattern, m: usize, norm: O2Normalization) -> f64 {
    match norm {
        O2Normalization::RingAverage => pat.mean_ring_power(m),
        O2Normalization::PeakGain => pat.peak_power(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarsePeak {
    pub row: usize,
    pub bin: usize,
    pub power: f64,
}

/// Local maxima over the 2-D PADP. Neighbours are the surrounding 3x3
/// cells, circular in angle and clipped in delay. On exact ties the
/// lexicographically smallest `(row, bin)` wins.
pub fn coarse_peaks_2d(padp: &Padp, pk: &PeakConfig) -> Vec<CoarsePeak> {
    let (m, k) = padp.power.dim();
    let a = &padp.power;
    let max = a.iter().copied().fold(0.0, f64::max);
    let thr = threshold(padp, pk, 1.0, max);
    let mut out = Vec::new();
    for r in 0..m {
        let rows = [(r + m - 1) % m, r, (r + 1) % m];
        for j in 0..k {
            let v = a[[r, j]];
            if !(v > thr) {
                continue;
            }
            let mut is_peak = true;
            'nb: for &rr in &rows {
                for jj in j.saturating_sub(1)..=(j + 1).min(k - 1) {
                    if rr == r && jj == j {
                        continue;
                    }
                    let w = a[[rr, jj]];
                    if w > v || (w == v && (rr, jj) < (r, j)) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                out.push(CoarsePeak { row: r, bin: j, power: v });
            }
        }
    }
    cap_peaks(out, pk.max_peaks, |p| p.power)
}

/// Fine stage: correct each coarse peak's angle and power from the
/// normalized power difference against the stronger adjacent direction.
pub fn haed_refine(
    padp: &Padp,
    coarse: &[CoarsePeak],
    pat: &AntennaPattern,
    use_closed_form: bool,
) -> Vec<MpcEstimate> {
    haed_refine_with(padp, coarse, pat, use_closed_form, DEFAULT_INVERSION_STEP)
}

pub fn haed_refine_with(
    padp: &Padp,
    coarse: &[CoarsePeak],
    pat: &AntennaPattern,
    use_closed_form: bool,
    inversion_step: f64,
) -> Vec<MpcEstimate> {
    let spacing = padp.asi;
    let g0 = pat.peak_power();
    let mut out: Vec<MpcEstimate> = coarse
        .iter()
        .map(|c| {
            let p1 = padp.power[[c.row, c.bin]];
            let p_minus = padp.power[[padp.prev_row(c.row), c.bin]];
            let p_plus = padp.power[[padp.next_row(c.row), c.bin]];
            let tie = p_minus == p_plus;
            let (side, p_adj) = if p_minus >= p_plus {
                (Side::Minus, p_minus)
            } else {
                (Side::Plus, p_plus)
            };
            let p_adj = p_adj.max(f64::MIN_POSITIVE);
            let chi_hat = (p1 - p_adj) / (p1 + p_adj);
            let (eps, clamped) = match (use_closed_form, pat.kappa()) {
                (true, Some(kappa)) => antenna::invert_chi_closed_clamped(chi_hat, side, spacing, kappa),
                _ => {
                    let (c, clamped) = antenna::clamp_chi(chi_hat);
                    let e = antenna::invert_chi_tabulated_with_spacing(c, side, pat, spacing, inversion_step);
                    (e, clamped)
                }
            };
            let raw_power = p1 * g0 / pat.power(eps);
            MpcEstimate {
                tau_hat: padp.delay(c.bin),
                phi_hat: wrap_2pi(padp.angle(c.row) + eps),
                p_hat: raw_power / g0,
                method: Method::Haed,
                aux: Some(HaedAux {
                    chi_hat,
                    eps_hat: eps,
                    side,
                    clamped,
                    tie,
                    raw_power,
                    row: c.row,
                    bin: c.bin,
                    sinc_fallback: false,
                }),
            }
        })
        .collect();
    sort_estimates(&mut out);
    out
}

/// Full HAED: 2-D coarse search followed by the fine stage.
pub fn haed(padp: &Padp, pat: &AntennaPattern, opts: &EstimatorOptions) -> Vec<MpcEstimate> {
    let coarse = coarse_peaks_2d(padp, &opts.peaks);
    haed_refine_with(padp, &coarse, pat, opts.use_closed_form, opts.inversion_step)
}

/// `|sum_k H_k exp(j 2 pi k t / K)|^2 / K` at fractional delay bin `t`.
fn interpolated_power(spectrum: &[Complex64], t: f64) -> f64 {
    let k = spectrum.len() as f64;
    let step = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * t / k);
    let mut rot = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, h) in spectrum.iter().enumerate() {
        if i % 64 == 0 {
            // re-anchor the recurrence to keep rounding from building up
            rot = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * t * i as f64 / k);
        }
        acc += h * rot;
        rot *= step;
    }
    acc.norm_sqr() / k
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Peak position (fractional bin) and power of a band-limited row around `bin`.
fn band_limited_peak(spectrum: &[Complex64], bin: usize, upsample: usize) -> (f64, f64) {
    let u = upsample as f64;
    let centre = bin as f64;
    let mut best_t = centre;
    let mut best_p = f64::NEG_INFINITY;
    for i in 0..=(2 * upsample) {
        let t = centre - 1.0 + i as f64 / u;
        let p = interpolated_power(spectrum, t);
        if p > best_p {
            best_p = p;
            best_t = t;
        }
    }
    let t = golden_max(|t| interpolated_power(spectrum, t), best_t - 1.0 / u, best_t + 1.0 / u, 1e-7);
    let p = interpolated_power(spectrum, t);
    if p >= best_p {
        (t, p)
    } else {
        (best_t, best_p)
    }
}

/// Two-bin fit of a sinc main lobe on power-only data: with amplitudes `a0`
/// at the peak bin and `a1` at its larger neighbour, the fractional offset
/// is `a1 / (a0 + a1)` and the peak amplitude `a0 pi d / sin(pi d)`.
fn sinc_two_bin(row: &[f64], bin: usize) -> (f64, f64) {
    let a0 = row[bin].max(0.0).sqrt();
    let left = if bin > 0 { row[bin - 1].max(0.0).sqrt() } else { 0.0 };
    let right = if bin + 1 < row.len() { row[bin + 1].max(0.0).sqrt() } else { 0.0 };
    let (a1, dir) = if right >= left { (right, 1.0) } else { (left, -1.0) };
    if a0 + a1 == 0.0 {
        return (bin as f64, 0.0);
    }
    let d = a1 / (a0 + a1);
    let x = std::f64::consts::PI * d;
    let amp = if d > 0.0 { a0 * x / x.sin() } else { a0 };
    (bin as f64 + dir * d, amp * amp)
}

/// HAED+: re-read each HAED estimate's delay and power from a band-limited
/// interpolation of its aligned direction's delay response. The angle is
/// kept. Without complex responses on the PADP, a two-bin sinc fit on the
/// powers is used instead.
pub fn haed_plus_refine(
    padp: &Padp,
    estimates: &[MpcEstimate],
    pat: &AntennaPattern,
    upsample: usize,
) -> Vec<MpcEstimate> {
    let upsample = upsample.max(2);
    let g0 = pat.peak_power();
    let mut spectra: std::collections::HashMap<usize, Vec<Complex64>> = Default::default();
    let mut out: Vec<MpcEstimate> = estimates
        .iter()
        .map(|e| {
            let Some(aux) = e.aux else {
                return MpcEstimate { method: Method::HaedPlus, ..*e };
            };
            let (t, p, fallback) = match &padp.cir {
                Some(cir) => {
                    let spec = spectra
                        .entry(aux.row)
                        .or_insert_with(|| cir_row_to_baseband(cir.values.row(aux.row), cir.f0, cir.delay_step));
                    let (t, p) = band_limited_peak(spec, aux.bin, upsample);
                    (t, p, false)
                }
                None => {
                    let row = padp.power.row(aux.row).to_vec();
                    let (t, p) = sinc_two_bin(&row, aux.bin);
                    (t, p, true)
                }
            };
            let raw_power = p * g0 / pat.power(aux.eps_hat);
            let span = (padp.k() - 1) as f64;
            MpcEstimate {
                tau_hat: t.clamp(0.0, span) * padp.delay_step,
                phi_hat: e.phi_hat,
                p_hat: raw_power / g0,
                method: Method::HaedPlus,
                aux: Some(HaedAux {
                    raw_power,
                    sinc_fallback: fallback,
                    ..aux
                }),
            }
        })
        .collect();
    sort_estimates(&mut out);
    out
}

/// Run one estimator end to end.
pub fn estimate(
    padp: &Padp,
    pat: &AntennaPattern,
    method: Method,
    opts: &EstimatorOptions,
) -> Vec<MpcEstimate> {
    match method {
        Method::O1 => estimate_o1(padp, pat, &opts.peaks),
        Method::O2 => estimate_o2_with(padp, pat, &opts.peaks, opts.o2_normalization),
        Method::Haed => haed(padp, pat, opts),
        Method::HaedPlus => haed_plus_refine(padp, &haed(padp, pat, opts), pat, opts.upsample),
    }
}

/// Run several estimators; HAED+ reuses the HAED result when both are requested.
pub fn estimate_all(
    padp: &Padp,
    pat: &AntennaPattern,
    methods: &[Method],
    opts: &EstimatorOptions,
) -> Vec<(Method, Vec<MpcEstimate>)> {
    let mut haed_cache: Option<Vec<MpcEstimate>> = None;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let est = match m {
            Method::Haed | Method::HaedPlus => {
                let base = haed_cache.get_or_insert_with(|| haed(padp, pat, opts)).clone();
                if m == Method::Haed {
                    base
                } else {
                    haed_plus_refine(padp, &base, pat, opts.upsample)
                }
            }
            _ => estimate(padp, pat, m, opts),
        };
        out.push((m, est));
    }
    out
}
