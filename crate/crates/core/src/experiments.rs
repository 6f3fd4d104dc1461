//! Seeded Monte Carlo studies of the estimators against the bounds.
//!
//! Trial `t` of sweep point `i` draws from a ChaCha8 generator seeded with
//! the base seed on stream `(i << 32) | t`, so results do not depend on
//! thread count or scheduling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::antenna::{self, AntennaPattern};
use crate::crlb::{self, MpcBound};
use crate::error::{Error, Result};
use crate::estimation::{self, EstimatorOptions, Method, MpcEstimate};
use crate::synthesis::{simulate_padp_with, ArrayConfig, MpcTruth, SoundingConfig};
use crate::{angle_error, wrap_2pi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    /// Output SNR `G_max gamma_i` in dB, referenced to the first MPC's amplitude.
    OutputSnrDb,
    /// Angle of the second MPC relative to the first, degrees.
    SeparationDeg,
    /// Angle of the first MPC, degrees.
    TrueAngleDeg,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::OutputSnrDb => "snr_db",
            SweepVariable::SeparationDeg => "sep_deg",
            SweepVariable::TrueAngleDeg => "angle_deg",
        }
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snr" | "snr_db" | "output_snr" | "output_snr_db" => Ok(Self::OutputSnrDb),
            "sep" | "sep_deg" | "separation" | "separation_deg" => Ok(Self::SeparationDeg),
            "angle" | "angle_deg" | "phi" | "phi_deg" => Ok(Self::TrueAngleDeg),
            other => Err(Error::Invalid(format!("unknown sweep variable `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn new(variable: SweepVariable, values: Vec<f64>) -> Result<Self> {
        let s = Self { variable, values };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Invalid("sweep grid is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("sweep values must be finite".into()));
        }
        Ok(())
    }

    /// Apply one sweep value to a scenario. Returns the MPCs and noise variance.
    pub fn apply(&self, value: f64, mpcs: &[MpcTruth], cfg: &SoundingConfig, pat: &AntennaPattern) -> Result<(Vec<MpcTruth>, f64)> {
        let mut out = mpcs.to_vec();
        let mut sigma2 = cfg.sigma2;
        match self.variable {
            SweepVariable::OutputSnrDb => {
                let gamma_i = antenna::db_to_linear(value) / pat.g_max();
                sigma2 = cfg.sigma2_for_input_snr(gamma_i, out[0].alpha);
            }
            SweepVariable::SeparationDeg => {
                if out.len() < 2 {
                    return Err(Error::Scenario("a separation sweep needs at least two MPCs".into()));
                }
                out[1].phi = wrap_2pi(out[0].phi + value.to_radians());
            }
            SweepVariable::TrueAngleDeg => out[0].phi = wrap_2pi(value.to_radians()),
        }
        Ok((out, sigma2))
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        write!(f, "{}={}", self.variable.as_str(), v.join(","))
    }
}

/// `var=v1,v2,...` or `var=start:stop:step` (inclusive).
impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (var, rest) = s
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("sweep `{s}` is not of the form var=values")))?;
        let variable: SweepVariable = var.parse()?;
        let bad = |e: std::num::ParseFloatError| Error::Invalid(format!("sweep `{s}`: {e}"));
        let rest = rest.trim();
        let values = if rest.contains(':') {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Invalid(format!("sweep range `{rest}` must be start:stop:step")));
            }
            let start: f64 = parts[0].trim().parse().map_err(bad)?;
            let stop: f64 = parts[1].trim().parse().map_err(bad)?;
            let step: f64 = parts[2].trim().parse().map_err(bad)?;
            if !(step > 0.0) || stop < start {
                return Err(Error::Invalid(format!("sweep range `{rest}` is empty")));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + i as f64 * step).collect()
        } else {
            rest.split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| p.parse::<f64>().map_err(bad))
                .collect::<Result<Vec<f64>>>()?
        };
        Sweep::new(variable, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub trials: usize,
    pub sweep: Sweep,
    pub mpcs: Vec<MpcTruth>,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Rotate the whole scenario by a uniform random angle in each trial.
    pub random_angle: bool,
    /// Shift all delays by a uniform random fraction of a delay bin in each trial.
    pub delay_jitter: bool,
    pub estimator: EstimatorOptions,
}

impl MonteCarloConfig {
    pub fn new(sweep: Sweep, mpcs: Vec<MpcTruth>) -> Self {
        Self {
            trials: 1000,
            sweep,
            mpcs,
            methods: vec![Method::O1, Method::O2, Method::Haed, Method::HaedPlus],
            seed: 0,
            random_angle: false,
            delay_jitter: false,
            estimator: EstimatorOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Invalid("need at least one trial".into()));
        }
        if self.mpcs.is_empty() {
            return Err(Error::Invalid("scenario has no MPCs".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Invalid("no estimators selected".into()));
        }
        self.estimator.peaks.validate()?;
        self.sweep.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorParam {
    /// Angle error, degrees.
    Angle,
    /// Normalized amplitude error `alpha_hat / alpha - 1`.
    Amplitude,
    /// Delay error, ns.
    Delay,
}

impl ErrorParam {
    pub const ALL: [ErrorParam; 3] = [ErrorParam::Angle, ErrorParam::Amplitude, ErrorParam::Delay];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorParam::Angle => "phi",
            ErrorParam::Amplitude => "alpha",
            ErrorParam::Delay => "tau",
        }
    }

    fn bound(self, b: &MpcBound) -> f64 {
        match self {
            ErrorParam::Angle => b.angle.to_degrees().to_degrees(),
            ErrorParam::Amplitude => b.amplitude,
            ErrorParam::Delay => b.delay * 1e18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub rmsee: f64,
    pub mean: f64,
    pub mae: f64,
    /// Standard error of the mean error.
    pub mean_stderr: f64,
    /// Standard error of the RMSEE (delta method).
    pub rmsee_stderr: f64,
    /// Sorted signed errors.
    pub cdf: Vec<f64>,
    pub misses: usize,
    pub false_alarms: usize,
}

impl ErrorStats {
    pub fn from_samples(samples: &[f64], misses: usize, false_alarms: usize) -> Self {
        let n = samples.len();
        let mut cdf = samples.to_vec();
        cdf.sort_by(f64::total_cmp);
        if n == 0 {
            return Self {
                n,
                rmsee: f64::NAN,
                mean: f64::NAN,
                mae: f64::NAN,
                mean_stderr: f64::NAN,
                rmsee_stderr: f64::NAN,
                cdf,
                misses,
                false_alarms,
            };
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let mse = samples.iter().map(|e| e * e).sum::<f64>() / nf;
        let mae = samples.iter().map(|e| e.abs()).sum::<f64>() / nf;
        let (mean_stderr, rmsee_stderr) = if n > 1 {
            let var = samples.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            let var_sq = samples.iter().map(|e| (e * e - mse).powi(2)).sum::<f64>() / (nf - 1.0);
            let rmsee = mse.sqrt();
            let rse = if rmsee > 0.0 { (var_sq / nf).sqrt() / (2.0 * rmsee) } else { 0.0 };
            ((var / nf).sqrt(), rse)
        } else {
            (f64::NAN, f64::NAN)
        };
        Self {
            n,
            rmsee: mse.sqrt(),
            mean,
            mae,
            mean_stderr,
            rmsee_stderr,
            cdf,
            misses,
            false_alarms,
        }
    }

    /// Empirical CDF at `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if self.cdf.is_empty() {
            return f64::NAN;
        }
        self.cdf.partition_point(|&v| v <= x) as f64 / self.cdf.len() as f64
    }
}

pub fn rmsee(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Invalid("rmsee of an empty sample".into()));
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Greedy nearest-neighbour association of estimates to truths with cost
/// `(d_tau / delay_step)^2 + (d_phi / angle_gate)^2`, gated at one delay bin
/// and `angle_gate`. Returns `assignment[truth] = Some(estimate index)`.
pub fn associate(
    truths: &[MpcTruth],
    estimates: &[MpcEstimate],
    delay_step: f64,
    angle_gate: f64,
) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (t, truth) in truths.iter().enumerate() {
        for (e, est) in estimates.iter().enumerate() {
            let dt = (est.tau_hat - truth.tau) / delay_step;
            let dp = angle_error(est.phi_hat, truth.phi) / angle_gate;
            if dt.abs() <= 1.0 + 1e-9 && dp.abs() <= 1.0 {
                pairs.push((dt * dt + dp * dp, t, e));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; truths.len()];
    let mut used = vec![false; estimates.len()];
    for (_, t, e) in pairs {
        if out[t].is_none() && !used[e] {
            out[t] = Some(e);
            used[e] = true;
        }
    }
    out
}

/// Errors of one estimate against its truth: angle (deg), normalized amplitude, delay (ns).
pub fn estimate_errors(est: &MpcEstimate, truth: &MpcTruth, cfg: &SoundingConfig) -> [f64; 3] {
    let ref_power = cfg.k as f64 * cfg.pu * cfg.g_tx * cfg.g_tx;
    let alpha_hat = (est.p_hat.max(0.0) / ref_power).sqrt();
    [
        angle_error(est.phi_hat, truth.phi).to_degrees(),
        alpha_hat / truth.alpha - 1.0,
        (est.tau_hat - truth.tau) * 1e9,
    ]
}

#[derive(Debug, Clone)]
struct TrialOutcome {
    /// `[method][mpc] -> errors`
    errors: Vec<Vec<Option<[f64; 3]>>>,
    false_alarms: Vec<usize>,
    bounds: Vec<Option<MpcBound>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatEntry {
    pub method: Method,
    pub param: ErrorParam,
    pub mpc: usize,
    pub stats: ErrorStats,
    /// `sqrt` of the trial-averaged CRLB in the parameter's unit; NaN when unavailable.
    pub sqrt_crlb: f64,
    /// Trials in which fewer estimates than MPCs were matched.
    pub underresolved_trials: usize,
}

impl StatEntry {
    /// Parameter label, suffixed with the MPC number when the scenario has several.
    pub fn label(&self, n_mpcs: usize) -> String {
        if n_mpcs > 1 {
            format!("{}_{}", self.param.as_str(), self.mpc + 1)
        } else {
            self.param.as_str().to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub entries: Vec<StatEntry>,
    /// Trials where the bound could not be computed (singular FIM or no noise).
    pub crlb_unavailable: usize,
}

impl SweepPoint {
    pub fn get(&self, method: Method, param: ErrorParam, mpc: usize) -> Option<&StatEntry> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.param == param && e.mpc == mpc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub n_mpcs: usize,
    pub points: Vec<SweepPoint>,
}

fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    mc: &MonteCarloConfig,
    base: &[MpcTruth],
    sigma2: f64,
    point: usize,
    trial: usize,
    sounding: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
) -> TrialOutcome {
    let mut rng = trial_rng(mc.seed, point, trial);
    let rot = if mc.random_angle { rng.random::<f64>() * std::f64::consts::TAU } else { 0.0 };
    let jitter = if mc.delay_jitter { rng.random::<f64>() * sounding.delay_step() } else { 0.0 };
    let truths: Vec<MpcTruth> = base
        .iter()
        .map(|m| MpcTruth::new(m.alpha, m.phase, m.tau + jitter, m.phi + rot))
        .collect();
    let cfg = SoundingConfig { sigma2, ..*sounding };
    let n_methods = mc.methods.len();
    let bounds: Vec<Option<MpcBound>> = if sigma2 > 0.0 {
        match crlb::crlb(&truths, arr, pat, &cfg) {
            Ok(r) => (0..truths.len()).map(|l| Some(r.mpc(l))).collect(),
            Err(_) => vec![None; truths.len()],
        }
    } else {
        vec![None; truths.len()]
    };
    let padp = match simulate_padp_with(&truths, arr, pat, &cfg, &mut rng) {
        Ok(p) => p,
        Err(_) => {
            return TrialOutcome {
                errors: vec![vec![None; truths.len()]; n_methods],
                false_alarms: vec![0; n_methods],
                bounds,
            }
        }
    };
    let gate = pat.hpbw().max(arr.asi());
    let results = estimation::estimate_all(&padp, pat, &mc.methods, &mc.estimator);
    let mut errors = Vec::with_capacity(n_methods);
    let mut false_alarms = Vec::with_capacity(n_methods);
    for (_, est) in &results {
        let assign = associate(&truths, est, padp.delay_step, gate);
        let matched = assign.iter().flatten().count();
        false_alarms.push(est.len() - matched);
        errors.push(
            assign
                .iter()
                .zip(&truths)
                .map(|(a, t)| a.map(|e| estimate_errors(&est[e], t, &cfg)))
                .collect(),
        );
    }
    TrialOutcome {
        errors,
        false_alarms,
        bounds,
    }
}

pub fn run_sweep(
    mc: &MonteCarloConfig,
    sounding: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
) -> Result<SweepResult> {
    run_sweep_with_progress(mc, sounding, arr, pat, |_, _| {})
}

/// As [`run_sweep`], calling `progress(done, total)` after each sweep point.
pub fn run_sweep_with_progress(
    mc: &MonteCarloConfig,
    sounding: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    progress: impl Fn(usize, usize),
) -> Result<SweepResult> {
    mc.validate()?;
    sounding.validate()?;
    arr.validate()?;
    let n_mpcs = mc.mpcs.len();
    let total = mc.sweep.values.len();
    let mut points = Vec::with_capacity(total);
    for (i, &value) in mc.sweep.values.iter().enumerate() {
        let (base, sigma2) = mc.sweep.apply(value, &mc.mpcs, sounding, pat)?;
        let outcomes: Vec<TrialOutcome> = (0..mc.trials)
            .into_par_iter()
            .map(|t| run_trial(mc, &base, sigma2, i, t, sounding, arr, pat))
            .collect();
        points.push(reduce_point(mc, value, &outcomes, n_mpcs));
        progress(i + 1, total);
    }
    Ok(SweepResult {
        variable: mc.sweep.variable,
        n_mpcs,
        points,
    })
}

fn reduce_point(mc: &MonteCarloConfig, value: f64, outcomes: &[TrialOutcome], n_mpcs: usize) -> SweepPoint {
    let crlb_unavailable = outcomes.iter().filter(|o| o.bounds.iter().any(Option::is_none)).count();
    let mut entries = Vec::new();
    for (mi, &method) in mc.methods.iter().enumerate() {
        let false_alarms: usize = outcomes.iter().map(|o| o.false_alarms[mi]).sum();
        let underresolved = outcomes
            .iter()
            .filter(|o| o.errors[mi].iter().flatten().count() < n_mpcs)
            .count();
        for l in 0..n_mpcs {
            for (pi, &param) in ErrorParam::ALL.iter().enumerate() {
                let samples: Vec<f64> = outcomes.iter().filter_map(|o| o.errors[mi][l].map(|e| e[pi])).collect();
                let misses = outcomes.len() - samples.len();
                let bounds: Vec<f64> = outcomes.iter().filter_map(|o| o.bounds[l].map(|b| param.bound(&b))).collect();
                let sqrt_crlb = if bounds.is_empty() {
                    f64::NAN
                } else {
                    (bounds.iter().sum::<f64>() / bounds.len() as f64).sqrt()
                };
                entries.push(StatEntry {
                    method,
                    param,
                    mpc: l,
                    stats: ErrorStats::from_samples(&samples, misses, false_alarms),
                    sqrt_crlb,
                    underresolved_trials: underresolved,
                });
            }
        }
    }
    SweepPoint {
        value,
        trials: outcomes.len(),
        entries,
        crlb_unavailable,
    }
}

/// One row of a CRLB sweep: the bound of one MPC, or `None` when the FIM is singular.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub mpc: usize,
    pub bound: Option<MpcBound>,
    pub condition: f64,
}

/// Bounds of every MPC at every sweep value.
pub fn crlb_sweep(
    sweep: &Sweep,
    mpcs: &[MpcTruth],
    sounding: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
) -> Result<Vec<CrlbRow>> {
    sweep.validate()?;
    if mpcs.is_empty() {
        return Err(Error::Invalid("scenario has no MPCs".into()));
    }
    let rows: Vec<Result<Vec<CrlbRow>>> = sweep
        .values
        .par_iter()
        .map(|&value| {
            let (truths, sigma2) = sweep.apply(value, mpcs, sounding, pat)?;
            let cfg = SoundingConfig { sigma2, ..*sounding };
            let f = crlb::fim(&truths, arr, pat, &cfg)?;
            let condition = crlb::condition_number(&f);
            let report = crlb::crlb_from_fim(&f).ok();
            Ok((0..truths.len())
                .map(|l| CrlbRow {
                    variable: sweep.variable,
                    value,
                    mpc: l,
                    bound: report.as_ref().map(|r| r.mpc(l)),
                    condition,
                })
                .collect())
        })
        .collect();
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// Angle (deg) and power (dB) error statistics of one method in the offset study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub method: Method,
    pub angle_deg: ErrorStats,
    pub power_db: ErrorStats,
}

/// Noise-free single-MPC study with angles uniform over the circle and the
/// delay on the grid. Each MPC is simulated on its own.
pub fn uniform_offset_study(
    n_mpcs: usize,
    seed: u64,
    methods: &[Method],
    sounding: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    opts: &EstimatorOptions,
) -> Result<Vec<OffsetStats>> {
    if n_mpcs < 1000 {
        return Err(Error::Invalid(format!("offset study needs at least 1000 MPCs, got {n_mpcs}")));
    }
    if methods.is_empty() {
        return Err(Error::Invalid("no estimators selected".into()));
    }
    let cfg = SoundingConfig { sigma2: 0.0, ..*sounding };
    cfg.validate()?;
    arr.validate()?;
    let bin = cfg.k / 4;
    let tau = bin as f64 * cfg.delay_step();
    let ref_power = cfg.k as f64 * cfg.pu * cfg.g_tx * cfg.g_tx;
    let gate = pat.hpbw().max(arr.asi());
    let per_mpc: Vec<Result<Vec<Option<(f64, f64)>>>> = (0..n_mpcs)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, 0, i);
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let truth = MpcTruth::new(1.0, rng.random::<f64>() * std::f64::consts::TAU, tau, phi);
            let padp = simulate_padp_with(&[truth], arr, pat, &cfg, &mut rng)?;
            Ok(estimation::estimate_all(&padp, pat, methods, opts)
                .into_iter()
                .map(|(_, est)| {
                    associate(&[truth], &est, padp.delay_step, gate)[0].map(|e| {
                        let e = &est[e];
                        (
                            angle_error(e.phi_hat, truth.phi).to_degrees(),
                            antenna::linear_to_db(e.p_hat / ref_power),
                        )
                    })
                })
                .collect())
        })
        .collect();
    let per_mpc: Vec<Vec<Option<(f64, f64)>>> = per_mpc.into_iter().collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let hits: Vec<(f64, f64)> = per_mpc.iter().filter_map(|r| r[mi]).collect();
            let misses = n_mpcs - hits.len();
            let a: Vec<f64> = hits.iter().map(|h| h.0).collect();
            let p: Vec<f64> = hits.iter().map(|h| h.1).collect();
            OffsetStats {
                method,
                angle_deg: ErrorStats::from_samples(&a, misses, 0),
                power_db: ErrorStats::from_samples(&p, misses, 0),
            }
        })
        .collect())
}
