//! Scenario files, the PADP exchange format, run manifests and CSV output.
//!
//! PADP files start with one text line,
//!
//! ```text
//! PADP v1 m=36 k=1001 asi_deg=10 delay_step_ns=0.5 scale=linear
//! ```
//!
//! optionally followed by more `key=value` pairs, then `m * k` row-major
//! little-endian `f64` values. `scale=db` stores `10 log10` of the power.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::antenna::{self, AntennaPattern};
use crate::crlb::Param;
use crate::error::{Error, Result};
use crate::estimation::{EstimatorOptions, Method, MpcEstimate, PeakConfig};
use crate::experiments::{CrlbRow, MonteCarloConfig, OffsetStats, Sweep, SweepResult};
use crate::synthesis::{ArrayConfig, MpcTruth, Padp, SoundingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundingSection {
    pub fc_hz: f64,
    pub bw_hz: f64,
    pub k: usize,
    #[serde(default = "one")]
    pub pu: f64,
    /// Noise variance; exclusive with `input_snr_db`.
    #[serde(default)]
    pub sigma2: Option<f64>,
    /// Input SNR of the first MPC, dB.
    #[serde(default)]
    pub input_snr_db: Option<f64>,
    #[serde(default = "one")]
    pub g_tx: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSection {
    /// `gaussian` or `table`.
    pub kind: String,
    #[serde(default)]
    pub g_max_db: Option<f64>,
    #[serde(default)]
    pub hpbw_deg: Option<f64>,
    /// CSV with `offset_deg,gain` columns, relative to the scenario file.
    #[serde(default)]
    pub table_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub alpha: f64,
    #[serde(default)]
    pub phase_deg: f64,
    pub tau_ns: f64,
    pub phi_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: Option<usize>,
    /// Sweep in `var=values` form, see [`Sweep`].
    pub sweep: Option<String>,
    pub methods: Option<String>,
    pub seed: Option<u64>,
    pub random_angle: Option<bool>,
    pub delay_jitter: Option<bool>,
    pub upsample: Option<usize>,
    pub threshold_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub sounding: SoundingSection,
    pub array: ArraySection,
    pub pattern: PatternSection,
    #[serde(default)]
    pub mpc: Vec<MpcSection>,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
}

/// A validated scenario in internal (SI, radian) units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub sounding: SoundingConfig,
    pub array: ArrayConfig,
    pub pattern: AntennaPattern,
    pub mpcs: Vec<MpcTruth>,
    pub experiment: ExperimentSection,
    pub source_sha256: String,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Scenario(format!("field `{field}`: {msg}"))
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    /// Validate and convert units. Relative table paths resolve against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Scenario> {
        let s = &self.sounding;
        if s.sigma2.is_some() && s.input_snr_db.is_some() {
            return Err(field_err("sounding.sigma2", "give either sigma2 or input_snr_db, not both"));
        }
        let mut sounding = SoundingConfig {
            fc: s.fc_hz,
            bw: s.bw_hz,
            k: s.k,
            pu: s.pu,
            sigma2: s.sigma2.unwrap_or(0.0),
            g_tx: s.g_tx,
        };
        sounding.validate().map_err(|e| field_err("sounding", e))?;
        let array = ArrayConfig::new(self.array.m).map_err(|e| field_err("array.m", e))?;
        let pattern = self.pattern_resolved(base_dir)?;
        let mut mpcs = Vec::with_capacity(self.mpc.len());
        for (i, m) in self.mpc.iter().enumerate() {
            if !(m.alpha > 0.0 && m.alpha.is_finite()) {
                return Err(field_err(&format!("mpc[{i}].alpha"), "must be positive"));
            }
            if !(m.tau_ns >= 0.0 && m.tau_ns.is_finite()) {
                return Err(field_err(&format!("mpc[{i}].tau_ns"), "must be non-negative"));
            }
            if !m.phi_deg.is_finite() || !m.phase_deg.is_finite() {
                return Err(field_err(&format!("mpc[{i}]"), "angles must be finite"));
            }
            mpcs.push(MpcTruth::new(m.alpha, m.phase_deg.to_radians(), m.tau_ns * 1e-9, m.phi_deg.to_radians()));
        }
        if let Some(db) = s.input_snr_db {
            let alpha = mpcs.first().map(|m| m.alpha).unwrap_or(1.0);
            sounding.sigma2 = sounding.sigma2_for_input_snr(antenna::db_to_linear(db), alpha);
        }
        let experiment = self.experiment.clone().unwrap_or_default();
        if let Some(sw) = &experiment.sweep {
            sw.parse::<Sweep>().map_err(|e| field_err("experiment.sweep", e))?;
        }
        if let Some(m) = &experiment.methods {
            Method::parse_list(m).map_err(|e| field_err("experiment.methods", e))?;
        }
        if experiment.trials == Some(0) {
            return Err(field_err("experiment.trials", "must be at least 1"));
        }
        Ok(Scenario {
            sounding,
            array,
            pattern,
            mpcs,
            experiment,
            source_sha256: String::new(),
        })
    }

    fn pattern_resolved(&self, base_dir: &Path) -> Result<AntennaPattern> {
        let p = &self.pattern;
        match p.kind.to_ascii_lowercase().as_str() {
            "gaussian" | "gaussian_beam" => {
                let g = p.g_max_db.ok_or_else(|| field_err("pattern.g_max_db", "required for a gaussian pattern"))?;
                let h = p.hpbw_deg.ok_or_else(|| field_err("pattern.hpbw_deg", "required for a gaussian pattern"))?;
                if p.table_path.is_some() {
                    return Err(field_err("pattern.table_path", "only valid for kind = \"table\""));
                }
                AntennaPattern::gaussian_db(g, h).map_err(|e| field_err("pattern", e))
            }
            "table" | "tabulated" => {
                let rel = p.table_path.as_ref().ok_or_else(|| field_err("pattern.table_path", "required for a table pattern"))?;
                let path = if rel.is_absolute() { rel.clone() } else { base_dir.join(rel) };
                if !path.exists() {
                    return Err(field_err("pattern.table_path", format!("{} does not exist", path.display())));
                }
                AntennaPattern::load_csv(&path).map_err(|e| field_err("pattern.table_path", e))
            }
            other => Err(field_err("pattern.kind", format!("unknown pattern kind `{other}`"))),
        }
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Scenario("scenario is not UTF-8".into()))?;
        let file = ScenarioFile::parse(&text).map_err(|e| match e {
            Error::Scenario(m) => Error::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut s = file.resolve(base)?;
        s.source_sha256 = sha256_hex(&bytes);
        Ok(s)
    }

    pub fn require_mpcs(&self) -> Result<()> {
        if self.mpcs.is_empty() {
            return Err(Error::Scenario("scenario defines no [[mpc]] entries".into()));
        }
        Ok(())
    }

    /// Estimator options from the experiment block, with overrides.
    pub fn estimator_options(&self, upsample: Option<usize>, threshold_db: Option<f64>) -> Result<EstimatorOptions> {
        let mut o = EstimatorOptions::default();
        if let Some(u) = upsample.or(self.experiment.upsample) {
            if u < 2 {
                return Err(Error::Invalid("upsample factor must be at least 2".into()));
            }
            o.upsample = u;
        }
        if let Some(t) = threshold_db.or(self.experiment.threshold_db) {
            o.peaks = PeakConfig { noise_floor_db_offset: t, ..o.peaks };
        }
        o.peaks.validate()?;
        Ok(o)
    }

    pub fn monte_carlo(&self, sweep: Sweep, seed: Option<u64>, methods: Option<Vec<Method>>, opts: EstimatorOptions) -> Result<MonteCarloConfig> {
        self.require_mpcs()?;
        let e = &self.experiment;
        let methods = match methods {
            Some(m) => m,
            None => match &e.methods {
                Some(s) => Method::parse_list(s)?,
                None => vec![Method::O1, Method::O2, Method::Haed, Method::HaedPlus],
            },
        };
        let mc = MonteCarloConfig {
            trials: e.trials.unwrap_or(1000),
            sweep,
            mpcs: self.mpcs.clone(),
            methods,
            seed: seed.or(e.seed).unwrap_or(0),
            random_angle: e.random_angle.unwrap_or(false),
            delay_jitter: e.delay_jitter.unwrap_or(false),
            estimator: opts,
        };
        mc.validate()?;
        Ok(mc)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PowerScale {
    #[default]
    Linear,
    Db,
}

/// Header of a PADP file. `extra` keeps unrecognized `key=value` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PadpHeader {
    pub m: usize,
    pub k: usize,
    pub asi: f64,
    pub delay_step: f64,
    pub scale: PowerScale,
    pub extra: BTreeMap<String, String>,
}

const MAGIC: &str = "PADP";
const FORMAT_VERSION: &str = "v1";

fn header_line(padp: &Padp, scale: PowerScale, extra: &BTreeMap<String, String>) -> String {
    let mut s = format!(
        "{MAGIC} {FORMAT_VERSION} m={} k={} asi_deg={} delay_step_ns={} scale={}",
        padp.m(),
        padp.k(),
        padp.asi.to_degrees(),
        padp.delay_step * 1e9,
        match scale {
            PowerScale::Linear => "linear",
            PowerScale::Db => "db",
        }
    );
    // exact values, so a write/read cycle is lossless
    s.push_str(&format!(" asi_rad={} delay_step_s={}", padp.asi, padp.delay_step));
    for (k, v) in extra {
        if v.chars().any(char::is_whitespace) || k.contains('=') {
            continue;
        }
        s.push_str(&format!(" {k}={v}"));
    }
    s.push('\n');
    s
}

pub fn write_padp_to<W: Write>(mut w: W, padp: &Padp, scale: PowerScale, extra: &BTreeMap<String, String>) -> Result<()> {
    w.write_all(header_line(padp, scale, extra).as_bytes())?;
    let mut buf = Vec::with_capacity(padp.power.len() * 8);
    for &v in padp.power.iter() {
        let v = match scale {
            PowerScale::Linear => v,
            PowerScale::Db => antenna::linear_to_db(v),
        };
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_padp(path: impl AsRef<Path>, padp: &Padp, scale: PowerScale, extra: &BTreeMap<String, String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write_padp_to(&mut f, padp, scale, extra)?;
    f.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<PadpHeader> {
    let bad = |m: String| Error::PadpFormat(m);
    let mut it = line.split_whitespace();
    if it.next() != Some(MAGIC) {
        return Err(bad("missing PADP magic".into()));
    }
    match it.next() {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(bad(format!("unsupported version `{v}`"))),
        None => return Err(bad("missing version".into())),
    }
    let mut kv = BTreeMap::new();
    for tok in it {
        let (k, v) = tok.split_once('=').ok_or_else(|| bad(format!("header token `{tok}` is not key=value")))?;
        kv.insert(k.to_string(), v.to_string());
    }
    fn take<T: std::str::FromStr>(kv: &mut BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
        match kv.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::PadpFormat(format!("bad value `{v}` for `{key}`"))),
        }
    }
    let m: usize = take(&mut kv, "m")?.ok_or_else(|| bad("missing m".into()))?;
    let k: usize = take(&mut kv, "k")?.ok_or_else(|| bad("missing k".into()))?;
    if m == 0 || k == 0 {
        return Err(bad("m and k must be positive".into()));
    }
    let asi_deg: f64 = take(&mut kv, "asi_deg")?.ok_or_else(|| bad("missing asi_deg".into()))?;
    let step_ns: f64 = take(&mut kv, "delay_step_ns")?.ok_or_else(|| bad("missing delay_step_ns".into()))?;
    let asi_rad: Option<f64> = take(&mut kv, "asi_rad")?;
    let step_s: Option<f64> = take(&mut kv, "delay_step_s")?;
    let scale = match kv.remove("scale").as_deref() {
        None | Some("linear") => PowerScale::Linear,
        Some("db") => PowerScale::Db,
        Some(o) => return Err(bad(format!("unknown scale `{o}`"))),
    };
    let asi = asi_rad.unwrap_or_else(|| asi_deg.to_radians());
    let delay_step = step_s.unwrap_or(step_ns * 1e-9);
    if !(asi > 0.0 && asi.is_finite()) || !(delay_step > 0.0 && delay_step.is_finite()) {
        return Err(bad("asi and delay step must be positive".into()));
    }
    Ok(PadpHeader {
        m,
        k,
        asi,
        delay_step,
        scale,
        extra: kv,
    })
}

pub fn read_padp_from<R: Read>(r: R) -> Result<(PadpHeader, Padp)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::PadpFormat("missing header line".into()));
    }
    let line = std::str::from_utf8(&line).map_err(|_| Error::PadpFormat("header is not UTF-8".into()))?;
    let header = parse_header(line.trim_end())?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = header.m * header.k * 8;
    if payload.len() != expected {
        return Err(Error::PadpFormat(format!(
            "payload has {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(header.m * header.k);
    for (i, c) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        if !v.is_finite() && !(header.scale == PowerScale::Db && v == f64::NEG_INFINITY) {
            return Err(Error::PadpFormat(format!("non-finite entry at index {i}")));
        }
        let v = match header.scale {
            PowerScale::Linear => v,
            PowerScale::Db => antenna::db_to_linear(v),
        };
        values.push(v);
    }
    let power = Array2::from_shape_vec((header.m, header.k), values).map_err(|e| Error::PadpFormat(e.to_string()))?;
    let padp = Padp {
        power,
        asi: header.asi,
        delay_step: header.delay_step,
        cir: None,
    };
    Ok((header, padp))
}

pub fn read_padp(path: impl AsRef<Path>) -> Result<(PadpHeader, Padp)> {
    read_padp_from(fs::File::open(path)?)
}

/// Sidecar describing how an output was produced. Contains no timestamps so
/// identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub output: String,
    pub output_sha256: String,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: "padp".into(),
            version: crate::VERSION.into(),
            command: command.into(),
            seed: None,
            inputs: BTreeMap::new(),
            parameters: BTreeMap::new(),
            output: String::new(),
            output_sha256: String::new(),
        }
    }

    pub fn sidecar_path(out: &Path) -> PathBuf {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }

    /// Hash the finished output and write `<out>.manifest.json`.
    pub fn write_for(mut self, out: &Path) -> Result<PathBuf> {
        self.output = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.output_sha256 = sha256_hex(&fs::read(out)?);
        let path = Self::sidecar_path(out);
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

fn flags(e: &MpcEstimate) -> String {
    let Some(a) = e.aux else { return String::new() };
    let mut v = vec![format!("side={}", a.side.as_str())];
    if a.tie {
        v.push("tie".into());
    }
    if a.clamped {
        v.push("clamped".into());
    }
    if a.sinc_fallback {
        v.push("sinc".into());
    }
    v.join(";")
}

/// One row per estimate, powers in dB at the boundary.
pub fn write_estimates_csv<W: Write>(w: W, estimates: &[MpcEstimate]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["method", "tau_ns", "phi_deg", "power_db", "chi_hat", "eps_deg", "flags"])?;
    for e in estimates {
        let (chi, eps) = e.aux.map(|a| (f(a.chi_hat), f(a.eps_hat.to_degrees()))).unwrap_or_default();
        c.write_record([
            e.method.as_str().to_string(),
            f(e.tau_hat * 1e9),
            f(e.phi_hat.to_degrees()),
            f(antenna::linear_to_db(e.p_hat)),
            chi,
            eps,
            flags(e),
        ])?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_crlb_csv<W: Write>(w: W, rows: &[CrlbRow]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        "sweep_variable",
        "value",
        "sqrt_crlb_phi_deg",
        "sqrt_crlb_alpha",
        "sqrt_crlb_tau_ns",
        "cond_fim",
        "mpc",
        "singular",
    ])?;
    for r in rows {
        let (p, a, t) = match &r.bound {
            Some(b) => (
                f(b.get(Param::Angle).sqrt().to_degrees()),
                f(b.get(Param::Amplitude).sqrt()),
                f(b.get(Param::Delay).sqrt() * 1e9),
            ),
            None => ("nan".into(), "nan".into(), "nan".into()),
        };
        c.write_record([
            r.variable.as_str().to_string(),
            f(r.value),
            p,
            a,
            t,
            f(r.condition),
            (r.mpc + 1).to_string(),
            r.bound.is_none().to_string(),
        ])?;
    }
    c.flush()?;
    Ok(())
}

pub fn write_montecarlo_csv<W: Write>(w: W, result: &SweepResult) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record([
        "sweep_value",
        "method",
        "param",
        "rmsee",
        "mean_err",
        "mc_stderr",
        "sqrt_crlb",
        "misses",
        "n",
        "false_alarms",
        "underresolved_trials",
    ])?;
    for p in &result.points {
        for e in &p.entries {
            c.write_record([
                f(p.value),
                e.method.as_str().to_string(),
                e.label(result.n_mpcs),
                f(e.stats.rmsee),
                f(e.stats.mean),
                f(e.stats.rmsee_stderr),
                f(e.sqrt_crlb),
                e.stats.misses.to_string(),
                e.stats.n.to_string(),
                e.stats.false_alarms.to_string(),
                e.underresolved_trials.to_string(),
            ])?;
        }
    }
    c.flush()?;
    Ok(())
}

pub fn write_offset_study_csv<W: Write>(w: W, stats: &[OffsetStats]) -> Result<()> {
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["method", "param", "mean_err", "mean_abs_err", "rmsee", "n", "misses"])?;
    for s in stats {
        for (name, st) in [("phi_deg", &s.angle_deg), ("power_db", &s.power_db)] {
            c.write_record([
                s.method.as_str().to_string(),
                name.to_string(),
                f(st.mean),
                f(st.mae),
                f(st.rmsee),
                st.n.to_string(),
                st.misses.to_string(),
            ])?;
        }
    }
    c.flush()?;
    Ok(())
}
