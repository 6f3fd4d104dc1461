use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use padp_core::estimation::{self, Method};
use padp_core::experiments::{self, Sweep};
use padp_core::io::{self, Manifest, PowerScale, Scenario};
use padp_core::synthesis::simulate_padp;
use padp_core::AntennaPattern;
use serde_json::json;

#[derive(Parser)]
#[command(name = "padp", version, about = "Directional scanning sounding: simulate PADPs, estimate MPCs, compute bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a PADP from a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Store powers in dB instead of linear.
        #[arg(long)]
        db: bool,
    },
    /// Estimate MPCs from a PADP file.
    Estimate {
        #[arg(long)]
        padp: PathBuf,
        /// Scenario supplying the antenna pattern.
        #[arg(long, required_unless_present = "pattern")]
        scenario: Option<PathBuf>,
        /// `gaussian:<g_max_db>:<hpbw_deg>` or `table:<csv path>`.
        #[arg(long, conflicts_with = "scenario")]
        pattern: Option<String>,
        #[arg(long, default_value = "o1,o2,haed,haed+")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// CRLB sweep of a scenario.
    Crlb {
        #[arg(long)]
        scenario: PathBuf,
        /// `var=values`, e.g. `snr=0:40:5` or `sep=5,10,30`.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo RMSEE sweep.
    Montecarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        methods: Option<String>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Noise-free error statistics over uniformly distributed angles.
    OffsetStudy {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "o1,o2,haed")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
    },
}

#[derive(Args)]
struct EstimatorArgs {
    /// HAED+ delay upsampling factor.
    #[arg(long)]
    upsample: Option<usize>,
    /// Detection threshold above the expected largest noise cell, dB.
    #[arg(long)]
    threshold_db: Option<f64>,
}

enum Failure {
    Usage(String),
    Run(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.to_string())
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("padp: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let mut cmd = Cli::command();
            cmd.error(clap::error::ErrorKind::InvalidValue, msg).exit()
        }
        Err(Failure::Run(msg)) => {
            eprintln!("padp: error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DSS_THREADS") else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("DSS_THREADS must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err("DSS_THREADS must be a positive integer".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn parse_sweep(flag: Option<&str>, scenario: &Scenario) -> Res<Sweep> {
    let text = match flag.or(scenario.experiment.sweep.as_deref()) {
        Some(t) => t,
        None => return usage("a sweep is required (--sweep or experiment.sweep in the scenario)"),
    };
    text.parse::<Sweep>().or_else(|e| usage(format!("--sweep: {e}")))
}

fn parse_methods(s: &str) -> Res<Vec<Method>> {
    Method::parse_list(s).or_else(|e| usage(format!("--methods: {e}")))
}

fn parse_pattern(spec: &str) -> Res<AntennaPattern> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    match parts.as_slice() {
        ["gaussian", g, h] => {
            let g: f64 = g.parse().or_else(|_| usage(format!("--pattern: bad gain `{g}`")))?;
            let h: f64 = h.parse().or_else(|_| usage(format!("--pattern: bad beamwidth `{h}`")))?;
            Ok(AntennaPattern::gaussian_db(g, h)?)
        }
        ["table", path] => Ok(AntennaPattern::load_csv(path)?),
        _ => usage(format!("--pattern `{spec}`: expected gaussian:<g_max_db>:<hpbw_deg> or table:<path>")),
    }
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

fn scenario_manifest(command: &str, scenario_path: &Path, s: &Scenario) -> Manifest {
    let mut m = Manifest::new(command);
    m.inputs.insert(scenario_path.display().to_string(), s.source_sha256.clone());
    m.parameters.insert("sounding".into(), json!(s.sounding));
    m.parameters.insert("m".into(), json!(s.array.m));
    m.parameters.insert("pattern".into(), json!({ "g_max": s.pattern.g_max(), "hpbw_rad": s.pattern.hpbw(), "gaussian": s.pattern.is_gaussian() }));
    m.parameters.insert("mpcs".into(), json!(s.mpcs));
    m
}

fn run(cmd: Command) -> Res<()> {
    match cmd {
        Command::Simulate { scenario, out, seed, db } => {
            let s = Scenario::load(&scenario)?;
            s.require_mpcs()?;
            let padp = simulate_padp(&s.mpcs, &s.array, &s.pattern, &s.sounding, seed)?;
            let mut extra = BTreeMap::new();
            extra.insert("seed".to_string(), seed.to_string());
            extra.insert("input_sha256".to_string(), s.source_sha256.clone());
            extra.insert("version".to_string(), padp_core::VERSION.to_string());
            let scale = if db { PowerScale::Db } else { PowerScale::Linear };
            io::write_padp(&out, &padp, scale, &extra)?;
            let mut m = scenario_manifest("simulate", &scenario, &s);
            m.seed = Some(seed);
            m.write_for(&out)?;
            eprintln!("padp: wrote {}x{} PADP to {}", padp.m(), padp.k(), out.display());
        }
        Command::Estimate { padp, scenario, pattern, methods, out, est } => {
            let methods = parse_methods(&methods)?;
            let (pat, opts, mut manifest) = match (&scenario, &pattern) {
                (Some(p), _) => {
                    let s = Scenario::load(p)?;
                    let opts = s.estimator_options(est.upsample, est.threshold_db)?;
                    let mut m = Manifest::new("estimate");
                    m.inputs.insert(p.display().to_string(), s.source_sha256.clone());
                    (s.pattern, opts, m)
                }
                (None, Some(spec)) => {
                    let pat = parse_pattern(spec)?;
                    let mut base = padp_core::estimation::EstimatorOptions::default();
                    if let Some(u) = est.upsample {
                        base.upsample = u.max(2);
                    }
                    if let Some(t) = est.threshold_db {
                        base.peaks.noise_floor_db_offset = t;
                        base.peaks.validate()?;
                    }
                    let mut m = Manifest::new("estimate");
                    m.parameters.insert("pattern".into(), json!(spec));
                    (pat, base, m)
                }
                (None, None) => return usage("--scenario or --pattern is required"),
            };
            let bytes = std::fs::read(&padp).map_err(|e| Failure::Run(format!("{}: {e}", padp.display())))?;
            let (_, p) = io::read_padp_from(&bytes[..])?;
            let all: Vec<_> = estimation::estimate_all(&p, &pat, &methods, &opts)
                .into_iter()
                .flat_map(|(_, e)| e)
                .collect();
            let mut w = create(&out)?;
            io::write_estimates_csv(&mut w, &all)?;
            w.flush()?;
            drop(w);
            manifest.inputs.insert(padp.display().to_string(), io::sha256_hex(&bytes));
            manifest.parameters.insert("methods".into(), json!(methods.iter().map(|m| m.as_str()).collect::<Vec<_>>()));
            manifest.parameters.insert("estimator".into(), json!(opts));
            manifest.write_for(&out)?;
        }
        Command::Crlb { scenario, sweep, out } => {
            let s = Scenario::load(&scenario)?;
            let sweep = parse_sweep(sweep.as_deref(), &s)?;
            s.require_mpcs()?;
            let rows = experiments::crlb_sweep(&sweep, &s.mpcs, &s.sounding, &s.array, &s.pattern)?;
            let mut w = create(&out)?;
            io::write_crlb_csv(&mut w, &rows)?;
            w.flush()?;
            drop(w);
            let mut m = scenario_manifest("crlb", &scenario, &s);
            m.parameters.insert("sweep".into(), json!(sweep));
            m.write_for(&out)?;
        }
        Command::Montecarlo { scenario, sweep, out, seed, trials, methods, est } => {
            let s = Scenario::load(&scenario)?;
            let sweep = parse_sweep(sweep.as_deref(), &s)?;
            let methods = methods.as_deref().map(parse_methods).transpose()?;
            if trials == Some(0) {
                return usage("--trials must be at least 1");
            }
            let opts = s.estimator_options(est.upsample, est.threshold_db)?;
            let mut mc = s.monte_carlo(sweep, seed, methods, opts)?;
            if let Some(t) = trials {
                mc.trials = t;
            }
            let result = experiments::run_sweep_with_progress(&mc, &s.sounding, &s.array, &s.pattern, |done, total| {
                eprintln!("padp: sweep point {done}/{total} done");
            })?;
            let mut w = create(&out)?;
            io::write_montecarlo_csv(&mut w, &result)?;
            w.flush()?;
            drop(w);
            let mut m = scenario_manifest("montecarlo", &scenario, &s);
            m.seed = Some(mc.seed);
            m.parameters.insert("monte_carlo".into(), json!(mc));
            m.write_for(&out)?;
        }
        Command::OffsetStudy { scenario, n, seed, methods, out, est } => {
            let s = Scenario::load(&scenario)?;
            let methods = parse_methods(&methods)?;
            if n < 1000 {
                return usage("--n must be at least 1000");
            }
            let opts = s.estimator_options(est.upsample, est.threshold_db)?;
            let stats = experiments::uniform_offset_study(n, seed, &methods, &s.sounding, &s.array, &s.pattern, &opts)?;
            let mut w = create(&out)?;
            io::write_offset_study_csv(&mut w, &stats)?;
            w.flush()?;
            drop(w);
            let mut m = scenario_manifest("offset-study", &scenario, &s);
            m.seed = Some(seed);
            m.parameters.insert("n".into(), json!(n));
            m.parameters.insert("methods".into(), json!(methods.iter().map(|m| m.as_str()).collect::<Vec<_>>()));
            m.parameters.insert("estimator".into(), json!(opts));
            m.write_for(&out)?;
        }
    }
    Ok(())
}
