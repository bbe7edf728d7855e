use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use afcs_core::analysis::{self, DeConfig, QUpdate};
use afcs_core::bp::{self, BpConfig, BpError};
use afcs_core::experiment::{self, ConfigError, ExperimentConfig, ExperimentError, ExperimentKind};
use afcs_core::measure::{self, BinarySignal, MeasurementGraph, MeasurementVector, SnrConvention};
use afcs_core::seed::{self, tag};
use afcs_core::sumverify::{self, SvDecodeResult};
use afcs_core::weightset::{self, WeightSet};
use afcs_core::wsn::{self, Decoder, Deployment, DetectionConfig, WsnParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "afcs", version, about = "Binary compressive sensing with analog fountain codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Gaussian weight set and optionally check the uniqueness condition.
    Weights(WeightsArgs),
    /// Draw a graph and a sparse signal and write the measurements.
    Encode(EncodeArgs),
    /// Sum-verification decoding of noiseless measurements.
    DecodeSv(DecodeSvArgs),
    /// Belief-propagation decoding of noisy measurements.
    DecodeBp(DecodeBpArgs),
    /// Density evolution, optimal degree and measurement bounds.
    Analyze {
        #[command(subcommand)]
        what: Analyze,
    },
    /// Simulate sparse event detection in a sensor network.
    Wsn(WsnArgs),
    /// Run a parameter sweep from a JSON config or a preset.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = weightset::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long = "L")]
    degree: usize,
    /// Number of nonzero entries.
    #[arg(long)]
    sparsity: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Add white Gaussian noise at this SNR; noiseless when absent.
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    #[arg(long = "snr-convention", value_enum, default_value = "per-measurement")]
    snr_convention: ConventionArg,
    /// Weight-set size (defaults to L).
    #[arg(long = "weights-size")]
    weights_size: Option<usize>,
    /// Use a weight set written by `afcs weights`.
    #[arg(long, conflicts_with = "weights_size")]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the graph on its own.
    #[arg(long = "graph-out")]
    graph_out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeSvArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long = "T", default_value_t = 2)]
    t: usize,
    #[arg(long, default_value_t = sumverify::DEFAULT_EPSILON)]
    epsilon: f64,
    /// Exit with status 3 unless every entry is resolved.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeBpArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
    /// Noise standard deviation; taken from the measurement file when absent.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = bp::DEFAULT_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = bp::DEFAULT_PRIOR)]
    prior: f64,
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `per-measurement`: mean measurement energy over the noise variance.
/// `total`: total measurement energy over the noise variance.
#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    PerMeasurement,
    Total,
}

impl From<ConventionArg> for SnrConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Total => SnrConvention::Total,
            ConventionArg::PerMeasurement => SnrConvention::PerMeasurement,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum QUpdateArg {
    TypeResolved,
    Appendix,
    Static,
}

#[derive(Subcommand)]
enum Analyze {
    /// Density-evolution trajectory as CSV `iter,p,f,q1`.
    De {
        #[arg(long = "L")]
        degree: usize,
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = analysis::DEFAULT_MAX_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = analysis::DEFAULT_TOLERANCE)]
        tolerance: f64,
        #[arg(long = "q-update", value_enum, default_value = "type-resolved")]
        q_update: QUpdateArg,
        /// Shorthand for `--q-update static`.
        #[arg(long = "static-q")]
        static_q: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal row degree.
    Lopt {
        #[arg(long = "T")]
        t: usize,
        #[arg(long)]
        s: f64,
        #[arg(long = "l-max", default_value_t = analysis::DEFAULT_L_MAX)]
        l_max: usize,
    },
    /// Measurement-count bracket.
    Bounds {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: f64,
        #[arg(long = "T")]
        t: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum DeployArg {
    Uniform,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Bp,
    Sv,
}

#[derive(Args)]
struct WsnArgs {
    #[arg(long, default_value_t = 500.0)]
    field: f64,
    #[arg(long, default_value_t = 256)]
    events: usize,
    #[arg(long)]
    sensors: usize,
    #[arg(long, default_value_t = 50.0)]
    radius: f64,
    #[arg(long, value_enum, default_value = "uniform")]
    deploy: DeployArg,
    #[arg(long, default_value_t = 10)]
    active: usize,
    /// Noiseless when absent.
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    #[arg(long = "snr-convention", value_enum, default_value = "per-measurement")]
    snr_convention: ConventionArg,
    #[arg(long, value_enum, default_value = "bp")]
    decoder: DecoderArg,
    #[arg(long = "T", default_value_t = 2)]
    t: usize,
    #[arg(long, default_value_t = bp::DEFAULT_ITERS)]
    iters: usize,
    #[arg(long, default_value_t = 3.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Start from a built-in grid.
    #[arg(long, value_parser = parse_kind)]
    preset: Option<ExperimentKind>,
    /// Print the resolved config instead of running it.
    #[arg(long = "print-config")]
    print_config: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV path; a `.manifest.json` is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown experiment `{s}`"))
}

enum Failure {
    Config(String),
    Decode(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Config(_) => 2,
            Failure::Decode(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Decode(m) | Failure::Other(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn other_err(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = configure_threads().and_then(|()| dispatch(cli.command));
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("AFCS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Config(format!("AFCS_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(other_err)
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Weights(a) => weights(a),
        Command::Encode(a) => encode(a),
        Command::DecodeSv(a) => decode_sv(a),
        Command::DecodeBp(a) => decode_bp(a),
        Command::Analyze { what } => analyze(what),
        Command::Wsn(a) => run_wsn(a),
        Command::Experiment(a) => run_experiment(a),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Other(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(other_err)
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(other_err)?;
    text.push('\n');
    emit(out, &text)
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

/// Load `T` from a file holding either the bare value or a bundle with `key`.
fn load_part<T: for<'de> Deserialize<'de>>(path: &Path, key: &str) -> Result<T, Failure> {
    let mut value = read_json(path)?;
    if let Some(inner) = value.get_mut(key) {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn weights(a: WeightsArgs) -> CliResult {
    let ws = WeightSet::sample_gaussian(a.size, a.seed).map_err(config_err)?;
    let ws = if a.verify {
        let (ws, check) = ws.verified(a.epsilon).map_err(config_err)?;
        if !check.holds {
            eprintln!(
                "warning: uniqueness condition fails; witness {:?}",
                check.witness.unwrap_or_default()
            );
        }
        ws
    } else {
        ws
    };
    emit_json(a.out.as_deref(), &ws)
}

#[derive(Serialize, Deserialize)]
struct Bundle {
    graph: MeasurementGraph,
    measurements: MeasurementVector,
    signal: BinarySignal,
    weights: WeightSet,
    sigma: f64,
}

fn encode(a: EncodeArgs) -> CliResult {
    let ws = match &a.weights {
        Some(p) => load_part::<WeightSet>(p, "weights")?,
        None => WeightSet::sample_gaussian(a.weights_size.unwrap_or(a.degree), seed::derive(a.seed, &[tag::WEIGHTS]))
            .map_err(config_err)?,
    };
    let g = MeasurementGraph::build(a.n, a.m, a.degree, &ws, seed::derive(a.seed, &[tag::GRAPH])).map_err(config_err)?;
    let b = BinarySignal::random(a.n, a.sparsity, seed::derive(a.seed, &[tag::SIGNAL])).map_err(config_err)?;
    let clean = g.encode(&b).map_err(other_err)?;
    let (measurements, sigma) = match a.snr_db {
        None => (clean, 0.0),
        Some(gamma) => {
            let sigma = g.snr_to_sigma(&b, gamma, a.snr_convention.into()).map_err(config_err)?;
            let y = measure::add_awgn(&clean, sigma, seed::derive(a.seed, &[tag::NOISE])).map_err(other_err)?;
            (y, sigma)
        }
    };
    if let Some(p) = &a.graph_out {
        emit_json(Some(p), &g)?;
    }
    emit_json(
        a.out.as_deref(),
        &Bundle {
            graph: g,
            measurements,
            signal: b,
            weights: ws,
            sigma,
        },
    )
}

fn decode_sv(a: DecodeSvArgs) -> CliResult {
    let g: MeasurementGraph = load_part(&a.graph, "graph")?;
    let c: MeasurementVector = load_part(&a.measurements, "measurements")?;
    let result: SvDecodeResult = match sumverify::decode_sv(&g, &c, a.t, a.epsilon) {
        Ok(r) => r,
        Err(e @ sumverify::SvError::AmbiguousMatch { .. }) if a.strict => return Err(Failure::Decode(e.to_string())),
        Err(e) => return Err(config_err(e)),
    };
    emit_json(a.out.as_deref(), &result)?;
    if a.strict && !result.is_complete() {
        return Err(Failure::Decode(format!(
            "{} of {} entries unresolved",
            result.unresolved.len(),
            g.n()
        )));
    }
    Ok(())
}

fn decode_bp(a: DecodeBpArgs) -> CliResult {
    let g: MeasurementGraph = load_part(&a.graph, "graph")?;
    let y: MeasurementVector = load_part(&a.measurements, "measurements")?;
    let sigma = match a.sigma {
        Some(s) => s,
        None if y.noise_variance > 0.0 => y.noise_variance.sqrt(),
        None => return Err(Failure::Config("--sigma is required for noiseless measurement files".into())),
    };
    let cfg = BpConfig {
        max_iters: a.iters,
        prior_one: a.prior,
        sigma,
    };
    let result = match bp::decode_bp(&g, &y, &cfg) {
        Ok(r) => r,
        Err(e @ BpError::DegreeTooLargeForExactEnumeration { .. }) if a.strict => {
            return Err(Failure::Decode(e.to_string()))
        }
        Err(e) => return Err(config_err(e)),
    };
    emit_json(a.out.as_deref(), &result)
}

fn analyze(what: Analyze) -> CliResult {
    match what {
        Analyze::De {
            degree,
            t,
            s,
            beta,
            iters,
            tolerance,
            q_update,
            static_q,
            out,
        } => {
            let mut cfg = DeConfig::new(degree, t, s, beta);
            cfg.max_iters = iters;
            cfg.tolerance = tolerance;
            cfg.q_update = match (static_q, q_update) {
                (true, _) | (false, QUpdateArg::Static) => QUpdate::Static,
                (false, QUpdateArg::Appendix) => QUpdate::Appendix,
                (false, QUpdateArg::TypeResolved) => QUpdate::TypeResolved,
            };
            let traj = match analysis::density_evolution(&cfg) {
                Ok(t) => t,
                Err(e @ analysis::AnalysisError::InvalidParameter(_)) => return Err(config_err(e)),
                Err(e) => return Err(other_err(e)),
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["iter", "p", "f", "q1"]).map_err(other_err)?;
            for st in &traj {
                w.write_record([
                    st.iter.to_string(),
                    experiment::fmt_float(st.p),
                    experiment::fmt_float(st.f),
                    experiment::fmt_float(st.q1),
                ])
                .map_err(other_err)?;
            }
            let bytes = w.into_inner().map_err(other_err)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&bytes))
        }
        Analyze::Lopt { t, s, l_max } => {
            let (exact, approx) = analysis::optimal_degree(t, s, l_max).map_err(config_err)?;
            emit(None, &format!("L_exact,L_approx\n{exact},{approx}\n"))
        }
        Analyze::Bounds { n, s, t } => {
            let b = analysis::measurement_bounds(n, s, t).map_err(config_err)?;
            emit(
                None,
                &format!(
                    "L_opt,m_lower,m_upper,closed_lower,closed_upper\n{},{},{},{},{}\n",
                    b.l_opt,
                    b.m_lower,
                    b.m_upper,
                    experiment::fmt_float(b.closed_lower),
                    experiment::fmt_float(b.closed_upper)
                ),
            )
        }
    }
}

fn run_wsn(a: WsnArgs) -> CliResult {
    let deployment = match a.deploy {
        DeployArg::Uniform => Deployment::Uniform,
        DeployArg::Random => Deployment::Random,
    };
    let mut params = WsnParams::new(a.field, a.events, a.sensors, a.radius, deployment);
    params.alpha = a.alpha;
    params.eta = a.eta;
    let decoder = match a.decoder {
        DecoderArg::Bp => Decoder::Bp { iters: a.iters },
        DecoderArg::Sv => Decoder::SumVerify {
            t: a.t,
            epsilon: sumverify::DEFAULT_EPSILON,
        },
    };
    let cfg = DetectionConfig {
        params,
        k: a.active,
        gamma_db: a.snr_db,
        snr_convention: a.snr_convention.into(),
        decoder,
        trials: a.trials,
        seed: a.seed,
    };
    let metrics = wsn::simulate_detection(&cfg).map_err(|e| match e {
        wsn::WsnError::InvalidParameter(_) | wsn::WsnError::NotPerfectSquare(_) => config_err(e),
        e => other_err(e),
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial", "pcd", "pfd", "unresolved"]).map_err(other_err)?;
    for t in &metrics.trials {
        w.write_record([
            t.trial.to_string(),
            experiment::fmt_float(t.pcd),
            experiment::fmt_float(t.pfd),
            t.unresolved.to_string(),
        ])
        .map_err(other_err)?;
    }
    let bytes = w.into_inner().map_err(other_err)?;
    emit(a.out.as_deref(), &String::from_utf8_lossy(&bytes))?;
    eprintln!("pcd {} pfd {}", experiment::fmt_float(metrics.pcd), experiment::fmt_float(metrics.pfd));
    Ok(())
}

fn run_experiment(a: ExperimentArgs) -> CliResult {
    let mut cfg = match (&a.config, a.preset) {
        (Some(path), _) => {
            let raw = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            experiment::validate_config(&raw).map_err(config_err)?
        }
        (None, Some(kind)) => ExperimentConfig::preset(kind),
        (None, None) => return Err(Failure::Config("--config or --preset is required".into())),
    };
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(p) = &a.out {
        cfg.output = Some(p.to_string_lossy().into_owned());
    }
    cfg.validate().map_err(config_err)?;
    if a.print_config {
        return emit_json(None, &cfg);
    }
    let table = experiment::run_experiment(&cfg).map_err(|e| match e {
        ExperimentError::Config(c @ (ConfigError::Parse(_) | ConfigError::Range(_))) => config_err(c),
        e => other_err(e),
    })?;
    match &cfg.output {
        Some(path) => experiment::write_outputs(&cfg, &table, Path::new(path)).map_err(other_err),
        None => emit(None, &table.to_csv().map_err(other_err)?),
    }
}
