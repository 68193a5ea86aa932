//! `opacity`: verify, falsify, bound, sweep and simulate from the command line.
//!
//! Reports go to standard output as JSON; progress goes to standard error.
//! Exit codes: 0 certified / no witness / success, 1 unknown, 2 witness
//! found, 3 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::{json, Value};

use opacity_core::{
    default_grid, degree_sweep, falsify, min_certified_gamma, simulate, verify, Belief,
    FalsifyOptions, Horizon, InitialSet, Label, Method, Model, ParseOptions, PrivacySpec, Status,
    VerifyOptions,
};

const EXIT_OK: u8 = 0;
const EXIT_UNKNOWN: u8 = 1;
const EXIT_WITNESS: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "opacity",
    version,
    about = "Barrier-certificate privacy verification for MDPs and POMDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a barrier certificate at the spec's threshold.
    Verify {
        #[command(flatten)]
        io: ModelArgs,
        #[command(flatten)]
        v: VerifyArgs,
        /// Depth of the falsifier cross-check; 0 skips it.
        #[arg(long, default_value_t = 10)]
        depth: usize,
        /// Write the conic program and solution to this file.
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
    },
    /// Enumerate label sequences looking for a privacy violation.
    Falsify {
        #[command(flatten)]
        io: ModelArgs,
        #[arg(long, default_value_t = 10)]
        depth: usize,
        /// Interior grid points sampled from the initial set.
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Smallest certifiable threshold by bisection.
    Bound {
        #[command(flatten)]
        io: ModelArgs,
        #[command(flatten)]
        v: VerifyArgs,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        /// Falsifier depth for the lower end of the bracket; defaults to 12
        /// for MDPs and 10 for POMDPs.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Smallest certifiable threshold for several barrier degrees.
    Sweep {
        #[command(flatten)]
        io: ModelArgs,
        #[command(flatten)]
        v: VerifyArgs,
        /// Comma-separated even degrees.
        #[arg(long, value_delimiter = ',', default_value = "2,4")]
        degrees: Vec<usize>,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
        /// As for `bound`.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Belief trajectory along a label sequence.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Optional; adds the secret-mass series.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        renormalize: bool,
        /// JSON array of `"action"`, `"action/observation"` or
        /// `{"action": .., "observation": ..}`.
        #[arg(long)]
        labels: String,
        /// JSON array; defaults to the model's initial distribution.
        #[arg(long)]
        b0: Option<String>,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    /// Rescale an initial distribution that does not sum to 1.
    #[arg(long)]
    renormalize: bool,
    /// `infinite` or a step count; overrides the spec.
    #[arg(long)]
    horizon: Option<String>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Barrier degree for POMDP methods.
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Add simplex multipliers to the POMDP decrease conditions.
    #[arg(long)]
    localize_simplex: bool,
    /// One polynomial in `(b, t)` for finite horizons.
    #[arg(long)]
    time_polynomial: bool,
    /// Validation sample count.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl VerifyArgs {
    fn options(&self) -> VerifyOptions {
        VerifyOptions {
            localize_simplex: self.localize_simplex,
            time_polynomial: self.time_polynomial,
            n_samples: self.samples,
            seed: self.seed,
            ..VerifyOptions::default()
        }
    }
}

/// Error carrying its exit code.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<(Value, u8), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path, renormalize: bool) -> Result<(Model, Vec<String>), Failure> {
    let parsed = Model::from_json_str(&read(path)?, ParseOptions { renormalize })?;
    let warnings: Vec<String> = parsed.warnings.iter().map(|w| w.to_string()).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((parsed.model, warnings))
}

fn load(io: &ModelArgs) -> Result<(Model, PrivacySpec, Vec<String>), Failure> {
    let (model, warnings) = load_model(&io.model, io.renormalize)?;
    let mut spec = PrivacySpec::from_json_str(&read(&io.spec)?, &model)?;
    if let Some(h) = &io.horizon {
        spec.horizon = match h.as_str() {
            "infinite" => Horizon::Infinite,
            t => Horizon::Finite(t.parse().map_err(|_| {
                Failure(format!(
                    "--horizon: expected `infinite` or a step count, got `{t}`"
                ))
            })?),
        };
    }
    Ok((model, spec, warnings))
}

fn pool(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn header(
    command: &str,
    io: &ModelArgs,
    model: &Model,
    spec: &PrivacySpec,
    warnings: &[String],
) -> Value {
    json!({
        "command": command,
        "model": io.model.display().to_string(),
        "spec": io.spec.display().to_string(),
        "lambda": spec.lambda,
        "pomdp": model.is_pomdp(),
        "warnings": warnings,
    })
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Verify {
            io,
            v,
            depth,
            dump_sdp,
        } => {
            let (model, spec, warnings) = load(&io)?;
            let method = Method::for_spec(&model, &spec, v.degree);
            let opts = VerifyOptions {
                falsify_depth: (depth > 0).then_some(depth),
                dump_sdp,
                ..v.options()
            };
            info!("verifying with {method} at gamma={}", spec.lambda);
            let outcome = verify(&model, &spec, method, &opts)?;
            let witness = outcome
                .diagnostics
                .falsifier
                .as_ref()
                .is_some_and(|f| f.witness.is_some());
            let code = match (outcome.status, witness) {
                (Status::Certified, _) => EXIT_OK,
                (Status::Unknown, true) => EXIT_WITNESS,
                (Status::Unknown, false) => EXIT_UNKNOWN,
            };
            let mut report = header("verify", &io, &model, &spec, &warnings);
            report["outcome"] = serde_json::to_value(&outcome)?;
            Ok((report, code))
        }
        Command::Falsify {
            io,
            depth,
            grid,
            seed,
        } => {
            let (model, spec, warnings) = load(&io)?;
            let points = default_grid(&model, &spec, grid, seed)?;
            info!("falsifying to depth {depth} from {} beliefs", points.len());
            let r = falsify(&model, &spec, depth, &points, FalsifyOptions::default())?;
            let code = if r.witness.is_some() {
                EXIT_WITNESS
            } else {
                EXIT_OK
            };
            let mut report = header("falsify", &io, &model, &spec, &warnings);
            report["falsifier"] = serde_json::to_value(&r)?;
            Ok((report, code))
        }
        Command::Bound {
            io,
            v,
            tol,
            depth,
            jobs,
        } => {
            pool(jobs)?;
            let (model, spec, warnings) = load(&io)?;
            check_tol(tol)?;
            let method = Method::for_spec(&model, &spec, v.degree);
            info!("bisecting {method} to tol {tol}");
            let depth = depth.unwrap_or_else(|| default_depth(&model));
            let s = min_certified_gamma(&model, &spec, method, tol, depth, &v.options())?;
            let code = if s.gamma_star.is_some() {
                EXIT_OK
            } else {
                EXIT_UNKNOWN
            };
            let mut report = header("bound", &io, &model, &spec, &warnings);
            report["search"] = serde_json::to_value(&s)?;
            Ok((report, code))
        }
        Command::Sweep {
            io,
            v,
            degrees,
            tol,
            depth,
            jobs,
        } => {
            pool(jobs)?;
            let (model, spec, warnings) = load(&io)?;
            check_tol(tol)?;
            if !model.is_pomdp() {
                return Err(Failure("sweep needs a POMDP model".into()));
            }
            if let Some(d) = degrees.iter().find(|&&d| d == 0 || d % 2 == 1) {
                return Err(Failure(format!(
                    "--degrees: {d} is not a positive even degree"
                )));
            }
            let method = Method::for_spec(&model, &spec, degrees[0]);
            info!("sweeping degrees {degrees:?}");
            let depth = depth.unwrap_or_else(|| default_depth(&model));
            let rows = degree_sweep(&model, &spec, method, &degrees, tol, depth, &v.options());
            let code = if rows.iter().any(|r| r.gamma_star.is_some()) {
                EXIT_OK
            } else {
                EXIT_UNKNOWN
            };
            let mut report = header("sweep", &io, &model, &spec, &warnings);
            report["rows"] = serde_json::to_value(&rows)?;
            Ok((report, code))
        }
        Command::Simulate {
            model,
            spec,
            renormalize,
            labels,
            b0,
        } => {
            let (m, warnings) = load_model(&model, renormalize)?;
            let labels = parse_labels(&labels)?;
            let b0 = match b0 {
                Some(s) => {
                    let v: Vec<f64> =
                        serde_json::from_str(&s).map_err(|e| Failure(format!("--b0: {e}")))?;
                    Belief::from_vec(v)?
                }
                None => Belief::from_vec(m.initial().to_vec())?,
            };
            let s = match &spec {
                Some(p) => Some(PrivacySpec::from_json_str(&read(p)?, &m)?),
                None => None,
            };
            // Without a spec the secret set is empty and the series is dropped.
            let sim_spec = s.clone().unwrap_or(PrivacySpec {
                secret: Vec::new(),
                lambda: 1.0,
                initial_set: InitialSet::Point(b0.values().to_vec()),
                horizon: Horizon::Infinite,
            });
            let traj = simulate(&m, &sim_spec, &b0, &labels)?;
            let mut t = serde_json::to_value(&traj)?;
            if s.is_none() {
                if let Some(obj) = t.as_object_mut() {
                    obj.remove("secret_mass_series");
                }
            }
            let report = json!({
                "command": "simulate",
                "model": model.display().to_string(),
                "warnings": warnings,
                "trajectory": t,
            });
            Ok((report, EXIT_OK))
        }
    }
}

/// Falsifier depth that stays within the node budget: POMDPs branch on
/// observations too.
fn default_depth(model: &Model) -> usize {
    if model.is_pomdp() {
        10
    } else {
        12
    }
}

fn check_tol(tol: f64) -> Result<(), Failure> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(Failure(format!("--tol must lie in (0, 1), got {tol}")))
    }
}

fn parse_labels(text: &str) -> Result<Vec<Label>, Failure> {
    let items: Vec<Value> =
        serde_json::from_str(text).map_err(|e| Failure(format!("--labels: {e}")))?;
    items
        .into_iter()
        .map(|v| match v {
            Value::String(s) => Ok(match s.split_once('/') {
                Some((a, z)) => Label::with_observation(a, z),
                None => Label::action(s),
            }),
            other => serde_json::from_value(other).map_err(|e| Failure(format!("--labels: {e}"))),
        })
        .collect()
}

fn emit(report: &Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    // A closed pipe downstream is not an error of ours.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::from(EXIT_OK);
            }
            let msg = e.to_string();
            let line = msg
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            eprintln!("opacity: {line}");
            emit(&json!({ "status": "input_error", "error": line }));
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match run(cli.command) {
        Ok((report, code)) => {
            emit(&report);
            ExitCode::from(code)
        }
        Err(Failure(msg)) => {
            eprintln!("opacity: {msg}");
            emit(&json!({ "status": "input_error", "error": msg }));
            ExitCode::from(EXIT_INPUT)
        }
    }
}
