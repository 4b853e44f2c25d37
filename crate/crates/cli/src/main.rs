//! `armsim`: one-shot kinematics operations, the simulation service, and
//! session replay. One-shot operations run locally unless `--server` is given.

use std::fs;
use std::future::Future;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use armsim_client::{Client, ClientError};
use armsim_core::api::{
    self, ApiError, CollideRequest, FkRequest, IkRequest, TorqueRequest, ValidateRequest,
};
use armsim_core::sim::{parse_record, replay, DEFAULT_TICK_RATE};
use armsim_core::{builtin_tara_model, parse_urdf, IkParams, IkStatus, JointState, RobotModel};
use armsim_service::{ServiceConfig, DEFAULT_LISTEN};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "armsim",
    version,
    about = "Desk-scale 5-joint arm: kinematics, IK, collision and a simulation service"
)]
struct Cli {
    /// Run one-shot operations on this service (e.g. http://127.0.0.1:8047)
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArg {
    /// URDF file; defaults to $ARMSIM_MODEL, then the built-in model
    #[arg(long, env = "ARMSIM_MODEL", value_name = "PATH")]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct JointArg {
    /// Joint angles as csv radians (all joints, or all but the gripper), or a pose JSON file
    #[arg(long, allow_hyphen_values = true, value_name = "CSV|FILE")]
    q: String,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check a model; prints the report
    Validate {
        /// URDF file; overrides --model
        file: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Forward kinematics; prints every link pose
    Fk {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        q: JointArg,
    },
    /// Solve for joint angles that reach a point
    Ik {
        #[command(flatten)]
        model: ModelArg,
        /// Goal position x,y,z in meters
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3)]
        target: [f64; 3],
        /// Initial guess; defaults to the middle of every joint range
        #[arg(long, allow_hyphen_values = true, value_name = "CSV|FILE")]
        q0: Option<String>,
        /// Convergence tolerance in meters
        #[arg(long)]
        tol: Option<f64>,
        /// Iteration budget
        #[arg(long)]
        max_iter: Option<usize>,
        /// Damping λ
        #[arg(long)]
        damping: Option<f64>,
        /// Step scale α
        #[arg(long)]
        step: Option<f64>,
        /// Write the error trace as csv (iteration,error_norm_m)
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Static gravity torque at every actuated joint
    Torque {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        q: JointArg,
        /// Gravity x,y,z in m/s²
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vec3)]
        g: Option<[f64; 3]>,
    },
    /// Self-collision check; exits 2 when any pair collides
    Collide {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        q: JointArg,
    },
    /// Run the simulation loop behind HTTP/JSON and a WebSocket at /ws
    Serve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = DEFAULT_TICK_RATE)]
        tick_rate: f64,
        #[arg(long, default_value = DEFAULT_LISTEN, value_name = "ADDR:PORT")]
        listen: String,
        /// Record every command and state to this file
        #[arg(long, value_name = "FILE")]
        record: Option<PathBuf>,
        /// Feed the commands of a recording into the live loop
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        /// Serve static teleop UI assets from this directory at /
        #[arg(long, value_name = "DIR")]
        ui: Option<PathBuf>,
    },
    /// Re-run a recording's commands and write the state stream
    Replay {
        /// Recording made by `serve --record`
        file: PathBuf,
        #[command(flatten)]
        model: ModelArg,
        /// Output file; defaults to stdout
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Number of ticks; defaults to the recording's length
        #[arg(long)]
        ticks: Option<u64>,
        /// Compare with the recorded states; exits 2 on the first difference
        #[arg(long)]
        check: bool,
    },
}

/// Maps onto the exit codes 1 (usage), 2 (domain) and 3 (I/O).
enum Failure {
    Usage(String),
    Domain(String),
    Io(String),
}

impl Failure {
    fn io(context: impl std::fmt::Display, e: io::Error) -> Self {
        Failure::Io(format!("{context}: {e}"))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Domain(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<ApiError> for Failure {
    fn from(e: ApiError) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api(e) => e.into(),
            other => Failure::Io(other.to_string()),
        }
    }
}

fn parse_csv(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| {
            let v = v.trim();
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{v}` is not a finite number"))
        })
        .collect()
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v = parse_csv(s)?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected 3 values, got {}", v.len()))
}

/// csv radians, or a pose file holding a JointState.
fn joint_values(arg: &str) -> Result<Vec<f64>, Failure> {
    let path = Path::new(arg);
    if arg.ends_with(".json") || path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(arg, e))?;
        let state: JointState = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{arg} is not a pose file: {e}")))?;
        return Ok(state.q);
    }
    parse_csv(arg).map_err(|e| Failure::Usage(format!("--q: {e}")))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path.display(), e))
}

fn model_text(arg: &ModelArg) -> Result<Option<String>, Failure> {
    arg.model.as_deref().map(read_text).transpose()
}

fn load_model(arg: &ModelArg) -> Result<RobotModel, Failure> {
    match model_text(arg)? {
        Some(text) => parse_urdf(&text).map_err(|e| Failure::Domain(e.to_string())),
        None => Ok(builtin_tara_model()),
    }
}

fn block_on<F: Future>(fut: F) -> Result<F::Output, Failure> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::io("runtime", e))?;
    Ok(rt.block_on(fut))
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("responses serialize");
    write_stdout(format!("{text}\n").as_bytes())
}

/// A reader that hung up early is not an error.
fn write_stdout(bytes: &[u8]) -> Result<(), Failure> {
    match io::stdout().write_all(bytes) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::io("stdout", e)),
        _ => Ok(()),
    }
}

/// Local when `server` is `None`; both sides run the same operation.
fn one_shot<Req, T, Fut>(
    server: Option<&str>,
    req: Req,
    local: fn(&Req, &RobotModel) -> Result<T, ApiError>,
    remote: impl FnOnce(Client, Req) -> Fut,
) -> Result<T, Failure>
where
    Fut: Future<Output = Result<T, ClientError>>,
{
    match server {
        None => Ok(local(&req, &builtin_tara_model())?),
        Some(url) => Ok(block_on(remote(Client::new(url), req))??),
    }
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<(), Failure> {
    let io_err = |e: csv::Error| Failure::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["iteration", "error_norm_m"])
        .map_err(io_err)?;
    for (i, e) in trace.iter().enumerate() {
        w.write_record([i.to_string(), e.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Failure::io(path.display(), e))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let server = cli.server.as_deref();
    match cli.command {
        Command::Validate { file, model } => {
            let urdf = match file {
                Some(f) => Some(read_text(&f)?),
                None => model_text(&model)?,
            };
            let report = one_shot(
                server,
                ValidateRequest { urdf },
                |r, m| Ok(api::validate(r, m)),
                |c, r| async move { c.validate(&r).await },
            )?;
            print_json(&report)?;
            Ok(if report.is_usable() { 0 } else { 2 })
        }
        Command::Fk { model, q } => {
            let req = FkRequest {
                urdf: model_text(&model)?,
                q: joint_values(&q.q)?,
            };
            print_json(&one_shot(server, req, api::fk, |c, r| async move {
                c.fk(&r).await
            })?)?;
            Ok(0)
        }
        Command::Ik {
            model,
            target,
            q0,
            tol,
            max_iter,
            damping,
            step,
            trace,
        } => {
            let defaults = IkParams::default();
            let req = IkRequest {
                urdf: model_text(&model)?,
                target,
                q0: q0.as_deref().map(joint_values).transpose()?,
                params: IkParams {
                    tolerance: tol.unwrap_or(defaults.tolerance),
                    max_iterations: max_iter.unwrap_or(defaults.max_iterations),
                    damping: damping.unwrap_or(defaults.damping),
                    step_scale: step.unwrap_or(defaults.step_scale),
                    ..defaults
                },
            };
            let result = one_shot(server, req, api::ik, |c, r| async move { c.ik(&r).await })?;
            if let Some(path) = trace {
                write_trace(&path, &result.trace)?;
            }
            print_json(&result)?;
            Ok(if result.status == IkStatus::Converged {
                0
            } else {
                2
            })
        }
        Command::Torque { model, q, g } => {
            let req = TorqueRequest {
                urdf: model_text(&model)?,
                q: joint_values(&q.q)?,
                gravity: g,
            };
            print_json(&one_shot(server, req, api::torque, |c, r| async move {
                c.torque(&r).await
            })?)?;
            Ok(0)
        }
        Command::Collide { model, q } => {
            let req = CollideRequest {
                urdf: model_text(&model)?,
                q: joint_values(&q.q)?,
            };
            let report = one_shot(server, req, api::collide, |c, r| async move {
                c.collide(&r).await
            })?;
            print_json(&report)?;
            Ok(if report.is_clear() { 0 } else { 2 })
        }
        Command::Serve {
            model,
            tick_rate,
            listen,
            record,
            replay,
            ui,
        } => {
            if server.is_some() {
                return Err(Failure::Usage("serve does not take --server".into()));
            }
            if !(tick_rate > 0.0 && tick_rate.is_finite()) {
                return Err(Failure::Usage(format!(
                    "--tick-rate must be positive, got {tick_rate}"
                )));
            }
            let model = Arc::new(load_model(&model)?);
            let replay = replay
                .map(|p| {
                    parse_record(&read_text(&p)?)
                        .map_err(|e| Failure::Domain(format!("{}: {e}", p.display())))
                })
                .transpose()?;
            if let Some(dir) = &ui {
                if !dir.is_dir() {
                    return Err(Failure::Io(format!("{}: not a directory", dir.display())));
                }
            }
            let _ = tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| "info".into()),
                )
                .with_writer(io::stderr)
                .try_init();
            let config = ServiceConfig {
                model,
                tick_rate,
                record,
                replay,
                ui_dir: ui,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::io("runtime", e))?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&listen)
                    .await
                    .map_err(|e| Failure::io(&listen, e))?;
                armsim_service::serve(config, listener, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
                .map_err(|e| Failure::io("serve", e))
            })?;
            Ok(0)
        }
        Command::Replay {
            file,
            model,
            out,
            ticks,
            check,
        } => {
            let log = parse_record(&read_text(&file)?)
                .map_err(|e| Failure::Domain(format!("{}: {e}", file.display())))?;
            let model = load_model(&model)?;
            if log.model != model.name() {
                return Err(Failure::Domain(format!(
                    "recording was made with model `{}`, loaded `{}`",
                    log.model,
                    model.name()
                )));
            }
            let lines = replay(Arc::new(model), &log, ticks);
            let text = lines.concat();
            match &out {
                Some(path) => fs::write(path, &text).map_err(|e| Failure::io(path.display(), e))?,
                None => write_stdout(text.as_bytes())?,
            }
            if check {
                let recorded = &log.state_lines;
                if let Some(i) =
                    (0..lines.len().max(recorded.len())).find(|&i| lines.get(i) != recorded.get(i))
                {
                    return Err(Failure::Domain(format!(
                        "replay diverges from the recording at state line {}",
                        i + 1
                    )));
                }
                eprintln!("armsim: {} states match the recording", lines.len());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let (Failure::Usage(m) | Failure::Domain(m) | Failure::Io(m)) = &f;
            eprintln!("armsim: {m}");
            ExitCode::from(f.code())
        }
    }
}
