use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use spherebot_cli::analyze::analyze_file;
use spherebot_cli::artifacts::{run_scenario, scenario_dir};
use spherebot_cli::error::{CliError, CliResult, EXIT_OK};
use spherebot_cli::report::summarize;
use spherebot_cli::scenario::{Initial, RunSpec, Source, Summary, CLOSED_LOOP, OPEN_LOOP};
use spherebot_cli::{Overrides, Scenario};
use spherebot_core::controller::ControllerGains;
use spherebot_core::integrator::IntegratorConfig;
use spherebot_core::{Robot, RobotParams};

#[derive(Parser)]
#[command(name = "spherebot", version, about = "Pendulum-driven spherical robot: simulate, characterize, control, report, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Robot parameter JSON file.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Artifact root directory.
    #[arg(long, default_value = "artifacts")]
    out: PathBuf,
    /// Built-in scenario name, `all`, or a scenario JSON file.
    #[arg(long)]
    scenario: Option<String>,
    /// Pendulum angle, degrees.
    #[arg(long, allow_hyphen_values = true)]
    beta_deg: Option<f64>,
    /// Spin rate ψ̇, rad/s; negative rolls toward +X.
    #[arg(long, allow_hyphen_values = true)]
    speed: Option<f64>,
    /// Simulated time per run, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Wobble-term weight of the blended pendulum torque.
    #[arg(long)]
    gamma: Option<f64>,
    /// Pendulum-angle weight of the blended pendulum torque.
    #[arg(long)]
    delta: Option<f64>,
    /// Integrator relative tolerance.
    #[arg(long)]
    rtol: Option<f64>,
    /// Integrator absolute tolerance.
    #[arg(long)]
    atol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Open-loop steady-circle run, or any scenario given with --scenario.
    Simulate(Common),
    /// Measure a trajectory CSV against the closed-form predictions.
    Analyze {
        input: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Operating point for the predictions; measured means by default.
        #[arg(long, allow_hyphen_values = true)]
        beta_deg: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        speed: Option<f64>,
    },
    /// Open-loop figure scenarios (all of them unless --scenario is given).
    Characterize(Common),
    /// Closed-loop run at the given blend, or figure scenarios via --scenario.
    Control(Common),
    /// Pass/fail report over an artifact directory.
    Report {
        #[arg(long, default_value = "artifacts")]
        out: PathBuf,
    },
    /// Teleoperation server; port from --port, else the environment.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

fn load_params(path: &Option<PathBuf>) -> CliResult<Option<RobotParams>> {
    path.as_ref()
        .map(|p| RobotParams::from_json_file(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))))
        .transpose()
}

fn overrides(c: &Common) -> CliResult<Overrides> {
    Ok(Overrides {
        params: load_params(&c.params)?,
        beta_deg: c.beta_deg,
        speed: c.speed,
        duration: c.duration,
        gamma: c.gamma,
        delta: c.delta,
        rtol: c.rtol,
        atol: c.atol,
    })
}

fn adhoc(name: &str, source: Source, initial: Initial, duration: f64, summary: Summary) -> Scenario {
    Scenario {
        name: name.into(),
        params: RobotParams::default(),
        gains: ControllerGains::default(),
        integrator: IntegratorConfig::default(),
        runs: vec![RunSpec { label: "run".into(), initial, source, duration, write_trajectory: true }],
        sweep: None,
        summary,
    }
}

/// The scenario named by --scenario (restricted to `family` when that is
/// nonempty), every member of `family` for `all`, else `default`.
fn pick(c: &Common, family: &[&str], default: Option<Scenario>) -> CliResult<Vec<Scenario>> {
    let o = overrides(c)?;
    let all = || family.iter().map(|n| Scenario::resolve(n)).collect::<CliResult<Vec<_>>>();
    let base = match c.scenario.as_deref() {
        Some("all") if !family.is_empty() => all()?,
        Some(name) => {
            let builtin = OPEN_LOOP.contains(&name) || CLOSED_LOOP.contains(&name);
            if builtin && !family.is_empty() && !family.contains(&name) {
                return Err(CliError::Usage(format!("scenario '{name}' is not available for this verb")));
            }
            vec![Scenario::resolve(name)?]
        }
        None => match default {
            Some(d) => vec![d],
            None => all()?,
        },
    };
    base.into_iter().map(|s| s.expand(&o)).collect()
}

fn run_all(scenarios: Vec<Scenario>, out: &std::path::Path) -> CliResult<()> {
    let mut worst: Option<CliError> = None;
    for s in scenarios {
        match run_scenario(&s, out) {
            Ok(m) => println!("{}: {} run(s) -> {}", s.name, m.runs.len(), scenario_dir(out, &s.name).display()),
            Err(e) => {
                error!("{e}");
                eprintln!("{}: {e}", s.name);
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let beta = c.beta_deg.unwrap_or(15.0);
            let summary = if beta == 0.0 { Summary::Paths } else { Summary::Circle };
            let initial = Initial { beta_deg: beta, speed: c.speed.unwrap_or(-1.0) };
            let default = adhoc("simulate", Source::Hold, initial, c.duration.unwrap_or(60.0), summary);
            run_all(pick(&c, &[], Some(default))?, &c.out)
        }
        Command::Analyze { input, params, beta_deg, speed } => {
            let robot = Robot::new(load_params(&params)?.unwrap_or_default())?;
            let a = analyze_file(&input, robot, beta_deg, speed)?;
            println!("{}", serde_json::to_string_pretty(&a)?);
            Ok(())
        }
        Command::Characterize(c) => run_all(pick(&c, &OPEN_LOOP, None)?, &c.out),
        Command::Control(c) => {
            let speed = c.speed.unwrap_or(-1.0);
            let beta = c.beta_deg.unwrap_or(15.0);
            let source = Source::Controller { speed, beta_des_deg: beta, gamma: 0.9, delta: 0.1, preamble: 5.0 };
            let default = adhoc("control", source, Initial { beta_deg: beta, speed }, c.duration.unwrap_or(60.0), Summary::Custom);
            run_all(pick(&c, &CLOSED_LOOP, Some(default))?, &c.out)
        }
        Command::Report { out } => {
            let report = summarize(&out)?;
            for s in &report.scenarios {
                println!("{} {}", if s.pass { "PASS" } else { "FAIL" }, s.scenario);
                for c in &s.checks {
                    println!("  {} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
            }
            println!("{} passed, {} failed; report in {}", report.passed, report.failed, out.join(spherebot_cli::report::REPORT_FILE).display());
            Ok(())
        }
        Command::Serve { port, params } => {
            let mut config = spherebot_teleop::ServerConfig::from_env();
            if let Some(p) = port {
                config.port = p;
            }
            if let Some(p) = load_params(&params)? {
                config.params = p;
            }
            config.params.validate()?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(format!("cannot start runtime: {e}")))?;
            rt.block_on(spherebot_teleop::serve(config)).map_err(|e| CliError::Usage(format!("server error: {e}")))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
