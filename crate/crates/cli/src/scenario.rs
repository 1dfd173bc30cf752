//! Scenario descriptions: the built-in figure protocols and JSON scenario
//! files share one schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spherebot_core::controller::ControllerGains;
use spherebot_core::integrator::IntegratorConfig;
use spherebot_core::maneuver::{ManeuverPlan, Segment};
use spherebot_core::RobotParams;

use crate::error::{CliError, CliResult};

/// Steady-circle initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Initial {
    pub beta_deg: f64,
    /// ψ̇, rad/s; negative rolls toward +X.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    /// No spin torque; pendulum held at its initial angle.
    Hold,
    /// Pendulum-only control for `preamble` seconds, then the blend.
    Controller {
        speed: f64,
        beta_des_deg: f64,
        gamma: f64,
        delta: f64,
        #[serde(default)]
        preamble: f64,
    },
    Maneuver { plan: ManeuverPlan },
}

impl Source {
    pub fn kind(&self) -> &'static str {
        match self {
            Source::Hold => "hold",
            Source::Controller { .. } => "controller",
            Source::Maneuver { .. } => "maneuver",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub label: String,
    pub initial: Initial,
    pub source: Source,
    /// s; maneuvers take theirs from the plan.
    pub duration: f64,
    #[serde(default = "yes")]
    pub write_trajectory: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Speed,
    BetaDeg,
}

/// Each base run is repeated once per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Which verdicts the report applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summary {
    Paths,
    Circle,
    Sweep,
    Ordering,
    Turn,
    TurnTrends,
    #[default]
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub params: RobotParams,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub summary: Summary,
}

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub params: Option<RobotParams>,
    pub beta_deg: Option<f64>,
    pub speed: Option<f64>,
    pub duration: Option<f64>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
}

pub const OPEN_LOOP: [&str; 6] = ["fig4", "fig5", "fig6", "fig7", "fig8", "fig10-11"];
pub const CLOSED_LOOP: [&str; 4] = ["fig12", "fig13", "fig14", "fig15"];

const FORWARD: f64 = -1.0;
const RUN: f64 = 60.0;
const PREAMBLE: f64 = 5.0;
const TURN_BETAS: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];
const TURN: (f64, f64, f64) = (5.0, 20.0, 25.0);

fn hold(label: &str, beta_deg: f64, speed: f64, duration: f64) -> RunSpec {
    RunSpec {
        label: label.into(),
        initial: Initial { beta_deg, speed },
        source: Source::Hold,
        duration,
        write_trajectory: true,
    }
}

fn controlled(gamma: f64, delta: f64) -> RunSpec {
    RunSpec {
        label: format!("gamma{gamma}_delta{delta}"),
        initial: Initial { beta_deg: 15.0, speed: FORWARD },
        source: Source::Controller { speed: FORWARD, beta_des_deg: 15.0, gamma, delta, preamble: PREAMBLE },
        duration: RUN,
        write_trajectory: true,
    }
}

fn turn(label: &str, beta_deg: f64, gamma: f64, delta: f64) -> RunSpec {
    let mut plan = ManeuverPlan::turn(FORWARD, beta_deg.to_radians(), TURN.0, TURN.1, TURN.2);
    for seg in &mut plan.segments {
        seg.blend = Some((gamma, delta));
    }
    RunSpec {
        label: label.into(),
        initial: Initial { beta_deg: 0.0, speed: FORWARD },
        source: Source::Maneuver { plan },
        duration: TURN.0 + TURN.1 + TURN.2,
        write_trajectory: true,
    }
}

fn named(name: &str, runs: Vec<RunSpec>, sweep: Option<Sweep>, summary: Summary) -> Scenario {
    Scenario {
        name: name.into(),
        params: RobotParams::default(),
        gains: ControllerGains::default(),
        integrator: IntegratorConfig::default(),
        runs,
        sweep,
        summary,
    }
}

/// Built-in protocols by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    let circle = |b: f64, w: f64| named(name, vec![hold("run", b, w * FORWARD, RUN)], None, Summary::Circle);
    let s = match name {
        "fig4" => named(
            name,
            [1.0, 2.0, 5.0, 10.0].iter().map(|&w| hold(&format!("speed{w}"), 15.0, w * FORWARD, RUN)).collect(),
            None,
            Summary::Paths,
        ),
        "fig5" => circle(5.0, 1.0),
        "fig6" => circle(15.0, 1.0),
        "fig7" => circle(5.0, 10.0),
        "fig8" => circle(15.0, 10.0),
        "fig10-11" => {
            let mut runs = vec![];
            for w in 1..=20 {
                let mut r = hold(&format!("beta5_speed{w}"), 5.0, f64::from(w) * FORWARD, RUN);
                r.write_trajectory = false;
                runs.push(r);
            }
            for w in [1.0, 5.0, 10.0] {
                for k in 1..=12 {
                    let b = 2.5 * f64::from(k);
                    let mut r = hold(&format!("speed{w}_beta{b}"), b, w * FORWARD, RUN);
                    r.write_trajectory = false;
                    runs.push(r);
                }
            }
            named(name, runs, None, Summary::Sweep)
        }
        "fig12" => named(name, vec![controlled(0.0, 1.0), controlled(1.0, 0.0), controlled(0.9, 0.1)], None, Summary::Ordering),
        "fig13" => named(
            name,
            vec![turn("wobbly", 15.0, 0.0, 1.0), turn("wobble_free", 15.0, 0.9, 0.1)],
            None,
            Summary::Turn,
        ),
        "fig14" | "fig15" => {
            let mut runs = vec![];
            for (tag, g, d) in [("wobbly", 0.0, 1.0), ("wobble_free", 0.9, 0.1)] {
                for b in TURN_BETAS {
                    let mut r = turn(&format!("{tag}_beta{b}"), b, g, d);
                    r.write_trajectory = name == "fig14";
                    runs.push(r);
                }
            }
            named(name, runs, None, if name == "fig14" { Summary::Paths } else { Summary::TurnTrends })
        }
        _ => return None,
    };
    Some(s)
}

impl Scenario {
    pub fn from_json_file(path: impl AsRef<Path>) -> CliResult<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| CliError::Usage(format!("cannot read scenario {}: {e}", path.as_ref().display())))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad scenario file: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    /// A built-in name or a path to a JSON scenario file.
    pub fn resolve(name_or_path: &str) -> CliResult<Self> {
        if let Some(s) = builtin(name_or_path) {
            return Ok(s);
        }
        if Path::new(name_or_path).is_file() {
            return Self::from_json_file(name_or_path);
        }
        Err(CliError::Usage(format!(
            "unknown scenario '{name_or_path}'; built-ins are {}",
            OPEN_LOOP.iter().chain(CLOSED_LOOP.iter()).copied().collect::<Vec<_>>().join(", ")
        )))
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Usage(format!("scenario name '{}' is not a plain identifier", self.name)));
        }
        self.params.validate()?;
        self.gains.validate()?;
        self.integrator.validate()?;
        if self.runs.is_empty() {
            return Err(CliError::Usage("scenario has no runs".into()));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() || sw.values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Usage("sweep values must be a nonempty list of finite numbers".into()));
            }
        }
        let mut labels = std::collections::HashSet::new();
        for r in &self.runs {
            if !labels.insert(r.label.as_str()) {
                return Err(CliError::Usage(format!("duplicate run label '{}'", r.label)));
            }
            if !(r.duration.is_finite() && r.duration > 0.0) {
                return Err(CliError::Usage(format!("run '{}' needs a positive duration", r.label)));
            }
            if !r.initial.beta_deg.is_finite() || !r.initial.speed.is_finite() {
                return Err(CliError::Usage(format!("run '{}' has a non-finite initial condition", r.label)));
            }
            match &r.source {
                Source::Hold => {}
                Source::Controller { gamma, delta, preamble, .. } => {
                    ControllerGains::with_blend(*gamma, *delta).validate()?;
                    if !(preamble.is_finite() && *preamble >= 0.0 && *preamble < r.duration) {
                        return Err(CliError::Usage(format!("run '{}' preamble must lie inside the run", r.label)));
                    }
                }
                Source::Maneuver { plan } => plan.validate()?,
            }
        }
        Ok(())
    }

    /// Applies a sweep, if any, then the overrides; validates the result.
    pub fn expand(mut self, o: &Overrides) -> CliResult<Self> {
        if let Some(sw) = self.sweep.take() {
            let mut runs = vec![];
            for base in &self.runs {
                for &v in &sw.values {
                    let mut r = base.clone();
                    let tag = match sw.variable {
                        SweepVariable::Speed => "speed",
                        SweepVariable::BetaDeg => "beta",
                    };
                    r.label = format!("{}_{tag}{v}", base.label);
                    apply_sweep(&mut r, sw.variable, v);
                    runs.push(r);
                }
            }
            self.runs = runs;
        }
        if let Some(p) = o.params {
            self.params = p;
        }
        if let Some(t) = o.rtol {
            self.integrator.rtol = t;
        }
        if let Some(t) = o.atol {
            self.integrator.atol = t;
        }
        for r in &mut self.runs {
            if let Some(b) = o.beta_deg {
                apply_sweep(r, SweepVariable::BetaDeg, b);
            }
            if let Some(w) = o.speed {
                apply_sweep(r, SweepVariable::Speed, w);
            }
            if let Some(d) = o.duration {
                set_duration(r, d);
            }
            if let Source::Controller { gamma, delta, .. } = &mut r.source {
                *gamma = o.gamma.unwrap_or(*gamma);
                *delta = o.delta.unwrap_or(*delta);
            }
            if let Source::Maneuver { plan } = &mut r.source {
                if o.gamma.is_some() || o.delta.is_some() {
                    for seg in &mut plan.segments {
                        let (g, d) = seg.blend.unwrap_or((self.gains.gamma, self.gains.delta));
                        seg.blend = Some((o.gamma.unwrap_or(g), o.delta.unwrap_or(d)));
                    }
                }
            }
        }
        self.validate()?;
        Ok(self)
    }
}

fn apply_sweep(r: &mut RunSpec, variable: SweepVariable, v: f64) {
    match variable {
        SweepVariable::Speed => {
            r.initial.speed = v;
            match &mut r.source {
                Source::Hold => {}
                Source::Controller { speed, .. } => *speed = v,
                Source::Maneuver { plan } => plan.segments.iter_mut().for_each(|s| s.psi_dot_des = v),
            }
        }
        SweepVariable::BetaDeg => match &mut r.source {
            Source::Hold => r.initial.beta_deg = v,
            Source::Controller { beta_des_deg, .. } => {
                r.initial.beta_deg = v;
                *beta_des_deg = v;
            }
            // the arcs lean, the straights stay upright
            Source::Maneuver { plan } => plan
                .segments
                .iter_mut()
                .filter(|s| s.beta_des != 0.0)
                .for_each(|s: &mut Segment| s.beta_des = v.to_radians()),
        },
    }
}

fn set_duration(r: &mut RunSpec, d: f64) {
    r.duration = d;
    if let Source::Maneuver { plan } = &mut r.source {
        // stretch the segments proportionally
        let total = plan.max_duration();
        for seg in &mut plan.segments {
            match &mut seg.exit {
                spherebot_core::maneuver::SegmentExit::Duration { seconds } => *seconds *= d / total,
                spherebot_core::maneuver::SegmentExit::HeadingChange { timeout, .. } => *timeout *= d / total,
            }
        }
    }
}
