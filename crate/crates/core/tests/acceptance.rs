//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Run with
//! `cargo test -p spherebot-core --test acceptance`.

use std::process::ExitCode;
use std::thread;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use spherebot_core::analysis::{precession_rate, radius_of_curvature, reduced_model_residuals, wobble_amplitude, wobble_frequency};
use spherebot_core::controller::{wobble_torque, ControllerConfig, ControllerGains, SINGULARITY_FLOOR};
use spherebot_core::dynamics::{affine_decomposition, enforce_rolling, state_derivative, EomSystem, THETA};
use spherebot_core::integrator::IntegratorConfig;
use spherebot_core::maneuver::{run_maneuver, turn_metrics, ManeuverPlan, Segment};
use spherebot_core::measure::{fit_circle, measure_circle, measure_circle_window, peak_to_peak, CircleMeasurement};
use spherebot_core::simulator::{constraint_drift, integrate, pendulum_hold, steady_circle_state, Trajectory};
use spherebot_core::{ControlInput, Robot, Setpoints, State};

const DRIFT_BOUND: f64 = 1e-6;
const ENERGY_BOUND: f64 = 1e-6;
const REDUCED_BOUND: f64 = 0.01;
const AMPLITUDE_VS_FULL: f64 = 0.10;
const AMPLITUDE_VS_BETA: f64 = 0.15;
const FREQUENCY_TOL: f64 = 0.05;
const SLOPE_FREQUENCY: (f64, f64) = (1.0, 0.05);
const SLOPE_AMPLITUDE: (f64, f64) = (-2.0, 0.1);
const SLOPE_RADIUS: (f64, f64) = (2.0, 0.1);
const RADIUS_TOL_FAST: f64 = 0.10;
const RADIUS_TOL_SLOW: f64 = 0.15;
const PRECESSION_TOL: f64 = 0.10;
const WOBBLY_AMPLITUDE_TOL: f64 = 0.15;
const WOBBLE_REDUCTION: f64 = 0.05;
const BLEND_RADIUS_TOL: f64 = 0.10;
const SETTLED_THETA_DEG: f64 = 0.2;
const SETTLED_PHI_DOT: f64 = 0.01;
const LINEARIZATION_TOL: f64 = 1e-9;
const LINEARIZATION_STATES: usize = 100;

const RUN: f64 = 60.0;
const PREAMBLE: f64 = 5.0;
/// Controlled runs are judged from here on, s.
const POST_TRANSIENT: f64 = 20.0;
const TURN: (f64, f64, f64) = (5.0, 20.0, 25.0);
const SPEED: f64 = -1.0;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, outcome: Result<(bool, String), String>) -> Verdict {
    match outcome {
        Ok((pass, detail)) => Verdict { name, pass, detail },
        Err(detail) => Verdict { name, pass: false, detail },
    }
}

fn rel(measured: f64, predicted: f64) -> f64 {
    (measured - predicted).abs() / predicted.abs()
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

fn hold_run(beta_deg: f64, psi_dot: f64, duration: f64, robot: &Robot) -> Result<Trajectory, String> {
    let x0 = steady_circle_state(deg(beta_deg), psi_dot, robot).map_err(|e| e.to_string())?;
    integrate(robot, &x0, &mut pendulum_hold(), (0.0, duration), &IntegratorConfig::default()).map_err(|e| e.to_string())
}

fn hold_measure(beta_deg: f64, psi_dot: f64, robot: &Robot) -> Result<CircleMeasurement, String> {
    measure_circle(&hold_run(beta_deg, psi_dot, RUN, robot)?).map_err(|e| e.to_string())
}

fn constraint_fidelity(robot: &Robot) -> Result<(bool, String), String> {
    let drift = constraint_drift(&hold_run(15.0, SPEED, RUN, robot)?);
    Ok((drift < DRIFT_BOUND, format!("max residual {drift:.3e} m/s (bound {DRIFT_BOUND:e})")))
}

fn energy_conservation(robot: &Robot) -> Result<(bool, String), String> {
    let mut s = State { beta: 0.3, theta: 0.1, dpsi: -2.0, dphi: 0.3, dbeta: 0.5, dtheta: -0.2, ..Default::default() };
    enforce_rolling(&mut s, robot);
    let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-12);
    let traj = integrate(robot, &s, &mut ControlInput::new(0.0, 0.0), (0.0, 30.0), &cfg).map_err(|e| e.to_string())?;
    let e = traj.energies();
    let drift = e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max) / e[0].abs();
    Ok((drift < ENERGY_BOUND, format!("relative drift {drift:.3e} (bound {ENERGY_BOUND:e})")))
}

fn reduced_residuals(robot: &Robot) -> Result<(bool, String), String> {
    let mut pass = true;
    let mut detail = vec![];
    for (b, w) in [(5.0, SPEED), (15.0, 10.0 * SPEED)] {
        let traj = hold_run(b, w, 10.0, robot)?;
        let mut worst = [0.0f64; 3];
        for smp in traj.grid() {
            let eom = EomSystem::new(&smp.state, robot).map_err(|e| e.to_string())?;
            let sol = eom.solve(eom.resolve(&pendulum_hold()));
            for (k, r) in reduced_model_residuals(&smp.state, &sol.qdd, robot).iter().enumerate() {
                worst[k] = worst[k].max(r.relative());
            }
        }
        pass &= worst.iter().all(|&r| r < REDUCED_BOUND);
        detail.push(format!("β={b}° ψ̇={w}: {:.1e}/{:.1e}/{:.1e}", worst[0], worst[1], worst[2]));
    }
    Ok((pass, format!("{} (bound {REDUCED_BOUND})", detail.join(", "))))
}

fn wobble_amplitude_check(robot: &Robot) -> Result<(bool, String), String> {
    let beta = deg(5.0);
    let m = hold_measure(5.0, SPEED, robot)?;
    let full = rel(m.amplitude, wobble_amplitude(beta, SPEED, robot));
    let low = rel(m.amplitude, -beta);
    Ok((
        full < AMPLITUDE_VS_FULL && low < AMPLITUDE_VS_BETA,
        format!("A={:.5} rad, {:.2}% from closed form, {:.2}% from -β", m.amplitude, 100.0 * full, 100.0 * low),
    ))
}

fn wobble_frequency_check(robot: &Robot) -> Result<(bool, String), String> {
    let mut pass = true;
    let mut detail = vec![];
    for speed in [1.0, 5.0, 10.0] {
        let w = speed * SPEED;
        let m = hold_measure(5.0, w, robot)?;
        let err = rel(m.frequency, wobble_frequency(w, robot).map_err(|e| e.to_string())?);
        pass &= err < FREQUENCY_TOL;
        detail.push(format!("|ψ̇|={speed}: {:.2}%", 100.0 * err));
    }
    Ok((pass, detail.join(", ")))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn scaling_laws(robot: &Robot) -> Result<(bool, String), String> {
    let speeds = [5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0];
    let mut rows = vec![];
    for &s in &speeds {
        rows.push(hold_measure(5.0, s * SPEED, robot)?);
    }
    let column = |f: fn(&CircleMeasurement) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let slopes = [
        ("ω", slope(&speeds, &column(|m| m.frequency)), SLOPE_FREQUENCY),
        ("|A|", slope(&speeds, &column(|m| m.amplitude)), SLOPE_AMPLITUDE),
        ("|ρ|", slope(&speeds, &column(|m| m.radius)), SLOPE_RADIUS),
    ];
    let pass = slopes.iter().all(|(_, s, (target, tol))| (s - target).abs() <= *tol);
    let detail = slopes
        .iter()
        .map(|(name, s, (target, tol))| format!("{name} slope {s:.3} (want {target}±{tol})"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok((pass, detail))
}

fn radius_check(robot: &Robot) -> Result<(bool, String), String> {
    let mut pass = true;
    let mut detail = vec![];
    for (b, w, tol) in [(5.0, 10.0 * SPEED, RADIUS_TOL_FAST), (15.0, SPEED, RADIUS_TOL_SLOW)] {
        let m = hold_measure(b, w, robot)?;
        let predicted = radius_of_curvature(deg(b), w, robot).value().ok_or("straight-line prediction")?;
        let err = rel(m.radius, predicted);
        pass &= err < tol;
        detail.push(format!("β={b}° ψ̇={w}: ρ={:.4} m vs {predicted:.4} m ({:.2}%)", m.radius, 100.0 * err));
    }
    Ok((pass, detail.join(", ")))
}

fn precession_check(robot: &Robot) -> Result<(bool, String), String> {
    let mut pass = true;
    let mut detail = vec![];
    for (b, w) in [(5.0, 10.0 * SPEED), (15.0, SPEED)] {
        let m = hold_measure(b, w, robot)?;
        let err = rel(m.mean_phi_dot, precession_rate(m.mean_theta, m.mean_psi_dot, robot));
        pass &= err < PRECESSION_TOL;
        detail.push(format!("β={b}° ψ̇={w}: φ̇={:.5} ({:.2}%)", m.mean_phi_dot, 100.0 * err));
    }
    Ok((pass, detail.join(", ")))
}

struct ControlledRun {
    p2p_theta_dot: f64,
    radius: f64,
    amplitude: Option<f64>,
}

fn controlled_run(gamma: f64, delta: f64, robot: &Robot) -> Result<ControlledRun, String> {
    let beta = deg(15.0);
    let x0 = steady_circle_state(beta, SPEED, robot).map_err(|e| e.to_string())?;
    let plan = ManeuverPlan {
        segments: vec![
            Segment::timed("wobbly", PREAMBLE, SPEED, beta).with_blend(0.0, 1.0),
            Segment::timed("controlled", RUN - PREAMBLE, SPEED, beta).with_blend(gamma, delta),
        ],
    };
    let traj = run_maneuver(robot, &plan, &ControllerConfig::default(), &x0, &IntegratorConfig::default())
        .map_err(|e| format!("({gamma},{delta}) run failed: {e}"))?;
    let post: Vec<_> = traj.grid().filter(|s| s.t >= POST_TRANSIENT).collect();
    let pts: Vec<[f64; 2]> = post.iter().map(|s| [s.state.x, s.state.z]).collect();
    let fit = fit_circle(&pts).map_err(|e| e.to_string())?;
    Ok(ControlledRun {
        p2p_theta_dot: peak_to_peak(post.iter().map(|s| s.state.dtheta)),
        radius: fit.radius,
        amplitude: measure_circle_window(&traj, POST_TRANSIENT, RUN).ok().map(|m| m.amplitude),
    })
}

fn controller_ordering(robot: &Robot) -> Result<(bool, String), String> {
    let wobbly = controlled_run(0.0, 1.0, robot)?;
    let predicted = wobble_amplitude(deg(15.0), SPEED, robot);
    let amplitude = wobbly.amplitude.ok_or("(0,1) run shows no measurable wobble")?;
    let amp_ok = rel(amplitude, predicted) <= WOBBLY_AMPLITUDE_TOL;
    let mut detail = vec![format!("(0,1) A={amplitude:.4} vs {predicted:.4}, p2p θ̇={:.3}, ρ={:.4}", wobbly.p2p_theta_dot, wobbly.radius)];
    let mut pass = amp_ok;
    for (g, d) in [(1.0, 0.0), (0.9, 0.1)] {
        match controlled_run(g, d, robot) {
            Ok(run) => {
                let reduced = run.p2p_theta_dot < WOBBLE_REDUCTION * wobbly.p2p_theta_dot;
                let radius_ok = if g == 1.0 {
                    run.radius > wobbly.radius
                } else {
                    rel(run.radius, wobbly.radius) <= BLEND_RADIUS_TOL
                };
                pass &= reduced && radius_ok;
                detail.push(format!("({g},{d}) p2p θ̇={:.3e}, ρ={:.4}", run.p2p_theta_dot, run.radius));
            }
            Err(e) => {
                pass = false;
                detail.push(e);
            }
        }
    }
    Ok((pass, detail.join("; ")))
}

fn turn_plan(beta_deg: f64) -> ManeuverPlan {
    ManeuverPlan::turn(SPEED, deg(beta_deg), TURN.0, TURN.1, TURN.2)
}

fn turning_maneuver(robot: &Robot) -> Result<(bool, String), String> {
    let x0 = steady_circle_state(0.0, SPEED, robot).map_err(|e| e.to_string())?;
    let traj = run_maneuver(robot, &turn_plan(15.0), &ControllerConfig::default(), &x0, &IntegratorConfig::default())
        .map_err(|e| e.to_string())?;
    let end = traj.t_end();
    let tail: Vec<_> = traj.grid().filter(|s| s.t >= end - 10.0).collect();
    let theta = tail.iter().map(|s| s.state.theta.abs()).fold(0.0, f64::max).to_degrees();
    let phi_dot = tail.iter().map(|s| s.state.dphi.abs()).fold(0.0, f64::max);
    Ok((
        theta <= SETTLED_THETA_DEG && phi_dot <= SETTLED_PHI_DOT,
        format!("last 10 s: max|θ|={theta:.4}°, max|φ̇|={phi_dot:.5} rad/s"),
    ))
}

fn turn_trends(robot: &Robot) -> Result<(bool, String), String> {
    let x0 = steady_circle_state(0.0, SPEED, robot).map_err(|e| e.to_string())?;
    let mut rows = vec![];
    for b in [5.0, 10.0, 15.0, 20.0, 25.0, 30.0] {
        let traj = run_maneuver(robot, &turn_plan(b), &ControllerConfig::default(), &x0, &IntegratorConfig::default())
            .map_err(|e| format!("β_des={b}°: {e}"))?;
        rows.push(turn_metrics(&traj).map_err(|e| e.to_string())?);
    }
    let deflection_up = rows.windows(2).all(|w| w[1].heading_deflection > w[0].heading_deflection);
    let error_down = rows.windows(2).all(|w| w[1].radius_error_pct < w[0].radius_error_pct);
    let table = rows
        .iter()
        .map(|m| format!("{:.0}°:{:.2}°/{:.1}%", m.beta_des.to_degrees(), m.heading_deflection.to_degrees(), m.radius_error_pct))
        .collect::<Vec<_>>()
        .join(" ");
    Ok((
        deflection_up && error_down,
        format!("deflection increasing: {deflection_up}, radius error decreasing: {error_down} [{table}]"),
    ))
}

fn random_state(rng: &mut StdRng, robot: &Robot) -> State {
    let mut s = State {
        phi: rng.random_range(-3.0..3.0),
        theta: rng.random_range(-0.6..0.6),
        psi: rng.random_range(-3.0..3.0),
        beta: rng.random_range(-0.6..0.6),
        x: rng.random_range(-5.0..5.0),
        z: rng.random_range(-5.0..5.0),
        dphi: rng.random_range(-2.0..2.0),
        dtheta: rng.random_range(-2.0..2.0),
        dpsi: rng.random_range(-10.0..10.0),
        dbeta: rng.random_range(-2.0..2.0),
        ..Default::default()
    };
    enforce_rolling(&mut s, robot);
    s
}

fn exact_linearization(robot: &Robot) -> Result<(bool, String), String> {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let gains = ControllerGains::default();
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < LINEARIZATION_STATES {
        let s = random_state(&mut rng, robot);
        let Ok(affine) = affine_decomposition(&s, robot) else { continue };
        if affine.g_at(8, 2).abs() < 1e3 * SINGULARITY_FLOOR {
            continue;
        }
        let sp = Setpoints { theta_dot_des: rng.random_range(-1.0..1.0), ..Setpoints::new(rng.random_range(-5.0..5.0), 0.2) };
        let t_w = wobble_torque(&s, &sp, &gains, &affine).map_err(|e| e.to_string())?;
        let d = state_derivative(&s, ControlInput::new(rng.random_range(-5.0..5.0), t_w), robot).map_err(|e| e.to_string())?;
        let v = gains.kp_thetadot * (sp.theta_dot_des - s.dtheta);
        worst = worst.max((d[6 + THETA] - v).abs());
        tested += 1;
    }
    Ok((worst < LINEARIZATION_TOL, format!("{tested} states, worst |θ̈ − v_θ| = {worst:.2e}")))
}

type Criterion = fn(&Robot) -> Result<(bool, String), String>;

fn main() -> ExitCode {
    let criteria: [(&'static str, Criterion); 12] = [
        ("constraint fidelity", constraint_fidelity),
        ("energy conservation", energy_conservation),
        ("reduced-model residuals", reduced_residuals),
        ("wobble amplitude", wobble_amplitude_check),
        ("wobble frequency", wobble_frequency_check),
        ("scaling laws", scaling_laws),
        ("radius of curvature", radius_check),
        ("precession", precession_check),
        ("controller scenario ordering", controller_ordering),
        ("turning maneuver", turning_maneuver),
        ("turn deflection and radius-error trends", turn_trends),
        ("exact linearization", exact_linearization),
    ];
    let robot = Robot::default();
    let verdicts: Vec<Verdict> = thread::scope(|scope| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|&(name, check)| {
                let robot = &robot;
                scope.spawn(move || verdict(name, check(robot)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    let mut failed = 0;
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
