//! Horizon solver: successive linearization around the rollout trajectory
//! with a trust region, condensed to the decision sequence via forward
//! sensitivities. Each iteration builds a convex QP (quadratic cost model
//! plus slack-relaxed linearized constraints) and accepts steps by an
//! exact-penalty merit test on the true nonlinear rollout.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;

use super::model::{
    predict_dynamics_with, rollout, step_cost, step_powers_with, MpcState, PredictionModel,
    PreviewPoint, Rollout,
};
use super::qp::{solve_box_qp, BoxQp, HingeRow};
use super::{HorizonSolution, MpcConfig, MpcDecision, SolveStatus, SolverClock};
use crate::linalg::Mat;

/// Variable scales for the decision vector (force, cabin setpoint, battery
/// setpoint): the QP works in these units.
const U_SCALES: [f64; 3] = [1000.0, 10.0, 10.0];
/// State scales (soc, battery temperature, speed) for constraint residuals.
const X_SCALES: [f64; 3] = [1.0, 10.0, 10.0];
/// Distance scale for the progress constraint [m].
const D_SCALE: f64 = 1.0e4;

/// Constraint-tightening margin applied to linearized rows, as a fraction of
/// the constraint tolerance.
const TIGHTEN_FRACTION: f64 = 0.5;
/// Levenberg damping on the scaled QP Hessian.
const LEVENBERG: f64 = 1e-3;
/// Hard-constraint exact-penalty weight in the merit function (scaled
/// violation units).
const PEN_HARD: f64 = 1e7;
/// Quadratic hinge curvature inside the QP direction generator; the linear
/// hinge weights mirror the merit penalties so QP stationary points satisfy
/// the tightened rows exactly.
const HINGE_QUAD_HARD: f64 = 1e6;
const HINGE_QUAD_WINDOW: f64 = 1e5;
/// Interior tightening of the arrival-window rows [K]: the sampled-data loop
/// holds the plant between solves, so predicted states aim inside the window
/// by this margin to absorb inter-sample drift and the P-control offset.
const WINDOW_TIGHTEN_K: f64 = 0.30;

struct StepLin {
    /// dx(k+1)/dx(k)
    a: [[f64; 3]; 3],
    /// dx(k+1)/du(k)
    b: [[f64; 3]; 3],
    /// cost gradient wrt x(k)
    gx: [f64; 3],
    /// cost gradient wrt u(k)
    gu: [f64; 3],
    /// curvature of the heater power along the setpoint direction
    heater_curv: f64,
    /// curvature of the hvac surrogate along the cabin setpoint
    hvac_curv: f64,
}

#[cfg(feature = "std")]
fn solver_debug() -> bool {
    std::env::var_os("AEVSIM_SOLVER_DEBUG").is_some()
}

#[cfg(not(feature = "std"))]
#[allow(dead_code)]
fn solver_debug() -> bool {
    false
}

macro_rules! sdebug {
    ($($arg:tt)*) => {
        #[cfg(feature = "std")]
        {
            if solver_debug() {
                std::eprintln!($($arg)*);
            }
        }
    };
}

fn decision_as_array(u: &MpcDecision) -> [f64; 3] {
    [u.f_propulsion, u.t_cabin_set, u.t_batt_set]
}

fn decision_from_array(a: [f64; 3]) -> MpcDecision {
    MpcDecision { f_propulsion: a[0], t_cabin_set: a[1], t_batt_set: a[2] }
}

/// Central-difference linearization of one step plus local cost derivatives.
fn linearize_step(
    model: &PredictionModel,
    x: &MpcState,
    u: &MpcDecision,
    w: &PreviewPoint,
    weights_norm: &[f64; 3],
    dt: f64,
) -> Result<StepLin, CoreError> {
    const HX: [f64; 3] = [1e-6, 1e-3, 1e-4];
    const HU: [f64; 3] = [1e-2, 1e-3, 1e-3];

    // smoothed actuator laws keep the derivatives alive through saturation;
    // values along the accepted trajectory always come from the exact model
    let eval_x = |xa: [f64; 3], ua: [f64; 3]| -> Result<([f64; 3], f64), CoreError> {
        let xs = MpcState::from_array(xa);
        let ud = decision_from_array(ua);
        let nx = predict_dynamics_with(model, &xs, &ud, w, dt, true)?;
        let p = step_powers_with(model, &xs, &ud, w, true)?;
        Ok((nx.to_array(), step_cost(&p, weights_norm, dt)))
    };

    let xa = x.to_array();
    let ua = decision_as_array(u);
    let (x_nom, _c_nom) = eval_x(xa, ua)?;

    let mut a = [[0.0; 3]; 3];
    let mut b = [[0.0; 3]; 3];
    let mut gx = [0.0; 3];
    let mut gu = [0.0; 3];

    let probe = |base_x: [f64; 3],
                     base_u: [f64; 3],
                     j: usize,
                     on_x: bool,
                     h: f64|
     -> Result<([f64; 3], f64, f64), CoreError> {
        let (mut xp, mut up) = (base_x, base_u);
        if on_x {
            xp[j] += h;
        } else {
            up[j] += h;
        }
        match eval_x(xp, up) {
            Ok((nx, c)) => Ok((nx, c, h)),
            Err(_) if h > 0.0 => {
                // one-sided fallback towards the interior
                let (mut xm, mut um) = (base_x, base_u);
                if on_x {
                    xm[j] -= h;
                } else {
                    um[j] -= h;
                }
                let (nx, c) = eval_x(xm, um)?;
                Ok((nx, c, -h))
            }
            Err(e) => Err(e),
        }
    };

    for j in 0..3 {
        let (xp, cp, hp) = probe(xa, ua, j, true, HX[j])?;
        let (xm, cm, hm) = probe(xa, ua, j, true, -HX[j])?;
        let span = hp - hm;
        for i in 0..3 {
            a[i][j] = if span != 0.0 { (xp[i] - xm[i]) / span } else { 0.0 };
        }
        gx[j] = if span != 0.0 { (cp - cm) / span } else { 0.0 };

        let (xpu, cpu, hpu) = probe(xa, ua, j, false, HU[j])?;
        let (xmu, cmu, hmu) = probe(xa, ua, j, false, -HU[j])?;
        let span_u = hpu - hmu;
        for i in 0..3 {
            b[i][j] = if span_u != 0.0 { (xpu[i] - xmu[i]) / span_u } else { 0.0 };
        }
        gu[j] = if span_u != 0.0 { (cpu - cmu) / span_u } else { 0.0 };
    }
    let _ = x_nom;

    // heater power curvature along the battery setpoint (numeric second
    // difference, floored at zero to stay convex)
    let hp_of = |beta: f64| {
        let i = model.heater_current_smoothed(beta, x.t_batt);
        i * i * model.thermal.r_heater
    };
    let hb = 0.5;
    let heater_curv = ((hp_of(u.t_batt_set + hb) - 2.0 * hp_of(u.t_batt_set)
        + hp_of(u.t_batt_set - hb))
        / (hb * hb))
        .max(0.0);

    let hvac_curv = match &model.hvac {
        super::model::HvacPower::Surrogate(s) => s.d2_power_d_set2(),
        super::model::HvacPower::Full { .. } => 0.0,
    };

    Ok(StepLin { a, b, gx, gu, heater_curv, hvac_curv })
}

/// Measured violations of a rollout, in scaled units.
struct Violations {
    hard_sum: f64,
    hard_max: f64,
    window_sum: f64,
    /// Largest terminal-window violation in kelvin.
    window_max_kelvin: f64,
}

struct ConstraintSpec {
    /// Horizon steps (1-based) where the arrival window applies.
    window_steps: Vec<usize>,
    /// Required horizon travel [m], if the progress constraint is active.
    required_distance: Option<f64>,
}

fn build_constraint_spec(config: &MpcConfig, t_now: f64, x_dist_now: f64) -> ConstraintSpec {
    let n = config.n_horizon;
    let dt = config.dt_mpc;
    let arr = &config.arrival;
    let mut window_steps = Vec::new();
    for k in 1..=n {
        if t_now + k as f64 * dt >= arr.t_final - arr.window_ramp {
            window_steps.push(k);
        }
    }
    let remaining_dist = arr.distance_target - x_dist_now;
    let remaining_time = arr.t_final - t_now;
    let required_distance = if remaining_dist > 0.0 && remaining_time > dt {
        let t_adj = (remaining_time * (1.0 - arr.progress_margin)).max(dt);
        Some(remaining_dist * (n as f64 * dt) / t_adj)
    } else {
        None
    };
    ConstraintSpec { window_steps, required_distance }
}

fn measure_violations(config: &MpcConfig, spec: &ConstraintSpec, r: &Rollout) -> Violations {
    let b = &config.bounds;
    let dt = config.dt_mpc;
    let mut hard_sum = 0.0;
    let mut hard_max: f64 = 0.0;
    let mut window_sum = 0.0;
    let mut window_max: f64 = 0.0;
    let boxes = [b.soc, b.t_batt, b.v];
    for (k, x) in r.states.iter().enumerate().skip(1) {
        let xs = x.to_array();
        for i in 0..3 {
            let v = ((boxes[i].0 - xs[i]).max(xs[i] - boxes[i].1).max(0.0)) / X_SCALES[i];
            hard_sum += v;
            hard_max = hard_max.max(v);
        }
        if spec.window_steps.contains(&k) {
            let (lo, hi) = config.arrival.t_batt_window;
            let v_kelvin = (lo - x.t_batt).max(x.t_batt - hi).max(0.0);
            window_sum += v_kelvin / X_SCALES[1];
            window_max = window_max.max(v_kelvin);
        }
    }
    if let Some(req) = spec.required_distance {
        let travel: f64 = r.states.iter().skip(1).map(|x| x.v * dt).sum();
        let v = (req - travel).max(0.0) / D_SCALE;
        hard_sum += v;
        hard_max = hard_max.max(v);
    }
    Violations { hard_sum, hard_max, window_sum, window_max_kelvin: window_max }
}

fn clamp_decisions(config: &MpcConfig, z: &mut [MpcDecision]) {
    let b = &config.bounds;
    for u in z {
        u.f_propulsion = u.f_propulsion.clamp(b.f_propulsion.0, b.f_propulsion.1);
        u.t_cabin_set = u.t_cabin_set.clamp(b.t_cabin_set.0, b.t_cabin_set.1);
        u.t_batt_set = u.t_batt_set.clamp(b.t_batt_set.0, b.t_batt_set.1);
    }
}

/// Solve the horizon problem from a warm-start decision sequence.
///
/// The returned point satisfies the linearized-then-verified state boxes and
/// progress constraint on its true rollout within the constraint tolerance
/// whenever that is achievable (status `Optimal`/`MaxIterFeasible`);
/// otherwise the minimal-slack point found is returned with status
/// `InfeasibleRelaxed`. Cost never exceeds the feasibility-repaired warm
/// start's cost. Deterministic for identical inputs.
#[allow(clippy::too_many_arguments)]
pub fn solve_horizon(
    config: &MpcConfig,
    model: &PredictionModel,
    x0: &MpcState,
    preview: &[PreviewPoint],
    t_now: f64,
    x_dist_now: f64,
    warm_start: &[MpcDecision],
    clock: &dyn SolverClock,
) -> Result<HorizonSolution, CoreError> {
    let n = config.n_horizon;
    if preview.len() < n {
        return Err(CoreError::Solver {
            what: alloc::format!("preview covers {} steps, horizon needs {n}", preview.len()),
        });
    }
    let dt = config.dt_mpc;
    let wn = [
        config.weights.w1 / super::model::NOMINAL_HVAC_W,
        config.weights.w2 / super::model::NOMINAL_PROPULSION_W,
        config.weights.w3 / super::model::NOMINAL_HEATER_W,
    ];
    let pen_window =
        1.0e3 * config.weights.w1.max(config.weights.w2).max(config.weights.w3).max(1e-12);
    let spec = build_constraint_spec(config, t_now, x_dist_now);
    let tol = config.solver.constraint_tolerance;
    let margin = TIGHTEN_FRACTION * tol;

    // feasibility-repair the warm start onto the input boxes
    let mut z: Vec<MpcDecision> = warm_start.iter().cloned().take(n).collect();
    while z.len() < n {
        let last = z.last().cloned().unwrap_or(MpcDecision {
            f_propulsion: 0.0,
            t_cabin_set: config.bounds.t_cabin_set.0,
            t_batt_set: config.bounds.t_batt_set.0,
        });
        z.push(last);
    }
    clamp_decisions(config, &mut z);

    let mut cur = rollout(model, x0, &z, preview, &wn, dt)?;
    let mut viol = measure_violations(config, &spec, &cur);
    let merit_of = |r: &Rollout, v: &Violations| {
        r.cost + pen_window * v.window_sum + PEN_HARD * v.hard_sum
    };
    let mut merit = merit_of(&cur, &viol);
    let mut warm_start_cost = if viol.hard_max <= tol { Some(cur.cost) } else { None };

    let t_begin = clock.now_seconds();
    let nu = 3 * n;
    let mut trust = 1.0_f64;
    let mut iterations = 0;
    let mut converged = false;
    let mut budget_hit = false;

    while iterations < config.solver.max_iterations {
        iterations += 1;
        if clock.now_seconds() - t_begin > config.solver.wall_clock_budget {
            budget_hit = true;
            break;
        }

        // --- linearize along the current trajectory ---
        let mut lins = Vec::with_capacity(n);
        for k in 0..n {
            lins.push(linearize_step(model, &cur.states[k], &z[k], &preview[k], &wn, dt)?);
        }
        // forward sensitivities in scaled coordinates:
        // s[k][i][j] = d x_k[i]/X_SCALES[i] / d ztilde_j
        let mut s: Vec<Vec<[f64; 3]>> = vec![vec![[0.0; 3]; nu]; n + 1];
        for k in 0..n {
            let lin = &lins[k];
            for j in 0..nu {
                let prev = &s[k][j];
                let mut nxt = [0.0; 3];
                for i in 0..3 {
                    let mut acc = 0.0;
                    for l in 0..3 {
                        acc += lin.a[i][l] * prev[l] * X_SCALES[l];
                    }
                    nxt[i] = acc / X_SCALES[i];
                }
                s[k + 1][j] = nxt;
            }
            for ju in 0..3 {
                let col = 3 * k + ju;
                for i in 0..3 {
                    s[k + 1][col][i] += lin.b[i][ju] * U_SCALES[ju] / X_SCALES[i];
                }
            }
        }

        // --- quadratic cost model ---
        let mut grad = vec![0.0; nu];
        let mut hess = Mat::zeros(nu, nu);
        for k in 0..n {
            let lin = &lins[k];
            for j in 0..nu {
                let mut acc = 0.0;
                for i in 0..3 {
                    acc += lin.gx[i] * s[k][j][i] * X_SCALES[i];
                }
                grad[j] += acc;
            }
            for ju in 0..3 {
                grad[3 * k + ju] += lin.gu[ju] * U_SCALES[ju];
            }
            // heater curvature along (t_batt_set - t_batt)
            if lin.heater_curv > 0.0 {
                let coeff = wn[2] * dt * lin.heater_curv;
                let mut dir = vec![0.0; nu];
                for j in 0..nu {
                    dir[j] = -s[k][j][1] * X_SCALES[1];
                }
                dir[3 * k + 2] += U_SCALES[2];
                for c1 in 0..nu {
                    if dir[c1] == 0.0 {
                        continue;
                    }
                    for c2 in 0..nu {
                        if dir[c2] != 0.0 {
                            *hess.at_mut(c1, c2) += coeff * dir[c1] * dir[c2];
                        }
                    }
                }
            }
            if lin.hvac_curv > 0.0 {
                let j = 3 * k + 1;
                *hess.at_mut(j, j) += wn[0] * dt * lin.hvac_curv * U_SCALES[1] * U_SCALES[1];
            }
        }
        for j in 0..nu {
            *hess.at_mut(j, j) += LEVENBERG;
        }

        // --- assemble hinge rows (normalized to coeffs . delta >= bound) ---
        let boxes = [config.bounds.soc, config.bounds.t_batt, config.bounds.v];
        let mut rows: Vec<HingeRow> = Vec::new();
        let sparse = |coeffs: &[f64]| -> Vec<(usize, f64)> {
            coeffs
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect()
        };
        for k in 1..=n {
            let xs = cur.states[k].to_array();
            for i in 0..3 {
                let mut row = vec![0.0; nu];
                for j in 0..nu {
                    row[j] = s[k][j][i];
                }
                let x_scaled = xs[i] / X_SCALES[i];
                // lower side: x + a.delta >= lo + margin
                rows.push(HingeRow {
                    coeffs: sparse(&row),
                    bound: boxes[i].0 / X_SCALES[i] + margin - x_scaled,
                    linear_weight: PEN_HARD,
                    quad_weight: HINGE_QUAD_HARD,
                });
                // upper side: -(x + a.delta) >= -(hi - margin)
                let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                rows.push(HingeRow {
                    coeffs: sparse(&neg),
                    bound: x_scaled - boxes[i].1 / X_SCALES[i] + margin,
                    linear_weight: PEN_HARD,
                    quad_weight: HINGE_QUAD_HARD,
                });
            }
            if spec.window_steps.contains(&k) {
                let (lo, hi) = config.arrival.t_batt_window;
                let mut row = vec![0.0; nu];
                for j in 0..nu {
                    row[j] = s[k][j][1];
                }
                let x_scaled = xs[1] / X_SCALES[1];
                let tighten = WINDOW_TIGHTEN_K / X_SCALES[1];
                rows.push(HingeRow {
                    coeffs: sparse(&row),
                    bound: (lo + WINDOW_TIGHTEN_K) / X_SCALES[1] + margin - x_scaled,
                    linear_weight: pen_window,
                    quad_weight: HINGE_QUAD_WINDOW,
                });
                let neg: Vec<f64> = row.iter().map(|v| -v).collect();
                rows.push(HingeRow {
                    coeffs: sparse(&neg),
                    bound: x_scaled - (hi - WINDOW_TIGHTEN_K) / X_SCALES[1] + margin,
                    linear_weight: pen_window,
                    quad_weight: HINGE_QUAD_WINDOW,
                });
                let _ = tighten;
            }
        }
        if let Some(req) = spec.required_distance {
            let mut row = vec![0.0; nu];
            for j in 0..nu {
                let mut acc = 0.0;
                for k in 1..=n {
                    acc += s[k][j][2] * X_SCALES[2] * dt;
                }
                row[j] = acc / D_SCALE;
            }
            let travel: f64 = cur.states.iter().skip(1).map(|x| x.v * dt).sum();
            rows.push(HingeRow {
                coeffs: sparse(&row),
                bound: (req - travel) / D_SCALE + margin,
                linear_weight: PEN_HARD,
                quad_weight: HINGE_QUAD_HARD,
            });
        }

        // decision box intersected with the trust region, in scaled units
        let b_in =
            [config.bounds.f_propulsion, config.bounds.t_cabin_set, config.bounds.t_batt_set];
        let mut lo = vec![0.0; nu];
        let mut hi = vec![0.0; nu];
        for k in 0..n {
            let ua = decision_as_array(&z[k]);
            for ju in 0..3 {
                let j = 3 * k + ju;
                let lo_box = (b_in[ju].0 - ua[ju]) / U_SCALES[ju];
                let hi_box = (b_in[ju].1 - ua[ju]) / U_SCALES[ju];
                lo[j] = lo_box.max(-trust).min(0.0);
                hi[j] = hi_box.min(trust).max(0.0);
            }
        }

        let qp = BoxQp { h: hess, g: grad, lo, hi, rows };
        let sol = solve_box_qp(&qp);

        // --- trust-region acceptance on the true rollout ---
        let mut step_scaled: f64;
        let mut accepted = false;
        let mut shrink_count = 0;
        let mut delta: Vec<f64> = sol.x.clone();
        sdebug!(
            "  SL it {iterations}: merit={merit:.4} cost={:.4} win={:.4} hard={:.4}/{:.2e} trust={trust:.3} qp_it={} pg={:.2e} dB0={:+.3}",
            cur.cost,
            viol.window_sum,
            viol.hard_sum,
            viol.hard_max,
            sol.iterations,
            sol.projected_gradient,
            delta.get(2).copied().unwrap_or(0.0)
        );
        loop {
            let mut cand = z.clone();
            let mut max_step: f64 = 0.0;
            for k in 0..n {
                let mut ua = decision_as_array(&cand[k]);
                for ju in 0..3 {
                    let d = delta[3 * k + ju].clamp(-trust, trust);
                    ua[ju] += d * U_SCALES[ju];
                    max_step = max_step.max(d.abs());
                }
                cand[k] = decision_from_array(ua);
            }
            clamp_decisions(config, &mut cand);
            step_scaled = max_step;
            if max_step < 1e-14 {
                break;
            }
            match rollout(model, x0, &cand, preview, &wn, dt) {
                Ok(r_new) => {
                    let v_new = measure_violations(config, &spec, &r_new);
                    let m_new = merit_of(&r_new, &v_new);
                    sdebug!(
                        "    try step={step_scaled:.4} merit={m_new:.4} (cost={:.4} win={:.4} hard={:.4}) {}",
                        r_new.cost,
                        v_new.window_sum,
                        v_new.hard_sum,
                        if m_new < merit - 1e-12 { "ACCEPT" } else { "reject" }
                    );
                    if m_new < merit - 1e-12 {
                        z = cand;
                        cur = r_new;
                        viol = v_new;
                        merit = m_new;
                        accepted = true;
                        if warm_start_cost.is_none() && viol.hard_max <= tol {
                            warm_start_cost = Some(cur.cost);
                        }
                        break;
                    }
                }
                Err(_e) => {
                    sdebug!("    try step={step_scaled:.4} rollout error");
                }
            }
            shrink_count += 1;
            if shrink_count > 8 {
                break;
            }
            for d in &mut delta {
                *d *= 0.5;
            }
        }

        // trust-radius update: clean full steps grow the radius, backtracked
        // accepts shrink it to the scale that worked
        if accepted {
            if shrink_count == 0 {
                trust = (trust * 2.0).min(8.0);
            } else {
                trust = (step_scaled * 2.0).clamp(1e-3, 8.0);
            }
        }

        if !accepted || step_scaled < config.solver.step_tolerance {
            converged = true;
            break;
        }
    }

    let status = if viol.hard_max > tol {
        SolveStatus::InfeasibleRelaxed
    } else if converged {
        SolveStatus::Optimal
    } else {
        debug_assert!(budget_hit || iterations >= config.solver.max_iterations);
        SolveStatus::MaxIterFeasible
    };

    Ok(HorizonSolution {
        decisions: z,
        predicted_states: cur.states.clone(),
        cost: cur.cost,
        iterations,
        status,
        warm_start_cost: warm_start_cost.unwrap_or(cur.cost),
        max_residual: viol.hard_max,
        window_slack_kelvin: viol.window_max_kelvin,
    })
}
