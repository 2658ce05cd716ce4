//! System-level receding-horizon controller: every control period, solve an
//! N-step optimization over propulsion force, cabin setpoint, and battery
//! setpoint that minimizes weighted subsystem energies subject to the
//! predicted dynamics, state and input boxes, a trip-progress bound, and the
//! battery preconditioning window near arrival. Only the first step of each
//! solution is applied.

pub mod model;
pub mod qp;
pub mod solver;
pub mod surrogate;

use alloc::vec::Vec;

use crate::error::CoreError;

pub use model::{
    predict_dynamics, rollout, step_powers, HvacPower, MpcState, PredictionModel, PreviewPoint,
};
pub use solver::solve_horizon;
pub use surrogate::{fit_hvac_surrogate, steady_hold_power, HvacSurrogate, SurrogateDomain};

/// Wall clock injected into the solver for the budget cutoff; the default
/// no-op clock never triggers it, preserving bit determinism.
pub trait SolverClock {
    fn now_seconds(&self) -> f64;
}

/// Clock that never advances: the budget check never fires.
pub struct NoopClock;

impl SolverClock for NoopClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// The twelve box limits on states and decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcBounds {
    pub soc: (f64, f64),
    pub t_batt: (f64, f64),
    /// Vehicle speed [m/s].
    pub v: (f64, f64),
    pub f_propulsion: (f64, f64),
    pub t_cabin_set: (f64, f64),
    pub t_batt_set: (f64, f64),
}

impl Default for MpcBounds {
    fn default() -> Self {
        MpcBounds {
            soc: (0.05, 1.0),
            t_batt: (258.15, 318.15),
            // 55-75 MPH freeway band
            v: (24.587, 33.528),
            f_propulsion: (-4000.0, 6000.0),
            t_cabin_set: (288.15, 301.15),
            t_batt_set: (283.15, 315.15),
        }
    }
}

impl MpcBounds {
    pub fn validate(&self) -> Result<(), CoreError> {
        let pairs = [
            ("soc", self.soc),
            ("t_batt", self.t_batt),
            ("v", self.v),
            ("f_propulsion", self.f_propulsion),
            ("t_cabin_set", self.t_cabin_set),
            ("t_batt_set", self.t_batt_set),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(CoreError::InvalidArgument {
                    what: alloc::format!("bound {name}: need min < max, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }
}

/// Trip and preconditioning targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalSpec {
    /// Distance to the charging station [m].
    pub distance_target: f64,
    /// Scheduled arrival time [s].
    pub t_final: f64,
    /// Battery temperature window required at arrival [K].
    pub t_batt_window: (f64, f64),
    /// The window constraint applies to horizon steps whose absolute time is
    /// at least `t_final - window_ramp` [s].
    pub window_ramp: f64,
    /// Fractional headroom on the pace bound so the target distance is
    /// reached with margin.
    pub progress_margin: f64,
}

impl Default for ArrivalSpec {
    fn default() -> Self {
        ArrivalSpec {
            // 10.8 miles
            distance_target: 17_380.95,
            t_final: 600.0,
            t_batt_window: (313.15, 315.15),
            window_ramp: 460.0,
            progress_margin: 0.02,
        }
    }
}

/// Iteration and tolerance settings of the horizon solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Scaled constraint residual accepted as feasible.
    pub constraint_tolerance: f64,
    /// Scaled step size below which the solve is declared converged.
    pub step_tolerance: f64,
    /// Wall clock budget per solve [s].
    pub wall_clock_budget: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 30,
            constraint_tolerance: 1e-6,
            step_tolerance: 1e-6,
            wall_clock_budget: 0.5,
        }
    }
}

/// Cost weights on the three energy terms, applied after normalization by
/// the nominal subsystem magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        MpcWeights { w1: 1.0, w2: 1.0, w3: 1.0 }
    }
}

/// Full configuration of the system-level controller.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub n_horizon: usize,
    pub dt_mpc: f64,
    pub weights: MpcWeights,
    pub bounds: MpcBounds,
    pub arrival: ArrivalSpec,
    pub solver: SolverSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            n_horizon: 20,
            dt_mpc: 1.0,
            weights: MpcWeights::default(),
            bounds: MpcBounds::default(),
            arrival: ArrivalSpec::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_horizon < 1 {
            return Err(CoreError::InvalidArgument { what: "n_horizon must be >= 1".into() });
        }
        if !(self.dt_mpc > 0.0) {
            return Err(CoreError::InvalidArgument { what: "dt_mpc must be > 0".into() });
        }
        if self.weights.w1 < 0.0 || self.weights.w2 < 0.0 || self.weights.w3 < 0.0 {
            return Err(CoreError::InvalidArgument { what: "weights must be >= 0".into() });
        }
        if !(self.solver.constraint_tolerance > 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "constraint_tolerance must be > 0".into(),
            });
        }
        let w = self.arrival.t_batt_window;
        if !(w.0 < w.1) {
            return Err(CoreError::InvalidArgument {
                what: "battery window needs min < max".into(),
            });
        }
        self.bounds.validate()
    }
}

/// One applied system-level decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcDecision {
    /// Commanded propulsion force [N].
    pub f_propulsion: f64,
    /// Cabin temperature setpoint [K].
    pub t_cabin_set: f64,
    /// Battery temperature setpoint [K].
    pub t_batt_set: f64,
}

/// Solve outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterFeasible,
    InfeasibleRelaxed,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterFeasible => "max_iter_feasible",
            SolveStatus::InfeasibleRelaxed => "infeasible_relaxed",
        }
    }
}

/// Full horizon solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub decisions: Vec<MpcDecision>,
    /// Predicted states, length `n_horizon + 1`, satisfying the discrete
    /// dynamics exactly (single shooting).
    pub predicted_states: Vec<MpcState>,
    /// Normalized weighted cost of the returned point.
    pub cost: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Cost of the feasibility-repaired warm start (the dominance baseline).
    pub warm_start_cost: f64,
    /// Largest scaled hard-constraint violation of the returned point.
    pub max_residual: f64,
    /// Largest arrival-window violation over the active steps [K].
    pub window_slack_kelvin: f64,
}

/// Plant measurements fed to the controller at a control boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantMeasurements {
    pub t: f64,
    pub soc: f64,
    pub v_c: f64,
    pub t_batt: f64,
    pub t_cabin: f64,
    pub v: f64,
    pub x_dist: f64,
}

/// Per-solve diagnostics surfaced into the simulation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub t: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub cost: f64,
    pub warm_start_cost: f64,
    pub max_residual: f64,
    pub window_slack_kelvin: f64,
    /// The solve failed and the previous decision was held.
    pub held_previous: bool,
    /// The safety-net clamp changed the applied decision.
    pub clamped: bool,
}

/// Receding-horizon controller state: warm start bookkeeping, the held
/// decision, and idempotent re-query handling within one control period.
pub struct RecedingController {
    config: MpcConfig,
    previous: Option<Vec<MpcDecision>>,
    applied: Option<MpcDecision>,
    last_query: Option<u64>,
    pub last_diagnostics: Option<SolveDiagnostics>,
}

fn hash_bits(acc: &mut u64, v: f64) {
    // FNV-1a over the raw bits
    let mut h = *acc;
    for b in v.to_bits().to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    *acc = h;
}

impl RecedingController {
    pub fn new(config: MpcConfig) -> Result<Self, CoreError> {
        config.validate()?;
        Ok(RecedingController {
            config,
            previous: None,
            applied: None,
            last_query: None,
            last_diagnostics: None,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Shift a solution one step for the next solve's warm start, duplicating
    /// the final step.
    pub fn warm_start_shift(previous: &[MpcDecision]) -> Vec<MpcDecision> {
        let mut out: Vec<MpcDecision> = previous.iter().skip(1).cloned().collect();
        if let Some(last) = previous.last() {
            out.push(*last);
        }
        out
    }

    fn default_warm_start(
        &self,
        meas: &PlantMeasurements,
        model: &PredictionModel,
    ) -> Vec<MpcDecision> {
        let b = &self.config.bounds;
        let f_hold = crate::vehicle::resistive_force(model.vehicle, meas.v, 0.0)
            .clamp(b.f_propulsion.0, b.f_propulsion.1);
        let u = MpcDecision {
            f_propulsion: f_hold,
            t_cabin_set: meas.t_cabin.clamp(b.t_cabin_set.0, b.t_cabin_set.1),
            t_batt_set: meas.t_batt.clamp(b.t_batt_set.0, b.t_batt_set.1),
        };
        alloc::vec![u; self.config.n_horizon]
    }

    /// Run one control period: solve the horizon problem from the shifted
    /// warm start and return only the first decision. Re-querying with the
    /// identical measurements and preview returns the held decision without
    /// re-solving. On solver failure the previously applied decision is held
    /// and flagged in the diagnostics.
    pub fn receding_step(
        &mut self,
        model: &PredictionModel,
        meas: &PlantMeasurements,
        preview: &[PreviewPoint],
        clock: &dyn SolverClock,
    ) -> MpcDecision {
        let mut key: u64 = 0xcbf29ce484222325;
        for v in [meas.t, meas.soc, meas.v_c, meas.t_batt, meas.t_cabin, meas.v, meas.x_dist] {
            hash_bits(&mut key, v);
        }
        for p in preview {
            hash_bits(&mut key, p.theta);
            hash_bits(&mut key, p.t_ambient);
        }
        if self.last_query == Some(key) {
            if let Some(applied) = self.applied {
                return applied;
            }
        }

        let warm = match &self.previous {
            Some(prev) => Self::warm_start_shift(prev),
            None => self.default_warm_start(meas, model),
        };
        let x0 = MpcState { soc: meas.soc, t_batt: meas.t_batt, v: meas.v };
        let solved = solve_horizon(
            &self.config,
            model,
            &x0,
            preview,
            meas.t,
            meas.x_dist,
            &warm,
            clock,
        );
        let decision = match solved {
            Ok(sol) => {
                let mut first = sol.decisions[0];
                // safety net: applied decisions satisfy the input boxes exactly
                let b = &self.config.bounds;
                let clamped_f = first.f_propulsion.clamp(b.f_propulsion.0, b.f_propulsion.1);
                let clamped_c = first.t_cabin_set.clamp(b.t_cabin_set.0, b.t_cabin_set.1);
                let clamped_b = first.t_batt_set.clamp(b.t_batt_set.0, b.t_batt_set.1);
                let clamped = clamped_f != first.f_propulsion
                    || clamped_c != first.t_cabin_set
                    || clamped_b != first.t_batt_set;
                first = MpcDecision {
                    f_propulsion: clamped_f,
                    t_cabin_set: clamped_c,
                    t_batt_set: clamped_b,
                };
                self.last_diagnostics = Some(SolveDiagnostics {
                    t: meas.t,
                    status: sol.status,
                    iterations: sol.iterations,
                    cost: sol.cost,
                    warm_start_cost: sol.warm_start_cost,
                    max_residual: sol.max_residual,
                    window_slack_kelvin: sol.window_slack_kelvin,
                    held_previous: false,
                    clamped,
                });
                self.previous = Some(sol.decisions);
                first
            }
            Err(_) => {
                let held =
                    self.applied.unwrap_or_else(|| self.default_warm_start(meas, model)[0]);
                self.last_diagnostics = Some(SolveDiagnostics {
                    t: meas.t,
                    status: SolveStatus::InfeasibleRelaxed,
                    iterations: 0,
                    cost: f64::NAN,
                    warm_start_cost: f64::NAN,
                    max_residual: f64::NAN,
                    window_slack_kelvin: f64::NAN,
                    held_previous: true,
                    clamped: false,
                });
                held
            }
        };
        self.applied = Some(decision);
        self.last_query = Some(key);
        decision
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warm_start_shift_moves_every_element_left() {
        let mk = |f: f64| MpcDecision { f_propulsion: f, t_cabin_set: 290.0, t_batt_set: 300.0 };
        let prev = alloc::vec![mk(1.0), mk(2.0), mk(3.0)];
        let shifted = RecedingController::warm_start_shift(&prev);
        assert_eq!(shifted.len(), 3);
        assert_eq!(shifted[0].f_propulsion, 2.0);
        assert_eq!(shifted[1].f_propulsion, 3.0);
        assert_eq!(shifted[2].f_propulsion, 3.0);
    }

    #[test]
    fn config_validation_rejects_inverted_bounds() {
        let mut c = MpcConfig::default();
        assert!(c.validate().is_ok());
        c.bounds.v = (30.0, 20.0);
        assert!(c.validate().is_err());
    }
}
