//! Closed-loop orchestration: the plant advances at `dt_sim`, the
//! system-level controller re-solves at every `dt_mpc` boundary and its
//! setpoints are held in between. Per-step records accumulate into a trace;
//! end-of-run aggregates land in a summary. Identical scenarios produce
//! identical traces.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)]
use num_traits::Float;

use crate::battery::{
    self, BatteryState, CellParams, PackParams, SocSaturation, ThermalParams,
};
use crate::cabin::{self, CabinParams, CabinState};
use crate::control::{self, LowLevelGains};
use crate::error::CoreError;
use crate::mpc::{
    fit_hvac_surrogate, HvacPower, MpcConfig, MpcDecision, PlantMeasurements, PredictionModel,
    PreviewPoint, RecedingController, SolveDiagnostics, SolverClock, SurrogateDomain,
};
use crate::refrigerant::{run_heating_cycle, CompressorParams, CycleOffsets, PropertyFit};
use crate::route::{DistanceProfile, RouteProfile};
use crate::vehicle::{self, VehicleParams, VehicleState};

/// Ambient-temperature model attached to distance-indexed routes.
#[derive(Debug, Clone, PartialEq)]
pub enum AmbientModel {
    Constant(f64),
    Sinusoid { mean: f64, amp: f64, period: f64 },
}

impl AmbientModel {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            AmbientModel::Constant(v) => *v,
            AmbientModel::Sinusoid { mean, amp, period } => {
                mean + amp * (core::f64::consts::TAU * t / period).sin()
            }
        }
    }
}

/// Environment source for plant and preview.
#[derive(Debug, Clone, PartialEq)]
pub enum RouteSource {
    /// Grade and ambient indexed by time.
    Time(RouteProfile),
    /// Grade indexed by traveled distance with a separate ambient model.
    Distance { profile: DistanceProfile, ambient: AmbientModel },
}

/// Preview-speed assumption used to map distance-indexed grades onto the
/// horizon's time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreviewSpeed {
    /// Use the vehicle speed measured at each solve.
    CurrentVehicle,
    Fixed(f64),
}

/// Joint plant state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub vehicle: VehicleState,
    pub cabin: CabinState,
    pub battery: BatteryState,
}

/// A fully resolved simulation scenario.
#[derive(Clone)]
pub struct Scenario {
    pub vehicle: VehicleParams,
    pub cabin: CabinParams,
    pub cell: CellParams,
    pub thermal: ThermalParams,
    pub pack: PackParams,
    pub gains: LowLevelGains,
    pub compressor: CompressorParams,
    pub offsets: CycleOffsets,
    pub fit: PropertyFit,
    pub surrogate_domain: SurrogateDomain,
    pub mpc: MpcConfig,
    pub route: RouteSource,
    pub initial: PlantState,
    pub dt_sim: f64,
    pub t_final: f64,
    pub preview_speed: PreviewSpeed,
    /// Band around the final applied cabin setpoint defining cabin settling [K].
    pub cabin_settle_band: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CoreError> {
        self.vehicle.validate()?;
        self.cabin.validate()?;
        self.cell.validate()?;
        self.thermal.validate()?;
        self.pack.validate()?;
        self.gains.validate()?;
        self.compressor.validate()?;
        self.mpc.validate()?;
        if !(self.dt_sim > 0.0) || !(self.t_final >= 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "dt_sim must be > 0 and t_final >= 0".into(),
            });
        }
        let ratio = self.mpc.dt_mpc / self.dt_sim;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(CoreError::InvalidArgument {
                what: alloc::format!(
                    "dt_mpc ({}) must be an integer multiple of dt_sim ({})",
                    self.mpc.dt_mpc,
                    self.dt_sim
                ),
            });
        }
        if let PreviewSpeed::Fixed(v) = self.preview_speed {
            if !(v > 0.0) {
                return Err(CoreError::InvalidArgument {
                    what: "fixed preview speed must be > 0".into(),
                });
            }
        }
        Ok(())
    }

    fn grade_at(&self, t: f64, x_dist: f64) -> f64 {
        match &self.route {
            RouteSource::Time(p) => p.grade_at(t),
            RouteSource::Distance { profile, .. } => profile.grade_at(x_dist),
        }
    }

    fn ambient_at(&self, t: f64) -> f64 {
        match &self.route {
            RouteSource::Time(p) => p.ambient_at(t),
            RouteSource::Distance { ambient, .. } => ambient.at(t),
        }
    }

    /// Environment preview over the horizon starting at `t`, mapping
    /// distance-indexed grades through the preview-speed assumption.
    pub fn build_preview(&self, t: f64, x_dist: f64, v_now: f64) -> Vec<PreviewPoint> {
        let n = self.mpc.n_horizon;
        let dt = self.mpc.dt_mpc;
        let v_preview = match self.preview_speed {
            PreviewSpeed::CurrentVehicle => v_now.max(0.1),
            PreviewSpeed::Fixed(v) => v,
        };
        (0..n)
            .map(|k| {
                let tk = t + k as f64 * dt;
                let grade = match &self.route {
                    RouteSource::Time(p) => p.grade_at(tk),
                    RouteSource::Distance { profile, .. } => {
                        profile.grade_at(x_dist + v_preview * (k as f64) * dt)
                    }
                };
                PreviewPoint { theta: grade.atan(), t_ambient: self.ambient_at(tk) }
            })
            .collect()
    }
}

/// One per-`dt_sim` trace record: the state at the row time and the inputs
/// applied over the following step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub v: f64,
    pub x_dist: f64,
    pub t_cabin: f64,
    pub t_air_in: f64,
    pub t_batt: f64,
    pub soc: f64,
    /// Cell terminal voltage [V].
    pub v_terminal: f64,
    /// Cell current [A], positive discharging.
    pub i_cell: f64,
    pub f_propulsion: f64,
    /// Applied compressor speed after the capacity clamp [RPM].
    pub omega_comp: f64,
    pub i_heater: f64,
    /// Battery-side subsystem powers [W].
    pub p_propulsion: f64,
    pub p_hvac: f64,
    pub p_heater: f64,
    pub t_cabin_set: f64,
    pub t_batt_set: f64,
    pub solver_status: &'static str,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunStatus {
    Completed,
    EmptyBattery { t: f64 },
}

impl RunStatus {
    pub fn as_str(&self) -> String {
        match self {
            RunStatus::Completed => String::from("completed"),
            RunStatus::EmptyBattery { t } => alloc::format!("empty_battery_at_{t}s"),
        }
    }
}

/// Full simulation trace plus solver diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub rows: Vec<TraceRow>,
    pub solves: Vec<SolveDiagnostics>,
}

/// End-of-run aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub final_distance: f64,
    pub final_soc: f64,
    pub final_t_batt: f64,
    pub final_t_cabin: f64,
    /// First time the cabin stays within the settle band of the last applied
    /// setpoint.
    pub cabin_settle_time: Option<f64>,
    /// First time the battery stays inside the arrival window.
    pub battery_settle_time: Option<f64>,
    /// Net battery-side propulsion energy [J] (regen credits subtract).
    pub e_propulsion: f64,
    pub e_hvac: f64,
    pub e_heater: f64,
    /// Pack-level discharged electrical energy from the terminal-voltage
    /// product [J]; closes against the subsystem sum in the energy ledger.
    pub e_pack_terminal: f64,
    pub arrival_window_satisfied: bool,
    pub status: RunStatus,
}

/// A module failure during a run, tagged with the failing step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimError {
    pub step: usize,
    pub t: f64,
    pub source: CoreError,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "simulation aborted at step {} (t={} s): {}", self.step, self.t, self.source)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn err_at(step: usize, t: f64) -> impl Fn(CoreError) -> SimError {
    move |source| SimError { step, t, source }
}

/// First time after which `signal` stays within `band` of `target` for the
/// remainder of the trace; `None` if it never settles.
pub fn settle_time(
    trace: &SimTrace,
    signal: &str,
    target: f64,
    band: f64,
) -> Result<Option<f64>, CoreError> {
    if !(band > 0.0) {
        return Err(CoreError::InvalidArgument { what: "settle band must be > 0".into() });
    }
    let pick: fn(&TraceRow) -> f64 = match signal {
        "v" => |r| r.v,
        "t_cabin" => |r| r.t_cabin,
        "t_batt" => |r| r.t_batt,
        "t_air_in" => |r| r.t_air_in,
        "soc" => |r| r.soc,
        other => {
            return Err(CoreError::InvalidArgument {
                what: alloc::format!("unknown trace signal {other:?}"),
            })
        }
    };
    let mut settle: Option<f64> = None;
    for row in &trace.rows {
        let inside = (pick(row) - target).abs() <= band;
        match (inside, settle) {
            (true, None) => settle = Some(row.t),
            (false, Some(_)) => settle = None,
            _ => {}
        }
    }
    Ok(settle)
}

/// Run the closed loop to completion (or an empty battery).
pub fn run(
    scenario: &Scenario,
    clock: &dyn SolverClock,
) -> Result<(SimTrace, SimSummary), SimError> {
    scenario.validate().map_err(err_at(0, 0.0))?;
    let dt = scenario.dt_sim;
    let n_steps = (scenario.t_final / dt + 1e-9).floor() as usize;
    let mpc_every = (scenario.mpc.dt_mpc / dt).round() as usize;

    let surrogate = fit_hvac_surrogate(
        &scenario.fit,
        &scenario.offsets,
        &scenario.compressor,
        &scenario.cabin,
        scenario.surrogate_domain,
    )
    .map_err(err_at(0, 0.0))?;
    let mut controller =
        RecedingController::new(scenario.mpc.clone()).map_err(err_at(0, 0.0))?;

    let mut vehicle_state = scenario.initial.vehicle;
    let mut cabin_state = scenario.initial.cabin;
    let mut battery_state = scenario.initial.battery;

    let mut trace = SimTrace::default();
    let mut applied = MpcDecision {
        f_propulsion: 0.0,
        t_cabin_set: scenario.mpc.bounds.t_cabin_set.0,
        t_batt_set: scenario.mpc.bounds.t_batt_set.0,
    };
    let mut t_air_in_prev: Option<f64> = None;
    let mut status = RunStatus::Completed;
    let mut e_prop = 0.0;
    let mut e_hvac = 0.0;
    let mut e_heater = 0.0;
    let mut e_pack_terminal = 0.0;

    for step in 0..n_steps {
        let t = step as f64 * dt;
        let fail = err_at(step, t);

        if step % mpc_every == 0 {
            let meas = PlantMeasurements {
                t,
                soc: battery_state.soc,
                v_c: battery_state.v_c,
                t_batt: battery_state.t_batt,
                t_cabin: cabin_state.t_cabin,
                v: vehicle_state.v,
                x_dist: vehicle_state.x_dist,
            };
            let preview = scenario.build_preview(t, vehicle_state.x_dist, vehicle_state.v);
            let model = PredictionModel {
                vehicle: &scenario.vehicle,
                cell: &scenario.cell,
                thermal: &scenario.thermal,
                pack: &scenario.pack,
                gains: &scenario.gains,
                hvac: HvacPower::Surrogate(&surrogate),
                v_c_meas: battery_state.v_c,
                t_cabin_meas: cabin_state.t_cabin,
            };
            applied = controller.receding_step(&model, &meas, &preview, clock);
            if let Some(diag) = controller.last_diagnostics.clone() {
                trace.solves.push(diag);
            }
        }
        let solver_status = trace
            .solves
            .last()
            .map(|d| if d.held_previous { "held_previous" } else { d.status.as_str() })
            .unwrap_or("none");

        // low-level controllers act on start-of-step measurements
        let theta = scenario.grade_at(t, vehicle_state.x_dist).atan();
        let t_amb = scenario.ambient_at(t);
        let i_heater =
            control::heater_control(&scenario.gains, applied.t_batt_set, battery_state.t_batt);
        let omega_cmd =
            control::hvac_control(&scenario.gains, applied.t_cabin_set, cabin_state.t_cabin);
        let f_applied = control::propulsion_feedforward(
            applied.f_propulsion,
            scenario.mpc.bounds.f_propulsion.0,
            scenario.mpc.bounds.f_propulsion.1,
        );

        // refrigerant loop
        let cycle = run_heating_cycle(
            &scenario.fit,
            &scenario.offsets,
            &scenario.compressor,
            &scenario.cabin,
            omega_cmd,
            t_amb,
            cabin_state.t_cabin,
            t_air_in_prev,
        )
        .map_err(&fail)?;

        // battery-side powers and the cell current that serves them
        let p_prop = vehicle::propulsion_power(&scenario.vehicle, f_applied, vehicle_state.v);
        let p_heater = i_heater * i_heater * scenario.thermal.r_heater;
        let (p_cell, p_heater_thermal) =
            battery::pack_aggregate(&scenario.pack, p_prop, cycle.p_battery, p_heater);
        let i_cell = battery::cell_current_from_power(&scenario.cell, &battery_state, p_cell)
            .map_err(&fail)?;
        let v_terminal = battery::terminal_voltage(&scenario.cell, &battery_state, i_cell);
        let q_gen = battery::ohmic_heat(&scenario.cell, &battery_state, i_cell);

        trace.rows.push(TraceRow {
            t,
            v: vehicle_state.v,
            x_dist: vehicle_state.x_dist,
            t_cabin: cabin_state.t_cabin,
            t_air_in: cycle.t_air_in,
            t_batt: battery_state.t_batt,
            soc: battery_state.soc,
            v_terminal,
            i_cell,
            f_propulsion: f_applied,
            omega_comp: cycle.omega_applied,
            i_heater,
            p_propulsion: p_prop,
            p_hvac: cycle.p_battery,
            p_heater,
            t_cabin_set: applied.t_cabin_set,
            t_batt_set: applied.t_batt_set,
            solver_status,
        });

        e_prop += p_prop * dt;
        e_hvac += cycle.p_battery * dt;
        e_heater += scenario.pack.heater_scale * p_heater * dt;
        e_pack_terminal += (i_cell * scenario.pack.n_parallel as f64)
            * (v_terminal * scenario.pack.n_series as f64)
            * dt;

        // plant update order: cabin, battery electrical, battery thermal, vehicle
        cabin_state = cabin::step(&scenario.cabin, &cabin_state, cycle.t_air_in, t_amb, dt);
        let (b_elec, saturation) =
            battery::electrical_step(&scenario.cell, &battery_state, i_cell, dt);
        battery_state = b_elec;
        battery_state = battery::thermal_step(
            &scenario.thermal,
            &battery_state,
            q_gen,
            p_heater_thermal,
            t_amb,
            dt,
        );
        vehicle_state = vehicle::step(&scenario.vehicle, &vehicle_state, f_applied, theta, dt);
        t_air_in_prev = Some(cycle.t_air_in);

        if saturation == SocSaturation::Empty {
            status = RunStatus::EmptyBattery { t: t + dt };
            break;
        }
    }

    let (win_lo, win_hi) = scenario.mpc.arrival.t_batt_window;
    let win_mid = 0.5 * (win_lo + win_hi);
    let win_half = 0.5 * (win_hi - win_lo);
    let battery_settle = if trace.rows.is_empty() {
        None
    } else {
        settle_time(&trace, "t_batt", win_mid, win_half)
            .map_err(err_at(n_steps, scenario.t_final))?
    };
    let cabin_settle = if trace.rows.is_empty() {
        None
    } else {
        let target = trace.rows.last().unwrap().t_cabin_set;
        settle_time(&trace, "t_cabin", target, scenario.cabin_settle_band)
            .map_err(err_at(n_steps, scenario.t_final))?
    };

    let summary = SimSummary {
        final_distance: vehicle_state.x_dist,
        final_soc: battery_state.soc,
        final_t_batt: battery_state.t_batt,
        final_t_cabin: cabin_state.t_cabin,
        cabin_settle_time: cabin_settle,
        battery_settle_time: battery_settle,
        e_propulsion: e_prop,
        e_hvac,
        e_heater,
        e_pack_terminal,
        arrival_window_satisfied: battery_settle.is_some(),
        status,
    };
    Ok((trace, summary))
}

/// Scenario mirroring the bundled synthetic case study: sinusoidal grade and
/// ambient, freeway start, cold cabin, low charge.
pub fn case_study_1_scenario() -> Scenario {
    let route = crate::route::generate_sinusoidal(-0.2, 200.0, 273.0, 5.0, 300.0, 600.0, 1.0)
        .expect("valid synthetic route");
    Scenario {
        vehicle: VehicleParams::default(),
        cabin: CabinParams::default(),
        cell: CellParams::default(),
        thermal: ThermalParams::default(),
        pack: PackParams::default(),
        gains: LowLevelGains::default(),
        compressor: CompressorParams::default(),
        offsets: CycleOffsets::default(),
        fit: PropertyFit::default_r134a(),
        surrogate_domain: SurrogateDomain::default(),
        mpc: MpcConfig::default(),
        route: RouteSource::Time(route),
        initial: PlantState {
            vehicle: VehicleState { v: 29.0576, x_dist: 0.0 },
            cabin: CabinState { t_cabin: 278.0 },
            battery: BatteryState { soc: 0.2, v_c: 0.0, t_batt: 293.0 },
        },
        dt_sim: 0.1,
        t_final: 600.0,
        preview_speed: PreviewSpeed::CurrentVehicle,
        cabin_settle_band: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::NoopClock;

    #[test]
    fn zero_duration_run_yields_empty_trace_and_initial_summary() {
        let mut sc = case_study_1_scenario();
        sc.t_final = 0.0;
        let (trace, summary) = run(&sc, &NoopClock).unwrap();
        assert!(trace.rows.is_empty());
        assert_eq!(summary.final_distance, 0.0);
        assert_eq!(summary.final_soc, 0.2);
        assert_eq!(summary.status, RunStatus::Completed);
    }

    #[test]
    fn settle_time_definitions() {
        let mut trace = SimTrace::default();
        let mk = |t: f64, tb: f64| TraceRow {
            t,
            v: 0.0,
            x_dist: 0.0,
            t_cabin: 0.0,
            t_air_in: 0.0,
            t_batt: tb,
            soc: 0.5,
            v_terminal: 0.0,
            i_cell: 0.0,
            f_propulsion: 0.0,
            omega_comp: 0.0,
            i_heater: 0.0,
            p_propulsion: 0.0,
            p_hvac: 0.0,
            p_heater: 0.0,
            t_cabin_set: 0.0,
            t_batt_set: 0.0,
            solver_status: "none",
        };
        // constant at target settles immediately
        trace.rows = alloc::vec![mk(0.0, 300.0), mk(1.0, 300.0)];
        assert_eq!(settle_time(&trace, "t_batt", 300.0, 1.0).unwrap(), Some(0.0));
        // enters the band at t=170 and stays
        trace.rows =
            (0..400).map(|i| mk(i as f64, if i < 170 { 290.0 } else { 314.0 })).collect();
        assert_eq!(settle_time(&trace, "t_batt", 314.15, 1.0).unwrap(), Some(170.0));
        // oscillating out of band at the end never settles
        trace.rows =
            (0..100).map(|i| mk(i as f64, if i % 2 == 0 { 314.0 } else { 310.0 })).collect();
        assert_eq!(settle_time(&trace, "t_batt", 314.15, 1.0).unwrap(), None);
        // unknown signals are rejected
        assert!(settle_time(&trace, "nope", 0.0, 1.0).is_err());
    }
}
