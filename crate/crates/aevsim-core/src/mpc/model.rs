//! Horizon prediction model: the three MPC states (state of charge, battery
//! temperature, vehicle speed) stepped under a candidate decision sequence,
//! with the battery-side powers that form the cost.
//!
//! The prediction smooths the heater saturation (softplus in place of the
//! hard clamp) so linearizations keep gradient information when the
//! actuator is pinned; the plant keeps exact clamps. Cabin temperature and
//! RC-branch voltage are not horizon states and are held at their measured
//! values, mirroring the system-level formulation.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::battery::{self, BatteryState, CellParams, PackParams, ThermalParams};
use crate::cabin::CabinParams;
use crate::control::LowLevelGains;
use crate::error::CoreError;
use crate::refrigerant::{run_heating_cycle, CompressorParams, CycleOffsets, PropertyFit};
use crate::vehicle::{self, VehicleParams};

use super::surrogate::HvacSurrogate;
use super::MpcDecision;

/// Cost normalization magnitudes: each energy term is divided by its nominal
/// power so unit weights compare like with like.
pub const NOMINAL_PROPULSION_W: f64 = 1.0e5;
pub const NOMINAL_HVAC_W: f64 = 4.0e3;
pub const NOMINAL_HEATER_W: f64 = 4.0e1;

/// The three horizon states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcState {
    pub soc: f64,
    pub t_batt: f64,
    pub v: f64,
}

impl MpcState {
    pub fn to_array(self) -> [f64; 3] {
        [self.soc, self.t_batt, self.v]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        MpcState { soc: a[0], t_batt: a[1], v: a[2] }
    }
}

/// Environment preview for one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreviewPoint {
    /// Road slope angle [rad].
    pub theta: f64,
    /// Ambient temperature [K].
    pub t_ambient: f64,
}

/// HVAC power source inside the prediction: the fitted surrogate for normal
/// operation, or the full cycle model for cross-consistency checks.
pub enum HvacPower<'a> {
    Surrogate(&'a HvacSurrogate),
    Full {
        fit: &'a PropertyFit,
        offsets: &'a CycleOffsets,
        comp: &'a CompressorParams,
        cabin: &'a CabinParams,
        gains: &'a LowLevelGains,
    },
}

/// Everything the horizon problem needs to step the plant forward.
pub struct PredictionModel<'a> {
    pub vehicle: &'a VehicleParams,
    pub cell: &'a CellParams,
    pub thermal: &'a ThermalParams,
    pub pack: &'a PackParams,
    pub gains: &'a LowLevelGains,
    pub hvac: HvacPower<'a>,
    /// Measured RC-branch voltage, held constant over the horizon [V].
    pub v_c_meas: f64,
    /// Measured cabin temperature, held constant over the horizon [K].
    pub t_cabin_meas: f64,
}

/// Numerically stable `s*ln(1 + exp(x/s))`.
fn softplus(x: f64, s: f64) -> f64 {
    let z = x / s;
    if z > 30.0 {
        x
    } else if z < -30.0 {
        0.0
    } else {
        s * (1.0 + z.exp()).ln()
    }
}

/// Smoothing scale of the heater-current saturation used inside
/// linearizations [A].
const HEATER_SMOOTH_A: f64 = 1.0;

impl<'a> PredictionModel<'a> {
    /// Heater current as the plant applies it: the exact proportional clamp.
    pub fn heater_current(&self, t_batt_set: f64, t_batt: f64) -> f64 {
        crate::control::heater_control(self.gains, t_batt_set, t_batt)
    }

    /// Softplus-smoothed heater current [A]: identical to the clamp away
    /// from the corners but with live gradients through them. Used only by
    /// the solver's linearization so saturated actuators keep pulling.
    pub fn heater_current_smoothed(&self, t_batt_set: f64, t_batt: f64) -> f64 {
        let raw = self.gains.k_b * (t_batt_set - t_batt);
        softplus(raw, HEATER_SMOOTH_A) - softplus(raw - self.gains.i_heater_max, HEATER_SMOOTH_A)
    }

    /// Battery-side HVAC power for one step [W].
    fn hvac_power(&self, decision: &MpcDecision, t_ambient: f64) -> Result<f64, CoreError> {
        match &self.hvac {
            HvacPower::Surrogate(s) => {
                Ok(s.power(decision.t_cabin_set, self.t_cabin_meas, t_ambient))
            }
            HvacPower::Full { fit, offsets, comp, cabin, gains } => {
                let omega =
                    crate::control::hvac_control(gains, decision.t_cabin_set, self.t_cabin_meas);
                let cyc = run_heating_cycle(
                    fit,
                    offsets,
                    comp,
                    cabin,
                    omega,
                    t_ambient,
                    self.t_cabin_meas,
                    None,
                )?;
                Ok(cyc.p_battery)
            }
        }
    }
}

/// Battery-side powers and currents at one horizon step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPowers {
    pub p_propulsion: f64,
    pub p_hvac: f64,
    pub p_heater: f64,
    pub i_cell: f64,
}

pub(crate) fn step_powers_with(
    model: &PredictionModel,
    state: &MpcState,
    decision: &MpcDecision,
    w: &PreviewPoint,
    smoothed: bool,
) -> Result<StepPowers, CoreError> {
    let i_heater = if smoothed {
        model.heater_current_smoothed(decision.t_batt_set, state.t_batt)
    } else {
        model.heater_current(decision.t_batt_set, state.t_batt)
    };
    let p_heater = i_heater * i_heater * model.thermal.r_heater;
    let p_hvac = model.hvac_power(decision, w.t_ambient)?;
    let p_prop = vehicle::propulsion_power(model.vehicle, decision.f_propulsion, state.v);
    let (p_cell, _) = battery::pack_aggregate(model.pack, p_prop, p_hvac, p_heater);
    let batt_state = BatteryState { soc: state.soc, v_c: model.v_c_meas, t_batt: state.t_batt };
    let i_cell = battery::cell_current_from_power(model.cell, &batt_state, p_cell)?;
    Ok(StepPowers { p_propulsion: p_prop, p_hvac, p_heater, i_cell })
}

/// Evaluate the per-step powers at `(state, decision, preview)`.
pub fn step_powers(
    model: &PredictionModel,
    state: &MpcState,
    decision: &MpcDecision,
    w: &PreviewPoint,
) -> Result<StepPowers, CoreError> {
    step_powers_with(model, state, decision, w, false)
}

pub(crate) fn predict_dynamics_with(
    model: &PredictionModel,
    state: &MpcState,
    decision: &MpcDecision,
    w: &PreviewPoint,
    dt: f64,
    smoothed: bool,
) -> Result<MpcState, CoreError> {
    let powers = step_powers_with(model, state, decision, w, smoothed)?;
    let batt_state = BatteryState { soc: state.soc, v_c: model.v_c_meas, t_batt: state.t_batt };
    let q_gen = battery::ohmic_heat(model.cell, &batt_state, powers.i_cell);
    let soc = state.soc - dt * powers.i_cell / model.cell.q;
    let t_batt = state.t_batt
        + dt * (q_gen + powers.p_heater - model.thermal.ha() * (state.t_batt - w.t_ambient))
            / (model.thermal.m_batt * model.thermal.c_p_batt);
    let accel = (decision.f_propulsion
        - vehicle::resistive_force(model.vehicle, state.v, w.theta))
        / model.vehicle.m_vehicle;
    let v = (state.v + dt * accel).max(0.0);
    Ok(MpcState { soc, t_batt, v })
}

/// One `dt` step of the three horizon states, plant-consistent (exact
/// actuator clamps).
pub fn predict_dynamics(
    model: &PredictionModel,
    state: &MpcState,
    decision: &MpcDecision,
    w: &PreviewPoint,
    dt: f64,
) -> Result<MpcState, CoreError> {
    predict_dynamics_with(model, state, decision, w, dt, false)
}

/// Normalized per-step running cost `w1*E_hvac + w2*E_prop + w3*E_heater`
/// for weights already divided by the nominal magnitudes.
pub fn step_cost(powers: &StepPowers, weights_norm: &[f64; 3], dt: f64) -> f64 {
    (weights_norm[0] * powers.p_hvac
        + weights_norm[1] * powers.p_propulsion
        + weights_norm[2] * powers.p_heater)
        * dt
}

/// A full rollout: predicted states (length `N+1`), per-step powers, and the
/// summed normalized cost.
pub struct Rollout {
    pub states: Vec<MpcState>,
    pub powers: Vec<StepPowers>,
    pub cost: f64,
}

/// Roll the decision sequence forward from `x0` against the preview.
pub fn rollout(
    model: &PredictionModel,
    x0: &MpcState,
    decisions: &[MpcDecision],
    preview: &[PreviewPoint],
    weights_norm: &[f64; 3],
    dt: f64,
) -> Result<Rollout, CoreError> {
    debug_assert!(decisions.len() <= preview.len());
    let mut states = Vec::with_capacity(decisions.len() + 1);
    let mut powers = Vec::with_capacity(decisions.len());
    let mut cost = 0.0;
    let mut x = *x0;
    states.push(x);
    for (u, w) in decisions.iter().zip(preview) {
        let p = step_powers(model, &x, u, w)?;
        cost += step_cost(&p, weights_norm, dt);
        x = predict_dynamics(model, &x, u, w, dt)?;
        powers.push(p);
        states.push(x);
    }
    Ok(Rollout { states, powers, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::{CellParams, PackParams, ThermalParams};
    use crate::control::LowLevelGains;
    use crate::mpc::surrogate::{fit_hvac_surrogate, SurrogateDomain};
    use crate::vehicle::VehicleParams;

    struct Ctx {
        vehicle: VehicleParams,
        cell: CellParams,
        thermal: ThermalParams,
        pack: PackParams,
        gains: LowLevelGains,
        surrogate: HvacSurrogate,
    }

    fn ctx() -> Ctx {
        let fit = PropertyFit::default_r134a();
        let surrogate = fit_hvac_surrogate(
            &fit,
            &CycleOffsets::default(),
            &CompressorParams::default(),
            &CabinParams::default(),
            SurrogateDomain::default(),
        )
        .unwrap();
        Ctx {
            vehicle: VehicleParams::default(),
            cell: CellParams::default(),
            thermal: ThermalParams::default(),
            pack: PackParams::default(),
            gains: LowLevelGains::default(),
            surrogate,
        }
    }

    fn model<'a>(c: &'a Ctx, t_cabin: f64) -> PredictionModel<'a> {
        PredictionModel {
            vehicle: &c.vehicle,
            cell: &c.cell,
            thermal: &c.thermal,
            pack: &c.pack,
            gains: &c.gains,
            hvac: HvacPower::Surrogate(&c.surrogate),
            v_c_meas: 0.0,
            t_cabin_meas: t_cabin,
        }
    }

    #[test]
    fn equilibrium_point_is_nearly_fixed() {
        let c = ctx();
        // thermal states at ambient, force balancing resistive load, no hvac
        // demand (setpoint at ambient-equal cabin temperature)
        let m = model(&c, 282.0);
        let v0 = 29.0576;
        let f_bal = vehicle::resistive_force(&c.vehicle, v0, 0.0);
        let x0 = MpcState { soc: 0.5, t_batt: 282.0, v: v0 };
        let u = MpcDecision { f_propulsion: f_bal, t_cabin_set: 282.0, t_batt_set: 270.0 };
        let w = PreviewPoint { theta: 0.0, t_ambient: 282.0 };
        let x1 = predict_dynamics(&m, &x0, &u, &w, 1.0).unwrap();
        assert!((x1.v - v0).abs() < 1e-9);
        // only the ohmic heat of the propulsion current perturbs the fixed
        // point (sub-millikelvin per step)
        assert!((x1.t_batt - 282.0).abs() < 1e-3);
        // propulsion current drains soc slightly; everything else is quiet
        assert!(x1.soc < x0.soc && x0.soc - x1.soc < 1e-4);
    }

    #[test]
    fn heater_smoothing_matches_clamp_away_from_corners() {
        let c = ctx();
        let m = model(&c, 278.0);
        // the exact law matches the low-level controller everywhere
        assert_eq!(m.heater_current(299.0, 293.0), 3.0);
        assert_eq!(m.heater_current(330.0, 293.0), c.gains.i_heater_max);
        assert_eq!(m.heater_current(283.0, 293.0), 0.0);
        // the smoothed law tracks it away from the corners but keeps live
        // gradients through them
        let i_mid = m.heater_current_smoothed(299.0, 293.0); // raw 3 A
        assert!((i_mid - 3.0).abs() < 0.1, "{i_mid}");
        let i_hi = m.heater_current_smoothed(330.0, 293.0);
        assert!((i_hi - c.gains.i_heater_max).abs() < 1e-5, "{i_hi}");
        let i_lo = m.heater_current_smoothed(283.0, 293.0);
        assert!(i_lo < 0.02, "{i_lo}");
        let bump = m.heater_current_smoothed(283.0 + 0.1, 293.0) - i_lo;
        assert!(bump > 0.0, "smoothed gradient must stay alive below the band");
    }

    #[test]
    fn soc_step_matches_module_composition() {
        let c = ctx();
        let m = model(&c, 290.0);
        let x0 = MpcState { soc: 0.2, t_batt: 293.0, v: 29.0576 };
        let u = MpcDecision { f_propulsion: 432.92, t_cabin_set: 288.15, t_batt_set: 283.15 };
        let w = PreviewPoint { theta: 0.0, t_ambient: 273.0 };
        let p = step_powers(&m, &x0, &u, &w).unwrap();
        let x1 = predict_dynamics(&m, &x0, &u, &w, 1.0).unwrap();
        // speed is balanced, soc decreases by i/Q
        assert!((x1.v - x0.v).abs() < 1e-4);
        assert!((x0.soc - x1.soc - p.i_cell / c.cell.q).abs() < 1e-15);
        assert!(p.i_cell > 0.0);
    }

    #[test]
    fn rollout_cost_accumulates_normalized_powers() {
        let c = ctx();
        let m = model(&c, 290.0);
        let x0 = MpcState { soc: 0.5, t_batt: 293.0, v: 29.0 };
        let u = MpcDecision { f_propulsion: 500.0, t_cabin_set: 290.0, t_batt_set: 283.15 };
        let w = PreviewPoint { theta: 0.0, t_ambient: 270.0 };
        let wn = [1.0 / NOMINAL_HVAC_W, 1.0 / NOMINAL_PROPULSION_W, 1.0 / NOMINAL_HEATER_W];
        let r = rollout(&m, &x0, &[u, u], &[w, w], &wn, 1.0).unwrap();
        assert_eq!(r.states.len(), 3);
        assert_eq!(r.powers.len(), 2);
        assert!(r.cost > 0.0);
        let manual: f64 = r.powers.iter().map(|p| step_cost(p, &wn, 1.0)).sum();
        assert_eq!(r.cost, manual);
    }
}
