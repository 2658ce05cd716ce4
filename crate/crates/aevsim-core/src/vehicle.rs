//! Longitudinal vehicle model: propulsion force against rolling friction,
//! grade, and aerodynamic drag, with distance and battery-side propulsion
//! power accounting.

use alloc::format;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;

/// Longitudinal model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Vehicle mass [kg].
    pub m_vehicle: f64,
    /// Rolling friction coefficient.
    pub mu: f64,
    /// Air density [kg/m^3].
    pub rho_air: f64,
    /// Frontal area [m^2].
    pub a_frontal: f64,
    /// Drag coefficient.
    pub c_d: f64,
    /// Gravitational acceleration [m/s^2].
    pub g: f64,
    /// Regeneration efficiency in (0, 1]: fraction of negative wheel power
    /// credited back to the battery.
    pub eta_regen: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            m_vehicle: 1800.0,
            mu: 0.01,
            rho_air: 1.2,
            a_frontal: 2.2,
            c_d: 0.23,
            g: 9.81,
            eta_regen: 0.65,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        let pos = [
            self.m_vehicle,
            self.mu,
            self.rho_air,
            self.a_frontal,
            self.c_d,
            self.g,
            self.eta_regen,
        ];
        if pos.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "vehicle parameters must be strictly positive".into(),
            });
        }
        for (name, v) in [("mu", self.mu), ("c_d", self.c_d), ("eta_regen", self.eta_regen)] {
            if v > 1.0 {
                return Err(CoreError::InvalidArgument {
                    what: format!("vehicle.{name} must lie in (0, 1], got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Longitudinal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Speed [m/s], never negative.
    pub v: f64,
    /// Distance traveled [m].
    pub x_dist: f64,
}

/// Total resistive force at speed `v` on a slope of angle `theta` [N]:
/// `(mu*cos(theta) + sin(theta))*g*m + 0.5*rho*A*C_d*v^2`. Negative on a
/// downhill steep enough for the grade term to dominate.
pub fn resistive_force(params: &VehicleParams, v: f64, theta: f64) -> f64 {
    let (sin_t, cos_t) = theta.sin_cos();
    (params.mu * cos_t + sin_t) * params.g * params.m_vehicle
        + 0.5 * params.rho_air * params.a_frontal * params.c_d * v * v
}

/// One explicit-Euler step of the longitudinal dynamics. Speed is clamped at
/// zero: rolling friction cannot push the vehicle backwards. Distance uses
/// the speed at the start of the step (left Riemann sum).
pub fn step(
    params: &VehicleParams,
    state: &VehicleState,
    f_propulsion: f64,
    theta: f64,
    dt: f64,
) -> VehicleState {
    debug_assert!(dt > 0.0);
    let accel = (f_propulsion - resistive_force(params, state.v, theta)) / params.m_vehicle;
    VehicleState {
        v: (state.v + dt * accel).max(0.0),
        x_dist: state.x_dist + state.v * dt,
    }
}

/// Battery-side propulsion power [W]: traction draws `f*v`; negative wheel
/// power is credited back at the regeneration efficiency.
pub fn propulsion_power(params: &VehicleParams, f_propulsion: f64, v: f64) -> f64 {
    let wheel = f_propulsion * v;
    if wheel >= 0.0 {
        wheel
    } else {
        params.eta_regen * wheel
    }
}
