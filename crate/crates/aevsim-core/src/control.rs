//! The three lower-level controllers: propulsion feedforward, proportional
//! battery-heater control, and proportional HVAC compressor control. All
//! outputs saturate at their actuator bounds; heating actuators are
//! one-sided because neither can cool.

use crate::error::CoreError;

/// Gains and actuator limits for the proportional loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowLevelGains {
    /// Heater proportional gain [A/K].
    pub k_b: f64,
    /// Compressor proportional gain [RPM/K].
    pub k_h: f64,
    /// Heater current limit [A].
    pub i_heater_max: f64,
    /// Compressor speed limit [RPM].
    pub omega_max: f64,
}

impl Default for LowLevelGains {
    fn default() -> Self {
        LowLevelGains { k_b: 0.5, k_h: 300.0, i_heater_max: 5.0, omega_max: 6000.0 }
    }
}

impl LowLevelGains {
    pub fn validate(&self) -> Result<(), CoreError> {
        if [self.k_b, self.k_h, self.i_heater_max, self.omega_max]
            .iter()
            .any(|v| !v.is_finite() || *v <= 0.0)
        {
            return Err(CoreError::InvalidArgument {
                what: "low-level gains and limits must be strictly positive".into(),
            });
        }
        Ok(())
    }
}

/// Propulsion feedforward: the system-level force command passes straight
/// through, saturated to the actuator range.
pub fn propulsion_feedforward(f_cmd: f64, f_min: f64, f_max: f64) -> f64 {
    f_cmd.clamp(f_min, f_max)
}

/// Proportional heater control `i = K_b*(T_set - T_batt)`, clamped to
/// `[0, i_heater_max]`.
pub fn heater_control(gains: &LowLevelGains, t_batt_set: f64, t_batt: f64) -> f64 {
    (gains.k_b * (t_batt_set - t_batt)).clamp(0.0, gains.i_heater_max)
}

/// Proportional compressor control `omega = K_h*(T_req - T_cabin)`, clamped
/// to `[0, omega_max]`.
pub fn hvac_control(gains: &LowLevelGains, t_cabin_req: f64, t_cabin: f64) -> f64 {
    (gains.k_h * (t_cabin_req - t_cabin)).clamp(0.0, gains.omega_max)
}
