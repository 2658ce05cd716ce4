//! Single-zone cabin air energy balance: shell losses to ambient plus heated
//! inlet air from the HVAC condenser. Outflow mass equals inflow, so the
//! cabin air mass stays constant and the air returned to the HVAC is at the
//! cabin temperature.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;

/// Cabin thermal parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CabinParams {
    /// Air mass held in the cabin [kg].
    pub m_cabin_air: f64,
    /// Specific heat of air [J/(kg K)].
    pub c_p_air: f64,
    /// Shell loss surface area [m^2].
    pub a_loss: f64,
    /// Shell heat-transfer coefficient [W/(m^2 K)].
    pub h_loss: f64,
    /// Inlet air mass flow from the HVAC [kg/s].
    pub mdot_air_in: f64,
}

impl Default for CabinParams {
    fn default() -> Self {
        CabinParams {
            // 2.5 m^3 cabin volume at 1.2 kg/m^3
            m_cabin_air: 3.0,
            c_p_air: 1005.0,
            a_loss: 7.0,
            h_loss: 3.5,
            mdot_air_in: 0.10,
        }
    }
}

impl CabinParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        let vals =
            [self.m_cabin_air, self.c_p_air, self.a_loss, self.h_loss, self.mdot_air_in];
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "cabin parameters must be strictly positive".into(),
            });
        }
        Ok(())
    }
}

/// Cabin state: a single air temperature [K].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CabinState {
    pub t_cabin: f64,
}

/// Shell heat loss to ambient [W]; negative when the cabin is colder than
/// the surroundings.
pub fn q_loss(params: &CabinParams, t_cabin: f64, t_ambient: f64) -> f64 {
    params.h_loss * params.a_loss * (t_cabin - t_ambient)
}

/// One explicit-Euler step of the cabin energy balance
/// `m*C_p*dT/dt = -Q_loss + mdot*C_p*(T_air_in - T_cabin)`.
pub fn step(
    params: &CabinParams,
    state: &CabinState,
    t_air_in: f64,
    t_ambient: f64,
    dt: f64,
) -> CabinState {
    debug_assert!(dt > 0.0);
    let inflow = params.mdot_air_in * params.c_p_air * (t_air_in - state.t_cabin);
    let dtemp = (inflow - q_loss(params, state.t_cabin, t_ambient))
        / (params.m_cabin_air * params.c_p_air);
    CabinState { t_cabin: state.t_cabin + dt * dtemp }
}

/// Inlet temperature that holds `t_cabin` steady against losses to
/// `t_ambient`: the algebraic zero of the energy balance.
pub fn steady_state_inlet(params: &CabinParams, t_cabin: f64, t_ambient: f64) -> f64 {
    t_cabin + q_loss(params, t_cabin, t_ambient) / (params.mdot_air_in * params.c_p_air)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn q_loss_matches_hand_values() {
        let p = CabinParams::default();
        assert!((q_loss(&p, 293.0, 268.0) - 612.5).abs() < 1e-9);
        assert_eq!(q_loss(&p, 280.0, 280.0), 0.0);
        assert!((q_loss(&p, 278.0, 288.0) + 245.0).abs() < 1e-9);
    }

    #[test]
    fn steady_state_inlet_matches_algebraic_solve() {
        let p = CabinParams::default();
        // 293 + 612.5/(0.1*1005) = 299.09 K
        let t_in = steady_state_inlet(&p, 293.0, 268.0);
        assert!((t_in - 299.094).abs() < 5e-3, "{t_in}");
        // feeding that inlet back leaves the state unchanged up to rounding
        let s = step(&p, &CabinState { t_cabin: 293.0 }, t_in, 268.0, 0.1);
        assert!((s.t_cabin - 293.0).abs() < 1e-12);
    }

    #[test]
    fn all_equal_temperatures_are_a_fixed_point() {
        let p = CabinParams::default();
        let s0 = CabinState { t_cabin: 285.0 };
        let s1 = step(&p, &s0, 285.0, 285.0, 1.0);
        assert_eq!(s1.t_cabin, 285.0);
    }

    #[test]
    fn euler_tracks_closed_form_exponential() {
        // constant inputs make the balance a linear first-order ODE:
        // dT/dt = -(k_loss + k_in)/C * T + (k_in*T_in + k_loss*T_amb)/C
        let p = CabinParams::default();
        let (t_in, t_amb) = (310.0, 268.0);
        let c = p.m_cabin_air * p.c_p_air;
        let k_loss = p.h_loss * p.a_loss;
        let k_in = p.mdot_air_in * p.c_p_air;
        let a = (k_loss + k_in) / c;
        let t_inf = (k_in * t_in + k_loss * t_amb) / (k_loss + k_in);
        let dt = 0.01;
        let mut s = CabinState { t_cabin: 278.0 };
        let mut t = 0.0;
        while t < 600.0 - 1e-9 {
            s = step(&p, &s, t_in, t_amb, dt);
            t += dt;
            let exact = t_inf + (278.0 - t_inf) * (-a * t).exp();
            let rel = ((s.t_cabin - exact) / exact).abs();
            assert!(rel < 1e-3, "t={t}: euler {} vs exact {exact}", s.t_cabin);
        }
    }

    proptest! {
        #[test]
        fn hotter_inlet_never_cools_the_cabin(
            t_cab in 260.0..310.0f64,
            t_amb in 240.0..300.0f64,
            t_in in 250.0..340.0f64,
            bump in 0.01..30.0f64,
        ) {
            let p = CabinParams::default();
            let s = CabinState { t_cabin: t_cab };
            let cold = step(&p, &s, t_in, t_amb, 0.1).t_cabin;
            let hot = step(&p, &s, t_in + bump, t_amb, 0.1).t_cabin;
            prop_assert!(hot >= cold);
        }
    }
}
