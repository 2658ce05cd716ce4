//! First-order equivalent-circuit cell model (series resistance plus one RC
//! branch), lumped thermal model with a resistive preconditioning heater,
//! and pack-level aggregation from subsystem power demands down to cell
//! current.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;

/// Open-circuit voltage as a function of state of charge. Non-decreasing on
/// [0, 1] by validation.
#[derive(Debug, Clone, PartialEq)]
pub enum OcvCurve {
    /// `v = intercept + slope * soc`.
    Linear { intercept: f64, slope: f64 },
    /// Piecewise-linear interpolation through `(soc, volts)` knots,
    /// end-clamped outside the knot range.
    Table(Vec<(f64, f64)>),
}

impl Default for OcvCurve {
    fn default() -> Self {
        // spans the interior of the cell's 2.5-4.2 V operating window
        OcvCurve::Linear { intercept: 3.0, slope: 1.2 }
    }
}

impl OcvCurve {
    pub fn validate(&self) -> Result<(), CoreError> {
        match self {
            OcvCurve::Linear { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() || *slope < 0.0 {
                    return Err(CoreError::InvalidArgument {
                        what: "linear OCV needs finite intercept and non-negative slope".into(),
                    });
                }
            }
            OcvCurve::Table(knots) => {
                if knots.len() < 2 {
                    return Err(CoreError::InvalidArgument {
                        what: "OCV table needs at least 2 knots".into(),
                    });
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(CoreError::InvalidArgument {
                            what: "OCV table soc values must be strictly increasing".into(),
                        });
                    }
                    if w[1].1 < w[0].1 {
                        return Err(CoreError::InvalidArgument {
                            what: "OCV table must be non-decreasing in voltage".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn voltage(&self, soc: f64) -> f64 {
        match self {
            OcvCurve::Linear { intercept, slope } => intercept + slope * soc,
            OcvCurve::Table(knots) => {
                if soc <= knots[0].0 {
                    return knots[0].1;
                }
                if soc >= knots[knots.len() - 1].0 {
                    return knots[knots.len() - 1].1;
                }
                let mut lo = 0;
                let mut hi = knots.len() - 1;
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if knots[mid].0 <= soc {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let (s0, v0) = knots[lo];
                let (s1, v1) = knots[hi];
                v0 + (v1 - v0) * (soc - s0) / (s1 - s0)
            }
        }
    }
}

/// Equivalent-circuit cell parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    /// Capacity [A s].
    pub q: f64,
    /// Series resistance [ohm].
    pub r0: f64,
    /// RC-branch resistance [ohm].
    pub r1: f64,
    /// RC-branch capacitance [F].
    pub c1: f64,
    pub ocv: OcvCurve,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            q: 1.4322e4,
            r0: 1.3513e-2,
            r1: 1.028e-2,
            c1: 5.2584e3,
            ocv: OcvCurve::default(),
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if [self.q, self.r0, self.r1, self.c1].iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "cell parameters must be strictly positive".into(),
            });
        }
        self.ocv.validate()
    }

    /// RC time constant `r1*c1` [s].
    pub fn tau(&self) -> f64 {
        self.r1 * self.c1
    }
}

/// Lumped thermal parameters of the representative cell plus its heater.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    /// Cell mass [kg].
    pub m_batt: f64,
    /// Specific heat [J/(kg K)].
    pub c_p_batt: f64,
    /// Convective coefficient [W/(m^2 K)].
    pub h_batt: f64,
    /// Surface area [m^2].
    pub a_batt: f64,
    /// Heater resistance [ohm].
    pub r_heater: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            m_batt: 70e-3,
            c_p_batt: 950.0,
            h_batt: 10.0,
            a_batt: 5.3e-3,
            r_heater: 4.0,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        let vals = [self.m_batt, self.c_p_batt, self.h_batt, self.a_batt, self.r_heater];
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(CoreError::InvalidArgument {
                what: "battery thermal parameters must be strictly positive".into(),
            });
        }
        Ok(())
    }

    /// Convective conductance `h*A` [W/K].
    pub fn ha(&self) -> f64 {
        self.h_batt * self.a_batt
    }

    /// Thermal time constant `m*C_p/(h*A)` [s].
    pub fn tau(&self) -> f64 {
        self.m_batt * self.c_p_batt / self.ha()
    }
}

/// Pack architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackParams {
    pub n_series: usize,
    pub n_parallel: usize,
    /// Number of heater units counted in the pack electrical load. The
    /// thermal model is a pack-lumped representative cell, so the default is
    /// a single unit.
    pub heater_scale: f64,
}

impl Default for PackParams {
    fn default() -> Self {
        PackParams { n_series: 100, n_parallel: 56, heater_scale: 1.0 }
    }
}

impl PackParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n_series < 1 || self.n_parallel < 1 {
            return Err(CoreError::InvalidArgument {
                what: "pack must have at least one series and one parallel element".into(),
            });
        }
        if !self.heater_scale.is_finite() || self.heater_scale < 0.0 {
            return Err(CoreError::InvalidArgument {
                what: "heater_scale must be finite and non-negative".into(),
            });
        }
        Ok(())
    }

    pub fn cell_count(&self) -> f64 {
        (self.n_series * self.n_parallel) as f64
    }
}

/// Battery state of the representative cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// State of charge in [0, 1].
    pub soc: f64,
    /// RC-branch voltage [V].
    pub v_c: f64,
    /// Cell temperature [K].
    pub t_batt: f64,
}

/// Whether the state-of-charge clamp engaged during an electrical step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SocSaturation {
    None,
    Empty,
    Full,
}

/// Terminal voltage `OCV(soc) - v_c - i*r0` [V]; `i_cell > 0` discharges.
pub fn terminal_voltage(cell: &CellParams, state: &BatteryState, i_cell: f64) -> f64 {
    cell.ocv.voltage(state.soc) - state.v_c - i_cell * cell.r0
}

/// One explicit-Euler step of the electrical states (coulomb counting and the
/// RC branch). SoC is clamped to [0, 1]; the clamp is reported so the
/// harness can surface an empty-battery event.
pub fn electrical_step(
    cell: &CellParams,
    state: &BatteryState,
    i_cell: f64,
    dt: f64,
) -> (BatteryState, SocSaturation) {
    debug_assert!(dt > 0.0);
    let raw_soc = state.soc - dt * i_cell / cell.q;
    let v_c = state.v_c + dt * (-state.v_c / (cell.r1 * cell.c1) + i_cell / cell.c1);
    let (soc, sat) = if raw_soc <= 0.0 {
        (0.0, SocSaturation::Empty)
    } else if raw_soc >= 1.0 {
        (1.0, SocSaturation::Full)
    } else {
        (raw_soc, SocSaturation::None)
    };
    (BatteryState { soc, v_c, t_batt: state.t_batt }, sat)
}

/// One explicit-Euler step of the lumped thermal balance
/// `m*C_p*dT/dt = q_gen + p_heater - h*A*(T - T_ambient)`.
pub fn thermal_step(
    thermal: &ThermalParams,
    state: &BatteryState,
    q_gen: f64,
    p_heater: f64,
    t_ambient: f64,
    dt: f64,
) -> BatteryState {
    debug_assert!(dt > 0.0);
    debug_assert!(q_gen >= 0.0 && p_heater >= 0.0);
    let dtemp = (q_gen + p_heater - thermal.ha() * (state.t_batt - t_ambient))
        / (thermal.m_batt * thermal.c_p_batt);
    BatteryState { t_batt: state.t_batt + dt * dtemp, ..*state }
}

/// Total ECM dissipation `i^2*r0 + v_c^2/r1` [W]; non-negative for any
/// current direction, so regeneration also heats.
pub fn ohmic_heat(cell: &CellParams, state: &BatteryState, i_cell: f64) -> f64 {
    i_cell * i_cell * cell.r0 + state.v_c * state.v_c / cell.r1
}

/// Cell current that delivers `p_cell` watts at the terminals, i.e. the
/// smaller-magnitude root of `p = i*(OCV - v_c) - i^2*r0`. Negative power
/// (charging) yields negative current.
pub fn cell_current_from_power(
    cell: &CellParams,
    state: &BatteryState,
    p_cell: f64,
) -> Result<f64, CoreError> {
    let e = cell.ocv.voltage(state.soc) - state.v_c;
    let disc = e * e - 4.0 * cell.r0 * p_cell;
    if disc < 0.0 {
        return Err(CoreError::PowerLimit {
            requested: p_cell,
            max_deliverable: e * e / (4.0 * cell.r0),
        });
    }
    Ok((e - disc.sqrt()) / (2.0 * cell.r0))
}

/// Combine subsystem battery-side loads into the per-cell power demand and
/// the heater power that feeds the representative-cell thermal model.
pub fn pack_aggregate(
    pack: &PackParams,
    p_propulsion: f64,
    p_hvac: f64,
    p_heater_unit: f64,
) -> (f64, f64) {
    let load = p_propulsion + p_hvac + pack.heater_scale * p_heater_unit;
    (load / pack.cell_count(), p_heater_unit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(soc: f64, v_c: f64) -> BatteryState {
        BatteryState { soc, v_c, t_batt: 293.0 }
    }

    #[test]
    fn terminal_voltage_matches_hand_values() {
        let cell = CellParams::default();
        // open circuit at soc 0.5 with the default linear curve
        assert_eq!(terminal_voltage(&cell, &state(0.5, 0.0), 0.0), 3.6);
        // 3.6 - 0.0411 - 4*0.013513 = 3.504848
        let v = terminal_voltage(&cell, &state(0.5, 0.0411), 4.0);
        assert!((v - 3.504848).abs() < 1e-9, "{v}");
    }

    #[test]
    fn coulomb_counting_is_exact_for_the_euler_sum() {
        let cell = CellParams::default();
        let mut s = state(0.5, 0.0);
        let dt = 0.1;
        for _ in 0..100 {
            s = electrical_step(&cell, &s, 4.0, dt).0;
        }
        // delta soc = -40/14322 over 10 s at 4 A
        let expected = 0.5 - 40.0 / 14322.0;
        assert!((s.soc - expected).abs() < 1e-15, "{} vs {expected}", s.soc);
    }

    #[test]
    fn rc_branch_tracks_analytic_exponential() {
        let cell = CellParams::default();
        let tau = cell.tau();
        assert!((tau - 54.056).abs() < 5e-3);
        let dt = 0.01;
        let mut s = state(0.8, 0.0);
        let mut t = 0.0;
        // 0.1% relative over five time constants, per the module oracle
        while t < 5.0 * tau {
            s = electrical_step(&cell, &s, 4.0, dt).0;
            t += dt;
            let exact = 4.0 * cell.r1 * (1.0 - (-t / tau).exp());
            assert!(
                ((s.v_c - exact) / exact).abs() < 1e-3,
                "t={t}: {} vs {exact}",
                s.v_c
            );
        }
        // spot value from the closed form at 10 s
        let exact_10 = 4.0 * cell.r1 * (1.0 - (-10.0 / tau).exp());
        assert!((exact_10 - 0.00694).abs() < 2e-5);
    }

    #[test]
    fn zero_current_zero_vc_is_equilibrium() {
        let cell = CellParams::default();
        let s0 = state(0.42, 0.0);
        let (s1, sat) = electrical_step(&cell, &s0, 0.0, 1.0);
        assert_eq!(s1, s0);
        assert_eq!(sat, SocSaturation::None);
    }

    #[test]
    fn soc_clamps_and_reports_empty() {
        let cell = CellParams::default();
        let (s, sat) = electrical_step(&cell, &state(1e-7, 0.0), 10.0, 1.0);
        assert_eq!(s.soc, 0.0);
        assert_eq!(sat, SocSaturation::Empty);
        let (s, sat) = electrical_step(&cell, &state(1.0 - 1e-9, 0.0), -10.0, 1.0);
        assert_eq!(s.soc, 1.0);
        assert_eq!(sat, SocSaturation::Full);
    }

    #[test]
    fn thermal_step_matches_hand_rate() {
        let th = ThermalParams::default();
        assert!((th.ha() - 0.053).abs() < 1e-12);
        let s0 = BatteryState { soc: 0.5, v_c: 0.0, t_batt: 293.0 };
        let s1 = thermal_step(&th, &s0, 0.0, 100.0, 268.0, 1.0);
        // (100 - 0.053*25)/66.5 = 1.4838 K/s
        assert!((s1.t_batt - 293.0 - 1.4838).abs() < 5e-5, "{}", s1.t_batt);
        // fixed point at ambient with no input
        let s2 = thermal_step(&th, &BatteryState { t_batt: 268.0, ..s0 }, 0.0, 0.0, 268.0, 1.0);
        assert_eq!(s2.t_batt, 268.0);
    }

    #[test]
    fn thermal_fixed_point_reached_within_seven_time_constants() {
        let th = ThermalParams::default();
        let t_amb = 268.0;
        let p = 2.0;
        let t_eq = t_amb + p / th.ha();
        let dt = 0.5;
        let mut s = BatteryState { soc: 0.5, v_c: 0.0, t_batt: 268.0 };
        let steps = (7.0 * th.tau() / dt) as usize;
        for _ in 0..steps {
            s = thermal_step(&th, &s, 0.0, p, t_amb, dt);
        }
        assert!(((s.t_batt - t_eq) / (t_eq - t_amb)).abs() < 0.01, "{} vs {t_eq}", s.t_batt);
    }

    #[test]
    fn ohmic_heat_matches_hand_value() {
        let cell = CellParams::default();
        assert_eq!(ohmic_heat(&cell, &state(0.5, 0.0), 0.0), 0.0);
        // 16*0.013513 + 0.0411^2/0.01028 = 0.3805280
        let q = ohmic_heat(&cell, &state(0.5, 0.0411), 4.0);
        assert!((q - 0.3805280).abs() < 1e-6, "{q}");
    }

    #[test]
    fn power_to_current_matches_quadratic_root() {
        let cell = CellParams::default();
        let s = state(0.5, 0.0);
        assert_eq!(cell_current_from_power(&cell, &s, 0.0).unwrap(), 0.0);
        let i = cell_current_from_power(&cell, &s, 20.2).unwrap();
        assert!((i - 5.734).abs() < 5e-3, "{i}");
        // charging power gives negative current
        let i_chg = cell_current_from_power(&cell, &s, -20.0).unwrap();
        assert!(i_chg < 0.0);
    }

    #[test]
    fn over_limit_power_reports_max_deliverable() {
        let cell = CellParams::default();
        let s = state(0.5, 0.0);
        let p_max = 3.6 * 3.6 / (4.0 * cell.r0);
        match cell_current_from_power(&cell, &s, p_max * 1.0001) {
            Err(CoreError::PowerLimit { max_deliverable, .. }) => {
                assert!((max_deliverable - p_max).abs() < 1e-9);
            }
            other => panic!("expected power limit, got {other:?}"),
        }
        // exactly at the limit still solves
        assert!(cell_current_from_power(&cell, &s, p_max).is_ok());
    }

    #[test]
    fn pack_aggregate_divides_load_across_cells() {
        let pack = PackParams::default();
        let (p_cell, p_th) = pack_aggregate(&pack, 113_000.0, 0.0, 0.0);
        assert!((p_cell - 20.179).abs() < 1e-3, "{p_cell}");
        assert_eq!(p_th, 0.0);
        assert_eq!(pack_aggregate(&pack, 0.0, 0.0, 0.0), (0.0, 0.0));
        let (p_cell, p_th) = pack_aggregate(&pack, 0.0, 0.0, 40.0);
        assert!((p_cell - 40.0 / 5600.0).abs() < 1e-12);
        assert_eq!(p_th, 40.0);
    }

    #[test]
    fn ocv_table_interpolates_and_clamps() {
        let curve = OcvCurve::Table(alloc::vec![(0.0, 2.8), (0.5, 3.6), (1.0, 4.15)]);
        curve.validate().unwrap();
        assert_eq!(curve.voltage(0.25), 3.2);
        assert_eq!(curve.voltage(-0.1), 2.8);
        assert_eq!(curve.voltage(1.2), 4.15);
        let bad = OcvCurve::Table(alloc::vec![(0.0, 3.0), (0.5, 2.9)]);
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn terminal_voltage_strictly_decreases_with_current(
            soc in 0.05..1.0f64, i in -50.0..50.0f64
        ) {
            let cell = CellParams::default();
            let s = state(soc, 0.01);
            let v1 = terminal_voltage(&cell, &s, i);
            let v2 = terminal_voltage(&cell, &s, i + 1.0);
            prop_assert!(v2 < v1);
        }

        #[test]
        fn current_and_voltage_are_mutually_consistent(
            soc in 0.05..1.0f64, p in -150.0..200.0f64
        ) {
            let cell = CellParams::default();
            let s = state(soc, 0.005);
            if let Ok(i) = cell_current_from_power(&cell, &s, p) {
                let recovered = i * terminal_voltage(&cell, &s, i);
                let scale = p.abs().max(1.0);
                prop_assert!(((recovered - p) / scale).abs() < 1e-9);
            }
        }

        #[test]
        fn ohmic_heat_is_never_negative(i in -100.0..100.0f64, v_c in -0.5..0.5f64) {
            let cell = CellParams::default();
            prop_assert!(ohmic_heat(&cell, &state(0.5, v_c), i) >= 0.0);
        }
    }
}
