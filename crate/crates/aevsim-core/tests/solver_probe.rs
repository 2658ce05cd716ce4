//! Focused probes of the horizon solver on window-active instants.

use aevsim_core::battery::{CellParams, PackParams, ThermalParams};
use aevsim_core::cabin::CabinParams;
use aevsim_core::control::LowLevelGains;
use aevsim_core::mpc::{
    fit_hvac_surrogate, solve_horizon, HvacPower, MpcConfig, MpcDecision, MpcState, NoopClock,
    PredictionModel, PreviewPoint, SurrogateDomain,
};
use aevsim_core::refrigerant::{CompressorParams, CycleOffsets, PropertyFit};
use aevsim_core::vehicle::VehicleParams;

#[test]
fn window_active_solve_raises_battery_setpoint() {
    let fit = PropertyFit::default_r134a();
    let vehicle = VehicleParams::default();
    let cell = CellParams::default();
    let thermal = ThermalParams::default();
    let pack = PackParams::default();
    let gains = LowLevelGains::default();
    let surrogate = fit_hvac_surrogate(
        &fit,
        &CycleOffsets::default(),
        &CompressorParams::default(),
        &CabinParams::default(),
        SurrogateDomain::default(),
    )
    .unwrap();
    let model = PredictionModel {
        vehicle: &vehicle,
        cell: &cell,
        thermal: &thermal,
        pack: &pack,
        gains: &gains,
        hvac: HvacPower::Surrogate(&surrogate),
        v_c_meas: 0.03,
        t_cabin_meas: 288.0,
    };
    let config = MpcConfig::default();
    // mid-run snapshot: window active for every step at t=200 with ramp 460
    let x0 = MpcState { soc: 0.19, t_batt: 295.0, v: 29.0 };
    let preview: Vec<PreviewPoint> =
        (0..20).map(|_| PreviewPoint { theta: 0.0, t_ambient: 271.0 }).collect();
    let warm = vec![
        MpcDecision { f_propulsion: 450.0, t_cabin_set: 288.15, t_batt_set: 290.0 };
        20
    ];
    for max_it in [1usize, 3, 6, 10, 20, 30] {
        let mut cfg = config.clone();
        cfg.solver.max_iterations = max_it;
        let sol = solve_horizon(
            &cfg, &model, &x0, &preview, 200.0, 6000.0, &warm, &NoopClock,
        )
        .unwrap();
        println!(
            "max_it={max_it:>2} iters={} status={:?} cost={:.4} slack={:.3} K beta0={:.2} betaN={:.2} tbN={:.2}",
            sol.iterations,
            sol.status,
            sol.cost,
            sol.window_slack_kelvin,
            sol.decisions[0].t_batt_set,
            sol.decisions[19].t_batt_set,
            sol.predicted_states[20].t_batt
        );
    }
    let sol = solve_horizon(
        &config, &model, &x0, &preview, 200.0, 6000.0, &warm, &NoopClock,
    )
    .unwrap();
    assert!(
        sol.decisions[0].t_batt_set > 305.0,
        "expected aggressive preconditioning, got beta0 = {}",
        sol.decisions[0].t_batt_set
    );
}
