//! Quadratic surrogate of the steady-state battery-side HVAC power. The full
//! refrigerant cycle is too nonlinear to sit inside the horizon problem, so
//! the cost term uses a fitted quadratic in (cabin setpoint, cabin
//! temperature, ambient temperature). Truth values come from bisection on
//! compressor speed through the full cycle model.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::cabin::{self, CabinParams};
use crate::error::CoreError;
use crate::linalg::{lstsq, Mat};
use crate::refrigerant::{
    run_heating_cycle, state1_from_ambient, CompressorParams, CycleOffsets, PropertyFit,
};

/// Box of validity for the surrogate fit, with per-axis grid counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateDomain {
    pub t_cabin_set: (f64, f64),
    pub t_cabin: (f64, f64),
    pub t_ambient: (f64, f64),
    pub grid: (usize, usize, usize),
}

impl Default for SurrogateDomain {
    fn default() -> Self {
        SurrogateDomain {
            t_cabin_set: (285.15, 302.15),
            t_cabin: (265.15, 302.15),
            t_ambient: (248.15, 282.15),
            grid: (6, 5, 6),
        }
    }
}

/// Fitted quadratic `E_hvac(t_cabin_set, t_cabin, t_ambient)` in watts,
/// clamped at zero. Inputs are centered/scaled internally for conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct HvacSurrogate {
    coeffs: [f64; 10],
    centers: [f64; 3],
    scale: f64,
    pub domain: SurrogateDomain,
    /// RMS of relative errors against the cycle-model truth on the fit grid.
    pub rms_rel_err: f64,
}

impl HvacSurrogate {
    fn basis(&self, c: f64, tc: f64, ta: f64) -> [f64; 10] {
        let x = (c - self.centers[0]) / self.scale;
        let y = (tc - self.centers[1]) / self.scale;
        let z = (ta - self.centers[2]) / self.scale;
        [1.0, x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]
    }

    /// Battery-side steady HVAC power [W], clamped at zero.
    pub fn power(&self, t_cabin_set: f64, t_cabin: f64, t_ambient: f64) -> f64 {
        let b = self.basis(t_cabin_set, t_cabin, t_ambient);
        let raw: f64 = b.iter().zip(&self.coeffs).map(|(bi, ci)| bi * ci).sum();
        raw.max(0.0)
    }

    /// First derivative with respect to the cabin setpoint [W/K].
    pub fn d_power_d_set(&self, t_cabin_set: f64, t_cabin: f64, t_ambient: f64) -> f64 {
        if self.power(t_cabin_set, t_cabin, t_ambient) == 0.0 {
            return 0.0;
        }
        let x = (t_cabin_set - self.centers[0]) / self.scale;
        let y = (t_cabin - self.centers[1]) / self.scale;
        let z = (t_ambient - self.centers[2]) / self.scale;
        (self.coeffs[1] + 2.0 * self.coeffs[4] * x + self.coeffs[7] * y + self.coeffs[8] * z)
            / self.scale
    }

    /// Second derivative with respect to the cabin setpoint [W/K^2], floored
    /// at zero so cost models stay convex.
    pub fn d2_power_d_set2(&self) -> f64 {
        (2.0 * self.coeffs[4] / (self.scale * self.scale)).max(0.0)
    }
}

/// Steady-state battery-side power that holds the cabin at `t_cabin_set`
/// against `t_ambient`, found by bisection on compressor speed through the
/// full cycle model. Returns 0 when no heating is needed, and the power at
/// the capacity limit when even full capacity cannot hold the setpoint.
pub fn steady_hold_power(
    fit: &PropertyFit,
    offsets: &CycleOffsets,
    comp: &CompressorParams,
    cabin: &CabinParams,
    t_cabin_set: f64,
    t_ambient: f64,
) -> Result<f64, CoreError> {
    let q_needed = cabin::q_loss(cabin, t_cabin_set, t_ambient);
    if q_needed <= 0.0 {
        return Ok(0.0);
    }
    // guard the evaporator-side range before bisection
    state1_from_ambient(fit, offsets, t_ambient)?;
    let t_return = t_cabin_set;
    let cycle_at = |omega: f64| {
        run_heating_cycle(fit, offsets, comp, cabin, omega, t_ambient, t_return, None)
    };
    let top = cycle_at(comp.omega_max)?;
    if top.q_cond <= q_needed {
        return Ok(top.p_battery);
    }
    let (mut lo, mut hi) = (0.0, comp.omega_max);
    let mut result = top.p_battery;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let cyc = cycle_at(mid)?;
        if cyc.q_cond < q_needed {
            lo = mid;
        } else {
            hi = mid;
            result = cyc.p_battery;
        }
        if hi - lo < 1e-6 * comp.omega_max {
            break;
        }
    }
    Ok(result)
}

/// Fit the quadratic surrogate over the domain grid.
pub fn fit_hvac_surrogate(
    fit: &PropertyFit,
    offsets: &CycleOffsets,
    comp: &CompressorParams,
    cabin: &CabinParams,
    domain: SurrogateDomain,
) -> Result<HvacSurrogate, CoreError> {
    let (nc, ntc, nta) = domain.grid;
    if nc < 2 || ntc < 2 || nta < 2 {
        return Err(CoreError::InvalidArgument {
            what: "surrogate grid needs at least 2 points per axis".into(),
        });
    }
    let axis = |range: (f64, f64), n: usize, i: usize| {
        range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
    };
    let centers = [
        0.5 * (domain.t_cabin_set.0 + domain.t_cabin_set.1),
        0.5 * (domain.t_cabin.0 + domain.t_cabin.1),
        0.5 * (domain.t_ambient.0 + domain.t_ambient.1),
    ];
    let proto = HvacSurrogate {
        coeffs: [0.0; 10],
        centers,
        scale: 10.0,
        domain,
        rms_rel_err: 0.0,
    };

    let mut rows = Vec::new();
    let mut truths = Vec::new();
    for ic in 0..nc {
        let c = axis(domain.t_cabin_set, nc, ic);
        for ita in 0..nta {
            let ta = axis(domain.t_ambient, nta, ita);
            let truth = steady_hold_power(fit, offsets, comp, cabin, c, ta)?;
            for itc in 0..ntc {
                let tc = axis(domain.t_cabin, ntc, itc);
                rows.push(proto.basis(c, tc, ta));
                truths.push(truth);
            }
        }
    }
    let mut a = Mat::zeros(rows.len(), 10);
    let mut weights = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            *a.at_mut(r, k) = *v;
        }
        // relative weighting keeps the low-load corner accurate
        let w = 1.0 / truths[r].max(10.0);
        weights.push(w * w);
    }
    let coeffs_v = lstsq(&a, &truths, Some(&weights));
    let mut coeffs = [0.0; 10];
    coeffs.copy_from_slice(&coeffs_v);

    let mut sur = HvacSurrogate { coeffs, ..proto };
    let mut sq_sum = 0.0;
    let mut n_pos = 0usize;
    for (row, truth) in rows.iter().zip(&truths) {
        let pred: f64 = row.iter().zip(&sur.coeffs).map(|(bi, ci)| bi * ci).sum();
        if *truth > 1.0 {
            let rel = (pred.max(0.0) - truth) / truth;
            sq_sum += rel * rel;
            n_pos += 1;
        }
    }
    sur.rms_rel_err = if n_pos > 0 { (sq_sum / n_pos as f64).sqrt() } else { 0.0 };
    Ok(sur)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PropertyFit, CycleOffsets, CompressorParams, CabinParams) {
        (
            PropertyFit::default_r134a(),
            CycleOffsets::default(),
            CompressorParams::default(),
            CabinParams::default(),
        )
    }

    #[test]
    fn zero_load_point_costs_nothing() {
        let (fit, off, comp, cabin) = setup();
        let p = steady_hold_power(&fit, &off, &comp, &cabin, 280.0, 280.0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn surrogate_matches_bisection_oracle_within_ten_percent() {
        let (fit, off, comp, cabin) = setup();
        let sur =
            fit_hvac_surrogate(&fit, &off, &comp, &cabin, SurrogateDomain::default()).unwrap();
        assert!(sur.rms_rel_err < 0.10, "rms {}", sur.rms_rel_err);
        // spot check: holding 295 K against 268 K ambient
        let truth = steady_hold_power(&fit, &off, &comp, &cabin, 295.0, 268.0).unwrap();
        let pred = sur.power(295.0, 295.0, 268.0);
        assert!(truth > 0.0);
        assert!(((pred - truth) / truth).abs() < 0.10, "pred {pred} vs truth {truth}");
    }

    #[test]
    fn surrogate_power_nonnegative_and_monotone_in_setpoint_on_grid() {
        let (fit, off, comp, cabin) = setup();
        let d = SurrogateDomain::default();
        let sur = fit_hvac_surrogate(&fit, &off, &comp, &cabin, d).unwrap();
        for ia in 0..8 {
            let ta = 250.0 + 4.0 * ia as f64;
            let mut prev = -1.0;
            for ic in 0..12 {
                let c = 285.15 + (302.15 - 285.15) * ic as f64 / 11.0;
                let p = sur.power(c, 290.0, ta);
                assert!(p >= 0.0);
                assert!(p >= prev - 1e-9, "not monotone at ta={ta} c={c}: {p} < {prev}");
                prev = p;
            }
        }
    }

    #[test]
    fn hold_power_rises_with_colder_ambient() {
        let (fit, off, comp, cabin) = setup();
        let warm = steady_hold_power(&fit, &off, &comp, &cabin, 295.0, 275.0).unwrap();
        let cold = steady_hold_power(&fit, &off, &comp, &cabin, 295.0, 255.0).unwrap();
        assert!(cold > warm, "{cold} vs {warm}");
    }
}
