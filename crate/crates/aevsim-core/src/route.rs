//! Road-grade and ambient-temperature profiles: synthetic generation,
//! GPS-waypoint ingestion, and the interpolated lookups that feed both the
//! plant and the MPC preview.
//!
//! Grade is stored as a ratio (rise over horizontal run, i.e. tan of the
//! slope angle); consumers convert with `theta = atan(grade)` wherever the
//! longitudinal dynamics need sin/cos.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;

/// Mean spherical Earth radius used for great-circle distances [m].
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Validation band for ambient temperature [K].
pub const AMBIENT_RANGE_K: (f64, f64) = (200.0, 330.0);

/// Largest admissible grade magnitude after validation.
pub const GRADE_LIMIT: f64 = 1.0;

/// One time-indexed environment sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteSample {
    /// Time since route start [s].
    pub t: f64,
    /// Road slope ratio (tan of slope angle), dimensionless.
    pub grade: f64,
    /// Ambient temperature [K].
    pub t_ambient: f64,
}

/// Time-indexed route profile. Lookup anywhere in `[0, duration]` is defined
/// by linear interpolation; queries outside are clamped to the end samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteProfile {
    samples: Vec<RouteSample>,
    duration: f64,
}

/// A GPS waypoint with elevation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub lat: f64,
    pub lon: f64,
    /// Elevation above datum [m].
    pub elevation: f64,
}

/// One distance-indexed grade sample (grade applies from this station to the
/// next one).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSample {
    /// Distance from route start [m].
    pub d: f64,
    pub grade: f64,
}

/// Distance-indexed route profile produced by waypoint ingestion. Carries
/// grade only; ambient temperature is attached when converting to a
/// time-indexed profile or overlaid by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceProfile {
    samples: Vec<DistanceSample>,
    length: f64,
}

fn validate_sample(t: f64, grade: f64, t_ambient: f64) -> Result<(), CoreError> {
    if !t.is_finite() || !grade.is_finite() || !t_ambient.is_finite() {
        return Err(CoreError::InvalidArgument { what: format!("non-finite sample at t={t}") });
    }
    if grade.abs() > GRADE_LIMIT {
        return Err(CoreError::InvalidArgument {
            what: format!("grade {grade} exceeds limit {GRADE_LIMIT} at t={t}"),
        });
    }
    if t_ambient < AMBIENT_RANGE_K.0 || t_ambient > AMBIENT_RANGE_K.1 {
        return Err(CoreError::InvalidArgument {
            what: format!("ambient {t_ambient} K outside [200, 330] K at t={t}"),
        });
    }
    Ok(())
}

impl RouteProfile {
    /// Build a profile from validated samples. Times must be strictly
    /// increasing and start at zero or later.
    pub fn new(samples: Vec<RouteSample>) -> Result<Self, CoreError> {
        if samples.is_empty() {
            return Err(CoreError::InvalidArgument { what: "empty route profile".into() });
        }
        let mut prev = f64::NEG_INFINITY;
        for s in &samples {
            validate_sample(s.t, s.grade, s.t_ambient)?;
            if s.t <= prev {
                return Err(CoreError::InvalidArgument {
                    what: format!("sample times not strictly increasing near t={}", s.t),
                });
            }
            prev = s.t;
        }
        let duration = samples.last().unwrap().t;
        Ok(RouteProfile { samples, duration })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn samples(&self) -> &[RouteSample] {
        &self.samples
    }

    /// Linear interpolation, clamped at both ends.
    pub fn grade_at(&self, t: f64) -> f64 {
        self.interp(t).0
    }

    /// Linear interpolation, clamped at both ends.
    pub fn ambient_at(&self, t: f64) -> f64 {
        self.interp(t).1
    }

    fn interp(&self, t: f64) -> (f64, f64) {
        let s = &self.samples;
        if t <= s[0].t {
            return (s[0].grade, s[0].t_ambient);
        }
        if t >= self.duration {
            let last = s.last().unwrap();
            return (last.grade, last.t_ambient);
        }
        // binary search for the bracketing segment
        let mut lo = 0;
        let mut hi = s.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s[mid].t <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (&s[lo], &s[hi]);
        let w = (t - a.t) / (b.t - a.t);
        (a.grade + w * (b.grade - a.grade), a.t_ambient + w * (b.t_ambient - a.t_ambient))
    }

    /// Replace the ambient column with a sinusoid `mean + amp*sin(2*pi*t/period)`.
    pub fn with_sinusoidal_ambient(
        mut self,
        mean: f64,
        amp: f64,
        period: f64,
    ) -> Result<Self, CoreError> {
        if period <= 0.0 {
            return Err(CoreError::InvalidArgument { what: "ambient period must be > 0".into() });
        }
        for s in &mut self.samples {
            s.t_ambient = mean + amp * (core::f64::consts::TAU * s.t / period).sin();
            validate_sample(s.t, s.grade, s.t_ambient)?;
        }
        Ok(self)
    }
}

impl DistanceProfile {
    pub fn new(samples: Vec<DistanceSample>) -> Result<Self, CoreError> {
        if samples.len() < 2 {
            return Err(CoreError::InvalidArgument {
                what: "distance profile needs at least 2 stations".into(),
            });
        }
        let mut prev = f64::NEG_INFINITY;
        for s in &samples {
            if !s.d.is_finite() || !s.grade.is_finite() || s.grade.abs() > GRADE_LIMIT {
                return Err(CoreError::InvalidArgument {
                    what: format!("bad distance sample at d={}", s.d),
                });
            }
            if s.d <= prev {
                return Err(CoreError::InvalidArgument {
                    what: format!("stations not strictly increasing near d={}", s.d),
                });
            }
            prev = s.d;
        }
        let length = samples.last().unwrap().d;
        Ok(DistanceProfile { samples, length })
    }

    /// Total horizontal route length [m].
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn samples(&self) -> &[DistanceSample] {
        &self.samples
    }

    /// Grade at a distance station, linearly interpolated and end-clamped.
    pub fn grade_at(&self, d: f64) -> f64 {
        let s = &self.samples;
        if d <= s[0].d {
            return s[0].grade;
        }
        if d >= self.length {
            return s.last().unwrap().grade;
        }
        let mut lo = 0;
        let mut hi = s.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if s[mid].d <= d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (a, b) = (&s[lo], &s[hi]);
        let w = (d - a.d) / (b.d - a.d);
        a.grade + w * (b.grade - a.grade)
    }
}

/// Synthesize a sinusoidal grade and ambient profile sampled every `dt`:
/// `grade(t) = grade_amp*sin(2*pi*t/grade_period)` and
/// `t_ambient(t) = temp_mean + temp_amp*sin(2*pi*t/temp_period)`.
#[allow(clippy::too_many_arguments)]
pub fn generate_sinusoidal(
    grade_amp: f64,
    grade_period: f64,
    temp_mean: f64,
    temp_amp: f64,
    temp_period: f64,
    duration: f64,
    dt: f64,
) -> Result<RouteProfile, CoreError> {
    if grade_period <= 0.0 || temp_period <= 0.0 {
        return Err(CoreError::InvalidArgument { what: "periods must be > 0".into() });
    }
    if duration <= 0.0 || dt <= 0.0 {
        return Err(CoreError::InvalidArgument { what: "duration and dt must be > 0".into() });
    }
    let n = (duration / dt).ceil() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = (i as f64 * dt).min(duration);
        samples.push(RouteSample {
            t,
            grade: grade_amp * (core::f64::consts::TAU * t / grade_period).sin(),
            t_ambient: temp_mean + temp_amp * (core::f64::consts::TAU * t / temp_period).sin(),
        });
        if t >= duration {
            break;
        }
    }
    RouteProfile::new(samples)
}

/// Great-circle (haversine) distance between two waypoints on a spherical
/// Earth [m].
pub fn haversine_m(a: &Waypoint, b: &Waypoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Ingest GPS waypoints into a distance-indexed grade profile.
///
/// Per-segment grade is `delta elevation / horizontal distance` with the
/// horizontal distance from the haversine formula, followed by a centered
/// moving average over `smoothing_window` segments (must be odd; window 1 is
/// the identity). Grade `i` is attached to the station at the start of
/// segment `i`; the final station repeats the last smoothed grade so lookups
/// clamp sensibly.
pub fn ingest_waypoints(
    points: &[Waypoint],
    smoothing_window: usize,
) -> Result<DistanceProfile, CoreError> {
    if points.len() < 2 {
        return Err(CoreError::InvalidArgument { what: "need at least 2 waypoints".into() });
    }
    if smoothing_window == 0 || smoothing_window % 2 == 0 {
        return Err(CoreError::InvalidArgument {
            what: format!("smoothing window must be odd and >= 1, got {smoothing_window}"),
        });
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.lat.is_finite() && p.lon.is_finite() && p.elevation.is_finite())
            || p.lat.abs() > 90.0
            || p.lon.abs() > 180.0
        {
            return Err(CoreError::InvalidArgument { what: format!("bad waypoint at index {i}") });
        }
    }
    let n_seg = points.len() - 1;
    let mut station = Vec::with_capacity(points.len());
    let mut raw_grade = Vec::with_capacity(n_seg);
    let mut d = 0.0;
    station.push(0.0);
    for i in 0..n_seg {
        let step = haversine_m(&points[i], &points[i + 1]);
        if step <= 0.0 {
            return Err(CoreError::DegenerateSegment { index: i });
        }
        raw_grade.push((points[i + 1].elevation - points[i].elevation) / step);
        d += step;
        station.push(d);
    }
    // centered moving average over segments, shrinking near the ends
    let half = smoothing_window / 2;
    let mut smoothed = Vec::with_capacity(n_seg);
    for i in 0..n_seg {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n_seg - 1);
        let sum: f64 = raw_grade[lo..=hi].iter().sum();
        smoothed.push(sum / (hi - lo + 1) as f64);
    }
    let mut samples = Vec::with_capacity(points.len());
    for i in 0..n_seg {
        samples.push(DistanceSample { d: station[i], grade: smoothed[i] });
    }
    samples.push(DistanceSample { d: station[n_seg], grade: smoothed[n_seg - 1] });
    DistanceProfile::new(samples)
}

/// Convert a distance-indexed profile to a time-indexed one assuming a
/// constant preview speed, attaching a constant ambient temperature that the
/// caller may overwrite with [`RouteProfile::with_sinusoidal_ambient`].
pub fn resample_to_time(
    profile: &DistanceProfile,
    speed_assumption: f64,
    t_ambient: f64,
) -> Result<RouteProfile, CoreError> {
    if speed_assumption <= 0.0 {
        return Err(CoreError::InvalidArgument { what: "preview speed must be > 0".into() });
    }
    let samples = profile
        .samples
        .iter()
        .map(|s| RouteSample { t: s.d / speed_assumption, grade: s.grade, t_ambient })
        .collect();
    RouteProfile::new(samples)
}
