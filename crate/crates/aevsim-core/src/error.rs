use alloc::string::String;
use core::fmt;

/// Error type shared by all core modules, grouped by failure family so the
/// CLI can map each family to a stable exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A precondition on an argument was violated.
    InvalidArgument { what: String },
    /// Two consecutive waypoints share the same coordinates; the segment
    /// index is zero-based.
    DegenerateSegment { index: usize },
    /// A refrigerant property was requested outside the fitted validity
    /// range; both bounds are reported in kelvin.
    PropertyRange { value: f64, min: f64, max: f64 },
    /// Compressor outlet enthalpy fell below the inlet enthalpy.
    InvalidCycle { h1: f64, h2: f64 },
    /// The condenser air-coupling fixed point did not converge; carries the
    /// last iterate of the supply-air temperature.
    CycleCoupling { last_t_air_in: f64 },
    /// The requested cell power exceeds what the cell can deliver; reports
    /// the deliverable maximum in watts.
    PowerLimit { requested: f64, max_deliverable: f64 },
    /// The battery ran empty during a simulation step.
    EmptyBattery,
    /// MPC horizon setup or solve failed structurally (not mere
    /// infeasibility, which is reported through the solution status).
    Solver { what: String },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidArgument { what } => write!(f, "invalid argument: {what}"),
            CoreError::DegenerateSegment { index } => {
                write!(f, "degenerate waypoint segment at index {index}: zero horizontal distance")
            }
            CoreError::PropertyRange { value, min, max } => {
                write!(f, "temperature {value} K outside fitted range [{min}, {max}] K")
            }
            CoreError::InvalidCycle { h1, h2 } => {
                write!(f, "invalid cycle: outlet enthalpy {h2} kJ/kg below inlet {h1} kJ/kg")
            }
            CoreError::CycleCoupling { last_t_air_in } => {
                write!(f, "condenser coupling did not converge; last supply-air iterate {last_t_air_in} K")
            }
            CoreError::PowerLimit { requested, max_deliverable } => {
                write!(f, "cell power {requested} W exceeds deliverable maximum {max_deliverable} W")
            }
            CoreError::EmptyBattery => write!(f, "battery empty"),
            CoreError::Solver { what } => write!(f, "solver failure: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
