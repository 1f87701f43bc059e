//! Bundled scenarios on the ten-cell benchmark network.

use crate::error::Result;
use crate::io::parse_scenario;
use crate::network::Scenario;

pub const PULSE_BOTTLENECK_JSON: &str = include_str!("../scenarios/pulse_bottleneck.json");
pub const CONSTANT_INFLOW_JSON: &str = include_str!("../scenarios/constant_inflow.json");

/// T = 25: inflow pulse (0, 8, 16, 8) on cell 1, cell 4 capacity dropping to
/// 0 at steps 5–6 and 3 at steps 7–8.
pub fn pulse_bottleneck() -> Result<Scenario> {
    parse_scenario(PULSE_BOTTLENECK_JSON)
}

/// T = 200: constant inflow 5 on cell 1, no capacity drop.
pub fn constant_inflow() -> Result<Scenario> {
    parse_scenario(CONSTANT_INFLOW_JSON)
}
