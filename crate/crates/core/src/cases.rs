//! Bundled example networks.

use crate::error::Result;
use crate::model::{Bus, Line, Network};

const SIX_BUS_ANALOG: &str = include_str!("../../../cases/six_bus_analog.json");

/// Two buses joined by one line limited to 10 MW. Bus 1 has 10 MW of cheap
/// aggregator generation, bus 2 has 10 MW of demand and is the slack.
pub fn two_bus() -> Network {
    Network::new(
        vec![
            Bus::new(1, 10.0, 10.0, 0.0).with_share(10.0),
            Bus::new(2, 20.0, 0.0, 10.0),
        ],
        vec![Line::new(1, 1, 2, 1.0, 10.0)],
        2,
    )
    .expect("bundled case is valid")
    .with_name("two_bus")
}

/// Three-bus ring with unit reactances, lines 1->2, 1->3, 2->3, slack bus 3.
pub fn ring3() -> Network {
    Network::new(
        vec![
            Bus::new(1, 10.0, 20.0, 0.0).with_share(5.0),
            Bus::new(2, 20.0, 0.0, 10.0),
            Bus::new(3, 30.0, 0.0, 10.0),
        ],
        vec![
            Line::new(1, 1, 2, 1.0, 20.0),
            Line::new(2, 1, 3, 1.0, 12.0),
            Line::new(3, 2, 3, 1.0, 20.0),
        ],
        3,
    )
    .expect("bundled case is valid")
    .with_name("ring3")
}

/// Six-bus meshed network with a single aggregator at bus 1 and a profitable
/// curtailment jump.
pub fn six_bus_analog() -> Result<Network> {
    Network::from_json_str(SIX_BUS_ANALOG)
}

/// Looks up a bundled case by name.
pub fn by_name(name: &str) -> Option<Network> {
    match name {
        "two_bus" => Some(two_bus()),
        "ring3" => Some(ring3()),
        "six_bus_analog" => six_bus_analog().ok(),
        _ => None,
    }
}
