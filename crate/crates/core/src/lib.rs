//! Ex-post LMP market clearing under DC power flow and strategic curtailment
//! optimization for a generation aggregator.

pub mod analysis;
pub mod cases;
pub mod error;
pub mod generate;
pub mod lp;
pub mod market;
pub mod model;
pub mod singlebus;
pub mod treedp;

pub use error::{Error, Result};
pub use market::{clear_market, KktReport, LambdaBounds, MarketOutcome};
pub use model::{Bus, CurtailmentVector, Line, Network};
