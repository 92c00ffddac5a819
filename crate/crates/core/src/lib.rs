//! Joint subcarrier, power and delay allocation with admission control for a
//! two-tier cloud radio access network serving tactile-internet user pairs.

pub mod dc_solver;
pub mod experiments;
pub mod orchestrator;
pub mod phy_rates;
pub mod qos_delay;
pub mod scenario;
