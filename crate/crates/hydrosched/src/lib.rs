//! Multi-market hydro scheduling via a planner-trader decomposition.
//!
//! The library models a cascade of reservoirs trading on day-ahead spot and
//! reserve markets. Daily reservoir targets come from an affine-decision-rule
//! planner solved by sample average approximation; hourly bids and dispatch
//! come from small deterministic trader LPs whose optima provably match the
//! underlying stochastic programs. A brute-force scenario-tree oracle is
//! included to verify those equivalences numerically at small scale.

pub mod cascade;
pub mod frontend;
pub mod lpcore;
pub mod oracle;
pub mod planner;
pub mod simulator;
pub mod stochastic;
pub mod trader;
