//! Two-stage planning of PHEV parking lots in a radial industrial microgrid.
//!
//! Stage 1 picks sites and sizes for the lots (binary siting, continuous
//! sizing) to minimize annualized investment, O&M and expected-ENS cost under
//! linearized network constraints. Stage 2 schedules hourly charge/discharge
//! and market buy/sell per representative day to maximize lot-owner profit
//! under SOC dynamics and system power balance. Both stages run on the
//! embedded bounded-variable simplex / branch-and-bound solver in [`optim`].

pub mod cli;
pub mod fleet;
pub mod grid;
pub mod optim;
pub mod resources;
pub mod stage1;
pub mod stage2;
