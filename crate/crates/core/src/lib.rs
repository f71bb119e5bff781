//! Bilinear steering of sign-change points for `u_t = u_xx + v(x,t) u + f(u)` on (0,1).
//!
//! The crate provides the grid and discrete functions ([`grid`]), admissible
//! reaction terms ([`nonlinearity`]), a Crank–Nicolson solver ([`solver`]),
//! smooth profiles with prescribed zeros ([`profile`]), zero-curve tracking
//! ([`tracker`]), the two-phase multiplicative steering ([`steering`]) and the
//! round-based strategy that moves every zero to its target ([`strategy`]),
//! loaded from TOML scenario files ([`scenario`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixtures;
pub mod grid;
pub mod nonlinearity;
pub mod profile;
pub mod scenario;
pub mod solver;
pub mod steering;
pub mod strategy;
pub mod tracker;

pub use error::*;
pub use grid::{Grid, GridFunction};
pub use nonlinearity::Nonlinearity;
