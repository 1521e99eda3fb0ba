//! Independent oracles and the acceptance checks built on them.
//!
//! Nothing in here is used by the training path; these routines exist to
//! cross-check it (tests, `selftest`).

pub mod fd;
pub mod naive;
pub mod oracles;
pub mod scenes;
pub mod criteria;
