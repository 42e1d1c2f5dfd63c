//! Canonical p-adic parallel transport for unipotent connections.
//!
//! The crate is organized bottom up: exact p-adic arithmetic, the
//! branch-of-log ring K_st = K[l_p], rigid-analytic disk series and their
//! log extension, unipotent log connections with canonical frames,
//! Frobenius structures (F-crystals), (phi, N)-module weight machinery,
//! and global transport applications (iterated integrals, polylogarithms).

pub mod connection;
pub mod error;
pub mod formexpr;
pub mod frobenius;
pub mod logext;
pub mod logring;
pub mod mat;
pub mod padic;
pub mod phimod;
pub mod ratfun;
pub mod series;
pub mod transport;

pub use error::{Error, Result};
pub use logring::{plog, KstElement};
pub use padic::{PadicContext, PadicNumber};
