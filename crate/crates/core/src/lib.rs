//! Market-clearing and fairness engine for community peer-to-peer electricity
//! trading on radial distribution feeders.
//!
//! The crate is `no_std` (it only needs `alloc`) and contains every algorithmic
//! piece of the system:
//!
//! * [`lp`] – a bounded-variable revised simplex solver used by every model.
//! * [`grid`] – LinDistFlow voltage sensitivities of a radial network.
//! * [`market`] – peers, bids, fairness groups and bid matching.
//! * [`clearing`] – the revenue-maximising reference clearing, per-peer
//!   revenues, and the distributionally fair clearing driven by the
//!   alternating algorithm.
//! * [`fairness`] – per-group trade distributions, 1-D Wasserstein distances
//!   and the unfairness index.
//! * [`scenario`] – seeded generation of case-study communities.
//!
//! File formats, reports and the command line live in the `p2pfair` crate.
#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod clearing;
pub mod error;
pub mod fairness;
pub mod grid;
pub mod lp;
pub mod market;
pub mod scenario;


pub use error::{Error, Result};
