//! Over-the-air hierarchical federated learning on a clustered wireless network.
//!
//! Edge servers form a hard-core Poisson process, each surrounded by an annulus
//! of devices. Devices aggregate gradients inside their cluster over the air,
//! and a group of collaborating clusters aggregates models the same way once per
//! global round. The crate has three layers:
//!
//! - [`spatial`] and [`channel`] sample topologies, fading and power control;
//! - [`ota`] synthesizes the analog superpositions and the receive-side estimators;
//! - [`learn`] runs MultiAirFed and the HierFed baseline on top of them.
//!
//! [`analytics`] evaluates the matching closed forms (interference power Ψ,
//! downlink constant β, active-device moments, error bounds, the convergence
//! bound, latency) and [`harness`] wires everything into seeded experiments,
//! a validation suite and CSV output.
//!
//! ```
//! use multiairfed::{analytics, spatial::SystemParams};
//!
//! let params = SystemParams::reference(1e-7);
//! let budget = analytics::LinkBudget::compute(&params).unwrap();
//! assert!(budget.rho > 6.4e-6 && budget.rho < 6.6e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod channel;
pub mod error;
pub mod harness;
pub mod learn;
pub mod ota;
pub mod rng;
pub mod spatial;

pub use error::{Error, Result};
