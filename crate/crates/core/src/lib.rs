//! Hierarchical neural dynamic policies.
//!
//! The crate is `no_std` (with `alloc`) and holds every piece of numerical
//! machinery: discrete DMP integration and regression ([`dmp`]), a small
//! reverse-mode differentiation engine with dense layers, spatial softmax and
//! a differentiable DMP integrator ([`graph`], [`net`], [`optim`]), neural
//! dynamic policies and their imitation losses ([`policy`]), the
//! local-to-global trainers for imitation and reinforcement learning
//! ([`il`], [`rl`]) and the seeded 2D tasks they are evaluated on
//! ([`envs`]).
//!
//! Persistence, configuration files and the command line live in the `hndp`
//! companion crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod dmp;
pub mod envs;
pub mod error;
pub mod graph;
pub mod il;
pub mod net;
pub mod optim;
pub mod policy;
pub mod rl;

mod rng;

pub use error::{Error, Result};
pub use rng::{derive_seed, rng_from_seed, Rng};
