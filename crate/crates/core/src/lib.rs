//! Conditional tabular GAN training over vertically partitioned data.
//!
//! One server and `N` clients each hold a shard of the generator and of the
//! discriminator. Clients own disjoint column sets of the same aligned rows,
//! exchange only intermediate logits and gradients with the server, and shuffle
//! their rows in lock step at the end of every round so that the conditional
//! row indices the server sees cannot be joined across rounds.
//!
//! The crate is `no_std` (with `alloc`) so the numerical core can be embedded;
//! file formats, the TCP transport and the command-line driver live in the
//! `vtgan` companion crate.
//!
//! Module map:
//!
//! * [`data`]: schemas, tables, column assignment and synchronised shuffling.
//! * [`encode`]: one-hot, mode-specific and mixed column encoders.
//! * [`nn`]: a small reverse-mode autodiff kernel with double backprop.
//! * [`cond`]: conditional vector construction and the cv filter network.
//! * [`protocol`]: partition plans, shards, messages and the training session.
//! * [`centralized`]: the monolithic reference GAN.
//! * [`attack`]: the honest-but-curious server reconstruction oracle.
//! * [`eval`]: fidelity metrics and ML utility.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attack;
pub mod centralized;
pub mod cond;
pub mod data;
pub mod encode;
pub mod eval;
pub mod fixtures;
pub mod math;
pub mod nn;
pub mod protocol;
pub mod rng;
