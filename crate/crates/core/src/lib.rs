//! Exact-arithmetic combinatorics on the clopen algebra of the Cantor space.
//!
//! Everything here is computed over arbitrary-precision rationals; there are
//! no tolerances and no floating point on any result path. The crate
//! provides:
//!
//! * [`clopen`] — finite-level clopen sets as atom bit masks, the product
//!   measure, and the coordinate asymmetry functionals `phi`/`psi`;
//! * [`prop_t`] — certificates that a finite clopen family is uniformly
//!   approximated by level-`n` atoms, plus the open-set counterexample
//!   generator;
//! * [`tau`] — finite algebra generation and the near-identity Boolean
//!   homomorphism into a level algebra;
//! * [`talagrand`] — the balanced-subset solver: pick a prescribed-measure
//!   subset minimizing a coordinate-balance score by steepest-descent swap
//!   search, with an exhaustive oracle and a Paley–Zygmund check;
//! * [`measures`] — finitely additive signed measures on level algebras,
//!   total variation, growing-norm witness sequences, oscillation bounds,
//!   and validation of supplied absolutely-continuous/orthogonal splits;
//! * [`construction`] — the good-quadruple validator and the finite
//!   extension engine built from the pieces above;
//! * [`cli`] — one deterministic command-line surface over all of it.

pub mod cli;
pub mod clopen;
pub mod config;
pub mod construction;
pub mod doc;
pub mod manifest;
pub mod measures;
pub mod prop_t;
pub mod rational;
pub mod sample;
pub mod talagrand;
pub mod tau;

pub use clopen::{AtomId, ClopenSet};
pub use config::{Config, ScaleReport};
pub use rational::Rat;
