//! Decision procedure for multi-agent deontic STIT logics.
//!
//! The crate is organized bottom-up:
//!
//! * [`syntax`] — formulas in negation normal form, parsing and printing;
//! * [`sequent`] — labelled sequents over relational atoms;
//! * [`semantics`] — relational models, frame validation, model checking,
//!   and bounded countermodel enumeration;
//! * [`calculus`] — the sequent rules and the derivation checker;
//! * [`search`] — the proof-search loop that decides validity, returning
//!   either a checkable derivation or a finite countermodel;
//! * [`tasks`] — normative reasoning tasks (duty, compliance, joint
//!   fulfillment) phrased as validity questions over a knowledge base.
//!
//! Everything here is `no_std` + `alloc`; IO and file formats live in the
//! companion CLI crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod calculus;
pub mod search;
pub mod semantics;
pub mod sequent;
pub mod syntax;
pub mod tasks;

pub use syntax::{AgentId, Formula, FormulaSet};
