//! Data valuation for a trading consortium.
//!
//! Members grant the consortium access to receipt-style spending records.
//! A trading pipeline turns any subset of members' data into a trade and a
//! realized profit or loss; that pipeline is the characteristic function of
//! a cooperative game, and each member's Shapley value in that game prices
//! their data. The crate computes those values exactly for small consortia
//! and estimates them by sampling for larger ones, then turns them into
//! payouts.

pub mod cli;
pub mod coalition;
pub mod domain;
pub mod error;
pub mod game;
pub mod io;
pub mod payout;
pub mod pipeline;
pub mod rng;
pub mod shapley;
pub mod synthgen;

pub use coalition::Coalition;
pub use domain::{DataGrant, Field, MemberDataset, MemberRecord, PriceSeries, SignalRecord};
pub use error::{Error, Result};
pub use game::{CoalitionGame, GameHandle, Outcome, PipelineGame, TableGame};
pub use pipeline::{Action, CoalitionMask, CoalitionValue, PipelineConfig, TradeDecision};
pub use shapley::{Method, ValuationEstimate};
