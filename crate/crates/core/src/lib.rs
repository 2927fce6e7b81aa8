//! Bargaining over a replicable information good in a random-matching market.
//!
//! A fixed set of sellers hold information worth `v` to each buyer. Each period
//! one unordered pair of agents is drawn uniformly; an informed/uninformed pair
//! may trade at a Nash-bargaining price, after which the buyer can resell. The
//! crate computes, for any Markov trading policy, the unique bargaining prices
//! and continuation values ([`bargain`]), extends the state space with
//! intrinsically worthless tokens ([`token`]), checks whether a policy is
//! consistent with bargaining ([`verify`]), studies the frequent-offer limit
//! ([`limit`]) and validates the value functions by Monte Carlo ([`sim`]).
//!
//! Data-parallel loops (lattice levels, sweep points, simulated episodes) run
//! on rayon when the `parallel` feature is enabled; see [`Exec`].

pub mod bargain;
mod error;
mod exec;
pub mod io;
pub mod limit;
pub mod model;
pub mod policy;
pub mod sim;
pub mod token;
pub mod verify;

pub use bargain::{
    base_case_price, effective_recognition, solve_market, solve_market_with, symmetric_solve, Link,
    PriceSystem, Solution, StateSolution, SymmetricSolution,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{AgentId, InfoState, Item, LinkSets, MarketConfig, Role, TradeOpportunity};
pub use policy::{AnyPolicy, TokenPolicy, TradingPolicy};
pub use token::{solve_token_market, TokenSolution, TokenState};
pub use verify::{verify_equilibrium, verify_token_equilibrium, EquilibriumReport};
