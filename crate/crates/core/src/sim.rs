//! Monte Carlo simulation of the matching process under solved prices.
//!
//! Each period one unordered pair is drawn uniformly. If the pair has an
//! active link the trade happens at the solved price; otherwise nothing
//! happens. Payoffs in period `t` are discounted by `delta^t`, starting at
//! `t = 0`. An episode stops once no link is active or `delta^t` drops below
//! [`TRUNCATION`].
//!
//! Episode `k` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `k`, so
//! estimates are identical for sequential and parallel runs.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bargain::{Link, Solution, StateSolution};
use crate::exec::Exec;
use crate::model::{pair_from_index, AgentId, InfoState, Item, MarketConfig};
use crate::token::{TokenSolution, TokenState};
use crate::{Error, Result};

/// Discount weight below which an episode is cut off.
pub const TRUNCATION: f64 = 1e-12;

const BATCH: u64 = 1024;

/// A solved market that can be stepped through.
pub trait SolvedMarket: Sync {
    type State: Copy + PartialEq + fmt::Display + Send + Sync;

    fn config(&self) -> &MarketConfig;
    fn initial(&self) -> Self::State;
    fn solved(&self, state: Self::State) -> Option<&StateSolution>;
    fn after(&self, state: Self::State, link: &Link) -> Self::State;
}

impl SolvedMarket for Solution {
    type State = InfoState;

    fn config(&self) -> &MarketConfig {
        Solution::config(self)
    }

    fn initial(&self) -> InfoState {
        Solution::config(self).initial_state()
    }

    fn solved(&self, state: InfoState) -> Option<&StateSolution> {
        self.state(state)
    }

    fn after(&self, state: InfoState, link: &Link) -> InfoState {
        state.with(link.buyer)
    }
}

impl SolvedMarket for TokenSolution {
    type State = TokenState;

    fn config(&self) -> &MarketConfig {
        TokenSolution::config(self)
    }

    fn initial(&self) -> TokenState {
        TokenState::initial(TokenSolution::config(self))
    }

    fn solved(&self, state: TokenState) -> Option<&StateSolution> {
        self.state(state)
    }

    fn after(&self, state: TokenState, link: &Link) -> TokenState {
        state.after(link)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeRecord {
    pub period: u64,
    pub seller: AgentId,
    pub buyer: AgentId,
    pub item: Item,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    /// Discounted payoff of each agent.
    pub payoffs: Vec<f64>,
    pub trades: Vec<TradeRecord>,
    /// First period not simulated.
    pub terminal_period: u64,
    pub terminal_state: String,
    /// True when the episode ended with no active link left.
    pub absorbed: bool,
    /// Undiscounted sums of prices paid by buyers and received by sellers.
    pub paid: f64,
    pub received: f64,
}

/// One episode on stream 0 of `seed`.
pub fn simulate_episode<M: SolvedMarket>(
    market: &M,
    start: M::State,
    seed: u64,
) -> Result<EpisodeResult> {
    run_episode(market, start, seed, 0)
}

fn run_episode<M: SolvedMarket>(
    market: &M,
    start: M::State,
    seed: u64,
    stream: u64,
) -> Result<EpisodeResult> {
    let config = market.config();
    let n = config.n_agents();
    let pairs = config.pair_count();
    let delta = config.discount();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut payoffs = vec![0.0; n];
    let mut trades = Vec::new();
    let (mut paid, mut received) = (0.0, 0.0);
    let mut state = start;
    let mut weight = 1.0;
    let mut t = 0u64;
    let absorbed = loop {
        let sol = market
            .solved(state)
            .ok_or_else(|| Error::Sequencing(format!("state {state} has no solved prices")))?;
        if sol.links.is_empty() {
            break true;
        }
        if weight < TRUNCATION {
            break false;
        }
        let (a, b) = pair_from_index(n, rng.random_range(0..pairs));
        let hit = sol.links.iter().position(|l| {
            let (i, j) = (l.seller.index(), l.buyer.index());
            (i, j) == (a, b) || (i, j) == (b, a)
        });
        if let Some(k) = hit {
            let link = sol.links[k];
            let price = sol.prices[k];
            payoffs[link.seller.index()] += weight * price;
            payoffs[link.buyer.index()] += weight * (link.gain(config) - price);
            paid += price;
            received += price;
            trades.push(TradeRecord {
                period: t,
                seller: link.seller,
                buyer: link.buyer,
                item: link.item,
                price,
            });
            state = market.after(state, &link);
        }
        t += 1;
        weight *= delta;
    };
    Ok(EpisodeResult {
        payoffs,
        trades,
        terminal_period: t,
        terminal_state: state.to_string(),
        absorbed,
        paid,
        received,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub state: String,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub episodes: u64,
    pub seed: u64,
}

impl ValueEstimate {
    /// Largest `|mean - exact| / std_error` over agents with nonzero error.
    pub fn max_z(&self, exact: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std_error)
            .zip(exact)
            .map(|((m, s), e)| {
                if *s > 0.0 {
                    (m - e).abs() / s
                } else if (m - e).abs() < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Mean discounted payoffs over `episodes` episodes from `start`.
pub fn estimate_values<M: SolvedMarket>(
    market: &M,
    start: M::State,
    episodes: u64,
    seed: u64,
) -> Result<ValueEstimate> {
    estimate_values_with(market, start, episodes, seed, Exec::default())
}

pub fn estimate_values_with<M: SolvedMarket>(
    market: &M,
    start: M::State,
    episodes: u64,
    seed: u64,
    exec: Exec,
) -> Result<ValueEstimate> {
    if episodes < 2 {
        return Err(Error::Domain("need at least two episodes".into()));
    }
    let n = market.config().n_agents();
    let batches = episodes.div_ceil(BATCH);
    let sums = exec.map_range(batches, |b| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut s = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for k in b * BATCH..((b + 1) * BATCH).min(episodes) {
            let ep = run_episode(market, start, seed, k)?;
            for (a, x) in ep.payoffs.iter().enumerate() {
                s[a] += x;
                sq[a] += x * x;
            }
        }
        Ok((s, sq))
    });
    let mut s = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for batch in sums {
        let (bs, bq) = batch?;
        for a in 0..n {
            s[a] += bs[a];
            sq[a] += bq[a];
        }
    }
    let count = episodes as f64;
    let mean: Vec<f64> = s.iter().map(|x| x / count).collect();
    let std_error = (0..n)
        .map(|a| {
            let var = ((sq[a] - count * mean[a] * mean[a]) / (count - 1.0)).max(0.0);
            (var / count).sqrt()
        })
        .collect();
    Ok(ValueEstimate {
        state: start.to_string(),
        mean,
        std_error,
        episodes,
        seed,
    })
}

/// Full episodes with their trade logs, in episode order.
pub fn simulate_log<M: SolvedMarket>(
    market: &M,
    start: M::State,
    episodes: u64,
    seed: u64,
    exec: Exec,
) -> Result<Vec<EpisodeResult>> {
    exec.map_range(episodes, |k| run_episode(market, start, seed, k))
        .into_iter()
        .collect()
}
