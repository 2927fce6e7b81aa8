//! Brute-force reference solver shared by the integration tests.
//!
//! Values follow the one-period recursion: each unordered pair is drawn with
//! probability `rho`; an active trade pays its flow and moves the state,
//! anything else leaves the state unchanged. Each price splits the bilateral
//! surplus with disagreement values `delta * V(., M)`. Both are iterated
//! jointly, with damping, until nothing moves. No linear system is formed.

#![allow(dead_code)]

use std::collections::HashMap;

use infobargain::model::{enumerate_states, opportunities};
use infobargain::token::{feasible_opportunities, reachable_states};
use infobargain::*;

#[derive(Debug, Clone)]
pub struct Trade {
    pub seller: usize,
    pub buyer: usize,
    pub gain: f64,
    pub next: usize,
}

#[derive(Debug, Clone)]
pub struct Game {
    pub n: usize,
    pub delta: f64,
    pub weight: f64,
    pub trades: Vec<Vec<Trade>>,
}

pub struct Fixed {
    pub values: Vec<Vec<f64>>,
    pub prices: Vec<Vec<f64>>,
    pub iterations: usize,
}

pub fn info_game(config: &MarketConfig, policy: &TradingPolicy) -> (Game, Vec<InfoState>) {
    let states = enumerate_states(config);
    let index: HashMap<u64, usize> = states
        .iter()
        .enumerate()
        .map(|(k, s)| (s.mask(), k))
        .collect();
    let trades = states
        .iter()
        .map(|&s| {
            opportunities(config, s)
                .into_iter()
                .filter(|o| policy.decide(config, o).unwrap().is_trade())
                .map(|o| Trade {
                    seller: o.seller.index(),
                    buyer: o.buyer.index(),
                    gain: config.value(),
                    next: index[&s.with(o.buyer).mask()],
                })
                .collect()
        })
        .collect();
    (
        Game {
            n: config.n_agents(),
            delta: config.discount(),
            weight: config.weight(),
            trades,
        },
        states,
    )
}

pub fn token_game(config: &MarketConfig, policy: &TokenPolicy) -> (Game, Vec<TokenState>) {
    let states = reachable_states(config, policy.supply());
    let index: HashMap<TokenState, usize> =
        states.iter().enumerate().map(|(k, s)| (*s, k)).collect();
    let trades = states
        .iter()
        .map(|&s| {
            feasible_opportunities(config, policy.supply(), s)
                .into_iter()
                .filter(|o| policy.decide(config, o).unwrap().is_trade())
                .map(|o| {
                    let next = match o.item {
                        Item::Info => TokenState {
                            info: s.info.with(o.buyer),
                            tokens: s.tokens,
                        },
                        Item::Token => TokenState {
                            info: s.info,
                            tokens: s.tokens | (1 << o.buyer.index()),
                        },
                    };
                    Trade {
                        seller: o.seller.index(),
                        buyer: o.buyer.index(),
                        gain: if o.item == Item::Info {
                            config.value()
                        } else {
                            0.0
                        },
                        next: index[&next],
                    }
                })
                .collect()
        })
        .collect();
    (
        Game {
            n: config.n_agents(),
            delta: config.discount(),
            weight: config.weight(),
            trades,
        },
        states,
    )
}

pub fn fixed_point(game: &Game, damping: f64, tol: f64, max_iter: usize) -> Fixed {
    let n = game.n;
    let rho = 2.0 / (n * (n - 1)) as f64;
    let pairs = n * (n - 1) / 2;
    let d = game.delta;
    let w = game.weight;
    let mut values = vec![vec![0.0; n]; game.trades.len()];
    let mut prices: Vec<Vec<f64>> = game.trades.iter().map(|t| vec![0.0; t.len()]).collect();
    for it in 0..max_iter {
        let mut change: f64 = 0.0;
        let mut new_prices = prices.clone();
        for (s, trades) in game.trades.iter().enumerate() {
            for (k, t) in trades.iter().enumerate() {
                let (i, j) = (t.seller, t.buyer);
                let seller_gain_ex = d * values[t.next][i] - d * values[s][i];
                let buyer_gain_ex = t.gain + d * values[t.next][j] - d * values[s][j];
                let surplus = seller_gain_ex + buyer_gain_ex;
                // seller keeps w of the surplus
                let p = w * surplus - seller_gain_ex;
                new_prices[s][k] = (1.0 - damping) * prices[s][k] + damping * p;
                change = change.max((new_prices[s][k] - prices[s][k]).abs());
            }
        }
        let mut new_values = values.clone();
        for (s, trades) in game.trades.iter().enumerate() {
            if trades.is_empty() {
                continue;
            }
            for a in 0..n {
                let mut total = (pairs - trades.len()) as f64 * d * values[s][a];
                for (k, t) in trades.iter().enumerate() {
                    let flow = if a == t.seller {
                        new_prices[s][k]
                    } else if a == t.buyer {
                        t.gain - new_prices[s][k]
                    } else {
                        0.0
                    };
                    total += flow + d * values[t.next][a];
                }
                let v = rho * total;
                new_values[s][a] = (1.0 - damping) * values[s][a] + damping * v;
                change = change.max((new_values[s][a] - values[s][a]).abs());
            }
        }
        values = new_values;
        prices = new_prices;
        if change < tol {
            return Fixed {
                values,
                prices,
                iterations: it + 1,
            };
        }
    }
    panic!("fixed point did not converge in {max_iter} iterations");
}

/// Every (n_S, n_B) split with n_S + n_B = n.
pub fn splits(n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|ns| (ns, n - ns)).collect()
}
