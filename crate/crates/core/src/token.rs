//! Market extended with tokens sold by the single initial seller.
//!
//! A state is a pair `(M, K)`: the informed agents and the buyers who bought
//! a token from the seller (agent 0). A token is worth nothing to its holder;
//! it only moves the state. At most `supply` tokens exist. Trading a token in
//! a way that would leave `K` unchanged is not a feasible trade here.
//!
//! Prices and values reuse the information-market assembly: each active
//! trade is a [`Link`] whose item decides the buyer's gross gain (`v` or 0)
//! and the successor state. States are solved lazily, on demand, with
//! successors first.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bargain::{assemble_links, solve_links, Link, PriceSystem, StateSolution};
use crate::model::{AgentId, InfoState, Item, MarketConfig};
use crate::policy::TokenPolicy;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenState {
    pub info: InfoState,
    /// Bit set of buyers holding a token bought from the initial seller.
    pub tokens: u64,
}

impl TokenState {
    pub fn initial(config: &MarketConfig) -> Self {
        TokenState {
            info: config.initial_state(),
            tokens: 0,
        }
    }

    pub fn holds_token(&self, agent: AgentId) -> bool {
        self.tokens & (1u64 << agent.index()) != 0
    }

    pub fn token_count(&self) -> usize {
        self.tokens.count_ones() as usize
    }

    pub fn validate(&self, config: &MarketConfig, supply: usize) -> Result<()> {
        self.info.validate(config)?;
        let sellers = config.initial_state().mask();
        let all = config.full_state().mask();
        if self.tokens & (sellers | !all) != 0 {
            return Err(Error::Domain(format!(
                "token set {:#x} names non-buyers",
                self.tokens
            )));
        }
        if self.token_count() > supply {
            return Err(Error::Domain(format!(
                "{} tokens sold but only {supply} exist",
                self.token_count()
            )));
        }
        Ok(())
    }

    /// State reached when `link` trades.
    pub fn after(&self, link: &Link) -> TokenState {
        match link.item {
            Item::Info => TokenState {
                info: self.info.with(link.buyer),
                tokens: self.tokens,
            },
            Item::Token => TokenState {
                info: self.info,
                tokens: self.tokens | (1u64 << link.buyer.index()),
            },
        }
    }
}

impl fmt::Display for TokenState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{:#x})", self.info, self.tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenOpportunity {
    pub seller: AgentId,
    pub buyer: AgentId,
    pub item: Item,
    pub state: TokenState,
}

impl TokenOpportunity {
    /// Information: seller informed, buyer not. Token: sold by agent 0 to a
    /// buyer without one while tokens remain.
    pub fn validate(&self, config: &MarketConfig, supply: usize) -> Result<()> {
        config.check_agent(self.seller)?;
        config.check_agent(self.buyer)?;
        self.state.validate(config, supply)?;
        let ok = match self.item {
            Item::Info => {
                self.state.info.contains(self.seller) && !self.state.info.contains(self.buyer)
            }
            Item::Token => {
                self.seller == AgentId(0)
                    && self.buyer.index() >= config.n_sellers()
                    && !self.state.holds_token(self.buyer)
                    && self.state.token_count() < supply
            }
        };
        if !ok {
            return Err(Error::Domain(format!("{self} is not a feasible trade")));
        }
        Ok(())
    }

    pub fn link(&self) -> Link {
        Link {
            seller: self.seller,
            buyer: self.buyer,
            item: self.item,
        }
    }
}

impl fmt::Display for TokenOpportunity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}->{}@{}",
            self.seller, self.item, self.buyer, self.state
        )
    }
}

/// Feasible trades in a state, ordered by (seller, buyer, item).
pub fn feasible_opportunities(
    config: &MarketConfig,
    supply: usize,
    state: TokenState,
) -> Vec<TokenOpportunity> {
    let mut out = Vec::new();
    for seller in config.agents() {
        for buyer in config.agents() {
            for item in [Item::Token, Item::Info] {
                let opp = TokenOpportunity {
                    seller,
                    buyer,
                    item,
                    state,
                };
                if opp.validate(config, supply).is_ok() {
                    out.push(opp);
                }
            }
        }
    }
    out
}

/// Every `(M, K)` with at most `supply` tokens sold.
pub fn all_token_states(config: &MarketConfig, supply: usize) -> Vec<TokenState> {
    let nb = config.n_buyers();
    let shift = config.n_sellers();
    let mut out = Vec::new();
    for b in 0..(1usize << nb) {
        let info = InfoState(config.initial_state().mask() | ((b as u64) << shift));
        for k in 0..(1u64 << nb) {
            if (k.count_ones() as usize) <= supply {
                out.push(TokenState {
                    info,
                    tokens: k << shift,
                });
            }
        }
    }
    out
}

/// Active links of a state under a token policy; two items on one pair is an
/// error.
pub(crate) fn active_token_links(
    config: &MarketConfig,
    policy: &TokenPolicy,
    state: TokenState,
) -> Result<Vec<Link>> {
    let mut links = Vec::new();
    let mut pairs = HashSet::new();
    for opp in feasible_opportunities(config, policy.supply(), state) {
        if policy.trades(config, &opp) {
            let pair = (opp.seller.min(opp.buyer), opp.seller.max(opp.buyer));
            if !pairs.insert(pair) {
                return Err(Error::BundledTrade(format!(
                    "pair {}-{} in state {state}",
                    opp.seller, opp.buyer
                )));
            }
            links.push(opp.link());
        }
    }
    Ok(links)
}

/// Prices and values on the solved part of the `(M, K)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSolution {
    config: MarketConfig,
    policy: TokenPolicy,
    states: BTreeMap<TokenState, StateSolution>,
}

impl TokenSolution {
    fn new(config: &MarketConfig, policy: &TokenPolicy) -> Result<Self> {
        if config.n_sellers() != 1 {
            return Err(Error::Unsupported(format!(
                "token markets need exactly one seller, got {}",
                config.n_sellers()
            )));
        }
        Ok(TokenSolution {
            config: *config,
            policy: policy.clone(),
            states: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn policy(&self) -> &TokenPolicy {
        &self.policy
    }

    pub fn state(&self, state: TokenState) -> Option<&StateSolution> {
        self.states.get(&state)
    }

    pub fn states(&self) -> impl Iterator<Item = (&TokenState, &StateSolution)> {
        self.states.iter()
    }

    pub fn value(&self, agent: AgentId, state: TokenState) -> Option<f64> {
        self.states.get(&state).map(|s| s.values[agent.index()])
    }

    pub fn price(&self, opp: &TokenOpportunity) -> Result<f64> {
        self.states
            .get(&opp.state)
            .and_then(|s| s.price_of(opp.seller, opp.buyer, opp.item))
            .ok_or_else(|| Error::InactiveLink(opp.to_string()))
    }

    /// Solves `state` and everything it depends on, if not already solved.
    pub fn ensure(&mut self, state: TokenState) -> Result<()> {
        if self.states.contains_key(&state) {
            return Ok(());
        }
        state.validate(&self.config, self.policy.supply())?;
        let links = active_token_links(&self.config, &self.policy, state)?;
        for l in &links {
            self.ensure(state.after(l))?;
        }
        let succ: Vec<&[f64]> = links
            .iter()
            .map(|l| self.states[&state.after(l)].values.as_slice())
            .collect();
        let inactive = self.config.pair_count() - links.len();
        let sol = solve_links(
            &self.config,
            state.to_string(),
            links.clone(),
            &succ,
            inactive,
        )?;
        self.states.insert(state, sol);
        Ok(())
    }

    /// Seller's value at `({s}, {})`.
    pub fn seller_total_value(&self) -> f64 {
        self.value(AgentId(0), TokenState::initial(&self.config))
            .expect("initial state is always solved")
    }

    /// Per-level aggregates along the path `({s}, K)` with `K` the first
    /// `k` buyers, for `k = 0..=supply`.
    pub fn on_path_levels(&self) -> Vec<TokenLevel> {
        let c = &self.config;
        let s = AgentId(0);
        let mut out = Vec::new();
        for k in 0..=self.policy.supply() {
            let tokens: u64 = (1..=k).fold(0, |acc, b| acc | (1u64 << b));
            let state = TokenState {
                info: c.initial_state(),
                tokens,
            };
            let Some(sol) = self.states.get(&state) else {
                continue;
            };
            let holder = (k > 0).then(|| sol.values[1]);
            let nonholder_id = AgentId(k + 1);
            let nonholder = sol.values[nonholder_id.index()];
            let (item, price) = [Item::Token, Item::Info]
                .into_iter()
                .find_map(|it| {
                    sol.price_of(s, nonholder_id, it)
                        .map(|p| (Some(it), Some(p)))
                })
                .unwrap_or((None, None));
            out.push(TokenLevel {
                tokens_sold: k,
                seller_value: sol.values[0],
                holder_value: holder,
                nonholder_value: nonholder,
                item,
                price,
            });
        }
        out
    }
}

/// Symmetric on-path aggregates at `({s}, K)` with `|K| = tokens_sold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenLevel {
    pub tokens_sold: usize,
    pub seller_value: f64,
    pub holder_value: Option<f64>,
    pub nonholder_value: f64,
    /// What the seller sells to a buyer without a token at this level.
    pub item: Option<Item>,
    pub price: Option<f64>,
}

/// Solves every state reachable from `({s}, {})` under the policy.
pub fn solve_token_market(config: &MarketConfig, policy: &TokenPolicy) -> Result<TokenSolution> {
    let mut sol = TokenSolution::new(config, policy)?;
    sol.ensure(TokenState::initial(config))?;
    Ok(sol)
}

/// Solves every state reachable from `({s}, {})` through any sequence of
/// feasible trades, on or off the policy's path.
pub fn solve_token_market_closure(
    config: &MarketConfig,
    policy: &TokenPolicy,
) -> Result<TokenSolution> {
    let mut sol = TokenSolution::new(config, policy)?;
    for state in reachable_states(config, policy.supply()) {
        sol.ensure(state)?;
    }
    Ok(sol)
}

/// States reachable from the initial state by feasible trades.
pub fn reachable_states(config: &MarketConfig, supply: usize) -> Vec<TokenState> {
    let start = TokenState::initial(config);
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(st) = stack.pop() {
        for opp in feasible_opportunities(config, supply, st) {
            let next = st.after(&opp.link());
            if seen.insert(next) {
                stack.push(next);
            }
        }
    }
    let mut out: Vec<_> = seen.into_iter().collect();
    out.sort();
    out
}

/// The price system of one token-market state, or `None` when no token
/// trades there. Successors must already be solved in `solution`.
pub fn token_price_system(
    solution: &TokenSolution,
    state: TokenState,
) -> Result<Option<PriceSystem>> {
    let config = &solution.config;
    let links = active_token_links(config, &solution.policy, state)?;
    if !links.iter().any(|l| l.item == Item::Token) {
        return Ok(None);
    }
    let succ = links
        .iter()
        .map(|l| {
            let next = state.after(l);
            solution
                .states
                .get(&next)
                .map(|s| s.values.as_slice())
                .ok_or_else(|| {
                    Error::Sequencing(format!("successor {next} of {state} is not solved"))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let inactive = config.pair_count() - links.len();
    Ok(Some(assemble_links(
        config,
        state.to_string(),
        links,
        &succ,
        inactive,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bargain::solve_market;
    use crate::TradingPolicy;

    fn cfg(nb: usize, d: f64) -> MarketConfig {
        MarketConfig::from_discount(nb, 1, 1.0, 0.5, d).unwrap()
    }

    #[test]
    fn two_buyer_token_system() {
        let c = cfg(2, 0.9);
        let p = TokenPolicy::prepay(&c).unwrap();
        let sol = solve_token_market(&c, &p).unwrap();
        let sys = token_price_system(&sol, TokenState::initial(&c))
            .unwrap()
            .unwrap();
        assert_eq!(sys.len(), 2);
        let off = -(sys.discount * sys.rho_hat / (1.0 - sys.discount * sys.rho_hat)) * 0.5;
        assert!((sys.psi[(0, 1)] - off).abs() < 1e-15);
        assert!((sys.psi[(1, 0)] - off).abs() < 1e-15);
        let shut = TokenState {
            info: c.initial_state(),
            tokens: 0b010,
        };
        assert!(token_price_system(&sol, shut).unwrap().is_none());
    }

    #[test]
    fn weight_near_one_decouples() {
        let c = MarketConfig::from_discount(3, 1, 1.0, 1.0 - 1e-13, 0.9).unwrap();
        let p = TokenPolicy::prepay(&c).unwrap();
        let sol = solve_token_market(&c, &p).unwrap();
        let sys = token_price_system(&sol, TokenState::initial(&c))
            .unwrap()
            .unwrap();
        for u in 0..sys.len() {
            for v in 0..sys.len() {
                if u != v {
                    assert!(sys.psi[(u, v)].abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn off_path_matches_information_market() {
        let c = cfg(3, 0.93);
        let p = TokenPolicy::prepay(&c).unwrap();
        let tok = solve_token_market_closure(&c, &p).unwrap();
        let info = solve_market(&c, &TradingPolicy::immediate(&c)).unwrap();
        for (st, s) in tok.states() {
            if st.info != c.initial_state() {
                assert_eq!(s.values, info.state(st.info).unwrap().values, "state {st}");
            }
        }
    }

    #[test]
    fn on_path_levels_prepay() {
        let c = cfg(2, 0.95);
        let sol = solve_token_market(&c, &TokenPolicy::prepay(&c).unwrap()).unwrap();
        let levels = sol.on_path_levels();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[0].item, Some(Item::Token));
        assert_eq!(levels[1].item, Some(Item::Info));
        assert!(levels[0].holder_value.is_none());
        assert_eq!(sol.seller_total_value(), levels[0].seller_value);
    }

    #[test]
    fn bundles_rejected() {
        let c = cfg(2, 0.9);
        let p = TokenPolicy::from_table(&c, 1, Vec::new(), Some(crate::policy::Decision::Trade))
            .unwrap();
        assert!(matches!(
            solve_token_market(&c, &p),
            Err(Error::BundledTrade(_))
        ));
    }

    #[test]
    fn reachable_state_count() {
        let c = cfg(2, 0.9);
        // M: 4 sets; K: {}, {1}, {2} (one token)
        assert_eq!(reachable_states(&c, 1).len(), 12);
        assert_eq!(all_token_states(&c, 1).len(), 12);
    }
}
