//! Trading policies: which feasible trades happen in which state.
//!
//! [`TradingPolicy`] covers the information-only market, [`TokenPolicy`] the
//! market extended with tokens. Both are deterministic functions of the
//! trade and the state, and both can be loaded from an explicit table.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{opportunities, AgentId, InfoState, Item, MarketConfig, TradeOpportunity};
use crate::token::TokenOpportunity;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "trade")]
    Trade,
    #[serde(rename = "no-trade")]
    NoTrade,
}

impl Decision {
    pub fn from_bool(trade: bool) -> Self {
        if trade {
            Decision::Trade
        } else {
            Decision::NoTrade
        }
    }

    pub fn is_trade(self) -> bool {
        matches!(self, Decision::Trade)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Trade => "trade",
            Decision::NoTrade => "no-trade",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    Immediate,
    FirstBuyer { buyer: AgentId },
    Custom,
}

/// A trading decision for every information trade opportunity.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingPolicy {
    kind: PolicyKind,
    n_sellers: usize,
    table: HashMap<(usize, usize, u64), bool>,
    default: Option<bool>,
}

impl TradingPolicy {
    /// Every feasible trade happens.
    pub fn immediate(config: &MarketConfig) -> Self {
        TradingPolicy {
            kind: PolicyKind::Immediate,
            n_sellers: config.n_sellers(),
            table: HashMap::new(),
            default: None,
        }
    }

    /// The single seller sells first only to `buyer`; once two agents are
    /// informed every trade happens.
    pub fn designated_first_buyer(config: &MarketConfig, buyer: AgentId) -> Result<Self> {
        if config.n_sellers() != 1 {
            return Err(Error::Unsupported(format!(
                "designated-first-buyer needs exactly one seller, got {}",
                config.n_sellers()
            )));
        }
        config.check_agent(buyer)?;
        if buyer.index() < config.n_sellers() {
            return Err(Error::Domain(format!("agent {buyer} is not a buyer")));
        }
        Ok(TradingPolicy {
            kind: PolicyKind::FirstBuyer { buyer },
            n_sellers: 1,
            table: HashMap::new(),
            default: None,
        })
    }

    /// Policy given by an explicit list of decisions.
    ///
    /// Opportunities not listed take `default`; with no default every
    /// opportunity must be listed.
    pub fn from_table(
        config: &MarketConfig,
        entries: impl IntoIterator<Item = (TradeOpportunity, Decision)>,
        default: Option<Decision>,
    ) -> Result<Self> {
        let mut table = HashMap::new();
        for (opp, d) in entries {
            opp.validate(config)?;
            table.insert(
                (opp.seller.index(), opp.buyer.index(), opp.state.mask()),
                d.is_trade(),
            );
        }
        if default.is_none() {
            let mut missing = Vec::new();
            for state in crate::model::enumerate_states(config) {
                for opp in opportunities(config, state) {
                    if !table.contains_key(&(opp.seller.index(), opp.buyer.index(), state.mask())) {
                        missing.push(opp.to_string());
                    }
                }
            }
            if !missing.is_empty() {
                return Err(Error::IncompleteTable {
                    missing: missing.len(),
                    examples: missing.into_iter().take(5).collect(),
                });
            }
        }
        Ok(TradingPolicy {
            kind: PolicyKind::Custom,
            n_sellers: config.n_sellers(),
            table,
            default: default.map(Decision::is_trade),
        })
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    /// Checked decision for an opportunity.
    pub fn decide(&self, config: &MarketConfig, opp: &TradeOpportunity) -> Result<Decision> {
        opp.validate(config)?;
        Ok(Decision::from_bool(
            self.trades(opp.seller, opp.buyer, opp.state),
        ))
    }

    /// Decision without validating the opportunity.
    pub(crate) fn trades(&self, seller: AgentId, buyer: AgentId, state: InfoState) -> bool {
        match &self.kind {
            PolicyKind::Immediate => true,
            PolicyKind::FirstBuyer { buyer: first } => {
                let initial = (1u64 << self.n_sellers) - 1;
                state.mask() != initial || buyer == *first
            }
            PolicyKind::Custom => self
                .table
                .get(&(seller.index(), buyer.index(), state.mask()))
                .copied()
                .or(self.default)
                .unwrap_or(false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TokenPolicyKind {
    Prepay,
    Custom,
}

/// A decision for every trade opportunity of the token-extended market.
///
/// Only the initial seller (agent 0) issues tokens, at most `supply` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPolicy {
    kind: TokenPolicyKind,
    supply: usize,
    table: HashMap<(usize, usize, Item, u64, Option<u64>), bool>,
    default: Option<bool>,
}

impl TokenPolicy {
    /// Tokens first, one to each of `n_B - 1` buyers; then information to the
    /// buyer without a token; then immediate agreement.
    pub fn prepay(config: &MarketConfig) -> Result<Self> {
        Self::prepay_with_supply(config, config.n_buyers() - 1)
    }

    pub fn prepay_with_supply(config: &MarketConfig, supply: usize) -> Result<Self> {
        check_single_seller(config)?;
        if supply >= config.n_buyers() {
            return Err(Error::Domain(format!(
                "token supply {supply} must be below the number of buyers {}",
                config.n_buyers()
            )));
        }
        Ok(TokenPolicy {
            kind: TokenPolicyKind::Prepay,
            supply,
            table: HashMap::new(),
            default: None,
        })
    }

    /// Token policy from explicit entries. An entry with `tokens = None`
    /// applies to every token set not listed explicitly.
    pub fn from_table(
        config: &MarketConfig,
        supply: usize,
        entries: impl IntoIterator<Item = (TokenTableKey, Decision)>,
        default: Option<Decision>,
    ) -> Result<Self> {
        check_single_seller(config)?;
        if supply >= config.n_buyers() {
            return Err(Error::Domain(format!(
                "token supply {supply} must be below the number of buyers {}",
                config.n_buyers()
            )));
        }
        let mut policy = TokenPolicy {
            kind: TokenPolicyKind::Custom,
            supply,
            table: HashMap::new(),
            default: default.map(Decision::is_trade),
        };
        for (key, d) in entries {
            policy.table.insert(
                (
                    key.seller.index(),
                    key.buyer.index(),
                    key.item,
                    key.info.mask(),
                    key.tokens,
                ),
                d.is_trade(),
            );
        }
        if default.is_none() {
            let mut missing = Vec::new();
            for state in crate::token::all_token_states(config, supply) {
                for opp in crate::token::feasible_opportunities(config, supply, state) {
                    if policy.lookup(&opp).is_none() {
                        missing.push(opp.to_string());
                    }
                }
            }
            if !missing.is_empty() {
                return Err(Error::IncompleteTable {
                    missing: missing.len(),
                    examples: missing.into_iter().take(5).collect(),
                });
            }
        }
        Ok(policy)
    }

    pub fn kind(&self) -> &TokenPolicyKind {
        &self.kind
    }

    pub fn supply(&self) -> usize {
        self.supply
    }

    fn lookup(&self, opp: &TokenOpportunity) -> Option<bool> {
        let (i, j) = (opp.seller.index(), opp.buyer.index());
        let m = opp.state.info.mask();
        self.table
            .get(&(i, j, opp.item, m, Some(opp.state.tokens)))
            .or_else(|| self.table.get(&(i, j, opp.item, m, None)))
            .copied()
    }

    /// Checked decision; infeasible trades are a domain error.
    pub fn decide(&self, config: &MarketConfig, opp: &TokenOpportunity) -> Result<Decision> {
        opp.validate(config, self.supply)?;
        Ok(Decision::from_bool(self.trades(config, opp)))
    }

    pub(crate) fn trades(&self, config: &MarketConfig, opp: &TokenOpportunity) -> bool {
        match self.kind {
            TokenPolicyKind::Prepay => {
                let seller = AgentId(0);
                let initial = config.initial_state();
                let st = opp.state;
                if st.info != initial {
                    return opp.item == Item::Info;
                }
                let in_tokens = st.holds_token(opp.buyer);
                if st.token_count() < self.supply {
                    opp.item == Item::Token && opp.seller == seller && !in_tokens
                } else {
                    opp.item == Item::Info && opp.seller == seller && !in_tokens
                }
            }
            TokenPolicyKind::Custom => self.lookup(opp).or(self.default).unwrap_or(false),
        }
    }
}

/// Key of a custom token-policy entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenTableKey {
    pub seller: AgentId,
    pub buyer: AgentId,
    pub item: Item,
    pub info: InfoState,
    pub tokens: Option<u64>,
}

fn check_single_seller(config: &MarketConfig) -> Result<()> {
    if config.n_sellers() != 1 {
        return Err(Error::Unsupported(format!(
            "token markets need exactly one seller, got {}",
            config.n_sellers()
        )));
    }
    Ok(())
}

/// Either kind of policy.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPolicy {
    Info(TradingPolicy),
    Token(TokenPolicy),
}

impl AnyPolicy {
    /// Parses `immediate`, `first-buyer:<index>` or `prepay`. Tables are
    /// loaded through [`crate::io::policy_from_table_json`].
    pub fn from_name(config: &MarketConfig, spec: &str) -> Result<Self> {
        match spec {
            "immediate" => Ok(AnyPolicy::Info(TradingPolicy::immediate(config))),
            "prepay" => Ok(AnyPolicy::Token(TokenPolicy::prepay(config)?)),
            other => {
                if let Some(idx) = other.strip_prefix("first-buyer:") {
                    let idx: usize = idx.parse().map_err(|_| {
                        Error::InvalidPolicy(format!("bad buyer index in {other:?}"))
                    })?;
                    Ok(AnyPolicy::Info(TradingPolicy::designated_first_buyer(
                        config,
                        AgentId(idx),
                    )?))
                } else {
                    Err(Error::InvalidPolicy(format!("unknown policy {other:?}")))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::enumerate_states;
    use crate::token::TokenState;

    fn cfg(nb: usize, ns: usize) -> MarketConfig {
        MarketConfig::from_discount(nb, ns, 1.0, 0.5, 0.9).unwrap()
    }

    #[test]
    fn immediate_trades_everywhere() {
        let c = cfg(3, 2);
        let p = TradingPolicy::immediate(&c);
        for s in enumerate_states(&c) {
            for opp in opportunities(&c, s) {
                assert_eq!(p.decide(&c, &opp).unwrap(), Decision::Trade);
            }
        }
        let bad = TradeOpportunity {
            seller: AgentId(0),
            buyer: AgentId(1),
            state: c.initial_state(),
        };
        assert!(p.decide(&c, &bad).is_err());
        assert!(opportunities(&c, c.full_state()).is_empty());
    }

    #[test]
    fn first_buyer_differs_only_initially() {
        let c = cfg(3, 1);
        let fb = TradingPolicy::designated_first_buyer(&c, AgentId(2)).unwrap();
        let imm = TradingPolicy::immediate(&c);
        for s in enumerate_states(&c) {
            for opp in opportunities(&c, s) {
                let a = fb.decide(&c, &opp).unwrap();
                let b = imm.decide(&c, &opp).unwrap();
                if s == c.initial_state() {
                    assert_eq!(a.is_trade(), opp.buyer == AgentId(2));
                } else {
                    assert_eq!(a, b);
                }
            }
        }
        assert!(matches!(
            TradingPolicy::designated_first_buyer(&cfg(2, 2), AgentId(2)),
            Err(Error::Unsupported(_))
        ));
        assert!(TradingPolicy::designated_first_buyer(&c, AgentId(0)).is_err());
    }

    #[test]
    fn table_policies() {
        let c = cfg(2, 1);
        let all: Vec<_> = enumerate_states(&c)
            .into_iter()
            .flat_map(|s| opportunities(&c, s))
            .collect();
        let full =
            TradingPolicy::from_table(&c, all.iter().map(|o| (*o, Decision::Trade)), None).unwrap();
        let imm = TradingPolicy::immediate(&c);
        for o in &all {
            assert_eq!(full.decide(&c, o).unwrap(), imm.decide(&c, o).unwrap());
        }

        let dropped = all[0];
        let partial = TradingPolicy::from_table(
            &c,
            all[1..].iter().map(|o| (*o, Decision::Trade)),
            Some(Decision::NoTrade),
        )
        .unwrap();
        assert_eq!(partial.decide(&c, &dropped).unwrap(), Decision::NoTrade);

        match TradingPolicy::from_table(&c, Vec::new(), None) {
            Err(Error::IncompleteTable { missing, .. }) => assert_eq!(missing, all.len()),
            other => panic!("expected incomplete table, got {other:?}"),
        }
    }

    #[test]
    fn prepay_rules() {
        let c = cfg(3, 1);
        let p = TokenPolicy::prepay(&c).unwrap();
        let s = AgentId(0);
        let info0 = c.initial_state();
        let op = |seller, buyer, item, info, tokens| TokenOpportunity {
            seller,
            buyer,
            item,
            state: TokenState { info, tokens },
        };
        // |K| = 0: token trades only
        assert!(p
            .decide(&c, &op(s, AgentId(1), Item::Token, info0, 0))
            .unwrap()
            .is_trade());
        assert!(!p
            .decide(&c, &op(s, AgentId(1), Item::Info, info0, 0))
            .unwrap()
            .is_trade());
        // |K| = n_B - 1: token market shut, info to the buyer without a token
        let k = 0b0110;
        assert!(p
            .decide(&c, &op(s, AgentId(1), Item::Token, info0, k))
            .is_err());
        assert!(!p
            .decide(&c, &op(s, AgentId(1), Item::Info, info0, k))
            .unwrap()
            .is_trade());
        assert!(p
            .decide(&c, &op(s, AgentId(3), Item::Info, info0, k))
            .unwrap()
            .is_trade());
        // off path: immediate agreement on information, no tokens
        let m = InfoState(0b0011);
        assert!(p
            .decide(&c, &op(AgentId(1), AgentId(2), Item::Info, m, 0))
            .unwrap()
            .is_trade());
        assert!(!p
            .decide(&c, &op(s, AgentId(2), Item::Token, m, 0))
            .unwrap()
            .is_trade());
        assert!(TokenPolicy::prepay(&cfg(2, 2)).is_err());
    }

    #[test]
    fn policy_names() {
        let c = cfg(2, 1);
        assert!(matches!(
            AnyPolicy::from_name(&c, "immediate"),
            Ok(AnyPolicy::Info(_))
        ));
        assert!(matches!(
            AnyPolicy::from_name(&c, "prepay"),
            Ok(AnyPolicy::Token(_))
        ));
        assert!(matches!(
            AnyPolicy::from_name(&c, "first-buyer:1"),
            Ok(AnyPolicy::Info(_))
        ));
        assert!(AnyPolicy::from_name(&c, "first-buyer:x").is_err());
        assert!(AnyPolicy::from_name(&c, "bogus").is_err());
        assert!(matches!(
            AnyPolicy::from_name(&cfg(1, 2), "first-buyer:2"),
            Err(Error::Unsupported(_))
        ));
    }
}
