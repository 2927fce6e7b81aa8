//! Agents, market configuration, information states and link combinatorics.
//!
//! Agents are numbered `0..n`; sellers occupy `0..n_sellers` and buyers the
//! rest. A state is the set of informed agents, stored as a bit set over
//! agent indices, and always contains every seller.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest number of buyers the lattice solvers accept (2^24 states).
pub const MAX_BUYERS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Seller,
    Buyer,
}

/// Index of an agent; sellers come first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub usize);

impl AgentId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn role(self, config: &MarketConfig) -> Role {
        if self.0 < config.n_sellers {
            Role::Seller
        } else {
            Role::Buyer
        }
    }

    fn bit(self) -> u64 {
        1u64 << self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The item changing hands in a trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Item {
    Token,
    Info,
}

impl Item {
    /// Numeric item code used in tables and CSV output (token = 1, info = 2).
    pub fn code(self) -> u8 {
        match self {
            Item::Token => 1,
            Item::Info => 2,
        }
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Item::Token => "token",
            Item::Info => "info",
        })
    }
}

/// Validated market parameters.
///
/// The canonical discounting input is the pair (rate, period); the per-period
/// discount factor is `exp(-rate * period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketConfig {
    n_buyers: usize,
    n_sellers: usize,
    value: f64,
    weight: f64,
    rate: f64,
    period: f64,
}

impl MarketConfig {
    pub fn new(
        n_buyers: usize,
        n_sellers: usize,
        value: f64,
        weight: f64,
        rate: f64,
        period: f64,
    ) -> Result<Self> {
        let config = MarketConfig {
            n_buyers,
            n_sellers,
            value,
            weight,
            rate,
            period,
        };
        config.validate()?;
        Ok(config)
    }

    /// Builds a configuration from a per-period discount factor with `rate = 1`.
    pub fn from_discount(
        n_buyers: usize,
        n_sellers: usize,
        value: f64,
        weight: f64,
        discount: f64,
    ) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        Self::new(n_buyers, n_sellers, value, weight, 1.0, -discount.ln())
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_sellers == 0 || self.n_buyers == 0 {
            return bad("need at least one seller and one buyer".into());
        }
        if self.n_agents() < 3 {
            return bad(format!("need at least 3 agents, got {}", self.n_agents()));
        }
        if self.n_buyers > MAX_BUYERS || self.n_agents() > 64 {
            return bad(format!(
                "at most {MAX_BUYERS} buyers and 64 agents are supported"
            ));
        }
        if !(self.value > 0.0 && self.value.is_finite()) {
            return bad(format!("value must be positive, got {}", self.value));
        }
        if !(0.5..1.0).contains(&self.weight) {
            return bad(format!("weight must lie in [1/2, 1), got {}", self.weight));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad(format!("rate must be positive, got {}", self.rate));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return bad(format!("period must be positive, got {}", self.period));
        }
        let d = self.discount();
        if !(d > 0.0 && d < 1.0) {
            return bad(format!(
                "discount exp(-rate*period) = {d} is outside (0, 1)"
            ));
        }
        Ok(())
    }

    /// Same market with a different period length.
    pub fn with_period(&self, period: f64) -> Result<Self> {
        Self::new(
            self.n_buyers,
            self.n_sellers,
            self.value,
            self.weight,
            self.rate,
            period,
        )
    }

    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::new(
            self.n_buyers,
            self.n_sellers,
            self.value,
            weight,
            self.rate,
            self.period,
        )
    }

    pub fn n_buyers(&self) -> usize {
        self.n_buyers
    }
    pub fn n_sellers(&self) -> usize {
        self.n_sellers
    }
    pub fn n_agents(&self) -> usize {
        self.n_buyers + self.n_sellers
    }
    pub fn value(&self) -> f64 {
        self.value
    }
    pub fn weight(&self) -> f64 {
        self.weight
    }
    pub fn rate(&self) -> f64 {
        self.rate
    }
    pub fn period(&self) -> f64 {
        self.period
    }
    pub fn discount(&self) -> f64 {
        (-self.rate * self.period).exp()
    }

    /// Number of unordered agent pairs, n(n-1)/2.
    pub fn pair_count(&self) -> usize {
        let n = self.n_agents();
        n * (n - 1) / 2
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> {
        (0..self.n_agents()).map(AgentId)
    }

    pub fn sellers(&self) -> impl Iterator<Item = AgentId> {
        (0..self.n_sellers).map(AgentId)
    }

    pub fn buyers(&self) -> impl Iterator<Item = AgentId> {
        (self.n_sellers..self.n_agents()).map(AgentId)
    }

    /// The state in which only the sellers are informed.
    pub fn initial_state(&self) -> InfoState {
        InfoState((1u64 << self.n_sellers) - 1)
    }

    /// The state in which everyone is informed.
    pub fn full_state(&self) -> InfoState {
        InfoState(full_mask(self.n_agents()))
    }

    pub fn check_agent(&self, agent: AgentId) -> Result<()> {
        if agent.0 >= self.n_agents() {
            return Err(Error::Domain(format!(
                "agent {} out of range for {} agents",
                agent.0,
                self.n_agents()
            )));
        }
        Ok(())
    }

    /// Reads a configuration document (see [`ConfigDocument`]).
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ConfigDocument =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        doc.into_config()
    }

    pub fn to_document(&self) -> ConfigDocument {
        ConfigDocument {
            n_buyers: self.n_buyers,
            n_sellers: self.n_sellers,
            value: self.value,
            weight: self.weight,
            rate: Some(self.rate),
            period: Some(self.period),
            discount: None,
        }
    }
}

impl Serialize for MarketConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out {
            n_buyers: usize,
            n_sellers: usize,
            value: f64,
            weight: f64,
            rate: f64,
            period: f64,
            discount: f64,
        }
        Out {
            n_buyers: self.n_buyers,
            n_sellers: self.n_sellers,
            value: self.value,
            weight: self.weight,
            rate: self.rate,
            period: self.period,
            discount: self.discount(),
        }
        .serialize(s)
    }
}

/// On-disk configuration. Either `period` (with optional `rate`, default 1)
/// or `discount` must be given; with `discount` the period is derived as
/// `-ln(discount) / rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub n_buyers: usize,
    pub n_sellers: usize,
    pub value: f64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
}

impl ConfigDocument {
    pub fn into_config(self) -> Result<MarketConfig> {
        let rate = self.rate.unwrap_or(1.0);
        let period = match (self.period, self.discount) {
            (Some(p), None) => p,
            (None, Some(d)) => {
                if !(d > 0.0 && d < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "discount must lie in (0, 1), got {d}"
                    )));
                }
                -d.ln() / rate
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give either period or discount, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of period or discount is required".into(),
                ))
            }
        };
        MarketConfig::new(
            self.n_buyers,
            self.n_sellers,
            self.value,
            self.weight,
            rate,
            period,
        )
    }
}

fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Set of informed agents as a bit set over agent indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfoState(pub u64);

impl InfoState {
    /// Builds a state and checks it against the configuration.
    pub fn new(config: &MarketConfig, mask: u64) -> Result<Self> {
        let state = InfoState(mask);
        state.validate(config)?;
        Ok(state)
    }

    pub fn from_agents(
        config: &MarketConfig,
        agents: impl IntoIterator<Item = AgentId>,
    ) -> Result<Self> {
        let mut mask = 0u64;
        for a in agents {
            config.check_agent(a)?;
            mask |= a.bit();
        }
        Self::new(config, mask)
    }

    pub fn validate(&self, config: &MarketConfig) -> Result<()> {
        if self.0 & !full_mask(config.n_agents()) != 0 {
            return Err(Error::Domain(format!(
                "state {self} names agents beyond {}",
                config.n_agents()
            )));
        }
        let sellers = config.initial_state().0;
        if self.0 & sellers != sellers {
            return Err(Error::Domain(format!(
                "state {self} does not contain every seller"
            )));
        }
        Ok(())
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn contains(self, agent: AgentId) -> bool {
        self.0 & agent.bit() != 0
    }

    pub fn with(self, agent: AgentId) -> InfoState {
        InfoState(self.0 | agent.bit())
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn members(self) -> impl Iterator<Item = AgentId> {
        let mask = self.0;
        (0..64usize)
            .filter(move |i| mask & (1u64 << i) != 0)
            .map(AgentId)
    }

    pub fn informed(self, config: &MarketConfig) -> impl Iterator<Item = AgentId> {
        config.agents().filter(move |a| self.contains(*a))
    }

    pub fn uninformed(self, config: &MarketConfig) -> impl Iterator<Item = AgentId> {
        config.agents().filter(move |a| !self.contains(*a))
    }

    /// Index of the state among the 2^n_B buyer subsets.
    pub(crate) fn buyer_index(self, config: &MarketConfig) -> usize {
        (self.0 >> config.n_sellers()) as usize
    }

    pub(crate) fn from_buyer_index(config: &MarketConfig, index: usize) -> InfoState {
        InfoState(config.initial_state().0 | ((index as u64) << config.n_sellers()))
    }
}

impl fmt::Display for InfoState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// A seller/buyer/state triple in which the seller is informed and the buyer
/// is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TradeOpportunity {
    pub seller: AgentId,
    pub buyer: AgentId,
    pub state: InfoState,
}

impl TradeOpportunity {
    pub fn new(
        config: &MarketConfig,
        seller: AgentId,
        buyer: AgentId,
        state: InfoState,
    ) -> Result<Self> {
        let opp = TradeOpportunity {
            seller,
            buyer,
            state,
        };
        opp.validate(config)?;
        Ok(opp)
    }

    pub fn validate(&self, config: &MarketConfig) -> Result<()> {
        config.check_agent(self.seller)?;
        config.check_agent(self.buyer)?;
        self.state.validate(config)?;
        if !self.state.contains(self.seller) || self.state.contains(self.buyer) {
            return Err(Error::Domain(format!(
                "{self} is not a trading opportunity (seller must be informed, buyer not)"
            )));
        }
        Ok(())
    }

    pub fn successor(&self) -> InfoState {
        self.state.with(self.buyer)
    }
}

impl fmt::Display for TradeOpportunity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}@{}", self.seller, self.buyer, self.state)
    }
}

/// Every trading opportunity in a state, seller-major.
pub fn opportunities(config: &MarketConfig, state: InfoState) -> Vec<TradeOpportunity> {
    let mut out = Vec::new();
    for seller in state.informed(config) {
        for buyer in state.uninformed(config) {
            out.push(TradeOpportunity {
                seller,
                buyer,
                state,
            });
        }
    }
    out
}

/// Probability that a particular unordered pair is drawn in a period.
pub fn pair_recognition_probability(config: &MarketConfig) -> f64 {
    1.0 / config.pair_count() as f64
}

/// Number of pairs that are both informed or both uninformed when `m` of `n`
/// agents are informed.
pub fn redundant_link_count(m: usize, n: usize) -> Result<usize> {
    if m > n {
        return Err(Error::Domain(format!("{m} informed agents out of {n}")));
    }
    let u = n - m;
    Ok((m * m.saturating_sub(1) + u * u.saturating_sub(1)) / 2)
}

/// All states, largest first; within a size, ascending bit-set value. Every
/// successor of a state therefore appears before it.
pub fn enumerate_states(config: &MarketConfig) -> Vec<InfoState> {
    let count = 1usize << config.n_buyers();
    let mut states: Vec<InfoState> = (0..count)
        .map(|b| InfoState::from_buyer_index(config, b))
        .collect();
    states.sort_by(|a, b| b.len().cmp(&a.len()).then(a.0.cmp(&b.0)));
    states
}

/// States grouped by number of informed agents, largest group first.
pub(crate) fn levels(config: &MarketConfig) -> Vec<Vec<InfoState>> {
    let mut levels: Vec<Vec<InfoState>> = vec![Vec::new(); config.n_buyers() + 1];
    for s in enumerate_states(config) {
        levels[config.n_agents() - s.len()].push(s);
    }
    levels
}

/// Active links, their complement, and the per-agent neighbourhoods for one
/// state under a policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSets {
    /// (seller, buyer) pairs with a trade decision of 1.
    pub active: Vec<(AgentId, AgentId)>,
    /// Every other unordered pair, as (lower index, higher index).
    pub inactive: Vec<(AgentId, AgentId)>,
}

impl LinkSets {
    pub fn buyers_of(&self, seller: AgentId) -> Vec<AgentId> {
        self.active
            .iter()
            .filter(|(i, _)| *i == seller)
            .map(|(_, j)| *j)
            .collect()
    }

    pub fn sellers_of(&self, buyer: AgentId) -> Vec<AgentId> {
        self.active
            .iter()
            .filter(|(_, j)| *j == buyer)
            .map(|(i, _)| *i)
            .collect()
    }
}

/// Splits all unordered pairs into active links and the rest.
pub fn link_sets(
    config: &MarketConfig,
    policy: &crate::TradingPolicy,
    state: InfoState,
) -> Result<LinkSets> {
    state.validate(config)?;
    let mut active = Vec::new();
    let mut inactive = Vec::new();
    let n = config.n_agents();
    for a in 0..n {
        for b in (a + 1)..n {
            let (a, b) = (AgentId(a), AgentId(b));
            let link = match (state.contains(a), state.contains(b)) {
                (true, false) => Some((a, b)),
                (false, true) => Some((b, a)),
                _ => None,
            };
            match link {
                Some((i, j)) if policy.trades(i, j, state) => active.push((i, j)),
                _ => inactive.push((a, b)),
            }
        }
    }
    active.sort();
    Ok(LinkSets { active, inactive })
}

/// Maps a pair index in `0..n(n-1)/2` to the unordered pair it names.
pub(crate) fn pair_from_index(n: usize, mut index: usize) -> (usize, usize) {
    for a in 0..n {
        let row = n - a - 1;
        if index < row {
            return (a, a + 1 + index);
        }
        index -= row;
    }
    unreachable!("pair index out of range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TradingPolicy;

    fn cfg(nb: usize, ns: usize) -> MarketConfig {
        MarketConfig::from_discount(nb, ns, 1.0, 0.5, 0.9).unwrap()
    }

    #[test]
    fn recognition_probability() {
        assert_eq!(pair_recognition_probability(&cfg(2, 1)), 1.0 / 3.0);
        assert_eq!(pair_recognition_probability(&cfg(3, 1)), 1.0 / 6.0);
        assert_eq!(pair_recognition_probability(&cfg(9, 1)), 1.0 / 45.0);
    }

    #[test]
    fn redundant_links() {
        assert_eq!(redundant_link_count(2, 3).unwrap(), 1);
        assert_eq!(redundant_link_count(1, 3).unwrap(), 1);
        assert_eq!(redundant_link_count(3, 5).unwrap(), 4);
        assert!(redundant_link_count(4, 3).is_err());
        for n in 3..12 {
            for m in 0..=n {
                let cross = m * (n - m);
                assert_eq!(redundant_link_count(m, n).unwrap() + cross, n * (n - 1) / 2);
            }
        }
    }

    #[test]
    fn state_enumeration_order() {
        let c = cfg(2, 1);
        let states = enumerate_states(&c);
        assert_eq!(
            states,
            vec![
                InfoState(0b111),
                InfoState(0b011),
                InfoState(0b101),
                InfoState(0b001)
            ]
        );
        assert_eq!(enumerate_states(&cfg(10, 1)).len(), 1024);
        assert_eq!(enumerate_states(&cfg(1, 2)).len(), 2);
    }

    #[test]
    fn successors_precede() {
        let c = cfg(4, 2);
        let states = enumerate_states(&c);
        let pos = |s: InfoState| states.iter().position(|x| *x == s).unwrap();
        for (k, s) in states.iter().enumerate() {
            for b in s.uninformed(&c) {
                let next = s.with(b);
                assert!(pos(next) < k);
            }
        }
    }

    #[test]
    fn config_rules() {
        assert!(MarketConfig::from_discount(1, 1, 1.0, 0.5, 0.9).is_err());
        assert!(MarketConfig::from_discount(2, 1, 1.0, 0.4, 0.9).is_err());
        assert!(MarketConfig::from_discount(2, 1, 1.0, 1.0, 0.9).is_err());
        assert!(MarketConfig::from_discount(2, 1, 0.0, 0.5, 0.9).is_err());
        assert!(MarketConfig::from_discount(2, 1, 1.0, 0.5, 1.0).is_err());
        assert!(MarketConfig::new(2, 1, 1.0, 0.5, 0.0, 1.0).is_err());
        let c = MarketConfig::new(2, 1, 1.0, 0.5, 2.0, 0.25).unwrap();
        assert!((c.discount() - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn config_json() {
        let c = MarketConfig::from_json(
            r#"{"n_buyers":2,"n_sellers":1,"value":1,"weight":0.5,"rate":1,"period":0.1}"#,
        )
        .unwrap();
        assert_eq!(c.n_agents(), 3);
        let d = MarketConfig::from_json(
            r#"{"n_buyers":2,"n_sellers":1,"value":1,"weight":0.5,"discount":0.9}"#,
        )
        .unwrap();
        assert!((d.discount() - 0.9).abs() < 1e-15);
        assert!(MarketConfig::from_json(
            r#"{"n_buyers":2,"n_sellers":1,"value":1,"weight":0.5,"discount":0.9,"colour":1}"#
        )
        .is_err());
        assert!(MarketConfig::from_json(
            r#"{"n_buyers":2,"n_sellers":1,"value":1,"weight":0.5,"discount":0.9,"period":1}"#
        )
        .is_err());
    }

    #[test]
    fn link_set_examples() {
        let c = cfg(2, 1);
        let s0 = c.initial_state();
        let imm = TradingPolicy::immediate(&c);
        let ls = link_sets(&c, &imm, s0).unwrap();
        assert_eq!(
            ls.active,
            vec![(AgentId(0), AgentId(1)), (AgentId(0), AgentId(2))]
        );
        assert_eq!(ls.inactive.len(), 1);

        let fb = TradingPolicy::designated_first_buyer(&c, AgentId(1)).unwrap();
        let ls = link_sets(&c, &fb, s0).unwrap();
        assert_eq!(ls.active, vec![(AgentId(0), AgentId(1))]);
        assert_eq!(ls.inactive.len(), 2);

        let full = link_sets(&c, &imm, c.full_state()).unwrap();
        assert!(full.active.is_empty());
        assert_eq!(full.inactive.len(), 3);
    }

    #[test]
    fn link_neighbourhoods() {
        let c = cfg(3, 2);
        let imm = TradingPolicy::immediate(&c);
        let st = InfoState(0b00111);
        let ls = link_sets(&c, &imm, st).unwrap();
        assert_eq!(ls.active.len() + ls.inactive.len(), c.pair_count());
        for i in st.informed(&c) {
            assert!(ls.buyers_of(i).iter().all(|j| !st.contains(*j)));
        }
        for j in st.uninformed(&c) {
            assert_eq!(ls.sellers_of(j).len(), 3);
        }
    }

    #[test]
    fn pair_index_covers_all_pairs() {
        let n = 6;
        let mut seen = std::collections::HashSet::new();
        for k in 0..n * (n - 1) / 2 {
            let (a, b) = pair_from_index(n, k);
            assert!(a < b && b < n);
            assert!(seen.insert((a, b)));
        }
    }

    #[test]
    fn state_validation() {
        let c = cfg(2, 2);
        assert!(InfoState::new(&c, 0b0011).is_ok());
        assert!(InfoState::new(&c, 0b0001).is_err());
        assert!(InfoState::new(&c, 0b10011).is_err());
        let s = c.initial_state();
        assert!(TradeOpportunity::new(&c, AgentId(0), AgentId(2), s).is_ok());
        assert!(TradeOpportunity::new(&c, AgentId(0), AgentId(1), s).is_err());
        assert!(TradeOpportunity::new(&c, AgentId(2), AgentId(3), s).is_err());
    }
}
