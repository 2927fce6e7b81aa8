//! Nash-bargaining prices and continuation values for a fixed trading policy.
//!
//! Values in a state depend on prices in that state, and each active link's
//! price depends on the values of both parties, so the prices of one state
//! solve a small linear system
//!
//! ```text
//! Psi(M) p(M) = kappa(M) / (1 - delta * rho_hat)
//! Psi(M) = I - (delta * rho_hat / (1 - delta * rho_hat)) Phi(M)
//! ```
//!
//! where `rho_hat = rho / (1 - delta * rho * |inactive pairs|)` folds the
//! draws that leave the state unchanged into the recognition probability of
//! each active link. `Phi` couples links that share a buyer (weight `w`) or a
//! seller (weight `1 - w`); `kappa` collects everything determined by
//! successor states. Since successors have strictly more informed agents, the
//! lattice is solved level by level from the full state down.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::exec::Exec;
use crate::model::{
    self, link_sets, pair_recognition_probability, redundant_link_count, AgentId, InfoState, Item,
    MarketConfig, TradeOpportunity,
};
use crate::policy::TradingPolicy;
use crate::{Error, Result};

/// One active trade in a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Link {
    pub seller: AgentId,
    pub buyer: AgentId,
    pub item: Item,
}

impl Link {
    pub fn info(seller: AgentId, buyer: AgentId) -> Self {
        Link {
            seller,
            buyer,
            item: Item::Info,
        }
    }

    /// Gross value of the item to the buyer.
    pub fn gain(&self, config: &MarketConfig) -> f64 {
        match self.item {
            Item::Info => config.value(),
            Item::Token => 0.0,
        }
    }
}

/// The linear price system of one state.
#[derive(Debug, Clone)]
pub struct PriceSystem {
    pub links: Vec<Link>,
    pub phi: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub kappa: DVector<f64>,
    pub rho_hat: f64,
    pub discount: f64,
    pub(crate) label: String,
}

impl PriceSystem {
    /// Right-hand side `kappa / (1 - delta * rho_hat)`.
    pub fn rhs(&self) -> DVector<f64> {
        &self.kappa / (1.0 - self.discount * self.rho_hat)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Unit diagonal and non-positive off-diagonal entries.
    pub fn is_z_matrix(&self) -> bool {
        let n = self.psi.nrows();
        (0..n).all(|u| self.psi[(u, u)] == 1.0 && (0..n).all(|v| u == v || self.psi[(u, v)] <= 0.0))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.psi.row_iter().map(|r| r.sum()).collect()
    }

    /// Z-matrix with `Psi * 1 > 0`, hence a nonsingular M-matrix.
    pub fn is_m_matrix(&self) -> bool {
        self.is_z_matrix() && self.row_sums().iter().all(|s| *s > 0.0)
    }

    /// `max |Psi p - rhs|`.
    pub fn residual(&self, prices: &[f64]) -> f64 {
        let p = DVector::from_column_slice(prices);
        (&self.psi * p - self.rhs()).amax()
    }

    /// The same system with links reordered: link `k` of the result is link
    /// `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> PriceSystem {
        let n = self.len();
        assert_eq!(order.len(), n);
        let phi = DMatrix::from_fn(n, n, |u, v| self.phi[(order[u], order[v])]);
        let psi = DMatrix::from_fn(n, n, |u, v| self.psi[(order[u], order[v])]);
        let kappa = DVector::from_fn(n, |u, _| self.kappa[order[u]]);
        PriceSystem {
            links: order.iter().map(|&k| self.links[k]).collect(),
            phi,
            psi,
            kappa,
            rho_hat: self.rho_hat,
            discount: self.discount,
            label: self.label.clone(),
        }
    }
}

/// Continuation values already computed for successor states.
pub trait ValueTable {
    fn values_at(&self, state: InfoState) -> Option<&[f64]>;
}

/// `rho / (1 - delta * rho * inactive)`.
pub(crate) fn rho_hat(config: &MarketConfig, inactive: usize) -> f64 {
    let rho = pair_recognition_probability(config);
    rho / (1.0 - config.discount() * rho * inactive as f64)
}

/// Recognition probability of one active link once unproductive draws are
/// folded in.
pub fn effective_recognition(
    config: &MarketConfig,
    state: InfoState,
    policy: &TradingPolicy,
) -> Result<f64> {
    let links = link_sets(config, policy, state)?;
    if links.active.is_empty() {
        return Err(Error::NoActiveLinks {
            state: state.to_string(),
        });
    }
    Ok(rho_hat(config, links.inactive.len()))
}

/// Price when a single uninformed buyer remains and `active_count` informed
/// agents trade with them.
pub fn base_case_price(config: &MarketConfig, active_count: usize) -> Result<f64> {
    if active_count < 1 || active_count > config.n_agents() - 1 {
        return Err(Error::Domain(format!(
            "active link count {active_count} outside [1, {}]",
            config.n_agents() - 1
        )));
    }
    let l = active_count as f64;
    let w = config.weight();
    let dr = config.discount() * rho_hat(config, config.pair_count() - active_count);
    Ok(w * (1.0 - dr * l) * config.value() / (1.0 - dr * (w * l + (1.0 - w))))
}

/// Assembles `Phi`, `Psi` and `kappa` for a list of active links.
///
/// `successors[k]` holds every agent's value in the state reached when link
/// `k` trades. Works for token trades as well as information trades: the
/// coupling between links `t` and `t'` is `(1-w) s_i(t') - w s_j(t')`, where
/// `s_a(t')` is +1 if `a` sells in `t'`, -1 if `a` buys in `t'`, 0 otherwise.
pub(crate) fn assemble_links(
    config: &MarketConfig,
    label: String,
    links: Vec<Link>,
    successors: &[&[f64]],
    inactive: usize,
) -> PriceSystem {
    let n_links = links.len();
    let delta = config.discount();
    let w = config.weight();
    let rho_hat = rho_hat(config, inactive);

    let side = |agent: AgentId, link: &Link| -> f64 {
        if link.seller == agent {
            1.0
        } else if link.buyer == agent {
            -1.0
        } else {
            0.0
        }
    };
    // Price-free part of an agent's flow in this state, per unit of rho_hat.
    let base_flow = |agent: AgentId| -> f64 {
        links
            .iter()
            .zip(successors)
            .map(|(l, next)| {
                let gain = if l.buyer == agent {
                    l.gain(config)
                } else {
                    0.0
                };
                gain + delta * next[agent.index()]
            })
            .sum()
    };

    let mut phi = DMatrix::zeros(n_links, n_links);
    let mut kappa = DVector::zeros(n_links);
    for (u, lu) in links.iter().enumerate() {
        for (v, lv) in links.iter().enumerate() {
            if u != v {
                phi[(u, v)] = (1.0 - w) * side(lu.seller, lv) - w * side(lu.buyer, lv);
            }
        }
        let next = successors[u];
        let (i, j) = (lu.seller.index(), lu.buyer.index());
        kappa[u] = w * lu.gain(config) + w * delta * next[j] - (1.0 - w) * delta * next[i]
            + (1.0 - w) * delta * rho_hat * base_flow(lu.seller)
            - w * delta * rho_hat * base_flow(lu.buyer);
    }
    let scale = delta * rho_hat / (1.0 - delta * rho_hat);
    let psi = DMatrix::identity(n_links, n_links) - &phi * scale;
    PriceSystem {
        links,
        phi,
        psi,
        kappa,
        rho_hat,
        discount: delta,
        label,
    }
}

fn active_links(
    config: &MarketConfig,
    policy: &TradingPolicy,
    state: InfoState,
) -> Result<(Vec<Link>, usize)> {
    let ls = link_sets(config, policy, state)?;
    let links = ls.active.iter().map(|&(i, j)| Link::info(i, j)).collect();
    Ok((links, ls.inactive.len()))
}

fn successor_values<'a, T: ValueTable + ?Sized>(
    table: &'a T,
    state: InfoState,
    links: &[Link],
) -> Result<Vec<&'a [f64]>> {
    links
        .iter()
        .map(|l| {
            let next = state.with(l.buyer);
            table.values_at(next).ok_or_else(|| {
                Error::Sequencing(format!("successor {next} of {state} is not solved"))
            })
        })
        .collect()
}

/// Builds the price system of `state` from solved successor values.
pub fn assemble_price_system<T: ValueTable + ?Sized>(
    config: &MarketConfig,
    policy: &TradingPolicy,
    state: InfoState,
    table: &T,
) -> Result<PriceSystem> {
    let (links, inactive) = active_links(config, policy, state)?;
    if links.is_empty() {
        return Err(Error::NoActiveLinks {
            state: state.to_string(),
        });
    }
    let succ = successor_values(table, state, &links)?;
    Ok(assemble_links(
        config,
        state.to_string(),
        links,
        &succ,
        inactive,
    ))
}

/// Solves `Psi p = kappa / (1 - delta rho_hat)` by LU with partial pivoting.
///
/// Refuses systems that are not nonsingular M-matrices and checks the
/// residual of the result.
pub fn solve_state_prices(system: &PriceSystem) -> Result<Vec<f64>> {
    let fail = |reason: String| Error::Numerical {
        state: system.label.clone(),
        reason,
    };
    if !system.is_m_matrix() {
        return Err(fail(format!(
            "price system is not a nonsingular M-matrix (row sums {:?})",
            system.row_sums()
        )));
    }
    let rhs = system.rhs();
    let sol = system
        .psi
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| fail("singular price system".into()))?;
    let prices: Vec<f64> = sol.iter().copied().collect();
    if prices.iter().any(|p| !p.is_finite()) {
        return Err(fail("non-finite price".into()));
    }
    let tol = 1e-10 * system.kappa.amax().max(1.0);
    let res = system.residual(&prices);
    if res > tol {
        return Err(fail(format!("residual {res:e} exceeds {tol:e}")));
    }
    Ok(prices)
}

/// Values of every agent in a state given its prices.
pub(crate) fn values_from(
    config: &MarketConfig,
    links: &[Link],
    prices: &[f64],
    successors: &[&[f64]],
    inactive: usize,
) -> Vec<f64> {
    let n = config.n_agents();
    if links.is_empty() {
        return vec![0.0; n];
    }
    let delta = config.discount();
    let rho_hat = rho_hat(config, inactive);
    let mut flow = vec![0.0; n];
    for ((l, p), next) in links.iter().zip(prices).zip(successors) {
        flow[l.seller.index()] += p;
        flow[l.buyer.index()] += l.gain(config) - p;
        for (f, v) in flow.iter_mut().zip(next.iter()) {
            *f += delta * v;
        }
    }
    flow.into_iter().map(|f| rho_hat * f).collect()
}

/// Rational-expectations values in `state` given its prices.
///
/// Draws of inactive pairs leave the state unchanged, so `V` appears on both
/// sides of the recursion; the closed form divides by
/// `1 - delta * rho * |inactive pairs|`.
pub fn state_values<T: ValueTable + ?Sized>(
    config: &MarketConfig,
    policy: &TradingPolicy,
    state: InfoState,
    prices: &[f64],
    table: &T,
) -> Result<Vec<f64>> {
    let (links, inactive) = active_links(config, policy, state)?;
    if prices.len() != links.len() {
        return Err(Error::Domain(format!(
            "{} prices for {} active links",
            prices.len(),
            links.len()
        )));
    }
    let succ = successor_values(table, state, &links)?;
    Ok(values_from(config, &links, prices, &succ, inactive))
}

/// Prices and values of one state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSolution {
    pub links: Vec<Link>,
    pub prices: Vec<f64>,
    pub values: Vec<f64>,
}

impl StateSolution {
    pub fn price_of(&self, seller: AgentId, buyer: AgentId, item: Item) -> Option<f64> {
        self.links
            .iter()
            .position(|l| l.seller == seller && l.buyer == buyer && l.item == item)
            .map(|k| self.prices[k])
    }
}

/// Solves one state given its links and successor values.
pub(crate) fn solve_links(
    config: &MarketConfig,
    label: String,
    links: Vec<Link>,
    successors: &[&[f64]],
    inactive: usize,
) -> Result<StateSolution> {
    if links.is_empty() {
        return Ok(StateSolution {
            links,
            prices: Vec::new(),
            values: vec![0.0; config.n_agents()],
        });
    }
    let system = assemble_links(config, label, links, successors, inactive);
    let prices = solve_state_prices(&system)?;
    let values = values_from(config, &system.links, &prices, successors, inactive);
    Ok(StateSolution {
        links: system.links,
        prices,
        values,
    })
}

/// Prices `p(i,j,M)` for active links and values `V(i,M)` for every state.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    config: MarketConfig,
    states: Vec<StateSolution>,
}

impl Solution {
    pub fn config(&self) -> &MarketConfig {
        &self.config
    }

    pub fn state(&self, state: InfoState) -> Option<&StateSolution> {
        if state.validate(&self.config).is_err() {
            return None;
        }
        self.states.get(state.buyer_index(&self.config))
    }

    /// Price of an opportunity; an error if the link is not active.
    pub fn price(&self, opp: &TradeOpportunity) -> Result<f64> {
        opp.validate(&self.config)?;
        self.state(opp.state)
            .and_then(|s| s.price_of(opp.seller, opp.buyer, Item::Info))
            .ok_or_else(|| Error::InactiveLink(opp.to_string()))
    }

    pub fn value(&self, agent: AgentId, state: InfoState) -> f64 {
        self.state(state).expect("state outside the lattice").values[agent.index()]
    }

    /// States in backward-induction order with their solutions.
    pub fn iter(&self) -> impl Iterator<Item = (InfoState, &StateSolution)> + '_ {
        model::enumerate_states(&self.config)
            .into_iter()
            .map(move |s| (s, &self.states[s.buyer_index(&self.config)]))
    }
}

impl ValueTable for Solution {
    fn values_at(&self, state: InfoState) -> Option<&[f64]> {
        self.state(state).map(|s| s.values.as_slice())
    }
}

struct Partial<'a> {
    config: &'a MarketConfig,
    states: &'a [Option<StateSolution>],
}

impl ValueTable for Partial<'_> {
    fn values_at(&self, state: InfoState) -> Option<&[f64]> {
        self.states
            .get(state.buyer_index(self.config))?
            .as_ref()
            .map(|s| s.values.as_slice())
    }
}

/// Solves the whole state lattice by backward induction.
pub fn solve_market(config: &MarketConfig, policy: &TradingPolicy) -> Result<Solution> {
    solve_market_with(config, policy, Exec::default())
}

/// [`solve_market`] with an explicit execution strategy. States with the same
/// number of informed agents are solved concurrently.
pub fn solve_market_with(
    config: &MarketConfig,
    policy: &TradingPolicy,
    exec: Exec,
) -> Result<Solution> {
    let mut states: Vec<Option<StateSolution>> = vec![None; 1usize << config.n_buyers()];
    for level in model::levels(config) {
        let solved = {
            let table = Partial {
                config,
                states: &states,
            };
            exec.map(&level, |&state| -> Result<StateSolution> {
                let (links, inactive) = active_links(config, policy, state)?;
                let succ = successor_values(&table, state, &links)?;
                solve_links(config, state.to_string(), links, &succ, inactive)
            })
        };
        for (state, sol) in level.iter().zip(solved) {
            states[state.buyer_index(config)] = Some(sol?);
        }
    }
    Ok(Solution {
        config: *config,
        states: states
            .into_iter()
            .map(|s| s.expect("every state solved"))
            .collect(),
    })
}

/// Immediate-agreement prices and values, which depend only on the number of
/// informed agents `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetricSolution {
    /// Smallest tabulated `m` (the number of sellers).
    pub first_m: usize,
    pub price_by_m: Vec<f64>,
    pub seller_value: Vec<f64>,
    pub buyer_value: Vec<f64>,
}

impl SymmetricSolution {
    fn at(&self, v: &[f64], m: usize) -> Option<f64> {
        m.checked_sub(self.first_m).and_then(|k| v.get(k)).copied()
    }

    /// `p(m)`; undefined (`None`) at `m = n`.
    pub fn price(&self, m: usize) -> Option<f64> {
        self.at(&self.price_by_m, m).filter(|p| !p.is_nan())
    }

    /// Value of any informed agent with `m` informed.
    pub fn seller_value(&self, m: usize) -> Option<f64> {
        self.at(&self.seller_value, m)
    }

    /// Value of any uninformed agent with `m` informed.
    pub fn buyer_value(&self, m: usize) -> Option<f64> {
        self.at(&self.buyer_value, m)
    }
}

/// `O(n)` recursion for immediate agreement.
///
/// With `r_m = rho / (1 - delta rho R(m))`:
///
/// ```text
/// Vs(m) = r_m [ (n-m) p(m) + delta m (n-m) Vs(m+1) ]
/// Vb(m) = r_m [ m (v - p(m)) + delta m (n-m-1) Vb(m+1) + delta m Vs(m+1) ]
/// p(m)  = w (v + delta Vs(m+1) - delta Vb(m)) - (1-w)(delta Vs(m+1) - delta Vs(m))
/// ```
///
/// `p(m)` appears linearly on both sides and is solved for directly.
pub fn symmetric_solve(config: &MarketConfig) -> SymmetricSolution {
    let n = config.n_agents();
    let ns = config.n_sellers();
    let (v, w, d) = (config.value(), config.weight(), config.discount());
    let rho = pair_recognition_probability(config);
    let len = n - ns + 1;
    let mut price = vec![f64::NAN; len];
    let mut vs = vec![0.0; len];
    let mut vb = vec![0.0; len];
    for m in (ns..n).rev() {
        let k = m - ns;
        let (mf, uf) = (m as f64, (n - m) as f64);
        let r_m = rho / (1.0 - d * rho * redundant_link_count(m, n).expect("m <= n") as f64);
        let (vs1, vb1) = (vs[k + 1], vb[k + 1]);
        // Vs(m) = as + bs p, Vb(m) = ab - bb p
        let a_s = r_m * d * mf * uf * vs1;
        let b_s = r_m * uf;
        let a_b = r_m * (mf * v + d * mf * (uf - 1.0) * vb1 + d * mf * vs1);
        let b_b = r_m * mf;
        let p = (w * v + w * d * vs1 - w * d * a_b - (1.0 - w) * d * vs1 + (1.0 - w) * d * a_s)
            / (1.0 - w * d * b_b - (1.0 - w) * d * b_s);
        price[k] = p;
        vs[k] = a_s + b_s * p;
        vb[k] = a_b - b_b * p;
    }
    SymmetricSolution {
        first_m: ns,
        price_by_m: price,
        seller_value: vs,
        buyer_value: vb,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(nb: usize, ns: usize, w: f64, d: f64) -> MarketConfig {
        MarketConfig::from_discount(nb, ns, 1.0, w, d).unwrap()
    }

    #[test]
    fn effective_recognition_examples() {
        let c = cfg(2, 1, 0.5, 0.5);
        let imm = TradingPolicy::immediate(&c);
        // two informed, one buyer: |L| = 2, |L^c| = 1
        let st = InfoState(0b011);
        assert!((effective_recognition(&c, st, &imm).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(
            effective_recognition(&c, c.full_state(), &imm),
            Err(Error::NoActiveLinks { .. })
        ));
        let near_one = cfg(2, 1, 0.5, 1.0 - 1e-12);
        assert!((effective_recognition(&near_one, st, &imm).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(rho_hat(&c, 0), 1.0 / 3.0);
    }

    #[test]
    fn base_case_examples() {
        let c = cfg(2, 1, 0.5, 0.5);
        assert!((base_case_price(&c, 2).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        for d in [0.1, 0.5, 0.99] {
            let c = cfg(3, 1, 0.5, d);
            assert!((base_case_price(&c, 1).unwrap() - 0.5).abs() < 1e-14);
        }
        let myopic = cfg(4, 1, 0.7, 1e-300);
        for l in 1..=4 {
            assert!((base_case_price(&myopic, l).unwrap() - 0.7).abs() < 1e-12);
        }
        assert!(base_case_price(&c, 0).is_err());
    }

    #[test]
    fn phi_structure() {
        let c = cfg(2, 1, 0.6, 0.9);
        let sol = solve_market(&c, &TradingPolicy::immediate(&c)).unwrap();
        let imm = TradingPolicy::immediate(&c);
        let sys = assemble_price_system(&c, &imm, c.initial_state(), &sol).unwrap();
        assert_eq!(sys.len(), 2);
        assert!((sys.phi[(0, 1)] - 0.4).abs() < 1e-15);
        assert!((sys.phi[(1, 0)] - 0.4).abs() < 1e-15);

        let two_sellers = cfg(1, 2, 0.6, 0.9);
        let imm2 = TradingPolicy::immediate(&two_sellers);
        let sol2 = solve_market(&two_sellers, &imm2).unwrap();
        let sys2 =
            assemble_price_system(&two_sellers, &imm2, two_sellers.initial_state(), &sol2).unwrap();
        assert!((sys2.phi[(0, 1)] - 0.6).abs() < 1e-15);

        let fb = TradingPolicy::designated_first_buyer(&c, AgentId(1)).unwrap();
        let solfb = solve_market(&c, &fb).unwrap();
        let sys1 = assemble_price_system(&c, &fb, c.initial_state(), &solfb).unwrap();
        assert_eq!(sys1.phi, DMatrix::zeros(1, 1));
        assert_eq!(sys1.psi, DMatrix::identity(1, 1));
        let p = solve_state_prices(&sys1).unwrap();
        assert!((p[0] - sys1.kappa[0] / (1.0 - sys1.discount * sys1.rho_hat)).abs() < 1e-15);
    }

    #[test]
    fn base_states_match_closed_form() {
        for (nb, ns) in [(2, 1), (3, 1), (2, 2), (3, 3)] {
            for d in [0.5, 0.9, 0.99] {
                let c = cfg(nb, ns, 0.5, d);
                let imm = TradingPolicy::immediate(&c);
                let sol = solve_market(&c, &imm).unwrap();
                for (st, s) in sol.iter() {
                    if st.len() == c.n_agents() - 1 {
                        let expect = base_case_price(&c, c.n_agents() - 1).unwrap();
                        for p in &s.prices {
                            assert!((p - expect).abs() < 1e-12, "{p} vs {expect}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn full_state_values_are_zero() {
        let c = cfg(3, 1, 0.5, 0.9);
        let sol = solve_market(&c, &TradingPolicy::immediate(&c)).unwrap();
        assert!(sol
            .state(c.full_state())
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn no_trade_policy_has_zero_values() {
        let c = cfg(2, 1, 0.5, 0.9);
        let none =
            TradingPolicy::from_table(&c, Vec::new(), Some(crate::policy::Decision::NoTrade))
                .unwrap();
        let sol = solve_market(&c, &none).unwrap();
        for (_, s) in sol.iter() {
            assert!(s.prices.is_empty());
            assert!(s.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn inactive_link_price_is_an_error() {
        let c = cfg(2, 1, 0.5, 0.9);
        let fb = TradingPolicy::designated_first_buyer(&c, AgentId(1)).unwrap();
        let sol = solve_market(&c, &fb).unwrap();
        let opp = TradeOpportunity::new(&c, AgentId(0), AgentId(2), c.initial_state()).unwrap();
        assert!(matches!(sol.price(&opp), Err(Error::InactiveLink(_))));
    }

    #[test]
    fn symmetric_myopic_and_base() {
        let c = cfg(4, 1, 0.6, 1e-300);
        let s = symmetric_solve(&c);
        for m in 1..5 {
            assert!((s.price(m).unwrap() - 0.6).abs() < 1e-12);
        }
        assert!(s.price(5).is_none());
        assert_eq!(s.seller_value(5), Some(0.0));
        for d in [0.3, 0.9, 0.999] {
            let c = cfg(5, 2, 0.7, d);
            let s = symmetric_solve(&c);
            let expect = base_case_price(&c, 6).unwrap();
            assert!((s.price(6).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let c = cfg(5, 2, 0.55, 0.95);
        let imm = TradingPolicy::immediate(&c);
        let a = solve_market_with(&c, &imm, Exec::Sequential).unwrap();
        let b = solve_market_with(&c, &imm, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
