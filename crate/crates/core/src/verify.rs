//! Nash-bargaining consistency of a policy with its own prices and values.
//!
//! A pair trades iff the joint surplus with trade,
//! `delta V(i, M+j) + v + delta V(j, M+j)`, weakly exceeds the joint surplus
//! without, `delta V(i, M) + delta V(j, M)`. Prices cancel out of the joint
//! surplus, so only values enter. Comparisons use a tolerance `eps`; a
//! comparison within `eps` of equality is a boundary case and passes either
//! way.

use std::fmt::Write as _;

use serde::Serialize;

use crate::bargain::{solve_market_with, Solution};
use crate::exec::Exec;
use crate::model::{
    enumerate_states, opportunities, AgentId, Item, MarketConfig, TradeOpportunity,
};
use crate::policy::{AnyPolicy, Decision, TokenPolicy, TradingPolicy};
use crate::token::{
    feasible_opportunities, reachable_states, solve_token_market_closure, TokenSolution, TokenState,
};
use crate::{Error, Result};

/// Relative default tolerance; the absolute tolerance is this times `v`.
pub const DEFAULT_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemSurplus {
    pub item: Item,
    pub surplus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub seller: AgentId,
    pub buyer: AgentId,
    pub state: String,
    /// Joint surplus of the best trade available to the pair.
    pub agree_surplus: f64,
    pub disagree_surplus: f64,
    pub required: Decision,
    pub actual: Decision,
    /// Item traded by the policy, if any.
    pub item: Option<Item>,
    /// Per-item surpluses (token market only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<ItemSurplus>,
    pub pass: bool,
    pub margin: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub verdicts: Vec<Verdict>,
    pub overall: bool,
    pub epsilon: f64,
}

impl EquilibriumReport {
    fn new(verdicts: Vec<Verdict>, epsilon: f64) -> Self {
        let overall = verdicts.iter().all(|v| v.pass);
        EquilibriumReport {
            verdicts,
            overall,
            epsilon,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.pass)
    }

    /// Fixed-width table, one row per verdict.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>6} {:>6} {:>5} {:>14} {:>14} {:>14} {:>8} {:>8} {:>5}",
            "state",
            "seller",
            "buyer",
            "item",
            "agree",
            "disagree",
            "margin",
            "required",
            "actual",
            "pass"
        );
        for v in &self.verdicts {
            let item = v.item.map(|i| i.to_string()).unwrap_or_else(|| "-".into());
            let pass = match (v.pass, v.boundary) {
                (true, true) => "ok*",
                (true, false) => "ok",
                (false, _) => "FAIL",
            };
            let _ = writeln!(
                out,
                "{:<14} {:>6} {:>6} {:>5} {:>14.9} {:>14.9} {:>14.3e} {:>8} {:>8} {:>5}",
                v.state,
                v.seller.index(),
                v.buyer.index(),
                item,
                v.agree_surplus,
                v.disagree_surplus,
                v.margin,
                v.required,
                v.actual,
                pass
            );
        }
        let _ = writeln!(
            out,
            "overall: {} ({} of {} verdicts fail, eps = {:e}; * = boundary)",
            if self.overall { "PASS" } else { "FAIL" },
            self.failures().count(),
            self.verdicts.len(),
            self.epsilon
        );
        out
    }
}

/// Checks one opportunity against a solved market.
pub fn check_opportunity(
    solution: &Solution,
    policy: &TradingPolicy,
    opp: &TradeOpportunity,
    eps: f64,
) -> Result<Verdict> {
    let c = solution.config();
    opp.validate(c)?;
    let d = c.discount();
    let next = opp.successor();
    let (i, j) = (opp.seller, opp.buyer);
    let agree = d * solution.value(i, next) + c.value() + d * solution.value(j, next);
    let disagree = d * solution.value(i, opp.state) + d * solution.value(j, opp.state);
    let actual = policy.decide(c, opp)?;
    let margin = agree - disagree;
    let pass = match actual {
        Decision::Trade => agree >= disagree - eps,
        Decision::NoTrade => agree < disagree + eps,
    };
    Ok(Verdict {
        seller: i,
        buyer: j,
        state: opp.state.to_string(),
        agree_surplus: agree,
        disagree_surplus: disagree,
        required: Decision::from_bool(agree >= disagree),
        actual,
        item: actual.is_trade().then_some(Item::Info),
        options: Vec::new(),
        pass,
        margin,
        boundary: margin.abs() <= eps,
    })
}

/// Solves under `policy` and checks every opportunity in every state.
pub fn verify_equilibrium(
    config: &MarketConfig,
    policy: &TradingPolicy,
) -> Result<EquilibriumReport> {
    verify_equilibrium_with(
        config,
        policy,
        DEFAULT_EPSILON * config.value(),
        Exec::default(),
    )
}

pub fn verify_equilibrium_with(
    config: &MarketConfig,
    policy: &TradingPolicy,
    eps: f64,
    exec: Exec,
) -> Result<EquilibriumReport> {
    let solution = solve_market_with(config, policy, exec)?;
    let opps: Vec<TradeOpportunity> = enumerate_states(config)
        .into_iter()
        .flat_map(|s| opportunities(config, s))
        .collect();
    let verdicts = exec
        .map(&opps, |o| check_opportunity(&solution, policy, o, eps))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumReport::new(verdicts, eps))
}

/// Checks one meeting of the token market: the pair's chosen trade (or no
/// trade) must attain the largest joint surplus among its feasible options.
pub fn check_token_meeting(
    solution: &TokenSolution,
    seller: AgentId,
    buyer: AgentId,
    state: TokenState,
    eps: f64,
) -> Result<Verdict> {
    let c = solution.config();
    let policy = solution.policy();
    let d = c.discount();
    let value = |a: AgentId, s: TokenState| {
        solution
            .value(a, s)
            .ok_or_else(|| Error::Sequencing(format!("state {s} not solved")))
    };
    let disagree = d * value(seller, state)? + d * value(buyer, state)?;
    let mut options = Vec::new();
    let mut chosen = None;
    for opp in feasible_opportunities(c, policy.supply(), state) {
        if opp.seller != seller || opp.buyer != buyer {
            continue;
        }
        let link = opp.link();
        let next = state.after(&link);
        let surplus = link.gain(c) + d * value(seller, next)? + d * value(buyer, next)?;
        options.push(ItemSurplus {
            item: opp.item,
            surplus,
        });
        if policy.trades(c, &opp) {
            if chosen.is_some() {
                return Err(Error::BundledTrade(format!("{seller}-{buyer} in {state}")));
            }
            chosen = Some((opp.item, surplus));
        }
    }
    if options.is_empty() {
        return Err(Error::Domain(format!(
            "no feasible trade between {seller} and {buyer} in {state}"
        )));
    }
    let best = options
        .iter()
        .fold(None::<&ItemSurplus>, |acc, o| match acc {
            Some(a) if a.surplus >= o.surplus => Some(a),
            _ => Some(o),
        })
        .expect("non-empty");
    let agree = best.surplus;
    let best_overall = agree.max(disagree);
    let achieved = chosen.map(|(_, s)| s).unwrap_or(disagree);
    let margin = agree - disagree;
    let pass = achieved >= best_overall - eps;
    let gap = options
        .iter()
        .map(|o| o.surplus)
        .chain([disagree])
        .filter(|s| *s != achieved)
        .map(|s| (s - achieved).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(Verdict {
        seller,
        buyer,
        state: state.to_string(),
        agree_surplus: agree,
        disagree_surplus: disagree,
        required: Decision::from_bool(agree >= disagree),
        actual: Decision::from_bool(chosen.is_some()),
        item: chosen.map(|(i, _)| i),
        options,
        pass,
        margin,
        boundary: gap <= eps,
    })
}

/// Solves the token market on every reachable state and checks every
/// meeting that has at least one feasible trade.
pub fn verify_token_equilibrium(
    config: &MarketConfig,
    policy: &TokenPolicy,
) -> Result<EquilibriumReport> {
    verify_token_equilibrium_with(config, policy, DEFAULT_EPSILON * config.value())
}

pub fn verify_token_equilibrium_with(
    config: &MarketConfig,
    policy: &TokenPolicy,
    eps: f64,
) -> Result<EquilibriumReport> {
    let solution = solve_token_market_closure(config, policy)?;
    let mut verdicts = Vec::new();
    for state in reachable_states(config, policy.supply()) {
        let mut pairs: Vec<(AgentId, AgentId)> =
            feasible_opportunities(config, policy.supply(), state)
                .iter()
                .map(|o| (o.seller, o.buyer))
                .collect();
        pairs.dedup();
        for (i, j) in pairs {
            verdicts.push(check_token_meeting(&solution, i, j, state, eps)?);
        }
    }
    Ok(EquilibriumReport::new(verdicts, eps))
}

/// Either report kind for a policy of either kind.
pub fn verify_any(
    config: &MarketConfig,
    policy: &AnyPolicy,
    eps: f64,
) -> Result<EquilibriumReport> {
    match policy {
        AnyPolicy::Info(p) => verify_equilibrium_with(config, p, eps, Exec::default()),
        AnyPolicy::Token(p) => verify_token_equilibrium_with(config, p, eps),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub discount: f64,
    pub period: f64,
    pub pass: bool,
    pub failures: usize,
    /// Up to five failing verdicts, as `seller->buyer@state`.
    pub failing: Vec<String>,
}

/// Pass/fail scan of a discount grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub points: Vec<GridPoint>,
    /// Smallest grid discount from which every larger grid point passes.
    pub frontier_discount: Option<f64>,
    /// Period length at the frontier: the policy is consistent for every grid
    /// period at or below it.
    pub period_threshold: Option<f64>,
    /// True if the passing points form an upper segment of the grid.
    pub monotone: bool,
    pub found: bool,
}

/// Verifies the policy at every grid discount (with the configured rate) and
/// locates the pass/fail frontier. Policies built against `config` stay valid
/// because only the period changes.
pub fn find_delta_threshold(
    config: &MarketConfig,
    policy: &AnyPolicy,
    grid: &[f64],
    eps: f64,
) -> Result<ThresholdReport> {
    find_delta_threshold_with(config, policy, grid, eps, Exec::default())
}

pub fn find_delta_threshold_with(
    config: &MarketConfig,
    policy: &AnyPolicy,
    grid: &[f64],
    eps: f64,
    exec: Exec,
) -> Result<ThresholdReport> {
    if grid.is_empty() {
        return Err(Error::Domain("empty discount grid".into()));
    }
    if grid.iter().any(|d| !(*d > 0.0 && *d < 1.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain(
            "discount grid must be strictly increasing inside (0, 1)".into(),
        ));
    }
    let points = exec
        .map(grid, |&d| -> Result<GridPoint> {
            let period = -d.ln() / config.rate();
            let c = config.with_period(period)?;
            let report = verify_any(&c, policy, eps)?;
            let failing: Vec<String> = report
                .failures()
                .map(|v| {
                    let item = v.item.map(|i| format!("[{i}]")).unwrap_or_default();
                    format!("{}->{}@{}{}", v.seller, v.buyer, v.state, item)
                })
                .collect();
            Ok(GridPoint {
                discount: d,
                period,
                pass: report.overall,
                failures: failing.len(),
                failing: failing.into_iter().take(5).collect(),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let first_pass = points.iter().position(|p| p.pass);
    let monotone = match first_pass {
        Some(k) => points[k..].iter().all(|p| p.pass),
        None => true,
    };
    // start of the longest passing suffix
    let suffix = points.iter().rposition(|p| !p.pass).map_or(0, |k| k + 1);
    let (frontier_discount, period_threshold) = if suffix < points.len() {
        (Some(points[suffix].discount), Some(points[suffix].period))
    } else {
        (None, None)
    };
    Ok(ThresholdReport {
        found: frontier_discount.is_some(),
        points,
        frontier_discount,
        period_threshold,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bargain::solve_market;
    use crate::model::InfoState;

    fn cfg(nb: usize, d: f64) -> MarketConfig {
        MarketConfig::from_discount(nb, 1, 1.0, 0.5, d).unwrap()
    }

    #[test]
    fn last_buyer_must_trade() {
        let c = cfg(3, 0.9);
        let imm = TradingPolicy::immediate(&c);
        let sol = solve_market(&c, &imm).unwrap();
        let st = InfoState(0b0111);
        for i in st.informed(&c) {
            let opp = TradeOpportunity::new(&c, i, AgentId(3), st).unwrap();
            let v = check_opportunity(&sol, &imm, &opp, 1e-9).unwrap();
            assert!((v.agree_surplus - 1.0).abs() < 1e-15);
            assert!(v.disagree_surplus <= 0.9);
            assert_eq!(v.required, Decision::Trade);
            assert!(v.pass);
        }
    }

    #[test]
    fn first_buyer_delay_depends_on_patience() {
        let opp_for = |c: &MarketConfig| {
            TradeOpportunity::new(c, AgentId(0), AgentId(2), c.initial_state()).unwrap()
        };
        let patient = cfg(2, 0.999);
        let fb = TradingPolicy::designated_first_buyer(&patient, AgentId(1)).unwrap();
        let sol = solve_market(&patient, &fb).unwrap();
        let v = check_opportunity(&sol, &fb, &opp_for(&patient), 1e-9).unwrap();
        assert!(v.pass);
        assert!((v.agree_surplus - 1.0).abs() < 0.01);
        assert!((v.disagree_surplus - 1.5).abs() < 0.01);

        let impatient = cfg(2, 0.1);
        let fb = TradingPolicy::designated_first_buyer(&impatient, AgentId(1)).unwrap();
        let sol = solve_market(&impatient, &fb).unwrap();
        let v = check_opportunity(&sol, &fb, &opp_for(&impatient), 1e-9).unwrap();
        assert!(v.agree_surplus > v.disagree_surplus);
        assert!(!v.pass);
    }

    #[test]
    fn no_trade_policy_fails() {
        let c = cfg(2, 0.9);
        let none = TradingPolicy::from_table(&c, Vec::new(), Some(Decision::NoTrade)).unwrap();
        assert!(!verify_equilibrium(&c, &none).unwrap().overall);
    }

    #[test]
    fn out_of_domain_opportunity() {
        let c = cfg(2, 0.9);
        let imm = TradingPolicy::immediate(&c);
        let sol = solve_market(&c, &imm).unwrap();
        let bad = TradeOpportunity {
            seller: AgentId(1),
            buyer: AgentId(2),
            state: c.initial_state(),
        };
        assert!(check_opportunity(&sol, &imm, &bad, 1e-9).is_err());
    }

    #[test]
    fn threshold_grid_validation() {
        let c = cfg(2, 0.9);
        let p = AnyPolicy::Info(TradingPolicy::immediate(&c));
        assert!(find_delta_threshold(&c, &p, &[0.5, 0.4], 1e-9).is_err());
        assert!(find_delta_threshold(&c, &p, &[0.5, 1.0], 1e-9).is_err());
        let r = find_delta_threshold(&c, &p, &[0.2, 0.5, 0.9], 1e-9).unwrap();
        assert!(r.found && r.monotone);
        assert_eq!(r.frontier_discount, Some(0.2));
    }

    #[test]
    fn table_output_mentions_overall() {
        let c = cfg(2, 0.9);
        let r = verify_equilibrium(&c, &TradingPolicy::immediate(&c)).unwrap();
        let t = r.to_table();
        assert!(t.contains("overall: PASS"));
        assert_eq!(t.lines().count(), r.verdicts.len() + 2);
    }
}
