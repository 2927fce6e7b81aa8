//! Frequent-offer limit: period sweeps with extrapolation to zero, and the
//! closed forms of the continuous-time three-agent example (one seller, two
//! buyers, each link meeting at Poisson rate `lambda`, discount rate `r`,
//! symmetric bargaining, `v = 1`).
//!
//! The closed forms use their own discounting protocol and are only compared
//! with the discrete solver in the limit.

use serde::Serialize;

use crate::bargain::solve_market;
use crate::exec::Exec;
use crate::model::{AgentId, InfoState, MarketConfig, TradeOpportunity};
use crate::policy::AnyPolicy;
use crate::token::{solve_token_market, TokenOpportunity, TokenState};
use crate::{Error, Result};

/// Parameters of the continuous-time example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticParams {
    pub lambda: f64,
    pub rate: f64,
}

impl AnalyticParams {
    pub fn new(lambda: f64, rate: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!(
                "lambda and rate must be positive, got {lambda} and {rate}"
            )));
        }
        Ok(AnalyticParams { lambda, rate })
    }

    /// The closed forms assume symmetric bargaining and reject anything else.
    pub fn with_weight(lambda: f64, rate: f64, weight: f64) -> Result<Self> {
        if weight != 0.5 {
            return Err(Error::Unsupported(format!(
                "the analytic example is defined for weight 1/2 only, got {weight}"
            )));
        }
        Self::new(lambda, rate)
    }

    /// `lambda / (r + 2 lambda)`: discounted weight that a given one of two
    /// links is recognized next.
    pub fn gamma(&self) -> f64 {
        self.lambda / (self.rate + 2.0 * self.lambda)
    }

    /// `lambda / (r + lambda)`: expected discount until one given link meets.
    pub fn single_link_discount(&self) -> f64 {
        self.lambda / (self.rate + self.lambda)
    }

    /// `r / (r + lambda)`.
    fn delay_cost(&self) -> f64 {
        self.rate / (self.rate + self.lambda)
    }
}

pub fn gamma(params: &AnalyticParams) -> f64 {
    params.gamma()
}

/// Bilateral price without resale: equal gains from trading today.
pub fn no_resale_price(params: &AnalyticParams) -> f64 {
    // p (1 - a) = (1 - p)(1 - a)
    let keep = 1.0 - params.single_link_discount();
    keep / (2.0 * keep)
}

/// Price of the second sale when two agents can sell to the last buyer:
/// `(1 - 2 gamma) / (2 - 3 gamma)`.
pub fn duopoly_price(params: &AnalyticParams) -> f64 {
    let g = params.gamma();
    (1.0 - 2.0 * g) / (2.0 - 3.0 * g)
}

/// `p (1 - gamma) - (1 - p)(1 - 2 gamma)`, zero at the duopoly price.
pub fn duopoly_residual(params: &AnalyticParams, p: f64) -> f64 {
    let g = params.gamma();
    p * (1.0 - g) - (1.0 - p) * (1.0 - 2.0 * g)
}

/// First buyer's gain from buying at `p` under immediate agreement.
pub fn first_buyer_gain(p: f64, params: &AnalyticParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("price {p} outside [0, 1]")));
    }
    let g = params.gamma();
    let p2 = duopoly_price(params);
    let now = 1.0 - p + g * p2;
    Ok(now - g * now - 2.0 * g * g * (1.0 - p2))
}

/// First-sale price when the seller sells first only to a designated buyer.
pub fn optimal_first_sale_price(params: &AnalyticParams) -> f64 {
    // (p + g p2)(1 - a) = (1 - p + g p2)(1 - a)
    let keep = 1.0 - params.single_link_discount();
    let resale = params.gamma() * duopoly_price(params);
    ((1.0 + resale) * keep - resale * keep) / (2.0 * keep)
}

/// Both sides of the condition under which the seller and the
/// non-designated buyer do not trade first: (no-trade surplus, trade surplus).
pub fn no_trade_inequality_sides(params: &AnalyticParams) -> (f64, f64) {
    let a = params.single_link_discount();
    let g = params.gamma();
    let p2 = duopoly_price(params);
    let p_star = optimal_first_sale_price(params);
    let lhs = a * (p_star + g * p2) + a * (2.0 * g * (1.0 - p2));
    let rhs = 1.0 + 2.0 * g * p2;
    (lhs, rhs)
}

/// Token price with one token and two buyers; the defining equation is
/// linear in the price.
pub fn token_price_example(params: &AnalyticParams) -> Result<f64> {
    let a = params.single_link_discount();
    let b = params.delay_cost();
    let g = params.gamma();
    let p2 = duopoly_price(params);
    let p_star = optimal_first_sale_price(params);
    // b (x + a p* + g p2) = (1 - g)(-x + a 2 g (1 - p2)) - g a (1 - p* + g p2)
    let coef = b + 1.0 - g;
    if coef.abs() < 1e-300 {
        return Err(Error::Numerical {
            state: "token example".into(),
            reason: "degenerate coefficient".into(),
        });
    }
    let rhs = (1.0 - g) * a * 2.0 * g * (1.0 - p2)
        - g * a * (1.0 - p_star + g * p2)
        - b * (a * p_star + g * p2);
    Ok(rhs / coef)
}

/// Everything the oracle computes for one parameter pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub params: AnalyticParams,
    pub gamma: f64,
    pub no_resale_price: f64,
    pub duopoly_price: f64,
    pub duopoly_residual: f64,
    pub optimal_first_sale_price: f64,
    pub first_buyer_gain_at_optimal: f64,
    pub no_trade_lhs: f64,
    pub no_trade_rhs: f64,
    pub token_price: f64,
}

pub fn oracle_summary(params: &AnalyticParams) -> Result<OracleSummary> {
    let p2 = duopoly_price(params);
    let p_star = optimal_first_sale_price(params);
    let (lhs, rhs) = no_trade_inequality_sides(params);
    Ok(OracleSummary {
        params: *params,
        gamma: params.gamma(),
        no_resale_price: no_resale_price(params),
        duopoly_price: p2,
        duopoly_residual: duopoly_residual(params, p2),
        optimal_first_sale_price: p_star,
        first_buyer_gain_at_optimal: first_buyer_gain(p_star, params)?,
        no_trade_lhs: lhs,
        no_trade_rhs: rhs,
        token_price: token_price_example(params)?,
    })
}

/// A quantity tracked along a period sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Quantity {
    Price(TradeOpportunity),
    Value { agent: AgentId, state: InfoState },
    TokenPrice(TokenOpportunity),
    TokenValue { agent: AgentId, state: TokenState },
}

impl Quantity {
    pub fn label(&self) -> String {
        match self {
            Quantity::Price(o) => format!("p[{}->{}@{}]", o.seller, o.buyer, o.state),
            Quantity::Value { agent, state } => format!("V[{agent}@{state}]"),
            Quantity::TokenPrice(o) => {
                format!("p[{}-{}->{}@{}]", o.seller, o.item, o.buyer, o.state)
            }
            Quantity::TokenValue { agent, state } => format!("V[{agent}@{state}]"),
        }
    }
}

/// `delta_0 * 2^-k` for `k = 0..count`.
pub fn halving_schedule(first: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| first * 0.5f64.powi(k as i32)).collect()
}

/// Value at `h = 0` of the quadratic through the last three `(h, f)` points.
pub fn richardson_limit(schedule: &[f64], values: &[f64]) -> Result<f64> {
    if schedule.len() != values.len() || schedule.len() < 3 {
        return Err(Error::Domain(
            "extrapolation needs at least three matching points".into(),
        ));
    }
    let k = schedule.len() - 3;
    let h = &schedule[k..];
    let f = &values[k..];
    let mut out = 0.0;
    for a in 0..3 {
        let mut weight = 1.0;
        for b in 0..3 {
            if a != b {
                weight *= h[b] / (h[b] - h[a]);
            }
        }
        out += weight * f[a];
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSeries {
    pub label: String,
    pub quantity: Quantity,
    pub values: Vec<f64>,
    pub limit: f64,
    /// Extrapolant from the three points before the last one.
    pub previous_limit: Option<f64>,
    pub converged: bool,
}

impl SweepSeries {
    /// Values never increase (beyond `tol`) as the period shrinks.
    pub fn is_decreasing(&self, tol: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub schedule: Vec<f64>,
    pub series: Vec<SweepSeries>,
}

impl SweepResult {
    pub fn get(&self, quantity: &Quantity) -> Option<&SweepSeries> {
        self.series.iter().find(|s| s.quantity == *quantity)
    }
}

/// Re-solves the market at every period of a strictly decreasing schedule
/// and extrapolates each tracked quantity to a zero period.
pub fn delta_sweep(
    config: &MarketConfig,
    policy: &AnyPolicy,
    tracked: &[Quantity],
    schedule: &[f64],
) -> Result<SweepResult> {
    delta_sweep_with(config, policy, tracked, schedule, Exec::default())
}

pub fn delta_sweep_with(
    config: &MarketConfig,
    policy: &AnyPolicy,
    tracked: &[Quantity],
    schedule: &[f64],
    exec: Exec,
) -> Result<SweepResult> {
    if schedule.len() < 3 {
        return Err(Error::Domain("a sweep needs at least three periods".into()));
    }
    if schedule.iter().any(|h| h.is_nan() || *h <= 0.0) || schedule.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::Domain(
            "sweep schedule must be positive and strictly decreasing".into(),
        ));
    }
    let rows = exec
        .map(schedule, |&period| {
            sweep_point(config, policy, tracked, period).map_err(|e| Error::AtPeriod {
                period,
                source: Box::new(e),
            })
        })
        .into_iter()
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let tol = 1e-4 * config.value();
    let series = tracked
        .iter()
        .enumerate()
        .map(|(q, quantity)| {
            let values: Vec<f64> = rows.iter().map(|r| r[q]).collect();
            let limit = richardson_limit(schedule, &values)?;
            let previous_limit = if values.len() >= 4 {
                let n = values.len() - 1;
                Some(richardson_limit(&schedule[..n], &values[..n])?)
            } else {
                None
            };
            let converged =
                limit.is_finite() && previous_limit.is_some_and(|p| (p - limit).abs() < tol);
            Ok(SweepSeries {
                label: quantity.label(),
                quantity: *quantity,
                values,
                limit,
                previous_limit,
                converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        schedule: schedule.to_vec(),
        series,
    })
}

fn sweep_point(
    config: &MarketConfig,
    policy: &AnyPolicy,
    tracked: &[Quantity],
    period: f64,
) -> Result<Vec<f64>> {
    let c = config.with_period(period)?;
    match policy {
        AnyPolicy::Info(p) => {
            let sol = solve_market(&c, p)?;
            tracked
                .iter()
                .map(|q| match q {
                    Quantity::Price(o) => sol.price(o),
                    Quantity::Value { agent, state } => {
                        state.validate(&c)?;
                        c.check_agent(*agent)?;
                        Ok(sol.value(*agent, *state))
                    }
                    _ => Err(Error::Domain(format!("{} needs a token policy", q.label()))),
                })
                .collect()
        }
        AnyPolicy::Token(p) => {
            let mut sol = solve_token_market(&c, p)?;
            tracked
                .iter()
                .map(|q| match q {
                    Quantity::TokenPrice(o) => {
                        sol.ensure(o.state)?;
                        sol.price(o)
                    }
                    Quantity::TokenValue { agent, state } => {
                        c.check_agent(*agent)?;
                        sol.ensure(*state)?;
                        Ok(sol.value(*agent, *state).expect("ensured"))
                    }
                    _ => Err(Error::Domain(format!(
                        "{} needs an information-only policy",
                        q.label()
                    ))),
                })
                .collect()
        }
    }
}

/// Prices of every active link in every state, as sweep quantities.
pub fn all_price_quantities(config: &MarketConfig, policy: &AnyPolicy) -> Result<Vec<Quantity>> {
    Ok(match policy {
        AnyPolicy::Info(p) => {
            let sol = solve_market(config, p)?;
            sol.iter()
                .flat_map(|(state, s)| {
                    s.links.iter().map(move |l| {
                        Quantity::Price(TradeOpportunity {
                            seller: l.seller,
                            buyer: l.buyer,
                            state,
                        })
                    })
                })
                .collect()
        }
        AnyPolicy::Token(p) => {
            let sol = solve_token_market(config, p)?;
            sol.states()
                .flat_map(|(state, s)| {
                    let state = *state;
                    s.links.iter().map(move |l| {
                        Quantity::TokenPrice(TokenOpportunity {
                            seller: l.seller,
                            buyer: l.buyer,
                            item: l.item,
                            state,
                        })
                    })
                })
                .collect()
        }
    })
}
