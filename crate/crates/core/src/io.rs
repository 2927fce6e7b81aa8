//! JSON and CSV import/export.
//!
//! Information states are written as hex bit masks (`0x3`), token-market
//! states as `info/tokens` mask pairs (`0x1/0x6`). Links are keyed
//! `seller->buyer`.

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::bargain::{Solution, StateSolution};
use crate::limit::SweepResult;
use crate::model::{AgentId, InfoState, Item, MarketConfig, TradeOpportunity};
use crate::policy::{AnyPolicy, Decision, TokenPolicy, TokenTableKey, TradingPolicy};
use crate::sim::EpisodeResult;
use crate::token::{TokenSolution, TokenState};
use crate::{Error, Result};

pub fn mask_hex(mask: u64) -> String {
    format!("{mask:#x}")
}

pub fn token_state_key(state: TokenState) -> String {
    format!("{:#x}/{:#x}", state.info.mask(), state.tokens)
}

fn link_key(seller: AgentId, buyer: AgentId) -> String {
    format!("{seller}->{buyer}")
}

fn state_json(s: &StateSolution, by_item: bool) -> Value {
    let values: Map<String, Value> = s
        .values
        .iter()
        .enumerate()
        .map(|(a, v)| (a.to_string(), json!(v)))
        .collect();
    let prices: Value = if by_item {
        let mut out = Map::new();
        for item in [Item::Token, Item::Info] {
            let m: Map<String, Value> = s
                .links
                .iter()
                .zip(&s.prices)
                .filter(|(l, _)| l.item == item)
                .map(|(l, p)| (link_key(l.seller, l.buyer), json!(p)))
                .collect();
            if !m.is_empty() {
                out.insert(item.to_string(), Value::Object(m));
            }
        }
        Value::Object(out)
    } else {
        Value::Object(
            s.links
                .iter()
                .zip(&s.prices)
                .map(|(l, p)| (link_key(l.seller, l.buyer), json!(p)))
                .collect(),
        )
    };
    json!({ "prices": prices, "values": values })
}

pub fn solution_to_json(solution: &Solution) -> Value {
    let states: Map<String, Value> = solution
        .iter()
        .map(|(st, s)| (mask_hex(st.mask()), state_json(s, false)))
        .collect();
    json!({ "config": solution.config(), "states": states })
}

fn write_csv<F>(header: &[&str], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let out = (|| {
        w.write_record(header)?;
        fill(&mut w)?;
        w.flush()?;
        Ok::<_, csv::Error>(())
    })();
    out.map_err(|e| Error::Output(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Output(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Output(e.to_string()))
}

/// Columns `state, seller, buyer, price`.
pub fn solution_to_csv(solution: &Solution) -> Result<String> {
    write_csv(&["state", "seller", "buyer", "price"], |w| {
        for (st, s) in solution.iter() {
            for (l, p) in s.links.iter().zip(&s.prices) {
                w.write_record([
                    mask_hex(st.mask()),
                    l.seller.to_string(),
                    l.buyer.to_string(),
                    format!("{p:.17e}"),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn token_solution_to_json(solution: &TokenSolution) -> Value {
    let states: Map<String, Value> = solution
        .states()
        .map(|(st, s)| (token_state_key(*st), state_json(s, true)))
        .collect();
    json!({
        "config": solution.config(),
        "token_supply": solution.policy().supply(),
        "states": states,
    })
}

/// Columns `state, item, seller, buyer, price`.
pub fn token_solution_to_csv(solution: &TokenSolution) -> Result<String> {
    write_csv(&["state", "item", "seller", "buyer", "price"], |w| {
        for (st, s) in solution.states() {
            for (l, p) in s.links.iter().zip(&s.prices) {
                w.write_record([
                    token_state_key(*st),
                    l.item.code().to_string(),
                    l.seller.to_string(),
                    l.buyer.to_string(),
                    format!("{p:.17e}"),
                ])?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MaskDoc {
    Number(u64),
    Text(String),
}

impl MaskDoc {
    fn mask(&self) -> Result<u64> {
        match self {
            MaskDoc::Number(m) => Ok(*m),
            MaskDoc::Text(s) => {
                let t = s.trim();
                let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => t.parse(),
                };
                parsed.map_err(|_| Error::Parse(format!("bad state mask {s:?}")))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ItemDoc {
    Code(u8),
    Name(Item),
}

impl ItemDoc {
    fn item(&self) -> Result<Item> {
        match self {
            ItemDoc::Code(1) => Ok(Item::Token),
            ItemDoc::Code(2) => Ok(Item::Info),
            ItemDoc::Code(c) => Err(Error::Parse(format!("unknown item code {c}"))),
            ItemDoc::Name(i) => Ok(*i),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc {
    seller: usize,
    buyer: usize,
    #[serde(default)]
    item: Option<ItemDoc>,
    state_mask: MaskDoc,
    #[serde(default)]
    token_mask: Option<MaskDoc>,
    decision: Decision,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    #[serde(default)]
    default: Option<Decision>,
    #[serde(default)]
    token_supply: Option<usize>,
    entries: Vec<EntryDoc>,
}

/// Loads a policy table:
///
/// ```json
/// {"default": "no-trade",
///  "entries": [{"seller": 0, "buyer": 1, "state_mask": "0x1", "decision": "trade"}]}
/// ```
///
/// Entries with `item` or `token_mask`, or a `token_supply` field, make it a
/// token-market table. Without `default` every feasible trade must be listed.
pub fn policy_from_table_json(config: &MarketConfig, text: &str) -> Result<AnyPolicy> {
    let doc: TableDoc = serde_json::from_str(text)?;
    let token = doc.token_supply.is_some()
        || doc
            .entries
            .iter()
            .any(|e| e.item.is_some() || e.token_mask.is_some());
    if token {
        let supply = doc
            .token_supply
            .unwrap_or_else(|| config.n_buyers().saturating_sub(1));
        let entries = doc
            .entries
            .iter()
            .map(|e| {
                let info = InfoState::new(config, e.state_mask.mask()?)?;
                let item = e
                    .item
                    .as_ref()
                    .map(ItemDoc::item)
                    .transpose()?
                    .unwrap_or(Item::Info);
                let tokens = e.token_mask.as_ref().map(MaskDoc::mask).transpose()?;
                config.check_agent(AgentId(e.seller))?;
                config.check_agent(AgentId(e.buyer))?;
                Ok((
                    TokenTableKey {
                        seller: AgentId(e.seller),
                        buyer: AgentId(e.buyer),
                        item,
                        info,
                        tokens,
                    },
                    e.decision,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnyPolicy::Token(TokenPolicy::from_table(
            config,
            supply,
            entries,
            doc.default,
        )?))
    } else {
        let entries = doc
            .entries
            .iter()
            .map(|e| {
                let state = InfoState::new(config, e.state_mask.mask()?)?;
                let opp =
                    TradeOpportunity::new(config, AgentId(e.seller), AgentId(e.buyer), state)?;
                Ok((opp, e.decision))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AnyPolicy::Info(TradingPolicy::from_table(
            config,
            entries,
            doc.default,
        )?))
    }
}

/// Long format, columns `delta, quantity, value`; `delta` is the period
/// length.
pub fn sweep_to_csv(sweep: &SweepResult) -> Result<String> {
    write_csv(&["delta", "quantity", "value"], |w| {
        for s in &sweep.series {
            for (h, v) in sweep.schedule.iter().zip(&s.values) {
                w.write_record([format!("{h:.17e}"), s.label.clone(), format!("{v:.17e}")])?;
            }
        }
        Ok(())
    })
}

/// Whitespace-separated columns: period, then one column per quantity.
pub fn sweep_to_dat(sweep: &SweepResult) -> String {
    let mut out = String::from("# delta");
    for s in &sweep.series {
        out.push(' ');
        out.push_str(&s.label);
    }
    out.push('\n');
    for (k, h) in sweep.schedule.iter().enumerate() {
        out.push_str(&format!("{h:.10e}"));
        for s in &sweep.series {
            out.push_str(&format!(" {:.15e}", s.values[k]));
        }
        out.push('\n');
    }
    out
}

/// Columns `episode, period, seller, buyer, item, price`.
pub fn trade_log_csv(episodes: &[EpisodeResult]) -> Result<String> {
    write_csv(
        &["episode", "period", "seller", "buyer", "item", "price"],
        |w| {
            for (k, ep) in episodes.iter().enumerate() {
                for t in &ep.trades {
                    w.write_record([
                        k.to_string(),
                        t.period.to_string(),
                        t.seller.to_string(),
                        t.buyer.to_string(),
                        t.item.code().to_string(),
                        format!("{:.17e}", t.price),
                    ])?;
                }
            }
            Ok(())
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bargain::solve_market;

    fn cfg() -> MarketConfig {
        MarketConfig::from_discount(2, 1, 1.0, 0.5, 0.9).unwrap()
    }

    #[test]
    fn info_table_roundtrip() {
        let c = cfg();
        let text = r#"{"default": "no-trade", "entries": [
            {"seller": 0, "buyer": 1, "state_mask": "0x1", "decision": "trade"},
            {"seller": 0, "buyer": 2, "state_mask": 3, "decision": "trade"},
            {"seller": 1, "buyer": 2, "state_mask": "0x3", "decision": "trade"}]}"#;
        let AnyPolicy::Info(p) = policy_from_table_json(&c, text).unwrap() else {
            panic!("expected an information policy")
        };
        let expected = TradingPolicy::designated_first_buyer(&c, AgentId(1)).unwrap();
        let a = solve_market(&c, &p).unwrap();
        let b = solve_market(&c, &expected).unwrap();
        assert_eq!(a.state(c.initial_state()), b.state(c.initial_state()));
    }

    #[test]
    fn incomplete_and_malformed_tables() {
        let c = cfg();
        let text =
            r#"{"entries": [{"seller": 0, "buyer": 1, "state_mask": "0x1", "decision": "trade"}]}"#;
        assert!(matches!(
            policy_from_table_json(&c, text),
            Err(Error::IncompleteTable { .. })
        ));
        assert!(matches!(
            policy_from_table_json(&c, r#"{"entries": [], "extra": 1}"#),
            Err(Error::Parse(_))
        ));
        let bad_mask = r#"{"default": "trade", "entries": [{"seller": 0, "buyer": 1, "state_mask": "zz", "decision": "trade"}]}"#;
        assert!(policy_from_table_json(&c, bad_mask).is_err());
    }

    #[test]
    fn token_table_detected() {
        let c = cfg();
        let text = r#"{"default": "no-trade", "entries": [
            {"seller": 0, "buyer": 1, "item": "token", "state_mask": "0x1", "token_mask": "0x0", "decision": "trade"}]}"#;
        assert!(matches!(
            policy_from_table_json(&c, text).unwrap(),
            AnyPolicy::Token(_)
        ));
    }

    #[test]
    fn csv_shapes() {
        let c = cfg();
        let sol = solve_market(&c, &TradingPolicy::immediate(&c)).unwrap();
        let text = solution_to_csv(&sol).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("state,seller,buyer,price"));
        // 2 links in {s}, 2 in {s,1}, 2 in {s,2}
        assert_eq!(lines.count(), 6);
        let j = solution_to_json(&sol);
        assert_eq!(j["states"].as_object().unwrap().len(), 4);
        assert!(j["states"]["0x1"]["prices"]["0->1"].is_f64());
    }
}
