use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use infobargain::io;
use infobargain::limit::{self, AnalyticParams, Quantity};
use infobargain::sim;
use infobargain::token::{solve_token_market, TokenOpportunity};
use infobargain::verify::{find_delta_threshold, verify_any};
use infobargain::{
    solve_market, AgentId, AnyPolicy, Exec, InfoState, Item, MarketConfig, TokenState,
    TradeOpportunity,
};

/// Prices, equilibrium checks, limit sweeps and simulation for markets in a
/// resellable information good.
#[derive(Parser)]
#[command(name = "infobargain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve prices and values in every state.
    Solve(Common),
    /// Check Nash-bargaining consistency of the policy.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Tolerance relative to the value of information.
        #[arg(long, default_value_t = 1e-9)]
        epsilon: f64,
        /// Also scan discounts 0.01..0.99 for the consistency frontier.
        #[arg(long)]
        threshold: bool,
    },
    /// Re-solve along decreasing period lengths and extrapolate to zero.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Period lengths, strictly decreasing (default 0.5 * 2^-k, k = 0..14).
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<f64>,
        /// `all`, `values`, `I->J@MASK` or `I-ITEM->J@INFO/TOKENS`; repeatable.
        #[arg(long, default_value = "all")]
        track: Vec<String>,
    },
    /// Monte Carlo estimate of values from the initial state.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
        /// Number of episodes written to the trade log.
        #[arg(long, default_value_t = 100)]
        log: u64,
    },
    /// Closed forms of the continuous-time three-agent example.
    Oracle {
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long, default_value_t = 0.5)]
        weight: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// `immediate`, `first-buyer:<index>`, `prepay` or `table:<path>`.
    #[arg(long, default_value = "immediate")]
    policy: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug)]
enum Failure {
    Invalid(String),
    Numerical(String),
}

impl From<infobargain::Error> for Failure {
    fn from(e: infobargain::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Invalid(e.to_string())
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    version: &'static str,
    config_path: Option<String>,
    config_sha256: Option<String>,
    policy: Option<String>,
    parameters: Value,
    out: String,
    seed: Option<u64>,
}

struct Loaded {
    config: MarketConfig,
    policy: AnyPolicy,
    exec: Exec,
    manifest: RunManifest,
}

fn load(
    common: &Common,
    command: &'static str,
    parameters: Value,
    seed: Option<u64>,
) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| invalid(format!("{}: {e}", common.config.display())))?;
    let config = MarketConfig::from_json(&text)?;
    let policy = match common.policy.strip_prefix("table:") {
        Some(path) => {
            let table = fs::read_to_string(path).map_err(|e| invalid(format!("{path}: {e}")))?;
            io::policy_from_table_json(&config, &table)?
        }
        None => AnyPolicy::from_name(&config, &common.policy)?,
    };
    Ok(Loaded {
        config,
        policy,
        exec: if common.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        },
        manifest: RunManifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_path: Some(common.config.display().to_string()),
            config_sha256: Some(hex::encode(Sha256::digest(text.as_bytes()))),
            policy: Some(common.policy.clone()),
            parameters,
            out: common.out.display().to_string(),
            seed,
        },
    })
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: Value,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path, manifest: &RunManifest) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
        Ok(Writer {
            dir,
            manifest: serde_json::to_value(manifest).map_err(invalid)?,
        })
    }

    fn put(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn json(&self, name: &str, mut body: Value) -> Result<(), Failure> {
        if let Value::Object(map) = &mut body {
            map.insert("manifest".into(), self.manifest.clone());
        } else {
            body = json!({ "manifest": self.manifest, "result": body });
        }
        let text = serde_json::to_string_pretty(&body).map_err(invalid)?;
        self.put(name, &(text + "\n"))
    }

    /// Text outputs carry the manifest as a leading comment line.
    fn commented(&self, name: &str, body: &str) -> Result<(), Failure> {
        self.put(name, &format!("# manifest {}\n{body}", self.manifest))
    }
}

fn cmd_solve(common: Common) -> Result<ExitCode, Failure> {
    let run = load(&common, "solve", json!({}), None)?;
    let out = Writer::new(&common.out, &run.manifest)?;
    match &run.policy {
        AnyPolicy::Info(p) => {
            let sol = infobargain::solve_market_with(&run.config, p, run.exec)?;
            out.json("solution.json", io::solution_to_json(&sol))?;
            out.commented("prices.csv", &io::solution_to_csv(&sol)?)?;
        }
        AnyPolicy::Token(p) => {
            let sol = solve_token_market(&run.config, p)?;
            let mut body = io::token_solution_to_json(&sol);
            body["levels"] = serde_json::to_value(sol.on_path_levels()).map_err(invalid)?;
            out.json("solution.json", body)?;
            out.commented("prices.csv", &io::token_solution_to_csv(&sol)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(common: Common, epsilon: f64, threshold: bool) -> Result<ExitCode, Failure> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let run = load(
        &common,
        "verify",
        json!({ "epsilon": epsilon, "threshold": threshold }),
        None,
    )?;
    let out = Writer::new(&common.out, &run.manifest)?;
    let report = verify_any(&run.config, &run.policy, epsilon * run.config.value())?;
    print!("{}", report.to_table());
    let mut body = serde_json::to_value(&report).map_err(invalid)?;
    if threshold {
        let grid: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
        let t = find_delta_threshold(
            &run.config,
            &run.policy,
            &grid,
            epsilon * run.config.value(),
        )?;
        println!(
            "frontier discount {:?}, period threshold {:?}, monotone {}",
            t.frontier_discount, t.period_threshold, t.monotone
        );
        body["threshold"] = serde_json::to_value(&t).map_err(invalid)?;
    }
    out.json("report.json", body)?;
    out.commented("report.txt", &report.to_table())?;
    println!("overall: {}", if report.overall { "pass" } else { "fail" });
    Ok(if report.overall {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_track(
    config: &MarketConfig,
    policy: &AnyPolicy,
    spec: &str,
) -> Result<Vec<Quantity>, Failure> {
    let bad = || invalid(format!("cannot parse tracked quantity {spec:?}"));
    let agent = |s: &str| s.trim().parse::<usize>().map(AgentId).map_err(|_| bad());
    let mask = |s: &str| {
        let s = s.trim();
        let hex = s.strip_prefix("0x").ok_or_else(bad)?;
        u64::from_str_radix(hex, 16).map_err(|_| bad())
    };
    match spec {
        "all" => return Ok(limit::all_price_quantities(config, policy)?),
        "values" => {
            return Ok(config
                .agents()
                .map(|agent| match policy {
                    AnyPolicy::Info(_) => Quantity::Value {
                        agent,
                        state: config.initial_state(),
                    },
                    AnyPolicy::Token(_) => Quantity::TokenValue {
                        agent,
                        state: TokenState::initial(config),
                    },
                })
                .collect())
        }
        _ => {}
    }
    let (link, state) = spec.split_once('@').ok_or_else(bad)?;
    let (left, buyer) = link.split_once("->").ok_or_else(bad)?;
    let buyer = agent(buyer)?;
    match left.split_once('-') {
        None => {
            let state = InfoState::new(config, mask(state)?)?;
            Ok(vec![Quantity::Price(TradeOpportunity::new(
                config,
                agent(left)?,
                buyer,
                state,
            )?)])
        }
        Some((seller, item)) => {
            let item = match item {
                "token" => Item::Token,
                "info" => Item::Info,
                _ => return Err(bad()),
            };
            let (info, tokens) = state.split_once('/').ok_or_else(bad)?;
            let state = TokenState {
                info: InfoState::new(config, mask(info)?)?,
                tokens: mask(tokens)?,
            };
            Ok(vec![Quantity::TokenPrice(TokenOpportunity {
                seller: agent(seller)?,
                buyer,
                item,
                state,
            })])
        }
    }
}

fn cmd_sweep(common: Common, deltas: Vec<f64>, track: Vec<String>) -> Result<ExitCode, Failure> {
    let schedule = if deltas.is_empty() {
        limit::halving_schedule(0.5, 15)
    } else {
        deltas
    };
    let run = load(
        &common,
        "sweep",
        json!({ "deltas": schedule, "track": track }),
        None,
    )?;
    let out = Writer::new(&common.out, &run.manifest)?;
    let mut tracked = Vec::new();
    for t in &track {
        tracked.extend(parse_track(&run.config, &run.policy, t)?);
    }
    let result = limit::delta_sweep_with(&run.config, &run.policy, &tracked, &schedule, run.exec)?;
    for s in &result.series {
        println!(
            "{:<32} limit {:>12.6} converged {}",
            s.label, s.limit, s.converged
        );
    }
    let summary: Vec<Value> = result
        .series
        .iter()
        .map(|s| {
            json!({
                "quantity": s.label,
                "limit": s.limit,
                "previous_limit": s.previous_limit,
                "converged": s.converged,
                "values": s.values,
            })
        })
        .collect();
    out.json(
        "sweep.json",
        json!({ "schedule": result.schedule, "series": summary }),
    )?;
    out.commented("sweep.csv", &io::sweep_to_csv(&result)?)?;
    out.commented("sweep.dat", &io::sweep_to_dat(&result))?;
    Ok(ExitCode::SUCCESS)
}

fn simulate_market<M: sim::SolvedMarket>(
    market: &M,
    exact: Vec<f64>,
    seed: u64,
    episodes: u64,
    log: u64,
    exec: Exec,
    out: &Writer,
) -> Result<(), Failure> {
    let start = market.initial();
    let est = sim::estimate_values_with(market, start, episodes, seed, exec)?;
    for (a, (m, s)) in est.mean.iter().zip(&est.std_error).enumerate() {
        println!(
            "agent {a}: estimate {m:.6} +- {s:.6}, solved {:.6}",
            exact[a]
        );
    }
    let mut body = serde_json::to_value(&est).map_err(invalid)?;
    body["solved"] = json!(exact);
    body["max_z"] = json!(est.max_z(&exact));
    out.json("estimates.json", body)?;
    let logged = sim::simulate_log(market, start, log.min(episodes), seed, exec)?;
    out.commented("trades.csv", &io::trade_log_csv(&logged)?)?;
    Ok(())
}

fn cmd_simulate(common: Common, seed: u64, episodes: u64, log: u64) -> Result<ExitCode, Failure> {
    let run = load(
        &common,
        "simulate",
        json!({ "episodes": episodes, "log": log }),
        Some(seed),
    )?;
    let out = Writer::new(&common.out, &run.manifest)?;
    let c = &run.config;
    match &run.policy {
        AnyPolicy::Info(p) => {
            let sol = solve_market(c, p)?;
            let exact = c
                .agents()
                .map(|a| sol.value(a, c.initial_state()))
                .collect();
            simulate_market(&sol, exact, seed, episodes, log, run.exec, &out)?;
        }
        AnyPolicy::Token(p) => {
            let sol = solve_token_market(c, p)?;
            let start = TokenState::initial(c);
            let exact = c
                .agents()
                .map(|a| sol.value(a, start).unwrap_or(0.0))
                .collect();
            simulate_market(&sol, exact, seed, episodes, log, run.exec, &out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(lambda: f64, rate: f64, weight: f64, dir: PathBuf) -> Result<ExitCode, Failure> {
    let params = AnalyticParams::with_weight(lambda, rate, weight)?;
    let summary = limit::oracle_summary(&params)?;
    let manifest = RunManifest {
        command: "oracle",
        version: env!("CARGO_PKG_VERSION"),
        config_path: None,
        config_sha256: None,
        policy: None,
        parameters: json!({ "lambda": lambda, "rate": rate, "weight": weight }),
        out: dir.display().to_string(),
        seed: None,
    };
    let out = Writer::new(&dir, &manifest)?;
    println!("gamma            {:.12}", summary.gamma);
    println!("no-resale price  {:.12}", summary.no_resale_price);
    println!("p(2)             {:.12}", summary.duopoly_price);
    println!("p*               {:.12}", summary.optimal_first_sale_price);
    println!(
        "inequality sides {:.12} {:.12}",
        summary.no_trade_lhs, summary.no_trade_rhs
    );
    println!("token price      {:.12}", summary.token_price);
    out.json(
        "oracle.json",
        serde_json::to_value(&summary).map_err(invalid)?,
    )?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(c) => cmd_solve(c),
        Command::Verify {
            common,
            epsilon,
            threshold,
        } => cmd_verify(common, epsilon, threshold),
        Command::Sweep {
            common,
            deltas,
            track,
        } => cmd_sweep(common, deltas, track),
        Command::Simulate {
            common,
            seed,
            episodes,
            log,
        } => cmd_simulate(common, seed, episodes, log),
        Command::Oracle {
            lambda,
            rate,
            weight,
            out,
        } => cmd_oracle(lambda, rate, weight, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            ExitCode::from(3)
        }
    }
}
